//! Event identity and logical time.
//!
//! Every update in the workbench is named by a [`Dot`]: the replica that
//! generated it plus a per-replica sequence number starting at 1. A
//! [`VersionVector`] summarizes a causally closed set of dots by keeping,
//! for each replica, the highest contiguous counter observed. [`Timestamp`]s
//! are Lamport clocks with a replica tiebreak; their order extends
//! happens-before into a total order used for last-writer-wins arbitration.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a replica. Ordered lexicographically.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(String);

impl ReplicaId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ReplicaId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// A globally unique event identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dot {
    pub replica: ReplicaId,
    pub counter: u64,
}

impl Dot {
    pub fn new(replica: impl Into<ReplicaId>, counter: u64) -> Self {
        Self {
            replica: replica.into(),
            counter,
        }
    }
}

impl fmt::Debug for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.replica, self.counter)
    }
}

impl fmt::Display for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Summary of observed dots: `entries[r] = n` means dots `(r,1)..=(r,n)`
/// have been observed. Absent entries read as 0.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionVector {
    entries: BTreeMap<ReplicaId, u64>,
}

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, replica: &ReplicaId) -> u64 {
        self.entries.get(replica).copied().unwrap_or(0)
    }

    pub fn contains(&self, dot: &Dot) -> bool {
        dot.counter <= self.get(&dot.replica)
    }

    /// Records a freshly generated `dot`, which must be the next contiguous
    /// counter for its replica. Debug builds reject duplicates and gaps.
    pub fn record(&mut self, dot: &Dot) {
        let cur = self.get(&dot.replica);
        debug_assert!(
            dot.counter == cur + 1,
            "dot {dot:?} is not fresh: summary already at {cur}"
        );
        self.raise(&dot.replica, dot.counter);
    }

    /// Raises the entry for `replica` to at least `counter`.
    pub fn raise(&mut self, replica: &ReplicaId, counter: u64) {
        if counter > self.get(replica) {
            self.entries.insert(replica.clone(), counter);
        }
    }

    /// Pointwise maximum.
    pub fn merge(&mut self, other: &VersionVector) {
        for (r, &n) in &other.entries {
            self.raise(r, n);
        }
    }

    pub fn merged(&self, other: &VersionVector) -> VersionVector {
        let mut out = self.clone();
        out.merge(other);
        out
    }

    /// `self ≤ other` pointwise.
    pub fn le(&self, other: &VersionVector) -> bool {
        self.entries.iter().all(|(r, &n)| n <= other.get(r))
    }

    pub fn partial_cmp_vv(&self, other: &VersionVector) -> Option<Ordering> {
        match (self.le(other), other.le(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ReplicaId, u64)> {
        self.entries.iter().filter(|(_, &n)| n > 0).map(|(r, &n)| (r, n))
    }

    /// Every dot covered by this summary, in (replica, counter) order.
    pub fn dots(&self) -> impl Iterator<Item = Dot> + '_ {
        self.iter()
            .flat_map(|(r, n)| (1..=n).map(move |c| Dot::new(r.clone(), c)))
    }

    /// Total number of dots summarized.
    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// Number of replicas with a non-zero entry.
    pub fn width(&self) -> usize {
        self.iter().count()
    }
}

impl fmt::Debug for VersionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl<R: Into<ReplicaId>> FromIterator<(R, u64)> for VersionVector {
    fn from_iter<I: IntoIterator<Item = (R, u64)>>(iter: I) -> Self {
        let mut vv = VersionVector::new();
        for (r, n) in iter {
            vv.raise(&r.into(), n);
        }
        vv
    }
}

/// Returns the next dot for `local` given its own summary. The caller is
/// expected to [`VersionVector::record`] it.
pub fn next_dot(local: &ReplicaId, vv: &VersionVector) -> Dot {
    Dot::new(local.clone(), vv.get(local) + 1)
}

/// Pointwise maximum of two summaries.
pub fn vv_merge(a: &VersionVector, b: &VersionVector) -> VersionVector {
    a.merged(b)
}

/// Lamport timestamp with replica tiebreak.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub clock: u64,
    pub replica: ReplicaId,
}

impl Timestamp {
    pub fn new(clock: u64, replica: impl Into<ReplicaId>) -> Self {
        Self {
            clock,
            replica: replica.into(),
        }
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.clock
            .cmp(&other.clock)
            .then_with(|| self.replica.cmp(&other.replica))
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.clock, self.replica)
    }
}

pub fn ts_less(a: &Timestamp, b: &Timestamp) -> bool {
    a < b
}

/// Lamport clock: ticks on local events, max-merges on delivery.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LamportClock {
    time: u64,
}

impl LamportClock {
    pub fn now(&self) -> u64 {
        self.time
    }

    pub fn tick(&mut self, replica: &ReplicaId) -> Timestamp {
        self.time += 1;
        Timestamp::new(self.time, replica.clone())
    }

    pub fn observe(&mut self, ts: &Timestamp) {
        self.time = self.time.max(ts.clock);
    }

    pub fn observe_clock(&mut self, clock: u64) {
        self.time = self.time.max(clock);
    }
}

/// Outcome of comparing two events under happens-before.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HbOrder {
    Before,
    After,
    Concurrent,
    Equal,
}
