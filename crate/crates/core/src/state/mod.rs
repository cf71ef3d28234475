//! State-based CRDTs: join-semilattice states with inflationary updates.
//!
//! Dots handed to updates come from [`EventMeta`]; the driver derives them
//! from the replica's own version vector, so a type that records every
//! update's dot keeps a summary equal to the replica's causal past.

mod any;
mod bounded;
mod counter;
pub(crate) mod list;
pub(crate) mod map;
mod register;
mod set;

pub use any::{AnyDelta, AnyState, KindMismatch};
pub use bounded::BoundedCounter;
pub use counter::PnCounter;
pub use list::{ListState, PosId};
pub use map::{MapLog, MapRecord, OrMap, RecordBody};
pub use register::{LwwRegister, MaxRegister, MvRegister};
pub use set::{AwSet, AwSetDelta, LwwSet, RwSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::{Dot, ReplicaId, Timestamp};
use crate::model::{CrdtKind, Op, Reading};
use crate::oracle::Resolution;

/// Identity and arbitration data for one update, supplied by the driver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventMeta {
    pub replica: ReplicaId,
    pub dot: Dot,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UpdateError {
    #[error("{op} is not an update of {kind}")]
    InvalidOp { op: &'static str, kind: CrdtKind },
    #[error("insufficient rights: need {need}, have {have}")]
    InsufficientRights { need: u64, have: i64 },
    #[error("position {pos} out of range for length {len}")]
    IndexOutOfRange { pos: usize, len: usize },
    #[error("cannot transfer rights to self")]
    SelfTransfer,
}

/// Metadata footprint of a replica state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub state_bytes: usize,
    pub dots: usize,
    pub tombstones: usize,
    pub vv_width: usize,
}

pub trait StateCrdt: Clone + std::fmt::Debug + Serialize + DeserializeOwned {
    fn kind(&self) -> CrdtKind;

    /// Applies a local update. On error the state is unchanged.
    fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError>;

    /// Joins `other` into `self`.
    fn merge(&mut self, other: &Self);

    fn read(&self) -> Reading;

    /// Dots held in entries and tombstones kept for removed items.
    fn dot_counts(&self) -> (usize, usize) {
        (0, 0)
    }

    fn vv_width(&self) -> usize {
        0
    }

    fn metadata(&self) -> Metadata {
        let (dots, tombstones) = self.dot_counts();
        Metadata {
            state_bytes: serde_json::to_vec(self).map_or(0, |b| b.len()),
            dots,
            tombstones,
            vv_width: self.vv_width(),
        }
    }

    fn merged(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.merge(other);
        out
    }
}

/// Delta-mutator variant: each update also yields a small joinable state.
pub trait DeltaCrdt: StateCrdt {
    type Delta: Clone + std::fmt::Debug + PartialEq + Serialize + DeserializeOwned;

    fn update_delta(
        &mut self,
        op: &Op,
        meta: &EventMeta,
    ) -> Result<(Option<Resolution>, Self::Delta), UpdateError>;

    fn join_delta(&mut self, delta: &Self::Delta);

    /// The whole state as a delta, for first contact.
    fn to_delta(&self) -> Self::Delta;

    /// Joins `b` into the delta group `a`.
    fn join_deltas(a: &mut Self::Delta, b: &Self::Delta);
}

/// Types without a dedicated delta ship their full post-update state.
macro_rules! full_state_delta {
    ($t:ty) => {
        impl $crate::state::DeltaCrdt for $t {
            type Delta = $t;

            fn update_delta(
                &mut self,
                op: &$crate::model::Op,
                meta: &$crate::state::EventMeta,
            ) -> Result<(Option<$crate::oracle::Resolution>, $t), $crate::state::UpdateError> {
                let r = $crate::state::StateCrdt::update(self, op, meta)?;
                Ok((r, self.clone()))
            }

            fn join_delta(&mut self, delta: &$t) {
                $crate::state::StateCrdt::merge(self, delta);
            }

            fn to_delta(&self) -> $t {
                self.clone()
            }

            fn join_deltas(a: &mut $t, b: &$t) {
                $crate::state::StateCrdt::merge(a, b);
            }
        }
    };
}
pub(crate) use full_state_delta;

pub(crate) fn invalid(op: &Op, kind: CrdtKind) -> UpdateError {
    UpdateError::InvalidOp { op: op.name(), kind }
}
