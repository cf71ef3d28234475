//! Values, update operations, query readings and type selectors shared by
//! every layer of the workbench.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::causality::ReplicaId;

/// An element or register value: an integer or a string.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            Value::Str(_) => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(n) => json!(n),
            Value::Str(s) => json!(s),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

/// A key path into a (possibly nested) map.
pub type KeyPath = Vec<String>;

/// `prefix` is a componentwise prefix of `key` (every key is a prefix of itself).
pub fn is_prefix(prefix: &[String], key: &[String]) -> bool {
    prefix.len() <= key.len() && prefix.iter().zip(key).all(|(a, b)| a == b)
}

/// An update submitted to a replica.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Inc(u64),
    Dec(u64),
    Wr(Value),
    Add(Value),
    Rmv(Value),
    Ins { pos: usize, elem: Value },
    RmvAt(usize),
    Put { key: String, value: Value },
    Upd { key: KeyPath, op: Box<Op> },
    RmvKey(KeyPath),
    Transfer { to: ReplicaId, n: u64 },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Inc(_) => "inc",
            Op::Dec(_) => "dec",
            Op::Wr(_) => "wr",
            Op::Add(_) => "add",
            Op::Rmv(_) => "rmv",
            Op::Ins { .. } => "ins",
            Op::RmvAt(_) => "rmv_at",
            Op::Put { .. } => "put",
            Op::Upd { .. } => "upd",
            Op::RmvKey(_) => "rmv_key",
            Op::Transfer { .. } => "transfer",
        }
    }
}

/// The type embedded at a map leaf, derived from the inner operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafType {
    Counter,
    Register,
    Set,
}

impl LeafType {
    pub fn of(op: &Op) -> Option<LeafType> {
        match op {
            Op::Inc(_) | Op::Dec(_) => Some(LeafType::Counter),
            Op::Wr(_) => Some(LeafType::Register),
            Op::Add(_) | Op::Rmv(_) => Some(LeafType::Set),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            LeafType::Counter => "counter",
            LeafType::Register => "register",
            LeafType::Set => "set",
        }
    }
}

/// A map entry is addressed by its path and embedded type.
pub type LeafKey = (KeyPath, LeafType);

/// Result of a query, in a form comparable across implementations and the
/// oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reading {
    Null,
    Int(i64),
    Scalar(Value),
    Set(BTreeSet<Value>),
    Seq(Vec<Value>),
    Map(BTreeMap<String, Reading>),
}

impl Reading {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Reading::Null => serde_json::Value::Null,
            Reading::Int(n) => json!(n),
            Reading::Scalar(v) => v.to_json(),
            Reading::Set(s) => serde_json::Value::Array(s.iter().map(Value::to_json).collect()),
            Reading::Seq(s) => serde_json::Value::Array(s.iter().map(Value::to_json).collect()),
            Reading::Map(m) => serde_json::Value::Object(
                m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
        }
    }

    /// Builds the nested reading of a map from its present leaves. A node
    /// that is both a leaf and an inner map keeps the leaf under
    /// `name#type`.
    pub fn from_leaves(leaves: BTreeMap<LeafKey, Reading>) -> Reading {
        let mut root = BTreeMap::new();
        let inner: BTreeSet<KeyPath> = leaves
            .keys()
            .flat_map(|(p, _)| (1..p.len()).map(move |i| p[..i].to_vec()))
            .collect();
        let mut per_path: BTreeMap<KeyPath, Vec<LeafType>> = BTreeMap::new();
        for (p, t) in leaves.keys() {
            per_path.entry(p.clone()).or_default().push(*t);
        }
        for ((path, ty), reading) in leaves {
            let Some((last, parents)) = path.split_last() else {
                continue;
            };
            let ambiguous = inner.contains(&path) || per_path[&path].len() > 1;
            let name = if ambiguous {
                format!("{last}#{}", ty.tag())
            } else {
                last.clone()
            };
            let mut node = &mut root;
            for part in parents {
                let entry = node
                    .entry(part.clone())
                    .or_insert_with(|| Reading::Map(BTreeMap::new()));
                node = match entry {
                    Reading::Map(m) => m,
                    _ => unreachable!("inner path collides with a leaf name"),
                };
            }
            node.insert(name, reading);
        }
        Reading::Map(root)
    }
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

/// Concurrency semantics selector for maps of CRDTs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSemantics {
    RecursiveReset,
    RemoveWins,
    UpdateWins,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetSemantics {
    AddWins,
    RemoveWins,
    Lww,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegisterSemantics {
    Mv,
    Lww,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterWriteSemantics {
    WriteWins,
    IncDecMerge,
}

/// Which replicated type (and concurrency semantics) a run exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CrdtKind {
    Counter,
    BoundedCounter,
    Register(RegisterSemantics),
    MaxRegister,
    Set(SetSemantics),
    List,
    Map(MapSemantics),
}

impl CrdtKind {
    pub const ALL: [CrdtKind; 12] = [
        CrdtKind::Counter,
        CrdtKind::BoundedCounter,
        CrdtKind::Register(RegisterSemantics::Mv),
        CrdtKind::Register(RegisterSemantics::Lww),
        CrdtKind::MaxRegister,
        CrdtKind::Set(SetSemantics::AddWins),
        CrdtKind::Set(SetSemantics::RemoveWins),
        CrdtKind::Set(SetSemantics::Lww),
        CrdtKind::List,
        CrdtKind::Map(MapSemantics::RecursiveReset),
        CrdtKind::Map(MapSemantics::RemoveWins),
        CrdtKind::Map(MapSemantics::UpdateWins),
    ];

    pub fn type_name(self) -> &'static str {
        match self {
            CrdtKind::Counter => "counter",
            CrdtKind::BoundedCounter => "bcounter",
            CrdtKind::Register(_) => "register",
            CrdtKind::MaxRegister => "maxreg",
            CrdtKind::Set(_) => "set",
            CrdtKind::List => "list",
            CrdtKind::Map(_) => "map",
        }
    }

    pub fn semantics_name(self) -> &'static str {
        match self {
            CrdtKind::Counter | CrdtKind::BoundedCounter => "plain",
            CrdtKind::Register(RegisterSemantics::Mv) => "mv",
            CrdtKind::Register(RegisterSemantics::Lww) => "lww",
            CrdtKind::MaxRegister => "max",
            CrdtKind::Set(SetSemantics::AddWins) => "add-wins",
            CrdtKind::Set(SetSemantics::RemoveWins) => "remove-wins",
            CrdtKind::Set(SetSemantics::Lww) => "lww",
            CrdtKind::List => "strong",
            CrdtKind::Map(MapSemantics::RecursiveReset) => "recursive-reset",
            CrdtKind::Map(MapSemantics::RemoveWins) => "remove-wins",
            CrdtKind::Map(MapSemantics::UpdateWins) => "update-wins",
        }
    }

    /// Resolves a `(type, semantics)` pair. `semantics` may be omitted for
    /// types with a single semantics.
    pub fn parse(ty: &str, semantics: Option<&str>) -> Result<CrdtKind, String> {
        let kind = match (ty, semantics) {
            ("counter", None | Some("plain")) => CrdtKind::Counter,
            ("bcounter", None | Some("plain")) => CrdtKind::BoundedCounter,
            ("register", Some("mv")) => CrdtKind::Register(RegisterSemantics::Mv),
            ("register", None | Some("lww")) => CrdtKind::Register(RegisterSemantics::Lww),
            ("maxreg", None | Some("max")) => CrdtKind::MaxRegister,
            ("set", None | Some("add-wins")) => CrdtKind::Set(SetSemantics::AddWins),
            ("set", Some("remove-wins")) => CrdtKind::Set(SetSemantics::RemoveWins),
            ("set", Some("lww")) => CrdtKind::Set(SetSemantics::Lww),
            ("list", None | Some("strong")) => CrdtKind::List,
            ("map", Some("recursive-reset")) => CrdtKind::Map(MapSemantics::RecursiveReset),
            ("map", Some("remove-wins")) => CrdtKind::Map(MapSemantics::RemoveWins),
            ("map", None | Some("update-wins")) => CrdtKind::Map(MapSemantics::UpdateWins),
            ("counter" | "bcounter" | "register" | "maxreg" | "set" | "list" | "map", Some(s)) => {
                return Err(format!("unknown semantics {s:?} for type {ty:?}"))
            }
            _ => return Err(format!("unknown crdt type {ty:?}")),
        };
        Ok(kind)
    }

    /// Whether `op` is a well-formed update for this type.
    pub fn accepts(self, op: &Op) -> bool {
        match (self, op) {
            (CrdtKind::Counter, Op::Inc(_) | Op::Dec(_)) => true,
            (CrdtKind::BoundedCounter, Op::Inc(_) | Op::Dec(_) | Op::Transfer { .. }) => true,
            (CrdtKind::Register(_) | CrdtKind::MaxRegister, Op::Wr(_)) => true,
            (CrdtKind::MaxRegister, _) => false,
            (CrdtKind::Set(_), Op::Add(_) | Op::Rmv(_)) => true,
            (CrdtKind::List, Op::Ins { .. } | Op::RmvAt(_)) => true,
            (CrdtKind::Map(_), Op::RmvKey(k)) => !k.is_empty(),
            (CrdtKind::Map(_), Op::Upd { key, op }) => !key.is_empty() && LeafType::of(op).is_some(),
            _ => false,
        }
    }
}

impl fmt::Display for CrdtKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.type_name(), self.semantics_name())
    }
}

impl FromStr for CrdtKind {
    type Err = String;

    /// Parses `type` or `type/semantics`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((t, sem)) => CrdtKind::parse(t, Some(sem)),
            None => CrdtKind::parse(s, None),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct KindRepr {
    #[serde(rename = "type")]
    ty: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    semantics: Option<String>,
}

impl Serialize for CrdtKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KindRepr {
            ty: self.type_name().to_owned(),
            semantics: Some(self.semantics_name().to_owned()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CrdtKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = KindRepr::deserialize(d)?;
        CrdtKind::parse(&repr.ty, repr.semantics.as_deref()).map_err(serde::de::Error::custom)
    }
}

/// How replicas exchange updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncModel {
    State,
    Op,
    Delta,
}

impl SyncModel {
    pub const ALL: [SyncModel; 3] = [SyncModel::State, SyncModel::Op, SyncModel::Delta];
}

impl FromStr for SyncModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state" => Ok(SyncModel::State),
            "op" => Ok(SyncModel::Op),
            "delta" => Ok(SyncModel::Delta),
            _ => Err(format!("unknown sync model {s:?}")),
        }
    }
}

impl fmt::Display for SyncModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyncModel::State => "state",
            SyncModel::Op => "op",
            SyncModel::Delta => "delta",
        })
    }
}
