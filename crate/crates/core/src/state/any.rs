//! Runtime dispatch over every state-based type.

use serde::{Deserialize, Serialize};

use crate::causality::Dot;
use crate::model::{CrdtKind, Op, Reading, RegisterSemantics, SetSemantics};
use crate::oracle::Resolution;

use super::*;

macro_rules! any_state {
    ($($var:ident($ty:ty)),* $(,)?) => {
        /// A replica state of any supported type.
        #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(tag = "type", content = "state", rename_all = "snake_case")]
        pub enum AnyState {
            $($var($ty)),*
        }

        /// A delta of any supported type.
        #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(tag = "type", content = "delta", rename_all = "snake_case")]
        pub enum AnyDelta {
            $($var(<$ty as DeltaCrdt>::Delta)),*
        }

        impl AnyState {
            pub fn kind(&self) -> CrdtKind {
                match self { $(AnyState::$var(s) => s.kind()),* }
            }

            pub fn update(&mut self, op: &Op, meta: &EventMeta) -> Result<Option<Resolution>, UpdateError> {
                match self { $(AnyState::$var(s) => s.update(op, meta)),* }
            }

            pub fn merge(&mut self, other: &AnyState) -> Result<(), KindMismatch> {
                match (self, other) {
                    $((AnyState::$var(a), AnyState::$var(b)) => {
                        if a.kind() != b.kind() {
                            return Err(KindMismatch);
                        }
                        a.merge(b);
                        Ok(())
                    })*
                    _ => Err(KindMismatch),
                }
            }

            pub fn read(&self) -> Reading {
                match self { $(AnyState::$var(s) => s.read()),* }
            }

            pub fn metadata(&self) -> Metadata {
                match self { $(AnyState::$var(s) => s.metadata()),* }
            }

            pub fn update_delta(&mut self, op: &Op, meta: &EventMeta) -> Result<(Option<Resolution>, AnyDelta), UpdateError> {
                match self {
                    $(AnyState::$var(s) => s.update_delta(op, meta).map(|(r, d)| (r, AnyDelta::$var(d)))),*
                }
            }

            pub fn join_delta(&mut self, delta: &AnyDelta) -> Result<(), KindMismatch> {
                match (self, delta) {
                    $((AnyState::$var(s), AnyDelta::$var(d)) => {
                        s.join_delta(d);
                        Ok(())
                    })*
                    _ => Err(KindMismatch),
                }
            }

            pub fn to_delta(&self) -> AnyDelta {
                match self { $(AnyState::$var(s) => AnyDelta::$var(s.to_delta())),* }
            }
        }

        impl AnyDelta {
            /// Joins `other` into this delta group.
            pub fn join(&mut self, other: &AnyDelta) -> Result<(), KindMismatch> {
                match (self, other) {
                    $((AnyDelta::$var(a), AnyDelta::$var(b)) => {
                        <$ty as DeltaCrdt>::join_deltas(a, b);
                        Ok(())
                    })*
                    _ => Err(KindMismatch),
                }
            }
        }
    };
}

any_state! {
    Counter(PnCounter),
    BoundedCounter(BoundedCounter),
    LwwRegister(LwwRegister),
    MvRegister(MvRegister),
    MaxRegister(MaxRegister),
    AwSet(AwSet),
    RwSet(RwSet),
    LwwSet(LwwSet),
    List(ListState),
    Map(OrMap),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("states of different types cannot be joined")]
pub struct KindMismatch;

impl AnyState {
    pub fn new(kind: CrdtKind) -> AnyState {
        match kind {
            CrdtKind::Counter => AnyState::Counter(PnCounter::new()),
            CrdtKind::BoundedCounter => AnyState::BoundedCounter(BoundedCounter::new()),
            CrdtKind::Register(RegisterSemantics::Lww) => AnyState::LwwRegister(LwwRegister::new()),
            CrdtKind::Register(RegisterSemantics::Mv) => AnyState::MvRegister(MvRegister::new()),
            CrdtKind::MaxRegister => AnyState::MaxRegister(MaxRegister::new()),
            CrdtKind::Set(SetSemantics::AddWins) => AnyState::AwSet(AwSet::new()),
            CrdtKind::Set(SetSemantics::RemoveWins) => AnyState::RwSet(RwSet::new()),
            CrdtKind::Set(SetSemantics::Lww) => AnyState::LwwSet(LwwSet::new()),
            CrdtKind::List => AnyState::List(ListState::new()),
            CrdtKind::Map(sem) => AnyState::Map(OrMap::new(sem)),
        }
    }

    /// Element ids in list order, for list states.
    pub fn list_ids(&self) -> Option<Vec<Dot>> {
        match self {
            AnyState::List(l) => Some(l.ids()),
            _ => None,
        }
    }

    pub fn merged(&self, other: &AnyState) -> Result<AnyState, KindMismatch> {
        let mut out = self.clone();
        out.merge(other)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MapSemantics;

    #[test]
    fn every_kind_has_a_state() {
        for kind in CrdtKind::ALL {
            let s = AnyState::new(kind);
            assert_eq!(s.kind(), kind);
            let json = serde_json::to_string(&s).unwrap();
            let back: AnyState = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn mismatched_merge_is_refused() {
        let mut a = AnyState::new(CrdtKind::Counter);
        assert_eq!(a.merge(&AnyState::new(CrdtKind::List)), Err(KindMismatch));
        let mut m = AnyState::new(CrdtKind::Map(MapSemantics::UpdateWins));
        assert_eq!(
            m.merge(&AnyState::new(CrdtKind::Map(MapSemantics::RemoveWins))),
            Err(KindMismatch)
        );
    }
}
