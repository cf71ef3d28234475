//! The history oracle: update histories and the reference semantics
//! evaluated over them.

mod eval;
mod history;
mod list;
mod map;

pub use eval::{
    eval_bounded_counter, eval_counter, eval_counter_with_write, eval_map_literal, eval_max_register,
    eval_register, eval_set,
};
pub use history::{transitive_reduction, Resolution, ScriptedHistory, UpdateEvent, UpdateHistory};
pub use list::{check_list, ListObservation, ListVerdict};
pub use map::{eval_map_crdt, latest_vertex_cut, MAX_CUT_CANDIDATES};
#[cfg(test)]
pub(crate) use map::cut_over;

use thiserror::Error;

use crate::causality::{Dot, VersionVector};
use crate::model::{CrdtKind, Reading};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("event {0} is already in the history")]
    DuplicateDot(Dot),
    #[error("event {id} has a context {context:?} that is not closed over the history")]
    OpenContext { id: Dot, context: VersionVector },
    #[error("event {0} has a timestamp not above those of its causal past")]
    TimestampOrder(Dot),
    #[error("event {0} is not in the history")]
    UnknownEvent(Dot),
    #[error("event {id} is a {op}, expected {expected}")]
    ForeignOp {
        id: Dot,
        op: &'static str,
        expected: &'static str,
    },
    #[error("event {0} carries a value of the wrong type")]
    TypeMismatch(Dot),
    #[error("list event {0} has a missing or inconsistent resolution")]
    BadResolution(Dot),
    #[error("{0} removes compete for one key; exhaustive cut search is capped at {MAX_CUT_CANDIDATES}")]
    CutSearchTooLarge(usize),
}

/// Evaluates the reference value of `kind` over `h`. Lists have no value
/// oracle and yield `None`; use [`check_list`] instead.
pub fn evaluate(kind: CrdtKind, h: &UpdateHistory) -> Result<Option<Reading>, OracleError> {
    let r = match kind {
        CrdtKind::Counter => eval_counter(h)?,
        CrdtKind::BoundedCounter => eval_bounded_counter(h)?,
        CrdtKind::Register(sem) => eval_register(h, sem)?,
        CrdtKind::MaxRegister => eval_max_register(h)?,
        CrdtKind::Set(sem) => eval_set(h, sem)?,
        CrdtKind::Map(sem) => eval_map_crdt(h, sem)?,
        CrdtKind::List => return Ok(None),
    };
    Ok(Some(r))
}
