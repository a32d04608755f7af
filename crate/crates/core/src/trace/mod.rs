//! Sequences of monitor operations and their checked execution.
//!
//! A trace runs transactionally: each operation either produces a new state
//! that passes every enabled invariant check, or the trace stops and keeps
//! the last good state.

mod format;

use std::fmt;

use thiserror::Error;

pub use format::{parse_trace, print_trace};

use crate::authority::SubjectId;
use crate::config::AddressSpaceId;
use crate::net::{AddrRange, Name};
use crate::refmon::{CapType, CheckSet, Handle, InvariantViolation, KernelState, MonitorError, TableRef, Via};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MonitorOp {
    Retype { subject: SubjectId, src: Handle, to: CapType, offset: u64, size: u64 },
    DeriveAs { subject: SubjectId, table: Handle },
    AsidRetype { subject: SubjectId, range: Handle, count: u64 },
    Map { subject: SubjectId, table: TableRef, object: Handle, at: AddrRange, via: Via },
    Unmap { subject: SubjectId, mapping: Handle },
    Copy { subject: SubjectId, cap: Handle, to: SubjectId },
    Revoke { subject: SubjectId, cap: Handle },
    Delete { subject: SubjectId, cap: Handle },
    ModifyMapRaw { subject: SubjectId, space: AddressSpaceId, at: AddrRange, dest: Name },
}

impl MonitorOp {
    pub fn subject(&self) -> SubjectId {
        match *self {
            MonitorOp::Retype { subject, .. }
            | MonitorOp::DeriveAs { subject, .. }
            | MonitorOp::AsidRetype { subject, .. }
            | MonitorOp::Map { subject, .. }
            | MonitorOp::Unmap { subject, .. }
            | MonitorOp::Copy { subject, .. }
            | MonitorOp::Revoke { subject, .. }
            | MonitorOp::Delete { subject, .. }
            | MonitorOp::ModifyMapRaw { subject, .. } => subject,
        }
    }

    /// Applies the operation; the handle is that of any capability created.
    pub fn apply(&self, st: &KernelState) -> Result<(KernelState, Option<Handle>), MonitorError> {
        let with = |r: Result<(KernelState, Handle), MonitorError>| r.map(|(s, h)| (s, Some(h)));
        let without = |r: Result<KernelState, MonitorError>| r.map(|s| (s, None));
        match *self {
            MonitorOp::Retype { subject, src, to, offset, size } => {
                with(st.retype(subject, src, to, offset, size))
            }
            MonitorOp::DeriveAs { subject, table } => with(st.derive_address_space(subject, table)),
            MonitorOp::AsidRetype { subject, range, count } => {
                with(st.asid_retype(subject, range, count))
            }
            MonitorOp::Map { subject, table, object, at, via } => {
                with(st.cap_map(subject, table, object, at, via))
            }
            MonitorOp::Unmap { subject, mapping } => without(st.cap_unmap(subject, mapping)),
            MonitorOp::Copy { subject, cap, to } => with(st.cap_copy(subject, cap, to)),
            MonitorOp::Revoke { subject, cap } => without(st.cap_revoke(subject, cap)),
            MonitorOp::Delete { subject, cap } => without(st.cap_delete(subject, cap)),
            MonitorOp::ModifyMapRaw { subject, space, at, dest } => {
                without(st.modify_map_raw(subject, space, at, dest))
            }
        }
    }
}

impl fmt::Display for MonitorOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format::print_op(self))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("{}: {0}", .0.kind())]
    Op(MonitorError),
    #[error("invariant violated: {}", first(.0))]
    Invariant(Vec<InvariantViolation>),
}

fn first(v: &[InvariantViolation]) -> String {
    v.first().map(ToString::to_string).unwrap_or_default()
}

impl StepError {
    pub fn kind(&self) -> &'static str {
        match self {
            StepError::Op(e) => e.kind(),
            StepError::Invariant(v) => v.first().map_or("Invariant", |v| v.kind()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// The initial state already failed a check.
    InvalidInitial(Vec<InvariantViolation>),
    Aborted { step: usize, error: StepError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceResult {
    /// States after each executed step, starting with the initial one.
    /// Empty only when the initial state was invalid.
    pub states: Vec<KernelState>,
    pub outcome: Outcome,
}

impl TraceResult {
    pub fn last(&self) -> Option<&KernelState> {
        self.states.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Correct,
    Incorrect,
}

/// One checked transition.
pub fn step(st: &KernelState, op: &MonitorOp, checks: CheckSet) -> Result<KernelState, StepError> {
    let (next, _) = op.apply(st).map_err(StepError::Op)?;
    let violations = next.check(checks);
    if violations.is_empty() {
        Ok(next)
    } else {
        Err(StepError::Invariant(violations))
    }
}

pub fn run_trace(initial: KernelState, ops: &[MonitorOp], checks: CheckSet) -> TraceResult {
    let violations = initial.check(checks);
    if !violations.is_empty() {
        return TraceResult { states: Vec::new(), outcome: Outcome::InvalidInitial(violations) };
    }
    let mut states = vec![initial];
    for (i, op) in ops.iter().enumerate() {
        match step(states.last().expect("non-empty"), op, checks) {
            Ok(next) => states.push(next),
            Err(error) => return TraceResult { states, outcome: Outcome::Aborted { step: i, error } },
        }
    }
    TraceResult { states, outcome: Outcome::Completed }
}

pub fn classify_trace(result: &TraceResult) -> Classification {
    match result.outcome {
        Outcome::Completed => Classification::Correct,
        _ => Classification::Incorrect,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnumerateError {
    #[error("more than {0} states would be produced")]
    BudgetExceeded(usize),
    #[error("traces longer than {MAX_ENUMERATED_LEN} operations cannot be enumerated")]
    TooLong,
}

pub const MAX_ENUMERATED_LEN: usize = 5;

/// A trace from an exhaustive enumeration: indices into the alphabet plus
/// its result.
#[derive(Debug, Clone)]
pub struct EnumeratedTrace {
    pub ops: Vec<usize>,
    pub result: TraceResult,
}

/// Runs every sequence over `alphabet` of length `0..=max_len`. Prefixes are
/// executed once and shared.
pub fn enumerate_small_traces(
    initial: &KernelState,
    alphabet: &[MonitorOp],
    max_len: usize,
    checks: CheckSet,
    budget: usize,
) -> Result<Vec<EnumeratedTrace>, EnumerateError> {
    if max_len > MAX_ENUMERATED_LEN {
        return Err(EnumerateError::TooLong);
    }
    let root = run_trace(initial.clone(), &[], checks);
    let mut produced = root.states.len();
    let mut out = vec![EnumeratedTrace { ops: Vec::new(), result: root }];
    let mut frontier = vec![0usize];
    for _ in 0..max_len {
        let mut next_frontier = Vec::new();
        for parent in frontier {
            for (i, op) in alphabet.iter().enumerate() {
                let prev = &out[parent];
                let mut ops = prev.ops.clone();
                ops.push(i);
                let result = match &prev.result.outcome {
                    Outcome::Completed => {
                        let last = prev.result.last().expect("completed traces keep states");
                        let mut states = prev.result.states.clone();
                        let outcome = match step(last, op, checks) {
                            Ok(s) => {
                                states.push(s);
                                produced += 1;
                                Outcome::Completed
                            }
                            Err(error) => Outcome::Aborted { step: ops.len() - 1, error },
                        };
                        TraceResult { states, outcome }
                    }
                    // Extending a failed trace changes nothing.
                    _ => prev.result.clone(),
                };
                if produced > budget {
                    return Err(EnumerateError::BudgetExceeded(budget));
                }
                next_frontier.push(out.len());
                out.push(EnumeratedTrace { ops, result });
            }
        }
        frontier = next_frontier;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
