//! DC and AC power flow.
//!
//! Both solvers precompute a model from an immutable [`NetworkCase`] so the
//! hot loops in dataset generation and physics-informed training only pay for
//! the solve itself.

mod ac;
mod dc;

use thiserror::Error;

pub use ac::{
    branch_apparent_flows, solve_acpf, AcModel, AcSetpoints, AcpfOptions, AcpfSolution, Loads,
};
pub use dc::{solve_dcpf, DcModel, DcpfSolution};

use crate::case::NetworkCase;

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("network is islanded or the reduced system is singular")]
    SingularSystem,
    #[error("slack bus has no in-service generator")]
    NoSlackGenerator,
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("tolerance must be positive")]
    InvalidTolerance,
}

pub(crate) fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), PowerFlowError> {
    if v.len() != expected {
        return Err(PowerFlowError::DimensionMismatch {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// True when every bus is reachable from the slack through in-service branches.
pub(crate) fn is_connected(case: &NetworkCase) -> bool {
    let n = case.n_bus();
    let mut adj = vec![Vec::new(); n];
    for (_, br) in case.in_service_branches() {
        let f = case.bus_idx(br.from_bus).unwrap();
        let t = case.bus_idx(br.to_bus).unwrap();
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![case.slack_bus()];
    seen[case.slack_bus()] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
