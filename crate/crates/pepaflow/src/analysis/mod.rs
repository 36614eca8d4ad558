//! Solution engines over the shared semantics: exact CTMC steady state,
//! mean-field fluid ODEs, and stochastic simulation. All three produce an
//! [`AnalysisSolution`] exposing expected populations and steady-state
//! action throughputs uniformly.

use std::sync::Arc;

use crate::semantics::CompiledSystem;

pub mod ctmc;
pub mod fluid;
pub mod ssa;

pub(crate) mod linalg;

/// Which engine produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ctmc,
    Fluid,
    Ssa,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ctmc => "ctmc",
            Method::Fluid => "fluid",
            Method::Ssa => "ssa",
        }
    }
}

/// Solver bookkeeping attached to a solution.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub iterations: u64,
    pub residual: f64,
    /// Fluid: drift fell below the steady threshold before the horizon.
    /// CTMC: the solver met its residual tolerance. SSA: always true.
    pub settled: bool,
    /// Reachable state count (CTMC only).
    pub states: usize,
    /// 95% confidence half-widths per action (SSA only).
    pub throughput_half_width: Option<Vec<f64>>,
    /// 95% confidence half-widths per local state (SSA only).
    pub population_half_width: Option<Vec<f64>>,
}

/// Steady-state description: expected population per local state and
/// throughput per action, with per-engine diagnostics.
#[derive(Debug, Clone)]
pub struct AnalysisSolution {
    pub method: Method,
    pub system: Arc<CompiledSystem>,
    /// Expected count per global local-state index.
    pub populations: Vec<f64>,
    /// Steady-state occurrences per unit time, per action id.
    pub throughput: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl AnalysisSolution {
    /// Throughput of the named action; `None` if the action is unknown.
    pub fn action_throughput(&self, action: &str) -> Option<f64> {
        Some(self.throughput[self.system.action_id(action)?])
    }

    /// Expected population of one local state, addressed as
    /// (group leaf constant, state name).
    pub fn expected_population(&self, leaf: &str, state: &str) -> Option<f64> {
        Some(self.populations[self.system.state_global_index(leaf, state)?])
    }

    /// Sum of expected populations across a whole group.
    pub fn group_population(&self, leaf: &str) -> Option<f64> {
        let gi = self.system.group_index(leaf)?;
        let g = &self.system.groups[gi];
        Some(self.populations[g.offset..g.offset + g.states.len()].iter().sum())
    }

    /// Per-group (leaf, expected sum, exact initial population) triples,
    /// for conservation checks.
    pub fn group_sums(&self) -> Vec<(String, f64, u64)> {
        self.system
            .groups
            .iter()
            .map(|g| {
                let sum: f64 =
                    self.populations[g.offset..g.offset + g.states.len()].iter().sum();
                (g.leaf.clone(), sum, g.population)
            })
            .collect()
    }
}

/// Throughput per action at a (real-valued) population state: the sum of
/// class rates grouped by action. Shared by all engines.
pub(crate) fn throughput_at(sys: &CompiledSystem, x: &[f64]) -> Vec<f64> {
    let mut eval = crate::semantics::RateEvaluator::new(sys);
    let rates = eval.class_rates(x);
    let mut out = vec![0.0; sys.actions.len()];
    for (i, class) in sys.classes.iter().enumerate() {
        out[class.action] += rates[i];
    }
    out
}
