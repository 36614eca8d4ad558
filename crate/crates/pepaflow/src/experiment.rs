//! Sweep execution: runs one analysis engine per UE-population grid point
//! and assembles metric series. Grid points are independent, so with the
//! `parallel` feature they are dispatched to a rayon pool; results are
//! reassembled in grid order either way, keeping output deterministic.

use crate::analysis::ctmc::{build_ctmc, count_reachable, steady_state, DEFAULT_TOL};
use crate::analysis::fluid::{fluid_system, integrate_fluid, FluidOptions};
use crate::analysis::ssa::{simulate_ssa, SsaOptions};
use crate::analysis::AnalysisSolution;
use crate::metrics::{
    procedure_rate, response_time, system_utilization, utilization, MetricSeries, SweepPoint,
};
use crate::netmodels::{instantiate, ArchitectureId, ExperimentConfig, Instantiated};

/// Engine selection for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Exact chain when the reachable space is small enough, fluid otherwise.
    Auto,
    Ctmc,
    Fluid,
    Ssa,
}

impl Engine {
    pub fn parse(s: &str) -> Option<Engine> {
        match s {
            "auto" => Some(Engine::Auto),
            "ctmc" => Some(Engine::Ctmc),
            "fluid" => Some(Engine::Fluid),
            "ssa" => Some(Engine::Ssa),
            _ => None,
        }
    }
}

/// Reachable-state threshold below which `auto` picks the exact engine.
pub const AUTO_CTMC_LIMIT: usize = 100_000;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub engine: Engine,
    pub seed: u64,
    pub replications: u32,
    pub ssa_horizon: f64,
    pub ssa_warmup: f64,
    pub max_states: usize,
    pub steady_tol: f64,
    /// Hard horizon handed to the fluid integrator per point.
    pub fluid_horizon: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            engine: Engine::Fluid,
            seed: 1,
            replications: 20,
            ssa_horizon: 300.0,
            ssa_warmup: 50.0,
            max_states: crate::analysis::ctmc::DEFAULT_MAX_STATES,
            steady_tol: DEFAULT_TOL,
            fluid_horizon: 2000.0,
        }
    }
}

/// Solves one instantiated configuration with the requested engine.
pub fn solve_instance(
    inst: &Instantiated,
    engine: Engine,
    opts: &SweepOptions,
) -> Result<AnalysisSolution, String> {
    let engine = match engine {
        Engine::Auto => {
            if count_reachable(&inst.system, AUTO_CTMC_LIMIT).is_some() {
                Engine::Ctmc
            } else {
                Engine::Fluid
            }
        }
        e => e,
    };
    match engine {
        Engine::Ctmc => {
            let ctmc = build_ctmc(std::sync::Arc::clone(&inst.system), opts.max_states)
                .map_err(|e| e.to_string())?;
            steady_state(&ctmc, opts.steady_tol).map_err(|e| e.to_string())
        }
        Engine::Fluid => {
            let fluid = fluid_system(std::sync::Arc::clone(&inst.system));
            let fopts = FluidOptions {
                horizon: opts.fluid_horizon,
                max_steps: 4_000_000,
                ..FluidOptions::default()
            };
            integrate_fluid(&fluid, &inst.system.initial_f64(), &fopts)
                .map_err(|e| e.to_string())
        }
        Engine::Ssa => Ok(simulate_ssa(
            std::sync::Arc::clone(&inst.system),
            &SsaOptions {
                horizon: opts.ssa_horizon,
                warmup: opts.ssa_warmup,
                seed: opts.seed,
                replications: opts.replications,
            },
        )),
        Engine::Auto => unreachable!(),
    }
}

/// One sweep outcome: the series plus per-point failures (the sweep
/// continues past engine failures; failed points carry their error text).
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub series: MetricSeries,
    pub failures: Vec<(u64, String)>,
}

/// Resolves the response-time target for an architecture: twice the
/// low-load response time of its basic configuration (same rates and
/// thread count as `config`), at the given UE count.
pub fn resolve_target_t(
    id: ArchitectureId,
    config: &ExperimentConfig,
    low_n: u64,
    opts: &SweepOptions,
) -> Result<f64, String> {
    if let Some(t) = config.target_t {
        return Ok(t);
    }
    let mut basic = crate::netmodels::basic_config(id, low_n.max(1));
    basic.rates = config.rates.clone();
    if let Some(nt) = config.counts.get("N_t") {
        basic.counts.insert("N_t".to_string(), *nt);
    }
    let inst = instantiate(id, &basic).map_err(|e| e.to_string())?;
    let sol = solve_instance(&inst, Engine::Fluid, opts)?;
    let t0 = response_time(&sol, &inst.procedure).map_err(|e| e.to_string())?;
    Ok(2.0 * t0)
}

fn point_from_solution(
    inst: &Instantiated,
    sol: &AnalysisSolution,
    n: u64,
    target_t: f64,
) -> SweepPoint {
    let throughput = procedure_rate(sol, &inst.procedure).unwrap_or(0.0);
    let response = response_time(sol, &inst.procedure).ok();
    let utils: Vec<f64> =
        inst.groups.iter().map(|g| utilization(sol, g).unwrap_or(f64::NAN)).collect();
    let sys_util = system_utilization(sol, &inst.groups).unwrap_or(f64::NAN);
    let productivity = response.and_then(|t| {
        crate::metrics::productivity(throughput, sys_util, t, target_t).ok()
    });
    SweepPoint {
        n,
        throughput,
        response_time: response,
        utilizations: utils,
        system_utilization: sys_util,
        productivity,
        settled: sol.diagnostics.settled,
        engine: sol.method.as_str(),
    }
}

type PointResult = (u64, Result<(Instantiated, AnalysisSolution), String>);

fn run_point(
    id: ArchitectureId,
    config: &ExperimentConfig,
    n: u64,
    opts: &SweepOptions,
) -> PointResult {
    let mut cfg = config.clone();
    cfg.n = n;
    let outcome = match instantiate(id, &cfg) {
        Ok(inst) => match solve_instance(&inst, opts.engine, opts) {
            Ok(sol) => Ok((inst, sol)),
            Err(e) => Err(e),
        },
        Err(e) => Err(e.to_string()),
    };
    (n, outcome)
}

/// Runs a sweep over `grid` UE counts, dispatching points to the rayon
/// pool when the `parallel` feature is enabled.
pub fn run_sweep(
    id: ArchitectureId,
    config: &ExperimentConfig,
    grid: &[u64],
    target_t: f64,
    opts: &SweepOptions,
) -> SweepOutcome {
    #[cfg(feature = "parallel")]
    let raw: Vec<PointResult> = {
        use rayon::prelude::*;
        grid.par_iter().map(|&n| run_point(id, config, n, opts)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let raw: Vec<PointResult> = grid.iter().map(|&n| run_point(id, config, n, opts)).collect();

    assemble(id, raw, target_t)
}

/// Sequential twin of [`run_sweep`], kept callable with the parallel
/// feature on so the two paths can be benchmarked against each other.
pub fn run_sweep_sequential(
    id: ArchitectureId,
    config: &ExperimentConfig,
    grid: &[u64],
    target_t: f64,
    opts: &SweepOptions,
) -> SweepOutcome {
    let raw: Vec<PointResult> = grid.iter().map(|&n| run_point(id, config, n, opts)).collect();
    assemble(id, raw, target_t)
}

fn assemble(id: ArchitectureId, raw: Vec<PointResult>, target_t: f64) -> SweepOutcome {
    let mut group_names: Vec<String> = Vec::new();
    if let Some((_, Ok((inst, _)))) = raw.iter().find(|(_, r)| r.is_ok()) {
        group_names = inst.groups.iter().map(|g| g.name.clone()).collect();
    } else if let Ok(inst) = instantiate(id, &ExperimentConfig::new(1)) {
        group_names = inst.groups.iter().map(|g| g.name.clone()).collect();
    }

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (n, outcome) in raw {
        match outcome {
            Ok((inst, sol)) => points.push(point_from_solution(&inst, &sol, n, target_t)),
            Err(e) => failures.push((n, e)),
        }
    }
    points.sort_by_key(|p| p.n);
    failures.sort_by_key(|f| f.0);
    SweepOutcome { series: MetricSeries { group_names, points, target_t }, failures }
}

/// Parses a `start:stop:step` sweep grid.
pub fn parse_grid(spec: &str) -> Result<Vec<u64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid must be start:stop:step, got `{spec}`"));
    }
    let start: u64 = parts[0].parse().map_err(|_| format!("bad grid start `{}`", parts[0]))?;
    let stop: u64 = parts[1].parse().map_err(|_| format!("bad grid stop `{}`", parts[1]))?;
    let step: u64 = parts[2].parse().map_err(|_| format!("bad grid step `{}`", parts[2]))?;
    if step == 0 {
        return Err("grid step must be positive".to_string());
    }
    if stop < start {
        return Err("grid stop must be at least start".to_string());
    }
    Ok((start..=stop).step_by(step as usize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1:7:2").unwrap(), vec![1, 3, 5, 7]);
        assert_eq!(parse_grid("5:5:1").unwrap(), vec![5]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("3:1:1").is_err());
        assert!(parse_grid("1:5:0").is_err());
    }

    #[test]
    fn small_sweep_produces_ordered_points() {
        let cfg = ExperimentConfig::new(1);
        let opts = SweepOptions { engine: Engine::Fluid, ..Default::default() };
        let out = run_sweep(ArchitectureId::ProposedPdu, &cfg, &[4, 1, 2], 0.5, &opts);
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        let ns: Vec<u64> = out.series.points.iter().map(|p| p.n).collect();
        assert_eq!(ns, vec![1, 2, 4]);
        assert_eq!(out.series.group_names, vec!["PSSFP", "CONP", "UPFP"]);
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree() {
        let cfg = ExperimentConfig::new(1);
        let opts = SweepOptions { engine: Engine::Fluid, ..Default::default() };
        let grid = [1, 3, 5];
        let a = run_sweep(ArchitectureId::ProposedPdu, &cfg, &grid, 0.5, &opts);
        let b = run_sweep_sequential(ArchitectureId::ProposedPdu, &cfg, &grid, 0.5, &opts);
        for (pa, pb) in a.series.points.iter().zip(b.series.points.iter()) {
            assert_eq!(pa.n, pb.n);
            assert_eq!(pa.throughput, pb.throughput);
            assert_eq!(pa.utilizations, pb.utilizations);
        }
    }

    #[test]
    fn auto_prefers_exact_for_tiny_instances() {
        let cfg = ExperimentConfig::new(1);
        let inst = instantiate(ArchitectureId::ProposedPdu, &cfg).unwrap();
        let opts = SweepOptions { engine: Engine::Auto, ..Default::default() };
        let sol = solve_instance(&inst, Engine::Auto, &opts).unwrap();
        assert_eq!(sol.method.as_str(), "ctmc");
    }
}
