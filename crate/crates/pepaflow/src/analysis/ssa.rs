//! Stochastic engine: exact-jump simulation of the population chain.
//!
//! Each replication draws exponential holding times from the total class
//! rate and picks the firing class in proportion to its rate (direct
//! method). Populations are time-averaged and action occurrences counted
//! after a warmup period; across replications the engine reports means and
//! 95% confidence half-widths (Student t).
//!
//! Replication `i` of a run with seed `s` uses the generator
//! `replication_rng(s, i)`, so identical `(model, seed, replications)`
//! inputs produce bitwise-identical output regardless of thread count.

use std::sync::Arc;

use super::{AnalysisSolution, Diagnostics, Method};
use crate::rng::replication_rng;
use crate::semantics::{CompiledSystem, RateEvaluator};

#[derive(Debug, Clone)]
pub struct SsaOptions {
    /// Total simulated time per replication, including warmup.
    pub horizon: f64,
    /// Averages and counts start after this much simulated time.
    pub warmup: f64,
    pub seed: u64,
    pub replications: u32,
}

impl Default for SsaOptions {
    fn default() -> Self {
        SsaOptions { horizon: 300.0, warmup: 50.0, seed: 1, replications: 20 }
    }
}

struct Replication {
    populations: Vec<f64>,
    throughput: Vec<f64>,
}

fn run_replication(sys: &CompiledSystem, opts: &SsaOptions, index: u32) -> Replication {
    let mut rng = replication_rng(opts.seed, index as u64);
    let mut eval = RateEvaluator::new(sys);

    let mut counts: Vec<u32> = sys.initial.counts.clone();
    let mut x: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut t = 0.0f64;
    let measure_span = opts.horizon - opts.warmup;
    let mut pop_integral = vec![0.0f64; sys.dim];
    let mut action_counts = vec![0u64; sys.actions.len()];

    loop {
        let rates = eval.class_rates(&x);
        let total: f64 = rates.iter().sum();
        let dwell_end = if total > 0.0 { t + rng.exp(total) } else { opts.horizon };
        let settle = dwell_end.min(opts.horizon);

        // Credit the dwell interval clipped to the measurement window.
        let lo = t.max(opts.warmup);
        if settle > lo {
            let w = settle - lo;
            for (acc, &xi) in pop_integral.iter_mut().zip(x.iter()) {
                *acc += w * xi;
            }
        }
        if dwell_end >= opts.horizon || total <= 0.0 {
            break;
        }

        // Select the firing class in index order.
        let mut u = rng.next_f64() * total;
        let mut chosen = rates.len() - 1;
        for (ci, &r) in rates.iter().enumerate() {
            if u < r {
                chosen = ci;
                break;
            }
            u -= r;
        }
        let class = &sys.classes[chosen];
        for m in &class.moves {
            counts[m.from] -= 1;
            counts[m.to] += 1;
            x[m.from] = counts[m.from] as f64;
            x[m.to] = counts[m.to] as f64;
        }
        t = dwell_end;
        if t >= opts.warmup {
            action_counts[class.action] += 1;
        }
    }

    Replication {
        populations: pop_integral.iter().map(|v| v / measure_span).collect(),
        throughput: action_counts.iter().map(|&c| c as f64 / measure_span).collect(),
    }
}

/// Two-sided 95% Student-t quantile for `df` degrees of freedom.
fn t_975(df: u32) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[(df - 1) as usize],
        _ => 1.96,
    }
}

fn mean_and_halfwidth(samples: &[Vec<f64>], dim: usize, reps: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= reps as f64;
    }
    let mut hw = vec![0.0; dim];
    if reps > 1 {
        let tq = t_975(reps as u32 - 1);
        for i in 0..dim {
            let var: f64 =
                samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (reps - 1) as f64;
            hw[i] = tq * (var / reps as f64).sqrt();
        }
    }
    (mean, hw)
}

/// Runs `replications` independent trajectories and aggregates them.
/// Output is deterministic in `(model, seed, replications)`.
pub fn simulate_ssa(system: Arc<CompiledSystem>, opts: &SsaOptions) -> AnalysisSolution {
    assert!(opts.horizon > opts.warmup, "horizon must exceed warmup");
    let reps = opts.replications.max(1);

    #[cfg(feature = "parallel")]
    let results: Vec<Replication> = {
        use rayon::prelude::*;
        (0..reps)
            .into_par_iter()
            .map(|i| run_replication(&system, opts, i))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Replication> =
        (0..reps).map(|i| run_replication(&system, opts, i)).collect();

    let pop_samples: Vec<Vec<f64>> = results.iter().map(|r| r.populations.clone()).collect();
    let thr_samples: Vec<Vec<f64>> = results.iter().map(|r| r.throughput.clone()).collect();
    let (populations, pop_hw) = mean_and_halfwidth(&pop_samples, system.dim, reps as usize);
    let (throughput, thr_hw) =
        mean_and_halfwidth(&thr_samples, system.actions.len(), reps as usize);

    AnalysisSolution {
        method: Method::Ssa,
        system,
        populations,
        throughput,
        diagnostics: Diagnostics {
            iterations: reps as u64,
            residual: 0.0,
            settled: true,
            states: 0,
            throughput_half_width: Some(thr_hw),
            population_half_width: Some(pop_hw),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Bindings;
    use crate::parser::{parse_model, SourceModel};
    use crate::semantics::compile;

    fn system_of(text: &str) -> Arc<CompiledSystem> {
        let model = parse_model(&SourceModel::inline(text)).unwrap();
        assert!(crate::ast::validate_model(&model).is_clean());
        Arc::new(compile(&model.bind(&Bindings::default()).unwrap()).unwrap())
    }

    #[test]
    fn deterministic_replay() {
        let sys = system_of("P1 = (a, 1.0).P2;\nP2 = (b, 3.0).P1;\nsystem = P1[3];");
        let opts = SsaOptions { horizon: 80.0, warmup: 10.0, seed: 99, replications: 4 };
        let s1 = simulate_ssa(Arc::clone(&sys), &opts);
        let s2 = simulate_ssa(Arc::clone(&sys), &opts);
        assert_eq!(s1.populations, s2.populations);
        assert_eq!(s1.throughput, s2.throughput);
        assert_eq!(
            s1.diagnostics.throughput_half_width,
            s2.diagnostics.throughput_half_width
        );
    }

    #[test]
    fn two_state_cycle_matches_balance() {
        // pi(P1) = 0.75 from pi1*1 = pi2*3; the estimate must land within
        // three half-widths.
        let sys = system_of("P1 = (a, 1.0).P2;\nP2 = (b, 3.0).P1;\nsystem = P1[1];");
        let opts = SsaOptions { horizon: 600.0, warmup: 50.0, seed: 7, replications: 20 };
        let sol = simulate_ssa(Arc::clone(&sys), &opts);
        let est = sol.expected_population("P1", "P1").unwrap();
        let idx = sys.state_global_index("P1", "P1").unwrap();
        let hw = sol.diagnostics.population_half_width.as_ref().unwrap()[idx];
        assert!(
            (est - 0.75).abs() <= 3.0 * hw.max(1e-6),
            "est {est}, hw {hw}"
        );
    }

    #[test]
    fn conservation_every_event() {
        let sys = system_of(
            "A1 = (a, 1).A2;\nA2 = (b, 2).A1;\nB1 = (a, 3).B2;\nB2 = (d, 4).B1;\n\
             system = A1[5] <a> B1[2];",
        );
        let opts = SsaOptions { horizon: 50.0, warmup: 5.0, seed: 3, replications: 8 };
        let sol = simulate_ssa(Arc::clone(&sys), &opts);
        for (leaf, sum, pop) in sol.group_sums() {
            assert!(
                (sum - pop as f64).abs() < 1e-9 * pop as f64,
                "{leaf}: {sum} vs {pop}"
            );
        }
    }

    #[test]
    fn different_seeds_differ() {
        let sys = system_of("P1 = (a, 1.0).P2;\nP2 = (b, 3.0).P1;\nsystem = P1[2];");
        let a = simulate_ssa(
            Arc::clone(&sys),
            &SsaOptions { horizon: 60.0, warmup: 10.0, seed: 1, replications: 3 },
        );
        let b = simulate_ssa(
            Arc::clone(&sys),
            &SsaOptions { horizon: 60.0, warmup: 10.0, seed: 2, replications: 3 },
        );
        assert_ne!(a.populations, b.populations);
    }
}
