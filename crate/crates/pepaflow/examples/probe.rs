use std::time::Instant;

use pepaflow::experiment::{
    resolve_target_t, run_sweep, Engine, SweepOptions,
};
use pepaflow::metrics::{series_saturation, Saturation};
use pepaflow::netmodels::{basic_config, scaled_config, ArchitectureId};

fn sat(s: &Saturation) -> String {
    match s {
        Saturation::Reached { n, .. } => format!("{n}"),
        Saturation::NotReached { .. } => "not reached".to_string(),
    }
}

fn main() {
    let opts = SweepOptions { engine: Engine::Fluid, ..Default::default() };

    println!("== PDU: grid 2:120:2 ==");
    let grid: Vec<u64> = (2..=120).step_by(2).collect();
    let t0 = Instant::now();
    for id in [ArchitectureId::ProposedPdu, ArchitectureId::FivegPdu] {
        let tt = resolve_target_t(id, &basic_config(id, 2), 2, &opts).unwrap();
        let b = run_sweep(id, &basic_config(id, 1), &grid, tt, &opts);
        let s = run_sweep(id, &scaled_config(id, 1), &grid, tt, &opts);
        assert!(b.failures.is_empty() && s.failures.is_empty());
        let nb = series_saturation(&b.series).unwrap();
        let ns = series_saturation(&s.series).unwrap();
        let last_b = b.series.points.last().unwrap();
        let max_u = last_b.utilizations.iter().cloned().fold(0.0f64, f64::max);
        let min_u = last_b.utilizations.iter().cloned().fold(1.0f64, f64::min);
        println!(
            "{:>14}: target_T={tt:.4} n*_basic={} n*_scaled={} last_util(max={max_u:.4}, min={min_u:.4}) mono_b={}",
            id.as_str(),
            sat(&nb),
            sat(&ns),
            b.series
                .points
                .windows(2)
                .all(|w| w[1].throughput >= w[0].throughput - 1e-9)
        );
    }
    println!("pdu sweeps took {:.1}s", t0.elapsed().as_secs_f64());

    println!("== Mobility: grid 15:600:15 ==");
    let grid: Vec<u64> = (15..=600).step_by(15).collect();
    let t0 = Instant::now();
    let mut s_curves: Vec<(ArchitectureId, Vec<(u64, Option<f64>, Option<f64>)>)> = Vec::new();
    let mut knees = Vec::new();
    for id in [ArchitectureId::ProposedMobility, ArchitectureId::FivegMobility] {
        let tt = resolve_target_t(id, &basic_config(id, 15), 15, &opts).unwrap();
        let b = run_sweep(id, &basic_config(id, 1), &grid, tt, &opts);
        let s = run_sweep(id, &scaled_config(id, 1), &grid, tt, &opts);
        assert!(b.failures.is_empty() && s.failures.is_empty(), "{:?} {:?}", b.failures, s.failures);
        let nb = series_saturation(&b.series).unwrap();
        let ns = series_saturation(&s.series).unwrap();
        println!(
            "{:>17}: target_T={tt:.4} n*_basic={} n*_scaled={}",
            id.as_str(),
            sat(&nb),
            sat(&ns)
        );
        knees.push((id, nb.reached_at(), ns.reached_at()));
        let curve: Vec<(u64, Option<f64>, Option<f64>)> = b
            .series
            .points
            .iter()
            .zip(s.series.points.iter())
            .map(|(pb, ps)| {
                let s_val = match (pb.productivity, ps.productivity) {
                    (Some(cb), Some(cs)) if cb > 0.0 => Some(cs / cb),
                    _ => None,
                };
                (pb.n, s_val, Some(pb.throughput))
            })
            .collect();
        s_curves.push((id, curve));
    }
    println!("mobility sweeps took {:.1}s", t0.elapsed().as_secs_f64());

    // Scalability comparison past all four knees.
    let all_knee = knees
        .iter()
        .flat_map(|(_, b, s)| [b.unwrap_or(0), s.unwrap_or(0)])
        .max()
        .unwrap();
    println!("max knee = {all_knee}");
    let (pid, pcurve) = &s_curves[0];
    let (fid, fcurve) = &s_curves[1];
    assert_eq!(*pid, ArchitectureId::ProposedMobility);
    assert_eq!(*fid, ArchitectureId::FivegMobility);
    for ((n, sp, _), (_, sf, _)) in pcurve.iter().zip(fcurve.iter()) {
        if *n > all_knee {
            println!(
                "  n={n}: S_p={:.4} S_f={:.4} {}",
                sp.unwrap_or(f64::NAN),
                sf.unwrap_or(f64::NAN),
                if sp.unwrap_or(0.0) >= sf.unwrap_or(f64::INFINITY) { "OK" } else { "VIOLATION" }
            );
        }
    }
    // S > 1 beyond each basic knee.
    for (id, curve) in &s_curves {
        let knee = knees.iter().find(|(k, _, _)| k == id).unwrap().1.unwrap_or(0);
        let bad: Vec<u64> = curve
            .iter()
            .filter(|(n, s, _)| *n > knee && s.map(|v| v <= 1.0).unwrap_or(true))
            .map(|(n, _, _)| *n)
            .collect();
        println!("{:>17}: S>1 beyond n*={knee}: violations at {bad:?}", id.as_str());
    }
}
