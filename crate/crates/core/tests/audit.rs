//! End-to-end behaviour of the per-instance audit on synthetic data.

use ddm_privacy::curation::{curate, mean_overlap};
use ddm_privacy::dataset::{non_majority_point, sample_skewed, NeighborTable};
use ddm_privacy::ddm::{exact_generated_distribution, exact_pdp_delta, DEFAULT_STATE_CAP};
use ddm_privacy::lower_bound::worst_pair;
use ddm_privacy::pdp::{audit, audit_all, per_instance_delta, psi_term, BoundConfig, Mode, PdpReport, RadiusRule};
use ddm_privacy::schedule::DiffusionSchedule;
use ddm_privacy::stats::spearman;

fn main_cfg(eps: f64) -> BoundConfig {
    BoundConfig::new(eps, 1, 0, RadiusRule::main())
}

#[test]
fn worst_pair_bound_dominates_exact_delta() {
    let s = 100;
    let sched = DiffusionSchedule::sigmoid(10, 2, 1.0).unwrap();
    let (v0, v1) = worst_pair(s).unwrap();
    let target = vec![1u32, 1];
    let table = NeighborTable::build(&v0, &target).unwrap();
    let bound = per_instance_delta(&table, &sched, &main_cfg(0.04)).unwrap();
    let p0 = exact_generated_distribution(&v0, 0, &sched, DEFAULT_STATE_CAP).unwrap();
    let p1 = exact_generated_distribution(&v1, 0, &sched, DEFAULT_STATE_CAP).unwrap();
    let exact = exact_pdp_delta(&p0, &p1, 0.04).unwrap();
    assert!(bound.delta >= exact, "bound {} < exact {exact}", bound.delta);
    assert!(bound.delta >= 1.0 / 600.0, "bound {}", bound.delta);
}

#[test]
fn non_majority_point_is_most_exposed() {
    let sched = DiffusionSchedule::linear(20, 5, 1.0).unwrap();
    let target = non_majority_point(5, 5);
    let v0 = sample_skewed(5, 5, 0.7, 1000, 21).unwrap().with_row(&target).unwrap();
    let report = audit_all(&v0, &sched, &main_cfg(1.0)).unwrap();
    let own = report.points.iter().find(|p| p.row == target).unwrap().delta;
    assert!(own >= report.max_delta() * (1.0 - 1e-12), "own {own} max {}", report.max_delta());
}

#[test]
fn delta_ranks_inversely_with_similarity() {
    let sched = DiffusionSchedule::linear(20, 5, 1.0).unwrap();
    let d = sample_skewed(5, 5, 0.7, 1000, 4).unwrap();
    let report = audit_all(&d, &sched, &main_cfg(1.0)).unwrap();
    let t = 10;
    let sims: Vec<f64> = report.points.iter().map(|p| p.trace[t - 1].similarity).collect();
    let deltas: Vec<f64> = report.points.iter().map(|p| p.delta).collect();
    let rho = spearman(&deltas, &sims);
    assert!(rho < -0.8, "spearman {rho}");
}

#[test]
fn noisy_step_scales_inverse_square() {
    let sched = DiffusionSchedule::linear(20, 5, 1.0).unwrap();
    let t = 19;
    assert!(sched.r_bar(t) - 1.0 < 1e-3);
    let target = non_majority_point(5, 5);
    let term = |s: usize| {
        let v0 = sample_skewed(5, 5, 0.5, s, 9).unwrap().with_row(&target).unwrap();
        let table = NeighborTable::build(&v0, &target).unwrap();
        psi_term(&table, t, &sched, Mode::Main).unwrap().value
    };
    let ratio = term(1000) / term(10_000);
    assert!((80.0..=125.0).contains(&ratio), "ratio {ratio}");
}

fn skewed_trace() -> (DiffusionSchedule, PdpReport) {
    let sched = DiffusionSchedule::linear(20, 5, 1.0).unwrap();
    let target = non_majority_point(5, 5);
    let v0 = sample_skewed(5, 5, 0.5, 1000, 13).unwrap().with_row(&target).unwrap();
    let report = audit(&v0, &sched, &main_cfg(1.0), Some(&[target])).unwrap();
    (sched, report)
}

#[test]
fn effective_radius_shrinks_towards_clean_data() {
    let (sched, report) = skewed_trace();
    let trace = &report.points[0].trace;
    for w in trace.windows(2) {
        assert!(w[0].radius <= w[1].radius, "t={}: {} > {}", w[0].t, w[0].radius, w[1].radius);
    }
    for e in trace {
        if (sched.r_bar(e.t) - 1.0).abs() < 1e-6 {
            assert_eq!(e.radius, 5, "t={}", e.t);
        }
    }
    assert_eq!(trace[19].eta, 5);
}

#[test]
fn eta_reaches_grid_minimum_when_nearly_noise_free() {
    let sched = DiffusionSchedule::linear(1000, 5, 1.0).unwrap();
    let majority = vec![0u32; 5];
    let v0 = sample_skewed(5, 5, 0.9, 1000, 13).unwrap().with_row(&majority).unwrap();
    let table = NeighborTable::build(&v0, &majority).unwrap();
    let b = per_instance_delta(&table, &sched, &main_cfg(1.0)).unwrap();
    assert_eq!(b.trace[0].eta, 1, "{:?}", b.trace[0]);
    assert_eq!(b.trace[0].radius, 1);
    assert_eq!(b.trace.last().unwrap().main_term, 0.0);
}

#[test]
fn relaxed_terms_never_exceed_main_terms() {
    let sched = DiffusionSchedule::linear(20, 5, 1.0).unwrap();
    let d = sample_skewed(5, 5, 0.5, 3000, 17).unwrap();
    let main = audit_all(&d, &sched, &main_cfg(1.0)).unwrap();
    let relaxed = audit_all(&d, &sched, &BoundConfig::new(1.0, 1, 0, RadiusRule::relaxed())).unwrap();
    let by_row: std::collections::HashMap<&[u32], _> = relaxed.points.iter().map(|p| (p.row.as_slice(), p)).collect();
    assert_eq!(by_row.len(), main.points.len());
    for a in &main.points {
        let b = by_row[a.row.as_slice()];
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert!(y.main_term <= x.main_term, "row {:?} t={}", a.row, x.t);
            assert!(y.radius <= x.radius, "row {:?} t={}", a.row, x.t);
        }
    }
}

#[test]
fn delta_non_increasing_in_release_step() {
    let sched = DiffusionSchedule::sigmoid(10, 3, 5.0).unwrap();
    let d = sample_skewed(4, 3, 0.6, 300, 2).unwrap();
    let target = d.row(0).to_vec();
    let table = NeighborTable::build(&d, &target).unwrap();
    let mut prev = f64::INFINITY;
    for t_rl in 0..10 {
        let cfg = BoundConfig::new(1.0, 1, t_rl, RadiusRule::main());
        let delta = per_instance_delta(&table, &sched, &cfg).unwrap().delta;
        assert!(delta <= prev);
        prev = delta;
    }
}

#[test]
fn audit_is_thread_count_independent() {
    let sched = DiffusionSchedule::linear(20, 5, 1.0).unwrap();
    let d = sample_skewed(5, 5, 0.6, 2000, 8).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&audit_all(&d, &sched, &main_cfg(1.0)).unwrap()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
}

#[test]
fn curation_lowers_max_delta_and_removes_outliers() {
    let sched = DiffusionSchedule::linear(20, 5, 1.0).unwrap();
    let d = sample_skewed(5, 5, 0.7, 1000, 31).unwrap();
    let (log, _) = curate(&d, &sched, &main_cfg(1.0), &[0.01, 0.02, 0.03, 0.04, 0.05]).unwrap();
    for w in log.rounds.windows(2).take(3) {
        assert!(w[1].max_delta <= w[0].max_delta, "{} > {}", w[1].max_delta, w[0].max_delta);
    }
    let mut overlaps: Vec<f64> = d.rows().map(|r| mean_overlap(&d, r)).collect();
    overlaps.sort_by(f64::total_cmp);
    let median = overlaps[overlaps.len() / 2];
    for (row, _) in &log.rounds[1].removed {
        assert!(mean_overlap(&d, row) < median, "row {row:?}");
    }
}
