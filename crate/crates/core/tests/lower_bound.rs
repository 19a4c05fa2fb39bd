//! Worst-case pair bounds against the exact four-state chain.

use ddm_privacy::ddm::exact_pdp_delta;
use ddm_privacy::lower_bound::{category_mass_bound, exact_gap, full_recursion_bound, simplified_bound};
use ddm_privacy::schedule::DiffusionSchedule;

fn schedules() -> [DiffusionSchedule; 2] {
    [
        DiffusionSchedule::sigmoid(10, 2, 1.0).unwrap(),
        DiffusionSchedule::linear(10, 2, 1.0).unwrap(),
    ]
}

#[test]
fn full_recursion_below_exact_gap() {
    for sched in schedules() {
        for s in [20usize, 100, 500] {
            let full = full_recursion_bound(&sched, s).unwrap();
            let gap = exact_gap(&sched, s, 0).unwrap().gap;
            assert!(full > 0.0 && full <= gap, "{:?} s={s}: {full} vs {gap}", sched.kind());
        }
    }
    for steps in [5usize, 10] {
        let sched = DiffusionSchedule::linear(steps, 2, 1.0).unwrap();
        for s in [20usize, 100, 500] {
            assert!(full_recursion_bound(&sched, s).unwrap() <= exact_gap(&sched, s, 0).unwrap().gap);
        }
    }
}

#[test]
#[ignore = "known to fail: the simplified constants drop the 1/s and C2 factors of the full recursion"]
fn simplified_below_full_recursion() {
    for sched in schedules() {
        for s in [20usize, 100, 500] {
            let lb = simplified_bound(&sched, s).unwrap().delta_lb;
            let full = full_recursion_bound(&sched, s).unwrap();
            assert!(lb <= full, "{:?} s={s}: {lb} > {full}", sched.kind());
        }
    }
}

#[test]
fn sigmoid_pair_violates_small_delta_at_004() {
    let sched = DiffusionSchedule::sigmoid(10, 2, 1.0).unwrap();
    for s in [20usize, 100, 500] {
        let g = exact_gap(&sched, s, 0).unwrap();
        let d = exact_pdp_delta(&g.pi0, &g.pi1, 0.04).unwrap();
        assert!(d >= 1.0 / (6.0 * s as f64), "s={s}: {d}");
    }
}

#[test]
fn simplified_delta_below_exact_for_large_s() {
    for sched in schedules() {
        for s in [500usize, 2000] {
            let b = simplified_bound(&sched, s).unwrap();
            let g = exact_gap(&sched, s, 0).unwrap();
            let exact = exact_pdp_delta(&g.pi0, &g.pi1, b.epsilon).unwrap();
            assert!(b.delta_lb <= exact, "{:?} s={s}: {} > {exact}", sched.kind(), b.delta_lb);
        }
    }
}

#[test]
fn category_mass_bound_holds() {
    for sched in schedules() {
        for s in [20usize, 100, 500] {
            let g = exact_gap(&sched, s, 0).unwrap();
            let bound = category_mass_bound(&sched, s).unwrap();
            assert!(g.pi0.probs[3] <= bound && g.pi1.probs[3] <= bound);
        }
    }
}

#[test]
fn full_recursion_is_order_inverse_s() {
    for sched in schedules() {
        let scaled: Vec<f64> = [100usize, 1000, 10000]
            .iter()
            .map(|&s| s as f64 * full_recursion_bound(&sched, s).unwrap())
            .collect();
        let (lo, hi) = scaled.iter().fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(hi / lo < 1.5, "{scaled:?}");
    }
}

#[test]
fn exact_gap_order_inverse_s_at_moderate_s() {
    let sched = DiffusionSchedule::sigmoid(10, 2, 1.0).unwrap();
    let scaled: Vec<f64> = [20usize, 100, 500]
        .iter()
        .map(|&s| s as f64 * exact_gap(&sched, s, 0).unwrap().gap)
        .collect();
    assert!(scaled.iter().all(|&x| (0.25..0.6).contains(&x)), "{scaled:?}");
}
