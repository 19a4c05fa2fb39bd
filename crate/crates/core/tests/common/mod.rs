//! Enumerable random instances and the exact coupled-KL oracle shared by test targets.

use ddm_privacy::dataset::CategoricalDataset;
use ddm_privacy::ddm::{decode_state, exact_forward_distribution, kl_divergence, ExactDenoiser, DEFAULT_STATE_CAP};
use ddm_privacy::schedule::DiffusionSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub v0: CategoricalDataset,
    pub v1: CategoricalDataset,
    pub target: Vec<u32>,
    pub sched: DiffusionSchedule,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2;
    let k = rng.gen_range(2..=3usize);
    let s = rng.gen_range(5..=50usize);
    let steps = rng.gen_range(3..=10usize);
    let sched = if rng.gen_bool(0.5) {
        DiffusionSchedule::linear(steps, k, rng.gen_range(0.1..=1.0)).unwrap()
    } else {
        DiffusionSchedule::sigmoid(steps, k, rng.gen_range(1.0..=6.0)).unwrap()
    };
    // Skew towards category 0 so that both typical and outlying targets occur.
    let p = rng.gen_range(1.0 / k as f64..0.95);
    let draw = |rng: &mut ChaCha8Rng| -> u32 {
        if rng.gen_bool(p) {
            0
        } else {
            rng.gen_range(0..k as u32)
        }
    };
    let target: Vec<u32> = (0..n).map(|_| draw(&mut rng)).collect();
    let mut rows = vec![target.clone()];
    for _ in 0..s {
        rows.push((0..n).map(|_| draw(&mut rng)).collect());
    }
    let v0 = CategoricalDataset::new(n, k, &rows).unwrap();
    let v1 = v0.without_one(&target).unwrap();
    Instance { v0, v1, target, sched }
}

/// `sum_lambda E_{q_lambda(v_t)} sum_i KL(rev_lambda(.|v_t)_i || rev_{1-lambda}(.|v_t)_i)`.
pub fn coupled_conditional_kl(inst: &Instance, t: usize) -> f64 {
    let (n, k) = (inst.v0.num_features(), inst.v0.num_categories());
    let dens = [ExactDenoiser::new(&inst.v0), ExactDenoiser::new(&inst.v1)];
    let fwd = [
        exact_forward_distribution(&inst.v0, t, &inst.sched, DEFAULT_STATE_CAP).unwrap(),
        exact_forward_distribution(&inst.v1, t, &inst.sched, DEFAULT_STATE_CAP).unwrap(),
    ];
    let mut total = 0.0;
    for x in 0..fwd[0].probs.len() {
        let vt = decode_state(x, n, k);
        let rev = [
            dens[0].reverse_step(&vt, t, &inst.sched).unwrap(),
            dens[1].reverse_step(&vt, t, &inst.sched).unwrap(),
        ];
        for lam in 0..2 {
            let w = fwd[lam].probs[x];
            if w == 0.0 {
                continue;
            }
            let kl: f64 = (0..n).map(|i| kl_divergence(&rev[lam][i], &rev[1 - lam][i])).sum();
            total += w * kl;
        }
    }
    total
}

/// Cancellation floor of the enumerated KL between numerically identical conditionals.
pub const KL_FLOOR: f64 = 1e-14;
