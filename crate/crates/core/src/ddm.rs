//! The discrete diffusion model with an exact (perfectly trained) denoiser.
//!
//! Forward corruption uses the uniform kernel. The reverse step combines the
//! closed-form posterior `q(v_{t-1} | v_t, v_0)` with the empirical Bayes posterior
//! over clean rows, independently per column. States of `X^n` are encoded in mixed
//! radix `k` with column 0 most significant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{hamming_unchecked, CategoricalDataset, DistinctRows};
use crate::error::{input, Error, Result};
use crate::schedule::DiffusionSchedule;

/// Default cap on enumerated state-space size.
pub const DEFAULT_STATE_CAP: usize = 4096;

fn check_step(t: usize, sched: &DiffusionSchedule) -> Result<()> {
    if t == 0 || t > sched.steps() {
        return input(format!("step {t} is outside 1..={}", sched.steps()));
    }
    Ok(())
}

/// `q(v_t^i | v_0^i)`: `mu_bar_plus_t` when equal, else `mu_bar_minus_t`.
pub fn forward_marginal_prob(v0: u32, vt: u32, t: usize, sched: &DiffusionSchedule) -> Result<f64> {
    check_step(t, sched)?;
    Ok(if v0 == vt {
        sched.mu_bar_plus(t)
    } else {
        sched.mu_bar_minus(t)
    })
}

/// The five values taken by `q(v_{t-1}^i | v_t^i, v_0^i)` at a fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCase {
    /// `v_0 = v_t = v_{t-1}`.
    pub same: f64,
    /// `v_0 = v_t != v_{t-1}`.
    pub leave_clean: f64,
    /// `v_0 != v_t = v_{t-1}`.
    pub stay_noisy: f64,
    /// `v_{t-1} = v_0 != v_t`.
    pub return_clean: f64,
    /// All three differ.
    pub all_differ: f64,
}

impl PosteriorCase {
    pub fn at(t: usize, sched: &DiffusionSchedule) -> Result<Self> {
        check_step(t, sched)?;
        let (mp, mm) = (sched.mu_plus(t), sched.mu_minus(t));
        let (bp_prev, bm_prev) = (sched.mu_bar_plus(t - 1), sched.mu_bar_minus(t - 1));
        let (bp, bm) = (sched.mu_bar_plus(t), sched.mu_bar_minus(t));
        Ok(Self {
            same: mp * bp_prev / bp,
            leave_clean: mm * bm_prev / bp,
            stay_noisy: mp * bm_prev / bm,
            return_clean: mm * bp_prev / bm,
            all_differ: mm * bm_prev / bm,
        })
    }

    /// Probability of `prev` given the noisy value `vt` and clean value `v0`.
    #[inline]
    pub fn prob(&self, prev: u32, vt: u32, v0: u32) -> f64 {
        match (v0 == vt, prev == vt, prev == v0) {
            (true, true, _) => self.same,
            (true, false, _) => self.leave_clean,
            (false, true, _) => self.stay_noisy,
            (false, false, true) => self.return_clean,
            (false, false, false) => self.all_differ,
        }
    }
}

/// `q(v_{t-1}^i = . | v_t^i, v_0^i)` as a distribution over `0..k`.
pub fn posterior(vt: u32, v0: u32, t: usize, sched: &DiffusionSchedule) -> Result<Vec<f64>> {
    let case = PosteriorCase::at(t, sched)?;
    Ok((0..sched.k() as u32).map(|a| case.prob(a, vt, v0)).collect())
}

/// Exact denoiser for one dataset: the reverse process of a perfectly trained model.
#[derive(Debug, Clone)]
pub struct ExactDenoiser {
    rows: DistinctRows,
    n: usize,
    k: usize,
}

impl ExactDenoiser {
    pub fn new(d: &CategoricalDataset) -> Self {
        Self {
            rows: d.distinct(),
            n: d.num_features(),
            k: d.num_categories(),
        }
    }

    pub fn num_features(&self) -> usize {
        self.n
    }

    pub fn num_categories(&self) -> usize {
        self.k
    }

    /// `P(v_0^i = l | v_t)` for every column `i`, as `n` rows of length `k`.
    pub fn denoise(&self, vt: &[u32], t: usize, sched: &DiffusionSchedule) -> Result<Vec<Vec<f64>>> {
        check_step(t, sched)?;
        if vt.len() != self.n {
            return input("noisy row has the wrong length");
        }
        let ln_r = sched.ln_r_bar(t);
        let dists: Vec<usize> = (0..self.rows.len())
            .map(|j| hamming_unchecked(self.rows.row(j), vt))
            .collect();
        let dmin = *dists.iter().min().expect("non-empty dataset");
        let mut out = vec![vec![0.0; self.k]; self.n];
        let mut total = 0.0;
        for (j, &d) in dists.iter().enumerate() {
            let w = self.rows.count(j) as f64 * (-((d - dmin) as f64) * ln_r).exp();
            total += w;
            for (i, &x) in self.rows.row(j).iter().enumerate() {
                out[i][x as usize] += w;
            }
        }
        out.iter_mut().flatten().for_each(|x| *x /= total);
        Ok(out)
    }

    /// Per-column reverse-step distributions `P(v_{t-1}^i | v_t)`.
    pub fn reverse_step(&self, vt: &[u32], t: usize, sched: &DiffusionSchedule) -> Result<Vec<Vec<f64>>> {
        let den = self.denoise(vt, t, sched)?;
        let case = PosteriorCase::at(t, sched)?;
        Ok(den
            .iter()
            .zip(vt)
            .map(|(col, &x)| {
                (0..self.k as u32)
                    .map(|a| {
                        col.iter()
                            .enumerate()
                            .map(|(l, &pl)| pl * case.prob(a, x, l as u32))
                            .sum()
                    })
                    .collect()
            })
            .collect())
    }
}

/// `P(v_0^i = . | v_t)` under the empirical Bayes posterior of `d`.
pub fn empirical_denoiser(
    d: &CategoricalDataset,
    vt: &[u32],
    t: usize,
    i: usize,
    sched: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    if i >= d.num_features() {
        return input(format!("column {i} out of range"));
    }
    Ok(ExactDenoiser::new(d).denoise(vt, t, sched)?.swap_remove(i))
}

/// Product-form reverse-step distribution `P(v_{t-1} | v_t)`, one row per column.
pub fn reverse_step(
    d: &CategoricalDataset,
    vt: &[u32],
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Vec<Vec<f64>>> {
    ExactDenoiser::new(d).reverse_step(vt, t, sched)
}

fn check_release(t_rl: usize, sched: &DiffusionSchedule) -> Result<()> {
    if t_rl > sched.steps() {
        return input(format!("release step {t_rl} exceeds T = {}", sched.steps()));
    }
    Ok(())
}

fn sample_categorical(p: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i as u32;
        }
    }
    (p.len() - 1) as u32
}

/// Draws `m` samples at step `t_rl`, starting from the uniform prior at `T`.
///
/// Sample `j` uses its own ChaCha stream derived from `(seed, j)`, so the output does
/// not depend on the number of worker threads.
pub fn generate(
    d: &CategoricalDataset,
    m: usize,
    t_rl: usize,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    check_release(t_rl, sched)?;
    if sched.k() != d.num_categories() {
        return input("schedule and dataset disagree on k");
    }
    let den = ExactDenoiser::new(d);
    let (n, k) = (d.num_features(), d.num_categories() as u32);
    (0..m)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let mut v: Vec<u32> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            for t in (t_rl + 1..=sched.steps()).rev() {
                let probs = den.reverse_step(&v, t, sched)?;
                for (x, p) in v.iter_mut().zip(&probs) {
                    *x = sample_categorical(p, &mut rng);
                }
            }
            Ok(v)
        })
        .collect()
}

/// Number of states `k^n`, or an error past `cap`.
pub fn state_count(n: usize, k: usize, cap: usize) -> Result<usize> {
    let states = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if states > cap as u128 {
        return Err(Error::StateSpace { states, cap });
    }
    Ok(states as usize)
}

/// Mixed-radix index of `row`, column 0 most significant.
pub fn encode_state(row: &[u32], k: usize) -> usize {
    row.iter().fold(0, |acc, &x| acc * k + x as usize)
}

/// Inverse of [`encode_state`].
pub fn decode_state(mut idx: usize, n: usize, k: usize) -> Vec<u32> {
    let mut row = vec![0; n];
    for x in row.iter_mut().rev() {
        *x = (idx % k) as u32;
        idx /= k;
    }
    row
}

/// Full distribution over `X^n` at some step; only built for small state spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactChainDistribution {
    pub step: usize,
    pub n: usize,
    pub k: usize,
    pub dataset: String,
    /// Probability of each state, indexed by [`encode_state`].
    pub probs: Vec<f64>,
}

impl ExactChainDistribution {
    pub fn prob_of(&self, row: &[u32]) -> f64 {
        self.probs[encode_state(row, self.k)]
    }
}

/// Expands per-column distributions into the joint product over all states.
fn product_distribution(cols: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut joint = vec![1.0];
    for col in cols {
        let mut next = Vec::with_capacity(joint.len() * k);
        for &p in &joint {
            next.extend(col.iter().map(|&q| p * q));
        }
        joint = next;
    }
    joint
}

/// One-step transition matrix of the reverse chain at step `t`; row `x` is `P(. | x)`.
pub fn transition_matrix(
    d: &CategoricalDataset,
    t: usize,
    sched: &DiffusionSchedule,
    cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let (n, k) = (d.num_features(), d.num_categories());
    let states = state_count(n, k, cap)?;
    let den = ExactDenoiser::new(d);
    (0..states)
        .into_par_iter()
        .map(|x| Ok(product_distribution(&den.reverse_step(&decode_state(x, n, k), t, sched)?, k)))
        .collect()
}

/// Exact law of a generated sample at step `t_rl`.
pub fn exact_generated_distribution(
    d: &CategoricalDataset,
    t_rl: usize,
    sched: &DiffusionSchedule,
    cap: usize,
) -> Result<ExactChainDistribution> {
    check_release(t_rl, sched)?;
    let (n, k) = (d.num_features(), d.num_categories());
    let states = state_count(n, k, cap)?;
    let mut pi = vec![1.0 / states as f64; states];
    for t in (t_rl + 1..=sched.steps()).rev() {
        let rows = transition_matrix(d, t, sched, cap)?;
        let mut next = vec![0.0; states];
        for (p, row) in pi.iter().zip(&rows) {
            for (acc, &q) in next.iter_mut().zip(row) {
                *acc += p * q;
            }
        }
        pi = next;
    }
    Ok(ExactChainDistribution {
        step: t_rl,
        n,
        k,
        dataset: d.fingerprint(),
        probs: pi,
    })
}

/// Exact law of the forward-noised data `q(v_t)` averaged over the rows of `d`.
pub fn exact_forward_distribution(
    d: &CategoricalDataset,
    t: usize,
    sched: &DiffusionSchedule,
    cap: usize,
) -> Result<ExactChainDistribution> {
    let (n, k) = (d.num_features(), d.num_categories());
    let states = state_count(n, k, cap)?;
    if t > sched.steps() {
        return input(format!("step {t} exceeds T"));
    }
    let (bp, bm) = (sched.mu_bar_plus(t), sched.mu_bar_minus(t));
    let rows = d.distinct();
    let total = rows.total() as f64;
    let probs = (0..states)
        .map(|x| {
            let v = decode_state(x, n, k);
            (0..rows.len())
                .map(|j| {
                    let dist = hamming_unchecked(rows.row(j), &v) as i32;
                    rows.count(j) as f64 * bp.powi(n as i32 - dist) * bm.powi(dist)
                })
                .sum::<f64>()
                / total
        })
        .collect();
    Ok(ExactChainDistribution {
        step: t,
        n,
        k,
        dataset: d.fingerprint(),
        probs,
    })
}

fn check_pair(p: &ExactChainDistribution, q: &ExactChainDistribution) -> Result<()> {
    if p.probs.len() != q.probs.len() || p.n != q.n || p.k != q.k {
        return input("distributions live on different state spaces");
    }
    Ok(())
}

/// Smallest `delta` such that `P_i(O) <= e^eps P_j(O) + delta` for every set `O`, both ways.
pub fn exact_pdp_delta(p0: &ExactChainDistribution, p1: &ExactChainDistribution, eps: f64) -> Result<f64> {
    check_pair(p0, p1)?;
    if !(eps > 0.0) {
        return input("epsilon must be positive");
    }
    Ok(hockey_stick(&p0.probs, &p1.probs, eps).max(hockey_stick(&p1.probs, &p0.probs, eps)))
}

/// `sum_x (p(x) - e^eps q(x))_+`.
pub fn hockey_stick(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let e = eps.exp();
    p.iter().zip(q).map(|(&a, &b)| (a - e * b).max(0.0)).sum()
}

/// `KL(p || q)`; infinite when `p` charges a zero of `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| if b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum()
}

/// `KL(p || q) + KL(q || p)`.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> f64 {
    kl_divergence(p, q) + kl_divergence(q, p)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
