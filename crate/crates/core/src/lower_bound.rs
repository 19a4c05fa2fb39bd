//! Lower bounds on the leakage of the two-feature, two-category worst-case pair.
//!
//! `V0 = {[0,0] x (s-1), [1,1] x 2}` and `V1 = V0 \ {[1,1]}`. The exact 4-state chain
//! is available through [`exact_gap`] and acts as the arbiter for both bounds.

use serde::{Deserialize, Serialize};

use crate::dataset::CategoricalDataset;
use crate::ddm::{encode_state, exact_generated_distribution, exact_pdp_delta, ExactChainDistribution};
use crate::error::{input, Result};
use crate::schedule::{DiffusionSchedule, ScheduleKind};

/// One-coordinate posterior weights `q(v_{t-1} | v_t, v_0)` at step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionConstants {
    /// `mu_t^+ mu_bar_{t-1}^+ / mu_bar_t^+`.
    pub c1: f64,
    /// `mu_t^- mu_bar_{t-1}^- / mu_bar_t^+`.
    pub c2: f64,
    /// `mu_t^+ mu_bar_{t-1}^- / mu_bar_t^-`.
    pub c1_tilde: f64,
    /// `mu_t^- mu_bar_{t-1}^+ / mu_bar_t^-`.
    pub c2_tilde: f64,
}

impl TransitionConstants {
    pub fn at(t: usize, sched: &DiffusionSchedule) -> Result<Self> {
        if t == 0 || t > sched.steps() {
            return input(format!("step {t} is outside 1..={}", sched.steps()));
        }
        let (mp, mm) = (sched.mu_plus(t), sched.mu_minus(t));
        let (bp, bm) = (sched.mu_bar_plus(t), sched.mu_bar_minus(t));
        let (pp, pm) = (sched.mu_bar_plus(t - 1), sched.mu_bar_minus(t - 1));
        Ok(Self {
            c1: mp * pp / bp,
            c2: mm * pm / bp,
            c1_tilde: mp * pm / bm,
            c2_tilde: mm * pp / bm,
        })
    }
}

/// The canonical adjacent pair `(V0, V1)` for `s >= 2`.
pub fn worst_pair(s: usize) -> Result<(CategoricalDataset, CategoricalDataset)> {
    if s < 2 {
        return input(format!("the worst-case pair needs s >= 2, got {s}"));
    }
    let mut rows = vec![vec![0u32, 0]; s - 1];
    rows.push(vec![1, 1]);
    let v1 = CategoricalDataset::new(2, 2, &rows)?;
    rows.push(vec![1, 1]);
    let v0 = CategoricalDataset::new(2, 2, &rows)?;
    Ok((v0, v1))
}

fn check_schedule(sched: &DiffusionSchedule, s: usize) -> Result<()> {
    if sched.k() != 2 {
        return input(format!("the worst-case pair uses k = 2, schedule has k = {}", sched.k()));
    }
    if sched.steps() < 2 {
        return input("lower bounds need T >= 2");
    }
    if s < 2 {
        return input(format!("the worst-case pair needs s >= 2, got {s}"));
    }
    Ok(())
}

/// `G_1 + F_1 G_2 + ... + F_1 ... F_{T-2} G_{T-1}` given the `F` and `G` sequences indexed from 1.
fn chained_sum(f: impl Fn(usize) -> f64, g: impl Fn(usize) -> f64, steps: usize) -> f64 {
    let mut total = 0.0;
    let mut prefix = 1.0;
    for t in 1..steps {
        total += prefix * g(t);
        prefix *= f(t);
    }
    total
}

/// Constants of the simplified statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedBound {
    /// `G~_1 + F~_1 G~_2 + ... + F~_1 ... F~_{T-2} G~_{T-1}`.
    pub s_tilde: f64,
    /// `min_t (C2 + C1~ + 2 C1~ C2) / 4` over `t = 2..=T`.
    pub delta_tilde: f64,
    /// `log(1 + S~ / (2 (1 + R_bar_1^2 Delta~)))`.
    pub epsilon: f64,
    /// `S~ / (2 s)`.
    pub delta_lb: f64,
}

pub fn simplified_bound(sched: &DiffusionSchedule, s: usize) -> Result<SimplifiedBound> {
    check_schedule(sched, s)?;
    let steps = sched.steps();
    let consts: Vec<TransitionConstants> = (1..=steps)
        .map(|t| TransitionConstants::at(t, sched))
        .collect::<Result<_>>()?;
    let sf = s as f64;
    let r1_sq = sched.r_bar(1).powi(2);
    let g = |t: usize| {
        if t == 1 {
            r1_sq / sf
        } else {
            let c = consts[t - 1];
            2.0 * (c.c2_tilde - c.c2) / sched.r_bar(t).powi(2)
        }
    };
    let f = |t: usize| {
        let c = consts[t - 1];
        c.c1 * (c.c1 - c.c1_tilde)
    };
    let s_tilde = chained_sum(f, g, steps);
    let delta_tilde = consts[1..]
        .iter()
        .map(|c| (c.c2 + c.c1_tilde + 2.0 * c.c1_tilde * c.c2) / 4.0)
        .fold(f64::INFINITY, f64::min);
    let epsilon = (s_tilde / (2.0 * (1.0 + r1_sq * delta_tilde))).ln_1p();
    Ok(SimplifiedBound {
        s_tilde,
        delta_tilde,
        epsilon,
        delta_lb: s_tilde / (2.0 * sf),
    })
}

/// `F_t` of the full recursion.
pub fn full_f(t: usize, sched: &DiffusionSchedule, s: usize) -> Result<f64> {
    let c = TransitionConstants::at(t, sched)?;
    let sf = s as f64;
    let (bp, bm) = (sched.mu_bar_plus(t), sched.mu_bar_minus(t));
    let common = ((sf - 1.0) * c.c1_tilde + 2.0 * c.c1) * ((sf - 1.0) * c.c1 + 2.0 * c.c2_tilde);
    let sp1 = (sf + 1.0).powi(2);
    let a = sp1 * c.c1 * c.c1 - common;
    let b = sp1 * c.c1_tilde * c.c1 - common;
    let cc = sp1 * c.c1_tilde * c.c1_tilde - common;
    let num = 4.0 * bp.powi(4) * a + 4.0 * (sf - 1.0) * bp * bp * bm * bm * b + (sf - 1.0).powi(2) * bm.powi(4) * cc;
    let den = sp1 * (2.0 * bp * bp + (sf - 1.0) * bm * bm).powi(2);
    Ok(num / den)
}

/// `G_t` of the full recursion.
pub fn full_g(t: usize, sched: &DiffusionSchedule, s: usize) -> Result<f64> {
    let sf = s as f64;
    if t == 1 {
        let r = sched.r_bar(1).powi(2);
        return Ok(r * (sf - 1.0) / ((1.0 + (sf - 1.0) * r) * (2.0 + (sf - 1.0) * r)));
    }
    let c = TransitionConstants::at(t, sched)?;
    let (bp, bm) = (sched.mu_bar_plus(t), sched.mu_bar_minus(t));
    let (p2, m2) = (bp * bp, bm * bm);
    let first = (sf - 1.0) * (c.c2_tilde - c.c2) * p2 * m2;
    let second = 4.0 * c.c2_tilde * m2 * m2
        + 3.0 * (sf - 1.0) * (c.c2 + c.c2_tilde) * p2 * m2
        + 2.0 * (sf - 1.0).powi(2) * c.c2 * p2 * p2;
    let den = ((sf - 1.0) * p2 + 2.0 * m2).powi(2) * ((sf - 1.0) * p2 + m2).powi(2);
    Ok(first * second / den)
}

/// `G_1 + F_1 G_2 + ... + F_1 ... F_{T-2} G_{T-1}` with the full `s`-dependent constants.
pub fn full_recursion_bound(sched: &DiffusionSchedule, s: usize) -> Result<f64> {
    check_schedule(sched, s)?;
    let steps = sched.steps();
    let f: Vec<f64> = (1..steps).map(|t| full_f(t, sched, s)).collect::<Result<_>>()?;
    let g: Vec<f64> = (1..steps).map(|t| full_g(t, sched, s)).collect::<Result<_>>()?;
    Ok(chained_sum(|t| f[t - 1], |t| g[t - 1], steps))
}

/// `1/s + R_1^2 Delta / (R_1^2 + s)` bounding the probability of generating `[1,1]`.
pub fn category_mass_bound(sched: &DiffusionSchedule, s: usize) -> Result<f64> {
    check_schedule(sched, s)?;
    let sf = s as f64;
    let mut delta = f64::INFINITY;
    for t in 2..=sched.steps() {
        let c = TransitionConstants::at(t, sched)?;
        let r2 = sched.r_bar(t).powi(2);
        let v = (c.c2 * sf * r2 / (sf * r2 + 1.0)
            + c.c2_tilde / (sf * r2 + 1.0)
            + c.c1_tilde * sf / (sf + r2)
            + c.c1 * r2 / (sf + r2)
            + 2.0 * (c.c1_tilde * (sf - 1.0) / sf + c.c1 / sf) * (c.c2 * (sf - 1.0) / sf + c.c2_tilde / sf))
            / 4.0;
        delta = delta.min(v);
    }
    let r1 = sched.r(1).powi(2);
    Ok(1.0 / sf + r1 * delta / (r1 + sf))
}

/// Exact generated laws of both datasets and the probability gap at `[1,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactGap {
    pub pi0: ExactChainDistribution,
    pub pi1: ExactChainDistribution,
    /// `pi0([1,1]) - pi1([1,1])`.
    pub gap: f64,
}

pub fn exact_gap(sched: &DiffusionSchedule, s: usize, release_step: usize) -> Result<ExactGap> {
    check_schedule(sched, s)?;
    let (v0, v1) = worst_pair(s)?;
    let pi0 = exact_generated_distribution(&v0, release_step, sched, 4)?;
    let pi1 = exact_generated_distribution(&v1, release_step, sched, 4)?;
    let e4 = encode_state(&[1, 1], 2);
    let gap = pi0.probs[e4] - pi1.probs[e4];
    Ok(ExactGap { pi0, pi1, gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSummary {
    pub gap: f64,
    pub pi0: Vec<f64>,
    pub pi1: Vec<f64>,
    /// Exact pDP `delta` of the pair at the simplified bound's epsilon.
    pub delta_at_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub schema: String,
    pub s: usize,
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub epsilon: f64,
    pub delta_lb: f64,
    pub s_tilde: f64,
    pub delta_tilde: f64,
    pub full_recursion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_gap: Option<ExactSummary>,
}

pub fn lower_bound_report(sched: &DiffusionSchedule, s: usize, with_exact: bool) -> Result<LowerBoundReport> {
    let simple = simplified_bound(sched, s)?;
    let full = full_recursion_bound(sched, s)?;
    let exact = if with_exact {
        let g = exact_gap(sched, s, 0)?;
        let d = exact_pdp_delta(&g.pi0, &g.pi1, simple.epsilon)?;
        Some(ExactSummary {
            gap: g.gap,
            pi0: g.pi0.probs,
            pi1: g.pi1.probs,
            delta_at_epsilon: d,
        })
    } else {
        None
    };
    Ok(LowerBoundReport {
        schema: "lower-bound/1".to_string(),
        s,
        steps: sched.steps(),
        schedule: sched.kind(),
        epsilon: simple.epsilon,
        delta_lb: simple.delta_lb,
        s_tilde: simple.s_tilde,
        delta_tilde: simple.delta_tilde,
        full_recursion: full,
        exact_gap: exact,
    })
}
