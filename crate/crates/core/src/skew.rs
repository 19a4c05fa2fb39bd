//! Closed-form predictions for skewed product distributions.
//!
//! Each column takes the majority category `0` with probability `p` and each
//! other category with probability `q = (1 - p)/(k - 1)`. The audited target
//! takes a non-majority category in every column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{non_majority_point, sample_skewed, NeighborTable};
use crate::error::{input, Result};
use crate::pdp::{per_instance_delta, BoundConfig, RadiusRule};
use crate::schedule::DiffusionSchedule;
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewParams {
    pub p: f64,
    pub k: usize,
    pub n: usize,
}

impl SkewParams {
    pub fn new(p: f64, k: usize, n: usize) -> Result<Self> {
        if k < 2 || n == 0 {
            return input("need k >= 2 and n >= 1");
        }
        if !(p >= 1.0 / k as f64 - 1e-12 && p < 1.0) {
            return input(format!("majority probability must lie in [1/k, 1), got {p}"));
        }
        Ok(Self { p, k, n })
    }

    /// `(1 - p) / (k - 1)`.
    pub fn minority(&self) -> f64 {
        (1.0 - self.p) / (self.k as f64 - 1.0)
    }

    /// `q + (1 - q) / R_bar_t`.
    pub fn tau(&self, t: usize, sched: &DiffusionSchedule) -> f64 {
        let q = self.minority();
        q + sched.inv_r_bar(t) * (1.0 - q)
    }
}

/// Limit of `psi_term * s^2 / n` for the non-majority target as `s` grows.
pub fn asymptotic_psi(t: usize, params: &SkewParams, sched: &DiffusionSchedule) -> Result<f64> {
    if t == 0 || t > sched.steps() {
        return input(format!("step {t} is outside 1..={}", sched.steps()));
    }
    let coef = sched.drop_coefficient(t);
    if coef == 0.0 {
        return Ok(0.0);
    }
    let n = params.n as i32;
    let tau = params.tau(t, sched);
    let inv_prev = sched.inv_r_bar(t - 1);
    // B / R_bar_{t-1}^2 over (q tau^{2n-1} + tau^{2n} / R_bar_{t-1}^2).
    let c = (1.0 - inv_prev) * (1.0 + inv_prev);
    Ok(coef * c / (params.minority() * tau.powi(2 * n - 1) + tau.powi(2 * n) * inv_prev * inv_prev))
}

/// Closed-form sufficient radii `(eta, extra)` with `c = extra / eta`.
pub fn sufficient_radii(t: usize, params: &SkewParams, s: usize, sched: &DiffusionSchedule) -> Result<(usize, usize)> {
    if t == 0 || t > sched.steps() {
        return input(format!("step {t} is outside 1..={}", sched.steps()));
    }
    let n = params.n;
    let nf = n as f64;
    let coef = sched.drop_coefficient(t);
    let l = ((params.k as f64 - 1.0) / (1.0 - params.p)).ln();
    let bm = sched.mu_bar_minus(t);
    let ln_r = sched.ln_r_bar(t);
    let log_max = (1.0 / (nf * bm)).max(1.0).ln();
    let reach = (s as f64 * coef.sqrt()).ln() / ln_r;
    let num = nf - reach;
    let frac = if num <= 0.0 || log_max == 0.0 {
        0.0
    } else {
        num / (2.0 * l / log_max + 1.0)
    };
    let eta_rhs = nf - frac.max(0.0);
    let eta = if eta_rhs.is_nan() { n } else { (eta_rhs.ceil().max(1.0) as usize).min(n) };
    let etaf = eta as f64;
    let c_den = l - 1.0 - bm.ln();
    let c_num = (nf - etaf) / etaf * l + (2.0 * std::f64::consts::E).ln();
    let extra = (0..=n - eta)
        .find(|&j| (j as f64 / etaf) * c_den >= c_num)
        .unwrap_or(n - eta);
    Ok((eta, extra))
}

/// Fixed design for skew sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewDesign {
    pub k: usize,
    pub n: usize,
    /// `|V1|`; the target is added on top.
    pub s: usize,
    pub epsilon: f64,
    pub rule: RadiusRule,
    pub seeds: Vec<u64>,
}

/// One `(p, t)` cell averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewRow {
    pub p: f64,
    pub t: usize,
    pub psi_term: f64,
    pub radius: f64,
    pub main_term: f64,
}

/// Sweep result: per-step rows plus the seed-averaged `delta` for each `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewSweep {
    pub rows: Vec<SkewRow>,
    pub delta: Vec<(f64, f64)>,
}

/// Non-majority target against `s` sampled rows: main-mode trace per seed.
fn sampled_trace(
    p: f64,
    seed: u64,
    design: &SkewDesign,
    sched: &DiffusionSchedule,
) -> Result<crate::pdp::PointBound> {
    let target = non_majority_point(design.n, design.k);
    let v1 = sample_skewed(design.n, design.k, p, design.s, seed)?;
    let v0 = v1.with_row(&target)?;
    let table = NeighborTable::build(&v0, &target)?;
    per_instance_delta(&table, sched, &BoundConfig::new(design.epsilon, 1, 0, design.rule))
}

pub fn predict_leakage_vs_skew(p_grid: &[f64], design: &SkewDesign, sched: &DiffusionSchedule) -> Result<SkewSweep> {
    if design.seeds.is_empty() {
        return input("at least one seed is required");
    }
    for &p in p_grid {
        SkewParams::new(p, design.k, design.n)?;
    }
    let cells: Vec<(usize, u64)> = (0..p_grid.len())
        .flat_map(|i| design.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let traces: Vec<crate::pdp::PointBound> = cells
        .par_iter()
        .map(|&(i, seed)| sampled_trace(p_grid[i], seed, design, sched))
        .collect::<Result<_>>()?;
    let per = design.seeds.len();
    let mut rows = Vec::new();
    let mut delta = Vec::new();
    for (i, &p) in p_grid.iter().enumerate() {
        let group = &traces[i * per..(i + 1) * per];
        delta.push((p, mean(&group.iter().map(|b| b.delta).collect::<Vec<_>>())));
        for step in 0..sched.steps() {
            let col = |f: &dyn Fn(&crate::pdp::TraceEntry) -> f64| {
                mean(&group.iter().map(|b| f(&b.trace[step])).collect::<Vec<_>>())
            };
            rows.push(SkewRow {
                p,
                t: step + 1,
                psi_term: col(&|e| e.psi_term),
                radius: col(&|e| e.radius as f64),
                main_term: col(&|e| e.main_term),
            });
        }
    }
    Ok(SkewSweep { rows, delta })
}

/// Writes rows as CSV with header `p,t,psi_term,radius,main_term`.
pub fn write_rows_csv<W: std::io::Write>(rows: &[SkewRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
