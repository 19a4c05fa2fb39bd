//! Per-instance privacy bounds for a target row, with per-step breakdown.
//!
//! Two radius-selection rules are provided. `Mode::Main` uses the headline
//! conditions; `Mode::Relaxed` uses the two-branch `c*` search and the
//! binomial-tail `eta` condition. Every step `t` in `T_rl+1..=T` contributes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::dataset::{CategoricalDataset, NeighborTable};
use crate::error::{input, Result};
use crate::jsonf64;
use crate::schedule::{DiffusionSchedule, ScheduleKind};

/// Version tag written into every report.
pub const REPORT_SCHEMA: &str = "pdp-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Main,
    Relaxed,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "main" => Ok(Mode::Main),
            "relaxed" => Ok(Mode::Relaxed),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Knobs for the per-step radius search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadiusRule {
    pub mode: Mode,
    /// Use the one-step `mu_minus`, `R_t` and `A B s^psi` forms wherever the
    /// headline statements print them instead of the cumulative quantities.
    pub literal_main_text: bool,
}

impl RadiusRule {
    pub fn main() -> Self {
        Self {
            mode: Mode::Main,
            literal_main_text: false,
        }
    }

    pub fn relaxed() -> Self {
        Self {
            mode: Mode::Relaxed,
            literal_main_text: false,
        }
    }
}

/// `(s - n_a) / n_b`, infinite when `n_b = 0`.
pub fn vartheta(n_a: u64, n_b: u64, s: u64) -> f64 {
    if n_b == 0 {
        f64::INFINITY
    } else {
        (s - n_a.min(s)) as f64 / n_b as f64
    }
}

/// `tau / (eps (1 - e^{-eps}))`.
pub fn kl_to_pdp(tau: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return input(format!("epsilon must be positive, got {eps}"));
    }
    if tau < 0.0 {
        return input("divergence must be non-negative");
    }
    Ok(tau / pdp_denominator(eps))
}

fn pdp_denominator(eps: f64) -> f64 {
    -eps * (-eps).exp_m1()
}

/// Smallest `kappa` in `0..=n` whose binomial upper tail with flip probability
/// `1 - mu_bar_plus` is at most `threshold`; `n + 1` when none is.
pub fn binomial_tail_kappa(n: usize, mu_bar_plus: f64, threshold: f64) -> usize {
    if threshold >= 1.0 {
        return 0;
    }
    let q = (1.0 - mu_bar_plus).clamp(0.0, 1.0);
    let ln_q = q.ln();
    let ln_p = mu_bar_plus.ln();
    let mut tail = 0.0;
    let mut best = n + 1;
    for kappa in (1..=n).rev() {
        let j = kappa as u64;
        let term = if q == 0.0 {
            0.0
        } else {
            (ln_binomial(n as u64, j) + j as f64 * ln_q + (n - kappa) as f64 * ln_p).exp()
        };
        tail += term;
        if tail <= threshold {
            best = kappa;
        } else {
            break;
        }
    }
    best
}

/// `n (f1(gamma) + f2(gamma_tilde))` at step `t`.
pub fn error_term(t: usize, gamma: f64, gamma_tilde: f64, sched: &DiffusionSchedule, n: usize) -> Result<f64> {
    if t == 0 || t > sched.steps() {
        return input(format!("step {t} is outside 1..={}", sched.steps()));
    }
    if gamma < 0.0 || gamma_tilde < 0.0 {
        return input("approximation errors must be non-negative");
    }
    let (mp, mm) = (sched.mu_plus(t), sched.mu_minus(t));
    let (bp_prev, bm_prev) = (sched.mu_bar_plus(t - 1), sched.mu_bar_minus(t - 1));
    let f1 = if gamma == 0.0 {
        0.0
    } else {
        sched.k() as f64 * (mp * bp_prev).powi(2) / (sched.mu_bar_plus(t) * mm * bm_prev) * (2.0 * gamma).sqrt()
    };
    let f2 = if gamma_tilde == 0.0 {
        0.0
    } else {
        2.0 * ((mp * bp_prev) / (mm * bm_prev)).ln() * gamma_tilde
    };
    Ok(n as f64 * (f1 + f2))
}

/// Value of the leakage-exponent term `n / s^psi` and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiTerm {
    /// `n / s^psi`.
    pub value: f64,
    /// `Sim(v*, V1)` at ratio `R_bar_t`.
    pub sim: f64,
    /// `sum_i log(1 + B / (R_bar_{t-1}^2 Sim_i + Sim + 1))`.
    pub log_sum: f64,
    /// Some restricted similarity vanished at `t = 1`, so the term diverges.
    pub support_isolated: bool,
}

impl PsiTerm {
    /// `coef * s^psi` with the coefficient cancelled: `n (1 + Sim) / log_sum`.
    fn scaled_inverse(&self, n: usize) -> f64 {
        n as f64 * (1.0 + self.sim) / self.log_sum
    }
}

/// `n / s^psi` at step `t` with coefficient `(alpha_bar_{t-1} - alpha_bar_t)/(k mu_bar+ mu_bar-)`,
/// multiplied by `mu_plus_t` in relaxed mode.
pub fn psi_term(table: &NeighborTable, t: usize, sched: &DiffusionSchedule, mode: Mode) -> Result<PsiTerm> {
    if t == 0 || t > sched.steps() {
        return input(format!("step {t} is outside 1..={}", sched.steps()));
    }
    let n = table.num_features();
    let ln_r = sched.ln_r_bar(t);
    let sim = table.similarity_ln(ln_r);
    let inv_prev = sched.inv_r_bar(t - 1);
    // B / R_bar_{t-1}^2, exact at R_bar_0 = inf.
    let c = (1.0 - inv_prev) * (1.0 + inv_prev);
    let denom_extra = (sim + 1.0) * inv_prev * inv_prev;
    let mut log_sum = 0.0;
    let mut isolated = false;
    for i in 0..n {
        let sim_i = table.restricted_similarity_ln(i, ln_r);
        let den = sim_i + denom_extra;
        if den == 0.0 {
            isolated = true;
            log_sum = f64::INFINITY;
        } else {
            log_sum += (c / den).ln_1p();
        }
    }
    let coef = match mode {
        Mode::Main => sched.drop_coefficient(t),
        Mode::Relaxed => sched.a_coefficient(t),
    };
    let value = if coef == 0.0 {
        0.0
    } else {
        coef / (1.0 + sim) * log_sum
    };
    Ok(PsiTerm {
        value,
        sim,
        log_sum,
        support_isolated: isolated,
    })
}

/// Selected radius parameters at one step; `c_star = extra / eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Radius {
    pub eta: usize,
    pub extra: usize,
}

impl Radius {
    pub fn c_star(&self) -> f64 {
        self.extra as f64 / self.eta as f64
    }

    /// `(1 + c*) eta`.
    pub fn effective(&self) -> usize {
        self.eta + self.extra
    }
}

/// `c * denom >= num`, with `num = -inf` always admissible and `num = +inf` never.
fn admissible(c: f64, denom: f64, num: f64) -> bool {
    if num == f64::NEG_INFINITY {
        return true;
    }
    if num == f64::INFINITY || num.is_nan() {
        return false;
    }
    c * denom >= num
}

/// `(x)_+` where `x = num / den` and a vanishing numerator wins over the denominator.
fn positive_ratio(num: f64, den: f64) -> f64 {
    if num == f64::NEG_INFINITY || num <= 0.0 && den > 0.0 {
        return 0.0;
    }
    if den <= 0.0 {
        return if num > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (num / den).max(0.0)
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

/// Smallest admissible `c*` for a given `eta`, as the number of extra radius units.
pub fn find_c_star(eta: usize, t: usize, table: &NeighborTable, sched: &DiffusionSchedule, rule: RadiusRule) -> usize {
    let n = table.num_features();
    let s = table.s();
    let max_extra = n - eta;
    let etaf = eta as f64;
    let mu_minus = if rule.literal_main_text {
        sched.mu_minus(t)
    } else {
        sched.mu_bar_minus(t)
    };
    let log_inv = -mu_minus.ln();
    let theta = |r: usize| vartheta(table.n_within(r), table.n_within(r), s);
    let scaled_log = |r: usize| {
        let th = theta(r);
        if th == 0.0 {
            f64::NEG_INFINITY
        } else {
            th.ln() / etaf
        }
    };
    match rule.mode {
        Mode::Main => (0..=max_extra)
            .find(|&j| admissible(j as f64 / etaf, log_inv - 1.0, scaled_log(eta + j) + 1.5))
            .unwrap_or(max_extra),
        Mode::Relaxed => {
            let branch_one = {
                let th2 = theta(2 * eta);
                let lhs = if th2 == 0.0 { f64::INFINITY } else { 1.0 / th2 };
                lhs > (2.0 * std::f64::consts::E * sched.mu_bar_minus(t)).powi(eta as i32)
            };
            let first = if branch_one {
                (0..eta.min(max_extra + 1)).find(|&j| {
                    admissible(
                        j as f64 / etaf,
                        log_inv,
                        scaled_log(eta + j) + 1.0 + std::f64::consts::LN_2,
                    )
                })
            } else {
                None
            };
            first
                .or_else(|| {
                    (eta..=max_extra).find(|&j| admissible(j as f64 / etaf, log_inv - 1.0, scaled_log(eta + j)))
                })
                .unwrap_or(max_extra)
        }
    }
}

fn eta_admissible(
    eta: usize,
    extra: usize,
    t: usize,
    table: &NeighborTable,
    psi: &PsiTerm,
    sched: &DiffusionSchedule,
    rule: RadiusRule,
) -> bool {
    let n = table.num_features();
    let s = table.s();
    let etaf = eta as f64;
    match rule.mode {
        Mode::Main => {
            let th = vartheta(table.n_within(eta), table.n_within(eta), s);
            if th == 0.0 {
                return true;
            }
            if th.is_infinite() {
                return false;
            }
            let log_th = th.ln();
            let l1 = -(n as f64 * (1.0 - sched.mu_bar_plus(t))).ln();
            let first = if l1 > 0.0 {
                log_th / l1
            } else if log_th > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            let num = log_th + psi.scaled_inverse(n).ln();
            let second = (positive_ratio(num, 2.0 * sched.ln_r_bar(t)) - 2.0).max(0.0);
            etaf >= first + second
        }
        Mode::Relaxed => {
            let n_eta = table.n_within(eta);
            let n_big = table.n_within(eta + extra);
            let th = vartheta(n_eta, n_big, s);
            if th.is_infinite() {
                return false;
            }
            let threshold = if n_eta >= s {
                f64::INFINITY
            } else {
                n_big as f64 / (s - n_eta) as f64
            };
            let kappa = binomial_tail_kappa(n, sched.mu_bar_plus(t), threshold);
            if kappa > n {
                return false;
            }
            let inv_prev = sched.inv_r_bar(t - 1);
            let phi = if rule.literal_main_text {
                sched.r_bar_sq_m1(t - 1) * psi.scaled_inverse(n)
            } else {
                (1.0 - inv_prev) * (1.0 + inv_prev) * psi.scaled_inverse(n)
            };
            let num = ln_or_neg_inf(th) + ln_or_neg_inf(phi);
            let den = if rule.literal_main_text {
                2.0 * sched.r(t).ln()
            } else {
                2.0 * sched.ln_r_bar(t)
            };
            let bracket = if th == 0.0 { 0.0 } else { positive_ratio(num, den) };
            etaf >= kappa as f64 + bracket - 2.0
        }
    }
}

/// Ascending scan for the smallest admissible `eta`, with its `c*`.
pub fn find_eta(t: usize, table: &NeighborTable, psi: &PsiTerm, sched: &DiffusionSchedule, rule: RadiusRule) -> Radius {
    let n = table.num_features();
    for eta in 1..=n {
        let extra = find_c_star(eta, t, table, sched, rule);
        if eta_admissible(eta, extra, t, table, psi, sched, rule) {
            return Radius { eta, extra };
        }
    }
    Radius { eta: n, extra: 0 }
}

/// One step of a per-point trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    pub eta: usize,
    pub c_star: f64,
    pub radius: usize,
    #[serde(with = "jsonf64")]
    pub psi_term: f64,
    pub clamp: f64,
    pub second_term: f64,
    pub error_term: f64,
    /// `clamp * psi_term + second_term`.
    #[serde(with = "jsonf64")]
    pub main_term: f64,
    /// `Sim(v*, V1)` at `R_bar_t`.
    pub similarity: f64,
}

/// Inputs to a bound evaluation shared by every audited point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    pub epsilon: f64,
    pub m: usize,
    pub release_step: usize,
    pub rule: RadiusRule,
    /// `(gamma_t, gamma_tilde_t)` for `t = 1..=T`; empty means all zero.
    pub gamma: Vec<(f64, f64)>,
}

impl BoundConfig {
    pub fn new(epsilon: f64, m: usize, release_step: usize, rule: RadiusRule) -> Self {
        Self {
            epsilon,
            m,
            release_step,
            rule,
            gamma: Vec::new(),
        }
    }

    fn validate(&self, sched: &DiffusionSchedule) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return input(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.release_step > sched.steps() {
            return input(format!("release step {} exceeds T = {}", self.release_step, sched.steps()));
        }
        if !self.gamma.is_empty() && self.gamma.len() != sched.steps() {
            return input(format!("gamma needs {} rows, got {}", sched.steps(), self.gamma.len()));
        }
        Ok(())
    }

    fn gamma_at(&self, t: usize) -> (f64, f64) {
        self.gamma.get(t - 1).copied().unwrap_or((0.0, 0.0))
    }
}

/// Bound for a single target together with its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBound {
    pub delta: f64,
    pub support_isolated: bool,
    /// Trace entries ordered by `t` ascending.
    pub trace: Vec<TraceEntry>,
}

/// One step's contribution for `table` at `t`.
pub fn step_entry(
    table: &NeighborTable,
    t: usize,
    sched: &DiffusionSchedule,
    cfg: &BoundConfig,
) -> Result<(TraceEntry, bool)> {
    let n = table.num_features();
    let s = table.s() as f64;
    let psi = psi_term(table, t, sched, cfg.rule.mode)?;
    let radius = find_eta(t, table, &psi, sched, cfg.rule);
    let clamp = (4.0 * table.n_within(radius.effective()) as f64 / s).min(1.0);
    let second = n as f64 * (1.0 - sched.inv_r_bar(t - 1)) / (s * s);
    let (g, gt) = cfg.gamma_at(t);
    let err = error_term(t, g, gt, sched, n)?;
    let scaled = if psi.value == 0.0 { 0.0 } else { clamp * psi.value };
    Ok((
        TraceEntry {
            t,
            eta: radius.eta,
            c_star: radius.c_star(),
            radius: radius.effective(),
            psi_term: psi.value,
            clamp,
            second_term: second,
            error_term: err,
            main_term: scaled + second,
            similarity: psi.sim,
        },
        psi.support_isolated,
    ))
}

/// Per-instance `delta` for the target described by `table`.
pub fn per_instance_delta(table: &NeighborTable, sched: &DiffusionSchedule, cfg: &BoundConfig) -> Result<PointBound> {
    cfg.validate(sched)?;
    let mut trace = Vec::with_capacity(sched.steps() - cfg.release_step);
    let mut total = 0.0;
    let mut isolated = false;
    for t in cfg.release_step + 1..=sched.steps() {
        let (e, iso) = step_entry(table, t, sched, cfg)?;
        isolated |= iso && e.psi_term.is_infinite();
        total += e.main_term + e.error_term;
        trace.push(e);
    }
    let delta = if cfg.m == 0 {
        0.0
    } else {
        (cfg.m as f64 * total / pdp_denominator(cfg.epsilon)).max(0.0)
    };
    Ok(PointBound {
        delta,
        support_isolated: isolated,
        trace,
    })
}

/// Report entry for one distinct row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub rank: usize,
    pub row: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub multiplicity: u64,
    #[serde(with = "jsonf64")]
    pub delta: f64,
    pub flags: Vec<String>,
    pub trace: Vec<TraceEntry>,
}

/// Run metadata stored at the top of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub epsilon: f64,
    pub m: usize,
    pub release_step: usize,
    pub mode: Mode,
    pub literal_main_text: bool,
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub n: usize,
    pub k: usize,
    pub dataset_size: usize,
    pub dataset_fingerprint: String,
    /// Steps summed over, inclusive.
    pub summed_steps: [usize; 2],
    pub gamma: Vec<(f64, f64)>,
    pub state_encoding: String,
    /// Free-form invocation record, filled in by front ends.
    #[serde(default)]
    pub invocation: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpReport {
    pub schema: String,
    pub meta: ReportMeta,
    /// Sorted by `delta` descending, ties by row.
    pub points: Vec<PointReport>,
}

impl PdpReport {
    pub fn max_delta(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.delta)
    }

    /// Mean over rows of the dataset, weighting each distinct row by its multiplicity.
    pub fn mean_delta(&self) -> f64 {
        let (sum, cnt) = self
            .points
            .iter()
            .fold((0.0, 0u64), |(s, c), p| (s + p.delta * p.multiplicity as f64, c + p.multiplicity));
        if cnt == 0 {
            0.0
        } else {
            sum / cnt as f64
        }
    }

    pub fn has_infinite(&self) -> bool {
        self.points.iter().any(|p| !p.delta.is_finite())
    }
}

pub const FLAG_SUPPORT_ISOLATED: &str = "support-isolated";

/// Audits the given targets (all distinct rows when `targets` is `None`).
pub fn audit(
    d: &CategoricalDataset,
    sched: &DiffusionSchedule,
    cfg: &BoundConfig,
    targets: Option<&[Vec<u32>]>,
) -> Result<PdpReport> {
    cfg.validate(sched)?;
    if sched.k() != d.num_categories() {
        return input(format!(
            "schedule uses k = {} but the dataset has k = {}",
            sched.k(),
            d.num_categories()
        ));
    }
    if d.len() < 2 {
        return input("auditing needs at least two rows");
    }
    let distinct = d.distinct();
    let chosen: Vec<(Vec<u32>, u64)> = match targets {
        None => (0..distinct.len())
            .map(|j| (distinct.row(j).to_vec(), distinct.count(j)))
            .collect(),
        Some(ts) => {
            let mut uniq: Vec<Vec<u32>> = ts.to_vec();
            uniq.sort();
            uniq.dedup();
            uniq.into_iter()
                .map(|r| {
                    let c = d.multiplicity(&r) as u64;
                    (r, c)
                })
                .collect()
        }
    };
    let mut points: Vec<PointReport> = chosen
        .par_iter()
        .map(|(row, mult)| {
            let table = NeighborTable::from_distinct(&distinct, row)?;
            let b = per_instance_delta(&table, sched, cfg)?;
            let mut flags = Vec::new();
            if b.support_isolated {
                flags.push(FLAG_SUPPORT_ISOLATED.to_string());
            }
            Ok(PointReport {
                rank: 0,
                row: row.clone(),
                labels: None,
                multiplicity: *mult,
                delta: if b.support_isolated { f64::INFINITY } else { b.delta },
                flags,
                trace: b.trace,
            })
        })
        .collect::<Result<_>>()?;
    points.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.row.cmp(&b.row)));
    for (i, p) in points.iter_mut().enumerate() {
        p.rank = i + 1;
    }
    Ok(PdpReport {
        schema: REPORT_SCHEMA.to_string(),
        meta: ReportMeta {
            epsilon: cfg.epsilon,
            m: cfg.m,
            release_step: cfg.release_step,
            mode: cfg.rule.mode,
            literal_main_text: cfg.rule.literal_main_text,
            schedule: sched.kind(),
            steps: sched.steps(),
            n: d.num_features(),
            k: d.num_categories(),
            dataset_size: d.len(),
            dataset_fingerprint: d.fingerprint(),
            summed_steps: [cfg.release_step + 1, sched.steps()],
            gamma: cfg.gamma.clone(),
            state_encoding: "mixed radix k, column 0 most significant".to_string(),
            invocation: serde_json::Value::Null,
        },
        points,
    })
}

/// Audit of every distinct row of `d`.
pub fn audit_all(d: &CategoricalDataset, sched: &DiffusionSchedule, cfg: &BoundConfig) -> Result<PdpReport> {
    audit(d, sched, cfg, None)
}

/// Reads `(gamma_t, gamma_tilde_t)` rows from a two-column CSV (header optional).
pub fn read_gamma_csv(path: &std::path::Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| rec.get(j).and_then(|x| x.parse::<f64>().ok());
        match (parse(0), parse(1)) {
            (Some(a), Some(b)) if a >= 0.0 && b >= 0.0 => out.push((a, b)),
            _ if i == 0 => continue,
            _ => return input(format!("gamma file line {}: expected two non-negative numbers", i + 1)),
        }
    }
    Ok(out)
}
