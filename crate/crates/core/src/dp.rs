//! Dataset-free differential-privacy bound built from schedule quantities and `(s, n, k)`.

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::jsonf64;
use crate::pdp::{binomial_tail_kappa, Radius};
use crate::schedule::{DiffusionSchedule, ScheduleKind};

pub const DP_REPORT_SCHEMA: &str = "dp-report/1";

fn check(t: usize, s: usize, n: usize, sched: &DiffusionSchedule) -> Result<()> {
    if n == 0 {
        return input("n must be positive");
    }
    if s <= n {
        return input(format!("dataset size s = {s} must exceed n = {n}"));
    }
    if t == 0 || t > sched.steps() {
        return input(format!("step {t} is outside 1..={}", sched.steps()));
    }
    Ok(())
}

/// `(Sim, Sim_i)` lower bounds of the one-overlap-per-column worst case at `R_bar_t`.
fn worst_similarities(t: usize, s: usize, n: usize, sched: &DiffusionSchedule) -> (f64, f64) {
    let ln_r = sched.ln_r_bar(t);
    let r_1n = (-(n as f64 - 1.0) * ln_r).exp();
    let r_n = (-(n as f64) * ln_r).exp();
    (r_n * (s - n) as f64 + r_1n, r_1n)
}

/// `1 / s^Psi_t`.
pub fn worst_psi(t: usize, s: usize, n: usize, sched: &DiffusionSchedule) -> Result<f64> {
    check(t, s, n, sched)?;
    let (sim, sim_i) = worst_similarities(t, s, n, sched);
    let inv_prev = sched.inv_r_bar(t - 1);
    let c = (1.0 - inv_prev) * (1.0 + inv_prev);
    let a = sched.a_coefficient(t);
    if a == 0.0 || c == 0.0 {
        return Ok(0.0);
    }
    Ok(a / (1.0 + sim) * (c / (sim_i + (sim + 1.0) * inv_prev * inv_prev)).ln_1p())
}

/// `(1 - C) (1 - 1/R_bar_{t-1}) + C (1 - R_bar_t / R_bar_{t-1})` with `C = mu_t^+ mu_bar_{t-1}^+ / mu_bar_t^+`.
pub fn varrho(t: usize, sched: &DiffusionSchedule) -> Result<f64> {
    if t == 0 || t > sched.steps() {
        return input(format!("step {t} is outside 1..={}", sched.steps()));
    }
    let c1 = sched.mu_plus(t) * sched.mu_bar_plus(t - 1) / sched.mu_bar_plus(t);
    let inv_prev = sched.inv_r_bar(t - 1);
    let ratio_gap = if t == 1 {
        1.0
    } else {
        let (d, dp) = (sched.r_bar_m1(t), sched.r_bar_m1(t - 1));
        ((dp - d) / (1.0 + dp)).max(0.0)
    };
    Ok(((1.0 - c1) * (1.0 - inv_prev) + c1 * ratio_gap).clamp(0.0, 1.0))
}

/// `h(eta)`: `s` up to `n - 2`, `s / n` at `n - 1`, `0` at `n`.
pub fn h(eta: usize, s: usize, n: usize) -> f64 {
    if eta >= n {
        0.0
    } else if eta + 1 == n {
        s as f64 / n as f64
    } else {
        s as f64
    }
}

fn log_h(eta: usize, s: usize, n: usize) -> f64 {
    let v = h(eta, s, n);
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        v.ln()
    }
}

/// Worst-case `(eta, c*)` at step `t`.
pub fn worst_radii(t: usize, s: usize, n: usize, sched: &DiffusionSchedule, literal_main_text: bool) -> Result<Radius> {
    let psi = worst_psi(t, s, n, sched)?;
    let mu_minus = if literal_main_text {
        sched.mu_minus(t)
    } else {
        sched.mu_bar_minus(t)
    };
    let c_den = -mu_minus.ln() - 1.0;
    let inv_prev = sched.inv_r_bar(t - 1);
    let a = sched.a_coefficient(t);
    let phi = if psi == 0.0 {
        f64::INFINITY
    } else if literal_main_text {
        a * sched.r_bar_sq_m1(t - 1) / psi
    } else {
        a * (1.0 - inv_prev) * (1.0 + inv_prev) / psi
    };
    let eta_den = if literal_main_text {
        2.0 * sched.r(t).ln()
    } else {
        2.0 * sched.ln_r_bar(t)
    };
    for eta in 1..=n {
        let etaf = eta as f64;
        let extra = (0..=n - eta)
            .find(|&j| {
                let lh = log_h(eta + j, s, n);
                lh == f64::NEG_INFINITY || (j as f64 / etaf) * c_den >= lh / etaf + 1.5
            })
            .unwrap_or(n - eta);
        let hv = h(eta, s, n);
        if hv == 0.0 {
            return Ok(Radius { eta, extra });
        }
        let kappa = binomial_tail_kappa(n, sched.mu_bar_plus(t), 1.0 / hv);
        if kappa > n {
            continue;
        }
        let num = hv.ln() + phi.ln();
        let bracket = if num <= 0.0 {
            0.0
        } else if eta_den <= 0.0 || num.is_infinite() {
            f64::INFINITY
        } else {
            num / eta_den
        };
        if etaf >= kappa as f64 + bracket - 2.0 {
            return Ok(Radius { eta, extra });
        }
    }
    Ok(Radius { eta: n, extra: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpTraceEntry {
    pub t: usize,
    pub eta: usize,
    pub c_star: f64,
    pub radius: usize,
    /// `n / s^Psi_t`.
    pub psi_term: f64,
    /// `1 / s^Psi_t`.
    pub worst_psi: f64,
    pub clamp: f64,
    pub varrho: f64,
    /// `n varrho_t / s^2`.
    pub second_term: f64,
    #[serde(with = "jsonf64")]
    pub main_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpMeta {
    pub s: usize,
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub m: usize,
    pub release_step: usize,
    pub literal_main_text: bool,
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub summed_steps: [usize; 2],
    #[serde(default)]
    pub invocation: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub schema: String,
    pub meta: DpMeta,
    #[serde(with = "jsonf64")]
    pub delta: f64,
    pub trace: Vec<DpTraceEntry>,
}

/// Dataset-free `delta` with the radius factor clamped to one.
#[allow(clippy::too_many_arguments)]
pub fn dp_delta(
    s: usize,
    n: usize,
    epsilon: f64,
    m: usize,
    release_step: usize,
    sched: &DiffusionSchedule,
    literal_main_text: bool,
) -> Result<DpReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return input(format!("epsilon must be positive, got {epsilon}"));
    }
    if release_step > sched.steps() {
        return input(format!("release step {release_step} exceeds T = {}", sched.steps()));
    }
    if n == 0 || s <= n {
        return input(format!("dataset size s = {s} must exceed n = {n}"));
    }
    let mut trace = Vec::new();
    let mut total = 0.0;
    for t in release_step + 1..=sched.steps() {
        let wp = worst_psi(t, s, n, sched)?;
        let r = worst_radii(t, s, n, sched, literal_main_text)?;
        let rho = varrho(t, sched)?;
        let second = n as f64 * rho / (s as f64 * s as f64);
        let main = n as f64 * wp + second;
        total += main;
        trace.push(DpTraceEntry {
            t,
            eta: r.eta,
            c_star: r.c_star(),
            radius: r.effective(),
            psi_term: n as f64 * wp,
            worst_psi: wp,
            clamp: 1.0,
            varrho: rho,
            second_term: second,
            main_term: main,
        });
    }
    let delta = if m == 0 {
        0.0
    } else {
        m as f64 * total / (-epsilon * (-epsilon).exp_m1())
    };
    Ok(DpReport {
        schema: DP_REPORT_SCHEMA.to_string(),
        meta: DpMeta {
            s,
            n,
            k: sched.k(),
            epsilon,
            m,
            release_step,
            literal_main_text,
            schedule: sched.kind(),
            steps: sched.steps(),
            summed_steps: [release_step + 1, sched.steps()],
            invocation: serde_json::Value::Null,
        },
        delta,
        trace,
    })
}
