//! Diffusion-coefficient schedules and the kernel quantities derived from them.
//!
//! All step-indexed accessors take `t` in `0..=T`. Step 0 is the clean data:
//! `alpha_bar(0) = 1`, `r_bar(0) = +inf`, `inv_r_bar(0) = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Lower clamp for a single-step coefficient.
pub const ALPHA_MIN: f64 = 1e-9;
/// Upper clamp for a single-step coefficient.
pub const ALPHA_MAX: f64 = 1.0 - 1e-9;
/// Default offset of the cosine schedule.
pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;

/// How a schedule was constructed; recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear { decay: f64 },
    Sigmoid { decay: f64 },
    Cosine { offset: f64 },
    Custom,
}

/// Uniform-kernel diffusion schedule over `k` categories and `T` steps.
#[derive(Debug, Clone)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    k: usize,
    /// `alpha[t]` for `t in 1..=T`; `alpha[0]` is a placeholder equal to 1.
    alpha: Vec<f64>,
    /// `ln alpha_bar[t]`, cumulative.
    ln_alpha_bar: Vec<f64>,
}

/// One row of the derived kernel table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub t: usize,
    pub alpha: f64,
    pub alpha_bar: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub mu_bar_plus: f64,
    pub mu_bar_minus: f64,
    pub r: f64,
    pub r_bar: f64,
}

fn clamp_alpha(a: f64) -> f64 {
    if a.is_nan() {
        ALPHA_MIN
    } else {
        a.clamp(ALPHA_MIN, ALPHA_MAX)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl DiffusionSchedule {
    fn build(kind: ScheduleKind, k: usize, raw: impl IntoIterator<Item = f64>) -> Result<Self> {
        if k < 2 {
            return input(format!("k must be at least 2, got {k}"));
        }
        let mut alpha = vec![1.0];
        alpha.extend(raw.into_iter().map(clamp_alpha));
        if alpha.len() < 2 {
            return input("schedule needs at least one step");
        }
        let mut ln_alpha_bar = Vec::with_capacity(alpha.len());
        ln_alpha_bar.push(0.0);
        for t in 1..alpha.len() {
            let prev = ln_alpha_bar[t - 1];
            ln_alpha_bar.push(prev + alpha[t].ln());
        }
        Ok(Self {
            kind,
            k,
            alpha,
            ln_alpha_bar,
        })
    }

    /// `alpha_t = 1 - decay * t / T`, clamped.
    pub fn linear(t_max: usize, k: usize, decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return input(format!("linear decay must lie in (0, 1], got {decay}"));
        }
        check_steps(t_max)?;
        let tf = t_max as f64;
        Self::build(
            ScheduleKind::Linear { decay },
            k,
            (1..=t_max).map(|t| 1.0 - decay * t as f64 / tf),
        )
    }

    /// `alpha_t = (sig(3d) - sig(3 t d / T)) / (sig(3d) - 1/2)`, clamped.
    pub fn sigmoid(t_max: usize, k: usize, decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay.is_finite()) {
            return input(format!("sigmoid decay must be positive, got {decay}"));
        }
        check_steps(t_max)?;
        let tf = t_max as f64;
        let top = sigmoid(3.0 * decay);
        Self::build(
            ScheduleKind::Sigmoid { decay },
            k,
            (1..=t_max).map(|t| (top - sigmoid(3.0 * t as f64 / tf * decay)) / (top - 0.5)),
        )
    }

    /// `alpha_bar_t = f(t) / f(0)` with `f(t) = cos^2(((t/T + s)/(1 + s)) pi/2)`.
    pub fn cosine(t_max: usize, k: usize, offset: f64) -> Result<Self> {
        if !(offset > 0.0 && offset.is_finite()) {
            return input(format!("cosine offset must be positive, got {offset}"));
        }
        check_steps(t_max)?;
        let tf = t_max as f64;
        let f = |t: usize| {
            let x = ((t as f64 / tf + offset) / (1.0 + offset)) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0);
        let bars: Vec<f64> = (0..=t_max).map(|t| f(t) / f0).collect();
        Self::build(
            ScheduleKind::Cosine { offset },
            k,
            (1..=t_max).map(|t| bars[t] / bars[t - 1]),
        )
    }

    /// Schedule from explicit per-step coefficients, clamped.
    pub fn custom(k: usize, alphas: &[f64]) -> Result<Self> {
        if alphas.iter().any(|a| !a.is_finite()) {
            return input("custom schedule contains a non-finite coefficient");
        }
        Self::build(ScheduleKind::Custom, k, alphas.iter().copied())
    }

    /// Reads a one-column CSV of coefficients (a header row is optional).
    pub fn custom_from_csv(path: &Path, k: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut alphas = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = rec.get(0).unwrap_or("");
            match field.parse::<f64>() {
                Ok(v) => alphas.push(v),
                Err(_) if i == 0 => continue,
                Err(_) => return input(format!("line {}: not a number: {field:?}", i + 1)),
            }
        }
        Self::custom(k, &alphas)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.ln_alpha_bar[t].exp()
    }

    /// `1 - alpha_bar_t`, accurate when `alpha_bar_t` is close to 1.
    pub fn one_minus_alpha_bar(&self, t: usize) -> f64 {
        -self.ln_alpha_bar[t].exp_m1()
    }

    pub fn mu_plus(&self, t: usize) -> f64 {
        (1.0 + (self.kf() - 1.0) * self.alpha[t]) / self.kf()
    }

    pub fn mu_minus(&self, t: usize) -> f64 {
        (1.0 - self.alpha[t]) / self.kf()
    }

    pub fn mu_bar_plus(&self, t: usize) -> f64 {
        (1.0 + (self.kf() - 1.0) * self.alpha_bar(t)) / self.kf()
    }

    pub fn mu_bar_minus(&self, t: usize) -> f64 {
        self.one_minus_alpha_bar(t) / self.kf()
    }

    /// One-step ratio `mu_plus / mu_minus`.
    pub fn r(&self, t: usize) -> f64 {
        self.mu_plus(t) / self.mu_minus(t)
    }

    /// `R_bar_t - 1 = k alpha_bar / (1 - alpha_bar)`; infinite at `t = 0`.
    pub fn r_bar_m1(&self, t: usize) -> f64 {
        if t == 0 {
            return f64::INFINITY;
        }
        self.kf() * self.alpha_bar(t) / self.one_minus_alpha_bar(t)
    }

    /// Cumulative ratio `mu_bar_plus / mu_bar_minus`; infinite at `t = 0`.
    pub fn r_bar(&self, t: usize) -> f64 {
        1.0 + self.r_bar_m1(t)
    }

    /// `1 / R_bar_t`; zero at `t = 0`.
    pub fn inv_r_bar(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.mu_bar_minus(t) / self.mu_bar_plus(t)
    }

    /// `ln R_bar_t`; infinite at `t = 0`.
    pub fn ln_r_bar(&self, t: usize) -> f64 {
        self.r_bar_m1(t).ln_1p()
    }

    /// `R_bar_t^2 - 1`, evaluated as `(R_bar - 1)(R_bar + 1)`.
    pub fn r_bar_sq_m1(&self, t: usize) -> f64 {
        let d = self.r_bar_m1(t);
        d * (d + 2.0)
    }

    /// `alpha_bar_{t-1} - alpha_bar_t` for `t >= 1`.
    pub fn alpha_bar_drop(&self, t: usize) -> f64 {
        self.alpha_bar(t - 1) * (1.0 - self.alpha[t])
    }

    /// `(alpha_bar_{t-1} - alpha_bar_t) / (k mu_bar_plus_t mu_bar_minus_t)`.
    pub fn drop_coefficient(&self, t: usize) -> f64 {
        self.alpha_bar_drop(t) / (self.kf() * self.mu_bar_plus(t) * self.mu_bar_minus(t))
    }

    /// `mu_plus_t (mu_bar_plus_{t-1}/mu_bar_plus_t - mu_bar_minus_{t-1}/mu_bar_minus_t)`,
    /// evaluated through the equivalent `mu_plus_t * drop_coefficient(t)`.
    pub fn a_coefficient(&self, t: usize) -> f64 {
        self.mu_plus(t) * self.drop_coefficient(t)
    }

    pub fn row(&self, t: usize) -> ScheduleRow {
        ScheduleRow {
            t,
            alpha: self.alpha(t),
            alpha_bar: self.alpha_bar(t),
            mu_plus: self.mu_plus(t),
            mu_minus: self.mu_minus(t),
            mu_bar_plus: self.mu_bar_plus(t),
            mu_bar_minus: self.mu_bar_minus(t),
            r: self.r(t),
            r_bar: self.r_bar(t),
        }
    }

    /// Derived kernel table for `t = 1..=T`.
    pub fn table(&self) -> Vec<ScheduleRow> {
        (1..=self.steps()).map(|t| self.row(t)).collect()
    }
}

fn check_steps(t_max: usize) -> Result<()> {
    if t_max == 0 {
        return input("T must be positive");
    }
    Ok(())
}
