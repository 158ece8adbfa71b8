//! Synthetic curve histories from a Nelson–Siegel factor random walk.
//!
//! `y(t) = β₀ + β₁·(1−e^{−t/τ})/(t/τ) + β₂·[(1−e^{−t/τ})/(t/τ) − e^{−t/τ}] + ε`
//!
//! Each day every factor takes a mean-reverting Gaussian step toward the centre
//! of its range and is reflected back into the range. A proposal whose
//! noiseless curve leaves the plausible band (shrunk by six noise standard
//! deviations) is rejected and the previous factors are kept. Noise `ε` is
//! i.i.d. normal per tenor.

use std::sync::Arc;

use chrono::{Datelike, NaiveDate, Weekday};

use super::history::{CurveHistory, MarketObject};
use super::tenor::TenorGrid;
use crate::error::{Error, Result};
use crate::ndmath::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsFactors {
    pub level: f64,
    pub slope: f64,
    pub curvature: f64,
    pub decay: f64,
}

/// Closed-form Nelson–Siegel yield at maturity `t` (years).
pub fn ns_yield(t: f64, f: &NsFactors) -> f64 {
    let x = t / f.decay;
    let e = (-x).exp();
    let loading = (1.0 - e) / x;
    f.level + f.slope * loading + f.curvature * (loading - e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelsonSiegelParams {
    pub level_range: (f64, f64),
    pub slope_range: (f64, f64),
    pub curvature_range: (f64, f64),
    pub decay_range: (f64, f64),
    pub level_step: f64,
    pub slope_step: f64,
    pub curvature_step: f64,
    pub decay_step: f64,
    /// Fraction of the distance to the range centre closed per step.
    pub mean_reversion: f64,
    pub noise_std: f64,
    pub plausible_range: (f64, f64),
    /// Starting factors; drawn uniformly (and plausibly) when `None`.
    pub initial: Option<NsFactors>,
    pub start_date: NaiveDate,
}

impl Default for NelsonSiegelParams {
    fn default() -> Self {
        Self {
            level_range: (0.005, 0.06),
            slope_range: (-0.03, 0.03),
            curvature_range: (-0.04, 0.04),
            decay_range: (0.5, 3.0),
            level_step: 0.0015,
            slope_step: 0.0012,
            curvature_step: 0.0015,
            decay_step: 0.04,
            mean_reversion: 0.02,
            noise_std: 0.00002,
            plausible_range: (-0.01, 0.12),
            initial: None,
            start_date: NaiveDate::from_ymd_opt(2001, 1, 2).expect("valid date"),
        }
    }
}

impl NelsonSiegelParams {
    fn validate(&self) -> Result<()> {
        let ranges = [
            ("level", self.level_range),
            ("slope", self.slope_range),
            ("curvature", self.curvature_range),
            ("decay", self.decay_range),
            ("plausible", self.plausible_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if !(self.decay_range.0 > 0.0) {
            return Err(Error::InvalidConfig("decay must be positive".into()));
        }
        let steps = [
            self.level_step,
            self.slope_step,
            self.curvature_step,
            self.decay_step,
            self.noise_std,
        ];
        if steps.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("step sizes and noise must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.mean_reversion) {
            return Err(Error::InvalidConfig("mean reversion must lie in [0, 1]".into()));
        }
        if let Some(f) = &self.initial {
            let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
            if !(inside(f.level, self.level_range)
                && inside(f.slope, self.slope_range)
                && inside(f.curvature, self.curvature_range)
                && inside(f.decay, self.decay_range))
            {
                return Err(Error::InvalidConfig("initial factors outside their ranges".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticHistory {
    pub history: CurveHistory,
    /// Factors used for each date, in order.
    pub factors: Vec<NsFactors>,
}

fn reflect(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi <= lo {
        return lo;
    }
    let mut v = v;
    for _ in 0..4 {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            break;
        }
    }
    v.clamp(lo, hi)
}

fn mid((lo, hi): (f64, f64)) -> f64 {
    0.5 * (lo + hi)
}

/// Weekday dates starting at `start` (or the next weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

pub fn generate_synthetic_history(
    grid: &Arc<TenorGrid>,
    params: &NelsonSiegelParams,
    n: usize,
    rng: &mut Rng,
) -> Result<SyntheticHistory> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one curve".into()));
    }
    params.validate()?;
    let ts = grid.year_fractions();
    let margin = 6.0 * params.noise_std;
    let (plo, phi) = (params.plausible_range.0 + margin, params.plausible_range.1 - margin);
    let plausible = |f: &NsFactors| {
        ts.iter().all(|&t| {
            let y = ns_yield(t, f);
            y >= plo && y <= phi
        })
    };

    let mut f = match params.initial {
        Some(f) => f,
        None => {
            let mut found = None;
            for _ in 0..10_000 {
                let cand = NsFactors {
                    level: rng.uniform_in(params.level_range.0, params.level_range.1),
                    slope: rng.uniform_in(params.slope_range.0, params.slope_range.1),
                    curvature: rng.uniform_in(params.curvature_range.0, params.curvature_range.1),
                    decay: rng.uniform_in(params.decay_range.0, params.decay_range.1),
                };
                if plausible(&cand) {
                    found = Some(cand);
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::InvalidConfig("no plausible starting factors within the ranges".into())
            })?
        }
    };

    let dates = business_days(params.start_date, n);
    let k = params.mean_reversion;
    let mut factors = Vec::with_capacity(n);
    let mut objects = Vec::with_capacity(n);
    for (i, date) in dates.into_iter().enumerate() {
        if i > 0 {
            let step = |v: f64, range: (f64, f64), s: f64, rng: &mut Rng| {
                reflect(v + k * (mid(range) - v) + s * rng.normal(), range)
            };
            let cand = NsFactors {
                level: step(f.level, params.level_range, params.level_step, rng),
                slope: step(f.slope, params.slope_range, params.slope_step, rng),
                curvature: step(f.curvature, params.curvature_range, params.curvature_step, rng),
                decay: step(f.decay, params.decay_range, params.decay_step, rng),
            };
            if plausible(&cand) {
                f = cand;
            }
        }
        let values: Vec<f64> = ts
            .iter()
            .map(|&t| ns_yield(t, &f) + params.noise_std * rng.normal())
            .collect();
        factors.push(f);
        objects.push(MarketObject::new(grid.clone(), values, Some(date))?);
    }
    Ok(SyntheticHistory {
        history: CurveHistory::new(grid.clone(), objects)?,
        factors,
    })
}
