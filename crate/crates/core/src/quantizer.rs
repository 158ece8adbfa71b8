//! Latent quantization: replace an encoding by the latent point whose decoding
//! best matches the layer's anchor values,
//!
//! ```text
//! z_q = argmin_z Σ_{i∈𝒜} w_i (x_i − Dec(z)_i)²      (w_i = 1 unless weighted)
//! ```
//!
//! Gradient descent through the decoder with a backtracking line search,
//! optionally followed by Nelder–Mead. A coarse lattice scan seeds a second
//! local search when it finds a better basin. The search is deterministic and
//! the returned point is never worse than the warm start.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::ndmath::{all_finite, axpy, norm, sub};
use crate::vae::VaeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantizeMethod {
    Gradient,
    NelderMead,
    #[default]
    Auto,
}

impl std::str::FromStr for QuantizeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gradient" => Ok(Self::Gradient),
            "nelder_mead" => Ok(Self::NelderMead),
            "auto" => Ok(Self::Auto),
            other => Err(Error::InvalidConfig(format!(
                "unknown quantize method '{other}' (expected gradient, nelder_mead or auto)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantizeConfig {
    pub max_iters: usize,
    /// Improvements below this count as stalled.
    pub tolerance: f64,
    pub step_size: f64,
    pub method: QuantizeMethod,
    /// Steps leaving the ball of this radius (or of `‖z0‖`, if larger) are
    /// rejected. `None` disables the bound.
    pub latent_bound: Option<f64>,
    pub patience: usize,
    pub max_halvings: usize,
    /// Edge length of the initial Nelder–Mead simplex.
    pub simplex_size: f64,
    /// Number of points in the lattice over `[-scan_extent, scan_extent]^d`
    /// scanned for a second starting point, split evenly across axes. `None`
    /// searches from the warm start only.
    pub scan_points: Option<usize>,
    pub scan_extent: f64,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-10,
            step_size: 0.05,
            method: QuantizeMethod::Auto,
            latent_bound: Some(6.0),
            patience: 25,
            max_halvings: 20,
            simplex_size: 0.25,
            scan_points: Some(4096),
            scan_extent: 4.0,
        }
    }
}

impl QuantizeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.tolerance) && positive(self.step_size) && positive(self.simplex_size)) {
            return Err(Error::InvalidConfig(
                "tolerance, step_size and simplex_size must be positive".into(),
            ));
        }
        if self.scan_points.is_some_and(|n| n < 2) || !positive(self.scan_extent) {
            return Err(Error::InvalidConfig(
                "scan_points must be at least 2 and scan_extent positive".into(),
            ));
        }
        if self.latent_bound.is_some_and(|b| !positive(b)) {
            return Err(Error::InvalidConfig("latent bound must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeResult {
    pub z_q: Vec<f64>,
    pub anchor_error_before: f64,
    pub anchor_error_after: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Objective<'a> {
    model: &'a VaeModel,
    x: &'a [f64],
    anchors: &'a [usize],
    weights: Option<&'a [f64]>,
    radius: Option<f64>,
}

impl Objective<'_> {
    fn weight(&self, k: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[k])
    }

    fn value(&self, z: &[f64]) -> Result<f64> {
        let x_hat = self.model.decode(z)?;
        if !all_finite(&x_hat) {
            return Err(Error::NonFinite("decoder output during quantization".into()));
        }
        Ok(self
            .anchors
            .iter()
            .enumerate()
            .map(|(k, &i)| self.weight(k) * (self.x[i] - x_hat[i]).powi(2))
            .sum())
    }

    /// Objective, or `None` outside the admissible ball.
    fn bounded(&self, z: &[f64]) -> Result<Option<f64>> {
        if self.radius.is_some_and(|r| norm(z) > r) {
            return Ok(None);
        }
        self.value(z).map(Some)
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let cache = self.model.decode_with_cache(z)?;
        let x_hat = cache.output();
        let mut d_out = vec![0.0; x_hat.len()];
        for (k, &i) in self.anchors.iter().enumerate() {
            d_out[i] += 2.0 * self.weight(k) * (x_hat[i] - self.x[i]);
        }
        self.model.decoder().input_gradient(&cache, &d_out)
    }
}

fn check_anchors(model: &VaeModel, x: &[f64], anchors: &[usize], weights: Option<&[f64]>) -> Result<()> {
    ensure_len("quantize input", model.input_dim(), x.len())?;
    if anchors.is_empty() {
        return Err(Error::InvalidConfig("anchor set is empty".into()));
    }
    if let Some(&bad) = anchors.iter().find(|&&i| i >= x.len()) {
        return Err(Error::OutOfRange(format!("anchor index {bad} outside curve of {}", x.len())));
    }
    if let Some(w) = weights {
        ensure_len("anchor weights", anchors.len(), w.len())?;
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("anchor weights must be finite and non-negative".into()));
        }
    }
    Ok(())
}

/// `Σ_{i∈𝒜} (x_i − Dec(z)_i)²`
pub fn anchor_objective(model: &VaeModel, z: &[f64], x: &[f64], anchors: &[usize]) -> Result<f64> {
    check_anchors(model, x, anchors, None)?;
    ensure_len("latent", model.latent_dim(), z.len())?;
    Objective {
        model,
        x,
        anchors,
        weights: None,
        radius: None,
    }
    .value(z)
}

/// Gradient of [`anchor_objective`] with respect to `z`.
pub fn latent_gradient(model: &VaeModel, z: &[f64], x: &[f64], anchors: &[usize]) -> Result<Vec<f64>> {
    check_anchors(model, x, anchors, None)?;
    ensure_len("latent", model.latent_dim(), z.len())?;
    Objective {
        model,
        x,
        anchors,
        weights: None,
        radius: None,
    }
    .gradient(z)
}

pub fn quantize(
    model: &VaeModel,
    x: &[f64],
    anchors: &[usize],
    config: &QuantizeConfig,
    z0: &[f64],
) -> Result<QuantizeResult> {
    quantize_weighted(model, x, anchors, None, config, z0)
}

/// [`quantize`] with per-anchor weights `w_i` (aligned with `anchors`).
pub fn quantize_weighted(
    model: &VaeModel,
    x: &[f64],
    anchors: &[usize],
    weights: Option<&[f64]>,
    config: &QuantizeConfig,
    z0: &[f64],
) -> Result<QuantizeResult> {
    config.validate()?;
    check_anchors(model, x, anchors, weights)?;
    ensure_len("warm start", model.latent_dim(), z0.len())?;
    if !all_finite(z0) {
        return Err(Error::NonFinite("warm start latent".into()));
    }
    let obj = Objective {
        model,
        x,
        anchors,
        weights,
        radius: config.latent_bound.map(|b| b.max(norm(z0))),
    };
    let f0 = obj.value(z0)?;
    let start = Search {
        z: z0.to_vec(),
        f: f0,
        iterations: 0,
        converged: false,
    };
    let mut found = local_search(&obj, start, config)?;
    if let (Some(points), true) = (config.scan_points, config.max_iters > 0) {
        if let Some((z, f)) = lattice_minimum(&obj, points, config.scan_extent)? {
            if f < found.f {
                let used = found.iterations;
                let seeded = Search {
                    z,
                    f,
                    iterations: 0,
                    converged: false,
                };
                let mut other = local_search(&obj, seeded, config)?;
                other.iterations += used;
                if other.f < found.f {
                    found = other;
                } else {
                    found.iterations = other.iterations;
                }
            }
        }
    }
    Ok(QuantizeResult {
        z_q: found.z,
        anchor_error_before: f0,
        anchor_error_after: found.f,
        iterations: found.iterations,
        converged: found.converged,
    })
}

/// Quantizes from the encoder mean and decodes. Returns `(Dec(z_q), result)`.
pub fn reconstruct_quantized(
    model: &VaeModel,
    x: &[f64],
    anchors: &[usize],
    config: &QuantizeConfig,
) -> Result<(Vec<f64>, QuantizeResult)> {
    let (mu, _) = model.encode(x)?;
    let r = quantize(model, x, anchors, config, &mu)?;
    Ok((model.decode(&r.z_q)?, r))
}

fn local_search(obj: &Objective, start: Search, config: &QuantizeConfig) -> Result<Search> {
    match config.method {
        QuantizeMethod::Gradient => gradient_descent(obj, start, config),
        QuantizeMethod::NelderMead => nelder_mead(obj, start, config),
        QuantizeMethod::Auto => {
            let gd = gradient_descent(obj, start, config)?;
            if gd.converged || config.max_iters == 0 {
                Ok(gd)
            } else {
                let used = gd.iterations;
                let mut nm = nelder_mead(obj, gd, config)?;
                nm.iterations += used;
                Ok(nm)
            }
        }
    }
}

/// Best admissible point of a regular lattice on `[-extent, extent]^d` with
/// at most `points` nodes.
fn lattice_minimum(obj: &Objective, points: usize, extent: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let d = obj.model.latent_dim();
    let mut per_axis = (points as f64).powf(1.0 / d as f64).floor().max(2.0) as usize;
    while per_axis > 2 && per_axis.checked_pow(d as u32).is_none_or(|t| t > points) {
        per_axis -= 1;
    }
    let step = 2.0 * extent / (per_axis - 1) as f64;
    let total = per_axis.pow(d as u32);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut z = vec![0.0; d];
    for mut n in 0..total {
        for c in z.iter_mut().rev() {
            *c = -extent + step * (n % per_axis) as f64;
            n /= per_axis;
        }
        if let Some(f) = obj.bounded(&z)? {
            if best.as_ref().is_none_or(|(_, b)| f < *b) {
                best = Some((z.clone(), f));
            }
        }
    }
    Ok(best)
}

struct Search {
    z: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn gradient_descent(obj: &Objective, mut s: Search, config: &QuantizeConfig) -> Result<Search> {
    let mut step = config.step_size;
    let mut stalled = 0;
    while s.iterations < config.max_iters {
        let g = obj.gradient(&s.z)?;
        if g.iter().all(|v| *v == 0.0) {
            s.converged = true;
            break;
        }
        let mut trial = step;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let cand: Vec<f64> = s.z.iter().zip(&g).map(|(z, d)| z - trial * d).collect();
            if let Some(f) = obj.bounded(&cand)? {
                if f < s.f {
                    accepted = Some((cand, f));
                    break;
                }
            }
            trial *= 0.5;
        }
        s.iterations += 1;
        let Some((z, f)) = accepted else {
            break;
        };
        let gain = s.f - f;
        s.z = z;
        s.f = f;
        step = 2.0 * trial;
        if gain < config.tolerance {
            stalled += 1;
            if stalled >= config.patience {
                s.converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(s)
}

fn nelder_mead(obj: &Objective, s: Search, config: &QuantizeConfig) -> Result<Search> {
    let d = s.z.len();
    let eval = |z: &[f64]| -> Result<f64> { Ok(obj.bounded(z)?.unwrap_or(f64::INFINITY)) };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((s.z.clone(), s.f));
    for i in 0..d {
        let mut v = s.z.clone();
        v[i] += config.simplex_size;
        let f = eval(&v)?;
        simplex.push((v, f));
    }
    let mut iterations = 0;
    let mut converged = false;
    let order = |sx: &mut Vec<(Vec<f64>, f64)>| sx.sort_by(|a, b| a.1.total_cmp(&b.1));
    while iterations < config.max_iters {
        order(&mut simplex);
        let spread = simplex[d].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| norm(&sub(v, &simplex[0].0)))
            .fold(0.0, f64::max);
        if spread < config.tolerance && diameter < 1e-8 {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; d];
        for (v, _) in &simplex[..d] {
            axpy(1.0 / d as f64, v, &mut centroid);
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe)?;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(0.5);
                let fc = eval(&xc)?;
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc)?;
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (v, f) in simplex.iter_mut().skip(1) {
                    for (vi, bi) in v.iter_mut().zip(&best) {
                        *vi = bi + 0.5 * (*vi - bi);
                    }
                    *f = eval(v)?;
                }
            }
        }
    }
    order(&mut simplex);
    let (z, f) = simplex.swap_remove(0);
    Ok(if f < s.f {
        Search {
            z,
            f,
            iterations,
            converged,
        }
    } else {
        Search {
            iterations,
            converged,
            ..s
        }
    })
}
