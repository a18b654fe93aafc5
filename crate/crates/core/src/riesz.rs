//! Generalized Riesz products: running products of nonnegative multipliers
//! on a window, with the bookkeeping that certifies their convergence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dd::fixed_sum;
use crate::error::{invalid, Error, Result};
use crate::expsum::{Axis, SampledDensity};
use crate::flatness::Window;
use crate::io;

/// Per-stage quantities of the convergence lemma.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    /// Supremum of the multiplier, at least 1.
    #[serde(rename = "Mn")]
    pub sup: f64,
    /// `L^1` distance of the multiplier from 1 on the window.
    #[serde(rename = "epsN")]
    pub eps: f64,
    /// `sqrt(eps_n * M_1 * ... * M_n)`.
    #[serde(rename = "alphaN")]
    pub alpha: f64,
}

/// Diagnostics from per-stage distances and suprema.
pub fn diagnostics_sequence(eps: &[f64], sups: &[f64]) -> Result<Vec<StageDiagnostics>> {
    if eps.len() != sups.len() {
        return Err(Error::ShapeMismatch(format!("{} distances but {} suprema", eps.len(), sups.len())));
    }
    let mut prod = 1.0;
    eps.iter()
        .zip(sups)
        .map(|(&e, &m)| {
            if !(e >= 0.0) || !(m >= 1.0) {
                return Err(invalid(format!("need eps >= 0 and M >= 1, got {e} and {m}")));
            }
            prod *= m;
            Ok(StageDiagnostics { sup: m, eps: e, alpha: (e * prod).sqrt() })
        })
        .collect()
}

/// Midpoint grid on the positive half `(a, b)` of a window.
pub fn window_axis(g: &Window, cells: usize) -> Result<Axis> {
    g.validate()?;
    Axis::midpoints(g.a, g.b, cells)
}

/// A running product on the positive half of a window.
///
/// All densities handled here are even in `tau`, so window integrals are
/// twice the positive-half integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct RieszState {
    pub window: Window,
    pub density: SampledDensity,
    pub stages: Vec<StageDiagnostics>,
    /// Running value of `prod (1 + alpha_n)`.
    pub pi0: f64,
    /// Running Chebyshev bound on the set where some multiplier strays from
    /// 1 by more than its `alpha_n`.
    pub exceptional_mass: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct Checkpoint {
    window: Window,
    axis: Axis,
    stages: Vec<StageDiagnostics>,
    pi0: f64,
    exceptional_mass: f64,
}

impl RieszState {
    pub fn new(window: Window, density: SampledDensity) -> Result<Self> {
        window.validate()?;
        let [ax] = density.axes.as_slice() else {
            return Err(Error::ShapeMismatch("a window density is one-dimensional".into()));
        };
        let lo = ax.origin - 0.5 * ax.step;
        let hi = lo + ax.count as f64 * ax.step;
        let tol = 1e-9 * window.b;
        if (lo - window.a).abs() > tol || (hi - window.b).abs() > tol {
            return Err(Error::GridMismatch);
        }
        Ok(Self { window, density, stages: Vec::new(), pi0: 1.0, exceptional_mass: 0.0 })
    }

    /// State with constant density 1.
    pub fn unit(window: Window, cells: usize) -> Result<Self> {
        let ax = window_axis(&window, cells)?;
        Self::new(window, SampledDensity::constant(vec![ax], 1.0)?)
    }

    pub fn axis(&self) -> &Axis {
        &self.density.axes[0]
    }

    /// Multiplies in the next stage and records its diagnostics.
    pub fn accumulate(&mut self, multiplier: &SampledDensity) -> Result<StageDiagnostics> {
        if !self.density.same_grid(multiplier) {
            return Err(Error::GridMismatch);
        }
        let step = self.axis().step;
        let dev: Vec<f64> = multiplier.values.iter().map(|v| (v - 1.0).abs()).collect();
        let eps = 2.0 * step * fixed_sum(&dev);
        let sup = multiplier.max().max(1.0);
        let prev = self.stages.iter().map(|s| s.sup).product::<f64>();
        let alpha = (eps * prev * sup).sqrt();
        let diag = StageDiagnostics { sup, eps, alpha };
        for (d, m) in self.density.values.iter_mut().zip(&multiplier.values) {
            *d *= m;
        }
        self.pi0 *= 1.0 + alpha;
        if alpha > 0.0 {
            self.exceptional_mass += eps / alpha;
        }
        self.stages.push(diag);
        Ok(diag)
    }

    /// Integral of the current density over the whole window.
    pub fn window_mass(&self) -> WindowMass {
        WindowMass { inner: self.window.a, outer: self.window.b, mass: 2.0 * self.density.integral() }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::write_density_csv(&dir.join("density.csv"), &self.density)?;
        let cp = Checkpoint {
            window: self.window,
            axis: *self.axis(),
            stages: self.stages.clone(),
            pi0: self.pi0,
            exceptional_mass: self.exceptional_mass,
        };
        io::write_json(&dir.join("state.json"), &cp)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(&fs::read_to_string(dir.join("state.json"))?)?;
        let values = io::read_density_values(&dir.join("density.csv"))?;
        let density = SampledDensity::line(cp.axis, values)?;
        let mut s = Self::new(cp.window, density)?;
        s.stages = cp.stages;
        s.pi0 = cp.pi0;
        s.exceptional_mass = cp.exceptional_mass;
        Ok(s)
    }
}

/// Measure of window cells where some multiplier deviates from 1 by more
/// than its stage's `alpha_n`.
pub fn deviation_set_measure(multipliers: &[SampledDensity], stages: &[StageDiagnostics]) -> Result<f64> {
    let Some(first) = multipliers.first() else {
        return Ok(0.0);
    };
    if multipliers.len() != stages.len() || multipliers.iter().any(|m| !m.same_grid(first)) {
        return Err(Error::GridMismatch);
    }
    let n = first.values.len();
    let bad = (0..n)
        .filter(|&i| multipliers.iter().zip(stages).any(|(m, s)| (m.values[i] - 1.0).abs() > s.alpha))
        .count();
    Ok(2.0 * bad as f64 * first.cell_measure())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SummabilityCaps {
    pub max_alpha_sum: f64,
    pub max_exceptional_sum: f64,
}

impl Default for SummabilityCaps {
    fn default() -> Self {
        Self { max_alpha_sum: 1.0, max_exceptional_sum: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    pub alpha_sum: f64,
    /// `sum eps_n / alpha_n` over stages with `alpha_n > 0`.
    pub exceptional_sum: f64,
    pub pi0: f64,
    /// `pi0 * sum alpha_n`, a bound on the integral of the majorant.
    pub majorant_integral: f64,
    pub certified: bool,
}

pub fn check_summability(stages: &[StageDiagnostics], caps: &SummabilityCaps) -> Certificate {
    let alpha_sum: f64 = stages.iter().map(|s| s.alpha).sum();
    let exceptional_sum: f64 = stages.iter().filter(|s| s.alpha > 0.0).map(|s| s.eps / s.alpha).sum();
    let pi0: f64 = stages.iter().map(|s| 1.0 + s.alpha).product();
    Certificate {
        alpha_sum,
        exceptional_sum,
        pi0,
        majorant_integral: pi0 * alpha_sum,
        certified: alpha_sum.is_finite()
            && alpha_sum <= caps.max_alpha_sum
            && exceptional_sum <= caps.max_exceptional_sum,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RateBound {
    /// `sum alpha_n`.
    pub eps0: f64,
    /// Lower bound for the measure of the good set inside the window.
    pub measure_bound: f64,
    /// `pi0 - 1`, the uniform bound on the relative deviation there.
    pub deviation_bound: f64,
    /// `exp(eps0) - 1`, which dominates `pi0 - 1`.
    pub exp_bound: f64,
    /// Whether `pi0 - 1 < 3 eps0`; only claimed when `eps0 < 1`.
    pub rate_holds: bool,
}

pub fn convergence_rate_bound(stages: &[StageDiagnostics], window: &Window) -> RateBound {
    let eps0: f64 = stages.iter().map(|s| s.alpha).sum();
    let pi0: f64 = stages.iter().map(|s| 1.0 + s.alpha).product();
    RateBound {
        eps0,
        // The exceptional set takes at most eps0 from each half.
        measure_bound: (window.measure() - 2.0 * eps0).max(0.0),
        deviation_bound: pi0 - 1.0,
        exp_bound: eps0.exp_m1(),
        rate_holds: eps0 < 1.0 && pi0 - 1.0 < 3.0 * eps0,
    }
}

/// The multiplier that is 1, then 0, then 2 on the dyadic pieces
/// `[0, 1 - 2^-n)`, `[1 - 2^-n, 1 - 2^-(n+1))`, `[1 - 2^-(n+1), 1)`,
/// sampled on `2^bits` midpoint cells of `[0, 1]`.
pub fn counterexample_multiplier(n: u32, bits: u32) -> Result<SampledDensity> {
    if bits < n + 1 || bits > 30 {
        return Err(invalid(format!("need n + 1 <= bits <= 30, got n = {n}, bits = {bits}")));
    }
    let cells = 1usize << bits;
    let zero_from = cells - (cells >> n);
    let two_from = cells - (cells >> (n + 1));
    let values = (0..cells)
        .map(|i| if i < zero_from { 1.0 } else if i < two_from { 0.0 } else { 2.0 })
        .collect();
    SampledDensity::line(Axis::midpoints(0.0, 1.0, cells)?, values)
}

/// Product of the first `n_max + 1` counterexample multipliers, on the
/// coarsest grid that resolves all of them. Each factor has `L^1` distance
/// `2^-n` from 1, yet the product piles all its mass next to 1.
pub fn counterexample_product(n_max: u32) -> Result<SampledDensity> {
    let bits = n_max + 2;
    let mut acc = counterexample_multiplier(0, bits)?;
    for n in 1..=n_max {
        let q = counterexample_multiplier(n, bits)?;
        for (a, b) in acc.values.iter_mut().zip(&q.values) {
            *a *= b;
        }
    }
    Ok(acc)
}

/// Mass of a density inside a region bounded away from a point, recorded
/// as the region's inner and outer distance to that point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowMass {
    pub inner: f64,
    pub outer: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AtomReport {
    pub windows: Vec<WindowMass>,
    /// Mass not captured by the window closest to the point.
    pub atom_estimate: f64,
    /// Whether that window reaches within `zero_radius` of the point.
    pub resolved: bool,
}

/// Estimates how much of a unit mass sits at the point the windows exclude.
pub fn detect_atom(windows: &[WindowMass], zero_radius: f64) -> Result<AtomReport> {
    let last = windows.iter().min_by(|a, b| a.inner.total_cmp(&b.inner)).ok_or_else(|| invalid("no windows"))?;
    Ok(AtomReport {
        windows: windows.to_vec(),
        atom_estimate: 1.0 - last.mass,
        resolved: last.inner <= zero_radius,
    })
}

/// Empirical covariance of two multipliers around 1.
pub fn stage_covariance(a: &SampledDensity, b: &SampledDensity) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    let prods: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| (x - 1.0) * (y - 1.0)).collect();
    Ok(fixed_sum(&prods) / prods.len() as f64)
}

/// Spectral density of the normalized indicator of `[0, h]`:
/// `sin^2(pi tau h) / (h (pi tau)^2)`.
pub fn indicator_seed(h: f64, axis: &Axis) -> Result<SampledDensity> {
    let values = axis
        .points()
        .map(|t| {
            let x = std::f64::consts::PI * t;
            if x == 0.0 {
                h
            } else {
                (x * h).sin().powi(2) / (h * x * x)
            }
        })
        .collect();
    SampledDensity::line(*axis, values)
}
