//! Quadrature of flatness defects over symmetric windows
//! `(-b, -a) U (a, b)`.
//!
//! Every sum treated here has `|P(-tau)| = |P(tau)|`, so only the positive
//! half is sampled and the result is doubled.

use serde::{Deserialize, Serialize};

use crate::dd::fixed_sum;
use crate::error::{invalid, Error, Result};
use crate::expsum::{Axis, ExpSum1D, ExpSum2D, Guard};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub a: f64,
    pub b: f64,
}

impl Window {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let w = Self { a, b };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < self.b && self.b.is_finite()) {
            return Err(invalid(format!("window needs 0 < a < b, got a = {}, b = {}", self.a, self.b)));
        }
        Ok(())
    }

    /// Lebesgue measure of both halves.
    pub fn measure(&self) -> f64 {
        2.0 * (self.b - self.a)
    }

    pub fn contains(&self, tau: f64) -> bool {
        let t = tau.abs();
        t > self.a && t < self.b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct QuadratureConfig {
    /// Largest accepted change of any defect under one halving of the step.
    pub eps_quadrature: f64,
    pub max_refinements: usize,
    /// Fewest cells on the coarsest grid.
    #[serde(default = "default_min_cells")]
    pub min_cells: usize,
}

fn default_min_cells() -> usize {
    64
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { eps_quadrature: 1e-3, max_refinements: 6, min_cells: default_min_cells() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlatnessReport {
    /// `|| |P| - 1 ||_1` over the window.
    pub l1_defect: f64,
    /// `|| |P|^2 - 1 ||_1` over the window.
    pub l1_square_defect: f64,
    /// `|| |P| - 1 ||_2` over the window.
    pub l2_defect: f64,
    /// Largest sampled `|P|`.
    pub sup_bound: f64,
    pub grid_step: f64,
    /// Largest change of a defect between the last two grids.
    pub refinement_error: f64,
}

struct Defects {
    l1: f64,
    l1_sq: f64,
    l2_sq: f64,
    sup: f64,
}

impl Defects {
    fn from_abs(abs: &[f64], weight: f64) -> Self {
        let d1: Vec<f64> = abs.iter().map(|v| (v - 1.0).abs()).collect();
        let d2: Vec<f64> = abs.iter().map(|v| (v * v - 1.0).abs()).collect();
        let dd: Vec<f64> = d1.iter().map(|v| v * v).collect();
        Self {
            l1: weight * fixed_sum(&d1),
            l1_sq: weight * fixed_sum(&d2),
            l2_sq: weight * fixed_sum(&dd),
            sup: abs.iter().copied().fold(0.0, f64::max),
        }
    }

    fn distance(&self, o: &Defects) -> f64 {
        (self.l1 - o.l1)
            .abs()
            .max((self.l1_sq - o.l1_sq).abs())
            .max((self.l2_sq.sqrt() - o.l2_sq.sqrt()).abs())
    }
}

/// Runs the halving loop. `measure(cells)` returns defects on a grid with
/// `cells` cells per unit of the base count.
fn refine(
    base_cells: usize,
    span: f64,
    cfg: &QuadratureConfig,
    measure: impl Fn(usize) -> Result<Defects>,
) -> Result<FlatnessReport> {
    let mut n = base_cells.max(cfg.min_cells).max(1);
    let mut coarse = measure(n)?;
    let mut error = f64::INFINITY;
    for _ in 0..=cfg.max_refinements {
        let fine = measure(2 * n)?;
        error = coarse.distance(&fine);
        if error <= cfg.eps_quadrature {
            return Ok(FlatnessReport {
                l1_defect: fine.l1,
                l1_square_defect: fine.l1_sq,
                l2_defect: fine.l2_sq.sqrt(),
                sup_bound: coarse.sup.max(fine.sup),
                grid_step: span / (2 * n) as f64,
                refinement_error: error,
            });
        }
        coarse = fine;
        n *= 2;
    }
    Err(Error::QuadratureNotConverged { error, tolerance: cfg.eps_quadrature })
}

fn nyquist_cells(span: f64, step: f64) -> usize {
    if step.is_finite() {
        (span / step).ceil() as usize
    } else {
        1
    }
}

pub fn measure_flatness(s: &ExpSum1D, g: &Window, cfg: &QuadratureConfig) -> Result<FlatnessReport> {
    g.validate()?;
    let span = g.b - g.a;
    refine(nyquist_cells(span, s.nyquist_step()), span, cfg, |n| {
        let axis = Axis::midpoints(g.a, g.b, n)?;
        let abs = s.abs_grid(&axis, Guard::Enforce)?;
        Ok(Defects::from_abs(&abs, 2.0 * axis.step))
    })
}

/// `int_lo^hi |P|` with the same refinement rule as the defects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Integral {
    pub value: f64,
    pub grid_step: f64,
    pub refinement_error: f64,
}

pub fn integrate_abs(s: &ExpSum1D, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<Integral> {
    if !(hi > lo) {
        return Err(invalid(format!("empty interval ({lo}, {hi})")));
    }
    let span = hi - lo;
    let mut n = nyquist_cells(span, s.nyquist_step()).max(cfg.min_cells).max(1);
    let eval = |n: usize| -> Result<f64> {
        let axis = Axis::midpoints(lo, hi, n)?;
        Ok(fixed_sum(&s.abs_grid(&axis, Guard::Enforce)?) * axis.step)
    };
    let mut coarse = eval(n)?;
    let mut error = f64::INFINITY;
    for _ in 0..=cfg.max_refinements {
        let fine = eval(2 * n)?;
        error = (fine - coarse).abs();
        if error <= cfg.eps_quadrature {
            return Ok(Integral { value: fine, grid_step: span / (2 * n) as f64, refinement_error: error });
        }
        coarse = fine;
        n *= 2;
    }
    Err(Error::QuadratureNotConverged { error, tolerance: cfg.eps_quadrature })
}

/// `|| P ||_1` over `(-a, a)`.
pub fn measure_near_zero(s: &ExpSum1D, a: f64, cfg: &QuadratureConfig) -> Result<Integral> {
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid(format!("near-zero radius must lie in (0, 1), got {a}")));
    }
    let half = integrate_abs(s, 0.0, a, cfg)?;
    Ok(Integral { value: 2.0 * half.value, refinement_error: 2.0 * half.refinement_error, ..half })
}

/// Defects of a planar sum over `G x G`.
pub fn measure_flatness_2d(s: &ExpSum2D, g: &Window, cfg: &QuadratureConfig) -> Result<FlatnessReport> {
    g.validate()?;
    let span = g.b - g.a;
    let lim = s.nyquist_steps();
    let base = nyquist_cells(span, lim[0].min(lim[1]));
    // |P(-tau)| = |P(tau)| always; an identity frame is also even per axis.
    let quadrants: Vec<((f64, f64), f64)> = if s.frame.is_identity() {
        vec![((g.a, g.b), 4.0)]
    } else {
        vec![((g.a, g.b), 2.0), ((-g.b, -g.a), 2.0)]
    };
    refine(base, span, cfg, |n| {
        let ax = Axis::midpoints(g.a, g.b, n)?;
        let mut total = Defects { l1: 0.0, l1_sq: 0.0, l2_sq: 0.0, sup: 0.0 };
        for &((lo, hi), mult) in &quadrants {
            let ay = Axis::midpoints(lo, hi, n)?;
            let d = s.eval_grid(&ax, &ay, Guard::Enforce)?;
            let abs: Vec<f64> = d.values.iter().map(|v| v.sqrt()).collect();
            let part = Defects::from_abs(&abs, mult * ax.step * ay.step);
            total.l1 += part.l1;
            total.l1_sq += part.l1_sq;
            total.l2_sq += part.l2_sq;
            total.sup = total.sup.max(part.sup);
        }
        Ok(total)
    })
}
