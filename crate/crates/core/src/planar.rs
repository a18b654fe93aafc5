//! Planar products: cross-shaped strips where a stage is not flat, their
//! pairwise intersections, and the classification of the plane into
//! multiply-covered, limit-line and free regions.

use std::path::Path;

use serde::Serialize;

use crate::dd::{fixed_sum, Accumulator};
use crate::error::{invalid, Error, Result};
use crate::expsum::{ExpSum2D, Guard, SampledDensity};
use crate::flatness::{integrate_abs, QuadratureConfig};
use crate::io::{self, Normalization, Scale};
use crate::mat2::Mat2;
use crate::riesz::StageDiagnostics;

/// The cross `{|u_2| <= a, |u_1| <= b} U {|u_1| <= a, |u_2| <= b}` in the
/// coordinates `u = frame * tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StripSet {
    pub a: f64,
    pub b: f64,
    pub frame: Mat2,
}

impl StripSet {
    pub fn new(a: f64, b: f64, frame: Mat2) -> Result<Self> {
        if !(a > 0.0 && a < b) || frame.inverse().is_none() {
            return Err(invalid(format!("strip needs 0 < a < b and an invertible frame (a = {a}, b = {b})")));
        }
        Ok(Self { a, b, frame })
    }

    /// The strip of a planar stage: its frame is the stage's evaluation map.
    pub fn for_stage(stage: &ExpSum2D, a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, stage.frame.transpose())
    }

    pub fn contains(&self, tau: [f64; 2]) -> bool {
        let [u1, u2] = self.frame.apply(tau);
        (u1.abs() <= self.b && u2.abs() <= self.a) || (u1.abs() <= self.a && u2.abs() <= self.b)
    }

    /// The two arms as `(slab normal, half-width)` pairs: `(thin, long)`.
    fn arms(&self) -> [[([f64; 2], f64); 2]; 2] {
        let r1 = self.frame.row(0);
        let r2 = self.frame.row(1);
        [[(r2, self.a), (r1, self.b)], [(r1, self.a), (r2, self.b)]]
    }
}

type Polygon = Vec<[f64; 2]>;

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Keeps the part of a convex polygon where `n . x <= c`.
fn clip(poly: &Polygon, n: [f64; 2], c: f64) -> Polygon {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let dp = dot(n, p) - c;
        let dq = dot(n, q) - c;
        if dp <= 0.0 {
            out.push(p);
        }
        if (dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0) {
            let s = dp / (dp - dq);
            out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
        }
    }
    out
}

fn slab_polygon(frame: &Mat2, half: [f64; 2]) -> Polygon {
    let inv = frame.inverse().expect("strip frames are invertible");
    [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]
        .iter()
        .map(|s| inv.apply([s[0] * half[0], s[1] * half[1]]))
        .collect()
}

fn sin_between(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] * b[1] - a[1] * b[0]).abs() / (dot(a, a) * dot(b, b)).sqrt()
}

/// Largest distance from the origin of a point lying in corresponding arms
/// of both crosses, or infinity when the arms are parallel.
pub fn strip_intersection_radius(s: &StripSet, t: &StripSet) -> f64 {
    let mut radius: f64 = 0.0;
    let halves = [[s.b, s.a], [s.a, s.b]];
    for (k, (arm_s, arm_t)) in s.arms().iter().zip(t.arms().iter()).enumerate() {
        if sin_between(arm_s[0].0, arm_t[0].0) < 1e-12 {
            return f64::INFINITY;
        }
        let mut poly = slab_polygon(&s.frame, halves[k]);
        for &(n, w) in arm_t {
            poly = clip(&poly, n, w);
            poly = clip(&poly, [-n[0], -n[1]], w);
        }
        for p in &poly {
            radius = radius.max(dot(*p, *p).sqrt());
        }
    }
    radius
}

/// Sine of the rotation angle between two strip frames.
pub fn frame_angle_sin(s: &StripSet, t: &StripSet) -> f64 {
    sin_between(s.frame.row(1), t.frame.row(1))
}

/// For each strip, the largest intersection radius with any later strip.
pub fn tail_intersection_radii(strips: &[StripSet]) -> Vec<f64> {
    (0..strips.len())
        .map(|n| {
            strips[n + 1..]
                .iter()
                .map(|t| strip_intersection_radius(&strips[n], t))
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CollapseReport {
    /// Strip thickness over the remaining rotation `sum_{k >= n} xi_k`.
    pub ratios: Vec<f64>,
    pub decreasing: bool,
    pub below_threshold: bool,
    pub flagged: bool,
}

/// Checks that strips thin out faster than the remaining rotation.
///
/// The remaining rotation past the last listed `xi` is extrapolated
/// geometrically from the last two entries when they decrease.
pub fn validate_collapse_condition(xis: &[f64], thickness: &[f64], threshold: f64) -> Result<CollapseReport> {
    let n = xis.len().min(thickness.len());
    if n == 0 {
        return Err(Error::ShapeMismatch("collapse check needs shears and thicknesses".into()));
    }
    let mut extra = 0.0;
    if xis.len() >= 2 {
        let r = xis[xis.len() - 1] / xis[xis.len() - 2];
        if r > 0.0 && r < 1.0 {
            extra = xis[xis.len() - 1] * r / (1.0 - r);
        }
    }
    let mut tails = vec![0.0; xis.len()];
    let mut acc = extra;
    for k in (0..xis.len()).rev() {
        acc += xis[k];
        tails[k] = acc;
    }
    let ratios: Vec<f64> = (0..n).map(|k| thickness[k] / tails[k]).collect();
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let below_threshold = ratios[n - 1] < threshold;
    Ok(CollapseReport { ratios, decreasing, below_threshold, flagged: !(decreasing && below_threshold) })
}

/// A running planar product together with the strips of its stages.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarState {
    pub density: SampledDensity,
    pub strips: Vec<StripSet>,
    pub stages: Vec<StageDiagnostics>,
}

impl PlanarState {
    pub fn new(density: SampledDensity) -> Result<Self> {
        if density.dim() != 2 {
            return Err(Error::ShapeMismatch("planar state needs a planar density".into()));
        }
        Ok(Self { density, strips: Vec::new(), stages: Vec::new() })
    }

    fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        let [ax, ay] = [self.density.axes[0], self.density.axes[1]];
        (0..ay.count).flat_map(move |j| (0..ax.count).map(move |i| [ax.point(i), ay.point(j)]))
    }

    /// Multiplies in a stage. Its diagnostics are taken over the grid cells
    /// outside the stage's strip.
    pub fn accumulate(&mut self, stage: &ExpSum2D, strip: StripSet) -> Result<StageDiagnostics> {
        let [ax, ay] = [self.density.axes[0], self.density.axes[1]];
        let q = stage.eval_grid(&ax, &ay, Guard::Enforce)?;
        let area = self.density.cell_measure();
        let dev: Vec<f64> = self
            .points()
            .zip(&q.values)
            .map(|(p, v)| if strip.contains(p) { 0.0 } else { (v - 1.0).abs() })
            .collect();
        let sup = self
            .points()
            .zip(&q.values)
            .filter(|(p, _)| !strip.contains(*p))
            .map(|(_, v)| *v)
            .fold(1.0, f64::max);
        let eps = fixed_sum(&dev) * area;
        let prev: f64 = self.stages.iter().map(|s| s.sup).product();
        let diag = StageDiagnostics { sup, eps, alpha: (eps * prev * sup).sqrt() };
        for (d, m) in self.density.values.iter_mut().zip(&q.values) {
            *d *= m;
        }
        self.strips.push(strip);
        self.stages.push(diag);
        Ok(diag)
    }

    /// Mass of the cells whose midpoint satisfies `keep`.
    pub fn mass_where(&self, keep: impl Fn([f64; 2]) -> bool) -> f64 {
        let mut acc = Accumulator::default();
        for (p, v) in self.points().zip(&self.density.values) {
            if keep(p) {
                acc.add(*v);
            }
        }
        acc.total() * self.density.cell_measure()
    }

    /// Share of the grid mass within `half_width` of a coordinate axis.
    pub fn axis_strip_mass_ratio(&self, half_width: f64) -> f64 {
        let near = self.mass_where(|p| p[0].abs() <= half_width || p[1].abs() <= half_width);
        near / self.mass_where(|_| true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Region {
    /// Inside at least two stage strips.
    MultiplyCovered,
    /// Within the tolerance of a line of the last frame.
    LimitLine,
    /// Everything else.
    Free,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RegionMasses {
    pub multiply_covered: f64,
    pub limit_line: f64,
    pub free: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionMap {
    pub labels: Vec<Region>,
    pub masses: RegionMasses,
}

pub fn classify_regions(state: &PlanarState, line_tolerance: f64) -> Result<RegionMap> {
    let last = state.strips.last().ok_or_else(|| invalid("no stages to classify against"))?;
    let rows = [last.frame.row(0), last.frame.row(1)];
    let norms = rows.map(|r| dot(r, r).sqrt());
    let mut acc = [Accumulator::default(); 3];
    let mut total = Accumulator::default();
    let labels = state
        .points()
        .zip(&state.density.values)
        .map(|(p, &v)| {
            let covers = state.strips.iter().filter(|s| s.contains(p)).count();
            let near = (0..2).any(|k| dot(rows[k], p).abs() / norms[k] <= line_tolerance);
            let r = if covers >= 2 {
                Region::MultiplyCovered
            } else if near {
                Region::LimitLine
            } else {
                Region::Free
            };
            acc[r as usize].add(v);
            total.add(v);
            r
        })
        .collect();
    let area = state.density.cell_measure();
    Ok(RegionMap {
        labels,
        masses: RegionMasses {
            multiply_covered: acc[0].total() * area,
            limit_line: acc[1].total() * area,
            free: acc[2].total() * area,
            total: total.total() * area,
        },
    })
}

/// `int |P|` over the part of a stage's strip within `length` of the origin
/// along each arm. The strip frame must be the stage's evaluation map.
pub fn strip_mass_bound(stage: &ExpSum2D, strip: &StripSet, length: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if strip.frame != stage.frame.transpose() {
        return Err(Error::ShapeMismatch("strip frame differs from the stage frame".into()));
    }
    if !(length > strip.a) {
        return Err(invalid("neighborhood length must exceed the strip thickness"));
    }
    let len = length.min(strip.b);
    let sym = |s, r| -> Result<f64> { Ok(2.0 * integrate_abs(s, 0.0, r, cfg)?.value) };
    let (lx, ly) = (sym(&stage.x, len)?, sym(&stage.y, len)?);
    let (nx, ny) = (sym(&stage.x, strip.a)?, sym(&stage.y, strip.a)?);
    // Two arms, minus the central square they share.
    Ok((lx * ny + nx * ly - nx * ny) / strip.frame.det().abs())
}

/// Log-scaled 16-bit image of a planar density with its sidecar.
pub fn render_density(state: &PlanarState, path: &Path) -> Result<Normalization> {
    io::write_pgm(path, &state.density, Scale::Log)
}
