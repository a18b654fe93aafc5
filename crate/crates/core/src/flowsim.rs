//! The rank-one flow built by the tower schedule: step functions on a base
//! level, their exact autocorrelations at higher levels, and Monte-Carlo
//! sampling of the flow itself.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::construction::TowerSchedule;
use crate::dd::frac_product;
use crate::error::{invalid, Error, Result};
use crate::expsum::{cis_turns, Axis, SampledDensity};

/// A step function on `[0, height)` with equal cells, living on the base
/// level of a tower.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelFunction {
    pub level: usize,
    pub height: f64,
    pub values: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Constant on the whole level.
    Indicator,
    /// `+1` on the lower half, `-1` on the upper half; mean zero.
    Haar,
    /// A smooth bump sampled at cell midpoints.
    Bump,
}

impl LevelFunction {
    pub fn new(level: usize, height: f64, values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() || !(height > 0.0 && height.is_finite()) {
            return Err(invalid("a level function needs cells and a positive height"));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid("level function values must be finite"));
        }
        Ok(Self { level, height, values })
    }

    /// A profile scaled so the autocorrelation is 1 at lag zero for a tower
    /// whose base level carries mass `one_minus_gamma`.
    pub fn from_profile(
        profile: Profile,
        level: usize,
        height: f64,
        cells: usize,
        one_minus_gamma: f64,
    ) -> Result<Self> {
        if cells == 0 || (profile == Profile::Haar && cells % 2 == 1) {
            return Err(invalid(format!("{profile:?} profile cannot use {cells} cells")));
        }
        let raw: Vec<f64> = match profile {
            Profile::Indicator => vec![1.0; cells],
            Profile::Haar => (0..cells).map(|i| if 2 * i < cells { 1.0 } else { -1.0 }).collect(),
            Profile::Bump => (0..cells)
                .map(|i| {
                    let x = (i as f64 + 0.5) / cells as f64;
                    (-1.0 / (x * (1.0 - x))).exp()
                })
                .collect(),
        };
        let f = Self::new(level, height, raw.into_iter().map(|v| Complex64::new(v, 0.0)).collect())?;
        Ok(f.normalized(one_minus_gamma))
    }

    pub fn cell_width(&self) -> f64 {
        self.height / self.values.len() as f64
    }

    pub fn normalized(mut self, one_minus_gamma: f64) -> Self {
        let energy: f64 = self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_width();
        let scale = (self.height / (one_minus_gamma * energy)).sqrt();
        for v in &mut self.values {
            *v *= scale;
        }
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Value at a base-level coordinate; zero outside `(0, height)`.
    pub fn value_at(&self, x: f64) -> Complex64 {
        if !(x > 0.0 && x < self.height) {
            return Complex64::new(0.0, 0.0);
        }
        let i = ((x / self.cell_width()) as usize).min(self.values.len() - 1);
        self.values[i]
    }

    pub fn total_variation(&self) -> f64 {
        let v = &self.values;
        let inner: f64 = v.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        inner + v[0].norm() + v[v.len() - 1].norm()
    }

    /// `int exp(2 pi i tau x) f(x) dx`.
    pub fn transform(&self, tau: f64) -> Complex64 {
        const RESEED: usize = 64;
        let d = self.cell_width();
        let rot = cis_turns(frac_product(tau, d));
        let mut acc = Complex64::new(0.0, 0.0);
        let mut z = Complex64::new(1.0, 0.0);
        for (i, &c) in self.values.iter().enumerate() {
            if i % RESEED == 0 {
                z = cis_turns(frac_product(tau, i as f64 * d));
            }
            acc += c * z;
            z *= rot;
        }
        acc * segment_integral(tau, d)
    }

    /// `(1 - gamma) / h |f^|^2` on an axis.
    pub fn spectral_density(&self, one_minus_gamma: f64, axis: &Axis) -> Result<SampledDensity> {
        let w = one_minus_gamma / self.height;
        let vals: Vec<f64> = axis.points().collect::<Vec<_>>().par_iter().map(|&t| w * self.transform(t).norm_sqr()).collect();
        SampledDensity::line(*axis, vals)
    }

    /// Knots of the autocorrelation `s -> int f(s + x) conj f(x) dx`, which
    /// is linear between multiples of the cell width.
    pub fn autocorrelation_knots(&self) -> Vec<(f64, Complex64)> {
        let n = self.values.len() as i64;
        let d = self.cell_width();
        (-n..=n)
            .map(|lag| {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    let j = i + lag;
                    if (0..n).contains(&j) {
                        acc += self.values[j as usize] * self.values[i as usize].conj();
                    }
                }
                (lag as f64 * d, acc * d)
            })
            .collect()
    }
}

/// `int_0^d exp(2 pi i tau x) dx`.
fn segment_integral(tau: f64, d: f64) -> Complex64 {
    let x = std::f64::consts::TAU * tau * d;
    Complex64::new(d, 0.0) * phase_mean(x)
}

/// `(exp(ix) - 1) / (ix)`, with a series near zero.
fn phase_mean(x: f64) -> Complex64 {
    if x.abs() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..18 {
            term *= Complex64::new(0.0, x) / (k as f64 + 1.0);
            sum += term;
        }
        sum
    } else {
        (Complex64::from_polar(1.0, x) - 1.0) / Complex64::new(0.0, x)
    }
}

/// `int_0^1 u exp(ixu) du`, with a series near zero.
fn phase_ramp(x: f64) -> Complex64 {
    if x.abs() < 0.5 {
        // sum (ix)^k / (k! (k + 2))
        let mut fact = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.5, 0.0);
        for k in 1..18 {
            fact *= Complex64::new(0.0, x) / k as f64;
            sum += fact / (k as f64 + 2.0);
        }
        sum
    } else {
        (Complex64::from_polar(1.0, x) * Complex64::new(1.0, -x) - 1.0) / (x * x)
    }
}

/// `int exp(2 pi i tau t) g(t) dt` for `g` linear between the knots and
/// zero outside them.
pub fn fourier_piecewise_linear(knots: &[(f64, Complex64)], tau: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for w in knots.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        let len = t1 - t0;
        if len <= 0.0 {
            continue;
        }
        let x = std::f64::consts::TAU * tau * len;
        let seg = v0 * phase_mean(x) * len + (v1 - v0) * phase_ramp(x) * len;
        acc += cis_turns(frac_product(tau, t0)) * seg;
    }
    acc
}

/// Offsets of the level-`from` copies inside the level-`to` tower, in
/// increasing order.
pub fn copy_offsets(schedule: &TowerSchedule, from: usize, to: usize) -> Vec<f64> {
    let mut offsets = vec![0.0];
    for stage in &schedule.stages[from..to] {
        offsets = stage
            .geometry
            .positions
            .iter()
            .flat_map(|&p| offsets.iter().map(move |&o| p + o))
            .collect();
    }
    offsets
}

/// Autocorrelation of a base-level function lifted to a higher level.
#[derive(Clone, Debug)]
pub struct CorrelationFunction {
    pub level: usize,
    /// `(1 - gamma_n) / h_n`.
    pub weight: f64,
    pub offsets: Vec<f64>,
    pub base: LevelFunction,
    starts: Vec<f64>,
    cells: Vec<Complex64>,
}

pub fn correlation(f: &LevelFunction, schedule: &TowerSchedule, level: usize) -> Result<CorrelationFunction> {
    if level < f.level || level > schedule.depth {
        return Err(invalid(format!(
            "level {level} must lie between the base level {} and the depth {}",
            f.level, schedule.depth
        )));
    }
    let h0 = schedule.height(f.level);
    if (h0 - f.height).abs() > 1e-9 * h0 {
        return Err(Error::HeightMismatch { stage: f.level, expected: h0, found: f.height });
    }
    let offsets = copy_offsets(schedule, f.level, level);
    let d = f.cell_width();
    let mut starts = Vec::with_capacity(offsets.len() * f.values.len());
    let mut cells = Vec::with_capacity(starts.capacity());
    for &o in &offsets {
        for (i, &c) in f.values.iter().enumerate() {
            starts.push(o + i as f64 * d);
            cells.push(c);
        }
    }
    Ok(CorrelationFunction {
        level,
        weight: schedule.gammas.one_minus_gamma[level] / schedule.height(level),
        offsets,
        base: f.clone(),
        starts,
        cells,
    })
}

impl CorrelationFunction {
    /// `R_n(t)`, integrated exactly cell against cell.
    pub fn at(&self, t: f64) -> Complex64 {
        let d = self.base.cell_width();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut lo = 0;
        for (a, &sa) in self.starts.iter().enumerate() {
            let target = sa + t;
            while lo < self.starts.len() && self.starts[lo] <= target - d {
                lo += 1;
            }
            let ca = self.cells[a].conj();
            let mut b = lo;
            while b < self.starts.len() && self.starts[b] < target + d {
                let overlap = d - (self.starts[b] - target).abs();
                if overlap > 0.0 {
                    acc += self.cells[b] * ca * overlap;
                }
                b += 1;
            }
        }
        acc * self.weight
    }

    /// Fourier transform of `R_n`, from the piecewise-linear base
    /// autocorrelation and the lattice of copy offsets.
    pub fn spectral_density(&self, tau: f64) -> f64 {
        let base = fourier_piecewise_linear(&self.base.autocorrelation_knots(), tau);
        let lattice: Complex64 = self.offsets.iter().map(|&o| cis_turns(frac_product(tau, o))).sum();
        self.weight * base.re * lattice.norm_sqr()
    }

    pub fn spectral_grid(&self, axis: &Axis) -> Result<SampledDensity> {
        let knots = self.base.autocorrelation_knots();
        let pts: Vec<f64> = axis.points().collect();
        let vals = pts
            .par_iter()
            .map(|&tau| {
                let base = fourier_piecewise_linear(&knots, tau);
                let lattice: Complex64 = self.offsets.iter().map(|&o| cis_turns(frac_product(tau, o))).sum();
                (self.weight * base.re * lattice.norm_sqr()).max(0.0)
            })
            .collect();
        SampledDensity::line(*axis, vals)
    }

    /// Total variation of the lifted function.
    pub fn total_variation(&self) -> f64 {
        self.base.total_variation() * self.offsets.len() as f64
    }
}

/// `R_n` on a grid of lags no finer than the base cells.
pub fn correlation_analytic(
    f: &LevelFunction,
    schedule: &TowerSchedule,
    level: usize,
    t_grid: &[f64],
) -> Result<Vec<Complex64>> {
    let mut sorted = t_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cell = f.cell_width();
    if let Some(spacing) = sorted.windows(2).map(|w| w[1] - w[0]).reduce(f64::min) {
        if spacing < cell {
            return Err(Error::ResolutionTooFine { spacing, cell });
        }
    }
    let r = correlation(f, schedule, level)?;
    Ok(t_grid.par_iter().map(|&t| r.at(t)).collect())
}

/// A point of the flow, given by its coordinate in each tower from the base
/// level up. Points of the residual atom have all coordinates zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPoint {
    pub base_level: usize,
    pub coords: Vec<f64>,
}

/// The flow left every stored tower before time `t` was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Escaped;

/// Coordinate in the level-`k` tower of a point at `x` in the level-`k + 1`
/// tower, or 0 on a spacer.
fn project(schedule: &TowerSchedule, k: usize, x: f64) -> f64 {
    let g = &schedule.stages[k].geometry;
    let j = g.positions.partition_point(|&p| p <= x);
    if j == 0 {
        return 0.0;
    }
    let local = x - g.positions[j - 1];
    if local < g.h {
        local
    } else {
        0.0
    }
}

fn fill_down(schedule: &TowerSchedule, base: usize, coords: &mut [f64], from: usize) {
    for idx in (0..from).rev() {
        coords[idx] = project(schedule, base + idx, coords[idx + 1]);
    }
}

/// Draws a point from the normalized invariant measure truncated at `top`.
pub fn sample_point<R: Rng>(schedule: &TowerSchedule, base: usize, top: usize, rng: &mut R) -> FlowPoint {
    let len = top - base + 1;
    let mut coords = vec![0.0; len];
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    if u >= schedule.gammas.gamma(top) {
        coords[len - 1] = v * schedule.height(top);
        fill_down(schedule, base, &mut coords, len - 1);
    }
    FlowPoint { base_level: base, coords }
}

/// Moves a point by time `t`, using the lowest tower in which the orbit
/// segment stays inside a single level.
pub fn apply_time(schedule: &TowerSchedule, p: &FlowPoint, t: f64) -> std::result::Result<FlowPoint, Escaped> {
    if t == 0.0 {
        return Ok(p.clone());
    }
    let s = t.abs();
    let idx = (0..p.coords.len())
        .find(|&i| {
            let x = p.coords[i];
            s < x && x < schedule.height(p.base_level + i) - s
        })
        .ok_or(Escaped)?;
    let mut coords = p.coords.clone();
    for c in &mut coords[idx..] {
        *c += t;
    }
    fill_down(schedule, p.base_level, &mut coords, idx);
    Ok(FlowPoint { base_level: p.base_level, coords })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct McEstimate {
    pub t: f64,
    pub mean: Complex64,
    pub stderr: f64,
    pub used: usize,
    pub escaped: usize,
}

/// Largest tolerated fraction of escaped samples.
pub const MAX_ESCAPE_FRACTION: f64 = 0.1;

const MC_CHUNK: usize = 4096;

/// Monte-Carlo estimate of `int f(T_t x) conj f(x) dx`, sampling the tower
/// at level `top`. Sample chunks use independent ChaCha streams of `seed`,
/// so the estimate does not depend on the thread count.
pub fn correlation_monte_carlo(
    f: &LevelFunction,
    schedule: &TowerSchedule,
    top: usize,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if top < f.level || top > schedule.depth || samples < 2 {
        return Err(invalid("Monte-Carlo needs base <= top <= depth and at least two samples"));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<(Complex64, f64, usize, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let (mut sum, mut sq, mut used, mut escaped) = (Complex64::new(0.0, 0.0), 0.0, 0, 0);
            for _ in 0..n {
                let x = sample_point(schedule, f.level, top, &mut rng);
                match apply_time(schedule, &x, t) {
                    Ok(y) => {
                        let z = f.value_at(y.coords[0]) * f.value_at(x.coords[0]).conj();
                        sum += z;
                        sq += z.norm_sqr();
                        used += 1;
                    }
                    Err(Escaped) => escaped += 1,
                }
            }
            (sum, sq, used, escaped)
        })
        .collect();
    let (mut sum, mut sq, mut used, mut escaped) = (Complex64::new(0.0, 0.0), 0.0, 0, 0);
    for (s, q, u, e) in partial {
        sum += s;
        sq += q;
        used += u;
        escaped += e;
    }
    let fraction = escaped as f64 / samples as f64;
    if fraction > MAX_ESCAPE_FRACTION || used < 2 {
        return Err(Error::TooManyEscapes { fraction, limit: MAX_ESCAPE_FRACTION });
    }
    let n = used as f64;
    let mean = sum / n;
    let var = ((sq - n * mean.norm_sqr()) / (n - 1.0)).max(0.0);
    Ok(McEstimate { t, mean, stderr: (var / n).sqrt(), used, escaped })
}
