//! Normalized exponential sums `P(tau) = q^{-1/2} sum_y exp(2 pi i tau w_y)`
//! and their sampled squared moduli.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::FrequencyParams;
use crate::dd::frac_product;
use crate::error::{invalid, Error, Result};
use crate::mat2::Mat2;

/// Points per reseeded run of the rotation recurrence.
const BLOCK: usize = 64;
/// Runs advanced together for instruction-level parallelism.
const LANES: usize = 4;
const TILE: usize = BLOCK * LANES;

/// A uniform sample axis: point `k` sits at `origin + k * step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub origin: f64,
    pub step: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(origin: f64, step: f64, count: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || !origin.is_finite() || count == 0 {
            return Err(invalid(format!(
                "axis needs positive step and count (origin {origin}, step {step}, count {count})"
            )));
        }
        Ok(Self { origin, step, count })
    }

    /// Midpoints of `count` equal cells covering `[lo, hi]`.
    pub fn midpoints(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let step = (hi - lo) / count as f64;
        Self::new(lo + 0.5 * step, step, count)
    }

    pub fn point(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|k| self.point(k))
    }
}

/// Nonnegative samples on a one- or two-dimensional uniform grid.
///
/// In two dimensions the value at `(axes[0].point(i), axes[1].point(j))` is
/// stored at `j * axes[0].count + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledDensity {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

impl SampledDensity {
    pub fn line(axis: Axis, values: Vec<f64>) -> Result<Self> {
        Self::checked(vec![axis], values)
    }

    pub fn plane(x: Axis, y: Axis, values: Vec<f64>) -> Result<Self> {
        Self::checked(vec![x, y], values)
    }

    fn checked(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.count).product();
        if n != values.len() {
            return Err(Error::ShapeMismatch(format!("grid has {n} points, got {} values", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("density value {v} is not finite and nonnegative")));
        }
        Ok(Self { axes, values })
    }

    pub fn constant(axes: Vec<Axis>, value: f64) -> Result<Self> {
        let n = axes.iter().map(|a| a.count).product();
        Self::checked(axes, vec![value; n])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Length or area of one grid cell.
    pub fn cell_measure(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }

    /// Midpoint-rule integral over the cells of the grid.
    pub fn integral(&self) -> f64 {
        crate::dd::fixed_sum(&self.values) * self.cell_measure()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn same_grid(&self, other: &SampledDensity) -> bool {
        self.axes == other.axes
    }
}

/// Whether a grid step may exceed the Nyquist-safe limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guard {
    Enforce,
    Override,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpSum1D {
    frequencies: Vec<f64>,
    norm: f64,
}

impl ExpSum1D {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(invalid("an exponential sum needs at least one frequency"));
        }
        for (i, w) in frequencies.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::NonMonotone { index: i + 1 });
            }
        }
        if frequencies.iter().any(|w| !w.is_finite()) {
            return Err(invalid("frequencies must be finite"));
        }
        let norm = (frequencies.len() as f64).sqrt().recip();
        Ok(Self { frequencies, norm })
    }

    pub fn from_params(p: &FrequencyParams) -> Result<Self> {
        Self::new(p.frequencies())
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn spread(&self) -> f64 {
        self.frequencies[self.frequencies.len() - 1] - self.frequencies[0]
    }

    /// Largest grid step that resolves `|P|^2` with two samples per period
    /// of its highest frequency, with a further factor of two to spare.
    pub fn nyquist_step(&self) -> f64 {
        let s = self.spread();
        if s == 0.0 {
            f64::INFINITY
        } else {
            0.25 / s
        }
    }

    pub fn eval_point(&self, tau: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &w in &self.frequencies {
            acc += cis_turns(frac_product(tau, w));
        }
        acc * self.norm
    }

    /// Complex values on an axis.
    pub fn values(&self, axis: &Axis, guard: Guard) -> Result<Vec<Complex64>> {
        self.check_step(axis.step, guard)?;
        let mut out = vec![Complex64::new(0.0, 0.0); axis.count];
        out.par_chunks_mut(TILE).enumerate().for_each(|(t, chunk)| {
            let start = axis.origin + (t * TILE) as f64 * axis.step;
            tile(&self.frequencies, self.norm, start, axis.step, chunk);
        });
        Ok(out)
    }

    /// `|P|^2` on an axis.
    pub fn eval_grid(&self, axis: &Axis, guard: Guard) -> Result<SampledDensity> {
        let vals = self.values(axis, guard)?;
        SampledDensity::line(*axis, vals.iter().map(|z| z.norm_sqr()).collect())
    }

    /// `|P|` on an axis.
    pub fn abs_grid(&self, axis: &Axis, guard: Guard) -> Result<Vec<f64>> {
        Ok(self.values(axis, guard)?.iter().map(|z| z.norm()).collect())
    }

    fn check_step(&self, step: f64, guard: Guard) -> Result<()> {
        let limit = self.nyquist_step();
        if guard == Guard::Enforce && step.abs() > limit {
            return Err(Error::NyquistViolation { step, limit });
        }
        Ok(())
    }

    /// Serial evaluation with a possibly negative step.
    fn line_serial(&self, origin: f64, step: f64, out: &mut [Complex64]) {
        for (t, chunk) in out.chunks_mut(TILE).enumerate() {
            let start = origin + (t * TILE) as f64 * step;
            tile(&self.frequencies, self.norm, start, step, chunk);
        }
    }
}

#[inline]
pub(crate) fn cis_turns(turns: f64) -> Complex64 {
    let t = if turns >= 0.5 { turns - 1.0 } else { turns };
    let (s, c) = (std::f64::consts::TAU * t).sin_cos();
    Complex64::new(c, s)
}

/// Fills `out` with the normalized sum at `start + i * step`.
///
/// Every run of `BLOCK` points is seeded from an exactly reduced phase and
/// then advanced by a fixed rotation, so the result depends only on the
/// tile boundaries and never on how tiles are scheduled.
fn tile(freqs: &[f64], norm: f64, start: f64, step: f64, out: &mut [Complex64]) {
    let mut acc_re = [0.0f64; TILE];
    let mut acc_im = [0.0f64; TILE];
    let mut zr = [0.0f64; LANES];
    let mut zi = [0.0f64; LANES];
    let mut rr = [0.0f64; LANES];
    let mut ri = [0.0f64; LANES];
    let lanes = out.len().div_ceil(BLOCK);
    for &w in freqs {
        let rot = cis_turns(frac_product(step, w));
        for s in 0..LANES {
            let z = if s < lanes {
                let t0 = start + (s * BLOCK) as f64 * step;
                cis_turns(frac_product(t0, w))
            } else {
                Complex64::new(0.0, 0.0)
            };
            zr[s] = z.re;
            zi[s] = z.im;
            rr[s] = rot.re;
            ri[s] = rot.im;
        }
        for i in 0..BLOCK {
            for s in 0..LANES {
                let k = i * LANES + s;
                acc_re[k] += zr[s];
                acc_im[k] += zi[s];
                let nr = zr[s] * rr[s] - zi[s] * ri[s];
                let ni = zr[s] * ri[s] + zi[s] * rr[s];
                zr[s] = nr;
                zi[s] = ni;
            }
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        let idx = (k % BLOCK) * LANES + k / BLOCK;
        *o = Complex64::new(acc_re[idx] * norm, acc_im[idx] * norm);
    }
}

/// Tensor product sum evaluated in a linear frame: the density at `tau` is
/// `|P_x(u_1)|^2 |P_y(u_2)|^2` with `u = frame^T tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpSum2D {
    pub x: ExpSum1D,
    pub y: ExpSum1D,
    pub frame: Mat2,
}

impl ExpSum2D {
    pub fn new(x: ExpSum1D, y: ExpSum1D, frame: Mat2) -> Result<Self> {
        if frame.inverse().is_none() {
            return Err(invalid("frame must be invertible"));
        }
        Ok(Self { x, y, frame })
    }

    pub fn local_coords(&self, tau: [f64; 2]) -> [f64; 2] {
        self.frame.transpose().apply(tau)
    }

    pub fn eval_point(&self, tau: [f64; 2]) -> f64 {
        let u = self.local_coords(tau);
        self.x.eval_point(u[0]).norm_sqr() * self.y.eval_point(u[1]).norm_sqr()
    }

    /// Largest safe step along each grid axis.
    pub fn nyquist_steps(&self) -> [f64; 2] {
        let f = &self.frame.0;
        let (sx, sy) = (self.x.spread(), self.y.spread());
        let lim = |b: f64| if b == 0.0 { f64::INFINITY } else { 0.25 / b };
        [
            lim(f[0][0].abs() * sx + f[0][1].abs() * sy),
            lim(f[1][0].abs() * sx + f[1][1].abs() * sy),
        ]
    }

    pub fn eval_grid(&self, ax: &Axis, ay: &Axis, guard: Guard) -> Result<SampledDensity> {
        if guard == Guard::Enforce {
            let lim = self.nyquist_steps();
            for (step, limit) in [(ax.step, lim[0]), (ay.step, lim[1])] {
                if step > limit {
                    return Err(Error::NyquistViolation { step, limit });
                }
            }
        }
        let nx = ax.count;
        let values = if self.frame.is_identity() {
            let fx = self.x.eval_grid(ax, Guard::Override)?.values;
            let fy = self.y.eval_grid(ay, Guard::Override)?.values;
            let mut v = vec![0.0; nx * ay.count];
            v.par_chunks_mut(nx).zip(fy.par_iter()).for_each(|(row, &wy)| {
                for (o, &wx) in row.iter_mut().zip(&fx) {
                    *o = wx * wy;
                }
            });
            v
        } else {
            let f = self.frame.0;
            let mut v = vec![0.0; nx * ay.count];
            v.par_chunks_mut(nx).enumerate().for_each_init(
                || (vec![Complex64::new(0.0, 0.0); nx], vec![Complex64::new(0.0, 0.0); nx]),
                |(bx, by), (j, row)| {
                    let t2 = ay.point(j);
                    let u1 = f[0][0] * ax.origin + f[1][0] * t2;
                    let u2 = f[0][1] * ax.origin + f[1][1] * t2;
                    self.x.line_serial(u1, f[0][0] * ax.step, bx);
                    self.y.line_serial(u2, f[0][1] * ax.step, by);
                    for ((o, a), b) in row.iter_mut().zip(bx.iter()).zip(by.iter()) {
                        *o = a.norm_sqr() * b.norm_sqr();
                    }
                },
            );
            v
        };
        SampledDensity::plane(*ax, *ay, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frequency_is_unimodular() {
        let s = ExpSum1D::new(vec![0.0]).unwrap();
        let ax = Axis::new(-3.0, 0.37, 700).unwrap();
        let d = s.eval_grid(&ax, Guard::Enforce).unwrap();
        assert!(d.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn two_frequencies_closed_form() {
        // |1 + e^{2 pi i tau}|^2 / 2 = 1 + cos(2 pi tau)
        let s = ExpSum1D::new(vec![0.0, 1.0]).unwrap();
        let ax = Axis::new(0.01, 0.2, 300).unwrap();
        let d = s.eval_grid(&ax, Guard::Enforce).unwrap();
        for (k, v) in d.values.iter().enumerate() {
            let t = ax.point(k);
            assert!((v - (1.0 + (std::f64::consts::TAU * t).cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn nyquist_guard() {
        let s = ExpSum1D::new(vec![0.0, 1.0, 3.0]).unwrap();
        let ax = Axis::new(0.0, 0.1, 10).unwrap();
        assert!(matches!(s.eval_grid(&ax, Guard::Enforce), Err(Error::NyquistViolation { .. })));
        assert!(s.eval_grid(&ax, Guard::Override).is_ok());
    }

    #[test]
    fn rejects_unsorted_frequencies() {
        assert!(ExpSum1D::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(ExpSum1D::new(vec![]).is_err());
    }

    #[test]
    fn identity_frame_is_outer_product() {
        let p = FrequencyParams::new(1.0, 0.5, 5).unwrap();
        let s = ExpSum1D::from_params(&p).unwrap();
        let t = ExpSum2D::new(s.clone(), s.clone(), Mat2::IDENTITY).unwrap();
        let ax = Axis::new(-1.0, 0.01, 90).unwrap();
        let ay = Axis::new(0.5, 0.013, 70).unwrap();
        let d = t.eval_grid(&ax, &ay, Guard::Enforce).unwrap();
        let fx = s.eval_grid(&ax, Guard::Enforce).unwrap().values;
        let fy = s.eval_grid(&ay, Guard::Enforce).unwrap().values;
        for j in 0..70 {
            for i in 0..90 {
                assert_eq!(d.values[j * 90 + i], fx[i] * fy[j]);
            }
        }
    }

    #[test]
    fn rotated_grid_matches_pointwise() {
        let p = FrequencyParams::new(1.0, 0.5, 4).unwrap();
        let s = ExpSum1D::from_params(&p).unwrap();
        let frame = Mat2::skew(0.4).mul(&Mat2::skew(0.2));
        let t = ExpSum2D::new(s.clone(), s, frame).unwrap();
        let ax = Axis::new(-0.7, 0.011, 300).unwrap();
        let ay = Axis::new(0.2, 0.009, 40).unwrap();
        let d = t.eval_grid(&ax, &ay, Guard::Override).unwrap();
        for j in (0..40).step_by(7) {
            for i in (0..300).step_by(13) {
                let v = t.eval_point([ax.point(i), ay.point(j)]);
                assert!((d.values[j * 300 + i] - v).abs() < 1e-10);
            }
        }
    }
}
