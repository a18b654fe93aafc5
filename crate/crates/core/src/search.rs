//! Scanning `q` for flat exponential sums, and the return-time probe for
//! the linear flow on a torus.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::FrequencyParams;
use crate::dd::frac_product;
use crate::error::{invalid, Error, Result};
use crate::expsum::ExpSum1D;
use crate::flatness::{measure_flatness, FlatnessReport, QuadratureConfig, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SearchSpec {
    pub window: Window,
    pub eps: f64,
    pub m: f64,
    pub beta: f64,
    pub q_min: usize,
    pub q_max: usize,
    #[serde(default = "one")]
    pub q_stride: usize,
}

fn one() -> usize {
    1
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !(self.eps > 0.0) {
            return Err(invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.q_min == 0 || self.q_max < self.q_min || self.q_stride == 0 {
            return Err(invalid(format!(
                "need 1 <= qMin <= qMax and qStride >= 1, got {}..{} step {}",
                self.q_min, self.q_max, self.q_stride
            )));
        }
        FrequencyParams::new(self.m, self.beta, self.q_min)?;
        Ok(())
    }

    pub fn candidates(&self) -> Vec<usize> {
        (self.q_min..=self.q_max).step_by(self.q_stride).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlatHit {
    pub q: usize,
    pub report: FlatnessReport,
}

/// Flatness report for every candidate `q`, in increasing `q`.
pub fn scan_flatness(spec: &SearchSpec, cfg: &QuadratureConfig) -> Result<Vec<FlatHit>> {
    spec.validate()?;
    spec.candidates()
        .into_par_iter()
        .map(|q| {
            let p = FrequencyParams::new(spec.m, spec.beta, q)?;
            let s = ExpSum1D::from_params(&p)?;
            Ok(FlatHit { q, report: measure_flatness(&s, &spec.window, cfg)? })
        })
        .collect()
}

/// Candidates whose `L^1` defect is below `eps`, smallest `q` first.
pub fn find_flat_q(spec: &SearchSpec, cfg: &QuadratureConfig) -> Result<Vec<FlatHit>> {
    let hits: Vec<FlatHit> = scan_flatness(spec, cfg)?
        .into_iter()
        .filter(|h| h.report.l1_defect < spec.eps)
        .collect();
    if hits.is_empty() {
        Err(Error::NoneFound)
    } else {
        Ok(hits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct TorusProbe {
    /// Dimension of the torus.
    pub k: usize,
    pub eps: f64,
    pub t_max: f64,
    pub dt: f64,
}

/// Velocity of the flow: `ln 2, ln 3, ..., ln(k + 1)`.
pub fn torus_velocity(k: usize) -> Vec<f64> {
    (1..=k).map(|j| ((j + 1) as f64).ln()).collect()
}

/// Max-metric distance from `t v mod 1` to the origin.
pub fn torus_distance(v: &[f64], t: f64) -> f64 {
    v.iter()
        .map(|&vj| {
            let f = frac_product(t, vj);
            f.min(1.0 - f)
        })
        .fold(0.0, f64::max)
}

/// First grid time at which the orbit re-enters the `eps`-ball around the
/// origin after having left it, or `None` if that does not happen by `t_max`.
pub fn torus_return_time(probe: &TorusProbe) -> Result<Option<f64>> {
    if probe.k == 0 || !(probe.eps > 0.0 && probe.eps < 0.5) || !(probe.dt > 0.0) || !(probe.t_max > 0.0) {
        return Err(invalid("torus probe needs k >= 1, 0 < eps < 1/2, dt > 0 and tMax > 0"));
    }
    let v = torus_velocity(probe.k);
    let steps = (probe.t_max / probe.dt).floor() as u64;
    let mut left = false;
    for i in 1..=steps {
        let t = i as f64 * probe.dt;
        let d = torus_distance(&v, t);
        if !left {
            left = d >= probe.eps;
        } else if d < probe.eps {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_return_time() {
        let probe = TorusProbe { k: 1, eps: 0.45, t_max: 10.0, dt: 1e-4 };
        let t = torus_return_time(&probe).unwrap().unwrap();
        let exact = 0.55 / 2f64.ln();
        assert!(t >= exact && t < exact + 1e-4);
    }

    #[test]
    fn short_horizon_finds_nothing() {
        let probe = TorusProbe { k: 3, eps: 0.01, t_max: 5.0, dt: 1e-3 };
        assert_eq!(torus_return_time(&probe).unwrap(), None);
    }

    #[test]
    fn single_term_is_a_trivial_hit() {
        let spec = SearchSpec {
            window: Window::new(0.5, 2.0).unwrap(),
            eps: 0.1,
            m: 1.0,
            beta: 1.0,
            q_min: 1,
            q_max: 3,
            q_stride: 1,
        };
        let hits = find_flat_q(&spec, &QuadratureConfig::default()).unwrap();
        assert_eq!(hits[0].q, 1);
        assert!(hits[0].report.l1_defect < 1e-12);
    }

    #[test]
    fn invalid_ranges() {
        let mut spec = SearchSpec {
            window: Window::new(0.5, 2.0).unwrap(),
            eps: 0.1,
            m: 1.0,
            beta: 1.0,
            q_min: 4,
            q_max: 3,
            q_stride: 1,
        };
        assert!(scan_flatness(&spec, &QuadratureConfig::default()).is_err());
        spec.q_max = 8;
        spec.q_stride = 0;
        assert!(scan_flatness(&spec, &QuadratureConfig::default()).is_err());
    }
}
