//! Stage geometry of the cutting-and-stacking tower.
//!
//! Stage `n` cuts the level-`n` tower of height `h` into `q` copies and places
//! copy `j` at offset `w(j) = m q / beta^2 * (exp(beta j / q) - 1)`. The gaps
//! between consecutive copies are filled with spacers, and the resulting
//! tower has height `w(q - 1) + h`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mat2::Mat2;

/// Largest `beta` accepted when no other bound is configured.
pub const DEFAULT_BETA_MAX: f64 = 1.0;

/// Bound on the sum of log height ratios before a schedule counts as divergent.
pub const DEFAULT_LOG_RATIO_BOUND: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyParams {
    pub m: f64,
    pub beta: f64,
    pub q: usize,
}

impl FrequencyParams {
    pub fn new(m: f64, beta: f64, q: usize) -> Result<Self> {
        Self::with_beta_max(m, beta, q, DEFAULT_BETA_MAX)
    }

    pub fn with_beta_max(m: f64, beta: f64, q: usize, beta_max: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(invalid(format!("m must be positive and finite, got {m}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        if beta > beta_max {
            return Err(invalid(format!("beta {beta} exceeds the bound {beta_max}")));
        }
        let inv = (1.0 / beta).round();
        if inv < 1.0 || 1.0 / inv != beta {
            return Err(invalid(format!("1/beta must be an integer, got beta = {beta}")));
        }
        if q == 0 {
            return Err(invalid("q must be at least 1"));
        }
        Ok(Self { m, beta, q })
    }

    /// `1 / beta` as an integer.
    pub fn inverse_beta(&self) -> u64 {
        (1.0 / self.beta).round() as u64
    }

    fn scale(&self) -> f64 {
        self.m * self.q as f64 / (self.beta * self.beta)
    }

    /// The unshifted frequency `m q / beta^2 * exp(beta y / q)`.
    pub fn omega(&self, y: f64) -> f64 {
        self.scale() * (self.beta * y / self.q as f64).exp()
    }

    /// The frequency measured from its value at zero, evaluated without
    /// cancellation.
    pub fn shifted_omega(&self, y: f64) -> f64 {
        self.scale() * (self.beta * y / self.q as f64).exp_m1()
    }

    /// Shifted frequencies at `y = 0, ..., q - 1`.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.q).map(|y| self.shifted_omega(y as f64)).collect()
    }

    /// Distance between the smallest and the largest frequency.
    pub fn spread(&self) -> f64 {
        self.shifted_omega((self.q - 1) as f64)
    }

    /// Height of the tower this stage cuts; equals the gap between the first
    /// two copies, so the first spacer is empty.
    pub fn base_height(&self) -> f64 {
        self.shifted_omega(1.0)
    }

    /// The `m` that gives a stage with these `beta` and `q` the base height `h`.
    pub fn m_for_height(h: f64, beta: f64, q: usize) -> f64 {
        h * beta * beta / (q as f64 * (beta / q as f64).exp_m1())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageGeometry {
    /// Height of the tower being cut.
    pub h: f64,
    /// Offsets of the `q` copies.
    pub positions: Vec<f64>,
    /// Spacer lengths between copy `j` and copy `j + 1`.
    pub spacers: Vec<f64>,
    /// Height of the next tower.
    pub h_next: f64,
}

impl StageGeometry {
    /// `h_next / (q h)`, the factor by which the tower outgrows its copies.
    pub fn height_ratio(&self) -> f64 {
        self.h_next / (self.positions.len() as f64 * self.h)
    }
}

pub fn derive_stage_geometry(p: &FrequencyParams) -> Result<StageGeometry> {
    let h = p.base_height();
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid(format!("tower height {h} is not positive and finite")));
    }
    let positions = p.frequencies();
    let q = p.q;
    let mut spacers = Vec::with_capacity(q.saturating_sub(1));
    for j in 0..q.saturating_sub(1) {
        let gap = positions[j + 1] - positions[j];
        let expected = h * (p.beta * j as f64 / q as f64).exp();
        if !(gap > 0.0) || !positions[j + 1].is_finite() || (gap - expected).abs() > 1e-6 * expected {
            return Err(Error::NonMonotone { index: j + 1 });
        }
        spacers.push(h * (p.beta * j as f64 / q as f64).exp_m1());
    }
    let h_next = positions[q - 1] + h;
    Ok(StageGeometry { h, positions, spacers, h_next })
}

/// One stage as written in a schedule file. `m` may be left out after the
/// first stage and is then chosen so the stage cuts the previous tower.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    pub beta: f64,
    pub q: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub xis: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub params: FrequencyParams,
    pub geometry: StageGeometry,
}

/// `1 - gamma` at every level of a truncated tower.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GammaProfile {
    pub one_minus_gamma: Vec<f64>,
    /// Sum of log height ratios over the truncated stages.
    pub log_sum: f64,
    /// Sum of log height ratios over scheduled stages past the truncation
    /// depth; `1 - exp(-tail_log_sum)` bounds the truncation error.
    pub tail_log_sum: f64,
}

impl GammaProfile {
    pub fn gamma(&self, level: usize) -> f64 {
        1.0 - self.one_minus_gamma[level]
    }
}

/// `1 - gamma_n` from the height ratios of stages `n, n + 1, ...`, with the
/// tail past the last ratio taken as 1.
pub fn gammas_from_ratios(ratios: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0; ratios.len() + 1];
    for k in (0..ratios.len()).rev() {
        out[k] = out[k + 1] / ratios[k];
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanarFrames {
    /// Frame of each stage, starting from the identity.
    pub psis: Vec<Mat2>,
    /// `q h exp(beta)` per stage.
    pub ells: Vec<f64>,
    /// Cumulative rotation angle of each frame relative to the first.
    pub angles: Vec<f64>,
}

pub fn derive_planar_frames(xis: &[f64], stages: &[Stage]) -> Result<PlanarFrames> {
    let n = stages.len();
    if !xis.is_empty() && xis.len() + 1 < n {
        return Err(Error::ShapeMismatch(format!(
            "{} stages need at least {} shear parameters, got {}",
            n,
            n - 1,
            xis.len()
        )));
    }
    let xi = |k: usize| xis.get(k).copied().unwrap_or(0.0);
    let mut psis = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    let mut psi = Mat2::IDENTITY;
    let mut angle = 0.0;
    for k in 0..n {
        psis.push(psi);
        angles.push(angle);
        psi = Mat2::skew(xi(k)).mul(&psi);
        angle += xi(k).atan();
    }
    let ells = stages
        .iter()
        .map(|s| s.params.q as f64 * s.geometry.h * s.params.beta.exp())
        .collect();
    Ok(PlanarFrames { psis, ells, angles })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TowerSchedule {
    pub stages: Vec<Stage>,
    pub depth: usize,
    pub xis: Vec<f64>,
    pub gammas: GammaProfile,
    pub frames: PlanarFrames,
}

impl TowerSchedule {
    pub fn build(spec: &ScheduleSpec) -> Result<Self> {
        Self::build_with(spec, DEFAULT_BETA_MAX, DEFAULT_LOG_RATIO_BOUND)
    }

    pub fn build_with(spec: &ScheduleSpec, beta_max: f64, log_bound: f64) -> Result<Self> {
        let mut stages: Vec<Stage> = Vec::with_capacity(spec.stages.len());
        for (k, s) in spec.stages.iter().enumerate() {
            let prev = stages.last().map(|st| st.geometry.h_next);
            let m = match (s.m, prev) {
                (Some(m), None) => m,
                (None, None) => return Err(invalid("the first stage needs an explicit m")),
                (None, Some(h)) => FrequencyParams::m_for_height(h, s.beta, s.q),
                (Some(m), Some(h)) => {
                    let found = FrequencyParams::with_beta_max(m, s.beta, s.q, beta_max)?.base_height();
                    if (found - h).abs() > 1e-9 * h {
                        return Err(Error::HeightMismatch { stage: k, expected: h, found });
                    }
                    m
                }
            };
            let params = FrequencyParams::with_beta_max(m, s.beta, s.q, beta_max)?;
            let geometry = derive_stage_geometry(&params)?;
            stages.push(Stage { params, geometry });
        }
        let depth = spec.depth.unwrap_or(stages.len());
        if depth > stages.len() {
            return Err(invalid(format!(
                "depth {depth} exceeds the number of stages {}",
                stages.len()
            )));
        }
        let gammas = derive_gammas(&stages, depth, log_bound)?;
        let frames = derive_planar_frames(&spec.xis, &stages)?;
        Ok(Self { stages, depth, xis: spec.xis.clone(), gammas, frames })
    }

    /// Height of the level-`level` tower, for `level <= depth`.
    pub fn height(&self, level: usize) -> f64 {
        if level < self.stages.len() {
            self.stages[level].geometry.h
        } else {
            self.stages[level - 1].geometry.h_next
        }
    }

    /// Number of level-`from` copies inside the level-`to` tower.
    pub fn copies_between(&self, from: usize, to: usize) -> usize {
        self.stages[from..to].iter().map(|s| s.params.q).product()
    }
}

pub fn derive_gammas(stages: &[Stage], depth: usize, log_bound: f64) -> Result<GammaProfile> {
    let ratios: Vec<f64> = stages[..depth].iter().map(|s| s.geometry.height_ratio()).collect();
    let log_sum: f64 = ratios.iter().map(|r| r.ln()).sum();
    if !(log_sum <= log_bound) {
        return Err(Error::Divergent { log_sum, bound: log_bound });
    }
    let tail_log_sum = stages[depth..].iter().map(|s| s.geometry.height_ratio().ln()).sum();
    Ok(GammaProfile { one_minus_gamma: gammas_from_ratios(&ratios), log_sum, tail_log_sum })
}
