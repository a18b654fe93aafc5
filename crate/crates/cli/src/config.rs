//! Experiment configurations. Unknown keys are rejected, and every field
//! with a default is written back out so a run can be reproduced from its
//! echoed config alone.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rankone::construction::ScheduleSpec;
use rankone::flatness::{QuadratureConfig, Window};
use rankone::flowsim::Profile;
use rankone::riesz::SummabilityCaps;
use rankone::search::{SearchSpec, TorusProbe};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FlatSearchConfig {
    pub search: SearchSpec,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RieszConfig {
    pub schedule: ScheduleSpec,
    /// One window per stage, nested and growing; the last one carries the
    /// evaluation grid.
    pub windows: Vec<Window>,
    /// Grid cells on the positive half of the last window; raised to the
    /// Nyquist minimum when too small.
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_profile_indicator")]
    pub profile: Profile,
    #[serde(default = "default_profile_cells")]
    pub profile_cells: usize,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub caps: SummabilityCaps,
    #[serde(default = "default_zero_radius")]
    pub zero_radius: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FlowConfig {
    pub schedule: ScheduleSpec,
    #[serde(default = "default_profile_indicator")]
    pub profile: Profile,
    #[serde(default = "default_profile_cells")]
    pub profile_cells: usize,
    #[serde(default)]
    pub base_level: usize,
    /// Level of the exact correlation.
    pub level: usize,
    /// Level sampled by Monte-Carlo; the schedule depth when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<usize>,
    pub t_grid: TimeGrid,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct PlaneGrid {
    pub half_width: f64,
    pub cells: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct PlanarConfig {
    pub schedule: ScheduleSpec,
    /// Strip thickness `a` and arm length `b` per stage. When empty they are
    /// generated from `stripSeed` as `a * 4^-n`, `b * 2^n` for stage `n >= 1`.
    #[serde(default)]
    pub strips: Vec<Window>,
    #[serde(default = "default_strip_seed")]
    pub strip_seed: Window,
    pub grid: PlaneGrid,
    #[serde(default = "default_line_tolerance")]
    pub line_tolerance: f64,
    #[serde(default = "default_collapse_threshold")]
    pub collapse_threshold: f64,
    #[serde(default = "default_axis_half_width")]
    pub axis_half_width: f64,
}

impl PlanarConfig {
    pub fn resolved_strips(&self, depth: usize) -> Vec<Window> {
        if !self.strips.is_empty() {
            return self.strips.clone();
        }
        (1..=depth)
            .map(|n| Window { a: self.strip_seed.a * 0.25f64.powi(n as i32), b: self.strip_seed.b * 2f64.powi(n as i32) })
            .collect()
    }
}

pub type TorusConfig = TorusProbe;

fn default_cells() -> usize {
    4096
}
fn default_profile_indicator() -> Profile {
    Profile::Indicator
}
fn default_profile_cells() -> usize {
    64
}
fn default_zero_radius() -> f64 {
    1e-3
}
fn default_samples() -> usize {
    100_000
}
fn default_line_tolerance() -> f64 {
    0.05
}
fn default_collapse_threshold() -> f64 {
    0.1
}
fn default_axis_half_width() -> f64 {
    0.05
}
fn default_strip_seed() -> Window {
    Window { a: 0.8, b: 2.5 }
}
