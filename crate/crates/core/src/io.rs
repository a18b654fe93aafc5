//! Plain-text and image output for sampled densities.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::SampledDensity;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// `tau,value` rows, or `tau,tau2,value` rows with the first axis varying
/// fastest.
pub fn density_csv(d: &SampledDensity) -> String {
    let mut s = String::new();
    match d.axes.as_slice() {
        [ax] => {
            s.push_str("tau,value\n");
            for (k, v) in d.values.iter().enumerate() {
                let _ = writeln!(s, "{},{}", ax.point(k), v);
            }
        }
        [ax, ay] => {
            s.push_str("tau,tau2,value\n");
            for j in 0..ay.count {
                for i in 0..ax.count {
                    let _ = writeln!(s, "{},{},{}", ax.point(i), ay.point(j), d.values[j * ax.count + i]);
                }
            }
        }
        _ => unreachable!("densities are one- or two-dimensional"),
    }
    s
}

pub fn write_density_csv(path: &Path, d: &SampledDensity) -> Result<()> {
    fs::write(path, density_csv(d))?;
    Ok(())
}

/// The value column of a density CSV.
pub fn read_density_values(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty density file".into()))?;
    let cols = header.split(',').count();
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Parse(format!("line {}: expected {cols} fields", i + 2)));
            }
            fields[cols - 1]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// The affine map from (possibly log-scaled) values to gray levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
    pub scale: Scale,
    /// Added before taking logarithms so zeros stay finite.
    pub floor: f64,
}

/// 16-bit binary PGM of a planar density, top row at the largest `tau2`,
/// plus the normalization record.
pub fn pgm_bytes(d: &SampledDensity, scale: Scale) -> Result<(Vec<u8>, Normalization)> {
    let [ax, ay] = d.axes.as_slice() else {
        return Err(Error::ShapeMismatch("PGM output needs a planar density".into()));
    };
    let peak = d.max();
    let floor = match scale {
        Scale::Linear => 0.0,
        Scale::Log if peak > 0.0 => peak * 1e-12,
        Scale::Log => 1.0,
    };
    let map = |v: f64| match scale {
        Scale::Linear => v,
        Scale::Log => (v + floor).ln(),
    };
    let mapped: Vec<f64> = d.values.iter().map(|&v| map(v)).collect();
    let lo = mapped.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mapped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{} {}\n65535\n", ax.count, ay.count).into_bytes();
    out.reserve(2 * mapped.len());
    for j in (0..ay.count).rev() {
        for i in 0..ax.count {
            let v = mapped[j * ax.count + i];
            let level: u16 = if hi > lo { ((v - lo) / (hi - lo) * 65535.0).round() as u16 } else { 32768 };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    Ok((out, Normalization { min: lo, max: hi, scale, floor }))
}

/// Writes `path` and a JSON sidecar with the same stem.
pub fn write_pgm(path: &Path, d: &SampledDensity, scale: Scale) -> Result<Normalization> {
    let (bytes, norm) = pgm_bytes(d, scale)?;
    fs::write(path, bytes)?;
    write_json(&path.with_extension("json"), &norm)?;
    Ok(norm)
}
