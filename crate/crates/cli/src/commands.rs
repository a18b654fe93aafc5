use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::json;

use rankone::construction::TowerSchedule;
use rankone::dd::fixed_sum;
use rankone::error::Error;
use rankone::expsum::{Axis, ExpSum1D, ExpSum2D, Guard, SampledDensity};
use rankone::flatness::measure_flatness;
use rankone::flowsim::{correlation_analytic, correlation_monte_carlo, LevelFunction};
use rankone::io::write_json;
use rankone::planar::{
    classify_regions, render_density, tail_intersection_radii, validate_collapse_condition, PlanarState, StripSet,
};
use rankone::riesz::{
    check_summability, convergence_rate_bound, detect_atom, indicator_seed, window_axis, RieszState, WindowMass,
};
use rankone::search::{scan_flatness, torus_return_time};

use crate::config::{FlatSearchConfig, FlowConfig, PlanarConfig, RieszConfig, TorusConfig};

/// How a successful run ended.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotFound,
}

pub fn echo_config<T: Serialize>(out: &Path, cfg: &T) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("resolved_config.json"), cfg)?;
    Ok(())
}

pub fn flat_search(cfg: &FlatSearchConfig, out: &Path) -> Result<Outcome> {
    let scanned = scan_flatness(&cfg.search, &cfg.quadrature)?;
    let hits: Vec<usize> = scanned.iter().filter(|h| h.report.l1_defect < cfg.search.eps).map(|h| h.q).collect();
    let selected = hits.first().copied();
    write_json(&out.join("flat_search.json"), &json!({ "scanned": scanned, "hits": hits, "selected": selected }))?;
    Ok(if selected.is_some() { Outcome::Done } else { Outcome::NotFound })
}

pub fn torus(cfg: &TorusConfig, out: &Path) -> Result<Outcome> {
    let t = torus_return_time(cfg)?;
    write_json(&out.join("torus.json"), &json!({ "returnTime": t }))?;
    Ok(if t.is_some() { Outcome::Done } else { Outcome::NotFound })
}

/// Window mass of a half-window density restricted to a narrower window.
fn mass_inside(d: &SampledDensity, a: f64, b: f64) -> f64 {
    let ax = d.axes[0];
    let inside: Vec<f64> =
        (0..ax.count).filter(|&k| ax.point(k) > a && ax.point(k) < b).map(|k| d.values[k]).collect();
    2.0 * fixed_sum(&inside) * ax.step
}

pub fn riesz(cfg: &RieszConfig, out: &Path) -> Result<Outcome> {
    if cfg.schedule.stages.is_empty() {
        return Ok(Outcome::Done);
    }
    let schedule = TowerSchedule::build(&cfg.schedule)?;
    let Some(&eval) = cfg.windows.last() else { bail!("riesz needs at least one window") };
    for w in cfg.windows.windows(2) {
        if !(w[1].a <= w[0].a && w[1].b >= w[0].b) {
            bail!("windows must be nested and growing");
        }
    }
    let sums: Vec<ExpSum1D> = schedule.stages[..schedule.depth]
        .iter()
        .map(|s| ExpSum1D::from_params(&s.params))
        .collect::<Result<_, _>>()?;
    let finest = sums.iter().map(|s| s.nyquist_step()).fold(f64::INFINITY, f64::min);
    let needed = if finest.is_finite() { ((eval.b - eval.a) / finest).ceil() as usize } else { 1 };
    let axis = window_axis(&eval, cfg.cells.max(needed))?;
    let omg = schedule.gammas.one_minus_gamma[0];
    let seed = match cfg.profile {
        rankone::flowsim::Profile::Indicator => indicator_seed(schedule.height(0), &axis)?,
        p => LevelFunction::from_profile(p, 0, schedule.height(0), cfg.profile_cells, omg)?
            .spectral_density(omg, &axis)?,
    };
    let mut state = RieszState::new(eval, seed)?;
    let mut flatness = Vec::new();
    for (k, s) in sums.iter().enumerate() {
        state.accumulate(&s.eval_grid(&axis, Guard::Enforce)?)?;
        let g = cfg.windows.get(k).copied().unwrap_or(eval);
        flatness.push(measure_flatness(s, &g, &cfg.quadrature)?);
    }
    let certificate = check_summability(&state.stages, &cfg.caps);
    let rate = convergence_rate_bound(&state.stages, &eval);
    let masses: Vec<WindowMass> = cfg
        .windows
        .iter()
        .map(|w| WindowMass { inner: w.a, outer: w.b, mass: mass_inside(&state.density, w.a, w.b) })
        .collect();
    let atom = detect_atom(&masses, cfg.zero_radius)?;
    state.save(out)?;
    write_json(
        &out.join("diagnostics.json"),
        &json!({ "stages": state.stages, "certificate": certificate, "rateBound": rate, "flatness": flatness }),
    )?;
    write_json(&out.join("atom.json"), &atom)?;
    Ok(Outcome::Done)
}

pub fn flow(cfg: &FlowConfig, out: &Path) -> Result<Outcome> {
    let schedule = TowerSchedule::build(&cfg.schedule)?;
    let top = cfg.top.unwrap_or(schedule.depth);
    let base = cfg.base_level;
    let f = LevelFunction::from_profile(
        cfg.profile,
        base,
        schedule.height(base),
        cfg.profile_cells,
        schedule.gammas.one_minus_gamma[base],
    )?;
    let ts = cfg.t_grid.points();
    let exact = correlation_analytic(&f, &schedule, cfg.level, &ts)?;
    let mut mc = Vec::with_capacity(ts.len());
    for &t in &ts {
        mc.push(correlation_monte_carlo(&f, &schedule, top, t, cfg.samples, cfg.seed)?);
    }
    let mut a = String::from("t,Re,Im,stderr\n");
    let mut m = String::from("t,Re,Im,stderr\n");
    let gamma = schedule.gammas.gamma(cfg.level);
    let h = schedule.height(cfg.level);
    let mut checks = Vec::new();
    for ((&t, r), e) in ts.iter().zip(&exact).zip(&mc) {
        let _ = writeln!(a, "{},{},{},0", t, r.re, r.im);
        let _ = writeln!(m, "{},{},{},{}", t, e.mean.re, e.mean.im, e.stderr);
        let bound = gamma + t.abs() / h + 3.0 * e.stderr;
        let gap = (r - e.mean).norm();
        checks.push(json!({ "t": t, "gap": gap, "bound": bound, "escaped": e.escaped, "within": gap <= bound }));
    }
    fs::write(out.join("correlation_analytic.csv"), a)?;
    fs::write(out.join("correlation.csv"), m)?;
    write_json(
        &out.join("flow.json"),
        &json!({ "level": cfg.level, "top": top, "gamma": gamma, "height": h, "checks": checks }),
    )?;
    Ok(Outcome::Done)
}

pub fn planar(cfg: &PlanarConfig, out: &Path) -> Result<Outcome> {
    let schedule = TowerSchedule::build(&cfg.schedule)?;
    let depth = schedule.depth;
    let strips = cfg.resolved_strips(depth);
    if strips.len() < depth {
        return Err(Error::ShapeMismatch(format!("{depth} stages need {depth} strips")).into());
    }
    let axis = Axis::midpoints(-cfg.grid.half_width, cfg.grid.half_width, cfg.grid.cells)?;
    let seed1 = indicator_seed(schedule.height(0), &axis)?.values;
    let seed: Vec<f64> = seed1.iter().flat_map(|&y| seed1.iter().map(move |&x| x * y)).collect();
    let mut state = PlanarState::new(SampledDensity::plane(axis, axis, seed)?)?;
    let mut ratios = vec![state.axis_strip_mass_ratio(cfg.axis_half_width)];
    for (k, stage) in schedule.stages[..depth].iter().enumerate() {
        let s = ExpSum1D::from_params(&stage.params)?;
        let st = ExpSum2D::new(s.clone(), s, schedule.frames.psis[k])?;
        let strip = StripSet::for_stage(&st, strips[k].a, strips[k].b)?;
        state.accumulate(&st, strip)?;
        ratios.push(state.axis_strip_mass_ratio(cfg.axis_half_width));
    }
    render_density(&state, &out.join("density.pgm"))?;
    let map = classify_regions(&state, cfg.line_tolerance)?;
    let m = map.masses;
    fs::write(
        out.join("regions.csv"),
        format!(
            "region,mass\nmultiplyCovered,{}\nlimitLine,{}\nfree,{}\ntotal,{}\n",
            m.multiply_covered, m.limit_line, m.free, m.total
        ),
    )?;
    let thickness: Vec<f64> = strips.iter().map(|w| w.a).collect();
    let collapse = if schedule.xis.is_empty() {
        None
    } else {
        Some(validate_collapse_condition(&schedule.xis, &thickness, cfg.collapse_threshold)?)
    };
    let radii: Vec<Option<f64>> =
        tail_intersection_radii(&state.strips).into_iter().map(|r| r.is_finite().then_some(r)).collect();
    write_json(
        &out.join("planar.json"),
        &json!({
            "stages": state.stages,
            "axisStripMassRatios": ratios,
            "tailRadii": radii,
            "collapse": collapse,
        }),
    )?;
    Ok(Outcome::Done)
}
