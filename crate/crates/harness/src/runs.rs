//! Experiment orchestration. Every runner returns a [`Record`]; per-cell
//! numerical failures are recorded in the unit instead of aborting the run.

use std::time::Instant;

use equidist_core::analysis::{self, ErrorSeries, SeriesPoint, TestFunction};
use equidist_core::bergman::{dimension_report, kernel_bound_report, BergmanConfig, SectionSpace};
use equidist_core::sampling::{sample_tuple, RngStream};
use equidist_core::space::fibonacci_points;
use equidist_core::weights::Weight;
use equidist_core::zeros::resultant_nonzero;
use equidist_core::{ModelSpace, Point};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::record::Record;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn bergman_config(cfg: &ExperimentConfig) -> BergmanConfig {
    BergmanConfig { tol: cfg.gram_tol, ..BergmanConfig::default() }
}

/// Grid of `n` nearly uniform points on the configured space. On P¹×P¹ the
/// grid is the product of two ⌈√n⌉-point grids.
pub fn grid_points(space: ModelSpace, n: usize) -> Vec<Point> {
    match space {
        ModelSpace::Sphere => fibonacci_points(n).into_iter().map(Point::Sphere).collect(),
        ModelSpace::SphereProduct => {
            let m = (n as f64).sqrt().ceil() as usize;
            let f = fibonacci_points(m);
            f.iter().flat_map(|&a| f.iter().map(move |&b| Point::Product(a, b))).collect()
        }
    }
}

/// The configured subset of the battery, in battery order.
pub fn selected_battery(cfg: &ExperimentConfig, w: &Weight) -> Vec<(String, TestFunction)> {
    analysis::battery(w).into_iter().filter(|(n, _)| cfg.battery.is_empty() || cfg.battery.contains(n)).collect()
}

fn finish(mut rec: Record, t: Instant) -> Record {
    rec.wall_clock_s = t.elapsed().as_secs_f64();
    rec
}

pub fn run_kernel(cfg: &ExperimentConfig) -> Result<Record, RunError> {
    let t = Instant::now();
    let w = cfg.weight_for(cfg.space)?;
    let pts = grid_points(cfg.space, cfg.grid_points);
    let mut rec = Record::new("kernel", cfg);
    let mut rows = Vec::new();
    for &p in &cfg.p {
        match SectionSpace::build(&w, p, &bergman_config(cfg)) {
            Ok(sp) => {
                let values: Vec<f64> = pts.par_iter().map(|pt| sp.kernel(pt)).collect();
                let r = kernel_bound_report(&sp, &pts);
                rows.push(json!({"p": p, "min": r.min, "max": r.max, "scaled_sup": r.scaled_sup}));
                rec.push(json!({"p": p, "dim": sp.dim(), "gram": format!("{:?}", sp.kind), "report": r, "kernel": values}));
            }
            Err(e) => rec.push(json!({"p": p, "error": e.to_string()})),
        }
    }
    rec.summary = json!({ "ladder": rows });
    Ok(finish(rec, t))
}

pub fn run_dim(cfg: &ExperimentConfig) -> Result<Record, RunError> {
    let t = Instant::now();
    let w = cfg.weight_for(cfg.space)?;
    let mut rec = Record::new("dim", cfg);
    let reports: Vec<_> = cfg.p.iter().map(|&p| dimension_report(&w, p)).collect();
    for r in &reports {
        rec.push(r);
    }
    let ratios = reports.iter().map(|r| r.ratio);
    let (lo, hi) = ratios.clone().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r), b.max(r)));
    rec.summary = json!({ "ratio_min": lo, "ratio_max": hi });
    Ok(finish(rec, t))
}

/// Deterministic ⟨γ_p/p − c₁, χ⟩ ladders per test function.
pub fn run_converge_fs(cfg: &ExperimentConfig) -> Result<Record, RunError> {
    let t = Instant::now();
    let w = cfg.weight_for(cfg.space)?;
    let battery = selected_battery(cfg, &w);
    let mut rec = Record::new("converge-fs", cfg);
    let spaces: Vec<_> = cfg.p.iter().map(|&p| SectionSpace::build(&w, p, &bergman_config(cfg))).collect();
    let mut summaries = Vec::new();
    for (name, chi) in &battery {
        let mut series = Vec::new();
        for (sp, &p) in spaces.iter().zip(&cfg.p) {
            let cell = match sp {
                Ok(sp) => analysis::fs_current_error(sp, chi).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            match cell {
                Ok(e) => {
                    series.push((p, e.error));
                    rec.push(json!({"p": p, "chi": name, "error": e.error, "log_dist_term": e.log_dist_term}));
                }
                Err(msg) => rec.push(json!({"p": p, "chi": name, "error_message": msg})),
            }
        }
        let mut s = json!({"chi": name});
        if let Ok(es) = ErrorSeries::from_pairs("deterministic FS error", &series) {
            s["convergence"] = json!(analysis::fswedge_convergence(&es));
            if let Ok(fit) = analysis::rate_fit(&es, cfg.rate_target) {
                s["rate_fit"] = json!(fit);
            }
            s["csv"] = json!(es.to_csv());
        }
        summaries.push(s);
    }
    rec.summary = json!({ "series": summaries });
    Ok(finish(rec, t))
}

/// Monte Carlo zero ensembles over the p ladder, paired with the battery.
pub fn run_converge_zeros(cfg: &ExperimentConfig) -> Result<Record, RunError> {
    if cfg.samples < 30 {
        return Err(RunError::Precondition(format!("samples = {} but at least 30 are needed", cfg.samples)));
    }
    let t = Instant::now();
    let w = cfg.weight_for(cfg.space)?;
    let battery = selected_battery(cfg, &w);
    let chis: Vec<TestFunction> = battery.iter().map(|b| b.1).collect();
    let spec = cfg.rate_spec();
    let tol = cfg.zero_tolerances();
    let mut rec = Record::new("converge-zeros", cfg);
    let mut per_p = Vec::new();
    for &p in &cfg.p {
        let sp = SectionSpace::build(&w, p, &bergman_config(cfg)).map_err(|e| RunError::Numerical(e.to_string()))?;
        let stream = RngStream::new(cfg.seed, "converge-zeros", p, 0);
        let reports = analysis::mc_zero_errors(&sp, &chis, cfg.samples, &stream, &tol).map_err(|e| RunError::Numerical(e.to_string()))?;
        for (i, &k) in reports[0].kept.iter().enumerate() {
            let errors: Vec<f64> = reports.iter().map(|r| r.errors[i]).collect();
            rec.push(json!({"p": p, "sample": k, "rng": stream.with_sample(k).path(), "mass": reports[0].masses[i], "errors": errors}));
        }
        let mass = analysis::wedge_mass_check(cfg.space, p, &reports[0].masses);
        per_p.push((p, reports, mass));
    }
    let mut summaries = Vec::new();
    for (j, (name, _)) in battery.iter().enumerate() {
        let (p0, r0, _) = &per_p[0];
        let c = spec.c.unwrap_or_else(|| spec.fit_c(*p0, &r0[j].errors));
        let mut rows = Vec::new();
        let mut means = Vec::new();
        let mut fractions = Vec::new();
        for (p, reports, _) in &per_p {
            let r = &reports[j];
            let frac = r.exceedance(spec.threshold(*p, c));
            fractions.push((*p, frac));
            means.push(SeriesPoint { p: *p, value: r.mean, se: Some(r.se) });
            rows.push(json!({
                "p": p, "mean": r.mean, "se": r.se, "quantiles": r.quantiles, "limit_pairing": r.limit_pairing,
                "threshold": spec.threshold(*p, c), "exceedance": frac, "excluded": r.excluded, "flagged": r.flagged,
            }));
        }
        let mut s = json!({"chi": name, "c": c, "ladder": rows});
        if let Ok(es) = ErrorSeries::new("MC mean", means) {
            if let Ok(fit) = analysis::rate_fit(&es, spec.target) {
                s["rate_fit"] = json!(fit);
            }
            s["csv"] = json!(es.to_csv());
        }
        s["xi"] = json!(analysis::fit_exceedance_exponent(&spec, c, w.n(), &fractions));
        summaries.push(s);
    }
    let masses: Vec<_> = per_p.iter().map(|(p, _, m)| json!({"p": p, "mass": m})).collect();
    rec.summary = json!({ "series": summaries, "wedge_mass": masses });
    Ok(finish(rec, t))
}

/// Fraction of sampled pairs on P¹×P¹ with a nonzero resultant.
pub fn run_bertini(cfg: &ExperimentConfig) -> Result<Record, RunError> {
    let t = Instant::now();
    let w = cfg.weight_for(ModelSpace::SphereProduct)?;
    let mut rec = Record::new("bertini", cfg);
    let mut rows = Vec::new();
    for &p in &cfg.p {
        let sp = SectionSpace::build(&w, p, &bergman_config(cfg)).map_err(|e| RunError::Numerical(e.to_string()))?;
        let stream = RngStream::new(cfg.seed, "bertini", p, 0);
        let res: Vec<(bool, f64)> = (0..cfg.samples as u64)
            .into_par_iter()
            .map(|k| {
                let s = sample_tuple(&[&sp, &sp], &stream.with_sample(k));
                resultant_nonzero(&s[0].section, &s[1].section)
            })
            .collect();
        for (k, (nz, ratio)) in res.iter().enumerate() {
            rec.push(json!({"p": p, "sample": k, "nonzero": nz, "hadamard_ratio": ratio}));
        }
        let frac = res.iter().filter(|r| r.0).count() as f64 / res.len().max(1) as f64;
        rows.push(json!({"p": p, "fraction_nonzero": frac}));
    }
    rec.summary = json!({ "ladder": rows });
    Ok(finish(rec, t))
}

fn csv_value(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => crate::record::cell(n.as_f64().unwrap_or(f64::NAN)),
        serde_json::Value::Number(n) => n.to_string(),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Bool(b) => b.to_string(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn table(columns: &[&str], objects: impl IntoIterator<Item = serde_json::Value>) -> String {
    let rows: Vec<Vec<String>> = objects.into_iter().map(|o| columns.iter().map(|c| csv_value(&o[*c])).collect()).collect();
    crate::record::csv(columns, &rows)
}

/// CSV summary of a record, one row per ladder cell.
pub fn summary_csv(rec: &Record) -> Option<String> {
    let ladder = |v: &serde_json::Value| v.as_array().cloned().unwrap_or_default();
    match rec.kind.as_str() {
        "kernel" => Some(table(&["p", "min", "max", "scaled_sup"], ladder(&rec.summary["ladder"]))),
        "bertini" => Some(table(&["p", "fraction_nonzero"], ladder(&rec.summary["ladder"]))),
        "dim" => Some(table(&["p", "dim", "ratio", "excluded"], rec.units.clone())),
        "converge-fs" => Some(table(&["chi", "p", "error", "log_dist_term"], rec.units.iter().filter(|u| u["error"].is_number()).cloned())),
        "converge-zeros" => {
            let rows = ladder(&rec.summary["series"]).into_iter().flat_map(|s| {
                ladder(&s["ladder"]).into_iter().map(move |mut r| {
                    r["chi"] = s["chi"].clone();
                    r
                })
            });
            Some(table(&["chi", "p", "mean", "se", "threshold", "exceedance", "excluded"], rows))
        }
        "verify" => Some(table(&["id", "name", "pass", "runtime_s"], rec.units.clone())),
        _ => None,
    }
}
