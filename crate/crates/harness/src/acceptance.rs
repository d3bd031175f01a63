//! The acceptance suite. Presets, ladders and tolerances are fixed here; the
//! configuration supplies the seed, the ensemble size N, the zero-extraction
//! tolerances and the grid resolution.

use std::time::Instant;

use equidist_core::analysis::{self, RateBoundSpec, TestFunction};
use equidist_core::bergman::{base_locus_min, dimension_report, kernel_bound_report, SectionSpace};
use equidist_core::sampling::{sample_section, sample_tuple, RngStream};
use equidist_core::weights::Weight;
use equidist_core::zeros::{common_zeros_product, resultant_nonzero, PoincareLelong, roots_sphere};
use equidist_core::ModelSpace;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::runs::{bergman_config, grid_points, RunError};

/// Sphere presets exercised by the mass and Poincaré–Lelong criteria.
pub const SPHERE_PRESETS: &[&str] = &[
    "fs",
    "fs+softpole(0,0.3)",
    "fs+logpole(0,0.3)",
    "fs+logpole(0.2+0.3i,0.3)",
    "fs+cone(0,0.5,0.1)",
    "fs+poincare(0,0.1)",
];
/// The ε = 0.3 pole preset of the ensemble and envelope criteria.
pub const POLE_PRESET: &str = "fs+softpole(0,0.3)";
/// Hölder-with-singularities preset of the kernel bound criterion. The
/// bounds need c₁ ≥ εω, which the cutoff poles violate in their annulus.
pub const HOLDER_PRESET: &str = "fs+softpole(0,0.3)";
/// Isolated-singularity preset on P¹×P¹.
pub const PRODUCT_PRESET: &str = "fs+softjointpole(0,0,0.15)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    /// Numbers the verdict was computed from; they feed the suite digest.
    pub values: Vec<f64>,
    pub runtime_s: f64,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!("[{}] criterion {}: {} ({}; {:.1}s)", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.detail, self.runtime_s)
    }

    fn digest_into(&self, h: &mut Sha256) {
        h.update(self.id.to_le_bytes());
        h.update([self.pass as u8]);
        h.update(self.detail.as_bytes());
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
    }
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Result<(bool, String, Vec<f64>), RunError>) -> Criterion {
    let t = Instant::now();
    let (pass, detail, values) = f().unwrap_or_else(|e| (false, format!("error: {e}"), Vec::new()));
    Criterion { id, name: name.to_string(), pass, detail, values, runtime_s: t.elapsed().as_secs_f64() }
}

fn num<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Numerical(e.to_string())
}

fn preset(space: ModelSpace, name: &str) -> Result<Weight, RunError> {
    Weight::preset(space, name).map_err(num)
}

fn build(w: &Weight, p: usize, cfg: &ExperimentConfig) -> Result<SectionSpace, RunError> {
    SectionSpace::build(w, p, &bergman_config(cfg)).map_err(num)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// P_p ≡ p+1 for the Fubini–Study weight and Beta-integral Gram entries.
pub fn criterion_1(cfg: &ExperimentConfig) -> Criterion {
    run(1, "Fubini-Study kernel and Gram benchmark", || {
        let t = Instant::now();
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let pts = grid_points(ModelSpace::Sphere, cfg.grid_points);
        let (mut kernel_err, mut gram_err) = (0.0f64, 0.0f64);
        for p in [4usize, 8, 16, 32, 64] {
            let sp = build(&w, p, cfg)?;
            let e = pts.par_iter().map(|pt| (sp.kernel(pt) / (p + 1) as f64 - 1.0).abs()).reduce(|| 0.0, f64::max);
            kernel_err = kernel_err.max(e);
            if p <= 32 {
                for i in 0..=p {
                    let exact = (ln_factorial(i) + ln_factorial(p - i) - ln_factorial(p + 1)).exp();
                    for j in 0..=p {
                        let g = sp.gram_entry(i, j);
                        let e = if i == j { (g.re / exact - 1.0).abs() + g.im.abs() / exact } else { g.norm() / exact };
                        gram_err = gram_err.max(e);
                    }
                }
            }
        }
        let secs = t.elapsed().as_secs_f64();
        let pass = kernel_err <= 1e-6 && gram_err <= 1e-8 && secs <= 120.0;
        Ok((pass, format!("max kernel rel err {kernel_err:.2e} <= 1e-6, max Gram rel err {gram_err:.2e} <= 1e-8, {secs:.1}s <= 120s"), vec![kernel_err, gram_err]))
    })
}

/// Dimensions follow the integrability rule j > pε − 1 and dim/p stays bounded.
pub fn criterion_2(cfg: &ExperimentConfig) -> Criterion {
    run(2, "base-locus dimension law", || {
        // ε = num/den exactly, so the rule j > pε − 1 is checked in integers.
        let mut mismatches = Vec::new();
        let (mut lo, mut hi, mut drift) = (f64::INFINITY, 0.0f64, 0.0f64);
        let mut values = Vec::new();
        for (num_, den, eps) in [(1usize, 5usize, "0.2"), (7, 20, "0.35")] {
            let w = preset(ModelSpace::Sphere, &format!("fs+softpole(0,{eps})"))?;
            for p in 1..=64usize {
                let oracle = (0..=p).filter(|&j| j * den + den > p * num_).count();
                let sp = build(&w, p, cfg)?;
                let rep = dimension_report(&w, p);
                if sp.dim() != oracle || rep.dim != oracle || base_locus_min(p, num_ as f64 / den as f64) != p + 1 - oracle {
                    mismatches.push((eps, p));
                }
                lo = lo.min(rep.ratio);
                hi = hi.max(rep.ratio);
                // dim/p → 1 − ε with an O(1/p) lattice correction.
                drift = drift.max((rep.ratio - (1.0 - num_ as f64 / den as f64)).abs() * p as f64);
                values.push(rep.ratio);
            }
        }
        let c = hi.max(1.0 / lo);
        let pass = mismatches.is_empty() && c <= 2.0 && drift <= 2.0;
        Ok((pass, format!("{} dimension mismatches, dim/p in [{lo:.3}, {hi:.3}] (C = {c:.3} <= 2), p·|dim/p − (1−ε)| <= {drift:.3} <= 2", mismatches.len()), values))
    })
}

/// Zero counts: p on P¹ (100%), 2p² on P¹×P¹ (≥ 99%), nonzero resultants at p = 6.
pub fn criterion_3(cfg: &ExperimentConfig) -> Criterion {
    run(3, "mass conservation and empirical Bertini", || {
        let tol = cfg.zero_tolerances();
        let n = cfg.samples as u64;
        let mut sphere_bad = 0usize;
        let mut sphere_total = 0usize;
        for name in SPHERE_PRESETS {
            let w = preset(ModelSpace::Sphere, name)?;
            for p in [8usize, 16, 32] {
                let sp = build(&w, p, cfg)?;
                let st = RngStream::new(cfg.seed, "mass-sphere", p, 0);
                sphere_bad += (0..n)
                    .into_par_iter()
                    .map(|k| {
                        let s = sample_section(&sp, &st.with_sample(k)).section;
                        roots_sphere(&s, &tol).map_or(1, |m| (m.total_multiplicity() != p || m.flagged) as usize)
                    })
                    .sum::<usize>();
                sphere_total += n as usize;
            }
        }
        let mut worst_product = 1.0f64;
        let mut product_fracs = Vec::new();
        for name in ["fs", PRODUCT_PRESET] {
            let w = preset(ModelSpace::SphereProduct, name)?;
            for p in [2usize, 4, 6, 8] {
                let sp = build(&w, p, cfg)?;
                let st = RngStream::new(cfg.seed, "mass-product", p, 0);
                let ok = (0..200u64)
                    .into_par_iter()
                    .map(|k| {
                        let s = sample_tuple(&[&sp, &sp], &st.with_sample(k));
                        common_zeros_product(&s[0].section, &s[1].section, &tol)
                            .map_or(0, |m| (m.total_multiplicity() == 2 * p * p && !m.flagged) as usize)
                    })
                    .sum::<usize>();
                let f = ok as f64 / 200.0;
                product_fracs.push(f);
                worst_product = worst_product.min(f);
            }
        }
        let w = Weight::fubini_study(ModelSpace::SphereProduct);
        let sp = build(&w, 6, cfg)?;
        let st = RngStream::new(cfg.seed, "bertini", 6, 0);
        let nonzero = (0..500u64)
            .into_par_iter()
            .map(|k| {
                let s = sample_tuple(&[&sp, &sp], &st.with_sample(k));
                resultant_nonzero(&s[0].section, &s[1].section).0 as usize
            })
            .sum::<usize>();
        let pass = sphere_bad == 0 && worst_product >= 0.99 && nonzero == 500;
        let mut values = product_fracs;
        values.extend([sphere_bad as f64, nonzero as f64]);
        Ok((
            pass,
            format!("sphere {sphere_bad}/{sphere_total} bad (need 0), product worst fraction {worst_product:.3} >= 0.99, nonzero resultants {nonzero}/500"),
            values,
        ))
    })
}

/// Poincaré–Lelong residual ≤ 1e−4 for 50 sections per preset and p.
pub fn criterion_4(cfg: &ExperimentConfig) -> Criterion {
    run(4, "Poincare-Lelong self-consistency", || {
        let mut worst: f64 = 0.0;
        let mut worst_at = String::new();
        let mut values = Vec::new();
        for name in SPHERE_PRESETS {
            let w = preset(ModelSpace::Sphere, name)?;
            let chis: Vec<TestFunction> = analysis::battery(&w).into_iter().map(|b| b.1).collect();
            for p in [8usize, 16, 32] {
                let sp = build(&w, p, cfg)?;
                let pl = PoincareLelong::new(&w, &chis, p).map_err(num)?;
                let st = RngStream::new(cfg.seed, "poincare-lelong", p, 0);
                let r: Vec<f64> = (0..50u64)
                    .into_par_iter()
                    .map(|k| {
                        let s = sample_section(&sp, &st.with_sample(k)).section;
                        pl.residuals(&s).map_or(f64::INFINITY, |r| r.into_iter().fold(0.0, f64::max))
                    })
                    .collect();
                let m = r.iter().copied().fold(0.0, f64::max);
                values.push(m);
                if m > worst || worst_at.is_empty() {
                    worst = worst.max(m);
                    worst_at = format!("{name} p={p}");
                }
            }
        }
        Ok((worst <= 1e-4, format!("max residual {worst:.2e} <= 1e-4 (at {worst_at})"), values))
    })
}

/// One ensemble of the pole preset, shared by criteria 5 and 8.
pub struct PoleEnsemble {
    pub names: Vec<String>,
    /// (p, per-χ reports, per-χ FS pairings ⟨γ_p/p, χ⟩).
    pub ladder: Vec<(usize, Vec<analysis::McReport>, Vec<f64>)>,
}

pub fn pole_ensemble(cfg: &ExperimentConfig) -> Result<PoleEnsemble, RunError> {
    let w = preset(ModelSpace::Sphere, POLE_PRESET)?;
    let battery = analysis::battery(&w);
    let chis: Vec<TestFunction> = battery.iter().map(|b| b.1).collect();
    let mut ladder = Vec::new();
    for p in [8usize, 16, 32] {
        let sp = build(&w, p, cfg)?;
        let st = RngStream::new(cfg.seed, "pole-ensemble", p, 0);
        let reports = analysis::mc_zero_errors(&sp, &chis, cfg.samples, &st, &cfg.zero_tolerances()).map_err(num)?;
        let fs = chis.iter().map(|chi| analysis::fs_pairing(&sp, chi)).collect::<Result<Vec<_>, _>>().map_err(num)?;
        ladder.push((p, reports, fs));
    }
    Ok(PoleEnsemble { names: battery.into_iter().map(|b| b.0).collect(), ladder })
}

/// |MC mean of zero pairings − FS pairing| ≤ 3·SE.
pub fn criterion_5(ens: &Result<PoleEnsemble, String>) -> Criterion {
    run(5, "expectation identity", || {
        let ens = ens.as_ref().map_err(|e| RunError::Numerical(e.clone()))?;
        let mut worst = 0.0f64;
        let mut fails = Vec::new();
        let mut values = Vec::new();
        for (p, reports, fs) in &ens.ladder {
            for ((r, f), name) in reports.iter().zip(fs).zip(&ens.names) {
                let z = (r.mean + r.limit_pairing - f).abs() / r.se;
                values.extend([r.mean, r.se, *f]);
                worst = worst.max(z);
                if !(z <= 3.0) {
                    fails.push(format!("{name}@{p}"));
                }
            }
        }
        Ok((fails.is_empty(), format!("worst |mean − FS pairing|/SE = {worst:.2} <= 3, failing: [{}]", fails.join(" ")), values))
    })
}

/// Deterministic error of flat test functions within 2·C₈·log p/p and decreasing.
pub fn criterion_6(cfg: &ExperimentConfig) -> Criterion {
    run(6, "deterministic error envelope", || {
        let w = preset(ModelSpace::Sphere, POLE_PRESET)?;
        let flat: Vec<(String, TestFunction)> = analysis::battery(&w).into_iter().filter(|(_, chi)| chi.flat_near().is_some()).collect();
        let ladder = [8usize, 16, 32, 64];
        let spaces = ladder.iter().map(|&p| build(&w, p, cfg)).collect::<Result<Vec<_>, _>>()?;
        let mut fails = Vec::new();
        let mut values = Vec::new();
        for (name, chi) in &flat {
            let e = spaces.iter().map(|sp| analysis::fs_current_error(sp, chi).map(|r| r.error.abs())).collect::<Result<Vec<_>, _>>().map_err(num)?;
            let c8 = e[0] * 8.0 / 8f64.ln();
            let env_ok = ladder.iter().zip(&e).skip(1).all(|(&p, &x)| x <= 2.0 * c8 * (p as f64).ln() / p as f64);
            let decreasing = e.windows(2).all(|w| w[1] < w[0]);
            if !(env_ok && decreasing) {
                let e: Vec<String> = e.iter().map(|x| format!("{x:.2e}")).collect();
                fails.push(format!("{name} [{}]", e.join(" ")));
            }
            values.extend(&e);
        }
        let pass = !flat.is_empty() && fails.is_empty();
        Ok((pass, format!("{} flat test functions, failing: [{}]", flat.len(), fails.join("; ")), values))
    })
}

/// Uniform lower bound and scaled upper bound of P_p from p = 8 to p = 64.
pub fn criterion_7(cfg: &ExperimentConfig) -> Criterion {
    run(7, "kernel bounds", || {
        let w = preset(ModelSpace::Sphere, HOLDER_PRESET)?;
        let pts = grid_points(ModelSpace::Sphere, cfg.grid_points);
        let r8 = kernel_bound_report(&build(&w, 8, cfg)?, &pts);
        let r64 = kernel_bound_report(&build(&w, 64, cfg)?, &pts);
        let pass = r64.min >= 0.5 * r8.min && r64.scaled_sup <= 2.0 * r8.scaled_sup;
        Ok((
            pass,
            format!("min P: {:.3e} (p=64) vs {:.3e} (p=8); scaled sup: {:.3e} (p=64) vs {:.3e} (p=8)", r64.min, r8.min, r64.scaled_sup, r8.scaled_sup),
            vec![r8.min, r64.min, r8.scaled_sup, r64.scaled_sup],
        ))
    })
}

/// Exceedance fractions non-increasing on P¹; MC-mean rate fit on P¹×P¹.
pub fn criterion_8(cfg: &ExperimentConfig, ens: &Result<PoleEnsemble, String>) -> Criterion {
    run(8, "rate behaviour", || {
        let ens = ens.as_ref().map_err(|e| RunError::Numerical(e.clone()))?;
        let spec = RateBoundSpec { a: 10.0, ..RateBoundSpec::default() };
        let mut fails = Vec::new();
        let mut values = Vec::new();
        for (j, name) in ens.names.iter().enumerate() {
            let (p0, r0, _) = &ens.ladder[0];
            let c = spec.fit_c(*p0, &r0[j].errors);
            let fr: Vec<f64> = ens.ladder.iter().map(|(p, r, _)| r[j].exceedance(spec.threshold(*p, c))).collect();
            // One sample of slack per step.
            let slack = 1.0 / cfg.samples as f64;
            if fr.windows(2).any(|w| w[1] > w[0] + slack) {
                fails.push(format!("exceedance {name} {fr:.3?}"));
            }
            values.extend(&fr);
        }
        let w = preset(ModelSpace::SphereProduct, PRODUCT_PRESET)?;
        let battery = analysis::battery(&w);
        let chis: Vec<TestFunction> = battery.iter().map(|b| b.1).collect();
        let mut means: Vec<Vec<(usize, f64)>> = vec![Vec::new(); chis.len()];
        for p in [4usize, 6, 8, 10, 12] {
            let sp = build(&w, p, cfg)?;
            let st = RngStream::new(cfg.seed, "product-rate", p, 0);
            let reports = analysis::mc_zero_errors(&sp, &chis, cfg.samples, &st, &cfg.zero_tolerances()).map_err(num)?;
            for (m, r) in means.iter_mut().zip(&reports) {
                m.push((p, r.mean));
            }
        }
        for ((name, _), m) in battery.iter().zip(&means) {
            let series = analysis::ErrorSeries::from_pairs("MC mean", m).map_err(num)?;
            let fit = analysis::rate_fit(&series, 1.0 / 3.0).map_err(num)?;
            values.extend(m.iter().map(|x| x.1));
            if !fit.pass {
                fails.push(format!("rate {name} violations at p={:?}", fit.violations));
            }
        }
        Ok((fails.is_empty(), format!("failing: [{}]", fails.join("; ")), values))
    })
}

/// Criteria 1 to 8 in order.
pub fn run_criteria(cfg: &ExperimentConfig) -> Vec<Criterion> {
    let ens = pole_ensemble(cfg).map_err(|e| e.to_string());
    vec![
        criterion_1(cfg),
        criterion_2(cfg),
        criterion_3(cfg),
        criterion_4(cfg),
        criterion_5(&ens),
        criterion_6(cfg),
        criterion_7(cfg),
        criterion_8(cfg, &ens),
    ]
}

pub fn digest(criteria: &[Criterion]) -> String {
    let mut h = Sha256::new();
    for c in criteria {
        c.digest_into(&mut h);
    }
    crate::record::hex(&h.finalize())
}

/// Criteria 1 to 8 on a pool of `threads` workers.
pub fn run_criteria_on(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<Criterion>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(num)?;
    Ok(pool.install(|| run_criteria(cfg)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub criteria: Vec<Criterion>,
    pub digests: Vec<(usize, String)>,
    pub runtime_s: f64,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

/// The full suite: criteria 1 to 8 on 8 workers, then two replays (8 and 1
/// workers) whose digests must match for criterion 9.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteReport, RunError> {
    if cfg.samples < 30 {
        return Err(RunError::Precondition(format!("samples = {} but at least 30 are needed", cfg.samples)));
    }
    let t = Instant::now();
    let mut criteria = run_criteria_on(cfg, 8)?;
    let mut digests = vec![(8, digest(&criteria))];
    for threads in [8, 1] {
        digests.push((threads, digest(&run_criteria_on(cfg, threads)?)));
    }
    let secs = t.elapsed().as_secs_f64();
    let same = digests.iter().all(|d| d.1 == digests[0].1);
    criteria.push(Criterion {
        id: 9,
        name: "determinism and runtime".into(),
        pass: same && secs <= 900.0,
        detail: format!(
            "digests {} across runs (8, 8, 1 workers), suite {secs:.0}s <= 900s",
            if same { "identical" } else { "differ" }
        ),
        values: Vec::new(),
        runtime_s: secs,
    });
    Ok(SuiteReport { criteria, digests, runtime_s: secs })
}
