//! Weighted Bergman spaces H⁰(X, L^p) with the L²(e^{−2pφ}ωⁿ) inner product:
//! admissible monomial bases, Gram matrices, Bergman kernel densities and
//! Fubini–Study potentials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::quadrature::{self, GridSpec, InnerCell, Pole, QuadError, SphereRule};
use crate::space::{ChartPoint, ModelSpace, Point};
use crate::weights::{Chart, SphereTerm, Weight, WeightError};
use crate::{Cholesky, HermitianMatrix, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BergmanError {
    #[error("Gram matrix condition estimate {cond:e} exceeds {max:e}")]
    IllConditioned { cond: f64, max: f64 },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("no admissible sections at degree {0}")]
    EmptySpace(usize),
    #[error("Gram quadrature did not converge: change {achieved:e} > {tol:e} after {levels} levels")]
    GramNotConverged { tol: f64, achieved: f64, levels: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergmanConfig {
    /// Accepted change of the scaled Gram matrix between refinement levels.
    pub tol: f64,
    /// Largest accepted condition estimate of the pre-scaled Gram matrix.
    pub cond_max: f64,
    /// Overrides the degree-dependent default grid.
    pub grid: Option<GridSpec>,
}

impl Default for BergmanConfig {
    fn default() -> Self {
        Self { tol: 1e-9, cond_max: 1e12, grid: None }
    }
}

const SNAP: f64 = 1e-9;

/// Smallest exponent j with j > pε − 1, i.e. |z−a|^{2j}|z−a|^{−2pε} locally
/// integrable. Values of pε within 1e-9 of an integer are snapped.
pub fn base_locus_min(p: usize, eps: f64) -> usize {
    first_above(p as f64 * eps - 1.0)
}

/// Smallest total degree i+j with i+j > pε − 2 (joint pole on P¹×P¹).
pub fn joint_min_total(p: usize, eps: f64) -> usize {
    first_above(p as f64 * eps - 2.0)
}

fn first_above(x: f64) -> usize {
    let r = x.round();
    let x = if (x - r).abs() < SNAP { r } else { x };
    if x < 0.0 {
        0
    } else {
        x.floor() as usize + 1
    }
}

/// Exponent multi-indices of the admissible monomials (z−a)^j, resp.
/// (z₁−a₁)^i (z₂−a₂)^j, in lexicographic order.
pub fn basis_indices(w: &Weight, p: usize) -> Vec<Vec<usize>> {
    let jmin: Vec<usize> = (0..w.n()).map(|k| w.log_pole(k).map_or(0, |lp| base_locus_min(p, lp.eps))).collect();
    match w.space {
        ModelSpace::Sphere => (jmin[0]..=p).map(|j| vec![j]).collect(),
        ModelSpace::SphereProduct => {
            let kmin = w.joint_pole().map_or(0, |e| joint_min_total(p, e));
            let mut out = Vec::new();
            for i in jmin[0]..=p {
                for j in jmin[1]..=p {
                    if i + j >= kmin {
                        out.push(vec![i, j]);
                    }
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionReport {
    pub p: usize,
    pub dim: usize,
    /// dim / pⁿ.
    pub ratio: f64,
    /// Monomials removed by the integrability rule.
    pub excluded: usize,
}

pub fn dimension_report(w: &Weight, p: usize) -> DimensionReport {
    let dim = basis_indices(w, p).len();
    let full = (p + 1).pow(w.n() as u32);
    DimensionReport { p, dim, ratio: dim as f64 / (p as f64).powi(w.n() as i32), excluded: full - dim }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GramKind {
    Dense,
    Radial,
    Kronecker,
    Toric,
}

#[derive(Debug, Clone)]
enum Repr {
    Dense { gram: HermitianMatrix, chol: Cholesky },
    Diagonal { diag: Vec<f64> },
    Kronecker { factors: Box<[SectionSpace; 2]> },
}

/// Chart coordinate of a point on one factor: affine when |z| ≤ 1.
pub fn chart_coord(cp: ChartPoint) -> (C64, Chart) {
    match cp {
        ChartPoint::Finite(z) if z.norm() <= 1.0 => (z, Chart::Affine),
        ChartPoint::Finite(z) => (z.inv(), Chart::Reciprocal),
        ChartPoint::Infinity => (C64::new(0.0, 0.0), Chart::Reciprocal),
    }
}

fn klog(k: usize, l: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * l
    }
}

/// (log-modulus, phase) of the monomials (z−a)^j, j = 0..=p, read in the
/// chart of `x`: u^j affine, w^{p−j}(1−aw)^j reciprocal.
pub fn log_monomials(x: C64, chart: Chart, a: C64, p: usize) -> Vec<(f64, f64)> {
    let u = match chart {
        Chart::Affine => x - a,
        Chart::Reciprocal => (1.0 - a * x) / x,
    };
    log_monomials_local(x, chart, u, p)
}

/// As [`log_monomials`] with u = z − a supplied; in the reciprocal chart
/// 1 − aw = u·w.
pub fn log_monomials_local(x: C64, chart: Chart, u: C64, p: usize) -> Vec<(f64, f64)> {
    match chart {
        Chart::Affine => {
            let (lu, au) = (u.norm().ln(), u.arg());
            (0..=p).map(|j| (klog(j, lu), j as f64 * au)).collect()
        }
        Chart::Reciprocal => {
            let v = if x.norm() == 0.0 { C64::new(1.0, 0.0) } else { u * x };
            let (lw, aw) = (x.norm().ln(), x.arg());
            let (lv, av) = (v.norm().ln(), v.arg());
            (0..=p)
                .map(|j| (klog(p - j, lw) + klog(j, lv), (p - j) as f64 * aw + j as f64 * av))
                .collect()
        }
    }
}

/// Monomial values (z−a)^j in the chart of `x` (see [`log_monomials`]).
pub fn monomials(x: C64, chart: Chart, a: C64, p: usize) -> Vec<C64> {
    match chart {
        Chart::Affine => {
            let u = x - a;
            let mut out = Vec::with_capacity(p + 1);
            let mut acc = C64::new(1.0, 0.0);
            for _ in 0..=p {
                out.push(acc);
                acc *= u;
            }
            out
        }
        Chart::Reciprocal => {
            let v = 1.0 - a * x;
            let mut wp = vec![C64::new(1.0, 0.0); p + 1];
            let mut vp = vec![C64::new(1.0, 0.0); p + 1];
            for k in 1..=p {
                wp[k] = wp[k - 1] * x;
                vp[k] = vp[k - 1] * v;
            }
            (0..=p).map(|j| wp[p - j] * vp[j]).collect()
        }
    }
}

/// Basis values ṽ = b·e^{−pφ} at a point, as exp(shift)·values.
#[derive(Debug, Clone)]
pub struct ScaledVector {
    pub values: Vec<C64>,
    pub shift: f64,
}

/// Outcome of evaluating basis data at a point where φ = −∞.
enum AtPole {
    Zero,
    Infinite,
}

/// The space H⁰(L^p) with its weighted Gram matrix factored.
#[derive(Debug, Clone)]
pub struct SectionSpace {
    pub p: usize,
    pub weight: Weight,
    /// Centre of the monomial basis on each factor.
    pub shift: Vec<C64>,
    pub indices: Vec<Vec<usize>>,
    pub kind: GramKind,
    /// Condition estimate of the pre-scaled Gram matrix.
    pub cond: f64,
    /// Change of the scaled Gram matrix over the last refinement step.
    pub quad_change: f64,
    repr: Repr,
}

impl SectionSpace {
    pub fn build(w: &Weight, p: usize, cfg: &BergmanConfig) -> Result<Self, BergmanError> {
        let grid = cfg.grid.clone().unwrap_or_else(|| GridSpec::for_degree(p));
        let indices = basis_indices(w, p);
        if indices.is_empty() {
            return Err(BergmanError::EmptySpace(p));
        }
        let shift = w.basis_shift();
        let (kind, repr, change) = match w.space {
            ModelSpace::Sphere if w.is_radial() => {
                let (diag, change) = radial_gram(w, p, &indices, &grid, cfg.tol)?;
                (GramKind::Radial, Repr::Diagonal { diag }, change)
            }
            ModelSpace::Sphere => {
                let (gram, change) = dense_sphere_gram(w, p, &shift, &indices, &grid, cfg.tol)?;
                let chol = Cholesky::factor(&gram)?;
                (GramKind::Dense, Repr::Dense { gram, chol }, change)
            }
            ModelSpace::SphereProduct if w.is_separable() => {
                let f1 = SectionSpace::build(&Weight::sphere(w.factors[0].clone())?, p, cfg)?;
                let f2 = SectionSpace::build(&Weight::sphere(w.factors[1].clone())?, p, cfg)?;
                let change = f1.quad_change.max(f2.quad_change);
                (GramKind::Kronecker, Repr::Kronecker { factors: Box::new([f1, f2]) }, change)
            }
            ModelSpace::SphereProduct if w.is_radial() => {
                let (diag, change) = toric_gram(w, p, &indices, &grid, cfg.tol)?;
                (GramKind::Toric, Repr::Diagonal { diag }, change)
            }
            ModelSpace::SphereProduct => {
                return Err(BergmanError::Unsupported(
                    "product weights must be separable or radial about (0,0) on both factors".into(),
                ))
            }
        };
        let cond = match &repr {
            Repr::Dense { chol, .. } => chol.cond_estimate(),
            Repr::Diagonal { .. } => 1.0,
            Repr::Kronecker { factors } => factors[0].cond * factors[1].cond,
        };
        if cond > cfg.cond_max {
            return Err(BergmanError::IllConditioned { cond, max: cfg.cond_max });
        }
        Ok(Self { p, weight: w.clone(), shift, indices, kind, cond, quad_change: change, repr })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn space(&self) -> ModelSpace {
        self.weight.space
    }

    /// Gram entry ⟨bᵢ, bⱼ⟩ between kept basis elements.
    pub fn gram_entry(&self, i: usize, j: usize) -> C64 {
        match &self.repr {
            Repr::Dense { gram, .. } => gram.get(i, j),
            Repr::Diagonal { diag } => C64::new(if i == j { diag[i] } else { 0.0 }, 0.0),
            Repr::Kronecker { factors } => {
                let n2 = factors[1].dim();
                2.0 * factors[0].gram_entry(i / n2, j / n2) * factors[1].gram_entry(i % n2, j % n2)
            }
        }
    }

    /// Factor spaces of a separable product space.
    pub fn factors(&self) -> Option<&[SectionSpace; 2]> {
        match &self.repr {
            Repr::Kronecker { factors } => Some(factors),
            _ => None,
        }
    }

    /// log-moduli/phases of the kept basis at a point, without the weight.
    fn log_basis(&self, pt: &Point) -> (Vec<(f64, f64)>, Vec<(C64, Chart)>) {
        let coords: Vec<(C64, Chart)> = pt.coords().into_iter().map(chart_coord).collect();
        let per: Vec<Vec<(f64, f64)>> =
            coords.iter().zip(&self.shift).map(|(&(x, ch), &a)| log_monomials(x, ch, a, self.p)).collect();
        let lb = self
            .indices
            .iter()
            .map(|idx| {
                idx.iter().enumerate().fold((0.0, 0.0), |(m, ph), (k, &e)| (m + per[k][e].0, ph + per[k][e].1))
            })
            .collect();
        (lb, coords)
    }

    fn scaled_basis(&self, pt: &Point) -> Result<ScaledVector, AtPole> {
        let (lb, coords) = self.log_basis(pt);
        let phi = self.weight.eval_chart(&coords);
        let p = self.p as f64;
        if phi == f64::NEG_INFINITY {
            return Err(if lb.iter().any(|l| l.0.is_finite()) { AtPole::Infinite } else { AtPole::Zero });
        }
        let m = lb.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Err(AtPole::Zero);
        }
        let values = lb.iter().map(|&(l, ph)| C64::from_polar((l - m).exp(), ph)).collect();
        Ok(ScaledVector { values, shift: m - p * phi })
    }

    /// Basis values b·e^{−pφ} at a point in max-shifted form; `None` at a
    /// singular point of φ.
    pub fn weighted_basis(&self, pt: &Point) -> Option<ScaledVector> {
        self.scaled_basis(pt).ok()
    }

    /// log of the Bergman density P_p = Σ|sₖ|²_{hᵖ} over an orthonormal basis.
    /// At a pole centre it is −∞ on the base locus and +∞ otherwise.
    pub fn log_kernel(&self, pt: &Point) -> f64 {
        if let Repr::Kronecker { factors } = &self.repr {
            let (a, b) = match *pt {
                Point::Product(a, b) => (a, b),
                Point::Sphere(_) => panic!("sphere point passed to a product space"),
            };
            return factors[0].log_kernel(&Point::Sphere(a)) + factors[1].log_kernel(&Point::Sphere(b))
                - std::f64::consts::LN_2;
        }
        match self.scaled_basis(pt) {
            Err(AtPole::Zero) => f64::NEG_INFINITY,
            Err(AtPole::Infinite) => f64::INFINITY,
            Ok(v) => {
                let y = self.whiten(&v.values);
                let s: f64 = y.iter().map(|c| c.norm_sqr()).sum();
                s.ln() + 2.0 * v.shift
            }
        }
    }

    pub fn kernel(&self, pt: &Point) -> f64 {
        self.log_kernel(pt).exp()
    }

    /// φ_p = φ + (1/2p) log P_p.
    pub fn fs_potential(&self, pt: &Point) -> f64 {
        let coords: Vec<(C64, Chart)> = pt.coords().into_iter().map(chart_coord).collect();
        self.weight.eval_chart(&coords) + self.log_kernel(pt) / (2.0 * self.p as f64)
    }

    /// φ_p − φ = (1/2p) log P_p; finite wherever P_p is.
    pub fn fs_potential_difference(&self, pt: &Point) -> f64 {
        self.log_kernel(pt) / (2.0 * self.p as f64)
    }

    fn whiten(&self, v: &[C64]) -> Vec<C64> {
        match &self.repr {
            Repr::Dense { chol, .. } => chol.whiten(v),
            Repr::Diagonal { diag } => v.iter().zip(diag).map(|(a, d)| a / d.sqrt()).collect(),
            Repr::Kronecker { .. } => unreachable!("Kronecker spaces whiten per factor"),
        }
    }

    /// Monomial coefficients of Σ cₖeₖ, with (eₖ) the orthonormal basis.
    pub fn orthonormal_to_monomial(&self, c: &[C64]) -> Vec<C64> {
        assert_eq!(c.len(), self.dim(), "coefficient vector length");
        match &self.repr {
            Repr::Dense { chol, .. } => chol.orthonormal_to_basis(c),
            Repr::Diagonal { diag } => c.iter().zip(diag).map(|(a, d)| a / d.sqrt()).collect(),
            Repr::Kronecker { factors } => {
                // (M₁ ⊗ M₂)c/√2 with c reshaped to n₁×n₂.
                let (n1, n2) = (factors[0].dim(), factors[1].dim());
                let mut tmp = vec![C64::new(0.0, 0.0); n1 * n2];
                for a in 0..n1 {
                    let row = factors[1].orthonormal_to_monomial(&c[a * n2..(a + 1) * n2]);
                    tmp[a * n2..(a + 1) * n2].copy_from_slice(&row);
                }
                let mut out = vec![C64::new(0.0, 0.0); n1 * n2];
                let mut col = vec![C64::new(0.0, 0.0); n1];
                for b in 0..n2 {
                    for a in 0..n1 {
                        col[a] = tmp[a * n2 + b];
                    }
                    let t = factors[0].orthonormal_to_monomial(&col);
                    for a in 0..n1 {
                        out[a * n2 + b] = t[a] * std::f64::consts::FRAC_1_SQRT_2;
                    }
                }
                out
            }
        }
    }

    /// The section Σ cₖeₖ.
    pub fn section(&self, c: &[C64]) -> Section {
        let a = self.orthonormal_to_monomial(c);
        let n = self.weight.n();
        let mut coeffs = vec![C64::new(0.0, 0.0); (self.p + 1).pow(n as u32)];
        for (idx, v) in self.indices.iter().zip(a) {
            let flat = idx.iter().fold(0, |acc, &e| acc * (self.p + 1) + e);
            coeffs[flat] = v;
        }
        Section { p: self.p, space: self.space(), shift: self.shift.clone(), coeffs }
    }
}

/// A holomorphic section of L^p in the shifted monomial basis. Coefficients
/// are stored densely over all exponents (row-major (i, j) on P¹×P¹).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub p: usize,
    pub space: ModelSpace,
    pub shift: Vec<C64>,
    pub coeffs: Vec<C64>,
}

impl Section {
    pub fn coeff(&self, idx: &[usize]) -> C64 {
        self.coeffs[idx.iter().fold(0, |acc, &e| acc * (self.p + 1) + e)]
    }

    /// Value of the local representative in the chart of each coordinate.
    pub fn eval_chart(&self, coords: &[(C64, Chart)]) -> C64 {
        let p = self.p;
        let per: Vec<Vec<C64>> =
            coords.iter().zip(&self.shift).map(|(&(x, ch), &a)| monomials(x, ch, a, p)).collect();
        match self.space {
            ModelSpace::Sphere => self.coeffs.iter().zip(&per[0]).map(|(c, m)| c * m).sum(),
            ModelSpace::SphereProduct => {
                let mut s = C64::new(0.0, 0.0);
                for i in 0..=p {
                    let row: C64 = (0..=p).map(|j| self.coeffs[i * (p + 1) + j] * per[1][j]).sum();
                    s += row * per[0][i];
                }
                s
            }
        }
    }

    /// log|s|_{hᵖ} = log|s| − pφ at a point.
    pub fn log_norm(&self, w: &Weight, pt: &Point) -> f64 {
        let coords: Vec<(C64, Chart)> = pt.coords().into_iter().map(chart_coord).collect();
        let v = self.eval_chart(&coords).norm();
        let phi = w.eval_chart(&coords);
        if v == 0.0 {
            return f64::NEG_INFINITY;
        }
        if phi == f64::NEG_INFINITY {
            // Only reached off the base locus, where the norm blows up.
            return f64::INFINITY;
        }
        v.ln() - self.p as f64 * phi
    }

    /// Coefficients as a (p+1)×(p+1) row-major grid (product only).
    pub fn grid(&self) -> Vec<Vec<C64>> {
        let n = self.p + 1;
        self.coeffs.chunks(n).map(|r| r.to_vec()).collect()
    }
}

fn logsumexp_acc(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn check_change(change: f64, tol: f64, level: usize, max_levels: usize) -> Option<Result<(), BergmanError>> {
    if change <= tol {
        Some(Ok(()))
    } else if level + 1 >= max_levels.max(2) {
        Some(Err(BergmanError::GramNotConverged { tol, achieved: change, levels: max_levels.max(2) }))
    } else {
        None
    }
}

/// Diagonal Gram of a weight radial about 0: G_jj = ∫₀^∞ tʲ e^{−2pφ(√t)} (1+t)⁻² dt.
fn radial_gram(w: &Weight, p: usize, indices: &[Vec<usize>], grid: &GridSpec, tol: f64) -> Result<(Vec<f64>, f64), BergmanError> {
    let eps = w.log_pole(0).map_or(0.0, |lp| lp.eps);
    let jmin = indices[0][0];
    // Cone and Poincaré terms are not smooth in t at the centre either.
    let centred = w.factors[0].iter().any(|t| t.center().is_some());
    let inner = if eps > 0.0 || jmin > 0 || centred {
        InnerCell::Power(jmin as f64 - p as f64 * eps)
    } else {
        InnerCell::Regular
    };
    // e^{−2pφ} ~ (log 1/t)^{pε} at a Poincaré centre; deeper grading keeps
    // the unresolved innermost cell negligible.
    let deep;
    let grid = if w.factors[0].iter().any(|t| matches!(t, SphereTerm::PoincareLog { .. })) {
        deep = GridSpec { depth: grid.depth.max(48), ..grid.clone() };
        &deep
    } else {
        grid
    };
    // Cutoff annuli as t-breakpoints.
    let breaks: Vec<f64> = w.factor_breakpoints(0).iter().map(|r| r * r).chain(grid.breakpoints.iter().copied()).collect();
    let pf = p as f64;
    let eval = |level: usize| -> Vec<f64> {
        let nodes = quadrature::radial_nodes(grid, level, inner, &breaks);
        let base: Vec<(f64, f64)> = nodes
            .iter()
            .map(|&(t, wt)| {
                let phi = w.factor_value(0, C64::new(t.sqrt(), 0.0), Chart::Affine);
                (t.ln(), wt.ln() - 2.0 * pf * phi - 2.0 * t.ln_1p())
            })
            .collect();
        indices
            .iter()
            .map(|idx| {
                let j = idx[0] as f64;
                logsumexp_acc(base.iter().map(move |&(lt, b)| b + j * lt)).exp()
            })
            .collect()
    };
    let mut prev = eval(0);
    for level in 1..grid.max_levels.max(2) {
        let cur = eval(level);
        let change = cur.iter().zip(&prev).map(|(a, b)| ((a - b) / a).abs()).fold(0.0, f64::max);
        if let Some(r) = check_change(change, tol, level, grid.max_levels) {
            return r.map(|_| (cur, change));
        }
        prev = cur;
    }
    unreachable!()
}

/// Diagonal Gram of a product weight radial about (0,0) on both factors.
fn toric_gram(w: &Weight, p: usize, indices: &[Vec<usize>], grid: &GridSpec, tol: f64) -> Result<(Vec<f64>, f64), BergmanError> {
    let eps = w.joint_pole().unwrap_or(0.0);
    let kmin = indices.iter().map(|i| i[0] + i[1]).min().unwrap();
    // |f| ~ |z|^{2k − 2pε} at the corner.
    let alpha = Some(kmin as f64 - p as f64 * eps + 1.0);
    let mut breaks = grid.breakpoints.clone();
    for j in &w.joint {
        if let crate::weights::JointTerm::CutoffJointPole { r0, .. } = *j {
            breaks.extend([r0 * r0, 4.0 * r0 * r0]);
        }
    }
    let pf = p as f64;
    let eval = |level: usize| -> Vec<f64> {
        let nodes = quadrature::toric_nodes(grid, level, alpha, &breaks);
        let base: Vec<(f64, f64, f64)> = nodes
            .iter()
            .map(|&(t, m)| {
                let coords = [
                    (C64::new(t[0].sqrt(), 0.0), Chart::Affine),
                    (C64::new(t[1].sqrt(), 0.0), Chart::Affine),
                ];
                (t[0].ln(), t[1].ln(), m.ln() - 2.0 * pf * w.eval_chart(&coords))
            })
            .collect();
        indices
            .par_iter()
            .map(|idx| {
                let (i, j) = (idx[0] as f64, idx[1] as f64);
                logsumexp_acc(base.iter().map(move |&(l1, l2, b)| b + klog_f(i, l1) + klog_f(j, l2))).exp()
            })
            .collect()
    };
    let mut prev = eval(0);
    for level in 1..grid.max_levels.max(2) {
        let cur = eval(level);
        let change = cur.iter().zip(&prev).map(|(a, b)| ((a - b) / a).abs()).fold(0.0, f64::max);
        if let Some(r) = check_change(change, tol, level, grid.max_levels) {
            return r.map(|_| (cur, change));
        }
        prev = cur;
    }
    unreachable!()
}

fn klog_f(k: f64, l: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * l
    }
}

/// Dense Gram on P¹ from the Möbius-recentred rule graded at the singular point.
fn dense_sphere_gram(
    w: &Weight,
    p: usize,
    shift: &[C64],
    indices: &[Vec<usize>],
    grid: &GridSpec,
    tol: f64,
) -> Result<(HermitianMatrix, f64), BergmanError> {
    let mut poles: Vec<Pole> = Vec::new();
    for t in &w.factors[0] {
        if let Some(c) = t.center() {
            let e = match t.atom() {
                Some((_, eps)) => 2.0 * indices[0][0] as f64 - 2.0 * p as f64 * eps,
                None => 0.0,
            };
            poles.push(Pole::new(ChartPoint::Finite(c), e));
        }
    }
    let centre = quadrature::grading_centre(1, &poles)?;
    let mut spec = grid.clone();
    if centre.is_some() {
        spec.breakpoints.extend(w.factor_breakpoints(0));
    }
    let n = indices.len();
    let a = shift[0];
    let pf = p as f64;
    let eval = |level: usize| -> Result<HermitianMatrix, BergmanError> {
        let rule = SphereRule::new(&spec, level, centre)?;
        let c = rule.centre;
        let nodes: Vec<((C64, f64), C64)> = rule.nodes.iter().copied().zip(rule.local.iter().copied()).collect();
        let partials: Vec<HermitianMatrix> = nodes
            .par_chunks(512)
            .map(|chunk| {
                let mut g = HermitianMatrix::zeros(n);
                let mut v = vec![C64::new(0.0, 0.0); n];
                for &((z, m), u) in chunk {
                    let (x, ch) = chart_coord(ChartPoint::Finite(z));
                    let lm = log_monomials_local(x, ch, if c == a { u } else { z - a }, p);
                    let phi = match ch {
                        Chart::Affine => w.factor_value_local(0, z, c, u),
                        Chart::Reciprocal => w.factor_value(0, x, ch),
                    };
                    let base = 0.5 * m.ln() - pf * phi;
                    for (k, idx) in indices.iter().enumerate() {
                        let (l, ph) = lm[idx[0]];
                        v[k] = C64::from_polar((l + base).exp(), ph);
                    }
                    g.add_outer(1.0, &v);
                }
                g
            })
            .collect();
        let mut g = HermitianMatrix::zeros(n);
        for part in &partials {
            g.add_assign(part);
        }
        g.symmetrize_from_upper();
        Ok(g)
    };
    let mut prev = eval(0)?;
    for level in 1..spec.max_levels.max(2) {
        let cur = eval(level)?;
        let change = cur.scaled_max_diff(&prev);
        if let Some(r) = check_change(change, tol, level, spec.max_levels) {
            return r.map(|_| (cur, change));
        }
        prev = cur;
    }
    unreachable!()
}

/// Grid statistics of P_p used for kernel bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub p: usize,
    pub min: f64,
    pub max: f64,
    /// sup P_p(z)·d(z,Σ)^{2nϱ/ν}·p^{−2n/ν} with (ν, ϱ) the Hölder parameters.
    pub scaled_sup: f64,
    pub points: usize,
}

/// Min, max and scaled sup of P_p over points, skipping non-finite values
/// (pole centres).
pub fn kernel_bound_report(space: &SectionSpace, points: &[Point]) -> KernelBoundReport {
    let w = &space.weight;
    let n = w.n() as f64;
    let (nu, rho) = (w.holder.nu, w.holder.rho);
    let pf = space.p as f64;
    let vals: Vec<(f64, f64)> = points
        .par_iter()
        .map(|pt| {
            let k = space.kernel(pt);
            let d = crate::weights::dist_to_sing(pt, &w.singular_set);
            let dfac = if d.is_finite() { d.powf(2.0 * n * rho / nu) } else { 1.0 };
            (k, k * dfac * pf.powf(-2.0 * n / nu))
        })
        .collect();
    let finite = vals.iter().copied().filter(|v| v.0.is_finite() && v.0 > 0.0);
    KernelBoundReport {
        p: space.p,
        min: finite.clone().map(|v| v.0).fold(f64::INFINITY, f64::min),
        max: finite.clone().map(|v| v.0).fold(0.0, f64::max),
        scaled_sup: finite.clone().map(|v| v.1).fold(0.0, f64::max),
        points: finite.count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::fibonacci_points;

    fn ln_beta(j: usize, p: usize) -> f64 {
        // j!(p−j)!/(p+1)! via log-gamma sums
        let lf = |n: usize| (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
        lf(j) + lf(p - j) - lf(p + 1)
    }

    #[test]
    fn base_locus_rule() {
        assert_eq!(base_locus_min(10, 0.0), 0);
        assert_eq!(base_locus_min(10, 0.05), 0);
        // pε = 3 exactly: j > 2.
        assert_eq!(base_locus_min(10, 0.3), 3);
        assert_eq!(base_locus_min(10, 0.35), 3);
        assert_eq!(base_locus_min(20, 0.35), 7);
        assert_eq!(joint_min_total(10, 0.15), 0);
        assert_eq!(joint_min_total(20, 0.15), 2);
    }

    #[test]
    fn fs_gram_is_beta_diagonal() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let s = SectionSpace::build(&w, 16, &BergmanConfig::default()).unwrap();
        assert_eq!(s.kind, GramKind::Radial);
        for j in 0..=16 {
            let g = s.gram_entry(j, j).re;
            assert!((g.ln() - ln_beta(j, 16)).abs() < 1e-10);
        }
    }

    #[test]
    fn fs_kernel_is_constant() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        for p in [4, 17] {
            let s = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
            for pt in fibonacci_points(40) {
                let k = s.kernel(&Point::Sphere(pt));
                assert!((k / (p as f64 + 1.0) - 1.0).abs() < 1e-10, "{k}");
            }
        }
    }

    #[test]
    fn dense_path_agrees_with_radial_for_fs() {
        // Off-centre cone with zero amplitude only changes the quadrature path.
        let w = Weight::preset(ModelSpace::Sphere, "fs+cone(0.4,0.5,0)").unwrap();
        let s = SectionSpace::build(&w, 8, &BergmanConfig::default()).unwrap();
        assert_eq!(s.kind, GramKind::Dense);
        for j in 0..=8 {
            for k in 0..=8 {
                let g = s.gram_entry(j, k);
                let expect = if j == k { ln_beta(j, 8).exp() } else { 0.0 };
                assert!((g - expect).norm() < 1e-9 * ln_beta(j, 8).exp().max(ln_beta(k, 8).exp()), "{j} {k} {g}");
            }
        }
        let pt = Point::finite(C64::new(0.3, -2.0));
        assert!((s.kernel(&pt) - 9.0).abs() < 1e-7);
    }

    #[test]
    fn product_fs_kernel_and_gram() {
        let w = Weight::fubini_study(ModelSpace::SphereProduct);
        let s = SectionSpace::build(&w, 5, &BergmanConfig::default()).unwrap();
        assert_eq!(s.kind, GramKind::Kronecker);
        assert_eq!(s.dim(), 36);
        let pt = Point::Product(ChartPoint::new(0.2, 3.0), ChartPoint::Infinity);
        assert!((s.kernel(&pt) - 18.0).abs() < 1e-8);
        // ⟨z₁z₂², z₁z₂²⟩ = 2·B(1,5)·B(2,5)
        let k = s.indices.iter().position(|i| i == &vec![1, 2]).unwrap();
        let expect = 2.0 * (ln_beta(1, 5) + ln_beta(2, 5)).exp();
        assert!((s.gram_entry(k, k).re / expect - 1.0).abs() < 1e-10);
    }

    #[test]
    fn toric_path_matches_kronecker_for_fs() {
        // A vanishingly weak joint pole routes through the toric Gram.
        let w = Weight::preset(ModelSpace::SphereProduct, "fs+softjointpole(0,0,1e-12)").unwrap();
        let s = SectionSpace::build(&w, 4, &BergmanConfig::default()).unwrap();
        assert_eq!(s.kind, GramKind::Toric);
        for (k, idx) in s.indices.iter().enumerate() {
            let expect = 2.0 * (ln_beta(idx[0], 4) + ln_beta(idx[1], 4)).exp();
            assert!((s.gram_entry(k, k).re / expect - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_at_pole_centre() {
        let w = Weight::preset(ModelSpace::Sphere, "fs+logpole(0,0.3,0.2)").unwrap();
        let o = Point::finite(C64::new(0.0, 0.0));
        let s = SectionSpace::build(&w, 10, &BergmanConfig::default()).unwrap();
        assert_eq!(s.kernel(&o), 0.0);
        let s = SectionSpace::build(&w, 2, &BergmanConfig::default()).unwrap();
        assert_eq!(s.kernel(&o), f64::INFINITY);
    }

    #[test]
    fn sections_reproduce_orthonormal_basis() {
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0.3,0.3,1.5)").unwrap();
        let s = SectionSpace::build(&w, 6, &BergmanConfig::default()).unwrap();
        let pt = Point::finite(C64::new(0.7, 0.2));
        let total: f64 = (0..s.dim())
            .map(|k| {
                let mut c = vec![C64::new(0.0, 0.0); s.dim()];
                c[k] = C64::new(1.0, 0.0);
                (2.0 * s.section(&c).log_norm(&w, &pt)).exp()
            })
            .sum();
        assert!((total / s.kernel(&pt) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kronecker_sections_reproduce_kernel() {
        let w = Weight::preset(ModelSpace::SphereProduct, "fs+logpole(0,0.3,0.2)").unwrap();
        let s = SectionSpace::build(&w, 4, &BergmanConfig::default()).unwrap();
        let pt = Point::Product(ChartPoint::new(0.7, 0.2), ChartPoint::new(-3.0, 1.0));
        let total: f64 = (0..s.dim())
            .map(|k| {
                let mut c = vec![C64::new(0.0, 0.0); s.dim()];
                c[k] = C64::new(1.0, 0.0);
                (2.0 * s.section(&c).log_norm(&w, &pt)).exp()
            })
            .sum();
        assert!((total / s.kernel(&pt) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dimension_counts() {
        let w = Weight::preset(ModelSpace::Sphere, "fs+logpole(0,0.35,0.2)").unwrap();
        let r = dimension_report(&w, 20);
        assert_eq!(r.dim, 21 - 7);
        let w = Weight::preset(ModelSpace::SphereProduct, "fs+softjointpole(0,0,0.15)").unwrap();
        // i+j ≥ 2 at p = 20 removes 1, z₁ and z₂.
        assert_eq!(dimension_report(&w, 20).dim, 441 - 3);
    }
}
