//! Quadrature against ωⁿ on the model spaces.
//!
//! Each P¹ factor is compactified by z = r·e^{iθ}/(1−r): Gauss–Legendre
//! panels in r, trapezoid in θ. Declared poles are moved to the origin by a
//! Möbius isometry and resolved by a geometric mesh; the innermost cell uses a
//! power substitution matched to the declared exponent.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::space::{fs_density, ChartPoint, ModelSpace, Recentre};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("declared pole exponent {exponent} is not integrable in complex dimension {n}")]
    NonIntegrable { exponent: f64, n: usize },
    #[error("tolerance {tol:e} not met after {levels} levels (achieved {achieved:e})")]
    ToleranceNotMet { tol: f64, achieved: f64, levels: usize },
    #[error("at most one grading centre per factor is supported (got {0})")]
    TooManyCentres(usize),
    #[error("grading centre at infinity is not supported; declare it in the reciprocal chart")]
    CentreAtInfinity,
    #[error("support of dd^c of the test function meets the singular set at {0:?}")]
    SupportMeetsSingularSet(ChartPoint),
    #[error("integral is not finite")]
    NotFinite,
}

/// Gauss–Legendre rule on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let one = T::one();
        let two = T::lit(2.0);
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = T::from_usize(n).unwrap();
        for i in 0..n.div_ceil(2) {
            let k = T::from_usize(i).unwrap();
            let mut x = (T::PI() * (k + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
            let mut dp = one;
            for _ in 0..100 {
                // Three-term recurrence for P_n and its derivative.
                let (mut p0, mut p1) = (one, x);
                for j in 2..=n {
                    let jf = T::from_usize(j).unwrap();
                    let p2 = ((two * jf - one) * x * p1 - (jf - one) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pm = if n == 1 { one } else { p0 };
                dp = nf * (x * pn - pm) / (x * x - one);
                let dx = pn / dp;
                x = x - dx;
                if dx.abs() <= T::epsilon() * T::lit(4.0) {
                    break;
                }
            }
            // Refresh the derivative at the converged node.
            let (mut p0, mut p1) = (one, x);
            for j in 2..=n {
                let jf = T::from_usize(j).unwrap();
                let p2 = ((two * jf - one) * x * p1 - (jf - one) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            if n > 1 {
                dp = nf * (x * p1 - p0) / (x * x - one);
            }
            let w = two / ((one - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = T::zero();
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let h = (b - a) / T::lit(2.0);
        let m = (a + b) / T::lit(2.0);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (m + h * *x, h * *w))
    }

    pub fn integrate(&self, a: T, b: T, f: impl Fn(T) -> T) -> T {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Singular behaviour of an integrand: |f| ~ dist(·, at)^exponent near `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub at: ChartPoint,
    pub exponent: f64,
    /// |f| ~ dist⁻ⁿ·(log dist)⁻² instead of a pure power (Poincaré-type
    /// curvature); `exponent` is ignored.
    #[serde(default)]
    pub log_critical: bool,
}

impl Pole {
    pub fn new(at: ChartPoint, exponent: f64) -> Self {
        Self { at, exponent, log_critical: false }
    }

    pub fn log_critical(at: ChartPoint) -> Self {
        Self { at, exponent: -2.0, log_critical: true }
    }
}

/// Treatment of the innermost cell of a graded radial mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerCell {
    /// No grading.
    Regular,
    /// Integrand ~ ρ^alpha with alpha > −1.
    Power(f64),
    /// Integrand ~ 1/(ρ log²ρ).
    LogCritical,
}

/// Resolution parameters of the compactified tensor rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Gauss–Legendre nodes per regular radial panel.
    pub n_gl: usize,
    /// Gauss–Legendre nodes per geometrically graded panel.
    pub n_graded: usize,
    /// Trapezoid nodes in θ at level 0.
    pub n_theta: usize,
    /// Number of geometric grading levels at a pole.
    pub depth: usize,
    pub ratio: f64,
    /// Extra radial breakpoints (in |w| of the recentred chart).
    pub breakpoints: Vec<f64>,
    /// Number of refinement levels tried before giving up.
    pub max_levels: usize,
    /// Step of the finite-difference Laplacian cross-check.
    pub fd_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_gl: 20,
            n_graded: 10,
            n_theta: 64,
            depth: 24,
            ratio: 0.5,
            breakpoints: Vec::new(),
            max_levels: 3,
            fd_step: 1e-4,
        }
    }
}

impl GridSpec {
    /// θ resolution able to integrate trigonometric content of degree ~ 2p
    /// exactly, and enough radial nodes for degree-p polynomial integrands in
    /// the compactified variable.
    pub fn for_degree(p: usize) -> Self {
        Self {
            n_theta: 2 * p + 64,
            n_gl: 20.max(p / 2 + 4),
            ..Self::default()
        }
    }

    pub fn with_breakpoints(mut self, b: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(b);
        self
    }

    pub fn level(&self, l: usize) -> (usize, usize, usize) {
        (self.n_gl + 6 * l, self.n_graded + 4 * l, self.n_theta << l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult<V> {
    pub value: V,
    pub error_estimate: f64,
    pub node_count: usize,
}

/// Values that can be accumulated by the tensor rules.
pub trait QuadValue: Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero_value() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero_value() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for C64 {
    fn zero_value() -> Self {
        C64::zero()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

const CHUNK: usize = 512;

/// Σ wᵢ f(xᵢ) with a reduction order independent of the worker count.
pub fn weighted_sum<X: Sync, V: QuadValue>(nodes: &[(X, f64)], f: impl Fn(&X) -> V + Sync) -> V {
    let partial: Vec<V> = nodes
        .par_chunks(CHUNK)
        .map(|c| c.iter().fold(V::zero_value(), |acc, (x, w)| acc + f(x) * *w))
        .collect();
    partial.into_iter().fold(V::zero_value(), |a, b| a + b)
}

/// Nodes for ∫₀^∞ g(ρ) dρ, graded at 0 according to `inner`.
pub fn radial_nodes(spec: &GridSpec, level: usize, inner: InnerCell, breaks: &[f64]) -> Vec<(f64, f64)> {
    let (n_gl, n_graded, _) = spec.level(level);
    let gl = GaussLegendre::<f64>::new(n_gl);
    let glg = GaussLegendre::<f64>::new(n_graded);
    // Panel ends in r = ρ/(1+ρ).
    let mut ends: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .chain(breaks)
        .filter(|b| b.is_finite() && **b > 0.0)
        .map(|b| b / (1.0 + b))
        .collect();
    ends.push(1.0);
    ends.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ends.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut out = Vec::new();
    let push = |out: &mut Vec<(f64, f64)>, r: f64, w: f64| {
        let om = 1.0 - r;
        out.push((r / om, w / (om * om)));
    };
    let first = ends[0];
    if inner == InnerCell::Regular {
        for (r, w) in gl.on(0.0, first) {
            push(&mut out, r, w);
        }
    } else {
        for (r, w) in graded_cells(&glg, first, spec, inner) {
            push(&mut out, r, w);
        }
    }
    for pair in ends.windows(2) {
        for (r, w) in gl.on(pair[0], pair[1]) {
            push(&mut out, r, w);
        }
    }
    out
}

/// Geometric mesh on [0, first] with the innermost cell mapped by a
/// substitution matched to the singularity.
fn graded_cells(glg: &GaussLegendre<f64>, first: f64, spec: &GridSpec, inner: InnerCell) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut hi = first;
    for _ in 0..spec.depth {
        let lo = hi * spec.ratio;
        out.extend(glg.on(lo, hi));
        hi = lo;
    }
    match inner {
        InnerCell::Power(alpha) => {
            // r = hi·v^q turns r^alpha dr into a constant multiple of dv.
            let q = 1.0 / (alpha + 1.0);
            for (v, w) in glg.on(0.0, 1.0) {
                out.push((hi * v.powf(q), w * hi * q * v.powf(q - 1.0)));
            }
        }
        InnerCell::LogCritical => {
            // r = hi·exp(−y/(1−y)) turns dr/(r log²r) into a smooth density in y.
            for (y, w) in glg.on(0.0, 1.0) {
                let x = y / (1.0 - y);
                let r = hi * (-x).exp();
                out.push((r, w * r / ((1.0 - y) * (1.0 - y))));
            }
        }
        InnerCell::Regular => out.extend(glg.on(0.0, hi)),
    }
    out
}

/// A tensor rule for ∫ f ω on P¹ with nodes stored as (z, ω-mass).
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub nodes: Vec<(C64, f64)>,
    /// Grading centre c (0 when ungraded).
    pub centre: C64,
    /// z − c for each node, accurate to full relative precision near c.
    pub local: Vec<C64>,
}

impl SphereRule {
    /// Rule graded at `centre` (if any) with the given local exponent of the
    /// integrand there.
    pub fn new(spec: &GridSpec, level: usize, centre: Option<Pole>) -> Result<Self, QuadError> {
        let (_, _, n_theta) = spec.level(level);
        let (c, inner) = match centre {
            None => (C64::zero(), InnerCell::Regular),
            Some(p) => {
                let c = p.at.finite().ok_or(QuadError::CentreAtInfinity)?;
                (c, inner_cell(p, 1)?)
            }
        };
        let m = Recentre::new(c);
        let radial = radial_nodes(spec, level, inner, &spec.breakpoints);
        let dth = 2.0 * PI / n_theta as f64;
        let mut nodes = Vec::with_capacity(radial.len() * n_theta);
        let mut local = Vec::with_capacity(radial.len() * n_theta);
        let lift = 1.0 + c.norm_sqr();
        for &(t, w) in &radial {
            let wr = w * dth * t / (PI * (1.0 + t * t).powi(2));
            for k in 0..n_theta {
                // Half-step offset keeps nodes off the real axis.
                let th = (k as f64 + 0.5) * dth;
                let wpt = C64::from_polar(t, th);
                let z = match m.inverse(ChartPoint::Finite(wpt)) {
                    ChartPoint::Finite(z) => z,
                    ChartPoint::Infinity => continue,
                };
                nodes.push((z, wr));
                local.push(wpt * lift / (1.0 - c.conj() * wpt));
            }
        }
        Ok(Self { nodes, centre: c, local })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sum<V: QuadValue>(&self, f: impl Fn(C64) -> V + Sync) -> V {
        weighted_sum(&self.nodes, |z| f(*z))
    }
}

/// Radial treatment of a pole in a rule over a real 2-dimensional factor.
pub fn inner_cell(p: Pole, n: usize) -> Result<InnerCell, QuadError> {
    if p.log_critical {
        return Ok(InnerCell::LogCritical);
    }
    if p.exponent <= -2.0 * n as f64 || !p.exponent.is_finite() {
        return Err(QuadError::NonIntegrable { exponent: p.exponent, n });
    }
    // Area element contributes one power of the radius.
    Ok(InnerCell::Power(p.exponent + 1.0))
}

/// Checks declared poles and picks the grading centre.
pub fn grading_centre(n: usize, poles: &[Pole]) -> Result<Option<Pole>, QuadError> {
    for p in poles {
        if !p.log_critical && p.exponent <= -2.0 * n as f64 {
            return Err(QuadError::NonIntegrable { exponent: p.exponent, n });
        }
    }
    let mut centres: Vec<Pole> = Vec::new();
    for p in poles {
        match centres.iter_mut().find(|c| c.at == p.at) {
            Some(c) => {
                c.log_critical |= p.log_critical;
                c.exponent = c.exponent.min(p.exponent);
            }
            None => centres.push(*p),
        }
    }
    match centres.len() {
        0 => Ok(None),
        1 => Ok(Some(centres[0])),
        k => Err(QuadError::TooManyCentres(k)),
    }
}

/// Two-level refinement driver shared by the integrators.
pub fn refine<V: QuadValue>(
    max_levels: usize,
    tol: f64,
    mut eval: impl FnMut(usize) -> Result<(V, usize), QuadError>,
) -> Result<IntegralResult<V>, QuadError> {
    let (mut prev, mut count) = eval(0)?;
    let mut err = f64::INFINITY;
    for l in 1..max_levels.max(2) {
        let (cur, n) = eval(l)?;
        count += n;
        err = (cur - prev).magnitude();
        if !cur.magnitude().is_finite() {
            return Err(QuadError::NotFinite);
        }
        if err <= tol * cur.magnitude().max(1.0) {
            return Ok(IntegralResult { value: cur, error_estimate: err, node_count: count });
        }
        prev = cur;
    }
    Err(QuadError::ToleranceNotMet { tol, achieved: err, levels: max_levels.max(2) })
}

/// ∫ f ω on P¹.
pub fn integrate_sphere<V: QuadValue>(
    f: impl Fn(C64) -> V + Sync,
    poles: &[Pole],
    tol: f64,
    spec: &GridSpec,
) -> Result<IntegralResult<V>, QuadError> {
    let centre = grading_centre(1, poles)?;
    refine(spec.max_levels, tol, |l| {
        let rule = SphereRule::new(spec, l, centre)?;
        Ok((rule.sum(&f), rule.len()))
    })
}

/// ∫ f ω² on P¹×P¹ by the tensor product of two sphere rules
/// (ω² = 2 ω₁∧ω₂). Poles are declared per factor.
pub fn integrate_product<V: QuadValue>(
    f: impl Fn(C64, C64) -> V + Sync,
    poles: [&[Pole]; 2],
    tol: f64,
    spec: &GridSpec,
) -> Result<IntegralResult<V>, QuadError> {
    let c1 = grading_centre(1, poles[0])?;
    let c2 = grading_centre(1, poles[1])?;
    refine(spec.max_levels, tol, |l| {
        let r1 = SphereRule::new(spec, l, c1)?;
        let r2 = SphereRule::new(spec, l, c2)?;
        let v = weighted_sum(&r1.nodes, |z1| r2.sum(|z2| f(*z1, z2)) * 2.0);
        Ok((v, r1.len() * r2.len()))
    })
}

/// Nodes (t₁, t₂, m) for ∫ f ω² over P¹×P¹ when f depends only on
/// tₖ = |zₖ|². In t-coordinates ω² = 2 dt₁dt₂/((1+t₁)²(1+t₂)²). The outer
/// variable is s = t₁+t₂, so `breaks` (values of s) are exact panel ends;
/// on each level set the smaller coordinate t is integrated in t/(1+t) up
/// to 1 and in log t beyond.
/// The corner s = 0 is graded, with `alpha` the exponent of f·s there.
pub fn toric_nodes(spec: &GridSpec, level: usize, alpha: Option<f64>, breaks: &[f64]) -> Vec<([f64; 2], f64)> {
    let (n_gl, _, _) = spec.level(level);
    let gl = GaussLegendre::<f64>::new(n_gl);
    let inner = alpha.map_or(InnerCell::Regular, InnerCell::Power);
    // Beyond s = 4 the level-set integral has an s⁻³log s tail, so the
    // panels are graded toward s = ∞ as well.
    let tail = 4.0;
    let mut b: Vec<f64> = breaks.iter().copied().filter(|x| *x < tail).collect();
    b.push(tail);
    let mut outer: Vec<(f64, f64)> = radial_nodes(spec, level, inner, &b).into_iter().filter(|n| n.0 < tail).collect();
    let (_, n_graded, _) = spec.level(level);
    let glg = GaussLegendre::<f64>::new(n_graded);
    for (x, w) in graded_cells(&glg, 1.0 / (1.0 + tail), spec, InnerCell::Regular) {
        outer.push(((1.0 - x) / x, w / (x * x)));
    }
    let mut out = Vec::with_capacity(outer.len() * 4 * n_gl);
    for &(s, ws) in &outer {
        let h = 0.5 * s;
        let mut push = |a: f64, wa: f64| {
            let b = s - a;
            let m = 2.0 * ws * wa / ((1.0 + a) * (1.0 + a) * (1.0 + b) * (1.0 + b));
            out.push(([a, b], m));
            out.push(([b, a], m));
        };
        // u = t/(1+t) on t ≤ 1, y = log t on 1 ≤ t ≤ s/2.
        let hu = h.min(1.0);
        for (u, wu) in gl.on(0.0, hu / (1.0 + hu)) {
            let om = 1.0 - u;
            push(u / om, wu / (om * om));
        }
        if h > 1.0 {
            for (y, wy) in gl.on(0.0, h.ln()) {
                let t = y.exp();
                push(t, wy * t);
            }
        }
    }
    out
}

/// ∫ f ω² on P¹×P¹ for integrands depending only on (|z₁|², |z₂|²).
/// `corner_exponent` is the local exponent of |f| at (0,0) in the distance.
pub fn integrate_toric<V: QuadValue>(
    f: impl Fn(f64, f64) -> V + Sync,
    corner_exponent: Option<f64>,
    tol: f64,
    spec: &GridSpec,
) -> Result<IntegralResult<V>, QuadError> {
    if let Some(e) = corner_exponent {
        if e <= -4.0 {
            return Err(QuadError::NonIntegrable { exponent: e, n: 2 });
        }
    }
    // |f| ~ s^{e/2} near the corner, times the Jacobian s.
    let alpha = corner_exponent.map(|e| e / 2.0 + 1.0);
    refine(spec.max_levels, tol, |l| {
        let nodes = toric_nodes(spec, l, alpha, &spec.breakpoints);
        Ok((weighted_sum(&nodes, |t| f(t[0], t[1])), nodes.len()))
    })
}

/// Nodes for ∫_{|z−c|<R} g dA (Lebesgue), polar about `c`, optionally graded at `c`.
pub fn disc_nodes(c: C64, radius: f64, spec: &GridSpec, level: usize, inner: InnerCell) -> Vec<(C64, f64)> {
    let (n_gl, n_graded, n_theta) = spec.level(level);
    let gl = GaussLegendre::<f64>::new(n_gl);
    let glg = GaussLegendre::<f64>::new(n_graded);
    let mut radial: Vec<(f64, f64)> = Vec::new();
    let panels = 4;
    let mut lo = 0.0;
    if inner != InnerCell::Regular {
        let first = radius / panels as f64;
        radial = graded_cells(&glg, first, spec, inner);
        lo = first;
    }
    let step = (radius - lo) / panels as f64;
    for k in 0..panels {
        let a = lo + step * k as f64;
        radial.extend(gl.on(a, a + step));
    }
    let dth = 2.0 * PI / n_theta as f64;
    let mut out = Vec::with_capacity(radial.len() * n_theta);
    for (r, w) in radial {
        for k in 0..n_theta {
            let th = (k as f64 + 0.5) * dth;
            out.push((c + C64::from_polar(r, th), w * r * dth));
        }
    }
    out
}

/// ∫ 1 ωⁿ, used as a sanity check on the rules.
pub fn volume(space: ModelSpace, spec: &GridSpec) -> Result<f64, QuadError> {
    match space {
        ModelSpace::Sphere => integrate_sphere(|_| 1.0, &[], 1e-12, spec).map(|r| r.value),
        ModelSpace::SphereProduct => integrate_toric(|_, _| 1.0, None, 1e-12, spec).map(|r| r.value),
    }
}

/// Fubini–Study ω-density in the affine chart, re-exported for integrands.
pub fn omega_density(z: C64) -> f64 {
    fs_density(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_high_degree_polynomials() {
        let gl = GaussLegendre::<f64>::new(12);
        // ∫_{-1}^{1} x^22 = 2/23
        let v = gl.integrate(-1.0, 1.0, |x| x.powi(22));
        assert!((v - 2.0 / 23.0).abs() < 1e-14);
        let odd = GaussLegendre::<f64>::new(7);
        assert!((odd.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_single_precision() {
        let gl = GaussLegendre::<f32>::new(8);
        let v = gl.integrate(0.0, 1.0, |x| x.exp());
        assert!((v - (1f32.exp() - 1.0)).abs() < 1e-5);
    }

    #[test]
    fn sphere_volume_is_one() {
        let r = integrate_sphere(|_| 1.0, &[], 1e-10, &GridSpec::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn product_volume_is_two() {
        assert!((volume(ModelSpace::SphereProduct, &GridSpec::default()).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn non_integrable_pole_is_rejected() {
        let p = Pole::new(ChartPoint::new(0.0, 0.0), -2.0);
        assert!(matches!(
            integrate_sphere(|_| 1.0, &[p], 1e-8, &GridSpec::default()),
            Err(QuadError::NonIntegrable { .. })
        ));
    }

    #[test]
    fn disc_area() {
        let nodes = disc_nodes(C64::new(0.3, 0.1), 0.7, &GridSpec::default(), 0, InnerCell::Regular);
        let a: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((a - PI * 0.49).abs() < 1e-12);
    }
}
