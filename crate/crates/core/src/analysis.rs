//! Test functions, current pairings and error statistics against the limit
//! measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};
use thiserror::Error;

use crate::bergman::{BergmanError, SectionSpace};
use crate::quadrature::{self, GridSpec, Pole, QuadError};
use crate::sampling::{sample_section, sample_tuple, RngStream};
use crate::space::{chordal, ChartPoint, ModelSpace, Point, Recentre};
use crate::weights::{JointTerm, SingularComponent, SphereTerm, Weight, WeightError};
use crate::zeros::{common_zeros_product, roots_sphere, ZeroTolerances, ZerosError};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("supp dd^cχ meets the base locus at {0:?}, where log P = −∞; use a test function flat near Σ")]
    BaseLocus(Point),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{excluded} of {n} samples were not in general position")]
    TooManyExcluded { excluded: usize, n: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Bergman(#[from] BergmanError),
    #[error(transparent)]
    Zeros(#[from] ZerosError),
}

/// Profile F of a zonal function F(Z), Z ∈ [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// 0 for Z ≤ lo, 1 for Z ≥ hi, quintic smoothstep between.
    Smoothstep { lo: f64, hi: f64 },
    Identity,
    /// (3Z² − 1)/2.
    Legendre2,
    Exp,
}

impl Profile {
    /// (F, F′, F″) at Z.
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        match *self {
            Profile::Smoothstep { lo, hi } => {
                let w = hi - lo;
                let x = (z - lo) / w;
                if x <= 0.0 {
                    (0.0, 0.0, 0.0)
                } else if x >= 1.0 {
                    (1.0, 0.0, 0.0)
                } else {
                    let s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
                    let s1 = 30.0 * x * x * (1.0 - x) * (1.0 - x);
                    let s2 = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
                    (s, s1 / w, s2 / (w * w))
                }
            }
            Profile::Identity => (z, 1.0, 0.0),
            Profile::Legendre2 => (1.5 * z * z - 0.5, 3.0 * z, 3.0),
            Profile::Exp => {
                let e = z.exp();
                (e, e, e)
            }
        }
    }

    /// ½∫₋₁¹ F(Z) dZ, the ω-mean of F(Z) on P¹.
    pub fn mean(&self) -> f64 {
        match *self {
            Profile::Smoothstep { lo, hi } => {
                // G(Z) = ∫_lo^Z F, with ∫S = x⁶ − 3x⁵ + 5x⁴/2.
                let w = hi - lo;
                let g = |z: f64| {
                    let x = (z - lo) / w;
                    if x <= 0.0 {
                        0.0
                    } else if x >= 1.0 {
                        0.5 * w + z - hi
                    } else {
                        w * x.powi(4) * (x * x - 3.0 * x + 2.5)
                    }
                };
                0.5 * (g(1.0) - g(-1.0))
            }
            Profile::Identity | Profile::Legendre2 => 0.0,
            Profile::Exp => 1f64.sinh(),
        }
    }

    /// Bounds on sup|F|, sup|F′|, sup|F″| over [−1, 1].
    fn sup_bounds(&self) -> [f64; 3] {
        match *self {
            Profile::Smoothstep { lo, hi } => {
                let w = hi - lo;
                [1.0, 15.0 / (8.0 * w), 10.0 / 3f64.sqrt() / (w * w)]
            }
            Profile::Identity => [1.0, 1.0, 0.0],
            Profile::Legendre2 => [1.0, 3.0, 3.0],
            Profile::Exp => [1f64.exp(); 3],
        }
    }

    /// C² bound of F(Z) on the unit sphere, using |∇Z| ≤ 1 and |∇²Z| ≤ 1.
    fn c2(&self) -> f64 {
        let [f0, f1, f2] = self.sup_bounds();
        f0 + 2.0 * f1 + f2
    }

    /// Z-interval on which F is not locally constant.
    fn active(&self) -> (f64, f64) {
        match *self {
            Profile::Smoothstep { lo, hi } => (lo.max(-1.0), hi.min(1.0)),
            _ => (-1.0, 1.0),
        }
    }
}

/// Z = cos of the round-sphere angle between z and c.
fn zonal_coordinate(z: ChartPoint, c: ChartPoint) -> f64 {
    let d = chordal(z, c);
    1.0 - 2.0 * d * d
}

/// Chordal radius of {Z ≥ z0} about the centre.
fn chordal_radius(z0: f64) -> f64 {
    (0.5 * (1.0 - z0)).max(0.0).sqrt()
}

/// Support of dd^cχ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SuppDdc {
    /// Chordal annulus inner ≤ d(·, centre) ≤ outer on P¹.
    Annulus { centre: ChartPoint, inner: f64, outer: f64 },
    Everywhere,
}

/// Closed-form C² test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// F(Z) on P¹ with Z measured from `centre`.
    Zonal { centre: ChartPoint, profile: Profile },
    /// First-order spherical harmonic X (or Y) in the frame rotating `centre` to 0.
    Harmonic { centre: C64, imaginary: bool },
    /// F₁(Z₁)·F₂(Z₂) on P¹×P¹ with Zₖ measured from 0 on each factor.
    Toric { f1: Profile, f2: Profile },
}

impl TestFunction {
    pub fn space(&self) -> ModelSpace {
        match self {
            TestFunction::Toric { .. } => ModelSpace::SphereProduct,
            _ => ModelSpace::Sphere,
        }
    }

    pub fn value(&self, pt: &Point) -> f64 {
        match (*self, pt) {
            (TestFunction::Zonal { centre, profile }, Point::Sphere(z)) => profile.eval(zonal_coordinate(*z, centre)).0,
            (TestFunction::Harmonic { centre, imaginary }, Point::Sphere(z)) => harmonic(*z, centre, imaginary),
            (TestFunction::Toric { f1, f2 }, Point::Product(a, b)) => {
                let o = ChartPoint::new(0.0, 0.0);
                f1.eval(zonal_coordinate(*a, o)).0 * f2.eval(zonal_coordinate(*b, o)).0
            }
            _ => panic!("test function and point live on different spaces"),
        }
    }

    /// Value at tₖ = |zₖ|² for toric functions.
    pub fn toric_value(&self, t1: f64, t2: f64) -> f64 {
        match *self {
            TestFunction::Toric { f1, f2 } => f1.eval((1.0 - t1) / (1.0 + t1)).0 * f2.eval((1.0 - t2) / (1.0 + t2)).0,
            _ => panic!("not a toric test function"),
        }
    }

    /// Density of dd^cχ with respect to ω on P¹ (dd^c = 2Δ_S ω).
    pub fn ddc_density(&self, z: ChartPoint) -> f64 {
        match *self {
            TestFunction::Zonal { centre, profile } => {
                let zc = zonal_coordinate(z, centre);
                let (_, f1, f2) = profile.eval(zc);
                2.0 * ((1.0 - zc * zc) * f2 - 2.0 * zc * f1)
            }
            TestFunction::Harmonic { centre, imaginary } => -4.0 * harmonic(z, centre, imaginary),
            TestFunction::Toric { .. } => panic!("dd^c density is defined for test functions on P¹"),
        }
    }

    /// ∫ χ ωⁿ.
    pub fn omega_integral(&self) -> f64 {
        match *self {
            TestFunction::Zonal { profile, .. } => profile.mean(),
            TestFunction::Harmonic { .. } => 0.0,
            // ω² = 2ω₁∧ω₂.
            TestFunction::Toric { f1, f2 } => 2.0 * f1.mean() * f2.mean(),
        }
    }

    pub fn supp_ddc(&self) -> SuppDdc {
        match *self {
            TestFunction::Zonal { centre, profile: p @ Profile::Smoothstep { .. } } => {
                let (lo, hi) = p.active();
                SuppDdc::Annulus { centre, inner: chordal_radius(hi), outer: chordal_radius(lo) }
            }
            _ => SuppDdc::Everywhere,
        }
    }

    /// Singular point near which dd^cχ ≡ 0, with the clearance radius.
    pub fn flat_near(&self) -> Option<(Point, f64)> {
        match self.supp_ddc() {
            SuppDdc::Annulus { centre, inner, .. } if inner > 0.0 => Some((Point::Sphere(centre), inner)),
            _ => None,
        }
    }

    /// Whether dd^cχ vanishes on a neighbourhood of the point.
    pub fn is_flat_near(&self, pt: &Point) -> bool {
        match (self.supp_ddc(), pt) {
            (SuppDdc::Annulus { centre, inner, outer }, Point::Sphere(z)) => {
                let d = chordal(*z, centre);
                d < inner || d > outer
            }
            _ => false,
        }
    }

    /// Bound on ‖χ‖_{C²} for the round metric.
    pub fn c2_bound(&self) -> f64 {
        match *self {
            TestFunction::Zonal { profile, .. } => profile.c2(),
            TestFunction::Harmonic { .. } => 3.0,
            TestFunction::Toric { f1, f2 } => f1.c2() * f2.c2(),
        }
    }

    /// Centre of the function on P¹, if it has one.
    pub fn centre(&self) -> Option<C64> {
        match *self {
            TestFunction::Zonal { centre, .. } => centre.finite(),
            TestFunction::Harmonic { centre, .. } => Some(centre),
            TestFunction::Toric { .. } => None,
        }
    }

    /// Radii |w| in the chart recentred at `centre()` where χ has kinks.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.supp_ddc() {
            SuppDdc::Annulus { inner, outer, .. } => [inner, outer]
                .into_iter()
                .filter(|d| *d > 0.0 && *d < 1.0)
                .map(|d| d / (1.0 - d * d).sqrt())
                .collect(),
            SuppDdc::Everywhere => Vec::new(),
        }
    }
}

fn harmonic(z: ChartPoint, centre: C64, imaginary: bool) -> f64 {
    match Recentre::new(centre).forward(z) {
        ChartPoint::Infinity => 0.0,
        ChartPoint::Finite(w) => {
            let v = if imaginary { w.im } else { w.re };
            2.0 * v / (1.0 + w.norm_sqr())
        }
    }
}

/// Base point for the battery on P¹: the first singular point, or 0.
pub fn battery_centre(w: &Weight) -> C64 {
    w.singular_set
        .iter()
        .find_map(|s| match s {
            SingularComponent::Point(Point::Sphere(ChartPoint::Finite(c))) => Some(*c),
            _ => None,
        })
        .unwrap_or(C64::new(0.0, 0.0))
}

/// Clearances of the three radial bumps, and their transition width.
pub const BUMP_CLEARANCES: [f64; 3] = [0.1, 0.2, 0.3];
pub const BUMP_WIDTH: f64 = 0.2;

fn bump(clearance: f64) -> Profile {
    let z_in = 1.0 - 2.0 * clearance * clearance;
    let outer = clearance + BUMP_WIDTH;
    Profile::Smoothstep { lo: 1.0 - 2.0 * outer * outer, hi: z_in }
}

/// Fixed battery of eight named test functions adapted to the weight.
pub fn battery(w: &Weight) -> Vec<(String, TestFunction)> {
    match w.space {
        ModelSpace::Sphere => {
            let a = battery_centre(w);
            let ca = ChartPoint::Finite(a);
            let mut out: Vec<(String, TestFunction)> = BUMP_CLEARANCES
                .iter()
                .map(|&c| (format!("bump_{c}"), TestFunction::Zonal { centre: ca, profile: bump(c) }))
                .collect();
            out.push(("harmonic_re".into(), TestFunction::Harmonic { centre: a, imaginary: false }));
            out.push(("harmonic_im".into(), TestFunction::Harmonic { centre: a, imaginary: true }));
            out.push(("moment_1".into(), TestFunction::Zonal { centre: ca, profile: Profile::Identity }));
            out.push(("moment_2".into(), TestFunction::Zonal { centre: ca, profile: Profile::Legendre2 }));
            let off = Recentre::new(a).inverse(ChartPoint::new(0.4, 0.2));
            out.push(("global_exp".into(), TestFunction::Zonal { centre: off, profile: Profile::Exp }));
            out
        }
        ModelSpace::SphereProduct => {
            let mut out: Vec<(String, TestFunction)> = BUMP_CLEARANCES
                .iter()
                .map(|&c| (format!("bump_{c}"), TestFunction::Toric { f1: bump(c), f2: bump(c) }))
                .collect();
            out.push(("moment_11".into(), TestFunction::Toric { f1: Profile::Identity, f2: Profile::Identity }));
            out.push(("moment_21".into(), TestFunction::Toric { f1: Profile::Legendre2, f2: Profile::Identity }));
            out.push(("moment_1".into(), TestFunction::Toric { f1: Profile::Identity, f2: Profile::Exp }));
            out.push(("moment_2".into(), TestFunction::Toric { f1: Profile::Legendre2, f2: Profile::Exp }));
            out.push(("global_exp".into(), TestFunction::Toric { f1: Profile::Exp, f2: Profile::Exp }));
            out
        }
    }
}

const PAIRING_TOL: f64 = 1e-10;
/// Four real dimensions: the product pairings settle for less.
const PRODUCT_PAIRING_TOL: f64 = 1e-8;

/// Grid and pole for integrating against dd^cχ on P¹, graded at `centre`
/// with the kinks of χ and of the weight as breakpoints when they share it.
fn sphere_setup(w: &Weight, chi: &TestFunction, grid: &GridSpec, centre: Option<Pole>) -> (GridSpec, Vec<Pole>) {
    let mut spec = grid.clone();
    let c = centre.and_then(|p| p.at.finite()).unwrap_or(C64::new(0.0, 0.0));
    if chi.centre().is_some_and(|x| (x - c).norm() == 0.0) {
        spec.breakpoints.extend(chi.breakpoints());
    }
    if !w.factor_density_poles(0).is_empty() {
        spec.breakpoints.extend(w.factor_breakpoints(0));
    }
    (spec, centre.into_iter().collect())
}

/// Grading pole on P¹ for log-type integrands: the weight's singular point,
/// else the centre of χ.
fn sphere_pole(w: &Weight, chi: &TestFunction) -> Result<Option<Pole>, AnalysisError> {
    let poles = w.factor_density_poles(0);
    let centre = quadrature::grading_centre(1, &poles)?;
    Ok(match centre {
        Some(p) => Some(Pole::new(p.at, 0.0)),
        None => chi.centre().map(|c| Pole::new(ChartPoint::Finite(c), 0.0)),
    })
}

/// ∫ f dd^cχ on P¹, graded at the weight's singular point.
pub fn pair_laplacian(
    w: &Weight,
    chi: &TestFunction,
    f: impl Fn(C64) -> f64 + Sync,
    grid: &GridSpec,
) -> Result<f64, AnalysisError> {
    let pole = sphere_pole(w, chi)?;
    let (spec, poles) = sphere_setup(w, chi, grid, pole);
    // f may be costly; skip it where dd^cχ vanishes.
    let integrand = |z: C64| match chi.ddc_density(ChartPoint::Finite(z)) {
        d if d == 0.0 => 0.0,
        d => f(z) * d,
    };
    let r = quadrature::integrate_sphere(integrand, &poles, PAIRING_TOL, &spec)?;
    Ok(r.value)
}

/// |∫ dd^cχ|, which vanishes for exact forms.
pub fn exactness(w: &Weight, chi: &TestFunction, grid: &GridSpec) -> Result<f64, AnalysisError> {
    match chi.space() {
        ModelSpace::Sphere => Ok(pair_laplacian(w, chi, |_| 1.0, grid)?.abs()),
        ModelSpace::SphereProduct => {
            // Σ of factor exactness values; χ is separable in the factors.
            let TestFunction::Toric { f1, f2 } = *chi else { unreachable!() };
            let fs = Weight::fubini_study(ModelSpace::Sphere);
            let o = ChartPoint::new(0.0, 0.0);
            let a = pair_laplacian(&fs, &TestFunction::Zonal { centre: o, profile: f1 }, |_| 1.0, grid)?;
            let b = pair_laplacian(&fs, &TestFunction::Zonal { centre: o, profile: f2 }, |_| 1.0, grid)?;
            Ok(a.abs() + b.abs())
        }
    }
}

/// ⟨c₁(L,h)ⁿ, χ⟩.
pub fn curvature_pairing(w: &Weight, chi: &TestFunction, grid: &GridSpec) -> Result<f64, AnalysisError> {
    match w.space {
        ModelSpace::Sphere => {
            // dd^cφ = ω + dd^cψ with ψ the bounded-at-∞ part of φ, so
            // ⟨c₁, χ⟩ = ∫χω + ∫ψ dd^cχ; this avoids pairing with singular densities.
            let terms: Vec<_> = w.factors[0].iter().filter(|t| !matches!(t, SphereTerm::FsReference { .. })).collect();
            let psi = |z: C64| terms.iter().map(|t| t.value(z)).sum::<f64>();
            Ok(chi.omega_integral() + pair_laplacian(w, chi, psi, grid)?)
        }
        ModelSpace::SphereProduct => {
            let TestFunction::Toric { f1, f2 } = *chi else {
                return Err(AnalysisError::Unsupported("product pairings need toric test functions".into()));
            };
            if w.is_separable() {
                let o = ChartPoint::new(0.0, 0.0);
                let a = curvature_pairing(&Weight::sphere(w.factors[0].clone())?, &TestFunction::Zonal { centre: o, profile: f1 }, grid)?;
                let b = curvature_pairing(&Weight::sphere(w.factors[1].clone())?, &TestFunction::Zonal { centre: o, profile: f2 }, grid)?;
                // c₁∧c₁ = 2c₁⁽¹⁾∧c₁⁽²⁾.
                return Ok(2.0 * a * b);
            }
            let eps = w.joint_pole().unwrap_or(0.0);
            let mut spec = grid.clone();
            if let Some(JointTerm::CutoffJointPole { r0, .. }) = w.joint.first() {
                spec.breakpoints.extend([r0 * r0, 4.0 * r0 * r0]);
            }
            let r = quadrature::integrate_toric(
                |t1, t2| w.toric_ma_density(t1, t2).unwrap_or(f64::NAN) * chi.toric_value(t1, t2),
                Some(-2.0),
                PRODUCT_PAIRING_TOL,
                &spec,
            )?;
            Ok(eps * eps * chi.toric_value(0.0, 0.0) + r.value)
        }
    }
}

/// ⟨γ_p/p − c₁, χ⟩ = (1/2p)∫ log P_p dd^cχ on P¹; on separable products the
/// difference of wedges 2⟨γ⁽¹⁾/p,F₁⟩⟨γ⁽²⁾/p,F₂⟩ − ⟨c₁∧c₁, χ⟩.
/// No flatness hypothesis is checked.
pub fn fs_deviation(space: &SectionSpace, chi: &TestFunction) -> Result<f64, AnalysisError> {
    let grid = GridSpec::for_degree(space.p);
    match space.space() {
        ModelSpace::Sphere => {
            let p = space.p as f64;
            let v = pair_laplacian(&space.weight, chi, |z| space.log_kernel(&Point::finite(z)), &grid)?;
            if !v.is_finite() {
                return Err(AnalysisError::NonFinite("fs_deviation"));
            }
            Ok(v / (2.0 * p))
        }
        ModelSpace::SphereProduct => {
            let (Some(factors), TestFunction::Toric { f1, f2 }) = (space.factors(), *chi) else {
                return Err(AnalysisError::Unsupported(
                    "FS wedge pairings on the product need a separable weight and a toric test function".into(),
                ));
            };
            let o = ChartPoint::new(0.0, 0.0);
            let chis = [TestFunction::Zonal { centre: o, profile: f1 }, TestFunction::Zonal { centre: o, profile: f2 }];
            let mut c = [0.0; 2];
            let mut g = [0.0; 2];
            for k in 0..2 {
                c[k] = curvature_pairing(&factors[k].weight, &chis[k], &grid)?;
                g[k] = c[k] + fs_deviation(&factors[k], &chis[k])?;
            }
            Ok(2.0 * (g[0] * g[1] - c[0] * c[1]))
        }
    }
}

/// ⟨(γ_p/p)ⁿ, χ⟩.
pub fn fs_pairing(space: &SectionSpace, chi: &TestFunction) -> Result<f64, AnalysisError> {
    let grid = GridSpec::for_degree(space.p);
    Ok(curvature_pairing(&space.weight, chi, &grid)? + fs_deviation(space, chi)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsCurrentError {
    pub p: usize,
    pub error: f64,
    /// |log dist(supp dd^cχ, Σ)|/p when χ is flat near Σ.
    pub log_dist_term: Option<f64>,
}

/// Deterministic error ⟨γ_p/p − c₁, χ⟩ with the flatness hypothesis checked
/// at base-locus points.
pub fn fs_current_error(space: &SectionSpace, chi: &TestFunction) -> Result<FsCurrentError, AnalysisError> {
    for s in &space.weight.singular_set {
        if let SingularComponent::Point(pt @ Point::Sphere(_)) = s {
            if space.log_kernel(pt) == f64::NEG_INFINITY && !chi.is_flat_near(pt) {
                return Err(AnalysisError::BaseLocus(*pt));
            }
        }
    }
    let error = fs_deviation(space, chi)?;
    let log_dist_term = chi.flat_near().map(|(_, r)| r.ln().abs() / space.p as f64);
    Ok(FsCurrentError { p: space.p, error, log_dist_term })
}

/// λ_p = A·log p, threshold c·λ_p/p and the exponent target of a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBoundSpec {
    pub a: f64,
    pub target: f64,
    /// Exceedance constant; fitted at the smallest p when absent.
    pub c: Option<f64>,
}

impl Default for RateBoundSpec {
    fn default() -> Self {
        Self { a: 10.0, target: 1.0, c: None }
    }
}

impl RateBoundSpec {
    pub fn lambda(&self, p: usize) -> f64 {
        self.a * (p as f64).ln()
    }

    pub fn threshold(&self, p: usize, c: f64) -> f64 {
        c * self.lambda(p) / p as f64
    }

    /// c such that half of the errors at `p` exceed the threshold.
    pub fn fit_c(&self, p: usize, errors: &[f64]) -> f64 {
        let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        Data::new(abs).median() * p as f64 / self.lambda(p)
    }
}

/// Zero-ensemble statistics at one p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub p: usize,
    pub n: usize,
    /// Samples dropped for lack of general position.
    pub excluded: usize,
    /// Indices of the kept samples, aligned with `errors`.
    pub kept: Vec<u64>,
    /// eᵢ = ⟨(1/p^m)[s=0] − c₁ⁿ, χ⟩ per kept sample.
    pub errors: Vec<f64>,
    pub limit_pairing: f64,
    pub mean: f64,
    pub se: f64,
    /// 5%, 25%, 50%, 75%, 95%.
    pub quantiles: [f64; 5],
    /// Total multiplicity per kept sample.
    pub masses: Vec<usize>,
    /// Samples whose zero extraction was flagged.
    pub flagged: usize,
}

impl McReport {
    pub fn exceedance(&self, threshold: f64) -> f64 {
        self.errors.iter().filter(|e| e.abs() > threshold).count() as f64 / self.errors.len() as f64
    }
}

/// Samples N sections (P¹) or pairs (P¹×P¹) and pairs their zero measures
/// with χ. Samples are processed in parallel and reduced in index order.
pub fn mc_zero_error(
    space: &SectionSpace,
    chi: &TestFunction,
    n: usize,
    stream: &RngStream,
    tol: &ZeroTolerances,
) -> Result<McReport, AnalysisError> {
    Ok(mc_zero_errors(space, std::slice::from_ref(chi), n, stream, tol)?.remove(0))
}

/// [`mc_zero_error`] for several test functions over one ensemble.
pub fn mc_zero_errors(
    space: &SectionSpace,
    chis: &[TestFunction],
    n: usize,
    stream: &RngStream,
    tol: &ZeroTolerances,
) -> Result<Vec<McReport>, AnalysisError> {
    if n < 30 {
        return Err(AnalysisError::Precondition(format!("N = {n} < 30 samples")));
    }
    let grid = GridSpec::for_degree(space.p);
    let limits = chis.iter().map(|chi| curvature_pairing(&space.weight, chi, &grid)).collect::<Result<Vec<f64>, _>>()?;
    type Sample = Option<(Vec<f64>, usize, bool)>;
    let results: Vec<Result<Sample, AnalysisError>> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let st = stream.with_sample(k);
            let zm = match space.space() {
                ModelSpace::Sphere => roots_sphere(&sample_section(space, &st).section, tol),
                ModelSpace::SphereProduct => {
                    let s = sample_tuple(&[space, space], &st);
                    common_zeros_product(&s[0].section, &s[1].section, tol)
                }
            };
            match zm {
                Ok(m) => {
                    let e = chis.iter().zip(&limits).map(|(chi, l)| m.pairing(|p| chi.value(p)) - l).collect();
                    Ok(Some((e, m.total_multiplicity(), m.flagged)))
                }
                Err(ZerosError::GeneralPosition(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    let mut errors = vec![Vec::with_capacity(n); chis.len()];
    let mut masses = Vec::with_capacity(n);
    let mut kept = Vec::with_capacity(n);
    let mut flagged = 0;
    for (k, r) in results.into_iter().enumerate() {
        if let Some((e, m, f)) = r? {
            kept.push(k as u64);
            for (acc, v) in errors.iter_mut().zip(e) {
                acc.push(v);
            }
            masses.push(m);
            flagged += f as usize;
        }
    }
    let excluded = n - masses.len();
    if excluded * 100 >= n {
        return Err(AnalysisError::TooManyExcluded { excluded, n });
    }
    errors
        .into_iter()
        .zip(limits)
        .map(|(errors, limit_pairing)| {
            if errors.iter().any(|e| !e.is_finite()) {
                return Err(AnalysisError::NonFinite("zero pairing"));
            }
            let mean = errors.iter().mean();
            let se = errors.iter().std_dev() / (errors.len() as f64).sqrt();
            let mut data = Data::new(errors.clone());
            let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| data.quantile(q));
            Ok(McReport { p: space.p, n, excluded, kept: kept.clone(), errors, limit_pairing, mean, se, quantiles, masses: masses.clone(), flagged })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub p: usize,
    pub value: f64,
    pub se: Option<f64>,
}

/// A statistic indexed by strictly increasing p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub statistic: String,
    pub points: Vec<SeriesPoint>,
}

impl ErrorSeries {
    pub fn new(statistic: &str, points: Vec<SeriesPoint>) -> Result<Self, AnalysisError> {
        if points.windows(2).any(|w| w[0].p >= w[1].p) {
            return Err(AnalysisError::Precondition("p must be strictly increasing".into()));
        }
        if points.iter().any(|x| !x.value.is_finite()) {
            return Err(AnalysisError::NonFinite("error series"));
        }
        Ok(Self { statistic: statistic.to_string(), points })
    }

    pub fn from_pairs(statistic: &str, pairs: &[(usize, f64)]) -> Result<Self, AnalysisError> {
        Self::new(statistic, pairs.iter().map(|&(p, value)| SeriesPoint { p, value, se: None }).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,statistic,se\n");
        for x in &self.points {
            let se = x.se.map_or(String::new(), |s| format!("{s:.17e}"));
            out.push_str(&format!("{},{:.17e},{}\n", x.p, x.value, se));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// t in |e| ≈ C·log p·p^{−t}.
    pub exponent: f64,
    pub constant: f64,
    pub residuals: Vec<f64>,
    pub target: f64,
    /// 2× the constant implied at the smallest p.
    pub bound_constant: f64,
    /// p values with |e_p| > bound_constant·log p·p^{−target}.
    pub violations: Vec<usize>,
    pub pass: bool,
}

/// Least-squares fit of log|e| − log log p against log p.
pub fn rate_fit(series: &ErrorSeries, target: f64) -> Result<RateFit, AnalysisError> {
    let pts = &series.points;
    if pts.len() < 4 {
        return Err(AnalysisError::Precondition("rate fit needs at least 4 values of p".into()));
    }
    if pts.iter().any(|x| !x.value.is_finite() || x.p < 2) {
        return Err(AnalysisError::NonFinite("rate fit input"));
    }
    let xs: Vec<f64> = pts.iter().map(|x| (x.p as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|x| x.value.abs().ln() - (x.p as f64).ln().ln()).collect();
    let (slope, intercept) = if ys.iter().all(|y| y.is_finite()) {
        let mx = xs.iter().mean();
        let my = ys.iter().mean();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    } else {
        // Exact zeros: the fit is degenerate.
        (f64::NEG_INFINITY, f64::NEG_INFINITY)
    };
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let env = |p: usize| (p as f64).ln() * (p as f64).powf(-target);
    let bound_constant = 2.0 * pts[0].value.abs() / env(pts[0].p);
    let violations: Vec<usize> = pts.iter().filter(|x| x.value.abs() > bound_constant * env(x.p)).map(|x| x.p).collect();
    Ok(RateFit {
        exponent: -slope,
        constant: intercept.exp(),
        residuals,
        target,
        bound_constant,
        pass: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeMassReport {
    pub expected: usize,
    /// (sample, total multiplicity) for mismatching samples.
    pub mismatches: Vec<(usize, usize)>,
    pub fraction_ok: f64,
}

/// Compares total multiplicities against p^m·∫c₁ⁿ (p on P¹, 2p² on P¹×P¹).
pub fn wedge_mass_check(space: ModelSpace, p: usize, masses: &[usize]) -> WedgeMassReport {
    let expected = match space {
        ModelSpace::Sphere => p,
        ModelSpace::SphereProduct => 2 * p * p,
    };
    let mismatches: Vec<(usize, usize)> = masses.iter().enumerate().filter(|x| *x.1 != expected).map(|(i, &m)| (i, m)).collect();
    let fraction_ok = 1.0 - mismatches.len() as f64 / masses.len().max(1) as f64;
    WedgeMassReport { expected, mismatches, fraction_ok }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// |e_{k+1}|/|e_k| along the ladder (0/0 counted as 0).
    pub ratios: Vec<f64>,
    pub pass: bool,
}

/// Errors decrease along the ladder up to a 20% slack per step.
pub fn fswedge_convergence(series: &ErrorSeries) -> ConvergenceReport {
    let ratios: Vec<f64> = series
        .points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].value.abs(), w[1].value.abs());
            if b == 0.0 {
                0.0
            } else {
                b / a
            }
        })
        .collect();
    let pass = ratios.iter().all(|r| *r <= 1.2);
    ConvergenceReport { ratios, pass }
}

/// Fitted ξ in fraction_p ≈ c·p^{ξn}·exp(−λ_p/c), from the nonzero fractions.
pub fn fit_exceedance_exponent(spec: &RateBoundSpec, c: f64, n: usize, fractions: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = fractions
        .iter()
        .filter(|x| x.1 > 0.0)
        .map(|&(p, f)| ((p as f64).ln() * n as f64, f.ln() + spec.lambda(p) / c - c.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|x| x.0).mean();
    let my = pts.iter().map(|x| x.1).mean();
    let sxy: f64 = pts.iter().map(|x| (x.0 - mx) * (x.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|x| (x.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::BergmanConfig;

    fn fd_ddc(chi: &TestFunction, z: C64) -> f64 {
        // dd^c = Δ/(2π) dA, density w.r.t. ω = dA/(π(1+|z|²)²).
        let lap = crate::weights::fd_laplacian(|x| chi.value(&Point::finite(x)), z, 1e-4);
        lap / 2.0 * (1.0 + z.norm_sqr()).powi(2)
    }

    #[test]
    fn ddc_densities_match_finite_differences() {
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0.3+0.1i,0.3)").unwrap();
        for (name, chi) in battery(&w) {
            for z in [C64::new(0.1, 0.2), C64::new(-0.7, 0.4), C64::new(1.3, -0.9), C64::new(0.45, 0.0)] {
                let a = chi.ddc_density(ChartPoint::Finite(z));
                let b = fd_ddc(&chi, z);
                assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()), "{name} at {z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn battery_is_exact() {
        for preset in ["fs", "fs+softpole(0,0.3)", "fs+logpole(0.2-0.1i,0.3)"] {
            let w = Weight::preset(ModelSpace::Sphere, preset).unwrap();
            let b = battery(&w);
            assert_eq!(b.len(), 8);
            for (name, chi) in b {
                let e = exactness(&w, &chi, &GridSpec::for_degree(8)).unwrap();
                assert!(e <= 1e-10, "{preset} {name}: {e}");
            }
        }
        let w = Weight::fubini_study(ModelSpace::SphereProduct);
        for (name, chi) in battery(&w) {
            assert!(exactness(&w, &chi, &GridSpec::default()).unwrap() <= 1e-10, "{name}");
        }
    }

    #[test]
    fn omega_integrals_match_quadrature() {
        let fs = Weight::fubini_study(ModelSpace::Sphere);
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0.5,0.3)").unwrap();
        for (name, chi) in battery(&w) {
            let q = curvature_pairing(&fs, &chi, &GridSpec::default()).unwrap();
            assert!((q - chi.omega_integral()).abs() < 1e-10, "{name}: {q} vs {}", chi.omega_integral());
        }
    }

    #[test]
    fn bumps_are_flat_near_the_pole() {
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0,0.3)").unwrap();
        let b = battery(&w);
        let pole = Point::finite(C64::new(0.0, 0.0));
        for (i, (_, chi)) in b.iter().take(3).enumerate() {
            let (pt, r) = chi.flat_near().unwrap();
            assert_eq!(pt, pole);
            assert!((r - BUMP_CLEARANCES[i]).abs() < 1e-12);
            assert!(chi.is_flat_near(&pole));
            assert_eq!(chi.ddc_density(ChartPoint::new(0.05, 0.0)), 0.0);
        }
        assert!(b[3..].iter().all(|(_, chi)| chi.flat_near().is_none()));
    }

    #[test]
    fn pure_fs_error_vanishes() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let sp = SectionSpace::build(&w, 8, &BergmanConfig::default()).unwrap();
        for (name, chi) in battery(&w) {
            let e = fs_current_error(&sp, &chi).unwrap();
            assert!(e.error.abs() < 1e-10, "{name}: {}", e.error);
        }
    }

    #[test]
    fn base_locus_needs_flat_functions() {
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0,0.3)").unwrap();
        // p = 10: base locus of order 3 > pε = 3? No: jmin = 3 > 2 gives P(0) = 0.
        let sp = SectionSpace::build(&w, 10, &BergmanConfig::default()).unwrap();
        assert_eq!(sp.log_kernel(&Point::finite(C64::new(0.0, 0.0))), f64::NEG_INFINITY);
        let b = battery(&w);
        assert!(fs_current_error(&sp, &b[0].1).is_ok());
        assert!(matches!(fs_current_error(&sp, &b[5].1), Err(AnalysisError::BaseLocus(_))));
        assert!(fs_deviation(&sp, &b[5].1).unwrap().is_finite());
    }

    #[test]
    fn curvature_pairing_matches_the_curvature_measure() {
        for (preset, tol) in [("fs", 1e-12), ("fs+softpole(0,0.3)", 1e-8), ("fs+logpole(0.2,0.3)", 1e-8), ("fs+cone(0,0.5,0.1)", 1e-8), ("fs+poincare(0,0.1)", 1e-5)] {
            let w = Weight::preset(ModelSpace::Sphere, preset).unwrap();
            let cm = crate::weights::curvature(&w, &GridSpec::default()).unwrap();
            // The measure route resolves the bump kinks only to ~1e-4.
            for (name, chi) in battery(&w).into_iter().skip(3) {
                let a = curvature_pairing(&w, &chi, &GridSpec::default()).unwrap_or_else(|e| panic!("{preset} {name}: {e}"));
                let b = cm.pair(|p| chi.value(p));
                assert!((a - b).abs() < tol, "{preset} {name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn product_curvature_masses() {
        let one = TestFunction::Toric { f1: Profile::Smoothstep { lo: -3.0, hi: -2.0 }, f2: Profile::Smoothstep { lo: -3.0, hi: -2.0 } };
        for preset in ["fs", "fs+softjointpole(0,0,0.15)", "fs+softpole(0,0.3)"] {
            let w = Weight::preset(ModelSpace::SphereProduct, preset).unwrap();
            let m = curvature_pairing(&w, &one, &GridSpec::default()).unwrap_or_else(|e| panic!("{preset}: {e}"));
            assert!((m - 2.0).abs() < 1e-8, "{preset}: {m}");
        }
    }

    #[test]
    fn rate_fit_synthetic() {
        let good: Vec<(usize, f64)> = [4usize, 8, 16, 32, 64].iter().map(|&p| (p, 5.0 * (p as f64).ln() / p as f64)).collect();
        let f = rate_fit(&ErrorSeries::from_pairs("e", &good).unwrap(), 1.0).unwrap();
        assert!((f.exponent - 1.0).abs() < 0.05);
        assert!((f.constant - 5.0).abs() < 1e-9);
        assert!(f.pass);
        let flat: Vec<(usize, f64)> = [4usize, 8, 16, 32, 64].iter().map(|&p| (p, 0.3)).collect();
        assert!(!rate_fit(&ErrorSeries::from_pairs("e", &flat).unwrap(), 1.0).unwrap().pass);
        assert!(rate_fit(&ErrorSeries::from_pairs("e", &good[..3]).unwrap(), 1.0).is_err());
        assert!(ErrorSeries::from_pairs("e", &[(8, 1.0), (4, 1.0)]).is_err());
        assert!(ErrorSeries::from_pairs("e", &[(4, f64::NAN)]).is_err());
    }

    #[test]
    fn fswedge_series() {
        let zero = ErrorSeries::from_pairs("fs", &[(4, 0.0), (8, 0.0), (16, 0.0)]).unwrap();
        assert!(fswedge_convergence(&zero).pass);
        let bumpy = ErrorSeries::from_pairs("fs", &[(4, 0.1), (8, 0.11), (16, 0.2)]).unwrap();
        let r = fswedge_convergence(&bumpy);
        assert!(!r.pass);
        assert!((r.ratios[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn wedge_mass() {
        let r = wedge_mass_check(ModelSpace::SphereProduct, 3, &[18, 18, 17]);
        assert_eq!(r.expected, 18);
        assert_eq!(r.mismatches, vec![(2, 17)]);
        assert_eq!(wedge_mass_check(ModelSpace::Sphere, 5, &[5, 5]).mismatches.len(), 0);
    }

    #[test]
    fn small_ensembles_are_rejected() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let sp = SectionSpace::build(&w, 4, &BergmanConfig::default()).unwrap();
        let chi = battery(&w)[3].1;
        let r = mc_zero_error(&sp, &chi, 10, &RngStream::new(1, "t", 4, 0), &ZeroTolerances::default());
        assert!(matches!(r, Err(AnalysisError::Precondition(_))));
    }

    #[test]
    fn fs_ensemble_harmonic_mean_is_zero() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let sp = SectionSpace::build(&w, 6, &BergmanConfig::default()).unwrap();
        let chi = battery(&w)[3].1;
        let r = mc_zero_error(&sp, &chi, 200, &RngStream::new(3, "harm", 6, 0), &ZeroTolerances::default()).unwrap();
        assert!(r.mean.abs() <= 3.0 * r.se, "{} ± {}", r.mean, r.se);
        assert!(r.masses.iter().all(|&m| m == 6));
    }
}
