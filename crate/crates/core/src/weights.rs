//! Singular Hermitian-metric weights on O(1) → P¹ and O(1,1) → P¹×P¹.
//!
//! A weight is a sum of closed-form terms in the affine chart of each factor.
//! All the degree sits in the Fubini–Study reference term; every other term is
//! bounded near ∞, so the transition to the reciprocal chart w = 1/z is
//! φ_∞(w) = φ(1/w) + log|w|, which turns ½log(1+|z|²) into ½log(1+|w|²).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, GridSpec, Pole, QuadError, SphereRule};
use crate::space::{chordal, distance, fs_density, ChartPoint, ModelSpace, Point, Recentre};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("unknown weight preset `{0}`")]
    UnknownPreset(String),
    #[error("grid too coarse near cutoff annulus at radius {r0}: finite-difference step {step:e}")]
    GridTooCoarse { r0: f64, step: f64 },
    #[error("curvature cross-check failed at {at:?}: analytic {analytic:e}, finite difference {fd:e}")]
    CrossCheck { at: C64, analytic: f64, fd: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Which affine chart a coordinate is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Affine,
    Reciprocal,
}

/// Quintic smoothstep cutoff: 1 on [0, r0], 0 beyond 2r0. Returns (χ, χ', χ'').
pub fn cutoff(r: f64, r0: f64) -> (f64, f64, f64) {
    if r <= r0 {
        return (1.0, 0.0, 0.0);
    }
    if r >= 2.0 * r0 {
        return (0.0, 0.0, 0.0);
    }
    let x = (r - r0) / r0;
    let s = x * x * x * (x * (6.0 * x - 15.0) + 10.0);
    let ds = 30.0 * x * x * (x - 1.0) * (x - 1.0);
    let dds = 60.0 * x * (2.0 * x - 1.0) * (x - 1.0);
    (1.0 - s, -ds / r0, -dds / (r0 * r0))
}

/// A closed-form term on one P¹ factor, in the affine coordinate z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SphereTerm {
    /// s·½log(1+|z|²).
    FsReference { scale: f64 },
    /// ε·χ(ρ)·log ρ with a smoothstep cutoff between r0 and 2r0, where
    /// ρ = |z−a|/|1+āz| is the modulus in the chart recentred at a.
    CutoffLogPole { center: C64, eps: f64, r0: f64 },
    /// ε·½log(|z−a|²/(|z−a|²+R²)): a log pole whose compensating negative
    /// curvature is spread at scale R.
    SoftLogPole { center: C64, eps: f64, radius: f64 },
    /// amp·d(z,a)^{2β} with d the chordal distance.
    Cone { center: C64, beta: f64, amp: f64 },
    /// −(ε/2)·χ(ρ)·log(−log ρ²), cut off between r0 and 2r0 < 1, with ρ as above.
    PoincareLog { center: C64, eps: f64, r0: f64 },
}

impl SphereTerm {
    fn validate(&self) -> Result<(), WeightError> {
        let bad = |m: &str| Err(WeightError::Invalid(m.to_string()));
        match *self {
            SphereTerm::FsReference { scale } if !(scale > 0.0) => bad("FS scale must be positive"),
            SphereTerm::CutoffLogPole { eps, r0, .. } if !(eps > 0.0 && r0 > 0.0) => {
                bad("log pole needs eps > 0 and r0 > 0")
            }
            SphereTerm::SoftLogPole { eps, radius, .. } if !(eps > 0.0 && radius > 0.0) => {
                bad("soft pole needs eps > 0 and R > 0")
            }
            SphereTerm::Cone { beta, amp, .. } if !(beta > 0.0 && beta < 1.0 && amp.is_finite()) => {
                bad("cone exponent must lie in (0,1)")
            }
            SphereTerm::PoincareLog { eps, r0, .. } if !(eps > 0.0 && r0 > 0.0 && 2.0 * r0 < 1.0) => {
                bad("Poincare term needs eps > 0 and 0 < 2 r0 < 1")
            }
            _ => Ok(()),
        }
    }

    pub fn center(&self) -> Option<C64> {
        match *self {
            SphereTerm::FsReference { .. } => None,
            SphereTerm::CutoffLogPole { center, .. }
            | SphereTerm::SoftLogPole { center, .. }
            | SphereTerm::Cone { center, .. }
            | SphereTerm::PoincareLog { center, .. } => Some(center),
        }
    }

    /// Value in the affine chart. −∞ at log-pole centres.
    pub fn value(&self, z: C64) -> f64 {
        self.value_local(z, z - self.center().unwrap_or(z))
    }

    /// Value with the offset u = z − centre supplied by the caller, which
    /// keeps full relative precision of u near the centre.
    pub fn value_local(&self, z: C64, u: C64) -> f64 {
        match *self {
            SphereTerm::FsReference { scale } => scale * 0.5 * z.norm_sqr().ln_1p(),
            SphereTerm::CutoffLogPole { center, eps, r0 } => {
                let r = recentred_modulus(center, z, u);
                if r >= 2.0 * r0 {
                    return 0.0;
                }
                eps * cutoff(r, r0).0 * r.ln()
            }
            SphereTerm::SoftLogPole { eps, radius, .. } => {
                let s = u.norm_sqr();
                if s == 0.0 {
                    return f64::NEG_INFINITY;
                }
                // log(s/(s+R²)) = −log1p(R²/s)
                -eps * 0.5 * (radius * radius / s).ln_1p()
            }
            SphereTerm::Cone { center, beta, amp } => {
                let d2 = u.norm_sqr() / ((1.0 + z.norm_sqr()) * (1.0 + center.norm_sqr()));
                amp * d2.powf(beta)
            }
            SphereTerm::PoincareLog { center, eps, r0 } => {
                let r = recentred_modulus(center, z, u);
                if r >= 2.0 * r0 {
                    return 0.0;
                }
                if r == 0.0 {
                    return f64::NEG_INFINITY;
                }
                -0.5 * eps * cutoff(r, r0).0 * (-2.0 * r.ln()).ln()
            }
        }
    }

    /// Value in the reciprocal chart w = 1/z.
    pub fn value_reciprocal(&self, w: C64) -> f64 {
        match *self {
            SphereTerm::FsReference { scale } => scale * 0.5 * w.norm_sqr().ln_1p(),
            _ if w.norm() == 0.0 => self.value_at_infinity(),
            _ => self.value(w.inv()),
        }
    }

    fn value_at_infinity(&self) -> f64 {
        match *self {
            SphereTerm::Cone { center, beta, amp } => amp * (1.0 + center.norm_sqr()).powf(-beta),
            _ => 0.0,
        }
    }

    /// Euclidean Laplacian of the absolutely continuous part, affine chart.
    pub fn laplacian(&self, z: C64) -> f64 {
        self.laplacian_local(z, z - self.center().unwrap_or(z))
    }

    pub fn laplacian_local(&self, z: C64, u: C64) -> f64 {
        match *self {
            SphereTerm::FsReference { scale } => {
                let d = 1.0 + z.norm_sqr();
                2.0 * scale / (d * d)
            }
            SphereTerm::CutoffLogPole { center, eps, r0 } => {
                let r = recentred_modulus(center, z, u);
                if r <= r0 || r >= 2.0 * r0 {
                    return 0.0;
                }
                let (_, c1, c2) = cutoff(r, r0);
                let l = r.ln();
                recentre_jacobian(center, z) * eps * (c2 * l + c1 * (2.0 + l) / r)
            }
            SphereTerm::SoftLogPole { eps, radius, .. } => {
                let s = u.norm_sqr();
                let d = s + radius * radius;
                -2.0 * eps * radius * radius / (d * d)
            }
            SphereTerm::Cone { center, beta, amp } => {
                let au = u.norm();
                if au == 0.0 {
                    return f64::INFINITY;
                }
                let s = z.norm_sqr();
                let g = au.powf(2.0 * beta);
                let h = (1.0 + s).powf(-beta);
                let lap_g = 4.0 * beta * beta * au.powf(2.0 * beta - 2.0);
                let lap_h = 4.0 * beta * (1.0 + s).powf(-beta - 2.0) * (beta * s - 1.0);
                let grad = -4.0 * beta * beta * au.powf(2.0 * beta - 2.0) * (1.0 + s).powf(-beta - 1.0) * (u.conj() * z).re;
                amp * (1.0 + center.norm_sqr()).powf(-beta) * (h * lap_g + g * lap_h + 2.0 * grad)
            }
            SphereTerm::PoincareLog { center, eps, r0 } => {
                let r = recentred_modulus(center, z, u);
                if r >= 2.0 * r0 {
                    return 0.0;
                }
                if r == 0.0 {
                    return f64::INFINITY;
                }
                let jac = recentre_jacobian(center, z);
                let l = -2.0 * r.ln();
                let (c, c1, c2) = cutoff(r, r0);
                let f = l.ln();
                let df = -2.0 / (r * l);
                let lap_f = -4.0 / (r * r * l * l);
                -0.5 * jac * eps * (c2 * f + c1 * f / r + 2.0 * c1 * df + c * lap_f)
            }
        }
    }

    /// Dirac mass of dd^c at the centre.
    pub fn atom(&self) -> Option<(C64, f64)> {
        match *self {
            SphereTerm::CutoffLogPole { center, eps, .. } | SphereTerm::SoftLogPole { center, eps, .. } => {
                Some((center, eps))
            }
            _ => None,
        }
    }

    /// Inner cutoff radius of terms with a cutoff annulus.
    pub fn cutoff_radius(&self) -> Option<f64> {
        match *self {
            SphereTerm::CutoffLogPole { r0, .. } | SphereTerm::PoincareLog { r0, .. } => Some(r0),
            _ => None,
        }
    }
}

/// |w| for w = (z−a)/(1+āz), from the accurate offset u = z − a.
fn recentred_modulus(a: C64, z: C64, u: C64) -> f64 {
    u.norm() / (1.0 + a.conj() * z).norm()
}

/// |dw/dz|² for w = (z−a)/(1+āz); the Laplacian picks up this factor.
fn recentre_jacobian(a: C64, z: C64) -> f64 {
    let d = (1.0 + a.conj() * z).norm_sqr();
    let j = (1.0 + a.norm_sqr()) / d;
    j * j
}

/// A term coupling both factors of P¹×P¹, centred at (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JointTerm {
    /// ε·χ(|z|)·½log(|z₁|²+|z₂|²), cutoff between r0 and 2r0.
    CutoffJointPole { eps: f64, r0: f64 },
    /// ε·½log((t₁+t₂+t₁t₂)/((1+t₁)(1+t₂))), tₖ = |zₖ|²; bounded away from
    /// the origin and equal to 0 on the divisors at ∞.
    SoftJointPole { eps: f64 },
}

impl JointTerm {
    pub fn eps(&self) -> f64 {
        match *self {
            JointTerm::CutoffJointPole { eps, .. } | JointTerm::SoftJointPole { eps } => eps,
        }
    }

    /// Value at tₖ = |zₖ|²; `None` stands for a coordinate at ∞.
    pub fn value(&self, t1: Option<f64>, t2: Option<f64>) -> f64 {
        match *self {
            JointTerm::CutoffJointPole { eps, r0 } => match (t1, t2) {
                (Some(t1), Some(t2)) => {
                    let s = t1 + t2;
                    let r = s.sqrt();
                    if r >= 2.0 * r0 {
                        0.0
                    } else {
                        eps * cutoff(r, r0).0 * 0.5 * s.ln()
                    }
                }
                _ => 0.0,
            },
            JointTerm::SoftJointPole { eps } => match (t1, t2) {
                (Some(t1), Some(t2)) => {
                    // 1 − 1/((1+t₁)(1+t₂)) = d/((1+t₁)(1+t₂)), without cancellation.
                    let d = t1 + t2 + t1 * t2;
                    if d <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        eps * 0.5 * (d.ln() - t1.ln_1p() - t2.ln_1p())
                    }
                }
                _ => 0.0,
            },
        }
    }

    /// Partial derivatives (U₁, U₂, U₁₁, U₁₂, U₂₂) in (t₁, t₂).
    pub fn t_derivatives(&self, t1: f64, t2: f64) -> [f64; 5] {
        match *self {
            JointTerm::SoftJointPole { eps } => {
                let d = t1 + t2 + t1 * t2;
                let h = 0.5 * eps;
                let (a1, a2) = (1.0 + t1, 1.0 + t2);
                [
                    h * (a2 / d - 1.0 / a1),
                    h * (a1 / d - 1.0 / a2),
                    h * (-(a2 * a2) / (d * d) + 1.0 / (a1 * a1)),
                    h * (-1.0 / (d * d)),
                    h * (-(a1 * a1) / (d * d) + 1.0 / (a2 * a2)),
                ]
            }
            JointTerm::CutoffJointPole { eps, r0 } => {
                let s = t1 + t2;
                let r = s.sqrt();
                if r >= 2.0 * r0 {
                    return [0.0; 5];
                }
                let (c, c1, c2) = cutoff(r, r0);
                // g(r) = c·log r, f(s) = ε g(√s)
                let g1 = c1 * r.ln() + c / r;
                let g2 = c2 * r.ln() + 2.0 * c1 / r - c / (r * r);
                let f1 = eps * g1 / (2.0 * r);
                let f2 = eps * (g2 / (4.0 * s) - g1 / (4.0 * s * r));
                [f1, f1, f2, f2, f2]
            }
        }
    }
}

/// Hölder-with-singularities parameters: |φ(z)−φ(w)| ≤ c·d(z,w)^ν / min(d(z,Σ),d(w,Σ))^ϱ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderParams {
    pub nu: f64,
    pub rho: f64,
    pub c: f64,
}

impl HolderParams {
    pub fn new(nu: f64, rho: f64, c: f64) -> Result<Self, WeightError> {
        if !(nu > 0.0 && nu <= 1.0 && rho >= 0.0 && rho.is_finite() && c > 0.0 && c.is_finite()) {
            return Err(WeightError::Invalid(format!("Holder parameters nu={nu} rho={rho} c={c}")));
        }
        Ok(Self { nu, rho, c })
    }
}

/// A component of a singular set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SingularComponent {
    Point(Point),
    /// {a} × P¹.
    Vertical(ChartPoint),
    /// P¹ × {b}.
    Horizontal(ChartPoint),
}

/// Distance to the nearest singular component; +∞ for an empty set.
pub fn dist_to_sing(pt: &Point, sing: &[SingularComponent]) -> f64 {
    sing.iter()
        .map(|c| match (c, pt) {
            (SingularComponent::Point(q), _) => distance(pt, q),
            (SingularComponent::Vertical(a), Point::Product(z1, _)) => chordal(*z1, *a),
            (SingularComponent::Horizontal(b), Point::Product(_, z2)) => chordal(*z2, *b),
            _ => f64::INFINITY,
        })
        .fold(f64::INFINITY, f64::min)
}

/// Log pole seen by the base-locus rule on one factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPole {
    pub center: C64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub space: ModelSpace,
    /// Terms per factor (one list on the sphere, two on the product).
    pub factors: Vec<Vec<SphereTerm>>,
    pub joint: Vec<JointTerm>,
    pub singular_set: Vec<SingularComponent>,
    pub holder: HolderParams,
    pub label: String,
}

impl Weight {
    pub fn sphere(terms: Vec<SphereTerm>) -> Result<Self, WeightError> {
        Self::build(ModelSpace::Sphere, vec![terms], Vec::new())
    }

    pub fn product(f1: Vec<SphereTerm>, f2: Vec<SphereTerm>, joint: Vec<JointTerm>) -> Result<Self, WeightError> {
        Self::build(ModelSpace::SphereProduct, vec![f1, f2], joint)
    }

    pub fn fubini_study(space: ModelSpace) -> Self {
        let fs = vec![SphereTerm::FsReference { scale: 1.0 }];
        match space {
            ModelSpace::Sphere => Self::sphere(fs).unwrap(),
            ModelSpace::SphereProduct => Self::product(fs.clone(), fs, Vec::new()).unwrap(),
        }
        .with_label("fs")
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn with_holder(mut self, holder: HolderParams) -> Self {
        self.holder = holder;
        self
    }

    fn build(space: ModelSpace, factors: Vec<Vec<SphereTerm>>, joint: Vec<JointTerm>) -> Result<Self, WeightError> {
        if space == ModelSpace::Sphere && !joint.is_empty() {
            return Err(WeightError::Invalid("joint terms need the product space".into()));
        }
        for j in &joint {
            let ok = match *j {
                JointTerm::CutoffJointPole { eps, r0 } => eps > 0.0 && r0 > 0.0,
                JointTerm::SoftJointPole { eps } => eps > 0.0 && eps < 1.0,
            };
            if !ok {
                return Err(WeightError::Invalid(format!("joint term {j:?}")));
            }
        }
        if joint.len() > 1 {
            return Err(WeightError::Unsupported("at most one joint pole".into()));
        }
        let mut sing = Vec::new();
        let mut nu: f64 = 1.0;
        for (k, terms) in factors.iter().enumerate() {
            let mut deg = 0.0;
            let mut poles = 0;
            for t in terms {
                t.validate()?;
                match *t {
                    SphereTerm::FsReference { scale } => deg += scale,
                    SphereTerm::CutoffLogPole { .. } | SphereTerm::SoftLogPole { .. } => poles += 1,
                    SphereTerm::Cone { beta, .. } => nu = nu.min(2.0 * beta),
                    SphereTerm::PoincareLog { .. } => {}
                }
                if let (Some(c), false) = (t.center(), matches!(t, SphereTerm::Cone { .. })) {
                    let comp = match space {
                        ModelSpace::Sphere => SingularComponent::Point(Point::finite(c)),
                        ModelSpace::SphereProduct if k == 0 => SingularComponent::Vertical(ChartPoint::Finite(c)),
                        ModelSpace::SphereProduct => SingularComponent::Horizontal(ChartPoint::Finite(c)),
                    };
                    if !sing.contains(&comp) {
                        sing.push(comp);
                    }
                }
            }
            if (deg - 1.0).abs() > 1e-12 {
                return Err(WeightError::Invalid(format!(
                    "FS reference scales on factor {k} sum to {deg}; the bundle is O(1)"
                )));
            }
            if poles > 1 {
                return Err(WeightError::Unsupported(format!("more than one log pole on factor {k}")));
            }
        }
        if !joint.is_empty() {
            if factors.iter().flatten().any(|t| t.atom().is_some()) {
                return Err(WeightError::Unsupported("joint pole combined with divisorial poles".into()));
            }
            sing.push(SingularComponent::Point(Point::pair(C64::new(0.0, 0.0), C64::new(0.0, 0.0))));
        }
        let rho = if sing.is_empty() { 0.0 } else { 1.0 };
        Ok(Self {
            space,
            factors,
            joint,
            singular_set: sing,
            holder: HolderParams { nu, rho, c: 10.0 },
            label: String::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.space.dim()
    }

    /// Log pole on factor `k`, if any.
    pub fn log_pole(&self, k: usize) -> Option<LogPole> {
        self.factors[k].iter().find_map(|t| t.atom()).map(|(center, eps)| LogPole { center, eps })
    }

    /// Strength of the joint pole at (0,0), if any.
    pub fn joint_pole(&self) -> Option<f64> {
        self.joint.first().map(|j| j.eps())
    }

    /// Centre of the shifted monomial basis on each factor.
    pub fn basis_shift(&self) -> Vec<C64> {
        (0..self.n())
            .map(|k| self.log_pole(k).map_or(C64::new(0.0, 0.0), |p| p.center))
            .collect()
    }

    /// Every term is rotation invariant about the origin on each factor.
    pub fn is_radial(&self) -> bool {
        self.factors.iter().flatten().all(|t| t.center().is_none_or(|c| c.norm() == 0.0))
    }

    pub fn is_separable(&self) -> bool {
        self.joint.is_empty()
    }

    /// φ on one factor, in the requested chart, without joint terms.
    pub fn factor_value(&self, k: usize, x: C64, chart: Chart) -> f64 {
        self.factors[k]
            .iter()
            .map(|t| match chart {
                Chart::Affine => t.value(x),
                Chart::Reciprocal => t.value_reciprocal(x),
            })
            .sum()
    }

    /// φ on one factor in the affine chart at z = c + u, with u known to
    /// full relative precision; terms centred at `c` use u directly.
    pub fn factor_value_local(&self, k: usize, z: C64, c: C64, u: C64) -> f64 {
        self.factors[k]
            .iter()
            .map(|t| if t.center() == Some(c) { t.value_local(z, u) } else { t.value(z) })
            .sum()
    }

    /// φ with each coordinate in the given chart.
    pub fn eval_chart(&self, coords: &[(C64, Chart)]) -> f64 {
        let mut v: f64 = coords.iter().enumerate().map(|(k, &(x, ch))| self.factor_value(k, x, ch)).sum();
        if !self.joint.is_empty() {
            let t: Vec<Option<f64>> = coords
                .iter()
                .map(|&(x, ch)| match ch {
                    Chart::Affine => Some(x.norm_sqr()),
                    Chart::Reciprocal if x.norm() == 0.0 => None,
                    Chart::Reciprocal => Some(1.0 / x.norm_sqr()),
                })
                .collect();
            v += self.joint.iter().map(|j| j.value(t[0], t[1])).sum::<f64>();
        }
        v
    }

    /// φ at a point: affine chart for finite coordinates, reciprocal at ∞.
    pub fn eval(&self, pt: &Point) -> f64 {
        let coords: Vec<(C64, Chart)> = pt
            .coords()
            .iter()
            .map(|c| match c {
                ChartPoint::Finite(z) => (*z, Chart::Affine),
                ChartPoint::Infinity => (C64::new(0.0, 0.0), Chart::Reciprocal),
            })
            .collect();
        assert_eq!(coords.len(), self.n(), "point and weight live on different spaces");
        self.eval_chart(&coords)
    }

    /// Lebesgue density of dd^cφ on factor `k` (absolutely continuous part).
    pub fn factor_ddc_density(&self, k: usize, z: C64) -> f64 {
        self.factors[k].iter().map(|t| t.laplacian(z)).sum::<f64>() / (2.0 * PI)
    }

    /// Atoms of dd^cφ on factor `k`.
    pub fn factor_atoms(&self, k: usize) -> Vec<(C64, f64)> {
        self.factors[k].iter().filter_map(|t| t.atom()).collect()
    }

    /// Singular points to grade quadrature at on factor `k`, with the exponent
    /// of the curvature density there.
    pub fn factor_density_poles(&self, k: usize) -> Vec<Pole> {
        self.factors[k]
            .iter()
            .filter_map(|t| match *t {
                SphereTerm::Cone { center, beta, .. } => Some(Pole::new(ChartPoint::Finite(center), 2.0 * beta - 2.0)),
                SphereTerm::PoincareLog { center, .. } => Some(Pole::log_critical(ChartPoint::Finite(center))),
                SphereTerm::CutoffLogPole { center, .. } | SphereTerm::SoftLogPole { center, .. } => {
                    Some(Pole::new(ChartPoint::Finite(center), 0.0))
                }
                SphereTerm::FsReference { .. } => None,
            })
            .collect()
    }

    /// Radial breakpoints (cutoff annuli) on factor `k`, useful when grading at the centre.
    pub fn factor_breakpoints(&self, k: usize) -> Vec<f64> {
        self.factors[k]
            .iter()
            .filter_map(|t| t.cutoff_radius())
            .flat_map(|r0| [r0, 2.0 * r0])
            .collect()
    }

    /// Sum of the toric t-derivatives (U₁, U₂, U₁₁, U₁₂, U₂₂) of φ. Defined
    /// for FS plus joint terms only.
    pub fn toric_derivatives(&self, t1: f64, t2: f64) -> Result<[f64; 5], WeightError> {
        let mut d = [0.0; 5];
        for (k, terms) in self.factors.iter().enumerate() {
            let t = if k == 0 { t1 } else { t2 };
            for term in terms {
                match *term {
                    SphereTerm::FsReference { scale } => {
                        d[k] += scale / (2.0 * (1.0 + t));
                        d[if k == 0 { 2 } else { 4 }] -= scale / (2.0 * (1.0 + t) * (1.0 + t));
                    }
                    _ => {
                        return Err(WeightError::Unsupported(
                            "toric Monge-Ampere density needs FS plus joint terms only".into(),
                        ))
                    }
                }
            }
        }
        for j in &self.joint {
            let e = j.t_derivatives(t1, t2);
            for i in 0..5 {
                d[i] += e[i];
            }
        }
        Ok(d)
    }

    /// Complex Hessian matrix entries of φ in toric form:
    /// a = U₁+U₁₁t₁, c = U₂+U₂₂t₂, and |b|² = U₁₂² t₁t₂.
    pub fn toric_hessian(&self, t1: f64, t2: f64) -> Result<(f64, f64, f64), WeightError> {
        let [u1, u2, u11, u12, u22] = self.toric_derivatives(t1, t2)?;
        Ok((u1 + u11 * t1, u2 + u22 * t2, u12 * u12 * t1 * t2))
    }

    /// Density of (dd^cφ)² with respect to ω² at tₖ = |zₖ|², toric weights.
    pub fn toric_ma_density(&self, t1: f64, t2: f64) -> Result<f64, WeightError> {
        let (a, c, b2) = self.toric_hessian(t1, t2)?;
        let det = a * c - b2;
        // (dd^cφ)² = (8/π²)det dA₁dA₂ and ω² = 2ρ₁ρ₂ dA₁dA₂.
        let omega2 = 2.0 / (PI * PI * (1.0 + t1).powi(2) * (1.0 + t2).powi(2));
        Ok(8.0 / (PI * PI) * det / omega2)
    }

    /// Parses presets such as `fs`, `fs+logpole(0,0.3,0.2)`, `fs+softpole(0,0.3,1.5)`,
    /// `fs+cone(0,0.5,0.1)`, `fs+poincare(0,0.1)`, `fs+jointpole(0,0,0.5)`,
    /// `fs+softjointpole(0,0,0.15)`. On the product, single-factor terms are
    /// placed on both factors.
    pub fn preset(space: ModelSpace, name: &str) -> Result<Self, WeightError> {
        let parts = split_top_level(name.trim());
        if parts.first().map(|s| s.trim()) != Some("fs") {
            return Err(WeightError::UnknownPreset(name.to_string()));
        }
        let mut terms = vec![SphereTerm::FsReference { scale: 1.0 }];
        let mut joint = Vec::new();
        for part in &parts[1..] {
            let (head, args) = parse_call(part).ok_or_else(|| WeightError::UnknownPreset(name.to_string()))?;
            let num = |i: usize, default: Option<f64>| -> Result<f64, WeightError> {
                match args.get(i) {
                    Some(a) => a
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| WeightError::Invalid(format!("argument `{a}` of {head}"))),
                    None => default.ok_or_else(|| WeightError::Invalid(format!("{head} is missing argument {i}"))),
                }
            };
            let cplx = |i: usize| -> Result<C64, WeightError> {
                let a = args.get(i).ok_or_else(|| WeightError::Invalid(format!("{head} is missing argument {i}")))?;
                parse_complex(a).ok_or_else(|| WeightError::Invalid(format!("complex argument `{a}` of {head}")))
            };
            match head.as_str() {
                "logpole" => terms.push(SphereTerm::CutoffLogPole { center: cplx(0)?, eps: num(1, None)?, r0: num(2, Some(0.2))? }),
                "softpole" => terms.push(SphereTerm::SoftLogPole { center: cplx(0)?, eps: num(1, None)?, radius: num(2, Some(1.5))? }),
                "cone" => terms.push(SphereTerm::Cone { center: cplx(0)?, beta: num(1, None)?, amp: num(2, None)? }),
                "poincare" => terms.push(SphereTerm::PoincareLog { center: cplx(0)?, eps: num(1, None)?, r0: num(2, Some(0.2))? }),
                "jointpole" | "softjointpole" => {
                    if space != ModelSpace::SphereProduct {
                        return Err(WeightError::Invalid(format!("{head} needs the product space")));
                    }
                    if cplx(0)? != C64::new(0.0, 0.0) || cplx(1)? != C64::new(0.0, 0.0) {
                        return Err(WeightError::Unsupported("joint poles are supported at (0,0) only".into()));
                    }
                    joint.push(if head == "jointpole" {
                        JointTerm::CutoffJointPole { eps: num(2, None)?, r0: num(3, Some(0.2))? }
                    } else {
                        JointTerm::SoftJointPole { eps: num(2, None)? }
                    });
                }
                _ => return Err(WeightError::UnknownPreset(name.to_string())),
            }
        }
        let w = match space {
            ModelSpace::Sphere => Self::sphere(terms)?,
            ModelSpace::SphereProduct => Self::product(terms.clone(), terms, joint)?,
        };
        Ok(w.with_label(name.trim()))
    }
}

fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out
}

fn parse_call(s: &str) -> Option<(String, Vec<String>)> {
    let s = s.trim();
    let open = s.find('(')?;
    if !s.ends_with(')') {
        return None;
    }
    let head = s[..open].trim().to_string();
    let args = s[open + 1..s.len() - 1].split(',').map(|a| a.trim().to_string()).collect();
    Some((head, args))
}

/// Parses `x`, `x+yi`, `x-yi` or `yi`.
pub fn parse_complex(s: &str) -> Option<C64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if let Ok(x) = s.parse::<f64>() {
        return Some(C64::new(x, 0.0));
    }
    let body = s.strip_suffix('i')?;
    // Split at the last sign that is not an exponent sign or the leading sign.
    let bytes = body.as_bytes();
    let mut cut = None;
    for i in (1..bytes.len()).rev() {
        if (bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'e' && bytes[i - 1] != b'E' {
            cut = Some(i);
            break;
        }
    }
    match cut {
        Some(i) => {
            let re = body[..i].parse::<f64>().ok()?;
            let im_s = &body[i..];
            let im = if im_s == "+" || im_s == "-" { format!("{im_s}1") } else { im_s.to_string() };
            Some(C64::new(re, im.parse::<f64>().ok()?))
        }
        None => {
            let im = if body.is_empty() || body == "+" || body == "-" { format!("{body}1") } else { body.to_string() };
            Some(C64::new(0.0, im.parse::<f64>().ok()?))
        }
    }
}

/// Curvature measure: atoms plus a density sampled on quadrature nodes.
///
/// `nodes` carry (point, ω-mass of the cell, density w.r.t. ωⁿ). On the
/// product with joint terms the nodes are toric: the angular integrals are
/// folded into the masses and the measure pairs correctly only with
/// functions of (|z₁|, |z₂|).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureMeasure {
    pub atoms: Vec<(Point, f64)>,
    pub nodes: Vec<(Point, f64, f64)>,
    pub total_mass: f64,
    pub toric: bool,
    /// Largest |analytic − finite difference| Laplacian density seen in the cross-check.
    pub fd_discrepancy: f64,
}

impl CurvatureMeasure {
    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn pair(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.atoms.iter().map(|(p, m)| m * f(p)).sum::<f64>() + self.nodes.iter().map(|(p, w, d)| w * d * f(p)).sum::<f64>()
    }
}

/// 5-point finite-difference Laplacian.
pub fn fd_laplacian(f: impl Fn(C64) -> f64, z: C64, h: f64) -> f64 {
    let c = f(z);
    (f(z + h) + f(z - h) + f(z + C64::new(0.0, h)) + f(z - C64::new(0.0, h)) - 4.0 * c) / (h * h)
}

fn sphere_rule_for_factor(w: &Weight, k: usize, grid: &GridSpec, level: usize) -> Result<SphereRule, WeightError> {
    let poles = w.factor_density_poles(k);
    let centre = quadrature::grading_centre(1, &poles)?;
    let mut spec = grid.clone();
    if centre.is_some() {
        spec.breakpoints.extend(w.factor_breakpoints(k));
    }
    Ok(SphereRule::new(&spec, level, centre)?)
}

/// Curvature c₁ of one factor as atoms and a sampled density.
fn factor_curvature(w: &Weight, k: usize, grid: &GridSpec) -> Result<(Vec<(C64, f64)>, Vec<(C64, f64, f64)>, f64), WeightError> {
    let mut disc = 0.0f64;
    for t in &w.factors[k] {
        if let Some(r0) = t.cutoff_radius() {
            if grid.fd_step > r0 / 16.0 {
                return Err(WeightError::GridTooCoarse { r0, step: grid.fd_step });
            }
            // Cross-check the analytic Laplacian across the annulus.
            let c = t.center().unwrap();
            for i in 1..16 {
                let r = r0 * (1.0 + i as f64 / 16.0);
                let z = Recentre::new(c).inverse(ChartPoint::Finite(C64::from_polar(r, 0.3 + i as f64))).finite().unwrap();
                let analytic = t.laplacian(z);
                let fd = fd_laplacian(|x| t.value(x), z, grid.fd_step);
                let scale = 1.0 + analytic.abs();
                let err = (analytic - fd).abs() / scale;
                disc = disc.max(err);
                if err > 1e-3 {
                    return Err(WeightError::CrossCheck { at: z, analytic, fd });
                }
            }
        }
    }
    let rule = sphere_rule_for_factor(w, k, grid, 0)?;
    let nodes: Vec<(C64, f64, f64)> = rule
        .nodes
        .iter()
        .map(|&(z, m)| (z, m, w.factor_ddc_density(k, z) / fs_density(z)))
        .collect();
    Ok((w.factor_atoms(k), nodes, disc))
}

/// Curvature measure c₁ (sphere) or c₁∧c₁ (product) of the weight.
pub fn curvature(w: &Weight, grid: &GridSpec) -> Result<CurvatureMeasure, WeightError> {
    match w.space {
        ModelSpace::Sphere => {
            let (atoms, nodes, disc) = factor_curvature(w, 0, grid)?;
            let atoms: Vec<(Point, f64)> = atoms.into_iter().map(|(c, m)| (Point::finite(c), m)).collect();
            let nodes: Vec<(Point, f64, f64)> = nodes.into_iter().map(|(z, m, d)| (Point::finite(z), m, d)).collect();
            let total = atoms.iter().map(|a| a.1).sum::<f64>() + nodes.iter().map(|n| n.1 * n.2).sum::<f64>();
            Ok(CurvatureMeasure { atoms, nodes, total_mass: total, toric: false, fd_discrepancy: disc })
        }
        ModelSpace::SphereProduct if w.is_separable() => {
            let (a1, n1, d1) = factor_curvature(w, 0, grid)?;
            let (a2, n2, d2) = factor_curvature(w, 1, grid)?;
            // c₁∧c₁ = 2 c₁⁽¹⁾∧c₁⁽²⁾; the density is w.r.t. ω² = 2ω₁∧ω₂.
            let mut atoms = Vec::new();
            for &(p, m) in &a1 {
                for &(q, mq) in &a2 {
                    atoms.push((Point::pair(p, q), 2.0 * m * mq));
                }
            }
            let mut nodes = Vec::with_capacity(n1.len() * n2.len());
            for &(z1, m1, r1) in &n1 {
                for &(z2, m2, r2) in &n2 {
                    nodes.push((Point::pair(z1, z2), 2.0 * m1 * m2, r1 * r2));
                }
                for &(q, mq) in &a2 {
                    // Atom on the second factor: a curve-supported part, lumped per node.
                    atoms.push((Point::pair(z1, q), 2.0 * m1 * r1 * mq));
                }
            }
            for &(p, mp) in &a1 {
                for &(z2, m2, r2) in &n2 {
                    atoms.push((Point::pair(p, z2), 2.0 * mp * m2 * r2));
                }
            }
            let total = atoms.iter().map(|a| a.1).sum::<f64>() + nodes.iter().map(|n| n.1 * n.2).sum::<f64>();
            Ok(CurvatureMeasure { atoms, nodes, total_mass: total, toric: false, fd_discrepancy: d1.max(d2) })
        }
        ModelSpace::SphereProduct => {
            let eps = w.joint_pole().unwrap();
            let mut spec = grid.clone();
            if let Some(JointTerm::CutoffJointPole { r0, .. }) = w.joint.first() {
                spec.breakpoints = vec![r0 * r0, 4.0 * r0 * r0];
            }
            // Density ~ |z|⁻² at the corner.
            let nodes_t = quadrature::toric_nodes(&spec, 0, Some(0.0), &spec.breakpoints);
            let mut nodes = Vec::with_capacity(nodes_t.len());
            for (t, m) in nodes_t {
                let d = w.toric_ma_density(t[0], t[1])?;
                nodes.push((Point::pair(C64::new(t[0].sqrt(), 0.0), C64::new(t[1].sqrt(), 0.0)), m, d));
            }
            let atoms = vec![(Point::pair(C64::new(0.0, 0.0), C64::new(0.0, 0.0)), eps * eps)];
            let total = eps * eps + nodes.iter().map(|n| n.1 * n.2).sum::<f64>();
            Ok(CurvatureMeasure { atoms, nodes, total_mass: total, toric: true, fd_discrepancy: 0.0 })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min_ratio: f64,
    pub worst_point: Option<Point>,
    pub eps0: f64,
    pub pass: bool,
}

/// Checks c₁ ≥ ε₀ω on grid nodes away from the singular set.
pub fn verify_positivity(w: &Weight, eps0: f64, grid: &GridSpec) -> Result<PositivityReport, WeightError> {
    if !(eps0 > 0.0) {
        return Err(WeightError::Invalid("eps0 must be positive".into()));
    }
    let mut min_ratio = f64::INFINITY;
    let mut worst = None;
    let margin = 1e-6;
    let mut visit = |ratio: f64, p: Point| {
        if ratio < min_ratio {
            min_ratio = ratio;
            worst = Some(p);
        }
    };
    if w.is_separable() {
        for k in 0..w.n() {
            let rule = sphere_rule_for_factor(w, k, grid, 0)?;
            for &(z, _) in &rule.nodes {
                let near = w.factors[k].iter().any(|t| {
                    !matches!(t, SphereTerm::FsReference { .. }) && t.center().is_some_and(|c| (z - c).norm() < margin)
                });
                if near {
                    continue;
                }
                let ratio = w.factor_ddc_density(k, z) / fs_density(z);
                visit(ratio, if w.n() == 1 { Point::finite(z) } else { Point::pair(z, C64::new(0.0, 0.0)) });
            }
        }
    } else {
        for (t, _) in quadrature::toric_nodes(grid, 0, Some(0.0), &[]) {
            if t[0] + t[1] < margin * margin {
                continue;
            }
            let (a, c, b2) = w.toric_hessian(t[0], t[1])?;
            // Generalized eigenvalues against the FS Hessian diag(fₖ).
            let f1 = 1.0 / (2.0 * (1.0 + t[0]).powi(2));
            let f2 = 1.0 / (2.0 * (1.0 + t[1]).powi(2));
            let (a, c, b2) = (a / f1, c / f2, b2 / (f1 * f2));
            let tr = a + c;
            let det = a * c - b2;
            let lam = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
            visit(lam, Point::pair(C64::new(t[0].sqrt(), 0.0), C64::new(t[1].sqrt(), 0.0)));
        }
    }
    Ok(PositivityReport { min_ratio, worst_point: worst, eps0, pass: min_ratio >= eps0 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderReport {
    pub empirical_constant: f64,
    pub pairs_used: usize,
    pub pass: bool,
}

fn random_sphere_point<R: Rng + ?Sized>(rng: &mut R, sing: &[C64]) -> ChartPoint {
    if !sing.is_empty() && rng.random::<f64>() < 0.5 {
        let c = sing[rng.random_range(0..sing.len())];
        let r = 10f64.powf(rng.random_range(-6.0..0.0));
        return ChartPoint::Finite(c + C64::from_polar(r, rng.random_range(0.0..2.0 * PI)));
    }
    let z: f64 = rng.random_range(-1.0..1.0);
    let th: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    ChartPoint::from_stereo([r * th.cos(), r * th.sin(), z])
}

fn near<R: Rng + ?Sized>(rng: &mut R, p: ChartPoint) -> ChartPoint {
    match p {
        ChartPoint::Infinity => ChartPoint::Infinity,
        ChartPoint::Finite(z) => {
            let r = 10f64.powf(rng.random_range(-7.0..0.0)) * (1.0 + z.norm_sqr());
            ChartPoint::Finite(z + C64::from_polar(r, rng.random_range(0.0..2.0 * PI)))
        }
    }
}

/// Chart of the two-set cover {|z| < 2}, {|z| > 1/2} containing both points.
fn common_chart(a: ChartPoint, b: ChartPoint) -> Option<Chart> {
    let m = |p: ChartPoint| p.finite().map_or(f64::INFINITY, |z| z.norm());
    let (ma, mb) = (m(a), m(b));
    if ma < 2.0 && mb < 2.0 {
        Some(Chart::Affine)
    } else if ma > 0.5 && mb > 0.5 {
        Some(Chart::Reciprocal)
    } else {
        None
    }
}

fn coord_in(p: ChartPoint, ch: Chart) -> C64 {
    match ch {
        Chart::Affine => p.finite().expect("finite in affine chart"),
        Chart::Reciprocal => p.reciprocal().finite().expect("finite in reciprocal chart"),
    }
}

/// Empirical Hölder constant sup |φ(z)−φ(w)|·min(d(z,Σ),d(w,Σ))^ϱ / d(z,w)^ν
/// over sampled pairs lying in a common chart.
pub fn verify_hoelder<R: Rng + ?Sized>(w: &Weight, params: HolderParams, n_pairs: usize, rng: &mut R) -> HolderReport {
    let sing_centres: Vec<C64> = w
        .singular_set
        .iter()
        .flat_map(|c| match c {
            SingularComponent::Point(p) => p.coords().iter().filter_map(|q| q.finite()).collect::<Vec<_>>(),
            SingularComponent::Vertical(a) | SingularComponent::Horizontal(a) => a.finite().into_iter().collect(),
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for _ in 0..n_pairs {
        let a: Vec<ChartPoint> = (0..w.n()).map(|_| random_sphere_point(rng, &sing_centres)).collect();
        let b: Vec<ChartPoint> = a.iter().map(|p| near(rng, *p)).collect();
        let (pa, pb) = match w.n() {
            1 => (Point::Sphere(a[0]), Point::Sphere(b[0])),
            _ => (Point::Product(a[0], a[1]), Point::Product(b[0], b[1])),
        };
        let charts: Option<Vec<Chart>> = a.iter().zip(&b).map(|(x, y)| common_chart(*x, *y)).collect();
        let Some(charts) = charts else { continue };
        let dz = dist_to_sing(&pa, &w.singular_set);
        let dw = dist_to_sing(&pb, &w.singular_set);
        let dmin = dz.min(dw);
        let d = distance(&pa, &pb);
        if dmin == 0.0 || d == 0.0 {
            continue;
        }
        let ca: Vec<(C64, Chart)> = a.iter().zip(&charts).map(|(p, c)| (coord_in(*p, *c), *c)).collect();
        let cb: Vec<(C64, Chart)> = b.iter().zip(&charts).map(|(p, c)| (coord_in(*p, *c), *c)).collect();
        let diff = (w.eval_chart(&ca) - w.eval_chart(&cb)).abs();
        if !diff.is_finite() {
            continue;
        }
        let dfac = if dmin.is_finite() { dmin.powf(params.rho) } else { 1.0 };
        worst = worst.max(diff * dfac / d.powf(params.nu));
        used += 1;
    }
    HolderReport { empirical_constant: worst, pairs_used: used, pass: worst <= params.c }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pole(eps: f64) -> Weight {
        Weight::sphere(vec![
            SphereTerm::FsReference { scale: 1.0 },
            SphereTerm::CutoffLogPole { center: C64::new(0.0, 0.0), eps, r0: 0.2 },
        ])
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let fs = Weight::fubini_study(ModelSpace::Sphere);
        assert_eq!(fs.eval(&Point::finite(C64::new(0.0, 0.0))), 0.0);
        assert!((fs.eval(&Point::finite(C64::new(1.0, 0.0))) - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(pole(0.3).eval(&Point::finite(C64::new(0.0, 0.0))), f64::NEG_INFINITY);
        assert_eq!(fs.eval(&Point::Sphere(ChartPoint::Infinity)), 0.0);
    }

    #[test]
    fn transition_rule_keeps_pointwise_norms() {
        // |1|² e^{−2φ} at z must equal |w|² e^{−2φ_∞} at w = 1/z for the section 1 of O(1).
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0.2,0.3,1.5)+cone(0,0.5,0.1)").unwrap();
        let z = C64::new(1.7, -0.4);
        let n_aff = (-2.0 * w.factor_value(0, z, Chart::Affine)).exp();
        let n_rec = z.inv().norm_sqr() * (-2.0 * w.factor_value(0, z.inv(), Chart::Reciprocal)).exp();
        assert!((n_aff - n_rec).abs() < 1e-14);
    }

    #[test]
    fn cutoff_is_smooth_step() {
        let r0 = 0.2;
        assert_eq!(cutoff(0.1, r0).0, 1.0);
        assert_eq!(cutoff(0.5, r0).0, 0.0);
        let (c, d, _) = cutoff(0.3, r0);
        assert!((c - 0.5).abs() < 1e-15 && d < 0.0);
    }

    #[test]
    fn analytic_laplacians_match_finite_differences() {
        let terms = [
            SphereTerm::FsReference { scale: 1.0 },
            SphereTerm::CutoffLogPole { center: C64::new(0.1, 0.2), eps: 0.3, r0: 0.2 },
            SphereTerm::SoftLogPole { center: C64::new(0.1, 0.2), eps: 0.3, radius: 1.5 },
            SphereTerm::Cone { center: C64::new(-0.3, 0.5), beta: 0.5, amp: 0.2 },
            SphereTerm::PoincareLog { center: C64::new(0.0, 0.0), eps: 0.1, r0: 0.2 },
        ];
        let pts = [C64::new(0.35, 0.3), C64::new(0.05, 0.1), C64::new(-1.2, 2.0), C64::new(0.25, -0.1)];
        for t in terms {
            for z in pts {
                let a = t.laplacian(z);
                let fd = fd_laplacian(|x| t.value(x), z, 1e-4);
                assert!((a - fd).abs() < 1e-4 * (1.0 + a.abs()), "{t:?} at {z}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn fs_density_closed_form() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        for z in [C64::new(0.0, 0.0), C64::new(1.0, 2.0)] {
            let d = w.factor_ddc_density(0, z);
            let expect = 1.0 / (PI * (1.0 + z.norm_sqr()).powi(2));
            assert!((d - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn curvature_mass_is_the_degree() {
        let grid = GridSpec::default();
        let fs = curvature(&Weight::fubini_study(ModelSpace::Sphere), &grid).unwrap();
        assert!(fs.atoms.is_empty());
        assert!((fs.total_mass - 1.0).abs() < 1e-6);
        let lp = curvature(&pole(0.3), &grid).unwrap();
        assert_eq!(lp.atoms.len(), 1);
        assert_eq!(lp.atoms[0].1, 0.3);
        assert!((lp.total_mass - 1.0).abs() < 1e-4, "{}", lp.total_mass);
        for name in ["fs+softpole(0,0.3,1.5)", "fs+cone(0.3,0.5,0.1)", "fs+poincare(0,0.1)"] {
            let c = curvature(&Weight::preset(ModelSpace::Sphere, name).unwrap(), &grid).unwrap();
            assert!((c.total_mass - 1.0).abs() < 1e-4, "{name}: {}", c.total_mass);
        }
    }

    #[test]
    fn product_curvature_mass_is_two() {
        let grid = GridSpec { n_theta: 32, ..GridSpec::default() };
        for name in ["fs+softjointpole(0,0,0.15)", "fs+jointpole(0,0,0.3)"] {
            let w = Weight::preset(ModelSpace::SphereProduct, name).unwrap();
            let c = curvature(&w, &grid).unwrap();
            assert!((c.total_mass - 2.0).abs() < 1e-4, "{name}: {}", c.total_mass);
        }
    }

    #[test]
    fn coarse_fd_step_is_reported() {
        let grid = GridSpec { fd_step: 0.05, ..GridSpec::default() };
        assert!(matches!(curvature(&pole(0.3), &grid), Err(WeightError::GridTooCoarse { .. })));
    }

    #[test]
    fn positivity_examples() {
        let grid = GridSpec::default();
        let fs = verify_positivity(&Weight::fubini_study(ModelSpace::Sphere), 0.99, &grid).unwrap();
        assert!(fs.pass && (fs.min_ratio - 1.0).abs() < 1e-12);
        let cone = Weight::preset(ModelSpace::Sphere, "fs+cone(0,0.5,0.05)").unwrap();
        assert!(verify_positivity(&cone, 0.5, &grid).unwrap().pass);
        let soft = Weight::preset(ModelSpace::Sphere, "fs+softpole(0,0.3,1.5)").unwrap();
        let r = verify_positivity(&soft, 0.25, &grid).unwrap();
        assert!(r.pass && (r.min_ratio - 0.325).abs() < 1e-2, "{}", r.min_ratio);
    }

    #[test]
    fn holder_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let fs = Weight::fubini_study(ModelSpace::Sphere);
        assert!(verify_hoelder(&fs, HolderParams::new(1.0, 0.0, 10.0).unwrap(), 2000, &mut rng).pass);
        let lp = pole(0.3);
        assert!(verify_hoelder(&lp, HolderParams::new(1.0, 1.0, 5.0).unwrap(), 2000, &mut rng).pass);
        assert!(!verify_hoelder(&lp, HolderParams::new(1.0, 0.05, 5.0).unwrap(), 2000, &mut rng).pass);
    }

    #[test]
    fn dist_to_sing_examples() {
        let o = C64::new(0.0, 0.0);
        let s = vec![SingularComponent::Point(Point::finite(o))];
        assert_eq!(dist_to_sing(&Point::finite(o), &s), 0.0);
        assert_eq!(dist_to_sing(&Point::Sphere(ChartPoint::Infinity), &s), 1.0);
        assert_eq!(dist_to_sing(&Point::finite(o), &[]), f64::INFINITY);
        let v = vec![SingularComponent::Vertical(ChartPoint::new(1.0, 0.0))];
        let p = Point::pair(C64::new(0.0, 0.0), C64::new(5.0, 1.0));
        assert!((dist_to_sing(&p, &v) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn presets_parse() {
        assert!(Weight::preset(ModelSpace::Sphere, "fs+logpole(0.5-0.25i,0.3,0.1)").is_ok());
        assert_eq!(parse_complex("0.5-0.25i"), Some(C64::new(0.5, -0.25)));
        assert_eq!(parse_complex("-2i"), Some(C64::new(0.0, -2.0)));
        assert!(matches!(Weight::preset(ModelSpace::Sphere, "bogus"), Err(WeightError::UnknownPreset(_))));
        assert!(matches!(
            Weight::preset(ModelSpace::SphereProduct, "fs+jointpole(1,0,0.5)"),
            Err(WeightError::Unsupported(_))
        ));
    }
}
