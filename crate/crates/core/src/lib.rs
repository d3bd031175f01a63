//! Weighted L² spaces of holomorphic sections over the Riemann sphere and
//! P¹×P¹: Bergman kernels, Fubini–Study potentials, random sections and their
//! zeros, for singular Hermitian metrics built from closed-form weight terms.

pub mod analysis;
pub mod bergman;
pub mod linalg;
pub mod poly;
pub mod quadrature;
pub mod sampling;
pub mod scalar;
pub mod space;
pub mod weights;
pub mod zeros;

pub use num_complex::Complex;

/// Complex double, the coordinate type of every chart.
pub type C64 = Complex<f64>;

pub use scalar::Real;
pub use space::{ChartPoint, ModelSpace, Point};

/// Double precision Gauss–Legendre rule.
pub type GaussLegendreRule = quadrature::GaussLegendre<f64>;
/// Single precision Gauss–Legendre rule, used for precision-loss diagnostics.
pub type GaussLegendreRule32 = quadrature::GaussLegendre<f32>;
/// Double precision Hermitian matrix.
pub type HermitianMatrix = linalg::HermitianMatrix<f64>;
/// Double precision pre-scaled Cholesky factor.
pub type Cholesky = linalg::PrescaledCholesky<f64>;
