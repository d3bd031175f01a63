//! Model spaces, chart points and the chordal geometry of P¹.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelSpace {
    /// P¹, complex dimension 1.
    Sphere,
    /// P¹×P¹, complex dimension 2.
    SphereProduct,
}

impl ModelSpace {
    pub fn dim(self) -> usize {
        match self {
            ModelSpace::Sphere => 1,
            ModelSpace::SphereProduct => 2,
        }
    }

    /// ∫ωⁿ with ω the normalized Fubini–Study form on each factor.
    pub fn volume(self) -> f64 {
        match self {
            ModelSpace::Sphere => 1.0,
            ModelSpace::SphereProduct => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelSpace::Sphere => "sphere",
            ModelSpace::SphereProduct => "product",
        }
    }
}

/// Affine coordinate on one P¹ factor, with ∞ kept symbolic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChartPoint {
    Finite(C64),
    Infinity,
}

impl ChartPoint {
    pub fn new(re: f64, im: f64) -> Self {
        ChartPoint::Finite(C64::new(re, im))
    }

    pub fn finite(self) -> Option<C64> {
        match self {
            ChartPoint::Finite(z) => Some(z),
            ChartPoint::Infinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ChartPoint::Infinity)
    }

    /// The point in the reciprocal chart w = 1/z.
    pub fn reciprocal(self) -> Self {
        match self {
            ChartPoint::Infinity => ChartPoint::Finite(C64::new(0.0, 0.0)),
            ChartPoint::Finite(z) if z == C64::new(0.0, 0.0) => ChartPoint::Infinity,
            ChartPoint::Finite(z) => ChartPoint::Finite(z.inv()),
        }
    }

    /// Unit vector (X, Y, Z) on the round sphere; ∞ is the north pole.
    pub fn stereo(self) -> [f64; 3] {
        match self {
            ChartPoint::Infinity => [0.0, 0.0, 1.0],
            ChartPoint::Finite(z) => {
                let t = z.norm_sqr();
                let d = 1.0 + t;
                [2.0 * z.re / d, 2.0 * z.im / d, (t - 1.0) / d]
            }
        }
    }

    pub fn from_stereo(v: [f64; 3]) -> Self {
        let [x, y, z] = v;
        if z >= 1.0 - 1e-300 && x == 0.0 && y == 0.0 {
            return ChartPoint::Infinity;
        }
        if z > 0.0 {
            // Better conditioned near the north pole.
            let w = C64::new(x, -y) / (1.0 + z);
            if w.norm() == 0.0 {
                ChartPoint::Infinity
            } else {
                ChartPoint::Finite(w.inv())
            }
        } else {
            ChartPoint::Finite(C64::new(x, y) / (1.0 - z))
        }
    }
}

/// Chordal distance on P¹, normalized so antipodal points are at distance 1.
pub fn chordal(a: ChartPoint, b: ChartPoint) -> f64 {
    match (a, b) {
        (ChartPoint::Infinity, ChartPoint::Infinity) => 0.0,
        (ChartPoint::Finite(z), ChartPoint::Infinity) | (ChartPoint::Infinity, ChartPoint::Finite(z)) => {
            1.0 / (1.0 + z.norm_sqr()).sqrt()
        }
        (ChartPoint::Finite(z), ChartPoint::Finite(w)) => {
            // Compare in the chart where both are bounded to avoid overflow.
            if z.norm() > 1.0 && w.norm() > 1.0 {
                let (zi, wi) = (z.inv(), w.inv());
                (zi - wi).norm() / ((1.0 + zi.norm_sqr()) * (1.0 + wi.norm_sqr())).sqrt()
            } else {
                (z - w).norm() / ((1.0 + z.norm_sqr()) * (1.0 + w.norm_sqr())).sqrt()
            }
        }
    }
}

/// A point of a model space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Point {
    Sphere(ChartPoint),
    Product(ChartPoint, ChartPoint),
}

impl Point {
    pub fn finite(z: C64) -> Self {
        Point::Sphere(ChartPoint::Finite(z))
    }

    pub fn pair(z1: C64, z2: C64) -> Self {
        Point::Product(ChartPoint::Finite(z1), ChartPoint::Finite(z2))
    }

    pub fn space(&self) -> ModelSpace {
        match self {
            Point::Sphere(_) => ModelSpace::Sphere,
            Point::Product(..) => ModelSpace::SphereProduct,
        }
    }

    pub fn coords(&self) -> Vec<ChartPoint> {
        match *self {
            Point::Sphere(a) => vec![a],
            Point::Product(a, b) => vec![a, b],
        }
    }
}

/// Product metric distance: √(d₁² + d₂²) on P¹×P¹, chordal on P¹.
pub fn distance(a: &Point, b: &Point) -> f64 {
    match (a, b) {
        (Point::Sphere(x), Point::Sphere(y)) => chordal(*x, *y),
        (Point::Product(x1, x2), Point::Product(y1, y2)) => chordal(*x1, *y1).hypot(chordal(*x2, *y2)),
        _ => panic!("distance between points of different model spaces"),
    }
}

/// Möbius isometry of the round sphere moving `c` to 0.
#[derive(Debug, Clone, Copy)]
pub struct Recentre {
    pub c: C64,
}

impl Recentre {
    pub fn new(c: C64) -> Self {
        Self { c }
    }

    /// w = (z − c)/(1 + c̄z).
    pub fn forward(&self, z: ChartPoint) -> ChartPoint {
        let c = self.c;
        match z {
            ChartPoint::Infinity => {
                if c.norm() == 0.0 {
                    ChartPoint::Infinity
                } else {
                    ChartPoint::Finite(c.conj().inv())
                }
            }
            ChartPoint::Finite(z) => {
                let den = 1.0 + c.conj() * z;
                if den.norm() == 0.0 {
                    ChartPoint::Infinity
                } else {
                    ChartPoint::Finite((z - c) / den)
                }
            }
        }
    }

    /// z = (w + c)/(1 − c̄w).
    pub fn inverse(&self, w: ChartPoint) -> ChartPoint {
        let c = self.c;
        match w {
            ChartPoint::Infinity => {
                if c.norm() == 0.0 {
                    ChartPoint::Infinity
                } else {
                    ChartPoint::Finite(-c.conj().inv())
                }
            }
            ChartPoint::Finite(w) => {
                let den = 1.0 - c.conj() * w;
                if den.norm() == 0.0 {
                    ChartPoint::Infinity
                } else {
                    ChartPoint::Finite((w + c) / den)
                }
            }
        }
    }
}

/// `n` nearly equidistributed points on P¹ (spherical Fibonacci lattice).
pub fn fibonacci_points(n: usize) -> Vec<ChartPoint> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let zc = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - zc * zc).sqrt();
            let th = golden * k as f64;
            ChartPoint::from_stereo([r * th.cos(), r * th.sin(), zc])
        })
        .collect()
}

/// Fubini–Study area density (1/π)(1+|z|²)⁻² with respect to Lebesgue measure.
pub fn fs_density(z: C64) -> f64 {
    let d = 1.0 + z.norm_sqr();
    1.0 / (PI * d * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chordal_examples() {
        let o = ChartPoint::new(0.0, 0.0);
        assert_eq!(chordal(o, ChartPoint::Infinity), 1.0);
        assert!((chordal(o, ChartPoint::new(1.0, 0.0)) - 0.5f64.sqrt()).abs() < 1e-15);
        let big = ChartPoint::new(1e200, 0.0);
        assert!(chordal(big, ChartPoint::Infinity) < 1e-199);
        assert!(chordal(big, ChartPoint::new(2e200, 0.0)) < 1e-200);
    }

    #[test]
    fn chordal_matches_half_euclidean_distance_of_stereo_images() {
        for (a, b) in [((0.3, -1.2), (2.0, 0.5)), ((0.0, 0.0), (-4.0, 4.0))] {
            let (p, q) = (ChartPoint::new(a.0, a.1), ChartPoint::new(b.0, b.1));
            let (u, v) = (p.stereo(), q.stereo());
            let e = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
            assert!((chordal(p, q) - e / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn recentre_is_an_isometry() {
        let m = Recentre::new(C64::new(0.4, -0.7));
        let pts = [ChartPoint::new(1.0, 2.0), ChartPoint::new(-0.3, 0.1), ChartPoint::Infinity];
        for a in pts {
            assert!(chordal(m.inverse(m.forward(a)), a) < 1e-14);
            for b in pts {
                assert!((chordal(m.forward(a), m.forward(b)) - chordal(a, b)).abs() < 1e-14);
            }
        }
        assert_eq!(m.forward(ChartPoint::Finite(m.c)), ChartPoint::new(0.0, 0.0));
    }

    #[test]
    fn stereo_round_trip() {
        for p in fibonacci_points(50) {
            assert!(chordal(ChartPoint::from_stereo(p.stereo()), p) < 1e-13);
        }
    }
}
