//! Univariate complex polynomials: chart-aware evaluation, companion-matrix
//! roots with balancing, Newton polishing and chordal clustering.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::space::{chordal, ChartPoint};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("the zero polynomial has no isolated roots")]
    ZeroPolynomial,
    #[error("eigenvalue iteration did not converge for a matrix of size {0}")]
    NoConvergence(usize),
    #[error("non-finite coefficient")]
    NotFinite,
}

/// Horner evaluation of Σ cⱼ zʲ (ascending coefficients).
pub fn horner(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// Value and derivative.
pub fn horner_d(c: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// |s(z)| / Σ|cⱼ||z|ʲ, evaluated in the chart where the coordinate is at
/// most 1 in modulus. A degree `d` section is read as w^d s(1/w) at ∞.
pub fn relative_residual(c: &[C64], z: ChartPoint) -> f64 {
    let (coeffs, x): (Vec<C64>, C64) = match z {
        ChartPoint::Infinity => (c.iter().rev().copied().collect(), C64::new(0.0, 0.0)),
        ChartPoint::Finite(z) if z.norm() > 1.0 => (c.iter().rev().copied().collect(), z.inv()),
        ChartPoint::Finite(z) => (c.to_vec(), z),
    };
    let v = horner(&coeffs, x).norm();
    let ax = x.norm();
    let b = coeffs.iter().rev().fold(0.0, |acc, a| acc * ax + a.norm());
    if b == 0.0 {
        return 0.0;
    }
    v / b
}

/// Reduces a square matrix toward equal row and column norms by diagonal
/// similarity with powers of two.
pub fn balance(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].l1_norm();
                    r += m[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let mut rr = r;
            while cc < rr / radix {
                f *= radix;
                cc *= radix * radix;
            }
            while cc > rr * radix {
                f /= radix;
                rr *= radix * radix;
            }
            let _ = rr;
            if (c * f + r / f) < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Eigenvalues of a complex square matrix (balanced, then Schur).
pub fn eigenvalues(mut m: DMatrix<C64>) -> Result<Vec<C64>, PolyError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(PolyError::NotFinite);
    }
    balance(&mut m);
    if let Some(s) = m.clone().try_schur(f64::EPSILON, 100 * n.max(10)) {
        let (_, t) = s.unpack();
        return Ok((0..n).map(|i| t[(i, i)]).collect());
    }
    // Shifted QR can stall when all eigenvalues share a modulus (cyclic
    // companion matrices); a complex diagonal shift breaks the tie.
    let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for k in 1..=3 {
        let sigma = C64::from_polar(0.37 * k as f64 * scale, 0.9 * k as f64);
        let mut ms = m.clone();
        for i in 0..n {
            ms[(i, i)] += sigma;
        }
        if let Some(s) = ms.try_schur(f64::EPSILON, 100 * n.max(10)) {
            let (_, t) = s.unpack();
            return Ok((0..n).map(|i| t[(i, i)] - sigma).collect());
        }
    }
    Err(PolyError::NoConvergence(n))
}

/// Roots of a polynomial with nonzero leading and constant coefficients,
/// from the balanced companion matrix, each polished by Newton steps.
pub fn companion_roots(c: &[C64]) -> Result<Vec<C64>, PolyError> {
    let d = c.len().saturating_sub(1);
    if c.iter().all(|a| a.norm() == 0.0) {
        return Err(PolyError::ZeroPolynomial);
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    // z = γx with γ = |c₀/c_d|^{1/d} equalizes the end coefficients, which
    // radix-2 balancing alone does not achieve for long cycles.
    let gamma = if c[0].norm() > 0.0 {
        ((c[0].norm().ln() - c[d].norm().ln()) / d as f64).exp()
    } else {
        1.0
    };
    let lg = gamma.ln();
    let scaled: Vec<C64> = c.iter().enumerate().map(|(j, a)| a * (lg * j as f64 - lg * d as f64).exp()).collect();
    let lead = scaled[d];
    let mut m = DMatrix::<C64>::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..d {
        m[(i, d - 1)] = -scaled[i] / lead;
    }
    let ev = eigenvalues(m)?;
    Ok(ev.into_iter().map(|x| polish(c, x * gamma, 6)).collect())
}

/// Newton steps in the chart where the root has modulus at most 1; a step
/// is kept only if it does not increase the relative residual.
pub fn polish(c: &[C64], z: C64, steps: usize) -> C64 {
    let rev: Vec<C64> = c.iter().rev().copied().collect();
    let inverted = z.norm() > 1.0;
    let (coeffs, mut x) = if inverted { (&rev[..], z.inv()) } else { (c, z) };
    let res = |x: C64| relative_residual(coeffs, ChartPoint::Finite(x));
    let mut r = res(x);
    for _ in 0..steps {
        let (p, dp) = horner_d(coeffs, x);
        if dp.norm() == 0.0 || r == 0.0 {
            break;
        }
        let y = x - p / dp;
        let ry = res(y);
        if !(ry <= r) {
            break;
        }
        x = y;
        r = ry;
    }
    if inverted {
        x.inv()
    } else {
        x
    }
}

/// Groups points lying within `tol` (chordal) of a cluster's first member.
/// Returns the centroid of each cluster, taken in the chart where the first
/// member has modulus ≤ 1, with the multiplicity. The centroid of a split
/// multiple root is accurate; that of two merged simple roots is not, which
/// the residual then exposes.
pub fn cluster(points: &[ChartPoint], tol: f64) -> Vec<(ChartPoint, usize)> {
    let mut groups: Vec<Vec<ChartPoint>> = Vec::new();
    for &p in points {
        match groups.iter_mut().find(|g| chordal(p, g[0]) <= tol) {
            Some(g) => g.push(p),
            None => groups.push(vec![p]),
        }
    }
    groups.into_iter().map(|g| (centroid(&g), g.len())).collect()
}

fn centroid(g: &[ChartPoint]) -> ChartPoint {
    if g.len() == 1 || g.iter().all(|p| *p == g[0]) {
        return g[0];
    }
    let flip = g[0].finite().is_none_or(|z| z.norm() > 1.0);
    let coord = |p: &ChartPoint| if flip { p.reciprocal() } else { *p }.finite().unwrap_or_default();
    let mean = g.iter().map(coord).sum::<C64>() / g.len() as f64;
    let c = ChartPoint::Finite(mean);
    if flip { c.reciprocal() } else { c }
}

/// Coefficients of Π (z − rⱼ), ascending.
pub fn from_roots(roots: &[C64]) -> Vec<C64> {
    let mut c = vec![C64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (i, &a) in c.iter().enumerate() {
            next[i + 1] += a;
            next[i] -= a * r;
        }
        c = next;
    }
    c
}
