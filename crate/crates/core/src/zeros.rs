//! Zero sets of sections: univariate roots on P¹, common zeros of pairs on
//! P¹×P¹, zero measures and general-position checks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, TestFunction};
use crate::bergman::Section;
use crate::quadrature::GridSpec;
use crate::poly::{self, PolyError};
use crate::space::{chordal, distance, ChartPoint, ModelSpace, Point, Recentre};
use crate::weights::{SingularComponent, Weight};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZerosError {
    #[error("the zero section has no zero divisor")]
    ZeroSection,
    #[error("sections are not in general position: {0}")]
    GeneralPosition(String),
    #[error("sections live on different spaces or degrees")]
    Mismatch,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroTolerances {
    /// Relative size below which leading coefficients count as roots at ∞.
    pub trim: f64,
    /// Chordal radius within which roots are merged.
    pub cluster: f64,
    /// Chordal radius for pairing the two z₂-specializations.
    pub matching: f64,
    /// Residual above which a zero is flagged.
    pub residual: f64,
}

impl Default for ZeroTolerances {
    fn default() -> Self {
        Self { trim: 1e-12, cluster: 1e-8, matching: 1e-6, residual: 1e-6 }
    }
}

/// Zeros with multiplicities, normalized by 1/p^m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroMeasure {
    pub space: ModelSpace,
    pub points: Vec<(Point, usize)>,
    pub scale: f64,
    /// Largest relative evaluation residual at a reported zero.
    pub max_residual: f64,
    /// Candidates that could not be paired across the two specializations.
    pub unmatched: usize,
    pub flagged: bool,
}

impl ZeroMeasure {
    pub fn total_multiplicity(&self) -> usize {
        self.points.iter().map(|p| p.1).sum()
    }

    /// scale · Σ multiplicity · χ(point).
    pub fn pairing(&self, chi: impl Fn(&Point) -> f64) -> f64 {
        self.scale * self.points.iter().map(|(p, m)| *m as f64 * chi(p)).sum::<f64>()
    }

    /// CSV with columns re1,im1[,re2,im2],multiplicity; ∞ is written as `inf`.
    pub fn to_csv(&self) -> String {
        let cell = |c: ChartPoint| match c {
            ChartPoint::Finite(z) => format!("{:.17e},{:.17e}", z.re, z.im),
            ChartPoint::Infinity => "inf,inf".to_string(),
        };
        let mut out = String::from(match self.space {
            ModelSpace::Sphere => "re,im,multiplicity\n",
            ModelSpace::SphereProduct => "re1,im1,re2,im2,multiplicity\n",
        });
        for (p, m) in &self.points {
            let cols: Vec<String> = p.coords().into_iter().map(cell).collect();
            out.push_str(&format!("{},{}\n", cols.join(","), m));
        }
        out
    }
}

/// Roots of Σ cⱼ(z−a)ʲ read as a section of O(d), d = c.len()−1, listed with
/// repetition. Leading coefficients below `trim`·max|cⱼ| become roots at ∞;
/// exactly vanishing low-order coefficients become roots at a.
pub fn univariate_roots(c: &[C64], a: C64, trim: f64) -> Result<Vec<ChartPoint>, ZerosError> {
    let norm = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if norm == 0.0 || !norm.is_finite() {
        return Err(ZerosError::ZeroSection);
    }
    let d = c.len() - 1;
    let top = (0..=d).rev().find(|&j| c[j].norm() > trim * norm).unwrap();
    let low = (0..=d).find(|&j| c[j].norm() != 0.0).unwrap();
    let mut out = vec![ChartPoint::Infinity; d - top];
    out.extend(std::iter::repeat_n(ChartPoint::Finite(a), low));
    if top > low {
        for u in poly::companion_roots(&c[low..=top])? {
            out.push(ChartPoint::Finite(a + u));
        }
    }
    Ok(out)
}

/// Relative residual of Σ cⱼ(z−a)ʲ at a point, in the chart where the
/// coordinate has modulus ≤ 1; at ∞ it is |c_d|/Σ|cⱼ|.
pub fn section_residual(c: &[C64], a: C64, z: ChartPoint) -> f64 {
    match z {
        ChartPoint::Infinity => c[c.len() - 1].norm() / c.iter().map(|x| x.norm()).sum::<f64>(),
        ChartPoint::Finite(z) => poly::relative_residual(c, ChartPoint::Finite(z - a)),
    }
}

/// Zero measure of a section on P¹.
pub fn roots_sphere(s: &Section, tol: &ZeroTolerances) -> Result<ZeroMeasure, ZerosError> {
    if s.space != ModelSpace::Sphere {
        return Err(ZerosError::Mismatch);
    }
    let a = s.shift[0];
    let roots = univariate_roots(&s.coeffs, a, tol.trim)?;
    let clusters = poly::cluster(&roots, tol.cluster);
    let max_residual = clusters.iter().map(|(z, _)| section_residual(&s.coeffs, a, *z)).fold(0.0, f64::max);
    Ok(ZeroMeasure {
        space: ModelSpace::Sphere,
        points: clusters.into_iter().map(|(z, m)| (Point::Sphere(z), m)).collect(),
        scale: 1.0 / s.p as f64,
        max_residual,
        unmatched: 0,
        flagged: max_residual > tol.residual,
    })
}

/// Bivariate polynomial Σ c[i][j] u₁ⁱ u₂ʲ of bidegree (rows−1, cols−1).
#[derive(Debug, Clone, PartialEq)]
pub struct BiPoly {
    pub c: Vec<Vec<C64>>,
}

impl BiPoly {
    pub fn deg1(&self) -> usize {
        self.c.len() - 1
    }

    pub fn deg2(&self) -> usize {
        self.c[0].len() - 1
    }

    fn norm(&self) -> f64 {
        self.c.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    fn transpose(&self) -> BiPoly {
        let (r, k) = (self.c.len(), self.c[0].len());
        BiPoly { c: (0..k).map(|j| (0..r).map(|i| self.c[i][j]).collect()).collect() }
    }

    /// Coefficients in u₂ of the restriction to u₁ = x (homogenized at ∞).
    pub fn restrict1(&self, x: ChartPoint) -> Vec<C64> {
        let e = self.deg1();
        let (xi, rev) = chart_of(x);
        let m = chart_monomials(xi, rev, e);
        (0..=self.deg2()).map(|j| (0..=e).map(|i| self.c[i][j] * m[i]).sum()).collect()
    }

    /// Value and gradient in the charts chosen per coordinate.
    fn eval_chart(&self, (x, rx): (C64, bool), (y, ry): (C64, bool)) -> (C64, C64, C64, f64) {
        let (e1, e2) = (self.deg1(), self.deg2());
        let (m1, d1) = chart_monomials_d(x, rx, e1);
        let (m2, d2) = chart_monomials_d(y, ry, e2);
        let (mut v, mut gx, mut gy, mut b) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), 0.0);
        for i in 0..=e1 {
            for j in 0..=e2 {
                let c = self.c[i][j];
                v += c * m1[i] * m2[j];
                gx += c * d1[i] * m2[j];
                gy += c * m1[i] * d2[j];
                b += c.norm() * m1[i].norm() * m2[j].norm();
            }
        }
        (v, gx, gy, b)
    }

    /// |R|/Σ|cᵢⱼ||mᵢ||mⱼ| at a point, each coordinate in its bounded chart.
    pub fn relative_residual(&self, x: ChartPoint, y: ChartPoint) -> f64 {
        let (v, _, _, b) = self.eval_chart(chart_of(x), chart_of(y));
        if b == 0.0 {
            0.0
        } else {
            v.norm() / b
        }
    }
}

/// Chart coordinate with |ξ| ≤ 1 and whether it is reciprocal.
fn chart_of(x: ChartPoint) -> (C64, bool) {
    match x {
        ChartPoint::Finite(z) if z.norm() <= 1.0 => (z, false),
        ChartPoint::Finite(z) => (z.inv(), true),
        ChartPoint::Infinity => (C64::new(0.0, 0.0), true),
    }
}

fn from_chart(xi: C64, rev: bool) -> ChartPoint {
    if !rev {
        ChartPoint::Finite(xi)
    } else if xi.norm() == 0.0 {
        ChartPoint::Infinity
    } else {
        ChartPoint::Finite(xi.inv())
    }
}

/// mᵢ = ξⁱ (affine) or ξ^{e−i} (reciprocal).
fn chart_monomials(xi: C64, rev: bool, e: usize) -> Vec<C64> {
    chart_monomials_d(xi, rev, e).0
}

fn chart_monomials_d(xi: C64, rev: bool, e: usize) -> (Vec<C64>, Vec<C64>) {
    let mut pw = vec![C64::new(1.0, 0.0); e + 1];
    for k in 1..=e {
        pw[k] = pw[k - 1] * xi;
    }
    let dpw: Vec<C64> = (0..=e).map(|k| if k == 0 { C64::new(0.0, 0.0) } else { k as f64 * pw[k - 1] }).collect();
    if rev {
        ((0..=e).map(|i| pw[e - i]).collect(), (0..=e).map(|i| dpw[e - i]).collect())
    } else {
        (pw, dpw)
    }
}

/// Divisor of one section split into axis lines and a residual curve.
#[derive(Debug, Clone)]
struct Split {
    /// (line position, multiplicity); `vertical` lines are {u₁ = x}.
    vertical: Vec<(ChartPoint, usize)>,
    horizontal: Vec<(ChartPoint, usize)>,
    residual: BiPoly,
}

fn axis_split(c: &[Vec<C64>], trim: f64) -> Result<Split, ZerosError> {
    let norm = c.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
    if norm == 0.0 || !norm.is_finite() {
        return Err(ZerosError::ZeroSection);
    }
    let p1 = c.len() - 1;
    let p2 = c[0].len() - 1;
    let row_norm = |i: usize| c[i].iter().map(|x| x.norm()).fold(0.0, f64::max);
    let col_norm = |j: usize| c.iter().map(|r| r[j].norm()).fold(0.0, f64::max);
    let a1 = (0..=p1).find(|&i| row_norm(i) != 0.0).unwrap();
    let d1 = (0..=p1).rev().find(|&i| row_norm(i) > trim * norm).unwrap();
    let a2 = (0..=p2).find(|&j| col_norm(j) != 0.0).unwrap();
    let d2 = (0..=p2).rev().find(|&j| col_norm(j) > trim * norm).unwrap();
    let mut vertical = Vec::new();
    let mut horizontal = Vec::new();
    if a1 > 0 {
        vertical.push((ChartPoint::new(0.0, 0.0), a1));
    }
    if d1 < p1 {
        vertical.push((ChartPoint::Infinity, p1 - d1));
    }
    if a2 > 0 {
        horizontal.push((ChartPoint::new(0.0, 0.0), a2));
    }
    if d2 < p2 {
        horizontal.push((ChartPoint::Infinity, p2 - d2));
    }
    let residual = BiPoly { c: (a1..=d1).map(|i| c[i][a2..=d2].to_vec()).collect() };
    Ok(Split { vertical, horizontal, residual })
}

/// Points of {u₁ = x} ∩ {R = 0}, u₂ ∈ P¹, listed with repetition.
fn line_meets_curve(x: ChartPoint, r: &BiPoly, trim: f64) -> Result<Vec<ChartPoint>, ZerosError> {
    if r.deg2() == 0 {
        return Ok(Vec::new());
    }
    let q = r.restrict1(x);
    let scale = r.norm();
    if q.iter().all(|v| v.norm() <= 1e-13 * scale) {
        return Err(ZerosError::GeneralPosition("a residual curve contains an axis line".into()));
    }
    univariate_roots(&q, C64::new(0.0, 0.0), trim)
}

/// Sylvester matrix in u₂ of P (deg m) and Q (deg n), size m+n.
fn sylvester(pc: &[C64], qc: &[C64]) -> DMatrix<C64> {
    let (m, n) = (pc.len() - 1, qc.len() - 1);
    let size = m + n;
    let mut s = DMatrix::<C64>::zeros(size, size);
    for r in 0..n {
        for j in 0..=m {
            s[(r, r + m - j)] = pc[j];
        }
    }
    for r in 0..m {
        for j in 0..=n {
            s[(n + r, r + n - j)] = qc[j];
        }
    }
    s
}

fn hadamard_ratio(s: &DMatrix<C64>) -> f64 {
    let det = s.clone().lu().determinant().norm();
    let rows: f64 = (0..s.nrows()).map(|i| s.row(i).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()).product();
    if rows == 0.0 {
        0.0
    } else {
        det / rows
    }
}

/// Coefficients of (ζ+c)ᵏ(1−c̄ζ)^{e−k}, ascending in ζ.
fn mobius_poly(k: usize, e: usize, c: C64) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0)];
    let mul = |p: &[C64], a0: C64, a1: C64| {
        let mut q = vec![C64::new(0.0, 0.0); p.len() + 1];
        for (i, &v) in p.iter().enumerate() {
            q[i] += v * a0;
            q[i + 1] += v * a1;
        }
        q
    };
    for _ in 0..k {
        out = mul(&out, c, C64::new(1.0, 0.0));
    }
    for _ in k..e {
        out = mul(&out, C64::new(1.0, 0.0), -c.conj());
    }
    out
}

/// u₁-coordinates of R₁ ∩ R₂ when both have u₁-degree e ≥ 1, from the
/// block companion linearization of the Sylvester matrix polynomial after a
/// rotation of the u₁-sphere that makes the leading block well conditioned.
fn block_companion_u1(r1: &BiPoly, r2: &BiPoly) -> Option<Vec<ChartPoint>> {
    let e = r1.deg1();
    let blocks: Vec<DMatrix<C64>> = (0..=e).map(|k| sylvester(&r1.c[k], &r2.c[k])).collect();
    let size = blocks[0].nrows();
    let candidates = [
        C64::new(0.0, 0.0),
        C64::from_polar(0.6, 0.4),
        C64::from_polar(0.6, 2.5),
        C64::from_polar(1.0, 4.4),
        C64::from_polar(1.7, 1.3),
        C64::from_polar(0.3, 5.6),
    ];
    let mut best: Option<(f64, C64, Vec<DMatrix<C64>>)> = None;
    for &c in &candidates {
        let coefs: Vec<Vec<C64>> = (0..=e).map(|k| mobius_poly(k, e, c)).collect();
        let t: Vec<DMatrix<C64>> = (0..=e)
            .map(|l| {
                let mut m = DMatrix::<C64>::zeros(size, size);
                for k in 0..=e {
                    m += &blocks[k] * coefs[k][l];
                }
                m
            })
            .collect();
        let sv = t[e].clone().singular_values();
        let ratio = sv.min() / sv.max();
        if best.as_ref().is_none_or(|b| ratio > b.0) {
            best = Some((ratio, c, t));
        }
        if ratio > 1e-3 {
            break;
        }
    }
    let (ratio, c, t) = best?;
    if !(ratio > 1e-10) {
        return None;
    }
    let lu = t[e].clone().lu();
    let n = e * size;
    let mut comp = DMatrix::<C64>::zeros(n, n);
    for l in 0..e {
        let m = lu.solve(&t[l])?;
        // First block row holds −T_e⁻¹T_{e−1−b} in block column b.
        let b = e - 1 - l;
        for i in 0..size {
            for j in 0..size {
                comp[(i, b * size + j)] = -m[(i, j)];
            }
        }
    }
    for b in 1..e {
        for i in 0..size {
            comp[(b * size + i, (b - 1) * size + i)] = C64::new(1.0, 0.0);
        }
    }
    let ev = poly::eigenvalues(comp).ok()?;
    let rot = Recentre::new(c);
    Some(ev.into_iter().map(|z| rot.inverse(ChartPoint::Finite(z))).collect())
}

/// u₁-coordinates of R₁ ∩ R₂ from the resultant sampled at roots of unity.
fn dft_resultant_u1(r1: &BiPoly, r2: &BiPoly, trim: f64) -> Result<Vec<ChartPoint>, ZerosError> {
    let deg = r1.deg1() * r2.deg2() + r1.deg2() * r2.deg1();
    let nodes = deg + 1;
    let mut vals = Vec::with_capacity(nodes);
    let mut best_ratio: f64 = 0.0;
    for k in 0..nodes {
        let x = C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / nodes as f64);
        let s = sylvester(&r1.restrict1(ChartPoint::Finite(x)), &r2.restrict1(ChartPoint::Finite(x)));
        best_ratio = best_ratio.max(hadamard_ratio(&s));
        vals.push(s.lu().determinant());
    }
    if best_ratio < 1e-12 {
        return Err(ZerosError::GeneralPosition("resultant vanishes identically".into()));
    }
    let coeffs: Vec<C64> = (0..nodes)
        .map(|j| {
            vals.iter()
                .enumerate()
                .map(|(k, v)| v * C64::from_polar(1.0, -std::f64::consts::TAU * (j * k % nodes) as f64 / nodes as f64))
                .sum::<C64>()
                / nodes as f64
        })
        .collect();
    univariate_roots(&coeffs, C64::new(0.0, 0.0), trim)
}

/// 2-D Newton on (R₁, R₂) in bounded charts; keeps steps that reduce the
/// larger relative residual.
fn polish_pair(r1: &BiPoly, r2: &BiPoly, x: ChartPoint, y: ChartPoint) -> (ChartPoint, ChartPoint) {
    let res = |x: ChartPoint, y: ChartPoint| r1.relative_residual(x, y).max(r2.relative_residual(x, y));
    let (mut x, mut y) = (x, y);
    let mut r = res(x, y);
    for _ in 0..4 {
        if r == 0.0 {
            break;
        }
        let cx = chart_of(x);
        let cy = chart_of(y);
        let (f, fx, fy, _) = r1.eval_chart(cx, cy);
        let (g, gx, gy, _) = r2.eval_chart(cx, cy);
        let det = fx * gy - fy * gx;
        if det.norm() == 0.0 {
            break;
        }
        let dx = (f * gy - g * fy) / det;
        let dy = (fx * g - gx * f) / det;
        let nx = from_chart(cx.0 - dx, cx.1);
        let ny = from_chart(cy.0 - dy, cy.1);
        let rn = res(nx, ny);
        if !(rn < r) {
            break;
        }
        x = nx;
        y = ny;
        r = rn;
    }
    (x, y)
}

struct Intersections {
    points: Vec<(ChartPoint, ChartPoint)>,
    unmatched: usize,
}

/// R₁ ∩ R₂ for residual curves of positive bidegree.
fn curves_meet(r1: &BiPoly, r2: &BiPoly, tol: &ZeroTolerances) -> Result<Intersections, ZerosError> {
    let (e1, e2, f1, f2) = (r1.deg1(), r1.deg2(), r2.deg1(), r2.deg2());
    let mut out = Intersections { points: Vec::new(), unmatched: 0 };
    // Curves made of axis-parallel lines reduce to line intersections.
    if e2 == 0 || f2 == 0 || e1 == 0 || f1 == 0 {
        let (lines, other, vertical, swapped) = if e2 == 0 {
            (r1, r2, true, false)
        } else if f2 == 0 {
            (r2, r1, true, false)
        } else if e1 == 0 {
            (r1, r2, false, true)
        } else {
            (r2, r1, false, true)
        };
        let (lines, other) = if vertical { (lines.clone(), other.clone()) } else { (lines.transpose(), other.transpose()) };
        if lines.deg1() == 0 {
            return Ok(out);
        }
        let col: Vec<C64> = lines.c.iter().map(|r| r[0]).collect();
        for x in univariate_roots(&col, C64::new(0.0, 0.0), tol.trim)? {
            for y in line_meets_curve(x, &other, tol.trim)? {
                out.points.push(if swapped { (y, x) } else { (x, y) });
            }
        }
        return Ok(out);
    }
    let xs = match (e1 == f1).then(|| block_companion_u1(r1, r2)).flatten() {
        Some(xs) => xs,
        None => dft_resultant_u1(r1, r2, tol.trim)?,
    };
    for (x, mult) in poly::cluster(&xs, tol.cluster) {
        let ys1 = univariate_roots(&r1.restrict1(x), C64::new(0.0, 0.0), tol.trim)?;
        let ys2 = univariate_roots(&r2.restrict1(x), C64::new(0.0, 0.0), tol.trim)?;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, a) in ys1.iter().enumerate() {
            let (j, d) = nearest(a, &ys2);
            let (i2, _) = nearest(&ys2[j], &ys1);
            if i2 == i && d <= tol.matching {
                pairs.push((d, i, j));
            }
        }
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let take = pairs.len().min(mult);
        for &(_, i, _) in &pairs[..take] {
            out.points.push(polish_pair(r1, r2, x, ys1[i]));
        }
        if take < mult {
            // Fall back to Newton from the closest candidates.
            let mut extra: Vec<(f64, usize)> = ys1
                .iter()
                .enumerate()
                .filter(|(i, _)| !pairs[..take].iter().any(|p| p.1 == *i))
                .map(|(i, a)| (nearest(a, &ys2).1, i))
                .collect();
            extra.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, i) in extra.iter().take(mult - take) {
                let (px, py) = polish_pair(r1, r2, x, ys1[i]);
                let r = r1.relative_residual(px, py).max(r2.relative_residual(px, py));
                if r <= tol.residual {
                    out.points.push((px, py));
                } else {
                    out.unmatched += 1;
                }
            }
        }
    }
    Ok(out)
}

fn nearest(a: &ChartPoint, list: &[ChartPoint]) -> (usize, f64) {
    list.iter()
        .enumerate()
        .map(|(i, b)| (i, chordal(*a, *b)))
        .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
}

fn shift_point(p: ChartPoint, a: C64) -> ChartPoint {
    match p {
        ChartPoint::Finite(u) => ChartPoint::Finite(u + a),
        ChartPoint::Infinity => ChartPoint::Infinity,
    }
}

/// Common zeros of two sections of O(p,p) on P¹×P¹.
pub fn common_zeros_product(s1: &Section, s2: &Section, tol: &ZeroTolerances) -> Result<ZeroMeasure, ZerosError> {
    if s1.space != ModelSpace::SphereProduct || s2.space != ModelSpace::SphereProduct || s1.p != s2.p || s1.shift != s2.shift {
        return Err(ZerosError::Mismatch);
    }
    let p = s1.p;
    let g1 = s1.grid();
    let g2 = s2.grid();
    let a = split_pair(&g1, &g2, tol)?;
    let (sh1, sh2) = (s1.shift[0], s1.shift[1]);
    let full1 = BiPoly { c: g1 };
    let full2 = BiPoly { c: g2 };
    let pts: Vec<Point> = a
        .points
        .iter()
        .map(|&(x, y)| Point::Product(shift_point(x, sh1), shift_point(y, sh2)))
        .collect();
    // Cluster in the product distance.
    let mut clusters: Vec<(Point, usize, (ChartPoint, ChartPoint))> = Vec::new();
    for (pt, raw) in pts.iter().zip(&a.points) {
        match clusters.iter_mut().find(|c| distance(&c.0, pt) <= tol.cluster) {
            Some(c) => c.1 += 1,
            None => clusters.push((*pt, 1, *raw)),
        }
    }
    let max_residual = clusters
        .iter()
        .map(|c| full1.relative_residual(c.2 .0, c.2 .1).max(full2.relative_residual(c.2 .0, c.2 .1)))
        .fold(0.0, f64::max);
    let total: usize = clusters.iter().map(|c| c.1).sum();
    let expected = 2 * p * p;
    let off = (total as f64 - expected as f64).abs() > 0.01 * expected as f64;
    Ok(ZeroMeasure {
        space: ModelSpace::SphereProduct,
        points: clusters.into_iter().map(|c| (c.0, c.1)).collect(),
        scale: 1.0 / (p * p) as f64,
        max_residual,
        unmatched: a.unmatched,
        flagged: off || a.unmatched > 0 || max_residual > tol.residual,
    })
}

/// All intersection points in shifted coordinates, with repetition.
fn split_pair(g1: &[Vec<C64>], g2: &[Vec<C64>], tol: &ZeroTolerances) -> Result<Intersections, ZerosError> {
    let a = axis_split(g1, tol.trim)?;
    let b = axis_split(g2, tol.trim)?;
    for (x, _) in &a.vertical {
        if b.vertical.iter().any(|(y, _)| y == x) {
            return Err(ZerosError::GeneralPosition("common vertical component".into()));
        }
    }
    for (x, _) in &a.horizontal {
        if b.horizontal.iter().any(|(y, _)| y == x) {
            return Err(ZerosError::GeneralPosition("common horizontal component".into()));
        }
    }
    let mut out = Intersections { points: Vec::new(), unmatched: 0 };
    let rep = |out: &mut Intersections, pt: (ChartPoint, ChartPoint), m: usize| {
        out.points.extend(std::iter::repeat_n(pt, m));
    };
    for (s, t) in [(&a, &b), (&b, &a)] {
        for &(x, m) in &s.vertical {
            for &(y, k) in &t.horizontal {
                rep(&mut out, (x, y), m * k);
            }
            for y in line_meets_curve(x, &t.residual, tol.trim)? {
                rep(&mut out, (x, y), m);
            }
        }
        let tr = t.residual.transpose();
        for &(y, m) in &s.horizontal {
            for x in line_meets_curve(y, &tr, tol.trim)? {
                rep(&mut out, (x, y), m);
            }
        }
    }
    let c = curves_meet(&a.residual, &b.residual, tol)?;
    out.points.extend(c.points);
    out.unmatched += c.unmatched;
    Ok(out)
}

/// Whether the Sylvester resultant in z₂ of a pair is numerically nonzero,
/// by sampling |det|/Π‖rows‖ at 2p²+1 roots of unity in z₁.
pub fn resultant_nonzero(s1: &Section, s2: &Section) -> (bool, f64) {
    let p = s1.p;
    let r1 = BiPoly { c: s1.grid() };
    let r2 = BiPoly { c: s2.grid() };
    let nodes = 2 * p * p + 1;
    let best = (0..nodes)
        .map(|k| {
            let x = ChartPoint::Finite(C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / nodes as f64));
            hadamard_ratio(&sylvester(&r1.restrict1(x), &r2.restrict1(x)))
        })
        .fold(0.0, f64::max);
    (best > 1e-12, best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralPositionReport {
    pub pass: bool,
    pub offending: Option<String>,
    /// (i, j, dimension of Σᵢ ∩ Σⱼ), −1 for empty.
    pub intersections: Vec<(usize, usize, i32)>,
}

fn meet_dim(a: &SingularComponent, b: &SingularComponent) -> i32 {
    use SingularComponent::*;
    match (a, b) {
        (Point(p), Point(q)) => {
            if distance(p, q) == 0.0 {
                0
            } else {
                -1
            }
        }
        (Point(p), Vertical(x)) | (Vertical(x), Point(p)) => match p {
            crate::Point::Product(a, _) if chordal(*a, *x) == 0.0 => 0,
            _ => -1,
        },
        (Point(p), Horizontal(y)) | (Horizontal(y), Point(p)) => match p {
            crate::Point::Product(_, b) if chordal(*b, *y) == 0.0 => 0,
            _ => -1,
        },
        (Vertical(x), Vertical(y)) | (Horizontal(x), Horizontal(y)) => {
            if chordal(*x, *y) == 0.0 {
                1
            } else {
                -1
            }
        }
        (Vertical(_), Horizontal(_)) | (Horizontal(_), Vertical(_)) => 0,
    }
}

/// Checks that Σ₁,…,Σ_k (unions of points and axis lines) have pairwise
/// intersections of codimension ≥ 2 and single sets of codimension ≥ 1.
pub fn general_position_check(space: ModelSpace, sets: &[Vec<SingularComponent>]) -> GeneralPositionReport {
    let n = space.dim() as i32;
    let mut report = GeneralPositionReport { pass: true, offending: None, intersections: Vec::new() };
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            let dim = sets[i]
                .iter()
                .flat_map(|a| sets[j].iter().map(move |b| meet_dim(a, b)))
                .max()
                .unwrap_or(-1);
            report.intersections.push((i, j, dim));
            // Codimension n − dim must be at least 2 (empty always passes).
            if dim >= 0 && n - dim < 2 && report.pass {
                report.pass = false;
                report.offending = Some(format!("sets {i} and {j} meet in dimension {dim}"));
            }
        }
    }
    report
}

/// |⟨[s=0], χ⟩ − p⟨c₁, χ⟩ − ∫ log|s|_{hᵖ} dd^cχ| on P¹, for the zeros
/// extracted by [`roots_sphere`].
///
/// The zero logarithms are split off analytically through
/// ⟨dd^c log d(·, ζ), χ⟩ = χ(ζ) − ∫χω, so only the smooth remainder
/// g = log|s|_h − Σ m log d(·, ζₖ) meets the quadrature. Wrong or missing
/// zeros leave log singularities in g and show up in the residual.
pub fn poincare_lelong_residual(w: &Weight, s: &Section, chi: &TestFunction) -> Result<f64, AnalysisError> {
    Ok(PoincareLelong::new(w, std::slice::from_ref(chi), s.p)?.residuals(s)?[0])
}

/// Residual evaluator for a fixed weight, degree and list of test functions.
/// The curvature pairings are computed once; zeros are extracted once per
/// section.
pub struct PoincareLelong<'a> {
    w: &'a Weight,
    p: usize,
    grid: GridSpec,
    chis: Vec<(TestFunction, f64)>,
}

impl<'a> PoincareLelong<'a> {
    pub fn new(w: &'a Weight, chis: &[TestFunction], p: usize) -> Result<Self, AnalysisError> {
        if w.space != ModelSpace::Sphere {
            return Err(AnalysisError::Unsupported("Poincaré–Lelong residual is implemented on P¹".into()));
        }
        // With the right zeros g is smooth at a scale independent of p, so
        // the degree-sized angular grid of the kernel integrals is not needed.
        let grid = GridSpec::default();
        let chis = chis
            .iter()
            .map(|chi| Ok((*chi, analysis::curvature_pairing(w, chi, &grid)?)))
            .collect::<Result<_, AnalysisError>>()?;
        Ok(Self { w, p, grid, chis })
    }

    /// One residual per test function, in construction order.
    pub fn residuals(&self, s: &Section) -> Result<Vec<f64>, AnalysisError> {
        if s.space != ModelSpace::Sphere || s.p != self.p {
            return Err(AnalysisError::Unsupported(format!("expected a degree-{} section on P¹", self.p)));
        }
        let zeros = roots_sphere(s, &ZeroTolerances::default())?;
        self.chis.iter().map(|(chi, c1)| self.residual_with(s, &zeros, chi, *c1)).collect()
    }

    fn residual_with(&self, s: &Section, zeros: &ZeroMeasure, chi: &TestFunction, c1: f64) -> Result<f64, AnalysisError> {
        let pf = s.p as f64;
        // Σ m log d(z, ζ) = ½(log Π|z − ζ|^{2m} − Σ m log(1+|ζ|²) − M log(1+|z|²)),
        // with ζ = ∞ contributing only to M. Products are taken in short runs
        // so they cannot underflow.
        let mut finite = Vec::new();
        let (mut k, mut total) = (0.0, 0.0);
        for (pt, m) in &zeros.points {
            let Point::Sphere(zeta) = pt else { unreachable!() };
            total += *m as f64;
            if let ChartPoint::Finite(zeta) = zeta {
                k += *m as f64 * (1.0 + zeta.norm_sqr()).ln();
                finite.extend(std::iter::repeat_n(*zeta, *m));
            }
        }
        let g = |z: C64| {
            let lp: f64 = finite.chunks(8).map(|c| c.iter().map(|zeta| (z - zeta).norm_sqr()).product::<f64>().ln()).sum();
            let logs = 0.5 * (lp - k - total * (1.0 + z.norm_sqr()).ln());
            s.log_norm(self.w, &Point::Sphere(ChartPoint::Finite(z))) - logs
        };
        let smooth = analysis::pair_laplacian(self.w, chi, g, &self.grid)?;
        Ok((pf * chi.omega_integral() - pf * c1 - smooth).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_section(c: Vec<C64>) -> Section {
        Section { p: c.len() - 1, space: ModelSpace::Sphere, shift: vec![C64::new(0.0, 0.0)], coeffs: c }
    }

    fn product_section(p: usize, f: impl Fn(usize, usize) -> C64) -> Section {
        let coeffs = (0..=p).flat_map(|i| (0..=p).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Section { p, space: ModelSpace::SphereProduct, shift: vec![C64::new(0.0, 0.0); 2], coeffs }
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn quadratic_roots() {
        let s = sphere_section(vec![c(-1.0), c(0.0), c(1.0)]);
        let m = roots_sphere(&s, &ZeroTolerances::default()).unwrap();
        assert_eq!(m.total_multiplicity(), 2);
        assert!(m.points.iter().all(|(p, _)| matches!(p, Point::Sphere(ChartPoint::Finite(_)))));
        assert!(m.max_residual < 1e-15);
    }

    #[test]
    fn loose_clustering_is_flagged() {
        let roots = [C64::new(0.5, 0.0), C64::new(0.505, 0.0), C64::new(-2.0, 1.0)];
        let s = sphere_section(poly::from_roots(&roots));
        let tight = roots_sphere(&s, &ZeroTolerances::default()).unwrap();
        assert_eq!((tight.points.len(), tight.flagged), (3, false));
        let loose = roots_sphere(&s, &ZeroTolerances { cluster: 1e-2, ..ZeroTolerances::default() }).unwrap();
        assert_eq!((loose.points.len(), loose.total_multiplicity(), loose.flagged), (2, 3, true));
        // A genuine double root survives the same loose radius.
        let double = sphere_section(poly::from_roots(&[C64::new(0.5, 0.0), C64::new(0.5, 0.0), C64::new(-2.0, 1.0)]));
        let m = roots_sphere(&double, &ZeroTolerances { cluster: 1e-2, ..ZeroTolerances::default() }).unwrap();
        assert_eq!((m.points.len(), m.flagged), (2, false));
    }

    #[test]
    fn monomial_roots() {
        let mut v = vec![c(0.0); 8];
        v[3] = c(2.0);
        let m = roots_sphere(&sphere_section(v), &ZeroTolerances::default()).unwrap();
        assert_eq!(m.points.len(), 2);
        let at = |p: ChartPoint| m.points.iter().find(|x| x.0 == Point::Sphere(p)).map(|x| x.1);
        assert_eq!(at(ChartPoint::new(0.0, 0.0)), Some(3));
        assert_eq!(at(ChartPoint::Infinity), Some(4));
    }

    #[test]
    fn roots_of_unity_pairing() {
        let mut v = vec![c(0.0); 9];
        v[0] = c(-1.0);
        v[8] = c(1.0);
        let m = roots_sphere(&sphere_section(v), &ZeroTolerances::default()).unwrap();
        let re = m.pairing(|p| p.coords()[0].finite().unwrap().re);
        assert!(re.abs() < 1e-12);
        assert!((m.pairing(|_| 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_section_is_an_error() {
        assert_eq!(roots_sphere(&sphere_section(vec![c(0.0); 4]), &ZeroTolerances::default()), Err(ZerosError::ZeroSection));
    }

    #[test]
    fn monomial_pair_meets_at_two_corners() {
        let p = 3;
        let s1 = product_section(p, |i, j| if i == p && j == 0 { c(1.0) } else { c(0.0) });
        let s2 = product_section(p, |i, j| if i == 0 && j == p { c(1.0) } else { c(0.0) });
        let m = common_zeros_product(&s1, &s2, &ZeroTolerances::default()).unwrap();
        assert_eq!(m.total_multiplicity(), 2 * p * p);
        let o = Point::pair(C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let inf = Point::Product(ChartPoint::Infinity, ChartPoint::Infinity);
        assert!(m.points.contains(&(o, p * p)));
        assert!(m.points.contains(&(inf, p * p)));
    }

    #[test]
    fn equal_sections_are_not_in_general_position() {
        let s = product_section(2, |i, j| C64::new(1.0 + i as f64, j as f64 - 0.5));
        assert!(matches!(common_zeros_product(&s, &s, &ZeroTolerances::default()), Err(ZerosError::GeneralPosition(_))));
        assert!(!resultant_nonzero(&s, &s).0);
    }

    #[test]
    fn generic_pair_has_bezout_count() {
        let p = 4;
        let s1 = product_section(p, |i, j| C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 0.7));
        let s2 = product_section(p, |i, j| C64::new(((i * 2 + j * 5) % 7) as f64 - 3.1, ((3 * i + j) % 4) as f64 - 1.2));
        let m = common_zeros_product(&s1, &s2, &ZeroTolerances::default()).unwrap();
        assert_eq!(m.total_multiplicity(), 32);
        assert!(m.max_residual <= 1e-6, "{}", m.max_residual);
        assert!(resultant_nonzero(&s1, &s2).0);
    }

    #[test]
    fn general_position_examples() {
        let (a1, a2) = (ChartPoint::new(0.0, 0.0), ChartPoint::new(1.0, 0.0));
        let s1 = vec![SingularComponent::Vertical(a1), SingularComponent::Horizontal(a1)];
        let s2 = vec![SingularComponent::Vertical(a2), SingularComponent::Horizontal(a2)];
        assert!(general_position_check(ModelSpace::SphereProduct, &[s1.clone(), s2]).pass);
        let v = vec![SingularComponent::Vertical(a1)];
        assert!(!general_position_check(ModelSpace::SphereProduct, &[v.clone(), v]).pass);
        let p1 = vec![SingularComponent::Point(Point::finite(C64::new(0.0, 0.0)))];
        let p2 = vec![SingularComponent::Point(Point::finite(C64::new(1.0, 0.0)))];
        assert!(general_position_check(ModelSpace::Sphere, &[p1.clone(), p2]).pass);
        assert!(!general_position_check(ModelSpace::Sphere, &[p1.clone(), p1]).pass);
    }

    #[test]
    fn csv_export() {
        let mut v = vec![c(0.0); 3];
        v[1] = c(1.0);
        let m = roots_sphere(&sphere_section(v), &ZeroTolerances::default()).unwrap();
        let csv = m.to_csv();
        assert!(csv.starts_with("re,im,multiplicity\n"));
        assert!(csv.contains("inf,inf,1"));
    }

    #[test]
    fn poincare_lelong_fs_monomial() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let mut c = vec![C64::new(0.0, 0.0); 9];
        c[3] = C64::new(1.0, 0.0);
        let s = sphere_section(c);
        for (name, chi) in analysis::battery(&w) {
            let r = poincare_lelong_residual(&w, &s, &chi).unwrap();
            assert!(r <= 1e-6, "{name}: {r}");
        }
    }

    #[test]
    fn poincare_lelong_constant_test_function() {
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0,0.3)").unwrap();
        let s = sphere_section((0..9).map(|k| C64::new(1.0 + k as f64, 0.5)).collect());
        let one = TestFunction::Zonal { centre: ChartPoint::new(0.0, 0.0), profile: analysis::Profile::Smoothstep { lo: -3.0, hi: -2.0 } };
        assert!(poincare_lelong_residual(&w, &s, &one).unwrap() < 1e-12);
    }

    #[test]
    fn poincare_lelong_random_sections_with_poles() {
        use crate::bergman::{BergmanConfig, SectionSpace};
        use crate::sampling::{sample_section, RngStream};
        for preset in ["fs+softpole(0,0.3)", "fs+logpole(0,0.3)"] {
            let w = Weight::preset(ModelSpace::Sphere, preset).unwrap();
            let sp = SectionSpace::build(&w, 16, &BergmanConfig::default()).unwrap();
            for k in 0..3 {
                let s = sample_section(&sp, &RngStream::new(7, "pl", 16, k)).section;
                for (name, chi) in analysis::battery(&w) {
                    let r = poincare_lelong_residual(&w, &s, &chi).unwrap();
                    assert!(r <= 1e-4, "{preset} {name}: {r}");
                }
            }
        }
    }

    #[test]
    fn poincare_lelong_detects_a_wrong_zero_set() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let s = sphere_section(vec![C64::new(-0.25, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let chi = TestFunction::Zonal { centre: ChartPoint::new(0.0, 0.0), profile: analysis::Profile::Smoothstep { lo: 0.2, hi: 0.6 } };
        let pl = PoincareLelong::new(&w, std::slice::from_ref(&chi), 2).unwrap();
        let mut zeros = roots_sphere(&s, &ZeroTolerances::default()).unwrap();
        assert!(pl.residual_with(&s, &zeros, &chi, pl.chis[0].1).unwrap() < 1e-8);
        zeros.points[0].0 = Point::Sphere(ChartPoint::new(0.1, 0.0));
        // Uncancelled log singularities either spoil the quadrature or the balance.
        assert!(pl.residual_with(&s, &zeros, &chi, pl.chis[0].1).map_or(true, |r| r > 1e-3));
    }
}
