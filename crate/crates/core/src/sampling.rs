//! Random sections under the Fubini–Study measure on the unit sphere of
//! H⁰(L^p), with counter-keyed streams for reproducibility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bergman::{Section, SectionSpace};
use crate::C64;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Address of a random stream: (root seed, experiment id, p, sample, component).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub experiment: String,
    pub p: usize,
    pub sample: u64,
}

impl RngStream {
    pub fn new(seed: u64, experiment: &str, p: usize, sample: u64) -> Self {
        Self { seed, experiment: experiment.to_string(), p, sample }
    }

    pub fn with_sample(&self, sample: u64) -> Self {
        Self { sample, ..self.clone() }
    }

    /// Generator for one component of this sample.
    pub fn rng(&self, component: u64) -> ChaCha8Rng {
        let key = splitmix64(splitmix64(splitmix64(self.seed) ^ fnv1a(&self.experiment)) ^ self.p as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(self.sample.wrapping_mul(16).wrapping_add(component));
        rng
    }

    /// Compact printable path, logged with experiment records.
    pub fn path(&self) -> String {
        format!("{}/{}/p{}/s{}", self.seed, self.experiment, self.p, self.sample)
    }
}

/// Standard complex Gaussian (E|ξ|² = 1) by Box–Muller.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    // 1 − U lies in (0, 1], keeping the logarithm finite.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    C64::from_polar((-u1.ln()).sqrt(), std::f64::consts::TAU * u2)
}

/// Uniform point of the unit sphere in C^dim.
pub fn unit_sphere_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Orthonormal coefficients and the section they define.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSection {
    pub coefficients: Vec<C64>,
    pub section: Section,
}

pub fn sample_section(space: &SectionSpace, stream: &RngStream) -> SampledSection {
    sample_component(space, stream, 0)
}

fn sample_component(space: &SectionSpace, stream: &RngStream, component: u64) -> SampledSection {
    let mut rng = stream.rng(component);
    let coefficients = unit_sphere_vector(&mut rng, space.dim());
    let section = space.section(&coefficients);
    SampledSection { coefficients, section }
}

/// One section per space from independent sub-streams.
pub fn sample_tuple(spaces: &[&SectionSpace], stream: &RngStream) -> Vec<SampledSection> {
    assert!(
        spaces.windows(2).all(|w| w[0].p == w[1].p && w[0].space() == w[1].space()),
        "tuple components must share p and the model space"
    );
    spaces.iter().enumerate().map(|(k, s)| sample_component(s, stream, k as u64)).collect()
}

/// c with c^{−d₀} = d₀!/(l₁!⋯l_m!), d₀ = Σ lₖ.
pub fn multiproj_constant(dims: &[usize]) -> f64 {
    assert!(!dims.is_empty() && dims.iter().all(|&l| l >= 1), "dimensions must be positive");
    let d0: usize = dims.iter().sum();
    let log_multinomial = ln_gamma(d0 as f64 + 1.0) - dims.iter().map(|&l| ln_gamma(l as f64 + 1.0)).sum::<f64>();
    let c = (-log_multinomial / d0 as f64).exp();
    debug_assert!(c >= 1.0 / dims.len() as f64 - 1e-12);
    c
}

/// One-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lam * lam).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::BergmanConfig;
    use crate::weights::Weight;
    use crate::ModelSpace;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(42, "exp", 8, 3);
        let a: Vec<u64> = (0..4).map(|_| s.rng(0).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let x: u64 = s.rng(0).random();
        assert_ne!(x, s.rng(1).random::<u64>());
        assert_ne!(x, s.with_sample(4).rng(0).random::<u64>());
        assert_ne!(x, RngStream::new(42, "exp", 16, 3).rng(0).random::<u64>());
        assert_ne!(x, RngStream::new(42, "other", 8, 3).rng(0).random::<u64>());
    }

    #[test]
    fn sections_are_unit_norm() {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let sp = SectionSpace::build(&w, 8, &BergmanConfig::default()).unwrap();
        let s = sample_section(&sp, &RngStream::new(1, "t", 8, 0));
        let n: f64 = s.coefficients.iter().map(|c| c.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coordinate_second_moment() {
        let dim = 7;
        let s = RngStream::new(5, "moment", 0, 0);
        let vals: Vec<f64> = (0..10_000).map(|k| unit_sphere_vector(&mut s.with_sample(k).rng(0), dim)[2].norm_sqr()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let se = (var / vals.len() as f64).sqrt();
        assert!((mean - 1.0 / dim as f64).abs() <= 3.0 * se);
    }

    #[test]
    fn first_coordinate_is_beta_distributed() {
        // |c₀|² ~ Beta(1, dim−1): CDF 1 − (1−x)^{dim−1}.
        let dim = 9;
        let s = RngStream::new(11, "ks", 0, 0);
        let vals: Vec<f64> = (0..10_000).map(|k| unit_sphere_vector(&mut s.with_sample(k).rng(0), dim)[0].norm_sqr()).collect();
        let (_, pval) = ks_test(&vals, |x| 1.0 - (1.0 - x).powi(dim as i32 - 1));
        assert!(pval > 0.01, "{pval}");
    }

    #[test]
    fn ks_rejects_wrong_distribution() {
        let vals: Vec<f64> = (0..2000).map(|k| (k as f64 + 0.5) / 2000.0).collect();
        assert!(ks_test(&vals, |x| x * x).1 < 1e-6);
    }

    #[test]
    fn multiproj_examples() {
        assert_eq!(multiproj_constant(&[5]), 1.0);
        assert!((multiproj_constant(&[1, 1]) - 0.5f64.sqrt()).abs() < 1e-14);
        for m in 2..=4 {
            for l in 1..=50 {
                let c = multiproj_constant(&vec![l; m]);
                // Oracle: direct log-factorial sums.
                let lf = |n: usize| (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
                let expect = (-(lf(l * m) - m as f64 * lf(l)) / (l * m) as f64).exp();
                assert!((c - expect).abs() < 1e-12);
                assert!(c >= 1.0 / m as f64);
            }
        }
    }
}
