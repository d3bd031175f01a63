//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, and the
//! materialized configuration (defaults included) is written into records.

use std::fmt::Write as _;
use std::path::PathBuf;

use equidist_core::analysis::RateBoundSpec;
use equidist_core::weights::Weight;
use equidist_core::zeros::ZeroTolerances;
use equidist_core::ModelSpace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub space: ModelSpace,
    pub weight: String,
    pub p: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub quad_tol: f64,
    pub gram_tol: f64,
    pub trim_tol: f64,
    pub cluster_tol: f64,
    pub match_tol: f64,
    pub residual_tol: f64,
    /// Battery member names, or empty for the whole battery.
    pub battery: Vec<String>,
    pub rate_a: f64,
    pub rate_target: f64,
    pub rate_c: Option<f64>,
    pub grid_points: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let z = ZeroTolerances::default();
        Self {
            space: ModelSpace::Sphere,
            weight: "fs+softpole(0,0.3)".into(),
            p: vec![8, 16, 32],
            samples: 200,
            seed: 20240101,
            quad_tol: 1e-10,
            gram_tol: 1e-9,
            trim_tol: z.trim,
            cluster_tol: z.cluster,
            match_tol: z.matching,
            residual_tol: z.residual,
            battery: Vec::new(),
            rate_a: 10.0,
            rate_target: 1.0,
            rate_c: None,
            grid_points: 200,
            out: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "space",
    "weight",
    "p",
    "samples",
    "seed",
    "quad_tol",
    "gram_tol",
    "trim_tol",
    "cluster_tol",
    "match_tol",
    "residual_tol",
    "battery",
    "rate_a",
    "rate_target",
    "rate_c",
    "grid_points",
    "out",
];

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| invalid(key, format!("cannot parse `{v}`")))
}

fn positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, v)?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, "must be positive"))
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if seen.contains(&k) {
                return Err(ConfigError::Duplicate(k.to_string()));
            }
            seen.push(k);
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<(), ConfigError> {
        match k {
            "space" => {
                self.space = match v {
                    "sphere" => ModelSpace::Sphere,
                    "product" => ModelSpace::SphereProduct,
                    _ => return Err(invalid(k, "expected `sphere` or `product`")),
                }
            }
            "weight" => self.weight = v.to_string(),
            "p" => {
                self.p = list(v).iter().map(|x| num(k, x)).collect::<Result<_, _>>()?;
            }
            "samples" => self.samples = num(k, v)?,
            "seed" => self.seed = num(k, v)?,
            "quad_tol" => self.quad_tol = positive(k, v)?,
            "gram_tol" => self.gram_tol = positive(k, v)?,
            "trim_tol" => self.trim_tol = positive(k, v)?,
            "cluster_tol" => self.cluster_tol = positive(k, v)?,
            "match_tol" => self.match_tol = positive(k, v)?,
            "residual_tol" => self.residual_tol = positive(k, v)?,
            "battery" => self.battery = if v == "all" { Vec::new() } else { list(v) },
            "rate_a" => self.rate_a = positive(k, v)?,
            "rate_target" => self.rate_target = positive(k, v)?,
            "rate_c" => self.rate_c = if v == "fit" { None } else { Some(positive(k, v)?) },
            "grid_points" => self.grid_points = num(k, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => unreachable!(),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.p.is_empty() || self.p.contains(&0) {
            return Err(invalid("p", "need at least one positive degree"));
        }
        if self.p.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("p", "degrees must be strictly increasing"));
        }
        if self.grid_points == 0 {
            return Err(invalid("grid_points", "must be positive"));
        }
        let w = self.weight_for(self.space)?;
        let names: Vec<String> = equidist_core::analysis::battery(&w).into_iter().map(|b| b.0).collect();
        if let Some(b) = self.battery.iter().find(|b| !names.contains(b)) {
            return Err(invalid("battery", format!("unknown test function `{b}` (have {})", names.join(", "))));
        }
        Ok(())
    }

    pub fn weight_for(&self, space: ModelSpace) -> Result<Weight, ConfigError> {
        Weight::preset(space, &self.weight).map_err(|e| invalid("weight", e.to_string()))
    }

    pub fn zero_tolerances(&self) -> ZeroTolerances {
        ZeroTolerances { trim: self.trim_tol, cluster: self.cluster_tol, matching: self.match_tol, residual: self.residual_tol }
    }

    pub fn rate_spec(&self) -> RateBoundSpec {
        RateBoundSpec { a: self.rate_a, target: self.rate_target, c: self.rate_c }
    }

    /// Materialized `key = value` text; parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| if v.is_empty() { "all".to_string() } else { v.join(",") };
        let mut s = String::new();
        let space = match self.space {
            ModelSpace::Sphere => "sphere",
            ModelSpace::SphereProduct => "product",
        };
        let p: Vec<String> = self.p.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "space = {space}");
        let _ = writeln!(s, "weight = {}", self.weight);
        let _ = writeln!(s, "p = {}", p.join(","));
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "quad_tol = {:e}", self.quad_tol);
        let _ = writeln!(s, "gram_tol = {:e}", self.gram_tol);
        let _ = writeln!(s, "trim_tol = {:e}", self.trim_tol);
        let _ = writeln!(s, "cluster_tol = {:e}", self.cluster_tol);
        let _ = writeln!(s, "match_tol = {:e}", self.match_tol);
        let _ = writeln!(s, "residual_tol = {:e}", self.residual_tol);
        let _ = writeln!(s, "battery = {}", join(&self.battery));
        let _ = writeln!(s, "rate_a = {:e}", self.rate_a);
        let _ = writeln!(s, "rate_target = {:e}", self.rate_target);
        let _ = writeln!(s, "rate_c = {}", self.rate_c.map_or("fit".to_string(), |c| format!("{c:e}")));
        let _ = writeln!(s, "grid_points = {}", self.grid_points);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parses_typed_values() {
        let c = ExperimentConfig::parse("# ladder\nspace = product\nweight = fs+softjointpole(0,0,0.15)\np = 4, 6 ,8\nsamples=50\nrate_c = 0.5\n").unwrap();
        assert_eq!(c.space, ModelSpace::SphereProduct);
        assert_eq!(c.p, vec![4, 6, 8]);
        assert_eq!(c.samples, 50);
        assert_eq!(c.rate_c, Some(0.5));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::parse("sampels = 3").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("sampels".into()));
        assert!(e.to_string().contains("sampels"));
    }

    #[test]
    fn bad_values_name_the_key() {
        for (text, key) in [
            ("p = 8,4", "p"),
            ("cluster_tol = -1", "cluster_tol"),
            ("weight = fs+bogus(1)", "weight"),
            ("battery = nope", "battery"),
            ("samples = many", "samples"),
        ] {
            match ExperimentConfig::parse(text).unwrap_err() {
                ConfigError::Invalid { key: k, .. } => assert_eq!(k, key, "{text}"),
                e => panic!("{text}: {e}"),
            }
        }
        assert_eq!(ExperimentConfig::parse("seed").unwrap_err(), ConfigError::Syntax { line: 1 });
        assert_eq!(ExperimentConfig::parse("seed = 1\nseed = 2").unwrap_err(), ConfigError::Duplicate("seed".into()));
    }
}
