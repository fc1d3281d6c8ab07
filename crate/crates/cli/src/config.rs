//! Run configuration: one JSON document, with command-line overrides.

use std::path::{Path, PathBuf};

use isleforge::isles::Model;
use isleforge::trees::{LawKind, OffspringLaw};
use isleforge::TestFunction;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Offspring law: a built-in name or an explicit pmf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LawSpec {
    Named(LawKind),
    Pmf { pmf: Vec<f64> },
}

impl LawSpec {
    pub fn build(&self) -> Result<OffspringLaw, ConfigError> {
        match self {
            LawSpec::Named(LawKind::CustomPmf) => Err(invalid("law", "custom-pmf needs an explicit {\"pmf\": [...]}")),
            LawSpec::Named(kind) => Ok(OffspringLaw::from_kind(*kind).expect("built-in law")),
            LawSpec::Pmf { pmf } => OffspringLaw::custom(pmf.clone()).map_err(|e| invalid("law.pmf", e.to_string())),
        }
    }
}

/// One N or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NList {
    One(u64),
    Many(Vec<u64>),
}

impl NList {
    pub fn values(&self) -> Vec<u64> {
        match self {
            NList::One(n) => vec![*n],
            NList::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcMethodName {
    Series,
    WalkApprox,
    Excursion,
}

/// Options of `limit-sample` and the limit side of `cumulant`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitOptions {
    /// Number of η draws.
    pub samples: u64,
    /// Size of the (P, C) pool for the regrowing model.
    pub pc_pool: u64,
    pub pc_method: PcMethodName,
    pub n_ref: u64,
    pub dt: f64,
    /// Replicate whose atoms are written to `limit_atoms.csv`.
    pub dump_atoms: Option<u64>,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            samples: 100_000,
            pc_pool: 100_000,
            pc_method: PcMethodName::Series,
            n_ref: 2000,
            dt: 1e-4,
            dump_atoms: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CumulantOptions {
    pub tol: f64,
    /// CSV of `p,c` pairs; generated when absent.
    pub pc_pool_path: Option<PathBuf>,
}

impl Default for CumulantOptions {
    fn default() -> Self {
        CumulantOptions {
            tol: 1e-12,
            pc_pool_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub law: LawSpec,
    pub c: f64,
    pub n: NList,
    pub replicates: u64,
    pub master_seed: u64,
    /// Defaults to `ISLEFORGE_WORKERS`, then to the available parallelism.
    /// Not echoed into artifacts: outputs do not depend on it.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub step_cap: u64,
    /// Initial islands per replicate; defaults to N.
    pub roots: Option<u64>,
    pub support_min: f64,
    /// Trapezoids `[a, a', b', b, h]`.
    pub test_functions: Vec<[f64; 5]>,
    pub out_dir: PathBuf,
    /// Replicate whose atoms are written to `atoms.csv`.
    pub dump_atoms: Option<u64>,
    pub limit: LimitOptions,
    pub cumulant: CumulantOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::Fossil,
            law: LawSpec::Named(LawKind::GeometricHalf),
            c: 1.0,
            n: NList::One(100),
            replicates: 100,
            master_seed: 1,
            workers: None,
            step_cap: isleforge::empirical::DEFAULT_STEP_CAP,
            roots: None,
            support_min: 0.05,
            test_functions: vec![[0.05, 0.2, 0.5, 0.8, 1.0], [0.3, 0.6, 1.2, 1.5, 1.0], [0.5, 0.9, 1.1, 2.0, 2.0]],
            out_dir: PathBuf::from("out"),
            dump_atoms: None,
            limit: LimitOptions::default(),
            cumulant: CumulantOptions::default(),
        }
    }
}

/// Command-line overrides of document fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    /// Applies overrides, fills the worker count and validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if self.workers.is_none() {
            self.workers = Some(default_workers()?);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", "must be positive and finite"));
        }
        let ns = self.n.values();
        if ns.is_empty() {
            return Err(invalid("n", "needs at least one value"));
        }
        for (i, &n) in ns.iter().enumerate() {
            if n == 0 {
                return Err(invalid(format!("n[{i}]"), "must be at least 1"));
            }
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.step_cap == 0 {
            return Err(invalid("step_cap", "must be at least 1"));
        }
        if self.roots == Some(0) {
            return Err(invalid("roots", "must be at least 1"));
        }
        if !(self.support_min > 0.0 && self.support_min.is_finite()) {
            return Err(invalid("support_min", "must be positive"));
        }
        self.law.build()?;
        self.test_functions()?;
        if self.limit.samples == 0 {
            return Err(invalid("limit.samples", "must be at least 1"));
        }
        if self.limit.pc_pool == 0 {
            return Err(invalid("limit.pc_pool", "must be at least 1"));
        }
        if self.limit.n_ref == 0 {
            return Err(invalid("limit.n_ref", "must be at least 1"));
        }
        if !(self.limit.dt > 0.0 && self.limit.dt <= 1e-4) {
            return Err(invalid("limit.dt", "must lie in (0, 1e-4]"));
        }
        if !(self.cumulant.tol > 0.0) {
            return Err(invalid("cumulant.tol", "must be positive"));
        }
        Ok(())
    }

    pub fn offspring_law(&self) -> OffspringLaw {
        self.law.build().expect("validated")
    }

    pub fn test_functions(&self) -> Result<Vec<TestFunction>, ConfigError> {
        if self.test_functions.is_empty() {
            return Err(invalid("test_functions", "needs at least one trapezoid"));
        }
        self.test_functions
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let f = TestFunction::new(t[0], t[1], t[2], t[3], t[4])
                    .map_err(|e| invalid(format!("test_functions[{i}]"), e.to_string()))?;
                if f.a < self.support_min {
                    return Err(invalid(
                        format!("test_functions[{i}]"),
                        format!("lower corner {} is below support_min {}", f.a, self.support_min),
                    ));
                }
                Ok(f)
            })
            .collect()
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }
}

/// `ISLEFORGE_WORKERS`, else the available parallelism.
pub fn default_workers() -> Result<usize, ConfigError> {
    match std::env::var("ISLEFORGE_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(invalid("ISLEFORGE_WORKERS", format!("expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default().resolve(&Overrides {
            workers: Some(2),
            ..Default::default()
        });
        assert!(c.is_ok());
    }

    #[test]
    fn bad_trapezoid_names_field() {
        let text = r#"{"test_functions": [[0.1, 0.2, 0.3, 0.4, 1.0], [0.5, 0.6, 0.7, 0.4, 1.0]]}"#;
        let c = RunConfig::from_json(text, Path::new("x.json")).unwrap();
        let e = c.validate().unwrap_err().to_string();
        assert!(e.starts_with("test_functions[1]"), "{e}");
    }

    #[test]
    fn support_floor_is_enforced() {
        let text = r#"{"support_min": 0.2, "test_functions": [[0.1, 0.3, 0.4, 0.5, 1.0]]}"#;
        let c = RunConfig::from_json(text, Path::new("x.json")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("support_min"));
    }

    #[test]
    fn law_forms() {
        let text = r#"{"law": "binary-half", "n": [10, 20]}"#;
        let c = RunConfig::from_json(text, Path::new("x.json")).unwrap();
        assert_eq!(c.offspring_law().kind(), LawKind::BinaryHalf);
        assert_eq!(c.n.values(), vec![10, 20]);
        let text = r#"{"law": {"pmf": [0.25, 0.5, 0.25]}}"#;
        let c = RunConfig::from_json(text, Path::new("x.json")).unwrap();
        assert!((c.offspring_law().sigma2() - 0.5).abs() < 1e-12);
        let text = r#"{"law": {"pmf": [0.5, 0.5]}}"#;
        let c = RunConfig::from_json(text, Path::new("x.json")).unwrap();
        assert!(c.validate().unwrap_err().to_string().starts_with("law.pmf"));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(RunConfig::from_json(r#"{"modle": "fossil"}"#, Path::new("x.json")).is_err());
    }

    #[test]
    fn zero_limit_samples_rejected() {
        let c = RunConfig::from_json(r#"{"limit": {"samples": 0}}"#, Path::new("x.json")).unwrap();
        assert!(c.validate().unwrap_err().to_string().starts_with("limit.samples"));
    }
}
