//! Experiment configuration and its flat `key = value` file format.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic { rows: usize, dim: usize },
    Libsvm { path: PathBuf, dim: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossChoice {
    Quadratic,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algorithm {
    Qpgd,
    QNewton,
    Gd,
    Pgd,
    Qsgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Qpgd,
        Algorithm::QNewton,
        Algorithm::Gd,
        Algorithm::Pgd,
        Algorithm::Qsgd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Qpgd => "qpgd",
            Algorithm::QNewton => "qnewton",
            Algorithm::Gd => "gd",
            Algorithm::Pgd => "pgd",
            Algorithm::Qsgd => "qsgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown algorithm '{s}' (expected qpgd, qnewton, gd, pgd or qsgd)"
            ))
        })
    }
}

impl FromStr for LossChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" | "least-squares" => Ok(LossChoice::Quadratic),
            "logistic" => Ok(LossChoice::Logistic),
            _ => Err(Error::Config(format!(
                "unknown loss '{s}' (expected quadratic or logistic)"
            ))),
        }
    }
}

/// How the initialization radius `D` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusRule {
    /// Exact distances to the oracle minimizers.
    Oracle,
    /// `√(2·f(x⁰)/μ)` style bound from function values.
    Values,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub loss: LossChoice,
    /// Margin penalty of the logistic loss.
    pub rho: f64,
    /// Target noise of synthetic least squares.
    pub noise: f64,
    pub nodes: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Step size for gd and qsgd; `None` means `2/(μ + γ)`.
    pub eta: Option<f64>,
    pub alpha: f64,
    pub levels: u32,
    /// Hessian-Lipschitz override for quantized Newton.
    pub sigma: Option<f64>,
    /// Target `f(x) − f*`.
    pub eps: f64,
    pub max_rounds: usize,
    pub radius: RadiusRule,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Synthetic { rows: 200, dim: 5 },
            loss: LossChoice::Quadratic,
            rho: 1.0,
            noise: 0.0,
            nodes: 4,
            seed: 7,
            algorithm: Algorithm::Qpgd,
            eta: None,
            alpha: 0.5,
            levels: 16,
            sigma: None,
            eps: 1e-6,
            max_rounds: 10_000,
            radius: RadiusRule::Oracle,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = if value == "synthetic" || value == "synthetic-gaussian" {
                    match &self.dataset {
                        DatasetSource::Synthetic { .. } => self.dataset.clone(),
                        DatasetSource::Libsvm { .. } => DatasetSource::Synthetic { rows: 200, dim: 5 },
                    }
                } else {
                    let dim = match &self.dataset {
                        DatasetSource::Libsvm { dim, .. } => *dim,
                        DatasetSource::Synthetic { .. } => None,
                    };
                    DatasetSource::Libsvm {
                        path: PathBuf::from(value),
                        dim,
                    }
                }
            }
            "rows" | "m" => match &mut self.dataset {
                DatasetSource::Synthetic { rows, .. } => *rows = parse_num(key, value)?,
                DatasetSource::Libsvm { .. } => {
                    return Err(Error::Config("rows only applies to synthetic data".into()))
                }
            },
            "dim" | "d" => {
                let d = parse_num(key, value)?;
                match &mut self.dataset {
                    DatasetSource::Synthetic { dim, .. } => *dim = d,
                    DatasetSource::Libsvm { dim, .. } => *dim = Some(d),
                }
            }
            "loss" => self.loss = value.parse()?,
            "rho" => self.rho = parse_num(key, value)?,
            "noise" => self.noise = parse_num(key, value)?,
            "nodes" | "n" => self.nodes = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "algo" | "algorithm" => self.algorithm = value.parse()?,
            "eta" => self.eta = Some(parse_num(key, value)?),
            "alpha" => self.alpha = parse_num(key, value)?,
            "levels" => self.levels = parse_num(key, value)?,
            "sigma" => self.sigma = Some(parse_num(key, value)?),
            "eps" => self.eps = parse_num(key, value)?,
            "max_rounds" => self.max_rounds = parse_num(key, value)?,
            "radius" => {
                self.radius = match value {
                    "oracle" => RadiusRule::Oracle,
                    "values" => RadiusRule::Values,
                    _ => {
                        return Err(Error::Config(format!(
                            "radius: expected oracle or values, got '{value}'"
                        )))
                    }
                }
            }
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every setting in `text`, in order.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: k + 1,
                message: "expected key = value".into(),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: k + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&fs::read_to_string(path).map_err(Error::file(path))?, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Config("nodes must be at least 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::Config(format!("eta must be positive, got {eta}")));
            }
        }
        if self.loss == LossChoice::Logistic && !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_text() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(
            "# comment\nalgo = pgd\nnodes=3\n\nrows = 90 # trailing\neps = 1e-4\nradius = values\n",
            Path::new("c"),
        )
        .unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Pgd);
        assert_eq!(cfg.nodes, 3);
        assert_eq!(cfg.dataset, DatasetSource::Synthetic { rows: 90, dim: 5 });
        assert_eq!(cfg.eps, 1e-4);
        assert_eq!(cfg.radius, RadiusRule::Values);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut cfg = ExperimentConfig::default();
        let e = cfg.apply_text("nodes = 2\nbogus = 1\n", Path::new("c")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = cfg.apply_text("nodes\n", Path::new("c")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(cfg.set("algo", "sgd").is_err());
    }

    #[test]
    fn libsvm_dataset_keeps_dim() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("dataset", "data.txt").unwrap();
        cfg.set("dim", "12").unwrap();
        assert_eq!(
            cfg.dataset,
            DatasetSource::Libsvm {
                path: PathBuf::from("data.txt"),
                dim: Some(12)
            }
        );
        assert!(cfg.set("rows", "3").is_err());
    }
}
