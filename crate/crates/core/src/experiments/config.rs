//! Experiment configuration files (TOML key–value pairs).
//!
//! ```toml
//! scenario = "sparse"   # or "isotonic"
//! n = 200
//! p = 50
//! m = 20
//! shift = 5.0
//! tau = 1.0
//! reps = 20
//! seed = 7
//! methods = ["lasso", "mcp", "distance"]
//! cv = true
//! ```

use serde::Deserialize;

use super::runner::{ExperimentConfig, Method, Scenario};
use super::scenario::{IsotonicScenario, SparseScenario};
use crate::error::{L2eError, Result};

/// Desk-scale replicate count.
pub const DEFAULT_REPS: usize = 20;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: String,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub m: Option<usize>,
    pub shift: Option<f64>,
    pub tau: Option<f64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    pub cv: Option<bool>,
    pub folds: Option<usize>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub k: Option<usize>,
    pub k_grid: Option<Vec<usize>>,
    pub rho: Option<f64>,
    pub max_outer: Option<usize>,
    pub tol: Option<f64>,
    pub jobs: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| L2eError::InvalidArgument(format!("config: {e}")))
    }

    /// Fills unspecified keys with the scenario defaults.
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let scenario = match self.scenario.to_ascii_lowercase().as_str() {
            "isotonic" => {
                let d = IsotonicScenario::default();
                if self.p.is_some() || self.tau.is_some() {
                    return Err(L2eError::InvalidArgument(
                        "p and tau do not apply to the isotonic scenario".into(),
                    ));
                }
                Scenario::Isotonic(IsotonicScenario {
                    n: self.n.unwrap_or(d.n),
                    m: self.m.unwrap_or(d.m),
                    shift: self.shift.unwrap_or(d.shift),
                    seed: 0,
                })
            }
            "sparse" => {
                let d = SparseScenario::default();
                Scenario::Sparse(SparseScenario {
                    n: self.n.unwrap_or(d.n),
                    p: self.p.unwrap_or(d.p),
                    m: self.m.unwrap_or(d.m),
                    shift: self.shift.unwrap_or(d.shift),
                    tau_true: self.tau.unwrap_or(d.tau_true),
                    seed: 0,
                })
            }
            other => {
                return Err(L2eError::InvalidArgument(format!(
                    "unknown scenario '{other}' (expected isotonic or sparse)"
                )))
            }
        };
        let methods = match self.methods {
            Some(list) => list
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<Method>>>()?,
            None => default_methods(&scenario),
        };
        let mut cfg = ExperimentConfig::new(
            scenario,
            methods,
            self.reps.unwrap_or(DEFAULT_REPS),
            self.seed.unwrap_or(0),
        );
        let t = &mut cfg.tuning;
        t.cv = self.cv.unwrap_or(t.cv);
        t.folds = self.folds.unwrap_or(t.folds);
        t.lambda = self.lambda.or(t.lambda);
        t.gamma = self.gamma.unwrap_or(t.gamma);
        t.k = self.k.unwrap_or(t.k);
        if let Some(g) = self.k_grid {
            t.k_grid = g;
        }
        t.rho = self.rho.unwrap_or(t.rho);
        if let Some(m) = self.max_outer {
            cfg.fit.max_outer = m;
            cfg.pg.max_outer = m;
        }
        if let Some(tol) = self.tol {
            cfg.fit.outer_tol = tol;
            cfg.pg.outer_tol = tol;
        }
        cfg.jobs = self.jobs;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn default_methods(scenario: &Scenario) -> Vec<Method> {
    match scenario {
        Scenario::Isotonic(_) => vec![Method::Mm, Method::Pg, Method::Ls],
        Scenario::Sparse(_) => vec![Method::Lasso, Method::Mcp, Method::Distance],
    }
}

/// Parses a TOML configuration into a validated experiment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ConfigFile::parse(text)?.into_config()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_config() {
        let cfg = parse_config(
            "scenario = \"sparse\"\nm = 10\ntau = 2.0\nreps = 3\nseed = 9\nmethods = [\"lasso\", \"distance\"]\ncv = true\n",
        )
        .unwrap();
        match cfg.scenario {
            Scenario::Sparse(s) => assert_eq!((s.n, s.p, s.m, s.tau_true), (200, 50, 10, 2.0)),
            _ => panic!("expected sparse"),
        }
        assert_eq!(cfg.methods, vec![Method::Lasso, Method::Distance]);
        assert!(cfg.tuning.cv);
        assert_eq!((cfg.n_reps, cfg.seed), (3, 9));
    }

    #[test]
    fn defaults_and_errors() {
        let cfg = parse_config("scenario = \"isotonic\"").unwrap();
        assert_eq!(cfg.methods, vec![Method::Mm, Method::Pg, Method::Ls]);
        assert_eq!(cfg.n_reps, DEFAULT_REPS);
        assert!(parse_config("scenario = \"isotonic\"\nmethods = [\"lasso\"]").is_err());
        assert!(parse_config("scenario = \"trend\"").is_err());
        assert!(parse_config("scenario = \"sparse\"\nbogus = 1").is_err());
        assert!(parse_config("scenario = ").is_err());
    }
}
