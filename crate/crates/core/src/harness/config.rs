use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BlockParams;
use crate::error::{Error, Result};
use crate::sampling::ProbabilityDescriptor;

fn default_delta() -> f64 {
    0.01
}

/// One experiment, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub probability: ProbabilityDescriptor,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// 100×100, rank 2, noise 0.1, 100 trials, block probabilities 0.3 with a
    /// 0.05 bottom-right quadrant.
    pub fn block_reference(seed: u64) -> Self {
        Self {
            probability: ProbabilityDescriptor::Block {
                n1: 50,
                n2: 50,
                q11: 0.3,
                q12: 0.3,
                q21: 0.3,
                q22: 0.05,
            },
            n: 100,
            m: 100,
            r: 2,
            sigma: 0.1,
            trials: 100,
            seed,
            delta: default_delta(),
            out: None,
        }
    }

    /// Same sizes, rank-one probabilities from Beta-mixture factors split at 80.
    pub fn rank_one_reference(seed: u64) -> Self {
        Self {
            probability: ProbabilityDescriptor::RankOneBeta {
                n: 100,
                m: 100,
                split: 80,
                seed,
            },
            ..Self::block_reference(seed)
        }
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json_str(&text, path)?;
        // CSV probability paths are relative to the config file.
        if let ProbabilityDescriptor::Csv { path: csv } = &mut cfg.probability {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.n == 0 || self.m == 0 {
            return fail("n and m must be positive".into());
        }
        if self.r == 0 || self.r > self.n.min(self.m) {
            return fail(format!(
                "rank {} must lie in [1, {}]",
                self.r,
                self.n.min(self.m)
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        match &self.probability {
            ProbabilityDescriptor::Block { n1, n2, .. } if (n1 + n2, n1 + n2) != (self.n, self.m) => {
                fail(format!(
                    "block probabilities are {0}x{0} but n x m is {1}x{2}",
                    n1 + n2,
                    self.n,
                    self.m
                ))
            }
            ProbabilityDescriptor::RankOne { alpha, beta }
                if (alpha.len(), beta.len()) != (self.n, self.m) =>
            {
                fail(format!(
                    "rank-one factors have lengths {}x{} but n x m is {}x{}",
                    alpha.len(),
                    beta.len(),
                    self.n,
                    self.m
                ))
            }
            ProbabilityDescriptor::RankOneBeta { n, m, .. } if (*n, *m) != (self.n, self.m) => {
                fail(format!(
                    "rank-one probabilities are {n}x{m} but n x m is {}x{}",
                    self.n, self.m
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn block_params(&self) -> Option<BlockParams> {
        match self.probability {
            ProbabilityDescriptor::Block {
                n1,
                n2,
                q11,
                q12,
                q21,
                q22,
            } => Some(BlockParams {
                n1,
                n2,
                q11,
                q12,
                q21,
                q22,
            }),
            _ => None,
        }
    }

    /// Seed for trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add(t as u64)
    }
}
