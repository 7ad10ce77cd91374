use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Parameters of one obstruction study.
///
/// `k` is the obstruction order (the drift is carried by the order-`2k-1`
/// coefficients), `target_mode` the index K of the lost direction,
/// `r` the number of control channels, `j_max` the Galerkin truncation.
/// Serialized field names follow the usual math notation (`K`, `J`, `T`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(rename = "K", default = "default_target_mode")]
    pub target_mode: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(rename = "J", default)]
    pub j_max: usize,
    #[serde(rename = "T", default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_k() -> usize {
    1
}
fn default_target_mode() -> usize {
    2
}
fn default_r() -> usize {
    2
}
fn default_t_final() -> f64 {
    0.1
}
fn default_dt() -> f64 {
    1e-4
}
fn default_tol() -> f64 {
    1e-10
}

/// Default truncation: enough modes that the series tails of smooth dipoles
/// are far below every tolerance used in the suite.
pub fn default_j_max(target_mode: usize) -> usize {
    (8 * target_mode).max(64)
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let target_mode = default_target_mode();
        ProblemConfig {
            k: default_k(),
            target_mode,
            r: default_r(),
            j_max: default_j_max(target_mode),
            t_final: default_t_final(),
            dt: default_dt(),
            tol: default_tol(),
        }
    }
}

impl ProblemConfig {
    /// Config with the default truncation for the given `(k, K, r)`.
    pub fn new(k: usize, target_mode: usize, r: usize) -> Self {
        ProblemConfig {
            k,
            target_mode,
            r,
            j_max: default_j_max(target_mode),
            ..ProblemConfig::default()
        }
    }

    /// A zero `j_max` (e.g. omitted in a config file) is replaced by the default.
    pub fn normalized(mut self) -> Self {
        if self.j_max == 0 {
            self.j_max = default_j_max(self.target_mode);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.target_mode == 0 || self.r == 0 {
            return Err(Error::InvalidArgument(
                "k, K and r must be at least 1".into(),
            ));
        }
        if self.j_max < self.target_mode.max(2) {
            return Err(Error::InvalidArgument(format!(
                "J = {} must be at least max(K, 2) = {}",
                self.j_max,
                self.target_mode.max(2)
            )));
        }
        if !(self.t_final > 0.0) || !(self.dt > 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(
                "T, dt and tol must be positive".into(),
            ));
        }
        if self.dt >= self.t_final {
            return Err(Error::InvalidArgument(format!(
                "dt = {} must be smaller than T = {}",
                self.dt, self.t_final
            )));
        }
        Ok(())
    }

    /// Stable hex digest of the canonical JSON form, attached to every output.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}
