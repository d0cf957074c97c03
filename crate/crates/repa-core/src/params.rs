//! Model parameters shared across the simulator and the inference methods.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Global attachment parameters: scenario probabilities `alpha` (new source)
/// and `beta` (internal edge), plus positive degree offsets. The new-target
/// probability is the remainder `1 - alpha - beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta_in: f64,
    pub delta_out: f64,
}

impl GlobalParams {
    pub fn new(alpha: f64, beta: f64, delta_in: f64, delta_out: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::InvalidParams(format!("alpha {alpha} not in [0, 1]")));
        }
        if !(0.0..=1.0).contains(&beta) || !beta.is_finite() {
            return Err(Error::InvalidParams(format!("beta {beta} not in [0, 1]")));
        }
        if alpha + beta > 1.0 + 1e-12 {
            return Err(Error::InvalidParams(format!(
                "alpha + beta = {} exceeds 1",
                alpha + beta
            )));
        }
        if !(delta_in > 0.0) || !delta_in.is_finite() {
            return Err(Error::InvalidParams(format!(
                "delta_in {delta_in} must be positive"
            )));
        }
        if !(delta_out > 0.0) || !delta_out.is_finite() {
            return Err(Error::InvalidParams(format!(
                "delta_out {delta_out} must be positive"
            )));
        }
        Ok(GlobalParams {
            alpha,
            beta,
            delta_in,
            delta_out,
        })
    }

    /// Probability of the new-target scenario.
    pub fn gamma(&self) -> f64 {
        (1.0 - self.alpha - self.beta).max(0.0)
    }
}

/// Class proportions and the reciprocity matrix.
///
/// `rho[m][r]` is the probability that the target of a new edge, when it
/// belongs to class `m`, answers a source of class `r` with a reverse edge.
/// Rows need not sum to anything; every entry just lives in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub pi: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

impl MixtureParams {
    pub fn new(pi: Vec<f64>, rho: Vec<Vec<f64>>) -> Result<Self> {
        let k = pi.len();
        if k == 0 {
            return Err(Error::InvalidParams("pi must be nonempty".into()));
        }
        if pi.iter().any(|&p| !(0.0..=1.0).contains(&p) || !p.is_finite()) {
            return Err(Error::InvalidParams("pi entries must lie in [0, 1]".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("pi sums to {total}, not 1")));
        }
        if rho.len() != k || rho.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidParams(format!("rho must be {k}x{k}")));
        }
        for row in &rho {
            if row.iter().any(|&r| !(0.0..=1.0).contains(&r) || !r.is_finite()) {
                return Err(Error::InvalidParams("rho entries must lie in [0, 1]".into()));
            }
        }
        Ok(MixtureParams { pi, rho })
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    /// Apply a class relabeling: class `l` becomes `perm[l]`.
    pub fn permuted(&self, perm: &[usize]) -> MixtureParams {
        let k = self.k();
        let mut pi = vec![0.0; k];
        let mut rho = vec![vec![0.0; k]; k];
        for l in 0..k {
            pi[perm[l]] = self.pi[l];
        }
        for m in 0..k {
            for r in 0..k {
                rho[perm[m]][perm[r]] = self.rho[m][r];
            }
        }
        MixtureParams { pi, rho }
    }
}
