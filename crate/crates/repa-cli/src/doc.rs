//! On-disk JSON document shapes shared by the fit, selection and report
//! commands. Every document carries a `schema_version`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use repa_core::align::{apply_perm, best_agreement_perm};
use repa_core::graph::rand_index;
use repa_core::params::MixtureParams;

pub const SCHEMA_VERSION: u32 = 1;

/// Atomic pretty-printed JSON write with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    repa_core::io::atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
    .with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    repa_core::io::atomic_write(path, |w| {
        w.write_all(text.as_bytes())?;
        Ok(())
    })
    .with_context(|| format!("writing {}", path.display()))
}

/// Ground-truth diagnostics attached to a fit when true labels are supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthBlock {
    pub rand_index: f64,
    /// Fit class `l` corresponds to truth class `permutation[l]`.
    pub permutation: Vec<usize>,
    pub pi_aligned: Vec<f64>,
    pub rho_aligned: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_covered: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_covered: Option<Vec<Vec<bool>>>,
}

/// Common shape of every fit output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDoc {
    pub schema_version: u32,
    /// One of `gibbs`, `telescope`, `vb`, `vem`.
    pub method: String,
    pub k: usize,
    /// Point estimates (posterior means for the Bayesian methods).
    pub pi: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_hi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_lo: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_hi: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub icl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo_trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_pmf: Option<Vec<(usize, f64)>>,
    /// Method-specific extras (iteration counts, seeds, init provenance).
    pub details: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthBlock>,
}

/// Output of `select-k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub schema_version: u32,
    pub criterion: String,
    pub chosen_k: usize,
    pub table: Vec<KEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KEntry {
    pub k: usize,
    pub value: f64,
}

/// Truth parameters file: `{"pi": [...], "rho": [[...]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthParams {
    pub pi: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

/// Build the truth diagnostics for a fit.
pub fn truth_block(
    hard_labels: &[u16],
    true_labels: &[u16],
    k: usize,
    pi: &[f64],
    rho: &[Vec<f64>],
    intervals: Option<(&[f64], &[f64], &[Vec<f64>], &[Vec<f64>])>,
    truth: Option<&MixtureParams>,
) -> Result<TruthBlock> {
    let rand = rand_index(hard_labels, true_labels)?;
    let k_true = 1 + true_labels.iter().copied().max().unwrap_or(0) as usize;
    let dim = k.max(k_true);
    let perm = best_agreement_perm(hard_labels, true_labels, dim);
    let aligned = MixtureParams {
        pi: pad(pi, dim),
        rho: pad_sq(rho, dim),
    }
    .permuted(&perm);
    let (pi_covered, rho_covered) = match (intervals, truth) {
        (Some((pi_lo, pi_hi, rho_lo, rho_hi)), Some(t)) if t.k() == dim => {
            let lo = MixtureParams {
                pi: pad(pi_lo, dim),
                rho: pad_sq(rho_lo, dim),
            }
            .permuted(&perm);
            let hi = MixtureParams {
                pi: pad(pi_hi, dim),
                rho: pad_sq(rho_hi, dim),
            }
            .permuted(&perm);
            let pi_cov: Vec<bool> = (0..dim)
                .map(|r| lo.pi[r] <= t.pi[r] && t.pi[r] <= hi.pi[r])
                .collect();
            let rho_cov: Vec<Vec<bool>> = (0..dim)
                .map(|m| {
                    (0..dim)
                        .map(|r| lo.rho[m][r] <= t.rho[m][r] && t.rho[m][r] <= hi.rho[m][r])
                        .collect()
                })
                .collect();
            (Some(pi_cov), Some(rho_cov))
        }
        _ => (None, None),
    };
    let _ = apply_perm; // alignment of labels is left to consumers
    Ok(TruthBlock {
        rand_index: rand,
        permutation: perm,
        pi_aligned: aligned.pi,
        rho_aligned: aligned.rho,
        pi_covered,
        rho_covered,
    })
}

fn pad(v: &[f64], dim: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(dim, 0.0);
    out
}

fn pad_sq(m: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| {
            let mut row = m.get(i).cloned().unwrap_or_default();
            row.resize(dim, 0.0);
            row
        })
        .collect()
}

/// Consolidated replicate report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDoc {
    pub schema_version: u32,
    pub methods: Vec<MethodReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub selections: Vec<SelectionReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub replicates: usize,
    /// True when estimates were truth-aligned before averaging.
    pub aligned: bool,
    pub pi_mean: Vec<f64>,
    pub pi_se: Vec<f64>,
    pub rho_mean: Vec<Vec<f64>>,
    pub rho_se: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_pi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_rho: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rand_index: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub criterion: String,
    pub replicates: usize,
    /// Chosen-K frequency table.
    pub k_counts: BTreeMap<usize, usize>,
}
