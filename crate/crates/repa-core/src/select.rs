//! Choosing the number of classes and aggregating replicate results.
//!
//! Variational fits are compared by their criterion value (bound or
//! integrated classification criterion) over a contiguous K range; chains
//! report the posterior mode of K. Coverage aggregation aligns every
//! replicate to the ground truth by best label agreement before checking
//! intervals.

use serde::{Deserialize, Serialize};

use crate::align::best_agreement_perm;
use crate::error::Error;
use crate::graph::Labels;
use crate::mcmc::Chain;
use crate::params::MixtureParams;
use crate::Result;

/// One criterion value at one class count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KCriterion {
    pub k: usize,
    pub value: f64,
}

/// Which criterion a selection table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Elbo,
    Icl,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub criterion: Criterion,
    pub chosen_k: usize,
    pub table: Vec<KCriterion>,
}

/// Pick the K maximizing the criterion; ties go to the smallest K. The
/// entries must cover a contiguous ascending K range.
pub fn select_k_variational(entries: &[KCriterion], criterion: Criterion) -> Result<Selection> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("no fits to select over"));
    }
    for pair in entries.windows(2) {
        if pair[1].k != pair[0].k + 1 {
            return Err(Error::InvalidParams(format!(
                "fits must cover a contiguous ascending K range, got {} then {}",
                pair[0].k, pair[1].k
            )));
        }
    }
    let mut best = entries[0];
    for e in &entries[1..] {
        if e.value > best.value {
            best = *e;
        }
    }
    Ok(Selection {
        criterion,
        chosen_k: best.k,
        table: entries.to_vec(),
    })
}

/// Posterior mode of the component count with its empirical pmf over the
/// post-burn-in samples; ties resolve to the smallest K.
pub fn posterior_k_mode(chain: &Chain) -> Result<(usize, Vec<(usize, f64)>)> {
    let post = chain.post_burn();
    if post.is_empty() {
        return Err(Error::EmptyInput("no post-burn-in samples"));
    }
    let mut counts = std::collections::BTreeMap::new();
    for s in post {
        *counts.entry(s.k).or_insert(0usize) += 1;
    }
    let total = post.len() as f64;
    let pmf: Vec<(usize, f64)> = counts
        .iter()
        .map(|(&k, &c)| (k, c as f64 / total))
        .collect();
    let mode = *counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k)
        .expect("nonempty");
    Ok((mode, pmf))
}

/// Point estimates and equal-tailed intervals for one replicate, plus the
/// hard labels used for alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateIntervals {
    pub pi_mean: Vec<f64>,
    pub pi_lo: Vec<f64>,
    pub pi_hi: Vec<f64>,
    pub rho_mean: Vec<Vec<f64>>,
    pub rho_lo: Vec<Vec<f64>>,
    pub rho_hi: Vec<Vec<f64>>,
    pub hard_labels: Labels,
}

/// Per-parameter coverage rates across replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replicates: usize,
    pub pi: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    /// Aligned point-estimate means across replicates, for the same table.
    pub pi_mean: Vec<f64>,
    pub rho_mean: Vec<Vec<f64>>,
}

/// Align each replicate to the truth by best agreement of its hard labels
/// with the true labels, then count interval coverage per parameter. The
/// same permutation is applied to the point estimates and both interval
/// ends of a replicate.
pub fn coverage_eval(
    replicates: &[(ReplicateIntervals, Labels)],
    truth: &MixtureParams,
) -> Result<CoverageReport> {
    if replicates.is_empty() {
        return Err(Error::EmptyInput("no replicates"));
    }
    let k = truth.k();
    let mut pi_hits = vec![0usize; k];
    let mut rho_hits = vec![vec![0usize; k]; k];
    let mut pi_sum = vec![0.0; k];
    let mut rho_sum = vec![vec![0.0; k]; k];
    for (rep, true_labels) in replicates {
        if rep.pi_mean.len() != k {
            return Err(Error::LengthMismatch {
                left: rep.pi_mean.len(),
                right: k,
            });
        }
        if rep.hard_labels.len() != true_labels.len() {
            return Err(Error::LengthMismatch {
                left: rep.hard_labels.len(),
                right: true_labels.len(),
            });
        }
        let perm = best_agreement_perm(&rep.hard_labels, true_labels, k);
        // perm maps replicate classes onto truth classes.
        for l in 0..k {
            let to = perm[l];
            pi_sum[to] += rep.pi_mean[l];
            if rep.pi_lo[l] <= truth.pi[to] && truth.pi[to] <= rep.pi_hi[l] {
                pi_hits[to] += 1;
            }
        }
        for m in 0..k {
            for r in 0..k {
                let (tm, tr) = (perm[m], perm[r]);
                rho_sum[tm][tr] += rep.rho_mean[m][r];
                if rep.rho_lo[m][r] <= truth.rho[tm][tr] && truth.rho[tm][tr] <= rep.rho_hi[m][r] {
                    rho_hits[tm][tr] += 1;
                }
            }
        }
    }
    let n = replicates.len() as f64;
    Ok(CoverageReport {
        replicates: replicates.len(),
        pi: pi_hits.iter().map(|&h| h as f64 / n).collect(),
        rho: rho_hits
            .iter()
            .map(|row| row.iter().map(|&h| h as f64 / n).collect())
            .collect(),
        pi_mean: pi_sum.iter().map(|&s| s / n).collect(),
        rho_mean: rho_sum
            .iter()
            .map(|row| row.iter().map(|&s| s / n).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::ChainSample;

    fn entry(k: usize, value: f64) -> KCriterion {
        KCriterion { k, value }
    }

    #[test]
    fn ties_break_to_smallest_k() {
        let sel = select_k_variational(
            &[entry(1, -10.0), entry(2, -5.0), entry(3, -5.0)],
            Criterion::Elbo,
        )
        .unwrap();
        assert_eq!(sel.chosen_k, 2);
    }

    #[test]
    fn single_entry_selects_itself() {
        let sel = select_k_variational(&[entry(3, -1.0)], Criterion::Icl).unwrap();
        assert_eq!(sel.chosen_k, 3);
    }

    #[test]
    fn gaps_in_the_range_are_rejected() {
        assert!(select_k_variational(&[entry(1, 0.0), entry(3, 1.0)], Criterion::Elbo).is_err());
        assert!(select_k_variational(&[], Criterion::Elbo).is_err());
    }

    fn chain_with_ks(ks: &[usize]) -> Chain {
        let samples: Vec<ChainSample> = ks
            .iter()
            .map(|&k| ChainSample {
                labels: None,
                pi: vec![1.0 / k as f64; k],
                rho: vec![vec![0.5; k]; k],
                k,
                k_plus: k,
                log_joint: 0.0,
            })
            .collect();
        Chain::from_samples(samples, 0, 0, 1).unwrap()
    }

    #[test]
    fn k_mode_degenerate_chain() {
        let (mode, pmf) = posterior_k_mode(&chain_with_ks(&[2, 2, 2])).unwrap();
        assert_eq!(mode, 2);
        assert_eq!(pmf, vec![(2, 1.0)]);
    }

    #[test]
    fn k_mode_counting() {
        let (mode, pmf) = posterior_k_mode(&chain_with_ks(&[2, 2, 3])).unwrap();
        assert_eq!(mode, 2);
        assert!((pmf[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((pmf[1].1 - 1.0 / 3.0).abs() < 1e-15);
    }

    fn rep(
        pi_mean: Vec<f64>,
        half_width: f64,
        hard: Labels,
    ) -> ReplicateIntervals {
        let k = pi_mean.len();
        let rho_mean = vec![vec![0.5; k]; k];
        ReplicateIntervals {
            pi_lo: pi_mean.iter().map(|m| m - half_width).collect(),
            pi_hi: pi_mean.iter().map(|m| m + half_width).collect(),
            pi_mean,
            rho_lo: rho_mean
                .iter()
                .map(|row| row.iter().map(|m| m - half_width).collect())
                .collect(),
            rho_hi: rho_mean
                .iter()
                .map(|row| row.iter().map(|m| m + half_width).collect())
                .collect(),
            rho_mean,
            hard_labels: hard,
        }
    }

    #[test]
    fn full_intervals_always_cover() {
        let truth = MixtureParams::new(vec![0.6, 0.4], vec![vec![0.2; 2]; 2]).unwrap();
        let labels: Labels = vec![0, 0, 1, 1];
        let reps = vec![(rep(vec![0.5, 0.5], 1.0, labels.clone()), labels)];
        let report = coverage_eval(&reps, &truth).unwrap();
        assert_eq!(report.pi, vec![1.0, 1.0]);
        assert!(report.rho.iter().flatten().all(|&c| c == 1.0));
    }

    #[test]
    fn degenerate_intervals_cover_only_at_truth() {
        let truth = MixtureParams::new(vec![0.6, 0.4], vec![vec![0.5; 2]; 2]).unwrap();
        let labels: Labels = vec![0, 0, 1, 1];
        // Point intervals exactly at the truth.
        let exact = rep(vec![0.6, 0.4], 0.0, labels.clone());
        let off = rep(vec![0.7, 0.5], 0.0, labels.clone());
        let report = coverage_eval(
            &[(exact, labels.clone()), (off, labels)],
            &truth,
        )
        .unwrap();
        assert_eq!(report.pi, vec![0.5, 0.5]);
    }

    #[test]
    fn coverage_alignment_uses_hard_labels() {
        // A replicate reported in swapped orientation still covers after
        // alignment.
        let truth = MixtureParams::new(
            vec![0.7, 0.3],
            vec![vec![0.9, 0.2], vec![0.4, 0.1]],
        )
        .unwrap();
        let true_labels: Labels = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let swapped_labels: Labels = true_labels.iter().map(|&c| 1 - c).collect();
        let mut swapped = rep(vec![0.3, 0.7], 0.05, swapped_labels);
        swapped.rho_mean = vec![vec![0.1, 0.4], vec![0.2, 0.9]];
        swapped.rho_lo = swapped
            .rho_mean
            .iter()
            .map(|row| row.iter().map(|m| m - 0.05).collect())
            .collect();
        swapped.rho_hi = swapped
            .rho_mean
            .iter()
            .map(|row| row.iter().map(|m| m + 0.05).collect())
            .collect();
        let report = coverage_eval(&[(swapped, true_labels)], &truth).unwrap();
        assert_eq!(report.pi, vec![1.0, 1.0]);
        assert!(report.rho.iter().flatten().all(|&c| c == 1.0));
        assert!((report.pi_mean[0] - 0.7).abs() < 1e-12);
        assert!((report.rho_mean[0][1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn missing_truth_dimensions_error() {
        let truth = MixtureParams::new(vec![1.0], vec![vec![0.5]]).unwrap();
        let labels: Labels = vec![0, 0];
        let reps = vec![(rep(vec![0.5, 0.5], 0.1, labels.clone()), labels)];
        assert!(coverage_eval(&reps, &truth).is_err());
        assert!(coverage_eval(&[], &truth).is_err());
    }
}
