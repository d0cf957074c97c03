//! Heavy-tail tooling: minimum-distance tail threshold, power-law exponent,
//! angular sets and one-dimensional k-means.
//!
//! The threshold selector scans every distinct degree value with at least ten
//! tail points, fits the continuity-corrected exponent
//! `1 + n / sum(ln(x_i / (x_min - 0.5)))` and keeps the candidate minimizing
//! the Kolmogorov-Smirnov distance between the fitted and empirical tail
//! distributions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::exec::{map_slice, ExecMode};
use crate::graph::{GraphState, NodeId};
use crate::Result;

/// Minimum tail size for a candidate threshold; smaller tails make the
/// Kolmogorov-Smirnov distance pure noise.
pub const MIN_TAIL: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    /// Chosen threshold: the tail is `degree >= threshold`.
    pub threshold: u64,
    /// Continuity-corrected maximum likelihood exponent of the tail.
    pub exponent: f64,
    /// Kolmogorov-Smirnov distance between fitted and empirical tails.
    pub ks: f64,
    pub tail_size: usize,
}

/// Fitted-versus-empirical Kolmogorov-Smirnov distance for one candidate.
/// `tail` must be the sorted degrees `>= x_min`.
fn ks_distance(tail: &[u64], x_min: u64, exponent: f64) -> f64 {
    let n = tail.len() as f64;
    let shift = x_min as f64 - 0.5;
    let mut worst = 0.0f64;
    let mut i = 0usize;
    while i < tail.len() {
        let x = tail[i];
        let mut j = i;
        while j < tail.len() && tail[j] == x {
            j += 1;
        }
        // Empirical and fitted survival functions at x: P(X >= x).
        let emp = (tail.len() - i) as f64 / n;
        let fit = ((x as f64 - 0.5) / shift).powf(1.0 - exponent);
        let d = (emp - fit).abs();
        if d > worst {
            worst = d;
        }
        i = j;
    }
    worst
}

fn tail_exponent(tail: &[u64], x_min: u64) -> Option<f64> {
    let shift = x_min as f64 - 0.5;
    let s: f64 = tail.iter().map(|&x| (x as f64 / shift).ln()).sum();
    if s <= 0.0 {
        return None; // all tail values equal x_min
    }
    Some(1.0 + tail.len() as f64 / s)
}

/// Minimum-distance tail threshold over a multiset of positive degrees.
pub fn min_distance_threshold(degrees: &[u64]) -> Result<ThresholdFit> {
    min_distance_threshold_with(degrees, ExecMode::default())
}

pub fn min_distance_threshold_with(degrees: &[u64], mode: ExecMode) -> Result<ThresholdFit> {
    let mut sorted: Vec<u64> = degrees.iter().copied().filter(|&d| d > 0).collect();
    sorted.sort_unstable();
    let mut distinct: Vec<u64> = sorted.clone();
    distinct.dedup();
    if distinct.len() < MIN_TAIL {
        return Err(Error::Degenerate(format!(
            "need at least {MIN_TAIL} distinct positive degrees, got {}",
            distinct.len()
        )));
    }
    // Candidates: distinct values whose tail keeps at least MIN_TAIL points.
    let candidates: Vec<u64> = distinct
        .iter()
        .copied()
        .filter(|&c| {
            let start = sorted.partition_point(|&x| x < c);
            sorted.len() - start >= MIN_TAIL
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::Degenerate("no candidate threshold keeps a usable tail".into()));
    }
    let fits = map_slice(&candidates, mode, |&c| {
        let start = sorted.partition_point(|&x| x < c);
        let tail = &sorted[start..];
        tail_exponent(tail, c).map(|exponent| ThresholdFit {
            threshold: c,
            exponent,
            ks: ks_distance(tail, c, exponent),
            tail_size: tail.len(),
        })
    });
    fits.into_iter()
        .flatten()
        .min_by(|a, b| {
            a.ks.partial_cmp(&b.ks)
                .unwrap()
                .then(a.threshold.cmp(&b.threshold))
        })
        .ok_or_else(|| Error::Degenerate("every candidate tail was constant".into()))
}

/// Nodes whose total degree strictly exceeds the threshold, with their
/// out-degree fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularSet {
    pub threshold: u64,
    /// Member node ids, ascending.
    pub members: Vec<NodeId>,
    /// `out / (out + in)` per member, parallel to `members`.
    pub values: Vec<f64>,
}

pub fn angular_set(state: &GraphState, threshold: u64) -> AngularSet {
    let mut members = Vec::new();
    let mut values = Vec::new();
    for v in 1..=(state.nodes() as NodeId) {
        let total = state.in_degree(v) + state.out_degree(v);
        if total > threshold {
            members.push(v);
            values.push(state.out_degree(v) as f64 / total as f64);
        }
    }
    AngularSet {
        threshold,
        members,
        values,
    }
}

/// Lloyd iterations with k-means++ seeding on scalar data. Returns labels
/// aligned to centers sorted ascending; assignment ties break toward the
/// lower center. Deterministic given the seed.
pub fn kmeans_1d(values: &[f64], k: usize, rng_seed: u64) -> Result<(Vec<usize>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be positive".into()));
    }
    if values.len() < k {
        return Err(Error::Degenerate(format!(
            "{} values cannot form {k} clusters",
            values.len()
        )));
    }
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Degenerate(format!(
            "only {} distinct values for {k} clusters",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    // k-means++ over the distinct values; duplicates add nothing but zeros.
    let mut centers = Vec::with_capacity(k);
    centers.push(distinct[rng.random_range(0..distinct.len())]);
    while centers.len() < k {
        let d2: Vec<f64> = distinct
            .iter()
            .map(|&x| {
                centers
                    .iter()
                    .map(|&c| (x - c) * (x - c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = distinct.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        centers.push(distinct[pick]);
    }
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let assign = |centers: &[f64], out: &mut Vec<usize>| {
        out.clear();
        for &x in values {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, &c) in centers.iter().enumerate() {
                let d = (x - c).abs();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            out.push(best);
        }
    };

    let mut labels = Vec::with_capacity(values.len());
    assign(&centers, &mut labels);
    for _ in 0..200 {
        // Means per cluster; empty clusters keep their center.
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&x, &l) in values.iter().zip(&labels) {
            sums[l] += x;
            counts[l] += 1;
        }
        for i in 0..k {
            if counts[i] > 0 {
                centers[i] = sums[i] / counts[i] as f64;
            }
        }
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut next = Vec::with_capacity(values.len());
        assign(&centers, &mut next);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok((labels, centers))
}

/// Within-cluster sum of squared deviations for a labeling.
pub fn kmeans_objective(values: &[f64], labels: &[usize], k: usize) -> f64 {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&x, &l) in values.iter().zip(labels) {
        sums[l] += x;
        counts[l] += 1;
    }
    let mut obj = 0.0;
    for (&x, &l) in values.iter().zip(labels) {
        if counts[l] > 0 {
            let mu = sums[l] / counts[l] as f64;
            obj += (x - mu) * (x - mu);
        }
    }
    obj
}

/// Sample a discrete power-law tail: continuous Pareto rounded to the nearest
/// integer, the standard generator for testing threshold recovery.
pub fn sample_power_law<R: Rng>(x_min: u64, exponent: f64, n: usize, rng: &mut R) -> Vec<u64> {
    let shift = x_min as f64 - 0.5;
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (shift * (1.0 - u).powf(-1.0 / (exponent - 1.0)) + 0.5).floor() as u64
        })
        .collect()
}
