//! Bayesian inference for the reciprocity mixture: a fixed-K Gibbs sampler
//! and a telescoping sampler that treats the number of classes as unknown.
//!
//! Conjugacy does the heavy lifting. Conditional on labels, every reciprocity
//! entry has a Beta posterior over its reciprocated / unanswered counts and
//! the class proportions have a Dirichlet posterior over class counts. The
//! label conditional multiplies the class prior by the reciprocation factors
//! of every incident event; self-loop events count once, on the source side.
//! The telescoping sampler additionally samples the number of components
//! given the partition, using a beta-negative-binomial prior.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::align::{apply_perm, best_agreement_perm};
use crate::error::Error;
use crate::graph::{EventLog, Incidence, Labels, NodeId, Scenario};
use crate::params::MixtureParams;
use crate::specfn::{ln_beta, ln_gamma, weighted_ln};
use crate::Result;

/// Prior configuration: Beta(a, b) on every reciprocity entry, symmetric
/// Dirichlet(eta) on the proportions, and a beta-negative-binomial prior on
/// `K - 1` for the telescoping sampler, truncated at `k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub a: f64,
    pub b: f64,
    pub eta: f64,
    pub bnb: (f64, f64, f64),
    pub k_max: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            a: 0.5,
            b: 0.5,
            eta: 0.5,
            bnb: (1.0, 4.0, 3.0),
            k_max: 20,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let (c1, c2, c3) = self.bnb;
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("eta", self.eta),
            ("bnb c1", c1),
            ("bnb c2", c2),
            ("bnb c3", c3),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k_max < 1 {
            return Err(Error::InvalidParams("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// One sampler iterate. Labels are optional because long chains over large
/// graphs are routinely run without storing them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSample {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    pub pi: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub k: usize,
    /// Number of filled (nonempty) components.
    pub k_plus: usize,
    /// Unnormalized log joint density of the iterate, used to pick alignment
    /// references.
    pub log_joint: f64,
}

/// An ordered run of sampler iterates.
#[derive(Debug, Clone)]
pub struct Chain {
    pub samples: Vec<ChainSample>,
    pub burn_in: usize,
    pub rng_seed: u64,
    pub n_nodes: usize,
    /// Post-burn-in label counts per node and class (class columns sized by
    /// the largest K seen), kept even when per-sample labels are not.
    label_counts: Vec<u32>,
    label_k: usize,
}

impl Chain {
    /// Assemble a chain from already-materialized samples, rebuilding the
    /// post-burn-in label tally from whatever labels the samples carry.
    pub fn from_samples(
        samples: Vec<ChainSample>,
        burn_in: usize,
        rng_seed: u64,
        n_nodes: usize,
    ) -> Result<Self> {
        if samples.is_empty() || burn_in >= samples.len() {
            return Err(Error::InvalidParams(format!(
                "burn-in {burn_in} must be below the sample count {}",
                samples.len()
            )));
        }
        let label_k = samples.iter().map(|s| s.k).max().unwrap_or(1);
        let mut label_counts = vec![0u32; n_nodes * label_k];
        for s in &samples[burn_in..] {
            if let Some(labels) = &s.labels {
                for (v, &c) in labels.iter().enumerate() {
                    label_counts[v * label_k + c as usize] += 1;
                }
            }
        }
        Ok(Chain {
            samples,
            burn_in,
            rng_seed,
            n_nodes,
            label_counts,
            label_k,
        })
    }

    pub fn post_burn(&self) -> &[ChainSample] {
        &self.samples[self.burn_in..]
    }

    /// Post-burn-in mean of the log joint density. Dominated local modes sit
    /// hundreds of nats below the main one, so this cleanly ranks chains
    /// that ended up in different basins.
    pub fn mean_log_joint(&self) -> f64 {
        let post = self.post_burn();
        post.iter().map(|s| s.log_joint).sum::<f64>() / post.len() as f64
    }

    /// Most frequent post-burn-in class per node (ties to the smaller class).
    pub fn modal_labels(&self) -> Labels {
        let k = self.label_k;
        (0..self.n_nodes)
            .map(|v| {
                let row = &self.label_counts[v * k..(v + 1) * k];
                let mut best = 0usize;
                for c in 1..k {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best as u16
            })
            .collect()
    }
}

/// Sampling options shared by both samplers.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub iterations: usize,
    /// Iterations discarded from the front; defaults to half.
    pub burn_in: Option<usize>,
    pub store_labels: bool,
}

impl RunOptions {
    pub fn new(iterations: usize) -> Self {
        RunOptions {
            iterations,
            burn_in: None,
            store_labels: true,
        }
    }

    pub fn burn(mut self, burn_in: usize) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    pub fn store_labels(mut self, yes: bool) -> Self {
        self.store_labels = yes;
        self
    }

    fn resolve_burn(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 2)
    }
}

/// Shared sampler state: labels plus current mixture parameters.
struct SamplerCore {
    inc: Incidence,
    n_nodes: usize,
    /// Per-node class counts over all nodes (seed nodes included).
    class_counts: Vec<u64>,
    labels: Labels,
    pi: Vec<f64>,
    rho: Vec<f64>, // row-major k x k, rho[m * k + r]
    k: usize,
    prior: PriorConfig,
    rng: ChaCha8Rng,
    // Scratch buffers reused across sweeps.
    log_pi: Vec<f64>,
    log_rho: Vec<f64>,
    log_1m_rho: Vec<f64>,
    weights: Vec<f64>,
    src1: Vec<f64>,
    src0: Vec<f64>,
    tgt1: Vec<f64>,
    tgt0: Vec<f64>,
}

fn draw_beta<R: Rng>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("positive shapes").sample(rng)
}

fn draw_dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive shape")
                .sample(rng)
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / total).collect()
}

fn draw_categorical_from_log<R: Rng>(logw: &[f64], rng: &mut R) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // Every option impossible; fall back to uniform.
        return rng.random_range(0..logw.len());
    }
    let mut total = 0.0;
    let mut probs = vec![0.0; logw.len()];
    for (i, &lw) in logw.iter().enumerate() {
        let w = (lw - max).exp();
        probs[i] = w;
        total += w;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in probs.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    logw.len() - 1
}

impl SamplerCore {
    fn init(log: &EventLog, k: usize, prior: PriorConfig, rng_seed: u64) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParams("K must be at least 1".into()));
        }
        prior.validate()?;
        let inc = Incidence::build(log);
        let n_nodes = inc.nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let pi = draw_dirichlet(&vec![prior.eta; k], &mut rng);
        let mut rho = vec![0.0; k * k];
        for cell in rho.iter_mut() {
            *cell = draw_beta(prior.a, prior.b, &mut rng);
        }
        let mut labels = vec![0u16; n_nodes];
        let mut class_counts = vec![0u64; k];
        for l in labels.iter_mut() {
            let mut u = rng.random::<f64>();
            let mut cls = k - 1;
            for (i, &p) in pi.iter().enumerate() {
                if u < p {
                    cls = i;
                    break;
                }
                u -= p;
            }
            *l = cls as u16;
            class_counts[cls] += 1;
        }
        Ok(SamplerCore {
            inc,
            n_nodes,
            class_counts,
            labels,
            pi,
            rho,
            k,
            prior,
            rng,
            log_pi: vec![0.0; k],
            log_rho: vec![0.0; k * k],
            log_1m_rho: vec![0.0; k * k],
            weights: vec![0.0; k],
            src1: vec![0.0; k],
            src0: vec![0.0; k],
            tgt1: vec![0.0; k],
            tgt0: vec![0.0; k],
        })
    }

    fn refresh_log_tables(&mut self) {
        let k = self.k;
        self.log_pi.resize(k, 0.0);
        self.log_rho.resize(k * k, 0.0);
        self.log_1m_rho.resize(k * k, 0.0);
        self.weights.resize(k, 0.0);
        self.src1.resize(k, 0.0);
        self.src0.resize(k, 0.0);
        self.tgt1.resize(k, 0.0);
        self.tgt0.resize(k, 0.0);
        for l in 0..k {
            self.log_pi[l] = self.pi[l].ln();
        }
        for i in 0..k * k {
            self.log_rho[i] = self.rho[i].ln();
            self.log_1m_rho[i] = (1.0 - self.rho[i]).ln();
        }
    }

    /// Resample every label from its conditional given the current mixture.
    fn label_sweep(&mut self) {
        self.refresh_log_tables();
        let k = self.k;
        for v in 1..=(self.n_nodes as NodeId) {
            for c in 0..k {
                self.src1[c] = 0.0;
                self.src0[c] = 0.0;
                self.tgt1[c] = 0.0;
                self.tgt0[c] = 0.0;
            }
            for &(other, flag) in self.inc.as_source(v) {
                let m = self.labels[(other - 1) as usize] as usize;
                if flag {
                    self.src1[m] += 1.0;
                } else {
                    self.src0[m] += 1.0;
                }
            }
            for &(other, flag) in self.inc.as_target(v) {
                let r = self.labels[(other - 1) as usize] as usize;
                if flag {
                    self.tgt1[r] += 1.0;
                } else {
                    self.tgt0[r] += 1.0;
                }
            }
            let (self1, self0) = self.inc.self_loops(v);
            for l in 0..k {
                let mut w = self.log_pi[l];
                for c in 0..k {
                    // Source side: this node answered with rho[c][l]; target
                    // side: it was answered with rho[l][c].
                    let s1 = self.src1[c];
                    let s0 = self.src0[c];
                    if s1 > 0.0 {
                        w += s1 * self.log_rho[c * k + l];
                    }
                    if s0 > 0.0 {
                        w += s0 * self.log_1m_rho[c * k + l];
                    }
                    let t1 = self.tgt1[c];
                    let t0 = self.tgt0[c];
                    if t1 > 0.0 {
                        w += t1 * self.log_rho[l * k + c];
                    }
                    if t0 > 0.0 {
                        w += t0 * self.log_1m_rho[l * k + c];
                    }
                }
                if self1 > 0 {
                    w += self1 as f64 * self.log_rho[l * k + l];
                }
                if self0 > 0 {
                    w += self0 as f64 * self.log_1m_rho[l * k + l];
                }
                self.weights[l] = w;
            }
            let new = draw_categorical_from_log(&self.weights, &mut self.rng) as u16;
            let old = self.labels[(v - 1) as usize];
            if new != old {
                self.class_counts[old as usize] -= 1;
                self.class_counts[new as usize] += 1;
                self.labels[(v - 1) as usize] = new;
            }
        }
    }

    /// Reciprocation count matrices under the current labels. Self-loops
    /// count once, in the diagonal cell of their node's class.
    fn reciprocity_counts(&self) -> (Vec<u64>, Vec<u64>) {
        let k = self.k;
        let mut n1 = vec![0u64; k * k];
        let mut n0 = vec![0u64; k * k];
        for v in 1..=(self.n_nodes as NodeId) {
            let r = self.labels[(v - 1) as usize] as usize;
            for &(other, flag) in self.inc.as_source(v) {
                let m = self.labels[(other - 1) as usize] as usize;
                if flag {
                    n1[m * k + r] += 1;
                } else {
                    n0[m * k + r] += 1;
                }
            }
            let (s1, s0) = self.inc.self_loops(v);
            n1[r * k + r] += s1 as u64;
            n0[r * k + r] += s0 as u64;
        }
        (n1, n0)
    }

    fn resample_rho(&mut self, n1: &[u64], n0: &[u64], upto: usize) {
        let k = self.k;
        for m in 0..upto {
            for r in 0..upto {
                self.rho[m * k + r] = draw_beta(
                    self.prior.a + n1[m * k + r] as f64,
                    self.prior.b + n0[m * k + r] as f64,
                    &mut self.rng,
                );
            }
        }
    }

    fn resample_pi(&mut self) {
        let alpha: Vec<f64> = (0..self.k)
            .map(|r| self.prior.eta + self.class_counts[r] as f64)
            .collect();
        self.pi = draw_dirichlet(&alpha, &mut self.rng);
    }

    /// Unnormalized log joint of the current iterate: priors, all-node class
    /// factors and reciprocation factors.
    fn log_joint(&self, n1: &[u64], n0: &[u64]) -> f64 {
        let k = self.k;
        let mut lj = ln_gamma(k as f64 * self.prior.eta) - k as f64 * ln_gamma(self.prior.eta);
        for r in 0..k {
            lj += (self.prior.eta - 1.0) * self.pi[r].ln();
            lj += weighted_ln(self.class_counts[r] as f64, self.pi[r]);
        }
        let lb = ln_beta(self.prior.a, self.prior.b);
        for m in 0..k {
            for r in 0..k {
                let rho = self.rho[m * k + r];
                lj += (self.prior.a - 1.0) * rho.ln() + (self.prior.b - 1.0) * (1.0 - rho).ln()
                    - lb;
                lj += weighted_ln(n1[m * k + r] as f64, rho);
                lj += weighted_ln(n0[m * k + r] as f64, 1.0 - rho);
            }
        }
        lj
    }

    fn rho_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|m| self.rho[m * self.k..(m + 1) * self.k].to_vec())
            .collect()
    }

    fn snapshot(&self, store_labels: bool, n1: &[u64], n0: &[u64], k_plus: usize) -> ChainSample {
        ChainSample {
            labels: store_labels.then(|| self.labels.clone()),
            pi: self.pi.clone(),
            rho: self.rho_matrix(),
            k: self.k,
            k_plus,
            log_joint: self.log_joint(n1, n0),
        }
    }
}

/// Fixed-K Gibbs sampler with stepwise access.
pub struct GibbsSampler {
    core: SamplerCore,
}

impl GibbsSampler {
    pub fn new(log: &EventLog, k: usize, prior: PriorConfig, rng_seed: u64) -> Result<Self> {
        Ok(GibbsSampler {
            core: SamplerCore::init(log, k, prior, rng_seed)?,
        })
    }

    /// One full sweep; returns the recorded iterate.
    pub fn sweep(&mut self, store_labels: bool) -> ChainSample {
        self.core.label_sweep();
        let (n1, n0) = self.core.reciprocity_counts();
        let k = self.core.k;
        self.core.resample_rho(&n1, &n0, k);
        self.core.resample_pi();
        let k_plus = self.core.class_counts.iter().filter(|&&c| c > 0).count();
        self.core.snapshot(store_labels, &n1, &n0, k_plus)
    }

    pub fn labels(&self) -> &[u16] {
        &self.core.labels
    }
}

fn collect_chain(
    mut step: impl FnMut(bool) -> ChainSample,
    n_nodes: usize,
    k_cols: usize,
    opts: &RunOptions,
    rng_seed: u64,
) -> Result<Chain> {
    if opts.iterations < 1 {
        return Err(Error::InvalidParams("need at least one iteration".into()));
    }
    let burn_in = opts.resolve_burn();
    if burn_in >= opts.iterations {
        return Err(Error::InvalidParams(format!(
            "burn-in {burn_in} must be below the iteration count {}",
            opts.iterations
        )));
    }
    let mut samples = Vec::with_capacity(opts.iterations);
    let mut label_counts = vec![0u32; n_nodes * k_cols];
    for i in 0..opts.iterations {
        // Labels are always tracked internally for the modal tally; per-sample
        // storage is what `store_labels` controls.
        let sample = step(true);
        if i >= burn_in {
            if let Some(labels) = &sample.labels {
                for (v, &c) in labels.iter().enumerate() {
                    label_counts[v * k_cols + c as usize] += 1;
                }
            }
        }
        let sample = if opts.store_labels {
            sample
        } else {
            ChainSample {
                labels: None,
                ..sample
            }
        };
        samples.push(sample);
    }
    Ok(Chain {
        samples,
        burn_in,
        rng_seed,
        n_nodes,
        label_counts,
        label_k: k_cols,
    })
}

/// Run the fixed-K Gibbs sampler.
pub fn gibbs_run(
    log: &EventLog,
    k: usize,
    prior: PriorConfig,
    opts: RunOptions,
    rng_seed: u64,
) -> Result<Chain> {
    let mut sampler = GibbsSampler::new(log, k, prior, rng_seed)?;
    let n_nodes = sampler.core.n_nodes;
    collect_chain(|store| sampler.sweep(store), n_nodes, k, &opts, rng_seed)
}

/// Run several independently seeded chains and keep the one with the highest
/// post-burn-in mean log joint density.
///
/// Single-site label sweeps can lodge in a dominated local basin from an
/// unlucky prior initialization; independent restarts escape it with high
/// probability and the mean joint density separates basins unambiguously.
pub fn gibbs_run_multistart(
    log: &EventLog,
    k: usize,
    prior: PriorConfig,
    opts: RunOptions,
    master_seed: u64,
    starts: usize,
) -> Result<Chain> {
    if starts == 0 {
        return Err(Error::InvalidParams("need at least one start".into()));
    }
    let seeds = derive_seeds(master_seed, starts);
    let chains = crate::exec::map_slice(&seeds, crate::exec::ExecMode::Parallel, |&s| {
        gibbs_run(log, k, prior, opts, s)
    });
    let chains: Vec<Chain> = chains.into_iter().collect::<Result<_>>()?;
    Ok(chains
        .into_iter()
        .max_by(|a, b| {
            a.mean_log_joint()
                .partial_cmp(&b.mean_log_joint())
                .expect("finite joint")
        })
        .expect("nonempty"))
}

/// Conditional label distribution of one node given all other labels and the
/// mixture parameters, normalized to probabilities via max-subtraction.
/// Exposed for direct testing; the samplers compute the same weights
/// incrementally.
pub fn conditional_label_weights(
    log: &EventLog,
    v: NodeId,
    labels: &[u16],
    mix: &MixtureParams,
) -> Result<Vec<f64>> {
    let n_nodes = log.final_nodes();
    if labels.len() != n_nodes {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n_nodes,
        });
    }
    if v < 1 || (v as usize) > n_nodes {
        return Err(Error::InvalidParams(format!("node {v} out of range")));
    }
    let k = mix.k();
    let mut logw = vec![0.0; k];
    for (l, lw) in logw.iter_mut().enumerate() {
        *lw = mix.pi[l].ln();
    }
    for ev in log.events() {
        if ev.source == v && ev.target == v {
            for (l, lw) in logw.iter_mut().enumerate() {
                let rho = mix.rho[l][l];
                *lw += if ev.reciprocated { rho.ln() } else { (1.0 - rho).ln() };
            }
        } else if ev.source == v {
            let m = labels[(ev.target - 1) as usize] as usize;
            for (l, lw) in logw.iter_mut().enumerate() {
                let rho = mix.rho[m][l];
                *lw += if ev.reciprocated { rho.ln() } else { (1.0 - rho).ln() };
            }
        } else if ev.target == v {
            let r = labels[(ev.source - 1) as usize] as usize;
            for (l, lw) in logw.iter_mut().enumerate() {
                let rho = mix.rho[l][r];
                *lw += if ev.reciprocated { rho.ln() } else { (1.0 - rho).ln() };
            }
        }
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logw.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(probs)
}

/// Log pmf of the beta-negative-binomial prior on the component count,
/// supported on `K = 1, 2, ...`.
pub fn bnb_log_pmf(k: usize, c1: f64, c2: f64, c3: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParams("component count starts at 1".into()));
    }
    for (name, v) in [("c1", c1), ("c2", c2), ("c3", c3)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParams(format!("{name} must be positive")));
        }
    }
    let kf = k as f64;
    Ok(ln_gamma(c1 + kf - 1.0) + ln_beta(c1 + c2, kf - 1.0 + c3)
        - ln_gamma(c1)
        - ln_gamma(kf)
        - ln_beta(c2, c3))
}

/// Telescoping sampler over labels, mixture parameters and the component
/// count.
pub struct TelescopingSampler {
    core: SamplerCore,
}

impl TelescopingSampler {
    pub fn new(log: &EventLog, k_init: usize, prior: PriorConfig, rng_seed: u64) -> Result<Self> {
        if k_init < 1 || k_init > prior.k_max {
            return Err(Error::InvalidParams(format!(
                "k_init {k_init} must lie in 1..=k_max ({})",
                prior.k_max
            )));
        }
        Ok(TelescopingSampler {
            core: SamplerCore::init(log, k_init, prior, rng_seed)?,
        })
    }

    /// Relabel classes so filled components occupy 0..k_plus, preserving the
    /// relative order of filled (and of empty) class indices. Returns k_plus.
    fn compact_labels(&mut self) -> usize {
        let k = self.core.k;
        let mut perm = vec![0usize; k];
        let mut next_filled = 0usize;
        for c in 0..k {
            if self.core.class_counts[c] > 0 {
                perm[c] = next_filled;
                next_filled += 1;
            }
        }
        let k_plus = next_filled;
        let mut next_empty = k_plus;
        for c in 0..k {
            if self.core.class_counts[c] == 0 {
                perm[c] = next_empty;
                next_empty += 1;
            }
        }
        // Apply the permutation to labels, counts, pi and rho.
        for l in self.core.labels.iter_mut() {
            *l = perm[*l as usize] as u16;
        }
        let mut counts = vec![0u64; k];
        let mut pi = vec![0.0; k];
        let mut rho = vec![0.0; k * k];
        for c in 0..k {
            counts[perm[c]] = self.core.class_counts[c];
            pi[perm[c]] = self.core.pi[c];
        }
        for m in 0..k {
            for r in 0..k {
                rho[perm[m] * k + perm[r]] = self.core.rho[m * k + r];
            }
        }
        self.core.class_counts = counts;
        self.core.pi = pi;
        self.core.rho = rho;
        k_plus
    }

    /// Draw the component count given the partition, over `k_plus..=k_max`.
    fn sample_k(&mut self, k_plus: usize) -> usize {
        let prior = self.core.prior;
        let (c1, c2, c3) = prior.bnb;
        let v = self.core.n_nodes as f64;
        let lo = k_plus.max(1);
        let logw: Vec<f64> = (lo..=prior.k_max)
            .map(|k| {
                let kf = k as f64;
                bnb_log_pmf(k, c1, c2, c3).expect("validated prior")
                    + ln_gamma(kf + 1.0)
                    - ln_gamma(kf - k_plus as f64 + 1.0)
                    + ln_gamma(prior.eta * kf)
                    - ln_gamma(v + prior.eta * kf)
            })
            .collect();
        lo + draw_categorical_from_log(&logw, &mut self.core.rng)
    }

    fn resize_to(&mut self, k_new: usize, k_plus: usize) {
        let k_old = self.core.k;
        if k_new != k_old {
            let mut rho = vec![0.0; k_new * k_new];
            let keep = k_new.min(k_old);
            for m in 0..keep {
                for r in 0..keep {
                    rho[m * k_new + r] = self.core.rho[m * k_old + r];
                }
            }
            self.core.rho = rho;
            self.core.pi.resize(k_new, 0.0);
            self.core.class_counts.resize(k_new, 0);
            self.core.k = k_new;
        }
        // Empty components always carry fresh prior draws.
        let k = self.core.k;
        for m in 0..k {
            for r in 0..k {
                if m >= k_plus || r >= k_plus {
                    self.core.rho[m * k + r] =
                        draw_beta(self.core.prior.a, self.core.prior.b, &mut self.core.rng);
                }
            }
        }
    }

    pub fn sweep(&mut self, store_labels: bool) -> ChainSample {
        self.core.label_sweep();
        let k_plus = self.compact_labels();
        let (n1, n0) = self.core.reciprocity_counts();
        self.core.resample_rho(&n1, &n0, k_plus);
        let k_new = self.sample_k(k_plus);
        self.resize_to(k_new, k_plus);
        self.core.resample_pi();
        // Joint under the current (possibly resized) K.
        let (n1, n0) = self.core.reciprocity_counts();
        let mut sample = self.core.snapshot(store_labels, &n1, &n0, k_plus);
        let (c1, c2, c3) = self.core.prior.bnb;
        sample.log_joint += bnb_log_pmf(k_new, c1, c2, c3).expect("validated prior");
        sample
    }
}

/// Run the telescoping sampler.
pub fn telescoping_run(
    log: &EventLog,
    k_init: usize,
    prior: PriorConfig,
    opts: RunOptions,
    rng_seed: u64,
) -> Result<Chain> {
    let mut sampler = TelescopingSampler::new(log, k_init, prior, rng_seed)?;
    let n_nodes = sampler.core.n_nodes;
    let k_cols = prior.k_max;
    collect_chain(
        |store| sampler.sweep(store),
        n_nodes,
        k_cols,
        &opts,
        rng_seed,
    )
}

/// Point summary of a chain: per-parameter means and equal-tailed intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub k: usize,
    pub level: f64,
    pub pi_mean: Vec<f64>,
    pub pi_lo: Vec<f64>,
    pub pi_hi: Vec<f64>,
    pub rho_mean: Vec<Vec<f64>>,
    pub rho_lo: Vec<Vec<f64>>,
    pub rho_hi: Vec<Vec<f64>>,
    pub modal_labels: Labels,
    /// Post-burn-in samples entering the summary (those with the modal K).
    pub retained: usize,
    pub aligned: bool,
}

pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Summarize the post-burn-in samples of a chain.
///
/// With varying K only the samples at the post-burn-in modal K enter. With
/// `align = true` (which needs stored labels) every sample is first relabeled
/// to agree as much as possible with the highest-joint-density sample.
pub fn posterior_summary(chain: &Chain, level: f64, align: bool) -> Result<PosteriorSummary> {
    if chain.post_burn().len() < 2 {
        return Err(Error::EmptyInput("need at least two post-burn-in samples"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidParams(format!("level {level} not in (0, 1)")));
    }
    // Modal K, smallest on ties.
    let mut k_freq = std::collections::BTreeMap::new();
    for s in chain.post_burn() {
        *k_freq.entry(s.k).or_insert(0usize) += 1;
    }
    let k = *k_freq
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(k, _)| k)
        .expect("nonempty");
    let retained: Vec<&ChainSample> = chain.post_burn().iter().filter(|s| s.k == k).collect();

    let perms: Vec<Option<Vec<usize>>> = if align {
        let reference = retained
            .iter()
            .max_by(|a, b| a.log_joint.partial_cmp(&b.log_joint).unwrap())
            .expect("nonempty");
        let ref_labels = reference
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("alignment requires stored labels".into()))?
            .clone();
        retained
            .iter()
            .map(|s| {
                s.labels
                    .as_ref()
                    .map(|l| best_agreement_perm(l, &ref_labels, k))
            })
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().map(Some).collect())
            .ok_or_else(|| Error::InvalidParams("alignment requires stored labels".into()))?
    } else {
        vec![None; retained.len()]
    };

    let m = retained.len();
    let mut pi_cols = vec![Vec::with_capacity(m); k];
    let mut rho_cols = vec![Vec::with_capacity(m); k * k];
    let mut label_counts = vec![0u32; chain.n_nodes * k];
    for (s, perm) in retained.iter().zip(&perms) {
        let (pi, rho, labels) = match perm {
            Some(p) => {
                let permuted = MixtureParams {
                    pi: s.pi.clone(),
                    rho: s.rho.clone(),
                }
                .permuted(p);
                let labels = s.labels.as_ref().map(|l| apply_perm(l, p));
                (permuted.pi, permuted.rho, labels)
            }
            None => (s.pi.clone(), s.rho.clone(), s.labels.clone()),
        };
        for r in 0..k {
            pi_cols[r].push(pi[r]);
        }
        for mm in 0..k {
            for r in 0..k {
                rho_cols[mm * k + r].push(rho[mm][r]);
            }
        }
        if align {
            let labels = labels.expect("checked above");
            for (v, &c) in labels.iter().enumerate() {
                label_counts[v * k + c as usize] += 1;
            }
        }
    }

    let (p_lo, p_hi) = ((1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0);
    let summarize = |col: &mut Vec<f64>| {
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (mean, quantile(col, p_lo), quantile(col, p_hi))
    };
    let mut pi_mean = vec![0.0; k];
    let mut pi_lo = vec![0.0; k];
    let mut pi_hi = vec![0.0; k];
    for r in 0..k {
        let (mu, lo, hi) = summarize(&mut pi_cols[r]);
        pi_mean[r] = mu;
        pi_lo[r] = lo;
        pi_hi[r] = hi;
    }
    let mut rho_mean = vec![vec![0.0; k]; k];
    let mut rho_lo = vec![vec![0.0; k]; k];
    let mut rho_hi = vec![vec![0.0; k]; k];
    for mm in 0..k {
        for r in 0..k {
            let (mu, lo, hi) = summarize(&mut rho_cols[mm * k + r]);
            rho_mean[mm][r] = mu;
            rho_lo[mm][r] = lo;
            rho_hi[mm][r] = hi;
        }
    }

    let modal_labels = if align {
        (0..chain.n_nodes)
            .map(|v| {
                let row = &label_counts[v * k..(v + 1) * k];
                let mut best = 0usize;
                for c in 1..k {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best as u16
            })
            .collect()
    } else {
        chain.modal_labels()
    };

    Ok(PosteriorSummary {
        k,
        level,
        pi_mean,
        pi_lo,
        pi_hi,
        rho_mean,
        rho_lo,
        rho_hi,
        modal_labels,
        retained: m,
        aligned: align,
    })
}

/// Derive per-chain seeds from a master seed.
pub fn derive_seeds(master: u64, chains: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..chains).map(|_| rng.random()).collect()
}

/// Number of arrival (non-seed) events; the class-count identity used by the
/// arrival term of the complete-data likelihood.
pub fn arrival_count(log: &EventLog) -> usize {
    log.events()
        .iter()
        .filter(|e| e.scenario != Scenario::Internal)
        .count()
}
