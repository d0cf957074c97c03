//! Inference subcommands: fit-theta, the two samplers, the two variational
//! fits, selection over K and replicate reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use repa_core::graph::{EventLog, Labels};
use repa_core::io;
use repa_core::likelihood;
use repa_core::mcmc::{
    gibbs_run, posterior_summary, telescoping_run, Chain, PriorConfig, PosteriorSummary,
    RunOptions,
};
use repa_core::params::MixtureParams;
use repa_core::select::{posterior_k_mode, select_k_variational, Criterion, KCriterion};
use repa_core::variational::{cavi_run, icl, vem_run, CaviOptions, VemInitKind, VemOptions};

use crate::cmd_data::{echo_config, load_log, prepare_out_dir};
use crate::config::Resolver;
use crate::doc::{
    read_json, truth_block, write_json, FitDoc, KEntry, MethodReport, ReportDoc, SelectionDoc,
    SelectionReport, TruthBlock, TruthParams, SCHEMA_VERSION,
};
use crate::{CommonArgs, LogInputArgs};

/// Run `f` on a rayon pool with the requested thread count, or on the global
/// pool when unset.
fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T>
where
    T: Send,
{
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("building thread pool")?;
            Ok(pool.install(f))
        }
    }
}


/// Record the event-log input paths in the resolved-config echo.
fn record_inputs(r: &mut Resolver, input: &LogInputArgs) -> Result<()> {
    r.required("events", Some(input.events.display().to_string()))?;
    r.required("seed-graph", Some(input.seed_graph.display().to_string()))?;
    Ok(())
}

/// Record the optional truth paths in the resolved-config echo.
fn record_truth(r: &mut Resolver, truth: &TruthArgs) -> Result<()> {
    r.optional("truth", truth.truth.as_ref().map(|p| p.display().to_string()))?;
    r.optional(
        "true-labels",
        truth.true_labels.as_ref().map(|p| p.display().to_string()),
    )?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct TruthArgs {
    /// Ground-truth parameters JSON `{"pi": [...], "rho": [[...]]}`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Ground-truth labels CSV (node,class) for alignment diagnostics.
    #[arg(long)]
    true_labels: Option<PathBuf>,
}

impl TruthArgs {
    fn load(&self) -> Result<(Option<MixtureParams>, Option<Labels>)> {
        let params = match &self.truth {
            Some(p) => {
                let doc: TruthParams = read_json(p)?;
                Some(MixtureParams::new(doc.pi, doc.rho)?)
            }
            None => None,
        };
        let labels = match &self.true_labels {
            Some(p) => Some(io::read_labels_csv(std::io::BufReader::new(
                std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
            ))?),
            None => None,
        };
        Ok((params, labels))
    }
}

fn maybe_truth_block(
    truth: &TruthArgs,
    hard: &[u16],
    k: usize,
    pi: &[f64],
    rho: &[Vec<f64>],
    intervals: Option<(&[f64], &[f64], &[Vec<f64>], &[Vec<f64>])>,
) -> Result<Option<TruthBlock>> {
    let (params, labels) = truth.load()?;
    match labels {
        Some(true_labels) => Ok(Some(truth_block(
            hard,
            &true_labels,
            k,
            pi,
            rho,
            intervals,
            params.as_ref(),
        )?)),
        None => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// fit-theta
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct FitThetaArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: LogInputArgs,
}

#[derive(Serialize)]
struct ThetaDoc {
    schema_version: u32,
    alpha: f64,
    beta: f64,
    delta_in: likelihood::DeltaEstimate,
    delta_out: likelihood::DeltaEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    loglik: Option<f64>,
}

pub fn fit_theta(args: FitThetaArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    record_inputs(&mut r, &args.input)?;
    let log = load_log(&args.input)?;
    let fit = likelihood::fit_theta(&log)?;
    let doc = ThetaDoc {
        schema_version: SCHEMA_VERSION,
        alpha: fit.alpha,
        beta: fit.beta,
        delta_in: fit.delta_in,
        delta_out: fit.delta_out,
        loglik: fit.loglik,
    };
    write_json(&args.common.out_dir.join("theta.json"), &doc)?;
    echo_config(&args.common, "fit-theta", &r)?;
    println!("wrote {}", args.common.out_dir.join("theta.json").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-gibbs / fit-telescope
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct McmcCommonArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: LogInputArgs,
    #[command(flatten)]
    truth: TruthArgs,
    /// Sampler iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Burn-in iterations (default: half of --iters).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Beta prior shape on reciprocities (reciprocated side).
    #[arg(long)]
    a: Option<f64>,
    /// Beta prior shape on reciprocities (unanswered side).
    #[arg(long)]
    b: Option<f64>,
    /// Symmetric Dirichlet prior on class proportions.
    #[arg(long)]
    eta: Option<f64>,
    /// Master RNG seed; chain seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Keep every Nth iterate in the chain files.
    #[arg(long)]
    thin: Option<usize>,
    /// Do not store per-iterate labels (smaller files, no alignment).
    #[arg(long)]
    no_labels: bool,
    /// Align samples to the highest-density iterate before summarizing.
    #[arg(long)]
    align: bool,
    /// Credible interval level.
    #[arg(long)]
    level: Option<f64>,
    /// With several chains: `pool` post-burn-in samples (default) or keep
    /// only the `best` chain by mean log joint density.
    #[arg(long)]
    pick: Option<String>,
}

struct McmcResolved {
    iters: usize,
    burn_in: usize,
    prior: PriorConfig,
    seed: u64,
    chains: usize,
    thin: usize,
    store_labels: bool,
    align: bool,
    level: f64,
    pick_best: bool,
}

fn resolve_mcmc(r: &mut Resolver, args: &McmcCommonArgs) -> Result<McmcResolved> {
    let iters = r.value("iters", args.iters, 5000)?;
    let burn_in = match r.optional("burn-in", args.burn_in)? {
        Some(b) => b,
        None => {
            let b = iters / 2;
            r.value("burn-in", Some(b), b)?
        }
    };
    let prior = PriorConfig {
        a: r.value("a", args.a, 0.5)?,
        b: r.value("b", args.b, 0.5)?,
        eta: r.value("eta", args.eta, 0.5)?,
        ..PriorConfig::default()
    };
    let store_labels = !r.value("no-labels", args.no_labels.then_some(true), false)?;
    let align = r.value("align", args.align.then_some(true), false)?;
    let pick: String = r.value("pick", args.pick.clone(), "pool".to_string())?;
    let pick_best = match pick.as_str() {
        "pool" => false,
        "best" => true,
        other => bail!("--pick must be `pool` or `best`, got `{other}`"),
    };
    Ok(McmcResolved {
        iters,
        burn_in,
        prior,
        seed: r.value("seed", args.seed, 0)?,
        chains: r.value("chains", args.chains, 1)?,
        thin: r.value("thin", args.thin, 1)?.max(1),
        store_labels,
        align,
        level: r.value("level", args.level, 0.95)?,
        pick_best,
    })
}

#[derive(Serialize)]
struct ChainLine<'a> {
    iter: usize,
    k: usize,
    k_plus: usize,
    log_joint: f64,
    pi: &'a [f64],
    rho: &'a [Vec<f64>],
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<u32>>,
}

fn write_chain_jsonl(path: &std::path::Path, chain: &Chain, thin: usize) -> Result<()> {
    io::atomic_write(path, |w| {
        for (i, s) in chain.samples.iter().enumerate() {
            if i % thin != 0 {
                continue;
            }
            let line = ChainLine {
                iter: i + 1,
                k: s.k,
                k_plus: s.k_plus,
                log_joint: s.log_joint,
                pi: &s.pi,
                rho: &s.rho,
                labels: s
                    .labels
                    .as_ref()
                    .map(|l| l.iter().map(|&c| c as u32 + 1).collect()),
            };
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Pool post-burn-in samples of several chains into one pseudo-chain.
fn pooled_chain(chains: &[Chain]) -> Result<Chain> {
    let samples: Vec<_> = chains
        .iter()
        .flat_map(|c| c.post_burn().iter().cloned())
        .collect();
    let n_nodes = chains[0].n_nodes;
    Ok(Chain::from_samples(samples, 0, chains[0].rng_seed, n_nodes)?)
}

fn summary_to_fit_doc(
    method: &str,
    summary: &PosteriorSummary,
    details: serde_json::Value,
) -> FitDoc {
    FitDoc {
        schema_version: SCHEMA_VERSION,
        method: method.to_string(),
        k: summary.k,
        pi: summary.pi_mean.clone(),
        rho: summary.rho_mean.clone(),
        pi_lo: Some(summary.pi_lo.clone()),
        pi_hi: Some(summary.pi_hi.clone()),
        rho_lo: Some(summary.rho_lo.clone()),
        rho_hi: Some(summary.rho_hi.clone()),
        elbo: None,
        icl: None,
        elbo_trace: None,
        k_mode: None,
        k_pmf: None,
        details,
        truth: None,
    }
}

fn run_mcmc_command(
    method: &str,
    common: &CommonArgs,
    input: &LogInputArgs,
    truth: &TruthArgs,
    resolved: &McmcResolved,
    resolver: &Resolver,
    run_one: impl Fn(&EventLog, u64) -> repa_core::Result<Chain> + Sync,
) -> Result<()> {
    let log = load_log(input)?;
    let seeds = repa_core::mcmc::derive_seeds(resolved.seed, resolved.chains);
    let chains: Vec<repa_core::Result<Chain>> = with_jobs(common.jobs, || {
        repa_core::exec::map_slice(&seeds, repa_core::exec::ExecMode::Parallel, |&s| {
            run_one(&log, s)
        })
    })?;
    let chains: Vec<Chain> = chains.into_iter().collect::<repa_core::Result<_>>()?;

    for (i, chain) in chains.iter().enumerate() {
        write_chain_jsonl(
            &common.out_dir.join(format!("chain-{i}.jsonl")),
            chain,
            resolved.thin,
        )?;
    }

    let pooled = if resolved.pick_best {
        let best = chains
            .iter()
            .max_by(|a, b| {
                a.mean_log_joint()
                    .partial_cmp(&b.mean_log_joint())
                    .expect("finite joint")
            })
            .expect("at least one chain");
        Chain::from_samples(
            best.post_burn().to_vec(),
            0,
            best.rng_seed,
            best.n_nodes,
        )?
    } else {
        pooled_chain(&chains)?
    };
    let summary = posterior_summary(&pooled, resolved.level, resolved.align)?;
    let (k_mode, k_pmf) = if method == "telescope" {
        let (mode, pmf) = posterior_k_mode(&pooled)?;
        (Some(mode), Some(pmf))
    } else {
        (None, None)
    };
    let per_chain: Vec<PosteriorSummary> = chains
        .iter()
        .map(|c| posterior_summary(c, resolved.level, resolved.align))
        .collect::<repa_core::Result<_>>()?;

    let details = json!({
        "iterations": resolved.iters,
        "burn_in": resolved.burn_in,
        "chains": resolved.chains,
        "seed": resolved.seed,
        "prior": { "a": resolved.prior.a, "b": resolved.prior.b, "eta": resolved.prior.eta },
        "level": resolved.level,
        "align": resolved.align,
        "pick": if resolved.pick_best { "best" } else { "pool" },
        "nodes": pooled.n_nodes,
        "per_chain": per_chain,
    });
    let mut doc = summary_to_fit_doc(method, &summary, details);
    doc.k_mode = k_mode;
    doc.k_pmf = k_pmf;
    doc.truth = maybe_truth_block(
        truth,
        &summary.modal_labels,
        summary.k,
        &doc.pi,
        &doc.rho,
        Some((
            &summary.pi_lo,
            &summary.pi_hi,
            &summary.rho_lo,
            &summary.rho_hi,
        )),
    )?;

    io::atomic_write(&common.out_dir.join("labels.csv"), |w| {
        io::write_labels_csv(w, &summary.modal_labels)
    })?;
    write_json(&common.out_dir.join("summary.json"), &doc)?;
    echo_config(common, &format!("fit-{method}"), resolver)?;
    println!(
        "{method}: {} chains x {} iterations -> {}",
        resolved.chains,
        resolved.iters,
        common.out_dir.join("summary.json").display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitGibbsArgs {
    #[command(flatten)]
    mcmc: McmcCommonArgs,
    /// Number of communication classes.
    #[arg(long)]
    k: Option<usize>,
}

pub fn fit_gibbs(args: FitGibbsArgs) -> Result<()> {
    prepare_out_dir(&args.mcmc.common)?;
    let mut r = Resolver::new(args.mcmc.common.config.as_deref())?;
    record_inputs(&mut r, &args.mcmc.input)?;
    record_truth(&mut r, &args.mcmc.truth)?;
    let k: usize = r.required("k", args.k)?;
    let resolved = resolve_mcmc(&mut r, &args.mcmc)?;
    let opts = RunOptions::new(resolved.iters)
        .burn(resolved.burn_in)
        .store_labels(resolved.store_labels);
    run_mcmc_command(
        "gibbs",
        &args.mcmc.common,
        &args.mcmc.input,
        &args.mcmc.truth,
        &resolved,
        &r,
        |log, seed| gibbs_run(log, k, resolved.prior, opts, seed),
    )
}

#[derive(Args, Debug)]
pub struct FitTelescopeArgs {
    #[command(flatten)]
    mcmc: McmcCommonArgs,
    /// Beta-negative-binomial prior parameters, e.g. `1,4,3`.
    #[arg(long)]
    bnb: Option<String>,
    /// Largest component count the sampler may visit.
    #[arg(long)]
    k_max: Option<usize>,
    /// Initial component count.
    #[arg(long)]
    k_init: Option<usize>,
}

pub fn fit_telescope(args: FitTelescopeArgs) -> Result<()> {
    prepare_out_dir(&args.mcmc.common)?;
    let mut r = Resolver::new(args.mcmc.common.config.as_deref())?;
    record_inputs(&mut r, &args.mcmc.input)?;
    record_truth(&mut r, &args.mcmc.truth)?;
    let bnb_text: String = r.value("bnb", args.bnb, "1,4,3".to_string())?;
    let bnb = crate::config::parse_vector(&bnb_text)?;
    if bnb.len() != 3 {
        bail!("--bnb expects three comma-separated values, got `{bnb_text}`");
    }
    let k_max: usize = r.value("k-max", args.k_max, 20)?;
    let k_init: usize = r.value("k-init", args.k_init, 1)?;
    let mut resolved = resolve_mcmc(&mut r, &args.mcmc)?;
    resolved.prior = PriorConfig {
        bnb: (bnb[0], bnb[1], bnb[2]),
        k_max,
        ..resolved.prior
    };
    let opts = RunOptions::new(resolved.iters)
        .burn(resolved.burn_in)
        .store_labels(resolved.store_labels);
    run_mcmc_command(
        "telescope",
        &args.mcmc.common,
        &args.mcmc.input,
        &args.mcmc.truth,
        &resolved,
        &r,
        |log, seed| telescoping_run(log, k_init, resolved.prior, opts, seed),
    )
}

// ---------------------------------------------------------------------------
// fit-cavi / fit-vem
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct FitCaviArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: LogInputArgs,
    #[command(flatten)]
    truth: TruthArgs,
    /// Number of communication classes.
    #[arg(long)]
    k: Option<usize>,
    /// Stop when the bound gain over a sweep falls below this.
    #[arg(long)]
    eps: Option<f64>,
    /// Sweep cap.
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Credible interval level.
    #[arg(long)]
    level: Option<f64>,
}

pub fn fit_cavi(args: FitCaviArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    record_inputs(&mut r, &args.input)?;
    record_truth(&mut r, &args.truth)?;
    let k: usize = r.required("k", args.k)?;
    let opts = CaviOptions {
        eps: r.value("eps", args.eps, 0.01)?,
        max_sweeps: r.value("max-sweeps", args.max_sweeps, 500)?,
        tau_init: None,
    };
    let prior = PriorConfig {
        a: r.value("a", args.a, 0.5)?,
        b: r.value("b", args.b, 0.5)?,
        eta: r.value("eta", args.eta, 0.5)?,
        ..PriorConfig::default()
    };
    let seed: u64 = r.value("seed", args.seed, 0)?;
    let level: f64 = r.value("level", args.level, 0.95)?;

    let log = load_log(&args.input)?;
    let state = cavi_run(&log, k, prior, &opts, seed)?;
    let labels = state.hard_labels();
    let intervals = state.intervals(level);
    let pi = state.pi_mean();
    let rho = state.rho_mean();
    let mut doc = FitDoc {
        schema_version: SCHEMA_VERSION,
        method: "vb".into(),
        k,
        pi: pi.clone(),
        rho: rho.clone(),
        pi_lo: Some(intervals.pi_lo.clone()),
        pi_hi: Some(intervals.pi_hi.clone()),
        rho_lo: Some(intervals.rho_lo.clone()),
        rho_hi: Some(intervals.rho_hi.clone()),
        elbo: Some(state.elbo()),
        icl: None,
        elbo_trace: Some(state.elbo_trace.clone()),
        k_mode: None,
        k_pmf: None,
        details: json!({
            "sweeps": state.sweeps,
            "seed": seed,
            "eps": opts.eps,
            "prior": { "a": prior.a, "b": prior.b, "eta": prior.eta },
            "level": level,
            "nodes": state.n_nodes,
        }),
        truth: None,
    };
    doc.truth = maybe_truth_block(
        &args.truth,
        &labels,
        k,
        &pi,
        &rho,
        Some((
            &intervals.pi_lo,
            &intervals.pi_hi,
            &intervals.rho_lo,
            &intervals.rho_hi,
        )),
    )?;

    io::atomic_write(&args.common.out_dir.join("labels.csv"), |w| {
        io::write_labels_csv(w, &labels)
    })?;
    write_json(&args.common.out_dir.join("fit.json"), &doc)?;
    echo_config(&args.common, "fit-cavi", &r)?;
    println!(
        "vb: bound {:.4} after {} sweeps -> {}",
        state.elbo(),
        state.sweeps,
        args.common.out_dir.join("fit.json").display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct FitVemArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: LogInputArgs,
    #[command(flatten)]
    truth: TruthArgs,
    /// Number of communication classes.
    #[arg(long)]
    k: Option<usize>,
    /// Inner E-step bound gain tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// Outer parameter-movement tolerance.
    #[arg(long)]
    kappa: Option<f64>,
    /// Initialization: `random` or `extremes`.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn fit_vem(args: FitVemArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    record_inputs(&mut r, &args.input)?;
    record_truth(&mut r, &args.truth)?;
    let k: usize = r.required("k", args.k)?;
    let init_name: String = r.value("init", args.init, "extremes".to_string())?;
    let init = match init_name.as_str() {
        "random" => VemInitKind::Random,
        "extremes" => VemInitKind::Extremes,
        other => bail!("--init must be `random` or `extremes`, got `{other}`"),
    };
    let opts = VemOptions {
        eps: r.value("eps", args.eps, 0.01)?,
        kappa: r.value("kappa", args.kappa, 0.01)?,
        init,
        ..VemOptions::default()
    };
    let seed: u64 = r.value("seed", args.seed, 0)?;

    let log = load_log(&args.input)?;
    let fit = vem_run(&log, k, &opts, seed)?;
    let criterion = icl(&fit, &log)?;
    let mut doc = FitDoc {
        schema_version: SCHEMA_VERSION,
        method: "vem".into(),
        k,
        pi: fit.pi.clone(),
        rho: fit.rho.clone(),
        pi_lo: None,
        pi_hi: None,
        rho_lo: None,
        rho_hi: None,
        elbo: Some(fit.elbo),
        icl: Some(criterion),
        elbo_trace: None,
        k_mode: None,
        k_pmf: None,
        details: json!({
            "rounds": fit.rounds,
            "inner_iterations": fit.inner_iterations,
            "degenerate_cells": fit.degenerate_cells,
            "init": fit.init_used,
            "seed": seed,
            "eps": opts.eps,
            "kappa": opts.kappa,
            "nodes": fit.n_nodes,
        }),
        truth: None,
    };
    doc.truth = maybe_truth_block(&args.truth, &fit.labels, k, &fit.pi, &fit.rho, None)?;

    io::atomic_write(&args.common.out_dir.join("labels.csv"), |w| {
        io::write_labels_csv(w, &fit.labels)
    })?;
    write_json(&args.common.out_dir.join("fit.json"), &doc)?;
    echo_config(&args.common, "fit-vem", &r)?;
    println!(
        "vem: bound {:.4}, criterion {:.4} after {} rounds -> {}",
        fit.elbo,
        criterion,
        fit.rounds,
        args.common.out_dir.join("fit.json").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// select-k
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SelectKArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Criterion to maximize: `elbo` or `icl`.
    #[arg(long)]
    criterion: Option<String>,
    /// Fit JSON files covering a contiguous K range.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
}

pub fn select_k(args: SelectKArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    let criterion_name: String = r.value("criterion", args.criterion, "elbo".to_string())?;
    let joined = args
        .inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",");
    r.required("inputs", Some(joined))?;
    let criterion = match criterion_name.as_str() {
        "elbo" => Criterion::Elbo,
        "icl" => Criterion::Icl,
        other => bail!("--criterion must be `elbo` or `icl`, got `{other}`"),
    };

    let mut entries = Vec::new();
    for path in &args.inputs {
        let fit: FitDoc = read_json(path)?;
        let value = match criterion {
            Criterion::Elbo => fit.elbo,
            Criterion::Icl => fit.icl,
        }
        .ok_or_else(|| {
            anyhow::anyhow!(
                "{} carries no {criterion_name} value (method `{}`)",
                path.display(),
                fit.method
            )
        })?;
        entries.push(KCriterion { k: fit.k, value });
    }
    entries.sort_by_key(|e| e.k);
    let selection = select_k_variational(&entries, criterion)?;
    let doc = SelectionDoc {
        schema_version: SCHEMA_VERSION,
        criterion: criterion_name.clone(),
        chosen_k: selection.chosen_k,
        table: selection
            .table
            .iter()
            .map(|e| KEntry {
                k: e.k,
                value: e.value,
            })
            .collect(),
    };
    write_json(&args.common.out_dir.join("selection.json"), &doc)?;
    echo_config(&args.common, "select-k", &r)?;
    println!("selected K = {} by {criterion_name}", selection.chosen_k);
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fit and selection JSON files (replicates).
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn report(args: ReportArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    let joined = args
        .inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",");
    r.required("inputs", Some(joined))?;

    let mut fits: BTreeMap<String, Vec<FitDoc>> = BTreeMap::new();
    let mut selections: BTreeMap<String, Vec<SelectionDoc>> = BTreeMap::new();
    for path in &args.inputs {
        let value: serde_json::Value = read_json(path)?;
        if value.get("chosen_k").is_some() {
            let doc: SelectionDoc = serde_json::from_value(value)?;
            selections.entry(doc.criterion.clone()).or_default().push(doc);
        } else if value.get("method").is_some() {
            let doc: FitDoc = serde_json::from_value(value)?;
            fits.entry(doc.method.clone()).or_default().push(doc);
        } else {
            bail!("{} is neither a fit nor a selection document", path.display());
        }
    }

    let mut methods = Vec::new();
    for (method, docs) in &fits {
        let k = docs[0].k;
        if docs.iter().any(|d| d.k != k) {
            bail!("method `{method}` mixes different K values; report per K instead");
        }
        let aligned = docs.iter().all(|d| d.truth.is_some());
        let pick_pi = |d: &FitDoc, r: usize| match (&d.truth, aligned) {
            (Some(t), true) => t.pi_aligned[r],
            _ => d.pi[r],
        };
        let pick_rho = |d: &FitDoc, m: usize, rr: usize| match (&d.truth, aligned) {
            (Some(t), true) => t.rho_aligned[m][rr],
            _ => d.rho[m][rr],
        };
        let mut pi_mean = vec![0.0; k];
        let mut pi_se = vec![0.0; k];
        for rr in 0..k {
            let col: Vec<f64> = docs.iter().map(|d| pick_pi(d, rr)).collect();
            let (m, s) = mean_se(&col);
            pi_mean[rr] = m;
            pi_se[rr] = s;
        }
        let mut rho_mean = vec![vec![0.0; k]; k];
        let mut rho_se = vec![vec![0.0; k]; k];
        for m in 0..k {
            for rr in 0..k {
                let col: Vec<f64> = docs.iter().map(|d| pick_rho(d, m, rr)).collect();
                let (mu, s) = mean_se(&col);
                rho_mean[m][rr] = mu;
                rho_se[m][rr] = s;
            }
        }
        let coverage_pi = docs
            .iter()
            .map(|d| d.truth.as_ref().and_then(|t| t.pi_covered.clone()))
            .collect::<Option<Vec<_>>>()
            .map(|cov| {
                (0..k)
                    .map(|rr| {
                        cov.iter().filter(|c| c[rr]).count() as f64 / cov.len() as f64
                    })
                    .collect::<Vec<f64>>()
            });
        let coverage_rho = docs
            .iter()
            .map(|d| d.truth.as_ref().and_then(|t| t.rho_covered.clone()))
            .collect::<Option<Vec<_>>>()
            .map(|cov| {
                (0..k)
                    .map(|m| {
                        (0..k)
                            .map(|rr| {
                                cov.iter().filter(|c| c[m][rr]).count() as f64
                                    / cov.len() as f64
                            })
                            .collect::<Vec<f64>>()
                    })
                    .collect::<Vec<Vec<f64>>>()
            });
        let rands: Vec<f64> = docs
            .iter()
            .filter_map(|d| d.truth.as_ref().map(|t| t.rand_index))
            .collect();
        let mean_rand_index = (!rands.is_empty())
            .then(|| rands.iter().sum::<f64>() / rands.len() as f64);
        methods.push(MethodReport {
            method: method.clone(),
            replicates: docs.len(),
            aligned,
            pi_mean,
            pi_se,
            rho_mean,
            rho_se,
            coverage_pi,
            coverage_rho,
            mean_rand_index,
        });
    }

    let selection_reports: Vec<SelectionReport> = selections
        .iter()
        .map(|(criterion, docs)| {
            let mut k_counts = BTreeMap::new();
            for d in docs {
                *k_counts.entry(d.chosen_k).or_insert(0usize) += 1;
            }
            SelectionReport {
                criterion: criterion.clone(),
                replicates: docs.len(),
                k_counts,
            }
        })
        .collect();

    let doc = ReportDoc {
        schema_version: SCHEMA_VERSION,
        methods,
        selections: selection_reports,
    };
    write_json(&args.common.out_dir.join("report.json"), &doc)?;

    // Long-format CSV companion.
    let mut csv = String::from("section,method,name,value\n");
    for m in &doc.methods {
        let k = m.pi_mean.len();
        for rr in 0..k {
            csv.push_str(&format!("estimate_mean,{},pi{},{}\n", m.method, rr + 1, m.pi_mean[rr]));
            csv.push_str(&format!("estimate_se,{},pi{},{}\n", m.method, rr + 1, m.pi_se[rr]));
        }
        for mm in 0..k {
            for rr in 0..k {
                csv.push_str(&format!(
                    "estimate_mean,{},rho{}{},{}\n",
                    m.method,
                    mm + 1,
                    rr + 1,
                    m.rho_mean[mm][rr]
                ));
                csv.push_str(&format!(
                    "estimate_se,{},rho{}{},{}\n",
                    m.method,
                    mm + 1,
                    rr + 1,
                    m.rho_se[mm][rr]
                ));
            }
        }
        if let Some(cov) = &m.coverage_pi {
            for (rr, c) in cov.iter().enumerate() {
                csv.push_str(&format!("coverage,{},pi{},{}\n", m.method, rr + 1, c));
            }
        }
        if let Some(cov) = &m.coverage_rho {
            for (mm, row) in cov.iter().enumerate() {
                for (rr, c) in row.iter().enumerate() {
                    csv.push_str(&format!(
                        "coverage,{},rho{}{},{}\n",
                        m.method,
                        mm + 1,
                        rr + 1,
                        c
                    ));
                }
            }
        }
        if let Some(rand) = m.mean_rand_index {
            csv.push_str(&format!("rand_index,{},mean,{}\n", m.method, rand));
        }
    }
    for s in &doc.selections {
        for (k, count) in &s.k_counts {
            csv.push_str(&format!("selection,{},k={},{}\n", s.criterion, k, count));
        }
    }
    crate::doc::write_text(&args.common.out_dir.join("report.csv"), &csv)?;
    echo_config(&args.common, "report", &r)?;
    println!(
        "report over {} fit group(s), {} selection group(s) -> {}",
        doc.methods.len(),
        doc.selections.len(),
        args.common.out_dir.join("report.json").display()
    );
    Ok(())
}
