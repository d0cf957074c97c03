//! Data-producing subcommands: simulate, ingest, extremes.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use repa_core::extremes::{angular_set, min_distance_threshold};
use repa_core::graph::GraphState;
use repa_core::ingest::{trim_to_pa, window_collapse, MarkedEdge};
use repa_core::io;
use repa_core::params::{GlobalParams, MixtureParams};
use repa_core::simulate::generate;

use crate::config::{parse_matrix, parse_vector, Resolver};
use crate::doc::{write_json, write_text, SCHEMA_VERSION};
use crate::{CommonArgs, LogInputArgs};

pub fn prepare_out_dir(common: &CommonArgs) -> Result<()> {
    fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("creating {}", common.out_dir.display()))?;
    Ok(())
}

pub fn echo_config(common: &CommonArgs, command: &str, resolver: &Resolver) -> Result<()> {
    let text = format!("command = {command}\n{}", resolver.echo());
    write_text(&common.out_dir.join("config_resolved.txt"), &text)
}

pub fn load_log(input: &LogInputArgs) -> Result<repa_core::graph::EventLog> {
    io::read_event_log(&input.events, &input.seed_graph)
        .with_context(|| format!("loading event log {}", input.events.display()))
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of growth steps.
    #[arg(long)]
    n: Option<usize>,
    /// New-source probability.
    #[arg(long)]
    alpha: Option<f64>,
    /// Internal-edge probability.
    #[arg(long)]
    beta: Option<f64>,
    /// In-degree offset.
    #[arg(long)]
    delta_in: Option<f64>,
    /// Out-degree offset.
    #[arg(long)]
    delta_out: Option<f64>,
    /// Class proportions, e.g. `0.6,0.4`.
    #[arg(long)]
    pi: Option<String>,
    /// Reciprocity matrix rows (target class by row), e.g. `0.1,0.5;0.4,0.8`.
    #[arg(long)]
    rho: Option<String>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Optional seed-graph JSON; default is two nodes joined by one edge.
    #[arg(long)]
    seed_graph: Option<PathBuf>,
    /// Optional seed labels CSV (node,class); drawn from pi when absent.
    #[arg(long)]
    seed_labels: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    let n: usize = r.required("n", args.n)?;
    let alpha: f64 = r.required("alpha", args.alpha)?;
    let beta: f64 = r.required("beta", args.beta)?;
    let delta_in: f64 = r.required("delta-in", args.delta_in)?;
    let delta_out: f64 = r.required("delta-out", args.delta_out)?;
    let pi_text: String = r.required("pi", args.pi)?;
    let rho_text: String = r.required("rho", args.rho)?;
    let seed: u64 = r.value("seed", args.seed, 0)?;
    let seed_graph_path = r.optional(
        "seed-graph",
        args.seed_graph.map(|p| p.display().to_string()),
    )?;
    let seed_labels_path = r.optional(
        "seed-labels",
        args.seed_labels.map(|p| p.display().to_string()),
    )?;

    let theta = GlobalParams::new(alpha, beta, delta_in, delta_out)?;
    let mix = MixtureParams::new(parse_vector(&pi_text)?, parse_matrix(&rho_text)?)?;
    let seed_state: GraphState = match &seed_graph_path {
        Some(p) => io::read_seed_json(std::io::BufReader::new(
            fs::File::open(p).with_context(|| format!("opening seed graph {p}"))?,
        ))?,
        None => repa_core::simulate::default_seed(),
    };
    let seed_labels = match &seed_labels_path {
        Some(p) => Some(io::read_labels_csv(std::io::BufReader::new(
            fs::File::open(p).with_context(|| format!("opening seed labels {p}"))?,
        ))?),
        None => None,
    };

    let (log, labels) = generate(&theta, &mix, &seed_state, seed_labels, n, seed)?;

    let out = &args.common.out_dir;
    io::atomic_write(&out.join("events.csv"), |w| io::write_events_csv(w, &log))?;
    io::atomic_write(&out.join("seed.json"), |w| io::write_seed_json(w, log.seed()))?;
    io::atomic_write(&out.join("labels.csv"), |w| io::write_labels_csv(w, &labels))?;
    echo_config(&args.common, "simulate", &r)?;
    println!(
        "simulated {n} events over {} nodes into {}",
        log.final_nodes(),
        out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Raw temporal edgelist CSV (source,target,timestamp).
    #[arg(long)]
    input: PathBuf,
    /// Reciprocal matching window in hours.
    #[arg(long)]
    window_hours: Option<f64>,
    /// Drop edges with timestamps strictly above this cutoff.
    #[arg(long)]
    cutoff_timestamp: Option<f64>,
}

#[derive(Serialize)]
struct IngestSummary {
    schema_version: u32,
    input_edges: usize,
    after_cutoff: usize,
    after_collapse: usize,
    reciprocated: usize,
    events: usize,
    nodes: usize,
    dropped_both_new: usize,
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    let input: String = r.required("input", Some(args.input.display().to_string()))?;
    let window_hours: f64 = r.value("window-hours", args.window_hours, 24.0)?;
    let cutoff: Option<f64> = r.optional("cutoff-timestamp", args.cutoff_timestamp)?;
    if !(window_hours >= 0.0) {
        anyhow::bail!("--window-hours must be nonnegative, got {window_hours}");
    }

    let raw = io::read_raw_edges_csv(std::io::BufReader::new(
        fs::File::open(&input).with_context(|| format!("opening {input}"))?,
    ))?;
    let input_edges = raw.len();
    let kept: Vec<MarkedEdge> = raw
        .into_iter()
        .filter(|e| cutoff.is_none_or(|c| e.timestamp <= c))
        .map(MarkedEdge::from)
        .collect();
    let after_cutoff = kept.len();
    let collapsed = window_collapse(kept, window_hours * 3600.0);
    let after_collapse = collapsed.len();
    let reciprocated = collapsed.iter().filter(|e| e.reciprocated).count();
    let trimmed = trim_to_pa(&collapsed)?;

    let out = &args.common.out_dir;
    io::atomic_write(&out.join("events.csv"), |w| {
        io::write_events_csv(w, &trimmed.log)
    })?;
    io::atomic_write(&out.join("seed.json"), |w| {
        io::write_seed_json(w, trimmed.log.seed())
    })?;
    let id_pairs: Vec<(String, u32)> = trimmed
        .id_map
        .iter()
        .enumerate()
        .map(|(i, orig)| (orig.clone(), (i + 1) as u32))
        .collect();
    io::atomic_write(&out.join("idmap.csv"), |w| io::write_idmap_csv(w, &id_pairs))?;
    let summary = IngestSummary {
        schema_version: SCHEMA_VERSION,
        input_edges,
        after_cutoff,
        after_collapse,
        reciprocated,
        events: trimmed.log.len(),
        nodes: trimmed.log.final_nodes(),
        dropped_both_new: trimmed.dropped_both_new,
    };
    write_json(&out.join("ingest_summary.json"), &summary)?;
    echo_config(&args.common, "ingest", &r)?;
    println!(
        "ingested {input_edges} raw edges -> {} events over {} nodes ({} dropped with both endpoints new)",
        trimmed.log.len(),
        trimmed.log.final_nodes(),
        trimmed.dropped_both_new
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExtremesArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: LogInputArgs,
}

#[derive(Serialize)]
struct ThresholdDoc {
    schema_version: u32,
    threshold: u64,
    exponent: f64,
    ks: f64,
    tail_size: usize,
}

pub fn extremes(args: ExtremesArgs) -> Result<()> {
    prepare_out_dir(&args.common)?;
    let mut r = Resolver::new(args.common.config.as_deref())?;
    r.required("events", Some(args.input.events.display().to_string()))?;
    r.required("seed-graph", Some(args.input.seed_graph.display().to_string()))?;
    let log = load_log(&args.input)?;
    let state = log.replay();
    let fit = min_distance_threshold(&state.total_degrees())?;
    let angles = angular_set(&state, fit.threshold);

    let out = &args.common.out_dir;
    write_json(
        &out.join("threshold.json"),
        &ThresholdDoc {
            schema_version: SCHEMA_VERSION,
            threshold: fit.threshold,
            exponent: fit.exponent,
            ks: fit.ks,
            tail_size: fit.tail_size,
        },
    )?;
    io::atomic_write(&out.join("angles.csv"), |w| {
        use std::io::Write;
        writeln!(w, "node,angle")?;
        for (v, a) in angles.members.iter().zip(&angles.values) {
            writeln!(w, "{v},{a}")?;
        }
        Ok(())
    })?;
    echo_config(&args.common, "extremes", &r)?;
    println!(
        "threshold {} (exponent {:.3}, KS {:.4}, tail {}); {} angular values",
        fit.threshold,
        fit.exponent,
        fit.ks,
        fit.tail_size,
        angles.values.len()
    );
    Ok(())
}
