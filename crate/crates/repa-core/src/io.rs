//! File formats: event-log CSV, seed-graph JSON, label CSV, raw edgelists.
//!
//! Event-log CSV (header row): `k,scenario,source,target,reciprocated` with
//! `k` the 1-based step number, `scenario` in 1..=3 and `reciprocated` 0/1.
//! The seed graph travels in a JSON sidecar
//! `{"nodes": N0, "edges": E0, "in_degrees": [...], "out_degrees": [...]}`.
//! Labels use `node,class` with 1-based classes. Raw temporal edgelists use
//! `source,target,timestamp`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::{Event, EventLog, GraphState, Labels, Scenario};
use crate::ingest::RawEdge;
use crate::Result;

#[derive(Serialize, Deserialize)]
struct SeedJson {
    nodes: usize,
    edges: u64,
    in_degrees: Vec<u64>,
    out_degrees: Vec<u64>,
}

pub fn write_seed_json<W: Write>(w: W, seed: &GraphState) -> Result<()> {
    let doc = SeedJson {
        nodes: seed.nodes(),
        edges: seed.edges(),
        in_degrees: seed.in_degrees().to_vec(),
        out_degrees: seed.out_degrees().to_vec(),
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

pub fn read_seed_json<R: Read>(r: R) -> Result<GraphState> {
    let doc: SeedJson = serde_json::from_reader(r)?;
    if doc.in_degrees.len() != doc.nodes {
        return Err(Error::Parse(format!(
            "seed lists degree vectors of length {} for {} nodes",
            doc.in_degrees.len(),
            doc.nodes
        )));
    }
    GraphState::from_degrees(doc.in_degrees, doc.out_degrees, doc.edges)
}

pub fn write_events_csv<W: Write>(w: W, log: &EventLog) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["k", "scenario", "source", "target", "reciprocated"])?;
    for (i, ev) in log.events().iter().enumerate() {
        wtr.write_record(&[
            (i + 1).to_string(),
            ev.scenario.code().to_string(),
            ev.source.to_string(),
            ev.target.to_string(),
            u8::from(ev.reciprocated).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<Event>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut events = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Parse(format!(
                "event row {} has {} fields, expected 5",
                i + 1,
                rec.len()
            )));
        }
        let field = |j: usize| -> Result<u64> {
            rec[j]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("event row {}, field {}: {e}", i + 1, j + 1)))
        };
        let k = field(0)? as usize;
        if k != i + 1 {
            return Err(Error::Parse(format!(
                "event row {} carries step number {k}; steps must be 1..n in order",
                i + 1
            )));
        }
        let scenario = Scenario::from_code(field(1)? as u8)?;
        let reciprocated = match field(4)? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Parse(format!(
                    "event row {}: reciprocated flag {other} not 0/1",
                    i + 1
                )))
            }
        };
        events.push(Event {
            scenario,
            source: field(2)? as u32,
            target: field(3)? as u32,
            reciprocated,
        });
    }
    Ok(events)
}

/// Load an event log from its CSV and seed sidecar paths.
pub fn read_event_log(events_path: &Path, seed_path: &Path) -> Result<EventLog> {
    let seed = read_seed_json(BufReader::new(fs::File::open(seed_path)?))?;
    let events = read_events_csv(BufReader::new(fs::File::open(events_path)?))?;
    EventLog::new(seed, events)
}

/// Write labels as `node,class` rows with 1-based classes.
pub fn write_labels_csv<W: Write>(w: W, labels: &[u16]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["node", "class"])?;
    for (i, &c) in labels.iter().enumerate() {
        wtr.write_record(&[(i + 1).to_string(), (c + 1).to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(r: R) -> Result<Labels> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let node: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("label row {}: {e}", i + 1)))?;
        if node != i + 1 {
            return Err(Error::Parse(format!(
                "label row {} is for node {node}; nodes must be 1..n in order",
                i + 1
            )));
        }
        let class: u16 = rec[1]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("label row {}: {e}", i + 1)))?;
        if class == 0 {
            return Err(Error::Parse(format!(
                "label row {}: classes are 1-based",
                i + 1
            )));
        }
        labels.push(class - 1);
    }
    Ok(labels)
}

/// Read a raw temporal edgelist `source,target,timestamp`.
pub fn read_raw_edges_csv<R: Read>(r: R) -> Result<Vec<RawEdge>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut edges = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!(
                "edge row {} has {} fields, expected 3",
                i + 1,
                rec.len()
            )));
        }
        let source = rec[0].trim().to_string();
        let target = rec[1].trim().to_string();
        if source.is_empty() || target.is_empty() {
            return Err(Error::Parse(format!("edge row {}: empty node id", i + 1)));
        }
        let timestamp: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("edge row {}: {e}", i + 1)))?;
        if !timestamp.is_finite() {
            return Err(Error::Parse(format!(
                "edge row {}: timestamp must be finite",
                i + 1
            )));
        }
        edges.push(RawEdge {
            source,
            target,
            timestamp,
        });
    }
    Ok(edges)
}

pub fn write_raw_edges_csv<W: Write>(w: W, edges: &[RawEdge]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["source", "target", "timestamp"])?;
    for e in edges {
        wtr.write_record(&[e.source.clone(), e.target.clone(), format!("{}", e.timestamp)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write `original,assigned` id-map rows.
pub fn write_idmap_csv<W: Write>(w: W, map: &[(String, u32)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["original", "assigned"])?;
    for (orig, assigned) in map {
        wtr.write_record(&[orig.clone(), assigned.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write a file atomically: the content lands in a sibling temp file which is
/// renamed over the target only after a successful write.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
