//! Raw temporal edgelists to model-conformant event logs.
//!
//! Two passes: [`window_collapse`] folds a reverse edge arriving within a
//! time window into its parent as a reciprocation, then [`trim_to_pa`] picks
//! a two-node seed graph and keeps only edges that attach to the already
//! observed network, assigning scenarios from endpoint novelty.

use std::collections::{HashMap, VecDeque};

use crate::error::Error;
use crate::graph::{Event, EventLog, GraphState, NodeId, Scenario};
use crate::Result;

/// One row of a raw temporal edgelist.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEdge {
    pub source: String,
    pub target: String,
    /// Seconds; only differences against the window matter.
    pub timestamp: f64,
}

/// An edge that survived window collapsing, carrying its reciprocation flag.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedEdge {
    pub source: String,
    pub target: String,
    pub timestamp: f64,
    pub reciprocated: bool,
}

impl From<RawEdge> for MarkedEdge {
    fn from(e: RawEdge) -> Self {
        MarkedEdge {
            source: e.source,
            target: e.target,
            timestamp: e.timestamp,
            reciprocated: false,
        }
    }
}

/// Collapse reverse edges that arrive within `window` of an unmatched parent.
///
/// Scanning in time order (stable sort, so equal timestamps keep file order),
/// an edge `(t, s)` at time `tau1` is consumed by the earliest unmatched edge
/// `(s, t)` at `tau0` with `tau1 - tau0 <= window`: the parent gets
/// `reciprocated = true` and the consumed edge disappears. Each edge matches
/// at most once; edges entering with `reciprocated = true` are already
/// matched, which makes the operation idempotent.
pub fn window_collapse(edges: Vec<MarkedEdge>, window: f64) -> Vec<MarkedEdge> {
    let mut edges = edges;
    edges.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));

    let mut out: Vec<MarkedEdge> = Vec::with_capacity(edges.len());
    // Queue of unmatched parent indices into `out`, per (source, target).
    let mut open: HashMap<(String, String), VecDeque<usize>> = HashMap::new();
    for edge in edges {
        if !edge.reciprocated {
            let rev_key = (edge.target.clone(), edge.source.clone());
            if let Some(queue) = open.get_mut(&rev_key) {
                while let Some(&front) = queue.front() {
                    if out[front].timestamp < edge.timestamp - window {
                        queue.pop_front();
                    } else {
                        break;
                    }
                }
                if let Some(parent) = queue.pop_front() {
                    out[parent].reciprocated = true;
                    continue; // edge consumed
                }
            }
        }
        let idx = out.len();
        let eligible = !edge.reciprocated;
        out.push(edge);
        if eligible {
            let key = (out[idx].source.clone(), out[idx].target.clone());
            open.entry(key).or_default().push_back(idx);
        }
    }
    out
}

/// Result of trimming an edge list down to a preferential-attachment history.
#[derive(Debug)]
pub struct TrimOutput {
    pub log: EventLog,
    /// Original id of each assigned node, in id order (`map[0]` is node 1).
    pub id_map: Vec<String>,
    /// Edges dropped because both endpoints were unseen.
    pub dropped_both_new: usize,
}

/// Compare raw ids numerically when both parse as integers, else as strings.
fn id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Build an event log from a collapsed edge list.
///
/// The seed graph is the node with the largest total degree (ties: lowest
/// original id) paired with the first node it connects with; that first edge
/// becomes the seed edge. Later edges are kept only if at least one endpoint
/// is already present: a new source gives scenario 1, a new target scenario
/// 3, neither scenario 2, and edges with two unseen endpoints are dropped
/// and counted. Dense ids are assigned in arrival order.
pub fn trim_to_pa(edges: &[MarkedEdge]) -> Result<TrimOutput> {
    if edges.is_empty() {
        return Err(Error::EmptyInput("no edges to trim"));
    }

    // Total degree per raw id; a reciprocated parent stands for two edges.
    let mut degree: HashMap<&str, u64> = HashMap::new();
    for e in edges {
        let w = if e.reciprocated { 2 } else { 1 };
        *degree.entry(e.source.as_str()).or_insert(0) += w;
        *degree.entry(e.target.as_str()).or_insert(0) += w;
    }
    let hub = degree
        .iter()
        .max_by(|(ida, da), (idb, db)| da.cmp(db).then_with(|| id_order(idb, ida)))
        .map(|(id, _)| id.to_string())
        .expect("nonempty");

    // First edge connecting the hub with a different node.
    let seed_pos = edges
        .iter()
        .position(|e| {
            (e.source == hub || e.target == hub) && e.source != e.target
        })
        .ok_or_else(|| {
            Error::Degenerate(format!(
                "highest-degree node {hub} only touches self-loops; no seed pair exists"
            ))
        })?;
    let seed_edge = &edges[seed_pos];

    let mut id_map: Vec<String> = Vec::new();
    let mut assigned: HashMap<String, NodeId> = HashMap::new();
    let get_or_assign = |raw: &str, id_map: &mut Vec<String>, assigned: &mut HashMap<String, NodeId>| -> (NodeId, bool) {
        if let Some(&id) = assigned.get(raw) {
            (id, false)
        } else {
            let next = (id_map.len() + 1) as NodeId;
            id_map.push(raw.to_string());
            assigned.insert(raw.to_string(), next);
            (next, true)
        }
    };

    // Seed graph: source of the seed edge becomes node 1, target node 2. A
    // reciprocated seed edge contributes both directions to the seed degrees.
    let (s_id, _) = get_or_assign(&seed_edge.source, &mut id_map, &mut assigned);
    let (t_id, _) = get_or_assign(&seed_edge.target, &mut id_map, &mut assigned);
    debug_assert_eq!((s_id, t_id), (1, 2));
    let (seed_in, seed_out, seed_edges) = if seed_edge.reciprocated {
        (vec![1u64, 1], vec![1u64, 1], 2u64)
    } else {
        (vec![0u64, 1], vec![1u64, 0], 1u64)
    };
    let seed = GraphState::from_degrees(seed_in, seed_out, seed_edges)?;

    let mut events = Vec::new();
    let mut dropped_both_new = 0usize;
    for e in edges.iter().skip(seed_pos + 1) {
        let src_known = assigned.contains_key(e.source.as_str());
        let tgt_known = assigned.contains_key(e.target.as_str());
        let scenario = match (src_known, tgt_known) {
            (true, true) => Scenario::Internal,
            (false, true) => Scenario::NewSource,
            (true, false) => Scenario::NewTarget,
            (false, false) => {
                dropped_both_new += 1;
                continue;
            }
        };
        let (source, _) = get_or_assign(&e.source, &mut id_map, &mut assigned);
        let (target, _) = get_or_assign(&e.target, &mut id_map, &mut assigned);
        events.push(Event {
            scenario,
            source,
            target,
            reciprocated: e.reciprocated,
        });
    }

    let log = EventLog::new(seed, events)?;
    Ok(TrimOutput {
        log,
        id_map,
        dropped_both_new,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(s: &str, t: &str, ts: f64) -> MarkedEdge {
        MarkedEdge {
            source: s.into(),
            target: t.into(),
            timestamp: ts,
            reciprocated: false,
        }
    }

    #[test]
    fn match_inside_window_miss_outside() {
        let out = window_collapse(
            vec![raw("1", "2", 0.0), raw("2", "1", 0.5), raw("3", "1", 2.0)],
            1.0,
        );
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].source.as_str(), out[0].reciprocated), ("1", true));
        assert_eq!((out[1].source.as_str(), out[1].reciprocated), ("3", false));
    }

    #[test]
    fn outside_window_keeps_both() {
        let out = window_collapse(vec![raw("1", "2", 0.0), raw("2", "1", 5.0)], 1.0);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|e| !e.reciprocated));
    }

    #[test]
    fn earliest_unmatched_parent_wins() {
        let out = window_collapse(
            vec![raw("1", "2", 0.0), raw("1", "2", 0.1), raw("2", "1", 0.2)],
            1.0,
        );
        assert_eq!(out.len(), 2);
        assert!(out[0].reciprocated, "earliest parent takes the match");
        assert!(!out[1].reciprocated);
    }

    /// Exhaustive check of the matching policy on all orderings of three
    /// edges over the pair (1,2): brute-force the earliest-parent rule.
    #[test]
    fn matching_policy_matches_brute_force_on_three_edges() {
        let dirs = [("1", "2"), ("2", "1")];
        let times = [0.0, 0.3, 0.6];
        let window = 0.4;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let picks = [dirs[a], dirs[b], dirs[c]];
                    let edges: Vec<MarkedEdge> = picks
                        .iter()
                        .zip(times)
                        .map(|(&(s, t), ts)| raw(s, t, ts))
                        .collect();
                    // Brute force: walk in time order, match against the
                    // earliest open reverse edge within the window.
                    let mut matched = vec![false; 3]; // consumed as counterpart
                    let mut flag = vec![false; 3];
                    for j in 0..3 {
                        let mut found = None;
                        for i in 0..j {
                            if matched[i] || flag[i] {
                                continue;
                            }
                            if picks[i].0 == picks[j].1
                                && picks[i].1 == picks[j].0
                                && times[j] - times[i] <= window
                            {
                                found = Some(i);
                                break;
                            }
                        }
                        if let Some(i) = found {
                            flag[i] = true;
                            matched[j] = true;
                        }
                    }
                    let expect: Vec<(String, bool)> = (0..3)
                        .filter(|&i| !matched[i])
                        .map(|i| (picks[i].0.to_string(), flag[i]))
                        .collect();
                    let got: Vec<(String, bool)> = window_collapse(edges, window)
                        .into_iter()
                        .map(|e| (e.source, e.reciprocated))
                        .collect();
                    assert_eq!(got, expect, "case {picks:?}");
                }
            }
        }
    }

    #[test]
    fn collapse_is_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..30);
            let edges: Vec<MarkedEdge> = (0..n)
                .map(|_| {
                    raw(
                        &rng.random_range(1..4).to_string(),
                        &rng.random_range(1..4).to_string(),
                        rng.random_range(0..40) as f64 * 0.25,
                    )
                })
                .collect();
            let once = window_collapse(edges, 1.0);
            let twice = window_collapse(once.clone(), 1.0);
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn empty_input_empty_output() {
        assert!(window_collapse(Vec::new(), 1.0).is_empty());
    }

    #[test]
    fn trim_drops_disconnected_edge() {
        // a-b is the seed pair (a has the top degree via ties and lowest id
        // rule), then c-d touches nothing seen so far.
        let edges = vec![raw("a", "b", 0.0), raw("c", "d", 1.0)];
        let out = trim_to_pa(&edges).unwrap();
        assert_eq!(out.log.len(), 0);
        assert_eq!(out.dropped_both_new, 1);
        assert_eq!(out.id_map, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn single_edge_becomes_seed() {
        let out = trim_to_pa(&[raw("x", "y", 3.0)]).unwrap();
        assert_eq!(out.log.len(), 0);
        assert_eq!(out.log.seed().nodes(), 2);
        assert_eq!(out.log.seed().edges(), 1);
    }

    #[test]
    fn scenarios_follow_endpoint_novelty() {
        // Degrees: b appears 3 times, a twice, c twice, d once. Hub is b.
        let edges = vec![
            raw("a", "b", 0.0), // seed edge: a -> 1, b -> 2
            raw("c", "b", 1.0), // new source -> scenario 1
            raw("a", "c", 2.0), // both known -> scenario 2
            raw("b", "d", 3.0), // new target -> scenario 3
        ];
        let out = trim_to_pa(&edges).unwrap();
        let scenarios: Vec<u8> = out.log.events().iter().map(|e| e.scenario.code()).collect();
        assert_eq!(scenarios, vec![1, 2, 3]);
        assert_eq!(out.id_map, vec!["a", "b", "c", "d"]);
        // Retained edge count identity: n events + reciprocals + seed edge.
        let recips = out.log.events().iter().filter(|e| e.reciprocated).count() as u64;
        let state = out.log.replay();
        assert_eq!(state.edges(), out.log.len() as u64 + recips + 1);
    }

    #[test]
    fn ties_for_hub_break_to_lowest_id() {
        // Every node has degree 2; numeric order should pick "2" over "10".
        let edges = vec![raw("10", "2", 0.0), raw("2", "10", 5.0)];
        let out = trim_to_pa(&edges).unwrap();
        // Hub is 2, its first connection is the t=0 edge (10, 2).
        assert_eq!(out.id_map[0], "10");
        assert_eq!(out.id_map[1], "2");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(trim_to_pa(&[]).is_err());
    }
}
