//! Event-log data model and replay mechanics.
//!
//! A growing directed graph is recorded as a seed state plus an ordered list
//! of edge-creation events. Step `k` adds one edge `(s_k, t_k)` under one of
//! three scenarios (new source, internal edge, new target) and optionally its
//! reverse `(t_k, s_k)` when the event is reciprocated. Node ids are dense,
//! 1-based and assigned in arrival order, so degree tallies live in flat
//! arrays.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Node identifier, 1-based and dense in arrival order.
pub type NodeId = u32;

/// Latent communication classes, 0-based in memory (file formats are 1-based).
pub type Labels = Vec<u16>;

/// Which growth move produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// New source node attaches to an existing target.
    NewSource,
    /// Edge between two existing nodes.
    Internal,
    /// Existing source attaches to a new target node.
    NewTarget,
}

impl Scenario {
    /// Numeric code used in file formats: 1, 2 or 3.
    pub fn code(self) -> u8 {
        match self {
            Scenario::NewSource => 1,
            Scenario::Internal => 2,
            Scenario::NewTarget => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Scenario::NewSource),
            2 => Ok(Scenario::Internal),
            3 => Ok(Scenario::NewTarget),
            other => Err(Error::Parse(format!("scenario code {other} not in 1..=3"))),
        }
    }
}

/// One edge-creation step. The 1-based step number is the position in the
/// owning [`EventLog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub scenario: Scenario,
    pub source: NodeId,
    pub target: NodeId,
    pub reciprocated: bool,
}

/// Per-node degree tallies plus node and edge totals.
///
/// Invariant: the in-degrees and the out-degrees each sum to the edge count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphState {
    in_deg: Vec<u64>,
    out_deg: Vec<u64>,
    edges: u64,
}

impl GraphState {
    /// `n` isolated nodes.
    pub fn new(n: usize) -> Self {
        GraphState {
            in_deg: vec![0; n],
            out_deg: vec![0; n],
            edges: 0,
        }
    }

    /// Build from explicit degree lists; checks the degree-sum invariant.
    pub fn from_degrees(in_deg: Vec<u64>, out_deg: Vec<u64>, edges: u64) -> Result<Self> {
        if in_deg.len() != out_deg.len() {
            return Err(Error::LengthMismatch {
                left: in_deg.len(),
                right: out_deg.len(),
            });
        }
        let si: u64 = in_deg.iter().sum();
        let so: u64 = out_deg.iter().sum();
        if si != edges || so != edges {
            return Err(Error::InvalidParams(format!(
                "degree sums ({si} in, {so} out) must equal the edge count {edges}"
            )));
        }
        Ok(GraphState {
            in_deg,
            out_deg,
            edges,
        })
    }

    pub fn nodes(&self) -> usize {
        self.in_deg.len()
    }

    pub fn edges(&self) -> u64 {
        self.edges
    }

    /// In-degree of node `v` (1-based).
    pub fn in_degree(&self, v: NodeId) -> u64 {
        self.in_deg[(v - 1) as usize]
    }

    /// Out-degree of node `v` (1-based).
    pub fn out_degree(&self, v: NodeId) -> u64 {
        self.out_deg[(v - 1) as usize]
    }

    pub fn in_degrees(&self) -> &[u64] {
        &self.in_deg
    }

    pub fn out_degrees(&self) -> &[u64] {
        &self.out_deg
    }

    /// Total degree (in plus out) per node.
    pub fn total_degrees(&self) -> Vec<u64> {
        self.in_deg
            .iter()
            .zip(&self.out_deg)
            .map(|(i, o)| i + o)
            .collect()
    }

    fn exists(&self, v: NodeId) -> bool {
        v >= 1 && (v as usize) <= self.nodes()
    }

    /// Validate `ev` against this state; `index` only decorates errors.
    fn check(&self, ev: &Event, index: usize) -> Result<()> {
        let next = (self.nodes() + 1) as NodeId;
        let fail = |reason: String| Err(Error::InvalidEvent { index, reason });
        match ev.scenario {
            Scenario::NewSource => {
                if ev.source != next {
                    return fail(format!("new source must be node {next}, got {}", ev.source));
                }
                if !self.exists(ev.target) {
                    return fail(format!("target {} does not exist", ev.target));
                }
            }
            Scenario::Internal => {
                if !self.exists(ev.source) {
                    return fail(format!("source {} does not exist", ev.source));
                }
                if !self.exists(ev.target) {
                    return fail(format!("target {} does not exist", ev.target));
                }
            }
            Scenario::NewTarget => {
                if ev.target != next {
                    return fail(format!("new target must be node {next}, got {}", ev.target));
                }
                if !self.exists(ev.source) {
                    return fail(format!("source {} does not exist", ev.source));
                }
            }
        }
        Ok(())
    }

    /// Apply `ev` in place. On error the state is unchanged.
    pub fn apply_mut(&mut self, ev: &Event, index: usize) -> Result<()> {
        self.check(ev, index)?;
        match ev.scenario {
            Scenario::NewSource | Scenario::NewTarget => {
                self.in_deg.push(0);
                self.out_deg.push(0);
            }
            Scenario::Internal => {}
        }
        self.out_deg[(ev.source - 1) as usize] += 1;
        self.in_deg[(ev.target - 1) as usize] += 1;
        self.edges += 1;
        if ev.reciprocated {
            self.out_deg[(ev.target - 1) as usize] += 1;
            self.in_deg[(ev.source - 1) as usize] += 1;
            self.edges += 1;
        }
        Ok(())
    }
}

/// Apply one event to a state, returning the successor state.
///
/// Degrees move by one on each side of the new edge, twice when the event is
/// reciprocated; the node count grows exactly for the new-source and
/// new-target scenarios. Rejects events whose endpoints are inconsistent with
/// the state.
pub fn apply_event(state: &GraphState, ev: &Event) -> Result<GraphState> {
    let mut next = state.clone();
    next.apply_mut(ev, 1)?;
    Ok(next)
}

/// Seed state plus ordered events. Construction validates every event, so a
/// held `EventLog` always replays cleanly.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    seed: GraphState,
    events: Vec<Event>,
}

impl EventLog {
    pub fn new(seed: GraphState, events: Vec<Event>) -> Result<Self> {
        if seed.nodes() == 0 {
            return Err(Error::EmptyInput("seed graph must have at least one node"));
        }
        let mut state = seed.clone();
        for (i, ev) in events.iter().enumerate() {
            state.apply_mut(ev, i + 1)?;
        }
        Ok(EventLog { seed, events })
    }

    pub fn seed(&self) -> &GraphState {
        &self.seed
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Number of events `n`.
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Node count after replaying all events.
    pub fn final_nodes(&self) -> usize {
        self.seed.nodes()
            + self
                .events
                .iter()
                .filter(|e| e.scenario != Scenario::Internal)
                .count()
    }

    /// Replay all events from the seed and return the terminal state.
    pub fn replay(&self) -> GraphState {
        let mut state = self.seed.clone();
        for (i, ev) in self.events.iter().enumerate() {
            // Validated at construction.
            state.apply_mut(ev, i + 1).expect("validated event log");
        }
        state
    }

    /// Walk the log, handing each event to `f` together with the state just
    /// before it applies. Used to extract per-step degree snapshots.
    pub fn scan<F: FnMut(&GraphState, usize, &Event)>(&self, mut f: F) {
        let mut state = self.seed.clone();
        for (i, ev) in self.events.iter().enumerate() {
            f(&state, i, ev);
            state.apply_mut(ev, i + 1).expect("validated event log");
        }
    }

    /// Nodes not present in the seed graph, i.e. ids above `seed.nodes()`.
    pub fn is_arrival(&self, v: NodeId) -> bool {
        (v as usize) > self.seed.nodes()
    }
}

/// Replay an arbitrary event list from a seed, reporting the first offending
/// event index (1-based) on failure.
pub fn replay_events(seed: &GraphState, events: &[Event]) -> Result<GraphState> {
    let mut state = seed.clone();
    for (i, ev) in events.iter().enumerate() {
        state.apply_mut(ev, i + 1)?;
    }
    Ok(state)
}

/// Rand index between two partitions: the fraction of node pairs on which
/// the partitions agree (both together or both apart). Invariant under label
/// permutations of either argument.
pub fn rand_index(p: &[u16], q: &[u16]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let n = p.len();
    if n < 2 {
        return Err(Error::EmptyInput("rand index needs at least two nodes"));
    }
    let kp = 1 + *p.iter().max().unwrap() as usize;
    let kq = 1 + *q.iter().max().unwrap() as usize;
    let mut joint = vec![0u64; kp * kq];
    let mut rows = vec![0u64; kp];
    let mut cols = vec![0u64; kq];
    for (&a, &b) in p.iter().zip(q) {
        joint[a as usize * kq + b as usize] += 1;
        rows[a as usize] += 1;
        cols[b as usize] += 1;
    }
    let choose2 = |c: u64| (c * c.saturating_sub(1)) / 2;
    let sj: u64 = joint.iter().map(|&c| choose2(c)).sum();
    let sr: u64 = rows.iter().map(|&c| choose2(c)).sum();
    let sc: u64 = cols.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n as u64);
    // Disagreements: pairs together in exactly one of the two partitions.
    let disagree = (sr - sj) + (sc - sj);
    Ok(1.0 - disagree as f64 / total as f64)
}

/// Per-node incidence lists over non-seed events, shared by the samplers and
/// the variational updates.
///
/// Self-loop events are kept separate: the samplers count them once on the
/// source side, the variational updates skip them entirely.
pub struct Incidence {
    k: usize,
    src_off: Vec<u32>,
    /// `(other endpoint, reciprocated)` for events where the node is the source.
    src_adj: Vec<(NodeId, bool)>,
    tgt_off: Vec<u32>,
    /// `(other endpoint, reciprocated)` for events where the node is the target.
    tgt_adj: Vec<(NodeId, bool)>,
    /// Per-node self-loop event counts, split by reciprocation flag.
    self_r1: Vec<u32>,
    self_r0: Vec<u32>,
}

impl Incidence {
    pub fn build(log: &EventLog) -> Self {
        let n_nodes = log.final_nodes();
        let mut src_cnt = vec![0u32; n_nodes];
        let mut tgt_cnt = vec![0u32; n_nodes];
        let mut self_r1 = vec![0u32; n_nodes];
        let mut self_r0 = vec![0u32; n_nodes];
        for ev in log.events() {
            if ev.source == ev.target {
                let v = (ev.source - 1) as usize;
                if ev.reciprocated {
                    self_r1[v] += 1;
                } else {
                    self_r0[v] += 1;
                }
            } else {
                src_cnt[(ev.source - 1) as usize] += 1;
                tgt_cnt[(ev.target - 1) as usize] += 1;
            }
        }
        let prefix = |cnt: &[u32]| {
            let mut off = vec![0u32; cnt.len() + 1];
            for (i, &c) in cnt.iter().enumerate() {
                off[i + 1] = off[i] + c;
            }
            off
        };
        let src_off = prefix(&src_cnt);
        let tgt_off = prefix(&tgt_cnt);
        let mut src_adj = vec![(0, false); *src_off.last().unwrap() as usize];
        let mut tgt_adj = vec![(0, false); *tgt_off.last().unwrap() as usize];
        let mut src_fill = src_off.clone();
        let mut tgt_fill = tgt_off.clone();
        for ev in log.events() {
            if ev.source == ev.target {
                continue;
            }
            let s = (ev.source - 1) as usize;
            let t = (ev.target - 1) as usize;
            src_adj[src_fill[s] as usize] = (ev.target, ev.reciprocated);
            src_fill[s] += 1;
            tgt_adj[tgt_fill[t] as usize] = (ev.source, ev.reciprocated);
            tgt_fill[t] += 1;
        }
        Incidence {
            k: n_nodes,
            src_off,
            src_adj,
            tgt_off,
            tgt_adj,
            self_r1,
            self_r0,
        }
    }

    pub fn nodes(&self) -> usize {
        self.k
    }

    /// Non-self-loop events with node `v` as source: `(target, reciprocated)`.
    pub fn as_source(&self, v: NodeId) -> &[(NodeId, bool)] {
        let i = (v - 1) as usize;
        &self.src_adj[self.src_off[i] as usize..self.src_off[i + 1] as usize]
    }

    /// Non-self-loop events with node `v` as target: `(source, reciprocated)`.
    pub fn as_target(&self, v: NodeId) -> &[(NodeId, bool)] {
        let i = (v - 1) as usize;
        &self.tgt_adj[self.tgt_off[i] as usize..self.tgt_off[i + 1] as usize]
    }

    /// Self-loop event counts at `v`: `(reciprocated, not reciprocated)`.
    pub fn self_loops(&self, v: NodeId) -> (u32, u32) {
        let i = (v - 1) as usize;
        (self.self_r1[i], self.self_r0[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(scenario: Scenario, s: NodeId, t: NodeId, r: bool) -> Event {
        Event {
            scenario,
            source: s,
            target: t,
            reciprocated: r,
        }
    }

    #[test]
    fn single_arrival() {
        let state = GraphState::new(1);
        let next = apply_event(&state, &ev(Scenario::NewSource, 2, 1, false)).unwrap();
        assert_eq!(next.nodes(), 2);
        assert_eq!(next.edges(), 1);
        assert_eq!(next.in_degree(1), 1);
        assert_eq!(next.out_degree(2), 1);
        assert_eq!(next.in_degree(2), 0);
    }

    #[test]
    fn reciprocal_pair() {
        let state = GraphState::new(1);
        let next = apply_event(&state, &ev(Scenario::NewSource, 2, 1, true)).unwrap();
        assert_eq!(next.edges(), 2);
        for v in [1, 2] {
            assert_eq!(next.in_degree(v), 1);
            assert_eq!(next.out_degree(v), 1);
        }
    }

    #[test]
    fn precondition_violation_leaves_state_unchanged() {
        let mut state = GraphState::new(2);
        let before = state.clone();
        let err = state.apply_mut(&ev(Scenario::Internal, 3, 1, false), 7);
        assert!(matches!(err, Err(Error::InvalidEvent { index: 7, .. })));
        assert_eq!(state, before);
    }

    #[test]
    fn wrong_new_node_id_rejected() {
        let state = GraphState::new(2);
        assert!(apply_event(&state, &ev(Scenario::NewSource, 4, 1, false)).is_err());
        assert!(apply_event(&state, &ev(Scenario::NewTarget, 1, 4, false)).is_err());
    }

    #[test]
    fn replay_identity_on_empty_log() {
        let seed = GraphState::from_degrees(vec![1, 0], vec![0, 1], 1).unwrap();
        let log = EventLog::new(seed.clone(), vec![]).unwrap();
        assert_eq!(log.replay(), seed);
    }

    #[test]
    fn replay_counts_arrivals() {
        let seed = GraphState::new(1);
        let n = 50;
        let events: Vec<Event> = (0..n)
            .map(|i| ev(Scenario::NewSource, (i + 2) as NodeId, 1, false))
            .collect();
        let log = EventLog::new(seed, events).unwrap();
        let state = log.replay();
        assert_eq!(state.nodes(), 1 + n);
        assert_eq!(state.edges(), n as u64);
    }

    /// Build a random valid event log by choosing legal moves step by step.
    fn random_log(steps: usize, rng_seed: u64) -> EventLog {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(rng_seed);
        let seed = GraphState::new(2);
        let mut state = seed.clone();
        let mut events = Vec::with_capacity(steps);
        for i in 0..steps {
            let n = state.nodes() as NodeId;
            let scenario = match rng.random_range(0..3) {
                0 => Scenario::NewSource,
                1 => Scenario::Internal,
                _ => Scenario::NewTarget,
            };
            let (s, t) = match scenario {
                Scenario::NewSource => (n + 1, rng.random_range(1..=n)),
                Scenario::Internal => (rng.random_range(1..=n), rng.random_range(1..=n)),
                Scenario::NewTarget => (rng.random_range(1..=n), n + 1),
            };
            let e = ev(scenario, s, t, rng.random_bool(0.4) && s != t);
            state.apply_mut(&e, i + 1).unwrap();
            events.push(e);
        }
        EventLog::new(seed, events).unwrap()
    }

    #[test]
    fn replayed_degrees_match_independent_edge_tally() {
        let log = random_log(1000, 42);
        let state = log.replay();
        // Independent oracle: materialize the directed edge multiset and
        // count endpoint occurrences directly.
        let mut in_deg = vec![0u64; state.nodes()];
        let mut out_deg = vec![0u64; state.nodes()];
        let mut edges = 0u64;
        for ev in log.events() {
            out_deg[(ev.source - 1) as usize] += 1;
            in_deg[(ev.target - 1) as usize] += 1;
            edges += 1;
            if ev.reciprocated {
                out_deg[(ev.target - 1) as usize] += 1;
                in_deg[(ev.source - 1) as usize] += 1;
                edges += 1;
            }
        }
        assert_eq!(state.edges(), edges);
        assert_eq!(state.in_degrees(), &in_deg[..]);
        assert_eq!(state.out_degrees(), &out_deg[..]);
        let si: u64 = state.in_degrees().iter().sum();
        let so: u64 = state.out_degrees().iter().sum();
        assert_eq!(si, state.edges());
        assert_eq!(so, state.edges());
    }

    #[test]
    fn degree_sums_hold_after_every_prefix() {
        let log = random_log(300, 7);
        log.scan(|state, _, _| {
            let si: u64 = state.in_degrees().iter().sum();
            let so: u64 = state.out_degrees().iter().sum();
            assert_eq!(si, state.edges());
            assert_eq!(so, state.edges());
        });
    }

    #[test]
    fn apply_then_reverse_restores_state() {
        let log = random_log(200, 3);
        log.scan(|state, _, ev| {
            let mut after = apply_event(state, ev).unwrap();
            // Undo the increments by hand.
            after.out_deg[(ev.source - 1) as usize] -= 1;
            after.in_deg[(ev.target - 1) as usize] -= 1;
            after.edges -= 1;
            if ev.reciprocated {
                after.out_deg[(ev.target - 1) as usize] -= 1;
                after.in_deg[(ev.source - 1) as usize] -= 1;
                after.edges -= 1;
            }
            if ev.scenario != Scenario::Internal {
                after.in_deg.pop();
                after.out_deg.pop();
            }
            assert_eq!(&after, state);
        });
    }

    #[test]
    fn rand_index_relabeling_invariance() {
        assert_eq!(rand_index(&[0, 0, 1], &[1, 1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn rand_index_all_pairs_disagree() {
        assert_eq!(rand_index(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn rand_index_hand_enumeration() {
        // Pairs (1,2): together/apart, (1,3): apart/apart, (2,3): apart/together.
        let r = rand_index(&[0, 0, 1], &[0, 1, 1]).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rand_index_length_mismatch() {
        assert!(rand_index(&[0, 1], &[0, 1, 2]).is_err());
    }

    #[test]
    fn incidence_matches_direct_scan() {
        let log = random_log(400, 11);
        let inc = Incidence::build(&log);
        for v in 1..=(log.final_nodes() as NodeId) {
            let src: Vec<(NodeId, bool)> = log
                .events()
                .iter()
                .filter(|e| e.source == v && e.source != e.target)
                .map(|e| (e.target, e.reciprocated))
                .collect();
            let tgt: Vec<(NodeId, bool)> = log
                .events()
                .iter()
                .filter(|e| e.target == v && e.source != e.target)
                .map(|e| (e.source, e.reciprocated))
                .collect();
            assert_eq!(inc.as_source(v), &src[..]);
            assert_eq!(inc.as_target(v), &tgt[..]);
            let n1 = log
                .events()
                .iter()
                .filter(|e| e.source == v && e.target == v && e.reciprocated)
                .count() as u32;
            let n0 = log
                .events()
                .iter()
                .filter(|e| e.source == v && e.target == v && !e.reciprocated)
                .count() as u32;
            assert_eq!(inc.self_loops(v), (n1, n0));
        }
    }

    proptest! {
        #[test]
        fn rand_index_permutation_invariant(labels in prop::collection::vec(0u16..4, 2..40), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut perm: Vec<u16> = (0..4).collect();
            perm.shuffle(&mut rng);
            let permuted: Vec<u16> = labels.iter().map(|&l| perm[l as usize]).collect();
            let other: Vec<u16> = labels.iter().map(|&l| (l + 1) % 3).collect();
            let a = rand_index(&labels, &other).unwrap();
            let b = rand_index(&permuted, &other).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((rand_index(&labels, &labels).unwrap() - 1.0).abs() < 1e-15);
        }

        #[test]
        fn prefix_degree_sums_always_balance(steps in 1usize..120, rng_seed in 0u64..500) {
            let log = random_log(steps, rng_seed);
            log.scan(|state, _, _| {
                let si: u64 = state.in_degrees().iter().sum();
                assert_eq!(si, state.edges());
            });
        }
    }
}
