//! Network generator.
//!
//! Each step draws a scenario (new source / internal edge / new target),
//! selects endpoints by degree-weighted attachment with offset, assigns new
//! nodes a class drawn from `pi`, and reciprocates the edge with probability
//! `rho[class(target)][class(source)]`. The whole run is deterministic given
//! the RNG seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::graph::{Event, EventLog, GraphState, Labels, NodeId, Scenario};
use crate::params::{GlobalParams, MixtureParams};
use crate::Result;

/// Endpoint selection strategy.
///
/// Both strategies draw a node with probability `(deg(v) + delta) / (|E| +
/// delta |V|)`. `EndpointList` keeps one entry per edge end and samples in
/// O(1): with probability `|E| / (|E| + delta |V|)` a uniform edge end (which
/// is degree-proportional), otherwise a uniform node. `LinearScan` walks the
/// cumulative weights in O(|V|) and exists as the reference distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    #[default]
    EndpointList,
    LinearScan,
}

/// Degree side a sampler weights by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    In,
    Out,
}

/// Streaming generator state. [`generate`] wraps the common one-shot path;
/// the struct itself is public so callers can draw single steps (useful for
/// distribution tests).
pub struct Simulator {
    theta: GlobalParams,
    mix: MixtureParams,
    state: GraphState,
    labels: Labels,
    /// One entry per directed edge: the edge's target. Multiplicity equals in-degree.
    in_ends: Vec<NodeId>,
    /// One entry per directed edge: the edge's source. Multiplicity equals out-degree.
    out_ends: Vec<NodeId>,
    kind: SamplerKind,
    rng: ChaCha8Rng,
}

impl Simulator {
    /// Start from a seed graph. Seed labels are drawn i.i.d. from `pi` unless
    /// supplied (then their length and class range are checked).
    pub fn new(
        theta: GlobalParams,
        mix: MixtureParams,
        seed: &GraphState,
        seed_labels: Option<Labels>,
        rng_seed: u64,
    ) -> Result<Self> {
        Self::with_sampler(theta, mix, seed, seed_labels, rng_seed, SamplerKind::default())
    }

    pub fn with_sampler(
        theta: GlobalParams,
        mix: MixtureParams,
        seed: &GraphState,
        seed_labels: Option<Labels>,
        rng_seed: u64,
        kind: SamplerKind,
    ) -> Result<Self> {
        if seed.nodes() == 0 {
            return Err(Error::EmptyInput("seed graph must have at least one node"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let k = mix.k();
        let labels = match seed_labels {
            Some(l) => {
                if l.len() != seed.nodes() {
                    return Err(Error::LengthMismatch {
                        left: l.len(),
                        right: seed.nodes(),
                    });
                }
                if l.iter().any(|&c| (c as usize) >= k) {
                    return Err(Error::InvalidParams(format!(
                        "seed label out of range for K = {k}"
                    )));
                }
                l
            }
            None => (0..seed.nodes())
                .map(|_| sample_categorical(&mix.pi, &mut rng))
                .collect(),
        };
        let mut in_ends = Vec::with_capacity(seed.edges() as usize);
        let mut out_ends = Vec::with_capacity(seed.edges() as usize);
        for v in 1..=(seed.nodes() as NodeId) {
            for _ in 0..seed.in_degree(v) {
                in_ends.push(v);
            }
            for _ in 0..seed.out_degree(v) {
                out_ends.push(v);
            }
        }
        Ok(Simulator {
            theta,
            mix,
            state: seed.clone(),
            labels,
            in_ends,
            out_ends,
            kind,
            rng,
        })
    }

    pub fn state(&self) -> &GraphState {
        &self.state
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// Draw one endpoint on the given side without advancing the graph.
    pub fn draw_endpoint(&mut self, side: Side) -> NodeId {
        let (delta, ends) = match side {
            Side::In => (self.theta.delta_in, &self.in_ends),
            Side::Out => (self.theta.delta_out, &self.out_ends),
        };
        let nodes = self.state.nodes();
        match self.kind {
            SamplerKind::EndpointList => {
                let edge_mass = ends.len() as f64;
                let total = edge_mass + delta * nodes as f64;
                if self.rng.random::<f64>() * total < edge_mass {
                    ends[self.rng.random_range(0..ends.len())]
                } else {
                    self.rng.random_range(1..=nodes as NodeId)
                }
            }
            SamplerKind::LinearScan => {
                let deg = |v: NodeId| match side {
                    Side::In => self.state.in_degree(v),
                    Side::Out => self.state.out_degree(v),
                };
                let total = ends.len() as f64 + delta * nodes as f64;
                let mut u = self.rng.random::<f64>() * total;
                for v in 1..=(nodes as NodeId) {
                    let w = deg(v) as f64 + delta;
                    if u < w {
                        return v;
                    }
                    u -= w;
                }
                nodes as NodeId
            }
        }
    }

    fn draw_label(&mut self) -> u16 {
        sample_categorical(&self.mix.pi, &mut self.rng)
    }

    /// Advance the graph by one step and return the event.
    pub fn step(&mut self) -> Event {
        let u: f64 = self.rng.random();
        let (scenario, source, target) = if u < self.theta.alpha {
            let target = self.draw_endpoint(Side::In);
            let source = (self.state.nodes() + 1) as NodeId;
            let label = self.draw_label();
            self.labels.push(label);
            (Scenario::NewSource, source, target)
        } else if u < self.theta.alpha + self.theta.beta {
            let source = self.draw_endpoint(Side::Out);
            let target = self.draw_endpoint(Side::In);
            (Scenario::Internal, source, target)
        } else {
            let source = self.draw_endpoint(Side::Out);
            let target = (self.state.nodes() + 1) as NodeId;
            let label = self.draw_label();
            self.labels.push(label);
            (Scenario::NewTarget, source, target)
        };
        // A reverse of a self-loop is the same edge, so self-loops never
        // count as reciprocated.
        let reciprocated = if source == target {
            false
        } else {
            let m = self.labels[(target - 1) as usize] as usize;
            let r = self.labels[(source - 1) as usize] as usize;
            self.rng.random::<f64>() < self.mix.rho[m][r]
        };
        let ev = Event {
            scenario,
            source,
            target,
            reciprocated,
        };
        let step_no = 0; // index only decorates errors; generation is valid by construction
        self.state
            .apply_mut(&ev, step_no)
            .expect("generated event is valid");
        self.out_ends.push(source);
        self.in_ends.push(target);
        if reciprocated {
            self.out_ends.push(target);
            self.in_ends.push(source);
        }
        ev
    }

    /// Run `n` steps and package the result.
    pub fn run(mut self, n: usize) -> (EventLog, Labels) {
        let seed = self.state.clone();
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            events.push(self.step());
        }
        let log = EventLog::new(seed, events).expect("generated log is valid");
        (log, self.labels)
    }
}

/// Generate an event log of `n` steps plus the ground-truth labels of every
/// node (seed nodes included).
pub fn generate(
    theta: &GlobalParams,
    mix: &MixtureParams,
    seed: &GraphState,
    seed_labels: Option<Labels>,
    n: usize,
    rng_seed: u64,
) -> Result<(EventLog, Labels)> {
    let sim = Simulator::new(theta.clone(), mix.clone(), seed, seed_labels, rng_seed)?;
    Ok(sim.run(n))
}

/// Default two-node seed: a single edge from node 1 to node 2.
pub fn default_seed() -> GraphState {
    GraphState::from_degrees(vec![0, 1], vec![1, 0], 1).expect("static seed")
}

fn sample_categorical<R: Rng>(pi: &[f64], rng: &mut R) -> u16 {
    let mut u: f64 = rng.random();
    for (i, &p) in pi.iter().enumerate() {
        if u < p {
            return i as u16;
        }
        u -= p;
    }
    (pi.len() - 1) as u16
}
