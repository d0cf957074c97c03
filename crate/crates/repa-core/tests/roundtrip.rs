//! Cross-module round trip: a simulated log, serialized as a raw temporal
//! edgelist with renamed ids, must come back from the ingest pipeline with
//! the identical scenario/reciprocation sequence.

use repa_core::graph::NodeId;
use repa_core::ingest::{trim_to_pa, window_collapse, MarkedEdge};
use repa_core::params::{GlobalParams, MixtureParams};
use repa_core::simulate::{default_seed, generate};

fn rename(v: NodeId) -> String {
    format!("user{}", v * 7 + 3)
}

#[test]
fn simulated_log_round_trips_through_ingest() {
    let theta = GlobalParams::new(0.15, 0.8, 1.0, 1.0).unwrap();
    let mix = MixtureParams::new(vec![0.8, 0.2], vec![vec![0.5, 0.9], vec![0.05, 0.2]]).unwrap();
    let (log, _) = generate(&theta, &mix, &default_seed(), None, 500, 314).unwrap();

    // Serialize: seed edge at t = 0, event k at t = 10k, its reverse (when
    // reciprocated) one second later. The matching window of two seconds can
    // then only pair an edge with its own reverse.
    let mut raw = vec![MarkedEdge {
        source: rename(1),
        target: rename(2),
        timestamp: 0.0,
        reciprocated: false,
    }];
    for (i, ev) in log.events().iter().enumerate() {
        let t = 10.0 * (i + 1) as f64;
        raw.push(MarkedEdge {
            source: rename(ev.source),
            target: rename(ev.target),
            timestamp: t,
            reciprocated: false,
        });
        if ev.reciprocated {
            raw.push(MarkedEdge {
                source: rename(ev.target),
                target: rename(ev.source),
                timestamp: t + 1.0,
                reciprocated: false,
            });
        }
    }

    let collapsed = window_collapse(raw, 2.0);
    let trimmed = trim_to_pa(&collapsed).unwrap();

    assert_eq!(trimmed.dropped_both_new, 0);
    assert_eq!(trimmed.log.len(), log.len());
    for (got, want) in trimmed.log.events().iter().zip(log.events()) {
        assert_eq!(got.scenario, want.scenario);
        assert_eq!(got.reciprocated, want.reciprocated);
    }
    // Same degree history up to the id renaming; the id map undoes it.
    let got_state = trimmed.log.replay();
    let want_state = log.replay();
    assert_eq!(got_state.edges(), want_state.edges());
    assert_eq!(got_state.nodes(), want_state.nodes());
    for v in 1..=(want_state.nodes() as NodeId) {
        assert_eq!(trimmed.id_map[(v - 1) as usize], rename(v));
        assert_eq!(got_state.in_degree(v), want_state.in_degree(v));
        assert_eq!(got_state.out_degree(v), want_state.out_degree(v));
    }
}
