//! Likelihood of an event log and maximum likelihood for the attachment
//! parameters.
//!
//! The joint likelihood factorizes into a part depending only on the global
//! attachment parameters (scenario frequencies and degree-weighted selection
//! probabilities along the replayed trajectory) and a part depending only on
//! the class proportions and the reciprocity matrix. The two parts are
//! exposed as [`loglik_theta`] and [`loglik_pi_rho`]; estimation of the
//! offsets reduces to a one-dimensional root find on the score.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::{EventLog, Scenario};
use crate::params::{GlobalParams, MixtureParams};
use crate::specfn::weighted_ln;
use crate::Result;

/// Which degree offset is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeSide {
    In,
    Out,
}

/// Per-event snapshot of the quantities entering the likelihood, extracted by
/// a single replay: the relevant endpoint degree just before the step, and
/// the node and edge totals just before the step.
#[derive(Debug, Clone, Copy)]
struct StepTerm {
    degree: u64,
    nodes: u64,
    edges: u64,
}

fn side_terms(log: &EventLog, side: DegreeSide) -> Vec<StepTerm> {
    let mut terms = Vec::new();
    log.scan(|state, _, ev| {
        let include = match side {
            DegreeSide::In => ev.scenario != Scenario::NewTarget,
            DegreeSide::Out => ev.scenario != Scenario::NewSource,
        };
        if include {
            let degree = match side {
                DegreeSide::In => state.in_degree(ev.target),
                DegreeSide::Out => state.out_degree(ev.source),
            };
            terms.push(StepTerm {
                degree,
                nodes: state.nodes() as u64,
                edges: state.edges(),
            });
        }
    });
    terms
}

/// Scenario-frequency estimators: the share of new-source and internal steps.
pub fn estimate_alpha_beta(log: &EventLog) -> Result<(f64, f64)> {
    if log.is_empty() {
        return Err(Error::EmptyInput("cannot estimate scenario shares from an empty log"));
    }
    let n = log.len() as f64;
    let n1 = log
        .events()
        .iter()
        .filter(|e| e.scenario == Scenario::NewSource)
        .count() as f64;
    let n2 = log
        .events()
        .iter()
        .filter(|e| e.scenario == Scenario::Internal)
        .count() as f64;
    Ok((n1 / n, n2 / n))
}

/// A solved offset estimate with its score residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaFit {
    pub delta: f64,
    pub residual: f64,
}

/// Score of the offset log-likelihood: sum over the relevant steps of
/// `1/(d + delta) - V/(E + delta V)` with pre-step degree `d` and totals
/// `V`, `E`.
fn score(terms: &[StepTerm], delta: f64) -> f64 {
    terms
        .iter()
        .map(|t| {
            1.0 / (t.degree as f64 + delta)
                - t.nodes as f64 / (t.edges as f64 + delta * t.nodes as f64)
        })
        .sum()
}

fn score_derivative(terms: &[StepTerm], delta: f64) -> f64 {
    terms
        .iter()
        .map(|t| {
            let v = t.nodes as f64;
            let dpd = t.degree as f64 + delta;
            let epd = t.edges as f64 + delta * v;
            -1.0 / (dpd * dpd) + (v * v) / (epd * epd)
        })
        .sum()
}

const BRACKET_LO: f64 = 1e-8;
const BRACKET_HI: f64 = 1e6;
const SCORE_TOL: f64 = 1e-10;

/// Maximum likelihood for one degree offset by bracketed root finding on the
/// score over `(1e-8, 1e6)`, followed by a Newton polish. Residuals below
/// `1e-10` are required; a score that cannot bracket a root is reported as a
/// boundary diagnosis, a score that vanishes identically as a flat
/// likelihood.
pub fn estimate_delta(log: &EventLog, side: DegreeSide) -> Result<DeltaFit> {
    let terms = side_terms(log, side);
    if terms.is_empty() {
        return Err(Error::EmptyInput(
            "no steps inform this offset (wrong scenario mix)",
        ));
    }
    let f_lo = score(&terms, BRACKET_LO);
    let f_hi = score(&terms, BRACKET_HI);
    let scale = terms.len() as f64;
    if f_lo.abs() < SCORE_TOL * scale.min(1.0).max(1e-3) && f_hi.abs() < SCORE_TOL {
        // Re-check at interior points before declaring the score flat.
        if score(&terms, 1.0).abs() < SCORE_TOL && score(&terms, 100.0).abs() < SCORE_TOL {
            return Err(Error::FlatScore);
        }
    }
    if f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        return Err(Error::NoRoot { f_lo, f_hi });
    }
    let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
    let (mut flo, _) = (f_lo, f_hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = score(&terms, mid);
        if fm == 0.0 {
            return Ok(DeltaFit {
                delta: mid,
                residual: 0.0,
            });
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON * mid.abs() {
            break;
        }
    }
    let mut delta = 0.5 * (lo + hi);
    // Newton polish; bisection already has the root to near machine width.
    for _ in 0..4 {
        let f = score(&terms, delta);
        let fp = score_derivative(&terms, delta);
        if fp == 0.0 {
            break;
        }
        let next = delta - f / fp;
        if next.is_finite() && next > BRACKET_LO && next < BRACKET_HI {
            delta = next;
        } else {
            break;
        }
    }
    let residual = score(&terms, delta);
    if residual.abs() > SCORE_TOL {
        // Fall back to the bisection midpoint if Newton drifted.
        let mid = 0.5 * (lo + hi);
        let res_mid = score(&terms, mid);
        if res_mid.abs() < residual.abs() {
            return Ok(DeltaFit {
                delta: mid,
                residual: res_mid,
            });
        }
    }
    Ok(DeltaFit { delta, residual })
}

/// Log-likelihood of the attachment part: scenario probabilities plus the
/// degree-weighted selection probabilities along the replayed trajectory.
/// Returns `-inf` when a scenario with zero probability occurs.
pub fn loglik_theta(log: &EventLog, theta: &GlobalParams) -> f64 {
    let mut ll = 0.0;
    let gamma = theta.gamma();
    log.scan(|state, _, ev| {
        let v = state.nodes() as f64;
        let e = state.edges() as f64;
        match ev.scenario {
            Scenario::NewSource => ll += weighted_ln(1.0, theta.alpha),
            Scenario::Internal => ll += weighted_ln(1.0, theta.beta),
            Scenario::NewTarget => ll += weighted_ln(1.0, gamma),
        }
        if ev.scenario != Scenario::NewTarget {
            let d = state.in_degree(ev.target) as f64;
            ll += ((d + theta.delta_in) / (e + theta.delta_in * v)).ln();
        }
        if ev.scenario != Scenario::NewSource {
            let d = state.out_degree(ev.source) as f64;
            ll += ((d + theta.delta_out) / (e + theta.delta_out * v)).ln();
        }
    });
    ll
}

/// Log-likelihood of the class part: class proportions over arrival labels
/// plus reciprocation terms `rho[class(target)][class(source)]` over all
/// events. Returns `-inf` when a zero (or one) reciprocity contradicts an
/// observed flag.
pub fn loglik_pi_rho(log: &EventLog, labels: &[u16], mix: &MixtureParams) -> Result<f64> {
    let n_nodes = log.final_nodes();
    if labels.len() != n_nodes {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n_nodes,
        });
    }
    let k = mix.k();
    if labels.iter().any(|&c| (c as usize) >= k) {
        return Err(Error::InvalidParams(format!("label out of range for K = {k}")));
    }
    let mut ll = 0.0;
    for ev in log.events() {
        let arrival = match ev.scenario {
            Scenario::NewSource => Some(ev.source),
            Scenario::NewTarget => Some(ev.target),
            Scenario::Internal => None,
        };
        if let Some(v) = arrival {
            ll += weighted_ln(1.0, mix.pi[labels[(v - 1) as usize] as usize]);
        }
        let r = labels[(ev.source - 1) as usize] as usize;
        let m = labels[(ev.target - 1) as usize] as usize;
        let rho = mix.rho[m][r];
        ll += if ev.reciprocated {
            weighted_ln(1.0, rho)
        } else {
            weighted_ln(1.0, 1.0 - rho)
        };
    }
    Ok(ll)
}

/// Full maximum-likelihood fit of the attachment parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaFit {
    pub alpha: f64,
    pub beta: f64,
    pub delta_in: DeltaEstimate,
    pub delta_out: DeltaEstimate,
    /// Attachment log-likelihood at the fit; absent unless both offsets solved.
    pub loglik: Option<f64>,
}

/// Outcome of one offset estimation: a solved root, or an honest diagnosis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeltaEstimate {
    Solved { delta: f64, residual: f64 },
    /// Score has one sign over the whole bracket; the maximizer is at a boundary.
    Boundary { f_lo: f64, f_hi: f64 },
    /// Score vanishes identically; the data carry no information on the offset.
    Flat,
}

impl DeltaEstimate {
    pub fn solved(&self) -> Option<f64> {
        match self {
            DeltaEstimate::Solved { delta, .. } => Some(*delta),
            _ => None,
        }
    }
}

fn estimate_delta_diagnosed(log: &EventLog, side: DegreeSide) -> Result<DeltaEstimate> {
    match estimate_delta(log, side) {
        Ok(fit) => Ok(DeltaEstimate::Solved {
            delta: fit.delta,
            residual: fit.residual,
        }),
        Err(Error::FlatScore) => Ok(DeltaEstimate::Flat),
        Err(Error::NoRoot { f_lo, f_hi }) => Ok(DeltaEstimate::Boundary { f_lo, f_hi }),
        Err(e) => Err(e),
    }
}

pub fn fit_theta(log: &EventLog) -> Result<ThetaFit> {
    let (alpha, beta) = estimate_alpha_beta(log)?;
    let delta_in = estimate_delta_diagnosed(log, DegreeSide::In)?;
    let delta_out = estimate_delta_diagnosed(log, DegreeSide::Out)?;
    let loglik = match (delta_in.solved(), delta_out.solved()) {
        (Some(di), Some(dout)) => {
            let theta = GlobalParams::new(alpha, beta, di, dout)?;
            Some(loglik_theta(log, &theta))
        }
        _ => None,
    };
    Ok(ThetaFit {
        alpha,
        beta,
        delta_in,
        delta_out,
        loglik,
    })
}
