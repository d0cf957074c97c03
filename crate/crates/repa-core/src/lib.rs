//! Directed preferential attachment networks with class-dependent reciprocity.
//!
//! The crate models a growing directed graph in which every new edge is drawn
//! by degree-weighted attachment and is answered by a reverse edge with a
//! probability that depends on the latent communication classes of the two
//! endpoints. It provides:
//!
//! * an event-log data model and replay mechanics ([`graph`]),
//! * a network simulator ([`simulate`]),
//! * preprocessing of raw temporal edgelists into event logs ([`ingest`]),
//! * likelihood evaluation and maximum likelihood for the attachment
//!   parameters ([`likelihood`]),
//! * Gibbs and telescoping samplers for the class-dependent reciprocity
//!   mixture ([`mcmc`]),
//! * coordinate-ascent variational inference and variational EM
//!   ([`variational`]),
//! * heavy-tail tooling used for initialization and diagnostics
//!   ([`extremes`]),
//! * model-selection helpers over a range of class counts ([`select`]).
//!
//! Everything is deterministic given an explicit RNG seed. Batch helpers in
//! [`exec`] fan independent jobs out over rayon when the `parallel` feature
//! (on by default) is enabled and run sequentially otherwise.

pub mod align;
pub mod error;
pub mod exec;
pub mod extremes;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod params;
pub mod select;
pub mod simulate;
pub mod specfn;
pub mod variational;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
