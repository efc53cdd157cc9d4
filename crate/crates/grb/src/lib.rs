//! grb — a toolkit for benchmarking the adversarial robustness of graph
//! neural networks.
//!
//! The crate trains GNNs on attributed graphs, runs graph-injection and
//! graph-modification attacks under explicit budgets, applies defenses, and
//! scores both sides on rank-weighted leaderboards. Everything is seeded and
//! replayable.
//!
//! The pipeline, end to end:
//!
//! 1. [`synth`] or [`io`] produce a [`graph::GraphBundle`];
//! 2. [`prep`] normalizes features and splits nodes into train/val and
//!    Easy/Medium/Hard test tiers by degree;
//! 3. [`train`] fits models from the [`models`] zoo, optionally with
//!    adversarial training; [`svd`] adds low-rank preprocessing defenses;
//! 4. [`attack`] perturbs graphs against a surrogate within an
//!    [`prep::AttackBudget`];
//! 5. [`eval`] runs the attack-by-defense matrix and emits leaderboards.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `grb` binary for the command-line pipeline.

pub mod attack;
pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod models;
pub mod operator;
pub mod prep;
pub mod svd;
pub mod synth;
pub mod tape;
pub mod train;
