//! End-to-end simulation and analysis of time-bin entanglement Bell tests.
//!
//! A pulsed pump behind an unbalanced interferometer produces photon pairs in
//! a superposition of two emission times; each measurement station can delay
//! its photon by the same offset, so detections land in three slots per side.
//! Only the coincident central-slot events interfere, and selecting them
//! opens the well-known postselection loophole: a local model whose slot
//! assignment depends on the local setting mimics the quantum statistics.
//! Chained inequalities with enough settings beat the weakened bound that
//! survives the postselection, at the price of a steep visibility
//! requirement.
//!
//! The crate provides:
//!
//! * [`settings`]: phase schedules for chained runs and the four-run protocol
//!   used with a single detector per side;
//! * [`quantum`]: the closed-form joint outcome table, visibility
//!   degradation, and the chained predictions;
//! * [`lhv`]: an explicit local hidden variable model that reproduces the
//!   quantum table exactly under static settings, plus the integration oracle
//!   and Monte Carlo cross-check that verify it;
//! * [`bell`]: the chained functionals (correlation and CH probability
//!   forms), their classical / time-bin / trivial bounds, and an exact
//!   deterministic-strategy enumeration of the classical bound;
//! * [`simulator`]: seeded Monte Carlo generation of detector timetag
//!   streams from either model, with the TTB1 binary format in [`io`];
//! * [`analysis`]: histograms, coincidence counting, fringe fitting,
//!   probability and correlation estimation, and the full pipeline from raw
//!   streams to a Bell violation report.

pub mod analysis;
pub mod bell;
pub mod error;
pub mod io;
pub mod lhv;
pub mod quantum;
pub mod rng;
pub mod settings;
pub mod simulator;

pub use error::{Error, Result};
