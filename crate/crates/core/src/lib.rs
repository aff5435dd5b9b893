//! Exact and approximate best-k-term Haar wavelet histograms over large key
//! datasets, computed on a simulated map-reduce cluster with byte-accurate
//! communication accounting.
//!
//! The library has five layers:
//!
//! * [`wavelet`] — Haar transform (dense, sparse, 2D), inverse transform,
//!   top-k coefficient selection, and reconstruction error (SSE).
//! * [`ingest`] — binary dataset files, Zipfian data generation, and the
//!   random-offset without-replacement split sampler.
//! * [`sim`] — a deterministic single-reducer map-reduce simulator with
//!   multi-round jobs, persisted per-split state, and a communication ledger.
//! * [`exact`] — the Send-V and Send-Coef baselines and the three-round
//!   H-WTopk protocol for exact top-k coefficients with signed scores.
//! * [`approx`] — one-round sampling histograms: Basic-S, Improved-S, and
//!   the two-level sampler TwoLevel-S with its unbiased estimator.
//!
//! [`experiment`] orchestrates parameter sweeps over all six algorithms and
//! reports SSE and communication per run as CSV rows.

pub mod approx;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod ingest;
pub mod sim;
pub mod wavelet;

pub use error::{Error, Result};
