//! Neural surrogates for DC and AC optimal power flow, and the tooling to
//! measure how their accuracy, feasibility and speed scale with training data
//! volume and training compute.
//!
//! The crate is organised bottom-up:
//!
//! * [`case`] parses MATPOWER case files and builds admittance matrices.
//! * [`powerflow`] solves DC and Newton–Raphson AC power flow.
//! * [`dataset`] generates labelled OPF samples (DCOPF by interior point,
//!   ACOPF by a reduced-space finite-difference optimizer).
//! * [`neural`] is a small dense MLP with Adam and FLOPs accounting.
//! * [`training`] holds the DNN and physics-informed training regimes.
//! * [`metrics`] computes percentage MAE and mean-max constraint violations.
//! * [`scaling`] fits power laws and extracts compute frontiers.
//! * [`sweep`] orchestrates data- and compute-scaling experiments and writes
//!   their artifacts.

pub mod case;
pub mod dataset;
pub mod metrics;
pub mod neural;
pub mod powerflow;
pub mod scaling;
pub mod sweep;
pub mod training;

pub use case::{Branch, Bus, BusType, CaseError, Generator, NetworkCase};
pub use dataset::{OpfDataset, OpfSample, ProblemKind};
pub use metrics::MetricReport;
pub use neural::{MlpConfig, MlpModel, Surrogate};
pub use scaling::{Observation, PowerLawFit};
pub use training::{Regime, RunRecord, TrainConfig};
