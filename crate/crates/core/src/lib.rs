//! Deterministic simulator for clustered federated learning with
//! agent-level fairness metrics.
//!
//! The crate provides:
//!
//! * [`data_synth`] — seeded generation of separable heterogeneous agent
//!   datasets (single-outlier and multi-cluster scenarios);
//! * [`models`] — linear-regression and ridge-logistic losses with exact
//!   gradients and closed-form population quantities for the linear case;
//! * [`fl_engine`] — round-based federated training: FedAvg and per-cluster
//!   FedAvg over a hard assignment;
//! * [`focus_em`] — the FOCUS algorithm: EM alternation of soft cluster
//!   labels and cluster models, ensemble inference, one-shot labeling;
//! * [`fairness`] — excess risks (analytic and surrogate), the FAA spread
//!   metric, agnostic loss, and accuracy parity;
//! * [`check`] — independent numerical oracles used by the test suites.
//!
//! Every run is a pure function of its configuration and seed: random
//! draws come from counter-keyed streams ([`rng`]) and all floating-point
//! reductions happen in fixed order, so results are bit-reproducible
//! regardless of thread count.

pub mod check;
pub mod config;
pub mod data_synth;
pub mod error;
pub mod fairness;
pub mod fl_engine;
pub mod focus_em;
pub mod models;
pub mod rng;

pub use config::{ModelKindTag, ScenarioConfig, ScenarioKind};
pub use data_synth::{AgentDataset, ClusterSpec, Scenario};
pub use error::{Error, Result};
pub use fairness::{ExcessMethod, ExcessRiskVector, FairnessReport};
pub use fl_engine::{InitStrategy, RoundLog};
pub use focus_em::{FocusHistory, SoftLabelMatrix};
pub use models::{ClusterModels, ModelKind, ParamVector, Prediction};
