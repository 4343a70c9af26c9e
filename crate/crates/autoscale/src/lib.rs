//! Deterministic simulator of an edge / connected-edge / cloud DNN-inference
//! execution environment, plus an adaptive Q-learning engine that learns the
//! most energy-efficient execution target per inference under stochastic
//! runtime variance (co-running interference, wireless signal strength).
//!
//! The crate is organized around the pipeline:
//!
//! * [`profiles`] — device/processor/network/NN data model and world loading
//! * [`energy`] — the four device-centric energy models
//! * [`envsim`] — one-inference simulation and variance scenario generators
//! * [`agent`] — state discretization, reward, Q-table, training, transfer
//! * [`policies`] — oracle, fixed baselines, and LR/KNN comparators
//! * [`harness`] — experiment runner, metrics, and report emission
//!
//! Everything is deterministic given a seed: RNG streams are derived per
//! (seed, domain, index) so experiments can run in parallel (see [`exec`])
//! and still produce byte-identical reports.

pub mod agent;
pub mod energy;
pub mod envsim;
pub mod exec;
pub mod fmt;
pub mod harness;
pub mod policies;
pub mod profiles;
pub mod stream;

pub use agent::{
    detect_convergence, train, transfer_init, DiscreteState, Hyperparams, QTable, RewardHistory,
    TrainConfig,
};
pub use envsim::{ExecutionOutcome, ScenarioSpec, VarianceSnapshot};
pub use harness::{ComparisonTable, ExperimentReport, NnSchedule, RunRecord};
pub use profiles::{
    load_world, load_world_str, Action, DeviceProfile, NnProfile, Precision, ProcessorKind,
    WorldConfig,
};
