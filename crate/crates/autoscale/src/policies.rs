//! Scheduling policies evaluated against the learning agent: the
//! brute-force oracle, fixed single-target baselines, and the two
//! prediction-based comparators (linear regression and k-nearest-neighbor).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::agent::{compute_reward, observe_state, Hyperparams, QTable};
use crate::envsim::{simulate_execution, variance_grid_cells, VarianceSnapshot};
use crate::exec;
use crate::profiles::{enumerate_actions, Action, NnProfile, Precision, ProcessorKind, WorldConfig};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("k must be a positive odd integer, got {0}")]
    BadK(usize),
}

/// A deterministic decision rule mapping (world, nn, snapshot) to an index
/// into `enumerate_actions(world)`.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn decide(&self, world: &WorldConfig, nn: &NnProfile, snap: &VarianceSnapshot) -> usize;
}

fn simulate_reward(
    world: &WorldConfig,
    nn: &NnProfile,
    action: Action,
    snap: &VarianceSnapshot,
    hp: &Hyperparams,
) -> f64 {
    let outcome = simulate_execution(world, nn, action, snap)
        .expect("enumerated actions always simulate");
    compute_reward(&outcome, nn, hp)
}

/// Brute force over the whole action space: simulate every action under the
/// snapshot and return the reward argmax (ties to the lowest index).
pub fn oracle_decide(
    world: &WorldConfig,
    nn: &NnProfile,
    snap: &VarianceSnapshot,
    hp: &Hyperparams,
) -> usize {
    let actions = enumerate_actions(world);
    let mut best = 0;
    let mut best_reward = f64::NEG_INFINITY;
    for (i, action) in actions.iter().enumerate() {
        let reward = simulate_reward(world, nn, *action, snap, hp);
        if reward > best_reward {
            best = i;
            best_reward = reward;
        }
    }
    best
}

/// The oracular upper-bound policy.
pub struct OraclePolicy {
    pub hp: Hyperparams,
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn decide(&self, world: &WorldConfig, nn: &NnProfile, snap: &VarianceSnapshot) -> usize {
        oracle_decide(world, nn, snap, &self.hp)
    }
}

/// Always the same action (Edge(CPU FP32), Cloud, Connected Edge).
pub struct FixedActionPolicy {
    name: String,
    action_index: usize,
}

impl Policy for FixedActionPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&self, _: &WorldConfig, _: &NnProfile, _: &VarianceSnapshot) -> usize {
        self.action_index
    }
}

/// The most rewarding local action per request (the oracle restricted to
/// on-device execution).
pub struct EdgeBestPolicy {
    pub hp: Hyperparams,
}

impl Policy for EdgeBestPolicy {
    fn name(&self) -> &str {
        "edge-best"
    }

    fn decide(&self, world: &WorldConfig, nn: &NnProfile, snap: &VarianceSnapshot) -> usize {
        let actions = enumerate_actions(world);
        let mut best = 0;
        let mut best_reward = f64::NEG_INFINITY;
        for (i, action) in actions.iter().enumerate() {
            if !matches!(action, Action::Local { .. }) {
                continue;
            }
            let reward = simulate_reward(world, nn, *action, snap, hp_ref(&self.hp));
            if reward > best_reward {
                best = i;
                best_reward = reward;
            }
        }
        best
    }
}

// Keeps the borrow in EdgeBestPolicy::decide tidy.
fn hp_ref(hp: &Hyperparams) -> &Hyperparams {
    hp
}

/// A trained agent evaluated greedily (epsilon = 0).
pub struct AgentPolicy {
    q: QTable,
}

impl AgentPolicy {
    pub fn new(q: QTable, world: &WorldConfig) -> Result<AgentPolicy, crate::agent::AgentError> {
        if !q.matches_world(world) {
            return Err(crate::agent::AgentError::ActionSetMismatch);
        }
        Ok(AgentPolicy { q })
    }

    pub fn table(&self) -> &QTable {
        &self.q
    }
}

impl Policy for AgentPolicy {
    fn name(&self) -> &str {
        "agent"
    }

    fn decide(&self, _: &WorldConfig, nn: &NnProfile, snap: &VarianceSnapshot) -> usize {
        self.q.argmax(&observe_state(nn, snap))
    }
}

/// Fixed baselines available in a world, in the canonical order
/// Edge(CPU FP32), Edge(Best), Cloud, Connected Edge. Baselines whose
/// platform is absent are omitted, with a warning per omission.
pub fn fixed_policies(
    world: &WorldConfig,
    hp: &Hyperparams,
) -> (Vec<Box<dyn Policy>>, Vec<String>) {
    let actions = enumerate_actions(world);
    let mut policies: Vec<Box<dyn Policy>> = Vec::new();
    let mut warnings = Vec::new();

    let edge_cpu_fp32 = world.edge.processor(ProcessorKind::Cpu).and_then(|cpu| {
        let top = cpu.vf_steps.len() - 1;
        actions.iter().position(|a| {
            matches!(a, Action::Local { processor: ProcessorKind::Cpu, vf_index, precision }
                if *vf_index == top && *precision == Precision::Fp32)
        })
    });
    match edge_cpu_fp32 {
        Some(action_index) => policies.push(Box::new(FixedActionPolicy {
            name: "edge-cpu".to_string(),
            action_index,
        })),
        None => warnings.push("edge-cpu omitted: edge CPU has no fp32 support".to_string()),
    }

    policies.push(Box::new(EdgeBestPolicy { hp: *hp }));

    match actions.iter().position(|a| {
        matches!(a, Action::Remote { platform: crate::profiles::RemotePlatform::Cloud })
    }) {
        Some(action_index) => policies.push(Box::new(FixedActionPolicy {
            name: "cloud".to_string(),
            action_index,
        })),
        None => warnings.push("cloud omitted: world has no cloud platform".to_string()),
    }

    match actions.iter().position(|a| {
        matches!(a, Action::Remote { platform: crate::profiles::RemotePlatform::ConnectedEdge })
    }) {
        Some(action_index) => policies.push(Box::new(FixedActionPolicy {
            name: "connected-edge".to_string(),
            action_index,
        })),
        None => {
            warnings.push("connected-edge omitted: world has no connected edge".to_string())
        }
    }

    (policies, warnings)
}

// ---------------------------------------------------------------------------
// Prediction-based comparators
// ---------------------------------------------------------------------------

/// One observation of the simulator used to fit the regression comparator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// nn layer counts, mac count, variance snapshot fields, action index.
    pub features: Vec<f64>,
    pub latency_s: f64,
    pub energy_j: f64,
}

/// Feature vector of (nn, snapshot): layer counts, mac count, snapshot.
pub fn nn_snapshot_features(nn: &NnProfile, snap: &VarianceSnapshot) -> Vec<f64> {
    vec![
        f64::from(nn.conv_layers),
        f64::from(nn.fc_layers),
        f64::from(nn.rc_layers),
        nn.mac_count_millions,
        snap.co_cpu_util,
        snap.co_mem_util,
        snap.rssi_wlan_dbm,
        snap.rssi_p2p_dbm,
    ]
}

/// LR features: the (nn, snapshot) features plus the action index.
pub fn lr_features(nn: &NnProfile, snap: &VarianceSnapshot, action_index: usize) -> Vec<f64> {
    let mut f = nn_snapshot_features(nn, snap);
    f.push(action_index as f64);
    f
}

/// Ordinary-least-squares predictor of latency and energy per action.
/// Decisions filter actions by predicted feasibility (predicted latency
/// below the QoS target, table accuracy at or above the requirement) and
/// pick the minimum predicted energy.
pub struct LrPolicy {
    latency_weights: DVector<f64>,
    energy_weights: DVector<f64>,
}

fn design_matrix(samples: &[TrainingSample]) -> DMatrix<f64> {
    let d = samples[0].features.len();
    DMatrix::from_fn(samples.len(), d + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            samples[r].features[c - 1]
        }
    })
}

/// Solve the normal equations; fall back to the SVD pseudo-inverse when
/// the Gram matrix is rank-deficient.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    match xtx.clone().try_inverse() {
        Some(inv) => inv * xty,
        None => {
            let pinv = xtx
                .svd(true, true)
                .pseudo_inverse(1e-10)
                .expect("svd of a square matrix");
            pinv * xty
        }
    }
}

pub fn fit_lr(samples: &[TrainingSample]) -> Result<LrPolicy, FitError> {
    let need = samples.first().map(|s| s.features.len() + 1).unwrap_or(1);
    if samples.len() < need {
        return Err(FitError::TooFewSamples {
            got: samples.len(),
            need,
        });
    }
    let x = design_matrix(samples);
    let lat = DVector::from_fn(samples.len(), |r, _| samples[r].latency_s);
    let en = DVector::from_fn(samples.len(), |r, _| samples[r].energy_j);
    Ok(LrPolicy {
        latency_weights: least_squares(&x, &lat),
        energy_weights: least_squares(&x, &en),
    })
}

impl LrPolicy {
    fn predict(&self, weights: &DVector<f64>, features: &[f64]) -> f64 {
        weights[0]
            + features
                .iter()
                .enumerate()
                .map(|(i, f)| weights[i + 1] * f)
                .sum::<f64>()
    }

    pub fn predict_latency(&self, features: &[f64]) -> f64 {
        self.predict(&self.latency_weights, features)
    }

    pub fn predict_energy(&self, features: &[f64]) -> f64 {
        self.predict(&self.energy_weights, features)
    }
}

impl Policy for LrPolicy {
    fn name(&self) -> &str {
        "lr"
    }

    fn decide(&self, world: &WorldConfig, nn: &NnProfile, snap: &VarianceSnapshot) -> usize {
        let actions = enumerate_actions(world);
        let mut best: Option<(bool, f64, usize)> = None;
        for (i, action) in actions.iter().enumerate() {
            let f = lr_features(nn, snap, i);
            let latency = self.predict_latency(&f);
            let energy = self.predict_energy(&f);
            let accuracy = nn
                .accuracy_for(action.platform_kind(), action.precision())
                .unwrap_or(0.0);
            let feasible = latency < nn.qos_target_s && accuracy >= nn.accuracy_requirement;
            let candidate = (feasible, energy, i);
            best = Some(match best {
                None => candidate,
                Some(cur) => {
                    // Feasible beats infeasible; then lower predicted energy;
                    // then the earlier action.
                    let better = (candidate.0 && !cur.0)
                        || (candidate.0 == cur.0 && candidate.1 < cur.1);
                    if better {
                        candidate
                    } else {
                        cur
                    }
                }
            });
        }
        best.map(|(_, _, i)| i).unwrap_or(0)
    }
}

/// Majority vote among the k nearest neighbors in z-score-normalized
/// feature space (Euclidean distance).
pub struct KnnPolicy {
    k: usize,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

pub fn fit_knn(samples: &[(Vec<f64>, usize)], k: usize) -> Result<KnnPolicy, FitError> {
    if k == 0 || k % 2 == 0 {
        return Err(FitError::BadK(k));
    }
    if samples.len() < k {
        return Err(FitError::TooFewSamples {
            got: samples.len(),
            need: k,
        });
    }
    let d = samples[0].0.len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for (f, _) in samples {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for (f, _) in samples {
        for ((s, v), m) in scale.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = s.sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let points = samples
        .iter()
        .map(|(f, _)| {
            f.iter()
                .zip(mean.iter().zip(&scale))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();
    Ok(KnnPolicy {
        k,
        points,
        labels: samples.iter().map(|(_, l)| *l).collect(),
        mean,
        scale,
    })
}

impl KnnPolicy {
    pub fn classify(&self, features: &[f64]) -> usize {
        let query: Vec<f64> = features
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let mut dists: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = p
                    .iter()
                    .zip(&query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut votes: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
        for (_, idx) in dists.iter().take(self.k) {
            *votes.entry(self.labels[*idx]).or_insert(0) += 1;
        }
        // Majority; ties resolve to the smallest action index because the
        // map iterates keys in ascending order and ties do not replace.
        let mut best_label = 0;
        let mut best_count = 0;
        for (label, count) in votes {
            if count > best_count {
                best_label = label;
                best_count = count;
            }
        }
        best_label
    }
}

impl Policy for KnnPolicy {
    fn name(&self) -> &str {
        "knn"
    }

    fn decide(&self, _: &WorldConfig, nn: &NnProfile, snap: &VarianceSnapshot) -> usize {
        self.classify(&nn_snapshot_features(nn, snap))
    }
}

// ---------------------------------------------------------------------------
// Comparator training data from the simulator's static variance grid
// ---------------------------------------------------------------------------

/// LR training set: every (variance cell, nn, action) triple simulated once.
pub fn generate_lr_samples(world: &WorldConfig) -> Vec<TrainingSample> {
    let actions = enumerate_actions(world);
    let cells = variance_grid_cells();
    let mut samples = Vec::with_capacity(cells.len() * world.nns.len() * actions.len());
    for snap in &cells {
        for nn in &world.nns {
            for (i, action) in actions.iter().enumerate() {
                let out = simulate_execution(world, nn, *action, snap)
                    .expect("enumerated actions always simulate");
                samples.push(TrainingSample {
                    features: lr_features(nn, snap, i),
                    latency_s: out.latency_s,
                    energy_j: out.energy.total_j,
                });
            }
        }
    }
    samples
}

/// KNN training set: every (variance cell, nn) pair labeled with the oracle
/// action. Labeling brute-forces the action space per pair, so it runs the
/// cells in parallel.
pub fn generate_knn_samples(world: &WorldConfig, hp: &Hyperparams) -> Vec<(Vec<f64>, usize)> {
    let cells = variance_grid_cells();
    let work: Vec<(VarianceSnapshot, usize)> = cells
        .iter()
        .flat_map(|snap| (0..world.nns.len()).map(|i| (*snap, i)))
        .collect();
    exec::map_items(work, |(snap, nn_idx)| {
        let nn = &world.nns[nn_idx];
        (
            nn_snapshot_features(nn, &snap),
            oracle_decide(world, nn, &snap, hp),
        )
    })
}
