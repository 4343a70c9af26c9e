//! The adaptive scheduling engine: discrete state observation, reward,
//! Q-table with epsilon-greedy selection and the one-step Q-learning
//! update, training over scenarios, convergence detection, and cross-device
//! transfer of learned tables.

use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use rand::Rng;
use thiserror::Error;

use crate::envsim::{
    simulate_execution, step_scenario, variance_grid_cells, ExecutionOutcome, Generator,
    ScenarioSpec, SimError, VarianceSnapshot,
};
use crate::profiles::{
    enumerate_actions, Action, NnProfile, Precision, ProcessorKind, RemotePlatform, WorldConfig,
};
use crate::stream;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("q-table action set does not match the world's action space")]
    ActionSetMismatch,
    #[error("unknown nn {0:?}")]
    UnknownNn(String),
    #[error("no nns selected for training")]
    EmptyNnSet,
}

#[derive(Debug, Error)]
pub enum QTableError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad q-table file: {0}")]
    Format(String),
}

// ---------------------------------------------------------------------------
// Discrete state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvBin {
    Small,
    Medium,
    Large,
    Larger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerBin {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacBin {
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoRunBin {
    None,
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RssiStateBin {
    Regular,
    Weak,
}

/// The 8-feature discretized scheduling state. The full lattice has
/// 4*2*2*3*4*4*2*2 = 3072 cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscreteState {
    pub s_conv: ConvBin,
    pub s_fc: LayerBin,
    pub s_rc: LayerBin,
    pub s_mac: MacBin,
    pub s_co_cpu: CoRunBin,
    pub s_co_mem: CoRunBin,
    pub s_rssi_w: RssiStateBin,
    pub s_rssi_p: RssiStateBin,
}

/// Number of cells in the discrete state lattice.
pub const STATE_COUNT: usize = 3072;

impl DiscreteState {
    /// Dense index in 0..STATE_COUNT (mixed-radix encoding).
    pub fn index(&self) -> usize {
        let mut i = self.s_conv as usize;
        i = i * 2 + self.s_fc as usize;
        i = i * 2 + self.s_rc as usize;
        i = i * 3 + self.s_mac as usize;
        i = i * 4 + self.s_co_cpu as usize;
        i = i * 4 + self.s_co_mem as usize;
        i = i * 2 + self.s_rssi_w as usize;
        i = i * 2 + self.s_rssi_p as usize;
        i
    }

    pub fn from_index(mut i: usize) -> DiscreteState {
        debug_assert!(i < STATE_COUNT);
        let s_rssi_p = [RssiStateBin::Regular, RssiStateBin::Weak][i % 2];
        i /= 2;
        let s_rssi_w = [RssiStateBin::Regular, RssiStateBin::Weak][i % 2];
        i /= 2;
        let co = [CoRunBin::None, CoRunBin::Small, CoRunBin::Medium, CoRunBin::Large];
        let s_co_mem = co[i % 4];
        i /= 4;
        let s_co_cpu = co[i % 4];
        i /= 4;
        let s_mac = [MacBin::Small, MacBin::Medium, MacBin::Large][i % 3];
        i /= 3;
        let layer = [LayerBin::Small, LayerBin::Large];
        let s_rc = layer[i % 2];
        i /= 2;
        let s_fc = layer[i % 2];
        i /= 2;
        let s_conv = [ConvBin::Small, ConvBin::Medium, ConvBin::Large, ConvBin::Larger][i % 4];
        DiscreteState {
            s_conv,
            s_fc,
            s_rc,
            s_mac,
            s_co_cpu,
            s_co_mem,
            s_rssi_w,
            s_rssi_p,
        }
    }

    pub fn all() -> impl Iterator<Item = DiscreteState> {
        (0..STATE_COUNT).map(DiscreteState::from_index)
    }
}

fn bin_co_running(util: f64) -> CoRunBin {
    // Bins: None (0), Small (<25%), Medium (<75%), Large (>=75%); the
    // [75%, 100%) range maps to Large for contiguous coverage.
    if util == 0.0 {
        CoRunBin::None
    } else if util < 0.25 {
        CoRunBin::Small
    } else if util < 0.75 {
        CoRunBin::Medium
    } else {
        CoRunBin::Large
    }
}

fn bin_rssi(rssi_dbm: f64) -> RssiStateBin {
    if rssi_dbm > -80.0 {
        RssiStateBin::Regular
    } else {
        RssiStateBin::Weak
    }
}

/// Discretize the observable features of (workload, runtime variance).
pub fn observe_state(nn: &NnProfile, snap: &VarianceSnapshot) -> DiscreteState {
    let s_conv = match nn.conv_layers {
        0..=29 => ConvBin::Small,
        30..=49 => ConvBin::Medium,
        50..=89 => ConvBin::Large,
        _ => ConvBin::Larger,
    };
    let s_fc = if nn.fc_layers < 10 {
        LayerBin::Small
    } else {
        LayerBin::Large
    };
    let s_rc = if nn.rc_layers < 10 {
        LayerBin::Small
    } else {
        LayerBin::Large
    };
    let s_mac = if nn.mac_count_millions < 1000.0 {
        MacBin::Small
    } else if nn.mac_count_millions < 2000.0 {
        MacBin::Medium
    } else {
        MacBin::Large
    };
    DiscreteState {
        s_conv,
        s_fc,
        s_rc,
        s_mac,
        s_co_cpu: bin_co_running(snap.co_cpu_util),
        s_co_mem: bin_co_running(snap.co_mem_util),
        s_rssi_w: bin_rssi(snap.rssi_wlan_dbm),
        s_rssi_p: bin_rssi(snap.rssi_p2p_dbm),
    }
}

// ---------------------------------------------------------------------------
// Reward
// ---------------------------------------------------------------------------

/// Learning hyperparameters. `learning_rate` and `discount` drive the
/// Q update, `epsilon` the exploration probability, `alpha`/`beta` weight
/// the latency and accuracy reward terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.9,
            discount: 0.1,
            epsilon: 0.1,
            alpha: 0.1,
            beta: 0.1,
        }
    }
}

/// Optional reward-term adjustments. The default is the verbatim rule:
/// energy in joules, latency in seconds, accuracy as a fraction, and the
/// latency term added (not subtracted) when the QoS target is met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardOptions {
    /// Negate the latency bonus of the QoS-met branch (sensitivity studies).
    pub negate_latency_term: bool,
    /// Divide the energy term by this unit (normalized-units switch).
    pub energy_unit_j: f64,
    /// Divide the latency term by this unit (normalized-units switch).
    pub latency_unit_s: f64,
}

impl Default for RewardOptions {
    fn default() -> Self {
        RewardOptions {
            negate_latency_term: false,
            energy_unit_j: 1.0,
            latency_unit_s: 1.0,
        }
    }
}

/// Reward of one execution outcome:
///
/// * accuracy below the requirement: `R = -accuracy`
/// * QoS met: `R = -energy + alpha * latency + beta * accuracy`
/// * QoS missed: `R = -energy + beta * accuracy`
pub fn compute_reward(outcome: &ExecutionOutcome, nn: &NnProfile, hp: &Hyperparams) -> f64 {
    compute_reward_with(outcome, nn, hp, &RewardOptions::default())
}

pub fn compute_reward_with(
    outcome: &ExecutionOutcome,
    nn: &NnProfile,
    hp: &Hyperparams,
    opts: &RewardOptions,
) -> f64 {
    if outcome.accuracy < nn.accuracy_requirement {
        return -outcome.accuracy;
    }
    let energy = outcome.energy.total_j / opts.energy_unit_j;
    let latency = outcome.latency_s / opts.latency_unit_s;
    let latency_term = if opts.negate_latency_term {
        -hp.alpha * latency
    } else {
        hp.alpha * latency
    };
    if outcome.latency_s < nn.qos_target_s {
        -energy + latency_term + hp.beta * outcome.accuracy
    } else {
        -energy + hp.beta * outcome.accuracy
    }
}

// ---------------------------------------------------------------------------
// Q-table
// ---------------------------------------------------------------------------

/// World-independent identity of an action, used to persist tables and to
/// match actions across devices during transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKey {
    Local {
        processor: ProcessorKind,
        vf_index: u16,
        vf_total: u16,
        precision: Precision,
    },
    Remote { platform: RemotePlatform },
}

impl ActionKey {
    /// Position of a local action's V/F step in [0, 1]; 1 for single-step
    /// processors (their only step is the top step).
    fn vf_position(&self) -> f64 {
        match self {
            ActionKey::Local {
                vf_index, vf_total, ..
            } => {
                if *vf_total <= 1 {
                    1.0
                } else {
                    f64::from(*vf_index) / f64::from(*vf_total - 1)
                }
            }
            ActionKey::Remote { .. } => 1.0,
        }
    }
}

/// Action keys of a world, parallel to `enumerate_actions`.
pub fn action_keys(world: &WorldConfig) -> Vec<ActionKey> {
    enumerate_actions(world)
        .into_iter()
        .map(|action| match action {
            Action::Local {
                processor,
                vf_index,
                precision,
            } => {
                let total = world
                    .edge
                    .processor(processor)
                    .map(|p| p.vf_steps.len())
                    .unwrap_or(1);
                ActionKey::Local {
                    processor,
                    vf_index: vf_index as u16,
                    vf_total: total as u16,
                    precision,
                }
            }
            Action::Remote { platform } => ActionKey::Remote { platform },
        })
        .collect()
}

/// The value function Q(S, A) as a dense table over the 3072-cell state
/// lattice and the world's ordered action set, plus per-pair visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    action_set: Vec<ActionKey>,
    values: Vec<f64>,
    visits: Vec<u32>,
}

/// Q values are initialized uniformly at random in this range; small
/// against reward magnitudes so the initial bias washes out quickly.
pub const INIT_RANGE: f64 = 0.01;

impl QTable {
    pub fn new_random(action_set: Vec<ActionKey>, rng: &mut impl Rng) -> QTable {
        assert!(!action_set.is_empty(), "action set must be nonempty");
        let n = STATE_COUNT * action_set.len();
        let values = (0..n).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE)).collect();
        QTable {
            action_set,
            values,
            visits: vec![0; n],
        }
    }

    pub fn action_set(&self) -> &[ActionKey] {
        &self.action_set
    }

    pub fn n_actions(&self) -> usize {
        self.action_set.len()
    }

    /// Whether this table was built for the given world's action space.
    pub fn matches_world(&self, world: &WorldConfig) -> bool {
        self.action_set == action_keys(world)
    }

    #[inline]
    fn slot(&self, state: &DiscreteState, action: usize) -> usize {
        state.index() * self.action_set.len() + action
    }

    pub fn q(&self, state: &DiscreteState, action: usize) -> f64 {
        self.values[self.slot(state, action)]
    }

    pub fn visits(&self, state: &DiscreteState, action: usize) -> u32 {
        self.visits[self.slot(state, action)]
    }

    /// Greedy action for a state: the argmax with ties broken by the
    /// lowest index in the action set.
    pub fn argmax(&self, state: &DiscreteState) -> usize {
        let row = &self.values[state.index() * self.action_set.len()..][..self.action_set.len()];
        let mut best = 0;
        for (i, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_q(&self, state: &DiscreteState) -> f64 {
        self.q(state, self.argmax(state))
    }

    // -- persistence ------------------------------------------------------

    const MAGIC: &'static [u8; 4] = b"ASQT";
    const VERSION: u32 = 1;

    /// Serialize to the versioned binary table format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.action_set.len();
        let mut out = Vec::with_capacity(16 + n * 7 + self.values.len() * 12);
        out.extend_from_slice(Self::MAGIC);
        out.write_u32::<LittleEndian>(Self::VERSION).unwrap();
        out.write_u32::<LittleEndian>(STATE_COUNT as u32).unwrap();
        out.write_u32::<LittleEndian>(n as u32).unwrap();
        for key in &self.action_set {
            match key {
                ActionKey::Local {
                    processor,
                    vf_index,
                    vf_total,
                    precision,
                } => {
                    out.push(0);
                    out.push(*processor as u8);
                    out.write_u16::<LittleEndian>(*vf_index).unwrap();
                    out.write_u16::<LittleEndian>(*vf_total).unwrap();
                    out.push(*precision as u8);
                }
                ActionKey::Remote { platform } => {
                    out.push(1);
                    out.push(*platform as u8);
                    out.write_u16::<LittleEndian>(0).unwrap();
                    out.write_u16::<LittleEndian>(0).unwrap();
                    out.push(0);
                }
            }
        }
        for v in &self.values {
            out.write_f64::<LittleEndian>(*v).unwrap();
        }
        for v in &self.visits {
            out.write_u32::<LittleEndian>(*v).unwrap();
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<QTable, QTableError> {
        let bad = |msg: &str| QTableError::Format(msg.to_string());
        if bytes.len() < 16 || &bytes[0..4] != Self::MAGIC {
            return Err(bad("missing magic"));
        }
        if LittleEndian::read_u32(&bytes[4..8]) != Self::VERSION {
            return Err(bad("unsupported version"));
        }
        let n_states = LittleEndian::read_u32(&bytes[8..12]) as usize;
        let n_actions = LittleEndian::read_u32(&bytes[12..16]) as usize;
        if n_states != STATE_COUNT || n_actions == 0 {
            return Err(bad("unexpected table dimensions"));
        }
        let expected = 16 + n_actions * 7 + n_states * n_actions * (8 + 4);
        if bytes.len() != expected {
            return Err(bad("truncated or oversized table"));
        }
        let mut action_set = Vec::with_capacity(n_actions);
        let mut off = 16;
        for _ in 0..n_actions {
            let tag = bytes[off];
            let kind = bytes[off + 1];
            let vf_index = LittleEndian::read_u16(&bytes[off + 2..off + 4]);
            let vf_total = LittleEndian::read_u16(&bytes[off + 4..off + 6]);
            let prec = bytes[off + 6];
            off += 7;
            let key = match tag {
                0 => ActionKey::Local {
                    processor: match kind {
                        0 => ProcessorKind::Cpu,
                        1 => ProcessorKind::Gpu,
                        2 => ProcessorKind::Dsp,
                        _ => return Err(bad("bad processor kind")),
                    },
                    vf_index,
                    vf_total,
                    precision: match prec {
                        0 => Precision::Fp32,
                        1 => Precision::Fp16,
                        2 => Precision::Int8,
                        _ => return Err(bad("bad precision")),
                    },
                },
                1 => ActionKey::Remote {
                    platform: match kind {
                        0 => RemotePlatform::ConnectedEdge,
                        1 => RemotePlatform::Cloud,
                        _ => return Err(bad("bad platform")),
                    },
                },
                _ => return Err(bad("bad action tag")),
            };
            action_set.push(key);
        }
        let n = n_states * n_actions;
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            values.push(LittleEndian::read_f64(&bytes[off + i * 8..off + i * 8 + 8]));
        }
        off += n * 8;
        let mut visits = Vec::with_capacity(n);
        for i in 0..n {
            visits.push(LittleEndian::read_u32(&bytes[off + i * 4..off + i * 4 + 4]));
        }
        Ok(QTable {
            action_set,
            values,
            visits,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), QTableError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<QTable, QTableError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Epsilon-greedy selection: with probability epsilon a uniformly random
/// action (explored = true), otherwise the greedy argmax with lowest-index
/// tie-break. Returns the index into the table's action set.
pub fn select_action(
    q: &QTable,
    state: &DiscreteState,
    hp: &Hyperparams,
    rng: &mut impl Rng,
) -> (usize, bool) {
    if hp.epsilon > 0.0 && rng.gen::<f64>() < hp.epsilon {
        (rng.gen_range(0..q.n_actions()), true)
    } else {
        (q.argmax(state), false)
    }
}

/// One Q-learning update:
/// `Q(S,A) += learning_rate * (R + discount * max_a' Q(S',a') - Q(S,A))`.
pub fn update_q(
    q: &mut QTable,
    state: &DiscreteState,
    action: usize,
    reward: f64,
    next_state: &DiscreteState,
    hp: &Hyperparams,
) {
    let bootstrap = q.max_q(next_state);
    let slot = q.slot(state, action);
    let old = q.values[slot];
    q.values[slot] = old + hp.learning_rate * (reward + hp.discount * bootstrap - old);
    q.visits[slot] += 1;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One training episode's bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSample {
    pub reward: f64,
    /// Whether the action was an epsilon exploration rather than greedy.
    pub explored: bool,
}

/// Per-episode reward history of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardHistory {
    pub episodes: Vec<EpisodeSample>,
}

impl RewardHistory {
    pub fn from_rewards(rewards: impl IntoIterator<Item = f64>) -> RewardHistory {
        RewardHistory {
            episodes: rewards
                .into_iter()
                .map(|reward| EpisodeSample {
                    reward,
                    explored: false,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.episodes.iter().map(|e| e.reward)
    }

    pub fn mean_reward(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.rewards().sum::<f64>() / self.episodes.len() as f64
    }
}

/// How training picks the NN of each inference request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleMode {
    /// Cycle through the selected NNs in declared order.
    #[default]
    RoundRobin,
    /// Uniformly random NN per request (seed-derived).
    Random,
}

#[derive(Debug, Clone, Default)]
pub struct TrainConfig {
    /// Episodes per (nn, variance cell). Static scenarios have one cell;
    /// the variance-grid generator has 64.
    pub episodes_per_cell: usize,
    pub hp: Hyperparams,
    /// Restrict training to these NNs; `None` trains on the whole catalog.
    pub nn_names: Option<Vec<String>>,
    pub schedule: ScheduleMode,
    pub reward: RewardOptions,
    /// Warm-start table (e.g. from `transfer_init`); fresh random otherwise.
    pub init: Option<QTable>,
}

impl TrainConfig {
    pub fn new(episodes_per_cell: usize) -> TrainConfig {
        TrainConfig {
            episodes_per_cell,
            ..TrainConfig::default()
        }
    }
}

/// Train a Q-table on a world and scenario: observe, select, simulate,
/// reward, observe the next request's state, update. Returns the table and
/// the per-episode reward history.
pub fn train(
    world: &WorldConfig,
    scenario: &ScenarioSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(QTable, RewardHistory), AgentError> {
    let actions = enumerate_actions(world);
    let keys = action_keys(world);

    let nns: Vec<&NnProfile> = match &cfg.nn_names {
        None => world.nns.iter().collect(),
        Some(names) => names
            .iter()
            .map(|n| world.nn(n).ok_or_else(|| AgentError::UnknownNn(n.clone())))
            .collect::<Result<_, _>>()?,
    };
    if nns.is_empty() {
        return Err(AgentError::EmptyNnSet);
    }

    let cells: Vec<Option<VarianceSnapshot>> = match &scenario.generator {
        Generator::VarianceGrid => variance_grid_cells().into_iter().map(Some).collect(),
        _ => vec![None],
    };
    let episodes_per_cell = cfg.episodes_per_cell.max(1) * nns.len();
    let total = cells.len() * episodes_per_cell;

    let scenario_seed = stream::derive(seed, "scenario", 0);
    let mut select_rng = stream::rng(seed, "select", 0);

    // The NN index of every request is precomputed so the post-update state
    // S' (the next request) is observable one step ahead.
    let nn_schedule: Vec<usize> = match cfg.schedule {
        ScheduleMode::RoundRobin => (0..=total).map(|e| e % nns.len()).collect(),
        ScheduleMode::Random => {
            let mut rng = stream::rng(seed, "nn-schedule", 0);
            (0..=total).map(|_| rng.gen_range(0..nns.len())).collect()
        }
    };

    let snapshot_at = |episode: usize| -> VarianceSnapshot {
        let cell = (episode / episodes_per_cell).min(cells.len() - 1);
        match cells[cell] {
            Some(snap) => snap,
            None => step_scenario(scenario, episode as u64, scenario_seed),
        }
    };

    let mut q = match &cfg.init {
        Some(init) => {
            if init.action_set != keys {
                return Err(AgentError::ActionSetMismatch);
            }
            init.clone()
        }
        None => QTable::new_random(keys, &mut stream::rng(seed, "q-init", 0)),
    };

    let mut history = RewardHistory::default();
    let mut state = observe_state(nns[nn_schedule[0]], &snapshot_at(0));
    for episode in 0..total {
        let nn = nns[nn_schedule[episode]];
        let snap = snapshot_at(episode);
        let (action_idx, explored) = select_action(&q, &state, &cfg.hp, &mut select_rng);
        let outcome = simulate_execution(world, nn, actions[action_idx], &snap)?;
        let reward = compute_reward_with(&outcome, nn, &cfg.hp, &cfg.reward);

        let next_state = observe_state(
            nns[nn_schedule[(episode + 1) % nn_schedule.len()]],
            &snapshot_at((episode + 1).min(total.saturating_sub(1))),
        );
        update_q(&mut q, &state, action_idx, reward, &next_state, &cfg.hp);
        history.episodes.push(EpisodeSample { reward, explored });
        state = next_state;
    }
    Ok((q, history))
}

// ---------------------------------------------------------------------------
// Transfer
// ---------------------------------------------------------------------------

/// Initialize a table for a new action set from a trained sibling table.
/// Local actions match by (processor kind, precision, nearest relative V/F
/// position); remote actions by platform. Unmatched target actions get the
/// usual random initialization. Visit counts reset to zero.
pub fn transfer_init(
    source: &QTable,
    target_actions: Vec<ActionKey>,
    rng: &mut impl Rng,
) -> QTable {
    let mut target = QTable::new_random(target_actions, rng);
    let n_tgt = target.action_set.len();
    let n_src = source.action_set.len();

    for (t_idx, t_key) in target.action_set.clone().iter().enumerate() {
        let matched: Option<usize> = match t_key {
            ActionKey::Remote { platform } => source.action_set.iter().position(
                |s| matches!(s, ActionKey::Remote { platform: p } if p == platform),
            ),
            ActionKey::Local {
                processor,
                precision,
                ..
            } => {
                let want = t_key.vf_position();
                source
                    .action_set
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| {
                        matches!(s, ActionKey::Local { processor: sp, precision: spr, .. }
                            if sp == processor && spr == precision)
                    })
                    .min_by(|(_, a), (_, b)| {
                        let da = (a.vf_position() - want).abs();
                        let db = (b.vf_position() - want).abs();
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(i, _)| i)
            }
        };
        if let Some(s_idx) = matched {
            for state in 0..STATE_COUNT {
                target.values[state * n_tgt + t_idx] = source.values[state * n_src + s_idx];
            }
        }
    }
    for v in target.visits.iter_mut() {
        *v = 0;
    }
    target
}

// ---------------------------------------------------------------------------
// Convergence detection
// ---------------------------------------------------------------------------

/// Earliest episode count after which the rolling mean reward stays within
/// `tol` (relative) of its value for the whole remaining history. The
/// rolling window covers the last `window` exploitation (non-explored)
/// episodes, so epsilon-exploration noise does not mask policy convergence.
/// Returns `None` if the history never settles.
pub fn detect_convergence(history: &RewardHistory, window: usize, tol: f64) -> Option<usize> {
    if window < 2 {
        return None;
    }
    let samples: Vec<(usize, f64)> = history
        .episodes
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.explored)
        .map(|(i, e)| (i, e.reward))
        .collect();
    if samples.len() < window {
        return None;
    }

    let n_means = samples.len() - window + 1;
    let mut means = Vec::with_capacity(n_means);
    let mut acc: f64 = samples[..window].iter().map(|(_, r)| r).sum();
    means.push(acc / window as f64);
    for j in 1..n_means {
        acc += samples[j + window - 1].1 - samples[j - 1].1;
        means.push(acc / window as f64);
    }

    // Suffix extrema let each candidate check the whole remaining history.
    let mut suffix_min = vec![f64::INFINITY; n_means + 1];
    let mut suffix_max = vec![f64::NEG_INFINITY; n_means + 1];
    for j in (0..n_means).rev() {
        suffix_min[j] = suffix_min[j + 1].min(means[j]);
        suffix_max[j] = suffix_max[j + 1].max(means[j]);
    }

    for j in 0..n_means {
        let m = means[j];
        let dev = (suffix_max[j] - m).max(m - suffix_min[j]);
        if dev < tol * m.abs() {
            // Episode count: 1 past the original index of the window's
            // last sample.
            return Some(samples[j + window - 1].0 + 1);
        }
    }
    None
}
