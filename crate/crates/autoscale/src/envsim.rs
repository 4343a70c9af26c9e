//! Simulation of one inference execution under runtime variance, and the
//! generators behind the static (S1-S5) and dynamic (D1-D3) variance
//! scenarios.
//!
//! `simulate_execution` replaces real-system measurement: local actions get
//! a MAC-throughput latency model scaled by layer affinity and co-running
//! interference; remote actions get transmission plus remote compute time
//! billed through the signal-strength offload energy model. Everything is a
//! pure function of its inputs, including the scenario streams, which are
//! keyed by (seed, step index).

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    cpu_energy, dsp_energy, gpu_energy, offload_energy, CoreUtilization, EnergyBreakdown,
    EnergyError, PowerTable, UtilizationSlice,
};
use crate::profiles::{
    Action, AffinityParams, DeviceProfile, InterferenceParams, NetworkInterfaceSpec, NnProfile,
    Precision, ProcessorKind, RemotePlatform, RssiBin, WorldConfig,
};
use crate::stream;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown action {action}: not in the world's action space")]
    UnknownAction { action: String },
    #[error("payload must be positive")]
    InvalidPayload,
    #[error("no rate bin covers rssi {rssi_dbm} dBm")]
    NoCoveringBin { rssi_dbm: f64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Runtime variance visible to the scheduler at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSnapshot {
    pub co_cpu_util: f64,
    pub co_mem_util: f64,
    pub rssi_wlan_dbm: f64,
    pub rssi_p2p_dbm: f64,
}

impl VarianceSnapshot {
    /// Regular-signal RSSI used by the shipped scenarios and trace files.
    pub const REGULAR_RSSI_DBM: f64 = -60.0;

    /// No interference, strong signal on both interfaces.
    pub fn calm() -> VarianceSnapshot {
        VarianceSnapshot {
            co_cpu_util: 0.0,
            co_mem_util: 0.0,
            rssi_wlan_dbm: Self::REGULAR_RSSI_DBM,
            rssi_p2p_dbm: Self::REGULAR_RSSI_DBM,
        }
    }
}

/// Scenario identifiers from the shipped catalog, plus free-form ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    D1,
    D2,
    D3,
    Custom(String),
}

impl ScenarioId {
    pub fn as_str(&self) -> &str {
        match self {
            ScenarioId::S1 => "S1",
            ScenarioId::S2 => "S2",
            ScenarioId::S3 => "S3",
            ScenarioId::S4 => "S4",
            ScenarioId::S5 => "S5",
            ScenarioId::D1 => "D1",
            ScenarioId::D2 => "D2",
            ScenarioId::D3 => "D3",
            ScenarioId::Custom(s) => s,
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<ScenarioId> for String {
    fn from(id: ScenarioId) -> String {
        id.as_str().to_string()
    }
}

impl TryFrom<String> for ScenarioId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        if s.is_empty() {
            return Err("scenario id must be nonempty".to_string());
        }
        Ok(match s.as_str() {
            "S1" => ScenarioId::S1,
            "S2" => ScenarioId::S2,
            "S3" => ScenarioId::S3,
            "S4" => ScenarioId::S4,
            "S5" => ScenarioId::S5,
            "D1" => ScenarioId::D1,
            "D2" => ScenarioId::D2,
            "D3" => ScenarioId::D3,
            _ => ScenarioId::Custom(s),
        })
    }
}

/// How a scenario produces variance snapshots over simulation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// The same snapshot at every step.
    Constant {
        co_cpu_util: f64,
        co_mem_util: f64,
        rssi_wlan_dbm: f64,
        rssi_p2p_dbm: f64,
    },
    /// A cyclic trace; each entry covers `step_period` steps.
    Trace {
        #[serde(default = "default_step_period")]
        step_period: u64,
        #[serde(default)]
        snapshots: Vec<VarianceSnapshot>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace_file: Option<String>,
    },
    /// Gaussian RSSI on one interface, clamped to [-100, -30] dBm; the
    /// other fields stay calm.
    GaussianRssi {
        mean_dbm: f64,
        stddev_dbm: f64,
        interface: crate::profiles::NetworkKind,
    },
    /// Cycles through the 64 runtime-variance cells of the discrete state
    /// lattice; used to cover the training design space.
    VarianceGrid,
}

fn default_step_period() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub generator: Generator,
}

/// Representative snapshot values, one per runtime-variance state cell:
/// co-utilization bins None/Small/Medium/Large and RSSI bins Regular/Weak.
pub const GRID_CO_UTIL_VALUES: [f64; 4] = [0.0, 0.15, 0.5, 0.9];
pub const GRID_RSSI_VALUES: [f64; 2] = [-60.0, -85.0];

/// The 64 variance cells in deterministic order (co_cpu, co_mem, rssi_w,
/// rssi_p nested loops).
pub fn variance_grid_cells() -> Vec<VarianceSnapshot> {
    let mut cells = Vec::with_capacity(64);
    for co_cpu in GRID_CO_UTIL_VALUES {
        for co_mem in GRID_CO_UTIL_VALUES {
            for rssi_w in GRID_RSSI_VALUES {
                for rssi_p in GRID_RSSI_VALUES {
                    cells.push(VarianceSnapshot {
                        co_cpu_util: co_cpu,
                        co_mem_util: co_mem,
                        rssi_wlan_dbm: rssi_w,
                        rssi_p2p_dbm: rssi_p,
                    });
                }
            }
        }
    }
    cells
}

/// Standard normal draw via Box-Muller on the step's own stream.
fn gaussian_draw(seed: u64, step_index: u64) -> f64 {
    let mut rng = stream::rng(seed, "gaussian-rssi", step_index);
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Produce the variance snapshot of `scenario` at `step_index`. Pure in
/// (scenario, step_index, seed): random generators draw from a stream keyed
/// by the step, so steps can be evaluated in any order.
pub fn step_scenario(scenario: &ScenarioSpec, step_index: u64, seed: u64) -> VarianceSnapshot {
    match &scenario.generator {
        Generator::Constant {
            co_cpu_util,
            co_mem_util,
            rssi_wlan_dbm,
            rssi_p2p_dbm,
        } => VarianceSnapshot {
            co_cpu_util: *co_cpu_util,
            co_mem_util: *co_mem_util,
            rssi_wlan_dbm: *rssi_wlan_dbm,
            rssi_p2p_dbm: *rssi_p2p_dbm,
        },
        Generator::Trace {
            step_period,
            snapshots,
            ..
        } => {
            let idx = (step_index / step_period.max(&1)) as usize % snapshots.len();
            snapshots[idx]
        }
        Generator::GaussianRssi {
            mean_dbm,
            stddev_dbm,
            interface,
        } => {
            let rssi = (mean_dbm + stddev_dbm * gaussian_draw(seed, step_index)).clamp(-100.0, -30.0);
            let mut snap = VarianceSnapshot::calm();
            match interface {
                crate::profiles::NetworkKind::Wlan => snap.rssi_wlan_dbm = rssi,
                crate::profiles::NetworkKind::P2p => snap.rssi_p2p_dbm = rssi,
            }
            snap
        }
        Generator::VarianceGrid => {
            let cells = variance_grid_cells();
            cells[(step_index % cells.len() as u64) as usize]
        }
    }
}

/// Time to move `payload_bytes` at the data rate of the RSSI bin.
pub fn transmission_time(
    payload_bytes: u64,
    iface: &NetworkInterfaceSpec,
    rssi_dbm: f64,
) -> Result<f64, SimError> {
    if payload_bytes == 0 {
        return Err(SimError::InvalidPayload);
    }
    if !rssi_dbm.is_finite() {
        return Err(SimError::NoCoveringBin { rssi_dbm });
    }
    let rate = iface.rate_bytes_per_s.get(RssiBin::of(rssi_dbm));
    Ok(payload_bytes as f64 / rate)
}

/// Latency multiplier for a given NN on a processor kind; 1 on the CPU,
/// grows with FC and RC layer counts on co-processors (those layers run
/// disproportionally slower off the CPU).
pub fn layer_affinity(nn: &NnProfile, kind: ProcessorKind, params: &AffinityParams) -> f64 {
    match kind {
        ProcessorKind::Cpu => 1.0,
        ProcessorKind::Gpu => {
            1.0 + params.gpu_fc * f64::from(nn.fc_layers) + params.gpu_rc * f64::from(nn.rc_layers)
        }
        ProcessorKind::Dsp => {
            1.0 + params.dsp_fc * f64::from(nn.fc_layers) + params.dsp_rc * f64::from(nn.rc_layers)
        }
    }
}

/// Latency multiplier from co-running interference: CPU contention hits
/// only CPU execution, memory contention hits every local processor.
pub fn interference_slowdown(
    snap: &VarianceSnapshot,
    kind: ProcessorKind,
    params: &InterferenceParams,
) -> f64 {
    let mem = 1.0 / (1.0 - params.mem_coef * snap.co_mem_util);
    let cpu = if kind == ProcessorKind::Cpu {
        1.0 / (1.0 - params.cpu_coef * snap.co_cpu_util)
    } else {
        1.0
    };
    mem * cpu
}

/// Result of one simulated inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionOutcome {
    pub latency_s: f64,
    pub energy: EnergyBreakdown,
    pub accuracy: f64,
    pub action: Action,
    pub qos_met: bool,
    pub accuracy_met: bool,
}

fn unknown(action: &Action) -> SimError {
    SimError::UnknownAction {
        action: action.label(),
    }
}

/// MAC-based compute time of `nn` on a remote device: its fastest
/// FP32-capable processor at the top V/F step, including layer affinity.
/// Remote devices do not suffer the edge device's co-runner interference.
pub fn remote_compute_time(device: &DeviceProfile, nn: &NnProfile, params: &AffinityParams) -> f64 {
    device
        .processors
        .iter()
        .filter(|p| p.supported_precisions.contains(&Precision::Fp32))
        .map(|p| {
            let base = nn.mac_count_millions * 1e6 / (p.peak_gmacs * 1e9);
            base * layer_affinity(nn, p.kind, params)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Simulate one inference of `nn` under `action` given the current variance.
/// Deterministic in all inputs.
pub fn simulate_execution(
    world: &WorldConfig,
    nn: &NnProfile,
    action: Action,
    snap: &VarianceSnapshot,
) -> Result<ExecutionOutcome, SimError> {
    let (latency_s, energy) = match action {
        Action::Local {
            processor,
            vf_index,
            precision,
        } => {
            let spec = world.edge.processor(processor).ok_or_else(|| unknown(&action))?;
            let step = spec.vf_steps.get(vf_index).ok_or_else(|| unknown(&action))?;
            if !spec.supported_precisions.contains(&precision) {
                return Err(unknown(&action));
            }
            let throughput = spec.peak_gmacs
                * 1e9
                * step.speed()
                * world.params.precision_speedup.factor(precision);
            let compute_time = nn.mac_count_millions * 1e6 / throughput
                * layer_affinity(nn, processor, &world.params.affinity)
                * interference_slowdown(snap, processor, &world.params.interference);

            let energy = match processor {
                ProcessorKind::Cpu => {
                    // Inference saturates the CPU cluster; busy power in the
                    // V/F table is whole-cluster power, so it contributes a
                    // single busy slice.
                    let cores = [CoreUtilization {
                        slices: vec![UtilizationSlice {
                            frequency_hz: step.frequency_hz,
                            busy_time_s: compute_time,
                        }],
                        idle_time_s: 0.0,
                    }];
                    cpu_energy(&cores, &PowerTable::from(spec))?
                }
                ProcessorKind::Gpu => {
                    let slices = [UtilizationSlice {
                        frequency_hz: step.frequency_hz,
                        busy_time_s: compute_time,
                    }];
                    gpu_energy(&slices, 0.0, &PowerTable::from(spec))?
                }
                ProcessorKind::Dsp => {
                    let p_dsp = spec.dsp_power_w.expect("validated for dsp");
                    dsp_energy(p_dsp, compute_time)
                }
            };
            (compute_time, energy)
        }
        Action::Remote { platform } => {
            let device = world.remote_device(platform).ok_or_else(|| unknown(&action))?;
            let iface = world.interface_for(platform).ok_or_else(|| unknown(&action))?;
            let rssi = match platform {
                RemotePlatform::Cloud => snap.rssi_wlan_dbm,
                RemotePlatform::ConnectedEdge => snap.rssi_p2p_dbm,
            };
            let t_tx = transmission_time(nn.input_bytes, iface, rssi)?;
            let t_rx = transmission_time(nn.output_bytes, iface, rssi)?;
            let compute = remote_compute_time(device, nn, &world.params.affinity);
            let latency = t_tx + compute + t_rx;

            let bin = RssiBin::of(rssi);
            // Device-centric accounting: only the edge radio and the edge
            // CPU idling while it waits are billed; remote compute is not.
            let edge_idle = world
                .edge
                .processor(ProcessorKind::Cpu)
                .map(|p| p.idle_power_w)
                .unwrap_or(0.0);
            let energy = offload_energy(
                iface.tx_power_w.get(bin),
                t_tx,
                iface.rx_power_w.get(bin),
                t_rx,
                edge_idle,
                latency,
            )?;
            (latency, energy)
        }
    };

    let accuracy = nn
        .accuracy_for(action.platform_kind(), action.precision())
        .unwrap_or(0.0);
    Ok(ExecutionOutcome {
        latency_s,
        energy,
        accuracy,
        action,
        qos_met: latency_s < nn.qos_target_s,
        accuracy_met: accuracy >= nn.accuracy_requirement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{enumerate_actions, load_world, NetworkKind, RssiTable};
    use approx::assert_relative_eq;

    fn mi8pro() -> WorldConfig {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("worlds/mi8pro.world");
        load_world(path).unwrap()
    }

    fn constant(co_cpu: f64, co_mem: f64, rssi_w: f64, rssi_p: f64) -> ScenarioSpec {
        ScenarioSpec {
            id: ScenarioId::Custom("T".into()),
            generator: Generator::Constant {
                co_cpu_util: co_cpu,
                co_mem_util: co_mem,
                rssi_wlan_dbm: rssi_w,
                rssi_p2p_dbm: rssi_p,
            },
        }
    }

    #[test]
    fn shipped_s1_is_calm_and_s4_is_weak_wlan() {
        let world = mi8pro();
        let s1 = world.scenario("S1").unwrap();
        for k in [0, 1, 999] {
            let snap = step_scenario(s1, k, 7);
            assert_eq!(snap, VarianceSnapshot::calm());
        }
        let s4 = world.scenario("S4").unwrap();
        let snap = step_scenario(s4, 3, 7);
        assert_eq!(snap.rssi_wlan_dbm, -85.0);
        assert_eq!(RssiBin::of(snap.rssi_wlan_dbm), RssiBin::Weak);
    }

    #[test]
    fn trace_indexes_cyclically() {
        let snaps: Vec<VarianceSnapshot> = (0..3)
            .map(|i| VarianceSnapshot {
                co_cpu_util: i as f64 / 10.0,
                ..VarianceSnapshot::calm()
            })
            .collect();
        let scenario = ScenarioSpec {
            id: ScenarioId::D1,
            generator: Generator::Trace {
                step_period: 2,
                snapshots: snaps.clone(),
                trace_file: None,
            },
        };
        assert_eq!(step_scenario(&scenario, 0, 0), snaps[0]);
        assert_eq!(step_scenario(&scenario, 1, 0), snaps[0]);
        assert_eq!(step_scenario(&scenario, 2, 0), snaps[1]);
        assert_eq!(step_scenario(&scenario, 6, 0), snaps[0]);
    }

    #[test]
    fn gaussian_rssi_mean_within_one_dbm() {
        let scenario = ScenarioSpec {
            id: ScenarioId::D3,
            generator: Generator::GaussianRssi {
                mean_dbm: -75.0,
                stddev_dbm: 10.0,
                interface: NetworkKind::Wlan,
            },
        };
        let mean: f64 = (0..1000)
            .map(|k| step_scenario(&scenario, k, 42).rssi_wlan_dbm)
            .sum::<f64>()
            / 1000.0;
        assert!((mean + 75.0).abs() < 1.0, "empirical mean {mean}");
        // Determinism: same (seed, step) gives the same draw.
        assert_eq!(
            step_scenario(&scenario, 17, 42),
            step_scenario(&scenario, 17, 42)
        );
        // Clamped to the supported band.
        for k in 0..1000 {
            let r = step_scenario(&scenario, k, 42).rssi_wlan_dbm;
            assert!((-100.0..=-30.0).contains(&r));
        }
    }

    #[test]
    fn variance_grid_has_64_distinct_cells() {
        let cells = variance_grid_cells();
        assert_eq!(cells.len(), 64);
        let unique: std::collections::BTreeSet<String> =
            cells.iter().map(|c| format!("{c:?}")).collect();
        assert_eq!(unique.len(), 64);
    }

    #[test]
    fn transmission_time_examples() {
        let iface = NetworkInterfaceSpec {
            kind: NetworkKind::Wlan,
            tx_power_w: RssiTable { regular: 1.0, weak: 2.0 },
            rx_power_w: RssiTable { regular: 0.8, weak: 1.2 },
            rate_bytes_per_s: RssiTable {
                regular: 10_000_000.0,
                weak: 1_000_000.0,
            },
        };
        let t = transmission_time(1_000_000, &iface, -60.0).unwrap();
        assert_relative_eq!(t, 0.1, max_relative = 1e-12);
        let t_weak = transmission_time(1_000_000, &iface, -85.0).unwrap();
        assert_relative_eq!(t_weak, 1.0, max_relative = 1e-12);
        assert!(matches!(
            transmission_time(0, &iface, -60.0),
            Err(SimError::InvalidPayload)
        ));
        assert!(matches!(
            transmission_time(1, &iface, f64::NAN),
            Err(SimError::NoCoveringBin { .. })
        ));
    }

    #[test]
    fn affinity_examples() {
        let params = AffinityParams::default();
        let mut nn = mi8pro().nns[0].clone();
        nn.fc_layers = 1;
        nn.rc_layers = 0;
        assert_relative_eq!(
            layer_affinity(&nn, ProcessorKind::Gpu, &params),
            1.02,
            max_relative = 1e-12
        );
        assert_eq!(layer_affinity(&nn, ProcessorKind::Cpu, &params), 1.0);
        let mut heavy = nn.clone();
        heavy.fc_layers = 20;
        assert!(
            layer_affinity(&heavy, ProcessorKind::Dsp, &params)
                > layer_affinity(&nn, ProcessorKind::Dsp, &params)
        );
    }

    #[test]
    fn cpu_corunner_slows_cpu_only() {
        let world = mi8pro();
        let nn = world.nn("mobilenetv3").unwrap();
        let calm = step_scenario(&constant(0.0, 0.0, -60.0, -60.0), 0, 0);
        let busy = step_scenario(&constant(1.0, 0.0, -60.0, -60.0), 0, 0);
        for action in enumerate_actions(&world) {
            if let Action::Local { processor, .. } = action {
                let a = simulate_execution(&world, nn, action, &calm).unwrap();
                let b = simulate_execution(&world, nn, action, &busy).unwrap();
                if processor == ProcessorKind::Cpu {
                    assert!(b.latency_s > a.latency_s, "{action}");
                } else {
                    assert_eq!(b.latency_s, a.latency_s, "{action}");
                }
            }
        }
    }

    #[test]
    fn memory_corunner_slows_all_local_processors() {
        let world = mi8pro();
        let nn = world.nn("mobilenetv3").unwrap();
        let calm = VarianceSnapshot::calm();
        let busy = VarianceSnapshot {
            co_mem_util: 1.0,
            ..calm
        };
        for action in enumerate_actions(&world) {
            if matches!(action, Action::Local { .. }) {
                let a = simulate_execution(&world, nn, action, &calm).unwrap();
                let b = simulate_execution(&world, nn, action, &busy).unwrap();
                assert!(b.latency_s > a.latency_s, "{action}");
            }
        }
    }

    #[test]
    fn weak_wlan_raises_cloud_latency_and_tx_energy() {
        let world = mi8pro();
        let nn = world.nn("inceptionv1").unwrap();
        let cloud = Action::Remote {
            platform: RemotePlatform::Cloud,
        };
        let calm = VarianceSnapshot::calm();
        let weak = VarianceSnapshot {
            rssi_wlan_dbm: -85.0,
            ..calm
        };
        let a = simulate_execution(&world, nn, cloud, &calm).unwrap();
        let b = simulate_execution(&world, nn, cloud, &weak).unwrap();
        assert!(b.latency_s > a.latency_s);
        assert!(b.energy.tx_j > a.energy.tx_j);
    }

    #[test]
    fn dsp_energy_is_power_times_latency_exactly() {
        let world = mi8pro();
        let nn = world.nn("mobilenetv1").unwrap();
        let dsp = Action::Local {
            processor: ProcessorKind::Dsp,
            vf_index: 0,
            precision: Precision::Int8,
        };
        let p_dsp = world
            .edge
            .processor(ProcessorKind::Dsp)
            .unwrap()
            .dsp_power_w
            .unwrap();
        let out = simulate_execution(&world, nn, dsp, &VarianceSnapshot::calm()).unwrap();
        assert_eq!(out.energy.total_j, p_dsp * out.latency_s);
    }

    #[test]
    fn simulation_is_deterministic() {
        let world = mi8pro();
        let nn = world.nn("resnet50").unwrap();
        let snap = VarianceSnapshot {
            co_cpu_util: 0.3,
            co_mem_util: 0.2,
            rssi_wlan_dbm: -72.5,
            rssi_p2p_dbm: -61.0,
        };
        for action in enumerate_actions(&world) {
            let a = simulate_execution(&world, nn, action, &snap).unwrap();
            let b = simulate_execution(&world, nn, action, &snap).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_action_is_rejected() {
        let world = mi8pro();
        let nn = &world.nns[0];
        let bogus = Action::Local {
            processor: ProcessorKind::Cpu,
            vf_index: 99,
            precision: Precision::Fp32,
        };
        assert!(matches!(
            simulate_execution(&world, nn, bogus, &VarianceSnapshot::calm()),
            Err(SimError::UnknownAction { .. })
        ));
    }

    #[test]
    fn missing_accuracy_reads_as_zero() {
        let mut world = mi8pro();
        let cloud_key = crate::profiles::TargetKey::new(
            crate::profiles::PlatformKind::Cloud,
            Precision::Fp32,
        );
        world.nns[0].accuracy.remove(&cloud_key);
        let nn = world.nns[0].clone();
        let out = simulate_execution(
            &world,
            &nn,
            Action::Remote {
                platform: RemotePlatform::Cloud,
            },
            &VarianceSnapshot::calm(),
        )
        .unwrap();
        assert_eq!(out.accuracy, 0.0);
        assert!(!out.accuracy_met);
    }
}
