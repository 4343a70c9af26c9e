//! Data model and ingestion/validation of the simulated world: devices,
//! processors, V/F tables, network interfaces, NN workloads, accuracy
//! tables, and scenario catalogs.
//!
//! Worlds are loaded from a versioned TOML document (`*.world`, see the
//! shipped files under `worlds/`). `load_world` parses, validates every
//! invariant, and fills defaults; the resulting [`WorldConfig`] is immutable
//! afterwards and safe to share read-only across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envsim::{Generator, ScenarioSpec, VarianceSnapshot};

/// Current world schema version. Bump on any incompatible change.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("invariant violation: {invariant} ({detail})")]
    Invariant { invariant: String, detail: String },
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> WorldError {
    WorldError::Schema {
        path: path.into(),
        reason: reason.into(),
    }
}

fn invariant(name: impl Into<String>, detail: impl Into<String>) -> WorldError {
    WorldError::Invariant {
        invariant: name.into(),
        detail: detail.into(),
    }
}

/// Local processor kinds, in canonical enumeration order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum ProcessorKind {
    Cpu,
    Gpu,
    Dsp,
}

impl ProcessorKind {
    pub const ALL: [ProcessorKind; 3] = [ProcessorKind::Cpu, ProcessorKind::Gpu, ProcessorKind::Dsp];

    pub fn as_str(self) -> &'static str {
        match self {
            ProcessorKind::Cpu => "cpu",
            ProcessorKind::Gpu => "gpu",
            ProcessorKind::Dsp => "dsp",
        }
    }
}

impl fmt::Display for ProcessorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Numeric precision of an inference execution.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp32,
    Fp16,
    Int8,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Fp32, Precision::Fp16, Precision::Int8];

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
            Precision::Int8 => "int8",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Remote execution platforms reachable from the edge device.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum RemotePlatform {
    ConnectedEdge,
    Cloud,
}

impl RemotePlatform {
    pub fn as_str(self) -> &'static str {
        match self {
            RemotePlatform::ConnectedEdge => "connected-edge",
            RemotePlatform::Cloud => "cloud",
        }
    }
}

impl fmt::Display for RemotePlatform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Execution platform axis of the per-NN accuracy table.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum PlatformKind {
    Cpu,
    Gpu,
    Dsp,
    ConnectedEdge,
    Cloud,
}

impl PlatformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlatformKind::Cpu => "cpu",
            PlatformKind::Gpu => "gpu",
            PlatformKind::Dsp => "dsp",
            PlatformKind::ConnectedEdge => "connected-edge",
            PlatformKind::Cloud => "cloud",
        }
    }
}

impl fmt::Display for PlatformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<ProcessorKind> for PlatformKind {
    fn from(k: ProcessorKind) -> Self {
        match k {
            ProcessorKind::Cpu => PlatformKind::Cpu,
            ProcessorKind::Gpu => PlatformKind::Gpu,
            ProcessorKind::Dsp => PlatformKind::Dsp,
        }
    }
}

impl From<RemotePlatform> for PlatformKind {
    fn from(p: RemotePlatform) -> Self {
        match p {
            RemotePlatform::ConnectedEdge => PlatformKind::ConnectedEdge,
            RemotePlatform::Cloud => PlatformKind::Cloud,
        }
    }
}

/// Wireless network interface kinds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Wlan,
    P2p,
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkKind::Wlan => "wlan",
            NetworkKind::P2p => "p2p",
        })
    }
}

/// RSSI bins; the split is at -80 dBm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RssiBin {
    Regular,
    Weak,
}

impl RssiBin {
    /// Bin a signal strength: Regular above -80 dBm, Weak at or below.
    pub fn of(rssi_dbm: f64) -> RssiBin {
        if rssi_dbm > -80.0 {
            RssiBin::Regular
        } else {
            RssiBin::Weak
        }
    }
}

/// A per-RSSI-bin value (power or data rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiTable {
    pub regular: f64,
    pub weak: f64,
}

impl RssiTable {
    pub fn get(&self, bin: RssiBin) -> f64 {
        match bin {
            RssiBin::Regular => self.regular,
            RssiBin::Weak => self.weak,
        }
    }
}

/// One voltage/frequency operating point of a processor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VfStep {
    pub frequency_hz: f64,
    /// Busy power of the whole processor at this step, in watts.
    pub busy_power_w: f64,
    /// Throughput relative to the top step; defaults to f / f_max.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_speed: Option<f64>,
}

impl VfStep {
    /// Relative speed; always present after validation.
    pub fn speed(&self) -> f64 {
        self.relative_speed.unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessorSpec {
    pub kind: ProcessorKind,
    pub core_count: u32,
    pub vf_steps: Vec<VfStep>,
    pub idle_power_w: f64,
    /// Constant busy power of the DSP; present iff kind is DSP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsp_power_w: Option<f64>,
    pub supported_precisions: Vec<Precision>,
    /// MAC throughput (GMAC/s) at the top V/F step, full precision.
    pub peak_gmacs: f64,
}

impl ProcessorSpec {
    pub fn top_step(&self) -> &VfStep {
        self.vf_steps.last().expect("validated nonempty")
    }

    /// Busy power at an exact frequency from this processor's V/F table.
    pub fn busy_power_at(&self, frequency_hz: f64) -> Option<f64> {
        self.vf_steps
            .iter()
            .find(|s| s.frequency_hz == frequency_hz)
            .map(|s| s.busy_power_w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInterfaceSpec {
    pub kind: NetworkKind,
    pub tx_power_w: RssiTable,
    pub rx_power_w: RssiTable,
    pub rate_bytes_per_s: RssiTable,
}

/// Accuracy-table key: (platform, precision), e.g. `"gpu/fp16"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TargetKey {
    pub platform: PlatformKind,
    pub precision: Precision,
}

impl TargetKey {
    pub fn new(platform: PlatformKind, precision: Precision) -> Self {
        TargetKey {
            platform,
            precision,
        }
    }
}

impl fmt::Display for TargetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.platform, self.precision)
    }
}

impl From<TargetKey> for String {
    fn from(k: TargetKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for TargetKey {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let (p, q) = s
            .split_once('/')
            .ok_or_else(|| format!("expected '<platform>/<precision>', got {s:?}"))?;
        let platform = match p {
            "cpu" => PlatformKind::Cpu,
            "gpu" => PlatformKind::Gpu,
            "dsp" => PlatformKind::Dsp,
            "connected-edge" => PlatformKind::ConnectedEdge,
            "cloud" => PlatformKind::Cloud,
            _ => return Err(format!("unknown platform {p:?}")),
        };
        let precision = match q {
            "fp32" => Precision::Fp32,
            "fp16" => Precision::Fp16,
            "int8" => Precision::Int8,
            _ => return Err(format!("unknown precision {q:?}")),
        };
        Ok(TargetKey {
            platform,
            precision,
        })
    }
}

/// One neural-network workload profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnProfile {
    pub name: String,
    pub conv_layers: u32,
    pub fc_layers: u32,
    pub rc_layers: u32,
    pub mac_count_millions: f64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    /// Pre-measured inference accuracy per (platform, precision).
    pub accuracy: BTreeMap<TargetKey, f64>,
    pub qos_target_s: f64,
    pub accuracy_requirement: f64,
}

impl NnProfile {
    /// Accuracy of running this NN at the given target; `None` if unmeasured.
    pub fn accuracy_for(&self, platform: PlatformKind, precision: Precision) -> Option<f64> {
        self.accuracy
            .get(&TargetKey::new(platform, precision))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub processors: Vec<ProcessorSpec>,
    #[serde(default)]
    pub interfaces: Vec<NetworkInterfaceSpec>,
    pub dram_bandwidth_gbs: f64,
    /// Marks devices whose compute energy is not billed to the edge
    /// device (the cloud in the shipped configs). Energy accounting is
    /// device-centric either way; the flag documents the convention.
    #[serde(default)]
    pub free_compute_energy: bool,
}

impl DeviceProfile {
    pub fn processor(&self, kind: ProcessorKind) -> Option<&ProcessorSpec> {
        self.processors.iter().find(|p| p.kind == kind)
    }

    pub fn interface(&self, kind: NetworkKind) -> Option<&NetworkInterfaceSpec> {
        self.interfaces.iter().find(|i| i.kind == kind)
    }
}

/// Co-running interference slowdown coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceParams {
    /// CPU slowdown = 1 / (1 - cpu_coef * co_cpu_util), CPU actions only.
    pub cpu_coef: f64,
    /// Memory slowdown = 1 / (1 - mem_coef * co_mem_util), all local actions.
    pub mem_coef: f64,
}

impl Default for InterferenceParams {
    fn default() -> Self {
        InterferenceParams {
            cpu_coef: 0.6,
            mem_coef: 0.5,
        }
    }
}

/// Throughput multipliers of reduced-precision execution over FP32.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSpeedup {
    pub fp16: f64,
    pub int8: f64,
}

impl Default for PrecisionSpeedup {
    fn default() -> Self {
        PrecisionSpeedup {
            fp16: 1.5,
            int8: 2.0,
        }
    }
}

impl PrecisionSpeedup {
    pub fn factor(&self, p: Precision) -> f64 {
        match p {
            Precision::Fp32 => 1.0,
            Precision::Fp16 => self.fp16,
            Precision::Int8 => self.int8,
        }
    }
}

/// Per-layer-type latency penalties of co-processors relative to the CPU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityParams {
    pub gpu_fc: f64,
    pub gpu_rc: f64,
    pub dsp_fc: f64,
    pub dsp_rc: f64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams {
            gpu_fc: 0.02,
            gpu_rc: 0.08,
            dsp_fc: 0.12,
            dsp_rc: 0.10,
        }
    }
}

/// Simulation coefficients shipped with the world (not code constants).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimParams {
    #[serde(default)]
    pub interference: InterferenceParams,
    #[serde(default)]
    pub precision_speedup: PrecisionSpeedup,
    #[serde(default)]
    pub affinity: AffinityParams,
}

/// The full simulated environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub edge: DeviceProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connected_edge: Option<DeviceProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<DeviceProfile>,
    #[serde(default)]
    pub params: SimParams,
    pub nns: Vec<NnProfile>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
}

/// One execution choice: a local processor at a V/F step and precision,
/// or a remote platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Local {
        processor: ProcessorKind,
        vf_index: usize,
        precision: Precision,
    },
    Remote { platform: RemotePlatform },
}

impl Action {
    pub fn platform_kind(&self) -> PlatformKind {
        match self {
            Action::Local { processor, .. } => (*processor).into(),
            Action::Remote { platform } => (*platform).into(),
        }
    }

    /// Precision the inference runs at; remote platforms run FP32.
    pub fn precision(&self) -> Precision {
        match self {
            Action::Local { precision, .. } => *precision,
            Action::Remote { .. } => Precision::Fp32,
        }
    }

    /// Stable human/CSV label, e.g. `cpu#22/int8` or `cloud`.
    pub fn label(&self) -> String {
        match self {
            Action::Local {
                processor,
                vf_index,
                precision,
            } => format!("{processor}#{vf_index}/{precision}"),
            Action::Remote { platform } => platform.as_str().to_string(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl WorldConfig {
    pub fn nn(&self, name: &str) -> Option<&NnProfile> {
        self.nns.iter().find(|n| n.name == name)
    }

    pub fn scenario(&self, id: &str) -> Option<&ScenarioSpec> {
        self.scenarios.iter().find(|s| s.id.as_str() == id)
    }

    pub fn remote_device(&self, platform: RemotePlatform) -> Option<&DeviceProfile> {
        match platform {
            RemotePlatform::ConnectedEdge => self.connected_edge.as_ref(),
            RemotePlatform::Cloud => self.cloud.as_ref(),
        }
    }

    /// Interface used to reach a remote platform: WLAN for the cloud,
    /// peer-to-peer for the connected edge.
    pub fn interface_for(&self, platform: RemotePlatform) -> Option<&NetworkInterfaceSpec> {
        let kind = match platform {
            RemotePlatform::ConnectedEdge => NetworkKind::P2p,
            RemotePlatform::Cloud => NetworkKind::Wlan,
        };
        self.edge.interface(kind)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("world serializes")
    }
}

/// Enumerate the action space of a world in deterministic, stable order:
/// local processors in CPU/GPU/DSP order, each by ascending V/F step and
/// canonical precision order, followed by connected-edge and cloud.
pub fn enumerate_actions(world: &WorldConfig) -> Vec<Action> {
    let mut actions = Vec::new();
    for kind in ProcessorKind::ALL {
        if let Some(proc_spec) = world.edge.processor(kind) {
            for vf_index in 0..proc_spec.vf_steps.len() {
                for precision in Precision::ALL {
                    if proc_spec.supported_precisions.contains(&precision) {
                        actions.push(Action::Local {
                            processor: kind,
                            vf_index,
                            precision,
                        });
                    }
                }
            }
        }
    }
    if world.connected_edge.is_some() {
        actions.push(Action::Remote {
            platform: RemotePlatform::ConnectedEdge,
        });
    }
    if world.cloud.is_some() {
        actions.push(Action::Remote {
            platform: RemotePlatform::Cloud,
        });
    }
    actions
}

/// Warn about enumerated actions whose (platform, precision) pair has no
/// accuracy entry for this NN. Such actions read as accuracy 0 downstream.
pub fn validate_accuracy_table(nn: &NnProfile, world: &WorldConfig) -> Vec<String> {
    let mut missing = BTreeSet::new();
    for action in enumerate_actions(world) {
        let key = TargetKey::new(action.platform_kind(), action.precision());
        if !nn.accuracy.contains_key(&key) {
            missing.insert(key);
        }
    }
    missing
        .into_iter()
        .map(|key| format!("nn {:?}: no accuracy entry for {key}; treated as accuracy 0", nn.name))
        .collect()
}

/// Load and validate a world file. Trace files referenced by scenarios are
/// resolved relative to the world file's directory and inlined.
pub fn load_world(path: impl AsRef<Path>) -> Result<WorldConfig, WorldError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_world_str(&text, path.parent())
}

/// Load a world from an in-memory document. `base_dir` resolves relative
/// trace file references; pass `None` to forbid them.
pub fn load_world_str(text: &str, base_dir: Option<&Path>) -> Result<WorldConfig, WorldError> {
    let mut world: WorldConfig =
        toml::from_str(text).map_err(|e| schema("(document)", e.message().to_string()))?;
    validate_and_fill(&mut world, base_dir)?;
    Ok(world)
}

fn validate_and_fill(world: &mut WorldConfig, base_dir: Option<&Path>) -> Result<(), WorldError> {
    if world.schema_version != SCHEMA_VERSION {
        return Err(schema(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", world.schema_version),
        ));
    }
    if world.nns.is_empty() {
        return Err(schema("nns", "nns must be nonempty"));
    }

    validate_device(&mut world.edge, "edge")?;
    if let Some(ce) = world.connected_edge.as_mut() {
        validate_device(ce, "connected_edge")?;
        validate_remote(ce, "connected_edge")?;
    }
    if let Some(cloud) = world.cloud.as_mut() {
        validate_device(cloud, "cloud")?;
        validate_remote(cloud, "cloud")?;
    }

    // Remote platforms need the matching edge-side interface.
    if world.cloud.is_some() && world.edge.interface(NetworkKind::Wlan).is_none() {
        return Err(invariant(
            "cloud requires an edge wlan interface",
            "edge device declares no wlan interface",
        ));
    }
    if world.connected_edge.is_some() && world.edge.interface(NetworkKind::P2p).is_none() {
        return Err(invariant(
            "connected edge requires an edge p2p interface",
            "edge device declares no p2p interface",
        ));
    }

    let mut device_names = BTreeSet::new();
    device_names.insert(world.edge.name.clone());
    for dev in [world.connected_edge.as_ref(), world.cloud.as_ref()]
        .into_iter()
        .flatten()
    {
        if !device_names.insert(dev.name.clone()) {
            return Err(invariant(
                "identifiers unique",
                format!("duplicate device name {:?}", dev.name),
            ));
        }
    }

    validate_params(&world.params)?;

    let mut nn_names = BTreeSet::new();
    for nn in &world.nns {
        validate_nn(nn)?;
        if !nn_names.insert(nn.name.clone()) {
            return Err(invariant(
                "identifiers unique",
                format!("duplicate nn name {:?}", nn.name),
            ));
        }
    }

    let mut scenario_ids = BTreeSet::new();
    for scenario in world.scenarios.iter_mut() {
        if !scenario_ids.insert(scenario.id.as_str().to_string()) {
            return Err(invariant(
                "identifiers unique",
                format!("duplicate scenario id {:?}", scenario.id.as_str()),
            ));
        }
        validate_scenario(scenario, &world.edge, base_dir)?;
    }

    Ok(())
}

fn validate_remote(dev: &DeviceProfile, path: &str) -> Result<(), WorldError> {
    let fp32_capable = dev.processors.iter().any(|p| {
        p.supported_precisions.contains(&Precision::Fp32)
    });
    if !fp32_capable {
        return Err(invariant(
            "remote device supports fp32",
            format!("{path} ({:?}) has no fp32-capable processor", dev.name),
        ));
    }
    Ok(())
}

fn validate_device(dev: &mut DeviceProfile, path: &str) -> Result<(), WorldError> {
    if dev.name.is_empty() {
        return Err(schema(format!("{path}.name"), "device name must be nonempty"));
    }
    if dev.processors.is_empty() {
        return Err(schema(
            format!("{path}.processors"),
            "processors must be nonempty",
        ));
    }
    if !(dev.dram_bandwidth_gbs > 0.0 && dev.dram_bandwidth_gbs.is_finite()) {
        return Err(schema(
            format!("{path}.dram_bandwidth_gbs"),
            "must be a positive number",
        ));
    }

    // Canonical processor order makes action enumeration a pure function
    // of the config contents.
    dev.processors.sort_by_key(|p| p.kind);
    let mut kinds = BTreeSet::new();
    for p in dev.processors.iter_mut() {
        if !kinds.insert(p.kind) {
            return Err(invariant(
                "at most one processor per kind",
                format!("{path} declares {} twice", p.kind),
            ));
        }
        validate_processor(p, path)?;
    }
    if !kinds.contains(&ProcessorKind::Cpu) {
        return Err(invariant(
            "device has a cpu",
            format!("{path} ({:?}) declares no cpu", dev.name),
        ));
    }

    let mut iface_kinds = BTreeSet::new();
    dev.interfaces.sort_by_key(|i| i.kind);
    for iface in &dev.interfaces {
        if !iface_kinds.insert(iface.kind) {
            return Err(invariant(
                "at most one interface per kind",
                format!("{path} declares {} twice", iface.kind),
            ));
        }
        validate_interface(iface, path)?;
    }
    Ok(())
}

fn validate_processor(p: &mut ProcessorSpec, dev_path: &str) -> Result<(), WorldError> {
    let path = format!("{dev_path}.processors[{}]", p.kind);
    if p.core_count == 0 {
        return Err(schema(format!("{path}.core_count"), "must be positive"));
    }
    if p.kind != ProcessorKind::Cpu && p.core_count != 1 {
        return Err(invariant(
            "gpu/dsp core_count is 1",
            format!("{path} has core_count {}", p.core_count),
        ));
    }
    if p.vf_steps.is_empty() {
        return Err(schema(format!("{path}.vf_steps"), "must be nonempty"));
    }
    if p.kind == ProcessorKind::Dsp {
        if p.vf_steps.len() != 1 {
            return Err(invariant(
                "DSP has exactly one step",
                format!("{path} lists {} V/F steps", p.vf_steps.len()),
            ));
        }
        match p.dsp_power_w {
            Some(w) if w > 0.0 && w.is_finite() => {}
            Some(_) => {
                return Err(schema(format!("{path}.dsp_power_w"), "must be positive"));
            }
            None => {
                return Err(invariant(
                    "DSP requires dsp_power_w",
                    format!("{path} declares no dsp_power_w"),
                ));
            }
        }
    } else if p.dsp_power_w.is_some() {
        return Err(schema(
            format!("{path}.dsp_power_w"),
            "only valid for dsp processors",
        ));
    }
    if !(p.idle_power_w >= 0.0 && p.idle_power_w.is_finite()) {
        return Err(schema(format!("{path}.idle_power_w"), "must be nonnegative"));
    }
    if !(p.peak_gmacs > 0.0 && p.peak_gmacs.is_finite()) {
        return Err(schema(format!("{path}.peak_gmacs"), "must be positive"));
    }

    if p.supported_precisions.is_empty() {
        return Err(schema(
            format!("{path}.supported_precisions"),
            "must be nonempty",
        ));
    }
    p.supported_precisions.sort();
    p.supported_precisions.dedup();
    let allowed: &[Precision] = match p.kind {
        ProcessorKind::Cpu => &[Precision::Fp32, Precision::Int8],
        ProcessorKind::Gpu => &[Precision::Fp32, Precision::Fp16],
        ProcessorKind::Dsp => &[Precision::Int8],
    };
    for prec in &p.supported_precisions {
        if !allowed.contains(prec) {
            return Err(invariant(
                "precision supported by processor kind",
                format!("{path}: {} does not support {prec}", p.kind),
            ));
        }
    }

    // V/F table shape: strictly increasing frequency, nondecreasing power
    // and speed, top speed exactly 1.
    let f_max = p.vf_steps.last().unwrap().frequency_hz;
    if !(f_max > 0.0 && f_max.is_finite()) {
        return Err(schema(format!("{path}.vf_steps"), "frequencies must be positive"));
    }
    let mut prev_f = 0.0;
    let mut prev_p = 0.0;
    let mut prev_s = 0.0;
    for (i, step) in p.vf_steps.iter_mut().enumerate() {
        if !(step.frequency_hz > prev_f && step.frequency_hz.is_finite()) {
            return Err(invariant(
                "vf frequencies strictly increasing",
                format!("{path}.vf_steps[{i}]"),
            ));
        }
        if !(step.busy_power_w > 0.0 && step.busy_power_w.is_finite()) {
            return Err(schema(
                format!("{path}.vf_steps[{i}].busy_power_w"),
                "must be positive",
            ));
        }
        if step.busy_power_w < prev_p {
            return Err(invariant(
                "busy power nondecreasing with frequency",
                format!("{path}.vf_steps[{i}]"),
            ));
        }
        let speed = match step.relative_speed {
            Some(s) => s,
            None => {
                let s = step.frequency_hz / f_max;
                step.relative_speed = Some(s);
                s
            }
        };
        if !(speed > 0.0 && speed <= 1.0 + 1e-9) {
            return Err(schema(
                format!("{path}.vf_steps[{i}].relative_speed"),
                "must be in (0, 1]",
            ));
        }
        if speed < prev_s {
            return Err(invariant(
                "relative speed nondecreasing with frequency",
                format!("{path}.vf_steps[{i}]"),
            ));
        }
        prev_f = step.frequency_hz;
        prev_p = step.busy_power_w;
        prev_s = speed;
    }
    let top = p.vf_steps.last_mut().unwrap();
    let top_speed = top.relative_speed.unwrap();
    if (top_speed - 1.0).abs() > 1e-9 {
        return Err(invariant(
            "top step relative_speed is 1",
            format!("{path} top step has relative_speed {top_speed}"),
        ));
    }
    top.relative_speed = Some(1.0);
    Ok(())
}

fn validate_interface(iface: &NetworkInterfaceSpec, dev_path: &str) -> Result<(), WorldError> {
    let path = format!("{dev_path}.interfaces[{}]", iface.kind);
    for (name, table) in [
        ("tx_power_w", &iface.tx_power_w),
        ("rx_power_w", &iface.rx_power_w),
        ("rate_bytes_per_s", &iface.rate_bytes_per_s),
    ] {
        for (bin, v) in [("regular", table.regular), ("weak", table.weak)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema(format!("{path}.{name}.{bin}"), "must be positive"));
            }
        }
    }
    if iface.tx_power_w.weak <= iface.tx_power_w.regular {
        return Err(invariant(
            "weak bin has higher tx power",
            format!("{path}: weak {} <= regular {}", iface.tx_power_w.weak, iface.tx_power_w.regular),
        ));
    }
    if iface.rate_bytes_per_s.weak >= iface.rate_bytes_per_s.regular {
        return Err(invariant(
            "weak bin has strictly lower data rate",
            format!(
                "{path}: weak {} >= regular {}",
                iface.rate_bytes_per_s.weak, iface.rate_bytes_per_s.regular
            ),
        ));
    }
    Ok(())
}

fn validate_nn(nn: &NnProfile) -> Result<(), WorldError> {
    let path = format!("nns[{}]", nn.name);
    if nn.name.is_empty() {
        return Err(schema("nns[].name", "nn name must be nonempty"));
    }
    if !(nn.mac_count_millions > 0.0 && nn.mac_count_millions.is_finite()) {
        return Err(schema(format!("{path}.mac_count_millions"), "must be positive"));
    }
    if nn.input_bytes == 0 || nn.output_bytes == 0 {
        return Err(schema(
            format!("{path}.input_bytes/output_bytes"),
            "must be positive",
        ));
    }
    if !(nn.qos_target_s > 0.0 && nn.qos_target_s.is_finite()) {
        return Err(schema(format!("{path}.qos_target_s"), "must be positive"));
    }
    if !(0.0..=1.0).contains(&nn.accuracy_requirement) {
        return Err(schema(
            format!("{path}.accuracy_requirement"),
            "must be in [0, 1]",
        ));
    }
    for (key, value) in &nn.accuracy {
        if !(0.0..=1.0).contains(value) {
            return Err(schema(
                format!("{path}.accuracy[{key}]"),
                "must be in [0, 1]",
            ));
        }
    }
    // Quantization never improves accuracy on the same platform.
    for platform in [PlatformKind::Cpu, PlatformKind::Gpu, PlatformKind::Dsp] {
        if let Some(fp32) = nn.accuracy_for(platform, Precision::Fp32) {
            for lower in [Precision::Fp16, Precision::Int8] {
                if let Some(acc) = nn.accuracy_for(platform, lower) {
                    if acc > fp32 {
                        return Err(invariant(
                            "lower precision accuracy <= fp32 accuracy",
                            format!("{path}: {platform}/{lower} {acc} > fp32 {fp32}"),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

fn validate_params(params: &SimParams) -> Result<(), WorldError> {
    let i = params.interference;
    if !(0.0..1.0).contains(&i.cpu_coef) || !(0.0..1.0).contains(&i.mem_coef) {
        return Err(schema(
            "params.interference",
            "coefficients must be in [0, 1)",
        ));
    }
    let s = params.precision_speedup;
    if !(s.fp16 >= 1.0 && s.fp16.is_finite() && s.int8 >= 1.0 && s.int8.is_finite()) {
        return Err(schema("params.precision_speedup", "factors must be >= 1"));
    }
    let a = params.affinity;
    for (name, v) in [
        ("gpu_fc", a.gpu_fc),
        ("gpu_rc", a.gpu_rc),
        ("dsp_fc", a.dsp_fc),
        ("dsp_rc", a.dsp_rc),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(schema(format!("params.affinity.{name}"), "must be nonnegative"));
        }
    }
    Ok(())
}

fn validate_scenario(
    scenario: &mut ScenarioSpec,
    edge: &DeviceProfile,
    base_dir: Option<&Path>,
) -> Result<(), WorldError> {
    let path = format!("scenarios[{}]", scenario.id.as_str());
    match &mut scenario.generator {
        Generator::Constant {
            co_cpu_util,
            co_mem_util,
            rssi_wlan_dbm,
            rssi_p2p_dbm,
        } => {
            validate_snapshot_fields(
                &path,
                *co_cpu_util,
                *co_mem_util,
                *rssi_wlan_dbm,
                *rssi_p2p_dbm,
            )?;
        }
        Generator::Trace {
            step_period,
            snapshots,
            trace_file,
        } => {
            if *step_period == 0 {
                return Err(schema(format!("{path}.step_period"), "must be >= 1"));
            }
            if let Some(file) = trace_file.take() {
                if !snapshots.is_empty() {
                    return Err(schema(
                        format!("{path}.trace_file"),
                        "trace_file and inline snapshots are mutually exclusive",
                    ));
                }
                let dir = base_dir.ok_or_else(|| {
                    schema(format!("{path}.trace_file"), "no base directory to resolve against")
                })?;
                *snapshots = read_trace_csv(&dir.join(&file))?;
            }
            if snapshots.is_empty() {
                return Err(schema(format!("{path}.snapshots"), "trace must be nonempty"));
            }
            for (i, snap) in snapshots.iter().enumerate() {
                validate_snapshot_fields(
                    &format!("{path}.snapshots[{i}]"),
                    snap.co_cpu_util,
                    snap.co_mem_util,
                    snap.rssi_wlan_dbm,
                    snap.rssi_p2p_dbm,
                )?;
            }
        }
        Generator::GaussianRssi {
            mean_dbm,
            stddev_dbm,
            interface,
        } => {
            if !(mean_dbm.is_finite() && *mean_dbm <= 0.0) {
                return Err(schema(format!("{path}.mean_dbm"), "must be finite and <= 0"));
            }
            if !(stddev_dbm.is_finite() && *stddev_dbm >= 0.0) {
                return Err(schema(format!("{path}.stddev_dbm"), "must be nonnegative"));
            }
            if edge.interface(*interface).is_none() {
                return Err(invariant(
                    "scenario references declared entities",
                    format!("{path}: edge has no {interface} interface"),
                ));
            }
        }
        Generator::VarianceGrid => {}
    }
    Ok(())
}

fn validate_snapshot_fields(
    path: &str,
    co_cpu: f64,
    co_mem: f64,
    rssi_w: f64,
    rssi_p: f64,
) -> Result<(), WorldError> {
    if !(0.0..=1.0).contains(&co_cpu) || !(0.0..=1.0).contains(&co_mem) {
        return Err(schema(
            format!("{path}.co_cpu_util/co_mem_util"),
            "must be in [0, 1]",
        ));
    }
    if !(rssi_w.is_finite() && rssi_w <= 0.0 && rssi_p.is_finite() && rssi_p <= 0.0) {
        return Err(schema(
            format!("{path}.rssi_*_dbm"),
            "must be finite and <= 0",
        ));
    }
    Ok(())
}

/// Parse a step-period trace CSV with header `step,co_cpu_util,co_mem_util`.
/// RSSI fields default to the regular-signal value used by the shipped
/// static scenarios.
fn read_trace_csv(path: &Path) -> Result<Vec<VarianceSnapshot>, WorldError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "step,co_cpu_util,co_mem_util" => {}
        _ => {
            return Err(schema(
                path.display().to_string(),
                "trace header must be 'step,co_cpu_util,co_mem_util'",
            ));
        }
    }
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(schema(
                format!("{}:{}", path.display(), lineno + 1),
                "expected 3 comma-separated fields",
            ));
        }
        let parse = |s: &str| -> Result<f64, WorldError> {
            s.trim().parse::<f64>().map_err(|e| {
                schema(format!("{}:{}", path.display(), lineno + 1), e.to_string())
            })
        };
        let co_cpu = parse(fields[1])?;
        let co_mem = parse(fields[2])?;
        out.push(VarianceSnapshot {
            co_cpu_util: co_cpu,
            co_mem_util: co_mem,
            rssi_wlan_dbm: VarianceSnapshot::REGULAR_RSSI_DBM,
            rssi_p2p_dbm: VarianceSnapshot::REGULAR_RSSI_DBM,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::ScenarioId;

    fn worlds_dir() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("worlds")
    }

    pub(crate) fn mi8pro() -> WorldConfig {
        load_world(worlds_dir().join("mi8pro.world")).expect("mi8pro.world loads")
    }

    #[test]
    fn mi8pro_cpu_has_23_steps_and_peak_5_5w() {
        let world = mi8pro();
        let cpu = world.edge.processor(ProcessorKind::Cpu).unwrap();
        assert_eq!(cpu.vf_steps.len(), 23);
        assert_eq!(cpu.top_step().busy_power_w, 5.5);
        assert_eq!(cpu.top_step().relative_speed, Some(1.0));
    }

    #[test]
    fn mi8pro_action_count_is_63() {
        // CPU 23 steps x 2 precisions + GPU 7 x 2 + DSP 1 x 1 + 2 remotes.
        let world = mi8pro();
        let actions = enumerate_actions(&world);
        assert_eq!(actions.len(), 63);
        assert_eq!(
            actions[0],
            Action::Local {
                processor: ProcessorKind::Cpu,
                vf_index: 0,
                precision: Precision::Fp32
            }
        );
        assert_eq!(
            actions[62],
            Action::Remote {
                platform: RemotePlatform::Cloud
            }
        );
    }

    #[test]
    fn action_enumeration_is_deterministic() {
        let a = enumerate_actions(&mi8pro());
        let b = enumerate_actions(&mi8pro());
        assert_eq!(a, b);
    }

    #[test]
    fn minimal_world_has_one_action() {
        let text = r#"
schema_version = 1
seed = 1

[edge]
name = "tiny"
dram_bandwidth_gbs = 1.0

[[edge.processors]]
kind = "cpu"
core_count = 1
idle_power_w = 0.1
peak_gmacs = 1.0
supported_precisions = ["fp32"]

[[edge.processors.vf_steps]]
frequency_hz = 1.0e9
busy_power_w = 1.0

[[nns]]
name = "n"
conv_layers = 1
fc_layers = 1
rc_layers = 0
mac_count_millions = 10.0
input_bytes = 1000
output_bytes = 100
qos_target_s = 0.05
accuracy_requirement = 0.5

[nns.accuracy]
"cpu/fp32" = 0.7
"#;
        let world = load_world_str(text, None).unwrap();
        let actions = enumerate_actions(&world);
        assert_eq!(actions.len(), 1);
    }

    #[test]
    fn zero_nns_is_a_schema_error() {
        let text = r#"
schema_version = 1
seed = 1
nns = []

[edge]
name = "tiny"
dram_bandwidth_gbs = 1.0

[[edge.processors]]
kind = "cpu"
core_count = 1
idle_power_w = 0.1
peak_gmacs = 1.0
supported_precisions = ["fp32"]

[[edge.processors.vf_steps]]
frequency_hz = 1.0e9
busy_power_w = 1.0
"#;
        let err = load_world_str(text, None).unwrap_err();
        assert!(
            matches!(&err, WorldError::Schema { path, reason }
                if path == "nns" && reason == "nns must be nonempty"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn dsp_with_two_steps_violates_invariant() {
        let text = r#"
schema_version = 1
seed = 1

[edge]
name = "tiny"
dram_bandwidth_gbs = 1.0

[[edge.processors]]
kind = "cpu"
core_count = 1
idle_power_w = 0.1
peak_gmacs = 1.0
supported_precisions = ["fp32"]

[[edge.processors.vf_steps]]
frequency_hz = 1.0e9
busy_power_w = 1.0

[[edge.processors]]
kind = "dsp"
core_count = 1
idle_power_w = 0.05
dsp_power_w = 1.8
peak_gmacs = 10.0
supported_precisions = ["int8"]

[[edge.processors.vf_steps]]
frequency_hz = 5.0e8
busy_power_w = 1.0
relative_speed = 0.5

[[edge.processors.vf_steps]]
frequency_hz = 1.0e9
busy_power_w = 1.8

[[nns]]
name = "n"
conv_layers = 1
fc_layers = 1
rc_layers = 0
mac_count_millions = 10.0
input_bytes = 1000
output_bytes = 100
qos_target_s = 0.05
accuracy_requirement = 0.5

[nns.accuracy]
"cpu/fp32" = 0.7
"#;
        let err = load_world_str(text, None).unwrap_err();
        assert!(
            matches!(&err, WorldError::Invariant { invariant, .. }
                if invariant == "DSP has exactly one step"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn accuracy_warnings_for_missing_pairs() {
        let world = mi8pro();
        // Shipped tables are complete.
        for nn in &world.nns {
            assert!(validate_accuracy_table(nn, &world).is_empty(), "{}", nn.name);
        }
        // Remove the (dsp, int8) entry and expect exactly one warning naming it.
        let mut broken = world.clone();
        let nn = &mut broken.nns[0];
        nn.accuracy
            .remove(&TargetKey::new(PlatformKind::Dsp, Precision::Int8));
        let warnings = validate_accuracy_table(&broken.nns[0], &broken);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("dsp/int8"), "{}", warnings[0]);
    }

    #[test]
    fn world_roundtrips_through_serialization() {
        let world = mi8pro();
        let text = world.to_toml_string();
        let reparsed = load_world_str(&text, None).unwrap();
        assert_eq!(world, reparsed);
    }

    #[test]
    fn shipped_sibling_worlds_load() {
        let s10e = load_world(worlds_dir().join("s10e.world")).unwrap();
        assert_eq!(
            s10e.edge.processor(ProcessorKind::Cpu).unwrap().vf_steps.len(),
            21
        );
        assert!(s10e.edge.processor(ProcessorKind::Dsp).is_none());
        assert_eq!(enumerate_actions(&s10e).len(), 21 * 2 + 9 * 2 + 2);

        let motox = load_world(worlds_dir().join("motox.world")).unwrap();
        assert_eq!(
            motox.edge.processor(ProcessorKind::Cpu).unwrap().vf_steps.len(),
            15
        );
        assert_eq!(enumerate_actions(&motox).len(), 15 * 2 + 6 * 2 + 2);

        let reduced = load_world(worlds_dir().join("reduced.world")).unwrap();
        assert!(enumerate_actions(&reduced).len() <= 8);
        assert_eq!(reduced.nns.len(), 3);
        for id in ["S1", "S2", "S3", "S4", "S5"] {
            assert!(reduced.scenario(id).is_some(), "missing {id}");
        }
    }

    #[test]
    fn scenario_ids_parse() {
        let world = mi8pro();
        assert_eq!(world.scenario("S1").unwrap().id, ScenarioId::S1);
        assert_eq!(world.scenario("D3").unwrap().id, ScenarioId::D3);
        assert!(world.scenario("GRID").is_some());
    }
}
