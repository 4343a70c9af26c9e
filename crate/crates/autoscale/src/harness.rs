//! Experiment runner and metrics: executes a policy over a scenario,
//! aggregates energy efficiency (PPW, inferences per joule), QoS and
//! accuracy violation ratios, prediction accuracy against the oracle, and
//! emits byte-stable CSV/JSON reports.

use std::time::{Duration, Instant};

use rand::Rng;
use thiserror::Error;

use crate::agent::{compute_reward, select_action, DiscreteState, Hyperparams, QTable};
use crate::envsim::{simulate_execution, step_scenario, ExecutionOutcome, ScenarioSpec, SimError, VarianceSnapshot};
use crate::fmt::sig9;
use crate::policies::{oracle_decide, Policy};
use crate::profiles::{enumerate_actions, Action, Precision, ProcessorKind, WorldConfig};
use crate::stream;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("no reports to compare")]
    Empty,
    #[error("reports mix scenarios or worlds: {0} vs {1}")]
    Mismatched(String, String),
}

/// How the experiment picks the NN of each inference step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum NnSchedule {
    #[default]
    RoundRobin,
    Fixed(String),
    Random,
}

/// One simulated step of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub step: usize,
    pub nn: String,
    pub snapshot: VarianceSnapshot,
    pub action: Action,
    pub outcome: ExecutionOutcome,
    pub oracle_action: Action,
    pub reward: f64,
}

/// Aggregated result of running one policy over one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub policy: String,
    pub scenario: String,
    pub world: String,
    pub records: Vec<RunRecord>,
    /// Inferences per joule.
    pub ppw: f64,
    /// PPW relative to Edge(CPU FP32) on the same step sequence.
    pub ppw_normalized: f64,
    pub qos_violation_ratio: f64,
    pub accuracy_violation_ratio: f64,
    /// Fraction of steps whose action matched the oracle's.
    pub prediction_accuracy: f64,
    pub mean_reward: f64,
}

/// Output format of `emit_report`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

fn nn_indices(world: &WorldConfig, schedule: &NnSchedule, steps: usize, seed: u64) -> Result<Vec<usize>, SimError> {
    match schedule {
        NnSchedule::RoundRobin => Ok((0..steps).map(|k| k % world.nns.len()).collect()),
        NnSchedule::Fixed(name) => {
            let idx = world
                .nns
                .iter()
                .position(|n| &n.name == name)
                .ok_or_else(|| SimError::UnknownAction {
                    action: format!("nn {name:?}"),
                })?;
            Ok(vec![idx; steps])
        }
        NnSchedule::Random => {
            let mut rng = stream::rng(seed, "nn-schedule", 0);
            Ok((0..steps).map(|_| rng.gen_range(0..world.nns.len())).collect())
        }
    }
}

/// Run `policy` for `steps` inference requests of `scenario`, recording a
/// full oracle comparison per step. Deterministic given the seed.
pub fn run_experiment(
    world: &WorldConfig,
    scenario: &ScenarioSpec,
    policy: &dyn Policy,
    schedule: &NnSchedule,
    steps: usize,
    seed: u64,
    hp: &Hyperparams,
) -> Result<ExperimentReport, SimError> {
    assert!(steps >= 1, "steps must be >= 1");
    let actions = enumerate_actions(world);
    let scenario_seed = stream::derive(seed, "scenario", 0);
    let nns = nn_indices(world, schedule, steps, seed)?;

    // Reference energies of the normalization anchor, Edge(CPU FP32) at the
    // top V/F step, over the identical step sequence.
    let anchor = world.edge.processor(ProcessorKind::Cpu).and_then(|cpu| {
        let top = cpu.vf_steps.len() - 1;
        actions
            .iter()
            .position(|a| {
                matches!(a, Action::Local { processor: ProcessorKind::Cpu, vf_index, precision }
                    if *vf_index == top && *precision == Precision::Fp32)
            })
            .map(|i| actions[i])
    });

    let mut records = Vec::with_capacity(steps);
    let mut total_energy = 0.0;
    let mut anchor_energy = 0.0;
    let mut qos_violations = 0usize;
    let mut accuracy_violations = 0usize;
    let mut oracle_matches = 0usize;
    let mut reward_sum = 0.0;

    for step in 0..steps {
        let snapshot = step_scenario(scenario, step as u64, scenario_seed);
        let nn = &world.nns[nns[step]];
        let picked = policy.decide(world, nn, &snapshot);
        let outcome = simulate_execution(world, nn, actions[picked], &snapshot)?;
        let oracle_action = actions[oracle_decide(world, nn, &snapshot, hp)];
        let reward = compute_reward(&outcome, nn, hp);

        total_energy += outcome.energy.total_j;
        if !outcome.qos_met {
            qos_violations += 1;
        }
        if !outcome.accuracy_met {
            accuracy_violations += 1;
        }
        if outcome.action == oracle_action {
            oracle_matches += 1;
        }
        reward_sum += reward;

        if let Some(anchor_action) = anchor {
            anchor_energy += simulate_execution(world, nn, anchor_action, &snapshot)?
                .energy
                .total_j;
        }

        records.push(RunRecord {
            step,
            nn: nn.name.clone(),
            snapshot,
            action: outcome.action,
            outcome,
            oracle_action,
            reward,
        });
    }

    let n = steps as f64;
    let ppw = n / total_energy;
    let ppw_normalized = if anchor.is_some() {
        ppw / (n / anchor_energy)
    } else {
        f64::NAN
    };
    Ok(ExperimentReport {
        policy: policy.name().to_string(),
        scenario: scenario.id.as_str().to_string(),
        world: world.edge.name.clone(),
        records,
        ppw,
        ppw_normalized,
        qos_violation_ratio: qos_violations as f64 / n,
        accuracy_violation_ratio: accuracy_violations as f64 / n,
        prediction_accuracy: oracle_matches as f64 / n,
        mean_reward: reward_sum / n,
    })
}

/// One row of a policy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub policy: String,
    pub ppw: f64,
    pub ppw_normalized: f64,
    pub qos_violation_ratio: f64,
    pub accuracy_violation_ratio: f64,
    pub prediction_accuracy: f64,
    pub mean_reward: f64,
}

/// Policies compared on a shared (world, scenario), ranked by normalized
/// energy efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub scenario: String,
    pub world: String,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(reports: &[ExperimentReport]) -> Result<ComparisonTable, CompareError> {
    let first = reports.first().ok_or(CompareError::Empty)?;
    for r in reports {
        if r.scenario != first.scenario || r.world != first.world {
            return Err(CompareError::Mismatched(
                format!("{}/{}", first.world, first.scenario),
                format!("{}/{}", r.world, r.scenario),
            ));
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            policy: r.policy.clone(),
            ppw: r.ppw,
            ppw_normalized: r.ppw_normalized,
            qos_violation_ratio: r.qos_violation_ratio,
            accuracy_violation_ratio: r.accuracy_violation_ratio,
            prediction_accuracy: r.prediction_accuracy,
            mean_reward: r.mean_reward,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.ppw_normalized
            .partial_cmp(&a.ppw_normalized)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.policy.cmp(&b.policy))
    });
    Ok(ComparisonTable {
        scenario: first.scenario.clone(),
        world: first.world.clone(),
        rows,
    })
}

impl ComparisonTable {
    /// CSV with one row per policy, ranked.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::from(
            "policy,ppw,ppw_normalized,qos_violation_ratio,accuracy_violation_ratio,prediction_accuracy,mean_reward\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.policy,
                sig9(r.ppw),
                sig9(r.ppw_normalized),
                sig9(r.qos_violation_ratio),
                sig9(r.accuracy_violation_ratio),
                sig9(r.prediction_accuracy),
                sig9(r.mean_reward),
            ));
        }
        out.into_bytes()
    }
}

/// CSV column order of per-step records; stable across releases.
pub const CSV_HEADER: &str = "step,nn,action,latency_s,energy_j,accuracy,reward,qos_met,oracle_match";

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Serialize a report. Floats carry 9 significant digits; identical reports
/// produce identical bytes.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &report.records {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.step,
                    r.nn,
                    r.action.label(),
                    sig9(r.outcome.latency_s),
                    sig9(r.outcome.energy.total_j),
                    sig9(r.outcome.accuracy),
                    sig9(r.reward),
                    r.outcome.qos_met,
                    r.action == r.oracle_action,
                ));
            }
            out.into_bytes()
        }
        ReportFormat::Json => {
            let mut out = String::from("{");
            out.push_str(&format!("\"policy\":\"{}\",", json_escape(&report.policy)));
            out.push_str(&format!("\"scenario\":\"{}\",", json_escape(&report.scenario)));
            out.push_str(&format!("\"world\":\"{}\",", json_escape(&report.world)));
            out.push_str(&format!("\"steps\":{},", report.records.len()));
            out.push_str(&format!("\"ppw\":{},", sig9(report.ppw)));
            out.push_str(&format!("\"ppw_normalized\":{},", json_float(report.ppw_normalized)));
            out.push_str(&format!(
                "\"qos_violation_ratio\":{},",
                sig9(report.qos_violation_ratio)
            ));
            out.push_str(&format!(
                "\"accuracy_violation_ratio\":{},",
                sig9(report.accuracy_violation_ratio)
            ));
            out.push_str(&format!(
                "\"prediction_accuracy\":{},",
                sig9(report.prediction_accuracy)
            ));
            out.push_str(&format!("\"mean_reward\":{},", sig9(report.mean_reward)));
            out.push_str("\"records\":[");
            for (i, r) in report.records.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&format!(
                    "{{\"step\":{},\"nn\":\"{}\",\"action\":\"{}\",\"oracle_action\":\"{}\",\
                     \"co_cpu_util\":{},\"co_mem_util\":{},\"rssi_wlan_dbm\":{},\"rssi_p2p_dbm\":{},\
                     \"latency_s\":{},\"energy_j\":{},\"tx_j\":{},\"rx_j\":{},\"accuracy\":{},\
                     \"reward\":{},\"qos_met\":{},\"accuracy_met\":{},\"oracle_match\":{}}}",
                    r.step,
                    json_escape(&r.nn),
                    r.action.label(),
                    r.oracle_action.label(),
                    sig9(r.snapshot.co_cpu_util),
                    sig9(r.snapshot.co_mem_util),
                    sig9(r.snapshot.rssi_wlan_dbm),
                    sig9(r.snapshot.rssi_p2p_dbm),
                    sig9(r.outcome.latency_s),
                    sig9(r.outcome.energy.total_j),
                    sig9(r.outcome.energy.tx_j),
                    sig9(r.outcome.energy.rx_j),
                    sig9(r.outcome.accuracy),
                    sig9(r.reward),
                    r.outcome.qos_met,
                    r.outcome.accuracy_met,
                    r.action == r.oracle_action,
                ));
            }
            out.push_str("]}");
            out.into_bytes()
        }
    }
}

fn json_float(x: f64) -> String {
    if x.is_nan() {
        "null".to_string()
    } else {
        sig9(x)
    }
}

/// Measure the mean greedy-decision latency over `trials` random states and
/// the serialized table size in bytes.
pub fn overhead_probe(q: &QTable, trials: usize) -> (Duration, usize) {
    assert!(trials >= 1, "trials must be >= 1");
    let hp = Hyperparams::default();
    let mut rng = stream::rng(0xA5, "overhead-probe", 0);
    let states: Vec<DiscreteState> = (0..trials)
        .map(|_| DiscreteState::from_index(rng.gen_range(0..crate::agent::STATE_COUNT)))
        .collect();
    let start = Instant::now();
    let mut sink = 0usize;
    for s in &states {
        let (a, _) = select_action(q, s, &hp, &mut rng);
        sink = sink.wrapping_add(a);
    }
    let elapsed = start.elapsed();
    std::hint::black_box(sink);
    (elapsed / trials as u32, q.to_bytes().len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::action_keys;
    use crate::policies::{fixed_policies, OraclePolicy};
    use crate::profiles::load_world;

    fn reduced() -> WorldConfig {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("worlds/reduced.world");
        load_world(path).unwrap()
    }

    #[test]
    fn oracle_policy_has_perfect_prediction_accuracy() {
        let world = reduced();
        let hp = Hyperparams::default();
        let scenario = world.scenario("S1").unwrap();
        let oracle = OraclePolicy { hp };
        let report =
            run_experiment(&world, scenario, &oracle, &NnSchedule::RoundRobin, 30, 7, &hp).unwrap();
        assert_eq!(report.prediction_accuracy, 1.0);
        assert_eq!(report.records.len(), 30);
    }

    #[test]
    fn edge_cpu_fp32_is_the_normalization_anchor() {
        let world = reduced();
        let hp = Hyperparams::default();
        let scenario = world.scenario("S1").unwrap();
        let (policies, _) = fixed_policies(&world, &hp);
        let report = run_experiment(
            &world,
            scenario,
            policies[0].as_ref(),
            &NnSchedule::RoundRobin,
            25,
            3,
            &hp,
        )
        .unwrap();
        assert_eq!(report.policy, "edge-cpu");
        assert_eq!(report.ppw_normalized, 1.0);
    }

    #[test]
    fn reports_are_byte_stable_and_consistent() {
        let world = reduced();
        let hp = Hyperparams::default();
        let scenario = world.scenario("S4").unwrap();
        let oracle = OraclePolicy { hp };
        let report =
            run_experiment(&world, scenario, &oracle, &NnSchedule::RoundRobin, 12, 9, &hp).unwrap();

        let csv = emit_report(&report, ReportFormat::Csv);
        let csv2 = emit_report(&report, ReportFormat::Csv);
        assert_eq!(csv, csv2);
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 1 + 12);

        let json = String::from_utf8(emit_report(&report, ReportFormat::Json)).unwrap();
        assert_eq!(json.matches("\"step\":").count(), 12);
        assert_eq!(json, String::from_utf8(emit_report(&report, ReportFormat::Json)).unwrap());
    }

    #[test]
    fn rerun_with_same_seed_is_identical() {
        let world = reduced();
        let hp = Hyperparams::default();
        let scenario = world.scenario("S3").unwrap();
        let oracle = OraclePolicy { hp };
        let a = run_experiment(&world, scenario, &oracle, &NnSchedule::Random, 20, 11, &hp).unwrap();
        let b = run_experiment(&world, scenario, &oracle, &NnSchedule::Random, 20, 11, &hp).unwrap();
        assert_eq!(
            emit_report(&a, ReportFormat::Json),
            emit_report(&b, ReportFormat::Json)
        );
    }

    #[test]
    fn compare_ranks_and_validates() {
        let world = reduced();
        let hp = Hyperparams::default();
        let scenario = world.scenario("S1").unwrap();
        let oracle = OraclePolicy { hp };
        let (fixed, _) = fixed_policies(&world, &hp);
        let mut reports = vec![run_experiment(
            &world,
            scenario,
            &oracle,
            &NnSchedule::RoundRobin,
            20,
            5,
            &hp,
        )
        .unwrap()];
        for p in &fixed {
            reports.push(
                run_experiment(&world, scenario, p.as_ref(), &NnSchedule::RoundRobin, 20, 5, &hp)
                    .unwrap(),
            );
        }
        let table = compare(&reports).unwrap();
        assert_eq!(table.rows.len(), reports.len());
        // Oracle dominance in mean reward.
        let oracle_reward = table.rows.iter().find(|r| r.policy == "oracle").unwrap().mean_reward;
        for row in &table.rows {
            assert!(oracle_reward >= row.mean_reward - 1e-12, "{}", row.policy);
        }
        // Ranked by normalized PPW.
        for pair in table.rows.windows(2) {
            assert!(pair[0].ppw_normalized >= pair[1].ppw_normalized);
        }

        assert!(matches!(compare(&[]), Err(CompareError::Empty)));
        let mut mixed = reports.clone();
        mixed[1].scenario = "S2".to_string();
        assert!(matches!(compare(&mixed), Err(CompareError::Mismatched(_, _))));
    }

    #[test]
    fn oracle_qos_ratio_bounded_by_fixed_policies() {
        let world = reduced();
        let hp = Hyperparams::default();
        let oracle = OraclePolicy { hp };
        let (fixed, _) = fixed_policies(&world, &hp);
        for id in ["S1", "S2", "S3", "S4", "S5"] {
            let scenario = world.scenario(id).unwrap();
            let oracle_report =
                run_experiment(&world, scenario, &oracle, &NnSchedule::RoundRobin, 30, 2, &hp)
                    .unwrap();
            for p in &fixed {
                let report =
                    run_experiment(&world, scenario, p.as_ref(), &NnSchedule::RoundRobin, 30, 2, &hp)
                        .unwrap();
                assert!(
                    oracle_report.qos_violation_ratio <= report.qos_violation_ratio + 1e-12,
                    "{id}: oracle {} vs {} {}",
                    oracle_report.qos_violation_ratio,
                    p.name(),
                    report.qos_violation_ratio
                );
            }
        }
    }

    #[test]
    fn probe_returns_a_single_measurement() {
        let world = reduced();
        let mut rng = crate::stream::rng(1, "probe-test", 0);
        let q = QTable::new_random(action_keys(&world), &mut rng);
        let (mean, bytes) = overhead_probe(&q, 1);
        assert!(mean.as_nanos() > 0);
        assert_eq!(bytes, q.to_bytes().len());
    }
}
