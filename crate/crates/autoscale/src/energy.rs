//! The four device-centric energy models.
//!
//! * CPU: per-core sum of per-frequency busy energy plus idle energy
//! * GPU: the same without the per-core sum
//! * DSP: constant pre-measured power times latency
//! * Offload: signal-strength-dependent TX/RX power plus idle power while
//!   waiting for the remote result
//!
//! All models are pure, linear in every time argument, and keep the
//! breakdown fields separate so reports can attribute energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("unknown frequency {frequency_hz} Hz: not in the power table")]
    UnknownFrequency { frequency_hz: f64 },
    #[error("tx time {t_tx_s} + rx time {t_rx_s} exceeds total latency {total_latency_s}")]
    TransferExceedsLatency {
        t_tx_s: f64,
        t_rx_s: f64,
        total_latency_s: f64,
    },
}

/// Time spent busy at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSlice {
    pub frequency_hz: f64,
    pub busy_time_s: f64,
}

/// Busy/idle utilization of one core (or of a whole single-unit processor).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoreUtilization {
    pub slices: Vec<UtilizationSlice>,
    pub idle_time_s: f64,
}

/// Busy-power lookup for a processor, plus its idle power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    /// (frequency_hz, busy_power_w) pairs; matched exactly.
    pub busy_power_w: Vec<(f64, f64)>,
    pub idle_power_w: f64,
}

impl PowerTable {
    fn busy_power(&self, frequency_hz: f64) -> Result<f64, EnergyError> {
        self.busy_power_w
            .iter()
            .find(|(f, _)| *f == frequency_hz)
            .map(|(_, p)| *p)
            .ok_or(EnergyError::UnknownFrequency { frequency_hz })
    }
}

impl From<&crate::profiles::ProcessorSpec> for PowerTable {
    fn from(spec: &crate::profiles::ProcessorSpec) -> Self {
        PowerTable {
            busy_power_w: spec
                .vf_steps
                .iter()
                .map(|s| (s.frequency_hz, s.busy_power_w))
                .collect(),
            idle_power_w: spec.idle_power_w,
        }
    }
}

/// Energy of one simulated inference, attributed by source. `total_j` is
/// exactly the sum of the other four fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub compute_j: f64,
    pub idle_j: f64,
    pub tx_j: f64,
    pub rx_j: f64,
    pub total_j: f64,
}

impl EnergyBreakdown {
    fn compute(compute_j: f64, idle_j: f64) -> EnergyBreakdown {
        EnergyBreakdown {
            compute_j,
            idle_j,
            tx_j: 0.0,
            rx_j: 0.0,
            total_j: compute_j + idle_j,
        }
    }
}

/// Utilization-based CPU energy: per core, sum busy power times busy time
/// over frequencies, plus idle power times idle time; total over cores.
pub fn cpu_energy(
    per_core: &[CoreUtilization],
    power: &PowerTable,
) -> Result<EnergyBreakdown, EnergyError> {
    let mut compute_j = 0.0;
    let mut idle_j = 0.0;
    for core in per_core {
        for slice in &core.slices {
            compute_j += power.busy_power(slice.frequency_hz)? * slice.busy_time_s;
        }
        idle_j += power.idle_power_w * core.idle_time_s;
    }
    Ok(EnergyBreakdown::compute(compute_j, idle_j))
}

/// Utilization-based GPU energy: as `cpu_energy` without the per-core sum.
pub fn gpu_energy(
    slices: &[UtilizationSlice],
    idle_time_s: f64,
    power: &PowerTable,
) -> Result<EnergyBreakdown, EnergyError> {
    let mut compute_j = 0.0;
    for slice in slices {
        compute_j += power.busy_power(slice.frequency_hz)? * slice.busy_time_s;
    }
    Ok(EnergyBreakdown::compute(compute_j, power.idle_power_w * idle_time_s))
}

/// DSP energy: constant pre-measured power times latency.
pub fn dsp_energy(p_dsp_w: f64, latency_s: f64) -> EnergyBreakdown {
    EnergyBreakdown::compute(p_dsp_w * latency_s, 0.0)
}

/// Offload energy: TX and RX at the signal-strength-dependent powers, plus
/// idle power for the remainder of the latency.
pub fn offload_energy(
    p_tx_w: f64,
    t_tx_s: f64,
    p_rx_w: f64,
    t_rx_s: f64,
    p_idle_w: f64,
    total_latency_s: f64,
) -> Result<EnergyBreakdown, EnergyError> {
    if t_tx_s + t_rx_s > total_latency_s {
        return Err(EnergyError::TransferExceedsLatency {
            t_tx_s,
            t_rx_s,
            total_latency_s,
        });
    }
    let tx_j = p_tx_w * t_tx_s;
    let rx_j = p_rx_w * t_rx_s;
    let idle_j = p_idle_w * (total_latency_s - t_tx_s - t_rx_s);
    Ok(EnergyBreakdown {
        compute_j: 0.0,
        idle_j,
        tx_j,
        rx_j,
        total_j: tx_j + rx_j + idle_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table(pairs: &[(f64, f64)], idle: f64) -> PowerTable {
        PowerTable {
            busy_power_w: pairs.to_vec(),
            idle_power_w: idle,
        }
    }

    fn one_core(f: f64, busy: f64, idle: f64) -> Vec<CoreUtilization> {
        vec![CoreUtilization {
            slices: vec![UtilizationSlice {
                frequency_hz: f,
                busy_time_s: busy,
            }],
            idle_time_s: idle,
        }]
    }

    #[test]
    fn cpu_single_slice_top_step() {
        let power = table(&[(2.8e9, 5.5)], 0.3);
        let e = cpu_energy(&one_core(2.8e9, 0.1, 0.0), &power).unwrap();
        assert_relative_eq!(e.total_j, 0.55, max_relative = 1e-12);
        assert_eq!(e.total_j, e.compute_j + e.idle_j + e.tx_j + e.rx_j);
    }

    #[test]
    fn cpu_idle_only() {
        let power = table(&[(2.8e9, 5.5)], 0.3);
        let cores = vec![CoreUtilization {
            slices: vec![],
            idle_time_s: 0.2,
        }];
        let e = cpu_energy(&cores, &power).unwrap();
        assert_relative_eq!(e.total_j, 0.06, max_relative = 1e-12);
        assert_eq!(e.compute_j, 0.0);
    }

    #[test]
    fn cpu_two_cores_busy_plus_idle() {
        // Independent per-term oracle: each core contributes
        // 2 W * 0.05 s + 0.1 W * 0.05 s = 0.105 J; two cores give 0.21 J.
        let per_term: f64 = 2.0 * (2.0 * 0.05 + 0.1 * 0.05);
        assert_relative_eq!(per_term, 0.21, max_relative = 1e-15);

        let power = table(&[(1.0e9, 2.0)], 0.1);
        let cores = vec![
            CoreUtilization {
                slices: vec![UtilizationSlice {
                    frequency_hz: 1.0e9,
                    busy_time_s: 0.05,
                }],
                idle_time_s: 0.05,
            };
            2
        ];
        let e = cpu_energy(&cores, &power).unwrap();
        assert_relative_eq!(e.total_j, per_term, max_relative = 1e-12);
    }

    #[test]
    fn cpu_unknown_frequency_is_an_error() {
        let power = table(&[(2.8e9, 5.5)], 0.3);
        let err = cpu_energy(&one_core(1.0e9, 0.1, 0.0), &power).unwrap_err();
        assert_eq!(err, EnergyError::UnknownFrequency { frequency_hz: 1.0e9 });
    }

    #[test]
    fn gpu_single_slice() {
        let power = table(&[(7.0e8, 2.8)], 0.2);
        let e = gpu_energy(
            &[UtilizationSlice {
                frequency_hz: 7.0e8,
                busy_time_s: 0.1,
            }],
            0.0,
            &power,
        )
        .unwrap();
        assert_relative_eq!(e.total_j, 0.28, max_relative = 1e-12);
    }

    #[test]
    fn gpu_idle_only() {
        let power = table(&[(7.0e8, 2.8)], 0.2);
        let e = gpu_energy(&[], 1.0, &power).unwrap();
        assert_relative_eq!(e.total_j, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn gpu_is_linear_over_slices() {
        let power = table(&[(3.0e8, 1.0), (7.0e8, 2.8)], 0.2);
        let a = UtilizationSlice {
            frequency_hz: 3.0e8,
            busy_time_s: 0.04,
        };
        let b = UtilizationSlice {
            frequency_hz: 7.0e8,
            busy_time_s: 0.07,
        };
        let both = gpu_energy(&[a, b], 0.0, &power).unwrap();
        let ea = gpu_energy(&[a], 0.0, &power).unwrap();
        let eb = gpu_energy(&[b], 0.0, &power).unwrap();
        assert_relative_eq!(both.total_j, ea.total_j + eb.total_j, max_relative = 1e-12);
    }

    #[test]
    fn dsp_product() {
        assert_relative_eq!(dsp_energy(1.8, 0.05).total_j, 0.09, max_relative = 1e-12);
        assert_eq!(dsp_energy(1.8, 0.0).total_j, 0.0);
        assert_relative_eq!(dsp_energy(1.8, 0.0333).total_j, 0.05994, max_relative = 1e-12);
    }

    #[test]
    fn offload_term_by_term() {
        let e = offload_energy(1.0, 0.2, 0.8, 0.1, 0.3, 0.5).unwrap();
        assert_relative_eq!(e.total_j, 0.34, max_relative = 1e-12);
        assert_relative_eq!(e.tx_j, 0.2, max_relative = 1e-12);
        assert_relative_eq!(e.rx_j, 0.08, max_relative = 1e-12);
        assert_relative_eq!(e.idle_j, 0.06, max_relative = 1e-12);
    }

    #[test]
    fn offload_idle_only() {
        let e = offload_energy(1.0, 0.0, 0.8, 0.0, 0.3, 1.0).unwrap();
        assert_relative_eq!(e.total_j, 0.3, max_relative = 1e-12);
    }

    #[test]
    fn offload_boundary_has_zero_idle() {
        let e = offload_energy(1.0, 0.3, 0.8, 0.2, 0.3, 0.5).unwrap();
        assert_eq!(e.idle_j, 0.0);
        assert_relative_eq!(e.total_j, e.tx_j + e.rx_j, max_relative = 1e-12);
    }

    #[test]
    fn offload_precondition_violation() {
        let err = offload_energy(1.0, 0.4, 0.8, 0.2, 0.3, 0.5).unwrap_err();
        assert!(matches!(err, EnergyError::TransferExceedsLatency { .. }));
    }

    #[test]
    fn single_core_cpu_equals_gpu() {
        let power = table(&[(1.0e9, 2.0), (2.0e9, 3.5)], 0.15);
        let slices = vec![
            UtilizationSlice {
                frequency_hz: 1.0e9,
                busy_time_s: 0.03,
            },
            UtilizationSlice {
                frequency_hz: 2.0e9,
                busy_time_s: 0.02,
            },
        ];
        let cores = vec![CoreUtilization {
            slices: slices.clone(),
            idle_time_s: 0.01,
        }];
        let c = cpu_energy(&cores, &power).unwrap();
        let g = gpu_energy(&slices, 0.01, &power).unwrap();
        assert_eq!(c, g);
    }

    proptest! {
        #[test]
        fn doubling_times_doubles_totals(
            busy in 0.0..10.0f64,
            idle in 0.0..10.0f64,
            t_tx in 0.0..1.0f64,
            t_rx in 0.0..1.0f64,
            wait in 0.0..1.0f64,
        ) {
            let power = table(&[(1.0e9, 2.0)], 0.3);
            let e1 = cpu_energy(&one_core(1.0e9, busy, idle), &power).unwrap();
            let e2 = cpu_energy(&one_core(1.0e9, busy * 2.0, idle * 2.0), &power).unwrap();
            prop_assert!((e2.total_j - 2.0 * e1.total_j).abs() <= 1e-12 * e2.total_j.abs().max(1.0));

            let total = t_tx + t_rx + wait;
            let o1 = offload_energy(1.2, t_tx, 0.9, t_rx, 0.3, total).unwrap();
            let o2 = offload_energy(1.2, 2.0 * t_tx, 0.9, 2.0 * t_rx, 0.3, 2.0 * total).unwrap();
            prop_assert!((o2.total_j - 2.0 * o1.total_j).abs() <= 1e-12 * o2.total_j.abs().max(1.0));

            let d1 = dsp_energy(1.8, busy);
            let d2 = dsp_energy(1.8, busy * 2.0);
            prop_assert!((d2.total_j - 2.0 * d1.total_j).abs() <= 1e-12 * d2.total_j.abs().max(1.0));
        }

        #[test]
        fn all_fields_nonnegative(
            busy in 0.0..10.0f64,
            idle in 0.0..10.0f64,
            t_tx in 0.0..1.0f64,
            t_rx in 0.0..1.0f64,
            wait in 0.0..1.0f64,
        ) {
            let power = table(&[(1.0e9, 2.0)], 0.3);
            let e = cpu_energy(&one_core(1.0e9, busy, idle), &power).unwrap();
            let o = offload_energy(1.2, t_tx, 0.9, t_rx, 0.3, t_tx + t_rx + wait).unwrap();
            for b in [e, o, dsp_energy(1.8, busy)] {
                prop_assert!(b.compute_j >= 0.0 && b.idle_j >= 0.0);
                prop_assert!(b.tx_j >= 0.0 && b.rx_j >= 0.0 && b.total_j >= 0.0);
            }
        }
    }
}
