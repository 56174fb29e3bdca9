//! Subevent timing and PAwR-train capacity planning.
//!
//! One subevent serves its device group with a pre-transmission phase
//! (indication reception, the configured CS procedures, data processing)
//! followed by the response slot window:
//!
//! ```text
//! t_pre = rx + procedures * cs + processing
//! t_txwin = response_slots * slot_spacing
//! t_sub = t_pre + t_txwin
//! ```
//!
//! With every device active each cycle, the response slot budget caps the
//! group at `floor(response_slots / payloads_per_device)` devices; a train of
//! `subevents` groups multiplies the total and bounds the update interval
//! from below by `subevents * t_sub`.

use serde::Serialize;

use crate::constants::ChannelProfile;
use crate::coordination::response_payload_count;
use crate::scalar::Real;

/// Measured subevent timing for one channel profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingParams<T> {
    /// Indication reception to the first CS procedure, ms.
    pub rx_ms: T,
    /// One CS procedure, ms.
    pub cs_ms: T,
    /// Data processing between the last procedure and the first response, ms.
    pub processing_ms: T,
    /// Response slot spacing, ms.
    pub slot_spacing_ms: T,
    /// Response slots per subevent (`<= 256`).
    pub response_slots: u16,
    /// Subevents per PAwR train (`<= 128`).
    pub subevents: u16,
    /// CS procedures each device executes per cycle.
    pub procedures_per_cycle: u32,
    pub profile: ChannelProfile,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CapacityError {
    #[error("subevent count {0} exceeds the PAwR maximum of 128")]
    TooManySubevents(u16),
    #[error("response slot count {0} exceeds the PAwR maximum of 256")]
    TooManyResponseSlots(u16),
}

impl<T: Real> TimingParams<T> {
    pub fn validate(&self) -> Result<(), CapacityError> {
        if self.subevents > 128 {
            return Err(CapacityError::TooManySubevents(self.subevents));
        }
        if self.response_slots > 256 {
            return Err(CapacityError::TooManyResponseSlots(self.response_slots));
        }
        Ok(())
    }
}

/// Durations of one subevent's phases, ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubeventTiming<T> {
    pub pre_ms: T,
    pub tx_window_ms: T,
    pub total_ms: T,
}

/// Computes the subevent phase durations.
pub fn subevent_timing<T: Real>(params: &TimingParams<T>) -> SubeventTiming<T> {
    let procedures = T::from_u32(params.procedures_per_cycle).expect("procedure count");
    let pre_ms = params.rx_ms + procedures * params.cs_ms + params.processing_ms;
    let tx_window_ms = T::from_u16(params.response_slots).expect("slot count") * params.slot_spacing_ms;
    SubeventTiming {
        pre_ms,
        tx_window_ms,
        total_ms: pre_ms + tx_window_ms,
    }
}

/// What ultimately limits the device count of a subevent group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BindingLimit {
    /// The response slot budget binds.
    ResponseSlots,
    /// A single shared channel list bounds simultaneous pairs at the list
    /// length, i.e. device count at twice that. Partitioning the physical
    /// channels into disjoint subsets lifts this back to the slot budget.
    PairBound { max_devices: u32 },
    /// Payloads per device exceed the slot budget; no device fits.
    ZeroCapacity,
}

/// Capacity of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport<T> {
    pub timing: SubeventTiming<T>,
    /// Response payloads each active device occupies per cycle.
    pub response_payloads: u32,
    /// Device cap per subevent group from the response slot budget.
    pub devices_per_subevent: u32,
    /// Cap across the whole train.
    pub total_devices: u64,
    /// Lower bound on the update interval, seconds.
    pub min_update_interval_s: T,
    pub binding_limit: BindingLimit,
}

/// Computes the capacity bounds for a configuration with `slot_count`
/// measurement slots per cycle, `antenna_paths` paths, and `k` per-path
/// results per response payload.
///
/// `subset_partitioning` states whether disjoint channel subsets are assigned
/// to independent pair groups (possible at 2 MHz spacing); it changes which
/// limit is reported as binding, never the arithmetic.
pub fn capacity<T: Real>(
    params: &TimingParams<T>,
    slot_count: u16,
    antenna_paths: u8,
    k: u8,
    subset_partitioning: bool,
) -> CapacityReport<T> {
    let timing = subevent_timing(params);
    let response_payloads = response_payload_count(slot_count, antenna_paths, k) as u32;
    let min_update_interval_s = T::from_u16(params.subevents).expect("subevent count") * timing.total_ms
        / T::from_f64_lossy(1000.0);
    if response_payloads == 0 || response_payloads > params.response_slots as u32 {
        return CapacityReport {
            timing,
            response_payloads,
            devices_per_subevent: 0,
            total_devices: 0,
            min_update_interval_s,
            binding_limit: BindingLimit::ZeroCapacity,
        };
    }
    let devices_per_subevent = params.response_slots as u32 / response_payloads;
    let total_devices = params.subevents as u64 * devices_per_subevent as u64;
    let pair_bound = 2 * params.profile.channel_count();
    let binding_limit = if !subset_partitioning && devices_per_subevent > pair_bound {
        BindingLimit::PairBound {
            max_devices: pair_bound,
        }
    } else {
        BindingLimit::ResponseSlots
    };
    CapacityReport {
        timing,
        response_payloads,
        devices_per_subevent,
        total_devices,
        min_update_interval_s,
        binding_limit,
    }
}

/// CS procedure duration for an arbitrary channel count, linear in the
/// mode-2 step count through the two measured profiles (37 and 72 channels).
/// Returns the extrapolation flag for counts outside the measured pair.
pub fn cs_duration_ms<T: Real>(channels: u32) -> (T, bool) {
    let measured_37 = 9.6;
    let measured_72 = 14.4;
    let slope = (measured_72 - measured_37) / (72.0 - 37.0);
    let value = measured_37 + (channels as f64 - 37.0) * slope;
    (T::from_f64_lossy(value), channels != 37 && channels != 72)
}

/// One row of a capacity sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow<T> {
    pub profile: ChannelProfile,
    pub slot_count: u16,
    pub procedures_per_cycle: u32,
    pub response_slots: u16,
    pub subevents: u16,
    pub antenna_paths: u8,
    pub k: u8,
    pub report: CapacityReport<T>,
}

/// Cartesian capacity sweep across configuration knobs. `base` supplies the
/// measured per-profile phase durations; slot/subevent counts are overridden
/// per grid point.
pub fn sweep<T: Real>(
    base: &[TimingParams<T>],
    slot_counts: &[u16],
    procedure_counts: &[u32],
    response_slot_counts: &[u16],
    subevent_counts: &[u16],
    antenna_paths: u8,
    subset_partitioning: bool,
) -> Vec<SweepRow<T>> {
    let mut rows = Vec::new();
    for params in base {
        let k = params.profile.spacing().results_per_payload();
        for &slot_count in slot_counts {
            for &procedures in procedure_counts {
                if procedures > slot_count as u32 {
                    continue;
                }
                for &response_slots in response_slot_counts {
                    for &subevents in subevent_counts {
                        let point = TimingParams {
                            response_slots,
                            subevents,
                            procedures_per_cycle: procedures,
                            ..*params
                        };
                        let report = capacity(&point, slot_count, antenna_paths, k, subset_partitioning);
                        rows.push(SweepRow {
                            profile: params.profile,
                            slot_count,
                            procedures_per_cycle: procedures,
                            response_slots,
                            subevents,
                            antenna_paths,
                            k,
                            report,
                        });
                    }
                }
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::HardwareConstants;

    const FIXTURE: &str = include_str!("../../../fixtures/nrf54l15.toml");

    fn timing(profile: ChannelProfile, procedures: u32) -> TimingParams<f64> {
        let params = HardwareConstants::from_toml_str(FIXTURE)
            .unwrap()
            .timing_params(profile, procedures)
            .unwrap();
        params.validate().unwrap();
        params
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn subevent_timing_matches_measured_rows() {
        let t72 = subevent_timing(&timing(ChannelProfile::Ch72, 4));
        assert!(close(t72.pre_ms, 61.3, 0.05)); // 1.4 + 4*14.4 + 2.3
        assert!(close(t72.tx_window_ms, 320.0, 0.05)); // 256 * 1.25
        assert!(close(t72.total_ms, 381.3, 0.05));

        let t37 = subevent_timing(&timing(ChannelProfile::Ch37, 4));
        assert!(close(t37.pre_ms, 41.6, 0.05));
        assert!(close(t37.tx_window_ms, 320.0, 0.05));
        assert!(close(t37.total_ms, 361.6, 0.05));
    }

    #[test]
    fn zero_procedures_reduce_pre_phase_to_rx_plus_processing() {
        let params = timing(ChannelProfile::Ch37, 0);
        let t = subevent_timing(&params);
        assert!(close(t.pre_ms, params.rx_ms + params.processing_ms, 1e-12));
    }

    #[test]
    fn capacity_matches_published_points() {
        // 4 x 37 channels, k = 2, one antenna path: 128 devices per group.
        let report = capacity(&timing(ChannelProfile::Ch37, 4), 4, 1, 2, true);
        assert_eq!(report.response_payloads, 2);
        assert_eq!(report.devices_per_subevent, 128);
        assert_eq!(report.total_devices, 16_384);
        assert!(close(report.min_update_interval_s, 46.3, 0.05));
        assert_eq!(report.binding_limit, BindingLimit::ResponseSlots);

        // 4 x 72 channels, k = 1: twice the payloads, half the devices.
        let report = capacity(&timing(ChannelProfile::Ch72, 4), 4, 1, 1, false);
        assert_eq!(report.response_payloads, 4);
        assert_eq!(report.devices_per_subevent, 64);
        assert_eq!(report.total_devices, 8_192);
        assert!(close(report.min_update_interval_s, 48.8, 0.05));

        // Light scheduling: 2 slots, 1 procedure, k = 2.
        let report = capacity(&timing(ChannelProfile::Ch37, 1), 2, 1, 2, true);
        assert_eq!(report.response_payloads, 1);
        assert_eq!(report.devices_per_subevent, 256);
        assert_eq!(report.total_devices, 32_768);
    }

    #[test]
    fn pair_bound_reported_without_partitioning() {
        // 128 devices per group exceeds 2 * 37 = 74 simultaneous-pair bound
        // unless disjoint channel subsets are used.
        let report = capacity(&timing(ChannelProfile::Ch37, 4), 4, 1, 2, false);
        assert_eq!(report.devices_per_subevent, 128);
        assert_eq!(report.binding_limit, BindingLimit::PairBound { max_devices: 74 });
    }

    #[test]
    fn degenerate_identity_configuration_fills_every_slot() {
        let report = capacity(&timing(ChannelProfile::Ch37, 1), 1, 1, 1, true);
        assert_eq!(report.response_payloads, 1);
        assert_eq!(report.devices_per_subevent, 256);
    }

    #[test]
    fn oversized_payload_budget_reports_zero_capacity() {
        let mut params = timing(ChannelProfile::Ch72, 4);
        params.response_slots = 2;
        let report = capacity(&params, 4, 1, 1, false);
        assert_eq!(report.devices_per_subevent, 0);
        assert_eq!(report.total_devices, 0);
        assert_eq!(report.binding_limit, BindingLimit::ZeroCapacity);
    }

    #[test]
    fn capacity_monotone_in_payload_count_and_linear_in_subevents() {
        let params = timing(ChannelProfile::Ch72, 4);
        let mut previous = u32::MAX;
        for slot_count in 1..=8u16 {
            let report = capacity(&params, slot_count, 1, 1, false);
            assert!(report.devices_per_subevent <= previous);
            previous = report.devices_per_subevent;
        }
        let single = capacity(&TimingParams { subevents: 1, ..params }, 4, 1, 1, false);
        let full = capacity(&params, 4, 1, 1, false);
        assert!(close(
            full.min_update_interval_s,
            single.min_update_interval_s * params.subevents as f64,
            1e-9
        ));
        assert!(close(single.min_update_interval_s, single.timing.total_ms / 1000.0, 1e-12));
    }

    #[test]
    fn doubling_slots_doubles_devices_when_divisible() {
        let params = timing(ChannelProfile::Ch37, 4);
        let half = capacity(&TimingParams { response_slots: 128, ..params }, 4, 1, 2, true);
        let full = capacity(&params, 4, 1, 2, true);
        assert_eq!(full.devices_per_subevent, 2 * half.devices_per_subevent);
    }

    #[test]
    fn cs_duration_interpolates_between_measured_points() {
        let (at_37, extrapolated) = cs_duration_ms::<f64>(37);
        assert!(close(at_37, 9.6, 1e-12));
        assert!(!extrapolated);
        let (at_72, extrapolated) = cs_duration_ms::<f64>(72);
        assert!(close(at_72, 14.4, 1e-12));
        assert!(!extrapolated);
        let (mid, extrapolated) = cs_duration_ms::<f64>(54);
        assert!(extrapolated);
        assert!(mid > 9.6 && mid < 14.4);
    }

    #[test]
    fn sweep_covers_grid_and_stays_consistent() {
        let base = [timing(ChannelProfile::Ch37, 4), timing(ChannelProfile::Ch72, 4)];
        let rows = sweep(
            &base,
            &[2, 4],
            &[1, 4],
            &[128, 256],
            &[1, 128],
            1,
            true,
        );
        assert!(!rows.is_empty());
        for row in &rows {
            let expected = capacity(
                &TimingParams {
                    response_slots: row.response_slots,
                    subevents: row.subevents,
                    procedures_per_cycle: row.procedures_per_cycle,
                    ..base[if row.profile == ChannelProfile::Ch37 { 0 } else { 1 }]
                },
                row.slot_count,
                row.antenna_paths,
                row.k,
                true,
            );
            assert_eq!(row.report, expected);
        }
        // The published operating points appear in the grid.
        assert!(rows.iter().any(|r| r.report.total_devices == 16_384));
        assert!(rows.iter().any(|r| r.report.total_devices == 32_768));
    }

    #[test]
    fn validation_rejects_out_of_spec_pawr_limits() {
        let mut params = timing(ChannelProfile::Ch72, 4);
        params.subevents = 129;
        assert_eq!(params.validate(), Err(CapacityError::TooManySubevents(129)));
        params.subevents = 128;
        params.response_slots = 257;
        assert_eq!(params.validate(), Err(CapacityError::TooManyResponseSlots(257)));
    }
}
