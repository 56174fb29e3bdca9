//! Discrete-event simulation of the three-tier update cycle.
//!
//! Each simulated cycle walks the three phases end to end: the Orchestrator
//! serializes the measurement configuration and provisions it one interval
//! ahead through the Gateway; every device decodes (or reuses) the
//! configuration, derives its plan, executes its CS procedures against a
//! synthetic channel, and preprocesses the results; devices then transmit
//! compact payloads in their derived response slots, and the Orchestrator
//! inverts the slot indices against its cached configuration, pairs the
//! Initiator and Reflector reports, and estimates distances.
//!
//! Time is logical (cycle, subevent, slot): every claim the simulator checks
//! is schedule-level, and wall-clock durations live in the timing model. The
//! Gateway is a lossless store-and-forward relay; losses are injected at the
//! response-slot hop. Everything is deterministic under the scenario seed.

pub mod scenario;

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::codec::{
    self, per_path_size, CodecError, PerPathResult, RawStepRecord, StepMode, ToneQuality,
};
use crate::coordination::{
    active_pairs, build_device_plan, CoordinationError, DevicePlan, MeasurementConfig,
};
use crate::pbr::{
    self, CalibrationOffset, PbrError, PctVector, SyntheticChannel, GRID_SPACING_HZ,
};
use crate::sim::scenario::Scenario;

/// Tone amplitude used by the synthetic channel, chosen so quantization to
/// the 12-bit PCT wire format is negligible against one CIR bin.
const PCT_AMPLITUDE: f64 = 1024.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Estimator(#[from] PbrError),
    #[error("cycle {cycle}: device {device} decoded a configuration differing from the distributed one")]
    ConfigDivergence { cycle: u64, device: u16 },
    #[error("cycle {cycle}: response in slot {slot} carries {actual} result blocks, expected {expected}")]
    ResponseShapeMismatch {
        cycle: u64,
        slot: u16,
        expected: usize,
        actual: usize,
    },
}

/// Logical PAwR clock. The simulation counts cycles without bound and wraps
/// only the wire-visible event counter.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimClock {
    cycle: u64,
}

impl SimClock {
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// 16-bit PAwR event counter as seen on air.
    pub fn event_counter(&self) -> u16 {
        (self.cycle % (1 << 16)) as u16
    }

    pub fn advance(&mut self) {
        self.cycle += 1;
    }
}

/// One response-slot transmission, as recorded in the run trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TxRecord {
    pub cycle: u64,
    pub device: u16,
    pub response_slot: u16,
}

/// Violation reported by [`verify_no_consecutive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cycle {cycle}: device {device} transmits in adjacent slots {first} and {second}")]
pub struct ConsecutiveViolation {
    pub cycle: u64,
    pub device: u16,
    pub first: u16,
    pub second: u16,
}

/// Scans a transmission trace for devices occupying adjacent response slots
/// within one cycle, which the platform cannot service reliably.
pub fn verify_no_consecutive(trace: &[TxRecord]) -> Result<(), ConsecutiveViolation> {
    let mut per_device: BTreeMap<(u64, u16), Vec<u16>> = BTreeMap::new();
    for record in trace {
        per_device.entry((record.cycle, record.device)).or_default().push(record.response_slot);
    }
    for ((cycle, device), mut slots) in per_device {
        slots.sort_unstable();
        for pair in slots.windows(2) {
            if pair[1] == pair[0] + 1 {
                return Err(ConsecutiveViolation {
                    cycle,
                    device,
                    first: pair[0],
                    second: pair[1],
                });
            }
        }
    }
    Ok(())
}

/// Completion state of one expected (cycle, pair, slot, path) data point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    /// Both sides aggregated; a distance estimate exists.
    Complete,
    /// Exactly one side arrived; reported, never guessed at.
    Incomplete,
    /// Both sides lost.
    Missing,
}

/// One line of the per-data-point report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub cycle: u64,
    pub initiator: u16,
    pub reflector: u16,
    pub slot: u16,
    pub path: u8,
    pub true_distance_m: f64,
    pub estimate_m: Option<f64>,
    pub error_m: Option<f64>,
    pub status: RowStatus,
}

/// Invariant scans evaluated over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimScans {
    /// No device occupied adjacent response slots in any cycle.
    pub no_consecutive_ok: bool,
    /// No two transmissions shared a (cycle, response slot).
    pub unique_slots_ok: bool,
    /// emitted == aggregated + dropped in every cycle.
    pub conservation_ok: bool,
    /// Aggregated results whose origin disagreed with the producing device.
    pub mispaired: u64,
}

impl SimScans {
    pub fn all_ok(&self) -> bool {
        self.no_consecutive_ok && self.unique_slots_ok && self.conservation_ok && self.mispaired == 0
    }
}

/// Run summary, the JSON face of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub scenario: String,
    pub devices: u16,
    pub cycles: u64,
    pub seed: u64,
    pub config_updates: u64,
    pub standby_cycles: u64,
    pub expected_points: u64,
    pub complete_points: u64,
    pub incomplete_points: u64,
    pub missing_points: u64,
    pub responses_emitted: u64,
    pub responses_aggregated: u64,
    pub responses_dropped_loss: u64,
    pub responses_dropped_overflow: u64,
    pub responses_dropped_late: u64,
    pub mean_abs_error_m: Option<f64>,
    pub max_abs_error_m: Option<f64>,
    pub scans: SimScans,
}

/// Full simulation output: summary plus per-data-point rows and the
/// transmission trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub summary: SimSummary,
    pub rows: Vec<ReportRow>,
    pub trace: Vec<TxRecord>,
}

impl SimReport {
    /// Newline-terminated JSON summary; byte-identical across reruns of the
    /// same scenario and seed.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        text.push('\n');
        text
    }

    pub fn csv_header() -> &'static str {
        "cycle,pair,slot,path,true_distance_m,estimate_m,error_m,status"
    }

    /// Newline-terminated CSV of every expected data point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for row in &self.rows {
            let estimate = row.estimate_m.map(|v| v.to_string()).unwrap_or_default();
            let error = row.error_m.map(|v| v.to_string()).unwrap_or_default();
            let status = match row.status {
                RowStatus::Complete => "complete",
                RowStatus::Incomplete => "incomplete",
                RowStatus::Missing => "missing",
            };
            out.push_str(&format!(
                "{},{}-{},{},{},{},{},{},{}\n",
                row.cycle,
                row.initiator,
                row.reflector,
                row.slot,
                row.path,
                row.true_distance_m,
                estimate,
                error,
                status
            ));
        }
        out
    }
}

// Stream seeds: SplitMix64 over the scenario seed and a usage-specific tag,
// so every randomized decision has its own deterministic stream.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, tag: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut state = mix(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    state = mix(state ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    state = mix(state ^ b.wrapping_mul(0xCA5A_8263_95121157));
    mix(state ^ c)
}

const TAG_CHANNEL: u64 = 1;
const TAG_LOSS: u64 = 2;

/// Aggregation slot for one (cycle, pair, slot, path) awaiting both sides.
#[derive(Debug, Default, Clone)]
struct PairBuffer {
    initiator: Option<PerPathResult>,
    reflector: Option<PerPathResult>,
}

type PointKey = (u64, u16, u16, u16, u8); // cycle, initiator, reflector, slot, path

/// Orchestrator-side state: the one-interval configuration cache, the pair
/// aggregation buffer, and the drop counters.
#[derive(Debug, Default)]
struct Orchestrator {
    /// Configurations keyed by the cycle they were advertised for. Holds the
    /// current interval and the previous one, nothing older.
    cache: BTreeMap<u64, MeasurementConfig>,
    buffer: BTreeMap<PointKey, PairBuffer>,
    aggregated: u64,
    late: u64,
    mispaired: u64,
}

impl Orchestrator {
    /// Stages the configuration for an upcoming cycle and evicts anything
    /// older than the previous interval.
    fn provision(&mut self, cycle: u64, config: MeasurementConfig) {
        self.cache.insert(cycle, config);
        let keep_from = cycle.saturating_sub(1);
        self.cache.retain(|&c, _| c >= keep_from);
    }

    /// Handles one delivered response payload. `producer` is transport-level
    /// ground truth used only to detect mis-attribution.
    fn on_response(
        &mut self,
        produce_cycle: u64,
        response_slot: u16,
        bytes: &[u8],
        producer: u16,
    ) -> Result<(), SimError> {
        let Some(config) = self.cache.get(&produce_cycle) else {
            // Arrived two or more intervals after its configuration; the
            // context is gone, so the payload is dropped and counted.
            self.late += 1;
            return Ok(());
        };
        let origin = crate::coordination::invert_response_slot(response_slot, config)?;
        if origin.device != producer {
            self.mispaired += 1;
            return Ok(());
        }
        let step_count = config.channels.len();
        let block = per_path_size(step_count);
        if bytes.len() != block * origin.results.len() {
            return Err(SimError::ResponseShapeMismatch {
                cycle: produce_cycle,
                slot: response_slot,
                expected: origin.results.len(),
                actual: bytes.len() / block.max(1),
            });
        }
        for (chunk, &(slot, path)) in bytes.chunks_exact(block).zip(&origin.results) {
            let result = codec::decode_per_path(chunk, step_count)?;
            let peer = config
                .matrix
                .entry(origin.device, slot)
                .expect("inverted slot implies an active cell");
            let (initiator, reflector) = if origin.device < peer {
                (origin.device, peer)
            } else {
                (peer, origin.device)
            };
            let entry = self
                .buffer
                .entry((produce_cycle, initiator, reflector, slot, path))
                .or_default();
            if origin.device == initiator {
                entry.initiator = Some(result);
            } else {
                entry.reflector = Some(result);
            }
        }
        self.aggregated += 1;
        Ok(())
    }
}

/// Rebuilds the estimator-side PCT vector from a decoded per-path result.
/// Steps are channel-ascending, so the sorted base list gives the mapping.
fn pct_vector_from_result(result: &PerPathResult, sorted_channels: &[u8]) -> PctVector<f64> {
    let mut v = PctVector::masked(crate::coordination::CHANNEL_GRID_LEN);
    for (step, &channel) in result.steps.iter().zip(sorted_channels) {
        v.set(channel as usize, step.pct);
    }
    v
}

fn reference_power_dbm(distance_m: f64) -> i8 {
    let loss = 40.0 + 20.0 * distance_m.max(0.1).log10();
    (-loss).round().clamp(i8::MIN as f64, 0.0) as i8
}

/// Synthesizes the raw step records one device observes for one procedure,
/// following the pair's hop sequence: three calibration steps first, then
/// one tone record per channel and antenna path.
fn records_for_side(
    sequence: &[u8],
    vectors: &[PctVector<f64>],
) -> Vec<RawStepRecord> {
    let mut records = Vec::with_capacity(3 + sequence.len() * vectors.len());
    for &channel in sequence.iter().take(3) {
        records.push(RawStepRecord {
            mode: StepMode::Mode0,
            channel,
            antenna_path: 0,
            pct: Complex64::new(0.0, 0.0),
            quality: ToneQuality::Unavailable,
            tone_extension: false,
        });
    }
    for &channel in sequence {
        for (path, vector) in vectors.iter().enumerate() {
            records.push(RawStepRecord {
                mode: StepMode::Mode2,
                channel,
                antenna_path: path as u8,
                pct: vector.sample(channel as usize).expect("sequence channel synthesized"),
                quality: ToneQuality::High,
                tone_extension: false,
            });
        }
    }
    records
}

/// Runs the scenario to completion.
pub fn run(scenario: &Scenario) -> Result<SimReport, SimError> {
    let configs: Vec<(u64, MeasurementConfig, Vec<u8>)> = scenario
        .schedule
        .iter()
        .map(|(start, spec)| {
            let config = scenario.build_config(spec).expect("schedule validated at parse time");
            let payload = codec::ConfigPayload {
                standby: config.standby,
                spacing: config.spacing,
                aci: config.aci,
                matrix: config.matrix.clone(),
            };
            Ok((*start, config, codec::encode_config(&payload)?))
        })
        .collect::<Result<_, SimError>>()?;

    let mut clock = SimClock::default();
    let mut orchestrator = Orchestrator::default();
    let mut device_configs: Vec<Option<MeasurementConfig>> = vec![None; scenario.devices as usize];
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut trace: Vec<TxRecord> = Vec::new();

    let mut config_updates = 0u64;
    let mut standby_cycles = 0u64;
    let mut emitted_total = 0u64;
    let mut dropped_loss = 0u64;
    let mut dropped_overflow = 0u64;
    let mut unique_slots_ok = true;
    let mut conservation_ok = true;

    let sorted_channels = scenario.spacing.base_channels().sorted();
    let offset = CalibrationOffset(scenario.offset_m);

    for _ in 0..scenario.cycles {
        let cycle = clock.cycle();
        let counter = clock.event_counter();
        let block_idx = scenario.schedule_index(cycle);
        let (block_start, config, encoded) = &configs[block_idx];

        // Phase 1: the Gateway requested this cycle's configuration one
        // interval ago; the Orchestrator caches it for delayed parsing. The
        // indication carries AdvData only when the configuration changes.
        orchestrator.provision(cycle, config.clone());
        let adv_data = (*block_start == cycle).then_some(encoded.as_slice());
        if adv_data.is_some() {
            config_updates += 1;
        }

        for device in 0..scenario.devices {
            if let Some(bytes) = adv_data {
                let payload = codec::decode_config(bytes)?;
                let decoded = if payload.standby {
                    MeasurementConfig::standby(payload.spacing, payload.aci, scenario.slot_params())?
                } else {
                    MeasurementConfig::new(
                        payload.spacing,
                        payload.aci,
                        payload.matrix,
                        payload.spacing.base_channels(),
                        scenario.slot_params(),
                    )?
                };
                if &decoded != config {
                    return Err(SimError::ConfigDivergence { cycle, device });
                }
                device_configs[device as usize] = Some(decoded);
            }
            // Empty AdvData: the previous configuration stays in force and
            // the indication only anchors timing.
        }

        if config.standby {
            standby_cycles += 1;
            clock.advance();
            continue;
        }

        // Phase 2: synchronized measurement execution over the synthetic
        // channel. Both sides of a pair share the hop sequence; each side
        // preprocesses its own records.
        let mut device_results: BTreeMap<(u16, u16, u8), PerPathResult> = BTreeMap::new();
        for slot in 0..config.matrix.slot_count() {
            for pair in active_pairs(&config.matrix, slot)? {
                let sequence = crate::coordination::channel_sequence(&pair, counter, &config.channels);
                let distance = scenario.distance(pair.initiator, pair.reflector);
                let mut init_vectors = Vec::new();
                let mut refl_vectors = Vec::new();
                for path in 0..scenario.antenna_paths {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                        scenario.seed,
                        TAG_CHANNEL,
                        cycle,
                        (slot as u64) << 32 | pair.initiator as u64,
                        path as u64,
                    ));
                    let channel = SyntheticChannel {
                        distance_m: distance,
                        channels: &config.channels,
                        noise_std: scenario.noise_std,
                        initiator_lo_phase: rng.gen_range(0.0..std::f64::consts::TAU),
                        reflector_lo_phase: rng.gen_range(0.0..std::f64::consts::TAU),
                        amplitude: PCT_AMPLITUDE,
                    };
                    let (init, refl) = pbr::synth_pair(&channel, &mut rng);
                    init_vectors.push(init);
                    refl_vectors.push(refl);
                }
                let reference = reference_power_dbm(distance);
                for (device, vectors) in [(pair.initiator, &init_vectors), (pair.reflector, &refl_vectors)] {
                    let records = records_for_side(&sequence, vectors);
                    let results =
                        codec::preprocess(&records, &config.channels, scenario.antenna_paths, reference)?;
                    for (path, result) in results.into_iter().enumerate() {
                        device_results.insert((device, slot, path as u8), result);
                    }
                }
            }
        }

        // Phase 3: response-slot transmission with loss injection, then
        // aggregation against the cached configuration.
        let mut deliveries: Vec<(u16, u16, Vec<u8>)> = Vec::new(); // (slot, device, bytes)
        let mut emitted_this_cycle = 0u64;
        let mut dropped_this_cycle = 0u64;
        let mut loss_rng = ChaCha8Rng::seed_from_u64(stream_seed(scenario.seed, TAG_LOSS, cycle, 0, 0));
        for device in 0..scenario.devices {
            let plan: DevicePlan = build_device_plan(device, config, counter)?;
            if plan.active_position.is_none() {
                continue;
            }
            let layout = crate::coordination::payload_layout(
                &config.matrix.active_slots(device),
                scenario.antenna_paths,
                scenario.results_per_payload,
            );
            for (payload_idx, entries) in layout.iter().enumerate() {
                let response_slot = plan.response_slots[payload_idx];
                let mut bytes = Vec::with_capacity(entries.len() * per_path_size(sorted_channels.len()));
                for &(slot, path) in entries {
                    let result = device_results
                        .get(&(device, slot, path))
                        .expect("active slot produced a result");
                    bytes.extend(codec::encode_per_path(result, sorted_channels.len())?);
                }
                emitted_this_cycle += 1;
                trace.push(TxRecord {
                    cycle,
                    device,
                    response_slot,
                });
                let lost = scenario.explicit_drops.contains(&(cycle, response_slot))
                    || (scenario.loss_prob > 0.0 && loss_rng.gen_bool(scenario.loss_prob));
                if lost {
                    dropped_loss += 1;
                    dropped_this_cycle += 1;
                } else {
                    deliveries.push((response_slot, device, bytes));
                }
            }
        }
        emitted_total += emitted_this_cycle;

        // Responses arrive in slot order; a bounded report buffer overflows
        // on whatever exceeds the per-cycle budget.
        deliveries.sort_by_key(|(slot, _, _)| *slot);
        {
            let mut slots_seen = std::collections::BTreeSet::new();
            for (slot, _, _) in &deliveries {
                if !slots_seen.insert(*slot) {
                    unique_slots_ok = false;
                }
            }
        }
        let budget = scenario.max_in_flight.map(|m| m as usize).unwrap_or(usize::MAX);
        let mut aggregated_this_cycle = 0u64;
        for (idx, (slot, device, bytes)) in deliveries.into_iter().enumerate() {
            if idx >= budget {
                dropped_overflow += 1;
                dropped_this_cycle += 1;
                continue;
            }
            orchestrator.on_response(cycle, slot, &bytes, device)?;
            aggregated_this_cycle += 1;
        }
        if emitted_this_cycle != aggregated_this_cycle + dropped_this_cycle {
            conservation_ok = false;
        }

        // Fold this cycle's buffer into report rows over the expected grid.
        for slot in 0..config.matrix.slot_count() {
            for pair in active_pairs(&config.matrix, slot)? {
                for path in 0..scenario.antenna_paths {
                    let key = (cycle, pair.initiator, pair.reflector, slot, path);
                    let entry = orchestrator.buffer.remove(&key).unwrap_or_default();
                    let true_distance_m = scenario.distance(pair.initiator, pair.reflector);
                    let (status, estimate_m) = match (&entry.initiator, &entry.reflector) {
                        (Some(init), Some(refl)) => {
                            let init_v = pct_vector_from_result(init, &sorted_channels);
                            let refl_v = pct_vector_from_result(refl, &sorted_channels);
                            let estimate = pbr::run_pipeline(
                                &init_v,
                                &refl_v,
                                scenario.fft_size,
                                GRID_SPACING_HZ,
                                offset,
                            )?;
                            (RowStatus::Complete, Some(estimate.distance_m))
                        }
                        (None, None) => (RowStatus::Missing, None),
                        _ => (RowStatus::Incomplete, None),
                    };
                    rows.push(ReportRow {
                        cycle,
                        initiator: pair.initiator,
                        reflector: pair.reflector,
                        slot,
                        path,
                        true_distance_m,
                        estimate_m,
                        error_m: estimate_m.map(|e| (e - true_distance_m).abs()),
                        status,
                    });
                }
            }
        }

        clock.advance();
    }

    let complete = rows.iter().filter(|r| r.status == RowStatus::Complete).count() as u64;
    let incomplete = rows.iter().filter(|r| r.status == RowStatus::Incomplete).count() as u64;
    let missing = rows.iter().filter(|r| r.status == RowStatus::Missing).count() as u64;
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.error_m).collect();
    let mean_abs_error_m = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
    let max_abs_error_m = errors.iter().copied().fold(None, |acc: Option<f64>, e| {
        Some(acc.map_or(e, |a| a.max(e)))
    });

    let scans = SimScans {
        no_consecutive_ok: verify_no_consecutive(&trace).is_ok(),
        unique_slots_ok,
        conservation_ok,
        mispaired: orchestrator.mispaired,
    };

    let summary = SimSummary {
        scenario: scenario.name.clone(),
        devices: scenario.devices,
        cycles: scenario.cycles,
        seed: scenario.seed,
        config_updates,
        standby_cycles,
        expected_points: rows.len() as u64,
        complete_points: complete,
        incomplete_points: incomplete,
        missing_points: missing,
        responses_emitted: emitted_total,
        responses_aggregated: orchestrator.aggregated,
        responses_dropped_loss: dropped_loss,
        responses_dropped_overflow: dropped_overflow,
        responses_dropped_late: orchestrator.late,
        mean_abs_error_m,
        max_abs_error_m,
        scans,
    };

    Ok(SimReport {
        summary,
        rows,
        trace,
    })
}
