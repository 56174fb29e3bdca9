//! Compact data plane: payload encodings and on-device preprocessing.
//!
//! Two payload kinds cross the PAwR link:
//!
//! * **Configuration payload** (downstream, `AUX_SYNC_SUBEVENT_IND` AdvData):
//!   one bit-packed configuration byte, one slot-count byte, then the
//!   assignment matrix as dense row-major cells of two little-endian bytes
//!   each, with `0xFFFF` as the no-peer value.
//!
//!   ```text
//!   byte 0    bit 0: standby, bit 1: spacing (0 = 1 MHz, 1 = 2 MHz),
//!             bits 2-5: ACI, bits 6-7: reserved (zero)
//!   byte 1    measurement slots per cycle
//!   byte 2..  device-major matrix cells, u16 LE, 0xFFFF = no peer
//!   ```
//!
//! * **Per-path result** (upstream, inside `AUX_SYNC_SUBEVENT_RSP` AdvData):
//!   one Reference Power Level byte, then `N` tone PCTs of 3 bytes each in
//!   ascending channel order, then the quality indicators packed 2 bits per
//!   step, four steps per byte, LSB-first, final byte zero-padded. Total
//!   `1 + 3N + ceil(2N / 8)` bytes: 235 for `N = 72`, 122 for `N = 37`.
//!
//!   A PCT packs 12-bit two's-complement I and Q into 24 bits little-endian
//!   (I in bits 0-11, Q in bits 12-23). Step channel indices and antenna-path
//!   metadata are omitted: they are implied by the shared measurement
//!   configuration and the fixed channel-ascending sort order.
//!
//! The 12+12 PCT split and the LSB-first quality packing are conventions of
//! this artifact, not an interoperable controller format.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::coordination::{AssignmentMatrix, ChannelList, ChannelSpacing};

/// Assumed single-PDU AdvData budget for a configuration payload, bytes.
pub const ADV_DATA_BUDGET: usize = 245;

/// Smallest/largest value a 12-bit two's-complement PCT component holds.
pub const PCT_COMPONENT_MIN: i16 = -2048;
pub const PCT_COMPONENT_MAX: i16 = 2047;

/// Connected-baseline Ranging Data Body floor, 72 mode-2 + 3 mode-0 steps.
pub const STANDARD_BODY_BYTES_72: usize = 746;
/// Connected-baseline Ranging Data Body floor, 37 mode-2 + 3 mode-0 steps.
pub const STANDARD_BODY_BYTES_37: usize = 395;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("per-path result carries {actual} steps, configuration expects {expected}")]
    StepCountMismatch { expected: usize, actual: usize },
    #[error("payload is {actual} bytes, expected {expected} for {steps} steps")]
    LengthMismatch {
        expected: usize,
        actual: usize,
        steps: usize,
    },
    #[error("configuration payload of {len} bytes exceeds the {budget}-byte AdvData budget")]
    PayloadTooLarge { len: usize, budget: usize },
    #[error("configuration payload malformed: {0}")]
    MalformedConfig(&'static str),
    #[error("antenna path {path}: procedure incomplete, missing channels {missing:?}")]
    IncompleteProcedure { path: u8, missing: Vec<u8> },
    #[error("record uses channel {0} outside the configured list")]
    UnknownChannel(u8),
    #[error("record uses antenna path {path}, only {configured} configured")]
    PathOutOfRange { path: u8, configured: u8 },
    #[error("matrix too large to serialize: {0}")]
    MatrixTooLarge(String),
}

/// CS step mode. Mode-0 steps calibrate frequency offset and carry no
/// reportable tone data; mode-2 steps measure one tone per antenna path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Mode0,
    Mode2,
}

/// Tone Quality Indicator, two bits on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToneQuality {
    High,
    Medium,
    Low,
    Unavailable,
}

impl ToneQuality {
    pub fn to_bits(self) -> u8 {
        match self {
            Self::High => 0,
            Self::Medium => 1,
            Self::Low => 2,
            Self::Unavailable => 3,
        }
    }

    pub fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0 => Self::High,
            1 => Self::Medium,
            2 => Self::Low,
            _ => Self::Unavailable,
        }
    }

    /// The lower (more pessimistic) of two quality levels, used when
    /// tone-extension samples are merged.
    pub fn worse(self, other: Self) -> Self {
        if self.to_bits() >= other.to_bits() {
            self
        } else {
            other
        }
    }
}

/// One step record as delivered by the Controller for one antenna path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawStepRecord {
    pub mode: StepMode,
    pub channel: u8,
    pub antenna_path: u8,
    pub pct: Complex64,
    pub quality: ToneQuality,
    /// Set on samples from tone-extension slots; such samples share a
    /// (channel, path) with the main tone and are averaged into it.
    pub tone_extension: bool,
}

/// One preprocessed step: tone PCT plus its quality indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub pct: Complex64,
    pub quality: ToneQuality,
}

/// Compact result of one (measurement slot, antenna path): reference power
/// plus the channel-ascending stream of mode-2 step samples.
///
/// PCT components are kept as floats so tone-extension averages stay exact;
/// [`encode_per_path`] quantizes to the 12-bit wire domain (round half away
/// from zero, saturating), and decode/encode is the identity on payloads
/// whose components are already integers in range.
#[derive(Debug, Clone, PartialEq)]
pub struct PerPathResult {
    pub reference_power_dbm: i8,
    pub steps: Vec<StepSample>,
}

/// Serialized size of a per-path result with `n` mode-2 steps.
pub fn per_path_size(n: usize) -> usize {
    1 + 3 * n + (2 * n + 7) / 8
}

fn quantize_component(value: f64) -> u16 {
    let rounded = value.round();
    let clamped = rounded.clamp(PCT_COMPONENT_MIN as f64, PCT_COMPONENT_MAX as f64) as i16;
    (clamped as u16) & 0x0FFF
}

fn sign_extend_12(raw: u16) -> i16 {
    let raw = raw & 0x0FFF;
    if raw & 0x0800 != 0 {
        (raw | 0xF000) as i16
    } else {
        raw as i16
    }
}

/// Serializes one per-path result; `n` is the configured step count.
pub fn encode_per_path(result: &PerPathResult, n: usize) -> Result<Vec<u8>, CodecError> {
    if result.steps.len() != n {
        return Err(CodecError::StepCountMismatch {
            expected: n,
            actual: result.steps.len(),
        });
    }
    let mut out = Vec::with_capacity(per_path_size(n));
    out.push(result.reference_power_dbm as u8);
    for step in &result.steps {
        let i = quantize_component(step.pct.re) as u32;
        let q = quantize_component(step.pct.im) as u32;
        let packed = i | (q << 12);
        out.extend_from_slice(&[
            (packed & 0xFF) as u8,
            ((packed >> 8) & 0xFF) as u8,
            ((packed >> 16) & 0xFF) as u8,
        ]);
    }
    let mut quality_bytes = vec![0u8; (2 * n + 7) / 8];
    for (idx, step) in result.steps.iter().enumerate() {
        quality_bytes[idx / 4] |= step.quality.to_bits() << (2 * (idx % 4));
    }
    out.extend_from_slice(&quality_bytes);
    debug_assert_eq!(out.len(), per_path_size(n));
    Ok(out)
}

/// Parses one per-path result; `n` must match the configuration under which
/// the payload was produced, otherwise the length check fails.
pub fn decode_per_path(bytes: &[u8], n: usize) -> Result<PerPathResult, CodecError> {
    let expected = per_path_size(n);
    if bytes.len() != expected {
        return Err(CodecError::LengthMismatch {
            expected,
            actual: bytes.len(),
            steps: n,
        });
    }
    let reference_power_dbm = bytes[0] as i8;
    let mut steps = Vec::with_capacity(n);
    for idx in 0..n {
        let base = 1 + 3 * idx;
        let packed = bytes[base] as u32 | (bytes[base + 1] as u32) << 8 | (bytes[base + 2] as u32) << 16;
        let i = sign_extend_12(packed as u16);
        let q = sign_extend_12((packed >> 12) as u16);
        let quality_byte = bytes[1 + 3 * n + idx / 4];
        let quality = ToneQuality::from_bits(quality_byte >> (2 * (idx % 4)));
        steps.push(StepSample {
            pct: Complex64::new(i as f64, q as f64),
            quality,
        });
    }
    Ok(PerPathResult {
        reference_power_dbm,
        steps,
    })
}

/// Reduces raw step records to one compact per-path result per antenna path.
///
/// Mode-0 records are discarded. Records sharing a (channel, path) — the
/// tone-extension case — are merged by complex-mean PCT and the worse of the
/// merged quality levels. Output steps are sorted ascending by channel, the
/// fixed serialization order, regardless of record arrival order. Every
/// configured channel must appear for every path.
pub fn preprocess(
    records: &[RawStepRecord],
    base: &ChannelList,
    antenna_paths: u8,
    reference_power_dbm: i8,
) -> Result<Vec<PerPathResult>, CodecError> {
    struct Acc {
        sum: Complex64,
        count: u32,
        quality: ToneQuality,
    }

    let channels = base.sorted();
    let mut merged: BTreeMap<(u8, u8), Acc> = BTreeMap::new();
    for record in records {
        if record.mode == StepMode::Mode0 {
            continue;
        }
        if record.antenna_path >= antenna_paths {
            return Err(CodecError::PathOutOfRange {
                path: record.antenna_path,
                configured: antenna_paths,
            });
        }
        if !channels.contains(&record.channel) {
            return Err(CodecError::UnknownChannel(record.channel));
        }
        merged
            .entry((record.antenna_path, record.channel))
            .and_modify(|acc| {
                acc.sum += record.pct;
                acc.count += 1;
                acc.quality = acc.quality.worse(record.quality);
            })
            .or_insert(Acc {
                sum: record.pct,
                count: 1,
                quality: record.quality,
            });
    }

    let mut results = Vec::with_capacity(antenna_paths as usize);
    for path in 0..antenna_paths {
        let missing: Vec<u8> = channels
            .iter()
            .copied()
            .filter(|&ch| !merged.contains_key(&(path, ch)))
            .collect();
        if !missing.is_empty() {
            return Err(CodecError::IncompleteProcedure { path, missing });
        }
        let steps = channels
            .iter()
            .map(|&ch| {
                let acc = &merged[&(path, ch)];
                StepSample {
                    pct: acc.sum / acc.count as f64,
                    quality: acc.quality,
                }
            })
            .collect();
        results.push(PerPathResult {
            reference_power_dbm,
            steps,
        });
    }
    Ok(results)
}

/// The wire content of a configuration payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigPayload {
    pub standby: bool,
    pub spacing: ChannelSpacing,
    pub aci: u8,
    pub matrix: AssignmentMatrix,
}

/// Serialized size of a configuration payload for the given matrix shape.
pub fn config_size(device_count: usize, slot_count: usize) -> usize {
    2 + 2 * device_count * slot_count
}

/// Serializes a configuration payload.
pub fn encode_config(payload: &ConfigPayload) -> Result<Vec<u8>, CodecError> {
    let matrix = &payload.matrix;
    if matrix.slot_count() > u8::MAX as u16 {
        return Err(CodecError::MatrixTooLarge(format!(
            "{} slots exceed the one-byte field",
            matrix.slot_count()
        )));
    }
    let len = config_size(matrix.device_count() as usize, matrix.slot_count() as usize);
    if len > ADV_DATA_BUDGET {
        return Err(CodecError::PayloadTooLarge {
            len,
            budget: ADV_DATA_BUDGET,
        });
    }
    let mut out = Vec::with_capacity(len);
    let mut config_byte = 0u8;
    if payload.standby {
        config_byte |= 0b0000_0001;
    }
    if payload.spacing == ChannelSpacing::TwoMhz {
        config_byte |= 0b0000_0010;
    }
    config_byte |= (payload.aci & 0x0F) << 2;
    out.push(config_byte);
    out.push(matrix.slot_count() as u8);
    for &cell in matrix.raw_entries() {
        out.extend_from_slice(&cell.to_le_bytes());
    }
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

/// Parses a configuration payload. Matrix dimensions are recovered from the
/// slot-count byte and the payload length; structural matrix validation is
/// left to configuration assembly.
pub fn decode_config(bytes: &[u8]) -> Result<ConfigPayload, CodecError> {
    if bytes.len() < 2 {
        return Err(CodecError::MalformedConfig("shorter than the two-byte header"));
    }
    if bytes.len() > ADV_DATA_BUDGET {
        return Err(CodecError::PayloadTooLarge {
            len: bytes.len(),
            budget: ADV_DATA_BUDGET,
        });
    }
    let config_byte = bytes[0];
    if config_byte & 0b1100_0000 != 0 {
        return Err(CodecError::MalformedConfig("reserved bits set"));
    }
    let standby = config_byte & 0b0000_0001 != 0;
    let spacing = if config_byte & 0b0000_0010 != 0 {
        ChannelSpacing::TwoMhz
    } else {
        ChannelSpacing::OneMhz
    };
    let aci = (config_byte >> 2) & 0x0F;
    let slot_count = bytes[1] as u16;
    let body = &bytes[2..];
    if slot_count == 0 {
        if !body.is_empty() {
            return Err(CodecError::MalformedConfig("matrix cells present with zero slots"));
        }
        let matrix = AssignmentMatrix::empty(0, 0).expect("empty matrix is valid");
        return Ok(ConfigPayload {
            standby,
            spacing,
            aci,
            matrix,
        });
    }
    if body.len() % 2 != 0 {
        return Err(CodecError::MalformedConfig("odd matrix byte count"));
    }
    let cells = body.len() / 2;
    if cells % slot_count as usize != 0 {
        return Err(CodecError::MalformedConfig("matrix cells not divisible by slot count"));
    }
    let device_count = cells / slot_count as usize;
    let entries: Vec<u16> = body
        .chunks_exact(2)
        .map(|pair| u16::from_le_bytes([pair[0], pair[1]]))
        .collect();
    let matrix = AssignmentMatrix::from_raw(device_count as u16, slot_count, entries)
        .map_err(|_| CodecError::MalformedConfig("matrix dimensions invalid"))?;
    Ok(ConfigPayload {
        standby,
        spacing,
        aci,
        matrix,
    })
}

/// Compact-vs-standard payload size comparison for `n` mode-2 steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeComparison {
    /// Connected-baseline Ranging Data Body bytes; `None` when no measured
    /// reference exists for this configuration.
    pub standard_bytes: Option<usize>,
    pub compact_bytes: usize,
    /// `1 - compact / standard` when a reference exists.
    pub reduction: Option<f64>,
}

/// Compares the compact per-path serialization against the connected
/// baseline. Reference sizes are measured values for 72 and 37 mode-2 steps
/// with 3 mode-0 steps; other shapes report the compact size only.
pub fn size_comparison(n: usize, mode0_steps: usize) -> SizeComparison {
    let compact_bytes = per_path_size(n);
    let standard_bytes = match (n, mode0_steps) {
        (72, 3) => Some(STANDARD_BODY_BYTES_72),
        (37, 3) => Some(STANDARD_BODY_BYTES_37),
        _ => None,
    };
    let reduction = standard_bytes.map(|std| 1.0 - compact_bytes as f64 / std as f64);
    SizeComparison {
        standard_bytes,
        compact_bytes,
        reduction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result_with_steps(n: usize, value: impl Fn(usize) -> (f64, f64, ToneQuality)) -> PerPathResult {
        PerPathResult {
            reference_power_dbm: -45,
            steps: (0..n)
                .map(|i| {
                    let (re, im, quality) = value(i);
                    StepSample {
                        pct: Complex64::new(re, im),
                        quality,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn per_path_sizes_match_published_figures() {
        assert_eq!(per_path_size(72), 235);
        assert_eq!(per_path_size(37), 122);
        // Concatenated k = 2 payload at 2 MHz spacing.
        assert_eq!(2 * per_path_size(37), 244);
    }

    #[test]
    fn size_formula_holds_for_all_plausible_step_counts() {
        for n in 1..=80 {
            let expected = 1 + 3 * n + (n + 3) / 4; // ceil(2n/8) = ceil(n/4)
            assert_eq!(per_path_size(n), expected, "n = {n}");
        }
    }

    #[test]
    fn size_comparison_matches_published_reductions() {
        let cmp72 = size_comparison(72, 3);
        assert_eq!(cmp72.standard_bytes, Some(746));
        assert_eq!(cmp72.compact_bytes, 235);
        let r72 = cmp72.reduction.unwrap();
        assert!((0.68..=0.70).contains(&r72), "72-channel reduction {r72}");

        let cmp37 = size_comparison(37, 3);
        assert_eq!(cmp37.standard_bytes, Some(395));
        assert_eq!(cmp37.compact_bytes, 122);
        let r37 = cmp37.reduction.unwrap();
        assert!((0.68..=0.70).contains(&r37), "37-channel reduction {r37}");

        // Unsupported shape still yields the compact size.
        let other = size_comparison(50, 3);
        assert_eq!(other.standard_bytes, None);
        assert_eq!(other.compact_bytes, per_path_size(50));
        assert_eq!(other.reduction, None);
    }

    #[test]
    fn encode_zero_payload_is_deterministic() {
        let zeros = result_with_steps(37, |_| (0.0, 0.0, ToneQuality::Unavailable));
        let bytes = encode_per_path(&zeros, 37).unwrap();
        assert_eq!(bytes.len(), 122);
        assert_eq!(bytes[0], (-45i8) as u8);
        assert!(bytes[1..112].iter().all(|&b| b == 0));
        // 2-bit unavailable = 0b11 in all four lanes.
        assert!(bytes[112..121].iter().all(|&b| b == 0xFF));
        // Final quality byte holds 37 mod 4 = 1 step, zero-padded.
        assert_eq!(bytes[121], 0b0000_0011);
    }

    #[test]
    fn pct_packing_is_12_bit_twos_complement_little_endian() {
        let one_step = PerPathResult {
            reference_power_dbm: 0,
            steps: vec![StepSample {
                pct: Complex64::new(-2.0, 5.0),
                quality: ToneQuality::High,
            }],
        };
        let bytes = encode_per_path(&one_step, 1).unwrap();
        // I = -2 -> 0xFFE, Q = 5 -> 0x005; 24-bit LE of 0x005FFE.
        assert_eq!(&bytes[1..4], &[0xFE, 0x5F, 0x00]);
        let decoded = decode_per_path(&bytes, 1).unwrap();
        assert_eq!(decoded.steps[0].pct, Complex64::new(-2.0, 5.0));
    }

    #[test]
    fn encode_quantizes_and_saturates() {
        let result = PerPathResult {
            reference_power_dbm: 3,
            steps: vec![
                StepSample { pct: Complex64::new(0.5, -0.5), quality: ToneQuality::High },
                StepSample { pct: Complex64::new(9999.0, -9999.0), quality: ToneQuality::Low },
            ],
        };
        let decoded = decode_per_path(&encode_per_path(&result, 2).unwrap(), 2).unwrap();
        assert_eq!(decoded.steps[0].pct, Complex64::new(1.0, -1.0));
        assert_eq!(decoded.steps[1].pct, Complex64::new(2047.0, -2048.0));
    }

    #[test]
    fn decode_rejects_wrong_lengths() {
        let payload = encode_per_path(
            &result_with_steps(37, |i| (i as f64, -(i as f64), ToneQuality::Medium)),
            37,
        )
        .unwrap();
        // Truncation.
        assert!(matches!(
            decode_per_path(&payload[..payload.len() - 1], 37),
            Err(CodecError::LengthMismatch { expected: 122, .. })
        ));
        // A 72-step buffer parsed in a 37-step context.
        let long = encode_per_path(
            &result_with_steps(72, |_| (1.0, 1.0, ToneQuality::High)),
            72,
        )
        .unwrap();
        assert!(matches!(
            decode_per_path(&long, 37),
            Err(CodecError::LengthMismatch { expected: 122, actual: 235, .. })
        ));
    }

    #[test]
    fn encode_rejects_step_count_mismatch() {
        let result = result_with_steps(36, |_| (0.0, 0.0, ToneQuality::High));
        assert!(matches!(
            encode_per_path(&result, 37),
            Err(CodecError::StepCountMismatch { expected: 37, actual: 36 })
        ));
    }

    fn mode2(channel: u8, path: u8, re: f64, im: f64) -> RawStepRecord {
        RawStepRecord {
            mode: StepMode::Mode2,
            channel,
            antenna_path: path,
            pct: Complex64::new(re, im),
            quality: ToneQuality::High,
            tone_extension: false,
        }
    }

    #[test]
    fn preprocess_discards_mode0_and_sorts() {
        let base = ChannelList::two_mhz_even();
        let mut records: Vec<RawStepRecord> = base
            .channels()
            .iter()
            .rev() // arrival in descending channel order
            .map(|&ch| mode2(ch, 0, ch as f64, 0.0))
            .collect();
        for ch in [2u8, 4, 6] {
            records.push(RawStepRecord {
                mode: StepMode::Mode0,
                channel: ch,
                antenna_path: 0,
                pct: Complex64::new(0.0, 0.0),
                quality: ToneQuality::Unavailable,
                tone_extension: false,
            });
        }
        let results = preprocess(&records, &base, 1, -40).unwrap();
        assert_eq!(results.len(), 1);
        let result = &results[0];
        assert_eq!(result.steps.len(), 37);
        let sorted = base.sorted();
        for (idx, step) in result.steps.iter().enumerate() {
            assert_eq!(step.pct.re, sorted[idx] as f64, "step {idx} out of order");
        }
    }

    #[test]
    fn preprocess_averages_tone_extension_samples() {
        let base = ChannelList::new(vec![2, 4]).unwrap();
        let records = vec![
            mode2(2, 0, 1.0, 0.0),
            RawStepRecord {
                tone_extension: true,
                quality: ToneQuality::Low,
                ..mode2(2, 0, 0.0, 1.0)
            },
            mode2(4, 0, 2.0, 2.0),
        ];
        let results = preprocess(&records, &base, 1, 0).unwrap();
        let steps = &results[0].steps;
        assert_eq!(steps[0].pct, Complex64::new(0.5, 0.5));
        // Merged quality takes the worse level.
        assert_eq!(steps[0].quality, ToneQuality::Low);
        assert_eq!(steps[1].pct, Complex64::new(2.0, 2.0));
    }

    #[test]
    fn preprocess_reports_missing_channels() {
        let base = ChannelList::new(vec![2, 4, 6]).unwrap();
        let records = vec![mode2(2, 0, 1.0, 0.0)];
        let err = preprocess(&records, &base, 1, 0).unwrap_err();
        assert_eq!(err, CodecError::IncompleteProcedure { path: 0, missing: vec![4, 6] });
    }

    #[test]
    fn preprocess_rejects_unknown_channel_and_path() {
        let base = ChannelList::new(vec![2, 4]).unwrap();
        assert_eq!(
            preprocess(&[mode2(6, 0, 0.0, 0.0)], &base, 1, 0).unwrap_err(),
            CodecError::UnknownChannel(6)
        );
        assert_eq!(
            preprocess(&[mode2(2, 1, 0.0, 0.0)], &base, 1, 0).unwrap_err(),
            CodecError::PathOutOfRange { path: 1, configured: 1 }
        );
    }

    #[test]
    fn config_payload_sizes() {
        // 8 devices x 4 slots: 1 + 1 + 64 bytes.
        assert_eq!(config_size(8, 4), 66);
        let mut matrix = AssignmentMatrix::empty(8, 4).unwrap();
        for slot in 0..4 {
            for pair in 0..4u16 {
                matrix.pair(2 * pair, 2 * pair + 1, slot).unwrap();
            }
        }
        let payload = ConfigPayload {
            standby: false,
            spacing: ChannelSpacing::TwoMhz,
            aci: 0,
            matrix,
        };
        assert_eq!(encode_config(&payload).unwrap().len(), 66);
    }

    #[test]
    fn standby_config_round_trips_as_two_bytes() {
        let payload = ConfigPayload {
            standby: true,
            spacing: ChannelSpacing::OneMhz,
            aci: 7,
            matrix: AssignmentMatrix::empty(0, 0).unwrap(),
        };
        let bytes = encode_config(&payload).unwrap();
        assert_eq!(bytes, vec![0b0001_1101, 0]);
        assert_eq!(decode_config(&bytes).unwrap(), payload);
    }

    #[test]
    fn config_rejects_oversized_matrix() {
        let matrix = AssignmentMatrix::empty(16, 16).unwrap(); // 2 + 512 bytes
        let payload = ConfigPayload {
            standby: false,
            spacing: ChannelSpacing::OneMhz,
            aci: 0,
            matrix,
        };
        assert!(matches!(
            encode_config(&payload),
            Err(CodecError::PayloadTooLarge { len: 514, .. })
        ));
    }

    #[test]
    fn config_decode_rejects_malformed_buffers() {
        assert!(decode_config(&[0x00]).is_err());
        assert!(decode_config(&[0x40, 0]).is_err()); // reserved bit
        assert!(decode_config(&[0x00, 2, 0xFF]).is_err()); // odd cell bytes
        assert!(decode_config(&[0x00, 3, 0xFF, 0xFF, 0xFF, 0xFF]).is_err()); // 2 cells, 3 slots
        assert!(decode_config(&[0x01, 0, 0xFF, 0xFF]).is_err()); // standby with cells
    }

    proptest! {
        #[test]
        fn per_path_round_trip_identity(
            n in 1usize..=80,
            reference in any::<i8>(),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let result = PerPathResult {
                reference_power_dbm: reference,
                steps: (0..n)
                    .map(|_| StepSample {
                        pct: Complex64::new(
                            rng.gen_range(PCT_COMPONENT_MIN..=PCT_COMPONENT_MAX) as f64,
                            rng.gen_range(PCT_COMPONENT_MIN..=PCT_COMPONENT_MAX) as f64,
                        ),
                        quality: ToneQuality::from_bits(rng.gen_range(0..4)),
                    })
                    .collect(),
            };
            let bytes = encode_per_path(&result, n).unwrap();
            prop_assert_eq!(bytes.len(), per_path_size(n));
            let decoded = decode_per_path(&bytes, n).unwrap();
            prop_assert_eq!(decoded, result);
        }

        #[test]
        fn config_round_trip_identity(
            device_pairs in 0usize..=5,
            slot_count in 1u16..=8,
            standby in any::<bool>(),
            aci in 0u8..=15,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (matrix, standby) = if standby {
                (AssignmentMatrix::empty(0, 0).unwrap(), true)
            } else {
                let device_count = (device_pairs * 2) as u16;
                let mut m = AssignmentMatrix::empty(device_count, slot_count).unwrap();
                for slot in 0..slot_count {
                    for pair in 0..device_pairs as u16 {
                        if rng.gen_bool(0.7) {
                            m.pair(2 * pair, 2 * pair + 1, slot).unwrap();
                        }
                    }
                }
                (m, false)
            };
            let payload = ConfigPayload {
                standby,
                spacing: if rng.gen_bool(0.5) { ChannelSpacing::OneMhz } else { ChannelSpacing::TwoMhz },
                aci,
                matrix,
            };
            let bytes = encode_config(&payload).unwrap();
            prop_assert_eq!(decode_config(&bytes).unwrap(), payload);
        }

        #[test]
        fn preprocess_is_permutation_invariant(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let base = ChannelList::two_mhz_even();
            let mut records: Vec<RawStepRecord> = Vec::new();
            for &ch in base.channels() {
                for path in 0..2u8 {
                    records.push(RawStepRecord {
                        mode: StepMode::Mode2,
                        channel: ch,
                        antenna_path: path,
                        pct: Complex64::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)),
                        quality: ToneQuality::from_bits(rng.gen_range(0..4)),
                        tone_extension: false,
                    });
                }
            }
            let sorted = preprocess(&records, &base, 2, -50).unwrap();
            records.shuffle(&mut rng);
            let shuffled = preprocess(&records, &base, 2, -50).unwrap();
            prop_assert_eq!(sorted, shuffled);
        }

        #[test]
        fn quality_packing_is_lossless_in_every_lane(n in 1usize..=12, lane_quality in 0u8..4) {
            for position in 0..n {
                let result = PerPathResult {
                    reference_power_dbm: 0,
                    steps: (0..n)
                        .map(|i| StepSample {
                            pct: Complex64::new(0.0, 0.0),
                            quality: if i == position {
                                ToneQuality::from_bits(lane_quality)
                            } else {
                                ToneQuality::High
                            },
                        })
                        .collect(),
                };
                let decoded = decode_per_path(&encode_per_path(&result, n).unwrap(), n).unwrap();
                prop_assert_eq!(decoded.steps[position].quality, ToneQuality::from_bits(lane_quality));
            }
        }
    }
}
