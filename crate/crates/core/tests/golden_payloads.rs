//! Golden-file checks of the wire formats.
//!
//! The hex dumps under `tests/golden/` freeze the byte layouts of the two
//! payload kinds. Any codec change that shifts a single bit fails here.

use num_complex::Complex64;
use pawr_cs_core::codec::{
    decode_config, decode_per_path, encode_config, encode_per_path, ConfigPayload, PerPathResult,
    StepSample, ToneQuality,
};
use pawr_cs_core::coordination::{AssignmentMatrix, ChannelSpacing};

fn parse_hex(name: &str) -> Vec<u8> {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path}: {e}"));
    text.split_whitespace()
        .map(|tok| u8::from_str_radix(tok, 16).unwrap_or_else(|e| panic!("bad hex `{tok}`: {e}")))
        .collect()
}

fn evaluation_matrix() -> AssignmentMatrix {
    let mut matrix = AssignmentMatrix::empty(8, 4).unwrap();
    for slot in 0..4 {
        for pair in 0..4u16 {
            matrix.pair(2 * pair, 2 * pair + 1, slot).unwrap();
        }
    }
    matrix
}

fn patterned_result(n: usize) -> PerPathResult {
    PerPathResult {
        reference_power_dbm: -45,
        steps: (0..n)
            .map(|i| StepSample {
                pct: Complex64::new(
                    ((i as i32 * 37 - 600) % 2048) as f64,
                    ((900 - i as i32 * 53) % 2048) as f64,
                ),
                quality: ToneQuality::from_bits((i % 4) as u8),
            })
            .collect(),
    }
}

#[test]
fn config_payload_matches_golden_bytes() {
    let payload = ConfigPayload {
        standby: false,
        spacing: ChannelSpacing::TwoMhz,
        aci: 0,
        matrix: evaluation_matrix(),
    };
    let golden = parse_hex("config_8dev_4slot.hex");
    assert_eq!(encode_config(&payload).unwrap(), golden);
    assert_eq!(decode_config(&golden).unwrap(), payload);
}

#[test]
fn per_path_37_matches_golden_bytes() {
    let golden = parse_hex("per_path_37.hex");
    assert_eq!(golden.len(), 122);
    let result = patterned_result(37);
    assert_eq!(encode_per_path(&result, 37).unwrap(), golden);
    assert_eq!(decode_per_path(&golden, 37).unwrap(), result);
}

#[test]
fn per_path_72_matches_golden_bytes() {
    let golden = parse_hex("per_path_72.hex");
    assert_eq!(golden.len(), 235);
    let result = patterned_result(72);
    assert_eq!(encode_per_path(&result, 72).unwrap(), golden);
    assert_eq!(decode_per_path(&golden, 72).unwrap(), result);
}
