//! Acceptance suite: the release criteria, one test per criterion, each
//! printing a PASS line with the checked values (run with `--nocapture` to
//! see them).

use pawr_cs_core::capacity::{self, BindingLimit};
use pawr_cs_core::codec::size_comparison;
use pawr_cs_core::collision::{self, CollisionScenario};
use pawr_cs_core::constants::{ChannelProfile, HardwareConstants};
use pawr_cs_core::coordination::{
    derive_drbg_nonce, derive_response_slot, validate_allocation, AssignmentMatrix, ChannelList,
    SlotAllocationParams,
};
use pawr_cs_core::energy::{self, ConnInterval};
use pawr_cs_core::pbr::{self, CalibrationOffset, SyntheticChannel, GRID_SPACING_HZ};
use pawr_cs_core::sim::{self, scenario::Scenario};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FFT: usize = 4096;

fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path}: {e}"))
}

fn constants() -> HardwareConstants {
    HardwareConstants::from_toml_str(&fixture("nrf54l15.toml")).unwrap()
}

#[test]
fn criterion_1_payload_sizes() {
    let c72 = size_comparison(72, 3);
    assert_eq!(c72.compact_bytes, 235);
    assert_eq!(c72.standard_bytes, Some(746));
    let r72 = c72.reduction.unwrap();
    assert!((0.68..=0.70).contains(&r72), "reduction {r72}");

    let c37 = size_comparison(37, 3);
    assert_eq!(c37.compact_bytes, 122);
    assert_eq!(c37.standard_bytes, Some(395));
    let r37 = c37.reduction.unwrap();
    assert!((0.68..=0.70).contains(&r37), "reduction {r37}");

    println!(
        "PASS criterion 1: per-path 235/122 bytes vs 746/395, reductions {:.1}% / {:.1}%",
        r72 * 100.0,
        r37 * 100.0
    );
}

#[test]
fn criterion_2_coordination_exhaustives() {
    // Nonce injectivity: 256 devices x 4 slots.
    let mut nonces = std::collections::HashSet::new();
    for initiator in 0..256u16 {
        for slot in 0..4u16 {
            assert!(
                nonces.insert(derive_drbg_nonce(12_345, initiator, slot, 4).unwrap()),
                "duplicate nonce at ({initiator}, {slot})"
            );
        }
    }

    // Response-slot injectivity and non-consecutiveness over a full
    // 256-slot window, across every block size that fits.
    for payloads in [1u16, 2, 4, 8] {
        let block = 2 * payloads;
        let groups = 256 / block;
        let active = groups * 2;
        let params = SlotAllocationParams {
            response_slots: 256,
            block_size: block,
            antenna_paths: 1,
            results_per_payload: 1,
        };
        validate_allocation(&params, active, payloads).unwrap();
        let mut seen = std::collections::HashSet::new();
        for position in 0..active {
            let mut slots = Vec::new();
            for payload in 0..payloads {
                let slot = derive_response_slot(position, payload, block);
                assert!(slot < 256);
                assert!(seen.insert(slot), "duplicate slot {slot} (block {block})");
                slots.push(slot);
            }
            for pair in slots.windows(2) {
                assert_eq!(pair[1] - pair[0], 2, "stride must be exactly two");
            }
        }
        assert_eq!(seen.len(), 256, "block {block} must tile the window");
    }

    // Same-step channel disjointness for every pair count up to the list
    // length, across sampled event counters.
    let counters = [0u16, 1, 7, 255, 4_096, 32_768, 65_535];
    for base in [ChannelList::two_mhz_even(), ChannelList::usable()] {
        let n = base.len() as u16;
        for pair_count in 1..=n {
            let mut matrix = AssignmentMatrix::empty(2 * pair_count, 1).unwrap();
            for pair in 0..pair_count {
                matrix.pair(2 * pair, 2 * pair + 1, 0).unwrap();
            }
            let collisions =
                collision::count_deterministic_collisions(&matrix, &base, &counters).unwrap();
            assert_eq!(collisions, 0, "N={n} P={pair_count}");
        }
    }

    println!(
        "PASS criterion 2: 1024 distinct nonces; slot map injective and non-consecutive over 256 slots; zero same-step collisions for all P <= N at N in {{37, 72}} across {} counters",
        counters.len()
    );
}

#[test]
fn criterion_3_collision_model() {
    let expected: f64 = collision::expected_overlaps(72, 30);
    assert!((expected - 24.0).abs() < 0.05, "E[X] = {expected}");

    // Monte Carlo vs closed form on the (N, P) grid.
    for channels in [37u32, 72] {
        for pairs in [2u32, 10, 30, 72] {
            let scenario = CollisionScenario {
                channels,
                pairs,
                trials: 100_000,
                seed: 2_024,
            };
            let estimate = collision::simulate_random_hopping::<f64>(&scenario);
            let analytic: f64 = collision::expected_overlaps(channels, pairs);
            let tolerance = 3.0 * estimate.stderr;
            assert!(
                (estimate.mean - analytic).abs() < tolerance,
                "N={channels} P={pairs}: |{} - {analytic}| >= {tolerance}",
                estimate.mean
            );
        }
    }

    // Deterministic schedule: exactly zero collisions on a saturated slot.
    let mut matrix = AssignmentMatrix::empty(72, 4).unwrap();
    for slot in 0..4 {
        for pair in 0..36u16 {
            matrix.pair(2 * pair, 2 * pair + 1, slot).unwrap();
        }
    }
    let collisions = collision::count_deterministic_collisions(
        &matrix,
        &ChannelList::usable(),
        &[0, 9, 99, 65_535],
    )
    .unwrap();
    assert_eq!(collisions, 0);

    println!(
        "PASS criterion 3: E[X]={expected:.3} at (72, 30); Monte Carlo within 3 stderr on the grid; deterministic schedule counted 0 collisions"
    );
}

#[test]
fn criterion_4_energy_reproduction() {
    let constants = constants();
    let round = |v: f64| v.round() as i64;
    let percent = |standard: f64, proposed: f64| ((1.0 - proposed / standard) * 100.0).round() as i64;

    // Steady state, both profiles at CI 166.25 ms.
    let l72 = constants.charge_ledger::<f64>(ChannelProfile::Ch72, ConnInterval::Ms166_25).unwrap();
    let (s72, p72) = (energy::steady_state_standard(&l72), energy::steady_state_proposed(&l72));
    assert_eq!((round(s72), round(p72)), (103, 62));
    assert_eq!(percent(s72, p72), 40);

    let l37 = constants.charge_ledger::<f64>(ChannelProfile::Ch37, ConnInterval::Ms166_25).unwrap();
    let (s37, p37) = (energy::steady_state_standard(&l37), energy::steady_state_proposed(&l37));
    assert_eq!((round(s37), round(p37)), (67, 35));
    assert_eq!(percent(s37, p37), 48);

    // Multi-peer amortization.
    let (multi_std, multi_prop) = energy::multi_peer_steady(&l37, 4);
    assert_eq!((round(multi_std), round(multi_prop)), (268, 137));
    assert_eq!(percent(multi_std, multi_prop), 49);

    // 24 h horizon cells, exact to the mC after rounding.
    let day = |switches| energy::Scenario::<f64> {
        measurements_per_cycle: 1,
        update_interval_s: 1.0,
        horizon_s: 86_400.0,
        partner_switches: switches,
    };
    let cell = |ledger, scenario: &energy::Scenario<f64>| {
        let std = energy::total_standard(ledger, scenario).unwrap() / 1000.0;
        let prop = energy::total_proposed(ledger, scenario).unwrap() / 1000.0;
        (round(std), round(prop))
    };
    assert_eq!(cell(&l37, &day(0)), (6_048, 3_283));
    assert_eq!(cell(&l37, &day(8_640)), (7_776, 3_300));
    let l37_short = constants.charge_ledger::<f64>(ChannelProfile::Ch37, ConnInterval::Ms18_75).unwrap();
    assert_eq!(cell(&l37_short, &day(86_400)), (28_598, 3_456));

    // Per-switch overhead ratio for all three connection intervals.
    for ci in ConnInterval::ALL {
        let ledger = constants.charge_ledger::<f64>(ChannelProfile::Ch37, ci).unwrap();
        let ratio = ledger.switch_overhead_ratio();
        assert!(ratio <= 0.02, "CI {}: {ratio}", ci.key());
    }

    // Lifetime, within 1% of the closed form.
    let active = l37.cfg_uc + 4.0 * (l37.cs_0dbm_uc() + l37.data_prop_uc);
    let closed_form = |t_upd: f64| {
        let current = active / t_upd + l37.sleep_current_ua;
        1000.0 * 240.0 / (24.0 * current)
    };
    let days_1s = energy::lifetime_days(energy::avg_current(active, 1.0, l37.sleep_current_ua), 240.0);
    assert!((days_1s - closed_form(1.0)).abs() / closed_form(1.0) < 0.01);
    assert!((days_1s - 122.0).abs() < 2.0, "1 s lifetime {days_1s} days");
    let days_30s = energy::lifetime_days(energy::avg_current(active, 30.0, l37.sleep_current_ua), 240.0);
    assert!((days_30s - closed_form(30.0)).abs() / closed_form(30.0) < 0.01);
    assert!((days_30s / 365.25 - 5.0).abs() < 0.1, "30 s lifetime {days_30s} days");

    println!(
        "PASS criterion 4: steady state 103->62 (40%) / 67->35 (48%); multi-peer 268 vs 137 (49%); horizon cells 6048/3283, 7776/3300, 28598/3456 mC; switch overhead <= 2%; lifetimes {days_1s:.0} days and {:.2} years",
        days_30s / 365.25
    );
}

#[test]
fn criterion_5_capacity_reproduction() {
    let constants = constants();
    let close = |a: f64, b: f64| (a - b).abs() <= 0.05;

    let t72 = constants.timing_params::<f64>(ChannelProfile::Ch72, 4).unwrap();
    let timing72 = capacity::subevent_timing(&t72);
    assert!(close(timing72.pre_ms, 61.3) && close(timing72.tx_window_ms, 320.0) && close(timing72.total_ms, 381.3));

    let t37 = constants.timing_params::<f64>(ChannelProfile::Ch37, 4).unwrap();
    let timing37 = capacity::subevent_timing(&t37);
    assert!(close(timing37.pre_ms, 41.6) && close(timing37.tx_window_ms, 320.0) && close(timing37.total_ms, 361.6));

    let report = capacity::capacity(&t37, 4, 1, 2, true);
    assert_eq!(report.devices_per_subevent, 128);
    assert_eq!(report.total_devices, 16_384);
    assert!(close(report.min_update_interval_s, 46.3));
    assert_eq!(report.binding_limit, BindingLimit::ResponseSlots);

    let report72 = capacity::capacity(&t72, 4, 1, 1, false);
    assert_eq!(report72.devices_per_subevent, 64);
    assert_eq!(report72.total_devices, 8_192);
    assert!(close(report72.min_update_interval_s, 48.8));

    let light = constants.timing_params::<f64>(ChannelProfile::Ch37, 1).unwrap();
    let light_report = capacity::capacity(&light, 2, 1, 2, true);
    assert_eq!(light_report.total_devices, 32_768);

    println!(
        "PASS criterion 5: timing 61.3/320/381.3 and 41.6/320/361.6 ms; capacities 16384 / 8192 / 32768; minimum update intervals {:.1} s / {:.1} s",
        report.min_update_interval_s, report72.min_update_interval_s
    );
}

#[test]
fn criterion_6_estimator_properties() {
    let base = ChannelList::usable();
    let bin = pbr::distance_per_bin::<f64>(FFT, GRID_SPACING_HZ);

    // Noiseless recovery at 0.5 m steps.
    for step in 1..=11 {
        let distance = step as f64 * 0.5;
        let channel = SyntheticChannel::noiseless(distance, &base);
        let (init, refl) = pbr::synth_pair(&channel, &mut ChaCha8Rng::seed_from_u64(step as u64));
        let est = pbr::run_pipeline(&init, &refl, FFT, GRID_SPACING_HZ, CalibrationOffset::zero()).unwrap();
        assert!(
            (est.distance_m - distance).abs() <= bin,
            "{distance} m: estimate {}",
            est.distance_m
        );
    }

    // Exact LO-phase invariance of the peak bin.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let reference = {
        let channel = SyntheticChannel::noiseless(3.0, &base);
        let (init, refl) = pbr::synth_pair(&channel, &mut rng);
        pbr::run_pipeline(&init, &refl, FFT, GRID_SPACING_HZ, CalibrationOffset::zero()).unwrap().peak_bin
    };
    for _ in 0..100 {
        let channel = SyntheticChannel {
            initiator_lo_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            reflector_lo_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            ..SyntheticChannel::noiseless(3.0, &base)
        };
        let (init, refl) = pbr::synth_pair(&channel, &mut rng);
        let est = pbr::run_pipeline(&init, &refl, FFT, GRID_SPACING_HZ, CalibrationOffset::zero()).unwrap();
        assert_eq!(est.peak_bin, reference);
    }

    // 24-channel corruption: max error grows at least threefold over 120
    // seeded trials against the clean baseline at the same noise level.
    let mut max_clean = 0.0f64;
    let mut max_corrupt = 0.0f64;
    for trial in 0..120u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + trial);
        let channel = SyntheticChannel {
            noise_std: 0.05,
            initiator_lo_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            reflector_lo_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            ..SyntheticChannel::noiseless(3.0, &base)
        };
        let (init, refl) = pbr::synth_pair(&channel, &mut rng);
        let clean = pbr::run_pipeline(&init, &refl, FFT, GRID_SPACING_HZ, CalibrationOffset::zero()).unwrap();
        max_clean = max_clean.max((clean.distance_m - 3.0).abs());

        let mut combined = pbr::combine(&init, &refl).unwrap();
        pbr::corrupt_channels(&mut combined, 24, &mut rng);
        let dense = pbr::fill_gaps(&combined).unwrap();
        let corrupt = pbr::estimate_distance(&dense, FFT, GRID_SPACING_HZ, CalibrationOffset::zero()).unwrap();
        max_corrupt = max_corrupt.max((corrupt.distance_m - 3.0).abs());
    }
    assert!(
        max_corrupt >= 3.0 * max_clean,
        "max corrupt {max_corrupt} vs clean {max_clean}"
    );

    println!(
        "PASS criterion 6: 11 distances within one bin ({bin:.4} m); peak bin LO-invariant over 100 draws; corruption max error {max_corrupt:.2} m vs clean {max_clean:.3} m (>= 3x)"
    );
}

#[test]
fn criterion_7_end_to_end_simulation() {
    let scenario = Scenario::parse("field_8dev", &fixture("field_8dev.scenario")).unwrap();
    assert!(scenario.cycles >= 100);
    let report = sim::run(&scenario).unwrap();

    assert_eq!(report.summary.scans.mispaired, 0, "mis-paired data points");
    assert!(report.summary.scans.conservation_ok, "conservation scan");
    assert!(report.summary.scans.no_consecutive_ok, "consecutive-slot scan");
    assert!(report.summary.scans.unique_slots_ok, "transmission uniqueness scan");
    assert_eq!(report.summary.complete_points, report.summary.expected_points);
    assert_eq!(report.summary.config_updates, 2); // initial + mid-run switch

    // Byte-identical rerun.
    let rerun = sim::run(&scenario).unwrap();
    assert_eq!(report.to_json(), rerun.to_json());
    assert_eq!(report.to_csv(), rerun.to_csv());

    println!(
        "PASS criterion 7: {} cycles, {} complete data points, 0 mis-paired, scans ok, rerun byte-identical",
        report.summary.cycles, report.summary.complete_points
    );
}
