//! Connectionless BLE Channel Sounding orchestration toolkit.
//!
//! Standard Channel Sounding binds every Initiator/Reflector pair to its own
//! LE ACL connection for initiation, coordination, and result transfer. This
//! crate models the alternative: CS procedures started via LE CS Test and
//! coordinated entirely over Periodic Advertising with Responses, where each
//! device derives role, DRBG nonce, channel sequence, and response slot from
//! a shared assignment matrix and its persistent device index.
//!
//! Modules:
//!
//! * [`coordination`] — deterministic pairing, nonce, channel, and slot
//!   derivations plus the shared [`coordination::MeasurementConfig`];
//! * [`codec`] — bit-exact configuration and compact per-path result
//!   payloads with the on-device preprocessing pipeline;
//! * [`pbr`] — the proof-of-concept IFFT distance estimator and its
//!   synthetic-channel oracle;
//! * [`collision`] — closed-form and Monte Carlo collision analysis of
//!   randomized hopping against the deterministic schedule;
//! * [`energy`] — charge and battery-lifetime models over measured ledgers;
//! * [`capacity`] — subevent timing and PAwR-train capacity planning;
//! * [`sim`] — the three-tier update-cycle simulator;
//! * [`constants`] — measured hardware constants from TOML fixtures.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the `f64` instantiations used by the CLI and fixtures.

pub mod capacity;
pub mod codec;
pub mod collision;
pub mod constants;
pub mod coordination;
pub mod energy;
pub mod pbr;
pub mod scalar;
pub mod sim;

pub use scalar::Real;

/// Default scalar for the analytic models and the estimator.
pub type Scalar = f64;

/// `f64` charge ledger, the instantiation fixtures deserialize into.
pub type ChargeLedger = energy::ChargeLedger<Scalar>;
/// `f64` horizon scenario for the charge models.
pub type EnergyScenario = energy::Scenario<Scalar>;
/// `f64` subevent timing parameters.
pub type TimingParams = capacity::TimingParams<Scalar>;
/// `f64` capacity report.
pub type CapacityReport = capacity::CapacityReport<Scalar>;
/// `f64` PCT vector on the CS channel grid.
pub type PctVector = pbr::PctVector<Scalar>;
/// `f64` channel impulse response estimate.
pub type CirEstimate = pbr::CirEstimate<Scalar>;
/// `f64` calibration offset, meters.
pub type CalibrationOffset = pbr::CalibrationOffset<Scalar>;
/// `f64` Monte Carlo overlap estimate.
pub type HoppingEstimate = collision::HoppingEstimate<Scalar>;
