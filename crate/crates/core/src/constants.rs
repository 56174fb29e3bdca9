//! Measured hardware constants, loaded from a TOML file.
//!
//! Charge and timing models are parameterized by prototype measurements, not
//! by hard-coded numbers: a constants file carries one charge ledger and one
//! timing profile per channel configuration, so alternate hardware plugs in
//! by swapping the file. The repository ships `fixtures/nrf54l15.toml` with
//! the values measured on the nRF54L15 prototype.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::capacity::TimingParams;
use crate::coordination::ChannelSpacing;
use crate::energy::{ChargeLedger, ConnInterval};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("constants file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("constants file has no `{section}` entry for profile `{profile}`")]
    MissingProfile {
        section: &'static str,
        profile: &'static str,
    },
    #[error("constants file has no `{key}` value for connection interval {ci}")]
    MissingInterval { key: &'static str, ci: &'static str },
}

/// Channel-count profile the prototype was measured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum ChannelProfile {
    /// 72 channels, 1 MHz spacing.
    Ch72,
    /// 37 channels, 2 MHz spacing.
    Ch37,
}

impl ChannelProfile {
    pub fn key(self) -> &'static str {
        match self {
            Self::Ch72 => "ch72",
            Self::Ch37 => "ch37",
        }
    }

    pub fn channel_count(self) -> u32 {
        match self {
            Self::Ch72 => 72,
            Self::Ch37 => 37,
        }
    }

    pub fn spacing(self) -> ChannelSpacing {
        match self {
            Self::Ch72 => ChannelSpacing::OneMhz,
            Self::Ch37 => ChannelSpacing::TwoMhz,
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "ch72" | "72" => Some(Self::Ch72),
            "ch37" | "37" => Some(Self::Ch37),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct EnergyShared {
    q_sync_uc: f64,
    q_cfg_uc: f64,
    q_sleep_uc: f64,
    i_sleep_ua: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct EnergyProfile {
    q_cs_uc: f64,
    q_data_std_uc: f64,
    q_data_prop_uc: f64,
    q_conn_uc: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct InitOverhead {
    q_init_uc: BTreeMap<String, f64>,
    time_to_first_cs_s: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct EnergySection {
    shared: EnergyShared,
    init: InitOverhead,
    profile: BTreeMap<String, EnergyProfile>,
}

#[derive(Debug, Clone, Deserialize)]
struct TimingShared {
    t_rs_ms: f64,
    n_rs: u16,
    n_sub: u16,
}

#[derive(Debug, Clone, Deserialize)]
struct TimingProfile {
    t_rx_ms: f64,
    t_cs_ms: f64,
    t_dp_ms: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct TimingSection {
    pawr: TimingShared,
    profile: BTreeMap<String, TimingProfile>,
}

/// Parsed constants file.
#[derive(Debug, Clone, Deserialize)]
pub struct HardwareConstants {
    energy: EnergySection,
    timing: TimingSection,
}

impl HardwareConstants {
    pub fn from_toml_str(text: &str) -> Result<Self, ConstantsError> {
        Ok(toml::from_str(text)?)
    }

    /// Charge ledger for one channel profile and connection interval.
    pub fn charge_ledger<T: Real>(
        &self,
        profile: ChannelProfile,
        ci: ConnInterval,
    ) -> Result<ChargeLedger<T>, ConstantsError> {
        let section = self.energy.profile.get(profile.key()).ok_or(ConstantsError::MissingProfile {
            section: "energy.profile",
            profile: profile.key(),
        })?;
        let conn = *section.q_conn_uc.get(ci.key()).ok_or(ConstantsError::MissingInterval {
            key: "q_conn_uc",
            ci: ci.key(),
        })?;
        let init = *self.energy.init.q_init_uc.get(ci.key()).ok_or(ConstantsError::MissingInterval {
            key: "q_init_uc",
            ci: ci.key(),
        })?;
        let init_time =
            *self.energy.init.time_to_first_cs_s.get(ci.key()).ok_or(ConstantsError::MissingInterval {
                key: "time_to_first_cs_s",
                ci: ci.key(),
            })?;
        let shared = &self.energy.shared;
        Ok(ChargeLedger {
            cs_uc: T::from_f64_lossy(section.q_cs_uc),
            data_std_uc: T::from_f64_lossy(section.q_data_std_uc),
            data_prop_uc: T::from_f64_lossy(section.q_data_prop_uc),
            conn_uc: T::from_f64_lossy(conn),
            init_uc: T::from_f64_lossy(init),
            init_time_s: T::from_f64_lossy(init_time),
            sync_uc: T::from_f64_lossy(shared.q_sync_uc),
            cfg_uc: T::from_f64_lossy(shared.q_cfg_uc),
            sleep_uc: T::from_f64_lossy(shared.q_sleep_uc),
            sleep_current_ua: T::from_f64_lossy(shared.i_sleep_ua),
            ci,
            profile,
        })
    }

    /// Subevent timing parameters for one channel profile.
    pub fn timing_params<T: Real>(
        &self,
        profile: ChannelProfile,
        procedures_per_cycle: u32,
    ) -> Result<TimingParams<T>, ConstantsError> {
        let section = self.timing.profile.get(profile.key()).ok_or(ConstantsError::MissingProfile {
            section: "timing.profile",
            profile: profile.key(),
        })?;
        let pawr = &self.timing.pawr;
        Ok(TimingParams {
            rx_ms: T::from_f64_lossy(section.t_rx_ms),
            cs_ms: T::from_f64_lossy(section.t_cs_ms),
            processing_ms: T::from_f64_lossy(section.t_dp_ms),
            slot_spacing_ms: T::from_f64_lossy(pawr.t_rs_ms),
            response_slots: pawr.n_rs,
            subevents: pawr.n_sub,
            procedures_per_cycle,
            profile,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = include_str!("../../../fixtures/nrf54l15.toml");

    #[test]
    fn shipped_fixture_parses_and_covers_all_profiles() {
        let constants = HardwareConstants::from_toml_str(FIXTURE).unwrap();
        for profile in [ChannelProfile::Ch72, ChannelProfile::Ch37] {
            for ci in ConnInterval::ALL {
                let ledger = constants.charge_ledger::<f64>(profile, ci).unwrap();
                assert!(ledger.cfg_uc >= ledger.sync_uc);
            }
            let timing = constants.timing_params::<f64>(profile, 4).unwrap();
            assert!(timing.cs_ms > 0.0);
        }
    }

    #[test]
    fn missing_profile_is_reported() {
        let text = r#"
            [energy.shared]
            q_sync_uc = 1.0
            q_cfg_uc = 3.0
            q_sleep_uc = 3.0
            i_sleep_ua = 2.9
            [energy.init.q_init_uc]
            "166.25" = 200.0
            [energy.init.time_to_first_cs_s]
            "166.25" = 8.81
            [energy.profile.ch72]
            q_cs_uc = 54.0
            q_data_std_uc = 32.0
            q_data_prop_uc = 7.0
            [energy.profile.ch72.q_conn_uc]
            "166.25" = 17.0
            [timing.pawr]
            t_rs_ms = 1.25
            n_rs = 256
            n_sub = 128
            [timing.profile.ch72]
            t_rx_ms = 1.4
            t_cs_ms = 14.4
            t_dp_ms = 2.3
        "#;
        let constants = HardwareConstants::from_toml_str(text).unwrap();
        assert!(constants.charge_ledger::<f64>(ChannelProfile::Ch37, ConnInterval::Ms166_25).is_err());
        assert!(constants
            .charge_ledger::<f64>(ChannelProfile::Ch72, ConnInterval::Ms50)
            .is_err());
        assert!(constants.charge_ledger::<f64>(ChannelProfile::Ch72, ConnInterval::Ms166_25).is_ok());
    }
}
