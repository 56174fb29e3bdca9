//! Scenario files for the update-cycle simulator.
//!
//! A scenario is plain structured text: top-level `key = value` lines, a
//! `[positions]` section with device coordinates, optional `[drops]` lines,
//! and one or more `[matrix cycle=N]` blocks holding the assignment matrix
//! that takes effect at that cycle (one row per device, one column per
//! measurement slot, entries are peer indices or `-`; the single word
//! `standby` schedules a standby configuration instead).
//!
//! ```text
//! devices = 4
//! cycles = 20
//! seed = 7
//! spacing = 2mhz
//! slots = 2
//!
//! [positions]
//! 0 = 0.0 0.0
//! 1 = 2.5 0.0
//! 2 = 0.0 3.0
//! 3 = 2.5 3.0
//!
//! [matrix cycle=0]
//! 1 1
//! 0 0
//! 3 3
//! 2 2
//! ```

use std::collections::BTreeSet;

use thiserror::Error;

use crate::coordination::{
    AssignmentMatrix, ChannelSpacing, CoordinationError, MeasurementConfig, SlotAllocationParams,
    NO_PEER,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("scenario is missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("scenario needs a `[matrix cycle=0]` block")]
    MissingInitialMatrix,
    #[error("device {0} has no position")]
    MissingPosition(u16),
    #[error("matrix block at cycle {cycle}: {source}")]
    InvalidMatrix {
        cycle: u64,
        source: CoordinationError,
    },
}

/// Matrix schedule entry: either a full pairing or a standby cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatrixSpec {
    Standby,
    Rows(Vec<Vec<Option<u16>>>),
}

/// Parsed simulation scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub devices: u16,
    pub cycles: u64,
    pub seed: u64,
    pub spacing: ChannelSpacing,
    pub slot_count: u16,
    pub antenna_paths: u8,
    pub results_per_payload: u8,
    pub response_slots: u16,
    pub block_size: u16,
    pub aci: u8,
    pub noise_std: f64,
    pub loss_prob: f64,
    pub explicit_drops: BTreeSet<(u64, u16)>,
    pub fft_size: usize,
    pub offset_m: f64,
    /// Orchestrator report-buffer budget per cycle; `None` is unlimited.
    pub max_in_flight: Option<u32>,
    /// Device coordinates in meters.
    pub positions: Vec<(f64, f64)>,
    /// Matrix blocks sorted by starting cycle; the first must start at 0.
    pub schedule: Vec<(u64, MatrixSpec)>,
}

impl Scenario {
    pub fn parse(name: &str, text: &str) -> Result<Self, ScenarioError> {
        Parser::new(name, text).finish()
    }

    /// Euclidean distance between two devices.
    pub fn distance(&self, a: u16, b: u16) -> f64 {
        let (ax, ay) = self.positions[a as usize];
        let (bx, by) = self.positions[b as usize];
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Index into `schedule` of the block governing `cycle`.
    pub fn schedule_index(&self, cycle: u64) -> usize {
        match self.schedule.binary_search_by_key(&cycle, |(start, _)| *start) {
            Ok(idx) => idx,
            Err(idx) => idx - 1,
        }
    }

    pub fn slot_params(&self) -> SlotAllocationParams {
        SlotAllocationParams {
            response_slots: self.response_slots,
            block_size: self.block_size,
            antenna_paths: self.antenna_paths,
            results_per_payload: self.results_per_payload,
        }
    }

    /// Builds the validated measurement configuration for one schedule block.
    pub fn build_config(&self, spec: &MatrixSpec) -> Result<MeasurementConfig, CoordinationError> {
        match spec {
            MatrixSpec::Standby => {
                MeasurementConfig::standby(self.spacing, self.aci, self.slot_params())
            }
            MatrixSpec::Rows(rows) => {
                let mut entries = Vec::with_capacity(rows.len() * self.slot_count as usize);
                for row in rows {
                    for cell in row {
                        entries.push(cell.unwrap_or(NO_PEER));
                    }
                }
                let matrix = AssignmentMatrix::from_raw(self.devices, self.slot_count, entries)?;
                MeasurementConfig::new(
                    self.spacing,
                    self.aci,
                    matrix,
                    self.spacing.base_channels(),
                    self.slot_params(),
                )
            }
        }
    }
}

enum Section {
    Top,
    Positions,
    Drops,
    Matrix { cycle: u64, rows: Vec<Vec<Option<u16>>>, standby: bool },
}

struct Parser<'a> {
    name: &'a str,
    lines: Vec<(usize, &'a str)>,
}

impl<'a> Parser<'a> {
    fn new(name: &'a str, text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(idx, line)| {
                let line = line.split('#').next().unwrap_or("").trim();
                (idx + 1, line)
            })
            .filter(|(_, line)| !line.is_empty())
            .collect();
        Self { name, lines }
    }

    fn finish(self) -> Result<Scenario, ScenarioError> {
        let err = |line: usize, message: String| ScenarioError::Parse { line, message };

        let mut devices: Option<u16> = None;
        let mut cycles: Option<u64> = None;
        let mut seed = 0u64;
        let mut spacing = ChannelSpacing::TwoMhz;
        let mut slot_count: Option<u16> = None;
        let mut antenna_paths = 1u8;
        let mut results_per_payload: Option<u8> = None;
        let mut response_slots = 256u16;
        let mut block_size: Option<u16> = None;
        let mut aci = 0u8;
        let mut noise_std = 0.0f64;
        let mut loss_prob = 0.0f64;
        let mut fft_size = 4096usize;
        let mut offset_m = 0.0f64;
        let mut max_in_flight: Option<u32> = None;
        let mut positions: Vec<Option<(f64, f64)>> = Vec::new();
        let mut drops = BTreeSet::new();
        let mut schedule: Vec<(u64, MatrixSpec)> = Vec::new();

        let mut section = Section::Top;

        fn close_matrix(
            schedule: &mut Vec<(u64, MatrixSpec)>,
            section: &mut Section,
        ) -> Option<(u64, MatrixSpec)> {
            if let Section::Matrix { cycle, rows, standby } = std::mem::replace(section, Section::Top) {
                let spec = if standby { MatrixSpec::Standby } else { MatrixSpec::Rows(rows) };
                schedule.push((cycle, spec));
            }
            None
        }

        for (line_no, line) in &self.lines {
            let (line_no, line) = (*line_no, *line);
            if line.starts_with('[') {
                close_matrix(&mut schedule, &mut section);
                let header = line
                    .strip_prefix('[')
                    .and_then(|rest| rest.strip_suffix(']'))
                    .ok_or_else(|| err(line_no, "unterminated section header".into()))?
                    .trim();
                section = if header == "positions" {
                    Section::Positions
                } else if header == "drops" {
                    Section::Drops
                } else if let Some(rest) = header.strip_prefix("matrix") {
                    let cycle = rest
                        .trim()
                        .strip_prefix("cycle=")
                        .and_then(|v| v.parse::<u64>().ok())
                        .ok_or_else(|| err(line_no, format!("expected `matrix cycle=N`, got `{header}`")))?;
                    Section::Matrix { cycle, rows: Vec::new(), standby: false }
                } else {
                    return Err(err(line_no, format!("unknown section `{header}`")));
                };
                continue;
            }

            match &mut section {
                Section::Top => {
                    let (key, value) = line
                        .split_once('=')
                        .map(|(k, v)| (k.trim(), v.trim()))
                        .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
                    let parse_err =
                        |line_no: usize, key: &str, value: &str| err(line_no, format!("invalid value `{value}` for `{key}`"));
                    match key {
                        "devices" => devices = Some(value.parse().map_err(|_| parse_err(line_no, key, value))?),
                        "cycles" => cycles = Some(value.parse().map_err(|_| parse_err(line_no, key, value))?),
                        "seed" => seed = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "spacing" => {
                            spacing = match value {
                                "1mhz" => ChannelSpacing::OneMhz,
                                "2mhz" => ChannelSpacing::TwoMhz,
                                _ => return Err(parse_err(line_no, key, value)),
                            }
                        }
                        "slots" => slot_count = Some(value.parse().map_err(|_| parse_err(line_no, key, value))?),
                        "antenna_paths" => antenna_paths = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "results_per_payload" => {
                            results_per_payload = Some(value.parse().map_err(|_| parse_err(line_no, key, value))?)
                        }
                        "response_slots" => response_slots = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "block_size" => block_size = Some(value.parse().map_err(|_| parse_err(line_no, key, value))?),
                        "aci" => aci = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "noise_std" => noise_std = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "loss_prob" => loss_prob = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "fft_size" => fft_size = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "offset_m" => offset_m = value.parse().map_err(|_| parse_err(line_no, key, value))?,
                        "max_in_flight" => {
                            max_in_flight = Some(value.parse().map_err(|_| parse_err(line_no, key, value))?)
                        }
                        _ => return Err(err(line_no, format!("unknown key `{key}`"))),
                    }
                }
                Section::Positions => {
                    let (idx, coords) = line
                        .split_once('=')
                        .map(|(k, v)| (k.trim(), v.trim()))
                        .ok_or_else(|| err(line_no, format!("expected `device = x y`, got `{line}`")))?;
                    let idx: usize =
                        idx.parse().map_err(|_| err(line_no, format!("invalid device index `{idx}`")))?;
                    let mut parts = coords.split_whitespace();
                    let x: f64 = parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(line_no, format!("invalid coordinates `{coords}`")))?;
                    let y: f64 = parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(line_no, format!("invalid coordinates `{coords}`")))?;
                    if positions.len() <= idx {
                        positions.resize(idx + 1, None);
                    }
                    positions[idx] = Some((x, y));
                }
                Section::Drops => {
                    let mut parts = line.split_whitespace();
                    let cycle: u64 = parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(line_no, format!("expected `cycle slot`, got `{line}`")))?;
                    let slot: u16 = parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(line_no, format!("expected `cycle slot`, got `{line}`")))?;
                    drops.insert((cycle, slot));
                }
                Section::Matrix { rows, standby, .. } => {
                    if line == "standby" {
                        *standby = true;
                        continue;
                    }
                    let row: Result<Vec<Option<u16>>, _> = line
                        .split_whitespace()
                        .map(|token| {
                            if token == "-" {
                                Ok(None)
                            } else {
                                token
                                    .parse::<u16>()
                                    .map(Some)
                                    .map_err(|_| err(line_no, format!("invalid matrix cell `{token}`")))
                            }
                        })
                        .collect();
                    rows.push(row?);
                }
            }
        }
        close_matrix(&mut schedule, &mut section);

        let devices = devices.ok_or(ScenarioError::MissingKey("devices"))?;
        let cycles = cycles.ok_or(ScenarioError::MissingKey("cycles"))?;
        let slot_count = slot_count.ok_or(ScenarioError::MissingKey("slots"))?;
        let results_per_payload = results_per_payload.unwrap_or_else(|| spacing.results_per_payload());
        let payloads = crate::coordination::response_payload_count(slot_count, antenna_paths, results_per_payload);
        let block_size = block_size.unwrap_or(2 * payloads);

        schedule.sort_by_key(|(cycle, _)| *cycle);
        if schedule.first().map(|(cycle, _)| *cycle) != Some(0) {
            return Err(ScenarioError::MissingInitialMatrix);
        }

        let positions = (0..devices)
            .map(|idx| {
                positions
                    .get(idx as usize)
                    .copied()
                    .flatten()
                    .ok_or(ScenarioError::MissingPosition(idx))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let scenario = Scenario {
            name: self.name.to_string(),
            devices,
            cycles,
            seed,
            spacing,
            slot_count,
            antenna_paths,
            results_per_payload,
            response_slots,
            block_size,
            aci,
            noise_std,
            loss_prob,
            explicit_drops: drops,
            fft_size,
            offset_m,
            max_in_flight,
            positions,
            schedule,
        };

        // Validate every block up front so `run` starts from a sound schedule.
        for (cycle, spec) in &scenario.schedule {
            scenario
                .build_config(spec)
                .map_err(|source| ScenarioError::InvalidMatrix { cycle: *cycle, source })?;
        }
        Ok(scenario)
    }
}
