//! Deterministic per-procedure coordination.
//!
//! Every device in a synchronized subevent group derives its pairing, role,
//! DRBG nonce, channel sequence, and response slot assignment from exactly
//! two inputs: the shared [`MeasurementConfig`] distributed over PAwR and its
//! own persistent device index. All derivations here are pure functions, so
//! any two devices holding the same configuration reconstruct identical
//! coordination state without negotiation.
//!
//! The derivations are:
//!
//! * nonce: `(event_counter + initiator_idx * slot_count + slot) mod 2^16`,
//!   injective over one cycle while `device_count * slot_count <= 2^16`;
//! * channel index at step `s` for the pair at position `p` in slot `m`:
//!   `(s + p + m + event_counter) mod N` into the base channel list, which
//!   keeps simultaneous pairs on distinct channels at every step as long as
//!   at most `N` pairs share a slot;
//! * response slot for the active device at position `a`, payload `r`:
//!   `floor(a / 2) * block_size + 2r + (a mod 2)`, which interleaves two
//!   devices per block and never assigns one device two adjacent slots.

use std::collections::BTreeSet;

use thiserror::Error;

/// Serialized no-peer sentinel inside an [`AssignmentMatrix`] cell.
///
/// The maximum index value is reserved, so device index `0xFFFF` is not
/// assignable.
pub const NO_PEER: u16 = u16::MAX;

/// Number of usable CS channels (indices 0..=78 minus the seven excluded).
pub const USABLE_CHANNEL_COUNT: usize = 72;

/// Length of the 1 MHz CS channel grid (channel indices 0..=78).
pub const CHANNEL_GRID_LEN: usize = 79;

/// Errors from configuration validation and coordination derivations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoordinationError {
    #[error("matrix claims {device_count} devices x {slot_count} slots but holds {cells} cells")]
    DimensionMismatch {
        device_count: u16,
        slot_count: u16,
        cells: usize,
    },
    #[error("device count {0} collides with the reserved no-peer value")]
    DeviceCountTooLarge(u32),
    #[error("slot count {0} does not fit the one-byte wire field")]
    SlotCountTooLarge(u16),
    #[error("device {device} slot {slot}: peer {peer} does not map back (found {reverse:?})")]
    AsymmetricEntry {
        device: u16,
        slot: u16,
        peer: u16,
        reverse: Option<u16>,
    },
    #[error("device {device} slot {slot}: device is paired with itself")]
    SelfPairing { device: u16, slot: u16 },
    #[error("device {device} slot {slot}: peer {peer} out of range for {device_count} devices")]
    PeerOutOfRange {
        device: u16,
        slot: u16,
        peer: u16,
        device_count: u16,
    },
    #[error("{device_count} devices x {slot_count} slots exceeds the 16-bit nonce space")]
    NonceSpaceExceeded { device_count: u32, slot_count: u32 },
    #[error("nonce domain violated for initiator {initiator}, slot {slot}, slot count {slot_count}")]
    NonceDomainExceeded {
        initiator: u16,
        slot: u16,
        slot_count: u16,
    },
    #[error("slot {slot}: {pairs} simultaneous pairs exceed the {channels}-channel base list")]
    TooManyPairs {
        slot: u16,
        pairs: usize,
        channels: usize,
    },
    #[error("channel {0} is outside the usable CS channel set")]
    UnusableChannel(u8),
    #[error("channel {0} appears more than once in the channel list")]
    DuplicateChannel(u8),
    #[error("channel list is empty")]
    EmptyChannelList,
    #[error("antenna path count {0} not in 1..=4")]
    InvalidAntennaPaths(u8),
    #[error("per-payload result count {0} not in {{1, 2}}")]
    InvalidResultsPerPayload(u8),
    #[error("response slot count {0} exceeds the PAwR maximum of 256")]
    ResponseSlotCountTooLarge(u16),
    #[error("standby configuration must carry an empty matrix")]
    NonEmptyStandby,
    #[error("antenna configuration index {0} does not fit 4 bits")]
    InvalidAci(u8),
    #[error("device {device} not listed in the matrix ({device_count} devices)")]
    UnknownDevice { device: u16, device_count: u16 },
    #[error(transparent)]
    Allocation(#[from] AllocationViolation),
    #[error("response slot {slot}: {reason}")]
    UnassignedSlot { slot: u16, reason: UnassignedReason },
}

/// Why a response slot index maps to no transmission under a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnassignedReason {
    /// Slot index is at or beyond the configured response slot count.
    OutOfRange,
    /// Slot falls in a block past the last active-device group.
    BeyondActiveGroups,
    /// Offset within the block is past the interleaved payload region.
    BeyondPayloadRegion,
    /// The mapped device transmits fewer payloads than the slot implies.
    UnusedBudget,
}

impl std::fmt::Display for UnassignedReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            Self::OutOfRange => "beyond the configured response slot count",
            Self::BeyondActiveGroups => "past the last allocated device group",
            Self::BeyondPayloadRegion => "past the interleaved payload region of its block",
            Self::UnusedBudget => "reserved but unused by the mapped device this cycle",
        };
        f.write_str(text)
    }
}

/// Violations of the response-slot sizing constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AllocationViolation {
    #[error("block size {block_size} cannot interleave 2 x {payloads_per_device} payloads")]
    BlockTooSmall {
        block_size: u16,
        payloads_per_device: u16,
    },
    #[error("allocation needs {required} slots but only {response_slots} are configured")]
    WindowOverflow { required: u32, response_slots: u16 },
}

/// Initiator/Reflector role within one measurement pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Role {
    Initiator,
    Reflector,
}

/// CS channel spacing profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ChannelSpacing {
    /// All 72 usable channels, 1 MHz apart.
    OneMhz,
    /// 37-channel even subset, 2 MHz effective spacing.
    TwoMhz,
}

impl ChannelSpacing {
    /// Base channel list conventionally used with this spacing.
    pub fn base_channels(self) -> ChannelList {
        match self {
            Self::OneMhz => ChannelList::usable(),
            Self::TwoMhz => ChannelList::two_mhz_even(),
        }
    }

    /// Per-path results concatenated per response payload at this spacing.
    pub fn results_per_payload(self) -> u8 {
        match self {
            Self::OneMhz => 1,
            Self::TwoMhz => 2,
        }
    }
}

/// True for the 72 usable CS channel indices.
///
/// Channels 0, 1, 23, 24, 25, 77, and 78 bracket the three primary
/// advertising frequencies and are excluded from CS use.
pub fn is_usable_channel(channel: u8) -> bool {
    matches!(channel, 2..=22 | 26..=76)
}

/// Ordered base CS channel list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelList {
    channels: Vec<u8>,
}

impl ChannelList {
    /// Builds a list from explicit channel indices, rejecting duplicates and
    /// channels outside the usable set.
    pub fn new(channels: Vec<u8>) -> Result<Self, CoordinationError> {
        if channels.is_empty() {
            return Err(CoordinationError::EmptyChannelList);
        }
        let mut seen = BTreeSet::new();
        for &ch in &channels {
            if !is_usable_channel(ch) {
                return Err(CoordinationError::UnusableChannel(ch));
            }
            if !seen.insert(ch) {
                return Err(CoordinationError::DuplicateChannel(ch));
            }
        }
        Ok(Self { channels })
    }

    /// All 72 usable channels in ascending order (1 MHz spacing).
    pub fn usable() -> Self {
        let channels = (0u8..CHANNEL_GRID_LEN as u8).filter(|&c| is_usable_channel(c)).collect();
        Self { channels }
    }

    /// The 37 even usable channels (2 MHz effective spacing).
    pub fn two_mhz_even() -> Self {
        let channels = (0u8..CHANNEL_GRID_LEN as u8)
            .filter(|&c| is_usable_channel(c) && c % 2 == 0)
            .collect();
        Self { channels }
    }

    /// The 35 odd usable channels, the complement used for disjoint-subset
    /// partitioning at 2 MHz spacing.
    pub fn two_mhz_odd() -> Self {
        let channels = (0u8..CHANNEL_GRID_LEN as u8)
            .filter(|&c| is_usable_channel(c) && c % 2 == 1)
            .collect();
        Self { channels }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[u8] {
        &self.channels
    }

    /// Channel at a list position.
    pub fn channel(&self, index: usize) -> u8 {
        self.channels[index]
    }

    /// Channels sorted ascending, the serialization order of the data plane.
    pub fn sorted(&self) -> Vec<u8> {
        let mut sorted = self.channels.clone();
        sorted.sort_unstable();
        sorted
    }
}

/// Peer-to-Peer Assignment Matrix: one cell per (device, measurement slot),
/// holding either the peer device index or no-peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMatrix {
    device_count: u16,
    slot_count: u16,
    /// Row-major by device; `NO_PEER` marks an idle cell.
    entries: Vec<u16>,
}

impl AssignmentMatrix {
    /// An all-idle matrix.
    pub fn empty(device_count: u16, slot_count: u16) -> Result<Self, CoordinationError> {
        Self::from_raw(
            device_count,
            slot_count,
            vec![NO_PEER; device_count as usize * slot_count as usize],
        )
    }

    /// Builds from raw row-major cells. Checks dimensions only; call
    /// [`AssignmentMatrix::validate`] (or construct a [`MeasurementConfig`])
    /// for the structural invariants.
    pub fn from_raw(
        device_count: u16,
        slot_count: u16,
        entries: Vec<u16>,
    ) -> Result<Self, CoordinationError> {
        if device_count == NO_PEER {
            return Err(CoordinationError::DeviceCountTooLarge(device_count as u32));
        }
        if slot_count > u8::MAX as u16 {
            return Err(CoordinationError::SlotCountTooLarge(slot_count));
        }
        if entries.len() != device_count as usize * slot_count as usize {
            return Err(CoordinationError::DimensionMismatch {
                device_count,
                slot_count,
                cells: entries.len(),
            });
        }
        Ok(Self {
            device_count,
            slot_count,
            entries,
        })
    }

    /// Assigns `a` and `b` to each other in `slot`, keeping the matrix
    /// symmetric by construction.
    pub fn pair(&mut self, a: u16, b: u16, slot: u16) -> Result<(), CoordinationError> {
        if a == b {
            return Err(CoordinationError::SelfPairing { device: a, slot });
        }
        for dev in [a, b] {
            if dev >= self.device_count {
                return Err(CoordinationError::PeerOutOfRange {
                    device: dev,
                    slot,
                    peer: dev,
                    device_count: self.device_count,
                });
            }
        }
        let slot_count = self.slot_count as usize;
        self.entries[a as usize * slot_count + slot as usize] = b;
        self.entries[b as usize * slot_count + slot as usize] = a;
        Ok(())
    }

    pub fn device_count(&self) -> u16 {
        self.device_count
    }

    pub fn slot_count(&self) -> u16 {
        self.slot_count
    }

    /// Peer of `device` in `slot`, or `None` when idle.
    pub fn entry(&self, device: u16, slot: u16) -> Option<u16> {
        let cell = self.entries[device as usize * self.slot_count as usize + slot as usize];
        (cell != NO_PEER).then_some(cell)
    }

    /// Raw row-major cells, the serialized form.
    pub fn raw_entries(&self) -> &[u16] {
        &self.entries
    }

    /// True if the device has a peer in at least one slot.
    pub fn is_active(&self, device: u16) -> bool {
        (0..self.slot_count).any(|slot| self.entry(device, slot).is_some())
    }

    /// Slots in which the device has a peer, ascending.
    pub fn active_slots(&self, device: u16) -> Vec<u16> {
        (0..self.slot_count).filter(|&slot| self.entry(device, slot).is_some()).collect()
    }

    /// Number of CS procedures the device executes per cycle.
    pub fn measurement_count(&self, device: u16) -> u16 {
        self.active_slots(device).len() as u16
    }

    /// Devices active in the cycle, ascending by index. Position in this list
    /// is the device's allocation position.
    pub fn active_devices(&self) -> Vec<u16> {
        (0..self.device_count).filter(|&dev| self.is_active(dev)).collect()
    }

    /// Checks symmetry, self-pairing, peer ranges, and the nonce-space bound.
    pub fn validate(&self) -> Result<(), CoordinationError> {
        let nonce_domain = self.device_count as u32 * self.slot_count as u32;
        if nonce_domain > 1 << 16 {
            return Err(CoordinationError::NonceSpaceExceeded {
                device_count: self.device_count as u32,
                slot_count: self.slot_count as u32,
            });
        }
        for device in 0..self.device_count {
            for slot in 0..self.slot_count {
                let Some(peer) = self.entry(device, slot) else {
                    continue;
                };
                if peer == device {
                    return Err(CoordinationError::SelfPairing { device, slot });
                }
                if peer >= self.device_count {
                    return Err(CoordinationError::PeerOutOfRange {
                        device,
                        slot,
                        peer,
                        device_count: self.device_count,
                    });
                }
                let reverse = self.entry(peer, slot);
                if reverse != Some(device) {
                    return Err(CoordinationError::AsymmetricEntry {
                        device,
                        slot,
                        peer,
                        reverse,
                    });
                }
            }
        }
        Ok(())
    }
}

/// One scheduled Initiator/Reflector pair within a measurement slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairAssignment {
    /// Lower device index; always the Initiator.
    pub initiator: u16,
    /// Higher device index; always the Reflector.
    pub reflector: u16,
    /// Measurement slot the pair occupies.
    pub slot: u16,
    /// Rank among the slot's active pairs, ascending by initiator index.
    pub position: u16,
}

impl PairAssignment {
    /// Role of `device` within this pair.
    pub fn role_of(&self, device: u16) -> Option<Role> {
        if device == self.initiator {
            Some(Role::Initiator)
        } else if device == self.reflector {
            Some(Role::Reflector)
        } else {
            None
        }
    }
}

/// PAwR response-slot sizing shared by the whole subevent group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotAllocationParams {
    /// Configured response slots per subevent (`<= 256`).
    pub response_slots: u16,
    /// Contiguous block of slots per two-device allocation group.
    pub block_size: u16,
    /// Antenna paths per CS procedure (1..=4).
    pub antenna_paths: u8,
    /// Per-path results concatenated per response payload (1 or 2).
    pub results_per_payload: u8,
}

impl SlotAllocationParams {
    pub fn validate(&self) -> Result<(), CoordinationError> {
        if self.response_slots > 256 {
            return Err(CoordinationError::ResponseSlotCountTooLarge(self.response_slots));
        }
        if !(1..=4).contains(&self.antenna_paths) {
            return Err(CoordinationError::InvalidAntennaPaths(self.antenna_paths));
        }
        if !(1..=2).contains(&self.results_per_payload) {
            return Err(CoordinationError::InvalidResultsPerPayload(self.results_per_payload));
        }
        Ok(())
    }
}

/// The shared cycle state every device and the Orchestrator hold.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementConfig {
    pub standby: bool,
    pub spacing: ChannelSpacing,
    /// Antenna Configuration Index, carried opaquely (4 bits on the wire).
    pub aci: u8,
    pub matrix: AssignmentMatrix,
    pub channels: ChannelList,
    pub slots: SlotAllocationParams,
}

impl MeasurementConfig {
    /// Validates and assembles the shared state. All coordination
    /// preconditions (symmetry, nonce space, pair bound, slot sizing) are
    /// enforced here, so the per-cycle derivations cannot fail on a config
    /// that was accepted.
    pub fn new(
        spacing: ChannelSpacing,
        aci: u8,
        matrix: AssignmentMatrix,
        channels: ChannelList,
        slots: SlotAllocationParams,
    ) -> Result<Self, CoordinationError> {
        if aci > 0x0F {
            return Err(CoordinationError::InvalidAci(aci));
        }
        slots.validate()?;
        matrix.validate()?;
        for slot in 0..matrix.slot_count() {
            let pairs = active_pairs(&matrix, slot)?;
            if pairs.len() > channels.len() {
                return Err(CoordinationError::TooManyPairs {
                    slot,
                    pairs: pairs.len(),
                    channels: channels.len(),
                });
            }
        }
        let budget = response_payload_count(
            matrix.slot_count(),
            slots.antenna_paths,
            slots.results_per_payload,
        );
        let active = matrix.active_devices().len() as u16;
        if active > 0 {
            validate_allocation(&slots, active, budget)?;
        }
        Ok(Self {
            standby: false,
            spacing,
            aci,
            matrix,
            channels,
            slots,
        })
    }

    /// A standby configuration: devices stay synchronized but schedule no
    /// measurements.
    pub fn standby(spacing: ChannelSpacing, aci: u8, slots: SlotAllocationParams) -> Result<Self, CoordinationError> {
        if aci > 0x0F {
            return Err(CoordinationError::InvalidAci(aci));
        }
        slots.validate()?;
        Ok(Self {
            standby: true,
            spacing,
            aci,
            matrix: AssignmentMatrix::empty(0, 0)?,
            channels: spacing.base_channels(),
            slots,
        })
    }

    /// Response payloads budgeted per active device (the allocation bound).
    pub fn payload_budget(&self) -> u16 {
        response_payload_count(
            self.matrix.slot_count(),
            self.slots.antenna_paths,
            self.slots.results_per_payload,
        )
    }
}

/// Active pairs of a measurement slot, ascending by initiator index.
///
/// The returned positions are the per-slot pair positions used by the
/// channel-shift derivation. Asymmetric or self-referencing cells are
/// rejected with the offending cell.
pub fn active_pairs(
    matrix: &AssignmentMatrix,
    slot: u16,
) -> Result<Vec<PairAssignment>, CoordinationError> {
    let mut pairs = Vec::new();
    for device in 0..matrix.device_count() {
        let Some(peer) = matrix.entry(device, slot) else {
            continue;
        };
        if peer == device {
            return Err(CoordinationError::SelfPairing { device, slot });
        }
        if peer >= matrix.device_count() {
            return Err(CoordinationError::PeerOutOfRange {
                device,
                slot,
                peer,
                device_count: matrix.device_count(),
            });
        }
        let reverse = matrix.entry(peer, slot);
        if reverse != Some(device) {
            return Err(CoordinationError::AsymmetricEntry {
                device,
                slot,
                peer,
                reverse,
            });
        }
        // Lower index initiates; emit each pair once, at its initiator.
        if device < peer {
            pairs.push(PairAssignment {
                initiator: device,
                reflector: peer,
                slot,
                position: pairs.len() as u16,
            });
        }
    }
    Ok(pairs)
}

/// 16-bit DRBG nonce for one CS procedure.
///
/// `(event_counter + initiator * slot_count + slot) mod 2^16`. Distinct for
/// every procedure of a cycle while the matrix honors the nonce-space bound,
/// and sweeping the full 16-bit range as the event counter advances.
pub fn derive_drbg_nonce(
    event_counter: u16,
    initiator: u16,
    slot: u16,
    slot_count: u16,
) -> Result<u16, CoordinationError> {
    let offset = initiator as u32 * slot_count as u32 + slot as u32;
    if offset >= 1 << 16 {
        return Err(CoordinationError::NonceDomainExceeded {
            initiator,
            slot,
            slot_count,
        });
    }
    Ok(((event_counter as u32 + offset) % (1 << 16)) as u16)
}

/// Position into the base channel list used at one CS step.
///
/// Cyclic shift `(step + pair_position + slot + event_counter) mod list_len`;
/// pairs at distinct positions therefore never share a channel within a step.
pub fn derive_channel_index(
    step: u16,
    pair_position: u16,
    slot: u16,
    event_counter: u16,
    list_len: u16,
) -> u16 {
    assert!(list_len > 0, "channel list must be non-empty");
    ((step as u32 + pair_position as u32 + slot as u32 + event_counter as u32) % list_len as u32)
        as u16
}

/// Full per-step channel sequence for one pair, one list pass long.
pub fn channel_sequence(pair: &PairAssignment, event_counter: u16, base: &ChannelList) -> Vec<u8> {
    let len = base.len() as u16;
    (0..len)
        .map(|step| {
            base.channel(derive_channel_index(step, pair.position, pair.slot, event_counter, len) as usize)
        })
        .collect()
}

/// Response payloads a fully active device needs per cycle:
/// `ceil(slot_count * antenna_paths / results_per_payload)`.
pub fn response_payload_count(slot_count: u16, antenna_paths: u8, results_per_payload: u8) -> u16 {
    let total = slot_count as u32 * antenna_paths as u32;
    let k = results_per_payload as u32;
    ((total + k - 1) / k) as u16
}

/// PAwR response slot for the active device at `active_position` transmitting
/// its `payload_index`-th payload.
pub fn derive_response_slot(active_position: u16, payload_index: u16, block_size: u16) -> u16 {
    (active_position / 2) * block_size + 2 * payload_index + (active_position % 2)
}

/// Checks the response-slot sizing constraints: each block must hold the two
/// interleaved payload sets, and all groups must fit the configured window.
pub fn validate_allocation(
    params: &SlotAllocationParams,
    active_devices: u16,
    payloads_per_device: u16,
) -> Result<(), AllocationViolation> {
    if params.block_size < 2 * payloads_per_device {
        return Err(AllocationViolation::BlockTooSmall {
            block_size: params.block_size,
            payloads_per_device,
        });
    }
    let groups = (active_devices as u32 + 1) / 2;
    let required = groups * params.block_size as u32;
    if required > params.response_slots as u32 {
        return Err(AllocationViolation::WindowOverflow {
            required,
            response_slots: params.response_slots,
        });
    }
    Ok(())
}

/// The (measurement slot, antenna path) combinations one device reports,
/// ascending by slot then path, packed `results_per_payload` at a time.
///
/// Only active slots produce results, so payloads are densely packed over the
/// device's actual measurements; the final payload may carry fewer results
/// when the total is not a multiple of the packing factor.
pub fn payload_layout(
    active_slots: &[u16],
    antenna_paths: u8,
    results_per_payload: u8,
) -> Vec<Vec<(u16, u8)>> {
    let entries: Vec<(u16, u8)> = active_slots
        .iter()
        .flat_map(|&slot| (0..antenna_paths).map(move |path| (slot, path)))
        .collect();
    entries.chunks(results_per_payload as usize).map(|chunk| chunk.to_vec()).collect()
}

/// Source of one received response payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadOrigin {
    pub device: u16,
    pub active_position: u16,
    pub payload_index: u16,
    /// The (measurement slot, antenna path) results the payload carries, in
    /// serialization order.
    pub results: Vec<(u16, u8)>,
}

/// Resolves a PAwR response slot index back to the transmitting device and
/// the per-path results its payload carries, the exact inverse of
/// [`derive_response_slot`] composed with [`payload_layout`].
pub fn invert_response_slot(
    slot_index: u16,
    config: &MeasurementConfig,
) -> Result<PayloadOrigin, CoordinationError> {
    let unassigned = |reason| CoordinationError::UnassignedSlot {
        slot: slot_index,
        reason,
    };
    if slot_index >= config.slots.response_slots {
        return Err(unassigned(UnassignedReason::OutOfRange));
    }
    let block_size = config.slots.block_size;
    let group = slot_index / block_size;
    let offset = slot_index % block_size;
    let parity = offset % 2;
    let payload_index = offset / 2;
    let active = config.matrix.active_devices();
    let active_position = group * 2 + parity;
    if active_position as usize >= active.len() {
        return Err(unassigned(UnassignedReason::BeyondActiveGroups));
    }
    if payload_index >= config.payload_budget() {
        return Err(unassigned(UnassignedReason::BeyondPayloadRegion));
    }
    let device = active[active_position as usize];
    let layout = payload_layout(
        &config.matrix.active_slots(device),
        config.slots.antenna_paths,
        config.slots.results_per_payload,
    );
    let Some(results) = layout.get(payload_index as usize) else {
        return Err(unassigned(UnassignedReason::UnusedBudget));
    };
    Ok(PayloadOrigin {
        device,
        active_position,
        payload_index,
        results: results.clone(),
    })
}

/// One active slot of a device's plan.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SlotPlan {
    pub slot: u16,
    pub role: Role,
    pub peer: u16,
    pub pair_position: u16,
    pub drbg_nonce: u16,
    pub channel_sequence: Vec<u8>,
}

/// A device's fully derived schedule for one update cycle.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DevicePlan {
    pub device: u16,
    /// Position among the cycle's active devices, `None` when idle.
    pub active_position: Option<u16>,
    /// Plans for the device's active slots, ascending by slot.
    pub slots: Vec<SlotPlan>,
    /// Response slots the device transmits in, one per payload, ascending.
    pub response_slots: Vec<u16>,
}

impl DevicePlan {
    /// CS procedures the device executes this cycle.
    pub fn measurement_count(&self) -> usize {
        self.slots.len()
    }
}

/// Derives the complete cycle schedule for one device from the shared
/// configuration and the PAwR event counter.
pub fn build_device_plan(
    device: u16,
    config: &MeasurementConfig,
    event_counter: u16,
) -> Result<DevicePlan, CoordinationError> {
    if config.standby {
        return Ok(DevicePlan {
            device,
            active_position: None,
            slots: Vec::new(),
            response_slots: Vec::new(),
        });
    }
    let matrix = &config.matrix;
    if device >= matrix.device_count() {
        return Err(CoordinationError::UnknownDevice {
            device,
            device_count: matrix.device_count(),
        });
    }
    let mut slots = Vec::new();
    for slot in matrix.active_slots(device) {
        let pairs = active_pairs(matrix, slot)?;
        let pair = pairs
            .iter()
            .find(|p| p.initiator == device || p.reflector == device)
            .copied()
            .expect("active slot implies a pair containing the device");
        let role = pair.role_of(device).expect("device is a pair member");
        slots.push(SlotPlan {
            slot,
            role,
            peer: if role == Role::Initiator { pair.reflector } else { pair.initiator },
            pair_position: pair.position,
            drbg_nonce: derive_drbg_nonce(event_counter, pair.initiator, slot, matrix.slot_count())?,
            channel_sequence: channel_sequence(&pair, event_counter, &config.channels),
        });
    }
    let active = matrix.active_devices();
    let active_position = active.iter().position(|&d| d == device).map(|p| p as u16);
    let response_slots = match active_position {
        Some(position) => {
            let layout = payload_layout(
                &matrix.active_slots(device),
                config.slots.antenna_paths,
                config.slots.results_per_payload,
            );
            (0..layout.len() as u16)
                .map(|payload| derive_response_slot(position, payload, config.slots.block_size))
                .collect()
        }
        None => Vec::new(),
    };
    Ok(DevicePlan {
        device,
        active_position,
        slots,
        response_slots,
    })
}
