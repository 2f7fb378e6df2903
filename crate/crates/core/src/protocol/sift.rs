use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::polarization::{BasisAssignment, PhysicalBasis};

use super::{basis_mask, detector_index};

/// Treatment of slots where both detectors of the matching basis click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoubleClickPolicy {
    #[default]
    Discard,
    /// Keep the slot with a bit derived deterministically from the slot index.
    RandomBit,
}

/// Alice's setting for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceRecord {
    pub slot: u64,
    pub basis: PhysicalBasis,
    pub bit: bool,
}

/// Bob's clicks for one slot, as a bitmask over the four detectors
/// (bit 0: D, bit 1: A, bit 2: L, bit 3: R).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobRecord {
    pub slot: u64,
    pub detections: u8,
}

/// Joint per-slot record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub alice_basis: PhysicalBasis,
    pub alice_bit: bool,
    pub bob_detections: u8,
}

impl SlotRecord {
    pub fn alice(&self) -> AliceRecord {
        AliceRecord { slot: self.slot, basis: self.alice_basis, bit: self.alice_bit }
    }

    pub fn bob(&self) -> BobRecord {
        BobRecord { slot: self.slot, detections: self.bob_detections }
    }
}

/// Outcome of sifting one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SlotOutcome {
    NoClick,
    Discarded { double_click: bool },
    Sifted { basis: PhysicalBasis, error: bool },
}

pub(crate) fn classify(
    slot: u64,
    basis: PhysicalBasis,
    bit: bool,
    detections: u8,
    policy: DoubleClickPolicy,
) -> SlotOutcome {
    if detections == 0 {
        return SlotOutcome::NoClick;
    }
    let own = detections & basis_mask(basis);
    let other = detections & basis_mask(basis.other());
    if own == 0 || other != 0 {
        return SlotOutcome::Discarded { double_click: false };
    }
    let zero = 1u8 << detector_index(basis, false);
    let one = 1u8 << detector_index(basis, true);
    let measured = if own == zero {
        false
    } else if own == one {
        true
    } else {
        match policy {
            DoubleClickPolicy::Discard => return SlotOutcome::Discarded { double_click: true },
            DoubleClickPolicy::RandomBit => splitmix64(slot) & 1 == 1,
        }
    };
    SlotOutcome::Sifted { basis, error: measured != bit }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Exact sifting counts; merging tallies of disjoint slot ranges is plain addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SiftTally {
    pub pulses: u64,
    /// Slots with at least one click.
    pub detections: u64,
    pub double_clicks: u64,
    /// Sifted slots, indexed DA then LR.
    pub sifted: [u64; 2],
    pub errors: [u64; 2],
}

fn idx(basis: PhysicalBasis) -> usize {
    match basis {
        PhysicalBasis::Da => 0,
        PhysicalBasis::Lr => 1,
    }
}

impl SiftTally {
    pub(crate) fn record(&mut self, outcome: SlotOutcome) {
        match outcome {
            SlotOutcome::NoClick => {}
            SlotOutcome::Discarded { double_click } => {
                self.detections += 1;
                self.double_clicks += double_click as u64;
            }
            SlotOutcome::Sifted { basis, error } => {
                self.detections += 1;
                self.sifted[idx(basis)] += 1;
                self.errors[idx(basis)] += error as u64;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.pulses += other.pulses;
        self.detections += other.detections;
        self.double_clicks += other.double_clicks;
        for i in 0..2 {
            self.sifted[i] += other.sifted[i];
            self.errors[i] += other.errors[i];
        }
    }

    pub fn sifted_in(&self, basis: PhysicalBasis) -> u64 {
        self.sifted[idx(basis)]
    }

    pub fn errors_in(&self, basis: PhysicalBasis) -> u64 {
        self.errors[idx(basis)]
    }

    pub fn qber(&self, basis: PhysicalBasis) -> f64 {
        ratio(self.errors_in(basis), self.sifted_in(basis))
    }

    pub fn total_sifted(&self) -> u64 {
        self.sifted[0] + self.sifted[1]
    }

    pub fn result(&self, assignment: BasisAssignment) -> SiftResult {
        let (k, c) = (assignment.key, assignment.check());
        SiftResult {
            key_basis: k,
            pulses: self.pulses,
            detections: self.detections,
            double_clicks: self.double_clicks,
            n_key: self.sifted_in(k),
            n_check: self.sifted_in(c),
            errors_key: self.errors_in(k),
            errors_check: self.errors_in(c),
            e_key: self.qber(k),
            e_check: self.qber(c),
            qber_da: self.qber(PhysicalBasis::Da),
            qber_lr: self.qber(PhysicalBasis::Lr),
            qber: ratio(self.errors[0] + self.errors[1], self.total_sifted()),
            p_det: ratio(self.detections, self.pulses),
            sifted_fraction: ratio(self.total_sifted(), self.detections),
            tally: *self,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Post-sifting summary of a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftResult {
    pub key_basis: PhysicalBasis,
    pub pulses: u64,
    pub detections: u64,
    pub double_clicks: u64,
    pub n_key: u64,
    pub n_check: u64,
    pub errors_key: u64,
    pub errors_check: u64,
    pub e_key: f64,
    pub e_check: f64,
    pub qber_da: f64,
    pub qber_lr: f64,
    /// QBER over both bases.
    pub qber: f64,
    /// Empirical detection probability per pulse.
    pub p_det: f64,
    /// Sifted slots per detection.
    pub sifted_fraction: f64,
    pub tally: SiftTally,
}

/// Sifts aligned Alice/Bob records covering `pulses` slots. Slots missing
/// from the records are treated as no-click slots.
pub fn sift(
    alice: &[AliceRecord],
    bob: &[BobRecord],
    pulses: u64,
    policy: DoubleClickPolicy,
    assignment: BasisAssignment,
) -> Result<SiftResult> {
    if alice.len() != bob.len() {
        return Err(invalid(format!("record count mismatch: {} Alice vs {} Bob", alice.len(), bob.len())));
    }
    let mut tally = SiftTally { pulses, ..Default::default() };
    let mut last = None;
    for (a, b) in alice.iter().zip(bob) {
        if a.slot != b.slot {
            return Err(invalid(format!("misaligned records: Alice slot {} vs Bob slot {}", a.slot, b.slot)));
        }
        if last.is_some_and(|l| a.slot <= l) || a.slot >= pulses {
            return Err(invalid(format!("slot {} out of order or beyond {pulses} pulses", a.slot)));
        }
        last = Some(a.slot);
        tally.record(classify(a.slot, a.basis, a.bit, b.detections, policy));
    }
    Ok(tally.result(assignment))
}

/// [`sift`] over joint slot records.
pub fn sift_slots(
    records: &[SlotRecord],
    pulses: u64,
    policy: DoubleClickPolicy,
    assignment: BasisAssignment,
) -> Result<SiftResult> {
    let alice: Vec<_> = records.iter().map(SlotRecord::alice).collect();
    let bob: Vec<_> = records.iter().map(SlotRecord::bob).collect();
    sift(&alice, &bob, pulses, policy, assignment)
}
