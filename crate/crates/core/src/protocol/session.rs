use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::polarization::{phase_to_state, BasisAssignment, BasisRole, PhysicalBasis, StokesVector};

use super::sift::{classify, SiftResult, SiftTally, SlotRecord};
use super::{detector_index, AliceSettings, SessionConfig};

/// Pulses per independently seeded block.
const BLOCK_PULSES: u64 = 1 << 16;

/// One prepared pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub basis: PhysicalBasis,
    pub bit: bool,
    pub phi_v: f64,
    pub stokes: StokesVector<f64>,
}

impl Pulse {
    pub fn new(basis: PhysicalBasis, bit: bool) -> Self {
        let phi_v = basis.phase::<f64>(bit);
        Self { basis, bit, phi_v, stokes: phase_to_state(phi_v) }
    }
}

/// Prepares the pulse for `slot`. Pattern-driven settings read the slot's
/// entry and return `None` once the pattern is exhausted; otherwise the basis
/// and bit are drawn from `rng`.
pub fn prepare_pulse<R: Rng + ?Sized>(
    settings: &AliceSettings,
    assignment: BasisAssignment,
    slot: u64,
    rng: &mut R,
) -> Option<Pulse> {
    if let Some(pattern) = &settings.pattern {
        let (basis, bit) = pattern.get(slot)?;
        return Some(Pulse::new(basis, bit));
    }
    let role = if rng.random::<f64>() < settings.p_key { BasisRole::Key } else { BasisRole::Check };
    Some(Pulse::new(assignment.physical(role), rng.random()))
}

/// Per-session constants of the transmit/measure step.
#[derive(Debug, Clone)]
struct Link<'a> {
    config: &'a SessionConfig,
    p1: f64,
    p2: f64,
    p_click: f64,
    p_any_dark: f64,
}

impl<'a> Link<'a> {
    fn new(config: &'a SessionConfig) -> Result<Self> {
        let (_, p1, p2) = config.photons.distribution()?;
        let p_dark = config.device.dark_rate;
        Ok(Self {
            config,
            p1,
            p2,
            p_click: config.photon_detection_probability(),
            p_any_dark: 1.0 - (1.0 - p_dark).powi(4),
        })
    }

    fn photon<R: Rng + ?Sized>(&self, pulse: &Pulse, rng: &mut R) -> u8 {
        if rng.random::<f64>() >= self.p_click {
            return 0;
        }
        let c = self.config;
        let wavelength = c.spectrum.sample_wavelength(rng);
        let out = c.channel.apply(&pulse.stokes, wavelength);
        let role = if rng.random::<f64>() < c.bob_split { BasisRole::Key } else { BasisRole::Check };
        let basis = c.assignment.physical(role);
        let p_zero = 0.5 * (1.0 + out.dot(&basis.axis()));
        let mut bit = rng.random::<f64>() >= p_zero;
        if rng.random::<f64>() < c.device.intrinsic_qber {
            bit = !bit;
        }
        1 << detector_index(basis, bit)
    }

    fn dark<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        if rng.random::<f64>() >= self.p_any_dark {
            return 0;
        }
        // conditioned on at least one dark click
        let p = self.config.device.dark_rate;
        loop {
            let mask = (0..4).fold(0u8, |m, d| if rng.random::<f64>() < p { m | 1 << d } else { m });
            if mask != 0 {
                return mask;
            }
        }
    }

    fn slot<R: Rng + ?Sized>(&self, pulse: &Pulse, rng: &mut R) -> u8 {
        let n = crate::emitter::draw_photons(rng.random(), self.p1, self.p2);
        let mut mask = 0;
        for _ in 0..n {
            mask |= self.photon(pulse, rng);
        }
        mask | self.dark(rng)
    }
}

/// Sends one pulse through the configured source, channel and receiver and
/// returns Bob's detector bitmask (bit 0: D, 1: A, 2: L, 3: R).
pub fn transmit_and_measure<R: Rng + ?Sized>(pulse: &Pulse, config: &SessionConfig, rng: &mut R) -> Result<u8> {
    config.validate()?;
    Ok(Link::new(config)?.slot(pulse, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SessionStatus {
    Complete,
    /// The pattern ran out after `pulses_sent` slots.
    Truncated {
        pulses_sent: u64,
    },
}

/// Sifting statistics of one integration window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub window_index: u64,
    pub qber: f64,
    pub sifted_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutput {
    pub status: SessionStatus,
    pub pulses_requested: u64,
    pub result: SiftResult,
    pub windows: Vec<WindowStat>,
    /// Slots with at least one click; empty slots are implied.
    pub records: Vec<SlotRecord>,
}

struct Block {
    tally: SiftTally,
    records: Vec<SlotRecord>,
    exhausted: bool,
}

fn run_block(link: &Link<'_>, seed: u64, block: u64, end: u64) -> Block {
    let c = link.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let start = block * BLOCK_PULSES;
    let mut tally = SiftTally::default();
    let mut records = Vec::new();
    let mut exhausted = false;
    for slot in start..end.min(start + BLOCK_PULSES) {
        let Some(pulse) = prepare_pulse(&c.alice, c.assignment, slot, &mut rng) else {
            exhausted = true;
            break;
        };
        tally.pulses += 1;
        let mask = link.slot(&pulse, &mut rng);
        if mask != 0 {
            tally.record(classify(slot, pulse.basis, pulse.bit, mask, c.double_click));
            records.push(SlotRecord { slot, alice_basis: pulse.basis, alice_bit: pulse.bit, bob_detections: mask });
        }
    }
    Block { tally, records, exhausted }
}

/// Runs a seeded session of `n_pulses` slots. Blocks of slots use independent
/// streams of the same seed, so the output does not depend on thread count.
pub fn run_session(config: &SessionConfig, n_pulses: u64, seed: u64) -> Result<SessionOutput> {
    config.validate()?;
    if n_pulses == 0 {
        return Err(crate::error::invalid("n_pulses must be >= 1"));
    }
    let link = Link::new(config)?;
    let blocks = n_pulses.div_ceil(BLOCK_PULSES);
    let parts: Vec<Block> = (0..blocks).into_par_iter().map(|b| run_block(&link, seed, b, n_pulses)).collect();

    let mut tally = SiftTally::default();
    let mut records = Vec::new();
    let mut exhausted = false;
    for part in parts {
        tally.merge(&part.tally);
        records.extend(part.records);
        exhausted |= part.exhausted;
    }
    let status =
        if exhausted { SessionStatus::Truncated { pulses_sent: tally.pulses } } else { SessionStatus::Complete };
    let windows = window_series(config, &records, tally.pulses);
    Ok(SessionOutput { status, pulses_requested: n_pulses, result: tally.result(config.assignment), windows, records })
}

fn window_series(config: &SessionConfig, records: &[SlotRecord], pulses: u64) -> Vec<WindowStat> {
    let rep = config.device.rep_rate;
    let width = ((config.window_s * rep).round() as u64).max(1);
    let count = pulses.div_ceil(width);
    let mut tallies = vec![SiftTally::default(); count as usize];
    for r in records {
        tallies[(r.slot / width) as usize].record(classify(
            r.slot,
            r.alice_basis,
            r.alice_bit,
            r.bob_detections,
            config.double_click,
        ));
    }
    tallies
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let span = width.min(pulses - i as u64 * width);
            let sifted = t.total_sifted();
            WindowStat {
                window_index: i as u64,
                qber: if sifted == 0 { 0.0 } else { (t.errors[0] + t.errors[1]) as f64 / sifted as f64 },
                sifted_bps: sifted as f64 * rep / span as f64,
            }
        })
        .collect()
}
