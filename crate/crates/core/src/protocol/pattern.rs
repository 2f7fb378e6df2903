use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::polarization::PhysicalBasis;

/// Pre-recorded modulator settings, two bits per pulse `(basis, bit)`,
/// packed four pulses per byte with the first pulse in the high bits.
/// Basis bit 0 selects DA, 1 selects LR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    bytes: Vec<u8>,
}

impl Pattern {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    /// Parses hex text; whitespace is ignored.
    pub fn parse_hex(text: &str) -> Result<Self> {
        let digits: Vec<(usize, char)> = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.chars().filter(|c| !c.is_whitespace()).map(move |c| (i + 1, c)))
            .collect();
        if !digits.len().is_multiple_of(2) {
            return Err(invalid("hex pattern has an odd number of digits"));
        }
        let mut bytes = Vec::with_capacity(digits.len() / 2);
        for pair in digits.chunks(2) {
            let mut v = 0u8;
            for &(line, c) in pair {
                let d =
                    c.to_digit(16).ok_or_else(|| Error::Parse { line, message: format!("invalid hex digit {c:?}") })?;
                v = (v << 4) | d as u8;
            }
            bytes.push(v);
        }
        Ok(Self { bytes })
    }

    /// Reads a pattern file: hex text if the content is hex digits and
    /// whitespace only, raw bytes otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let is_hex = !raw.is_empty() && raw.iter().all(|b| b.is_ascii_hexdigit() || b.is_ascii_whitespace());
        if is_hex {
            Self::parse_hex(std::str::from_utf8(&raw).expect("ascii checked"))
        } else {
            Ok(Self::from_bytes(raw))
        }
    }

    pub fn encode(pulses: &[(PhysicalBasis, bool)]) -> Self {
        let mut bytes = vec![0u8; pulses.len().div_ceil(4)];
        for (i, &(basis, bit)) in pulses.iter().enumerate() {
            let code = ((basis == PhysicalBasis::Lr) as u8) << 1 | bit as u8;
            bytes[i / 4] |= code << (6 - 2 * (i % 4));
        }
        Self { bytes }
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn len(&self) -> usize {
        self.bytes.len() * 4
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn get(&self, slot: u64) -> Option<(PhysicalBasis, bool)> {
        let i = usize::try_from(slot).ok()?;
        let byte = *self.bytes.get(i / 4)?;
        let code = (byte >> (6 - 2 * (i % 4))) & 0b11;
        let basis = if code & 0b10 == 0 { PhysicalBasis::Da } else { PhysicalBasis::Lr };
        Some((basis, code & 1 == 1))
    }
}
