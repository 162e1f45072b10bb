//! Per-trial outcome shared by the protocol simulators.

use serde::{Deserialize, Serialize};

use crate::decoder::{DecodeResult, DecodeStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub frame_error: bool,
    pub bit_errors: u64,
    pub bits: u64,
    /// Forward moves of the destination decoder.
    pub nodes: u64,
    pub budget_exhausted: bool,
    /// Relay wait as a fraction of the codeword, when the protocol has one.
    pub wait_fraction: Option<f64>,
}

/// Bits carried by one `Z_Q` symbol when counting bit errors.
pub fn bits_per_symbol(q: u32) -> u32 {
    32 - (q - 1).leading_zeros()
}

/// Bit errors between two symbol sequences, `ceil(log2 Q)` bits per symbol.
/// A missing decode counts every bit as wrong.
pub fn count_bit_errors(sent: &[u32], decoded: Option<&[u32]>, q: u32) -> (u64, u64) {
    let bits = sent.len() as u64 * bits_per_symbol(q) as u64;
    let errors = match decoded {
        Some(d) if d.len() == sent.len() => sent
            .iter()
            .zip(d)
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum(),
        _ => bits,
    };
    (errors, bits)
}

impl TrialRecord {
    /// Record for a decode of `sent` that produced `decoded` (None when the
    /// decoded point left the information set).
    pub fn from_decode(sent: &[u32], decoded: Option<&[u32]>, q: u32, result: &DecodeResult) -> Self {
        let (bit_errors, bits) = count_bit_errors(sent, decoded, q);
        let exhausted = result.status == DecodeStatus::BudgetExhausted;
        TrialRecord {
            frame_error: exhausted || decoded != Some(sent),
            bit_errors,
            bits,
            nodes: result.nodes,
            budget_exhausted: exhausted,
            wait_fraction: None,
        }
    }

    /// Merges the records of several independently decoded blocks of one
    /// codeword.
    pub fn merge(parts: &[TrialRecord]) -> Self {
        TrialRecord {
            frame_error: parts.iter().any(|p| p.frame_error),
            bit_errors: parts.iter().map(|p| p.bit_errors).sum(),
            bits: parts.iter().map(|p| p.bits).sum(),
            nodes: parts.iter().map(|p| p.nodes).sum(),
            budget_exhausted: parts.iter().any(|p| p.budget_exhausted),
            wait_fraction: parts.iter().find_map(|p| p.wait_fraction),
        }
    }
}
