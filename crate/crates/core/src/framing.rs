//! 16-bit CRC framing of `Z_Q` payloads.
//!
//! The checksum is CRC-16/CCITT-FALSE (poly `0x1021`, init `0xFFFF`) over
//! one byte per symbol, or two big-endian bytes when `Q > 256`. The 16 bits
//! are packed MSB first into `ceil(16 / floor(log2 Q))` symbols; the last
//! symbol is zero-padded on the right.

use crc::{Crc, CRC_16_IBM_3740};

const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoFrame {
    pub payload: Vec<u32>,
    pub crc: Vec<u32>,
}

impl InfoFrame {
    /// Payload followed by the checksum symbols.
    pub fn symbols(&self) -> Vec<u32> {
        self.payload.iter().chain(&self.crc).copied().collect()
    }
}

fn bits_per_symbol(q: u32) -> u32 {
    assert!(q >= 2, "alphabet needs at least two symbols");
    31 - q.leading_zeros()
}

/// Number of symbols the checksum occupies.
pub fn crc_symbol_count(q: u32) -> usize {
    16usize.div_ceil(bits_per_symbol(q) as usize)
}

pub fn crc16(payload: &[u32], q: u32) -> u16 {
    let mut digest = CRC16.digest();
    for &s in payload {
        if q > 256 {
            digest.update(&(s as u16).to_be_bytes());
        } else {
            digest.update(&[s as u8]);
        }
    }
    digest.finalize()
}

fn pack(crc: u16, q: u32) -> Vec<u32> {
    let bits = bits_per_symbol(q);
    let n = crc_symbol_count(q) as u32;
    let padded = (crc as u64) << (n * bits - 16);
    let mask = (1u64 << bits) - 1;
    (0..n)
        .map(|i| ((padded >> ((n - 1 - i) * bits)) & mask) as u32)
        .collect()
}

pub fn crc_append(payload: &[u32], q: u32) -> InfoFrame {
    InfoFrame {
        payload: payload.to_vec(),
        crc: pack(crc16(payload, q), q),
    }
}

/// Checks a frame laid out as payload followed by the checksum symbols.
pub fn crc_check(frame: &[u32], q: u32) -> bool {
    let n = crc_symbol_count(q);
    if frame.len() < n {
        return false;
    }
    let (payload, crc) = frame.split_at(frame.len() - n);
    pack(crc16(payload, q), q) == crc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bitwise CRC-16/CCITT-FALSE.
    fn reference_crc(bytes: &[u8]) -> u16 {
        let mut crc = 0xFFFFu16;
        for &b in bytes {
            crc ^= (b as u16) << 8;
            for _ in 0..8 {
                crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
            }
        }
        crc
    }

    #[test]
    fn check_value() {
        let s: Vec<u32> = b"123456789".iter().map(|&b| b as u32).collect();
        assert_eq!(crc16(&s, 256), 0x29B1);
        assert_eq!(reference_crc(b"123456789"), 0x29B1);
    }

    #[test]
    fn empty_payload() {
        assert_eq!(crc16(&[], 5), reference_crc(&[]));
        assert_eq!(crc16(&[], 5), 0xFFFF);
        assert!(crc_check(&crc_append(&[], 5).symbols(), 5));
    }

    #[test]
    fn matches_reference_for_wide_symbols() {
        let s = [1u32, 300, 66, 0];
        let bytes: Vec<u8> = s.iter().flat_map(|&v| (v as u16).to_be_bytes()).collect();
        assert_eq!(crc16(&s, 1031), reference_crc(&bytes));
    }

    #[test]
    fn symbol_counts() {
        assert_eq!(crc_symbol_count(2), 16);
        assert_eq!(crc_symbol_count(5), 8);
        assert_eq!(crc_symbol_count(17), 4);
        assert_eq!(crc_symbol_count(67), 3);
    }

    #[test]
    fn append_then_check() {
        for q in [2u32, 5, 17, 67] {
            let payload: Vec<u32> = (0..40).map(|i| (i * 7 + 3) % q).collect();
            let frame = crc_append(&payload, q);
            assert!(frame.crc.iter().all(|&c| c < q));
            assert!(crc_check(&frame.symbols(), q));
        }
    }

    #[test]
    fn every_single_symbol_error_is_detected() {
        for q in [5u32, 17, 67] {
            let payload: Vec<u32> = (0..30).map(|i| (i * 11 + 1) % q).collect();
            let frame = crc_append(&payload, q).symbols();
            for pos in 0..frame.len() {
                for v in 0..q {
                    if v == frame[pos] {
                        continue;
                    }
                    let mut bad = frame.clone();
                    bad[pos] = v;
                    assert!(!crc_check(&bad, q), "q={q} pos={pos} v={v}");
                }
            }
        }
    }
}
