//! Micro QR symbol parameters (ISO/IEC 18004, Micro QR clauses).

use super::{EcLevel, Mode, Version};

/// Block structure and correction budget of one (version, level) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolParams {
    /// 3-bit symbol number carried in the format information.
    pub symbol_number: u8,
    pub version: Version,
    pub ec: EcLevel,
    pub total_codewords: usize,
    pub data_codewords: usize,
    /// Data capacity in bits; M1 and M3 end on a 4-bit codeword.
    pub data_bits: usize,
    /// Bytes the decoder may correct. Below ⌊ec/2⌋ where the standard
    /// reserves parity for misdecode protection.
    pub correctable: usize,
}

impl SymbolParams {
    pub fn ec_codewords(&self) -> usize {
        self.total_codewords - self.data_codewords
    }

    /// True when the final data codeword carries only 4 bits.
    pub fn has_half_codeword(&self) -> bool {
        !self.data_bits.is_multiple_of(8)
    }
}

const fn p(
    symbol_number: u8,
    version: Version,
    ec: EcLevel,
    total_codewords: usize,
    data_codewords: usize,
    data_bits: usize,
    correctable: usize,
) -> SymbolParams {
    SymbolParams { symbol_number, version, ec, total_codewords, data_codewords, data_bits, correctable }
}

pub const SYMBOLS: [SymbolParams; 8] = [
    p(0, Version::M1, EcLevel::DetectOnly, 5, 3, 20, 0),
    p(1, Version::M2, EcLevel::L, 10, 5, 40, 1),
    p(2, Version::M2, EcLevel::M, 10, 4, 32, 2),
    p(3, Version::M3, EcLevel::L, 17, 11, 84, 2),
    p(4, Version::M3, EcLevel::M, 17, 9, 68, 4),
    p(5, Version::M4, EcLevel::L, 24, 16, 128, 3),
    p(6, Version::M4, EcLevel::M, 24, 14, 112, 5),
    p(7, Version::M4, EcLevel::Q, 24, 10, 80, 7),
];

pub fn lookup(version: Version, ec: EcLevel) -> Option<&'static SymbolParams> {
    SYMBOLS.iter().find(|s| s.version == version && s.ec == ec)
}

pub fn by_symbol_number(n: u8) -> Option<&'static SymbolParams> {
    SYMBOLS.get(n as usize)
}

/// Width of the mode indicator: 0, 1, 2, 3 bits for M1..M4.
pub fn mode_indicator_bits(version: Version) -> usize {
    version.index() - 1
}

pub fn mode_indicator(mode: Mode) -> u32 {
    match mode {
        Mode::Numeric => 0,
        Mode::Alphanumeric => 1,
        Mode::Byte => 2,
    }
}

pub fn mode_from_indicator(value: u32) -> Option<Mode> {
    match value {
        0 => Some(Mode::Numeric),
        1 => Some(Mode::Alphanumeric),
        2 => Some(Mode::Byte),
        _ => None,
    }
}

/// Character count indicator width, or `None` if the mode is not
/// available in this version.
pub fn count_bits(version: Version, mode: Mode) -> Option<usize> {
    use Version::*;
    match (mode, version) {
        (Mode::Numeric, M1) => Some(3),
        (Mode::Numeric, M2) => Some(4),
        (Mode::Numeric, M3) => Some(5),
        (Mode::Numeric, M4) => Some(6),
        (Mode::Alphanumeric, M1) => None,
        (Mode::Alphanumeric, M2) => Some(3),
        (Mode::Alphanumeric, M3) => Some(4),
        (Mode::Alphanumeric, M4) => Some(5),
        (Mode::Byte, M1 | M2) => None,
        (Mode::Byte, M3) => Some(4),
        (Mode::Byte, M4) => Some(5),
    }
}

/// Terminator length: 3, 5, 7, 9 zero bits for M1..M4.
pub fn terminator_bits(version: Version) -> usize {
    2 * version.index() + 1
}

pub const ALPHANUMERIC: &[u8; 45] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:";

pub fn alphanumeric_value(c: u8) -> Option<u32> {
    ALPHANUMERIC.iter().position(|&a| a == c).map(|p| p as u32)
}

/// Bits used by `len` characters of `mode` data (excluding headers).
pub fn data_bit_len(mode: Mode, len: usize) -> usize {
    match mode {
        Mode::Numeric => 10 * (len / 3) + [0, 4, 7][len % 3],
        Mode::Alphanumeric => 11 * (len / 2) + 6 * (len % 2),
        Mode::Byte => 8 * len,
    }
}

/// Largest payload length of `mode` that fits, or 0 when the mode is
/// unavailable.
pub fn capacity(version: Version, ec: EcLevel, mode: Mode) -> usize {
    let (Some(params), Some(cc)) = (lookup(version, ec), count_bits(version, mode)) else {
        return 0;
    };
    let header = mode_indicator_bits(version) + cc;
    let max_count = (1usize << cc) - 1;
    (0..=max_count).rev().find(|&n| header + data_bit_len(mode, n) <= params.data_bits).unwrap_or(0)
}
