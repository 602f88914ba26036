//! Module geometry: function patterns, codeword placement, data masks and
//! format information.

use super::SymbolMatrix;

const FORMAT_GENERATOR: u32 = 0x537;
const FORMAT_XOR: u32 = 0x4445;

/// True for modules reserved by the finder, separator, timing patterns or
/// format information.
pub fn is_function(row: usize, col: usize) -> bool {
    (row < 8 && col < 8) || row == 0 || col == 0 || (row == 8 && col <= 8) || (col == 8 && row <= 8)
}

/// Draws finder, separator and timing patterns into an all-light matrix.
pub fn draw_function_patterns(m: &mut SymbolMatrix) {
    let side = m.side();
    for r in 0..7 {
        for c in 0..7 {
            let ring = r.min(c).min(6 - r).min(6 - c);
            m.set(r, c, ring != 1);
        }
    }
    for i in 8..side {
        m.set(0, i, i % 2 == 0);
        m.set(i, 0, i % 2 == 0);
    }
}

/// Data module coordinates in placement order: two-column strips from the
/// right edge, starting upward and alternating direction.
pub fn data_positions(side: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut upward = true;
    let mut right = side - 1;
    while right >= 1 {
        for step in 0..side {
            let row = if upward { side - 1 - step } else { step };
            for col in [right, right - 1] {
                if !is_function(row, col) {
                    out.push((row, col));
                }
            }
        }
        upward = !upward;
        if right < 2 {
            break;
        }
        right -= 2;
    }
    out
}

pub fn mask_bit(mask: u8, row: usize, col: usize) -> bool {
    match mask {
        0 => row.is_multiple_of(2),
        1 => (row / 2 + col / 3).is_multiple_of(2),
        2 => ((row * col) % 2 + (row * col) % 3).is_multiple_of(2),
        3 => ((row + col) % 2 + (row * col) % 3).is_multiple_of(2),
        _ => unreachable!("mask index out of range"),
    }
}

pub fn apply_mask(m: &mut SymbolMatrix, mask: u8) {
    let side = m.side();
    for r in 0..side {
        for c in 0..side {
            if !is_function(r, c) && mask_bit(mask, r, c) {
                let v = m.get(r, c);
                m.set(r, c, !v);
            }
        }
    }
}

/// Dark-module score of the right and bottom edges; larger is better.
pub fn mask_score(m: &SymbolMatrix) -> u32 {
    let side = m.side();
    let right = (1..side).filter(|&r| m.get(r, side - 1)).count() as u32;
    let bottom = (1..side).filter(|&c| m.get(side - 1, c)).count() as u32;
    if right <= bottom {
        right * 16 + bottom
    } else {
        bottom * 16 + right
    }
}

/// 15-bit masked format word for a symbol number and data mask.
pub fn format_bits(symbol_number: u8, mask: u8) -> u32 {
    let data = ((symbol_number as u32) << 2) | mask as u32;
    let mut rem = data << 10;
    for bit in (10..15).rev() {
        if rem & (1 << bit) != 0 {
            rem ^= FORMAT_GENERATOR << (bit - 10);
        }
    }
    ((data << 10) | rem) ^ FORMAT_XOR
}

/// Positions of format bits 0..14: bits 0..7 run down column 8 from row 1,
/// bits 8..14 run left along row 8 from column 7.
pub fn format_positions() -> [(usize, usize); 15] {
    let mut pos = [(0, 0); 15];
    for (i, p) in pos.iter_mut().enumerate() {
        *p = if i < 8 { (i + 1, 8) } else { (8, 15 - i) };
    }
    pos
}

pub fn draw_format(m: &mut SymbolMatrix, bits: u32) {
    for (i, (r, c)) in format_positions().into_iter().enumerate() {
        m.set(r, c, (bits >> i) & 1 != 0);
    }
}

pub fn read_format(m: &SymbolMatrix) -> u32 {
    format_positions().into_iter().enumerate().fold(0, |acc, (i, (r, c))| acc | ((m.get(r, c) as u32) << i))
}

/// Nearest valid (symbol number, mask) within Hamming distance 3.
pub fn decode_format(raw: u32) -> Option<(u8, u8)> {
    let mut best: Option<(u32, u8, u8)> = None;
    for sym in 0..8u8 {
        for mask in 0..4u8 {
            let dist = (format_bits(sym, mask) ^ raw).count_ones();
            if best.is_none_or(|(d, _, _)| dist < d) {
                best = Some((dist, sym, mask));
            }
        }
    }
    best.filter(|&(d, _, _)| d <= 3).map(|(_, s, m)| (s, m))
}
