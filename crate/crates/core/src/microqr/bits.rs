//! Data segment bitstream assembly and parsing.

use super::tables::{self, SymbolParams};
use super::{CodecError, Mode};

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bits: Vec<bool>,
}

impl BitWriter {
    pub fn push(&mut self, value: u32, len: usize) {
        for i in (0..len).rev() {
            self.bits.push((value >> i) & 1 != 0);
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }
}

pub struct BitReader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a [bool]) -> Self {
        Self { bits, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn read(&mut self, len: usize) -> Option<u32> {
        if len > self.remaining() {
            return None;
        }
        let v = self.bits[self.pos..self.pos + len].iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        self.pos += len;
        Some(v)
    }

    pub fn peek_all_zero(&self, len: usize) -> bool {
        self.bits[self.pos..self.pos + len.min(self.remaining())].iter().all(|&b| !b)
    }
}

/// Encodes one segment and pads it to the full data codeword sequence.
/// The last codeword of M1/M3 carries its 4 bits in the high nibble.
pub fn build_data_codewords(mode: Mode, data: &[u8], params: &SymbolParams) -> Result<Vec<u8>, CodecError> {
    let version = params.version;
    let cc = tables::count_bits(version, mode).ok_or(CodecError::InvalidCombination { version, ec: params.ec })?;
    let mut w = BitWriter::default();
    w.push(tables::mode_indicator(mode), tables::mode_indicator_bits(version));
    w.push(data.len() as u32, cc);
    match mode {
        Mode::Numeric => {
            for chunk in data.chunks(3) {
                let v = chunk.iter().fold(0u32, |acc, &d| acc * 10 + (d - b'0') as u32);
                w.push(v, [0, 4, 7, 10][chunk.len()]);
            }
        }
        Mode::Alphanumeric => {
            for chunk in data.chunks(2) {
                let vals: Vec<u32> = chunk.iter().map(|&c| tables::alphanumeric_value(c).unwrap()).collect();
                match vals.as_slice() {
                    [a, b] => w.push(a * 45 + b, 11),
                    [a] => w.push(*a, 6),
                    _ => unreachable!(),
                }
            }
        }
        Mode::Byte => {
            for &b in data {
                w.push(b as u32, 8);
            }
        }
    }
    let capacity = params.data_bits;
    if w.len() > capacity {
        return Err(CodecError::CapacityExceeded { needed_bits: w.len(), available_bits: capacity });
    }
    let term = tables::terminator_bits(version).min(capacity - w.len());
    w.push(0, term);
    let mut bits = w.into_bits();

    let full_bytes = capacity / 8;
    // zero-fill to the codeword boundary; a trailing half codeword is zero-filled too
    let boundary = if bits.len() > full_bytes * 8 { capacity } else { bits.len().div_ceil(8) * 8 };
    bits.resize(boundary, false);

    let mut out: Vec<u8> =
        bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))).collect();
    let mut pad = [0xEC, 0x11].into_iter().cycle();
    while out.len() < full_bytes {
        out.push(pad.next().unwrap());
    }
    if params.has_half_codeword() && out.len() < params.data_codewords {
        out.push(0);
    }
    debug_assert_eq!(out.len(), params.data_codewords);
    Ok(out)
}

/// Parses the data codewords back into (mode of first segment, bytes).
pub fn parse_data_codewords(codewords: &[u8], params: &SymbolParams) -> Result<(Mode, Vec<u8>), CodecError> {
    let mut bits = Vec::with_capacity(params.data_bits);
    for (i, &cw) in codewords.iter().enumerate() {
        let len = if params.has_half_codeword() && i + 1 == params.data_codewords { 4 } else { 8 };
        for b in 0..len {
            bits.push((cw >> (7 - b)) & 1 != 0);
        }
    }
    let version = params.version;
    let mut r = BitReader::new(&bits);
    let mut text = Vec::new();
    let mut first_mode = None;
    let term = tables::terminator_bits(version);
    loop {
        // numeric mode plus a zero count spans exactly the terminator, so a
        // zero run (possibly truncated) ends the stream
        if r.remaining() == 0 || r.peek_all_zero(term) {
            break;
        }
        let mode_bits = tables::mode_indicator_bits(version);
        let indicator = r.read(mode_bits).ok_or(CodecError::MalformedData("truncated mode indicator"))?;
        let mode = tables::mode_from_indicator(indicator).ok_or(CodecError::MalformedData("unsupported mode"))?;
        let cc = tables::count_bits(version, mode).ok_or(CodecError::MalformedData("mode not allowed"))?;
        let count = r.read(cc).ok_or(CodecError::MalformedData("truncated count"))? as usize;
        if count == 0 {
            return Err(CodecError::MalformedData("empty segment"));
        }
        match mode {
            Mode::Numeric => {
                let mut left = count;
                while left > 0 {
                    let n = left.min(3);
                    let v = r.read([0, 4, 7, 10][n]).ok_or(CodecError::MalformedData("truncated numeric"))?;
                    if v >= [1, 10, 100, 1000][n] {
                        return Err(CodecError::MalformedData("numeric group out of range"));
                    }
                    let digits = format!("{:0width$}", v, width = n);
                    text.extend_from_slice(digits.as_bytes());
                    left -= n;
                }
            }
            Mode::Alphanumeric => {
                let mut left = count;
                while left > 0 {
                    if left >= 2 {
                        let v = r.read(11).ok_or(CodecError::MalformedData("truncated alphanumeric"))?;
                        if v >= 45 * 45 {
                            return Err(CodecError::MalformedData("alphanumeric pair out of range"));
                        }
                        text.push(tables::ALPHANUMERIC[(v / 45) as usize]);
                        text.push(tables::ALPHANUMERIC[(v % 45) as usize]);
                        left -= 2;
                    } else {
                        let v = r.read(6).ok_or(CodecError::MalformedData("truncated alphanumeric"))?;
                        if v >= 45 {
                            return Err(CodecError::MalformedData("alphanumeric value out of range"));
                        }
                        text.push(tables::ALPHANUMERIC[v as usize]);
                        left -= 1;
                    }
                }
            }
            Mode::Byte => {
                for _ in 0..count {
                    text.push(r.read(8).ok_or(CodecError::MalformedData("truncated byte data"))? as u8);
                }
            }
        }
        first_mode.get_or_insert(mode);
    }
    let mode = first_mode.ok_or(CodecError::MalformedData("no data segment"))?;
    Ok((mode, text))
}
