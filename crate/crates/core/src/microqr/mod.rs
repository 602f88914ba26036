//! Micro QR symbology (versions M1–M4) at the module-grid level.
//!
//! [`encode`] turns a [`Payload`] into a [`SymbolMatrix`]; [`decode`] reads
//! format information, unmasks, runs Reed–Solomon correction and parses the
//! bitstream. Kanji mode, ECI and structured append are not supported.

mod bits;
pub mod gf256;
mod layout;
pub mod rs;
pub mod tables;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use rs::{rs_decode, rs_decode_bounded, rs_encode, RsCorrection, RsError};
pub use tables::SymbolParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Version {
    M1,
    M2,
    M3,
    M4,
}

impl Version {
    pub const ALL: [Version; 4] = [Version::M1, Version::M2, Version::M3, Version::M4];

    /// 1 for M1 through 4 for M4.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    /// Modules per side: 11, 13, 15 or 17.
    pub fn side(self) -> usize {
        9 + 2 * self.index()
    }

    pub fn from_side(side: usize) -> Option<Version> {
        Version::ALL.into_iter().find(|v| v.side() == side)
    }

    /// Error correction levels defined for this version.
    pub fn ec_levels(self) -> &'static [EcLevel] {
        match self {
            Version::M1 => &[EcLevel::DetectOnly],
            Version::M2 | Version::M3 => &[EcLevel::L, EcLevel::M],
            Version::M4 => &[EcLevel::L, EcLevel::M, EcLevel::Q],
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.index())
    }
}

impl FromStr for Version {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(Version::M1),
            "M2" => Ok(Version::M2),
            "M3" => Ok(Version::M3),
            "M4" => Ok(Version::M4),
            _ => Err(CodecError::InvalidPayload(format!("unknown version {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EcLevel {
    DetectOnly,
    L,
    M,
    Q,
}

impl FromStr for EcLevel {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DETECTONLY" | "D" | "-" => Ok(EcLevel::DetectOnly),
            "L" => Ok(EcLevel::L),
            "M" => Ok(EcLevel::M),
            "Q" => Ok(EcLevel::Q),
            _ => Err(CodecError::InvalidPayload(format!("unknown error correction level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Numeric,
    Alphanumeric,
    Byte,
}

impl FromStr for Mode {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "numeric" => Ok(Mode::Numeric),
            "alphanumeric" | "alnum" => Ok(Mode::Alphanumeric),
            "byte" => Ok(Mode::Byte),
            _ => Err(CodecError::InvalidPayload(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("payload needs {needed_bits} bits but the symbol holds {available_bits}")]
    CapacityExceeded { needed_bits: usize, available_bits: usize },
    #[error("error correction level {ec:?} is not available for {version}")]
    InvalidCombination { version: Version, ec: EcLevel },
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("mask {0} out of range 0..=3")]
    InvalidMask(u8),
    #[error("side {0} is not a Micro QR size")]
    InvalidSide(usize),
    #[error("format information unreadable")]
    FormatInfoUnreadable,
    #[error("codewords exceed the correction capacity")]
    UncorrectableCodeword,
    #[error("corrected codewords fail verification")]
    ChecksumMismatch,
    #[error("malformed data bitstream: {0}")]
    MalformedData(&'static str),
}

/// Data to place in a symbol, tagged with its encoding mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Payload {
    mode: Mode,
    data: Vec<u8>,
}

impl Payload {
    pub fn new(mode: Mode, data: impl Into<Vec<u8>>) -> Result<Self, CodecError> {
        let data = data.into();
        if data.is_empty() {
            return Err(CodecError::InvalidPayload("empty payload".into()));
        }
        let ok = match mode {
            Mode::Numeric => data.iter().all(u8::is_ascii_digit),
            Mode::Alphanumeric => data.iter().all(|&c| tables::alphanumeric_value(c).is_some()),
            Mode::Byte => true,
        };
        if !ok {
            return Err(CodecError::InvalidPayload(format!("characters outside the {mode:?} set")));
        }
        Ok(Self { mode, data })
    }

    /// Picks the most compact mode that can carry `data`.
    pub fn auto(data: impl Into<Vec<u8>>) -> Result<Self, CodecError> {
        let data = data.into();
        let mode = if data.iter().all(u8::is_ascii_digit) {
            Mode::Numeric
        } else if data.iter().all(|&c| tables::alphanumeric_value(c).is_some()) {
            Mode::Alphanumeric
        } else {
            Mode::Byte
        };
        Self::new(mode, data)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Smallest (version, level) pair, in the order M1, M2-L, M2-M, ...,
    /// that holds this payload.
    pub fn smallest_fit(&self) -> Option<(Version, EcLevel)> {
        tables::SYMBOLS
            .iter()
            .find(|s| self.data.len() <= tables::capacity(s.version, s.ec, self.mode))
            .map(|s| (s.version, s.ec))
    }
}

/// Square module grid; `true` is dark.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolMatrix {
    side: usize,
    modules: Vec<bool>,
}

impl SymbolMatrix {
    /// All-light grid of a Micro QR size.
    pub fn new(side: usize) -> Result<Self, CodecError> {
        Version::from_side(side).ok_or(CodecError::InvalidSide(side))?;
        Ok(Self { side, modules: vec![false; side * side] })
    }

    pub fn from_modules(side: usize, modules: Vec<bool>) -> Result<Self, CodecError> {
        Version::from_side(side).ok_or(CodecError::InvalidSide(side))?;
        if modules.len() != side * side {
            return Err(CodecError::InvalidSide(side));
        }
        Ok(Self { side, modules })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn version(&self) -> Version {
        Version::from_side(self.side).expect("side validated on construction")
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.modules[row * self.side + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, dark: bool) {
        self.modules[row * self.side + col] = dark;
    }

    pub fn modules(&self) -> &[bool] {
        &self.modules
    }

    /// Text exchange form: the side on the first line, then one line of
    /// `0`/`1` per row (dark = 1).
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.side);
        for r in 0..self.side {
            s.extend((0..self.side).map(|c| if self.get(r, c) { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CodecError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let side: usize = lines
            .next()
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| CodecError::InvalidPayload("missing side line".into()))?;
        let mut modules = Vec::with_capacity(side * side);
        for _ in 0..side {
            let row = lines.next().ok_or_else(|| CodecError::InvalidPayload("missing row".into()))?;
            if row.len() != side {
                return Err(CodecError::InvalidPayload(format!("row length {} != {side}", row.len())));
            }
            for ch in row.chars() {
                modules.push(match ch {
                    '0' => false,
                    '1' => true,
                    _ => return Err(CodecError::InvalidPayload(format!("bad module {ch:?}"))),
                });
            }
        }
        Self::from_modules(side, modules)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedPayload {
    pub text: Vec<u8>,
    pub mode: Mode,
    pub version: Version,
    pub ec: EcLevel,
    pub mask: u8,
    pub corrected_errors: usize,
}

impl DecodedPayload {
    pub fn text_lossy(&self) -> String {
        String::from_utf8_lossy(&self.text).into_owned()
    }
}

pub fn params(version: Version, ec: EcLevel) -> Result<&'static SymbolParams, CodecError> {
    tables::lookup(version, ec).ok_or(CodecError::InvalidCombination { version, ec })
}

/// Data codewords followed by parity, as placed in the symbol.
pub fn encode_codewords(payload: &Payload, version: Version, ec: EcLevel) -> Result<Vec<u8>, CodecError> {
    let params = params(version, ec)?;
    if tables::count_bits(version, payload.mode).is_none() {
        return Err(CodecError::InvalidPayload(format!("{:?} mode is not available in {version}", payload.mode)));
    }
    if payload.data.len() > tables::capacity(version, ec, payload.mode) {
        let cc = tables::count_bits(version, payload.mode).unwrap_or(0);
        return Err(CodecError::CapacityExceeded {
            needed_bits: tables::mode_indicator_bits(version)
                + cc
                + tables::data_bit_len(payload.mode, payload.data.len()),
            available_bits: params.data_bits,
        });
    }
    let mut codewords = bits::build_data_codewords(payload.mode, &payload.data, params)?;
    let parity = rs_encode(&codewords, params.ec_codewords()).expect("Micro QR block lengths are valid");
    codewords.extend(parity);
    Ok(codewords)
}

/// Module coordinates of every codeword, in codeword order. The final data
/// codeword of M1 and M3 spans 4 modules; all others span 8.
pub fn codeword_positions(version: Version, ec: EcLevel) -> Result<Vec<Vec<(usize, usize)>>, CodecError> {
    let params = params(version, ec)?;
    let mut pos = layout::data_positions(version.side()).into_iter();
    let out = (0..params.total_codewords)
        .map(|i| {
            let len = codeword_bit_len(params, i);
            pos.by_ref().take(len).collect()
        })
        .collect();
    Ok(out)
}

fn codeword_bit_len(params: &SymbolParams, index: usize) -> usize {
    if params.has_half_codeword() && index + 1 == params.data_codewords {
        4
    } else {
        8
    }
}

fn place_codewords(m: &mut SymbolMatrix, params: &SymbolParams, codewords: &[u8]) {
    let positions = layout::data_positions(m.side());
    let mut it = positions.into_iter();
    for (i, &cw) in codewords.iter().enumerate() {
        for b in 0..codeword_bit_len(params, i) {
            let (r, c) = it.next().expect("module budget matches codewords");
            m.set(r, c, (cw >> (7 - b)) & 1 != 0);
        }
    }
}

fn read_codewords(m: &SymbolMatrix, params: &SymbolParams) -> Vec<u8> {
    let positions = layout::data_positions(m.side());
    let mut it = positions.into_iter();
    (0..params.total_codewords)
        .map(|i| {
            let mut cw = 0u8;
            for b in 0..codeword_bit_len(params, i) {
                let (r, c) = it.next().expect("module budget matches codewords");
                if m.get(r, c) {
                    cw |= 1 << (7 - b);
                }
            }
            cw
        })
        .collect()
}

/// Builds a symbol. Without an explicit mask, the mask with the highest
/// edge score wins; ties go to the lowest index.
pub fn encode(payload: &Payload, version: Version, ec: EcLevel, mask: Option<u8>) -> Result<SymbolMatrix, CodecError> {
    if let Some(m) = mask {
        if m > 3 {
            return Err(CodecError::InvalidMask(m));
        }
    }
    let params = params(version, ec)?;
    let codewords = encode_codewords(payload, version, ec)?;
    let mut base = SymbolMatrix::new(version.side())?;
    layout::draw_function_patterns(&mut base);
    place_codewords(&mut base, params, &codewords);

    let build = |mask: u8| {
        let mut m = base.clone();
        layout::apply_mask(&mut m, mask);
        layout::draw_format(&mut m, layout::format_bits(params.symbol_number, mask));
        m
    };
    match mask {
        Some(m) => Ok(build(m)),
        None => {
            let mut best: Option<(u32, SymbolMatrix)> = None;
            for m in 0..4 {
                let candidate = build(m);
                let score = layout::mask_score(&candidate);
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, candidate));
                }
            }
            Ok(best.expect("four masks evaluated").1)
        }
    }
}

/// Reads a symbol back into its payload.
pub fn decode(symbol: &SymbolMatrix) -> Result<DecodedPayload, CodecError> {
    let side = symbol.side();
    let version = Version::from_side(side).ok_or(CodecError::InvalidSide(side))?;
    let (symbol_number, mask) =
        layout::decode_format(layout::read_format(symbol)).ok_or(CodecError::FormatInfoUnreadable)?;
    let params = tables::by_symbol_number(symbol_number).ok_or(CodecError::FormatInfoUnreadable)?;
    if params.version != version {
        return Err(CodecError::FormatInfoUnreadable);
    }
    let mut unmasked = symbol.clone();
    layout::apply_mask(&mut unmasked, mask);
    let codewords = read_codewords(&unmasked, params);
    let corrected = rs_decode_bounded(&codewords, params.ec_codewords(), params.correctable)
        .map_err(|_| CodecError::UncorrectableCodeword)?;
    if params.has_half_codeword() && corrected.data[params.data_codewords - 1] & 0x0f != 0 {
        // correction touched bits that have no module
        return Err(CodecError::ChecksumMismatch);
    }
    let (mode, text) = bits::parse_data_codewords(&corrected.data, params)?;
    Ok(DecodedPayload {
        text,
        mode,
        version,
        ec: params.ec,
        mask,
        corrected_errors: corrected.corrected_positions.len(),
    })
}
