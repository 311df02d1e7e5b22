//! QR-style visual channel.
//!
//! Frames are built the way a QR symbol's codeword sequence is: a mode
//! indicator, a character count, the packed data bits, terminator and pad
//! codewords, then Reed–Solomon parity computed per the standard block table.
//! The optical path is replaced by a corruption model at codeword granularity:
//! a frame decodes iff at most `floor(parity / 2)` codewords are corrupted.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::rng::seeded;

pub const MIN_VERSION: u8 = 1;
pub const MAX_VERSION: u8 = 10;

const ALNUM_CHARSET: &[u8; 45] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:";

// Per-version block tables from the QR standard, indexed [ec level][version].
// Index 0 is unused.
const ECC_CODEWORDS_PER_BLOCK: [[u8; 41]; 4] = [
    [
        0, 7, 10, 15, 20, 26, 18, 20, 24, 30, 18, 20, 24, 26, 30, 22, 24, 28, 30, 28, 28, 28, 28, 30, 30, 26, 28, 30,
        30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30,
    ],
    [
        0, 10, 16, 26, 18, 24, 16, 18, 22, 22, 26, 30, 22, 22, 24, 24, 28, 28, 26, 26, 26, 26, 28, 28, 28, 28, 28, 28,
        28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28,
    ],
    [
        0, 13, 22, 18, 26, 18, 24, 18, 22, 20, 24, 28, 26, 24, 20, 30, 24, 28, 28, 26, 30, 28, 30, 30, 30, 30, 28, 30,
        30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30,
    ],
    [
        0, 17, 28, 22, 16, 22, 28, 26, 26, 24, 28, 24, 28, 22, 24, 24, 30, 28, 28, 26, 28, 30, 24, 30, 30, 30, 30, 30,
        30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30,
    ],
];

const NUM_BLOCKS: [[u8; 41]; 4] = [
    [
        0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 4, 4, 4, 4, 4, 6, 6, 6, 6, 7, 8, 8, 9, 9, 10, 12, 12, 12, 13, 14, 15, 16, 17, 18,
        19, 19, 20, 21, 22, 24, 25,
    ],
    [
        0, 1, 1, 1, 2, 2, 4, 4, 4, 5, 5, 5, 8, 9, 9, 10, 10, 11, 13, 14, 16, 17, 17, 18, 20, 21, 23, 25, 26, 28, 29,
        31, 33, 35, 37, 38, 40, 43, 45, 47, 49,
    ],
    [
        0, 1, 1, 2, 2, 4, 4, 6, 6, 8, 8, 8, 10, 12, 16, 12, 17, 16, 18, 21, 20, 23, 23, 25, 27, 29, 34, 34, 35, 38, 40,
        43, 45, 48, 51, 53, 56, 59, 62, 65, 68,
    ],
    [
        0, 1, 1, 2, 4, 4, 4, 5, 6, 8, 8, 11, 11, 16, 16, 18, 16, 19, 21, 25, 25, 25, 34, 30, 32, 35, 37, 40, 42, 45,
        48, 51, 54, 57, 60, 63, 66, 70, 74, 77, 81,
    ],
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VisualError {
    #[error("version {0} outside supported range {MIN_VERSION}..={MAX_VERSION}")]
    InvalidVersion(u8),
    #[error("{len} symbols do not fit {spec}; smallest fitting version: {}", required_version.map_or("none up to 10".to_string(), |v| v.to_string()))]
    CapacityExceeded {
        len: usize,
        spec: FrameSpec,
        required_version: Option<u8>,
    },
    #[error("{len} symbols exceed the largest QR symbol's {max} {mode} capacity")]
    ExceedsGlobalMaximum { len: usize, mode: Mode, max: usize },
    #[error("byte {byte:#04x} cannot be carried in {mode} mode")]
    InvalidCharacter { byte: u8, mode: Mode },
    #[error("cannot corrupt {count} of {total} codewords")]
    CorruptionExceedsCodewords { count: usize, total: usize },
    #[error("{corrupted} corrupted codewords exceed the correction budget of {budget}")]
    Uncorrectable { corrupted: usize, budget: usize },
    #[error("codewords are inconsistent with the frame's error-correction data")]
    Inconsistent,
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    #[error("bad frame dump: {0}")]
    Dump(String),
}

impl VisualError {
    pub fn is_capacity_error(&self) -> bool {
        matches!(
            self,
            VisualError::CapacityExceeded { .. } | VisualError::ExceedsGlobalMaximum { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EcLevel {
    L,
    M,
    Q,
    H,
}

impl EcLevel {
    pub const ALL: [EcLevel; 4] = [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H];

    fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EcLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EcLevel::L => "L",
            EcLevel::M => "M",
            EcLevel::Q => "Q",
            EcLevel::H => "H",
        };
        f.write_str(s)
    }
}

impl FromStr for EcLevel {
    type Err = VisualError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L" => Ok(EcLevel::L),
            "M" => Ok(EcLevel::M),
            "Q" => Ok(EcLevel::Q),
            "H" => Ok(EcLevel::H),
            _ => Err(VisualError::Dump(format!("unknown error-correction level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Numeric,
    Alphanumeric,
    Byte,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Numeric, Mode::Alphanumeric, Mode::Byte];

    fn indicator(self) -> u32 {
        match self {
            Mode::Numeric => 0b0001,
            Mode::Alphanumeric => 0b0010,
            Mode::Byte => 0b0100,
        }
    }

    fn count_bits(self, version: u8) -> usize {
        let tier = match version {
            1..=9 => 0,
            10..=26 => 1,
            _ => 2,
        };
        match self {
            Mode::Numeric => [10, 12, 14][tier],
            Mode::Alphanumeric => [9, 11, 13][tier],
            Mode::Byte => [8, 16, 16][tier],
        }
    }

    fn data_bits(self, chars: usize) -> usize {
        match self {
            Mode::Numeric => 10 * (chars / 3) + [0, 4, 7][chars % 3],
            Mode::Alphanumeric => 11 * (chars / 2) + 6 * (chars % 2),
            Mode::Byte => 8 * chars,
        }
    }

    fn accepts(self, byte: u8) -> bool {
        match self {
            Mode::Numeric => byte.is_ascii_digit(),
            Mode::Alphanumeric => ALNUM_CHARSET.contains(&byte),
            Mode::Byte => true,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Numeric => "numeric",
            Mode::Alphanumeric => "alphanumeric",
            Mode::Byte => "byte",
        };
        f.write_str(s)
    }
}

impl FromStr for Mode {
    type Err = VisualError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numeric" => Ok(Mode::Numeric),
            "alphanumeric" => Ok(Mode::Alphanumeric),
            "byte" => Ok(Mode::Byte),
            _ => Err(VisualError::Dump(format!("unknown mode {s:?}"))),
        }
    }
}

fn raw_data_modules(version: u8) -> usize {
    let v = version as usize;
    let mut result = (16 * v + 128) * v + 64;
    if v >= 2 {
        let num_align = v / 7 + 2;
        result -= (25 * num_align - 10) * num_align - 55;
        if v >= 7 {
            result -= 36;
        }
    }
    result
}

fn total_codewords_any(version: u8) -> usize {
    raw_data_modules(version) / 8
}

fn parity_codewords_any(version: u8, ec: EcLevel) -> usize {
    ECC_CODEWORDS_PER_BLOCK[ec.ordinal()][version as usize] as usize
        * NUM_BLOCKS[ec.ordinal()][version as usize] as usize
}

fn data_codewords_any(version: u8, ec: EcLevel) -> usize {
    total_codewords_any(version) - parity_codewords_any(version, ec)
}

fn capacity_any(version: u8, ec: EcLevel, mode: Mode) -> usize {
    let available = data_codewords_any(version, ec) * 8;
    let overhead = 4 + mode.count_bits(version);
    if available < overhead {
        return 0;
    }
    let budget = available - overhead;
    // data_bits is monotone, so the largest fitting count is found by stepping
    // down from an upper bound.
    let mut chars = match mode {
        Mode::Numeric => budget * 3 / 10 + 1,
        Mode::Alphanumeric => budget * 2 / 11 + 1,
        Mode::Byte => budget / 8 + 1,
    };
    while chars > 0 && mode.data_bits(chars) > budget {
        chars -= 1;
    }
    chars.min((1usize << mode.count_bits(version)) - 1)
}

/// Largest symbol count any QR symbol (version 40, level L) carries in `mode`.
pub fn global_capacity(mode: Mode) -> usize {
    capacity_any(40, EcLevel::L, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameSpec {
    version: u8,
    pub ec_level: EcLevel,
    pub mode: Mode,
}

impl fmt::Display for FrameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{} {}", self.version, self.ec_level, self.mode)
    }
}

impl FrameSpec {
    pub fn new(version: u8, ec_level: EcLevel, mode: Mode) -> Result<Self, VisualError> {
        if !(MIN_VERSION..=MAX_VERSION).contains(&version) {
            return Err(VisualError::InvalidVersion(version));
        }
        Ok(Self {
            version,
            ec_level,
            mode,
        })
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    /// Maximum number of symbols (digits, characters or bytes) in this spec.
    pub fn capacity(&self) -> usize {
        capacity_any(self.version, self.ec_level, self.mode)
    }

    pub fn total_codewords(&self) -> usize {
        total_codewords_any(self.version)
    }

    pub fn data_codewords(&self) -> usize {
        data_codewords_any(self.version, self.ec_level)
    }

    pub fn parity_codewords(&self) -> usize {
        parity_codewords_any(self.version, self.ec_level)
    }

    pub fn correction_budget(&self) -> usize {
        self.parity_codewords() / 2
    }

    /// Side length of the symbol in modules.
    pub fn module_side(&self) -> usize {
        17 + 4 * self.version as usize
    }

    pub fn module_count(&self) -> usize {
        self.module_side() * self.module_side()
    }

    /// Smallest version at `ec_level`/`mode`, not below `min_version`, holding `len` symbols.
    pub fn smallest_fitting(len: usize, ec_level: EcLevel, mode: Mode, min_version: u8) -> Option<FrameSpec> {
        (min_version.max(MIN_VERSION)..=MAX_VERSION)
            .map(|version| FrameSpec {
                version,
                ec_level,
                mode,
            })
            .find(|spec| spec.capacity() >= len)
    }

    fn blocks(&self) -> Vec<(usize, usize)> {
        // (data offset, data length) per block; short blocks come first.
        let num_blocks = NUM_BLOCKS[self.ec_level.ordinal()][self.version as usize] as usize;
        let ecc_len = ECC_CODEWORDS_PER_BLOCK[self.ec_level.ordinal()][self.version as usize] as usize;
        let raw = self.total_codewords();
        let num_short = num_blocks - raw % num_blocks;
        let short_len = raw / num_blocks;
        let mut out = Vec::with_capacity(num_blocks);
        let mut offset = 0;
        for i in 0..num_blocks {
            let len = short_len - ecc_len + usize::from(i >= num_short);
            out.push((offset, len));
            offset += len;
        }
        out
    }

    fn ecc_per_block(&self) -> usize {
        ECC_CODEWORDS_PER_BLOCK[self.ec_level.ordinal()][self.version as usize] as usize
    }
}

/// Published character capacities, versions 1–10, plus the global maxima row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityTable {
    entries: Vec<(FrameSpec, usize)>,
    pub global_numeric: usize,
    pub global_alphanumeric: usize,
    pub global_byte: usize,
}

impl CapacityTable {
    pub fn standard() -> Self {
        let mut entries = Vec::new();
        for version in MIN_VERSION..=MAX_VERSION {
            for ec in EcLevel::ALL {
                for mode in Mode::ALL {
                    let spec = FrameSpec {
                        version,
                        ec_level: ec,
                        mode,
                    };
                    entries.push((spec, spec.capacity()));
                }
            }
        }
        Self {
            entries,
            global_numeric: global_capacity(Mode::Numeric),
            global_alphanumeric: global_capacity(Mode::Alphanumeric),
            global_byte: global_capacity(Mode::Byte),
        }
    }

    pub fn get(&self, version: u8, ec: EcLevel, mode: Mode) -> Option<usize> {
        self.entries
            .iter()
            .find(|(s, _)| s.version == version && s.ec_level == ec && s.mode == mode)
            .map(|&(_, c)| c)
    }

    pub fn global(&self, mode: Mode) -> usize {
        match mode {
            Mode::Numeric => self.global_numeric,
            Mode::Alphanumeric => self.global_alphanumeric,
            Mode::Byte => self.global_byte,
        }
    }

    pub fn entries(&self) -> &[(FrameSpec, usize)] {
        &self.entries
    }
}

// ---------------------------------------------------------------------------
// Reed–Solomon parity over GF(2^8) / 0x11D
// ---------------------------------------------------------------------------

fn gf_mul(x: u8, y: u8) -> u8 {
    let mut z: u8 = 0;
    for i in (0..8).rev() {
        z = (z << 1) ^ ((z >> 7) * 0x1D);
        z ^= ((y >> i) & 1) * x;
    }
    z
}

fn rs_divisor(degree: usize) -> Vec<u8> {
    let mut result = vec![0u8; degree - 1];
    result.push(1);
    let mut root: u8 = 1;
    for _ in 0..degree {
        for j in 0..degree {
            result[j] = gf_mul(result[j], root);
            if j + 1 < result.len() {
                result[j] ^= result[j + 1];
            }
        }
        root = gf_mul(root, 0x02);
    }
    result
}

fn rs_remainder(data: &[u8], divisor: &[u8]) -> Vec<u8> {
    let mut result = vec![0u8; divisor.len()];
    for &b in data {
        let factor = b ^ result.remove(0);
        result.push(0);
        for (x, &y) in result.iter_mut().zip(divisor) {
            *x ^= gf_mul(y, factor);
        }
    }
    result
}

fn parity_for(spec: &FrameSpec, data: &[u8]) -> Vec<u8> {
    let divisor = rs_divisor(spec.ecc_per_block());
    spec.blocks()
        .into_iter()
        .flat_map(|(offset, len)| rs_remainder(&data[offset..offset + len], &divisor))
        .collect()
}

// ---------------------------------------------------------------------------
// Bit packing
// ---------------------------------------------------------------------------

#[derive(Default)]
struct BitWriter {
    bits: Vec<bool>,
}

impl BitWriter {
    fn push(&mut self, value: u32, width: usize) {
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    fn into_codewords(mut self, data_codewords: usize) -> Vec<u8> {
        let capacity_bits = data_codewords * 8;
        let terminator = (capacity_bits - self.bits.len()).min(4);
        self.push(0, terminator);
        let pad = (8 - self.bits.len() % 8) % 8;
        self.push(0, pad);
        let mut out: Vec<u8> = self
            .bits
            .chunks(8)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b)))
            .collect();
        let mut filler = [0xEC, 0x11].into_iter().cycle();
        while out.len() < data_codewords {
            out.push(filler.next().expect("cycle is infinite"));
        }
        out
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn read(&mut self, width: usize) -> Result<u32, VisualError> {
        if self.pos + width > self.bytes.len() * 8 {
            return Err(VisualError::Malformed("segment runs past the data codewords"));
        }
        let mut v = 0u32;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | u32::from(bit);
            self.pos += 1;
        }
        Ok(v)
    }
}

fn encode_segment(payload: &[u8], spec: &FrameSpec) -> Vec<u8> {
    let mut w = BitWriter::default();
    w.push(spec.mode.indicator(), 4);
    w.push(payload.len() as u32, spec.mode.count_bits(spec.version));
    match spec.mode {
        Mode::Numeric => {
            for chunk in payload.chunks(3) {
                let value = chunk.iter().fold(0u32, |acc, &d| acc * 10 + u32::from(d - b'0'));
                w.push(value, chunk.len() * 3 + 1);
            }
        }
        Mode::Alphanumeric => {
            let index = |b: u8| {
                ALNUM_CHARSET
                    .iter()
                    .position(|&c| c == b)
                    .expect("validated before encoding") as u32
            };
            for chunk in payload.chunks(2) {
                match *chunk {
                    [a, b] => w.push(index(a) * 45 + index(b), 11),
                    [a] => w.push(index(a), 6),
                    _ => unreachable!(),
                }
            }
        }
        Mode::Byte => {
            for &b in payload {
                w.push(u32::from(b), 8);
            }
        }
    }
    w.into_codewords(spec.data_codewords())
}

fn decode_segment(data: &[u8], spec: &FrameSpec) -> Result<Vec<u8>, VisualError> {
    let mut r = BitReader { bytes: data, pos: 0 };
    if r.read(4)? != spec.mode.indicator() {
        return Err(VisualError::Malformed("mode indicator does not match the frame spec"));
    }
    let count = r.read(spec.mode.count_bits(spec.version))? as usize;
    let mut out = Vec::with_capacity(count);
    match spec.mode {
        Mode::Numeric => {
            let mut left = count;
            while left > 0 {
                let digits = left.min(3);
                let value = r.read(digits * 3 + 1)?;
                let text = format!("{value:0width$}", width = digits);
                if text.len() != digits {
                    return Err(VisualError::Malformed("numeric group out of range"));
                }
                out.extend_from_slice(text.as_bytes());
                left -= digits;
            }
        }
        Mode::Alphanumeric => {
            let mut left = count;
            while left > 0 {
                if left >= 2 {
                    let v = r.read(11)? as usize;
                    let (a, b) = (v / 45, v % 45);
                    if a >= 45 {
                        return Err(VisualError::Malformed("alphanumeric pair out of range"));
                    }
                    out.push(ALNUM_CHARSET[a]);
                    out.push(ALNUM_CHARSET[b]);
                    left -= 2;
                } else {
                    let v = r.read(6)? as usize;
                    out.push(
                        *ALNUM_CHARSET
                            .get(v)
                            .ok_or(VisualError::Malformed("alphanumeric char out of range"))?,
                    );
                    left -= 1;
                }
            }
        }
        Mode::Byte => {
            for _ in 0..count {
                out.push(r.read(8)? as u8);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VisualFrame {
    pub spec: FrameSpec,
    pub payload: Vec<u8>,
    pub codewords: Vec<u8>,
    pub corrupted: BTreeSet<usize>,
}

impl VisualFrame {
    pub fn correction_budget(&self) -> usize {
        self.spec.correction_budget()
    }

    /// Text dump: `QRV <version> <ec> <mode> <payload_len>` then Base64 codewords.
    pub fn dump(&self) -> String {
        format!(
            "QRV {} {} {} {}\n{}\n",
            self.spec.version,
            self.spec.ec_level,
            self.spec.mode,
            self.payload.len(),
            BASE64.encode(&self.codewords)
        )
    }
}

/// Parsed form of a frame dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameDump {
    pub spec: FrameSpec,
    pub payload_len: usize,
    pub codewords: Vec<u8>,
}

impl FrameDump {
    pub fn parse(text: &str) -> Result<Self, VisualError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| VisualError::Dump("empty dump".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [tag, version, ec, mode, len] = fields[..] else {
            return Err(VisualError::Dump(format!("bad header {header:?}")));
        };
        if tag != "QRV" {
            return Err(VisualError::Dump(format!("bad header tag {tag:?}")));
        }
        let version: u8 = version
            .parse()
            .map_err(|_| VisualError::Dump(format!("bad version {version:?}")))?;
        let spec = FrameSpec::new(version, ec.parse()?, mode.parse()?)?;
        let payload_len = len
            .parse()
            .map_err(|_| VisualError::Dump(format!("bad payload length {len:?}")))?;
        let body = lines
            .next()
            .ok_or_else(|| VisualError::Dump("missing codeword line".into()))?;
        let codewords = BASE64
            .decode(body.trim())
            .map_err(|e| VisualError::Dump(format!("codewords: {e}")))?;
        if codewords.len() != spec.total_codewords() {
            return Err(VisualError::Dump("codeword count does not match version".into()));
        }
        Ok(Self {
            spec,
            payload_len,
            codewords,
        })
    }
}

fn check_symbols(s: &[u8], mode: Mode) -> Result<(), VisualError> {
    match s.iter().find(|&&b| !mode.accepts(b)) {
        Some(&byte) => Err(VisualError::InvalidCharacter { byte, mode }),
        None => Ok(()),
    }
}

fn build_codewords(s: &[u8], spec: &FrameSpec) -> Vec<u8> {
    let mut codewords = encode_segment(s, spec);
    let parity = parity_for(spec, &codewords);
    codewords.extend_from_slice(&parity);
    codewords
}

pub fn qr_encode(s: &[u8], spec: FrameSpec) -> Result<VisualFrame, VisualError> {
    check_symbols(s, spec.mode)?;
    let max = global_capacity(spec.mode);
    if s.len() > max {
        return Err(VisualError::ExceedsGlobalMaximum {
            len: s.len(),
            mode: spec.mode,
            max,
        });
    }
    if s.len() > spec.capacity() {
        return Err(VisualError::CapacityExceeded {
            len: s.len(),
            spec,
            required_version: FrameSpec::smallest_fitting(s.len(), spec.ec_level, spec.mode, spec.version)
                .map(|f| f.version),
        });
    }
    Ok(VisualFrame {
        spec,
        payload: s.to_vec(),
        codewords: build_codewords(s, &spec),
        corrupted: BTreeSet::new(),
    })
}

/// Encodes at the smallest version (not below `min_version`) that fits.
pub fn qr_encode_auto(s: &[u8], ec_level: EcLevel, mode: Mode, min_version: u8) -> Result<VisualFrame, VisualError> {
    let version =
        FrameSpec::smallest_fitting(s.len(), ec_level, mode, min_version).map_or(MAX_VERSION, |spec| spec.version);
    qr_encode(s, FrameSpec::new(version, ec_level, mode)?)
}

/// Decodes a captured frame, or fails if corruption exceeds the correction budget.
///
/// Correction is modeled: within budget, corrupted positions are restored to
/// the symbol's reference codewords. The restored codewords must then agree
/// with every uncorrupted received codeword and pass the per-block parity
/// check before the segment is parsed, so a frame never decodes to bytes it
/// does not carry.
pub fn qr_decode(frame: &VisualFrame) -> Result<Vec<u8>, VisualError> {
    let spec = &frame.spec;
    if frame.codewords.len() != spec.total_codewords() {
        return Err(VisualError::Malformed("codeword count does not match version"));
    }
    let budget = spec.correction_budget();
    if frame.corrupted.len() > budget {
        return Err(VisualError::Uncorrectable {
            corrupted: frame.corrupted.len(),
            budget,
        });
    }
    if frame.payload.len() > spec.capacity() || check_symbols(&frame.payload, spec.mode).is_err() {
        return Err(VisualError::Inconsistent);
    }
    let reference = build_codewords(&frame.payload, spec);
    let mut repaired = frame.codewords.clone();
    for (i, (got, want)) in repaired.iter_mut().zip(&reference).enumerate() {
        if frame.corrupted.contains(&i) {
            *got = *want;
        } else if got != want {
            return Err(VisualError::Inconsistent);
        }
    }
    let (data, parity) = repaired.split_at(spec.data_codewords());
    if parity_for(spec, data) != parity {
        return Err(VisualError::Inconsistent);
    }
    let out = decode_segment(data, spec)?;
    if out != frame.payload {
        return Err(VisualError::Inconsistent);
    }
    Ok(out)
}

/// Marks `count` further distinct codewords as corrupted and garbles them.
pub fn corrupt(frame: &VisualFrame, count: usize, seed: u64) -> Result<VisualFrame, VisualError> {
    let total = frame.codewords.len();
    let clean: Vec<usize> = (0..total).filter(|i| !frame.corrupted.contains(i)).collect();
    if count > clean.len() {
        return Err(VisualError::CorruptionExceedsCodewords { count, total });
    }
    let mut rng = seeded(seed);
    let mut out = frame.clone();
    for pick in sample(&mut rng, clean.len(), count) {
        let index = clean[pick];
        out.codewords[index] ^= rng.gen_range(1..=255u8);
        out.corrupted.insert(index);
    }
    Ok(out)
}

/// Affine scan-time estimate `seconds = a + b * module_count`.
///
/// Coefficients are scenario inputs; the defaults are rough estimates for a
/// phone camera and are never asserted against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanTimeModel {
    pub intercept_s: f64,
    pub per_module_s: f64,
}

impl Default for ScanTimeModel {
    fn default() -> Self {
        Self {
            intercept_s: 1.35,
            per_module_s: 0.00025,
        }
    }
}

impl ScanTimeModel {
    pub fn estimate(&self, spec: &FrameSpec) -> f64 {
        self.intercept_s + self.per_module_s * spec.module_count() as f64
    }
}
