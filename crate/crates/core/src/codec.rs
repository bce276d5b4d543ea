//! Self-describing index stream.
//!
//! All multi-byte fields are little-endian.
//!
//! ```text
//! header   "RFSQ" | version u8 = 1 | strategy u8 (0 none, 1 scale, 2 layernorm)
//!          | K u8 | D u8 | levels K*D u8 (stage-major) | M u32
//!          | ln_eps f32          iff strategy = layernorm
//!          | alpha f32 * K       iff strategy = scale
//! indices  per stage: M indices, fixed width b_k = ceil(log2(codebook_k)) bits,
//!          MSB-first, zero-padded to a byte boundary after each stage
//! side     iff strategy = layernorm: K*M pairs (mu f32, sigma f32), stage-major
//! ```

use crate::conditioning::{InverseState, LnState, ScaleParam, Strategy};
use crate::error::{Error, Result};
use crate::fsq::LevelsSpec;
use crate::pipeline::{RfsqConfig, RfsqOutput};

pub const STREAM_MAGIC: &[u8; 4] = b"RFSQ";
pub const STREAM_VERSION: u8 = 1;

/// MSB-first bit writer.
#[derive(Debug, Default)]
pub struct BitWriter {
    buf: Vec<u8>,
    acc: u8,
    used: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn write(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for bit in (0..width).rev() {
            self.acc = (self.acc << 1) | ((value >> bit) & 1) as u8;
            self.used += 1;
            if self.used == 8 {
                self.buf.push(self.acc);
                self.acc = 0;
                self.used = 0;
            }
        }
    }

    /// Zero-pads to the next byte boundary.
    pub fn align(&mut self) {
        if self.used > 0 {
            self.buf.push(self.acc << (8 - self.used));
            self.acc = 0;
            self.used = 0;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.align();
        self.buf
    }
}

/// MSB-first bit reader over a byte slice.
#[derive(Debug)]
pub struct BitReader<'a> {
    buf: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, bit: 0 }
    }

    pub fn byte_pos(&self) -> usize {
        self.bit / 8
    }

    pub fn read(&mut self, width: u32) -> Option<u64> {
        if self.bit + width as usize > self.buf.len() * 8 {
            return None;
        }
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.buf[self.bit / 8];
            v = (v << 1) | ((byte >> (7 - self.bit % 8)) & 1) as u64;
            self.bit += 1;
        }
        Some(v)
    }

    pub fn align(&mut self) {
        self.bit = self.bit.div_ceil(8) * 8;
    }
}

fn header_len(cfg: &RfsqConfig) -> usize {
    let k = cfg.stages();
    let mut n = 4 + 1 + 1 + 1 + 1 + k * cfg.dim() + 4;
    match cfg.strategy() {
        Strategy::None => {}
        Strategy::Scale => n += 4 * k,
        Strategy::LayerNorm => n += 4,
    }
    n
}

/// Exact encoded size in bytes of `m` vectors under `cfg`.
pub fn stream_len(cfg: &RfsqConfig, m: usize) -> usize {
    let body: usize = cfg
        .levels()
        .iter()
        .map(|s| (m * s.packed_bits() as usize).div_ceil(8))
        .sum();
    let side = match cfg.strategy() {
        Strategy::LayerNorm => 8 * cfg.stages() * m,
        _ => 0,
    };
    header_len(cfg) + body + side
}

fn check_wire_limits(cfg: &RfsqConfig) -> Result<()> {
    if cfg.stages() > u8::MAX as usize || cfg.dim() > u8::MAX as usize {
        return Err(Error::param(format!(
            "stream holds at most 255 stages and 255 channels, got K={} D={}",
            cfg.stages(),
            cfg.dim()
        )));
    }
    if let Some(l) = cfg
        .levels()
        .iter()
        .flat_map(|s| s.levels())
        .find(|&&l| l > u8::MAX as u32)
    {
        return Err(Error::param(format!("level count {l} does not fit in a byte")));
    }
    Ok(())
}

pub fn encode_stream(out: &RfsqOutput, cfg: &RfsqConfig) -> Result<Vec<u8>> {
    check_wire_limits(cfg)?;
    let k = cfg.stages();
    if out.indices.len() != k || out.side_info.len() != k {
        return Err(Error::param(format!(
            "output has {} index lists and {} side states for {k} stages",
            out.indices.len(),
            out.side_info.len()
        )));
    }
    let m = out.indices[0].len();
    let m32 = u32::try_from(m).map_err(|_| Error::param("vector count does not fit in u32"))?;
    for (stage, (idx, spec)) in out.indices.iter().zip(cfg.levels()).enumerate() {
        if idx.len() != m {
            return Err(Error::param(format!("stage {} has {} indices, expected {m}", stage + 1, idx.len())));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= spec.codebook_size()) {
            return Err(Error::param(format!(
                "stage {} index {bad} outside codebook of size {}",
                stage + 1,
                spec.codebook_size()
            )));
        }
    }
    for (stage, state) in out.side_info.iter().enumerate() {
        let ok = match (state, cfg.strategy()) {
            (InverseState::None, Strategy::None) => true,
            (InverseState::Scale(p), Strategy::Scale) => *p == cfg.scales()[stage],
            (InverseState::LayerNorm(ln), Strategy::LayerNorm) => ln.len() == m,
            _ => false,
        };
        if !ok {
            return Err(Error::param(format!(
                "stage {} side information does not match the {} config",
                stage + 1,
                cfg.strategy()
            )));
        }
    }

    let mut bytes = Vec::with_capacity(stream_len(cfg, m));
    bytes.extend_from_slice(STREAM_MAGIC);
    bytes.push(STREAM_VERSION);
    bytes.push(cfg.strategy().wire_code());
    bytes.push(k as u8);
    bytes.push(cfg.dim() as u8);
    for spec in cfg.levels() {
        bytes.extend(spec.levels().iter().map(|&l| l as u8));
    }
    bytes.extend_from_slice(&m32.to_le_bytes());
    match cfg.strategy() {
        Strategy::None => {}
        Strategy::Scale => {
            for p in cfg.scales() {
                bytes.extend_from_slice(&(p.alpha() as f32).to_le_bytes());
            }
        }
        Strategy::LayerNorm => {
            let eps = cfg.ln_eps().expect("validated on construction");
            bytes.extend_from_slice(&(eps as f32).to_le_bytes());
        }
    }

    let mut writer = BitWriter::new();
    for (idx, spec) in out.indices.iter().zip(cfg.levels()) {
        let width = spec.packed_bits();
        for &i in idx {
            writer.write(i, width);
        }
        writer.align();
    }
    bytes.extend(writer.finish());

    for state in &out.side_info {
        if let InverseState::LayerNorm(ln) = state {
            for (&mu, &sigma) in ln.mu().iter().zip(ln.sigma()) {
                bytes.extend_from_slice(&(mu as f32).to_le_bytes());
                bytes.extend_from_slice(&(sigma as f32).to_le_bytes());
            }
        }
    }
    debug_assert_eq!(bytes.len(), stream_len(cfg, m));
    Ok(bytes)
}

/// Contents of a decoded stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedStream {
    pub cfg: RfsqConfig,
    pub indices: Vec<Vec<u64>>,
    pub side_info: Vec<InverseState>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.buf.len()) {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(self.pos, format!("truncated: need {n} bytes for {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_stream(bytes: &[u8]) -> Result<DecodedStream> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != STREAM_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"RFSQ\""));
    }
    let version = cur.u8("version")?;
    if version != STREAM_VERSION {
        return Err(Error::UnsupportedVersion {
            version,
            expected: STREAM_VERSION,
        });
    }
    let strategy_at = cur.pos;
    let strategy = Strategy::from_wire_code(cur.u8("strategy")?)
        .ok_or_else(|| Error::format(strategy_at, "unknown strategy code"))?;
    let k_at = cur.pos;
    let k = cur.u8("K")? as usize;
    if k == 0 {
        return Err(Error::format(k_at, "stream declares zero stages"));
    }
    let d_at = cur.pos;
    let d = cur.u8("D")? as usize;
    if d == 0 {
        return Err(Error::format(d_at, "stream declares zero channels"));
    }
    let mut levels = Vec::with_capacity(k);
    for _ in 0..k {
        let at = cur.pos;
        let raw = cur.take(d, "levels")?;
        let spec = LevelsSpec::new(raw.iter().map(|&l| l as u32).collect())
            .map_err(|e| Error::format(at, e.to_string()))?;
        levels.push(spec);
    }
    let m = cur.u32("M")? as usize;
    let params_at = cur.pos;
    let cfg = match strategy {
        Strategy::None => RfsqConfig::none(levels),
        Strategy::Scale => {
            let alphas = (0..k)
                .map(|_| cur.f32("alpha").map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            RfsqConfig::scaled(levels, alphas)
        }
        Strategy::LayerNorm => {
            let eps = cur.f32("ln_eps")? as f64;
            RfsqConfig::layernorm(levels, eps)
        }
    }
    .map_err(|e| Error::format(params_at, e.to_string()))?;

    let mut indices = Vec::with_capacity(k);
    for spec in cfg.levels() {
        let width = spec.packed_bits();
        let block_len = (m * width as usize).div_ceil(8);
        let start = cur.pos;
        let block = cur.take(block_len, "index block")?;
        let mut reader = BitReader::new(block);
        let mut idx = Vec::with_capacity(m);
        for _ in 0..m {
            let at = start + reader.byte_pos();
            let i = reader.read(width).expect("block length covers every index");
            if i >= spec.codebook_size() {
                return Err(Error::format(
                    at,
                    format!("index {i} outside codebook of size {}", spec.codebook_size()),
                ));
            }
            idx.push(i);
        }
        indices.push(idx);
    }

    let side_info = match strategy {
        Strategy::None => vec![InverseState::None; k],
        Strategy::Scale => cfg
            .scales()
            .iter()
            .map(|&p: &ScaleParam| InverseState::Scale(p))
            .collect(),
        Strategy::LayerNorm => {
            let eps = cfg.ln_eps().expect("layernorm config");
            let mut states = Vec::with_capacity(k);
            for _ in 0..k {
                let at = cur.pos;
                let mut mu = Vec::with_capacity(m);
                let mut sigma = Vec::with_capacity(m);
                for _ in 0..m {
                    mu.push(cur.f32("mean")? as f64);
                    sigma.push(cur.f32("deviation")? as f64);
                }
                let ln = LnState::from_parts(mu, sigma, eps).map_err(|e| Error::format(at, e.to_string()))?;
                states.push(InverseState::LayerNorm(ln));
            }
            states
        }
    };

    if cur.pos != bytes.len() {
        return Err(Error::format(
            cur.pos,
            format!("{} trailing bytes after payload", bytes.len() - cur.pos),
        ));
    }
    Ok(DecodedStream {
        cfg,
        indices,
        side_info,
    })
}

/// Bits per vector for a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    /// `sum_k sum_i log2 L_i`, the nominal index rate.
    pub index_bits: f64,
    /// `sum_k b_k`, what the fixed-width packing actually spends.
    pub packed_bits: f64,
    /// Side information per vector: 64 K for layernorm, 32 K / m for scale.
    pub side_bits: f64,
    /// `index_bits + side_bits`.
    pub total_bits: f64,
}

pub fn rate_report(cfg: &RfsqConfig, m: usize) -> RateReport {
    let index_bits = cfg.index_rate_bits();
    let packed_bits = cfg.levels().iter().map(|s| s.packed_bits() as f64).sum();
    let k = cfg.stages() as f64;
    let side_bits = match cfg.strategy() {
        Strategy::None => 0.0,
        Strategy::Scale => 32.0 * k / m.max(1) as f64,
        Strategy::LayerNorm => 64.0 * k,
    };
    RateReport {
        index_bits,
        packed_bits,
        side_bits,
        total_bits: index_bits + side_bits,
    }
}
