//! Token-stream data model: token grids, surprise-augmented states, masks,
//! and the `.tok` / `.msk` binary formats.
//!
//! Both file formats share one 20-byte little-endian header:
//!
//! ```text
//! magic[4] | version u32 | frames u32 | tokens_per_frame u32 | dim u32
//! ```
//!
//! `.tok` files (magic `TOKG`) follow with `frames * tokens * dim` f32 values,
//! row-major over (frame, token, channel). `.msk` files (magic `TMSK`) carry
//! `dim = 1` and follow with one byte (0 or 1) per token.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const TOK_MAGIC: [u8; 4] = *b"TOKG";
pub const MASK_MAGIC: [u8; 4] = *b"TMSK";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("invalid mask byte {value} at flat index {index}")]
    InvalidMaskByte { index: usize, value: u8 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StreamError {
    /// Stable numeric code per failure class.
    pub fn code(&self) -> u32 {
        match self {
            StreamError::MalformedInput(_) => 10,
            StreamError::MissingFile(_) => 11,
            StreamError::MalformedHeader(_) => 12,
            StreamError::TruncatedPayload { .. } => 13,
            StreamError::ShapeMismatch(_) => 14,
            StreamError::NonFinite(_) => 15,
            StreamError::InvalidMaskByte { .. } => 16,
            StreamError::Io(_) => 17,
        }
    }
}

pub type Result<T> = std::result::Result<T, StreamError>;

fn check_dims(frames: usize, tokens: usize, dim: usize) -> Result<usize> {
    if frames == 0 || tokens == 0 || dim == 0 {
        return Err(StreamError::MalformedInput(format!(
            "dimensions must be positive, got T={frames} N={tokens} D={dim}"
        )));
    }
    frames
        .checked_mul(tokens)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| StreamError::MalformedInput("grid size overflows".into()))
}

/// A `T x N x D` stream of visual token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    frames: usize,
    tokens: usize,
    dim: usize,
    values: Vec<f32>,
}

impl TokenGrid {
    pub fn new(frames: usize, tokens: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        let len = check_dims(frames, tokens, dim)?;
        if values.len() != len {
            return Err(StreamError::MalformedInput(format!(
                "expected {len} values for {frames}x{tokens}x{dim}, got {}",
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(StreamError::NonFinite(idx));
        }
        Ok(Self {
            frames,
            tokens,
            dim,
            values,
        })
    }

    pub fn zeros(frames: usize, tokens: usize, dim: usize) -> Result<Self> {
        let len = check_dims(frames, tokens, dim)?;
        Ok(Self {
            frames,
            tokens,
            dim,
            values: vec![0.0; len],
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total token count `T * N`.
    pub fn token_count(&self) -> usize {
        self.frames * self.tokens
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let stride = self.tokens * self.dim;
        &self.values[t * stride..(t + 1) * stride]
    }

    pub fn token(&self, t: usize, i: usize) -> &[f32] {
        self.token_flat(t * self.tokens + i)
    }

    pub fn token_flat(&self, flat: usize) -> &[f32] {
        &self.values[flat * self.dim..(flat + 1) * self.dim]
    }
}

/// Per-token concatenation `[x; dx]` with `2D` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SurpriseGrid {
    frames: usize,
    tokens: usize,
    dim: usize,
    values: Vec<f32>,
}

impl SurpriseGrid {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens
    }

    /// Embedding width `D` of the source grid; each state has `2D` channels.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        2 * self.dim
    }

    pub fn token_count(&self) -> usize {
        self.frames * self.tokens
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn state(&self, flat: usize) -> &[f32] {
        let c = self.channels();
        &self.values[flat * c..(flat + 1) * c]
    }

    /// Build directly from `2D`-channel rows, mainly for tests of the gate.
    pub fn from_states(frames: usize, tokens: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        let len = check_dims(frames, tokens, dim)? * 2;
        if values.len() != len {
            return Err(StreamError::MalformedInput(format!(
                "expected {len} state values, got {}",
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(StreamError::NonFinite(idx));
        }
        Ok(Self {
            frames,
            tokens,
            dim,
            values,
        })
    }
}

/// Binary keep/drop decisions, one per token, row-major over (frame, token).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    frames: usize,
    tokens: usize,
    bits: Vec<u8>,
}

impl Mask {
    pub fn new(frames: usize, tokens: usize, bits: Vec<u8>) -> Result<Self> {
        let len = check_dims(frames, tokens, 1)?;
        if bits.len() != len {
            return Err(StreamError::MalformedInput(format!(
                "expected {len} mask bits, got {}",
                bits.len()
            )));
        }
        if let Some((index, &value)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
            return Err(StreamError::InvalidMaskByte { index, value });
        }
        Ok(Self {
            frames,
            tokens,
            bits,
        })
    }

    pub fn filled(frames: usize, tokens: usize, keep: bool) -> Result<Self> {
        let len = check_dims(frames, tokens, 1)?;
        Ok(Self {
            frames,
            tokens,
            bits: vec![u8::from(keep); len],
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_kept(&self, flat: usize) -> bool {
        self.bits[flat] == 1
    }

    pub fn retained(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Flat indices `t * N + i` of retained tokens, ascending.
    pub fn retained_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
    }
}

/// Inter-frame residual with a virtual zero frame before frame 0.
pub fn compute_residual(x: &TokenGrid) -> Result<TokenGrid> {
    let stride = x.tokens * x.dim;
    let mut out = Vec::with_capacity(x.values.len());
    out.extend_from_slice(x.frame(0));
    for t in 1..x.frames {
        let prev = &x.values[(t - 1) * stride..t * stride];
        let cur = &x.values[t * stride..(t + 1) * stride];
        out.extend(cur.iter().zip(prev).map(|(c, p)| c - p));
    }
    if let Some(idx) = out.iter().position(|v| !v.is_finite()) {
        return Err(StreamError::NonFinite(idx));
    }
    Ok(TokenGrid {
        frames: x.frames,
        tokens: x.tokens,
        dim: x.dim,
        values: out,
    })
}

pub fn encode_state(x: &TokenGrid) -> Result<SurpriseGrid> {
    let residual = compute_residual(x)?;
    let d = x.dim;
    let mut values = Vec::with_capacity(x.values.len() * 2);
    for flat in 0..x.token_count() {
        values.extend_from_slice(x.token_flat(flat));
        values.extend_from_slice(residual.token_flat(flat));
    }
    Ok(SurpriseGrid {
        frames: x.frames,
        tokens: x.tokens,
        dim: d,
        values,
    })
}

fn write_header(w: &mut impl Write, magic: [u8; 4], t: usize, n: usize, d: usize) -> io::Result<()> {
    w.write_all(&magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [t, n, d] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    Ok(())
}

fn open_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => StreamError::MissingFile(path.display().to_string()),
        _ => StreamError::Io(e),
    })?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    Ok(buf)
}

fn parse_header(buf: &[u8], magic: [u8; 4]) -> Result<(usize, usize, usize)> {
    if buf.len() < HEADER_LEN {
        return Err(StreamError::MalformedHeader(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            buf.len()
        )));
    }
    if buf[..4] != magic {
        return Err(StreamError::MalformedHeader(format!(
            "bad magic {:?}, expected {:?}",
            &buf[..4],
            magic
        )));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FORMAT_VERSION {
        return Err(StreamError::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let (t, n, d) = (word(1) as usize, word(2) as usize, word(3) as usize);
    if t == 0 || n == 0 || d == 0 {
        return Err(StreamError::MalformedHeader(format!(
            "dimensions must be positive, got T={t} N={n} D={d}"
        )));
    }
    Ok((t, n, d))
}

fn check_payload(buf: &[u8], expected: usize) -> Result<&[u8]> {
    let payload = &buf[HEADER_LEN..];
    if payload.len() < expected {
        return Err(StreamError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(StreamError::ShapeMismatch(format!(
            "header declares {expected} payload bytes, file carries {}",
            payload.len()
        )));
    }
    Ok(payload)
}

pub fn write_token_grid(grid: &TokenGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_header(&mut w, TOK_MAGIC, grid.frames, grid.tokens, grid.dim)?;
    for v in &grid.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_token_grid(path: impl AsRef<Path>) -> Result<TokenGrid> {
    let buf = open_bytes(path.as_ref())?;
    let (t, n, d) = parse_header(&buf, TOK_MAGIC)?;
    let count = t
        .checked_mul(n)
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| StreamError::MalformedHeader("grid size overflows".into()))?;
    let payload = check_payload(&buf, count * 4)?;
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TokenGrid::new(t, n, d, values)
}

pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_header(&mut w, MASK_MAGIC, mask.frames, mask.tokens, 1)?;
    w.write_all(&mask.bits)?;
    w.flush()?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let buf = open_bytes(path.as_ref())?;
    let (t, n, d) = parse_header(&buf, MASK_MAGIC)?;
    if d != 1 {
        return Err(StreamError::MalformedHeader(format!(
            "mask files carry D=1, found D={d}"
        )));
    }
    let payload = check_payload(&buf, t * n)?;
    Mask::new(t, n, payload.to_vec())
}
