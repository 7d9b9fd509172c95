//! Versioned binary gate checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "TPCK" | version u32 | input u32 | hidden u32 | seed u64 | iteration u64
//! w1[hidden * input] f32 | b1[hidden] f32 | w2[hidden] f32 | b2 f32
//! ```
//!
//! Parameters are stored as f32, so a save/load cycle rounds the in-memory
//! f64 parameters to single precision.

use std::fs;
use std::path::Path;

use super::{HarnessError, Result};
use crate::gatenet::PolicyParams;

const MAGIC: [u8; 4] = *b"TPCK";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub seed: u64,
    pub iteration: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * p.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(p.input_size() as u32).to_le_bytes());
        out.extend_from_slice(&(p.hidden_size() as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        for v in p.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let bad = |msg: String| Err(HarnessError::Checkpoint(msg));
        if buf.len() < HEADER_LEN {
            return bad(format!("checkpoint header needs {HEADER_LEN} bytes, got {}", buf.len()));
        }
        if buf[..4] != MAGIC {
            return bad("bad checkpoint magic".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        if u32_at(4) != VERSION {
            return bad(format!("unsupported checkpoint version {}", u32_at(4)));
        }
        let (input, hidden) = (u32_at(8) as usize, u32_at(12) as usize);
        if input == 0 || hidden == 0 || input % 2 != 0 {
            return bad(format!("invalid layer sizes input={input} hidden={hidden}"));
        }
        let (seed, iteration) = (u64_at(16), u64_at(24));
        let count = hidden * input + 2 * hidden + 1;
        let payload = &buf[HEADER_LEN..];
        if payload.len() != 4 * count {
            return bad(format!(
                "expected {} parameter bytes, found {}",
                4 * count,
                payload.len()
            ));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let (w1, rest) = values.split_at(hidden * input);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, rest) = rest.split_at(hidden);
        let params =
            PolicyParams::from_parts(input, hidden, w1.to_vec(), b1.to_vec(), w2.to_vec(), rest[0])
                .map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
        Ok(Self {
            params,
            seed,
            iteration,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let buf = fs::read(path)
        .map_err(|e| HarnessError::Checkpoint(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&buf)
}
