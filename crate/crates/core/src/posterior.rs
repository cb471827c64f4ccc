//! Frame-level acoustic scores and the `ASRP` binary file format.
//!
//! File layout (little-endian): magic `ASRP`, version `u32 = 1`, frames `u32`,
//! vocab `u32`, kind `u8` (0 = log-posterior, 1 = raw logit), then
//! `frames * vocab` `f32` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::math::log_sum_exp;

pub const MAGIC: &[u8; 4] = b"ASRP";
pub const VERSION: u32 = 1;

/// Tolerance on a log-posterior row's log-sum-exp.
pub const ROW_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("shape mismatch: {frames}x{vocab} needs {expected} values, got {got}")]
    Shape {
        frames: usize,
        vocab: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at frame {frame}, unit {unit}")]
    NonFinite { frame: usize, unit: usize },
    #[error("frame {frame} is not normalized (log-sum-exp {lse:.3e})")]
    NotNormalized { frame: usize, lse: f64 },
    #[error("bad posterior file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorKind {
    LogPosterior,
    RawLogit,
}

/// A `frames x vocab` matrix of log-domain scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    frames: usize,
    vocab: usize,
    values: Vec<f64>,
    kind: PosteriorKind,
}

impl PosteriorMatrix {
    pub fn new(
        frames: usize,
        vocab: usize,
        values: Vec<f64>,
        kind: PosteriorKind,
    ) -> Result<Self, PosteriorError> {
        if values.len() != frames * vocab || vocab == 0 {
            return Err(PosteriorError::Shape {
                frames,
                vocab,
                expected: frames * vocab,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PosteriorError::NonFinite {
                frame: i / vocab,
                unit: i % vocab,
            });
        }
        let m = Self {
            frames,
            vocab,
            values,
            kind,
        };
        if kind == PosteriorKind::LogPosterior {
            for t in 0..frames {
                let lse = log_sum_exp(m.row(t));
                if lse.abs() > ROW_NORM_TOLERANCE {
                    return Err(PosteriorError::NotNormalized { frame: t, lse });
                }
            }
        }
        Ok(m)
    }

    /// Build a log-posterior matrix from rows of probabilities.
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self, PosteriorError> {
        let vocab = rows.first().map_or(0, Vec::len);
        let values = rows.iter().flat_map(|r| r.iter().map(|p| p.ln())).collect();
        Self::new(rows.len(), vocab, values, PosteriorKind::LogPosterior)
    }

    /// Build from unnormalized row scores, applying a log-softmax per row.
    pub fn from_logits(frames: usize, vocab: usize, logits: Vec<f64>) -> Result<Self, PosteriorError> {
        Self::new(frames, vocab, logits, PosteriorKind::RawLogit).map(|m| m.normalized())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn kind(&self) -> PosteriorKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.vocab..(t + 1) * self.vocab]
    }

    #[inline]
    pub fn get(&self, t: usize, v: usize) -> f64 {
        self.values[t * self.vocab + v]
    }

    /// Log-posterior view: raw logits get a per-row log-softmax, log
    /// posteriors are returned unchanged.
    pub fn normalized(self) -> Self {
        match self.kind {
            PosteriorKind::LogPosterior => self,
            PosteriorKind::RawLogit => {
                let mut values = self.values;
                for row in values.chunks_mut(self.vocab) {
                    let lse = log_sum_exp(row);
                    row.iter_mut().for_each(|v| *v -= lse);
                }
                Self {
                    values,
                    kind: PosteriorKind::LogPosterior,
                    ..self
                }
            }
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), PosteriorError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        w.write_all(&(self.vocab as u32).to_le_bytes())?;
        w.write_all(&[match self.kind {
            PosteriorKind::LogPosterior => 0u8,
            PosteriorKind::RawLogit => 1u8,
        }])?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Read an `ASRP` stream. Values are stored as `f32`, so log-posterior
    /// rows are re-checked with the usual tolerance after widening.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self, PosteriorError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| PosteriorError::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(PosteriorError::Format(format!("bad magic {magic:?}")));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32, PosteriorError> {
            r.read_exact(&mut u32buf)
                .map_err(|_| PosteriorError::Format("truncated header".into()))?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(PosteriorError::Format(format!("unsupported version {version}")));
        }
        let frames = read_u32(&mut r)? as usize;
        let vocab = read_u32(&mut r)? as usize;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)
            .map_err(|_| PosteriorError::Format("truncated header".into()))?;
        let kind = match kind[0] {
            0 => PosteriorKind::LogPosterior,
            1 => PosteriorKind::RawLogit,
            k => return Err(PosteriorError::Format(format!("unknown kind {k}"))),
        };
        let n = frames
            .checked_mul(vocab)
            .ok_or_else(|| PosteriorError::Format("dimensions overflow".into()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != n * 4 {
            return Err(PosteriorError::Format(format!(
                "expected {} payload bytes for {frames}x{vocab}, got {}",
                n * 4,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(frames, vocab, values, kind)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), PosteriorError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_file(path: &Path) -> Result<Self, PosteriorError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}
