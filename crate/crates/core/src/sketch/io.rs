//! SKSP1 binary sketch format. All integers and floats are little-endian.
//!
//! ```text
//! magic      5 bytes  "SKSP1"
//! ensemble   u8       0 hashing-like, 1 exact-hashing, 2 general-q, 3 gaussian
//! n, N       u64, u64
//! s, q       f64, f64 (NaN when absent)
//! seed       u64 master_seed, u64 stream_id
//! scale      f64
//! storage    u8       0 sparse columns, 1 dense signs, 2 dense f64
//! sparse:    u64 nnz, (N+1) × u64 column pointers, nnz × u32 row indices, nnz × i8 signs
//! signs:     n·N × i8, column-major
//! f64:       n·N × f64, column-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Ensemble, EnsembleParams, SparseSketch, Storage};
use crate::error::{Error, Result};
use crate::rng::SeedSpec;

pub const MAGIC: &[u8; 5] = b"SKSP1";

fn ensemble_tag(e: Ensemble) -> u8 {
    match e {
        Ensemble::HashingLike => 0,
        Ensemble::ExactHashing => 1,
        Ensemble::GeneralQ => 2,
        Ensemble::Gaussian => 3,
    }
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

impl SparseSketch {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.nnz() * 6 + self.cols * 8);
        out.extend_from_slice(MAGIC);
        out.push(ensemble_tag(self.params.ensemble));
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        out.extend_from_slice(&opt(self.params.s).to_le_bytes());
        out.extend_from_slice(&opt(self.params.q).to_le_bytes());
        out.extend_from_slice(&self.seed.master_seed.to_le_bytes());
        out.extend_from_slice(&self.seed.stream_id.to_le_bytes());
        out.extend_from_slice(&self.scale.to_le_bytes());
        match &self.storage {
            Storage::Sparse { col_ptr, row_idx, signs } => {
                out.push(0);
                out.extend_from_slice(&(row_idx.len() as u64).to_le_bytes());
                for &p in col_ptr {
                    out.extend_from_slice(&(p as u64).to_le_bytes());
                }
                for &r in row_idx {
                    out.extend_from_slice(&r.to_le_bytes());
                }
                out.extend(signs.iter().map(|&g| g as u8));
            }
            Storage::DenseSigns(v) => {
                out.push(1);
                out.extend(v.iter().map(|&g| g as u8));
            }
            Storage::Dense(v) => {
                out.push(2);
                for z in v {
                    out.extend_from_slice(&z.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(5)?;
        if magic != MAGIC {
            return Err(parse(0, "bad magic, expected \"SKSP1\""));
        }
        let tag_pos = r.pos;
        let ensemble = match r.u8()? {
            0 => Ensemble::HashingLike,
            1 => Ensemble::ExactHashing,
            2 => Ensemble::GeneralQ,
            3 => Ensemble::Gaussian,
            t => return Err(parse(tag_pos, format!("unknown ensemble tag {t}"))),
        };
        let dims_pos = r.pos;
        let n = r.len()?;
        let big_n = r.len()?;
        let s = r.f64()?;
        let q = r.f64()?;
        let params = EnsembleParams {
            ensemble,
            n,
            big_n,
            s: (!s.is_nan()).then_some(s),
            q: (!q.is_nan()).then_some(q),
        };
        params.validate().map_err(|e| parse(dims_pos, format!("invalid parameters: {e}")))?;
        let seed = SeedSpec::new(r.u64()?, r.u64()?);
        let scale_pos = r.pos;
        let scale = r.f64()?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(parse(scale_pos, format!("scale must be positive and finite, got {scale}")));
        }
        let cells = n
            .checked_mul(big_n)
            .ok_or_else(|| parse(dims_pos, "n·N overflows"))?;
        let storage_pos = r.pos;
        let storage = match r.u8()? {
            0 => {
                let nnz_pos = r.pos;
                let nnz = r.len()?;
                if nnz > cells {
                    return Err(parse(nnz_pos, format!("nnz {nnz} exceeds n·N = {cells}")));
                }
                r.require(big_n.saturating_add(1).saturating_mul(8).saturating_add(nnz.saturating_mul(5)))?;
                let mut col_ptr = Vec::with_capacity(big_n + 1);
                for j in 0..=big_n {
                    let at = r.pos;
                    let p = r.len()?;
                    let prev = col_ptr.last().copied().unwrap_or(0);
                    if (j == 0 && p != 0) || p < prev || p > nnz || (j == big_n && p != nnz) {
                        return Err(parse(at, format!("invalid column pointer {p} for column {j}")));
                    }
                    col_ptr.push(p);
                }
                let mut row_idx = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    let at = r.pos;
                    let i = u32::from_le_bytes(r.array()?);
                    if i as usize >= n {
                        return Err(parse(at, format!("row index {i} out of range for n = {n}")));
                    }
                    row_idx.push(i);
                }
                for j in 0..big_n {
                    let col = &row_idx[col_ptr[j]..col_ptr[j + 1]];
                    if col.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(parse(
                            storage_pos,
                            format!("row indices of column {j} are not strictly increasing"),
                        ));
                    }
                }
                let signs = r.signs(nnz)?;
                Storage::Sparse { col_ptr, row_idx, signs }
            }
            1 => {
                r.require(cells)?;
                Storage::DenseSigns(r.signs(cells)?)
            }
            2 => {
                r.require(cells.saturating_mul(8))?;
                let mut v = Vec::with_capacity(cells);
                for _ in 0..cells {
                    v.push(r.f64()?);
                }
                Storage::Dense(v)
            }
            t => return Err(parse(storage_pos, format!("unknown storage tag {t}"))),
        };
        if r.pos != bytes.len() {
            return Err(parse(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(SparseSketch::from_parts(n, big_n, scale, storage, params, seed))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

pub fn write_sketch_file(sketch: &SparseSketch, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, sketch.to_bytes())?;
    Ok(())
}

pub fn read_sketch_file(path: impl AsRef<Path>) -> Result<SparseSketch> {
    SparseSketch::from_bytes(&std::fs::read(path)?)
}

fn parse(position: usize, reason: impl Into<String>) -> Error {
    Error::Parse { position, reason: reason.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn require(&self, k: usize) -> Result<()> {
        if self.bytes.len() - self.pos < k {
            return Err(parse(
                self.pos,
                format!("unexpected end of stream: need {k} bytes, have {}", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }

    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        self.require(k)?;
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn array<const K: usize>(&mut self) -> Result<[u8; K]> {
        Ok(self.take(K)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn len(&mut self) -> Result<usize> {
        let at = self.pos;
        usize::try_from(self.u64()?).map_err(|_| parse(at, "length does not fit in usize"))
    }

    fn signs(&mut self, k: usize) -> Result<Vec<i8>> {
        let start = self.pos;
        let raw = self.take(k)?;
        raw.iter()
            .enumerate()
            .map(|(i, &b)| match b as i8 {
                g @ (-1 | 1) => Ok(g),
                g => Err(parse(start + i, format!("sign byte must be ±1, got {g}"))),
            })
            .collect()
    }
}
