//! Little-endian binary formats for videos (`MGVD`), token grids (`MGTK`),
//! codebooks (`MGCB`), and predictor parameters (`MGPT`).
//!
//! Every file starts with a 4-byte magic and a `u32` version, followed by
//! `u32` header fields and a flat payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};
use crate::predictor::PottsParams;
use crate::tasks::TaskKind;
use crate::tokenizer::Codebook;
use crate::video::VideoTensor;

pub const VERSION: u32 = 1;
pub const VIDEO_MAGIC: &[u8; 4] = b"MGVD";
pub const TOKENS_MAGIC: &[u8; 4] = b"MGTK";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"MGCB";
pub const PARAMS_MAGIC: &[u8; 4] = b"MGPT";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn header(magic: &[u8; 4], fields: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for &f in fields {
        put_u32(&mut out, f)?;
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Self { bytes, pos: 0 };
        let m = r.take(4)?;
        if m != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = r.u32()?;
        if v != VERSION {
            return Err(Error::Format(format!("unsupported version {v}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn count(&mut self, dims: &[usize], width: usize) -> Result<usize> {
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| {
                n.checked_mul(width)
                    .is_some_and(|b| b <= self.bytes.len() - self.pos)
            })
            .ok_or_else(|| Error::Format("payload size exceeds file".into()))?;
        Ok(n)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn video_to_bytes(video: &VideoTensor) -> Result<Vec<u8>> {
    let mut out = header(
        VIDEO_MAGIC,
        &[
            video.t_frames(),
            video.height(),
            video.width(),
            video.channels(),
        ],
    )?;
    for x in video.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn video_from_bytes(bytes: &[u8]) -> Result<VideoTensor> {
    let mut r = Reader::open(bytes, VIDEO_MAGIC)?;
    let (t, h, w, c) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let n = r.count(&[t, h, w, c], 4)?;
    let data = r.f32s(n)?;
    r.finish()?;
    VideoTensor::new(t, h, w, c, data)
}

/// Token files store the lattice extent only; the block size comes from the
/// codebook that decodes them.
pub fn tokens_to_bytes(grid: &TokenGrid, v_vis: usize) -> Result<Vec<u8>> {
    let s = grid.shape();
    let mut out = header(TOKENS_MAGIC, &[s.t_lat, s.h_lat, s.w_lat, v_vis])?;
    for id in grid.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    Ok(out)
}

/// Reads a token file into a grid with the given block size. Returns the grid
/// and the stored vocabulary size.
pub fn tokens_from_bytes(
    bytes: &[u8],
    blocks: (usize, usize, usize),
) -> Result<(TokenGrid, usize)> {
    let mut r = Reader::open(bytes, TOKENS_MAGIC)?;
    let (t, h, w, v) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let n = r.count(&[t, h, w], 4)?;
    let ids = r.u32s(n)?;
    r.finish()?;
    let shape = GridShape::new((t, h, w), blocks)?;
    Ok((TokenGrid::new(shape, ids, v)?, v))
}

pub fn codebook_to_bytes(cb: &Codebook) -> Result<Vec<u8>> {
    let mut out = header(CODEBOOK_MAGIC, &[cb.v_vis(), cb.dim()])?;
    for x in cb.centroids() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn codebook_from_bytes(bytes: &[u8]) -> Result<Codebook> {
    let mut r = Reader::open(bytes, CODEBOOK_MAGIC)?;
    let (v, dim) = (r.usize()?, r.usize()?);
    let n = r.count(&[v, dim], 4)?;
    let c = r.f32s(n)?;
    r.finish()?;
    Codebook::new(v, dim, c)
}

/// Parameters are stored as `f32` in the order `A, b, g, h`, so saving
/// rounds each value to single precision.
pub fn params_to_bytes(p: &PottsParams) -> Result<Vec<u8>> {
    let mut out = header(PARAMS_MAGIC, &[p.v_vis(), p.n_positions(), p.n_classes()])?;
    for (_, block) in p.blocks() {
        for &x in block {
            let y = x as f32;
            if !y.is_finite() {
                return Err(Error::Numeric(format!("parameter {x} overflows f32")));
            }
            out.extend_from_slice(&y.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<PottsParams> {
    let mut r = Reader::open(bytes, PARAMS_MAGIC)?;
    let (v, n, c) = (r.usize()?, r.usize()?, r.usize()?);
    let mut block = |rows: usize| -> Result<Vec<f64>> {
        let len = r.count(&[rows, v], 4)?;
        Ok(r.f32s(len)?.into_iter().map(f64::from).collect())
    };
    let a = block(v + 1)?;
    let b = block(n)?;
    let g = block(TaskKind::COUNT)?;
    let h = block(c + 1)?;
    r.finish()?;
    PottsParams::from_blocks((v, n, c), a, b, g, h)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    Ok(fs::write(path, bytes)?)
}

pub fn save_video(path: &Path, video: &VideoTensor) -> Result<()> {
    write_all(path, &video_to_bytes(video)?)
}

pub fn load_video(path: &Path) -> Result<VideoTensor> {
    video_from_bytes(&read_all(path)?)
}

pub fn save_tokens(path: &Path, grid: &TokenGrid, v_vis: usize) -> Result<()> {
    write_all(path, &tokens_to_bytes(grid, v_vis)?)
}

pub fn load_tokens(path: &Path, blocks: (usize, usize, usize)) -> Result<(TokenGrid, usize)> {
    tokens_from_bytes(&read_all(path)?, blocks)
}

pub fn save_codebook(path: &Path, cb: &Codebook) -> Result<()> {
    write_all(path, &codebook_to_bytes(cb)?)
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    codebook_from_bytes(&read_all(path)?)
}

pub fn save_params(path: &Path, p: &PottsParams) -> Result<()> {
    write_all(path, &params_to_bytes(p)?)
}

pub fn load_params(path: &Path) -> Result<PottsParams> {
    params_from_bytes(&read_all(path)?)
}
