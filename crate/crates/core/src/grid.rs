//! Token lattice geometry: flattening order and supervoxel boxes.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::video::VideoDims;

/// Shape of the latent token lattice and the pixel block behind each token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub t_lat: usize,
    pub h_lat: usize,
    pub w_lat: usize,
    pub block_t: usize,
    pub block_h: usize,
    pub block_w: usize,
}

/// Lattice coordinate `(t, h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

/// Half-open pixel box covered by one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBox {
    pub t: Range<usize>,
    pub y: Range<usize>,
    pub x: Range<usize>,
}

impl PixelBox {
    pub fn contains(&self, t: usize, y: usize, x: usize) -> bool {
        self.t.contains(&t) && self.y.contains(&y) && self.x.contains(&x)
    }
}

impl GridShape {
    pub fn new(
        (t_lat, h_lat, w_lat): (usize, usize, usize),
        (block_t, block_h, block_w): (usize, usize, usize),
    ) -> Result<Self> {
        if t_lat * h_lat * w_lat == 0 {
            return Err(Error::Config(format!(
                "token grid {t_lat}x{h_lat}x{w_lat} is empty"
            )));
        }
        if block_t * block_h * block_w == 0 {
            return Err(Error::Config(format!(
                "block {block_t}x{block_h}x{block_w} is empty"
            )));
        }
        Ok(Self {
            t_lat,
            h_lat,
            w_lat,
            block_t,
            block_h,
            block_w,
        })
    }

    /// Grid for a video of the given extent; every axis must divide exactly.
    pub fn for_video(dims: VideoDims, blocks: (usize, usize, usize)) -> Result<Self> {
        let (bt, bh, bw) = blocks;
        if bt == 0 || bh == 0 || bw == 0 {
            return Err(Error::Config(format!("block {bt}x{bh}x{bw} is empty")));
        }
        if !dims.t.is_multiple_of(bt) || !dims.h.is_multiple_of(bh) || !dims.w.is_multiple_of(bw) {
            return Err(Error::Dimension(format!(
                "video {}x{}x{} is not divisible by block {bt}x{bh}x{bw}",
                dims.t, dims.h, dims.w
            )));
        }
        Self::new((dims.t / bt, dims.h / bh, dims.w / bw), blocks)
    }

    /// Number of tokens N.
    pub fn len(&self) -> usize {
        self.t_lat * self.h_lat * self.w_lat
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn video_dims(&self) -> VideoDims {
        VideoDims::new(
            self.t_lat * self.block_t,
            self.h_lat * self.block_h,
            self.w_lat * self.block_w,
        )
    }

    pub fn block_voxels(&self) -> usize {
        self.block_t * self.block_h * self.block_w
    }

    /// Raster position, t-major then h then w.
    pub fn flatten_index(&self, c: Coord) -> Result<usize> {
        if c.t >= self.t_lat || c.h >= self.h_lat || c.w >= self.w_lat {
            return Err(Error::Bounds(format!(
                "coordinate ({}, {}, {}) outside grid {}x{}x{}",
                c.t, c.h, c.w, self.t_lat, self.h_lat, self.w_lat
            )));
        }
        Ok((c.t * self.h_lat + c.h) * self.w_lat + c.w)
    }

    pub fn unflatten(&self, idx: usize) -> Result<Coord> {
        if idx >= self.len() {
            return Err(Error::Bounds(format!(
                "position {idx} outside grid of {} tokens",
                self.len()
            )));
        }
        Ok(self.coord_unchecked(idx))
    }

    #[inline]
    pub(crate) fn coord_unchecked(&self, idx: usize) -> Coord {
        let w = idx % self.w_lat;
        let rest = idx / self.w_lat;
        Coord {
            t: rest / self.h_lat,
            h: rest % self.h_lat,
            w,
        }
    }

    pub fn supervoxel_of(&self, idx: usize) -> Result<PixelBox> {
        let c = self.unflatten(idx)?;
        Ok(PixelBox {
            t: c.t * self.block_t..(c.t + 1) * self.block_t,
            y: c.h * self.block_h..(c.h + 1) * self.block_h,
            x: c.w * self.block_w..(c.w + 1) * self.block_w,
        })
    }

    /// Position of the token whose supervoxel holds pixel `(t, y, x)`.
    #[inline]
    pub fn token_of_voxel(&self, t: usize, y: usize, x: usize) -> usize {
        ((t / self.block_t) * self.h_lat + y / self.block_h) * self.w_lat + x / self.block_w
    }

    /// Positions of the ±1 lattice neighbors along each axis, truncated at the
    /// boundary, in the order -t, +t, -h, +h, -w, +w.
    pub fn neighbors6(&self, idx: usize) -> Vec<usize> {
        let c = self.coord_unchecked(idx);
        let mut out = Vec::with_capacity(6);
        let at = |t, h, w| (t * self.h_lat + h) * self.w_lat + w;
        if c.t > 0 {
            out.push(at(c.t - 1, c.h, c.w));
        }
        if c.t + 1 < self.t_lat {
            out.push(at(c.t + 1, c.h, c.w));
        }
        if c.h > 0 {
            out.push(at(c.t, c.h - 1, c.w));
        }
        if c.h + 1 < self.h_lat {
            out.push(at(c.t, c.h + 1, c.w));
        }
        if c.w > 0 {
            out.push(at(c.t, c.h, c.w - 1));
        }
        if c.w + 1 < self.w_lat {
            out.push(at(c.t, c.h, c.w + 1));
        }
        out
    }

    /// Neighbor lists for every position.
    pub fn neighbor_table(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.neighbors6(i)).collect()
    }
}

/// Discrete visual token ids on a lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    shape: GridShape,
    ids: Vec<u32>,
}

impl TokenGrid {
    /// Builds a grid, checking length and that every id is below `v_vis`.
    pub fn new(shape: GridShape, ids: Vec<u32>, v_vis: usize) -> Result<Self> {
        if ids.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "{} token ids for a grid of {}",
                ids.len(),
                shape.len()
            )));
        }
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= v_vis) {
            return Err(Error::Vocabulary(format!(
                "visual id {bad} outside codebook of size {v_vis}"
            )));
        }
        Ok(Self { shape, ids })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn at(&self, c: Coord) -> Result<u32> {
        Ok(self.ids[self.shape.flatten_index(c)?])
    }
}
