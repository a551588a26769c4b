//! Moving-rectangle videos whose class label fixes the motion direction.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::video::{VideoDims, VideoTensor};

/// Per-frame displacement `(dy, dx)` of each class: right, left, down, up.
pub const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub n_videos: usize,
    pub dims: VideoDims,
    pub n_classes: usize,
    pub rect: (usize, usize),
    /// Rectangle intensities; each video draws one.
    pub levels: Vec<f32>,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            n_videos: 64,
            dims: VideoDims::new(16, 32, 32),
            n_classes: 4,
            rect: (8, 8),
            levels: vec![0.5, 1.0],
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.t == 0 || d.h == 0 || d.w == 0 {
            return Err(Error::Config("video dimensions must be positive".into()));
        }
        if self.rect.0 == 0 || self.rect.1 == 0 || self.rect.0 > d.h || self.rect.1 > d.w {
            return Err(Error::Config(format!(
                "rectangle {}x{} does not fit a {}x{} frame",
                self.rect.0, self.rect.1, d.h, d.w
            )));
        }
        if self.n_classes == 0 || self.n_classes > DIRECTIONS.len() {
            return Err(Error::Config(format!(
                "n_classes {} outside 1..={}",
                self.n_classes,
                DIRECTIONS.len()
            )));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config(
                "intensity levels must be non-empty and in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Renders one video: background 0, an `rh x rw` rectangle of the given
/// intensity with top-left corner `(y0 + dy*t, x0 + dx*t)` wrapped modulo the
/// frame.
pub fn render(
    dims: VideoDims,
    rect: (usize, usize),
    origin: (usize, usize),
    class: usize,
    level: f32,
) -> Result<VideoTensor> {
    let (dy, dx) = *DIRECTIONS
        .get(class)
        .ok_or_else(|| Error::Config(format!("class {class} has no motion direction")))?;
    let mut v = VideoTensor::zeros(dims, 1);
    for t in 0..dims.t {
        let top = (origin.0 as isize + dy * t as isize).rem_euclid(dims.h as isize) as usize;
        let left = (origin.1 as isize + dx * t as isize).rem_euclid(dims.w as isize) as usize;
        for ry in 0..rect.0 {
            for rx in 0..rect.1 {
                v.set(t, (top + ry) % dims.h, (left + rx) % dims.w, 0, level);
            }
        }
    }
    Ok(v)
}

/// Generates videos and labels. Labels cycle through the classes; origins and
/// levels come from the seeded generator.
pub fn gen_synthetic(spec: &SyntheticDatasetSpec) -> Result<(Vec<VideoTensor>, Vec<u32>)> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let mut videos = Vec::with_capacity(spec.n_videos);
    let mut labels = Vec::with_capacity(spec.n_videos);
    for i in 0..spec.n_videos {
        let class = i % spec.n_classes;
        let origin = (rng.below(spec.dims.h), rng.below(spec.dims.w));
        let level = spec.levels[rng.below(spec.levels.len())];
        videos.push(render(spec.dims, spec.rect, origin, class, level)?);
        labels.push(class as u32);
    }
    Ok((videos, labels))
}
