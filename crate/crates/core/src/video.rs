use crate::error::{Error, Result};

/// Dense pixel video with values in `[0, 1]`, stored row-major as `(t, y, x, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    t_frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

/// Spatio-temporal extent of a video, without channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VideoDims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl VideoDims {
    pub fn new(t: usize, h: usize, w: usize) -> Self {
        Self { t, h, w }
    }

    pub fn voxels(&self) -> usize {
        self.t * self.h * self.w
    }

    #[inline]
    pub fn voxel_index(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.h + y) * self.w + x
    }
}

impl VideoTensor {
    pub fn new(
        t_frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if t_frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "video extent must be positive, got {t_frames}x{height}x{width}x{channels}"
            )));
        }
        let expected = t_frames * height * width * channels;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "video data has {} values, expected {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data
            .iter()
            .position(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(Error::Numeric(format!(
                "video value {} at offset {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            t_frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(dims: VideoDims, channels: usize) -> Self {
        Self {
            t_frames: dims.t,
            height: dims.h,
            width: dims.w,
            channels,
            data: vec![0.0; dims.voxels() * channels],
        }
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> VideoDims {
        VideoDims::new(self.t_frames, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Raw mutable access; callers keep every value within `[0, 1]`.
    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, t: usize, y: usize, x: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.channels
    }

    /// All channels of one voxel.
    #[inline]
    pub fn pixel(&self, t: usize, y: usize, x: usize) -> &[f32] {
        let o = self.offset(t, y, x);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, t: usize, y: usize, x: usize) -> &mut [f32] {
        let o = self.offset(t, y, x);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.offset(t, y, x) + c]
    }

    /// Writes a value, clamping into `[0, 1]`.
    pub fn set(&mut self, t: usize, y: usize, x: usize, c: usize, value: f32) {
        let o = self.offset(t, y, x) + c;
        self.data[o] = value.clamp(0.0, 1.0);
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.height * self.width * self.channels;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        let n = self.height * self.width * self.channels;
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn same_extent(&self, other: &VideoTensor) -> bool {
        self.dims() == other.dims() && self.channels == other.channels
    }
}

/// Per-voxel boolean mask over a video extent (channels share one flag).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelMask {
    dims: VideoDims,
    data: Vec<bool>,
}

impl VoxelMask {
    pub fn filled(dims: VideoDims, value: bool) -> Self {
        Self {
            dims,
            data: vec![value; dims.voxels()],
        }
    }

    pub fn from_fn(dims: VideoDims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.voxels());
        for t in 0..dims.t {
            for y in 0..dims.h {
                for x in 0..dims.w {
                    data.push(f(t, y, x));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> bool {
        self.data[self.dims.voxel_index(t, y, x)]
    }

    pub fn set(&mut self, t: usize, y: usize, x: usize, value: bool) {
        let i = self.dims.voxel_index(t, y, x);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn frame_count(&self, t: usize) -> usize {
        let n = self.dims.h * self.dims.w;
        self.data[t * n..(t + 1) * n].iter().filter(|&&v| v).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }
}
