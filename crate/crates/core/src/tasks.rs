//! The ten generation tasks: where the condition pixels are, how the rest of
//! the video is padded, and whether a class token is part of the prefix.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};
use crate::tokenizer::{encode_condition, Codebook};
use crate::video::{VideoDims, VideoTensor, VoxelMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    /// FP: first `t` frames given.
    FramePrediction,
    /// FI: first `t1` and last `t2` frames given.
    FrameInterpolation,
    /// OPC: a centered rectangle given.
    CentralOutpainting,
    /// OPV: a centered vertical strip given.
    VerticalOutpainting,
    /// OPH: a centered horizontal strip given.
    HorizontalOutpainting,
    /// OPD: a vertical strip moving left to right given.
    DynamicOutpainting,
    /// IPC: everything but a centered rectangle given.
    CentralInpainting,
    /// IPD: everything but a moving rectangle given.
    DynamicInpainting,
    /// CG: class label only.
    ClassGeneration,
    /// CFP: class label and first `t` frames given.
    ClassFramePrediction,
}

/// How a task fills the voxels outside its condition region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    ReplicateLastFrame,
    Interpolate,
    Edge,
    Zero,
}

impl TaskKind {
    pub const COUNT: usize = 10;
    pub const ALL: [TaskKind; Self::COUNT] = [
        TaskKind::FramePrediction,
        TaskKind::FrameInterpolation,
        TaskKind::CentralOutpainting,
        TaskKind::VerticalOutpainting,
        TaskKind::HorizontalOutpainting,
        TaskKind::DynamicOutpainting,
        TaskKind::CentralInpainting,
        TaskKind::DynamicInpainting,
        TaskKind::ClassGeneration,
        TaskKind::ClassFramePrediction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            TaskKind::FramePrediction => "FP",
            TaskKind::FrameInterpolation => "FI",
            TaskKind::CentralOutpainting => "OPC",
            TaskKind::VerticalOutpainting => "OPV",
            TaskKind::HorizontalOutpainting => "OPH",
            TaskKind::DynamicOutpainting => "OPD",
            TaskKind::CentralInpainting => "IPC",
            TaskKind::DynamicInpainting => "IPD",
            TaskKind::ClassGeneration => "CG",
            TaskKind::ClassFramePrediction => "CFP",
        }
    }

    pub fn uses_class(self) -> bool {
        matches!(
            self,
            TaskKind::ClassGeneration | TaskKind::ClassFramePrediction
        )
    }

    pub fn padding(self) -> Padding {
        use TaskKind::*;
        match self {
            FramePrediction | ClassFramePrediction => Padding::ReplicateLastFrame,
            FrameInterpolation => Padding::Interpolate,
            CentralOutpainting | VerticalOutpainting | HorizontalOutpainting => Padding::Edge,
            DynamicOutpainting | CentralInpainting | DynamicInpainting | ClassGeneration => {
                Padding::Zero
            }
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        TaskKind::ALL
            .into_iter()
            .find(|k| k.code() == upper)
            .ok_or_else(|| Error::Config(format!("unknown task '{s}'")))
    }
}

/// A task with its adjustable settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Given frames for FP/CFP.
    pub t: usize,
    /// Given frames at the start for FI.
    pub t1: usize,
    /// Given frames at the end for FI.
    pub t2: usize,
    pub h_frac: f64,
    pub w_frac: f64,
    /// Required for CG/CFP, ignored otherwise.
    pub class_id: Option<u32>,
}

impl TaskSpec {
    /// Default settings: `t = 1`, `t1 = t2 = 1`, half-height, half-width.
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            t: 1,
            t1: 1,
            t2: 1,
            h_frac: 0.5,
            w_frac: 0.5,
            class_id: None,
        }
    }

    pub fn with_class(mut self, class_id: u32) -> Self {
        self.class_id = Some(class_id);
        self
    }

    /// The class token this task places in the prefix: the class for CG/CFP,
    /// no-class otherwise.
    pub fn prefix_class(&self) -> Result<Option<u32>> {
        if self.kind.uses_class() {
            self.class_id
                .map(Some)
                .ok_or_else(|| Error::Config(format!("task {} requires a class id", self.kind)))
        } else {
            Ok(None)
        }
    }

    fn validate(&self, dims: VideoDims) -> Result<()> {
        use TaskKind::*;
        let frac_ok = |f: f64| f > 0.0 && f < 1.0;
        match self.kind {
            FramePrediction | ClassFramePrediction if self.t == 0 || self.t >= dims.t => {
                Err(Error::Config(format!(
                    "{}: t = {} must be in [1, {})",
                    self.kind, self.t, dims.t
                )))
            }
            FrameInterpolation if self.t1 == 0 || self.t2 == 0 || self.t1 + self.t2 >= dims.t => {
                Err(Error::Config(format!(
                    "FI: t1 = {}, t2 = {} must be positive with t1 + t2 < {}",
                    self.t1, self.t2, dims.t
                )))
            }
            CentralOutpainting | HorizontalOutpainting | CentralInpainting | DynamicInpainting
                if !frac_ok(self.h_frac) =>
            {
                Err(Error::Config(format!(
                    "{}: h_frac must be in (0, 1)",
                    self.kind
                )))
            }
            CentralOutpainting | VerticalOutpainting | DynamicOutpainting | CentralInpainting
            | DynamicInpainting
                if !frac_ok(self.w_frac) =>
            {
                Err(Error::Config(format!(
                    "{}: w_frac must be in (0, 1)",
                    self.kind
                )))
            }
            _ => Ok(()),
        }
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Rectangle size and centering offsets: `(h, w, top, left)`.
fn centered_rect(spec: &TaskSpec, dims: VideoDims) -> (usize, usize, usize, usize) {
    let h = round_half_up(spec.h_frac * dims.h as f64).min(dims.h);
    let w = round_half_up(spec.w_frac * dims.w as f64).min(dims.w);
    (h, w, (dims.h - h) / 2, (dims.w - w) / 2)
}

/// Left edge of the moving strip/rectangle at frame `tau`; travels from 0 at
/// the first frame to `W - w` at the last.
pub fn dynamic_left(tau: usize, w: usize, dims: VideoDims) -> usize {
    if dims.t <= 1 {
        return 0;
    }
    round_half_up((dims.w - w) as f64 * tau as f64 / (dims.t - 1) as f64)
}

/// Voxels carrying real condition pixels for `spec` on a video of extent `dims`.
pub fn condition_region(spec: &TaskSpec, dims: VideoDims) -> Result<VoxelMask> {
    use TaskKind::*;
    spec.validate(dims)?;
    let (h, w, top, left) = centered_rect(spec, dims);
    let in_rows = |y: usize| y >= top && y < top + h;
    let in_cols = |x: usize| x >= left && x < left + w;
    let moving = |tau: usize, x: usize| {
        let l = dynamic_left(tau, w, dims);
        x >= l && x < l + w
    };
    let region = match spec.kind {
        FramePrediction | ClassFramePrediction => VoxelMask::from_fn(dims, |t, _, _| t < spec.t),
        FrameInterpolation => {
            VoxelMask::from_fn(dims, |t, _, _| t < spec.t1 || t >= dims.t - spec.t2)
        }
        CentralOutpainting => VoxelMask::from_fn(dims, |_, y, x| in_rows(y) && in_cols(x)),
        VerticalOutpainting => VoxelMask::from_fn(dims, |_, _, x| in_cols(x)),
        HorizontalOutpainting => VoxelMask::from_fn(dims, |_, y, _| in_rows(y)),
        DynamicOutpainting => VoxelMask::from_fn(dims, |t, _, x| moving(t, x)),
        CentralInpainting => VoxelMask::from_fn(dims, |_, y, x| !(in_rows(y) && in_cols(x))),
        DynamicInpainting => VoxelMask::from_fn(dims, |t, y, x| !(in_rows(y) && moving(t, x))),
        ClassGeneration => VoxelMask::filled(dims, false),
    };
    if spec.kind != ClassGeneration {
        let n = region.count();
        if n == 0 {
            return Err(Error::Config(format!(
                "{}: condition region is empty",
                spec.kind
            )));
        }
        if n == dims.voxels() {
            return Err(Error::Config(format!(
                "{}: condition region covers the whole video",
                spec.kind
            )));
        }
    }
    Ok(region)
}

/// Builds the padded condition video: valid voxels copied verbatim, the rest
/// filled by the task's padding rule.
pub fn pad_condition(
    video: &VideoTensor,
    spec: &TaskSpec,
    region: &VoxelMask,
) -> Result<VideoTensor> {
    let dims = video.dims();
    if region.dims() != dims {
        return Err(Error::Dimension(
            "condition region does not match the video".into(),
        ));
    }
    if *region != condition_region(spec, dims)? {
        return Err(Error::Config(format!(
            "condition region does not belong to task {}",
            spec.kind
        )));
    }
    let mut out = VideoTensor::zeros(dims, video.channels());
    for t in 0..dims.t {
        for y in 0..dims.h {
            for x in 0..dims.w {
                if region.get(t, y, x) {
                    out.pixel_mut(t, y, x).copy_from_slice(video.pixel(t, y, x));
                }
            }
        }
    }
    match spec.kind.padding() {
        Padding::Zero => {}
        Padding::ReplicateLastFrame => {
            let last = video.frame(spec.t - 1).to_vec();
            for t in spec.t..dims.t {
                out.frame_mut(t).copy_from_slice(&last);
            }
        }
        Padding::Interpolate => {
            let a = spec.t1 - 1;
            let b = dims.t - spec.t2;
            let (fa, fb) = (video.frame(a), video.frame(b));
            for tau in spec.t1..b {
                let weight = (tau - a) as f64 / (b - a) as f64;
                for (o, (&pa, &pb)) in out.frame_mut(tau).iter_mut().zip(fa.iter().zip(fb)) {
                    *o = interpolate(pa, pb, weight);
                }
            }
        }
        Padding::Edge => {
            let (h, w, top, left) = centered_rect(spec, dims);
            let (y_lo, y_hi, x_lo, x_hi) = match spec.kind {
                TaskKind::VerticalOutpainting => (0, dims.h - 1, left, left + w - 1),
                TaskKind::HorizontalOutpainting => (top, top + h - 1, 0, dims.w - 1),
                _ => (top, top + h - 1, left, left + w - 1),
            };
            for t in 0..dims.t {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        if !region.get(t, y, x) {
                            // nearest valid pixel of a rectangle is the clamped coordinate
                            let src = video
                                .pixel(t, y.clamp(y_lo, y_hi), x.clamp(x_lo, x_hi))
                                .to_vec();
                            out.pixel_mut(t, y, x).copy_from_slice(&src);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `(1 - weight) * a + weight * b`, exact at weight 0 and 1.
pub fn interpolate(a: f32, b: f32, weight: f64) -> f32 {
    (((1.0 - weight) * a as f64 + weight * b as f64) as f32).clamp(0.0, 1.0)
}

/// Everything a task contributes to conditional generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    pub padded_video: VideoTensor,
    pub validity: VoxelMask,
    pub cond_tokens: TokenGrid,
    /// Per token: its supervoxel holds padding only.
    pub allpadded: Vec<bool>,
}

pub fn make_condition(
    video: &VideoTensor,
    spec: &TaskSpec,
    codebook: &Codebook,
    shape: &GridShape,
) -> Result<ConditionBundle> {
    let validity = condition_region(spec, video.dims())?;
    let padded_video = pad_condition(video, spec, &validity)?;
    let (cond_tokens, allpadded) = encode_condition(&padded_video, &validity, codebook, shape)?;
    Ok(ConditionBundle {
        padded_video,
        validity,
        cond_tokens,
        allpadded,
    })
}
