//! Shared fixtures for the pipeline benchmarks.

use maskvid_core::masking::{mask_regions, sample_training_mask};
use maskvid_core::predictor::{Example, TrainingVideo};
use maskvid_core::{
    commit_mask, make_condition, Codebook, ConditionBundle, GridShape, PottsParams, Rng, Schedule,
    TaskKind, TaskSpec, VideoTensor,
};

/// Default desk-scale setup: 16x32x32 videos, 4x8x8 blocks, 32 codes.
pub struct Fixture {
    pub shape: GridShape,
    pub codebook: Codebook,
    pub video: VideoTensor,
    pub params: PottsParams,
    pub spec: TaskSpec,
    pub bundle: ConditionBundle,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let shape = GridShape::new((4, 4, 4), (4, 8, 8)).unwrap();
        let d = shape.video_dims();
        let v_vis = 32;
        let dim = shape.block_voxels();
        let codebook = Codebook::new(
            v_vis,
            dim,
            (0..v_vis * dim).map(|_| rng.uniform() as f32).collect(),
        )
        .unwrap();
        let video = VideoTensor::new(
            d.t,
            d.h,
            d.w,
            1,
            (0..d.voxels()).map(|_| rng.uniform() as f32).collect(),
        )
        .unwrap();
        let mut params = PottsParams::zeros(v_vis, shape.len(), 4);
        for (_, block) in params.blocks_mut() {
            for x in block.iter_mut() {
                *x = rng.uniform() - 0.5;
            }
        }
        let spec = TaskSpec::new(TaskKind::FramePrediction);
        let bundle = make_condition(&video, &spec, &codebook, &shape).unwrap();
        Self {
            shape,
            codebook,
            video,
            params,
            spec,
            bundle,
        }
    }

    /// A training batch of `size` corrupted examples of the fixture video.
    pub fn batch(&self, size: usize, rng: &mut Rng) -> Vec<Example> {
        let item =
            TrainingVideo::new(self.video.clone(), None, &self.codebook, &self.shape).unwrap();
        let cond = self.bundle.cond_tokens.ids();
        (0..size)
            .map(|_| {
                let m = sample_training_mask(self.shape.len(), Schedule::Cosine, rng).unwrap();
                let targets = item.tokens.ids().to_vec();
                Example {
                    task: self.spec.kind,
                    class: None,
                    corrupted: commit_mask(
                        &targets,
                        cond,
                        &self.bundle.allpadded,
                        &m.scores,
                        m.cutoff,
                    )
                    .unwrap(),
                    regions: mask_regions(&self.bundle.allpadded, &m.scores, m.cutoff).unwrap(),
                    targets,
                }
            })
            .collect()
    }
}
