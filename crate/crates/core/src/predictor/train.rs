use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};
use crate::masking::{commit_mask, mask_regions, sample_training_mask, Schedule};
use crate::rng::Rng;
use crate::tasks::{make_condition, TaskSpec};
use crate::tokenizer::{encode, Codebook};
use crate::video::VideoTensor;

use super::loss::LossBreakdown;
use super::potts::{grad_step, loss_and_gradient, Example, PottsParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 2.0,
            batch_size: 8,
            label_smoothing: 1e-4,
            schedule: Schedule::Cosine,
        }
    }
}

/// A training video with its class label and ground-truth tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingVideo {
    pub video: VideoTensor,
    pub label: Option<u32>,
    pub tokens: TokenGrid,
}

impl TrainingVideo {
    pub fn new(
        video: VideoTensor,
        label: Option<u32>,
        codebook: &Codebook,
        shape: &GridShape,
    ) -> Result<Self> {
        let tokens = encode(&video, codebook, shape)?;
        Ok(Self {
            video,
            label,
            tokens,
        })
    }
}

/// Condition tokens and padding flags of one (video, task) pair.
struct Prepared {
    cond: Vec<u32>,
    allpadded: Vec<bool>,
}

/// Draws corrupted training examples from a video set and task mixture.
struct BatchSampler<'a> {
    data: &'a [TrainingVideo],
    tasks: &'a [TaskSpec],
    prepared: Vec<Prepared>,
    n: usize,
    schedule: Schedule,
}

impl<'a> BatchSampler<'a> {
    fn new(
        data: &'a [TrainingVideo],
        tasks: &'a [TaskSpec],
        codebook: &Codebook,
        shape: &GridShape,
        schedule: Schedule,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        if tasks.is_empty() {
            return Err(Error::Config("no training tasks configured".into()));
        }
        // conditions do not depend on the class, so they are built once
        let mut prepared = Vec::with_capacity(data.len() * tasks.len());
        for item in data {
            for spec in tasks {
                let bundle = make_condition(&item.video, spec, codebook, shape)?;
                prepared.push(Prepared {
                    cond: bundle.cond_tokens.into_ids(),
                    allpadded: bundle.allpadded,
                });
            }
        }
        Ok(Self {
            data,
            tasks,
            prepared,
            n: shape.len(),
            schedule,
        })
    }

    fn example(&self, rng: &mut Rng) -> Result<Example> {
        let vi = rng.below(self.data.len());
        let ti = rng.below(self.tasks.len());
        let item = &self.data[vi];
        let spec = &self.tasks[ti];
        let class =
            if spec.kind.uses_class() {
                Some(item.label.ok_or_else(|| {
                    Error::Config(format!("task {} needs class labels", spec.kind))
                })?)
            } else {
                None
            };
        let prep = &self.prepared[vi * self.tasks.len() + ti];
        let mask = sample_training_mask(self.n, self.schedule, rng)?;
        let targets = item.tokens.ids().to_vec();
        let corrupted = commit_mask(
            &targets,
            &prep.cond,
            &prep.allpadded,
            &mask.scores,
            mask.cutoff,
        )?;
        let regions = mask_regions(&prep.allpadded, &mask.scores, mask.cutoff)?;
        Ok(Example {
            task: spec.kind,
            class,
            corrupted,
            targets,
            regions,
        })
    }

    fn batch(&self, size: usize, rng: &mut Rng) -> Result<Vec<Example>> {
        (0..size).map(|_| self.example(rng)).collect()
    }
}

/// Multi-task training.
///
/// Each step draws `batch_size` examples; each picks a video and a task
/// uniformly, builds the task condition, corrupts the ground-truth tokens with
/// a fresh training mask, and the batch takes one SGD step. An epoch is
/// `ceil(n_videos / batch_size)` steps. Returns the loss of every step.
pub fn train(
    params: &mut PottsParams,
    data: &[TrainingVideo],
    tasks: &[TaskSpec],
    codebook: &Codebook,
    shape: &GridShape,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<LossBreakdown>> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let sampler = BatchSampler::new(data, tasks, codebook, shape, config.schedule)?;
    let steps_per_epoch = data.len().div_ceil(config.batch_size);
    let mut curve = Vec::with_capacity(config.epochs * steps_per_epoch);
    for _ in 0..config.epochs * steps_per_epoch {
        let batch = sampler.batch(config.batch_size, rng)?;
        curve.push(grad_step(
            params,
            &batch,
            shape,
            config.learning_rate,
            config.label_smoothing,
        )?);
    }
    Ok(curve)
}

/// Mean loss over `n_examples` freshly corrupted examples, without updating.
#[allow(clippy::too_many_arguments)]
pub fn heldout_loss(
    params: &PottsParams,
    data: &[TrainingVideo],
    tasks: &[TaskSpec],
    codebook: &Codebook,
    shape: &GridShape,
    config: &TrainConfig,
    n_examples: usize,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    let sampler = BatchSampler::new(data, tasks, codebook, shape, config.schedule)?;
    let batch = sampler.batch(n_examples.max(1), rng)?;
    Ok(loss_and_gradient(params, &batch, shape, config.label_smoothing)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskKind;
    use crate::tokenizer::fit_codebook;

    fn noisy_videos(n: usize, shape: &GridShape, seed: u64) -> Vec<VideoTensor> {
        let mut rng = Rng::new(seed);
        let d = shape.video_dims();
        (0..n)
            .map(|_| {
                let data = (0..d.voxels())
                    .map(|_| (rng.below(4) as f32) / 3.0)
                    .collect();
                VideoTensor::new(d.t, d.h, d.w, 1, data).unwrap()
            })
            .collect()
    }

    fn setup() -> (GridShape, Codebook, Vec<TrainingVideo>) {
        let shape = GridShape::new((2, 2, 2), (2, 2, 2)).unwrap();
        let videos = noisy_videos(6, &shape, 3);
        let (cb, _) = fit_codebook(&videos, &shape, 6, 20, &mut Rng::new(0)).unwrap();
        let data = videos
            .into_iter()
            .enumerate()
            .map(|(i, v)| TrainingVideo::new(v, Some((i % 3) as u32), &cb, &shape).unwrap())
            .collect();
        (shape, cb, data)
    }

    fn all_tasks() -> Vec<TaskSpec> {
        TaskKind::ALL.into_iter().map(TaskSpec::new).collect()
    }

    #[test]
    fn first_loss_is_log_vocab_and_replay_is_exact() {
        let (shape, cb, data) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let mut p1 = PottsParams::zeros(6, shape.len(), 3);
        let c1 = train(
            &mut p1,
            &data,
            &all_tasks(),
            &cb,
            &shape,
            &cfg,
            &mut Rng::new(9),
        )
        .unwrap();
        assert!((c1[0].total - 6f64.ln()).abs() < 1e-9);
        let mut p2 = PottsParams::zeros(6, shape.len(), 3);
        let c2 = train(
            &mut p2,
            &data,
            &all_tasks(),
            &cb,
            &shape,
            &cfg,
            &mut Rng::new(9),
        )
        .unwrap();
        assert_eq!(c1, c2);
        assert_eq!(p1, p2);
        assert_eq!(c1.len(), 3);
    }

    #[test]
    fn constant_dataset_is_learned() {
        let shape = GridShape::new((2, 2, 2), (2, 2, 2)).unwrap();
        let d = shape.video_dims();
        // two distinct blocks are needed to fit a 2-entry codebook
        let mut fit_set = vec![VideoTensor::zeros(d, 1)];
        fit_set.push(VideoTensor::new(d.t, d.h, d.w, 1, vec![0.6; d.voxels()]).unwrap());
        let (cb, _) = fit_codebook(&fit_set, &shape, 2, 10, &mut Rng::new(0)).unwrap();
        let constant = VideoTensor::new(d.t, d.h, d.w, 1, vec![0.6; d.voxels()]).unwrap();
        let data = vec![TrainingVideo::new(constant.clone(), Some(0), &cb, &shape).unwrap(); 4];
        let mut p = PottsParams::zeros(2, shape.len(), 1);
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        train(
            &mut p,
            &data,
            &all_tasks(),
            &cb,
            &shape,
            &cfg,
            &mut Rng::new(1),
        )
        .unwrap();
        let heldout = vec![TrainingVideo::new(constant, Some(0), &cb, &shape).unwrap(); 2];
        let loss = heldout_loss(
            &p,
            &heldout,
            &all_tasks(),
            &cb,
            &shape,
            &cfg,
            64,
            &mut Rng::new(77),
        )
        .unwrap();
        let mean = loss.total;
        assert!(mean < 0.1 * 2f64.ln(), "held-out loss {mean}");
    }

    #[test]
    fn relabeling_classes_permutes_class_bias_rows() {
        let (shape, cb, data) = setup();
        let cfg = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        let swap = |l: Option<u32>| {
            l.map(|c| match c {
                0 => 1,
                1 => 0,
                c => c,
            })
        };
        let swapped: Vec<TrainingVideo> = data
            .iter()
            .map(|d| TrainingVideo {
                label: swap(d.label),
                ..d.clone()
            })
            .collect();
        let mut p = PottsParams::zeros(6, shape.len(), 3);
        let mut q = PottsParams::zeros(6, shape.len(), 3);
        train(
            &mut p,
            &data,
            &all_tasks(),
            &cb,
            &shape,
            &cfg,
            &mut Rng::new(4),
        )
        .unwrap();
        train(
            &mut q,
            &swapped,
            &all_tasks(),
            &cb,
            &shape,
            &cfg,
            &mut Rng::new(4),
        )
        .unwrap();
        assert_eq!(p.a, q.a);
        assert_eq!(p.b, q.b);
        assert_eq!(p.g, q.g);
        let v = 6;
        assert_eq!(p.h[0..v], q.h[v..2 * v]);
        assert_eq!(p.h[v..2 * v], q.h[0..v]);
        assert_eq!(p.h[2 * v..], q.h[2 * v..]);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (shape, cb, _) = setup();
        let mut p = PottsParams::zeros(6, shape.len(), 3);
        let r = train(
            &mut p,
            &[],
            &all_tasks(),
            &cb,
            &shape,
            &TrainConfig::default(),
            &mut Rng::new(0),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
