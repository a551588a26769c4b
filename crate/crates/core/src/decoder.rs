//! Iterative non-autoregressive decoding with conditional masking.
//!
//! Decoding starts with every position selected. At each of `K` steps the
//! selected positions are rebuilt from the condition (condition token or
//! `[MASK]`), every selected position is resampled from the predictor, its
//! score becomes the probability of the sampled id plus annealed Gumbel
//! noise, and the `ceil(gamma((t+1)/K) * N)` lowest-scoring positions stay
//! selected for the next step while the rest are frozen.

use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};
use crate::masking::{commit_mask, cutoff_kth_smallest, masked_count, Cutoff, Schedule};
use crate::predictor::TokenPredictor;
use crate::rng::Rng;
use crate::tasks::{make_condition, ConditionBundle, TaskSpec};
use crate::tokenizer::{decode, Codebook};
use crate::video::VideoTensor;
use crate::vocab::InputToken;

/// Score given to frozen positions. Sorting above every finite score keeps
/// them out of the selected set even when Gumbel noise pushes live scores
/// past 1.
pub const FROZEN_SCORE: f64 = f64::INFINITY;

/// Random stream ids derived from [`DecodeConfig::seed`].
const SAMPLE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub steps: usize,
    pub temperature: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for DecodeConfig {
    /// 12 steps, temperature 4.5, cosine schedule.
    fn default() -> Self {
        Self {
            steps: 12,
            temperature: 4.5,
            schedule: Schedule::Cosine,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    /// Exponential schedule at temperature 400.
    pub fn exponential_preset() -> Self {
        Self {
            temperature: 400.0,
            schedule: Schedule::Exponential,
            ..Self::default()
        }
    }

    /// Uniform schedule at temperature 7.5.
    pub fn uniform_preset() -> Self {
        Self {
            temperature: 7.5,
            schedule: Schedule::Uniform,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("decoding needs at least one step".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// State after one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSnapshot {
    /// Predictor input of this step.
    pub corrupted: Vec<InputToken>,
    /// Current estimate after sampling.
    pub estimate: Vec<u32>,
    /// Scores after freezing.
    pub scores: Vec<f64>,
    pub cutoff: Cutoff,
    pub n_finalized: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeTrace {
    pub steps: Vec<StepSnapshot>,
}

/// Inverse-CDF draw from a probability row; never returns a zero-probability id.
fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

/// Decodes with random streams derived from `config.seed`.
pub fn commit_decode<P: TokenPredictor + ?Sized>(
    predictor: &P,
    task: &TaskSpec,
    bundle: &ConditionBundle,
    config: &DecodeConfig,
) -> Result<(TokenGrid, DecodeTrace)> {
    let mut sample_rng = Rng::with_stream(config.seed, SAMPLE_STREAM);
    let mut noise_rng = Rng::with_stream(config.seed, NOISE_STREAM);
    commit_decode_with(
        predictor,
        task,
        bundle,
        config,
        &mut sample_rng,
        &mut noise_rng,
    )
}

/// Decodes with explicit streams: `sample_rng` draws one uniform per selected
/// position per step in raster order, `noise_rng` draws the Gumbel noise.
pub fn commit_decode_with<P: TokenPredictor + ?Sized>(
    predictor: &P,
    task: &TaskSpec,
    bundle: &ConditionBundle,
    config: &DecodeConfig,
    sample_rng: &mut Rng,
    noise_rng: &mut Rng,
) -> Result<(TokenGrid, DecodeTrace)> {
    config.validate()?;
    let shape: GridShape = *bundle.cond_tokens.shape();
    let n = shape.len();
    if bundle.allpadded.len() != n {
        return Err(Error::Dimension(
            "allpadded does not match the token grid".into(),
        ));
    }
    let v_vis = predictor.v_vis();
    let class = task.prefix_class()?;
    let k_steps = config.steps;

    let mut scores = vec![0.0f64; n];
    let mut cutoff = Cutoff::PosInfinity;
    let mut estimate = vec![0u32; n];
    let mut trace = DecodeTrace::default();
    for t in 0..k_steps {
        let corrupted = commit_mask(
            &estimate,
            bundle.cond_tokens.ids(),
            &bundle.allpadded,
            &scores,
            cutoff,
        )?;
        let probs = predictor.predict(task.kind, class, &corrupted, &shape)?;
        if probs.rows() != n || probs.cols() != v_vis {
            return Err(Error::Contract(format!(
                "predictor returned {} x {}, expected {n} x {v_vis}",
                probs.rows(),
                probs.cols()
            )));
        }
        probs.check_stochastic()?;

        for i in 0..n {
            if cutoff.selects(scores[i], i) {
                let row = probs.row(i);
                let id = sample_row(row, sample_rng.uniform());
                estimate[i] = id as u32;
                scores[i] = row[id];
            }
        }
        let anneal = config.temperature * (1.0 - (t + 1) as f64 / k_steps as f64);
        for s in scores.iter_mut() {
            if *s < 1.0 {
                *s += anneal * noise_rng.gumbel();
            }
        }
        if let Some(i) = scores
            .iter()
            .position(|s| !s.is_finite() && *s != FROZEN_SCORE)
        {
            return Err(Error::Numeric(format!(
                "score at position {i} is {}",
                scores[i]
            )));
        }
        let k = masked_count(config.schedule, (t + 1) as f64 / k_steps as f64, n)?;
        cutoff = cutoff_kth_smallest(&scores, k)?;
        let mut n_finalized = 0;
        for (i, s) in scores.iter_mut().enumerate() {
            if !cutoff.selects(*s, i) {
                *s = FROZEN_SCORE;
                n_finalized += 1;
            }
        }
        trace.steps.push(StepSnapshot {
            corrupted,
            estimate: estimate.clone(),
            scores: scores.clone(),
            cutoff,
            n_finalized,
        });
    }
    Ok((TokenGrid::new(shape, estimate, v_vis)?, trace))
}

/// Result of conditional generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub video: VideoTensor,
    pub tokens: TokenGrid,
    pub bundle: ConditionBundle,
    pub trace: DecodeTrace,
}

/// Builds the task condition, decodes tokens, and maps them back to pixels.
/// Without an input video (class-conditional generation) an all-zero video
/// stands in, since no voxel of it is used as condition.
pub fn generate<P: TokenPredictor + ?Sized>(
    video: Option<&VideoTensor>,
    spec: &TaskSpec,
    codebook: &Codebook,
    shape: &GridShape,
    predictor: &P,
    config: &DecodeConfig,
) -> Result<Generation> {
    let blank;
    let video = match video {
        Some(v) => v,
        None => {
            blank = VideoTensor::zeros(shape.video_dims(), codebook.channels_for(shape)?);
            &blank
        }
    };
    let bundle = make_condition(video, spec, codebook, shape)?;
    let (tokens, trace) = commit_decode(predictor, spec, &bundle, config)?;
    let video = decode(&tokens, codebook, shape)?;
    Ok(Generation {
        video,
        tokens,
        bundle,
        trace,
    })
}
