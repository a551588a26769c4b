//! End-to-end runs: data, tokenizer, predictor training, and per-task evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::decoder::{commit_decode, DecodeConfig};
use crate::error::{Result, StageExt};
use crate::grid::{GridShape, TokenGrid};
use crate::io;
use crate::predictor::{
    train, LossBreakdown, OraclePredictor, PottsParams, TokenPredictor, TrainingVideo,
};
use crate::rng::Rng;
use crate::tasks::{make_condition, TaskKind};
use crate::tokenizer::{decode, encode, fit_codebook, Codebook, FitReport};
use crate::video::VideoTensor;

use super::config::{PredictorKind, RunConfig};
use super::metrics::{psnr, token_accuracy};
use super::synthetic::gen_synthetic;

/// Random stream ids derived from the run seed.
const TRAIN_DATA_STREAM: u64 = 1;
const EVAL_DATA_STREAM: u64 = 2;
const KMEANS_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;
const DECODE_STREAM: u64 = 5;

pub const REPORT_FILE: &str = "report.txt";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const TIMING_FILE: &str = "timing.txt";
pub const CODEBOOK_FILE: &str = "codebook.mgcb";
pub const PARAMS_FILE: &str = "predictor.mgpt";
pub const CONFIG_FILE: &str = "config.txt";

fn stream_seed(seed: u64, stream: u64) -> u64 {
    Rng::with_stream(seed, stream).next_u64()
}

/// Labelled videos.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: Vec<VideoTensor>,
    pub labels: Vec<u32>,
}

pub fn training_set(cfg: &RunConfig) -> Result<Dataset> {
    let spec = crate::harness::SyntheticDatasetSpec {
        seed: stream_seed(cfg.seed, TRAIN_DATA_STREAM),
        ..cfg.data.clone()
    };
    let (videos, labels) = gen_synthetic(&spec)?;
    Ok(Dataset { videos, labels })
}

/// Held-out videos drawn from a stream disjoint from the training set.
pub fn evaluation_set(cfg: &RunConfig) -> Result<Dataset> {
    let spec = crate::harness::SyntheticDatasetSpec {
        n_videos: cfg.n_eval,
        seed: stream_seed(cfg.seed, EVAL_DATA_STREAM),
        ..cfg.data.clone()
    };
    let (videos, labels) = gen_synthetic(&spec)?;
    Ok(Dataset { videos, labels })
}

pub fn fit_tokenizer(cfg: &RunConfig, data: &Dataset) -> Result<(Codebook, FitReport)> {
    let shape = cfg.grid_shape()?;
    let mut rng = Rng::new(stream_seed(cfg.seed, KMEANS_STREAM));
    fit_codebook(&data.videos, &shape, cfg.v_vis, cfg.max_iter, &mut rng)
}

/// Trains the predictor on the configured task mixture. The returned
/// parameters are rounded to the precision of the parameter file, so a saved
/// and reloaded predictor behaves identically.
pub fn train_predictor(
    cfg: &RunConfig,
    codebook: &Codebook,
    data: &Dataset,
) -> Result<(PottsParams, Vec<LossBreakdown>)> {
    let shape = cfg.grid_shape()?;
    let items = data
        .videos
        .iter()
        .zip(&data.labels)
        .map(|(v, &l)| TrainingVideo::new(v.clone(), Some(l), codebook, &shape))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<_> = cfg.tasks.iter().map(|&k| cfg.task_spec(k, None)).collect();
    let mut params = PottsParams::zeros(codebook.v_vis(), shape.len(), cfg.data.n_classes);
    let mut rng = Rng::new(stream_seed(cfg.seed, TRAIN_STREAM));
    let curve = train(
        &mut params,
        &items,
        &tasks,
        codebook,
        &shape,
        &cfg.train,
        &mut rng,
    )?;
    let params = io::params_from_bytes(&io::params_to_bytes(&params)?)?;
    Ok((params, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskReport {
    pub kind: TaskKind,
    /// Mean token accuracy of the evaluated predictor over all positions.
    pub accuracy: f64,
    /// Same, for the zero-parameter predictor with the same decoding seeds.
    pub baseline_accuracy: f64,
    /// Accuracy over positions whose supervoxel holds padding only; `None`
    /// when no video has such positions.
    pub generated_accuracy: Option<f64>,
    pub psnr: f64,
    pub baseline_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: RunConfig,
    pub tokenizer_distortion: Vec<f64>,
    pub loss_curve: Vec<LossBreakdown>,
    pub tasks: Vec<TaskReport>,
    /// Kept out of the report text so that identical runs produce identical files.
    pub wall_clock_secs: f64,
}

impl EvalReport {
    pub fn task(&self, kind: TaskKind) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.kind == kind)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# maskvid evaluation report");
        let _ = writeln!(
            s,
            "# FVD and IS need pretrained video networks; token accuracy, PSNR and the loss curve replace them here."
        );
        let _ = writeln!(s, "predictor = {}", self.config.predictor.name());
        let _ = writeln!(s, "eval.videos = {}", self.config.n_eval);
        let _ = writeln!(
            s,
            "tokenizer.iterations = {}",
            self.tokenizer_distortion.len()
        );
        if let Some(d) = self.tokenizer_distortion.last() {
            let _ = writeln!(s, "tokenizer.distortion = {d:.9}");
        }
        let _ = writeln!(s, "train.steps = {}", self.loss_curve.len());
        if let (Some(first), Some(last)) = (self.loss_curve.first(), self.loss_curve.last()) {
            let _ = writeln!(s, "train.first_loss = {:.9}", first.total);
            let _ = writeln!(s, "train.final_loss = {:.9}", last.total);
        }
        for t in &self.tasks {
            let code = t.kind.code();
            let _ = writeln!(s, "task.{code}.accuracy = {:.6}", t.accuracy);
            let _ = writeln!(
                s,
                "task.{code}.baseline_accuracy = {:.6}",
                t.baseline_accuracy
            );
            match t.generated_accuracy {
                Some(a) => {
                    let _ = writeln!(s, "task.{code}.generated_accuracy = {a:.6}");
                }
                None => {
                    let _ = writeln!(s, "task.{code}.generated_accuracy = none");
                }
            }
            let _ = writeln!(s, "task.{code}.psnr = {:.6}", t.psnr);
            let _ = writeln!(s, "task.{code}.baseline_psnr = {:.6}", t.baseline_psnr);
        }
        s.push_str("\n# configuration\n");
        s.push_str(&self.config.to_text());
        s
    }

    pub fn loss_curve_csv(&self) -> String {
        let mut s = String::from("step,total,refine,mask,recons,n_refine,n_mask,n_recons\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{:.9},{:.9},{:.9},{:.9},{},{},{}",
                l.total, l.refine, l.mask, l.recons, l.n_refine, l.n_mask, l.n_recons
            );
        }
        s
    }
}

/// The predictor evaluated in a run.
pub enum Evaluated<'a> {
    Params(&'a PottsParams),
    Oracle { eps: f64 },
}

struct Scores {
    hits: usize,
    total: usize,
    gen_hits: usize,
    gen_total: usize,
    psnr_sum: f64,
}

impl Scores {
    fn new() -> Self {
        Self {
            hits: 0,
            total: 0,
            gen_hits: 0,
            gen_total: 0,
            psnr_sum: 0.0,
        }
    }

    fn add(
        &mut self,
        pred: &TokenGrid,
        truth: &TokenGrid,
        generated: &[bool],
        p: f64,
    ) -> Result<()> {
        let n = truth.len();
        self.hits += (token_accuracy(pred, truth, None)? * n as f64).round() as usize;
        self.total += n;
        let n_gen = generated.iter().filter(|&&g| g).count();
        if n_gen > 0 {
            self.gen_hits +=
                (token_accuracy(pred, truth, Some(generated))? * n_gen as f64).round() as usize;
            self.gen_total += n_gen;
        }
        self.psnr_sum += p;
        Ok(())
    }
}

fn decode_one<P: TokenPredictor + ?Sized>(
    predictor: &P,
    spec: &crate::tasks::TaskSpec,
    bundle: &crate::tasks::ConditionBundle,
    cfg: &DecodeConfig,
    codebook: &Codebook,
    shape: &GridShape,
) -> Result<(TokenGrid, VideoTensor)> {
    let (tokens, _) = commit_decode(predictor, spec, bundle, cfg)?;
    let video = decode(&tokens, codebook, shape)?;
    Ok((tokens, video))
}

/// Decodes every configured task on every held-out video with the evaluated
/// predictor and with the zero-parameter baseline, sharing decoding seeds.
pub fn evaluate(
    cfg: &RunConfig,
    codebook: &Codebook,
    predictor: Evaluated<'_>,
    data: &Dataset,
) -> Result<Vec<TaskReport>> {
    let shape = cfg.grid_shape()?;
    let baseline = PottsParams::zeros(codebook.v_vis(), shape.len(), cfg.data.n_classes);
    let truths = data
        .videos
        .iter()
        .map(|v| encode(v, codebook, &shape))
        .collect::<Result<Vec<_>>>()?;
    let mut seeds = Rng::new(stream_seed(cfg.seed, DECODE_STREAM));
    let mut reports = Vec::with_capacity(cfg.tasks.len());
    for &kind in &cfg.tasks {
        let mut main = Scores::new();
        let mut base = Scores::new();
        for ((video, &label), truth) in data.videos.iter().zip(&data.labels).zip(&truths) {
            let spec = cfg.task_spec(kind, Some(label));
            let bundle = make_condition(video, &spec, codebook, &shape)?;
            let dcfg = DecodeConfig {
                seed: seeds.next_u64(),
                ..cfg.decode
            };
            let (tokens, out) = match predictor {
                Evaluated::Params(p) => decode_one(p, &spec, &bundle, &dcfg, codebook, &shape)?,
                Evaluated::Oracle { eps } => {
                    let oracle = OraclePredictor::new(truth.ids().to_vec(), eps, codebook.v_vis())?;
                    decode_one(&oracle, &spec, &bundle, &dcfg, codebook, &shape)?
                }
            };
            main.add(&tokens, truth, &bundle.allpadded, psnr(&out, video)?)?;
            let (tokens, out) = decode_one(&baseline, &spec, &bundle, &dcfg, codebook, &shape)?;
            base.add(&tokens, truth, &bundle.allpadded, psnr(&out, video)?)?;
        }
        let n = data.videos.len().max(1) as f64;
        reports.push(TaskReport {
            kind,
            accuracy: main.hits as f64 / main.total.max(1) as f64,
            baseline_accuracy: base.hits as f64 / base.total.max(1) as f64,
            generated_accuracy: (main.gen_total > 0)
                .then(|| main.gen_hits as f64 / main.gen_total as f64),
            psnr: main.psnr_sum / n,
            baseline_psnr: base.psnr_sum / n,
        });
    }
    Ok(reports)
}

/// Runs the whole pipeline and writes the codebook, predictor, report, loss
/// curve, resolved config, and timing into `out_dir`.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<EvalReport> {
    let start = Instant::now();
    cfg.validate().stage("config")?;
    fs::create_dir_all(out_dir).stage("output")?;
    let train_set = training_set(cfg).stage("data")?;
    let eval_set = evaluation_set(cfg).stage("data")?;
    let (codebook, fit) = fit_tokenizer(cfg, &train_set).stage("tokenizer")?;
    io::save_codebook(&out_dir.join(CODEBOOK_FILE), &codebook).stage("tokenizer")?;

    let shape = cfg.grid_shape()?;
    let (params, curve) = match cfg.predictor {
        PredictorKind::Potts => train_predictor(cfg, &codebook, &train_set).stage("train")?,
        _ => (
            PottsParams::zeros(codebook.v_vis(), shape.len(), cfg.data.n_classes),
            Vec::new(),
        ),
    };
    io::save_params(&out_dir.join(PARAMS_FILE), &params).stage("train")?;

    let evaluated = match cfg.predictor {
        PredictorKind::Oracle => Evaluated::Oracle {
            eps: cfg.oracle_eps,
        },
        _ => Evaluated::Params(&params),
    };
    let tasks = evaluate(cfg, &codebook, evaluated, &eval_set).stage("evaluate")?;
    let report = EvalReport {
        config: cfg.clone(),
        tokenizer_distortion: fit.distortion_per_iter,
        loss_curve: curve,
        tasks,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    write_report(&report, out_dir)?;
    Ok(report)
}

pub fn write_report(report: &EvalReport, out_dir: &Path) -> Result<()> {
    fs::write(out_dir.join(REPORT_FILE), report.to_text()).stage("report")?;
    fs::write(out_dir.join(LOSS_CURVE_FILE), report.loss_curve_csv()).stage("report")?;
    fs::write(out_dir.join(CONFIG_FILE), report.config.to_text()).stage("report")?;
    fs::write(
        out_dir.join(TIMING_FILE),
        format!("wall_clock_secs = {:.3}\n", report.wall_clock_secs),
    )
    .stage("report")?;
    Ok(())
}
