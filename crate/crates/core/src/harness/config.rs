//! Flat `key = value` run configuration with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are configuration errors.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::decoder::DecodeConfig;
use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::predictor::TrainConfig;
use crate::tasks::{condition_region, TaskKind, TaskSpec};
use crate::video::VideoDims;

use super::synthetic::SyntheticDatasetSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    /// Trained log-linear predictor.
    Potts,
    /// Knows the ground-truth tokens of each evaluation video.
    Oracle,
    /// Zero parameters, hence uniform over the codebook.
    Untrained,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Potts => "potts",
            PredictorKind::Oracle => "oracle",
            PredictorKind::Untrained => "untrained",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "potts" => Ok(PredictorKind::Potts),
            "oracle" => Ok(PredictorKind::Oracle),
            "untrained" => Ok(PredictorKind::Untrained),
            other => Err(Error::Config(format!("unknown predictor kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Training set; its `seed` field is ignored in favor of streams of `seed`.
    pub data: SyntheticDatasetSpec,
    pub n_eval: usize,
    pub v_vis: usize,
    pub blocks: (usize, usize, usize),
    pub max_iter: usize,
    pub predictor: PredictorKind,
    pub oracle_eps: f64,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub tasks: Vec<TaskKind>,
    /// Geometry shared by all tasks; `kind` and `class_id` are set per use.
    pub task: TaskSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: SyntheticDatasetSpec::default(),
            n_eval: 100,
            v_vis: 32,
            blocks: (4, 8, 8),
            max_iter: 20,
            predictor: PredictorKind::Potts,
            oracle_eps: 0.0,
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            tasks: TaskKind::ALL.to_vec(),
            task: TaskSpec {
                t: 4,
                t1: 4,
                t2: 4,
                ..TaskSpec::new(TaskKind::FramePrediction)
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("key '{key}' given twice")));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. Values are checked for syntax only; see [`Self::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "data.n_videos" => self.data.n_videos = parse(key, v)?,
            "data.n_eval" => self.n_eval = parse(key, v)?,
            "data.t" => self.data.dims.t = parse(key, v)?,
            "data.h" => self.data.dims.h = parse(key, v)?,
            "data.w" => self.data.dims.w = parse(key, v)?,
            "data.n_classes" => self.data.n_classes = parse(key, v)?,
            "data.rect_h" => self.data.rect.0 = parse(key, v)?,
            "data.rect_w" => self.data.rect.1 = parse(key, v)?,
            "data.levels" => self.data.levels = parse_list(key, v)?,
            "tokenizer.v_vis" => self.v_vis = parse(key, v)?,
            "tokenizer.block_t" => self.blocks.0 = parse(key, v)?,
            "tokenizer.block_h" => self.blocks.1 = parse(key, v)?,
            "tokenizer.block_w" => self.blocks.2 = parse(key, v)?,
            "tokenizer.max_iter" => self.max_iter = parse(key, v)?,
            "predictor.kind" => self.predictor = v.parse()?,
            "predictor.lr" => self.train.learning_rate = parse(key, v)?,
            "predictor.epochs" => self.train.epochs = parse(key, v)?,
            "predictor.batch_size" => self.train.batch_size = parse(key, v)?,
            "predictor.label_smoothing" => self.train.label_smoothing = parse(key, v)?,
            "predictor.oracle_eps" => self.oracle_eps = parse(key, v)?,
            "train.schedule" => self.train.schedule = v.parse()?,
            "decode.schedule" => self.decode.schedule = v.parse()?,
            "decode.steps" => self.decode.steps = parse(key, v)?,
            "decode.temperature" => self.decode.temperature = parse(key, v)?,
            "decode.preset" => {
                let seed = self.decode.seed;
                self.decode = match v {
                    "default" | "cosine" => DecodeConfig::default(),
                    "exponential" => DecodeConfig::exponential_preset(),
                    "uniform" => DecodeConfig::uniform_preset(),
                    other => return Err(Error::Config(format!("unknown decode preset '{other}'"))),
                };
                self.decode.seed = seed;
            }
            "tasks" => {
                let tasks: Vec<TaskKind> = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?;
                self.tasks = tasks;
            }
            "task.t" => self.task.t = parse(key, v)?,
            "task.t1" => self.task.t1 = parse(key, v)?,
            "task.t2" => self.task.t2 = parse(key, v)?,
            "task.h_frac" => self.task.h_frac = parse(key, v)?,
            "task.w_frac" => self.task.w_frac = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn grid_shape(&self) -> Result<GridShape> {
        GridShape::for_video(self.data.dims, self.blocks)
    }

    pub fn dims(&self) -> VideoDims {
        self.data.dims
    }

    /// Task spec of `kind` with the shared geometry and the given class.
    pub fn task_spec(&self, kind: TaskKind, class: Option<u32>) -> TaskSpec {
        TaskSpec {
            kind,
            class_id: if kind.uses_class() { class } else { None },
            ..self.task
        }
    }

    /// Checks every setting against the others.
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.n_eval == 0 {
            return Err(Error::Config("data.n_eval must be positive".into()));
        }
        self.grid_shape()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.v_vis == 0 {
            return Err(Error::Config("tokenizer.v_vis must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("tokenizer.max_iter must be positive".into()));
        }
        let t = &self.train;
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return Err(Error::Config("predictor.lr must be finite and >= 0".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config(
                "predictor.batch_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&t.label_smoothing) {
            return Err(Error::Config(
                "predictor.label_smoothing must be in [0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.oracle_eps) {
            return Err(Error::Config(
                "predictor.oracle_eps must be in [0, 1]".into(),
            ));
        }
        self.decode.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks must name at least one task".into()));
        }
        for &kind in &self.tasks {
            // class 0 exists whenever n_classes >= 1
            condition_region(&self.task_spec(kind, Some(0)), self.dims())?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let levels: Vec<String> = self.data.levels.iter().map(|l| l.to_string()).collect();
        let tasks: Vec<&str> = self.tasks.iter().map(|t| t.code()).collect();
        kv("seed", &self.seed);
        kv("data.n_videos", &self.data.n_videos);
        kv("data.n_eval", &self.n_eval);
        kv("data.t", &self.data.dims.t);
        kv("data.h", &self.data.dims.h);
        kv("data.w", &self.data.dims.w);
        kv("data.n_classes", &self.data.n_classes);
        kv("data.rect_h", &self.data.rect.0);
        kv("data.rect_w", &self.data.rect.1);
        kv("data.levels", &levels.join(","));
        kv("tokenizer.v_vis", &self.v_vis);
        kv("tokenizer.block_t", &self.blocks.0);
        kv("tokenizer.block_h", &self.blocks.1);
        kv("tokenizer.block_w", &self.blocks.2);
        kv("tokenizer.max_iter", &self.max_iter);
        kv("predictor.kind", &self.predictor.name());
        kv("predictor.lr", &self.train.learning_rate);
        kv("predictor.epochs", &self.train.epochs);
        kv("predictor.batch_size", &self.train.batch_size);
        kv("predictor.label_smoothing", &self.train.label_smoothing);
        kv("predictor.oracle_eps", &self.oracle_eps);
        kv("train.schedule", &self.train.schedule);
        kv("decode.schedule", &self.decode.schedule);
        kv("decode.steps", &self.decode.steps);
        kv("decode.temperature", &self.decode.temperature);
        kv("tasks", &tasks.join(","));
        kv("task.t", &self.task.t);
        kv("task.t1", &self.task.t1);
        kv("task.t2", &self.task.t2);
        kv("task.h_frac", &self.task.h_frac);
        kv("task.w_frac", &self.task.w_frac);
        s
    }
}
