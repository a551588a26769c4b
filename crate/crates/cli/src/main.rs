//! `maskvid` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maskvid_core::decoder::{commit_decode, DecodeConfig, DecodeTrace};
use maskvid_core::harness::{self, Dataset, EvalReport, Evaluated, PredictorKind, RunConfig};
use maskvid_core::io;
use maskvid_core::tasks::make_condition;
use maskvid_core::tokenizer::decode;
use maskvid_core::vocab::VocabularyLayout;
use maskvid_core::{
    Error, GridShape, PottsParams, Result, Schedule, StageExt, TaskKind, TaskSpec, TokenGrid,
    VideoTensor,
};

#[derive(Parser)]
#[command(
    name = "maskvid",
    version,
    about = "Multi-task masked token video generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArg {
    /// Directory written by `gen-data`; regenerated from the config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic training and evaluation videos.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the k-means codebook.
    FitTokenizer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
    },
    /// Train the predictor over the configured task mixture.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        codebook: PathBuf,
    },
    /// Generate one video for one task.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codebook: PathBuf,
        /// Predictor parameters; a zero-parameter predictor is used when absent.
        #[arg(long)]
        predictor: Option<PathBuf>,
        /// Task code: FP, FI, OPC, OPV, OPH, OPD, IPC, IPD, CG, CFP.
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        schedule: Option<Schedule>,
        #[arg(long)]
        class: Option<u32>,
        /// Input video; not needed for CG.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Write the per-step token grids and predictor inputs.
        #[arg(long)]
        trace: bool,
    },
    /// Evaluate saved artifacts on the held-out videos.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Full pipeline: data, tokenizer, training, evaluation.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).stage("config")?;
            RunConfig::parse(&text).stage("config")?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn video_name(i: usize) -> String {
    format!("video_{i:04}.mgvd")
}

fn save_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, v) in data.videos.iter().enumerate() {
        io::save_video(&dir.join(video_name(i)), v)?;
    }
    let labels: String = data.labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(dir.join("labels.txt"), labels)?;
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(dir.join("labels.txt"))?;
    let labels = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad label '{l}'")))
        })
        .collect::<Result<Vec<u32>>>()?;
    let videos = (0..labels.len())
        .map(|i| io::load_video(&dir.join(video_name(i))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { videos, labels })
}

fn training_data(cfg: &RunConfig, data: &DataArg) -> Result<Dataset> {
    match &data.data {
        Some(dir) => load_dataset(&dir.join("train")).stage("data"),
        None => harness::training_set(cfg).stage("data"),
    }
}

fn write_trace(
    dir: &Path,
    trace: &DecodeTrace,
    layout: &VocabularyLayout,
    spec: &TaskSpec,
    shape: &GridShape,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (t, step) in trace.steps.iter().enumerate() {
        let grid = TokenGrid::new(*shape, step.estimate.clone(), layout.v_vis)?;
        io::save_tokens(&dir.join(format!("step_{t:02}.mgtk")), &grid, layout.v_vis)?;
        let seq = layout.input_sequence(spec.kind, spec.prefix_class()?, &step.corrupted)?;
        let line: Vec<String> = seq.iter().map(u32::to_string).collect();
        fs::write(
            dir.join(format!("step_{t:02}_input.txt")),
            format!("{}\nn_finalized = {}\n", line.join(" "), step.n_finalized),
        )?;
    }
    Ok(())
}

fn print_report(report: &EvalReport) {
    for t in &report.tasks {
        let generated = t
            .generated_accuracy
            .map_or_else(|| "none".to_string(), |a| format!("{a:.4}"));
        println!(
            "{:<4} accuracy {:.4}  baseline {:.4}  generated {generated}  psnr {:.2} dB",
            t.kind.code(),
            t.accuracy,
            t.baseline_accuracy,
            t.psnr
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = load_config(&common)?;
            save_dataset(&common.out.join("train"), &harness::training_set(&cfg)?).stage("data")?;
            save_dataset(&common.out.join("eval"), &harness::evaluation_set(&cfg)?)
                .stage("data")?;
            println!(
                "wrote {} training and {} evaluation videos",
                cfg.data.n_videos, cfg.n_eval
            );
        }
        Command::FitTokenizer { common, data } => {
            let cfg = load_config(&common)?;
            let train = training_data(&cfg, &data)?;
            let (cb, fit) = harness::fit_tokenizer(&cfg, &train).stage("tokenizer")?;
            fs::create_dir_all(&common.out).stage("output")?;
            io::save_codebook(&common.out.join(harness::CODEBOOK_FILE), &cb).stage("tokenizer")?;
            println!(
                "codebook of {} entries after {} iterations, distortion {:.6}",
                cb.v_vis(),
                fit.iterations,
                fit.distortion_per_iter.last().copied().unwrap_or(0.0)
            );
        }
        Command::Train {
            common,
            data,
            codebook,
        } => {
            let cfg = load_config(&common)?;
            let cb = io::load_codebook(&codebook).stage("tokenizer")?;
            let train = training_data(&cfg, &data)?;
            let (params, curve) = harness::train_predictor(&cfg, &cb, &train).stage("train")?;
            fs::create_dir_all(&common.out).stage("output")?;
            io::save_params(&common.out.join(harness::PARAMS_FILE), &params).stage("train")?;
            let report = EvalReport {
                config: cfg,
                tokenizer_distortion: Vec::new(),
                loss_curve: curve,
                tasks: Vec::new(),
                wall_clock_secs: 0.0,
            };
            fs::write(
                common.out.join(harness::LOSS_CURVE_FILE),
                report.loss_curve_csv(),
            )
            .stage("train")?;
            if let (Some(a), Some(b)) = (report.loss_curve.first(), report.loss_curve.last()) {
                println!(
                    "{} steps, loss {:.4} -> {:.4}",
                    report.loss_curve.len(),
                    a.total,
                    b.total
                );
            }
        }
        Command::Generate {
            common,
            codebook,
            predictor,
            task,
            steps,
            temperature,
            schedule,
            class,
            input,
            trace,
        } => {
            let cfg = load_config(&common)?;
            let shape = cfg.grid_shape().stage("config")?;
            let cb = io::load_codebook(&codebook).stage("tokenizer")?;
            let params = match &predictor {
                Some(p) => io::load_params(p).stage("predictor")?,
                None => PottsParams::zeros(cb.v_vis(), shape.len(), cfg.data.n_classes),
            };
            let spec = cfg.task_spec(task, class);
            spec.prefix_class().stage("config")?;
            let video = match &input {
                Some(p) => io::load_video(p).stage("input")?,
                None if task == TaskKind::ClassGeneration => {
                    VideoTensor::zeros(shape.video_dims(), cb.channels_for(&shape)?)
                }
                None => return Err(Error::Config(format!("task {task} needs --in")).at("input")),
            };
            let dcfg = DecodeConfig {
                steps: steps.unwrap_or(cfg.decode.steps),
                temperature: temperature.unwrap_or(cfg.decode.temperature),
                schedule: schedule.unwrap_or(cfg.decode.schedule),
                seed: cfg.seed,
            };
            dcfg.validate().stage("config")?;
            let bundle = make_condition(&video, &spec, &cb, &shape).stage("condition")?;
            let (tokens, steps_trace) =
                commit_decode(&params, &spec, &bundle, &dcfg).stage("decode")?;
            let out_video = decode(&tokens, &cb, &shape).stage("decode")?;
            fs::create_dir_all(&common.out).stage("output")?;
            io::save_video(&common.out.join("generated.mgvd"), &out_video).stage("output")?;
            io::save_tokens(&common.out.join("generated.mgtk"), &tokens, cb.v_vis())
                .stage("output")?;
            if trace {
                let layout = VocabularyLayout::new(cfg.data.n_classes, cb.v_vis())?;
                write_trace(
                    &common.out.join("trace"),
                    &steps_trace,
                    &layout,
                    &spec,
                    &shape,
                )
                .stage("output")?;
            }
            println!("generated {task} in {} steps", dcfg.steps);
        }
        Command::Evaluate {
            common,
            codebook,
            predictor,
        } => {
            let cfg = load_config(&common)?;
            let cb = io::load_codebook(&codebook).stage("tokenizer")?;
            let params = match &predictor {
                Some(p) => Some(io::load_params(p).stage("predictor")?),
                None => None,
            };
            let evaluated = match (&params, cfg.predictor) {
                (_, PredictorKind::Oracle) => Evaluated::Oracle {
                    eps: cfg.oracle_eps,
                },
                (Some(p), _) => Evaluated::Params(p),
                (None, _) => {
                    return Err(Error::Config(
                        "--predictor is required unless predictor.kind = oracle".into(),
                    ));
                }
            };
            let eval = harness::evaluation_set(&cfg).stage("data")?;
            let tasks = harness::evaluate(&cfg, &cb, evaluated, &eval).stage("evaluate")?;
            let report = EvalReport {
                config: cfg,
                tokenizer_distortion: Vec::new(),
                loss_curve: Vec::new(),
                tasks,
                wall_clock_secs: 0.0,
            };
            fs::create_dir_all(&common.out).stage("output")?;
            fs::write(common.out.join(harness::REPORT_FILE), report.to_text()).stage("report")?;
            print_report(&report);
        }
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            let report = harness::run_experiment(&cfg, &common.out)?;
            print_report(&report);
            println!("wall clock {:.2} s", report.wall_clock_secs);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
