use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "data.n_videos = 8
data.n_eval = 4
data.t = 8
data.h = 8
data.w = 8
data.rect_h = 2
data.rect_w = 2
tokenizer.v_vis = 6
tokenizer.block_t = 2
tokenizer.block_h = 4
tokenizer.block_w = 4
predictor.epochs = 3
task.t = 2
task.t1 = 2
task.t2 = 2
decode.steps = 4
";

fn maskvid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskvid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = maskvid(&["run", "--config", &cfg, "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("report.txt")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.txt")).unwrap());
    let text = String::from_utf8(ra).unwrap();
    assert!(text.contains("task.CG.accuracy"));
    assert!(fs::read_to_string(a.join("loss_curve.csv"))
        .unwrap()
        .starts_with("step,total"));

    let c = dir.path().join("c");
    let o = maskvid(&["run", "--config", &cfg, "--seed", "9", "--out", s(&c)]);
    assert!(o.status.success());
    assert_ne!(
        fs::read(c.join("report.txt")).unwrap(),
        fs::read(a.join("report.txt")).unwrap()
    );
}

#[test]
fn staged_commands_match_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let data = dir.path().join("data");
    let art = dir.path().join("art");
    let full = dir.path().join("full");
    assert!(maskvid(&["gen-data", "--config", &cfg, "--out", s(&data)])
        .status
        .success());
    assert!(data.join("train/video_0007.mgvd").exists());
    assert!(data.join("eval/labels.txt").exists());
    let o = maskvid(&[
        "fit-tokenizer",
        "--config",
        &cfg,
        "--data",
        s(&data),
        "--out",
        s(&art),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cb = art.join("codebook.mgcb");
    let o = maskvid(&[
        "train",
        "--config",
        &cfg,
        "--data",
        s(&data),
        "--codebook",
        s(&cb),
        "--out",
        s(&art),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(maskvid(&["run", "--config", &cfg, "--out", s(&full)])
        .status
        .success());
    for f in ["codebook.mgcb", "predictor.mgpt"] {
        assert_eq!(
            fs::read(art.join(f)).unwrap(),
            fs::read(full.join(f)).unwrap(),
            "{f}"
        );
    }
    let eval = dir.path().join("eval");
    let pred = art.join("predictor.mgpt");
    let o = maskvid(&[
        "evaluate",
        "--config",
        &cfg,
        "--codebook",
        s(&cb),
        "--predictor",
        s(&pred),
        "--out",
        s(&eval),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let staged = fs::read_to_string(eval.join("report.txt")).unwrap();
    let whole = fs::read_to_string(full.join("report.txt")).unwrap();
    let tasks = |t: &str| {
        t.lines()
            .filter(|l| l.starts_with("task."))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(tasks(&staged), tasks(&whole));
}

#[test]
fn generate_writes_video_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let data = dir.path().join("data");
    let art = dir.path().join("art");
    assert!(maskvid(&["gen-data", "--config", &cfg, "--out", s(&data)])
        .status
        .success());
    assert!(
        maskvid(&["fit-tokenizer", "--config", &cfg, "--out", s(&art)])
            .status
            .success()
    );
    let cb = art.join("codebook.mgcb");
    let gen = dir.path().join("gen");
    let input = data.join("eval/video_0000.mgvd");
    let o = maskvid(&[
        "generate",
        "--config",
        &cfg,
        "--codebook",
        s(&cb),
        "--task",
        "fp",
        "--steps",
        "3",
        "--temperature",
        "0",
        "--schedule",
        "uniform",
        "--in",
        s(&input),
        "--trace",
        "--out",
        s(&gen),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(gen.join("generated.mgvd").exists());
    assert!(gen.join("generated.mgtk").exists());
    for t in 0..3 {
        assert!(gen.join(format!("trace/step_{t:02}.mgtk")).exists());
    }
    let last = fs::read_to_string(gen.join("trace/step_02_input.txt")).unwrap();
    // task id of FP then the no-class id, then 16 visual slots
    assert!(last.starts_with("2 1 "), "{last}");
    assert_eq!(last.lines().next().unwrap().split(' ').count(), 18);
    assert!(last.contains("n_finalized = 16"));

    let cg = dir.path().join("cg");
    let o = maskvid(&[
        "generate",
        "--config",
        &cfg,
        "--codebook",
        s(&cb),
        "--task",
        "CG",
        "--class",
        "2",
        "--out",
        s(&cg),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "tokenizer.block_h = 5\n");
    let o = maskvid(&["run", "--config", &bad, "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));

    let cfg = write_config(dir.path(), SMALL);
    let missing = dir.path().join("missing.mgcb");
    let o = maskvid(&[
        "evaluate",
        "--config",
        &cfg,
        "--codebook",
        s(&missing),
        "--predictor",
        s(&missing),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let art = dir.path().join("art");
    assert!(
        maskvid(&["fit-tokenizer", "--config", &cfg, "--out", s(&art)])
            .status
            .success()
    );
    let cb = art.join("codebook.mgcb");
    let o = maskvid(&[
        "generate",
        "--config",
        &cfg,
        "--codebook",
        s(&cb),
        "--task",
        "CFP",
        "--out",
        s(&art),
    ]);
    assert_eq!(o.status.code(), Some(2), "CFP without a class");
    assert_eq!(maskvid(&["frobnicate"]).status.code(), Some(2));
}
