mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use hazelab::cli::run_with;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("hazelab").chain(args.iter().copied());
    let code = run_with(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_twice_gives_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    common::write_fixtures(&input, 10, 40, 30);
    for out in ["a", "b"] {
        let out = dir.path().join(out);
        let args = ["--seed", "11", "synth", "--in", p(&input), "--out", p(&out), "--k", "3"];
        let (code, text) = run(&[&args[..], &["--width", "32", "--height", "24", "--splits", "8/1/1"]].concat());
        assert_eq!(code, 0, "{text}");
        assert!(text.contains("30 hazy images"), "{text}");
    }
    let (a, b) = (common::tree_bytes(&dir.path().join("a")), common::tree_bytes(&dir.path().join("b")));
    assert_eq!(a.len(), 10 + 10 + 30 + 1);
    assert_eq!(a, b);
}

#[test]
fn dry_run_reports_sizes_without_writing() {
    let (code, text) = run(&["synth", "--dry-run", "--count", "1159", "--k", "3", "--splits", "1041/59/59"]);
    assert_eq!(code, 0);
    assert!(text.contains("hazy images: 3477"), "{text}");
    assert!(text.contains("train: 1041 clear / 3123 hazy"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    common::write_fixtures(&input, 4, 8, 8);
    let out = dir.path().join("out");
    let (code, text) = run(&["synth", "--dry-run", "--in", p(&input), "--out", p(&out), "--k", "2"]);
    assert_eq!(code, 0);
    assert!(text.contains("hazy images: 8"), "{text}");
    assert!(!out.exists());
}

#[test]
fn eval_on_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    common::write_fixtures(&input, 3, 24, 16);
    fs::remove_file(input.join("img_00.depth.pfm")).unwrap();
    let json = dir.path().join("report.json");
    let (code, text) = run(&["eval", "--pred", p(&input), "--ref", p(&input), "--fsim", "--json", p(&json)]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("PSNR inf"), "{text}");
    assert!(text.contains("SSIM 1.000000"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["mean_ssim"], 1.0);
    assert_eq!(report["infinite_psnr"], 3);
}

#[test]
fn detmetrics_prints_map() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred.txt"), dir.path().join("gt.txt"));
    fs::write(&gt, "# image class box\nimg 0 0 0 10 10\nimg 0 20 20 30 30\n").unwrap();
    fs::write(&pred, "img 0 0.9 0 0 10 10\nimg 0 0.8 50 50 60 60\n").unwrap();
    let (code, text) = run(&["detmetrics", "--pred", p(&pred), "--gt", p(&gt)]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("mAP@0.50 0.500000  mIoU 1.000000"), "{text}");

    fs::write(&pred, "img 0 0 0 10 10\n").unwrap();
    assert_eq!(run(&["detmetrics", "--pred", p(&pred), "--gt", p(&gt)]).0, 1);
}

#[test]
fn train_then_dehaze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    common::write_fixtures(&input, 4, 24, 16);
    let data = dir.path().join("data");
    let (code, text) = run(&[
        "synth", "--in", p(&input), "--out", p(&data), "--k", "1", "--width", "32", "--height", "32", "--splits",
        "3/1/0",
    ]);
    assert_eq!(code, 0, "{text}");
    let ckpts = dir.path().join("ckpt");
    let manifest = data.join("manifest.jsonl");
    let train = ["train", "--manifest", p(&manifest), "--out", p(&ckpts), "--base-width", "4", "--stages", "1"];
    let (code, text) = run(&[&train[..], &["--epochs", "1", "--batch-size", "2"]].concat());
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("epoch   1"), "{text}");
    let ckpt = ckpts.join("epoch-0001.ckpt");
    let (code, text) = run(&[&train[..], &["--epochs", "2", "--resume", p(&ckpt)]].concat());
    assert_eq!(code, 0, "{text}");
    assert!(ckpts.join("epoch-0002.ckpt").is_file());
    assert_eq!(fs::read_to_string(ckpts.join("metrics.jsonl")).unwrap().lines().count(), 2);

    let restored = dir.path().join("restored");
    let hazy = data.join("hazy");
    let (code, text) = run(&["dehaze", "--checkpoint", p(&ckpt), "--in", p(&hazy), "--out", p(&restored)]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(fs::read_dir(&restored).unwrap().count(), 4);
}

#[test]
fn exit_codes_from_the_binary() {
    let bin = env!("CARGO_BIN_EXE_hazelab");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["--no-such-flag"]), Some(1));
    assert_eq!(status(&["--help"]), Some(0));
    assert_eq!(status(&["eval", "--pred", "/nonexistent", "--ref", "/nonexistent"]), Some(1));
    let out = Command::new(bin).arg("gradcheck").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("conv2d"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    common::write_fixtures(&input, 2, 8, 8);
    let bin = env!("CARGO_BIN_EXE_hazelab");
    let synth = |out: &str, seed: &str| {
        let out = dir.path().join(out);
        let run = Command::new(bin)
            .env("HAZELAB_SEED", seed)
            .args(["synth", "--in", p(&input), "--out", p(&out), "--k", "1", "--width", "8", "--height", "8"])
            .args(["--splits", "2/0/0"])
            .output()
            .unwrap();
        assert!(run.status.success());
        fs::read_to_string(out.join("manifest.jsonl")).unwrap()
    };
    assert!(synth("a", "5").contains("\"seed\":5"));
    assert_ne!(synth("b", "5"), synth("c", "6"));
}

#[test]
fn bench_runs() {
    let (code, text) = run(&["bench", "--size", "32", "--iters", "1"]);
    assert_eq!(code, 0, "{text}");
    for name in ["synthesis", "psnr", "ssim", "fsim"] {
        assert!(text.contains(name), "{text}");
    }
}
