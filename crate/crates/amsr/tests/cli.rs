mod common;

use std::path::Path;

use amsr::checkpoint::{self, Checkpoint};
use amsr::png;
use amsr::report::{render_eval, EvalReport};
use amsr_core::data::NormStats;
use amsr_core::imaging::ImageU8;
use amsr_core::model::{build_model, ModelConfig};
use common::*;

fn dataset(dir: &Path) -> std::path::PathBuf {
    write_dataset(
        dir,
        "tiny",
        &[("one", scene(45, 38, 1)), ("two", scene(40, 52, 2)), ("three", facade(36, 36))],
    )
}

fn random_checkpoint(path: &Path, scale: usize) {
    let config = ModelConfig::toy(scale);
    let ck = Checkpoint {
        params: build_model(&config, 2).unwrap(),
        config,
        stats: NormStats::default(),
    };
    checkpoint::save(path, &ck).unwrap();
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["degrade", "--scale", "2"])), 1);
    assert_eq!(code(&run(&["eval", "--manifest", "m", "--scale", "2", "--method", "model"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn degrade_writes_named_files_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"));
    let out = dir.path().join("out");
    let r = run(&["degrade", "--manifest", s(&manifest), "--scale", "3", "--out-dir", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let lr = png::load(&out.join("one_x3.png")).unwrap();
    let hr = png::load(&out.join("one.png")).unwrap();
    assert_eq!((hr.width(), hr.height()), (45, 36));
    assert_eq!((lr.width(), lr.height()), (15, 12));
    let names = ["one.png", "one_x3.png", "two_x3.png", "three_x3.png"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    let r = run(&["degrade", "--manifest", s(&manifest), "--scale", "3", "--out-dir", s(&out)]);
    assert_eq!(code(&r), 0);
    let second: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn degrade_missing_entry_is_named_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let mut text = std::fs::read_to_string(&manifest).unwrap();
    text += "ghost.png\n";
    std::fs::write(&manifest, text).unwrap();
    let out = dir.path().join("out");
    let r = run(&["degrade", "--manifest", s(&manifest), "--scale", "2", "--out-dir", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("ghost.png"));
    assert!(out.join("one_x2.png").exists());
}

#[test]
fn bad_scale_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let r = run(&["degrade", "--manifest", s(&manifest), "--scale", "5", "--out-dir", s(dir.path())]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert!(stderr(&r).contains("scale"));
}

#[test]
fn eval_bicubic_report_json_and_text_agree() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let report = dir.path().join("r.json");
    let r = run(&["eval", "--manifest", s(&manifest), "--scale", "2", "--report", s(&report)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let json = std::fs::read_to_string(&report).unwrap();
    let parsed: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.report_version, 1);
    assert_eq!(parsed.dataset, "tiny");
    assert_eq!(parsed.config_hash.len(), 64);
    let ids: Vec<&str> = parsed.records.iter().map(|r| r.image_id.as_str()).collect();
    assert_eq!(ids, ["one", "two", "three"]);
    let psnrs: Vec<f64> = parsed.records.iter().map(|r| r.psnr_db.unwrap()).collect();
    let mean = psnrs.iter().sum::<f64>() / 3.0;
    assert!((parsed.aggregate.psnr_db.unwrap() - mean).abs() < 1e-12);
    let ssim = parsed.records.iter().map(|r| r.ssim).sum::<f64>() / 3.0;
    assert!((parsed.aggregate.ssim.unwrap() - ssim).abs() < 1e-12);
    assert!(parsed.published.is_none());

    let text = std::fs::read_to_string(report.with_extension("txt")).unwrap();
    assert_eq!(text, render_eval(&serde_json::from_str(&json).unwrap()));
    assert!(text.contains(&format!("{mean:.4}")));
    assert_eq!(stdout(&r), text);

    let again = dir.path().join("r2.json");
    run(&["eval", "--manifest", s(&manifest), "--scale", "2", "--report", s(&again)]);
    assert_eq!(std::fs::read(&again).unwrap(), json.as_bytes());
}

#[test]
fn eval_report_carries_published_block_for_known_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), "Set5", &[("bird", scene(40, 40, 3))]);
    let report = dir.path().join("r.json");
    let r = run(&["eval", "--manifest", s(&manifest), "--scale", "4", "--report", s(&report)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let parsed: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let block = parsed.published.unwrap();
    assert!(block.label.contains("published, not reproduced"));
    let bicubic = &block.rows[0];
    assert_eq!((bicubic.method.as_str(), bicubic.psnr_db, bicubic.ssim), ("Bicubic", 28.42, 0.8104));
    assert_eq!(block.rows.len(), 6);
}

#[test]
fn eval_model_with_random_weights_is_finite() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let ckpt = dir.path().join("r.ckpt");
    random_checkpoint(&ckpt, 2);
    let report = dir.path().join("m.json");
    let r = run(&[
        "eval", "--manifest", s(&manifest), "--scale", "2", "--method", "model", "--checkpoint", s(&ckpt),
        "--report", s(&report), "--tile", "16",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let parsed: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.method, "model");
    assert!(parsed.aggregate.psnr_db.unwrap().is_finite());

    let r = run(&[
        "eval", "--manifest", s(&manifest), "--scale", "3", "--method", "model", "--checkpoint", s(&ckpt),
    ]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("recon"), "{}", stderr(&r));
}

#[test]
fn infer_scales_dimensions_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    png::save(&input, &scene(48, 48, 5)).unwrap();
    for scale in [2usize, 3] {
        let ckpt = dir.path().join(format!("x{scale}.ckpt"));
        random_checkpoint(&ckpt, scale);
        let a = dir.path().join(format!("a{scale}.png"));
        let b = dir.path().join(format!("b{scale}.png"));
        for out in [&a, &b] {
            let r = run(&["infer", "--checkpoint", s(&ckpt), "--in", s(&input), "--out", s(out)]);
            assert_eq!(code(&r), 0, "{}", stderr(&r));
        }
        let img: ImageU8 = png::load(&a).unwrap();
        assert_eq!((img.width(), img.height()), (48 * scale, 48 * scale));
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"AMSR\x01\x00").unwrap();
    let r = run(&["infer", "--checkpoint", s(&bad), "--in", s(&input), "--out", s(&dir.path().join("c.png"))]);
    assert_eq!(code(&r), 3);
    let r = run(&["infer", "--checkpoint", s(&dir.path().join("none.ckpt")), "--in", s(&input), "--out", "x.png"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn mean_of_gray_image_and_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), "gray", &[("g", ImageU8::filled(5, 4, [128; 3]).unwrap())]);
    let saved = dir.path().join("mean.cfg");
    let r = run(&["mean", "--manifest", s(&manifest), "--out", s(&saved)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(stdout(&r), "128.0000 128.0000 128.0000\n");
    assert_eq!(std::fs::read_to_string(&saved).unwrap(), "mean = 128,128,128\n");

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "# nothing here\n").unwrap();
    assert_eq!(code(&run(&["mean", "--manifest", s(&empty)])), 3);
}

#[test]
fn train_writes_log_and_checkpoints_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let train = write_dataset(&data, "train", &[("a", scene(40, 40, 1)), ("b", facade(40, 40))]);
    let out = dir.path().join("run");
    let cfg = toy_config(dir.path(), &train, &train, &out, "");
    let r = run(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let log = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,iter,lr,loss");
    assert_eq!(lines.len(), 21);
    assert!(lines[1].starts_with("1,1,0.001,"));
    assert!(lines[20].starts_with("2,10,0.001,"));
    for name in ["epoch_0001.ckpt", "epoch_0001.ckpt.state", "epoch_0002.ckpt", "best.ckpt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let full = std::fs::read(out.join("epoch_0002.ckpt")).unwrap();

    let resumed = dir.path().join("resumed");
    std::fs::create_dir_all(&resumed).unwrap();
    std::fs::copy(out.join("loss.csv"), resumed.join("loss.csv")).unwrap();
    let text = std::fs::read_to_string(&cfg).unwrap().replace(s(&out), s(&resumed));
    let cfg2 = dir.path().join("resume.cfg");
    std::fs::write(&cfg2, text).unwrap();
    let head: String = lines[..11].iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(resumed.join("loss.csv"), head).unwrap();
    let r = run(&["train", "--config", s(&cfg2), "--resume", s(&out.join("epoch_0001.ckpt"))]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(std::fs::read(resumed.join("epoch_0002.ckpt")).unwrap(), full);
    assert_eq!(std::fs::read_to_string(resumed.join("loss.csv")).unwrap(), log);
}

#[test]
fn train_invalid_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "scale = 2\ntrain_manifest = t.txt\nout_dir = o\nlr0 = -1\n").unwrap();
    let r = run(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("`lr0`"), "{}", stderr(&r));
}

#[test]
fn resume_into_other_scale_is_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_dataset(dir.path(), "train", &[("a", scene(48, 48, 1))]);
    let ckpt = dir.path().join("x2.ckpt");
    random_checkpoint(&ckpt, 2);
    let cfg = dir.path().join("x3.cfg");
    std::fs::write(
        &cfg,
        format!("scale = 3\npatch = 24\ntrain_manifest = {}\nout_dir = {}\n", s(&train), s(&dir.path().join("o"))),
    )
    .unwrap();
    let r = run(&["train", "--config", s(&cfg), "--resume", s(&ckpt)]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("recon"), "{}", stderr(&r));
}

#[test]
fn full_scale_config_warns() {
    let cfg = amsr::runconfig::RunConfig::parse(
        "preset = standard\nscale = 2\ntrain_manifest = t\nout_dir = o\n",
        Path::new("."),
    )
    .unwrap();
    let w = amsr::commands::train_warnings(&cfg);
    assert_eq!(w.len(), 1);
    assert!(w[0].contains("1000000"));
    let toy = amsr::runconfig::RunConfig::parse("scale = 2\ntrain_manifest = t\nout_dir = o\nepochs = 2\n", Path::new("."))
        .unwrap();
    assert!(amsr::commands::train_warnings(&toy).is_empty());
}

#[test]
fn threads_env_is_validated() {
    let r = bin().env("AMSR_THREADS", "zero").args(["mean", "--manifest", "x"]).output().unwrap();
    assert_eq!(code(&r), 1);
}

#[test]
fn gradcheck_passes_and_names_injected_fault() {
    let r = run(&["gradcheck"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stdout(&r).contains("checks passed"));
    let r = run(&["gradcheck", "--inject-fault", "conv2d"]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("worst offender conv2d"), "{}", stderr(&r));
    assert_eq!(code(&run(&["gradcheck", "--inject-fault", "nosuchop"])), 1);
}
