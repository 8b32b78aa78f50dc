use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spect_interp::io;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spect-interp"));
    c.env_remove("SPECT_INTERP_DATA");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn single_error_line(out: &Output, class: &str) {
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with(&format!("error[{class}]: ")), "stderr: {err}");
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn usage_errors_exit_with_one() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    single_error_line(&out, "usage");
    let out = run(&["project", "--angles", "ten"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.sptb");
    let out = run(&["recon", "--in", p(&missing), "--out", p(&dir.path().join("r.sptb"))]);
    assert_eq!(out.status.code(), Some(2));
    single_error_line(&out, "data");

    let img = dir.path().join("img.sptb");
    ok(&["phantom", "shepp-logan", "--size", "32", "--out", p(&img)]);
    let bytes = fs::read(&img).unwrap();
    let cut = dir.path().join("cut.sptb");
    fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let out = run(&["project", "--in", p(&cut), "--out", p(&dir.path().join("s.sptb"))]);
    assert_eq!(out.status.code(), Some(2));
    single_error_line(&out, "data");

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"JUNK");
    fs::write(&cut, &bad).unwrap();
    let out = run(&["export-pgm", "--in", p(&cut), "--out", p(&dir.path().join("x.pgm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));

    // an image cannot be projected onto views that OSEM subsets cannot split
    let sino = dir.path().join("s.sptb");
    ok(&["project", "--in", p(&img), "--angles", "10", "--out", p(&sino)]);
    let out = run(&["recon", "--in", p(&sino), "--subsets", "4", "--out", p(&dir.path().join("r.sptb"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn phantom_project_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("sl.sptb");
    let sino = dir.path().join("sl_sino.sptb");
    ok(&["phantom", "shepp-logan", "--size", "128", "--out", p(&img)]);
    ok(&["project", "--in", p(&img), "--angles", "128", "--out", p(&sino)]);
    let s = io::read_sinogram(&sino).unwrap();
    assert_eq!((s.n_angles(), s.n_bins()), (128, 128));

    let json = ok(&["eval", "--ref", p(&sino), "--est", p(&sino)]);
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["ssim"], 1.0);
    assert_eq!(v["mse"], 0.0);
    assert!(v["psnr"].is_null());
    let table = ok(&["eval", "--ref", p(&sino), "--est", p(&sino), "--table"]);
    assert!(table.contains("SSIM") && table.contains("inf"));

    let out = run(&["eval", "--ref", p(&img), "--est", p(&sino)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seeded_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["phantom", "random", "--size", "64", "--seed", "4", "--index", "2", "--out", p(&d.join("a.sptb"))]);
    ok(&["phantom", "random", "--size", "64", "--seed", "4", "--index", "2", "--out", p(&d.join("b.sptb"))]);
    assert_eq!(fs::read(d.join("a.sptb")).unwrap(), fs::read(d.join("b.sptb")).unwrap());

    ok(&["project", "--in", p(&d.join("a.sptb")), "--angles", "32", "--out", p(&d.join("s.sptb"))]);
    for name in ["n1.sptb", "n2.sptb"] {
        ok(&["noise", "--in", p(&d.join("s.sptb")), "--level", "high", "--seed", "9", "--out", p(&d.join(name))]);
    }
    assert_eq!(fs::read(d.join("n1.sptb")).unwrap(), fs::read(d.join("n2.sptb")).unwrap());
    ok(&["noise", "--in", p(&d.join("s.sptb")), "--level", "high", "--seed", "10", "--out", p(&d.join("n3.sptb"))]);
    assert_ne!(fs::read(d.join("n1.sptb")).unwrap(), fs::read(d.join("n3.sptb")).unwrap());
}

fn small_dataset(dir: &Path, jobs: &str) {
    ok(&[
        "--jobs", jobs, "dataset", "--count", "6", "--seed", "3", "--size", "32", "--sparse-views", "16",
        "--dense-views", "64", "--out", p(dir),
    ]);
}

fn train_config(dir: &Path, manifest: &Path) -> PathBuf {
    let cfg = dir.join("train.cfg");
    fs::write(
        &cfg,
        format!(
            "manifest = {}\noutput_dir = {}\nbatch_size = 2\nepochs = 3\nseed = 1\nbase_channels = 4\n",
            manifest.display(),
            dir.join("run").display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn pipeline_through_training_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(&d.join("data_a"), "1");
    small_dataset(&d.join("data_b"), "2");
    assert_eq!(tree(&d.join("data_a")), tree(&d.join("data_b")));

    let cfg = train_config(d, &d.join("data_a/manifest.jsonl"));
    let log = ok(&["--deterministic", "train", "--config", p(&cfg), "--max-steps", "4", "--log-every", "1"]);
    assert!(log.contains("epoch 1 step 1 loss"));
    assert!(log.contains("best epoch"));
    let ckpt = d.join("run/model.ckpt");
    let first = fs::read(&ckpt).unwrap();
    ok(&["--deterministic", "train", "--config", p(&cfg), "--max-steps", "4"]);
    assert_eq!(fs::read(&ckpt).unwrap(), first);
    assert!(d.join("run/history.json").exists());

    let input = d.join("data_a/pair_000000_input.sptb");
    let dense = d.join("dense.sptb");
    ok(&["infer", "--model", p(&ckpt), "--in", p(&input), "--out", p(&dense)]);
    let s = io::read_sinogram(&dense).unwrap();
    assert_eq!((s.n_angles(), s.n_bins()), (64, 32));
    ok(&["recon", "--in", p(&dense), "--subsets", "4", "--iters", "2", "--out", p(&d.join("rec.sptb"))]);
    assert_eq!(io::read_image(d.join("rec.sptb")).unwrap().width(), 32);

    let tables = ok(&[
        "eval-model", "--model", p(&ckpt), "--manifest", p(&d.join("data_a/manifest.jsonl")), "--iters", "2",
    ]);
    assert!(tables.contains("Low") && tables.contains("High"));

    for out in ["rep_a", "rep_b"] {
        ok(&[
            "reproduce", "--noise", "low", "--seed", "2", "--model", p(&ckpt), "--iters", "2", "--out",
            p(&d.join(out)),
        ]);
    }
    let a = tree(&d.join("rep_a"));
    assert_eq!(a, tree(&d.join("rep_b")));
    let names: Vec<String> = a.iter().map(|(n, _)| n.display().to_string()).collect();
    for expected in ["phantom.pgm", "recon_proposed_low.pgm", "report.json", "tables.txt"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
}

#[test]
fn raw_import_and_pgm_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let raw = d.join("scan.raw");
    let values: Vec<u8> = (0..16u16 * 32).flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&raw, &values).unwrap();
    let sino = d.join("scan.sptb");
    ok(&[
        "import-raw", "--in", p(&raw), "--angles", "16", "--bins", "32", "--dtype", "u16", "--angular-range",
        "180", "--out", p(&sino),
    ]);
    let s = io::read_sinogram(&sino).unwrap();
    assert_eq!(s.geometry().angular_range_deg, 180.0);
    assert_eq!(s.data()[511], 511.0);

    let out = run(&["import-raw", "--in", p(&raw), "--angles", "16", "--bins", "33", "--dtype", "u16", "--out", p(&sino)]);
    assert_eq!(out.status.code(), Some(2));

    let pgm = d.join("fig/scan.pgm");
    ok(&["export-pgm", "--in", p(&sino), "--out", p(&pgm)]);
    let bytes = fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n32 16\n65535\n"));
    assert_eq!(bytes.len(), 15 + 2 * 512);
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("SPECT_INTERP_DATA", dir.path())
        .args(["dataset", "--count", "1", "--size", "16", "--sparse-views", "4", "--dense-views", "16"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("dataset/manifest.jsonl").exists());
}
