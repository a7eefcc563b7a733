use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;
use vcd_core::codebook::load_forest;
use vcd_core::descfile::{read_features, read_histograms};
use vcd_core::fixtures::textured;
use vcd_core::image::save_pgm;
use vcd_core::Image;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn vcd(dir: &Path, args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_vcd"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = vcd(dir, args);
    assert_eq!(o.code, 0, "vcd {args:?} failed: {}", o.stderr);
    o.stdout
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

/// Three textured images and a labelled manifest.
fn small_set() -> TempDir {
    let d = tempfile::tempdir().unwrap();
    for i in 0..3 {
        save_pgm(&textured(96, 80, i), d.path().join(format!("img{i}.pgm"))).unwrap();
    }
    write(d.path(), "m.txt", "# three images\nimg0.pgm +1\nimg1.pgm -1\nimg2.pgm +1\n");
    d
}

fn concept_set() -> TempDir {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen-fixtures", "concept", "--out", "c", "--count", "16", "--seed", "5"]);
    d
}

#[test]
fn extract_writes_one_file_per_image() {
    let d = small_set();
    let out = ok(d.path(), &["extract", "--manifest", "m.txt", "--out", "durf", "--scale", "1"]);
    assert!(out.contains("from 3 images"));
    for i in 0..3 {
        let (dim, feats) = read_features(d.path().join(format!("durf/img{i}.pgm.ovcd"))).unwrap();
        assert_eq!(dim, 64);
        assert!(!feats.is_empty());
    }
    ok(d.path(), &["extract", "--manifest", "m.txt", "--out", "sift", "--method", "sift"]);
    assert_eq!(read_features(d.path().join("sift/img1.pgm.ovcd")).unwrap().0, 128);
    ok(d.path(), &["extract", "--manifest", "m.txt", "--out", "all.ovcd", "--concat"]);
    assert_eq!(read_features(d.path().join("all.ovcd")).unwrap().0, 64);
}

#[test]
fn extract_empty_manifest_warns() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "m.txt", "# nothing\n");
    let o = vcd(d.path(), &["extract", "--manifest", "m.txt", "--out", "x"]);
    assert_eq!(o.code, 0);
    assert!(o.stderr.contains("warning"));
    assert!(!d.path().join("x").exists());
}

#[test]
fn unreadable_image_is_a_data_error() {
    let d = small_set();
    write(d.path(), "bad.txt", "img0.pgm\nmissing.pgm\n");
    let o = vcd(d.path(), &["extract", "--manifest", "bad.txt", "--out", "x"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("missing.pgm"));
    assert!(!d.path().join("x").exists(), "no partial output");
}

#[test]
fn usage_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(vcd(d.path(), &["train", "--bogus"]).code, 1);
    assert_eq!(vcd(d.path(), &["nosuch"]).code, 1);
    assert_eq!(vcd(d.path(), &["--help"]).code, 0);
    write(d.path(), "m.txt", "a.pgm\n");
    let o = vcd(d.path(), &["codebook", "--manifest", "m.txt", "--out", "f.json", "--scale", "0"]);
    assert_eq!(o.code, 1);
    write(d.path(), "bad.toml", "trees = 4\n");
    let o = vcd(d.path(), &["--config", "bad.toml", "eval", "--aps", "0.5"]);
    assert_eq!(o.code, 1);
}

#[test]
fn codebook_is_deterministic_and_bounded() {
    let d = small_set();
    let args = ["codebook", "--manifest", "m.txt", "--n-trees", "4", "--max-depth", "12", "--seed", "9"];
    let out = ok(d.path(), &[&args[..], &["--out", "a.json"]].concat());
    ok(d.path(), &[&args[..], &["--out", "b.json"]].concat());
    let v: usize = out.rsplit("V = ").next().unwrap().trim().parse().unwrap();
    assert!(v >= 1 && v <= 4 << 12);
    let a = fs::read(d.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b.json")).unwrap());
    ok(d.path(), &[&args[..7], &["--seed", "10", "--out", "c.json"]].concat());
    assert_ne!(a, fs::read(d.path().join("c.json")).unwrap());
}

#[test]
fn encode_single_fused_and_empty() {
    let d = small_set();
    // Smaller than one DURF window, so no descriptors at all.
    save_pgm(&textured(40, 40, 8), d.path().join("tiny.pgm")).unwrap();
    write(d.path(), "e.txt", "img0.pgm\ntiny.pgm\nimg2.pgm\n");
    ok(d.path(), &["codebook", "--manifest", "m.txt", "--out", "d.json", "--max-depth", "6"]);
    ok(d.path(), &["codebook", "--manifest", "m.txt", "--out", "s.json", "--max-depth", "6", "--method", "sift"]);
    let o = vcd(d.path(), &["encode", "--manifest", "e.txt", "--forest", "d.json", "--out", "h.ovcd"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stderr.contains("tiny.pgm") && o.stderr.contains("zero histogram"));
    let (len, h) = read_histograms(d.path().join("h.ovcd")).unwrap();
    let v1 = load_forest(d.path().join("d.json")).unwrap().vocabulary_size();
    assert_eq!(len, v1);
    assert_eq!(h.len(), 3);
    for (i, row) in h.iter().enumerate() {
        let l1: f64 = row.iter().sum();
        let expected = if i == 1 { 0.0 } else { 1.0 };
        assert!((l1 - expected).abs() < 1e-6, "row {i} sums to {l1}");
    }
    assert_eq!(
        fs::read_to_string(d.path().join("h.ovcd.ids")).unwrap(),
        "img0.pgm\ntiny.pgm\nimg2.pgm\n"
    );

    ok(d.path(), &["encode", "--manifest", "m.txt", "--forest", "d.json", "--forest", "s.json", "--out", "f.ovcd"]);
    let v2 = load_forest(d.path().join("s.json")).unwrap().vocabulary_size();
    let (len, h) = read_histograms(d.path().join("f.ovcd")).unwrap();
    assert_eq!(len, v1 + v2);
    assert!(h.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-6));

    // Precomputed descriptors give the same histograms as extraction.
    ok(d.path(), &["extract", "--manifest", "m.txt", "--out", "feats"]);
    ok(d.path(), &["encode", "--manifest", "m.txt", "--forest", "d.json", "--out", "a.ovcd"]);
    ok(d.path(), &["encode", "--manifest", "m.txt", "--forest", "d.json", "--features", "feats", "--out", "b.ovcd"]);
    assert_eq!(fs::read(d.path().join("a.ovcd")).unwrap(), fs::read(d.path().join("b.ovcd")).unwrap());

    // A SIFT forest cannot encode DURF descriptor files.
    let o = vcd(d.path(), &["encode", "--manifest", "m.txt", "--forest", "s.json", "--features", "feats", "--out", "x.ovcd"]);
    assert_eq!(o.code, 2);
}

/// Histograms with disjoint support per class.
fn separable(dir: &Path) {
    let mut rows = Vec::new();
    let mut manifest = String::new();
    for i in 0..10 {
        let mut h = vec![0.0; 6];
        let pos = i % 2 == 0;
        h[if pos { i % 3 } else { 3 + i % 3 }] = 1.0;
        rows.push(h);
        manifest.push_str(&format!("x{i} {}\n", if pos { "+1" } else { "-1" }));
    }
    vcd_core::descfile::write_histograms(dir.join("h.ovcd"), &rows, 6).unwrap();
    write(dir, "labels.txt", &manifest);
}

#[test]
fn train_reports_accuracy_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    separable(d.path());
    let out = ok(d.path(), &["train", "--histograms", "h.ovcd", "--manifest", "labels.txt", "--out", "a.json"]);
    assert!(out.contains("training accuracy: 1.0000"), "{out}");
    assert!(out.contains("support vectors:"));
    ok(d.path(), &["train", "--histograms", "h.ovcd", "--manifest", "labels.txt", "--out", "b.json"]);
    assert_eq!(fs::read(d.path().join("a.json")).unwrap(), fs::read(d.path().join("b.json")).unwrap());

    write(d.path(), "one.txt", &"x +1\n".repeat(10));
    let o = vcd(d.path(), &["train", "--histograms", "h.ovcd", "--manifest", "one.txt", "--out", "c.json"]);
    assert_eq!(o.code, 2);
    assert!(!d.path().join("c.json").exists());
}

#[test]
fn imbalanced_training_still_ranks_positives() {
    let d = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    let mut manifest = String::new();
    for i in 0..100 {
        let pos = i < 5;
        let mut h = vec![0.1; 4];
        h[if pos { 0 } else { 1 }] += 0.5 + 0.001 * i as f64;
        let s: f64 = h.iter().sum();
        rows.push(h.iter().map(|v| v / s).collect::<Vec<_>>());
        manifest.push_str(&format!("x{i} {}\n", if pos { "+1" } else { "-1" }));
    }
    vcd_core::descfile::write_histograms(d.path().join("h.ovcd"), &rows, 4).unwrap();
    write(d.path(), "l.txt", &manifest);
    let out = ok(d.path(), &["train", "--histograms", "h.ovcd", "--manifest", "l.txt", "--out", "m.json"]);
    assert!(out.contains("training accuracy: 1.0000"), "{out}");
}

#[test]
fn predict_and_eval() {
    let d = tempfile::tempdir().unwrap();
    separable(d.path());
    ok(d.path(), &["train", "--histograms", "h.ovcd", "--manifest", "labels.txt", "--out", "m.json", "--reference"]);
    ok(d.path(), &["predict", "--model", "m.json", "--histograms", "h.ovcd", "--out", "r1.txt"]);
    ok(d.path(), &["predict", "--model", "m.json", "--histograms", "h.ovcd", "--out", "r2.txt"]);
    let r1 = fs::read_to_string(d.path().join("r1.txt")).unwrap();
    assert_eq!(r1, fs::read_to_string(d.path().join("r2.txt")).unwrap());
    let conf: Vec<f64> = r1.lines().map(|l| l.rsplit_once(' ').unwrap().1.parse().unwrap()).collect();
    assert_eq!(conf.len(), 10);
    assert!(conf.windows(2).all(|w| w[0] >= w[1]));
    // Without an id file, ids are row numbers: even rows are positive.
    let truth: String = (0..10).map(|i| format!("{i} {}\n", u8::from(i % 2 == 0))).collect();
    write(d.path(), "t.txt", &truth);
    let out = ok(d.path(), &["eval", "--ranked", "r1.txt", "--truth", "t.txt"]);
    assert!(out.starts_with("AP 1.0000"), "{out}");

    write(d.path(), "r3.txt", "a 3\nb 2\nc 1\n");
    write(d.path(), "t3.txt", "a 1\nb 0\nc 1\n");
    assert!(ok(d.path(), &["eval", "--ranked", "r3.txt", "--truth", "t3.txt"]).starts_with("AP 0.8333"));
    write(d.path(), "t4.txt", "a 1\nb 0\nz 1\n");
    let o = vcd(d.path(), &["eval", "--ranked", "r3.txt", "--truth", "t4.txt"]);
    assert_eq!(o.code, 2);

    let wrong = tempfile::tempdir().unwrap();
    vcd_core::descfile::write_histograms(wrong.path().join("h.ovcd"), &[vec![0.5; 3]], 3).unwrap();
    let h = wrong.path().join("h.ovcd");
    let o = vcd(d.path(), &["predict", "--model", "m.json", "--histograms", h.to_str().unwrap(), "--out", "x.txt"]);
    assert_eq!(o.code, 2);
}

#[test]
fn eval_reproduces_published_map() {
    let d = tempfile::tempdir().unwrap();
    let durf = "0.7193,0.2996,0.2955,0.5496,0.3674,0.3151,0.4584,0.2922,0.3901,0.4229";
    assert_eq!(ok(d.path(), &["eval", "--aps", durf]).trim(), "MAP 0.4110");
    let sift = "0.5497,0.2657,0.1978,0.2873,0.2446,0.2213,0.3271,0.2395,0.1975,0.3382";
    assert_eq!(ok(d.path(), &["eval", "--aps", sift]).trim(), "MAP 0.2869");
}

#[test]
fn bench_reports_both_methods() {
    let d = small_set();
    let out = ok(d.path(), &["bench", "--manifest", "m.txt", "--reps", "1", "--json", "b.json"]);
    assert!(out.contains("durf") && out.contains("sift") && out.contains("speedup"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(d.path().join("b.json")).unwrap()).unwrap();
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports[0]["extractor"], "durf");
    assert_eq!(reports[1]["extractor"], "sift");
    let durf = reports[0]["total_ms"].as_f64().unwrap();
    let sift = reports[1]["total_ms"].as_f64().unwrap();
    let speedup = v["speedup"].as_f64().unwrap();
    assert!(speedup > 0.0);
    assert!((speedup - sift / durf).abs() < 1e-9 * speedup);
}

#[test]
fn object_learn_views_and_self_detection() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    save_pgm(&textured(160, 120, 3), p.join("obj.pgm")).unwrap();
    fs::create_dir(p.join("frames")).unwrap();
    fs::copy(p.join("obj.pgm"), p.join("frames/same.pgm")).unwrap();
    fs::create_dir(p.join("empty")).unwrap();

    assert!(ok(p, &["object", "learn", "--image", "obj.pgm", "--model", "m"]).contains("n_views=1"));
    ok(p, &["object", "detect", "--model", "m", "--frames", "frames", "--out", "d.txt"]);
    let line = fs::read_to_string(p.join("d.txt")).unwrap();
    let f: Vec<f64> = line.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
    let rect = [0.0, 0.0, 159.0, 0.0, 159.0, 119.0, 0.0, 119.0];
    for (got, want) in f[..8].iter().zip(rect) {
        assert!((got - want).abs() < 1.0, "{line}");
    }

    ok(p, &["object", "add-view", "--image", "obj.pgm", "--model", "m"]);
    let out = ok(p, &["object", "add-view", "--image", "obj.pgm", "--model", "m"]);
    assert!(out.contains("n_views=3"), "{out}");
    ok(p, &["object", "detect", "--model", "m", "--frames", "frames", "--out", "d3.txt"]);
    assert!(!fs::read_to_string(p.join("d3.txt")).unwrap().contains("none"));

    ok(p, &["object", "detect", "--model", "m", "--frames", "empty", "--out", "e.txt"]);
    assert_eq!(fs::read_to_string(p.join("e.txt")).unwrap(), "");

    save_pgm(&Image::constant(64, 64, 0.3), p.join("flat.pgm")).unwrap();
    let o = vcd(p, &["object", "learn", "--image", "flat.pgm", "--model", "flat"]);
    assert_eq!(o.code, 2);
    assert!(!p.join("flat").exists());
}

fn pipeline(dir: &Path, jobs: &str) -> Vec<u8> {
    let run = |args: &[&str]| ok(dir, &[&["--seed", "7", "--jobs", jobs][..], args].concat());
    run(&["codebook", "--manifest", "c/train.txt", "--out", "f.json", "--max-depth", "8"]);
    run(&["encode", "--manifest", "c/train.txt", "--forest", "f.json", "--out", "train.ovcd"]);
    run(&["encode", "--manifest", "c/test.txt", "--forest", "f.json", "--out", "test.ovcd"]);
    run(&["train", "--histograms", "train.ovcd", "--manifest", "c/train.txt", "--out", "m.json"]);
    run(&["predict", "--model", "m.json", "--histograms", "test.ovcd", "--out", "r.txt"]);
    run(&["eval", "--ranked", "r.txt", "--truth", "c/test_truth.txt"]);
    fs::read(dir.join("r.txt")).unwrap()
}

#[test]
fn end_to_end_is_deterministic() {
    let d = concept_set();
    let a = pipeline(d.path(), "1");
    let b = pipeline(d.path(), "4");
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 16);
}

#[test]
fn config_file_mirrors_flags() {
    let d = small_set();
    write(d.path(), "c.toml", "method = \"sift\"\nn_trees = 2\nmax_depth = 3\nseed = 4\n");
    ok(d.path(), &["--config", "c.toml", "codebook", "--manifest", "m.txt", "--out", "a.json"]);
    let f = load_forest(d.path().join("a.json")).unwrap();
    assert_eq!((f.descriptor_dim(), f.n_trees(), f.max_depth()), (128, 2, 3));
    ok(d.path(), &["--config", "c.toml", "codebook", "--manifest", "m.txt", "--out", "b.json", "--n-trees", "3"]);
    assert_eq!(load_forest(d.path().join("b.json")).unwrap().n_trees(), 3);
}
