//! `gen-fixtures`: synthetic datasets, so every command can be exercised
//! without external images.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use vcd_core::fixtures::{concept_dataset, corners, negative_frame, object_frame, project, textured};
use vcd_core::fsio::write_atomic;
use vcd_core::image::save_pgm;
use vcd_core::rng::derive;
use vcd_core::Image;

use crate::error::{data, CliResult, PathContext};

const CONCEPT_SIZE: usize = 128;
const OBJECT_SIZE: usize = 256;
const FRAME_W: usize = 320;
const FRAME_H: usize = 240;
const FRAME_NOISE: f64 = 0.02;
const ROLE_BENCH: u64 = 0x4245_4e43;
const ROLE_OBJECT: u64 = 0x4f42_4a54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Concept images and structured-noise negatives with train/test
    /// manifests (default 100 per class).
    Concept,
    /// 640x480 textured images for timing (default 100).
    Bench,
    /// A 256x256 object, warped positive frames (default 20) and 50
    /// negative frames, with ground-truth quadrilaterals.
    Object,
}

fn save(img: &Image, dir: &Path, name: &str) -> CliResult<()> {
    let path = dir.join(name);
    save_pgm(img, &path).at(&path)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes()).at(path)
}

pub fn generate(kind: Kind, out: &Path, count: Option<usize>, seed: u64) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| data(out, e))?;
    match kind {
        Kind::Concept => concept(out, count.unwrap_or(100), seed),
        Kind::Bench => bench(out, count.unwrap_or(100), seed),
        Kind::Object => object(out, count.unwrap_or(20), seed),
    }
}

/// Even-indexed images of each class train, odd-indexed ones test.
fn concept(out: &Path, per_class: usize, seed: u64) -> CliResult<()> {
    let (mut train, mut test, mut truth) = (String::new(), String::new(), String::new());
    for (i, (img, positive)) in concept_dataset(per_class, per_class, CONCEPT_SIZE, seed)
        .into_iter()
        .enumerate()
    {
        let k = i % per_class;
        let name = format!("{}_{k:03}.pgm", if positive { "pos" } else { "neg" });
        save(&img, out, &name)?;
        let label = if positive { "+1" } else { "-1" };
        if k % 2 == 0 {
            writeln!(train, "{name} {label}").unwrap();
        } else {
            writeln!(test, "{name} {label}").unwrap();
            writeln!(truth, "{name} {}", u8::from(positive)).unwrap();
        }
    }
    write_text(&out.join("train.txt"), &train)?;
    write_text(&out.join("test.txt"), &test)?;
    write_text(&out.join("test_truth.txt"), &truth)?;
    println!("wrote {} concept images to {}", 2 * per_class, out.display());
    Ok(())
}

fn bench(out: &Path, n: usize, seed: u64) -> CliResult<()> {
    let mut manifest = String::new();
    for i in 0..n {
        let name = format!("bench_{i:03}.pgm");
        save(&textured(640, 480, derive(seed, ROLE_BENCH, i as u64)), out, &name)?;
        writeln!(manifest, "{name}").unwrap();
    }
    write_text(&out.join("bench.txt"), &manifest)?;
    println!("wrote {n} benchmark images to {}", out.display());
    Ok(())
}

fn object(out: &Path, n_pos: usize, seed: u64) -> CliResult<()> {
    let obj = textured(OBJECT_SIZE, OBJECT_SIZE, derive(seed, ROLE_OBJECT, 0));
    save(&obj, out, "object.pgm")?;
    let frames = out.join("frames");
    std::fs::create_dir_all(&frames).map_err(|e| data(&frames, e))?;
    let mut truth = String::new();
    for i in 0..n_pos {
        let (img, h) = object_frame(&obj, FRAME_W, FRAME_H, FRAME_NOISE, derive(seed, ROLE_OBJECT, 1 + i as u64));
        let name = format!("pos_{i:03}.pgm");
        save(&img, &frames, &name)?;
        write!(truth, "{name}").unwrap();
        for (x, y) in corners(OBJECT_SIZE, OBJECT_SIZE) {
            let (u, v) = project(&h, x, y);
            write!(truth, " {u:.3} {v:.3}").unwrap();
        }
        truth.push('\n');
    }
    for i in 0..50u64 {
        let name = format!("neg_{i:03}.pgm");
        save(&negative_frame(FRAME_W, FRAME_H, derive(seed, ROLE_OBJECT, 10_000 + i)), &frames, &name)?;
        writeln!(truth, "{name} none").unwrap();
    }
    write_text(&out.join("truth.txt"), &truth)?;
    println!("wrote object.pgm and {} frames to {}", n_pos + 50, out.display());
    Ok(())
}
