//! `object` subcommands: planar object models and frame-by-frame detection.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use vcd_core::fsio::write_atomic;
use vcd_core::image::load_image;
use vcd_core::matching::{format_detection, load_object_model, save_object_model, Detector, ObjectModel};
use vcd_core::sift::SiftParams;

use crate::config::Settings;
use crate::error::{data, CliResult, PathContext};
use crate::with_jobs;

pub fn learn(image: &Path, model: &Path, name: &str) -> CliResult<()> {
    let img = load_image(image).at(image)?;
    let m = ObjectModel::learn(name, &img, &SiftParams::default()).at(image)?;
    save_object_model(model, &m).at(model)?;
    println!("learned {name}: n_views=1, {} features", m.n_features());
    Ok(())
}

pub fn add_view(image: &Path, model: &Path) -> CliResult<()> {
    let mut m = load_object_model(model).at(model)?;
    let img = load_image(image).at(image)?;
    m.add_view(&img, &SiftParams::default()).at(image)?;
    save_object_model(model, &m).at(model)?;
    println!("{}: n_views={}, {} features", m.name, m.views.len(), m.n_features());
    Ok(())
}

/// Image files directly inside `dir`, sorted by name.
pub fn frame_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| data(dir, e))? {
        let path = entry.map_err(|e| data(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"));
        if is_image && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn detect(s: &Settings, model: &Path, frames: &Path, out: &Path) -> CliResult<()> {
    let m = load_object_model(model).at(model)?;
    let detector = Detector::new(m, s.detect())?;
    let files = frame_files(frames)?;
    let results: Vec<CliResult<String>> = with_jobs(s.jobs, || {
        files
            .par_iter()
            .map(|f| {
                let img = load_image(f).at(f)?;
                let d = detector.detect(&img).at(f)?;
                let name = f.file_name().unwrap_or_default().to_string_lossy();
                Ok(format_detection(&name, d.as_ref()))
            })
            .collect()
    })?;
    let lines = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let found = lines.iter().filter(|l| !l.ends_with(" none")).count();
    let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
    write_atomic(out, body.as_bytes()).at(out)?;
    println!("object found in {found} of {} frames", lines.len());
    Ok(())
}
