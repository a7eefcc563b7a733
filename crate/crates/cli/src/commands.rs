//! Concept-detection pipeline commands. Each command reads and validates
//! everything it needs before writing, and every file is written atomically.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use vcd_core::codebook::{
    build_forest, encode as encode_hist, fuse, load_forest, sample_training_descriptors, save_forest,
    BowHistogram, ErtForest, Vocabulary,
};
use vcd_core::descfile::{read_features, read_histograms, write_features, write_histograms};
use vcd_core::eval::{
    average_precision_with, bench_extract, mean_ap, rank, read_ranked, read_truth, write_ranked,
    BenchReport,
};
use vcd_core::extract::{extractors, DescriptorExtractor};
use vcd_core::fsio::{read_bytes, write_atomic};
use vcd_core::image::load_image;
use vcd_core::learning::{load_model, save_model, train_svm, SvStorage, TrainingSet};
use vcd_core::sift::SiftParams;
use vcd_core::{Descriptor, Feature};

use crate::config::{Method, Settings};
use crate::error::{CliError, CliResult, PathContext};
use crate::manifest::Manifest;
use crate::with_jobs;

/// The single-method extractor named by the settings.
fn extractor(s: &Settings, method: Method) -> CliResult<Arc<dyn DescriptorExtractor>> {
    if method == Method::Fused {
        return Err(CliError::Usage(
            "fused is not an extractor; build one codebook per method and pass both to encode".into(),
        ));
    }
    Ok(extractors(s.sampling()?, SiftParams::default()).get(method.name())?)
}

/// Extractor whose descriptors fit `forest`.
fn extractor_for(s: &Settings, forest: &ErtForest) -> CliResult<Arc<dyn DescriptorExtractor>> {
    let reg = extractors(s.sampling()?, SiftParams::default());
    let name = ["durf", "sift"]
        .into_iter()
        .find(|n| reg.get(n).is_ok_and(|e| e.dim() == forest.dim()))
        .ok_or_else(|| {
            CliError::Data(format!("no extractor produces {}-d descriptors", forest.dim()))
        })?;
    Ok(reg.get(name)?)
}

/// Runs `f` over the manifest in parallel; results keep manifest order and
/// the first failure in that order is reported.
fn per_image<T: Send>(
    s: &Settings,
    m: &Manifest,
    f: impl Fn(usize, &Path) -> CliResult<T> + Sync + Send,
) -> CliResult<Vec<T>> {
    let paths = m.paths();
    let results: Vec<CliResult<T>> =
        with_jobs(s.jobs, || paths.par_iter().enumerate().map(|(i, p)| f(i, p)).collect())?;
    results.into_iter().collect()
}

fn extract_image(ex: &dyn DescriptorExtractor, path: &Path) -> CliResult<Vec<Feature>> {
    let img = load_image(path).at(path)?;
    ex.extract(&img).at(path)
}

fn feature_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.ovcd"))
}

pub fn extract(s: &Settings, manifest: &Path, out: &Path, concat: bool) -> CliResult<()> {
    let ex = extractor(s, s.method)?;
    let m = Manifest::load(manifest)?;
    if m.is_empty() {
        eprintln!("warning: {} lists no images; nothing written", manifest.display());
        return Ok(());
    }
    let feats = per_image(s, &m, |_, p| extract_image(ex.as_ref(), p))?;
    let total: usize = feats.iter().map(Vec::len).sum();
    if concat {
        let all: Vec<Feature> = feats.into_iter().flatten().collect();
        write_features(out, &all, ex.dim()).at(out)?;
    } else {
        for (id, f) in m.ids().iter().zip(&feats) {
            let path = feature_path(out, id);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| crate::error::data(parent, e))?;
            }
            write_features(&path, f, ex.dim()).at(&path)?;
        }
    }
    println!(
        "extracted {total} {}-d {} descriptors from {} images",
        ex.dim(),
        ex.name(),
        m.len()
    );
    Ok(())
}

pub fn codebook(s: &Settings, manifest: &Path, out: &Path) -> CliResult<()> {
    let ex = extractor(s, s.method)?;
    let m = Manifest::load(manifest)?;
    let descs: Vec<Vec<Descriptor>> = per_image(s, &m, |_, p| {
        Ok(extract_image(ex.as_ref(), p)?.into_iter().map(|f| f.descriptor).collect())
    })?;
    let train = sample_training_descriptors(&descs, s.per_image, s.seed)?;
    let forest = build_forest(&train, &s.ert())?;
    save_forest(out, &forest).at(out)?;
    println!(
        "codebook: {} descriptors sampled, {} trees, V = {}",
        train.len(),
        forest.n_trees(),
        forest.size()
    );
    Ok(())
}

/// Path of the id list written next to a histogram file.
pub fn ids_path(histograms: &Path) -> PathBuf {
    let mut p = histograms.as_os_str().to_owned();
    p.push(".ids");
    PathBuf::from(p)
}

pub fn encode(
    s: &Settings,
    manifest: &Path,
    forest_paths: &[PathBuf],
    out: &Path,
    features: Option<&Path>,
) -> CliResult<()> {
    if forest_paths.len() > 2 {
        return Err(CliError::Usage("encode takes one forest, or two for fusion".into()));
    }
    if features.is_some() && forest_paths.len() != 1 {
        return Err(CliError::Usage("--features works with a single forest".into()));
    }
    let forests = forest_paths
        .iter()
        .map(|p| load_forest(p).at(p))
        .collect::<CliResult<Vec<_>>>()?;
    let exs = forests
        .iter()
        .map(|f| extractor_for(s, f))
        .collect::<CliResult<Vec<_>>>()?;
    let m = Manifest::load(manifest)?;
    let ids = m.ids();
    let hists = per_image(s, &m, |i, p| {
        let mut parts = Vec::with_capacity(forests.len());
        let mut n_desc = 0;
        for (forest, ex) in forests.iter().zip(&exs) {
            let feats = match features {
                Some(dir) => {
                    let fp = feature_path(dir, &ids[i]);
                    let (dim, feats) = read_features(&fp).at(&fp)?;
                    if dim != forest.dim() {
                        return Err(CliError::Data(format!(
                            "{}: {dim}-d descriptors, forest expects {}",
                            fp.display(),
                            forest.dim()
                        )));
                    }
                    feats
                }
                None => extract_image(ex.as_ref(), p)?,
            };
            n_desc += feats.len();
            let descs: Vec<Descriptor> = feats.into_iter().map(|f| f.descriptor).collect();
            parts.push(encode_hist(forest, &descs).at(p)?);
        }
        if n_desc == 0 {
            eprintln!("warning: {}: no descriptors, zero histogram", p.display());
        }
        Ok(match parts.as_slice() {
            [a, b] => fuse(a, b),
            _ => parts.pop().unwrap(),
        })
    })?;
    let len = forests.iter().map(|f| f.size()).sum::<usize>();
    let values: Vec<Vec<f64>> = hists.into_iter().map(BowHistogram::into_values).collect();
    write_histograms(out, &values, len).at(out)?;
    let id_list = ids.iter().fold(String::new(), |mut acc, id| {
        writeln!(acc, "{id}").unwrap();
        acc
    });
    let ids_file = ids_path(out);
    write_atomic(&ids_file, id_list.as_bytes()).at(&ids_file)?;
    println!("encoded {} histograms of length {len}", values.len());
    Ok(())
}

/// Ids for a histogram file: its `.ids` companion, or row numbers.
fn histogram_ids(histograms: &Path, n: usize) -> CliResult<Vec<String>> {
    let path = ids_path(histograms);
    if !path.exists() {
        return Ok((0..n).map(|i| i.to_string()).collect());
    }
    let text = String::from_utf8(read_bytes(&path).at(&path)?)
        .map_err(|e| crate::error::data(&path, e))?;
    let ids: Vec<String> = text.lines().map(str::to_string).collect();
    if ids.len() != n {
        return Err(CliError::Data(format!(
            "{} lists {} ids for {n} histograms",
            path.display(),
            ids.len()
        )));
    }
    Ok(ids)
}

/// `target` as seen from `dir`: a bare file name when they share a
/// directory, else an absolute path.
fn reference_from(dir: &Path, target: &Path) -> CliResult<PathBuf> {
    let abs = |p: &Path| std::fs::canonicalize(p).map_err(|e| crate::error::data(p, e));
    let target = abs(target)?;
    let dir = abs(if dir.as_os_str().is_empty() { Path::new(".") } else { dir })?;
    Ok(match (target.parent(), target.file_name()) {
        (Some(parent), Some(name)) if parent == dir => PathBuf::from(name),
        _ => target,
    })
}

pub fn train(s: &Settings, histograms: &Path, manifest: &Path, out: &Path, reference: bool) -> CliResult<()> {
    let (_, hists) = read_histograms(histograms).at(histograms)?;
    let labels = Manifest::load(manifest)?.labels()?;
    if labels.len() != hists.len() {
        return Err(CliError::Data(format!(
            "{} labels for {} histograms",
            labels.len(),
            hists.len()
        )));
    }
    let ts = TrainingSet::new(hists, labels)?;
    let model = train_svm(&ts, &s.svm())?;
    let correct = ts
        .histograms()
        .iter()
        .zip(ts.labels())
        .map(|(h, &y)| model.decision(h).map(|d| (d > 0.0) == (y > 0.0)))
        .collect::<vcd_core::Result<Vec<_>>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();
    let storage = if reference {
        let dir = out.parent().unwrap_or(Path::new(""));
        SvStorage::Reference(reference_from(dir, histograms)?)
    } else {
        SvStorage::Inline
    };
    save_model(out, &model, &storage).at(out)?;
    println!("support vectors: {}", model.support_vectors().len());
    println!("training accuracy: {:.4}", correct as f64 / ts.len() as f64);
    if !model.converged() {
        eprintln!("warning: solver stopped at its iteration limit");
    }
    Ok(())
}

pub fn predict(model: &Path, histograms: &Path, out: &Path) -> CliResult<()> {
    let model = load_model(model).at(model)?;
    let (dim, hists) = read_histograms(histograms).at(histograms)?;
    if dim != model.dim() {
        return Err(CliError::Data(format!(
            "histograms have length {dim}, model expects {}",
            model.dim()
        )));
    }
    let ids = histogram_ids(histograms, hists.len())?;
    let scores = ids
        .into_iter()
        .zip(&hists)
        .map(|(id, h)| Ok((id, model.decision(h)?)))
        .collect::<vcd_core::Result<Vec<_>>>()?;
    let ranked = rank(scores)?;
    write_ranked(out, &ranked).at(out)?;
    println!("ranked {} items", ranked.len());
    Ok(())
}

pub fn eval(s: &Settings, ranked: &[PathBuf], truth: &[PathBuf], aps: &[f64]) -> CliResult<()> {
    if !aps.is_empty() {
        println!("MAP {:.4}", mean_ap(aps)?);
        return Ok(());
    }
    if ranked.is_empty() || ranked.len() != truth.len() {
        return Err(CliError::Usage(
            "give --ranked and --truth in pairs, or --aps".into(),
        ));
    }
    let mut values = Vec::with_capacity(ranked.len());
    for (r, t) in ranked.iter().zip(truth) {
        let list = read_ranked(r).at(r)?;
        let labels = read_truth(t).at(t)?;
        let listed: HashSet<&str> = list.ids().collect();
        let known: HashSet<&str> = labels.iter().map(|(id, _)| id.as_str()).collect();
        if listed != known || list.len() != labels.len() {
            let odd = listed
                .symmetric_difference(&known)
                .next()
                .map_or_else(|| "duplicate ids".to_string(), |id| format!("id {id}"));
            return Err(CliError::Data(format!(
                "{} and {} disagree: {odd}",
                r.display(),
                t.display()
            )));
        }
        let positives: HashSet<String> = labels.into_iter().filter(|(_, l)| *l).map(|(id, _)| id).collect();
        let ap = average_precision_with(&list, &positives, s.ap_variant.into()).at(t)?;
        println!("AP {ap:.4} {}", r.display());
        values.push(ap);
    }
    if values.len() > 1 {
        println!("MAP {:.4}", mean_ap(&values)?);
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchJson<'a> {
    reports: [&'a BenchReport; 2],
    speedup: f64,
}

pub fn bench(s: &Settings, manifest: &Path, reps: usize, json: Option<&Path>) -> CliResult<()> {
    let m = Manifest::load(manifest)?;
    let paths = m.paths();
    let durf = bench_extract(&paths, extractor(s, Method::Durf)?.as_ref(), reps)?;
    let sift = bench_extract(&paths, extractor(s, Method::Sift)?.as_ref(), reps)?;
    let speedup = sift.total_ms / durf.total_ms;
    println!("{:<6} {:>12} {:>12} {:>12}", "method", "total ms", "ms/image", "descriptors");
    for r in [&durf, &sift] {
        println!(
            "{:<6} {:>12.3} {:>12.3} {:>12}",
            r.extractor,
            r.total_ms,
            r.total_ms / m.len().max(1) as f64,
            r.total_descriptors()
        );
    }
    println!("speedup (sift / durf): {speedup:.2}x over {} images, best of {}", m.len(), reps.max(1));
    if let Some(path) = json {
        let body = serde_json::to_vec_pretty(&BenchJson {
            reports: [&durf, &sift],
            speedup,
        })
        .map_err(|e| CliError::Data(e.to_string()))?;
        write_atomic(path, &body).at(path)?;
    }
    Ok(())
}
