//! Ranked lists, average precision and the extraction timing harness.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::DescriptorExtractor;
use crate::fsio::{read_bytes, write_atomic};
use crate::image::{load_image, Image};

/// Items sorted by descending confidence, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

pub fn rank(scores: Vec<(String, f64)>) -> Result<RankedList> {
    if let Some((id, c)) = scores.iter().find(|(_, c)| !c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "confidence {c} for {id} is not finite"
        )));
    }
    let mut entries = scores;
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(RankedList { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApVariant {
    /// Mean of precision at the rank of every positive.
    #[default]
    Plain,
    /// Mean over recall levels 0, 0.1, ..., 1 of the best precision at or
    /// beyond that recall.
    ElevenPoint,
}

/// Hit flags down the list, after checking every positive is present.
fn relevance(ranked: &RankedList, positives: &HashSet<String>) -> Result<Vec<bool>> {
    if positives.is_empty() {
        return Err(Error::EmptyInput("no positive items".into()));
    }
    let hits: Vec<bool> = ranked.ids().map(|id| positives.contains(id)).collect();
    let found = hits.iter().filter(|&&h| h).count();
    if found != positives.len() {
        let ids: HashSet<&str> = ranked.ids().collect();
        let missing = positives
            .iter()
            .find(|p| !ids.contains(p.as_str()))
            .cloned()
            .unwrap_or_default();
        return Err(Error::InvalidParameter(format!(
            "positive item {missing} is not in the ranked list"
        )));
    }
    Ok(hits)
}

pub fn average_precision(ranked: &RankedList, positives: &HashSet<String>) -> Result<f64> {
    average_precision_with(ranked, positives, ApVariant::Plain)
}

pub fn average_precision_with(
    ranked: &RankedList,
    positives: &HashSet<String>,
    variant: ApVariant,
) -> Result<f64> {
    let hits = relevance(ranked, positives)?;
    let total = positives.len() as f64;
    let mut tp = 0usize;
    // (recall, precision) at every positive.
    let mut points = Vec::with_capacity(positives.len());
    for (k, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
            points.push((tp as f64 / total, tp as f64 / (k + 1) as f64));
        }
    }
    Ok(match variant {
        ApVariant::Plain => points.iter().map(|(_, p)| p).sum::<f64>() / total,
        ApVariant::ElevenPoint => {
            (0..=10)
                .map(|i| {
                    let r = i as f64 / 10.0;
                    points
                        .iter()
                        .filter(|(rec, _)| *rec >= r - 1e-12)
                        .map(|(_, p)| *p)
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 11.0
        }
    })
}

pub fn mean_ap(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::EmptyInput("no AP values to average".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// `<id> <confidence>` per line.
pub fn format_ranked(ranked: &RankedList) -> String {
    let mut out = String::new();
    for (id, c) in &ranked.entries {
        writeln!(out, "{id} {c}").unwrap();
    }
    out
}

pub fn write_ranked(path: impl AsRef<Path>, ranked: &RankedList) -> Result<()> {
    write_atomic(path, format_ranked(ranked).as_bytes())
}

fn records(path: &Path) -> Result<Vec<(String, String)>> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::Malformed(format!("{} is not UTF-8", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            l.trim()
                .rsplit_once(char::is_whitespace)
                .map(|(id, v)| (id.trim_end().to_string(), v.to_string()))
                .ok_or_else(|| {
                    Error::Malformed(format!("{}:{}: expected `<id> <value>`", path.display(), n + 1))
                })
        })
        .collect()
}

/// Reads a ranked-list file and re-ranks it, so hand-edited files are
/// accepted in any order.
pub fn read_ranked(path: impl AsRef<Path>) -> Result<RankedList> {
    let path = path.as_ref();
    let scores = records(path)?
        .into_iter()
        .map(|(id, v)| {
            v.parse::<f64>()
                .map(|c| (id, c))
                .map_err(|_| Error::Malformed(format!("bad confidence {v:?} in {}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    rank(scores)
}

/// Reads `<id> <0|1>` lines.
pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<(String, bool)>> {
    let path = path.as_ref();
    records(path)?
        .into_iter()
        .map(|(id, v)| match v.as_str() {
            "1" => Ok((id, true)),
            "0" => Ok((id, false)),
            _ => Err(Error::Malformed(format!(
                "label {v:?} for {id} in {} is not 0 or 1",
                path.display()
            ))),
        })
        .collect()
}

/// Best-of-N extraction timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub extractor: String,
    /// Fastest full pass over the image set.
    pub total_ms: f64,
    /// Fastest time per image over all passes.
    pub per_image_ms: Vec<f64>,
    pub n_descriptors: Vec<usize>,
}

impl BenchReport {
    pub fn total_descriptors(&self) -> usize {
        self.n_descriptors.iter().sum()
    }

    /// Plain-text table: one row per image, then the totals.
    pub fn table(&self) -> String {
        let mut out = format!("{:>6} {:>12} {:>12}\n", "image", "ms", "descriptors");
        for (i, (ms, n)) in self.per_image_ms.iter().zip(&self.n_descriptors).enumerate() {
            writeln!(out, "{i:>6} {ms:>12.3} {n:>12}").unwrap();
        }
        writeln!(
            out,
            "{:>6} {:>12.3} {:>12}  ({})",
            "total",
            self.total_ms,
            self.total_descriptors(),
            self.extractor
        )
        .unwrap();
        out
    }
}

/// Times `extractor` over `images`, single-threaded, `repetitions` times.
pub fn bench_images(
    images: &[Image],
    extractor: &dyn DescriptorExtractor,
    repetitions: usize,
) -> Result<BenchReport> {
    let reps = repetitions.max(1);
    let mut per_image_ms = vec![f64::INFINITY; images.len()];
    let mut n_descriptors = vec![0; images.len()];
    let mut total_ms = if images.is_empty() { 0.0 } else { f64::INFINITY };
    for _ in 0..reps {
        let mut pass = 0.0;
        for (i, img) in images.iter().enumerate() {
            let t = Instant::now();
            let feats = extractor.extract(img)?;
            let ms = t.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(&feats);
            pass += ms;
            per_image_ms[i] = per_image_ms[i].min(ms);
            n_descriptors[i] = feats.len();
        }
        if !images.is_empty() {
            total_ms = f64::min(total_ms, pass);
        }
    }
    Ok(BenchReport {
        extractor: extractor.name().to_string(),
        total_ms,
        per_image_ms,
        n_descriptors,
    })
}

/// Loads every image first so decoding stays outside the timed region.
pub fn bench_extract<P: AsRef<Path>>(
    paths: &[P],
    extractor: &dyn DescriptorExtractor,
    repetitions: usize,
) -> Result<BenchReport> {
    let images = paths.iter().map(load_image).collect::<Result<Vec<_>>>()?;
    bench_images(&images, extractor, repetitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::default_extractors;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn list(labels: &[bool]) -> (RankedList, HashSet<String>) {
        let scores = labels
            .iter()
            .enumerate()
            .map(|(i, _)| (format!("{i:04}"), -(i as f64)))
            .collect();
        let pos = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .map(|(i, _)| format!("{i:04}"))
            .collect();
        (rank(scores).unwrap(), pos)
    }

    /// Precision evaluated at every rank, summed where the rank is relevant.
    fn brute_force_ap(labels: &[bool]) -> f64 {
        let n_pos = labels.iter().filter(|&&l| l).count() as f64;
        let mut sum = 0.0;
        for k in 1..=labels.len() {
            if labels[k - 1] {
                let hits = labels[..k].iter().filter(|&&l| l).count() as f64;
                sum += hits / k as f64;
            }
        }
        sum / n_pos
    }

    #[test]
    fn ranking_orders_by_confidence_then_id() {
        let r = rank(vec![("a".into(), 0.1), ("b".into(), 0.9)]).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["b", "a"]);
        let r = rank(vec![("z".into(), 0.5), ("c".into(), 0.5), ("m".into(), 0.5)]).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["c", "m", "z"]);
        assert!(rank(vec![("a".into(), f64::NAN)]).is_err());
    }

    #[test]
    fn worked_ap_values() {
        let (r, p) = list(&[true, false, true]);
        assert!((average_precision(&r, &p).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        let (r, p) = list(&[true, true, false, false]);
        assert_eq!(average_precision(&r, &p).unwrap(), 1.0);
        let (r, p) = list(&[false, false, false, true, false]);
        assert!((average_precision(&r, &p).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ap_errors() {
        let (r, _) = list(&[true, false]);
        assert!(average_precision(&r, &HashSet::new()).is_err());
        let missing: HashSet<String> = ["nope".to_string()].into();
        assert!(average_precision(&r, &missing).is_err());
    }

    #[test]
    fn eleven_point_variant() {
        let (r, p) = list(&[true, false, true]);
        // Recall 0..0.5 has best precision 1, recall 0.6..1 has 2/3.
        let expected = (6.0 * 1.0 + 5.0 * (2.0 / 3.0)) / 11.0;
        let ap = average_precision_with(&r, &p, ApVariant::ElevenPoint).unwrap();
        assert!((ap - expected).abs() < 1e-12);
    }

    #[test]
    fn mean_ap_values() {
        assert!(mean_ap(&[]).is_err());
        assert_eq!(mean_ap(&[0.3]).unwrap(), 0.3);
        assert_eq!(mean_ap(&[0.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn ranked_and_truth_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = rank(vec![("img a.pgm".into(), 0.25), ("b.pgm".into(), -1.5e-7)]).unwrap();
        let p = dir.path().join("ranked.txt");
        write_ranked(&p, &r).unwrap();
        assert_eq!(read_ranked(&p).unwrap(), r);
        let t = dir.path().join("truth.txt");
        std::fs::write(&t, "# comment\na.pgm 1\n\nb.pgm 0\n").unwrap();
        assert_eq!(
            read_truth(&t).unwrap(),
            vec![("a.pgm".to_string(), true), ("b.pgm".to_string(), false)]
        );
        std::fs::write(&t, "a.pgm 2\n").unwrap();
        assert!(read_truth(&t).is_err());
    }

    #[test]
    fn bench_reports_are_consistent() {
        let reg = default_extractors();
        let durf = reg.get("durf").unwrap();
        let empty = bench_images(&[], durf.as_ref(), 3).unwrap();
        assert_eq!(empty.total_ms, 0.0);
        assert!(empty.per_image_ms.is_empty());

        let imgs: Vec<Image> = (0..3).map(|s| crate::fixtures::textured(96, 80, s)).collect();
        let rep = bench_images(&imgs, durf.as_ref(), 2).unwrap();
        let max = rep.per_image_ms.iter().cloned().fold(0.0, f64::max);
        assert!(rep.total_ms >= max);
        assert_eq!(rep.n_descriptors, vec![15, 15, 15]);
        let json: BenchReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(json, rep);
        assert!(bench_extract(&["/nonexistent.pgm"], durf.as_ref(), 1).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(seed in 0u64..10_000, n in 1usize..200) {
            let mut rng = seeded(seed);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            labels[rng.random_range(0..n)] = true;
            let (r, p) = list(&labels);
            prop_assert!((average_precision(&r, &p).unwrap() - brute_force_ap(&labels)).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_monotone_maps(seed in 0u64..10_000) {
            let mut rng = seeded(seed);
            let scores: Vec<(String, f64)> = (0..40).map(|i| (format!("{i}"), rng.random::<f64>())).collect();
            let pos: HashSet<String> = (0..40).filter(|i| i % 3 == 0).map(|i| format!("{i}")).collect();
            let a = average_precision(&rank(scores.clone()).unwrap(), &pos).unwrap();
            let mapped = scores.iter().map(|(id, c)| (id.clone(), 7.0 * c.powi(3) + 2.0)).collect();
            let b = average_precision(&rank(mapped).unwrap(), &pos).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rank_is_permutation_invariant(seed in 0u64..10_000) {
            let mut rng = seeded(seed);
            let mut scores: Vec<(String, f64)> =
                (0..30).map(|i| (format!("{i}"), (rng.random_range(0..5) as f64))).collect();
            let a = rank(scores.clone()).unwrap();
            scores.shuffle(&mut rng);
            prop_assert_eq!(a, rank(scores).unwrap());
        }
    }
}
