//! Dataset manifests: one `<relative-path> [label]` per line, labels `+1` or
//! `-1`, blank lines and `#` comment lines ignored.

use std::path::{Path, PathBuf};

use crate::error::{data, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// The path as written; also the item id in ranked lists.
    pub path: String,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub entries: Vec<Entry>,
}

fn parse_label(s: &str) -> Option<bool> {
    match s {
        "+1" | "1" => Some(true),
        "-1" => Some(false),
        _ => None,
    }
}

impl Manifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let label = match fields[1..] {
                [] => None,
                [l] => Some(parse_label(l).ok_or_else(|| {
                    CliError::Data(format!("line {}: label {l:?} is not +1 or -1", n + 1))
                })?),
                _ => {
                    return Err(CliError::Data(format!(
                        "line {}: expected `<path> [label]`, found {} fields",
                        n + 1,
                        fields.len()
                    )))
                }
            };
            entries.push(Entry {
                path: fields[0].to_string(),
                label,
            });
        }
        Ok(Self {
            base_dir: base_dir.into(),
            entries,
        })
    }

    /// Reads a manifest; entries resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| data(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, e: &Entry) -> PathBuf {
        self.base_dir.join(&e.path)
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.entries.iter().map(|e| self.resolve(e)).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.path.clone()).collect()
    }

    /// Every label, failing on the first unlabelled entry.
    pub fn labels(&self) -> CliResult<Vec<bool>> {
        self.entries
            .iter()
            .map(|e| {
                e.label
                    .ok_or_else(|| CliError::Data(format!("{} has no label", e.path)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels_and_comments() {
        let m = Manifest::parse("# set\na.pgm +1\n\n  b.pgm -1\nc.pgm\n", "/d").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entries[0].label, Some(true));
        assert_eq!(m.entries[1].label, Some(false));
        assert_eq!(m.entries[2].label, None);
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/d/b.pgm"));
        assert!(m.labels().is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Manifest::parse("a.pgm 0\n", ".").is_err());
        assert!(Manifest::parse("a.pgm +1 extra\n", ".").is_err());
        assert!(Manifest::parse("", ".").unwrap().is_empty());
    }
}
