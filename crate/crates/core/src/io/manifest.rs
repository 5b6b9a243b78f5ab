//! Train/test split manifests over a directory of video folders.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// `(split, path relative to the dataset root)`, train entries first.
    pub entries: Vec<(Split, String)>,
}

impl Manifest {
    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|(s, _)| *s == split).count()
    }

    /// One `split<TAB>path` line per entry.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(s, p)| format!("{s}\t{p}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (split, path) = line
                .split_once('\t')
                .ok_or_else(|| Error::Corrupt(format!("manifest line {}: no tab", n + 1)))?;
            let split = match split {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::Corrupt(format!(
                        "manifest line {}: unknown split {other:?}",
                        n + 1
                    )))
                }
            };
            entries.push((split, path.to_string()));
        }
        Ok(Manifest { entries })
    }
}

/// Splits a list of video names with a seeded shuffle. The input order is
/// sorted first so the result depends only on the set of names and seed.
pub fn split_videos(
    names: &[String],
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<Manifest> {
    if train_count + test_count > names.len() {
        return Err(Error::Empty(format!(
            "need {} videos for a {train_count}/{test_count} split, found {}",
            train_count + test_count,
            names.len()
        )));
    }
    let mut names = names.to_vec();
    names.sort();
    names.shuffle(&mut seeded_rng(seed));
    let entries = names
        .into_iter()
        .take(train_count + test_count)
        .enumerate()
        .map(|(i, n)| {
            let split = if i < train_count { Split::Train } else { Split::Test };
            (split, n)
        })
        .collect();
    Ok(Manifest { entries })
}

/// Lists the sub-directories of `root` and splits them.
pub fn make_manifest(root: &Path, train_count: usize, test_count: usize, seed: u64) -> Result<Manifest> {
    if !root.is_dir() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    let mut names = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    split_videos(&names, train_count, test_count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("video_{i:04}")).collect()
    }

    #[test]
    fn stereo_dataset_split_sizes() {
        let m = split_videos(&names(1000), 955, 45, 0).unwrap();
        assert_eq!(m.count(Split::Train), 955);
        assert_eq!(m.count(Split::Test), 45);
        let mut all: Vec<_> = m.entries.iter().map(|(_, p)| p.clone()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 1000);
    }

    #[test]
    fn seeded_split_is_reproducible() {
        let a = split_videos(&names(50), 40, 10, 9).unwrap();
        let mut shuffled = names(50);
        shuffled.reverse();
        let b = split_videos(&shuffled, 40, 10, 9).unwrap();
        assert_eq!(a, b);
        let c = split_videos(&names(50), 40, 10, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn insufficient_videos() {
        assert!(matches!(split_videos(&names(10), 955, 45, 0), Err(Error::Empty(_))));
    }

    #[test]
    fn text_round_trip_and_directory_listing() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..6 {
            fs::create_dir(dir.path().join(format!("v{i}"))).unwrap();
        }
        fs::write(dir.path().join("readme.txt"), "x").unwrap();
        let m = make_manifest(dir.path(), 4, 2, 1).unwrap();
        assert_eq!(m.entries.len(), 6);
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }
}
