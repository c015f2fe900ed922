//! Labeled gesture image datasets.
//!
//! ```text
//! root/
//!   fist/  palm/  point_left/  point_right/    images, any nesting
//!   splits.json                                optional
//! ```
//!
//! `splits.json` lists the validation and test images by path relative to
//! the root; every other image is training data. An optional `conditions`
//! map tags images with capture conditions:
//!
//! ```json
//! {
//!   "val": ["palm/0007.png"],
//!   "test": ["fist/0001.png"],
//!   "conditions": { "fist/0001.png": { "background": "busy", "lighting": "dim" } }
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use palmcursor_core::Gesture;
use serde::Deserialize;

pub const SPLITS_FILE: &str = "splits.json";
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("`{0}` is not a class directory (expected fist, palm, point_left, point_right)")]
    UnknownClassDirectory(String),
    #[error("malformed {path}: {reason}")]
    Splits { path: PathBuf, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    /// Path relative to the dataset root with `/` separators.
    pub key: String,
    pub class: Gesture,
    pub split: Split,
    pub conditions: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
    /// Files that could not be read as images.
    pub skipped: Vec<PathBuf>,
}

impl LabeledDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split, class: Gesture) -> usize {
        self.split(split).filter(|s| s.class == class).count()
    }
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsFile {
    #[serde(default)]
    val: Vec<String>,
    #[serde(default)]
    test: Vec<String>,
    #[serde(default)]
    conditions: BTreeMap<String, BTreeMap<String, String>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.into(), source }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), DatasetError> {
    let mut entries: Vec<_> =
        fs::read_dir(dir).map_err(io_err(dir))?.collect::<Result<_, _>>().map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn readable_image(path: &Path) -> bool {
    let known = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
    known
        && image::ImageReader::open(path)
            .and_then(|r| r.with_guessed_format())
            .is_ok_and(|r| r.into_dimensions().is_ok_and(|(w, h)| w > 0 && h > 0))
}

fn key_of(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Indexes a dataset directory. Unreadable images are skipped with a
/// warning and listed in [`LabeledDataset::skipped`].
pub fn load_dataset(root: &Path) -> Result<LabeledDataset, DatasetError> {
    let splits_path = root.join(SPLITS_FILE);
    let splits: SplitsFile = if splits_path.is_file() {
        let text = fs::read_to_string(&splits_path).map_err(io_err(&splits_path))?;
        serde_json::from_str(&text)
            .map_err(|e| DatasetError::Splits { path: splits_path.clone(), reason: e.to_string() })?
    } else {
        SplitsFile::default()
    };
    let splits_err = |reason: String| DatasetError::Splits { path: splits_path.clone(), reason };
    let val: BTreeSet<&str> = splits.val.iter().map(String::as_str).collect();
    let test: BTreeSet<&str> = splits.test.iter().map(String::as_str).collect();
    if let Some(both) = val.intersection(&test).next() {
        return Err(splits_err(format!("`{both}` is listed in both val and test")));
    }

    let mut dirs: Vec<_> =
        fs::read_dir(root).map_err(io_err(root))?.collect::<Result<_, _>>().map_err(io_err(root))?;
    dirs.retain(|e| e.path().is_dir());
    dirs.sort_by_key(|e| e.file_name());

    let mut dataset = LabeledDataset { root: root.to_path_buf(), ..Default::default() };
    for dir in dirs {
        let name = dir.file_name().to_string_lossy().into_owned();
        let class: Gesture = name.parse().map_err(|_| DatasetError::UnknownClassDirectory(name.clone()))?;
        let mut files = Vec::new();
        collect_files(&dir.path(), &mut files)?;
        for path in files {
            if !readable_image(&path) {
                log::warn!("skipping unreadable image {}", path.display());
                dataset.skipped.push(path);
                continue;
            }
            let key = key_of(root, &path);
            let split = if val.contains(key.as_str()) {
                Split::Val
            } else if test.contains(key.as_str()) {
                Split::Test
            } else {
                Split::Train
            };
            let conditions = splits.conditions.get(&key).cloned().unwrap_or_default();
            dataset.samples.push(Sample { path, key, class, split, conditions });
        }
    }

    let known: BTreeSet<&str> = dataset.samples.iter().map(|s| s.key.as_str()).collect();
    let listed = val.iter().chain(&test).copied().chain(splits.conditions.keys().map(String::as_str));
    if let Some(missing) = listed.into_iter().find(|k| !known.contains(k)) {
        return Err(splits_err(format!("`{missing}` is not an image in the dataset")));
    }
    Ok(dataset)
}
