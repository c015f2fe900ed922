//! `references.json` reading and writing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use palmcursor_core::classifier::{ClassifierError, Embedding, ReferenceEntry, ReferenceSet};
use palmcursor_core::Gesture;
use serde::{Deserialize, Serialize};

pub const REFERENCES_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReferenceFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed reference file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("reference file {path} has version {found}, expected {REFERENCES_VERSION}")]
    VersionMismatch { path: PathBuf, found: u64 },
    #[error("reference file {path} has no entry for class `{class}`")]
    MissingClass { path: PathBuf, class: Gesture },
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    mean: Vec<f64>,
    threshold: f64,
    sample_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ReferenceFile {
    version: u32,
    embedding_dim: usize,
    class_order: Vec<String>,
    threshold_scale: f64,
    classes: BTreeMap<String, ClassFile>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

pub fn to_json(refs: &ReferenceSet) -> String {
    let file = ReferenceFile {
        version: REFERENCES_VERSION,
        embedding_dim: refs.dim(),
        class_order: Gesture::ALL.iter().map(|g| g.name().to_string()).collect(),
        threshold_scale: refs.threshold_scale(),
        classes: Gesture::ALL
            .iter()
            .map(|&g| {
                let e = refs.entry(g);
                let entry =
                    ClassFile { mean: e.mean.values().to_vec(), threshold: e.threshold, sample_count: e.sample_count };
                (g.name().to_string(), entry)
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("reference sets always serialize")
}

pub fn save_references(refs: &ReferenceSet, path: &Path) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json(refs) + "\n")
}

pub fn load_references(path: &Path) -> Result<ReferenceSet, ReferenceFileError> {
    let text = fs::read_to_string(path).map_err(|source| ReferenceFileError::Io { path: path.into(), source })?;
    from_json(&text, path)
}

/// Parses a reference document; `path` is only used in error messages.
pub fn from_json(text: &str, path: &Path) -> Result<ReferenceSet, ReferenceFileError> {
    let malformed = |reason: String| ReferenceFileError::Malformed { path: path.into(), reason };
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    if probe.version != u64::from(REFERENCES_VERSION) {
        return Err(ReferenceFileError::VersionMismatch { path: path.into(), found: probe.version });
    }
    let mut file: ReferenceFile = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;

    let expected: Vec<&str> = Gesture::ALL.iter().map(|g| g.name()).collect();
    if file.class_order != expected {
        return Err(malformed(format!("class_order must be {expected:?}, found {:?}", file.class_order)));
    }
    if let Some(extra) = file.classes.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(malformed(format!("unknown class `{extra}`")));
    }
    let mut entries = Vec::with_capacity(Gesture::ALL.len());
    for g in Gesture::ALL {
        let class = file
            .classes
            .remove(g.name())
            .ok_or(ReferenceFileError::MissingClass { path: path.into(), class: g })?;
        if class.mean.len() != file.embedding_dim {
            return Err(malformed(format!(
                "class `{g}` mean has {} values, embedding_dim is {}",
                class.mean.len(),
                file.embedding_dim
            )));
        }
        let mean = Embedding::new(class.mean).map_err(|e| malformed(format!("class `{g}`: {e}")))?;
        entries.push(ReferenceEntry { mean, threshold: class.threshold, sample_count: class.sample_count });
    }
    let entries: [ReferenceEntry; 4] = entries.try_into().expect("one entry per class");
    ReferenceSet::new(entries, file.threshold_scale).map_err(|e: ClassifierError| malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn sample() -> ReferenceSet {
        let entries = Gesture::ALL.map(|g| ReferenceEntry {
            mean: Embedding::new(vec![g.index() as f64 + 0.1, -1.0 / 3.0, 1e-300]).unwrap(),
            threshold: 0.5 + g.index() as f64,
            sample_count: 10 * (g.index() + 1),
        });
        ReferenceSet::new(entries, 1.25).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("refs/references.json");
        save_references(&sample(), &path).unwrap();
        assert_eq!(load_references(&path).unwrap(), sample());
    }

    #[test]
    fn schema_fields() {
        let v: Value = serde_json::from_str(&to_json(&sample())).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["embedding_dim"], 3);
        assert_eq!(v["class_order"], serde_json::json!(["fist", "palm", "point_left", "point_right"]));
        assert_eq!(v["threshold_scale"], 1.25);
        assert_eq!(v["classes"]["point_right"]["sample_count"], 40);
        assert_eq!(v["classes"]["palm"]["threshold"], 1.5);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let text = to_json(&sample());
        let err = from_json(&text[..text.len() / 2], Path::new("r.json")).unwrap_err();
        assert!(matches!(err, ReferenceFileError::Malformed { .. }), "{err}");
    }

    #[test]
    fn wrong_version() {
        let mut v: Value = serde_json::from_str(&to_json(&sample())).unwrap();
        v["version"] = 2.into();
        let err = from_json(&v.to_string(), Path::new("r.json")).unwrap_err();
        assert!(matches!(err, ReferenceFileError::VersionMismatch { found: 2, .. }));
    }

    #[test]
    fn three_classes_names_the_missing_one() {
        let mut v: Value = serde_json::from_str(&to_json(&sample())).unwrap();
        v["classes"].as_object_mut().unwrap().remove("point_left");
        let err = from_json(&v.to_string(), Path::new("r.json")).unwrap_err();
        assert!(matches!(err, ReferenceFileError::MissingClass { class: Gesture::PointLeft, .. }));
        assert!(err.to_string().contains("point_left"));
    }

    #[test]
    fn dimension_and_threshold_checks() {
        let mut v: Value = serde_json::from_str(&to_json(&sample())).unwrap();
        v["embedding_dim"] = 1280.into();
        assert!(from_json(&v.to_string(), Path::new("r.json")).is_err());
        let mut v: Value = serde_json::from_str(&to_json(&sample())).unwrap();
        v["classes"]["fist"]["threshold"] = (-1.0).into();
        assert!(from_json(&v.to_string(), Path::new("r.json")).is_err());
    }

    proptest::proptest! {
        #[test]
        fn any_finite_set_round_trips(
            dim in 1usize..16,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 64),
            thresholds in [0.0f64..1e6, 0.0f64..1e6, 0.0f64..1e6, 0.0f64..1e6],
            scale in 0.0f64..10.0,
        ) {
            let entries = Gesture::ALL.map(|g| ReferenceEntry {
                mean: Embedding::new(seed[g.index() * 16..][..dim].to_vec()).unwrap(),
                threshold: thresholds[g.index()],
                sample_count: g.index() + 1,
            });
            let refs = ReferenceSet::new(entries, scale).unwrap();
            proptest::prop_assert_eq!(from_json(&to_json(&refs), Path::new("r.json")).unwrap(), refs);
        }
    }
}
