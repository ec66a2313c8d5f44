use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// One clip: its dataset, the three files, and the length unit conversion
/// applied to the motion (BVH units times `scale_factor` gives meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub dataset_id: String,
    pub audio_path: PathBuf,
    pub bvh_path: PathBuf,
    pub labels_path: PathBuf,
    pub scale_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory the entry paths are relative to.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Parses manifest CSV text without touching the filesystem.
    pub fn parse(text: &str, root: impl Into<PathBuf>, name: &str) -> Result<Self, CorpusError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for row in reader.deserialize::<ManifestEntry>() {
            let entry = row.map_err(|e| CorpusError::Csv {
                file: name.to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            if !seen.insert(entry.clip_id.clone()) {
                return Err(CorpusError::DuplicateClip(entry.clip_id));
            }
            if !(entry.scale_factor.is_finite() && entry.scale_factor > 0.0) {
                return Err(CorpusError::Csv {
                    file: name.to_string(),
                    line: entries.len() as u64 + 2,
                    message: format!("scale_factor must be positive, got {}", entry.scale_factor),
                });
            }
            entries.push(entry);
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    /// Reads the manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::parse(&text, root, &path.display().to_string())?;
        for entry in &manifest.entries {
            for p in [&entry.audio_path, &entry.bvh_path, &entry.labels_path] {
                let full = manifest.resolve(p);
                if !full.is_file() {
                    return Err(CorpusError::MissingFile {
                        clip: entry.clip_id.clone(),
                        path: full,
                    });
                }
            }
        }
        Ok(manifest)
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }

    pub fn get(&self, clip_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Distinct label files, in first-mention order.
    pub fn label_files(&self) -> Vec<PathBuf> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.labels_path.clone()))
            .map(|e| self.resolve(&e.labels_path))
            .collect()
    }
}
