//! Reading and writing the files shared between commands.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use gesturekit::audio::{read_feature_cache, FeatureMatrix};
use gesturekit::corpus::StrokeRecord;
use gesturekit::params::{read_params_csv, GestureParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Layout;

/// Per-clip facts recorded by `extract`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub dataset_id: String,
    pub duration_s: f64,
    pub frame_time: f64,
    pub frames: usize,
    pub feature_rows: usize,
    pub scale_factor: f64,
    /// BVH path as resolved at extraction time.
    pub bvh_path: String,
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Everything `extract` leaves behind, minus the feature caches.
#[derive(Debug, Clone)]
pub struct Extracted {
    pub params: Vec<GestureParams>,
    pub strokes: Vec<StrokeRecord>,
    pub clips: BTreeMap<String, ClipRecord>,
}

impl Extracted {
    pub fn load(layout: &Layout) -> Result<Self> {
        for path in [layout.params_csv(), layout.strokes_json(), layout.clips_json()] {
            if !path.is_file() {
                bail!(
                    "missing extraction output {}; run `gesturekit extract` (cmd_extract) with the same --config/--out first",
                    path.display()
                );
            }
        }
        let params = read_params_csv(&read_text(&layout.params_csv())?)
            .with_context(|| format!("parsing {}", layout.params_csv().display()))?;
        let strokes: Vec<StrokeRecord> = read_json(&layout.strokes_json())?;
        let clips: Vec<ClipRecord> = read_json(&layout.clips_json())?;
        if params.len() != strokes.len() {
            bail!(
                "{} has {} rows but {} lists {} strokes; rerun `gesturekit extract`",
                layout.params_csv().display(),
                params.len(),
                layout.strokes_json().display(),
                strokes.len()
            );
        }
        Ok(Self {
            params,
            strokes,
            clips: clips.into_iter().map(|c| (c.clip_id.clone(), c)).collect(),
        })
    }

    pub fn params_by_id(&self) -> BTreeMap<&str, &GestureParams> {
        self.params.iter().map(|p| (p.stroke_id.as_str(), p)).collect()
    }

    pub fn strokes_by_id(&self) -> BTreeMap<&str, &StrokeRecord> {
        self.strokes.iter().map(|s| (s.stroke_id.as_str(), s)).collect()
    }

    pub fn durations(&self) -> BTreeMap<String, f64> {
        self.clips.iter().map(|(id, c)| (id.clone(), c.duration_s)).collect()
    }

    /// Feature caches of the clips that own `strokes`.
    pub fn features<'a>(
        &self,
        layout: &Layout,
        strokes: impl IntoIterator<Item = &'a StrokeRecord>,
    ) -> Result<BTreeMap<String, FeatureMatrix>> {
        let mut out = BTreeMap::new();
        for s in strokes {
            if out.contains_key(&s.clip_id) {
                continue;
            }
            let path = layout.feature_cache(&s.clip_id);
            if !path.is_file() {
                bail!(
                    "missing feature cache {}; run `gesturekit extract` (cmd_extract) first",
                    path.display()
                );
            }
            let m = read_feature_cache(&read_text(&path)?).with_context(|| format!("parsing {}", path.display()))?;
            out.insert(s.clip_id.clone(), m);
        }
        Ok(out)
    }
}
