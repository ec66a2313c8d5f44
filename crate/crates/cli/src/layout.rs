use std::path::{Path, PathBuf};

use gesturekit::params::Parameter;
use gesturekit::stimuli::Direction;

/// Bumped whenever a file format below changes.
pub const LAYOUT_VERSION: &str = "v1";

/// Paths of everything the commands read and write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(out: &Path) -> Self {
        Self {
            root: out.join(LAYOUT_VERSION),
        }
    }

    pub fn extract_dir(&self) -> PathBuf {
        self.root.join("extract")
    }

    pub fn params_csv(&self) -> PathBuf {
        self.extract_dir().join("params.csv")
    }

    pub fn strokes_json(&self) -> PathBuf {
        self.extract_dir().join("strokes.json")
    }

    pub fn clips_json(&self) -> PathBuf {
        self.extract_dir().join("clips.json")
    }

    pub fn qa_json(&self) -> PathBuf {
        self.extract_dir().join("qa.json")
    }

    pub fn feature_cache(&self, clip_id: &str) -> PathBuf {
        self.extract_dir().join("features").join(format!("{clip_id}.csv"))
    }

    pub fn train_dir(&self, p: Parameter) -> PathBuf {
        self.root.join("train").join(p.name())
    }

    pub fn checkpoint(&self, p: Parameter) -> PathBuf {
        self.train_dir(p).join("checkpoint.json")
    }

    pub fn length_only_checkpoint(&self, p: Parameter) -> PathBuf {
        self.train_dir(p).join("length_only_checkpoint.json")
    }

    pub fn train_log(&self, p: Parameter) -> PathBuf {
        self.train_dir(p).join("log.csv")
    }

    pub fn length_only_log(&self, p: Parameter) -> PathBuf {
        self.train_dir(p).join("length_only_log.csv")
    }

    pub fn split_json(&self, p: Parameter) -> PathBuf {
        self.train_dir(p).join("split.json")
    }

    pub fn evaluate_dir(&self) -> PathBuf {
        self.root.join("evaluate")
    }

    pub fn baseline_dir(&self) -> PathBuf {
        self.root.join("baseline")
    }

    pub fn stimuli_dir(&self, p: Parameter, d: Direction) -> PathBuf {
        self.root.join("stimuli").join(format!("{}_{d}", p.name()))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}
