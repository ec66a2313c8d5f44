//! Manifest-driven pairing of audio, motion and stroke labels; stroke
//! windows with context; random train/validation/test splits.

mod labels;
mod manifest;
mod split;
pub mod synth;
mod window;

use std::path::PathBuf;

pub use labels::{load_labels, load_labels_lenient, write_labels, ClipInfo, RejectedStroke, StrokeRecord, StrokeSource};
pub use manifest::{Manifest, ManifestEntry};
pub use split::{make_split, Split};
pub use window::{window_for_stroke, window_span, StrokeWindow};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{file}, line {line}: {message}")]
    Csv {
        file: String,
        line: u64,
        message: String,
    },
    #[error("duplicate clip id `{0}` in manifest")]
    DuplicateClip(String),
    #[error("clip `{clip}`: referenced file {path} does not exist")]
    MissingFile { clip: String, path: PathBuf },
    #[error("duplicate stroke id `{0}`")]
    DuplicateStroke(String),
    #[error("stroke `{stroke}` refers to unknown clip `{clip}`")]
    UnknownClip { stroke: String, clip: String },
    #[error("stroke `{stroke}`: start {start_s} s is not before end {end_s} s")]
    EmptyInterval { stroke: String, start_s: f64, end_s: f64 },
    #[error("stroke `{stroke}` [{start_s}, {end_s}] s lies outside clip `{clip}` (duration {duration_s} s)")]
    OutOfBounds {
        stroke: String,
        clip: String,
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("stroke `{stroke}` lasts {duration_s:.3} s; with 1 s context on each side it exceeds the 5.5 s input cap (3.5 s stroke maximum)")]
    ExceedsCap { stroke: String, duration_s: f64 },
    #[error("strokes `{first}` and `{second}` overlap in clip `{clip}`")]
    Overlap {
        clip: String,
        first: String,
        second: String,
    },
    #[error("unknown stroke source `{0}` (hand or automatic expected)")]
    Source(String),
    #[error("a split needs at least 3 strokes, got {0}")]
    TooFewStrokes(usize),
    #[error("validation fraction {val} plus test fraction {test} must be below 1")]
    Fractions { val: f64, test: f64 },
    #[error("rounded split sizes leave no training strokes ({n} strokes, {val} validation, {test} test)")]
    EmptyTrain { n: usize, val: usize, test: usize },
    #[error(transparent)]
    Feature(#[from] crate::audio::FeatureError),
}
