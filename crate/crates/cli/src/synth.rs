use std::path::Path;

use anyhow::{Context as _, Result};
use gesturekit::config::{RunConfig, Seeds};
use gesturekit::corpus::synth::{generate, SynthConfig};

use crate::store;

/// Writes the synthetic corpus to `dir/corpus` and a config next to it
/// whose manifest and output paths point into `dir`.
pub fn cmd_synth(dir: &Path, strokes: Option<usize>, seed: u64) -> Result<RunConfig> {
    let cfg = match strokes {
        Some(n) => SynthConfig::with_strokes(n, seed),
        None => SynthConfig::mini(seed),
    };
    let corpus = generate(&cfg);
    let corpus_dir = dir.join("corpus");
    corpus
        .write(&corpus_dir)
        .with_context(|| format!("writing the synthetic corpus to {}", corpus_dir.display()))?;
    let run = RunConfig {
        manifest: "corpus/manifest.csv".into(),
        out: "out".into(),
        joint_map: corpus.joint_map.clone(),
        seeds: Seeds::default(),
        ..RunConfig::default()
    };
    store::write(&dir.join("gesturekit.toml"), run.to_toml())?;
    log::info!(
        "{} clips, {} strokes written to {}; config {}",
        corpus.clips.len(),
        corpus.strokes().len(),
        corpus_dir.display(),
        dir.join("gesturekit.toml").display()
    );
    Ok(run)
}
