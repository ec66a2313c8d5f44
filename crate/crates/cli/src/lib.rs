//! The `gesturekit` command line. Every subcommand reads a [`RunConfig`],
//! writes data files under `<out>/v1/` and sends diagnostics to stderr.

mod baseline;
mod evaluate;
mod extract;
mod layout;
mod report;
mod stimuli;
mod store;
mod synth;
mod train;

use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use gesturekit::config::{RunConfig, Seeds};
use gesturekit::params::Parameter;
use gesturekit::stimuli::Direction;

pub use baseline::cmd_baseline;
pub use evaluate::{cmd_evaluate, Subset};
pub use extract::cmd_extract;
pub use layout::Layout;
pub use report::cmd_report;
pub use stimuli::cmd_stimuli;
pub use synth::cmd_synth;
pub use train::{cmd_train, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "gesturekit", version, about = "Gesture parameters from motion capture and speech")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for clip-parallel work and parallel training.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (the versioned layout is created inside it).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the seeded synthetic mini-corpus and a matching config.
    Synth {
        /// Target directory.
        dir: PathBuf,
        /// Approximate stroke count (default: six clips of ten strokes).
        #[arg(long)]
        strokes: Option<usize>,
    },
    /// Parameters, feature caches and a QA report for every manifest clip.
    Extract,
    /// Train the regressor for one parameter (or all).
    Train {
        #[arg(long, value_parser = parse_parameter)]
        param: Option<Parameter>,
        /// Epoch override for quick runs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Also train the speech-length-only comparison model.
        #[arg(long)]
        length_only: bool,
    },
    /// Error report table and signed-rank statistics for trained models.
    Evaluate {
        #[arg(long, value_parser = parse_parameter)]
        param: Option<Parameter>,
        #[arg(long, value_enum, default_value_t = Subset::Test)]
        subset: Subset,
    },
    /// Random-sampling baseline errors on the whole corpus.
    Baseline {
        #[arg(long, value_parser = parse_parameter)]
        param: Option<Parameter>,
    },
    /// Select, edit, verify and export stimulus sequences.
    Stimuli {
        #[arg(long, value_parser = parse_parameter)]
        param: Parameter,
        #[arg(long, value_parser = parse_direction)]
        direction: Direction,
    },
    /// Render the report table and collect verification summaries.
    Report {
        /// Render this table CSV instead of the evaluation results.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn parse_parameter(s: &str) -> Result<Parameter, String> {
    // `path-length` reads better on a command line than `path_length`.
    s.replace('-', "_")
        .parse().map_err(|e: gesturekit::params::ParamError| e.to_string())
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: gesturekit::stimuli::StimulusError| e.to_string())
}

/// Resolved configuration plus the output layout.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub layout: Layout,
    pub jobs: Option<usize>,
}

impl Context {
    pub fn new(global: &GlobalArgs) -> Result<Self> {
        let mut config = match &global.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = global.seed {
            config.seeds = Seeds::all(seed);
        }
        if let Some(out) = &global.out {
            config.out = out.clone();
        }
        Ok(Self {
            layout: Layout::new(&config.out),
            config,
            jobs: global.jobs,
        })
    }

    pub fn from_config(config: RunConfig) -> Self {
        Self {
            layout: Layout::new(&config.out),
            config,
            jobs: None,
        }
    }

    /// Runs `f` on a pool sized by `--jobs` (rayon's default otherwise).
    pub fn pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.jobs {
            builder = builder.num_threads(n.max(1));
        }
        Ok(builder.build().context("starting worker pool")?.install(f))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Synth { dir, strokes } = &cli.command {
        return cmd_synth(dir, *strokes, cli.global.seed.unwrap_or(Seeds::default().split)).map(|_| ());
    }
    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::Synth { .. } => unreachable!("handled above"),
        Command::Extract => cmd_extract(&ctx).map(|_| ()),
        Command::Train {
            param,
            epochs,
            length_only,
        } => {
            let params = param.map_or(Parameter::ALL.to_vec(), |p| vec![p]);
            let opts = TrainOptions { epochs, length_only };
            ctx.pool(|| {
                use rayon::prelude::*;
                params
                    .par_iter()
                    .map(|&p| cmd_train(&ctx, p, &opts).map(|_| ()))
                    .collect::<Result<Vec<()>>>()
            })?
            .map(|_| ())
        }
        Command::Evaluate { param, subset } => cmd_evaluate(&ctx, param, subset).map(|_| ()),
        Command::Baseline { param } => cmd_baseline(&ctx, param).map(|_| ()),
        Command::Stimuli { param, direction } => cmd_stimuli(&ctx, param, direction).map(|_| ()),
        Command::Report { table } => cmd_report(&ctx, table.as_deref()).map(|_| ()),
    }
}
