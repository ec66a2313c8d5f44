//! Fixed constants of the method. Run-time overrides live in
//! [`crate::config::Constants`], whose defaults are these values.

/// Feature hop in seconds (100 frames per second).
pub const HOP_S: f64 = 0.010;
/// Feature frames per second.
pub const FRAMES_PER_SECOND: f64 = 100.0;
/// Maximum model input length in seconds.
pub const MAX_INPUT_S: f64 = 5.5;
/// Fixed model input length in frames.
pub const MAX_INPUT_FRAMES: usize = 550;
/// Speech context added on each side of a stroke, seconds.
pub const CONTEXT_S: f64 = 1.0;
/// Longest admissible stroke: the input cap minus both context windows.
pub const MAX_STROKE_S: f64 = MAX_INPUT_S - 2.0 * CONTEXT_S;

/// MFCC analysis window, seconds.
pub const MFCC_WINDOW_S: f64 = 0.025;
pub const N_MFCC: usize = 12;
pub const N_MELS: usize = 26;
/// Floor applied before every logarithm of an energy.
pub const LOG_FLOOR: f64 = 1e-10;

/// Pitch analysis window, seconds.
pub const F0_WINDOW_S: f64 = 0.040;
pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 400.0;
/// Normalized autocorrelation peaks below this are unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.3;

/// Moving-average width applied to wrist positions before differentiation.
pub const SPEED_SMOOTHING_FRAMES: usize = 5;
/// A velocity peak is "major" when it reaches this fraction of the stroke maximum.
pub const MAJOR_PEAK_FRACTION: f64 = 0.5;

pub const FF_SIZE: usize = 64;
pub const HIDDEN_SIZE: usize = 64;
pub const INPUT_DROPOUT: f64 = 0.25;
pub const OUTPUT_DROPOUT: f64 = 0.25;
pub const LEARNING_RATE: f64 = 2e-4;
/// Epochs for the velocity and acceleration models.
pub const EPOCHS_KINEMATIC: usize = 70;
/// Epochs for every other parameter model.
pub const EPOCHS_OTHER: usize = 140;
pub const BATCH_SIZE: usize = 32;

pub const VALIDATION_FRACTION: f64 = 0.04;
pub const TEST_FRACTION: f64 = 0.015;

/// Path-length band half width is std(pl) divided by this.
pub const PATH_LENGTH_STD_DIVISOR: f64 = 4.0;
pub const BASELINE_REPEATS: usize = 3;
pub const BONFERRONI_TESTS: usize = 16;
pub const SIGNIFICANCE_ALPHA: f64 = 0.05;

pub const LOW_PERCENTILE: f64 = 0.25;
pub const HIGH_PERCENTILE: f64 = 0.75;
pub const STIMULUS_WINDOW_S: f64 = 10.0;
pub const STIMULUS_GRID_S: f64 = 1.0;
pub const STIMULI_PER_DIRECTION: usize = 5;

/// Inter-frame joint displacement treated as a capture glitch, meters.
pub const GLITCH_DISPLACEMENT_M: f64 = 2.0;
