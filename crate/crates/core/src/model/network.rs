use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::audio::FeatureMatrix;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the current batch in the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout.
    Train,
    /// Running statistics, no dropout.
    Infer,
}

/// One LSTM direction. Gate blocks along the first axis are i, f, g, o.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `(4H, F)`
    pub w_ih: Array2<f64>,
    /// `(4H, H)`
    pub w_hh: Array2<f64>,
    /// `(4H)`
    pub b: Array1<f64>,
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub bn1_gamma: Array1<f64>,
    pub bn1_beta: Array1<f64>,
    /// `(F, D)`
    pub ff_w: Array2<f64>,
    pub ff_b: Array1<f64>,
    pub forward: LstmWeights,
    pub backward: LstmWeights,
    pub bn2_gamma: Array1<f64>,
    pub bn2_beta: Array1<f64>,
    /// `(2, 2H)`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl Weights {
    pub const NAMES: [&'static str; 14] = [
        "bn1.gamma",
        "bn1.beta",
        "ff.weight",
        "ff.bias",
        "lstm_fwd.weight_ih",
        "lstm_fwd.weight_hh",
        "lstm_fwd.bias",
        "lstm_bwd.weight_ih",
        "lstm_bwd.weight_hh",
        "lstm_bwd.bias",
        "bn2.gamma",
        "bn2.beta",
        "out.weight",
        "out.bias",
    ];

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f, h) = (cfg.input_dim, cfg.ff_size, cfg.hidden_size);
        let lstm = || LstmWeights {
            w_ih: Array2::zeros((4 * h, f)),
            w_hh: Array2::zeros((4 * h, h)),
            b: Array1::zeros(4 * h),
        };
        Self {
            bn1_gamma: Array1::zeros(d),
            bn1_beta: Array1::zeros(d),
            ff_w: Array2::zeros((f, d)),
            ff_b: Array1::zeros(f),
            forward: lstm(),
            backward: lstm(),
            bn2_gamma: Array1::zeros(2 * h),
            bn2_beta: Array1::zeros(2 * h),
            out_w: Array2::zeros((2, 2 * h)),
            out_b: Array1::zeros(2),
        }
    }

    /// Uniform(-k, k) with k = 1/sqrt(fan_in) (the hidden size for the LSTM);
    /// batch-norm scales 1 and shifts 0.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let mut w = Self::zeros(cfg);
        w.bn1_gamma.fill(1.0);
        w.bn2_gamma.fill(1.0);
        let mut fill = |a: &mut [f64], fan_in: usize| {
            let k = 1.0 / (fan_in as f64).sqrt();
            for v in a {
                *v = rng.gen_range(-k..k);
            }
        };
        let (d, h) = (cfg.input_dim, cfg.hidden_size);
        fill(w.ff_w.as_slice_mut().unwrap(), d);
        fill(w.ff_b.as_slice_mut().unwrap(), d);
        for lstm in [&mut w.forward, &mut w.backward] {
            fill(lstm.w_ih.as_slice_mut().unwrap(), h);
            fill(lstm.w_hh.as_slice_mut().unwrap(), h);
            fill(lstm.b.as_slice_mut().unwrap(), h);
        }
        fill(w.out_w.as_slice_mut().unwrap(), 2 * h);
        fill(w.out_b.as_slice_mut().unwrap(), 2 * h);
        w
    }

    /// Tensors in [`Weights::NAMES`] order, as flat slices with shapes.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let views: [(Vec<usize>, &[f64]); 14] = [
            (self.bn1_gamma.shape().to_vec(), self.bn1_gamma.as_slice().unwrap()),
            (self.bn1_beta.shape().to_vec(), self.bn1_beta.as_slice().unwrap()),
            (self.ff_w.shape().to_vec(), self.ff_w.as_slice().unwrap()),
            (self.ff_b.shape().to_vec(), self.ff_b.as_slice().unwrap()),
            (self.forward.w_ih.shape().to_vec(), self.forward.w_ih.as_slice().unwrap()),
            (self.forward.w_hh.shape().to_vec(), self.forward.w_hh.as_slice().unwrap()),
            (self.forward.b.shape().to_vec(), self.forward.b.as_slice().unwrap()),
            (self.backward.w_ih.shape().to_vec(), self.backward.w_ih.as_slice().unwrap()),
            (self.backward.w_hh.shape().to_vec(), self.backward.w_hh.as_slice().unwrap()),
            (self.backward.b.shape().to_vec(), self.backward.b.as_slice().unwrap()),
            (self.bn2_gamma.shape().to_vec(), self.bn2_gamma.as_slice().unwrap()),
            (self.bn2_beta.shape().to_vec(), self.bn2_beta.as_slice().unwrap()),
            (self.out_w.shape().to_vec(), self.out_w.as_slice().unwrap()),
            (self.out_b.shape().to_vec(), self.out_b.as_slice().unwrap()),
        ];
        Self::NAMES
            .iter()
            .zip(views)
            .map(|(n, (shape, data))| (*n, shape, data))
            .collect()
    }

    /// Mutable flat slices in [`Weights::NAMES`] order.
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 14] {
        [
            self.bn1_gamma.as_slice_mut().unwrap(),
            self.bn1_beta.as_slice_mut().unwrap(),
            self.ff_w.as_slice_mut().unwrap(),
            self.ff_b.as_slice_mut().unwrap(),
            self.forward.w_ih.as_slice_mut().unwrap(),
            self.forward.w_hh.as_slice_mut().unwrap(),
            self.forward.b.as_slice_mut().unwrap(),
            self.backward.w_ih.as_slice_mut().unwrap(),
            self.backward.w_hh.as_slice_mut().unwrap(),
            self.backward.b.as_slice_mut().unwrap(),
            self.bn2_gamma.as_slice_mut().unwrap(),
            self.bn2_beta.as_slice_mut().unwrap(),
            self.out_w.as_slice_mut().unwrap(),
            self.out_b.as_slice_mut().unwrap(),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }
}

/// Batch-norm running statistics used in infer mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub bn1_mean: Vec<f64>,
    pub bn1_var: Vec<f64>,
    pub bn2_mean: Vec<f64>,
    pub bn2_var: Vec<f64>,
}

impl RunningStats {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            bn1_mean: vec![0.0; cfg.input_dim],
            bn1_var: vec![1.0; cfg.input_dim],
            bn2_mean: vec![0.0; 2 * cfg.hidden_size],
            bn2_var: vec![1.0; 2 * cfg.hidden_size],
        }
    }

    /// Exponential update from the batch statistics of a train-mode pass.
    /// Batch variances are bias-corrected before blending.
    pub fn update(&mut self, fwd: &Forward) {
        let blend = |run: &mut [f64], batch: &Array1<f64>, correction: f64| {
            for (r, b) in run.iter_mut().zip(batch) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b * correction;
            }
        };
        let unbiased = |n: usize| if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
        blend(&mut self.bn1_mean, &fwd.bn1.mean, 1.0);
        blend(&mut self.bn1_var, &fwd.bn1.var, unbiased(fwd.bn1.xhat.nrows()));
        blend(&mut self.bn2_mean, &fwd.bn2.mean, 1.0);
        blend(&mut self.bn2_var, &fwd.bn2.var, unbiased(fwd.bn2.xhat.nrows()));
    }
}

/// Windows stacked time-major: row `t * B + b` is timestep `t` of window `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub steps: usize,
    pub size: usize,
    pub x: Array2<f64>,
}

impl Batch {
    pub fn from_windows(windows: &[&FeatureMatrix]) -> Result<Self, ModelError> {
        let first = windows.first().ok_or(ModelError::EmptySet("batch"))?;
        let (steps, dim, size) = (first.n_rows(), first.dim(), windows.len());
        let mut x = Array2::zeros((steps * size, dim));
        for (b, w) in windows.iter().enumerate() {
            if w.n_rows() != steps || w.dim() != dim {
                return Err(ModelError::Shape(format!(
                    "window {} is {}x{}, batch expects {steps}x{dim}",
                    w.clip_id,
                    w.n_rows(),
                    w.dim()
                )));
            }
            for t in 0..steps {
                x.row_mut(t * size + b)
                    .as_slice_mut()
                    .unwrap()
                    .copy_from_slice(w.row(t));
            }
        }
        Ok(Self { steps, size, x })
    }

    /// From a `(B, T, D)` nested vector, mainly for tests.
    pub fn from_nested(seqs: &[Vec<Vec<f64>>]) -> Result<Self, ModelError> {
        let size = seqs.len();
        let steps = seqs.first().map_or(0, Vec::len);
        let dim = seqs.first().and_then(|s| s.first()).map_or(0, Vec::len);
        if size == 0 || steps == 0 || dim == 0 {
            return Err(ModelError::EmptySet("batch"));
        }
        let mut x = Array2::zeros((steps * size, dim));
        for (b, seq) in seqs.iter().enumerate() {
            if seq.len() != steps || seq.iter().any(|r| r.len() != dim) {
                return Err(ModelError::Shape("ragged batch".into()));
            }
            for (t, row) in seq.iter().enumerate() {
                for (d, v) in row.iter().enumerate() {
                    x[[t * size + b, d]] = *v;
                }
            }
        }
        Ok(Self { steps, size, x })
    }
}

/// Multiplicative dropout masks, entries 0 or 1/(1-p). Input masks are drawn
/// per sample and feature and held fixed over time, one per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    /// `(B, F)` per direction.
    pub input: [Array2<f64>; 2],
    /// `(B, 2H)`
    pub output: Array2<f64>,
}

impl DropoutMasks {
    pub fn ones(batch: usize, cfg: &ModelConfig) -> Self {
        Self {
            input: [
                Array2::ones((batch, cfg.ff_size)),
                Array2::ones((batch, cfg.ff_size)),
            ],
            output: Array2::ones((batch, 2 * cfg.hidden_size)),
        }
    }

    pub fn sample(batch: usize, cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let mut draw = |shape: (usize, usize), p: f64| {
            let keep = 1.0 / (1.0 - p);
            Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < p { 0.0 } else { keep })
        };
        let fwd = draw((batch, cfg.ff_size), cfg.input_dropout);
        let bwd = draw((batch, cfg.ff_size), cfg.input_dropout);
        let out = draw((batch, 2 * cfg.hidden_size), cfg.output_dropout);
        Self {
            input: [fwd, bwd],
            output: out,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    inv_std: Array1<f64>,
    xhat: Array2<f64>,
}

#[derive(Debug, Clone)]
struct LstmCache {
    /// Dropped-out inputs `(TB, F)`.
    xin: Array2<f64>,
    /// Gate activations `(TB, 4H)`.
    acts: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

/// Outputs of one pass plus what backpropagation needs.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `(B, 2)` sigmoid outputs.
    pub output: Array2<f64>,
    pub bn1: BnCache,
    pub bn2: BnCache,
    y1: Array2<f64>,
    lstm: [LstmCache; 2],
    dropped: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check(a: &Array2<f64>, layer: &'static str) -> Result<(), ModelError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { layer })
    }
}

fn bn_forward(
    x: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    running: Option<(&[f64], &[f64])>,
) -> (Array2<f64>, BnCache) {
    let (mean, var) = match running {
        Some((m, v)) => (Array1::from(m.to_vec()), Array1::from(v.to_vec())),
        None => {
            let mean = x.mean_axis(Axis(0)).expect("non-empty");
            let var = (x - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
            (mean, var)
        }
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
    let xhat = (x - &mean) * &inv_std;
    let y = &xhat * gamma + beta;
    (
        y,
        BnCache {
            mean,
            var,
            inv_std,
            xhat,
        },
    )
}

/// Gradient w.r.t. the input of a train-mode batch norm, and the scale/shift
/// gradients. `want_input` skips the input gradient when it is not needed.
fn bn_backward(
    dy: &Array2<f64>,
    gamma: &Array1<f64>,
    cache: &BnCache,
    want_input: bool,
) -> (Option<Array2<f64>>, Array1<f64>, Array1<f64>) {
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    if !want_input {
        return (None, dgamma, dbeta);
    }
    let n = dy.nrows() as f64;
    let dxhat = dy * gamma;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
    let dx = (&dxhat * n - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat) * &cache.inv_std / n;
    (Some(dx), dgamma, dbeta)
}

fn lstm_forward(
    w: &LstmWeights,
    z: &Array2<f64>,
    mask: &Array2<f64>,
    steps: usize,
    size: usize,
    reverse: bool,
) -> LstmCache {
    let hid = w.w_hh.ncols();
    let mut xin = z.clone();
    for t in 0..steps {
        let mut block = xin.slice_mut(s![t * size..(t + 1) * size, ..]);
        block *= mask;
    }
    let mut acts = xin.dot(&w.w_ih.t()) + &w.b;
    let mut c = Array2::<f64>::zeros((steps * size, hid));
    let mut h = Array2::<f64>::zeros((steps * size, hid));
    let mut h_prev = Array2::<f64>::zeros((size, hid));
    let mut c_prev = Array2::<f64>::zeros((size, hid));
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let rows = t * size..(t + 1) * size;
        let mut gates = acts.slice_mut(s![rows.clone(), ..]);
        gates += &h_prev.dot(&w.w_hh.t());
        gates.slice_mut(s![.., 0..2 * hid]).mapv_inplace(sigmoid);
        gates.slice_mut(s![.., 2 * hid..3 * hid]).mapv_inplace(f64::tanh);
        gates.slice_mut(s![.., 3 * hid..]).mapv_inplace(sigmoid);
        let gates = gates.view();
        let (i, f, g, o) = (
            gates.slice(s![.., 0..hid]),
            gates.slice(s![.., hid..2 * hid]),
            gates.slice(s![.., 2 * hid..3 * hid]),
            gates.slice(s![.., 3 * hid..]),
        );
        let c_t = &f * &c_prev + &i * &g;
        let h_t = &o * &c_t.mapv(f64::tanh);
        c.slice_mut(s![rows.clone(), ..]).assign(&c_t);
        h.slice_mut(s![rows, ..]).assign(&h_t);
        c_prev = c_t;
        h_prev = h_t;
    }
    LstmCache { xin, acts, c, h }
}

/// Backpropagates `dh_final` (gradient on the last processed hidden state)
/// through one direction. Accumulates weight gradients into `grad` and
/// returns the gradient on the pre-dropout inputs `(TB, F)`.
fn lstm_backward(
    w: &LstmWeights,
    cache: &LstmCache,
    mask: &Array2<f64>,
    dh_final: ArrayView2<f64>,
    steps: usize,
    size: usize,
    reverse: bool,
    grad: &mut LstmWeights,
) -> Array2<f64> {
    let hid = w.w_hh.ncols();
    let mut dpre = Array2::<f64>::zeros((steps * size, 4 * hid));
    let mut dh_next = dh_final.to_owned();
    let mut dc_next = Array2::<f64>::zeros((size, hid));
    let zeros = Array2::<f64>::zeros((size, hid));
    // Processing order reversed; "previous" is the step processed before `t`.
    let order: Vec<usize> = if reverse {
        (0..steps).collect()
    } else {
        (0..steps).rev().collect()
    };
    for t in order {
        let rows = t * size..(t + 1) * size;
        let prev = if reverse {
            (t + 1 < steps).then(|| (t + 1) * size..(t + 2) * size)
        } else {
            (t > 0).then(|| (t - 1) * size..t * size)
        };
        let acts = cache.acts.slice(s![rows.clone(), ..]);
        let (i, f, g, o) = (
            acts.slice(s![.., 0..hid]),
            acts.slice(s![.., hid..2 * hid]),
            acts.slice(s![.., 2 * hid..3 * hid]),
            acts.slice(s![.., 3 * hid..]),
        );
        let c_t = cache.c.slice(s![rows.clone(), ..]);
        let (c_prev, h_prev) = match &prev {
            Some(r) => (cache.c.slice(s![r.clone(), ..]), cache.h.slice(s![r.clone(), ..])),
            None => (zeros.view(), zeros.view()),
        };
        let tanh_c = c_t.mapv(f64::tanh);
        let dh = &dh_next;
        let d_o = dh * &tanh_c;
        let dc = &dc_next + &(dh * &o * &tanh_c.mapv(|v| 1.0 - v * v));
        let mut d = dpre.slice_mut(s![rows, ..]);
        Zip::from(d.slice_mut(s![.., 0..hid]))
            .and(&dc)
            .and(&g)
            .and(&i)
            .for_each(|out, &dc, &g, &i| *out = dc * g * i * (1.0 - i));
        Zip::from(d.slice_mut(s![.., hid..2 * hid]))
            .and(&dc)
            .and(&c_prev)
            .and(&f)
            .for_each(|out, &dc, &cp, &f| *out = dc * cp * f * (1.0 - f));
        Zip::from(d.slice_mut(s![.., 2 * hid..3 * hid]))
            .and(&dc)
            .and(&i)
            .and(&g)
            .for_each(|out, &dc, &i, &g| *out = dc * i * (1.0 - g * g));
        Zip::from(d.slice_mut(s![.., 3 * hid..]))
            .and(&d_o)
            .and(&o)
            .for_each(|out, &d_o, &o| *out = d_o * o * (1.0 - o));
        let d = d.view();
        grad.w_hh += &d.t().dot(&h_prev);
        dh_next = d.dot(&w.w_hh);
        dc_next = &dc * &f;
    }
    grad.w_ih += &dpre.t().dot(&cache.xin);
    grad.b += &dpre.sum_axis(Axis(0));
    let mut dz = dpre.dot(&w.w_ih);
    for t in 0..steps {
        let mut block = dz.slice_mut(s![t * size..(t + 1) * size, ..]);
        block *= mask;
    }
    dz
}

/// Weights plus batch-norm statistics: everything needed to run the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub weights: Weights,
    pub running: RunningStats,
}

impl Network {
    pub fn new(config: ModelConfig, weights: Weights) -> Self {
        let running = RunningStats::new(&config);
        Self {
            config,
            weights,
            running,
        }
    }

    /// Runs the network. `masks` is only read in train mode; `None` there
    /// means no dropout.
    pub fn forward(&self, batch: &Batch, mode: Mode, masks: Option<&DropoutMasks>) -> Result<Forward, ModelError> {
        let cfg = &self.config;
        let w = &self.weights;
        if batch.x.ncols() != cfg.input_dim {
            return Err(ModelError::Shape(format!(
                "input has {} features, model expects {}",
                batch.x.ncols(),
                cfg.input_dim
            )));
        }
        let (steps, size, hid) = (batch.steps, batch.size, cfg.hidden_size);
        let owned_ones;
        let masks = match (mode, masks) {
            (Mode::Train, Some(m)) => {
                if m.output.nrows() != size {
                    return Err(ModelError::Shape("dropout masks do not match batch size".into()));
                }
                m
            }
            _ => {
                owned_ones = DropoutMasks::ones(size, cfg);
                &owned_ones
            }
        };
        let run1 = (mode == Mode::Infer).then(|| (&self.running.bn1_mean[..], &self.running.bn1_var[..]));
        let (y1, bn1) = bn_forward(&batch.x, &w.bn1_gamma, &w.bn1_beta, run1);
        check(&y1, "input batch norm")?;
        let z = y1.dot(&w.ff_w.t()) + &w.ff_b;
        check(&z, "feed-forward")?;
        let fwd = lstm_forward(&w.forward, &z, &masks.input[0], steps, size, false);
        let bwd = lstm_forward(&w.backward, &z, &masks.input[1], steps, size, true);
        let mut hcat = Array2::<f64>::zeros((size, 2 * hid));
        hcat.slice_mut(s![.., 0..hid])
            .assign(&fwd.h.slice(s![(steps - 1) * size..steps * size, ..]));
        hcat.slice_mut(s![.., hid..]).assign(&bwd.h.slice(s![0..size, ..]));
        check(&hcat, "bidirectional LSTM")?;
        let run2 = (mode == Mode::Infer).then(|| (&self.running.bn2_mean[..], &self.running.bn2_var[..]));
        let (y2, bn2) = bn_forward(&hcat, &w.bn2_gamma, &w.bn2_beta, run2);
        let dropped = &y2 * &masks.output;
        check(&dropped, "output batch norm")?;
        let output = (dropped.dot(&w.out_w.t()) + &w.out_b).mapv(sigmoid);
        check(&output, "output layer")?;
        Ok(Forward {
            output,
            bn1,
            bn2,
            y1,
            lstm: [fwd, bwd],
            dropped,
        })
    }

    /// Inference outputs as `[left, right]` pairs in `[0, 1]`.
    pub fn infer(&self, batch: &Batch) -> Result<Vec<[f64; 2]>, ModelError> {
        let out = self.forward(batch, Mode::Infer, None)?.output;
        Ok(out.rows().into_iter().map(|r| [r[0], r[1]]).collect())
    }
}

/// Mean squared error over the batch and both outputs, and the gradient of
/// every weight, for a train-mode pass with the given masks.
pub fn loss_and_gradients(
    net: &Network,
    batch: &Batch,
    targets: &Array2<f64>,
    masks: &DropoutMasks,
) -> Result<(f64, Weights, Forward), ModelError> {
    let fwd = net.forward(batch, Mode::Train, Some(masks))?;
    if targets.dim() != fwd.output.dim() {
        return Err(ModelError::Shape(format!(
            "targets are {:?}, outputs {:?}",
            targets.dim(),
            fwd.output.dim()
        )));
    }
    let cfg = &net.config;
    let w = &net.weights;
    let (steps, size, hid) = (batch.steps, batch.size, cfg.hidden_size);
    let resid = &fwd.output - targets;
    let count = resid.len() as f64;
    let loss = resid.mapv(|r| r * r).sum() / count;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite { layer: "loss" });
    }
    let mut grad = Weights::zeros(cfg);

    let dlogit = &resid * (2.0 / count) * &fwd.output * &fwd.output.mapv(|p| 1.0 - p);
    grad.out_w = dlogit.t().dot(&fwd.dropped);
    grad.out_b = dlogit.sum_axis(Axis(0));
    let dy2 = dlogit.dot(&w.out_w) * &masks.output;
    let (dhcat, dg2, db2) = bn_backward(&dy2, &w.bn2_gamma, &fwd.bn2, true);
    grad.bn2_gamma = dg2;
    grad.bn2_beta = db2;
    let dhcat = dhcat.expect("requested");

    let mut dz = lstm_backward(
        &w.forward,
        &fwd.lstm[0],
        &masks.input[0],
        dhcat.slice(s![.., 0..hid]),
        steps,
        size,
        false,
        &mut grad.forward,
    );
    dz += &lstm_backward(
        &w.backward,
        &fwd.lstm[1],
        &masks.input[1],
        dhcat.slice(s![.., hid..]),
        steps,
        size,
        true,
        &mut grad.backward,
    );
    grad.ff_w = dz.t().dot(&fwd.y1);
    grad.ff_b = dz.sum_axis(Axis(0));
    let dy1 = dz.dot(&w.ff_w);
    let (_, dg1, db1) = bn_backward(&dy1, &w.bn1_gamma, &fwd.bn1, false);
    grad.bn1_gamma = dg1;
    grad.bn1_beta = db1;
    Ok((loss, grad, fwd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(d: usize, f: usize, h: usize) -> ModelConfig {
        ModelConfig {
            ff_size: f,
            hidden_size: h,
            ..ModelConfig::new(d)
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, t: usize, d: usize) -> Batch {
        let seqs: Vec<Vec<Vec<f64>>> = (0..b)
            .map(|_| (0..t).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
            .collect();
        Batch::from_nested(&seqs).unwrap()
    }

    #[test]
    fn zero_weights_give_one_half() {
        let cfg = config(3, 4, 5);
        let net = Network::new(cfg.clone(), Weights::zeros(&cfg));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = random_batch(&mut rng, 2, 6, 3);
        for mode in [Mode::Train, Mode::Infer] {
            let out = net.forward(&batch, mode, None).unwrap().output;
            assert!(out.iter().all(|&v| v == 0.5));
        }
    }

    /// Hand evaluation of T=1, D=2, H=2 in infer mode with unit running
    /// statistics and identity feed-forward.
    #[test]
    fn single_step_matches_hand_calculation() {
        let cfg = config(2, 2, 2);
        let mut w = Weights::zeros(&cfg);
        w.bn1_gamma.fill(1.0);
        w.bn2_gamma.fill(1.0);
        w.ff_w = ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        w.forward.w_ih = ndarray::arr2(&[
            [0.5, -0.2],
            [0.1, 0.3],
            [0.2, 0.2],
            [-0.1, 0.4],
            [0.3, 0.1],
            [0.0, -0.5],
            [0.7, -0.3],
            [0.2, 0.6],
        ]);
        w.forward.b = ndarray::arr1(&[0.1, 0.0, 0.2, -0.1, 0.0, 0.05, 0.0, 0.1]);
        w.backward.w_ih = w.forward.w_ih.mapv(|v| -v);
        w.out_w = ndarray::arr2(&[[1.0, -1.0, 0.5, 0.25], [0.0, 2.0, -1.0, 1.0]]);
        w.out_b = ndarray::arr1(&[0.1, -0.2]);
        let net = Network::new(cfg.clone(), w.clone());
        let x = [0.8, -0.4];
        let batch = Batch::from_nested(&[vec![x.to_vec()]]).unwrap();
        let got = net.infer(&batch).unwrap()[0];

        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let norm = |v: f64| v / (1.0 + BN_EPSILON).sqrt();
        let xn = [norm(x[0]), norm(x[1])];
        let cell = |wi: &Array2<f64>, b: &Array1<f64>| -> [f64; 2] {
            let mut h = [0.0; 2];
            for k in 0..2 {
                let pre = |row: usize| wi[[row, 0]] * xn[0] + wi[[row, 1]] * xn[1] + b[row];
                let i = s(pre(k));
                let g = pre(4 + k).tanh();
                let o = s(pre(6 + k));
                let c = i * g;
                h[k] = o * c.tanh();
            }
            h
        };
        let hf = cell(&w.forward.w_ih, &w.forward.b);
        let hb = cell(&w.backward.w_ih, &w.backward.b);
        let cat = [norm(hf[0]), norm(hf[1]), norm(hb[0]), norm(hb[1])];
        let out = |row: usize| {
            s((0..4).map(|j| w.out_w[[row, j]] * cat[j]).sum::<f64>() + w.out_b[row])
        };
        assert!((got[0] - out(0)).abs() < 1e-9);
        assert!((got[1] - out(1)).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_have_zero_loss_and_gradient() {
        let cfg = config(3, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(cfg.clone(), Weights::init(&cfg, &mut rng));
        let batch = random_batch(&mut rng, 4, 5, 3);
        let masks = DropoutMasks::sample(4, &cfg, &mut rng);
        let out = net.forward(&batch, Mode::Train, Some(&masks)).unwrap().output;
        let (loss, grad, _) = loss_and_gradients(&net, &batch, &out, &masks).unwrap();
        assert_eq!(loss, 0.0);
        for (_, _, g) in grad.tensors() {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn doubled_residuals_quadruple_loss() {
        let cfg = config(2, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::new(cfg.clone(), Weights::init(&cfg, &mut rng));
        let batch = random_batch(&mut rng, 3, 4, 2);
        let masks = DropoutMasks::ones(3, &cfg);
        let out = net.forward(&batch, Mode::Train, Some(&masks)).unwrap().output;
        let t1 = &out + 0.1;
        let t2 = &out + 0.2;
        let (l1, _, _) = loss_and_gradients(&net, &batch, &t1, &masks).unwrap();
        let (l2, _, _) = loss_and_gradients(&net, &batch, &t2, &masks).unwrap();
        assert!((l2 / l1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn infer_is_repeatable_and_batch_invariant() {
        let cfg = config(3, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::new(cfg.clone(), Weights::init(&cfg, &mut rng));
        net.running.bn1_mean = vec![0.1, -0.2, 0.3];
        net.running.bn2_var = vec![0.5; 10];
        let seqs: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| (0..6).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
            .collect();
        let all = net.infer(&Batch::from_nested(&seqs).unwrap()).unwrap();
        assert_eq!(all, net.infer(&Batch::from_nested(&seqs).unwrap()).unwrap());
        for (k, seq) in seqs.iter().enumerate() {
            let one = net.infer(&Batch::from_nested(std::slice::from_ref(seq)).unwrap()).unwrap();
            assert!((one[0][0] - all[k][0]).abs() < 1e-9);
            assert!((one[0][1] - all[k][1]).abs() < 1e-9);
        }
    }

    /// Central differences on every weight entry of a tiny network.
    fn gradient_check(seed: u64) -> f64 {
        let cfg = config(5, 6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(cfg.clone(), Weights::init(&cfg, &mut rng));
        let batch = random_batch(&mut rng, 3, 7, 5);
        let masks = DropoutMasks::sample(3, &cfg, &mut rng);
        let targets = Array2::from_shape_simple_fn((3, 2), || rng.gen_range(0.0..1.0));
        let (_, grad, _) = loss_and_gradients(&net, &batch, &targets, &masks).unwrap();
        let loss_at = |w: &Weights| {
            let n = Network::new(cfg.clone(), w.clone());
            let out = n.forward(&batch, Mode::Train, Some(&masks)).unwrap().output;
            (&out - &targets).mapv(|r| r * r).mean().unwrap()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let analytic = grad.tensors();
        for (k, (name, _, g)) in analytic.iter().enumerate() {
            for i in 0..g.len() {
                let mut plus = net.weights.clone();
                plus.tensors_mut()[k][i] += h;
                let mut minus = net.weights.clone();
                minus.tensors_mut()[k][i] -= h;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let a = g[i];
                let scale = a.abs().max(numeric.abs());
                if scale < 1e-10 {
                    continue;
                }
                let rel = (a - numeric).abs() / scale;
                if rel > 1e-4 {
                    eprintln!("{name}[{i}]: analytic {a:e} numeric {numeric:e}");
                }
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let worst = gradient_check(seed);
            assert!(worst < 1e-4, "seed {seed}: {worst:e}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let cfg = config(3, 2, 2);
        let net = Network::new(cfg.clone(), Weights::zeros(&cfg));
        let batch = Batch::from_nested(&[vec![vec![0.0; 4]; 2]]).unwrap();
        assert!(matches!(net.forward(&batch, Mode::Infer, None), Err(ModelError::Shape(_))));
    }
}
