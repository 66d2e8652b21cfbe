//! Windowed echo state network used as a time-domain stream separator and
//! equalizer, trained per subframe with a closed-form least-squares readout.
//!
//! The network input at time `t` is the stack `[y(t-Nw+1); …; y(t)]` of all
//! receive antennas (oldest lag first, antennas contiguous within a lag, zeros
//! before the start of the signal). The state update is
//! `s(t) = f(W s(t-1) + W_in u(t))` with `s(-1) = 0` and `f` applied to real and
//! imaginary parts separately; the output is `W_out [s(t); u(t)]`.
//!
//! Training appends `d` zero samples to the input and prepends `d` zeros to the
//! targets, so a readout trained with delay `d` emits `x(t)` at time `t + d`.
//! Inference undoes this by appending `d` zeros and dropping the first `d`
//! outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::{self, serde_matrix, ComplexMatrix, ComplexVector, C64};
use crate::random::{complex_normal, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `tanh` on real and imaginary parts independently.
    #[default]
    SplitTanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: C64) -> C64 {
        match self {
            Activation::SplitTanh => C64::new(z.re.tanh(), z.im.tanh()),
            Activation::Identity => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsnConfig {
    pub neurons: usize,
    pub window: usize,
    pub spectral_radius: f64,
    pub input_scale: f64,
    /// Step of the delay grid searched during training.
    pub delay_step: usize,
    /// Largest delay searched; the simulator uses the CP length when unset.
    pub delay_max: Option<usize>,
    pub cascade_depth: usize,
    pub activation: Activation,
    /// Tikhonov weight for the readout; zero gives the plain pseudo-inverse.
    pub ridge: f64,
}

impl Default for EsnConfig {
    fn default() -> Self {
        EsnConfig {
            neurons: 16,
            window: 16,
            spectral_radius: 0.9,
            input_scale: 0.05,
            delay_step: 5,
            delay_max: None,
            cascade_depth: 2,
            activation: Activation::SplitTanh,
            ridge: 0.0,
        }
    }
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.neurons >= 1, InvalidConfig, "reservoir needs at least one neuron");
        ensure!(self.window >= 1, InvalidConfig, "input window must be at least one sample");
        ensure!(
            self.spectral_radius > 0.0 && self.spectral_radius < 1.0,
            InvalidConfig,
            "spectral radius {} must lie in (0, 1) for the echo state property",
            self.spectral_radius
        );
        ensure!(self.input_scale >= 0.0, InvalidConfig, "input scale must be non-negative");
        ensure!(self.delay_step >= 1, InvalidConfig, "delay step must be at least one");
        ensure!(self.cascade_depth >= 1, InvalidConfig, "cascade depth must be at least one");
        ensure!(self.ridge >= 0.0, InvalidConfig, "ridge weight must be non-negative");
        Ok(())
    }
}

/// Reservoir with fixed random weights and an optionally trained readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEsn {
    pub config: EsnConfig,
    pub inputs: usize,
    pub outputs: usize,
    #[serde(with = "serde_matrix")]
    pub w_in: ComplexMatrix,
    #[serde(with = "serde_matrix")]
    pub w: ComplexMatrix,
    #[serde(with = "serde_matrix")]
    pub w_out: ComplexMatrix,
    pub delay: usize,
    pub trained: bool,
}

impl TrainedEsn {
    pub fn input_dim(&self) -> usize {
        self.inputs * self.config.window
    }

    pub fn state_dim(&self) -> usize {
        self.config.neurons + self.input_dim()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let esn: TrainedEsn = serde_json::from_str(s)?;
        esn.config.validate()?;
        let n = esn.config.neurons;
        ensure!(esn.w.shape() == (n, n), InvalidInput, "reservoir matrix shape");
        ensure!(esn.w_in.shape() == (n, esn.input_dim()), InvalidInput, "input matrix shape");
        ensure!(esn.w_out.shape() == (esn.outputs, esn.state_dim()), InvalidInput, "readout shape");
        Ok(esn)
    }
}

/// Draws `W` (complex Gaussian rescaled to the target spectral radius) and
/// `W_in` (uniform in `±input_scale` per real/imaginary part).
pub fn init_reservoir(cfg: &EsnConfig, inputs: usize, outputs: usize, seed: u64) -> Result<TrainedEsn> {
    cfg.validate()?;
    ensure!(inputs >= 1 && outputs >= 1, InvalidConfig, "reservoir needs inputs and outputs");
    let mut r = rng(seed);
    let n = cfg.neurons;
    let raw = ComplexMatrix::from_fn(n, n, |_, _| complex_normal(&mut r, 1.0));
    let radius = numerics::spectral_radius(&raw)?;
    ensure!(radius > 0.0, Numerical, "degenerate reservoir draw");
    let w = raw.scale(cfg.spectral_radius / radius);
    let a = cfg.input_scale;
    let w_in = ComplexMatrix::from_fn(n, inputs * cfg.window, |_, _| {
        C64::new(r.random_range(-1.0..=1.0) * a, r.random_range(-1.0..=1.0) * a)
    });
    Ok(TrainedEsn {
        config: cfg.clone(),
        inputs,
        outputs,
        w_in,
        w,
        w_out: ComplexMatrix::zeros(outputs, n + inputs * cfg.window),
        delay: 0,
        trained: false,
    })
}

/// Sliding-window view over a multi-antenna signal, optionally followed by
/// `tail` zero samples.
#[derive(Debug, Clone, Copy)]
pub struct WindowedInput<'a> {
    signal: &'a ComplexMatrix,
    window: usize,
    tail: usize,
}

pub fn apply_window(signal: &ComplexMatrix, window: usize) -> WindowedInput<'_> {
    WindowedInput { signal, window: window.max(1), tail: 0 }
}

impl<'a> WindowedInput<'a> {
    pub fn with_tail(mut self, tail: usize) -> Self {
        self.tail = tail;
        self
    }

    pub fn len(&self) -> usize {
        self.signal.ncols() + self.tail
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.signal.nrows() * self.window
    }

    /// Writes the stack for time `t` into `out` (length [`Self::dim`]).
    pub fn stack_at(&self, t: usize, out: &mut [C64]) {
        let rows = self.signal.nrows();
        let n = self.signal.ncols();
        for pos in 0..self.window {
            let lag = self.window - 1 - pos;
            let dst = &mut out[pos * rows..(pos + 1) * rows];
            match t.checked_sub(lag) {
                Some(src) if src < n => dst.copy_from_slice(self.signal.column(src).as_slice()),
                _ => dst.fill(C64::default()),
            }
        }
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.dim(), self.len());
        for t in 0..self.len() {
            self.stack_at(t, m.column_mut(t).as_mut_slice());
        }
        m
    }
}

/// Concatenated `[s(t); u(t)]` columns over a processed span.
#[derive(Debug, Clone)]
pub struct StateRecord {
    pub z: ComplexMatrix,
}

impl StateRecord {
    pub fn len(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.z.ncols() == 0
    }

    /// The first `len` columns.
    pub fn prefix(&self, len: usize) -> StateRecord {
        StateRecord { z: self.z.columns(0, len).into_owned() }
    }
}

/// Streams `z(t)` for every `t` of the input into `sink`, starting from a zero state.
fn drive<F: FnMut(usize, &ComplexVector)>(esn: &TrainedEsn, input: &WindowedInput<'_>, mut sink: F) {
    let nn = esn.config.neurons;
    let du = input.dim();
    let mut z = ComplexVector::zeros(nn + du);
    let mut s = ComplexVector::zeros(nn);
    let mut pre = ComplexVector::zeros(nn);
    let one = C64::new(1.0, 0.0);
    let zero = C64::default();
    for t in 0..input.len() {
        input.stack_at(t, &mut z.as_mut_slice()[nn..]);
        let u = z.rows(nn, du);
        pre.gemv(one, &esn.w, &s, zero);
        pre.gemv(one, &esn.w_in, &u, one);
        for (si, &p) in s.iter_mut().zip(pre.iter()) {
            *si = esn.config.activation.apply(p);
        }
        z.rows_mut(0, nn).copy_from(&s);
        sink(t, &z);
    }
}

pub fn run_states(esn: &TrainedEsn, input: &WindowedInput<'_>) -> StateRecord {
    let mut z = ComplexMatrix::zeros(esn.config.neurons + input.dim(), input.len());
    drive(esn, input, |t, col| z.column_mut(t).copy_from(col));
    StateRecord { z }
}

/// `‖W_out Z − X‖_F²`.
pub fn readout_residual(w_out: &ComplexMatrix, states: &StateRecord, targets: &ComplexMatrix) -> f64 {
    let r = w_out * &states.z - targets;
    r.iter().map(|z| z.norm_sqr()).sum()
}

/// Least-squares readout `W_out = X Z†` (or the ridge solution when `ridge > 0`).
pub fn train_readout(states: &StateRecord, targets: &ComplexMatrix, ridge: f64) -> Result<ComplexMatrix> {
    ensure!(!states.is_empty(), InvalidInput, "no states recorded");
    ensure!(
        targets.ncols() == states.len(),
        InvalidDimension,
        "{} target columns for {} state columns",
        targets.ncols(),
        states.len()
    );
    if ridge > 0.0 {
        let d = states.z.nrows();
        let gram = &states.z * states.z.adjoint() + ComplexMatrix::identity(d, d).scale(ridge);
        let cross = targets * states.z.adjoint();
        let ch = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge Gram matrix not positive definite".into()))?;
        Ok(ch.solve(&cross.adjoint()).adjoint())
    } else {
        Ok(targets * numerics::pseudo_inverse(&states.z)?)
    }
}

/// Result of the delay search.
#[derive(Debug, Clone)]
pub struct DelayFit {
    pub delay: usize,
    pub w_out: ComplexMatrix,
    pub residual: f64,
    /// `(delay, residual)` for every candidate, ascending in delay.
    pub candidates: Vec<(usize, f64)>,
}

fn delayed_targets(targets: &ComplexMatrix, d: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(targets.nrows(), targets.ncols() + d);
    out.columns_mut(d, targets.ncols()).copy_from(targets);
    out
}

/// Trains one readout per delay in `{0, step, 2·step, …} ≤ delay_max` and keeps
/// the one with the smallest residual; ties go to the smaller delay.
pub fn learn_delay(
    esn: &TrainedEsn,
    input: &ComplexMatrix,
    targets: &ComplexMatrix,
    step: usize,
    delay_max: usize,
) -> Result<DelayFit> {
    ensure!(
        input.ncols() == targets.ncols(),
        InvalidDimension,
        "{} input samples for {} targets",
        input.ncols(),
        targets.ncols()
    );
    ensure!(input.nrows() == esn.inputs, InvalidDimension, "input has {} rows, reservoir expects {}", input.nrows(), esn.inputs);
    ensure!(targets.nrows() == esn.outputs, InvalidDimension, "targets have {} rows, reservoir emits {}", targets.nrows(), esn.outputs);
    let step = step.max(1);
    let all = run_states(esn, &apply_window(input, esn.config.window).with_tail(delay_max));
    let mut best: Option<DelayFit> = None;
    let mut candidates = Vec::new();
    for d in (0..=delay_max).step_by(step) {
        let states = all.prefix(input.ncols() + d);
        let x = delayed_targets(targets, d);
        let w_out = train_readout(&states, &x, esn.config.ridge)?;
        let residual = readout_residual(&w_out, &states, &x);
        candidates.push((d, residual));
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(DelayFit { delay: d, w_out, residual, candidates: Vec::new() });
        }
    }
    let mut fit = best.expect("delay grid always contains zero");
    fit.candidates = candidates;
    Ok(fit)
}

/// Fits the readout and delay of `esn` on a pilot block; returns the training residual.
pub fn train_esn(esn: &mut TrainedEsn, input: &ComplexMatrix, targets: &ComplexMatrix, delay_max: usize) -> Result<f64> {
    let fit = learn_delay(esn, input, targets, esn.config.delay_step, delay_max)?;
    esn.w_out = fit.w_out;
    esn.delay = fit.delay;
    esn.trained = true;
    Ok(fit.residual)
}

/// Runs the trained network and realigns its output by the learned delay;
/// returns `outputs × len` samples.
pub fn esn_equalize(esn: &TrainedEsn, rx: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !esn.trained {
        return Err(Error::NotTrained);
    }
    ensure!(rx.nrows() == esn.inputs, InvalidDimension, "input has {} rows, reservoir expects {}", rx.nrows(), esn.inputs);
    let n = rx.ncols();
    let d = esn.delay;
    let mut out = ComplexMatrix::zeros(esn.outputs, n);
    let mut y = ComplexVector::zeros(esn.outputs);
    let one = C64::new(1.0, 0.0);
    drive(esn, &apply_window(rx, esn.config.window).with_tail(d), |t, z| {
        if t >= d {
            y.gemv(one, &esn.w_out, z, C64::default());
            out.column_mut(t - d).copy_from(&y);
        }
    });
    Ok(out)
}

/// Chain of reservoirs: stage 1 maps the received signal to the transmit
/// streams, every later stage re-equalizes its predecessor's output against the
/// same targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EsnCascade {
    pub stages: Vec<TrainedEsn>,
    /// Training residual of each stage, measured on its own delayed targets.
    pub residuals: Vec<f64>,
}

pub fn train_cascade(
    cfg: &EsnConfig,
    rx_pilots: &ComplexMatrix,
    tx_pilots: &ComplexMatrix,
    delay_max: usize,
    seed: u64,
) -> Result<EsnCascade> {
    cfg.validate()?;
    let mut stages = Vec::with_capacity(cfg.cascade_depth);
    let mut residuals = Vec::with_capacity(cfg.cascade_depth);
    let mut input = rx_pilots.clone();
    for v in 0..cfg.cascade_depth {
        let mut esn = init_reservoir(cfg, input.nrows(), tx_pilots.nrows(), crate::random::child_seed(seed, v as u64))?;
        residuals.push(train_esn(&mut esn, &input, tx_pilots, delay_max)?);
        if v + 1 < cfg.cascade_depth {
            input = esn_equalize(&esn, &input)?;
        }
        stages.push(esn);
    }
    Ok(EsnCascade { stages, residuals })
}

impl EsnCascade {
    pub fn equalize(&self, rx: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut x = rx.clone();
        for esn in &self.stages {
            x = esn_equalize(esn, &x)?;
        }
        Ok(x)
    }
}
