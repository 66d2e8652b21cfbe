//! Constellation-structure detector.
//!
//! Per axis, an M-QAM symbol takes one of the odd amplitudes
//! `C = {−2K−1, …, 2K+1}` with `K = (√M − 2)/2`. Shifting a received point by an
//! even multiple of the effective channel moves any class onto ±1, so one
//! binary classifier (class +1 vs −1 around the origin) serves every decision
//! boundary. Detection evaluates that classifier at `i + 2k·ĥ` for each
//! `k ∈ {−K, …, K}` and chains the likelihood ratios into a score per class.
//!
//! All quantities are in grid units: symbols are divided by the modulation's
//! unit-energy scale so classes are exact odd integers.
//!
//! The imaginary axis is handled by rotating the input by −90°, which maps its
//! shift vector `[−Im h, Re h]` onto `[Re h, Im h]`. Samples from both axes then
//! share one geometry and can train a single classifier.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::{self, ComplexMatrix, C64};
use crate::qam::{Modulation, QamConstellation};
use crate::random::{child_seed, rng};

/// Subcarriers per classifier group (seven resource block groups of 12).
pub const DEFAULT_GROUP_SIZE: usize = 84;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftSet {
    pub order: u32,
    pub k: i32,
    pub classes: Vec<i32>,
    pub shifts: Vec<i32>,
}

pub fn make_shift_set(m: Modulation) -> ShiftSet {
    let k = (m.levels() as i32 - 2) / 2;
    ShiftSet {
        order: m.order(),
        k,
        classes: (-k - 1..=k).map(|j| 2 * j + 1).collect(),
        shifts: (-k..=k).map(|j| 2 * j).collect(),
    }
}

impl ShiftSet {
    pub fn from_order(order: u32) -> Result<Self> {
        Ok(make_shift_set(Modulation::try_from(order)?))
    }
}

/// Real 2-vector view of a complex symbol.
pub fn decompose(x: C64) -> [f64; 2] {
    [x.re, x.im]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Real,
    Imag,
}

impl Axis {
    /// Classifier input for this axis; the imaginary axis is rotated by −90°.
    pub fn input(self, x: C64) -> [f64; 2] {
        match self {
            Axis::Real => [x.re, x.im],
            Axis::Imag => [x.im, -x.re],
        }
    }
}

/// Per-(stream, subcarrier) complex gain from transmitted symbol to equalized symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveChannel {
    #[serde(with = "numerics::serde_matrix")]
    pub h: ComplexMatrix,
}

impl EffectiveChannel {
    /// `[Re h, Im h]`.
    pub fn real_vector(&self, stream: usize, k: usize) -> [f64; 2] {
        let h = self.h[(stream, k)];
        [h.re, h.im]
    }

    /// `[−Im h, Re h]`.
    pub fn imag_vector(&self, stream: usize, k: usize) -> [f64; 2] {
        let h = self.h[(stream, k)];
        [-h.im, h.re]
    }
}

/// Scalar LMMSE fit of `x̂ = h·x` per (stream, subcarrier) over the pilot symbols.
pub fn estimate_effective_channel(
    xhat_pilots: &[ComplexMatrix],
    x_pilots: &[ComplexMatrix],
    noise_var: f64,
) -> Result<EffectiveChannel> {
    ensure!(!x_pilots.is_empty(), InvalidInput, "no pilot symbols");
    ensure!(xhat_pilots.len() == x_pilots.len(), InvalidDimension, "pilot count mismatch");
    let (streams, nsc) = x_pilots[0].shape();
    ensure!(
        xhat_pilots.iter().chain(x_pilots).all(|g| g.shape() == (streams, nsc)),
        InvalidDimension,
        "pilot grids of differing shapes"
    );
    let np = x_pilots.len();
    let mut h = ComplexMatrix::zeros(streams, nsc);
    for s in 0..streams {
        for k in 0..nsc {
            let x = ComplexMatrix::from_fn(1, np, |_, n| x_pilots[n][(s, k)]);
            ensure!(
                x.iter().any(|z| z.norm_sqr() > 0.0),
                InvalidInput,
                "all-zero pilots on stream {s}, subcarrier {k}"
            );
            let y = ComplexMatrix::from_fn(1, np, |_, n| xhat_pilots[n][(s, k)]);
            h[(s, k)] = numerics::lmmse_estimate(&y, &x, noise_var)?[(0, 0)];
        }
    }
    Ok(EffectiveChannel { h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinarySample {
    pub input: [f64; 2],
    /// +1 or −1.
    pub label: i8,
    pub axis: Axis,
}

fn shifted(i: [f64; 2], s: f64, h: [f64; 2]) -> [f64; 2] {
    [i[0] + s * h[0], i[1] + s * h[1]]
}

/// Two samples per pilot and axis: the point moved onto class +1 and onto class −1.
pub fn build_training_set(
    xhat_pilots: &[ComplexMatrix],
    x_pilots: &[ComplexMatrix],
    eff: &EffectiveChannel,
    modulations: &[Modulation],
    streams: &[usize],
    subcarriers: Range<usize>,
) -> Vec<BinarySample> {
    let mut out = Vec::with_capacity(4 * streams.len() * subcarriers.len() * x_pilots.len());
    for &s in streams {
        let c = QamConstellation::new(modulations[s]);
        let scale = modulations[s].scale();
        for k in subcarriers.clone() {
            let h = eff.h[(s, k)];
            let hv = [h.re, h.im];
            for (xh, x) in xhat_pilots.iter().zip(x_pilots) {
                let (o_re, o_im) = c.nearest_grid(x[(s, k)]);
                let y = xh[(s, k)] / scale;
                for (axis, o) in [(Axis::Real, o_re), (Axis::Imag, o_im)] {
                    let i = axis.input(y);
                    out.push(BinarySample { input: shifted(i, (1 - o) as f64, hv), label: 1, axis });
                    out.push(BinarySample { input: shifted(i, (-1 - o) as f64, hv), label: -1, axis });
                }
            }
        }
    }
    out
}

/// Anything that can produce the log-likelihood ratio of class +1 over −1.
pub trait LogitScorer {
    /// `log L₊₋` at `input`; `h` is the shift vector of the axis being decided.
    fn logit_diff(&self, input: [f64; 2], h: [f64; 2]) -> f64;
}

/// Ideal scorer for a noise-free channel: `gain · ⟨input, h⟩ / ‖h‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleScorer {
    pub gain: f64,
}

impl LogitScorer for OracleScorer {
    fn logit_diff(&self, input: [f64; 2], h: [f64; 2]) -> f64 {
        let n2 = h[0] * h[0] + h[1] * h[1];
        self.gain * (input[0] * h[0] + input[1] * h[1]) / n2
    }
}

/// Two-layer network `2 → Nh (tanh) → 2`, logits ordered `[+1, −1]`.
///
/// Parameters are stored flat: `w1` (Nh×2 row-major), `b1` (Nh), `w2` (2×Nh
/// row-major), `b2` (2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryClassifier {
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl BinaryClassifier {
    pub fn param_count(hidden: usize) -> usize {
        5 * hidden + 2
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(hidden: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut params = vec![0.0; Self::param_count(hidden)];
        let a1 = (6.0 / (2 + hidden) as f64).sqrt();
        for p in &mut params[..2 * hidden] {
            *p = r.random_range(-a1..=a1);
        }
        let a2 = (6.0 / (hidden + 2) as f64).sqrt();
        for p in &mut params[3 * hidden..5 * hidden] {
            *p = r.random_range(-a2..=a2);
        }
        BinaryClassifier { hidden, params }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let n = self.hidden;
        let (w1, rest) = self.params.split_at(2 * n);
        let (b1, rest) = rest.split_at(n);
        let (w2, b2) = rest.split_at(2 * n);
        (w1, b1, w2, b2)
    }

    /// Hidden activations and logits.
    fn forward_into(&self, x: [f64; 2], hid: &mut [f64]) -> [f64; 2] {
        let (w1, b1, w2, b2) = self.split();
        let n = self.hidden;
        let mut z = [b2[0], b2[1]];
        for j in 0..n {
            let a = (w1[2 * j] * x[0] + w1[2 * j + 1] * x[1] + b1[j]).tanh();
            hid[j] = a;
            z[0] += w2[j] * a;
            z[1] += w2[n + j] * a;
        }
        z
    }

    pub fn logits(&self, x: [f64; 2]) -> [f64; 2] {
        let mut hid = vec![0.0; self.hidden];
        self.forward_into(x, &mut hid)
    }

    /// Adds the gradient of one sample's cross-entropy (times `weight`) to `grad`; returns the loss.
    fn accumulate(&self, s: &BinarySample, weight: f64, hid: &mut [f64], grad: &mut [f64]) -> f64 {
        let n = self.hidden;
        let z = self.forward_into(s.input, hid);
        let m = z[0].max(z[1]);
        let (e0, e1) = ((z[0] - m).exp(), (z[1] - m).exp());
        let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let target = if s.label > 0 { 0 } else { 1 };
        let loss = -(p[target].ln());
        let mut dz = p;
        dz[target] -= 1.0;
        dz[0] *= weight;
        dz[1] *= weight;

        let (_, _, w2, _) = self.split();
        let (g_w1, rest) = grad.split_at_mut(2 * n);
        let (g_b1, rest) = rest.split_at_mut(n);
        let (g_w2, g_b2) = rest.split_at_mut(2 * n);
        g_b2[0] += dz[0];
        g_b2[1] += dz[1];
        for j in 0..n {
            let a = hid[j];
            g_w2[j] += dz[0] * a;
            g_w2[n + j] += dz[1] * a;
            let da = (dz[0] * w2[j] + dz[1] * w2[n + j]) * (1.0 - a * a);
            g_w1[2 * j] += da * s.input[0];
            g_w1[2 * j + 1] += da * s.input[1];
            g_b1[j] += da;
        }
        loss
    }

    /// Mean cross-entropy over `samples`.
    pub fn loss(&self, samples: &[BinarySample]) -> f64 {
        let mut hid = vec![0.0; self.hidden];
        samples
            .iter()
            .map(|s| {
                let z = self.forward_into(s.input, &mut hid);
                let d = if s.label > 0 { z[1] - z[0] } else { z[0] - z[1] };
                // −log softmax = log(1 + e^{d}), evaluated stably.
                d.max(0.0) + (-d.abs()).exp().ln_1p()
            })
            .sum::<f64>()
            / samples.len() as f64
    }

    /// Mean cross-entropy and its gradient over `samples`, in the flat parameter layout.
    pub fn loss_and_gradient(&self, samples: &[BinarySample]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut hid = vec![0.0; self.hidden];
        let w = 1.0 / samples.len() as f64;
        let loss = samples.iter().map(|s| self.accumulate(s, w, &mut hid, &mut grad)).sum::<f64>() * w;
        (loss, grad)
    }

    pub fn accuracy(&self, samples: &[BinarySample]) -> f64 {
        let correct = samples
            .iter()
            .filter(|s| {
                let z = self.logits(s.input);
                (z[0] > z[1]) == (s.label > 0)
            })
            .count();
        correct as f64 / samples.len() as f64
    }
}

impl LogitScorer for BinaryClassifier {
    fn logit_diff(&self, input: [f64; 2], _h: [f64; 2]) -> f64 {
        let z = self.logits(input);
        z[0] - z[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Samples per SGD step.
    pub batch_size: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { hidden: 128, epochs: 800, lr: 0.01, momentum: 0.001, batch_size: 1 }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.hidden >= 1, InvalidConfig, "classifier needs at least one hidden unit");
        ensure!(self.batch_size >= 1, InvalidConfig, "batch size must be at least one");
        ensure!(self.lr > 0.0 && self.lr.is_finite(), InvalidConfig, "learning rate must be positive");
        ensure!((0.0..1.0).contains(&self.momentum), InvalidConfig, "momentum must lie in [0, 1)");
        Ok(())
    }
}

/// Softmax cross-entropy, SGD with momentum (`v ← μv + g`, `θ ← θ − ηv`), a
/// fresh seeded shuffle every epoch.
pub fn train_classifier(samples: &[BinarySample], params: &TrainParams, seed: u64) -> Result<BinaryClassifier> {
    ensure!(!samples.is_empty(), InvalidInput, "empty training set");
    params.validate()?;
    let mut net = BinaryClassifier::xavier(params.hidden, child_seed(seed, 0));
    let mut r = rng(child_seed(seed, 1));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut velocity = vec![0.0; net.params.len()];
    let mut grad = vec![0.0; net.params.len()];
    let mut hid = vec![0.0; params.hidden];
    for _ in 0..params.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(params.batch_size) {
            grad.fill(0.0);
            let w = 1.0 / batch.len() as f64;
            for &idx in batch {
                net.accumulate(&samples[idx], w, &mut hid, &mut grad);
            }
            for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = params.momentum * *v + g;
                *p -= params.lr * *v;
            }
        }
    }
    ensure!(net.params.iter().all(|p| p.is_finite()), Numerical, "classifier weights diverged");
    Ok(net)
}

/// Picks a class from the log-ratios `diffs[j]` evaluated at shift `2(j − K)`.
///
/// `score(−2k+1) = Σ_{k'=k}^{K} diffs[k'+K]`, `score(−2K−1) = 0`. Ties go to the
/// class of smaller magnitude, then to the negative one.
pub fn decide_from_logits(diffs: &[f64]) -> i32 {
    let k = (diffs.len() as i32 - 1) / 2;
    let mut best = (f64::NEG_INFINITY, 0i32);
    let mut consider = |score: f64, class: i32| {
        let better = score > best.0
            || (score == best.0
                && (class.abs() < best.1.abs() || (class.abs() == best.1.abs() && class < best.1)));
        if better {
            best = (score, class);
        }
    };
    consider(0.0, -2 * k - 1);
    let mut acc = 0.0;
    for kk in (-k..=k).rev() {
        acc += diffs[(kk + k) as usize];
        consider(acc, -2 * kk + 1);
    }
    best.1
}

/// Class estimate in `C` for one axis of one equalized symbol (grid units).
pub fn classify_symbol<S: LogitScorer + ?Sized>(
    i: [f64; 2],
    h: [f64; 2],
    shifts: &ShiftSet,
    scorer: &S,
) -> i32 {
    let diffs: Vec<f64> =
        shifts.shifts.iter().map(|&s| scorer.logit_diff(shifted(i, s as f64, h), h)).collect();
    decide_from_logits(&diffs)
}

/// Subcarrier ranges of the classifier groups; the last group takes the remainder.
pub fn subcarrier_groups(nsc: usize, group_size: usize) -> Vec<Range<usize>> {
    let g = group_size.max(1);
    (0..nsc.div_ceil(g)).map(|i| i * g..((i + 1) * g).min(nsc)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub group_size: usize,
    /// One classifier per group shared by all streams, or one per (group, stream).
    pub share_streams: bool,
    pub train: TrainParams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { group_size: DEFAULT_GROUP_SIZE, share_streams: true, train: TrainParams::default() }
    }
}

/// Trained detector for one subframe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructDetector<S = BinaryClassifier> {
    pub modulations: Vec<Modulation>,
    pub group_size: usize,
    pub share_streams: bool,
    pub effective: EffectiveChannel,
    /// `classifiers[group][stream or 0]`.
    pub classifiers: Vec<Vec<S>>,
}

pub fn train_struct_detector(
    xhat_pilots: &[ComplexMatrix],
    x_pilots: &[ComplexMatrix],
    modulations: &[Modulation],
    noise_var: f64,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<StructDetector> {
    let effective = estimate_effective_channel(xhat_pilots, x_pilots, noise_var)?;
    let (streams, nsc) = effective.h.shape();
    ensure!(modulations.len() == streams, InvalidDimension, "{} modulations for {streams} streams", modulations.len());
    let groups = subcarrier_groups(nsc, cfg.group_size);
    let all: Vec<usize> = (0..streams).collect();
    let stream_sets: Vec<Vec<usize>> =
        if cfg.share_streams { vec![all] } else { all.iter().map(|&s| vec![s]).collect() };
    let jobs: Vec<(usize, usize)> =
        (0..groups.len()).flat_map(|g| (0..stream_sets.len()).map(move |s| (g, s))).collect();
    let trained: Vec<BinaryClassifier> = jobs
        .par_iter()
        .map(|&(g, s)| {
            let samples = build_training_set(xhat_pilots, x_pilots, &effective, modulations, &stream_sets[s], groups[g].clone());
            train_classifier(&samples, &cfg.train, child_seed(seed, (g * stream_sets.len() + s) as u64))
        })
        .collect::<Result<_>>()?;
    let mut it = trained.into_iter();
    let classifiers = (0..groups.len()).map(|_| it.by_ref().take(stream_sets.len()).collect()).collect();
    Ok(StructDetector {
        modulations: modulations.to_vec(),
        group_size: cfg.group_size,
        share_streams: cfg.share_streams,
        effective,
        classifiers,
    })
}

/// Hard decisions for the data symbols.
#[derive(Debug, Clone)]
pub struct Detection {
    /// Detected constellation points, one `streams × nsc` grid per data symbol.
    pub symbols: Vec<ComplexMatrix>,
    /// Gray-decoded bits per stream in (symbol, subcarrier) order.
    pub bits: Vec<Vec<u8>>,
}

impl<S: LogitScorer + Sync> StructDetector<S> {
    fn scorer(&self, group: usize, stream: usize) -> Result<&S> {
        let set = self
            .classifiers
            .get(group)
            .ok_or_else(|| Error::InvalidState(format!("no classifier for subcarrier group {group}")))?;
        let idx = if self.share_streams { 0 } else { stream };
        set.get(idx)
            .ok_or_else(|| Error::InvalidState(format!("no classifier for group {group}, stream {stream}")))
    }

    pub fn detect_subframe(&self, xhat_data: &[ComplexMatrix]) -> Result<Detection> {
        let (streams, nsc) = self.effective.h.shape();
        ensure!(
            xhat_data.iter().all(|g| g.shape() == (streams, nsc)),
            InvalidDimension,
            "data grids must be {streams}×{nsc}"
        );
        let groups = subcarrier_groups(nsc, self.group_size);
        let mut scorers = Vec::with_capacity(groups.len());
        for g in 0..groups.len() {
            scorers.push((0..streams).map(|s| self.scorer(g, s)).collect::<Result<Vec<_>>>()?);
        }
        let group_of = |k: usize| k / self.group_size.max(1);

        let mut symbols = vec![ComplexMatrix::zeros(streams, nsc); xhat_data.len()];
        let mut bits = Vec::with_capacity(streams);
        for s in 0..streams {
            let m = self.modulations[s];
            let c = QamConstellation::new(m);
            let shifts = make_shift_set(m);
            let scale = m.scale();
            let mut b = Vec::with_capacity(xhat_data.len() * nsc * m.bits_per_symbol());
            for (n, grid) in xhat_data.iter().enumerate() {
                for k in 0..nsc {
                    let scorer = scorers[group_of(k)][s];
                    let hv = self.effective.real_vector(s, k);
                    let y = grid[(s, k)] / scale;
                    let re = classify_symbol(Axis::Real.input(y), hv, &shifts, scorer);
                    let im = classify_symbol(Axis::Imag.input(y), hv, &shifts, scorer);
                    symbols[n][(s, k)] = C64::new(re as f64, im as f64) * scale;
                    c.grid_bits(re, im, &mut b);
                }
            }
            bits.push(b);
        }
        Ok(Detection { symbols, bits })
    }
}
