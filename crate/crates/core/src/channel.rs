//! Multipath MIMO channel, AWGN and the Rapp-style power amplifier.
//!
//! The channel is quasi-static over a subframe: one tapped delay line per
//! (rx, tx) antenna pair, applied as a circular convolution over each OFDM
//! symbol's `nsc + ncp` span. With `lc <= ncp + 1` the body of every symbol sees
//! a linear convolution, so after CP removal `Y(k) = H(k) X(k)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numerics::{self, ComplexMatrix, C64};
use crate::ofdm::TimeSignal;
use crate::random::{complex_normal, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapProfile {
    /// Number of taps.
    pub lc: usize,
    /// Exponential decay constant in samples: tap `l` has power `∝ exp(-l/decay)`.
    pub decay: f64,
}

impl TapProfile {
    /// Normalized per-tap powers summing to one.
    pub fn powers(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.lc).map(|l| (-(l as f64) / self.decay).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRealization {
    pub profile: TapProfile,
    /// `taps[rx][tx][l]`.
    pub taps: Vec<Vec<Vec<C64>>>,
}

impl ChannelRealization {
    pub fn nr(&self) -> usize {
        self.taps.len()
    }

    pub fn nt(&self) -> usize {
        self.taps.first().map_or(0, Vec::len)
    }

    pub fn lc(&self) -> usize {
        self.profile.lc
    }

    /// Single-tap channel with the given `nr × nt` matrix.
    pub fn flat(h: &ComplexMatrix) -> Self {
        ChannelRealization {
            profile: TapProfile { lc: 1, decay: 1.0 },
            taps: (0..h.nrows())
                .map(|j| (0..h.ncols()).map(|i| vec![h[(j, i)]]).collect())
                .collect(),
        }
    }

    /// `H(k)` for every subcarrier: the `nsc`-point DFT of the taps.
    pub fn frequency_response(&self, nsc: usize) -> Vec<ComplexMatrix> {
        (0..nsc)
            .map(|k| {
                ComplexMatrix::from_fn(self.nr(), self.nt(), |j, i| {
                    self.taps[j][i]
                        .iter()
                        .enumerate()
                        .map(|(l, &h)| {
                            h * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * l) as f64 / nsc as f64)
                        })
                        .sum()
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ch: ChannelRealization = serde_json::from_str(s)?;
        ensure!(
            ch.taps.iter().flatten().all(|t| t.len() == ch.profile.lc),
            InvalidInput,
            "tap vectors must all have length {}",
            ch.profile.lc
        );
        ensure!(
            ch.taps.iter().all(|row| row.len() == ch.nt()),
            InvalidInput,
            "ragged antenna layout"
        );
        ensure!(
            ch.taps.iter().flatten().flatten().all(|z| numerics::is_finite(*z)),
            InvalidInput,
            "non-finite tap"
        );
        Ok(ch)
    }
}

/// Rayleigh taps with an exponential power-delay profile, deterministic per seed.
pub fn generate_channel(
    profile: TapProfile,
    nt: usize,
    nr: usize,
    ncp: usize,
    seed: u64,
) -> Result<ChannelRealization> {
    ensure!(profile.lc >= 1, InvalidConfig, "at least one channel tap is required");
    ensure!(
        profile.lc <= ncp,
        InvalidConfig,
        "{} taps exceed the cyclic prefix of {ncp} samples",
        profile.lc
    );
    ensure!(
        profile.decay > 0.0 && !profile.decay.is_nan(),
        InvalidConfig,
        "decay constant must be positive"
    );
    let powers = profile.powers();
    let mut r = rng(seed);
    let taps = (0..nr)
        .map(|_| {
            (0..nt)
                .map(|_| powers.iter().map(|&p| complex_normal(&mut r, p)).collect())
                .collect()
        })
        .collect();
    Ok(ChannelRealization { profile, taps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaModel {
    pub enabled: bool,
    pub x_sat: f64,
    pub rho: f64,
    /// Input back-off in dB. When set, the transmit signal is scaled so its mean
    /// power sits this far below `x_sat²`, passed through the amplifier and scaled
    /// back. When unset the amplifier sees the signal as is.
    #[serde(default)]
    pub ibo_db: Option<f64>,
}

impl Default for PaModel {
    fn default() -> Self {
        PaModel { enabled: false, x_sat: 1.0, rho: 3.0, ibo_db: None }
    }
}

impl PaModel {
    pub fn with_ibo(ibo_db: f64) -> Self {
        PaModel { enabled: true, ibo_db: Some(ibo_db), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.x_sat > 0.0, InvalidConfig, "x_sat must be positive");
        ensure!(self.rho > 0.0, InvalidConfig, "rho must be positive");
        Ok(())
    }
}

/// `x / [1 + (|x|/x_sat)^(2ρ)]^(0.5ρ)`, with the outer exponent exactly `0.5ρ`.
///
/// Note that with this exponent the gain curve peaks at
/// `|x| = x_sat · (ρ² − 1)^(−1/(2ρ))` for `ρ > 1` and folds back beyond it.
pub fn rapp_pa(x: C64, pa: &PaModel) -> C64 {
    if !pa.enabled {
        return x;
    }
    let r = x.norm() / pa.x_sat;
    x / (1.0 + r.powf(2.0 * pa.rho)).powf(0.5 * pa.rho)
}

fn apply_pa(tx: &ComplexMatrix, pa: &PaModel) -> ComplexMatrix {
    if !pa.enabled {
        return tx.clone();
    }
    let gain = match pa.ibo_db {
        Some(ibo) => {
            let power = tx.iter().map(|z| z.norm_sqr()).sum::<f64>() / tx.len().max(1) as f64;
            if power > 0.0 {
                (pa.x_sat * pa.x_sat / 10f64.powf(ibo / 10.0) / power).sqrt()
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    tx.map(|z| rapp_pa(z * gain, pa) / gain)
}

/// Noise variance per complex time-domain sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma2: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec { sigma2: 0.0 }
    }

    /// Time-domain variance giving frequency-domain noise variance
    /// [`ebn0_to_sigma2`] after the unnormalized FFT of `nsc` points.
    pub fn from_ebn0(ebn0_db: f64, bits_per_symbol: usize, nt: usize, nsc: usize) -> Self {
        NoiseSpec { sigma2: ebn0_to_sigma2(ebn0_db, bits_per_symbol, nt) / nsc as f64 }
    }
}

/// Frequency-domain noise variance for unit-energy symbols:
/// `σ² = nt · Es / (bits_per_symbol · 10^(ebn0_db/10))` with `Es = 1`.
pub fn ebn0_to_sigma2(ebn0_db: f64, bits_per_symbol: usize, nt: usize) -> f64 {
    nt as f64 / (bits_per_symbol as f64 * 10f64.powf(ebn0_db / 10.0))
}

/// `y_j = Σ_i h_{j,i} ⊛ φ(x_i) + n_j`, circular convolution per OFDM symbol.
pub fn apply_channel(
    tx: &TimeSignal,
    ch: &ChannelRealization,
    noise: NoiseSpec,
    pa: &PaModel,
    seed: u64,
) -> Result<TimeSignal> {
    ensure!(
        tx.antennas() == ch.nt(),
        InvalidDimension,
        "signal has {} streams, channel expects {}",
        tx.antennas(),
        ch.nt()
    );
    ensure!(noise.sigma2 >= 0.0, InvalidInput, "negative noise variance");
    pa.validate()?;
    let l = tx.symbol_len();
    ensure!(ch.lc() <= l, InvalidConfig, "{} taps exceed the symbol length {l}", ch.lc());
    let x = apply_pa(&tx.samples, pa);
    let total = tx.len();
    let mut y = ComplexMatrix::zeros(ch.nr(), total);
    for j in 0..ch.nr() {
        for i in 0..ch.nt() {
            let h = &ch.taps[j][i];
            for n in 0..tx.n_symbols() {
                let base = n * l;
                for t in 0..l {
                    let mut acc = C64::default();
                    for (lag, &tap) in h.iter().enumerate() {
                        acc += tap * x[(i, base + (t + l - lag) % l)];
                    }
                    y[(j, base + t)] += acc;
                }
            }
        }
    }
    if noise.sigma2 > 0.0 {
        let mut r = rng(seed);
        y.iter_mut().for_each(|z| *z += complex_normal(&mut r, noise.sigma2));
    }
    TimeSignal::new(tx.nsc, tx.ncp, y)
}
