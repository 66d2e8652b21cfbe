//! OFDM subframes: frequency-domain grids, CP-OFDM modulation and the
//! pilot/data subframe layout (first `np` symbols are pilots).

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numerics::{self, serde_matrix, serde_matrix_vec, ComplexMatrix, C64};
use crate::qam::{Modulation, QamConstellation};
use crate::random::{rng, uniform_bits};

/// How pilot symbols are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotDesign {
    /// i.i.d. uniform constellation points per antenna.
    #[default]
    Random,
    /// One random point per (stream, subcarrier) spread over the pilot symbols by
    /// a Walsh-Hadamard row, so every per-subcarrier pilot matrix has orthogonal
    /// rows. Needs a power-of-two `np` no smaller than the stream count.
    Orthogonal,
}

impl std::str::FromStr for PilotDesign {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PilotDesign::Random),
            "orthogonal" => Ok(PilotDesign::Orthogonal),
            _ => Err(crate::Error::InvalidConfig(format!("unknown pilot design '{s}'; expected random or orthogonal"))),
        }
    }
}

/// Layout of one subframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub nsc: usize,
    pub np: usize,
    pub nd: usize,
    /// One modulation per stream; its length is the stream count.
    pub modulations: Vec<Modulation>,
    #[serde(default)]
    pub pilots: PilotDesign,
}

impl FrameConfig {
    pub fn uniform(streams: usize, nsc: usize, np: usize, nd: usize, m: Modulation) -> Self {
        FrameConfig { nsc, np, nd, modulations: vec![m; streams], pilots: PilotDesign::Random }
    }

    pub fn with_pilots(mut self, pilots: PilotDesign) -> Self {
        self.pilots = pilots;
        self
    }

    pub fn streams(&self) -> usize {
        self.modulations.len()
    }

    pub fn symbols(&self) -> usize {
        self.np + self.nd
    }
}

/// Frequency-domain content of one subframe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubframeGrid {
    pub config: FrameConfig,
    /// `symbols[n]` is the `streams × nsc` grid of OFDM symbol `n`.
    #[serde(with = "serde_matrix_vec")]
    pub symbols: Vec<ComplexMatrix>,
    /// Source bits of the data symbols, per stream, in (symbol, subcarrier) order.
    pub data_bits: Vec<Vec<u8>>,
}

impl SubframeGrid {
    pub fn is_pilot(&self, n: usize) -> bool {
        n < self.config.np
    }

    pub fn pilots(&self) -> &[ComplexMatrix] {
        &self.symbols[..self.config.np]
    }

    pub fn data(&self) -> &[ComplexMatrix] {
        &self.symbols[self.config.np..]
    }

    /// Largest 2-norm condition number of the per-subcarrier `streams × np`
    /// pilot matrix. Infinite when some subcarrier's pilots are rank deficient.
    pub fn pilot_condition_number(&self) -> f64 {
        let np = self.config.np;
        let mut worst: f64 = 1.0;
        for k in 0..self.config.nsc {
            let p = ComplexMatrix::from_fn(self.config.streams(), np, |s, n| self.symbols[n][(s, k)]);
            let Ok(svd) = numerics::svd(&p) else { return f64::INFINITY };
            let (hi, lo) = (svd.sigma[0], *svd.sigma.last().unwrap());
            if self.config.streams() > np || lo == 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max(hi / lo);
        }
        worst
    }
}

/// Deterministic subframe: pilots follow `cfg.pilots`, data symbols carry
/// uniformly drawn bits.
pub fn build_subframe(cfg: &FrameConfig, seed: u64) -> Result<SubframeGrid> {
    ensure!(cfg.np >= 1, InvalidConfig, "at least one pilot symbol is required for training");
    ensure!(cfg.streams() >= 1, InvalidConfig, "at least one stream is required");
    ensure!(cfg.nsc >= 1, InvalidConfig, "at least one subcarrier is required");
    let mut r = rng(seed);
    let streams = cfg.streams();
    let consts: Vec<QamConstellation> = cfg.modulations.iter().map(|&m| QamConstellation::new(m)).collect();

    let mut symbols = Vec::with_capacity(cfg.symbols());
    match cfg.pilots {
        PilotDesign::Random => {
            for _ in 0..cfg.np {
                let mut grid = ComplexMatrix::zeros(streams, cfg.nsc);
                for (s, c) in consts.iter().enumerate() {
                    let bits = uniform_bits(&mut r, cfg.nsc * c.modulation().bits_per_symbol());
                    for (k, x) in c.modulate(&bits)?.into_iter().enumerate() {
                        grid[(s, k)] = x;
                    }
                }
                symbols.push(grid);
            }
        }
        PilotDesign::Orthogonal => {
            ensure!(
                cfg.np.is_power_of_two() && cfg.np >= streams,
                InvalidConfig,
                "orthogonal pilots need a power-of-two pilot count of at least {streams}, got {}",
                cfg.np
            );
            let mut base = ComplexMatrix::zeros(streams, cfg.nsc);
            for (s, c) in consts.iter().enumerate() {
                let bits = uniform_bits(&mut r, cfg.nsc * c.modulation().bits_per_symbol());
                for (k, x) in c.modulate(&bits)?.into_iter().enumerate() {
                    base[(s, k)] = x;
                }
            }
            for n in 0..cfg.np {
                // Square QAM is symmetric under negation, so ±x stays on the grid.
                symbols.push(ComplexMatrix::from_fn(streams, cfg.nsc, |s, k| {
                    if (s & n).count_ones() % 2 == 0 {
                        base[(s, k)]
                    } else {
                        -base[(s, k)]
                    }
                }));
            }
        }
    }

    let data_bits: Vec<Vec<u8>> = consts
        .iter()
        .map(|c| uniform_bits(&mut r, cfg.nd * cfg.nsc * c.modulation().bits_per_symbol()))
        .collect();
    let data_syms: Vec<Vec<C64>> = consts
        .iter()
        .zip(&data_bits)
        .map(|(c, b)| c.modulate(b))
        .collect::<Result<_>>()?;
    for n in 0..cfg.nd {
        symbols.push(ComplexMatrix::from_fn(streams, cfg.nsc, |s, k| data_syms[s][n * cfg.nsc + k]));
    }
    Ok(SubframeGrid { config: cfg.clone(), symbols, data_bits })
}

/// Time-domain samples: one row per antenna, `(nsc + ncp)` samples per OFDM symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    pub nsc: usize,
    pub ncp: usize,
    #[serde(with = "serde_matrix")]
    pub samples: ComplexMatrix,
}

impl TimeSignal {
    pub fn new(nsc: usize, ncp: usize, samples: ComplexMatrix) -> Result<Self> {
        ensure!(
            samples.ncols().is_multiple_of(nsc + ncp),
            InvalidLength,
            "{} samples is not a multiple of the symbol length {}",
            samples.ncols(),
            nsc + ncp
        );
        Ok(TimeSignal { nsc, ncp, samples })
    }

    pub fn antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn symbol_len(&self) -> usize {
        self.nsc + self.ncp
    }

    pub fn n_symbols(&self) -> usize {
        self.len() / self.symbol_len()
    }

    /// Samples of OFDM symbols `range`.
    pub fn symbols(&self, range: std::ops::Range<usize>) -> TimeSignal {
        let l = self.symbol_len();
        TimeSignal {
            nsc: self.nsc,
            ncp: self.ncp,
            samples: self.samples.columns(range.start * l, range.len() * l).into_owned(),
        }
    }
}

/// IFFT every stream of every symbol and prepend the cyclic prefix.
pub fn ofdm_modulate(symbols: &[ComplexMatrix], ncp: usize) -> Result<TimeSignal> {
    let (rows, nsc) = symbols.first().map_or((0, 0), |g| g.shape());
    ensure!(nsc.is_power_of_two(), InvalidConfig, "subcarrier count {nsc} is not a power of two");
    ensure!(ncp < nsc, InvalidConfig, "cyclic prefix {ncp} must be shorter than {nsc} subcarriers");
    ensure!(
        symbols.iter().all(|g| g.shape() == (rows, nsc)),
        InvalidDimension,
        "grids of differing shapes"
    );
    let l = nsc + ncp;
    let mut out = ComplexMatrix::zeros(rows, symbols.len() * l);
    for (n, g) in symbols.iter().enumerate() {
        for r in 0..rows {
            let freq: Vec<C64> = g.row(r).iter().copied().collect();
            let body = numerics::ifft(&freq, nsc)?;
            for t in 0..l {
                out[(r, n * l + t)] = body[(t + nsc - ncp) % nsc];
            }
        }
    }
    TimeSignal::new(nsc, ncp, out)
}

/// Strip the cyclic prefix and FFT every symbol: one `antennas × nsc` grid per symbol.
pub fn ofdm_demodulate(sig: &TimeSignal) -> Result<Vec<ComplexMatrix>> {
    let l = sig.symbol_len();
    ensure!(
        sig.len().is_multiple_of(l),
        InvalidLength,
        "{} samples is not a multiple of the symbol length {l}",
        sig.len()
    );
    let mut out = Vec::with_capacity(sig.n_symbols());
    let mut body = vec![C64::default(); sig.nsc];
    for n in 0..sig.n_symbols() {
        let mut g = ComplexMatrix::zeros(sig.antennas(), sig.nsc);
        for r in 0..sig.antennas() {
            for (t, b) in body.iter_mut().enumerate() {
                *b = sig.samples[(r, n * l + sig.ncp + t)];
            }
            for (k, x) in numerics::fft(&body, sig.nsc)?.into_iter().enumerate() {
                g[(r, k)] = x;
            }
        }
        out.push(g);
    }
    Ok(out)
}

impl SubframeGrid {
    pub fn to_time(&self, ncp: usize) -> Result<TimeSignal> {
        ofdm_modulate(&self.symbols, ncp)
    }
}
