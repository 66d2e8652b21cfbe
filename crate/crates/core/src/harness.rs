//! Monte-Carlo BER sweep: one fresh channel, subframe and set of trained
//! receivers per trial, shared across all detectors so each one sees the same
//! received signal.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{self, CqiTable, DEFAULT_SUBBAND};
use crate::baselines::{estimate_csi, lmmse_detect_subframe, rc_front_end, slice_grids};
use crate::channel::{apply_channel, ebn0_to_sigma2, generate_channel, NoiseSpec, PaModel, TapProfile};
use crate::error::{ensure, Error, Result};
use crate::numerics::{ComplexMatrix, C64};
use crate::ofdm::{build_subframe, ofdm_demodulate, ofdm_modulate, FrameConfig, PilotDesign};
use crate::qam::Modulation;
use crate::random::{child_seed, subframe_seed};
use crate::reservoir::{train_cascade, EsnCascade, EsnConfig};
use crate::structure::{train_struct_detector, DetectorConfig, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Rcstruct,
    Rcnet,
    Lmmse,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Rcstruct, DetectorKind::Rcnet, DetectorKind::Lmmse];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Rcstruct => "rcstruct",
            DetectorKind::Rcnet => "rcnet",
            DetectorKind::Lmmse => "lmmse",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown detector '{s}'; expected rcstruct, rcnet or lmmse")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptMode {
    #[default]
    None,
    Rank,
    Link,
    Both,
}

impl AdaptMode {
    pub fn name(self) -> &'static str {
        match self {
            AdaptMode::None => "none",
            AdaptMode::Rank => "rank",
            AdaptMode::Link => "link",
            AdaptMode::Both => "both",
        }
    }

    fn rank(self) -> bool {
        matches!(self, AdaptMode::Rank | AdaptMode::Both)
    }

    fn link(self) -> bool {
        matches!(self, AdaptMode::Link | AdaptMode::Both)
    }
}

impl fmt::Display for AdaptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [AdaptMode::None, AdaptMode::Rank, AdaptMode::Link, AdaptMode::Both]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown adaptation mode '{s}'; expected none, rank, link or both")))
    }
}

fn default_subband() -> usize {
    DEFAULT_SUBBAND
}

fn default_true() -> bool {
    true
}

/// Everything a sweep needs; loaded from JSON with unknown keys rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub nt: usize,
    pub nr: usize,
    pub nsc: usize,
    pub ncp: usize,
    pub np: usize,
    pub nd: usize,
    /// Baseline modulation; also fixes the Eb/N0 to noise-variance mapping.
    pub modulation: Modulation,
    pub lc: usize,
    pub decay: f64,
    #[serde(default)]
    pub pilots: PilotDesign,
    pub ebn0_db: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    #[serde(default)]
    pub pa: PaModel,
    #[serde(default)]
    pub adaptation: AdaptMode,
    pub subframes_per_point: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub esn: EsnConfig,
    #[serde(default)]
    pub classifier: DetectorConfig,
    /// CQI table file, relative to the config file; the built-in table when unset.
    #[serde(default)]
    pub cqi_table: Option<PathBuf>,
    #[serde(default = "default_subband")]
    pub subband: usize,
    /// Record wall-clock seconds per row; zero otherwise.
    #[serde(default = "default_true")]
    pub timing: bool,
}

impl SimConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(rel), Some(dir)) = (&cfg.cqi_table, path.parent()) {
            if rel.is_relative() {
                cfg.cqi_table = Some(dir.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nt", self.nt), ("nr", self.nr), ("nsc", self.nsc), ("np", self.np), ("nd", self.nd), ("lc", self.lc)] {
            ensure!(v >= 1, InvalidConfig, "{name} must be positive");
        }
        ensure!(self.subframes_per_point >= 1, InvalidConfig, "subframes_per_point must be positive");
        ensure!(self.nsc.is_power_of_two(), InvalidConfig, "nsc must be a power of two");
        ensure!(self.ncp < self.nsc, InvalidConfig, "ncp must be shorter than nsc");
        ensure!(self.lc <= self.ncp, InvalidConfig, "lc = {} exceeds ncp = {}", self.lc, self.ncp);
        ensure!(self.decay > 0.0, InvalidConfig, "decay must be positive");
        ensure!(!self.detectors.is_empty(), InvalidConfig, "no detectors selected");
        ensure!(self.ebn0_db.iter().all(|e| e.is_finite()), InvalidConfig, "Eb/N0 values must be finite");
        ensure!(self.subband >= 1, InvalidConfig, "subband must be positive");
        ensure!(
            self.adaptation.rank() || self.nr >= self.nt,
            InvalidConfig,
            "{} streams cannot be separated with {} receive antennas",
            self.nt,
            self.nr
        );
        ensure!(
            self.pilots == PilotDesign::Random || (self.np.is_power_of_two() && self.np >= self.nt),
            InvalidConfig,
            "orthogonal pilots need a power-of-two np of at least nt = {}",
            self.nt
        );
        self.pa.validate()?;
        self.esn.validate()?;
        self.classifier.train.validate()?;
        Ok(())
    }

    pub fn cqi(&self) -> Result<CqiTable> {
        match &self.cqi_table {
            Some(p) => CqiTable::load(p).map_err(|e| Error::InvalidConfig(format!("CQI table {}: {e}", p.display()))),
            None => Ok(CqiTable::default()),
        }
    }

    fn delay_max(&self) -> usize {
        self.esn.delay_max.unwrap_or(self.ncp)
    }

    /// Frequency-domain noise variance; zero when `ebn0_db` is `None`.
    pub fn sigma2(&self, ebn0_db: Option<f64>) -> f64 {
        ebn0_db.map_or(0.0, |e| ebn0_to_sigma2(e, self.modulation.bits_per_symbol(), self.nt))
    }
}

/// Result of one detector on one subframe.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorStats {
    pub detector: DetectorKind,
    pub stream_bits: Vec<usize>,
    pub stream_errors: Vec<usize>,
    pub modulations: Vec<Modulation>,
    pub rank: usize,
    pub pilots_used: usize,
    pub seconds: f64,
}

impl DetectorStats {
    pub fn bits(&self) -> usize {
        self.stream_bits.iter().sum()
    }

    pub fn errors(&self) -> usize {
        self.stream_errors.iter().sum()
    }
}

/// Hamming distance over length.
pub fn compute_ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    ensure!(tx.len() == rx.len(), InvalidLength, "{} transmitted bits vs {} detected", tx.len(), rx.len());
    ensure!(!tx.is_empty(), InvalidLength, "no bits");
    Ok(count_errors(tx, rx) as f64 / tx.len() as f64)
}

fn count_errors(tx: &[u8], rx: &[u8]) -> usize {
    tx.iter().zip(rx).filter(|(a, b)| a != b).count()
}

/// `Σ b_j BER_j / Σ b_j`.
pub fn compute_raw_ber(bers: &[f64], bits_per_symbol: &[usize]) -> Result<f64> {
    ensure!(!bers.is_empty(), InvalidLength, "no streams");
    ensure!(bers.len() == bits_per_symbol.len(), InvalidLength, "{} BERs for {} streams", bers.len(), bits_per_symbol.len());
    let num: f64 = bers.iter().zip(bits_per_symbol).map(|(b, &w)| b * w as f64).sum();
    let den: usize = bits_per_symbol.iter().sum();
    ensure!(den > 0, InvalidInput, "zero bits per symbol");
    Ok(num / den as f64)
}

/// Link parameters chosen before transmission.
#[derive(Debug, Clone)]
struct LinkPlan {
    modulations: Vec<Modulation>,
    /// Per-subcarrier `Nt × L` precoders including the power scaling; `None` sends streams directly.
    precoders: Option<Vec<ComplexMatrix>>,
}

/// Prepared sweep: validated config plus the CQI table.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: SimConfig,
    pub cqi: CqiTable,
}

const TAG_CHANNEL: u64 = 1;
const TAG_SOUNDING: u64 = 2;
const TAG_SOUNDING_NOISE: u64 = 3;
const TAG_DATA: u64 = 4;
const TAG_NOISE: u64 = 5;
const TAG_ESN: u64 = 6;
const TAG_CLASSIFIER: u64 = 7;

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let cqi = cfg.cqi()?;
        Ok(Simulation { cfg, cqi })
    }

    fn noise(&self, sigma2: f64) -> NoiseSpec {
        NoiseSpec { sigma2: sigma2 / self.cfg.nsc as f64 }
    }

    fn plan(&self, ch: &crate::channel::ChannelRealization, sigma2: f64, seed: u64) -> Result<LinkPlan> {
        let c = &self.cfg;
        if c.adaptation == AdaptMode::None {
            return Ok(LinkPlan { modulations: vec![c.modulation; c.nt], precoders: None });
        }
        // Sounding: unprecoded pilots from every antenna, measured like any other transmission.
        let frame = FrameConfig::uniform(c.nt, c.nsc, c.np, 0, c.modulation).with_pilots(c.pilots);
        let grid = build_subframe(&frame, child_seed(seed, TAG_SOUNDING))?;
        let rx = apply_channel(&grid.to_time(c.ncp)?, ch, self.noise(sigma2), &c.pa, child_seed(seed, TAG_SOUNDING_NOISE))?;
        let y = ofdm_demodulate(&rx)?;
        let csi = estimate_csi(&y, grid.pilots(), sigma2)?;
        let pt = c.nt as f64;
        let s2 = sigma2.max(1e-12);

        let (rank, precoders) = if c.adaptation.rank() {
            let d = adaptation::rank_adapt(&csi.h, pt, s2, c.subband)?;
            let gain = C64::from((pt / d.rank as f64).sqrt());
            let q = (0..c.nsc).map(|k| d.precoder_for(k) * gain).collect();
            (d.rank, Some(q))
        } else {
            (c.nt, None)
        };
        let modulations = if c.adaptation.link() {
            let sinrs = if c.adaptation.rank() {
                adaptation::per_stream_sinr(&csi.h, rank, pt, s2)?
            } else {
                adaptation::mmse_stream_sinr(&csi.h, pt, s2)?
            };
            (0..rank)
                .map(|l| Ok(adaptation::select_mcs(&adaptation::stream_column(&sinrs, l), &self.cqi)?.modulation))
                .collect::<Result<_>>()?
        } else {
            vec![c.modulation; rank]
        };
        Ok(LinkPlan { modulations, precoders })
    }

    /// One trial: channel, optional adaptation, transmission, then every
    /// requested detector trained on the pilots and run on the data symbols.
    /// `ebn0_db = None` transmits without noise.
    pub fn run_subframe(&self, ebn0_db: Option<f64>, detectors: &[DetectorKind], seed: u64) -> Result<Vec<DetectorStats>> {
        let c = &self.cfg;
        let sigma2 = c.sigma2(ebn0_db);
        let ch = generate_channel(TapProfile { lc: c.lc, decay: c.decay }, c.nt, c.nr, c.ncp, child_seed(seed, TAG_CHANNEL))?;
        let plan = self.plan(&ch, sigma2, seed)?;
        let frame = FrameConfig { nsc: c.nsc, np: c.np, nd: c.nd, modulations: plan.modulations.clone(), pilots: c.pilots };
        let grid = build_subframe(&frame, child_seed(seed, TAG_DATA))?;
        if log::log_enabled!(log::Level::Debug) {
            let kappa = grid.pilot_condition_number();
            if kappa > 1e6 {
                log::debug!("subframe seed {seed:#x}: pilot matrix condition number {kappa:.3e}");
            }
        }
        let streams_time = grid.to_time(c.ncp)?;
        let tx = match &plan.precoders {
            None => streams_time.clone(),
            Some(q) => {
                let antenna: Vec<ComplexMatrix> = grid
                    .symbols
                    .iter()
                    .map(|s| {
                        let mut x = ComplexMatrix::zeros(c.nt, c.nsc);
                        for (k, qk) in q.iter().enumerate() {
                            x.set_column(k, &(qk * s.column(k)));
                        }
                        x
                    })
                    .collect();
                ofdm_modulate(&antenna, c.ncp)?
            }
        };
        let rx = apply_channel(&tx, &ch, self.noise(sigma2), &c.pa, child_seed(seed, TAG_NOISE))?;
        let rank = plan.modulations.len();
        let pilot_span = c.np * (c.nsc + c.ncp);

        let mut cascade: Option<EsnCascade> = None;
        let mut front: Option<Vec<ComplexMatrix>> = None;
        let mut front_seconds = 0.0;
        let mut out = Vec::with_capacity(detectors.len());
        for &d in detectors {
            let start = Instant::now();
            let mut extra = 0.0;
            let det: Detection = match d {
                DetectorKind::Lmmse => {
                    let y = ofdm_demodulate(&rx)?;
                    let csi = estimate_csi(&y[..c.np], grid.pilots(), sigma2)?;
                    lmmse_detect_subframe(&y[c.np..], &csi, &frame.modulations)?
                }
                DetectorKind::Rcnet | DetectorKind::Rcstruct => {
                    if cascade.is_none() {
                        let t0 = Instant::now();
                        let rx_p = rx.samples.columns(0, pilot_span).into_owned();
                        let tx_p = streams_time.samples.columns(0, pilot_span).into_owned();
                        let cas = train_cascade(&c.esn, &rx_p, &tx_p, c.delay_max(), child_seed(seed, TAG_ESN))?;
                        front = Some(rc_front_end(&cas, &rx)?);
                        cascade = Some(cas);
                        front_seconds = t0.elapsed().as_secs_f64();
                    } else {
                        extra = front_seconds;
                    }
                    let grids = front.as_ref().expect("front end computed with the cascade");
                    if d == DetectorKind::Rcnet {
                        slice_grids(&grids[c.np..], &frame.modulations)?
                    } else {
                        let det = train_struct_detector(
                            &grids[..c.np],
                            grid.pilots(),
                            &frame.modulations,
                            sigma2,
                            &c.classifier,
                            child_seed(seed, TAG_CLASSIFIER),
                        )?;
                        det.detect_subframe(&grids[c.np..])?
                    }
                }
            };
            let seconds = if c.timing { start.elapsed().as_secs_f64() + extra } else { 0.0 };
            let stream_bits: Vec<usize> = grid.data_bits.iter().map(Vec::len).collect();
            let stream_errors = grid
                .data_bits
                .iter()
                .zip(&det.bits)
                .map(|(tx, rx)| {
                    ensure!(tx.len() == rx.len(), InvalidLength, "detector {d} returned {} bits for {}", rx.len(), tx.len());
                    Ok(count_errors(tx, rx))
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(DetectorStats {
                detector: d,
                stream_bits,
                stream_errors,
                modulations: frame.modulations.clone(),
                rank,
                pilots_used: c.np,
                seconds,
            });
        }
        ensure!(
            out.iter().all(|s| s.pilots_used == c.np),
            InvalidState,
            "detectors trained on differing pilot sets"
        );
        Ok(out)
    }
}

/// Aggregate over all subframes of one (Eb/N0, detector) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub ebn0_db: f64,
    pub detector: DetectorKind,
    pub adapt_mode: AdaptMode,
    pub ber: f64,
    pub raw_ber: f64,
    pub bits: usize,
    pub errors: usize,
    /// BER per stream index, pooled over subframes.
    pub stream_ber: Vec<f64>,
    pub rank_hist: BTreeMap<usize, usize>,
    pub mod_hist: BTreeMap<u32, usize>,
    pub subframes: usize,
    pub seconds: f64,
}

impl SweepRow {
    /// Binomial standard error of the BER estimate.
    pub fn std_err(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits.max(1) as f64).sqrt()
    }

    fn rank_mode(&self) -> String {
        mode(&self.rank_hist).map_or_else(|| "-".into(), |r| r.to_string())
    }

    fn mod_mode(&self) -> String {
        mode(&self.mod_hist)
            .and_then(|m| Modulation::try_from(m).ok())
            .map_or_else(|| "-".into(), |m| m.to_string())
    }
}

/// Most frequent key; ties go to the smaller key.
fn mode<K: Copy + Ord>(h: &BTreeMap<K, usize>) -> Option<K> {
    let mut best: Option<(K, usize)> = None;
    for (&k, &n) in h {
        if best.is_none_or(|b| n > b.1) {
            best = Some((k, n));
        }
    }
    best.map(|b| b.0)
}

fn aggregate(ebn0_db: f64, adapt: AdaptMode, stats: &[&DetectorStats]) -> Result<SweepRow> {
    let first = stats[0];
    let mut bers = Vec::new();
    let mut bps = Vec::new();
    let mut per_stream: Vec<(usize, usize)> = Vec::new();
    let mut rank_hist = BTreeMap::new();
    let mut mod_hist = BTreeMap::new();
    for s in stats {
        *rank_hist.entry(s.rank).or_insert(0) += 1;
        for (j, (&b, &e)) in s.stream_bits.iter().zip(&s.stream_errors).enumerate() {
            bers.push(e as f64 / b.max(1) as f64);
            bps.push(s.modulations[j].bits_per_symbol());
            *mod_hist.entry(s.modulations[j].order()).or_insert(0) += 1;
            if per_stream.len() <= j {
                per_stream.resize(j + 1, (0, 0));
            }
            per_stream[j].0 += b;
            per_stream[j].1 += e;
        }
    }
    let bits: usize = stats.iter().map(|s| s.bits()).sum();
    let errors: usize = stats.iter().map(|s| s.errors()).sum();
    Ok(SweepRow {
        ebn0_db,
        detector: first.detector,
        adapt_mode: adapt,
        ber: errors as f64 / bits.max(1) as f64,
        raw_ber: compute_raw_ber(&bers, &bps)?,
        bits,
        errors,
        stream_ber: per_stream.iter().map(|&(b, e)| e as f64 / b.max(1) as f64).collect(),
        rank_hist,
        mod_hist,
        subframes: stats.len(),
        seconds: stats.iter().map(|s| s.seconds).sum(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: &str = "ebn0_db,detector,adapt_mode,ber,raw_ber,bits,errors,rank_mode,mod_mode,subframes,seconds";

impl SweepResult {
    pub fn row(&self, ebn0_db: f64, detector: DetectorKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.ebn0_db == ebn0_db && r.detector == detector)
    }

    pub fn to_csv(&self, cfg: &SimConfig) -> String {
        let mut s = csv_preamble(cfg);
        for r in &self.rows {
            s.push_str(&csv_line(r));
        }
        s
    }
}

/// Comment line documenting the Eb/N0 convention, then the column header.
pub fn csv_preamble(cfg: &SimConfig) -> String {
    format!(
        "# Eb/N0 convention: per-subcarrier noise variance = Nt / (log2(M) * 10^(EbN0/10)) with Nt = {} and M = {} \
         (configured modulation); total transmit power Nt split evenly over the active streams\n{CSV_HEADER}\n",
        cfg.nt,
        cfg.modulation.order()
    )
}

pub fn csv_line(r: &SweepRow) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.ebn0_db,
        r.detector,
        r.adapt_mode,
        r.ber,
        r.raw_ber,
        r.bits,
        r.errors,
        r.rank_mode(),
        r.mod_mode(),
        r.subframes,
        r.seconds
    );
    s
}

/// Runs every (Eb/N0, subframe) trial and aggregates per detector. Rows are
/// reported to `on_row` as soon as their Eb/N0 point completes.
pub fn run_ber_sweep_with<F: FnMut(&SweepRow) -> Result<()>>(cfg: &SimConfig, mut on_row: F) -> Result<SweepResult> {
    let sim = Simulation::new(cfg.clone())?;
    let mut result = SweepResult::default();
    for (p, &ebn0) in cfg.ebn0_db.iter().enumerate() {
        let trials: Vec<Vec<DetectorStats>> = (0..cfg.subframes_per_point)
            .into_par_iter()
            .map(|i| sim.run_subframe(Some(ebn0), &cfg.detectors, subframe_seed(cfg.seed, p as u32, i as u32)))
            .collect::<Result<_>>()?;
        for (j, _) in cfg.detectors.iter().enumerate() {
            let stats: Vec<&DetectorStats> = trials.iter().map(|t| &t[j]).collect();
            let row = aggregate(ebn0, cfg.adaptation, &stats)?;
            log::info!("Eb/N0 {ebn0} dB {}: BER {:.3e} ({} / {})", row.detector, row.ber, row.errors, row.bits);
            on_row(&row)?;
            result.rows.push(row);
        }
    }
    Ok(result)
}

pub fn run_ber_sweep(cfg: &SimConfig) -> Result<SweepResult> {
    run_ber_sweep_with(cfg, |_| Ok(()))
}
