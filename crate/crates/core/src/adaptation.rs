//! Capacity-driven rank selection with SVD precoding, and EESM-based choice of
//! the modulation order from a CQI table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::{self, serde_matrix_vec, ComplexMatrix};
use crate::qam::Modulation;

/// Subcarriers per precoding subband (seven resource block groups of 12).
pub const DEFAULT_SUBBAND: usize = 84;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub rank: usize,
    /// `C_1 … C_Nt`.
    pub capacities: Vec<f64>,
    /// Wideband singular values, descending.
    pub singular_values: Vec<f64>,
    pub subband: usize,
    /// One `Nt × rank` precoder per subband.
    #[serde(with = "serde_matrix_vec")]
    pub precoders: Vec<ComplexMatrix>,
}

impl RankDecision {
    pub fn precoder_for(&self, k: usize) -> &ComplexMatrix {
        &self.precoders[(k / self.subband.max(1)).min(self.precoders.len() - 1)]
    }
}

fn mean_gram(h: &[ComplexMatrix]) -> ComplexMatrix {
    let nt = h[0].ncols();
    let mut g = ComplexMatrix::zeros(nt, nt);
    for m in h {
        g += m.adjoint() * m;
    }
    g / numerics::C64::from(h.len() as f64)
}

/// Eigen-decomposition of a Hermitian PSD matrix via its SVD: descending
/// eigenvalues and the matching eigenvectors as columns.
fn hermitian_eig(g: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let svd = numerics::svd(g)?;
    Ok((svd.sigma.clone(), svd.v))
}

/// Singular values of the channel seen through the subcarrier-averaged Gram
/// matrix `mean_k Ĥ(k)^H Ĥ(k)`.
pub fn wideband_singular_values(h: &[ComplexMatrix]) -> Result<Vec<f64>> {
    ensure!(!h.is_empty(), InvalidInput, "no subcarriers");
    let (eig, _) = hermitian_eig(&mean_gram(h))?;
    Ok(eig.iter().map(|e| e.max(0.0).sqrt()).collect())
}

/// `C_L = Σ_{l<L} log2(1 + Pt/(L σ²) λ_l²)`.
pub fn capacity(singular_values: &[f64], rank: usize, pt: f64, noise_var: f64) -> f64 {
    let g = pt / (rank as f64 * noise_var);
    singular_values.iter().take(rank).map(|l| (1.0 + g * l * l).log2()).sum()
}

/// Picks the rank with the largest wideband capacity (ties to the smaller
/// rank) and the per-subband precoders `V^L`.
pub fn rank_adapt(h: &[ComplexMatrix], pt: f64, noise_var: f64, subband: usize) -> Result<RankDecision> {
    ensure!(!h.is_empty(), InvalidInput, "no subcarriers");
    ensure!(pt > 0.0 && noise_var > 0.0, InvalidInput, "transmit power and noise variance must be positive");
    let nt = h[0].ncols();
    ensure!(h.iter().all(|m| m.ncols() == nt), InvalidDimension, "channel matrices of differing widths");
    let sv = wideband_singular_values(h)?;
    let capacities: Vec<f64> = (1..=nt).map(|l| capacity(&sv, l, pt, noise_var)).collect();
    let mut rank = 1;
    for (i, &c) in capacities.iter().enumerate() {
        if c > capacities[rank - 1] {
            rank = i + 1;
        }
    }
    let subband = subband.max(1);
    let precoders = h
        .chunks(subband)
        .map(|band| {
            let (_, v) = hermitian_eig(&mean_gram(band))?;
            Ok(v.columns(0, rank).into_owned())
        })
        .collect::<Result<_>>()?;
    Ok(RankDecision { rank, capacities, singular_values: sv, subband, precoders })
}

/// `X = Q S` for a column (or block of columns) of stream symbols.
pub fn precode(s: &ComplexMatrix, q: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure!(s.nrows() == q.ncols(), InvalidDimension, "{} streams for a {}-column precoder", s.nrows(), q.ncols());
    Ok(q * s)
}

/// `−β ln(mean_n exp(−SINR_n/β))`.
pub fn eesm(sinrs: &[f64], beta: f64) -> Result<f64> {
    ensure!(!sinrs.is_empty(), InvalidInput, "no SINR values");
    ensure!(beta > 0.0, InvalidInput, "beta must be positive");
    // Shift by the minimum so the exponentials stay within range.
    let min = sinrs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = sinrs.iter().map(|s| (-(s - min) / beta).exp()).sum::<f64>() / sinrs.len() as f64;
    Ok(min - beta * mean.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqiRow {
    /// Lower SINR bound in dB; `null` means no bound.
    pub min_sinr_db: Option<f64>,
    pub modulation: Modulation,
    pub beta: f64,
}

impl CqiRow {
    fn threshold_db(&self) -> f64 {
        self.min_sinr_db.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqiTable {
    pub rows: Vec<CqiRow>,
}

impl Default for CqiTable {
    fn default() -> Self {
        CqiTable {
            rows: vec![
                CqiRow { min_sinr_db: None, modulation: Modulation::Qpsk, beta: 1.49 },
                CqiRow { min_sinr_db: Some(10.0), modulation: Modulation::Qam16, beta: 5.01 },
                CqiRow { min_sinr_db: Some(18.0), modulation: Modulation::Qam64, beta: 10.0 },
            ],
        }
    }
}

impl CqiTable {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.rows.is_empty(), InvalidConfig, "CQI table has no rows");
        ensure!(
            self.rows.windows(2).all(|w| w[0].threshold_db() <= w[1].threshold_db()),
            InvalidConfig,
            "CQI rows must be sorted by SINR threshold"
        );
        ensure!(self.rows.iter().all(|r| r.beta > 0.0), InvalidConfig, "CQI beta values must be positive");
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: CqiTable = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsDecision {
    /// Linear effective SINR.
    pub effective_sinr: f64,
    /// Row index in the CQI table.
    pub cqi: usize,
    pub modulation: Modulation,
    pub beta: f64,
}

fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Highest row whose threshold is at or below `effective_sinr` (linear); the
/// first row when none qualifies.
pub fn link_adapt(effective_sinr: f64, table: &CqiTable) -> Result<McsDecision> {
    table.validate()?;
    let db = to_db(effective_sinr);
    let cqi = table.rows.iter().rposition(|r| r.threshold_db() <= db).unwrap_or(0);
    let row = table.rows[cqi];
    Ok(McsDecision { effective_sinr, cqi, modulation: row.modulation, beta: row.beta })
}

/// Compresses `sinrs` with each row's β and keeps the highest row whose own
/// effective SINR clears its threshold.
pub fn select_mcs(sinrs: &[f64], table: &CqiTable) -> Result<McsDecision> {
    table.validate()?;
    for (cqi, row) in table.rows.iter().enumerate().rev() {
        let eff = eesm(sinrs, row.beta)?;
        if row.threshold_db() <= to_db(eff) || cqi == 0 {
            return Ok(McsDecision { effective_sinr: eff, cqi, modulation: row.modulation, beta: row.beta });
        }
    }
    Err(Error::InvalidConfig("CQI table has no rows".into()))
}

/// Per-subcarrier stream SINRs `Pt/(L σ²) λ_l(k)²` under ideal SVD precoding;
/// `out[k][l]`.
pub fn per_stream_sinr(h: &[ComplexMatrix], rank: usize, pt: f64, noise_var: f64) -> Result<Vec<Vec<f64>>> {
    let g = pt / (rank as f64 * noise_var);
    h.iter()
        .map(|m| Ok(numerics::svd(m)?.sigma.iter().take(rank).map(|l| g * l * l).collect()))
        .collect()
}

/// Post-LMMSE SINR of each unprecoded stream with power `Pt/Nt` per antenna:
/// `1/[(I + Pt/(Nt σ²) H^H H)^{-1}]_ll − 1`; `out[k][l]`.
pub fn mmse_stream_sinr(h: &[ComplexMatrix], pt: f64, noise_var: f64) -> Result<Vec<Vec<f64>>> {
    h.iter()
        .map(|m| {
            let nt = m.ncols();
            let a = ComplexMatrix::identity(nt, nt) + (m.adjoint() * m).scale(pt / (nt as f64 * noise_var));
            let inv = a.try_inverse().ok_or_else(|| Error::Numerical("MMSE SINR matrix is singular".into()))?;
            Ok((0..nt).map(|l| (1.0 / inv[(l, l)].re - 1.0).max(0.0)).collect())
        })
        .collect()
}

/// Column `l` of a `[k][l]` SINR table.
pub fn stream_column(sinrs: &[Vec<f64>], l: usize) -> Vec<f64> {
    sinrs.iter().map(|row| row[l]).collect()
}
