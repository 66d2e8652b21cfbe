//! Reference receivers: pilot-based LMMSE channel estimation with LMMSE
//! detection, and the reservoir front end followed by nearest-neighbour slicing.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::{self, serde_matrix_vec, ComplexMatrix};
use crate::ofdm::{ofdm_demodulate, TimeSignal};
use crate::qam::{Modulation, QamConstellation};
use crate::reservoir::EsnCascade;
use crate::structure::Detection;

/// Estimated frequency response, one `Nr × Nt` matrix per subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiEstimate {
    #[serde(with = "serde_matrix_vec")]
    pub h: Vec<ComplexMatrix>,
    pub noise_var: f64,
}

/// Per subcarrier, `Ĥ(k) = Y_p(k) X_p(k)^H (X_p(k) X_p(k)^H + σ² I)^{-1}` over the
/// pilot symbols. `y_pilots[n]` is `Nr × Nsc`, `x_pilots[n]` is `Nt × Nsc`.
pub fn estimate_csi(y_pilots: &[ComplexMatrix], x_pilots: &[ComplexMatrix], noise_var: f64) -> Result<CsiEstimate> {
    ensure!(!x_pilots.is_empty(), InvalidInput, "no pilot symbols");
    ensure!(y_pilots.len() == x_pilots.len(), InvalidDimension, "pilot count mismatch");
    ensure!(noise_var >= 0.0, InvalidInput, "negative noise variance");
    let (nt, nsc) = x_pilots[0].shape();
    let nr = y_pilots[0].nrows();
    ensure!(
        x_pilots.iter().all(|x| x.shape() == (nt, nsc)) && y_pilots.iter().all(|y| y.shape() == (nr, nsc)),
        InvalidDimension,
        "pilot grids of differing shapes"
    );
    let np = x_pilots.len();
    if np < nt {
        log::warn!("{np} pilot symbols for {nt} streams; channel estimate relies on the pseudo-inverse");
    }
    let h = (0..nsc)
        .map(|k| {
            let y = ComplexMatrix::from_fn(nr, np, |r, n| y_pilots[n][(r, k)]);
            let x = ComplexMatrix::from_fn(nt, np, |s, n| x_pilots[n][(s, k)]);
            numerics::lmmse_estimate(&y, &x, noise_var)
        })
        .collect::<Result<_>>()?;
    Ok(CsiEstimate { h, noise_var })
}

/// `Ĥ^H (Ĥ Ĥ^H + σ² I)^{-1}`; the pseudo-inverse at `σ² = 0`.
pub fn lmmse_filter(h: &ComplexMatrix, noise_var: f64) -> Result<ComplexMatrix> {
    if noise_var <= 0.0 {
        return numerics::pseudo_inverse(h);
    }
    let nr = h.nrows();
    let gram = h * h.adjoint() + ComplexMatrix::identity(nr, nr).scale(noise_var);
    let ch = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("LMMSE Gram matrix not positive definite".into()))?;
    // (G^{-1} Ĥ)^H = Ĥ^H G^{-1} since G is Hermitian.
    Ok(ch.solve(h).adjoint())
}

/// Linear estimate of the transmitted streams for the columns of `y`.
pub fn lmmse_detect(y: &ComplexMatrix, h: &ComplexMatrix, noise_var: f64) -> Result<ComplexMatrix> {
    ensure!(y.nrows() == h.nrows(), InvalidDimension, "{} receive rows for a {}-row channel", y.nrows(), h.nrows());
    Ok(lmmse_filter(h, noise_var)? * y)
}

/// Nearest-neighbour slicing of equalized `streams × nsc` grids.
pub fn slice_grids(xhat: &[ComplexMatrix], modulations: &[Modulation]) -> Result<Detection> {
    let streams = modulations.len();
    ensure!(xhat.iter().all(|g| g.nrows() == streams), InvalidDimension, "grids must have {streams} rows");
    let consts: Vec<QamConstellation> = modulations.iter().map(|&m| QamConstellation::new(m)).collect();
    let mut bits: Vec<Vec<u8>> = vec![Vec::new(); streams];
    let symbols = xhat
        .iter()
        .map(|g| {
            let mut out = g.clone();
            for (s, c) in consts.iter().enumerate() {
                for k in 0..g.ncols() {
                    let (re, im) = c.nearest_grid(g[(s, k)]);
                    out[(s, k)] = numerics::C64::new(re as f64, im as f64) * c.modulation().scale();
                    c.grid_bits(re, im, &mut bits[s]);
                }
            }
            out
        })
        .collect();
    Ok(Detection { symbols, bits })
}

/// LMMSE detection of every data grid with the estimated CSI.
pub fn lmmse_detect_subframe(y_data: &[ComplexMatrix], csi: &CsiEstimate, modulations: &[Modulation]) -> Result<Detection> {
    let nsc = csi.h.len();
    let filters: Vec<ComplexMatrix> = csi.h.iter().map(|h| lmmse_filter(h, csi.noise_var)).collect::<Result<_>>()?;
    let xhat = y_data
        .iter()
        .map(|y| {
            ensure!(y.ncols() == nsc, InvalidDimension, "grid has {} subcarriers, CSI {nsc}", y.ncols());
            let mut out = ComplexMatrix::zeros(filters[0].nrows(), nsc);
            for (k, w) in filters.iter().enumerate() {
                out.set_column(k, &(w * y.column(k)));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    slice_grids(&xhat, modulations)
}

/// Reservoir equalization of a received subframe followed by the FFT: one
/// `streams × nsc` grid per OFDM symbol, pilots included.
pub fn rc_front_end(cascade: &EsnCascade, rx: &TimeSignal) -> Result<Vec<ComplexMatrix>> {
    let eq = cascade.equalize(&rx.samples)?;
    ofdm_demodulate(&TimeSignal::new(rx.nsc, rx.ncp, eq)?)
}

/// Reservoir front end plus nearest-neighbour slicing of the data symbols.
pub fn rcnet_detect(cascade: &EsnCascade, rx: &TimeSignal, np: usize, modulations: &[Modulation]) -> Result<Detection> {
    let grids = rc_front_end(cascade, rx)?;
    ensure!(np <= grids.len(), InvalidLength, "{np} pilots in a {}-symbol subframe", grids.len());
    slice_grids(&grids[np..], modulations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;
    use crate::random::{complex_normal, rng};
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut r = rng(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut r, 1.0))
    }

    /// Pilot grids whose per-subcarrier `Nt × Np` matrix has orthogonal rows.
    fn orthogonal_pilots(nt: usize, nsc: usize) -> Vec<ComplexMatrix> {
        (0..nt)
            .map(|n| {
                ComplexMatrix::from_fn(nt, nsc, |s, _| {
                    C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (s * n) as f64 / nt as f64)
                })
            })
            .collect()
    }

    #[test]
    fn noiseless_orthogonal_pilots_recover_channel() {
        let h: Vec<ComplexMatrix> = (0..8).map(|k| random(3, 2, k)).collect();
        let x = orthogonal_pilots(2, 8);
        let y: Vec<ComplexMatrix> = x
            .iter()
            .map(|xn| ComplexMatrix::from_fn(3, 8, |r, k| (&h[k] * xn.column(k))[r]))
            .collect();
        let est = estimate_csi(&y, &x, 0.0).unwrap();
        for k in 0..8 {
            assert!(numerics::fro(&(&est.h[k] - &h[k])) < 1e-8);
        }
        let shrunk = estimate_csi(&y, &x, 1e6).unwrap();
        assert!(shrunk.h.iter().all(|m| numerics::fro(m) < 1e-4));
    }

    #[test]
    fn csi_matches_closed_form() {
        let x = vec![random(2, 1, 1), random(2, 1, 2)];
        let y = vec![random(2, 1, 3), random(2, 1, 4)];
        let est = estimate_csi(&y, &x, 0.3).unwrap();
        let xm = ComplexMatrix::from_fn(2, 2, |s, n| x[n][(s, 0)]);
        let ym = ComplexMatrix::from_fn(2, 2, |r, n| y[n][(r, 0)]);
        let a = &xm * xm.adjoint() + ComplexMatrix::identity(2, 2).scale(0.3);
        // Explicit 2×2 inverse.
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let inv = ComplexMatrix::from_row_slice(2, 2, &[a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]]) / det;
        let oracle = ym * xm.adjoint() * inv;
        assert!(numerics::fro(&(&est.h[0] - oracle)) < 1e-10);
    }

    #[test]
    fn zero_noise_square_channel_is_zero_forcing() {
        let h = random(3, 3, 5);
        let x = random(3, 10, 6);
        let y = &h * &x;
        let xhat = lmmse_detect(&y, &h, 0.0).unwrap();
        assert!(numerics::fro(&(xhat - x)) < 1e-8);
    }

    #[test]
    fn filter_matches_wiener_form() {
        // Equivalent form (Ĥ^H Ĥ + σ² I)^{-1} Ĥ^H, computed by LU.
        for seed in 0..20 {
            let h = random(4, 2, seed);
            let s2 = 0.05 + seed as f64 * 0.1;
            let a = h.adjoint() * &h + ComplexMatrix::identity(2, 2).scale(s2);
            let oracle = a.lu().solve(&h.adjoint()).unwrap();
            assert!(numerics::fro(&(lmmse_filter(&h, s2).unwrap() - oracle)) < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_zero_noise_uses_pseudo_inverse() {
        let h = ComplexMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(2.0, 0.0), C64::new(4.0, 0.0)]);
        let w = lmmse_filter(&h, 0.0).unwrap();
        assert!(w.iter().all(|z| z.re.is_finite()));
        assert!(numerics::fro(&(&h * &w * &h - &h)) < 1e-10);
    }

    #[test]
    fn flat_perfect_csi_high_snr_qpsk_is_error_free() {
        let m = [Modulation::Qpsk, Modulation::Qpsk];
        let c = QamConstellation::new(Modulation::Qpsk);
        let mut r = rng(9);
        let h = random(2, 2, 10);
        // Eb/N0 = 30 dB with two QPSK streams.
        let sigma2 = crate::channel::ebn0_to_sigma2(30.0, 2, 2);
        let mut errors = 0;
        let mut total = 0;
        for _ in 0..50 {
            let bits: Vec<Vec<u8>> = (0..2).map(|_| (0..1000).map(|_| r.random_range(0..2u8)).collect()).collect();
            let syms: Vec<Vec<C64>> = bits.iter().map(|b| c.modulate(b).unwrap()).collect();
            let x = ComplexMatrix::from_fn(2, 500, |s, k| syms[s][k]);
            let y = (&h * &x).map(|z| z + complex_normal(&mut r, sigma2));
            let det = lmmse_detect_subframe(&[y], &CsiEstimate { h: vec![h.clone(); 500], noise_var: sigma2 }, &m).unwrap();
            for s in 0..2 {
                errors += det.bits[s].iter().zip(&bits[s]).filter(|(a, b)| a != b).count();
                total += bits[s].len();
            }
        }
        assert_eq!(total, 100_000);
        assert_eq!(errors, 0);
    }

    #[test]
    fn slicing_matches_enumeration() {
        let c = QamConstellation::new(Modulation::Qam16);
        let g = random(1, 200, 11);
        let det = slice_grids(std::slice::from_ref(&g), &[Modulation::Qam16]).unwrap();
        for k in 0..200 {
            let best = c
                .points()
                .iter()
                .min_by(|a, b| (*a - g[(0, k)]).norm().total_cmp(&(*b - g[(0, k)]).norm()))
                .unwrap();
            assert!((det.symbols[0][(0, k)] - best).norm() < 1e-12);
        }
    }

    #[test]
    fn rcnet_noiseless_flat_channel_is_error_free() {
        use crate::ofdm::{build_subframe, FrameConfig};
        use crate::reservoir::{train_cascade, EsnConfig};
        let cfg = FrameConfig::uniform(2, 64, 4, 4, Modulation::Qam16);
        let g = build_subframe(&cfg, 1).unwrap();
        let tx = g.to_time(16).unwrap();
        let mix = ComplexMatrix::from_row_slice(2, 2, &[C64::new(0.9, 0.1), C64::new(0.3, 0.0), C64::new(-0.2, 0.4), C64::new(1.1, -0.2)]);
        let rx = TimeSignal::new(64, 16, &mix * &tx.samples).unwrap();
        let pilots = tx.symbols(0..4).samples;
        let rx_pilots = rx.symbols(0..4).samples;
        let esn = EsnConfig { neurons: 16, window: 4, ..Default::default() };
        let cascade = train_cascade(&esn, &rx_pilots, &pilots, 16, 3).unwrap();
        let det = rcnet_detect(&cascade, &rx, 4, &cfg.modulations).unwrap();
        assert_eq!(det.bits, g.data_bits);
        assert_eq!(rc_front_end(&cascade, &rx).unwrap().len(), 8);
    }
}
