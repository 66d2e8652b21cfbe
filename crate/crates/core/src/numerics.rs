//! Complex linear algebra and transform kernel.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. The decompositions
//! (SVD, Cholesky, Schur) are delegated to `nalgebra`; everything layered on top
//! of them (pseudo-inverse truncation, LMMSE fitting, the radix-2 FFT) lives here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative cutoff below which singular values are treated as zero.
pub const PINV_RTOL: f64 = 1e-12;

pub fn is_finite(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

pub fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    ensure!(
        m.iter().all(|&z| is_finite(z)),
        InvalidInput,
        "matrix contains non-finite entries"
    );
    Ok(())
}

/// Frobenius norm.
pub fn fro(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

fn check_fft_len(len: usize, size: usize) -> Result<()> {
    ensure!(
        len == size,
        InvalidDimension,
        "fft size {size} does not match input length {len}"
    );
    ensure!(
        size.is_power_of_two(),
        InvalidDimension,
        "fft size {size} is not a power of two"
    );
    Ok(())
}

/// In-place iterative radix-2 transform. `inverse` flips the twiddle sign but
/// does not apply the 1/n scale.
fn radix2(buf: &mut [C64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<C64> = (0..n / 2)
        .map(|k| C64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Unnormalized forward DFT.
pub fn fft(v: &[C64], size: usize) -> Result<Vec<C64>> {
    check_fft_len(v.len(), size)?;
    let mut out = v.to_vec();
    radix2(&mut out, false);
    Ok(out)
}

/// Inverse DFT including the 1/size normalization.
pub fn ifft(v: &[C64], size: usize) -> Result<Vec<C64>> {
    check_fft_len(v.len(), size)?;
    let mut out = v.to_vec();
    radix2(&mut out, true);
    let scale = 1.0 / size as f64;
    out.iter_mut().for_each(|z| *z *= scale);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Decompositions
// ---------------------------------------------------------------------------

/// Thin SVD `m = u * diag(sigma) * v^H` with `sigma` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    ensure!(!m.is_empty(), InvalidInput, "svd of an empty matrix");
    ensure_finite(m)?;
    // faer keeps the singular vectors orthonormal for rank-deficient complex
    // input, where nalgebra's bidiagonal SVD returns wrong vectors.
    let a = faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let dec = a.thin_svd().map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    let raw: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();

    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    let sigma = order.iter().map(|&i| raw[i]).collect();
    let u = ComplexMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = ComplexMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
    Ok(Svd { u, sigma, v })
}

/// Moore-Penrose pseudo-inverse via SVD; singular values at or below
/// `PINV_RTOL * sigma_max` are dropped.
pub fn pseudo_inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let Svd { u, sigma, v } = svd(m)?;
    let cutoff = PINV_RTOL * sigma.first().copied().unwrap_or(0.0);
    let mut out = ComplexMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let vk = v.column(k);
        let uk = u.column(k);
        out += (vk * uk.adjoint()).scale(1.0 / s);
    }
    Ok(out)
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(m: &ComplexMatrix) -> Result<f64> {
    ensure!(m.is_square() && !m.is_empty(), InvalidDimension, "spectral radius of a {}x{} matrix", m.nrows(), m.ncols());
    ensure_finite(m)?;
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)].norm()).fold(0.0, f64::max))
}

/// Regularized least-squares fit of `observed ≈ H · reference`:
/// `H = observed · reference^H · (reference · reference^H + noise_var · I)^{-1}`.
///
/// At `noise_var == 0` the fit is `observed · pinv(reference)`, which equals the
/// formula whenever the reference has full row rank and stays defined otherwise.
pub fn lmmse_estimate(
    observed: &ComplexMatrix,
    reference: &ComplexMatrix,
    noise_var: f64,
) -> Result<ComplexMatrix> {
    ensure!(
        observed.ncols() == reference.ncols(),
        InvalidDimension,
        "observed has {} columns, reference has {}",
        observed.ncols(),
        reference.ncols()
    );
    ensure!(
        noise_var >= 0.0 && noise_var.is_finite(),
        InvalidInput,
        "noise variance {noise_var} must be finite and non-negative"
    );
    ensure_finite(observed)?;
    ensure_finite(reference)?;
    if noise_var == 0.0 {
        return Ok(observed * pseudo_inverse(reference)?);
    }
    let n = reference.nrows();
    let gram = reference * reference.adjoint() + ComplexMatrix::identity(n, n).scale(noise_var);
    let cross = observed * reference.adjoint();
    match gram.clone().cholesky() {
        // H = cross · gram^{-1}  <=>  gram^H · H^H = cross^H, with gram Hermitian.
        Some(ch) => Ok(ch.solve(&cross.adjoint()).adjoint()),
        None => Ok(cross * pseudo_inverse(&gram)?),
    }
}

/// Serde adapter writing a matrix as nested rows of `[re, im]` pairs.
pub mod serde_matrix {
    use super::{ComplexMatrix, C64};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<C64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix, D::Error> {
        let rows = Vec::<Vec<C64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        if rows.iter().flatten().any(|z| !super::is_finite(*z)) {
            return Err(D::Error::custom("non-finite matrix entry"));
        }
        Ok(ComplexMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
    }
}

/// Same as [`serde_matrix`] for a list of matrices.
pub mod serde_matrix_vec {
    use super::ComplexMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::serde_matrix")] ComplexMatrix);

    pub fn serialize<S: Serializer>(v: &[ComplexMatrix], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Wrap> = v.iter().cloned().map(Wrap).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ComplexMatrix>, D::Error> {
        Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{complex_normal, rng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut r = rng(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut r, 1.0))
    }

    fn dft_oracle(v: &[C64]) -> Vec<C64> {
        let n = v.len();
        (0..n)
            .map(|k| {
                v.iter()
                    .enumerate()
                    .map(|(t, &x)| {
                        x * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn fft_of_delta_is_flat() {
        let out = fft(&[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)], 4).unwrap();
        assert!(out.iter().all(|z| (z - c(1., 0.)).norm() < 1e-15));
    }

    #[test]
    fn fft_of_constant_is_dc() {
        let out = fft(&[c(1., 0.); 4], 4).unwrap();
        assert!((out[0] - c(4., 0.)).norm() < 1e-15);
        assert!(out[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn fft_rejects_bad_sizes() {
        assert!(matches!(fft(&[c(0., 0.); 4], 8), Err(Error::InvalidDimension(_))));
        assert!(matches!(fft(&[c(0., 0.); 6], 6), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn fft_round_trip_and_parseval_up_to_4096() {
        let mut r = rng(11);
        for bits in 0..=12 {
            let n = 1usize << bits;
            let v: Vec<C64> = (0..n).map(|_| complex_normal(&mut r, 1.0)).collect();
            let f = fft(&v, n).unwrap();
            let back = ifft(&f, n).unwrap();
            assert!(max_abs_diff(&v, &back) < 1e-9, "round trip n={n}");
            let tv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let tf: f64 = f.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
            assert!((tv - tf).abs() <= 1e-9 * tv, "parseval n={n}");
        }
    }

    #[test]
    fn fft_matches_direct_dft() {
        let mut r = rng(5);
        let v: Vec<C64> = (0..64).map(|_| complex_normal(&mut r, 1.0)).collect();
        assert!(max_abs_diff(&fft(&v, 64).unwrap(), &dft_oracle(&v)) < 1e-9);
    }

    #[test]
    fn svd_simple_cases() {
        let s = svd(&ComplexMatrix::identity(4, 4)).unwrap();
        assert!(s.sigma.iter().all(|&x| (x - 1.0).abs() < 1e-14));
        let d = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(1., 0.), c(3., 0.)]));
        let s = svd(&d).unwrap();
        assert!((s.sigma[0] - 3.0).abs() < 1e-14 && (s.sigma[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_and_is_unitary() {
        for (seed, (r, cc)) in [(4, 4), (3, 7), (9, 2)].into_iter().enumerate() {
            let m = random_matrix(r, cc, seed as u64);
            let s = svd(&m).unwrap();
            let sig = ComplexMatrix::from_diagonal(&DVector::from_iterator(
                s.sigma.len(),
                s.sigma.iter().map(|&x| c(x, 0.)),
            ));
            let rec = &s.u * sig * s.v.adjoint();
            assert!(fro(&(rec - &m)) / fro(&m) <= 1e-9);
            let k = s.sigma.len();
            assert!(fro(&(s.u.adjoint() * &s.u - ComplexMatrix::identity(k, k))) <= 1e-9);
            assert!(fro(&(s.v.adjoint() * &s.v - ComplexMatrix::identity(k, k))) <= 1e-9);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_reconstructs_rank_deficient() {
        let mut r = rng(31);
        for (rows, cols, k) in [(2, 2, 1), (2, 3, 1), (3, 3, 2), (5, 8, 2), (8, 4, 1)] {
            let a = ComplexMatrix::from_fn(rows, k, |_, _| complex_normal(&mut r, 1.0))
                * ComplexMatrix::from_fn(k, cols, |_, _| complex_normal(&mut r, 1.0));
            let s = svd(&a).unwrap();
            let d = ComplexMatrix::from_diagonal(&s.sigma.iter().map(|&x| C64::from(x)).collect::<Vec<_>>().into());
            assert!(fro(&(&s.u * d * s.v.adjoint() - &a)) < 1e-10);
            let n = s.sigma.len();
            assert!(fro(&(s.u.adjoint() * &s.u - ComplexMatrix::identity(n, n))) < 1e-10);
            assert!(fro(&(s.v.adjoint() * &s.v - ComplexMatrix::identity(n, n))) < 1e-10);
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = ComplexMatrix::identity(2, 2);
        m[(0, 1)] = c(f64::NAN, 0.);
        assert!(matches!(svd(&m), Err(Error::InvalidInput(_))));
        assert!(matches!(pseudo_inverse(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pinv_simple_cases() {
        let i = ComplexMatrix::identity(3, 3);
        assert!(fro(&(pseudo_inverse(&i).unwrap() - &i)) < 1e-14);
        let d = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(1., 0.), c(0., 0.)]));
        assert!(fro(&(pseudo_inverse(&d).unwrap() - &d)) < 1e-14);
    }

    #[test]
    fn pinv_moore_penrose_conditions() {
        let z = random_matrix(4, 20, 42);
        let p = pseudo_inverse(&z).unwrap();
        let nz = fro(&z);
        let np = fro(&p);
        assert!(fro(&(&z * &p * &z - &z)) / nz <= 1e-8);
        assert!(fro(&(&p * &z * &p - &p)) / np <= 1e-8);
        let zp = &z * &p;
        let pz = &p * &z;
        assert!(fro(&(zp.adjoint() - &zp)) / fro(&zp) <= 1e-8);
        assert!(fro(&(pz.adjoint() - &pz)) / fro(&pz) <= 1e-8);
        let twice = pseudo_inverse(&p).unwrap();
        assert!(fro(&(twice - &z)) / nz <= 1e-7);
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let d = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.), c(0., -0.9), c(0.1, 0.1)]));
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn lmmse_exact_at_zero_noise() {
        let h = random_matrix(2, 2, 1);
        // Orthogonal pilot rows: columns of a scaled 4-point DFT.
        let reference = ComplexMatrix::from_fn(2, 4, |r, t| {
            C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (r * t) as f64 / 4.0)
        });
        let observed = &h * &reference;
        let est = lmmse_estimate(&observed, &reference, 0.0).unwrap();
        assert!(fro(&(est - h)) < 1e-9);
    }

    #[test]
    fn lmmse_shrinks_under_huge_noise() {
        let reference = random_matrix(2, 8, 2);
        let observed = random_matrix(2, 8, 3);
        let est = lmmse_estimate(&observed, &reference, 1e12).unwrap();
        assert!(est.iter().all(|z| z.norm() < 1e-6));
    }

    #[test]
    fn lmmse_matches_closed_form() {
        let h = random_matrix(2, 2, 7);
        let reference = random_matrix(2, 8, 8);
        let noise = random_matrix(2, 8, 9).scale(0.1f64.sqrt());
        let observed = &h * &reference + noise;
        let est = lmmse_estimate(&observed, &reference, 0.1).unwrap();

        // Explicit 2x2 inverse of the regularized Gram matrix.
        let g = &reference * reference.adjoint();
        let (a, b, cc, d) = (g[(0, 0)] + 0.1, g[(0, 1)], g[(1, 0)], g[(1, 1)] + 0.1);
        let det = a * d - b * cc;
        let inv = ComplexMatrix::from_row_slice(2, 2, &[d / det, -b / det, -cc / det, a / det]);
        let oracle = &observed * reference.adjoint() * inv;
        assert!(fro(&(est - oracle)) < 1e-10);
    }

    #[test]
    fn lmmse_rank_deficient_reference_falls_back() {
        let reference = ComplexMatrix::from_fn(2, 4, |_, t| c(t as f64 + 1.0, 0.));
        let observed = ComplexMatrix::from_fn(1, 4, |_, t| c(2.0 * (t as f64 + 1.0), 0.));
        let est = lmmse_estimate(&observed, &reference, 0.0).unwrap();
        assert!(est.iter().all(|z| is_finite(*z)));
        assert!(fro(&(est * &reference - &observed)) < 1e-9);
    }
}
