//! Dense Gaussian kernels: Cholesky factorization, multivariate normal sampling,
//! and the univariate normal CDF and quantile function.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

const SYMMETRY_TOL: f64 = 1e-10;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Lower Cholesky factor of a square matrix.
///
/// The input is symmetrized as `(a + aᵀ) / 2` before factorization, no pivoting
/// is performed, and a non-positive pivot aborts with its index.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Shape(format!(
            "cholesky needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = sym[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = sym[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// A symmetric positive definite matrix together with its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry (relative tolerance 1e-10), finiteness and positive
    /// definiteness. The stored matrix is the symmetrized input.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix has non-finite entries".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Domain(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let factor = cholesky(&matrix)?;
        Ok(Self { matrix, factor })
    }

    /// `scale · I_dim`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * scale)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Solves `self · x = b` with two triangular solves.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .factor
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.factor
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .factor
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.factor
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `self⁻¹`, assembled as `L⁻ᵀ L⁻¹` from a triangular solve.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let w = self
            .factor
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("cholesky factor has a positive diagonal");
        w.transpose() * w
    }

    /// `xᵀ · self · x`, computed as `‖Lᵀx‖²` so it is never negative.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        (self.factor.transpose() * x).norm_squared()
    }
}

/// Draws `n` samples of `N(mean, cov)`, one per row of the returned matrix.
pub fn mvn_sample(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    let d = mean.len();
    if d != cov.dim() {
        return Err(Error::Shape(format!(
            "mean has dimension {d} but covariance is {0}x{0}",
            cov.dim()
        )));
    }
    let l = cov.factor();
    let mut out = DMatrix::<f64>::zeros(n, d);
    let mut z = DVector::<f64>::zeros(d);
    for row in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let draw = mean + l * &z;
        out.row_mut(row).copy_from(&draw.transpose());
    }
    Ok(out)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, `erfc(-x/√2) / 2`. Accurate to full relative precision
/// deep into the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile function.
///
/// Starts from the Abramowitz–Stegun 26.2.23 rational approximation (absolute
/// error below 4.5e-4) and polishes it with Halley steps against [`normal_cdf`].
/// Upper-tail inputs are mapped through `1 - p`, which is exact for `p >= 0.5`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return Ok(-lower_tail_quantile(1.0 - p));
    }
    Ok(lower_tail_quantile(p))
}

fn lower_tail_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 0.5);
    let t = (-2.0 * p.ln()).sqrt();
    let num = 2.515_517 + t * (0.802_853 + t * 0.010_328);
    let den = 1.0 + t * (1.432_788 + t * (0.189_269 + t * 0.001_308));
    let mut x = -(t - num / den);
    for _ in 0..50 {
        let density = normal_pdf(x);
        if density == 0.0 {
            break;
        }
        let step = (normal_cdf(x) - p) / density;
        let next = x - step / (1.0 + 0.5 * x * step);
        let done = (next - x).abs() <= 1e-15 * x.abs().max(1.0);
        x = next;
        if done {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ(x) by composite Simpson integration of the density from 0.
    fn cdf_by_quadrature(x: f64) -> f64 {
        let n = 4000;
        let h = x / n as f64;
        let mut acc = normal_pdf(0.0) + normal_pdf(x);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * normal_pdf(k as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    /// Lower-tail asymptotic expansion Φ(-x) ≈ φ(x)/x · Σ (-1)^k (2k-1)!! / x^{2k}.
    fn lower_tail_by_series(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            term *= -((2 * k - 1) as f64) / (x * x);
            sum += term;
        }
        normal_pdf(x) / x * sum
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn cholesky_identity() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(cholesky(&i3).unwrap(), i3);
    }

    #[test]
    fn cholesky_hand_factorization() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = cholesky(&a).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
        assert!((&l - &expected).amax() < 1e-15);
        assert!(rel_err(&(&l * l.transpose()), &a) < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&a), Err(Error::NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn spd_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(SpdMatrix::new(a), Err(Error::Domain(_))));
    }

    #[test]
    fn spd_inverse_and_solve() {
        let a = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        let inv = a.inverse();
        let prod = a.matrix() * &inv;
        assert!((prod - DMatrix::identity(2, 2)).amax() < 1e-14);
        let x = a.solve_vec(&DVector::from_vec(vec![1.0, 1.0]));
        assert!((a.matrix() * x - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn mvn_sample_covariance_converges() {
        let cov = SpdMatrix::scaled_identity(2, 1.0).unwrap();
        let mut rng = RngStream::new(42, 0);
        let n = 50_000;
        let x = mvn_sample(&DVector::zeros(2), &cov, n, &mut rng).unwrap();
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(n, 2, |i, j| x[(i, j)] - mean[j]);
        let sample_cov = centered.transpose() * &centered / (n as f64 - 1.0);
        assert!((sample_cov - DMatrix::identity(2, 2)).amax() < 0.05);
        assert!(mean.amax() < 0.02);
    }

    #[test]
    fn mvn_sample_degenerate_spread() {
        let eps = 1e-12;
        let cov = SpdMatrix::scaled_identity(3, eps).unwrap();
        let mean = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let mut rng = RngStream::new(1, 1);
        let x = mvn_sample(&mean, &cov, 100, &mut rng).unwrap();
        for row in x.row_iter() {
            let dev = (row.transpose() - &mean).amax();
            assert!(dev < 10.0 * eps.sqrt());
        }
    }

    #[test]
    fn mvn_sample_is_deterministic() {
        let cov = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let mean = DVector::from_vec(vec![0.3, 0.1]);
        let a = mvn_sample(&mean, &cov, 64, &mut RngStream::new(9, 4)).unwrap();
        let b = mvn_sample(&mean, &cov, 64, &mut RngStream::new(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mvn_sample_shape_mismatch() {
        let cov = SpdMatrix::scaled_identity(2, 1.0).unwrap();
        let err = mvn_sample(&DVector::zeros(3), &cov, 4, &mut RngStream::new(0, 0));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        let x = 1.959963985;
        assert!((normal_cdf(x) - cdf_by_quadrature(x)).abs() < 1e-12);
        assert!((normal_cdf(x) - 0.975).abs() < 1e-10);
        let tail = normal_cdf(-8.0);
        let oracle = lower_tail_by_series(8.0);
        assert!(((tail - oracle) / oracle).abs() < 1e-9);
        assert!((tail - 6.22e-16).abs() < 0.01e-16);
    }

    #[test]
    fn cdf_matches_quadrature_on_grid() {
        for k in -60..=60 {
            let x = k as f64 * 0.1;
            assert!((normal_cdf(x) - cdf_by_quadrature(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        // Bisection on the quadrature CDF.
        let (mut lo, mut hi) = (0.0f64, 4.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf_by_quadrature(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = normal_quantile(0.975).unwrap();
        assert!((z - 0.5 * (lo + hi)).abs() < 1e-11);
        assert!((z - 1.959963985).abs() < 1e-9);
    }

    #[test]
    fn quantile_extreme_tail() {
        let z = normal_quantile(1e-300).unwrap();
        assert!(z.is_finite() && z < -37.0 && z > -38.0);
        assert!((normal_cdf(z) / 1e-300 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quantile_domain_errors() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(normal_quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for k in 1..2000 {
            let p = k as f64 / 2000.0;
            let z = normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() < 1e-10, "p = {p}");
        }
        for k in -600..=600 {
            let x = k as f64 * 0.01;
            assert!((normal_quantile(normal_cdf(x)).unwrap() - x).abs() < 1e-8, "x = {x}");
        }
    }
}
