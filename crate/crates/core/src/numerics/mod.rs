//! Deterministic numerical substrate: complex vectors and matrices, the
//! spherical decomposition, special functions, reproducible random streams and
//! the handful of distribution functions the tests and experiments need.

mod bessel;
mod linalg;
mod rng;
pub mod stats;

pub use bessel::{log_bessel_i, log_bessel_i_real};
pub use linalg::CMatrix;
pub use rng::RngStream;

use std::f64::consts::PI;
use std::ops::{Deref, Index};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// An `n`-dimensional complex signal sample on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("x", "dimension must be at least 1"));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("x", "entries must be finite"));
        }
        Ok(ComplexVector(entries))
    }

    /// Builds without the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_vec_unchecked(entries: Vec<Complex64>) -> Self {
        debug_assert!(!entries.is_empty());
        ComplexVector(entries)
    }

    pub fn zeros(n: usize) -> Self {
        ComplexVector(vec![Complex64::new(0.0, 0.0); n.max(1)])
    }

    pub fn from_polar(moduli: &[f64], phases: &[f64]) -> Result<Self> {
        if moduli.len() != phases.len() {
            return Err(Error::DimensionMismatch {
                expected: moduli.len(),
                got: phases.len(),
            });
        }
        Self::new(
            moduli
                .iter()
                .zip(phases)
                .map(|(&r, &p)| Complex64::from_polar(r, p))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: Complex64) -> ComplexVector {
        ComplexVector(self.0.iter().map(|z| z * s).collect())
    }

    pub fn sub(&self, other: &ComplexVector) -> Result<ComplexVector> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(ComplexVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Real coordinates `(re_1, im_1, re_2, im_2, ...)`.
    pub fn to_real(&self) -> Vec<f64> {
        self.0.iter().flat_map(|z| [z.re, z.im]).collect()
    }
}

impl Deref for ComplexVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl Index<usize> for ComplexVector {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

/// Norm and direction of a vector. The zero vector has zero direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalDecomp {
    pub norm: f64,
    pub direction: ComplexVector,
}

impl SphericalDecomp {
    pub fn reconstruct(&self) -> ComplexVector {
        self.direction.scale(Complex64::new(self.norm, 0.0))
    }
}

pub fn spherical_decompose(x: &ComplexVector) -> Result<SphericalDecomp> {
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("x", "entries must be finite"));
    }
    let norm = x.norm();
    let direction = if norm == 0.0 {
        ComplexVector::zeros(x.dim())
    } else {
        x.scale(Complex64::new(1.0 / norm, 0.0))
    };
    Ok(SphericalDecomp { norm, direction })
}

/// Surface area `2 pi^n / Gamma(n)` of the unit sphere `S^{2n-1}` in `C^n`.
pub fn sphere_surface_area(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "complex dimension must be positive"));
    }
    let factorial: f64 = (1..n).map(|k| k as f64).product();
    Ok(2.0 * PI.powi(n as i32) / factorial)
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_log_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    half * PI.ln() - statrs::function::gamma::ln_gamma(half + 1.0)
}

/// Digamma function for positive arguments.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid("x", format!("digamma needs x > 0, got {x}")));
    }
    Ok(digamma_pos(x))
}

pub(crate) fn digamma_pos(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 8.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail B_{2k} / (2k)
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 * inv - tail
}

/// Pairwise summation; the result depends only on the slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&sq) / (values.len() - 1) as f64
}

/// Reduces a phase to `[0, 2 pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Reduces a phase to `(-pi, pi]`.
pub fn wrap_centered(theta: f64) -> f64 {
    let r = wrap_phase(theta);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                (p0, p1) = (p1, ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf);
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Draws `n` i.i.d. circularly-symmetric complex Gaussian entries with
/// `E|z|^2 = variance_per_entry`.
pub fn sample_complex_gaussian(
    stream: &mut RngStream,
    n: usize,
    variance_per_entry: f64,
) -> Result<ComplexVector> {
    if !(variance_per_entry >= 0.0) || !variance_per_entry.is_finite() {
        return Err(Error::invalid(
            "variance_per_entry",
            format!("must be finite and non-negative, got {variance_per_entry}"),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("n", "dimension must be at least 1"));
    }
    Ok(ComplexVector(
        (0..n)
            .map(|_| stream.complex_gaussian(variance_per_entry))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean_decomposition() {
        let x = ComplexVector::new(vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)]).unwrap();
        let s = spherical_decompose(&x).unwrap();
        assert_eq!(s.norm, 5.0);
        assert!((s.direction[0] - Complex64::new(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(s.direction[1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_vector_has_zero_direction() {
        let s = spherical_decompose(&ComplexVector::zeros(2)).unwrap();
        assert_eq!(s.norm, 0.0);
        assert!(s.direction.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        assert!(ComplexVector::new(vec![Complex64::new(f64::NAN, 0.0)]).is_err());
        assert!(ComplexVector::new(vec![]).is_err());
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_surface_area(1).unwrap() - 2.0 * PI).abs() < 1e-14);
        // 2 pi^2 and 2 pi^3 / 2!
        assert!((sphere_surface_area(2).unwrap() - 19.739_208_802_178_716).abs() < 1e-12);
        assert!((sphere_surface_area(3).unwrap() - 31.006_276_680_299_82).abs() < 1e-12);
        assert!(sphere_surface_area(0).is_err());
    }

    /// Independent oracle: psi(x) = -gamma + sum_{k>=0} (1/(k+1) - 1/(k+x)),
    /// truncated at 2e5 terms.
    fn digamma_series(x: f64) -> f64 {
        const EULER: f64 = 0.577_215_664_901_532_9;
        let terms = 200_000usize;
        let mut s = 0.0;
        for k in 0..terms {
            let k = k as f64;
            s += 1.0 / (k + 1.0) - 1.0 / (k + x);
        }
        // Euler-Maclaurin tail: integral plus half the first omitted term.
        let big_k = terms as f64;
        let tail = ((big_k + x) / (big_k + 1.0)).ln()
            + 0.5 * (x - 1.0) / ((big_k + 1.0) * (big_k + x));
        -EULER + s + tail
    }

    #[test]
    fn digamma_reference_values() {
        assert!((digamma(1.0).unwrap() + 0.577_215_664_9).abs() < 1e-10);
        assert!((digamma(2.0).unwrap() - 0.422_784_335_1).abs() < 1e-10);
        assert!((digamma(0.5).unwrap() + 1.963_510_026_0).abs() < 1e-10);
        for &x in &[0.1, 0.7, 1.3, 3.5, 12.0, 100.0] {
            let d = digamma(x).unwrap() - digamma_series(x);
            assert!(d.abs() < 1e-9, "x = {x}: {d}");
        }
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.0).is_err());
    }

    #[test]
    fn digamma_recurrence() {
        for &x in &[0.25, 1.0, 2.5, 7.9, 8.0, 40.0] {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_gives_zero_vector() {
        let mut s = RngStream::new(1, 2);
        let v = sample_complex_gaussian(&mut s, 5, 0.0).unwrap();
        assert!(v.iter().all(|z| z.norm() == 0.0));
        assert!(sample_complex_gaussian(&mut s, 5, -1.0).is_err());
    }

    #[test]
    fn gaussian_second_moment() {
        let mut s = RngStream::new(11, 0);
        let v = sample_complex_gaussian(&mut s, 1_000_000, 2.0).unwrap();
        let m = mean(&v.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
        assert!((m - 2.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn identical_streams_agree() {
        let a = sample_complex_gaussian(&mut RngStream::new(5, 9), 16, 1.0).unwrap();
        let b = sample_complex_gaussian(&mut RngStream::new(5, 9), 16, 1.0).unwrap();
        let c = sample_complex_gaussian(&mut RngStream::new(5, 10), 16, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // exact through degree 15
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((q - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(5);
        assert!(x[2].abs() < 1e-15 && (w[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn phase_wrapping() {
        assert!((wrap_phase(-0.5) - (2.0 * PI - 0.5)).abs() < 1e-15);
        assert!((wrap_centered(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
