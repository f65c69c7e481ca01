use num_complex::Complex64;
use rustfft::FftPlanner;

use super::params::FiberParams;
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, ComplexVector};

/// Relative threshold below which an entry of `R` counts as zero.
pub const FULLY_DISPERSIVE_TOL: f64 = 1e-14;

/// The `n x n` matrix of one linear step.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionLossMatrix {
    r: CMatrix,
    /// `e^{-alpha eps / 2}` when the loss is frequency-flat.
    scalar_loss: Option<f64>,
}

/// Transfer function `H(f)` of one linear segment.
pub fn transfer_function(params: &FiberParams) -> Vec<Complex64> {
    let eps = params.epsilon;
    params
        .frequency_grid()
        .iter()
        .map(|&f| {
            let w = std::f64::consts::TAU * f;
            let mut phase = 0.0;
            let mut wp = w;
            let mut fact = 1.0;
            for (i, &b) in params.beta.iter().enumerate() {
                let p = i + 2;
                wp *= w;
                fact *= p as f64;
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                phase += sign * b * wp / fact;
            }
            let alpha = params.loss.alpha_at(f, params.time_step);
            Complex64::new(-0.5 * alpha * eps, phase * eps).exp()
        })
        .collect()
}

impl DispersionLossMatrix {
    /// Builds `R = F^{-1} diag(H) F` and verifies that every entry is nonzero.
    pub fn new(params: &FiberParams) -> Result<Self> {
        let m = Self::new_unchecked(params)?;
        m.check_fully_dispersive().map_err(|e| match e {
            Error::NotFullyDispersive {
                ratio, row, col, ..
            } => Error::NotFullyDispersive {
                ratio,
                row,
                col,
                context: format!(
                    "epsilon = {}, beta = {:?}; perturb beta or epsilon",
                    params.epsilon, params.beta
                ),
            },
            other => other,
        })?;
        Ok(m)
    }

    /// Builds `R` without the full-dispersion check (degenerate controls such
    /// as `beta = 0`, where `R` is diagonal).
    pub fn new_unchecked(params: &FiberParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        let h = transfer_function(params);
        // R is circulant: r_kl = c[(k - l) mod n] with c = IDFT(H).
        let mut c = h;
        FftPlanner::new().plan_fft_inverse(n).process(&mut c);
        let inv_n = 1.0 / n as f64;
        let r = CMatrix::from_fn(n, n, |k, l| c[(k + n - l) % n] * inv_n);
        let scalar_loss = params
            .loss
            .is_constant()
            .then(|| (-0.5 * params.loss.alpha0() * params.epsilon).exp());
        Ok(DispersionLossMatrix { r, scalar_loss })
    }

    /// Wraps an arbitrary square matrix, checking full dispersion.
    pub fn from_matrix(r: CMatrix) -> Result<Self> {
        let m = Self::from_matrix_unchecked(r)?;
        m.check_fully_dispersive()?;
        Ok(m)
    }

    pub fn from_matrix_unchecked(r: CMatrix) -> Result<Self> {
        if r.rows() != r.cols() {
            return Err(Error::DimensionMismatch {
                expected: r.rows(),
                got: r.cols(),
            });
        }
        if r.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("R", "entries must be finite"));
        }
        Ok(DispersionLossMatrix {
            r,
            scalar_loss: None,
        })
    }

    pub fn check_fully_dispersive(&self) -> Result<()> {
        let max = self.r.max_abs();
        let n = self.r.rows();
        let (mut row, mut col, mut min) = (0, 0, f64::INFINITY);
        for i in 0..n {
            for j in 0..n {
                let a = self.r[(i, j)].norm();
                if a < min {
                    (row, col, min) = (i, j, a);
                }
            }
        }
        if max == 0.0 || min <= FULLY_DISPERSIVE_TOL * max {
            return Err(Error::NotFullyDispersive {
                ratio: if max == 0.0 { 0.0 } else { min / max },
                row,
                col,
                context: "a fully dispersive R needs every |r_kl| > 0".into(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.r.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.r
    }

    /// `e^{-alpha eps / 2}` for a constant-loss build, `None` otherwise.
    pub fn scalar_loss(&self) -> Option<f64> {
        self.scalar_loss
    }

    pub fn apply(&self, x: &ComplexVector) -> Result<ComplexVector> {
        self.r.mul_vec(x)
    }

    pub(crate) fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.r.mul_slice_into(x, out);
    }
}
