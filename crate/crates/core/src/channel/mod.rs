//! The modified split-step channel: noisy nonlinear steps solved in closed
//! form, a frequency-domain dispersion-loss matrix, units `N -> L -> N`, and
//! the cascade of units.

mod dispersion;
mod params;

pub use dispersion::{transfer_function, DispersionLossMatrix, FULLY_DISPERSIVE_TOL};
pub use params::{FiberParams, LossProfile};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, ComplexVector, RngStream};

/// Discretized zero-dispersion phase
/// `gamma * mu * sum_i |x + sum_{j<=i} noise_j|^2`.
pub fn nonlinear_phase(x: Complex64, noise_column: &[Complex64], gamma: f64, mu: f64) -> f64 {
    let mut s = x;
    let mut acc = 0.0;
    for n in noise_column {
        s += n;
        acc += s.norm_sqr();
    }
    gamma * mu * acc
}

/// One realized unit: noise ensembles, nonlinear phases and the linear
/// representation `y = M x + Z`.
#[derive(Debug, Clone)]
pub struct UnitRealization {
    /// First nonlinear step noise, `n x L`, entry `(k, i)` is sub-step `i` of sample `k`.
    pub n1: CMatrix,
    pub n2: CMatrix,
    /// Phases of the first nonlinear step, `Psi_l`.
    pub psi: Vec<f64>,
    /// Phases of the second nonlinear step, `Phi_k`.
    pub phi: Vec<f64>,
    pub m: CMatrix,
    pub z: ComplexVector,
}

impl UnitRealization {
    /// `M x + Z`.
    pub fn reconstruct(&self, x: &ComplexVector) -> Result<ComplexVector> {
        let mx = self.m.mul_vec(x)?;
        Ok(ComplexVector::from_vec_unchecked(
            mx.iter().zip(self.z.iter()).map(|(a, b)| a + b).collect(),
        ))
    }
}

/// A validated parameter set together with its dispersion-loss matrix.
#[derive(Debug, Clone)]
pub struct Channel {
    params: FiberParams,
    r: DispersionLossMatrix,
}

impl Channel {
    /// Validates `params` and builds a fully dispersive `R`.
    pub fn new(params: FiberParams) -> Result<Self> {
        let r = DispersionLossMatrix::new(&params)?;
        Ok(Channel { params, r })
    }

    /// Uses a caller-supplied `R`, e.g. a degenerate control matrix.
    pub fn with_matrix(params: FiberParams, r: DispersionLossMatrix) -> Result<Self> {
        params.validate()?;
        if r.dim() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                got: r.dim(),
            });
        }
        Ok(Channel { params, r })
    }

    pub fn params(&self) -> &FiberParams {
        &self.params
    }

    pub fn matrix(&self) -> &DispersionLossMatrix {
        &self.r
    }

    fn check_dim(&self, x: &ComplexVector) -> Result<()> {
        if x.dim() != self.params.n {
            return Err(Error::DimensionMismatch {
                expected: self.params.n,
                got: x.dim(),
            });
        }
        Ok(())
    }

    fn noise_var(&self) -> f64 {
        self.params.noise_density / self.params.sub_steps as f64
    }

    /// In-place nonlinear step without recording the ensemble. Consumes the
    /// stream exactly like [`Channel::nonlinear_step`].
    fn nonlinear_inplace(&self, x: &mut [Complex64], stream: &mut RngStream) {
        let var = self.noise_var();
        let g = self.params.gamma * self.params.mu();
        for xk in x.iter_mut() {
            let mut s = *xk;
            let mut acc = 0.0;
            for _ in 0..self.params.sub_steps {
                s += stream.complex_gaussian(var);
                acc += s.norm_sqr();
            }
            *xk = s * Complex64::from_polar(1.0, g * acc);
        }
    }

    /// Nonlinear step with distributed noise. Returns the output, the noise
    /// ensemble (`n x L`) and the phases `Theta_k`.
    pub fn nonlinear_step(
        &self,
        x: &ComplexVector,
        stream: &mut RngStream,
    ) -> Result<(ComplexVector, CMatrix, Vec<f64>)> {
        self.check_dim(x)?;
        let (n, l) = (self.params.n, self.params.sub_steps);
        let var = self.noise_var();
        let mut ens = CMatrix::zeros(n, l);
        for k in 0..n {
            for i in 0..l {
                ens[(k, i)] = stream.complex_gaussian(var);
            }
        }
        let mut theta = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for k in 0..n {
            let t = nonlinear_phase(x[k], ens.row(k), self.params.gamma, self.params.mu());
            let total: Complex64 = x[k] + ens.row(k).iter().sum::<Complex64>();
            theta.push(t);
            y.push(total * Complex64::from_polar(1.0, t));
        }
        Ok((ComplexVector::from_vec_unchecked(y), ens, theta))
    }

    /// One unit `x -> u -> v = R u -> y` with its realization.
    pub fn unit_step(
        &self,
        x: &ComplexVector,
        stream: &mut RngStream,
    ) -> Result<(ComplexVector, UnitRealization)> {
        self.check_dim(x)?;
        let (u, n1, psi) = self.nonlinear_step(x, stream)?;
        let v = self.r.apply(&u)?;
        let (y, n2, phi) = self.nonlinear_step(&v, stream)?;

        let d2: Vec<Complex64> = phi.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let r = self.r.matrix();
        let m = CMatrix::from_fn(x.dim(), x.dim(), |k, l| {
            r[(k, l)] * Complex64::from_polar(1.0, phi[k] + psi[l])
        });
        let s1: Vec<Complex64> = (0..x.dim()).map(|k| n1.row(k).iter().sum()).collect();
        let mut z = vec![Complex64::new(0.0, 0.0); x.dim()];
        m.mul_slice_into(&s1, &mut z);
        for k in 0..x.dim() {
            z[k] += d2[k] * n2.row(k).iter().sum::<Complex64>();
        }
        let real = UnitRealization {
            n1,
            n2,
            psi,
            phi,
            m,
            z: ComplexVector::from_vec_unchecked(z),
        };
        Ok((y, real))
    }

    /// First nonlinear step followed by the linear step, `V = R u`.
    pub fn half_unit(&self, x: &ComplexVector, stream: &mut RngStream) -> Result<ComplexVector> {
        self.check_dim(x)?;
        let mut u = x.as_slice().to_vec();
        self.nonlinear_inplace(&mut u, stream);
        let mut v = vec![Complex64::new(0.0, 0.0); u.len()];
        self.r.apply_into(&u, &mut v);
        Ok(ComplexVector::from_vec_unchecked(v))
    }

    /// Full cascade: `m_units` times `x <- R * unit(x)`, fresh noise per unit.
    pub fn propagate(&self, x: &ComplexVector, stream: &mut RngStream) -> Result<ComplexVector> {
        self.check_dim(x)?;
        let mut a = x.as_slice().to_vec();
        let mut b = vec![Complex64::new(0.0, 0.0); a.len()];
        for _ in 0..self.params.m_units {
            self.nonlinear_inplace(&mut a, stream);
            self.r.apply_into(&a, &mut b);
            self.nonlinear_inplace(&mut b, stream);
            self.r.apply_into(&b, &mut a);
        }
        Ok(ComplexVector::from_vec_unchecked(a))
    }

    /// Per-entry variance `D (1 + e^{-alpha eps})` of a unit's additive noise.
    pub fn noise_covariance_unit(&self) -> Result<f64> {
        noise_covariance_unit(&self.params)
    }
}

fn constant_loss_factor(params: &FiberParams, what: &str) -> Result<f64> {
    match params.loss {
        LossProfile::Constant { alpha0 } => Ok((-0.5 * alpha0 * params.epsilon).exp()),
        LossProfile::NonConstant { .. } => Err(Error::UnsupportedModel(format!(
            "{what} has a closed form only for constant loss"
        ))),
    }
}

/// Per-entry variance of the asymptotic unit noise `Z`.
pub fn noise_covariance_unit(params: &FiberParams) -> Result<f64> {
    let c = constant_loss_factor(params, "unit noise covariance")?;
    Ok(params.noise_density * (1.0 + c * c))
}

/// Amplitude gain `e^{-alpha eps m_units}` of the noiseless cascade
/// (`2 m_units` applications of `R`).
pub fn deterministic_gain(params: &FiberParams) -> Result<f64> {
    let c = constant_loss_factor(params, "deterministic gain")?;
    Ok(c.powi(2 * params.m_units as i32))
}

/// Per-entry variance of the cascade output for `x = 0`: each noise
/// injection is attenuated by every `R` that follows it.
pub fn output_noise_variance(params: &FiberParams) -> Result<f64> {
    let c2 = constant_loss_factor(params, "output noise variance")?.powi(2);
    let d = params.noise_density;
    let mut v = 0.0;
    for _ in 0..params.m_units {
        v = c2 * (c2 * (v + d) + d);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sample_complex_gaussian;

    fn params() -> FiberParams {
        FiberParams {
            n: 4,
            gamma: 1.3,
            beta: vec![-2.0, 0.4],
            loss: LossProfile::Constant { alpha0: 0.1 },
            epsilon: 0.5,
            sub_steps: 6,
            m_units: 3,
            noise_density: 0.05,
            time_step: 1.0,
        }
    }

    #[test]
    fn hand_evaluated_phase() {
        let one = Complex64::new(1.0, 0.0);
        let t = nonlinear_phase(one, &[one, -one], 1.0, 0.5);
        assert!((t - 2.5).abs() < 1e-15);
        assert_eq!(nonlinear_phase(Complex64::new(0.0, 0.0), &[Complex64::new(0.0, 0.0); 3], 1.0, 1.0), 0.0);
        // noiseless: gamma * eps * |x|^2
        let x = Complex64::new(0.3, -1.1);
        let t = nonlinear_phase(x, &[Complex64::new(0.0, 0.0); 8], 2.0, 0.125);
        assert!((t - 2.0 * x.norm_sqr()).abs() < 1e-14);
    }

    #[test]
    fn noiseless_step_is_kerr_rotation() {
        let ch = Channel::new(FiberParams { noise_density: 0.0, ..params() }).unwrap();
        let x = sample_complex_gaussian(&mut RngStream::new(1, 1), 4, 1.0).unwrap();
        let (y, _, _) = ch.nonlinear_step(&x, &mut RngStream::new(1, 2)).unwrap();
        for k in 0..4 {
            let want = x[k] * Complex64::from_polar(1.0, 1.3 * 0.5 * x[k].norm_sqr());
            assert!((y[k] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn modulus_law_every_entry() {
        let ch = Channel::new(params()).unwrap();
        let mut s = RngStream::new(2, 0);
        for _ in 0..200 {
            let x = sample_complex_gaussian(&mut s, 4, 3.0).unwrap();
            let (y, ens, _) = ch.nonlinear_step(&x, &mut s).unwrap();
            for k in 0..4 {
                let want = (x[k] + ens.row(k).iter().sum::<Complex64>()).norm();
                assert!((y[k].norm() - want).abs() <= 1e-14 * want.max(1.0));
            }
        }
    }

    #[test]
    fn decomposition_is_exact() {
        let ch = Channel::new(params()).unwrap();
        let mut s = RngStream::new(3, 0);
        for _ in 0..200 {
            let x = sample_complex_gaussian(&mut s, 4, 10.0).unwrap();
            let (y, real) = ch.unit_step(&x, &mut s).unwrap();
            let r = real.reconstruct(&x).unwrap();
            assert!(y.sub(&r).unwrap().norm() / y.norm() < 1e-12);
            for k in 0..4 {
                for l in 0..4 {
                    let want = ch.matrix().matrix()[(k, l)]
                        * Complex64::from_polar(1.0, real.phi[k] + real.psi[l]);
                    assert_eq!(real.m[(k, l)], want);
                }
            }
        }
    }

    #[test]
    fn gamma_zero_noiseless_unit_is_r() {
        let ch = Channel::new(FiberParams { gamma: 0.0, noise_density: 0.0, ..params() }).unwrap();
        let x = sample_complex_gaussian(&mut RngStream::new(4, 0), 4, 1.0).unwrap();
        let (y, real) = ch.unit_step(&x, &mut RngStream::new(4, 1)).unwrap();
        assert!(real.m.sub(ch.matrix().matrix()).max_abs() == 0.0);
        assert!(real.z.norm() == 0.0);
        assert!(y.sub(&ch.matrix().apply(&x).unwrap()).unwrap().norm() < 1e-15);
    }

    #[test]
    fn propagate_matches_unit_chain() {
        let ch = Channel::new(params()).unwrap();
        let x = sample_complex_gaussian(&mut RngStream::new(5, 0), 4, 2.0).unwrap();
        let fast = ch.propagate(&x, &mut RngStream::new(5, 1)).unwrap();
        let mut s = RngStream::new(5, 1);
        let mut cur = x.clone();
        for _ in 0..3 {
            let (y, _) = ch.unit_step(&cur, &mut s).unwrap();
            cur = ch.matrix().apply(&y).unwrap();
        }
        assert!(fast.sub(&cur).unwrap().norm() < 1e-13 * cur.norm());
    }

    #[test]
    fn noiseless_lossless_cascade_preserves_norm() {
        let ch = Channel::new(FiberParams {
            noise_density: 0.0,
            loss: LossProfile::lossless(),
            ..params()
        })
        .unwrap();
        let x = sample_complex_gaussian(&mut RngStream::new(6, 0), 4, 5.0).unwrap();
        let y = ch.propagate(&x, &mut RngStream::new(6, 1)).unwrap();
        assert!((y.norm() - x.norm()).abs() < 1e-9 * x.norm());
    }

    #[test]
    fn constant_loss_scaling_of_deterministic_part() {
        let p = FiberParams { noise_density: 0.0, ..params() };
        let ch = Channel::new(p.clone()).unwrap();
        let x = sample_complex_gaussian(&mut RngStream::new(7, 0), 4, 5.0).unwrap();
        let y = ch.propagate(&x, &mut RngStream::new(7, 1)).unwrap();
        let g = deterministic_gain(&p).unwrap();
        assert!((g - (-0.1f64 * 0.5 * 3.0).exp()).abs() < 1e-15);
        assert!((y.norm() - g * x.norm()).abs() < 1e-12 * x.norm());
    }

    #[test]
    fn global_phase_leaves_noiseless_norm_unchanged() {
        let ch = Channel::new(FiberParams { noise_density: 0.0, ..params() }).unwrap();
        let x = sample_complex_gaussian(&mut RngStream::new(8, 0), 4, 1.0).unwrap();
        let xr = x.scale(Complex64::from_polar(1.0, 0.7));
        let a = ch.propagate(&x, &mut RngStream::new(8, 1)).unwrap();
        let b = ch.propagate(&xr, &mut RngStream::new(8, 1)).unwrap();
        assert!((a.norm() - b.norm()).abs() < 1e-13);
    }

    #[test]
    fn covariance_formula() {
        let p = FiberParams { loss: LossProfile::lossless(), noise_density: 1.0, ..params() };
        assert_eq!(noise_covariance_unit(&p).unwrap(), 2.0);
        let p = FiberParams {
            loss: LossProfile::Constant { alpha0: 2.0f64.ln() },
            epsilon: 1.0,
            noise_density: 1.0,
            ..params()
        };
        assert!((noise_covariance_unit(&p).unwrap() - 1.5).abs() < 1e-15);
        let p = FiberParams {
            loss: LossProfile::NonConstant { alpha0: 0.1, depth: 0.5, period: None },
            ..params()
        };
        assert!(matches!(noise_covariance_unit(&p), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn ledger_matches_lossless_count() {
        let p = FiberParams { loss: LossProfile::lossless(), ..params() };
        assert!((output_noise_variance(&p).unwrap() - 6.0 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let ch = Channel::new(params()).unwrap();
        let x = ComplexVector::zeros(3);
        assert!(ch.unit_step(&x, &mut RngStream::new(0, 0)).is_err());
    }
}
