//! The high-power limit of the channel: a random-matrix fading channel
//! `y = M x + Z` with `M = prod_k R D_k` and uniform phase diagonals.

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{Channel, DispersionLossMatrix};
use crate::error::{Error, Result};
use crate::infotheory::{entropy_knn, SampleSet};
use crate::numerics::{wrap_centered, CMatrix, ComplexVector, RngStream};
use crate::trials::{run_trials, try_run_trials};

#[derive(Debug, Clone)]
pub struct FadingModel {
    r: DispersionLossMatrix,
    stages: usize,
}

impl FadingModel {
    pub fn new(r: DispersionLossMatrix, stages: usize) -> Result<Self> {
        r.check_fully_dispersive()?;
        Self::new_unchecked(r, stages)
    }

    /// Skips the full-dispersion check, for degenerate controls such as `R = I`.
    pub fn new_unchecked(r: DispersionLossMatrix, stages: usize) -> Result<Self> {
        if stages == 0 {
            return Err(Error::invalid("stages", "must be >= 1"));
        }
        Ok(FadingModel { r, stages })
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn matrix(&self) -> &DispersionLossMatrix {
        &self.r
    }

    /// `prod_{k=1}^{m} R diag(e^{j theta_k})`, multiplied left to right.
    pub fn assemble(&self, thetas: &[Vec<f64>]) -> Result<CMatrix> {
        if thetas.len() != self.stages || thetas.iter().any(|t| t.len() != self.dim()) {
            return Err(Error::invalid("thetas", "expected stages x n phases"));
        }
        let mut m = CMatrix::identity(self.dim());
        for t in thetas {
            let d: Vec<Complex64> = t.iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
            m = m.mul(&self.r.matrix().scale_cols(&d))?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct MatrixSample {
    pub m: CMatrix,
    /// `stages x n` phases in `[0, 2 pi)`.
    pub thetas: Vec<Vec<f64>>,
}

fn draw_thetas(model: &FadingModel, stream: &mut RngStream) -> Vec<Vec<f64>> {
    (0..model.stages)
        .map(|_| (0..model.dim()).map(|_| stream.phase()).collect())
        .collect()
}

pub fn sample_fading_matrix(model: &FadingModel, stream: &mut RngStream) -> Result<MatrixSample> {
    let thetas = draw_thetas(model, stream);
    let m = model.assemble(&thetas)?;
    Ok(MatrixSample { m, thetas })
}

/// `y = M x + Z` with `Z = sum_k (prod_{l<=k} R D_l) Z_k` and `Z_k` i.i.d.
/// isotropic with per-entry variance `noise_variance`.
pub fn fading_channel(
    x: &ComplexVector,
    model: &FadingModel,
    noise_variance: f64,
    stream: &mut RngStream,
) -> Result<ComplexVector> {
    Ok(fading_channel_detailed(x, model, noise_variance, stream)?.0)
}

/// As [`fading_channel`], also returning the matrix sample.
pub fn fading_channel_detailed(
    x: &ComplexVector,
    model: &FadingModel,
    noise_variance: f64,
    stream: &mut RngStream,
) -> Result<(ComplexVector, MatrixSample)> {
    let n = model.dim();
    if x.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.dim() });
    }
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::invalid("noise_variance", "must be finite and >= 0"));
    }
    let thetas = draw_thetas(model, stream);
    let mut prefix = CMatrix::identity(n);
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    let mut tmp = vec![Complex64::new(0.0, 0.0); n];
    for t in &thetas {
        let d: Vec<Complex64> = t.iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
        prefix = prefix.mul(&model.r.matrix().scale_cols(&d))?;
        let zk: Vec<Complex64> = (0..n).map(|_| stream.complex_gaussian(noise_variance)).collect();
        prefix.mul_slice_into(&zk, &mut tmp);
        for (a, b) in z.iter_mut().zip(&tmp) {
            *a += b;
        }
    }
    let mx = prefix.mul_vec(x)?;
    let y = mx.iter().zip(&z).map(|(a, b)| a + b).collect();
    Ok((
        ComplexVector::from_vec_unchecked(y),
        MatrixSample { m: prefix, thetas },
    ))
}

/// Worst-case values of the algebraic dependencies for `n = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DependencyReport {
    pub stages: usize,
    pub draws: usize,
    /// `max | |M_ij| - |r_ij| |` (one stage only, else NaN).
    pub amplitude_max: f64,
    /// `max | (angle M_11 - angle M_21) - (angle r_11 - angle r_21) |` mod `2 pi`
    /// (one stage only, else NaN).
    pub phase_max: f64,
    /// `min` and `max` over draws of `| |r_21 M_12| - |r_12 M_21| |`.
    pub cross_min: f64,
    pub cross_max: f64,
    /// Fraction of draws with `| |r_21 M_12| - |r_12 M_21| | > GENERIC_VIOLATION`.
    pub generic_fraction: f64,
}

/// Size above which a cross-term deviation counts as a genuine violation
/// rather than rounding.
pub const GENERIC_VIOLATION: f64 = 1e-6;

pub fn dependency_report(
    stages: usize,
    r: &DispersionLossMatrix,
    draws: usize,
    stream: &mut RngStream,
) -> Result<DependencyReport> {
    if r.dim() != 2 {
        return Err(Error::invalid("R", format!("dependency analysis needs n = 2, got {}", r.dim())));
    }
    if !(1..=3).contains(&stages) {
        return Err(Error::invalid("stages", format!("supported: 1, 2, 3; got {stages}")));
    }
    if draws == 0 {
        return Err(Error::invalid("draws", "must be >= 1"));
    }
    let model = FadingModel::new_unchecked(r.clone(), stages)?;
    let rm = r.matrix();
    let mut rep = DependencyReport {
        stages,
        draws,
        amplitude_max: if stages == 1 { 0.0 } else { f64::NAN },
        phase_max: if stages == 1 { 0.0 } else { f64::NAN },
        cross_min: f64::INFINITY,
        cross_max: 0.0,
        generic_fraction: 0.0,
    };
    let mut above = 0usize;
    let r_phase = rm[(0, 0)].arg() - rm[(1, 0)].arg();
    for _ in 0..draws {
        let m = sample_fading_matrix(&model, stream)?.m;
        let cross = ((rm[(1, 0)] * m[(0, 1)]).norm() - (rm[(0, 1)] * m[(1, 0)]).norm()).abs();
        rep.cross_min = rep.cross_min.min(cross);
        rep.cross_max = rep.cross_max.max(cross);
        if cross > GENERIC_VIOLATION {
            above += 1;
        }
        if stages == 1 {
            for i in 0..2 {
                for j in 0..2 {
                    rep.amplitude_max = rep.amplitude_max.max((m[(i, j)].norm() - rm[(i, j)].norm()).abs());
                }
            }
            let dphi = m[(0, 0)].arg() - m[(1, 0)].arg() - r_phase;
            rep.phase_max = rep.phase_max.max(wrap_centered(dphi).abs());
        }
    }
    rep.generic_fraction = above as f64 / draws as f64;
    Ok(rep)
}

/// Empirical `Pr(|V_k| < c)` after the first nonlinear step and the linear
/// step of a unit, for inputs with `|x_k| = kappa (1 + |Rayleigh|)` and
/// uniform phases.
pub fn escape_probability(
    kappa: f64,
    c: f64,
    channel: &Channel,
    trials: usize,
    stream: &RngStream,
) -> Result<f64> {
    if !(kappa > 0.0) || !(c > 0.0) {
        return Err(Error::invalid("kappa", "kappa and c must be positive"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be >= 1"));
    }
    let n = channel.params().n;
    let hits = try_run_trials(stream, trials, |_, s| {
        let x: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(kappa * (1.0 + s.rayleigh()), s.phase()))
            .collect();
        let v = channel.half_unit(&ComplexVector::from_vec_unchecked(x), s)?;
        Ok(v.iter().filter(|z| z.norm() < c).count() as u64)
    })?;
    Ok(hits.iter().sum::<u64>() as f64 / (trials * n) as f64)
}

/// k-NN entropy of `M * direction` over independent matrix draws.
pub fn matrix_entropy_floor(
    model: &FadingModel,
    direction: &ComplexVector,
    trials: usize,
    k: usize,
    stream: &RngStream,
) -> Result<f64> {
    if trials < 10_000 {
        return Err(Error::invalid("trials", format!("needs >= 1e4, got {trials}")));
    }
    if k < 3 {
        return Err(Error::invalid("k", "needs k >= 3"));
    }
    if direction.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: direction.dim() });
    }
    if (direction.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("direction", "must have unit norm"));
    }
    let rows = run_trials(stream, trials, |_, s| {
        let m = sample_fading_matrix(model, s).expect("shape checked").m;
        m.mul_vec(direction).expect("shape checked").to_real()
    });
    let pts = SampleSet::new(2 * model.dim(), rows.concat())?;
    entropy_knn(&pts, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{FiberParams, LossProfile};
    use crate::numerics::sample_complex_gaussian;

    fn dft_r(n: usize) -> DispersionLossMatrix {
        DispersionLossMatrix::new(&FiberParams {
            n,
            gamma: 1.0,
            beta: vec![-1.7, 0.3],
            loss: LossProfile::lossless(),
            epsilon: 1.0,
            sub_steps: 4,
            m_units: 1,
            noise_density: 0.0,
            time_step: 1.0,
        })
        .unwrap()
    }

    fn generic_r(stream: &mut RngStream) -> DispersionLossMatrix {
        let v: Vec<Vec<Complex64>> = (0..2).map(|_| (0..2).map(|_| stream.complex_gaussian(1.0)).collect()).collect();
        let m = CMatrix::from_rows(v).unwrap();
        DispersionLossMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn identity_one_stage_is_diagonal() {
        let model = FadingModel::new_unchecked(DispersionLossMatrix::from_matrix_unchecked(CMatrix::identity(3)).unwrap(), 1)
            .unwrap();
        let s = sample_fading_matrix(&model, &mut RngStream::new(1, 0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let a = s.m[(i, j)].norm();
                assert!(if i == j { (a - 1.0).abs() < 1e-15 } else { a == 0.0 });
            }
        }
    }

    #[test]
    fn lossless_samples_are_unitary_and_bounded() {
        let r = dft_r(4);
        let model = FadingModel::new(r.clone(), 3).unwrap();
        let abs_r = r.matrix().abs();
        let pow = abs_r.mul(&abs_r).unwrap().mul(&abs_r).unwrap();
        let mut st = RngStream::new(2, 0);
        for _ in 0..1000 {
            let s = sample_fading_matrix(&model, &mut st).unwrap();
            assert!(s.m.unitarity_defect() < 1e-10);
            assert!(s.m.sub(&model.assemble(&s.thetas).unwrap()).max_abs() == 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    assert!(s.m[(i, j)].norm() <= pow[(i, j)].re * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn noiseless_constant_loss_norm() {
        let p = FiberParams {
            n: 3,
            gamma: 1.0,
            beta: vec![-1.0],
            loss: LossProfile::Constant { alpha0: 0.3 },
            epsilon: 1.0,
            sub_steps: 4,
            m_units: 1,
            noise_density: 0.0,
            time_step: 1.0,
        };
        let r = DispersionLossMatrix::new(&p).unwrap();
        let c = r.scalar_loss().unwrap();
        let model = FadingModel::new(r, 4).unwrap();
        let x = sample_complex_gaussian(&mut RngStream::new(3, 0), 3, 1.0).unwrap();
        let y = fading_channel(&x, &model, 0.0, &mut RngStream::new(3, 1)).unwrap();
        assert!((y.norm() - x.norm() * c.powi(4)).abs() < 1e-12);
    }

    fn lossy_r() -> DispersionLossMatrix {
        DispersionLossMatrix::new(&FiberParams {
            n: 2,
            gamma: 1.0,
            beta: vec![-1.7],
            loss: LossProfile::NonConstant { alpha0: 0.5, depth: 0.6, period: None },
            epsilon: 1.0,
            sub_steps: 4,
            m_units: 1,
            noise_density: 0.0,
            time_step: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn unitary_two_by_two_keeps_the_cross_identity() {
        // |M_12| = |M_21| for every 2x2 unitary, so the three-stage identity
        // survives whenever R is unitary
        let mut st = RngStream::new(5, 0);
        let three = dependency_report(3, &dft_r(2), 1000, &mut st).unwrap();
        assert!(three.cross_max < 1e-12);
    }

    #[test]
    fn lemma_dependencies() {
        let mut st = RngStream::new(4, 0);
        for r in [lossy_r(), generic_r(&mut st)] {
            let one = dependency_report(1, &r, 1000, &mut st).unwrap();
            assert!(one.amplitude_max < 1e-14 && one.phase_max < 1e-12, "{one:?}");
            let two = dependency_report(2, &r, 1000, &mut st).unwrap();
            assert!(two.cross_max < 1e-12, "{two:?}");
            let three = dependency_report(3, &r, 1000, &mut st).unwrap();
            assert!(three.cross_max > 1e-6 && three.generic_fraction >= 0.99, "{three:?}");
        }
        let three = dependency_report(3, &generic_r(&mut st), 1000, &mut st).unwrap();
        assert!(three.cross_min > 1e-6, "{three:?}");
        assert!(dependency_report(4, &dft_r(2), 10, &mut st).is_err());
        assert!(dependency_report(2, &dft_r(3), 10, &mut st).is_err());
    }
}
