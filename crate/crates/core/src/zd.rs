//! Zero-dispersion law: the Fourier-series conditional density of the scalar
//! noisy Kerr channel, its coefficient bounds, and a Monte Carlo simulator of
//! the discretized channel.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::stats::ks_one_sample;
use crate::numerics::{gauss_legendre, log_bessel_i, log_bessel_i_real, wrap_phase, RngStream};
use crate::trials::run_trials;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZdParams {
    pub gamma: f64,
    /// Noise density per unit length.
    #[serde(alias = "D")]
    pub noise_density: f64,
    pub z: f64,
}

impl ZdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::param("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.noise_density > 0.0) || !self.noise_density.is_finite() {
            return Err(Error::param(
                "noise_density",
                format!("must be positive, got {}", self.noise_density),
            ));
        }
        if !(self.z > 0.0) || !self.z.is_finite() {
            return Err(Error::param("z", format!("must be positive, got {}", self.z)));
        }
        Ok(())
    }

    /// Total noise variance `D z` accumulated over the span.
    pub fn variance(&self) -> f64 {
        self.noise_density * self.z
    }

    /// `b_0 = a_0 = 1 / (D z)`.
    pub fn b0(&self) -> f64 {
        1.0 / self.variance()
    }

    /// `t_m = sqrt(m gamma D / 2) z`.
    pub fn t(&self, m: u32) -> f64 {
        (m as f64 * self.gamma * self.noise_density / 2.0).sqrt() * self.z
    }
}

/// Series coefficients of harmonic `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZdCoeffs {
    pub a: Complex64,
    pub b: Complex64,
    pub t: f64,
}

const SERIES_RADIUS: f64 = 0.2;

/// `x coth x`, accurate near zero and for large `Re x`.
pub(crate) fn x_coth_x(x: Complex64) -> Complex64 {
    if x.norm() < SERIES_RADIUS {
        let x2 = x * x;
        // 1 + x^2/3 - x^4/45 + 2x^6/945 - x^8/4725 + 2x^10/93555 - 1382x^12/638512875
        let c = [
            -1382.0 / 638_512_875.0,
            2.0 / 93_555.0,
            -1.0 / 4725.0,
            2.0 / 945.0,
            -1.0 / 45.0,
            1.0 / 3.0,
            1.0,
        ];
        c.iter().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * x2 + ci)
    } else {
        let e = (-2.0 * x).exp();
        x * (1.0 + e) / (1.0 - e)
    }
}

/// `ln(x / sinh x)` for `Re x >= 0`.
pub(crate) fn ln_x_over_sinh(x: Complex64) -> Complex64 {
    if x.norm() < SERIES_RADIUS {
        let x2 = x * x;
        // 1 - x^2/6 + 7x^4/360 - 31x^6/15120 + 127x^8/604800 - 73x^10/3421440
        let c = [
            -73.0 / 3_421_440.0,
            127.0 / 604_800.0,
            -31.0 / 15_120.0,
            7.0 / 360.0,
            -1.0 / 6.0,
            1.0,
        ];
        c.iter().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * x2 + ci).ln()
    } else {
        (2.0 * x).ln() - x - (1.0 - (-2.0 * x).exp()).ln()
    }
}

/// `a_m = x_m coth(x_m) / (D z)`, `b_m = x_m / (D z sinh x_m)` with
/// `x_m = t_m (1 + j)`. `m = 0` gives `a_0 = b_0 = 1 / (D z)`.
pub fn zd_coeffs(m: u32, params: &ZdParams) -> Result<ZdCoeffs> {
    params.validate()?;
    let t = params.t(m);
    let x = Complex64::new(t, t);
    let b0 = params.b0();
    Ok(ZdCoeffs {
        a: x_coth_x(x) * b0,
        b: ln_x_over_sinh(x).exp() * b0,
        t,
    })
}

/// `4 t^2 / (cosh 2t - cos 2t) = |b_m / b_0|^2`, written without cancellation.
pub fn b_ratio_sq(t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let (sh, s) = (t.sinh(), t.sin());
    2.0 * t * t / (sh * sh + s * s)
}

/// `F(t) = t (sinh 2t + sin 2t) / (cosh 2t - cos 2t) - 1`.
pub fn f_bound(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", format!("must be positive, got {t}")));
    }
    Ok(f_bound_unchecked(t))
}

pub(crate) fn f_bound_unchecked(t: f64) -> f64 {
    if t < 0.2 {
        let t4 = t.powi(4);
        return t4 * (4.0 / 45.0 - t4 * (16.0 / 4725.0 - t4 * 88_448.0 / 638_512_875.0));
    }
    if t > 20.0 {
        let e2 = (-2.0 * t).exp();
        let e4 = e2 * e2;
        let num = 0.5 * (1.0 - e4) + (2.0 * t).sin() * e2;
        let den = 0.5 * (1.0 + e4) - (2.0 * t).cos() * e2;
        return t * num / den - 1.0;
    }
    let (sh, s) = (t.sinh(), t.sin());
    t * ((2.0 * t).sinh() + (2.0 * t).sin()) / (2.0 * (sh * sh + s * s)) - 1.0
}

/// `E_m = exp(-F(t_m) (r_x^2 + r_y^2) / (D z))`, the bound on `|D_m|`.
pub fn em_bound(m: u32, r_x: f64, r_y: f64, params: &ZdParams) -> f64 {
    if m == 0 {
        return 1.0;
    }
    (-f_bound_unchecked(params.t(m)) * (r_x * r_x + r_y * r_y) * params.b0()).exp()
}

/// `sum_{m >= from} E_m`, summed until the terms are negligible.
pub fn em_tail_sum(from: u32, r_x: f64, r_y: f64, params: &ZdParams) -> f64 {
    let mut s = 0.0;
    let mut m = from.max(1);
    loop {
        let e = em_bound(m, r_x, r_y, params);
        s += e;
        if e < 1e-17 * s.max(1e-300) || m > 1_000_000 {
            return s;
        }
        m += 1;
    }
}

/// `D_m = p_m / p_0` evaluated in log space.
pub fn dm_ratio(m: u32, r_x: f64, r_y: f64, params: &ZdParams) -> Result<Complex64> {
    params.validate()?;
    check_radius(r_x, "r_x")?;
    check_radius(r_y, "r_y")?;
    Ok(dm_ratio_unchecked(m, r_x, r_y, params))
}

fn check_radius(r: f64, name: &'static str) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::invalid(name, format!("must be finite and >= 0, got {r}")));
    }
    Ok(())
}

fn dm_ratio_unchecked(m: u32, r_x: f64, r_y: f64, params: &ZdParams) -> Complex64 {
    if m == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if r_x * r_y == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let b0 = params.b0();
    let t = params.t(m);
    let x = Complex64::new(t, t);
    let ln_ratio = ln_x_over_sinh(x);
    let bm = ln_ratio.exp() * b0;
    let li0 = log_bessel_i_real(0, 2.0 * b0 * r_x * r_y);
    let lim = log_bessel_i(m, 2.0 * bm * r_x * r_y).expect("finite Bessel argument");
    let expo = -(x_coth_x(x) - 1.0) * b0 * (r_x * r_x + r_y * r_y);
    let log_d = ln_ratio + lim - li0 + expo;
    if log_d.re == f64::NEG_INFINITY {
        Complex64::new(0.0, 0.0)
    } else {
        log_d.exp()
    }
}

/// Upper bound on `I_{k+1}(u) / I_k(u)` (Amos), decreasing in `k`.
fn bessel_ratio_bound(k: f64, u: f64) -> f64 {
    u / (k + 0.5 + (u * u + (k + 0.5) * (k + 0.5)).sqrt())
}

/// The harmonic content of the density at one `(r_y, r_x)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonics {
    /// Rician radial density `p_0(r_y | r_x)`.
    pub p0: f64,
    /// `D_1, ..., D_M`.
    pub d: Vec<Complex64>,
    /// Bound on `2 sum_{m > M} |D_m|`.
    pub tail: f64,
}

impl Harmonics {
    /// `1 + 2 sum_m Re(D_m e^{j m delta})`.
    pub fn bracket(&self, delta: f64) -> f64 {
        let step = Complex64::from_polar(1.0, delta);
        let mut rot = step;
        let mut s = 0.0;
        for d in &self.d {
            s += (d * rot).re;
            rot *= step;
        }
        1.0 + 2.0 * s
    }

    /// `int_{a}^{b} [1 + 2 sum Re(D_m e^{j m delta})] d delta`.
    pub fn bracket_integral(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for (i, d) in self.d.iter().enumerate() {
            let m = (i + 1) as f64;
            let diff = Complex64::from_polar(1.0, m * b) - Complex64::from_polar(1.0, m * a);
            s += (d * diff / Complex64::new(0.0, m)).re;
        }
        (b - a) + 2.0 * s
    }
}

/// The zero-dispersion conditional law with adaptive series truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZdLaw {
    pub params: ZdParams,
    pub max_terms: usize,
    pub tolerance: f64,
}

pub const DEFAULT_MAX_TERMS: usize = 500;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

impl ZdLaw {
    pub fn new(params: ZdParams) -> Result<Self> {
        params.validate()?;
        Ok(ZdLaw {
            params,
            max_terms: DEFAULT_MAX_TERMS,
            tolerance: DEFAULT_TOLERANCE,
        })
    }

    /// Rician radial density `2 r_y b_0 exp(-b_0 (r_x^2 + r_y^2)) I_0(2 b_0 r_x r_y)`.
    pub fn p0(&self, r_y: f64, r_x: f64) -> f64 {
        if r_y == 0.0 {
            return 0.0;
        }
        let b0 = self.params.b0();
        let lg = (2.0 * r_y * b0).ln() - b0 * (r_x * r_x + r_y * r_y)
            + log_bessel_i_real(0, 2.0 * b0 * r_x * r_y);
        lg.exp()
    }

    /// Harmonics until the analytic tail bound drops below `tol`.
    pub fn harmonics_to(&self, r_y: f64, r_x: f64, tol: f64) -> Result<Harmonics> {
        check_radius(r_x, "r_x")?;
        check_radius(r_y, "r_y")?;
        let p = &self.params;
        let p0 = self.p0(r_y, r_x);
        let u = 2.0 * p.b0() * r_x * r_y;
        if u == 0.0 {
            return Ok(Harmonics { p0, d: Vec::new(), tail: 0.0 });
        }
        let li0 = log_bessel_i_real(0, u);
        // sum_{m >= 1} I_m(u) / I_0(u) = (e^u / I_0(u) - 1) / 2
        let rho_total = 0.5 * ((u - li0).exp() - 1.0);
        let mut rho_partial = 0.0;
        let mut d = Vec::new();
        let mut tail = f64::INFINITY;
        for m in 1..=self.max_terms as u32 {
            d.push(dm_ratio_unchecked(m, r_x, r_y, p));
            rho_partial += (log_bessel_i_real(m, u) - li0).exp();
            let rho_next = (log_bessel_i_real(m + 1, u) - li0).exp();
            let q = bessel_ratio_bound(m as f64 + 1.0, u);
            let geometric = if q < 1.0 { rho_next / (1.0 - q) } else { f64::INFINITY };
            let by_sum = (rho_total - rho_partial).max(0.0) + 1e-15 * rho_total;
            tail = 2.0 * em_bound(m + 1, r_x, r_y, p) * geometric.min(by_sum);
            if tail < tol {
                return Ok(Harmonics { p0, d, tail });
            }
        }
        Err(Error::Truncation {
            terms: self.max_terms,
            tail,
        })
    }

    pub fn harmonics(&self, r_y: f64, r_x: f64) -> Result<Harmonics> {
        self.harmonics_to(r_y, r_x, self.tolerance)
    }

    /// `p(r_y, phi_y | r_x, phi_x)` in polar coordinates (a density in `(r_y, phi_y)`).
    pub fn pdf(&self, r_y: f64, phi_y: f64, r_x: f64, phi_x: f64) -> Result<f64> {
        let h = self.harmonics(r_y, r_x)?;
        let delta = phi_y - phi_x;
        let mut s = h.bracket(delta);
        if s < -1e-12 {
            let fine = self.harmonics_to(r_y, r_x, 1e-14)?;
            s = fine.bracket(delta);
            if s < -(fine.tail + 1e-12) {
                return Err(Error::Truncation {
                    terms: fine.d.len(),
                    tail: fine.tail,
                });
            }
        }
        Ok(h.p0 / TAU * s.max(0.0))
    }

    /// Probability of the polar cell `[r_a, r_b] x [phi_a, phi_b]`.
    pub fn cell_probability(
        &self,
        r_range: (f64, f64),
        (phi_a, phi_b): (f64, f64),
        r_x: f64,
        phi_x: f64,
        panels: usize,
    ) -> Result<f64> {
        Ok(self.ring_probabilities(r_range, &[phi_a, phi_b], r_x, phi_x, panels)?[0])
    }

    /// Probabilities of the cells `[r_a, r_b] x [phi_edges[i], phi_edges[i + 1]]`,
    /// Gauss-Legendre in `r_y` (16 nodes per panel), exact in `phi_y`.
    pub fn ring_probabilities(
        &self,
        (r_a, r_b): (f64, f64),
        phi_edges: &[f64],
        r_x: f64,
        phi_x: f64,
        panels: usize,
    ) -> Result<Vec<f64>> {
        if phi_edges.len() < 2 || panels == 0 || !(r_b >= r_a) {
            return Err(Error::invalid("cell", "needs r_b >= r_a, >= 2 phase edges, >= 1 panel"));
        }
        let (nodes, weights) = gauss_legendre(16);
        let width = (r_b - r_a) / panels as f64;
        let mut out = vec![0.0; phi_edges.len() - 1];
        for p in 0..panels {
            let lo = r_a + p as f64 * width;
            for (x, w) in nodes.iter().zip(&weights) {
                let r = lo + 0.5 * width * (x + 1.0);
                let h = self.harmonics(r, r_x)?;
                let scale = 0.5 * width * w * h.p0 / TAU;
                for (o, e) in out.iter_mut().zip(phi_edges.windows(2)) {
                    *o += scale * h.bracket_integral(e[0] - phi_x, e[1] - phi_x);
                }
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`ZdLaw::pdf`].
pub fn zd_conditional_pdf(r_y: f64, phi_y: f64, r_x: f64, phi_x: f64, law: &ZdLaw) -> Result<f64> {
    law.pdf(r_y, phi_y, r_x, phi_x)
}

/// The density exactly as printed: radial prefactor `2 r_x`, harmonics
/// without the factor 2, and an explicit `-gamma r_x^2 z` rotation. Kept for
/// comparison against the normalization and histogram oracles.
pub fn zd_pdf_as_printed(r_y: f64, phi_y: f64, r_x: f64, phi_x: f64, law: &ZdLaw) -> Result<f64> {
    let h = law.harmonics(r_y, r_x)?;
    let p = &law.params;
    let p0 = if r_y == 0.0 { 0.0 } else { h.p0 * r_x / r_y };
    let delta = phi_y - phi_x - p.gamma * r_x * r_x * p.z;
    let step = Complex64::from_polar(1.0, delta);
    let mut rot = step;
    let mut s = 1.0;
    for d in &h.d {
        s += (d * rot).re;
        rot *= step;
    }
    Ok(p0 / TAU * s)
}

/// Quadrature rule for the integrated phase of the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRule {
    /// `mu sum_{i=1}^{L} |x + S_i|^2`, the discretized step as written.
    RightEndpoint,
    /// Trapezoid over the sub-step grid plus the Brownian-bridge mean.
    Trapezoid,
}

/// Scalar zero-dispersion channel discretized into `sub_steps` noise increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZdSimulator {
    pub params: ZdParams,
    pub sub_steps: usize,
    pub rule: PhaseRule,
}

impl ZdSimulator {
    pub fn new(params: ZdParams, sub_steps: usize, rule: PhaseRule) -> Result<Self> {
        params.validate()?;
        if sub_steps == 0 {
            return Err(Error::param("sub_steps", "must be >= 1"));
        }
        Ok(ZdSimulator { params, sub_steps, rule })
    }

    pub fn sample(&self, x: Complex64, stream: &mut RngStream) -> Complex64 {
        let l = self.sub_steps;
        let mu = self.params.z / l as f64;
        let var = self.params.noise_density * mu;
        let mut s = x;
        let mut acc = match self.rule {
            PhaseRule::RightEndpoint => 0.0,
            PhaseRule::Trapezoid => 0.5 * x.norm_sqr() + l as f64 * var / 6.0,
        };
        for i in 0..l {
            s += stream.complex_gaussian(var);
            let w = if self.rule == PhaseRule::Trapezoid && i + 1 == l { 0.5 } else { 1.0 };
            acc += w * s.norm_sqr();
        }
        s * Complex64::from_polar(1.0, self.params.gamma * mu * acc)
    }
}

/// KS distance between simulated output phases at input `r_x` and the
/// uniform law on `[0, 2 pi)`.
pub fn phase_uniformity_distance(
    r_x: f64,
    sim: &ZdSimulator,
    trials: usize,
    stream: &RngStream,
) -> Result<f64> {
    if trials < 10_000 {
        return Err(Error::invalid("trials", format!("needs >= 1e4, got {trials}")));
    }
    check_radius(r_x, "r_x")?;
    let x = Complex64::new(r_x, 0.0);
    let mut phases = run_trials(stream, trials, |_, s| wrap_phase(sim.sample(x, s).arg()) / TAU);
    Ok(ks_one_sample(&mut phases, |u| u.clamp(0.0, 1.0))?.statistic)
}

/// Smallest `r_x` on `grid` with `sum_m E_m(r_x, r_x) < level`.
pub fn analytic_uniformity_threshold(grid: &[f64], params: &ZdParams, level: f64) -> Option<usize> {
    grid.iter().position(|&r| em_tail_sum(1, r, r, params) < level)
}

/// Worst violations found by [`inequality_suite`]; each is `max(0, lhs - rhs)`
/// in relative terms, so a sound implementation reports values near zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub points: usize,
    /// `4 t^2 / (cosh 2t - cos 2t) <= 1`.
    pub b_ratio: f64,
    /// `|I_m(2 r_x r_y b_m)| <= I_m(2 r_x r_y b_0)`.
    pub bessel: f64,
    /// `F(t) >= 0`.
    pub f_positive: f64,
    /// `|D_m| <= E_m`.
    pub dm_bound: f64,
}

impl InequalityReport {
    pub fn max_violation(&self) -> f64 {
        self.b_ratio.max(self.bessel).max(self.f_positive).max(self.dm_bound)
    }
}

/// Checks the coefficient inequalities on `points` log-spaced `t` in
/// `(1e-3, 50]` and on `points` random `(m, r_x, r_y)` triples with
/// `m` in `1..=64` and radii log-uniform in `[1e-2, 1e2]`.
pub fn inequality_suite(params: &ZdParams, points: usize, stream: &mut RngStream) -> Result<InequalityReport> {
    params.validate()?;
    if points < 2 {
        return Err(Error::invalid("points", "needs >= 2"));
    }
    let mut rep = InequalityReport { points, b_ratio: 0.0, bessel: 0.0, f_positive: 0.0, dm_bound: 0.0 };
    let (lo, hi) = (1e-3f64.ln(), 50f64.ln());
    for i in 1..=points {
        let t = (lo + (hi - lo) * i as f64 / points as f64).exp();
        rep.b_ratio = rep.b_ratio.max(b_ratio_sq(t) - 1.0);
        rep.f_positive = rep.f_positive.max(-f_bound_unchecked(t));
    }
    let b0 = params.b0();
    for _ in 0..points {
        let m = 1 + (stream.uniform() * 64.0) as u32;
        let r_x = 10f64.powf(4.0 * stream.uniform() - 2.0);
        let r_y = 10f64.powf(4.0 * stream.uniform() - 2.0);
        let x = Complex64::new(params.t(m), params.t(m));
        let bm = ln_x_over_sinh(x).exp() * b0;
        let u = 2.0 * r_x * r_y;
        let lhs = log_bessel_i(m, bm * u)?.re;
        let rhs = log_bessel_i_real(m, b0 * u);
        if lhs.is_finite() && rhs.is_finite() {
            rep.bessel = rep.bessel.max((lhs - rhs).exp_m1());
        }
        let d = dm_ratio_unchecked(m, r_x, r_y, params).norm();
        let e = em_bound(m, r_x, r_y, params);
        if e > 0.0 {
            rep.dm_bound = rep.dm_bound.max(d / e - 1.0);
        } else if d > 0.0 {
            rep.dm_bound = f64::INFINITY;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn inequality_suite_is_clean() {
        let mut s = RngStream::new(4, 4);
        let rep = inequality_suite(&params(), 2000, &mut s).unwrap();
        assert!(rep.max_violation() <= 1e-12, "{rep:?}");
    }

    fn params() -> ZdParams {
        ZdParams { gamma: 1.0, noise_density: 1.0, z: 1.0 }
    }

    #[test]
    fn m_zero_limits() {
        let p = ZdParams { gamma: 0.7, noise_density: 2.0, z: 1.5 };
        let c = zd_coeffs(0, &p).unwrap();
        assert_eq!(c.a, Complex64::new(1.0 / 3.0, 0.0));
        assert!((c.b - 1.0 / 3.0).norm() < 1e-16);
    }

    #[test]
    fn b_ratio_and_f_at_one() {
        // reference values evaluated at 30 digits
        assert!((b_ratio_sq(1.0) - 0.957_317_398_836_639).abs() < 1e-14);
        assert!((f_bound(1.0).unwrap() - 0.085_635_704_750_327_63).abs() < 1e-14);
        // t = 1 is reached at m = 2 for gamma D z^2 = 1
        let c = zd_coeffs(2, &params()).unwrap();
        assert!((c.t - 1.0).abs() < 1e-15);
        assert!((c.b.norm_sqr() / params().b0().powi(2) - b_ratio_sq(1.0)).abs() < 1e-14);
        assert!((c.a.re / params().b0() - 1.0 - f_bound(1.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn f_limits() {
        assert!(f_bound(1e-6).unwrap() < 1e-20);
        assert!((f_bound(10.0).unwrap() - 9.000_000_054_456_805).abs() < 1e-12);
        assert!((f_bound(0.05).unwrap() - 5.555_554_232_804_571e-7).abs() < 1e-17);
        assert!(f_bound(0.0).is_err());
        // branch joins
        for &t in &[0.2, 20.0] {
            let a = f_bound_unchecked(t * (1.0 - 1e-12));
            let b = f_bound_unchecked(t * (1.0 + 1e-12));
            assert!((a - b).abs() < 1e-10 * a.abs());
        }
    }

    #[test]
    fn coefficients_do_not_overflow() {
        let p = ZdParams { gamma: 1.0, noise_density: 1.0, z: 300.0 * 2f64.sqrt() };
        let c = zd_coeffs(1, &p).unwrap();
        assert!((c.t - 300.0).abs() < 1e-9);
        assert!(c.a.re.is_finite() && c.b.norm() < 1e-100);
    }

    #[test]
    fn a_minus_a0_identity() {
        let p = ZdParams { gamma: 0.3, noise_density: 0.8, z: 2.0 };
        for m in 1..40 {
            let c = zd_coeffs(m, &p).unwrap();
            let t = c.t;
            let x = Complex64::new(t, t);
            let via_coth = (x * (x.cosh() / x.sinh()) - 1.0) * p.b0();
            assert!((c.a - p.b0() - via_coth).norm() < 1e-12 * c.a.norm());
        }
    }

    #[test]
    fn dm_vanishes_at_origin() {
        for m in 1..5 {
            assert_eq!(dm_ratio(m, 0.0, 1.3, &params()).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn rician_limit() {
        // gamma -> 0: polar form of the 2-D Gaussian centred at x
        let p = ZdParams { gamma: 1e-14, noise_density: 0.7, z: 1.3 };
        let law = ZdLaw::new(p).unwrap();
        let var = p.variance();
        let (rx, px) = (1.1, 0.4);
        let mut worst: f64 = 0.0;
        for i in 1..40 {
            for j in 0..16 {
                let ry = i as f64 * 0.08;
                let py = j as f64 * TAU / 16.0;
                let y = Complex64::from_polar(ry, py);
                let x = Complex64::from_polar(rx, px);
                let want = ry / (PI * var) * (-(y - x).norm_sqr() / var).exp();
                let got = law.pdf(ry, py, rx, px).unwrap();
                worst = worst.max((want - got).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn dm_is_below_em() {
        let p = ZdParams { gamma: 1.7, noise_density: 0.4, z: 0.9 };
        let mut s = RngStream::new(17, 0);
        for _ in 0..2000 {
            let m = 1 + (s.uniform() * 30.0) as u32;
            let rx = 4.0 * s.uniform();
            let ry = 4.0 * s.uniform();
            let d = dm_ratio(m, rx, ry, &p).unwrap().norm();
            let e = em_bound(m, rx, ry, &p);
            assert!(d <= e * (1.0 + 1e-12), "m={m} rx={rx} ry={ry}: {d} > {e}");
        }
    }

    #[test]
    fn tail_bound_controls_truncation() {
        let law = ZdLaw::new(params()).unwrap();
        let h = law.harmonics(1.2, 0.9).unwrap();
        assert!(h.tail < 1e-10);
        let long = law.harmonics_to(1.2, 0.9, 1e-16).unwrap();
        let diff = (h.bracket(0.3) - long.bracket(0.3)).abs();
        assert!(diff <= h.tail + 1e-15);
    }

    #[test]
    fn amos_bound_holds() {
        for &u in &[0.1, 1.0, 10.0, 200.0] {
            for k in 0..60 {
                let r = (log_bessel_i_real(k + 1, u) - log_bessel_i_real(k, u)).exp();
                assert!(r <= bessel_ratio_bound(k as f64, u) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn phase_marginal_is_rician() {
        let law = ZdLaw::new(params()).unwrap();
        let (rx, ry) = (1.0, 1.4);
        let n = 256;
        let s: f64 = (0..n)
            .map(|j| law.pdf(ry, j as f64 * TAU / n as f64, rx, 0.2).unwrap())
            .sum::<f64>()
            * TAU
            / n as f64;
        assert!((s - law.p0(ry, rx)).abs() < 1e-6);
    }

    #[test]
    fn origin_input_is_isotropic() {
        let law = ZdLaw::new(params()).unwrap();
        let a = law.pdf(0.8, 0.1, 0.0, 0.0).unwrap();
        let b = law.pdf(0.8, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_simulator_is_kerr() {
        let sim = ZdSimulator::new(ZdParams { gamma: 2.0, noise_density: 1e-300, z: 0.5 }, 8, PhaseRule::RightEndpoint)
            .unwrap();
        let x = Complex64::new(0.6, 0.8);
        let y = sim.sample(x, &mut RngStream::new(0, 0));
        assert!((y - x * Complex64::from_polar(1.0, 1.0)).norm() < 1e-12);
    }
}
