//! Power sweeps and the estimator-based reproductions built on the channel,
//! fading and estimation modules.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{deterministic_gain, output_noise_variance, Channel, FiberParams, LossProfile};
use crate::error::{Error, Result};
use crate::fading::escape_probability;
use crate::infotheory::{
    entropy_knn_detailed, mutual_info_knn, spherical_entropy_with, verify_entropy_identity, Conditioning,
    IdentityReport, RadialLaw, SampleSet,
};
use crate::numerics::stats::{chi_square_gof, ks_one_sample, noncentral_chi2_cdf};
use crate::numerics::{
    mean, sample_complex_gaussian, spherical_decompose, sphere_surface_area, variance, wrap_centered,
    wrap_phase, ComplexVector, RngStream,
};
use crate::trials::{run_trials, try_run_trials};
use crate::zd::{analytic_uniformity_threshold, em_tail_sum, phase_uniformity_distance, ZdLaw, ZdSimulator};

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn slope_fit(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 3 {
        return Err(Error::invalid("xs", "needs at least 3 points"));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("xs", "all abscissae are equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(SlopeFit { slope, intercept, r_squared })
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Law of the input norm; directions are uniform on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputLaw {
    /// `|X| = sqrt(n P) |N(0, 1)|`.
    HalfGaussianAmplitude,
    /// `log |X| ~ N(mu, sigma^2)` with `E |X|^2 = n P`.
    LogNormalNorm { sigma: f64 },
    /// `|X| = sqrt(n P)`.
    Ring,
}

impl InputLaw {
    pub fn sample_norm(&self, n: usize, p: f64, s: &mut RngStream) -> f64 {
        let scale = (n as f64 * p).sqrt();
        match *self {
            InputLaw::HalfGaussianAmplitude => scale * s.standard_normal().abs(),
            InputLaw::LogNormalNorm { sigma } => {
                (scale.ln() - sigma * sigma + sigma * s.standard_normal()).exp()
            }
            InputLaw::Ring => scale,
        }
    }
}

/// Uniform direction on the unit sphere of `C^n`.
pub fn uniform_direction(n: usize, s: &mut RngStream) -> ComplexVector {
    loop {
        let g = sample_complex_gaussian(s, n, 1.0).expect("n >= 1");
        let d = spherical_decompose(&g).expect("finite");
        if d.norm > 0.0 {
            return d.direction;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepChannel {
    Mssfm,
    Fading,
    Awgn,
    Zd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweep {
    pub p_grid: Vec<f64>,
    pub trials_per_point: usize,
    pub input_law: InputLaw,
    #[serde(default = "default_sweep_channel")]
    pub channel: SweepChannel,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_sweep_channel() -> SweepChannel {
    SweepChannel::Mssfm
}

fn default_k() -> usize {
    crate::infotheory::DEFAULT_K
}

/// Grid span in dB.
pub fn span_db(grid: &[f64]) -> f64 {
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(0.0, f64::max);
    10.0 * (hi / lo).log10()
}

impl PowerSweep {
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::param("sweep.p_grid", "powers must be positive"));
        }
        if self.p_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("sweep.p_grid", "must be strictly increasing"));
        }
        if self.p_grid.len() < 6 || span_db(&self.p_grid) < 30.0 - 1e-9 {
            return Err(Error::param("sweep.p_grid", "slope fits need >= 6 points spanning >= 30 dB"));
        }
        if self.trials_per_point < 2 * self.k + 2 {
            return Err(Error::param("sweep.trials_per_point", "too few trials for the estimator"));
        }
        if self.k == 0 {
            return Err(Error::param("sweep.k", "must be >= 1"));
        }
        if let InputLaw::LogNormalNorm { sigma } = self.input_law {
            if !(sigma > 0.0) {
                return Err(Error::param("sweep.input_law.sigma", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p: f64,
    pub value: f64,
    pub stderr: f64,
    pub near_singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Fit of `value` against `ln P` over the whole grid.
    pub fit: SlopeFit,
    /// Fit over the top 30 dB of the grid.
    pub top_fit: SlopeFit,
}

impl SweepResult {
    pub fn from_points(points: Vec<SweepPoint>) -> Result<Self> {
        let xs: Vec<f64> = points.iter().map(|p| p.p.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.value).collect();
        let fit = slope_fit(&xs, &ys)?;
        let p_max = points.iter().map(|p| p.p).fold(0.0, f64::max);
        let top: Vec<usize> = (0..points.len()).filter(|&i| points[i].p >= p_max * 1e-3 * (1.0 - 1e-12)).collect();
        let top_fit = slope_fit(
            &top.iter().map(|&i| xs[i]).collect::<Vec<_>>(),
            &top.iter().map(|&i| ys[i]).collect::<Vec<_>>(),
        )?;
        Ok(SweepResult { points, fit, top_fit })
    }
}

/// `h(angle Y | X, |Y|)` for the scalar AWGN channel `Y = sqrt(P) + Z`,
/// `Z ~ CN(0, 1)`, estimated as `h(angle Y, |Y|) - h(|Y|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwgnPhaseSweep {
    pub result: SweepResult,
    /// Unconditional `h(angle Y)` per point (X fixed).
    pub phase_entropy: Vec<f64>,
    /// `exp(2 h(angle Y | X, |Y|)) / (2 pi e)` per point.
    pub entropy_power: Vec<f64>,
}

pub fn awgn_phase_entropy_sweep(
    p_grid: &[f64],
    trials: usize,
    k: usize,
    stream: &RngStream,
) -> Result<AwgnPhaseSweep> {
    let mut points = Vec::new();
    let (mut phase_entropy, mut entropy_power) = (Vec::new(), Vec::new());
    for (i, &p) in p_grid.iter().enumerate() {
        let ys = try_run_trials(&stream.substream(i as u64), trials, |_, s| {
            Ok(Complex64::new(p.sqrt(), 0.0) + s.complex_gaussian(1.0))
        })?;
        let ang: Vec<f64> = ys.iter().map(|y| wrap_centered(y.arg())).collect();
        let rad: Vec<f64> = ys.iter().map(|y| y.norm()).collect();
        let joint = SampleSet::new(2, ang.iter().zip(&rad).flat_map(|(a, r)| [*a, *r]).collect())?;
        let (hj, ej) = entropy_knn_detailed(&joint, k)?;
        let (hr, er) = entropy_knn_detailed(&SampleSet::from_scalars(rad)?, k)?;
        let (ha, _) = entropy_knn_detailed(&SampleSet::from_scalars(ang)?, k)?;
        let h = hj - hr;
        points.push(SweepPoint { p, value: h, stderr: (ej * ej + er * er).sqrt(), near_singular: false });
        phase_entropy.push(ha);
        entropy_power.push((2.0 * h).exp() / (std::f64::consts::TAU * std::f64::consts::E));
    }
    Ok(AwgnPhaseSweep { result: SweepResult::from_points(points)?, phase_entropy, entropy_power })
}

/// Exact `h(angle Y | X, |Y|)` for the AWGN channel: given `|Y| = r` the phase
/// is von Mises with concentration `2 sqrt(P) r`.
pub fn awgn_phase_entropy_exact(p: f64) -> f64 {
    use crate::numerics::log_bessel_i_real;
    let (nodes, weights) = crate::numerics::gauss_legendre(64);
    let a = p.sqrt();
    let (lo, hi) = ((a - 10.0).max(0.0), a + 10.0);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        let r = lo + 0.5 * (hi - lo) * (x + 1.0);
        let kappa = 2.0 * a * r;
        let li0 = log_bessel_i_real(0, kappa);
        // Rician density of |Y| with unit noise
        let dens = 2.0 * r * (-(r * r + p) + li0).exp();
        let ratio = if kappa == 0.0 { 0.0 } else { (log_bessel_i_real(1, kappa) - li0).exp() };
        let h = (std::f64::consts::TAU).ln() + li0 - kappa * ratio;
        acc += 0.5 * (hi - lo) * w * dens * h;
    }
    acc
}

fn require_constant(params: &FiberParams, what: &str) -> Result<()> {
    if !params.loss.is_constant() {
        return Err(Error::UnsupportedModel(format!("{what} requires a constant-loss profile")));
    }
    Ok(())
}

/// `I(|X|; |Y|)` through the full cascade at each power.
pub fn amplitude_mi_sweep(channel: &Channel, sweep: &PowerSweep, stream: &RngStream) -> Result<SweepResult> {
    require_constant(channel.params(), "amplitude_mi_sweep")?;
    sweep.validate()?;
    let points = amplitude_points(channel, sweep, stream)?;
    SweepResult::from_points(points)
}

fn amplitude_points(channel: &Channel, sweep: &PowerSweep, stream: &RngStream) -> Result<Vec<SweepPoint>> {
    let n = channel.params().n;
    let mut points = Vec::with_capacity(sweep.p_grid.len());
    for (i, &p) in sweep.p_grid.iter().enumerate() {
        let pairs = try_run_trials(&stream.substream(i as u64), sweep.trials_per_point, |_, s| {
            let r = sweep.input_law.sample_norm(n, p, s);
            let x = uniform_direction(n, s).scale(Complex64::new(r, 0.0));
            let y = channel.propagate(&x, s)?;
            Ok((r, y.norm()))
        })?;
        let xs = SampleSet::from_scalars(pairs.iter().map(|q| q.0).collect())?;
        let ys = SampleSet::from_scalars(pairs.iter().map(|q| q.1).collect())?;
        let mi = mutual_info_knn(&xs, &ys, sweep.k)?;
        points.push(SweepPoint { p, value: mi.value, stderr: mi.stderr, near_singular: mi.near_singular });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNoiseRow {
    pub p: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNoiseTable {
    pub rows: Vec<LogNoiseRow>,
    /// Mean per-point variance over the top decade of the grid.
    pub top_decade_variance: f64,
    /// Mean per-point variance over the decade centred on the grid's log-midpoint.
    pub middle_decade_variance: f64,
    pub ratio: f64,
}

/// Statistics of `log |Y| - log |x|` for inputs `x = sqrt(n P) * direction`.
pub fn log_domain_noise_boundedness(
    channel: &Channel,
    direction: &ComplexVector,
    p_grid: &[f64],
    trials: usize,
    stream: &RngStream,
) -> Result<LogNoiseTable> {
    let n = channel.params().n;
    if direction.dim() != n || (direction.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("direction", "must be a unit vector of dimension n"));
    }
    if p_grid.len() < 3 || trials < 2 {
        return Err(Error::invalid("p_grid", "needs >= 3 points and >= 2 trials"));
    }
    let mut rows = Vec::with_capacity(p_grid.len());
    for (i, &p) in p_grid.iter().enumerate() {
        let scale = (n as f64 * p).sqrt();
        let x = direction.scale(Complex64::new(scale, 0.0));
        let logs = try_run_trials(&stream.substream(i as u64), trials, |_, s| {
            Ok(channel.propagate(&x, s)?.norm().ln() - scale.ln())
        })?;
        rows.push(LogNoiseRow { p, mean: mean(&logs), variance: variance(&logs) });
    }
    let (lo, hi) = (p_grid[0].ln(), p_grid[p_grid.len() - 1].ln());
    let decade = 10f64.ln();
    let mid = 0.5 * (lo + hi);
    let pick = |a: f64, b: f64| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.p.ln() >= a - 1e-9 && r.p.ln() <= b + 1e-9)
            .map(|r| r.variance)
            .collect();
        mean(&v)
    };
    let top = pick(hi - decade, hi);
    let middle = pick(mid - 0.5 * decade, mid + 0.5 * decade);
    Ok(LogNoiseTable { rows, top_decade_variance: top, middle_decade_variance: middle, ratio: top / middle })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionTable {
    pub points: Vec<SweepPoint>,
    /// `(1/n) log A_n`.
    pub ceiling: f64,
    pub knee: Option<usize>,
}

/// `(1/n) I(X^; Y | |x|)` at one unit with uniform input directions and
/// `|x|^2 = n P`.
pub fn direction_rate_saturation(
    channel: &Channel,
    p_grid: &[f64],
    trials: usize,
    k: usize,
    stream: &RngStream,
) -> Result<DirectionTable> {
    let n = channel.params().n;
    if channel.params().m_units != 1 {
        return Err(Error::param("m_units", "direction saturation is measured on one unit"));
    }
    let mut points = Vec::with_capacity(p_grid.len());
    for (i, &p) in p_grid.iter().enumerate() {
        let scale = Complex64::new((n as f64 * p).sqrt(), 0.0);
        let pairs = try_run_trials(&stream.substream(i as u64), trials, |_, s| {
            let d = uniform_direction(n, s);
            let y = channel.propagate(&d.scale(scale), s)?;
            Ok((d.to_real(), y.to_real()))
        })?;
        let xs = SampleSet::new(2 * n, pairs.iter().flat_map(|q| q.0.iter().copied()).collect())?;
        let ys = SampleSet::new(2 * n, pairs.iter().flat_map(|q| q.1.iter().copied()).collect())?;
        let mi = mutual_info_knn(&xs, &ys, k)?;
        points.push(SweepPoint {
            p,
            value: mi.value / n as f64,
            stderr: mi.stderr / n as f64,
            near_singular: mi.near_singular,
        });
    }
    let knee = find_knee(&points);
    Ok(DirectionTable { ceiling: sphere_surface_area(n)?.ln() / n as f64, points, knee })
}

/// First grid index whose 3-point moving slope (against `ln P`) falls to
/// half the initial moving slope; index 0 if the curve starts non-increasing.
pub fn find_knee(points: &[SweepPoint]) -> Option<usize> {
    if points.len() < 3 {
        return None;
    }
    let slope_at = |c: usize| {
        let xs: Vec<f64> = points[c - 1..=c + 1].iter().map(|p| p.p.ln()).collect();
        let ys: Vec<f64> = points[c - 1..=c + 1].iter().map(|p| p.value).collect();
        slope_fit(&xs, &ys).map(|f| f.slope).unwrap_or(0.0)
    };
    let first = slope_at(1);
    if first <= 0.0 {
        return Some(0);
    }
    (2..points.len() - 1).find(|&c| slope_at(c) <= 0.5 * first).or(Some(points.len() - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub n: usize,
    pub mi: f64,
    pub per_dof: f64,
    pub stderr: f64,
}

/// `I(|X|; |Y|)` at fixed power for each `n`, all other parameters from `base`.
pub fn dimension_sweep(
    base: &FiberParams,
    p_fixed: f64,
    n_grid: &[usize],
    trials: usize,
    input_law: InputLaw,
    k: usize,
    stream: &RngStream,
) -> Result<Vec<DimensionRow>> {
    let mut rows = Vec::with_capacity(n_grid.len());
    for (i, &n) in n_grid.iter().enumerate() {
        let channel = Channel::new(FiberParams { n, ..base.clone() })?;
        let sweep = PowerSweep {
            p_grid: vec![p_fixed],
            trials_per_point: trials,
            input_law,
            channel: SweepChannel::Mssfm,
            k,
        };
        let pt = amplitude_points(&channel, &sweep, &stream.substream(i as u64))?[0];
        rows.push(DimensionRow { n, mi: pt.value, per_dof: pt.value / n as f64, stderr: pt.stderr });
    }
    Ok(rows)
}

/// `n` times the slope of the per-DOF amplitude MI against `ln P`, per `n`.
pub fn dimension_slope_sweep(
    base: &FiberParams,
    sweep: &PowerSweep,
    n_grid: &[usize],
    stream: &RngStream,
) -> Result<Vec<(usize, SweepResult)>> {
    require_constant(base, "dimension_slope_sweep")?;
    let mut out = Vec::with_capacity(n_grid.len());
    for (i, &n) in n_grid.iter().enumerate() {
        let channel = Channel::new(FiberParams { n, ..base.clone() })?;
        out.push((n, amplitude_mi_sweep(&channel, sweep, &stream.substream(i as u64))?));
    }
    Ok(out)
}

/// Effective per-entry noise of the amplitude channel, for data-processing checks.
pub fn effective_noise(params: &FiberParams) -> f64 {
    match params.loss {
        LossProfile::Constant { .. } => output_noise_variance(params)
            .map(|v| v / deterministic_gain(params).unwrap().powi(2))
            .unwrap_or(f64::NAN),
        LossProfile::NonConstant { .. } => (params.noise_steps() as f64) * params.noise_density,
    }
}

/// Distributional check of `|Y|^2` at a fixed input through a lossless or
/// constant-loss cascade, where `2 |Y|^2 / v` is noncentral chi-square with
/// `2n` degrees of freedom and noncentrality `2 g^2 |x|^2 / v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareCheck {
    pub trials: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub mean: f64,
    pub mean_expected: f64,
    /// `(mean - expected) / standard error`.
    pub mean_z: f64,
    pub variance: f64,
    pub variance_expected: f64,
    pub variance_z: f64,
}

pub fn noncentral_chi2_check(
    channel: &Channel,
    x: &ComplexVector,
    trials: usize,
    stream: &RngStream,
) -> Result<ChiSquareCheck> {
    let params = channel.params();
    require_constant(params, "noncentral_chi2_check")?;
    if x.dim() != params.n {
        return Err(Error::DimensionMismatch { expected: params.n, got: x.dim() });
    }
    if trials < 100 {
        return Err(Error::invalid("trials", "needs >= 100"));
    }
    let v = output_noise_variance(params)?;
    if !(v > 0.0) {
        return Err(Error::param("noise_density", "must be positive for a noise law"));
    }
    let g2 = deterministic_gain(params)?.powi(2);
    let nc = g2 * x.norm_sqr();
    let n = params.n as f64;
    let sq = try_run_trials(stream, trials, |_, s| Ok(channel.propagate(x, s)?.norm_sqr()))?;
    let m = mean(&sq);
    let var = variance(&sq);
    let mean_expected = nc + n * v;
    let variance_expected = n * v * v + 2.0 * v * nc;
    let nf = trials as f64;
    let m4 = mean(&sq.iter().map(|q| (q - m).powi(4)).collect::<Vec<_>>());
    let se_var = ((m4 - var * var).max(0.0) / nf).sqrt();
    let mut scaled: Vec<f64> = sq.iter().map(|q| 2.0 * q / v).collect();
    let (dof, lambda) = (2.0 * n, 2.0 * nc / v);
    let ks = ks_one_sample(&mut scaled, |t| noncentral_chi2_cdf(t, dof, lambda))?;
    Ok(ChiSquareCheck {
        trials,
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        mean: m,
        mean_expected,
        mean_z: (m - mean_expected) / (variance_expected / nf).sqrt(),
        variance: var,
        variance_expected,
        variance_z: (var - variance_expected) / se_var,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapePoint {
    pub kappa: f64,
    pub probability: f64,
    /// Binomial standard error over all `trials * n` coordinates.
    pub stderr: f64,
}

/// [`escape_probability`] along a `kappa` grid, one substream per point.
pub fn escape_sweep(
    channel: &Channel,
    kappa_grid: &[f64],
    c: f64,
    trials: usize,
    stream: &RngStream,
) -> Result<Vec<EscapePoint>> {
    let cells = (trials * channel.params().n) as f64;
    kappa_grid
        .iter()
        .enumerate()
        .map(|(i, &kappa)| {
            let p = escape_probability(kappa, c, channel, trials, &stream.substream(i as u64))?;
            Ok(EscapePoint { kappa, probability: p, stderr: (p * (1.0 - p) / cells).sqrt() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityTable {
    pub r_x: Vec<f64>,
    /// KS distance of the output phase to uniform.
    pub distance: Vec<f64>,
    /// `sum_{m >= 1} E_m(r_x, r_x)`.
    pub tail_bound: Vec<f64>,
    /// Scale of the KS distance under exact uniformity, `1 / sqrt(trials)`.
    pub noise: f64,
    /// First grid index with distance below `level`.
    pub mc_threshold: Option<usize>,
    /// First grid index with tail bound below `level`.
    pub analytic_threshold: Option<usize>,
}

pub fn phase_uniformity_sweep(
    sim: &ZdSimulator,
    r_grid: &[f64],
    trials: usize,
    level: f64,
    stream: &RngStream,
) -> Result<UniformityTable> {
    let distance = r_grid
        .iter()
        .enumerate()
        .map(|(i, &r)| phase_uniformity_distance(r, sim, trials, &stream.substream(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let tail_bound: Vec<f64> = r_grid.iter().map(|&r| em_tail_sum(1, r, r, &sim.params)).collect();
    Ok(UniformityTable {
        r_x: r_grid.to_vec(),
        mc_threshold: distance.iter().position(|&d| d < level),
        analytic_threshold: analytic_uniformity_threshold(r_grid, &sim.params, level),
        distance,
        tail_bound,
        noise: 1.0 / (trials as f64).sqrt(),
    })
}

/// Both identity checks for one `n`: the decomposition residual on isotropic
/// complex Gaussians and the spherical entropy of uniform directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub n: usize,
    pub report: IdentityReport,
    pub uniform_spherical: f64,
    pub log_area: f64,
}

pub fn identity_check(
    n: usize,
    samples: usize,
    conditioning: Conditioning,
    k: usize,
    stream: &RngStream,
) -> Result<IdentityCheck> {
    let gauss = run_trials(&stream.substream(0), samples, |_, s| {
        sample_complex_gaussian(s, n, 1.0).expect("n >= 1").to_real()
    });
    let x = SampleSet::new(2 * n, gauss.concat())?;
    let report = verify_entropy_identity(&x, conditioning, k, &mut stream.substream(1))?;
    let dirs = run_trials(&stream.substream(2), samples, |_, s| uniform_direction(n, s).to_real());
    let dirs = SampleSet::new(2 * n, dirs.concat())?;
    let uniform_spherical = spherical_entropy_with(&dirs, &mut stream.substream(3), k, RadialLaw::Uniform)?;
    Ok(IdentityCheck { n, report, uniform_spherical, log_area: sphere_surface_area(n)?.ln() })
}

/// Pearson test of simulated zero-dispersion outputs against the analytic
/// law on a polar grid: `r_bins` rings of equal Rician mass times `phi_bins`
/// equal sectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramGof {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn zd_histogram_gof(
    sim: &ZdSimulator,
    r_x: f64,
    trials: usize,
    r_bins: usize,
    phi_bins: usize,
    stream: &RngStream,
) -> Result<HistogramGof> {
    if r_bins < 2 || phi_bins < 2 {
        return Err(Error::invalid("bins", "needs >= 2 rings and >= 2 sectors"));
    }
    let law = ZdLaw::new(sim.params)?;
    let v = sim.params.variance();
    let lambda = 2.0 * r_x * r_x / v;
    // ring edges at equal-mass quantiles of |Y|, where 2 |Y|^2 / v is
    // noncentral chi-square with 2 degrees of freedom
    let quantile = |q: f64| {
        let (mut lo, mut hi) = (0.0, lambda + 200.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if noncentral_chi2_cdf(mid, 2.0, lambda) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi) * v / 2.0).sqrt()
    };
    let mut r_edges: Vec<f64> = (0..r_bins).map(|i| quantile(i as f64 / r_bins as f64)).collect();
    r_edges[0] = 0.0;
    r_edges.push(r_x + 40.0 * v.sqrt());
    let phi_edges: Vec<f64> = (0..=phi_bins).map(|j| TAU * j as f64 / phi_bins as f64).collect();
    let mut expected = Vec::with_capacity(r_bins * phi_bins);
    for w in r_edges.windows(2) {
        expected.extend(law.ring_probabilities((w[0], w[1]), &phi_edges, r_x, 0.0, 8)?);
    }
    let x = Complex64::new(r_x, 0.0);
    let cells = run_trials(stream, trials, |_, s| {
        let y = sim.sample(x, s);
        let i = r_edges[1..r_bins].partition_point(|&e| e <= y.norm());
        let j = ((wrap_phase(y.arg()) / TAU * phi_bins as f64) as usize).min(phi_bins - 1);
        i * phi_bins + j
    });
    let mut observed = vec![0u64; r_bins * phi_bins];
    for c in cells {
        observed[c] += 1;
    }
    let (statistic, dof, p_value) = chi_square_gof(&observed, &expected)?;
    Ok(HistogramGof { statistic, dof, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_data_is_exact() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let f = slope_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-13);
        assert_eq!(f.r_squared, 1.0);
        let f = slope_fit(&xs, &[3.0; 10]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert!(slope_fit(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
    }

    #[test]
    fn noisy_affine_slope() {
        let mut s = RngStream::new(1, 0);
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0 * 3.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + 0.01 * s.standard_normal()).collect();
        assert!((slope_fit(&xs, &ys).unwrap().slope - 0.5).abs() < 0.02);
    }

    #[test]
    fn log_grid() {
        let g = log_spaced(1.0, 1e4, 9);
        assert!((g[8] - 1e4).abs() < 1e-8 && (span_db(&g) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn awgn_exact_entropy_tends_to_gaussian() {
        // at high P the phase given |Y| is N(0, 1/(2P)): h -> 0.5 log(2 pi e / (2P))
        let p: f64 = 1e4;
        let want = 0.5 * (std::f64::consts::PI * std::f64::consts::E / p).ln();
        assert!((awgn_phase_entropy_exact(p) - want).abs() < 1e-3);
    }

    #[test]
    fn knee_of_a_saturating_curve() {
        let pts: Vec<SweepPoint> = (0..9)
            .map(|i| {
                let lp = i as f64;
                let v = if i < 4 { lp } else { 4.0 };
                SweepPoint { p: lp.exp(), value: v, stderr: 0.0, near_singular: false }
            })
            .collect();
        assert_eq!(find_knee(&pts), Some(4));
    }
}
