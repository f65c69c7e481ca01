//! Nonparametric entropy and mutual-information estimation, entropy with
//! respect to the spherical measure, and the finite-alphabet rate bounds.

mod kdtree;

pub use kdtree::{KdTree, Metric};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{digamma_pos, mean, pairwise_sum, unit_ball_log_volume, ComplexVector, RngStream};

/// `N` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    d: usize,
    points: Vec<f64>,
}

impl SampleSet {
    pub fn new(d: usize, points: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be positive"));
        }
        if points.len() % d != 0 {
            return Err(Error::invalid("points", format!("length {} is not a multiple of {d}", points.len())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("points", "entries must be finite"));
        }
        Ok(SampleSet { d, points })
    }

    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    /// Complex vectors flattened to `(re, im)` pairs.
    pub fn from_complex(vectors: &[ComplexVector]) -> Result<Self> {
        let d = vectors.first().map(|v| 2 * v.dim()).unwrap_or(0);
        let mut points = Vec::with_capacity(d * vectors.len());
        for v in vectors {
            if 2 * v.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: 2 * v.dim() });
            }
            points.extend(v.to_real());
        }
        Self::new(d, points)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.point(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Points `idx[0], idx[1], ...`.
    pub fn select(&self, idx: &[usize]) -> SampleSet {
        let mut points = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            points.extend_from_slice(self.point(i));
        }
        SampleSet { d: self.d, points }
    }

    /// Side-by-side concatenation `(x_i, y_i)`.
    pub fn join(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.len() != other.len() {
            return Err(Error::invalid(
                "y",
                format!("sample counts differ: {} vs {}", self.len(), other.len()),
            ));
        }
        let mut points = Vec::with_capacity(self.points.len() + other.points.len());
        for i in 0..self.len() {
            points.extend_from_slice(self.point(i));
            points.extend_from_slice(other.point(i));
        }
        Ok(SampleSet { d: self.d + other.d, points })
    }

    /// Each coordinate rescaled to unit standard deviation; constant
    /// coordinates are left as they are.
    pub fn standardized(&self) -> SampleSet {
        let (n, d) = (self.len(), self.d);
        let mut points = self.points.clone();
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| self.points[i * d + j]).collect();
            let sd = crate::numerics::variance(&col).sqrt();
            if sd > 0.0 && sd.is_finite() {
                for i in 0..n {
                    points[i * d + j] /= sd;
                }
            }
        }
        SampleSet { d, points }
    }

    fn jittered(&self, stream: &mut RngStream) -> SampleSet {
        let scale = self.points.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let points = self
            .points
            .iter()
            .map(|v| v + 1e-12 * scale * stream.standard_normal())
            .collect();
        SampleSet { d: self.d, points }
    }
}

const JITTER_SEED: u64 = 0x6a09_e667_f3bc_c908;

/// Rejects point clouds that live on a lower-dimensional set: a singular
/// correlation matrix (e.g. a circle in `R^4`) or a constant norm (a sphere).
pub fn check_full_dimensional(samples: &SampleSet) -> Result<()> {
    let (n, d) = (samples.len(), samples.dim());
    if n < 2 {
        return Err(Error::DegenerateSample("fewer than two points".into()));
    }
    let mut mu = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mu.iter_mut().zip(samples.point(i)) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let p = samples.point(i);
        for a in 0..d {
            let da = p[a] - mu[a];
            for b in a..d {
                cov[a * d + b] += da * (p[b] - mu[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[b * d + a] = cov[a * d + b];
        }
    }
    let scale: Vec<f64> = (0..d).map(|a| cov[a * d + a].sqrt()).collect();
    let max_scale = scale.iter().cloned().fold(0.0, f64::max);
    if let Some(a) = scale.iter().position(|&s| !(s > 1e-12 * max_scale)) {
        return Err(Error::DegenerateSample(format!("coordinate {a} is constant")));
    }
    for a in 0..d {
        for b in 0..d {
            cov[a * d + b] /= scale[a] * scale[b];
        }
    }
    // symmetric pivoted elimination on the correlation matrix
    let mut used = vec![false; d];
    let mut first = 0.0;
    for step in 0..d {
        let p = (0..d)
            .filter(|&i| !used[i])
            .max_by(|&i, &j| cov[i * d + i].total_cmp(&cov[j * d + j]))
            .unwrap();
        let piv = cov[p * d + p];
        if step == 0 {
            first = piv;
        }
        if !(piv > 1e-10 * first) {
            return Err(Error::DegenerateSample(format!(
                "correlation matrix has rank {step} < {d}"
            )));
        }
        used[p] = true;
        for i in 0..d {
            if used[i] {
                continue;
            }
            let f = cov[i * d + p] / piv;
            for j in 0..d {
                if !used[j] {
                    cov[i * d + j] -= f * cov[p * d + j];
                }
            }
        }
    }
    if d > 1 {
        let norms = samples.norms();
        let m = mean(&norms);
        let sd = crate::numerics::variance(&norms).sqrt();
        if m > 0.0 && sd < 1e-9 * m {
            return Err(Error::DegenerateSample("all points share one norm (sphere support)".into()));
        }
    }
    Ok(())
}

fn kth_distances(samples: &SampleSet, k: usize, metric: Metric) -> Vec<f64> {
    let tree = KdTree::new(samples.points(), samples.dim());
    (0..samples.len())
        .into_par_iter()
        .map(|i| tree.kth_neighbor_distance(i, k, metric))
        .collect()
}

/// Kozachenko-Leonenko differential entropy estimate (nats).
pub fn entropy_knn(samples: &SampleSet, k: usize) -> Result<f64> {
    Ok(entropy_knn_detailed(samples, k)?.0)
}

/// Entropy estimate with the standard error of its per-sample terms.
pub fn entropy_knn_detailed(samples: &SampleSet, k: usize) -> Result<(f64, f64)> {
    let n = samples.len();
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if n < k + 1 {
        return Err(Error::invalid("samples", format!("need at least k + 1 = {} points, got {n}", k + 1)));
    }
    check_full_dimensional(samples)?;
    let mut eps = kth_distances(samples, k, Metric::Euclidean);
    if eps.iter().any(|&e| e == 0.0) {
        let j = samples.jittered(&mut RngStream::new(JITTER_SEED, 0));
        eps = kth_distances(&j, k, Metric::Euclidean);
        if eps.iter().any(|&e| e == 0.0) {
            return Err(Error::DegenerateSample("duplicate points survive jitter".into()));
        }
    }
    let d = samples.dim() as f64;
    let logs: Vec<f64> = eps.iter().map(|e| d * e.ln()).collect();
    let h = digamma_pos(n as f64) - digamma_pos(k as f64)
        + unit_ball_log_volume(samples.dim())
        + pairwise_sum(&logs) / n as f64;
    Ok((h, (crate::numerics::variance(&logs) / n as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    KnnKraskov,
    Histogram,
    PluginDiscrete,
}

/// A mutual-information estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    pub stderr: f64,
    pub estimator: Estimator,
    pub k_or_bins: usize,
    /// Neighbor counts collapsed to the order of `k`: the pair is close to
    /// functionally dependent and the estimate is resolution-limited.
    pub near_singular: bool,
}

/// Strict neighbor counts in one marginal space.
enum Marginal<'a> {
    Sorted(Vec<f64>),
    Tree(KdTree<'a>, &'a SampleSet),
}

impl<'a> Marginal<'a> {
    fn new(s: &'a SampleSet) -> Self {
        if s.dim() == 1 {
            let mut v = s.points().to_vec();
            v.sort_by(f64::total_cmp);
            Marginal::Sorted(v)
        } else {
            Marginal::Tree(KdTree::new(s.points(), s.dim()), s)
        }
    }

    /// Points other than `i` strictly within `r` (max norm).
    fn count(&self, i: usize, r: f64, s: &SampleSet) -> usize {
        match self {
            Marginal::Sorted(v) => {
                let x = s.point(i)[0];
                let hi = v.partition_point(|&u| u < x + r);
                let lo = v.partition_point(|&u| u <= x - r);
                hi.saturating_sub(lo).saturating_sub(1)
            }
            Marginal::Tree(t, own) => t.count_within(own.point(i), r, Metric::Chebyshev).saturating_sub(1),
        }
    }
}

/// Kraskov-Stoegbauer-Grassberger estimator (first algorithm, max norm).
/// Coordinates are standardized first; the max norm otherwise lets the
/// marginal with the larger spread decide every neighborhood.
pub fn mutual_info_knn(x: &SampleSet, y: &SampleSet, k: usize) -> Result<MIEstimate> {
    if x.len() != y.len() {
        return Err(Error::invalid("y", format!("sample counts differ: {} vs {}", x.len(), y.len())));
    }
    let (x, y) = (&x.standardized(), &y.standardized());
    let n = x.len();
    if k == 0 || n < k + 1 {
        return Err(Error::invalid("k", format!("need 1 <= k < N, got k = {k}, N = {n}")));
    }
    let mut joint = x.join(y)?;
    let mut eps = kth_distances(&joint, k, Metric::Chebyshev);
    let (mut xs, mut ys) = (x.clone(), y.clone());
    if eps.iter().any(|&e| e == 0.0) {
        joint = joint.jittered(&mut RngStream::new(JITTER_SEED, 1));
        eps = kth_distances(&joint, k, Metric::Chebyshev);
        if eps.iter().any(|&e| e == 0.0) {
            return Err(Error::DegenerateSample("duplicate joint points survive jitter".into()));
        }
        let (dx, dy) = (x.dim(), y.dim());
        let split = |lo: usize, w: usize| {
            let mut p = Vec::with_capacity(n * w);
            for i in 0..n {
                p.extend_from_slice(&joint.point(i)[lo..lo + w]);
            }
            SampleSet { d: w, points: p }
        };
        xs = split(0, dx);
        ys = split(dx, dy);
    }
    let mx = Marginal::new(&xs);
    let my = Marginal::new(&ys);
    let counts: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| (mx.count(i, eps[i], &xs), my.count(i, eps[i], &ys)))
        .collect();
    let base = digamma_pos(k as f64) + digamma_pos(n as f64);
    let terms: Vec<f64> = counts
        .iter()
        .map(|&(a, b)| base - digamma_pos(a as f64 + 1.0) - digamma_pos(b as f64 + 1.0))
        .collect();
    let value = pairwise_sum(&terms) / n as f64;
    let stderr = (crate::numerics::variance(&terms) / n as f64).sqrt();
    let mut widest: Vec<usize> = counts.iter().map(|&(a, b)| a.max(b)).collect();
    let mid = widest.len() / 2;
    let median = *widest.select_nth_unstable(mid).1;
    Ok(MIEstimate {
        value,
        stderr,
        estimator: Estimator::KnnKraskov,
        k_or_bins: k,
        near_singular: median <= 2 * k,
    })
}

/// Plug-in MI of two scalars on equal-mass bins.
pub fn mutual_info_histogram(x: &[f64], y: &[f64], bins: usize) -> Result<MIEstimate> {
    if x.len() != y.len() {
        return Err(Error::invalid("y", "sample counts differ"));
    }
    if bins < 2 || x.len() < bins {
        return Err(Error::invalid("bins", "need 2 <= bins <= N"));
    }
    let n = x.len();
    let rank_bins = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        let mut out = vec![0usize; n];
        for (r, &i) in idx.iter().enumerate() {
            out[i] = r * bins / n;
        }
        out
    };
    let (bx, by) = (rank_bins(x), rank_bins(y));
    let mut joint = vec![0u64; bins * bins];
    let (mut px, mut py) = (vec![0u64; bins], vec![0u64; bins]);
    for i in 0..n {
        joint[bx[i] * bins + by[i]] += 1;
        px[bx[i]] += 1;
        py[by[i]] += 1;
    }
    let nf = n as f64;
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let c = joint[bx[i] * bins + by[i]] as f64;
        terms.push((c * nf / (px[bx[i]] as f64 * py[by[i]] as f64)).ln());
    }
    let value = pairwise_sum(&terms) / nf;
    Ok(MIEstimate {
        value,
        stderr: (crate::numerics::variance(&terms) / nf).sqrt(),
        estimator: Estimator::Histogram,
        k_or_bins: bins,
        near_singular: false,
    })
}

/// Radial law used to lift directions into the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialLaw {
    /// `U ~ uniform(0, 1)`; the lifted density is singular at the origin.
    Uniform,
    /// `U` with density `d u^{d-1}`; uniform directions lift to the uniform ball.
    Volume,
}

const UNIT_TOL: f64 = 1e-9;

fn check_unit(directions: &SampleSet) -> Result<()> {
    for (i, r) in directions.norms().iter().enumerate() {
        if (r - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid("directions", format!("point {i} has norm {r}, expected 1")));
        }
    }
    Ok(())
}

/// Entropy of unit-norm points with respect to the surface measure of the
/// sphere, via `h_sigma = h(W) - h(U) - m_s E log U` with `W = U * direction`.
pub fn spherical_entropy_with(
    directions: &SampleSet,
    stream: &mut RngStream,
    k: usize,
    law: RadialLaw,
) -> Result<f64> {
    check_unit(directions)?;
    let d = directions.dim();
    let ms = (d - 1) as f64;
    let mut w = Vec::with_capacity(directions.points().len());
    for i in 0..directions.len() {
        let u = match law {
            RadialLaw::Uniform => stream.uniform_open0(),
            RadialLaw::Volume => stream.uniform_open0().powf(1.0 / d as f64),
        };
        w.extend(directions.point(i).iter().map(|v| u * v));
    }
    let hw = entropy_knn(&SampleSet { d, points: w }, k)?;
    Ok(match law {
        // h(U) = 0, E log U = -1
        RadialLaw::Uniform => hw + ms,
        // h(U) = -log d + (d-1)/d, E log U = -1/d
        RadialLaw::Volume => hw + (d as f64).ln(),
    })
}

pub const DEFAULT_K: usize = 4;

pub fn spherical_entropy(directions: &SampleSet, stream: &mut RngStream) -> Result<f64> {
    spherical_entropy_with(directions, stream, DEFAULT_K, RadialLaw::Uniform)
}

/// `(1 / 2 pi e) exp(2 h_sigma / m_s)`.
pub fn entropy_power_direction(directions: &SampleSet, stream: &mut RngStream) -> Result<f64> {
    let ms = (directions.dim() - 1) as f64;
    let h = spherical_entropy(directions, stream)?;
    Ok((2.0 * h / ms).exp() / (std::f64::consts::TAU * std::f64::consts::E))
}

/// How the conditional spherical entropy `h_sigma(X^ | |X|)` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Directions independent of the norm: condition dropped.
    Isotropic,
    /// Equal-count norm bins, spherical entropy averaged over bins.
    NormBins(usize),
}

/// The four terms of `h(X) = h(|X|) + h_sigma(X^ | |X|) + m_s E log |X|` and the residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub joint: f64,
    pub norm_entropy: f64,
    pub spherical: f64,
    pub mean_log_norm: f64,
    pub residual: f64,
}

pub fn verify_entropy_identity(
    samples: &SampleSet,
    conditioning: Conditioning,
    k: usize,
    stream: &mut RngStream,
) -> Result<IdentityReport> {
    let d = samples.dim();
    if d < 2 {
        return Err(Error::invalid("samples", "needs at least one complex coordinate"));
    }
    let joint = entropy_knn(samples, k)?;
    let norms = samples.norms();
    if norms.iter().any(|&r| r == 0.0) {
        return Err(Error::DegenerateSample("zero vector has no direction".into()));
    }
    let norm_entropy = entropy_knn(&SampleSet::from_scalars(norms.clone())?, k)?;
    let logs: Vec<f64> = norms.iter().map(|r| r.ln()).collect();
    let mean_log_norm = mean(&logs);
    let dirs = |idx: &[usize]| {
        let mut p = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            p.extend(samples.point(i).iter().map(|v| v / norms[i]));
        }
        SampleSet { d, points: p }
    };
    let spherical = match conditioning {
        Conditioning::Isotropic => {
            let all: Vec<usize> = (0..samples.len()).collect();
            spherical_entropy_with(&dirs(&all), stream, k, RadialLaw::Uniform)?
        }
        Conditioning::NormBins(b) => {
            if b == 0 || samples.len() < b * (k + 1) {
                return Err(Error::invalid("bins", "too many norm bins for the sample size"));
            }
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.sort_by(|&a, &c| norms[a].total_cmp(&norms[c]).then(a.cmp(&c)));
            let n = order.len();
            let mut acc = 0.0;
            for j in 0..b {
                let chunk = &order[j * n / b..(j + 1) * n / b];
                acc += chunk.len() as f64
                    * spherical_entropy_with(&dirs(chunk), stream, k, RadialLaw::Uniform)?;
            }
            acc / n as f64
        }
    };
    let ms = (d - 1) as f64;
    Ok(IdentityReport {
        joint,
        norm_entropy,
        spherical,
        mean_log_norm,
        residual: joint - (norm_entropy + spherical + ms * mean_log_norm),
    })
}

/// Binary entropy in nats.
pub fn binary_entropy(lambda: f64) -> f64 {
    let f = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.ln() };
    f(lambda) + f(1.0 - lambda)
}

/// `(lambda R1 + (1 - lambda) R2, lower + H(lambda))`.
pub fn rate_interpolation_bounds(r1: f64, r2: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", format!("must lie in [0, 1], got {lambda}")));
    }
    if !(r1 >= 0.0 && r2 >= 0.0) || !r1.is_finite() || !r2.is_finite() {
        return Err(Error::invalid("rates", "must be finite and non-negative"));
    }
    let lower = lambda * r1 + (1.0 - lambda) * r2;
    Ok((lower, lower + binary_entropy(lambda)))
}

/// Exact `I(X; Y)` in nats for input law `px` and channel rows `w[x][y]`.
pub fn discrete_mutual_information(px: &[f64], w: &[Vec<f64>]) -> Result<f64> {
    if px.len() != w.len() || w.is_empty() {
        return Err(Error::invalid("w", "one channel row per input symbol"));
    }
    let ny = w[0].len();
    if w.iter().any(|r| r.len() != ny) {
        return Err(Error::invalid("w", "rows must have equal length"));
    }
    let mut py = vec![0.0; ny];
    for (p, row) in px.iter().zip(w) {
        for (q, v) in py.iter_mut().zip(row) {
            *q += p * v;
        }
    }
    let mut mi = 0.0;
    for (p, row) in px.iter().zip(w) {
        for (v, q) in row.iter().zip(&py) {
            if *p > 0.0 && *v > 0.0 {
                mi += p * v * (v / q).ln();
            }
        }
    }
    Ok(mi)
}

/// `log(1 + S^2 / (n m D))` with the default peak parameter `S^2 = 2 n kappa^2`.
pub fn bounded_region_rate_certificate(kappa: f64, n: usize, m: usize, d: f64) -> Result<f64> {
    bounded_region_rate_certificate_with(2.0 * n as f64 * kappa * kappa, n, m, d)
}

pub fn bounded_region_rate_certificate_with(s_sq: f64, n: usize, m: usize, d: f64) -> Result<f64> {
    if !(s_sq >= 0.0) || n == 0 || m == 0 || !(d > 0.0) {
        return Err(Error::invalid("certificate", "needs S^2 >= 0, n, m >= 1, D > 0"));
    }
    Ok((s_sq / (n as f64 * m as f64 * d)).ln_1p())
}

/// Membership in the bounded region: every real coordinate below `kappa` in magnitude.
pub fn in_bounded_region(x: &ComplexVector, kappa: f64) -> bool {
    x.iter().all(|z| z.re.abs() < kappa && z.im.abs() < kappa)
}
