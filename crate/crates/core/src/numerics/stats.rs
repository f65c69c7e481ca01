//! Distribution functions and goodness-of-fit statistics.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// CDF of the noncentral chi-square law with `dof` degrees of freedom and
/// noncentrality `lambda`, as a Poisson(lambda/2) mixture of central laws.
/// The mixture is summed outward from the Poisson mode.
pub fn noncentral_chi2_cdf(x: f64, dof: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return gamma_lr(dof / 2.0, x / 2.0);
    }
    let half = lambda / 2.0;
    let mode = half.floor();
    let log_weight = |j: f64| -half + j * half.ln() - ln_gamma(j + 1.0);
    let mut total = log_weight(mode).exp() * gamma_lr(dof / 2.0 + mode, x / 2.0);
    let mut j = mode + 1.0;
    loop {
        let w = log_weight(j).exp();
        total += w * gamma_lr(dof / 2.0 + j, x / 2.0);
        if w < 1e-17 && j > half {
            break;
        }
        j += 1.0;
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = log_weight(j).exp();
        total += w * gamma_lr(dof / 2.0 + j, x / 2.0);
        if w < 1e-17 {
            break;
        }
        j -= 1.0;
    }
    total.clamp(0.0, 1.0)
}

/// Survival function of the central chi-square law.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(dof / 2.0, x / 2.0)
    }
}

/// Asymptotic Kolmogorov survival `Q(t) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Outcome of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against a continuous CDF. Sorts `samples` in place.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "empty sample"));
    }
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max(f - lo).max(hi - f);
    }
    let sn = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(d * (sn + 0.12 + 0.11 / sn)),
    })
}

/// Two-sample KS test. Sorts both slices in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("samples", "empty sample"));
    }
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(d * (ne + 0.12 + 0.11 / ne)),
    })
}

/// Pearson chi-square goodness of fit; `expected` are probabilities summing
/// to one. Returns `(statistic, dof, p_value)`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<(f64, usize, f64)> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::invalid("observed", "needs >= 2 bins matching expected"));
    }
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected) {
        let e = p * n;
        if e <= 0.0 {
            return Err(Error::invalid("expected", "bin with zero expected count"));
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let dof = observed.len() - 1;
    Ok((stat, dof, chi2_sf(stat, dof as f64)))
}
