use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual loss of the linear step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossProfile {
    /// Frequency-flat loss `alpha0` (1/km).
    Constant { alpha0: f64 },
    /// Raised-cosine channel filter `alpha0 * (1 + depth * cos(2 pi f / period))`.
    /// `period` defaults to the grid bandwidth `1 / time_step`.
    NonConstant {
        alpha0: f64,
        depth: f64,
        #[serde(default)]
        period: Option<f64>,
    },
}

impl Default for LossProfile {
    fn default() -> Self {
        LossProfile::Constant { alpha0: 0.0 }
    }
}

impl LossProfile {
    pub fn lossless() -> Self {
        LossProfile::Constant { alpha0: 0.0 }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, LossProfile::Constant { .. })
    }

    pub fn alpha0(&self) -> f64 {
        match *self {
            LossProfile::Constant { alpha0 } | LossProfile::NonConstant { alpha0, .. } => alpha0,
        }
    }

    /// Loss `alpha_hat(f)` at frequency `f` on a grid with step `time_step`.
    pub fn alpha_at(&self, f: f64, time_step: f64) -> f64 {
        match *self {
            LossProfile::Constant { alpha0 } => alpha0,
            LossProfile::NonConstant {
                alpha0,
                depth,
                period,
            } => {
                let w = period.unwrap_or(1.0 / time_step);
                alpha0 * (1.0 + depth * (std::f64::consts::TAU * f / w).cos())
            }
        }
    }

    /// Dimensionless shape `alpha_hat(f) / alpha0` on the grid frequencies.
    pub fn shape(&self, freqs: &[f64], time_step: f64) -> Vec<f64> {
        match *self {
            LossProfile::Constant { .. } => vec![1.0; freqs.len()],
            LossProfile::NonConstant { alpha0, .. } => {
                if alpha0 == 0.0 {
                    return vec![1.0; freqs.len()];
                }
                freqs
                    .iter()
                    .map(|&f| self.alpha_at(f, time_step) / alpha0)
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let alpha0 = self.alpha0();
        if !(alpha0 >= 0.0) || !alpha0.is_finite() {
            return Err(Error::param("loss.alpha0", format!("must be finite and >= 0, got {alpha0}")));
        }
        if let LossProfile::NonConstant { depth, period, .. } = *self {
            if !(0.0..=1.0).contains(&depth) {
                return Err(Error::param("loss.depth", format!("must lie in [0, 1], got {depth}")));
            }
            if let Some(w) = period {
                if !(w > 0.0) || !w.is_finite() {
                    return Err(Error::param("loss.period", format!("must be positive, got {w}")));
                }
            }
        }
        Ok(())
    }
}

fn default_sub_steps() -> usize {
    64
}

fn default_time_step() -> f64 {
    1.0
}

/// Physical and discretization constants of the channel.
///
/// `beta[i]` is the dispersion coefficient of order `i + 2` (ps^p/km).
/// `noise_density` is the per-entry noise variance injected by one
/// nonlinear step of length `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParams {
    pub n: usize,
    pub gamma: f64,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub loss: LossProfile,
    pub epsilon: f64,
    #[serde(default = "default_sub_steps", alias = "L")]
    pub sub_steps: usize,
    pub m_units: usize,
    pub noise_density: f64,
    #[serde(default = "default_time_step")]
    pub time_step: f64,
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", format!("must be >= 2, got {}", self.n)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::param("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        for (i, b) in self.beta.iter().enumerate() {
            if !b.is_finite() {
                return Err(Error::param(format!("beta[{i}]"), "must be finite"));
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::param("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if self.sub_steps < 1 {
            return Err(Error::param("sub_steps", "must be >= 1"));
        }
        if self.m_units < 1 {
            return Err(Error::param("m_units", "must be >= 1"));
        }
        if !(self.noise_density >= 0.0) || !self.noise_density.is_finite() {
            return Err(Error::param(
                "noise_density",
                format!("must be finite and >= 0, got {}", self.noise_density),
            ));
        }
        if !(self.time_step > 0.0) || !self.time_step.is_finite() {
            return Err(Error::param("time_step", format!("must be positive, got {}", self.time_step)));
        }
        self.loss.validate()
    }

    /// Sub-segment length `mu = epsilon / L`.
    pub fn mu(&self) -> f64 {
        self.epsilon / self.sub_steps as f64
    }

    /// Noise-bearing steps in the whole cascade, `m = 2 * m_units`.
    pub fn noise_steps(&self) -> usize {
        2 * self.m_units
    }

    /// Wrapped frequency grid `k / (n dt)`, negative for `k >= n/2`.
    pub fn frequency_grid(&self) -> Vec<f64> {
        let n = self.n;
        let df = 1.0 / (n as f64 * self.time_step);
        (0..n)
            .map(|k| {
                let k = if k >= n.div_ceil(2) { k as f64 - n as f64 } else { k as f64 };
                k * df
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> FiberParams {
        FiberParams {
            n: 4,
            gamma: 1.0,
            beta: vec![-1.0],
            loss: LossProfile::lossless(),
            epsilon: 1.0,
            sub_steps: 8,
            m_units: 2,
            noise_density: 0.1,
            time_step: 1.0,
        }
    }

    #[test]
    fn negative_gamma_names_the_field() {
        let p = FiberParams { gamma: -1.0, ..base() };
        match p.validate() {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "gamma"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_is_wrapped() {
        let p = base();
        assert_eq!(p.frequency_grid(), vec![0.0, 0.25, -0.5, -0.25]);
        let p = FiberParams { n: 3, ..base() };
        let g = p.frequency_grid();
        assert!((g[2] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn json_defaults_and_alias() {
        let p: FiberParams = serde_json::from_str(
            r#"{"n":2,"gamma":1.0,"epsilon":1.0,"m_units":1,"noise_density":0.0,
                "loss":{"kind":"constant","alpha0":0.2}}"#,
        )
        .unwrap();
        assert_eq!(p.sub_steps, 64);
        let q: FiberParams = serde_json::from_str(
            r#"{"n":2,"gamma":1.0,"epsilon":1.0,"m_units":1,"noise_density":0.0,"L":5}"#,
        )
        .unwrap();
        assert_eq!(q.sub_steps, 5);
        assert!(serde_json::from_str::<FiberParams>(
            r#"{"n":2,"gamma":1.0,"epsilon":1.0,"m_units":1,"noise_density":0.0,"bogus":1}"#
        )
        .is_err());
    }

    #[test]
    fn raised_cosine_shape() {
        let loss = LossProfile::NonConstant {
            alpha0: 0.2,
            depth: 0.5,
            period: None,
        };
        let s = loss.shape(&[0.0, -0.5], 1.0);
        assert!((s[0] - 1.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
    }
}
