use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Built-in coefficient profiles for V and Γ.
///
/// `Cosine` evaluates `base + amplitude·(1 − mean_i cos(2π(x_i − c_i)/period))`,
/// so it equals `base` at `center` and is `period`-periodic along every axis.
/// `GaussianWell` is `base − depth·exp(−|x − c|²/(2·width²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Constant {
        value: f64,
    },
    Cosine {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        period: f64,
    },
    GaussianWell {
        base: f64,
        depth: f64,
        center: Vec<f64>,
        width: f64,
    },
}

impl Coefficient {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::Cosine { base, amplitude, center, period } => {
                let mean_cos = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (2.0 * PI * (xi - ci) / period).cos())
                    .sum::<f64>()
                    / x.len() as f64;
                base + amplitude * (1.0 - mean_cos)
            }
            Coefficient::GaussianWell { base, depth, center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                base - depth * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    /// Declared period, if the profile is periodic. Constants are periodic
    /// for every period and report `None` here; see [`Coefficient::is_periodic`].
    pub fn period(&self) -> Option<f64> {
        match self {
            Coefficient::Cosine { period, .. } => Some(*period),
            _ => None,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Coefficient::Constant { .. } | Coefficient::Cosine { .. })
    }

    /// Dimension implied by the parameters, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Coefficient::Constant { .. } => None,
            Coefficient::Cosine { center, .. } | Coefficient::GaussianWell { center, .. } => Some(center.len()),
        }
    }

    pub fn check_parameters(&self) -> Result<(), String> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite"))
            }
        };
        match self {
            Coefficient::Constant { value } => finite(*value, "value"),
            Coefficient::Cosine { base, amplitude, center, period } => {
                finite(*base, "base")?;
                finite(*amplitude, "amplitude")?;
                if !(*period > 0.0 && period.is_finite()) {
                    return Err("period must be positive".into());
                }
                center.iter().try_for_each(|c| finite(*c, "center"))
            }
            Coefficient::GaussianWell { base, depth, center, width } => {
                finite(*base, "base")?;
                finite(*depth, "depth")?;
                if !(*width > 0.0 && width.is_finite()) {
                    return Err("width must be positive".into());
                }
                center.iter().try_for_each(|c| finite(*c, "center"))
            }
        }
    }
}
