//! Problem data for `−ℏ²Δu + V(x)u = Γ(x)f(u)` and the penalized
//! nonlinearity built from it.

mod coefficients;
mod conditions;
mod nonlinearity;
mod penalized;

pub use coefficients::Coefficient;
pub use conditions::{
    check_g_properties, check_problem_conditions, ConditionOutcome, ConditionReport, Counterexample,
    SampleLattice,
};
pub use nonlinearity::{BaseKind, NonlinearitySpec, PowerTerm};
pub use penalized::{compute_truncation_level, LocalNonlinearity, PenalizedNonlinearity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError, Region};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("exponents must satisfy 2 < θ ≤ p < ∞, got θ = {theta}, p = {p}")]
    Exponents { theta: f64, p: f64 },
    #[error("invalid nonlinearity: {0}")]
    Nonlinearity(String),
    #[error("invalid penalization: {0}")]
    Penalization(String),
    #[error("nonlinearity never reaches slope α/k = {target}")]
    NoTruncationLevel { target: f64 },
    #[error("invalid coefficient {name}: {reason}")]
    Coefficient { name: &'static str, reason: String },
    #[error("anchor point: {0}")]
    Anchor(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Which coefficient carries the concentration mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Γ periodic; V has a strict local minimum in Λ where Γ is maximal.
    Lambda1,
    /// V periodic; Γ has a strict local maximum in Λ where V is minimal.
    Lambda2,
}

/// Raw problem description before sampling on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDefinition {
    pub potential: Coefficient,
    pub gamma: Coefficient,
    pub region: Region,
    pub nonlinearity: NonlinearitySpec,
    pub case: Case,
    pub anchor: Vec<f64>,
    /// Override for the lower bound of V; defaults to its sampled minimum.
    pub alpha: Option<f64>,
    /// Override for the lower bound of Γ; defaults to its sampled minimum.
    pub beta: Option<f64>,
    /// Rescale Γ to unit sup norm, moving the factor into f.
    pub normalize_gamma: bool,
    /// Period declared for the periodic coefficient (Γ in case Λ₁, V in Λ₂).
    pub declared_period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    potential: Coefficient,
    gamma: Coefficient,
    gamma_scale: f64,
    alpha: f64,
    beta: f64,
    region: Region,
    nonlinearity: NonlinearitySpec,
    case: Case,
    anchor: Vec<f64>,
    declared_period: Option<f64>,
    v0: f64,
    gamma0: f64,
}

impl ProblemDefinition {
    /// Samples the coefficients on `grid` to fix α, β and the Γ
    /// normalization. Only structural problems are errors here; the
    /// analytic conditions are reported by [`check_problem_conditions`].
    pub fn build(self, grid: &Grid) -> Result<ProblemSpec, ModelError> {
        self.nonlinearity.validate()?;
        self.region.validate_within(grid)?;
        for (name, c) in [("V", &self.potential), ("Gamma", &self.gamma)] {
            c.check_parameters().map_err(|reason| ModelError::Coefficient { name, reason })?;
            if let Some(d) = c.dim() {
                if d != grid.dim() {
                    return Err(ModelError::Coefficient {
                        name,
                        reason: format!("center has dimension {d}, grid has {}", grid.dim()),
                    });
                }
            }
        }
        if self.anchor.len() != grid.dim() {
            return Err(ModelError::Anchor(format!("expected {} coordinates", grid.dim())));
        }
        if !self.region.contains(&self.anchor) {
            return Err(ModelError::Anchor(format!("{:?} is not inside the region", self.anchor)));
        }

        let points = grid.points();
        let gamma_raw: Vec<f64> = points.iter().map(|x| self.gamma.eval(x)).collect();
        let v_samples: Vec<f64> = points.iter().map(|x| self.potential.eval(x)).collect();
        let gamma_max = gamma_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(self.gamma.eval(&self.anchor));
        let gamma_scale = if self.normalize_gamma {
            if !(gamma_max > 0.0) {
                return Err(ModelError::Coefficient {
                    name: "Gamma",
                    reason: "cannot normalize a nonpositive Γ".into(),
                });
            }
            gamma_max
        } else {
            1.0
        };
        let alpha = self.alpha.unwrap_or_else(|| v_samples.iter().cloned().fold(f64::INFINITY, f64::min));
        let beta = self
            .beta
            .unwrap_or_else(|| gamma_raw.iter().cloned().fold(f64::INFINITY, f64::min) / gamma_scale);

        let mut v0 = self.potential.eval(&self.anchor);
        let mut gamma0 = self.gamma.eval(&self.anchor) / gamma_scale;
        for (x, (v, g)) in points.iter().zip(v_samples.iter().zip(&gamma_raw)) {
            if self.region.contains(x) {
                v0 = v0.min(*v);
                gamma0 = gamma0.max(g / gamma_scale);
            }
        }

        Ok(ProblemSpec {
            potential: self.potential,
            gamma: self.gamma,
            gamma_scale,
            alpha,
            beta,
            region: self.region,
            nonlinearity: self.nonlinearity.scaled(gamma_scale),
            case: self.case,
            anchor: self.anchor,
            declared_period: self.declared_period,
            v0,
            gamma0,
        })
    }
}

impl ProblemSpec {
    pub fn v(&self, x: &[f64]) -> f64 {
        self.potential.eval(x)
    }

    /// Normalized Γ.
    pub fn gamma(&self, x: &[f64]) -> f64 {
        self.gamma.eval(x) / self.gamma_scale
    }

    pub fn potential(&self) -> &Coefficient {
        &self.potential
    }

    pub fn gamma_coefficient(&self) -> &Coefficient {
        &self.gamma
    }

    /// The factor Γ was divided by (and f multiplied by).
    pub fn gamma_scale(&self) -> f64 {
        self.gamma_scale
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// The nonlinearity after normalization.
    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn case(&self) -> Case {
        self.case
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn declared_period(&self) -> Option<f64> {
        self.declared_period
    }

    /// `V₀ = min_Λ V` over the anchor and the sampled nodes in Λ.
    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// `Γ₀ = max_Λ Γ` over the anchor and the sampled nodes in Λ.
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Penalization with the given k, or the default `2θ/(θ−2)`.
    pub fn penalize(&self, k: Option<f64>) -> Result<PenalizedNonlinearity, ModelError> {
        let k = k.unwrap_or_else(|| PenalizedNonlinearity::default_k(&self.nonlinearity));
        PenalizedNonlinearity::new(self.nonlinearity.clone(), self.alpha, k, self.region.clone())
    }
}
