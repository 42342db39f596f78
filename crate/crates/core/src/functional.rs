//! The penalized energy
//!
//! ```text
//! Φ_ℏ(u) = (ℏ²/2)∫|∇u|² + (1/2)∫V u² − ∫G(x,u)
//! ```
//!
//! on a grid, its L² gradient, the quadratic form `Q_ℏ`, and the maximizer
//! of `t ↦ Φ_ℏ(tu)` along a ray.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{boundary_band, dot, laplacian_into, Grid, GridError, ScalarField};
use crate::model::{PenalizedNonlinearity, ProblemSpec};

/// Bracket ceiling for the ray maximizer.
const RAY_T_MAX: f64 = 1e9;
const RAY_T_MIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("ℏ must be positive and finite, got {0}")]
    Hbar(f64),
    #[error("field is not positive anywhere; the Nehari ray is undefined")]
    NonPositive,
    #[error("ray has no interior maximum: ψ(t) > 0 up to t = {t_max:e}")]
    NoInteriorMaximum { t_max: f64 },
    #[error("ray maximizer fell below t = {t_min:e}")]
    Degenerate { t_min: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Node-wise coefficients of one discretized problem: the sampled `V`, `Γ`,
/// `χ_Λ`, the nonlinearity, the anchor point, and the band standing in for ∂Λ.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    grid: Arc<Grid>,
    potential: Vec<f64>,
    gamma: Vec<f64>,
    inside: Vec<bool>,
    nonlinearity: PenalizedNonlinearity,
    anchor: Vec<f64>,
    band: Option<Vec<usize>>,
}

impl DiscreteProblem {
    /// The penalized problem: `g = Γf` inside Λ and `Γ˜f` outside.
    /// `band_width` defaults to the largest grid spacing.
    pub fn penalized(
        spec: &ProblemSpec,
        pen: &PenalizedNonlinearity,
        grid: Arc<Grid>,
        band_width: Option<f64>,
    ) -> Result<Self, FunctionalError> {
        let points = grid.points();
        let band = boundary_band(&grid, spec.region(), band_width.unwrap_or_else(|| grid.max_spacing()))?;
        Ok(Self {
            potential: points.iter().map(|x| spec.v(x)).collect(),
            gamma: points.iter().map(|x| spec.gamma(x)).collect(),
            inside: points.iter().map(|x| spec.region().contains(x)).collect(),
            nonlinearity: pen.clone(),
            anchor: spec.anchor().to_vec(),
            band: Some(band),
            grid,
        })
    }

    /// Arbitrary node data. Setting every `inside` flag makes `g = Γf`
    /// globally, which is how the un-penalized limit problems are posed.
    pub fn from_parts(
        grid: Arc<Grid>,
        potential: Vec<f64>,
        gamma: Vec<f64>,
        inside: Vec<bool>,
        nonlinearity: PenalizedNonlinearity,
        anchor: Vec<f64>,
        band: Option<Vec<usize>>,
    ) -> Result<Self, GridError> {
        let n = grid.len();
        for len in [potential.len(), gamma.len(), inside.len()] {
            if len != n {
                return Err(GridError::Length { expected: n, got: len });
            }
        }
        Ok(Self { grid, potential, gamma, inside, nonlinearity, anchor, band })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn nonlinearity(&self) -> &PenalizedNonlinearity {
        &self.nonlinearity
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn band(&self) -> Option<&[usize]> {
        self.band.as_deref()
    }

    pub fn potential_range(&self) -> (f64, f64) {
        self.potential
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// `g(x_j, u_j)` at every node.
    pub fn g_field(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, &uj)| self.nonlinearity.g_eval(self.gamma[j], self.inside[j], uj))
            .collect()
    }

    /// `Γ(x_j) f(u_j)` at every node: the right-hand side of the original equation.
    pub fn original_rhs(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, &uj)| self.nonlinearity.g_eval(self.gamma[j], true, uj))
            .collect()
    }

    /// Applies `−ℏ²Δ_h + V` to `u`.
    pub fn apply_linear(&self, hbar: f64, u: &[f64], out: &mut [f64]) {
        laplacian_into(&self.grid, u, out);
        let h2 = hbar * hbar;
        for ((o, &uj), &v) in out.iter_mut().zip(u).zip(&self.potential) {
            *o = -h2 * *o + v * uj;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `(ℏ²/2)∫|∇u|²`.
    pub kinetic: f64,
    /// `(1/2)∫V u²`.
    pub potential: f64,
    /// `∫G(x,u)`.
    pub nonlinear: f64,
    pub total: f64,
    /// `Q_ℏ(u) = ∫ℏ²|∇u|² + V u²`.
    #[serde(rename = "Q")]
    pub q: f64,
}

fn check_hbar(hbar: f64) -> Result<(), FunctionalError> {
    if hbar > 0.0 && hbar.is_finite() {
        Ok(())
    } else {
        Err(FunctionalError::Hbar(hbar))
    }
}

/// Components of `Φ_ℏ(u)`. The gradient term uses the discrete Dirichlet
/// form `−∫u·Δ_h u`.
pub fn energy(u: &ScalarField, hbar: f64, dp: &DiscreteProblem) -> EnergyBreakdown {
    let vals = u.values();
    let dv = dp.grid.cell_volume();
    let mut lap = vec![0.0; vals.len()];
    laplacian_into(&dp.grid, vals, &mut lap);
    let kinetic = 0.5 * hbar * hbar * (-dv * dot(vals, &lap));
    let potential = 0.5 * dv * vals.iter().zip(&dp.potential).map(|(u, v)| v * u * u).sum::<f64>();
    let nonlinear = dv
        * vals
            .iter()
            .enumerate()
            .map(|(j, &uj)| dp.nonlinearity.G_eval(dp.gamma[j], dp.inside[j], uj))
            .sum::<f64>();
    EnergyBreakdown {
        kinetic,
        potential,
        nonlinear,
        total: kinetic + potential - nonlinear,
        q: 2.0 * (kinetic + potential),
    }
}

/// `Q_ℏ(u)` alone.
pub fn quadratic_form(u: &[f64], hbar: f64, dp: &DiscreteProblem) -> f64 {
    let mut au = vec![0.0; u.len()];
    dp.apply_linear(hbar, u, &mut au);
    dp.grid.cell_volume() * dot(u, &au)
}

/// Node-wise `−ℏ²Δ_h u + V u − g(·,u)`: the L² gradient of `Φ_ℏ` under the
/// quadrature inner product.
pub fn residual(u: &ScalarField, hbar: f64, dp: &DiscreteProblem) -> ScalarField {
    let vals = u.values();
    let mut r = vec![0.0; vals.len()];
    dp.apply_linear(hbar, vals, &mut r);
    for (j, rj) in r.iter_mut().enumerate() {
        *rj -= dp.nonlinearity.g_eval(dp.gamma[j], dp.inside[j], vals[j]);
    }
    ScalarField::from_values_unchecked(u.grid().clone(), r)
}

/// `ψ(t) = Q − (1/t)∫g(x, tu)u`, decreasing in `t`.
fn ray_psi(q: f64, t: f64, u: &[f64], dp: &DiscreteProblem) -> f64 {
    let mut s = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        if uj > 0.0 {
            s += dp.nonlinearity.g_eval(dp.gamma[j], dp.inside[j], t * uj) * uj;
        }
    }
    q - dp.grid.cell_volume() * s / t
}

/// The `t* > 0` maximizing `t ↦ Φ_ℏ(tu)`, found as the root of `ψ` by
/// bracketing and bisection to relative width 1e−12.
pub fn nehari_scale(u: &ScalarField, hbar: f64, dp: &DiscreteProblem) -> Result<f64, FunctionalError> {
    check_hbar(hbar)?;
    let vals = u.values();
    if !vals.iter().any(|&v| v > 0.0) {
        return Err(FunctionalError::NonPositive);
    }
    let q = quadratic_form(vals, hbar, dp);
    let psi = |t: f64| ray_psi(q, t, vals, dp);

    let (mut lo, mut hi);
    if psi(1.0) > 0.0 {
        lo = 1.0;
        hi = 2.0;
        while psi(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > RAY_T_MAX {
                return Err(FunctionalError::NoInteriorMaximum { t_max: RAY_T_MAX });
            }
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while psi(lo) <= 0.0 {
            hi = lo;
            lo *= 0.5;
            if lo < RAY_T_MIN {
                return Err(FunctionalError::Degenerate { t_min: RAY_T_MIN });
            }
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
