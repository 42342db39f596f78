//! Positive critical points of `Φ_ℏ` by gradient flow in the `Q_ℏ` metric
//! with Nehari reprojection after every step.
//!
//! One outer step is
//!
//! ```text
//! r = −ℏ²Δ_h u + V u − g(·, u)
//! d = (−ℏ²Δ_h + V)⁻¹ r
//! u ← t*·(u − s d)₊        t* maximizes Φ_ℏ along the ray
//! ```
//!
//! with `s` halved until `Φ_ℏ` does not increase. Near the soliton the
//! error contracts by about 1/2 per step at `s = 1`.

mod cg;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::{energy, nehari_scale, residual, DiscreteProblem, EnergyBreakdown, FunctionalError};
use crate::grid::{positive_part, Grid, ScalarField};

pub(crate) use cg::LinearSolver;

/// Absolute slack allowed in the energy-decrease test.
const ENERGY_SLACK: f64 = 1e-12;
/// Boundary values above this fraction of the maximum trigger a warning.
const BOUNDARY_LEAK: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver parameters: {0}")]
    Params(String),
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("{context}: {source}")]
    Functional {
        context: &'static str,
        #[source]
        source: FunctionalError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub max_outer: usize,
    /// Stop when `‖r‖/‖u‖ ≤ tol_residual`.
    pub tol_residual: f64,
    /// Initial descent step, also the ceiling for step recovery.
    pub step: f64,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub seed: u64,
    /// Number of starts; the first is always the unperturbed bump.
    pub starts: usize,
    /// Bump width in units of ℏ.
    pub width_factor: f64,
    pub backtrack: f64,
    pub recovery: f64,
    /// Below this step the iteration is declared stalled.
    pub min_step: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_outer: 400,
            tol_residual: 1e-9,
            step: 1.0,
            cg_tol: 1e-10,
            cg_max: 500,
            seed: 0,
            starts: 1,
            width_factor: 1.0,
            backtrack: 0.5,
            recovery: 1.1,
            min_step: 1e-10,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Params(msg));
        if self.max_outer < 1 {
            return bad("max_outer must be at least 1".into());
        }
        if !(self.tol_residual > 0.0) {
            return bad(format!("tol_residual must be positive, got {}", self.tol_residual));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return bad(format!("step must lie in (0, 1], got {}", self.step));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) || self.cg_max < 1 {
            return bad("cg_tol must lie in (0, 1) and cg_max be at least 1".into());
        }
        if self.starts < 1 {
            return bad("starts must be at least 1".into());
        }
        if !(self.width_factor > 0.0 && self.width_factor.is_finite()) {
            return bad(format!("width_factor must be positive, got {}", self.width_factor));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.recovery >= 1.0) {
            return bad("backtrack must lie in (0, 1) and recovery be at least 1".into());
        }
        if !(self.min_step > 0.0 && self.min_step < self.step) {
            return bad("min_step must lie in (0, step)".into());
        }
        Ok(())
    }
}

/// One accepted outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub phi: f64,
    pub residual: f64,
    pub step: f64,
    pub min_u: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ScalarField,
    /// `Φ_ℏ(u)`.
    pub level: f64,
    pub breakdown: EnergyBreakdown,
    /// `‖r‖/‖u‖` at the returned iterate.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Maximum of `u` over the band standing in for ∂Λ; `None` without a band.
    pub m: Option<f64>,
    pub argmax_index: usize,
    pub argmax_point: Vec<f64>,
    pub argmax_value: f64,
    pub v_at_argmax: f64,
    pub gamma_at_argmax: f64,
    /// Ray maximizer of the returned iterate; 1 up to bisection width on the Nehari set.
    pub nehari_scale: f64,
    /// Largest value on nodes adjacent to the box boundary.
    pub boundary_value: f64,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// `exp(−|x − anchor|²/(2(wℏ)²))` with `w = width_factor`.
pub fn initial_guess(dp: &DiscreteProblem, hbar: f64, width_factor: f64) -> ScalarField {
    bump(dp.grid().clone(), dp.anchor(), width_factor * hbar)
}

fn bump(grid: Arc<Grid>, center: &[f64], width: f64) -> ScalarField {
    let center = center.to_vec();
    ScalarField::from_fn(grid, move |x| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        (-r2 / (2.0 * width * width)).exp()
    })
}

/// Solves `(−ℏ²Δ_h + V) z = rhs` to relative residual `cg_tol`.
pub fn cg_solve(
    hbar: f64,
    dp: &DiscreteProblem,
    rhs: &ScalarField,
    params: &SolverParams,
) -> Result<ScalarField, SolverError> {
    let out = LinearSolver::new(dp, hbar).solve(rhs.values(), params.cg_tol, params.cg_max)?;
    log::debug!("cg: {} iterations, relative residual {:e}", out.iterations, out.relative_residual);
    Ok(ScalarField::from_values_unchecked(rhs.grid().clone(), out.solution))
}

fn functional(context: &'static str) -> impl Fn(FunctionalError) -> SolverError {
    move |source| SolverError::Functional { context, source }
}

fn relative_residual(u: &ScalarField, hbar: f64, dp: &DiscreteProblem) -> (ScalarField, f64) {
    let r = residual(u, hbar, dp);
    let rel = r.norm() / u.norm();
    (r, rel)
}

/// Runs every start in `params` and keeps the lowest converged level, or
/// the lowest level overall if none converged.
pub fn solve(dp: &DiscreteProblem, hbar: f64, params: &SolverParams) -> Result<SolveResult, SolverError> {
    params.validate()?;
    let base = initial_guess(dp, hbar, params.width_factor);
    let mut best = solve_from(dp, hbar, params, &base)?;
    if params.starts > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 1..params.starts {
            let shift: Vec<f64> = dp.anchor().iter().map(|c| c + rng.gen_range(-0.25..0.25) * hbar).collect();
            let width = params.width_factor * hbar * rng.gen_range(0.5..2.0);
            let start = bump(dp.grid().clone(), &shift, width);
            match solve_from(dp, hbar, params, &start) {
                Ok(r) => {
                    let better = match (r.converged, best.converged) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => r.level < best.level,
                    };
                    if better {
                        best = r;
                    }
                }
                Err(e) => log::warn!("start discarded: {e}"),
            }
        }
    }
    Ok(best)
}

/// Single descent run from `initial`.
pub fn solve_from(
    dp: &DiscreteProblem,
    hbar: f64,
    params: &SolverParams,
    initial: &ScalarField,
) -> Result<SolveResult, SolverError> {
    params.validate()?;
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(functional("solve")(FunctionalError::Hbar(hbar)));
    }
    let linear = LinearSolver::new(dp, hbar);
    let mut u = positive_part(initial);
    let t = nehari_scale(&u, hbar, dp).map_err(functional("projecting the initial guess"))?;
    u = u.scaled(t);
    let mut phi = energy(&u, hbar, dp).total;
    let mut step = params.step;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let (mut r, mut rel) = relative_residual(&u, hbar, dp);
    trace.push(TraceEntry { phi, residual: rel, step, min_u: min_value(&u) });
    while iterations < params.max_outer {
        if rel <= params.tol_residual {
            converged = true;
            break;
        }
        let d = linear.solve(r.values(), params.cg_tol, params.cg_max)?.solution;
        let d = ScalarField::from_values_unchecked(u.grid().clone(), d);
        let accepted = loop {
            let candidate = positive_part(&u.axpy(-step, &d));
            if let Ok(t) = nehari_scale(&candidate, hbar, dp) {
                let candidate = candidate.scaled(t);
                let phi_c = energy(&candidate, hbar, dp).total;
                if phi_c <= phi + ENERGY_SLACK {
                    break Some((candidate, phi_c));
                }
            }
            step *= params.backtrack;
            if step < params.min_step {
                break None;
            }
        };
        let Some((next, phi_next)) = accepted else {
            log::warn!("descent stalled at ℏ = {hbar}: step fell below {:e}", params.min_step);
            break;
        };
        iterations += 1;
        u = next;
        phi = phi_next;
        (r, rel) = relative_residual(&u, hbar, dp);
        trace.push(TraceEntry { phi, residual: rel, step, min_u: min_value(&u) });
        step = (step * params.recovery).min(1.0);
    }
    if !converged && rel <= params.tol_residual {
        converged = true;
    }
    if !converged {
        log::warn!("ℏ = {hbar}: relative residual {rel:e} after {iterations} iterations");
    }
    finish(dp, hbar, u, rel, iterations, converged, trace)
}

fn min_value(u: &ScalarField) -> f64 {
    u.values().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn finish(
    dp: &DiscreteProblem,
    hbar: f64,
    u: ScalarField,
    residual_norm: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceEntry>,
) -> Result<SolveResult, SolverError> {
    let breakdown = energy(&u, hbar, dp);
    let nehari = nehari_scale(&u, hbar, dp).map_err(functional("final ray check"))?;
    let (argmax_index, argmax_value) = u.argmax();
    let m = dp.band().map(|band| band.iter().map(|&j| u.values()[j]).fold(0.0, f64::max));
    let boundary_value = u.boundary_max();
    if boundary_value > BOUNDARY_LEAK * argmax_value {
        log::warn!(
            "ℏ = {hbar}: solution reaches {boundary_value:e} next to the box boundary; enlarge the box"
        );
    }
    Ok(SolveResult {
        level: breakdown.total,
        breakdown,
        residual_norm,
        iterations,
        m,
        argmax_index,
        argmax_point: u.grid().point(argmax_index),
        argmax_value,
        v_at_argmax: dp.potential()[argmax_index],
        gamma_at_argmax: dp.gamma()[argmax_index],
        nehari_scale: nehari,
        boundary_value,
        converged,
        trace,
        u,
    })
}
