//! The `ℏ → 0` experiments: limit problems, sweeps over ℏ, certification
//! that a penalized solution solves the original equation, tail fits, and
//! the numerical forms of the concentration lemmas.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::functional::{residual, DiscreteProblem, FunctionalError};
use crate::grid::{Grid, GridError, ScalarField};
use crate::model::{Case, ModelError, PenalizedNonlinearity, ProblemSpec};
use crate::solver::{solve, solve_from, SolveResult, SolverError, SolverParams};

/// Fewest nodes a decay-fit window may contain.
const MIN_WINDOW_NODES: usize = 8;
/// Values at or below this are treated as underflow in a decay fit.
const DECAY_FLOOR: f64 = 1e-14;
const OUTSIDE_SLACK: f64 = 1e-8;
const COEFFICIENT_SLACK: f64 = 1e-10;
/// Limit solutions should be this small on the box boundary.
const LIMIT_BOUNDARY: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiclassicalError {
    #[error("invalid ℏ list: {0}")]
    HbarList(String),
    #[error("window under-resolved: {count} nodes in [{r1}, {r2}], need at least {MIN_WINDOW_NODES}")]
    WindowUnderResolved { count: usize, r1: f64, r2: f64 },
    #[error("invalid decay window [{r1}, {r2}]: need 0 < r1 < r2")]
    Window { r1: f64, r2: f64 },
    #[error("decay window contains a value {value:e} at or below {DECAY_FLOOR:e}")]
    WindowUnderflow { value: f64 },
    #[error("limit problem did not converge: relative residual {residual:e}")]
    LimitNotConverged { residual: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone)]
pub struct LimitResult {
    pub w: ScalarField,
    /// `c̲ = I₀(w)`.
    pub level: f64,
    pub case: Case,
    /// `min_Λ V`; the frozen potential in case Λ₁.
    pub v0: f64,
    /// `max_Λ Γ`; the frozen weight in case Λ₂.
    pub gamma0: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// `anchor ± 20` per axis with 4096 nodes in 1D, 511 per axis in 2D.
pub fn default_limit_grid(anchor: &[f64]) -> Result<Grid, GridError> {
    let nodes = if anchor.len() == 1 { 4096 } else { 511 };
    let lower: Vec<f64> = anchor.iter().map(|c| c - 20.0).collect();
    let upper: Vec<f64> = anchor.iter().map(|c| c + 20.0).collect();
    Grid::new(&lower, &upper, &vec![nodes; anchor.len()])
}

/// The un-penalized problem with one coefficient frozen: `V ≡ V₀` in case
/// Λ₁, `Γ ≡ Γ₀` in case Λ₂. Every node counts as inside, so `g = Γf`.
pub fn limit_problem(
    spec: &ProblemSpec,
    pen: &PenalizedNonlinearity,
    grid: Arc<Grid>,
) -> Result<DiscreteProblem, SemiclassicalError> {
    let points = grid.points();
    let (potential, gamma): (Vec<f64>, Vec<f64>) = match spec.case() {
        Case::Lambda1 => points.iter().map(|x| (spec.v0(), spec.gamma(x))).unzip(),
        Case::Lambda2 => points.iter().map(|x| (spec.v(x), spec.gamma0())).unzip(),
    };
    let n = grid.len();
    Ok(DiscreteProblem::from_parts(grid, potential, gamma, vec![true; n], pen.clone(), spec.anchor().to_vec(), None)?)
}

/// Solves the limit problem at `ℏ = 1` and returns its level `c̲`.
pub fn solve_limit_problem(
    spec: &ProblemSpec,
    pen: &PenalizedNonlinearity,
    grid: Arc<Grid>,
    params: &SolverParams,
) -> Result<LimitResult, SemiclassicalError> {
    let dp = limit_problem(spec, pen, grid)?;
    let res = solve(&dp, 1.0, params)?;
    if !res.converged {
        return Err(SemiclassicalError::LimitNotConverged { residual: res.residual_norm });
    }
    if res.boundary_value > LIMIT_BOUNDARY * res.argmax_value {
        log::warn!(
            "limit solution is {:e} at the box boundary; c̲ may be biased by truncation",
            res.boundary_value
        );
    }
    Ok(LimitResult {
        w: res.u,
        level: res.level,
        case: spec.case(),
        v0: spec.v0(),
        gamma0: spec.gamma0(),
        residual_norm: res.residual_norm,
        iterations: res.iterations,
    })
}

/// Least-squares fit of `log u = log C − rate·|x − center|` over nodes with
/// `|x − center| ∈ [r1, r2]`. Returns `(C, rate)`.
pub fn decay_fit(u: &ScalarField, center: &[f64], window: [f64; 2]) -> Result<(f64, f64), SemiclassicalError> {
    let [r1, r2] = window;
    if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
        return Err(SemiclassicalError::Window { r1, r2 });
    }
    let grid = u.grid();
    let mut samples = Vec::new();
    for (j, &v) in u.values().iter().enumerate() {
        let x = grid.point(j);
        let r = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if r >= r1 && r <= r2 {
            if v <= DECAY_FLOOR {
                return Err(SemiclassicalError::WindowUnderflow { value: v });
            }
            samples.push((r, v.ln()));
        }
    }
    if samples.len() < MIN_WINDOW_NODES {
        return Err(SemiclassicalError::WindowUnderResolved { count: samples.len(), r1, r2 });
    }
    let n = samples.len() as f64;
    let mean_r = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_l = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mean_r).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mean_r) * (s.1 - mean_l)).sum();
    let slope = sxy / sxx;
    Ok(((mean_l - slope * mean_r).exp(), -slope))
}

/// `v(x) = u(center + ℏx)` on the nodes of `target`, zero where the point
/// leaves the source box.
pub fn rescale_to_limit(u: &ScalarField, center: &[f64], hbar: f64, target: Arc<Grid>) -> ScalarField {
    let center = center.to_vec();
    ScalarField::from_fn(target, |x| {
        let y: Vec<f64> = x.iter().zip(&center).map(|(xi, c)| c + hbar * xi).collect();
        u.sample(&y)
    })
}

/// Transports a solution at `from` to a starting guess at `to` by
/// stretching about `center`: `u₀(x) = u(center + (from/to)(x − center))`.
pub fn transport(u: &ScalarField, center: &[f64], from: f64, to: f64) -> ScalarField {
    let center = center.to_vec();
    let ratio = to / from;
    ScalarField::from_fn(u.grid().clone(), |x| {
        let y: Vec<f64> = x.iter().zip(&center).map(|(xi, c)| c + (xi - c) / ratio).collect();
        u.sample(&y)
    })
}

/// A node where a certification check failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeViolation {
    pub index: usize,
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub a: f64,
    /// `m_ℏ`; `None` when the problem carries no boundary band.
    pub m: Option<f64>,
    /// `m_ℏ < a`.
    pub m_below_a: bool,
    pub outside_max: f64,
    /// First node outside Λ with `u > a + 1e−8`.
    pub outside_violation: Option<NodeViolation>,
    /// `min (V − g/u)` over outside nodes with `u > 0`.
    pub c_min: f64,
    pub c_bound: f64,
    pub c_violation: Option<NodeViolation>,
    /// `g(x,u) = Γ(x)f(u)` bitwise at every node.
    pub g_matches: bool,
    pub penalized_residual_norm: f64,
    pub original_residual_norm: f64,
    pub solves_original: bool,
}

/// Checks that the penalization is inactive at `u`, so that `u` solves the
/// original equation exactly whenever it solves the penalized one.
pub fn certify_original(u: &ScalarField, dp: &DiscreteProblem, hbar: f64) -> CertificationReport {
    let pen = dp.nonlinearity();
    let a = pen.a();
    let grid = u.grid();
    let vals = u.values();
    let m = dp.band().map(|band| band.iter().map(|&j| vals[j]).fold(0.0, f64::max));
    let m_below_a = m.is_some_and(|m| m < a);

    let c_bound = pen.alpha() * (1.0 - 1.0 / pen.k()) - COEFFICIENT_SLACK;
    let mut outside_max = 0.0f64;
    let mut outside_violation = None;
    let mut c_min = f64::INFINITY;
    let mut c_violation = None;
    for (j, &uj) in vals.iter().enumerate() {
        if dp.inside()[j] {
            continue;
        }
        outside_max = outside_max.max(uj);
        if outside_violation.is_none() && uj > a + OUTSIDE_SLACK {
            outside_violation = Some(NodeViolation { index: j, point: grid.point(j), value: uj });
        }
        if uj > 0.0 {
            let c = dp.potential()[j] - pen.g_eval(dp.gamma()[j], false, uj) / uj;
            c_min = c_min.min(c);
            if c_violation.is_none() && c < c_bound {
                c_violation = Some(NodeViolation { index: j, point: grid.point(j), value: c });
            }
        }
    }

    let g = dp.g_field(vals);
    let original = dp.original_rhs(vals);
    let g_matches = g.iter().zip(&original).all(|(x, y)| x.to_bits() == y.to_bits());
    let penalized = residual(u, hbar, dp);
    let mut lin = vec![0.0; vals.len()];
    dp.apply_linear(hbar, vals, &mut lin);
    let orig_res: Vec<f64> = lin.iter().zip(&original).map(|(l, o)| l - o).collect();
    let original_residual_norm = ScalarField::from_values_unchecked(grid.clone(), orig_res).norm();

    CertificationReport {
        a,
        m,
        m_below_a,
        outside_max,
        solves_original: m_below_a && outside_violation.is_none() && c_violation.is_none() && g_matches,
        outside_violation,
        c_min,
        c_bound,
        c_violation,
        g_matches,
        penalized_residual_norm: penalized.norm(),
        original_residual_norm,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// Relative band above `c̲` tolerated before a warning.
    pub level_tolerance: f64,
    /// Threshold `b` for the concentration check; defaults to `a`.
    pub b: Option<f64>,
    pub warm_start: bool,
    pub band_width: Option<f64>,
    /// Decay-fit window in units of ℏ.
    pub decay_window: [f64; 2],
}

impl Default for SweepParams {
    fn default() -> Self {
        Self { level_tolerance: 0.05, b: None, warm_start: true, band_width: None, decay_window: [5.0, 10.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub hbar: f64,
    /// `Φ_ℏ(u_ℏ)/ℏᴺ`.
    pub level_scaled: f64,
    /// `Q_ℏ(u_ℏ)/ℏᴺ`.
    pub q_scaled: f64,
    pub m: f64,
    pub argmax_point: Vec<f64>,
    pub argmax_value: f64,
    pub v_at_argmax: f64,
    pub gamma_at_argmax: f64,
    pub solves_original: bool,
    pub decay_rate: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
}

impl SweepRecord {
    fn failed(hbar: f64, dim: usize, reason: String) -> Self {
        Self {
            hbar,
            level_scaled: f64::NAN,
            q_scaled: f64::NAN,
            m: f64::NAN,
            argmax_point: vec![f64::NAN; dim],
            argmax_value: f64::NAN,
            v_at_argmax: f64::NAN,
            gamma_at_argmax: f64::NAN,
            solves_original: false,
            decay_rate: f64::NAN,
            residual_norm: f64::NAN,
            iterations: 0,
            converged: false,
            failure: Some(reason),
        }
    }
}

/// ℏ values must be positive, finite and strictly decreasing.
pub fn validate_hbars(hbars: &[f64]) -> Result<(), SemiclassicalError> {
    if hbars.is_empty() {
        return Err(SemiclassicalError::HbarList("list is empty".into()));
    }
    if let Some(h) = hbars.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(SemiclassicalError::HbarList(format!("{h} is not a positive finite number")));
    }
    if hbars.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SemiclassicalError::HbarList("values must be strictly decreasing".into()));
    }
    Ok(())
}

fn record(dp: &DiscreteProblem, hbar: f64, res: &SolveResult, window: [f64; 2]) -> SweepRecord {
    let scale = hbar.powi(dp.grid().dim() as i32);
    let cert = certify_original(&res.u, dp, hbar);
    let center = res.u.peak_location();
    let decay_rate = match decay_fit(&res.u, &center, [window[0] * hbar, window[1] * hbar]) {
        Ok((_, rate)) => rate,
        Err(e) => {
            log::warn!("ℏ = {hbar}: decay fit skipped: {e}");
            f64::NAN
        }
    };
    SweepRecord {
        hbar,
        level_scaled: res.level / scale,
        q_scaled: res.breakdown.q / scale,
        m: res.m.unwrap_or(f64::NAN),
        argmax_point: res.argmax_point.clone(),
        argmax_value: res.argmax_value,
        v_at_argmax: res.v_at_argmax,
        gamma_at_argmax: res.gamma_at_argmax,
        solves_original: cert.solves_original,
        decay_rate,
        residual_norm: res.residual_norm,
        iterations: res.iterations,
        converged: res.converged,
        failure: None,
    }
}

/// Solves the penalized problem for every ℏ in `hbars`. Individual
/// failures become rows with `converged = false`. With warm starts the
/// solves run in order; otherwise they run in parallel.
pub fn sweep(
    dp: &DiscreteProblem,
    hbars: &[f64],
    params: &SolverParams,
    sweep_params: &SweepParams,
    limit_level: Option<f64>,
) -> Result<(Vec<SweepRecord>, Vec<SolveResult>), SemiclassicalError> {
    validate_hbars(hbars)?;
    params.validate()?;
    let dim = dp.grid().dim();
    let window = sweep_params.decay_window;
    let outcome = |hbar: f64, res: Result<SolveResult, SolverError>| match res {
        Ok(r) => (record(dp, hbar, &r, window), Some(r)),
        Err(e) => {
            log::warn!("ℏ = {hbar}: {e}");
            (SweepRecord::failed(hbar, dim, e.to_string()), None)
        }
    };

    let results: Vec<(SweepRecord, Option<SolveResult>)> = if sweep_params.warm_start {
        let mut out = Vec::with_capacity(hbars.len());
        let mut previous: Option<(f64, ScalarField)> = None;
        for &hbar in hbars {
            let res = match &previous {
                Some((h_prev, u_prev)) => {
                    let start = transport(u_prev, dp.anchor(), *h_prev, hbar);
                    solve_from(dp, hbar, params, &start)
                }
                None => solve(dp, hbar, params),
            };
            let (rec, sol) = outcome(hbar, res);
            if let Some(s) = &sol {
                previous = Some((hbar, s.u.clone()));
            }
            out.push((rec, sol));
        }
        out
    } else {
        hbars.par_iter().map(|&hbar| outcome(hbar, solve(dp, hbar, params))).collect()
    };

    let (records, solutions): (Vec<SweepRecord>, Vec<Option<SolveResult>>) = results.into_iter().unzip();
    if let Some(c) = limit_level {
        for r in records.iter().filter(|r| r.converged) {
            if r.level_scaled > c * (1.0 + sweep_params.level_tolerance) {
                log::warn!(
                    "ℏ = {}: level_scaled {} exceeds c̲ = {c} by more than the {} band",
                    r.hbar,
                    r.level_scaled,
                    sweep_params.level_tolerance
                );
            }
        }
    }
    let ms: Vec<f64> = records.iter().map(|r| r.m).collect();
    if ms.len() >= 3 && !strictly_decreasing(&ms[ms.len() - 3..]) {
        log::warn!("m is not decreasing over the last three ℏ values: {:?}", &ms[ms.len() - 3..]);
    }
    Ok((records, solutions.into_iter().flatten().collect()))
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Data a sweep is judged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReference {
    pub case: Case,
    /// `c̲`.
    pub limit_level: f64,
    pub v0: f64,
    pub gamma0: f64,
    pub a: f64,
    /// Concentration threshold; defaults to `a` when `None`.
    pub b: Option<f64>,
    /// Relative band for the level bound.
    pub level_tolerance: f64,
}

/// Numerical forms of the concentration lemmas over a finished sweep,
/// ordered from largest to smallest ℏ. The bands are fixed tolerances;
/// no convergence rate in ℏ is available to derive them from.
///
/// - `level_bound`: `level_scaled ≤ c̲(1 + tol)` at the two smallest ℏ.
/// - `q_bounded`: `max Q_scaled / min Q_scaled ≤ 10`, not strictly
///   increasing, and the last value at most 5% above the first.
/// - `m_vanishing`: `m` strictly decreasing over the last three points and
///   below `a/10` at the smallest ℏ.
/// - `concentration`: among rows with `argmax_value ≥ b`, the distance of
///   `V` (case Λ₁) or `Γ` (case Λ₂) at the argmax from its extremal value
///   is non-increasing.
/// - `certified`: the smallest-ℏ solution solves the original equation.
pub fn assess_sweep(records: &[SweepRecord], reference: &SweepReference) -> Vec<LemmaCheck> {
    let mut checks = Vec::new();
    let all_converged = records.iter().all(|r| r.converged);
    let n = records.len();

    let tail = &records[n.saturating_sub(2)..];
    let bound = reference.limit_level * (1.0 + reference.level_tolerance);
    let levels: Vec<f64> = tail.iter().map(|r| r.level_scaled).collect();
    checks.push(LemmaCheck {
        name: "level_bound",
        passed: all_converged && n >= 2 && levels.iter().all(|&l| l <= bound),
        detail: format!("level_scaled {levels:?} vs c̲(1+tol) = {bound}"),
    });

    let qs: Vec<f64> = records.iter().map(|r| r.q_scaled).collect();
    let qmax = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let qmin = qs.iter().cloned().fold(f64::INFINITY, f64::min);
    let increasing = qs.len() >= 2 && qs.windows(2).all(|w| w[1] > w[0]);
    let drift = qs.last().zip(qs.first()).is_some_and(|(l, f)| *l <= 1.05 * f);
    checks.push(LemmaCheck {
        name: "q_bounded",
        passed: all_converged && qmin > 0.0 && qmax / qmin <= 10.0 && !increasing && drift,
        detail: format!("Q_scaled {qs:?}, max/min = {}", qmax / qmin),
    });

    let ms: Vec<f64> = records.iter().map(|r| r.m).collect();
    let last_m = ms.last().copied().unwrap_or(f64::NAN);
    checks.push(LemmaCheck {
        name: "m_vanishing",
        passed: all_converged && n >= 3 && strictly_decreasing(&ms[n - 3..]) && last_m < 0.1 * reference.a,
        detail: format!("m {ms:?}, a/10 = {}", 0.1 * reference.a),
    });

    let b = reference.b.unwrap_or(reference.a);
    let distances: Vec<f64> = records
        .iter()
        .filter(|r| r.argmax_value >= b)
        .map(|r| match reference.case {
            Case::Lambda1 => (r.v_at_argmax - reference.v0).abs(),
            Case::Lambda2 => (r.gamma_at_argmax - reference.gamma0).abs(),
        })
        .collect();
    checks.push(LemmaCheck {
        name: "concentration",
        passed: all_converged && !distances.is_empty() && distances.windows(2).all(|w| w[1] <= w[0]),
        detail: format!("distance to the extremal value at the argmax {distances:?} (rows with argmax ≥ {b})"),
    });

    let certified = records.last().is_some_and(|r| r.solves_original);
    checks.push(LemmaCheck {
        name: "certified",
        passed: certified,
        detail: format!("solves_original at the smallest ℏ: {certified}"),
    });
    checks
}
