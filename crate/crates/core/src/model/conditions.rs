//! Sampled verification of the structural hypotheses on V, Γ, f, Λ and of
//! the properties (G1)–(G4) of the penalized nonlinearity.
//!
//! Every check walks a finite sample and stops at the first violation, which
//! is reported as a [`Counterexample`].

use serde::Serialize;

use super::{Case, Coefficient, LocalNonlinearity, NonlinearitySpec, ProblemSpec};
use crate::grid::Grid;

/// Relative slack for inequalities that hold with equality in exact arithmetic.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionOutcome {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConditionReport {
    pub conditions: Vec<ConditionOutcome>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionOutcome> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn first_failure(&self) -> Option<&ConditionOutcome> {
        self.conditions.iter().find(|c| !c.passed)
    }

    fn push(&mut self, name: &str, result: Result<(), Counterexample>) {
        let (passed, counterexample) = match result {
            Ok(()) => (true, None),
            Err(c) => (false, Some(c)),
        };
        self.conditions.push(ConditionOutcome { name: name.to_string(), passed, counterexample });
    }

    pub fn extend(&mut self, other: ConditionReport) {
        self.conditions.extend(other.conditions);
    }
}

fn at_x(x: &[f64], detail: String) -> Counterexample {
    Counterexample { x: Some(x.to_vec()), u: None, detail }
}

fn at_u(u: f64, detail: String) -> Counterexample {
    Counterexample { x: None, u: Some(u), detail }
}

fn at_xu(x: &[f64], u: f64, detail: String) -> Counterexample {
    Counterexample { x: Some(x.to_vec()), u: Some(u), detail }
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (ratio * i as f64).exp()).collect()
}

/// Points in space and amplitudes `u` at which the (G) properties are probed.
#[derive(Debug, Clone)]
pub struct SampleLattice {
    pub points: Vec<Vec<f64>>,
    /// Increasing, geometric in `(0, u_max]`.
    pub amplitudes: Vec<f64>,
}

impl SampleLattice {
    /// `n_x` nodes evenly strided over the grid and `n_u` amplitudes spaced
    /// geometrically over `[u_min, u_max]`.
    pub fn from_grid(grid: &Grid, n_x: usize, u_min: f64, u_max: f64, n_u: usize) -> Self {
        let total = grid.len();
        let n_x = n_x.clamp(1, total);
        let points = (0..n_x)
            .map(|i| {
                let j = if n_x == 1 { total / 2 } else { i * (total - 1) / (n_x - 1) };
                grid.point(j)
            })
            .collect();
        Self { points, amplitudes: geometric(u_min, u_max, n_u.max(8)) }
    }

    /// The 64×64 lattice spanning six decades either side of the truncation level.
    pub fn standard(grid: &Grid, truncation: f64) -> Self {
        Self::from_grid(grid, 64, 1e-6 * truncation, 1e6 * truncation, 64)
    }
}

/// (V), (Γ), (F1)–(F4), the case condition (Λ₁) or (Λ₂), and the declared
/// periodicity, all sampled on the grid nodes.
pub fn check_problem_conditions(spec: &ProblemSpec, grid: &Grid) -> ConditionReport {
    let mut report = ConditionReport::default();
    let points = grid.points();

    report.push("(V)", check_potential(spec, &points));
    report.push("(Gamma)", check_gamma(spec, &points));
    let f = spec.nonlinearity();
    report.push("(F1)", check_f1(f));
    report.push("(F2)", check_f2(f));
    report.push("(F3)", check_f3(f));
    report.push("(F4)", check_f4(f));
    match spec.case() {
        Case::Lambda1 => report.push("(Lambda1)", check_lambda1(spec, &points)),
        Case::Lambda2 => report.push("(Lambda2)", check_lambda2(spec, &points)),
    }
    report.push("periodicity", check_periodicity(spec, grid));
    report
}

fn check_potential(spec: &ProblemSpec, points: &[Vec<f64>]) -> Result<(), Counterexample> {
    let alpha = spec.alpha();
    if !(alpha > 0.0) {
        let x = points
            .iter()
            .min_by(|a, b| spec.v(a).total_cmp(&spec.v(b)))
            .cloned()
            .unwrap_or_default();
        return Err(at_x(&x, format!("V(x) ≥ α requires α > 0, got α = {alpha}")));
    }
    for x in points {
        let v = spec.v(x);
        if !(v >= alpha) {
            return Err(at_x(x, format!("V(x) = {v} < α = {alpha}")));
        }
    }
    Ok(())
}

fn check_gamma(spec: &ProblemSpec, points: &[Vec<f64>]) -> Result<(), Counterexample> {
    let beta = spec.beta();
    if !(beta > 0.0) {
        return Err(Counterexample { x: None, u: None, detail: format!("β must be positive, got {beta}") });
    }
    for x in points {
        let g = spec.gamma(x);
        if !(g >= beta) {
            return Err(at_x(x, format!("Γ(x) = {g} < β = {beta}")));
        }
        if g > 1.0 + ROUNDING {
            return Err(at_x(x, format!("Γ(x) = {g} exceeds the normalization |Γ|_∞ = 1")));
        }
    }
    Ok(())
}

fn check_f1(f: &NonlinearitySpec) -> Result<(), Counterexample> {
    // u = 2^{-j}: f(u)/u must decrease toward 0.
    let us: Vec<f64> = (0..48).map(|j| 0.5f64.powi(j)).collect();
    let mut prev = f.slope(us[0]);
    for &u in &us[1..] {
        let s = f.slope(u);
        if s > prev * (1.0 + ROUNDING) {
            return Err(at_u(u, format!("f(u)/u = {s} increases as u → 0⁺")));
        }
        prev = s;
    }
    let last = *us.last().unwrap();
    if !(f.slope(last) < f.slope(us[0])) {
        return Err(at_u(last, format!("f(u)/u = {} does not vanish as u → 0⁺", f.slope(last))));
    }
    Ok(())
}

fn check_f2(f: &NonlinearitySpec) -> Result<(), Counterexample> {
    let p = f.p();
    let us: Vec<f64> = (0..48).map(|j| 2f64.powi(j)).collect();
    let ratio = |u: f64| f.f(u) / u.powf(p - 1.0);
    let mut prev = ratio(us[0]);
    for &u in &us[1..] {
        let r = ratio(u);
        if r > prev * (1.0 + ROUNDING) {
            return Err(at_u(u, format!("f(u)/u^(p−1) = {r} grows as u → ∞ (p = {p})")));
        }
        prev = r;
    }
    let last = *us.last().unwrap();
    if !(ratio(last) < ratio(us[0])) {
        return Err(at_u(last, format!("f(u)/u^(p−1) does not decay (p = {p})")));
    }
    Ok(())
}

fn check_f3(f: &NonlinearitySpec) -> Result<(), Counterexample> {
    let theta = f.theta();
    for u in geometric(1e-6, 1e6, 121) {
        let lhs = theta * f.big_f(u);
        let rhs = f.f(u) * u;
        if !(lhs > 0.0) {
            return Err(at_u(u, format!("θF(u) = {lhs} is not positive")));
        }
        if lhs > rhs * (1.0 + ROUNDING) {
            return Err(at_u(u, format!("θF(u) = {lhs} > f(u)u = {rhs} (θ = {theta})")));
        }
    }
    Ok(())
}

fn check_f4(f: &NonlinearitySpec) -> Result<(), Counterexample> {
    let us = geometric(1e-6, 1e6, 121);
    let mut prev = f.slope(us[0]);
    for &u in &us[1..] {
        let s = f.slope(u);
        if s < prev * (1.0 - ROUNDING) {
            return Err(at_u(u, format!("f(u)/u decreases: {prev} → {s}")));
        }
        prev = s;
    }
    Ok(())
}

fn inside_extrema(spec: &ProblemSpec, points: &[Vec<f64>], c: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    points
        .iter()
        .filter(|x| spec.region().contains(x))
        .map(|x| c(x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn tol(v: f64) -> f64 {
    ROUNDING * v.abs().max(1.0)
}

fn check_lambda1(spec: &ProblemSpec, points: &[Vec<f64>]) -> Result<(), Counterexample> {
    let x0 = spec.anchor();
    let v_anchor = spec.v(x0);
    let (v_min_inside, _) = inside_extrema(spec, points, |x| spec.v(x));
    if v_anchor > v_min_inside + tol(v_anchor) {
        return Err(at_x(x0, format!("V(x_min) = {v_anchor} exceeds inf_Λ V = {v_min_inside}")));
    }
    let boundary = spec.region().boundary_samples(64);
    let (x_b, v_b) = boundary
        .iter()
        .map(|x| (x, spec.v(x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("boundary samples are nonempty");
    if !(v_anchor < v_b) {
        return Err(at_x(x_b, format!("min_∂Λ V = {v_b} is not above V(x_min) = {v_anchor}")));
    }
    let g_anchor = spec.gamma(x0);
    for x in points {
        if spec.gamma(x) > g_anchor + tol(g_anchor) {
            return Err(at_x(x, format!("Γ(x) = {} exceeds Γ(x_min) = {g_anchor}", spec.gamma(x))));
        }
    }
    Ok(())
}

fn check_lambda2(spec: &ProblemSpec, points: &[Vec<f64>]) -> Result<(), Counterexample> {
    let x0 = spec.anchor();
    let g_anchor = spec.gamma(x0);
    let (_, g_max_inside) = inside_extrema(spec, points, |x| spec.gamma(x));
    if g_anchor < g_max_inside - tol(g_anchor) {
        return Err(at_x(x0, format!("Γ(x_max) = {g_anchor} is below sup_Λ Γ = {g_max_inside}")));
    }
    let boundary = spec.region().boundary_samples(64);
    let (x_b, g_b) = boundary
        .iter()
        .map(|x| (x, spec.gamma(x)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("boundary samples are nonempty");
    if !(g_anchor > g_b) {
        return Err(at_x(x_b, format!("max_∂Λ Γ = {g_b} is not below Γ(x_max) = {g_anchor}")));
    }
    let v_anchor = spec.v(x0);
    for x in points {
        if spec.v(x) < v_anchor - tol(v_anchor) {
            return Err(at_x(x, format!("V(x) = {} is below V(x_max) = {v_anchor}", spec.v(x))));
        }
    }
    Ok(())
}

/// The coefficient that the case requires to be periodic must be declared
/// periodic and agree with its shifts by the declared period on the box.
fn check_periodicity(spec: &ProblemSpec, grid: &Grid) -> Result<(), Counterexample> {
    let (name, coefficient): (&str, &Coefficient) = match spec.case() {
        Case::Lambda1 => ("Γ", spec.gamma_coefficient()),
        Case::Lambda2 => ("V", spec.potential()),
    };
    if !coefficient.is_periodic() {
        return Err(Counterexample {
            x: None,
            u: None,
            detail: format!("{name} must be periodic for this case"),
        });
    }
    let Some(period) = spec.declared_period().or_else(|| coefficient.period()) else {
        return Ok(());
    };
    if !(period > 0.0) {
        return Err(Counterexample { x: None, u: None, detail: format!("declared period {period} is not positive") });
    }
    for j in 0..grid.len() {
        let x = grid.point(j);
        for axis in 0..grid.dim() {
            let mut shifted = x.clone();
            shifted[axis] += period;
            if !grid.contains(&shifted) {
                continue;
            }
            let (a, b) = (coefficient.eval(&x), coefficient.eval(&shifted));
            if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(at_x(
                    &x,
                    format!("{name}(x) = {a} differs from {name}(x + {period}·e_{axis}) = {b}"),
                ));
            }
        }
    }
    Ok(())
}

/// Checks (G1)–(G4) for `nl` on every (x, u) pair of the lattice.
pub fn check_g_properties<N: LocalNonlinearity>(
    nl: &N,
    spec: &ProblemSpec,
    lattice: &SampleLattice,
) -> ConditionReport {
    let mut report = ConditionReport::default();
    report.push("(G1)", check_g1(nl, spec, lattice));
    report.push("(G2)", check_g2(nl, spec, lattice));
    report.push("(G3)", check_g3(nl, spec, lattice));
    report.push("(G4)", check_g4(nl, spec, lattice));
    report
}

fn local<'a, N: LocalNonlinearity>(nl: &'a N, spec: &ProblemSpec, x: &[f64]) -> impl Fn(f64) -> f64 + 'a {
    let gamma = spec.gamma(x);
    let inside = spec.region().contains(x);
    move |u| nl.g(gamma, inside, u)
}

fn check_g1<N: LocalNonlinearity>(nl: &N, spec: &ProblemSpec, lattice: &SampleLattice) -> Result<(), Counterexample> {
    // Lower quarter of the amplitudes, walked toward zero.
    let tail = &lattice.amplitudes[..lattice.amplitudes.len() / 4];
    for x in &lattice.points {
        let g = local(nl, spec, x);
        let ratios: Vec<f64> = tail.iter().map(|&u| g(u) / u).collect();
        for (i, w) in ratios.windows(2).enumerate() {
            if w[0] > w[1] * (1.0 + ROUNDING) {
                return Err(at_xu(x, tail[i], format!("g(x,u)/u = {} rises as u → 0⁺", w[0])));
            }
        }
        if !(ratios[0] < *ratios.last().unwrap()) {
            return Err(at_xu(x, tail[0], "g(x,u)/u does not decay as u → 0⁺".into()));
        }
    }
    Ok(())
}

fn check_g2<N: LocalNonlinearity>(nl: &N, spec: &ProblemSpec, lattice: &SampleLattice) -> Result<(), Counterexample> {
    let n = lattice.amplitudes.len();
    let tail = &lattice.amplitudes[3 * n / 4..];
    let p = nl.p();
    for x in &lattice.points {
        let g = local(nl, spec, x);
        let ratios: Vec<f64> = tail.iter().map(|&u| g(u) / u.powf(p - 1.0)).collect();
        for (i, w) in ratios.windows(2).enumerate() {
            if w[1] > w[0] * (1.0 + ROUNDING) {
                return Err(at_xu(x, tail[i + 1], format!("g(x,u)/u^(p−1) = {} grows as u → ∞", w[1])));
            }
        }
        if !(*ratios.last().unwrap() < ratios[0]) {
            return Err(at_xu(x, *tail.last().unwrap(), "g(x,u)/u^(p−1) does not decay as u → ∞".into()));
        }
    }
    Ok(())
}

fn check_g3<N: LocalNonlinearity>(nl: &N, spec: &ProblemSpec, lattice: &SampleLattice) -> Result<(), Counterexample> {
    let theta = nl.theta();
    let k = nl.k();
    for x in &lattice.points {
        let gamma = spec.gamma(x);
        let inside = spec.region().contains(x);
        let v = spec.v(x);
        for &u in &lattice.amplitudes {
            let big = nl.big_g(gamma, inside, u);
            let gu = nl.g(gamma, inside, u) * u;
            if inside {
                if !(theta * big > 0.0) {
                    return Err(at_xu(x, u, format!("inside Λ: θG = {} is not positive", theta * big)));
                }
                if theta * big > gu * (1.0 + ROUNDING) {
                    return Err(at_xu(x, u, format!("inside Λ: θG = {} > g·u = {gu}", theta * big)));
                }
            } else {
                let cap = v * u * u / k;
                if !(big >= 0.0) {
                    return Err(at_xu(x, u, format!("outside Λ: G = {big} is negative")));
                }
                if 2.0 * big > gu * (1.0 + ROUNDING) {
                    return Err(at_xu(x, u, format!("outside Λ: 2G = {} > g·u = {gu}", 2.0 * big)));
                }
                if gu > cap * (1.0 + ROUNDING) {
                    return Err(at_xu(x, u, format!("outside Λ: g·u = {gu} > V·u²/k = {cap}")));
                }
            }
        }
    }
    Ok(())
}

fn check_g4<N: LocalNonlinearity>(nl: &N, spec: &ProblemSpec, lattice: &SampleLattice) -> Result<(), Counterexample> {
    let a = nl.truncation();
    for x in &lattice.points {
        let gamma = spec.gamma(x);
        let inside = spec.region().contains(x);
        let ratios: Vec<(f64, f64)> = lattice.amplitudes.iter().map(|&u| (u, nl.g(gamma, inside, u) / u)).collect();
        for w in ratios.windows(2) {
            if w[1].1 < w[0].1 * (1.0 - ROUNDING) {
                return Err(at_xu(x, w[1].0, format!("g(x,u)/u decreases: {} → {}", w[0].1, w[1].1)));
            }
        }
        if !inside {
            let mut above = ratios.iter().filter(|(u, _)| *u >= a);
            if let Some(&(_, first)) = above.next() {
                for &(u, r) in above {
                    if (r - first).abs() > 4.0 * f64::EPSILON * first {
                        return Err(at_xu(x, u, format!("outside Λ: g/u = {r} is not constant ({first}) above a")));
                    }
                }
            }
        }
    }
    Ok(())
}
