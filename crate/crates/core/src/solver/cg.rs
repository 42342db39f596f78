//! Preconditioned conjugate gradients for `(−ℏ²Δ_h + V) z = r`.
//!
//! The preconditioner is the constant-coefficient operator `−ℏ²Δ_h + c`,
//! which the discrete sine transform diagonalizes exactly. With
//! `c = √(min V · max V)` the preconditioned spectrum lies in
//! `[√(min V/max V), √(max V/min V)]` independently of `h` and `ℏ`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::SolverError;
use crate::functional::DiscreteProblem;
use crate::grid::{dot, Grid};

/// DST-I along one axis of length `n`, computed from an FFT of length `2(n+1)`.
struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SineTransform {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        Self { n, fft: planner.plan_fft_forward(2 * (n + 1)) }
    }

    /// `y_k = Σ_j x_j sin(π j k/(n+1))`, in place; `buf` has length `2(n+1)`.
    fn apply(&self, x: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf[0] = Complex::new(0.0, 0.0);
        buf[n + 1] = Complex::new(0.0, 0.0);
        for j in 0..n {
            buf[j + 1] = Complex::new(x[j], 0.0);
            buf[m - 1 - j] = Complex::new(-x[j], 0.0);
        }
        self.fft.process(buf);
        for k in 0..n {
            x[k] = -0.5 * buf[k + 1].im;
        }
    }
}

pub(crate) struct SinePreconditioner {
    grid: Arc<Grid>,
    transforms: Vec<SineTransform>,
    /// `1/(ℏ²λ_k + c)` per mode, times the inverse-transform normalization.
    inverse_symbol: Vec<f64>,
}

impl SinePreconditioner {
    pub(crate) fn new(grid: Arc<Grid>, hbar: f64, shift: f64) -> Self {
        let mut planner = FftPlanner::new();
        let transforms: Vec<SineTransform> = grid.nodes().iter().map(|&n| SineTransform::new(&mut planner, n)).collect();
        let axis_eigs: Vec<Vec<f64>> = grid
            .nodes()
            .iter()
            .zip(grid.spacing())
            .map(|(&n, &h)| {
                (1..=n)
                    .map(|k| {
                        let s = (PI * k as f64 / (2.0 * (n + 1) as f64)).sin();
                        4.0 * s * s / (h * h)
                    })
                    .collect()
            })
            .collect();
        let norm: f64 = grid.nodes().iter().map(|&n| 2.0 / (n + 1) as f64).product();
        let h2 = hbar * hbar;
        let inverse_symbol = match grid.dim() {
            1 => axis_eigs[0].iter().map(|l| norm / (h2 * l + shift)).collect(),
            _ => {
                let mut out = Vec::with_capacity(grid.len());
                for l0 in &axis_eigs[0] {
                    for l1 in &axis_eigs[1] {
                        out.push(norm / (h2 * (l0 + l1) + shift));
                    }
                }
                out
            }
        };
        Self { grid, transforms, inverse_symbol }
    }

    fn transform(&self, x: &mut [f64]) {
        match self.grid.dim() {
            1 => {
                let mut buf = vec![Complex::new(0.0, 0.0); 2 * (self.transforms[0].n + 1)];
                self.transforms[0].apply(x, &mut buf);
            }
            _ => {
                let (n0, n1) = (self.grid.nodes()[0], self.grid.nodes()[1]);
                let mut buf = vec![Complex::new(0.0, 0.0); 2 * (n0.max(n1) + 1)];
                for row in x.chunks_mut(n1) {
                    self.transforms[1].apply(row, &mut buf[..2 * (n1 + 1)]);
                }
                let mut column = vec![0.0; n0];
                for j in 0..n1 {
                    for i in 0..n0 {
                        column[i] = x[i * n1 + j];
                    }
                    self.transforms[0].apply(&mut column, &mut buf[..2 * (n0 + 1)]);
                    for i in 0..n0 {
                        x[i * n1 + j] = column[i];
                    }
                }
            }
        }
    }

    pub(crate) fn apply(&self, r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(r);
        self.transform(out);
        for (o, s) in out.iter_mut().zip(&self.inverse_symbol) {
            *o *= s;
        }
        self.transform(out);
    }
}

/// Linear solver for `−ℏ²Δ_h + V`, reusable across right-hand sides.
pub(crate) struct LinearSolver<'a> {
    dp: &'a DiscreteProblem,
    hbar: f64,
    precond: SinePreconditioner,
}

pub(crate) struct CgOutcome {
    pub(crate) solution: Vec<f64>,
    pub(crate) iterations: usize,
    pub(crate) relative_residual: f64,
}

impl<'a> LinearSolver<'a> {
    pub(crate) fn new(dp: &'a DiscreteProblem, hbar: f64) -> Self {
        let (vmin, vmax) = dp.potential_range();
        let shift = (vmin * vmax).sqrt();
        Self { dp, hbar, precond: SinePreconditioner::new(dp.grid().clone(), hbar, shift) }
    }

    pub(crate) fn solve(&self, rhs: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome, SolverError> {
        let n = rhs.len();
        let rhs_norm = dot(rhs, rhs).sqrt();
        if rhs_norm == 0.0 {
            return Ok(CgOutcome { solution: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
        }
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z = vec![0.0; n];
        self.precond.apply(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut rel = 1.0;
        for it in 0..max_iter {
            self.dp.apply_linear(self.hbar, &p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for j in 0..n {
                x[j] += alpha * p[j];
                r[j] -= alpha * ap[j];
            }
            rel = dot(&r, &r).sqrt() / rhs_norm;
            if rel <= tol {
                return Ok(CgOutcome { solution: x, iterations: it + 1, relative_residual: rel });
            }
            self.precond.apply(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for j in 0..n {
                p[j] = z[j] + beta * p[j];
            }
        }
        Err(SolverError::CgNotConverged { iterations: max_iter, residual: rel })
    }
}
