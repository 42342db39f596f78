//! The truncated nonlinearity `g(x, u)`.
//!
//! Outside Λ the base nonlinearity is cut at the level `a` where
//! `f(a)/a = α/k` and continued linearly with slope `α/k`; inside Λ it is
//! left untouched. The continuation keeps `g(x,u)/u` nondecreasing and caps
//! it by `V/k` outside Λ, which is what makes the penalized functional
//! coercive on the Nehari set.

use super::{ModelError, NonlinearitySpec};
use crate::grid::Region;

const BRACKET_MIN: f64 = 1e-12;
const BRACKET_MAX: f64 = 1e12;

/// Solves `f(a)/a = α/k` by bracketing and bisection on the nondecreasing
/// map `u ↦ f(u)/u`.
pub fn compute_truncation_level(f: &NonlinearitySpec, alpha: f64, k: f64) -> Result<f64, ModelError> {
    let target = alpha / k;
    if !(target > 0.0 && target.is_finite()) {
        return Err(ModelError::Penalization(format!("α/k must be positive, got {target}")));
    }
    // Walk outwards from 1 by factors of two until the target is bracketed.
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    if f.slope(1.0) >= target {
        while f.slope(lo) >= target {
            lo *= 0.5;
            if lo < BRACKET_MIN {
                return Err(ModelError::NoTruncationLevel { target });
            }
        }
    } else {
        while f.slope(hi) < target {
            hi *= 2.0;
            if hi > BRACKET_MAX {
                return Err(ModelError::NoTruncationLevel { target });
            }
        }
    }
    if lo == hi {
        hi = 2.0 * lo;
    }
    // Bisect to floating-point resolution; invariant slope(lo) < target ≤ slope(hi).
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.slope(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Both endpoints are adjacent floats; keep whichever has the smaller residual.
    let a = if (f.slope(lo) - target).abs() < (f.slope(hi) - target).abs() { lo } else { hi };
    Ok(a)
}

/// Node-local view of a nonlinearity, as consumed by the energy and the
/// property checks: `g(x,u)` and its primitive given `Γ(x)` and `χ_Λ(x)`.
pub trait LocalNonlinearity {
    fn g(&self, gamma: f64, inside: bool, u: f64) -> f64;
    fn big_g(&self, gamma: f64, inside: bool, u: f64) -> f64;
    fn theta(&self) -> f64;
    fn p(&self) -> f64;
    fn k(&self) -> f64;
    fn truncation(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedNonlinearity {
    base: NonlinearitySpec,
    k: f64,
    a: f64,
    alpha: f64,
    region: Region,
}

impl PenalizedNonlinearity {
    pub fn new(base: NonlinearitySpec, alpha: f64, k: f64, region: Region) -> Result<Self, ModelError> {
        base.validate()?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::Penalization(format!("α must be positive, got {alpha}")));
        }
        let theta = base.theta();
        let k_min = theta / (theta - 2.0);
        if !(k > k_min && k.is_finite()) {
            return Err(ModelError::Penalization(format!("k = {k} must exceed θ/(θ−2) = {k_min}")));
        }
        let a = compute_truncation_level(&base, alpha, k)?;
        Ok(Self { base, k, a, alpha, region })
    }

    /// Default `k = 2θ/(θ−2)`.
    pub fn default_k(base: &NonlinearitySpec) -> f64 {
        let theta = base.theta();
        2.0 * theta / (theta - 2.0)
    }

    pub fn base(&self) -> &NonlinearitySpec {
        &self.base
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Slope `α/k` of the linear continuation.
    pub fn tail_slope(&self) -> f64 {
        self.alpha / self.k
    }

    /// `˜f`: `f` up to `a`, then `(α/k)u`.
    pub fn f_tilde(&self, u: f64) -> f64 {
        if u <= self.a {
            self.base.f(u)
        } else {
            self.tail_slope() * u
        }
    }

    /// Primitive of `˜f`.
    pub fn big_f_tilde(&self, u: f64) -> f64 {
        if u <= self.a {
            self.base.big_f(u)
        } else {
            self.base.big_f(self.a) + 0.5 * self.tail_slope() * (u * u - self.a * self.a)
        }
    }

    pub fn g_eval(&self, gamma: f64, inside: bool, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if inside {
            gamma * self.base.f(u)
        } else {
            gamma * self.f_tilde(u)
        }
    }

    #[allow(non_snake_case)]
    pub fn G_eval(&self, gamma: f64, inside: bool, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if inside {
            gamma * self.base.big_f(u)
        } else {
            gamma * self.big_f_tilde(u)
        }
    }

    /// Partial derivative `∂g/∂u`, one-sided from below at the kink `u = a`.
    pub fn g_prime(&self, gamma: f64, inside: bool, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if inside || u <= self.a {
            gamma * self.base.fprime(u)
        } else {
            gamma * self.tail_slope()
        }
    }
}

impl LocalNonlinearity for PenalizedNonlinearity {
    fn g(&self, gamma: f64, inside: bool, u: f64) -> f64 {
        self.g_eval(gamma, inside, u)
    }

    fn big_g(&self, gamma: f64, inside: bool, u: f64) -> f64 {
        self.G_eval(gamma, inside, u)
    }

    fn theta(&self) -> f64 {
        self.base.theta()
    }

    fn p(&self) -> f64 {
        self.base.p()
    }

    fn k(&self) -> f64 {
        self.k
    }

    fn truncation(&self) -> f64 {
        self.a
    }
}
