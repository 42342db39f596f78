use serde::{Deserialize, Serialize};

use super::ModelError;

/// One term `c·u^{q−1}` of a combined-power nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub coefficient: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseKind {
    /// `f(u) = Σ c_j u^{q_j − 1}`.
    Powers(Vec<PowerTerm>),
    /// `f(u) = c·u³/(1 + u²)`. Asymptotically linear, so it fails (F3);
    /// kept for exercising the validators.
    Saturable { coefficient: f64 },
}

/// The base nonlinearity `f`, extended by zero for `u ≤ 0`, together with
/// the exponents θ (Ambrosetti–Rabinowitz) and p (subcritical growth).
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    kind: BaseKind,
    theta: f64,
    p: f64,
}

impl NonlinearitySpec {
    /// `f(u) = u^{q−1}` with θ = q and p = q + 1.
    pub fn power(q: f64) -> Self {
        Self { kind: BaseKind::Powers(vec![PowerTerm { coefficient: 1.0, q }]), theta: q, p: q + 1.0 }
    }

    /// Sum of power terms; θ defaults to the smallest q, p to the largest q + 1.
    pub fn combined(terms: Vec<PowerTerm>) -> Self {
        let theta = terms.iter().map(|t| t.q).fold(f64::INFINITY, f64::min);
        let p = terms.iter().map(|t| t.q).fold(f64::NEG_INFINITY, f64::max) + 1.0;
        Self { kind: BaseKind::Powers(terms), theta, p }
    }

    pub fn saturable(coefficient: f64) -> Self {
        Self { kind: BaseKind::Saturable { coefficient }, theta: 4.0, p: 5.0 }
    }

    pub fn with_exponents(mut self, theta: f64, p: f64) -> Self {
        self.theta = theta;
        self.p = p;
        self
    }

    pub fn kind(&self) -> &BaseKind {
        &self.kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Structural constraints: positive coefficients, q > 2, 2 < θ ≤ p.
    /// Growth and monotonicity conditions are checked by sampling elsewhere.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.theta > 2.0 && self.theta <= self.p && self.p.is_finite()) {
            return Err(ModelError::Exponents { theta: self.theta, p: self.p });
        }
        match &self.kind {
            BaseKind::Powers(terms) => {
                if terms.is_empty() {
                    return Err(ModelError::Nonlinearity("at least one power term is required".into()));
                }
                for t in terms {
                    if !(t.coefficient > 0.0 && t.coefficient.is_finite()) {
                        return Err(ModelError::Nonlinearity(format!(
                            "power term coefficient must be positive, got {}",
                            t.coefficient
                        )));
                    }
                    if !(t.q > 2.0 && t.q.is_finite()) {
                        return Err(ModelError::Nonlinearity(format!("power exponent q must exceed 2, got {}", t.q)));
                    }
                }
            }
            BaseKind::Saturable { coefficient } => {
                if !(*coefficient > 0.0) {
                    return Err(ModelError::Nonlinearity("saturable coefficient must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// `c·f`, as used by the Γ normalization.
    pub fn scaled(&self, c: f64) -> Self {
        let kind = match &self.kind {
            BaseKind::Powers(terms) => BaseKind::Powers(
                terms.iter().map(|t| PowerTerm { coefficient: c * t.coefficient, q: t.q }).collect(),
            ),
            BaseKind::Saturable { coefficient } => BaseKind::Saturable { coefficient: c * coefficient },
        };
        Self { kind, theta: self.theta, p: self.p }
    }

    pub fn f(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            BaseKind::Powers(terms) => terms.iter().map(|t| t.coefficient * pow(u, t.q - 1.0)).sum(),
            BaseKind::Saturable { coefficient } => coefficient * u * u * u / (1.0 + u * u),
        }
    }

    /// Primitive `F(u) = ∫_0^u f`.
    pub fn big_f(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            BaseKind::Powers(terms) => terms.iter().map(|t| t.coefficient * pow(u, t.q) / t.q).sum(),
            BaseKind::Saturable { coefficient } => 0.5 * coefficient * (u * u - (u * u).ln_1p()),
        }
    }

    pub fn fprime(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            BaseKind::Powers(terms) => {
                terms.iter().map(|t| t.coefficient * (t.q - 1.0) * pow(u, t.q - 2.0)).sum()
            }
            BaseKind::Saturable { coefficient } => {
                let u2 = u * u;
                coefficient * (3.0 * u2 + u2 * u2) / ((1.0 + u2) * (1.0 + u2))
            }
        }
    }

    /// `f(u)/u`, nondecreasing under (F4).
    pub fn slope(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            self.f(u) / u
        }
    }
}

fn pow(u: f64, e: f64) -> f64 {
    if e == e.trunc() && e.abs() <= 32.0 {
        u.powi(e as i32)
    } else {
        u.powf(e)
    }
}
