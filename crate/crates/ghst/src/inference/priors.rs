//! Prior families and the joint log-prior.
//!
//! Everything unconstrained gets a diffuse normal; scale-like parameters
//! get the same normal truncated to their support; θ (and φ when freed)
//! get proper uniforms. Densities are proper and include their truncation
//! normalizers, so the log-prior is comparable across hyperparameter
//! choices, not just within one run.

use crate::model::ParameterVector;
use crate::special::normal_cdf;

const LN_2PI: f64 = 1.8378770664093453;

/// One marginal prior. Supports are open intervals; the boundary carries
/// no mass for a continuous law, and keeping it out of the support lets
/// −∞ do the rejection work in the MH ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    Normal { mean: f64, variance: f64 },
    /// Normal(mean, variance) renormalized to (lo, hi).
    TruncatedNormal {
        mean: f64,
        variance: f64,
        lo: f64,
        hi: f64,
    },
    Uniform { lo: f64, hi: f64 },
}

impl Prior {
    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::Normal { mean, variance } => {
                let d = x - mean;
                -0.5 * (LN_2PI + variance.ln()) - 0.5 * d * d / variance
            }
            Prior::TruncatedNormal {
                mean,
                variance,
                lo,
                hi,
            } => {
                if x <= lo || x >= hi {
                    return f64::NEG_INFINITY;
                }
                let sd = variance.sqrt();
                let mass = normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
                let d = x - mean;
                -0.5 * (LN_2PI + variance.ln()) - 0.5 * d * d / variance - mass.ln()
            }
            Prior::Uniform { lo, hi } => {
                if x <= lo || x >= hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
        }
    }

    /// Central value used to seed chain starts.
    pub(crate) fn center(&self) -> f64 {
        match *self {
            Prior::Normal { mean, .. } => mean,
            Prior::TruncatedNormal { mean, lo, hi, .. } => {
                // clamp the untruncated mean into the interior
                let lo_f = if lo.is_finite() { lo } else { mean - 1.0 };
                let hi_f = if hi.is_finite() { hi } else { mean + 1.0 };
                mean.max(lo_f + 0.25 * (hi_f - lo_f)).min(hi_f - 0.25 * (hi_f - lo_f))
            }
            Prior::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }
}

/// Marginal priors for every block of the parameter vector. `phi = None`
/// keeps the Matérn smoothness fixed at the model default instead of
/// sampling it.
#[derive(Clone, Debug)]
pub struct PriorSpec {
    pub b: Prior,
    pub omega: Prior,
    pub alpha: Prior,
    pub lambda: Prior,
    pub psi: Prior,
    pub m_tau: Prior,
    pub beta0: Prior,
    /// Applied to each regression coefficient.
    pub beta: Prior,
    pub theta: Prior,
    pub phi: Option<Prior>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        let diffuse = Prior::Normal {
            mean: 0.0,
            variance: 1e4,
        };
        let nonneg = |hi: f64| Prior::TruncatedNormal {
            mean: 0.0,
            variance: 1e4,
            lo: 0.0,
            hi,
        };
        PriorSpec {
            b: Prior::TruncatedNormal {
                mean: 0.0,
                variance: 1e4,
                lo: -1.0,
                hi: 1.0,
            },
            omega: nonneg(f64::INFINITY),
            // the unconditional ARCH scale √(ω/(1−α)) needs α < 1
            alpha: nonneg(1.0),
            lambda: diffuse,
            psi: nonneg(f64::INFINITY),
            m_tau: diffuse,
            beta0: diffuse,
            beta: diffuse,
            theta: Prior::Uniform { lo: 0.0, hi: 1.5 },
            phi: None,
        }
    }
}

impl PriorSpec {
    pub fn free_phi(&self) -> bool {
        self.phi.is_some()
    }

    /// The conventional prior when φ is sampled rather than fixed.
    pub fn with_free_phi(mut self) -> Self {
        self.phi = Some(Prior::Uniform { lo: 0.05, hi: 2.5 });
        self
    }
}

/// Joint log-prior; −∞ signals out-of-support and is the only rejection
/// mechanism the MH kernel needs.
pub fn log_prior(z: &ParameterVector, p: &PriorSpec) -> f64 {
    let mut total = p.b.log_density(z.b)
        + p.omega.log_density(z.omega)
        + p.alpha.log_density(z.alpha)
        + p.lambda.log_density(z.lambda)
        + p.psi.log_density(z.psi)
        + p.m_tau.log_density(z.m_tau)
        + p.beta0.log_density(z.beta0)
        + p.theta.log_density(z.theta);
    for &bk in &z.beta {
        total += p.beta.log_density(bk);
    }
    if let Some(phi_prior) = &p.phi {
        total += phi_prior.log_density(z.phi);
    }
    total
}
