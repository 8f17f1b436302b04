//! Model parameters and the closed-form aggregates of the inverse-power case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest lattice for which clusters on a ring are well defined.
pub const MIN_LATTICE: usize = 3;

/// Rule giving the triggering probability `mu_i` for a cluster of size `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MuRule {
    Constant { mu: f64 },
    InversePower { delta: f64 },
}

impl MuRule {
    /// Unclamped rate used by the stationary equations.
    pub fn raw(&self, i: usize) -> f64 {
        match *self {
            MuRule::Constant { mu } => mu,
            MuRule::InversePower { delta } => delta / i as f64,
        }
    }

    /// Probability applied by the simulator, `min(1, mu_i)`.
    pub fn clamped(&self, i: usize) -> f64 {
        self.raw(i).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    #[serde(rename = "N")]
    n: usize,
    nu: f64,
    mu_rule: MuRule,
    seed: u64,
}

#[derive(Deserialize)]
struct RawParams {
    #[serde(rename = "N")]
    n: usize,
    nu: f64,
    mu_rule: MuRule,
    seed: u64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.n, raw.nu, raw.mu_rule, raw.seed)
    }
}

impl ModelParams {
    pub fn new(n: usize, nu: f64, mu_rule: MuRule, seed: u64) -> Result<Self> {
        if n < MIN_LATTICE {
            return Err(Error::Domain(format!("lattice size N={n} must be at least {MIN_LATTICE}")));
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Domain(format!("nu={nu} must lie in (0, 1]")));
        }
        match mu_rule {
            MuRule::Constant { mu } if !(mu > 0.0 && mu <= 1.0) => {
                return Err(Error::Domain(format!("mu={mu} must lie in (0, 1]")));
            }
            MuRule::InversePower { delta } if !(delta > 0.0 && delta.is_finite()) => {
                return Err(Error::Domain(format!("delta={delta} must be positive")));
            }
            _ => {}
        }
        Ok(Self { n, nu, mu_rule, seed })
    }

    /// Inverse-power parameters with `delta = theta * nu`.
    pub fn inverse_power(n: usize, nu: f64, theta: f64, seed: u64) -> Result<Self> {
        Self::new(n, nu, MuRule::InversePower { delta: theta * nu }, seed)
    }

    pub fn lattice_size(&self) -> usize {
        self.n
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu_rule(&self) -> MuRule {
        self.mu_rule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Triggering probability for a cluster of size `i`, clamped into `[0, 1]`.
    pub fn mu_of(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        self.mu_rule.clamped(i)
    }

    /// `theta = delta / nu` for the inverse-power rule.
    pub fn theta(&self) -> Option<f64> {
        match self.mu_rule {
            MuRule::InversePower { delta } => Some(delta / self.nu),
            MuRule::Constant { .. } => None,
        }
    }

    /// The inverse-power case described by these parameters, if any.
    pub fn inverse_power_case(&self) -> Option<InversePowerCase> {
        self.theta().and_then(|theta| InversePowerCase::new(theta, self.n).ok())
    }

    /// True when some `delta / i` exceeds one, i.e. the simulator clamps and
    /// no longer follows the stationary equations exactly.
    pub fn is_clamped(&self) -> bool {
        matches!(self.mu_rule, MuRule::InversePower { delta } if delta > 1.0)
    }
}

/// Inverse-power case `mu_i = delta / i`, parametrised by `theta = delta / nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InversePowerCase {
    theta: f64,
    #[serde(rename = "N")]
    n: usize,
}

impl InversePowerCase {
    pub fn new(theta: f64, n: usize) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("theta={theta} must be positive and finite")));
        }
        if n < MIN_LATTICE {
            return Err(Error::Domain(format!("lattice size N={n} must be at least {MIN_LATTICE}")));
        }
        Ok(Self { theta, n })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lattice_size(&self) -> usize {
        self.n
    }

    /// `N * theta`, the scale that stays fixed in the small-theta limit.
    pub fn n_theta(&self) -> f64 {
        self.n as f64 * self.theta
    }
}

/// Stationary density, expected cluster count and expected count of isolated
/// empty cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub rho: f64,
    pub n_total: f64,
    pub n1_empty: f64,
}

pub fn derived_quantities(case: &InversePowerCase) -> DerivedQuantities {
    let t = case.theta;
    let rho = 1.0 / (t + 1.0);
    let n_total = case.n as f64 * t / ((t + 1.0) * (t + 2.0));
    let n1_empty = 2.0 * n_total / (3.0 + 2.0 * t);
    DerivedQuantities { rho, n_total, n1_empty }
}
