//! Hardening functions: non-negative, nondecreasing reweightings of the
//! negative-sampling distribution by similarity to the anchor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents above this are handled in log space by callers that need
/// ratios of weights rather than the weights themselves.
pub const LOG_SPACE_CUTOFF: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum HardeningSpec {
    /// `eta = 1`; recovers the unhardened distributions.
    Identity,
    /// `eta(t) = exp(beta * t)`.
    ExpTilt { beta: f64 },
    /// `eta(t) = 1(exp(t) >= tau)`, ties included.
    Threshold { tau: f64 },
}

impl HardeningSpec {
    pub fn exp_tilt(beta: f64) -> Result<Self> {
        let h = HardeningSpec::ExpTilt { beta };
        h.validate()?;
        Ok(h)
    }

    pub fn threshold(tau: f64) -> Result<Self> {
        let h = HardeningSpec::Threshold { tau };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            HardeningSpec::Identity => Ok(()),
            HardeningSpec::ExpTilt { beta } if beta.is_finite() && beta > 0.0 => Ok(()),
            HardeningSpec::ExpTilt { beta } => Err(Error::Input(format!("exp_tilt needs beta > 0, got {beta}"))),
            HardeningSpec::Threshold { tau } if tau.is_finite() && tau > 0.0 => Ok(()),
            HardeningSpec::Threshold { tau } => Err(Error::Input(format!("threshold needs tau > 0, got {tau}"))),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, HardeningSpec::Identity)
    }

    pub fn eta(&self, t: f64) -> f64 {
        match *self {
            HardeningSpec::Identity => 1.0,
            HardeningSpec::ExpTilt { beta } => (beta * t).exp(),
            HardeningSpec::Threshold { tau } => {
                if t.exp() >= tau {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `ln eta(t)`, `-inf` where eta vanishes. Exact for the exponential tilt
    /// at any magnitude of `beta * t`.
    pub fn log_eta(&self, t: f64) -> f64 {
        match *self {
            HardeningSpec::ExpTilt { beta } => beta * t,
            _ => self.eta(t).ln(),
        }
    }

    /// Derivative of eta; zero almost everywhere for the threshold variant.
    pub fn eta_derivative(&self, t: f64) -> f64 {
        match *self {
            HardeningSpec::ExpTilt { beta } => beta * (beta * t).exp(),
            _ => 0.0,
        }
    }

    /// `d ln eta / dt` where eta is positive.
    pub fn log_eta_slope(&self) -> f64 {
        match *self {
            HardeningSpec::ExpTilt { beta } => beta,
            _ => 0.0,
        }
    }

    /// Whether `eta(t)` would overflow for some `|t| <= bound`.
    pub(crate) fn needs_log_space(&self, bound: f64) -> bool {
        matches!(*self, HardeningSpec::ExpTilt { beta } if beta.abs() * bound > LOG_SPACE_CUTOFF)
    }
}

impl Default for HardeningSpec {
    fn default() -> Self {
        HardeningSpec::Identity
    }
}

impl fmt::Display for HardeningSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HardeningSpec::Identity => write!(f, "identity"),
            HardeningSpec::ExpTilt { beta } => write!(f, "exp_tilt:{beta}"),
            HardeningSpec::Threshold { tau } => write!(f, "threshold:{tau}"),
        }
    }
}

/// Parses `identity`, `exp_tilt:<beta>` or `threshold:<tau>`. Parameters are
/// not validated here so that deliberately invalid functions can be fed to
/// [`check_hardening_validity`].
impl FromStr for HardeningSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (s, None),
        };
        let value = |what: &str| -> Result<f64> {
            param
                .ok_or_else(|| Error::Input(format!("{name} requires a {what} parameter, e.g. {name}:1.0")))?
                .parse::<f64>()
                .map_err(|e| Error::Input(format!("bad {what} for {name}: {e}")))
        };
        match name {
            "identity" if param.is_none() => Ok(HardeningSpec::Identity),
            "exp_tilt" => Ok(HardeningSpec::ExpTilt { beta: value("beta")? }),
            "threshold" => Ok(HardeningSpec::Threshold { tau: value("tau")? }),
            _ => Err(Error::Input(format!("unknown hardening '{s}'"))),
        }
    }
}

/// True iff `eta` is non-negative and nondecreasing on the (ascending) grid.
pub fn check_hardening_validity(h: &HardeningSpec, grid: &[f64]) -> Result<bool> {
    check_function_validity(|t| h.eta(t), grid)
}

pub fn check_function_validity<F: Fn(f64) -> f64>(eta: F, grid: &[f64]) -> Result<bool> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input("grid contains non-finite points".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Input("grid must be sorted ascending".into()));
    }
    let values: Vec<f64> = grid.iter().map(|&t| eta(t)).collect();
    let nonneg = values.iter().all(|v| *v >= 0.0);
    let monotone = values.windows(2).all(|w| w[0] <= w[1]);
    Ok(nonneg && monotone)
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_examples() {
        let id = HardeningSpec::Identity;
        assert!([-3.0, 0.0, 10.0].iter().all(|&t| id.eta(t) == 1.0));
        assert_eq!(HardeningSpec::exp_tilt(1.0).unwrap().eta(0.0), 1.0);
        let th = HardeningSpec::threshold(1.0).unwrap();
        assert_eq!(th.eta(0.0), 1.0);
        assert_eq!(th.eta(-0.5), 0.0);
    }

    #[test]
    fn constructors_reject_nonpositive_parameters() {
        assert!(HardeningSpec::exp_tilt(0.0).is_err());
        assert!(HardeningSpec::exp_tilt(-1.0).is_err());
        assert!(HardeningSpec::threshold(0.0).is_err());
        assert!(HardeningSpec::threshold(f64::INFINITY).is_err());
    }

    #[test]
    fn validity_examples() {
        let grid = linear_grid(-2.0, 2.0, 81);
        assert!(check_hardening_validity(&HardeningSpec::ExpTilt { beta: 2.0 }, &grid).unwrap());
        assert!(check_hardening_validity(&HardeningSpec::Threshold { tau: 0.5 }, &grid).unwrap());
        assert!(!check_function_validity(|t| (-t).exp(), &grid).unwrap());
        assert!(!check_function_validity(|t| t, &grid).unwrap());
        assert!(!check_hardening_validity(&HardeningSpec::ExpTilt { beta: -1.0 }, &grid).unwrap());
    }

    #[test]
    fn unsorted_grid_is_an_error() {
        assert!(check_hardening_validity(&HardeningSpec::Identity, &[0.0, -1.0]).is_err());
    }

    #[test]
    fn log_eta_survives_overflow() {
        let h = HardeningSpec::ExpTilt { beta: 500.0 };
        assert!(h.eta(2.0).is_infinite());
        assert_eq!(h.log_eta(2.0), 1000.0);
        assert!(h.needs_log_space(2.0));
        assert!(!HardeningSpec::ExpTilt { beta: 5.0 }.needs_log_space(2.0));
    }

    #[test]
    fn parse_round_trip() {
        for h in [
            HardeningSpec::Identity,
            HardeningSpec::ExpTilt { beta: 0.5 },
            HardeningSpec::Threshold { tau: 1.25 },
        ] {
            assert_eq!(h.to_string().parse::<HardeningSpec>().unwrap(), h);
        }
        assert!("exp_tilt".parse::<HardeningSpec>().is_err());
        assert!("cosine:1".parse::<HardeningSpec>().is_err());
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let h = HardeningSpec::ExpTilt { beta: 1.7 };
        let t = 0.3;
        let fd = (h.eta(t + 1e-6) - h.eta(t - 1e-6)) / 2e-6;
        assert!((fd - h.eta_derivative(t)).abs() < 1e-6);
    }
}
