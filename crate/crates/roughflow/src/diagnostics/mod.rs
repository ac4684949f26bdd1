//! Measurable versions of the norms, weights and inequalities used in the
//! convergence analysis, plus log-log rate fitting.

mod fields;
mod identities;
mod norms;
mod region;
mod scaling;
mod traces;
mod weight;

pub use fields::{FlattenedField, Jet, Mode, ScalarJet, VectorJet};
pub use identities::{stretch_identity_check, IdentityReport};
pub use norms::{norm, NormKind};
pub use region::{Node, QuadGrid, Quadrature, Region, Vertical, WallNode};
pub use scaling::{rescaled_l2, rescaled_l2_scaling_check, ScalingReport, ScalingSample};
pub use traces::{
    curl_trace_check, curl_trace_constant, gradient_curl_check, gradient_curl_constant,
    trace_constant, trace_inequality_check, InequalityReport,
};
pub use weight::{weight_limit, weight_phi, weight_phi_derivative, WeightSpec};

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Least-squares slope of `log value` against `log ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Arity {
            needed: 3,
            got: points.len(),
        });
    }
    if points.iter().any(|&(e, v)| !(e > 0.0) || !(v > 0.0)) {
        return Err(invalid("rate fit needs positive ε and values"));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(e, v)| (e.ln(), v.ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate fit needs distinct ε values"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).min(1.0)
    };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Outcome of one check as aggregated by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.25, 0.125, 0.0625].iter().map(|&e| (e, e * e)).collect();
        let f = rate_fit(&pts).unwrap();
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noisy_square_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<(f64, f64)> = (2..8)
            .map(|k| {
                let e = 0.5f64.powi(k);
                (
                    e,
                    3.0 * e.sqrt() * (1.0 + 0.01 * rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        let s = rate_fit(&pts).unwrap().slope;
        assert!((0.45..=0.55).contains(&s), "{s}");
    }

    #[test]
    fn two_points_are_not_enough() {
        assert!(matches!(
            rate_fit(&[(0.5, 1.0), (0.25, 0.5)]),
            Err(Error::Arity { needed: 3, got: 2 })
        ));
        assert!(rate_fit(&[(0.5, 1.0), (0.25, 0.0), (0.125, 1.0)]).is_err());
    }
}
