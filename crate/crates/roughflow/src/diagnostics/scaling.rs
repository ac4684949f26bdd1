//! `‖e^{γx₂/ε} f(x₁, x/ε)‖_{L²(Ω^ε)} ≲ ε^{1/2}` measured over an ε sweep.

use super::region::{QuadGrid, Quadrature, Region, Vertical};
use super::{rate_fit, RateFit};
use crate::error::{invalid, Error, Result};
use crate::par::Exec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub epsilon: f64,
    pub lhs: f64,
    /// `lhs / √ε`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub samples: Vec<ScalingSample>,
    pub fit: RateFit,
    /// `max/min` of the normalized values.
    pub spread: f64,
}

/// Weighted norm over the physical region of `f(x₁, z)` evaluated at
/// `z = x/ε`. `decay` is the certified `z₂` decay rate of `f`.
pub fn rescaled_l2<const N: usize, F>(
    region: &Region,
    gamma: f64,
    decay: f64,
    grid: QuadGrid,
    exec: Exec,
    f: F,
) -> Result<ScalingSample>
where
    F: Fn(f64, [f64; 2]) -> [f64; N] + Sync + Send,
{
    if !(gamma >= 0.0) {
        return Err(invalid(format!("γ must be non-negative, got {gamma}")));
    }
    if gamma >= decay {
        return Err(Error::Contract(format!(
            "γ = {gamma} is not below the decay rate {decay}"
        )));
    }
    let eps = region.scale();
    let vertical = Vertical::Decaying {
        scale: eps / (2.0 * (decay - gamma)),
    };
    let q = Quadrature::new(region, grid, vertical, exec)?;
    let v = q.sample(|n| {
        let val = f(n.x[0], [n.x[0] / eps, n.x[1] / eps]);
        Quadrature::weighted(
            (2.0 * gamma * n.x[1] / eps).exp(),
            val.iter().map(|c| c * c).sum::<f64>(),
        )
    });
    let lhs = q.integrate(&v).max(0.0).sqrt();
    Ok(ScalingSample {
        epsilon: eps,
        lhs,
        normalized: lhs / eps.sqrt(),
    })
}

/// Slope of `lhs` against `ε` and the spread of `lhs/√ε`. All-zero samples
/// give slope `½` and spread 1 by convention.
pub fn rescaled_l2_scaling_check(samples: Vec<ScalingSample>) -> Result<ScalingReport> {
    if samples.iter().all(|s| s.lhs == 0.0) {
        if samples.len() < 3 {
            return Err(Error::Arity {
                needed: 3,
                got: samples.len(),
            });
        }
        return Ok(ScalingReport {
            samples,
            fit: RateFit {
                slope: 0.5,
                intercept: 0.0,
                r_squared: 1.0,
            },
            spread: 1.0,
        });
    }
    let fit = rate_fit(
        &samples
            .iter()
            .map(|s| (s.epsilon, s.lhs))
            .collect::<Vec<_>>(),
    )?;
    let hi = samples.iter().map(|s| s.normalized).fold(0.0, f64::max);
    let lo = samples
        .iter()
        .map(|s| s.normalized)
        .fold(f64::INFINITY, f64::min);
    Ok(ScalingReport {
        samples,
        fit,
        spread: hi / lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flat_exponential_closed_form() {
        let gamma = 0.4;
        let samples: Vec<ScalingSample> = [0.25, 0.125, 0.0625, 0.03125]
            .iter()
            .map(|&eps| {
                let s = rescaled_l2(
                    &Region::half_plane(eps),
                    gamma,
                    1.0,
                    QuadGrid::default(),
                    Exec::Sequential,
                    |_, z| [(-z[1]).exp()],
                )
                .unwrap();
                assert_abs_diff_eq!(
                    s.lhs,
                    (eps / (2.0 * (1.0 - gamma))).sqrt(),
                    epsilon = 1e-8 * s.lhs
                );
                s
            })
            .collect();
        let r = rescaled_l2_scaling_check(samples).unwrap();
        assert_abs_diff_eq!(r.fit.slope, 0.5, epsilon = 1e-9);
        assert!(r.spread < 1.0 + 1e-8);
    }

    #[test]
    fn zero_profile_gives_zero() {
        let s = rescaled_l2(
            &Region::half_plane(0.25),
            0.5,
            1.0,
            QuadGrid::default(),
            Exec::Sequential,
            |_, _| [0.0],
        )
        .unwrap();
        assert_eq!(s.lhs, 0.0);
    }

    #[test]
    fn weight_above_decay_is_rejected() {
        let r = rescaled_l2(
            &Region::half_plane(0.25),
            1.5,
            1.0,
            QuadGrid::default(),
            Exec::Sequential,
            |_, z| [(-z[1]).exp()],
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
