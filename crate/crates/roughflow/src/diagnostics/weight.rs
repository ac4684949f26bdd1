//! The wall weight `φ` built from the Gaussian profile of `φ′`.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Rescaled viscosity `ν̃ = ν/ε` and gradient bound `m ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    nu_tilde: f64,
    m: f64,
}

impl WeightSpec {
    pub fn new(nu_tilde: f64, m: f64) -> Result<Self> {
        if !(nu_tilde > 0.0 && nu_tilde.is_finite()) {
            return Err(invalid(format!("ν̃ must be positive, got {nu_tilde}")));
        }
        if !(m >= 1.0 && m.is_finite()) {
            return Err(invalid(format!("m must be at least 1, got {m}")));
        }
        Ok(Self { nu_tilde, m })
    }

    pub fn from_physical(nu: f64, epsilon: f64, m: f64) -> Result<Self> {
        Self::new(nu / epsilon, m)
    }

    /// `m = 1 + max_k ‖∇_z(ũ^app + v)(t_k)‖_∞` over stored snapshots.
    pub fn m_from_snapshots(sup_gradients: &[f64]) -> f64 {
        1.0 + sup_gradients.iter().copied().fold(0.0, f64::max)
    }

    pub fn nu_tilde(&self) -> f64 {
        self.nu_tilde
    }

    pub fn m(&self) -> f64 {
        self.m
    }
}

/// `φ(z) = √ν̃ ∫₀^{√(m/ν̃) z} e^{−s²/2} ds`; negative `z` is clamped to the wall.
pub fn weight_phi(spec: &WeightSpec, z: f64) -> f64 {
    let z = z.max(0.0);
    let arg = (spec.m / spec.nu_tilde).sqrt() * z;
    spec.nu_tilde.sqrt() * (PI / 2.0).sqrt() * erf(arg * FRAC_1_SQRT_2)
}

/// `φ′(z) = √m e^{−m z²/(2ν̃)}`.
pub fn weight_phi_derivative(spec: &WeightSpec, z: f64) -> f64 {
    let z = z.max(0.0);
    spec.m.sqrt() * (-spec.m * z * z / (2.0 * spec.nu_tilde)).exp()
}

/// `lim_{z→∞} φ = √(ν̃π/2)`.
pub fn weight_limit(spec: &WeightSpec) -> f64 {
    (spec.nu_tilde * PI / 2.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wall_value_slope_and_limit() {
        let s = WeightSpec::new(1e-3, 2.5).unwrap();
        assert_eq!(weight_phi(&s, 0.0), 0.0);
        assert_abs_diff_eq!(
            weight_phi_derivative(&s, 0.0),
            2.5f64.sqrt(),
            epsilon = 1e-15
        );
        let h = 1e-7;
        assert_abs_diff_eq!(weight_phi(&s, h) / h, 2.5f64.sqrt(), epsilon = 1e-6);
        assert_abs_diff_eq!(weight_phi(&s, 10.0), weight_limit(&s), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(WeightSpec::new(0.0, 1.0).is_err());
        assert!(WeightSpec::new(1e-3, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn bounded_monotone_and_large_away_from_wall(nu in 1e-8f64..1.0, z in 0.0f64..5.0, dz in 0.0f64..1.0) {
            let s = WeightSpec::new(nu, 1.0).unwrap();
            let (a, b) = (weight_phi(&s, z), weight_phi(&s, z + dz));
            prop_assert!(a >= 0.0 && a <= weight_limit(&s) * (1.0 + 1e-15));
            prop_assert!(b >= a);
            if z >= nu.sqrt() {
                prop_assert!(a >= 0.34 * nu.sqrt());
            }
        }
    }
}
