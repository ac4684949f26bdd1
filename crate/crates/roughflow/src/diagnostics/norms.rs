//! Quadrature-consistent norms of fields given pointwise.

use super::fields::Jet;
use super::region::Quadrature;
use super::weight::{weight_phi, WeightSpec};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    Linf,
    /// `‖φ^{1/2} f‖_{L²}` with `φ` evaluated at the flattened height.
    L2Phi(WeightSpec),
    /// `Σ_{|β|≤s} ‖e^{γx₂/ε} ε^{|β|} ∂^β f‖_{L²}` with `ε` the cell width.
    HsEpsGamma {
        s: u32,
        gamma: f64,
    },
    /// `‖e^{γx₂/ε} f‖_{L²}`.
    WeightedExp {
        gamma: f64,
    },
}

impl NormKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NormKind::HsEpsGamma { s, .. } if s > 1 => Err(Error::Contract(format!(
                "pointwise jets carry one derivative, H^{s} needs {s}"
            ))),
            NormKind::HsEpsGamma { gamma, .. } | NormKind::WeightedExp { gamma }
                if !(gamma > 0.0 && gamma < TAU) =>
            {
                Err(invalid(format!("γ must lie in (0, 2π), got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

pub fn norm<const N: usize, F>(field: F, kind: &NormKind, quad: &Quadrature) -> Result<f64>
where
    F: Fn([f64; 2]) -> Jet<N> + Sync + Send,
{
    kind.validate()?;
    let eps = quad.region().scale();
    let jets = quad.sample(|n| field(n.x));
    let l2 = |w: &dyn Fn(usize) -> f64, part: &dyn Fn(&Jet<N>) -> f64| -> f64 {
        let v: Vec<f64> = jets
            .iter()
            .enumerate()
            .map(|(k, j)| Quadrature::weighted(w(k), part(j)))
            .collect();
        quad.integrate(&v).max(0.0).sqrt()
    };
    let nodes = quad.nodes();
    Ok(match *kind {
        NormKind::L2 => l2(&|_| 1.0, &|j| j.norm_sq()),
        NormKind::Linf => jets.iter().map(|j| j.norm_sq().sqrt()).fold(0.0, f64::max),
        NormKind::L2Phi(spec) => l2(&|k| weight_phi(&spec, nodes[k].zeta), &|j| j.norm_sq()),
        NormKind::WeightedExp { gamma } => {
            l2(&|k| (2.0 * gamma * nodes[k].x[1] / eps).exp(), &|j| {
                j.norm_sq()
            })
        }
        NormKind::HsEpsGamma { s, gamma } => {
            let w = |k: usize| (2.0 * gamma * nodes[k].x[1] / eps).exp();
            let mut total = l2(&w, &|j| j.norm_sq());
            if s == 1 {
                for d in 0..2 {
                    total += eps * l2(&w, &|j| j.grad.iter().map(|g| g[d] * g[d]).sum());
                }
            }
            total
        }
    })
}

#[cfg(test)]
mod tests {
    use super::super::fields::{FlattenedField, ScalarJet};
    use super::super::region::{QuadGrid, Region, Vertical};
    use super::*;
    use crate::geometry::{DomainParams, RoughProfile};
    use crate::par::Exec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kinds() -> Vec<NormKind> {
        vec![
            NormKind::L2,
            NormKind::Linf,
            NormKind::L2Phi(WeightSpec::new(1e-2, 1.0).unwrap()),
            NormKind::HsEpsGamma { s: 1, gamma: 0.5 },
            NormKind::WeightedExp { gamma: 0.5 },
        ]
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let q = Quadrature::new(
            &Region::half_plane(0.25),
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.25 },
            Exec::Sequential,
        )
        .unwrap();
        for k in kinds() {
            assert_eq!(norm(|_| ScalarJet::ZERO, &k, &q).unwrap(), 0.0);
        }
    }

    #[test]
    fn unit_box() {
        let q = Quadrature::new(
            &Region::half_plane(0.25),
            QuadGrid::default(),
            Vertical::Finite { height: 1.0 },
            Exec::Sequential,
        )
        .unwrap();
        let one = |_| ScalarJet {
            value: [1.0],
            grad: [[0.0; 2]],
        };
        assert_abs_diff_eq!(norm(one, &NormKind::L2, &q).unwrap(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn exponential_weight_closed_form() {
        for eps in [0.25, 0.125, 0.0625] {
            let q = Quadrature::new(
                &Region::half_plane(eps),
                QuadGrid::default(),
                Vertical::Decaying { scale: eps },
                Exec::Sequential,
            )
            .unwrap();
            let f = |x: [f64; 2]| ScalarJet {
                value: [(-x[1] / eps).exp()],
                grad: [[0.0, -(-x[1] / eps).exp() / eps]],
            };
            for gamma in [0.1, 0.5, 0.9] {
                let n = norm(f, &NormKind::WeightedExp { gamma }, &q).unwrap();
                assert_abs_diff_eq!(n * n, eps / (2.0 * (1.0 - gamma)), epsilon = 1e-12);
                // ε∂₂f = −f, so the H¹ norm is the weighted norm plus itself
                let h = norm(f, &NormKind::HsEpsGamma { s: 1, gamma }, &q).unwrap();
                assert_abs_diff_eq!(h, 2.0 * n, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unsupported_kinds_are_rejected() {
        assert!(NormKind::HsEpsGamma { s: 2, gamma: 0.5 }
            .validate()
            .is_err());
        assert!(NormKind::WeightedExp { gamma: 7.0 }.validate().is_err());
    }

    #[test]
    fn norms_are_homogeneous() {
        let d = DomainParams::new(0.125, 2, RoughProfile::default_study()).unwrap();
        let r = Region::physical(&d);
        let q = Quadrature::new(
            &r,
            QuadGrid {
                per_period: 16,
                vertical: 64,
            },
            Vertical::Decaying { scale: 0.0625 },
            Exec::Parallel,
        )
        .unwrap();
        let f = FlattenedField::random_scalar(&r, 3, &mut ChaCha8Rng::seed_from_u64(5));
        for k in kinds() {
            let a = norm(|x| f.scalar(x), &k, &q).unwrap();
            let b = norm(|x| f.scalar(x).scaled(-3.5), &k, &q).unwrap();
            assert_abs_diff_eq!(b, 3.5 * a, epsilon = 1e-12 * a.max(1.0));
        }
    }
}
