//! The stretching identity `∫ v·(v·∇u) = ∫ v·u^⊥ curl v` for solenoidal
//! fields tangent to the wall, with `u^⊥ = (−u₂, u₁)`.

use super::fields::VectorJet;
use super::region::Quadrature;
use crate::error::{Error, Result};

const CONTRACT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs|` over the scale of the two sides.
    pub discrepancy: f64,
    /// Change of the discrepancy on a coarser quadrature.
    pub error_estimate: f64,
}

fn admissible(name: &str, jets: &[VectorJet], wall: &[(VectorJet, [f64; 2])]) -> Result<()> {
    let vmax = jets
        .iter()
        .chain(wall.iter().map(|w| &w.0))
        .map(|j| j.norm_sq().sqrt())
        .fold(0.0, f64::max);
    let gmax = jets
        .iter()
        .map(|j| j.grad_norm_sq().sqrt())
        .fold(0.0, f64::max);
    let div = jets.iter().map(|j| j.div().abs()).fold(0.0, f64::max);
    let flux = wall
        .iter()
        .map(|(j, n)| (j.value[0] * n[0] + j.value[1] * n[1]).abs())
        .fold(0.0, f64::max);
    if div > CONTRACT_TOL * gmax.max(f64::MIN_POSITIVE)
        || flux > CONTRACT_TOL * vmax.max(f64::MIN_POSITIVE)
    {
        return Err(Error::Contract(format!(
            "{name} must be solenoidal and tangent: |div| {div:e}, |v·n| {flux:e}"
        )));
    }
    Ok(())
}

fn sides<V, U>(v: &V, u: &U, q: &Quadrature) -> Result<(f64, f64, f64)>
where
    V: Fn([f64; 2]) -> VectorJet + Sync + Send,
    U: Fn([f64; 2]) -> VectorJet + Sync + Send,
{
    let pairs = q.sample(|n| (v(n.x), u(n.x)));
    let wall = q.sample_wall(|n| ((v(n.x), n.frame.n), (u(n.x), n.frame.n)));
    let (vj, uj): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
    let (vw, uw): (Vec<_>, Vec<_>) = wall.into_iter().unzip();
    admissible("v", &vj, &vw)?;
    admissible("u", &uj, &uw)?;
    let stretch: Vec<f64> = pairs
        .iter()
        .map(|(v, u)| {
            let (a, g) = (v.value, u.grad);
            (0..2)
                .map(|i| a[i] * (a[0] * g[i][0] + a[1] * g[i][1]))
                .sum()
        })
        .collect();
    let rotate: Vec<f64> = pairs
        .iter()
        .map(|(v, u)| (-v.value[0] * u.value[1] + v.value[1] * u.value[0]) * v.curl())
        .collect();
    let l2 = |f: &dyn Fn(&(VectorJet, VectorJet)) -> f64| {
        q.integrate(&pairs.iter().map(f).collect::<Vec<_>>())
            .max(0.0)
            .sqrt()
    };
    let v2 = l2(&|p| p.0.norm_sq());
    let curl = l2(&|p| p.0.curl().powi(2));
    let grad_u = uj
        .iter()
        .map(|j| j.grad_norm_sq().sqrt())
        .fold(0.0, f64::max);
    let u_sup = uj.iter().map(|j| j.norm_sq().sqrt()).fold(0.0, f64::max);
    // ‖v‖²‖∇u‖_∞ bounds the left side; ‖v‖‖u‖_∞‖curl v‖ bounds the right
    let scale = v2 * v2 * grad_u + v2 * u_sup * curl;
    Ok((q.integrate(&stretch), q.integrate(&rotate), scale))
}

pub fn stretch_identity_check<V, U>(v: V, u: U, quad: &Quadrature) -> Result<IdentityReport>
where
    V: Fn([f64; 2]) -> VectorJet + Sync + Send,
    U: Fn([f64; 2]) -> VectorJet + Sync + Send,
{
    let normalized = |(l, r, s): (f64, f64, f64)| if s == 0.0 { 0.0 } else { (l - r).abs() / s };
    let fine = sides(&v, &u, quad)?;
    let coarse = sides(&v, &u, &quad.coarser()?)?;
    let discrepancy = normalized(fine);
    Ok(IdentityReport {
        lhs: fine.0,
        rhs: fine.1,
        discrepancy,
        error_estimate: (discrepancy - normalized(coarse)).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::fields::FlattenedField;
    use super::super::region::{QuadGrid, Region, Vertical};
    use super::*;
    use crate::geometry::{DomainParams, RoughProfile};
    use crate::par::Exec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_v_gives_zero() {
        let q = Quadrature::new(
            &Region::half_plane(1.0),
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.5 },
            Exec::Sequential,
        )
        .unwrap();
        let u = |_| VectorJet {
            value: [1.0, 0.0],
            grad: [[0.0; 2]; 2],
        };
        let r = stretch_identity_check(|_| VectorJet::ZERO, u, &q).unwrap();
        assert_eq!(r.discrepancy, 0.0);
    }

    #[test]
    fn uniform_flow_over_flat_wall() {
        let r0 = Region::half_plane(1.0);
        let q = Quadrature::new(
            &r0,
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.5 },
            Exec::Sequential,
        )
        .unwrap();
        let s = FlattenedField::random_stream(&r0, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let u = |_| VectorJet {
            value: [1.0, 0.0],
            grad: [[0.0; 2]; 2],
        };
        let r = stretch_identity_check(|x| s.perp_gradient(x), u, &q).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.rhs.abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn random_pairs_on_rough_wall() {
        let d = DomainParams::new(0.125, 2, RoughProfile::default_study()).unwrap();
        let reg = Region::rescaled_cell(&d);
        let q = Quadrature::new(
            &reg,
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.5 },
            Exec::Sequential,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let v = FlattenedField::random_stream(&reg, 3, &mut rng);
            let u = FlattenedField::random_stream(&reg, 3, &mut rng);
            let r =
                stretch_identity_check(|x| v.perp_gradient(x), |x| u.perp_gradient(x), &q).unwrap();
            assert!(r.discrepancy < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn non_tangent_fields_are_rejected() {
        let q = Quadrature::new(
            &Region::half_plane(1.0),
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.5 },
            Exec::Sequential,
        )
        .unwrap();
        let up = |x: [f64; 2]| {
            let e = (-x[1]).exp();
            VectorJet {
                value: [0.0, e],
                grad: [[0.0, 0.0], [0.0, -e]],
            }
        };
        let u = |_| VectorJet {
            value: [1.0, 0.0],
            grad: [[0.0; 2]; 2],
        };
        assert!(matches!(
            stretch_identity_check(up, u, &q),
            Err(Error::Contract(_))
        ));
    }
}
