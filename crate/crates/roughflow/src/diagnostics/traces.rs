//! Trace and gradient inequalities with their explicit constants. Each check
//! runs on the given quadrature and on a coarser copy; the difference of the
//! two ratios is the quadrature error estimate.

use super::fields::{ScalarJet, VectorJet};
use super::region::{Quadrature, Region, Vertical};
use super::CheckRecord;
use crate::error::{Error, Result};

/// Tolerance on `div v` and `v·n` relative to the field scale.
const CONTRACT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    /// Left side over right side; `≤ 1` when the inequality holds.
    pub ratio: f64,
    pub constant: f64,
    pub error_estimate: f64,
}

impl InequalityReport {
    const DEGENERATE: Self = Self {
        ratio: 0.0,
        constant: 0.0,
        error_estimate: 0.0,
    };

    pub fn bound(&self) -> f64 {
        1.0 + 3.0 * self.error_estimate
    }

    pub fn holds(&self) -> bool {
        self.ratio <= self.bound()
    }

    pub fn record(&self, name: &str) -> CheckRecord {
        CheckRecord::at_most(name, self.ratio, self.bound())
    }
}

/// `√2 (1 + ‖η′‖²_∞)^{1/4}`.
pub fn trace_constant(region: &Region) -> f64 {
    let s = region.profile().sup_abs(1);
    2f64.sqrt() * (1.0 + s * s).powf(0.25)
}

/// `√2 (1 + sup|b′|²)^{1/4}`.
pub fn curl_trace_constant(region: &Region) -> f64 {
    let s = region.slope_bound();
    2f64.sqrt() * (1.0 + s * s).powf(0.25)
}

/// `C` in `‖∇v‖ ≤ ‖curl v‖ + C‖v‖`: half of `sup|b″|` times the squared curl-trace constant.
pub fn gradient_curl_constant(region: &Region) -> f64 {
    0.5 * region.curvature_bound() * curl_trace_constant(region).powi(2)
}

fn ensure_decay(quad: &Quadrature, magnitude: &[f64]) -> Result<()> {
    if !matches!(quad.vertical(), Vertical::Decaying { .. }) {
        return Ok(());
    }
    let scale = magnitude.iter().copied().fold(0.0, f64::max);
    let tail = quad.top_nodes().map(|k| magnitude[k]).fold(0.0, f64::max);
    if tail > 1e-10 * scale {
        return Err(Error::Decay { tail });
    }
    Ok(())
}

fn with_estimate<F: Fn(&Quadrature) -> Result<Option<(f64, f64)>>>(
    quad: &Quadrature,
    f: F,
) -> Result<InequalityReport> {
    let Some((ratio, constant)) = f(quad)? else {
        return Ok(InequalityReport::DEGENERATE);
    };
    let coarse = f(&quad.coarser()?)?.map_or(0.0, |r| r.0);
    let error_estimate = (ratio - coarse).abs() + 64.0 * f64::EPSILON * ratio;
    Ok(InequalityReport {
        ratio,
        constant,
        error_estimate,
    })
}

/// `‖f‖_{L²(∂)} / (C ‖f‖^{1/2} ‖∂₂f‖^{1/2})`.
pub fn trace_inequality_check<F>(f: F, quad: &Quadrature) -> Result<InequalityReport>
where
    F: Fn([f64; 2]) -> ScalarJet + Sync + Send,
{
    with_estimate(quad, |q| {
        let jets = q.sample(|n| f(n.x));
        let mag: Vec<f64> = jets.iter().map(|j| j.value[0].abs()).collect();
        ensure_decay(q, &mag)?;
        let wall: Vec<f64> = q.sample_wall(|n| f(n.x).value[0].powi(2));
        let lhs = q.integrate_wall(&wall).sqrt();
        if lhs == 0.0 {
            return Ok(None);
        }
        let l2 = q
            .integrate(&jets.iter().map(|j| j.value[0].powi(2)).collect::<Vec<_>>())
            .sqrt();
        let d2 = q
            .integrate(
                &jets
                    .iter()
                    .map(|j| j.grad[0][1].powi(2))
                    .collect::<Vec<_>>(),
            )
            .sqrt();
        let c = trace_constant(q.region());
        Ok(Some((lhs / (c * (l2 * d2).sqrt()), c)))
    })
}

struct VectorSums {
    wall: f64,
    l2: f64,
    curl: f64,
    grad: f64,
}

fn vector_sums<F>(v: &F, q: &Quadrature) -> Result<Option<VectorSums>>
where
    F: Fn([f64; 2]) -> VectorJet + Sync + Send,
{
    let jets = q.sample(|n| v(n.x));
    let mag: Vec<f64> = jets.iter().map(|j| j.norm_sq().sqrt()).collect();
    ensure_decay(q, &mag)?;
    let wall_jets = q.sample_wall(|n| v(n.x));
    let vmax = mag
        .iter()
        .copied()
        .chain(wall_jets.iter().map(|j| j.norm_sq().sqrt()))
        .fold(0.0, f64::max);
    if vmax == 0.0 {
        return Ok(None);
    }
    let gmax = jets
        .iter()
        .map(|j| j.grad_norm_sq().sqrt())
        .fold(0.0, f64::max);
    let div = jets.iter().map(|j| j.div().abs()).fold(0.0, f64::max);
    if div > CONTRACT_TOL * gmax.max(f64::MIN_POSITIVE) {
        return Err(Error::Contract(format!(
            "field is not divergence-free: max |div v| = {div:e}"
        )));
    }
    let flux = q
        .wall()
        .iter()
        .zip(&wall_jets)
        .map(|(n, j)| (j.value[0] * n.frame.n[0] + j.value[1] * n.frame.n[1]).abs())
        .fold(0.0, f64::max);
    if flux > CONTRACT_TOL * vmax {
        return Err(Error::Contract(format!(
            "field crosses the wall: max |v·n| = {flux:e}"
        )));
    }
    let int = |g: &dyn Fn(&VectorJet) -> f64| {
        q.integrate(&jets.iter().map(g).collect::<Vec<_>>())
            .max(0.0)
            .sqrt()
    };
    Ok(Some(VectorSums {
        wall: q
            .integrate_wall(&wall_jets.iter().map(|j| j.norm_sq()).collect::<Vec<_>>())
            .sqrt(),
        l2: int(&|j| j.norm_sq()),
        curl: int(&|j| j.curl().powi(2)),
        grad: int(&|j| j.grad_norm_sq()),
    }))
}

/// `‖v‖_{L²(∂)} / (C ‖v‖^{1/2} ‖curl v‖^{1/2})` for solenoidal fields tangent to the wall.
pub fn curl_trace_check<F>(v: F, quad: &Quadrature) -> Result<InequalityReport>
where
    F: Fn([f64; 2]) -> VectorJet + Sync + Send,
{
    with_estimate(quad, |q| {
        let Some(s) = vector_sums(&v, q)? else {
            return Ok(None);
        };
        let c = curl_trace_constant(q.region());
        Ok(Some((s.wall / (c * (s.l2 * s.curl).sqrt()), c)))
    })
}

/// `‖∇v‖ / (‖curl v‖ + C‖v‖)` on the same class of fields.
pub fn gradient_curl_check<F>(v: F, quad: &Quadrature) -> Result<InequalityReport>
where
    F: Fn([f64; 2]) -> VectorJet + Sync + Send,
{
    with_estimate(quad, |q| {
        let Some(s) = vector_sums(&v, q)? else {
            return Ok(None);
        };
        let c = gradient_curl_constant(q.region());
        Ok(Some((s.grad / (s.curl + c * s.l2), c)))
    })
}

#[cfg(test)]
mod tests {
    use super::super::fields::FlattenedField;
    use super::super::region::QuadGrid;
    use super::*;
    use crate::geometry::{DomainParams, RoughProfile};
    use crate::par::Exec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat() -> Quadrature {
        Quadrature::new(
            &Region::half_plane(1.0),
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.5 },
            Exec::Sequential,
        )
        .unwrap()
    }

    fn rough(eps: f64) -> Quadrature {
        let d = DomainParams::new(eps, 2, RoughProfile::default_study()).unwrap();
        Quadrature::new(
            &Region::rescaled_cell(&d),
            QuadGrid::default(),
            Vertical::Decaying { scale: 0.5 },
            Exec::Sequential,
        )
        .unwrap()
    }

    #[test]
    fn exponential_is_the_equality_case() {
        let r = trace_inequality_check(
            |x| ScalarJet {
                value: [(-x[1]).exp()],
                grad: [[0.0, -(-x[1]).exp()]],
            },
            &flat(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.constant, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.ratio, 1.0, epsilon = 1e-12);
        assert!(r.holds());
        let shear = |x: [f64; 2]| {
            let e = (-x[1]).exp();
            VectorJet {
                value: [e, 0.0],
                grad: [[0.0, -e], [0.0, 0.0]],
            }
        };
        let c = curl_trace_check(shear, &flat()).unwrap();
        assert!(c.holds() && (c.ratio - 1.0).abs() < 1e-12);
        let g = gradient_curl_check(shear, &flat()).unwrap();
        assert!(g.holds() && (g.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_fields_are_degenerate() {
        assert_eq!(
            trace_inequality_check(|_| ScalarJet::ZERO, &flat())
                .unwrap()
                .ratio,
            0.0
        );
        assert_eq!(
            curl_trace_check(|_| VectorJet::ZERO, &flat())
                .unwrap()
                .ratio,
            0.0
        );
    }

    #[test]
    fn non_decaying_data_is_rejected() {
        let one = |_| ScalarJet {
            value: [1.0],
            grad: [[0.0; 2]],
        };
        assert!(matches!(
            trace_inequality_check(one, &flat()),
            Err(Error::Decay { .. })
        ));
    }

    #[test]
    fn fields_crossing_the_wall_are_rejected() {
        let q = rough(0.25);
        let up = |x: [f64; 2]| {
            let e = (-x[1]).exp();
            VectorJet {
                value: [0.0, e],
                grad: [[0.0, 0.0], [0.0, -e]],
            }
        };
        assert!(matches!(curl_trace_check(up, &q), Err(Error::Contract(_))));
    }

    #[test]
    fn random_rough_fields_respect_the_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for eps in [0.25, 0.0625] {
            let q = rough(eps);
            for _ in 0..5 {
                let f = FlattenedField::random_scalar(q.region(), 3, &mut rng);
                let r = trace_inequality_check(|x| f.scalar(x), &q).unwrap();
                assert!(r.ratio <= 1.01 && r.holds(), "{r:?}");
                let s = FlattenedField::random_stream(q.region(), 3, &mut rng);
                let c = curl_trace_check(|x| s.perp_gradient(x), &q).unwrap();
                assert!(c.holds(), "{c:?}");
                let g = gradient_curl_check(|x| s.perp_gradient(x), &q).unwrap();
                assert!(g.holds(), "{g:?}");
            }
        }
    }
}
