//! Randomized property suites behind `roughflow check`: the trace
//! inequalities, the two identities, the weight function and the rescaled
//! `L²` scaling of a computed layer.

use crate::cell::{CellCascade, CellDomain, CellGrid};
use crate::diagnostics::{
    curl_trace_check, gradient_curl_check, rescaled_l2, rescaled_l2_scaling_check,
    stretch_identity_check, trace_inequality_check, weight_limit, weight_phi,
    weight_phi_derivative, CheckRecord, FlattenedField, QuadGrid, Quadrature, Region, Vertical,
    WeightSpec,
};
use crate::error::{Error, Result};
use crate::geometry::{DomainParams, RoughProfile};
use crate::ns::manufactured::Manufactured;
use crate::ns::{vorticity_bc_equivalence_check, Friction, NsConfig, NsSolver};
use crate::par::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Dyadic `ε` used by the randomized suites.
pub const SUITE_EPSILONS: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];
/// Largest normalized identity discrepancy at the reference resolution.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;
/// Observed order over a fourfold refinement required of both identities;
/// the wall stencil of the solver is sixth order.
pub const REFINEMENT_ORDER: f64 = 6.0;
/// Discrepancies below this are round-off and skipped in refinement studies.
pub const ROUNDOFF_FLOOR: f64 = 1e-10;
/// Reference `ζ` levels of the solver mesh in the vorticity suite.
pub const REFERENCE_LEVELS: usize = 64;
pub const SCALING_GAMMA: f64 = 0.5;
pub const SCALING_SPREAD: f64 = 2.0;
pub const FLAT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckRecord>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn cell_region(eps: f64) -> Result<Region> {
    Ok(Region::rescaled_cell(&DomainParams::new(
        eps,
        2,
        RoughProfile::default_study(),
    )?))
}

fn decaying(region: &Region, grid: QuadGrid, exec: Exec) -> Result<Quadrature> {
    Quadrature::new(region, grid, Vertical::Decaying { scale: 0.5 }, exec)
}

/// `fields` random fields per inequality, spread over [`SUITE_EPSILONS`].
pub fn trace_suite(seed: u64, fields: usize, exec: Exec) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    let mut violations = [0usize; 3];
    for k in 0..fields {
        let r = cell_region(SUITE_EPSILONS[k % SUITE_EPSILONS.len()])?;
        let q = decaying(&r, QuadGrid::default(), exec)?;
        let f = FlattenedField::random_scalar(&r, 4, &mut rng);
        let v = FlattenedField::random_stream(&r, 4, &mut rng);
        let reports = [
            trace_inequality_check(|x| f.scalar(x), &q)?,
            curl_trace_check(|x| v.perp_gradient(x), &q)?,
            gradient_curl_check(|x| v.perp_gradient(x), &q)?,
        ];
        for (i, rep) in reports.iter().enumerate() {
            worst[i] = worst[i].max(rep.ratio / rep.bound());
            violations[i] += usize::from(!rep.holds());
        }
    }
    let names = ["trace", "curl trace", "gradient by curl"];
    let checks = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            CheckRecord::at_most(
                format!(
                    "{n}: worst ratio/bound over {fields} fields, {} violations",
                    violations[i]
                ),
                worst[i],
                1.0,
            )
        })
        .collect();
    Ok(SuiteReport {
        suite: "traces".into(),
        checks,
    })
}

/// `ln(first/last)/ln 4` and the largest step-to-step growth factor of a
/// sequence measured on grids refined fourfold overall.
fn refinement(gaps: &[f64]) -> Option<(f64, f64)> {
    if gaps[0] < ROUNDOFF_FLOOR {
        return None;
    }
    let last = gaps.iter().rposition(|&g| g >= ROUNDOFF_FLOOR).unwrap_or(0);
    let growth = gaps[..=last]
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let order = (gaps[0] / gaps[gaps.len() - 1].max(f64::MIN_POSITIVE)).ln() / 4f64.ln();
    Some((order, growth))
}

const REFINE_STEPS: [usize; 5] = [8, 12, 16, 24, 32];

fn ns_config(eps: f64, levels: usize) -> Result<NsConfig> {
    let mut c = NsConfig::new(
        DomainParams::new(eps, 2, RoughProfile::default_study())?,
        1e-2,
    );
    c.grid.levels = levels;
    c.grid.height = 2.0;
    c.friction = Friction::constant(1.0);
    Ok(c)
}

fn vorticity_gap(eps: f64, levels: usize, seed: u64, exec: Exec) -> Result<f64> {
    let s = NsSolver::new(ns_config(eps, levels)?, exec)?;
    let mms = Manufactured::random(s.config(), s.mesh(), &mut ChaCha8Rng::seed_from_u64(seed));
    let t = 0.7;
    let st = s.state_from_fields(t, mms.psi(t), mms.omega(t), 0.0);
    Ok(
        vorticity_bc_equivalence_check(&st, s.mesh(), &s.config().friction)
            / (1.0 + st.omega.amax()),
    )
}

/// Stretching identity and the two slip forms on `fields` random admissible
/// fields each, plus refinement studies on the first few.
pub fn identity_suite(seed: u64, fields: usize, exec: Exec) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let studied = fields.min(8);
    let mut stretch_worst = 0.0f64;
    let mut stretch_refine: Vec<(f64, f64)> = Vec::new();
    for k in 0..fields {
        let r = cell_region(SUITE_EPSILONS[k % SUITE_EPSILONS.len()])?;
        let v = FlattenedField::random_stream(&r, 4, &mut rng);
        let u = FlattenedField::random_stream(&r, 4, &mut rng);
        let check = |grid: QuadGrid| -> Result<f64> {
            let q = decaying(&r, grid, exec)?;
            Ok(
                stretch_identity_check(|x| v.perp_gradient(x), |x| u.perp_gradient(x), &q)?
                    .discrepancy,
            )
        };
        stretch_worst = stretch_worst.max(check(QuadGrid::default())?);
        if k < studied {
            let gaps = REFINE_STEPS
                .iter()
                .map(|&n| {
                    check(QuadGrid {
                        per_period: n,
                        vertical: n,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            stretch_refine.extend(refinement(&gaps));
        }
    }
    let mut vort_worst = 0.0f64;
    let mut vort_refine: Vec<(f64, f64)> = Vec::new();
    for k in 0..fields {
        let eps = [0.25, 0.125][k % 2];
        let field_seed = seed.wrapping_mul(1000).wrapping_add(k as u64);
        vort_worst = vort_worst.max(vorticity_gap(eps, REFERENCE_LEVELS, field_seed, exec)?);
        if k < studied {
            let gaps = REFINE_STEPS
                .iter()
                .map(|&n| vorticity_gap(eps, n, field_seed, exec))
                .collect::<Result<Vec<_>>>()?;
            vort_refine.extend(refinement(&gaps));
        }
    }
    let summarize = |name: &str, worst: f64, refine: &[(f64, f64)]| {
        let order = refine.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let growth = refine.iter().map(|r| r.1).fold(0.0, f64::max);
        vec![
            CheckRecord::at_most(
                format!("{name}: worst normalized discrepancy over {fields} fields"),
                worst,
                IDENTITY_TOLERANCE,
            ),
            CheckRecord::at_least(
                format!(
                    "{name}: least observed order over {} refinements",
                    refine.len()
                ),
                order,
                REFINEMENT_ORDER,
            ),
            CheckRecord::at_most(
                format!("{name}: largest growth between refinement steps"),
                growth,
                1.0,
            ),
        ]
    };
    let mut checks = summarize("stretch identity", stretch_worst, &stretch_refine);
    checks.extend(summarize("slip forms", vort_worst, &vort_refine));
    Ok(SuiteReport {
        suite: "identities".into(),
        checks,
    })
}

/// Wall value, wall slope, limit and monotonicity of the weight.
pub fn weight_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for (nu_tilde, m) in [(1e-3, 1.0), (0.5, 4.0), (2.0, 10.0), (1e-8, 1.5)] {
        let w = WeightSpec::new(nu_tilde, m)?;
        let tag = format!("ν̃ = {nu_tilde:e}, m = {m}");
        checks.push(CheckRecord::at_most(
            format!("φ(0) = 0 exactly ({tag})"),
            weight_phi(&w, 0.0).abs(),
            0.0,
        ));
        let len = (nu_tilde / m).sqrt();
        let h = 1e-7 * len;
        let slope = (weight_phi_derivative(&w, 0.0) - m.sqrt())
            .abs()
            .max((weight_phi(&w, h) / h - m.sqrt()).abs());
        checks.push(CheckRecord::at_most(
            format!("φ′(0) = √m ({tag})"),
            slope,
            1e-12,
        ));
        let closed = (nu_tilde * PI / 2.0).sqrt();
        let lim = (weight_phi(&w, 60.0 * len) - closed)
            .abs()
            .max((weight_limit(&w) - closed).abs());
        checks.push(CheckRecord::at_most(
            format!("φ(∞) = √(ν̃π/2) ({tag})"),
            lim,
            1e-10,
        ));
        let grid: Vec<f64> = (0..10_000)
            .map(|i| weight_phi(&w, 10.0 * len * i as f64 / 9_999.0))
            .collect();
        let drops = grid.windows(2).filter(|p| p[1] < p[0]).count();
        checks.push(CheckRecord::at_most(
            format!("decreasing steps on 10⁴ points ({tag})"),
            drops as f64,
            0.0,
        ));
    }
    Ok(SuiteReport {
        suite: "weight".into(),
        checks,
    })
}

/// Flat closed form `√(ε/(2(1−γ)))` and the spread of `LHS/√ε` for the
/// gradient of the first computed layer.
pub fn scaling_suite(cell: CellGrid, exec: Exec) -> Result<SuiteReport> {
    let mut flat_err = 0.0f64;
    for gamma in [0.25, SCALING_GAMMA] {
        for &eps in &SUITE_EPSILONS {
            let s = rescaled_l2(
                &Region::half_plane(eps),
                gamma,
                1.0,
                QuadGrid::default(),
                exec,
                |_, z| [(-z[1]).exp()],
            )?;
            let exact = (eps / (2.0 * (1.0 - gamma))).sqrt();
            flat_err = flat_err.max((s.lhs - exact).abs() / exact);
        }
    }
    let mut samples = Vec::new();
    for &eps in &SUITE_EPSILONS {
        let d = DomainParams::new(eps, 2, RoughProfile::default_study())?;
        let dom = std::sync::Arc::new(CellDomain::new(&d, cell)?);
        let cascade = CellCascade::build(dom.clone(), 2, 1)?;
        let psi = cascade
            .layer(1)
            .ok_or_else(|| Error::Dependency("cascade has no first layer".into()))?
            .psi_with(dom.grid(), |_| 1.0);
        let [g1, g2] = dom.grad(&psi);
        let (e1, e2) = (dom.evaluator(&g1), dom.evaluator(&g2));
        samples.push(rescaled_l2(
            &Region::physical(&d),
            SCALING_GAMMA,
            2.0 * PI,
            QuadGrid::default(),
            exec,
            |_, z| [e1.value(z), e2.value(z)],
        )?);
    }
    let report = rescaled_l2_scaling_check(samples)?;
    Ok(SuiteReport {
        suite: "scaling".into(),
        checks: vec![
            CheckRecord::at_most("flat closed form, relative error", flat_err, FLAT_TOLERANCE),
            CheckRecord::at_most(
                format!(
                    "first layer gradient, spread of LHS/√ε (slope {:.3})",
                    report.fit.slope
                ),
                report.spread,
                SCALING_SPREAD,
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_summary() {
        let (order, growth) = refinement(&[1e-2, 1e-4, 1e-6, 1e-8, 1e-10]).unwrap();
        assert!((order - 8.0 / 4f64.log10()).abs() < 1e-9 && growth < 0.011);
        assert!(refinement(&[1e-12, 1e-13, 1e-13, 1e-13, 1e-13]).is_none());
        let (_, g) = refinement(&[1e-3, 1e-5, 2e-5, 1e-9, 1e-13]).unwrap();
        assert_eq!(g, 2.0);
    }

    #[test]
    fn weight_suite_passes() {
        let r = weight_suite().unwrap();
        assert!(r.pass(), "{:#?}", r.checks);
    }

    #[test]
    fn small_trace_suite_passes() {
        let r = trace_suite(7, 8, Exec::Sequential).unwrap();
        assert!(r.pass(), "{:#?}", r.checks);
    }
}
