//! Sweep over `(ε, ν)`: build `u^app`, run Navier–Stokes from rest and
//! measure the three rate quantities at every snapshot of the bundle.

use super::config::{PairSpec, RunConfig};
use crate::diagnostics::{rate_fit, RateFit};
use crate::error::{Error, Result};
use crate::expansion::{ApproximationBundle, BandReport};
use crate::ns::{NsSolver, Resolution, ViscosityRegime};
use crate::par::Exec;
use serde::{Deserialize, Serialize};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// Measured part of a pair; absent when the pair failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMeasure {
    /// `sup_t ε^{−1/2}‖u − u^app‖_{L²}`.
    pub q_l2_scaled: f64,
    /// `sup_t ‖u − u^app‖_{L^∞}`.
    pub q_linf: f64,
    /// `sup_t ε‖curl(u − u^app)‖_{L^∞}`.
    pub q_curl_scaled: f64,
    /// `sup_t` of the `u^app` momentum residual.
    pub resid_linf: f64,
    pub resid_l2: f64,
    /// `sup_t ‖u·τ‖_{L^∞(wall)}` of the Navier–Stokes run.
    pub wall_tangent_linf: f64,
    pub ledger_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub epsilon: f64,
    pub nu: f64,
    pub alpha: f64,
    pub order: u32,
    pub grid_x1: usize,
    pub grid_x2: usize,
    pub t0: f64,
    pub resolution: Resolution,
    pub regime: ViscosityRegime,
    pub measure: Option<PairMeasure>,
    pub runtime_s: Option<f64>,
    pub status: Status,
    pub error: Option<String>,
}

impl SweepRecord {
    /// `q_l2_scaled / ε^α`.
    pub fn normalized_l2(&self) -> Option<f64> {
        self.measure
            .map(|m| m.q_l2_scaled / self.epsilon.powf(self.alpha))
    }
}

fn measure(cfg: &RunConfig, pair: &PairSpec, exec: Exec) -> Result<PairMeasure> {
    let domain = cfg.domain_for(pair.epsilon)?;
    let bundle = ApproximationBundle::compute(&domain, &cfg.forcing, &cfg.approx, exec)?;
    let band = BandReport::sup(&bundle.reports(&cfg.forcing, cfg.gamma, exec)?);
    let solver = NsSolver::new(cfg.ns_config(pair.epsilon, pair.nu)?, exec)?;
    let run = solver.run(&bundle.times(), None, |_| {})?;
    let eps = pair.epsilon;
    let mut m = PairMeasure {
        q_l2_scaled: 0.0,
        q_linf: 0.0,
        q_curl_scaled: 0.0,
        resid_linf: band.resid_linf,
        resid_l2: band.resid_l2,
        wall_tangent_linf: run
            .records
            .iter()
            .map(|r| r.wall_tangent_linf)
            .fold(0.0, f64::max),
        ledger_drift: run.ledger_drift,
    };
    for (i, s) in run.snapshots.iter().enumerate() {
        let d = solver.difference(s, &bundle, i)?;
        m.q_l2_scaled = m.q_l2_scaled.max(d.l2 / eps.sqrt());
        m.q_linf = m.q_linf.max(d.linf);
        m.q_curl_scaled = m.q_curl_scaled.max(eps * d.curl_linf);
    }
    if [
        m.q_l2_scaled,
        m.q_linf,
        m.q_curl_scaled,
        m.resid_linf,
        m.resid_l2,
    ]
    .iter()
    .any(|v| !v.is_finite())
    {
        return Err(Error::Internal("non-finite norm".into()));
    }
    Ok(m)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs one pair; errors and panics end up in the record.
pub fn run_pair(cfg: &RunConfig, pair: &PairSpec, exec: Exec) -> SweepRecord {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| measure(cfg, pair, exec)))
        .unwrap_or_else(|p| Err(Error::Internal(format!("panicked: {}", panic_message(p)))));
    let grid = cfg.ns.grid;
    let (measure, status, error) = match outcome {
        Ok(m) => (Some(m), Status::Ok, None),
        Err(e) => (None, Status::Failed, Some(e.to_string())),
    };
    SweepRecord {
        schema_version: SCHEMA_VERSION,
        epsilon: pair.epsilon,
        nu: pair.nu,
        alpha: cfg.alpha(),
        order: cfg.approx.order,
        grid_x1: (grid.per_period as f64 / pair.epsilon).round() as usize,
        grid_x2: grid.levels + 1,
        t0: cfg.ns.horizon,
        resolution: pair.resolution,
        regime: pair.regime,
        measure,
        runtime_s: cfg.timings.then(|| start.elapsed().as_secs_f64()),
        status,
        error,
    }
}

/// All pairs of the config, in sweep order. With more than one thread the
/// pairs run concurrently and each pair runs sequentially; with one thread
/// the pairs run in turn on the data-parallel kernels.
pub fn sweep(
    cfg: &RunConfig,
    on_done: impl Fn(&SweepRecord) + Sync + Send,
) -> Result<Vec<SweepRecord>> {
    let pairs = cfg.pairs()?;
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.threads
    };
    let one = |p: &PairSpec, exec: Exec| {
        let r = run_pair(cfg, p, exec);
        on_done(&r);
        r
    };
    if threads <= 1 {
        return Ok(pairs.iter().map(|p| one(p, Exec::Parallel)).collect());
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?;
        Ok(pool.install(|| pairs.par_iter().map(|p| one(p, Exec::Sequential)).collect()))
    }
    #[cfg(not(feature = "parallel"))]
    Ok(pairs.iter().map(|p| one(p, Exec::Sequential)).collect())
}

/// Rate verdict over a sweep: the `L^∞` slope against `ε` and the trend of
/// `ε^{−1/2}‖u − u^app‖_{L²}/ε^α`. Extrapolated and failed pairs are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVerdict {
    pub fit: Option<RateFit>,
    pub slope_floor: f64,
    pub normalized: Vec<(f64, f64)>,
    pub non_increasing: bool,
    pub excluded: usize,
    pub pass: bool,
}

/// Fraction of `α` the fitted slope has to reach.
pub const SLOPE_FRACTION: f64 = 0.8;

pub fn rate_verdict(records: &[SweepRecord]) -> Result<RateVerdict> {
    let mut kept: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| r.status == Status::Ok && r.resolution == Resolution::Resolved)
        .collect();
    let excluded = records.len() - kept.len();
    kept.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let alpha = kept.first().map_or(0.5, |r| r.alpha);
    let floor = SLOPE_FRACTION * alpha;
    let normalized: Vec<(f64, f64)> = kept
        .iter()
        .filter_map(|r| Some((r.epsilon, r.normalized_l2()?)))
        .collect();
    let non_increasing = normalized.windows(2).all(|w| w[1].1 <= w[0].1);
    let pts: Vec<(f64, f64)> = kept
        .iter()
        .filter_map(|r| Some((r.epsilon, r.measure?.q_linf)))
        .collect();
    if pts.iter().all(|p| p.1 == 0.0) && !pts.is_empty() {
        return Ok(RateVerdict {
            fit: None,
            slope_floor: floor,
            normalized,
            non_increasing,
            excluded,
            pass: true,
        });
    }
    let fit = rate_fit(&pts)?;
    let pass = fit.slope >= floor && non_increasing;
    Ok(RateVerdict {
        fit: Some(fit),
        slope_floor: floor,
        normalized,
        non_increasing,
        excluded,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellGrid;
    use crate::euler::{Forcing, StripGrid};
    use crate::ns::NsGrid;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.forcing = Forcing::zero();
        c.sweep.epsilons = vec![0.5, 0.25];
        c.approx.cell = CellGrid {
            modes: 8,
            degree: 24,
            z_max: 4.0,
        };
        c.approx.strip = StripGrid {
            modes: 16,
            degree: 16,
            height: 2.0,
        };
        c.approx.times = vec![0.05, 0.1];
        c.ns.grid = NsGrid {
            per_period: 8,
            levels: 24,
            height: 2.0,
            ..NsGrid::default()
        };
        c.ns.horizon = 0.1;
        c.ns.dt_scale = 0.01;
        c.timings = false;
        c
    }

    #[test]
    fn zero_forcing_gives_zero_quantities() {
        let recs = sweep(&tiny(), |_| {}).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert_eq!(r.status, Status::Ok, "{:?}", r.error);
            let m = r.measure.unwrap();
            assert_eq!([m.q_l2_scaled, m.q_linf, m.q_curl_scaled], [0.0; 3]);
        }
    }

    #[test]
    fn failures_stay_in_their_record() {
        let mut c = tiny();
        c.ns.sponge = -1.0;
        let recs = sweep(&c, |_| {}).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs
            .iter()
            .all(|r| r.status == Status::Failed && r.error.is_some() && r.measure.is_none()));
    }

    fn rec(eps: f64, l2: f64, linf: f64, res: Resolution) -> SweepRecord {
        SweepRecord {
            schema_version: SCHEMA_VERSION,
            epsilon: eps,
            nu: eps.powi(7),
            alpha: 0.5,
            order: 3,
            grid_x1: 0,
            grid_x2: 0,
            t0: 0.5,
            resolution: res,
            regime: ViscosityRegime::InWindow,
            measure: Some(PairMeasure {
                q_l2_scaled: l2,
                q_linf: linf,
                q_curl_scaled: 0.0,
                resid_linf: 0.0,
                resid_l2: 0.0,
                wall_tangent_linf: 0.0,
                ledger_drift: 0.0,
            }),
            runtime_s: None,
            status: Status::Ok,
            error: None,
        }
    }

    #[test]
    fn verdict_skips_extrapolated_pairs() {
        let r = [
            rec(0.25, 0.5, 0.5, Resolution::Resolved),
            rec(0.125, 0.3, 0.35, Resolution::Resolved),
            rec(0.0625, 0.2, 0.25, Resolution::Resolved),
            rec(0.03125, 9.0, 9.0, Resolution::Extrapolated),
        ];
        let v = rate_verdict(&r).unwrap();
        assert_eq!(v.excluded, 1);
        assert!((v.fit.unwrap().slope - 0.5).abs() < 1e-12);
        assert!(v.non_increasing && v.pass);
    }

    #[test]
    fn verdict_fails_on_growth() {
        let r = [
            rec(0.25, 0.1, 0.5, Resolution::Resolved),
            rec(0.125, 0.3, 0.35, Resolution::Resolved),
            rec(0.0625, 0.2, 0.25, Resolution::Resolved),
        ];
        assert!(!rate_verdict(&r).unwrap().pass);
    }
}
