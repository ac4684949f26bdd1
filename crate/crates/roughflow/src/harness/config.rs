//! Run configuration: one TOML file, validated eagerly.
//!
//! Errors carry the key path of the offending entry (`sweep.epsilons[2]`);
//! syntax and schema errors carry the line and column reported by `toml`.

use crate::error::{Error, Result};
use crate::euler::Forcing;
use crate::expansion::ApproxSetup;
use crate::geometry::{DomainParams, RoughProfile};
use crate::ns::{
    classify, Friction, NsConfig, NsGrid, Resolution, ViscosityRegime, WindowConstants,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable that overrides [`RunConfig::output`].
pub const OUTPUT_ENV: &str = "ROUGHFLOW_OUTPUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSpec {
    pub n0: u32,
    /// Mean of `η`.
    pub mean: f64,
    /// `(j, re, im)` Fourier coefficients of `η − mean`, in conjugate pairs.
    pub modes: Vec<(i64, f64, f64)>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            n0: 2,
            mean: 2.0,
            modes: vec![(-1, 0.5, 0.0), (1, 0.5, 0.0)],
        }
    }
}

impl DomainSpec {
    pub fn profile(&self) -> Result<RoughProfile> {
        RoughProfile::from_triples(self.mean, &self.modes)
    }
}

/// `ε` list and the viscosity rule `ν = scale·ε^power`, or explicit `ν` values
/// crossed with every `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
    pub nu_power: i32,
    pub nu_scale: f64,
    pub nus: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            epsilons: vec![0.25, 0.125, 0.0625],
            nu_power: 7,
            nu_scale: 1.0,
            nus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsSpec {
    pub grid: NsGrid,
    /// `Δt = dt_scale·ε`, which keeps the advective Courant number fixed.
    pub dt_scale: f64,
    pub horizon: f64,
    pub sponge: f64,
    pub window: WindowConstants,
    pub theorem_mode: bool,
}

impl Default for NsSpec {
    fn default() -> Self {
        Self {
            grid: NsGrid::default(),
            dt_scale: 8e-3,
            horizon: 0.5,
            sponge: 20.0,
            window: WindowConstants::default(),
            theorem_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub forcing: Forcing,
    pub friction: Friction,
    pub approx: ApproxSetup,
    /// Weight `e^{γx₂/ε}` of the weighted residual norms.
    pub gamma: f64,
    pub ns: NsSpec,
    pub sweep: SweepSpec,
    pub output: PathBuf,
    /// Pairs run concurrently; 0 means one per core.
    pub threads: usize,
    pub seed: u64,
    /// Write wall-clock times into the outputs. Off gives byte-identical reruns.
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::default(),
            forcing: Forcing::default_study(),
            friction: Friction::default(),
            approx: ApproxSetup::default(),
            gamma: 0.5,
            ns: NsSpec::default(),
            sweep: SweepSpec::default(),
            output: PathBuf::from("out"),
            threads: 1,
            seed: 42,
            timings: true,
        }
    }
}

/// One `(ε, ν)` point of the sweep with its tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub epsilon: f64,
    pub nu: f64,
    pub resolution: Resolution,
    pub regime: ViscosityRegime,
}

fn at(key: impl Into<String>, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {e}", key.into()))
}

fn is_dyadic(eps: f64) -> bool {
    let inv = (1.0 / eps).round() as u64;
    inv.is_power_of_two()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn alpha(&self) -> f64 {
        1.0 / f64::from(self.domain.n0)
    }

    pub fn domain_for(&self, eps: f64) -> Result<DomainParams> {
        DomainParams::new(eps, self.domain.n0, self.domain.profile()?)
    }

    pub fn ns_config(&self, eps: f64, nu: f64) -> Result<NsConfig> {
        let mut c = NsConfig::new(self.domain_for(eps)?, nu);
        c.friction = self.friction.clone();
        c.forcing = self.forcing.clone();
        c.grid = self.ns.grid;
        c.dt = self.ns.dt_scale * eps;
        c.horizon = self.ns.horizon;
        c.sponge = self.ns.sponge;
        c.window = self.ns.window;
        c.theorem_mode = self.ns.theorem_mode;
        Ok(c)
    }

    /// Every `(ε, ν)` pair in sweep order: `ε` outer, `ν` inner.
    pub fn pairs(&self) -> Result<Vec<PairSpec>> {
        let mut out = Vec::new();
        for &eps in &self.sweep.epsilons {
            let nus = if self.sweep.nus.is_empty() {
                vec![self.sweep.nu_scale * eps.powi(self.sweep.nu_power)]
            } else {
                self.sweep.nus.clone()
            };
            for nu in nus {
                let c = self.ns_config(eps, nu)?;
                out.push(PairSpec {
                    epsilon: eps,
                    nu,
                    resolution: classify(&c)?,
                    regime: c.regime(),
                });
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain.n0 == 0 {
            return Err(at("domain.n0", "must be at least 1"));
        }
        let profile = self.domain.profile().map_err(|e| at("domain", e))?;
        if profile.min_value() <= 0.0 {
            return Err(at("domain", "inf η must be positive"));
        }
        self.forcing.validate().map_err(|e| at("forcing", e))?;
        if self.approx.order == 0 {
            return Err(at("approx.order", "expansion order must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 2.0 * std::f64::consts::PI) {
            return Err(at(
                "gamma",
                format!("must lie in (0, 2π), got {}", self.gamma),
            ));
        }
        if self.sweep.epsilons.is_empty() {
            return Err(at("sweep.epsilons", "empty"));
        }
        for (i, &eps) in self.sweep.epsilons.iter().enumerate() {
            let key = format!("sweep.epsilons[{i}]");
            if !(eps > 0.0 && eps < 1.0) {
                return Err(at(key, format!("ε must lie in (0, 1), got {eps}")));
            }
            let inv = 1.0 / eps;
            if (inv - inv.round()).abs() > 1e-9 * inv {
                return Err(at(key, format!("1/ε must be an integer, got ε = {eps}")));
            }
            if !is_dyadic(eps) {
                return Err(at(
                    key,
                    format!("sweep ε must be dyadic, got 1/ε = {}", inv.round()),
                ));
            }
        }
        for (i, &nu) in self.sweep.nus.iter().enumerate() {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(at(
                    format!("sweep.nus[{i}]"),
                    format!("ν must be positive, got {nu}"),
                ));
            }
        }
        if !(self.sweep.nu_scale > 0.0) {
            return Err(at("sweep.nu_scale", "must be positive"));
        }
        if !(self.ns.dt_scale > 0.0) {
            return Err(at("ns.dt_scale", "must be positive"));
        }
        self.ns.grid.validate().map_err(|e| at("ns.grid", e))?;
        for &eps in &self.sweep.epsilons {
            let c = self.ns_config(eps, 1.0)?;
            let dt = c.dt;
            c.validate()
                .map_err(|e| at("ns", format!("at ε = {eps}: {e}")))?;
            for (i, &t) in self.approx.times.iter().enumerate() {
                let k = (t / dt).round();
                if t < 0.0 || t > self.ns.horizon + 1e-12 || (k * dt - t).abs() > 1e-9 * t.max(1.0)
                {
                    return Err(at(
                        format!("approx.times[{i}]"),
                        format!(
                            "{t} is not a step of the ε = {eps} run (Δt = {dt}, horizon {})",
                            self.ns.horizon
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.clone())
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c.domain.n0, 2);
        assert_eq!(c.approx.order, 3);
        assert_eq!(c.sweep.nu_power, 7);
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn non_integer_inverse_is_rejected() {
        let e = RunConfig::from_toml_str("[sweep]\nepsilons = [0.25, 0.3]")
            .unwrap_err()
            .to_string();
        assert!(
            e.contains("sweep.epsilons[1]") && e.contains("1/ε must be an integer"),
            "{e}"
        );
    }

    #[test]
    fn non_dyadic_is_rejected() {
        let e = RunConfig::from_toml_str("[sweep]\nepsilons = [0.2]")
            .unwrap_err()
            .to_string();
        assert!(e.contains("dyadic"), "{e}");
    }

    #[test]
    fn negative_profile_is_rejected() {
        let e = RunConfig::from_toml_str(
            "[domain]\nmean = 0.5\nmodes = [[-1, 0.5, 0.0], [1, 0.5, 0.0]]",
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("domain") && e.contains("positive"), "{e}");
    }

    #[test]
    fn unknown_keys_report_position() {
        let e = RunConfig::from_toml_str("[sweep]\nepsilon = [0.25]")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2") || e.contains("epsilon"), "{e}");
    }

    #[test]
    fn times_must_be_steps() {
        let e = RunConfig::from_toml_str("[approx]\ntimes = [0.2501]")
            .unwrap_err()
            .to_string();
        assert!(e.contains("approx.times[0]"), "{e}");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(
            RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap(),
            c
        );
    }

    #[test]
    fn default_pairs_follow_the_power_rule() {
        let p = RunConfig::default().pairs().unwrap();
        assert_eq!(p.len(), 3);
        for q in &p {
            assert!((q.nu - q.epsilon.powi(7)).abs() < 1e-18);
            assert_eq!(q.resolution, Resolution::Resolved);
        }
    }
}
