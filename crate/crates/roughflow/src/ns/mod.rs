//! Navier–Stokes flow above the rough wall with impermeability and the
//! Navier friction condition, in vorticity–streamfunction form on the
//! flattened coordinates `(x₁, ζ = x₂ − b(x₁))`.
//!
//! The flattening has unit Jacobian, so `u·∇ω = ∂_{x₁}ψ ∂_ζω − ∂_ζψ ∂_{x₁}ω`
//! and the wall-normal contravariant velocity is just `∂_{x₁}ψ`. Diffusion is
//! Crank–Nicolson, advection is Heun. The slip condition enters as the wall
//! vorticity `ω = (2κ + λ) u·τ`, relaxed to a fixed point inside each stage.
//! The lid sits at `ζ = L`, is a streamline, and a sponge damps vorticity
//! above `L/2`.

pub mod manufactured;
mod mesh;

pub use mesh::{layer_thickness, stretched_nodes, Mesh, NsGrid};

use crate::error::{invalid, Error, Result};
use crate::euler::{smooth_ramp, Forcing};
use crate::expansion::ApproximationBundle;
use crate::geometry::{DomainParams, Frame};
use crate::linalg::{BlockLu, BlockTridiag, CMat, CVec};
use crate::par::{map_range, Exec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionMode {
    pub wavenumber: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `λ(x₁) = mean + Σ (cos_k cos 2πkx₁ + sin_k sin 2πkx₁)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Friction {
    pub mean: f64,
    #[serde(default)]
    pub modes: Vec<FrictionMode>,
}

impl Friction {
    pub fn constant(mean: f64) -> Self {
        Self {
            mean,
            modes: Vec::new(),
        }
    }

    pub fn derivative(&self, x1: f64, order: u32) -> f64 {
        let mut v = if order == 0 { self.mean } else { 0.0 };
        for m in &self.modes {
            let k = 2.0 * PI * m.wavenumber as f64;
            let (s, c) = (k * x1).sin_cos();
            // d^n/dx^n of cos and sin cycle through (c, −s, −c, s).
            let (dc, ds) = match order % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            v += k.powi(order as i32) * (m.cos * dc + m.sin * ds);
        }
        v
    }

    pub fn value(&self, x1: f64) -> f64 {
        self.derivative(x1, 0)
    }

    /// `Σ_{j≤2} sup|λ^{(j)}|`, sampled finely enough to resolve every mode.
    pub fn c2_norm(&self) -> f64 {
        let kmax = self.modes.iter().map(|m| m.wavenumber).max().unwrap_or(0) as usize;
        let n = 64 * (kmax + 1);
        (0..=2)
            .map(|o| {
                (0..n)
                    .map(|i| self.derivative(i as f64 / n as f64, o).abs())
                    .fold(0.0, f64::max)
            })
            .sum()
    }
}

/// Whether the wall layer is honestly resolved by the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Resolved,
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViscosityRegime {
    InWindow,
    OutsideWindow,
}

/// Constants standing in for the `≲` of the admissible parameter window:
/// `ε^{n1} ≤ ν ≤ upper·ε⁷` and `|λ|_{C²} ≤ friction·ε^{α−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConstants {
    pub n1: u32,
    pub upper: f64,
    pub friction: f64,
}

impl Default for WindowConstants {
    fn default() -> Self {
        Self {
            n1: 12,
            upper: 1e3,
            friction: 1.0,
        }
    }
}

/// Cells required inside one viscous thickness for a run to count as resolved.
pub const LAYER_CELLS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsConfig {
    pub domain: DomainParams,
    pub nu: f64,
    #[serde(default)]
    pub friction: Friction,
    pub forcing: Forcing,
    pub grid: NsGrid,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub theorem_mode: bool,
    #[serde(default)]
    pub window: WindowConstants,
    /// Peak damping rate of the sponge above `L/2`.
    pub sponge: f64,
    pub wall_tolerance: f64,
    pub max_wall_iterations: usize,
    /// Advective Courant bound checked before every step.
    pub cfl: f64,
}

impl NsConfig {
    pub fn new(domain: DomainParams, nu: f64) -> Self {
        Self {
            domain,
            nu,
            friction: Friction::default(),
            forcing: Forcing::default_study(),
            grid: NsGrid::default(),
            dt: 2e-3,
            horizon: 0.5,
            theorem_mode: false,
            window: WindowConstants::default(),
            sponge: 20.0,
            wall_tolerance: 1e-9,
            max_wall_iterations: 200,
            cfl: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(invalid(format!("ν must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt <= self.horizon) {
            return Err(invalid("need 0 < dt ≤ horizon"));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(invalid("horizon must be a whole number of steps"));
        }
        if !(self.sponge >= 0.0 && self.wall_tolerance > 0.0 && self.cfl > 0.0) {
            return Err(invalid(
                "sponge, wall tolerance and cfl must be non-negative / positive",
            ));
        }
        self.grid.validate()?;
        self.forcing.validate()?;
        if self.theorem_mode {
            let eps = self.domain.epsilon();
            let bound = self.window.friction * eps.powf(self.domain.alpha() - 1.0);
            let c2 = self.friction.c2_norm();
            if c2 > bound {
                return Err(Error::Contract(format!(
                    "|λ|_C² = {c2:.3e} exceeds {bound:.3e}"
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn regime(&self) -> ViscosityRegime {
        let eps = self.domain.epsilon();
        let lo = eps.powi(self.window.n1 as i32);
        let hi = self.window.upper * eps.powi(7);
        if self.nu >= lo && self.nu <= hi {
            ViscosityRegime::InWindow
        } else {
            ViscosityRegime::OutsideWindow
        }
    }

    pub fn layer_thickness(&self) -> f64 {
        layer_thickness(self.nu, self.domain.epsilon())
    }
}

/// Extra vorticity source and wall data, used by manufactured solutions.
pub trait VorticitySource: Sync {
    /// Added to the right-hand side of the vorticity equation.
    fn interior(&self, t: f64, x1: f64, zeta: f64) -> f64;
    /// Added to the wall vorticity.
    fn wall(&self, _t: f64, _x1: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsState {
    pub time: f64,
    /// Rows are `ζ` levels, columns are `x₁` points.
    pub omega: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    /// Mean `u₁` on the lid.
    pub gamma: f64,
    /// `u·τ` on the wall.
    pub wall_tangent: Vec<f64>,
}

impl NsState {
    pub fn is_zero(&self) -> bool {
        self.gamma == 0.0 && self.omega.iter().chain(self.psi.iter()).all(|&v| v == 0.0)
    }
}

/// Power balance `dE/dt = forcing_work − dissipation + wall_work`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    /// `∫ f·u`.
    pub forcing_work: f64,
    /// `2ν ∫ |D(u)|²`.
    pub dissipation: f64,
    /// `ν ∫_wall λ |u·τ|² ds`, positive for `λ > 0` with the inward normal.
    pub wall_work: f64,
}

impl EnergyBudget {
    pub fn rate(&self) -> f64 {
        self.forcing_work - self.dissipation + self.wall_work
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub u_l2: f64,
    pub u_linf: f64,
    pub omega_linf: f64,
    pub wall_tangent_linf: f64,
    pub budget: EnergyBudget,
    /// `E(t) − E(0) − ∫₀ᵗ dE/dt`, integrated with the trapezoid rule.
    pub ledger_defect: f64,
    pub wall_iterations: usize,
}

impl StepRecord {
    /// One-line progress record `{t, E, omega_linf, dt}`.
    pub fn progress_json(&self) -> String {
        serde_json::json!({"t": self.t, "E": self.energy, "omega_linf": self.omega_linf, "dt": self.dt}).to_string()
    }
}

#[derive(Debug, Clone)]
pub struct NsRun {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<NsState>,
    pub final_state: NsState,
    /// `max_t |ledger_defect|` relative to the largest energy scale of the run.
    pub ledger_drift: f64,
}

/// `u − u^app` measured on the solver grid at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceNorms {
    pub time: f64,
    pub l2: f64,
    pub linf: f64,
    pub curl_linf: f64,
}

pub struct NsSolver {
    config: NsConfig,
    mesh: Mesh,
    exec: Exec,
    laplacian: Vec<BlockTridiag>,
    poisson: Vec<BlockLu>,
    implicit: Vec<BlockLu>,
    sponge: Vec<f64>,
    friction: Vec<f64>,
}

impl std::fmt::Debug for NsSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NsSolver")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

struct StageOutput {
    state: NsState,
    iterations: usize,
}

impl NsSolver {
    pub fn new(config: NsConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        let mesh = Mesh::new(&config.domain, config.grid, config.layer_thickness())?;
        let n = mesh.levels();
        let k = mesh.per_period();
        let height = mesh.grid.height;
        let sponge: Vec<f64> = mesh
            .zeta
            .iter()
            .map(|&z| config.sponge * smooth_ramp((z - 0.5 * height) / (0.5 * height)).0)
            .collect();
        let friction: Vec<f64> = mesh.x1.iter().map(|&x| config.friction.value(x)).collect();
        let eye = CMat::identity(k, k);
        let laplacian: Vec<BlockTridiag> = map_range(exec, mesh.periods, |r| {
            let mut sys = BlockTridiag::zeros(n + 1, k);
            for j in 1..n {
                let (lo, di, up) = mesh.laplacian_blocks(r, j);
                sys.lower[j] = lo;
                sys.diag[j] = di;
                sys.upper[j] = up;
            }
            sys
        });
        let half = Complex64::new(0.5 * config.dt * config.nu, 0.0);
        let factored: Vec<Result<(BlockLu, BlockLu)>> = map_range(exec, mesh.periods, |r| {
            let lap = &laplacian[r];
            let mut imp = BlockTridiag::zeros(n + 1, k);
            let mut poi = lap.clone();
            imp.diag[0] = eye.clone();
            imp.diag[n] = eye.clone();
            poi.diag[0] = eye.clone();
            poi.upper[0] = CMat::zeros(k, k);
            poi.diag[n] = eye.clone();
            poi.lower[n] = CMat::zeros(k, k);
            if r == 0 {
                // mean mode: −∂_ζψ₀(L) = Γ, first order
                let h = mesh.zeta[n] - mesh.zeta[n - 1];
                poi.diag[n][(0, 0)] = Complex64::new(1.0 / h, 0.0);
                poi.lower[n][(0, 0)] = Complex64::new(-1.0 / h, 0.0);
            }
            for j in 1..n {
                let damp = Complex64::new(1.0 + 0.5 * config.dt * sponge[j], 0.0);
                imp.lower[j] = -&lap.lower[j] * half;
                imp.diag[j] = &eye * damp - &lap.diag[j] * half;
                imp.upper[j] = -&lap.upper[j] * half;
            }
            Ok((poi.factor()?, imp.factor()?))
        });
        let mut poisson = Vec::with_capacity(mesh.periods);
        let mut implicit = Vec::with_capacity(mesh.periods);
        for f in factored {
            let (p, i) = f?;
            poisson.push(p);
            implicit.push(i);
        }
        Ok(Self {
            config,
            mesh,
            exec,
            laplacian,
            poisson,
            implicit,
            sponge,
            friction,
        })
    }

    pub fn config(&self) -> &NsConfig {
        &self.config
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Resolved iff the `x₁` grid has at least 4 points per roughness period
    /// and at least [`LAYER_CELLS`] cells sit inside one viscous thickness.
    pub fn resolution(&self) -> Resolution {
        Resolution::of(&self.mesh, self.config.layer_thickness())
    }

    pub fn init_state(&self) -> NsState {
        let z = self.mesh.zeros();
        NsState {
            time: 0.0,
            omega: z.clone(),
            psi: z.clone(),
            u1: z.clone(),
            u2: z,
            gamma: 0.0,
            wall_tangent: vec![0.0; self.mesh.nx],
        }
    }

    /// Builds a state from a streamfunction and vorticity given on the grid.
    pub fn state_from_fields(
        &self,
        time: f64,
        psi: DMatrix<f64>,
        omega: DMatrix<f64>,
        gamma: f64,
    ) -> NsState {
        let (u1, u2) = self.velocity(&psi);
        let wall_tangent = self.wall_tangent(&u1, &u2);
        NsState {
            time,
            omega,
            psi,
            u1,
            u2,
            gamma,
            wall_tangent,
        }
    }

    fn velocity(&self, psi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let pz = self.mesh.d_zeta(psi);
        let px = self.mesh.d_x1(psi);
        let u1 = -&pz;
        let mut u2 = px;
        for i in 0..self.mesh.nx {
            let b1 = self.mesh.wall[i].d1;
            for j in 0..self.mesh.nz() {
                u2[(j, i)] -= b1 * pz[(j, i)];
            }
        }
        (u1, u2)
    }

    fn wall_tangent(&self, u1: &DMatrix<f64>, u2: &DMatrix<f64>) -> Vec<f64> {
        (0..self.mesh.nx)
            .map(|i| {
                let f = Frame::from_slope(self.mesh.wall[i].d1);
                u1[(0, i)] * f.tau[0] + u2[(0, i)] * f.tau[1]
            })
            .collect()
    }

    /// Largest stable step for the current velocity.
    pub fn cfl_limit(&self, s: &NsState) -> f64 {
        let dx = 1.0 / self.mesh.nx as f64;
        let px = self.mesh.d_x1(&s.psi);
        let n = self.mesh.levels();
        let mut rate = 0.0f64;
        for j in 0..=n {
            let dz = match j {
                0 => self.mesh.zeta[1],
                _ if j == n => self.mesh.zeta[n] - self.mesh.zeta[n - 1],
                _ => (self.mesh.zeta[j + 1] - self.mesh.zeta[j])
                    .min(self.mesh.zeta[j] - self.mesh.zeta[j - 1]),
            };
            for i in 0..self.mesh.nx {
                rate = rate.max(PI * s.u1[(j, i)].abs() / dx + px[(j, i)].abs() / dz);
            }
        }
        if rate == 0.0 {
            f64::INFINITY
        } else {
            self.config.cfl / rate
        }
    }

    /// `−u·∇ω + curl f + source`, with the advective part 2/3-filtered in `x₁`.
    fn explicit_terms(&self, s: &NsState, source: Option<&dyn VorticitySource>) -> DMatrix<f64> {
        let m = &self.mesh;
        let pz = -&s.u1;
        let px = m.d_x1(&s.psi);
        let wz = m.d_zeta(&s.omega);
        let wx = m.d_x1(&s.omega);
        let mut adv = m.zeros();
        for j in 0..m.nz() {
            for i in 0..m.nx {
                adv[(j, i)] = pz[(j, i)] * wx[(j, i)] - px[(j, i)] * wz[(j, i)];
            }
        }
        let cut = m.nx / 3;
        for j in 0..m.nz() {
            let mut c = m.level_coefficients(&adv, j);
            for (idx, ci) in c.iter_mut().enumerate() {
                if m.fft.wavenumber(idx).unsigned_abs() as usize > cut || m.fft.is_nyquist(idx) {
                    *ci = Complex64::new(0.0, 0.0);
                }
            }
            for (i, v) in m.fft.inverse(&c).into_iter().enumerate() {
                adv[(j, i)] = v;
            }
        }
        let t = s.time;
        let forced = !self.config.forcing.is_zero();
        if forced || source.is_some() {
            for j in 1..m.levels() {
                for i in 0..m.nx {
                    let mut v = 0.0;
                    if forced {
                        v += self.config.forcing.curl(t, m.x1[i], m.x2(j, i));
                    }
                    if let Some(src) = source {
                        v += src.interior(t, m.x1[i], m.zeta[j]);
                    }
                    adv[(j, i)] += v;
                }
            }
        }
        adv
    }

    /// Rate of change of the lid velocity Γ.
    fn lid_rate(&self, s: &NsState) -> f64 {
        let m = &self.mesh;
        let n = m.levels();
        let tw = m.top_d1;
        let mut acc = 0.0;
        for i in 0..m.nx {
            let f1 = self.config.forcing.value(s.time, m.x1[i], m.x2(n, i))[0];
            let dwz =
                tw[0] * s.omega[(n, i)] + tw[1] * s.omega[(n - 1, i)] + tw[2] * s.omega[(n - 2, i)];
            acc += f1 - self.config.nu * dwz;
        }
        acc / m.nx as f64
    }

    /// `ω + (Δt/2)(νΔω − σω)` on interior levels.
    fn diffusion_half(&self, s: &NsState) -> DMatrix<f64> {
        let m = &self.mesh;
        let fam = m.to_families(&s.omega, 0..m.nz());
        let lap: Vec<Vec<CVec>> =
            map_range(self.exec, m.periods, |r| self.laplacian[r].apply(&fam[r]));
        let lap = m.from_families(&lap);
        let mut out = s.omega.clone();
        let h = 0.5 * self.config.dt;
        for j in 1..m.levels() {
            for i in 0..m.nx {
                out[(j, i)] +=
                    h * (self.config.nu * lap[(j, i)] - self.sponge[j] * s.omega[(j, i)]);
            }
        }
        out
    }

    /// Solves `(I − Δt/2(νΔ − σ))ω = rhs` and `Δψ = ω`, with the wall vorticity
    /// relaxed until it matches `(2κ + λ)u·τ` (plus the source's wall term).
    fn implicit_stage(
        &self,
        rhs: &DMatrix<f64>,
        time: f64,
        gamma: f64,
        mut wall: Vec<f64>,
        source: Option<&dyn VorticitySource>,
    ) -> Result<StageOutput> {
        let m = &self.mesh;
        let n = m.levels();
        let k = m.per_period();
        let base = m.to_families(rhs, 1..n);
        let extra: Vec<f64> = match source {
            Some(src) => m.x1.iter().map(|&x| src.wall(time, x)).collect(),
            None => vec![0.0; m.nx],
        };
        let tol = self.config.wall_tolerance;
        for it in 1..=self.config.max_wall_iterations {
            let mut fam = base.clone();
            m.set_level(&mut fam, 0, &wall);
            let omega: Vec<Vec<CVec>> =
                map_range(self.exec, m.periods, |r| self.implicit[r].solve(&fam[r]));
            let psi: Vec<Vec<CVec>> = map_range(self.exec, m.periods, |r| {
                let mut b = omega[r].clone();
                b[0] = CVec::zeros(k);
                b[n] = CVec::zeros(k);
                if r == 0 {
                    b[n][0] = Complex64::new(-gamma, 0.0);
                }
                self.poisson[r].solve(&b)
            });
            let w = m.wall_d1;
            let mut c = vec![Complex64::new(0.0, 0.0); m.nx];
            for (r, f) in psi.iter().enumerate() {
                for q in 0..k {
                    c[r + q * m.periods] = f[0][q] * w[0] + f[1][q] * w[1] + f[2][q] * w[2];
                }
            }
            let psi_z = m.fft.inverse(&c);
            let next: Vec<f64> = (0..m.nx)
                .map(|i| {
                    let tangent = -m.arclength[i] * psi_z[i];
                    (2.0 * m.curvature[i] + self.friction[i]) * tangent + extra[i]
                })
                .collect();
            let scale = next.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let diff = next
                .iter()
                .zip(&wall)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if diff <= tol * scale {
                let omega = m.from_families(&omega);
                let psi = m.from_families(&psi);
                return Ok(StageOutput {
                    state: self.state_from_fields(time, psi, omega, gamma),
                    iterations: it,
                });
            }
            if !diff.is_finite() {
                break;
            }
            wall = next;
        }
        Err(Error::Solver(format!(
            "wall vorticity did not settle within {} iterations at t = {time}",
            self.config.max_wall_iterations
        )))
    }

    /// One Heun/Crank–Nicolson step.
    pub fn step(&self, s: &NsState, source: Option<&dyn VorticitySource>) -> Result<NsState> {
        self.step_counted(s, source).map(|(s, _)| s)
    }

    fn step_counted(
        &self,
        s: &NsState,
        source: Option<&dyn VorticitySource>,
    ) -> Result<(NsState, usize)> {
        let dt = self.config.dt;
        let limit = self.cfl_limit(s);
        if dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
        let base = self.diffusion_half(s);
        let n0 = self.explicit_terms(s, source);
        let g0 = self.lid_rate(s);
        let wall0: Vec<f64> = s.omega.row(0).iter().copied().collect();
        let rhs1 = &base + &n0 * dt;
        let t1 = s.time + dt;
        let st1 = self.implicit_stage(&rhs1, t1, s.gamma + dt * g0, wall0, source)?;
        let n1 = self.explicit_terms(&st1.state, source);
        let g1 = self.lid_rate(&st1.state);
        let rhs2 = &base + (&n0 + &n1) * (0.5 * dt);
        let wall1: Vec<f64> = st1.state.omega.row(0).iter().copied().collect();
        let st2 = self.implicit_stage(&rhs2, t1, s.gamma + 0.5 * dt * (g0 + g1), wall1, source)?;
        Ok((st2.state, st1.iterations + st2.iterations))
    }

    pub fn energy(&self, s: &NsState) -> f64 {
        let e = s.u1.component_mul(&s.u1) + s.u2.component_mul(&s.u2);
        0.5 * self.mesh.integrate(&e)
    }

    pub fn budget(&self, s: &NsState) -> EnergyBudget {
        let m = &self.mesh;
        let mut work = m.zeros();
        if !self.config.forcing.is_zero() {
            for j in 0..m.nz() {
                for i in 0..m.nx {
                    let f = self.config.forcing.value(s.time, m.x1[i], m.x2(j, i));
                    work[(j, i)] = f[0] * s.u1[(j, i)] + f[1] * s.u2[(j, i)];
                }
            }
        }
        let [g11, g12, g21, g22] = self.velocity_gradient(s);
        let mut d2 = m.zeros();
        for j in 0..m.nz() {
            for i in 0..m.nx {
                let off = 0.5 * (g12[(j, i)] + g21[(j, i)]);
                d2[(j, i)] = g11[(j, i)].powi(2) + g22[(j, i)].powi(2) + 2.0 * off * off;
            }
        }
        let wall_work = self.config.nu
            * (0..m.nx)
                .map(|i| self.friction[i] * s.wall_tangent[i].powi(2) * m.arclength[i])
                .sum::<f64>()
            / m.nx as f64;
        EnergyBudget {
            forcing_work: m.integrate(&work),
            dissipation: 2.0 * self.config.nu * m.integrate(&d2),
            wall_work,
        }
    }

    /// `[∂₁u₁, ∂₂u₁, ∂₁u₂, ∂₂u₂]` in physical variables.
    pub fn velocity_gradient(&self, s: &NsState) -> [DMatrix<f64>; 4] {
        let m = &self.mesh;
        let grad = |u: &DMatrix<f64>| {
            let uz = m.d_zeta(u);
            let mut ux = m.d_x1(u);
            for i in 0..m.nx {
                let b1 = m.wall[i].d1;
                for j in 0..m.nz() {
                    ux[(j, i)] -= b1 * uz[(j, i)];
                }
            }
            (ux, uz)
        };
        let (a, b) = grad(&s.u1);
        let (c, d) = grad(&s.u2);
        [a, b, c, d]
    }

    pub fn record(&self, s: &NsState, defect: f64, iterations: usize) -> StepRecord {
        let speed = s.u1.component_mul(&s.u1) + s.u2.component_mul(&s.u2);
        StepRecord {
            t: s.time,
            dt: self.config.dt,
            energy: 0.5 * self.mesh.integrate(&speed),
            u_l2: self.mesh.integrate(&speed).sqrt(),
            u_linf: speed.amax().sqrt(),
            omega_linf: s.omega.amax(),
            wall_tangent_linf: s.wall_tangent.iter().fold(0.0, |a, v| a.max(v.abs())),
            budget: self.budget(s),
            ledger_defect: defect,
            wall_iterations: iterations,
        }
    }

    /// Integrates from rest to the horizon, keeping snapshots at `record_times`
    /// (each rounded to the nearest step).
    pub fn run(
        &self,
        record_times: &[f64],
        source: Option<&dyn VorticitySource>,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<NsRun> {
        let dt = self.config.dt;
        let steps = self.config.steps();
        let wanted: Vec<usize> = record_times
            .iter()
            .map(|&t| {
                let k = (t / dt).round();
                if t < 0.0 || (k * dt - t).abs() > 1e-9 * t.max(1.0) || k as usize > steps {
                    Err(invalid(format!("record time {t} is not a step of the run")))
                } else {
                    Ok(k as usize)
                }
            })
            .collect::<Result<_>>()?;
        let mut state = self.init_state();
        let first = self.record(&state, 0.0, 0);
        let e0 = first.energy;
        let mut rate_prev = first.budget.rate();
        let mut integral = 0.0;
        let (mut pos, mut dis) = (0.0f64, 0.0f64);
        let mut worst = 0.0f64;
        let mut emax = e0;
        let mut records = vec![first];
        let mut snapshots = Vec::new();
        if wanted.contains(&0) {
            snapshots.push(state.clone());
        }
        for step in 1..=steps {
            let (next, iterations) = self.step_counted(&state, source)?;
            state = NsState {
                time: step as f64 * dt,
                ..next
            };
            let mut rec = self.record(&state, 0.0, iterations);
            let rate = rec.budget.rate();
            integral += 0.5 * dt * (rate_prev + rate);
            pos += 0.5
                * dt
                * (records.last().unwrap().budget.forcing_work.abs()
                    + rec.budget.forcing_work.abs());
            dis += 0.5 * dt * (records.last().unwrap().budget.dissipation + rec.budget.dissipation);
            rate_prev = rate;
            rec.ledger_defect = rec.energy - e0 - integral;
            worst = worst.max(rec.ledger_defect.abs());
            emax = emax.max(rec.energy);
            on_step(&rec);
            records.push(rec);
            if wanted.contains(&step) {
                snapshots.push(state.clone());
            }
        }
        let scale = emax.max(pos).max(dis);
        let ledger_drift = if scale > 0.0 { worst / scale } else { 0.0 };
        Ok(NsRun {
            records,
            snapshots,
            final_state: state,
            ledger_drift,
        })
    }

    /// Both forms of the slip condition on the wall nodes:
    /// `2D(u)n·τ + λu·τ` and `(2κ + λ)u·τ − ω`.
    pub fn slip_residuals(&self, s: &NsState) -> (Vec<f64>, Vec<f64>) {
        slip_residuals(&self.mesh, s, &self.friction)
    }

    /// `u − u^app` on the grid at snapshot `idx` of the bundle.
    pub fn difference(
        &self,
        s: &NsState,
        bundle: &ApproximationBundle,
        idx: usize,
    ) -> Result<DifferenceNorms> {
        let m = &self.mesh;
        let cols: Vec<Result<Vec<[f64; 3]>>> = map_range(self.exec, m.nx, |i| {
            let x2: Vec<f64> = (0..m.nz()).map(|j| m.x2(j, i)).collect();
            let app = bundle.column(idx, m.x1[i], &x2)?;
            Ok(app
                .iter()
                .enumerate()
                .map(|(j, a)| {
                    [
                        s.u1[(j, i)] - a.u[0],
                        s.u2[(j, i)] - a.u[1],
                        s.omega[(j, i)] - a.omega,
                    ]
                })
                .collect())
        });
        let mut sq = m.zeros();
        let (mut linf, mut curl) = (0.0f64, 0.0f64);
        for (i, c) in cols.into_iter().enumerate() {
            for (j, d) in c?.into_iter().enumerate() {
                let v = d[0] * d[0] + d[1] * d[1];
                sq[(j, i)] = v;
                linf = linf.max(v.sqrt());
                curl = curl.max(d[2].abs());
            }
        }
        Ok(DifferenceNorms {
            time: s.time,
            l2: m.integrate(&sq).sqrt(),
            linf,
            curl_linf: curl,
        })
    }
}

/// Stress and vorticity forms of the slip condition on the wall nodes. The
/// wall jet of `ψ` is taken with one-sided high-order weights so the two
/// forms differ only by the truncation error of those weights.
fn slip_residuals(m: &Mesh, s: &NsState, friction: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let jet = |w: &[f64], i: usize| {
        w.iter()
            .enumerate()
            .map(|(j, c)| c * s.psi[(j, i)])
            .sum::<f64>()
    };
    let pz: Vec<f64> = (0..m.nx).map(|i| jet(&m.wall_jet[0], i)).collect();
    let pzz: Vec<f64> = (0..m.nx).map(|i| jet(&m.wall_jet[1], i)).collect();
    let row: Vec<f64> = s.psi.row(0).iter().copied().collect();
    let px = m.fft.derivative(&row, 1);
    let pxx = m.fft.derivative(&row, 2);
    let pxz = m.fft.derivative(&pz, 1);
    let mut stress = Vec::with_capacity(m.nx);
    let mut vort = Vec::with_capacity(m.nx);
    for i in 0..m.nx {
        let (b1, b2) = (m.wall[i].d1, m.wall[i].d2);
        // u₁ = −ψ_ζ, u₂ = Dψ − b′ψ_ζ and ∂₁ = D − b′∂_ζ, ∂₂ = ∂_ζ.
        let u = [-pz[i], px[i] - b1 * pz[i]];
        let u1z = -pzz[i];
        let u2z = pxz[i] - b1 * pzz[i];
        let u1x = -pxz[i] - b1 * u1z;
        let u2x = pxx[i] - b2 * pz[i] - b1 * pxz[i] - b1 * u2z;
        let shear = 0.5 * (u1z + u2x);
        let d = [[u1x, shear], [shear, u2z]];
        let f = Frame::from_slope(b1);
        let dn = [
            d[0][0] * f.n[0] + d[0][1] * f.n[1],
            d[1][0] * f.n[0] + d[1][1] * f.n[1],
        ];
        let ut = u[0] * f.tau[0] + u[1] * f.tau[1];
        stress.push(2.0 * (dn[0] * f.tau[0] + dn[1] * f.tau[1]) + friction[i] * ut);
        vort.push((2.0 * m.curvature[i] + friction[i]) * ut - s.omega[(0, i)]);
    }
    (stress, vort)
}

/// Largest gap between the stress form and the vorticity form of the slip
/// condition on the wall nodes. The two agree exactly for smooth tangent
/// fields, so the gap measures discretisation error only.
pub fn vorticity_bc_equivalence_check(s: &NsState, mesh: &Mesh, friction: &Friction) -> f64 {
    let lam: Vec<f64> = mesh.x1.iter().map(|&x| friction.value(x)).collect();
    let (a, b) = slip_residuals(mesh, s, &lam);
    a.iter()
        .zip(&b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

impl Resolution {
    pub fn of(mesh: &Mesh, thickness: f64) -> Self {
        if mesh.cells_within(thickness) >= LAYER_CELLS && mesh.per_period() >= 4 {
            Resolution::Resolved
        } else {
            Resolution::Extrapolated
        }
    }
}

/// Resolution tag of a configuration, without building the solver.
pub fn classify(config: &NsConfig) -> Result<Resolution> {
    let mesh = mesh_for(&config.domain, config.grid, config.nu)?;
    Ok(Resolution::of(&mesh, config.layer_thickness()))
}

/// Convenience for callers that only know the domain.
pub fn mesh_for(domain: &DomainParams, grid: NsGrid, nu: f64) -> Result<Mesh> {
    Mesh::new(domain, grid, layer_thickness(nu, domain.epsilon()))
}

#[cfg(test)]
mod tests {
    use super::manufactured::Manufactured;
    use super::*;
    use crate::geometry::RoughProfile;
    use approx::assert_abs_diff_eq;

    fn domain(eps: f64, flat: bool) -> DomainParams {
        let p = if flat {
            RoughProfile::flat(2.0)
        } else {
            RoughProfile::default_study()
        };
        DomainParams::new(eps, 2, p).unwrap()
    }

    fn small(flat: bool, levels: usize) -> NsConfig {
        let mut c = NsConfig::new(domain(0.25, flat), 1e-2);
        c.forcing = Forcing::zero();
        c.friction = Friction::constant(1.0);
        c.grid = NsGrid {
            per_period: 16,
            levels,
            height: 2.0,
            layer_fraction: 1.0 / 3.0,
        };
        c
    }

    /// Relative max error in ω at the horizon against the manufactured field.
    fn mms_error(flat: bool, levels: usize, dt: f64) -> f64 {
        let mut c = small(flat, levels);
        c.dt = dt;
        c.horizon = 0.2;
        let s = NsSolver::new(c, Exec::Parallel).unwrap();
        let mms = Manufactured::new(s.config(), s.mesh(), 0.3, 0.3);
        let run = s.run(&[], Some(&mms), |_| {}).unwrap();
        let exact = mms.omega(run.final_state.time);
        (&run.final_state.omega - &exact).amax() / exact.amax()
    }

    #[test]
    fn initial_state_is_at_rest() {
        let s = NsSolver::new(small(false, 16), Exec::Sequential).unwrap();
        let st = s.init_state();
        assert!(st.is_zero());
        assert_eq!(s.energy(&st), 0.0);
        assert_eq!(
            vorticity_bc_equivalence_check(&st, s.mesh(), &s.config().friction),
            0.0
        );
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut c = small(false, 24);
        c.horizon = 0.05;
        c.dt = 0.01;
        let s = NsSolver::new(c, Exec::Parallel).unwrap();
        let run = s.run(&[0.02], None, |r| assert_eq!(r.energy, 0.0)).unwrap();
        assert!(run.final_state.is_zero());
        assert!(run.snapshots[0].is_zero());
        assert!(run
            .records
            .iter()
            .all(|r| r.omega_linf == 0.0 && r.u_linf == 0.0));
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        for flat in [true, false] {
            let coarse = mms_error(flat, 32, 0.01);
            let fine = mms_error(flat, 64, 0.005);
            let order = (coarse / fine).log2();
            assert!(
                order > 1.8,
                "flat={flat}: {coarse:e} -> {fine:e}, order {order}"
            );
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let mut c = small(false, 16);
        c.dt = 0.05;
        c.horizon = 0.1;
        let s = NsSolver::new(c, Exec::Sequential).unwrap();
        let mms = Manufactured::new(s.config(), s.mesh(), 5.0, 0.3);
        let st = s.state_from_fields(0.5, mms.psi(0.5), mms.omega(0.5), 0.0);
        assert!(matches!(s.step(&st, None), Err(Error::Cfl { .. })));
    }

    #[test]
    fn shear_flow_slip_residuals() {
        // u = (g(ζ), 0) with g = 1 + ζ − ζ²/2 on a flat wall: both forms give g′(0) + λg(0).
        let s = NsSolver::new(small(true, 16), Exec::Sequential).unwrap();
        let m = s.mesh();
        let psi = DMatrix::from_fn(m.nz(), m.nx, |j, _| {
            let z = m.zeta[j];
            -(z + 0.5 * z * z - z * z * z / 6.0)
        });
        let omega = DMatrix::from_fn(m.nz(), m.nx, |j, _| m.zeta[j] - 1.0);
        let st = s.state_from_fields(0.0, psi, omega, 0.0);
        let (a, b) = s.slip_residuals(&st);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(*x, 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(*y, 2.0, epsilon = 1e-9);
        }
        assert!(vorticity_bc_equivalence_check(&st, m, &Friction::constant(1.0)) < 1e-9);
    }

    #[test]
    fn slip_forms_agree_to_second_order_on_rough_wall() {
        let gap = |levels: usize| {
            let s = NsSolver::new(small(false, levels), Exec::Sequential).unwrap();
            let mms = Manufactured::new(s.config(), s.mesh(), 1.0, 0.3);
            let st = s.state_from_fields(0.3, mms.psi(0.3), mms.omega(0.3), 0.0);
            let h = s.mesh().zeta[2];
            (
                vorticity_bc_equivalence_check(&st, s.mesh(), &s.config().friction),
                h,
                st.omega.amax(),
            )
        };
        let (g1, h1, scale) = gap(32);
        let (g2, _, _) = gap(64);
        assert!(
            g1 < 10.0 * h1 * h1 * scale,
            "{g1} vs {}",
            10.0 * h1 * h1 * scale
        );
        assert!(g1 / g2 > 16.0, "{g1} -> {g2}");
    }

    #[test]
    fn wall_vorticity_matches_slip_law_after_each_step() {
        let mut c = small(false, 32);
        c.horizon = 0.05;
        c.dt = 0.01;
        let s = NsSolver::new(c, Exec::Sequential).unwrap();
        let mms = Manufactured::new(s.config(), s.mesh(), 0.3, 0.3);
        let mut st = s.init_state();
        for _ in 0..5 {
            st = s.step(&st, Some(&mms)).unwrap();
            let m = s.mesh();
            for i in 0..m.nx {
                let law =
                    (2.0 * m.curvature[i] + 1.0) * st.wall_tangent[i] + mms.wall(st.time, m.x1[i]);
                assert!((st.omega[(0, i)] - law).abs() < 1e-8 * (1.0 + law.abs()));
            }
        }
    }

    #[test]
    fn energy_ledger_closes() {
        let mut c = NsConfig::new(domain(0.25, false), 1e-3);
        c.grid.levels = 96;
        c.horizon = 0.25;
        let s = NsSolver::new(c, Exec::Parallel).unwrap();
        let run = s.run(&[], None, |_| {}).unwrap();
        assert!(run.records.last().unwrap().energy > 0.0);
        assert!(run.ledger_drift < 0.02, "{}", run.ledger_drift);
    }

    #[test]
    fn unforced_energy_does_not_grow() {
        let mut c = small(false, 48);
        c.friction = Friction::constant(0.5);
        c.dt = 0.005;
        let s = NsSolver::new(c, Exec::Sequential).unwrap();
        let mms = Manufactured::new(s.config(), s.mesh(), 0.3, 0.3);
        let mut st = s.state_from_fields(0.0, mms.psi(0.4), mms.omega(0.4), 0.0);
        let mut e = s.energy(&st);
        for _ in 0..20 {
            st = s.step(&st, None).unwrap();
            let next = s.energy(&st);
            assert!(next <= e * (1.0 + 1e-9), "{e} -> {next}");
            e = next;
        }
    }

    #[test]
    fn friction_norm_and_window() {
        let f = Friction {
            mean: 0.0,
            modes: vec![FrictionMode {
                wavenumber: 1,
                cos: 1.0,
                sin: 0.0,
            }],
        };
        assert_abs_diff_eq!(f.c2_norm(), 1.0 + 2.0 * PI + 4.0 * PI * PI, epsilon = 1e-9);
        let mut c = NsConfig::new(domain(0.25, false), 1e-3);
        c.friction = f;
        c.theorem_mode = true;
        // bound is ε^{α−1} = 2 at ε = 1/4
        assert!(matches!(c.validate(), Err(Error::Contract(_))));
        c.friction = Friction::constant(1.5);
        assert!(c.validate().is_ok());
        c.nu = 0.25f64.powi(7);
        assert_eq!(c.regime(), ViscosityRegime::InWindow);
        c.nu = 0.1;
        assert_eq!(c.regime(), ViscosityRegime::OutsideWindow);
    }

    #[test]
    fn config_rejects_fractional_horizon() {
        let mut c = NsConfig::new(domain(0.25, false), 1e-3);
        c.dt = 0.3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn thin_layers_are_flagged() {
        let mut c = NsConfig::new(domain(0.0625, false), 1e-12);
        c.grid.levels = 32;
        c.grid.layer_fraction = 0.05;
        let s = NsSolver::new(c, Exec::Sequential).unwrap();
        assert_eq!(s.resolution(), Resolution::Extrapolated);
    }
}
