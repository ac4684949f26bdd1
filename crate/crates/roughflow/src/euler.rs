//! Euler flow in the flat strip `𝕋 × [0, L]` and the linearised interior
//! correctors driven by boundary traces.
//!
//! Fields are carried in vorticity–streamfunction form with
//! `u = ∇^⊥ψ = (−∂₂ψ, ∂₁ψ)` and `ω = Δψ`. Fourier collocation in `x₁`,
//! Chebyshev collocation in `x₂`; the Poisson problem is solved mode by mode
//! with a factored dense matrix. The mean horizontal flow at the lid is an
//! extra unknown `Γ` evolved from the momentum balance along the lid, which
//! closes the zero mode. The base flow and every corrector are integrated
//! together by classical RK4 so each trace sees the base at the same instant.

use crate::cell::{CellCascade, WallAmplitude};
use crate::error::{invalid, Error, Result};
use crate::par::{map_range, Exec};
use crate::spectral::{Chebyshev, PeriodicFft, SpectralField};
use nalgebra::{DMatrix, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Resolution of the flat strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StripGrid {
    /// Fourier points in `x₁`.
    pub modes: usize,
    /// Chebyshev degree in `x₂`.
    pub degree: usize,
    /// Lid height `L`.
    pub height: f64,
}

impl Default for StripGrid {
    fn default() -> Self {
        Self {
            modes: 32,
            degree: 48,
            height: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VerticalProfile {
    /// `exp(−(x₂/width)²)`.
    Gaussian {
        width: f64,
    },
    Uniform,
}

impl VerticalProfile {
    fn eval(self, x2: f64) -> (f64, f64) {
        match self {
            VerticalProfile::Gaussian { width } => {
                let s = x2 / width;
                let g = (-s * s).exp();
                (g, -2.0 * s / width * g)
            }
            VerticalProfile::Uniform => (1.0, 0.0),
        }
    }
}

/// `s³(10 − 15s + 6s²)` clipped to `[0, 1]`, and its derivative in `s`.
pub fn smooth_ramp(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        let v = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        let d = 30.0 * s * s * (1.0 - s) * (1.0 - s);
        (v, d)
    }
}

/// One separable forcing component
/// `amplitude · ramp((t − onset)/rise) · trig(2πm x₁) · profile(x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingMode {
    /// 1 or 2: which velocity component is forced.
    pub component: u8,
    pub wavenumber: u32,
    pub trig: Trig,
    pub amplitude: f64,
    #[serde(default)]
    pub onset: f64,
    pub rise: f64,
    pub profile: VerticalProfile,
}

impl ForcingMode {
    fn ramp(&self, t: f64) -> (f64, f64) {
        let (v, d) = smooth_ramp((t - self.onset) / self.rise);
        (self.amplitude * v, self.amplitude * d / self.rise)
    }

    fn horizontal(&self, x1: f64) -> (f64, f64) {
        let k = 2.0 * PI * self.wavenumber as f64;
        let (s, c) = (k * x1).sin_cos();
        match self.trig {
            Trig::Cos => (c, -k * s),
            Trig::Sin => (s, k * c),
        }
    }
}

/// Body force as a finite sum of separable modes; zero for `t < 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Forcing {
    pub modes: Vec<ForcingMode>,
}

impl Forcing {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Default study forcing: `f₂ = ramp(t/0.25) sin(2πx₁) e^{−(x₂/0.5)²}`,
    /// whose curl does not vanish on the wall.
    pub fn default_study() -> Self {
        Self {
            modes: vec![ForcingMode {
                component: 2,
                wavenumber: 1,
                trig: Trig::Sin,
                amplitude: 1.0,
                onset: 0.0,
                rise: 0.25,
                profile: VerticalProfile::Gaussian { width: 0.5 },
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.modes {
            if m.component != 1 && m.component != 2 {
                return Err(invalid(format!(
                    "forcing component must be 1 or 2, got {}",
                    m.component
                )));
            }
            if m.onset < 0.0 {
                return Err(invalid("forcing must vanish for t < 0 (onset ≥ 0)"));
            }
            if !(m.rise > 0.0) {
                return Err(invalid("forcing ramp length must be positive"));
            }
            if let VerticalProfile::Gaussian { width } = m.profile {
                if !(width > 0.0) {
                    return Err(invalid("forcing profile width must be positive"));
                }
            }
            if !m.amplitude.is_finite() {
                return Err(invalid("forcing amplitude must be finite"));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.amplitude == 0.0)
    }

    pub fn value(&self, t: f64, x1: f64, x2: f64) -> [f64; 2] {
        let mut f = [0.0; 2];
        for m in &self.modes {
            let (a, _) = m.ramp(t);
            if a == 0.0 {
                continue;
            }
            let (h, _) = m.horizontal(x1);
            let (p, _) = m.profile.eval(x2);
            f[(m.component - 1) as usize] += a * h * p;
        }
        f
    }

    /// `∂₁f₂ − ∂₂f₁`.
    pub fn curl(&self, t: f64, x1: f64, x2: f64) -> f64 {
        let mut c = 0.0;
        for m in &self.modes {
            let (a, _) = m.ramp(t);
            if a == 0.0 {
                continue;
            }
            let (h, dh) = m.horizontal(x1);
            let (p, dp) = m.profile.eval(x2);
            if m.component == 1 {
                c -= a * h * dp;
            } else {
                c += a * dh * p;
            }
        }
        c
    }
}

/// Smooth cutoff equal to 1 on `[0, 1/4]` and 0 beyond `1/2`; returns `(χ, χ′)`.
pub fn cutoff(x2: f64) -> (f64, f64) {
    let (v, d) = smooth_ramp(4.0 * x2 - 1.0);
    (1.0 - v, -4.0 * d)
}

/// Divergence-free lift `ũ = ∇^⊥(χ(x₂)H(x₁))` of a wall trace, sampled on
/// the strip grid.
#[derive(Debug, Clone)]
pub struct LiftedTrace {
    /// `H` with `H′ = h` and zero mean.
    pub potential: Vec<f64>,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
}

/// Factored strip operators shared by every solve on one grid.
pub struct StripSolver {
    grid: StripGrid,
    exec: Exec,
    fft: PeriodicFft,
    cheb: Chebyshev,
    d2: DMatrix<f64>,
    x1: Vec<f64>,
    /// LU factors indexed by `|m|`, `0..=modes/2`.
    poisson: Vec<LU<f64, Dyn, Dyn>>,
}

impl fmt::Debug for StripSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StripSolver")
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

/// Prognostic variables of one order: vorticity on the grid and lid circulation.
#[derive(Debug, Clone, PartialEq)]
struct OrderState {
    omega: DMatrix<f64>,
    gamma: f64,
}

/// Which interior orders are live and what drives their wall traces.
#[derive(Debug, Clone, Default)]
pub struct InteriorPlan {
    pub order: u32,
    /// `zero[k]` is true when `u^k ≡ 0`.
    pub zero: Vec<bool>,
    /// `traces[k]`: `h^k = Σ h_a ∂₁^{dx1}∂₂^{dx2}u^{j}₁(x₁, 0)`.
    pub traces: Vec<Vec<(WallAmplitude, f64)>>,
}

impl InteriorPlan {
    pub fn base_only() -> Self {
        Self {
            order: 0,
            zero: vec![false],
            traces: vec![Vec::new()],
        }
    }

    pub fn from_cascade(cascade: &CellCascade) -> Self {
        let order = cascade.order;
        let traces = (0..=order)
            .map(|k| {
                if k == 0 {
                    Vec::new()
                } else {
                    cascade.trace_terms(k)
                }
            })
            .collect();
        Self {
            order,
            zero: cascade.interior_zero.clone(),
            traces,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.zero.len() != self.order as usize + 1
            || self.traces.len() != self.order as usize + 1
        {
            return Err(invalid("interior plan arrays must cover orders 0..=N"));
        }
        if self.zero[0] {
            return Err(invalid("the base flow cannot be switched off"));
        }
        for (k, terms) in self.traces.iter().enumerate() {
            for (amp, _) in terms {
                if amp.order as usize >= k {
                    return Err(Error::Dependency(format!(
                        "trace of u^{k} refers to u^{}",
                        amp.order
                    )));
                }
                if self.zero[amp.order as usize] {
                    continue;
                }
                if amp.dx1 == 0 {
                    return Err(Error::Internal(format!(
                        "trace amplitude {amp:?} has no zero-mean potential"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Streamfunction of one order at one instant, with its `x₂` derivatives
/// and time derivative.
#[derive(Debug, Clone)]
pub struct OrderSnapshot {
    pub order: u32,
    /// `psi[b] = ∂₂^b ψ`, `b = 0..=3`.
    pub psi: Vec<SpectralField>,
    /// `dpsi[b] = ∂₂^b ∂_tψ`, `b = 0..=2`.
    pub dpsi: Vec<SpectralField>,
    pub gamma: f64,
    /// Vorticity on the collocation grid.
    pub omega: DMatrix<f64>,
    /// Wall potential `H^k` (zero for the base flow).
    pub trace_potential: Vec<f64>,
}

impl OrderSnapshot {
    fn zero(order: u32, grid: &StripGrid) -> Self {
        let z = SpectralField::zeros(grid.modes, grid.degree, grid.height);
        Self {
            order,
            psi: vec![z.clone(); 4],
            dpsi: vec![z; 3],
            gamma: 0.0,
            omega: DMatrix::zeros(grid.degree + 1, grid.modes),
            trace_potential: vec![0.0; grid.modes],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.psi[0].is_zero() && self.dpsi[0].is_zero()
    }

    /// `∂₁^{dx1}∂₂^{dx2}u₁(x₁, 0)` with `u₁ = −∂₂ψ`.
    pub fn wall_u1(&self, x1: f64, dx1: u32, dx2: u32) -> f64 {
        -self.d_x2(dx2 as usize + 1, false).wall(x1, dx1)
    }

    /// Time derivative of [`wall_u1`](Self::wall_u1).
    pub fn wall_u1_dt(&self, x1: f64, dx1: u32, dx2: u32) -> f64 {
        -self.d_x2(dx2 as usize + 1, true).wall(x1, dx1)
    }

    fn d_x2(&self, b: usize, dt: bool) -> std::borrow::Cow<'_, SpectralField> {
        let stored = if dt { &self.dpsi } else { &self.psi };
        if b < stored.len() {
            return std::borrow::Cow::Borrowed(&stored[b]);
        }
        let mut f = stored[stored.len() - 1].clone();
        for _ in stored.len() - 1..b {
            f = f.d_x2();
        }
        std::borrow::Cow::Owned(f)
    }

    /// Column jet at `x₁` for point evaluation.
    pub fn column_jet(&self, x1: f64) -> ColumnJet {
        let mut c = Vec::with_capacity(10);
        for a in 0..=3u32 {
            for b in 0..=(3 - a) as usize {
                c.push(((a, b), self.psi[b].column(x1, a)));
            }
        }
        let mut t = Vec::with_capacity(6);
        for a in 0..=2u32 {
            for b in 0..=(2 - a) as usize {
                t.push(((a, b), self.dpsi[b].column(x1, a)));
            }
        }
        ColumnJet {
            height: self.psi[0].height(),
            psi: c,
            dpsi: t,
        }
    }
}

/// Chebyshev columns of `∂₁^a∂₂^b ψ` (`a + b ≤ 3`) and of `∂₁^a∂₂^b ∂_tψ`
/// (`a + b ≤ 2`) at a fixed `x₁`.
#[derive(Debug, Clone)]
pub struct ColumnJet {
    height: f64,
    psi: Vec<((u32, usize), Vec<f64>)>,
    dpsi: Vec<((u32, usize), Vec<f64>)>,
}

/// Interior velocity data at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InteriorPoint {
    pub u: [f64; 2],
    /// `grad_u[i][j] = ∂_j u_i`.
    pub grad_u: [[f64; 2]; 2],
    pub omega: f64,
    pub grad_omega: [f64; 2],
    pub dt_omega: f64,
}

impl ColumnJet {
    fn get(list: &[((u32, usize), Vec<f64>)], a: u32, b: usize, t: f64) -> f64 {
        let col = &list
            .iter()
            .find(|(k, _)| *k == (a, b))
            .expect("derivative within the stored jet")
            .1;
        crate::spectral::clenshaw(col, t)
    }

    pub fn point(&self, x2: f64) -> InteriorPoint {
        let t = 1.0 - 2.0 * x2 / self.height;
        let p = |a, b| Self::get(&self.psi, a, b, t);
        let q = |a, b| Self::get(&self.dpsi, a, b, t);
        let (p10, p01) = (p(1, 0), p(0, 1));
        let (p20, p11, p02) = (p(2, 0), p(1, 1), p(0, 2));
        InteriorPoint {
            u: [-p01, p10],
            grad_u: [[-p11, -p02], [p20, p11]],
            omega: p20 + p02,
            grad_omega: [p(3, 0) + p(1, 2), p(2, 1) + p(0, 3)],
            dt_omega: q(2, 0) + q(0, 2),
        }
    }
}

/// All live orders at one output time.
#[derive(Debug, Clone)]
pub struct EulerSnapshot {
    pub time: f64,
    /// `orders[k]` for `k = 0..=N`; zero orders hold zero fields.
    pub orders: Vec<OrderSnapshot>,
}

impl EulerSnapshot {
    pub fn order(&self, k: u32) -> Option<&OrderSnapshot> {
        self.orders.get(k as usize)
    }

    /// Wall amplitude `A(t, x₁)` and its time derivative.
    pub fn amplitude(&self, amp: WallAmplitude, x1: f64) -> Result<(f64, f64)> {
        let o = self
            .order(amp.order)
            .ok_or_else(|| Error::Dependency(format!("u^{} not computed", amp.order)))?;
        Ok((
            o.wall_u1(x1, amp.dx1, amp.dx2),
            o.wall_u1_dt(x1, amp.dx1, amp.dx2),
        ))
    }
}

/// Output of a cascade run.
#[derive(Debug, Clone)]
pub struct EulerSeries {
    pub grid: StripGrid,
    pub plan: InteriorPlan,
    pub snapshots: Vec<EulerSnapshot>,
    pub steps: usize,
}

impl EulerSeries {
    pub fn at(&self, t: f64) -> Option<&EulerSnapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }
}

/// Time-stepping controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EulerNumerics {
    pub cfl: f64,
    pub max_dt: f64,
    /// Fixed step; checked against the CFL limit when set.
    pub fixed_dt: Option<f64>,
}

impl Default for EulerNumerics {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            max_dt: 5e-3,
            fixed_dt: None,
        }
    }
}

struct Derived {
    psi: DMatrix<f64>,
    u1: DMatrix<f64>,
    u2: DMatrix<f64>,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
    potential: Vec<f64>,
}

impl StripSolver {
    pub fn new(grid: StripGrid, exec: Exec) -> Result<Self> {
        if grid.modes < 4 || grid.modes % 2 != 0 || grid.degree < 8 || !(grid.height > 0.0) {
            return Err(invalid(format!("strip grid unusable: {grid:?}")));
        }
        let cheb = Chebyshev::new(grid.degree, grid.height);
        let d = cheb.diff().clone();
        let d2 = &d * &d;
        let n = grid.degree;
        let poisson = (0..=grid.modes / 2)
            .map(|m| {
                let k2 = (2.0 * PI * m as f64).powi(2);
                let mut a = d2.clone();
                for i in 0..=n {
                    a[(i, i)] -= k2;
                }
                a.row_mut(0).fill(0.0);
                a[(0, 0)] = 1.0;
                if m == 0 {
                    a.row_mut(n).copy_from(&(-d.row(n)));
                } else {
                    a.row_mut(n).fill(0.0);
                    a[(n, n)] = 1.0;
                }
                a.lu()
            })
            .collect();
        let x1 = (0..grid.modes)
            .map(|i| i as f64 / grid.modes as f64)
            .collect();
        Ok(Self {
            grid,
            exec,
            fft: PeriodicFft::new(grid.modes),
            cheb,
            d2,
            x1,
            poisson,
        })
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2(&self) -> &[f64] {
        self.cheb.nodes()
    }

    fn rows(&self) -> usize {
        self.grid.degree + 1
    }

    /// Row-wise Fourier coefficients: `out[j][m]`.
    fn rows_forward(&self, f: &DMatrix<f64>) -> Vec<Vec<Complex64>> {
        map_range(self.exec, self.rows(), |j| {
            let row: Vec<f64> = f.row(j).iter().copied().collect();
            self.fft.forward(&row)
        })
    }

    fn rows_inverse(&self, c: &[Vec<Complex64>]) -> DMatrix<f64> {
        let rows = map_range(self.exec, c.len(), |j| self.fft.inverse(&c[j]));
        DMatrix::from_fn(c.len(), self.grid.modes, |j, i| rows[j][i])
    }

    fn d_x1(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = map_range(self.exec, self.rows(), |j| {
            let row: Vec<f64> = f.row(j).iter().copied().collect();
            self.fft.derivative(&row, 1)
        });
        DMatrix::from_fn(self.rows(), self.grid.modes, |j, i| rows[j][i])
    }

    fn d_x2(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        self.cheb.diff() * f
    }

    /// Zeroes Fourier modes above two thirds of the resolved band.
    fn dealias(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let cut = self.grid.modes as i64 / 3;
        let mut c = self.rows_forward(f);
        for row in c.iter_mut() {
            for (idx, v) in row.iter_mut().enumerate() {
                if self.fft.wavenumber(idx).abs() > cut || self.fft.is_nyquist(idx) {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        self.rows_inverse(&c)
    }

    /// Solves `Δψ = ω`, `ψ(·,0) = bottom`, `ψ` constant on the lid with
    /// lid mean velocity `−∂₂ψ̄(L) = γ`.
    pub fn poisson(&self, omega: &DMatrix<f64>, bottom: &[f64], gamma: f64) -> DMatrix<f64> {
        let n = self.grid.degree;
        let mut c = self.rows_forward(omega);
        let b = self.fft.forward(bottom);
        for (j, row) in c.iter_mut().enumerate() {
            if j == 0 || j == n {
                row.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            }
        }
        let cols = map_range(self.exec, self.grid.modes, |idx| {
            if self.fft.is_nyquist(idx) {
                return vec![Complex64::new(0.0, 0.0); n + 1];
            }
            let m = self.fft.wavenumber(idx);
            let lu = &self.poisson[m.unsigned_abs() as usize];
            let mut re = nalgebra::DVector::from_fn(n + 1, |j, _| c[j][idx].re);
            let mut im = nalgebra::DVector::from_fn(n + 1, |j, _| c[j][idx].im);
            re[0] = b[idx].re;
            im[0] = b[idx].im;
            if m == 0 {
                re[n] = gamma;
                im[n] = 0.0;
            }
            let re = lu.solve(&re).expect("strip Poisson matrix is non-singular");
            let im = lu.solve(&im).expect("strip Poisson matrix is non-singular");
            (0..=n)
                .map(|j| Complex64::new(re[j], im[j]))
                .collect::<Vec<_>>()
        });
        let rows: Vec<Vec<Complex64>> = (0..=n)
            .map(|j| cols.iter().map(|col| col[j]).collect())
            .collect();
        self.rows_inverse(&rows)
    }

    /// Coefficients of a grid field in the Fourier–Chebyshev basis.
    pub fn spectral(&self, f: &DMatrix<f64>) -> SpectralField {
        let c = self.rows_forward(f);
        let coef = map_range(self.exec, self.grid.modes, |idx| {
            if self.fft.is_nyquist(idx) {
                return vec![Complex64::new(0.0, 0.0); self.rows()];
            }
            let re: Vec<f64> = c.iter().map(|row| row[idx].re).collect();
            let im: Vec<f64> = c.iter().map(|row| row[idx].im).collect();
            let re = self.cheb.coefficients(&re);
            let im = self.cheb.coefficients(&im);
            re.into_iter()
                .zip(im)
                .map(|(a, b)| Complex64::new(a, b))
                .collect()
        });
        SpectralField::from_coefficients(self.grid.height, coef)
    }

    /// `H` with `H′ = h` and zero mean, by spectral antiderivative.
    fn antiderivative(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut c = self.fft.forward(h);
        let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if c[0].norm() > 1e-10 * scale {
            return Err(Error::Compatibility { mismatch: c[0].re });
        }
        for (idx, v) in c.iter_mut().enumerate() {
            let m = self.fft.wavenumber(idx);
            if m == 0 || self.fft.is_nyquist(idx) {
                *v = Complex64::new(0.0, 0.0);
            } else {
                *v /= Complex64::new(0.0, 2.0 * PI * m as f64);
            }
        }
        Ok(self.fft.inverse(&c))
    }

    /// Lift of a zero-mean wall trace `h` sampled at the `x₁` nodes.
    pub fn lift_trace(&self, h: &[f64]) -> Result<LiftedTrace> {
        if h.len() != self.grid.modes {
            return Err(invalid("trace must be sampled on the strip x₁ nodes"));
        }
        let potential = self.antiderivative(h)?;
        let dh = self.fft.derivative(&potential, 1);
        let x2 = self.cheb.nodes();
        let u1 = DMatrix::from_fn(self.rows(), self.grid.modes, |j, i| {
            -cutoff(x2[j]).1 * potential[i]
        });
        let u2 = DMatrix::from_fn(self.rows(), self.grid.modes, |j, i| cutoff(x2[j]).0 * dh[i]);
        Ok(LiftedTrace { potential, u1, u2 })
    }

    fn forcing_grid(&self, forcing: &Forcing, t: f64) -> (DMatrix<f64>, f64) {
        let x2 = self.cheb.nodes();
        let curl = DMatrix::from_fn(self.rows(), self.grid.modes, |j, i| {
            forcing.curl(t, self.x1[i], x2[j])
        });
        let top = x2[self.grid.degree];
        let lid = self
            .x1
            .iter()
            .map(|&x| forcing.value(t, x, top)[0])
            .sum::<f64>()
            / self.grid.modes as f64;
        (curl, lid)
    }

    /// Trace potential of order `k` from the streamfunctions of lower orders.
    fn trace_potential(
        &self,
        plan: &InteriorPlan,
        k: usize,
        psis: &[Option<DMatrix<f64>>],
    ) -> Result<Vec<f64>> {
        let mut h = vec![0.0; self.grid.modes];
        for (amp, coeff) in &plan.traces[k] {
            let Some(psi) = psis[amp.order as usize].as_ref() else {
                continue;
            };
            // H′ = h_a ∂₁^{dx1}(...) so H = h_a ∂₁^{dx1−1}(−∂₂^{dx2+1}ψ) minus its mean.
            let mut f = psi.clone();
            for _ in 0..=amp.dx2 {
                f = self.d_x2(&f);
            }
            let wall: Vec<f64> = f.row(0).iter().map(|v| -v).collect();
            let mut w = self.fft.derivative(&wall, amp.dx1 - 1);
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            w.iter_mut().for_each(|v| *v -= mean);
            h.iter_mut().zip(&w).for_each(|(a, b)| *a += coeff * b);
        }
        Ok(h)
    }

    fn derive(
        &self,
        plan: &InteriorPlan,
        state: &[Option<OrderState>],
    ) -> Result<Vec<Option<Derived>>> {
        let mut psis: Vec<Option<DMatrix<f64>>> = vec![None; state.len()];
        let mut out: Vec<Option<Derived>> = Vec::with_capacity(state.len());
        for (k, s) in state.iter().enumerate() {
            let Some(s) = s else {
                out.push(None);
                continue;
            };
            let potential = self.trace_potential(plan, k, &psis)?;
            let psi = self.poisson(&s.omega, &potential, s.gamma);
            let u1 = -self.d_x2(&psi);
            let u2 = self.d_x1(&psi);
            let w1 = self.d_x1(&s.omega);
            let w2 = self.d_x2(&s.omega);
            psis[k] = Some(psi.clone());
            out.push(Some(Derived {
                psi,
                u1,
                u2,
                w1,
                w2,
                potential,
            }));
        }
        Ok(out)
    }

    /// Right-hand side of the joint system.
    fn rhs(
        &self,
        plan: &InteriorPlan,
        forcing: &Forcing,
        t: f64,
        state: &[Option<OrderState>],
    ) -> Result<(Vec<Option<OrderState>>, Vec<Option<Derived>>)> {
        let derived = self.derive(plan, state)?;
        let n = self.grid.degree;
        let mut out = Vec::with_capacity(state.len());
        for k in 0..state.len() {
            if state[k].is_none() {
                out.push(None);
                continue;
            }
            let mut dw = DMatrix::zeros(self.rows(), self.grid.modes);
            let mut lid = 0.0;
            for j in 0..=k {
                let (Some(a), Some(b)) = (&derived[j], &derived[k - j]) else {
                    continue;
                };
                // u^j·∇ω^{k−j} and the lid momentum flux u^j·∇u^{k−j}₁
                dw -= a.u1.component_mul(&b.w1) + a.u2.component_mul(&b.w2);
                let top: Vec<f64> = b.u1.row(n).iter().copied().collect();
                let du1 = self.fft.derivative(&top, 1);
                lid -=
                    a.u1.row(n)
                        .iter()
                        .zip(&du1)
                        .map(|(u, d)| u * d)
                        .sum::<f64>()
                        / self.grid.modes as f64;
            }
            if k == 0 {
                let (curl, f_lid) = self.forcing_grid(forcing, t);
                dw += curl;
                lid += f_lid;
            }
            out.push(Some(OrderState {
                omega: self.dealias(&dw),
                gamma: lid,
            }));
        }
        Ok((out, derived))
    }

    fn cfl_limit(&self, derived: &[Option<Derived>]) -> f64 {
        let x2 = self.cheb.nodes();
        let dx1 = 1.0 / self.grid.modes as f64;
        let n = self.grid.degree;
        let mut rate = 0.0f64;
        for d in derived.iter().flatten() {
            for j in 0..=n {
                let h2 = if j == 0 {
                    x2[1] - x2[0]
                } else if j == n {
                    x2[n] - x2[n - 1]
                } else {
                    0.5 * (x2[j + 1] - x2[j - 1])
                };
                for i in 0..self.grid.modes {
                    rate = rate.max(d.u1[(j, i)].abs() / dx1 + d.u2[(j, i)].abs() / h2);
                }
            }
        }
        if rate == 0.0 {
            f64::INFINITY
        } else {
            1.0 / rate
        }
    }

    fn snapshot(
        &self,
        plan: &InteriorPlan,
        forcing: &Forcing,
        t: f64,
        state: &[Option<OrderState>],
    ) -> Result<EulerSnapshot> {
        let (rate, derived) = self.rhs(plan, forcing, t, state)?;
        // ∂_tψ solves the same boundary problem with differentiated data.
        let mut dpsis: Vec<Option<DMatrix<f64>>> = vec![None; state.len()];
        let mut orders = Vec::with_capacity(state.len());
        for k in 0..state.len() {
            let (Some(s), Some(d), Some(r)) = (&state[k], &derived[k], &rate[k]) else {
                orders.push(OrderSnapshot::zero(k as u32, &self.grid));
                continue;
            };
            let dpot = self.trace_potential(plan, k, &dpsis)?;
            let dpsi = self.poisson(&r.omega, &dpot, r.gamma);
            let p0 = self.spectral(&d.psi);
            let p1 = p0.d_x2();
            let p2 = p1.d_x2();
            let p3 = p2.d_x2();
            let q0 = self.spectral(&dpsi);
            let q1 = q0.d_x2();
            let q2 = q1.d_x2();
            dpsis[k] = Some(dpsi);
            orders.push(OrderSnapshot {
                order: k as u32,
                psi: vec![p0, p1, p2, p3],
                dpsi: vec![q0, q1, q2],
                gamma: s.gamma,
                omega: s.omega.clone(),
                trace_potential: d.potential.clone(),
            });
        }
        Ok(EulerSnapshot { time: t, orders })
    }

    /// Integrates the base flow and the live correctors of `plan` from rest
    /// at `t = 0`, recording snapshots at each of `times` (ascending, ≥ 0).
    pub fn solve_cascade(
        &self,
        forcing: &Forcing,
        plan: &InteriorPlan,
        times: &[f64],
        numerics: &EulerNumerics,
    ) -> Result<EulerSeries> {
        forcing.validate()?;
        plan.validate()?;
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= 0.0)) {
            return Err(invalid("output times must be non-negative and ascending"));
        }
        let zero = || OrderState {
            omega: DMatrix::zeros(self.rows(), self.grid.modes),
            gamma: 0.0,
        };
        let mut state: Vec<Option<OrderState>> = (0..=plan.order as usize)
            .map(|k| (!plan.zero[k]).then(zero))
            .collect();
        let mut t = 0.0;
        let mut steps = 0;
        let mut snapshots = Vec::with_capacity(times.len());
        for &target in times {
            while t < target - 1e-14 * (1.0 + target) {
                let (k1, derived) = self.rhs(plan, forcing, t, &state)?;
                let limit = numerics.cfl * self.cfl_limit(&derived);
                let dt = match numerics.fixed_dt {
                    Some(dt) if dt > limit => return Err(Error::Cfl { dt, limit }),
                    Some(dt) => dt,
                    None => numerics.max_dt.min(limit),
                };
                let dt = dt.min(target - t);
                let k2 = self
                    .rhs(plan, forcing, t + 0.5 * dt, &axpy(&state, 0.5 * dt, &k1))?
                    .0;
                let k3 = self
                    .rhs(plan, forcing, t + 0.5 * dt, &axpy(&state, 0.5 * dt, &k2))?
                    .0;
                let k4 = self.rhs(plan, forcing, t + dt, &axpy(&state, dt, &k3))?.0;
                for (idx, s) in state.iter_mut().enumerate() {
                    let Some(s) = s else { continue };
                    let parts = [&k1[idx], &k2[idx], &k3[idx], &k4[idx]];
                    let w = [1.0, 2.0, 2.0, 1.0];
                    for (p, wi) in parts.iter().zip(w) {
                        let p = p.as_ref().expect("live order has a rate");
                        s.omega += &p.omega * (wi * dt / 6.0);
                        s.gamma += p.gamma * wi * dt / 6.0;
                    }
                }
                t += dt;
                steps += 1;
                if state
                    .iter()
                    .flatten()
                    .any(|s| !s.gamma.is_finite() || s.omega.iter().any(|v| !v.is_finite()))
                {
                    return Err(Error::Solver(format!("Euler state blew up at t = {t}")));
                }
            }
            t = target;
            snapshots.push(self.snapshot(plan, forcing, t, &state)?);
        }
        Ok(EulerSeries {
            grid: self.grid,
            plan: plan.clone(),
            snapshots,
            steps,
        })
    }

    /// Base flow only.
    pub fn solve_base(
        &self,
        forcing: &Forcing,
        times: &[f64],
        numerics: &EulerNumerics,
    ) -> Result<EulerSeries> {
        self.solve_cascade(forcing, &InteriorPlan::base_only(), times, numerics)
    }

    /// Corrector `u^k` from a cascade run, split into its lift and the
    /// homogeneous remainder at every snapshot.
    pub fn corrector(&self, series: &EulerSeries, k: u32) -> Result<Vec<CorrectorState>> {
        if k > series.plan.order {
            return Err(Error::Dependency(format!(
                "u^{k} needs a cascade of order ≥ {k}"
            )));
        }
        series
            .snapshots
            .iter()
            .map(|s| {
                let o = &s.orders[k as usize];
                let psi = self.values(&o.psi[0]);
                let u1 = -self.values(&o.psi[1]);
                let u2 = self.d_x1(&psi);
                let h = self.fft.derivative(&o.trace_potential, 1);
                let lift = self.lift_trace(&h)?;
                Ok(CorrectorState {
                    order: k,
                    time: s.time,
                    homogeneous: [&u1 - &lift.u1, &u2 - &lift.u2],
                    u: [u1, u2],
                    lift,
                })
            })
            .collect()
    }

    /// Samples a spectral field back on the collocation grid.
    pub fn values(&self, f: &SpectralField) -> DMatrix<f64> {
        let x2 = self.cheb.nodes();
        let cols = map_range(self.exec, self.grid.modes, |i| {
            let col = f.column(self.x1[i], 0);
            x2.iter()
                .map(|&y| crate::spectral::clenshaw(&col, 1.0 - 2.0 * y / f.height()))
                .collect::<Vec<_>>()
        });
        DMatrix::from_fn(self.rows(), self.grid.modes, |j, i| cols[i][j])
    }

    /// Second-derivative matrix in `x₂`, exposed for diagnostics.
    pub fn d2_x2(&self) -> &DMatrix<f64> {
        &self.d2
    }
}

fn axpy(
    state: &[Option<OrderState>],
    h: f64,
    rate: &[Option<OrderState>],
) -> Vec<Option<OrderState>> {
    state
        .iter()
        .zip(rate)
        .map(|(s, r)| match (s, r) {
            (Some(s), Some(r)) => Some(OrderState {
                omega: &s.omega + &r.omega * h,
                gamma: s.gamma + h * r.gamma,
            }),
            _ => None,
        })
        .collect()
}

/// Interior corrector on the collocation grid.
#[derive(Debug, Clone)]
pub struct CorrectorState {
    pub order: u32,
    pub time: f64,
    pub u: [DMatrix<f64>; 2],
    pub lift: LiftedTrace,
    /// `U^k = u^k − ũ^k`.
    pub homogeneous: [DMatrix<f64>; 2],
}

/// Shared handle used by the expansion and the harness.
pub type SharedSeries = Arc<EulerSeries>;
