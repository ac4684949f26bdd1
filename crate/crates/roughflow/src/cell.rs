//! Cell problems on the rough strip `Ω_bl = {z₂ > ε^α η(z₁)}`.
//!
//! The strip is flattened to `ξ = z₁`, `ζ = z₂ − ε^α η(z₁)` and truncated
//! at `ζ = Z`. Fourier collocation in `ξ` and Chebyshev collocation in `ζ`
//! give a dense system which is LU-factored once per geometry and reused for
//! every right-hand side. The far field is closed with the mode-wise
//! Dirichlet-to-Neumann map `∂_ζψ_j = −2π|j|ψ_j`.

use crate::error::{invalid, Error, Result};
use crate::geometry::{DomainParams, RoughProfile};
use crate::spectral::{
    fourier_abs_matrix, fourier_diff_matrix, Chebyshev, PeriodicFft, SpectralField,
};
use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

/// Resolution of the cell grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellGrid {
    /// Fourier points in `ξ`.
    pub modes: usize,
    /// Chebyshev polynomial degree in `ζ`.
    pub degree: usize,
    /// Truncation height of the flattened strip.
    pub z_max: f64,
}

impl Default for CellGrid {
    fn default() -> Self {
        Self {
            modes: 32,
            degree: 64,
            z_max: 4.0,
        }
    }
}

/// Scalar field sampled on the cell grid; row `j` is `ζ_j`, column `i` is `ξ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField(pub DMatrix<f64>);

impl CellField {
    pub fn zeros(grid: &CellGrid) -> Self {
        Self(DMatrix::zeros(grid.degree + 1, grid.modes))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn wall(&self) -> Vec<f64> {
        self.0.row(0).iter().copied().collect()
    }
}

/// Geometry, differentiation matrices and factored operators of one cell domain.
pub struct CellDomain {
    grid: CellGrid,
    amplitude: f64,
    profile: RoughProfile,
    xi: Vec<f64>,
    cheb: Chebyshev,
    eta: Vec<f64>,
    eta1: Vec<f64>,
    eta2: Vec<f64>,
    bracket: Vec<f64>,
    dxi_t: DMatrix<f64>,
    dxi2_t: DMatrix<f64>,
    dzeta: DMatrix<f64>,
    dzeta2: DMatrix<f64>,
    neumann: LU<f64, Dyn, Dyn>,
    dirichlet: LU<f64, Dyn, Dyn>,
}

impl std::fmt::Debug for CellDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CellDomain")
            .field("grid", &self.grid)
            .field("amplitude", &self.amplitude)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum WallKind {
    Neumann,
    Dirichlet,
}

impl CellDomain {
    pub fn new(domain: &DomainParams, grid: CellGrid) -> Result<Self> {
        Self::with_amplitude(domain.amplitude(), domain.profile().clone(), grid)
    }

    /// Cell domain with roughness amplitude `a` (the strip is `z₂ > aη(z₁)`).
    pub fn with_amplitude(amplitude: f64, profile: RoughProfile, grid: CellGrid) -> Result<Self> {
        if grid.modes < 4 || grid.degree < 8 || grid.z_max <= 0.0 {
            return Err(invalid(format!("cell grid too small: {grid:?}")));
        }
        let m = grid.modes;
        let xi: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
        let cheb = Chebyshev::new(grid.degree, grid.z_max);
        let eta: Vec<f64> = xi.iter().map(|&x| profile.derivative(x, 0)).collect();
        let eta1: Vec<f64> = xi.iter().map(|&x| profile.derivative(x, 1)).collect();
        let eta2: Vec<f64> = xi.iter().map(|&x| profile.derivative(x, 2)).collect();
        let bracket = eta1
            .iter()
            .map(|d| (1.0 + amplitude * amplitude * d * d).sqrt())
            .collect();
        let dxi = fourier_diff_matrix(m, 1);
        let dxi2 = fourier_diff_matrix(m, 2);
        let dzeta = cheb.diff().clone();
        let dzeta2 = &dzeta * &dzeta;
        let mut this = Self {
            grid,
            amplitude,
            profile,
            xi,
            cheb,
            eta,
            eta1,
            eta2,
            bracket,
            dxi_t: dxi.transpose(),
            dxi2_t: dxi2.transpose(),
            dzeta,
            dzeta2,
            neumann: DMatrix::<f64>::identity(1, 1).lu(),
            dirichlet: DMatrix::<f64>::identity(1, 1).lu(),
        };
        this.neumann = this.assemble(WallKind::Neumann).lu();
        this.dirichlet = this.assemble(WallKind::Dirichlet).lu();
        Ok(this)
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn profile(&self) -> &RoughProfile {
        &self.profile
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn zeta(&self) -> &[f64] {
        self.cheb.nodes()
    }

    pub fn chebyshev(&self) -> &Chebyshev {
        &self.cheb
    }

    /// `⟨aη′(ξ_i)⟩` at the Fourier points.
    pub fn bracket(&self) -> &[f64] {
        &self.bracket
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn eta1(&self) -> &[f64] {
        &self.eta1
    }

    /// Physical height `z₂ = ζ + aη(ξ)` of grid node `(j, i)`.
    pub fn height(&self, j: usize, i: usize) -> f64 {
        self.cheb.nodes()[j] + self.amplitude * self.eta[i]
    }

    pub fn field_from_fn<F: Fn(f64, f64) -> f64>(&self, f: F) -> CellField {
        let n1 = self.grid.degree + 1;
        CellField(DMatrix::from_fn(n1, self.grid.modes, |j, i| {
            f(self.xi[i], self.height(j, i))
        }))
    }

    fn assemble(&self, kind: WallKind) -> DMatrix<f64> {
        let m = self.grid.modes;
        let n = self.grid.degree;
        let n1 = n + 1;
        let size = m * n1 + usize::from(kind == WallKind::Neumann);
        let idx = |i: usize, j: usize| i * n1 + j;
        let a = self.amplitude;
        let dxi = self.dxi_t.transpose();
        let dxi2 = self.dxi2_t.transpose();
        let dabs = fourier_abs_matrix(m);
        let mut mat = DMatrix::zeros(size, size);
        for i in 0..m {
            let c22 = 1.0 + a * a * self.eta1[i] * self.eta1[i];
            let c12 = -2.0 * a * self.eta1[i];
            let c2 = -a * self.eta2[i];
            for j in 1..n {
                let r = idx(i, j);
                for i2 in 0..m {
                    mat[(r, idx(i2, j))] += dxi2[(i, i2)];
                }
                for j2 in 0..n1 {
                    mat[(r, idx(i, j2))] += c22 * self.dzeta2[(j, j2)] + c2 * self.dzeta[(j, j2)];
                }
                for i2 in 0..m {
                    let w = c12 * dxi[(i, i2)];
                    if w != 0.0 {
                        for j2 in 0..n1 {
                            mat[(r, idx(i2, j2))] += w * self.dzeta[(j, j2)];
                        }
                    }
                }
            }
            let r = idx(i, 0);
            match kind {
                WallKind::Neumann => {
                    let b = self.bracket[i];
                    for i2 in 0..m {
                        mat[(r, idx(i2, 0))] += -a * self.eta1[i] * dxi[(i, i2)] / b;
                    }
                    for j2 in 0..n1 {
                        mat[(r, idx(i, j2))] += c22 * self.dzeta[(0, j2)] / b;
                    }
                }
                WallKind::Dirichlet => mat[(r, r)] = 1.0,
            }
            let r = idx(i, n);
            for j2 in 0..n1 {
                mat[(r, idx(i, j2))] += self.dzeta[(n, j2)];
            }
            for i2 in 0..m {
                mat[(r, idx(i2, n))] += dabs[(i, i2)];
            }
            if kind == WallKind::Neumann {
                mat[(r, m * n1)] = 1.0;
                mat[(m * n1, r)] = 1.0 / m as f64;
            }
        }
        mat
    }

    pub fn d_xi(&self, f: &CellField) -> CellField {
        CellField(&f.0 * &self.dxi_t)
    }

    pub fn d_xi2(&self, f: &CellField) -> CellField {
        CellField(&f.0 * &self.dxi2_t)
    }

    pub fn d_zeta(&self, f: &CellField) -> CellField {
        CellField(&self.dzeta * &f.0)
    }

    /// `(∂_{z₁}f, ∂_{z₂}f)` in the original rough-strip variables.
    pub fn grad(&self, f: &CellField) -> [CellField; 2] {
        let fx = self.d_xi(f);
        let fz = self.d_zeta(f);
        let mut d1 = fx.0;
        for i in 0..self.grid.modes {
            let s = self.amplitude * self.eta1[i];
            for j in 0..=self.grid.degree {
                d1[(j, i)] -= s * fz.0[(j, i)];
            }
        }
        [CellField(d1), fz]
    }

    /// Flattened Laplacian applied pointwise.
    pub fn laplacian(&self, f: &CellField) -> CellField {
        let a = self.amplitude;
        let fxx = self.d_xi2(f);
        let fz = self.d_zeta(f);
        let fzz = self.d_zeta(&fz);
        let fxz = self.d_xi(&fz);
        let mut out = fxx.0;
        for i in 0..self.grid.modes {
            let c22 = 1.0 + a * a * self.eta1[i] * self.eta1[i];
            let c12 = -2.0 * a * self.eta1[i];
            let c2 = -a * self.eta2[i];
            for j in 0..=self.grid.degree {
                out[(j, i)] += c22 * fzz.0[(j, i)] + c12 * fxz.0[(j, i)] + c2 * fz.0[(j, i)];
            }
        }
        CellField(out)
    }

    /// `∫_{Ω_bl} f dz` (the flattening has unit Jacobian).
    pub fn integrate(&self, f: &CellField) -> f64 {
        self.integrate_weighted(f, 0.0)
    }

    /// `∫ e^{2γz₂} f dz`.
    pub fn integrate_weighted(&self, f: &CellField, gamma: f64) -> f64 {
        let w = self.cheb.weights();
        let m = self.grid.modes;
        let mut total = 0.0;
        for i in 0..m {
            for (j, wj) in w.iter().enumerate() {
                let weight = if gamma == 0.0 {
                    1.0
                } else {
                    (2.0 * gamma * self.height(j, i)).exp()
                };
                total += wj * weight * f.0[(j, i)];
            }
        }
        total / m as f64
    }

    /// `‖e^{γz₂} (f₁, f₂)‖_{L²(Ω_bl)}`.
    pub fn weighted_l2(&self, parts: &[&CellField], gamma: f64) -> f64 {
        let sq = CellField(DMatrix::from_fn(
            self.grid.degree + 1,
            self.grid.modes,
            |j, i| parts.iter().map(|p| p.0[(j, i)].powi(2)).sum(),
        ));
        self.integrate_weighted(&sq, gamma).max(0.0).sqrt()
    }

    /// `∫_{∂Ω_bl} g dσ = ∫ g⟨aη′⟩ dξ` for wall samples `g`.
    pub fn wall_integral(&self, g: &[f64]) -> f64 {
        g.iter().zip(&self.bracket).map(|(v, b)| v * b).sum::<f64>() / self.grid.modes as f64
    }

    fn check_decay(&self, s: &CellField) -> Result<()> {
        let scale = s.max_abs();
        if scale == 0.0 {
            return Ok(());
        }
        // the top row must sit well below the bulk; anything else is a source the
        // truncated strip cannot represent
        let top = s.0.nrows() - 1;
        let tail = s.0.row(top).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tail > 1e-3 * scale {
            return Err(Error::Decay { tail: tail / scale });
        }
        Ok(())
    }

    fn rhs(&self, source: &CellField, wall: &[f64], extra: usize) -> DVector<f64> {
        let m = self.grid.modes;
        let n = self.grid.degree;
        let n1 = n + 1;
        let mut rhs = DVector::zeros(m * n1 + extra);
        for i in 0..m {
            for j in 1..n {
                rhs[i * n1 + j] = source.0[(j, i)];
            }
            rhs[i * n1] = wall[i];
        }
        rhs
    }

    fn unpack(&self, sol: &DVector<f64>) -> CellField {
        let n1 = self.grid.degree + 1;
        CellField(DMatrix::from_fn(n1, self.grid.modes, |j, i| {
            sol[i * n1 + j]
        }))
    }

    /// Compatibility mismatch `∫S dz + ∫g dσ` of Neumann data.
    pub fn neumann_mismatch(&self, source: &CellField, wall_datum: &[f64]) -> f64 {
        self.integrate(source) + self.wall_integral(wall_datum)
    }

    /// Solves `Δψ = S`, `n·∇ψ = g` on the wall, normalised to zero mean on
    /// the top line.
    pub fn solve_neumann(&self, source: &CellField, wall_datum: &[f64]) -> Result<NeumannSolution> {
        self.check_shapes(source, wall_datum)?;
        self.check_decay(source)?;
        let mismatch = self.neumann_mismatch(source, wall_datum);
        let scale = self.integrate_abs(source) + self.wall_integral_abs(wall_datum);
        if mismatch.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Compatibility { mismatch });
        }
        if source.is_zero() && wall_datum.iter().all(|&g| g == 0.0) {
            return Ok(NeumannSolution {
                psi: CellField::zeros(&self.grid),
                flux_defect: 0.0,
            });
        }
        let rhs = self.rhs(source, wall_datum, 1);
        let sol = self
            .neumann
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular Neumann cell operator".into()))?;
        let m = self.grid.modes;
        let n1 = self.grid.degree + 1;
        Ok(NeumannSolution {
            psi: self.unpack(&sol),
            flux_defect: -sol[m * n1],
        })
    }

    /// Solves `Δφ = S` with `φ = 0` on the wall; reports the far-field constant.
    pub fn solve_dirichlet(&self, source: &CellField) -> Result<DirichletSolution> {
        self.check_shapes(source, &vec![0.0; self.grid.modes])?;
        self.check_decay(source)?;
        if source.is_zero() {
            return Ok(DirichletSolution {
                phi: CellField::zeros(&self.grid),
                far_constant: 0.0,
            });
        }
        let rhs = self.rhs(source, &vec![0.0; self.grid.modes], 0);
        let sol = self
            .dirichlet
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular Dirichlet cell operator".into()))?;
        let phi = self.unpack(&sol);
        let n = self.grid.degree;
        let far_constant = phi.0.row(n).iter().sum::<f64>() / self.grid.modes as f64;
        Ok(DirichletSolution { phi, far_constant })
    }

    fn integrate_abs(&self, f: &CellField) -> f64 {
        self.integrate(&CellField(f.0.map(f64::abs)))
    }

    fn wall_integral_abs(&self, g: &[f64]) -> f64 {
        self.wall_integral(&g.iter().map(|v| v.abs()).collect::<Vec<_>>())
    }

    fn check_shapes(&self, source: &CellField, wall: &[f64]) -> Result<()> {
        let shape = (self.grid.degree + 1, self.grid.modes);
        if source.0.shape() != shape || wall.len() != self.grid.modes {
            return Err(invalid(format!(
                "data shape {:?}/{} does not match cell grid {:?}",
                source.0.shape(),
                wall.len(),
                shape
            )));
        }
        Ok(())
    }

    /// Normal derivative `n·∇ψ` on the wall.
    pub fn wall_normal_derivative(&self, f: &CellField) -> Vec<f64> {
        let [g1, g2] = self.grad(f);
        (0..self.grid.modes)
            .map(|i| {
                let b = self.bracket[i];
                (-self.amplitude * self.eta1[i] * g1.0[(0, i)] + g2.0[(0, i)]) / b
            })
            .collect()
    }

    /// Fourier coefficients in `z₁` of `f(·, z₂)` at a fixed physical height.
    pub fn modes_at_height(&self, f: &CellField, z2: f64) -> Result<Vec<Complex64>> {
        let m = self.grid.modes;
        let mut row = Vec::with_capacity(m);
        for i in 0..m {
            let zeta = z2 - self.amplitude * self.eta[i];
            if zeta < 0.0 || zeta > self.grid.z_max {
                return Err(Error::OutsideDomain { z1: self.xi[i], z2 });
            }
            let col: Vec<f64> = f.0.column(i).iter().copied().collect();
            let coeffs = self.cheb.coefficients(&col);
            row.push(self.cheb.eval(&coeffs, zeta));
        }
        Ok(PeriodicFft::new(m).forward(&row))
    }

    /// Fourier–Chebyshev interpolant of `f` in the flattened variables `(ξ, ζ)`.
    pub fn interpolant(&self, f: &CellField) -> SpectralField {
        SpectralField::from_grid(&f.0, &PeriodicFft::new(self.grid.modes), &self.cheb)
    }

    /// Evaluator of `f` at physical points `z`, periodic in `z₁` and zero
    /// above the truncation height.
    pub fn evaluator(&self, f: &CellField) -> CellEvaluator {
        CellEvaluator {
            field: self.interpolant(f),
            amplitude: self.amplitude,
            profile: self.profile.clone(),
        }
    }

    /// Rate of `max_ξ |f|` decay in `ζ`, fitted on `ζ ∈ [lo, hi]`.
    pub fn decay_rate(&self, parts: &[&CellField], lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .cheb
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, &z)| z >= lo && z <= hi)
            .filter_map(|(j, &z)| {
                let mx = (0..self.grid.modes)
                    .map(|i| {
                        parts
                            .iter()
                            .map(|p| p.0[(j, i)].powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(0.0, f64::max);
                (mx > 0.0).then(|| (z, mx.ln()))
            })
            .collect();
        if pts.len() < 2 {
            return f64::INFINITY;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    }
}

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub psi: CellField,
    /// Flux through the top line; vanishes for compatible data.
    pub flux_defect: f64,
}

#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub phi: CellField,
    pub far_constant: f64,
}

#[derive(Debug, Clone)]
pub struct CellEvaluator {
    field: SpectralField,
    amplitude: f64,
    profile: RoughProfile,
}

impl CellEvaluator {
    pub fn value(&self, z: [f64; 2]) -> f64 {
        let xi = z[0].rem_euclid(1.0);
        let zeta = z[1] - self.amplitude * self.profile.derivative(xi, 0);
        if zeta > self.field.height() {
            return 0.0;
        }
        self.field.eval(xi, zeta.max(0.0), 0)
    }
}

/// One boundary-layer profile `v = ∇ψ + ∇^⊥φ` with its derived fields.
#[derive(Debug, Clone)]
pub struct LayerProfile {
    pub psi: CellField,
    pub phi: CellField,
    pub velocity: [CellField; 2],
    /// Measured exponential decay rate of `|v|` in `ζ`.
    pub decay_rate: f64,
}

/// Builds `v = ∇ψ + ∇^⊥φ` with `∇^⊥ = (−∂₂, ∂₁)`.
pub fn assemble_layer(cell: &CellDomain, psi: CellField, phi: CellField) -> Result<LayerProfile> {
    let shape = (cell.grid.degree + 1, cell.grid.modes);
    if psi.0.shape() != shape || phi.0.shape() != shape {
        return Err(invalid("ψ and φ must live on the cell grid"));
    }
    let [p1, p2] = cell.grad(&psi);
    let [f1, f2] = cell.grad(&phi);
    let velocity = [CellField(p1.0 - f2.0), CellField(p2.0 + f1.0)];
    let decay_rate = cell.decay_rate(&[&velocity[0], &velocity[1]], 1.0, 3.0);
    Ok(LayerProfile {
        psi,
        phi,
        velocity,
        decay_rate,
    })
}

/// `∂₁^{dx1} ∂₂^{dx2} u^{order}₁(t, x₁, 0)`: a slow wall amplitude multiplying a cell profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WallAmplitude {
    pub order: u32,
    pub dx1: u32,
    pub dx2: u32,
}

impl WallAmplitude {
    pub const fn new(order: u32, dx1: u32, dx2: u32) -> Self {
        Self { order, dx1, dx2 }
    }
}

/// Wall derivatives of one interior field: `u1[m] = ∂₂^m u₁(0)`,
/// `dx1_u1[m] = ∂₁∂₂^m u₁(0)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WallJet {
    pub u1: Vec<f64>,
    pub dx1_u1: Vec<f64>,
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// Contributions `(amplitude, coefficient)` of `⟨aη′⟩B_k[u]` in which
/// `coefficient(η, η′)` multiplies the wall amplitude. `p = N₀ + 1`.
fn taylor_terms(k: u32, n0: u32) -> Vec<(WallAmplitude, TaylorCoeff)> {
    let p = n0 + 1;
    let mut out = Vec::new();
    // η^m/m! ∂₂^m u₂ with m·p = k, rewritten as −η^m/m! ∂₁∂₂^{m−1}u₁.
    if k % p == 0 && k >= p {
        let m = k / p;
        out.push((
            WallAmplitude::new(0, 1, m - 1),
            TaylorCoeff {
                eta_power: m,
                with_slope: false,
            },
        ));
    }
    // −η′η^m/m! ∂₂^m u₁ with 1 + m·p = k.
    if k >= 1 && (k - 1) % p == 0 {
        let m = (k - 1) / p;
        out.push((
            WallAmplitude::new(0, 0, m),
            TaylorCoeff {
                eta_power: m,
                with_slope: true,
            },
        ));
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct TaylorCoeff {
    eta_power: u32,
    with_slope: bool,
}

impl TaylorCoeff {
    /// Coefficient of the amplitude in `⟨aη′⟩B_k`.
    fn eval(self, eta: f64, eta1: f64) -> f64 {
        let base = eta.powi(self.eta_power as i32) / factorial(self.eta_power);
        if self.with_slope {
            -eta1 * base
        } else {
            -base
        }
    }
}

/// Taylor boundary operator `B_k[u]` at `z₁` from wall derivatives of `u`,
/// with rescaled amplitude `a = ε^α` and `α = 1/N₀`.
pub fn boundary_operator_with(
    k: u32,
    jet: &WallJet,
    n0: u32,
    amplitude: f64,
    profile: &RoughProfile,
    z1: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(invalid("boundary operators start at k = 1"));
    }
    let eta = profile.derivative(z1, 0);
    let eta1 = profile.derivative(z1, 1);
    let bracket = (1.0 + amplitude * amplitude * eta1 * eta1).sqrt();
    let mut total = 0.0;
    for (amp, coeff) in taylor_terms(k, n0) {
        let data = if amp.dx1 == 1 { &jet.dx1_u1 } else { &jet.u1 };
        let m = amp.dx2 as usize;
        let value = *data.get(m).ok_or(Error::Arity {
            needed: m + 1,
            got: data.len(),
        })?;
        total += coeff.eval(eta, eta1) * value;
    }
    Ok(total / bracket)
}

/// [`boundary_operator_with`] for a domain.
pub fn boundary_operator(k: u32, jet: &WallJet, domain: &DomainParams, z1: f64) -> Result<f64> {
    boundary_operator_with(
        k,
        jet,
        domain.n0(),
        domain.amplitude(),
        domain.profile(),
        z1,
    )
}

/// One separable piece of layer `k`: `A(t,x₁)·(ψ_a(z), φ_a(z))` with
/// interior trace contribution `A(t,x₁)·h_a`.
#[derive(Debug, Clone)]
pub struct LayerTerm {
    pub amplitude: WallAmplitude,
    pub profile: LayerProfile,
    /// `β_a` with `B = A·β_a` on the wall.
    pub boundary_coeff: Vec<f64>,
    pub neumann_datum: Vec<f64>,
    pub h_coeff: f64,
    pub far_constant: f64,
}

#[derive(Debug, Clone)]
pub struct CascadeLayer {
    pub order: u32,
    pub terms: Vec<LayerTerm>,
}

impl CascadeLayer {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of the ψ profiles weighted by constant amplitudes.
    pub fn psi_with<F: Fn(WallAmplitude) -> f64>(&self, grid: &CellGrid, amp: F) -> CellField {
        let mut out = CellField::zeros(grid);
        for t in &self.terms {
            out.0 += &t.profile.psi.0 * amp(t.amplitude);
        }
        out
    }

    pub fn phi_with<F: Fn(WallAmplitude) -> f64>(&self, grid: &CellGrid, amp: F) -> CellField {
        let mut out = CellField::zeros(grid);
        for t in &self.terms {
            out.0 += &t.profile.phi.0 * amp(t.amplitude);
        }
        out
    }
}

/// Separable boundary-layer cascade up to order `N`.
#[derive(Debug, Clone)]
pub struct CellCascade {
    pub cell: Arc<CellDomain>,
    pub n0: u32,
    pub order: u32,
    /// `layers[k-1]` is layer `k`.
    pub layers: Vec<CascadeLayer>,
    /// `interior_zero[k]` is true when `u^k` vanishes identically.
    pub interior_zero: Vec<bool>,
}

struct PendingTerm {
    beta: Vec<f64>,
    source_psi: CellField,
    source_phi: CellField,
}

impl PendingTerm {
    fn blank(grid: &CellGrid) -> Self {
        Self {
            beta: vec![0.0; grid.modes],
            source_psi: CellField::zeros(grid),
            source_phi: CellField::zeros(grid),
        }
    }
}

impl CellCascade {
    pub fn build(cell: Arc<CellDomain>, n0: u32, order: u32) -> Result<Self> {
        if order == 0 || n0 == 0 {
            return Err(invalid("cascade needs N ≥ 1 and N₀ ≥ 1"));
        }
        let grid = *cell.grid();
        let m = grid.modes;
        let mut layers: Vec<CascadeLayer> = Vec::new();
        let mut interior_zero = vec![false];
        for k in 1..=order {
            let mut pending: BTreeMap<WallAmplitude, PendingTerm> = BTreeMap::new();
            for j in 0..k {
                if interior_zero[j as usize] {
                    continue;
                }
                for (amp, coeff) in taylor_terms(k - j, n0) {
                    let amp = WallAmplitude { order: j, ..amp };
                    let t = pending
                        .entry(amp)
                        .or_insert_with(|| PendingTerm::blank(&grid));
                    for i in 0..m {
                        t.beta[i] += coeff.eval(cell.eta[i], cell.eta1[i]) / cell.bracket[i];
                    }
                }
            }
            if k > n0 {
                let prev = &layers[(k - n0 - 1) as usize];
                for term in &prev.terms {
                    let amp = WallAmplitude {
                        dx1: term.amplitude.dx1 + 1,
                        ..term.amplitude
                    };
                    let [v1, v2] = &term.profile.velocity;
                    let t = pending
                        .entry(amp)
                        .or_insert_with(|| PendingTerm::blank(&grid));
                    t.source_psi.0 -= &v1.0;
                    t.source_phi.0 -= &v2.0;
                }
            }
            let mut terms = Vec::new();
            for (amp, p) in pending {
                if p.source_psi.is_zero()
                    && p.source_phi.is_zero()
                    && p.beta.iter().all(|&b| b == 0.0)
                {
                    continue;
                }
                let s_int = cell.integrate(&p.source_psi);
                let b_int = cell.wall_integral(&p.beta);
                let mut h = s_int - b_int;
                let scale = cell.integrate_abs(&p.source_psi) + cell.wall_integral_abs(&p.beta);
                if h.abs() <= 1e-12 * scale {
                    h = 0.0;
                } else if amp.dx1 == 0 {
                    return Err(Error::Internal(format!(
                        "trace coefficient {h:e} of amplitude {amp:?} must vanish"
                    )));
                }
                let datum: Vec<f64> = (0..m).map(|i| -p.beta[i] - h / cell.bracket[i]).collect();
                let psi = cell.solve_neumann(&p.source_psi, &datum)?.psi;
                let dir = cell.solve_dirichlet(&p.source_phi)?;
                let profile = assemble_layer(&cell, psi, dir.phi)?;
                terms.push(LayerTerm {
                    amplitude: amp,
                    profile,
                    boundary_coeff: p.beta,
                    neumann_datum: datum,
                    h_coeff: h,
                    far_constant: dir.far_constant,
                });
            }
            let trace_zero = terms.iter().all(|t| t.h_coeff == 0.0);
            let forcing_zero =
                (1..k).all(|j| interior_zero[j as usize] || interior_zero[(k - j) as usize]);
            interior_zero.push(trace_zero && forcing_zero);
            layers.push(CascadeLayer { order: k, terms });
        }
        Ok(Self {
            cell,
            n0,
            order,
            layers,
            interior_zero,
        })
    }

    pub fn layer(&self, k: u32) -> Option<&CascadeLayer> {
        self.layers.get((k as usize).checked_sub(1)?)
    }

    /// `(amplitude, h_a)` pairs with `h^k = Σ h_a A_a`.
    pub fn trace_terms(&self, k: u32) -> Vec<(WallAmplitude, f64)> {
        self.layer(k)
            .map(|l| {
                l.terms
                    .iter()
                    .filter(|t| t.h_coeff != 0.0)
                    .map(|t| (t.amplitude, t.h_coeff))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Every wall amplitude any layer needs.
    pub fn amplitudes(&self) -> Vec<WallAmplitude> {
        let mut v: Vec<WallAmplitude> = self
            .layers
            .iter()
            .flat_map(|l| l.terms.iter().map(|t| t.amplitude))
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

/// `h^k(x₁)` from its separable coefficients and a wall-amplitude evaluator.
pub fn compatibility_source_h<F>(
    terms: &[(WallAmplitude, f64)],
    amplitude_at: F,
) -> impl Fn(f64) -> f64
where
    F: Fn(WallAmplitude, f64) -> f64,
{
    let terms = terms.to_vec();
    move |x1| terms.iter().map(|(a, h)| h * amplitude_at(*a, x1)).sum()
}

/// `∫_𝕋 h(x₁) dx₁` by the periodic trapezoid rule on `n` points; errors if
/// the mean exceeds `tol`.
pub fn check_trace_mean<F: Fn(f64) -> f64>(h: F, n: usize, tol: f64) -> Result<f64> {
    let mean = (0..n).map(|i| h(i as f64 / n as f64)).sum::<f64>() / n as f64;
    if mean.abs() > tol {
        return Err(Error::Internal(format!("interior trace has mean {mean:e}")));
    }
    Ok(mean)
}

/// Decaying Fourier-mode rate `2π|j|` expected above the roughness.
pub fn far_field_rate(j: i64) -> f64 {
    2.0 * PI * j.unsigned_abs() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halfplane::{neumann_flat_mode, poisson_dirichlet_mode, ModeFunction};
    use approx::assert_abs_diff_eq;

    fn small_grid() -> CellGrid {
        CellGrid {
            modes: 16,
            degree: 48,
            z_max: 4.0,
        }
    }

    fn tall_grid() -> CellGrid {
        CellGrid {
            modes: 16,
            degree: 56,
            z_max: 8.0,
        }
    }

    #[test]
    fn boundary_operator_examples() {
        let flat = RoughProfile::flat(1.0);
        let jet = WallJet {
            u1: vec![2.0],
            dx1_u1: vec![],
        };
        assert_eq!(
            boundary_operator_with(1, &jet, 2, 0.5, &flat, 0.3).unwrap(),
            0.0
        );
        // η = 2 + sin(2πz)/(2π) has η′(0) = 1.
        let p = RoughProfile::new(
            2.0,
            vec![
                (1, Complex64::new(0.0, -0.5 / (2.0 * PI))),
                (-1, Complex64::new(0.0, 0.5 / (2.0 * PI))),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(p.derivative(0.0, 1), 1.0, epsilon = 1e-14);
        let b1 = boundary_operator_with(1, &jet, 2, 1.0, &p, 0.0).unwrap();
        assert_abs_diff_eq!(b1, -2f64.sqrt(), epsilon = 1e-14);
        let full = WallJet {
            u1: vec![1.3, 0.2, 0.1],
            dx1_u1: vec![0.7, 0.4, 0.3],
        };
        assert_eq!(
            boundary_operator_with(2, &full, 2, 0.5, &p, 0.1).unwrap(),
            0.0
        );
        // B₃ with N₀ = 2: η ∂₂u₂ / ⟨⟩ = −η ∂₁u₁ / ⟨⟩.
        let b3 = boundary_operator_with(3, &full, 2, 0.5, &p, 0.1).unwrap();
        let (eta, eta1) = (p.derivative(0.1, 0), p.derivative(0.1, 1));
        assert_abs_diff_eq!(
            b3,
            -eta * 0.7 / (1.0 + 0.25 * eta1 * eta1).sqrt(),
            epsilon = 1e-14
        );
        let short = WallJet {
            u1: vec![1.0],
            dx1_u1: vec![],
        };
        assert!(matches!(
            boundary_operator_with(3, &short, 2, 0.5, &p, 0.1),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn zero_data_gives_zero_solutions() {
        let cell =
            CellDomain::with_amplitude(0.5, RoughProfile::default_study(), small_grid()).unwrap();
        let zero = CellField::zeros(cell.grid());
        let n = cell.solve_neumann(&zero, &vec![0.0; 16]).unwrap();
        assert!(n.psi.is_zero());
        let d = cell.solve_dirichlet(&zero).unwrap();
        assert!(d.phi.is_zero());
    }

    #[test]
    fn incompatible_neumann_data_rejected() {
        let cell = CellDomain::with_amplitude(0.0, RoughProfile::flat(1.0), small_grid()).unwrap();
        let zero = CellField::zeros(cell.grid());
        match cell.solve_neumann(&zero, &vec![0.1; 16]) {
            Err(Error::Compatibility { mismatch }) => {
                assert_abs_diff_eq!(mismatch, 0.1, epsilon = 1e-14)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flat_neumann_matches_halfplane_mode() {
        let cell = CellDomain::with_amplitude(0.0, RoughProfile::flat(0.0), tall_grid()).unwrap();
        let k = 2.0 * PI;
        let src = cell.field_from_fn(|x, z| (k * x).cos() * (-4.0 * z).exp());
        let g: Vec<f64> = cell.xi().iter().map(|&x| 0.4 * (k * x).cos()).collect();
        let psi = cell.solve_neumann(&src, &g).unwrap().psi;
        // n·∇ψ = ∂₂ψ on the flat wall, so the mode datum is g.
        let oracle = neumann_flat_mode(k, 0.4, ModeFunction::new(k, |z| (-4.0 * z).exp())).unwrap();
        let mut err: f64 = 0.0;
        for (j, &z) in cell.zeta().iter().enumerate() {
            let o = oracle.eval(z);
            for (i, &x) in cell.xi().iter().enumerate() {
                err = err.max((psi.0[(j, i)] - o * (k * x).cos()).abs());
            }
        }
        assert!(err < 1e-10, "max error {err:e}");
    }

    #[test]
    fn flat_dirichlet_matches_halfplane_mode() {
        let cell = CellDomain::with_amplitude(0.0, RoughProfile::flat(0.0), tall_grid()).unwrap();
        let k = 4.0 * PI;
        let src = cell.field_from_fn(|x, z| (k * x).sin() * z * (-4.0 * z).exp());
        let phi = cell.solve_dirichlet(&src).unwrap().phi;
        let oracle =
            poisson_dirichlet_mode(k, ModeFunction::new(k, |z| z * (-4.0 * z).exp())).unwrap();
        let mut err: f64 = 0.0;
        for (j, &z) in cell.zeta().iter().enumerate() {
            let o = oracle.eval(z);
            for (i, &x) in cell.xi().iter().enumerate() {
                err = err.max((phi.0[(j, i)] - o * (k * x).sin()).abs());
            }
        }
        assert!(err < 1e-10, "max error {err:e}");
    }

    #[test]
    fn rough_first_layer_meets_boundary_condition() {
        let cell = Arc::new(
            CellDomain::with_amplitude(
                0.5,
                RoughProfile::default_study(),
                CellGrid {
                    modes: 24,
                    degree: 64,
                    z_max: 4.0,
                },
            )
            .unwrap(),
        );
        let cascade = CellCascade::build(cell.clone(), 2, 3).unwrap();
        let l1 = cascade.layer(1).unwrap();
        assert_eq!(l1.terms.len(), 1);
        let t = &l1.terms[0];
        assert_eq!(t.amplitude, WallAmplitude::new(0, 0, 0));
        assert_eq!(t.h_coeff, 0.0);
        assert!(t.profile.phi.is_zero());
        // v·n + B₁ + h¹/⟨⟩ = 0 with unit amplitude.
        let [v1, v2] = &t.profile.velocity;
        for i in 0..24 {
            let b = cell.bracket()[i];
            let s = 0.5 * cell.eta1()[i];
            let vn = (-s * v1.0[(0, i)] + v2.0[(0, i)]) / b;
            assert!(
                (vn + t.boundary_coeff[i]).abs() < 1e-7,
                "defect at {i}: {}",
                vn + t.boundary_coeff[i]
            );
        }
        let lap = cell.laplacian(&t.profile.psi);
        let interior = (1..64).flat_map(|j| (0..24).map(move |i| (j, i)));
        let resid = interior
            .map(|(j, i)| lap.0[(j, i)].abs())
            .fold(0.0, f64::max);
        assert!(resid < 1e-6, "interior residual {resid:e}");
        assert!(cascade.layer(2).unwrap().is_zero());
        assert!(cascade.interior_zero[1] && cascade.interior_zero[2]);
        assert!(!cascade.interior_zero[3]);
        let l3 = cascade.layer(3).unwrap();
        assert_eq!(l3.terms.len(), 1);
        assert_eq!(l3.terms[0].amplitude, WallAmplitude::new(0, 1, 0));
    }

    #[test]
    fn synthetic_trace_matches_dense_quadrature() {
        // η′ = cos(2πz): η = 2 + sin(2πz)/(2π); u₁(x₁, 0) = cos(2πx₁).
        let p = RoughProfile::new(
            2.0,
            vec![
                (1, Complex64::new(0.0, -0.5 / (2.0 * PI))),
                (-1, Complex64::new(0.0, 0.5 / (2.0 * PI))),
            ],
        )
        .unwrap();
        let cell = Arc::new(CellDomain::with_amplitude(0.5, p.clone(), small_grid()).unwrap());
        let cascade = CellCascade::build(cell, 2, 1).unwrap();
        let terms: Vec<(WallAmplitude, f64)> = cascade
            .layer(1)
            .unwrap()
            .terms
            .iter()
            .map(|t| (t.amplitude, t.h_coeff))
            .collect();
        let h = compatibility_source_h(&terms, |_, x| (2.0 * PI * x).cos());
        let dense =
            crate::quadrature::integrate(|z| p.derivative(z, 1), 0.0, 1.0, 1e-15, 1e-15).value;
        for &x in &[0.0, 0.2, 0.7] {
            assert_abs_diff_eq!(h(x), (2.0 * PI * x).cos() * dense, epsilon = 1e-10);
        }
    }
}
