//! Grid of the flattened rough channel `x₁ ∈ 𝕋, ζ = x₂ − b(x₁) ∈ [0, L]`
//! with `b(x₁) = ε^{1+α} η(x₁/ε)`, and the Bloch-family operators on it.
//!
//! Every wall coefficient has period `ε`, so multiplying by it only couples
//! Fourier modes that agree modulo `P = 1/ε`. Modes are therefore split into
//! `P` families of `K` modes each and every linear solve is a family-wise
//! block-tridiagonal system with `K × K` blocks.

use crate::error::{invalid, Result};
use crate::geometry::{DomainParams, ProfileJet};
use crate::linalg::{CMat, CVec};
use crate::spectral::{
    backward_first, fd_weights, forward_first, interior_stencils, trapezoid_weights, PeriodicFft,
    Stencil,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const WALL_JET_POINTS: usize = 8;

/// Resolution of the Navier–Stokes grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsGrid {
    /// Fourier points per roughness period (`K`); `x₁` carries `K/ε` points.
    pub per_period: usize,
    /// Cells in `ζ`.
    pub levels: usize,
    /// Lid height `L` above the wall.
    pub height: f64,
    /// Share of the `ζ` nodes placed inside three viscous layer thicknesses.
    pub layer_fraction: f64,
}

impl Default for NsGrid {
    fn default() -> Self {
        Self {
            per_period: 16,
            levels: 192,
            height: 4.0,
            layer_fraction: 1.0 / 3.0,
        }
    }
}

impl NsGrid {
    pub fn validate(&self) -> Result<()> {
        if self.per_period < 4 || self.per_period % 2 != 0 {
            return Err(invalid(format!(
                "per_period must be even and ≥ 4, got {}",
                self.per_period
            )));
        }
        if self.levels < 8 {
            return Err(invalid(format!(
                "need at least 8 levels, got {}",
                self.levels
            )));
        }
        if !(self.height > 0.0) {
            return Err(invalid("lid height must be positive"));
        }
        if !(self.layer_fraction > 0.0 && self.layer_fraction < 1.0) {
            return Err(invalid("layer_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Physical thickness `ε√(ν/ε) = √(νε)` of the viscous sublayer.
pub fn layer_thickness(nu: f64, epsilon: f64) -> f64 {
    (nu * epsilon).sqrt()
}

/// Nodes `ζ_j = L q(j/n)` with `q(s) = ln(1 + A(e^{βs} − 1)) / ln(1 + A(e^β − 1))`,
/// `A = e^{−β/2}`: exponential clustering at the wall that relaxes to uniform
/// spacing in the upper half. `β` is chosen so that `ζ(fraction) = target`;
/// a uniform grid is returned when no clustering is needed.
pub fn stretched_nodes(levels: usize, height: f64, fraction: f64, target: f64) -> Vec<f64> {
    let uniform = || {
        (0..=levels)
            .map(|j| height * j as f64 / levels as f64)
            .collect::<Vec<_>>()
    };
    if target >= fraction * height {
        return uniform();
    }
    let q = |beta: f64, s: f64| -> f64 {
        // ln(1 + e^{β(s−½)} − e^{−β/2}) written to survive large β.
        let f = |s: f64| {
            let e = beta * (s - 0.5);
            if e > 0.0 {
                e + (1.0 + (-e).exp() * (1.0 - (-beta / 2.0).exp())).ln()
            } else {
                (e.exp() - (-beta / 2.0).exp()).ln_1p()
            }
        };
        f(s) / f(1.0)
    };
    let goal = target / height;
    let (mut lo, mut hi) = (1e-6, 600.0);
    if q(hi, fraction) > goal {
        return uniform();
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid, fraction) > goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let mut z: Vec<f64> = (0..=levels)
        .map(|j| height * q(beta, j as f64 / levels as f64))
        .collect();
    z[0] = 0.0;
    z[levels] = height;
    z
}

/// Geometry and discrete operators of one `(ε, grid)` pair.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: DomainParams,
    pub grid: NsGrid,
    pub periods: usize,
    pub nx: usize,
    pub x1: Vec<f64>,
    pub zeta: Vec<f64>,
    /// `b, b′, b″` per column.
    pub wall: Vec<ProfileJet>,
    /// Arclength factor `√(1 + b′²)` per column.
    pub arclength: Vec<f64>,
    /// Physical wall curvature `b″/(1 + b′²)^{3/2}` per column.
    pub curvature: Vec<f64>,
    /// Trapezoid weights in `ζ`; the flattening has unit Jacobian.
    pub weights: Vec<f64>,
    pub(crate) fft: PeriodicFft,
    pub(crate) d1: Vec<Stencil>,
    pub(crate) d2: Vec<Stencil>,
    pub(crate) wall_d1: Stencil,
    pub(crate) top_d1: Stencil,
    /// One-sided high-order weights for `∂_ζ` and `∂_ζ²` at the wall.
    pub(crate) wall_jet: [Vec<f64>; 2],
    /// `2πm` per family slot, zero in the Nyquist slot.
    pub(crate) wavenumbers: Vec<Vec<f64>>,
    /// Circulant multipliers by `b′`, `b″` and `1 + b′²`.
    pub(crate) mul_b1: CMat,
    pub(crate) mul_b2: CMat,
    pub(crate) mul_b3: CMat,
}

impl Mesh {
    /// `layer` is the viscous thickness used for wall clustering.
    pub fn new(domain: &DomainParams, grid: NsGrid, layer: f64) -> Result<Self> {
        grid.validate()?;
        let periods = domain.periods();
        let k = grid.per_period;
        let nx = k * periods;
        let x1: Vec<f64> = (0..nx).map(|i| i as f64 / nx as f64).collect();
        let zeta = stretched_nodes(grid.levels, grid.height, grid.layer_fraction, 3.0 * layer);
        let wall: Vec<ProfileJet> = x1.iter().map(|&x| domain.physical_wall(x)).collect();
        let arclength: Vec<f64> = wall.iter().map(|w| (1.0 + w.d1 * w.d1).sqrt()).collect();
        let curvature: Vec<f64> = wall
            .iter()
            .zip(&arclength)
            .map(|(w, g)| w.d2 / (g * g * g))
            .collect();
        let weights = trapezoid_weights(&zeta);
        let n = grid.levels;
        let mut d1 = vec![[0.0; 3]; n + 1];
        let mut d2 = vec![[0.0; 3]; n + 1];
        for j in 1..n {
            let (a, b) = interior_stencils(zeta[j] - zeta[j - 1], zeta[j + 1] - zeta[j]);
            d1[j] = a;
            d2[j] = b;
        }
        let wall_d1 = forward_first(zeta[1] - zeta[0], zeta[2] - zeta[1]);
        let top_d1 = backward_first(zeta[n] - zeta[n - 1], zeta[n - 1] - zeta[n - 2]);
        let jet = fd_weights(0.0, &zeta[..WALL_JET_POINTS.min(n + 1)], 2);
        let wall_jet = [jet[1].clone(), jet[2].clone()];
        let fft = PeriodicFft::new(nx);
        let wavenumbers = (0..periods)
            .map(|r| {
                (0..k)
                    .map(|q| {
                        let idx = r + q * periods;
                        if fft.is_nyquist(idx) {
                            0.0
                        } else {
                            2.0 * PI * fft.wavenumber(idx) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let circulant = |c: &dyn Fn(&ProfileJet) -> f64| -> CMat {
            let samples: Vec<f64> = wall[..k].iter().map(c).collect();
            let hat = PeriodicFft::new(k).forward(&samples);
            CMat::from_fn(k, k, |q, p| hat[(q + k - p) % k])
        };
        let mul_b1 = circulant(&|w| w.d1);
        let mul_b2 = circulant(&|w| w.d2);
        let mul_b3 = circulant(&|w| 1.0 + w.d1 * w.d1);
        Ok(Self {
            domain: domain.clone(),
            grid,
            periods,
            nx,
            x1,
            zeta,
            wall,
            arclength,
            curvature,
            weights,
            fft,
            d1,
            d2,
            wall_d1,
            top_d1,
            wall_jet,
            wavenumbers,
            mul_b1,
            mul_b2,
            mul_b3,
        })
    }

    pub fn nz(&self) -> usize {
        self.zeta.len()
    }

    pub fn levels(&self) -> usize {
        self.grid.levels
    }

    pub fn per_period(&self) -> usize {
        self.grid.per_period
    }

    /// Physical height of node `(j, i)`.
    pub fn x2(&self, j: usize, i: usize) -> f64 {
        self.zeta[j] + self.wall[i].value
    }

    /// Number of cells inside `[0, thickness]`.
    pub fn cells_within(&self, thickness: f64) -> usize {
        self.zeta
            .iter()
            .skip(1)
            .take_while(|&&z| z <= thickness * (1.0 + 1e-12))
            .count()
    }

    pub fn zeros(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.nz(), self.nx)
    }

    /// Fourier coefficients of level `j`.
    pub(crate) fn level_coefficients(&self, f: &DMatrix<f64>, j: usize) -> Vec<Complex64> {
        let row: Vec<f64> = f.row(j).iter().copied().collect();
        self.fft.forward(&row)
    }

    /// `[family][level]` coefficient vectors of the given levels of `f`;
    /// levels outside `range` are zero.
    pub(crate) fn to_families(
        &self,
        f: &DMatrix<f64>,
        range: std::ops::Range<usize>,
    ) -> Vec<Vec<CVec>> {
        let (p, k) = (self.periods, self.per_period());
        let mut out = vec![vec![CVec::zeros(k); self.nz()]; p];
        for j in range {
            let c = self.level_coefficients(f, j);
            for (r, fam) in out.iter_mut().enumerate() {
                for q in 0..k {
                    fam[j][q] = c[r + q * p];
                }
            }
        }
        out
    }

    pub(crate) fn from_families(&self, fam: &[Vec<CVec>]) -> DMatrix<f64> {
        let (p, k) = (self.periods, self.per_period());
        let mut out = self.zeros();
        let mut c = vec![Complex64::new(0.0, 0.0); self.nx];
        for j in 0..self.nz() {
            for (r, f) in fam.iter().enumerate() {
                for q in 0..k {
                    c[r + q * p] = f[j][q];
                }
            }
            let row = self.fft.inverse(&c);
            for (i, v) in row.into_iter().enumerate() {
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Sets one level from a physical row.
    pub(crate) fn set_level(&self, fam: &mut [Vec<CVec>], j: usize, row: &[f64]) {
        let (p, k) = (self.periods, self.per_period());
        let c = self.fft.forward(row);
        for (r, f) in fam.iter_mut().enumerate() {
            for q in 0..k {
                f[j][q] = c[r + q * p];
            }
        }
    }

    /// Spectral `∂/∂x₁` at fixed `ζ`, level by level.
    pub fn d_x1(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.zeros();
        for j in 0..self.nz() {
            let row: Vec<f64> = f.row(j).iter().copied().collect();
            for (i, v) in self.fft.derivative(&row, 1).into_iter().enumerate() {
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Second-order `∂/∂ζ`, one-sided at both ends.
    pub fn d_zeta(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.levels();
        let mut out = self.zeros();
        for i in 0..self.nx {
            let w = self.wall_d1;
            out[(0, i)] = w[0] * f[(0, i)] + w[1] * f[(1, i)] + w[2] * f[(2, i)];
            for j in 1..n {
                let s = self.d1[j];
                out[(j, i)] = s[0] * f[(j - 1, i)] + s[1] * f[(j, i)] + s[2] * f[(j + 1, i)];
            }
            let t = self.top_d1;
            out[(n, i)] = t[0] * f[(n, i)] + t[1] * f[(n - 1, i)] + t[2] * f[(n - 2, i)];
        }
        out
    }

    /// `∂_ζ f` on the wall row only.
    pub fn wall_d_zeta(&self, f: &DMatrix<f64>) -> Vec<f64> {
        let w = self.wall_d1;
        (0..self.nx)
            .map(|i| w[0] * f[(0, i)] + w[1] * f[(1, i)] + w[2] * f[(2, i)])
            .collect()
    }

    /// `∫ f dx` over the flattened channel (unit Jacobian).
    pub fn integrate(&self, f: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for j in 0..self.nz() {
            s += self.weights[j] * f.row(j).iter().sum::<f64>();
        }
        s / self.nx as f64
    }

    /// Laplacian blocks `(lower, diag, upper)` of family `r` at interior level `j`.
    pub(crate) fn laplacian_blocks(&self, r: usize, j: usize) -> (CMat, CMat, CMat) {
        let k = self.per_period();
        let kw = &self.wavenumbers[r];
        let d = CMat::from_fn(k, k, |a, b| {
            if a == b {
                Complex64::new(0.0, kw[a])
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        // −2 b′ D ∂_ζ − b″ ∂_ζ
        let first = &self.mul_b1 * &d * Complex64::new(-2.0, 0.0) - &self.mul_b2;
        let d2 = &d * &d;
        let (s1, s2) = (self.d1[j], self.d2[j]);
        let c = |x: f64| Complex64::new(x, 0.0);
        let lower = &first * c(s1[0]) + &self.mul_b3 * c(s2[0]);
        let diag = &first * c(s1[1]) + &self.mul_b3 * c(s2[1]) + d2;
        let upper = &first * c(s1[2]) + &self.mul_b3 * c(s2[2]);
        (lower, diag, upper)
    }
}
