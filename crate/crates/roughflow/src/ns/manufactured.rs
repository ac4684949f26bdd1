//! Manufactured solutions `ψ = T(t) A(x₁) Z(ζ)` for the Navier–Stokes solver.
//!
//! `A` is a trigonometric polynomial and `Z(ζ) = ζ e^{−(ζ/w)²}`. Every
//! derived quantity is a finite sum of terms `X(x₁) Z^{(n)}(ζ)`; the `X`
//! are differentiated spectrally on an oversampled grid, which is exact
//! because all of them are band-limited well below its Nyquist mode.

use super::{Mesh, NsConfig, VorticitySource};
use crate::euler::smooth_ramp;
use crate::spectral::PeriodicFft;
use nalgebra::DMatrix;
use rand::Rng;
use std::f64::consts::PI;

const OVERSAMPLE: usize = 4;

/// `p(ζ) e^{−(ζ/w)²}` with `p` in ascending powers.
#[derive(Debug, Clone)]
struct GaussPoly {
    coef: Vec<f64>,
    width: f64,
}

impl GaussPoly {
    fn derivative(&self) -> Self {
        let w2 = self.width * self.width;
        let mut c = vec![0.0; self.coef.len() + 1];
        for (k, &a) in self.coef.iter().enumerate() {
            if k > 0 {
                c[k - 1] += k as f64 * a;
            }
            c[k + 1] -= 2.0 * a / w2;
        }
        Self {
            coef: c,
            width: self.width,
        }
    }

    fn eval(&self, z: f64) -> f64 {
        let p = self.coef.iter().rev().fold(0.0, |acc, &a| acc * z + a);
        p * (-(z / self.width).powi(2)).exp()
    }
}

/// `Σ X_k(x₁) Z^{(n_k)}(ζ)` with `X_k` sampled on the fine grid.
#[derive(Debug, Clone, Default)]
struct Separable {
    terms: Vec<(Vec<f64>, usize)>,
}

struct Calculus {
    fft: PeriodicFft,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

impl Calculus {
    fn dx(&self, f: &Separable) -> Separable {
        Separable {
            terms: f
                .terms
                .iter()
                .map(|(x, n)| (self.fft.derivative(x, 1), *n))
                .collect(),
        }
    }

    fn dz(f: &Separable) -> Separable {
        Separable {
            terms: f.terms.iter().map(|(x, n)| (x.clone(), n + 1)).collect(),
        }
    }

    /// `X″Z⁽ⁿ⁾ − (2b′X′ + b″X)Z⁽ⁿ⁺¹⁾ + (1 + b′²)XZ⁽ⁿ⁺²⁾`.
    fn laplacian(&self, f: &Separable) -> Separable {
        let mut terms = Vec::new();
        for (x, n) in &f.terms {
            let d1 = self.fft.derivative(x, 1);
            let d2 = self.fft.derivative(x, 2);
            let mid: Vec<f64> = (0..x.len())
                .map(|i| -2.0 * self.b1[i] * d1[i] - self.b2[i] * x[i])
                .collect();
            let top: Vec<f64> = (0..x.len())
                .map(|i| (1.0 + self.b1[i] * self.b1[i]) * x[i])
                .collect();
            terms.push((d2, *n));
            terms.push((mid, n + 1));
            terms.push((top, n + 2));
        }
        Separable { terms }
    }
}

/// `cos·cos(2πkx₁) + sin·sin(2πkx₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMode {
    pub wavenumber: u32,
    pub cos: f64,
    pub sin: f64,
}

#[derive(Debug, Clone)]
pub struct Manufactured {
    nx: usize,
    zeta: Vec<f64>,
    z: Vec<GaussPoly>,
    psi: Separable,
    psi_x: Separable,
    psi_z: Separable,
    omega: Separable,
    omega_x: Separable,
    omega_z: Separable,
    omega_lap: Separable,
    nu: f64,
    sponge: f64,
    height: f64,
    /// `2κ + λ` and the arclength factor on the solver columns.
    wall_gain: Vec<f64>,
    arclength: Vec<f64>,
}

impl Manufactured {
    /// `A(x₁) = cos 2πx₁ + ½ sin 4πx₁`, `T(t) = amplitude · sin 2t`.
    pub fn new(config: &NsConfig, mesh: &Mesh, amplitude: f64, width: f64) -> Self {
        let shape = [
            ShapeMode {
                wavenumber: 1,
                cos: amplitude,
                sin: 0.0,
            },
            ShapeMode {
                wavenumber: 2,
                cos: 0.0,
                sin: 0.5 * amplitude,
            },
        ];
        Self::with_shape(config, mesh, &shape, width)
    }

    /// Random `A` with up to four modes of wavenumber at most 3 and a width
    /// in `[0.2, 0.6]·height`.
    pub fn random<R: Rng>(config: &NsConfig, mesh: &Mesh, rng: &mut R) -> Self {
        let count = rng.random_range(1..=4);
        let shape: Vec<ShapeMode> = (0..count)
            .map(|_| ShapeMode {
                wavenumber: rng.random_range(0..=3),
                cos: rng.random_range(-1.0..1.0),
                sin: rng.random_range(-1.0..1.0),
            })
            .collect();
        let width = rng.random_range(0.2..0.6) * config.grid.height;
        Self::with_shape(config, mesh, &shape, width)
    }

    pub fn with_shape(config: &NsConfig, mesh: &Mesh, shape: &[ShapeMode], width: f64) -> Self {
        let nx = mesh.nx;
        let fine = OVERSAMPLE * nx;
        let xs: Vec<f64> = (0..fine).map(|i| i as f64 / fine as f64).collect();
        let walls: Vec<_> = xs.iter().map(|&x| config.domain.physical_wall(x)).collect();
        let calc = Calculus {
            fft: PeriodicFft::new(fine),
            b1: walls.iter().map(|w| w.d1).collect(),
            b2: walls.iter().map(|w| w.d2).collect(),
        };
        let a: Vec<f64> = xs
            .iter()
            .map(|&x| {
                shape
                    .iter()
                    .map(|m| {
                        let (s, c) = (2.0 * PI * m.wavenumber as f64 * x).sin_cos();
                        m.cos * c + m.sin * s
                    })
                    .sum()
            })
            .collect();
        let psi = Separable {
            terms: vec![(a, 0)],
        };
        let omega = calc.laplacian(&psi);
        let omega_lap = calc.laplacian(&omega);
        let mut z = vec![GaussPoly {
            coef: vec![0.0, 1.0],
            width,
        }];
        for _ in 0..6 {
            let next = z.last().unwrap().derivative();
            z.push(next);
        }
        let wall_gain: Vec<f64> = mesh
            .x1
            .iter()
            .enumerate()
            .map(|(i, &x)| 2.0 * mesh.curvature[i] + config.friction.value(x))
            .collect();
        Self {
            nx,
            zeta: mesh.zeta.clone(),
            z,
            psi_x: calc.dx(&psi),
            psi_z: Calculus::dz(&psi),
            omega_x: calc.dx(&omega),
            omega_z: Calculus::dz(&omega),
            psi,
            omega,
            omega_lap,
            nu: config.nu,
            sponge: config.sponge,
            height: config.grid.height,
            wall_gain,
            arclength: mesh.arclength.clone(),
        }
    }

    fn time_factor(t: f64) -> (f64, f64) {
        ((2.0 * t).sin(), 2.0 * (2.0 * t).cos())
    }

    fn column(&self, x1: f64) -> usize {
        let i = (x1 * self.nx as f64).round() as usize % self.nx;
        debug_assert!(
            ((i as f64) / self.nx as f64 - x1.rem_euclid(1.0)).abs() < 1e-9,
            "x₁ off the grid"
        );
        i * OVERSAMPLE
    }

    fn eval(&self, f: &Separable, col: usize, zeta: f64) -> f64 {
        f.terms
            .iter()
            .map(|(x, n)| x[col] * self.z[*n].eval(zeta))
            .sum()
    }

    fn grid(&self, f: &Separable, t: f64) -> DMatrix<f64> {
        let (tt, _) = Self::time_factor(t);
        DMatrix::from_fn(self.zeta.len(), self.nx, |j, i| {
            tt * self.eval(f, i * OVERSAMPLE, self.zeta[j])
        })
    }

    pub fn psi(&self, t: f64) -> DMatrix<f64> {
        self.grid(&self.psi, t)
    }

    pub fn omega(&self, t: f64) -> DMatrix<f64> {
        self.grid(&self.omega, t)
    }
}

impl VorticitySource for Manufactured {
    fn interior(&self, t: f64, x1: f64, zeta: f64) -> f64 {
        let c = self.column(x1);
        let (tt, dt) = Self::time_factor(t);
        let om = self.eval(&self.omega, c, zeta);
        let adv = self.eval(&self.psi_x, c, zeta) * self.eval(&self.omega_z, c, zeta)
            - self.eval(&self.psi_z, c, zeta) * self.eval(&self.omega_x, c, zeta);
        let sigma = self.sponge * smooth_ramp((zeta - 0.5 * self.height) / (0.5 * self.height)).0;
        dt * om + tt * tt * adv - self.nu * tt * self.eval(&self.omega_lap, c, zeta)
            + sigma * tt * om
    }

    fn wall(&self, t: f64, x1: f64) -> f64 {
        let c = self.column(x1);
        let i = c / OVERSAMPLE;
        let (tt, _) = Self::time_factor(t);
        let tangent = -self.arclength[i] * self.eval(&self.psi_z, c, 0.0);
        tt * (self.eval(&self.omega, c, 0.0) - self.wall_gain[i] * tangent)
    }
}
