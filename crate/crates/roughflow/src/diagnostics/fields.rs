//! Pointwise jets of test fields and generators of random band-limited
//! decaying fields above a rough wall.

use super::region::Region;
use rand::Rng;
use std::f64::consts::PI;

/// Value and gradient of an `N`-component field; `grad[i][j] = ∂_j f_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub value: [f64; N],
    pub grad: [[f64; 2]; N],
}

pub type ScalarJet = Jet<1>;
pub type VectorJet = Jet<2>;

impl<const N: usize> Jet<N> {
    pub const ZERO: Self = Self {
        value: [0.0; N],
        grad: [[0.0; 2]; N],
    };

    pub fn norm_sq(&self) -> f64 {
        self.value.iter().map(|v| v * v).sum()
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.grad.iter().flatten().map(|v| v * v).sum()
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.value.iter_mut().for_each(|v| *v *= c);
        self.grad.iter_mut().flatten().for_each(|v| *v *= c);
        self
    }
}

impl VectorJet {
    pub fn curl(&self) -> f64 {
        self.grad[1][0] - self.grad[0][1]
    }

    pub fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

/// `(cos·cos(kx₁) + sin·sin(kx₁)) · p(ζ) e^{−rζ}` with `k = 2π·wavenumber/width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub wavenumber: u32,
    pub cos: f64,
    pub sin: f64,
    /// Polynomial coefficients in ascending powers of `ζ`.
    pub poly: Vec<f64>,
    pub rate: f64,
}

impl Mode {
    /// `∂ζ^j` of `p(ζ)e^{−rζ}` for `j = 0, 1, 2`.
    fn vertical(&self, z: f64) -> [f64; 3] {
        let p = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &a| acc * z + a);
        let d1: Vec<f64> = self
            .poly
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, a)| k as f64 * a)
            .collect();
        let d2: Vec<f64> = d1
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, a)| k as f64 * a)
            .collect();
        let (p0, p1, p2) = (p(&self.poly), p(&d1), p(&d2));
        let r = self.rate;
        let e = (-r * z).exp();
        [
            p0 * e,
            (p1 - r * p0) * e,
            (p2 - 2.0 * r * p1 + r * r * p0) * e,
        ]
    }
}

/// `ψ(x) = Ψ(x₁, x₂ − b(x₁))` with `Ψ = Σ modes`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedField {
    region: Region,
    modes: Vec<Mode>,
}

impl FlattenedField {
    pub fn new(region: &Region, modes: Vec<Mode>) -> Self {
        Self {
            region: region.clone(),
            modes,
        }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// `p[i][j] = ∂_{x₁}^i ∂_ζ^j Ψ` for `i + j ≤ 2`.
    fn partials(&self, x1: f64, zeta: f64) -> [[f64; 3]; 3] {
        let mut p = [[0.0; 3]; 3];
        let width = self.region.width();
        for m in &self.modes {
            let k = 2.0 * PI * m.wavenumber as f64 / width;
            let (s, c) = (k * x1).sin_cos();
            let h = [
                m.cos * c + m.sin * s,
                k * (m.sin * c - m.cos * s),
                -k * k * (m.cos * c + m.sin * s),
            ];
            let v = m.vertical(zeta);
            for i in 0..3 {
                for j in 0..3 - i {
                    p[i][j] += h[i] * v[j];
                }
            }
        }
        p
    }

    /// Physical first and second derivatives `(ψ, [ψ₁, ψ₂], [ψ₁₁, ψ₁₂, ψ₂₂])`.
    fn physical(&self, x: [f64; 2]) -> (f64, [f64; 2], [f64; 3]) {
        let b = self.region.wall(x[0]);
        let p = self.partials(x[0], x[1] - b.value);
        let d1 = p[1][0] - b.d1 * p[0][1];
        let d11 = p[2][0] - 2.0 * b.d1 * p[1][1] - b.d2 * p[0][1] + b.d1 * b.d1 * p[0][2];
        let d12 = p[1][1] - b.d1 * p[0][2];
        (p[0][0], [d1, p[0][1]], [d11, d12, p[0][2]])
    }

    pub fn scalar(&self, x: [f64; 2]) -> ScalarJet {
        let (v, g, _) = self.physical(x);
        Jet {
            value: [v],
            grad: [g],
        }
    }

    /// `∇^⊥ψ = (−∂₂ψ, ∂₁ψ)`, divergence-free; tangent to the wall when `Ψ(·, 0) = 0`.
    pub fn perp_gradient(&self, x: [f64; 2]) -> VectorJet {
        let (_, g, h) = self.physical(x);
        Jet {
            value: [-g[1], g[0]],
            grad: [[-h[1], -h[2]], [h[0], h[1]]],
        }
    }

    /// Random smooth field with `modes` terms, wavenumbers up to `3·periods`
    /// and decay lengths between `scale/3` and `scale`.
    pub fn random_scalar<R: Rng>(region: &Region, modes: usize, rng: &mut R) -> Self {
        Self::random(region, modes, rng, false)
    }

    /// As [`random_scalar`](Self::random_scalar) but vanishing on the wall, so
    /// that [`perp_gradient`](Self::perp_gradient) is an admissible velocity.
    pub fn random_stream<R: Rng>(region: &Region, modes: usize, rng: &mut R) -> Self {
        Self::random(region, modes, rng, true)
    }

    fn random<R: Rng>(region: &Region, modes: usize, rng: &mut R, vanish: bool) -> Self {
        let s = region.scale();
        let top = 3 * region.periods() as u32;
        let modes = (0..modes)
            .map(|_| {
                let c1 = rng.random_range(-1.0..1.0) / s;
                let c2 = rng.random_range(-1.0..1.0) / (s * s);
                let poly = if vanish {
                    vec![0.0, c1, c2]
                } else {
                    vec![rng.random_range(-1.0..1.0), c1]
                };
                Mode {
                    wavenumber: rng.random_range(0..=top),
                    cos: rng.random_range(-1.0..1.0),
                    sin: rng.random_range(-1.0..1.0),
                    poly,
                    rate: rng.random_range(1.0..3.0) / s,
                }
            })
            .collect();
        Self {
            region: region.clone(),
            modes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainParams, Frame, RoughProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rough() -> Region {
        Region::rescaled_cell(&DomainParams::new(0.25, 2, RoughProfile::default_study()).unwrap())
    }

    #[test]
    fn stream_velocity_is_solenoidal_and_tangent() {
        let r = rough();
        let f = FlattenedField::random_stream(&r, 4, &mut ChaCha8Rng::seed_from_u64(3));
        for i in 0..40 {
            let x1 = i as f64 / 40.0;
            let b = r.wall(x1);
            let v = f.perp_gradient([x1, b.value]);
            let n = Frame::from_slope(b.d1).n;
            assert!((v.value[0] * n[0] + v.value[1] * n[1]).abs() < 1e-12);
            let w = f.perp_gradient([x1, b.value + 0.3]);
            assert!(w.div().abs() < 1e-11 * (1.0 + w.grad_norm_sq().sqrt()));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let r = rough();
        let f = FlattenedField::random_stream(&r, 3, &mut ChaCha8Rng::seed_from_u64(9));
        let h = 1e-5;
        for &x in &[[0.1, 0.9], [0.55, 1.4], [0.8, 2.2]] {
            let j = f.perp_gradient(x);
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let (p, m) = (f.perp_gradient(xp), f.perp_gradient(xm));
                for c in 0..2 {
                    let fd = (p.value[c] - m.value[c]) / (2.0 * h);
                    assert!(
                        (fd - j.grad[c][d]).abs() < 1e-6 * (1.0 + fd.abs()),
                        "{c} {d}: {fd} vs {}",
                        j.grad[c][d]
                    );
                }
            }
        }
    }
}
