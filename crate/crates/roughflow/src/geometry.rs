//! Rough wall `x₂ = ε^{1+α} η(x₁/ε)`, its rescaled form `z₂ = ε^α η(z₁)`,
//! boundary frames, curvature and the flattening change of variables.

use crate::error::{invalid, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Value and first two derivatives of the profile at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// 1-periodic boundary oscillation given by a finite Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughProfile {
    mean: f64,
    modes: Vec<(i64, Complex64)>,
}

impl RoughProfile {
    /// Builds a profile from `mean + Σ c_j e^{2πijz}`. Coefficients must come
    /// in conjugate pairs and the resulting function must be positive.
    pub fn new(mean: f64, modes: Vec<(i64, Complex64)>) -> Result<Self> {
        let profile = Self::unchecked(mean, modes)?;
        let min = profile.min_value();
        if min <= 0.0 {
            return Err(invalid(format!(
                "profile must be positive, sampled minimum is {min}"
            )));
        }
        Ok(profile)
    }

    /// Constant profile. Level 0 is accepted and gives the reference flat wall.
    pub fn flat(level: f64) -> Self {
        Self {
            mean: level,
            modes: Vec::new(),
        }
    }

    /// `mean + amplitude·cos(2πz)`.
    pub fn cosine(mean: f64, amplitude: f64) -> Result<Self> {
        let c = Complex64::new(0.5 * amplitude, 0.0);
        Self::new(mean, vec![(1, c), (-1, c)])
    }

    /// The default study profile `2 + cos(2πz)`.
    pub fn default_study() -> Self {
        Self::cosine(2.0, 1.0).expect("default profile is positive")
    }

    /// Builds from `(j, re, im)` triples as written in config files.
    pub fn from_triples(mean: f64, triples: &[(i64, f64, f64)]) -> Result<Self> {
        Self::new(
            mean,
            triples
                .iter()
                .map(|&(j, re, im)| (j, Complex64::new(re, im)))
                .collect(),
        )
    }

    fn unchecked(mean: f64, modes: Vec<(i64, Complex64)>) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("profile mean must be finite"));
        }
        for &(j, c) in &modes {
            if j == 0 {
                return Err(invalid("put the zero mode in the mean offset"));
            }
            let partner = modes
                .iter()
                .filter(|(k, _)| *k == -j)
                .map(|(_, d)| *d)
                .next()
                .ok_or_else(|| invalid(format!("mode {j} has no conjugate partner")))?;
            if (partner - c.conj()).norm() > 1e-14 * (1.0 + c.norm()) {
                return Err(invalid(format!("modes {j} and {} are not conjugate", -j)));
            }
        }
        let mut modes = modes;
        modes.sort_by_key(|m| m.0);
        modes.dedup_by_key(|m| m.0);
        Ok(Self { mean, modes })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn modes(&self) -> &[(i64, Complex64)] {
        &self.modes
    }

    pub fn is_flat(&self) -> bool {
        self.modes.iter().all(|(_, c)| c.norm() == 0.0)
    }

    /// Largest |j| present.
    pub fn max_mode(&self) -> u64 {
        self.modes
            .iter()
            .map(|(j, _)| j.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Exact derivative of any order.
    pub fn derivative(&self, z: f64, order: u32) -> f64 {
        let mut v = if order == 0 { self.mean } else { 0.0 };
        for &(j, c) in &self.modes {
            let k = 2.0 * PI * j as f64;
            let phase = Complex64::from_polar(1.0, k * z);
            v += (c * Complex64::new(0.0, k).powu(order) * phase).re;
        }
        v
    }

    pub fn eval(&self, z: f64) -> ProfileJet {
        ProfileJet {
            value: self.derivative(z, 0),
            d1: self.derivative(z, 1),
            d2: self.derivative(z, 2),
        }
    }

    /// Number of positivity/supremum samples: 16 times the Nyquist rate of the top mode.
    fn sample_count(&self) -> usize {
        (32 * self.max_mode() as usize).max(64)
    }

    /// Sampled minimum on a grid fine enough for a band-limited function.
    pub fn min_value(&self) -> f64 {
        let n = self.sample_count();
        (0..n)
            .map(|i| self.derivative(i as f64 / n as f64, 0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Sampled `sup |η^{(order)}|`.
    pub fn sup_abs(&self, order: u32) -> f64 {
        let n = self.sample_count();
        (0..n)
            .map(|i| self.derivative(i as f64 / n as f64, order).abs())
            .fold(0.0, f64::max)
    }
}

/// Roughness scale ε, order parameter N₀ (α = 1/N₀) and the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    epsilon: f64,
    n0: u32,
    profile: RoughProfile,
}

impl DomainParams {
    pub fn new(epsilon: f64, n0: u32, profile: RoughProfile) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        let inv = 1.0 / epsilon;
        if (inv - inv.round()).abs() > 1e-9 * inv {
            return Err(invalid(format!(
                "1/ε must be an integer, got ε = {epsilon}"
            )));
        }
        if n0 == 0 {
            return Err(invalid("N₀ must be at least 1"));
        }
        Ok(Self {
            epsilon: 1.0 / inv.round(),
            n0,
            profile,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.n0 as f64
    }

    pub fn profile(&self) -> &RoughProfile {
        &self.profile
    }

    /// Number of roughness periods in one unit of `x₁`.
    pub fn periods(&self) -> usize {
        (1.0 / self.epsilon).round() as usize
    }

    /// Rescaled roughness amplitude `ε^α`.
    pub fn amplitude(&self) -> f64 {
        self.epsilon.powf(self.alpha())
    }

    /// `⟨ε^α η′(z₁)⟩`.
    pub fn bracket(&self, z1: f64) -> f64 {
        let s = self.amplitude() * self.profile.derivative(z1, 1);
        (1.0 + s * s).sqrt()
    }

    /// Rescaled wall height `ε^α η(z₁)`.
    pub fn wall(&self, z1: f64) -> f64 {
        self.amplitude() * self.profile.derivative(z1, 0)
    }

    /// Physical wall height `ε^{1+α} η(x₁/ε)` and its first two derivatives.
    pub fn physical_wall(&self, x1: f64) -> ProfileJet {
        let e = self.epsilon;
        let a = self.amplitude();
        let jet = self.profile.eval(x1 / e);
        ProfileJet {
            value: e * a * jet.value,
            d1: a * jet.d1,
            d2: a / e * jet.d2,
        }
    }

    pub fn frame(&self, z1: f64) -> Frame {
        Frame::from_slope(self.amplitude() * self.profile.derivative(z1, 1))
    }

    pub fn curvature(&self, z1: f64, scale: CurvatureScale) -> f64 {
        let a = self.amplitude();
        let jet = self.profile.eval(z1);
        let b = self.bracket(z1);
        let rescaled = a * jet.d2 / (b * b * b);
        match scale {
            CurvatureScale::Rescaled => rescaled,
            CurvatureScale::Physical => rescaled / self.epsilon,
        }
    }

    /// Maps `z` to `(z₁, z₂ − ε^α η(z₁))`.
    pub fn flatten(&self, z: [f64; 2]) -> Result<FlattenedCoords> {
        let z2 = z[1] - self.wall(z[0]);
        if z2 < -1e-14 * (1.0 + z[1].abs()) {
            return Err(Error::OutsideDomain { z1: z[0], z2: z[1] });
        }
        Ok(FlattenedCoords {
            z1: z[0],
            z2: z2.max(0.0),
        })
    }

    pub fn unflatten(&self, c: FlattenedCoords) -> [f64; 2] {
        [c.z1, c.z2 + self.wall(c.z1)]
    }

    /// Coefficients of the Laplacian in flattened variables at abscissa `z₁`.
    pub fn laplacian_coeffs(&self, z1: f64) -> LaplacianCoeffs {
        let a = self.amplitude();
        let jet = self.profile.eval(z1);
        LaplacianCoeffs {
            d11: 1.0,
            d22: 1.0 + a * a * jet.d1 * jet.d1,
            d12: -2.0 * a * jet.d1,
            d2: -a * jet.d2,
        }
    }
}

/// Selects the curvature of `∂Ω^ε` (physical) or of `∂Ω̃^ε` (rescaled by ε).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureScale {
    Physical,
    Rescaled,
}

/// Inward unit normal, unit tangent and the arclength factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub n: [f64; 2],
    pub tau: [f64; 2],
    pub bracket: f64,
}

impl Frame {
    /// Frame of a graph with slope `s`.
    pub fn from_slope(s: f64) -> Self {
        let b = (1.0 + s * s).sqrt();
        Self {
            n: [-s / b, 1.0 / b],
            tau: [1.0 / b, s / b],
            bracket: b,
        }
    }
}

/// Point in flattened coordinates; `z2 ≥ 0` inside the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlattenedCoords {
    pub z1: f64,
    pub z2: f64,
}

/// `Δ = d11 ∂₁² + d22 ∂₂² + d12 ∂₁∂₂ + d2 ∂₂` in flattened variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianCoeffs {
    pub d11: f64,
    pub d22: f64,
    pub d12: f64,
    pub d2: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn curvature_profile() -> RoughProfile {
        RoughProfile::cosine(2.0, 1.0 / (4.0 * PI * PI)).unwrap()
    }

    #[test]
    fn flat_profile_jet() {
        let p = RoughProfile::flat(1.0);
        assert_eq!(
            p.eval(0.3),
            ProfileJet {
                value: 1.0,
                d1: 0.0,
                d2: 0.0
            }
        );
    }

    #[test]
    fn default_profile_jets() {
        let p = RoughProfile::default_study();
        let j0 = p.eval(0.0);
        assert_abs_diff_eq!(j0.value, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j0.d1, 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(j0.d2, -4.0 * PI * PI, epsilon = 1e-12);
        let jq = p.eval(0.25);
        assert_abs_diff_eq!(jq.value, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(jq.d1, -2.0 * PI, epsilon = 1e-13);
        assert_abs_diff_eq!(jq.d2, 0.0, epsilon = 1e-11);
        // Central differences of the value reproduce both derivatives.
        let h = 1e-4;
        let fd1 = (p.derivative(0.25 + h, 0) - p.derivative(0.25 - h, 0)) / (2.0 * h);
        let fd2 = (p.derivative(h, 0) - 2.0 * p.derivative(0.0, 0) + p.derivative(-h, 0)) / (h * h);
        assert_abs_diff_eq!(fd1, jq.d1, epsilon = 1e-6);
        assert_abs_diff_eq!(fd2, j0.d2, epsilon = 1e-5);
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(RoughProfile::cosine(0.5, 1.0).is_err());
        let c = Complex64::new(0.1, 0.2);
        assert!(RoughProfile::new(1.0, vec![(1, c), (-1, c)]).is_err());
        assert!(RoughProfile::new(1.0, vec![(2, c)]).is_err());
        assert!(RoughProfile::new(1.0, vec![(2, c), (-2, c.conj())]).is_ok());
    }

    #[test]
    fn domain_rejects_non_integer_periods() {
        assert!(DomainParams::new(0.3, 2, RoughProfile::default_study()).is_err());
        assert!(DomainParams::new(0.25, 2, RoughProfile::default_study()).is_ok());
        assert!(DomainParams::new(0.25, 0, RoughProfile::default_study()).is_err());
    }

    #[test]
    fn frames() {
        let f = Frame::from_slope(0.0);
        assert_eq!(f.n, [0.0, 1.0]);
        assert_eq!(f.tau, [1.0, 0.0]);
        let f = Frame::from_slope(1.0);
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(f.n[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(f.n[1], r, epsilon = 1e-15);
        // τ = −n^⊥ with n^⊥ = (−n₂, n₁).
        assert_abs_diff_eq!(f.tau[0], f.n[1], epsilon = 1e-15);
        assert_abs_diff_eq!(f.tau[1], -f.n[0], epsilon = 1e-15);
    }

    /// Curvature of the graph `y = aη(z)` from finite differences of the curve.
    fn fd_curvature(d: &DomainParams, z: f64) -> f64 {
        let h = 1e-4;
        let y = |z: f64| d.wall(z);
        let y1 = (y(z + h) - y(z - h)) / (2.0 * h);
        let y2 = (y(z + h) - 2.0 * y(z) + y(z - h)) / (h * h);
        y2 / (1.0 + y1 * y1).powf(1.5)
    }

    #[test]
    fn curvature_examples() {
        let flat = DomainParams::new(0.25, 2, RoughProfile::flat(1.0)).unwrap();
        assert_eq!(flat.curvature(0.1, CurvatureScale::Rescaled), 0.0);

        let rough = DomainParams::new(0.25, 2, curvature_profile()).unwrap();
        assert_abs_diff_eq!(rough.amplitude(), 0.5, epsilon = 1e-15);
        let k = rough.curvature(0.0, CurvatureScale::Rescaled);
        assert_abs_diff_eq!(k, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(k, fd_curvature(&rough, 0.0), epsilon = 1e-6);

        let fine = DomainParams::new(1.0 / 16.0, 2, curvature_profile()).unwrap();
        let kp = fine.curvature(0.0, CurvatureScale::Physical);
        assert_abs_diff_eq!(kp, -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            kp,
            fd_curvature(&fine, 0.0) / fine.epsilon(),
            epsilon = 1e-5
        );
    }

    #[test]
    fn flatten_examples() {
        let flat = DomainParams::new(0.5, 1, RoughProfile::flat(0.0)).unwrap();
        let c = flat.flatten([0.3, 0.7]).unwrap();
        assert_eq!((c.z1, c.z2), (0.3, 0.7));
        assert_eq!(
            flat.laplacian_coeffs(0.3),
            LaplacianCoeffs {
                d11: 1.0,
                d22: 1.0,
                d12: 0.0,
                d2: 0.0
            }
        );

        let d = DomainParams::new(0.25, 2, RoughProfile::default_study()).unwrap();
        let z1 = 0.37;
        let on_wall = d.flatten([z1, d.wall(z1)]).unwrap();
        assert_eq!(on_wall.z2, 0.0);
        assert!(matches!(
            d.flatten([z1, 0.0]),
            Err(Error::OutsideDomain { .. })
        ));
        let p = [0.81, 2.3];
        let back = d.unflatten(d.flatten(p).unwrap());
        assert_abs_diff_eq!(back[0], p[0], epsilon = 1e-14);
        assert_abs_diff_eq!(back[1], p[1], epsilon = 1e-14);
    }

    /// Flattened-coordinate Laplacian of `G(z̃) = F(z̃₁, z̃₂ + aη(z̃₁))` by
    /// finite differences, compared with the Cartesian Laplacian of `F`.
    fn flattened_laplacian_error(d: &DomainParams, h: f64) -> f64 {
        let f = |z1: f64, z2: f64| (2.0 * PI * z1).sin() * (-z2).exp();
        let lap_f = |z1: f64, z2: f64| (1.0 - 4.0 * PI * PI) * f(z1, z2);
        let g = |t1: f64, t2: f64| f(t1, t2 + d.wall(t1));
        let mut err: f64 = 0.0;
        for &(t1, t2) in &[(0.1, 0.5), (0.4, 1.0), (0.77, 0.3)] {
            let c = d.laplacian_coeffs(t1);
            let g11 = (g(t1 + h, t2) - 2.0 * g(t1, t2) + g(t1 - h, t2)) / (h * h);
            let g22 = (g(t1, t2 + h) - 2.0 * g(t1, t2) + g(t1, t2 - h)) / (h * h);
            let g2 = (g(t1, t2 + h) - g(t1, t2 - h)) / (2.0 * h);
            let g12 = (g(t1 + h, t2 + h) - g(t1 + h, t2 - h) - g(t1 - h, t2 + h)
                + g(t1 - h, t2 - h))
                / (4.0 * h * h);
            let approx = c.d11 * g11 + c.d22 * g22 + c.d12 * g12 + c.d2 * g2;
            let exact = lap_f(t1, t2 + d.wall(t1));
            err = err.max((approx - exact).abs());
        }
        err
    }

    #[test]
    fn flattened_laplacian_second_order() {
        let d = DomainParams::new(0.25, 2, RoughProfile::default_study()).unwrap();
        let e1 = flattened_laplacian_error(&d, 1e-2);
        let e2 = flattened_laplacian_error(&d, 5e-3);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}");
    }

    proptest! {
        #[test]
        fn frame_is_orthonormal(z1 in 0.0..1.0f64, inv in 2usize..40, n0 in 1u32..5) {
            let d = DomainParams::new(1.0 / inv as f64, n0, RoughProfile::default_study()).unwrap();
            let f = d.frame(z1);
            let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
            prop_assert!((dot(f.n, f.n) - 1.0).abs() < 1e-14);
            prop_assert!((dot(f.tau, f.tau) - 1.0).abs() < 1e-14);
            prop_assert!(dot(f.n, f.tau).abs() < 1e-14);
        }

        #[test]
        fn rescaled_curvature_bound(z1 in 0.0..1.0f64, inv in 2usize..40, n0 in 1u32..5) {
            let d = DomainParams::new(1.0 / inv as f64, n0, RoughProfile::default_study()).unwrap();
            let k = d.curvature(z1, CurvatureScale::Rescaled).abs();
            prop_assert!(k <= d.amplitude() * d.profile().sup_abs(2) * (1.0 + 1e-12));
        }

        #[test]
        fn flatten_round_trip(z1 in 0.0..1.0f64, up in 0.0..5.0f64) {
            let d = DomainParams::new(0.125, 3, RoughProfile::default_study()).unwrap();
            let z = [z1, d.wall(z1) + up];
            let back = d.unflatten(d.flatten(z).unwrap());
            prop_assert!((back[1] - z[1]).abs() < 1e-14 * (1.0 + z[1]));
        }
    }
}
