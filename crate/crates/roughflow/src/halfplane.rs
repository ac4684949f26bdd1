//! Mode-by-mode Laplace solvers on the flat periodic half-plane `z₂ > 0`.
//!
//! A mode `e^{ikz₁}ψ(z₂)` of `Δψ = F` reduces to `ψ'' − k²ψ = F`, solved
//! here by Green-kernel quadrature for `k ≠ 0` and by a double
//! antiderivative for `k = 0`.

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, integrate_split, QuadResult};
use std::fmt;
use std::sync::Arc;

/// Kernel decay lengths kept in the quadrature window, `e^{-33} ≈ 5e-15`.
const KERNEL_WINDOW: f64 = 33.0;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A function of `z₂ ≥ 0` attached to one horizontal wavenumber.
#[derive(Clone)]
pub struct ModeFunction {
    wavenumber: f64,
    f: ScalarFn,
}

impl fmt::Debug for ModeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeFunction")
            .field("wavenumber", &self.wavenumber)
            .finish_non_exhaustive()
    }
}

impl ModeFunction {
    pub fn new<F>(wavenumber: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            wavenumber,
            f: Arc::new(f),
        }
    }

    pub fn zero(wavenumber: f64) -> Self {
        Self::new(wavenumber, |_| 0.0)
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.f)(z)
    }

    /// Magnitude scale over the near field `[0, 8]`.
    fn scale(&self) -> f64 {
        (0..=64)
            .map(|i| self.eval(i as f64 / 8.0).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest height beyond which the function stays below `1e-17·scale`
    /// (scanned on doubling windows). Fails if the tail never settles.
    pub fn support_extent(&self) -> Result<f64> {
        let scale = self.scale();
        if scale == 0.0 {
            return Ok(0.0);
        }
        let tiny = 1e-17 * scale;
        let mut top = 8.0;
        while top <= 4096.0 {
            let tail = (0..=200)
                .map(|i| self.eval(top * (1.0 + i as f64 / 200.0)).abs())
                .fold(0.0, f64::max);
            if tail <= tiny {
                return Ok(top);
            }
            top *= 2.0;
        }
        let tail = self.eval(8192.0).abs();
        Err(Error::Decay {
            tail: tail.max(tiny) / scale,
        })
    }
}

/// Dirichlet Green function of `∂² − k²` on `(0, ∞)`.
pub fn green_dirichlet(k: f64, z: f64, y: f64) -> Result<f64> {
    if k == 0.0 {
        return Err(invalid("the zero mode has no decaying Green function"));
    }
    let k = k.abs();
    let (lo, hi) = if z < y { (z, y) } else { (y, z) };
    // e^{-k hi} sinh(k lo) written without overflow.
    Ok(-(0.5 / k) * ((-k * (hi - lo)).exp() - (-k * (hi + lo)).exp()))
}

/// Neumann Green function of `∂² − k²` on `(0, ∞)`.
pub fn green_neumann(k: f64, z: f64, y: f64) -> Result<f64> {
    if k == 0.0 {
        return Err(invalid("the zero mode has no decaying Green function"));
    }
    let k = k.abs();
    let (lo, hi) = if z < y { (z, y) } else { (y, z) };
    Ok(-(0.5 / k) * ((-k * (hi - lo)).exp() + (-k * (hi + lo)).exp()))
}

fn kernel_integral<G>(kernel: G, k: f64, source: &ModeFunction, extent: f64, z: f64) -> QuadResult
where
    G: Fn(f64, f64, f64) -> Result<f64>,
{
    let upper = extent.min(z + KERNEL_WINDOW / k.abs());
    if upper <= 0.0 {
        return QuadResult {
            value: 0.0,
            error: 0.0,
        };
    }
    let integrand = |y: f64| kernel(k, z, y).expect("k is nonzero") * source.eval(y);
    integrate_split(integrand, 0.0, upper, &[z], 1e-15, 1e-13)
}

/// Value and quadrature error of `∫₀^∞ G_k(z,y)F(y)dy`.
pub fn poisson_dirichlet_value(k: f64, source: &ModeFunction, z: f64) -> Result<QuadResult> {
    if k == 0.0 {
        return Err(invalid("the zero mode has no decaying Green function"));
    }
    let extent = source.support_extent()?;
    Ok(kernel_integral(green_dirichlet, k, source, extent, z))
}

/// Decaying solution of `ψ'' − k²ψ = F`, `ψ(0) = 0`.
pub fn poisson_dirichlet_mode(k: f64, source: ModeFunction) -> Result<ModeFunction> {
    if k == 0.0 {
        return Err(invalid("the zero mode has no decaying Green function"));
    }
    let extent = source.support_extent()?;
    if extent == 0.0 {
        return Ok(ModeFunction::zero(k));
    }
    Ok(ModeFunction::new(k, move |z| {
        kernel_integral(green_dirichlet, k, &source, extent, z).value
    }))
}

/// Decaying solution of `ψ'' − k²ψ = S` with `ψ'(0) = g`.
///
/// For `k = 0` the data must satisfy `g + ∫S = 0`; the solution is then
/// normalised to vanish at infinity.
pub fn neumann_flat_mode(k: f64, g: f64, source: ModeFunction) -> Result<ModeFunction> {
    let extent = source.support_extent()?;
    if k == 0.0 {
        let total = if extent == 0.0 {
            0.0
        } else {
            integrate(|y| source.eval(y), 0.0, extent, 1e-15, 1e-13).value
        };
        let mismatch = g + total;
        if mismatch.abs() > 1e-10 * (1.0 + g.abs() + total.abs()) {
            return Err(Error::Compatibility { mismatch });
        }
        return Ok(ModeFunction::new(0.0, move |z| {
            if z >= extent {
                return 0.0;
            }
            integrate(|t| (t - z) * source.eval(t), z, extent, 1e-15, 1e-13).value
        }));
    }
    let kk = k.abs();
    Ok(ModeFunction::new(k, move |z| {
        let homogeneous = -(g / kk) * (-kk * z).exp();
        if extent == 0.0 {
            return homogeneous;
        }
        homogeneous + kernel_integral(green_neumann, k, &source, extent, z).value
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn dirichlet_green_examples() {
        assert_eq!(green_dirichlet(1.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(
            green_dirichlet(2.0, 1.0, 3.0).unwrap(),
            green_dirichlet(2.0, 3.0, 1.0).unwrap()
        );
        assert!(green_dirichlet(0.0, 1.0, 1.0).is_err());
        let g = green_dirichlet(1.0, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(g, -(-2.0f64).exp() * 1f64.sinh(), epsilon = 1e-15);
    }

    /// Second-order finite-difference solve of `(∂² − k²)G = δ(z − y)` with
    /// `G(0) = 0` and a far Dirichlet wall standing in for decay.
    #[test]
    fn dirichlet_green_matches_fd_oracle() {
        let (k, y, top, n) = (1.0, 1.0, 30.0, 6000usize);
        let h = top / n as f64;
        let iy = (y / h).round() as usize;
        let m = n - 1;
        let mut lower = vec![1.0 / (h * h); m];
        let mut diag = vec![-2.0 / (h * h) - k * k; m];
        let upper = vec![1.0 / (h * h); m];
        let mut rhs = vec![0.0; m];
        rhs[iy - 1] = 1.0 / h;
        for i in 1..m {
            let w = lower[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
            lower[i] = 0.0;
        }
        let mut sol = vec![0.0; m];
        sol[m - 1] = rhs[m - 1] / diag[m - 1];
        for i in (0..m - 1).rev() {
            sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
        }
        let iz = (2.0 / h).round() as usize;
        assert_abs_diff_eq!(
            sol[iz - 1],
            green_dirichlet(k, 2.0, y).unwrap(),
            epsilon = 2e-6
        );
        // The quoted reference value −0.159003 agrees only to about 5e-5.
        assert_abs_diff_eq!(sol[iz - 1], -0.159_003, epsilon = 1e-4);
    }

    #[test]
    fn dirichlet_mode_examples() {
        let zero = poisson_dirichlet_mode(1.0, ModeFunction::zero(1.0)).unwrap();
        assert_eq!(zero.eval(0.7), 0.0);

        let psi = poisson_dirichlet_mode(1.0, ModeFunction::new(1.0, |y| (-y).exp())).unwrap();
        for &z in &[0.0, 0.3, 1.0, 2.5, 6.0] {
            assert_abs_diff_eq!(psi.eval(z), -0.5 * z * (-z).exp(), epsilon = 1e-13);
        }
        let psi =
            poisson_dirichlet_mode(2.0, ModeFunction::new(2.0, |y| (-3.0 * y).exp())).unwrap();
        for &z in &[0.0f64, 0.2, 0.9, 3.0] {
            let exact = ((-3.0 * z).exp() - (-2.0 * z).exp()) / 5.0;
            assert_abs_diff_eq!(psi.eval(z), exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn dirichlet_mode_satisfies_ode() {
        let k = 2.0 * std::f64::consts::PI;
        let src = ModeFunction::new(k, |y| (y * y - 1.0) * (-1.5 * y).exp());
        let psi = poisson_dirichlet_mode(k, src.clone()).unwrap();
        let h = 1e-3;
        for &z in &[0.4, 1.1, 2.0] {
            let d2 = (psi.eval(z + h) - 2.0 * psi.eval(z) + psi.eval(z - h)) / (h * h);
            let resid = d2 - k * k * psi.eval(z) - src.eval(z);
            assert!(
                resid.abs() < 1e-5 * (1.0 + src.eval(z).abs()),
                "residual {resid}"
            );
        }
    }

    #[test]
    fn non_decaying_source_rejected() {
        let r = poisson_dirichlet_mode(1.0, ModeFunction::new(1.0, |y| 1.0 + y));
        assert!(matches!(r, Err(Error::Decay { .. })));
    }

    #[test]
    fn neumann_examples() {
        let psi = neumann_flat_mode(1.0, 1.0, ModeFunction::zero(1.0)).unwrap();
        assert_abs_diff_eq!(psi.eval(0.5), -(-0.5f64).exp(), epsilon = 1e-15);
        let psi = neumann_flat_mode(3.0, -3.0, ModeFunction::zero(3.0)).unwrap();
        assert_abs_diff_eq!(psi.eval(0.5), (-1.5f64).exp(), epsilon = 1e-15);
        match neumann_flat_mode(0.0, 0.1, ModeFunction::zero(0.0)) {
            Err(Error::Compatibility { mismatch }) => {
                assert_abs_diff_eq!(mismatch, 0.1, epsilon = 1e-15)
            }
            other => panic!("expected compatibility error, got {other:?}"),
        }
    }

    #[test]
    fn neumann_zero_mode_with_compatible_source() {
        // S = e^{-z} integrates to 1, so g = -1; ψ = e^{-z}.
        let psi = neumann_flat_mode(0.0, -1.0, ModeFunction::new(0.0, |z| (-z).exp())).unwrap();
        for &z in &[0.0, 0.5, 2.0] {
            assert_abs_diff_eq!(psi.eval(z), (-z).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn neumann_mode_with_source_meets_wall_datum() {
        let k = 2.0;
        let psi = neumann_flat_mode(k, 0.7, ModeFunction::new(k, |y| (-3.0 * y).exp())).unwrap();
        let h = 1e-4;
        let slope = (-3.0 * psi.eval(0.0) + 4.0 * psi.eval(h) - psi.eval(2.0 * h)) / (2.0 * h);
        assert_abs_diff_eq!(slope, 0.7, epsilon = 1e-6);
        // Closed form: particular e^{-3z}/5 plus homogeneous c e^{-2z}, c·(-2) - 3/5 = 0.7.
        let c = -(0.7 + 0.6) / 2.0;
        assert_abs_diff_eq!(
            psi.eval(0.8),
            (-2.4f64).exp() / 5.0 + c * (-1.6f64).exp(),
            epsilon = 1e-13
        );
    }

    proptest! {
        #[test]
        fn green_kernel_decay_bound(k in 0.1..20.0f64, z in 0.0..10.0f64, y in 0.0..10.0f64) {
            let g = green_dirichlet(k, z, y).unwrap();
            prop_assert!(g.abs() <= (1.0 / k) * (-0.5 * k * (z - y).abs()).exp() * (1.0 + 1e-14));
        }
    }
}
