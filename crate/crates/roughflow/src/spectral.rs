//! Discretisation building blocks: periodic FFTs, Chebyshev collocation and
//! three-point finite differences on non-uniform grids.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Forward/inverse FFT pair for 1-periodic real samples on `x_i = i / n`.
#[derive(Clone)]
pub struct PeriodicFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PeriodicFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicFft").field("n", &self.n).finish()
    }
}

impl PeriodicFft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "transform length must be positive");
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed wavenumber (in units of 2π) stored at index `idx`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i < (n + 1) / 2 {
            i
        } else {
            i - n
        }
    }

    /// True for the unpaired Nyquist slot of an even-length transform.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        self.n % 2 == 0 && idx == self.n / 2
    }

    /// Coefficients `c_m` with `f(x) = Σ c_m e^{2πimx}`.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Complex-input forward transform, same normalisation as [`forward`](Self::forward).
    pub fn forward_complex(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        self.fwd.process(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    /// Real part of the synthesis `Σ c_m e^{2πimx_i}`.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// Complex synthesis in place.
    pub fn inverse_complex(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        self.inv.process(buf);
    }

    /// Spectral derivative of the given order. The Nyquist mode is dropped
    /// for odd orders so the result stays real.
    pub fn derivative(&self, values: &[f64], order: u32) -> Vec<f64> {
        if order == 0 {
            return values.to_vec();
        }
        let mut c = self.forward(values);
        for (idx, ci) in c.iter_mut().enumerate() {
            if order % 2 == 1 && self.is_nyquist(idx) {
                *ci = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, 2.0 * PI * self.wavenumber(idx) as f64);
            *ci *= ik.powu(order);
        }
        self.inverse(&c)
    }
}

/// Dense spectral differentiation matrix of the given order on `n` periodic points.
pub fn fourier_diff_matrix(n: usize, order: u32) -> DMatrix<f64> {
    multiplier_matrix(n, |m, nyq| {
        if order % 2 == 1 && nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, 2.0 * PI * m as f64).powu(order)
        }
    })
}

/// Dense matrix of the multiplier `2π|m|` (the far-field Dirichlet-to-Neumann map).
pub fn fourier_abs_matrix(n: usize) -> DMatrix<f64> {
    multiplier_matrix(n, |m, _| {
        Complex64::new(2.0 * PI * (m.unsigned_abs() as f64), 0.0)
    })
}

fn multiplier_matrix<F>(n: usize, symbol: F) -> DMatrix<f64>
where
    F: Fn(i64, bool) -> Complex64,
{
    let fft = PeriodicFft::new(n);
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[col] = 1.0;
        let mut c = fft.forward(&e);
        for (idx, ci) in c.iter_mut().enumerate() {
            *ci *= symbol(fft.wavenumber(idx), fft.is_nyquist(idx));
        }
        let v = fft.inverse(&c);
        for row in 0..n {
            out[(row, col)] = v[row];
        }
    }
    out
}

/// Chebyshev–Gauss–Lobatto collocation on `[0, length]`, nodes ascending
/// from 0 with `n + 1` points.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    n: usize,
    length: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    diff: DMatrix<f64>,
}

impl Chebyshev {
    pub fn new(n: usize, length: f64) -> Self {
        assert!(n >= 2, "need at least three Chebyshev nodes");
        assert!(length > 0.0);
        let t: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
        let nodes = t.iter().map(|&tj| 0.5 * length * (1.0 - tj)).collect();
        let c: Vec<f64> = (0..=n)
            .map(|j| {
                let edge = if j == 0 || j == n { 2.0 } else { 1.0 };
                edge * if j % 2 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        let mut d = DMatrix::zeros(n + 1, n + 1);
        for i in 0..=n {
            let mut row_sum = 0.0;
            for j in 0..=n {
                if i != j {
                    let v = c[i] / c[j] / (t[i] - t[j]);
                    d[(i, j)] = v;
                    row_sum += v;
                }
            }
            d[(i, i)] = -row_sum;
        }
        // x = L(1 - t)/2, so d/dx = -(2/L) d/dt.
        let diff = d * (-2.0 / length);
        let weights = clenshaw_curtis(n)
            .into_iter()
            .map(|w| 0.5 * length * w)
            .collect();
        Self {
            n,
            length,
            nodes,
            weights,
            diff,
        }
    }

    /// Polynomial degree (number of nodes minus one).
    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Clenshaw–Curtis quadrature weights on `[0, length]`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// First-derivative collocation matrix.
    pub fn diff(&self) -> &DMatrix<f64> {
        &self.diff
    }

    /// Chebyshev coefficients `a_k` with `f = Σ a_k T_k(1 - 2x/L)`.
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(values.len(), n + 1);
        (0..=n)
            .map(|k| {
                let mut s = 0.0;
                for (j, &v) in values.iter().enumerate() {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    s += w * v * (PI * (j * k) as f64 / n as f64).cos();
                }
                let scale = if k == 0 || k == n { 1.0 } else { 2.0 };
                scale * s / n as f64
            })
            .collect()
    }

    /// Coefficients of d/dx of the series with coefficients `a`.
    pub fn derivative_coefficients(&self, a: &[f64]) -> Vec<f64> {
        let n = a.len();
        let mut b = vec![0.0; n];
        if n < 2 {
            return b;
        }
        b[n - 2] = 2.0 * (n - 1) as f64 * a[n - 1];
        for k in (1..n - 2).rev() {
            b[k] = b[k + 2] + 2.0 * (k + 1) as f64 * a[k + 1];
        }
        b[0] = 0.5 * (if n > 2 { b[2] } else { 0.0 }) + a[1];
        let s = -2.0 / self.length;
        b.iter_mut().for_each(|v| *v *= s);
        b
    }

    /// Evaluates a coefficient series at `x` by Clenshaw's recurrence.
    pub fn eval(&self, a: &[f64], x: f64) -> f64 {
        clenshaw(a, 1.0 - 2.0 * x / self.length)
    }
}

/// Fourier–Chebyshev coefficients of a field on `𝕋 × [0, h]`: `coef[m][k]` multiplies
/// `e^{2πi m x₁} T_k(1 − 2x₂/L)` with `m` in FFT index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    height: f64,
    coef: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(modes: usize, degree: usize, height: f64) -> Self {
        Self {
            height,
            coef: vec![vec![Complex64::new(0.0, 0.0); degree + 1]; modes],
        }
    }

    pub fn from_coefficients(height: f64, coef: Vec<Vec<Complex64>>) -> Self {
        Self { height, coef }
    }

    /// Samples on Chebyshev rows × periodic columns.
    pub fn from_grid(values: &DMatrix<f64>, fft: &PeriodicFft, cheb: &Chebyshev) -> Self {
        let rows: Vec<Vec<Complex64>> = (0..values.nrows())
            .map(|j| fft.forward(&values.row(j).iter().copied().collect::<Vec<_>>()))
            .collect();
        let coef = (0..values.ncols())
            .map(|idx| {
                let re = cheb.coefficients(&rows.iter().map(|r| r[idx].re).collect::<Vec<_>>());
                let im = cheb.coefficients(&rows.iter().map(|r| r[idx].im).collect::<Vec<_>>());
                re.into_iter()
                    .zip(im)
                    .map(|(a, b)| Complex64::new(a, b))
                    .collect()
            })
            .collect();
        Self {
            height: cheb.length(),
            coef,
        }
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Number of Fourier slots.
    pub fn modes(&self) -> usize {
        self.coef.len()
    }

    pub fn degree(&self) -> usize {
        self.coef.first().map_or(0, |c| c.len().saturating_sub(1))
    }

    pub fn is_zero(&self) -> bool {
        self.coef.iter().flatten().all(|c| c.norm_sqr() == 0.0)
    }

    fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.coef.len() as i64;
        let i = idx as i64;
        if i < (n + 1) / 2 {
            i
        } else {
            i - n
        }
    }

    /// `∂₂` of the field.
    pub fn d_x2(&self) -> Self {
        let s = -2.0 / self.height;
        let coef = self
            .coef
            .iter()
            .map(|a| {
                let n = a.len();
                let mut b = vec![Complex64::new(0.0, 0.0); n];
                if n >= 2 {
                    b[n - 2] = a[n - 1] * (2.0 * (n - 1) as f64);
                    for k in (1..n.saturating_sub(2)).rev() {
                        b[k] = b[k + 2] + a[k + 1] * (2.0 * (k + 1) as f64);
                    }
                    b[0] = (if n > 2 {
                        b[2]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }) * 0.5
                        + a[1];
                }
                b.iter_mut().for_each(|v| *v *= s);
                b
            })
            .collect();
        Self {
            height: self.height,
            coef,
        }
    }

    /// Chebyshev coefficients in `x₂` of `∂₁^{dx1}` of the field at `x₁`.
    pub fn column(&self, x1: f64, dx1: u32) -> Vec<f64> {
        let n = self.coef[0].len();
        let mut out = vec![0.0; n];
        let modes = self.coef.len();
        for (idx, a) in self.coef.iter().enumerate() {
            let k = 2.0 * PI * self.wavenumber(idx) as f64;
            if modes % 2 == 0 && idx == modes / 2 {
                // unpaired Nyquist mode interpolates as a cosine
                let (s, c) = (k * x1).sin_cos();
                let d = match dx1 % 4 {
                    0 => c,
                    1 => -s,
                    2 => -c,
                    _ => s,
                } * k.abs().powi(dx1 as i32);
                for (o, v) in out.iter_mut().zip(a) {
                    *o += v.re * d;
                }
                continue;
            }
            let phase = Complex64::from_polar(1.0, k * x1) * Complex64::new(0.0, k).powu(dx1);
            for (o, c) in out.iter_mut().zip(a) {
                *o += (c * phase).re;
            }
        }
        out
    }

    pub fn eval(&self, x1: f64, x2: f64, dx1: u32) -> f64 {
        clenshaw(&self.column(x1, dx1), 1.0 - 2.0 * x2 / self.height)
    }

    /// `∂₁^{dx1}` of the field on the wall `x₂ = 0`.
    pub fn wall(&self, x1: f64, dx1: u32) -> f64 {
        // T_k(1) = 1
        self.column(x1, dx1).iter().sum()
    }
}

/// Clenshaw summation of `Σ a_k T_k(t)`.
pub fn clenshaw(a: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ak in a.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ak;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + a.first().copied().unwrap_or(0.0)
}

/// Clenshaw–Curtis weights on `[-1, 1]` for the nodes `cos(πj/n)`.
pub fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let theta: Vec<f64> = (0..=n).map(|j| PI * j as f64 / n as f64).collect();
    let mut v = vec![1.0; n.saturating_sub(1)];
    let nf = n as f64;
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * k as f64 * theta[i + 1]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[i + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * k as f64 * theta[i + 1]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Three-point stencil weights `(left, centre, right)`.
pub type Stencil = [f64; 3];

/// Centred first and second derivative stencils at an interior node with
/// spacings `h1 = x_j - x_{j-1}` and `h2 = x_{j+1} - x_j`.
pub fn interior_stencils(h1: f64, h2: f64) -> (Stencil, Stencil) {
    let s = h1 + h2;
    let d1 = [-h2 / (h1 * s), (h2 - h1) / (h1 * h2), h1 / (h2 * s)];
    let d2 = [2.0 / (h1 * s), -2.0 / (h1 * h2), 2.0 / (h2 * s)];
    (d1, d2)
}

/// Second-order one-sided first derivative at `x_0` using `x_0, x_1, x_2`.
pub fn forward_first(h1: f64, h2: f64) -> Stencil {
    let s = h1 + h2;
    [-(2.0 * h1 + h2) / (h1 * s), s / (h1 * h2), -h1 / (h2 * s)]
}

/// Second-order one-sided first derivative at `x_n` using `x_n, x_{n-1}, x_{n-2}`,
/// with `h1 = x_n - x_{n-1}` and `h2 = x_{n-1} - x_{n-2}`. Weights are ordered
/// `(x_n, x_{n-1}, x_{n-2})`.
pub fn backward_first(h1: f64, h2: f64) -> Stencil {
    let f = forward_first(h1, h2);
    [-f[0], -f[1], -f[2]]
}

/// Finite-difference weights at `x0` on arbitrary `nodes` for every derivative
/// order up to `max_order` (Fornberg's recursion). Row `m` holds the weights
/// of the `m`-th derivative.
pub fn fd_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Trapezoid weights for a non-uniform grid.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        let h = x[j + 1] - x[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
    }
    w
}
