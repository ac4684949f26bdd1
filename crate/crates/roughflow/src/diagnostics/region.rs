//! Tensor quadrature on periodic domains `{x₂ > b(x₁)}` with
//! `b(x₁) = s·a·η(x₁/s)`, integrated in the flattened variables
//! `(x₁, ζ = x₂ − b(x₁))` where the Jacobian is one.

use crate::error::{invalid, Result};
use crate::geometry::{DomainParams, Frame, ProfileJet, RoughProfile};
use crate::par::{map_range, Exec};
use crate::quadrature::gauss_legendre;
use serde::{Deserialize, Serialize};

/// Rough region with `periods` cells of width `scale` in `x₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    scale: f64,
    amplitude: f64,
    profile: RoughProfile,
    periods: usize,
}

impl Region {
    pub fn new(scale: f64, amplitude: f64, profile: RoughProfile, periods: usize) -> Result<Self> {
        if !(scale > 0.0) || periods == 0 {
            return Err(invalid(format!(
                "region needs scale > 0 and periods ≥ 1, got {scale}, {periods}"
            )));
        }
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(invalid(format!(
                "roughness amplitude must lie in [0, 1], got {amplitude}"
            )));
        }
        Ok(Self {
            scale,
            amplitude,
            profile,
            periods,
        })
    }

    /// `Ω^ε` over `x₁ ∈ [0, 1)`.
    pub fn physical(domain: &DomainParams) -> Self {
        Self {
            scale: domain.epsilon(),
            amplitude: domain.amplitude(),
            profile: domain.profile().clone(),
            periods: domain.periods(),
        }
    }

    /// One cell of the rescaled domain `{z₂ > ε^α η(z₁)}`.
    pub fn rescaled_cell(domain: &DomainParams) -> Self {
        Self {
            scale: 1.0,
            amplitude: domain.amplitude(),
            profile: domain.profile().clone(),
            periods: 1,
        }
    }

    /// Flat wall at `x₂ = 0` over `x₁ ∈ [0, 1)`, split in cells of width `scale`.
    pub fn half_plane(scale: f64) -> Self {
        let periods = (1.0 / scale).round().max(1.0) as usize;
        Self {
            scale: 1.0 / periods as f64,
            amplitude: 0.0,
            profile: RoughProfile::flat(0.0),
            periods,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn profile(&self) -> &RoughProfile {
        &self.profile
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn width(&self) -> f64 {
        self.scale * self.periods as f64
    }

    pub fn wall(&self, x1: f64) -> ProfileJet {
        let (s, a) = (self.scale, self.amplitude);
        let j = self.profile.eval(x1 / s);
        ProfileJet {
            value: s * a * j.value,
            d1: a * j.d1,
            d2: a / s * j.d2,
        }
    }

    /// `sup |b′|`.
    pub fn slope_bound(&self) -> f64 {
        self.amplitude * self.profile.sup_abs(1)
    }

    /// `sup |b″|`.
    pub fn curvature_bound(&self) -> f64 {
        self.amplitude / self.scale * self.profile.sup_abs(2)
    }
}

/// Rule in the flattened vertical variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Vertical {
    /// Gauss–Legendre on `[0, height]`.
    Finite { height: f64 },
    /// Gauss–Legendre in `t` with `ζ = s·t/(1 − t)`; `s` should be near the
    /// decay length of the integrands.
    Decaying { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadGrid {
    /// Uniform `x₁` points per cell.
    pub per_period: usize,
    /// Gauss points in `ζ`.
    pub vertical: usize,
}

impl Default for QuadGrid {
    fn default() -> Self {
        Self {
            per_period: 64,
            vertical: 96,
        }
    }
}

impl QuadGrid {
    /// Two thirds of the points in each direction; used for error estimates.
    pub fn coarser(self) -> Self {
        Self {
            per_period: (2 * self.per_period / 3).max(4),
            vertical: (2 * self.vertical / 3).max(4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: [f64; 2],
    pub zeta: f64,
    pub weight: f64,
}

/// Wall point with weight `⟨b′⟩dx₁` for `∫_∂ · dσ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallNode {
    pub x: [f64; 2],
    pub weight: f64,
    pub frame: Frame,
}

#[derive(Debug, Clone)]
pub struct Quadrature {
    region: Region,
    grid: QuadGrid,
    vertical: Vertical,
    nodes: Vec<Node>,
    wall: Vec<WallNode>,
    exec: Exec,
}

impl Quadrature {
    pub fn new(region: &Region, grid: QuadGrid, vertical: Vertical, exec: Exec) -> Result<Self> {
        if grid.per_period < 2 || grid.vertical < 2 {
            return Err(invalid(format!("quadrature grid too small: {grid:?}")));
        }
        let (t, w) = gauss_legendre(grid.vertical);
        let column: Vec<(f64, f64)> = match vertical {
            Vertical::Finite { height } if height > 0.0 => t
                .iter()
                .zip(&w)
                .map(|(t, w)| (0.5 * height * (t + 1.0), 0.5 * height * w))
                .collect(),
            Vertical::Decaying { scale } if scale > 0.0 => t
                .iter()
                .zip(&w)
                .map(|(t, w)| {
                    let u = 0.5 * (t + 1.0);
                    (
                        scale * u / (1.0 - u),
                        0.5 * w * scale / ((1.0 - u) * (1.0 - u)),
                    )
                })
                .collect(),
            _ => {
                return Err(invalid(format!(
                    "vertical rule needs a positive length: {vertical:?}"
                )))
            }
        };
        let nx = grid.per_period * region.periods;
        let dx = region.width() / nx as f64;
        let mut nodes = Vec::with_capacity(nx * column.len());
        let mut wall = Vec::with_capacity(nx);
        for i in 0..nx {
            let x1 = i as f64 * dx;
            let b = region.wall(x1);
            let frame = Frame::from_slope(b.d1);
            wall.push(WallNode {
                x: [x1, b.value],
                weight: dx * (1.0 + b.d1 * b.d1).sqrt(),
                frame,
            });
            nodes.extend(column.iter().map(|&(z, wz)| Node {
                x: [x1, b.value + z],
                zeta: z,
                weight: dx * wz,
            }));
        }
        Ok(Self {
            region: region.clone(),
            grid,
            vertical,
            nodes,
            wall,
            exec,
        })
    }

    pub fn coarser(&self) -> Result<Self> {
        Self::new(&self.region, self.grid.coarser(), self.vertical, self.exec)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn grid(&self) -> QuadGrid {
        self.grid
    }

    pub fn vertical(&self) -> Vertical {
        self.vertical
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn wall(&self) -> &[WallNode] {
        &self.wall
    }

    /// Samples `f` on the interior nodes, in node order.
    pub fn sample<T: Send, F: Fn(&Node) -> T + Sync + Send>(&self, f: F) -> Vec<T> {
        map_range(self.exec, self.nodes.len(), |k| f(&self.nodes[k]))
    }

    pub fn sample_wall<T: Send, F: Fn(&WallNode) -> T + Sync + Send>(&self, f: F) -> Vec<T> {
        map_range(self.exec, self.wall.len(), |k| f(&self.wall[k]))
    }

    /// `weight · value` with a zero value winning over an overflowed weight,
    /// which happens far out on the decaying rule.
    pub fn weighted(weight: f64, value: f64) -> f64 {
        if value == 0.0 {
            0.0
        } else {
            weight * value
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(values)
            .map(|(n, v)| n.weight * v)
            .sum()
    }

    pub fn integrate_wall(&self, values: &[f64]) -> f64 {
        self.wall
            .iter()
            .zip(values)
            .map(|(n, v)| n.weight * v)
            .sum()
    }

    /// Indices of the nodes on the highest `ζ` level.
    pub fn top_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let nz = self.grid.vertical;
        (0..self.nodes.len() / nz).map(move |i| i * nz + nz - 1)
    }
}
