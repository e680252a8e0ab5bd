//! Quadrature rules for the ball, the sphere and closed curves.
//!
//! Sphere integrals are taken in hyperspherical coordinates over
//! `W = (0, 2pi) x (0, pi)^(n-2)`: the azimuth uses the periodic trapezoid
//! rule, the polar angles use Gauss-Legendre, and every node carries the
//! Gram weight `g(theta)`. Ball integrals add a Gauss-Legendre rule in the
//! radius with weight `r^(n-1)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gram_sqrt, sphere_param_into};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    #[default]
    TensorGauss,
    MonteCarlo,
}

/// Node counts and mode for ball, sphere and curve integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Nodes per angle coordinate.
    pub angular_nodes: usize,
    /// Gauss-Legendre nodes in the radius.
    pub radial_nodes: usize,
    /// Nodes for one period of a dither-curve integral. `None` picks the
    /// minimum that resolves the fastest angle.
    pub curve_nodes: Option<usize>,
    pub mode: QuadratureMode,
    /// Monte Carlo only.
    pub seed: u64,
    /// Monte Carlo only.
    pub samples: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            angular_nodes: 64,
            radial_nodes: 32,
            curve_nodes: None,
            mode: QuadratureMode::TensorGauss,
            seed: 0,
            samples: 200_000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_nodes(angular_nodes: usize, radial_nodes: usize) -> Self {
        Self {
            angular_nodes,
            radial_nodes,
            ..Self::default()
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            mode: QuadratureMode::MonteCarlo,
            samples,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angular_nodes < 2 {
            return Err(Error::InvalidQuadrature(
                "angular_nodes must be >= 2".into(),
            ));
        }
        if self.radial_nodes < 2 {
            return Err(Error::InvalidQuadrature("radial_nodes must be >= 2".into()));
        }
        if matches!(self.curve_nodes, Some(c) if c < 2) {
            return Err(Error::InvalidQuadrature("curve_nodes must be >= 2".into()));
        }
        if self.mode == QuadratureMode::MonteCarlo && self.samples < 2 {
            return Err(Error::InvalidQuadrature("samples must be >= 2".into()));
        }
        Ok(())
    }

    /// Curve node count for `(n, k)`: at least `256 * 2^((n-2)k)`.
    pub fn curve_nodes_for(&self, n: usize, k: u32) -> Result<usize> {
        let required = min_curve_nodes(n, k);
        match self.curve_nodes {
            None => Ok(required),
            Some(given) if given >= required => Ok(given),
            Some(given) => Err(Error::InsufficientCurveNodes {
                required,
                given,
                k,
                n,
            }),
        }
    }
}

/// Minimum curve node count, `256 * 2^((n-2)k)`.
pub fn min_curve_nodes(n: usize, k: u32) -> usize {
    let shift = (n.saturating_sub(2) as u32).saturating_mul(k);
    256usize.checked_shl(shift).unwrap_or(usize::MAX)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Roots of `P_m` by Newton iteration from the Tricomi initial guess.
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to `[lo, hi]`.
    pub fn on_interval(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        (
            self.nodes.iter().map(|x| mid + half * x).collect(),
            self.weights.iter().map(|w| half * w).collect(),
        )
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (x, w) = self.on_interval(lo, hi);
        x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum()
    }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=m {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Periodic trapezoid rule: `sum_i f(t0 + i h) * h` with `h = period / m`.
pub fn periodic_trapezoid(period: f64, m: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = period / m as f64;
    (0..m).map(|i| f(i as f64 * h)).sum::<f64>() * h
}

/// Tensor rule on the unit sphere in `R^n`: unit directions and surface weights.
#[derive(Debug, Clone)]
pub struct SphereRule {
    dim: usize,
    /// Row-major `len x dim` directions.
    directions: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(dim: usize, angular_nodes: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidQuadrature("sphere rule needs n >= 2".into()));
        }
        if angular_nodes < 2 {
            return Err(Error::InvalidQuadrature(
                "angular_nodes must be >= 2".into(),
            ));
        }
        let m = dim - 1;
        let h = 2.0 * PI / angular_nodes as f64;
        let azimuth: Vec<(f64, f64)> = (0..angular_nodes).map(|i| (i as f64 * h, h)).collect();
        let (px, pw) = GaussLegendre::new(angular_nodes).on_interval(0.0, PI);
        let polar: Vec<(f64, f64)> = px.into_iter().zip(pw).collect();

        let count = angular_nodes.pow(m as u32);
        let mut directions = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        let mut theta = vec![0.0; m];
        let mut point = vec![0.0; dim];
        let mut index = vec![0usize; m];
        loop {
            let mut w = 1.0;
            for j in 0..m {
                let (t, wj) = if j == 0 {
                    azimuth[index[j]]
                } else {
                    polar[index[j]]
                };
                theta[j] = t;
                w *= wj;
            }
            sphere_param_into(&theta, &mut point)?;
            directions.extend_from_slice(&point);
            weights.push(w * gram_sqrt(&theta));

            // odometer increment
            let mut j = 0;
            loop {
                if j == m {
                    return Ok(Self {
                        dim,
                        directions,
                        weights,
                    });
                }
                index[j] += 1;
                if index[j] < angular_nodes {
                    break;
                }
                index[j] = 0;
                j += 1;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.directions
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// `int_S f(s) dlambda(s)`.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.points().map(|(s, w)| w * f(s)).sum()
    }

    /// `int_S f(s) s dlambda(s)`.
    pub fn integrate_weighted_direction(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for (s, w) in self.points() {
            let fw = w * f(s);
            for (a, si) in acc.iter_mut().zip(s) {
                *a += fw * si;
            }
        }
        acc
    }
}

/// Radial-shell rule for the unit ball: `int_B f = int_0^1 r^(n-1) int_S f(r s) ds dr`.
#[derive(Debug, Clone)]
pub struct BallRule {
    sphere: SphereRule,
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
}

impl BallRule {
    pub fn new(dim: usize, angular_nodes: usize, radial_nodes: usize) -> Result<Self> {
        if radial_nodes < 2 {
            return Err(Error::InvalidQuadrature("radial_nodes must be >= 2".into()));
        }
        let sphere = SphereRule::new(dim, angular_nodes)?;
        let (radii, w) = GaussLegendre::new(radial_nodes).on_interval(0.0, 1.0);
        let radial_weights = radii
            .iter()
            .zip(w)
            .map(|(r, w)| w * r.powi(dim as i32 - 1))
            .collect();
        Ok(Self {
            sphere,
            radii,
            radial_weights,
        })
    }

    pub fn sphere(&self) -> &SphereRule {
        &self.sphere
    }

    /// `int_B f(xi) dxi`.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let dim = self.sphere.dim();
        let mut xi = vec![0.0; dim];
        let mut total = 0.0;
        for (r, rw) in self.radii.iter().zip(&self.radial_weights) {
            let shell: f64 = self
                .sphere
                .points()
                .map(|(s, w)| {
                    for (x, si) in xi.iter_mut().zip(s) {
                        *x = r * si;
                    }
                    w * f(&xi)
                })
                .sum();
            total += rw * shell;
        }
        total
    }
}

/// Volume of the unit ball in `R^n`, `pi^(n/2) / Gamma(n/2 + 1)`.
pub fn ball_volume(n: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_n = 2 pi / n * V_{n-2}
    let mut v = if n.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut j = if n.is_multiple_of(2) { 2 } else { 3 };
    while j <= n {
        v *= 2.0 * PI / j as f64;
        j += 2;
    }
    v
}

/// Surface area of the unit sphere in `R^n`, `n * vol(B)`.
pub fn sphere_area(n: usize) -> f64 {
    n as f64 * ball_volume(n)
}
