//! Hyperspherical coordinates and the periodic dither signals built on them.
//!
//! The sphere parametrization maps `n - 1` angles `(t0, t1, ..., t_{n-2})` to a
//! point on the unit sphere in `R^n`:
//!
//! ```text
//! phi_1 = cos(t0) sin(t1) ... sin(t_{n-2})
//! phi_2 = sin(t0) sin(t1) ... sin(t_{n-2})
//! phi_i = cos(t_{i-2}) sin(t_{i-1}) ... sin(t_{n-2})      (i >= 3)
//! ```
//!
//! The dither curve runs the angles at geometrically stacked integer rates
//! `[1, 2^(k-1), 2^(2k-1), ..., 2^((n-2)k-1)]`, so it is `2pi`-periodic and
//! winds more densely over the sphere as `k` grows. Angles are never wrapped.

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Angle coordinates `(t0, ..., t_{n-2})` of a point on the unit sphere in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleVector(Vec<f64>);

impl AngleVector {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("theta", "needs at least one angle (n >= 2)"));
        }
        Ok(Self(angles))
    }

    /// Ambient dimension `n` of the sphere these angles parametrize.
    pub fn ambient_dim(&self) -> usize {
        self.0.len() + 1
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for AngleVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A direction in `R^n` of unit Euclidean length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `components`, checking the norm is 1 to within `1e-12`.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let norm = norm(&components);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid("components", format!("norm {norm} is not 1")));
        }
        Ok(Self(components))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for UnitVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One sample of the two dither signals at a phase `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DitherSample {
    /// Velocity direction `dU/dtau`.
    pub u: Vec<f64>,
    /// Gram-weighted probe direction `g(theta) U`; `|v| <= 1`.
    pub v: Vec<f64>,
}

/// A point of the unit cube `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubePoint(Vec<f64>);

impl CubePoint {
    pub fn new(coordinates: Vec<f64>) -> Result<Self> {
        check_unit_cube(&coordinates)?;
        Ok(Self(coordinates))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for CubePoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_unit_cube(z: &[f64]) -> Result<()> {
    for (index, &value) in z.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutsideUnitCube { index, value });
        }
    }
    Ok(())
}

/// Dense row-major `n x (n-1)` Jacobian of the sphere parametrization.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// `J v` for a vector `v` of length `cols`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }

    /// `det(J^T J)` by Gaussian elimination with partial pivoting.
    pub fn gram_determinant(&self) -> f64 {
        let m = self.cols;
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                g[i * m + j] = (0..self.rows)
                    .map(|r| self.get(r, i) * self.get(r, j))
                    .sum();
            }
        }
        determinant(&mut g, m)
    }
}

fn determinant(a: &mut [f64], m: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))
            .unwrap_or(col);
        if a[pivot * m + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..m {
                a.swap(pivot * m + c, col * m + c);
            }
            det = -det;
        }
        let p = a[col * m + col];
        det *= p;
        for r in col + 1..m {
            let f = a[r * m + col] / p;
            for c in col..m {
                a[r * m + c] -= f * a[col * m + c];
            }
        }
    }
    det
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Factor {
    One,
    Sin,
    Cos,
}

/// Which trig factor of angle `j` appears in component `r` (both 0-based).
fn factor(r: usize, j: usize) -> Factor {
    match r {
        0 if j == 0 => Factor::Cos,
        0 | 1 => Factor::Sin,
        _ if j + 1 < r => Factor::One,
        _ if j + 1 == r => Factor::Cos,
        _ => Factor::Sin,
    }
}

#[inline]
fn factor_value(f: Factor, s: f64, c: f64) -> f64 {
    match f {
        Factor::One => 1.0,
        Factor::Sin => s,
        Factor::Cos => c,
    }
}

#[inline]
fn factor_derivative(f: Factor, s: f64, c: f64) -> f64 {
    match f {
        Factor::One => 0.0,
        Factor::Sin => c,
        Factor::Cos => -s,
    }
}

fn sin_cos(theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    theta.iter().map(|t| t.sin_cos()).unzip()
}

/// Writes `phi(theta)` into `out`; `out.len()` must be `theta.len() + 1`.
pub fn sphere_param_into(theta: &[f64], out: &mut [f64]) -> Result<()> {
    if theta.is_empty() || out.len() != theta.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: out.len().saturating_sub(1),
            actual: theta.len(),
        });
    }
    let (s, c) = sin_cos(theta);
    fill_sphere_point(&s, &c, out);
    Ok(())
}

fn fill_sphere_point(s: &[f64], c: &[f64], out: &mut [f64]) {
    let m = s.len();
    // suffix[j] = sin(t_j) * ... * sin(t_{m-1})
    let mut suffix = 1.0;
    for r in (2..=m).rev() {
        out[r] = c[r - 1] * suffix;
        suffix *= s[r - 1];
    }
    out[0] = c[0] * suffix;
    out[1] = s[0] * suffix;
}

/// The sphere parametrization `phi`.
pub fn sphere_param(theta: &AngleVector) -> UnitVector {
    let mut out = vec![0.0; theta.ambient_dim()];
    let (s, c) = sin_cos(theta);
    fill_sphere_point(&s, &c, &mut out);
    UnitVector(out)
}

/// Closed-form Jacobian `D phi(theta)`, an `n x (n-1)` matrix.
pub fn sphere_param_jacobian(theta: &AngleVector) -> Jacobian {
    let (s, c) = sin_cos(theta);
    jacobian_from_trig(&s, &c)
}

fn jacobian_from_trig(s: &[f64], c: &[f64]) -> Jacobian {
    let m = s.len();
    let n = m + 1;
    let mut data = vec![0.0; n * m];
    for r in 0..n {
        for j in 0..m {
            let fj = factor(r, j);
            if fj == Factor::One {
                continue;
            }
            let mut value = factor_derivative(fj, s[j], c[j]);
            for l in (0..m).filter(|&l| l != j) {
                value *= factor_value(factor(r, l), s[l], c[l]);
            }
            data[r * m + j] = value;
        }
    }
    Jacobian {
        rows: n,
        cols: m,
        data,
    }
}

/// Square root of the Gram determinant of `phi`:
/// `|sin(t1) sin^2(t2) ... sin^(n-2)(t_{n-2})|`, and 1 for `n = 2`.
pub fn gram_sqrt(theta: &[f64]) -> f64 {
    theta
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, t)| t.sin().abs().powi(j as i32))
        .product()
}

fn gram_from_sin(s: &[f64]) -> f64 {
    s.iter()
        .enumerate()
        .skip(1)
        .map(|(j, v)| v.abs().powi(j as i32))
        .product()
}

/// Angle rates `[1, 2^(k-1), 2^(2k-1), ..., 2^((n-2)k-1)]`.
pub fn angle_rates(k: u32, n: usize) -> Vec<f64> {
    assert!(n >= 2, "dimension must be at least 2");
    assert!(k >= 1, "k must be a positive integer");
    let mut rates = Vec::with_capacity(n - 1);
    rates.push(1.0);
    for j in 1..n - 1 {
        rates.push(2f64.powi((j as u32 * k) as i32 - 1));
    }
    rates
}

/// Angle path `theta_k(tau)`. For `n = 2` it is `[tau]` and `k` has no effect.
///
/// # Panics
/// If `n < 2` or `k == 0`.
pub fn angle_path(tau: f64, k: u32, n: usize) -> AngleVector {
    AngleVector(angle_rates(k, n).into_iter().map(|r| r * tau).collect())
}

/// Sphere-valued dither curve `U_k(tau) = phi(theta_k(tau))`.
pub fn curve_u(tau: f64, k: u32, n: usize) -> UnitVector {
    sphere_param(&angle_path(tau, k, n))
}

/// Velocity dither `u_k = dU_k/dtau`, by the chain rule on `phi`.
pub fn dither_u(tau: f64, k: u32, n: usize) -> Vec<f64> {
    SphericalDither::new(n, k)
        .expect("dither_u preconditions: n >= 2, k >= 1")
        .sample(tau)
        .u
}

/// Probe dither `v_k = g(theta_k) U_k`.
pub fn dither_v(tau: f64, k: u32, n: usize) -> Vec<f64> {
    SphericalDither::new(n, k)
        .expect("dither_v preconditions: n >= 2, k >= 1")
        .sample(tau)
        .v
}

/// Precomputed dither generator for fixed `(n, k)`; used on hot paths.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalDither {
    n: usize,
    k: u32,
    rates: Vec<f64>,
}

impl SphericalDither {
    pub fn new(n: usize, k: u32) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "dimension must be at least 2"));
        }
        if k == 0 {
            return Err(invalid("k", "must be a positive integer"));
        }
        if n > 2 && (n as u64 - 2) * k as u64 > 1000 {
            return Err(invalid("k", "angle rates overflow f64"));
        }
        Ok(Self {
            n,
            k,
            rates: angle_rates(k, n),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Angle rates `d theta_k / d tau`.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Largest angle rate; 1 for `n = 2`.
    pub fn fastest_rate(&self) -> f64 {
        self.rates.iter().copied().fold(1.0, f64::max)
    }

    pub fn angles(&self, tau: f64) -> AngleVector {
        AngleVector(self.rates.iter().map(|r| r * tau).collect())
    }

    pub fn position(&self, tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.position_into(tau, &mut out);
        out
    }

    pub fn position_into(&self, tau: f64, out: &mut [f64]) {
        let (s, c) = self.trig(tau);
        fill_sphere_point(&s, &c, out);
    }

    pub fn sample(&self, tau: f64) -> DitherSample {
        let mut pos = vec![0.0; self.n];
        let mut u = vec![0.0; self.n];
        let mut v = vec![0.0; self.n];
        self.eval_into(tau, &mut pos, &mut u, &mut v);
        DitherSample { u, v }
    }

    /// Writes `U_k(tau)`, `u_k(tau)` and `v_k(tau)` in one pass.
    pub fn eval_into(&self, tau: f64, pos: &mut [f64], u: &mut [f64], v: &mut [f64]) {
        let (s, c) = self.trig(tau);
        fill_sphere_point(&s, &c, pos);
        let jac = jacobian_from_trig(&s, &c);
        for (r, ur) in u.iter_mut().enumerate() {
            *ur = (0..self.n - 1)
                .map(|j| jac.data[r * (self.n - 1) + j] * self.rates[j])
                .sum();
        }
        let g = gram_from_sin(&s);
        for (vr, pr) in v.iter_mut().zip(pos.iter()) {
            *vr = g * pr;
        }
    }

    /// Writes `U_k(tau)` and returns `g(theta_k(tau))`.
    pub fn position_and_weight(&self, tau: f64, pos: &mut [f64]) -> f64 {
        let (s, c) = self.trig(tau);
        fill_sphere_point(&s, &c, pos);
        gram_from_sin(&s)
    }

    fn trig(&self, tau: f64) -> (Vec<f64>, Vec<f64>) {
        self.rates.iter().map(|r| (r * tau).sin_cos()).unzip()
    }
}

/// Sawtooth of unit amplitude and period: `sigma - floor(sigma)`, in `[0, 1)`.
pub fn sawtooth(sigma: f64) -> f64 {
    let r = sigma - sigma.floor();
    // tiny negative sigma rounds to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Cube-filling curve `[saw(s), saw(2^k s), ..., saw(2^((d-1)k) s)]`.
pub fn filling_curve(sigma: f64, k: u32, d: usize) -> CubePoint {
    assert!(d >= 1 && k >= 1, "filling_curve needs d >= 1 and k >= 1");
    CubePoint(
        (0..d)
            .map(|i| sawtooth(2f64.powi((i as u32 * k) as i32) * sigma))
            .collect(),
    )
}

/// Rescales a cube point to angles: `pi * [2 z0, z1, ..., z_{d-1}]`.
pub fn angle_rescale(z: &[f64]) -> Result<AngleVector> {
    check_unit_cube(z)?;
    AngleVector::new(
        z.iter()
            .enumerate()
            .map(|(i, &zi)| if i == 0 { 2.0 * PI * zi } else { PI * zi })
            .collect(),
    )
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
