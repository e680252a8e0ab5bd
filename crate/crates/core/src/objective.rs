//! Objective catalog, ball-averaged objectives and the dither-averaged fields.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{norm, SphericalDither};
use crate::quadrature::{ball_volume, sphere_area, BallRule, QuadratureMode, QuadratureSpec};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A black-box scalar field on `R^n`, optionally with an analytic gradient.
#[derive(Clone)]
pub struct ObjectiveField {
    name: String,
    dim: usize,
    eval: ScalarFn,
    gradient: Option<VectorFn>,
}

impl fmt::Debug for ObjectiveField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectiveField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl ObjectiveField {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn analytic_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }
}

/// Identifier plus parameters of a built-in objective.
///
/// Ids: `ringed_gaussian_3d`, `ringed_gaussian_3d_verbatim`,
/// `perturbed_decay_2d`, `flat_bump_4d`, `quadratic` (needs `matrix`),
/// `linear` (needs `weights`), `constant` (needs `value` and `dim`).
/// The radial objectives accept `dim` to override their default dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl ObjectiveSpec {
    pub fn named(id: &str) -> Self {
        Self {
            id: id.to_string(),
            dim: None,
            matrix: None,
            weights: None,
            value: None,
        }
    }

    pub fn in_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn quadratic(matrix: Vec<Vec<f64>>) -> Self {
        Self {
            matrix: Some(matrix),
            ..Self::named("quadratic")
        }
    }

    /// `|x|^2` in `R^n`.
    pub fn squared_norm(n: usize) -> Self {
        Self::quadratic(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn linear(weights: Vec<f64>) -> Self {
        Self {
            weights: Some(weights),
            ..Self::named("linear")
        }
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self {
            value: Some(value),
            dim: Some(dim),
            ..Self::named("constant")
        }
    }

    pub fn build(&self) -> Result<ObjectiveField> {
        builtin_objective(self)
    }
}

pub const BUILTIN_IDS: [&str; 7] = [
    "ringed_gaussian_3d",
    "ringed_gaussian_3d_verbatim",
    "perturbed_decay_2d",
    "flat_bump_4d",
    "quadratic",
    "linear",
    "constant",
];

/// `2 exp(-(r/3)^2) - exp(-(r^2 - 4)^2 / 2)`; global maximum `2 - e^-8` at 0.
pub fn ringed_gaussian(r: f64) -> f64 {
    let q = r * r - 4.0;
    2.0 * (-(r / 3.0).powi(2)).exp() - (-0.5 * q * q).exp()
}

fn ringed_gaussian_derivative(r: f64) -> f64 {
    let q = r * r - 4.0;
    -4.0 * r / 9.0 * (-(r / 3.0).powi(2)).exp() + 2.0 * r * q * (-0.5 * q * q).exp()
}

/// Variant without the square in the second exponent: `2 exp(-(r/3)^2) - exp(-(r^2 - 4) / 2)`.
pub fn ringed_gaussian_verbatim(r: f64) -> f64 {
    2.0 * (-(r / 3.0).powi(2)).exp() - (-0.5 * (r * r - 4.0)).exp()
}

fn ringed_gaussian_verbatim_derivative(r: f64) -> f64 {
    -4.0 * r / 9.0 * (-(r / 3.0).powi(2)).exp() + r * (-0.5 * (r * r - 4.0)).exp()
}

/// `1/(1 + r^2) + sin(10 r)/10`.
pub fn perturbed_decay(r: f64) -> f64 {
    1.0 / (1.0 + r * r) + 0.1 * (10.0 * r).sin()
}

fn perturbed_decay_derivative(r: f64) -> f64 {
    -2.0 * r / (1.0 + r * r).powi(2) + (10.0 * r).cos()
}

/// `1 - exp(-4/r^2)` with the removable value 1 at the origin.
pub fn flat_bump(r: f64) -> f64 {
    if r < 1e-150 {
        1.0
    } else {
        1.0 - (-4.0 / (r * r)).exp()
    }
}

fn flat_bump_derivative(r: f64) -> f64 {
    if r < 1e-150 {
        0.0
    } else {
        -8.0 / (r * r * r) * (-4.0 / (r * r)).exp()
    }
}

/// Profile `f(r)` or its derivative.
type RadialFn = fn(f64) -> f64;

fn radial(name: &str, dim: usize, profile: RadialFn, derivative: RadialFn) -> ObjectiveField {
    ObjectiveField::new(name, dim, move |x| profile(norm(x))).with_gradient(move |x| {
        let r = norm(x);
        if r == 0.0 {
            return vec![0.0; x.len()];
        }
        let d = derivative(r) / r;
        x.iter().map(|xi| d * xi).collect()
    })
}

fn reject_params(spec: &ObjectiveSpec, allowed: &[&str]) -> Result<()> {
    let present = [
        ("matrix", spec.matrix.is_some()),
        ("weights", spec.weights.is_some()),
        ("value", spec.value.is_some()),
    ];
    for (key, is_set) in present {
        if is_set && !allowed.contains(&key) {
            return Err(invalid(key, format!("not a parameter of `{}`", spec.id)));
        }
    }
    Ok(())
}

fn check_dim(dim: usize) -> Result<usize> {
    if dim < 2 {
        return Err(invalid("dim", "must be at least 2"));
    }
    Ok(dim)
}

/// Builds one of the built-in objectives; see [`ObjectiveSpec`] for ids.
pub fn builtin_objective(spec: &ObjectiveSpec) -> Result<ObjectiveField> {
    let id = spec.id.as_str();
    match id {
        "ringed_gaussian_3d"
        | "ringed_gaussian_3d_verbatim"
        | "perturbed_decay_2d"
        | "flat_bump_4d" => {
            reject_params(spec, &[])?;
            let (default_dim, profile, derivative): (usize, RadialFn, RadialFn) = match id {
                "ringed_gaussian_3d" => (3, ringed_gaussian, ringed_gaussian_derivative),
                "ringed_gaussian_3d_verbatim" => (
                    3,
                    ringed_gaussian_verbatim,
                    ringed_gaussian_verbatim_derivative,
                ),
                "perturbed_decay_2d" => (2, perturbed_decay, perturbed_decay_derivative),
                _ => (4, flat_bump, flat_bump_derivative),
            };
            let dim = check_dim(spec.dim.unwrap_or(default_dim))?;
            Ok(radial(id, dim, profile, derivative))
        }
        "quadratic" => {
            reject_params(spec, &["matrix"])?;
            let matrix = spec
                .matrix
                .clone()
                .ok_or_else(|| invalid("matrix", "`quadratic` needs a symmetric matrix"))?;
            let n = matrix.len();
            if matrix.iter().any(|row| row.len() != n) {
                return Err(invalid("matrix", "must be square"));
            }
            let asymmetric = (0..n).any(|i| {
                (0..i).any(|j| {
                    (matrix[i][j] - matrix[j][i]).abs() > 1e-12 * (1.0 + matrix[i][j].abs())
                })
            });
            if asymmetric {
                return Err(invalid("matrix", "must be symmetric"));
            }
            let dim = check_dim(n)?;
            if spec.dim.is_some_and(|d| d != dim) {
                return Err(invalid("dim", "does not match the matrix size"));
            }
            let m = Arc::new(matrix);
            let mg = Arc::clone(&m);
            Ok(ObjectiveField::new("quadratic", dim, move |x| {
                m.iter()
                    .zip(x)
                    .map(|(row, xi)| xi * row.iter().zip(x).map(|(a, xj)| a * xj).sum::<f64>())
                    .sum()
            })
            .with_gradient(move |x| {
                mg.iter()
                    .map(|row| 2.0 * row.iter().zip(x).map(|(a, xj)| a * xj).sum::<f64>())
                    .collect()
            }))
        }
        "linear" => {
            reject_params(spec, &["weights"])?;
            let w = spec
                .weights
                .clone()
                .ok_or_else(|| invalid("weights", "`linear` needs a weight vector"))?;
            let dim = check_dim(w.len())?;
            if spec.dim.is_some_and(|d| d != dim) {
                return Err(invalid("dim", "does not match the weight length"));
            }
            let wg = w.clone();
            Ok(ObjectiveField::new("linear", dim, move |x| {
                w.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .with_gradient(move |_| wg.clone()))
        }
        "constant" => {
            reject_params(spec, &["value"])?;
            let c = spec
                .value
                .ok_or_else(|| invalid("value", "`constant` needs a value"))?;
            let dim = check_dim(
                spec.dim
                    .ok_or_else(|| invalid("dim", "`constant` needs a dimension"))?,
            )?;
            Ok(ObjectiveField::new("constant", dim, move |_| c)
                .with_gradient(move |x| vec![0.0; x.len()]))
        }
        _ => Err(Error::UnknownObjective(spec.id.clone())),
    }
}

/// `c = vol(B) / (2 pi^(n-1))`, the gain between the curve average and `grad J_a`.
pub fn gradient_scale_c(n: usize) -> f64 {
    ball_volume(n) / (2.0 * PI.powi(n as i32 - 1))
}

fn check_point(j: &ObjectiveField, x: &[f64]) -> Result<()> {
    if x.len() != j.dim() {
        return Err(Error::DimensionMismatch {
            expected: j.dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

fn check_radius(a: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid("a", "radius must be positive"));
    }
    Ok(())
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator keyed on the seed and the call arguments, so results do not
/// depend on call order.
fn call_rng(seed: u64, x: &[f64], a: f64, salt: u64) -> ChaCha8Rng {
    let mut h = mix(seed ^ salt);
    for v in x.iter().chain(std::iter::once(&a)) {
        h = mix(h ^ v.to_bits());
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn sample_unit_ball(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let r2: f64 = out.iter().map(|v| v * v).sum();
        if r2 <= 1.0 && r2 > 1e-24 {
            return;
        }
    }
}

/// The ball average `J_a` of an objective together with its gradient.
#[derive(Debug, Clone)]
pub struct AveragedField {
    objective: ObjectiveField,
    radius: f64,
    quad: QuadratureSpec,
    rule: Option<BallRule>,
}

impl AveragedField {
    pub fn new(objective: ObjectiveField, radius: f64, quad: &QuadratureSpec) -> Result<Self> {
        check_radius(radius)?;
        quad.validate()?;
        let rule = match quad.mode {
            QuadratureMode::TensorGauss => Some(BallRule::new(
                objective.dim(),
                quad.angular_nodes,
                quad.radial_nodes,
            )?),
            QuadratureMode::MonteCarlo => None,
        };
        Ok(Self {
            objective,
            radius,
            quad: quad.clone(),
            rule,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn objective(&self) -> &ObjectiveField {
        &self.objective
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// `J_a(x) = (1/vol B) int_B J(x + a xi) dxi`.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        check_point(&self.objective, x)?;
        let n = self.dim();
        let a = self.radius;
        let mut y = vec![0.0; n];
        match &self.rule {
            Some(rule) => {
                let total = rule.integrate(|xi| {
                    for ((yi, xi), x0) in y.iter_mut().zip(xi).zip(x) {
                        *yi = x0 + a * xi;
                    }
                    self.objective.evaluate(&y)
                });
                Ok(total / ball_volume(n))
            }
            None => {
                let mut rng = call_rng(self.quad.seed, x, a, 1);
                let mut xi = vec![0.0; n];
                let mut sum = 0.0;
                for _ in 0..self.quad.samples {
                    sample_unit_ball(&mut rng, &mut xi);
                    for ((yi, xi), x0) in y.iter_mut().zip(&xi).zip(x) {
                        *yi = x0 + a * xi;
                    }
                    sum += self.objective.evaluate(&y);
                }
                Ok(sum / self.quad.samples as f64)
            }
        }
    }

    /// `grad J_a(x) = (1/(a vol B)) int_S J(x + a s) s dlambda(s)`.
    pub fn gradient_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let surface = self.surface_integral(x)?;
        let scale = 1.0 / (self.radius * ball_volume(self.dim()));
        Ok(surface.into_iter().map(|v| v * scale).collect())
    }

    /// `int_S J(x + a s) s dlambda(s)`.
    pub fn surface_integral(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(&self.objective, x)?;
        let n = self.dim();
        let a = self.radius;
        let mut y = vec![0.0; n];
        match &self.rule {
            Some(rule) => Ok(rule.sphere().integrate_weighted_direction(|s| {
                for ((yi, si), x0) in y.iter_mut().zip(s).zip(x) {
                    *yi = x0 + a * si;
                }
                self.objective.evaluate(&y)
            })),
            None => {
                let mut rng = call_rng(self.quad.seed, x, a, 2);
                let mut s = vec![0.0; n];
                let mut acc = vec![0.0; n];
                for _ in 0..self.quad.samples {
                    sample_unit_ball(&mut rng, &mut s);
                    let r = norm(&s);
                    s.iter_mut().for_each(|v| *v /= r);
                    for ((yi, si), x0) in y.iter_mut().zip(&s).zip(x) {
                        *yi = x0 + a * si;
                    }
                    let f = self.objective.evaluate(&y);
                    for (ac, si) in acc.iter_mut().zip(&s) {
                        *ac += f * si;
                    }
                }
                let scale = sphere_area(n) / self.quad.samples as f64;
                Ok(acc.into_iter().map(|v| v * scale).collect())
            }
        }
    }
}

/// Ball average of `j` at `x` with radius `a`.
pub fn averaged_objective(
    j: &ObjectiveField,
    x: &[f64],
    a: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    AveragedField::new(j.clone(), a, quad)?.value_at(x)
}

/// Gradient of the ball average via the sphere integral.
pub fn averaged_gradient(
    j: &ObjectiveField,
    x: &[f64],
    a: f64,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    AveragedField::new(j.clone(), a, quad)?.gradient_at(x)
}

/// Sphere integral in cube coordinates,
/// `int_[0,1]^(n-1) J(x + a phi(2 Theta(z))) g(2 Theta(z)) phi(2 Theta(z)) dz`.
///
/// The doubled angles cover the sphere `2^(n-1)` times, so this equals
/// `(1/(2 pi^(n-1))) int_S J(x + a s) s dlambda`. The azimuthal coordinate
/// uses a periodic trapezoid rule with `2 nodes` points. Each polar
/// coordinate is split at `1/2`, where `g` has a kink, and integrated with
/// `nodes`-point Gauss-Legendre on both halves.
pub fn cube_surface_integral(
    j: &ObjectiveField,
    x: &[f64],
    a: f64,
    nodes: usize,
) -> Result<Vec<f64>> {
    check_point(j, x)?;
    check_radius(a)?;
    if nodes < 2 {
        return Err(Error::InvalidQuadrature("nodes must be >= 2".into()));
    }
    let n = j.dim();
    let m = n - 1;
    let azimuth: Vec<(f64, f64)> = (0..2 * nodes)
        .map(|i| {
            let z = i as f64 / (2 * nodes) as f64;
            (4.0 * PI * z, 1.0 / (2 * nodes) as f64)
        })
        .collect();
    let gl = crate::quadrature::GaussLegendre::new(nodes);
    let polar: Vec<(f64, f64)> = [(0.0, 0.5), (0.5, 1.0)]
        .iter()
        .flat_map(|&(lo, hi)| {
            let (z, w) = gl.on_interval(lo, hi);
            z.into_iter().zip(w).map(|(z, w)| (2.0 * PI * z, w))
        })
        .collect();
    let len = 2 * nodes;
    let total = len
        .checked_pow(m as u32)
        .ok_or_else(|| Error::NodeBudget("too many cube nodes".into()))?;
    let mut theta = vec![0.0; m];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for (i, t) in theta.iter_mut().enumerate() {
            let (angle, wi) = if i == 0 {
                azimuth[rem % len]
            } else {
                polar[rem % len]
            };
            rem /= len;
            *t = angle;
            w *= wi;
        }
        crate::geometry::sphere_param_into(&theta, &mut s)?;
        let g = crate::geometry::gram_sqrt(&theta);
        for ((yi, si), x0) in y.iter_mut().zip(&s).zip(x) {
            *yi = x0 + a * si;
        }
        let f = j.evaluate(&y) * g * w;
        for (ac, si) in acc.iter_mut().zip(&s) {
            *ac += f * si;
        }
    }
    Ok(acc)
}

/// Dither-averaged probe field
/// `F_k(x) = (b/2pi) int_0^2pi J(x + a U_k) g(theta_k) U_k dtau`.
pub fn field_fk(
    j: &ObjectiveField,
    x: &[f64],
    a: f64,
    b: f64,
    k: u32,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    check_point(j, x)?;
    check_radius(a)?;
    let n = j.dim();
    let dither = SphericalDither::new(n, k)?;
    let nodes = quad.curve_nodes_for(n, k)?;
    let h = 2.0 * PI / nodes as f64;
    let mut pos = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for i in 0..nodes {
        let g = dither.position_and_weight(i as f64 * h, &mut pos);
        if g == 0.0 {
            continue;
        }
        for ((yi, pi), x0) in y.iter_mut().zip(&pos).zip(x) {
            *yi = x0 + a * pi;
        }
        let f = j.evaluate(&y) * g;
        for (ac, pi) in acc.iter_mut().zip(&pos) {
            *ac += f * pi;
        }
    }
    let scale = b / nodes as f64;
    Ok(acc.into_iter().map(|v| v * scale).collect())
}

/// Filter-coupling field `E_k(eta) = -(b/2pi) eta int_0^2pi g(theta_k) U_k dtau`.
pub fn filter_ek(eta: f64, b: f64, k: u32, n: usize, quad: &QuadratureSpec) -> Result<Vec<f64>> {
    let dither = SphericalDither::new(n, k)?;
    let nodes = quad.curve_nodes_for(n, k)?;
    let h = 2.0 * PI / nodes as f64;
    let mut pos = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for i in 0..nodes {
        let g = dither.position_and_weight(i as f64 * h, &mut pos);
        for (ac, pi) in acc.iter_mut().zip(&pos) {
            *ac += g * pi;
        }
    }
    let scale = -b * eta / nodes as f64;
    Ok(acc.into_iter().map(|v| v * scale).collect())
}

/// Central-difference gradient with step `h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let fp = f(&p);
            p[i] = x[i] - h;
            let fm = f(&p);
            p[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Fallible variant of [`fd_gradient`].
pub fn try_fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut p = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let fp = f(&p)?;
        p[i] = x[i] - h;
        let fm = f(&p)?;
        p[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::SphereRule;
    use approx::assert_abs_diff_eq;

    fn build(spec: ObjectiveSpec) -> ObjectiveField {
        spec.build().unwrap()
    }

    #[test]
    fn builtin_values() {
        let j = build(ObjectiveSpec::named("perturbed_decay_2d"));
        assert_eq!(j.evaluate(&[0.0, 0.0]), 1.0);
        let j = build(ObjectiveSpec::named("flat_bump_4d"));
        assert_abs_diff_eq!(
            j.evaluate(&[2.0, 0.0, 0.0, 0.0]),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            j.evaluate(&[1.0, 1.0, 1.0, 1.0]),
            0.632_120_558_828_557_7,
            epsilon = 1e-12
        );
        assert_eq!(j.evaluate(&[0.0; 4]), 1.0);
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        assert_abs_diff_eq!(
            j.evaluate(&[0.0; 3]),
            2.0 - (-8.0f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(j.evaluate(&[0.0; 3]), 1.99966, epsilon = 1e-5);
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d_verbatim"));
        assert!(j.evaluate(&[0.0; 3]) < 0.0);
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            ObjectiveSpec::named("banana").build(),
            Err(Error::UnknownObjective(_))
        ));
        assert!(ObjectiveSpec::named("quadratic").build().is_err());
        assert!(
            ObjectiveSpec::quadratic(vec![vec![1.0, 2.0], vec![0.0, 1.0]])
                .build()
                .is_err()
        );
        assert!(ObjectiveSpec::quadratic(vec![vec![1.0, 2.0]])
            .build()
            .is_err());
        let mut spec = ObjectiveSpec::named("flat_bump_4d");
        spec.weights = Some(vec![1.0]);
        assert!(spec.build().is_err());
        assert!(ObjectiveSpec::named("constant").build().is_err());
        assert!(ObjectiveSpec::linear(vec![1.0, 2.0])
            .in_dim(3)
            .build()
            .is_err());
        assert!(ObjectiveSpec::named("perturbed_decay_2d")
            .in_dim(1)
            .build()
            .is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let specs = [
            ObjectiveSpec::named("ringed_gaussian_3d"),
            ObjectiveSpec::named("ringed_gaussian_3d_verbatim"),
            ObjectiveSpec::named("perturbed_decay_2d"),
            ObjectiveSpec::named("flat_bump_4d"),
            ObjectiveSpec::quadratic(vec![vec![2.0, 0.5], vec![0.5, -1.0]]),
            ObjectiveSpec::linear(vec![1.0, -2.0, 0.5]),
        ];
        for spec in specs {
            let j = build(spec);
            let x: Vec<f64> = (0..j.dim()).map(|i| 0.7 + 0.3 * i as f64).collect();
            let g = j.analytic_gradient(&x).unwrap();
            let fd = fd_gradient(|y| j.evaluate(y), &x, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn gradient_scale_examples() {
        assert_abs_diff_eq!(gradient_scale_c(2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(gradient_scale_c(3), 2.0 / (3.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(gradient_scale_c(4), 1.0 / (4.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn average_of_constant_and_linear() {
        let quad = QuadratureSpec::with_nodes(12, 8);
        let c = build(ObjectiveSpec::constant(5.0, 3));
        assert_abs_diff_eq!(
            averaged_objective(&c, &[1.0, 2.0, 3.0], 0.7, &quad).unwrap(),
            5.0,
            epsilon = 1e-12
        );
        let g = averaged_gradient(&c, &[1.0, 2.0, 3.0], 0.7, &quad).unwrap();
        assert!(norm(&g) < 1e-12);

        let w = vec![1.0, -2.0, 0.5];
        let l = build(ObjectiveSpec::linear(w.clone()));
        let x = [0.3, -1.0, 2.0];
        let expected: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(
            averaged_objective(&l, &x, 1.3, &quad).unwrap(),
            expected,
            epsilon = 1e-12
        );
        let g = averaged_gradient(&l, &x, 1.3, &quad).unwrap();
        for (gi, wi) in g.iter().zip(&w) {
            assert_abs_diff_eq!(gi, wi, epsilon = 1e-12);
        }
    }

    #[test]
    fn average_of_squared_norm() {
        let quad = QuadratureSpec::default();
        let j = build(ObjectiveSpec::squared_norm(3));
        // mean of |xi|^2 over the unit ball is n/(n+2)
        assert_abs_diff_eq!(
            averaged_objective(&j, &[0.0; 3], 1.0, &quad).unwrap(),
            0.6,
            epsilon = 1e-12
        );
        for n in 2..=4 {
            let quad = QuadratureSpec::with_nodes(24, 6);
            let j = build(ObjectiveSpec::squared_norm(n));
            let x: Vec<f64> = (0..n).map(|i| 0.5 - 0.4 * i as f64).collect();
            let g = averaged_gradient(&j, &x, 0.8, &quad).unwrap();
            for (gi, xi) in g.iter().zip(&x) {
                assert_abs_diff_eq!(*gi, 2.0 * xi, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_oracle_agrees_with_tensor_rule() {
        let j = build(ObjectiveSpec::squared_norm(3));
        let mc = QuadratureSpec::monte_carlo(1_000_000, 7);
        let v = averaged_objective(&j, &[0.0; 3], 1.0, &mc).unwrap();
        assert_abs_diff_eq!(v, 0.6, epsilon = 2e-3);
        // reproducible per call
        assert_eq!(v, averaged_objective(&j, &[0.0; 3], 1.0, &mc).unwrap());

        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        let x = [1.0, 0.5, -0.7];
        let tensor = averaged_objective(&j, &x, 1.0, &QuadratureSpec::default()).unwrap();
        let mc = averaged_objective(&j, &x, 1.0, &QuadratureSpec::monte_carlo(400_000, 3)).unwrap();
        assert_abs_diff_eq!(tensor, mc, epsilon = 5e-3);
        let gt = averaged_gradient(&j, &x, 1.0, &QuadratureSpec::default()).unwrap();
        let gm = averaged_gradient(&j, &x, 1.0, &QuadratureSpec::monte_carlo(400_000, 3)).unwrap();
        for (a, b) in gt.iter().zip(&gm) {
            assert_abs_diff_eq!(a, b, epsilon = 2e-2);
        }
    }

    #[test]
    fn radially_symmetric_gradient_vanishes_at_origin() {
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        let g = averaged_gradient(&j, &[0.0; 3], 1.0, &QuadratureSpec::default()).unwrap();
        assert!(norm(&g) < 1e-8);
    }

    #[test]
    fn divergence_identity_on_ringed_gaussian() {
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        let field = AveragedField::new(j, 1.0, &QuadratureSpec::default()).unwrap();
        let x = [3.0, 3.0, 3.0];
        let g = field.gradient_at(&x).unwrap();
        let fd = try_fd_gradient(|y| field.value_at(y), &x, 1e-4).unwrap();
        let err = norm(&g.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 1e-4 * norm(&fd), "err {err}, fd {fd:?}");
    }

    #[test]
    fn node_doubling_is_stable_for_smooth_objectives() {
        for (spec, x) in [
            (
                ObjectiveSpec::named("ringed_gaussian_3d"),
                vec![1.0, -2.0, 0.5],
            ),
            (
                ObjectiveSpec::named("flat_bump_4d").in_dim(3),
                vec![0.3, 0.4, 0.1],
            ),
            (
                ObjectiveSpec::named("ringed_gaussian_3d").in_dim(2),
                vec![2.5, 0.3],
            ),
        ] {
            let j = build(spec);
            let coarse = averaged_objective(&j, &x, 1.0, &QuadratureSpec::default()).unwrap();
            let fine =
                averaged_objective(&j, &x, 1.0, &QuadratureSpec::with_nodes(128, 32)).unwrap();
            assert!(
                (coarse - fine).abs() <= 1e-8,
                "{} {coarse} {fine}",
                j.name()
            );
        }
    }

    #[test]
    fn small_radius_recovers_objective() {
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        let x = [1.5, -0.5, 0.8];
        let quad = QuadratureSpec::with_nodes(16, 8);
        let rule = SphereRule::new(3, 16).unwrap();
        for a in [1e-1, 1e-2, 1e-3] {
            let avg = averaged_objective(&j, &x, a, &quad).unwrap();
            // sampled modulus of continuity over the sphere of radius a
            let modulus = rule
                .points()
                .map(|(s, _)| {
                    let y: Vec<f64> = x.iter().zip(s).map(|(x, s)| x + a * s).collect();
                    (j.evaluate(&y) - j.evaluate(&x)).abs()
                })
                .fold(0.0, f64::max);
            assert!((avg - j.evaluate(&x)).abs() <= modulus);
        }
    }

    #[test]
    fn field_fk_two_dimensional_is_k_independent() {
        let j = build(ObjectiveSpec::named("perturbed_decay_2d"));
        let quad = QuadratureSpec::default();
        let x = [0.7, -1.2];
        let f1 = field_fk(&j, &x, 0.4, 1.0, 1, &quad).unwrap();
        let f5 = field_fk(&j, &x, 0.4, 1.0, 5, &quad).unwrap();
        assert_eq!(f1, f5);
        // (b/2pi) int J(x + a[cos, sin]) [cos, sin]
        let direct: Vec<f64> = (0..2)
            .map(|i| {
                crate::quadrature::periodic_trapezoid(2.0 * PI, 256, |t| {
                    let y = [x[0] + 0.4 * t.cos(), x[1] + 0.4 * t.sin()];
                    j.evaluate(&y) * if i == 0 { t.cos() } else { t.sin() }
                }) / (2.0 * PI)
            })
            .collect();
        assert_abs_diff_eq!(f1[0], direct[0], epsilon = 1e-14);
        assert_abs_diff_eq!(f1[1], direct[1], epsilon = 1e-14);
    }

    #[test]
    fn field_fk_of_constant_cancels() {
        let j = build(ObjectiveSpec::constant(3.0, 3));
        let f = field_fk(
            &j,
            &[1.0, 2.0, 3.0],
            1.0,
            2.0,
            4,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(norm(&f) <= 1e-6 * 6.0);
        let doubled = QuadratureSpec {
            curve_nodes: Some(2 * crate::quadrature::min_curve_nodes(3, 4)),
            ..Default::default()
        };
        let f2 = field_fk(&j, &[1.0, 2.0, 3.0], 1.0, 2.0, 4, &doubled).unwrap();
        assert!(norm(&f2) <= 1e-6 * 6.0);
    }

    #[test]
    fn field_fk_linear_tends_to_scaled_weights() {
        let w = vec![0.5, -1.0, 2.0];
        let j = build(ObjectiveSpec::linear(w.clone()));
        let (a, b) = (0.8, 1.5);
        let target: Vec<f64> = w
            .iter()
            .map(|wi| a * b * gradient_scale_c(3) * wi)
            .collect();
        let err = |k| {
            let f = field_fk(&j, &[0.1, 0.2, 0.3], a, b, k, &QuadratureSpec::default()).unwrap();
            norm(
                &f.iter()
                    .zip(&target)
                    .map(|(x, y)| x - y)
                    .collect::<Vec<_>>(),
            )
        };
        assert!(err(1) > 1e-2);
        assert!(err(4) < 1e-4);
    }

    #[test]
    fn field_fk_rejects_too_few_nodes() {
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        let quad = QuadratureSpec {
            curve_nodes: Some(512),
            ..Default::default()
        };
        assert!(matches!(
            field_fk(&j, &[0.0; 3], 1.0, 1.0, 3, &quad),
            Err(Error::InsufficientCurveNodes { .. })
        ));
        assert!(filter_ek(1.0, 1.0, 3, 3, &quad).is_err());
    }

    #[test]
    fn filter_ek_properties() {
        let quad = QuadratureSpec::default();
        assert_eq!(filter_ek(0.0, 1.0, 2, 3, &quad).unwrap(), vec![0.0; 3]);
        let e1 = filter_ek(1.0, 1.0, 3, 3, &quad).unwrap();
        let e2 = filter_ek(2.0, 1.0, 3, 3, &quad).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert_abs_diff_eq!(2.0 * a, b, epsilon = 1e-15);
        }
        // k = 1, n = 3: second component is -(1/2pi) int |sin|^3 = -(1/2pi)(8/3)
        let e = filter_ek(1.0, 1.0, 1, 3, &quad).unwrap();
        assert_abs_diff_eq!(e[1], -8.0 / (6.0 * PI), epsilon = 1e-5);
    }

    #[test]
    fn cube_integral_matches_sphere_integral() {
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        let x = [0.5, 1.0, -0.3];
        let cube = cube_surface_integral(&j, &x, 1.0, 48).unwrap();
        let field = AveragedField::new(j, 1.0, &QuadratureSpec::default()).unwrap();
        let sphere = field.surface_integral(&x).unwrap();
        let scale = 1.0 / (2.0 * PI * PI);
        for (c, s) in cube.iter().zip(&sphere) {
            assert_abs_diff_eq!(*c, s * scale, epsilon = 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let j = build(ObjectiveSpec::named("ringed_gaussian_3d"));
        assert!(matches!(
            averaged_objective(&j, &[0.0; 2], 1.0, &QuadratureSpec::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(averaged_objective(&j, &[0.0; 3], 0.0, &QuadratureSpec::default()).is_err());
    }
}
