//! Numerical checks of the averaging identities and limits, plus the
//! reference scenarios.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    dot, filling_curve, gram_sqrt, norm, sphere_param, sphere_param_jacobian, AngleVector,
    SphericalDither,
};
use crate::objective::{
    cube_surface_integral, field_fk, filter_ek, gradient_scale_c, try_fd_gradient, AveragedField,
    ObjectiveField, ObjectiveSpec,
};
use crate::quadrature::{ball_volume, GaussLegendre, QuadratureSpec};
use crate::simulate::{
    default_step, to_transformed, AveragedDisturbance, ControlParams, DisturbanceSpec,
    IntegratorSpec, SimState, Simulator, System, Trajectory,
};

/// Central-difference step used against the ball average.
pub const FD_STEP: f64 = 1e-3;

/// Values at or below this count as numerically zero in monotonicity checks.
pub const ZERO_FLOOR: f64 = 1e-9;

/// Outcome of one check, serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub details: String,
}

impl CheckReport {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: false,
            measured: BTreeMap::new(),
            tolerance,
            details: String::new(),
        }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.measured.insert(key.into(), value);
        self
    }

    fn finish(mut self, passed: bool, details: impl Into<String>) -> Self {
        self.passed = passed;
        self.details = details.into();
        self
    }

    /// A failed report carrying the error text.
    pub fn from_error(name: impl Into<String>, err: &Error) -> Self {
        Self::new(name, 0.0).finish(false, format!("error: {err}"))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report fields serialize")
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} (tolerance {:.3e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.tolerance,
            self.details
        )
    }
}

/// `v[i+1] <= (1 + slack) v[i] + ZERO_FLOOR` for every consecutive pair.
pub fn nonincreasing_within(values: &[f64], slack: f64) -> bool {
    values
        .windows(2)
        .all(|w| w[1] <= (1.0 + slack) * w[0] + ZERO_FLOOR)
}

/// `v[i+1] >= (1 - slack) v[i] - ZERO_FLOOR` for every consecutive pair.
pub fn nondecreasing_within(values: &[f64], slack: f64) -> bool {
    values
        .windows(2)
        .all(|w| w[1] >= (1.0 - slack) * w[0] - ZERO_FLOOR)
}

fn sci_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Points drawn uniformly from the ball of the given radius.
pub fn random_points(n: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if norm(&p) <= 1.0 {
                break p.into_iter().map(|v| v * radius).collect();
            }
        })
        .collect()
}

/// Surface-integral gradient of the ball average against central
/// differences of the ball average, error relative to `1 + |fd|`.
pub fn check_divergence_identity(
    j: &ObjectiveField,
    a: f64,
    points: &[Vec<f64>],
    quad: &QuadratureSpec,
    tol: f64,
) -> Result<CheckReport> {
    if points.is_empty() {
        return Err(invalid("points", "need at least one point"));
    }
    let field = AveragedField::new(j.clone(), a, quad)?;
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for x in points {
        let g = field.gradient_at(x)?;
        let fd = try_fd_gradient(|y| field.value_at(y), x, FD_STEP)?;
        let err = diff_norm(&g, &fd);
        worst = worst.max(err / (1.0 + norm(&fd)));
        worst_abs = worst_abs.max(err);
    }
    let mut r = CheckReport::new(format!("divergence_identity/{}/a={a}", j.name()), tol);
    r.metric("max_relative_error", worst)
        .metric("max_abs_error", worst_abs)
        .metric("points", points.len() as f64);
    Ok(r.finish(
        worst <= tol,
        format!(
            "max |grad - fd|/(1+|fd|) = {worst:.3e} over {} points",
            points.len()
        ),
    ))
}

/// Errors `e_k = max_x |F_k(x) - a b c grad J_a(x)|` over `ks`; passes when
/// they are nonincreasing within `slack` and the last is at most `bound`.
#[allow(clippy::too_many_arguments)]
pub fn check_field_limit(
    j: &ObjectiveField,
    a: f64,
    b: f64,
    points: &[Vec<f64>],
    ks: &[u32],
    quad: &QuadratureSpec,
    slack: f64,
    bound: f64,
) -> Result<CheckReport> {
    check_ks(ks)?;
    if points.is_empty() {
        return Err(invalid("points", "need at least one point"));
    }
    let field = AveragedField::new(j.clone(), a, quad)?;
    let gain = a * b * gradient_scale_c(j.dim());
    let targets: Vec<Vec<f64>> = points
        .iter()
        .map(|x| {
            field
                .gradient_at(x)
                .map(|g| g.into_iter().map(|v| gain * v).collect())
        })
        .collect::<Result<_>>()?;
    let mut errors = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut e: f64 = 0.0;
        for (x, target) in points.iter().zip(&targets) {
            e = e.max(diff_norm(&field_fk(j, x, a, b, k, quad)?, target));
        }
        errors.push(e);
    }
    let mut r = CheckReport::new(format!("field_limit/{}/a={a}", j.name()), bound);
    for (k, e) in ks.iter().zip(&errors) {
        r.metric(format!("e_k{k}"), *e);
    }
    let last = *errors.last().expect("ks nonempty");
    let monotone = nonincreasing_within(&errors, slack);
    Ok(r.finish(
        monotone && last <= bound,
        format!(
            "e_k = {}; nonincreasing: {monotone}; last {last:.3e}",
            sci_list(&errors)
        ),
    ))
}

fn check_ks(ks: &[u32]) -> Result<()> {
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            "k_range",
            "must be nonempty and strictly increasing",
        ));
    }
    Ok(())
}

/// `|E_k(1)|` over `ks`; passes when nonincreasing within `slack` and the
/// last is at most `bound`.
pub fn check_filter_limit(
    n: usize,
    b: f64,
    ks: &[u32],
    quad: &QuadratureSpec,
    slack: f64,
    bound: f64,
) -> Result<CheckReport> {
    check_ks(ks)?;
    let values: Vec<f64> = ks
        .iter()
        .map(|&k| filter_ek(1.0, b, k, n, quad).map(|e| norm(&e)))
        .collect::<Result<_>>()?;
    let mut r = CheckReport::new(format!("filter_limit/n={n}"), bound);
    for (k, v) in ks.iter().zip(&values) {
        r.metric(format!("norm_k{k}"), *v);
    }
    let last = *values.last().expect("ks nonempty");
    let monotone = nonincreasing_within(&values, slack);
    Ok(r.finish(
        monotone && last <= bound,
        format!(
            "|E_k(1)| = {}; nonincreasing: {monotone}",
            sci_list(&values)
        ),
    ))
}

/// Largest node count accepted by [`check_filling_bound`].
pub const FILLING_NODE_BUDGET: usize = 1 << 26;

/// Curve integral `int_0^1 f(gamma_k)` against the cube integral, bounded by
/// `lipschitz * sqrt(d) / 2^k`.
pub fn check_filling_bound(
    name: &str,
    f: &dyn Fn(&[f64]) -> f64,
    lipschitz: f64,
    d: usize,
    k: u32,
) -> Result<CheckReport> {
    if d == 0 || k == 0 {
        return Err(invalid("d", "d and k must be positive"));
    }
    let nodes = (d as u32)
        .checked_mul(k)
        .and_then(|e| 1usize.checked_shl(e))
        .and_then(|p| p.checked_mul(64))
        .filter(|&m| m <= FILLING_NODE_BUDGET)
        .ok_or_else(|| {
            Error::NodeBudget(format!(
                "2^(d k) 64 nodes exceed {FILLING_NODE_BUDGET} for d={d}, k={k}"
            ))
        })?;
    let h = 1.0 / nodes as f64;
    let curve: f64 = (0..nodes)
        .map(|i| f(&filling_curve((i as f64 + 0.5) * h, k, d)))
        .sum::<f64>()
        * h;

    let per_axis = 32usize;
    let cells = per_axis
        .checked_pow(d as u32)
        .filter(|&c| c <= FILLING_NODE_BUDGET)
        .ok_or_else(|| Error::NodeBudget(format!("cube rule too large for d={d}")))?;
    let (z, w) = GaussLegendre::new(per_axis).on_interval(0.0, 1.0);
    let mut point = vec![0.0; d];
    let mut cube = 0.0;
    for flat in 0..cells {
        let mut rem = flat;
        let mut weight = 1.0;
        for p in point.iter_mut() {
            *p = z[rem % per_axis];
            weight *= w[rem % per_axis];
            rem /= per_axis;
        }
        cube += weight * f(&point);
    }

    let bound = lipschitz * (d as f64).sqrt() / 2f64.powi(k as i32);
    let gap = (curve - cube).abs();
    let mut r = CheckReport::new(format!("filling_bound/{name}/d={d}/k={k}"), bound);
    r.metric("curve_integral", curve)
        .metric("cube_integral", cube)
        .metric("discrepancy", gap);
    let roundoff = 1e-12 * (1.0 + cube.abs());
    Ok(r.finish(
        gap <= bound + roundoff,
        format!("|curve - cube| = {gap:.3e}, bound {bound:.3e}"),
    ))
}

/// Cube-parametrized sphere integral against the tensor sphere rule and the
/// scaled averaged gradient.
pub fn check_rescaling_identity(
    j: &ObjectiveField,
    x: &[f64],
    a: f64,
    cube_nodes: usize,
    quad: &QuadratureSpec,
    tol: f64,
) -> Result<CheckReport> {
    let n = j.dim();
    let scale = 1.0 / (2.0 * PI.powi(n as i32 - 1));
    let cube = cube_surface_integral(j, x, a, cube_nodes)?;
    let field = AveragedField::new(j.clone(), a, quad)?;
    let sphere: Vec<f64> = field
        .surface_integral(x)?
        .into_iter()
        .map(|v| v * scale)
        .collect();
    let from_grad: Vec<f64> = field
        .gradient_at(x)?
        .into_iter()
        .map(|g| g * a * ball_volume(n) * scale)
        .collect();
    let d_sphere = diff_norm(&cube, &sphere);
    let d_grad = diff_norm(&cube, &from_grad);
    let mut r = CheckReport::new(format!("rescaling_identity/{}/n={n}", j.name()), tol);
    r.metric("cube_vs_sphere", d_sphere)
        .metric("cube_vs_gradient", d_grad);
    Ok(r.finish(
        d_sphere <= tol && d_grad <= tol,
        format!("cube vs sphere {d_sphere:.3e}, cube vs gradient {d_grad:.3e}"),
    ))
}

/// Radii in `(0, r_max]` where the derivative of `profile` changes sign,
/// located on a uniform grid of `samples` cells and refined by bisection.
pub fn radial_sign_changes(profile: &dyn Fn(f64) -> f64, r_max: f64, samples: usize) -> Vec<f64> {
    let h = 1e-6 * r_max.max(1.0);
    let deriv = |r: f64| (profile(r + h) - profile(r - h)) / (2.0 * h);
    let dr = r_max / samples as f64;
    let mut roots = Vec::new();
    let mut prev_r = dr;
    let mut prev = deriv(prev_r);
    for i in 2..=samples {
        let r = i as f64 * dr;
        let cur = deriv(r);
        if cur == 0.0 {
            continue;
        }
        if prev != 0.0 && prev.signum() != cur.signum() {
            let (mut lo, mut hi, mut flo) = (prev_r, r, prev);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = deriv(mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_r = r;
        prev = cur;
    }
    roots
}

/// Sign changes of `dJ/dr` along the first axis match `expected` within `tol`.
pub fn check_critical_radii(
    j: &ObjectiveField,
    expected: &[f64],
    r_max: f64,
    tol: f64,
) -> Result<CheckReport> {
    let n = j.dim();
    let jj = j.clone();
    let profile = move |r: f64| {
        let mut x = vec![0.0; n];
        x[0] = r;
        jj.evaluate(&x)
    };
    let found = radial_sign_changes(&profile, r_max, 6000);
    let mut r = CheckReport::new(format!("critical_radii/{}", j.name()), tol);
    for (i, v) in found.iter().enumerate() {
        r.metric(format!("radius_{i}"), *v);
    }
    let ok = found.len() == expected.len()
        && found
            .iter()
            .zip(expected)
            .all(|(f, e)| (f - e).abs() <= tol);
    Ok(r.finish(ok, format!("found {found:.4?}, expected {expected:.4?}")))
}

/// Radial derivative of the ball average along `direction` on `radii`.
pub fn radial_derivative_profile(
    field: &AveragedField,
    direction: &[f64],
    radii: &[f64],
) -> Result<Vec<f64>> {
    let unit: Vec<f64> = direction.iter().map(|v| v / norm(direction)).collect();
    radii
        .iter()
        .map(|&r| {
            let x: Vec<f64> = unit.iter().map(|u| r * u).collect();
            field.gradient_at(&x).map(|g| dot(&g, &unit))
        })
        .collect()
}

/// Radii where a sampled profile changes sign, by linear interpolation.
pub fn sampled_sign_changes(radii: &[f64], values: &[f64]) -> Vec<f64> {
    radii
        .windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| v[0] != 0.0 && v[1] != 0.0 && v[0].signum() != v[1].signum())
        .map(|(r, v)| r[0] + (r[1] - r[0]) * v[0] / (v[0] - v[1]))
        .collect()
}

/// Radial derivative of `J_a` sampled on `r = 0.1, 0.2, ..., 6`
/// along the diagonal. Passes with `expect_critical_ring` false when every
/// radial derivative is nonzero and negative, and with it true when a sign
/// change away from the origin is found.
pub fn check_critical_ring_probe(
    j: &ObjectiveField,
    a: f64,
    quad: &QuadratureSpec,
    expect_critical_ring: bool,
) -> Result<CheckReport> {
    let field = AveragedField::new(j.clone(), a, quad)?;
    let radii: Vec<f64> = (1..=60).map(|i| i as f64 * 0.1).collect();
    let direction = vec![1.0; j.dim()];
    let profile = radial_derivative_profile(&field, &direction, &radii)?;
    let changes = sampled_sign_changes(&radii, &profile);
    let min_abs = profile
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    let mut r = CheckReport::new(format!("critical_ring_probe/{}/a={a}", j.name()), 0.0);
    r.metric("min_abs_radial_derivative", min_abs)
        .metric("sign_changes", changes.len() as f64);
    for (i, c) in changes.iter().enumerate() {
        r.metric(format!("critical_radius_{i}"), *c);
    }
    let passed = if expect_critical_ring {
        !changes.is_empty()
    } else {
        changes.is_empty() && profile.iter().all(|v| *v < 0.0)
    };
    Ok(r.finish(
        passed,
        format!("min |dJ_a/dr| = {min_abs:.3e}; sign changes at {changes:.3?}"),
    ))
}

/// A reference run: objective, gains and initial plant state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub objective: ObjectiveSpec,
    pub params: ControlParams,
    /// Initial plant state `x(0)`.
    pub x0: Vec<f64>,
    #[serde(default)]
    pub eta0: f64,
    #[serde(default)]
    pub integrator: IntegratorSpec,
}

pub const EXAMPLE_IDS: [&str; 5] = [
    "ex1_small_a",
    "ex1_large_a",
    "ex2_small_a",
    "ex2_large_a",
    "ex3",
];

impl Scenario {
    pub fn builtin(id: &str) -> Result<Self> {
        let unit = |n, a, k, omega| ControlParams {
            n,
            a,
            b: 1.0,
            h: 1.0,
            omega,
            k,
            filter_enabled: true,
        };
        let (objective, params, x0, t_final) = match id {
            "ex1_small_a" => (
                "perturbed_decay_2d",
                unit(2, 0.2, 1, 2.0),
                vec![-3.0, 0.0],
                None,
            ),
            "ex1_large_a" => (
                "perturbed_decay_2d",
                unit(2, 0.4, 1, 2.0),
                vec![-3.0, 0.0],
                None,
            ),
            "ex2_small_a" => (
                "ringed_gaussian_3d",
                unit(3, 0.5, 2, 1.0),
                vec![3.0; 3],
                None,
            ),
            "ex2_large_a" => (
                "ringed_gaussian_3d",
                unit(3, 1.0, 2, 1.0),
                vec![3.0; 3],
                None,
            ),
            "ex3" => (
                "flat_bump_4d",
                unit(4, 1.0, 2, 1.0),
                vec![1.0; 4],
                Some(EX3_HORIZON),
            ),
            other => return Err(invalid("scenario", format!("unknown scenario `{other}`"))),
        };
        Ok(Self {
            id: id.to_string(),
            objective: ObjectiveSpec::named(objective),
            params,
            x0,
            eta0: 0.0,
            integrator: IntegratorSpec {
                t_final,
                ..IntegratorSpec::default()
            },
        })
    }

    pub fn simulator(&self, disturbance: DisturbanceSpec) -> Result<Simulator> {
        Simulator::new(self.objective.build()?, self.params, disturbance)
    }

    /// Initial shifted state `x(0) - a U_k(0)`.
    pub fn transformed_x0(&self) -> Vec<f64> {
        to_transformed(&self.x0, 0.0, &self.params)
    }
}

/// Final radii of a scenario run. `objective_gap` is `J_a(0) - J_a(x_t(t_f))`.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub id: String,
    pub final_transformed_radius: f64,
    pub final_plant_radius: f64,
    pub objective_gap: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

/// Runs a scenario in shifted coordinates with the given disturbance.
pub fn run_scenario(
    scenario: &Scenario,
    disturbance: DisturbanceSpec,
    quad: &QuadratureSpec,
) -> Result<ScenarioResult> {
    let sim = scenario.simulator(disturbance)?;
    let init = SimState::new(scenario.transformed_x0(), scenario.eta0, 0.0);
    let trajectory = sim.run(System::Transformed, &init, &scenario.integrator)?;
    let field = AveragedField::new(sim.objective().clone(), scenario.params.a, quad)?;
    let y_star = field.value_at(&vec![0.0; scenario.params.n])?;
    let objective_gap = y_star - field.value_at(trajectory.final_transformed())?;
    Ok(ScenarioResult {
        id: scenario.id.clone(),
        final_transformed_radius: norm(trajectory.final_transformed()),
        final_plant_radius: norm(trajectory.final_state()),
        objective_gap,
        trajectory,
    })
}

/// Runs one of [`EXAMPLE_IDS`] without disturbance.
pub fn run_example(id: &str) -> Result<ScenarioResult> {
    let scenario = Scenario::builtin(id)?;
    let quad = example_quadrature(scenario.params.n);
    run_scenario(&scenario, DisturbanceSpec::Zero, &quad)
}

fn example_quadrature(n: usize) -> QuadratureSpec {
    if n >= 4 {
        QuadratureSpec::with_nodes(24, 16)
    } else {
        QuadratureSpec::default()
    }
}

/// `|x_t|` sampled once per dither period `2 pi / omega` from `t_start` on.
pub fn stroboscopic_radii(traj: &Trajectory, t_start: f64) -> Vec<f64> {
    let period = 2.0 * PI / traj.params.omega;
    let mut out = Vec::new();
    let mut next = (t_start / period).ceil() * period;
    for (t, x) in traj.times.iter().zip(&traj.transformed) {
        if *t >= next - 1e-9 * period {
            out.push(norm(x));
            next += period;
        }
    }
    out
}

/// Radius band per example: `(lo, hi, on_plant_state)`.
#[allow(clippy::approx_constant)]
fn example_band(id: &str) -> (f64, f64, bool) {
    match id {
        "ex1_small_a" => (3.14, 3.44, false),
        "ex1_large_a" => (0.0, 0.2, false),
        "ex2_small_a" => (2.52, 2.82, false),
        "ex2_large_a" => (0.0, 0.3, false),
        _ => (0.8, 1.2, true),
    }
}

/// Horizon of `ex3`.
pub const EX3_HORIZON: f64 = 200.0;

/// Time after which the stroboscopic radius of `ex3` must be monotone.
pub const EX3_TRANSIENT: f64 = 20.0;

/// Runs an example and checks its final radius band; `ex3` also checks that
/// the stroboscopic `|x_t|` decreases after [`EX3_TRANSIENT`].
pub fn check_example(id: &str) -> Result<CheckReport> {
    let result = run_example(id)?;
    let (lo, hi, plant) = example_band(id);
    let radius = if plant {
        result.final_plant_radius
    } else {
        result.final_transformed_radius
    };
    let in_band = (lo..=hi).contains(&radius);
    let mut r = CheckReport::new(format!("example/{id}"), hi - lo);
    r.metric("final_transformed_radius", result.final_transformed_radius)
        .metric("final_plant_radius", result.final_plant_radius)
        .metric("objective_gap", result.objective_gap)
        .metric("band_lo", lo)
        .metric("band_hi", hi)
        .metric("t_final", result.trajectory.final_time());
    let mut details = format!(
        "final |{}| = {radius:.4} in [{lo}, {hi}]: {in_band}",
        if plant { "x" } else { "x_t" }
    );
    let mut passed = in_band;
    if id == "ex3" {
        let strobe = stroboscopic_radii(&result.trajectory, EX3_TRANSIENT);
        let monotone = strobe.windows(2).all(|w| w[1] <= w[0]);
        r.metric("strobe_samples", strobe.len() as f64);
        details.push_str(&format!(
            "; stroboscopic |x_t| decreasing after t={EX3_TRANSIENT}: {monotone}"
        ));
        passed &= monotone && strobe.len() > 1;
    }
    Ok(r.finish(passed, details))
}

/// Simulates plant and shifted coordinates from matched data and bounds
/// `max_t |x - x_t - a U_k(omega t)|` over `[0, t_final]`.
pub fn check_change_of_variables(
    scenario: &Scenario,
    disturbance: DisturbanceSpec,
    spec: &IntegratorSpec,
    tol: f64,
) -> Result<CheckReport> {
    let sim = scenario.simulator(disturbance)?;
    let t_final = spec.resolve_t_final(&scenario.params)?;
    let spec = &IntegratorSpec {
        t_final: Some(t_final),
        ..spec.clone()
    };
    let xt0 = scenario.transformed_x0();
    let plant = sim.run(
        System::ClosedLoop,
        &SimState::new(scenario.x0.clone(), scenario.eta0, 0.0),
        spec,
    )?;
    let shifted = sim.run(
        System::Transformed,
        &SimState::new(xt0, scenario.eta0, 0.0),
        spec,
    )?;
    let dev = plant
        .states
        .iter()
        .zip(&shifted.states)
        .map(|(x, y)| diff_norm(x, y))
        .fold(0.0, f64::max);
    let eta_dev = plant
        .filter_states
        .iter()
        .zip(&shifted.filter_states)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut r = CheckReport::new(format!("change_of_variables/{}", scenario.id), tol);
    r.metric("max_state_deviation", dev)
        .metric("max_filter_deviation", eta_dev)
        .metric("samples", plant.len() as f64);
    Ok(r.finish(
        dev <= tol,
        format!("max |x - x_t - a U_k| = {dev:.3e} over t in [0, {t_final}]"),
    ))
}

/// Settings of the averaged-flow comparison.
#[derive(Debug, Clone)]
pub struct ApproxSettings {
    pub t_final: f64,
    pub omegas: Vec<f64>,
    pub ks: Vec<u32>,
    /// Step of the averaged flow; the dithered runs use an integer fraction.
    pub sample_dt: f64,
    pub slack: f64,
    pub epsilon: f64,
    /// Radius of the ball the averaged flow must stay in.
    pub escape_radius: f64,
}

/// Sup distance between the shifted state and the averaged flow for every
/// `(omega, k)`; passes when it is nonincreasing along both axes within
/// `slack` and at most `epsilon` at the largest pair.
pub fn check_trajectory_approx(
    scenario: &Scenario,
    xt0: &[f64],
    settings: &ApproxSettings,
    quad: &QuadratureSpec,
) -> Result<CheckReport> {
    if settings.omegas.is_empty() || settings.ks.is_empty() {
        return Err(invalid("omega_list", "omega and k lists must be nonempty"));
    }
    let table = approximation_table(scenario, xt0, settings, quad)?;
    let mut r = CheckReport::new(
        format!("trajectory_approx/{}", scenario.id),
        settings.epsilon,
    );
    for (i, w) in settings.omegas.iter().enumerate() {
        for (q, k) in settings.ks.iter().enumerate() {
            r.metric(format!("sup_error_w{w}_k{k}"), table[i][q]);
        }
    }
    let rows_ok = table
        .iter()
        .all(|row| nonincreasing_within(row, settings.slack));
    let cols_ok = (0..settings.ks.len()).all(|q| {
        let col: Vec<f64> = table.iter().map(|row| row[q]).collect();
        nonincreasing_within(&col, settings.slack)
    });
    let last = *table
        .last()
        .and_then(|row| row.last())
        .expect("nonempty table");
    Ok(r.finish(
        rows_ok && cols_ok && last <= settings.epsilon,
        format!("sup |x_t - x_bar| table (rows omega, cols k) = {table:.4?}; monotone in k: {rows_ok}, in omega: {cols_ok}"),
    ))
}

/// `sup_t |x_t(t) - x_bar(t)|` for every `(omega, k)` pair, rows by omega.
pub fn approximation_table(
    scenario: &Scenario,
    xt0: &[f64],
    settings: &ApproxSettings,
    quad: &QuadratureSpec,
) -> Result<Vec<Vec<f64>>> {
    let base = scenario.simulator(DisturbanceSpec::Zero)?;
    let field = AveragedField::new(base.objective().clone(), scenario.params.a, quad)?;
    let averaged = averaged_run(
        &base,
        &field,
        xt0,
        scenario.eta0,
        settings.sample_dt,
        settings.t_final,
        settings.escape_radius,
    )?;
    let mut table = Vec::with_capacity(settings.omegas.len());
    for &omega in &settings.omegas {
        let mut row = Vec::with_capacity(settings.ks.len());
        for &k in &settings.ks {
            let params = ControlParams {
                omega,
                k,
                ..scenario.params
            };
            let sim = Simulator::new(base.objective().clone(), params, DisturbanceSpec::Zero)?;
            row.push(deviation_from(
                &sim,
                &averaged,
                xt0,
                scenario.eta0,
                settings.sample_dt,
                settings.t_final,
            )?);
        }
        table.push(row);
    }
    Ok(table)
}

fn averaged_run(
    sim: &Simulator,
    field: &AveragedField,
    xt0: &[f64],
    eta0: f64,
    sample_dt: f64,
    t_final: f64,
    escape_radius: f64,
) -> Result<Trajectory> {
    sim.run_averaged(
        field,
        &SimState::new(xt0.to_vec(), eta0, 0.0),
        &IntegratorSpec::with_dt(sample_dt, t_final),
        AveragedDisturbance::Projected,
        Some(escape_radius),
    )
}

fn deviation_from(
    sim: &Simulator,
    averaged: &Trajectory,
    xt0: &[f64],
    eta0: f64,
    sample_dt: f64,
    t_final: f64,
) -> Result<f64> {
    let per = (sample_dt
        / default_step(sim.params(), crate::simulate::DEFAULT_STEPS_PER_FAST_PERIOD))
    .ceil() as usize;
    let spec = IntegratorSpec::with_dt(sample_dt / per as f64, t_final).stride(per);
    let traj = sim.run(
        System::Transformed,
        &SimState::new(xt0.to_vec(), eta0, 0.0),
        &spec,
    )?;
    if traj.len() != averaged.len() {
        return Err(invalid(
            "sample_dt",
            "time grids of the two runs do not align",
        ));
    }
    Ok(traj
        .transformed
        .iter()
        .zip(&averaged.transformed)
        .map(|(x, y)| diff_norm(x, y))
        .fold(0.0, f64::max))
}

/// `sup_t |x_t(t) - x_bar(t)|` over `[0, t_final]` for one simulator, both
/// runs started at `xt0` and compared every `sample_dt`.
pub fn sup_deviation(
    sim: &Simulator,
    xt0: &[f64],
    eta0: f64,
    sample_dt: f64,
    t_final: f64,
    quad: &QuadratureSpec,
    escape_radius: f64,
) -> Result<f64> {
    let field = AveragedField::new(sim.objective().clone(), sim.params().a, quad)?;
    let averaged = averaged_run(sim, &field, xt0, eta0, sample_dt, t_final, escape_radius)?;
    deviation_from(sim, &averaged, xt0, eta0, sample_dt, t_final)
}

/// Terminal gaps `J_a(0) - J_a(x_t(t_f))` under piecewise-uniform
/// disturbances of each bound; passes when all are at most `gap_bound`,
/// nondecreasing in the bound within `slack`, and the filter state obeys
/// `|eta| <= max(|eta0|, sup|J| + delta)`.
pub fn check_iss_behavior(
    scenario: &Scenario,
    deltas: &[f64],
    dwell: f64,
    seed: u64,
    slack: f64,
    gap_bound: f64,
    quad: &QuadratureSpec,
) -> Result<CheckReport> {
    if deltas.is_empty() {
        return Err(invalid("delta_list", "must be nonempty"));
    }
    let j = scenario.objective.build()?;
    let field = AveragedField::new(j.clone(), scenario.params.a, quad)?;
    let sup_j = objective_sup_on_ball(&j, 12.0);
    let mut gaps = Vec::with_capacity(deltas.len());
    let mut eta_ok = true;
    for &delta in deltas {
        let d = DisturbanceSpec::PiecewiseUniform {
            bound: delta,
            dwell,
            seed,
        };
        let result = run_scenario(scenario, d, quad)?;
        let rho = scenario.eta0.abs().max(sup_j + delta);
        eta_ok &= result
            .trajectory
            .filter_states
            .iter()
            .all(|e| e.abs() <= rho);
        gaps.push(
            field.value_at(&vec![0.0; j.dim()])?
                - field.value_at(result.trajectory.final_transformed())?,
        );
    }
    let mut r = CheckReport::new(format!("iss_behavior/{}", scenario.id), gap_bound);
    for (d, g) in deltas.iter().zip(&gaps) {
        r.metric(format!("terminal_gap_delta{d}"), *g);
    }
    let bounded = gaps.iter().all(|g| *g <= gap_bound);
    let monotone = nondecreasing_within(&gaps, slack);
    Ok(r.finish(
        bounded && monotone && eta_ok,
        format!(
            "gaps {}; bounded: {bounded}; nondecreasing: {monotone}; filter bound: {eta_ok}",
            sci_list(&gaps)
        ),
    ))
}

/// Crude sup of `|J|` over a ball, from samples along the axes and diagonals.
fn objective_sup_on_ball(j: &ObjectiveField, radius: f64) -> f64 {
    let n = j.dim();
    let mut sup: f64 = 0.0;
    let dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|q| if q == i { 1.0 } else { 0.0 }).collect())
        .chain(std::iter::once(vec![1.0 / (n as f64).sqrt(); n]))
        .collect();
    for dir in &dirs {
        for i in 0..=4000 {
            let r = radius * i as f64 / 4000.0;
            let x: Vec<f64> = dir.iter().map(|d| r * d).collect();
            sup = sup.max(j.evaluate(&x).abs());
        }
    }
    sup
}

/// Deterministic angle samples for the geometry checks.
fn geometry_samples(seed: u64) -> Vec<(usize, u32, f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for n in 2..=5usize {
        for k in 1..=3u32 {
            for _ in 0..40 {
                let tau = rng.gen_range(-20.0..20.0);
                let theta: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-7.0..7.0)).collect();
                out.push((n, k, tau, theta));
            }
        }
    }
    out
}

/// Unit norm, periodicity, tangency, Gram and Jacobian checks of the dither.
pub fn geometry_suite(seed: u64) -> Vec<CheckReport> {
    let samples = geometry_samples(seed);
    let mut unit: f64 = 0.0;
    let mut period: f64 = 0.0;
    let mut tangency: f64 = 0.0;
    let mut gram: f64 = 0.0;
    let mut jac: f64 = 0.0;
    let mut velocity: f64 = 0.0;
    for (n, k, tau, theta) in &samples {
        let dither = SphericalDither::new(*n, *k).expect("valid dither");
        let s = dither.sample(*tau);
        let pos = dither.position(*tau);
        let shifted = dither.position(*tau + 2.0 * PI);
        unit = unit.max((norm(&pos) - 1.0).abs());
        unit = unit.max(
            (norm(&sphere_param(
                &AngleVector::new(theta.clone()).expect("nonempty"),
            )) - 1.0)
                .abs(),
        );
        period = period.max(diff_norm(&pos, &shifted) / dither.fastest_rate());
        tangency = tangency.max(dot(&pos, &s.u).abs() / dither.fastest_rate());

        let angles = AngleVector::new(theta.clone()).expect("nonempty");
        let jm = sphere_param_jacobian(&angles);
        gram = gram.max((jm.gram_determinant().max(0.0).sqrt() - gram_sqrt(theta)).abs());
        let h = 1e-6;
        for c in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[c] += h;
            tm[c] -= h;
            let p = sphere_param(&AngleVector::new(tp).expect("nonempty"));
            let m = sphere_param(&AngleVector::new(tm).expect("nonempty"));
            for r in 0..*n {
                jac = jac.max((jm.get(r, c) - (p[r] - m[r]) / (2.0 * h)).abs());
            }
        }
        let ph = dither.position(*tau + h);
        let pm = dither.position(*tau - h);
        let scale = 2f64.powi(((*n as u32 - 2) * k) as i32);
        for r in 0..*n {
            velocity = velocity.max((s.u[r] - (ph[r] - pm[r]) / (2.0 * h)).abs() / scale);
        }
    }
    let count = samples.len() as f64;
    let make = |name: &str, value: f64, tol: f64, what: &str| {
        let mut r = CheckReport::new(format!("geometry/{name}"), tol);
        r.metric("max_error", value).metric("samples", count);
        r.finish(value <= tol, format!("max {what} = {value:.3e}"))
    };
    vec![
        make("unit_norm", unit, 1e-12, "| |phi| - 1 |"),
        make(
            "periodicity",
            period,
            1e-12,
            "|U(tau + 2pi) - U(tau)| / fastest rate",
        ),
        make("tangency", tangency, 1e-12, "|<U, u>| / fastest rate"),
        make("gram_cross_check", gram, 1e-8, "|sqrt det(D^T D) - g|"),
        make("jacobian_fd", jac, 1e-6, "|D phi - fd|"),
        make("velocity_fd", velocity, 1e-5, "|u - fd U| / 2^((n-2)k)"),
    ]
}

/// Verification suites selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Geometry,
    Objective,
    Simulate,
    Examples,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometry" => Ok(Self::Geometry),
            "objective" => Ok(Self::Objective),
            "simulate" => Ok(Self::Simulate),
            "examples" => Ok(Self::Examples),
            "all" => Ok(Self::All),
            other => Err(invalid(
                "suite",
                format!("unknown suite `{other}`; expected geometry, objective, simulate, examples or all"),
            )),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Geometry => "geometry",
            Self::Objective => "objective",
            Self::Simulate => "simulate",
            Self::Examples => "examples",
            Self::All => "all",
        })
    }
}

/// One runnable check. Errors are folded into a failed report.
pub struct Check {
    pub name: String,
    run: Box<dyn Fn() -> Vec<CheckReport> + Send + Sync>,
}

impl Check {
    fn one(name: &str, f: impl Fn() -> Result<CheckReport> + Send + Sync + 'static) -> Self {
        let owned = name.to_string();
        Self {
            name: name.to_string(),
            run: Box::new(move || {
                vec![f().unwrap_or_else(|e| CheckReport::from_error(owned.clone(), &e))]
            }),
        }
    }

    fn many(name: &str, f: impl Fn() -> Vec<CheckReport> + Send + Sync + 'static) -> Self {
        Self {
            name: name.to_string(),
            run: Box::new(f),
        }
    }

    pub fn run(&self) -> Vec<CheckReport> {
        (self.run)()
    }
}

impl fmt::Debug for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Check").field("name", &self.name).finish()
    }
}

fn builtin(id: &str) -> ObjectiveField {
    ObjectiveSpec::named(id)
        .build()
        .expect("built-in objective")
}

/// Tensor rule used for four-dimensional ball averages in the suites.
pub fn reduced_quadrature() -> QuadratureSpec {
    QuadratureSpec::with_nodes(32, 24)
}

fn objective_checks(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    for (id, n) in [
        ("ringed_gaussian_3d", 3),
        ("perturbed_decay_2d", 2),
        ("flat_bump_4d", 4),
    ] {
        for a in [0.5, 1.0] {
            checks.push(Check::one(
                &format!("divergence_identity/{id}/a={a}"),
                move || {
                    let quad = if n >= 4 {
                        reduced_quadrature()
                    } else {
                        QuadratureSpec::default()
                    };
                    let points = random_points(n, 20, 4.0, seed ^ n as u64);
                    check_divergence_identity(&builtin(id), a, &points, &quad, 1e-3)
                },
            ));
        }
    }
    checks.push(Check::one("field_limit/ringed_gaussian_3d", move || {
        let points = random_points(3, 8, 4.0, seed);
        check_field_limit(
            &builtin("ringed_gaussian_3d"),
            1.0,
            1.0,
            &points,
            &[1, 2, 3, 4, 5],
            &QuadratureSpec::default(),
            0.1,
            5e-3,
        )
    }));
    checks.push(Check::one("filter_limit/n=3", || {
        check_filter_limit(
            3,
            1.0,
            &[1, 2, 3, 4, 5],
            &QuadratureSpec::default(),
            0.0,
            1e-2,
        )
    }));
    for k in [2u32, 3, 4] {
        checks.push(Check::one(
            &format!("filling_bound/linear/k={k}"),
            move || check_filling_bound("linear", &|z: &[f64]| z[0] + z[1], 2f64.sqrt(), 2, k),
        ));
        checks.push(Check::one(
            &format!("filling_bound/sine/k={k}"),
            move || {
                check_filling_bound(
                    "sine",
                    &|z: &[f64]| (2.0 * PI * z[0]).sin() * (2.0 * PI * z[1]).sin(),
                    2.0 * PI * 2f64.sqrt(),
                    2,
                    k,
                )
            },
        ));
    }
    checks.push(Check::one("rescaling_identity/ringed_gaussian_3d", || {
        check_rescaling_identity(
            &builtin("ringed_gaussian_3d"),
            &[0.5, 1.0, -0.3],
            1.0,
            48,
            &QuadratureSpec::default(),
            1e-6,
        )
    }));
    checks.push(Check::one("rescaling_identity/flat_bump_4d", || {
        check_rescaling_identity(
            &builtin("flat_bump_4d"),
            &[0.4, -0.2, 0.3, 0.1],
            1.0,
            24,
            &QuadratureSpec::with_nodes(48, 8),
            1e-6,
        )
    }));
    checks.push(Check::one("critical_radii/ringed_gaussian_3d", || {
        check_critical_radii(&builtin("ringed_gaussian_3d"), &[2.03, 2.55], 6.0, 0.03)
    }));
    checks.push(Check::one("critical_ring_probe/a=1", || {
        check_critical_ring_probe(
            &builtin("ringed_gaussian_3d"),
            1.0,
            &QuadratureSpec::default(),
            false,
        )
    }));
    checks.push(Check::one("critical_ring_probe/a=0.5", || {
        check_critical_ring_probe(
            &builtin("ringed_gaussian_3d"),
            0.5,
            &QuadratureSpec::default(),
            true,
        )
    }));
    checks
}

/// Averaged-flow comparison settings for the `ex2_large_a` scenario.
pub fn default_approx_settings() -> ApproxSettings {
    ApproxSettings {
        t_final: 30.0,
        omegas: vec![1.0, 5.0, 20.0],
        ks: vec![2, 3, 4],
        sample_dt: 0.05,
        slack: 0.1,
        epsilon: 0.1,
        escape_radius: 20.0,
    }
}

fn simulate_checks(seed: u64) -> Vec<Check> {
    vec![
        Check::one("change_of_variables/ex2_large_a", || {
            check_change_of_variables(
                &Scenario::builtin("ex2_large_a")?,
                DisturbanceSpec::Zero,
                &IntegratorSpec::until(50.0),
                1e-5,
            )
        }),
        Check::one("change_of_variables/ex1_large_a", || {
            check_change_of_variables(
                &Scenario::builtin("ex1_large_a")?,
                DisturbanceSpec::Zero,
                &IntegratorSpec::until(50.0),
                1e-5,
            )
        }),
        Check::one("trajectory_approx/ex2_large_a", || {
            check_trajectory_approx(
                &Scenario::builtin("ex2_large_a")?,
                &[3.0, 3.0, 3.0],
                &default_approx_settings(),
                &QuadratureSpec::default(),
            )
        }),
        Check::one("iss_behavior/ex2_large_a", move || {
            check_iss_behavior(
                &Scenario::builtin("ex2_large_a")?,
                &[0.0, 0.05, 0.2],
                1.0,
                seed,
                0.2,
                0.02,
                &QuadratureSpec::default(),
            )
        }),
    ]
}

fn example_checks() -> Vec<Check> {
    EXAMPLE_IDS
        .iter()
        .map(|id| Check::one(&format!("example/{id}"), move || check_example(id)))
        .collect()
}

/// Checks of a suite, in a fixed order. `seed` drives all sampled points.
pub fn suite_checks(suite: Suite, seed: u64) -> Vec<Check> {
    let geometry = || vec![Check::many("geometry", move || geometry_suite(seed))];
    match suite {
        Suite::Geometry => geometry(),
        Suite::Objective => objective_checks(seed),
        Suite::Simulate => simulate_checks(seed),
        Suite::Examples => example_checks(),
        Suite::All => {
            let mut all = geometry();
            all.extend(objective_checks(seed));
            all.extend(simulate_checks(seed));
            all.extend(example_checks());
            all
        }
    }
}

/// Runs a suite sequentially.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckReport> {
    suite_checks(suite, seed)
        .iter()
        .flat_map(Check::run)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonicity_helpers() {
        assert!(nonincreasing_within(&[1.0, 1.05, 0.5], 0.1));
        assert!(!nonincreasing_within(&[1.0, 1.2], 0.1));
        assert!(nonincreasing_within(&[1e-17, 5e-17, 0.0], 0.0));
        assert!(nondecreasing_within(&[0.0, 1e-4, 0.9e-4], 0.2));
        assert!(!nondecreasing_within(&[1.0, 0.5], 0.2));
    }

    #[test]
    fn divergence_identity_for_linear_objective() {
        let j = ObjectiveSpec::linear(vec![1.0, -2.0, 0.5]).build().unwrap();
        let pts = random_points(3, 3, 4.0, 1);
        let r = check_divergence_identity(&j, 1.0, &pts, &QuadratureSpec::with_nodes(12, 6), 1e-6)
            .unwrap();
        assert!(r.passed, "{r}");
        assert!(r.measured["max_relative_error"] < 1e-8);
    }

    #[test]
    fn divergence_identity_rejects_empty_points() {
        let j = ObjectiveSpec::linear(vec![1.0, 1.0]).build().unwrap();
        assert!(check_divergence_identity(&j, 1.0, &[], &QuadratureSpec::default(), 1e-3).is_err());
    }

    #[test]
    fn field_limit_examples() {
        let quad = QuadratureSpec::default();
        let pts = random_points(2, 3, 2.0, 4);
        let j = ObjectiveSpec::named("perturbed_decay_2d").build().unwrap();
        let r = check_field_limit(&j, 0.4, 1.0, &pts, &[1, 2, 3], &quad, 0.1, 1.0).unwrap();
        let e: Vec<f64> = r.measured.values().copied().collect();
        assert!(e.windows(2).all(|w| w[0] == w[1]), "{e:?}");
        let c = ObjectiveSpec::constant(2.0, 3).build().unwrap();
        let pts = random_points(3, 3, 2.0, 4);
        let r = check_field_limit(&c, 1.0, 1.0, &pts, &[1, 2, 3, 4], &quad, 0.1, 1e-6).unwrap();
        assert!(r.passed, "{r}");
        assert!(check_field_limit(&c, 1.0, 1.0, &pts, &[2, 1], &quad, 0.1, 1e-6).is_err());
    }

    #[test]
    fn filling_bound_examples() {
        let r = check_filling_bound("constant", &|_: &[f64]| 3.0, 0.0, 2, 2).unwrap();
        assert!(r.passed);
        assert!(r.measured["discrepancy"] < 1e-12);
        let r = check_filling_bound("linear", &|z: &[f64]| z[0] + z[1], 2f64.sqrt(), 2, 3).unwrap();
        assert!((r.measured["cube_integral"] - 1.0).abs() < 1e-13);
        assert!(r.passed, "{r}");
        assert!(matches!(
            check_filling_bound("big", &|_: &[f64]| 0.0, 1.0, 3, 9),
            Err(Error::NodeBudget(_))
        ));
    }

    #[test]
    fn sign_change_helpers() {
        let roots = radial_sign_changes(&|r: f64| (r - 1.0).powi(2) * (r - 3.0).powi(2), 4.0, 400);
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((r - e).abs() < 1e-6);
        }
        let s = sampled_sign_changes(&[0.0, 1.0, 2.0], &[-1.0, 1.0, 3.0]);
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn critical_radii_of_ringed_gaussian() {
        let r =
            check_critical_radii(&builtin("ringed_gaussian_3d"), &[2.03, 2.55], 6.0, 0.03).unwrap();
        assert!(r.passed, "{r}");
        assert!((r.measured["radius_0"] - 2.0351).abs() < 1e-4);
        assert!((r.measured["radius_1"] - 2.5512).abs() < 1e-4);
    }

    #[test]
    fn change_of_variables_with_zero_objective() {
        let mut scenario = Scenario::builtin("ex2_large_a").unwrap();
        scenario.objective = ObjectiveSpec::constant(0.0, 3);
        let spec = IntegratorSpec {
            steps_per_fast_period: Some(2048),
            ..IntegratorSpec::until(10.0)
        };
        let r = check_change_of_variables(&scenario, DisturbanceSpec::Zero, &spec, 1e-5).unwrap();
        assert!(r.measured["max_state_deviation"] <= 1e-12, "{r}");
    }

    #[test]
    fn trajectory_approx_with_constant_objective() {
        let mut scenario = Scenario::builtin("ex2_large_a").unwrap();
        scenario.objective = ObjectiveSpec::constant(1.0, 3);
        scenario.eta0 = 1.0;
        let settings = ApproxSettings {
            t_final: 5.0,
            omegas: vec![1.0, 5.0],
            ks: vec![2, 3],
            ..default_approx_settings()
        };
        let r = check_trajectory_approx(
            &scenario,
            &[1.0, 2.0, 3.0],
            &settings,
            &QuadratureSpec::with_nodes(16, 8),
        )
        .unwrap();
        assert!(r.passed, "{r}");
        assert!(r.measured.values().all(|v| *v < 1e-12));
    }

    #[test]
    fn trajectory_approx_two_dimensional_trend() {
        let scenario = Scenario::builtin("ex1_large_a").unwrap();
        let settings = ApproxSettings {
            t_final: 20.0,
            omegas: vec![2.0, 10.0],
            ks: vec![1],
            epsilon: 1.0,
            ..default_approx_settings()
        };
        let xt0 = scenario.transformed_x0();
        let table =
            approximation_table(&scenario, &xt0, &settings, &QuadratureSpec::default()).unwrap();
        assert!(table[1][0] < table[0][0], "{table:?}");
    }

    #[test]
    fn scenario_lookup() {
        assert!(Scenario::builtin("ex9").is_err());
        let s = Scenario::builtin("ex3").unwrap();
        assert_eq!(s.params.n, 4);
        assert_eq!(s.integrator.t_final, Some(200.0));
        assert_eq!(s.transformed_x0(), vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn suites_parse_and_select() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("nope".parse::<Suite>().is_err());
        let reports = run_suite(Suite::Geometry, 0);
        assert_eq!(reports.len(), 6);
        assert!(reports.iter().all(|r| r.name.starts_with("geometry/")));
        assert!(reports.iter().all(|r| r.passed), "{reports:#?}");
        assert_eq!(suite_checks(Suite::Examples, 0).len(), 5);
    }

    #[test]
    fn report_serializes_to_one_line() {
        let r = CheckReport::from_error("x", &Error::NodeBudget("too big".into()));
        let line = r.to_json_line();
        assert!(!line.contains('\n'));
        let back: CheckReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
        assert!(!back.passed);
    }
}
