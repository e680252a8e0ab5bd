//! Closed-loop, transformed and averaged dynamics with a fixed-step RK4 driver.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{angle_rates, SphericalDither};
use crate::objective::{gradient_scale_c, AveragedField, ObjectiveField};

/// Per-component magnitude that aborts a run.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Default number of RK4 steps per period of the fastest dither angle.
pub const DEFAULT_STEPS_PER_FAST_PERIOD: usize = 64;

/// Smallest accepted `steps_per_fast_period`.
pub const MIN_STEPS_PER_FAST_PERIOD: usize = 32;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub omega: f64,
    pub k: u32,
    #[serde(default = "default_true")]
    pub filter_enabled: bool,
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        for (field, value) in [
            ("a", self.a),
            ("b", self.b),
            ("h", self.h),
            ("omega", self.omega),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(
                    field,
                    format!("must be positive and finite, got {value}"),
                ));
            }
        }
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        SphericalDither::new(self.n, self.k).map(|_| ())
    }

    /// `a b c`, the gain of the averaged gradient flow.
    pub fn flow_gain(&self) -> f64 {
        self.a * self.b * gradient_scale_c(self.n)
    }

    /// `100 / (a b c)`.
    pub fn default_horizon(&self) -> f64 {
        100.0 / self.flow_gain()
    }
}

/// Scalar measurement disturbance `d(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Uniform on `[-bound, bound]`, constant on each interval of length `dwell`.
    PiecewiseUniform {
        bound: f64,
        dwell: f64,
        seed: u64,
    },
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, "must be finite"))
            }
        };
        match *self {
            Self::Zero => Ok(()),
            Self::Constant { value } => finite("value", value),
            Self::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                finite("amplitude", amplitude)?;
                finite("frequency", frequency)?;
                finite("phase", phase)
            }
            Self::PiecewiseUniform { bound, dwell, .. } => {
                if !(bound >= 0.0 && bound.is_finite()) {
                    return Err(invalid("bound", "must be nonnegative and finite"));
                }
                if !(dwell > 0.0 && dwell.is_finite()) {
                    return Err(invalid("dwell", "must be positive and finite"));
                }
                Ok(())
            }
        }
    }

    /// Sup-norm bound of the realized signal.
    pub fn bound(&self) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Constant { value } => value.abs(),
            Self::Sinusoid { amplitude, .. } => amplitude.abs(),
            Self::PiecewiseUniform { bound, .. } => bound,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bound() == 0.0
    }

    /// Realized `d(t)`.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Constant { value } => value,
            Self::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            Self::PiecewiseUniform { bound, dwell, seed } => {
                let cell = (t / dwell).floor() as i64;
                bound * (2.0 * unit_hash(seed, cell as u64) - 1.0)
            }
        }
    }
}

/// Counter-based uniform draw in `[0, 1)` keyed on `(seed, counter)`.
fn unit_hash(seed: u64, counter: u64) -> f64 {
    let mut z = seed ^ counter.wrapping_mul(0xd1b5_4a32_d192_ed03);
    for _ in 0..2 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub x: Vec<f64>,
    pub eta: f64,
    pub t: f64,
}

impl SimState {
    pub fn new(x: Vec<f64>, eta: f64, t: f64) -> Self {
        Self { x, eta, t }
    }
}

/// Which dynamics to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// Plant state `x` under the dither feedback.
    ClosedLoop,
    /// Shifted state `x - a U_k(omega t)`.
    #[default]
    Transformed,
    /// Averaged gradient flow of `J_a`.
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_fast_period: Option<usize>,
    /// Defaults to `100 / (a b c)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            dt: None,
            steps_per_fast_period: None,
            t_final: None,
            record_stride: 1,
        }
    }
}

impl IntegratorSpec {
    pub fn with_dt(dt: f64, t_final: f64) -> Self {
        Self {
            dt: Some(dt),
            steps_per_fast_period: None,
            t_final: Some(t_final),
            record_stride: 1,
        }
    }

    pub fn until(t_final: f64) -> Self {
        Self {
            t_final: Some(t_final),
            record_stride: 1,
            ..Self::default()
        }
    }

    pub fn stride(mut self, record_stride: usize) -> Self {
        self.record_stride = record_stride;
        self
    }

    /// Step size; an explicit `dt` must resolve the fastest dither period
    /// when `resolve_dither` is set.
    pub fn resolve_dt(&self, p: &ControlParams, resolve_dither: bool) -> Result<f64> {
        let dt = match (self.dt, self.steps_per_fast_period) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "dt",
                    "give either dt or steps_per_fast_period, not both",
                ));
            }
            (Some(dt), None) => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(invalid("dt", "must be positive and finite"));
                }
                if resolve_dither && dt > default_step(p, MIN_STEPS_PER_FAST_PERIOD) * (1.0 + 1e-12)
                {
                    return Err(invalid(
                        "dt",
                        format!(
                            "{dt} does not resolve the fastest dither period; need <= {}",
                            default_step(p, MIN_STEPS_PER_FAST_PERIOD)
                        ),
                    ));
                }
                dt
            }
            (None, steps) => {
                let steps = steps.unwrap_or(DEFAULT_STEPS_PER_FAST_PERIOD);
                if steps < MIN_STEPS_PER_FAST_PERIOD {
                    return Err(invalid(
                        "steps_per_fast_period",
                        format!("must be at least {MIN_STEPS_PER_FAST_PERIOD}"),
                    ));
                }
                default_step(p, steps)
            }
        };
        Ok(dt)
    }

    pub fn resolve_t_final(&self, p: &ControlParams) -> Result<f64> {
        let t = self.t_final.unwrap_or_else(|| p.default_horizon());
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid("t_final", "must be positive and finite"));
        }
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// `2 pi / (omega max(1, 2^((n-2)k-1)) steps_per_fast_period)`.
pub fn default_step(p: &ControlParams, steps_per_fast_period: usize) -> f64 {
    let fastest = angle_rates(p.k, p.n).into_iter().fold(1.0, f64::max);
    2.0 * PI / (p.omega * fastest * steps_per_fast_period as f64)
}

/// Recorded samples of one run. `states` holds plant coordinates and
/// `transformed` the shifted coordinates, whichever system was integrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system: System,
    pub params: ControlParams,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub transformed: Vec<Vec<f64>>,
    pub filter_states: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn final_transformed(&self) -> &[f64] {
        self.transformed
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn final_eta(&self) -> f64 {
        *self
            .filter_states
            .last()
            .expect("trajectory has at least the initial sample")
    }
}

fn dither_for(p: &ControlParams) -> SphericalDither {
    SphericalDither::new(p.n, p.k).expect("validated control parameters")
}

/// `J(x) + d(t)`.
pub fn measured_output(j: &ObjectiveField, x: &[f64], dist: &DisturbanceSpec, t: f64) -> f64 {
    j.evaluate(x) + dist.value(t)
}

/// `a omega u_k(omega t) + (y_hat - eta) b v_k(omega t)`, with `eta` ignored
/// when the filter is disabled.
pub fn control_input(p: &ControlParams, t: f64, y_hat: f64, eta: f64) -> Vec<f64> {
    let dither = dither_for(p);
    let n = p.n;
    let (mut pos, mut u, mut v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    dither.eval_into(p.omega * t, &mut pos, &mut u, &mut v);
    let eta = if p.filter_enabled { eta } else { 0.0 };
    u.iter()
        .zip(&v)
        .map(|(ui, vi)| p.a * p.omega * ui + (y_hat - eta) * p.b * vi)
        .collect()
}

/// `x - a U_k(omega t)`.
pub fn to_transformed(x: &[f64], t: f64, p: &ControlParams) -> Vec<f64> {
    let pos = dither_for(p).position(p.omega * t);
    x.iter().zip(&pos).map(|(xi, ui)| xi - p.a * ui).collect()
}

/// `x_t + a U_k(omega t)`.
pub fn from_transformed(xt: &[f64], t: f64, p: &ControlParams) -> Vec<f64> {
    let pos = dither_for(p).position(p.omega * t);
    xt.iter().zip(&pos).map(|(xi, ui)| xi + p.a * ui).collect()
}

/// Time derivative of `(x, eta)` for the plant coordinates.
pub fn closed_loop_rhs(
    s: &SimState,
    j: &ObjectiveField,
    p: &ControlParams,
    dist: &DisturbanceSpec,
) -> Result<(Vec<f64>, f64)> {
    let mut model = Model::new(j, p, dist);
    let mut dx = vec![0.0; p.n];
    let deta = model.closed_loop(s.t, &s.x, s.eta, &mut dx)?;
    Ok((dx, deta))
}

/// Time derivative of `(x_t, eta)` for the shifted coordinates.
pub fn transformed_rhs(
    s: &SimState,
    j: &ObjectiveField,
    p: &ControlParams,
    dist: &DisturbanceSpec,
) -> Result<(Vec<f64>, f64)> {
    let mut model = Model::new(j, p, dist);
    let mut dx = vec![0.0; p.n];
    let deta = model.transformed(s.t, &s.x, s.eta, &mut dx)?;
    Ok((dx, deta))
}

/// `a b c grad J_a(x_bar) + b d_vec`.
pub fn averaged_flow_rhs(
    field: &AveragedField,
    x_bar: &[f64],
    p: &ControlParams,
    dist_vec: &[f64],
) -> Result<Vec<f64>> {
    if dist_vec.len() != x_bar.len() {
        return Err(Error::DimensionMismatch {
            expected: x_bar.len(),
            actual: dist_vec.len(),
        });
    }
    let grad = field.gradient_at(x_bar)?;
    let gain = p.flow_gain();
    Ok(grad
        .iter()
        .zip(dist_vec)
        .map(|(g, d)| gain * g + p.b * d)
        .collect())
}

/// Scratch buffers and cached dither for repeated right-hand-side calls.
struct Model<'a> {
    j: &'a ObjectiveField,
    p: &'a ControlParams,
    dist: &'a DisturbanceSpec,
    dither: SphericalDither,
    pos: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> Model<'a> {
    fn new(j: &'a ObjectiveField, p: &'a ControlParams, dist: &'a DisturbanceSpec) -> Self {
        let n = p.n;
        Self {
            j,
            p,
            dist,
            dither: dither_for(p),
            pos: vec![0.0; n],
            u: vec![0.0; n],
            v: vec![0.0; n],
            y: vec![0.0; n],
        }
    }

    fn objective(&self, x: &[f64], t: f64) -> Result<f64> {
        let value = self.j.evaluate(x);
        if !value.is_finite() {
            return Err(Error::NonFinite { t });
        }
        Ok(value)
    }

    fn filter(&self, eta: f64, y_hat: f64) -> (f64, f64) {
        if self.p.filter_enabled {
            (eta, -self.p.h * eta + self.p.h * y_hat)
        } else {
            (0.0, 0.0)
        }
    }

    fn closed_loop(&mut self, t: f64, x: &[f64], eta: f64, dx: &mut [f64]) -> Result<f64> {
        let p = self.p;
        self.dither
            .eval_into(p.omega * t, &mut self.pos, &mut self.u, &mut self.v);
        let y_hat = self.objective(x, t)? + self.dist.value(t);
        let (eta, deta) = self.filter(eta, y_hat);
        let probe = (y_hat - eta) * p.b;
        for ((d, u), v) in dx.iter_mut().zip(&self.u).zip(&self.v) {
            *d = p.a * p.omega * u + probe * v;
        }
        Ok(deta)
    }

    fn transformed(&mut self, t: f64, xt: &[f64], eta: f64, dx: &mut [f64]) -> Result<f64> {
        let p = self.p;
        let g = self.dither.position_and_weight(p.omega * t, &mut self.pos);
        for ((y, x), u) in self.y.iter_mut().zip(xt).zip(&self.pos) {
            *y = x + p.a * u;
        }
        let y_hat = self.objective(&self.y, t)? + self.dist.value(t);
        let (eta, deta) = self.filter(eta, y_hat);
        let probe = (y_hat - eta) * p.b * g;
        for (d, u) in dx.iter_mut().zip(&self.pos) {
            *d = probe * u;
        }
        Ok(deta)
    }

    fn plant_from(&mut self, t: f64, xt: &[f64], out: &mut [f64]) {
        self.dither.position_into(self.p.omega * t, &mut self.pos);
        for ((o, x), u) in out.iter_mut().zip(xt).zip(&self.pos) {
            *o = x + self.p.a * u;
        }
    }

    fn transformed_from(&mut self, t: f64, x: &[f64], out: &mut [f64]) {
        self.dither.position_into(self.p.omega * t, &mut self.pos);
        for ((o, x), u) in out.iter_mut().zip(x).zip(&self.pos) {
            *o = x - self.p.a * u;
        }
    }
}

/// Fixed-step classical RK4 for `y' = f(t, y)`.
///
/// Steps land on `t0 + i dt`; a final shorter step hits `t_final` exactly.
/// `record` is called with the initial state, every `stride`-th step and the
/// final state.
pub fn rk4<F, R>(
    mut f: F,
    y0: &[f64],
    t0: f64,
    t_final: f64,
    dt: f64,
    stride: usize,
    mut record: R,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    R: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive and finite"));
    }
    if t_final.is_nan() || t_final < t0 {
        return Err(invalid("t_final", "must not precede the initial time"));
    }
    if stride == 0 {
        return Err(invalid("record_stride", "must be at least 1"));
    }
    let m = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; m],
        vec![0.0; m],
        vec![0.0; m],
        vec![0.0; m],
        vec![0.0; m],
    );
    let span = t_final - t0;
    let steps = ((span / dt) - 1e-9).ceil().max(0.0) as usize;
    record(t0, &y)?;
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let t_next = if i + 1 == steps {
            t_final
        } else {
            t0 + (i + 1) as f64 * dt
        };
        let h = t_next - t;
        f(t, &y, &mut k1)?;
        for q in 0..m {
            tmp[q] = y[q] + 0.5 * h * k1[q];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for q in 0..m {
            tmp[q] = y[q] + 0.5 * h * k2[q];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for q in 0..m {
            tmp[q] = y[q] + h * k3[q];
        }
        f(t_next, &tmp, &mut k4)?;
        for q in 0..m {
            y[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
        }
        for &v in &y {
            if !v.is_finite() {
                return Err(Error::NonFinite { t: t_next });
            }
            if v.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    t: t_next,
                    limit: DIVERGENCE_LIMIT,
                });
            }
        }
        if (i + 1) % stride == 0 || i + 1 == steps {
            record(t_next, &y)?;
        }
    }
    Ok(y)
}

/// Disturbance fed to the averaged flow.
#[derive(Clone, Copy)]
pub enum AveragedDisturbance<'a> {
    /// `d(t) v_k(omega t)` from the scalar measurement disturbance.
    Projected,
    /// A direct vector disturbance `d_bar(t)`.
    Vector(&'a (dyn Fn(f64) -> Vec<f64> + Sync)),
}

/// Objective, parameters and disturbance bundled for repeated runs.
#[derive(Debug, Clone)]
pub struct Simulator {
    objective: ObjectiveField,
    params: ControlParams,
    disturbance: DisturbanceSpec,
}

impl Simulator {
    pub fn new(
        objective: ObjectiveField,
        params: ControlParams,
        disturbance: DisturbanceSpec,
    ) -> Result<Self> {
        params.validate()?;
        disturbance.validate()?;
        if objective.dim() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                actual: objective.dim(),
            });
        }
        Ok(Self {
            objective,
            params,
            disturbance,
        })
    }

    pub fn objective(&self) -> &ObjectiveField {
        &self.objective
    }

    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    pub fn disturbance(&self) -> &DisturbanceSpec {
        &self.disturbance
    }

    fn check_initial(&self, initial: &SimState) -> Result<()> {
        if initial.x.len() != self.params.n {
            return Err(Error::DimensionMismatch {
                expected: self.params.n,
                actual: initial.x.len(),
            });
        }
        if initial.x.iter().any(|v| !v.is_finite())
            || !initial.eta.is_finite()
            || !initial.t.is_finite()
        {
            return Err(invalid("initial", "state must be finite"));
        }
        Ok(())
    }

    /// Integrates the plant or shifted coordinates. `initial.x` is in the
    /// coordinates of `system`.
    pub fn run(
        &self,
        system: System,
        initial: &SimState,
        spec: &IntegratorSpec,
    ) -> Result<Trajectory> {
        match system {
            System::ClosedLoop | System::Transformed => self.run_dithered(system, initial, spec),
            System::Averaged => Err(invalid(
                "system",
                "the averaged flow needs a quadrature rule; use run_averaged",
            )),
        }
    }

    fn run_dithered(
        &self,
        system: System,
        initial: &SimState,
        spec: &IntegratorSpec,
    ) -> Result<Trajectory> {
        self.check_initial(initial)?;
        spec.validate()?;
        let p = &self.params;
        let dt = spec.resolve_dt(p, true)?;
        let t_final = spec.resolve_t_final(p)?;
        let n = p.n;
        let mut model = Model::new(&self.objective, p, &self.disturbance);
        let mut rec = Model::new(&self.objective, p, &self.disturbance);
        let mut traj = Trajectory {
            system,
            params: *p,
            times: Vec::new(),
            states: Vec::new(),
            transformed: Vec::new(),
            filter_states: Vec::new(),
            outputs: Vec::new(),
        };
        let mut y0 = initial.x.clone();
        y0.push(if p.filter_enabled { initial.eta } else { 0.0 });
        let mut other = vec![0.0; n];
        rk4(
            |t, y, dy| {
                let (x, eta) = y.split_at(n);
                let deta = match system {
                    System::ClosedLoop => model.closed_loop(t, x, eta[0], &mut dy[..n])?,
                    _ => model.transformed(t, x, eta[0], &mut dy[..n])?,
                };
                dy[n] = deta;
                Ok(())
            },
            &y0,
            initial.t,
            initial.t + t_final,
            dt,
            spec.record_stride,
            |t, y| {
                let (x, eta) = y.split_at(n);
                let (plant, shifted) = match system {
                    System::ClosedLoop => {
                        rec.transformed_from(t, x, &mut other);
                        (x.to_vec(), other.clone())
                    }
                    _ => {
                        rec.plant_from(t, x, &mut other);
                        (other.clone(), x.to_vec())
                    }
                };
                let y_hat = rec.objective(&plant, t)? + self.disturbance.value(t);
                traj.times.push(t);
                traj.states.push(plant);
                traj.transformed.push(shifted);
                traj.filter_states.push(eta[0]);
                traj.outputs.push(y_hat);
                Ok(())
            },
        )?;
        Ok(traj)
    }

    /// Integrates the averaged flow from `initial.x` (shifted coordinates).
    /// The filter state is carried unchanged. `escape_radius` bounds the
    /// compact set the flow must stay in.
    pub fn run_averaged(
        &self,
        field: &AveragedField,
        initial: &SimState,
        spec: &IntegratorSpec,
        disturbance: AveragedDisturbance<'_>,
        escape_radius: Option<f64>,
    ) -> Result<Trajectory> {
        self.check_initial(initial)?;
        spec.validate()?;
        if field.dim() != self.params.n {
            return Err(Error::DimensionMismatch {
                expected: self.params.n,
                actual: field.dim(),
            });
        }
        let p = &self.params;
        let projected =
            matches!(disturbance, AveragedDisturbance::Projected) && !self.disturbance.is_zero();
        let dt = spec.resolve_dt(p, projected)?;
        let t_final = spec.resolve_t_final(p)?;
        let n = p.n;
        let dither = dither_for(p);
        let (mut pos, mut u, mut v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut rec = Model::new(&self.objective, p, &self.disturbance);
        let mut traj = Trajectory {
            system: System::Averaged,
            params: *p,
            times: Vec::new(),
            states: Vec::new(),
            transformed: Vec::new(),
            filter_states: Vec::new(),
            outputs: Vec::new(),
        };
        let eta = if p.filter_enabled { initial.eta } else { 0.0 };
        let mut plant = vec![0.0; n];
        rk4(
            |t, y, dy| {
                let d_vec = match disturbance {
                    AveragedDisturbance::Projected => {
                        if self.disturbance.is_zero() {
                            vec![0.0; n]
                        } else {
                            dither.eval_into(p.omega * t, &mut pos, &mut u, &mut v);
                            let d = self.disturbance.value(t);
                            v.iter().map(|vi| d * vi).collect()
                        }
                    }
                    AveragedDisturbance::Vector(f) => f(t),
                };
                let rhs = averaged_flow_rhs(field, y, p, &d_vec)?;
                dy.copy_from_slice(&rhs);
                Ok(())
            },
            &initial.x,
            initial.t,
            initial.t + t_final,
            dt,
            spec.record_stride,
            |t, y| {
                if let Some(radius) = escape_radius {
                    if crate::geometry::norm(y) > radius {
                        return Err(Error::AveragedFlowEscape { t, radius });
                    }
                }
                rec.plant_from(t, y, &mut plant);
                let y_hat = rec.objective(&plant, t)? + self.disturbance.value(t);
                traj.times.push(t);
                traj.states.push(plant.clone());
                traj.transformed.push(y.to_vec());
                traj.filter_states.push(eta);
                traj.outputs.push(y_hat);
                Ok(())
            },
        )?;
        Ok(traj)
    }
}
