//! Extremum seeking with space-filling spherical dithers.
//!
//! The controller probes a scalar black-box objective `J` along a dither curve
//! that fills the unit sphere as the refinement level `k` grows. In the
//! averaged limit the plant state follows the gradient of the ball average of
//! `J`, which lets it escape local maxima narrower than the dither amplitude.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod objective;
pub mod quadrature;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{
    angle_path, angle_rates, angle_rescale, curve_u, dither_u, dither_v, filling_curve, gram_sqrt,
    sawtooth, sphere_param, sphere_param_jacobian, AngleVector, CubePoint, DitherSample, Jacobian,
    SphericalDither, UnitVector,
};
pub use grid::{FieldGridRequest, GridAxis, GridEvaluator, GridQuantity};
pub use objective::{
    averaged_gradient, averaged_objective, builtin_objective, field_fk, filter_ek,
    gradient_scale_c, AveragedField, ObjectiveField, ObjectiveSpec,
};
pub use quadrature::{ball_volume, QuadratureMode, QuadratureSpec};
pub use simulate::{
    closed_loop_rhs, control_input, default_step, from_transformed, measured_output,
    to_transformed, transformed_rhs, ControlParams, DisturbanceSpec, IntegratorSpec, SimState,
    Simulator, System, Trajectory,
};
pub use verify::{run_example, run_suite, CheckReport, Scenario, ScenarioResult, Suite};
