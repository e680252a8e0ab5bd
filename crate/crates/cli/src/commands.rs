use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use divseek::geometry::norm;
use divseek::io::{format_float, write_grid_csv, write_trajectory_csv};
use divseek::simulate::AveragedDisturbance;
use divseek::verify::{run_scenario, suite_checks, sup_deviation};
use divseek::{
    default_step, to_transformed, AveragedField, CheckReport, DisturbanceSpec, FieldGridRequest,
    GridEvaluator, SimState, Simulator, Suite, System,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_json, load_scenario, ScenarioConfig};
use crate::{CliFailure, SweepAxis};

/// Ball outside which the averaged flow counts as escaped in sweeps.
const SWEEP_ESCAPE_RADIUS: f64 = 1e3;

/// Comparison step for `--compare-averaged` without disturbance.
const SWEEP_SAMPLE_DT: f64 = 0.05;

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let threads = match jobs {
        Some(0) => return Err(CliFailure::Usage("`--jobs` must be at least 1".into()).into()),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("starting worker threads")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn with_seed(d: DisturbanceSpec, seed: Option<u64>) -> DisturbanceSpec {
    match (d, seed) {
        (DisturbanceSpec::PiecewiseUniform { bound, dwell, .. }, Some(seed)) => {
            DisturbanceSpec::PiecewiseUniform { bound, dwell, seed }
        }
        (d, _) => d,
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    system: System,
    rows: usize,
    final_time: f64,
    transformed_radius: f64,
    plant_radius: f64,
    objective: f64,
    averaged_objective: f64,
}

pub fn simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_scenario(config)?;
    cfg.disturbance = with_seed(cfg.disturbance, seed);
    let out = out.or_else(|| cfg.output.clone()).ok_or_else(|| {
        CliFailure::Usage("no output path: pass `--out` or set `output` in the config".into())
    })?;
    let j = cfg.objective.build()?;
    let sim = Simulator::new(j.clone(), cfg.params, cfg.disturbance)?;
    let xt0 = to_transformed(&cfg.x0, 0.0, &cfg.params);
    let field = AveragedField::new(j.clone(), cfg.params.a, &cfg.quadrature)?;
    let traj = match cfg.system {
        System::ClosedLoop => sim.run(
            System::ClosedLoop,
            &SimState::new(cfg.x0.clone(), cfg.eta0, 0.0),
            &cfg.integrator,
        )?,
        System::Transformed => sim.run(
            System::Transformed,
            &SimState::new(xt0, cfg.eta0, 0.0),
            &cfg.integrator,
        )?,
        System::Averaged => sim.run_averaged(
            &field,
            &SimState::new(xt0, cfg.eta0, 0.0),
            &cfg.integrator,
            AveragedDisturbance::Projected,
            None,
        )?,
    };
    let mut w = create(&out)?;
    write_trajectory_csv(&traj, &mut w)?;
    w.flush()
        .with_context(|| format!("writing {}", out.display()))?;
    let summary = SimulateSummary {
        system: cfg.system,
        rows: traj.len(),
        final_time: traj.final_time(),
        transformed_radius: norm(traj.final_transformed()),
        plant_radius: norm(traj.final_state()),
        objective: j.evaluate(traj.final_state()),
        averaged_objective: field.value_at(traj.final_transformed())?,
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct FieldSummary {
    rows: usize,
    min: f64,
    max: f64,
    argmax: Vec<f64>,
}

pub fn field(config: &Path, out: &Path, jobs: Option<usize>) -> Result<()> {
    let request: FieldGridRequest = load_json(config)?;
    let eval = GridEvaluator::new(request)?;
    let coords = eval.coordinates();
    let values: Vec<f64> = pool(jobs)?.install(|| {
        coords
            .par_iter()
            .map(|c| eval.evaluate(c))
            .collect::<divseek::Result<Vec<f64>>>()
    })?;
    let rows: Vec<(Vec<f64>, f64)> = coords.into_iter().zip(values).collect();
    let mut w = create(out)?;
    write_grid_csv(&eval.axis_names(), &rows, &mut w)?;
    w.flush()
        .with_context(|| format!("writing {}", out.display()))?;
    let best = rows
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid has at least two rows");
    let summary = FieldSummary {
        rows: rows.len(),
        min: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        max: best.1,
        argmax: best.0.clone(),
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

pub fn verify(suite: &str, out: Option<PathBuf>, seed: u64, jobs: Option<usize>) -> Result<()> {
    let suite: Suite = suite.parse()?;
    let checks = suite_checks(suite, seed);
    let reports: Vec<CheckReport> =
        pool(jobs)?.install(|| checks.par_iter().flat_map(|c| c.run()).collect());
    let mut sink: Box<dyn Write> = match &out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    for r in &reports {
        writeln!(sink, "{}", r.to_json_line()).context("writing reports")?;
    }
    sink.flush().context("writing reports")?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliFailure::VerifyFailed {
            failed,
            total: reports.len(),
        }
        .into());
    }
    Ok(())
}

fn parse_values(values: &str) -> Result<Vec<f64>> {
    let parsed: Vec<f64> = values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliFailure::Usage(format!("`--values` entry `{s}`: {e}")))
        })
        .collect::<std::result::Result<_, _>>()?;
    if parsed.is_empty() {
        return Err(CliFailure::Usage("`--values` must list at least one value".into()).into());
    }
    Ok(parsed)
}

/// Config for one sweep value.
fn apply_axis(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    value: f64,
    seed: Option<u64>,
) -> divseek::Result<ScenarioConfig> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Omega => c.params.omega = value,
        SweepAxis::A => c.params.a = value,
        SweepAxis::K => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(divseek::Error::InvalidParameter {
                    field: "k".into(),
                    reason: format!("must be a positive integer, got {value}"),
                });
            }
            c.params.k = value as u32;
        }
        SweepAxis::Delta => {
            let (dwell, base_seed) = match cfg.disturbance {
                DisturbanceSpec::PiecewiseUniform { dwell, seed, .. } => (dwell, seed),
                _ => (1.0, 0),
            };
            c.disturbance = DisturbanceSpec::PiecewiseUniform {
                bound: value,
                dwell,
                seed: base_seed,
            };
        }
    }
    c.disturbance = with_seed(c.disturbance, seed);
    c.params.validate()?;
    c.disturbance.validate()?;
    Ok(c)
}

struct SweepRow {
    value: f64,
    outcome: divseek::Result<RunSummary>,
}

struct RunSummary {
    final_time: f64,
    transformed_radius: f64,
    plant_radius: f64,
    terminal_gap: f64,
    sup_deviation: Option<f64>,
}

fn sweep_one(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    value: f64,
    seed: Option<u64>,
    compare: bool,
) -> SweepRow {
    let outcome = (|| {
        let c = apply_axis(cfg, axis, value, seed)?;
        let scenario = c.scenario(&format!("{axis}={value}"));
        let result = run_scenario(&scenario, c.disturbance, &c.quadrature)?;
        let sup_deviation = if compare {
            let sim = scenario.simulator(c.disturbance)?;
            let t_final = c.integrator.resolve_t_final(&c.params)?;
            let sample_dt = if c.disturbance.is_zero() {
                SWEEP_SAMPLE_DT
            } else {
                default_step(&c.params, divseek::simulate::DEFAULT_STEPS_PER_FAST_PERIOD)
            };
            Some(sup_deviation(
                &sim,
                &scenario.transformed_x0(),
                c.eta0,
                sample_dt,
                t_final,
                &c.quadrature,
                SWEEP_ESCAPE_RADIUS,
            )?)
        } else {
            None
        };
        Ok(RunSummary {
            final_time: result.trajectory.final_time(),
            transformed_radius: result.final_transformed_radius,
            plant_radius: result.final_plant_radius,
            terminal_gap: result.objective_gap,
            sup_deviation,
        })
    })();
    SweepRow { value, outcome }
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    config: &Path,
    axis: SweepAxis,
    values: &str,
    out: &Path,
    jobs: Option<usize>,
    seed: Option<u64>,
    compare: bool,
) -> Result<()> {
    let values = parse_values(values)?;
    let cfg = load_scenario(config)?;
    let rows: Vec<SweepRow> = pool(jobs)?.install(|| {
        values
            .par_iter()
            .map(|&v| sweep_one(&cfg, axis, v, seed, compare))
            .collect()
    });
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record([
        axis.to_string().as_str(),
        "status",
        "final_time",
        "final_transformed_radius",
        "final_plant_radius",
        "terminal_gap",
        "sup_deviation",
        "error",
    ])?;
    let mut failures = 0;
    for row in &rows {
        let record: Vec<String> = match &row.outcome {
            Ok(s) => vec![
                format_float(row.value),
                "ok".into(),
                format_float(s.final_time),
                format_float(s.transformed_radius),
                format_float(s.plant_radius),
                format_float(s.terminal_gap),
                s.sup_deviation.map(format_float).unwrap_or_default(),
                String::new(),
            ],
            Err(e) => {
                failures += 1;
                vec![
                    format_float(row.value),
                    "error".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]
            }
        };
        w.write_record(&record)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{}",
        serde_json::json!({ "runs": rows.len(), "failed": failures, "out": out.display().to_string() })
    );
    Ok(())
}
