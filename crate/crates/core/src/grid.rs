//! Grid evaluation of an objective or its ball average over one or two axes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::norm;
use crate::objective::{fd_gradient, AveragedField, ObjectiveField, ObjectiveSpec};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridQuantity {
    #[default]
    Value,
    GradientNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    /// Zero-based coordinate index.
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + i as f64 * step
                }
            })
            .collect()
    }
}

/// Request for a grid of `J` (`a = 0`) or `J_a` values on a slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldGridRequest {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub a: f64,
    pub axes: Vec<GridAxis>,
    /// Full point giving the fixed coordinates; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<Vec<f64>>,
    #[serde(default)]
    pub quantity: GridQuantity,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

/// Step of the central differences used for the raw gradient norm.
const RAW_FD_STEP: f64 = 1e-6;

/// Validated request, ready to evaluate points independently.
#[derive(Debug, Clone)]
pub struct GridEvaluator {
    request: FieldGridRequest,
    objective: ObjectiveField,
    averaged: Option<AveragedField>,
    base: Vec<f64>,
}

impl GridEvaluator {
    pub fn new(request: FieldGridRequest) -> Result<Self> {
        let objective = request.objective.build()?;
        let n = objective.dim();
        if request.axes.is_empty() || request.axes.len() > 2 {
            return Err(invalid("axes", "sweep one or two axes"));
        }
        for axis in &request.axes {
            if axis.index >= n {
                return Err(invalid(
                    "axes",
                    format!("index {} out of range for n={n}", axis.index),
                ));
            }
            if axis.count < 2 {
                return Err(invalid("count", "each swept axis needs at least 2 points"));
            }
            if !(axis.min.is_finite() && axis.max.is_finite() && axis.min < axis.max) {
                return Err(invalid("axes", "need finite min < max"));
            }
        }
        if request.axes.len() == 2 && request.axes[0].index == request.axes[1].index {
            return Err(invalid("axes", "swept axes must differ"));
        }
        if !(request.a >= 0.0 && request.a.is_finite()) {
            return Err(invalid("a", "must be nonnegative and finite"));
        }
        let base = request.slice.clone().unwrap_or_else(|| vec![0.0; n]);
        if base.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: base.len(),
            });
        }
        let averaged = if request.a > 0.0 {
            Some(AveragedField::new(
                objective.clone(),
                request.a,
                &request.quadrature,
            )?)
        } else {
            None
        };
        Ok(Self {
            request,
            objective,
            averaged,
            base,
        })
    }

    /// Coordinate names of the swept axes, `x1`-based.
    pub fn axis_names(&self) -> Vec<String> {
        self.request
            .axes
            .iter()
            .map(|a| format!("x{}", a.index + 1))
            .collect()
    }

    /// Swept coordinates in row-major order, first axis outermost.
    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self.request.axes.iter().map(GridAxis::values).collect();
        match axes.as_slice() {
            [a] => a.iter().map(|v| vec![*v]).collect(),
            [a, b] => a
                .iter()
                .flat_map(|u| b.iter().map(move |v| vec![*u, *v]))
                .collect(),
            _ => unreachable!("validated axis count"),
        }
    }

    pub fn point(&self, coords: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (axis, c) in self.request.axes.iter().zip(coords) {
            x[axis.index] = *c;
        }
        x
    }

    pub fn evaluate(&self, coords: &[f64]) -> Result<f64> {
        let x = self.point(coords);
        match (self.request.quantity, &self.averaged) {
            (GridQuantity::Value, None) => Ok(self.objective.evaluate(&x)),
            (GridQuantity::Value, Some(f)) => f.value_at(&x),
            (GridQuantity::GradientNorm, None) => {
                Ok(norm(&self.objective.analytic_gradient(&x).unwrap_or_else(
                    || fd_gradient(|y| self.objective.evaluate(y), &x, RAW_FD_STEP),
                )))
            }
            (GridQuantity::GradientNorm, Some(f)) => f.gradient_at(&x).map(|g| norm(&g)),
        }
    }

    /// All rows, sequentially.
    pub fn evaluate_all(&self) -> Result<Vec<(Vec<f64>, f64)>> {
        self.coordinates()
            .into_iter()
            .map(|c| self.evaluate(&c).map(|v| (c, v)))
            .collect()
    }
}
