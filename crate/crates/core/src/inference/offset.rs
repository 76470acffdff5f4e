//! Spatial correction from the initial extremum position `P_i` to the final
//! estimate `P_f`.

use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::trace::Axis;

/// Per-axis parameters of the eccentricity tangent correction
/// `P_f = P_i - C + A * tan(K * (P_i - C))`, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TangentParams {
    pub c: f64,
    pub a: f64,
    pub k: f64,
}

impl TangentParams {
    /// `Err` with the offending argument (degrees) outside (-90°, 90°).
    pub fn correct(&self, p_initial: f64) -> Result<f64, f64> {
        let arg = self.k * (p_initial - self.c);
        if arg.abs() >= 90.0 {
            return Err(arg);
        }
        Ok(p_initial - self.c + self.a * arg.to_radians().tan())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum OffsetModel {
    /// `P_f = P_i - d`.
    Constant { dx: f64, dy: f64 },
    /// `P_f = P_i - (a * theta + b)`, theta the HCO angle at the extremum.
    Linear { a_x: f64, b_x: f64, a_y: f64, b_y: f64 },
    Tangent { x: TangentParams, y: TangentParams },
}

impl OffsetModel {
    pub const IDENTITY: OffsetModel = OffsetModel::Constant { dx: 0.0, dy: 0.0 };

    pub fn variant_name(&self) -> &'static str {
        match self {
            OffsetModel::Constant { .. } => "constant",
            OffsetModel::Linear { .. } => "linear",
            OffsetModel::Tangent { .. } => "tangent",
        }
    }
}

impl Default for OffsetModel {
    fn default() -> Self {
        OffsetModel::IDENTITY
    }
}

pub fn apply_offset(p_initial: f64, theta: f64, axis: Axis, model: &OffsetModel) -> Result<f64, InferenceError> {
    match (model, axis) {
        (OffsetModel::Constant { dx, .. }, Axis::X) => Ok(p_initial - dx),
        (OffsetModel::Constant { dy, .. }, Axis::Y) => Ok(p_initial - dy),
        (OffsetModel::Linear { a_x, b_x, .. }, Axis::X) => Ok(p_initial - (a_x * theta + b_x)),
        (OffsetModel::Linear { a_y, b_y, .. }, Axis::Y) => Ok(p_initial - (a_y * theta + b_y)),
        (OffsetModel::Tangent { x, y }, axis) => {
            let params = if axis == Axis::X { x } else { y };
            params
                .correct(p_initial)
                .map_err(|argument| InferenceError::TangentDomain { axis, argument })
        }
    }
}
