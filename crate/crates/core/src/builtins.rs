//! Ready-made plants with their abstraction parameters and known indices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractionParams, RadiusMode};
use crate::dissipativity::PassivityIndices;
use crate::error::{Error, Result};
use crate::systems::{BoxSet, ContinuousSystem, MeasurementMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinName {
    Example1,
    Example2Plant,
    Example2Controller,
}

impl BuiltinName {
    pub fn tag(self) -> &'static str {
        match self {
            BuiltinName::Example1 => "example1",
            BuiltinName::Example2Plant => "example2_plant",
            BuiltinName::Example2Controller => "example2_controller",
        }
    }
}

impl std::str::FromStr for BuiltinName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(Self::Example1),
            "example2_plant" => Ok(Self::Example2Plant),
            "example2_controller" => Ok(Self::Example2Controller),
            other => Err(Error::InvalidArgument(format!(
                "unknown builtin '{other}' (expected example1, example2_plant or example2_controller)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Builtin {
    pub name: BuiltinName,
    pub system: ContinuousSystem,
    pub params: AbstractionParams,
    /// Passivity indices of the continuous plant.
    pub continuous_indices: Option<PassivityIndices>,
    /// Indices published directly for the abstraction, bypassing the
    /// closed-form derivation.
    pub abstraction_indices: Option<PassivityIndices>,
    /// Output-rate gain used by the abstraction formulas.
    pub gamma: f64,
    /// Known storage matrix for `½xᵀPx`, when one is published.
    pub storage: Option<DMatrix<f64>>,
}

pub fn builtin(name: BuiltinName, radius_mode: RadiusMode) -> Builtin {
    match name {
        BuiltinName::Example1 => example1(radius_mode),
        BuiltinName::Example2Plant => example2_plant(radius_mode),
        BuiltinName::Example2Controller => example2_controller(radius_mode),
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `ẋ = −x + u`, `y = x + u` on `[−0.2, 0.2] × [−0.1, 0.1]`, state measured.
pub fn example1(radius_mode: RadiusMode) -> Builtin {
    let system = ContinuousSystem::lti(
        scalar(-1.0),
        scalar(1.0),
        scalar(1.0),
        scalar(1.0),
        MeasurementMode::StateMeasured,
        BoxSet::symmetric(&[0.2]).expect("valid box"),
        BoxSet::symmetric(&[0.1]).expect("valid box"),
    )
    .expect("consistent matrices");
    Builtin {
        name: BuiltinName::Example1,
        system,
        params: AbstractionParams { tau: 0.2, eta: 0.1, mu: 0.1, theta1: 1.0, theta2: 0.1, eps_u: 0.1, eps_y: 1.0, radius_mode },
        continuous_indices: Some(PassivityIndices { rho: 0.25, nu: 0.5 }),
        abstraction_indices: None,
        gamma: 1.0,
        storage: Some(scalar(0.5154)),
    }
}

pub fn example2_plant_matrices() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(5, 5, &[
        -3.6, 0.2, 2.4, 0.0, 0.0,
        0.2, -1.0, 0.0, -0.6, 0.0,
        2.4, 0.0, -6.0, -4.0, 1.0,
        0.0, -0.6, -4.0, -6.0, -0.8,
        0.0, 0.0, 1.0, 0.8, -2.0,
    ]);
    let b = DMatrix::from_column_slice(5, 1, &[0.1, 0.4, 0.1, 0.5, 0.1]);
    let c = b.transpose();
    (a, b, c, scalar(0.2))
}

/// Five-state passive plant, output measured, `γ = ‖CB‖ = 0.44`.
pub fn example2_plant(radius_mode: RadiusMode) -> Builtin {
    let (a, b, c, d) = example2_plant_matrices();
    let system = ContinuousSystem::lti(
        a,
        b,
        c,
        d,
        MeasurementMode::OutputMeasured,
        BoxSet::symmetric(&[0.2; 5]).expect("valid box"),
        BoxSet::symmetric(&[0.1]).expect("valid box"),
    )
    .expect("consistent matrices");
    Builtin {
        name: BuiltinName::Example2Plant,
        system,
        params: AbstractionParams { tau: 0.2, eta: 0.1, mu: 0.1, theta1: 1.0, theta2: 0.1, eps_u: 0.1, eps_y: 0.2, radius_mode },
        continuous_indices: Some(PassivityIndices { rho: 0.15, nu: 0.7 }),
        abstraction_indices: None,
        gamma: 0.44,
        storage: None,
    }
}

/// Two-state controller implemented in software, output measured.
pub fn example2_controller(radius_mode: RadiusMode) -> Builtin {
    let a = DMatrix::from_row_slice(2, 2, &[-2.0, -1.0, -3.0, -5.0]);
    let b = DMatrix::from_column_slice(2, 1, &[0.1, 0.2]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let gamma = crate::linalg::spectral_norm(&(&c * &b));
    let system = ContinuousSystem::lti(
        a,
        b,
        c,
        scalar(1.0),
        MeasurementMode::OutputMeasured,
        BoxSet::symmetric(&[0.2, 0.2]).expect("valid box"),
        BoxSet::symmetric(&[0.1]).expect("valid box"),
    )
    .expect("consistent matrices");
    Builtin {
        name: BuiltinName::Example2Controller,
        system,
        params: AbstractionParams { tau: 0.2, eta: 0.1, mu: 0.1, theta1: 1.0, theta2: 0.1, eps_u: 0.1, eps_y: 0.2, radius_mode },
        continuous_indices: None,
        abstraction_indices: Some(PassivityIndices { rho: 0.0420, nu: 0.8115 }),
        gamma,
        storage: None,
    }
}
