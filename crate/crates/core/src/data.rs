//! Initial profiles used by presets, the CLI and the tests.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spectral::{SpectralGrid, StateFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// `2κ² sech²(κ(x − c))`, the KdV solitary wave.
    Soliton { kappa: f64, center: Option<f64> },
    /// `A exp(−((x − c)/w)²)`.
    Gaussian { amplitude: f64, width: f64, center: Option<f64> },
    /// `b + A exp(−((x − c)/w)²)`.
    Bump { base: f64, amplitude: f64, width: f64, center: Option<f64> },
    /// `A cos(2πkx/L)`.
    Mode { k: u32, amplitude: f64 },
    /// Gaussian envelope times `cos(ξ₀(x − c))`.
    Packet { amplitude: f64, width: f64, wavenumber: f64, center: Option<f64> },
}

fn sech(z: f64) -> f64 {
    1.0 / z.cosh()
}

impl InitialData {
    pub fn sample(&self, grid: &SpectralGrid) -> Result<StateFunction> {
        let mid = grid.length() / 2.0;
        match *self {
            InitialData::Soliton { kappa, center } => {
                let c = center.unwrap_or(mid);
                StateFunction::from_fn(grid, 0.0, |x| 2.0 * kappa * kappa * sech(kappa * (x - c)).powi(2))
            }
            InitialData::Gaussian { amplitude, width, center } => {
                let c = center.unwrap_or(mid);
                StateFunction::from_fn(grid, 0.0, |x| amplitude * (-((x - c) / width).powi(2)).exp())
            }
            InitialData::Bump { base, amplitude, width, center } => {
                let c = center.unwrap_or(mid);
                StateFunction::from_fn(grid, 0.0, |x| base + amplitude * (-((x - c) / width).powi(2)).exp())
            }
            InitialData::Mode { k, amplitude } => {
                let xi = 2.0 * std::f64::consts::PI * k as f64 / grid.length();
                StateFunction::from_fn(grid, 0.0, |x| amplitude * (xi * x).cos())
            }
            InitialData::Packet { amplitude, width, wavenumber, center } => {
                let c = center.unwrap_or(mid);
                StateFunction::from_fn(grid, 0.0, |x| {
                    amplitude * (-((x - c) / width).powi(2)).exp() * (wavenumber * (x - c)).cos()
                })
            }
        }
    }
}
