//! Closed-form initial-data generators.
//!
//! Every generator is deterministic given its parameters; arbitrary
//! external fields enter only through snapshots, so every reported number
//! is reproducible from the config alone.

use super::snapshot::read_snapshot;
use crate::mesh::{Grid, ScalarField};
use crate::{Error, Result};
use serde::Deserialize;
use std::path::PathBuf;

/// Named initial-data generator, as written in config files.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum InitialData {
    /// `φ ≡ value`.
    #[serde(rename = "constant")]
    Constant { value: f64 },
    /// `offset + amplitude · cos(kx·πx/lx) · cos(ky·πy/ly)` — a Neumann
    /// eigenmode plus a floor.
    #[serde(rename = "cosine-bump")]
    CosineBump {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        mode_x: u32,
        #[serde(default = "one")]
        mode_y: u32,
    },
    /// `offset + amplitude · exp(−((x−cx)² + (y−cy)²)/(2σ²))`, optionally
    /// rescaled so the total mass matches `mass`.
    #[serde(rename = "gaussian-bump")]
    GaussianBump {
        #[serde(default = "one_f64")]
        amplitude: f64,
        center: Option<[f64; 2]>,
        sigma: f64,
        #[serde(default)]
        offset: f64,
        mass: Option<f64>,
    },
    /// Read a previously written snapshot; its grid must match.
    #[serde(rename = "from-snapshot")]
    FromSnapshot { path: PathBuf },
}

fn one() -> u32 {
    1
}
fn one_f64() -> f64 {
    1.0
}

impl InitialData {
    /// Evaluate the generator on a grid.
    pub fn materialize(&self, grid: Grid) -> Result<ScalarField> {
        match self {
            InitialData::Constant { value } => Ok(ScalarField::constant(grid, *value)),
            InitialData::CosineBump {
                offset,
                amplitude,
                mode_x,
                mode_y,
            } => {
                let pi = std::f64::consts::PI;
                let (kx, ky) = (*mode_x as f64, *mode_y as f64);
                Ok(ScalarField::from_fn(grid, |x, y| {
                    offset
                        + amplitude
                            * (kx * pi * x / grid.lx()).cos()
                            * (ky * pi * y / grid.ly()).cos()
                }))
            }
            InitialData::GaussianBump {
                amplitude,
                center,
                sigma,
                offset,
                mass,
            } => {
                if !(*sigma > 0.0) {
                    return Err(Error::Parameter(format!(
                        "gaussian-bump sigma must be positive, got {sigma}"
                    )));
                }
                let [cx, cy] = center.unwrap_or([grid.lx() / 2.0, grid.ly() / 2.0]);
                let inv = 1.0 / (2.0 * sigma * sigma);
                let mut field = ScalarField::from_fn(grid, |x, y| {
                    offset + amplitude * (-((x - cx).powi(2) + (y - cy).powi(2)) * inv).exp()
                });
                if let Some(target) = mass {
                    rescale_to_mass(&mut field, *target)?;
                }
                Ok(field)
            }
            InitialData::FromSnapshot { path } => {
                let field = read_snapshot(path)?;
                if field.grid() != &grid {
                    return Err(Error::ShapeMismatch(format!(
                        "snapshot grid {}x{} does not match configured grid {}x{}",
                        field.grid().nx(),
                        field.grid().ny(),
                        grid.nx(),
                        grid.ny()
                    )));
                }
                Ok(field)
            }
        }
    }

    /// Replace the generator's amplitude; used by sweep axes.
    pub fn with_amplitude(&self, a: f64) -> Result<InitialData> {
        let mut out = self.clone();
        match &mut out {
            InitialData::Constant { value } => *value = a,
            InitialData::CosineBump { amplitude, .. } => *amplitude = a,
            InitialData::GaussianBump { amplitude, .. } => *amplitude = a,
            InitialData::FromSnapshot { .. } => {
                return Err(Error::Parameter(
                    "amplitude axis cannot apply to a from-snapshot generator".into(),
                ))
            }
        }
        Ok(out)
    }
}

/// Scale a field so its integral equals `target`.
pub fn rescale_to_mass(field: &mut ScalarField, target: f64) -> Result<()> {
    let current = field.integrate()?;
    if !(current > 0.0) {
        return Err(Error::Parameter(format!(
            "cannot rescale a field of mass {current} to mass {target}"
        )));
    }
    let scale = target / current;
    for v in field.values_mut() {
        *v *= scale;
    }
    Ok(())
}
