use thiserror::Error;

use crate::config::ConfigError;
use crate::dynamics::DynamicsError;
use crate::hydro::HydroError;
use crate::io::SnapshotError;
use crate::neighbor::NeighborError;
use crate::observables::{ObservableError, SweepError};
use crate::params::ParamError;
use crate::rg::RgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the command driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error(transparent)]
    Rg(#[from] RgError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}
