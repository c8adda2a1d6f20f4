//! Residual kriging for correcting gridded predictions with sparse point
//! observations.
//!
//! The usual flow: compute residuals of observed samples against a
//! prediction raster, estimate and fit a semivariogram of those residuals,
//! krige the residuals over the grid and add them back. [`rk::run_rk`] does
//! all of it for one site.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod io;
pub mod kriging;
pub mod linalg;
pub mod model;
pub mod rk;
pub mod semivariogram;
pub mod spatial;
pub mod synthetic;
pub mod validation;
pub mod variogram;

pub use error::{Error, Result};
pub use kriging::{DuplicatePolicy, Kriger, KrigingConfig, KrigingSolution, Neighborhood};
pub use model::{
    buffer_extent, crop, residuals, Aabb, BeamClass, GridGeometry, Point2D, Raster, ResidualSet,
    Sample, TrackAzimuthClass, TrackId, DEFAULT_NODATA,
};
pub use rk::{
    run_rk, run_rk_multi, AlongTrackFit, MultiRkOutput, RkConfig, RkDiagnostics, RkOutput,
    SiteInput, VariogramSource,
};
pub use semivariogram::{
    empirical, empirical_directional, periodicity_score, Direction, EmpiricalSemivariogram, LagBin,
    PeriodicityScore,
};
pub use synthetic::{simulate_scenario, GediPatternSpec, GrfSpec, Pass, Scenario, ScenarioSpec};
pub use validation::{metrics, proximity_analysis, MetricSet, ProximityReport, ProximityRow};
pub use variogram::{fit, fit_combined, FitResult, ModelKind, VariogramModel, Weighting};
