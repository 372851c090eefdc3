//! Lineup-based player ratings with a box-score subspace prior.
//!
//! Player ratings `beta` are fit to stint margins by weighted least squares
//! with an L1 penalty and a quadratic pull toward a linear function of box
//! score statistics, `z0 + R z`. The solver is cyclic coordinate descent.

pub mod ccd;
pub mod cv;
pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod synthetic;

pub use ccd::{run_ccd, run_ccd_warm, CcdConfig, CcdTrace, SprProblem};
pub use cv::{cross_validate, cross_validate_ridge, CvResult, GridPoint, RidgeCvResult};
pub use data::{
    aggregate_box_scores, standardize_columns, BoxScoreTable, PlayerTable, RegPair, SprModel, Stint,
    StintSet, LINEUP_SIZE, PER_100,
};
pub use error::{Error, Result};
pub use estimators::{fit_dummy, fit_ridge, fit_spr, fit_wls, EstimatorKind, RatingsModel};
pub use eval::{backtest, evaluate, metrics, BetLedger, GamePrediction, Metrics};
pub use ingest::VegasLines;
pub use synthetic::{generate_season, SeasonSpec, SyntheticSeason};
