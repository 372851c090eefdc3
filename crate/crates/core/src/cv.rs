//! K-fold cross-validation over dyadic regularization grids.
//!
//! Folds partition games, never stints. Every `(fold, grid point)` pair is
//! an independent job; results are collected by key, so the table does not
//! depend on the number of worker threads or the order jobs finish in.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ccd::{quadratic_loss, CcdConfig, SprProblem};
use crate::data::{BoxScoreTable, RegPair, StintSet};
use crate::error::{Error, Result};
use crate::estimators::fit_ridge;
use crate::ingest::csv_writer;

/// Exponents of the default grid: `{-10, ..., 9}`.
pub const DEFAULT_EXPONENTS: std::ops::RangeInclusive<i32> = -10..=9;

/// A grid point `(2^a, 2^b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint {
    pub a: i32,
    pub b: i32,
}

impl GridPoint {
    pub fn lambda(self) -> RegPair {
        RegPair::from_exponents(self.a, self.b)
    }
}

/// The 20 x 20 grid over `{2^a : a in -10..=9}` squared.
pub fn default_grid() -> Vec<GridPoint> {
    exponent_grid(
        *DEFAULT_EXPONENTS.start(),
        *DEFAULT_EXPONENTS.end(),
        *DEFAULT_EXPONENTS.start(),
        *DEFAULT_EXPONENTS.end(),
    )
    .expect("default bounds are valid")
}

/// All `(a, b)` with `a_min <= a <= a_max`, `b_min <= b <= b_max`, ordered by
/// `a` then `b`.
pub fn exponent_grid(a_min: i32, a_max: i32, b_min: i32, b_max: i32) -> Result<Vec<GridPoint>> {
    if a_min > a_max || b_min > b_max {
        return Err(Error::Validation("empty exponent range".into()));
    }
    Ok((a_min..=a_max)
        .flat_map(|a| (b_min..=b_max).map(move |b| GridPoint { a, b }))
        .collect())
}

/// Shuffles the distinct game ids with `seed` and deals them round-robin into
/// `k` folds, so fold sizes differ by at most one.
pub fn make_folds(game_ids: &[u64], k: usize, seed: u64) -> Result<Vec<Vec<u64>>> {
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 folds, got {k}")));
    }
    let mut seen = HashSet::new();
    let mut games: Vec<u64> = game_ids.iter().copied().filter(|g| seen.insert(*g)).collect();
    if games.len() < k {
        return Err(Error::Validation(format!(
            "{} games cannot be split into {k} folds",
            games.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    games.shuffle(&mut rng);
    let mut folds = vec![Vec::with_capacity(games.len() / k + 1); k];
    for (i, g) in games.into_iter().enumerate() {
        folds[i % k].push(g);
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub point: GridPoint,
    pub fold_losses: Vec<f64>,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// One entry per grid point, in grid order.
    pub table: Vec<CvEntry>,
    pub best: GridPoint,
    pub folds: usize,
    pub seed: u64,
}

impl CvResult {
    pub fn best_lambda(&self) -> RegPair {
        self.best.lambda()
    }

    pub fn mean_loss(&self, point: GridPoint) -> Option<f64> {
        self.table.iter().find(|e| e.point == point).map(|e| e.mean_loss)
    }

    /// Writes `lambda1_exp,lambda2_exp,mean_heldout_loss`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(["lambda1_exp", "lambda2_exp", "mean_heldout_loss"])
            .map_err(err)?;
        for e in &self.table {
            w.write_record([e.point.a.to_string(), e.point.b.to_string(), e.mean_loss.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Train/test stint sets for each fold.
pub fn fold_splits(data: &StintSet, folds: &[Vec<u64>]) -> Vec<(StintSet, StintSet)> {
    folds
        .iter()
        .map(|test| {
            let test: HashSet<u64> = test.iter().copied().collect();
            (
                data.filter_games(|g| !test.contains(&g)),
                data.filter_games(|g| test.contains(&g)),
            )
        })
        .collect()
}

/// A failed job: `(fold, grid index, error)`.
type TaskFailure = (usize, usize, Error);

/// A dedicated pool of `jobs` workers; `None` means the global pool.
fn worker_pool(jobs: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    jobs.map(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))
    })
    .transpose()
}

/// Runs `score(fold, point)` for every pair and returns losses indexed
/// `[point][fold]`. On failure the first failing job in `(fold, point)` order
/// is reported.
fn run_grid<F>(
    n_points: usize,
    n_folds: usize,
    pool: Option<&rayon::ThreadPool>,
    score: F,
) -> std::result::Result<Vec<Vec<f64>>, TaskFailure>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let tasks: Vec<(usize, usize)> = (0..n_folds)
        .flat_map(|f| (0..n_points).map(move |i| (f, i)))
        .collect();
    let run = || -> Vec<Result<f64>> { tasks.par_iter().map(|&(f, i)| score(f, i)).collect() };
    let results = match pool {
        Some(pool) => pool.install(run),
        None => run(),
    };
    let mut table = vec![vec![0.0; n_folds]; n_points];
    for (&(f, i), r) in tasks.iter().zip(results) {
        table[i][f] = r.map_err(|e| (f, i, e))?;
    }
    Ok(table)
}

fn task_error((fold, _, e): TaskFailure, lam: RegPair) -> Error {
    Error::CvTask {
        fold,
        lambda1: lam.lambda1,
        lambda2: lam.lambda2,
        source: Box::new(e),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Cross-validates SPR over `grid`. Each job fits on `K - 1` folds from the
/// zero start and scores the weighted quadratic loss on the held-out fold.
pub fn cross_validate(
    data: &StintSet,
    r: &BoxScoreTable,
    grid: &[GridPoint],
    k: usize,
    seed: u64,
    cfg: &CcdConfig,
    jobs: Option<usize>,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Validation("empty lambda grid".into()));
    }
    cfg.validate()?;
    let folds = make_folds(&data.game_ids(), k, seed)?;
    let splits = fold_splits(data, &folds);
    let problems = splits
        .iter()
        .map(|(train, _)| SprProblem::new(train, r))
        .collect::<Result<Vec<_>>>()?;
    let pool = worker_pool(jobs)?;
    let losses = run_grid(grid.len(), k, pool.as_ref(), |f, i| {
        let (model, _) = problems[f].solve(grid[i].lambda(), cfg)?;
        let loss = quadratic_loss(model.alpha_hca, &model.beta, &splits[f].1);
        if !loss.is_finite() {
            return Err(Error::Numeric("held-out loss is not finite".into()));
        }
        Ok(loss)
    })
    .map_err(|f| {
        let lam = grid[f.1].lambda();
        task_error(f, lam)
    })?;

    let table: Vec<CvEntry> = grid
        .iter()
        .zip(losses)
        .map(|(&point, fold_losses)| CvEntry {
            point,
            mean_loss: mean(&fold_losses),
            fold_losses,
        })
        .collect();
    let best = select_best(&table);
    Ok(CvResult {
        table,
        best,
        folds: k,
        seed,
    })
}

/// Smallest mean loss; ties go to the smaller `lambda1`, then `lambda2`.
fn select_best(table: &[CvEntry]) -> GridPoint {
    table
        .iter()
        .min_by(|x, y| {
            x.mean_loss
                .total_cmp(&y.mean_loss)
                .then(x.point.a.cmp(&y.point.a))
                .then(x.point.b.cmp(&y.point.b))
        })
        .expect("nonempty table")
        .point
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeCvResult {
    /// `(exponent, mean held-out loss)` in input order.
    pub table: Vec<(i32, f64)>,
    pub best: i32,
    pub folds: usize,
    pub seed: u64,
}

impl RidgeCvResult {
    pub fn best_lambda(&self) -> f64 {
        2f64.powi(self.best)
    }

    /// Writes `lambda_exp,mean_heldout_loss`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(["lambda_exp", "mean_heldout_loss"]).map_err(err)?;
        for (a, loss) in &self.table {
            w.write_record([a.to_string(), loss.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Cross-validates the ridge penalty over `{2^a : a in exponents}` with the
/// same folds and scoring as [`cross_validate`].
pub fn cross_validate_ridge(
    data: &StintSet,
    exponents: &[i32],
    k: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<RidgeCvResult> {
    if exponents.is_empty() {
        return Err(Error::Validation("empty lambda grid".into()));
    }
    let folds = make_folds(&data.game_ids(), k, seed)?;
    let splits = fold_splits(data, &folds);
    let pool = worker_pool(jobs)?;
    let losses = run_grid(exponents.len(), k, pool.as_ref(), |f, i| {
        let m = fit_ridge(&splits[f].0, 2f64.powi(exponents[i]))?;
        Ok(m.loss(&splits[f].1))
    })
    .map_err(|f| {
        let lam = RegPair { lambda1: 0.0, lambda2: 2f64.powi(exponents[f.1]) };
        task_error(f, lam)
    })?;
    let table: Vec<(i32, f64)> = exponents
        .iter()
        .zip(&losses)
        .map(|(&a, l)| (a, mean(l)))
        .collect();
    let best = table
        .iter()
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
        .expect("nonempty table")
        .0;
    Ok(RidgeCvResult {
        table,
        best,
        folds: k,
        seed,
    })
}
