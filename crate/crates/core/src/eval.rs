//! Game-margin prediction, error metrics, histograms, the spread-betting
//! backtest and the underrated/overrated report.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use log::warn;

use crate::data::{BoxScoreTable, Stint, StintSet, PER_100};
use crate::error::{Error, Result};
use crate::estimators::{box_rating_original, RatingsModel};
use crate::ingest::{csv_writer, VegasLines};

/// Win rate a spread bettor needs to beat the standard vig, in percent.
pub const BREAK_EVEN_PCT: f64 = 52.5;

/// Default bet threshold in points, and the stricter robustness preset.
pub const DEFAULT_DELTA: f64 = 3.0;
pub const ROBUST_DELTA: f64 = 5.0;

/// Default eligibility for rating tables: total possessions on the floor.
pub const DEFAULT_MIN_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamePrediction {
    pub game_id: u64,
    pub predicted: f64,
    pub actual: f64,
    pub error: f64,
}

impl GamePrediction {
    pub fn new(game_id: u64, predicted: f64, actual: f64) -> Self {
        GamePrediction {
            game_id,
            predicted,
            actual,
            error: predicted - actual,
        }
    }
}

/// Retrodictive margin: the model's expected margin summed over the realized
/// stints of the game, `sum_i w_i (alpha + x_i' beta)`.
pub fn predict_margin(model: &RatingsModel, game_stints: &[Stint]) -> Result<f64> {
    let first = game_stints
        .first()
        .ok_or_else(|| Error::Validation("cannot predict a game with no stints".into()))?;
    if game_stints.iter().any(|s| s.game_id != first.game_id) {
        return Err(Error::Validation("stints belong to more than one game".into()));
    }
    Ok(game_stints.iter().map(|s| model.predict_stint(s)).sum())
}

/// Prospective fallback that ignores the game's realized lineups: each side
/// is represented by the five players from its stints with the most season
/// floor time, playing `possessions` possessions.
pub fn predict_margin_roster_average(
    model: &RatingsModel,
    game_stints: &[Stint],
    season_floor_weight: &[f64],
    possessions: f64,
) -> Result<f64> {
    if game_stints.is_empty() {
        return Err(Error::Validation("cannot predict a game with no stints".into()));
    }
    let top5 = |side: &dyn Fn(&Stint) -> &[usize]| -> f64 {
        let mut roster: Vec<usize> = game_stints.iter().flat_map(|s| side(s).iter().copied()).collect();
        roster.sort_unstable();
        roster.dedup();
        roster.sort_by(|&a, &b| season_floor_weight[b].total_cmp(&season_floor_weight[a]).then(a.cmp(&b)));
        roster.iter().take(5).map(|&j| model.beta[j]).sum()
    };
    let home = top5(&|s: &Stint| &s.home[..]);
    let away = top5(&|s: &Stint| &s.away[..]);
    Ok(possessions * (model.alpha_hca + home - away))
}

/// Predicts every game of `test` with each model. `A_k` is the plain sum of
/// stint margins. Games that also appear in `train_ids` are reported with a
/// warning.
pub fn evaluate(
    models: &[&RatingsModel],
    test: &StintSet,
    train_ids: Option<&HashSet<u64>>,
) -> Result<Vec<Vec<GamePrediction>>> {
    if let Some(train) = train_ids {
        let overlap = test.game_ids().into_iter().filter(|g| train.contains(g)).count();
        if overlap > 0 {
            warn!("{overlap} test games also appear in the training set");
        }
    }
    models
        .iter()
        .map(|m| {
            if m.p() != test.p() {
                return Err(Error::Validation(format!(
                    "model rates {} players but the data has {}",
                    m.p(),
                    test.p()
                )));
            }
            test.games()
                .map(|(g, stints)| {
                    let actual = stints.iter().map(|s| s.margin).sum();
                    Ok(GamePrediction::new(g, predict_margin(m, stints)?, actual))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub games: usize,
    /// Percent of non-tied games whose winner was predicted wrongly; `None`
    /// when every game is tied.
    pub wrong_winner_pct: Option<f64>,
    pub mean_abs_err: f64,
    pub median_abs_err: f64,
    pub rmse: f64,
}

pub fn metrics(preds: &[GamePrediction]) -> Result<Metrics> {
    if preds.is_empty() {
        return Err(Error::Validation("no predictions to summarize".into()));
    }
    let n = preds.len() as f64;
    let decided: Vec<&GamePrediction> = preds.iter().filter(|p| p.actual != 0.0).collect();
    let wrong = decided
        .iter()
        .filter(|p| sign(p.predicted) != sign(p.actual))
        .count();
    let wrong_winner_pct = (!decided.is_empty()).then(|| 100.0 * wrong as f64 / decided.len() as f64);
    let mut abs: Vec<f64> = preds.iter().map(|p| p.error.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mid = abs.len() / 2;
    let median_abs_err = if abs.len() % 2 == 1 {
        abs[mid]
    } else {
        0.5 * (abs[mid - 1] + abs[mid])
    };
    Ok(Metrics {
        games: preds.len(),
        wrong_winner_pct,
        mean_abs_err: abs.iter().sum::<f64>() / n,
        median_abs_err,
        rmse: (preds.iter().map(|p| p.error * p.error).sum::<f64>() / n).sqrt(),
    })
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Counts per bin of width `bin_width`; bins are centered on multiples of the
/// width and values are rounded half-up to the nearest center. Output is
/// sorted by center.
pub fn histogram(errors: &[f64], bin_width: f64) -> Result<Vec<(f64, usize)>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Validation(format!("bin width must be positive, got {bin_width}")));
    }
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for &e in errors {
        *bins.entry((e / bin_width + 0.5).floor() as i64).or_default() += 1;
    }
    Ok(bins
        .into_iter()
        .map(|(k, c)| (k as f64 * bin_width, c))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetSide {
    Home,
    Away,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetOutcome {
    Win,
    Loss,
    Push,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetRecord {
    pub game_id: u64,
    pub line: f64,
    pub predicted: f64,
    pub actual: f64,
    /// `None` when the deviation did not exceed the threshold.
    pub side: Option<BetSide>,
    pub outcome: Option<BetOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetLedger {
    pub bets: usize,
    pub wins: usize,
    pub losses: usize,
    pub pushes: usize,
    /// `100 * wins / (wins + losses)`; `None` when no bet was decided.
    pub win_pct: Option<f64>,
    pub delta: f64,
    pub break_even_pct: f64,
    pub skipped_missing_line: usize,
    pub records: Vec<BetRecord>,
}

impl BetLedger {
    pub fn profitable(&self) -> bool {
        self.win_pct.is_some_and(|w| w > self.break_even_pct)
    }
}

/// Bets on the side the model favors against the line whenever
/// `|predicted - line| > delta`. A bet wins when the realized margin lands on
/// the same side of the line as the prediction and pushes when it lands on
/// the line.
pub fn backtest(preds: &[GamePrediction], lines: &VegasLines, delta: f64) -> Result<BetLedger> {
    backtest_with_break_even(preds, lines, delta, BREAK_EVEN_PCT)
}

pub fn backtest_with_break_even(
    preds: &[GamePrediction],
    lines: &VegasLines,
    delta: f64,
    break_even_pct: f64,
) -> Result<BetLedger> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Validation(format!("delta must be nonnegative, got {delta}")));
    }
    let mut ledger = BetLedger {
        bets: 0,
        wins: 0,
        losses: 0,
        pushes: 0,
        win_pct: None,
        delta,
        break_even_pct,
        skipped_missing_line: 0,
        records: Vec::with_capacity(preds.len()),
    };
    for p in preds {
        let Some(line) = lines.get(p.game_id) else {
            warn!("no line for game {}; skipped", p.game_id);
            ledger.skipped_missing_line += 1;
            continue;
        };
        let edge = p.predicted - line;
        let mut rec = BetRecord {
            game_id: p.game_id,
            line,
            predicted: p.predicted,
            actual: p.actual,
            side: None,
            outcome: None,
        };
        if edge.abs() > delta {
            ledger.bets += 1;
            rec.side = Some(if edge > 0.0 { BetSide::Home } else { BetSide::Away });
            let result = p.actual - line;
            let outcome = if result == 0.0 {
                ledger.pushes += 1;
                BetOutcome::Push
            } else if sign(result) == sign(edge) {
                ledger.wins += 1;
                BetOutcome::Win
            } else {
                ledger.losses += 1;
                BetOutcome::Loss
            };
            rec.outcome = Some(outcome);
        }
        ledger.records.push(rec);
    }
    let decided = ledger.wins + ledger.losses;
    ledger.win_pct = (decided > 0).then(|| 100.0 * ledger.wins as f64 / decided as f64);
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnderratedEntry {
    pub player: usize,
    pub name: String,
    pub beta: f64,
    pub theta: f64,
    /// `beta - theta`.
    pub underrated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnderratedReport {
    pub underrated: Vec<UnderratedEntry>,
    pub overrated: Vec<UnderratedEntry>,
}

/// Ranks eligible players by `U = beta - theta` (underrated, descending) and
/// by `-U` (overrated). Ties are broken by player index.
pub fn underrated_report(
    model: &RatingsModel,
    r: &BoxScoreTable,
    data: &StintSet,
    min_weight: f64,
    top: usize,
) -> Result<UnderratedReport> {
    let theta = box_rating_original(model, r)?;
    Ok(underrated_from_ratings(&model.beta, &theta, data, min_weight, top))
}

pub(crate) fn underrated_from_ratings(
    beta: &[f64],
    theta: &[f64],
    data: &StintSet,
    min_weight: f64,
    top: usize,
) -> UnderratedReport {
    let floor = data.floor_weight();
    let entries: Vec<UnderratedEntry> = (0..beta.len())
        .filter(|&j| floor[j] >= min_weight)
        .map(|j| UnderratedEntry {
            player: j,
            name: data.players().name(j).unwrap_or_default().to_string(),
            beta: beta[j],
            theta: theta[j],
            underrated: beta[j] - theta[j],
        })
        .collect();
    let ranked = |key: fn(&UnderratedEntry) -> f64| {
        let mut v = entries.clone();
        v.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.player.cmp(&b.player)));
        v.truncate(top);
        v
    };
    UnderratedReport {
        underrated: ranked(|e| e.underrated),
        overrated: ranked(|e| -e.underrated),
    }
}

/// Top players by rating among those with at least `min_weight` possessions.
pub fn top_players(model: &RatingsModel, data: &StintSet, min_weight: f64, top: usize) -> Vec<(usize, f64)> {
    let floor = data.floor_weight();
    let mut v: Vec<(usize, f64)> = (0..model.p())
        .filter(|&j| floor[j] >= min_weight)
        .map(|j| (j, model.beta[j]))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(top);
    v
}

fn writer_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Data(format!("{}: {e}", path.display()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `model,game_id,predicted,actual,error`.
pub fn write_predictions(path: &Path, per_model: &[(String, Vec<GamePrediction>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = writer_err(path);
    w.write_record(["model", "game_id", "predicted", "actual", "error"]).map_err(&err)?;
    for (name, preds) in per_model {
        for p in preds {
            w.write_record([
                name.clone(),
                p.game_id.to_string(),
                p.predicted.to_string(),
                p.actual.to_string(),
                p.error.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `model,bin_center,count`.
pub fn write_histogram(path: &Path, per_model: &[(String, Vec<(f64, usize)>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = writer_err(path);
    w.write_record(["model", "bin_center", "count"]).map_err(&err)?;
    for (name, bins) in per_model {
        for (c, n) in bins {
            w.write_record([name.clone(), c.to_string(), n.to_string()]).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `model,games,wrong_winner_pct,mean_abs_err,median_abs_err,rmse`.
pub fn write_metrics(path: &Path, per_model: &[(String, Metrics)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = writer_err(path);
    w.write_record(["model", "games", "wrong_winner_pct", "mean_abs_err", "median_abs_err", "rmse"])
        .map_err(&err)?;
    for (name, m) in per_model {
        w.write_record([
            name.clone(),
            m.games.to_string(),
            fmt_opt(m.wrong_winner_pct),
            m.mean_abs_err.to_string(),
            m.median_abs_err.to_string(),
            m.rmse.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `game_id,model,line,predicted,actual,decision,outcome`; decision is
/// `home`, `away` or `pass`, outcome `win`, `loss`, `push` or `none`.
pub fn write_bets(path: &Path, per_model: &[(String, BetLedger)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = writer_err(path);
    w.write_record(["game_id", "model", "line", "predicted", "actual", "decision", "outcome"])
        .map_err(&err)?;
    for (name, ledger) in per_model {
        for r in &ledger.records {
            let decision = match r.side {
                Some(BetSide::Home) => "home",
                Some(BetSide::Away) => "away",
                None => "pass",
            };
            let outcome = match r.outcome {
                Some(BetOutcome::Win) => "win",
                Some(BetOutcome::Loss) => "loss",
                Some(BetOutcome::Push) => "push",
                None => "none",
            };
            w.write_record([
                r.game_id.to_string(),
                name.clone(),
                r.line.to_string(),
                r.predicted.to_string(),
                r.actual.to_string(),
                decision.to_string(),
                outcome.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `model,delta,bets,wins,losses,pushes,win_pct,profitable`.
pub fn write_ledgers(path: &Path, per_model: &[(String, BetLedger)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = writer_err(path);
    w.write_record(["model", "delta", "bets", "wins", "losses", "pushes", "win_pct", "profitable"])
        .map_err(&err)?;
    for (name, l) in per_model {
        w.write_record([
            name.clone(),
            l.delta.to_string(),
            l.bets.to_string(),
            l.wins.to_string(),
            l.losses.to_string(),
            l.pushes.to_string(),
            fmt_opt(l.win_pct),
            l.profitable().to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `rank,player_id,name,beta_per100,theta_per100,underrated_per100`.
pub fn write_underrated(path: &Path, entries: &[UnderratedEntry]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = writer_err(path);
    w.write_record(["rank", "player_id", "name", "beta_per100", "theta_per100", "underrated_per100"])
        .map_err(&err)?;
    for (i, e) in entries.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.player.to_string(),
            e.name.clone(),
            (e.beta * PER_100).to_string(),
            (e.theta * PER_100).to_string(),
            (e.underrated * PER_100).to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
