use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use spr_core::ccd::CcdConfig;
use spr_core::cv::{self, GridPoint};
use spr_core::data::{standardize_columns, BoxScoreTable, RegPair, StintSet, PER_100};
use spr_core::estimators::{
    box_rating_original, fit_dummy, fit_ridge, fit_spr, fit_wls, load_model, poly_expand, save_model,
    RatingsModel,
};
use spr_core::eval::{self, BetLedger, Metrics};
use spr_core::ingest::{load_box_scores, load_players, load_stints, load_vegas_lines};
use spr_core::synthetic::{generate_season, SeasonSpec};
use spr_core::Error;

use crate::{
    BetArgs, BoxArgs, Cli, Command, CvArgs, DataArgs, Estimator, EvaluateArgs, FitArgs, GlobalArgs,
    ReportArgs, SimulateArgs, SolverArgs, SplitArgs,
};

const GRID_LIMIT: i32 = 32;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if !e.is_input_error() => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    fs::create_dir_all(&g.out_dir).map_err(|e| io_err(&g.out_dir, e))?;
    match &cli.command {
        Command::Simulate(a) => simulate(g, a),
        Command::Fit(a) => fit(g, a),
        Command::Cv(a) => cross_validate(g, a),
        Command::Evaluate(a) => evaluate(g, a),
        Command::Bet(a) => bet(g, a),
        Command::Report(a) => report(g, a),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(Error::Io { path: path.to_path_buf(), source })
}

macro_rules! say {
    ($g:expr, $($arg:tt)*) => {
        if !$g.quiet {
            println!($($arg)*);
        }
    };
}

struct Inputs {
    data: StintSet,
    box_file: PathBuf,
}

impl DataArgs {
    fn file(&self, over: &Option<PathBuf>, name: &str) -> PathBuf {
        over.clone().unwrap_or_else(|| self.data.join(name))
    }

    fn load(&self) -> Result<Inputs> {
        let players = load_players(&self.file(&self.players, "players.csv"))?;
        let data = load_stints(&self.file(&self.stints, "stints.csv"), &players)?;
        Ok(Inputs {
            data,
            box_file: self.file(&self.box_scores, "box_scores.csv"),
        })
    }
}

impl Inputs {
    fn raw_box_scores(&self) -> Result<BoxScoreTable> {
        Ok(load_box_scores(&self.box_file, self.data.players())?)
    }
}

impl SplitArgs {
    fn is_set(&self) -> bool {
        self.train_games.is_some() || self.train_ids.is_some()
    }

    fn train_ids(&self, data: &StintSet) -> Result<HashSet<u64>> {
        let all = data.game_ids();
        if let Some(n) = self.train_games {
            if n == 0 || n > all.len() {
                return Err(CliError::Usage(format!(
                    "--train-games must be in 1..={}, got {n}",
                    all.len()
                )));
            }
            return Ok(all.into_iter().take(n).collect());
        }
        if let Some(ids) = &self.train_ids {
            let known: HashSet<u64> = all.into_iter().collect();
            if let Some(bad) = ids.iter().find(|g| !known.contains(g)) {
                return Err(CliError::Usage(format!("--train-ids: unknown game id {bad}")));
            }
            return Ok(ids.iter().copied().collect());
        }
        Ok(all.into_iter().collect())
    }

    fn train(&self, data: &StintSet) -> Result<StintSet> {
        let ids = self.train_ids(data)?;
        Ok(data.filter_games(|g| ids.contains(&g)))
    }

    /// Test games and the training ids they must not overlap with.
    fn test(&self, data: &StintSet) -> Result<(StintSet, Option<HashSet<u64>>)> {
        if !self.is_set() {
            return Ok((data.clone(), None));
        }
        let ids = self.train_ids(data)?;
        let test = data.filter_games(|g| !ids.contains(&g));
        if test.is_empty() {
            return Err(CliError::Usage("the split leaves no test games".into()));
        }
        Ok((test, Some(ids)))
    }
}

impl BoxArgs {
    fn prepare(&self, raw: &BoxScoreTable) -> Result<BoxScoreTable> {
        let r = if self.poly2 { poly_expand(raw)? } else { raw.clone() };
        Ok(if self.no_standardize { r } else { standardize_columns(&r)? })
    }
}

impl SolverArgs {
    fn config(&self) -> Result<CcdConfig> {
        let cfg = CcdConfig {
            max_sweeps: self.max_sweeps,
            rel_tol: self.rel_tol,
            ..CcdConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_exp(name: &str, v: i32) -> Result<()> {
    if v.abs() > GRID_LIMIT {
        return Err(CliError::Usage(format!(
            "--{name} must be within [-{GRID_LIMIT}, {GRID_LIMIT}], got {v}"
        )));
    }
    Ok(())
}

fn simulate(g: &GlobalArgs, a: &SimulateArgs) -> Result<()> {
    let spec = SeasonSpec {
        players: a.players,
        stats: a.stats,
        games: a.games,
        stints_per_game: a.stints_per_game,
        spikes: a.spikes,
        noise_sd: a.noise_sd,
        rotation: a.rotation,
        seed: g.seed,
    };
    let season = generate_season(&spec)?;
    season.write_to_dir(&g.out_dir)?;
    say!(
        g,
        "simulated {} players, {} games, {} stints (seed {})",
        a.players,
        a.games,
        season.stints.len(),
        g.seed
    );
    Ok(())
}

fn fit(g: &GlobalArgs, a: &FitArgs) -> Result<()> {
    check_exp("lambda1-exp", a.lambda1_exp)?;
    check_exp("lambda2-exp", a.lambda2_exp)?;
    check_exp("ridge-exp", a.ridge_exp)?;
    let inputs = a.data.load()?;
    let train = a.split.train(&inputs.data)?;
    let mut log = String::new();
    let model = match a.estimator {
        Estimator::Dummy => fit_dummy(train.p()),
        Estimator::Wls => fit_wls(&train)?,
        Estimator::Ridge => {
            writeln!(log, "ridge_exp,{}", a.ridge_exp).unwrap();
            fit_ridge(&train, 2f64.powi(a.ridge_exp))?
        }
        Estimator::Spr => {
            let r = a.box_args.prepare(&inputs.raw_box_scores()?)?;
            writeln!(log, "lambda1_exp,{}", a.lambda1_exp).unwrap();
            writeln!(log, "lambda2_exp,{}", a.lambda2_exp).unwrap();
            writeln!(log, "standardized,{}", !a.box_args.no_standardize).unwrap();
            writeln!(log, "poly2,{}", a.box_args.poly2).unwrap();
            let lam = RegPair::from_exponents(a.lambda1_exp, a.lambda2_exp);
            fit_spr(&train, &r, lam, &a.solver.config()?)?
        }
    };
    let mut head = String::new();
    writeln!(head, "estimator,{}", model.kind).unwrap();
    writeln!(head, "train_games,{}", train.game_ids().len()).unwrap();
    writeln!(head, "train_stints,{}", train.len()).unwrap();
    writeln!(head, "singular,{}", model.singular).unwrap();
    log.insert_str(0, &head);
    if let Some(trace) = model.spr.as_ref().and_then(|x| x.trace.as_ref()) {
        writeln!(log, "sweeps,{}", trace.sweeps_run).unwrap();
        writeln!(log, "converged,{}", trace.converged).unwrap();
        writeln!(log, "final_objective,{}", trace.final_objective()).unwrap();
        let kkt = trace.kkt_residual.map(|k| k.to_string()).unwrap_or_default();
        writeln!(log, "kkt_residual,{kkt}").unwrap();
        if !trace.converged {
            warn!("solver stopped after {} sweeps without converging", trace.sweeps_run);
        }
    }
    writeln!(log, "training_loss,{}", model.loss(&train)).unwrap();
    save_model(&g.out_dir, &model)?;
    let path = g.out_dir.join("fit_log.txt");
    fs::write(&path, &log).map_err(|e| io_err(&path, e))?;
    if !g.quiet {
        print!("{log}");
    }
    Ok(())
}

fn cross_validate(g: &GlobalArgs, a: &CvArgs) -> Result<()> {
    for (name, v) in [("a-min", a.a_min), ("a-max", a.a_max), ("b-min", a.b_min), ("b-max", a.b_max)] {
        check_exp(name, v)?;
    }
    let inputs = a.data.load()?;
    let train = a.split.train(&inputs.data)?;
    let path = g.out_dir.join("cv_table.csv");
    match a.estimator {
        Estimator::Spr => {
            let grid = cv::exponent_grid(a.a_min, a.a_max, a.b_min, a.b_max)?;
            say!(g, "grid,{}", grid.len());
            let r = a.box_args.prepare(&inputs.raw_box_scores()?)?;
            let res = cv::cross_validate(&train, &r, &grid, a.folds, g.seed, &a.solver.config()?, g.jobs)?;
            res.write_csv(&path)?;
            let GridPoint { a: ba, b: bb } = res.best;
            say!(g, "best_lambda1_exp,{ba}");
            say!(g, "best_lambda2_exp,{bb}");
            say!(g, "mean_heldout_loss,{}", res.mean_loss(res.best).unwrap_or(f64::NAN));
        }
        Estimator::Ridge => {
            let exps: Vec<i32> = (a.a_min..=a.a_max).collect();
            say!(g, "grid,{}", exps.len());
            let res = cv::cross_validate_ridge(&train, &exps, a.folds, g.seed, g.jobs)?;
            res.write_csv(&path)?;
            say!(g, "best_ridge_exp,{}", res.best);
        }
        other => {
            return Err(CliError::Usage(format!(
                "cross-validation is only defined for spr and ridge, not {other:?}"
            )))
        }
    }
    Ok(())
}

/// Loads bundles and names them by estimator, suffixing repeats.
fn load_models(dirs: &[PathBuf], p: usize) -> Result<Vec<(String, RatingsModel)>> {
    let mut out: Vec<(String, RatingsModel)> = Vec::new();
    for dir in dirs {
        let m = load_model(dir)?;
        if m.p() != p {
            return Err(CliError::Core(Error::Validation(format!(
                "model in {} rates {} players but the data has {p}",
                dir.display(),
                m.p()
            ))));
        }
        let base = m.kind.to_string();
        let mut name = base.clone();
        let mut k = 2;
        while out.iter().any(|(n, _)| *n == name) {
            name = format!("{base}-{k}");
            k += 1;
        }
        out.push((name, m));
    }
    Ok(out)
}

fn fmt_pct(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "NA".into())
}

fn evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> Result<()> {
    let inputs = a.data.load()?;
    let (test, train_ids) = a.split.test(&inputs.data)?;
    let models = load_models(&a.models, test.p())?;
    let refs: Vec<&RatingsModel> = models.iter().map(|(_, m)| m).collect();
    let preds = eval::evaluate(&refs, &test, train_ids.as_ref())?;
    let mut named_preds = Vec::new();
    let mut named_hist = Vec::new();
    let mut named_metrics: Vec<(String, Metrics)> = Vec::new();
    for ((name, _), p) in models.iter().zip(preds) {
        let errors: Vec<f64> = p.iter().map(|x| x.error).collect();
        named_hist.push((name.clone(), eval::histogram(&errors, a.bin_width)?));
        named_metrics.push((name.clone(), eval::metrics(&p)?));
        named_preds.push((name.clone(), p));
    }
    eval::write_predictions(&g.out_dir.join("predictions.csv"), &named_preds)?;
    eval::write_histogram(&g.out_dir.join("histogram.csv"), &named_hist)?;
    eval::write_metrics(&g.out_dir.join("metrics.csv"), &named_metrics)?;
    say!(g, "{:<10} {:>6} {:>8} {:>10} {:>10} {:>8}", "model", "games", "wrong%", "mean|E|", "median|E|", "rmse");
    for (name, m) in &named_metrics {
        say!(
            g,
            "{:<10} {:>6} {:>8} {:>10.3} {:>10.3} {:>8.3}",
            name,
            m.games,
            fmt_pct(m.wrong_winner_pct),
            m.mean_abs_err,
            m.median_abs_err,
            m.rmse
        );
    }
    Ok(())
}

fn bet(g: &GlobalArgs, a: &BetArgs) -> Result<()> {
    let delta = if a.robust { eval::ROBUST_DELTA } else { a.delta };
    let inputs = a.data.load()?;
    let lines = load_vegas_lines(&a.lines.clone().unwrap_or_else(|| a.data.data.join("lines.csv")))?;
    let (test, train_ids) = a.split.test(&inputs.data)?;
    let models = load_models(&a.models, test.p())?;
    let refs: Vec<&RatingsModel> = models.iter().map(|(_, m)| m).collect();
    let preds = eval::evaluate(&refs, &test, train_ids.as_ref())?;
    let mut ledgers: Vec<(String, BetLedger)> = Vec::new();
    for ((name, _), p) in models.iter().zip(preds) {
        let ledger = eval::backtest_with_break_even(&p, &lines, delta, a.break_even)?;
        ledgers.push((name.clone(), ledger));
    }
    eval::write_bets(&g.out_dir.join("bets.csv"), &ledgers)?;
    eval::write_ledgers(&g.out_dir.join("ledger.csv"), &ledgers)?;
    say!(g, "delta,{delta}");
    say!(g, "{:<10} {:>5} {:>5} {:>6} {:>6} {:>7} {:>10}", "model", "bets", "wins", "losses", "pushes", "win%", "profitable");
    for (name, l) in &ledgers {
        say!(
            g,
            "{:<10} {:>5} {:>5} {:>6} {:>6} {:>7} {:>10}",
            name,
            l.bets,
            l.wins,
            l.losses,
            l.pushes,
            fmt_pct(l.win_pct),
            l.profitable()
        );
    }
    Ok(())
}

/// The raw table, pairwise-expanded if that is what the model was fit on.
fn matching_box_scores(model: &RatingsModel, raw: BoxScoreTable) -> Result<BoxScoreTable> {
    let names = &model.spr.as_ref().expect("checked by caller").stat_names;
    if names.as_slice() == raw.stat_names() {
        return Ok(raw);
    }
    if raw.d() >= 2 {
        let expanded = poly_expand(&raw)?;
        if names.as_slice() == expanded.stat_names() {
            return Ok(expanded);
        }
    }
    Err(CliError::Core(Error::Validation(
        "box-score columns do not match the model's statistics".into(),
    )))
}

fn report(g: &GlobalArgs, a: &ReportArgs) -> Result<()> {
    if !(a.min_weight >= 0.0) {
        return Err(CliError::Usage(format!("--min-weight must be nonnegative, got {}", a.min_weight)));
    }
    let inputs = a.data.load()?;
    let data = a.split.train(&inputs.data)?;
    let model = load_model(&a.model)?;
    if model.p() != data.p() {
        return Err(CliError::Core(Error::Validation(format!(
            "model rates {} players but the data has {}",
            model.p(),
            data.p()
        ))));
    }
    let floor = data.floor_weight();
    let names = inputs.data.players();

    let top = eval::top_players(&model, &data, a.min_weight, a.top);
    let mut w = String::from("rank,player_id,name,rating_per100,possessions\n");
    for (i, (j, b)) in top.iter().enumerate() {
        writeln!(w, "{},{j},{},{},{}", i + 1, csv_field(names.name(*j).unwrap_or("")), b * PER_100, floor[*j]).unwrap();
    }
    write_text(&g.out_dir.join("top_players.csv"), &w)?;
    say!(g, "top players (per 100 possessions, min {} possessions):", a.min_weight);
    for (i, (j, b)) in top.iter().enumerate() {
        say!(g, "{:>3} {:<16} {:>8.3}", i + 1, names.name(*j).unwrap_or(""), b * PER_100);
    }

    let Some(extras) = model.spr.as_ref() else {
        warn!("{} model has no box-score weights; skipping the box-score tables", model.kind);
        return Ok(());
    };
    let r = matching_box_scores(&model, inputs.raw_box_scores()?)?;
    let rep = eval::underrated_report(&model, &r, &data, a.min_weight, a.top)?;
    eval::write_underrated(&g.out_dir.join("underrated.csv"), &rep.underrated)?;
    eval::write_underrated(&g.out_dir.join("overrated.csv"), &rep.overrated)?;
    say!(g, "most underrated (rating minus box-score rating):");
    for e in &rep.underrated {
        say!(g, "    {:<16} {:>8.3}", e.name, e.underrated * PER_100);
    }
    say!(g, "most overrated (box-score rating minus rating):");
    for e in &rep.overrated {
        say!(g, "    {:<16} {:>8.3}", e.name, -e.underrated * PER_100);
    }

    // Impact of a statistic = its mean among eligible players times its
    // original-scale weight.
    let theta = box_rating_original(&model, &r)?;
    let eligible: Vec<usize> = (0..data.p()).filter(|&j| floor[j] >= a.min_weight).collect();
    let mut w = String::from("stat,weight_std_per100,weight_original_per100,mean_value,impact_per100\n");
    writeln!(w, "(intercept),{},{},1,{}", extras.z0 * PER_100, extras.z0_original * PER_100, extras.z0_original * PER_100).unwrap();
    for (k, name) in extras.stat_names.iter().enumerate() {
        let mean = if eligible.is_empty() {
            0.0
        } else {
            eligible.iter().map(|&j| r.get(j, k)).sum::<f64>() / eligible.len() as f64
        };
        let wo = extras.z_original[k] * PER_100;
        writeln!(w, "{},{},{wo},{mean},{}", csv_field(name), extras.z[k] * PER_100, mean * wo).unwrap();
    }
    write_text(&g.out_dir.join("box_weights.csv"), &w)?;
    let mean_theta = if eligible.is_empty() {
        0.0
    } else {
        eligible.iter().map(|&j| theta[j]).sum::<f64>() / eligible.len() as f64
    };
    say!(g, "mean box-score rating of eligible players: {:.3}", mean_theta * PER_100);
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}
