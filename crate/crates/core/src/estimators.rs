//! Rating estimators behind one model type: the zero-rating dummy, weighted
//! least squares, ridge and SPR. Also box-score ratings, the pairwise
//! polynomial expansion of the box-score table and model bundles on disk.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::ccd::{self, CcdConfig, CcdTrace};
use crate::data::{standardize_columns, BoxScoreTable, RegPair, SprModel, Stint, StintSet};
use crate::error::{Error, Result};
use crate::ingest::csv_writer;
use crate::linalg;

/// Home-court advantage of the dummy estimator, points per possession
/// (3.5 per 100 possessions).
pub const DUMMY_HCA: f64 = 0.035;

/// Stat name of the intercept row in `z.csv`.
pub const INTERCEPT_ROW: &str = "(intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Dummy,
    Wls,
    Ridge,
    Spr,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Dummy => "dummy",
            EstimatorKind::Wls => "wls",
            EstimatorKind::Ridge => "ridge",
            EstimatorKind::Spr => "spr",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dummy" => Ok(EstimatorKind::Dummy),
            "wls" | "ls" => Ok(EstimatorKind::Wls),
            "ridge" => Ok(EstimatorKind::Ridge),
            "spr" => Ok(EstimatorKind::Spr),
            other => Err(Error::Validation(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Box-score weights of an SPR fit, on the fitting scale and mapped back to
/// the original statistic scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SprExtras {
    pub z0: f64,
    pub z: Vec<f64>,
    pub z0_original: f64,
    pub z_original: Vec<f64>,
    pub stat_names: Vec<String>,
    pub lambda: Option<RegPair>,
    pub trace: Option<CcdTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsModel {
    pub kind: EstimatorKind,
    pub alpha_hca: f64,
    pub beta: Vec<f64>,
    pub spr: Option<SprExtras>,
    /// The normal system was rank deficient and the minimum-norm solution
    /// was returned.
    pub singular: bool,
    pub ridge_lambda: Option<f64>,
}

impl RatingsModel {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Expected margin per possession for a lineup.
    pub fn predict_rate(&self, stint: &Stint) -> f64 {
        self.alpha_hca + stint.lineup_sum(&self.beta)
    }

    /// Expected margin over the stint's possessions.
    pub fn predict_stint(&self, stint: &Stint) -> f64 {
        stint.weight * self.predict_rate(stint)
    }

    /// Weighted quadratic loss on `data`.
    pub fn loss(&self, data: &StintSet) -> f64 {
        ccd::quadratic_loss(self.alpha_hca, &self.beta, data)
    }

    pub fn as_spr_model(&self) -> Option<SprModel> {
        self.spr.as_ref().map(|x| SprModel {
            alpha_hca: self.alpha_hca,
            beta: self.beta.clone(),
            z0: x.z0,
            z: x.z.clone(),
        })
    }
}

pub fn fit_dummy(p: usize) -> RatingsModel {
    RatingsModel {
        kind: EstimatorKind::Dummy,
        alpha_hca: DUMMY_HCA,
        beta: vec![0.0; p],
        spr: None,
        singular: false,
        ridge_lambda: None,
    }
}

/// `(G, h)` of the normal equations in `(alpha, beta)`, both divided by the
/// total weight: `G = [1 X]' W [1 X] / sum w`, `h = [1 X]' W y / sum w`.
fn normal_equations(data: &StintSet) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = data.p();
    let total = data.total_weight();
    if data.is_empty() || !(total > 0.0) {
        return Err(Error::Validation("no stint weight to fit".into()));
    }
    let mut g = DMatrix::zeros(p + 1, p + 1);
    let mut h = DVector::zeros(p + 1);
    let mut idx = Vec::with_capacity(11);
    for s in data.stints() {
        idx.clear();
        idx.push((0usize, 1.0));
        idx.extend(s.signed_players().map(|(j, v)| (j + 1, v)));
        let w = s.weight / total;
        let y = s.rate();
        for &(a, va) in &idx {
            h[a] += w * va * y;
            for &(b, vb) in &idx {
                g[(a, b)] += w * va * vb;
            }
        }
    }
    Ok((g, h))
}

/// The intercept is unpenalized, so it is profiled out: with weighted means
/// `m = g[0, 1..]` and `ybar = h[0]`, `beta` solves `(G_xx - m m' + lambda I)
/// beta = h_x - ybar m` and `alpha = ybar - m' beta`. Solving the reduced
/// system keeps its conditioning independent of `lambda`.
fn solve_penalized(data: &StintSet, lambda: f64) -> Result<(f64, Vec<f64>, bool)> {
    let p = data.p();
    let (g, h) = normal_equations(data)?;
    let m = g.view((0, 1), (1, p)).transpose();
    let ybar = h[0];
    let mut a = g.view((1, 1), (p, p)) - &m * m.transpose();
    for k in 0..p {
        a[(k, k)] += lambda;
    }
    let rhs = h.rows(1, p) - &m * ybar;
    let (beta, rank) = linalg::min_norm_lstsq(&a, &rhs)?;
    let alpha = ybar - m.dot(&beta);
    if !alpha.is_finite() || beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("least-squares solution is not finite".into()));
    }
    Ok((alpha, beta.iter().copied().collect(), rank < p))
}

/// Weighted least squares (adjusted plus-minus). Lineup rows always sum to
/// zero, so the system is rank deficient along `beta + c 1`; the minimum-norm
/// solution is returned and `singular` is set.
pub fn fit_wls(data: &StintSet) -> Result<RatingsModel> {
    let (alpha, beta, singular) = solve_penalized(data, 0.0)?;
    Ok(RatingsModel {
        kind: EstimatorKind::Wls,
        alpha_hca: alpha,
        beta,
        spr: None,
        singular,
        ridge_lambda: None,
    })
}

/// Minimizes the weighted loss plus `lambda ||beta||_2^2`; the intercept is
/// not penalized.
pub fn fit_ridge(data: &StintSet, lambda: f64) -> Result<RatingsModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Validation(format!("ridge lambda must be nonnegative, got {lambda}")));
    }
    let (alpha, beta, singular) = solve_penalized(data, lambda)?;
    Ok(RatingsModel {
        kind: EstimatorKind::Ridge,
        alpha_hca: alpha,
        beta,
        spr: None,
        singular,
        ridge_lambda: Some(lambda),
    })
}

fn spr_model(r: &BoxScoreTable, fit: SprModel, trace: CcdTrace, lam: RegPair) -> RatingsModel {
    let (z0_original, z_original) = r.weights_to_original(fit.z0, &fit.z);
    RatingsModel {
        kind: EstimatorKind::Spr,
        alpha_hca: fit.alpha_hca,
        beta: fit.beta,
        spr: Some(SprExtras {
            z0: fit.z0,
            z: fit.z,
            z0_original,
            z_original,
            stat_names: r.stat_names().to_vec(),
            lambda: Some(lam),
            trace: Some(trace),
        }),
        singular: false,
        ridge_lambda: None,
    }
}

pub fn fit_spr(
    data: &StintSet,
    r: &BoxScoreTable,
    lam: RegPair,
    cfg: &CcdConfig,
) -> Result<RatingsModel> {
    let (fit, trace) = ccd::run_ccd(data, r, lam, cfg)?;
    Ok(spr_model(r, fit, trace, lam))
}

/// SPR fit started from a previous solution.
pub fn fit_spr_warm(
    data: &StintSet,
    r: &BoxScoreTable,
    lam: RegPair,
    cfg: &CcdConfig,
    init: &SprModel,
) -> Result<RatingsModel> {
    let (fit, trace) = ccd::run_ccd_warm(data, r, lam, cfg, init)?;
    Ok(spr_model(r, fit, trace, lam))
}

fn spr_extras<'a>(model: &'a RatingsModel, r: &BoxScoreTable) -> Result<&'a SprExtras> {
    let x = model
        .spr
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("{} model has no box-score weights", model.kind)))?;
    if r.p() != model.p() || r.d() != x.z.len() || r.stat_names() != x.stat_names.as_slice() {
        return Err(Error::Validation(
            "box-score table does not match the one used for fitting".into(),
        ));
    }
    Ok(x)
}

/// `theta = R z + z0 1` with `R` the table the model was fitted on.
pub fn box_rating(model: &RatingsModel, r: &BoxScoreTable) -> Result<Vec<f64>> {
    let x = spr_extras(model, r)?;
    Ok(r.mul_vec(&x.z).into_iter().map(|v| v + x.z0).collect())
}

/// `theta` from the original-scale statistics and the back-mapped weights.
/// Accepts either the fitting table or its original-scale counterpart.
pub fn box_rating_original(model: &RatingsModel, r: &BoxScoreTable) -> Result<Vec<f64>> {
    let x = spr_extras(model, r)?;
    let orig = r.to_original_scale();
    Ok(orig
        .mul_vec(&x.z_original)
        .into_iter()
        .map(|v| v + x.z0_original)
        .collect())
}

/// Appends all products of distinct column pairs `(i < j)` in lexicographic
/// order, named `a*b`. Products are taken on the original scale; the result
/// is restandardized when the input was standardized.
pub fn poly_expand(r: &BoxScoreTable) -> Result<BoxScoreTable> {
    let d = r.d();
    if d < 2 {
        return Err(Error::Validation("polynomial expansion needs at least two columns".into()));
    }
    let orig = r.to_original_scale();
    let names = orig.stat_names();
    let mut out_names: Vec<String> = names.to_vec();
    for i in 0..d {
        for j in i + 1..d {
            out_names.push(format!("{}*{}", names[i], names[j]));
        }
    }
    let width = out_names.len();
    let mut data = Vec::with_capacity(orig.p() * width);
    for k in 0..orig.p() {
        let row = orig.row(k);
        data.extend_from_slice(row);
        for i in 0..d {
            for j in i + 1..d {
                data.push(row[i] * row[j]);
            }
        }
    }
    let expanded = BoxScoreTable::new(orig.p(), out_names, data)?;
    if r.is_standardized() {
        standardize_columns(&expanded)
    } else {
        Ok(expanded)
    }
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<(u64, csv::StringRecord)>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let to_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::parse(path, line, e.to_string())
    };
    let header = rdr.headers().map_err(to_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(to_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn parse_f64(path: &Path, line: u64, raw: &str) -> Result<f64> {
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse `{raw}` as a number")))
}

fn check_header(path: &Path, got: &[String], want: &[&str]) -> Result<()> {
    if got != want {
        return Err(Error::parse(path, 1, format!("expected header `{}`", want.join(","))));
    }
    Ok(())
}

/// Writes `model_meta.csv`, `beta.csv` and, for SPR models, `z.csv` into `dir`.
pub fn save_model(dir: &Path, model: &RatingsModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let wr = |path: &Path, rows: Vec<Vec<String>>| -> Result<()> {
        let mut w = csv_writer(path)?;
        for row in rows {
            w.write_record(&row)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    };
    let z0 = model.spr.as_ref().map(|x| x.z0.to_string()).unwrap_or_default();
    wr(
        &dir.join("model_meta.csv"),
        vec![
            vec!["kind".into(), "alpha".into(), "z0".into()],
            vec![model.kind.to_string(), model.alpha_hca.to_string(), z0],
        ],
    )?;
    let mut beta = vec![vec!["player_id".to_string(), "beta".to_string()]];
    beta.extend(model.beta.iter().enumerate().map(|(i, b)| vec![i.to_string(), b.to_string()]));
    wr(&dir.join("beta.csv"), beta)?;
    let z_path = dir.join("z.csv");
    if let Some(x) = &model.spr {
        let mut rows = vec![vec![
            "stat".to_string(),
            "weight_std".to_string(),
            "weight_original_scale".to_string(),
        ]];
        rows.push(vec![INTERCEPT_ROW.into(), x.z0.to_string(), x.z0_original.to_string()]);
        for ((name, zs), zo) in x.stat_names.iter().zip(&x.z).zip(&x.z_original) {
            rows.push(vec![name.clone(), zs.to_string(), zo.to_string()]);
        }
        wr(&z_path, rows)?;
    } else if z_path.exists() {
        std::fs::remove_file(&z_path).map_err(|e| Error::io(&z_path, e))?;
    }
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<RatingsModel> {
    let meta_path = dir.join("model_meta.csv");
    let (header, rows) = read_csv(&meta_path)?;
    check_header(&meta_path, &header, &["kind", "alpha", "z0"])?;
    let (line, meta) = rows
        .first()
        .ok_or_else(|| Error::parse(&meta_path, 2, "missing model row"))?;
    let kind: EstimatorKind = meta[0]
        .parse()
        .map_err(|e: Error| Error::parse(&meta_path, *line, e.to_string()))?;
    let alpha_hca = parse_f64(&meta_path, *line, &meta[1])?;

    let beta_path = dir.join("beta.csv");
    let (header, rows) = read_csv(&beta_path)?;
    check_header(&beta_path, &header, &["player_id", "beta"])?;
    let mut beta = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let id: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(&beta_path, *line, "bad player id"))?;
        if id != beta.len() {
            return Err(Error::parse(&beta_path, *line, "player ids must be dense and ordered"));
        }
        beta.push(parse_f64(&beta_path, *line, &rec[1])?);
    }

    let spr = if kind == EstimatorKind::Spr {
        let z_path = dir.join("z.csv");
        let (header, rows) = read_csv(&z_path)?;
        check_header(&z_path, &header, &["stat", "weight_std", "weight_original_scale"])?;
        let mut extras = SprExtras {
            z0: parse_f64(&meta_path, *line, &meta[2])?,
            z: Vec::new(),
            z0_original: 0.0,
            z_original: Vec::new(),
            stat_names: Vec::new(),
            lambda: None,
            trace: None,
        };
        for (line, rec) in &rows {
            let zs = parse_f64(&z_path, *line, &rec[1])?;
            let zo = parse_f64(&z_path, *line, &rec[2])?;
            if &rec[0] == INTERCEPT_ROW {
                extras.z0_original = zo;
            } else {
                extras.stat_names.push(rec[0].to_string());
                extras.z.push(zs);
                extras.z_original.push(zo);
            }
        }
        Some(extras)
    } else {
        None
    };
    Ok(RatingsModel {
        kind,
        alpha_hca,
        beta,
        spr,
        singular: false,
        ridge_lambda: None,
    })
}
