//! Ground-truth league generator and brute-force oracles.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{BoxScoreTable, PlayerTable, SprModel, Stint, StintSet, LINEUP_SIZE};
use crate::error::{Error, Result};
use crate::ingest::{self, VegasLines};
use crate::linalg;

/// Standard deviation of the noise added to synthetic lines, in points.
pub const LINE_NOISE_SD: f64 = 2.0;

/// Size guards for [`quadratic_oracle`].
pub const ORACLE_MAX_PLAYERS: usize = 50;
pub const ORACLE_MAX_STINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub alpha_star: f64,
    pub beta_star: Vec<f64>,
    pub z0_star: f64,
    /// Weights on the original (unstandardized) box-score scale.
    pub z_star: Vec<f64>,
    pub spike_support: Vec<usize>,
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonSpec {
    pub players: usize,
    pub stats: usize,
    pub games: usize,
    pub stints_per_game: usize,
    pub spikes: usize,
    pub noise_sd: f64,
    /// Players per side dressed for a game, capped at `p / 2`; stints draw
    /// lineups from them.
    pub rotation: usize,
    pub seed: u64,
}

impl Default for SeasonSpec {
    fn default() -> Self {
        SeasonSpec {
            players: 60,
            stats: 10,
            games: 600,
            stints_per_game: 10,
            spikes: 6,
            noise_sd: 1.0,
            rotation: LINEUP_SIZE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeason {
    pub stints: StintSet,
    pub box_scores: BoxScoreTable,
    pub lines: VegasLines,
    pub truth: SyntheticTruth,
}

impl SyntheticSeason {
    /// Writes `players.csv`, `stints.csv`, `box_scores.csv`, `lines.csv` and
    /// `truth.csv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        ingest::write_players(&dir.join("players.csv"), self.stints.players())?;
        ingest::write_stints(&dir.join("stints.csv"), &self.stints)?;
        ingest::write_box_scores(&dir.join("box_scores.csv"), &self.box_scores)?;
        ingest::write_vegas_lines(&dir.join("lines.csv"), &self.lines)?;
        let mut w = ingest::csv_writer(&dir.join("truth.csv"))?;
        let path = dir.join("truth.csv");
        let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(["player_id", "beta_star", "spike"]).map_err(err)?;
        for (j, b) in self.truth.beta_star.iter().enumerate() {
            let spike = self.truth.spike_support.contains(&j);
            w.write_record([j.to_string(), b.to_string(), (spike as u8).to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a season from the linear lineup model with ratings
/// `beta* = z0* 1 + R z* + s`, where `s` is a sparse vector of positive
/// spikes. `z0*` is set so that `beta*` sums to zero: lineup rows have five
/// `+1` and five `-1`, so only the component of `beta` orthogonal to `1` is
/// identifiable from the data.
///
/// Every game dresses two disjoint rotations drawn from the whole league, and
/// each stint puts five of each rotation on the floor. Lineups are coherent
/// within a game but vary across games, so game margins depend on individual
/// ratings rather than on a few fixed team sums.
pub fn generate_season(spec: &SeasonSpec) -> Result<SyntheticSeason> {
    let SeasonSpec {
        players: p,
        stats: d,
        games,
        stints_per_game,
        spikes,
        noise_sd,
        rotation,
        seed,
    } = *spec;
    if p < 2 * LINEUP_SIZE {
        return Err(Error::Validation(format!("need at least 10 players, got {p}")));
    }
    if rotation < LINEUP_SIZE {
        return Err(Error::Validation(format!("rotation of {rotation} is smaller than a lineup")));
    }
    let rotation = rotation.min(p / 2);
    if spikes > p {
        return Err(Error::Validation(format!("{spikes} spikes requested for {p} players")));
    }
    if d == 0 || games == 0 || stints_per_game == 0 {
        return Err(Error::Validation("stats, games and stints per game must be positive".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Validation("noise_sd must be finite and nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // box scores: nonnegative per-player rates
    let means: Vec<f64> = (0..d).map(|_| rng.random_range(2.0..10.0)).collect();
    let mut data = Vec::with_capacity(p * d);
    for _ in 0..p {
        for &m in &means {
            data.push((m + m / 3.0 * normal(&mut rng)).max(0.0));
        }
    }
    let stat_names = (0..d).map(|j| format!("stat{j:02}")).collect();
    let box_scores = BoxScoreTable::new(p, stat_names, data)?;

    let z_star: Vec<f64> = means
        .iter()
        .map(|m| normal(&mut rng) * 0.05 / (d as f64).sqrt() / (m / 3.0))
        .collect();
    let rz = box_scores.mul_vec(&z_star);
    let rz_mean = rz.iter().sum::<f64>() / p as f64;
    let typical = (rz.iter().map(|x| (x - rz_mean).powi(2)).sum::<f64>() / p as f64).sqrt();
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut spike_support: Vec<usize> = order[..spikes].to_vec();
    spike_support.sort_unstable();
    let mut s = vec![0.0; p];
    for &j in &spike_support {
        s[j] = 3.0 * typical.max(1e-3) * rng.random_range(1.0..1.5);
    }
    let z0_star = -(0..p).map(|j| rz[j] + s[j]).sum::<f64>() / p as f64;
    let beta_star: Vec<f64> = (0..p).map(|j| z0_star + rz[j] + s[j]).collect();
    let alpha_star = rng.random_range(0.02..0.05);

    let mut stints = Vec::with_capacity(games * stints_per_game);
    let mut lines = BTreeMap::new();
    let mut order: Vec<usize> = (0..p).collect();
    for g in 0..games {
        order.shuffle(&mut rng);
        let (home_pool, away_pool) = order[..2 * rotation].split_at(rotation);
        let mut expected = 0.0;
        for _ in 0..stints_per_game {
            let pick = |pool: &[usize], rng: &mut ChaCha8Rng| -> [usize; LINEUP_SIZE] {
                let mut v: Vec<usize> = pool.choose_multiple(rng, LINEUP_SIZE).copied().collect();
                v.sort_unstable();
                v.try_into().expect("pool has at least five players")
            };
            let home = pick(home_pool, &mut rng);
            let away = pick(away_pool, &mut rng);
            let weight = rng.random_range(2..=15) as f64;
            let mut stint = Stint {
                game_id: g as u64,
                home,
                away,
                weight,
                margin: 0.0,
            };
            let mean = weight * (alpha_star + stint.lineup_sum(&beta_star));
            expected += mean;
            stint.margin = mean + noise_sd * weight.sqrt() * normal(&mut rng);
            stints.push(stint);
        }
        lines.insert(g as u64, expected + LINE_NOISE_SD * normal(&mut rng));
    }

    Ok(SyntheticSeason {
        stints: StintSet::new(stints, PlayerTable::numbered(p)?)?,
        box_scores,
        lines: VegasLines::new(lines)?,
        truth: SyntheticTruth {
            alpha_star,
            beta_star,
            z0_star,
            z_star,
            spike_support,
            noise_sd,
            seed,
        },
    })
}

/// Exact minimizer of the SPR objective with `lambda1 = 0`, obtained from one
/// dense minimum-norm least-squares solve over the stacked variables
/// `(alpha, beta, z0, z)`.
pub fn quadratic_oracle(data: &StintSet, r: &BoxScoreTable, lambda2: f64) -> Result<SprModel> {
    let (p, d, n) = (data.p(), r.d(), data.len());
    if p > ORACLE_MAX_PLAYERS || n > ORACLE_MAX_STINTS {
        return Err(Error::Validation(format!(
            "oracle refused: p = {p}, n = {n} exceeds ({ORACLE_MAX_PLAYERS}, {ORACLE_MAX_STINTS})"
        )));
    }
    if r.p() != p {
        return Err(Error::Validation("box-score rows do not match players".into()));
    }
    if !(lambda2 >= 0.0 && lambda2.is_finite()) {
        return Err(Error::Validation("lambda2 must be finite and nonnegative".into()));
    }
    let total = data.total_weight();
    let cols = p + d + 2;
    let mut a = DMatrix::zeros(n + p, cols);
    let mut b = DVector::zeros(n + p);
    for (i, s) in data.stints().iter().enumerate() {
        let sw = (s.weight / total).sqrt();
        a[(i, 0)] = sw;
        for &j in &s.home {
            a[(i, 1 + j)] = sw;
        }
        for &j in &s.away {
            a[(i, 1 + j)] = -sw;
        }
        b[i] = sw * s.margin / s.weight;
    }
    let sl = lambda2.sqrt();
    for k in 0..p {
        let row = n + k;
        a[(row, 1 + k)] = sl;
        a[(row, 1 + p)] = -sl;
        for j in 0..d {
            a[(row, 2 + p + j)] = -sl * r.get(k, j);
        }
    }
    let (x, _) = linalg::min_norm_lstsq(&a, &b)?;
    Ok(SprModel {
        alpha_hca: x[0],
        beta: x.rows(1, p).iter().copied().collect(),
        z0: x[1 + p],
        z: x.rows(2 + p, d).iter().copied().collect(),
    })
}

/// Minimizes `f` over the grid `lo, lo + step, ..., <= hi`; ties go to the
/// smallest point.
pub fn grid_minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    assert!(lo < hi && step > 0.0, "invalid grid");
    let n = ((hi - lo) / step + 1e-9).floor() as u64;
    let mut best_x = lo;
    let mut best = f(lo);
    for i in 1..=n {
        let x = lo + i as f64 * step;
        let v = f(x);
        if v < best {
            best = v;
            best_x = x;
        }
    }
    best_x
}
