//! Core domain types: players, stints, box-score tables and fitted models.
//!
//! Ratings are expressed in points per possession internally. A stint's
//! `weight` is its possession count and its `margin` is the home-minus-away
//! point differential over the stint, so the regression response is the
//! margin rate `margin / weight`.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Number of players each side has on the floor.
pub const LINEUP_SIZE: usize = 5;

/// Reports multiply internal per-possession ratings by this factor.
pub const PER_100: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerTable {
    names: Vec<String>,
}

impl PlayerTable {
    /// Smallest league that can field a single stint.
    pub const MIN_LEAGUE: usize = 2 * LINEUP_SIZE;

    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Validation("player table is empty".into()));
        }
        Ok(PlayerTable { names })
    }

    /// Builds a table with generated names `P000`, `P001`, ...
    pub fn numbered(p: usize) -> Result<Self> {
        Self::new((0..p).map(|i| format!("P{i:03}")).collect())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, idx: usize) -> Option<&str> {
        self.names.get(idx).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One lineup event: ten players on the floor for `weight` possessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Stint {
    pub game_id: u64,
    pub home: [usize; LINEUP_SIZE],
    pub away: [usize; LINEUP_SIZE],
    pub weight: f64,
    pub margin: f64,
}

impl Stint {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::Validation(format!(
                "stint weight must be positive, got {}",
                self.weight
            )));
        }
        if !self.margin.is_finite() {
            return Err(Error::Validation("stint margin is not finite".into()));
        }
        for &j in self.home.iter().chain(self.away.iter()) {
            if j >= p {
                return Err(Error::Data(format!("player index {j} out of range (p = {p})")));
            }
        }
        let mut seen = HashSet::with_capacity(2 * LINEUP_SIZE);
        for &j in self.home.iter().chain(self.away.iter()) {
            if !seen.insert(j) {
                return Err(Error::Validation(format!(
                    "player {j} appears more than once in a stint"
                )));
            }
        }
        Ok(())
    }

    /// Regression response: points per possession.
    pub fn rate(&self) -> f64 {
        self.margin / self.weight
    }

    /// Signed nonzeros of the design row: `+1` for home, `-1` for away.
    pub fn signed_players(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.home
            .iter()
            .map(|&j| (j, 1.0))
            .chain(self.away.iter().map(|&j| (j, -1.0)))
    }

    /// `X_i^T beta` for this stint.
    pub fn lineup_sum(&self, beta: &[f64]) -> f64 {
        let home: f64 = self.home.iter().map(|&j| beta[j]).sum();
        let away: f64 = self.away.iter().map(|&j| beta[j]).sum();
        home - away
    }
}

/// Sparse design row: the ten signed nonzeros of `X_i`, home first.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub len: usize,
    pub entries: Vec<(usize, f64)>,
}

impl DesignRow {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        for &(j, s) in &self.entries {
            v[j] = s;
        }
        v
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, s)| s * x[j]).sum()
    }
}

pub fn build_design_row(stint: &Stint, p: usize) -> Result<DesignRow> {
    stint.validate(p)?;
    Ok(DesignRow {
        len: p,
        entries: stint.signed_players().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StintSet {
    stints: Vec<Stint>,
    players: PlayerTable,
}

impl StintSet {
    /// Validates every stint and requires each game's stints to be adjacent.
    pub fn new(stints: Vec<Stint>, players: PlayerTable) -> Result<Self> {
        let p = players.len();
        if !stints.is_empty() && p < PlayerTable::MIN_LEAGUE {
            return Err(Error::Validation(format!(
                "stints need a league of at least {} players, got {p}",
                PlayerTable::MIN_LEAGUE
            )));
        }
        let mut closed = HashSet::new();
        let mut current: Option<u64> = None;
        for s in &stints {
            s.validate(p)?;
            if current != Some(s.game_id) {
                if let Some(prev) = current {
                    closed.insert(prev);
                }
                if closed.contains(&s.game_id) {
                    return Err(Error::Validation(format!(
                        "stints of game {} are not contiguous",
                        s.game_id
                    )));
                }
                current = Some(s.game_id);
            }
        }
        Ok(StintSet { stints, players })
    }

    /// Like [`StintSet::new`] but first regroups stints stably by game, with
    /// games ordered by first appearance.
    pub fn new_regrouped(stints: Vec<Stint>, players: PlayerTable) -> Result<Self> {
        let mut order: Vec<u64> = Vec::new();
        let mut rank = std::collections::HashMap::new();
        for s in &stints {
            rank.entry(s.game_id).or_insert_with(|| {
                order.push(s.game_id);
                order.len() - 1
            });
        }
        let mut stints = stints;
        stints.sort_by_key(|s| rank[&s.game_id]);
        Self::new(stints, players)
    }

    pub fn stints(&self) -> &[Stint] {
        &self.stints
    }

    pub fn players(&self) -> &PlayerTable {
        &self.players
    }

    pub fn p(&self) -> usize {
        self.players.len()
    }

    pub fn len(&self) -> usize {
        self.stints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stints.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.stints.iter().map(|s| s.weight).sum()
    }

    /// Game ids in order of appearance.
    pub fn game_ids(&self) -> Vec<u64> {
        self.games().map(|(id, _)| id).collect()
    }

    /// Iterates over `(game_id, stints of that game)`.
    pub fn games(&self) -> impl Iterator<Item = (u64, &[Stint])> + '_ {
        self.stints
            .chunk_by(|a, b| a.game_id == b.game_id)
            .map(|chunk| (chunk[0].game_id, chunk))
    }

    /// Keeps the stints whose game satisfies `keep`, preserving order.
    pub fn filter_games(&self, mut keep: impl FnMut(u64) -> bool) -> StintSet {
        StintSet {
            stints: self
                .stints
                .iter()
                .filter(|s| keep(s.game_id))
                .cloned()
                .collect(),
            players: self.players.clone(),
        }
    }

    /// Splits into the first `n` games and the rest.
    pub fn split_first_games(&self, n: usize) -> (StintSet, StintSet) {
        let head: HashSet<u64> = self.game_ids().into_iter().take(n).collect();
        (
            self.filter_games(|g| head.contains(&g)),
            self.filter_games(|g| !head.contains(&g)),
        )
    }

    /// Total possessions each player spent on the floor.
    pub fn floor_weight(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.p()];
        for s in &self.stints {
            for (j, _) in s.signed_players() {
                out[j] += s.weight;
            }
        }
        out
    }
}

/// Affine map applied to one box-score column: `standardized = (x - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnTransform {
    pub shift: f64,
    pub scale: f64,
    /// Column had zero variance; its standardized values are all zero.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Standardization {
    Identity,
    Columns(Vec<ColumnTransform>),
}

/// `p x d` matrix of per-player statistics, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxScoreTable {
    p: usize,
    d: usize,
    data: Vec<f64>,
    stat_names: Vec<String>,
    standardization: Standardization,
}

impl BoxScoreTable {
    pub fn new(p: usize, stat_names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let d = stat_names.len();
        if data.len() != p * d {
            return Err(Error::Validation(format!(
                "box-score data has {} entries, expected {p} x {d}",
                data.len()
            )));
        }
        Ok(BoxScoreTable {
            p,
            d,
            data,
            stat_names,
            standardization: Standardization::Identity,
        })
    }

    pub fn from_rows(stat_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = stat_names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Validation(format!("row {bad} does not have {d} columns")));
        }
        Self::new(rows.len(), stat_names, rows.concat())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.d + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.d..(row + 1) * self.d]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.p).map(|i| self.get(i, col)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn stat_names(&self) -> &[String] {
        &self.stat_names
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn is_standardized(&self) -> bool {
        matches!(self.standardization, Standardization::Columns(_))
    }

    /// `R z` as a length-`p` vector.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.d);
        (0..self.p)
            .map(|i| self.row(i).iter().zip(z).map(|(r, w)| r * w).sum())
            .collect()
    }

    /// Undoes the recorded standardization, returning an identity-standardized
    /// table on the original scale.
    pub fn to_original_scale(&self) -> BoxScoreTable {
        match &self.standardization {
            Standardization::Identity => self.clone(),
            Standardization::Columns(ts) => {
                let mut data = self.data.clone();
                for i in 0..self.p {
                    for (j, t) in ts.iter().enumerate() {
                        let x = &mut data[i * self.d + j];
                        *x = if t.constant { t.shift } else { *x * t.scale + t.shift };
                    }
                }
                BoxScoreTable {
                    p: self.p,
                    d: self.d,
                    data,
                    stat_names: self.stat_names.clone(),
                    standardization: Standardization::Identity,
                }
            }
        }
    }

    /// Maps weights fitted on this (standardized) table back to the original
    /// column scale: returns `(z0_original, z_original)` such that
    /// `R_orig z_original + z0_original == R_std z + z0`.
    pub fn weights_to_original(&self, z0: f64, z: &[f64]) -> (f64, Vec<f64>) {
        match &self.standardization {
            Standardization::Identity => (z0, z.to_vec()),
            Standardization::Columns(ts) => {
                let mut z0_orig = z0;
                let z_orig = ts
                    .iter()
                    .zip(z)
                    .map(|(t, &w)| {
                        if t.constant {
                            0.0
                        } else {
                            z0_orig -= w * t.shift / t.scale;
                            w / t.scale
                        }
                    })
                    .collect();
                (z0_orig, z_orig)
            }
        }
    }
}

pub fn aggregate_box_scores(per_game: &[BoxScoreTable]) -> Result<BoxScoreTable> {
    let first = per_game
        .first()
        .ok_or_else(|| Error::Validation("no box-score matrices to aggregate".into()))?;
    let mut acc = vec![0.0; first.data.len()];
    for (g, m) in per_game.iter().enumerate() {
        if m.p != first.p || m.d != first.d || m.stat_names != first.stat_names {
            return Err(Error::Validation(format!(
                "box-score matrix {g} is {}x{}, expected {}x{} with the same columns",
                m.p, m.d, first.p, first.d
            )));
        }
        for (a, x) in acc.iter_mut().zip(&m.data) {
            *a += x;
        }
    }
    BoxScoreTable::new(first.p, first.stat_names.clone(), acc)
}

/// Centers each column and scales it to unit sample standard deviation.
/// Zero-variance columns become all zeros and are flagged. A table that is
/// already standardized is first mapped back to its original scale.
pub fn standardize_columns(table: &BoxScoreTable) -> Result<BoxScoreTable> {
    let orig = table.to_original_scale();
    let (p, d) = (orig.p, orig.d);
    if d == 0 {
        return Err(Error::Validation("box-score table has no columns".into()));
    }
    if p < 2 {
        return Err(Error::Validation("standardization needs at least two rows".into()));
    }
    let mut data = orig.data.clone();
    let mut transforms = Vec::with_capacity(d);
    for j in 0..d {
        let col = orig.column(j);
        let mean = col.iter().sum::<f64>() / p as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (p - 1) as f64;
        let sd = var.sqrt();
        let constant = !(sd > 1e-12 * mean.abs().max(1.0));
        let scale = if constant { 1.0 } else { sd };
        for i in 0..p {
            data[i * d + j] = if constant { 0.0 } else { (col[i] - mean) / scale };
        }
        transforms.push(ColumnTransform {
            shift: mean,
            scale,
            constant,
        });
    }
    Ok(BoxScoreTable {
        p,
        d,
        data,
        stat_names: orig.stat_names,
        standardization: Standardization::Columns(transforms),
    })
}

/// The regularization pair `(lambda1, lambda2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegPair {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl RegPair {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(RegPair { lambda1, lambda2 })
    }

    /// `(2^a, 2^b)`.
    pub fn from_exponents(a: i32, b: i32) -> Self {
        RegPair {
            lambda1: 2f64.powi(a),
            lambda2: 2f64.powi(b),
        }
    }

    pub fn zero() -> Self {
        RegPair {
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }
}

/// Decision variables of the SPR objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SprModel {
    pub alpha_hca: f64,
    pub beta: Vec<f64>,
    pub z0: f64,
    pub z: Vec<f64>,
}

impl SprModel {
    pub fn zeros(p: usize, d: usize) -> Self {
        SprModel {
            alpha_hca: 0.0,
            beta: vec![0.0; p],
            z0: 0.0,
            z: vec![0.0; d],
        }
    }

    /// `z0 * 1 + R z`.
    pub fn box_prediction(&self, r: &BoxScoreTable) -> Vec<f64> {
        r.mul_vec(&self.z).into_iter().map(|x| x + self.z0).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha_hca.is_finite()
            && self.z0.is_finite()
            && self.beta.iter().all(|x| x.is_finite())
            && self.z.iter().all(|x| x.is_finite())
    }
}
