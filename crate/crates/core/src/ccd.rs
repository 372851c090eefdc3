//! Cyclical coordinate descent for the SPR objective
//!
//! ```text
//! g(alpha, beta, z0, z) = L(alpha, beta) + lambda1 ||beta||_1 + lambda2 ||beta - z0 1 - R z||_2^2
//! L(alpha, beta)        = (1 / sum w) sum_i w_i (y_i - alpha - x_i' beta)^2
//! ```
//!
//! Every coordinate (or block) update is an exact minimizer with the other
//! variables held fixed, so the objective never increases across a sweep.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::data::{BoxScoreTable, RegPair, SprModel, StintSet};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct CcdConfig {
    pub max_sweeps: usize,
    /// Stop once `(g_prev - g) / g_prev` drops below this.
    pub rel_tol: f64,
    /// Compute the subgradient residual at the end of the fit and require it
    /// to be below `kkt_tol` before declaring convergence.
    pub check_kkt: bool,
    pub kkt_tol: f64,
}

impl Default for CcdConfig {
    fn default() -> Self {
        CcdConfig {
            max_sweeps: 10_000,
            rel_tol: 1e-8,
            check_kkt: true,
            kkt_tol: 1e-7,
        }
    }
}

impl CcdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::Validation("max_sweeps must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Validation(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::Validation("kkt_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcdTrace {
    /// Objective at the starting point, before the first sweep.
    pub initial_objective: f64,
    /// Objective after each completed sweep.
    pub objective_per_sweep: Vec<f64>,
    pub sweeps_run: usize,
    pub converged: bool,
    pub kkt_residual: Option<f64>,
    /// Players pinned at zero because they never appear and `lambda2 == 0`.
    pub pinned_players: Vec<usize>,
}

impl CcdTrace {
    pub fn final_objective(&self) -> f64 {
        self.objective_per_sweep
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }
}

/// Weighted quadratic loss of `(alpha, beta)` on the stint rates.
pub fn quadratic_loss(alpha: f64, beta: &[f64], data: &StintSet) -> f64 {
    let total = data.total_weight();
    data.stints()
        .iter()
        .map(|s| {
            let r = s.rate() - alpha - s.lineup_sum(beta);
            s.weight * r * r
        })
        .sum::<f64>()
        / total
}

pub fn objective(model: &SprModel, data: &StintSet, r: &BoxScoreTable, lam: RegPair) -> f64 {
    let loss = quadratic_loss(model.alpha_hca, &model.beta, data);
    let l1: f64 = model.beta.iter().map(|b| b.abs()).sum();
    let theta = model.box_prediction(r);
    let prior: f64 = model
        .beta
        .iter()
        .zip(&theta)
        .map(|(b, t)| (b - t).powi(2))
        .sum();
    loss + lam.lambda1 * l1 + lam.lambda2 * prior
}

/// Soft-thresholding `S_tau(x)`.
pub fn soft_threshold(tau: f64, x: f64) -> f64 {
    debug_assert!(tau >= 0.0);
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Minimizer of `a/2 x^2 - b x + tau |x|` for `a > 0`.
pub fn solve_1d_lasso(a: f64, b: f64, tau: f64) -> f64 {
    debug_assert!(a > 0.0);
    soft_threshold(tau, b) / a
}

/// Mutable iterate plus the cached quantities the updates need.
#[derive(Debug, Clone)]
pub struct CcdState {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub z0: f64,
    pub z: Vec<f64>,
    /// `y_i - alpha - x_i' beta` per stint.
    residual: Vec<f64>,
    /// `R z`.
    rz: Vec<f64>,
}

impl CcdState {
    pub fn model(&self) -> SprModel {
        SprModel {
            alpha_hca: self.alpha,
            beta: self.beta.clone(),
            z0: self.z0,
            z: self.z.clone(),
        }
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// `theta_k = z0 + (R z)_k`.
    pub fn theta(&self, k: usize) -> f64 {
        self.z0 + self.rz[k]
    }
}

/// One SPR instance with the per-player column structure precomputed.
pub struct SprProblem<'a> {
    data: &'a StintSet,
    r: &'a BoxScoreTable,
    y: Vec<f64>,
    w: Vec<f64>,
    total_weight: f64,
    /// Per player: `(stint index, sign)` of the nonzeros of column `X e_k`.
    columns: Vec<Vec<(u32, f64)>>,
    /// `e_k' X' W X e_k`.
    col_sq: Vec<f64>,
    /// Pseudo-inverse of `R` (`d x p`).
    r_pinv: DMatrix<f64>,
    r_rank: usize,
}

impl<'a> SprProblem<'a> {
    pub fn new(data: &'a StintSet, r: &'a BoxScoreTable) -> Result<Self> {
        let p = data.p();
        if r.p() != p {
            return Err(Error::Validation(format!(
                "box-score table has {} rows but the league has {p} players",
                r.p()
            )));
        }
        if data.is_empty() {
            return Err(Error::Validation("no stints to fit".into()));
        }
        let total_weight = data.total_weight();
        if !(total_weight > 0.0) {
            return Err(Error::Validation("total stint weight must be positive".into()));
        }
        let n = data.len();
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut columns = vec![Vec::new(); p];
        let mut col_sq = vec![0.0; p];
        for (i, s) in data.stints().iter().enumerate() {
            y.push(s.rate());
            w.push(s.weight);
            for (j, sign) in s.signed_players() {
                columns[j].push((i as u32, sign));
                col_sq[j] += s.weight;
            }
        }
        let rm = DMatrix::from_row_slice(p, r.d(), r.as_slice());
        let (r_pinv, r_rank) = linalg::pseudo_inverse(&rm)?;
        Ok(SprProblem {
            data,
            r,
            y,
            w,
            total_weight,
            columns,
            col_sq,
            r_pinv,
            r_rank,
        })
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn d(&self) -> usize {
        self.r.d()
    }

    pub fn data(&self) -> &StintSet {
        self.data
    }

    pub fn box_scores(&self) -> &BoxScoreTable {
        self.r
    }

    /// Numerical rank of `R`; below `d` the z-update returns the minimum-norm
    /// minimizer.
    pub fn box_rank(&self) -> usize {
        self.r_rank
    }

    pub fn state_from(&self, model: &SprModel) -> Result<CcdState> {
        if model.beta.len() != self.p() || model.z.len() != self.d() {
            return Err(Error::Validation(format!(
                "initial model has dimensions ({}, {}), expected ({}, {})",
                model.beta.len(),
                model.z.len(),
                self.p(),
                self.d()
            )));
        }
        let mut state = CcdState {
            alpha: model.alpha_hca,
            beta: model.beta.clone(),
            z0: model.z0,
            z: model.z.clone(),
            residual: vec![0.0; self.y.len()],
            rz: self.r.mul_vec(&model.z),
        };
        self.refresh_residual(&mut state);
        Ok(state)
    }

    pub fn zero_state(&self) -> CcdState {
        self.state_from(&SprModel::zeros(self.p(), self.d()))
            .expect("zero model has matching dimensions")
    }

    fn refresh_residual(&self, state: &mut CcdState) {
        for (i, s) in self.data.stints().iter().enumerate() {
            state.residual[i] = self.y[i] - state.alpha - s.lineup_sum(&state.beta);
        }
    }

    pub fn loss(&self, state: &CcdState) -> f64 {
        state
            .residual
            .iter()
            .zip(&self.w)
            .map(|(r, w)| w * r * r)
            .sum::<f64>()
            / self.total_weight
    }

    pub fn objective(&self, state: &CcdState, lam: RegPair) -> f64 {
        let l1: f64 = state.beta.iter().map(|b| b.abs()).sum();
        let prior: f64 = (0..self.p())
            .map(|k| (state.beta[k] - state.theta(k)).powi(2))
            .sum();
        self.loss(state) + lam.lambda1 * l1 + lam.lambda2 * prior
    }

    /// `alpha <- 1' W (y - X beta) / 1' w`.
    pub fn update_alpha(&self, state: &mut CcdState) -> f64 {
        let shift = state
            .residual
            .iter()
            .zip(&self.w)
            .map(|(r, w)| w * r)
            .sum::<f64>()
            / self.total_weight;
        state.alpha += shift;
        for r in &mut state.residual {
            *r -= shift;
        }
        state.alpha
    }

    /// `z0 <- mean(beta - R z)`.
    pub fn update_z0(&self, state: &mut CcdState) -> f64 {
        let p = self.p() as f64;
        state.z0 = state
            .beta
            .iter()
            .zip(&state.rz)
            .map(|(b, rz)| b - rz)
            .sum::<f64>()
            / p;
        state.z0
    }

    /// `z <- R^+ (beta - z0 1)`, the minimum-norm least-squares solution.
    pub fn update_z(&self, state: &mut CcdState) -> Vec<f64> {
        if self.d() == 0 {
            return Vec::new();
        }
        let target = DVector::from_iterator(self.p(), state.beta.iter().map(|b| b - state.z0));
        let z = &self.r_pinv * target;
        state.z = z.iter().copied().collect();
        state.rz = self.r.mul_vec(&state.z);
        state.z.clone()
    }

    /// The `(A, B)` pair of the one-variable problem
    /// `A/2 x^2 - B x + lambda1 |x|` in `beta_k`.
    pub fn coordinate_coefficients(&self, state: &CcdState, k: usize, lam: RegPair) -> (f64, f64) {
        let c = 2.0 / self.total_weight;
        let xr: f64 = self.columns[k]
            .iter()
            .map(|&(i, s)| self.w[i as usize] * s * state.residual[i as usize])
            .sum();
        let a = c * self.col_sq[k] + 2.0 * lam.lambda2;
        let b = c * (xr + self.col_sq[k] * state.beta[k]) + 2.0 * lam.lambda2 * state.theta(k);
        (a, b)
    }

    /// Exact minimization of `g` in `beta_k`. Returns `None` when `A == 0`
    /// (player never on the floor and `lambda2 == 0`); `beta_k` is then left
    /// untouched.
    pub fn update_beta_k(&self, state: &mut CcdState, k: usize, lam: RegPair) -> Option<f64> {
        let (a, b) = self.coordinate_coefficients(state, k, lam);
        if a <= 0.0 {
            return None;
        }
        let old = state.beta[k];
        let new = solve_1d_lasso(a, b, lam.lambda1);
        if cfg!(debug_assertions) {
            let h = |x: f64| 0.5 * a * x * x - b * x + lam.lambda1 * x.abs();
            let scale = 1.0 + (0.5 * a * old * old).abs() + (b * old).abs();
            debug_assert!(
                h(new) <= h(old) + 1e-9 * scale,
                "beta_{k} update increased the objective"
            );
        }
        let delta = new - old;
        if delta != 0.0 {
            state.beta[k] = new;
            for &(i, s) in &self.columns[k] {
                state.residual[i as usize] -= s * delta;
            }
        }
        Some(new)
    }

    /// Every lineup row sums to zero, so moving `(beta, z0)` to
    /// `(beta + c 1, z0 + c)` changes neither the loss nor the prior; only the
    /// L1 term moves, and it is minimized by `c = -median(beta)`. Coordinate
    /// steps alone crawl along this direction when `lambda1` is small.
    /// Skipped when `lambda1 == 0` (the direction is flat) and when an
    /// unplayed player is pinned. Returns the applied shift.
    pub fn update_shift(&self, state: &mut CcdState, lam: RegPair) -> f64 {
        if lam.lambda1 == 0.0 || (lam.lambda2 == 0.0 && self.col_sq.contains(&0.0)) {
            return 0.0;
        }
        let mut sorted = state.beta.clone();
        sorted.sort_by(f64::total_cmp);
        let c = -sorted[(sorted.len() - 1) / 2];
        for b in &mut state.beta {
            *b += c;
        }
        if lam.lambda2 > 0.0 {
            state.z0 += c;
        }
        c
    }

    /// Largest violation of the first-order optimality conditions. For the
    /// `beta` coordinates the residual is normalized by `1 + |B|`.
    pub fn kkt_residual(&self, state: &CcdState, lam: RegPair) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.p() {
            let (a, b) = self.coordinate_coefficients(state, k, lam);
            if a <= 0.0 {
                continue;
            }
            let bk = state.beta[k];
            let v = if bk != 0.0 {
                (a * bk - b + lam.lambda1 * bk.signum()).abs() / (1.0 + b.abs())
            } else {
                (b.abs() - lam.lambda1).max(0.0)
            };
            worst = worst.max(v);
        }
        let grad_alpha = 2.0
            * state
                .residual
                .iter()
                .zip(&self.w)
                .map(|(r, w)| w * r)
                .sum::<f64>()
            / self.total_weight;
        worst = worst.max(grad_alpha.abs());
        if lam.lambda2 > 0.0 {
            let gap: Vec<f64> = (0..self.p()).map(|k| state.beta[k] - state.theta(k)).collect();
            let grad_z0 = 2.0 * lam.lambda2 * gap.iter().sum::<f64>();
            worst = worst.max(grad_z0.abs());
            for j in 0..self.d() {
                let g: f64 = (0..self.p()).map(|k| self.r.get(k, j) * gap[k]).sum();
                worst = worst.max((2.0 * lam.lambda2 * g).abs());
            }
        }
        worst
    }

    /// Runs sweeps of `alpha, z0, beta_1..beta_p, z` and the shift step from
/// `init`.
    pub fn solve_from(
        &self,
        init: &SprModel,
        lam: RegPair,
        cfg: &CcdConfig,
    ) -> Result<(SprModel, CcdTrace)> {
        cfg.validate()?;
        let lam = RegPair::new(lam.lambda1, lam.lambda2)?;
        let mut state = self.state_from(init)?;
        let initial = self.objective(&state, lam);
        if !initial.is_finite() {
            return Err(Error::Numeric("objective at the starting point is not finite".into()));
        }
        let mut trace = CcdTrace {
            initial_objective: initial,
            objective_per_sweep: Vec::new(),
            sweeps_run: 0,
            converged: false,
            kkt_residual: None,
            pinned_players: Vec::new(),
        };
        let mut pinned = vec![false; self.p()];
        let mut prev = initial;
        for sweep in 0..cfg.max_sweeps {
            self.update_alpha(&mut state);
            self.update_z0(&mut state);
            for k in 0..self.p() {
                if self.update_beta_k(&mut state, k, lam).is_none() && !pinned[k] {
                    pinned[k] = true;
                    warn!("player {k} never on the floor with lambda2 = 0; rating pinned at its start value");
                }
            }
            self.update_z(&mut state);
            self.update_shift(&mut state, lam);
            // drop accumulated rounding in the incrementally maintained residual
            self.refresh_residual(&mut state);

            let obj = self.objective(&state, lam);
            if !obj.is_finite() {
                return Err(Error::Numeric(format!("objective became non-finite in sweep {}", sweep + 1)));
            }
            trace.objective_per_sweep.push(obj);
            trace.sweeps_run = sweep + 1;
            let decrease = if prev > 0.0 { (prev - obj) / prev } else { 0.0 };
            prev = obj;
            if decrease < cfg.rel_tol {
                if !cfg.check_kkt {
                    trace.converged = true;
                    break;
                }
                let kkt = self.kkt_residual(&state, lam);
                trace.kkt_residual = Some(kkt);
                if kkt <= cfg.kkt_tol {
                    trace.converged = true;
                    break;
                }
            }
        }
        if cfg.check_kkt && !trace.converged {
            trace.kkt_residual = Some(self.kkt_residual(&state, lam));
        }
        trace.pinned_players = (0..self.p()).filter(|&k| pinned[k]).collect();
        let model = state.model();
        if !model.is_finite() {
            return Err(Error::Numeric("fitted parameters are not finite".into()));
        }
        Ok((model, trace))
    }

    pub fn solve(&self, lam: RegPair, cfg: &CcdConfig) -> Result<(SprModel, CcdTrace)> {
        self.solve_from(&SprModel::zeros(self.p(), self.d()), lam, cfg)
    }
}

/// Fits SPR from the all-zero starting point.
pub fn run_ccd(
    data: &StintSet,
    r: &BoxScoreTable,
    lam: RegPair,
    cfg: &CcdConfig,
) -> Result<(SprModel, CcdTrace)> {
    SprProblem::new(data, r)?.solve(lam, cfg)
}

/// Fits SPR starting from `init` (warm start).
pub fn run_ccd_warm(
    data: &StintSet,
    r: &BoxScoreTable,
    lam: RegPair,
    cfg: &CcdConfig,
    init: &SprModel,
) -> Result<(SprModel, CcdTrace)> {
    SprProblem::new(data, r)?.solve_from(init, lam, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PlayerTable, Stint};
    use crate::synthetic::grid_minimize_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, p: usize, n: usize, d: usize) -> (StintSet, BoxScoreTable) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let players = PlayerTable::numbered(p).unwrap();
        let mut stints = Vec::with_capacity(n);
        for i in 0..n {
            let mut idx: Vec<usize> = (0..p).collect();
            for t in 0..10 {
                let j = rng.random_range(t..p);
                idx.swap(t, j);
            }
            let weight = rng.random_range(1.0..10.0);
            stints.push(Stint {
                game_id: (i / 5) as u64,
                home: idx[..5].try_into().unwrap(),
                away: idx[5..10].try_into().unwrap(),
                weight,
                margin: weight * rng.random_range(-1.0..1.0),
            });
        }
        let data = StintSet::new(stints, players).unwrap();
        let r = BoxScoreTable::new(
            p,
            (0..d).map(|j| format!("s{j}")).collect(),
            (0..p * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        (data, r)
    }

    /// Grid search refined around the coarse minimum; independent of the
    /// closed-form updates.
    fn refined_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let coarse = grid_minimize_1d(&f, lo, hi, 1e-3);
        let mid = grid_minimize_1d(&f, coarse - 2e-3, coarse + 2e-3, 1e-5);
        grid_minimize_1d(&f, mid - 2e-5, mid + 2e-5, 1e-8)
    }

    fn random_state(problem: &SprProblem, rng: &mut ChaCha8Rng) -> CcdState {
        let model = SprModel {
            alpha_hca: rng.random_range(-0.5..0.5),
            beta: (0..problem.p()).map(|_| rng.random_range(-0.5..0.5)).collect(),
            z0: rng.random_range(-0.5..0.5),
            z: (0..problem.d()).map(|_| rng.random_range(-0.5..0.5)).collect(),
        };
        problem.state_from(&model).unwrap()
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(1.0, 0.5), 0.0);
        assert_eq!(soft_threshold(1.0, 3.0), 2.0);
        assert_eq!(soft_threshold(2.0, -5.0), -3.0);
        assert_eq!(soft_threshold(0.0, -1.25), -1.25);
    }

    #[test]
    fn one_variable_lasso_matches_grid() {
        let (a, b, tau) = (2.0, 3.0, 1.0);
        let x = solve_1d_lasso(a, b, tau);
        assert_eq!(x, 1.0);
        let h = |x: f64| 0.5 * a * x * x - b * x + tau * x.abs();
        let grid = grid_minimize_1d(h, -10.0, 10.0, 1e-4);
        assert!((grid - x).abs() <= 1e-4);
    }

    #[test]
    fn quadratic_loss_examples() {
        let players = PlayerTable::numbered(10).unwrap();
        // rate 4 at weight 2
        let s = Stint {
            game_id: 0,
            home: [0, 1, 2, 3, 4],
            away: [5, 6, 7, 8, 9],
            weight: 2.0,
            margin: 8.0,
        };
        let data = StintSet::new(vec![s], players).unwrap();
        assert_eq!(quadratic_loss(0.0, &[0.0; 10], &data), 16.0);
        let mut beta = vec![0.0; 10];
        beta[0] = 1.0;
        assert_eq!(quadratic_loss(3.0, &beta, &data), 0.0);
    }

    #[test]
    fn quadratic_loss_matches_double_loop() {
        let (data, _) = random_instance(1, 15, 50, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let beta: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha = 0.2;
        let mut num = 0.0;
        let mut den = 0.0;
        for s in data.stints() {
            let mut fit = alpha;
            for j in 0..15 {
                let x = if s.home.contains(&j) {
                    1.0
                } else if s.away.contains(&j) {
                    -1.0
                } else {
                    0.0
                };
                fit += x * beta[j];
            }
            num += s.weight * (s.margin / s.weight - fit).powi(2);
            den += s.weight;
        }
        assert!((quadratic_loss(alpha, &beta, &data) - num / den).abs() < 1e-10);
    }

    #[test]
    fn objective_terms() {
        let (data, r) = random_instance(2, 12, 40, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = SprModel {
            alpha_hca: 0.1,
            beta: (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
            z0: -0.2,
            z: vec![0.5, -0.25, 1.0],
        };
        let loss = quadratic_loss(model.alpha_hca, &model.beta, &data);
        assert_eq!(objective(&model, &data, &r, RegPair::zero()), loss);

        let lam = RegPair::new(0.3, 0.7).unwrap();
        let mut l1 = 0.0;
        let mut prior = 0.0;
        for k in 0..12 {
            l1 += model.beta[k].abs();
            let mut theta = model.z0;
            for j in 0..3 {
                theta += r.get(k, j) * model.z[j];
            }
            prior += (model.beta[k] - theta).powi(2);
        }
        let oracle = loss + 0.3 * l1 + 0.7 * prior;
        assert!((objective(&model, &data, &r, lam) - oracle).abs() < 1e-10);
    }

    #[test]
    fn objective_prior_vanishes_on_subspace() {
        let (_, r) = random_instance(3, 10, 5, 2);
        let z = vec![0.4, -0.3];
        let z0 = 0.1;
        let beta: Vec<f64> = r.mul_vec(&z).iter().map(|x| x + z0).collect();
        let players = PlayerTable::numbered(10).unwrap();
        let alpha = 0.05;
        // stints with margins generated exactly by the model
        let stints: Vec<Stint> = (0..4)
            .map(|g| {
                let home = [0, 1, 2, 3, 4];
                let away = [5, 6, 7, 8, 9];
                let mut s = Stint { game_id: g, home, away, weight: 3.0, margin: 0.0 };
                s.margin = 3.0 * (alpha + s.lineup_sum(&beta));
                s
            })
            .collect();
        let data = StintSet::new(stints, players).unwrap();
        let model = SprModel { alpha_hca: alpha, beta: beta.clone(), z0, z };
        let lam = RegPair::new(0.5, 2.0).unwrap();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        assert!((objective(&model, &data, &r, lam) - 0.5 * l1).abs() < 1e-12);
    }

    #[test]
    fn alpha_update_weighted_mean() {
        let players = PlayerTable::numbered(10).unwrap();
        let mk = |m: f64| Stint {
            game_id: 0,
            home: [0, 1, 2, 3, 4],
            away: [5, 6, 7, 8, 9],
            weight: 1.0,
            margin: m,
        };
        let data = StintSet::new(vec![mk(1.0), mk(3.0)], players).unwrap();
        let r = BoxScoreTable::new(10, vec!["s".into()], vec![0.0; 10]).unwrap();
        let problem = SprProblem::new(&data, &r).unwrap();
        let mut st = problem.zero_state();
        assert_eq!(problem.update_alpha(&mut st), 2.0);
        // fixed point: mean residual is now zero
        assert_eq!(problem.update_alpha(&mut st), 2.0);
    }

    #[test]
    fn alpha_update_matches_grid() {
        let (data, r) = random_instance(5, 14, 60, 3);
        let problem = SprProblem::new(&data, &r).unwrap();
        let lam = RegPair::new(0.05, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut st = random_state(&problem, &mut rng);
        let base = st.model();
        let g = |a: f64| objective(&SprModel { alpha_hca: a, ..base.clone() }, &data, &r, lam);
        let before = problem.objective(&st, lam);
        let alpha = problem.update_alpha(&mut st);
        assert!(problem.objective(&st, lam) <= before + 1e-12);
        let oracle = refined_argmin(g, -5.0, 5.0);
        assert!((alpha - oracle).abs() < 1e-6, "{alpha} vs {oracle}");
    }

    #[test]
    fn z0_update_cases() {
        let players = PlayerTable::numbered(10).unwrap();
        let s = Stint { game_id: 0, home: [0, 1, 2, 3, 4], away: [5, 6, 7, 8, 9], weight: 1.0, margin: 0.0 };
        let data = StintSet::new(vec![s], players).unwrap();
        let r = BoxScoreTable::new(10, vec!["s".into()], (0..10).map(|i| i as f64).collect()).unwrap();
        let problem = SprProblem::new(&data, &r).unwrap();
        let mut beta = vec![2.0; 10];
        beta[0] = 1.0;
        beta[1] = 3.0;
        let mut st = problem.state_from(&SprModel { alpha_hca: 0.0, beta, z0: 0.0, z: vec![0.0] }).unwrap();
        assert_eq!(problem.update_z0(&mut st), 2.0);

        let z = vec![0.7];
        let beta = r.mul_vec(&z);
        let mut st = problem.state_from(&SprModel { alpha_hca: 0.0, beta, z0: 5.0, z }).unwrap();
        assert!(problem.update_z0(&mut st).abs() < 1e-12);
    }

    #[test]
    fn z0_update_matches_grid() {
        let (data, r) = random_instance(6, 14, 60, 3);
        let problem = SprProblem::new(&data, &r).unwrap();
        let lam = RegPair::new(0.05, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut st = random_state(&problem, &mut rng);
        let base = st.model();
        let g = |z0: f64| objective(&SprModel { z0, ..base.clone() }, &data, &r, lam);
        let z0 = problem.update_z0(&mut st);
        assert!((z0 - refined_argmin(g, -5.0, 5.0)).abs() < 1e-6);
    }

    #[test]
    fn z_update_identity_design() {
        let (data, _) = random_instance(7, 10, 20, 1);
        let eye = BoxScoreTable::new(
            10,
            (0..10).map(|j| format!("s{j}")).collect(),
            (0..100).map(|i| if i % 11 == 0 { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        let problem = SprProblem::new(&data, &eye).unwrap();
        let beta: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.3).collect();
        let mut st = problem
            .state_from(&SprModel { alpha_hca: 0.0, beta: beta.clone(), z0: 0.0, z: vec![0.0; 10] })
            .unwrap();
        let z = problem.update_z(&mut st);
        for (a, b) in z.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn z_update_matches_normal_equations() {
        let (data, r) = random_instance(8, 20, 30, 4);
        let problem = SprProblem::new(&data, &r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut st = random_state(&problem, &mut rng);
        let z = problem.update_z(&mut st);
        // R'R z = R'(beta - z0 1) by Gaussian elimination
        let d = 4;
        let mut m = vec![vec![0.0; d + 1]; d];
        for a in 0..d {
            for b in 0..d {
                m[a][b] = (0..20).map(|k| r.get(k, a) * r.get(k, b)).sum();
            }
            m[a][d] = (0..20).map(|k| r.get(k, a) * (st.beta[k] - st.z0)).sum();
        }
        for c in 0..d {
            let piv = (c..d).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, piv);
            for i in 0..d {
                if i != c {
                    let f = m[i][c] / m[c][c];
                    for k in c..=d {
                        m[i][k] -= f * m[c][k];
                    }
                }
            }
        }
        for a in 0..d {
            assert!((z[a] - m[a][d] / m[a][a]).abs() < 1e-8);
        }
    }

    #[test]
    fn z_update_duplicated_columns_min_norm() {
        let (data, base) = random_instance(9, 15, 30, 2);
        // columns: c0, c1, c0 again
        let mut cols = Vec::new();
        for k in 0..15 {
            cols.extend_from_slice(&[base.get(k, 0), base.get(k, 1), base.get(k, 0)]);
        }
        let dup = BoxScoreTable::new(15, vec!["a".into(), "b".into(), "a2".into()], cols).unwrap();
        let problem = SprProblem::new(&data, &dup).unwrap();
        assert_eq!(problem.box_rank(), 2);
        let full = SprProblem::new(&data, &base).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut st_full = random_state(&full, &mut rng);
        let beta = st_full.beta.clone();
        let z0 = st_full.z0;
        let mut st_dup = problem
            .state_from(&SprModel { alpha_hca: 0.0, beta, z0, z: vec![0.0; 3] })
            .unwrap();
        let zf = full.update_z(&mut st_full);
        let zd = problem.update_z(&mut st_dup);
        // minimum norm splits the duplicated weight evenly
        assert!((zd[0] - zd[2]).abs() < 1e-8);
        assert!((zd[0] + zd[2] - zf[0]).abs() < 1e-8);
        assert!((zd[1] - zf[1]).abs() < 1e-8);
        for k in 0..15 {
            assert!((st_dup.theta(k) - st_full.theta(k)).abs() < 1e-8);
        }
    }

    #[test]
    fn beta_update_dead_zone() {
        let (data, r) = random_instance(10, 12, 40, 2);
        let problem = SprProblem::new(&data, &r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut st = random_state(&problem, &mut rng);
        let lam = RegPair::new(1e6, 0.1).unwrap();
        for k in 0..12 {
            assert_eq!(problem.update_beta_k(&mut st, k, lam), Some(0.0));
        }
    }

    #[test]
    fn beta_update_orthogonal_least_squares() {
        // player 10 only ever plays with the same teammates against the same
        // opponents, in stints of its own; its column is orthogonal to 11's
        let players = PlayerTable::numbered(12).unwrap();
        let a = Stint { game_id: 0, home: [10, 1, 2, 3, 4], away: [5, 6, 7, 8, 9], weight: 2.0, margin: 3.0 };
        let b = Stint { game_id: 0, home: [10, 1, 2, 3, 4], away: [5, 6, 7, 8, 9], weight: 4.0, margin: 1.0 };
        let c = Stint { game_id: 1, home: [11, 1, 2, 3, 4], away: [5, 6, 7, 8, 0], weight: 1.0, margin: 2.0 };
        let data = StintSet::new(vec![a, b, c], players).unwrap();
        let r = BoxScoreTable::new(12, vec!["s".into()], vec![0.0; 12]).unwrap();
        let problem = SprProblem::new(&data, &r).unwrap();
        let mut st = problem.zero_state();
        let beta10 = problem.update_beta_k(&mut st, 10, RegPair::zero()).unwrap();
        // one-variable WLS on rates 1.5 (w=2) and 0.25 (w=4)
        let wls = (2.0 * 1.5 + 4.0 * 0.25) / 6.0;
        assert!((beta10 - wls).abs() < 1e-12);
    }

    #[test]
    fn beta_update_matches_grid() {
        let (data, r) = random_instance(11, 12, 50, 3);
        let problem = SprProblem::new(&data, &r).unwrap();
        let lam = RegPair::new(0.01, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for k in [0, 5, 11] {
            let mut st = random_state(&problem, &mut rng);
            let base = st.model();
            let g = |x: f64| {
                let mut m = base.clone();
                m.beta[k] = x;
                objective(&m, &data, &r, lam)
            };
            let oracle = grid_minimize_1d(g, -5.0, 5.0, 1e-4);
            let before = problem.objective(&st, lam);
            let x = problem.update_beta_k(&mut st, k, lam).unwrap();
            assert!(problem.objective(&st, lam) <= before + 1e-12);
            assert!((x - oracle).abs() <= 1e-4 + 1e-5, "k={k}: {x} vs {oracle}");
        }
    }

    #[test]
    fn absent_player_pinned_without_prior() {
        let players = PlayerTable::numbered(11).unwrap();
        let s = Stint { game_id: 0, home: [0, 1, 2, 3, 4], away: [5, 6, 7, 8, 9], weight: 5.0, margin: 2.0 };
        let data = StintSet::new(vec![s], players).unwrap();
        let r = BoxScoreTable::new(11, vec!["s".into()], (0..11).map(|i| i as f64).collect()).unwrap();
        let problem = SprProblem::new(&data, &r).unwrap();
        let mut st = problem.zero_state();
        assert_eq!(problem.update_beta_k(&mut st, 10, RegPair::zero()), None);
        let (_, trace) = problem.solve(RegPair::zero(), &CcdConfig::default()).unwrap();
        assert_eq!(trace.pinned_players, vec![10]);
        // with a prior the player follows its box-score rating
        let lam = RegPair::new(0.0, 1.0).unwrap();
        assert!(problem.update_beta_k(&mut st, 10, lam).is_some());
    }

    #[test]
    fn large_lambda1_zeroes_ratings() {
        let (data, r) = random_instance(12, 15, 80, 2);
        let problem = SprProblem::new(&data, &r).unwrap();
        // alpha at beta = 0 is the weighted mean rate
        let mean_rate = data.stints().iter().map(|s| s.margin).sum::<f64>() / data.total_weight();
        let mut st = problem.zero_state();
        problem.update_alpha(&mut st);
        let threshold = (0..15)
            .map(|k| problem.coordinate_coefficients(&st, k, RegPair::zero()).1.abs())
            .fold(0.0, f64::max);
        let lam = RegPair::new(threshold * 1.01, 0.0).unwrap();
        let (model, trace) = problem.solve(lam, &CcdConfig::default()).unwrap();
        assert!(trace.converged);
        assert!(model.beta.iter().all(|b| *b == 0.0));
        assert!((model.alpha_hca - mean_rate).abs() < 1e-12);
    }

    #[test]
    fn sweeps_monotone_and_kkt() {
        let (data, r) = random_instance(13, 20, 200, 4);
        let problem = SprProblem::new(&data, &r).unwrap();
        let lam = RegPair::new(0.002, 0.05).unwrap();
        let (_, trace) = problem.solve(lam, &CcdConfig::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.kkt_residual.unwrap() <= 1e-6);
        let mut prev = trace.initial_objective;
        for &g in &trace.objective_per_sweep {
            assert!(g <= prev * (1.0 + 1e-10));
            prev = g;
        }
    }

    #[test]
    fn perturbed_start_reaches_same_objective() {
        let (data, r) = random_instance(14, 20, 200, 4);
        let problem = SprProblem::new(&data, &r).unwrap();
        let lam = RegPair::new(0.001, 0.1).unwrap();
        let cfg = CcdConfig::default();
        let (_, cold) = problem.solve(lam, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let init = random_state(&problem, &mut rng).model();
        let (_, warm) = problem.solve_from(&init, lam, &cfg).unwrap();
        let (a, b) = (cold.final_objective(), warm.final_objective());
        assert!((a - b).abs() / a <= 1e-6);
    }

    #[test]
    fn shift_step_is_exact_along_flat_direction() {
        let (data, r) = random_instance(15, 21, 300, 4);
        let problem = SprProblem::new(&data, &r).unwrap();
        let lam = RegPair::new(0.01, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = random_state(&problem, &mut rng);
        let loss = problem.loss(&state);
        let before = problem.objective(&state, lam);
        let gaps: Vec<f64> = (0..21).map(|k| state.beta[k] - state.theta(k)).collect();
        problem.update_shift(&mut state, lam);
        assert!((problem.loss(&state) - loss).abs() < 1e-12);
        for k in 0..21 {
            assert!((state.beta[k] - state.theta(k) - gaps[k]).abs() < 1e-12);
        }
        let after = problem.objective(&state, lam);
        assert!(after <= before + 1e-12);
        let mut sorted = state.beta.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted[10], 0.0);
        // no other shift does better
        let l1 = |c: f64| state.beta.iter().map(|b| (b + c).abs()).sum::<f64>();
        let best = grid_minimize_1d(l1, -1.0, 1.0, 1e-3);
        assert!(l1(0.0) <= l1(best) + 1e-12);
        // flat direction when lambda1 = 0
        assert_eq!(problem.update_shift(&mut state, RegPair::new(0.0, 0.05).unwrap()), 0.0);
    }

    #[test]
    fn config_validation() {
        let bad = CcdConfig { max_sweeps: 0, ..CcdConfig::default() };
        assert!(bad.validate().is_err());
        let bad = CcdConfig { rel_tol: 1.5, ..CcdConfig::default() };
        assert!(bad.validate().is_err());
    }
}
