use std::collections::BTreeMap;

use proptest::prelude::*;
use spr_core::ccd::soft_threshold;
use spr_core::data::{aggregate_box_scores, BoxScoreTable, PlayerTable, Stint, StintSet};
use spr_core::eval::{backtest, metrics, underrated_report, GamePrediction};
use spr_core::ingest::{load_players, load_stints, write_players, write_stints};
use spr_core::{fit_dummy, VegasLines};

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

proptest! {
    #[test]
    fn soft_threshold_odd_and_nonexpansive(tau in 0.0..50.0f64, x in finite(), y in finite()) {
        prop_assert_eq!(soft_threshold(tau, -x), -soft_threshold(tau, x));
        let d = (soft_threshold(tau, x) - soft_threshold(tau, y)).abs();
        prop_assert!(d <= (x - y).abs() + 1e-12);
        prop_assert!(soft_threshold(tau, x).abs() <= x.abs());
        prop_assert_eq!(soft_threshold(0.0, x), x);
    }

    #[test]
    fn aggregation_is_commutative(
        a in prop::collection::vec(0.0..20.0f64, 12 * 3),
        b in prop::collection::vec(0.0..20.0f64, 12 * 3),
    ) {
        let names: Vec<String> = ["reb", "ast", "tov"].iter().map(|s| s.to_string()).collect();
        let ta = BoxScoreTable::new(12, names.clone(), a).unwrap();
        let tb = BoxScoreTable::new(12, names, b).unwrap();
        let ab = aggregate_box_scores(&[ta.clone(), tb.clone()]).unwrap();
        let ba = aggregate_box_scores(&[tb, ta]).unwrap();
        prop_assert_eq!(ab.as_slice(), ba.as_slice());
    }

    #[test]
    fn wrong_winner_sign_invariant(
        pairs in prop::collection::vec((finite(), finite()), 1..40),
        scale in 1e-3..1e3f64,
    ) {
        let base: Vec<GamePrediction> = pairs.iter().enumerate()
            .map(|(i, &(p, a))| GamePrediction::new(i as u64, p, a)).collect();
        let scaled: Vec<GamePrediction> = base.iter()
            .map(|g| GamePrediction::new(g.game_id, scale * g.predicted, g.actual)).collect();
        prop_assert_eq!(metrics(&base).unwrap().wrong_winner_pct, metrics(&scaled).unwrap().wrong_winner_pct);
    }

    #[test]
    fn prediction_error_identity(p in finite(), a in finite()) {
        let g = GamePrediction::new(0, p, a);
        prop_assert_eq!(g.error, p - a);
    }

    #[test]
    fn ledger_conservation(
        games in prop::collection::vec((-20i32..20, -20i32..20, -20i32..20, any::<bool>()), 1..60),
        delta in 0u8..8,
    ) {
        let mut lines = BTreeMap::new();
        let mut preds = Vec::new();
        for (i, &(p, a, l, has_line)) in games.iter().enumerate() {
            preds.push(GamePrediction::new(i as u64, p as f64 * 0.5, a as f64));
            if has_line {
                lines.insert(i as u64, l as f64);
            }
        }
        let lines = VegasLines::new(lines).unwrap();
        let ledger = backtest(&preds, &lines, delta as f64).unwrap();
        prop_assert_eq!(ledger.bets, ledger.wins + ledger.losses + ledger.pushes);
        prop_assert_eq!(ledger.records.len() + ledger.skipped_missing_line, games.len());
        if let Some(w) = ledger.win_pct {
            prop_assert!((w - 100.0 * ledger.wins as f64 / (ledger.wins + ledger.losses) as f64).abs() < 1e-12);
        }
        let zero = backtest(&preds, &lines, 0.0).unwrap();
        let expected = preds.iter()
            .filter(|g| lines.get(g.game_id).is_some_and(|l| g.predicted != l))
            .count();
        prop_assert_eq!(zero.bets, expected);
    }

    #[test]
    fn underrated_ranking_shift_invariant(
        beta in prop::collection::vec(-1.0..1.0f64, 10),
        c in -5.0..5.0f64,
    ) {
        // theta is zero, so shifting beta and the box-score intercept by c
        // leaves U unchanged
        let players = PlayerTable::numbered(10).unwrap();
        let stints = vec![Stint { game_id: 0, home: [0, 1, 2, 3, 4], away: [5, 6, 7, 8, 9], weight: 20.0, margin: 1.0 }];
        let data = StintSet::new(stints, players).unwrap();
        let r = BoxScoreTable::new(10, vec!["x".into()], vec![0.0; 10]).unwrap();
        let mut m = fit_spr_shell(&beta, 0.0);
        let base = underrated_report(&m, &r, &data, 10.0, 10).unwrap();
        m = fit_spr_shell(&beta.iter().map(|b| b + c).collect::<Vec<_>>(), c);
        let shifted = underrated_report(&m, &r, &data, 10.0, 10).unwrap();
        let ids = |v: &[spr_core::eval::UnderratedEntry]| v.iter().map(|e| e.player).collect::<Vec<_>>();
        prop_assert_eq!(ids(&base.underrated), ids(&shifted.underrated));
        prop_assert_eq!(ids(&base.overrated), ids(&shifted.overrated));
    }

    #[test]
    fn stints_write_load_preserves_values(
        rows in prop::collection::vec((1u32..40, -30i32..30, Just(())), 1..30),
    ) {
        let players = PlayerTable::numbered(12).unwrap();
        let stints: Vec<Stint> = rows.iter().enumerate().map(|(i, &(w, m, _))| Stint {
            game_id: (i / 3) as u64,
            home: [0, 1, 2, 3, 4],
            away: [5, 6, 7, 8, 11],
            weight: w as f64 * 0.5,
            margin: m as f64 / 3.0,
        }).collect();
        let set = StintSet::new(stints, players.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_players(&dir.path().join("players.csv"), &players).unwrap();
        write_stints(&dir.path().join("stints.csv"), &set).unwrap();
        let players2 = load_players(&dir.path().join("players.csv")).unwrap();
        let back = load_stints(&dir.path().join("stints.csv"), &players2).unwrap();
        prop_assert_eq!(back.stints(), set.stints());
    }
}

fn fit_spr_shell(beta: &[f64], z0: f64) -> spr_core::RatingsModel {
    use spr_core::estimators::{EstimatorKind, SprExtras};
    let mut m = fit_dummy(beta.len());
    m.kind = EstimatorKind::Spr;
    m.beta = beta.to_vec();
    m.spr = Some(SprExtras {
        z0,
        z: vec![0.0],
        z0_original: z0,
        z_original: vec![0.0],
        stat_names: vec!["x".into()],
        lambda: None,
        trace: None,
    });
    m
}
