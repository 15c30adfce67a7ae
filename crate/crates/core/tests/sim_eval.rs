mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use playerkern::baselines::{elo_expected, elo_rk_predict, fit_draw_margin, odds_to_probs, EloModel, EloState};
use playerkern::data::{parse_dataset, write_dataset, Home, Outcome};
use playerkern::eval::{evaluate, log_loss, log_loss_with, OddsPredictor, Predictor, UniformPredictor};
use playerkern::rao_kupper::{outcome_probs, DrawParam, PredictiveDistribution};
use playerkern::sim::{holdout_cutoff, simulate_dataset, SimConfig};

use common::random_dataset;

fn csv_bytes(cfg: &SimConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(&simulate_dataset(cfg).unwrap().dataset, &mut buf).unwrap();
    buf
}

#[test]
fn simulation_is_deterministic_and_valid() {
    let cfg = SimConfig { seed: 7, ..SimConfig::default() };
    let a = csv_bytes(&cfg);
    assert_eq!(a, csv_bytes(&cfg));
    assert_ne!(a, csv_bytes(&SimConfig { seed: 8, ..cfg.clone() }));
    // everything written passes the loader's validation
    let back = parse_dataset(a.as_slice()).unwrap();
    assert_eq!(back.n(), 800);
}

#[test]
fn vanishing_draw_margin_gives_no_draws() {
    let out = simulate_dataset(&SimConfig { true_alpha: 1e-12, ..SimConfig::default() }).unwrap();
    assert!(out.dataset.records().iter().all(|r| r.outcome != Outcome::Draw));
}

#[test]
fn outcome_frequencies_at_even_strength() {
    // zero skill variance and no home term: every latent is exactly 0
    let cfg = SimConfig {
        true_sigma2: 0.0,
        true_home: 0.0,
        matches_per_team: 1000,
        ..SimConfig::default()
    };
    let ds = simulate_dataset(&cfg).unwrap().dataset;
    let t = ds.n() as f64;
    assert_eq!(ds.n(), 10_000);
    let p = outcome_probs(0.0, &DrawParam::new(cfg.true_alpha).unwrap()).as_array();
    for (k, y) in Outcome::ALL.into_iter().enumerate() {
        let freq = ds.records().iter().filter(|r| r.outcome == y).count() as f64 / t;
        let se = (p[k] * (1.0 - p[k]) / t).sqrt();
        assert!((freq - p[k]).abs() < 3.0 * se, "{y:?}: {freq} vs {}", p[k]);
    }
}

#[test]
fn uniform_is_far_from_bayes_on_default_league() {
    let out = simulate_dataset(&SimConfig::default()).unwrap();
    let bayes = out.truth.bayes_loss(&out.dataset).unwrap();
    assert!(3f64.ln() - bayes >= 0.1, "bayes loss {bayes}");
    // the stored latents reproduce the sampling distribution
    let rec = &out.dataset.records()[0];
    let p = out.truth.probs(&rec.match_id).unwrap();
    assert!((p.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn holdout_cutoff_splits_near_fraction() {
    let ds = simulate_dataset(&SimConfig::default()).unwrap().dataset;
    let cut = holdout_cutoff(&ds, 0.75).unwrap();
    let train = ds.records().iter().filter(|r| r.date < cut).count();
    assert_eq!(train, 600);
}

#[test]
fn log_loss_hand_values() {
    let p = PredictiveDistribution { p_w: 0.5, p_d: 0.3, p_l: 0.2 };
    let loss = log_loss(&[p, p], &[Outcome::Team1Win, Outcome::Draw]).unwrap();
    assert!((loss + (0.5f64.ln() + 0.3f64.ln()) / 2.0).abs() < 1e-15);

    let one_hot = PredictiveDistribution { p_w: 1.0, p_d: 0.0, p_l: 0.0 };
    assert_eq!(log_loss(&[one_hot], &[Outcome::Team1Win]).unwrap(), 0.0);
    assert!(log_loss(&[one_hot], &[Outcome::Draw]).is_err());
    let clipped = log_loss_with(&[one_hot], &[Outcome::Draw], true).unwrap();
    assert!((clipped - 1e-15f64.ln().abs()).abs() < 1e-12);
    assert!(log_loss(&[], &[]).is_err());
}

proptest! {
    #[test]
    fn log_loss_ignores_order(seed in any::<u64>(), n in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<(PredictiveDistribution, Outcome)> = (0..n)
            .map(|_| {
                let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                let p = PredictiveDistribution { p_w: a + 0.01, p_d: b + 0.01, p_l: c + 0.01 }.normalized();
                (p, Outcome::ALL[rng.random_range(0..3usize)])
            })
            .collect();
        let loss = |v: &[(PredictiveDistribution, Outcome)]| {
            let (p, y): (Vec<_>, Vec<_>) = v.iter().copied().unzip();
            log_loss(&p, &y).unwrap()
        };
        let before = loss(&pairs);
        pairs.shuffle(&mut rng);
        prop_assert!((loss(&pairs) - before).abs() < 1e-12);
    }

    #[test]
    fn uniform_loss_is_ln3(seed in any::<u64>(), n in 1usize..60) {
        let ds = random_dataset(seed, n, 30);
        let reports = evaluate(&[&UniformPredictor], &ds, &ds, false).unwrap();
        prop_assert!((reports[0].avg_log_loss - 3f64.ln()).abs() < 1e-9);
    }
}

#[test]
fn identical_models_identical_reports() {
    let ds = random_dataset(1, 40, 30);
    let elo = EloModel::fit(&ds, 20.0, 50.0).unwrap();
    let reports = evaluate(&[&elo, &elo], &ds, &ds, false).unwrap();
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn odds_model_reports_effective_count() {
    let ds = random_dataset(2, 10, 30);
    let probs = ds.records()[..4]
        .iter()
        .map(|r| (r.match_id.clone(), odds_to_probs(2.0, 3.5, 4.0).unwrap()))
        .collect();
    let odds = OddsPredictor { probs };
    let reports = evaluate(&[&odds as &dyn Predictor], &ds, &ds, false).unwrap();
    assert_eq!((reports[0].t, reports[0].skipped), (4, 6));

    // 1/2 + 1/3.5 + 1/4 = 1.0357..., normalized
    let p = odds_to_probs(2.0, 3.5, 4.0).unwrap();
    let total = 0.5 + 1.0 / 3.5 + 0.25;
    assert!((p.p_w - 0.5 / total).abs() < 1e-15 && (p.sum() - 1.0).abs() < 1e-15);
    assert!(odds_to_probs(1.0, 2.0, 3.0).is_err());
}

#[test]
fn elo_closed_forms() {
    assert_eq!(elo_expected(1500.0, 1500.0, Home::Neutral, 100.0), 0.5);
    assert!((elo_expected(1900.0, 1500.0, Home::Neutral, 100.0) - 10.0 / 11.0).abs() < 1e-15);
    // the home bonus counts as rating
    assert!((elo_expected(1800.0, 1500.0, Home::Team1, 100.0) - 10.0 / 11.0).abs() < 1e-15);
    assert!((elo_expected(2000.0, 1500.0, Home::Team2, 100.0) - 10.0 / 11.0).abs() < 1e-15);

    let d = DrawParam::new(0.4).unwrap();
    for (r1, r2) in [(1500.0, 1500.0), (1620.0, 1480.0), (1300.0, 1710.0)] {
        let a = elo_rk_predict(r1, r2, Home::Neutral, 100.0, &d);
        let b = elo_rk_predict(r2, r1, Home::Neutral, 100.0, &d);
        assert!((a.p_w - b.p_l).abs() < 1e-15 && (a.p_l - b.p_w).abs() < 1e-15 && (a.p_d - b.p_d).abs() < 1e-15);
    }
}

#[test]
fn elo_conserves_rating_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let ds = random_dataset(42, 200, 30);
    let mut state = EloState::new(32.0, 100.0);
    let teams: Vec<String> = (0..16).map(|i| format!("team{i}")).collect();
    for t in &teams {
        state.set_rating(t.clone(), 1500.0 + rng.random_range(-200.0..200.0));
    }
    let before: f64 = state.ratings().values().sum();
    let mut rec = ds.records()[0].clone();
    for _ in 0..10_000 {
        let (a, b) = (rng.random_range(0..16usize), rng.random_range(0..15usize));
        rec.team1 = teams[a].clone();
        rec.team2 = teams[if b >= a { b + 1 } else { b }].clone();
        rec.home = [Home::Team1, Home::Team2, Home::Neutral][rng.random_range(0..3usize)];
        rec.outcome = Outcome::ALL[rng.random_range(0..3usize)];
        state.update(&rec);
    }
    let after: f64 = state.ratings().values().sum();
    assert!((after - before).abs() <= 1e-9 * before, "{before} -> {after}");
}

#[test]
fn draw_margin_fit_matches_draw_rate() {
    let out = simulate_dataset(&SimConfig { seed: 5, matches_per_team: 200, ..SimConfig::default() }).unwrap();
    let recs = out.dataset.records();
    let latents: Vec<f64> = recs.iter().map(|r| out.truth.latent[&r.match_id]).collect();
    let outcomes: Vec<Outcome> = recs.iter().map(|r| r.outcome).collect();
    let d = fit_draw_margin(&latents, &outcomes).unwrap();

    let empirical = outcomes.iter().filter(|&&y| y == Outcome::Draw).count() as f64 / recs.len() as f64;
    let predicted = latents.iter().map(|&f| outcome_probs(f, &d).p_d).sum::<f64>() / recs.len() as f64;
    assert!((empirical - predicted).abs() < 0.03, "{empirical} vs {predicted}");
    assert!((d.alpha() - 0.6).abs() < 0.1, "alpha {}", d.alpha());
}

#[test]
fn elo_fit_freezes_ratings_after_training() {
    let ds = random_dataset(3, 30, 30);
    let model = EloModel::fit(&ds, 32.0, 100.0).unwrap();
    let mut replay = EloState::new(32.0, 100.0);
    for rec in ds.records() {
        replay.update(rec);
    }
    assert_eq!(model.state, replay);
    let rec = &ds.records()[5];
    assert_eq!(model.predict(rec), model.state.predict(rec, &model.draw));
}
