//! Test-only data generators and oracles. Nothing here calls into the
//! inference code it is used to check.

#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use playerkern::data::{Dataset, Home, MatchRecord, Outcome, PlayerId};
use playerkern::kernel::MatchVector;

/// `n` matches over a pool of `players` ids, lineups drawn uniformly, with
/// random home flags and outcomes.
pub fn random_dataset(seed: u64, n: usize, players: usize) -> Dataset {
    assert!(players >= 22);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<PlayerId> = (0..players).map(|i| PlayerId::new(format!("pl{i:04}")).unwrap()).collect();
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let records = (0..n)
        .map(|i| {
            let mut pool = ids.clone();
            pool.shuffle(&mut rng);
            let home = [Home::Team1, Home::Team2, Home::Neutral][rng.random_range(0..3usize)];
            let outcome = Outcome::ALL[rng.random_range(0..3usize)];
            MatchRecord {
                match_id: format!("m{i:05}"),
                date: start.checked_add_days(Days::new(i as u64)).unwrap(),
                competition: ["league", "cup"][i % 2].into(),
                team1: format!("team{}", 2 * i),
                team2: format!("team{}", 2 * i + 1),
                lineup1: pool[..11].to_vec(),
                lineup2: pool[11..22].to_vec(),
                home,
                outcome,
            }
        })
        .collect();
    Dataset::new(records).unwrap()
}

/// Dense inner product over `[z; h]` with the home coordinate scaled so the
/// product equals `sigma2 z.z' + sigma2_home h h'`.
pub fn dense_kernel(a: &MatchVector, b: &MatchVector, players: usize, sigma2: f64, sigma2_home: f64) -> f64 {
    let x = a.to_dense(players);
    let y = b.to_dense(players);
    let mut dot = 0.0;
    for p in 0..players {
        dot += x[p] * y[p];
    }
    sigma2 * dot + (sigma2_home.sqrt() * x[players]) * (sigma2_home.sqrt() * y[players])
}

pub fn min_max_eigen(k: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(k.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Rao–Kupper probabilities written out directly from their definition.
pub fn reference_probs(f: f64, alpha: f64) -> [f64; 3] {
    let w = 1.0 / (1.0 + (alpha - f).exp());
    let l = 1.0 / (1.0 + (alpha + f).exp());
    let d = ((2.0 * alpha).exp() - 1.0) * w * l;
    [w, d, l]
}

fn outcome_index(y: Outcome) -> usize {
    match y {
        Outcome::Team1Win => 0,
        Outcome::Draw => 1,
        Outcome::Team2Win => 2,
    }
}

/// Monte Carlo estimate of `E[probs(f)]`, `f ~ Normal(mu, var)`.
pub fn monte_carlo_predictive(mu: f64, var: f64, alpha: f64, draws: usize, seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = var.sqrt();
    let mut acc = [0.0; 3];
    for _ in 0..draws {
        let z: f64 = StandardNormal.sample(&mut rng);
        let p = reference_probs(mu + sd * z, alpha);
        for k in 0..3 {
            acc[k] += p[k];
        }
    }
    acc.map(|s| s / draws as f64)
}

/// `log ∫ Π_i p(y_i | f_i) Normal(f; 0, K) df` for up to three latents, by a
/// tensor trapezoid rule over whitened coordinates `f = V Λ^½ u` on
/// `u ∈ [-9, 9]^N`.
pub fn brute_force_log_evidence(k: &DMatrix<f64>, outcomes: &[Outcome], alpha: f64, points: usize) -> f64 {
    let n = k.nrows();
    assert!((1..=3).contains(&n) && outcomes.len() == n);
    let eig = SymmetricEigen::new(k.clone());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));

    let h = 18.0 / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| -9.0 + h * i as f64).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|u| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt() * h)
        .collect();

    let mut total = 0.0;
    let mut idx = vec![0usize; n];
    loop {
        let mut weight = 1.0;
        let mut lik = 1.0;
        for d in 0..n {
            weight *= density[idx[d]];
        }
        for i in 0..n {
            let f: f64 = (0..n).map(|d| root[(i, d)] * grid[idx[d]]).sum();
            lik *= reference_probs(f, alpha)[outcome_index(outcomes[i])];
        }
        total += weight * lik;

        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < points {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == n {
                return total.ln();
            }
        }
    }
}
