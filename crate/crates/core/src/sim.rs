//! Synthetic leagues with known player skills.
//!
//! Every team owns a fixed pool of players: eleven regulars plus reserves.
//! For each match up to three regulars are swapped for reserves, so players
//! appear in varying combinations. Team strength is the sum of the eleven
//! starters' skills; the latent score adds a home term and the outcome is
//! drawn from the Rao–Kupper probabilities. Generation depends only on the
//! seed.

use std::collections::HashMap;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Home, MatchRecord, Outcome, PlayerId, LINEUP_SIZE};
use crate::error::{Error, Result};
use crate::rao_kupper::{self, DrawParam, PredictiveDistribution};

/// Most regulars replaced by reserves in one lineup.
pub const MAX_SWAPS: usize = 3;

const DAYS_PER_ROUND: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Players are split evenly into team pools; leftovers are unused.
    pub num_players: usize,
    pub num_teams: usize,
    pub matches_per_team: usize,
    /// Variance of each player's skill.
    pub true_sigma2: f64,
    pub true_alpha: f64,
    /// Latent bonus of the home side.
    pub true_home: f64,
    pub start_date: NaiveDate,
}

impl Default for SimConfig {
    /// 20 teams with 14-player pools, 800 matches in total.
    fn default() -> Self {
        SimConfig {
            seed: 20_160_610,
            num_players: 280,
            num_teams: 20,
            matches_per_team: 80,
            true_sigma2: 0.05,
            true_alpha: 0.6,
            true_home: 0.3,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
        }
    }
}

impl SimConfig {
    pub fn pool_size(&self) -> usize {
        self.num_players / self.num_teams.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.num_teams < 2 {
            return bad(format!("need at least 2 teams, got {}", self.num_teams));
        }
        if self.num_players < 2 * LINEUP_SIZE || self.pool_size() < LINEUP_SIZE {
            return bad(format!(
                "{} players cannot give {} teams {LINEUP_SIZE} players each",
                self.num_players, self.num_teams
            ));
        }
        if self.matches_per_team == 0 {
            return bad("matches_per_team must be at least 1".into());
        }
        if !(self.true_sigma2.is_finite() && self.true_sigma2 >= 0.0) {
            return bad(format!("true_sigma2 must be finite and >= 0, got {}", self.true_sigma2));
        }
        if !self.true_home.is_finite() {
            return bad("true_home must be finite".into());
        }
        DrawParam::new(self.true_alpha).map(|_| ())
    }
}

/// What the generator knows and the models do not.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub skills: HashMap<PlayerId, f64>,
    pub home: f64,
    pub draw: DrawParam,
    /// True latent score of every match, by match id.
    pub latent: HashMap<String, f64>,
}

impl GroundTruth {
    /// Generating distribution of a simulated match.
    pub fn probs(&self, match_id: &str) -> Option<PredictiveDistribution> {
        self.latent.get(match_id).map(|&f| rao_kupper::outcome_probs(f, &self.draw))
    }

    /// Average log loss of the generating distribution on `ds`, the best any
    /// predictor can expect.
    pub fn bayes_loss(&self, ds: &Dataset) -> Option<f64> {
        if ds.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for rec in ds.records() {
            total -= self.probs(&rec.match_id)?.prob(rec.outcome).ln();
        }
        Some(total / ds.n() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

pub fn simulate_dataset(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let draw = DrawParam::new(cfg.true_alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = cfg.pool_size();
    let sd = cfg.true_sigma2.sqrt();
    let skill_dist = Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let pools: Vec<Vec<(PlayerId, f64)>> = (0..cfg.num_teams)
        .map(|t| {
            (0..pool)
                .map(|j| {
                    let id = PlayerId::new(format!("t{t:02}p{j:02}")).expect("generated id is valid");
                    (id, skill_dist.sample(&mut rng))
                })
                .collect()
        })
        .collect();
    let team_name = |t: usize| format!("team-{t:02}");

    let mut records = Vec::new();
    let mut latent = HashMap::new();
    for (round, pairs) in round_robin(cfg.num_teams, cfg.matches_per_team).into_iter().enumerate() {
        let date = cfg
            .start_date
            .checked_add_days(Days::new(DAYS_PER_ROUND * round as u64))
            .ok_or_else(|| Error::InvalidParameter("schedule runs past the calendar".into()))?;
        for (k, (a, b)) in pairs.into_iter().enumerate() {
            let (t1, t2) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            let home = match rng.random_range(0..5u8) {
                0 | 1 => Home::Team1,
                2 | 3 => Home::Team2,
                _ => Home::Neutral,
            };
            let lineup1 = pick_lineup(&pools[t1], &mut rng);
            let lineup2 = pick_lineup(&pools[t2], &mut rng);
            let strength = |l: &[usize], t: usize| l.iter().map(|&j| pools[t][j].1).sum::<f64>();
            let f = strength(&lineup1, t1) - strength(&lineup2, t2) + cfg.true_home * home.sign();

            let p = rao_kupper::outcome_probs(f, &draw);
            let u: f64 = rng.random();
            let outcome = if u < p.p_w {
                Outcome::Team1Win
            } else if u < p.p_w + p.p_d {
                Outcome::Draw
            } else {
                Outcome::Team2Win
            };

            let match_id = format!("r{round:04}-m{k:02}");
            latent.insert(match_id.clone(), f);
            let ids = |l: &[usize], t: usize| l.iter().map(|&j| pools[t][j].0.clone()).collect();
            records.push(MatchRecord {
                match_id,
                date,
                competition: "sim-league".into(),
                team1: team_name(t1),
                team2: team_name(t2),
                lineup1: ids(&lineup1, t1),
                lineup2: ids(&lineup2, t2),
                home,
                outcome,
            });
        }
    }

    let skills = pools.into_iter().flatten().collect();
    Ok(SimOutput {
        dataset: Dataset::new(records)?,
        truth: GroundTruth {
            skills,
            home: cfg.true_home,
            draw,
            latent,
        },
    })
}

/// Indices into a team pool: the regulars with up to [`MAX_SWAPS`] of them
/// replaced by reserves.
fn pick_lineup(pool: &[(PlayerId, f64)], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut reserves: Vec<usize> = (LINEUP_SIZE..pool.len()).collect();
    let swaps = rng.random_range(0..=MAX_SWAPS.min(reserves.len()));
    let mut lineup: Vec<usize> = (0..LINEUP_SIZE).collect();
    lineup.shuffle(rng);
    reserves.shuffle(rng);
    lineup[..swaps].copy_from_slice(&reserves[..swaps]);
    lineup.sort_unstable();
    lineup
}

/// Circle-method rounds until every team has `per_team` matches. With an odd
/// number of teams one team sits out each round.
fn round_robin(num_teams: usize, per_team: usize) -> Vec<Vec<(usize, usize)>> {
    const BYE: usize = usize::MAX;
    let mut slots: Vec<usize> = (0..num_teams).collect();
    if num_teams % 2 == 1 {
        slots.push(BYE);
    }
    let m = slots.len();
    let mut played = vec![0usize; num_teams];
    let mut rounds = Vec::new();
    while played.iter().any(|&c| c < per_team) {
        let mut pairs = Vec::with_capacity(m / 2);
        for i in 0..m / 2 {
            let (a, b) = (slots[i], slots[m - 1 - i]);
            if a != BYE && b != BYE && played[a] < per_team && played[b] < per_team {
                played[a] += 1;
                played[b] += 1;
                pairs.push((a, b));
            }
        }
        if pairs.is_empty() {
            break;
        }
        rounds.push(pairs);
        slots[1..].rotate_right(1);
    }
    rounds
}

/// Date at which the first `train_fraction` of matches (by date) end.
pub fn holdout_cutoff(ds: &Dataset, train_fraction: f64) -> Option<NaiveDate> {
    let k = ((ds.n() as f64) * train_fraction).round() as usize;
    ds.records().get(k.min(ds.n().saturating_sub(1))).map(|r| r.date)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_gives_everyone_their_quota() {
        for (teams, per) in [(4, 3), (5, 4), (20, 80), (7, 13)] {
            let rounds = round_robin(teams, per);
            let mut count = vec![0; teams];
            for round in &rounds {
                let mut seen = std::collections::HashSet::new();
                for &(a, b) in round {
                    assert_ne!(a, b);
                    assert!(seen.insert(a) && seen.insert(b), "team twice in one round");
                    count[a] += 1;
                    count[b] += 1;
                }
            }
            assert!(count.iter().all(|&c| c <= per));
            if teams % 2 == 0 {
                assert!(count.iter().all(|&c| c == per));
            }
        }
    }

    #[test]
    fn default_config_sizes() {
        let out = simulate_dataset(&SimConfig::default()).unwrap();
        assert_eq!(out.dataset.n(), 800);
        assert_eq!(out.truth.skills.len(), 280);
        assert_eq!(out.truth.latent.len(), 800);
    }

    #[test]
    fn lineups_stay_in_team_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool: Vec<_> = (0..14).map(|j| (PlayerId::new(format!("p{j}")).unwrap(), 0.0)).collect();
        for _ in 0..200 {
            let l = pick_lineup(&pool, &mut rng);
            assert_eq!(l.len(), 11);
            assert!(l.windows(2).all(|w| w[0] < w[1]));
            assert!(l.iter().filter(|&&j| j >= 11).count() <= MAX_SWAPS);
        }
    }

    #[test]
    fn infeasible_configs() {
        let base = SimConfig::default();
        for cfg in [
            SimConfig { num_teams: 1, ..base.clone() },
            SimConfig { num_players: 21, num_teams: 2, ..base.clone() },
            SimConfig { num_players: 200, num_teams: 20, ..base.clone() },
            SimConfig { matches_per_team: 0, ..base.clone() },
            SimConfig { true_alpha: 0.0, ..base.clone() },
            SimConfig { true_sigma2: -1.0, ..base.clone() },
        ] {
            assert!(simulate_dataset(&cfg).is_err(), "{cfg:?}");
        }
    }
}
