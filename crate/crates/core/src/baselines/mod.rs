//! Comparison predictors: Elo ratings fed through the Rao–Kupper likelihood,
//! bookmaker odds, and the uniform distribution.

mod primal;

pub use primal::{primal_laplace_fit, primal_laplace_fit_vectors, PrimalPosterior, SkillVector};

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::LN_10;
use std::io::Read;

use crate::data::{Dataset, Home, MatchRecord, Outcome};
use crate::error::{Error, Result};
use crate::rao_kupper::{self, DrawParam, PredictiveDistribution};

pub const DEFAULT_RATING: f64 = 1500.0;
pub const DEFAULT_K_FACTOR: f64 = 32.0;
pub const DEFAULT_HOME_ADVANTAGE: f64 = 100.0;

/// Rating points per unit of latent score.
const ELO_SCALE: f64 = 400.0;

/// Rating difference seen by team1, including home advantage.
pub fn elo_delta(r1: f64, r2: f64, home: Home, home_advantage: f64) -> f64 {
    r1 - r2 + home_advantage * home.sign()
}

/// Expected Elo score of team1.
pub fn elo_expected(r1: f64, r2: f64, home: Home, home_advantage: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(-elo_delta(r1, r2, home, home_advantage) / ELO_SCALE))
}

/// Latent score equivalent to a rating difference: the logistic of this value
/// equals the Elo expectation.
pub fn elo_latent(delta: f64) -> f64 {
    delta * LN_10 / ELO_SCALE
}

pub fn elo_rk_predict(r1: f64, r2: f64, home: Home, home_advantage: f64, d: &DrawParam) -> PredictiveDistribution {
    rao_kupper::outcome_probs(elo_latent(elo_delta(r1, r2, home, home_advantage)), d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EloState {
    ratings: BTreeMap<String, f64>,
    pub k_factor: f64,
    pub home_advantage: f64,
    pub initial_rating: f64,
}

impl Default for EloState {
    fn default() -> Self {
        EloState::new(DEFAULT_K_FACTOR, DEFAULT_HOME_ADVANTAGE)
    }
}

impl EloState {
    pub fn new(k_factor: f64, home_advantage: f64) -> Self {
        EloState {
            ratings: BTreeMap::new(),
            k_factor,
            home_advantage,
            initial_rating: DEFAULT_RATING,
        }
    }

    pub fn rating(&self, team: &str) -> f64 {
        self.ratings.get(team).copied().unwrap_or(self.initial_rating)
    }

    pub fn ratings(&self) -> &BTreeMap<String, f64> {
        &self.ratings
    }

    pub fn set_rating(&mut self, team: impl Into<String>, rating: f64) {
        self.ratings.insert(team.into(), rating);
    }

    pub fn expected(&self, rec: &MatchRecord) -> f64 {
        elo_expected(self.rating(&rec.team1), self.rating(&rec.team2), rec.home, self.home_advantage)
    }

    pub fn delta(&self, rec: &MatchRecord) -> f64 {
        elo_delta(self.rating(&rec.team1), self.rating(&rec.team2), rec.home, self.home_advantage)
    }

    /// Applies one result. Whatever team1 gains, team2 loses.
    pub fn update(&mut self, rec: &MatchRecord) {
        let change = self.k_factor * (rec.outcome.score() - self.expected(rec));
        let r1 = self.rating(&rec.team1);
        let r2 = self.rating(&rec.team2);
        self.ratings.insert(rec.team1.clone(), r1 + change);
        self.ratings.insert(rec.team2.clone(), r2 - change);
    }

    pub fn predict(&self, rec: &MatchRecord, d: &DrawParam) -> PredictiveDistribution {
        rao_kupper::outcome_probs(elo_latent(self.delta(rec)), d)
    }
}

/// Functional form of [`EloState::update`].
pub fn elo_update(state: &EloState, rec: &MatchRecord) -> EloState {
    let mut next = state.clone();
    next.update(rec);
    next
}

/// Elo ratings after a training stream plus a draw margin fitted to it.
#[derive(Debug, Clone)]
pub struct EloModel {
    pub state: EloState,
    pub draw: DrawParam,
}

impl EloModel {
    /// Runs the ratings through `train` in date order. Each match is scored
    /// with the ratings from before it, and those pre-match latents are used
    /// to fit the draw margin.
    pub fn fit(train: &Dataset, k_factor: f64, home_advantage: f64) -> Result<Self> {
        Self::fit_from(train, EloState::new(k_factor, home_advantage))
    }

    /// As [`EloModel::fit`], starting from `state` (its ratings, k-factor,
    /// home advantage and default rating).
    pub fn fit_from(train: &Dataset, mut state: EloState) -> Result<Self> {
        let mut latents = Vec::with_capacity(train.n());
        let mut outcomes = Vec::with_capacity(train.n());
        for rec in train.records() {
            latents.push(elo_latent(state.delta(rec)));
            outcomes.push(rec.outcome);
            state.update(rec);
        }
        let draw = fit_draw_margin(&latents, &outcomes)?;
        Ok(EloModel { state, draw })
    }

    pub fn predict(&self, rec: &MatchRecord) -> PredictiveDistribution {
        self.state.predict(rec, &self.draw)
    }
}

/// Maximum-likelihood draw margin for fixed latent scores, by golden-section
/// search on `ln alpha`.
pub fn fit_draw_margin(latents: &[f64], outcomes: &[Outcome]) -> Result<DrawParam> {
    if latents.len() != outcomes.len() {
        return Err(Error::InvalidParameter("latents and outcomes differ in length".into()));
    }
    let log_lik = |log_alpha: f64| -> f64 {
        let d = DrawParam::from_log(log_alpha).expect("finite log alpha");
        latents
            .iter()
            .zip(outcomes)
            .map(|(&f, &y)| rao_kupper::log_likelihood(y, f, &d))
            .sum()
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-10.0f64, 3.0f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut v1, mut v2) = (log_lik(x1), log_lik(x2));
    while hi - lo > 1e-9 {
        if v1 > v2 {
            hi = x2;
            x2 = x1;
            v2 = v1;
            x1 = hi - inv_phi * (hi - lo);
            v1 = log_lik(x1);
        } else {
            lo = x1;
            x1 = x2;
            v1 = v2;
            x2 = lo + inv_phi * (hi - lo);
            v2 = log_lik(x2);
        }
    }
    DrawParam::from_log(0.5 * (lo + hi))
}

/// Inverse decimal odds normalized to sum to one.
pub fn odds_to_probs(o_w: f64, o_d: f64, o_l: f64) -> Result<PredictiveDistribution> {
    for o in [o_w, o_d, o_l] {
        if !(o.is_finite() && o > 1.0) {
            return Err(Error::InvalidParameter(format!("decimal odds must exceed 1, got {o}")));
        }
    }
    Ok(PredictiveDistribution {
        p_w: 1.0 / o_w,
        p_d: 1.0 / o_d,
        p_l: 1.0 / o_l,
    }
    .normalized())
}

/// Reads `match_id,odds_w,odds_d,odds_l` rows into per-match probabilities.
pub fn parse_odds<R: Read>(source: R) -> Result<HashMap<String, PredictiveDistribution>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().ne(["match_id", "odds_w", "odds_d", "odds_l"]) {
        return Err(Error::Malformed {
            line: 1,
            message: "expected header `match_id,odds_w,odds_d,odds_l`".into(),
        });
    }
    let mut out = HashMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |message: String| Error::Malformed { line, message };
        let num = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| malformed(format!("bad odds value `{}`", &row[i])))
        };
        let probs = odds_to_probs(num(1)?, num(2)?, num(3)?).map_err(|e| malformed(e.to_string()))?;
        if out.insert(row[0].to_owned(), probs).is_some() {
            return Err(Error::DuplicateMatch(row[0].to_owned()));
        }
    }
    Ok(out)
}

pub fn uniform_probs() -> PredictiveDistribution {
    PredictiveDistribution::uniform()
}
