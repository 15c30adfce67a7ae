//! Average log-loss evaluation of ternary predictors.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use crate::baselines::EloModel;
use crate::data::{Dataset, MatchRecord, Outcome, Registry};
use crate::error::{Error, Result};
use crate::gp::{vector_for_prediction, LaplacePosterior};
use crate::rao_kupper::PredictiveDistribution;

/// Probability floor applied when clipping is enabled.
pub const CLIP_FLOOR: f64 = 1e-15;

/// Anything that produces a win/draw/loss distribution for a match. `None`
/// means the predictor has nothing to say about that match and it is left
/// out of the predictor's score.
pub trait Predictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, rec: &MatchRecord) -> Option<PredictiveDistribution>;
}

pub struct UniformPredictor;

impl Predictor for UniformPredictor {
    fn name(&self) -> &str {
        "random"
    }

    fn predict(&self, _: &MatchRecord) -> Option<PredictiveDistribution> {
        Some(PredictiveDistribution::uniform())
    }
}

pub struct GpPredictor {
    pub name: String,
    pub posterior: LaplacePosterior,
    pub registry: Registry,
}

impl Predictor for GpPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, rec: &MatchRecord) -> Option<PredictiveDistribution> {
        Some(self.posterior.predict_outcomes(&vector_for_prediction(rec, &self.registry)))
    }
}

impl Predictor for EloModel {
    fn name(&self) -> &str {
        "elo"
    }

    fn predict(&self, rec: &MatchRecord) -> Option<PredictiveDistribution> {
        Some(EloModel::predict(self, rec))
    }
}

pub struct OddsPredictor {
    pub probs: HashMap<String, PredictiveDistribution>,
}

impl Predictor for OddsPredictor {
    fn name(&self) -> &str {
        "odds"
    }

    fn predict(&self, rec: &MatchRecord) -> Option<PredictiveDistribution> {
        self.probs.get(&rec.match_id).copied()
    }
}

/// Natural-log loss of a single prediction, or `None` if the realized outcome
/// has zero probability.
fn single_loss(p: &PredictiveDistribution, y: Outcome, clip: bool) -> Option<f64> {
    let q = p.prob(y);
    if q > 0.0 {
        Some(-q.ln())
    } else if clip {
        Some(-CLIP_FLOOR.ln())
    } else {
        None
    }
}

/// `-(1/T) Σ ln p(realized outcome)`.
pub fn log_loss(preds: &[PredictiveDistribution], outcomes: &[Outcome]) -> Result<f64> {
    log_loss_with(preds, outcomes, false)
}

/// [`log_loss`] where, with `clip` set, zero probabilities are floored at
/// [`CLIP_FLOOR`] instead of failing.
pub fn log_loss_with(preds: &[PredictiveDistribution], outcomes: &[Outcome], clip: bool) -> Result<f64> {
    if preds.len() != outcomes.len() || preds.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "log loss needs equal, non-zero lengths (got {} predictions, {} outcomes)",
            preds.len(),
            outcomes.len()
        )));
    }
    let mut total = 0.0;
    for (i, (p, &y)) in preds.iter().zip(outcomes).enumerate() {
        total += single_loss(p, y, clip).ok_or_else(|| Error::ZeroProbability {
            match_id: format!("#{i}"),
        })?;
    }
    Ok(total / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchScore {
    pub match_id: String,
    pub probs: PredictiveDistribution,
    pub outcome: Outcome,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    /// Training matches.
    pub n: usize,
    /// Distinct players over training and test matches.
    pub p: usize,
    /// Test matches scored.
    pub t: usize,
    /// Test matches the model declined to score.
    pub skipped: usize,
    pub avg_log_loss: f64,
    pub rows: Vec<MatchScore>,
}

/// Scores every model on the same test set.
pub fn evaluate(models: &[&dyn Predictor], train: &Dataset, test: &Dataset, clip: bool) -> Result<Vec<EvalReport>> {
    let players: HashSet<_> = train
        .records()
        .iter()
        .chain(test.records())
        .flat_map(|r| r.lineup1.iter().chain(&r.lineup2))
        .collect();
    let p = players.len();

    models
        .iter()
        .map(|model| {
            let mut rows = Vec::with_capacity(test.n());
            let mut skipped = 0;
            for rec in test.records() {
                let Some(probs) = model.predict(rec) else {
                    skipped += 1;
                    continue;
                };
                let q = probs.prob(rec.outcome);
                let loss = match single_loss(&probs, rec.outcome, clip) {
                    Some(l) if q > 0.0 => l,
                    Some(l) => {
                        tracing::warn!(
                            "{}: zero probability for the realized outcome of `{}`; clipped to {CLIP_FLOOR:e}",
                            model.name(),
                            rec.match_id
                        );
                        l
                    }
                    None => {
                        return Err(Error::ZeroProbability {
                            match_id: rec.match_id.clone(),
                        })
                    }
                };
                rows.push(MatchScore {
                    match_id: rec.match_id.clone(),
                    probs,
                    outcome: rec.outcome,
                    loss,
                });
            }
            if skipped > 0 {
                tracing::warn!("{}: skipped {skipped} of {} test matches", model.name(), test.n());
            }
            let t = rows.len();
            let avg_log_loss = if t == 0 {
                f64::NAN
            } else {
                rows.iter().map(|r| r.loss).sum::<f64>() / t as f64
            };
            Ok(EvalReport {
                model: model.name().to_owned(),
                n: train.n(),
                p,
                t,
                skipped,
                avg_log_loss,
                rows,
            })
        })
        .collect()
}

/// Plain-text table with one row per model.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} {:>8} {:>8} {:>6} {:>10}", "model", "N", "P", "T", "log loss");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$} {:>8} {:>8} {:>6} {:>10.3}",
            r.model, r.n, r.p, r.t, r.avg_log_loss
        );
    }
    out
}

pub fn write_summary_csv<W: Write>(reports: &[EvalReport], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["model", "N", "P", "T", "avg_log_loss"])?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            r.n.to_string(),
            r.p.to_string(),
            r.t.to_string(),
            r.avg_log_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_per_match_csv<W: Write>(reports: &[EvalReport], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["model", "match_id", "p_w", "p_d", "p_l", "outcome", "loss"])?;
    for r in reports {
        for row in &r.rows {
            w.write_record([
                r.model.clone(),
                row.match_id.clone(),
                row.probs.p_w.to_string(),
                row.probs.p_d.to_string(),
                row.probs.p_l.to_string(),
                row.outcome.token().to_owned(),
                row.loss.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
