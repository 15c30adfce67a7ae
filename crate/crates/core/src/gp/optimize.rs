//! Derivative-free hyperparameter search on the Laplace evidence.
//!
//! The search runs in `(ln sigma2, ln sigma2_home, ln alpha)` with
//! Nelder–Mead, from the initial point and from two fixed offsets of it,
//! sharing one budget of evidence evaluations.

use crate::data::{Dataset, Outcome};
use crate::error::Result;
use crate::kernel::{self, MatchVector};
use crate::rao_kupper::DrawParam;

use super::{fit_vectors, FitSettings, Hyperparams};

const DIM: usize = 3;

/// Box in log space the search is confined to.
const LOWER: [f64; DIM] = [-12.0, -14.0, -10.0];
const UPPER: [f64; DIM] = [6.0, 4.0, 3.0];

/// Offsets of the two restart points from the initial point.
const RESTART_OFFSETS: [[f64; DIM]; 2] = [[1.0, -1.0, 0.5], [-1.0, 1.0, -0.5]];

/// Floor for `sigma2_home` when taking its logarithm.
const MIN_HOME_VARIANCE: f64 = 1e-6;

pub fn optimize_hyperparams(train: &Dataset, init: &Hyperparams, budget: usize) -> Result<Hyperparams> {
    optimize_hyperparams_with(train, init, budget, &FitSettings::default())
}

/// Returns the hyperparameters with the highest evidence among at most
/// `budget` evaluations. The initial point is always evaluated first, so the
/// result never has lower evidence than `init`.
pub fn optimize_hyperparams_with(
    train: &Dataset,
    init: &Hyperparams,
    budget: usize,
    settings: &FitSettings,
) -> Result<Hyperparams> {
    init.validate()?;
    let vectors = kernel::build_match_vectors(train)?;
    let outcomes: Vec<Outcome> = train.records().iter().map(|r| r.outcome).collect();
    let relative_jitter = init.kernel.jitter / init.kernel.sigma2;

    let mut objective = Objective {
        vectors,
        outcomes,
        relative_jitter,
        settings: *settings,
        evals: 0,
        best: (*init, f64::NEG_INFINITY),
    };

    let x0 = to_log(init);
    let v0 = objective.evidence_strict(init)?;
    if budget <= 1 {
        return Ok(*init);
    }

    let remaining = budget - 1;
    let share = remaining / 3;
    let starts = [
        (x0, Some(v0), remaining - 2 * share),
        (offset(&x0, &RESTART_OFFSETS[0]), None, share),
        (offset(&x0, &RESTART_OFFSETS[1]), None, share),
    ];
    for (start, known, evals) in starts {
        if evals == 0 {
            continue;
        }
        nelder_mead(&mut objective, start, known, evals);
    }
    tracing::debug!(
        "hyperparameter search used {} evaluations, best log evidence {:.6}",
        objective.evals,
        objective.best.1
    );
    Ok(objective.best.0)
}

fn offset(x: &[f64; DIM], d: &[f64; DIM]) -> [f64; DIM] {
    clamp([x[0] + d[0], x[1] + d[1], x[2] + d[2]])
}

fn clamp(mut x: [f64; DIM]) -> [f64; DIM] {
    for i in 0..DIM {
        x[i] = x[i].clamp(LOWER[i], UPPER[i]);
    }
    x
}

fn to_log(h: &Hyperparams) -> [f64; DIM] {
    clamp([
        h.kernel.sigma2.ln(),
        h.kernel.sigma2_home.max(MIN_HOME_VARIANCE).ln(),
        h.draw.log_alpha(),
    ])
}

struct Objective {
    vectors: Vec<MatchVector>,
    outcomes: Vec<Outcome>,
    relative_jitter: f64,
    settings: FitSettings,
    evals: usize,
    best: (Hyperparams, f64),
}

impl Objective {
    fn hyper_at(&self, x: &[f64; DIM]) -> Result<Hyperparams> {
        let sigma2 = x[0].exp();
        Ok(Hyperparams::new(sigma2, x[1].exp(), DrawParam::from_log(x[2])?.alpha())?
            .with_jitter(self.relative_jitter * sigma2))
    }

    fn evidence_strict(&mut self, h: &Hyperparams) -> Result<f64> {
        self.evals += 1;
        let post = fit_vectors(self.vectors.clone(), self.outcomes.clone(), h, &self.settings, None)?;
        let v = post.log_marginal();
        if v > self.best.1 {
            self.best = (*h, v);
        }
        Ok(v)
    }

    /// Negative evidence at a log-space point; failed fits count as +inf.
    fn cost(&mut self, x: &[f64; DIM]) -> f64 {
        let v = self
            .hyper_at(x)
            .and_then(|h| self.evidence_strict(&h))
            .unwrap_or_else(|e| {
                tracing::debug!("evidence evaluation failed at {x:?}: {e}");
                f64::NEG_INFINITY
            });
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    }
}

/// Minimizes `obj.cost` from `start` using at most `max_evals` evaluations.
fn nelder_mead(obj: &mut Objective, start: [f64; DIM], known: Option<f64>, max_evals: usize) {
    const STEP: f64 = 0.5;
    let mut used = 0usize;
    let eval = |obj: &mut Objective, x: [f64; DIM], used: &mut usize| -> Option<([f64; DIM], f64)> {
        if *used >= max_evals {
            return None;
        }
        *used += 1;
        let x = clamp(x);
        Some((x, obj.cost(&x)))
    };

    let mut simplex: Vec<([f64; DIM], f64)> = Vec::with_capacity(DIM + 1);
    match known {
        Some(v) => simplex.push((start, -v)),
        None => match eval(obj, start, &mut used) {
            Some(p) => simplex.push(p),
            None => return,
        },
    }
    let build = |obj: &mut Objective, centre: [f64; DIM], step: f64, simplex: &mut Vec<_>, used: &mut usize| -> bool {
        for i in 0..DIM {
            let mut x = centre;
            // step towards the interior when the centre sits on the box edge
            x[i] += if x[i] + step > UPPER[i] { -step } else { step };
            match eval(obj, x, used) {
                Some(p) => simplex.push(p),
                None => return false,
            }
        }
        true
    };
    if !build(obj, start, STEP, &mut simplex, &mut used) {
        return;
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[DIM].1);
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| (0..DIM).map(|i| (x[i] - simplex[0].0[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = (worst - best).abs();
        if spread < 1e-9 && diameter < 1e-5 {
            return;
        }
        if diameter < 1e-10 {
            // collapsed without the values agreeing; rebuild around the best vertex
            let centre = simplex[0];
            simplex.clear();
            simplex.push(centre);
            if !build(obj, centre.0, 0.1, &mut simplex, &mut used) {
                return;
            }
            continue;
        }

        let mut centroid = [0.0; DIM];
        for (x, _) in &simplex[..DIM] {
            for i in 0..DIM {
                centroid[i] += x[i] / DIM as f64;
            }
        }
        let towards = |t: f64| -> [f64; DIM] {
            let mut x = [0.0; DIM];
            for i in 0..DIM {
                x[i] = centroid[i] + t * (simplex[DIM].0[i] - centroid[i]);
            }
            x
        };

        let Some(reflected) = eval(obj, towards(-1.0), &mut used) else { return };
        if reflected.1 < simplex[0].1 {
            let Some(expanded) = eval(obj, towards(-2.0), &mut used) else {
                simplex[DIM] = reflected;
                return;
            };
            simplex[DIM] = if expanded.1 < reflected.1 { expanded } else { reflected };
        } else if reflected.1 < simplex[DIM - 1].1 {
            simplex[DIM] = reflected;
        } else {
            let outside = reflected.1 < simplex[DIM].1;
            let Some(contracted) = eval(obj, towards(if outside { -0.5 } else { 0.5 }), &mut used) else {
                return;
            };
            if contracted.1 < reflected.1.min(simplex[DIM].1) {
                simplex[DIM] = contracted;
            } else {
                let anchor = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let mut x = [0.0; DIM];
                    for i in 0..DIM {
                        x[i] = anchor[i] + 0.5 * (v.0[i] - anchor[i]);
                    }
                    let Some(p) = eval(obj, x, &mut used) else { return };
                    *v = p;
                }
            }
        }
    }
}
