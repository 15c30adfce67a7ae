//! Gaussian process classification over match latents.
//!
//! The latent score of every training match gets a zero-mean GP prior with
//! the player kernel as covariance and the Rao–Kupper likelihood on top. The
//! posterior over latents is approximated by a Gaussian at its mode (Laplace),
//! found with damped Newton steps in the numerically stable form that only
//! factors `B = I + W^½ K W^½`. Predictions integrate the likelihood against
//! the Gaussian predictive latent with Gauss–Hermite quadrature.

mod optimize;
mod persist;

pub use optimize::{optimize_hyperparams, optimize_hyperparams_with};
pub use persist::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{Dataset, MatchRecord, Outcome, Registry};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams, MatchVector};
use crate::quadrature::predictive_rule;
use crate::rao_kupper::{self, DrawParam, PredictiveDistribution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub kernel: KernelParams,
    pub draw: DrawParam,
}

impl Hyperparams {
    /// Hyperparameters with the default relative jitter.
    pub fn new(sigma2: f64, sigma2_home: f64, alpha: f64) -> Result<Self> {
        let kernel = KernelParams::new(sigma2, sigma2_home);
        kernel.validate()?;
        Ok(Hyperparams {
            kernel,
            draw: DrawParam::new(alpha)?,
        })
    }

    pub fn with_jitter(self, jitter: f64) -> Self {
        Hyperparams {
            kernel: self.kernel.with_jitter(jitter),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        DrawParam::new(self.draw.alpha()).map(|_| ())
    }
}

/// Newton solver controls.
#[derive(Debug, Clone, Copy)]
pub struct FitSettings {
    pub max_iter: usize,
    /// Stop once an accepted step changes the objective by less than this.
    pub tol: f64,
    /// Worker threads for kernel assembly.
    pub threads: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            max_iter: 100,
            tol: 1e-10,
            threads: 1,
        }
    }
}

/// Laplace approximation to the latent posterior of a training set.
#[derive(Debug, Clone)]
pub struct LaplacePosterior {
    mode: DVector<f64>,
    sqrt_w: DVector<f64>,
    chol_b: DMatrix<f64>,
    train_vectors: Vec<MatchVector>,
    train_outcomes: Vec<Outcome>,
    hyper: Hyperparams,
    grad: DVector<f64>,
    iterations: usize,
}

struct LikelihoodTerms {
    d1: DVector<f64>,
    d2: DVector<f64>,
}

fn likelihood_terms(outcomes: &[Outcome], f: &DVector<f64>, draw: &DrawParam) -> LikelihoodTerms {
    let n = outcomes.len();
    let mut d1 = DVector::zeros(n);
    let mut d2 = DVector::zeros(n);
    for (i, &y) in outcomes.iter().enumerate() {
        let (g, h) = rao_kupper::log_likelihood_derivs(y, f[i], draw);
        d1[i] = g;
        d2[i] = h;
    }
    LikelihoodTerms { d1, d2 }
}

fn log_lik_only(outcomes: &[Outcome], f: &DVector<f64>, draw: &DrawParam) -> f64 {
    outcomes
        .iter()
        .zip(f.iter())
        .map(|(&y, &fi)| rao_kupper::log_likelihood(y, fi, draw))
        .sum()
}

/// Cholesky factor of `I + diag(sw) K diag(sw)`.
fn factor_b(k: &DMatrix<f64>, sw: &DVector<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| sw[i] * k[(i, j)] * sw[j] + if i == j { 1.0 } else { 0.0 });
    if b.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(b)
}

fn sqrt_curvature(d2: &DVector<f64>) -> DVector<f64> {
    d2.map(|h| (-h).max(0.0).sqrt())
}

pub fn fit(train: &Dataset, hyper: &Hyperparams) -> Result<LaplacePosterior> {
    fit_with(train, hyper, &FitSettings::default())
}

pub fn fit_with(train: &Dataset, hyper: &Hyperparams, settings: &FitSettings) -> Result<LaplacePosterior> {
    let vectors = kernel::build_match_vectors(train)?;
    let outcomes = train.records().iter().map(|r| r.outcome).collect();
    fit_vectors(vectors, outcomes, hyper, settings, None)
}

/// Fits the Laplace posterior for explicit match vectors. Newton starts from
/// `init` when given (its first step is taken undamped) and from zero
/// otherwise.
pub fn fit_vectors(
    vectors: Vec<MatchVector>,
    outcomes: Vec<Outcome>,
    hyper: &Hyperparams,
    settings: &FitSettings,
    init: Option<&[f64]>,
) -> Result<LaplacePosterior> {
    hyper.validate()?;
    if vectors.is_empty() {
        return Err(Error::InvalidParameter("cannot fit on an empty training set".into()));
    }
    if vectors.len() != outcomes.len() || init.is_some_and(|f| f.len() != vectors.len()) {
        return Err(Error::InvalidParameter("training vectors, outcomes and initial latents differ in length".into()));
    }

    let sigma2 = hyper.kernel.sigma2;
    let ceiling = 1e-2 * sigma2;
    let mut hyper = *hyper;
    loop {
        let k = kernel::gram_matrix_threaded(&vectors, &hyper.kernel, true, settings.threads);
        match newton(&k, hyper.kernel.jitter, &outcomes, &hyper.draw, settings, init) {
            Ok(state) => {
                return Ok(LaplacePosterior {
                    mode: state.f,
                    sqrt_w: state.sqrt_w,
                    chol_b: state.chol_l,
                    train_vectors: vectors,
                    train_outcomes: outcomes,
                    hyper,
                    grad: state.grad,
                    iterations: state.iterations,
                });
            }
            Err(Error::Cholesky { .. }) if hyper.kernel.jitter < ceiling => {
                let next = (hyper.kernel.jitter * 10.0).max(1e-6 * sigma2).min(ceiling);
                tracing::warn!(
                    "Cholesky factorization failed at jitter {:.3e}; retrying with {next:.3e}",
                    hyper.kernel.jitter
                );
                hyper = hyper.with_jitter(next);
            }
            Err(e) => return Err(e),
        }
    }
}

struct NewtonState {
    f: DVector<f64>,
    grad: DVector<f64>,
    sqrt_w: DVector<f64>,
    chol_l: DMatrix<f64>,
    iterations: usize,
}

fn newton(
    k: &DMatrix<f64>,
    jitter: f64,
    outcomes: &[Outcome],
    draw: &DrawParam,
    settings: &FitSettings,
    init: Option<&[f64]>,
) -> Result<NewtonState> {
    let n = k.nrows();
    let cholesky_error = |sw: &DVector<f64>| Error::Cholesky {
        jitter,
        max_diag: k.diagonal().max(),
        max_w: sw.iter().fold(0.0f64, |m, s| m.max(s * s)),
    };

    // a = K^{-1} f is carried alongside f so the prior term never needs K^{-1}.
    let mut a = DVector::zeros(n);
    let mut f = match init {
        Some(f0) => DVector::from_column_slice(f0),
        None => DVector::zeros(n),
    };
    let mut psi = if init.is_some() {
        f64::NEG_INFINITY
    } else {
        log_lik_only(outcomes, &f, draw)
    };

    let mut last_delta = f64::INFINITY;
    let mut polished = false;
    for iteration in 1..=settings.max_iter {
        let terms = likelihood_terms(outcomes, &f, draw);
        let sw = sqrt_curvature(&terms.d2);
        let chol = factor_b(k, &sw).ok_or_else(|| cholesky_error(&sw))?;

        let b = f.component_mul(&sw.component_mul(&sw)) + &terms.d1;
        let kb = k * &b;
        let inner = chol.solve(&sw.component_mul(&kb));
        let a_full = &b - sw.component_mul(&inner);
        let f_full = k * &a_full;

        if polished {
            // Inside the quadratic region Psi can no longer resolve the gain,
            // so the final step is taken without a line search.
            return finish(k, outcomes, draw, f_full, iteration, cholesky_error);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let a_t = &a + (&a_full - &a) * step;
            let f_t = &f + (&f_full - &f) * step;
            let psi_t = log_lik_only(outcomes, &f_t, draw) - 0.5 * a_t.dot(&f_t);
            if psi_t.is_finite() && psi_t >= psi {
                accepted = Some((a_t, f_t, psi_t));
                break;
            }
            step *= 0.5;
        }

        let Some((a_t, f_t, psi_t)) = accepted else {
            // No ascent direction left at working precision: f is the mode.
            let f = if last_delta.abs() < settings.tol.sqrt() { f_full } else { f };
            return finish(k, outcomes, draw, f, iteration, cholesky_error);
        };
        last_delta = psi_t - psi;
        a = a_t;
        f = f_t;
        psi = psi_t;
        // |dPsi| is quadratic in the mode error, so one more Newton step
        // after the test passes takes f from ~sqrt(tol) to working precision.
        polished = last_delta.abs() < settings.tol;
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iter,
        last_delta,
    })
}

fn finish(
    k: &DMatrix<f64>,
    outcomes: &[Outcome],
    draw: &DrawParam,
    f: DVector<f64>,
    iterations: usize,
    cholesky_error: impl Fn(&DVector<f64>) -> Error,
) -> Result<NewtonState> {
    let terms = likelihood_terms(outcomes, &f, draw);
    let sw = sqrt_curvature(&terms.d2);
    let chol = factor_b(k, &sw).ok_or_else(|| cholesky_error(&sw))?;
    Ok(NewtonState {
        f,
        grad: terms.d1,
        sqrt_w: sw,
        chol_l: chol.l(),
        iterations,
    })
}

impl LaplacePosterior {
    pub fn mode(&self) -> &DVector<f64> {
        &self.mode
    }

    pub fn sqrt_w(&self) -> &DVector<f64> {
        &self.sqrt_w
    }

    /// Lower Cholesky factor of `I + W^½ K W^½`.
    pub fn chol_b(&self) -> &DMatrix<f64> {
        &self.chol_b
    }

    pub fn train_vectors(&self) -> &[MatchVector] {
        &self.train_vectors
    }

    pub fn train_outcomes(&self) -> &[Outcome] {
        &self.train_outcomes
    }

    /// Hyperparameters of the fit, including any escalated jitter.
    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Gradient of the log-likelihood at the mode.
    pub fn grad(&self) -> &DVector<f64> {
        &self.grad
    }

    /// `max_i |f̂ - K ∇log p(y|f̂)|`, zero at an exact mode.
    pub fn stationarity_residual(&self) -> f64 {
        let k = kernel::gram_matrix(&self.train_vectors, &self.hyper.kernel, true);
        (&self.mode - k * &self.grad).amax()
    }

    /// Laplace approximation of the log evidence `log p(y | X, θ)`.
    pub fn log_marginal(&self) -> f64 {
        let log_lik = log_lik_only(&self.train_outcomes, &self.mode, &self.hyper.draw);
        let log_det_half: f64 = self.chol_b.diagonal().iter().map(|l| l.ln()).sum();
        log_lik - 0.5 * self.grad.dot(&self.mode) - log_det_half
    }

    /// Predictive mean and variance of the latent score of `test`.
    pub fn predict_latent(&self, test: &MatchVector) -> (f64, f64) {
        let p = &self.hyper.kernel;
        let k_star = DVector::from_vec(kernel::kernel_column(&self.train_vectors, test, p));
        let mu = k_star.dot(&self.grad);
        let rhs = self.sqrt_w.component_mul(&k_star);
        let v = self
            .chol_b
            .solve_lower_triangular(&rhs)
            .expect("Cholesky factor has a positive diagonal");
        let var = kernel::kernel_eval(test, test, p) - v.norm_squared();
        if var < 0.0 {
            if var < -1e-8 {
                tracing::warn!("negative predictive variance {var:.3e} clamped to zero");
            }
            return (mu, 0.0);
        }
        (mu, var)
    }

    pub fn predict_outcomes(&self, test: &MatchVector) -> PredictiveDistribution {
        let (mu, var) = self.predict_latent(test);
        predictive_distribution(mu, var, &self.hyper.draw)
    }
}

/// `E[outcome_probs(f)]` for `f ~ Normal(mu, var)`, by 32-node Gauss–Hermite
/// quadrature, renormalized to sum to one.
pub fn predictive_distribution(mu: f64, var: f64, draw: &DrawParam) -> PredictiveDistribution {
    if var <= 0.0 {
        return rao_kupper::outcome_probs(mu, draw);
    }
    let rule = predictive_rule();
    let scale = (2.0 * var).sqrt();
    let (mut w, mut d, mut l) = (0.0, 0.0, 0.0);
    for (&x, &weight) in rule.nodes().iter().zip(rule.weights()) {
        let p = rao_kupper::outcome_probs(mu + scale * x, draw);
        w += weight * p.p_w;
        d += weight * p.p_d;
        l += weight * p.p_l;
    }
    PredictiveDistribution { p_w: w, p_d: d, p_l: l }.normalized()
}

/// Match vector for `rec` against a training registry. Players the registry
/// has never seen get fresh indices past its end; they overlap with no
/// training match, so only their count matters.
pub fn vector_for_prediction(rec: &MatchRecord, registry: &Registry) -> MatchVector {
    let mut next = registry.len();
    let mut lookup = |ids: &[crate::data::PlayerId]| -> Vec<usize> {
        ids.iter()
            .map(|p| {
                registry.get(p).unwrap_or_else(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let plus = lookup(&rec.lineup1);
    let minus = lookup(&rec.lineup2);
    MatchVector::new(plus, minus, rec.home.sign()).expect("validated record yields a valid vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Outcome::*;

    fn mv(offset: usize, home: f64) -> MatchVector {
        MatchVector::new((offset..offset + 11).collect(), (offset + 11..offset + 22).collect(), home).unwrap()
    }

    fn exact(sigma2: f64, sigma2_home: f64, alpha: f64) -> Hyperparams {
        Hyperparams::new(sigma2, sigma2_home, alpha).unwrap().with_jitter(0.0)
    }

    /// Root of g on [lo, hi] by bisection.
    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(g(lo) * g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (g(mid) > 0.0) == (g(lo) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_match_mode_solves_scalar_equation() {
        let h = exact(1.0, 0.0, 0.5);
        let post = fit_vectors(vec![mv(0, 0.0)], vec![Team1Win], &h, &FitSettings::default(), None).unwrap();
        let root = bisect(
            |f| f - 22.0 * rao_kupper::log_likelihood_derivs(Team1Win, f, &h.draw).0,
            0.0,
            50.0,
        );
        assert!((post.mode()[0] - root).abs() < 1e-8, "{} vs {root}", post.mode()[0]);
    }

    #[test]
    fn symmetric_draws_have_zero_mode() {
        let h = Hyperparams::new(0.5, 0.2, 0.7).unwrap();
        let vs = vec![mv(0, 0.0), mv(5, 0.0), mv(40, 0.0)];
        let post = fit_vectors(vs, vec![Draw; 3], &h, &FitSettings::default(), None).unwrap();
        assert!(post.mode().amax() == 0.0);
    }

    #[test]
    fn draw_only_evidence_closed_form() {
        let h = exact(0.3, 0.0, 0.8);
        let v = mv(0, 0.0);
        let post = fit_vectors(vec![v.clone()], vec![Draw], &h, &FitSettings::default(), None).unwrap();
        let (_, d2) = rao_kupper::log_likelihood_derivs(Draw, 0.0, &h.draw);
        let kzz = kernel::kernel_eval(&v, &v, &h.kernel);
        let expected = rao_kupper::log_likelihood(Draw, 0.0, &h.draw) - 0.5 * (1.0 + kzz * -d2).ln();
        assert!((post.log_marginal() - expected).abs() < 1e-12);
        assert!(post.log_marginal() <= 0.0);
    }

    #[test]
    fn unrelated_test_match_keeps_prior() {
        let h = Hyperparams::new(0.7, 0.4, 0.5).unwrap();
        let train = vec![mv(0, 1.0), mv(3, -1.0)];
        let post = fit_vectors(train, vec![Team1Win, Team2Win], &h, &FitSettings::default(), None).unwrap();
        let (mu, var) = post.predict_latent(&mv(100, 0.0));
        assert_eq!(mu, 0.0);
        assert!((var - 22.0 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn repeated_observation_contracts_variance() {
        let h = Hyperparams::new(0.2, 0.1, 0.5).unwrap();
        let v = mv(0, 1.0);
        let outcomes = vec![Team1Win, Draw, Team1Win, Team2Win, Team1Win, Draw, Team1Win, Team1Win];
        let post = fit_vectors(vec![v.clone(); outcomes.len()], outcomes, &h, &FitSettings::default(), None).unwrap();
        let (_, var) = post.predict_latent(&v);
        assert!(var < 22.0 * 0.2 + 0.1);
        assert!(post.stationarity_residual() <= 1e-6 * post.mode().amax().max(1.0));
    }

    #[test]
    fn quadrature_degenerate_and_symmetric() {
        let d = DrawParam::new(0.6).unwrap();
        assert_eq!(predictive_distribution(0.8, 0.0, &d), rao_kupper::outcome_probs(0.8, &d));
        let p = predictive_distribution(0.0, 3.0, &d);
        assert!((p.p_w - p.p_l).abs() < 1e-15);
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_training_set() {
        let h = Hyperparams::new(1.0, 1.0, 0.5).unwrap();
        assert!(fit_vectors(vec![], vec![], &h, &FitSettings::default(), None).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let h = Hyperparams::new(1.0, 1.0, 0.5).unwrap();
        let settings = FitSettings {
            max_iter: 1,
            ..FitSettings::default()
        };
        let err = fit_vectors(vec![mv(0, 1.0)], vec![Team1Win], &h, &settings, None).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
        assert!(err.is_numerical());
    }
}
