//! Weight-space Laplace fit: one explicit skill per player plus a home
//! weight, with a Gaussian prior and the Rao–Kupper likelihood on
//! `f = s . [z; h]`.
//!
//! This is the same model as the kernel-space classifier written over
//! parameters instead of matches. It costs O((P+1)^3) and exists to check the
//! kernel formulation on small problems.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::{Dataset, Outcome};
use crate::error::{Error, Result};
use crate::gp::{predictive_distribution, Hyperparams};
use crate::kernel::{build_match_vectors, MatchVector};
use crate::rao_kupper::{self, PredictiveDistribution};

/// Dense per-player skills followed by the home-advantage weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillVector(pub DVector<f64>);

impl SkillVector {
    pub fn player(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn home(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

#[derive(Debug, Clone)]
pub struct PrimalPosterior {
    /// Posterior mode of the whitened weights `u = D^{-1/2} s`.
    u: DVector<f64>,
    /// Posterior covariance of `u`.
    cov_u: DMatrix<f64>,
    /// Prior standard deviations, `D^{1/2}`.
    scale: DVector<f64>,
    num_players: usize,
    hyper: Hyperparams,
}

pub fn primal_laplace_fit(train: &Dataset, hyper: &Hyperparams) -> Result<PrimalPosterior> {
    let vectors = build_match_vectors(train)?;
    let outcomes: Vec<_> = train.records().iter().map(|r| r.outcome).collect();
    primal_laplace_fit_vectors(&vectors, &outcomes, train.registry().len(), hyper)
}

pub fn primal_laplace_fit_vectors(
    vectors: &[MatchVector],
    outcomes: &[Outcome],
    num_players: usize,
    hyper: &Hyperparams,
) -> Result<PrimalPosterior> {
    hyper.validate()?;
    if vectors.len() != outcomes.len() {
        return Err(Error::InvalidParameter("vectors and outcomes differ in length".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.max_index() >= num_players) {
        return Err(Error::InvalidParameter(format!(
            "player index {} outside 0..{num_players}",
            v.max_index()
        )));
    }
    let dim = num_players + 1;
    let mut scale = DVector::from_element(dim, hyper.kernel.sigma2.sqrt());
    scale[num_players] = hyper.kernel.sigma2_home.sqrt();

    // Rows are whitened features D^{1/2} [z; h].
    let n = vectors.len();
    let mut x = DMatrix::zeros(n, dim);
    for (i, v) in vectors.iter().enumerate() {
        let dense = v.to_dense(num_players);
        for j in 0..dim {
            x[(i, j)] = dense[j] * scale[j];
        }
    }

    let draw = &hyper.draw;
    let objective = |u: &DVector<f64>| -> f64 {
        let f = &x * u;
        outcomes
            .iter()
            .zip(f.iter())
            .map(|(&y, &fi)| rao_kupper::log_likelihood(y, fi, draw))
            .sum::<f64>()
            - 0.5 * u.norm_squared()
    };
    let curvature = |u: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let f = &x * u;
        let mut d1 = DVector::zeros(n);
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let (g, h) = rao_kupper::log_likelihood_derivs(outcomes[i], f[i], draw);
            d1[i] = g;
            w[i] = -h;
        }
        let grad = x.transpose() * d1 - u;
        let mut neg_hessian = x.transpose() * DMatrix::from_diagonal(&w) * &x;
        for j in 0..dim {
            neg_hessian[(j, j)] += 1.0;
        }
        (grad, neg_hessian)
    };

    let mut u = DVector::zeros(dim);
    let mut value = objective(&u);
    let mut converged = false;
    let mut last_delta = f64::INFINITY;
    const MAX_ITER: usize = 200;
    for _ in 0..MAX_ITER {
        let (grad, neg_hessian) = curvature(&u);
        if grad.amax() < 1e-13 {
            converged = true;
            break;
        }
        let chol = Cholesky::new(neg_hessian).ok_or(Error::Cholesky {
            jitter: 0.0,
            max_diag: f64::NAN,
            max_w: f64::NAN,
        })?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &u + &step * t;
            let v = objective(&candidate);
            if v >= value {
                last_delta = v - value;
                u = candidate;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || last_delta.abs() < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_ITER,
            last_delta,
        });
    }

    let (_, neg_hessian) = curvature(&u);
    let cov_u = neg_hessian.try_inverse().ok_or(Error::Cholesky {
        jitter: 0.0,
        max_diag: f64::NAN,
        max_w: f64::NAN,
    })?;
    Ok(PrimalPosterior {
        u,
        cov_u,
        scale,
        num_players,
        hyper: *hyper,
    })
}

impl PrimalPosterior {
    /// Posterior mean of the unwhitened skills.
    pub fn skills(&self) -> SkillVector {
        SkillVector(self.u.component_mul(&self.scale))
    }

    /// Posterior covariance of the unwhitened skills.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.scale);
        &d * &self.cov_u * &d
    }

    /// Predictive latent mean and variance. Players outside the fitted range
    /// contribute only their prior variance.
    pub fn predict_latent(&self, test: &MatchVector) -> (f64, f64) {
        let p = self.num_players;
        let mut x = DVector::zeros(p + 1);
        let mut unseen = 0usize;
        for (&i, sign) in test
            .plus_indices()
            .iter()
            .map(|i| (i, 1.0))
            .chain(test.minus_indices().iter().map(|i| (i, -1.0)))
        {
            if i < p {
                x[i] = sign * self.scale[i];
            } else {
                unseen += 1;
            }
        }
        x[p] = test.home() * self.scale[p];
        let mu = self.u.dot(&x);
        let var = (x.transpose() * &self.cov_u * &x)[(0, 0)] + unseen as f64 * self.hyper.kernel.sigma2;
        (mu, var)
    }

    pub fn predict_outcomes(&self, test: &MatchVector) -> PredictiveDistribution {
        let (mu, var) = self.predict_latent(test);
        predictive_distribution(mu, var, &self.hyper.draw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_matches_gives_prior() {
        let h = Hyperparams::new(0.4, 0.3, 0.5).unwrap();
        let post = primal_laplace_fit_vectors(&[], &[], 30, &h).unwrap();
        let test = MatchVector::new((0..11).collect(), (11..22).collect(), 1.0).unwrap();
        let (mu, var) = post.predict_latent(&test);
        assert_eq!(mu, 0.0);
        assert!((var - (22.0 * 0.4 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn skills_follow_results() {
        let h = Hyperparams::new(1.0, 0.0, 0.5).unwrap();
        let v = MatchVector::new((0..11).collect(), (11..22).collect(), 0.0).unwrap();
        let post = primal_laplace_fit_vectors(&[v], &[Outcome::Team1Win], 22, &h).unwrap();
        let s = post.skills();
        assert!(s.player(0) > 0.0 && s.player(11) < 0.0);
        assert_eq!(s.home(), 0.0);
    }
}
