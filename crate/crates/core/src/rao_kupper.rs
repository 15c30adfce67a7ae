//! Rao–Kupper ternary likelihood.
//!
//! For a latent team1 advantage `f` and draw margin `alpha > 0`:
//!
//! ```text
//! p_win  = 1 / (1 + exp(alpha - f))
//! p_loss = 1 / (1 + exp(alpha + f))
//! p_draw = (exp(2 alpha) - 1) * p_win * p_loss
//! ```
//!
//! The three terms sum to one. As `alpha -> 0` draws vanish and `p_win` is the
//! logistic Bradley–Terry probability. Every log-probability is a sum of
//! log-sigmoids, so the log-likelihood is concave in `f` for each outcome.

use crate::data::Outcome;
use crate::error::{Error, Result};

/// Draw margin, stored as its logarithm so that optimizers can move freely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawParam {
    log_alpha: f64,
}

impl DrawParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("draw margin must be finite and > 0, got {alpha}")));
        }
        Ok(DrawParam { log_alpha: alpha.ln() })
    }

    pub fn from_log(log_alpha: f64) -> Result<Self> {
        Self::new(log_alpha.exp())
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }
}

/// Probabilities of team1 win, draw and team2 win.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub p_w: f64,
    pub p_d: f64,
    pub p_l: f64,
}

impl PredictiveDistribution {
    pub fn uniform() -> Self {
        let third = 1.0 / 3.0;
        PredictiveDistribution {
            p_w: third,
            p_d: third,
            p_l: third,
        }
    }

    pub fn prob(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Team1Win => self.p_w,
            Outcome::Draw => self.p_d,
            Outcome::Team2Win => self.p_l,
        }
    }

    pub fn sum(&self) -> f64 {
        self.p_w + self.p_d + self.p_l
    }

    /// Rescales the triple to sum to one.
    pub fn normalized(&self) -> Self {
        let s = self.sum();
        PredictiveDistribution {
            p_w: self.p_w / s,
            p_d: self.p_d / s,
            p_l: self.p_l / s,
        }
    }

    /// The same distribution from team2's side.
    pub fn swapped(&self) -> Self {
        PredictiveDistribution {
            p_w: self.p_l,
            p_d: self.p_d,
            p_l: self.p_w,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_w, self.p_d, self.p_l]
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln sigmoid(x)`.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_probs(f: f64, alpha: f64) -> [f64; 3] {
    let log_w = log_sigmoid(f - alpha);
    let log_l = log_sigmoid(-f - alpha);
    let log_d = (2.0 * alpha).exp_m1().ln() + (log_w + log_l);
    [log_w, log_d, log_l]
}

pub fn outcome_probs(f: f64, d: &DrawParam) -> PredictiveDistribution {
    let [lw, ld, ll] = log_probs(f, d.alpha());
    PredictiveDistribution {
        p_w: lw.exp(),
        p_d: ld.exp(),
        p_l: ll.exp(),
    }
}

pub fn log_likelihood(y: Outcome, f: f64, d: &DrawParam) -> f64 {
    let [lw, ld, ll] = log_probs(f, d.alpha());
    match y {
        Outcome::Team1Win => lw,
        Outcome::Draw => ld,
        Outcome::Team2Win => ll,
    }
}

/// First and second derivative of [`log_likelihood`] with respect to `f`.
/// The second derivative is never positive.
pub fn log_likelihood_derivs(y: Outcome, f: f64, d: &DrawParam) -> (f64, f64) {
    let alpha = d.alpha();
    // d/df ln sigmoid(f - a) = sigmoid(a - f); d/df ln sigmoid(-f - a) = -sigmoid(a + f)
    let win = || {
        let s = sigmoid(alpha - f);
        (s, -s * sigmoid(f - alpha))
    };
    let loss = || {
        let s = sigmoid(alpha + f);
        (-s, -s * sigmoid(-f - alpha))
    };
    match y {
        Outcome::Team1Win => win(),
        Outcome::Team2Win => loss(),
        Outcome::Draw => {
            let (w1, w2) = win();
            let (l1, l2) = loss();
            (w1 + l1, w2 + l2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::*;

    fn dp(alpha: f64) -> DrawParam {
        DrawParam::new(alpha).unwrap()
    }

    #[test]
    fn even_match() {
        for alpha in [0.1, 0.5, 1.0, 3.0] {
            let p = outcome_probs(0.0, &dp(alpha));
            let side = 1.0 / (1.0 + alpha.exp());
            assert!((p.p_w - side).abs() < 1e-15);
            assert_eq!(p.p_w, p.p_l);
            assert!((p.p_d - (alpha / 2.0).tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn ln2_closed_forms() {
        let d = dp(2f64.ln());
        let third = (1.0f64 / 3.0).ln();
        assert!((log_likelihood(Team1Win, 0.0, &d) - third).abs() < 1e-14);
        assert!((log_likelihood(Draw, 0.0, &d) - third).abs() < 1e-14);
        assert!((log_likelihood(Team2Win, 0.0, &d) - third).abs() < 1e-14);
    }

    #[test]
    fn small_margin_recovers_logistic() {
        let d = dp(1e-8);
        for f in [-4.0, -0.3, 0.0, 1.7, 6.0] {
            let p = outcome_probs(f, &d);
            assert!((p.p_w - 1.0 / (1.0 + (-f).exp())).abs() < 1e-6);
            assert!(p.p_d < 1e-7);
        }
    }

    #[test]
    fn extreme_scores() {
        let d = dp(0.5);
        let p = outcome_probs(800.0, &d);
        assert_eq!(p.as_array(), [1.0, 0.0, 0.0]);
        let p = outcome_probs(-800.0, &d);
        assert_eq!(p.as_array(), [0.0, 0.0, 1.0]);
        assert!(log_likelihood(Team2Win, 800.0, &d).is_finite());
        let (d1, d2) = log_likelihood_derivs(Team2Win, 800.0, &d);
        assert_eq!((d1, d2), (-1.0, 0.0));
    }

    #[test]
    fn logistic_derivatives() {
        let (d1, d2) = log_likelihood_derivs(Team1Win, 0.0, &dp(1e-300));
        assert!((d1 - 0.5).abs() < 1e-15 && (d2 + 0.25).abs() < 1e-15);
    }

    #[test]
    fn draw_gradient_vanishes_at_zero() {
        for alpha in [0.01, 0.5, 4.0] {
            assert_eq!(log_likelihood_derivs(Draw, 0.0, &dp(alpha)).0, 0.0);
        }
    }

    #[test]
    fn draw_param_validation() {
        assert!(DrawParam::new(0.0).is_err());
        assert!(DrawParam::new(-1.0).is_err());
        assert!(DrawParam::new(f64::NAN).is_err());
        let d = DrawParam::from_log(0.3f64.ln()).unwrap();
        assert!((d.alpha() - 0.3).abs() < 1e-15);
    }
}
