//! One-dimensional environment with closed-form quantiles and density ratio.
//!
//! `x ~ U(-1, 1)`, `p(B|x) = logistic(βx)`, `p(A|x) = logistic(-βx)`.
//! Under app `B` the KPI is `y = x + σ(x)·u` with `u ~ U(-1, 1)` and
//! `σ(x) = 0.1 + 0.45·(1 - x)`, so the τ-quantile is `x + σ(x)(2τ - 1)`.
//! Under app `A` it is `y = -x + 0.2·u`.

use std::fmt;
use std::str::FromStr;

use ccke_core::conformal::IntervalSet;
use ccke_core::quantile_net::{Architecture, Scaling};
use rand::Rng;

use super::Environment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynApp {
    A,
    B,
}

impl fmt::Display for SynApp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynApp::A => "A",
            SynApp::B => "B",
        })
    }
}

impl FromStr for SynApp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(SynApp::A),
            "B" | "b" => Ok(SynApp::B),
            other => Err(format!("unknown synthetic app '{other}' (expected A or B)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnv {
    beta: f64,
    alpha: f64,
    interval_scale: f64,
}

impl SyntheticEnv {
    /// `interval_scale` multiplies the half-width of the exact
    /// `[α/2, 1-α/2]` quantile interval handed to the calibrators; 1 gives
    /// the true quantiles, smaller values an overconfident model.
    pub fn new(beta: f64, alpha: f64, interval_scale: f64) -> Self {
        assert!(beta.is_finite() && beta > 0.0, "beta must be positive");
        assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
        assert!(interval_scale >= 0.0, "interval scale must be nonnegative");
        Self {
            beta,
            alpha,
            interval_scale,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn noise_scale(x: f64) -> f64 {
        0.1 + 0.45 * (1.0 - x)
    }

    /// Exact τ-quantile of `y_B` given `x`.
    pub fn quantile(x: f64, tau: f64) -> f64 {
        x + Self::noise_scale(x) * (2.0 * tau - 1.0)
    }
}

/// `ln logistic(z)` without overflow.
fn log_logistic(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

impl Environment for SyntheticEnv {
    type Context = f64;
    type App = SynApp;

    fn name(&self) -> &'static str {
        "SYN"
    }

    fn apps(&self) -> Vec<SynApp> {
        vec![SynApp::A, SynApp::B]
    }

    fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    fn kpi_count(&self) -> usize {
        1
    }

    fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(-1.0..1.0)
    }

    fn log_probability(&self, app: SynApp, x: &f64) -> f64 {
        match app {
            SynApp::A => log_logistic(-self.beta * x),
            SynApp::B => log_logistic(self.beta * x),
        }
    }

    fn select_app<R: Rng + ?Sized>(&self, x: &f64, rng: &mut R) -> SynApp {
        if rng.random::<f64>() < self.log_probability(SynApp::B, x).exp() {
            SynApp::B
        } else {
            SynApp::A
        }
    }

    fn log_weight(&self, target: SynApp, actual: SynApp, x: &f64) -> f64 {
        match (target, actual) {
            (SynApp::B, SynApp::A) => -self.beta * x,
            (SynApp::A, SynApp::B) => self.beta * x,
            _ => 0.0,
        }
    }

    fn rollout<R: Rng + ?Sized>(&self, app: SynApp, x: &f64, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random_range(-1.0..1.0);
        vec![match app {
            SynApp::B => x + Self::noise_scale(*x) * u,
            SynApp::A => -x + 0.2 * u,
        }]
    }

    fn features(&self, x: &f64) -> Vec<f64> {
        vec![*x]
    }

    fn normalizer(&self, _x: &f64) -> f64 {
        1.0
    }

    fn kpi_domain(&self, _x: &f64) -> (f64, f64) {
        (-5.0, 5.0)
    }

    fn architecture(&self) -> Architecture {
        Architecture::FeedForward {
            widths: vec![1, 16, 16, 2],
        }
    }

    fn scaling(&self) -> Scaling {
        Scaling::identity(1)
    }

    fn context_header(&self) -> Vec<String> {
        vec!["x".into()]
    }

    fn context_record(&self, x: &f64) -> Vec<String> {
        vec![x.to_string()]
    }

    fn kpi_header(&self) -> Vec<String> {
        vec!["y".into()]
    }

    fn analytic_intervals(&self, x: &f64) -> Option<IntervalSet> {
        let half = Self::noise_scale(*x) * (1.0 - self.alpha) * self.interval_scale;
        Some(IntervalSet::new(vec![x - half], vec![x + half]).expect("one KPI"))
    }
}
