//! Environments the harness can run counterfactual experiments in.

use std::fmt;
use std::str::FromStr;

use ccke_core::conformal::IntervalSet;
use ccke_core::quantile_net::{Architecture, Scaling};
use rand::Rng;

mod mac;
mod phy;
mod synthetic;

pub use mac::MacEnv;
pub use phy::PhyEnv;
pub use synthetic::{SynApp, SyntheticEnv};

/// Proposals drawn before conditional sampling gives up on an app.
pub const MAX_PROPOSALS: u64 = 100_000_000;

/// A context distribution `p(x)`, a selection policy `p(a|x)` and the
/// potential outcomes `y_a` of every app.
pub trait Environment: Send + Sync {
    type Context: Clone + Send + Sync + fmt::Debug;
    type App: Copy + Eq + Send + Sync + fmt::Debug + fmt::Display + FromStr<Err: fmt::Display>;

    /// Short label written to reports (`MAC`, `PHY`, `SYN`).
    fn name(&self) -> &'static str;
    fn apps(&self) -> Vec<Self::App>;
    fn temperature(&self) -> f64;
    /// KPIs per context (`K` for the scheduler, 1 for the link).
    fn kpi_count(&self) -> usize;

    fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Context;
    fn log_probability(&self, app: Self::App, ctx: &Self::Context) -> f64;
    /// Upper bound on `ln p(app|x)` over all contexts.
    fn log_probability_bound(&self, _app: Self::App) -> f64 {
        0.0
    }
    fn select_app<R: Rng + ?Sized>(&self, ctx: &Self::Context, rng: &mut R) -> Self::App;

    /// `ln w_{target→actual}(x) = ln p(actual|x) − ln p(target|x)`.
    fn log_weight(&self, target: Self::App, actual: Self::App, ctx: &Self::Context) -> f64 {
        self.log_probability(actual, ctx) - self.log_probability(target, ctx)
    }

    /// One draw of the potential outcome `y_app` under `ctx`.
    fn rollout<R: Rng + ?Sized>(&self, app: Self::App, ctx: &Self::Context, rng: &mut R) -> Vec<f64>;

    fn features(&self, ctx: &Self::Context) -> Vec<f64>;
    /// Inefficiency normalizer `ε_n`.
    fn normalizer(&self, ctx: &Self::Context) -> f64;
    /// Range used to clip unbounded prediction sets.
    fn kpi_domain(&self, ctx: &Self::Context) -> (f64, f64);

    fn architecture(&self) -> Architecture;
    fn scaling(&self) -> Scaling;

    /// Column names of the context in dataset CSVs.
    fn context_header(&self) -> Vec<String>;
    fn context_record(&self, ctx: &Self::Context) -> Vec<String>;
    /// Column names of one KPI vector in dataset CSVs.
    fn kpi_header(&self) -> Vec<String>;

    /// Closed-form quantile intervals, for environments that do not need a
    /// trained model.
    fn analytic_intervals(&self, _ctx: &Self::Context) -> Option<IntervalSet> {
        None
    }

    /// Exact draw from `p(x | app) ∝ p(x) p(app|x)` by rejection against
    /// [`Environment::log_probability_bound`]. `None` if the app is so rare
    /// that [`MAX_PROPOSALS`] proposals were all rejected.
    fn sample_context_given<R: Rng + ?Sized>(&self, app: Self::App, rng: &mut R) -> Option<Self::Context> {
        let bound = self.log_probability_bound(app);
        for _ in 0..MAX_PROPOSALS {
            let x = self.sample_context(rng);
            let u: f64 = rng.random();
            if u.ln() < self.log_probability(app, &x) - bound {
                return Some(x);
            }
        }
        None
    }
}
