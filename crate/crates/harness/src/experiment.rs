//! End-to-end counterfactual experiments: training, repeated calibration and
//! test draws, and per-trial metrics for every requested method.

use std::fmt;
use std::str::FromStr;

use ccke_core::conformal::{
    ccke_prediction_set_log, check_alpha, cke_prediction_set, compute_score, nccke_prediction_set,
    CalibrationScores, IntervalSet, PredictionSet,
};
use ccke_core::quantile_net::{train, QuantileModel, Sample, TrainConfig};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::counterfactual_truth;
use crate::env::{Environment, MAX_PROPOSALS};
use crate::error::{HarnessError, Result};
use crate::metrics::{evaluate_coverage, evaluate_inefficiency};
use crate::seed::{derive_seed, rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ccke,
    Nccke,
    Cke,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ccke, Method::Nccke, Method::Cke];

    pub fn label(self) -> &'static str {
        match self {
            Method::Ccke => "CCKE",
            Method::Nccke => "NCCKE",
            Method::Cke => "CKE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CCKE" => Ok(Method::Ccke),
            "NCCKE" => Ok(Method::Nccke),
            "CKE" => Ok(Method::Cke),
            other => Err(HarnessError::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// `ŵ = w·(1 + u)` with `u ~ U[-δ, δ]`, drawn independently per point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPerturbation {
    pub delta: f64,
}

/// Zero-mean Gaussian measurement noise added to training and calibration
/// KPIs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
}

impl NoiseSpec {
    /// `b = min{P(ε ≥ 0), P(ε ≤ 0)}`.
    pub fn skew_bound(&self) -> f64 {
        0.5
    }

    fn apply<R: Rng + ?Sized>(&self, y: &mut [f64], rng: &mut R) {
        if self.sigma > 0.0 {
            let normal = Normal::new(0.0, self.sigma).expect("validated sigma");
            for v in y {
                *v += normal.sample(rng);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelSource {
    /// Fit a quantile network on `n_train` target-app samples.
    Train,
    /// Use the environment's closed-form intervals.
    Analytic,
    Given(QuantileModel),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec<A> {
    pub alpha: f64,
    pub actual: A,
    pub target: A,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub weight_perturbation: Option<WeightPerturbation>,
    pub kpi_noise: Option<NoiseSpec>,
    pub retrain_per_trial: bool,
    /// Its `seed` is replaced by one derived from `base_seed`.
    pub train: TrainConfig,
    pub model: ModelSource,
}

impl<A> ExperimentSpec<A> {
    pub fn new(actual: A, target: A) -> Self {
        Self {
            alpha: 0.2,
            actual,
            target,
            n_train: 3000,
            n_cal: 50,
            n_test: 100,
            n_trials: 200,
            base_seed: 0,
            methods: Method::ALL.to_vec(),
            weight_perturbation: None,
            kpi_noise: None,
            retrain_per_trial: false,
            train: TrainConfig::default(),
            model: ModelSource::Train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_train == 0 || self.n_cal == 0 || self.n_test == 0 || self.n_trials == 0 {
            return bad("n_train, n_cal, n_test and n_trials must all be at least 1".into());
        }
        check_alpha(self.alpha, self.n_cal)?;
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if let Some(p) = self.weight_perturbation {
            if !(0.0..1.0).contains(&p.delta) {
                return bad(format!("weight perturbation delta must lie in [0, 1), got {}", p.delta));
            }
        }
        if let Some(n) = self.kpi_noise {
            if !(n.sigma.is_finite() && n.sigma >= 0.0) {
                return bad(format!("KPI noise sigma must be finite and nonnegative, got {}", n.sigma));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub coverage: f64,
    pub inefficiency_raw: f64,
    pub inefficiency_clipped: f64,
    pub n_unbounded: usize,
    pub seed: u64,
    /// Median and minimum over test points of the correction `q̂` (`inf` if unbounded).
    pub correction_median: f64,
    pub correction_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub environment: String,
    pub temperature: f64,
    pub users: usize,
    pub alpha: f64,
    pub records: Vec<TrialRecord>,
    /// Measured `Ê|ŵ − w|` over calibration contexts, when weights were perturbed.
    pub weight_error: Option<f64>,
}

impl ExperimentReport {
    pub fn method_records(&self, method: Method) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.records.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    fn mean_of(&self, method: Method, f: impl Fn(&TrialRecord) -> f64) -> f64 {
        let v: Vec<f64> = self.method_records(method).map(f).filter(|v| !v.is_nan()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn mean_coverage(&self, method: Method) -> f64 {
        self.mean_of(method, |r| r.coverage)
    }

    pub fn mean_inefficiency_clipped(&self, method: Method) -> f64 {
        self.mean_of(method, |r| r.inefficiency_clipped)
    }

    pub fn mean_inefficiency_raw(&self, method: Method) -> f64 {
        self.mean_of(method, |r| r.inefficiency_raw)
    }

    pub fn trials(&self) -> usize {
        self.records.iter().map(|r| r.trial + 1).max().unwrap_or(0)
    }
}

enum Predictor<'a> {
    Model(&'a QuantileModel),
    Analytic,
}

impl Predictor<'_> {
    fn intervals<E: Environment>(&self, env: &E, ctx: &E::Context) -> Result<IntervalSet> {
        match self {
            Predictor::Model(m) => Ok(m.forward(&env.features(ctx))?),
            Predictor::Analytic => env.analytic_intervals(ctx).ok_or(HarnessError::NoAnalyticModel(env.name())),
        }
    }
}

fn sample_given<E: Environment, R: Rng + ?Sized>(env: &E, app: E::App, rng: &mut R) -> Result<E::Context> {
    env.sample_context_given(app, rng).ok_or_else(|| HarnessError::RareApp {
        app: app.to_string(),
        proposals: MAX_PROPOSALS,
    })
}

/// `n` contexts from `p(x|app)` with their (optionally noisy) KPIs under `app`.
fn draw_under<E: Environment, R: Rng + ?Sized>(
    env: &E,
    app: E::App,
    n: usize,
    noise: Option<NoiseSpec>,
    rng: &mut R,
) -> Result<(Vec<E::Context>, Vec<Vec<f64>>)> {
    let mut contexts = Vec::with_capacity(n);
    let mut kpis = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sample_given(env, app, rng)?;
        let mut y = env.rollout(app, &x, rng);
        if let Some(noise) = noise {
            noise.apply(&mut y, rng);
        }
        contexts.push(x);
        kpis.push(y);
    }
    Ok((contexts, kpis))
}

/// Fits the quantile network on `n_train` samples logged under the target app.
pub fn train_model<E: Environment>(env: &E, spec: &ExperimentSpec<E::App>, seed: u64) -> Result<QuantileModel> {
    let mut rng = rng_for(seed, &[Stream::Training as u64]);
    let (contexts, kpis) = draw_under(env, spec.target, spec.n_train, spec.kpi_noise, &mut rng)?;
    let samples: Vec<Sample> = contexts
        .iter()
        .zip(kpis)
        .map(|(x, y)| Sample {
            features: env.features(x),
            targets: y,
        })
        .collect();
    let cfg = TrainConfig {
        seed: derive_seed(seed, &[Stream::Model as u64]),
        ..spec.train.clone()
    };
    Ok(train(&samples, env.architecture(), spec.alpha, env.scaling(), &cfg)?)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

struct TrialOutcome {
    records: Vec<TrialRecord>,
    weight_error: Option<f64>,
}

fn run_trial<E: Environment>(
    env: &E,
    spec: &ExperimentSpec<E::App>,
    shared: Option<&QuantileModel>,
    trial: usize,
) -> Result<TrialOutcome> {
    let seed = derive_seed(spec.base_seed, &[Stream::Trial as u64, trial as u64]);
    let retrained;
    let predictor = match (&spec.model, shared) {
        (ModelSource::Analytic, _) => Predictor::Analytic,
        (_, Some(m)) => Predictor::Model(m),
        (_, None) => {
            retrained = train_model(env, spec, seed)?;
            Predictor::Model(&retrained)
        }
    };

    let mut cal_rng = rng_for(seed, &[Stream::Calibration as u64]);
    let (cal_x, cal_y) = draw_under(env, spec.target, spec.n_cal, spec.kpi_noise, &mut cal_rng)?;
    let mut test_rng = rng_for(seed, &[Stream::Test as u64]);
    let mut test_x = Vec::with_capacity(spec.n_test);
    let mut truths = Vec::with_capacity(spec.n_test);
    for _ in 0..spec.n_test {
        let x = sample_given(env, spec.actual, &mut test_rng)?;
        truths.push(counterfactual_truth(env, &x, spec.target, &mut test_rng));
        test_x.push(x);
    }

    let mut perturb_rng = rng_for(seed, &[Stream::Perturbation as u64]);
    let mut weight_error = 0.0;
    let mut log_weight = |x: &E::Context, measure: bool| -> f64 {
        let lw = env.log_weight(spec.target, spec.actual, x);
        match spec.weight_perturbation {
            Some(p) if p.delta > 0.0 => {
                let u: f64 = perturb_rng.random_range(-p.delta..=p.delta);
                if measure {
                    weight_error += lw.exp() * u.abs();
                }
                lw + u.ln_1p()
            }
            _ => lw,
        }
    };
    let cal_lw: Vec<f64> = cal_x.iter().map(|x| log_weight(x, true)).collect();
    let test_lw: Vec<f64> = test_x.iter().map(|x| log_weight(x, false)).collect();

    let scores = cal_x
        .iter()
        .zip(&cal_y)
        .map(|(x, y)| Ok(compute_score(&predictor.intervals(env, x)?, y)?))
        .collect::<Result<Vec<f64>>>()?;
    let cal = CalibrationScores::new(scores, cal_lw)?;
    let naive = test_x
        .iter()
        .map(|x| predictor.intervals(env, x))
        .collect::<Result<Vec<_>>>()?;
    let normalizers: Vec<f64> = test_x.iter().map(|x| env.normalizer(x)).collect();
    let domains: Vec<(f64, f64)> = test_x.iter().map(|x| env.kpi_domain(x)).collect();

    let mut records = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let sets = naive
            .iter()
            .zip(&test_lw)
            .map(|(iv, lw)| {
                Ok(match method {
                    Method::Ccke => ccke_prediction_set_log(iv, &cal, |&l| l, lw, spec.alpha)?,
                    Method::Nccke => nccke_prediction_set(iv, &cal, spec.alpha)?,
                    Method::Cke => cke_prediction_set(iv),
                })
            })
            .collect::<Result<Vec<PredictionSet>>>()?;
        let coverage = evaluate_coverage(&sets, &truths)?;
        let ineff = evaluate_inefficiency(&sets, &normalizers, &domains)?;
        let mut q: Vec<f64> = sets.iter().map(|s| s.correction().as_f64()).collect();
        q.sort_by(f64::total_cmp);
        records.push(TrialRecord {
            trial,
            method,
            coverage,
            inefficiency_raw: ineff.raw,
            inefficiency_clipped: ineff.clipped,
            n_unbounded: ineff.n_unbounded,
            seed,
            correction_median: median(&q),
            correction_min: q[0],
        });
    }
    Ok(TrialOutcome {
        records,
        weight_error: spec.weight_perturbation.map(|_| weight_error / spec.n_cal as f64),
    })
}

/// Trains once (unless retraining per trial), then runs `n_trials`
/// independent calibration/test draws in parallel. Trial `t` depends only on
/// `base_seed` and `t`.
pub fn run_experiment<E: Environment>(env: &E, spec: &ExperimentSpec<E::App>) -> Result<ExperimentReport> {
    spec.validate()?;
    let trained;
    let shared = match &spec.model {
        ModelSource::Given(m) => Some(m),
        ModelSource::Train if !spec.retrain_per_trial => {
            trained = train_model(env, spec, spec.base_seed)?;
            Some(&trained)
        }
        _ => None,
    };
    if matches!(spec.model, ModelSource::Analytic) {
        let probe = env.sample_context(&mut rng_for(spec.base_seed, &[]));
        env.analytic_intervals(&probe).ok_or(HarnessError::NoAnalyticModel(env.name()))?;
    }

    let outcomes = (0..spec.n_trials)
        .into_par_iter()
        .map(|t| run_trial(env, spec, shared, t))
        .collect::<Result<Vec<_>>>()?;

    let weight_error = spec
        .weight_perturbation
        .map(|_| outcomes.iter().filter_map(|o| o.weight_error).sum::<f64>() / outcomes.len() as f64);
    Ok(ExperimentReport {
        environment: env.name().to_string(),
        temperature: env.temperature(),
        users: env.kpi_count(),
        alpha: spec.alpha,
        records: outcomes.into_iter().flat_map(|o| o.records).collect(),
        weight_error,
    })
}
