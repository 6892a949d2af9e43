//! Logged `(context, app, KPI)` tuples and the target-app train/calibration split.

use std::io;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::Environment;
use crate::error::{HarnessError, Result};
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSample<C, A> {
    pub context: C,
    pub app: A,
    pub kpi: Vec<f64>,
}

pub type EnvSample<E> = LoggedSample<<E as Environment>::Context, <E as Environment>::App>;

/// Generator of sample `i`'s rollout; replaying it reproduces the logged KPI.
pub fn rollout_rng(seed: u64, index: u64) -> ChaCha8Rng {
    rng_for(seed, &[Stream::Logging as u64, index, 1])
}

/// `n` i.i.d. draws of `x ~ p(x)`, `a ~ p(a|x)`, `y = y_a`.
pub fn log_dataset<E: Environment>(env: &E, n: usize, seed: u64) -> Vec<EnvSample<E>> {
    (0..n as u64)
        .map(|i| {
            let mut rng = rng_for(seed, &[Stream::Logging as u64, i, 0]);
            let context = env.sample_context(&mut rng);
            let app = env.select_app(&context, &mut rng);
            let kpi = env.rollout(app, &context, &mut rollout_rng(seed, i));
            LoggedSample { context, app, kpi }
        })
        .collect()
}

/// Potential outcome of `app` on `context`: the test-set oracle.
pub fn counterfactual_truth<E: Environment, R: Rng + ?Sized>(
    env: &E,
    context: &E::Context,
    app: E::App,
    rng: &mut R,
) -> Vec<f64> {
    env.rollout(app, context, rng)
}

/// Keeps the samples logged under `target` and splits them at random into
/// `(training, calibration)` with `n_cal` calibration samples.
pub fn select_and_split<C: Clone, A: Copy + Eq + std::fmt::Display, R: Rng + ?Sized>(
    data: &[LoggedSample<C, A>],
    target: A,
    n_cal: usize,
    rng: &mut R,
) -> Result<(Vec<LoggedSample<C, A>>, Vec<LoggedSample<C, A>>)> {
    let mut selected: Vec<_> = data.iter().filter(|s| s.app == target).cloned().collect();
    if n_cal == 0 || selected.len() < n_cal + 1 {
        return Err(HarnessError::InsufficientTargetSamples {
            app: target.to_string(),
            found: selected.len(),
            needed: n_cal.max(1) + 1,
        });
    }
    selected.shuffle(rng);
    let train = selected.split_off(n_cal);
    Ok((train, selected))
}

pub fn write_dataset<E: Environment, W: io::Write>(env: &E, data: &[EnvSample<E>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = env.context_header();
    header.push("app".into());
    header.extend(env.kpi_header());
    w.write_record(&header)?;
    for s in data {
        let mut row = env.context_record(&s.context);
        row.push(s.app.to_string());
        row.extend(s.kpi.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
