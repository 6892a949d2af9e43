use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Architecture, ModelError, QuantileModel, Sample, Scaling};

/// Mini-batch gradient descent with heavy-ball momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            step_size: 1e-2,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: QuantileModel,
    /// Full-data loss before training (index 0) and, when recorded, after every epoch.
    pub loss_history: Vec<f64>,
}

pub fn train(
    data: &[Sample],
    arch: Architecture,
    alpha: f64,
    scaling: Scaling,
    cfg: &TrainConfig,
) -> Result<QuantileModel, TrainError> {
    fit(data, arch, alpha, scaling, cfg, false).map(|o| o.model)
}

/// [`train`], also recording the full-data loss after every epoch.
pub fn train_with_history(
    data: &[Sample],
    arch: Architecture,
    alpha: f64,
    scaling: Scaling,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    fit(data, arch, alpha, scaling, cfg, true)
}

fn fit(
    data: &[Sample],
    arch: Architecture,
    alpha: f64,
    scaling: Scaling,
    cfg: &TrainConfig,
    record: bool,
) -> Result<TrainOutcome, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
    }
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(TrainError::InvalidConfig("step_size must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        return Err(TrainError::InvalidConfig("momentum must lie in [0, 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = QuantileModel::init_with(arch, alpha, scaling, &mut rng)?;
    let initial = model.batch_loss(data)?;
    if !initial.is_finite() {
        return Err(TrainError::Diverged { epoch: 0 });
    }
    let mut loss_history = vec![initial];
    let mut velocity = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (_, grad) = model.loss_and_grad(chunk.iter().map(|&i| &data[i]), true)?;
            for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.step_size * g;
                *p += *v;
            }
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Diverged { epoch });
        }
        if record {
            let loss = model.batch_loss(data)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_history.push(loss);
        }
    }
    Ok(TrainOutcome { model, loss_history })
}
