//! Pinball-loss quantile regression.
//!
//! A [`QuantileModel`] maps a context to a `(lo, hi)` pair per KPI, the
//! estimated `alpha/2` and `1 - alpha/2` conditional quantiles. Two
//! architectures are supported: a plain feedforward stack for scalar KPIs,
//! and a permutation-equivariant two-block self-attention model for
//! set-structured contexts (one token per user, one KPI per token).

mod checkpoint;
mod network;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conformal::IntervalSet;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use train::{train, train_with_history, TrainConfig, TrainError, TrainOutcome};

use network::Network;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("quantile level tau must lie in (0, 1), got {0}")]
    TauOutOfRange(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("input of length {actual} does not fit the architecture ({expected})")]
    InputShape { expected: String, actual: usize },
    #[error("target of length {actual} does not match the {expected} model outputs")]
    TargetShape { expected: usize, actual: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("parameter vector has length {actual}, architecture needs {expected}")]
    ParamCount { expected: usize, actual: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// Widths and sizes of the self-attention quantile model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionSpec {
    /// Features per token.
    pub token_dim: usize,
    /// Query/key dimension of both attention blocks.
    pub d_h: usize,
    /// Value (output) dimension of both attention blocks.
    pub d_o: usize,
    /// Width of the hidden embedding produced by `mlp1`.
    pub d_e: usize,
    /// Layer widths of the shared per-token stack after the first block;
    /// the last entry must equal `d_e`.
    pub mlp1: Vec<usize>,
    /// Layer widths of the shared per-token head; the last entry must be 2.
    pub mlp2: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    /// `widths[0]` is the input size, the last entry must be 2.
    FeedForward { widths: Vec<usize> },
    Attention(AttentionSpec),
}

impl Architecture {
    /// 2 -> 10 -> 10 -> 5 -> 2 feedforward model for `(SNR, paths)` contexts.
    pub fn link_feedforward() -> Self {
        Self::FeedForward {
            widths: vec![2, 10, 10, 5, 2],
        }
    }

    /// Two attention blocks with `d_h = d_o = d_e = 10` over `(backlog, CQI)` tokens.
    pub fn scheduler_attention() -> Self {
        Self::Attention(AttentionSpec {
            token_dim: 2,
            d_h: 10,
            d_o: 10,
            d_e: 10,
            mlp1: vec![10, 10, 10],
            mlp2: vec![10, 10, 2],
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidArchitecture(m.to_string()));
        match self {
            Architecture::FeedForward { widths } => {
                if widths.len() < 2 || widths.contains(&0) {
                    return bad("feedforward needs an input and an output width, all positive");
                }
                if *widths.last().unwrap() != 2 {
                    return bad("feedforward output width must be 2");
                }
            }
            Architecture::Attention(s) => {
                if [s.token_dim, s.d_h, s.d_o, s.d_e].contains(&0)
                    || s.mlp1.contains(&0)
                    || s.mlp2.contains(&0)
                {
                    return bad("attention sizes must be positive");
                }
                if s.mlp1.last() != Some(&s.d_e) {
                    return bad("mlp1 must end in d_e");
                }
                if s.mlp2.last() != Some(&2) {
                    return bad("mlp2 must end in 2");
                }
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Network::build(self).1
    }

    /// Number of raw features per context unit (whole context or token).
    pub fn input_width(&self) -> usize {
        match self {
            Architecture::FeedForward { widths } => widths[0],
            Architecture::Attention(s) => s.token_dim,
        }
    }
}

/// Fixed feature and output scales: the network sees `x / input[i]` and its
/// outputs are multiplied by `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub input: Vec<f64>,
    pub output: f64,
}

impl Scaling {
    pub fn identity(width: usize) -> Self {
        Self {
            input: vec![1.0; width],
            output: 1.0,
        }
    }
}

/// One training example: raw features and KPI targets.
///
/// For attention models `features` is token-major (`K * token_dim`) and
/// `targets` has one entry per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileModel {
    arch: Architecture,
    alpha: f64,
    scaling: Scaling,
    params: Vec<f64>,
}

impl QuantileModel {
    /// Seeded initialization, uniform in `±1/sqrt(fan_in)`.
    pub fn init(arch: Architecture, alpha: f64, scaling: Scaling, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(arch, alpha, scaling, &mut rng)
    }

    pub(crate) fn init_with(
        arch: Architecture,
        alpha: f64,
        scaling: Scaling,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        let (net, n) = Self::check(&arch, alpha, &scaling)?;
        let mut params = vec![0.0; n];
        net.init(&mut params, rng);
        Ok(Self {
            arch,
            alpha,
            scaling,
            params,
        })
    }

    pub fn from_params(
        arch: Architecture,
        alpha: f64,
        scaling: Scaling,
        params: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let (_, n) = Self::check(&arch, alpha, &scaling)?;
        if params.len() != n {
            return Err(ModelError::ParamCount {
                expected: n,
                actual: params.len(),
            });
        }
        Ok(Self {
            arch,
            alpha,
            scaling,
            params,
        })
    }

    fn check(arch: &Architecture, alpha: f64, scaling: &Scaling) -> Result<(Network, usize), ModelError> {
        arch.validate()?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ModelError::AlphaOutOfRange(alpha));
        }
        if scaling.input.len() != arch.input_width() {
            return Err(ModelError::InvalidArchitecture(format!(
                "input scaling has {} entries, expected {}",
                scaling.input.len(),
                arch.input_width()
            )));
        }
        Ok(Network::build(arch))
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn network(&self) -> Network {
        Network::build(&self.arch).0
    }

    /// Number of KPIs the model emits for a feature vector, after shape checks.
    pub fn output_count(&self, features: &[f64]) -> Result<usize, ModelError> {
        match &self.arch {
            Architecture::FeedForward { widths } => {
                if features.len() != widths[0] {
                    return Err(ModelError::InputShape {
                        expected: format!("{} features", widths[0]),
                        actual: features.len(),
                    });
                }
                Ok(1)
            }
            Architecture::Attention(s) => {
                if features.is_empty() || features.len() % s.token_dim != 0 {
                    return Err(ModelError::InputShape {
                        expected: format!("a positive multiple of {} features", s.token_dim),
                        actual: features.len(),
                    });
                }
                Ok(features.len() / s.token_dim)
            }
        }
    }

    pub(crate) fn normalize(&self, features: &[f64]) -> Vec<f64> {
        let w = self.scaling.input.len();
        features
            .iter()
            .enumerate()
            .map(|(i, x)| x / self.scaling.input[i % w])
            .collect()
    }

    /// Naive per-KPI intervals `[q_{alpha/2}, q_{1-alpha/2}]`.
    pub fn forward(&self, features: &[f64]) -> Result<IntervalSet, ModelError> {
        self.output_count(features)?;
        let raw = self.network().forward(&self.params, &self.normalize(features));
        let s = self.scaling.output;
        let lo = raw.iter().map(|o| o[0] * s).collect();
        let hi = raw.iter().map(|o| o[1] * s).collect();
        Ok(IntervalSet::new(lo, hi).expect("network emits at least one token"))
    }

    /// Mean over the batch of the summed pinball losses at both quantile
    /// levels, in normalized output units.
    pub fn batch_loss(&self, batch: &[Sample]) -> Result<f64, ModelError> {
        self.loss_and_grad(batch, false).map(|(l, _)| l)
    }

    pub(crate) fn loss_and_grad<'a, I>(&self, batch: I, with_grad: bool) -> Result<(f64, Vec<f64>), ModelError>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        let net = self.network();
        let mut grad = vec![0.0; if with_grad { self.params.len() } else { 0 }];
        let mut total = 0.0;
        let mut count = 0usize;
        for s in batch {
            count += 1;
            let k = self.output_count(&s.features)?;
            if s.targets.len() != k {
                return Err(ModelError::TargetShape {
                    expected: k,
                    actual: s.targets.len(),
                });
            }
            let x = self.normalize(&s.features);
            let y: Vec<f64> = s.targets.iter().map(|t| t / self.scaling.output).collect();
            let g = if with_grad { Some(grad.as_mut_slice()) } else { None };
            total += net.sample_loss(&self.params, &x, &y, self.alpha, g);
        }
        if count == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let n = count as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }
}

/// `max{tau (y - q), -(1 - tau)(y - q)}`.
pub fn pinball_loss(y: f64, q: f64, tau: f64) -> Result<f64, ModelError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(ModelError::TauOutOfRange(tau));
    }
    Ok(network::pinball(y, q, tau))
}

/// Gradient of [`QuantileModel::batch_loss`] with respect to the flat
/// parameter vector. At a kink `y == q` the `tau`-side slope is used.
pub fn pinball_gradient(model: &QuantileModel, batch: &[Sample]) -> Result<Vec<f64>, ModelError> {
    model.loss_and_grad(batch, true).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(3.0, 3.0, 0.3).unwrap(), 0.0);
        assert_eq!(pinball_loss(2.0, 0.0, 0.5).unwrap(), 1.0);
        assert!((pinball_loss(0.0, 1.0, 0.9).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(pinball_loss(0.0, 1.0, 1.0), Err(ModelError::TauOutOfRange(1.0)));
        assert_eq!(pinball_loss(0.0, 1.0, 0.0), Err(ModelError::TauOutOfRange(0.0)));
    }

    #[test]
    fn default_architectures_validate() {
        assert!(Architecture::link_feedforward().validate().is_ok());
        assert!(Architecture::scheduler_attention().validate().is_ok());
        // 2*10+10*10+10*10 weights + 10+10+10+10+5... spelled out per layer:
        // 2x10+10, 10x10+10, 10x5+5, 5x2+2
        assert_eq!(Architecture::link_feedforward().param_count(), 30 + 110 + 55 + 12);
        // three projections per block (20+20+20 and 100+100+100), mlp1 3x110, mlp2 110+110+22
        assert_eq!(
            Architecture::scheduler_attention().param_count(),
            60 + 330 + 300 + 242
        );
    }

    #[test]
    fn invalid_architectures_rejected() {
        let bad = Architecture::FeedForward { widths: vec![2, 3] };
        assert!(bad.validate().is_err());
        let mut spec = match Architecture::scheduler_attention() {
            Architecture::Attention(s) => s,
            _ => unreachable!(),
        };
        spec.mlp1 = vec![10, 7];
        assert!(Architecture::Attention(spec).validate().is_err());
    }

    #[test]
    fn forward_shape_errors() {
        let m = QuantileModel::init(Architecture::link_feedforward(), 0.2, Scaling::identity(2), 1).unwrap();
        assert!(m.forward(&[1.0, 2.0, 3.0]).is_err());
        let a = QuantileModel::init(Architecture::scheduler_attention(), 0.2, Scaling::identity(2), 1).unwrap();
        assert!(a.forward(&[1.0, 2.0, 3.0]).is_err());
        assert!(a.forward(&[]).is_err());
        assert_eq!(a.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap().kpi_count(), 2);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut m = QuantileModel::init(Architecture::scheduler_attention(), 0.2, Scaling::identity(2), 3).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let out = m.forward(&[5.0, 1.0, 7.0, 2.0, 9.0, 3.0]).unwrap();
        assert!(out.lo().iter().chain(out.hi()).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_gradient_by_hand() {
        // Output bias is the only live parameter: q_lo = q_hi = theta.
        let mut m = QuantileModel::init(
            Architecture::FeedForward { widths: vec![1, 2] },
            0.2,
            Scaling::identity(1),
            0,
        )
        .unwrap();
        m.params_mut().copy_from_slice(&[0.0, 0.0, 0.25, 0.25]);
        let batch = [Sample {
            features: vec![1.0],
            targets: vec![1.0],
        }];
        let g = pinball_gradient(&m, &batch).unwrap();
        // y > theta: slopes -tau at both levels (0.1 and 0.9).
        assert_eq!(g, vec![-0.1, -0.9, -0.1, -0.9]);
    }

    #[test]
    fn kink_uses_tau_side() {
        let mut m = QuantileModel::init(
            Architecture::FeedForward { widths: vec![1, 2] },
            0.5,
            Scaling::identity(1),
            0,
        )
        .unwrap();
        m.params_mut().copy_from_slice(&[0.0, 0.0, 1.0, 1.0]);
        let batch = [Sample {
            features: vec![3.0],
            targets: vec![1.0],
        }];
        assert_eq!(m.batch_loss(&batch).unwrap(), 0.0);
        let g = pinball_gradient(&m, &batch).unwrap();
        // tau = 0.25 and 0.75, left-limit slope -tau.
        assert_eq!(g, vec![-0.75, -2.25, -0.25, -0.75]);
    }

    #[test]
    fn empty_batch_rejected() {
        let m = QuantileModel::init(Architecture::link_feedforward(), 0.2, Scaling::identity(2), 1).unwrap();
        assert_eq!(pinball_gradient(&m, &[]), Err(ModelError::EmptyBatch));
    }
}
