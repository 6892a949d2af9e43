//! Counterfactual KPI estimation: weighted conformal calibration of
//! pinball-loss quantile regressors.

pub mod conformal;
pub mod quantile_net;

pub use conformal::{
    ccke_prediction_set, ccke_prediction_set_log, cke_prediction_set, compute_score,
    nccke_prediction_set, weighted_quantile, CalibrationScores, ConformalError, CorrectionQuantile,
    IntervalSet, KpiInterval, PredictionSet, WeightedScoreDistribution,
};
pub use quantile_net::{
    pinball_gradient, pinball_loss, train, Architecture, QuantileModel, Sample, Scaling,
    TrainConfig,
};
