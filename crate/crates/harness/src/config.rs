//! Plain-text `key = value` experiment configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ccke_core::quantile_net::TrainConfig;
use ccke_sim::mac::{BacklogRange, FrameConfig, MacPolicy, PayloadTable, Scheduler, DEFAULT_PACKETS_PER_SHARE};
use ccke_sim::phy::ser::{DEFAULT_N_MC, DEFAULT_SER_SEED};
use ccke_sim::phy::{ArqConfig, ContextDistribution, PhyPolicy, SerTable, TransmissionApp};

use crate::env::{Environment, MacEnv, PhyEnv, SynApp, SyntheticEnv};
use crate::error::{HarnessError, Result};
use crate::experiment::{ExperimentSpec, Method, ModelSource, NoiseSpec, WeightPerturbation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Mac,
    Phy,
    Synthetic,
}

impl FromStr for EnvKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mac" => Ok(EnvKind::Mac),
            "phy" => Ok(EnvKind::Phy),
            "synthetic" | "syn" => Ok(EnvKind::Synthetic),
            other => Err(HarnessError::Config(format!("unknown environment '{other}'"))),
        }
    }
}

impl EnvKind {
    fn label(self) -> &'static str {
        match self {
            EnvKind::Mac => "mac",
            EnvKind::Phy => "phy",
            EnvKind::Synthetic => "synthetic",
        }
    }
}

/// Every configurable field with a one-line description; each is both a
/// config-file key and a `--key-name` flag.
pub const KEYS: &[(&str, &str)] = &[
    ("environment", "mac, phy or synthetic"),
    ("alpha", "miscoverage level"),
    ("temperature", "selection-policy temperature T (synthetic: 1/beta)"),
    ("actual_app", "app that ran on test contexts (empty: environment default)"),
    ("target_app", "app whose KPIs are predicted (empty: environment default)"),
    ("n_train", "training samples under the target app"),
    ("n_cal", "calibration samples per trial"),
    ("n_test", "test samples per trial"),
    ("n_trials", "independent calibration/test draws"),
    ("base_seed", "root seed of every random stream"),
    ("methods", "comma-separated subset of CCKE,NCCKE,CKE"),
    ("weight_perturbation", "none, or delta of w(1+u) with u ~ U[-delta, delta]"),
    ("kpi_noise", "none, or sigma of Gaussian noise on training and calibration KPIs"),
    ("retrain_per_trial", "retrain the model inside every trial"),
    ("model", "train or analytic (synthetic only)"),
    ("epochs", "training epochs"),
    ("batch_size", "mini-batch size"),
    ("step_size", "gradient step size"),
    ("momentum", "heavy-ball momentum"),
    ("users", "MAC users K"),
    ("packets_per_share", "MAC full-frame payload scale S"),
    ("resource_blocks", "MAC resource blocks per frame"),
    ("backlog_min", "MAC smallest initial backlog"),
    ("backlog_max", "MAC largest initial backlog"),
    ("max_attempts", "PHY ARQ cap Y_max"),
    ("symbols_per_packet", "PHY symbols per packet"),
    ("noise_std", "PHY receiver noise standard deviation"),
    ("snr_mean_db", "PHY SNR mean in dB"),
    ("snr_std_db", "PHY SNR standard deviation in dB"),
    ("ser_table", "PHY SER table CSV (empty: build in memory)"),
    ("ser_n_mc", "PHY Monte-Carlo symbols per SER cell"),
    ("ser_seed", "PHY SER table seed"),
    ("interval_scale", "synthetic closed-form interval half-width multiplier"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub environment: EnvKind,
    pub alpha: f64,
    pub temperature: f64,
    pub actual_app: Option<String>,
    pub target_app: Option<String>,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub weight_perturbation: Option<f64>,
    pub kpi_noise: Option<f64>,
    pub retrain_per_trial: bool,
    pub analytic_model: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub users: usize,
    pub packets_per_share: f64,
    pub resource_blocks: usize,
    pub backlog_min: u32,
    pub backlog_max: u32,
    pub max_attempts: u32,
    pub symbols_per_packet: usize,
    pub noise_std: f64,
    pub snr_mean_db: f64,
    pub snr_std_db: f64,
    pub ser_table: Option<PathBuf>,
    pub ser_n_mc: usize,
    pub ser_seed: u64,
    pub interval_scale: f64,
}

/// Longer and gentler than [`TrainConfig::default`]: the attention model
/// stalls with all-inactive rectifiers at step 1e-2.
pub const DEFAULT_EPOCHS: usize = 1000;
pub const DEFAULT_STEP_SIZE: f64 = 3e-3;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            environment: EnvKind::Mac,
            alpha: 0.2,
            temperature: 1.0,
            actual_app: None,
            target_app: None,
            n_train: 3000,
            n_cal: 50,
            n_test: 100,
            n_trials: 200,
            base_seed: 0,
            methods: Method::ALL.to_vec(),
            weight_perturbation: None,
            kpi_noise: None,
            retrain_per_trial: false,
            analytic_model: false,
            epochs: DEFAULT_EPOCHS,
            batch_size: train.batch_size,
            step_size: DEFAULT_STEP_SIZE,
            momentum: train.momentum,
            users: 8,
            packets_per_share: DEFAULT_PACKETS_PER_SHARE,
            resource_blocks: FrameConfig::default().resource_blocks(),
            backlog_min: BacklogRange::default().lo(),
            backlog_max: BacklogRange::default().hi(),
            max_attempts: ArqConfig::default().max_attempts(),
            symbols_per_packet: ArqConfig::default().symbols_per_packet(),
            noise_std: 1.0,
            snr_mean_db: 5.0,
            snr_std_db: 5.0,
            ser_table: None,
            ser_n_mc: DEFAULT_N_MC,
            ser_seed: DEFAULT_SER_SEED,
            interval_scale: 0.5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| HarnessError::Config(format!("{key} = '{value}': {e}")))
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match value.trim() {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn opt_string(value: &str) -> Option<String> {
    Some(value.trim()).filter(|v| !v.is_empty()).map(str::to_string)
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "environment" => self.environment = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "actual_app" => self.actual_app = opt_string(value),
            "target_app" => self.target_app = opt_string(value),
            "n_train" => self.n_train = parse(key, value)?,
            "n_cal" => self.n_cal = parse(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "n_trials" => self.n_trials = parse(key, value)?,
            "base_seed" => self.base_seed = parse(key, value)?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|m| !m.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "weight_perturbation" => self.weight_perturbation = parse_optional(key, value)?,
            "kpi_noise" => self.kpi_noise = parse_optional(key, value)?,
            "retrain_per_trial" => self.retrain_per_trial = parse(key, value)?,
            "model" => {
                self.analytic_model = match value.trim() {
                    "train" => false,
                    "analytic" => true,
                    other => return Err(HarnessError::Config(format!("model = '{other}': expected train or analytic"))),
                }
            }
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "step_size" => self.step_size = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "users" => self.users = parse(key, value)?,
            "packets_per_share" => self.packets_per_share = parse(key, value)?,
            "resource_blocks" => self.resource_blocks = parse(key, value)?,
            "backlog_min" => self.backlog_min = parse(key, value)?,
            "backlog_max" => self.backlog_max = parse(key, value)?,
            "max_attempts" => self.max_attempts = parse(key, value)?,
            "symbols_per_packet" => self.symbols_per_packet = parse(key, value)?,
            "noise_std" => self.noise_std = parse(key, value)?,
            "snr_mean_db" => self.snr_mean_db = parse(key, value)?,
            "snr_std_db" => self.snr_std_db = parse(key, value)?,
            "ser_table" => self.ser_table = opt_string(value).map(PathBuf::from),
            "ser_n_mc" => self.ser_n_mc = parse(key, value)?,
            "ser_seed" => self.ser_seed = parse(key, value)?,
            "interval_scale" => self.interval_scale = parse(key, value)?,
            other => return Err(HarnessError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Current value of every key in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let methods = self.methods.iter().map(Method::to_string).collect::<Vec<_>>().join(",");
        let values = [
            self.environment.label().to_string(),
            self.alpha.to_string(),
            self.temperature.to_string(),
            show(&self.actual_app),
            show(&self.target_app),
            self.n_train.to_string(),
            self.n_cal.to_string(),
            self.n_test.to_string(),
            self.n_trials.to_string(),
            self.base_seed.to_string(),
            methods,
            self.weight_perturbation.map_or("none".into(), |d| d.to_string()),
            self.kpi_noise.map_or("none".into(), |s| s.to_string()),
            self.retrain_per_trial.to_string(),
            if self.analytic_model { "analytic" } else { "train" }.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.step_size.to_string(),
            self.momentum.to_string(),
            self.users.to_string(),
            self.packets_per_share.to_string(),
            self.resource_blocks.to_string(),
            self.backlog_min.to_string(),
            self.backlog_max.to_string(),
            self.max_attempts.to_string(),
            self.symbols_per_packet.to_string(),
            self.noise_std.to_string(),
            self.snr_mean_db.to_string(),
            self.snr_std_db.to_string(),
            self.ser_table.as_ref().map_or_else(String::new, |p| p.display().to_string()),
            self.ser_n_mc.to_string(),
            self.ser_seed.to_string(),
            self.interval_scale.to_string(),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            step_size: self.step_size,
            momentum: self.momentum,
            seed: 0,
        }
    }

    fn spec<A>(&self, actual: A, target: A) -> ExperimentSpec<A> {
        ExperimentSpec {
            alpha: self.alpha,
            actual,
            target,
            n_train: self.n_train,
            n_cal: self.n_cal,
            n_test: self.n_test,
            n_trials: self.n_trials,
            base_seed: self.base_seed,
            methods: self.methods.clone(),
            weight_perturbation: self.weight_perturbation.map(|delta| WeightPerturbation { delta }),
            kpi_noise: self.kpi_noise.map(|sigma| NoiseSpec { sigma }),
            retrain_per_trial: self.retrain_per_trial,
            train: self.train_config(),
            model: if self.analytic_model { ModelSource::Analytic } else { ModelSource::Train },
        }
    }

    fn apps<E: Environment>(&self, default_actual: &str, default_target: &str) -> Result<(E::App, E::App)> {
        let pick = |v: &Option<String>, d: &str| -> Result<E::App> {
            let s = v.as_deref().unwrap_or(d);
            s.parse::<E::App>().map_err(|e| HarnessError::Config(format!("app '{s}': {e}")))
        };
        Ok((pick(&self.actual_app, default_actual)?, pick(&self.target_app, default_target)?))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature must be positive and finite");
        }
        if self.users == 0 {
            return bad("users must be at least 1");
        }
        if self.backlog_min == 0 {
            return bad("backlog_min must be at least 1 so the inefficiency normalizer is positive");
        }
        Ok(())
    }

    pub fn mac_env(&self) -> Result<(MacEnv, ExperimentSpec<Scheduler>)> {
        self.validate()?;
        let payload = PayloadTable::from_efficiency(self.packets_per_share, self.users)?;
        let env = MacEnv::new(
            self.users,
            MacPolicy::new(self.temperature, payload)?,
            FrameConfig::default().with_resource_blocks(self.resource_blocks)?,
            BacklogRange::new(self.backlog_min, self.backlog_max)?,
        );
        let (a, t) = self.apps::<MacEnv>("PFCA", "RR")?;
        Ok((env, self.spec(a, t)))
    }

    pub fn ser_table(&self) -> Result<Arc<SerTable>> {
        Ok(Arc::new(match &self.ser_table {
            Some(p) => SerTable::load(p)?,
            None => SerTable::build(self.ser_n_mc, self.ser_seed)?,
        }))
    }

    /// Builds the PHY environment around an already loaded SER table.
    pub fn phy_env_with(&self, table: Arc<SerTable>) -> Result<(PhyEnv, ExperimentSpec<TransmissionApp>)> {
        self.validate()?;
        let env = PhyEnv::new(
            PhyPolicy::new(self.temperature, table)?,
            ArqConfig::new(self.max_attempts, self.symbols_per_packet, self.noise_std)?,
            ContextDistribution::new(self.snr_mean_db, self.snr_std_db)?,
        );
        let (a, t) = self.apps::<PhyEnv>("multiplexing-qpsk", "alamouti-qpsk")?;
        Ok((env, self.spec(a, t)))
    }

    pub fn phy_env(&self) -> Result<(PhyEnv, ExperimentSpec<TransmissionApp>)> {
        self.phy_env_with(self.ser_table()?)
    }

    pub fn synthetic_env(&self) -> Result<(SyntheticEnv, ExperimentSpec<SynApp>)> {
        self.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.interval_scale >= 0.0) {
            return Err(HarnessError::Config("alpha must lie in (0, 1) and interval_scale be nonnegative".into()));
        }
        let env = SyntheticEnv::new(1.0 / self.temperature, self.alpha, self.interval_scale);
        let (a, t) = self.apps::<SyntheticEnv>("A", "B")?;
        Ok((env, self.spec(a, t)))
    }
}
