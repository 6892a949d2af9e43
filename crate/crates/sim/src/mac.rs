//! Frame-level uplink OFDM multi-access simulator.
//!
//! A context is the initial backlog and CQI of every user. The controller
//! picks round-robin (RR) or proportional-fair channel-aware (PFCA)
//! scheduling through a logistic policy on the RR residual-backlog estimate,
//! and the KPI is the vector of backlogs left at the end of one frame.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Spectral efficiency (bits/symbol) per CQI index 1..=15, 4-bit CQI table
/// of 3GPP TS 36.213 (Table 7.2.3-1).
pub const CQI_EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547,
];

pub const MAX_CQI: u8 = 15;

/// Default full-frame payload at CQI 15, per user share (`g(15) / K`).
pub const DEFAULT_PACKETS_PER_SHARE: f64 = 800.0;
pub const DEFAULT_RESOURCE_BLOCKS: usize = 50;
pub const PF_SMOOTHING: f64 = 0.1;
pub const PF_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacError {
    #[error("context needs at least one user")]
    NoUsers,
    #[error("backlog and CQI vectors differ in length ({backlogs} vs {cqis})")]
    LengthMismatch { backlogs: usize, cqis: usize },
    #[error("CQI {0} outside 1..=15")]
    CqiOutOfRange(u8),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("invalid payload table: {0}")]
    Payload(String),
    #[error("invalid frame config: {0}")]
    Frame(String),
    #[error("invalid backlog range {lo}..={hi}")]
    BacklogRange { lo: u32, hi: u32 },
    #[error("unknown scheduler {0:?} (expected RR or PFCA)")]
    UnknownScheduler(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MacContext {
    backlogs: Vec<u32>,
    cqis: Vec<u8>,
}

impl MacContext {
    pub fn new(backlogs: Vec<u32>, cqis: Vec<u8>) -> Result<Self, MacError> {
        if backlogs.len() != cqis.len() {
            return Err(MacError::LengthMismatch {
                backlogs: backlogs.len(),
                cqis: cqis.len(),
            });
        }
        if backlogs.is_empty() {
            return Err(MacError::NoUsers);
        }
        if let Some(&c) = cqis.iter().find(|&&c| c == 0 || c > MAX_CQI) {
            return Err(MacError::CqiOutOfRange(c));
        }
        Ok(Self { backlogs, cqis })
    }

    pub fn users(&self) -> usize {
        self.backlogs.len()
    }

    pub fn backlogs(&self) -> &[u32] {
        &self.backlogs
    }

    pub fn cqis(&self) -> &[u8] {
        &self.cqis
    }

    pub fn max_backlog(&self) -> u32 {
        self.backlogs.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheduler {
    RoundRobin,
    ProportionalFair,
}

impl Scheduler {
    pub const ALL: [Scheduler; 2] = [Scheduler::RoundRobin, Scheduler::ProportionalFair];

    pub fn label(self) -> &'static str {
        match self {
            Scheduler::RoundRobin => "RR",
            Scheduler::ProportionalFair => "PFCA",
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheduler {
    type Err = MacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RR" => Ok(Scheduler::RoundRobin),
            "PFCA" | "PF" => Ok(Scheduler::ProportionalFair),
            _ => Err(MacError::UnknownScheduler(s.to_string())),
        }
    }
}

/// Expected full-frame payload `g(c)` in packets for each CQI.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadTable([f64; 15]);

impl PayloadTable {
    /// `g(c) = K · s · eff(c) / eff(15)`, so a user's RR share at CQI 15 is `s`.
    pub fn from_efficiency(packets_per_share: f64, users: usize) -> Result<Self, MacError> {
        if !(packets_per_share >= 0.0 && packets_per_share.is_finite()) || users == 0 {
            return Err(MacError::Payload(format!(
                "scale {packets_per_share} for {users} users"
            )));
        }
        let top = CQI_EFFICIENCY[14];
        Ok(Self(CQI_EFFICIENCY.map(|e| users as f64 * packets_per_share * e / top)))
    }

    pub fn from_values(values: [f64; 15]) -> Result<Self, MacError> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MacError::Payload("entries must be finite and nonnegative".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(MacError::Payload("payload must be nondecreasing in CQI".into()));
        }
        Ok(Self(values))
    }

    pub fn payload(&self, cqi: u8) -> f64 {
        self.0[usize::from(cqi) - 1]
    }

    pub fn values(&self) -> &[f64; 15] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacPolicy {
    temperature: f64,
    payload: PayloadTable,
}

impl MacPolicy {
    pub fn new(temperature: f64, payload: PayloadTable) -> Result<Self, MacError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(MacError::Temperature(temperature));
        }
        Ok(Self { temperature, payload })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn payload(&self) -> &PayloadTable {
        &self.payload
    }

    /// Largest per-user backlog expected to remain if every user got `1/K` of the frame.
    pub fn estimate_rr_residual(&self, ctx: &MacContext) -> f64 {
        let k = ctx.users() as f64;
        ctx.backlogs
            .iter()
            .zip(&ctx.cqis)
            .map(|(&b, &c)| f64::from(b) - self.payload.payload(c) / k)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Logit of PFCA against RR, `b̂ / T`.
    fn pfca_logit(&self, ctx: &MacContext) -> f64 {
        self.estimate_rr_residual(ctx) / self.temperature
    }

    pub fn prob_rr(&self, ctx: &MacContext) -> f64 {
        logistic(-self.pfca_logit(ctx))
    }

    pub fn probability(&self, app: Scheduler, ctx: &MacContext) -> f64 {
        match app {
            Scheduler::RoundRobin => self.prob_rr(ctx),
            Scheduler::ProportionalFair => logistic(self.pfca_logit(ctx)),
        }
    }

    pub fn log_probability(&self, app: Scheduler, ctx: &MacContext) -> f64 {
        let z = self.pfca_logit(ctx);
        match app {
            Scheduler::RoundRobin => -softplus(z),
            Scheduler::ProportionalFair => -softplus(-z),
        }
    }

    /// `ln p(to|x) − ln p(from|x)`, the log density ratio `w_{from→to}(x)`.
    pub fn log_weight(&self, from: Scheduler, to: Scheduler, ctx: &MacContext) -> f64 {
        let z = self.pfca_logit(ctx);
        match (from, to) {
            (a, b) if a == b => 0.0,
            (Scheduler::RoundRobin, _) => z,
            (Scheduler::ProportionalFair, _) => -z,
        }
    }

    pub fn select_app<R: Rng + ?Sized>(&self, ctx: &MacContext, rng: &mut R) -> Scheduler {
        if rng.random::<f64>() < self.prob_rr(ctx) {
            Scheduler::RoundRobin
        } else {
            Scheduler::ProportionalFair
        }
    }
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Uniform integer backlogs on `lo..=hi` packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BacklogRange {
    lo: u32,
    hi: u32,
}

impl BacklogRange {
    pub fn new(lo: u32, hi: u32) -> Result<Self, MacError> {
        if lo > hi {
            return Err(MacError::BacklogRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> u32 {
        self.lo
    }

    pub fn hi(&self) -> u32 {
        self.hi
    }
}

impl Default for BacklogRange {
    fn default() -> Self {
        Self { lo: 10, hi: 100 }
    }
}

pub fn generate_context<R: Rng + ?Sized>(users: usize, backlog: BacklogRange, rng: &mut R) -> MacContext {
    assert!(users >= 1, "context needs at least one user");
    let backlogs = (0..users).map(|_| rng.random_range(backlog.lo..=backlog.hi)).collect();
    let cqis = (0..users).map(|_| rng.random_range(1..=MAX_CQI)).collect();
    MacContext { backlogs, cqis }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    resource_blocks: usize,
    success: [f64; 15],
}

impl FrameConfig {
    pub fn new(resource_blocks: usize, success: [f64; 15]) -> Result<Self, MacError> {
        if resource_blocks == 0 {
            return Err(MacError::Frame("need at least one resource block".into()));
        }
        if success.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(MacError::Frame("success probabilities must lie in (0, 1]".into()));
        }
        Ok(Self {
            resource_blocks,
            success,
        })
    }

    /// Every RB succeeds with the same probability regardless of CQI.
    pub fn with_constant_success(resource_blocks: usize, p: f64) -> Result<Self, MacError> {
        Self::new(resource_blocks, [p; 15])
    }

    pub fn with_resource_blocks(self, resource_blocks: usize) -> Result<Self, MacError> {
        Self::new(resource_blocks, self.success)
    }

    pub fn resource_blocks(&self) -> usize {
        self.resource_blocks
    }

    pub fn success_probability(&self, cqi: u8) -> f64 {
        self.success[usize::from(cqi) - 1]
    }
}

impl Default for FrameConfig {
    /// 50 RBs, success probability rising linearly from 0.9 at CQI 1 to 1 at CQI 15.
    fn default() -> Self {
        let mut success = [0.0; 15];
        for (i, p) in success.iter_mut().enumerate() {
            *p = 0.9 + 0.1 * i as f64 / 14.0;
        }
        Self {
            resource_blocks: DEFAULT_RESOURCE_BLOCKS,
            success,
        }
    }
}

/// Simulates one scheduling frame and returns the final backlogs.
///
/// RR walks the users cyclically in index order from a random starting user
/// and keeps serving the cycle even when a queue is empty. PFCA serves, per
/// RB, the nonempty queue with the largest `rate / max(avg, ε)`, with `avg`
/// an exponentially smoothed served-packet count. A scheduled RB drains
/// `round(g(c) / F)` packets on success and nothing otherwise.
pub fn run_frame<R: Rng + ?Sized>(
    app: Scheduler,
    ctx: &MacContext,
    payload: &PayloadTable,
    frame: &FrameConfig,
    rng: &mut R,
) -> Vec<u32> {
    let k = ctx.users();
    let f = frame.resource_blocks as f64;
    let rate: Vec<f64> = ctx.cqis.iter().map(|&c| payload.payload(c) / f).collect();
    let per_rb: Vec<u32> = rate.iter().map(|r| r.round() as u32).collect();
    let mut backlog = ctx.backlogs.clone();

    let serve = |user: usize, backlog: &mut [u32], rng: &mut R| -> u32 {
        if backlog[user] == 0 || !rng.random_bool(frame.success_probability(ctx.cqis[user])) {
            return 0;
        }
        let drained = per_rb[user].min(backlog[user]);
        backlog[user] -= drained;
        drained
    };

    match app {
        Scheduler::RoundRobin => {
            let start = rng.random_range(0..k);
            for rb in 0..frame.resource_blocks {
                serve((start + rb) % k, &mut backlog, rng);
            }
        }
        Scheduler::ProportionalFair => {
            let mut avg = vec![0.0f64; k];
            for _ in 0..frame.resource_blocks {
                let mut chosen: Option<(usize, f64)> = None;
                for u in (0..k).filter(|&u| backlog[u] > 0) {
                    let metric = rate[u] / avg[u].max(PF_EPSILON);
                    if chosen.is_none_or(|(_, best)| metric > best) {
                        chosen = Some((u, metric));
                    }
                }
                let Some((user, _)) = chosen else { break };
                let drained = serve(user, &mut backlog, rng);
                for (u, a) in avg.iter_mut().enumerate() {
                    let served = if u == user { f64::from(drained) } else { 0.0 };
                    *a = (1.0 - PF_SMOOTHING) * *a + PF_SMOOTHING * served;
                }
            }
        }
    }
    backlog
}
