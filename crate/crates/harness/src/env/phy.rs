use ccke_core::quantile_net::{Architecture, Scaling};
use ccke_sim::phy::ser::{bin_low_db, SNR_BINS};
use ccke_sim::phy::{transmit_arq, ArqConfig, ContextDistribution, PhyContext, PhyPolicy, TransmissionApp, MAX_PATHS};
use rand::Rng;

use super::Environment;

#[derive(Debug, Clone)]
pub struct PhyEnv {
    policy: PhyPolicy,
    arq: ArqConfig,
    contexts: ContextDistribution,
    log_bounds: [f64; 4],
}

impl PhyEnv {
    pub fn new(policy: PhyPolicy, arq: ArqConfig, contexts: ContextDistribution) -> Self {
        // p(a|x) is constant on each (SNR bin, paths) cell.
        let mut log_bounds = [f64::NEG_INFINITY; 4];
        for bin in 0..SNR_BINS {
            for m in 1..=MAX_PATHS {
                let ctx = PhyContext::new(bin_low_db(bin) + 0.5, m).expect("grid cell");
                for (b, lp) in log_bounds.iter_mut().zip(policy.log_probabilities(&ctx)) {
                    *b = b.max(lp);
                }
            }
        }
        Self {
            policy,
            arq,
            contexts,
            log_bounds,
        }
    }

    pub fn policy(&self) -> &PhyPolicy {
        &self.policy
    }

    pub fn arq(&self) -> &ArqConfig {
        &self.arq
    }
}

impl Environment for PhyEnv {
    type Context = PhyContext;
    type App = TransmissionApp;

    fn name(&self) -> &'static str {
        "PHY"
    }

    fn apps(&self) -> Vec<TransmissionApp> {
        TransmissionApp::ALL.to_vec()
    }

    fn temperature(&self) -> f64 {
        self.policy.temperature()
    }

    fn kpi_count(&self) -> usize {
        1
    }

    fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> PhyContext {
        self.contexts.sample(rng)
    }

    fn log_probability(&self, app: TransmissionApp, ctx: &PhyContext) -> f64 {
        self.policy.log_probability(app, ctx)
    }

    fn log_probability_bound(&self, app: TransmissionApp) -> f64 {
        self.log_bounds[app.index()]
    }

    fn select_app<R: Rng + ?Sized>(&self, ctx: &PhyContext, rng: &mut R) -> TransmissionApp {
        self.policy.select_app(ctx, rng)
    }

    fn log_weight(&self, target: TransmissionApp, actual: TransmissionApp, ctx: &PhyContext) -> f64 {
        self.policy.log_weight(target, actual, ctx)
    }

    fn rollout<R: Rng + ?Sized>(&self, app: TransmissionApp, ctx: &PhyContext, rng: &mut R) -> Vec<f64> {
        vec![f64::from(transmit_arq(app, ctx, &self.arq, rng))]
    }

    fn features(&self, ctx: &PhyContext) -> Vec<f64> {
        vec![ctx.snr_db(), f64::from(ctx.paths())]
    }

    fn normalizer(&self, _ctx: &PhyContext) -> f64 {
        1.0
    }

    fn kpi_domain(&self, _ctx: &PhyContext) -> (f64, f64) {
        (1.0, f64::from(self.arq.max_attempts()))
    }

    fn context_header(&self) -> Vec<String> {
        vec!["snr_db".into(), "m".into()]
    }

    fn context_record(&self, ctx: &PhyContext) -> Vec<String> {
        vec![ctx.snr_db().to_string(), ctx.paths().to_string()]
    }

    fn kpi_header(&self) -> Vec<String> {
        vec!["y".into()]
    }

    fn architecture(&self) -> Architecture {
        Architecture::link_feedforward()
    }

    fn scaling(&self) -> Scaling {
        Scaling {
            input: vec![15.0, f64::from(MAX_PATHS)],
            output: f64::from(self.arq.max_attempts()),
        }
    }
}
