use ccke_core::quantile_net::{Architecture, Scaling};
use ccke_sim::mac::{
    generate_context, run_frame, BacklogRange, FrameConfig, MacContext, MacPolicy, Scheduler,
};
use rand::Rng;

use super::Environment;

#[derive(Debug, Clone)]
pub struct MacEnv {
    users: usize,
    policy: MacPolicy,
    frame: FrameConfig,
    backlog: BacklogRange,
}

impl MacEnv {
    pub fn new(users: usize, policy: MacPolicy, frame: FrameConfig, backlog: BacklogRange) -> Self {
        assert!(users >= 1, "need at least one user");
        Self {
            users,
            policy,
            frame,
            backlog,
        }
    }

    pub fn policy(&self) -> &MacPolicy {
        &self.policy
    }

    pub fn frame(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn backlog(&self) -> BacklogRange {
        self.backlog
    }
}

impl Environment for MacEnv {
    type Context = MacContext;
    type App = Scheduler;

    fn name(&self) -> &'static str {
        "MAC"
    }

    fn apps(&self) -> Vec<Scheduler> {
        Scheduler::ALL.to_vec()
    }

    fn temperature(&self) -> f64 {
        self.policy.temperature()
    }

    fn kpi_count(&self) -> usize {
        self.users
    }

    fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> MacContext {
        generate_context(self.users, self.backlog, rng)
    }

    fn log_probability(&self, app: Scheduler, ctx: &MacContext) -> f64 {
        self.policy.log_probability(app, ctx)
    }

    fn select_app<R: Rng + ?Sized>(&self, ctx: &MacContext, rng: &mut R) -> Scheduler {
        self.policy.select_app(ctx, rng)
    }

    fn log_weight(&self, target: Scheduler, actual: Scheduler, ctx: &MacContext) -> f64 {
        self.policy.log_weight(target, actual, ctx)
    }

    fn rollout<R: Rng + ?Sized>(&self, app: Scheduler, ctx: &MacContext, rng: &mut R) -> Vec<f64> {
        run_frame(app, ctx, self.policy.payload(), &self.frame, rng)
            .into_iter()
            .map(f64::from)
            .collect()
    }

    fn features(&self, ctx: &MacContext) -> Vec<f64> {
        ctx.backlogs()
            .iter()
            .zip(ctx.cqis())
            .flat_map(|(&b, &c)| [f64::from(b), f64::from(c)])
            .collect()
    }

    fn normalizer(&self, ctx: &MacContext) -> f64 {
        f64::from(ctx.max_backlog())
    }

    fn kpi_domain(&self, ctx: &MacContext) -> (f64, f64) {
        (0.0, f64::from(ctx.max_backlog()))
    }

    fn context_header(&self) -> Vec<String> {
        let b = (1..=self.users).map(|k| format!("b_in_{k}"));
        let c = (1..=self.users).map(|k| format!("cqi_{k}"));
        b.chain(c).collect()
    }

    fn context_record(&self, ctx: &MacContext) -> Vec<String> {
        let b = ctx.backlogs().iter().map(u32::to_string);
        let c = ctx.cqis().iter().map(u8::to_string);
        b.chain(c).collect()
    }

    fn kpi_header(&self) -> Vec<String> {
        (1..=self.users).map(|k| format!("b_fin_{k}")).collect()
    }

    fn architecture(&self) -> Architecture {
        Architecture::scheduler_attention()
    }

    fn scaling(&self) -> Scaling {
        let b = f64::from(self.backlog.hi().max(1));
        Scaling {
            input: vec![b, 15.0],
            output: b,
        }
    }
}
