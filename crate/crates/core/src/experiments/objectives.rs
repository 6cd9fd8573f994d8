use crate::ars::rng::derive_seed;
use crate::ars::{EvalContext, Evaluation, Normalizer, Objective};
use crate::error::Result;
use crate::hrl::{HrlPolicy, RolloutOptions, FULL_OBS_DIM};
use crate::linear_policy::{unflatten_values, LinearMap, ParamVector};
use crate::sim::{EnvConfig, Task, HIGH_OBS_DIM};

use super::expert::{expert_episode, stratified_commands, ExpertRewardConfig};
use super::{Method, Policy};

/// Total episode return of a policy on a task.
#[derive(Clone, Debug)]
pub struct PolicyObjective {
    pub method: Method,
    pub latent_dim: usize,
    pub task: Task,
    pub env: EnvConfig,
}

impl Objective for PolicyObjective {
    fn evaluate(&self, params: &ParamVector, ctx: &EvalContext<'_>) -> Result<Evaluation> {
        let policy = Policy::from_params(self.method, self.latent_dim, params.values())?;
        let opts = RolloutOptions {
            seed: ctx.seed,
            record_steps: false,
            normalizer: ctx.normalizer,
            collect_stats: ctx.collect_stats,
        };
        let log = policy.run(&self.task, &self.env, &opts)?;
        Ok(Evaluation {
            total_return: log.total_return,
            stats: log.stats,
        })
    }

    fn observation_dim(&self) -> Option<usize> {
        Some(FULL_OBS_DIM)
    }
}

/// Mean steering-reward return of the expert low level over a stratified
/// set of commands.
#[derive(Clone, Debug)]
pub struct ExpertLowObjective {
    pub reward: ExpertRewardConfig,
    pub env: EnvConfig,
}

impl Objective for ExpertLowObjective {
    fn evaluate(&self, params: &ParamVector, ctx: &EvalContext<'_>) -> Result<Evaluation> {
        let low = unflatten_values(params.values(), &Method::ExpertLow.layout(1))?
            .pop()
            .expect("one map");
        let policy = HrlPolicy::from_maps(LinearMap::zeros(2, HIGH_OBS_DIM), low)?;
        let commands = stratified_commands(ctx.seed, self.reward.episodes_per_eval);
        let mut stats = ctx.collect_stats.then(|| Normalizer::new(FULL_OBS_DIM));
        let mut total = 0.0;
        for (k, &command) in commands.iter().enumerate() {
            let opts = RolloutOptions {
                seed: derive_seed(&[ctx.seed, k as u64]),
                record_steps: false,
                normalizer: ctx.normalizer,
                collect_stats: ctx.collect_stats,
            };
            let ep = expert_episode(&policy, command, &self.reward, &self.env, &opts)?;
            total += ep.total_return;
            if let (Some(s), Some(e)) = (stats.as_mut(), ep.stats.as_ref()) {
                s.merge(e)?;
            }
        }
        Ok(Evaluation {
            total_return: total / commands.len() as f64,
            stats,
        })
    }

    fn observation_dim(&self) -> Option<usize> {
        Some(FULL_OBS_DIM)
    }
}
