//! Online one-step advantage actor-critic.

use serde::{Deserialize, Serialize};

use crate::agent::ActorCritic;
use crate::env::{episode_return, FlowKind, NavEnv};
use crate::eval::{episode_scores, EvalPoint, RunRecord};
use crate::nn::{Adam, ForwardCache};
use crate::par::Execution;
use crate::qlearning::eval_seed;
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2cConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Update the input normaliser with every observation.
    pub normalize_observations: bool,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl A2cConfig {
    pub fn for_kind(kind: FlowKind) -> Self {
        Self {
            actor_lr: 1e-6,
            critic_lr: 1e-4,
            gamma: if kind == FlowKind::Tgv { 0.95 } else { 0.99 },
            normalize_observations: true,
            eval_every: 1000,
            eval_episodes: 200,
        }
    }
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self::for_kind(FlowKind::Tgv)
    }
}

/// Learner state: networks, optimisers and reusable buffers.
pub struct A2cLearner {
    pub agent: ActorCritic,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    cache: ForwardCache,
}

/// Outcome of a single online update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct A2cStep {
    pub td_error: f64,
    pub value: f64,
}

impl A2cLearner {
    pub fn new(agent: ActorCritic, cfg: &A2cConfig) -> Self {
        let actor_opt = Adam::new(agent.actor.params().len(), cfg.actor_lr);
        let critic_opt = Adam::new(agent.critic.params().len(), cfg.critic_lr);
        Self {
            agent,
            actor_opt,
            critic_opt,
            cache: ForwardCache::default(),
        }
    }

    /// One update from `(o, a, r, o', done)`, observations raw. The critic
    /// descends `δ²/2` with the target held fixed and the actor descends
    /// `−δ·log π(a|o)`. A zero TD error leaves both networks untouched.
    pub fn update(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], done: bool, gamma: f64) -> Result<A2cStep> {
        let x = self.agent.normalizer.normalize(obs);
        let next = if done { 0.0 } else { self.agent.value(next_obs)? };
        let c = &mut self.cache;
        self.agent.critic.forward(&x, 1, c)?;
        let value = c.output()[0];
        let delta = reward + gamma * next - value;
        if !delta.is_finite() {
            return Err(Error::Divergence(format!(
                "TD error {delta}: r={reward}, V(o)={value}, V(o')={next}, o={obs:?}"
            )));
        }
        if delta == 0.0 {
            return Ok(A2cStep { td_error: 0.0, value });
        }
        let g = self.agent.critic.backward(c, &[-delta])?;
        self.critic_opt.step(self.agent.critic.params_mut(), &g)?;

        self.agent.actor.forward(&x, 1, c)?;
        let (_, dlogp) = self.agent.head.log_prob_grad(c.output(), action)?;
        let dout: Vec<f64> = dlogp.iter().map(|d| -delta * d).collect();
        let g = self.agent.actor.backward(c, &dout)?;
        self.actor_opt.step(self.agent.actor.params_mut(), &g)?;
        Ok(A2cStep { td_error: delta, value })
    }

    /// Stochastic action from the current policy.
    pub fn sample_action(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(self.agent.distribution(obs)?.sample(rng))
    }
}

pub struct A2cRun {
    pub agent: ActorCritic,
    pub best: ActorCritic,
    pub record: RunRecord,
}

pub fn a2c_train(env: &NavEnv, cfg: &A2cConfig, episodes: usize, seed: u64, exec: Execution) -> Result<A2cRun> {
    let mut init = rng::stream(seed, u64::MAX - 2);
    let agent = ActorCritic::new(env.observation_dim(), env.position_dim(), &mut init)?;
    let mut learner = A2cLearner::new(agent, cfg);
    let mut record = RunRecord::new("a2c", env.kind(), seed);
    let scale = env.config().naive_distance();
    let mut sampler = rng::stream(seed, u64::MAX);
    let mut best = learner.agent.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut evaluate = |agent: &ActorCritic, done: usize, record: &mut RunRecord| -> Result<()> {
        let scores = episode_scores(env, agent, cfg.eval_episodes, eval_seed(seed), exec)?;
        let score = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        record.evaluations.push(EvalPoint {
            episode: done,
            score,
            checkpoint: None,
        });
        if score > best_score {
            best_score = score;
            best = agent.clone();
        }
        Ok(())
    };
    for e in 0..episodes {
        let mut rng = rng::stream(seed, e as u64);
        let mut state = env.reset(&mut rng)?;
        if cfg.normalize_observations {
            learner.agent.normalizer.update(state.observation())?;
        }
        loop {
            let obs = state.observation().clone();
            let action = learner.sample_action(&obs, &mut sampler)?;
            let tr = env.step(&mut state, &action)?;
            if cfg.normalize_observations && !tr.done {
                learner.agent.normalizer.update(&tr.next_observation)?;
            }
            learner.update(&obs, &tr.action, tr.reward, &tr.next_observation, tr.done, cfg.gamma)?;
            if tr.done {
                break;
            }
        }
        record.returns.push(episode_return(&state, env.config())? / scale);
        if cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0 {
            evaluate(&learner.agent, e + 1, &mut record)?;
        }
    }
    if cfg.eval_every == 0 || !episodes.is_multiple_of(cfg.eval_every) || episodes == 0 {
        evaluate(&learner.agent, episodes, &mut record)?;
    }
    Ok(A2cRun {
        agent: learner.agent,
        best,
        record,
    })
}
