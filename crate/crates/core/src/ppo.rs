//! Proximal policy optimisation with vectorised fixed-length rollouts.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::agent::ActorCritic;
use crate::env::{episode_return, Components, EnvState, FlowKind, NavEnv};
use crate::eval::{episode_scores, EvalPoint, RunRecord};
use crate::nn::{Adam, ForwardCache};
use crate::par::Execution;
use crate::qlearning::eval_seed;
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub anneal: bool,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub num_envs: usize,
    pub rollout_len: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub clip: f64,
    pub entropy_coef: f64,
    pub target_kl: Option<f64>,
    pub normalize_advantages: bool,
    pub normalize_observations: bool,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Keep the statistics of every `stats_every`-th update.
    pub stats_every: usize,
}

impl PpoConfig {
    pub fn for_kind(kind: FlowKind) -> Self {
        let (num_envs, rollout_len) = match kind {
            FlowKind::Tgv => (100, 10),
            FlowKind::Abc => (10, 10),
            FlowKind::Turb => (10, 100),
        };
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            anneal: true,
            gamma: 0.99,
            gae_lambda: 1.0,
            num_envs,
            rollout_len,
            minibatches: 5,
            epochs: 4,
            clip: 0.1,
            entropy_coef: 0.0,
            target_kl: Some(0.02),
            normalize_advantages: true,
            normalize_observations: true,
            eval_every: 1000,
            eval_episodes: 200,
            stats_every: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let batch = self.num_envs * self.rollout_len;
        if batch == 0 || self.minibatches == 0 || batch < self.minibatches {
            return Err(Error::Config("ppo: rollout batch must hold at least one sample per minibatch".into()));
        }
        if self.entropy_coef != 0.0 {
            return Err(Error::Config("ppo: entropy bonus is not implemented".into()));
        }
        Ok(())
    }
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self::for_kind(FlowKind::Tgv)
    }
}

/// Transitions of one rollout, stored step-major: index `t·n_envs + i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub len: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Normalised observations.
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The transition ended an episode.
    pub dones: Vec<bool>,
    /// Value of the observation following each env's last step.
    pub bootstrap: Vec<f64>,
}

impl RolloutBuffer {
    pub fn size(&self) -> usize {
        self.n_envs * self.len
    }
}

/// GAE advantages and returns `A + V`, with done flags cutting the recursion.
pub fn compute_gae(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, len) = (buf.n_envs, buf.len);
    let mut adv = vec![0.0; n * len];
    for i in 0..n {
        let mut next_adv = 0.0;
        let mut next_value = buf.bootstrap[i];
        for t in (0..len).rev() {
            let k = t * n + i;
            let live = if buf.dones[k] { 0.0 } else { 1.0 };
            let delta = buf.rewards[k] + gamma * next_value * live - buf.values[k];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[k] = next_adv;
            next_value = buf.values[k];
        }
    }
    let ret = adv.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Rescales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-12;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
}

/// Vectorised environments with persistent episode state.
pub struct VecEnv {
    pub env: NavEnv,
    pub states: Vec<EnvState>,
    pub seed: u64,
    next_episode: u64,
    /// Normalised returns of episodes finished since the last drain.
    pub finished: Vec<f64>,
}

impl VecEnv {
    /// Env `i` starts from stream `i` of `seed`; later episodes take the next
    /// unused stream in env order.
    pub fn new(env: NavEnv, n: usize, seed: u64) -> Result<Self> {
        let states = (0..n)
            .map(|i| env.reset(&mut rng::stream(seed, i as u64)))
            .collect::<Result<_>>()?;
        Ok(Self {
            env,
            states,
            seed,
            next_episode: n as u64,
            finished: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn observations(&self) -> Vec<f64> {
        self.states.iter().flat_map(|s| s.observation().iter().copied()).collect()
    }

    /// Steps every env; finished envs are reset. Returns `(rewards, dones)`.
    pub fn step(&mut self, actions: &[Components], exec: Execution) -> Result<(Vec<f64>, Vec<bool>)> {
        let trs = self.env.batch_step(&mut self.states, actions, exec)?;
        let scale = self.env.config().naive_distance();
        let mut rewards = Vec::with_capacity(trs.len());
        let mut dones = Vec::with_capacity(trs.len());
        for (i, tr) in trs.iter().enumerate() {
            rewards.push(tr.reward);
            dones.push(tr.done);
            if tr.done {
                self.finished.push(episode_return(&self.states[i], self.env.config())? / scale);
                let mut r = rng::stream(self.seed, self.next_episode);
                self.next_episode += 1;
                self.states[i] = self.env.reset(&mut r)?;
            }
        }
        Ok((rewards, dones))
    }
}

fn forward_policy(
    agent: &ActorCritic,
    x: &[f64],
    batch: usize,
    cache: &mut ForwardCache,
) -> Result<()> {
    agent.actor.forward(x, batch, cache)
}

/// Collects `rollout_len` lockstep steps from all envs, sampling the vMF
/// policy. Raw observations update the normaliser before being normalised.
pub fn collect_rollout(
    venv: &mut VecEnv,
    agent: &mut ActorCritic,
    cfg: &PpoConfig,
    rng: &mut Rng,
    exec: Execution,
) -> Result<RolloutBuffer> {
    let n = venv.len();
    let d = agent.obs_dim();
    let a_dim = agent.head.dim;
    let mut buf = RolloutBuffer {
        n_envs: n,
        len: cfg.rollout_len,
        obs_dim: d,
        action_dim: a_dim,
        ..Default::default()
    };
    let mut cache = ForwardCache::default();
    let raw_len = agent.head.raw_len();
    for _ in 0..cfg.rollout_len {
        let raw_obs = venv.observations();
        if cfg.normalize_observations {
            agent.normalizer.update(&raw_obs)?;
        }
        let x = agent.normalizer.normalize(&raw_obs);
        forward_policy(agent, &x, n, &mut cache)?;
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let raw = &cache.output()[i * raw_len..(i + 1) * raw_len];
            let dist = agent.head.distribution(raw)?;
            let a = dist.sample(rng);
            buf.log_probs.push(dist.log_prob(&a)?);
            buf.actions.extend_from_slice(&a);
            actions.push(a.into_iter().collect());
        }
        agent.critic.forward(&x, n, &mut cache)?;
        buf.values.extend_from_slice(cache.output());
        let (rewards, dones) = venv.step(&actions, exec).map_err(|e| match e {
            Error::Divergence(m) => Error::Divergence(m),
            other => Error::Input(format!("environment fault during rollout: {other}")),
        })?;
        buf.obs.extend_from_slice(&x);
        buf.rewards.extend(rewards);
        buf.dones.extend(dones);
    }
    let x = agent.normalizer.normalize(&venv.observations());
    agent.critic.forward(&x, n, &mut cache)?;
    buf.bootstrap = cache.output().to_vec();
    Ok(buf)
}

/// Losses and diagnostics of one minibatch, before any parameter change.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MinibatchStats {
    /// Negated clipped surrogate, averaged.
    pub policy_loss: f64,
    /// `½·mean((V − R)²)`.
    pub value_loss: f64,
    /// `mean(ρ − 1 − ln ρ)`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Gradients of the minibatch losses.
pub struct MinibatchGrads {
    pub stats: MinibatchStats,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

/// Evaluates the clipped-surrogate and value losses on `idx` and their
/// parameter gradients. `adv` must already be normalised as desired.
pub fn minibatch_grads(
    agent: &ActorCritic,
    buf: &RolloutBuffer,
    idx: &[usize],
    adv: &[f64],
    returns: &[f64],
    clip: f64,
    cache: &mut ForwardCache,
) -> Result<MinibatchGrads> {
    let m = idx.len();
    let (d, ad) = (buf.obs_dim, buf.action_dim);
    let raw_len = agent.head.raw_len();
    let mut x = Vec::with_capacity(m * d);
    for &k in idx {
        x.extend_from_slice(&buf.obs[k * d..(k + 1) * d]);
    }
    let mf = m as f64;
    let mut stats = MinibatchStats::default();

    agent.actor.forward(&x, m, cache)?;
    let mut dout = vec![0.0; m * raw_len];
    for (j, &k) in idx.iter().enumerate() {
        let raw = &cache.output()[j * raw_len..(j + 1) * raw_len];
        let action = &buf.actions[k * ad..(k + 1) * ad];
        let (logp, dlogp) = agent.head.log_prob_grad(raw, action)?;
        let log_ratio = logp - buf.log_probs[k];
        let ratio = log_ratio.exp();
        let a = adv[j];
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let surrogate = (ratio * a).min(clipped * a);
        stats.policy_loss -= surrogate / mf;
        stats.approx_kl += (ratio - 1.0 - log_ratio) / mf;
        if (ratio - 1.0).abs() > clip {
            stats.clip_fraction += 1.0 / mf;
        }
        // gradient flows only when the unclipped term is the minimum
        let active = !((a > 0.0 && ratio > 1.0 + clip) || (a < 0.0 && ratio < 1.0 - clip));
        if active {
            let w = -ratio * a / mf;
            for (o, g) in dout[j * raw_len..(j + 1) * raw_len].iter_mut().zip(&dlogp) {
                *o = w * g;
            }
        }
    }
    if !stats.policy_loss.is_finite() {
        return Err(Error::Divergence(format!(
            "policy loss {} on minibatch of {m}: first indices {:?}",
            stats.policy_loss,
            &idx[..m.min(8)]
        )));
    }
    let actor = agent.actor.backward(cache, &dout)?;

    agent.critic.forward(&x, m, cache)?;
    let mut dv = vec![0.0; m];
    for (j, &k) in idx.iter().enumerate() {
        let err = cache.output()[j] - returns[k];
        stats.value_loss += 0.5 * err * err / mf;
        dv[j] = err / mf;
    }
    if !stats.value_loss.is_finite() {
        return Err(Error::Divergence(format!("value loss {} on minibatch of {m}", stats.value_loss)));
    }
    let critic = agent.critic.backward(cache, &dv)?;
    Ok(MinibatchGrads { stats, actor, critic })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub update: usize,
    pub episodes: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub epochs: usize,
}

impl UpdateStats {
    pub const CSV_HEADER: &'static str =
        "update,episodes,actor_lr,critic_lr,policy_loss,value_loss,approx_kl,clip_fraction,epochs";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.update,
            self.episodes,
            self.actor_lr,
            self.critic_lr,
            self.policy_loss,
            self.value_loss,
            self.approx_kl,
            self.clip_fraction,
            self.epochs
        )
    }
}

pub fn stats_csv(stats: &[UpdateStats]) -> String {
    let mut s = String::from(UpdateStats::CSV_HEADER);
    s.push('\n');
    for st in stats {
        writeln!(s, "{}", st.csv_row()).unwrap();
    }
    s
}

/// Optimiser state of a PPO learner.
pub struct PpoLearner {
    pub agent: ActorCritic,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    cache: ForwardCache,
}

impl PpoLearner {
    pub fn new(agent: ActorCritic, cfg: &PpoConfig) -> Self {
        Self {
            actor_opt: Adam::new(agent.actor.params().len(), cfg.actor_lr),
            critic_opt: Adam::new(agent.critic.params().len(), cfg.critic_lr),
            agent,
            cache: ForwardCache::default(),
        }
    }

    /// Epoch/minibatch optimisation on one buffer. Stops after the first
    /// epoch whose mean approximate KL exceeds the target.
    pub fn update(&mut self, buf: &RolloutBuffer, cfg: &PpoConfig, rng: &mut Rng) -> Result<UpdateStats> {
        let (adv, returns) = compute_gae(buf, cfg.gamma, cfg.gae_lambda);
        let n = buf.size();
        let mut order: Vec<usize> = (0..n).collect();
        let mut out = UpdateStats {
            actor_lr: self.actor_opt.lr,
            critic_lr: self.critic_opt.lr,
            ..Default::default()
        };
        let mut count = 0.0;
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            let mut epoch_kl = 0.0;
            for mb in 0..cfg.minibatches {
                let idx = &order[mb * n / cfg.minibatches..(mb + 1) * n / cfg.minibatches];
                let mut a: Vec<f64> = idx.iter().map(|&k| adv[k]).collect();
                if cfg.normalize_advantages {
                    normalize_advantages(&mut a);
                }
                let g = minibatch_grads(&self.agent, buf, idx, &a, &returns, cfg.clip, &mut self.cache)?;
                self.actor_opt.step(self.agent.actor.params_mut(), &g.actor)?;
                self.critic_opt.step(self.agent.critic.params_mut(), &g.critic)?;
                epoch_kl += g.stats.approx_kl / cfg.minibatches as f64;
                out.policy_loss += g.stats.policy_loss;
                out.value_loss += g.stats.value_loss;
                out.approx_kl += g.stats.approx_kl;
                out.clip_fraction += g.stats.clip_fraction;
                count += 1.0;
            }
            out.epochs += 1;
            if cfg.target_kl.is_some_and(|t| epoch_kl > t) {
                break;
            }
        }
        out.policy_loss /= count;
        out.value_loss /= count;
        out.approx_kl /= count;
        out.clip_fraction /= count;
        Ok(out)
    }
}

pub struct PpoRun {
    pub agent: ActorCritic,
    pub best: ActorCritic,
    pub record: RunRecord,
    pub stats: Vec<UpdateStats>,
}

/// Number of updates needed for `episodes` completed episodes.
pub fn update_budget(env: &NavEnv, cfg: &PpoConfig, episodes: usize) -> usize {
    let steps = episodes as u128 * env.config().episode_steps as u128;
    let per_update = (cfg.num_envs * cfg.rollout_len) as u128;
    steps.div_ceil(per_update) as usize
}

/// Trains until `episodes` episodes have completed across all envs. Learning
/// rates fall linearly to zero over the corresponding update budget.
pub fn ppo_train(env: &NavEnv, cfg: &PpoConfig, episodes: usize, seed: u64, exec: Execution) -> Result<PpoRun> {
    cfg.validate()?;
    let mut init = rng::stream(seed, u64::MAX - 2);
    let agent = ActorCritic::new(env.observation_dim(), env.position_dim(), &mut init)?;
    let mut learner = PpoLearner::new(agent, cfg);
    let mut venv = VecEnv::new(env.clone(), cfg.num_envs, seed)?;
    let mut sampler = rng::stream(seed, u64::MAX);
    let mut shuffler = rng::stream(seed, u64::MAX - 3);
    let mut record = RunRecord::new("ppo", env.kind(), seed);
    let mut stats = Vec::new();
    let total = update_budget(env, cfg, episodes);
    let mut best = learner.agent.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut next_eval = cfg.eval_every;
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
    let mut update = 0;
    while record.returns.len() < episodes {
        if cfg.anneal {
            let frac = 1.0 - update as f64 / total.max(1) as f64;
            learner.actor_opt.lr = cfg.actor_lr * frac.max(0.0);
            learner.critic_opt.lr = cfg.critic_lr * frac.max(0.0);
        }
        let buf = collect_rollout(&mut venv, &mut learner.agent, cfg, &mut sampler, exec)?;
        let mut st = learner.update(&buf, cfg, &mut shuffler)?;
        update += 1;
        let room = episodes - record.returns.len();
        record.returns.extend(venv.finished.drain(..).take(room));
        st.update = update;
        st.episodes = record.returns.len();
        if cfg.stats_every > 0 && update % cfg.stats_every == 0 {
            stats.push(st);
        }
        while cfg.eval_every > 0 && record.returns.len() >= next_eval {
            evaluate(&learner.agent, next_eval, &mut record)?;
            next_eval += cfg.eval_every;
        }
    }
    if record.evaluations.last().is_none_or(|e| e.episode != episodes) {
        evaluate(&learner.agent, episodes, &mut record)?;
    }
    Ok(PpoRun {
        agent: learner.agent,
        best,
        record,
        stats,
    })
}
