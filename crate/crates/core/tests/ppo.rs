use flownav::agent::ActorCritic;
use flownav::env::{EnvConfig, FlowKind, NavEnv};
use flownav::nn::ForwardCache;
use flownav::par::Execution;
use flownav::ppo::{
    collect_rollout, compute_gae, minibatch_grads, normalize_advantages, ppo_train, PpoConfig, PpoLearner, RolloutBuffer,
    VecEnv,
};
use flownav::rng::stream;
use proptest::prelude::*;

fn buffer_strategy() -> impl Strategy<Value = RolloutBuffer> {
    (1usize..5, 1usize..12).prop_flat_map(|(n, len)| {
        let k = n * len;
        (
            prop::collection::vec(-2.0..2.0f64, k),
            prop::collection::vec(-2.0..2.0f64, k),
            prop::collection::vec(prop::bool::weighted(0.2), k),
            prop::collection::vec(-2.0..2.0f64, n),
        )
            .prop_map(move |(rewards, values, dones, bootstrap)| RolloutBuffer {
                n_envs: n,
                len,
                rewards,
                values,
                dones,
                bootstrap,
                ..Default::default()
            })
    })
}

/// `A_t = Σ_l (γλ)^l δ_{t+l}`, truncated at the first done.
fn gae_double_loop(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = buf.n_envs;
    let mut out = vec![0.0; buf.size()];
    for i in 0..n {
        for t in 0..buf.len {
            let mut acc = 0.0;
            let mut w = 1.0;
            for l in t..buf.len {
                let k = l * n + i;
                let next_v = if buf.dones[k] {
                    0.0
                } else if l + 1 < buf.len {
                    buf.values[(l + 1) * n + i]
                } else {
                    buf.bootstrap[i]
                };
                acc += w * (buf.rewards[k] + gamma * next_v - buf.values[k]);
                if buf.dones[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            out[t * n + i] = acc;
        }
    }
    out
}

proptest! {
    #[test]
    fn gae_matches_double_loop(buf in buffer_strategy(), gamma in 0.5..1.0f64, lambda in 0.0..1.0f64) {
        let (adv, ret) = compute_gae(&buf, gamma, lambda);
        let want = gae_double_loop(&buf, gamma, lambda);
        for k in 0..buf.size() {
            prop_assert!((adv[k] - want[k]).abs() < 1e-12);
            prop_assert!((ret[k] - adv[k] - buf.values[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_one_is_discounted_return(buf in buffer_strategy(), gamma in 0.5..1.0f64) {
        let (_, ret) = compute_gae(&buf, gamma, 1.0);
        let n = buf.n_envs;
        for i in 0..n {
            for t in 0..buf.len {
                let mut g = 0.0;
                let mut w = 1.0;
                let mut ended = false;
                for l in t..buf.len {
                    let k = l * n + i;
                    g += w * buf.rewards[k];
                    w *= gamma;
                    if buf.dones[k] {
                        ended = true;
                        break;
                    }
                }
                if !ended {
                    g += w * buf.bootstrap[i];
                }
                prop_assert!((ret[t * n + i] - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalised_advantages_are_standardised(mut a in prop::collection::vec(-100.0..100.0f64, 2..200)) {
        prop_assume!(a.iter().any(|x| (x - a[0]).abs() > 1e-3));
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let sd = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((sd - 1.0).abs() < 1e-6);
    }
}

fn setup(kind: FlowKind) -> (ActorCritic, RolloutBuffer, PpoConfig) {
    let mut ec = EnvConfig::for_kind(kind);
    ec.episode_steps = 7;
    let env = NavEnv::new(ec, None).unwrap();
    let cfg = PpoConfig {
        num_envs: 4,
        rollout_len: 5,
        minibatches: 2,
        ..PpoConfig::for_kind(kind)
    };
    let mut agent = ActorCritic::new(env.observation_dim(), env.position_dim(), &mut stream(1, 0)).unwrap();
    let mut venv = VecEnv::new(env, cfg.num_envs, 2).unwrap();
    let buf = collect_rollout(&mut venv, &mut agent, &cfg, &mut stream(3, 0), Execution::Sequential).unwrap();
    (agent, buf, cfg)
}

#[test]
fn stored_log_probs_are_recomputable() {
    for kind in [FlowKind::Tgv, FlowKind::Abc] {
        let (agent, buf, _) = setup(kind);
        let (d, ad) = (buf.obs_dim, buf.action_dim);
        assert_eq!(buf.size(), 20);
        // episodes of 7 steps end inside a 5-step rollout only on step 7
        for k in 0..buf.size() {
            let raw = agent.actor.predict(&buf.obs[k * d..(k + 1) * d]).unwrap();
            let lp = agent.head.log_prob(&raw, &buf.actions[k * ad..(k + 1) * ad]).unwrap();
            assert!((lp - buf.log_probs[k]).abs() < 1e-12);
            let v = agent.critic.predict(&buf.obs[k * d..(k + 1) * d]).unwrap()[0];
            assert!((v - buf.values[k]).abs() < 1e-12);
        }
        assert!(buf.dones.iter().all(|d| !d));
    }
}

#[test]
fn minibatch_loss_matches_hand_computation() {
    let (agent, mut buf, cfg) = setup(FlowKind::Abc);
    let (adv, returns) = compute_gae(&buf, cfg.gamma, cfg.gae_lambda);
    let idx: Vec<usize> = vec![0, 3, 5, 8, 13, 19];
    let a: Vec<f64> = idx.iter().map(|&k| adv[k]).collect();
    let mut cache = ForwardCache::default();

    // unchanged policy: every ratio is one
    let g = minibatch_grads(&agent, &buf, &idx, &a, &returns, cfg.clip, &mut cache).unwrap();
    assert!(g.stats.approx_kl.abs() < 1e-15);
    assert_eq!(g.stats.clip_fraction, 0.0);
    let mean_adv = a.iter().sum::<f64>() / a.len() as f64;
    assert!((g.stats.policy_loss + mean_adv).abs() < 1e-12);

    // shift the stored log-probabilities to produce known ratios
    let shifts = [0.5f64, -0.05, -0.4, 0.02, 0.3, -0.2];
    for (&k, s) in idx.iter().zip(shifts) {
        buf.log_probs[k] -= s;
    }
    let g = minibatch_grads(&agent, &buf, &idx, &a, &returns, cfg.clip, &mut cache).unwrap();
    let (mut pl, mut kl, mut cf, mut vl) = (0.0, 0.0, 0.0, 0.0);
    let m = idx.len() as f64;
    for (j, &k) in idx.iter().enumerate() {
        let r = shifts[j].exp();
        let c = r.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        pl -= (r * a[j]).min(c * a[j]) / m;
        kl += (r - 1.0 - shifts[j]) / m;
        if (r - 1.0).abs() > cfg.clip {
            cf += 1.0 / m;
        }
        let d = buf.obs_dim;
        let v = agent.critic.predict(&buf.obs[k * d..(k + 1) * d]).unwrap()[0];
        vl += 0.5 * (v - returns[k]).powi(2) / m;
    }
    assert!((g.stats.policy_loss - pl).abs() < 1e-10);
    assert!((g.stats.approx_kl - kl).abs() < 1e-10);
    assert!((g.stats.clip_fraction - cf).abs() < 1e-12);
    assert!((g.stats.value_loss - vl).abs() < 1e-10);
}

#[test]
fn clipped_samples_contribute_no_policy_gradient() {
    let (agent, mut buf, cfg) = setup(FlowKind::Tgv);
    let idx: Vec<usize> = (0..buf.size()).collect();
    let returns = vec![0.0; buf.size()];
    // ratio e^0.5 with positive advantage and e^-0.5 with negative: both clipped
    for (k, lp) in buf.log_probs.iter_mut().enumerate() {
        *lp -= if k % 2 == 0 { 0.5 } else { -0.5 };
    }
    let a: Vec<f64> = (0..buf.size()).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut cache = ForwardCache::default();
    let g = minibatch_grads(&agent, &buf, &idx, &a, &returns, cfg.clip, &mut cache).unwrap();
    assert!((g.stats.clip_fraction - 1.0).abs() < 1e-12);
    assert!(g.actor.iter().all(|&x| x == 0.0));
    assert!(g.critic.iter().any(|&x| x != 0.0));
}

#[test]
fn kl_target_stops_epochs_early() {
    let (agent, buf, cfg) = setup(FlowKind::Abc);
    let run = |target: Option<f64>| {
        let cfg = PpoConfig {
            target_kl: target,
            actor_lr: 1e-2,
            ..cfg.clone()
        };
        let mut l = PpoLearner::new(agent.clone(), &cfg);
        l.update(&buf, &cfg, &mut stream(4, 0)).unwrap()
    };
    assert_eq!(run(None).epochs, cfg.epochs);
    assert_eq!(run(Some(0.0)).epochs, 1);
    assert_eq!(run(Some(1e9)).epochs, cfg.epochs);
}

#[test]
fn training_is_deterministic_and_counts_episodes() {
    let mut ec = EnvConfig::for_kind(FlowKind::Tgv);
    ec.episode_steps = 10;
    let env = NavEnv::new(ec, None).unwrap();
    let cfg = PpoConfig {
        num_envs: 4,
        rollout_len: 5,
        minibatches: 2,
        eval_every: 10,
        eval_episodes: 10,
        stats_every: 1,
        ..PpoConfig::for_kind(FlowKind::Tgv)
    };
    let a = ppo_train(&env, &cfg, 25, 5, Execution::Parallel).unwrap();
    let b = ppo_train(&env, &cfg, 25, 5, Execution::Sequential).unwrap();
    assert_eq!(a.agent, b.agent);
    assert_eq!(a.record, b.record);
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.record.returns.len(), 25);
    let at: Vec<usize> = a.record.evaluations.iter().map(|e| e.episode).collect();
    assert_eq!(at, vec![10, 20, 25]);
    // learning rates anneal towards zero
    let lrs: Vec<f64> = a.stats.iter().map(|s| s.actor_lr).collect();
    assert!(lrs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn learns_to_swim_up_in_still_fluid() {
    let mut ec = EnvConfig::for_kind(FlowKind::Tgv);
    ec.tgv.amplitude = 0.0;
    ec.episode_steps = 100;
    let env = NavEnv::new(ec, None).unwrap();
    let cfg = PpoConfig {
        num_envs: 10,
        eval_every: 100,
        eval_episodes: 20,
        ..PpoConfig::for_kind(FlowKind::Tgv)
    };
    let run = ppo_train(&env, &cfg, 500, 0, Execution::Parallel).unwrap();
    let score = run.record.best_score().unwrap();
    assert!(score > 0.99, "{score}");
    let kappa = run.agent.distribution(&[0.0, 0.0]).unwrap().kappa();
    assert!(kappa > 5.0, "κ = {kappa}");
}
