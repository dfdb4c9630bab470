//! Actor-critic pair shared by the policy-gradient learners: a vMF policy
//! network, an independent value network and the running input normaliser.

use crate::env::{Components, Percept};
use crate::nn::{Checkpoint, Mlp, RunningNormalizer, Vmf, VmfHead, ACTOR_HIDDEN, CRITIC_HIDDEN};
use crate::policy::Policy;
use crate::rng::Rng;
use crate::{Error, Result};

/// Factor applied to the actor's output-layer weights at initialisation.
pub const ACTOR_OUTPUT_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub head: VmfHead,
    pub normalizer: RunningNormalizer,
}

impl ActorCritic {
    pub fn new(obs_dim: usize, action_dim: usize, rng: &mut Rng) -> Result<Self> {
        let head = VmfHead { dim: action_dim };
        let mut actor = Mlp::glorot(&[obs_dim, ACTOR_HIDDEN[0], ACTOR_HIDDEN[1], head.raw_len()], rng)?;
        actor.scale_output_layer(ACTOR_OUTPUT_SCALE);
        let critic = Mlp::glorot(&[obs_dim, CRITIC_HIDDEN[0], CRITIC_HIDDEN[1], 1], rng)?;
        Ok(Self {
            actor,
            critic,
            head,
            normalizer: RunningNormalizer::new(obs_dim),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<Vmf> {
        let x = self.normalizer.normalize(obs);
        self.head.distribution(&self.actor.predict(&x)?)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        let x = self.normalizer.normalize(obs);
        Ok(self.critic.predict(&x)?[0])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            networks: vec![self.actor.clone(), self.critic.clone()],
            normalizer: Some(self.normalizer.clone()),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let bad = |why: &str| Error::Input(format!("not an actor-critic checkpoint: {why}"));
        let mut nets = ck.networks.into_iter();
        let (actor, critic) = match (nets.next(), nets.next(), nets.next()) {
            (Some(a), Some(c), None) => (a, c),
            _ => return Err(bad("expected two networks")),
        };
        let normalizer = ck.normalizer.ok_or_else(|| bad("missing normalizer"))?;
        let out = actor.output_dim();
        if !(out == 3 || out == 4)
            || critic.output_dim() != 1
            || critic.input_dim() != actor.input_dim()
            || normalizer.dim() != actor.input_dim()
        {
            return Err(bad("inconsistent shapes"));
        }
        Ok(Self {
            actor,
            critic,
            head: VmfHead { dim: out - 1 },
            normalizer,
        })
    }
}

/// Deterministic evaluation: the mean direction under frozen normalisation.
impl Policy for ActorCritic {
    fn act(&self, percept: &Percept) -> Result<Components> {
        Ok(self.distribution(&percept.observation)?.mean_direction().iter().copied().collect())
    }
}
