//! Tabular Q-learning over tercile-binned observations and Cartesian headings.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baselines::DiscreteActionSet;
use crate::env::{episode_return, Components, FlowKind, NavEnv, Percept};
use crate::eval::{episode_scores, EvalPoint, RunRecord};
use crate::par::Execution;
use crate::policy::Policy;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Bins per observation component.
pub const BINS: usize = 3;

/// Tercile edges of every observation component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// `edges[c] = [q(1/3), q(2/3)]` of component `c`.
    pub edges: Vec<[f64; 2]>,
}

impl Discretizer {
    /// Terciles of `samples` observations taken at random starts.
    pub fn build(env: &NavEnv, samples: usize, seed: u64) -> Result<Self> {
        let d = env.observation_dim();
        let mut cols = vec![Vec::with_capacity(samples); d];
        let mut rng = rng::stream(seed, u64::MAX - 1);
        for _ in 0..samples {
            let s = env.reset(&mut rng)?;
            for (c, v) in cols.iter_mut().zip(s.observation()) {
                c.push(*v);
            }
        }
        Self::from_samples(cols)
    }

    /// Terciles of per-component sample columns.
    pub fn from_samples(mut cols: Vec<Vec<f64>>) -> Result<Self> {
        let mut edges = Vec::with_capacity(cols.len());
        for (c, col) in cols.iter_mut().enumerate() {
            if col.is_empty() {
                return Err(Error::Input("no observation samples".into()));
            }
            col.sort_by(f64::total_cmp);
            let n = col.len();
            let q = |p: f64| {
                // linear interpolation between order statistics
                let h = p * (n - 1) as f64;
                let lo = h.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                col[lo] + (h - lo as f64) * (col[hi] - col[lo])
            };
            let e = [q(1.0 / 3.0), q(2.0 / 3.0)];
            if !(col[n - 1] > col[0]) || !(e[1] > e[0]) {
                return Err(Error::DegenerateObservable { component: c });
            }
            edges.push(e);
        }
        Ok(Self { edges })
    }

    pub fn state_count(&self) -> usize {
        BINS.pow(self.edges.len() as u32)
    }

    pub fn bin(&self, component: usize, x: f64) -> usize {
        let [a, b] = self.edges[component];
        if x < a {
            0
        } else if x < b {
            1
        } else {
            2
        }
    }

    /// Mixed-radix index, component 0 least significant.
    pub fn index(&self, obs: &[f64]) -> usize {
        let mut idx = 0;
        for c in (0..self.edges.len()).rev() {
            idx = idx * BINS + self.bin(c, obs[c]);
        }
        idx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    /// Row-major `states × actions`.
    pub values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize, q0: f64) -> Self {
        Self {
            states,
            actions,
            values: vec![q0; states * actions],
        }
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate() {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    /// `Q(s,a) += lr·(r + γ·max Q(s',·) − Q(s,a))`, no bootstrap when `done`.
    #[allow(clippy::too_many_arguments)]
    pub fn update(&mut self, s: usize, a: usize, r: f64, next: usize, done: bool, lr: f64, gamma: f64) {
        let target = if done { r } else { r + gamma * self.max(next) };
        let q = &mut self.values[s * self.actions + a];
        *q += lr * (target - *q);
    }
}

/// ε-greedy choice: uniform with probability ε, otherwise greedy.
pub fn epsilon_greedy(table: &QTable, s: usize, epsilon: f64, rng: &mut Rng) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..table.actions)
    } else {
        table.argmax(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlConfig {
    /// Initial learning rate, annealed linearly to zero when `anneal` is set.
    pub learning_rate: f64,
    pub anneal: bool,
    pub epsilon: f64,
    pub gamma: f64,
    pub discretizer_samples: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl QlConfig {
    pub fn for_kind(kind: FlowKind) -> Self {
        Self {
            learning_rate: 0.8,
            anneal: true,
            epsilon: 0.1,
            gamma: if kind == FlowKind::Turb { 0.99 } else { 0.95 },
            discretizer_samples: 100_000,
            eval_every: 1000,
            eval_episodes: 200,
        }
    }
}

impl Default for QlConfig {
    fn default() -> Self {
        Self::for_kind(FlowKind::Tgv)
    }
}

/// Optimistic start value `vΔt/(1−γ)`.
pub fn optimistic_value(env: &NavEnv, gamma: f64) -> f64 {
    env.config().swim_speed * env.config().dt / (1.0 - gamma)
}

/// Deterministic policy reading a Q-table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QlPolicy {
    pub discretizer: Discretizer,
    pub table: QTable,
    #[serde(skip)]
    actions: Option<DiscreteActionSet>,
    pub dim: usize,
}

impl QlPolicy {
    pub fn new(discretizer: Discretizer, table: QTable, dim: usize) -> Result<Self> {
        let actions = DiscreteActionSet::new(dim)?;
        if table.actions != actions.len()
            || table.states != discretizer.state_count()
            || table.values.len() != table.states * table.actions
        {
            return Err(Error::Input("q-table shape does not match the environment".into()));
        }
        Ok(Self {
            discretizer,
            table,
            actions: Some(actions),
            dim,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: QlPolicy = serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))?;
        Self::new(p.discretizer, p.table, p.dim)
    }
}

impl Policy for QlPolicy {
    fn act(&self, percept: &Percept) -> Result<Components> {
        let s = self.discretizer.index(&percept.observation);
        let set = self.actions.as_ref().expect("constructed with an action set");
        Ok(set.get(self.table.argmax(s)).clone())
    }
}

pub struct QlRun {
    pub discretizer: Discretizer,
    /// Table at the end of training.
    pub table: QTable,
    /// Table with the best periodic evaluation.
    pub best: QlPolicy,
    pub record: RunRecord,
}

/// Seed of the periodic evaluation episodes of a training run.
pub fn eval_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, 0x6576_616c)
}

/// Trains for `episodes` episodes; episode `e` starts from stream `e` of `seed`.
pub fn ql_train(env: &NavEnv, cfg: &QlConfig, episodes: usize, seed: u64, exec: Execution) -> Result<QlRun> {
    let discretizer = Discretizer::build(env, cfg.discretizer_samples, seed)?;
    let actions = DiscreteActionSet::new(env.position_dim())?;
    let mut table = QTable::new(discretizer.state_count(), actions.len(), optimistic_value(env, cfg.gamma));
    let mut record = RunRecord::new("ql", env.kind(), seed);
    let scale = env.config().naive_distance();
    let mut explore = rng::stream(seed, u64::MAX);
    let mut best = QlPolicy::new(discretizer.clone(), table.clone(), env.position_dim())?;
    let mut best_score = f64::NEG_INFINITY;
    let mut evaluate = |table: &QTable, done: usize, record: &mut RunRecord| -> Result<()> {
        let policy = QlPolicy::new(discretizer.clone(), table.clone(), env.position_dim())?;
        let scores = episode_scores(env, &policy, cfg.eval_episodes, eval_seed(seed), exec)?;
        let score = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        record.evaluations.push(EvalPoint {
            episode: done,
            score,
            checkpoint: None,
        });
        if score > best_score {
            best_score = score;
            best = policy;
        }
        Ok(())
    };
    for e in 0..episodes {
        let lr = if cfg.anneal {
            cfg.learning_rate * (1.0 - e as f64 / episodes as f64)
        } else {
            cfg.learning_rate
        };
        let mut rng = rng::stream(seed, e as u64);
        let mut state = env.reset(&mut rng)?;
        let mut s = discretizer.index(state.observation());
        loop {
            let a = epsilon_greedy(&table, s, cfg.epsilon, &mut explore);
            let tr = env.step(&mut state, actions.get(a))?;
            let next = discretizer.index(&tr.next_observation);
            table.update(s, a, tr.reward, next, tr.done, lr, cfg.gamma);
            s = next;
            if tr.done {
                break;
            }
        }
        record.returns.push(episode_return(&state, env.config())? / scale);
        if cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0 {
            evaluate(&table, e + 1, &mut record)?;
        }
    }
    if cfg.eval_every == 0 || !episodes.is_multiple_of(cfg.eval_every) || episodes == 0 {
        evaluate(&table, episodes, &mut record)?;
    }
    Ok(QlRun {
        discretizer,
        table,
        best,
        record,
    })
}
