//! The navigation task as a partially observable environment.
//!
//! The agent position obeys `dX/dt = u(X, t) + v·p̂`, with the heading `p̂` held
//! fixed over each decision interval and the integral evaluated by classical
//! RK4. Positions are tracked unwrapped (so displacements are never clipped)
//! and wrapped only for flow lookups. The reward of a step is its displacement
//! along `z`, the last coordinate.

use std::path::PathBuf;
use std::sync::Arc;

use arrayvec::ArrayVec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::flow::{wrap_coordinate, AbcConfig, FlowSample, TgvConfig, VelocityField};
use crate::linalg::{transpose, Mat};
use crate::par::{self, Execution};
use crate::rng::Rng;
use crate::turbulence::{CachePolicy, SnapshotDataset, TurbulenceField};
use crate::{Error, Result};

/// Small dense vector (length 2 or 3).
pub type Components = ArrayVec<f64, 3>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Tgv,
    Abc,
    Turb,
}

impl FlowKind {
    pub const ALL: [FlowKind; 3] = [FlowKind::Tgv, FlowKind::Abc, FlowKind::Turb];

    /// Spatial dimension of positions and swimming directions.
    pub fn position_dim(self) -> usize {
        match self {
            FlowKind::Abc => 3,
            FlowKind::Tgv | FlowKind::Turb => 2,
        }
    }

    pub fn observation_dim(self) -> usize {
        match self {
            FlowKind::Tgv => 2,
            FlowKind::Abc | FlowKind::Turb => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Tgv => "tgv",
            FlowKind::Abc => "abc",
            FlowKind::Turb => "turb",
        }
    }
}

impl std::fmt::Display for FlowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FlowKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tgv" => Ok(FlowKind::Tgv),
            "abc" => Ok(FlowKind::Abc),
            "turb" => Ok(FlowKind::Turb),
            other => Err(Error::Config(format!("unknown flow kind {other:?}"))),
        }
    }
}

/// Which part of the turbulence record episodes start in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Test,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Mode::Train),
            "test" => Ok(Mode::Test),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: FlowKind,
    pub swim_speed: f64,
    pub dt: f64,
    pub episode_steps: usize,
    pub mode: Mode,
    pub dataset: Option<PathBuf>,
    /// Fraction of the turbulence record reserved for training starts.
    pub train_fraction: f64,
    pub tgv: TgvConfig,
    pub abc: AbcConfig,
}

impl EnvConfig {
    /// Reference parameters of each environment.
    pub fn for_kind(kind: FlowKind) -> Self {
        let (swim_speed, episode_steps) = match kind {
            FlowKind::Tgv => (0.25, 4000),
            FlowKind::Abc => (1.5, 2000),
            FlowKind::Turb => (2.0, 500),
        };
        Self {
            kind,
            swim_speed,
            dt: 0.01,
            episode_steps,
            mode: Mode::Train,
            dataset: None,
            train_fraction: 0.8,
            tgv: TgvConfig::default(),
            abc: AbcConfig::default(),
        }
    }

    /// Naive travel distance `v·T`, the normalisation of all reported scores.
    pub fn naive_distance(&self) -> f64 {
        self.swim_speed * self.dt * self.episode_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.swim_speed >= 0.0) || !(self.dt > 0.0) || self.episode_steps == 0 {
            return Err(Error::Config(
                "env: swim speed must be >= 0, dt > 0 and episode length > 0".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config("env: train_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The matrix consumed by the surfing policy, in the convention
/// `λ = exp(τ·G)·ẑ`, i.e. `G[i][j] = ∂_i u_j` (the transpose of the flow
/// gradient).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfMatrix {
    D2(Mat<2>),
    D3(Mat<3>),
}

/// What the agent senses at its current position.
#[derive(Clone, Debug, PartialEq)]
pub struct Percept {
    pub observation: Components,
    pub surf_matrix: SurfMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    /// Unwrapped position.
    pub position: Components,
    pub start_position: Components,
    pub step: usize,
    /// Start time of the episode (dataset time for the turbulent flow).
    pub t0: f64,
    /// Sum of rewards so far, accumulated step by step.
    pub cumulative_reward: f64,
    pub percept: Percept,
    velocity: Components,
}

impl EnvState {
    pub fn observation(&self) -> &Components {
        &self.percept.observation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Components,
    pub action: Components,
    pub reward: f64,
    pub next_observation: Components,
    pub done: bool,
}

/// Net displacement along `z` of a finished episode.
pub fn episode_return(state: &EnvState, cfg: &EnvConfig) -> Result<f64> {
    if state.step != cfg.episode_steps {
        return Err(Error::Input(format!(
            "episode incomplete: {} of {} steps",
            state.step, cfg.episode_steps
        )));
    }
    let z = state.position.len() - 1;
    Ok(state.position[z] - state.start_position[z])
}

#[derive(Clone, Debug)]
enum FlowModel {
    Tgv(TgvConfig),
    Abc(AbcConfig),
    Turb(Arc<TurbulenceField>),
}

/// Validated environment. Cheap to clone and safe to share across threads; all
/// mutable episode data lives in [`EnvState`].
#[derive(Clone, Debug)]
pub struct NavEnv {
    cfg: EnvConfig,
    flow: FlowModel,
    start_range: (usize, usize),
}

const ACTION_TOLERANCE: f64 = 1e-6;

impl NavEnv {
    /// Builds an environment; the turbulent flow needs `field`.
    pub fn new(cfg: EnvConfig, field: Option<Arc<TurbulenceField>>) -> Result<Self> {
        cfg.validate()?;
        let (flow, start_range) = match cfg.kind {
            FlowKind::Tgv => (FlowModel::Tgv(cfg.tgv), (0, 0)),
            FlowKind::Abc => (FlowModel::Abc(cfg.abc), (0, 0)),
            FlowKind::Turb => {
                let field = field.ok_or(Error::MissingDataset)?;
                let range = Self::start_range(&cfg, &field)?;
                (FlowModel::Turb(field), range)
            }
        };
        Ok(Self {
            cfg,
            flow,
            start_range,
        })
    }

    /// Inclusive range of start frames for the configured mode: training
    /// episodes start in `[0, S − L]` and test episodes in `[S, F − 1 − L]`,
    /// with `S` the first test frame, `F` the frame count and `L` the episode
    /// length in frames.
    fn start_range(cfg: &EnvConfig, field: &TurbulenceField) -> Result<(usize, usize)> {
        let frames = field.frame_count();
        let ratio = cfg.dt / field.snapshot_interval();
        let span = (ratio * cfg.episode_steps as f64).ceil() as usize;
        let split = (cfg.train_fraction * frames as f64).floor() as usize;
        let (lo, hi) = match cfg.mode {
            Mode::Train => (0, split.checked_sub(span)),
            Mode::Test => (split, frames.checked_sub(1 + span)),
        };
        match hi {
            Some(hi) if hi >= lo => Ok((lo, hi)),
            _ => Err(Error::Mode(format!(
                "{:?} mode needs {span} frames after the start, dataset has {frames} frames with split at {split}",
                cfg.mode
            ))),
        }
    }

    /// As [`NavEnv::new`], reading the turbulence dataset named in the config.
    pub fn from_config(cfg: EnvConfig) -> Result<Self> {
        let field = match cfg.kind {
            FlowKind::Turb => {
                let dir = cfg.dataset.as_ref().ok_or(Error::MissingDataset)?;
                let data = SnapshotDataset::read(dir)?;
                Some(Arc::new(TurbulenceField::new(data, CachePolicy::default())))
            }
            _ => None,
        };
        NavEnv::new(cfg, field)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn kind(&self) -> FlowKind {
        self.cfg.kind
    }

    pub fn position_dim(&self) -> usize {
        self.cfg.kind.position_dim()
    }

    pub fn observation_dim(&self) -> usize {
        self.cfg.kind.observation_dim()
    }

    pub fn turbulence(&self) -> Option<&Arc<TurbulenceField>> {
        match &self.flow {
            FlowModel::Turb(f) => Some(f),
            _ => None,
        }
    }

    /// Same flow, different mode (turbulence only changes the start range).
    pub fn with_mode(&self, mode: Mode) -> Result<Self> {
        let cfg = EnvConfig {
            mode,
            ..self.cfg.clone()
        };
        NavEnv::new(cfg, self.turbulence().cloned())
    }

    /// Inclusive range of turbulence start frames.
    pub fn start_frames(&self) -> Option<(usize, usize)> {
        self.turbulence().map(|_| self.start_range)
    }

    pub fn reset(&self, rng: &mut Rng) -> Result<EnvState> {
        let d = self.position_dim();
        let position: Components = (0..d).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        let t0 = match &self.flow {
            FlowModel::Turb(field) => {
                let (lo, hi) = self.start_range;
                rng.random_range(lo..=hi) as f64 * field.snapshot_interval()
            }
            _ => 0.0,
        };
        self.reset_to(position, t0)
    }

    /// Starts an episode at a given position and time.
    pub fn reset_to(&self, position: Components, t0: f64) -> Result<EnvState> {
        if position.len() != self.position_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.position_dim(),
                actual: position.len(),
            });
        }
        if let Some((index, &value)) = position.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::InvalidPosition { index, value });
        }
        let (velocity, percept) = self.sense(&position, t0)?;
        Ok(EnvState {
            start_position: position.clone(),
            position,
            step: 0,
            t0,
            cumulative_reward: 0.0,
            percept,
            velocity,
        })
    }

    pub fn time(&self, state: &EnvState) -> f64 {
        state.t0 + state.step as f64 * self.cfg.dt
    }

    /// Flow velocity and percept at an arbitrary point.
    pub fn sense(&self, position: &[f64], t: f64) -> Result<(Components, Percept)> {
        match &self.flow {
            FlowModel::Tgv(f) => {
                let s = f.sample(&wrapped::<2>(position), t)?;
                Ok((s.velocity.into_iter().collect(), percept_tgv(&s)))
            }
            FlowModel::Abc(f) => {
                let s = f.sample(&wrapped::<3>(position), t)?;
                Ok((s.velocity.into_iter().collect(), percept_abc(&s)))
            }
            FlowModel::Turb(f) => {
                let s = f.sample(&wrapped::<2>(position), t)?;
                Ok((s.velocity.into_iter().collect(), percept_turb(&s)))
            }
        }
    }

    pub fn percept_at(&self, position: &[f64], t: f64) -> Result<Percept> {
        Ok(self.sense(position, t)?.1)
    }

    fn check_action(&self, action: &[f64]) -> Result<Components> {
        if action.len() != self.position_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.position_dim(),
                actual: action.len(),
            });
        }
        let norm = action.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= ACTION_TOLERANCE) {
            return Err(Error::InvalidAction { norm });
        }
        Ok(action.iter().map(|a| a / norm).collect())
    }

    /// Advances one decision interval with heading `action`.
    pub fn step(&self, state: &mut EnvState, action: &[f64]) -> Result<Transition> {
        if state.step >= self.cfg.episode_steps {
            return Err(Error::EpisodeFinished { steps: state.step });
        }
        let heading = self.check_action(action)?;
        let t = self.time(state);
        let next = match &self.flow {
            FlowModel::Tgv(f) => rk4::<2, _>(f, &state.position, &state.velocity, &heading, self.cfg.swim_speed, t, self.cfg.dt)?,
            FlowModel::Abc(f) => rk4::<3, _>(f, &state.position, &state.velocity, &heading, self.cfg.swim_speed, t, self.cfg.dt)?,
            FlowModel::Turb(f) => rk4::<2, _>(f.as_ref(), &state.position, &state.velocity, &heading, self.cfg.swim_speed, t, self.cfg.dt)?,
        };
        let z = next.len() - 1;
        let reward = next[z] - state.position[z];
        let observation = state.percept.observation.clone();
        state.position = next;
        state.step += 1;
        state.cumulative_reward += reward;
        let (velocity, percept) = self.sense(&state.position, self.time(state))?;
        state.velocity = velocity;
        state.percept = percept;
        Ok(Transition {
            observation,
            action: heading,
            reward,
            next_observation: state.percept.observation.clone(),
            done: state.step == self.cfg.episode_steps,
        })
    }

    /// Steps independent environments; element `i` equals `step(&mut states[i], &actions[i])`.
    pub fn batch_step(
        &self,
        states: &mut [EnvState],
        actions: &[Components],
        exec: Execution,
    ) -> Result<Vec<Transition>> {
        if states.len() != actions.len() {
            return Err(Error::BatchShape {
                states: states.len(),
                actions: actions.len(),
            });
        }
        let mut slots: Vec<(&mut EnvState, Option<Result<Transition>>)> =
            states.iter_mut().map(|s| (s, None)).collect();
        par::for_each_mut(exec, &mut slots, |i, (state, out)| {
            *out = Some(self.step(state, &actions[i]));
        });
        slots.into_iter().map(|(_, r)| r.expect("every slot stepped")).collect()
    }
}

#[inline]
fn wrapped<const D: usize>(p: &[f64]) -> [f64; D] {
    let mut out = [0.0; D];
    for (o, x) in out.iter_mut().zip(p) {
        *o = wrap_coordinate(*x);
    }
    out
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn rk4<const D: usize, F: VelocityField<D> + ?Sized>(
    flow: &F,
    x: &[f64],
    u0: &[f64],
    heading: &[f64],
    speed: f64,
    t: f64,
    dt: f64,
) -> Result<Components> {
    let mut x0 = [0.0; D];
    let mut k1 = [0.0; D];
    for i in 0..D {
        x0[i] = x[i];
        k1[i] = u0[i] + speed * heading[i];
    }
    let stage = |k: &[f64; D], h: f64, tt: f64| -> Result<[f64; D]> {
        let mut p = [0.0; D];
        for i in 0..D {
            p[i] = wrap_coordinate(x0[i] + h * k[i]);
        }
        let u = flow.velocity(&p, tt)?;
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = u[i] + speed * heading[i];
        }
        Ok(out)
    };
    let k2 = stage(&k1, 0.5 * dt, t + 0.5 * dt)?;
    let k3 = stage(&k2, 0.5 * dt, t + 0.5 * dt)?;
    let k4 = stage(&k3, dt, t + dt)?;
    Ok((0..D)
        .map(|i| x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn percept_tgv(s: &FlowSample<2>) -> Percept {
    let g = &s.gradient;
    Percept {
        observation: [g[0][0], g[1][0]].into_iter().collect(),
        surf_matrix: SurfMatrix::D2(transpose(g)),
    }
}

fn percept_abc(s: &FlowSample<3>) -> Percept {
    let j = &s.gradient;
    let jt = transpose(j);
    // antisymmetric part of the transposed gradient
    let mut a = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            a[r][c] = 0.5 * (jt[r][c] - j[r][c]);
        }
    }
    Percept {
        observation: s.vorticity().into_iter().collect(),
        surf_matrix: SurfMatrix::D3(a),
    }
}

fn percept_turb(s: &FlowSample<2>) -> Percept {
    let g = &s.gradient;
    // only three components are independent; the fourth is −∂_x u_x
    let full = [[g[0][0], g[0][1]], [g[1][0], -g[0][0]]];
    Percept {
        observation: [g[0][0], g[1][0], g[0][1]].into_iter().collect(),
        surf_matrix: SurfMatrix::D2(transpose(&full)),
    }
}
