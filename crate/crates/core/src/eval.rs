//! Scoring of deterministic policies, learning-curve smoothing, checkpoint
//! selection and CSV exports.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{episode_return, Components, FlowKind, Mode, NavEnv};
use crate::par::{self, Execution};
use crate::policy::Policy;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Fewest episodes accepted by [`evaluate_policy`].
pub const MIN_EVAL_EPISODES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Overrides the environment's mode when set.
    pub mode: Option<Mode>,
    pub exec: Execution,
}

impl EvalOptions {
    pub fn new(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            seed,
            mode: None,
            exec: Execution::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = Some(mode);
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }
}

/// One policy's score: mean of `Z/(vT)` with a 95% half-width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub policy: String,
    pub env: FlowKind,
    pub mode: Mode,
    pub mean: f64,
    pub ci95: f64,
    pub episodes: usize,
}

/// Sample mean and `1.96·s/√n`.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Runs one episode from an already seeded generator and returns `Z`.
pub fn run_episode<P: Policy + ?Sized>(env: &NavEnv, policy: &P, rng: &mut Rng) -> Result<f64> {
    let mut state = env.reset(rng)?;
    loop {
        let action = policy.act(&state.percept)?;
        if env.step(&mut state, &action)?.done {
            break;
        }
    }
    episode_return(&state, env.config())
}

/// Normalised returns `Z/(vT)` of `episodes` independent episodes. Episode `i`
/// draws its start from stream `i` of `seed`, so two policies scored with the
/// same seed see the same starts.
pub fn episode_scores<P: Policy + ?Sized>(
    env: &NavEnv,
    policy: &P,
    episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let scale = env.config().naive_distance();
    if !(scale > 0.0) {
        return Err(Error::Config("swim speed must be positive to normalise scores".into()));
    }
    par::map_indexed(exec, episodes, |i| {
        let mut rng = rng::stream(seed, i as u64);
        run_episode(env, policy, &mut rng).map(|z| z / scale)
    })
    .into_iter()
    .collect()
}

/// Scores a deterministic policy over at least [`MIN_EVAL_EPISODES`] episodes.
pub fn evaluate_policy<P: Policy + ?Sized>(
    env: &NavEnv,
    policy: &P,
    opts: &EvalOptions,
) -> Result<PerformanceRow> {
    if opts.episodes < MIN_EVAL_EPISODES {
        return Err(Error::Input(format!(
            "evaluation needs at least {MIN_EVAL_EPISODES} episodes, got {}",
            opts.episodes
        )));
    }
    let switched;
    let env = match opts.mode {
        Some(m) if m != env.config().mode => {
            switched = env.with_mode(m)?;
            &switched
        }
        _ => env,
    };
    let scores = episode_scores(env, policy, opts.episodes, opts.seed, opts.exec)?;
    let (mean, ci95) = mean_ci95(&scores);
    Ok(PerformanceRow {
        policy: String::new(),
        env: env.kind(),
        mode: env.config().mode,
        mean,
        ci95,
        episodes: opts.episodes,
    })
}

/// Trailing moving average; the first `window − 1` points average the
/// available prefix.
pub fn learning_curve(returns: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Input("window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(returns.len());
    let mut sum = 0.0;
    for (i, r) in returns.iter().enumerate() {
        sum += r;
        if i >= window {
            sum -= returns[i - window];
        }
        // the running sum drifts; resync periodically
        if i % 4096 == 4095 {
            let lo = (i + 1).saturating_sub(window);
            sum = returns[lo..=i].iter().sum();
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// A periodic evaluation taken during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Training episodes completed when the evaluation ran.
    pub episode: usize,
    pub score: f64,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub env: FlowKind,
    pub seed: u64,
    /// Normalised return of every training episode, in completion order.
    pub returns: Vec<f64>,
    pub evaluations: Vec<EvalPoint>,
}

impl RunRecord {
    pub fn new(algo: &str, env: FlowKind, seed: u64) -> Self {
        Self {
            algo: algo.to_string(),
            env,
            seed,
            returns: Vec::new(),
            evaluations: Vec::new(),
        }
    }

    pub fn best_score(&self) -> Option<f64> {
        select_best(self).ok().map(|p| p.score)
    }

    pub fn write_returns_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("episode,return\n");
        for (i, r) in self.returns.iter().enumerate() {
            writeln!(s, "{},{}", i + 1, r).unwrap();
        }
        write_text(path, &s)
    }

    pub fn write_evaluations_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("episode,score,checkpoint\n");
        for e in &self.evaluations {
            let ck = e.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            writeln!(s, "{},{},{}", e.episode, e.score, ck).unwrap();
        }
        write_text(path, &s)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Input(e.to_string()))?;
        write_text(path, &text)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Evaluation with the highest score; the earliest wins ties, so a later
/// collapse never displaces it.
pub fn select_best(record: &RunRecord) -> Result<&EvalPoint> {
    let mut best: Option<&EvalPoint> = None;
    for e in &record.evaluations {
        if best.is_none_or(|b| e.score > b.score) {
            best = Some(e);
        }
    }
    best.ok_or(Error::EmptyRun)
}

/// Plane sampled by [`policy_field_export`]. For 3D flows one axis is held
/// at `value`; 2D flows ignore it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slice {
    pub fixed_axis: usize,
    pub value: f64,
}

impl Default for Slice {
    fn default() -> Self {
        Self {
            fixed_axis: 2,
            value: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldRow {
    pub position: Components,
    pub action: Components,
}

/// Deterministic actions on a cell-centred `resolution × resolution` grid at
/// time `t` (dataset time for the turbulent flow).
pub fn policy_field_export<P: Policy + ?Sized>(
    policy: &P,
    env: &NavEnv,
    resolution: usize,
    slice: Slice,
    t: f64,
) -> Result<Vec<FieldRow>> {
    if resolution == 0 {
        return Err(Error::Input("resolution must be positive".into()));
    }
    let d = env.position_dim();
    if d == 3 && slice.fixed_axis > 2 {
        return Err(Error::Input(format!("no axis {}", slice.fixed_axis)));
    }
    let h = std::f64::consts::TAU / resolution as f64;
    let free: Vec<usize> = (0..d).filter(|&a| d == 2 || a != slice.fixed_axis).collect();
    let mut rows = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            let mut p: Components = (0..d).map(|_| slice.value).collect();
            p[free[0]] = (i as f64 + 0.5) * h;
            p[free[1]] = (j as f64 + 0.5) * h;
            let percept = env.percept_at(&p, t)?;
            rows.push(FieldRow {
                action: policy.act(&percept)?,
                position: p,
            });
        }
    }
    Ok(rows)
}

pub fn field_csv(rows: &[FieldRow]) -> String {
    let d = rows.first().map_or(2, |r| r.position.len());
    let names: &[&str] = if d == 3 { &["x", "y", "z"] } else { &["x", "z"] };
    let mut s = String::new();
    let header: Vec<String> = names
        .iter()
        .map(|n| n.to_string())
        .chain(names.iter().map(|n| format!("p{n}")))
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.position.iter().chain(r.action.iter()).map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Rows of a performance table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub rows: Vec<PerformanceRow>,
}

impl PerformanceReport {
    pub fn push(&mut self, policy: &str, mut row: PerformanceRow) {
        row.policy = policy.to_string();
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy,env,mode,mean,ci95,episodes\n");
        for r in &self.rows {
            let mode = match r.mode {
                Mode::Train => "train",
                Mode::Test => "test",
            };
            writeln!(s, "{},{},{},{:.6},{:.6},{}", r.policy, r.env, mode, r.mean, r.ci95, r.episodes).unwrap();
        }
        s
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
