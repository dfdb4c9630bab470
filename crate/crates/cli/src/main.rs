//! `flownav`: simulate turbulence, train and evaluate navigation policies.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flownav::agent::ActorCritic;
use flownav::baselines::{self, NaivePolicy, SurfingPolicy};
use flownav::config::RunConfig;
use flownav::env::{FlowKind, Mode, NavEnv};
use flownav::eval::{self, EvalOptions, PerformanceReport, RunRecord, Slice};
use flownav::nn::Checkpoint;
use flownav::par::Execution;
use flownav::policy::Policy;
use flownav::qlearning::QlPolicy;
use flownav::turbulence::run_simulation;
use flownav::{a2c, ppo, qlearning};

#[derive(Parser)]
#[command(name = "flownav", version, about = "Microswimmer navigation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a turbulence snapshot dataset.
    SimulateTurbulence(SimulateArgs),
    /// Train a learner and write its run directory.
    Train(TrainArgs),
    /// Score a policy with deterministic actions.
    Evaluate(EvaluateArgs),
    /// Scan the surfing correlation time over a grid.
    TuneTau(TuneArgs),
    /// Moving average of a per-episode return CSV.
    LearningCurve(CurveArgs),
    /// Tabulate a policy's headings on a grid of positions.
    ExportPolicyField(FieldArgs),
    /// Assemble a performance table for one flow.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Flow environment.
    #[arg(long, value_parser = parse_kind)]
    env: Option<FlowKind>,
    /// Run configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Turbulence dataset directory (overrides env.dataset).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Run episodes on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p, self.env).with_context(|| format!("reading {}", p.display()))?,
            None => RunConfig::for_kind(self.env.unwrap_or(FlowKind::Tgv)),
        };
        if let Some(d) = &self.dataset {
            cfg.env.dataset = Some(d.clone());
        }
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn parse_kind(s: &str) -> std::result::Result<FlowKind, String> {
    s.parse().map_err(|e: flownav::Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: flownav::Error| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Grid size (overrides solver.n).
    #[arg(long)]
    n: Option<usize>,
    /// Recorded duration (overrides simulation.duration).
    #[arg(long)]
    duration: Option<f64>,
    /// Spin-up time before recording (overrides simulation.warmup).
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Ql,
    A2c,
    Ppo,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long, default_value_t = 100_000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Naive,
    Surfing,
    DiscreteSurfing,
    Ql,
    A2c,
    Ppo,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, value_enum)]
    policy: PolicyKind,
    /// Checkpoint or q-table of a trained policy; a run directory selects its best checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Surfing correlation time (defaults to surfing.tau_star).
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Append the row to this CSV instead of printing only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    /// `lo:hi:step`; defaults to the flow's standard grid.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 2000)]
    episodes: usize,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    /// CSV with an `episode,return` header.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FieldArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Axis held fixed in 3D flows (0 = x, 1 = y, 2 = z).
    #[arg(long, default_value_t = 2)]
    slice_axis: usize,
    #[arg(long, default_value_t = 0.0)]
    slice_value: f64,
    /// Flow time (dataset time for the turbulent flow).
    #[arg(long, default_value_t = 0.0)]
    time: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Trained runs as `algo=run_dir` (algo: ql, a2c, ppo); repeatable.
    #[arg(long = "run")]
    runs: Vec<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::SimulateTurbulence(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::TuneTau(a) => tune(a),
        Command::LearningCurve(a) => curve(a),
        Command::ExportPolicyField(a) => field(a),
        Command::Report(a) => report(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = a.common.run_config()?;
    if let Some(n) = a.n {
        cfg.solver.n = n;
    }
    if let Some(s) = a.seed {
        cfg.solver.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.simulation.duration = d;
    }
    if let Some(w) = a.warmup {
        cfg.simulation.warmup = w;
    }
    if cfg.simulation.checkpoint_dir.is_none() {
        cfg.simulation.checkpoint_dir = Some(a.out.clone());
    }
    cfg.solver.validate()?;
    let data = run_simulation(&cfg.solver, &cfg.simulation)?;
    data.write(&a.out)?;
    let s = data.meta.stats;
    println!(
        "{} frames at N={} written to {}: u_rms {:.4}, omega_rms {:.4}, 1/omega_rms {:.4}",
        data.len(),
        data.n(),
        a.out.display(),
        s.u_rms,
        s.omega_rms,
        1.0 / s.omega_rms
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.common.run_config()?;
    let env = NavEnv::from_config(cfg.env.clone())?;
    let exec = a.common.exec();
    let out = &a.out;
    std::fs::create_dir_all(out)?;
    eval::write_text(&out.join("config.toml"), &cfg.to_toml_string())?;
    let mut record = match a.algo {
        Algo::Ql => {
            let run = qlearning::ql_train(&env, &cfg.ql, a.episodes, a.seed, exec)?;
            let last = QlPolicy::new(run.discretizer.clone(), run.table.clone(), env.position_dim())?;
            eval::write_text(&out.join("qtable.json"), &last.to_json())?;
            eval::write_text(&out.join("best_qtable.json"), &run.best.to_json())?;
            run.record
        }
        Algo::A2c => {
            let run = a2c::a2c_train(&env, &cfg.a2c, a.episodes, a.seed, exec)?;
            run.agent.to_checkpoint().write(&out.join("final.ckpt"))?;
            run.best.to_checkpoint().write(&out.join("best.ckpt"))?;
            run.record
        }
        Algo::Ppo => {
            let run = ppo::ppo_train(&env, &cfg.ppo, a.episodes, a.seed, exec)?;
            run.agent.to_checkpoint().write(&out.join("final.ckpt"))?;
            run.best.to_checkpoint().write(&out.join("best.ckpt"))?;
            eval::write_text(&out.join("update_stats.csv"), &ppo::stats_csv(&run.stats))?;
            run.record
        }
    };
    let best_file = match a.algo {
        Algo::Ql => "best_qtable.json",
        _ => "best.ckpt",
    };
    if let Ok(best) = eval::select_best(&record) {
        let episode = best.episode;
        for e in &mut record.evaluations {
            if e.episode == episode {
                e.checkpoint = Some(out.join(best_file));
                break;
            }
        }
    }
    record.write_returns_csv(&out.join("returns.csv"))?;
    record.write_evaluations_csv(&out.join("evaluations.csv"))?;
    record.write_json(&out.join("record.json"))?;
    let best = eval::select_best(&record)?;
    println!(
        "{} episodes; best periodic evaluation {:.4} at episode {}",
        record.returns.len(),
        best.score,
        best.episode
    );
    Ok(())
}

/// Resolves a run directory to the file holding its best policy.
fn checkpoint_file(path: &Path, kind: PolicyKind) -> PathBuf {
    if path.is_dir() {
        match kind {
            PolicyKind::Ql => path.join("best_qtable.json"),
            _ => path.join("best.ckpt"),
        }
    } else {
        path.to_path_buf()
    }
}

fn load_policy(p: &PolicyArgs, cfg: &RunConfig, env: &NavEnv) -> Result<Box<dyn Policy + Send>> {
    let tau = p.tau.unwrap_or(cfg.surfing.tau_star);
    let need = || {
        p.checkpoint
            .as_deref()
            .map(|c| checkpoint_file(c, p.policy))
            .context("this policy needs --checkpoint")
    };
    Ok(match p.policy {
        PolicyKind::Naive => Box::new(NaivePolicy),
        PolicyKind::Surfing => Box::new(SurfingPolicy::continuous(tau)),
        PolicyKind::DiscreteSurfing => Box::new(SurfingPolicy::discrete(tau, env.position_dim())?),
        PolicyKind::Ql => {
            let path = need()?;
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let q = QlPolicy::from_json(&text)?;
            if q.dim != env.position_dim() || q.discretizer.edges.len() != env.observation_dim() {
                bail!("q-table {} was trained on a different flow", path.display());
            }
            Box::new(q)
        }
        PolicyKind::A2c | PolicyKind::Ppo => {
            let path = need()?;
            let ac = ActorCritic::from_checkpoint(Checkpoint::read(&path)?)?;
            if ac.obs_dim() != env.observation_dim() || ac.head.dim != env.position_dim() {
                bail!("checkpoint {} was trained on a different flow", path.display());
            }
            Box::new(ac)
        }
    })
}

fn policy_label(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Naive => "naive",
        PolicyKind::Surfing => "surfing",
        PolicyKind::DiscreteSurfing => "discrete_surfing",
        PolicyKind::Ql => "ql",
        PolicyKind::A2c => "a2c",
        PolicyKind::Ppo => "ppo",
    }
}

fn eval_options(cfg: &RunConfig, episodes: Option<usize>, seed: Option<u64>, mode: Option<Mode>, exec: Execution) -> EvalOptions {
    let mut o = EvalOptions::new(episodes.unwrap_or(cfg.eval.episodes), seed.unwrap_or(cfg.eval.seed)).with_exec(exec);
    o.mode = mode;
    o
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = a.common.run_config()?;
    let env = NavEnv::from_config(cfg.env.clone())?;
    let policy = load_policy(&a.policy, &cfg, &env)?;
    let opts = eval_options(&cfg, a.episodes, a.seed, a.mode, a.common.exec());
    let row = eval::evaluate_policy(&env, &policy, &opts)?;
    let mut report = PerformanceReport::default();
    report.push(policy_label(a.policy.policy), row);
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(out) = a.out {
        eval::write_text(&out, &csv)?;
    }
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let cfg = a.common.run_config()?;
    let env = NavEnv::from_config(cfg.env.clone())?;
    let grid = match &a.grid {
        Some(g) => baselines::parse_grid(g)?,
        None => baselines::default_tau_grid(env.kind()),
    };
    let mut opts = EvalOptions::new(a.episodes, a.seed).with_exec(a.common.exec());
    opts.mode = a.mode;
    let curve = baselines::tune_tau(&env, &grid, &opts)?;
    let mut csv = String::from("tau,mean,ci95\n");
    for p in &curve.points {
        csv.push_str(&format!("{},{:.6},{:.6}\n", p.tau, p.mean, p.ci95));
    }
    eval::write_text(&a.out, &csv)?;
    println!("tau* = {}", curve.tau_star);
    Ok(())
}

fn read_returns(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let col = header
        .split(',')
        .position(|h| h.trim() == "return")
        .context("CSV needs a `return` column")?;
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .nth(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .with_context(|| format!("line {} of {}", i + 2, path.display()))
        })
        .collect()
}

fn curve(a: CurveArgs) -> Result<()> {
    let returns = read_returns(&a.input)?;
    let smooth = eval::learning_curve(&returns, a.window)?;
    let mut csv = String::from("episode,return,smoothed\n");
    for (i, (r, s)) in returns.iter().zip(&smooth).enumerate() {
        csv.push_str(&format!("{},{},{}\n", i + 1, r, s));
    }
    eval::write_text(&a.out, &csv)?;
    Ok(())
}

fn field(a: FieldArgs) -> Result<()> {
    let cfg = a.common.run_config()?;
    let env = NavEnv::from_config(cfg.env.clone())?;
    let policy = load_policy(&a.policy, &cfg, &env)?;
    let slice = Slice {
        fixed_axis: a.slice_axis,
        value: a.slice_value,
    };
    let rows = eval::policy_field_export(&policy, &env, a.resolution, slice, a.time)?;
    eval::write_text(&a.out, &eval::field_csv(&rows))?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let cfg = a.common.run_config()?;
    let env = NavEnv::from_config(cfg.env.clone())?;
    let exec = a.common.exec();
    let opts = eval_options(&cfg, a.episodes, a.seed, a.mode, exec);
    let mut report = PerformanceReport::default();
    for spec in &a.runs {
        let (algo, dir) = spec.split_once('=').context("--run expects algo=dir")?;
        let kind = match algo {
            "ql" => PolicyKind::Ql,
            "a2c" => PolicyKind::A2c,
            "ppo" => PolicyKind::Ppo,
            other => bail!("unknown algorithm {other:?}"),
        };
        let dir = PathBuf::from(dir);
        let record = RunRecord::read_json(&dir.join("record.json"))?;
        if record.env != env.kind() {
            bail!("run {} trained on {}, report is for {}", dir.display(), record.env, env.kind());
        }
        let p = PolicyArgs {
            policy: kind,
            checkpoint: Some(dir),
            tau: None,
        };
        let policy = load_policy(&p, &cfg, &env)?;
        report.push(algo, eval::evaluate_policy(&env, &policy, &opts)?);
    }
    let tau = cfg.surfing.tau_star;
    report.push("surfing", eval::evaluate_policy(&env, &SurfingPolicy::continuous(tau), &opts)?);
    report.push(
        "discrete_surfing",
        eval::evaluate_policy(&env, &SurfingPolicy::discrete(tau, env.position_dim())?, &opts)?,
    );
    report.push("naive", eval::evaluate_policy(&env, &NaivePolicy, &opts)?);
    let csv = report.to_csv();
    eval::write_text(&a.out, &csv)?;
    print!("{csv}");
    Ok(())
}
