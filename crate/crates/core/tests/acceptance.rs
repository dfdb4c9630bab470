//! Acceptance suite. Prints one line per criterion:
//!
//! ```text
//! cargo test -p flownav --test acceptance                 # everything that fits in CI
//! cargo test -p flownav --test acceptance -- --extended   # adds the PPO learning runs
//! ```
//!
//! The process exits non-zero if a criterion fails, except for the entries in
//! `DOCUMENTED_DEVIATIONS`, which still print `FAIL`.

mod common;

use std::f64::consts::TAU;
use std::time::Instant;

use flownav::baselines::{
    adjoint_constant, adjoint_solution, default_tau_grid, matrix_exponential, tune_tau, NaivePolicy, SurfingPolicy,
};
use flownav::env::{EnvConfig, FlowKind, Mode, NavEnv};
use flownav::eval::{evaluate_policy, EvalOptions, PerformanceRow};
use flownav::flow::{abc_sample, tgv_sample, AbcConfig, TgvConfig};
use flownav::linalg::{identity, mat_mul, max_abs_diff, scale, trace, Mat};
use flownav::nn::{Adam, ForwardCache, Mlp, Vmf, VmfHead};
use flownav::par::Execution;
use flownav::policy::Policy;
use flownav::ppo::{compute_gae, ppo_train, PpoConfig, RolloutBuffer};
use flownav::qlearning::{ql_train, QlConfig, QTable};
use flownav::rng::stream;
use flownav::turbulence::SnapshotDataset;
use rand::Rng as _;

// C1, C2: episodes and tolerances
const BASELINE_EPISODES: usize = 10_000;
const TGV_SURFING: (f64, f64) = (1.48, 0.05);
const TGV_DISCRETE: (f64, f64) = (1.47, 0.05);
const TGV_NAIVE: (f64, f64) = (1.00, 0.02);
const ABC_SURFING: (f64, f64) = (2.08, 0.10);
const ABC_DISCRETE: (f64, f64) = (2.01, 0.10);
// C3
const TUNE_EPISODES: usize = 2000;
const TAU_TOLERANCE: f64 = 0.15;
// C4
const U_RMS: (f64, f64) = (3.78, 0.10);
const INV_OMEGA_RMS: (f64, f64) = (0.11, 0.15);
const TURB_GAIN: f64 = 1.25;
const TURB_TEST_EPISODES: usize = 10_000;
// C5
const LEARNING_EPISODES: usize = 100_000;
const LEARNING_SEEDS: [u64; 3] = [0, 1, 2];
const BEST_EVAL_EPISODES: usize = 2000;
const PPO_MIN: f64 = 1.45;
const QL_MIN: f64 = 1.10;
// a different stream family from the periodic evaluations that picked the checkpoint
const FINAL_EVAL_SEED: u64 = 7_777;

const DOCUMENTED_DEVIATIONS: &[&str] = &["C1b"];

enum Outcome {
    Pass,
    Fail,
    NotRun,
}

struct Line {
    id: &'static str,
    outcome: Outcome,
    text: String,
}

struct Suite {
    lines: Vec<Line>,
}

impl Suite {
    fn record(&mut self, id: &'static str, pass: bool, text: String) {
        let outcome = if pass { Outcome::Pass } else { Outcome::Fail };
        self.emit(Line { id, outcome, text });
    }

    fn not_run(&mut self, id: &'static str, text: String) {
        self.emit(Line {
            id,
            outcome: Outcome::NotRun,
            text,
        });
    }

    fn emit(&mut self, line: Line) {
        let tag = match line.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail if DOCUMENTED_DEVIATIONS.contains(&line.id) => "FAIL (documented deviation)",
            Outcome::Fail => "FAIL",
            Outcome::NotRun => "NOT RUN",
        };
        println!("{:<4} {tag}: {}", line.id, line.text);
        self.lines.push(line);
    }
}

fn within(row: &PerformanceRow, (target, tol): (f64, f64)) -> bool {
    (row.mean - target).abs() <= tol
}

fn fmt(row: &PerformanceRow) -> String {
    format!("{:.3} ± {:.3} (n = {})", row.mean, row.ci95, row.episodes)
}

fn env(kind: FlowKind) -> NavEnv {
    NavEnv::new(EnvConfig::for_kind(kind), None).expect("analytic environment")
}

fn eval(env: &NavEnv, policy: &dyn Policy, episodes: usize, mode: Option<Mode>) -> PerformanceRow {
    let mut opts = EvalOptions::new(episodes, 1);
    opts.mode = mode;
    evaluate_policy(env, &policy, &opts).expect("evaluation")
}

fn c1(suite: &mut Suite) {
    let env = env(FlowKind::Tgv);
    let s = eval(&env, &SurfingPolicy::continuous(2.0), BASELINE_EPISODES, None);
    suite.record("C1a", within(&s, TGV_SURFING), format!("TGV surfing τ=2.0: {} target {:?}", fmt(&s), TGV_SURFING));
    let d = eval(&env, &SurfingPolicy::discrete(2.0, 2).unwrap(), BASELINE_EPISODES, None);
    suite.record(
        "C1b",
        within(&d, TGV_DISCRETE),
        format!("TGV discrete surfing τ=2.0: {} target {:?}", fmt(&d), TGV_DISCRETE),
    );
    let n = eval(&env, &NaivePolicy, BASELINE_EPISODES, None);
    suite.record("C1c", within(&n, TGV_NAIVE), format!("TGV naive: {} target {:?}", fmt(&n), TGV_NAIVE));
}

fn c2(suite: &mut Suite) {
    let env = env(FlowKind::Abc);
    let s = eval(&env, &SurfingPolicy::continuous(0.72), BASELINE_EPISODES, None);
    suite.record("C2a", within(&s, ABC_SURFING), format!("ABC surfing τ=0.72: {} target {:?}", fmt(&s), ABC_SURFING));
    let d = eval(&env, &SurfingPolicy::discrete(0.72, 3).unwrap(), BASELINE_EPISODES, None);
    suite.record(
        "C2b",
        within(&d, ABC_DISCRETE),
        format!("ABC discrete surfing τ=0.72: {} target {:?}", fmt(&d), ABC_DISCRETE),
    );
}

fn c3(suite: &mut Suite) {
    for (id, kind, reference) in [("C3a", FlowKind::Tgv, 2.0), ("C3b", FlowKind::Abc, 0.72)] {
        let env = env(kind);
        let grid = default_tau_grid(kind);
        let curve = tune_tau(&env, &grid, &EvalOptions::new(TUNE_EPISODES, 2)).unwrap();
        let best = curve.points.iter().find(|p| p.tau == curve.tau_star).unwrap();
        let ok = (curve.tau_star / reference - 1.0).abs() <= TAU_TOLERANCE;
        suite.record(
            id,
            ok,
            format!(
                "{kind} τ* = {:.2} (score {:.3}) over {} grid points, reference {reference} ± {:.0}%",
                curve.tau_star,
                best.mean,
                grid.len(),
                TAU_TOLERANCE * 100.0
            ),
        );
    }
}

fn c4(suite: &mut Suite) {
    let field = common::field();
    let stats = field.dataset().meta.stats;
    let inv = 1.0 / stats.omega_rms;
    let ok_u = (stats.u_rms / U_RMS.0 - 1.0).abs() <= U_RMS.1;
    let ok_w = (inv / INV_OMEGA_RMS.0 - 1.0).abs() <= INV_OMEGA_RMS.1;
    suite.record(
        "C4a",
        ok_u && ok_w,
        format!(
            "TURB N={} record: u_rms {:.3} (target {} ± {:.0}%), 1/ω_rms {:.4} (target {} ± {:.0}%)",
            field.dataset().n(),
            stats.u_rms,
            U_RMS.0,
            U_RMS.1 * 100.0,
            inv,
            INV_OMEGA_RMS.0,
            INV_OMEGA_RMS.1 * 100.0
        ),
    );
    let train = common::turb_env(Mode::Train);
    let curve = tune_tau(&train, &default_tau_grid(FlowKind::Turb), &EvalOptions::new(TUNE_EPISODES, 3)).unwrap();
    let test = common::turb_env(Mode::Test);
    let s = eval(&test, &SurfingPolicy::continuous(curve.tau_star), TURB_TEST_EPISODES, None);
    let n = eval(&test, &NaivePolicy, TURB_TEST_EPISODES, None);
    let d = eval(&test, &SurfingPolicy::discrete(curve.tau_star, 2).unwrap(), TURB_TEST_EPISODES, None);
    let gain = s.mean / n.mean;
    suite.record(
        "C4b",
        gain >= TURB_GAIN,
        format!(
            "TURB test split, τ* = {:.2} tuned on train: surfing {} vs naive {} → gain {:.1}% (need ≥ {:.0}%); discrete surfing {}",
            curve.tau_star,
            fmt(&s),
            fmt(&n),
            (gain - 1.0) * 100.0,
            (TURB_GAIN - 1.0) * 100.0,
            fmt(&d)
        ),
    );
}

fn spread(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn c5(suite: &mut Suite, extended: bool) {
    let env = env(FlowKind::Tgv);
    let opts = EvalOptions::new(BEST_EVAL_EPISODES, FINAL_EVAL_SEED);
    let mut ql = Vec::new();
    for seed in LEARNING_SEEDS {
        let t = Instant::now();
        let run = ql_train(&env, &QlConfig::for_kind(FlowKind::Tgv), LEARNING_EPISODES, seed, Execution::Parallel).unwrap();
        let row = evaluate_policy(&env, &run.best, &opts).unwrap();
        println!(
            "     QL seed {seed}: best periodic {:.3}, re-evaluated {} ({:.0} s)",
            run.record.best_score().unwrap(),
            fmt(&row),
            t.elapsed().as_secs_f64()
        );
        ql.push(row.mean);
    }
    let best = ql.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    suite.record(
        "C5b",
        best >= QL_MIN,
        format!("TGV Q-learning best of {} seeds × {LEARNING_EPISODES} episodes: {best:.3} (need ≥ {QL_MIN})", ql.len()),
    );
    if !extended {
        suite.not_run(
            "C5a",
            format!("PPO ≥ {PPO_MIN} per seed needs 3 × {LEARNING_EPISODES} episodes (hours on one core); pass --extended"),
        );
        suite.not_run("C5c", format!("PPO vs Q-learning spread needs the PPO runs; Q-learning spread {:.3}", spread(&ql)));
        return;
    }
    let mut ppo = Vec::new();
    for seed in LEARNING_SEEDS {
        let t = Instant::now();
        let run = ppo_train(&env, &PpoConfig::for_kind(FlowKind::Tgv), LEARNING_EPISODES, seed, Execution::Parallel).unwrap();
        let row = evaluate_policy(&env, &run.best, &opts).unwrap();
        println!(
            "     PPO seed {seed}: best periodic {:.3}, re-evaluated {} ({:.0} s)",
            run.record.best_score().unwrap(),
            fmt(&row),
            t.elapsed().as_secs_f64()
        );
        ppo.push(row.mean);
    }
    let worst = ppo.iter().copied().fold(f64::INFINITY, f64::min);
    suite.record("C5a", worst >= PPO_MIN, format!("TGV PPO best checkpoints {ppo:.3?}: minimum {worst:.3} (need ≥ {PPO_MIN})"));
    suite.record(
        "C5c",
        spread(&ppo) < spread(&ql),
        format!("seed spread PPO {:.3} vs Q-learning {:.3}", spread(&ppo), spread(&ql)),
    );
}

/// Property checks, each with its tolerance; returns the failures.
fn c6_checks() -> Vec<(&'static str, bool)> {
    let mut out = Vec::new();
    let mut rng = stream(60, 0);

    let mut ok = true;
    for _ in 0..10_000 {
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
        let t = tgv_sample(&p[..2], &TgvConfig::default()).unwrap();
        let a = abc_sample(&p, &AbcConfig::default()).unwrap();
        let w = a.vorticity();
        ok &= trace(&t.gradient).abs() < 1e-10 && trace(&a.gradient).abs() < 1e-10;
        ok &= (0..3).all(|i| (w[i] - a.velocity[i]).abs() < 1e-10);
    }
    out.push(("divergence-free and Beltrami (1e-10)", ok));

    let random_mat = |rng: &mut flownav::rng::Rng, b: f64| -> Mat<3> {
        let mut m = [[0.0; 3]; 3];
        m.iter_mut().flatten().for_each(|x| *x = rng.random_range(-b..b));
        m
    };
    let ok = (0..1000).all(|_| {
        let m = random_mat(&mut rng, 5.0 / 3.0);
        let p = mat_mul(&matrix_exponential(&m).unwrap(), &matrix_exponential(&scale(&m, -1.0)).unwrap());
        max_abs_diff(&p, &identity()) < 1e-10
    });
    out.push(("expm(M)·expm(−M) = I for ‖M‖ ≤ 5 (1e-10)", ok));

    let ok = (0..100).all(|_| {
        let m = random_mat(&mut rng, 1.0);
        let hist = vec![m; 401];
        let lam = adjoint_solution(&hist, 1.0 / 400.0).unwrap();
        let want = adjoint_constant(&m, 1.0).unwrap();
        let size = want.iter().map(|x| x.abs()).fold(1.0, f64::max);
        (0..3).all(|i| (lam[0][i] - want[i]).abs() < 1e-8 * size)
    });
    out.push(("adjoint ODE vs constant-G closed form (1e-8)", ok));

    let mut net = Mlp::glorot(&[3, 6, 4, 2], &mut rng).unwrap();
    net.params_mut().iter_mut().for_each(|p| *p += 0.2);
    let x = [0.3, -0.7, 1.1, 0.0, 0.5, -1.5];
    let w = [0.4, -1.0, 0.8, 0.3];
    let loss = |n: &Mlp| {
        let mut c = ForwardCache::default();
        n.forward(&x, 2, &mut c).unwrap();
        c.output().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut c = ForwardCache::default();
    net.forward(&x, 2, &mut c).unwrap();
    let g = net.backward(&c, &w).unwrap();
    let ok = (0..g.len()).all(|i| {
        let (mut a, mut b) = (net.clone(), net.clone());
        a.params_mut()[i] += 1e-6;
        b.params_mut()[i] -= 1e-6;
        let fd = (loss(&a) - loss(&b)) / 2e-6;
        (fd - g[i]).abs() < 1e-4 * g[i].abs().max(1.0)
    });
    let head = VmfHead { dim: 3 };
    let raw = [0.3, -0.9, 0.4, 1.7];
    let act = [0.6, 0.0, 0.8];
    let (_, dg) = head.log_prob_grad(&raw, &act).unwrap();
    let ok = ok
        && (0..4).all(|i| {
            let (mut a, mut b) = (raw, raw);
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (head.log_prob(&a, &act).unwrap() - head.log_prob(&b, &act).unwrap()) / 2e-6;
            (fd - dg[i]).abs() < 1e-4 * dg[i].abs().max(1.0)
        });
    out.push(("MLP and vMF log-prob gradients vs finite differences (1e-4)", ok));

    let ok = [0.1, 1.0, 10.0, 100.0].iter().all(|&k| {
        let d2 = Vmf::new(&[1.0, 0.0], k).unwrap();
        let n = 8192;
        let i2: f64 = (0..n)
            .map(|j| {
                let t = TAU * j as f64 / n as f64;
                d2.log_prob(&[t.cos(), t.sin()]).unwrap().exp()
            })
            .sum::<f64>()
            * TAU
            / n as f64;
        let d3 = Vmf::new(&[0.0, 0.0, 1.0], k).unwrap();
        let m = 20_000;
        let h = 2.0 / m as f64;
        let f = |z: f64| d3.log_prob(&[(1.0 - z * z).max(0.0).sqrt(), 0.0, z]).unwrap().exp();
        let mut i3 = f(-1.0) + f(1.0);
        for j in 1..m {
            i3 += f(-1.0 + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        i3 *= TAU * h / 3.0;
        (i2 - 1.0).abs() < 1e-6 && (i3 - 1.0).abs() < 1e-6
    });
    out.push(("vMF density quadrature, κ ∈ {0.1, 1, 10, 100} (1e-6)", ok));

    let (n, len) = (3, 9);
    let buf = RolloutBuffer {
        n_envs: n,
        len,
        rewards: (0..n * len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        values: (0..n * len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        dones: (0..n * len).map(|k| k % 7 == 3).collect(),
        bootstrap: vec![0.5, -0.2, 0.1],
        ..Default::default()
    };
    let (gamma, lambda) = (0.97, 0.9);
    let (adv, _) = compute_gae(&buf, gamma, lambda);
    let ok = (0..n).all(|i| {
        (0..len).all(|t| {
            let (mut acc, mut wgt) = (0.0, 1.0);
            for l in t..len {
                let k = l * n + i;
                let nv = if buf.dones[k] {
                    0.0
                } else if l + 1 < len {
                    buf.values[k + n]
                } else {
                    buf.bootstrap[i]
                };
                acc += wgt * (buf.rewards[k] + gamma * nv - buf.values[k]);
                if buf.dones[k] {
                    break;
                }
                wgt *= gamma * lambda;
            }
            (acc - adv[t * n + i]).abs() < 1e-12
        })
    });
    out.push(("GAE vs double loop (1e-12)", ok));

    let mut p = vec![1.0, -2.0, 0.5];
    let mut adam = Adam::new(3, 0.01);
    for g in [[0.3, -1.0, 2.0], [0.1, 0.5, -4.0], [-0.2, 0.0, 1.0]] {
        adam.step(&mut p, &g).unwrap();
    }
    let want = [0.979_017_109_101_043_1, -1.985_277_836_733_145, 0.495_027_941_934_124_4];
    out.push(("Adam three-step hand oracle (1e-12)", (0..3).all(|i| (p[i] - want[i]).abs() < 1e-12)));

    // two states, two actions, deterministic moves; Q* from value iteration
    let next = [[0usize, 1], [0, 1]];
    let reward = [[0.2, -0.1], [1.0, 0.5]];
    let g = 0.9;
    let mut qs = [[0.0f64; 2]; 2];
    for _ in 0..5000 {
        let mut nq = qs;
        for s in 0..2 {
            for a in 0..2 {
                let sp = next[s][a];
                nq[s][a] = reward[s][a] + g * qs[sp][0].max(qs[sp][1]);
            }
        }
        qs = nq;
    }
    let mut table = QTable::new(2, 2, 0.0);
    let mut s = 0;
    let steps = 400_000;
    for k in 0..steps {
        let a = if rng.random::<f64>() < 0.5 { rng.random_range(0..2) } else { table.argmax(s) };
        let lr = 0.5 * (1.0 - k as f64 / steps as f64) + 1e-4;
        table.update(s, a, reward[s][a], next[s][a], false, lr, g);
        s = next[s][a];
    }
    let ok = (0..2).all(|s| (0..2).all(|a| (table.get(s, a) - qs[s][a]).abs() < 1e-2));
    out.push(("Q-learning vs value iteration on a 2-state MDP (1e-2)", ok));

    let mut ok = true;
    for kind in [FlowKind::Tgv, FlowKind::Abc] {
        let e = env(kind);
        let mut st = e.reset(&mut stream(61, 0)).unwrap();
        let z = e.position_dim() - 1;
        let pol = SurfingPolicy::continuous(0.5);
        let mut total = 0.0;
        for _ in 0..e.config().episode_steps {
            let act = pol.act(&st.percept).unwrap();
            total += e.step(&mut st, &act).unwrap().reward;
        }
        ok &= (total - (st.position[z] - st.start_position[z])).abs() < 1e-9;
    }
    out.push(("reward telescoping (1e-9)", ok));

    let e = env(FlowKind::Abc);
    let mut a: Vec<_> = (0..10).map(|i| e.reset(&mut stream(62, i)).unwrap()).collect();
    let mut b = a.clone();
    let mut ok = true;
    for _ in 0..50 {
        let acts: Vec<_> = a.iter().map(|s| SurfingPolicy::continuous(0.72).act(&s.percept).unwrap()).collect();
        let ta = e.batch_step(&mut a, &acts, Execution::Parallel).unwrap();
        for i in 0..10 {
            ok &= e.step(&mut b[i], &acts[i]).unwrap() == ta[i];
        }
    }
    out.push(("batch vs sequential environment steps (exact)", ok && a == b));

    let data = common::dataset();
    let dir = tempfile::tempdir().unwrap();
    data.write(dir.path()).unwrap();
    let back = SnapshotDataset::read(dir.path()).unwrap();
    let bits = |d: &SnapshotDataset| -> Vec<u32> { (0..d.len()).flat_map(|k| d.frame(k).iter().map(|v| v.to_bits())).collect() };
    out.push(("dataset round-trip (bit-exact)", back.meta == data.meta && bits(&back) == bits(&data)));
    out
}

fn c6(suite: &mut Suite) {
    let t = Instant::now();
    let checks = c6_checks();
    for (name, ok) in &checks {
        println!("     {} {name}", if *ok { "ok  " } else { "FAIL" });
    }
    let failed = checks.iter().filter(|(_, ok)| !ok).count();
    suite.record(
        "C6",
        failed == 0,
        format!(
            "{} of {} property checks hold ({:.0} s); the full suites live in the other test targets",
            checks.len() - failed,
            checks.len(),
            t.elapsed().as_secs_f64()
        ),
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // the harness passes libtest flags through; only listing needs an answer
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let extended = args.iter().any(|a| a == "--extended");
    let mut suite = Suite { lines: Vec::new() };
    let start = Instant::now();
    type Step = fn(&mut Suite);
    let steps: [(&str, Step); 5] = [("C1", c1), ("C2", c2), ("C3", c3), ("C4", c4), ("C6", c6)];
    for (name, f) in steps {
        let t = Instant::now();
        f(&mut suite);
        println!("     [{name} took {:.0} s]", t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    c5(&mut suite, extended);
    println!("     [C5 took {:.0} s]", t.elapsed().as_secs_f64());

    let count = |f: fn(&Line) -> bool| suite.lines.iter().filter(|l| f(l)).count();
    let pass = count(|l| matches!(l.outcome, Outcome::Pass));
    let fail = count(|l| matches!(l.outcome, Outcome::Fail));
    let skipped = count(|l| matches!(l.outcome, Outcome::NotRun));
    let blocking = suite
        .lines
        .iter()
        .filter(|l| matches!(l.outcome, Outcome::Fail) && !DOCUMENTED_DEVIATIONS.contains(&l.id))
        .count();
    println!(
        "acceptance: {pass} passed, {fail} failed ({} documented), {skipped} not run; {:.0} s",
        fail - blocking,
        start.elapsed().as_secs_f64()
    );
    if blocking > 0 {
        std::process::exit(1);
    }
}
