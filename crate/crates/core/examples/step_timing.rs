use flownav::baselines::{NaivePolicy, SurfingPolicy};
use flownav::env::{EnvConfig, FlowKind, NavEnv};
use flownav::eval::episode_scores;
use flownav::par::Execution;
use std::time::Instant;

fn main() -> flownav::Result<()> {
    for kind in [FlowKind::Tgv, FlowKind::Abc] {
        let env = NavEnv::new(EnvConfig::for_kind(kind), None)?;
        let steps = 200.0 * env.config().episode_steps as f64;
        let t = Instant::now();
        episode_scores(&env, &NaivePolicy, 200, 0, Execution::Sequential)?;
        println!("{kind} naive {:.0} ns/step", t.elapsed().as_nanos() as f64 / steps);
        let t = Instant::now();
        episode_scores(&env, &SurfingPolicy::continuous(1.0), 200, 0, Execution::Sequential)?;
        println!("{kind} surf {:.0} ns/step", t.elapsed().as_nanos() as f64 / steps);
    }
    Ok(())
}
