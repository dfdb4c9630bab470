//! Scores the analytic baselines on the two steady flows.
//!
//! usage: baseline_scores [EPISODES]

use flownav::baselines::{NaivePolicy, SurfingConfig, SurfingPolicy};
use flownav::env::{EnvConfig, FlowKind, NavEnv};
use flownav::eval::{evaluate_policy, EvalOptions};

fn main() -> flownav::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let opts = EvalOptions::new(episodes, 1);
    for kind in [FlowKind::Tgv, FlowKind::Abc] {
        let env = NavEnv::new(EnvConfig::for_kind(kind), None)?;
        let tau = SurfingConfig::for_kind(kind).tau_star;
        let naive = evaluate_policy(&env, &NaivePolicy, &opts)?;
        let surf = evaluate_policy(&env, &SurfingPolicy::continuous(tau), &opts)?;
        let disc = evaluate_policy(&env, &SurfingPolicy::discrete(tau, env.position_dim())?, &opts)?;
        println!(
            "{kind}: naive {:.3}±{:.3}  surfing(τ={tau}) {:.3}±{:.3}  discrete {:.3}±{:.3}",
            naive.mean, naive.ci95, surf.mean, surf.ci95, disc.mean, disc.ci95
        );
    }
    Ok(())
}
