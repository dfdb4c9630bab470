//! Prints the stationary statistics of the turbulence solver for a given set of
//! parameters: `turbulence_stats N NU DRAG K_LO K_HI AMP DURATION`.

use flownav::turbulence::dataset::energy_series;
use flownav::turbulence::SolverConfig;

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let base = SolverConfig::desk_scale();
    let cfg = SolverConfig {
        n: get(0, base.n as f64) as usize,
        viscosity: get(1, base.viscosity),
        drag: get(2, base.drag),
        forcing_shell: [get(3, base.forcing_shell[0]), get(4, base.forcing_shell[1])],
        forcing_amplitude: get(5, base.forcing_amplitude),
        ..base
    };
    let duration = get(6, 60.0);
    let start = std::time::Instant::now();
    let series = energy_series(&cfg, duration, 0.1).expect("simulation");
    for chunk in series.chunks(series.len() / 12) {
        let u = (chunk.iter().map(|s| s.u_rms.powi(2)).sum::<f64>() / chunk.len() as f64).sqrt();
        let w = (chunk.iter().map(|s| s.omega_rms.powi(2)).sum::<f64>() / chunk.len() as f64).sqrt();
        println!("u_rms {u:.3}  omega_rms {w:.3}  tau {:.3}", 1.0 / w);
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
