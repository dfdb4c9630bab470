//! Shared fixtures: the desk-scale turbulence record, generated once per
//! build directory and reused by every test binary.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use flownav::env::{EnvConfig, FlowKind, Mode, NavEnv};
use flownav::turbulence::{run_simulation, CachePolicy, SimulationPlan, SnapshotDataset, SolverConfig, TurbulenceField};

pub fn desk_solver() -> SolverConfig {
    SolverConfig::desk_scale()
}

pub fn desk_plan() -> SimulationPlan {
    SimulationPlan::default()
}

fn dataset_dir() -> PathBuf {
    let cfg = desk_solver();
    let plan = desk_plan();
    let tag = format!(
        "turb_n{}_a{}_s{}_w{}_d{}",
        cfg.n, cfg.forcing_amplitude, cfg.seed, plan.warmup, plan.duration
    );
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(tag)
}

/// Desk-scale dataset: N = 64, 5000 snapshots every 0.01.
pub fn dataset() -> SnapshotDataset {
    let dir = dataset_dir();
    if let Ok(d) = SnapshotDataset::read(&dir) {
        if d.meta.solver == desk_solver() && d.len() == 5000 {
            return d;
        }
    }
    let d = run_simulation(&desk_solver(), &desk_plan()).expect("simulation runs");
    let tmp = dir.with_extension(format!("tmp{}", std::process::id()));
    d.write(&tmp).expect("dataset written");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::rename(&tmp, &dir).expect("dataset moved into place");
    d
}

pub fn field() -> Arc<TurbulenceField> {
    static FIELD: OnceLock<Arc<TurbulenceField>> = OnceLock::new();
    FIELD
        .get_or_init(|| Arc::new(TurbulenceField::new(dataset(), CachePolicy::default())))
        .clone()
}

pub fn turb_env(mode: Mode) -> NavEnv {
    let mut cfg = EnvConfig::for_kind(FlowKind::Turb);
    cfg.mode = mode;
    NavEnv::new(cfg, Some(field())).expect("turbulent environment")
}

pub fn analytic_env(kind: FlowKind) -> NavEnv {
    NavEnv::new(EnvConfig::for_kind(kind), None).expect("analytic environment")
}
