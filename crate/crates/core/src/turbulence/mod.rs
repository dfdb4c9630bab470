//! Two-dimensional turbulence: the spectral solver that generates snapshot
//! datasets and the interpolated field used by the turbulent environment.

pub mod dataset;
pub mod field;
pub mod solver;
pub mod spectral;

pub use dataset::{run_simulation, DatasetMeta, SimulationPlan, SnapshotDataset};
pub use field::{sample_flow, CachePolicy, TurbulenceField};
pub use solver::{flow_stats, Solver, SolverConfig, SpectralState};
pub use spectral::SpectralGrid;

/// Domain-averaged flow moments. `u_rms² = 2·energy` and `omega_rms² = 2·enstrophy`.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowStats {
    pub u_rms: f64,
    pub omega_rms: f64,
    pub energy: f64,
    pub enstrophy: f64,
}
