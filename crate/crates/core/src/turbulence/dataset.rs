//! Snapshot datasets: generation and the on-disk directory format.
//!
//! A dataset directory holds two files:
//!
//! * `meta.json`: [`DatasetMeta`] serialised as JSON;
//! * `frames.bin`: `count` frames of physical-space vorticity, frame-major,
//!   each frame row-major `N×N` (rows along `z`, columns along `x`), stored as
//!   32-bit IEEE floats in little-endian byte order. Frame `k` is the field at
//!   dataset time `k · snapshot_interval`.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::solver::{flow_stats, Solver, SolverConfig, SpectralState};
use super::FlowStats;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const FRAMES_FILE: &str = "frames.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    /// Always `"little"`: byte order of `frames.bin`.
    pub endianness: String,
    pub n: usize,
    pub snapshot_interval: f64,
    pub count: usize,
    /// Simulation time discarded before the first frame.
    pub warmup: f64,
    /// Statistics averaged over the stored frames.
    pub stats: FlowStats,
    pub solver: SolverConfig,
    pub seed: u64,
    /// Threads used by the solver; results are bit-stable for a fixed count.
    pub solver_threads: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotDataset {
    pub meta: DatasetMeta,
    frames: Vec<f32>,
}

impl SnapshotDataset {
    pub fn new(meta: DatasetMeta, frames: Vec<f32>) -> Result<Self> {
        let expected = meta.count * meta.n * meta.n;
        if frames.len() != expected {
            return Err(Error::Input(format!(
                "frame buffer holds {} values, metadata implies {expected}",
                frames.len()
            )));
        }
        Ok(Self { meta, frames })
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn len(&self) -> usize {
        self.meta.count
    }

    pub fn is_empty(&self) -> bool {
        self.meta.count == 0
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let m = self.meta.n * self.meta.n;
        &self.frames[k * m..(k + 1) * m]
    }

    /// Time of the last frame.
    pub fn end_time(&self) -> f64 {
        self.meta.count.saturating_sub(1) as f64 * self.meta.snapshot_interval
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Format {
            path: dir.join(META_FILE),
            reason: e.to_string(),
        })?;
        fs::write(dir.join(META_FILE), meta)?;
        let mut out = BufWriter::new(fs::File::create(dir.join(FRAMES_FILE))?);
        for v in &self.frames {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: DatasetMeta =
            serde_json::from_str(&fs::read_to_string(&meta_path)?).map_err(|e| Error::Format {
                path: meta_path.clone(),
                reason: e.to_string(),
            })?;
        if meta.format_version != FORMAT_VERSION || meta.endianness != "little" {
            return Err(Error::Format {
                path: meta_path,
                reason: format!(
                    "unsupported format version {} / endianness {}",
                    meta.format_version, meta.endianness
                ),
            });
        }
        let frames_path = dir.join(FRAMES_FILE);
        let mut bytes = Vec::new();
        fs::File::open(&frames_path)?.read_to_end(&mut bytes)?;
        let expected = meta.count * meta.n * meta.n * 4;
        if bytes.len() != expected {
            return Err(Error::Format {
                path: frames_path,
                reason: format!("expected {expected} bytes, found {}", bytes.len()),
            });
        }
        let frames = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(meta, frames)
    }
}

/// Knobs of a production run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationPlan {
    pub warmup: f64,
    pub duration: f64,
    pub snapshot_interval: f64,
    /// Where the last good state is written if the run blows up.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        Self {
            warmup: 30.0,
            duration: 50.0,
            snapshot_interval: 0.01,
            checkpoint_dir: None,
        }
    }
}

/// Runs the solver through the warm-up and records `round(duration / Δt)`
/// snapshots.
pub fn run_simulation(cfg: &SolverConfig, plan: &SimulationPlan) -> Result<SnapshotDataset> {
    let mut solver = Solver::new(cfg.clone())?;
    if !(plan.snapshot_interval > 0.0) || !(plan.warmup >= 0.0) || !(plan.duration >= 0.0) {
        return Err(Error::Config("simulation: durations must be non-negative".into()));
    }
    let count = (plan.duration / plan.snapshot_interval).round() as usize;
    let n = cfg.n;
    let mut rng = crate::rng::stream(cfg.seed, 0);
    let mut state = solver.random_state(&mut rng);
    let mut frames = Vec::with_capacity(count * n * n);
    let mut sums = FlowStats::default();

    let abort = |state: &SpectralState, solver: &Solver, err: Error| -> Error {
        let checkpoint = plan.checkpoint_dir.as_ref().and_then(|dir| {
            let path = dir.join("last_good_state.bin");
            let field = state.vorticity(&solver.grid);
            let bytes: Vec<u8> = field.iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::create_dir_all(dir).ok()?;
            fs::write(&path, bytes).ok()?;
            Some(path)
        });
        Error::SimulationAborted {
            reason: err.to_string(),
            checkpoint,
        }
    };

    if plan.warmup > 0.0 {
        if let Err(e) = solver.advance_to(&mut state, plan.warmup, &mut rng) {
            return Err(abort(&state, &solver, e));
        }
    }
    let t0 = state.time;
    for k in 0..count {
        let target = t0 + k as f64 * plan.snapshot_interval;
        if let Err(e) = solver.advance_to(&mut state, target, &mut rng) {
            return Err(abort(&state, &solver, e));
        }
        let s = flow_stats(&solver.grid, &state);
        sums.u_rms += s.u_rms.powi(2);
        sums.omega_rms += s.omega_rms.powi(2);
        sums.energy += s.energy;
        sums.enstrophy += s.enstrophy;
        frames.extend(state.vorticity(&solver.grid).iter().map(|&v| v as f32));
    }
    let stats = if count == 0 {
        FlowStats::default()
    } else {
        let c = count as f64;
        FlowStats {
            u_rms: (sums.u_rms / c).sqrt(),
            omega_rms: (sums.omega_rms / c).sqrt(),
            energy: sums.energy / c,
            enstrophy: sums.enstrophy / c,
        }
    };
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        endianness: "little".into(),
        n,
        snapshot_interval: plan.snapshot_interval,
        count,
        warmup: plan.warmup,
        stats,
        solver: cfg.clone(),
        seed: cfg.seed,
        solver_threads: 1,
    };
    SnapshotDataset::new(meta, frames)
}

/// Energy time series of a run (one value per `interval`), used for
/// stationarity diagnostics and forcing calibration.
pub fn energy_series(cfg: &SolverConfig, duration: f64, interval: f64) -> Result<Vec<FlowStats>> {
    let mut solver = Solver::new(cfg.clone())?;
    let mut rng = crate::rng::stream(cfg.seed, 0);
    let mut state = solver.random_state(&mut rng);
    let steps = (duration / interval).round() as usize;
    let mut out = Vec::with_capacity(steps);
    for k in 1..=steps {
        solver.advance_to(&mut state, k as f64 * interval, &mut rng)?;
        out.push(flow_stats(&solver.grid, &state));
    }
    Ok(out)
}

/// Bisects (in log space) the forcing amplitude so that the mean `u_rms` over
/// `[warmup, warmup + window]` matches `target_u_rms`.
pub fn tune_forcing_amplitude(
    base: &SolverConfig,
    target_u_rms: f64,
    warmup: f64,
    window: f64,
    iterations: usize,
) -> Result<(SolverConfig, f64)> {
    let measure = |amp: f64| -> Result<f64> {
        let cfg = SolverConfig {
            forcing_amplitude: amp,
            ..base.clone()
        };
        let series = energy_series(&cfg, warmup + window, 0.05)?;
        let skip = (warmup / 0.05).round() as usize;
        let tail = &series[skip.min(series.len())..];
        let mean_u2 = tail.iter().map(|s| s.u_rms * s.u_rms).sum::<f64>() / tail.len().max(1) as f64;
        Ok(mean_u2.sqrt())
    };
    let mut lo = base.forcing_amplitude / 8.0;
    let mut hi = base.forcing_amplitude * 8.0;
    let mut best = (base.forcing_amplitude, measure(base.forcing_amplitude)?);
    for _ in 0..iterations {
        let mid = (lo * hi).sqrt();
        let u = measure(mid)?;
        if (u - target_u_rms).abs() < (best.1 - target_u_rms).abs() {
            best = (mid, u);
        }
        if u < target_u_rms {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((
        SolverConfig {
            forcing_amplitude: best.0,
            ..base.clone()
        },
        best.1,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SolverConfig {
        SolverConfig {
            n: 16,
            ..SolverConfig::desk_scale()
        }
    }

    #[test]
    fn frame_count_follows_duration() {
        let plan = SimulationPlan {
            warmup: 0.0,
            duration: 0.5,
            ..Default::default()
        };
        let ds = run_simulation(&tiny(), &plan).unwrap();
        assert_eq!(ds.len(), 50);
        assert!((ds.end_time() - 0.49).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_gives_empty_dataset() {
        let plan = SimulationPlan {
            warmup: 0.1,
            duration: 0.0,
            ..Default::default()
        };
        let ds = run_simulation(&tiny(), &plan).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.meta.n, 16);
        assert_eq!(ds.meta.stats, FlowStats::default());
    }

    #[test]
    fn equal_seeds_are_bit_identical_and_round_trip() {
        let plan = SimulationPlan {
            warmup: 0.05,
            duration: 0.1,
            ..Default::default()
        };
        let a = run_simulation(&tiny(), &plan).unwrap();
        let b = run_simulation(&tiny(), &plan).unwrap();
        assert_eq!(a, b);
        let other = run_simulation(&SolverConfig { seed: 9, ..tiny() }, &plan).unwrap();
        assert_ne!(a.frame(0), other.frame(0));

        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let back = SnapshotDataset::read(dir.path()).unwrap();
        assert_eq!(a.meta, back.meta);
        let bits = |d: &SnapshotDataset| -> Vec<u32> {
            (0..d.len()).flat_map(|k| d.frame(k).iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
        };
        assert_eq!(bits(&a), bits(&back));
        let raw = fs::read(dir.path().join(FRAMES_FILE)).unwrap();
        assert_eq!(raw.len(), 10 * 16 * 16 * 4);
        assert_eq!(&raw[0..4], &a.frame(0)[0].to_le_bytes());
    }

    #[test]
    fn truncated_frames_rejected() {
        let plan = SimulationPlan {
            warmup: 0.0,
            duration: 0.02,
            ..Default::default()
        };
        let a = run_simulation(&tiny(), &plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let path = dir.path().join(FRAMES_FILE);
        let mut raw = fs::read(&path).unwrap();
        raw.truncate(raw.len() - 4);
        fs::write(&path, raw).unwrap();
        assert!(matches!(SnapshotDataset::read(dir.path()), Err(Error::Format { .. })));
    }
}
