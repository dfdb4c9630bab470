//! Continuous velocity and gradient fields reconstructed from a snapshot dataset.
//!
//! Each snapshot is decoded spectrally into the streamfunction derivatives
//! needed for bicubic Hermite interpolation of `u` and of the three independent
//! gradient components; the fourth gradient component follows from
//! incompressibility, so interpolated gradients are exactly trace-free. Between
//! snapshots the fields are interpolated linearly in time.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;

use super::dataset::SnapshotDataset;
use super::spectral::SpectralGrid;
use crate::flow::{wrap_coordinate, FlowSample, VelocityField};
use crate::{Error, Result};

/// `(order in x, order in z)` of the stored streamfunction derivatives.
const DERIVATIVES: [(u32, u32); 12] = [
    (1, 0), // 0  ψ_x
    (0, 1), // 1  ψ_z
    (2, 0), // 2  ψ_xx
    (1, 1), // 3  ψ_xz
    (0, 2), // 4  ψ_zz
    (3, 0), // 5  ψ_xxx
    (2, 1), // 6  ψ_xxz
    (1, 2), // 7  ψ_xzz
    (0, 3), // 8  ψ_zzz
    (3, 1), // 9  ψ_xxxz
    (2, 2), // 10 ψ_xxzz
    (1, 3), // 11 ψ_xzzz
];

/// Hermite data `(f, f_x, f_z, f_xz)` as indices into `DERIVATIVES`, and a sign.
struct HermiteField([usize; 4], f64);

// u_x = ψ_z, u_z = −ψ_x, so that ω = ∂_x u_z − ∂_z u_x = −∇²ψ
const UX: HermiteField = HermiteField([1, 3, 4, 7], 1.0);
const UZ: HermiteField = HermiteField([0, 2, 3, 6], -1.0);
const DX_UX: HermiteField = HermiteField([3, 6, 7, 10], 1.0);
const DX_UZ: HermiteField = HermiteField([2, 5, 6, 9], -1.0);
const DZ_UX: HermiteField = HermiteField([4, 7, 8, 11], 1.0);

/// One decoded snapshot: per node, the twelve streamfunction derivatives.
#[derive(Debug)]
pub struct DecodedFrame {
    n: usize,
    nodes: Vec<[f32; 12]>,
}

impl DecodedFrame {
    pub fn decode(grid: &SpectralGrid, vorticity: &[f32]) -> Self {
        let n = grid.n();
        let field: Vec<f64> = vorticity.iter().map(|&v| v as f64).collect();
        let mut hat = grid.forward_real(&field);
        grid.dealias(&mut hat);
        hat[0] = Complex64::new(0.0, 0.0);
        let psi = grid.streamfunction(&hat);
        let mut nodes = vec![[0f32; 12]; n * n];
        let i = Complex64::new(0.0, 1.0);
        for pair in 0..6 {
            let (a, b) = (DERIVATIVES[2 * pair], DERIVATIVES[2 * pair + 1]);
            let da = grid.derivative(&psi, a.0, a.1);
            let db = grid.derivative(&psi, b.0, b.1);
            let mut packed: Vec<Complex64> = da.iter().zip(&db).map(|(&x, &y)| x + i * y).collect();
            grid.inverse(&mut packed);
            for (node, v) in nodes.iter_mut().zip(&packed) {
                node[2 * pair] = v.re as f32;
                node[2 * pair + 1] = v.im as f32;
            }
        }
        Self { n, nodes }
    }

    #[inline]
    fn node(&self, i: usize, j: usize) -> &[f32; 12] {
        &self.nodes[j * self.n + i]
    }

    pub fn memory_bytes(&self) -> usize {
        self.nodes.len() * std::mem::size_of::<[f32; 12]>()
    }
}

/// Position of a query inside its grid cell.
#[derive(Clone, Copy)]
struct Cell {
    i: [usize; 2],
    j: [usize; 2],
    // Hermite basis along x: [h00, h01] and h·[h10, h11]; same along z
    bx0: [f64; 2],
    bx1: [f64; 2],
    bz0: [f64; 2],
    bz1: [f64; 2],
}

#[inline]
fn hermite_basis(s: f64, h: f64) -> ([f64; 2], [f64; 2]) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        [2.0 * s3 - 3.0 * s2 + 1.0, -2.0 * s3 + 3.0 * s2],
        [h * (s3 - 2.0 * s2 + s), h * (s3 - s2)],
    )
}

impl Cell {
    #[inline]
    fn locate(n: usize, p: &[f64; 2]) -> Self {
        let h = TAU / n as f64;
        let fx = wrap_coordinate(p[0]) / h;
        let fz = wrap_coordinate(p[1]) / h;
        let (ix, iz) = (fx.floor(), fz.floor());
        let (sx, sz) = (fx - ix, fz - iz);
        let i0 = (ix as usize) % n;
        let j0 = (iz as usize) % n;
        let (bx0, bx1) = hermite_basis(sx, h);
        let (bz0, bz1) = hermite_basis(sz, h);
        Self {
            i: [i0, (i0 + 1) % n],
            j: [j0, (j0 + 1) % n],
            bx0,
            bx1,
            bz0,
            bz1,
        }
    }

    #[inline]
    fn eval(&self, frame: &DecodedFrame, f: &HermiteField) -> f64 {
        let [v, vx, vz, vxz] = f.0;
        let mut acc = 0.0;
        for b in 0..2 {
            for a in 0..2 {
                let node = frame.node(self.i[a], self.j[b]);
                acc += self.bx0[a] * self.bz0[b] * node[v] as f64
                    + self.bx1[a] * self.bz0[b] * node[vx] as f64
                    + self.bx0[a] * self.bz1[b] * node[vz] as f64
                    + self.bx1[a] * self.bz1[b] * node[vxz] as f64;
            }
        }
        f.1 * acc
    }
}

/// Memory policy for decoded snapshots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CachePolicy {
    /// Keep every decoded frame if that fits in the byte budget, otherwise fall
    /// back to an LRU cache of [`DEFAULT_CACHE_FRAMES`] frames.
    Auto { budget_bytes: usize },
    /// LRU cache holding at most this many frames.
    Frames(usize),
}

pub const DEFAULT_CACHE_FRAMES: usize = 16;

impl Default for CachePolicy {
    fn default() -> Self {
        CachePolicy::Auto {
            budget_bytes: 1536 << 20,
        }
    }
}

struct Lru {
    capacity: usize,
    clock: u64,
    entries: HashMap<usize, (Arc<DecodedFrame>, u64)>,
}

enum FrameCache {
    All(Vec<OnceLock<Arc<DecodedFrame>>>),
    Lru(Mutex<Lru>),
}

/// A snapshot dataset viewed as a space-time continuous 2D flow. Safe to share
/// between threads; frames are decoded on first use.
pub struct TurbulenceField {
    dataset: SnapshotDataset,
    grid: SpectralGrid,
    cache: FrameCache,
    lowest_read: AtomicUsize,
}

impl std::fmt::Debug for TurbulenceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TurbulenceField")
            .field("n", &self.dataset.n())
            .field("frames", &self.dataset.len())
            .finish()
    }
}

impl TurbulenceField {
    pub fn new(dataset: SnapshotDataset, policy: CachePolicy) -> Self {
        let n = dataset.n();
        let frame_bytes = n * n * std::mem::size_of::<[f32; 12]>();
        let capacity = match policy {
            CachePolicy::Auto { budget_bytes } => {
                if frame_bytes * dataset.len() <= budget_bytes {
                    None
                } else {
                    Some(DEFAULT_CACHE_FRAMES)
                }
            }
            CachePolicy::Frames(c) => Some(c.max(2)),
        };
        let cache = match capacity {
            Some(capacity) if capacity < dataset.len() => FrameCache::Lru(Mutex::new(Lru {
                capacity,
                clock: 0,
                entries: HashMap::new(),
            })),
            _ => FrameCache::All((0..dataset.len()).map(|_| OnceLock::new()).collect()),
        };
        Self {
            grid: SpectralGrid::new(n),
            dataset,
            cache,
            lowest_read: AtomicUsize::new(usize::MAX),
        }
    }

    pub fn dataset(&self) -> &SnapshotDataset {
        &self.dataset
    }

    pub fn snapshot_interval(&self) -> f64 {
        self.dataset.meta.snapshot_interval
    }

    pub fn frame_count(&self) -> usize {
        self.dataset.len()
    }

    /// Valid time interval `[0, t_end]`.
    pub fn time_range(&self) -> (f64, f64) {
        (0.0, self.dataset.end_time())
    }

    /// Lowest frame index read since construction or the last
    /// [`TurbulenceField::reset_access_log`]; `None` if nothing was read.
    pub fn lowest_frame_read(&self) -> Option<usize> {
        let k = self.lowest_read.load(Ordering::Relaxed);
        (k != usize::MAX).then_some(k)
    }

    pub fn reset_access_log(&self) {
        self.lowest_read.store(usize::MAX, Ordering::Relaxed);
    }

    fn frame(&self, k: usize) -> Arc<DecodedFrame> {
        self.lowest_read.fetch_min(k, Ordering::Relaxed);
        match &self.cache {
            FrameCache::All(slots) => slots[k]
                .get_or_init(|| Arc::new(DecodedFrame::decode(&self.grid, self.dataset.frame(k))))
                .clone(),
            FrameCache::Lru(lru) => {
                {
                    let mut guard = lru.lock().expect("frame cache poisoned");
                    guard.clock += 1;
                    let clock = guard.clock;
                    if let Some(entry) = guard.entries.get_mut(&k) {
                        entry.1 = clock;
                        return entry.0.clone();
                    }
                }
                // decode outside the lock; a concurrent duplicate decode is harmless
                let decoded = Arc::new(DecodedFrame::decode(&self.grid, self.dataset.frame(k)));
                let mut guard = lru.lock().expect("frame cache poisoned");
                guard.clock += 1;
                let clock = guard.clock;
                if guard.entries.len() >= guard.capacity && !guard.entries.contains_key(&k) {
                    if let Some(oldest) = guard.entries.iter().min_by_key(|(_, (_, c))| *c).map(|(k, _)| *k) {
                        guard.entries.remove(&oldest);
                    }
                }
                guard.entries.insert(k, (decoded.clone(), clock));
                decoded
            }
        }
    }

    /// Bracketing frames and the weight of the later one.
    #[inline]
    fn bracket(&self, t: f64) -> Result<(usize, usize, f64)> {
        let (start, end) = self.time_range();
        if self.dataset.is_empty() || !(t >= start && t <= end + 1e-9 * end.max(1.0)) {
            return Err(Error::TimeRange { t, start, end });
        }
        let f = (t / self.snapshot_interval()).max(0.0);
        let last = self.dataset.len() - 1;
        let mut k0 = f.floor() as usize;
        let mut w = f - k0 as f64;
        if w > 1.0 - 1e-9 {
            k0 += 1;
            w = 0.0;
        } else if w < 1e-9 {
            w = 0.0;
        }
        if k0 >= last {
            return Ok((last, last, 0.0));
        }
        Ok((k0, k0 + 1, w))
    }

    fn velocity_in(&self, frame: &DecodedFrame, cell: &Cell) -> [f64; 2] {
        [cell.eval(frame, &UX), cell.eval(frame, &UZ)]
    }

    fn gradient_parts(&self, frame: &DecodedFrame, cell: &Cell) -> [f64; 3] {
        [cell.eval(frame, &DX_UX), cell.eval(frame, &DX_UZ), cell.eval(frame, &DZ_UX)]
    }

    /// Velocity at `(p, t)`.
    pub fn velocity_at(&self, p: &[f64; 2], t: f64) -> Result<[f64; 2]> {
        let (k0, k1, w) = self.bracket(t)?;
        let cell = Cell::locate(self.dataset.n(), p);
        let a = self.velocity_in(&self.frame(k0), &cell);
        if w == 0.0 {
            return Ok(a);
        }
        let b = self.velocity_in(&self.frame(k1), &cell);
        Ok([(1.0 - w) * a[0] + w * b[0], (1.0 - w) * a[1] + w * b[1]])
    }

    /// Velocity and gradient at `(p, t)`.
    pub fn sample_at(&self, p: &[f64; 2], t: f64) -> Result<FlowSample<2>> {
        let (k0, k1, w) = self.bracket(t)?;
        let cell = Cell::locate(self.dataset.n(), p);
        let f0 = self.frame(k0);
        let mut u = self.velocity_in(&f0, &cell);
        let mut g = self.gradient_parts(&f0, &cell);
        if w > 0.0 {
            let f1 = self.frame(k1);
            let u1 = self.velocity_in(&f1, &cell);
            let g1 = self.gradient_parts(&f1, &cell);
            for c in 0..2 {
                u[c] = (1.0 - w) * u[c] + w * u1[c];
            }
            for c in 0..3 {
                g[c] = (1.0 - w) * g[c] + w * g1[c];
            }
        }
        let [dxux, dxuz, dzux] = g;
        Ok(FlowSample {
            velocity: u,
            gradient: [[dxux, dzux], [dxuz, -dxux]],
        })
    }

    /// Spectrally reconstructed velocity and gradient at grid node `(i, j)` of
    /// frame `k`, computed directly in double precision from the stored
    /// vorticity. Independent of the interpolation path; used for validation.
    pub fn nodal_reference(&self, k: usize, i: usize, j: usize) -> FlowSample<2> {
        let grid = &self.grid;
        let field: Vec<f64> = self.dataset.frame(k).iter().map(|&v| v as f64).collect();
        let mut hat = grid.forward_real(&field);
        grid.dealias(&mut hat);
        hat[0] = Complex64::new(0.0, 0.0);
        let psi = grid.streamfunction(&hat);
        let n = grid.n();
        let at = |ax: u32, az: u32| grid.inverse_real(&grid.derivative(&psi, ax, az))[j * n + i];
        let (dxux, dxuz, dzux) = (at(1, 1), -at(2, 0), at(0, 2));
        FlowSample {
            velocity: [at(0, 1), -at(1, 0)],
            gradient: [[dxux, dzux], [dxuz, -dxux]],
        }
    }
}

impl VelocityField<2> for TurbulenceField {
    fn velocity(&self, p: &[f64; 2], t: f64) -> Result<[f64; 2]> {
        self.velocity_at(p, t)
    }
    fn sample(&self, p: &[f64; 2], t: f64) -> Result<FlowSample<2>> {
        self.sample_at(p, t)
    }
}

/// Flow sample at an arbitrary finite 2D point and dataset time.
pub fn sample_flow(field: &TurbulenceField, p: &[f64], t: f64) -> Result<FlowSample<2>> {
    let p: [f64; 2] = p.try_into().map_err(|_| Error::DimensionMismatch {
        expected: 2,
        actual: p.len(),
    })?;
    let p = crate::flow::wrap_periodic(p)?;
    field.sample_at(&p, t)
}
