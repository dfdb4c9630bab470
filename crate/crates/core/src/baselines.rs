//! Analytic reference strategies: swimming straight up, and "surfing" along
//! `λ = exp(τ·G)·ẑ`, the first-order approximation of the optimal heading.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::env::{Components, FlowKind, NavEnv, Percept, SurfMatrix};
use crate::eval::{evaluate_policy, EvalOptions, PerformanceRow};
use crate::linalg::{self, Mat};
use crate::policy::Policy;
use crate::{Error, Result};

/// Largest `‖M‖₁` accepted by [`matrix_exponential`]. Beyond it the squaring
/// phase amplifies rounding past the accuracy contract.
pub const EXPM_NORM_LIMIT: f64 = 500.0;

/// Below this `‖λ‖` the surfing direction is treated as undefined.
pub const DEGENERATE_NORM: f64 = 1e-14;

pub fn naive_action(dim: usize) -> Result<Components> {
    match dim {
        2 | 3 => Ok((0..dim).map(|i| if i + 1 == dim { 1.0 } else { 0.0 }).collect()),
        _ => Err(Error::DimensionMismatch {
            expected: 3,
            actual: dim,
        }),
    }
}

/// `exp(M)` by scaling and squaring with a truncated Taylor series.
///
/// Error is below `1e-12 · max(1, ‖exp M‖)` for `‖M‖ ≤ 10`.
pub fn matrix_exponential<const D: usize>(m: &Mat<D>) -> Result<Mat<D>> {
    let norm = linalg::norm1(m);
    if m.iter().flatten().any(|x| !x.is_finite()) || norm > EXPM_NORM_LIMIT {
        return Err(Error::Magnitude {
            norm: if norm.is_finite() { norm } else { f64::INFINITY },
            limit: EXPM_NORM_LIMIT,
        });
    }
    // scale to ‖A‖ ≤ 1/2, where 18 Taylor terms are well below 1 ulp
    let mut squarings = 0;
    let mut s = 1.0;
    while norm * s > 0.5 {
        s *= 0.5;
        squarings += 1;
    }
    let a = linalg::scale(m, s);
    let mut term = linalg::identity::<D>();
    let mut sum = term;
    for k in 1..=18 {
        term = linalg::scale(&linalg::mat_mul(&term, &a), 1.0 / k as f64);
        sum = linalg::add(&sum, &term);
    }
    for _ in 0..squarings {
        sum = linalg::mat_mul(&sum, &sum);
    }
    Ok(sum)
}

fn unit_z<const D: usize>() -> [f64; D] {
    let mut z = [0.0; D];
    z[D - 1] = 1.0;
    z
}

/// `exp(τ·G)·ẑ`, unnormalised.
pub fn surfing_vector(g: &SurfMatrix, tau: f64) -> Result<Components> {
    fn go<const D: usize>(g: &Mat<D>, tau: f64) -> Result<Components> {
        if tau == 0.0 {
            return Ok(unit_z::<D>().into_iter().collect());
        }
        let e = matrix_exponential(&linalg::scale(g, tau))?;
        Ok(linalg::mat_vec(&e, &unit_z::<D>()).into_iter().collect())
    }
    match g {
        SurfMatrix::D2(m) => go(m, tau),
        SurfMatrix::D3(m) => go(m, tau),
    }
}

/// Surfing heading. `Ok(None)` flags a degenerate `λ`.
pub fn surfing_direction(g: &SurfMatrix, tau: f64) -> Result<Option<Components>> {
    let mut lambda = surfing_vector(g, tau)?;
    let norm = lambda.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm >= DEGENERATE_NORM) {
        return Ok(None);
    }
    lambda.iter_mut().for_each(|x| *x /= norm);
    Ok(Some(lambda))
}

fn surf_dim(g: &SurfMatrix) -> usize {
    match g {
        SurfMatrix::D2(_) => 2,
        SurfMatrix::D3(_) => 3,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfingConfig {
    pub tau_star: f64,
}

impl SurfingConfig {
    /// Tuned correlation times of the three flows.
    pub fn for_kind(kind: FlowKind) -> Self {
        let tau_star = match kind {
            FlowKind::Tgv => 2.0,
            FlowKind::Abc => 0.72,
            FlowKind::Turb => 0.23,
        };
        Self { tau_star }
    }
}

impl Default for SurfingConfig {
    fn default() -> Self {
        Self::for_kind(FlowKind::Tgv)
    }
}

/// Cartesian headings, `±ẑ` first so that ties favour swimming up.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteActionSet {
    directions: Vec<Components>,
}

impl DiscreteActionSet {
    pub fn new(dim: usize) -> Result<Self> {
        naive_action(dim)?;
        let axis = |i: usize, s: f64| -> Components {
            (0..dim).map(|j| if j == i { s } else { 0.0 }).collect()
        };
        let mut directions = vec![axis(dim - 1, 1.0), axis(dim - 1, -1.0)];
        for i in 0..dim - 1 {
            directions.push(axis(i, 1.0));
            directions.push(axis(i, -1.0));
        }
        Ok(Self { directions })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn get(&self, i: usize) -> &Components {
        &self.directions[i]
    }

    pub fn directions(&self) -> &[Components] {
        &self.directions
    }

    /// Index of the direction best aligned with `v`, lowest index on ties.
    pub fn best_aligned(&self, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let dot: f64 = d.iter().zip(v).map(|(a, b)| a * b).sum();
            if dot > best_dot {
                best = i;
                best_dot = dot;
            }
        }
        best
    }
}

pub fn discrete_surfing_action(
    g: &SurfMatrix,
    tau: f64,
    actions: &DiscreteActionSet,
) -> Result<Option<Components>> {
    Ok(surfing_direction(g, tau)?.map(|l| actions.get(actions.best_aligned(&l)).clone()))
}

/// Always up.
#[derive(Clone, Copy, Debug)]
pub struct NaivePolicy;

impl Policy for NaivePolicy {
    fn act(&self, percept: &Percept) -> Result<Components> {
        naive_action(surf_dim(&percept.surf_matrix))
    }
}

/// Continuous or discrete surfing. Degenerate directions fall back to `ẑ` and
/// are counted.
#[derive(Debug)]
pub struct SurfingPolicy {
    pub tau: f64,
    actions: Option<DiscreteActionSet>,
    degenerate: AtomicU64,
}

impl SurfingPolicy {
    pub fn continuous(tau: f64) -> Self {
        Self {
            tau,
            actions: None,
            degenerate: AtomicU64::new(0),
        }
    }

    pub fn discrete(tau: f64, dim: usize) -> Result<Self> {
        Ok(Self {
            tau,
            actions: Some(DiscreteActionSet::new(dim)?),
            degenerate: AtomicU64::new(0),
        })
    }

    /// Number of decisions that fell back to `ẑ`.
    pub fn degenerate_count(&self) -> u64 {
        self.degenerate.load(Ordering::Relaxed)
    }
}

impl Policy for SurfingPolicy {
    fn act(&self, percept: &Percept) -> Result<Components> {
        let g = &percept.surf_matrix;
        let dir = match &self.actions {
            None => surfing_direction(g, self.tau)?,
            Some(set) => discrete_surfing_action(g, self.tau, set)?,
        };
        match dir {
            Some(d) => Ok(d),
            None => {
                self.degenerate.fetch_add(1, Ordering::Relaxed);
                naive_action(surf_dim(g))
            }
        }
    }
}

/// `lo:hi:step`, both ends included.
pub fn tau_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Input(format!("bad grid {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Input(format!("grid {spec:?} is not lo:hi:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    tau_grid(v[0], v[1], v[2])
}

/// Default search grid of each flow.
pub fn default_tau_grid(kind: FlowKind) -> Vec<f64> {
    let (hi, step) = match kind {
        FlowKind::Tgv => (4.0, 0.1),
        FlowKind::Abc => (2.0, 0.04),
        FlowKind::Turb => (1.0, 0.05),
    };
    tau_grid(0.0, hi, step).expect("static grid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub tau: f64,
    pub mean: f64,
    pub ci95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauCurve {
    pub tau_star: f64,
    pub points: Vec<TauPoint>,
}

/// Scores the surfing policy on every grid point. Each point replays the same
/// episode seeds, so differences between points are not sampling noise in the
/// start conditions.
pub fn tune_tau(env: &NavEnv, grid: &[f64], opts: &EvalOptions) -> Result<TauCurve> {
    if grid.is_empty() {
        return Err(Error::Input("empty tau grid".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &tau in grid {
        let row: PerformanceRow = evaluate_policy(env, &SurfingPolicy::continuous(tau), opts)?;
        points.push(TauPoint {
            tau,
            mean: row.mean,
            ci95: row.ci95,
        });
    }
    let best = points
        .iter()
        .fold(&points[0], |b, p| if p.mean > b.mean { p } else { b });
    Ok(TauCurve {
        tau_star: best.tau,
        points,
    })
}

/// Backward solution of the adjoint equation `dλ/dt = −Jᵀλ`, `λ(t_f) = ẑ`,
/// given the flow gradient `J` sampled every `dt` along a trajectory
/// (`history[0]` at `t_0`, last entry at `t_f`). Classical RK4 with linear
/// interpolation of `J` at half steps. Returns `λ` at the sample times.
pub fn adjoint_solution<const D: usize>(history: &[Mat<D>], dt: f64) -> Result<Vec<[f64; D]>> {
    if history.is_empty() {
        return Err(Error::Input("empty gradient history".into()));
    }
    let n = history.len();
    // march in s = t_f − t, where dλ/ds = Jᵀλ
    let f = |j: &Mat<D>, x: &[f64; D]| linalg::mat_vec(&linalg::transpose(j), x);
    let axpy = |x: &[f64; D], k: &[f64; D], h: f64| {
        let mut o = *x;
        for i in 0..D {
            o[i] += h * k[i];
        }
        o
    };
    let mut lambda = vec![[0.0; D]; n];
    lambda[n - 1] = unit_z::<D>();
    for k in (0..n - 1).rev() {
        let j1 = &history[k + 1];
        let j3 = &history[k];
        let j2 = linalg::scale(&linalg::add(j1, j3), 0.5);
        let l = lambda[k + 1];
        let k1 = f(j1, &l);
        let k2 = f(&j2, &axpy(&l, &k1, 0.5 * dt));
        let k3 = f(&j2, &axpy(&l, &k2, 0.5 * dt));
        let k4 = f(j3, &axpy(&l, &k3, dt));
        lambda[k] = l;
        for i in 0..D {
            lambda[k][i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(lambda)
}

/// Closed form for a constant gradient over a horizon `h`: `λ(t_0) = exp(h·Jᵀ)·ẑ`.
pub fn adjoint_constant<const D: usize>(j: &Mat<D>, horizon: f64) -> Result<[f64; D]> {
    let e = matrix_exponential(&linalg::scale(&linalg::transpose(j), horizon))?;
    Ok(linalg::mat_vec(&e, &unit_z::<D>()))
}
