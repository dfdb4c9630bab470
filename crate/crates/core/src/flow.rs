//! Analytic steady flows on the 2π-periodic box.
//!
//! Gradients follow the convention `gradient[i][j] = ∂u_i/∂x_j` everywhere in
//! the crate. Two-dimensional flows use the coordinate order `(x, z)`.

use std::f64::consts::TAU;

use crate::linalg::Mat;
use crate::{Error, Result};

/// Velocity and velocity gradient at one space-time point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowSample<const D: usize> {
    pub velocity: [f64; D],
    pub gradient: Mat<D>,
}

impl<const D: usize> FlowSample<D> {
    pub fn divergence(&self) -> f64 {
        crate::linalg::trace(&self.gradient)
    }
}

impl FlowSample<3> {
    /// Curl of the velocity, read off the gradient.
    pub fn vorticity(&self) -> [f64; 3] {
        let g = &self.gradient;
        [g[2][1] - g[1][2], g[0][2] - g[2][0], g[1][0] - g[0][1]]
    }
}

impl FlowSample<2> {
    /// Out-of-plane vorticity `∂_x u_z − ∂_z u_x`.
    pub fn vorticity(&self) -> f64 {
        self.gradient[1][0] - self.gradient[0][1]
    }
}

/// A velocity field that can be probed anywhere in space and (possibly) time.
pub trait VelocityField<const D: usize>: Send + Sync {
    fn velocity(&self, p: &[f64; D], t: f64) -> Result<[f64; D]>;
    fn sample(&self, p: &[f64; D], t: f64) -> Result<FlowSample<D>>;
}

/// Maps one coordinate onto `[0, 2π)`.
#[inline]
pub fn wrap_coordinate(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Canonical periodic representative of a position.
pub fn wrap_periodic<const D: usize>(p: [f64; D]) -> Result<[f64; D]> {
    let mut out = p;
    for (index, x) in out.iter_mut().enumerate() {
        if !x.is_finite() {
            return Err(Error::InvalidPosition { index, value: *x });
        }
        *x = wrap_coordinate(*x);
    }
    Ok(out)
}

fn fixed<const D: usize>(p: &[f64]) -> Result<[f64; D]> {
    p.try_into().map_err(|_| Error::DimensionMismatch {
        expected: D,
        actual: p.len(),
    })
}

/// Taylor-Green vortices, a steady lattice of counter-rotating cells.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TgvConfig {
    pub amplitude: f64,
}

impl Default for TgvConfig {
    fn default() -> Self {
        Self { amplitude: 0.5 }
    }
}

impl TgvConfig {
    #[inline]
    pub fn velocity_at(&self, p: &[f64; 2]) -> [f64; 2] {
        let (sx, cx) = p[0].sin_cos();
        let (sz, cz) = p[1].sin_cos();
        let u = self.amplitude;
        [-u * cx * sz, u * sx * cz]
    }

    #[inline]
    pub fn sample_at(&self, p: &[f64; 2]) -> FlowSample<2> {
        let (sx, cx) = p[0].sin_cos();
        let (sz, cz) = p[1].sin_cos();
        let u = self.amplitude;
        FlowSample {
            velocity: [-u * cx * sz, u * sx * cz],
            gradient: [[u * sx * sz, -u * cx * cz], [u * cx * cz, -u * sx * sz]],
        }
    }
}

impl VelocityField<2> for TgvConfig {
    fn velocity(&self, p: &[f64; 2], _t: f64) -> Result<[f64; 2]> {
        Ok(self.velocity_at(p))
    }
    fn sample(&self, p: &[f64; 2], _t: f64) -> Result<FlowSample<2>> {
        Ok(self.sample_at(p))
    }
}

/// TGV sample at a dynamically sized position.
pub fn tgv_sample(p: &[f64], cfg: &TgvConfig) -> Result<FlowSample<2>> {
    Ok(cfg.sample_at(&fixed::<2>(p)?))
}

/// Arnold-Beltrami-Childress flow.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            a: 3f64.sqrt(),
            b: 2f64.sqrt(),
            c: 1.0,
        }
    }
}

impl AbcConfig {
    #[inline]
    pub fn velocity_at(&self, p: &[f64; 3]) -> [f64; 3] {
        let (sx, cx) = p[0].sin_cos();
        let (sy, cy) = p[1].sin_cos();
        let (sz, cz) = p[2].sin_cos();
        [
            self.a * sz + self.c * cy,
            self.b * sx + self.a * cz,
            self.c * sy + self.b * cx,
        ]
    }

    #[inline]
    pub fn sample_at(&self, p: &[f64; 3]) -> FlowSample<3> {
        let (sx, cx) = p[0].sin_cos();
        let (sy, cy) = p[1].sin_cos();
        let (sz, cz) = p[2].sin_cos();
        let (a, b, c) = (self.a, self.b, self.c);
        FlowSample {
            velocity: [a * sz + c * cy, b * sx + a * cz, c * sy + b * cx],
            gradient: [
                [0.0, -c * sy, a * cz],
                [b * cx, 0.0, -a * sz],
                [-b * sx, c * cy, 0.0],
            ],
        }
    }
}

impl VelocityField<3> for AbcConfig {
    fn velocity(&self, p: &[f64; 3], _t: f64) -> Result<[f64; 3]> {
        Ok(self.velocity_at(p))
    }
    fn sample(&self, p: &[f64; 3], _t: f64) -> Result<FlowSample<3>> {
        Ok(self.sample_at(p))
    }
}

/// ABC sample at a dynamically sized position.
pub fn abc_sample(p: &[f64], cfg: &AbcConfig) -> Result<FlowSample<3>> {
    Ok(cfg.sample_at(&fixed::<3>(p)?))
}
