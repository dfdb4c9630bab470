//! von Mises-Fisher distributions on the circle and the sphere.
//!
//! Density w.r.t. arc length / surface area: `f(x) = exp(κ μ·x) / C_d(κ)` with
//! `C_2(κ) = 2π I₀(κ)` and `C_3(κ) = 4π sinh(κ)/κ`.

use std::f64::consts::{PI, TAU};

use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

/// Offset added to the raw concentration output before the softplus, so that
/// a freshly initialised actor is almost uniform.
pub const KAPPA_SHIFT: f64 = -5.0;

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `e^{-x} I_ν(x)` for ν ∈ {0, 1}, x ≥ 0.
fn scaled_bessel(nu: u32, x: f64) -> f64 {
    if x < 20.0 {
        // power series
        let q = 0.25 * x * x;
        let mut term = if nu == 0 { 1.0 } else { 0.5 * x };
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + nu as f64));
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum * (-x).exp()
    } else {
        // large-argument expansion, truncated at its smallest term
        let mu = 4.0 * (nu * nu) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            let next = -term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum / (TAU * x).sqrt()
    }
}

/// `ln I₀(κ)`, stable for large arguments.
pub fn log_bessel_i0(kappa: f64) -> f64 {
    kappa + scaled_bessel(0, kappa).ln()
}

/// `I₁(κ)/I₀(κ)`.
pub fn bessel_ratio_i1_i0(kappa: f64) -> f64 {
    scaled_bessel(1, kappa) / scaled_bessel(0, kappa)
}

/// `ln(sinh(κ)/κ)` for κ ≥ 0.
fn log_sinhc(kappa: f64) -> f64 {
    if kappa < 1e-3 {
        let k2 = kappa * kappa;
        k2 / 6.0 - k2 * k2 / 180.0
    } else {
        log_sinh(kappa) - kappa.ln()
    }
}

/// `ln sinh(κ)` for κ > 0.
pub fn log_sinh(kappa: f64) -> f64 {
    kappa + (-(-2.0 * kappa).exp()).ln_1p() - std::f64::consts::LN_2
}

/// `coth κ − 1/κ`.
fn langevin(kappa: f64) -> f64 {
    if kappa < 1e-3 {
        kappa / 3.0 - kappa.powi(3) / 45.0
    } else {
        let e = (-2.0 * kappa).exp();
        (1.0 + e) / (1.0 - e) - 1.0 / kappa
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vmf {
    mu: Vec<f64>,
    kappa: f64,
}

impl Vmf {
    pub fn new(mu: &[f64], kappa: f64) -> Result<Self> {
        if mu.len() != 2 && mu.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                actual: mu.len(),
            });
        }
        let n = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= 1e-9) || !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Input(format!("invalid vMF parameters |μ|={n}, κ={kappa}")));
        }
        Ok(Self {
            mu: mu.to_vec(),
            kappa,
        })
    }

    pub fn mean_direction(&self) -> &[f64] {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `ln C_d(κ)`.
    pub fn log_normalizer(&self) -> f64 {
        log_normalizer(self.dim(), self.kappa)
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        check_unit(x, self.dim())?;
        let dot: f64 = self.mu.iter().zip(x).map(|(a, b)| a * b).sum();
        Ok(self.kappa * dot - self.log_normalizer())
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        match self.dim() {
            2 => sample_circle(&self.mu, self.kappa, rng),
            _ => sample_sphere(&self.mu, self.kappa, rng),
        }
    }
}

fn check_unit(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((n - 1.0).abs() <= 1e-6) {
        return Err(Error::Input(format!("vMF argument has norm {n}")));
    }
    Ok(())
}

fn log_normalizer(d: usize, kappa: f64) -> f64 {
    if d == 2 {
        TAU.ln() + log_bessel_i0(kappa)
    } else {
        (2.0 * TAU).ln() + log_sinhc(kappa)
    }
}

/// `d ln C_d / dκ`, i.e. the mean resultant length.
fn mean_resultant(d: usize, kappa: f64) -> f64 {
    if d == 2 {
        bessel_ratio_i1_i0(kappa)
    } else {
        langevin(kappa)
    }
}

/// Best–Fisher rejection sampler for the von Mises angle.
fn von_mises_angle(kappa: f64, rng: &mut Rng) -> f64 {
    if kappa < 1e-8 {
        return rng.random_range(-PI..PI);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let theta = f.clamp(-1.0, 1.0).acos();
            return if u3 > 0.5 { theta } else { -theta };
        }
    }
}

fn sample_circle(mu: &[f64], kappa: f64, rng: &mut Rng) -> Vec<f64> {
    let theta = von_mises_angle(kappa, rng);
    let (s, c) = theta.sin_cos();
    vec![c * mu[0] - s * mu[1], s * mu[0] + c * mu[1]]
}

/// Wood's construction on S²: the component along μ has an explicit inverse
/// CDF in three dimensions; the orthogonal part is uniform on a circle. The
/// sample is built around ẑ and reflected onto μ.
fn sample_sphere(mu: &[f64], kappa: f64, rng: &mut Rng) -> Vec<f64> {
    let u: f64 = rng.random();
    let w = if kappa < 1e-8 {
        2.0 * u - 1.0
    } else {
        (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0)
    };
    let phi = rng.random_range(0.0..TAU);
    let r = (1.0 - w * w).max(0.0).sqrt();
    let y = [r * phi.cos(), r * phi.sin(), w];
    // Householder reflection exchanging ẑ and μ
    let v = [mu[0], mu[1], mu[2] - 1.0];
    let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if vv < 1e-24 {
        return y.to_vec();
    }
    let vy = v[0] * y[0] + v[1] * y[1] + v[2] * y[2];
    let s = 2.0 * vy / vv;
    // H ẑ = μ for H = I − 2vvᵀ/|v|²
    (0..3).map(|i| y[i] - s * v[i]).collect()
}

/// Policy head mapping `d + 1` raw network outputs `(m, s)` to a vMF with
/// `μ = m/|m|` and `κ = softplus(s + KAPPA_SHIFT)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VmfHead {
    pub dim: usize,
}

impl VmfHead {
    pub fn raw_len(&self) -> usize {
        self.dim + 1
    }

    pub fn distribution(&self, raw: &[f64]) -> Result<Vmf> {
        let (mu, _, kappa) = self.decode(raw)?;
        Ok(Vmf { mu, kappa })
    }

    /// `(μ, |m|, κ)`.
    fn decode(&self, raw: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
        if raw.len() != self.raw_len() {
            return Err(Error::DimensionMismatch {
                expected: self.raw_len(),
                actual: raw.len(),
            });
        }
        let m = &raw[..self.dim];
        let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Divergence(format!("non-finite policy output {raw:?}")));
        }
        let mu = if norm > 0.0 {
            m.iter().map(|x| x / norm).collect()
        } else {
            // undefined direction; fall back to ẑ
            (0..self.dim).map(|i| if i + 1 == self.dim { 1.0 } else { 0.0 }).collect()
        };
        Ok((mu, norm, softplus(raw[self.dim] + KAPPA_SHIFT)))
    }

    /// Log-density of `x` and its gradient with respect to the raw outputs.
    pub fn log_prob_grad(&self, raw: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (mu, norm, kappa) = self.decode(raw)?;
        check_unit(x, self.dim)?;
        let dot: f64 = mu.iter().zip(x).map(|(a, b)| a * b).sum();
        let logp = kappa * dot - log_normalizer(self.dim, kappa);
        let mut grad = vec![0.0; self.raw_len()];
        if norm > 0.0 {
            for i in 0..self.dim {
                grad[i] = kappa * (x[i] - dot * mu[i]) / norm;
            }
        }
        grad[self.dim] = (dot - mean_resultant(self.dim, kappa)) * sigmoid(raw[self.dim] + KAPPA_SHIFT);
        Ok((logp, grad))
    }

    pub fn log_prob(&self, raw: &[f64], x: &[f64]) -> Result<f64> {
        self.distribution(raw)?.log_prob(x)
    }
}
