use crate::{Error, Result};

pub const NORMALIZER_EPS: f64 = 1e-8;
pub const NORMALIZER_CLIP: f64 = 10.0;

/// Per-component running mean and variance (population), merged batch by batch.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningNormalizer {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn from_parts(count: f64, mean: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        if mean.len() != m2.len() || !(count >= 0.0) || m2.iter().any(|v| *v < 0.0) {
            return Err(Error::Input("inconsistent normalizer state".into()));
        }
        Ok(Self { count, mean, m2 })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0.0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| m / self.count).collect()
    }

    /// Merges a row-major batch of observations.
    pub fn update(&mut self, batch: &[f64]) -> Result<()> {
        let d = self.dim();
        if d == 0 || !batch.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: batch.len(),
            });
        }
        let n = (batch.len() / d) as f64;
        if n == 0.0 {
            return Ok(());
        }
        for j in 0..d {
            let col = batch.iter().skip(j).step_by(d);
            let bm = col.clone().sum::<f64>() / n;
            let bm2: f64 = col.map(|x| (x - bm) * (x - bm)).sum();
            let total = self.count + n;
            let delta = bm - self.mean[j];
            self.mean[j] += delta * n / total;
            self.m2[j] += bm2 + delta * delta * self.count * n / total;
        }
        self.count += n;
        Ok(())
    }

    /// `(x − mean)/√(var + ε)` clipped to `±10`; identity before any update.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        if self.count == 0.0 {
            out.copy_from_slice(x);
            return;
        }
        let d = self.dim();
        for (i, (o, v)) in out.iter_mut().zip(x).enumerate() {
            let j = i % d;
            let var = self.m2[j] / self.count;
            *o = ((v - self.mean[j]) / (var + NORMALIZER_EPS).sqrt()).clamp(-NORMALIZER_CLIP, NORMALIZER_CLIP);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        out
    }
}
