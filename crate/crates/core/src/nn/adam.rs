use crate::{Error, Result};

/// Bias-corrected Adam on a flat parameter vector, minimising.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                actual: grads.len().min(params.len()),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite gradient {} at parameter {i} (step {})",
                grads[i],
                self.t + 1
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_lr() {
        let mut a = Adam::new(2, 0.01);
        let mut p = [1.0, 1.0];
        a.step(&mut p, &[3.0, -0.2]).unwrap();
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((p[1] - (1.0 + 0.01)).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_is_inert() {
        let mut a = Adam::new(1, 0.1);
        let mut p = [0.7];
        for _ in 0..10 {
            a.step(&mut p, &[0.0]).unwrap();
        }
        assert_eq!(p, [0.7]);
    }

    #[test]
    fn nan_gradient_diverges() {
        let mut a = Adam::new(1, 0.1);
        assert!(matches!(a.step(&mut [0.0], &[f64::NAN]), Err(Error::Divergence(_))));
    }
}
