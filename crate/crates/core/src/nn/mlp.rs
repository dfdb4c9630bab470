use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Fully connected network, ELU on hidden layers and a linear output.
///
/// Parameters live in one flat vector, layer by layer: the `out × in`
/// weight matrix in row-major order followed by the `out` biases.
#[derive(Clone, Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Bumped on every parameter mutation; caches remember it.
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.params == other.params
    }
}

/// Activations of one batched forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    batch: usize,
    version: u64,
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().map_or(&[], |v| v.as_slice())
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Zero network with the given layer sizes (input first).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
            version: 0,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-a..a);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    /// Offset of layer `l`'s weights and bias in the flat vector.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let off: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    /// Multiplies the last layer's weights by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let l = self.sizes.len() - 2;
        let (w, b) = self.layer_offsets(l);
        self.params_mut()[w..b].iter_mut().for_each(|p| *p *= factor);
    }

    /// Forward pass over a row-major `batch × input_dim` block.
    pub fn forward(&self, input: &[f64], batch: usize, cache: &mut ForwardCache) -> Result<()> {
        if input.len() != batch * self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: batch * self.input_dim(),
                actual: input.len(),
            });
        }
        let layers = self.sizes.len() - 1;
        cache.batch = batch;
        cache.version = self.version;
        cache.inputs.resize_with(layers + 1, Vec::new);
        cache.pre.resize_with(layers.saturating_sub(1), Vec::new);
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(input);
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_offsets(l);
            let (before, after) = cache.inputs.split_at_mut(l + 1);
            let x = &before[l];
            let y = &mut after[0];
            y.clear();
            y.resize(batch * n_out, 0.0);
            for row in y.chunks_exact_mut(n_out) {
                row.copy_from_slice(&self.params[b..b + n_out]);
            }
            // y (B×out) += x (B×in) · Wᵀ
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    n_in,
                    n_out,
                    1.0,
                    x.as_ptr(),
                    n_in as isize,
                    1,
                    self.params[w..].as_ptr(),
                    1,
                    n_in as isize,
                    1.0,
                    y.as_mut_ptr(),
                    n_out as isize,
                    1,
                );
            }
            if l + 1 < layers {
                let pre = &mut cache.pre[l];
                pre.clear();
                pre.extend_from_slice(y);
                y.iter_mut().for_each(|v| *v = elu(*v));
            }
        }
        Ok(())
    }

    /// Output for a single input.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward(input, 1, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Gradient of `Σ_b grad_out[b]·output[b]` with respect to the parameters,
    /// summed over the cached batch.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, grad_out, &mut grads)?;
        Ok(grads)
    }

    /// As [`Mlp::backward`], overwriting `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut [f64]) -> Result<()> {
        let layers = self.sizes.len() - 1;
        if cache.version != self.version || cache.inputs.len() != layers + 1 {
            return Err(Error::StaleCache(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        let batch = cache.batch;
        if grad_out.len() != batch * self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: batch * self.output_dim(),
                actual: grad_out.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let mut delta = grad_out.to_vec();
        let mut next = Vec::new();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_offsets(l);
            let x = &cache.inputs[l];
            // dW (out×in) = δᵀ · x
            unsafe {
                matrixmultiply::dgemm(
                    n_out,
                    batch,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    n_out as isize,
                    x.as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    grads[w..].as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            let gb = &mut grads[b..b + n_out];
            gb.iter_mut().for_each(|g| *g = 0.0);
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            // δ_prev (B×in) = δ · W, then through the ELU
            next.clear();
            next.resize(batch * n_in, 0.0);
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    n_out,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    n_out as isize,
                    1,
                    self.params[w..].as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    next.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            for (d, z) in next.iter_mut().zip(&cache.pre[l - 1]) {
                *d *= elu_derivative(*z);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        Ok(())
    }
}
