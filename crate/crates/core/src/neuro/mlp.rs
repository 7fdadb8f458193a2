use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected network with tanh hidden layers and a linear output layer.
///
/// Parameters live in one flat array. Layer `l` stores its weight matrix
/// row-major (`fan_out` rows of `fan_in`) followed by its `fan_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of one forward pass: the input, every hidden layer after
/// tanh, and the linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; Self::param_count(sizes)] })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_sizes(sizes)?;
        if params.len() != Self::param_count(sizes) {
            return Err(Error::Shape(format!(
                "{} parameters for layer sizes {sizes:?} (expected {})",
                params.len(),
                Self::param_count(sizes)
            )));
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    /// Glorot-uniform weights, zero biases; the output layer is scaled by `output_gain`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let n_layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let gain = if l + 1 == n_layers { output_gain } else { 1.0 };
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = gain * limit * (2.0 * rng.random::<f64>() - 1.0);
            }
            off += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of the weights of output unit `unit` in the last layer, and of its bias.
    pub fn output_unit_offsets(&self, unit: usize) -> (std::ops::Range<usize>, usize) {
        let l = self.sizes.len() - 2;
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let base = self.params.len() - (fan_in + 1) * fan_out;
        let w = base + unit * fan_in;
        (w..w + fan_in, base + fan_in * fan_out + unit)
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "input of length {} for a network expecting {}",
                input.len(),
                self.input_size()
            )));
        }
        let n_layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[off..off + fan_in * fan_out];
            let biases = &self.params[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
            let x = &activations[l];
            let mut out: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(biases)
                .map(|(row, b)| b + dot(row, x))
                .collect();
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(out);
            off += (fan_in + 1) * fan_out;
        }
        Ok(ForwardCache { activations })
    }

    /// Parameter gradient of `upstream . output` for the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(cache, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Like [`Mlp::backward`] but accumulates into `grad`.
    pub fn backward_into(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        let n_layers = self.sizes.len() - 1;
        let shapes_match = cache.activations.len() == n_layers + 1
            && cache.activations.iter().zip(&self.sizes).all(|(a, &s)| a.len() == s);
        if !shapes_match {
            return Err(Error::Shape("forward cache does not belong to this network".into()));
        }
        if upstream.len() != self.output_size() || grad.len() != self.params.len() {
            return Err(Error::Shape("upstream or gradient buffer has the wrong length".into()));
        }
        let mut delta = upstream.to_vec();
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = end - (fan_in + 1) * fan_out;
            let x = &cache.activations[l];
            let (gw, gb) = grad[off..end].split_at_mut(fan_in * fan_out);
            for ((row, gbias), &d) in gw.chunks_exact_mut(fan_in).zip(gb.iter_mut()).zip(&delta) {
                *gbias += d;
                if d != 0.0 {
                    row.iter_mut().zip(x).for_each(|(g, v)| *g += d * v);
                }
            }
            if l > 0 {
                let weights = &self.params[off..off + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for (row, &d) in weights.chunks_exact(fan_in).zip(&delta) {
                    if d != 0.0 {
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                }
                prev.iter_mut().zip(x).for_each(|(p, a)| *p *= 1.0 - a * a);
                delta = prev;
            }
            end = off;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}
