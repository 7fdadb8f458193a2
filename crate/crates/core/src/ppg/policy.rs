use rand::Rng;

use crate::error::{Error, Result};
use crate::neuro::{Categorical, ForwardCache, Mlp};

/// Placement of the categorical heads in the policy output vector. The
/// auxiliary value unit follows the last head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl HeadLayout {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid head sizes {sizes:?}")));
        }
        let offsets = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), offsets })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_heads(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of logits.
    pub fn n_logits(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    /// Output index of the auxiliary value unit.
    pub fn aux_index(&self) -> usize {
        self.n_logits()
    }

    pub fn range(&self, head: usize) -> std::ops::Range<usize> {
        self.offsets[head]..self.offsets[head] + self.sizes[head]
    }
}

/// Policy network: per-head logits plus one auxiliary value output.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub mlp: Mlp,
    layout: HeadLayout,
}

/// Result of one policy forward pass.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub cache: ForwardCache,
    pub heads: Vec<Categorical>,
    pub aux_value: f64,
}

impl PolicyOutput {
    /// Joint log-probability, the sum over heads.
    pub fn log_prob(&self, action: &[usize]) -> f64 {
        self.heads.iter().zip(action).map(|(h, &a)| h.log_prob(a)).sum()
    }

    /// All head probabilities, concatenated in layout order.
    pub fn probs(&self) -> Vec<f64> {
        self.heads.iter().flat_map(|h| h.probs().iter().copied()).collect()
    }

    pub fn greedy(&self) -> Vec<usize> {
        self.heads.iter().map(Categorical::argmax).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.heads.iter().map(|h| h.sample(rng)).collect()
    }
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        heads: &[usize],
        hidden: &[usize],
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let layout = HeadLayout::new(heads)?;
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(layout.n_logits() + 1);
        Ok(Self { mlp: Mlp::init(&sizes, output_gain, rng)?, layout })
    }

    pub fn from_mlp(mlp: Mlp, heads: &[usize]) -> Result<Self> {
        let layout = HeadLayout::new(heads)?;
        if mlp.output_size() != layout.n_logits() + 1 {
            return Err(Error::Shape(format!(
                "policy net has {} outputs, heads need {} plus the auxiliary unit",
                mlp.output_size(),
                layout.n_logits()
            )));
        }
        Ok(Self { mlp, layout })
    }

    pub fn layout(&self) -> &HeadLayout {
        &self.layout
    }

    pub fn forward(&self, obs: &[f64]) -> Result<PolicyOutput> {
        let cache = self.mlp.forward(obs)?;
        let out = cache.output();
        let heads = (0..self.layout.n_heads())
            .map(|h| Categorical::from_logits(&out[self.layout.range(h)]))
            .collect::<Result<Vec<_>>>()?;
        let aux_value = out[self.layout.aux_index()];
        Ok(PolicyOutput { cache, heads, aux_value })
    }

    /// Parameters of the auxiliary value unit (its weight row and bias).
    pub fn aux_head_params(&self) -> Vec<f64> {
        let (w, b) = self.mlp.output_unit_offsets(self.layout.aux_index());
        let p = self.mlp.params();
        let mut v = p[w].to_vec();
        v.push(p[b]);
        v
    }
}

/// Scalar state-value network.
pub fn value_net<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Mlp> {
    let mut sizes = vec![obs_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    Mlp::init(&sizes, 1.0, rng)
}
