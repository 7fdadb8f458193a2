use rand::Rng;

use crate::error::{Error, Result};

/// Lower bound applied to probabilities that appear in a denominator or a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-shifted softmax. Entries may be `-inf` (masked) but not all of them.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    Ok(Categorical::from_logits(logits)?.probs)
}

/// A categorical distribution held as probabilities and log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

/// One draw from [`categorical`].
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSample {
    pub index: usize,
    pub log_prob: f64,
    pub entropy: f64,
    pub probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Numeric("empty logit vector".into()));
        }
        if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::Numeric(format!("non-finite logits {logits:?}")));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Numeric("all logits are -inf".into()));
        }
        let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|l| l - max - log_z).collect();
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        Ok(Self { probs, log_probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, index: usize) -> f64 {
        self.log_probs[index]
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, lp)| -p * lp)
            .sum()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left the cumulative sum just below 1.
        self.probs.iter().rposition(|&p| p > 0.0).expect("some probability is positive")
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Samples `logits` and returns the draw with its log-probability, the
/// distribution entropy and the probabilities.
pub fn categorical<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<CategoricalSample> {
    let dist = Categorical::from_logits(logits)?;
    let index = dist.sample(rng);
    Ok(CategoricalSample {
        index,
        log_prob: dist.log_prob(index),
        entropy: dist.entropy(),
        probs: dist.probs,
    })
}

/// `sum_j p_j ln(p_j / q_j)` with `0 ln 0 = 0` and `q` floored at [`PROB_FLOOR`].
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("KL between lengths {} and {}", p.len(), q.len())));
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(pj, _)| **pj > 0.0)
        .map(|(pj, qj)| pj * (pj / qj.max(PROB_FLOOR)).ln())
        .sum();
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::named_stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn uniform_logits() {
        let mut rng = named_stream(0, "cat");
        let s = categorical(&[0.3; 8], &mut rng).unwrap();
        assert!((s.log_prob + 8f64.ln()).abs() < 1e-12);
        assert!((s.entropy - 8f64.ln()).abs() < 1e-12);
        assert!((s.log_prob - (-2.0794)).abs() < 1e-4);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] < 1e-300);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn degenerate_logits_rejected() {
        assert!(softmax(&[f64::NEG_INFINITY; 3]).is_err());
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
        assert!(softmax(&[]).is_err());
        let masked = softmax(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(masked, vec![0.0, 1.0]);
    }

    #[test]
    fn sample_frequencies_within_binomial_bounds() {
        let logits: Vec<f64> = [0.2f64, 0.3, 0.5].iter().map(|p| p.ln()).collect();
        let dist = Categorical::from_logits(&logits).unwrap();
        let mut rng = named_stream(5, "cat/freq");
        let n = 100_000;
        let mut counts = [0u32; 3];
        for _ in 0..n {
            counts[dist.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip([0.2, 0.3, 0.5]) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn argmax_and_entropy() {
        let d = Categorical::from_logits(&[0.0, 2.0, 2.0, -1.0]).unwrap();
        assert_eq!(d.argmax(), 1);
        let point = Categorical::from_logits(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(point.entropy(), 0.0);
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_categorical(&p, &p).unwrap(), 0.0);
        let kl = kl_categorical(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((kl - 2f64.ln()).abs() < 1e-15);
        assert!((kl - 0.6931).abs() < 1e-4);
        assert!(kl_categorical(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_gibbs_sweep() {
        let mut rng = named_stream(9, "cat/gibbs");
        for trial in 0..1000 {
            let k = 2 + trial % 7;
            let lp: Vec<f64> = (0..k).map(|_| 3.0 * rng.random::<f64>()).collect();
            let lq: Vec<f64> = (0..k).map(|_| 3.0 * rng.random::<f64>()).collect();
            let p = softmax(&lp).unwrap();
            let q = softmax(&lq).unwrap();
            let kl = kl_categorical(&p, &q).unwrap();
            assert!(kl >= 0.0);
            let same = p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-9);
            assert_eq!(kl <= 1e-9, same, "trial {trial}: kl {kl}");
            assert!(kl_categorical(&p, &p).unwrap() <= 1e-9);
        }
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            logits in proptest::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
