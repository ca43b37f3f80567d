//! Softmax and (weighted) cross-entropy.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probability floor added inside the logarithm so the loss stays finite.
pub const PROB_EPSILON: f64 = 1e-12;

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Wraps `values` after checking they form a distribution (sum within 1e-9 of 1).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("probability vector is empty".into()));
        }
        if values.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> ProbVector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbVector(exps.into_iter().map(|e| e / sum).collect())
}

/// `-ln(p[true_class] + PROB_EPSILON)`.
pub fn cross_entropy(probs: &ProbVector, true_class: usize) -> Result<f64> {
    let p = probs.values().get(true_class).ok_or_else(|| {
        Error::InvalidInput(format!(
            "class {true_class} out of range for {} classes",
            probs.len()
        ))
    })?;
    Ok(-(p + PROB_EPSILON).ln())
}

/// Cross-entropy scaled by the true class's weight.
pub fn weighted_cross_entropy(probs: &ProbVector, true_class: usize, weights: &[f64]) -> Result<f64> {
    if weights.len() != probs.len() {
        return Err(Error::InvalidConfig(format!(
            "{} class weights for {} classes",
            weights.len(),
            probs.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidConfig(format!("class weight {w} is not positive")));
    }
    Ok(weights[true_class] * cross_entropy(probs, true_class)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_known_values() {
        assert_eq!(softmax(&[0.0, 0.0]).values(), &[0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!(close(p.values()[0], 2.0 / 3.0, 1e-15));
        assert!(close(p.values()[1], 1.0 / 3.0, 1e-15));
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p.values(), &[1.0, 0.0]);
    }

    #[test]
    fn cross_entropy_known_values() {
        let certain = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert!(cross_entropy(&certain, 0).unwrap().abs() < 1e-11);
        let half = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert!(close(cross_entropy(&half, 0).unwrap(), 2f64.ln(), 1e-11));
        assert!(close(cross_entropy(&half, 1).unwrap(), 2f64.ln(), 1e-11));
        let skew = ProbVector::new(vec![0.25, 0.75]).unwrap();
        assert!(close(cross_entropy(&skew, 0).unwrap(), 4f64.ln(), 1e-11));
        assert!(matches!(cross_entropy(&skew, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn weighted_cross_entropy_known_values() {
        let half = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let w = weighted_cross_entropy(&half, 0, &[2.0, 1.0]).unwrap();
        assert!(close(w, 2.0 * 2f64.ln(), 1e-11));

        // Male training cohort: 404 samples, 79 squamous -> weight 404 / (4 * 79).
        let uniform = ProbVector::new(vec![0.25; 4]).unwrap();
        let weights = [404.0 / 500.0, 404.0 / 316.0, 404.0 / 400.0, 404.0 / 400.0];
        let got = weighted_cross_entropy(&uniform, 1, &weights).unwrap();
        assert!(close(weights[1], 1.278481, 1e-6));
        assert!(close(got, 1.2784810126582278 * 4f64.ln(), 1e-10));

        assert!(matches!(
            weighted_cross_entropy(&half, 0, &[0.0, 1.0]),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            weighted_cross_entropy(&half, 0, &[1.0]),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.3]), 1);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            logits in prop::collection::vec(-1e3f64..1e3, 1..12),
            shift in -50.0f64..50.0,
        ) {
            let p = softmax(&logits);
            let sum: f64 = p.values().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.values().iter().zip(q.values()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn unit_weights_reduce_to_cross_entropy(
            logits in prop::collection::vec(-20.0f64..20.0, 2..6),
            pick in 0usize..6,
        ) {
            let p = softmax(&logits);
            let class = pick % p.len();
            let ones = vec![1.0; p.len()];
            prop_assert_eq!(
                weighted_cross_entropy(&p, class, &ones).unwrap(),
                cross_entropy(&p, class).unwrap()
            );
        }
    }
}
