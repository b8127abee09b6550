//! Regularized training objectives.
//!
//! Both stages minimize a data term plus the elastic-net penalty
//! `λ·(γ·Σ|w| + (1−γ)·Σw²)` taken over the tensors of the layer being
//! trained. The next-step predictor uses the per-frame mean squared error;
//! the classifier uses cross entropy against a one-hot terrain label.

use crate::error::{ensure, Result};

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Elastic-net weighting: `lambda` scales the penalty, `gamma` mixes ℓ1 (1) and squared ℓ2 (0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationSpec {
    lambda: f64,
    gamma: f64,
}

impl Default for RegularizationSpec {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            gamma: 0.5,
        }
    }
}

impl RegularizationSpec {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        ensure!(
            lambda.is_finite() && lambda >= 0.0,
            "lambda must be finite and >= 0, got {lambda}"
        );
        ensure!(
            (0.0..=1.0).contains(&gamma),
            "gamma must lie in [0, 1], got {gamma}"
        );
        Ok(Self { lambda, gamma })
    }

    pub fn none() -> Self {
        Self {
            lambda: 0.0,
            gamma: 0.5,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// A loss split into its data and penalty parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub data_term: f64,
    pub penalty_term: f64,
}

impl LossValue {
    pub fn new(data_term: f64, penalty_term: f64) -> Self {
        Self {
            total: data_term + penalty_term,
            data_term,
            penalty_term,
        }
    }
}

pub fn elastic_net_penalty(tensors: &[&[f64]], reg: &RegularizationSpec) -> f64 {
    if reg.lambda == 0.0 {
        return 0.0;
    }
    let (mut l1, mut l2) = (0.0, 0.0);
    for t in tensors {
        for &w in t.iter() {
            l1 += w.abs();
            l2 += w * w;
        }
    }
    reg.lambda * (reg.gamma * l1 + (1.0 - reg.gamma) * l2)
}

/// `sign(w)` with `sign(0) = 0`.
#[inline]
pub fn subgradient_sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn penalty_derivative(w: f64, reg: &RegularizationSpec) -> f64 {
    reg.lambda * (reg.gamma * subgradient_sign(w) + (1.0 - reg.gamma) * 2.0 * w)
}

/// Gradient of [`elastic_net_penalty`], one vector per input tensor.
pub fn penalty_gradient(tensors: &[&[f64]], reg: &RegularizationSpec) -> Vec<Vec<f64>> {
    tensors
        .iter()
        .map(|t| t.iter().map(|&w| penalty_derivative(w, reg)).collect())
        .collect()
}

/// Adds the penalty gradient into `grads`, tensor by tensor.
pub(crate) fn accumulate_penalty_gradient(
    tensors: &[&[f64]],
    grads: &mut [&mut [f64]],
    reg: &RegularizationSpec,
) {
    if reg.lambda == 0.0 {
        return;
    }
    for (t, g) in tensors.iter().zip(grads.iter_mut()) {
        for (gi, &w) in g.iter_mut().zip(t.iter()) {
            *gi += penalty_derivative(w, reg);
        }
    }
}

/// Mean over dimensions of the squared error between two frames.
pub fn mean_squared_error(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    ensure!(
        x.len() == x_hat.len() && !x.is_empty(),
        "mse: frame lengths {} and {} differ or are empty",
        x.len(),
        x_hat.len()
    );
    let sum: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

/// `-log(max(p[label], floor))`.
pub fn cross_entropy(label: usize, y_hat: &[f64]) -> Result<f64> {
    ensure!(
        label < y_hat.len(),
        "label {label} out of range for {} classes",
        y_hat.len()
    );
    Ok(-y_hat[label].max(PROB_FLOOR).ln())
}

/// Position of the single 1 in a one-hot vector.
pub fn one_hot_index(y: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in y.iter().enumerate() {
        if v == 1.0 {
            ensure!(hot.is_none(), "label vector has more than one hot entry");
            hot = Some(i);
        } else {
            ensure!(v == 0.0, "label vector is not one-hot: entry {i} = {v}");
        }
    }
    hot.ok_or_else(|| crate::Error::contract("label vector has no hot entry"))
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; classes];
    y[label] = 1.0;
    y
}

/// Next-step prediction loss for a single frame.
pub fn predicting_loss(
    x: &[f64],
    x_hat: &[f64],
    params: &[&[f64]],
    reg: &RegularizationSpec,
) -> Result<LossValue> {
    let data = mean_squared_error(x, x_hat)?;
    Ok(LossValue::new(data, elastic_net_penalty(params, reg)))
}

/// Classification loss for a single distribution.
pub fn classifying_loss(
    y: &[f64],
    y_hat: &[f64],
    params: &[&[f64]],
    reg: &RegularizationSpec,
) -> Result<LossValue> {
    ensure!(
        y.len() == y_hat.len(),
        "label has {} classes but prediction has {}",
        y.len(),
        y_hat.len()
    );
    let sum: f64 = y_hat.iter().sum();
    ensure!(
        (sum - 1.0).abs() < 1e-9,
        "prediction is not a distribution (sums to {sum})"
    );
    let label = one_hot_index(y)?;
    let data = cross_entropy(label, y_hat)?;
    Ok(LossValue::new(data, elastic_net_penalty(params, reg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg(l: f64, g: f64) -> RegularizationSpec {
        RegularizationSpec::new(l, g).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let w: &[f64] = &[0.3, -1.0, 2.0];
        assert_eq!(elastic_net_penalty(&[w], &reg(0.0, 0.7)), 0.0);
        assert_eq!(elastic_net_penalty(&[&[2.0]], &reg(1.0, 1.0)), 2.0);
        let p = elastic_net_penalty(&[&[2.0]], &reg(0.5, 0.25));
        assert!((p - 1.75).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_examples() {
        let g = penalty_gradient(&[&[1.0, -2.0]], &reg(0.0, 0.5));
        assert_eq!(g, vec![vec![0.0, 0.0]]);
        for gamma in [0.0, 0.3, 1.0] {
            assert_eq!(penalty_gradient(&[&[0.0]], &reg(1.0, gamma))[0][0], 0.0);
        }
        assert_eq!(penalty_gradient(&[&[2.0]], &reg(1.0, 0.5))[0][0], 2.5);
    }

    #[test]
    fn predicting_loss_examples() {
        let x = [0.1, -0.4, 2.0];
        assert_eq!(predicting_loss(&x, &x, &[], &reg(0.0, 0.5)).unwrap().total, 0.0);
        let l = predicting_loss(&[1.0, 0.0], &[0.0, 0.0], &[], &reg(0.0, 0.5)).unwrap();
        assert_eq!(l.total, 0.5);
        let l = predicting_loss(&[1.0, 0.0], &[0.0, 0.0], &[&[0.5]], &reg(0.1, 0.5)).unwrap();
        assert!((l.total - 0.5375).abs() < 1e-15);
        assert!(predicting_loss(&[1.0], &[1.0, 2.0], &[], &reg(0.0, 0.5)).is_err());
    }

    #[test]
    fn classifying_loss_examples() {
        let uniform = vec![1.0 / 6.0; 6];
        for c in 0..6 {
            let l = classifying_loss(&one_hot(c, 6), &uniform, &[], &reg(0.0, 0.5)).unwrap();
            assert!((l.total - 6f64.ln()).abs() < 1e-12);
        }
        let l = classifying_loss(&[1.0, 0.0], &[1.0, 0.0], &[], &reg(0.0, 0.5)).unwrap();
        assert!(l.data_term <= -(1.0 - 1e-12f64).ln() + 1e-18);
        let l = classifying_loss(&[1.0, 0.0], &[0.75, 0.25], &[], &reg(0.0, 0.5)).unwrap();
        assert!((l.total - 0.2876821).abs() < 1e-7);
        // clamp keeps log finite
        let l = classifying_loss(&[0.0, 1.0], &[1.0, 0.0], &[], &reg(0.0, 0.5)).unwrap();
        assert!((l.data_term - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn classifying_loss_rejects_bad_labels() {
        let p = [0.5, 0.5];
        let r = reg(0.0, 0.5);
        assert!(classifying_loss(&[0.5, 0.5], &p, &[], &r).is_err());
        assert!(classifying_loss(&[1.0, 1.0], &p, &[], &r).is_err());
        assert!(classifying_loss(&[0.0, 0.0], &p, &[], &r).is_err());
        assert!(classifying_loss(&[1.0, 0.0, 0.0], &p, &[], &r).is_err());
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(RegularizationSpec::new(-1.0, 0.5).is_err());
        assert!(RegularizationSpec::new(1.0, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn total_is_sum_of_parts(
            x in prop::collection::vec(-5.0f64..5.0, 4),
            xh in prop::collection::vec(-5.0f64..5.0, 4),
            w in prop::collection::vec(-2.0f64..2.0, 0..10),
            lambda in 0.0f64..1.0,
            gamma in 0.0f64..=1.0,
        ) {
            let l = predicting_loss(&x, &xh, &[&w], &reg(lambda, gamma)).unwrap();
            prop_assert!((l.total - (l.data_term + l.penalty_term)).abs() <= 1e-12);
            let swapped = predicting_loss(&xh, &x, &[&w], &reg(lambda, gamma)).unwrap();
            prop_assert_eq!(l.data_term, swapped.data_term);
        }

        #[test]
        fn ridge_and_lasso_identities(
            w in prop::collection::vec(-3.0f64..3.0, 1..12),
            lambda in 0.0f64..2.0,
        ) {
            let l1: f64 = w.iter().map(|v| v.abs()).sum();
            let l2: f64 = w.iter().map(|v| v * v).sum();
            prop_assert!((elastic_net_penalty(&[&w], &reg(lambda, 1.0)) - lambda * l1).abs() < 1e-12);
            prop_assert!((elastic_net_penalty(&[&w], &reg(lambda, 0.0)) - lambda * l2).abs() < 1e-12);
            let g = penalty_gradient(&[&w], &reg(lambda, 0.0));
            for (gi, wi) in g[0].iter().zip(&w) {
                prop_assert!((gi - 2.0 * lambda * wi).abs() < 1e-12);
            }
        }

        #[test]
        fn penalty_monotone_in_lambda(
            w in prop::collection::vec(-3.0f64..3.0, 1..12),
            a in 0.0f64..2.0,
            b in 0.0f64..2.0,
            gamma in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(
                elastic_net_penalty(&[&w], &reg(lo, gamma)) <= elastic_net_penalty(&[&w], &reg(hi, gamma))
            );
        }

        #[test]
        fn penalty_convex_per_entry(
            x in -3.0f64..3.0,
            y in -3.0f64..3.0,
            t in 0.0f64..=1.0,
            gamma in 0.0f64..=1.0,
        ) {
            let r = reg(0.7, gamma);
            let f = |w: f64| elastic_net_penalty(&[&[w]], &r);
            let mid = f(t * x + (1.0 - t) * y);
            prop_assert!(mid <= t * f(x) + (1.0 - t) * f(y) + 1e-12);
        }

        #[test]
        fn cross_entropy_nonnegative(z in prop::collection::vec(-20.0f64..20.0, 2..8), pick in 0usize..8) {
            let p = crate::seqcore::softmax(&z).unwrap();
            let label = pick % p.len();
            prop_assert!(cross_entropy(label, &p).unwrap() >= 0.0);
        }
    }
}
