//! Small differentiable objectives with exact hand-derived gradients.
//!
//! Every model is a pure function of `(weights, batch)`. The quadratic kind
//! ignores its batch — it is a fixed objective used where a known smoothness
//! constant matters. The data-driven kinds (least squares, multinomial
//! logistic regression, two-layer perceptron) average per-example losses over
//! the batch. No batch normalization, no gradient clipping.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// A training example: a feature vector plus a target.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: Target,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Value(f64),
}

impl Example {
    pub fn class(&self) -> Option<usize> {
        match self.target {
            Target::Class(c) => Some(c),
            Target::Value(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    /// `f(w) = 1/2 w'Aw - b'w` with `A` symmetric PSD (row-major, dim x dim).
    Quadratic { a: Vec<f64>, b: Vec<f64> },
    /// Per-example loss `1/2 (x'w - y)^2`.
    LeastSquares { num_features: usize },
    /// Multinomial logistic regression with bias, cross-entropy loss.
    /// Parameters laid out as `[W (classes x features, row-major), b (classes)]`.
    Logistic { num_features: usize, num_classes: usize },
    /// Two-layer perceptron: affine, ReLU, affine, softmax cross-entropy.
    /// Parameters `[W1 (hidden x features), b1, W2 (classes x hidden), b2]`.
    Mlp { num_features: usize, hidden: usize, num_classes: usize },
}

impl ModelSpec {
    /// Builds a quadratic spec, validating shapes and symmetry.
    pub fn quadratic(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let d = b.len();
        if d == 0 || a.len() != d * d {
            return Err(Error::InvalidConfig(format!(
                "quadratic needs a {d}x{d} matrix, got {} entries",
                a.len()
            )));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let diff = (a[i * d + j] - a[j * d + i]).abs();
                if diff > 1e-9 * a[i * d + j].abs().max(a[j * d + i].abs()).max(1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "quadratic matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(ModelSpec::Quadratic { a, b })
    }

    /// Flat parameter count.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Quadratic { b, .. } => b.len(),
            ModelSpec::LeastSquares { num_features } => *num_features,
            ModelSpec::Logistic { num_features, num_classes } => {
                num_classes * (num_features + 1)
            }
            ModelSpec::Mlp { num_features, hidden, num_classes } => {
                hidden * (num_features + 1) + num_classes * (hidden + 1)
            }
        }
    }

    /// Mean loss and its exact analytic gradient over the batch.
    pub fn loss_and_grad(&self, weights: &[f64], batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        if weights.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: weights.len() });
        }
        match self {
            ModelSpec::Quadratic { a, b } => Ok(quadratic_loss_grad(a, b, weights)),
            ModelSpec::LeastSquares { num_features } => {
                require_batch(batch)?;
                least_squares_loss_grad(*num_features, weights, batch)
            }
            ModelSpec::Logistic { num_features, num_classes } => {
                require_batch(batch)?;
                logistic_loss_grad(*num_features, *num_classes, weights, batch)
            }
            ModelSpec::Mlp { num_features, hidden, num_classes } => {
                require_batch(batch)?;
                mlp_loss_grad(*num_features, *hidden, *num_classes, weights, batch)
            }
        }
    }

    /// Largest Hessian eigenvalue for the quadratic kind, found by power
    /// iteration to a 1e-8 relative tolerance. `None` for data-driven kinds.
    pub fn smoothness_constant(&self) -> Option<f64> {
        match self {
            ModelSpec::Quadratic { a, b } => Some(power_iteration(a, b.len())),
            _ => None,
        }
    }
}

fn require_batch(batch: &[Example]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidData("batch must be nonempty".into()));
    }
    Ok(())
}

fn check_features(len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(Error::DimensionMismatch { expected, got: len });
    }
    Ok(())
}

fn quadratic_loss_grad(a: &[f64], b: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let d = b.len();
    let mut aw = vec![0.0; d];
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        aw[i] = row.iter().zip(w).map(|(&aij, &wj)| aij * wj).sum();
    }
    let loss = 0.5 * dot(&aw, w) - dot(b, w);
    let grad = aw.iter().zip(b).map(|(&awi, &bi)| awi - bi).collect();
    (loss, grad)
}

fn least_squares_loss_grad(
    num_features: usize,
    w: &[f64],
    batch: &[Example],
) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grad = vec![0.0; num_features];
    let inv = 1.0 / batch.len() as f64;
    for ex in batch {
        check_features(ex.features.len(), num_features)?;
        let y = match ex.target {
            Target::Value(y) => y,
            Target::Class(_) => {
                return Err(Error::InvalidData(
                    "least squares expects real-valued targets".into(),
                ))
            }
        };
        let residual = dot(&ex.features, w) - y;
        loss += 0.5 * residual * residual * inv;
        for (g, &x) in grad.iter_mut().zip(&ex.features) {
            *g += residual * x * inv;
        }
    }
    Ok((loss, grad))
}

fn class_target(ex: &Example, num_classes: usize) -> Result<usize> {
    match ex.target {
        Target::Class(c) if c < num_classes => Ok(c),
        Target::Class(c) => Err(Error::InvalidData(format!(
            "class label {c} out of range for {num_classes} classes"
        ))),
        Target::Value(_) => Err(Error::InvalidData(
            "classifier expects class targets".into(),
        )),
    }
}

/// Numerically stable log-softmax cross-entropy; returns (loss, dz) where
/// `dz = softmax(z) - onehot(label)`.
fn softmax_ce(z: &[f64], label: usize) -> (f64, Vec<f64>) {
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - zmax).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + zmax - z[label];
    let mut dz: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    dz[label] -= 1.0;
    (loss, dz)
}

fn logistic_loss_grad(
    num_features: usize,
    num_classes: usize,
    w: &[f64],
    batch: &[Example],
) -> Result<(f64, Vec<f64>)> {
    let weight_len = num_classes * num_features;
    let (wmat, bias) = w.split_at(weight_len);
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    let inv = 1.0 / batch.len() as f64;
    for ex in batch {
        check_features(ex.features.len(), num_features)?;
        let label = class_target(ex, num_classes)?;
        let z: Vec<f64> = (0..num_classes)
            .map(|c| dot(&wmat[c * num_features..(c + 1) * num_features], &ex.features) + bias[c])
            .collect();
        let (l, dz) = softmax_ce(&z, label);
        loss += l * inv;
        for (c, &dzc) in dz.iter().enumerate() {
            let gw = &mut grad[c * num_features..(c + 1) * num_features];
            for (g, &x) in gw.iter_mut().zip(&ex.features) {
                *g += dzc * x * inv;
            }
            grad[weight_len + c] += dzc * inv;
        }
    }
    Ok((loss, grad))
}

fn mlp_loss_grad(
    num_features: usize,
    hidden: usize,
    num_classes: usize,
    w: &[f64],
    batch: &[Example],
) -> Result<(f64, Vec<f64>)> {
    let w1_len = hidden * num_features;
    let b1_off = w1_len;
    let w2_off = b1_off + hidden;
    let b2_off = w2_off + num_classes * hidden;

    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    let inv = 1.0 / batch.len() as f64;
    for ex in batch {
        check_features(ex.features.len(), num_features)?;
        let label = class_target(ex, num_classes)?;

        // forward
        let pre: Vec<f64> = (0..hidden)
            .map(|h| {
                dot(&w[h * num_features..(h + 1) * num_features], &ex.features) + w[b1_off + h]
            })
            .collect();
        let act: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
        let z: Vec<f64> = (0..num_classes)
            .map(|c| dot(&w[w2_off + c * hidden..w2_off + (c + 1) * hidden], &act) + w[b2_off + c])
            .collect();
        let (l, dz) = softmax_ce(&z, label);
        loss += l * inv;

        // backward
        let mut dact = vec![0.0; hidden];
        for (c, &dzc) in dz.iter().enumerate() {
            let w2_row = &w[w2_off + c * hidden..w2_off + (c + 1) * hidden];
            let gw2 = &mut grad[w2_off + c * hidden..w2_off + (c + 1) * hidden];
            for h in 0..hidden {
                gw2[h] += dzc * act[h] * inv;
                dact[h] += dzc * w2_row[h];
            }
            grad[b2_off + c] += dzc * inv;
        }
        for h in 0..hidden {
            if pre[h] > 0.0 {
                let dpre = dact[h];
                let gw1 = &mut grad[h * num_features..(h + 1) * num_features];
                for (g, &x) in gw1.iter_mut().zip(&ex.features) {
                    *g += dpre * x * inv;
                }
                grad[b1_off + h] += dpre * inv;
            }
        }
    }
    Ok((loss, grad))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Power iteration for the dominant eigenvalue of a symmetric PSD matrix.
fn power_iteration(a: &[f64], d: usize) -> f64 {
    let mut gen = SplitMix64::new(0x78D4_6E1F_0A52_93C1);
    let mut v: Vec<f64> = (0..d)
        .map(|_| (gen.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        .collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let mut av = vec![0.0; d];
        for i in 0..d {
            av[i] = dot(&a[i * d..(i + 1) * d], &v);
        }
        let new_lambda = dot(&av, &v);
        let norm = normalize(&mut av);
        if norm == 0.0 {
            return 0.0;
        }
        v = av;
        if (new_lambda - lambda).abs() <= 1e-8 * new_lambda.abs().max(1e-8) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(d: usize) -> Vec<f64> {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        a
    }

    #[test]
    fn quadratic_gradient_vanishes_at_stationary_point() {
        // A = diag(2, 3), b = (2, 6) -> stationary at w = (1, 2)
        let a = vec![2.0, 0.0, 0.0, 3.0];
        let spec = ModelSpec::quadratic(a, vec![2.0, 6.0]).unwrap();
        let (_, g) = spec.loss_and_grad(&[1.0, 2.0], &[]).unwrap();
        assert!(g.iter().all(|&x| x.abs() < 1e-12), "grad = {g:?}");
    }

    #[test]
    fn quadratic_rejects_asymmetric_matrix() {
        assert!(ModelSpec::quadratic(vec![1.0, 0.5, 0.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn logistic_uniform_loss_is_log_num_classes() {
        let spec = ModelSpec::Logistic { num_features: 3, num_classes: 4 };
        let batch: Vec<Example> = (0..4)
            .map(|c| Example {
                features: vec![0.3, -0.7, c as f64],
                target: Target::Class(c),
            })
            .collect();
        let (loss, _) = spec.loss_and_grad(&vec![0.0; spec.dim()], &batch).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn least_squares_single_example() {
        let spec = ModelSpec::LeastSquares { num_features: 2 };
        let batch = vec![Example { features: vec![1.0, 2.0], target: Target::Value(3.0) }];
        // w = (1, 1): residual = 0, loss 0
        let (loss, grad) = spec.loss_and_grad(&[1.0, 1.0], &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0, 0.0]);
        // w = (0, 0): residual = -3, grad = -3 * x
        let (loss, grad) = spec.loss_and_grad(&[0.0, 0.0], &batch).unwrap();
        assert!((loss - 4.5).abs() < 1e-12);
        assert_eq!(grad, vec![-3.0, -6.0]);
    }

    #[test]
    fn empty_batch_is_rejected_for_data_models() {
        let spec = ModelSpec::LeastSquares { num_features: 2 };
        assert!(spec.loss_and_grad(&[0.0, 0.0], &[]).is_err());
    }

    #[test]
    fn wrong_weight_dim_is_rejected() {
        let spec = ModelSpec::Logistic { num_features: 3, num_classes: 2 };
        assert!(matches!(
            spec.loss_and_grad(&[0.0; 3], &[]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn smoothness_of_identity_and_diagonal() {
        let spec = ModelSpec::quadratic(identity(4), vec![0.0; 4]).unwrap();
        assert!((spec.smoothness_constant().unwrap() - 1.0).abs() < 1e-7);
        let spec = ModelSpec::quadratic(vec![1.0, 0.0, 0.0, 4.0], vec![0.0; 2]).unwrap();
        assert!((spec.smoothness_constant().unwrap() - 4.0).abs() < 1e-7);
    }

    #[test]
    fn smoothness_unavailable_for_data_models() {
        let spec = ModelSpec::LeastSquares { num_features: 2 };
        assert!(spec.smoothness_constant().is_none());
    }

    #[test]
    fn mlp_dim_layout() {
        let spec = ModelSpec::Mlp { num_features: 8, hidden: 6, num_classes: 3 };
        assert_eq!(spec.dim(), 6 * 9 + 3 * 7);
    }

    #[test]
    fn class_label_out_of_range() {
        let spec = ModelSpec::Logistic { num_features: 1, num_classes: 2 };
        let batch = vec![Example { features: vec![1.0], target: Target::Class(2) }];
        assert!(spec.loss_and_grad(&vec![0.0; spec.dim()], &batch).is_err());
    }
}
