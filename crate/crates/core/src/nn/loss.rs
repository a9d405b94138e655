//! Loss functions. Each returns the scalar value (as `f64`) together with
//! the gradient with respect to its tensor inputs, averaged over the batch.

use super::tensor::{Scalar, Tensor};

/// Softmax cross-entropy over logits (N, C) against class indices. The
/// gradient is `(softmax - onehot) / N`.
pub fn cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> (f64, Tensor<S>) {
    let (n, c) = (logits.shape().n(), logits.shape().c());
    assert_eq!(n, labels.len(), "one label per row");
    let inv_n = S::from_f64(1.0 / n as f64);
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    let ld = logits.data();
    let gd = grad.data_mut();
    for ni in 0..n {
        let row = &ld[ni * c..(ni + 1) * c];
        let mut max = row[0];
        for v in row {
            max = max.maximum(*v);
        }
        let mut denom = S::ZERO;
        for v in row {
            denom += (*v - max).exp();
        }
        let log_denom = denom.ln();
        let label = labels[ni];
        assert!(label < c, "label out of range");
        total += (log_denom - (row[label] - max)).to_f64();
        let g_row = &mut gd[ni * c..(ni + 1) * c];
        for (j, g) in g_row.iter_mut().enumerate() {
            let softmax = (row[j] - max).exp() / denom;
            let target = if j == label { S::ONE } else { S::ZERO };
            *g = (softmax - target) * inv_n;
        }
    }
    (total / n as f64, grad)
}

/// Margin contrastive loss over paired embeddings (N, D):
/// `A * dist^2 + (1 - A) * max(margin - dist, 0)^2`, averaged over pairs,
/// with `A = 1` for same-class pairs. The subgradient is zero at the hinge
/// kink and at zero distance.
pub fn contrastive<S: Scalar>(
    e1: &Tensor<S>,
    e2: &Tensor<S>,
    same: &[bool],
    margin: f64,
) -> (f64, Tensor<S>, Tensor<S>) {
    assert_eq!(e1.shape(), e2.shape(), "embedding shapes must agree");
    let (n, d) = (e1.shape().n(), e1.shape().c());
    assert_eq!(n, same.len(), "one pair label per row");
    let mut g1 = Tensor::zeros(e1.shape());
    let mut g2 = Tensor::zeros(e2.shape());
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let (d1, d2) = (e1.data(), e2.data());
    let (g1d, g2d) = (g1.data_mut(), g2.data_mut());
    for ni in 0..n {
        let a = &d1[ni * d..(ni + 1) * d];
        let b = &d2[ni * d..(ni + 1) * d];
        let mut sq = 0.0;
        for (av, bv) in a.iter().zip(b) {
            let diff = (*av - *bv).to_f64();
            sq += diff * diff;
        }
        let dist = sq.sqrt();
        if same[ni] {
            total += sq * inv_n;
            let k = S::from_f64(2.0 * inv_n);
            for j in 0..d {
                let diff = a[j] - b[j];
                g1d[ni * d + j] += k * diff;
                g2d[ni * d + j] -= k * diff;
            }
        } else {
            let slack = margin - dist;
            if slack > 0.0 {
                total += slack * slack * inv_n;
                if dist > 1e-12 {
                    // d(slack^2)/de1 = -2 slack * (e1 - e2)/dist
                    let k = S::from_f64(2.0 * slack / dist * inv_n);
                    for j in 0..d {
                        let diff = a[j] - b[j];
                        g1d[ni * d + j] -= k * diff;
                        g2d[ni * d + j] += k * diff;
                    }
                }
            }
        }
    }
    (total, g1, g2)
}

/// Least-squares adversarial generator loss: `0.5 * mean((D(fake) - 1)^2)`.
pub fn lsgan_generator<S: Scalar>(d_fake: &Tensor<S>) -> (f64, Tensor<S>) {
    let n = d_fake.shape().numel();
    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(d_fake.shape());
    let mut total = 0.0;
    for (g, v) in grad.data_mut().iter_mut().zip(d_fake.data()) {
        let diff = v.to_f64() - 1.0;
        total += 0.5 * diff * diff * inv_n;
        *g = S::from_f64(diff * inv_n);
    }
    (total, grad)
}

/// Least-squares adversarial discriminator loss:
/// `0.5 * mean((D(real) - 1)^2) + 0.5 * mean(D(fake)^2)`.
pub fn lsgan_discriminator<S: Scalar>(
    d_real: &Tensor<S>,
    d_fake: &Tensor<S>,
) -> (f64, Tensor<S>, Tensor<S>) {
    let nr = d_real.shape().numel();
    let nf = d_fake.shape().numel();
    let mut g_real = Tensor::zeros(d_real.shape());
    let mut g_fake = Tensor::zeros(d_fake.shape());
    let mut total = 0.0;
    for (g, v) in g_real.data_mut().iter_mut().zip(d_real.data()) {
        let diff = v.to_f64() - 1.0;
        total += 0.5 * diff * diff / nr as f64;
        *g = S::from_f64(diff / nr as f64);
    }
    for (g, v) in g_fake.data_mut().iter_mut().zip(d_fake.data()) {
        let val = v.to_f64();
        total += 0.5 * val * val / nf as f64;
        *g = S::from_f64(val / nf as f64);
    }
    (total, g_real, g_fake)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Non-saturating logistic generator loss: `mean(softplus(-D(fake)))`.
pub fn logistic_generator<S: Scalar>(d_fake: &Tensor<S>) -> (f64, Tensor<S>) {
    let n = d_fake.shape().numel();
    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(d_fake.shape());
    let mut total = 0.0;
    for (g, v) in grad.data_mut().iter_mut().zip(d_fake.data()) {
        let x = v.to_f64();
        total += softplus(-x) * inv_n;
        *g = S::from_f64(-sigmoid_f64(-x) * inv_n);
    }
    (total, grad)
}

/// Logistic discriminator loss:
/// `mean(softplus(-D(real))) + mean(softplus(D(fake)))`.
pub fn logistic_discriminator<S: Scalar>(
    d_real: &Tensor<S>,
    d_fake: &Tensor<S>,
) -> (f64, Tensor<S>, Tensor<S>) {
    let nr = d_real.shape().numel() as f64;
    let nf = d_fake.shape().numel() as f64;
    let mut g_real = Tensor::zeros(d_real.shape());
    let mut g_fake = Tensor::zeros(d_fake.shape());
    let mut total = 0.0;
    for (g, v) in g_real.data_mut().iter_mut().zip(d_real.data()) {
        let x = v.to_f64();
        total += softplus(-x) / nr;
        *g = S::from_f64(-sigmoid_f64(-x) / nr);
    }
    for (g, v) in g_fake.data_mut().iter_mut().zip(d_fake.data()) {
        let x = v.to_f64();
        total += softplus(x) / nf;
        *g = S::from_f64(sigmoid_f64(x) / nf);
    }
    (total, g_real, g_fake)
}

/// Mean absolute difference; the gradient (with respect to the second
/// argument) is the sign map over the element count, zero where equal.
pub fn cycle_l1<S: Scalar>(target: &Tensor<S>, reconstructed: &Tensor<S>) -> (f64, Tensor<S>) {
    assert_eq!(target.shape(), reconstructed.shape());
    let n = target.shape().numel();
    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(reconstructed.shape());
    let mut total = 0.0;
    for ((g, t), r) in grad
        .data_mut()
        .iter_mut()
        .zip(target.data())
        .zip(reconstructed.data())
    {
        let diff = (*r - *t).to_f64();
        total += diff.abs() * inv_n;
        *g = S::from_f64(if diff > 0.0 {
            inv_n
        } else if diff < 0.0 {
            -inv_n
        } else {
            0.0
        });
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Shape;

    #[test]
    fn cross_entropy_reference_points() {
        let logits = Tensor::<f64>::zeros(Shape::d2(1, 10));
        let (loss, _) = cross_entropy(&logits, &[3]);
        assert!((loss - 10f64.ln()).abs() < 1e-12);

        // confident correct logits drive the loss toward zero
        let mut big = Tensor::<f64>::zeros(Shape::d2(1, 4));
        big.data_mut()[2] = 50.0;
        let (loss, _) = cross_entropy(&big, &[2]);
        assert!(loss < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_brute_force_on_a_batch() {
        let logits = Tensor::<f64>::from_vec(
            Shape::d2(2, 3),
            vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5],
        );
        let labels = [2usize, 0];
        let (loss, grad) = cross_entropy(&logits, &labels);
        let mut expected = 0.0;
        for (ni, &label) in labels.iter().enumerate() {
            let row = &logits.data()[ni * 3..(ni + 1) * 3];
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            expected += -(row[label].exp() / denom).ln();
        }
        expected /= 2.0;
        assert!((loss - expected).abs() < 1e-12);
        // gradient identity: softmax - onehot, over batch
        let row = &logits.data()[0..3];
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        let softmax0 = row[0].exp() / denom;
        assert!((grad.data()[0] - softmax0 / 2.0).abs() < 1e-12);
        assert!((grad.data()[2] - (row[2].exp() / denom - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn contrastive_reference_points() {
        let a = Tensor::<f64>::from_vec(Shape::d2(1, 2), vec![0.3, -0.4]);
        let b = a.clone();
        let (same_zero, _, _) = contrastive(&a, &b, &[true], 1.0);
        assert_eq!(same_zero, 0.0);

        // different pair at full margin distance or more: no penalty
        let far = Tensor::<f64>::from_vec(Shape::d2(1, 2), vec![1.3, -0.4]);
        let (diff_far, g1, _) = contrastive(&a, &far, &[false], 1.0);
        assert_eq!(diff_far, 0.0);
        assert!(g1.data().iter().all(|v| *v == 0.0));

        // identical pair labelled different: full squared margin
        let (diff_zero, g1, g2) = contrastive(&a, &b, &[false], 1.0);
        assert_eq!(diff_zero, 1.0);
        assert!(g1.data().iter().all(|v| *v == 0.0), "subgradient 0 at dist 0");
        assert!(g2.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn contrastive_is_continuous_at_the_margin() {
        let a = Tensor::<f64>::from_vec(Shape::d2(1, 1), vec![0.0]);
        let margin = 1.0;
        let eps = 1e-7;
        let below = Tensor::<f64>::from_vec(Shape::d2(1, 1), vec![margin - eps]);
        let at = Tensor::<f64>::from_vec(Shape::d2(1, 1), vec![margin]);
        let (l_below, _, _) = contrastive(&a, &below, &[false], margin);
        let (l_at, _, _) = contrastive(&a, &at, &[false], margin);
        assert_eq!(l_at, 0.0);
        assert!(l_below < 1e-10, "hinge closes smoothly: {l_below}");
    }

    #[test]
    fn cycle_l1_reference_points() {
        let x = Tensor::<f64>::from_vec(Shape::d4(1, 3, 2, 2), vec![1.0; 12]);
        let (zero, _) = cycle_l1(&x, &x);
        assert_eq!(zero, 0.0);

        let y = Tensor::<f64>::zeros(Shape::d4(1, 3, 2, 2));
        let (one, grad) = cycle_l1(&x, &y);
        assert!((one - 1.0).abs() < 1e-12);
        assert!(grad.data().iter().all(|v| (*v + 1.0 / 12.0).abs() < 1e-12));
    }

    #[test]
    fn lsgan_minima_are_where_they_should_be() {
        let at_one = Tensor::<f64>::from_vec(Shape::d2(4, 1), vec![1.0; 4]);
        let at_zero = Tensor::<f64>::zeros(Shape::d2(4, 1));
        let (gen_loss, g) = lsgan_generator(&at_one);
        assert_eq!(gen_loss, 0.0);
        assert!(g.data().iter().all(|v| *v == 0.0));
        let (disc_loss, _, _) = lsgan_discriminator(&at_one, &at_zero);
        assert_eq!(disc_loss, 0.0);
    }
}
