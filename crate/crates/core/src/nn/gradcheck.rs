//! Central finite-difference gradient verification, run in 64-bit mode.

use super::network::Network;
use super::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error with a floor so that near-zero gradient pairs compare on
/// an absolute scale.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference gradients
/// of `loss(net(input))`, across every parameter coordinate and every input
/// coordinate. `loss` maps the network output to a scalar and its gradient.
pub fn max_grad_rel_error(
    net: &Network<f64>,
    input: &Tensor<f64>,
    loss: &dyn Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
) -> f64 {
    let mut net = net.clone();
    let tape = net.forward(input);
    let (_, out_grad) = loss(tape.output());
    let (grads, input_grad) = net.backward(&tape, out_grad);

    let h = DEFAULT_STEP;
    let mut worst: f64 = 0.0;

    let eval = |net: &Network<f64>, input: &Tensor<f64>| -> f64 {
        let tape = net.forward(input);
        loss(tape.output()).0
    };

    for pi in 0..net.params().len() {
        for i in 0..net.params()[pi].shape().numel() {
            let original = net.params()[pi].data()[i];
            net.params_mut()[pi].data_mut()[i] = original + h;
            let plus = eval(&net, input);
            net.params_mut()[pi].data_mut()[i] = original - h;
            let minus = eval(&net, input);
            net.params_mut()[pi].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(grads.by_param[pi].data()[i], numeric));
        }
    }

    let mut x = input.clone();
    for i in 0..x.shape().numel() {
        let original = x.data()[i];
        x.data_mut()[i] = original + h;
        let plus = eval(&net, &x);
        x.data_mut()[i] = original - h;
        let minus = eval(&net, &x);
        x.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(rel_err(input_grad.data()[i], numeric));
    }
    worst
}

/// Largest relative error of a standalone loss gradient with respect to one
/// tensor input, by central differences.
pub fn max_loss_rel_error(
    input: &Tensor<f64>,
    loss: &dyn Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
) -> f64 {
    let (_, analytic) = loss(input);
    let h = DEFAULT_STEP;
    let mut x = input.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.shape().numel() {
        let original = x.data()[i];
        x.data_mut()[i] = original + h;
        let plus = loss(&x).0;
        x.data_mut()[i] = original - h;
        let minus = loss(&x).0;
        x.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    worst
}

/// A fixed pseudo-random projection turning a network output into a scalar;
/// exercises every output coordinate with distinct weights.
pub fn projection_loss(seed: u64) -> impl Fn(&Tensor<f64>) -> (f64, Tensor<f64>) {
    move |y: &Tensor<f64>| {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, crate::rng::domain::PARAM_INIT, 1);
        let weights: Vec<f64> = (0..y.shape().numel())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let value = y.data().iter().zip(&weights).map(|(v, w)| v * w).sum();
        (value, Tensor::from_vec(y.shape(), weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss;
    use crate::nn::network::NetBuilder;
    use crate::nn::tensor::Shape;
    use rand::Rng;

    const TOLERANCE: f64 = 1e-4;

    fn random_input(shape: Shape, seed: u64) -> Tensor<f64> {
        let mut rng = crate::rng::stream(seed, crate::rng::domain::PARAM_INIT, 2);
        Tensor::from_vec(
            shape,
            (0..shape.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn dense_layer_gradients() {
        let net = NetBuilder::new(Shape::d2(3, 5), 10).dense(4).build::<f64>();
        let err = max_grad_rel_error(&net, &random_input(Shape::d2(3, 5), 1), &projection_loss(7));
        assert!(err <= TOLERANCE, "dense: {err}");
    }

    #[test]
    fn conv_layer_gradients_both_strides() {
        for stride in [1, 2] {
            let net = NetBuilder::new(Shape::d4(2, 2, 6, 6), 11)
                .conv(3, stride)
                .build::<f64>();
            let err = max_grad_rel_error(
                &net,
                &random_input(Shape::d4(2, 2, 6, 6), 2),
                &projection_loss(8),
            );
            assert!(err <= TOLERANCE, "conv stride {stride}: {err}");
        }
    }

    #[test]
    fn transposed_conv_gradients() {
        let net = NetBuilder::new(Shape::d4(2, 3, 4, 4), 12).conv_t(2).build::<f64>();
        let err = max_grad_rel_error(
            &net,
            &random_input(Shape::d4(2, 3, 4, 4), 3),
            &projection_loss(9),
        );
        assert!(err <= TOLERANCE, "transposed conv: {err}");
    }

    #[test]
    fn activation_and_normalization_gradients() {
        let net = NetBuilder::new(Shape::d2(4, 6), 13)
            .dense(5)
            .leaky_relu(0.2)
            .dense(4)
            .sigmoid()
            .build::<f64>();
        let err = max_grad_rel_error(&net, &random_input(Shape::d2(4, 6), 4), &projection_loss(10));
        assert!(err <= TOLERANCE, "leaky relu + sigmoid: {err}");

        let net = NetBuilder::new(Shape::d2(3, 5), 14)
            .dense(4)
            .l2_normalize()
            .build::<f64>();
        let err = max_grad_rel_error(&net, &random_input(Shape::d2(3, 5), 5), &projection_loss(11));
        assert!(err <= TOLERANCE, "l2 normalize: {err}");
    }

    #[test]
    fn skip_connection_gradients() {
        let mut b = NetBuilder::new(Shape::d4(2, 2, 4, 4), 15);
        b = b.conv(3, 1).leaky_relu(0.2);
        let skip = b.mark();
        b = b.conv(3, 2).conv_t(2).concat_from(skip).conv(2, 1).flatten();
        let net = b.build::<f64>();
        let err = max_grad_rel_error(
            &net,
            &random_input(Shape::d4(2, 2, 4, 4), 6),
            &projection_loss(12),
        );
        assert!(err <= TOLERANCE, "encoder-decoder with skip: {err}");
    }

    #[test]
    fn loss_gradients() {
        let logits = random_input(Shape::d2(3, 5), 20);
        let labels = [1usize, 4, 0];
        let err = max_loss_rel_error(&logits, &|x| loss::cross_entropy(x, &labels));
        assert!(err <= TOLERANCE, "cross entropy: {err}");

        let e2 = random_input(Shape::d2(4, 3), 21);
        let same = [true, false, true, false];
        let e1_probe = random_input(Shape::d2(4, 3), 22);
        let err = max_loss_rel_error(&e1_probe, &|x| {
            let (v, g1, _) = loss::contrastive(x, &e2, &same, 1.0);
            (v, g1)
        });
        assert!(err <= TOLERANCE, "contrastive wrt e1: {err}");
        let err = max_loss_rel_error(&e2, &|x| {
            let (v, _, g2) = loss::contrastive(&e1_probe, x, &same, 1.0);
            (v, g2)
        });
        assert!(err <= TOLERANCE, "contrastive wrt e2: {err}");

        let d_fake = random_input(Shape::d2(6, 1), 23);
        let err = max_loss_rel_error(&d_fake, &|x| loss::lsgan_generator(x));
        assert!(err <= TOLERANCE, "lsgan generator: {err}");
        let d_real = random_input(Shape::d2(6, 1), 24);
        let err = max_loss_rel_error(&d_fake, &|x| {
            let (v, _, gf) = loss::lsgan_discriminator(&d_real, x);
            (v, gf)
        });
        assert!(err <= TOLERANCE, "lsgan discriminator wrt fake: {err}");
        let err = max_loss_rel_error(&d_fake, &|x| loss::logistic_generator(x));
        assert!(err <= TOLERANCE, "logistic generator: {err}");

        let target = random_input(Shape::d4(1, 2, 3, 3), 25);
        let recon = random_input(Shape::d4(1, 2, 3, 3), 26);
        let err = max_loss_rel_error(&recon, &|x| loss::cycle_l1(&target, x));
        assert!(err <= TOLERANCE, "cycle l1: {err}");
    }
}
