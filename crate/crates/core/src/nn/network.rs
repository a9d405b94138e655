//! Static layer graphs: a chain with optional skip edges realized by
//! channel concatenation. Shapes are validated at construction; forward and
//! backward visit each layer exactly once.

use rand::Rng;
use sha2::{Digest, Sha256};

use super::layer::{self, Layer};
use super::tensor::{Scalar, Shape, Tensor};
use crate::rng::{domain, stream};

#[derive(Debug, Clone)]
pub struct Network<S: Scalar = f32> {
    pub(crate) layers: Vec<Layer>,
    pub(crate) params: Vec<Tensor<S>>,
    pub(crate) param_names: Vec<String>,
    pub(crate) input_shape: Shape,
    pub(crate) output_shapes: Vec<Shape>,
}

/// Activations recorded during a forward pass, indexed by layer.
pub struct Tape<S: Scalar = f32> {
    pub input: Tensor<S>,
    pub acts: Vec<Tensor<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn output(&self) -> &Tensor<S> {
        self.acts.last().expect("network has at least one layer")
    }
}

/// Parameter gradients aligned with the network's parameter store.
#[derive(Debug, Clone)]
pub struct Grads<S: Scalar = f32> {
    pub by_param: Vec<Tensor<S>>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_like(net: &Network<S>) -> Self {
        Grads {
            by_param: net.params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads<S>) {
        for (a, b) in self.by_param.iter_mut().zip(&other.by_param) {
            a.add_assign(b);
        }
    }
}

impl<S: Scalar> Network<S> {
    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        *self.output_shapes.last().expect("non-empty network")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.shape().numel()).sum()
    }

    /// SHA-256 over the parameter bytes (little-endian `f64` of each value);
    /// invariant under forward passes, changes on any update.
    pub fn params_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.params {
            for v in p.data() {
                hasher.update(v.to_f64().to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<T: Scalar>(&self) -> Network<T> {
        Network {
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
            param_names: self.param_names.clone(),
            input_shape: self.input_shape,
            output_shapes: self.output_shapes.clone(),
        }
    }

    pub fn forward(&self, input: &Tensor<S>) -> Tape<S> {
        assert_eq!(
            input.shape().dims()[1..],
            self.input_shape.dims()[1..],
            "input shape mismatch"
        );
        let mut acts: Vec<Tensor<S>> = Vec::with_capacity(self.layers.len());
        for (idx, l) in self.layers.iter().enumerate() {
            let x = if idx == 0 { input } else { &acts[idx - 1] };
            let y = match l {
                Layer::Dense { weight, bias } => {
                    layer::dense_forward(x, &self.params[*weight], &self.params[*bias])
                }
                Layer::Conv { weight, bias, stride } => {
                    layer::conv_forward(x, &self.params[*weight], &self.params[*bias], *stride)
                }
                Layer::ConvTranspose { weight, bias } => {
                    layer::convt_forward(x, &self.params[*weight], &self.params[*bias])
                }
                Layer::LeakyRelu { slope } => layer::leaky_relu_forward(x, *slope),
                Layer::Sigmoid => layer::sigmoid_forward(x),
                Layer::Flatten => x.reshaped(x.shape().flattened()),
                Layer::L2Normalize => layer::l2_normalize_forward(x),
                Layer::ConcatFrom { layer: src } => layer::concat_axis1(x, &acts[*src]),
            };
            acts.push(y);
        }
        Tape {
            input: input.clone(),
            acts,
        }
    }

    /// Output without keeping intermediate activations alive for the caller.
    pub fn infer(&self, input: &Tensor<S>) -> Tensor<S> {
        let mut tape = self.forward(input);
        tape.acts.pop().expect("non-empty network")
    }

    /// Reverse pass from an output gradient. Returns parameter gradients and
    /// the gradient at the network input (useful when networks compose).
    pub fn backward(&self, tape: &Tape<S>, out_grad: Tensor<S>) -> (Grads<S>, Tensor<S>) {
        let mut grads = Grads::zeros_like(self);
        let mut pending: Vec<Option<Tensor<S>>> = vec![None; self.layers.len()];
        let last = self.layers.len() - 1;
        pending[last] = Some(out_grad);

        let mut input_grad: Option<Tensor<S>> = None;
        for idx in (0..self.layers.len()).rev() {
            let g = pending[idx]
                .take()
                .expect("every layer output feeds a later layer");
            let x = if idx == 0 { &tape.input } else { &tape.acts[idx - 1] };
            let dx = match &self.layers[idx] {
                Layer::Dense { weight, bias } => {
                    let (dw, db, dx) = layer::dense_backward(x, &self.params[*weight], &g);
                    grads.by_param[*weight].add_assign(&dw);
                    grads.by_param[*bias].add_assign(&db);
                    dx
                }
                Layer::Conv { weight, bias, stride } => {
                    let (dw, db, dx) =
                        layer::conv_backward(x, &self.params[*weight], &g, *stride);
                    grads.by_param[*weight].add_assign(&dw);
                    grads.by_param[*bias].add_assign(&db);
                    dx
                }
                Layer::ConvTranspose { weight, bias } => {
                    let (dw, db, dx) = layer::convt_backward(x, &self.params[*weight], &g);
                    grads.by_param[*weight].add_assign(&dw);
                    grads.by_param[*bias].add_assign(&db);
                    dx
                }
                Layer::LeakyRelu { slope } => layer::leaky_relu_backward(x, &g, *slope),
                Layer::Sigmoid => layer::sigmoid_backward(&tape.acts[idx], &g),
                Layer::Flatten => g.reshaped(x.shape()),
                Layer::L2Normalize => layer::l2_normalize_backward(x, &g),
                Layer::ConcatFrom { layer: src } => {
                    let (dx, dskip) = layer::split_axis1(&g, x.shape());
                    accumulate(&mut pending[*src], dskip);
                    dx
                }
            };
            if idx == 0 {
                input_grad = Some(dx);
            } else {
                accumulate(&mut pending[idx - 1], dx);
            }
        }
        (grads, input_grad.expect("network has at least one layer"))
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Tensor<S>>, grad: Tensor<S>) {
    match slot {
        None => *slot = Some(grad),
        Some(existing) => existing.add_assign(&grad),
    }
}

/// Incremental network constructor. Weights are drawn uniformly in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases start at
/// zero; the draw sequence is a pure function of the seed.
pub struct NetBuilder {
    input_shape: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    param_shapes: Vec<Shape>,
    param_names: Vec<String>,
    param_fans: Vec<Option<(usize, usize)>>,
    seed: u64,
}

impl NetBuilder {
    pub fn new(input_shape: Shape, seed: u64) -> Self {
        NetBuilder {
            input_shape,
            layers: Vec::new(),
            shapes: Vec::new(),
            param_shapes: Vec::new(),
            param_names: Vec::new(),
            param_fans: Vec::new(),
            seed,
        }
    }

    fn top_shape(&self) -> Shape {
        *self.shapes.last().unwrap_or(&self.input_shape)
    }

    /// Index of the most recently added layer, for later `concat_from`.
    pub fn mark(&self) -> usize {
        self.layers.len() - 1
    }

    fn push_param(&mut self, name: String, shape: Shape, fan: Option<(usize, usize)>) -> usize {
        self.param_shapes.push(shape);
        self.param_names.push(name);
        self.param_fans.push(fan);
        self.param_shapes.len() - 1
    }

    pub fn dense(mut self, out_features: usize) -> Self {
        let s = self.top_shape();
        assert_eq!(s.rank(), 2, "dense input must be rank 2, got {s:?}");
        let in_f = s.c();
        let tag = self.layers.len();
        let weight = self.push_param(
            format!("dense{tag}.weight"),
            Shape::d2(out_features, in_f),
            Some((in_f, out_features)),
        );
        let bias = self.push_param(format!("dense{tag}.bias"), Shape::d1(out_features), None);
        self.layers.push(Layer::Dense { weight, bias });
        self.shapes.push(Shape::d2(s.n(), out_features));
        self
    }

    pub fn conv(mut self, out_channels: usize, stride: usize) -> Self {
        assert!(stride == 1 || stride == 2, "conv stride must be 1 or 2");
        let s = self.top_shape();
        assert_eq!(s.rank(), 4, "conv input must be rank 4, got {s:?}");
        let ic = s.c();
        let tag = self.layers.len();
        let weight = self.push_param(
            format!("conv{tag}.weight"),
            Shape::d4(out_channels, ic, 3, 3),
            Some((ic * 9, out_channels * 9)),
        );
        let bias = self.push_param(format!("conv{tag}.bias"), Shape::d1(out_channels), None);
        self.layers.push(Layer::Conv { weight, bias, stride });
        self.shapes.push(Shape::d4(
            s.n(),
            out_channels,
            layer::conv_out_side(s.h(), stride),
            layer::conv_out_side(s.w(), stride),
        ));
        self
    }

    pub fn conv_t(mut self, out_channels: usize) -> Self {
        let s = self.top_shape();
        assert_eq!(s.rank(), 4, "transposed conv input must be rank 4");
        let ic = s.c();
        let tag = self.layers.len();
        let weight = self.push_param(
            format!("convt{tag}.weight"),
            Shape::d4(ic, out_channels, 3, 3),
            Some((ic * 9, out_channels * 9)),
        );
        let bias = self.push_param(format!("convt{tag}.bias"), Shape::d1(out_channels), None);
        self.layers.push(Layer::ConvTranspose { weight, bias });
        self.shapes
            .push(Shape::d4(s.n(), out_channels, s.h() * 2, s.w() * 2));
        self
    }

    pub fn leaky_relu(mut self, slope: f64) -> Self {
        let s = self.top_shape();
        self.layers.push(Layer::LeakyRelu { slope });
        self.shapes.push(s);
        self
    }

    pub fn sigmoid(mut self) -> Self {
        let s = self.top_shape();
        self.layers.push(Layer::Sigmoid);
        self.shapes.push(s);
        self
    }

    pub fn flatten(mut self) -> Self {
        let s = self.top_shape();
        self.layers.push(Layer::Flatten);
        self.shapes.push(s.flattened());
        self
    }

    pub fn l2_normalize(mut self) -> Self {
        let s = self.top_shape();
        assert_eq!(s.rank(), 2, "l2 normalization applies to rank-2 activations");
        self.layers.push(Layer::L2Normalize);
        self.shapes.push(s);
        self
    }

    pub fn concat_from(mut self, src: usize) -> Self {
        let s = self.top_shape();
        let other = self.shapes[src];
        assert_eq!(s.rank(), other.rank(), "concat rank mismatch");
        assert_eq!(
            (s.h(), s.w()),
            (other.h(), other.w()),
            "concat plane mismatch: {s:?} vs {other:?}"
        );
        self.layers.push(Layer::ConcatFrom { layer: src });
        self.shapes.push(if s.rank() == 4 {
            Shape::d4(s.n(), s.c() + other.c(), s.h(), s.w())
        } else {
            Shape::d2(s.n(), s.c() + other.c())
        });
        self
    }

    pub fn build<S: Scalar>(self) -> Network<S> {
        assert!(!self.layers.is_empty(), "network needs at least one layer");
        let mut rng = stream(self.seed, domain::PARAM_INIT, 0);
        let params: Vec<Tensor<S>> = self
            .param_shapes
            .iter()
            .zip(&self.param_fans)
            .map(|(shape, fan)| match fan {
                None => Tensor::zeros(*shape),
                Some((fan_in, fan_out)) => {
                    let limit = (6.0 / (*fan_in as f64 + *fan_out as f64)).sqrt();
                    let data = (0..shape.numel())
                        .map(|_| S::from_f64(rng.gen_range(-limit..limit)))
                        .collect();
                    Tensor::from_vec(*shape, data)
                }
            })
            .collect();
        Network {
            layers: self.layers,
            params,
            param_names: self.param_names,
            input_shape: self.input_shape,
            output_shapes: self.shapes,
        }
    }
}

/// Recomputes per-layer output shapes for a layer list loaded from a
/// checkpoint; panics on inconsistency, mirroring builder validation.
pub(crate) fn infer_shapes(input_shape: Shape, layers: &[Layer], params: &[Shape]) -> Vec<Shape> {
    let mut shapes: Vec<Shape> = Vec::with_capacity(layers.len());
    let top = |shapes: &Vec<Shape>| *shapes.last().unwrap_or(&input_shape);
    for l in layers {
        let s = top(&shapes);
        let next = match l {
            Layer::Dense { weight, .. } => Shape::d2(s.n(), params[*weight].n()),
            Layer::Conv { weight, stride, .. } => Shape::d4(
                s.n(),
                params[*weight].n(),
                layer::conv_out_side(s.h(), *stride),
                layer::conv_out_side(s.w(), *stride),
            ),
            Layer::ConvTranspose { weight, .. } => {
                Shape::d4(s.n(), params[*weight].c(), s.h() * 2, s.w() * 2)
            }
            Layer::LeakyRelu { .. } | Layer::Sigmoid | Layer::L2Normalize => s,
            Layer::Flatten => s.flattened(),
            Layer::ConcatFrom { layer: src } => {
                let other = shapes[*src];
                if s.rank() == 4 {
                    Shape::d4(s.n(), s.c() + other.c(), s.h(), s.w())
                } else {
                    Shape::d2(s.n(), s.c() + other.c())
                }
            }
        };
        shapes.push(next);
    }
    shapes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_unet(seed: u64) -> Network<f64> {
        let mut b = NetBuilder::new(Shape::d4(1, 2, 8, 8), seed);
        b = b.conv(3, 1).leaky_relu(0.2);
        let skip = b.mark();
        b = b
            .conv(4, 2)
            .leaky_relu(0.2)
            .conv_t(3)
            .concat_from(skip)
            .conv(2, 1)
            .sigmoid();
        b.build()
    }

    #[test]
    fn forward_shapes_follow_the_graph() {
        let net = tiny_unet(3);
        let x = Tensor::zeros(Shape::d4(2, 2, 8, 8));
        let tape = net.forward(&x);
        assert_eq!(tape.output().shape(), Shape::d4(2, 2, 8, 8));
    }

    #[test]
    fn forward_is_deterministic_and_init_is_seeded() {
        let a = tiny_unet(3);
        let b = tiny_unet(3);
        let c = tiny_unet(4);
        assert_eq!(a.params_hash(), b.params_hash());
        assert_ne!(a.params_hash(), c.params_hash());
        let x = Tensor::from_vec(
            Shape::d4(1, 2, 8, 8),
            (0..128).map(|v| v as f64 / 128.0).collect(),
        );
        let y1 = a.infer(&x);
        let y2 = a.infer(&x);
        assert_eq!(y1, y2);
    }

    #[test]
    fn backward_produces_a_gradient_for_every_parameter() {
        let net = tiny_unet(3);
        let x = Tensor::from_vec(
            Shape::d4(1, 2, 8, 8),
            (0..128).map(|v| (v as f64).sin()).collect(),
        );
        let tape = net.forward(&x);
        let g = Tensor::from_vec(
            tape.output().shape(),
            vec![1.0; tape.output().shape().numel()],
        );
        let (grads, dx) = net.backward(&tape, g);
        assert_eq!(grads.by_param.len(), net.params().len());
        assert_eq!(dx.shape(), x.shape());
        let nonzero = grads
            .by_param
            .iter()
            .filter(|t| t.data().iter().any(|v| *v != 0.0))
            .count();
        assert_eq!(nonzero, net.params().len(), "every parameter was touched");
    }
}
