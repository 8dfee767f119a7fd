//! Small fully connected networks with hand-written backpropagation.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::RngStream;
use super::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One affine layer `act(x W + b)` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs and outputs kept from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl MlpParams {
    /// Layers `dims[0] → dims[1] → … → dims[last]`. Hidden layers use
    /// `hidden`, the final layer uses `output`. Weights are drawn uniformly
    /// from `±sqrt(6 / fan_in)` (relu) or `±sqrt(3 / fan_in)` otherwise.
    pub fn init(dims: &[usize], hidden: Activation, output: Activation, rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer dims {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                let gain = if act == Activation::Relu { 6.0 } else { 3.0 };
                let limit = (gain / w[0] as f64).sqrt();
                let mut layer = Dense::zeros(w[0], w[1], act);
                for x in layer.weight.as_mut_slice() {
                    *x = rng.uniform_range(-limit, limit);
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    /// Same architecture with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs(), l.activation))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::outputs));
        dims
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("mlp_forward", self.input_dim(), x.cols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weight)?;
            z.add_row_vector(&layer.bias);
            if layer.activation != Activation::Identity {
                for v in z.as_mut_slice() {
                    *v = layer.activation.apply(*v);
                }
            }
            inputs.push(current);
            current = z;
            outputs.push(current.clone());
        }
        Ok((current, MlpCache { inputs, outputs }))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("mlp_forward", self.input_dim(), x.cols()));
        }
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weight)?;
            z.add_row_vector(&layer.bias);
            if layer.activation != Activation::Identity {
                for v in z.as_mut_slice() {
                    *v = layer.activation.apply(*v);
                }
            }
            current = z;
        }
        Ok(current)
    }

    /// Gradients of a scalar loss whose derivative with respect to the
    /// network output is `grad_output`. Returns parameter gradients (same
    /// shape as `self`) and the gradient with respect to the network input.
    pub fn backward(&self, cache: &MlpCache, grad_output: &Matrix) -> Result<(MlpParams, Matrix)> {
        if cache.outputs.len() != self.layers.len() {
            return Err(Error::shape("mlp_backward cache", self.layers.len(), cache.outputs.len()));
        }
        let last = cache.outputs.last().ok_or_else(|| Error::Degenerate("empty network".into()))?;
        if grad_output.shape() != last.shape() {
            return Err(Error::shape(
                "mlp_backward grad_output",
                format!("{:?}", last.shape()),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let mut grads = self.zeros_like();
        let mut delta = grad_output.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.outputs[li];
            let inp = &cache.inputs[li];
            if inp.cols() != layer.inputs() || out.cols() != layer.outputs() {
                return Err(Error::shape("mlp_backward cache layer", layer.inputs(), inp.cols()));
            }
            if layer.activation != Activation::Identity {
                for (d, &y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= layer.activation.derivative_from_output(y);
                }
            }
            grads.layers[li].weight = inp.t_matmul(&delta)?;
            grads.layers[li].bias = delta.column_sums();
            delta = delta.matmul_t(&layer.weight)?;
        }
        Ok((grads, delta))
    }
}

impl ParamVector for MlpParams {
    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut pos = 0;
        for l in &mut self.layers {
            let w = l.weight.as_mut_slice();
            w.copy_from_slice(&src[pos..pos + w.len()]);
            pos += w.len();
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[pos..pos + nb]);
            pos += nb;
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gradcheck::finite_diff_check;

    fn single(w: Vec<f64>, rows: usize, cols: usize, b: Vec<f64>, act: Activation) -> MlpParams {
        MlpParams {
            layers: vec![Dense {
                weight: Matrix::from_vec(rows, cols, w).unwrap(),
                bias: b,
                activation: act,
            }],
        }
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = single(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0], Activation::Identity);
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_hand_evaluation() {
        let net = single(vec![2.0], 1, 1, vec![1.0], Activation::Identity);
        let x = Matrix::from_rows(&[[3.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap().0.as_slice(), &[7.0]);
    }

    #[test]
    fn relu_clips_negatives() {
        let net = single(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0], Activation::Relu);
        let x = Matrix::from_rows(&[[-1.0, 4.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap().as_slice(), &[0.0, 4.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = single(vec![1.0], 1, 1, vec![0.0], Activation::Identity);
        assert!(matches!(net.forward(&Matrix::zeros(2, 3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn scalar_gradients_by_hand() {
        // y = w·x + b, loss = y at x = 3
        let net = single(vec![0.7], 1, 1, vec![0.2], Activation::Identity);
        let x = Matrix::from_rows(&[[3.0]]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let (g, gx) = net.backward(&cache, &Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(g.layers[0].weight.as_slice(), &[3.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert!((gx.get(0, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = RngStream::new(3);
        let net = MlpParams::init(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let x = Matrix::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let (g, gx) = net.backward(&cache, &Matrix::zeros(4, 2)).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let mut rng = RngStream::new(3);
        let net = MlpParams::init(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let other = MlpParams::init(&[3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let (_, cache) = other.forward(&Matrix::zeros(2, 3)).unwrap();
        assert!(net.backward(&cache, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn two_layer_linear_matches_finite_differences() {
        let mut rng = RngStream::new(11);
        let net = MlpParams::init(&[3, 4, 2], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let x = Matrix::from_vec(5, 3, (0..15).map(|_| rng.normal()).collect()).unwrap();
        let target = Matrix::from_vec(5, 2, (0..10).map(|_| rng.normal()).collect()).unwrap();
        let theta = net.flatten();
        let err = finite_diff_check(
            |p: &[f64]| {
                let mut n = net.clone();
                n.unflatten(p);
                let (out, cache) = n.forward(&x).unwrap();
                let mut diff = out.clone();
                diff.axpy(-1.0, &target);
                let loss = 0.5 * diff.frobenius_dot(&diff);
                let (g, _) = n.backward(&cache, &diff).unwrap();
                (loss, g.flatten())
            },
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn input_gradient_matches_directional_derivative() {
        let mut rng = RngStream::new(5);
        let net = MlpParams::init(&[4, 6, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = Matrix::from_vec(1, 4, (0..4).map(|_| rng.normal()).collect()).unwrap();
        let dir: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let weights = Matrix::from_vec(1, 3, vec![0.3, -1.2, 0.8]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        let (_, gx) = net.backward(&cache, &weights).unwrap();
        let analytic: f64 = gx.as_slice().iter().zip(&dir).map(|(a, b)| a * b).sum();
        let h = 1e-6;
        let shifted = |s: f64| {
            let mut xs = x.clone();
            for (v, d) in xs.as_mut_slice().iter_mut().zip(&dir) {
                *v += s * d;
            }
            net.predict(&xs).unwrap().frobenius_dot(&weights)
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        assert!((analytic - numeric).abs() < 1e-7 * (1.0 + analytic.abs()));
    }
}
