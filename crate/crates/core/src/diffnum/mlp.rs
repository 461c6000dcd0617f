use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Matrix, Tape, Var};
use super::NumError;

/// Negative-side slope of the leaky rectifier used for hidden layers.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    LeakyRelu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu if x > 0.0 => x,
            Activation::LeakyRelu => LEAKY_SLOPE * x,
        }
    }
}

/// One affine layer: `act(x W + b)` with `W: [in x out]`, `b: [1 x out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Multilayer perceptron; hidden layers use the leaky rectifier, the output
/// layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Fan-in scaled uniform init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// biases zero.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: &[usize], out_dim: usize, rng: &mut R) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(in_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(out_dim);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weight = Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound));
                Dense {
                    weight,
                    bias: Matrix::zeros((1, w[1])),
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        Activation::LeakyRelu
                    },
                }
            })
            .collect();
        Self { layers }
    }

    /// Builds a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NumError> {
        if layers.is_empty() {
            return Err(NumError::Empty("mlp layers"));
        }
        for l in &layers {
            if l.bias.dim() != (1, l.out_dim()) {
                return Err(NumError::ShapeMismatch {
                    op: "mlp bias",
                    expected: (1, l.out_dim()),
                    actual: l.bias.dim(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NumError::ShapeMismatch {
                    op: "mlp layer chain",
                    expected: (pair[0].out_dim(), pair[1].out_dim()),
                    actual: (pair[1].in_dim(), pair[1].out_dim()),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn check_input(&self, shape: (usize, usize)) -> Result<(), NumError> {
        if shape.1 != self.in_dim() {
            return Err(NumError::ShapeMismatch {
                op: "mlp_forward",
                expected: (shape.0, self.in_dim()),
                actual: shape,
            });
        }
        Ok(())
    }

    /// Forward pass without recording (inference only).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix, NumError> {
        self.check_input(x.dim())?;
        let mut h = x.clone();
        for l in &self.layers {
            h = h.dot(&l.weight) + &l.bias;
            let act = l.activation;
            h.mapv_inplace(|v| act.apply(v));
        }
        Ok(h)
    }

    /// Registers every weight and bias on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                weight: tape.leaf(l.weight.clone()),
                bias: tape.leaf(l.bias.clone()),
                activation: l.activation,
            })
            .collect();
        BoundMlp {
            layers,
            in_dim: self.in_dim(),
        }
    }
}

#[derive(Clone, Debug)]
struct BoundLayer {
    weight: Var,
    bias: Var,
    activation: Activation,
}

/// An [`Mlp`] whose parameters live on a tape for one forward/backward pass.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<BoundLayer>,
    in_dim: usize,
}

impl BoundMlp {
    /// Parameter handles in the same order as [`Mlp::params`].
    pub fn param_vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn grads(&self, tape: &Tape) -> Vec<Matrix> {
        self.param_vars().into_iter().map(|v| tape.grad(v)).collect()
    }
}

/// Recorded forward pass of a bound network on `x: [batch x in_dim]`.
pub fn mlp_forward(tape: &mut Tape, net: &BoundMlp, x: Var) -> Result<Var, NumError> {
    let shape = tape.shape(x);
    if shape.1 != net.in_dim {
        return Err(NumError::ShapeMismatch {
            op: "mlp_forward",
            expected: (shape.0, net.in_dim),
            actual: shape,
        });
    }
    let mut h = x;
    for l in &net.layers {
        let z = tape.matmul(h, l.weight)?;
        let z = tape.add_row(z, l.bias)?;
        h = match l.activation {
            Activation::Identity => z,
            Activation::LeakyRelu => tape.leaky_relu(z, LEAKY_SLOPE),
        };
    }
    Ok(h)
}
