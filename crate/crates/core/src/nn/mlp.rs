use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::orthogonal;
use super::params::{ParamStore, Slot};
use crate::error::{Error, Result};

/// Layer widths `[input, hidden..., output]`; ReLU between layers, identity
/// on the output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        MlpSpec { widths }
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    weight: Slot,
    bias: Slot,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Activations retained by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    /// Input to every layer (the first is the network input).
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Registers the layer tensors in `store` under `name.{i}.w` / `name.{i}.b`.
    pub fn new(store: &mut ParamStore, name: &str, spec: MlpSpec) -> Self {
        assert!(spec.num_layers() >= 1, "an MLP needs at least one layer");
        let layers = spec
            .widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                weight: store.alloc(format!("{name}.{i}.w"), w[0], w[1]),
                bias: store.alloc(format!("{name}.{i}.b"), 1, w[1]),
            })
            .collect();
        Mlp { spec, layers }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Orthogonal weights (`hidden_gain` on hidden layers, `output_gain` on
    /// the last), zero biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], hidden_gain: f64, output_gain: f64, rng: &mut R) {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let gain = if i == last { output_gain } else { hidden_gain };
            let w = orthogonal(l.weight.rows, l.weight.cols, gain, rng);
            params[l.weight.range()].copy_from_slice(&w);
            params[l.bias.range()].iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        let first = self.layers[0].weight.offset;
        let last = self.layers.last().expect("non-empty").bias;
        first..last.offset + last.len()
    }

    pub fn forward(&self, params: &[f64], input: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        if input.ncols() != self.spec.input() {
            return Err(Error::shape(format!(
                "MLP input width {} != {}",
                input.ncols(),
                self.spec.input()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut h = x.dot(&l.weight.view(params));
            h += &l.bias.view(params).row(0);
            if i != last {
                h.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut x, h));
        }
        Ok((x, Tape { inputs }))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, params: &[f64], input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward(params, input).map(|(y, _)| y)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(
        &self,
        params: &[f64],
        tape: &Tape,
        upstream: ArrayView2<f64>,
        grads: &mut [f64],
    ) -> Result<Array2<f64>> {
        let batch = tape.inputs[0].nrows();
        if upstream.dim() != (batch, self.spec.output()) {
            return Err(Error::shape(format!(
                "upstream gradient {:?} != ({batch}, {})",
                upstream.dim(),
                self.spec.output()
            )));
        }
        let mut g = upstream.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &tape.inputs[i];
            general_mat_mul(1.0, &x.t(), &g, 1.0, &mut l.weight.view_mut(grads));
            let mut db = l.bias.view_mut(grads);
            db.row_mut(0).scaled_add(1.0, &g.sum_axis(Axis(0)));
            let mut gx = g.dot(&l.weight.view(params).t());
            if i > 0 {
                // x is the ReLU output of the previous layer: zero where it was clipped.
                Zip::from(&mut gx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            g = gx;
        }
        Ok(g)
    }
}
