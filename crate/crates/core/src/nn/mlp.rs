//! Fixed-topology multilayer perceptron with a hand-written backward pass.
//!
//! Layer `l` stores its weight as `l{l}.w` with shape `(in, out)` and its
//! bias as `l{l}.b` with shape `(1, out)`, so a batch `X` of shape
//! `(n, in)` maps to `act(X · W + b)`.

use serde::{Deserialize, Serialize};

use super::tensor::gemm;
use super::{ParamStore, Rng, Tensor2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn with_hidden_activation(mut self, act: Activation) -> Self {
        self.hidden_activation = act;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::contract(format!(
                "all MLP dims must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(in, out)` per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamStore,
    /// `acts[0]` is the input, `acts[l + 1]` the post-activation output of layer `l`.
    cache: Option<Vec<Tensor2>>,
}

impl Mlp {
    /// Fan-in scaled uniform weights in `±1/√fan_in`, zero biases.
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        for (l, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.uniform01() - 1.0) * bound)
                .collect();
            params.insert(format!("l{l}.w"), Tensor2::from_vec(fan_in, fan_out, data)?);
            params.insert(format!("l{l}.b"), Tensor2::zeros(1, fan_out));
        }
        Ok(Self {
            spec,
            params,
            cache: None,
        })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        for (l, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            params.insert(format!("l{l}.w"), Tensor2::zeros(fan_in, fan_out));
            params.insert(format!("l{l}.b"), Tensor2::zeros(1, fan_out));
        }
        Ok(Self {
            spec,
            params,
            cache: None,
        })
    }

    /// Wraps an existing store. Entry names and shapes must match `spec`.
    pub fn from_params(spec: MlpSpec, params: ParamStore) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if params.len() != 2 * dims.len() {
            return Err(Error::contract("parameter count does not match MLP spec"));
        }
        for (l, (i, o)) in dims.into_iter().enumerate() {
            let w = params
                .get(&format!("l{l}.w"))
                .ok_or_else(|| Error::contract(format!("missing l{l}.w")))?;
            let b = params
                .get(&format!("l{l}.b"))
                .ok_or_else(|| Error::contract(format!("missing l{l}.b")))?;
            if w.value.shape() != (i, o) || b.value.shape() != (1, o) {
                return Err(Error::contract(format!("layer {l} has the wrong shape")));
            }
        }
        Ok(Self {
            spec,
            params,
            cache: None,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_input(&self, batch: &Tensor2) -> Result<()> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::contract(format!(
                "MLP expects {} input columns, got {}",
                self.spec.input_dim,
                batch.cols()
            )));
        }
        Ok(())
    }

    fn layer(&self, x: &Tensor2, l: usize) -> Tensor2 {
        let w = &self.params.at(2 * l).value;
        let b = self.params.at(2 * l + 1).value.data();
        let mut out = Tensor2::zeros(x.rows(), w.cols());
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(b);
        }
        gemm(1.0, x, false, w, false, 1.0, &mut out);
        let act = self.spec.activation(l);
        if act != Activation::Identity {
            out.map_inplace(|v| act.apply(v));
        }
        out
    }

    /// Forward pass that records activations for a later `backward`.
    pub fn forward(&mut self, batch: &Tensor2) -> Result<Tensor2> {
        self.check_input(batch)?;
        let mut acts = Vec::with_capacity(self.spec.num_layers() + 1);
        acts.push(batch.clone());
        for l in 0..self.spec.num_layers() {
            let next = self.layer(acts.last().expect("nonempty"), l);
            acts.push(next);
        }
        let out = acts.last().expect("nonempty").clone();
        self.cache = Some(acts);
        Ok(out)
    }

    /// Inference-only forward pass; leaves any cached activations untouched.
    pub fn predict(&self, batch: &Tensor2) -> Result<Tensor2> {
        self.check_input(batch)?;
        let mut x = self.layer(batch, 0);
        for l in 1..self.spec.num_layers() {
            x = self.layer(&x, l);
        }
        Ok(x)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    fn cached(&self, upstream: &Tensor2) -> Result<&Vec<Tensor2>> {
        let acts = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::contract("backward called before forward"))?;
        let out = acts.last().expect("nonempty");
        if out.shape() != upstream.shape() {
            return Err(Error::contract(format!(
                "upstream gradient {:?} does not match forward output {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        Ok(acts)
    }

    /// Backpropagates `upstream = dL/d(output)` through the cached forward
    /// pass, accumulating parameter gradients. Returns `dL/d(input)`.
    pub fn backward(&mut self, upstream: &Tensor2) -> Result<Tensor2> {
        self.cached(upstream)?;
        let acts = self.cache.take().expect("checked above");
        let dx = self.propagate(&acts, upstream);
        self.cache = Some(acts);
        Ok(dx)
    }

    /// Like `backward` but only computes `dL/d(input)`; parameter gradients
    /// are left untouched.
    pub fn input_grad(&self, upstream: &Tensor2) -> Result<Tensor2> {
        let acts = self.cached(upstream)?;
        Ok(self.propagate_ref(acts, upstream))
    }

    fn propagate_ref(&self, acts: &[Tensor2], upstream: &Tensor2) -> Tensor2 {
        let mut delta = upstream.clone();
        for l in (0..self.spec.num_layers()).rev() {
            apply_act_derivative(&mut delta, &acts[l + 1], self.spec.activation(l));
            let w = &self.params.at(2 * l).value;
            let mut dx = Tensor2::zeros(delta.rows(), w.rows());
            gemm(1.0, &delta, false, w, true, 0.0, &mut dx);
            delta = dx;
        }
        delta
    }

    fn propagate(&mut self, acts: &[Tensor2], upstream: &Tensor2) -> Tensor2 {
        let mut delta = upstream.clone();
        for l in (0..self.spec.num_layers()).rev() {
            apply_act_derivative(&mut delta, &acts[l + 1], self.spec.activation(l));
            let x = &acts[l];
            {
                let wg = &mut self.params.at_mut(2 * l).grad;
                gemm(1.0, x, true, &delta, false, 1.0, wg);
            }
            {
                let bg = self.params.at_mut(2 * l + 1).grad.data_mut();
                for r in 0..delta.rows() {
                    for (g, d) in bg.iter_mut().zip(delta.row(r)) {
                        *g += d;
                    }
                }
            }
            let w = &self.params.at(2 * l).value;
            let mut dx = Tensor2::zeros(delta.rows(), w.rows());
            gemm(1.0, &delta, false, w, true, 0.0, &mut dx);
            delta = dx;
        }
        delta
    }
}

fn apply_act_derivative(delta: &mut Tensor2, out: &Tensor2, act: Activation) {
    if act == Activation::Identity {
        return;
    }
    for (d, &y) in delta.data_mut().iter_mut().zip(out.data()) {
        *d *= act.derivative_from_output(y);
    }
}
