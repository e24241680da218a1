//! Named parameter tensors with gradient and Adam moment storage.

use indexmap::IndexMap;

use super::Tensor2;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor2,
    pub grad: Tensor2,
    pub adam_m: Tensor2,
    pub adam_v: Tensor2,
}

impl ParamEntry {
    pub fn new(value: Tensor2) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor2::zeros(r, c),
            adam_m: Tensor2::zeros(r, c),
            adam_v: Tensor2::zeros(r, c),
        }
    }
}

/// Ordered name → parameter map. Insertion order is the iteration order,
/// which keeps checkpoints and optimizer sweeps deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
    step_count: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2) {
        self.entries.insert(name.into(), ParamEntry::new(value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.entries.get_mut(name)
    }

    #[inline]
    pub fn at(&self, index: usize) -> &ParamEntry {
        &self.entries[index]
    }

    #[inline]
    pub fn at_mut(&mut self, index: usize) -> &mut ParamEntry {
        &mut self.entries[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.data().len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
        }
    }

    /// Overwrites this store's values with `other`'s. Names and shapes must match.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_compatible(other)?;
        for (dst, src) in self.entries.values_mut().zip(other.entries.values()) {
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }

    /// `self ← (1 − tau) · self + tau · source`
    pub fn polyak_from(&mut self, source: &ParamStore, tau: f64) -> Result<()> {
        self.check_compatible(source)?;
        for (dst, src) in self.entries.values_mut().zip(source.entries.values()) {
            for (d, s) in dst.value.data_mut().iter_mut().zip(src.value.data()) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
        Ok(())
    }

    fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::contract("parameter stores differ in entry count"));
        }
        for ((an, a), (bn, b)) in self.entries.iter().zip(&other.entries) {
            if an != bn || a.value.shape() != b.value.shape() {
                return Err(Error::contract(format!(
                    "parameter entry mismatch: {an} {:?} vs {bn} {:?}",
                    a.value.shape(),
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }

    /// Flat copy of every parameter value, in entry order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.entries
            .values()
            .flat_map(|e| e.value.data().iter().copied())
            .collect()
    }

    /// Flat copy of every gradient, in entry order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.entries
            .values()
            .flat_map(|e| e.grad.data().iter().copied())
            .collect()
    }

    /// Per-scalar mutable access by flat index, in the order of `flat_values`.
    pub fn scalar_mut(&mut self, mut index: usize) -> &mut f64 {
        for e in self.entries.values_mut() {
            let n = e.value.data().len();
            if index < n {
                return &mut e.value.data_mut()[index];
            }
            index -= n;
        }
        panic!("scalar index out of range");
    }

    pub(crate) fn bump_step(&mut self) {
        self.step_count += 1;
    }

    pub(crate) fn set_step_count(&mut self, n: u64) {
        self.step_count = n;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self, params: &mut ParamStore) {
        adam_step(params, self.lr, self.beta1, self.beta2, self.eps);
    }
}

/// One bias-corrected Adam update over every entry. Gradients are zeroed
/// afterwards and the store's step counter advances by one.
pub fn adam_step(params: &mut ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    params.bump_step();
    let t = params.step_count as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for e in params.entries.values_mut() {
        let ParamEntry {
            value,
            grad,
            adam_m,
            adam_v,
        } = e;
        let it = value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut().iter_mut())
            .zip(adam_m.data_mut().iter_mut().zip(adam_v.data_mut().iter_mut()));
        for ((w, g), (m, v)) in it {
            *m = beta1 * *m + (1.0 - beta1) * *g;
            *v = beta2 * *v + (1.0 - beta2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
            *g = 0.0;
        }
    }
}
