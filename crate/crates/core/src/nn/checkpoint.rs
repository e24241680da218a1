//! JSON checkpoints of named tensors.
//!
//! Layout: `{"format_version":1,"entries":{name:{"rows":r,"cols":c,"data":[..]}},"step_count":n}`
//! with every real written as a 17-significant-digit decimal.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;

use super::{ParamStore, Tensor2};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_real(x: f64) -> String {
    debug_assert!(x.is_finite(), "non-finite value in serialization");
    format!("{x:.16e}")
}

pub(crate) fn write_real_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_real(*v));
    }
    out.push(']');
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: IndexMap<String, Tensor2>,
    pub step_count: u64,
}

#[derive(Deserialize)]
struct RawEntry {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCheckpoint {
    format_version: u32,
    entries: IndexMap<String, RawEntry>,
    step_count: u64,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every value tensor of `store` under `prefix`.
    pub fn add_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, e) in store.iter() {
            self.entries
                .insert(format!("{prefix}{name}"), e.value.clone());
        }
    }

    pub fn add_scalar(&mut self, name: &str, value: f64) {
        self.entries
            .insert(name.to_string(), Tensor2::row_vector(&[value]));
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks entry {name}")))?;
        if t.shape() != (1, 1) {
            return Err(Error::Config(format!("checkpoint entry {name} is not a scalar")));
        }
        Ok(t.get(0, 0))
    }

    /// Copies values stored under `prefix` into `store`; every entry of the
    /// store must be present with a matching shape.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        for (name, e) in store.iter_mut() {
            let key = format!("{prefix}{name}");
            let t = self
                .entries
                .get(&key)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks entry {key}")))?;
            if t.shape() != e.value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint entry {key} has shape {:?}, expected {:?}",
                    t.shape(),
                    e.value.shape()
                )));
            }
            e.value.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = String::new();
        write!(out, "{{\"format_version\":{FORMAT_VERSION},\"entries\":{{").unwrap();
        for (i, (name, t)) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let key = serde_json::to_string(name).expect("string serialization");
            write!(out, "{key}:{{\"rows\":{},\"cols\":{},\"data\":", t.rows(), t.cols()).unwrap();
            write_real_array(&mut out, t.data());
            out.push('}');
        }
        write!(out, "}},\"step_count\":{}}}", self.step_count).unwrap();
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawCheckpoint = serde_json::from_str(text)?;
        if raw.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format_version {}",
                raw.format_version
            )));
        }
        let mut entries = IndexMap::with_capacity(raw.entries.len());
        for (name, e) in raw.entries {
            let t = Tensor2::from_vec(e.rows, e.cols, e.data)
                .map_err(|_| Error::Config(format!("checkpoint entry {name}: data length mismatch")))?;
            entries.insert(name, t);
        }
        Ok(Self {
            entries,
            step_count: raw.step_count,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl ParamStore {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.add_store("", self);
        ck.step_count = self.step_count();
        ck
    }

    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_store("", self)?;
        self.set_step_count(ck.step_count);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mlp, MlpSpec, Rng};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn reals_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = format_real(x);
            let back: f64 = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn network_checkpoint_round_trips() {
        let mut rng = Rng::new(3);
        let mlp = Mlp::new(MlpSpec::new(4, &[16, 16], 3), &mut rng).unwrap();
        let mut store = mlp.params().clone();
        store.set_step_count(17);
        let text = store.to_checkpoint().to_json();
        let ck = Checkpoint::from_json(&text).unwrap();
        let mut fresh = Mlp::zeros(MlpSpec::new(4, &[16, 16], 3)).unwrap().params().clone();
        fresh.restore(&ck).unwrap();
        assert_eq!(fresh.flat_values(), store.flat_values());
        assert_eq!(fresh.step_count(), 17);
        assert!(text.starts_with("{\"format_version\":1,\"entries\":{\"l0.w\":{\"rows\":4,\"cols\":16,\"data\":["));
    }

    #[test]
    fn rejects_unknown_version_and_bad_lengths() {
        let bad = r#"{"format_version":2,"entries":{},"step_count":0}"#;
        assert!(Checkpoint::from_json(bad).is_err());
        let bad = r#"{"format_version":1,"entries":{"a":{"rows":2,"cols":2,"data":[1.0]}},"step_count":0}"#;
        assert!(Checkpoint::from_json(bad).is_err());
    }
}
