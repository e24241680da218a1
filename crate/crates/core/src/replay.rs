//! Transition storage, prior-dataset extraction and persistence.
//!
//! Datasets are JSON lines: one header object followed by one record per
//! transition, e.g.
//!
//! ```text
//! {"format_version":1,"env_id":"pointmass","variant":"source","obs_dim":6,"action_dim":2,"count":2}
//! {"o":[...],"a":[...],"r":0.0,"o2":[...],"t":1,"d":false}
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvId, Variant};
use crate::nn::{format_real, write_real_array, Rng};
use crate::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DATASET_EXTENSION: &str = ".slrl.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    #[serde(rename = "o")]
    pub obs: Vec<f64>,
    #[serde(rename = "a")]
    pub action: Vec<f64>,
    #[serde(rename = "r")]
    pub reward: f64,
    #[serde(rename = "o2")]
    pub next_obs: Vec<f64>,
    /// Absolute environment step index (1-based) at which this transition ended.
    #[serde(rename = "t")]
    pub timestep: u64,
    #[serde(rename = "d")]
    pub terminal: bool,
}

impl Transition {
    fn check_dims(&self, obs_dim: usize, action_dim: usize) -> std::result::Result<(), String> {
        if self.obs.len() != obs_dim || self.next_obs.len() != obs_dim {
            return Err(format!(
                "observation length {}/{} does not match obs_dim {obs_dim}",
                self.obs.len(),
                self.next_obs.len()
            ));
        }
        if self.action.len() != action_dim {
            return Err(format!(
                "action length {} does not match action_dim {action_dim}",
                self.action.len()
            ));
        }
        Ok(())
    }

    fn to_json_line(&self) -> String {
        let mut s = String::with_capacity(256);
        s.push_str("{\"o\":");
        write_real_array(&mut s, &self.obs);
        s.push_str(",\"a\":");
        write_real_array(&mut s, &self.action);
        write!(s, ",\"r\":{}", format_real(self.reward)).unwrap();
        s.push_str(",\"o2\":");
        write_real_array(&mut s, &self.next_obs);
        write!(s, ",\"t\":{},\"d\":{}}}", self.timestep, self.terminal).unwrap();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Prior,
    Online,
}

/// FIFO ring of transitions from one origin.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    origin: Origin,
    obs_dim: usize,
    action_dim: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, origin: Origin, obs_dim: usize, action_dim: usize) -> Self {
        Self {
            capacity,
            origin,
            obs_dim,
            action_dim,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
        }
    }

    /// A prior buffer holding every record of `dataset`.
    pub fn from_dataset(dataset: &DatasetFile) -> Self {
        let h = &dataset.header;
        let mut buf = Self::new(dataset.records.len().max(1), Origin::Prior, h.obs_dim, h.action_dim);
        buf.items.extend(dataset.records.iter().cloned());
        buf
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.check_dims(self.obs_dim, self.action_dim)
            .map_err(Error::Contract)?;
        if self.capacity == 0 {
            return Ok(());
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn last(&self) -> Option<&Transition> {
        self.items.back()
    }
}

/// A transition drawn by `sample_batch`, tagged with its buffer and index.
#[derive(Debug, Clone, Copy)]
pub struct Sampled<'a> {
    pub origin: Origin,
    pub index: usize,
    pub transition: &'a Transition,
}

/// `n` draws, with replacement, uniform over the concatenation of both buffers.
pub fn sample_batch<'a>(
    prior: &'a ReplayBuffer,
    online: &'a ReplayBuffer,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Sampled<'a>>> {
    let total = prior.len() + online.len();
    if total == 0 {
        return Err(Error::EmptyBuffers);
    }
    Ok((0..n)
        .map(|_| {
            let i = rng.below(total);
            if i < prior.len() {
                Sampled {
                    origin: prior.origin,
                    index: i,
                    transition: prior.get(i),
                }
            } else {
                let j = i - prior.len();
                Sampled {
                    origin: online.origin,
                    index: j,
                    transition: online.get(j),
                }
            }
        })
        .collect())
}

/// `n` draws with replacement from a single buffer.
pub fn sample_from<'a>(buffer: &'a ReplayBuffer, n: usize, rng: &mut Rng) -> Result<Vec<Sampled<'a>>> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffers);
    }
    Ok((0..n)
        .map(|_| {
            let i = rng.below(buffer.len());
            Sampled {
                origin: buffer.origin,
                index: i,
                transition: buffer.get(i),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub env_id: EnvId,
    pub variant: Variant,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub records: Vec<Transition>,
}

impl DatasetFile {
    pub fn new(env_id: EnvId, variant: Variant, records: Vec<Transition>) -> Result<Self> {
        let (obs_dim, action_dim) = (env_id.obs_dim(), env_id.action_dim());
        for (i, t) in records.iter().enumerate() {
            t.check_dims(obs_dim, action_dim)
                .map_err(|m| Error::contract(format!("record {i}: {m}")))?;
        }
        Ok(Self {
            header: DatasetHeader {
                format_version: DATASET_FORMAT_VERSION,
                env_id,
                variant,
                obs_dim,
                action_dim,
                count: records.len(),
            },
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = serde_json::to_string(&self.header)?;
        writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
        for t in &self.records {
            writeln!(w, "{}", t.to_json_line()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = reader.lines();
        let header_line = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(path, e))?,
            None => return Err(parse_err(1, "missing header".into())),
        };
        let header: DatasetHeader =
            serde_json::from_str(&header_line).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
        if header.format_version != DATASET_FORMAT_VERSION {
            return Err(parse_err(
                1,
                format!("unsupported format_version {}", header.format_version),
            ));
        }
        let mut records = Vec::with_capacity(header.count);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition =
                serde_json::from_str(&line).map_err(|e| parse_err(lineno, format!("bad record: {e}")))?;
            t.check_dims(header.obs_dim, header.action_dim)
                .map_err(|m| parse_err(lineno, m))?;
            records.push(t);
        }
        if records.len() != header.count {
            return Err(parse_err(
                records.len() + 2,
                format!("header count {} but {} records", header.count, records.len()),
            ));
        }
        Ok(Self { header, records })
    }
}

/// The final `k` transitions of `stream`, order preserved.
pub fn take_last_k(
    env_id: EnvId,
    variant: Variant,
    stream: &[Transition],
    k: usize,
) -> Result<DatasetFile> {
    if stream.len() < k {
        return Err(Error::ShortStream {
            have: stream.len(),
            want: k,
        });
    }
    DatasetFile::new(env_id, variant, stream[stream.len() - k..].to_vec())
}
