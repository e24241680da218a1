//! Experiment configuration: a JSON file layered over defaults, then
//! `--set key=value` overrides addressed by dotted path.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use slrl_core::envs::EnvId;
use slrl_core::runner::{LifeConfig, Method, PriorConfig, PriorSource, DEFAULT_BUDGET};
use slrl_core::sac::SacConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub methods: Vec<Method>,
    /// One single life per method and seed.
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub prior_source: PriorSource,
    /// Seed of the source pretraining run shared by every life.
    pub prior_seed: u64,
    /// Pretraining length K, prior size k and demo count. A pretraining
    /// length of 0 means the environment's desk-scale default.
    pub prior: PriorConfig,
    /// SAC settings for source pretraining.
    pub pretrain_sac: SacConfig,
    pub life: LifeConfig,
    /// Directory written by `pretrain`; built in memory when absent.
    pub prior_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Sweep workers; defaults to one less than the available cores.
    pub workers: Option<usize>,
    pub write_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut prior = PriorConfig::default();
        prior.pretrain.steps = 0;
        prior.pretrain.seed_demos = DESK_SEED_DEMOS;
        let sac = SacConfig {
            hidden_dims: vec![64, 64],
            init_alpha: DESK_INIT_ALPHA,
            ..SacConfig::default()
        };
        let life = LifeConfig {
            sac: sac.clone(),
            ..LifeConfig::default()
        };
        Self {
            env: EnvId::Pointmass,
            methods: Method::ALL.to_vec(),
            seeds: (0..10).collect(),
            budget: DEFAULT_BUDGET,
            prior_source: PriorSource::RlLastK,
            prior_seed: 0,
            prior,
            pretrain_sac: sac,
            life,
            prior_dir: None,
            out_dir: PathBuf::from("runs"),
            workers: None,
            write_traces: true,
        }
    }
}

/// Noisy scripted source demos mixed into pretraining minibatches.
pub const DESK_SEED_DEMOS: usize = 20;

/// Initial SAC temperature for both phases.
pub const DESK_INIT_ALPHA: f64 = 0.01;

/// Short names accepted by `--set` for nested keys.
const ALIASES: &[(&str, &str)] = &[
    ("shaping.mixup_alpha", "life.disc.mixup_alpha"),
    ("shaping.rnd_scale", "life.rnd.bonus_scale"),
    ("K", "prior.pretrain.steps"),
    ("k", "prior.k"),
];

impl ExperimentConfig {
    /// Defaults, then the optional JSON file, then each `key=value`.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default())?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            let file: Value =
                serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", p.display()))?;
            merge(&mut value, file);
        }
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let cfg: Self = serde_json::from_value(value).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must be nonempty");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            bail!("seeds must be distinct");
        }
        if self.methods.is_empty() {
            bail!("methods must be nonempty");
        }
        if self.budget == 0 {
            bail!("budget must be at least 1");
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        self.life.sac.validate()?;
        self.pretrain_sac.validate()?;
        Ok(())
    }

    /// The prior settings with the environment default filled in for K.
    pub fn resolved_prior(&self) -> PriorConfig {
        let mut p = self.prior.clone();
        if p.pretrain.steps == 0 {
            p.pretrain.steps = PriorConfig::for_env(self.env).pretrain.steps;
        }
        p
    }

    pub fn worker_count(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get().saturating_sub(1))
                .unwrap_or(1)
                .max(1)
        })
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Applies one `dotted.key=value`; the value is read as JSON when it parses
/// and as a bare string otherwise.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects key=value, got {assignment:?}"))?;
    let key = ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, full)| full);
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut slot = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| anyhow!("{} is not a table", parts[..i].join(".")))?;
        if !obj.contains_key(*part) {
            bail!("unknown config key {key:?}");
        }
        slot = obj.get_mut(*part).expect("checked above");
    }
    *slot = value;
    Ok(())
}

/// Parses `a..b` (inclusive) or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b < a {
            bail!("empty seed range {s:?}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| anyhow!("bad seed {p:?}: {e}")))
        .collect()
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',').map(|m| m.trim().parse::<Method>().map_err(Into::into)).collect()
}
