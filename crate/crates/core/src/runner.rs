//! Source pretraining, prior extraction and single-life deployment.
//!
//! A life resets the target environment once, then alternates acting,
//! storing the transition, one discriminator (or RND) step and one SAC step
//! over the pooled prior and online buffers until the task completes or the
//! budget runs out. Rewards are relabeled each time a minibatch is drawn, so
//! old transitions always see the current discriminator.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::envs::{scripted_demos, EnvId, EnvInstance, EnvSpec, Variant};
use crate::nn::{streams, Rng, Tensor2};
use crate::replay::{sample_batch, sample_from, take_last_k, DatasetFile, Origin, ReplayBuffer, Sampled};
use crate::sac::{pretrain_episodic, PretrainConfig, SacAgent, SacBatch, SacConfig};
use crate::shaping::{
    shaped_reward, DiscBatch, DiscConfig, Discriminator, RndConfig, RndState, ShapingMode, ShapingState,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SacFt,
    SacRnd,
    SacBc,
    SacScratch,
    SacNoOnline,
    GailS,
    GailSa,
    Qwale,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::SacFt,
        Method::SacRnd,
        Method::SacBc,
        Method::SacScratch,
        Method::SacNoOnline,
        Method::GailS,
        Method::GailSa,
        Method::Qwale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SacFt => "sac_ft",
            Method::SacRnd => "sac_rnd",
            Method::SacBc => "sac_bc",
            Method::SacScratch => "sac_scratch",
            Method::SacNoOnline => "sac_no_online",
            Method::GailS => "gail_s",
            Method::GailSa => "gail_sa",
            Method::Qwale => "qwale",
        }
    }

    pub fn shaping_mode(self) -> ShapingMode {
        match self {
            Method::SacRnd => ShapingMode::Rnd,
            Method::GailS => ShapingMode::GailS,
            Method::GailSa => ShapingMode::GailSa,
            Method::Qwale => ShapingMode::Qwale,
            _ => ShapingMode::None,
        }
    }

    /// Whether the prior dataset seeds the replay pool.
    pub fn uses_prior_data(self) -> bool {
        self != Method::SacScratch
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    RlLastK,
    Demos,
}

impl FromStr for PriorSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl_last_k" => Ok(PriorSource::RlLastK),
            "demos" => Ok(PriorSource::Demos),
            other => Err(Error::Config(format!("unknown prior source {other:?}"))),
        }
    }
}

impl fmt::Display for PriorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorSource::RlLastK => "rl_last_k",
            PriorSource::Demos => "demos",
        })
    }
}

pub const DEFAULT_BUDGET: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: Method,
    pub init_from_pretrained: bool,
    pub prior_source: PriorSource,
    pub budget: usize,
    pub seed: u64,
}

impl MethodConfig {
    /// Warm start for every method except `sac_scratch`, and never with demos.
    pub fn new(method: Method, prior_source: PriorSource, budget: usize, seed: u64) -> Self {
        Self {
            method,
            init_from_pretrained: method != Method::SacScratch && prior_source == PriorSource::RlLastK,
            prior_source,
            budget,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.init_from_pretrained && self.method == Method::SacScratch {
            return Err(Error::Config("sac_scratch cannot start from pretrained weights".into()));
        }
        if self.init_from_pretrained && self.prior_source == PriorSource::Demos {
            return Err(Error::Config(
                "demo-prior runs do not warm-start the policy and critic".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a single life needs besides the prior and the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifeConfig {
    pub sac: SacConfig,
    pub disc: DiscConfig,
    pub rnd: RndConfig,
    /// Steps collected before any network update.
    pub warmup: usize,
    /// Behavior-cloning weight used by `sac_bc`.
    pub bc_weight: f64,
    pub mixup: bool,
}

impl Default for LifeConfig {
    fn default() -> Self {
        Self {
            sac: SacConfig::default(),
            disc: DiscConfig::default(),
            rnd: RndConfig::default(),
            warmup: 1000,
            bc_weight: 1.0,
            mixup: true,
        }
    }
}

/// Prior data plus the source-trained agent, when one exists.
#[derive(Debug, Clone)]
pub struct PriorBundle {
    pub dataset: DatasetFile,
    pub pretrained: Option<SacAgent>,
    pub source: PriorSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub pretrain: PretrainConfig,
    /// Number of final pretraining transitions kept as prior data.
    pub k: usize,
    /// Demonstration count; `None` uses the environment default.
    pub demo_count: Option<usize>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            pretrain: PretrainConfig::default(),
            k: 50_000,
            demo_count: None,
        }
    }
}

impl PriorConfig {
    /// Desk-scale defaults: 60k pretraining steps for pointmass, 100k for tabletop.
    pub fn for_env(env_id: EnvId) -> Self {
        let mut c = Self::default();
        c.pretrain.steps = match env_id {
            EnvId::Pointmass => 60_000,
            EnvId::Tabletop => 100_000,
        };
        c
    }
}

/// Pretrains in the source variant and assembles the prior. With demos the
/// pretrained agent is still returned, but only as QWALE's frozen critic.
pub fn build_prior(
    env_id: EnvId,
    source: PriorSource,
    prior: &PriorConfig,
    sac: &SacConfig,
    rng: &Rng,
) -> Result<PriorBundle> {
    let spec = EnvSpec::new(env_id, Variant::Source, rng.seed());
    let pre = pretrain_episodic(&spec, &prior.pretrain, sac, rng)?;
    match source {
        PriorSource::RlLastK => Ok(PriorBundle {
            dataset: take_last_k(env_id, Variant::Source, &pre.stream, prior.k)?,
            pretrained: Some(pre.agent),
            source,
        }),
        PriorSource::Demos => demo_prior(env_id, prior.demo_count, Some(pre.agent), rng),
    }
}

/// Scripted-demo prior with an optional frozen critic taken from elsewhere.
pub fn demo_prior(
    env_id: EnvId,
    demo_count: Option<usize>,
    critic: Option<SacAgent>,
    rng: &Rng,
) -> Result<PriorBundle> {
    let spec = EnvSpec::new(env_id, Variant::Source, rng.seed());
    let n = demo_count.unwrap_or(env_id.default_demo_count());
    let demos = scripted_demos(&spec, n, &mut rng.fork(streams::DEMO))?;
    Ok(PriorBundle {
        dataset: DatasetFile::new(env_id, Variant::Source, demos.into_iter().flatten().collect())?,
        pretrained: critic,
        source: PriorSource::Demos,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub r_ext: f64,
    pub r_shaped: f64,
    pub d_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfigEcho {
    pub env_id: EnvId,
    pub method: MethodConfig,
    pub life: LifeConfig,
    pub prior_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfigEcho,
    /// Step of task completion, or the budget when the life failed.
    pub completion_step: usize,
    pub success: bool,
    pub sac_updates: u64,
    pub wall_clock_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
}

impl RunRecord {
    pub fn method(&self) -> Method {
        self.config.method.method
    }

    pub fn budget(&self) -> usize {
        self.config.method.budget
    }
}

#[derive(Debug, Clone)]
pub struct LifeOutcome {
    pub record: RunRecord,
    pub trace: Vec<TraceRow>,
    pub agent: SacAgent,
}

/// Rewards for a sampled minibatch under the current shaping.
pub fn reward_relabel(
    samples: &[Sampled<'_>],
    shaping: Option<&ShapingState>,
    rnd: Option<&RndState>,
) -> Result<Vec<f64>> {
    let mut rewards: Vec<f64> = samples.iter().map(|s| s.transition.reward).collect();
    if let Some(sh) = shaping {
        let x = sh.disc.features(samples.iter().map(|s| s.transition))?;
        for (r, d) in rewards.iter_mut().zip(sh.disc.scores(&x)?) {
            *r = shaped_reward(*r, d)?;
        }
    }
    if let Some(rnd) = rnd {
        let bonus = rnd.bonuses(samples.iter().map(|s| s.transition.obs.as_slice()))?;
        for (r, b) in rewards.iter_mut().zip(bonus) {
            *r += b;
        }
    }
    Ok(rewards)
}

fn disc_step(
    shaping: &mut ShapingState,
    prior: &ReplayBuffer,
    online: &ReplayBuffer,
    batch_rng: &mut Rng,
    mixup_rng: Option<&mut Rng>,
) -> Result<f64> {
    let batch = disc_batch(shaping, prior, online, batch_rng)?;
    shaping.disc.train_step(&batch, mixup_rng)
}

/// Half a batch of weighted prior positives against online negatives; all of
/// the online data while it is shorter than half a batch.
pub fn disc_batch(
    shaping: &ShapingState,
    prior: &ReplayBuffer,
    online: &ReplayBuffer,
    batch_rng: &mut Rng,
) -> Result<DiscBatch> {
    let half = shaping.disc.config().batch_size / 2;
    let pos = sample_from(prior, half, batch_rng)?;
    let neg = if online.len() >= half {
        sample_from(online, half, batch_rng)?
    } else {
        (0..online.len())
            .map(|i| Sampled {
                origin: Origin::Online,
                index: i,
                transition: online.get(i),
            })
            .collect()
    };
    let weights: Vec<f64> = pos.iter().map(|s| shaping.prior_weight(s.index)).collect();
    let xp = shaping.disc.features(pos.iter().map(|s| s.transition))?;
    let xn = shaping.disc.features(neg.iter().map(|s| s.transition))?;
    DiscBatch::new(&xp, &weights, &xn)
}

/// One reset-free trial in `env`.
pub fn run_single_life(
    method: &MethodConfig,
    life: &LifeConfig,
    prior: &PriorBundle,
    mut env: EnvInstance,
) -> Result<LifeOutcome> {
    method.validate()?;
    let started = Instant::now();
    let env_id = env.env_id();
    let (od, ad) = (env.obs_dim(), env.action_dim());
    let h = &prior.dataset.header;
    if h.env_id != env_id || h.obs_dim != od || h.action_dim != ad {
        return Err(Error::Config(format!(
            "prior is for {} ({}x{}), environment is {env_id} ({od}x{ad})",
            h.env_id, h.obs_dim, h.action_dim
        )));
    }
    let mode = method.method.shaping_mode();
    if mode.uses_discriminator() && prior.dataset.is_empty() {
        return Err(Error::Config(format!("{} needs nonempty prior data", method.method)));
    }
    if method.init_from_pretrained && prior.source == PriorSource::Demos {
        return Err(Error::Config("demo priors never warm-start the agent".into()));
    }

    let root = Rng::new(method.seed);
    let mut init_rng = root.fork(streams::INIT);
    let mut policy_rng = root.fork(streams::POLICY);
    let mut batch_rng = root.fork(streams::MINIBATCH);
    let mut mixup_rng = root.fork(streams::MIXUP);
    let mut shaping_rng = root.fork(streams::SHAPING);

    let mut sac = life.sac.clone();
    sac.bc_weight = if method.method == Method::SacBc { life.bc_weight } else { 0.0 };
    let mut agent = if method.init_from_pretrained {
        let mut a = prior
            .pretrained
            .clone()
            .ok_or_else(|| Error::Config(format!("{} needs a pretrained agent", method.method)))?;
        a.set_config(sac)?;
        a
    } else {
        SacAgent::new(od, ad, env_id.obs_scale(), sac, &mut init_rng)?
    };

    let mut shaping = if mode.uses_discriminator() {
        let disc = Discriminator::new(
            mode,
            env_id.obs_scale(),
            ad,
            life.disc.clone(),
            &mut init_rng.fork(streams::SHAPING),
        )?;
        Some(if mode == ShapingMode::Qwale {
            let frozen = prior
                .pretrained
                .clone()
                .ok_or_else(|| Error::Config("qwale needs a pretrained critic".into()))?;
            ShapingState::qwale(disc, frozen, &prior.dataset.records)?
        } else {
            ShapingState::gail(disc)
        })
    } else {
        None
    };
    let mut rnd = if mode == ShapingMode::Rnd {
        Some(RndState::new(env_id.obs_scale(), life.rnd.clone(), &mut init_rng.fork(streams::SHAPING))?)
    } else {
        None
    };

    let prior_buf = if method.method.uses_prior_data() {
        ReplayBuffer::from_dataset(&prior.dataset)
    } else {
        ReplayBuffer::new(0, Origin::Prior, od, ad)
    };
    let mut online = ReplayBuffer::new(method.budget, Origin::Online, od, ad);
    let learns = method.method != Method::SacNoOnline;

    let updates_before = agent.update_count();
    let mut obs = env.reset();
    let mut trace = Vec::new();
    let mut completion_step = method.budget;
    let mut success = false;
    for step in 1..=method.budget {
        let action = agent.act(&obs, false, &mut policy_rng)?;
        let res = env.step_normalized(&action)?;
        if let Some(sh) = shaping.as_mut() {
            sh.update_baseline(&obs, &action)?;
        }
        online.push(crate::replay::Transition {
            obs: obs.clone(),
            action: action.clone(),
            reward: res.reward,
            next_obs: res.next_obs.clone(),
            timestep: step as u64,
            terminal: res.task_complete,
        })?;

        if learns && step > life.warmup {
            if let Some(sh) = shaping.as_mut() {
                let mix = if life.mixup { Some(&mut mixup_rng) } else { None };
                disc_step(sh, &prior_buf, &online, &mut shaping_rng, mix)?;
            }
            if let Some(r) = rnd.as_mut() {
                let picks = sample_from(&online, r.config().batch_size, &mut shaping_rng)?;
                r.update(picks.iter().map(|s| s.transition.obs.as_slice()))?;
            }
            for _ in 0..life.sac.updates_per_step {
                let samples = sample_batch(&prior_buf, &online, life.sac.batch_size, &mut batch_rng)?;
                let mut batch = SacBatch::from_sampled(&samples)?;
                batch.reward = reward_relabel(&samples, shaping.as_ref(), rnd.as_ref())?;
                agent.sac_update(&batch, &mut batch_rng)?;
            }
        }

        let (d_score, r_shaped) = match (&shaping, &rnd) {
            (Some(sh), _) => {
                let d = sh.disc.score(&obs, &action)?;
                (d, shaped_reward(res.reward, d)?)
            }
            (None, Some(r)) => (0.0, res.reward + r.bonus(&obs)?),
            (None, None) => (0.0, res.reward),
        };
        trace.push(TraceRow {
            step,
            obs: std::mem::replace(&mut obs, res.next_obs),
            action,
            r_ext: res.reward,
            r_shaped,
            d_score,
        });
        if res.task_complete {
            completion_step = step;
            success = true;
            break;
        }
        if step % 5000 == 0 {
            log::debug!("{} seed {} step {step}", method.method, method.seed);
        }
    }
    debug_assert_eq!(env.reset_count(), 1);

    let record = RunRecord {
        config: RunConfigEcho {
            env_id,
            method: method.clone(),
            life: life.clone(),
            prior_count: prior.dataset.len(),
        },
        completion_step,
        success,
        sac_updates: agent.update_count() - updates_before,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        trace_path: None,
    };
    Ok(LifeOutcome { record, trace, agent })
}

/// Target-variant environment for a life seeded with `seed`.
pub fn target_env(env_id: EnvId, seed: u64) -> EnvInstance {
    EnvInstance::new(EnvSpec::new(env_id, Variant::Target, seed))
}

// ------------------------------------------------------------------ traces

pub fn trace_header(obs_dim: usize, action_dim: usize) -> String {
    let mut h = String::from("step");
    for i in 0..obs_dim {
        write!(h, ",obs_{i}").unwrap();
    }
    for i in 0..action_dim {
        write!(h, ",action_{i}").unwrap();
    }
    h.push_str(",r_ext,r_shaped,d_score");
    h
}

pub fn trace_to_csv(rows: &[TraceRow], obs_dim: usize, action_dim: usize) -> String {
    let mut out = trace_header(obs_dim, action_dim);
    out.push('\n');
    for r in rows {
        write!(out, "{}", r.step).unwrap();
        for v in r.obs.iter().chain(&r.action) {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{},{},{}", r.r_ext, r.r_shaped, r.d_score).unwrap();
    }
    out
}

/// Parses a trace written by `trace_to_csv`; errors name the 1-based line.
pub fn parse_trace_csv(path: &Path, text: &str) -> Result<(Vec<String>, Vec<TraceRow>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| err(1, "empty trace".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let od = header.iter().filter(|c| c.starts_with("obs_")).count();
    let ad = header.iter().filter(|c| c.starts_with("action_")).count();
    if header.first().map(String::as_str) != Some("step") || header.len() != 4 + od + ad {
        return Err(err(1, "unexpected trace header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(err(lineno, format!("expected {} fields, found {}", header.len(), cells.len())));
        }
        let step = cells[0]
            .parse::<usize>()
            .map_err(|e| err(lineno, format!("bad step: {e}")))?;
        let vals = cells[1..]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| err(lineno, format!("bad number: {e}")))?;
        rows.push(TraceRow {
            step,
            obs: vals[..od].to_vec(),
            action: vals[od..od + ad].to_vec(),
            r_ext: vals[od + ad],
            r_shaped: vals[od + ad + 1],
            d_score: vals[od + ad + 2],
        });
    }
    Ok((header, rows))
}

/// Observations of a sampled subset of prior transitions, for plotting.
pub fn prior_states(dataset: &DatasetFile, max: usize) -> Tensor2 {
    let n = dataset.len();
    let stride = (n / max.max(1)).max(1);
    let rows: Vec<&[f64]> = dataset.records.iter().step_by(stride).map(|t| t.obs.as_slice()).collect();
    if rows.is_empty() {
        return Tensor2::zeros(0, dataset.header.obs_dim);
    }
    Tensor2::from_rows(&rows).expect("uniform observation width")
}
