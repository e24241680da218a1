//! Soft actor-critic: twin critics with polyak targets, a tanh-squashed
//! Gaussian policy, automatic entropy temperature, a periodic bootstrap cut
//! and an optional behavior-cloning term on prior samples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvInstance, EnvSpec, Variant};
use crate::nn::{streams, Adam, Checkpoint, Mlp, MlpSpec, ParamStore, Rng, Tensor2};
use crate::replay::{sample_from, Origin, ReplayBuffer, Sampled, Transition};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub gamma: f64,
    pub updates_per_step: usize,
    pub bc_weight: f64,
    /// Transitions whose timestep is a multiple of this use `target = r`.
    pub bias_period: u64,
    pub hidden_dims: Vec<usize>,
    pub init_alpha: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch_size: 256,
            tau: 0.005,
            gamma: 0.99,
            updates_per_step: 1,
            bc_weight: 0.0,
            bias_period: 100,
            hidden_dims: vec![256, 256],
            init_alpha: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("sac: {m}")));
        if self.bias_period < 1 {
            return bad("bias_period must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.init_alpha > 0.0) {
            return bad("init_alpha must be positive");
        }
        if !(self.bc_weight >= 0.0) {
            return bad("bc_weight must be non-negative");
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad("hidden_dims must be nonempty and positive");
        }
        Ok(())
    }
}

/// True when the transition ending at `timestep` gets a non-bootstrapped target.
#[inline]
pub fn is_bootstrap_cut(timestep: u64, bias_period: u64) -> bool {
    timestep % bias_period == 0
}

/// Column-stacked minibatch. Observations are raw env values; the agent
/// applies its own observation scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct SacBatch {
    pub obs: Tensor2,
    pub action: Tensor2,
    pub reward: Vec<f64>,
    pub next_obs: Tensor2,
    pub timestep: Vec<u64>,
    pub terminal: Vec<bool>,
    pub is_prior: Vec<bool>,
}

impl SacBatch {
    fn build<'a>(items: impl ExactSizeIterator<Item = (&'a Transition, bool)>) -> Result<Self> {
        let n = items.len();
        let mut obs = Vec::new();
        let mut action = Vec::new();
        let mut next_obs = Vec::new();
        let mut reward = Vec::with_capacity(n);
        let mut timestep = Vec::with_capacity(n);
        let mut terminal = Vec::with_capacity(n);
        let mut is_prior = Vec::with_capacity(n);
        let (mut od, mut ad) = (0, 0);
        for (i, (t, prior)) in items.enumerate() {
            if i == 0 {
                od = t.obs.len();
                ad = t.action.len();
            } else if t.obs.len() != od || t.next_obs.len() != od || t.action.len() != ad {
                return Err(Error::contract("ragged transitions in batch"));
            }
            obs.extend_from_slice(&t.obs);
            action.extend_from_slice(&t.action);
            next_obs.extend_from_slice(&t.next_obs);
            reward.push(t.reward);
            timestep.push(t.timestep);
            terminal.push(t.terminal);
            is_prior.push(prior);
        }
        if n == 0 {
            return Err(Error::contract("empty batch"));
        }
        Ok(Self {
            obs: Tensor2::from_vec(n, od, obs)?,
            action: Tensor2::from_vec(n, ad, action)?,
            reward,
            next_obs: Tensor2::from_vec(n, od, next_obs)?,
            timestep,
            terminal,
            is_prior,
        })
    }

    pub fn from_sampled(samples: &[Sampled<'_>]) -> Result<Self> {
        Self::build(
            samples
                .iter()
                .map(|s| (s.transition, s.origin == Origin::Prior)),
        )
    }

    pub fn from_transitions(ts: &[Transition], is_prior: bool) -> Result<Self> {
        Self::build(ts.iter().map(|t| (t, is_prior)))
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SacReport {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub policy_loss: f64,
    pub alpha_loss: f64,
    /// Batch estimate of `-E[log π(a|s)]`.
    pub entropy: f64,
    pub alpha: f64,
}

/// Reparameterized policy sample for a batch.
struct PolicySample {
    /// Raw network output, kept for the backward pass.
    mean: Tensor2,
    log_std: Tensor2,
    /// 1 where the raw log-std lies inside the clamp, else 0.
    log_std_live: Tensor2,
    noise: Tensor2,
    action: Tensor2,
    log_prob: Vec<f64>,
}

/// `log(1 - tanh(u)^2)` without cancellation.
#[inline]
fn log1m_tanh2(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

fn squash(out: &Tensor2, noise: &Tensor2, action_dim: usize) -> PolicySample {
    let n = out.rows();
    let mut mean = Tensor2::zeros(n, action_dim);
    let mut log_std = Tensor2::zeros(n, action_dim);
    let mut live = Tensor2::zeros(n, action_dim);
    let mut action = Tensor2::zeros(n, action_dim);
    let mut log_prob = vec![0.0; n];
    for i in 0..n {
        let row = out.row(i);
        for j in 0..action_dim {
            let mu = row[j];
            let raw = row[action_dim + j];
            let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let eps = noise.get(i, j);
            let u = mu + ls.exp() * eps;
            mean.set(i, j, mu);
            log_std.set(i, j, ls);
            live.set(i, j, if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) { 1.0 } else { 0.0 });
            action.set(i, j, u.tanh());
            log_prob[i] += -0.5 * eps * eps - ls - HALF_LN_2PI - log1m_tanh2(u);
        }
    }
    PolicySample {
        mean,
        log_std,
        log_std_live: live,
        noise: noise.clone(),
        action,
        log_prob,
    }
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    config: SacConfig,
    obs_dim: usize,
    action_dim: usize,
    obs_scale: Vec<f64>,
    policy: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    target1: Mlp,
    target2: Mlp,
    log_alpha: ParamStore,
    target_entropy: f64,
    updates: u64,
}

const LOG_ALPHA: &str = "log_alpha";

impl SacAgent {
    /// Fresh agent. `obs_scale` divides every observation before it enters a network.
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        obs_scale: Vec<f64>,
        config: SacConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        if obs_scale.len() != obs_dim || obs_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("obs_scale must be positive with obs_dim entries".into()));
        }
        let policy_spec = MlpSpec::new(obs_dim, &config.hidden_dims, 2 * action_dim);
        let critic_spec = MlpSpec::new(obs_dim + action_dim, &config.hidden_dims, 1);
        let policy = Mlp::new(policy_spec, rng)?;
        let critic1 = Mlp::new(critic_spec.clone(), rng)?;
        let critic2 = Mlp::new(critic_spec, rng)?;
        let target1 = critic1.clone();
        let target2 = critic2.clone();
        let mut log_alpha = ParamStore::new();
        log_alpha.insert(LOG_ALPHA, Tensor2::row_vector(&[config.init_alpha.ln()]));
        Ok(Self {
            config,
            obs_dim,
            action_dim,
            obs_scale,
            policy,
            critic1,
            critic2,
            target1,
            target2,
            log_alpha,
            target_entropy: -(action_dim as f64),
            updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    /// Replaces tunables that do not affect network shapes (e.g. `bc_weight`).
    pub fn set_config(&mut self, config: SacConfig) -> Result<()> {
        config.validate()?;
        if config.hidden_dims != self.config.hidden_dims {
            return Err(Error::Config("hidden_dims cannot change on a built agent".into()));
        }
        self.config = config;
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_scale(&self) -> &[f64] {
        &self.obs_scale
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn critic1(&self) -> &Mlp {
        &self.critic1
    }

    pub fn critic2(&self) -> &Mlp {
        &self.critic2
    }

    pub fn target1(&self) -> &Mlp {
        &self.target1
    }

    pub fn target2(&self) -> &Mlp {
        &self.target2
    }

    pub fn policy_mut(&mut self) -> &mut Mlp {
        &mut self.policy
    }

    pub fn critic1_mut(&mut self) -> &mut Mlp {
        &mut self.critic1
    }

    pub fn critic2_mut(&mut self) -> &mut Mlp {
        &mut self.critic2
    }

    pub fn target1_mut(&mut self) -> &mut Mlp {
        &mut self.target1
    }

    pub fn target2_mut(&mut self) -> &mut Mlp {
        &mut self.target2
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha.at(0).value.get(0, 0)
    }

    pub fn set_log_alpha(&mut self, v: f64) {
        self.log_alpha.at_mut(0).value.set(0, 0, v);
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha().exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    /// Number of completed `sac_update` calls.
    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn scale_obs(&self, obs: &Tensor2) -> Tensor2 {
        let mut out = obs.clone();
        for i in 0..out.rows() {
            for (x, s) in out.row_mut(i).iter_mut().zip(&self.obs_scale) {
                *x /= s;
            }
        }
        out
    }

    fn check_obs(&self, obs: &Tensor2) -> Result<()> {
        if obs.cols() != self.obs_dim {
            return Err(Error::contract(format!(
                "agent expects {}-dim observations, got {}",
                self.obs_dim,
                obs.cols()
            )));
        }
        Ok(())
    }

    /// Action in `(-1, 1)^action_dim`; the mean action when `deterministic`.
    pub fn act(&self, obs: &[f64], deterministic: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        let x = Tensor2::row_vector(obs);
        self.check_obs(&x)?;
        let out = self.policy.predict(&self.scale_obs(&x))?;
        // tanh rounds to exactly ±1 for large inputs
        let lim = 1.0 - f64::EPSILON;
        Ok((0..self.action_dim)
            .map(|j| {
                let mu = out.get(0, j);
                let u = if deterministic {
                    mu
                } else {
                    let ls = out.get(0, self.action_dim + j).clamp(LOG_STD_MIN, LOG_STD_MAX);
                    mu + ls.exp() * rng.gaussian()
                };
                u.tanh().clamp(-lim, lim)
            })
            .collect())
    }

    /// `min(Q1, Q2)` of the online critics at raw `(obs, action)` rows.
    pub fn min_q(&self, obs: &Tensor2, action: &Tensor2) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let x = self.scale_obs(obs).hcat(action)?;
        let q1 = self.critic1.predict(&x)?;
        let q2 = self.critic2.predict(&x)?;
        Ok(q1.data().iter().zip(q2.data()).map(|(a, b)| a.min(*b)).collect())
    }

    /// Bellman targets with the periodic bootstrap cut.
    pub fn td_target(&self, batch: &SacBatch, rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_obs(&batch.next_obs)?;
        let n = batch.len();
        let next = self.scale_obs(&batch.next_obs);
        let noise = rng.gaussian_tensor(n, self.action_dim);
        let sample = squash(&self.policy.predict(&next)?, &noise, self.action_dim);
        let x = next.hcat(&sample.action)?;
        let q1 = self.target1.predict(&x)?;
        let q2 = self.target2.predict(&x)?;
        let alpha = self.alpha();
        Ok((0..n)
            .map(|i| {
                let r = batch.reward[i];
                if batch.terminal[i] || is_bootstrap_cut(batch.timestep[i], self.config.bias_period) {
                    r
                } else {
                    let q = q1.get(i, 0).min(q2.get(i, 0));
                    r + self.config.gamma * (q - alpha * sample.log_prob[i])
                }
            })
            .collect())
    }

    /// One step on both critics, the policy and the temperature, then a polyak
    /// update of the target critics.
    pub fn sac_update(&mut self, batch: &SacBatch, rng: &mut Rng) -> Result<SacReport> {
        if batch.len() != self.config.batch_size {
            return Err(Error::contract(format!(
                "batch of {} but batch_size is {}",
                batch.len(),
                self.config.batch_size
            )));
        }
        self.check_obs(&batch.obs)?;
        let adam = Adam::new(self.config.lr);
        let targets = self.td_target(batch, rng)?;
        let obs = self.scale_obs(&batch.obs);
        let x = obs.hcat(&batch.action)?;
        let critic1_loss = critic_loss_grad(&mut self.critic1, &x, &targets)?;
        adam.step(self.critic1.params_mut());
        let critic2_loss = critic_loss_grad(&mut self.critic2, &x, &targets)?;
        adam.step(self.critic2.params_mut());

        let noise = rng.gaussian_tensor(batch.len(), self.action_dim);
        let alpha = self.alpha();
        let (policy_loss, log_prob) = self.policy_loss_grad(&obs, &noise, alpha, batch)?;
        adam.step(self.policy.params_mut());

        let mean_gap =
            log_prob.iter().map(|lp| lp + self.target_entropy).sum::<f64>() / log_prob.len() as f64;
        let alpha_loss = -self.log_alpha() * mean_gap;
        self.log_alpha.at_mut(0).grad.set(0, 0, -mean_gap);
        adam.step(&mut self.log_alpha);

        let tau = self.config.tau;
        self.target1.params_mut().polyak_from(self.critic1.params(), tau)?;
        self.target2.params_mut().polyak_from(self.critic2.params(), tau)?;
        self.updates += 1;
        Ok(SacReport {
            critic1_loss,
            critic2_loss,
            policy_loss,
            alpha_loss,
            entropy: -log_prob.iter().sum::<f64>() / log_prob.len() as f64,
            alpha: self.alpha(),
        })
    }

    /// Loss `mean(α log π − min Q) + bc_weight · BC` accumulated into the
    /// policy gradients, for fixed reparameterization noise. `obs` is
    /// already scaled. Returns the loss and per-row log-probabilities.
    pub fn policy_loss_grad(
        &mut self,
        obs: &Tensor2,
        noise: &Tensor2,
        alpha: f64,
        batch: &SacBatch,
    ) -> Result<(f64, Vec<f64>)> {
        let n = obs.rows();
        let ad = self.action_dim;
        let inv_n = 1.0 / n as f64;
        let out = self.policy.forward(obs)?;
        let s = squash(&out, noise, ad);
        let x = obs.hcat(&s.action)?;
        let q1 = self.critic1.forward(&x)?;
        let q2 = self.critic2.forward(&x)?;
        let mut g1 = Tensor2::zeros(n, 1);
        let mut g2 = Tensor2::zeros(n, 1);
        let mut loss = 0.0;
        for i in 0..n {
            let (a, b) = (q1.get(i, 0), q2.get(i, 0));
            if a <= b {
                g1.set(i, 0, -inv_n);
            } else {
                g2.set(i, 0, -inv_n);
            }
            loss += (alpha * s.log_prob[i] - a.min(b)) * inv_n;
        }
        let mut dx = self.critic1.input_grad(&g1)?;
        dx.add_assign(&self.critic2.input_grad(&g2)?);

        let mut up = Tensor2::zeros(n, 2 * ad);
        for i in 0..n {
            for j in 0..ad {
                let a = s.action.get(i, j);
                let sigma = s.log_std.get(i, j).exp();
                let eps = s.noise.get(i, j);
                let dl_da = dx.get(i, self.obs_dim + j);
                let dl_du = dl_da * (1.0 - a * a) + alpha * inv_n * 2.0 * a;
                let dl_dls = (dl_du * sigma * eps - alpha * inv_n) * s.log_std_live.get(i, j);
                up.set(i, j, dl_du);
                up.set(i, ad + j, dl_dls);
            }
        }

        let bc = self.config.bc_weight;
        if bc > 0.0 {
            let n_prior = batch.is_prior.iter().filter(|p| **p).count();
            if n_prior > 0 {
                let c = bc / n_prior as f64;
                for i in (0..n).filter(|&i| batch.is_prior[i]) {
                    for j in 0..ad {
                        let m = s.mean.get(i, j).tanh();
                        let diff = m - batch.action.get(i, j);
                        loss += c * diff * diff;
                        let g = up.get(i, j) + c * 2.0 * diff * (1.0 - m * m);
                        up.set(i, j, g);
                    }
                }
            }
        }
        self.policy.backward(&up)?;
        Ok((loss, s.log_prob))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.add_store("policy/", self.policy.params());
        ck.add_store("critic1/", self.critic1.params());
        ck.add_store("critic2/", self.critic2.params());
        ck.add_store("target1/", self.target1.params());
        ck.add_store("target2/", self.target2.params());
        ck.add_scalar(LOG_ALPHA, self.log_alpha());
        ck.step_count = self.updates;
        ck
    }

    /// Loads weights saved by `to_checkpoint` into an agent of the same shape.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_store("policy/", self.policy.params_mut())?;
        ck.load_store("critic1/", self.critic1.params_mut())?;
        ck.load_store("critic2/", self.critic2.params_mut())?;
        ck.load_store("target1/", self.target1.params_mut())?;
        ck.load_store("target2/", self.target2.params_mut())?;
        self.set_log_alpha(ck.scalar(LOG_ALPHA)?);
        self.updates = ck.step_count;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }
}

/// `mean((Q(x) − y)²)` with gradients accumulated into `critic`.
pub fn critic_loss_grad(critic: &mut Mlp, x: &Tensor2, targets: &[f64]) -> Result<f64> {
    let q = critic.forward(x)?;
    let n = targets.len() as f64;
    let mut grad = Tensor2::zeros(q.rows(), 1);
    let mut loss = 0.0;
    for (i, y) in targets.iter().enumerate() {
        let d = q.get(i, 0) - y;
        loss += d * d / n;
        grad.set(i, 0, 2.0 * d / n);
    }
    critic.backward(&grad)?;
    Ok(loss)
}

// ------------------------------------------------------------- pretraining

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub episode_len: usize,
    /// Environment steps before the first gradient update.
    pub warmup: usize,
    /// Scripted source demonstrations kept in a side buffer. They are not
    /// part of the returned stream.
    pub seed_demos: usize,
    /// Share of every minibatch drawn from the demo buffer when it is nonempty.
    pub demo_fraction: f64,
    /// Noise of the scripted controller, in units of the maximum move.
    pub demo_noise: f64,
    /// Behavior-cloning weight on the demo rows of each minibatch.
    pub demo_bc_weight: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 60_000,
            episode_len: 200,
            warmup: 1000,
            seed_demos: 0,
            demo_fraction: 0.25,
            demo_noise: 0.5,
            demo_bc_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeSummary {
    /// Global step at which the episode ended.
    pub end_step: usize,
    pub length: usize,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub agent: SacAgent,
    /// Every environment transition, in order; timesteps run 1..=steps.
    pub stream: Vec<Transition>,
    pub episodes: Vec<EpisodeSummary>,
}

impl Pretrained {
    /// Fraction of successful episodes among those ending after `from_step`.
    pub fn success_rate_after(&self, from_step: usize) -> f64 {
        let tail: Vec<_> = self.episodes.iter().filter(|e| e.end_step > from_step).collect();
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|e| e.success).count() as f64 / tail.len() as f64
    }
}

/// Standard episodic SAC in the source variant.
pub fn pretrain_episodic(
    spec: &EnvSpec,
    pre: &PretrainConfig,
    config: &SacConfig,
    rng: &Rng,
) -> Result<Pretrained> {
    if spec.variant != Variant::Source {
        return Err(Error::contract("pretraining runs in the source variant"));
    }
    if pre.episode_len == 0 {
        return Err(Error::Config("episode_len must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&pre.demo_fraction) {
        return Err(Error::Config("demo_fraction must lie in [0, 1]".into()));
    }
    let id = spec.env_id;
    // the periodic bootstrap cut belongs to the single life; episodes here
    // only stop bootstrapping at task completion
    let config = &SacConfig {
        bias_period: u64::MAX,
        bc_weight: if pre.seed_demos > 0 { pre.demo_bc_weight } else { 0.0 },
        ..config.clone()
    };
    let mut agent = SacAgent::new(
        id.obs_dim(),
        id.action_dim(),
        id.obs_scale(),
        config.clone(),
        &mut rng.fork(streams::INIT),
    )?;
    let mut policy_rng = rng.fork(streams::POLICY);
    let mut batch_rng = rng.fork(streams::MINIBATCH);
    let demos: Vec<Transition> = if pre.seed_demos > 0 {
        crate::envs::noisy_scripted_demos(spec, pre.seed_demos, pre.demo_noise, &mut rng.fork(streams::DEMO))?
            .into_iter()
            .flatten()
            .collect()
    } else {
        Vec::new()
    };
    let mut demo_buf = ReplayBuffer::new(demos.len().max(1), Origin::Prior, id.obs_dim(), id.action_dim());
    for t in demos {
        demo_buf.push(t)?;
    }
    let n_demo = if demo_buf.is_empty() {
        0
    } else {
        (pre.demo_fraction * config.batch_size as f64).round() as usize
    };
    let mut online = ReplayBuffer::new(pre.steps.max(1), Origin::Online, id.obs_dim(), id.action_dim());
    let mut env = EnvInstance::new(*spec);
    let mut stream = Vec::with_capacity(pre.steps);
    let mut episodes = Vec::new();
    let mut obs = env.reset();
    let mut ep_len = 0;
    for step in 1..=pre.steps {
        let action = agent.act(&obs, false, &mut policy_rng)?;
        let res = env.step_normalized(&action)?;
        let t = Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: res.reward,
            next_obs: res.next_obs.clone(),
            timestep: step as u64,
            terminal: res.task_complete,
        };
        online.push(t.clone())?;
        stream.push(t);
        obs = res.next_obs;
        ep_len += 1;
        if step > pre.warmup {
            for _ in 0..config.updates_per_step {
                let mut samples = sample_from(&online, config.batch_size - n_demo, &mut batch_rng)?;
                if n_demo > 0 {
                    samples.extend(sample_from(&demo_buf, n_demo, &mut batch_rng)?);
                }
                agent.sac_update(&SacBatch::from_sampled(&samples)?, &mut batch_rng)?;
            }
        }
        if res.task_complete || ep_len == pre.episode_len {
            episodes.push(EpisodeSummary {
                end_step: step,
                length: ep_len,
                success: res.task_complete,
            });
            if episodes.len() % 25 == 0 {
                let recent = &episodes[episodes.len() - 25..];
                log::info!(
                    "pretrain {id} step {step}: {}/25 recent episodes succeeded, alpha {:.4}",
                    recent.iter().filter(|e| e.success).count(),
                    agent.alpha()
                );
            }
            obs = env.reset();
            ep_len = 0;
        }
    }
    Ok(Pretrained {
        agent,
        stream,
        episodes,
    })
}
