//! Distribution-matching reward shaping.
//!
//! A discriminator `D` is trained to separate prior states (label 1) from
//! online states (label 0); the bonus `-log(1 - D(s))` then pulls the agent
//! toward the prior distribution. QWALE weights each prior positive by
//! `exp(q_norm - b)`, where `q_norm` is the frozen source critic's value
//! min-max normalized over the prior set and `b` is the normalized value of
//! the agent's most recent state-action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::{Adam, Mlp, MlpSpec, Rng, Tensor2};
use crate::replay::Transition;
use crate::sac::SacAgent;
use crate::{Error, Result};

/// Discriminator logits are clamped to `±LOGIT_CLAMP` before the sigmoid.
pub const LOGIT_CLAMP: f64 = 10.0;
/// Below this Q range the weighting is treated as uninformative.
pub const DEGENERATE_Q_RANGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    None,
    GailS,
    GailSa,
    Qwale,
    Rnd,
}

impl ShapingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapingMode::None => "none",
            ShapingMode::GailS => "gail_s",
            ShapingMode::GailSa => "gail_sa",
            ShapingMode::Qwale => "qwale",
            ShapingMode::Rnd => "rnd",
        }
    }

    pub fn uses_discriminator(self) -> bool {
        matches!(self, ShapingMode::GailS | ShapingMode::GailSa | ShapingMode::Qwale)
    }
}

impl fmt::Display for ShapingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => ShapingMode::None,
            "gail_s" => ShapingMode::GailS,
            "gail_sa" => ShapingMode::GailSa,
            "qwale" => ShapingMode::Qwale,
            "rnd" => ShapingMode::Rnd,
            other => return Err(Error::Config(format!("unknown shaping mode {other:?}"))),
        })
    }
}

// ------------------------------------------------------------- scalar maps

/// `clamp((q − q_min) / (q_max − q_min), 0, 1)`.
pub fn q_normalize(q: f64, q_min: f64, q_max: f64) -> Result<f64> {
    if !(q_max > q_min) {
        return Err(Error::DegenerateQ { q_min, q_max });
    }
    Ok(((q - q_min) / (q_max - q_min)).clamp(0.0, 1.0))
}

pub fn qwale_weight(q_norm: f64, b: f64) -> f64 {
    (q_norm - b).exp()
}

/// Clamped-logit discriminator score in `(0, 1)`.
#[inline]
pub fn disc_score(logit: f64) -> f64 {
    crate::nn::sigmoid(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
}

/// `r − log(1 − d)`.
pub fn shaped_reward(extrinsic: f64, d_score: f64) -> Result<f64> {
    if !(d_score > 0.0 && d_score < 1.0) {
        return Err(Error::contract(format!("discriminator score {d_score} outside (0, 1)")));
    }
    Ok(extrinsic - (-d_score).ln_1p())
}

/// Range of `−log(1 − D)` implied by the logit clamp.
pub fn bonus_bounds() -> (f64, f64) {
    let lo = -(-disc_score(-LOGIT_CLAMP)).ln_1p();
    let hi = -(-disc_score(LOGIT_CLAMP)).ln_1p();
    (lo, hi)
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

// ---------------------------------------------------------- discriminator

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscConfig {
    pub hidden_dims: Vec<usize>,
    pub batch_size: usize,
    pub mixup_alpha: f64,
    pub lr: f64,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![128],
            batch_size: 512,
            mixup_alpha: 1.0,
            lr: 3e-4,
        }
    }
}

/// Rows of a cross-entropy objective `−Σ c·[y log D + (1 − y) log(1 − D)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscBatch {
    pub x: Tensor2,
    pub label: Vec<f64>,
    pub coef: Vec<f64>,
    /// Rows `0..n_pos` started as positives; the rest as negatives.
    pub n_pos: usize,
}

impl DiscBatch {
    /// Positives weighted `w / N_pos`, negatives `1 / N_neg`, which makes the
    /// objective `−mean_pos(w log D) − mean_neg(log(1 − D))`.
    pub fn new(pos: &Tensor2, pos_weights: &[f64], neg: &Tensor2) -> Result<Self> {
        if pos.rows() == 0 || neg.rows() == 0 {
            return Err(Error::contract("discriminator batches must be nonempty"));
        }
        if pos_weights.len() != pos.rows() {
            return Err(Error::contract("one weight per positive row is required"));
        }
        let np = pos.rows() as f64;
        let nn = neg.rows() as f64;
        let x = vstack(pos, neg)?;
        let mut label = vec![1.0; pos.rows()];
        label.resize(x.rows(), 0.0);
        let mut coef: Vec<f64> = pos_weights.iter().map(|w| w / np).collect();
        coef.resize(x.rows(), 1.0 / nn);
        Ok(Self {
            x,
            label,
            coef,
            n_pos: pos.rows(),
        })
    }

    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }

    /// Each row is mixed with a random row of the opposite class using
    /// `λ ~ Beta(alpha, alpha)`; inputs, labels and coefficients share λ.
    pub fn mixup(&self, alpha: f64, rng: &mut Rng) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::contract("mixup alpha must be positive"));
        }
        let n = self.len();
        let n_neg = n - self.n_pos;
        let mut x = Tensor2::zeros(n, self.x.cols());
        let mut label = Vec::with_capacity(n);
        let mut coef = Vec::with_capacity(n);
        for i in 0..n {
            let j = if i < self.n_pos {
                self.n_pos + rng.below(n_neg)
            } else {
                rng.below(self.n_pos)
            };
            let lam = rng.beta(alpha)?;
            let (row, y, c) = mixup_pair(
                self.x.row(i),
                self.x.row(j),
                (self.label[i], self.label[j]),
                (self.coef[i], self.coef[j]),
                lam,
            );
            x.row_mut(i).copy_from_slice(&row);
            label.push(y);
            coef.push(c);
        }
        Ok(Self {
            x,
            label,
            coef,
            n_pos: self.n_pos,
        })
    }
}

/// Convex combination `λ·first + (1 − λ)·second` of inputs, labels and coefficients.
pub fn mixup_pair(
    a: &[f64],
    b: &[f64],
    labels: (f64, f64),
    coefs: (f64, f64),
    lam: f64,
) -> (Vec<f64>, f64, f64) {
    let mix = |p: f64, q: f64| lam * p + (1.0 - lam) * q;
    let row = a.iter().zip(b).map(|(p, q)| mix(*p, *q)).collect();
    (row, mix(labels.0, labels.1), mix(coefs.0, coefs.1))
}

fn vstack(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols() != b.cols() {
        return Err(Error::contract("row blocks differ in width"));
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor2::from_vec(a.rows() + b.rows(), a.cols(), data)
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    mode: ShapingMode,
    config: DiscConfig,
    obs_scale: Vec<f64>,
    action_dim: usize,
    net: Mlp,
}

impl Discriminator {
    /// State-only input for `gail_s`/`qwale`, state-action for `gail_sa`.
    pub fn new(
        mode: ShapingMode,
        obs_scale: Vec<f64>,
        action_dim: usize,
        config: DiscConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !mode.uses_discriminator() {
            return Err(Error::Config(format!("{mode} has no discriminator")));
        }
        if config.batch_size < 2 {
            return Err(Error::Config("discriminator batch_size must be at least 2".into()));
        }
        let input = obs_scale.len() + if mode == ShapingMode::GailSa { action_dim } else { 0 };
        let net = Mlp::new(MlpSpec::new(input, &config.hidden_dims, 1), rng)?;
        Ok(Self {
            mode,
            config,
            obs_scale,
            action_dim,
            net,
        })
    }

    pub fn mode(&self) -> ShapingMode {
        self.mode
    }

    pub fn config(&self) -> &DiscConfig {
        &self.config
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.spec().input_dim
    }

    /// Appends the network input for `(obs, action)` to `out`.
    pub fn push_features(&self, obs: &[f64], action: &[f64], out: &mut Vec<f64>) {
        out.extend(obs.iter().zip(&self.obs_scale).map(|(o, s)| o / s));
        if self.mode == ShapingMode::GailSa {
            out.extend_from_slice(&action[..self.action_dim]);
        }
    }

    pub fn features<'a>(&self, ts: impl IntoIterator<Item = &'a Transition>) -> Result<Tensor2> {
        let mut data = Vec::new();
        let mut n = 0;
        for t in ts {
            self.push_features(&t.obs, &t.action, &mut data);
            n += 1;
        }
        Tensor2::from_vec(n, self.input_dim(), data)
    }

    pub fn scores(&self, x: &Tensor2) -> Result<Vec<f64>> {
        Ok(self.net.predict(x)?.data().iter().map(|z| disc_score(*z)).collect())
    }

    /// `D(s)` (or `D(s, a)` for `gail_sa`).
    pub fn score(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mut f = Vec::with_capacity(self.input_dim());
        self.push_features(obs, action, &mut f);
        let x = Tensor2::from_vec(1, self.input_dim(), f)?;
        Ok(self.scores(&x)?[0])
    }

    /// Evaluates the objective on `batch` and accumulates its gradients.
    pub fn loss_grad(&mut self, batch: &DiscBatch) -> Result<f64> {
        let z = self.net.forward(&batch.x)?;
        let mut up = Tensor2::zeros(batch.len(), 1);
        let mut loss = 0.0;
        for i in 0..batch.len() {
            let raw = z.get(i, 0);
            let zc = raw.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
            let (y, c) = (batch.label[i], batch.coef[i]);
            // log D = −softplus(−z), log(1 − D) = −softplus(z)
            loss += c * (y * softplus(-zc) + (1.0 - y) * softplus(zc));
            if raw.abs() < LOGIT_CLAMP {
                up.set(i, 0, c * (disc_score(zc) - y));
            }
        }
        self.net.backward(&up)?;
        Ok(loss)
    }

    /// One Adam step on `batch`, with mixup when `rng` is given.
    pub fn train_step(&mut self, batch: &DiscBatch, mixup_rng: Option<&mut Rng>) -> Result<f64> {
        let loss = match mixup_rng {
            Some(rng) => {
                let mixed = batch.mixup(self.config.mixup_alpha, rng)?;
                self.loss_grad(&mixed)?
            }
            None => self.loss_grad(batch)?,
        };
        Adam::new(self.config.lr).step(self.net.params_mut());
        Ok(loss)
    }
}

// ------------------------------------------------------------ QWALE state

/// Discriminator plus, for QWALE, the frozen source critic, its Q range over
/// the prior set and the current baseline `b`.
#[derive(Debug, Clone)]
pub struct ShapingState {
    pub disc: Discriminator,
    frozen_q: Option<SacAgent>,
    q_min: f64,
    q_max: f64,
    prior_q_norm: Vec<f64>,
    degenerate: bool,
    b: f64,
}

impl ShapingState {
    /// GAIL variants: unit weights, no critic.
    pub fn gail(disc: Discriminator) -> Self {
        Self {
            disc,
            frozen_q: None,
            q_min: 0.0,
            q_max: 0.0,
            prior_q_norm: Vec::new(),
            degenerate: false,
            b: 0.0,
        }
    }

    /// Computes `min(Q1, Q2)` of `frozen` over every prior transition and
    /// fixes the normalization. A range below `DEGENERATE_Q_RANGE` falls back
    /// to unit weights.
    pub fn qwale(disc: Discriminator, frozen: SacAgent, prior: &[Transition]) -> Result<Self> {
        if prior.is_empty() {
            return Err(Error::contract("QWALE needs a nonempty prior set"));
        }
        let mut qs = Vec::with_capacity(prior.len());
        for chunk in prior.chunks(1024) {
            let obs = Tensor2::from_rows(&chunk.iter().map(|t| t.obs.as_slice()).collect::<Vec<_>>())?;
            let act = Tensor2::from_rows(&chunk.iter().map(|t| t.action.as_slice()).collect::<Vec<_>>())?;
            qs.extend(frozen.min_q(&obs, &act)?);
        }
        let q_min = qs.iter().copied().fold(f64::INFINITY, f64::min);
        let q_max = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let degenerate = !(q_max - q_min >= DEGENERATE_Q_RANGE);
        let prior_q_norm = if degenerate {
            log::warn!("prior Q range [{q_min}, {q_max}] is degenerate; using unit weights");
            vec![0.0; qs.len()]
        } else {
            qs.iter()
                .map(|q| q_normalize(*q, q_min, q_max))
                .collect::<Result<_>>()?
        };
        Ok(Self {
            disc,
            frozen_q: Some(frozen),
            q_min,
            q_max,
            prior_q_norm,
            degenerate,
            b: 0.0,
        })
    }

    pub fn mode(&self) -> ShapingMode {
        self.disc.mode()
    }

    pub fn q_range(&self) -> (f64, f64) {
        (self.q_min, self.q_max)
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn baseline(&self) -> f64 {
        self.b
    }

    pub fn prior_q_norm(&self) -> &[f64] {
        &self.prior_q_norm
    }

    /// Sets `b` to the normalized frozen-critic value of `(obs, action)`.
    pub fn update_baseline(&mut self, obs: &[f64], action: &[f64]) -> Result<()> {
        let Some(q) = &self.frozen_q else {
            return Ok(());
        };
        if self.degenerate {
            return Ok(());
        }
        let v = q.min_q(&Tensor2::row_vector(obs), &Tensor2::row_vector(action))?[0];
        self.b = q_normalize(v, self.q_min, self.q_max)?;
        Ok(())
    }

    /// Positive-class weight for prior transition `index`.
    pub fn prior_weight(&self, index: usize) -> f64 {
        if self.frozen_q.is_none() || self.degenerate {
            1.0
        } else {
            qwale_weight(self.prior_q_norm[index], self.b)
        }
    }
}

// -------------------------------------------------------------------- RND

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RndConfig {
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub bonus_scale: f64,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for RndConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256],
            feature_dim: 64,
            bonus_scale: 1.0,
            lr: 3e-4,
            batch_size: 256,
        }
    }
}

/// Random network distillation: a predictor regresses a frozen random target.
#[derive(Debug, Clone)]
pub struct RndState {
    config: RndConfig,
    obs_scale: Vec<f64>,
    target: Mlp,
    predictor: Mlp,
}

impl RndState {
    pub fn new(obs_scale: Vec<f64>, config: RndConfig, rng: &mut Rng) -> Result<Self> {
        let spec = MlpSpec::new(obs_scale.len(), &config.hidden_dims, config.feature_dim);
        let target = Mlp::new(spec.clone(), rng)?;
        let predictor = Mlp::new(spec, rng)?;
        Ok(Self {
            config,
            obs_scale,
            target,
            predictor,
        })
    }

    pub fn config(&self) -> &RndConfig {
        &self.config
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut Mlp {
        &mut self.predictor
    }

    fn inputs<'a>(&self, obs: impl IntoIterator<Item = &'a [f64]>) -> Result<Tensor2> {
        let mut data = Vec::new();
        let mut n = 0;
        for o in obs {
            data.extend(o.iter().zip(&self.obs_scale).map(|(x, s)| x / s));
            n += 1;
        }
        Tensor2::from_vec(n, self.obs_scale.len(), data)
    }

    /// `bonus_scale · mean_k (f_target − f_pred)_k²` per observation.
    pub fn bonuses<'a>(&self, obs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
        let x = self.inputs(obs)?;
        let t = self.target.predict(&x)?;
        let p = self.predictor.predict(&x)?;
        let k = t.cols() as f64;
        Ok((0..x.rows())
            .map(|i| {
                let se: f64 = t.row(i).iter().zip(p.row(i)).map(|(a, b)| (a - b).powi(2)).sum();
                self.config.bonus_scale * se / k
            })
            .collect())
    }

    pub fn bonus(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.bonuses([obs])?[0])
    }

    /// One Adam step on the mean distillation error over `obs`; returns the
    /// pre-step loss.
    pub fn update<'a>(&mut self, obs: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
        let loss = self.loss_grad(obs)?;
        Adam::new(self.config.lr).step(self.predictor.params_mut());
        Ok(loss)
    }

    /// Mean distillation error over `obs`, gradients accumulated into the
    /// predictor.
    pub fn loss_grad<'a>(&mut self, obs: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
        let x = self.inputs(obs)?;
        if x.rows() == 0 {
            return Err(Error::contract("RND update needs observations"));
        }
        let t = self.target.predict(&x)?;
        let p = self.predictor.forward(&x)?;
        let denom = (x.rows() * t.cols()) as f64;
        let mut up = Tensor2::zeros(p.rows(), p.cols());
        let mut loss = 0.0;
        for (g, (pv, tv)) in up.data_mut().iter_mut().zip(p.data().iter().zip(t.data())) {
            let d = pv - tv;
            loss += d * d / denom;
            *g = 2.0 * d / denom;
        }
        self.predictor.backward(&up)?;
        Ok(loss)
    }
}
