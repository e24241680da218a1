//! Native sparse-reward environments with source/target novelty switches.
//!
//! * `pointmass`: 2-D delta-controlled point that must reach `(100, 0)`. The
//!   target variant adds wind (`y += U(0.8, 0.9)`, `x -= 0.2` per step).
//! * `tabletop`: gripper that carries a mug to a goal coaster. The target
//!   variant moves the mug start to `(2.7, ±1.5)` plus jitter and restricts
//!   goals to the two far-left coasters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::Rng;
use crate::replay::Transition;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Pointmass,
    Tabletop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Source,
    Target,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Pointmass => "pointmass",
            EnvId::Tabletop => "tabletop",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvId::Pointmass => 6,
            EnvId::Tabletop => 7,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvId::Pointmass => 2,
            EnvId::Tabletop => 3,
        }
    }

    /// Env-unit magnitude of a unit agent action, per component.
    pub fn action_scale(self) -> &'static [f64] {
        match self {
            EnvId::Pointmass => &[1.0, 1.0],
            EnvId::Tabletop => &[TABLETOP_MAX_DELTA, TABLETOP_MAX_DELTA, 1.0],
        }
    }

    /// Per-coordinate divisor that brings observations to roughly unit scale
    /// before they enter a network.
    pub fn obs_scale(self) -> Vec<f64> {
        match self {
            EnvId::Pointmass => vec![100.0, 100.0, 1.0, 1.0, 100.0, 100.0],
            EnvId::Tabletop => vec![1.0; 7],
        }
    }

    /// Number of scripted demonstrations used as demo prior data.
    pub fn default_demo_count(self) -> usize {
        match self {
            EnvId::Pointmass => 3,
            EnvId::Tabletop => 10,
        }
    }

    /// Two observation coordinates used for visitation plots
    /// (agent position for pointmass, mug position for tabletop).
    pub fn projection_indices(self) -> (usize, usize) {
        match self {
            EnvId::Pointmass => (0, 1),
            EnvId::Tabletop => (2, 3),
        }
    }
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Source => "source",
            Variant::Target => "target",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointmass" => Ok(EnvId::Pointmass),
            "tabletop" => Ok(EnvId::Tabletop),
            other => Err(Error::Config(format!("unknown env id {other:?}"))),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Variant::Source),
            "target" => Ok(Variant::Target),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: EnvId,
    pub variant: Variant,
    pub seed: u64,
}

impl EnvSpec {
    pub fn new(env_id: EnvId, variant: Variant, seed: u64) -> Self {
        Self {
            env_id,
            variant,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub task_complete: bool,
}

// ---------------------------------------------------------------- pointmass

pub const POINTMASS_X_BOUND: f64 = 100.0;
pub const POINTMASS_Y_BOUND: f64 = 200.0;
pub const POINTMASS_GOAL: [f64; 2] = [100.0, 0.0];
pub const POINTMASS_SUCCESS_RADIUS: f64 = 2.0;
pub const WIND_Y_RANGE: (f64, f64) = (0.8, 0.9);
pub const WIND_X_DRIFT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointmassState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub goal: [f64; 2],
}

impl PointmassState {
    pub fn initial() -> Self {
        Self {
            pos: [0.0, 0.0],
            vel: [0.0, 0.0],
            goal: POINTMASS_GOAL,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.goal[0],
            self.goal[1],
        ]
    }

    pub fn is_success(&self) -> bool {
        dist(self.pos, self.goal) < POINTMASS_SUCCESS_RADIUS
    }
}

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Order of operations: action clip, integrate, wind, boundary clip, reward.
pub fn pointmass_step(
    state: &mut PointmassState,
    action: &[f64],
    wind: bool,
    rng: &mut Rng,
) -> StepResult {
    let old = state.pos;
    let dx = action[0].clamp(-1.0, 1.0);
    let dy = action[1].clamp(-1.0, 1.0);
    let mut x = old[0] + dx;
    let mut y = old[1] + dy;
    if wind {
        let gust = rng
            .uniform(WIND_Y_RANGE.0, WIND_Y_RANGE.1)
            .expect("constant wind range");
        y += gust;
        x -= WIND_X_DRIFT;
    }
    x = x.clamp(-POINTMASS_X_BOUND, POINTMASS_X_BOUND);
    y = y.clamp(-POINTMASS_Y_BOUND, POINTMASS_Y_BOUND);
    state.pos = [x, y];
    state.vel = [x - old[0], y - old[1]];
    let task_complete = state.is_success();
    StepResult {
        next_obs: state.observation(),
        reward: if task_complete { 1.0 } else { 0.0 },
        task_complete,
    }
}

// ----------------------------------------------------------------- tabletop

pub const TABLE_BOUND: f64 = 2.8;
pub const TABLETOP_MAX_DELTA: f64 = 0.2;
pub const ATTACH_RADIUS: f64 = 0.2;
pub const TABLETOP_SUCCESS_RADIUS: f64 = 0.15;
pub const SOURCE_MUG_START: [f64; 2] = [2.5, 0.0];
pub const GRIPPER_START: [f64; 2] = [0.0, 0.0];
pub const SOURCE_GOALS: [[f64; 2]; 4] = [[-2.5, -1.0], [-2.5, 1.0], [0.0, 2.0], [0.0, -2.0]];
pub const TARGET_GOALS: [[f64; 2]; 2] = [[-2.5, -1.0], [-2.5, 1.0]];
pub const TARGET_MUG_X: f64 = 2.7;
pub const TARGET_MUG_Y: f64 = 1.5;
pub const TARGET_MUG_JITTER: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabletopState {
    pub gripper: [f64; 2],
    pub mug: [f64; 2],
    pub attached: bool,
    pub goal: [f64; 2],
}

impl TabletopState {
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.gripper[0],
            self.gripper[1],
            self.mug[0],
            self.mug[1],
            if self.attached { 1.0 } else { 0.0 },
            self.goal[0],
            self.goal[1],
        ]
    }

    pub fn is_success(&self) -> bool {
        dist(self.mug, self.goal) < TABLETOP_SUCCESS_RADIUS
    }
}

/// `action = (dx, dy, grip)`; deltas are clipped to `±0.2`, grip to `[-1, 1]`.
pub fn tabletop_step(state: &mut TabletopState, action: &[f64]) -> StepResult {
    let dx = action[0].clamp(-TABLETOP_MAX_DELTA, TABLETOP_MAX_DELTA);
    let dy = action[1].clamp(-TABLETOP_MAX_DELTA, TABLETOP_MAX_DELTA);
    let grip = action[2].clamp(-1.0, 1.0);
    state.gripper = [
        (state.gripper[0] + dx).clamp(-TABLE_BOUND, TABLE_BOUND),
        (state.gripper[1] + dy).clamp(-TABLE_BOUND, TABLE_BOUND),
    ];
    if grip > 0.0 {
        if dist(state.gripper, state.mug) < ATTACH_RADIUS {
            state.attached = true;
        }
    } else {
        state.attached = false;
    }
    if state.attached {
        state.mug = state.gripper;
    }
    let task_complete = state.is_success();
    StepResult {
        next_obs: state.observation(),
        reward: if task_complete { 1.0 } else { 0.0 },
        task_complete,
    }
}

// --------------------------------------------------------------- instances

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvState {
    Pointmass(PointmassState),
    Tabletop(TabletopState),
}

impl EnvState {
    pub fn observation(&self) -> Vec<f64> {
        match self {
            EnvState::Pointmass(s) => s.observation(),
            EnvState::Tabletop(s) => s.observation(),
        }
    }
}

/// Samples an initial state according to the spec's env and variant.
pub fn env_reset(spec: &EnvSpec, rng: &mut Rng) -> EnvState {
    match spec.env_id {
        EnvId::Pointmass => EnvState::Pointmass(PointmassState::initial()),
        EnvId::Tabletop => {
            let state = match spec.variant {
                Variant::Source => TabletopState {
                    gripper: GRIPPER_START,
                    mug: SOURCE_MUG_START,
                    attached: false,
                    goal: SOURCE_GOALS[rng.below(SOURCE_GOALS.len())],
                },
                Variant::Target => {
                    let side = if rng.uniform01() < 0.5 { 1.0 } else { -1.0 };
                    let jx = rng
                        .uniform(-TARGET_MUG_JITTER, TARGET_MUG_JITTER)
                        .expect("constant range");
                    let jy = rng
                        .uniform(-TARGET_MUG_JITTER, TARGET_MUG_JITTER)
                        .expect("constant range");
                    TabletopState {
                        gripper: GRIPPER_START,
                        mug: [TARGET_MUG_X + jx, side * TARGET_MUG_Y + jy],
                        attached: false,
                        goal: TARGET_GOALS[rng.below(TARGET_GOALS.len())],
                    }
                }
            };
            EnvState::Tabletop(state)
        }
    }
}

/// A live environment: spec, current state and its own noise stream.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    spec: EnvSpec,
    state: EnvState,
    rng: Rng,
    initial_override: Option<EnvState>,
    resets: usize,
}

impl EnvInstance {
    pub fn new(spec: EnvSpec) -> Self {
        let rng = Rng::new(spec.seed);
        // placeholder until the first reset; drawn from a copy so the live stream is untouched
        let state = env_reset(&spec, &mut rng.clone());
        Self {
            spec,
            state,
            rng,
            initial_override: None,
            resets: 0,
        }
    }

    /// Forces every later `reset` to start from `state` (test rigging).
    pub fn with_initial_state(mut self, state: EnvState) -> Self {
        self.initial_override = Some(state);
        self
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn env_id(&self) -> EnvId {
        self.spec.env_id
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.env_id.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.spec.env_id.action_dim()
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Number of times `reset` has been called.
    pub fn reset_count(&self) -> usize {
        self.resets
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.resets += 1;
        self.state = match self.initial_override {
            Some(s) => s,
            None => env_reset(&self.spec, &mut self.rng),
        };
        self.state.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        self.state.observation()
    }

    /// Steps with an action in env units.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.action_dim() {
            return Err(Error::contract(format!(
                "{} expects {}-dim actions, got {}",
                self.spec.env_id,
                self.action_dim(),
                action.len()
            )));
        }
        let wind = self.spec.variant == Variant::Target;
        Ok(match &mut self.state {
            EnvState::Pointmass(s) => pointmass_step(s, action, wind, &mut self.rng),
            EnvState::Tabletop(s) => tabletop_step(s, action),
        })
    }

    /// Steps with an agent-space action in `[-1, 1]`, scaled to env units.
    pub fn step_normalized(&mut self, action: &[f64]) -> Result<StepResult> {
        let scaled: Vec<f64> = action
            .iter()
            .zip(self.spec.env_id.action_scale())
            .map(|(a, s)| a * s)
            .collect();
        if scaled.len() != action.len() {
            return Err(Error::contract("action dimension mismatch"));
        }
        self.step(&scaled)
    }
}

// ------------------------------------------------------------------- demos

pub const DEMO_STEP_LIMIT: usize = 10_000;

/// Scripted demonstrations in the source variant. Actions are stored in
/// normalized agent space, timesteps restart at 1 for every demo.
pub fn scripted_demos(spec: &EnvSpec, n_demos: usize, rng: &mut Rng) -> Result<Vec<Vec<Transition>>> {
    noisy_scripted_demos(spec, n_demos, DEMO_LATERAL_NOISE, rng)
}

/// Scripted demonstrations with Gaussian noise of standard deviation
/// `noise` (in units of the maximum move) added to every movement command.
pub fn noisy_scripted_demos(
    spec: &EnvSpec,
    n_demos: usize,
    noise: f64,
    rng: &mut Rng,
) -> Result<Vec<Vec<Transition>>> {
    if spec.variant != Variant::Source {
        return Err(Error::contract("scripted demos are generated in the source variant"));
    }
    let mut env = EnvInstance::new(*spec);
    let scale = spec.env_id.action_scale();
    let mut demos = Vec::with_capacity(n_demos);
    for _ in 0..n_demos {
        let mut obs = env.reset();
        let mut traj = Vec::new();
        loop {
            if traj.len() >= DEMO_STEP_LIMIT {
                return Err(Error::DemoFailed(DEMO_STEP_LIMIT));
            }
            let env_action = scripted_action(env.state(), noise, rng);
            let res = env.step(&env_action)?;
            let action: Vec<f64> = env_action
                .iter()
                .zip(scale)
                .map(|(a, s)| (a / s).clamp(-1.0, 1.0))
                .collect();
            traj.push(Transition {
                obs,
                action,
                reward: res.reward,
                next_obs: res.next_obs.clone(),
                timestep: traj.len() as u64 + 1,
                terminal: res.task_complete,
            });
            obs = res.next_obs;
            if res.task_complete {
                break;
            }
        }
        demos.push(traj);
    }
    Ok(demos)
}

pub const DEMO_LATERAL_NOISE: f64 = 0.05;

fn scripted_action(state: &EnvState, noise: f64, rng: &mut Rng) -> Vec<f64> {
    match state {
        EnvState::Pointmass(s) => {
            let dx = (s.goal[0] - s.pos[0] + noise * rng.gaussian()).clamp(-1.0, 1.0);
            let dy = (s.goal[1] - s.pos[1] + noise * rng.gaussian()).clamp(-1.0, 1.0);
            vec![dx, dy]
        }
        EnvState::Tabletop(s) => {
            let mut toward = |target: [f64; 2]| {
                let m = TABLETOP_MAX_DELTA;
                [
                    (target[0] - s.gripper[0] + noise * m * rng.gaussian()).clamp(-m, m),
                    (target[1] - s.gripper[1] + noise * m * rng.gaussian()).clamp(-m, m),
                ]
            };
            if !s.attached {
                if dist(s.gripper, s.mug) > 0.5 * ATTACH_RADIUS {
                    // approach with the gripper open
                    let d = toward(s.mug);
                    vec![d[0], d[1], -1.0]
                } else {
                    // close on the mug without moving
                    vec![0.0, 0.0, 1.0]
                }
            } else {
                let d = toward(s.goal);
                vec![d[0], d[1], 1.0]
            }
        }
    }
}
