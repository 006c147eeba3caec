//! Desk-scale 2D continuous-control environments.
//!
//! Two task families (Push, Carry) on the workspace `[-1, 1]^2`, each with a
//! source variant and four target variants that perturb exactly one aspect:
//! friction, object size (contact radius), an obstacle, or the embodiment
//! (a fixed rotation + gain applied to actions). Source and target tasks of a
//! family share the same observation and action spaces.
//!
//! Dynamics are pure functions of `(spec, state, action)`; stochasticity only
//! enters through [`reset`].

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const OBS_DIM: usize = 6;
pub const ACT_DIM: usize = 2;

/// Agent displacement per unit action per step.
pub const AGENT_SPEED: f64 = 0.05;

pub const SUCCESS_REWARD: f64 = 1000.0;
pub const OBSTACLE_REWARD: f64 = -1000.0;
pub const STEP_REWARD: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Push,
    Carry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Source,
    NewFriction,
    NewObjectSize,
    Obstacle,
    NewEmbodiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    Sparse,
    Dense,
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Uniform sampling box; a degenerate box (min == max) is a fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl SampleBox {
    pub fn fixed(p: [f64; 2]) -> Self {
        SampleBox { min: p, max: p }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = if self.min[i] == self.max[i] {
                self.min[i]
            } else {
                rng.gen_range(self.min[i]..self.max[i])
            };
        }
        out
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub family: Family,
    pub variant: Variant,
    /// Velocity decay factor: object_vel <- (1 - friction) * object_vel.
    pub friction: f64,
    pub contact_radius: f64,
    pub success_radius: f64,
    pub obstacle_rect: Option<Rect>,
    /// Row-major 2x2 matrix applied to actions (embodiment transform).
    pub action_transform: [[f64; 2]; 2],
    pub action_gain: f64,
    pub goal_distribution: SampleBox,
    pub object_start_distribution: SampleBox,
    pub agent_start: [f64; 2],
    pub max_episode_len: usize,
    pub reward_mode: RewardMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub agent_pos: [f64; 2],
    pub object_pos: [f64; 2],
    pub object_vel: [f64; 2],
    pub goal_pos: [f64; 2],
    /// Carry family only; Push ignores it.
    pub attached: bool,
    pub step_index: usize,
}

impl EnvState {
    /// Fixed-order observation: (agent_pos, object_pos, goal_pos).
    pub fn observation(&self) -> Array1<f64> {
        Array1::from_vec(vec![
            self.agent_pos[0],
            self.agent_pos[1],
            self.object_pos[0],
            self.object_pos[1],
            self.goal_pos[0],
            self.goal_pos[1],
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub terminal: bool,
    /// Terminal only because the step limit ran out; value bootstraps should
    /// not treat the final state as absorbing in that case.
    pub truncated: bool,
    pub success: bool,
}

pub const SCENARIO_NAMES: [&str; 8] = [
    "push2new_friction",
    "push2new_object",
    "push2obstacle",
    "push2new_embodiment",
    "carry2new_friction",
    "carry2new_object",
    "carry2obstacle",
    "carry2new_embodiment",
];

impl ScenarioSpec {
    pub fn source(family: Family) -> Self {
        let (name, goal, object) = match family {
            Family::Push => (
                "push_source",
                SampleBox {
                    min: [0.3, -0.2],
                    max: [0.7, 0.2],
                },
                SampleBox::fixed([0.0, 0.0]),
            ),
            Family::Carry => (
                "carry_source",
                SampleBox::fixed([0.5, 0.0]),
                SampleBox {
                    min: [-0.2, -0.2],
                    max: [0.2, 0.2],
                },
            ),
        };
        ScenarioSpec {
            name: name.to_string(),
            family,
            variant: Variant::Source,
            friction: 0.5,
            contact_radius: 0.06,
            success_radius: 0.05,
            obstacle_rect: None,
            action_transform: [[1.0, 0.0], [0.0, 1.0]],
            action_gain: 1.0,
            goal_distribution: goal,
            object_start_distribution: object,
            agent_start: [-0.3, 0.0],
            max_episode_len: 100,
            reward_mode: RewardMode::Sparse,
        }
    }

    /// One of the 8 canonical transfer scenarios (or a `_source` task).
    pub fn by_name(name: &str) -> Result<Self> {
        let (family, rest) = if let Some(rest) = name.strip_prefix("push") {
            (Family::Push, rest)
        } else if let Some(rest) = name.strip_prefix("carry") {
            (Family::Carry, rest)
        } else {
            return Err(Error::Config(format!("unknown scenario '{name}'")));
        };
        let mut spec = ScenarioSpec::source(family);
        match rest {
            "_source" => {}
            "2new_friction" => {
                spec.variant = Variant::NewFriction;
                spec.friction = 0.25;
            }
            "2new_object" => {
                spec.variant = Variant::NewObjectSize;
                spec.contact_radius = 0.03;
            }
            "2obstacle" => {
                spec.variant = Variant::Obstacle;
                spec.obstacle_rect = Some(Rect {
                    min: [-0.12, -0.05],
                    max: [-0.10, 0.05],
                });
                // fixed goal, object start on a thin strip behind the obstacle
                spec.goal_distribution = SampleBox::fixed([0.3, 0.0]);
                spec.object_start_distribution = SampleBox {
                    min: [-0.45, -0.02],
                    max: [-0.15, 0.02],
                };
            }
            "2new_embodiment" => {
                spec.variant = Variant::NewEmbodiment;
                let (s, c) = (30.0f64).to_radians().sin_cos();
                spec.action_transform = [[c, -s], [s, c]];
                spec.action_gain = 0.8;
            }
            _ => return Err(Error::Config(format!("unknown scenario '{name}'"))),
        }
        if spec.variant != Variant::Source {
            spec.name = name.to_string();
        }
        Ok(spec)
    }
}

fn clamp_workspace(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0)]
}

fn in_workspace(p: [f64; 2]) -> bool {
    p[0].abs() <= 1.0 && p[1].abs() <= 1.0
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Sample a fresh initial state from the scenario's initial-state distribution.
pub fn reset(spec: &ScenarioSpec, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reset_with_rng(spec, &mut rng)
}

pub fn reset_with_rng<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> EnvState {
    let goal_pos = spec.goal_distribution.sample(rng);
    let object_pos = spec.object_start_distribution.sample(rng);
    EnvState {
        agent_pos: spec.agent_start,
        object_pos,
        object_vel: [0.0, 0.0],
        goal_pos,
        attached: false,
        step_index: 0,
    }
}

/// Reset the environment to a queried initial state (step index cleared).
pub fn reset_to(_spec: &ScenarioSpec, initial: &EnvState) -> Result<EnvState> {
    for (what, p) in [
        ("agent_pos", initial.agent_pos),
        ("object_pos", initial.object_pos),
        ("goal_pos", initial.goal_pos),
    ] {
        if !in_workspace(p) {
            return Err(Error::InvalidState(format!(
                "{what} {p:?} outside workspace [-1,1]^2"
            )));
        }
    }
    let mut s = initial.clone();
    s.step_index = 0;
    Ok(s)
}

/// Environment transition; a total function on clamped actions.
pub fn step(spec: &ScenarioSpec, state: &EnvState, action: [f64; 2]) -> StepResult {
    let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
    let t = &spec.action_transform;
    let eff = [
        spec.action_gain * (t[0][0] * a[0] + t[0][1] * a[1]),
        spec.action_gain * (t[1][0] * a[0] + t[1][1] * a[1]),
    ];
    let mut next = state.clone();
    next.agent_pos = clamp_workspace([
        state.agent_pos[0] + AGENT_SPEED * eff[0],
        state.agent_pos[1] + AGENT_SPEED * eff[1],
    ]);

    match spec.family {
        Family::Push => {
            let d = dist(next.agent_pos, next.object_pos);
            if d < spec.contact_radius {
                let dir = if d > 1e-9 {
                    [
                        (next.object_pos[0] - next.agent_pos[0]) / d,
                        (next.object_pos[1] - next.agent_pos[1]) / d,
                    ]
                } else {
                    [1.0, 0.0]
                };
                let mag = spec.contact_radius - d;
                next.object_vel = [dir[0] * mag, dir[1] * mag];
            }
            next.object_pos = clamp_workspace([
                next.object_pos[0] + next.object_vel[0],
                next.object_pos[1] + next.object_vel[1],
            ]);
            let decay = 1.0 - spec.friction;
            next.object_vel = [next.object_vel[0] * decay, next.object_vel[1] * decay];
        }
        Family::Carry => {
            if !next.attached && dist(next.agent_pos, next.object_pos) < spec.contact_radius {
                next.attached = true;
            }
            if next.attached {
                next.object_pos = next.agent_pos;
            }
        }
    }

    next.step_index = state.step_index + 1;

    let success = dist(next.object_pos, next.goal_pos) < spec.success_radius;
    let obstacle_hit = spec.obstacle_rect.map_or(false, |r| {
        r.contains(next.object_pos) || r.contains(next.agent_pos)
    });
    let timeout = next.step_index >= spec.max_episode_len;

    let (reward, terminal) = if success {
        (SUCCESS_REWARD, true)
    } else if obstacle_hit {
        (OBSTACLE_REWARD, true)
    } else {
        (STEP_REWARD, timeout)
    };
    let reward = match spec.reward_mode {
        RewardMode::Sparse => reward,
        RewardMode::Dense => dense_reward(spec, &next),
    };
    StepResult {
        next_state: next,
        reward,
        terminal: terminal || success || obstacle_hit,
        truncated: timeout && !success && !obstacle_hit,
        success,
    }
}

/// Distance-shaped reward used for source pretraining. The agent-object term
/// makes the signal informative before the first contact; without it the
/// reward is constant along every trajectory that never moves the object and
/// exploration cannot bootstrap.
pub fn dense_reward(_spec: &ScenarioSpec, state: &EnvState) -> f64 {
    -dist(state.object_pos, state.goal_pos) - dist(state.agent_pos, state.object_pos)
}

/// Stateful convenience wrapper around the pure functions.
#[derive(Debug, Clone)]
pub struct Env {
    pub spec: ScenarioSpec,
    pub state: EnvState,
}

impl Env {
    pub fn new(spec: ScenarioSpec) -> Self {
        let state = reset(&spec, 0);
        Env { spec, state }
    }

    pub fn reset_with_rng<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EnvState {
        self.state = reset_with_rng(&self.spec, rng);
        self.state.clone()
    }

    pub fn reset_to(&mut self, initial: &EnvState) -> Result<EnvState> {
        self.state = reset_to(&self.spec, initial)?;
        Ok(self.state.clone())
    }

    pub fn step(&mut self, action: [f64; 2]) -> StepResult {
        let r = step(&self.spec, &self.state, action);
        self.state = r.next_state.clone();
        r
    }
}
