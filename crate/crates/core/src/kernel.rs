//! Discrete-time world kernel.
//!
//! Every agent is a point mass whose velocity tracks a commanded velocity
//! through a first-order loop (`k_v`), with acceleration and speed limits.
//! Integration is semi-implicit Euler: velocity first, then position.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("non-finite state for agent {0}")]
    NonFinite(usize),
    #[error("duplicate agent id {0}")]
    DuplicateId(usize),
    #[error("agent ids must be dense from 0, missing {0}")]
    SparseIds(usize),
    #[error("invalid kinematic limit `{0}`: must be finite and > 0")]
    InvalidLimit(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    GroundStation,
    Relay,
    Lead,
}

impl Role {
    pub fn is_airborne(self) -> bool {
        !matches!(self, Role::GroundStation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub position: Vec3,
    pub velocity: Vec3,
    pub role: Role,
}

impl AgentState {
    pub fn at_rest(id: usize, role: Role, position: Vec3) -> Self {
        Self { id, position, velocity: Vec3::zeros(), role }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicLimits {
    /// Speed ceiling, m/s.
    pub v_max: f64,
    /// Acceleration ceiling, m/s².
    pub a_max: f64,
    /// Velocity-tracking gain, 1/s.
    pub k_v: f64,
    /// Tick length, s.
    pub dt: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self { v_max: 12.0, a_max: 4.0, k_v: 2.0, dt: 0.05 }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<(), KernelError> {
        for (name, value) in [("v_max", self.v_max), ("a_max", self.a_max), ("k_v", self.k_v), ("dt", self.dt)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(KernelError::InvalidLimit(name));
            }
        }
        Ok(())
    }
}

/// Scales `v` down to `limit` when it is longer, preserving direction.
pub fn clamp_vector(v: Vec3, limit: f64) -> Vec3 {
    let norm = v.norm();
    if norm <= limit || norm == 0.0 {
        v
    } else {
        v * (limit / norm)
    }
}

fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Advances one agent by one tick. Ground stations are returned unchanged.
pub fn integrate_agent(s: &AgentState, v_cmd: Vec3, lim: &KinematicLimits) -> Result<AgentState, KernelError> {
    if !(is_finite(&s.position) && is_finite(&s.velocity) && is_finite(&v_cmd)) {
        return Err(KernelError::NonFinite(s.id));
    }
    if s.role == Role::GroundStation {
        return Ok(AgentState { velocity: Vec3::zeros(), ..s.clone() });
    }
    let accel = clamp_vector((v_cmd - s.velocity) * lim.k_v, lim.a_max);
    let velocity = clamp_vector(s.velocity + accel * lim.dt, lim.v_max);
    let position = s.position + velocity * lim.dt;
    if !(is_finite(&position) && is_finite(&velocity)) {
        return Err(KernelError::NonFinite(s.id));
    }
    Ok(AgentState { id: s.id, position, velocity, role: s.role })
}

/// Velocity commands keyed by agent id. Ordered so iteration is deterministic.
pub type Commands = BTreeMap<usize, Vec3>;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub tick: u64,
    pub agents: Vec<AgentState>,
    /// Shared stream for every stochastic feature of a run.
    pub rng: ChaCha8Rng,
}

impl WorldState {
    /// Builds a world at tick 0. Agents are stored in ascending id order and
    /// ids must be exactly `0..n`.
    pub fn new(mut agents: Vec<AgentState>, seed: u64) -> Result<Self, KernelError> {
        agents.sort_by_key(|a| a.id);
        check_ids(&agents)?;
        for a in &agents {
            if !(is_finite(&a.position) && is_finite(&a.velocity)) {
                return Err(KernelError::NonFinite(a.id));
            }
        }
        Ok(Self { tick: 0, agents, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn agent(&self, id: usize) -> Option<&AgentState> {
        self.agents.get(id).filter(|a| a.id == id)
    }

    /// Integrates every agent under `commands` (missing entry means hover)
    /// in ascending id order and advances the tick.
    pub fn step(&mut self, commands: &Commands, lim: &KinematicLimits) -> Result<(), KernelError> {
        *self = step_world(self, commands, lim)?;
        Ok(())
    }
}

fn check_ids(agents: &[AgentState]) -> Result<(), KernelError> {
    let mut seen = BTreeSet::new();
    for a in agents {
        if !seen.insert(a.id) {
            return Err(KernelError::DuplicateId(a.id));
        }
    }
    if let Some(missing) = (0..agents.len()).find(|id| !seen.contains(id)) {
        return Err(KernelError::SparseIds(missing));
    }
    Ok(())
}

pub fn step_world(w: &WorldState, commands: &Commands, lim: &KinematicLimits) -> Result<WorldState, KernelError> {
    check_ids(&w.agents)?;
    let mut order: Vec<&AgentState> = w.agents.iter().collect();
    order.sort_by_key(|a| a.id);
    let agents = order
        .into_iter()
        .map(|a| {
            let cmd = commands.get(&a.id).copied().unwrap_or_else(Vec3::zeros);
            integrate_agent(a, cmd, lim)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WorldState { tick: w.tick + 1, agents, rng: w.rng.clone() })
}
