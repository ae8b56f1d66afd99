//! The per-tick pipeline. Order is fixed:
//!
//! 1. lead mission command from the waypoint follower, scaled by the stretch guard
//! 2. relay commands toward equal-spacing targets
//! 3. collision guard: repulsion, then critical override
//! 4. world step
//! 5. chain link estimates
//! 6. traffic injection and one forwarding round
//! 7. lidar scan on scan ticks
//!
//! RNG draws happen only in steps 5 and 7, and only when the corresponding
//! noise sigma is positive.

use serde::Serialize;
use thiserror::Error;

use crate::guard::{critical_override, pairwise_separations, repulsion_adjust};
use crate::kernel::{clamp_vector, AgentState, Commands, KernelError, Role, Vec3, WorldState};
use crate::lidar::{assemble_cloud, simulate_scan_noisy, PointCloud, Pose, ScanFrame};
use crate::net::{NetEvent, RelayNet};
use crate::radio::{chain_links_noisy, LinkEstimate, RadioError};
use crate::relay::{convergence_status, desired_positions, relay_commands, stretch_guard, ChainTopology};

use super::config::{ScenarioConfig, Waypoint};
use super::metrics::Metrics;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("tick {tick}: {source}")]
    Kernel { tick: u64, source: KernelError },
    #[error("tick {tick}: {source}")]
    Radio { tick: u64, source: RadioError },
    #[error("tick {tick}: {message}")]
    Internal { tick: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTrace {
    pub id: usize,
    pub role: Role,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub command: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub tick: u64,
    /// Stretch-guard multiplier applied to the lead this tick.
    pub scale: f64,
    /// Closest airborne pair distance after the step; null with fewer than
    /// two airborne agents.
    pub min_separation: Option<f64>,
    /// Largest relay distance from its equal-spacing target after the step.
    pub max_relay_error: f64,
    pub agents: Vec<AgentTrace>,
    pub links: Vec<LinkEstimate>,
    pub events: Vec<NetEvent>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    pub frames: Vec<ScanFrame>,
    pub cloud: Option<PointCloud>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Steers the lead through its waypoints in order. Holds on the last one.
#[derive(Debug, Clone)]
struct WaypointFollower {
    waypoints: Vec<Waypoint>,
    current: usize,
}

const WAYPOINT_REACHED: f64 = 1.0;

impl WaypointFollower {
    fn command(&mut self, position: &Vec3, k_p: f64) -> Vec3 {
        let Some(mut wp) = self.waypoints.get(self.current) else {
            return Vec3::zeros();
        };
        while self.current + 1 < self.waypoints.len() && (Vec3::from(wp.position) - position).norm() <= WAYPOINT_REACHED {
            self.current += 1;
            wp = &self.waypoints[self.current];
        }
        clamp_vector((Vec3::from(wp.position) - position) * k_p, wp.speed)
    }
}

struct Snapshot<'a> {
    ground: &'a AgentState,
    lead: &'a AgentState,
    relays: Vec<&'a AgentState>,
}

fn snapshot<'a>(world: &'a WorldState, chain: &ChainTopology) -> Snapshot<'a> {
    let get = |id| world.agent(id).expect("chain ids validated against agents");
    Snapshot { ground: get(chain.ground_id), lead: get(chain.lead_id), relays: chain.relay_ids.iter().map(|&id| get(id)).collect() }
}

fn airborne_separation(agents: &[AgentState]) -> Option<f64> {
    let airborne: Vec<AgentState> = agents.iter().filter(|a| a.role.is_airborne()).cloned().collect();
    let s = pairwise_separations(&airborne);
    s.min_dist.is_finite().then_some(s.min_dist)
}

fn relay_error(world: &WorldState, chain: &ChainTopology) -> f64 {
    let snap = snapshot(world, chain);
    let targets = desired_positions(snap.ground.position, snap.lead.position, chain);
    let relays: Vec<AgentState> = snap.relays.into_iter().cloned().collect();
    convergence_status(&relays, &targets, f64::INFINITY).map(|c| c.max_error).unwrap_or(0.0)
}

fn heading(velocity: &Vec3, previous: f64) -> f64 {
    if velocity.xy().norm() > 0.1 {
        velocity.y.atan2(velocity.x)
    } else {
        previous
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    let lim = cfg.kinematics;
    let chain = &cfg.chain;
    let mut world = WorldState::new(cfg.agents.clone(), cfg.seed).map_err(|source| RunError::Kernel { tick: 0, source })?;
    let mut follower = WaypointFollower { waypoints: cfg.lead_mission.clone(), current: 0 };
    let mut net = cfg.traffic.as_ref().map(|t| RelayNet::new(chain.nodes()).with_ttl(t.ttl_ticks).with_link_capacity(t.bytes_per_tick));

    let lead0 = world.agent(chain.lead_id).expect("validated").position;
    let mut yaw = cfg
        .lead_mission
        .first()
        .map(|w| Vec3::from(w.position) - lead0)
        .filter(|d| d.xy().norm() > 1e-9)
        .map_or(0.0, |d| d.y.atan2(d.x));

    let mut trace = Vec::with_capacity(cfg.ticks as usize + 1);
    let mut frames = Vec::new();
    let mut commands = Commands::new();
    let mut scale = {
        let s = snapshot(&world, chain);
        stretch_guard(s.ground.position, s.lead.position, chain.relay_count(), &cfg.radio, &cfg.controller)
    };

    for tick in 0..=cfg.ticks {
        if tick > 0 {
            let snap = snapshot(&world, chain);
            scale = stretch_guard(snap.ground.position, snap.lead.position, chain.relay_count(), &cfg.radio, &cfg.controller);
            let mission = follower.command(&snap.lead.position, cfg.controller.k_p);
            let targets = desired_positions(snap.ground.position, snap.lead.position, chain);
            let relays: Vec<AgentState> = snap.relays.into_iter().cloned().collect();
            commands = relay_commands(&relays, &targets, &cfg.controller, &lim)
                .map_err(|e| RunError::Internal { tick, message: e.to_string() })?;
            commands.insert(chain.lead_id, mission * scale);

            if cfg.guard.enabled {
                commands = repulsion_adjust(&commands, &world.agents, &cfg.guard, lim.v_max);
                commands = critical_override(&commands, &world.agents, &cfg.guard, lim.v_max);
            }

            world.step(&commands, &lim).map_err(|source| RunError::Kernel { tick, source })?;
        }

        let links = {
            let WorldState { agents, rng, .. } = &mut world;
            chain_links_noisy(chain, agents, &cfg.radio, rng).map_err(|source| RunError::Radio { tick, source })?
        };

        let mut events = Vec::new();
        if let (Some(net), Some(t)) = (net.as_mut(), cfg.traffic.as_ref()) {
            if tick > 0 && tick % t.period_ticks == 0 {
                net.enqueue_packet(t.src, t.dst, t.size_bytes, tick).map_err(|e| RunError::Internal { tick, message: e.to_string() })?;
            }
            events = net.forward_tick(&links, tick);
        }

        let lead = world.agent(chain.lead_id).expect("validated").clone();
        yaw = heading(&lead.velocity, yaw);
        if let Some(m) = &cfg.mapping {
            if tick % m.scan_period_ticks == 0 {
                let pose = Pose::new(lead.position, yaw);
                frames.push(simulate_scan_noisy(&pose, tick, &m.environment, &m.lidar, &mut world.rng));
            }
        }

        trace.push(TraceRecord {
            tick,
            scale,
            min_separation: airborne_separation(&world.agents),
            max_relay_error: relay_error(&world, chain),
            agents: world
                .agents
                .iter()
                .map(|a| AgentTrace {
                    id: a.id,
                    role: a.role,
                    position: arr(&a.position),
                    velocity: arr(&a.velocity),
                    command: arr(&commands.get(&a.id).copied().unwrap_or_else(Vec3::zeros)),
                })
                .collect(),
            links,
            events,
        });
    }

    let metrics = Metrics::from_trace(&trace, cfg.controller.conv_tol)
        .map_err(|e| RunError::Internal { tick: cfg.ticks, message: e.to_string() })?;
    let cloud = cfg.mapping.as_ref().map(|_| assemble_cloud(&frames));
    Ok(RunOutput { trace, metrics, frames, cloud })
}
