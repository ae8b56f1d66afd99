//! Scenario files (TOML). Unknown keys are rejected and every validation
//! failure names the offending key path.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::guard::GuardParams;
use crate::kernel::{AgentState, KernelError, KinematicLimits, Role, Vec3};
use crate::lidar::{BoxEnvironment, LidarError, LidarParams};
use crate::net::DEFAULT_TTL_TICKS;
use crate::radio::{RadioError, RadioParams};
use crate::relay::{desired_positions, ChainTopology, ControllerParams, RelayError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    pub fn path(&self) -> &str {
        match self {
            ConfigError::Parse { path, .. } | ConfigError::Invalid { path, .. } => path,
        }
    }
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub period_ticks: u64,
    pub size_bytes: u64,
    pub src: usize,
    pub dst: usize,
    #[serde(default = "default_ttl")]
    pub ttl_ticks: u64,
    /// Per-hop byte budget per tick; unlimited when absent.
    #[serde(default)]
    pub bytes_per_tick: Option<u64>,
}

fn default_ttl() -> u64 {
    DEFAULT_TTL_TICKS
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub position: [f64; 3],
    /// Leg speed toward this waypoint, m/s.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingConfig {
    pub environment: BoxEnvironment,
    pub lidar: LidarParams,
    pub scan_period_ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub ticks: u64,
    pub kinematics: KinematicLimits,
    pub radio: RadioParams,
    pub chain: ChainTopology,
    /// Initial agent states, ascending id.
    pub agents: Vec<AgentState>,
    pub controller: ControllerParams,
    pub guard: GuardParams,
    pub traffic: Option<TrafficConfig>,
    pub lead_mission: Vec<Waypoint>,
    pub mapping: Option<MappingConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    seed: u64,
    ticks: u64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default)]
    kinematics: RawKinematics,
    #[serde(default)]
    radio: RadioParams,
    chain: RawChain,
    #[serde(default)]
    controller: ControllerParams,
    #[serde(default)]
    guard: GuardParams,
    traffic: Option<TrafficConfig>,
    #[serde(default)]
    lead_mission: RawMission,
    environment: Option<BoxEnvironment>,
    lidar: Option<RawLidar>,
}

fn default_dt() -> f64 {
    KinematicLimits::default().dt
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawKinematics {
    v_max: f64,
    a_max: f64,
    k_v: f64,
}

impl Default for RawKinematics {
    fn default() -> Self {
        let d = KinematicLimits::default();
        Self { v_max: d.v_max, a_max: d.a_max, k_v: d.k_v }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    id: usize,
    position: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRelay {
    id: usize,
    /// Defaults to the relay's equal-spacing slot for the initial geometry.
    position: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    cruise_alt: f64,
    ground: RawAgent,
    #[serde(default)]
    relays: Vec<RawRelay>,
    lead: RawAgent,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMission {
    #[serde(default)]
    waypoints: Vec<Waypoint>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawLidar {
    fov_deg: f64,
    angular_step_deg: f64,
    r_max: f64,
    r_min: f64,
    range_noise_sigma: f64,
    scan_period_ticks: u64,
}

impl Default for RawLidar {
    fn default() -> Self {
        let d = LidarParams::default();
        Self {
            fov_deg: d.fov_deg,
            angular_step_deg: d.angular_step_deg,
            r_max: d.r_max,
            r_min: d.r_min,
            range_noise_sigma: d.range_noise_sigma,
            scan_period_ticks: 4,
        }
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn finite3(path: String, a: &[f64; 3]) -> Result<(), ConfigError> {
    if a.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(invalid(path, "coordinates must be finite"))
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse { path: "<document>".into(), message: e.to_string() })?;
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Parse { path, message: e.into_inner().message().trim().to_string() }
    })?;
    build(raw)
}

fn build(raw: RawScenario) -> Result<ScenarioConfig, ConfigError> {
    if raw.ticks == 0 {
        return Err(invalid("ticks", "must be positive"));
    }
    let kinematics = KinematicLimits { v_max: raw.kinematics.v_max, a_max: raw.kinematics.a_max, k_v: raw.kinematics.k_v, dt: raw.dt };
    kinematics.validate().map_err(|e| match e {
        KernelError::InvalidLimit("dt") => invalid("dt", "must be finite and > 0"),
        KernelError::InvalidLimit(f) => invalid(format!("kinematics.{f}"), "must be finite and > 0"),
        other => invalid("kinematics", other),
    })?;
    raw.radio.validate().map_err(|e| match e {
        RadioError::Invalid { field, reason } => invalid(format!("radio.{field}"), reason),
        other => invalid("radio", other),
    })?;
    raw.controller.validate().map_err(|e| match e {
        RelayError::InvalidParam(f) => invalid(format!("controller.{f}"), "out of range"),
        other => invalid("controller", other),
    })?;
    raw.guard.validate().map_err(|e| invalid(format!("guard.{}", e.0), "requires 0 < d_critical < d_alert and positive gains"))?;

    let (chain, agents) = build_chain(&raw.chain)?;

    if let Some(t) = &raw.traffic {
        let members = chain.nodes();
        if t.period_ticks == 0 {
            return Err(invalid("traffic.period_ticks", "must be positive"));
        }
        if t.size_bytes == 0 {
            return Err(invalid("traffic.size_bytes", "must be positive"));
        }
        if t.ttl_ticks == 0 {
            return Err(invalid("traffic.ttl_ticks", "must be positive"));
        }
        for (key, id) in [("src", t.src), ("dst", t.dst)] {
            if !members.contains(&id) {
                return Err(invalid(format!("traffic.{key}"), format!("agent {id} is not in the chain")));
            }
        }
        if t.src == t.dst {
            return Err(invalid("traffic.dst", "degenerate route: src = dst"));
        }
        if t.bytes_per_tick == Some(0) {
            return Err(invalid("traffic.bytes_per_tick", "must be positive"));
        }
    }

    for (i, w) in raw.lead_mission.waypoints.iter().enumerate() {
        finite3(format!("lead_mission.waypoints[{i}].position"), &w.position)?;
        if !(w.speed > 0.0 && w.speed <= kinematics.v_max) {
            return Err(invalid(format!("lead_mission.waypoints[{i}].speed"), format!("must be in (0, v_max = {}]", kinematics.v_max)));
        }
    }

    let mapping = match (raw.environment, raw.lidar) {
        (None, Some(_)) => return Err(invalid("lidar", "requires an `environment` table")),
        (None, None) => None,
        (Some(environment), lidar) => {
            environment.validate().map_err(|e| match e {
                LidarError::InvalidBox(i) => invalid(format!("environment.boxes[{i}]"), "min must be below max on every axis"),
                other => invalid("environment", other),
            })?;
            let l = lidar.unwrap_or_default();
            let params = LidarParams {
                fov_deg: l.fov_deg,
                angular_step_deg: l.angular_step_deg,
                r_max: l.r_max,
                r_min: l.r_min,
                range_noise_sigma: l.range_noise_sigma,
            };
            params.validate().map_err(|e| match e {
                LidarError::InvalidParam(f) => invalid(format!("lidar.{f}"), "out of range"),
                other => invalid("lidar", other),
            })?;
            if l.scan_period_ticks == 0 {
                return Err(invalid("lidar.scan_period_ticks", "must be positive"));
            }
            Some(MappingConfig { environment, lidar: params, scan_period_ticks: l.scan_period_ticks })
        }
    };

    Ok(ScenarioConfig {
        name: raw.name,
        seed: raw.seed,
        ticks: raw.ticks,
        kinematics,
        radio: raw.radio,
        chain,
        agents,
        controller: raw.controller,
        guard: raw.guard,
        traffic: raw.traffic,
        lead_mission: raw.lead_mission.waypoints,
        mapping,
    })
}

fn build_chain(raw: &RawChain) -> Result<(ChainTopology, Vec<AgentState>), ConfigError> {
    let mut paths: BTreeMap<usize, String> = BTreeMap::new();
    let mut claim = |id: usize, path: String| -> Result<(), ConfigError> {
        if let Some(first) = paths.get(&id) {
            return Err(invalid(path, format!("duplicate agent id {id} (already used by {first})")));
        }
        paths.insert(id, path);
        Ok(())
    };
    claim(raw.ground.id, "chain.ground.id".into())?;
    for (i, r) in raw.relays.iter().enumerate() {
        claim(r.id, format!("chain.relays[{i}].id"))?;
    }
    claim(raw.lead.id, "chain.lead.id".into())?;
    if let Some(missing) = (0..paths.len()).find(|id| !paths.contains_key(id)) {
        return Err(invalid("chain", format!("agent ids must be dense from 0; {missing} is missing")));
    }

    let chain = ChainTopology {
        ground_id: raw.ground.id,
        relay_ids: raw.relays.iter().map(|r| r.id).collect(),
        lead_id: raw.lead.id,
        cruise_alt: raw.cruise_alt,
    };
    chain.validate().map_err(|e| match e {
        RelayError::InvalidParam(f) => invalid(format!("chain.{f}"), "must be finite and > 0"),
        other => invalid("chain", other),
    })?;

    finite3("chain.ground.position".into(), &raw.ground.position)?;
    finite3("chain.lead.position".into(), &raw.lead.position)?;
    let ground = vec3(raw.ground.position);
    let lead = vec3(raw.lead.position);
    let slots = desired_positions(ground, lead, &chain);

    let mut agents = vec![AgentState::at_rest(raw.ground.id, Role::GroundStation, ground), AgentState::at_rest(raw.lead.id, Role::Lead, lead)];
    for (i, (r, slot)) in raw.relays.iter().zip(slots).enumerate() {
        let position = match r.position {
            Some(p) => {
                finite3(format!("chain.relays[{i}].position"), &p)?;
                vec3(p)
            }
            None => slot,
        };
        agents.push(AgentState::at_rest(r.id, Role::Relay, position));
    }
    agents.sort_by_key(|a| a.id);
    Ok((chain, agents))
}
