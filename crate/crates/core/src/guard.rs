//! Two-stage collision guard.
//!
//! Pairs closer than `d_alert` push apart linearly in penetration depth. Pairs
//! closer than `d_critical` get a hard override: full horizontal push plus
//! vertical deconfliction where the lower id climbs and the higher id
//! descends. Ground stations repel but never receive commands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{clamp_vector, AgentState, Commands, Vec3};

const COINCIDENT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid guard parameter `{0}`")]
pub struct GuardError(pub &'static str);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardParams {
    pub enabled: bool,
    /// Repulsion activation radius, m.
    pub d_alert: f64,
    /// Hard override radius, m.
    pub d_critical: f64,
    /// Repulsion gain, 1/s.
    pub k_r: f64,
    /// Climb/descend speed of the override, m/s.
    pub v_z_evade: f64,
}

impl Default for GuardParams {
    fn default() -> Self {
        Self { enabled: true, d_alert: 8.0, d_critical: 2.0, k_r: 0.5, v_z_evade: 1.0 }
    }
}

impl GuardParams {
    pub fn validate(&self) -> Result<(), GuardError> {
        if !(self.d_critical.is_finite() && self.d_critical > 0.0) {
            return Err(GuardError("d_critical"));
        }
        if !(self.d_alert.is_finite() && self.d_critical < self.d_alert) {
            return Err(GuardError("d_critical"));
        }
        if !(self.k_r.is_finite() && self.k_r > 0.0) {
            return Err(GuardError("k_r"));
        }
        if !(self.v_z_evade.is_finite() && self.v_z_evade > 0.0) {
            return Err(GuardError("v_z_evade"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    /// `f64::INFINITY` with fewer than two agents.
    pub min_dist: f64,
    pub closest_pair: Option<(usize, usize)>,
}

/// Agents sorted by id, so pair enumeration is in lexicographic order.
fn sorted(agents: &[AgentState]) -> Vec<&AgentState> {
    let mut v: Vec<&AgentState> = agents.iter().collect();
    v.sort_by_key(|a| a.id);
    v
}

fn pairs<'a>(agents: &'a [&'a AgentState]) -> impl Iterator<Item = (&'a AgentState, &'a AgentState, f64)> + 'a {
    (0..agents.len()).flat_map(move |i| {
        (i + 1..agents.len()).map(move |j| {
            let (a, b) = (agents[i], agents[j]);
            (a, b, (a.position - b.position).norm())
        })
    })
}

pub fn pairwise_separations(agents: &[AgentState]) -> Separation {
    let agents = sorted(agents);
    let mut best = Separation { min_dist: f64::INFINITY, closest_pair: None };
    for (a, b, d) in pairs(&agents) {
        if d < best.min_dist {
            best = Separation { min_dist: d, closest_pair: Some((a.id, b.id)) };
        }
    }
    best
}

/// Unit vector from `b` towards `a`. Coincident agents split along x with the
/// lower id taking +x.
fn away(a: &AgentState, b: &AgentState, d: f64) -> Vec3 {
    if d < COINCIDENT {
        if a.id < b.id {
            Vec3::x()
        } else {
            -Vec3::x()
        }
    } else {
        (a.position - b.position) / d
    }
}

/// Raw pairwise repulsion per agent, ground stations included. Sums to zero.
pub fn repulsion_terms(agents: &[AgentState], gp: &GuardParams) -> BTreeMap<usize, Vec3> {
    let agents = sorted(agents);
    let mut terms: BTreeMap<usize, Vec3> = agents.iter().map(|a| (a.id, Vec3::zeros())).collect();
    for (a, b, d) in pairs(&agents) {
        if d < gp.d_alert && d >= gp.d_critical {
            let push = away(a, b, d) * (gp.k_r * (gp.d_alert - d));
            *terms.get_mut(&a.id).unwrap() += push;
            *terms.get_mut(&b.id).unwrap() -= push;
        }
    }
    terms
}

/// Adds soft repulsion to airborne agents' commands, re-clamped to `v_max`.
pub fn repulsion_adjust(commands: &Commands, agents: &[AgentState], gp: &GuardParams, v_max: f64) -> Commands {
    let mut out = commands.clone();
    let terms = repulsion_terms(agents, gp);
    for a in agents.iter().filter(|a| a.role.is_airborne()) {
        let term = terms[&a.id];
        if term != Vec3::zeros() {
            let cmd = out.get(&a.id).copied().unwrap_or_else(Vec3::zeros);
            out.insert(a.id, clamp_vector(cmd + term, v_max));
        }
    }
    out
}

/// Last-resort override for pairs inside `d_critical`. Each agent takes the
/// override from its lowest-id critical partner.
pub fn critical_override(commands: &Commands, agents: &[AgentState], gp: &GuardParams, v_max: f64) -> Commands {
    let agents = sorted(agents);
    let mut partner: BTreeMap<usize, (usize, Vec3)> = BTreeMap::new();
    for (a, b, d) in pairs(&agents) {
        if d >= gp.d_critical {
            continue;
        }
        let dir = away(a, b, d);
        let horizontal = Vec3::new(dir.x, dir.y, 0.0) * (gp.k_r * (gp.d_alert - d));
        // a has the lower id: climbs; b descends.
        for (me, other, h, vz) in [(a, b, horizontal, gp.v_z_evade), (b, a, -horizontal, -gp.v_z_evade)] {
            if !me.role.is_airborne() {
                continue;
            }
            let candidate = (other.id, Vec3::new(h.x, h.y, vz));
            partner
                .entry(me.id)
                .and_modify(|cur| {
                    if other.id < cur.0 {
                        *cur = candidate;
                    }
                })
                .or_insert(candidate);
        }
    }
    let mut out = commands.clone();
    for (id, (_, cmd)) in partner {
        out.insert(id, clamp_vector(cmd, v_max));
    }
    out
}
