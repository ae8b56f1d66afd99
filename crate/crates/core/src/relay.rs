//! Relay chain positioning.
//!
//! Relays hold equal spacing on the straight ground→lead segment at a common
//! cruise altitude, driven by a saturated proportional go-to-goal law. The
//! lead's mission speed is throttled by [`stretch_guard`] so that the per-hop
//! length never reaches the radio range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{clamp_vector, AgentState, Commands, KinematicLimits, Vec3};
use crate::radio::{max_link_range, RadioParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelayError {
    #[error("expected {expected} targets, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid controller parameter `{0}`")]
    InvalidParam(&'static str),
    #[error("chain id {0} appears more than once")]
    DuplicateChainId(usize),
}

/// Ordered relay chain: ground station, relays (ground side first), lead.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTopology {
    pub ground_id: usize,
    pub relay_ids: Vec<usize>,
    pub lead_id: usize,
    pub cruise_alt: f64,
}

impl ChainTopology {
    pub fn relay_count(&self) -> usize {
        self.relay_ids.len()
    }

    /// All node ids from the ground station out to the lead.
    pub fn nodes(&self) -> Vec<usize> {
        let mut nodes = Vec::with_capacity(self.relay_ids.len() + 2);
        nodes.push(self.ground_id);
        nodes.extend(&self.relay_ids);
        nodes.push(self.lead_id);
        nodes
    }

    /// Consecutive (ground side, lead side) id pairs.
    pub fn hops(&self) -> impl Iterator<Item = (usize, usize)> {
        let nodes = self.nodes();
        (0..nodes.len() - 1).map(move |k| (nodes[k], nodes[k + 1]))
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        let nodes = self.nodes();
        for (i, id) in nodes.iter().enumerate() {
            if nodes[..i].contains(id) {
                return Err(RelayError::DuplicateChainId(*id));
            }
        }
        if !(self.cruise_alt.is_finite() && self.cruise_alt > 0.0) {
            return Err(RelayError::InvalidParam("cruise_alt"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Position gain, 1/s.
    pub k_p: f64,
    /// Fraction of the radio range at which the lead starts being throttled.
    pub alpha: f64,
    /// Convergence tolerance, m.
    pub conv_tol: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self { k_p: 0.8, alpha: 0.8, conv_tol: 2.0 }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), RelayError> {
        if !(self.k_p.is_finite() && self.k_p > 0.0) {
            return Err(RelayError::InvalidParam("k_p"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RelayError::InvalidParam("alpha"));
        }
        if !(self.conv_tol.is_finite() && self.conv_tol > 0.0) {
            return Err(RelayError::InvalidParam("conv_tol"));
        }
        Ok(())
    }
}

pub fn desired_positions(ground: Vec3, lead: Vec3, chain: &ChainTopology) -> Vec<Vec3> {
    let m = chain.relay_count();
    let span = lead - ground;
    (1..=m)
        .map(|i| {
            let f = i as f64 / (m as f64 + 1.0);
            Vec3::new(ground.x + f * span.x, ground.y + f * span.y, chain.cruise_alt)
        })
        .collect()
}

/// Go-to-goal velocity per relay. `relays` and `targets` are index-aligned in
/// chain order.
pub fn relay_commands(
    relays: &[AgentState],
    targets: &[Vec3],
    cp: &ControllerParams,
    lim: &KinematicLimits,
) -> Result<Commands, RelayError> {
    if relays.len() != targets.len() {
        return Err(RelayError::LengthMismatch { expected: relays.len(), got: targets.len() });
    }
    Ok(relays
        .iter()
        .zip(targets)
        .map(|(r, q)| (r.id, clamp_vector((q - r.position) * cp.k_p, lim.v_max)))
        .collect())
}

/// Multiplier in `[0, 1]` for the lead's mission velocity.
pub fn stretch_guard(ground: Vec3, lead: Vec3, relay_count: usize, rp: &RadioParams, cp: &ControllerParams) -> f64 {
    let per_hop = (lead - ground).norm() / (relay_count as f64 + 1.0);
    let d_max = max_link_range(rp);
    let d_safe = cp.alpha * d_max;
    if per_hop <= d_safe {
        1.0
    } else if per_hop < d_max {
        (d_max - per_hop) / (d_max - d_safe)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub converged: bool,
    pub max_error: f64,
}

pub fn convergence_status(relays: &[AgentState], targets: &[Vec3], conv_tol: f64) -> Result<Convergence, RelayError> {
    if relays.len() != targets.len() {
        return Err(RelayError::LengthMismatch { expected: relays.len(), got: targets.len() });
    }
    let max_error = relays
        .iter()
        .zip(targets)
        .map(|(r, q)| (r.position - q).norm())
        .fold(0.0, f64::max);
    Ok(Convergence { converged: max_error <= conv_tol, max_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Role, WorldState};
    use approx::assert_abs_diff_eq;

    fn chain(m: usize) -> ChainTopology {
        ChainTopology { ground_id: 0, relay_ids: (1..=m).collect(), lead_id: m + 1, cruise_alt: 50.0 }
    }

    fn relay_at(id: usize, p: Vec3) -> AgentState {
        AgentState::at_rest(id, Role::Relay, p)
    }

    #[test]
    fn equal_thirds() {
        let t = desired_positions(Vec3::zeros(), Vec3::new(300.0, 0.0, 50.0), &chain(2));
        assert_eq!(t, vec![Vec3::new(100.0, 0.0, 50.0), Vec3::new(200.0, 0.0, 50.0)]);
    }

    #[test]
    fn degenerate_segment_and_empty_chain() {
        let g = Vec3::new(4.0, -2.0, 0.0);
        let t = desired_positions(g, Vec3::new(4.0, -2.0, 80.0), &chain(3));
        assert!(t.iter().all(|q| *q == Vec3::new(4.0, -2.0, 50.0)));
        assert!(desired_positions(g, Vec3::new(1.0, 1.0, 1.0), &chain(0)).is_empty());
    }

    #[test]
    fn hops_and_validation() {
        assert_eq!(chain(2).hops().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(chain(0).hops().collect::<Vec<_>>(), vec![(0, 1)]);
        let dup = ChainTopology { relay_ids: vec![1, 0], ..chain(2) };
        assert_eq!(dup.validate().unwrap_err(), RelayError::DuplicateChainId(0));
        let low = ChainTopology { cruise_alt: 0.0, ..chain(1) };
        assert_eq!(low.validate().unwrap_err(), RelayError::InvalidParam("cruise_alt"));
    }

    #[test]
    fn commands() {
        let cp = ControllerParams::default();
        let lim = KinematicLimits::default();
        let q = Vec3::new(10.0, 10.0, 50.0);

        let on = relay_commands(&[relay_at(1, q)], &[q], &cp, &lim).unwrap();
        assert_eq!(on[&1], Vec3::zeros());

        let east = relay_commands(&[relay_at(1, q + Vec3::x())], &[q], &cp, &lim).unwrap();
        assert_abs_diff_eq!(east[&1], Vec3::new(-0.8, 0.0, 0.0), epsilon = 1e-12);

        let far = relay_commands(&[relay_at(1, q + Vec3::new(0.0, 100.0, 0.0))], &[q], &cp, &lim).unwrap();
        assert_abs_diff_eq!(far[&1], Vec3::new(0.0, -12.0, 0.0), epsilon = 1e-12);

        assert_eq!(
            relay_commands(&[relay_at(1, q)], &[], &cp, &lim).unwrap_err(),
            RelayError::LengthMismatch { expected: 1, got: 0 }
        );
    }

    #[test]
    fn stretch_guard_examples() {
        // Pin d_max to exactly 900 m: 10^(x / 22) = 900.
        let rp = RadioParams { rssi_min: 20.0 - 40.0 - 22.0 * 900f64.log10(), ..Default::default() };
        assert_abs_diff_eq!(max_link_range(&rp), 900.0, epsilon = 1e-9);
        let cp = ControllerParams::default();
        let g = Vec3::zeros();
        let at = |d: f64| stretch_guard(g, Vec3::new(d, 0.0, 0.0), 2, &rp, &cp);
        assert_eq!(at(2000.0), 1.0);
        assert_abs_diff_eq!(at(2430.0), 0.5, epsilon = 1e-9);
        assert_eq!(at(2700.0), 0.0);
        assert_eq!(at(5000.0), 0.0);
        assert_eq!(at(0.0), 1.0);
    }

    #[test]
    fn convergence_examples() {
        let q = vec![Vec3::new(0.0, 0.0, 50.0), Vec3::new(100.0, 0.0, 50.0)];
        let on: Vec<_> = q.iter().enumerate().map(|(i, p)| relay_at(i + 1, *p)).collect();
        assert_eq!(convergence_status(&on, &q, 2.0).unwrap(), Convergence { converged: true, max_error: 0.0 });

        let mut off = on.clone();
        off[1].position.y += 1.0;
        assert_eq!(convergence_status(&off, &q, 2.0).unwrap(), Convergence { converged: true, max_error: 1.0 });
        off[1].position.y += 4.0;
        assert_eq!(convergence_status(&off, &q, 2.0).unwrap(), Convergence { converged: false, max_error: 5.0 });
        assert!(convergence_status(&off, &q[..1], 2.0).is_err());
    }

    #[test]
    fn stationary_lead_error_decreases_monotonically() {
        let lim = KinematicLimits::default();
        let cp = ControllerParams::default();
        let ch = chain(3);
        let ground = Vec3::zeros();
        let lead = Vec3::new(1200.0, 300.0, 50.0);
        let mut agents = vec![AgentState::at_rest(0, Role::GroundStation, ground)];
        agents.extend((1..=3).map(|i| relay_at(i, Vec3::new(-40.0 * i as f64, 25.0, 5.0))));
        agents.push(AgentState::at_rest(4, Role::Lead, lead));
        let mut w = WorldState::new(agents, 0).unwrap();
        let targets = desired_positions(ground, lead, &ch);

        let mut prev = f64::INFINITY;
        for tick in 0.. {
            let relays = &w.agents[1..=3];
            let status = convergence_status(relays, &targets, cp.conv_tol).unwrap();
            if tick > 1 {
                assert!(status.max_error < prev, "tick {tick}: {} !< {prev}", status.max_error);
            }
            if status.converged {
                break;
            }
            prev = status.max_error;
            let cmds = relay_commands(relays, &targets, &cp, &lim).unwrap();
            w.step(&cmds, &lim).unwrap();
            assert!(tick < 100_000);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = Vec3> {
            (-5000.0f64..5000.0, -5000.0f64..5000.0, 0.0f64..200.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        proptest! {
            #[test]
            fn spacing_and_reversal(g in point(), l in point(), m in 0usize..=8) {
                let ch = chain(m);
                let fwd = desired_positions(g, l, &ch);
                let rev = desired_positions(l, g, &ch);
                let gap = (l.xy() - g.xy()).norm() / (m as f64 + 1.0);
                let mut prev = Vec3::new(g.x, g.y, ch.cruise_alt);
                for q in fwd.iter().chain(std::iter::once(&Vec3::new(l.x, l.y, ch.cruise_alt))) {
                    prop_assert!(((q - prev).xy().norm() - gap).abs() < 1e-9);
                    prop_assert_eq!(q.z, ch.cruise_alt);
                    prev = *q;
                }
                for (a, b) in fwd.iter().zip(rev.iter().rev()) {
                    prop_assert!((a - b).norm() < 1e-9);
                }
            }

            #[test]
            fn scale_in_unit_interval(g in point(), l in point(), m in 0usize..6, alpha in 0.05f64..0.95) {
                let cp = ControllerParams { alpha, ..Default::default() };
                let s = stretch_guard(g, l, m, &RadioParams::default(), &cp);
                prop_assert!((0.0..=1.0).contains(&s));
            }

            #[test]
            fn commands_bounded(p in point(), q in point(), k_p in 0.01f64..5.0) {
                let cp = ControllerParams { k_p, ..Default::default() };
                let lim = KinematicLimits::default();
                let cmds = relay_commands(&[relay_at(1, p)], &[q], &cp, &lim).unwrap();
                prop_assert!(cmds[&1].norm() <= lim.v_max + 1e-9);
            }
        }
    }
}
