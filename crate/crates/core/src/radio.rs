//! Log-distance path-loss link model.
//!
//! `rssi(d) = p_tx - pl0 - 10 n log10(max(d, d0) / d0) + noise`. A link is up
//! when its margin over the receiver sensitivity is non-negative.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::AgentState;
use crate::relay::ChainTopology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("non-positive distance {0}")]
    NonPositiveDistance(f64),
    #[error("link endpoints are the same agent {0}")]
    SelfLink(usize),
    #[error("chain references unknown agent {0}")]
    DanglingId(usize),
    #[error("invalid radio parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// Transmit power, dBm.
    pub p_tx: f64,
    /// Path loss at the reference distance, dB.
    pub pl0: f64,
    /// Reference distance, m.
    pub d0: f64,
    pub n_exp: f64,
    /// Receiver sensitivity, dBm.
    pub rssi_min: f64,
    /// Shadowing standard deviation, dB. Zero disables noise draws.
    pub noise_sigma: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self { p_tx: 20.0, pl0: 40.0, d0: 1.0, n_exp: 2.2, rssi_min: -85.0, noise_sigma: 0.0 }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        let all_finite = [self.p_tx, self.pl0, self.d0, self.n_exp, self.rssi_min, self.noise_sigma]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(RadioError::Invalid { field: "p_tx", reason: "all parameters must be finite" });
        }
        if self.d0 <= 0.0 {
            return Err(RadioError::Invalid { field: "d0", reason: "must be > 0" });
        }
        if self.n_exp <= 0.0 {
            return Err(RadioError::Invalid { field: "n_exp", reason: "must be > 0" });
        }
        if self.noise_sigma < 0.0 {
            return Err(RadioError::Invalid { field: "noise_sigma", reason: "must be >= 0" });
        }
        if self.p_tx - self.pl0 <= self.rssi_min {
            return Err(RadioError::Invalid {
                field: "rssi_min",
                reason: "p_tx - pl0 must exceed rssi_min (no link even at d0)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkEstimate {
    #[serde(rename = "from")]
    pub from_id: usize,
    #[serde(rename = "to")]
    pub to_id: usize,
    pub distance: f64,
    pub rssi: f64,
    pub margin: f64,
    pub up: bool,
}

pub fn rssi(d: f64, rp: &RadioParams, noise_draw: f64) -> Result<f64, RadioError> {
    if !(d > 0.0) {
        return Err(RadioError::NonPositiveDistance(d));
    }
    Ok(rssi_unchecked(d.max(rp.d0), rp) + noise_draw)
}

// Callers guarantee d >= d0.
fn rssi_unchecked(d: f64, rp: &RadioParams) -> f64 {
    rp.p_tx - rp.pl0 - 10.0 * rp.n_exp * (d / rp.d0).log10()
}

/// Distance at which the noise-free RSSI equals the receiver sensitivity.
pub fn max_link_range(rp: &RadioParams) -> f64 {
    rp.d0 * 10f64.powf((rp.p_tx - rp.pl0 - rp.rssi_min) / (10.0 * rp.n_exp))
}

/// Evaluates one link. Coincident agents are clamped to `d0` like any other
/// sub-reference distance.
pub fn link_state(from: &AgentState, to: &AgentState, rp: &RadioParams, noise_draw: f64) -> Result<LinkEstimate, RadioError> {
    if from.id == to.id {
        return Err(RadioError::SelfLink(from.id));
    }
    let distance = (to.position - from.position).norm();
    let clamped = distance.max(rp.d0);
    let rssi = rssi_unchecked(clamped, rp) + noise_draw;
    let mut margin = rssi - rp.rssi_min;
    let up = if noise_draw == 0.0 {
        // The closed-form range is the connectivity boundary; keep the margin
        // sign consistent with it when log/pow rounding disagrees.
        let up = clamped <= max_link_range(rp);
        if up && margin < 0.0 {
            margin = 0.0;
        } else if !up && margin >= 0.0 {
            margin = -f64::EPSILON;
        }
        up
    } else {
        margin >= 0.0
    };
    Ok(LinkEstimate { from_id: from.id, to_id: to.id, distance, rssi, margin, up })
}

fn find(agents: &[AgentState], id: usize) -> Result<&AgentState, RadioError> {
    agents.iter().find(|a| a.id == id).ok_or(RadioError::DanglingId(id))
}

/// One estimate per hop, ground side first, without shadowing.
pub fn chain_links(chain: &ChainTopology, agents: &[AgentState], rp: &RadioParams) -> Result<Vec<LinkEstimate>, RadioError> {
    chain_links_with(chain, agents, rp, || 0.0)
}

/// Like [`chain_links`], drawing one shadowing sample per hop from `rng` in
/// hop order when `noise_sigma > 0`. Nothing is drawn otherwise.
pub fn chain_links_noisy<R: Rng>(
    chain: &ChainTopology,
    agents: &[AgentState],
    rp: &RadioParams,
    rng: &mut R,
) -> Result<Vec<LinkEstimate>, RadioError> {
    if rp.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, rp.noise_sigma).expect("sigma validated");
        chain_links_with(chain, agents, rp, || normal.sample(rng))
    } else {
        chain_links(chain, agents, rp)
    }
}

fn chain_links_with(
    chain: &ChainTopology,
    agents: &[AgentState],
    rp: &RadioParams,
    mut noise: impl FnMut() -> f64,
) -> Result<Vec<LinkEstimate>, RadioError> {
    chain
        .hops()
        .map(|(from, to)| link_state(find(agents, from)?, find(agents, to)?, rp, noise()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Role, Vec3};
    use approx::assert_abs_diff_eq;

    fn at(id: usize, x: f64) -> AgentState {
        AgentState::at_rest(id, Role::Relay, Vec3::new(x, 0.0, 0.0))
    }

    #[test]
    fn rssi_at_defaults() {
        let rp = RadioParams::default();
        assert_abs_diff_eq!(rssi(1.0, &rp, 0.0).unwrap(), -20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rssi(10.0, &rp, 0.0).unwrap(), -42.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rssi(100.0, &rp, 0.0).unwrap(), -64.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rssi(0.25, &rp, 0.0).unwrap(), -20.0, epsilon = 1e-12);
    }

    #[test]
    fn rssi_rejects_non_positive() {
        let rp = RadioParams::default();
        assert_eq!(rssi(0.0, &rp, 0.0).unwrap_err().to_string(), "non-positive distance 0");
        assert!(rssi(-3.0, &rp, 0.0).is_err());
    }

    #[test]
    fn max_range_defaults() {
        let rp = RadioParams::default();
        // 10^(65/22)
        assert_abs_diff_eq!(max_link_range(&rp), 900.6280202112784, epsilon = 1e-9);
        let unit = RadioParams { rssi_min: rp.p_tx - rp.pl0 - 10.0 * rp.n_exp, ..rp };
        assert_abs_diff_eq!(max_link_range(&unit), 10.0 * rp.d0, epsilon = 1e-12);
    }

    #[test]
    fn link_boundaries() {
        let rp = RadioParams::default();
        let d_max = max_link_range(&rp);

        let same = link_state(&at(0, 0.0), &at(1, 0.0), &rp, 0.0).unwrap();
        assert!(same.up);
        assert_abs_diff_eq!(same.rssi, rp.p_tx - rp.pl0);

        let edge = link_state(&at(0, 0.0), &at(1, d_max), &rp, 0.0).unwrap();
        assert!(edge.up);
        assert_abs_diff_eq!(edge.margin, 0.0, epsilon = 1e-9);

        let far = link_state(&at(0, 0.0), &at(1, 2.0 * d_max), &rp, 0.0).unwrap();
        assert!(!far.up);
        assert_abs_diff_eq!(far.margin, -10.0 * rp.n_exp * 2f64.log10(), epsilon = 1e-9);
        assert_abs_diff_eq!(far.margin, -6.6227, epsilon = 1e-4);

        assert_eq!(link_state(&at(4, 0.0), &at(4, 1.0), &rp, 0.0).unwrap_err(), RadioError::SelfLink(4));
    }

    #[test]
    fn validation() {
        assert!(RadioParams::default().validate().is_ok());
        let dead = RadioParams { rssi_min: -20.0, ..Default::default() };
        assert!(matches!(dead.validate(), Err(RadioError::Invalid { field: "rssi_min", .. })));
        let bad_d0 = RadioParams { d0: 0.0, ..Default::default() };
        assert!(matches!(bad_d0.validate(), Err(RadioError::Invalid { field: "d0", .. })));
    }

    fn chain(m: usize) -> ChainTopology {
        ChainTopology { ground_id: 0, relay_ids: (1..=m).collect(), lead_id: m + 1, cruise_alt: 50.0 }
    }

    #[test]
    fn chain_link_counts_and_order() {
        let rp = RadioParams::default();
        let agents: Vec<_> = (0..4).map(|i| at(i, 0.0)).collect();
        let links = chain_links(&chain(2), &agents, &rp).unwrap();
        assert_eq!(links.len(), 3);
        assert!(links.iter().all(|l| l.up));
        let pairs: Vec<_> = links.iter().map(|l| (l.from_id, l.to_id)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn overstretched_chain_has_a_down_hop() {
        let rp = RadioParams::default();
        let d_max = max_link_range(&rp);
        let m = 2;
        let total = (m as f64 + 1.0) * d_max * 1.01;
        let agents: Vec<_> = (0..=m + 1).map(|i| at(i, total * i as f64 / (m as f64 + 1.0))).collect();
        let links = chain_links(&chain(m), &agents, &rp).unwrap();
        assert!(links.iter().any(|l| !l.up));
    }

    #[test]
    fn dangling_chain_id() {
        let rp = RadioParams::default();
        let agents = vec![at(0, 0.0), at(1, 1.0)];
        assert_eq!(chain_links(&chain(1), &agents, &rp).unwrap_err(), RadioError::DanglingId(2));
    }

    #[test]
    fn noisy_links_draw_only_with_sigma() {
        use rand::SeedableRng;
        let agents: Vec<_> = (0..3).map(|i| at(i, 100.0 * i as f64)).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let before = rng.clone();
        let quiet = chain_links_noisy(&chain(1), &agents, &RadioParams::default(), &mut rng).unwrap();
        assert_eq!(rng, before);
        assert_eq!(quiet, chain_links(&chain(1), &agents, &RadioParams::default()).unwrap());

        let noisy_rp = RadioParams { noise_sigma: 4.0, ..Default::default() };
        let noisy = chain_links_noisy(&chain(1), &agents, &noisy_rp, &mut rng).unwrap();
        assert_ne!(rng, before);
        assert!(noisy.iter().zip(&quiet).all(|(n, q)| n.rssi != q.rssi && n.distance == q.distance));
        assert!(noisy.iter().all(|l| l.up == (l.margin >= 0.0)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_distance(a in 1e-3f64..5000.0, b in 1e-3f64..5000.0) {
                let rp = RadioParams::default();
                let (d1, d2) = if a < b { (a, b) } else { (b, a) };
                let (r1, r2) = (rssi(d1, &rp, 0.0).unwrap(), rssi(d2, &rp, 0.0).unwrap());
                prop_assert!(r1 >= r2);
                if d1 >= rp.d0 && d1 < d2 {
                    prop_assert!(r1 > r2);
                }
            }

            #[test]
            fn up_flag_matches_range(d in 0.0f64..3000.0, n_exp in 1.5f64..4.0, rssi_min in -110.0f64..-30.0) {
                let rp = RadioParams { n_exp, rssi_min, ..Default::default() };
                let l = link_state(&at(0, 0.0), &at(1, d), &rp, 0.0).unwrap();
                prop_assert_eq!(l.up, d <= max_link_range(&rp));
                prop_assert_eq!(l.up, l.margin >= 0.0);
            }

            #[test]
            fn inverse_round_trip(p_tx in 0.0f64..30.0, n_exp in 1.5f64..4.0, rssi_min in -110.0f64..-30.0) {
                let rp = RadioParams { p_tx, n_exp, rssi_min, ..Default::default() };
                prop_assume!(rp.validate().is_ok());
                prop_assert!((rssi(max_link_range(&rp), &rp, 0.0).unwrap() - rssi_min).abs() < 1e-9);
            }
        }
    }
}
