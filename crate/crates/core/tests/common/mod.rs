#![allow(dead_code)]

use std::path::PathBuf;

use relaylab::scenario::{load_scenario, ScenarioConfig, TraceRecord};

pub const SCENARIOS: [&str; 5] = ["range_extension", "leash", "crossing", "breakwater", "formation"];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> ScenarioConfig {
    load_scenario(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn min_airborne_separation(trace: &[TraceRecord]) -> f64 {
    trace.iter().filter_map(|r| r.min_separation).fold(f64::INFINITY, f64::min)
}

pub fn per_hop_lengths(trace: &[TraceRecord], relay_count: usize) -> impl Iterator<Item = f64> + '_ {
    let hops = relay_count as f64 + 1.0;
    trace.iter().map(move |r| {
        let ground = r.agents.iter().find(|a| a.role == relaylab::kernel::Role::GroundStation).unwrap();
        let lead = r.agents.iter().find(|a| a.role == relaylab::kernel::Role::Lead).unwrap();
        let d: f64 = (0..3).map(|k| (lead.position[k] - ground.position[k]).powi(2)).sum::<f64>().sqrt();
        d / hops
    })
}
