use std::fmt::Display;

use crate::net::{delivery_stats, NetError, NetEvent};

use super::run::TraceRecord;

pub const CSV_HEADER: &str = "delivery_ratio,mean_latency_ticks,min_separation_m,connected_fraction,convergence_tick,max_hop_length_m,packet_count";

/// Run summary. Every field is a function of the trace alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `None` when no packet terminated.
    pub delivery_ratio: Option<f64>,
    pub mean_latency_ticks: Option<f64>,
    /// Closest airborne approach over the run.
    pub min_separation_m: Option<f64>,
    /// Fraction of records in which every hop was up.
    pub connected_fraction: f64,
    /// First tick at which every relay was within tolerance of its target.
    pub convergence_tick: Option<u64>,
    pub max_hop_length_m: f64,
    /// Terminated (delivered + dropped) packets.
    pub packet_count: usize,
}

impl Metrics {
    pub fn from_trace(trace: &[TraceRecord], conv_tol: f64) -> Result<Self, NetError> {
        let events: Vec<NetEvent> = trace.iter().flat_map(|r| r.events.iter().copied()).collect();
        let stats = delivery_stats(&events)?;
        let terminated = stats.terminated();
        let connected = trace.iter().filter(|r| r.links.iter().all(|l| l.up)).count();
        Ok(Self {
            delivery_ratio: (terminated > 0).then_some(stats.delivery_ratio),
            mean_latency_ticks: stats.mean_latency_ticks,
            min_separation_m: trace.iter().filter_map(|r| r.min_separation).reduce(f64::min),
            connected_fraction: if trace.is_empty() { 0.0 } else { connected as f64 / trace.len() as f64 },
            convergence_tick: trace.iter().find(|r| r.max_relay_error <= conv_tol).map(|r| r.tick),
            max_hop_length_m: trace.iter().flat_map(|r| r.links.iter().map(|l| l.distance)).fold(0.0, f64::max),
            packet_count: terminated,
        })
    }

    /// Header line and one data row, newline terminated. Absent values are `NA`.
    pub fn to_csv(&self) -> String {
        fn cell<T: Display>(v: Option<T>) -> String {
            v.map_or_else(|| "NA".to_string(), |v| v.to_string())
        }
        format!(
            "{CSV_HEADER}\n{},{},{},{},{},{},{}\n",
            cell(self.delivery_ratio),
            cell(self.mean_latency_ticks),
            cell(self.min_separation_m),
            self.connected_fraction,
            cell(self.convergence_tick),
            self.max_hop_length_m,
            self.packet_count,
        )
    }
}
