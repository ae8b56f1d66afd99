//! Store-and-forward packet relaying along the static chain order.
//!
//! Each tick every queued packet may advance at most one hop toward its
//! destination, and only over an up link. Packets wait while their next hop
//! is down and are dropped once they reach their TTL undelivered.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::radio::LinkEstimate;

pub const DEFAULT_TTL_TICKS: u64 = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("degenerate route: source and destination are both {0}")]
    DegenerateRoute(usize),
    #[error("agent {0} is not a chain member")]
    NotInChain(usize),
    #[error("packet size must be positive")]
    EmptyPacket,
    #[error("packet {0} has more than one terminal event")]
    DoubleTermination(u64),
    #[error("packet {0} has events before being enqueued")]
    UnknownPacket(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub pkt_id: u64,
    pub src: usize,
    pub dst: usize,
    pub created_tick: u64,
    pub size_bytes: u64,
    pub hops_taken: usize,
    pub deadline_ticks: u64,
    last_moved: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Enqueued,
    Hopped,
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum DropReason {
    #[serde(rename = "ttl_expired")]
    TtlExpired,
    /// Reserved for link policies that drop immediately; store-and-forward
    /// never emits it.
    #[serde(rename = "link_down")]
    LinkDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NetEvent {
    pub tick: u64,
    pub pkt_id: u64,
    pub kind: EventKind,
    pub at_node: usize,
    pub reason: Option<DropReason>,
}

/// Queue state of the relay network. `chain` lists node ids ground first.
#[derive(Debug, Clone)]
pub struct RelayNet {
    chain: Vec<usize>,
    queues: Vec<Vec<Packet>>,
    next_id: u64,
    ttl_ticks: u64,
    bytes_per_tick: Option<u64>,
    outbox: Vec<NetEvent>,
}

impl RelayNet {
    pub fn new(chain: Vec<usize>) -> Self {
        let queues = vec![Vec::new(); chain.len()];
        Self { chain, queues, next_id: 0, ttl_ticks: DEFAULT_TTL_TICKS, bytes_per_tick: None, outbox: Vec::new() }
    }

    pub fn with_ttl(mut self, ttl_ticks: u64) -> Self {
        self.ttl_ticks = ttl_ticks;
        self
    }

    /// Caps the bytes crossing each hop per tick; packets over the cap wait.
    pub fn with_link_capacity(mut self, bytes_per_tick: Option<u64>) -> Self {
        self.bytes_per_tick = bytes_per_tick;
        self
    }

    fn index_of(&self, id: usize) -> Result<usize, NetError> {
        self.chain.iter().position(|&n| n == id).ok_or(NetError::NotInChain(id))
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().map(Vec::len).sum()
    }

    /// Queues a packet at `src`. Its `Enqueued` event is returned by the next
    /// [`RelayNet::forward_tick`], and it first moves on the following tick.
    pub fn enqueue_packet(&mut self, src: usize, dst: usize, size_bytes: u64, tick: u64) -> Result<u64, NetError> {
        if src == dst {
            return Err(NetError::DegenerateRoute(src));
        }
        if size_bytes == 0 {
            return Err(NetError::EmptyPacket);
        }
        let at = self.index_of(src)?;
        self.index_of(dst)?;
        let pkt_id = self.next_id;
        self.next_id += 1;
        self.queues[at].push(Packet {
            pkt_id,
            src,
            dst,
            created_tick: tick,
            size_bytes,
            hops_taken: 0,
            deadline_ticks: self.ttl_ticks,
            last_moved: tick,
        });
        self.outbox.push(NetEvent { tick, pkt_id, kind: EventKind::Enqueued, at_node: src, reason: None });
        Ok(pkt_id)
    }

    /// Advances every packet by at most one hop. `links[k]` is the hop between
    /// chain positions `k` and `k + 1`; a missing entry counts as down.
    pub fn forward_tick(&mut self, links: &[LinkEstimate], tick: u64) -> Vec<NetEvent> {
        let mut events = std::mem::take(&mut self.outbox);
        let mut hop_budget: Vec<Option<u64>> = vec![self.bytes_per_tick; self.chain.len().saturating_sub(1)];
        let hop_up = |k: usize| links.get(k).is_some_and(|l| l.up);

        for node in (0..self.chain.len()).rev() {
            let mut queue = std::mem::take(&mut self.queues[node]);
            queue.sort_by_key(|p| p.pkt_id);
            let mut stay = Vec::with_capacity(queue.len());
            for mut pkt in queue {
                let mut here = node;
                if pkt.last_moved < tick {
                    let dst = self.index_of(pkt.dst).expect("validated at enqueue");
                    let (next, hop) = if dst < node { (node - 1, node - 1) } else { (node + 1, node) };
                    let fits = match hop_budget[hop] {
                        Some(budget) => budget >= pkt.size_bytes,
                        None => true,
                    };
                    if hop_up(hop) && fits {
                        if let Some(budget) = hop_budget[hop].as_mut() {
                            *budget -= pkt.size_bytes;
                        }
                        pkt.hops_taken += 1;
                        pkt.last_moved = tick;
                        here = next;
                        let at_node = self.chain[next];
                        if next == dst {
                            events.push(NetEvent { tick, pkt_id: pkt.pkt_id, kind: EventKind::Delivered, at_node, reason: None });
                            continue;
                        }
                        events.push(NetEvent { tick, pkt_id: pkt.pkt_id, kind: EventKind::Hopped, at_node, reason: None });
                    }
                }
                if tick.saturating_sub(pkt.created_tick) >= pkt.deadline_ticks {
                    events.push(NetEvent {
                        tick,
                        pkt_id: pkt.pkt_id,
                        kind: EventKind::Dropped,
                        at_node: self.chain[here],
                        reason: Some(DropReason::TtlExpired),
                    });
                } else if here == node {
                    stay.push(pkt);
                } else {
                    self.queues[here].push(pkt);
                }
            }
            self.queues[node].extend(stay);
        }
        events
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryStats {
    pub delivered: usize,
    pub dropped: usize,
    /// 1.0 when no packet terminated; check [`DeliveryStats::terminated`].
    pub delivery_ratio: f64,
    pub mean_latency_ticks: Option<f64>,
    pub dropped_by_reason: BTreeMap<DropReason, usize>,
}

impl DeliveryStats {
    pub fn terminated(&self) -> usize {
        self.delivered + self.dropped
    }
}

pub fn delivery_stats(events: &[NetEvent]) -> Result<DeliveryStats, NetError> {
    let mut created: BTreeMap<u64, u64> = BTreeMap::new();
    let mut finished: BTreeSet<u64> = BTreeSet::new();
    let mut delivered = 0usize;
    let mut latency_sum = 0u64;
    let mut dropped_by_reason: BTreeMap<DropReason, usize> = BTreeMap::new();

    for e in events {
        if e.kind == EventKind::Enqueued {
            created.insert(e.pkt_id, e.tick);
            continue;
        }
        let Some(&t0) = created.get(&e.pkt_id) else {
            return Err(NetError::UnknownPacket(e.pkt_id));
        };
        if finished.contains(&e.pkt_id) {
            return Err(NetError::DoubleTermination(e.pkt_id));
        }
        match e.kind {
            EventKind::Delivered => {
                finished.insert(e.pkt_id);
                delivered += 1;
                latency_sum += e.tick - t0;
            }
            EventKind::Dropped => {
                finished.insert(e.pkt_id);
                *dropped_by_reason.entry(e.reason.unwrap_or(DropReason::TtlExpired)).or_default() += 1;
            }
            _ => {}
        }
    }
    let dropped: usize = dropped_by_reason.values().sum();
    let total = delivered + dropped;
    Ok(DeliveryStats {
        delivered,
        dropped,
        delivery_ratio: if total == 0 { 1.0 } else { delivered as f64 / total as f64 },
        mean_latency_ticks: (delivered > 0).then(|| latency_sum as f64 / delivered as f64),
        dropped_by_reason,
    })
}
