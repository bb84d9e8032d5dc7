//! Raw sample collection during a run, and the post-run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{NodeId, SimTime};
use crate::medium::{Transmission, TransmissionKind};
use crate::sim::RunOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowInfo {
    pub name: String,
    /// Name of the transmitting node.
    pub source: String,
    pub kind: TransmissionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub time: SimTime,
    pub flow: FlowId,
    pub bits: u64,
    /// Enqueue to delivery.
    pub delay: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RttSample {
    pub time: SimTime,
    pub rtt: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub time: SimTime,
    pub flow: FlowId,
    pub bits: u64,
}

/// One channel occupation by one node and the cap it was subject to
/// (MCOT or TXOP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstRecord {
    pub source: NodeId,
    pub start: SimTime,
    pub end: SimTime,
    pub limit: SimTime,
}

/// Everything recorded while a run is in progress.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub flows: Vec<FlowInfo>,
    pub deliveries: Vec<Delivery>,
    pub rtts: Vec<RttSample>,
    pub drops: Vec<DropRecord>,
    pub enqueued_bits: Vec<u64>,
    pub transmitted_bits: Vec<u64>,
    pub bursts: Vec<BurstRecord>,
    pub counters: BTreeMap<String, u64>,
}

impl RunStats {
    pub fn register_flow(&mut self, name: &str, source: &str, kind: TransmissionKind) -> FlowId {
        self.flows.push(FlowInfo {
            name: name.to_string(),
            source: source.to_string(),
            kind,
        });
        self.enqueued_bits.push(0);
        self.transmitted_bits.push(0);
        FlowId(self.flows.len() - 1)
    }

    pub fn flow_id(&self, name: &str) -> Option<FlowId> {
        self.flows.iter().position(|f| f.name == name).map(FlowId)
    }

    pub fn on_enqueue(&mut self, flow: FlowId, bits: u64) {
        self.enqueued_bits[flow.0] += bits;
    }

    /// First transmission of these bits; retransmissions are not counted.
    pub fn on_transmit(&mut self, flow: FlowId, bits: u64) {
        self.transmitted_bits[flow.0] += bits;
    }

    pub fn on_deliver(&mut self, time: SimTime, flow: FlowId, bits: u64, delay: SimTime) {
        self.deliveries.push(Delivery {
            time,
            flow,
            bits,
            delay,
        });
    }

    pub fn on_drop(&mut self, time: SimTime, flow: FlowId, bits: u64) {
        self.drops.push(DropRecord { time, flow, bits });
    }

    pub fn on_rtt(&mut self, time: SimTime, rtt: SimTime) {
        self.rtts.push(RttSample { time, rtt });
    }

    pub fn record_burst(&mut self, source: NodeId, start: SimTime, end: SimTime, limit: SimTime) {
        self.bursts.push(BurstRecord {
            source,
            start,
            end,
            limit,
        });
    }

    pub fn count(&mut self, label: &str) {
        *self.counters.entry(label.to_string()).or_insert(0) += 1;
    }

    pub fn counter(&self, label: &str) -> u64 {
        self.counters.get(label).copied().unwrap_or(0)
    }

    /// Delivered bits over the whole run, warmup included.
    pub fn delivered_total(&self, flow: FlowId) -> u64 {
        self.deliveries
            .iter()
            .filter(|d| d.flow == flow)
            .map(|d| d.bits)
            .sum()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("warmup {warmup} must be shorter than horizon {horizon}")]
    Window { warmup: SimTime, horizon: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JainIndex {
    pub value: f64,
    /// Set when the input had no positive value; `value` is then 1.0.
    pub degenerate: bool,
}

/// `(Σx)² / (n·Σx²)`.
pub fn jain_index(values: &[f64]) -> JainIndex {
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if values.is_empty() || sq <= 0.0 {
        return JainIndex {
            value: 1.0,
            degenerate: true,
        };
    }
    JainIndex {
        value: sum * sum / (values.len() as f64 * sq),
        degenerate: false,
    }
}

/// Fraction of `[from, to)` covered by the union of the matching
/// transmissions.
pub fn occupancy<F>(trace: &[Transmission], filter: F, from: SimTime, to: SimTime) -> f64
where
    F: Fn(&Transmission) -> bool,
{
    if to <= from {
        return 0.0;
    }
    let mut spans: Vec<(SimTime, SimTime)> = trace
        .iter()
        .filter(|t| filter(t))
        .filter(|t| t.end > from && t.start < to)
        .map(|t| (t.start.max(from), t.end.min(to)))
        .collect();
    spans.sort();
    let mut covered = 0u64;
    let mut cur: Option<(SimTime, SimTime)> = None;
    for (s, e) in spans {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                covered += (ce - cs).as_nanos();
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        covered += (ce - cs).as_nanos();
    }
    covered as f64 / (to - from).as_nanos() as f64
}

/// Nearest-rank percentile of an ascending slice; `p` in (0, 100].
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub flow_id: usize,
    pub name: String,
    pub source: String,
    pub kind: TransmissionKind,
    pub bits_delivered: u64,
    pub goodput_bps: f64,
    pub frames_dropped: u64,
    pub mean_delay_ms: Option<f64>,
    pub p95_delay_ms: Option<f64>,
    /// Whole-run counters for the conservation check.
    pub bits_enqueued_total: u64,
    pub bits_transmitted_total: u64,
    pub bits_delivered_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub rtt_samples: usize,
    pub mean_ms: Option<f64>,
    pub p50_ms: Option<f64>,
    pub p95_ms: Option<f64>,
    /// No post-warmup sample although probing was enabled.
    pub insufficient_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceOccupancy {
    pub source: String,
    /// Any airtime of the node, control signals included.
    pub occupancy: f64,
    /// Payload-carrying airtime only.
    pub data_occupancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub flows: Vec<FlowReport>,
    pub probe: Option<ProbeReport>,
    pub occupancy: Vec<SourceOccupancy>,
    pub total_busy_fraction: f64,
    /// Over the airtime shares of the technologies present (LAA, Wi-Fi).
    pub jain_index: JainIndex,
    pub counters: BTreeMap<String, u64>,
}

impl MetricsReport {
    pub fn flow(&self, name: &str) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.name == name)
    }

    /// Summed goodput of all flows of one kind.
    pub fn goodput_of_kind(&self, kind: TransmissionKind) -> f64 {
        self.flows
            .iter()
            .filter(|f| f.kind == kind)
            .map(|f| f.goodput_bps)
            .sum()
    }

    pub fn occupancy_of(&self, source: &str) -> Option<&SourceOccupancy> {
        self.occupancy.iter().find(|o| o.source == source)
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Builds the report of one run, discarding everything stamped before the
/// warmup ends.
pub fn summarize(out: &RunOutput) -> Result<MetricsReport, MetricsError> {
    let (warmup, horizon) = (out.warmup, out.horizon);
    if warmup >= horizon {
        return Err(MetricsError::Window { warmup, horizon });
    }
    let window_s = (horizon - warmup).as_secs_f64();
    let stats = &out.stats;
    let kept = |t: SimTime| t >= warmup && t <= horizon;

    let flows = stats
        .flows
        .iter()
        .enumerate()
        .map(|(i, info)| {
            let id = FlowId(i);
            let ds: Vec<&Delivery> = stats
                .deliveries
                .iter()
                .filter(|d| d.flow == id && kept(d.time))
                .collect();
            let bits: u64 = ds.iter().map(|d| d.bits).sum();
            let mut delays: Vec<f64> = ds.iter().map(|d| d.delay.as_millis_f64()).collect();
            delays.sort_by(f64::total_cmp);
            FlowReport {
                flow_id: i,
                name: info.name.clone(),
                source: info.source.clone(),
                kind: info.kind,
                bits_delivered: bits,
                goodput_bps: bits as f64 / window_s,
                frames_dropped: stats
                    .drops
                    .iter()
                    .filter(|d| d.flow == id && kept(d.time))
                    .count() as u64,
                mean_delay_ms: mean(&delays),
                p95_delay_ms: percentile_nearest_rank(&delays, 95.0),
                bits_enqueued_total: stats.enqueued_bits[i],
                bits_transmitted_total: stats.transmitted_bits[i],
                bits_delivered_total: stats.delivered_total(id),
            }
        })
        .collect();

    let probing = stats
        .flows
        .iter()
        .any(|f| f.kind == TransmissionKind::ProbeData);
    let probe = probing.then(|| {
        let mut rtts: Vec<f64> = stats
            .rtts
            .iter()
            .filter(|r| kept(r.time))
            .map(|r| r.rtt.as_millis_f64())
            .collect();
        rtts.sort_by(f64::total_cmp);
        ProbeReport {
            rtt_samples: rtts.len(),
            mean_ms: mean(&rtts),
            p50_ms: percentile_nearest_rank(&rtts, 50.0),
            p95_ms: percentile_nearest_rank(&rtts, 95.0),
            insufficient_data: rtts.is_empty(),
        }
    });

    let occupancy_list = out
        .node_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let node = NodeId(i as u32);
            SourceOccupancy {
                source: name.clone(),
                occupancy: occupancy(&out.log, |t| t.source == node, warmup, horizon),
                data_occupancy: occupancy(
                    &out.log,
                    |t| t.source == node && t.kind.carries_payload(),
                    warmup,
                    horizon,
                ),
            }
        })
        .collect();
    let total_busy_fraction = occupancy(&out.log, |_| true, warmup, horizon);

    let laa = out.log.iter().any(|t| t.kind.is_laa());
    let wifi = out.log.iter().any(|t| !t.kind.is_laa());
    let mut shares = Vec::new();
    if laa {
        shares.push(occupancy(&out.log, |t| t.kind.is_laa(), warmup, horizon));
    }
    if wifi {
        shares.push(occupancy(&out.log, |t| !t.kind.is_laa(), warmup, horizon));
    }

    Ok(MetricsReport {
        seed: out.seed,
        horizon_s: horizon.as_secs_f64(),
        warmup_s: warmup.as_secs_f64(),
        flows,
        probe,
        occupancy: occupancy_list,
        total_busy_fraction,
        jain_index: jain_index(&shares),
        counters: stats.counters.clone(),
    })
}
