//! Shared unlicensed channel.
//!
//! Energy detection is reduced to a binary audibility matrix: node `a` senses
//! node `b`'s transmissions iff `audibility[a][b]`. Propagation delay is zero.
//! A transmission is lost at a receiver if any other transmission audible at
//! that receiver overlaps it in time, unless capture is enabled and the
//! wanted signal dominates every interferer by the configured margin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionKind {
    LaaData,
    LaaReservation,
    LaaDrs,
    WifiData,
    WifiAck,
    ProbeData,
}

impl TransmissionKind {
    /// Reservation signals and standalone DRS carry no user payload.
    pub fn carries_payload(self) -> bool {
        !matches!(
            self,
            TransmissionKind::LaaReservation | TransmissionKind::LaaDrs
        )
    }

    pub fn is_laa(self) -> bool {
        matches!(
            self,
            TransmissionKind::LaaData | TransmissionKind::LaaReservation | TransmissionKind::LaaDrs
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            TransmissionKind::LaaData => "laa_data",
            TransmissionKind::LaaReservation => "laa_reservation",
            TransmissionKind::LaaDrs => "laa_drs",
            TransmissionKind::WifiData => "wifi_data",
            TransmissionKind::WifiAck => "wifi_ack",
            TransmissionKind::ProbeData => "probe_data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

/// One airtime occupation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub id: TxId,
    pub source: NodeId,
    pub kind: TransmissionKind,
    pub start: SimTime,
    pub end: SimTime,
    pub power_dbm: f64,
    pub payload_bits: u64,
}

impl Transmission {
    pub fn duration(&self) -> SimTime {
        self.end - self.start
    }

    pub fn overlaps(&self, start: SimTime, end: SimTime) -> bool {
        self.start < end && start < self.end
    }
}

/// A transmission not yet placed on the medium; the id is assigned by
/// [`Medium::begin_burst`].
#[derive(Debug, Clone, PartialEq)]
pub struct TxSpec {
    pub source: NodeId,
    pub kind: TransmissionKind,
    pub start: SimTime,
    pub end: SimTime,
    pub power_dbm: f64,
    pub payload_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    /// `audibility[listener][source]`
    pub audibility: Vec<Vec<bool>>,
    pub ed_threshold_dbm_per_mhz: Vec<f64>,
    pub bandwidth_mhz: f64,
    pub capture_enabled: bool,
    pub capture_margin_db: f64,
}

pub const ED_THRESHOLD_RANGE: (f64, f64) = (-85.0, -75.0);
pub const DEFAULT_ED_THRESHOLD: f64 = -75.0;

impl MediumConfig {
    pub fn all_audible(n: usize) -> Self {
        MediumConfig {
            audibility: vec![vec![true; n]; n],
            ed_threshold_dbm_per_mhz: vec![DEFAULT_ED_THRESHOLD; n],
            bandwidth_mhz: 20.0,
            capture_enabled: false,
            capture_margin_db: 10.0,
        }
    }

    /// Marks `a` and `b` mutually inaudible.
    pub fn hide(&mut self, a: NodeId, b: NodeId) {
        self.audibility[a.index()][b.index()] = false;
        self.audibility[b.index()][a.index()] = false;
    }

    pub fn node_count(&self) -> usize {
        self.audibility.len()
    }

    pub fn validate(&self) -> Result<(), MediumError> {
        let n = self.audibility.len();
        if self.audibility.iter().any(|row| row.len() != n) {
            return Err(MediumError::Config(
                "audibility matrix must be square".into(),
            ));
        }
        if self.ed_threshold_dbm_per_mhz.len() != n {
            return Err(MediumError::Config(format!(
                "expected {n} ED thresholds, got {}",
                self.ed_threshold_dbm_per_mhz.len()
            )));
        }
        let (lo, hi) = ED_THRESHOLD_RANGE;
        if let Some(bad) = self
            .ed_threshold_dbm_per_mhz
            .iter()
            .find(|t| !(lo..=hi).contains(*t))
        {
            return Err(MediumError::Config(format!(
                "ED threshold {bad} dBm/MHz outside [{lo}, {hi}]"
            )));
        }
        if self.bandwidth_mhz <= 0.0 {
            return Err(MediumError::Config("bandwidth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MediumError {
    #[error("invalid medium config: {0}")]
    Config(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("transmission must start at the current clock ({now}), got {start}")]
    NotNow { now: SimTime, start: SimTime },
    #[error("transmission has non-positive duration ({start}..{end})")]
    EmptyTransmission { start: SimTime, end: SimTime },
    #[error("burst segments must be contiguous and share one source")]
    Discontiguous,
    #[error("{0} started a transmission while already transmitting")]
    SourceBusy(NodeId),
    #[error("no active burst {0:?}")]
    UnknownBurst(BurstId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceptionOutcome {
    Success,
    Collision,
}

impl ReceptionOutcome {
    pub fn is_success(self) -> bool {
        self == ReceptionOutcome::Success
    }
}

/// Carrier-sense transition seen by one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SenseChange {
    pub node: NodeId,
    pub busy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BurstId(pub u64);

#[derive(Debug)]
struct ActiveBurst {
    id: BurstId,
    source: NodeId,
    end: SimTime,
}

/// Result of [`Medium::begin_burst`].
#[derive(Debug)]
pub struct BurstStart {
    pub id: BurstId,
    pub end: SimTime,
    pub tx_ids: Vec<TxId>,
    pub changes: Vec<SenseChange>,
}

#[derive(Debug)]
pub struct Medium {
    cfg: MediumConfig,
    /// audible transmissions by others currently active, per listener
    heard: Vec<u32>,
    /// own transmissions currently active, per node
    own: Vec<u32>,
    active: Vec<ActiveBurst>,
    log: Vec<Transmission>,
    longest: SimTime,
    next_tx: u64,
    next_burst: u64,
    now: SimTime,
}

impl Medium {
    pub fn new(cfg: MediumConfig) -> Result<Self, MediumError> {
        cfg.validate()?;
        let n = cfg.node_count();
        Ok(Medium {
            cfg,
            heard: vec![0; n],
            own: vec![0; n],
            active: Vec::new(),
            log: Vec::new(),
            longest: SimTime::ZERO,
            next_tx: 0,
            next_burst: 0,
            now: SimTime::ZERO,
        })
    }

    pub fn config(&self) -> &MediumConfig {
        &self.cfg
    }

    fn check(&self, node: NodeId) -> Result<(), MediumError> {
        if node.index() < self.heard.len() {
            Ok(())
        } else {
            Err(MediumError::UnknownNode(node))
        }
    }

    fn audible(&self, listener: NodeId, source: NodeId) -> bool {
        self.cfg.audibility[listener.index()][source.index()]
    }

    /// True when no transmission audible to `node` (other than its own) is
    /// active at the current instant.
    pub fn is_idle(&self, node: NodeId) -> Result<bool, MediumError> {
        self.check(node)?;
        Ok(self.heard[node.index()] == 0)
    }

    /// Carrier sense as seen by a contending node: busy while others are
    /// heard or while the node itself is transmitting.
    pub fn senses_busy(&self, node: NodeId) -> bool {
        self.heard[node.index()] > 0 || self.own[node.index()] > 0
    }

    pub fn is_transmitting(&self, node: NodeId) -> bool {
        self.own[node.index()] > 0
    }

    pub(crate) fn set_now(&mut self, now: SimTime) {
        self.now = now;
    }

    /// Places a single transmission on the channel.
    pub fn begin_tx(&mut self, tx: TxSpec) -> Result<BurstStart, MediumError> {
        self.begin_burst(vec![tx])
    }

    /// Places back-to-back segments from one source on the channel. The
    /// segments are logged separately but sensed as one busy period.
    pub fn begin_burst(&mut self, segments: Vec<TxSpec>) -> Result<BurstStart, MediumError> {
        let first = segments.first().ok_or(MediumError::Discontiguous)?;
        let source = first.source;
        self.check(source)?;
        if first.start != self.now {
            return Err(MediumError::NotNow {
                now: self.now,
                start: first.start,
            });
        }
        let mut cursor = first.start;
        for seg in &segments {
            if seg.source != source || seg.start != cursor {
                return Err(MediumError::Discontiguous);
            }
            if seg.end <= seg.start {
                return Err(MediumError::EmptyTransmission {
                    start: seg.start,
                    end: seg.end,
                });
            }
            cursor = seg.end;
        }
        if self.own[source.index()] > 0 {
            return Err(MediumError::SourceBusy(source));
        }

        let id = BurstId(self.next_burst);
        self.next_burst += 1;
        let mut tx_ids = Vec::with_capacity(segments.len());
        for seg in segments {
            let tx = Transmission {
                id: TxId(self.next_tx),
                source,
                kind: seg.kind,
                start: seg.start,
                end: seg.end,
                power_dbm: seg.power_dbm,
                payload_bits: seg.payload_bits,
            };
            self.next_tx += 1;
            self.longest = self.longest.max(tx.duration());
            tx_ids.push(tx.id);
            self.log.push(tx);
        }
        self.active.push(ActiveBurst {
            id,
            source,
            end: cursor,
        });

        let mut changes = Vec::new();
        for listener in 0..self.heard.len() {
            let node = NodeId(listener as u32);
            let was_busy = self.senses_busy(node);
            if node == source {
                self.own[listener] += 1;
            } else if self.audible(node, source) {
                self.heard[listener] += 1;
            } else {
                continue;
            }
            if !was_busy {
                changes.push(SenseChange { node, busy: true });
            }
        }
        Ok(BurstStart {
            id,
            end: cursor,
            tx_ids,
            changes,
        })
    }

    /// Removes a finished burst from the active set.
    pub fn end_burst(&mut self, id: BurstId) -> Result<Vec<SenseChange>, MediumError> {
        let pos = self
            .active
            .iter()
            .position(|b| b.id == id)
            .ok_or(MediumError::UnknownBurst(id))?;
        let burst = self.active.swap_remove(pos);
        debug_assert_eq!(burst.end, self.now);
        let source = burst.source;
        let mut changes = Vec::new();
        for listener in 0..self.heard.len() {
            let node = NodeId(listener as u32);
            if node == source {
                self.own[listener] -= 1;
            } else if self.audible(node, source) {
                self.heard[listener] -= 1;
            } else {
                continue;
            }
            if !self.senses_busy(node) {
                changes.push(SenseChange { node, busy: false });
            }
        }
        Ok(changes)
    }

    /// Reception outcome of `tx` at `receiver`.
    pub fn resolve_reception(&self, tx: &Transmission, receiver: NodeId) -> ReceptionOutcome {
        self.resolve_interval(tx.source, receiver, tx.start, tx.end, tx.power_dbm)
    }

    /// Reception outcome of the part of `source`'s signal spanning
    /// `[start, end)` at `receiver`. The receiver's own transmissions count
    /// as interference (half duplex).
    pub fn resolve_interval(
        &self,
        source: NodeId,
        receiver: NodeId,
        start: SimTime,
        end: SimTime,
        power_dbm: f64,
    ) -> ReceptionOutcome {
        for other in self.overlapping(start, end) {
            if other.source == source {
                continue;
            }
            let interferes = other.source == receiver || self.audible(receiver, other.source);
            if !interferes {
                continue;
            }
            let captured = self.cfg.capture_enabled
                && other.source != receiver
                && other.start > start
                && power_dbm - other.power_dbm >= self.cfg.capture_margin_db;
            if !captured {
                return ReceptionOutcome::Collision;
            }
        }
        ReceptionOutcome::Success
    }

    fn overlapping(&self, start: SimTime, end: SimTime) -> impl Iterator<Item = &Transmission> {
        // the log is sorted by start; nothing that began more than `longest`
        // before `start` can still be on air
        let horizon = start.saturating_sub(self.longest);
        let from = self.log.partition_point(|t| t.start < horizon);
        self.log[from..]
            .iter()
            .filter(move |t| t.overlaps(start, end))
    }

    /// Every transmission placed on the channel so far, in start order.
    pub fn log(&self) -> &[Transmission] {
        &self.log
    }

    pub fn into_log(self) -> Vec<Transmission> {
        self.log
    }
}
