//! 802.11 EDCA stations: one AP with associated clients, a single access
//! category per station, A-MPDU aggregation up to the TXOP limit, immediate
//! ACKs and binary exponential backoff with a retry limit.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::engine::{NodeId, RngStream, SimTime, StreamPurpose};
use crate::lbt::{AccessTiming, BurstFeedback, CwLadder, LbtMachine};
use crate::medium::{Transmission, TransmissionKind, TxSpec};
use crate::metrics::{FlowId, RunStats};
use crate::sim::{run_once, Contender, Ctx, SimError, SimEvent, SimNode, SimSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessCategory {
    Voice,
    Video,
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCategoryParams {
    pub ac: AccessCategory,
    /// AIFSN
    pub m: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub txop: SimTime,
}

impl AccessCategoryParams {
    pub const VOICE: AccessCategoryParams = AccessCategoryParams {
        ac: AccessCategory::Voice,
        m: 2,
        cw_min: 3,
        cw_max: 7,
        txop: SimTime::from_micros(2_080),
    };
    pub const VIDEO: AccessCategoryParams = AccessCategoryParams {
        ac: AccessCategory::Video,
        m: 2,
        cw_min: 7,
        cw_max: 15,
        txop: SimTime::from_micros(4_096),
    };
    pub const BEST_EFFORT: AccessCategoryParams = AccessCategoryParams {
        ac: AccessCategory::BestEffort,
        m: 3,
        cw_min: 15,
        cw_max: 1023,
        txop: SimTime::from_micros(2_528),
    };

    pub fn of(ac: AccessCategory) -> Self {
        match ac {
            AccessCategory::Voice => Self::VOICE,
            AccessCategory::Video => Self::VIDEO,
            AccessCategory::BestEffort => Self::BEST_EFFORT,
        }
    }

    pub fn aifs(&self, phy: &WifiPhyConfig) -> SimTime {
        phy.sifs + phy.slot * u64::from(self.m)
    }

    /// EDCA expressed in the same terms as LBT: SIFS plays the initial idle
    /// period and AIFSN the priority slots.
    pub fn timing(&self, phy: &WifiPhyConfig) -> AccessTiming {
        AccessTiming {
            initial_idle: phy.sifs,
            slot: phy.slot,
            m: self.m,
            cw_min: self.cw_min,
            cw_max: self.cw_max,
            mcot: self.txop,
            ladder: CwLadder::PowerOfTwoMinusOne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WifiPhyConfig {
    pub data_rate_bps: f64,
    pub sifs: SimTime,
    pub slot: SimTime,
    pub ack_duration: SimTime,
    /// Preamble and headers, per PPDU.
    pub frame_overhead: SimTime,
    /// A-MPDU airtime cap; the effective cap is also bounded by the TXOP.
    pub max_aggregation: SimTime,
}

impl Default for WifiPhyConfig {
    fn default() -> Self {
        WifiPhyConfig {
            data_rate_bps: 72.0e6,
            sifs: SimTime::from_micros(16),
            slot: SimTime::from_micros(9),
            ack_duration: SimTime::from_micros(32),
            frame_overhead: SimTime::from_micros(40),
            max_aggregation: SimTime::from_micros(2_528),
        }
    }
}

impl WifiPhyConfig {
    pub fn airtime(&self, bits: u64) -> SimTime {
        let ns = (bits as f64 * 1e9 / self.data_rate_bps).ceil() as u64;
        self.frame_overhead + SimTime::from_nanos(ns)
    }

    pub fn ppdu_cap(&self, params: &AccessCategoryParams) -> SimTime {
        self.max_aggregation.min(params.txop)
    }

    /// Largest payload that fits in `airtime`.
    pub fn bits_for(&self, airtime: SimTime) -> u64 {
        let payload = airtime.saturating_sub(self.frame_overhead);
        (payload.as_secs_f64() * self.data_rate_bps).floor() as u64
    }

    pub fn validate(&self, params: &AccessCategoryParams) -> Result<(), SimError> {
        if !(self.data_rate_bps.is_finite() && self.data_rate_bps > 0.0) {
            return Err(SimError::Config(format!(
                "Wi-Fi data rate {} must be positive",
                self.data_rate_bps
            )));
        }
        if self.ppdu_cap(params) <= self.frame_overhead {
            return Err(SimError::Config(format!(
                "PPDU cap {} leaves no room after the {} overhead",
                self.ppdu_cap(params),
                self.frame_overhead
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WifiTraffic {
    /// Saturated AP-to-client downlink, round robin over clients.
    FullBuffer,
    Off,
}

pub const PROBE_BITS: u64 = 1024;
pub const RETRY_LIMIT: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WifiSetup {
    pub ac: AccessCategory,
    pub phy: WifiPhyConfig,
    pub n_clients: usize,
    pub downlink: WifiTraffic,
    /// Each client pings the AP at this interval when set.
    pub probe_interval: Option<SimTime>,
    pub ap_power_dbm: f64,
    pub client_power_dbm: f64,
    pub retry_limit: u32,
}

impl Default for WifiSetup {
    fn default() -> Self {
        WifiSetup {
            ac: AccessCategory::BestEffort,
            phy: WifiPhyConfig::default(),
            n_clients: 1,
            downlink: WifiTraffic::FullBuffer,
            probe_interval: None,
            ap_power_dbm: 20.0,
            client_power_dbm: 15.0,
            retry_limit: RETRY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    Data,
    ProbeRequest { id: u64, sent: SimTime },
    ProbeEcho { id: u64, sent: SimTime },
}

/// One MPDU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: FrameKind,
    pub flow: FlowId,
    pub src: NodeId,
    pub dest: NodeId,
    pub bits: u64,
    pub enqueued: SimTime,
}

#[derive(Debug, Clone)]
struct Ppdu {
    id: u64,
    dest: NodeId,
    frames: Vec<Frame>,
    bits: u64,
    airtime: SimTime,
    delivered: bool,
    kind: TransmissionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Contending,
    Granted,
    Transmitting,
    AwaitAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WifiRole {
    Ap,
    Client,
}

#[derive(Debug)]
struct ProbeState {
    interval: SimTime,
    flow: FlowId,
    next_id: u64,
}

pub struct WifiStation {
    id: NodeId,
    name: String,
    role: WifiRole,
    params: AccessCategoryParams,
    phy: WifiPhyConfig,
    power_dbm: f64,
    retry_limit: u32,
    access: Contender,
    phase: Phase,
    queue: VecDeque<Frame>,
    downlink: Vec<(NodeId, FlowId)>,
    rr: usize,
    ap: NodeId,
    probe: Option<ProbeState>,
    echo_flows: BTreeMap<NodeId, FlowId>,
    current: Option<Ppdu>,
    retry: u32,
    next_ppdu: u64,
    ack_to: Option<NodeId>,
    traffic_rng: RngStream,
}

impl WifiStation {
    /// Builds the AP (at `base`) and its clients (following ids) and
    /// registers their flows.
    pub fn build_bss(
        setup: &WifiSetup,
        base: NodeId,
        seed: u64,
        stats: &mut RunStats,
    ) -> Result<Vec<WifiStation>, SimError> {
        if setup.n_clients == 0 {
            return Err(SimError::Config("Wi-Fi needs at least one client".into()));
        }
        if setup.retry_limit == 0 {
            return Err(SimError::Config(
                "Wi-Fi retry limit must be at least 1".into(),
            ));
        }
        let params = AccessCategoryParams::of(setup.ac);
        setup.phy.validate(&params)?;
        let timing = params.timing(&setup.phy);
        let client_id = |i: usize| NodeId(base.0 + 1 + i as u32);

        let mut ap = WifiStation::new(base, "ap".into(), WifiRole::Ap, setup, base, seed, timing)?;
        ap.power_dbm = setup.ap_power_dbm;
        if setup.downlink == WifiTraffic::FullBuffer {
            for i in 0..setup.n_clients {
                let flow = stats.register_flow(
                    &format!("wifi_dl_client{}", i + 1),
                    "ap",
                    TransmissionKind::WifiData,
                );
                ap.downlink.push((client_id(i), flow));
            }
        }
        let mut clients = Vec::new();
        for i in 0..setup.n_clients {
            let name = format!("client{}", i + 1);
            let mut c = WifiStation::new(
                client_id(i),
                name.clone(),
                WifiRole::Client,
                setup,
                base,
                seed,
                timing,
            )?;
            c.power_dbm = setup.client_power_dbm;
            if let Some(interval) = setup.probe_interval {
                if interval == SimTime::ZERO {
                    return Err(SimError::Config("probe interval must be positive".into()));
                }
                let up = stats.register_flow(
                    &format!("probe_ul_{name}"),
                    &name,
                    TransmissionKind::ProbeData,
                );
                let down = stats.register_flow(
                    &format!("probe_dl_{name}"),
                    "ap",
                    TransmissionKind::ProbeData,
                );
                c.probe = Some(ProbeState {
                    interval,
                    flow: up,
                    next_id: 0,
                });
                ap.echo_flows.insert(client_id(i), down);
            }
            clients.push(c);
        }
        let mut all = vec![ap];
        all.extend(clients);
        Ok(all)
    }

    fn new(
        id: NodeId,
        name: String,
        role: WifiRole,
        setup: &WifiSetup,
        ap: NodeId,
        seed: u64,
        timing: AccessTiming,
    ) -> Result<Self, SimError> {
        let machine = LbtMachine::new(timing, RngStream::new(seed, id, StreamPurpose::Backoff))?;
        Ok(WifiStation {
            id,
            name,
            role,
            params: AccessCategoryParams::of(setup.ac),
            phy: setup.phy,
            power_dbm: setup.ap_power_dbm,
            retry_limit: setup.retry_limit,
            access: Contender::new(machine),
            phase: Phase::Idle,
            queue: VecDeque::new(),
            downlink: Vec::new(),
            rr: 0,
            ap,
            probe: None,
            echo_flows: BTreeMap::new(),
            current: None,
            retry: 0,
            next_ppdu: 0,
            ack_to: None,
            traffic_rng: RngStream::new(seed, id, StreamPurpose::Traffic),
        })
    }

    pub fn role(&self) -> WifiRole {
        self.role
    }

    pub fn cw(&self) -> u32 {
        self.access.machine.cw()
    }

    fn has_work(&self) -> bool {
        self.current.is_some() || !self.queue.is_empty() || !self.downlink.is_empty()
    }

    fn kick(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if self.phase != Phase::Idle || !self.has_work() {
            return Ok(());
        }
        self.phase = Phase::Contending;
        if self.access.start(ctx)? {
            self.granted(ctx)?;
        }
        Ok(())
    }

    fn granted(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        // transmit in a separate event at this same instant so that a
        // competitor finishing its countdown on the same slot boundary
        // still sees an idle channel and collides with us
        self.phase = Phase::Granted;
        ctx.schedule_self(ctx.now, SimEvent::TxStart)
    }

    fn build_ppdu(&mut self, ctx: &mut Ctx<'_>) -> Option<Ppdu> {
        let cap = self.phy.ppdu_cap(&self.params);
        let (dest, frames) = if let Some(front) = self.queue.front() {
            let dest = front.dest;
            let mut frames = Vec::new();
            let mut bits = 0;
            while let Some(f) = self.queue.front() {
                if f.dest != dest || (!frames.is_empty() && self.phy.airtime(bits + f.bits) > cap) {
                    break;
                }
                bits += f.bits;
                frames.push(self.queue.pop_front().expect("front exists"));
            }
            (dest, frames)
        } else if !self.downlink.is_empty() {
            let (dest, flow) = self.downlink[self.rr % self.downlink.len()];
            self.rr = (self.rr + 1) % self.downlink.len();
            let bits = self.phy.bits_for(cap);
            ctx.stats.on_enqueue(flow, bits);
            let frame = Frame {
                kind: FrameKind::Data,
                flow,
                src: self.id,
                dest,
                bits,
                enqueued: ctx.now,
            };
            (dest, vec![frame])
        } else {
            return None;
        };
        let bits: u64 = frames.iter().map(|f| f.bits).sum();
        let kind = if frames.iter().all(|f| f.kind == FrameKind::Data) {
            TransmissionKind::WifiData
        } else {
            TransmissionKind::ProbeData
        };
        for f in &frames {
            ctx.stats.on_transmit(f.flow, f.bits);
        }
        let id = self.next_ppdu;
        self.next_ppdu += 1;
        Some(Ppdu {
            id,
            dest,
            airtime: self.phy.airtime(bits),
            frames,
            bits,
            delivered: false,
            kind,
        })
    }

    fn on_tx_start(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if self.phase != Phase::Granted {
            return Err(ctx.invariant(format!("{} TxStart in phase {:?}", self.name, self.phase)));
        }
        self.access.machine.release()?;
        if self.current.is_none() {
            self.current = self.build_ppdu(ctx);
        }
        let Some(ppdu) = &self.current else {
            self.phase = Phase::Idle;
            return Ok(());
        };
        if self.ack_to.is_some() || ctx.medium.is_transmitting(self.id) {
            return Err(ctx.invariant(format!("{} granted while sending an ACK", self.name)));
        }
        let end = ctx.now + ppdu.airtime;
        if ppdu.airtime > self.params.txop {
            return Err(ctx.invariant(format!(
                "{} PPDU airtime {} exceeds TXOP {}",
                self.name, ppdu.airtime, self.params.txop
            )));
        }
        ctx.stats
            .record_burst(self.id, ctx.now, end, self.params.txop);
        ctx.transmit(vec![TxSpec {
            source: self.id,
            kind: ppdu.kind,
            start: ctx.now,
            end,
            power_dbm: self.power_dbm,
            payload_bits: ppdu.bits,
        }]);
        self.phase = Phase::Transmitting;
        Ok(())
    }

    fn on_data_end(&mut self, ctx: &mut Ctx<'_>, tx: &Transmission) -> Result<(), SimError> {
        let Some(ppdu) = self.current.as_mut() else {
            return Err(ctx.invariant(format!("{} data ended without a PPDU", self.name)));
        };
        self.phase = Phase::AwaitAck;
        if ctx.medium.resolve_reception(tx, ppdu.dest).is_success() {
            let duplicate = ppdu.delivered;
            ppdu.delivered = true;
            let frames = if duplicate {
                Vec::new()
            } else {
                ppdu.frames.clone()
            };
            ctx.schedule(
                ctx.now,
                ppdu.dest,
                SimEvent::WifiDeliver {
                    from: self.id,
                    frames,
                    duplicate,
                },
            )
        } else {
            ctx.stats.count("wifi_data_collisions");
            let id = ppdu.id;
            let at = ctx.now + self.phy.sifs + self.phy.ack_duration;
            ctx.schedule_self(at, SimEvent::WifiAckTimeout { ppdu: id })
        }
    }

    fn on_deliver(
        &mut self,
        ctx: &mut Ctx<'_>,
        from: NodeId,
        frames: Vec<Frame>,
    ) -> Result<(), SimError> {
        for f in frames {
            ctx.stats
                .on_deliver(ctx.now, f.flow, f.bits, ctx.now - f.enqueued);
            match f.kind {
                FrameKind::Data => {}
                FrameKind::ProbeRequest { id, sent } => {
                    let Some(&flow) = self.echo_flows.get(&f.src) else {
                        return Err(ctx.invariant(format!(
                            "{} got a probe from unknown {}",
                            self.name, f.src
                        )));
                    };
                    ctx.stats.on_enqueue(flow, f.bits);
                    self.queue.push_back(Frame {
                        kind: FrameKind::ProbeEcho { id, sent },
                        flow,
                        src: self.id,
                        dest: f.src,
                        bits: f.bits,
                        enqueued: ctx.now,
                    });
                }
                FrameKind::ProbeEcho { sent, .. } => {
                    ctx.stats.on_rtt(ctx.now, ctx.now - sent);
                }
            }
        }
        ctx.schedule_self_in(self.phy.sifs, SimEvent::WifiAckStart { to: from })?;
        self.kick(ctx)
    }

    fn on_ack_start(&mut self, ctx: &mut Ctx<'_>, to: NodeId) -> Result<(), SimError> {
        if ctx.medium.is_transmitting(self.id) || self.phase == Phase::Granted {
            // half duplex: cannot answer while on air
            ctx.stats.count("wifi_ack_suppressed");
            return Ok(());
        }
        self.ack_to = Some(to);
        ctx.transmit(vec![TxSpec {
            source: self.id,
            kind: TransmissionKind::WifiAck,
            start: ctx.now,
            end: ctx.now + self.phy.ack_duration,
            power_dbm: self.power_dbm,
            payload_bits: 0,
        }]);
        Ok(())
    }

    /// Backoff and retry bookkeeping once the fate of a data PPDU is known.
    pub fn on_ack_outcome(&mut self, ctx: &mut Ctx<'_>, acked: bool) -> Result<(), SimError> {
        if self.phase != Phase::AwaitAck {
            return Err(ctx.invariant(format!(
                "{} ACK outcome in phase {:?}",
                self.name, self.phase
            )));
        }
        let machine = &mut self.access.machine;
        if acked {
            machine.report_burst_feedback(BurstFeedback::Success);
            self.retry = 0;
            self.current = None;
        } else {
            self.retry += 1;
            if self.retry >= self.retry_limit {
                if let Some(p) = self.current.take() {
                    for f in &p.frames {
                        ctx.stats.on_drop(ctx.now, f.flow, f.bits);
                    }
                }
                machine.report_burst_feedback(BurstFeedback::Success);
                self.retry = 0;
            } else {
                machine.report_burst_feedback(BurstFeedback::Failure);
            }
        }
        self.phase = Phase::Idle;
        self.kick(ctx)
    }

    fn generate_probe(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Some(p) = self.probe.as_mut() else {
            return Err(ctx.invariant(format!("{} has no probe flow", self.name)));
        };
        let id = p.next_id;
        p.next_id += 1;
        let interval = p.interval;
        ctx.stats.on_enqueue(p.flow, PROBE_BITS);
        self.queue.push_back(Frame {
            kind: FrameKind::ProbeRequest { id, sent: ctx.now },
            flow: p.flow,
            src: self.id,
            dest: self.ap,
            bits: PROBE_BITS,
            enqueued: ctx.now,
        });
        ctx.schedule_self_in(interval, SimEvent::ProbeGenerate)?;
        self.kick(ctx)
    }
}

impl SimNode for WifiStation {
    fn name(&self) -> &str {
        &self.name
    }

    fn start(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if let Some(p) = &self.probe {
            // random phase so probes do not lock onto any periodic pattern
            let offset = self.traffic_rng.uniform_int(0, p.interval.as_nanos() - 1)?;
            ctx.schedule_self(SimTime::from_nanos(offset), SimEvent::ProbeGenerate)?;
        }
        self.kick(ctx)
    }

    fn on_event(&mut self, ctx: &mut Ctx<'_>, ev: SimEvent) -> Result<(), SimError> {
        match ev {
            SimEvent::AccessTimer { gen } => {
                if self.access.on_timer(ctx, gen)? {
                    self.granted(ctx)?;
                }
                Ok(())
            }
            SimEvent::TxStart => self.on_tx_start(ctx),
            SimEvent::WifiDeliver {
                from,
                frames,
                duplicate,
            } => {
                if duplicate {
                    ctx.schedule_self_in(self.phy.sifs, SimEvent::WifiAckStart { to: from })
                } else {
                    self.on_deliver(ctx, from, frames)
                }
            }
            SimEvent::WifiAckStart { to } => self.on_ack_start(ctx, to),
            SimEvent::WifiAckOutcome { acked } => self.on_ack_outcome(ctx, acked),
            SimEvent::WifiAckTimeout { ppdu } => match &self.current {
                Some(p) if p.id == ppdu && self.phase == Phase::AwaitAck => {
                    self.on_ack_outcome(ctx, false)
                }
                _ => Ok(()),
            },
            SimEvent::ProbeGenerate => self.generate_probe(ctx),
            other => Err(ctx.invariant(format!("{} cannot handle {other:?}", self.name))),
        }
    }

    fn on_sense(&mut self, ctx: &mut Ctx<'_>, busy: bool) -> Result<(), SimError> {
        self.access.on_sense(ctx, busy)
    }

    fn on_tx_end(&mut self, ctx: &mut Ctx<'_>, txs: &[Transmission]) -> Result<(), SimError> {
        for tx in txs {
            match tx.kind {
                TransmissionKind::WifiAck => {
                    let to = self.ack_to.take().ok_or_else(|| {
                        ctx.invariant(format!("{} ACK ended with no addressee", self.name))
                    })?;
                    let acked = ctx.medium.resolve_reception(tx, to).is_success();
                    ctx.schedule(ctx.now, to, SimEvent::WifiAckOutcome { acked })?;
                }
                _ => self.on_data_end(ctx, tx)?,
            }
        }
        Ok(())
    }
}

/// Seed used for calibration runs, so calibration is a pure function of its
/// inputs.
pub const CALIBRATION_SEED: u64 = 0x5eed_ca1b;
pub const CALIBRATION_HORIZON: SimTime = SimTime::from_millis(6_000);
pub const CALIBRATION_WARMUP: SimTime = SimTime::from_millis(1_000);
/// PHY rates the calibration may choose from.
pub const CALIBRATION_RATE_RANGE: (f64, f64) = (6.0e6, 1.0e9);

/// Solo saturated goodput (bits/s) of one AP serving one client.
pub fn solo_goodput(phy: &WifiPhyConfig, ac: AccessCategory, seed: u64) -> Result<f64, SimError> {
    let mut setup = SimSetup::new(CALIBRATION_HORIZON, CALIBRATION_WARMUP);
    setup.wifi = Some(WifiSetup {
        ac,
        phy: *phy,
        ..WifiSetup::default()
    });
    let out = run_once(&setup, seed)?;
    let report = crate::metrics::summarize(&out)?;
    Ok(report.goodput_of_kind(TransmissionKind::WifiData))
}

/// Chooses the PHY rate at which a lone saturated AP reaches `target_bps`.
///
/// Channel timing does not depend on the rate (PPDUs always fill the
/// aggregation cap), so goodput is proportional to the rate and a couple of
/// proportional corrections converge. Targets that would need a rate outside
/// [`CALIBRATION_RATE_RANGE`] are rejected.
pub fn calibrate_saturation_rate(
    phy: &WifiPhyConfig,
    ac: AccessCategory,
    target_bps: f64,
) -> Result<WifiPhyConfig, SimError> {
    if !(target_bps.is_finite() && target_bps > 0.0) {
        return Err(SimError::Config(format!(
            "calibration target {target_bps} must be positive"
        )));
    }
    let params = AccessCategoryParams::of(ac);
    let mut out = *phy;
    out.max_aggregation = phy.max_aggregation.min(params.txop);
    out.validate(&params)?;
    let (lo, hi) = CALIBRATION_RATE_RANGE;
    for _ in 0..6 {
        let got = solo_goodput(&out, ac, CALIBRATION_SEED)?;
        if got <= 0.0 {
            return Err(SimError::Config("calibration run delivered nothing".into()));
        }
        if ((got - target_bps) / target_bps).abs() < 0.002 {
            return Ok(out);
        }
        let efficiency = got / out.data_rate_bps;
        let rate = target_bps / efficiency;
        if rate < lo || rate > hi {
            return Err(SimError::Config(format!(
                "target {:.3} Mb/s needs a PHY rate of {:.3} Mb/s; supported rates are {:.0}..{:.0} Mb/s \
                 (MAC efficiency {:.3})",
                target_bps / 1e6,
                rate / 1e6,
                lo / 1e6,
                hi / 1e6,
                efficiency
            )));
        }
        out.data_rate_bps = rate;
    }
    Ok(out)
}
