//! LAA eNB: subframe-aligned downlink scheduling on top of LBT, with
//! discovery signals and HARQ-driven contention-window updates.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::engine::{NodeId, RngStream, SimTime};
use crate::lbt::{
    variant_params, AccessTiming, BurstFeedback, LbtMachine, LbtVariant, PriorityClassParams,
};
use crate::medium::{Transmission, TransmissionKind, TxSpec};
use crate::metrics::{FlowId, RunStats};
use crate::sim::{Contender, Ctx, SimError, SimEvent, SimNode};

pub const SUBFRAME: SimTime = SimTime::from_millis(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentStrategy {
    /// Contend freely and hold the channel with a reservation signal until
    /// the next subframe boundary.
    ReservationSignal,
    /// Start LBT so that an uninterrupted countdown ends exactly on a
    /// boundary; any interruption abandons the attempt.
    SelfDeferral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub subframe: SimTime,
    pub prep_advance: SimTime,
    pub strategy: AlignmentStrategy,
    pub qci: u8,
    pub phy_rate_bps: f64,
    /// Offered-load cap for the downlink; `None` is a full buffer.
    pub rate_cap_bps: Option<f64>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            subframe: SUBFRAME,
            prep_advance: SimTime::from_millis(4),
            strategy: AlignmentStrategy::ReservationSignal,
            qci: 9,
            phy_rate_bps: 151.0e6,
            rate_cap_bps: None,
        }
    }
}

impl SchedulerConfig {
    pub fn bits_per_subframe(&self) -> u64 {
        (self.phy_rate_bps * self.subframe.as_secs_f64()).round() as u64
    }
}

pub const DMTC_PERIODS_MS: [u64; 3] = [40, 80, 160];
pub const DMTC_WINDOW: SimTime = SimTime::from_millis(6);
pub const DRS_DURATION: SimTime = SimTime::from_millis(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmtcConfig {
    pub enabled: bool,
    pub period: SimTime,
    pub window: SimTime,
    pub drs_duration: SimTime,
}

impl DmtcConfig {
    pub fn with_period_ms(ms: u64) -> Result<Self, SimError> {
        if !DMTC_PERIODS_MS.contains(&ms) {
            return Err(SimError::Config(format!(
                "DMTC period {ms} ms not allowed; choose one of {{40, 80, 160}}"
            )));
        }
        Ok(DmtcConfig {
            enabled: true,
            period: SimTime::from_millis(ms),
            window: DMTC_WINDOW,
            drs_duration: DRS_DURATION,
        })
    }

    pub fn disabled() -> Self {
        DmtcConfig {
            enabled: false,
            period: SimTime::from_millis(160),
            window: DMTC_WINDOW,
            drs_duration: DRS_DURATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSubframes {
    First,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarqConfig {
    pub nack_ratio_threshold: f64,
    pub feedback_delay: SimTime,
    pub retx_priority: bool,
    pub reference: ReferenceSubframes,
}

impl Default for HarqConfig {
    fn default() -> Self {
        HarqConfig {
            nack_ratio_threshold: 0.8,
            feedback_delay: SimTime::from_millis(4),
            retx_priority: true,
            reference: ReferenceSubframes::First,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaaTraffic {
    FullBuffer,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnbConfig {
    pub scheduler: SchedulerConfig,
    pub variant: LbtVariant,
    /// Only meaningful for QCIs mapped to class 3; 8 or 10 ms.
    pub class3_mcot: Option<SimTime>,
    pub dmtc: DmtcConfig,
    pub harq: HarqConfig,
    pub traffic: LaaTraffic,
    pub tx_power_dbm: f64,
}

impl Default for EnbConfig {
    fn default() -> Self {
        EnbConfig {
            scheduler: SchedulerConfig::default(),
            variant: LbtVariant::Current,
            class3_mcot: None,
            dmtc: DmtcConfig::disabled(),
            harq: HarqConfig::default(),
            traffic: LaaTraffic::FullBuffer,
            tx_power_dbm: 16.0,
        }
    }
}

impl EnbConfig {
    pub fn class(&self) -> Result<PriorityClassParams, SimError> {
        let mut class = PriorityClassParams::for_qci(self.scheduler.qci)?;
        if let Some(mcot) = self.class3_mcot {
            if class.class_id == 3 {
                if mcot != SimTime::from_millis(8) && mcot != SimTime::from_millis(10) {
                    return Err(SimError::Config(format!(
                        "class 3 MCOT must be 8 or 10 ms, got {mcot}"
                    )));
                }
                class = class.with_mcot(mcot)?;
            }
        }
        Ok(class)
    }

    pub fn timing(&self) -> Result<AccessTiming, SimError> {
        Ok(variant_params(self.variant, &self.class()?)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.timing()?;
        let h = &self.harq;
        if !(h.nack_ratio_threshold > 0.0 && h.nack_ratio_threshold <= 1.0) {
            return Err(SimError::Config(format!(
                "NACK ratio threshold {} must lie in (0, 1]",
                h.nack_ratio_threshold
            )));
        }
        let s = &self.scheduler;
        if s.subframe != SUBFRAME {
            return Err(SimError::Config("subframe length is fixed at 1 ms".into()));
        }
        if !(s.phy_rate_bps.is_finite() && s.phy_rate_bps > 0.0) {
            return Err(SimError::Config(format!(
                "LAA PHY rate {} must be positive",
                s.phy_rate_bps
            )));
        }
        if let Some(cap) = s.rate_cap_bps {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(SimError::Config(format!(
                    "LAA rate cap {cap} must be positive"
                )));
            }
        }
        if self.dmtc.enabled {
            if !DMTC_PERIODS_MS
                .iter()
                .any(|&p| SimTime::from_millis(p) == self.dmtc.period)
            {
                return Err(SimError::Config(
                    "DMTC period must be one of {40, 80, 160} ms".into(),
                ));
            }
            if self.dmtc.window != DMTC_WINDOW || self.dmtc.drs_duration != DRS_DURATION {
                return Err(SimError::Config(
                    "DMTC window is 6 ms with a 1 ms DRS".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubframeRecord {
    pub seq: u64,
    pub start: SimTime,
    pub bits: u64,
    pub is_retx: bool,
    pub carries_drs: bool,
    /// When the payload entered the queue.
    pub enqueued: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstPlan {
    pub grant_time: SimTime,
    pub first_subframe_start: SimTime,
    pub reservation: Option<(SimTime, SimTime)>,
    /// Data subframes; empty for a DRS-only burst.
    pub subframes: Vec<SubframeRecord>,
    pub drs_only: bool,
}

impl BurstPlan {
    pub fn end(&self) -> SimTime {
        let n = if self.drs_only {
            1
        } else {
            self.subframes.len() as u64
        };
        self.first_subframe_start + SUBFRAME * n
    }

    /// Reservation included.
    pub fn total_duration(&self) -> SimTime {
        self.end() - self.grant_time
    }

    pub fn segments(&self, source: NodeId, power_dbm: f64) -> Vec<TxSpec> {
        let mut out = Vec::new();
        if let Some((s, e)) = self.reservation {
            out.push(TxSpec {
                source,
                kind: TransmissionKind::LaaReservation,
                start: s,
                end: e,
                power_dbm,
                payload_bits: 0,
            });
        }
        if self.drs_only {
            out.push(TxSpec {
                source,
                kind: TransmissionKind::LaaDrs,
                start: self.first_subframe_start,
                end: self.first_subframe_start + SUBFRAME,
                power_dbm,
                payload_bits: 0,
            });
        }
        for sf in &self.subframes {
            out.push(TxSpec {
                source,
                kind: TransmissionKind::LaaData,
                start: sf.start,
                end: sf.start + SUBFRAME,
                power_dbm,
                payload_bits: sf.bits,
            });
        }
        out
    }
}

/// Whole subframes that fit in the MCOT once the grant-to-boundary gap is
/// paid for.
pub fn subframe_budget(grant: SimTime, first_subframe_start: SimTime, mcot: SimTime) -> u64 {
    let deadline = grant + mcot;
    if deadline <= first_subframe_start {
        return 0;
    }
    (deadline - first_subframe_start).as_nanos() / SUBFRAME.as_nanos()
}

/// Grant-to-boundary timing for a self-deferring attempt: returns
/// `(lbt_start, target_boundary)` for a pre-drawn backoff `n`.
pub fn timed_lbt_start(now: SimTime, timing: &AccessTiming, n: u32) -> (SimTime, SimTime) {
    let lead = timing.idle_grant_delay(n);
    let target = (now + lead).ceil_to(SUBFRAME);
    (target - lead, target)
}

/// What HARQ feedback does to the queue and the contention window.
#[derive(Debug, Clone, PartialEq)]
pub struct HarqOutcome {
    pub nack_ratio: f64,
    pub feedback: BurstFeedback,
    pub retransmit: Vec<SubframeRecord>,
}

/// Pure HARQ decision for one burst given per-subframe decode results.
pub fn harq_decision(
    cfg: &HarqConfig,
    subframes: &[SubframeRecord],
    collided: &[bool],
) -> HarqOutcome {
    debug_assert_eq!(subframes.len(), collided.len());
    let reference: &[bool] = match cfg.reference {
        ReferenceSubframes::First => &collided[..collided.len().min(1)],
        ReferenceSubframes::All => collided,
    };
    let nacks = reference.iter().filter(|&&c| c).count();
    let nack_ratio = if reference.is_empty() {
        0.0
    } else {
        nacks as f64 / reference.len() as f64
    };
    let feedback = if nack_ratio > cfg.nack_ratio_threshold {
        BurstFeedback::Failure
    } else {
        BurstFeedback::Success
    };
    let retransmit = subframes
        .iter()
        .zip(collided)
        .filter(|(_, &c)| c)
        .map(|(sf, _)| *sf)
        .collect();
    HarqOutcome {
        nack_ratio,
        feedback,
        retransmit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    /// SelfDeferral: LBT start scheduled for `target`.
    TimedWait {
        target: SimTime,
    },
    Contending {
        target: Option<SimTime>,
    },
    Granted,
    Transmitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Drs {
    None,
    /// Window open, no burst carrying the DRS yet; a DRS-only burst goes
    /// first at the next grant.
    Pending {
        deadline: SimTime,
    },
    /// Window open and a data burst is already on its way; the DRS rides on
    /// it.
    RideNext {
        deadline: SimTime,
    },
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    bits: u64,
    is_retx: bool,
    enqueued: SimTime,
}

#[derive(Debug)]
struct InFlight {
    subframes: Vec<SubframeRecord>,
    collided: Vec<bool>,
}

pub struct Enb {
    id: NodeId,
    ue: NodeId,
    cfg: EnbConfig,
    timing: AccessTiming,
    access: Contender,
    phase: Phase,
    queue: VecDeque<Queued>,
    /// Fresh bits generated so far (rate-capped traffic).
    generated: u64,
    flow: FlowId,
    current: Option<BurstPlan>,
    next_burst: u64,
    next_sf_seq: u64,
    inflight: BTreeMap<u64, InFlight>,
    drs: Drs,
    window: u64,
    timed_gen: u64,
    tick_pending: bool,
}

impl Enb {
    pub fn new(
        id: NodeId,
        ue: NodeId,
        cfg: EnbConfig,
        rng: RngStream,
        flow: FlowId,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let timing = cfg.timing()?;
        Ok(Enb {
            id,
            ue,
            timing,
            access: Contender::new(LbtMachine::new(timing, rng)?),
            cfg,
            phase: Phase::Idle,
            queue: VecDeque::new(),
            generated: 0,
            flow,
            current: None,
            next_burst: 0,
            next_sf_seq: 0,
            inflight: BTreeMap::new(),
            drs: Drs::None,
            window: 0,
            timed_gen: 0,
            tick_pending: false,
        })
    }

    pub fn timing(&self) -> &AccessTiming {
        &self.timing
    }

    fn strategy(&self) -> AlignmentStrategy {
        self.cfg.scheduler.strategy
    }

    /// Fresh bits that may be scheduled into a subframe starting at `at`.
    fn fresh_available(&self, at: SimTime) -> u64 {
        match (self.cfg.traffic, self.cfg.scheduler.rate_cap_bps) {
            (LaaTraffic::Off, _) => 0,
            (LaaTraffic::FullBuffer, None) => u64::MAX,
            (LaaTraffic::FullBuffer, Some(cap)) => {
                // data must have arrived by the time the subframe is prepared
                let prepared = at.saturating_sub(self.cfg.scheduler.prep_advance);
                let arrived = (cap * prepared.as_secs_f64()).floor() as u64;
                arrived.saturating_sub(self.generated)
            }
        }
    }

    fn has_data(&self, at: SimTime) -> bool {
        !self.queue.is_empty() || self.fresh_available(at.ceil_to(SUBFRAME)) > 0
    }

    fn wants_channel(&self, now: SimTime) -> bool {
        self.drs != Drs::None || self.has_data(now)
    }

    fn kick(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if self.phase != Phase::Idle {
            return Ok(());
        }
        if !self.wants_channel(ctx.now) {
            if self.cfg.traffic == LaaTraffic::FullBuffer
                && self.cfg.scheduler.rate_cap_bps.is_some()
                && !self.tick_pending
            {
                self.tick_pending = true;
                let next = (ctx.now + SimTime::NANOSECOND).ceil_to(SUBFRAME);
                ctx.schedule_self(next, SimEvent::SubframeTick)?;
            }
            return Ok(());
        }
        match self.strategy() {
            AlignmentStrategy::ReservationSignal => {
                self.phase = Phase::Contending { target: None };
                if self.access.start(ctx)? {
                    self.granted(ctx)?;
                }
                Ok(())
            }
            AlignmentStrategy::SelfDeferral => self.schedule_timed(ctx),
        }
    }

    fn schedule_timed(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let n = self.access.machine.predraw_backoff()?;
        let (start, target) = timed_lbt_start(ctx.now, &self.timing, n);
        self.timed_gen += 1;
        self.phase = Phase::TimedWait { target };
        ctx.schedule_self(
            start,
            SimEvent::TimedLbtStart {
                gen: self.timed_gen,
            },
        )
    }

    fn abandon(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        ctx.stats.count("laa_lbt_abandoned");
        self.access.abort();
        self.timed_gen += 1;
        if let Drs::RideNext { deadline } = self.drs {
            self.drs = Drs::Pending { deadline };
        }
        self.phase = Phase::Idle;
        self.kick(ctx)
    }

    fn granted(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.phase = Phase::Granted;
        ctx.schedule_self(ctx.now, SimEvent::TxStart)
    }

    fn take_subframes(
        &mut self,
        first: SimTime,
        n: u64,
        enqueued_now: SimTime,
        stats: &mut RunStats,
    ) -> Vec<SubframeRecord> {
        let per_sf = self.cfg.scheduler.bits_per_subframe();
        let mut out = Vec::new();
        for k in 0..n {
            let start = first + SUBFRAME * k;
            let q = if let Some(q) = self.queue.pop_front() {
                q
            } else {
                let bits = self.fresh_available(start).min(per_sf);
                if bits == 0 {
                    break;
                }
                self.generated += bits;
                stats.on_enqueue(self.flow, bits);
                Queued {
                    bits,
                    is_retx: false,
                    enqueued: enqueued_now,
                }
            };
            if !q.is_retx {
                stats.on_transmit(self.flow, q.bits);
            }
            out.push(SubframeRecord {
                seq: self.next_sf_seq,
                start,
                bits: q.bits,
                is_retx: q.is_retx,
                carries_drs: false,
                enqueued: q.enqueued,
            });
            self.next_sf_seq += 1;
        }
        out
    }

    /// Turns a fresh grant into a burst. `None` means nothing is sent.
    pub fn on_grant(&mut self, ctx: &mut Ctx<'_>) -> Result<Option<BurstPlan>, SimError> {
        let now = ctx.now;
        let first = match self.strategy() {
            AlignmentStrategy::ReservationSignal => now.ceil_to(SUBFRAME),
            AlignmentStrategy::SelfDeferral => {
                if !now.is_multiple_of(SUBFRAME) {
                    return Err(ctx.invariant(format!(
                        "self-deferral grant at {now} is off the subframe grid"
                    )));
                }
                now
            }
        };
        let reservation = (first > now).then_some((now, first));
        let budget = subframe_budget(now, first, self.timing.mcot);
        if budget == 0 {
            ctx.stats.count("laa_grant_declined");
            return Ok(None);
        }

        if let Drs::Pending { deadline } = self.drs {
            self.drs = Drs::None;
            if first + self.cfg.dmtc.drs_duration <= deadline {
                ctx.stats.count("drs_standalone");
                return Ok(Some(BurstPlan {
                    grant_time: now,
                    first_subframe_start: first,
                    reservation,
                    subframes: Vec::new(),
                    drs_only: true,
                }));
            }
            ctx.stats.count("drs_missed");
        }

        let mut subframes = self.take_subframes(first, budget, now, ctx.stats);
        if subframes.is_empty() {
            return Ok(None);
        }
        if let Drs::RideNext { deadline } = self.drs {
            match subframes.iter_mut().find(|sf| sf.start < deadline) {
                Some(sf) => {
                    sf.carries_drs = true;
                    ctx.stats.count("drs_multiplexed");
                    self.drs = Drs::None;
                }
                None => self.drs = Drs::Pending { deadline },
            }
        }
        Ok(Some(BurstPlan {
            grant_time: now,
            first_subframe_start: first,
            reservation,
            subframes,
            drs_only: false,
        }))
    }

    fn on_tx_start(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if self.phase != Phase::Granted {
            return Err(ctx.invariant(format!("eNB TxStart in phase {:?}", self.phase)));
        }
        if self.current.is_some() {
            return Err(ctx.invariant("eNB granted while already transmitting"));
        }
        self.access.machine.release()?;
        let Some(plan) = self.on_grant(ctx)? else {
            self.phase = Phase::Idle;
            return self.kick(ctx);
        };
        if plan.total_duration() > self.timing.mcot {
            return Err(ctx.invariant(format!(
                "LAA burst of {} exceeds MCOT {}",
                plan.total_duration(),
                self.timing.mcot
            )));
        }
        ctx.stats
            .record_burst(self.id, plan.grant_time, plan.end(), self.timing.mcot);
        ctx.transmit(plan.segments(self.id, self.cfg.tx_power_dbm));
        self.current = Some(plan);
        self.phase = Phase::Transmitting;
        Ok(())
    }

    fn on_burst_end(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let plan = self
            .current
            .take()
            .ok_or_else(|| ctx.invariant("eNB burst ended with no plan"))?;
        if !plan.subframes.is_empty() {
            let mut collided = Vec::with_capacity(plan.subframes.len());
            for sf in &plan.subframes {
                let end = sf.start + SUBFRAME;
                let ok = ctx
                    .medium
                    .resolve_interval(self.id, self.ue, sf.start, end, self.cfg.tx_power_dbm)
                    .is_success();
                if ok {
                    ctx.stats
                        .on_deliver(end, self.flow, sf.bits, end - sf.enqueued);
                }
                collided.push(!ok);
            }
            let id = self.next_burst;
            self.next_burst += 1;
            self.inflight.insert(
                id,
                InFlight {
                    subframes: plan.subframes,
                    collided,
                },
            );
            ctx.schedule_self_in(
                self.cfg.harq.feedback_delay,
                SimEvent::HarqFeedback { burst: id },
            )?;
        }
        self.phase = Phase::Idle;
        self.kick(ctx)
    }

    /// Applies HARQ feedback for one burst: retransmissions are queued and the
    /// contention window is updated.
    fn collect_harq(&mut self, ctx: &mut Ctx<'_>, burst: u64) -> Result<(), SimError> {
        let fl = self
            .inflight
            .remove(&burst)
            .ok_or_else(|| ctx.invariant(format!("HARQ feedback for unknown burst {burst}")))?;
        let outcome = harq_decision(&self.cfg.harq, &fl.subframes, &fl.collided);
        let retx = outcome.retransmit.iter().map(|sf| Queued {
            bits: sf.bits,
            is_retx: true,
            enqueued: sf.enqueued,
        });
        if self.cfg.harq.retx_priority {
            for q in retx.rev() {
                self.queue.push_front(q);
            }
        } else {
            self.queue.extend(retx);
        }
        if outcome.feedback == BurstFeedback::Failure {
            ctx.stats.count("laa_cw_doubled");
        }
        self.access.machine.report_burst_feedback(outcome.feedback);
        self.kick(ctx)
    }

    fn dmtc_open(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let d = self.cfg.dmtc;
        self.window += 1;
        let deadline = ctx.now + d.window;
        ctx.schedule_self(
            deadline,
            SimEvent::DmtcClose {
                window: self.window,
            },
        )?;
        ctx.schedule_self_in(d.period, SimEvent::DmtcOpen)?;
        ctx.stats.count("dmtc_windows");

        if self.phase == Phase::Transmitting {
            if let Some(plan) = self.current.as_mut() {
                let now = ctx.now;
                if let Some(sf) = plan
                    .subframes
                    .iter_mut()
                    .find(|sf| sf.start >= now && sf.start < deadline)
                {
                    sf.carries_drs = true;
                    ctx.stats.count("drs_multiplexed");
                    return Ok(());
                }
            }
        }
        let committed = match self.phase {
            Phase::Granted => true,
            Phase::TimedWait { target }
            | Phase::Contending {
                target: Some(target),
            } => target + SUBFRAME <= deadline && self.has_data(target),
            // Data is waiting: the DRS goes in the first subframe of the next
            // burst if that still falls inside the window, else on its own.
            Phase::Contending { target: None } | Phase::Transmitting => self.has_data(ctx.now),
            _ => false,
        };
        self.drs = if committed {
            Drs::RideNext { deadline }
        } else {
            Drs::Pending { deadline }
        };
        self.kick(ctx)
    }

    fn dmtc_close(&mut self, ctx: &mut Ctx<'_>, window: u64) -> Result<(), SimError> {
        if window != self.window || self.drs == Drs::None {
            return Ok(());
        }
        ctx.stats.count("drs_missed");
        self.drs = Drs::None;
        if !self.has_data(ctx.now) {
            match self.phase {
                Phase::TimedWait { .. } | Phase::Contending { .. } => {
                    self.access.abort();
                    self.timed_gen += 1;
                    self.phase = Phase::Idle;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn queued_bits(&self) -> u64 {
        self.queue.iter().map(|q| q.bits).sum()
    }

    /// Bits on the air at the end of the run, or awaiting HARQ feedback as
    /// collided.
    fn inflight_bits(&self) -> u64 {
        self.inflight
            .values()
            .flat_map(|f| f.subframes.iter().zip(&f.collided))
            .filter(|(_, &c)| c)
            .map(|(sf, _)| sf.bits)
            .sum::<u64>()
            + self
                .current
                .iter()
                .flat_map(|p| &p.subframes)
                .map(|sf| sf.bits)
                .sum::<u64>()
    }
}

impl SimNode for Enb {
    fn name(&self) -> &str {
        "enb"
    }

    fn start(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if self.cfg.dmtc.enabled {
            ctx.schedule_self(SimTime::ZERO, SimEvent::DmtcOpen)?;
        }
        self.kick(ctx)
    }

    fn on_event(&mut self, ctx: &mut Ctx<'_>, ev: SimEvent) -> Result<(), SimError> {
        match ev {
            SimEvent::AccessTimer { gen } => {
                if !self.access.on_timer(ctx, gen)? {
                    return Ok(());
                }
                if let Phase::Contending {
                    target: Some(target),
                } = self.phase
                {
                    if ctx.now != target {
                        self.access.machine.release()?;
                        return self.abandon(ctx);
                    }
                }
                self.granted(ctx)
            }
            SimEvent::TimedLbtStart { gen } => {
                let Phase::TimedWait { target } = self.phase else {
                    return Ok(());
                };
                if gen != self.timed_gen {
                    return Ok(());
                }
                self.phase = Phase::Contending {
                    target: Some(target),
                };
                if ctx.senses_busy() {
                    return self.abandon(ctx);
                }
                if self.access.start(ctx)? {
                    self.granted(ctx)?;
                }
                Ok(())
            }
            SimEvent::TxStart => self.on_tx_start(ctx),
            SimEvent::HarqFeedback { burst } => self.collect_harq(ctx, burst),
            SimEvent::DmtcOpen => self.dmtc_open(ctx),
            SimEvent::DmtcClose { window } => self.dmtc_close(ctx, window),
            SimEvent::SubframeTick => {
                self.tick_pending = false;
                self.kick(ctx)
            }
            other => Err(ctx.invariant(format!("eNB cannot handle {other:?}"))),
        }
    }

    fn on_sense(&mut self, ctx: &mut Ctx<'_>, busy: bool) -> Result<(), SimError> {
        if busy && matches!(self.phase, Phase::Contending { target: Some(_) }) {
            return self.abandon(ctx);
        }
        self.access.on_sense(ctx, busy)
    }

    fn on_tx_end(&mut self, ctx: &mut Ctx<'_>, _: &[Transmission]) -> Result<(), SimError> {
        self.on_burst_end(ctx)
    }

    fn finish(&mut self, stats: &mut RunStats) {
        stats
            .counters
            .insert("laa_bits_queued_end".into(), self.queued_bits());
        stats
            .counters
            .insert("laa_bits_inflight_end".into(), self.inflight_bits());
    }
}
