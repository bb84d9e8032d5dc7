//! One simulation run: builds the nodes of a scenario, wires them to the
//! engine and the medium, and dispatches events until the horizon.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enb::{Enb, EnbConfig};
use crate::engine::{Engine, EngineError, NodeId, RngStream, SimTime, StreamPurpose, TraceEntry};
use crate::lbt::{LbtError, LbtMachine, LbtState, LbtStep};
use crate::medium::{Medium, MediumConfig, MediumError, Transmission, TxId, TxSpec};
use crate::metrics::RunStats;
use crate::wifi::{Frame, WifiSetup, WifiStation};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error(transparent)]
    Lbt(#[from] LbtError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("invariant violated at {at}: {what}")]
    Invariant { at: SimTime, what: String },
}

/// Event payloads. The target node is carried by the engine event.
pub enum SimEvent {
    AccessTimer {
        gen: u64,
    },
    TxStart,
    TxEnd {
        burst: crate::medium::BurstId,
        first: TxId,
        count: usize,
    },
    TimedLbtStart {
        gen: u64,
    },
    HarqFeedback {
        burst: u64,
    },
    DmtcOpen,
    DmtcClose {
        window: u64,
    },
    SubframeTick,
    WifiDeliver {
        from: NodeId,
        frames: Vec<Frame>,
        duplicate: bool,
    },
    WifiAckStart {
        to: NodeId,
    },
    WifiAckOutcome {
        acked: bool,
    },
    WifiAckTimeout {
        ppdu: u64,
    },
    ProbeGenerate,
}

impl fmt::Debug for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimEvent::AccessTimer { gen } => write!(f, "AccessTimer({gen})"),
            SimEvent::TxStart => write!(f, "TxStart"),
            SimEvent::TxEnd { first, count, .. } => write!(f, "TxEnd({}+{count})", first.0),
            SimEvent::TimedLbtStart { gen } => write!(f, "TimedLbtStart({gen})"),
            SimEvent::HarqFeedback { burst } => write!(f, "HarqFeedback({burst})"),
            SimEvent::DmtcOpen => write!(f, "DmtcOpen"),
            SimEvent::DmtcClose { window } => write!(f, "DmtcClose({window})"),
            SimEvent::SubframeTick => write!(f, "SubframeTick"),
            SimEvent::WifiDeliver {
                from,
                frames,
                duplicate,
            } => {
                write!(f, "WifiDeliver({from},{},{duplicate})", frames.len())
            }
            SimEvent::WifiAckStart { to } => write!(f, "WifiAckStart({to})"),
            SimEvent::WifiAckOutcome { acked } => write!(f, "WifiAckOutcome({acked})"),
            SimEvent::WifiAckTimeout { ppdu } => write!(f, "WifiAckTimeout({ppdu})"),
            SimEvent::ProbeGenerate => write!(f, "ProbeGenerate"),
        }
    }
}

/// What a node handler may touch while it runs.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub me: NodeId,
    engine: &'a mut Engine<SimEvent>,
    pub medium: &'a Medium,
    pub stats: &'a mut RunStats,
    outbox: &'a mut Vec<Vec<TxSpec>>,
}

impl Ctx<'_> {
    pub fn schedule(&mut self, at: SimTime, target: NodeId, ev: SimEvent) -> Result<(), SimError> {
        self.engine.schedule(at, target, ev)?;
        Ok(())
    }

    pub fn schedule_self(&mut self, at: SimTime, ev: SimEvent) -> Result<(), SimError> {
        let me = self.me;
        self.schedule(at, me, ev)
    }

    pub fn schedule_self_in(&mut self, delay: SimTime, ev: SimEvent) -> Result<(), SimError> {
        let at = self.now + delay;
        self.schedule_self(at, ev)
    }

    /// Carrier sense for this node, counting its own transmissions as busy.
    pub fn senses_busy(&self) -> bool {
        self.medium.senses_busy(self.me)
    }

    /// Places a burst on the medium at the current instant, once the handler
    /// returns.
    pub fn transmit(&mut self, segments: Vec<TxSpec>) {
        self.outbox.push(segments);
    }

    pub fn invariant(&self, what: impl Into<String>) -> SimError {
        SimError::Invariant {
            at: self.now,
            what: what.into(),
        }
    }
}

pub trait SimNode {
    fn name(&self) -> &str;
    fn start(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError>;
    fn on_event(&mut self, ctx: &mut Ctx<'_>, ev: SimEvent) -> Result<(), SimError>;
    /// Carrier-sense transition (includes the node's own transmissions).
    fn on_sense(&mut self, ctx: &mut Ctx<'_>, busy: bool) -> Result<(), SimError>;
    /// One of this node's bursts left the air.
    fn on_tx_end(&mut self, ctx: &mut Ctx<'_>, txs: &[Transmission]) -> Result<(), SimError>;
    /// Called once at the horizon to leave end-of-run state in the stats.
    fn finish(&mut self, _stats: &mut RunStats) {}
}

/// A passive LTE UE: receives downlink, feeds HARQ back over the (ideal)
/// licensed carrier, never transmits on the unlicensed channel.
pub struct PassiveNode {
    name: String,
}

impl PassiveNode {
    pub fn new(name: impl Into<String>) -> Self {
        PassiveNode { name: name.into() }
    }
}

impl SimNode for PassiveNode {
    fn name(&self) -> &str {
        &self.name
    }
    fn start(&mut self, _: &mut Ctx<'_>) -> Result<(), SimError> {
        Ok(())
    }
    fn on_event(&mut self, ctx: &mut Ctx<'_>, ev: SimEvent) -> Result<(), SimError> {
        Err(ctx.invariant(format!("{} received {ev:?}", self.name)))
    }
    fn on_sense(&mut self, _: &mut Ctx<'_>, _: bool) -> Result<(), SimError> {
        Ok(())
    }
    fn on_tx_end(&mut self, ctx: &mut Ctx<'_>, _: &[Transmission]) -> Result<(), SimError> {
        Err(ctx.invariant(format!("{} does not transmit", self.name)))
    }
}

// ============================================================================
// Channel access driver
// ============================================================================

/// Binds an [`LbtMachine`] to engine timers and carrier-sense notifications.
///
/// Timers are invalidated by bumping a generation counter; a busy
/// notification while a sensing interval is armed turns that interval into a
/// busy observation.
#[derive(Debug)]
pub struct Contender {
    pub machine: LbtMachine,
    gen: u64,
    armed: bool,
}

impl Contender {
    pub fn new(machine: LbtMachine) -> Self {
        Contender {
            machine,
            gen: 0,
            armed: false,
        }
    }

    pub fn is_contending(&self) -> bool {
        self.machine.is_contending()
    }

    /// Starts an attempt. Returns true if the channel was granted at once.
    pub fn start(&mut self, ctx: &mut Ctx<'_>) -> Result<bool, SimError> {
        let step = self.machine.start_attempt(!ctx.senses_busy())?;
        self.apply(ctx, step)
    }

    fn apply(&mut self, ctx: &mut Ctx<'_>, step: LbtStep) -> Result<bool, SimError> {
        match step {
            LbtStep::WaitIdle => {
                self.armed = false;
                Ok(false)
            }
            LbtStep::Sense(d) => {
                self.gen += 1;
                self.armed = true;
                ctx.schedule_self_in(d, SimEvent::AccessTimer { gen: self.gen })?;
                Ok(false)
            }
            LbtStep::Grant => {
                self.armed = false;
                Ok(true)
            }
        }
    }

    /// Returns true on grant.
    pub fn on_timer(&mut self, ctx: &mut Ctx<'_>, gen: u64) -> Result<bool, SimError> {
        if gen != self.gen || !self.armed {
            return Ok(false);
        }
        self.armed = false;
        let step = match self.machine.state() {
            LbtState::InitialDefer => self.machine.on_defer_elapsed()?,
            LbtState::PrioritySlots { .. } | LbtState::Backoff { .. } => {
                self.machine.on_cca_slot(true)?
            }
            other => return Err(ctx.invariant(format!("access timer fired in state {other:?}"))),
        };
        self.apply(ctx, step)
    }

    pub fn on_sense(&mut self, ctx: &mut Ctx<'_>, busy: bool) -> Result<(), SimError> {
        if !self.machine.is_contending() {
            return Ok(());
        }
        if busy {
            if !self.armed {
                return Ok(());
            }
            self.armed = false;
            self.gen += 1;
            let step = match self.machine.state() {
                LbtState::InitialDefer => self.machine.on_defer_interrupted()?,
                _ => self.machine.on_cca_slot(false)?,
            };
            self.apply(ctx, step)?;
        } else if !self.armed && self.machine.state() == LbtState::InitialDefer {
            let step = self.machine.on_channel_idle()?;
            self.apply(ctx, step)?;
        }
        Ok(())
    }

    /// Drops the current attempt and any pending timer.
    pub fn abort(&mut self) {
        self.machine.abort();
        self.gen += 1;
        self.armed = false;
    }
}

// ============================================================================
// Scenario setup and run loop
// ============================================================================

/// Fully resolved inputs of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSetup {
    pub horizon: SimTime,
    pub warmup: SimTime,
    pub laa: Option<EnbConfig>,
    pub wifi: Option<WifiSetup>,
    pub capture_enabled: bool,
    pub capture_margin_db: f64,
    /// Node-name pairs that cannot hear each other.
    pub hidden_pairs: Vec<(String, String)>,
    pub ed_threshold_dbm_per_mhz: f64,
    pub record_trace: bool,
}

impl SimSetup {
    pub fn new(horizon: SimTime, warmup: SimTime) -> Self {
        SimSetup {
            horizon,
            warmup,
            laa: None,
            wifi: None,
            capture_enabled: false,
            capture_margin_db: 10.0,
            hidden_pairs: Vec::new(),
            ed_threshold_dbm_per_mhz: crate::medium::DEFAULT_ED_THRESHOLD,
            record_trace: false,
        }
    }

    /// Node names in id order.
    pub fn node_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.laa.is_some() {
            names.push("enb".to_string());
            names.push("ue".to_string());
        }
        if let Some(w) = &self.wifi {
            names.push("ap".to_string());
            names.extend((1..=w.n_clients).map(|i| format!("client{i}")));
        }
        names
    }
}

/// Everything a run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub horizon: SimTime,
    pub warmup: SimTime,
    pub node_names: Vec<String>,
    pub stats: RunStats,
    pub log: Vec<Transmission>,
    pub trace: Option<Vec<TraceEntry>>,
    pub events_dispatched: u64,
}

impl RunOutput {
    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_names
            .iter()
            .position(|n| n == name)
            .map(|i| NodeId(i as u32))
    }
}

pub struct Simulation {
    engine: Engine<SimEvent>,
    medium: Medium,
    nodes: Vec<Box<dyn SimNode>>,
    stats: RunStats,
    outbox: Vec<Vec<TxSpec>>,
    horizon: SimTime,
    warmup: SimTime,
    seed: u64,
    names: Vec<String>,
}

impl Simulation {
    pub fn new(setup: &SimSetup, seed: u64) -> Result<Self, SimError> {
        if setup.warmup >= setup.horizon {
            return Err(SimError::Config(format!(
                "warmup {} must be shorter than horizon {}",
                setup.warmup, setup.horizon
            )));
        }
        let names = setup.node_names();
        if names.is_empty() {
            return Err(SimError::Config(
                "scenario has neither LAA nor Wi-Fi enabled".into(),
            ));
        }
        let mut mcfg = MediumConfig::all_audible(names.len());
        mcfg.capture_enabled = setup.capture_enabled;
        mcfg.capture_margin_db = setup.capture_margin_db;
        mcfg.ed_threshold_dbm_per_mhz = vec![setup.ed_threshold_dbm_per_mhz; names.len()];
        let lookup = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .map(|i| NodeId(i as u32))
                .ok_or_else(|| SimError::Config(format!("hidden pair names unknown node '{n}'")))
        };
        for (a, b) in &setup.hidden_pairs {
            mcfg.hide(lookup(a)?, lookup(b)?);
        }
        let medium = Medium::new(mcfg)?;

        let mut stats = RunStats::default();
        let mut nodes: Vec<Box<dyn SimNode>> = Vec::new();
        if let Some(cfg) = &setup.laa {
            let enb = NodeId(0);
            let ue = NodeId(1);
            let rng = RngStream::new(seed, enb, StreamPurpose::Backoff);
            let flow =
                stats.register_flow("laa_dl", "enb", crate::medium::TransmissionKind::LaaData);
            nodes.push(Box::new(Enb::new(enb, ue, cfg.clone(), rng, flow)?));
            nodes.push(Box::new(PassiveNode::new("ue")));
        }
        if let Some(w) = &setup.wifi {
            let base = nodes.len() as u32;
            let stations = WifiStation::build_bss(w, NodeId(base), seed, &mut stats)?;
            for s in stations {
                nodes.push(Box::new(s));
            }
        }
        debug_assert_eq!(nodes.len(), names.len());

        let mut engine = Engine::new();
        if setup.record_trace {
            engine.enable_trace();
        }
        Ok(Simulation {
            engine,
            medium,
            nodes,
            stats,
            outbox: Vec::new(),
            horizon: setup.horizon,
            warmup: setup.warmup,
            seed,
            names,
        })
    }

    /// A run over caller-supplied nodes; node `i` gets `NodeId(i)` and
    /// `names[i]`. Flows must already be registered in `stats`.
    pub fn from_nodes(
        names: Vec<String>,
        nodes: Vec<Box<dyn SimNode>>,
        medium: MediumConfig,
        stats: RunStats,
        horizon: SimTime,
        warmup: SimTime,
        seed: u64,
    ) -> Result<Self, SimError> {
        if names.len() != nodes.len() || medium.node_count() != nodes.len() {
            return Err(SimError::Config(format!(
                "{} names, {} nodes and a {}-node medium do not match",
                names.len(),
                nodes.len(),
                medium.node_count()
            )));
        }
        if warmup >= horizon {
            return Err(SimError::Config(format!(
                "warmup {warmup} must be shorter than horizon {horizon}"
            )));
        }
        Ok(Simulation {
            engine: Engine::new(),
            medium: Medium::new(medium)?,
            nodes,
            stats,
            outbox: Vec::new(),
            horizon,
            warmup,
            seed,
            names,
        })
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        for i in 0..self.nodes.len() {
            self.with_node(NodeId(i as u32), |node, ctx| node.start(ctx))?;
        }
        self.flush()?;
        while let Some(ev) = self.engine.pop_until(self.horizon) {
            self.medium.set_now(ev.time);
            let target = ev.target;
            match ev.payload {
                SimEvent::TxEnd {
                    burst,
                    first,
                    count,
                } => {
                    let changes = self.medium.end_burst(burst)?;
                    self.notify(&changes)?;
                    self.tx_end(target, first, count)?;
                }
                payload => {
                    self.with_node(target, |node, ctx| node.on_event(ctx, payload))?;
                }
            }
            self.flush()?;
        }
        self.engine.advance_to(self.horizon)?;
        for node in &mut self.nodes {
            node.finish(&mut self.stats);
        }
        let events_dispatched = self.engine.dispatched();
        let trace = self.engine.take_trace();
        Ok(RunOutput {
            seed: self.seed,
            horizon: self.horizon,
            warmup: self.warmup,
            node_names: self.names,
            stats: self.stats,
            log: self.medium.into_log(),
            trace,
            events_dispatched,
        })
    }

    fn with_node<F>(&mut self, id: NodeId, f: F) -> Result<(), SimError>
    where
        F: FnOnce(&mut dyn SimNode, &mut Ctx<'_>) -> Result<(), SimError>,
    {
        let node = self
            .nodes
            .get_mut(id.index())
            .ok_or(SimError::Medium(MediumError::UnknownNode(id)))?;
        let mut ctx = Ctx {
            now: self.engine.now(),
            me: id,
            engine: &mut self.engine,
            medium: &self.medium,
            stats: &mut self.stats,
            outbox: &mut self.outbox,
        };
        f(node.as_mut(), &mut ctx)
    }

    fn tx_end(&mut self, id: NodeId, first: TxId, count: usize) -> Result<(), SimError> {
        let start = first.0 as usize;
        let node = &mut self.nodes[id.index()];
        let txs = &self.medium.log()[start..start + count];
        let mut ctx = Ctx {
            now: self.engine.now(),
            me: id,
            engine: &mut self.engine,
            medium: &self.medium,
            stats: &mut self.stats,
            outbox: &mut self.outbox,
        };
        node.on_tx_end(&mut ctx, txs)
    }

    fn notify(&mut self, changes: &[crate::medium::SenseChange]) -> Result<(), SimError> {
        for c in changes {
            self.with_node(c.node, |node, ctx| node.on_sense(ctx, c.busy))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SimError> {
        while !self.outbox.is_empty() {
            let pending = std::mem::take(&mut self.outbox);
            for segments in pending {
                let source = segments[0].source;
                let started = self.medium.begin_burst(segments)?;
                let first = started.tx_ids[0];
                self.engine.schedule(
                    started.end,
                    source,
                    SimEvent::TxEnd {
                        burst: started.id,
                        first,
                        count: started.tx_ids.len(),
                    },
                )?;
                self.notify(&started.changes)?;
            }
        }
        Ok(())
    }
}

/// Convenience: build and run.
pub fn run_once(setup: &SimSetup, seed: u64) -> Result<RunOutput, SimError> {
    Simulation::new(setup, seed)?.run()
}

/// Counts keyed by a static label.
pub type Counters = BTreeMap<String, u64>;
