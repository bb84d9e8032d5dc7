//! LAA listen-before-talk: priority classes, LBT variants and the per-eNB
//! channel-access state machine.
//!
//! An attempt runs through three phases:
//!
//! 1. an initial idle wait (`initial_idle`),
//! 2. `m` prioritized observation slots, any busy slot sending the machine
//!    back to phase 1 with the full `m` restored,
//! 3. a random backoff of `N` slots, `N` uniform in `{0, …, CW}`. A busy
//!    slot freezes `N`; the machine then repeats phases 1 and 2 before
//!    resuming the frozen count.
//!
//! The machine never touches the clock. It returns an [`LbtStep`] telling the
//! caller how long to sense before reporting back.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, RngStream, SimTime};

/// Channel-access parameters of one LAA priority class (or, with the same
/// shape, a Wi-Fi access category).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityClassParams {
    pub class_id: u8,
    pub m: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub mcot: SimTime,
}

impl PriorityClassParams {
    pub const CLASS_1: PriorityClassParams = PriorityClassParams {
        class_id: 1,
        m: 1,
        cw_min: 3,
        cw_max: 7,
        mcot: SimTime::from_millis(2),
    };
    pub const CLASS_2: PriorityClassParams = PriorityClassParams {
        class_id: 2,
        m: 1,
        cw_min: 7,
        cw_max: 15,
        mcot: SimTime::from_millis(3),
    };
    pub const CLASS_3: PriorityClassParams = PriorityClassParams {
        class_id: 3,
        m: 3,
        cw_min: 15,
        cw_max: 63,
        mcot: SimTime::from_millis(8),
    };

    pub fn class(id: u8) -> Result<Self, LbtError> {
        match id {
            1 => Ok(Self::CLASS_1),
            2 => Ok(Self::CLASS_2),
            3 => Ok(Self::CLASS_3),
            other => Err(LbtError::UnknownClass(other)),
        }
    }

    /// Priority class serving a Non-GBR QCI.
    pub fn for_qci(qci: u8) -> Result<Self, LbtError> {
        match qci {
            5 => Ok(Self::CLASS_1),
            7 => Ok(Self::CLASS_2),
            6 | 8 | 9 => Ok(Self::CLASS_3),
            1..=4 => Err(LbtError::GbrQci(qci)),
            other => Err(LbtError::UnknownQci(other)),
        }
    }

    /// Class 3 with the MCOT raised to 10 ms, permitted when no other
    /// technology shares the channel.
    pub fn with_mcot(mut self, mcot: SimTime) -> Result<Self, LbtError> {
        if mcot > MAX_MCOT || mcot == SimTime::ZERO {
            return Err(LbtError::Config(format!("MCOT {mcot} outside (0, 10ms]")));
        }
        self.mcot = mcot;
        Ok(self)
    }
}

pub const MAX_MCOT: SimTime = SimTime::from_millis(10);

/// Which generation of the LBT rules an eNB follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "cw")]
pub enum LbtVariant {
    Current,
    /// Older rules, CW between 16 and 1024.
    LegacyA,
    /// Older rules, fixed CW chosen by the manufacturer in 4..=32.
    LegacyB(u32),
}

/// How the contention window grows on failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CwLadder {
    /// 3 → 7 → 15 → …, i.e. `2(cw + 1) − 1`.
    PowerOfTwoMinusOne,
    /// 16 → 32 → 64 → …
    PowerOfTwo,
}

impl CwLadder {
    pub fn next(self, cw: u32, cw_max: u32) -> u32 {
        let grown = match self {
            CwLadder::PowerOfTwoMinusOne => 2 * (cw + 1) - 1,
            CwLadder::PowerOfTwo => 2 * cw,
        };
        grown.min(cw_max)
    }
}

/// Effective constants of one variant applied to one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTiming {
    pub initial_idle: SimTime,
    pub slot: SimTime,
    pub m: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub mcot: SimTime,
    pub ladder: CwLadder,
}

impl AccessTiming {
    /// Time to grant on a channel that stays idle, for a given backoff draw.
    pub fn idle_grant_delay(&self, n: u32) -> SimTime {
        self.initial_idle + self.slot * u64::from(self.m + n)
    }

    /// Worst-case idle-channel time to grant.
    pub fn max_grant_delay(&self) -> SimTime {
        self.idle_grant_delay(self.cw_max)
    }
}

pub const CURRENT_INITIAL_IDLE: SimTime = SimTime::from_micros(16);
pub const CURRENT_SLOT: SimTime = SimTime::from_micros(9);
pub const LEGACY_INITIAL_IDLE: SimTime = SimTime::from_micros(20);
pub const LEGACY_A_SLOT: SimTime = SimTime::from_micros(18);
pub const LEGACY_B_SLOT: SimTime = SimTime::from_micros(20);
pub const LEGACY_B_CW_RANGE: std::ops::RangeInclusive<u32> = 4..=32;

/// Resolves the timing constants for `variant`. Legacy variants ignore the
/// class (they had no QoS differentiation).
pub fn variant_params(
    variant: LbtVariant,
    class: &PriorityClassParams,
) -> Result<AccessTiming, LbtError> {
    match variant {
        LbtVariant::Current => Ok(AccessTiming {
            initial_idle: CURRENT_INITIAL_IDLE,
            slot: CURRENT_SLOT,
            m: class.m,
            cw_min: class.cw_min,
            cw_max: class.cw_max,
            mcot: class.mcot,
            ladder: CwLadder::PowerOfTwoMinusOne,
        }),
        LbtVariant::LegacyA => Ok(AccessTiming {
            initial_idle: LEGACY_INITIAL_IDLE,
            slot: LEGACY_A_SLOT,
            m: 0,
            cw_min: 16,
            cw_max: 1024,
            mcot: SimTime::from_millis(10),
            ladder: CwLadder::PowerOfTwo,
        }),
        LbtVariant::LegacyB(cw) => {
            if !LEGACY_B_CW_RANGE.contains(&cw) {
                return Err(LbtError::LegacyBCw(cw));
            }
            Ok(AccessTiming {
                initial_idle: LEGACY_INITIAL_IDLE,
                slot: LEGACY_B_SLOT,
                m: 0,
                cw_min: cw,
                cw_max: cw,
                mcot: legacy_b_mcot(cw),
                ladder: CwLadder::PowerOfTwo,
            })
        }
    }
}

/// MCOT of legacy option B: 13/32 of the CW value, in milliseconds.
/// Exact in nanoseconds for every CW in range.
pub fn legacy_b_mcot(cw: u32) -> SimTime {
    SimTime::from_nanos(u64::from(cw) * 13 * 1_000_000 / 32)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LbtError {
    #[error("legacy option B CW {0} outside 4..=32")]
    LegacyBCw(u32),
    #[error("unknown priority class {0} (only classes 1-3 are defined)")]
    UnknownClass(u8),
    #[error("QCI {0} is a GBR bearer and cannot be carried over LAA")]
    GbrQci(u8),
    #[error("unknown QCI {0}")]
    UnknownQci(u8),
    #[error("{op} called in state {state:?}")]
    InvalidState { op: &'static str, state: LbtState },
    #[error("invalid LBT config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LbtState {
    Idle,
    InitialDefer,
    PrioritySlots { remaining: u32 },
    Backoff { n: u32 },
    Granted,
}

/// What the caller must do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtStep {
    /// The channel is busy; report back through [`LbtMachine::on_channel_idle`].
    WaitIdle,
    /// Sense for this long, then report the outcome.
    Sense(SimTime),
    /// The channel is ours.
    Grant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstFeedback {
    Success,
    Failure,
}

#[derive(Debug, Clone)]
pub struct LbtMachine {
    timing: AccessTiming,
    state: LbtState,
    cw: u32,
    frozen: Option<u32>,
    predrawn: Option<u32>,
    last_draw: Option<u32>,
    rng: RngStream,
}

impl LbtMachine {
    pub fn new(timing: AccessTiming, rng: RngStream) -> Result<Self, LbtError> {
        if timing.cw_min > timing.cw_max {
            return Err(LbtError::Config(format!(
                "cw_min {} > cw_max {}",
                timing.cw_min, timing.cw_max
            )));
        }
        if timing.mcot == SimTime::ZERO {
            return Err(LbtError::Config("MCOT must be positive".into()));
        }
        Ok(LbtMachine {
            timing,
            state: LbtState::Idle,
            cw: timing.cw_min,
            frozen: None,
            predrawn: None,
            last_draw: None,
            rng,
        })
    }

    pub fn timing(&self) -> &AccessTiming {
        &self.timing
    }

    pub fn state(&self) -> LbtState {
        self.state
    }

    pub fn cw(&self) -> u32 {
        self.cw
    }

    /// The most recent backoff value drawn (not resumed) by the machine.
    pub fn last_draw(&self) -> Option<u32> {
        self.last_draw
    }

    pub fn is_contending(&self) -> bool {
        !matches!(self.state, LbtState::Idle | LbtState::Granted)
    }

    fn invalid(&self, op: &'static str) -> LbtError {
        LbtError::InvalidState {
            op,
            state: self.state,
        }
    }

    /// Begins an attempt. `channel_idle` is the carrier-sense state now.
    pub fn start_attempt(&mut self, channel_idle: bool) -> Result<LbtStep, LbtError> {
        if self.state != LbtState::Idle {
            return Err(self.invalid("start_attempt"));
        }
        self.state = LbtState::InitialDefer;
        Ok(if channel_idle {
            LbtStep::Sense(self.timing.initial_idle)
        } else {
            LbtStep::WaitIdle
        })
    }

    /// The channel went idle while waiting in the initial defer.
    pub fn on_channel_idle(&mut self) -> Result<LbtStep, LbtError> {
        match self.state {
            LbtState::InitialDefer => Ok(LbtStep::Sense(self.timing.initial_idle)),
            _ => Err(self.invalid("on_channel_idle")),
        }
    }

    /// The channel went busy before the initial idle wait completed.
    pub fn on_defer_interrupted(&mut self) -> Result<LbtStep, LbtError> {
        match self.state {
            LbtState::InitialDefer => Ok(LbtStep::WaitIdle),
            _ => Err(self.invalid("on_defer_interrupted")),
        }
    }

    /// The initial idle wait completed with the channel idle throughout.
    pub fn on_defer_elapsed(&mut self) -> Result<LbtStep, LbtError> {
        if self.state != LbtState::InitialDefer {
            return Err(self.invalid("on_defer_elapsed"));
        }
        if self.timing.m > 0 {
            self.state = LbtState::PrioritySlots {
                remaining: self.timing.m,
            };
            Ok(LbtStep::Sense(self.timing.slot))
        } else {
            self.enter_backoff()
        }
    }

    /// Result of one CCA observation slot.
    pub fn on_cca_slot(&mut self, slot_idle: bool) -> Result<LbtStep, LbtError> {
        match (self.state, slot_idle) {
            (LbtState::PrioritySlots { remaining }, true) => {
                if remaining <= 1 {
                    self.enter_backoff()
                } else {
                    self.state = LbtState::PrioritySlots {
                        remaining: remaining - 1,
                    };
                    Ok(LbtStep::Sense(self.timing.slot))
                }
            }
            (LbtState::PrioritySlots { .. }, false) => {
                self.state = LbtState::InitialDefer;
                Ok(LbtStep::WaitIdle)
            }
            (LbtState::Backoff { n }, true) => {
                if n <= 1 {
                    self.state = LbtState::Granted;
                    Ok(LbtStep::Grant)
                } else {
                    self.state = LbtState::Backoff { n: n - 1 };
                    Ok(LbtStep::Sense(self.timing.slot))
                }
            }
            (LbtState::Backoff { n }, false) => {
                self.frozen = Some(n);
                self.state = LbtState::InitialDefer;
                Ok(LbtStep::WaitIdle)
            }
            _ => Err(self.invalid("on_cca_slot")),
        }
    }

    fn enter_backoff(&mut self) -> Result<LbtStep, LbtError> {
        let n = match self.frozen.take().or_else(|| self.predrawn.take()) {
            Some(n) => n,
            None => self.sample_backoff()?,
        };
        if n == 0 {
            self.state = LbtState::Granted;
            Ok(LbtStep::Grant)
        } else {
            self.state = LbtState::Backoff { n };
            Ok(LbtStep::Sense(self.timing.slot))
        }
    }

    /// Draws `N` uniformly from `{0, …, cw}`.
    pub fn sample_backoff(&mut self) -> Result<u32, LbtError> {
        let n = self.rng.uniform_int(0, u64::from(self.cw))? as u32;
        self.last_draw = Some(n);
        Ok(n)
    }

    /// Draws `N` now so the caller can time the attempt; the next backoff
    /// phase uses this value.
    pub fn predraw_backoff(&mut self) -> Result<u32, LbtError> {
        let n = self.sample_backoff()?;
        self.predrawn = Some(n);
        Ok(n)
    }

    /// Drops the current attempt, including any frozen or pre-drawn count.
    pub fn abort(&mut self) {
        self.state = LbtState::Idle;
        self.frozen = None;
        self.predrawn = None;
    }

    /// Hands a granted channel back (burst done, or nothing to send).
    pub fn release(&mut self) -> Result<(), LbtError> {
        if self.state != LbtState::Granted {
            return Err(self.invalid("release"));
        }
        self.state = LbtState::Idle;
        Ok(())
    }

    /// Contention-window update from aggregated burst feedback.
    pub fn report_burst_feedback(&mut self, outcome: BurstFeedback) {
        self.cw = match outcome {
            BurstFeedback::Success => self.timing.cw_min,
            BurstFeedback::Failure => self.timing.ladder.next(self.cw, self.timing.cw_max),
        };
    }

    #[cfg(test)]
    pub(crate) fn set_cw(&mut self, cw: u32) {
        self.cw = cw;
    }
}
