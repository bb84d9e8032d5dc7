//! Scripted channel traces for driving an LBT machine by hand.
#![allow(dead_code)]

use coexsim::engine::{NodeId, RngStream, SimTime, StreamPurpose};
use coexsim::lbt::{AccessTiming, LbtMachine, LbtState, LbtStep, LbtVariant, PriorityClassParams};
use proptest::prelude::*;

/// Busy intervals `[start, end)` in µs, sorted and disjoint.
#[derive(Debug, Clone)]
pub struct Channel(pub Vec<(u64, u64)>);

impl Channel {
    pub fn busy_at(&self, t: u64) -> Option<(u64, u64)> {
        self.0.iter().copied().find(|&(s, e)| s <= t && t < e)
    }

    /// First busy instant in `[from, to)`.
    pub fn first_busy(&self, from: u64, to: u64) -> Option<u64> {
        self.0
            .iter()
            .filter(|&&(s, e)| s < to && e > from)
            .map(|&(s, _)| s.max(from))
            .min()
    }
}

pub struct Outcome {
    pub grant_at: u64,
    /// Idle time observed in completed idle sensing intervals.
    pub idle_sensed: u64,
    /// Idle time right before the grant, back to the last busy instant.
    pub trailing_idle: u64,
    pub draw: u32,
}

pub fn us(t: SimTime) -> u64 {
    t.as_nanos() / 1_000
}

/// Drives one attempt against a scripted channel, mimicking an
/// interrupt-driven carrier-sense driver.
pub fn drive(machine: &mut LbtMachine, ch: &Channel, start: u64) -> Outcome {
    let mut t = start;
    let mut idle_sensed = 0;
    let mut last_busy_end = start;
    let mut step = machine.start_attempt(ch.busy_at(t).is_none()).unwrap();
    loop {
        match step {
            LbtStep::Grant => {
                return Outcome {
                    grant_at: t,
                    idle_sensed,
                    trailing_idle: t - last_busy_end,
                    draw: machine.last_draw().unwrap(),
                }
            }
            LbtStep::WaitIdle => {
                let (_, end) = ch.busy_at(t).expect("waiting on an idle channel");
                t = end;
                last_busy_end = end;
                // Back-to-back busy intervals.
                while let Some((_, e)) = ch.busy_at(t) {
                    t = e;
                    last_busy_end = e;
                }
                step = machine.on_channel_idle().unwrap();
            }
            LbtStep::Sense(d) => {
                let d = us(d);
                let in_defer = machine.state() == LbtState::InitialDefer;
                match ch.first_busy(t, t + d) {
                    None => {
                        t += d;
                        idle_sensed += d;
                        step = if in_defer {
                            machine.on_defer_elapsed().unwrap()
                        } else {
                            machine.on_cca_slot(true).unwrap()
                        };
                    }
                    Some(b) => {
                        t = b;
                        step = if in_defer {
                            machine.on_defer_interrupted().unwrap()
                        } else {
                            machine.on_cca_slot(false).unwrap()
                        };
                    }
                }
            }
        }
    }
}

pub fn variants() -> impl Strategy<Value = (LbtVariant, PriorityClassParams)> {
    let class = prop_oneof![
        Just(PriorityClassParams::CLASS_1),
        Just(PriorityClassParams::CLASS_2),
        Just(PriorityClassParams::CLASS_3)
    ];
    let variant = prop_oneof![
        Just(LbtVariant::Current),
        Just(LbtVariant::LegacyA),
        (4u32..=32).prop_map(LbtVariant::LegacyB)
    ];
    (variant, class)
}

pub fn channel() -> impl Strategy<Value = Channel> {
    prop::collection::vec((1u64..400, 1u64..300), 0..12).prop_map(|gaps| {
        let mut t = 0;
        let mut v = Vec::new();
        for (idle, busy) in gaps {
            t += idle;
            v.push((t, t + busy));
            t += busy;
        }
        Channel(v)
    })
}

pub fn machine(timing: AccessTiming, seed: u64) -> LbtMachine {
    LbtMachine::new(timing, RngStream::new(seed, NodeId(0), StreamPurpose::Test)).unwrap()
}

/// Mean idle-channel defer in slots, `(delay - initial_idle) / slot`.
pub fn empirical_defer_slots(timing: AccessTiming, attempts: usize, seed: u64) -> f64 {
    let mut m = machine(timing, seed);
    let empty = Channel(Vec::new());
    let total: u64 = (0..attempts)
        .map(|_| {
            let o = drive(&mut m, &empty, 0);
            m.release().unwrap();
            o.grant_at - us(timing.initial_idle)
        })
        .sum();
    total as f64 / attempts as f64 / us(timing.slot) as f64
}
