//! Closed-form capacity, duty-cycle and defer-time estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::lbt::{AccessTiming, PriorityClassParams};
use crate::wifi::AccessCategoryParams;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticError {
    #[error(
        "unsupported link {streams}x{streams} MIMO / {qam}QAM / {bandwidth_mhz} MHz; \
         supported: 20 MHz, 1-4 streams, 64QAM or 256QAM"
    )]
    UnsupportedLink {
        streams: u32,
        qam: u32,
        bandwidth_mhz: u32,
    },
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub bandwidth_mhz: u32,
    pub mimo_streams: u32,
    pub qam_order: u32,
}

impl LinkConfig {
    pub const LTE_2X2_64QAM: LinkConfig = LinkConfig {
        bandwidth_mhz: 20,
        mimo_streams: 2,
        qam_order: 64,
    };
    pub const LTE_4X4_256QAM: LinkConfig = LinkConfig {
        bandwidth_mhz: 20,
        mimo_streams: 4,
        qam_order: 256,
    };
}

/// Peak rate of one 20 MHz carrier.
///
/// Anchored at 151 Mb/s for 2 streams of 64QAM and 357 Mb/s for 4 streams of
/// 256QAM; other stream counts scale linearly from the anchor with the same
/// modulation: `rate = anchor(qam) * streams / anchor_streams(qam)`.
pub fn peak_phy_rate(cfg: &LinkConfig) -> Result<f64, AnalyticError> {
    let unsupported = AnalyticError::UnsupportedLink {
        streams: cfg.mimo_streams,
        qam: cfg.qam_order,
        bandwidth_mhz: cfg.bandwidth_mhz,
    };
    if cfg.bandwidth_mhz != 20 || !(1..=4).contains(&cfg.mimo_streams) {
        return Err(unsupported);
    }
    let (anchor, anchor_streams) = match cfg.qam_order {
        64 => (151.0e6, 2.0),
        256 => (357.0e6, 4.0),
        _ => return Err(unsupported),
    };
    Ok(anchor * f64::from(cfg.mimo_streams) / anchor_streams)
}

/// `mcot / (mcot + alignment_gap + lbt_overhead)`.
pub fn duty_cycle_bound(
    mcot: SimTime,
    alignment_gap: SimTime,
    lbt_overhead: SimTime,
) -> Result<f64, AnalyticError> {
    if mcot == SimTime::ZERO {
        return Err(AnalyticError::Domain("MCOT must be positive".into()));
    }
    let cycle = mcot + alignment_gap + lbt_overhead;
    Ok(mcot.as_nanos() as f64 / cycle.as_nanos() as f64)
}

pub fn max_laa_throughput(cfg: &LinkConfig, duty: f64) -> Result<f64, AnalyticError> {
    if !(0.0..=1.0).contains(&duty) {
        return Err(AnalyticError::Domain(format!(
            "duty cycle {duty} outside [0, 1]"
        )));
    }
    Ok(peak_phy_rate(cfg)? * duty)
}

/// Anything with priority slots and a minimum contention window.
pub trait ContentionParams {
    fn priority_slots(&self) -> u32;
    fn cw_min(&self) -> u32;
}

impl ContentionParams for PriorityClassParams {
    fn priority_slots(&self) -> u32 {
        self.m
    }
    fn cw_min(&self) -> u32 {
        self.cw_min
    }
}

impl ContentionParams for AccessCategoryParams {
    fn priority_slots(&self) -> u32 {
        self.m
    }
    fn cw_min(&self) -> u32 {
        self.cw_min
    }
}

impl ContentionParams for AccessTiming {
    fn priority_slots(&self) -> u32 {
        self.m
    }
    fn cw_min(&self) -> u32 {
        self.cw_min
    }
}

/// Mean slots waited before a first attempt on an idle channel:
/// `m + cw_min / 2`.
pub fn expected_defer_slots<P: ContentionParams>(params: &P) -> f64 {
    f64::from(params.priority_slots()) + f64::from(params.cw_min()) / 2.0
}

/// Equal share of a solo throughput among `n_contenders`.
pub fn fairness_baseline(
    solo_throughput_bps: f64,
    n_contenders: u32,
) -> Result<f64, AnalyticError> {
    if n_contenders == 0 {
        return Err(AnalyticError::Domain("need at least one contender".into()));
    }
    Ok(solo_throughput_bps / f64::from(n_contenders))
}
