//! Scenario files, replications and output files.

pub mod config;
pub mod output;
pub mod presets;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::medium::TransmissionKind;
use crate::metrics::{summarize, MetricsReport};
use crate::sim::{run_once, RunOutput, SimError, SimSetup};
use crate::wifi::{calibrate_saturation_rate, AccessCategory, WifiPhyConfig};

pub use config::{parse_scenario, parse_scenario_str, ResolvedScenario, ScenarioConfig, WifiRate};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("replication {replication} (seed {seed}) failed: {source}")]
    Replication {
        replication: u32,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("Wi-Fi rate calibration failed: {0}")]
    Calibration(#[source] SimError),
    #[error("unknown preset '{0}'; run `coexsim presets list`")]
    UnknownPreset(String),
    #[error("{0}")]
    Output(String),
}

impl RunnerError {
    /// Stable, machine-readable category for the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            RunnerError::Config(_) | RunnerError::UnknownPreset(_) => "config",
            RunnerError::Io { .. } | RunnerError::Output(_) => "io",
            RunnerError::Replication { .. } => "simulation",
            RunnerError::Calibration(_) => "calibration",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "simulation" => 4,
            _ => 5,
        }
    }
}

type CalibrationKey = (u64, u64, u64, u64, AccessCategory, u64);

fn calibration_cache() -> &'static Mutex<HashMap<CalibrationKey, WifiPhyConfig>> {
    static CACHE: OnceLock<Mutex<HashMap<CalibrationKey, WifiPhyConfig>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Calibration is deterministic, so results are shared within the process.
fn calibrated(
    phy: &WifiPhyConfig,
    ac: AccessCategory,
    target: f64,
) -> Result<WifiPhyConfig, RunnerError> {
    let key = (
        phy.max_aggregation.as_nanos(),
        phy.frame_overhead.as_nanos(),
        phy.ack_duration.as_nanos(),
        phy.slot.as_nanos() ^ (phy.sifs.as_nanos() << 32),
        ac,
        target.to_bits(),
    );
    if let Some(hit) = calibration_cache().lock().unwrap().get(&key) {
        return Ok(*hit);
    }
    let out = calibrate_saturation_rate(phy, ac, target).map_err(RunnerError::Calibration)?;
    calibration_cache().lock().unwrap().insert(key, out);
    Ok(out)
}

/// A scenario with every input fixed, Wi-Fi calibration included.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub setup: SimSetup,
    pub wifi_phy_rate_bps: Option<f64>,
}

impl PreparedScenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self, RunnerError> {
        let ResolvedScenario {
            config,
            mut setup,
            wifi_rate,
        } = config.resolve()?;
        if let (Some(w), Some(WifiRate::CalibrateTo(target))) = (setup.wifi.as_mut(), wifi_rate) {
            w.phy = calibrated(&w.phy, w.ac, target)?;
        }
        let wifi_phy_rate_bps = setup.wifi.as_ref().map(|w| w.phy.data_rate_bps);
        Ok(PreparedScenario {
            config,
            setup,
            wifi_phy_rate_bps,
        })
    }

    pub fn seed_of(&self, replication: u32) -> u64 {
        self.config.master_seed.wrapping_add(u64::from(replication))
    }

    /// Runs every replication (in parallel) and hands each raw output to
    /// `f`. Results come back in replication order.
    pub fn replicate_with<T, F>(&self, f: F) -> Result<Vec<T>, RunnerError>
    where
        T: Send,
        F: Fn(u32, &RunOutput) -> Result<T, SimError> + Sync,
    {
        (0..self.config.replications)
            .into_par_iter()
            .map(|r| {
                let seed = self.seed_of(r);
                let wrap = |source| RunnerError::Replication {
                    replication: r,
                    seed,
                    source,
                };
                let out = run_once(&self.setup, seed).map_err(wrap)?;
                f(r, &out).map_err(wrap)
            })
            .collect()
    }

    pub fn run(&self) -> Result<ScenarioResult, RunnerError> {
        let reports = self.replicate_with(|_, out| Ok(summarize(out)?))?;
        Ok(ScenarioResult::new(self, reports))
    }
}

/// Mean over replications with a two-sided 95 % Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// `None` with fewer than two samples.
    pub ci95_half_width: Option<f64>,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Option<Estimate> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let ci95_half_width = (n >= 2).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("degrees of freedom are positive")
                .inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        });
        Some(Estimate {
            mean,
            ci95_half_width,
            n,
        })
    }

    pub fn low(&self) -> Option<f64> {
        self.ci95_half_width.map(|h| self.mean - h)
    }

    pub fn high(&self) -> Option<f64> {
        self.ci95_half_width.map(|h| self.mean + h)
    }
}

/// Scalar metrics of one report, keyed by name.
pub fn scalar_metrics(r: &MetricsReport) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    let mbps = |bps: f64| bps / 1e6;
    if r.flows.iter().any(|f| f.kind == TransmissionKind::WifiData) {
        m.insert(
            "wifi_goodput_mbps".into(),
            mbps(r.goodput_of_kind(TransmissionKind::WifiData)),
        );
    }
    if r.flows.iter().any(|f| f.kind == TransmissionKind::LaaData) {
        m.insert(
            "laa_goodput_mbps".into(),
            mbps(r.goodput_of_kind(TransmissionKind::LaaData)),
        );
    }
    for f in &r.flows {
        m.insert(format!("goodput_mbps.{}", f.name), mbps(f.goodput_bps));
        if let Some(d) = f.mean_delay_ms {
            m.insert(format!("mean_delay_ms.{}", f.name), d);
        }
    }
    if let Some(p) = &r.probe {
        if let Some(v) = p.mean_ms {
            m.insert("probe_rtt_mean_ms".into(), v);
        }
        if let Some(v) = p.p95_ms {
            m.insert("probe_rtt_p95_ms".into(), v);
        }
    }
    for o in &r.occupancy {
        m.insert(format!("occupancy.{}", o.source), o.occupancy);
        m.insert(format!("data_occupancy.{}", o.source), o.data_occupancy);
    }
    m.insert("total_busy_fraction".into(), r.total_busy_fraction);
    m.insert("jain_index".into(), r.jain_index.value);
    m
}

/// Aggregate of all replications of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub config: ScenarioConfig,
    pub wifi_phy_rate_bps: Option<f64>,
    pub seeds: Vec<u64>,
    pub aggregates: BTreeMap<String, Estimate>,
    pub replications: Vec<MetricsReport>,
}

impl ScenarioResult {
    pub fn new(prepared: &PreparedScenario, reports: Vec<MetricsReport>) -> Self {
        let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &reports {
            for (k, v) in scalar_metrics(r) {
                samples.entry(k).or_default().push(v);
            }
        }
        let aggregates = samples
            .into_iter()
            .filter_map(|(k, xs)| Estimate::from_samples(&xs).map(|e| (k, e)))
            .collect();
        ScenarioResult {
            name: prepared.config.name.clone(),
            config: prepared.config.clone(),
            wifi_phy_rate_bps: prepared.wifi_phy_rate_bps,
            seeds: reports.iter().map(|r| r.seed).collect(),
            aggregates,
            replications: reports,
        }
    }

    pub fn get(&self, metric: &str) -> Option<&Estimate> {
        self.aggregates.get(metric)
    }
}

/// Parses, prepares and runs a scenario, with optional overrides.
pub fn run_scenario(
    config: &ScenarioConfig,
    seed: Option<u64>,
    replications: Option<u32>,
) -> Result<ScenarioResult, RunnerError> {
    let mut cfg = config.clone();
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(n) = replications {
        cfg.replications = n;
    }
    PreparedScenario::prepare(&cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_single_sample_has_no_interval() {
        let e = Estimate::from_samples(&[3.0]).unwrap();
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.ci95_half_width, None);
        assert!(Estimate::from_samples(&[]).is_none());
    }

    #[test]
    fn estimate_matches_t_table() {
        // Two samples: t(0.975, 1) = 12.706; s = sqrt(2), s/sqrt(2) = 1.
        let e = Estimate::from_samples(&[1.0, 3.0]).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.ci95_half_width.unwrap() - 12.706).abs() < 1e-3);
        // Ten samples 0..9: s = 3.02765, t(0.975, 9) = 2.26216.
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let e = Estimate::from_samples(&xs).unwrap();
        assert!((e.ci95_half_width.unwrap() - 2.26216 * 3.02765 / 10f64.sqrt()).abs() < 1e-4);
    }
}
