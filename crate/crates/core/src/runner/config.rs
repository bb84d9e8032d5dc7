//! Scenario files: TOML, every key checked, every default resolved
//! explicitly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::enb::{
    AlignmentStrategy, DmtcConfig, EnbConfig, HarqConfig, LaaTraffic, ReferenceSubframes,
    SchedulerConfig,
};
use crate::engine::SimTime;
use crate::lbt::LbtVariant;
use crate::medium::{DEFAULT_ED_THRESHOLD, ED_THRESHOLD_RANGE};
use crate::sim::SimSetup;
use crate::wifi::{AccessCategory, WifiPhyConfig, WifiSetup, WifiTraffic, RETRY_LIMIT};

use super::RunnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub horizon_s: f64,
    #[serde(default = "default_warmup")]
    pub warmup_s: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default)]
    pub laa: LaaSection,
    #[serde(default)]
    pub wifi: WifiSection,
    #[serde(default)]
    pub medium: MediumSection,
    /// Record the full event trace (debug aid; large).
    #[serde(default)]
    pub trace: bool,
}

fn default_warmup() -> f64 {
    1.0
}
fn default_replications() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Current,
    LegacyA,
    LegacyB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaaSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_qci")]
    pub qci: u8,
    #[serde(default = "default_strategy")]
    pub strategy: AlignmentStrategy,
    #[serde(default = "default_variant")]
    pub lbt_variant: VariantName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legacy_b_cw: Option<u32>,
    /// Absent: DMTC disabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dmtc_period_ms: Option<u64>,
    #[serde(default = "default_laa_traffic")]
    pub traffic: LaaTraffic,
    #[serde(default = "default_laa_rate")]
    pub phy_rate_bps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class3_mcot_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_cap_bps: Option<f64>,
    #[serde(default = "default_enb_power")]
    pub tx_power_dbm: f64,
    #[serde(default)]
    pub harq: HarqSection,
}

fn default_qci() -> u8 {
    9
}
fn default_strategy() -> AlignmentStrategy {
    AlignmentStrategy::ReservationSignal
}
fn default_variant() -> VariantName {
    VariantName::Current
}
fn default_laa_traffic() -> LaaTraffic {
    LaaTraffic::FullBuffer
}
fn default_laa_rate() -> f64 {
    151.0e6
}
fn default_enb_power() -> f64 {
    16.0
}

impl Default for LaaSection {
    fn default() -> Self {
        LaaSection {
            enabled: false,
            qci: default_qci(),
            strategy: default_strategy(),
            lbt_variant: default_variant(),
            legacy_b_cw: None,
            dmtc_period_ms: None,
            traffic: default_laa_traffic(),
            phy_rate_bps: default_laa_rate(),
            class3_mcot_ms: None,
            rate_cap_bps: None,
            tx_power_dbm: default_enb_power(),
            harq: HarqSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarqSection {
    #[serde(default = "default_threshold")]
    pub nack_ratio_threshold: f64,
    #[serde(default = "default_feedback_delay")]
    pub feedback_delay_ms: f64,
    #[serde(default = "default_true")]
    pub retx_priority: bool,
    #[serde(default = "default_reference")]
    pub reference: ReferenceSubframes,
}

fn default_threshold() -> f64 {
    0.8
}
fn default_feedback_delay() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}
fn default_reference() -> ReferenceSubframes {
    ReferenceSubframes::First
}

impl Default for HarqSection {
    fn default() -> Self {
        HarqSection {
            nack_ratio_threshold: default_threshold(),
            feedback_delay_ms: default_feedback_delay(),
            retx_priority: true,
            reference: default_reference(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WifiSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_clients")]
    pub n_clients: usize,
    #[serde(default = "default_ac")]
    pub ac: AccessCategory,
    #[serde(default = "default_wifi_traffic")]
    pub traffic: WifiTraffic,
    /// Solo saturated goodput the PHY rate is calibrated to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_baseline_bps: Option<f64>,
    /// Fixed PHY rate; mutually exclusive with `target_baseline_bps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_rate_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_aggregation_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_overhead_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack_duration_us: Option<u64>,
    #[serde(default = "default_ap_power")]
    pub ap_power_dbm: f64,
    #[serde(default = "default_client_power")]
    pub client_power_dbm: f64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default)]
    pub probe: ProbeSection,
}

fn default_clients() -> usize {
    1
}
fn default_ac() -> AccessCategory {
    AccessCategory::BestEffort
}
fn default_wifi_traffic() -> WifiTraffic {
    WifiTraffic::FullBuffer
}
fn default_ap_power() -> f64 {
    20.0
}
fn default_client_power() -> f64 {
    15.0
}
fn default_retry_limit() -> u32 {
    RETRY_LIMIT
}

impl Default for WifiSection {
    fn default() -> Self {
        WifiSection {
            enabled: false,
            n_clients: default_clients(),
            ac: default_ac(),
            traffic: default_wifi_traffic(),
            target_baseline_bps: None,
            data_rate_bps: None,
            max_aggregation_us: None,
            frame_overhead_us: None,
            ack_duration_us: None,
            ap_power_dbm: default_ap_power(),
            client_power_dbm: default_client_power(),
            retry_limit: default_retry_limit(),
            probe: ProbeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_probe_interval")]
    pub interval_ms: f64,
}

fn default_probe_interval() -> f64 {
    100.0
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            enabled: false,
            interval_ms: default_probe_interval(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    #[serde(default)]
    pub capture_enabled: bool,
    #[serde(default = "default_capture_margin")]
    pub capture_margin_db: f64,
    /// Node pairs that cannot hear each other, by name
    /// (`enb`, `ue`, `ap`, `client1`, ...).
    #[serde(default)]
    pub hidden_pairs: Vec<[String; 2]>,
    #[serde(default = "default_ed")]
    pub ed_threshold_dbm_per_mhz: f64,
}

fn default_capture_margin() -> f64 {
    10.0
}
fn default_ed() -> f64 {
    DEFAULT_ED_THRESHOLD
}

impl Default for MediumSection {
    fn default() -> Self {
        MediumSection {
            capture_enabled: false,
            capture_margin_db: default_capture_margin(),
            hidden_pairs: Vec::new(),
            ed_threshold_dbm_per_mhz: default_ed(),
        }
    }
}

/// The Wi-Fi PHY still needs a rate: either fixed or to be calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WifiRate {
    Fixed(f64),
    CalibrateTo(f64),
}

/// A validated scenario ready to run, up to Wi-Fi rate calibration.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub config: ScenarioConfig,
    pub setup: SimSetup,
    pub wifi_rate: Option<WifiRate>,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> RunnerError {
    RunnerError::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<f64, RunnerError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, format!("must be a positive number, got {v}")))
    }
}

pub fn parse_scenario_str(text: &str, origin: &str) -> Result<ScenarioConfig, RunnerError> {
    if text.trim().is_empty() {
        return Err(RunnerError::Config(format!(
            "{origin}: scenario file is empty"
        )));
    }
    let de = toml::Deserializer::parse(text)
        .map_err(|e| RunnerError::Config(format!("{origin}: {e}")))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().trim().to_string();
        if path == "." || path.is_empty() {
            RunnerError::Config(format!("{origin}: {msg}"))
        } else {
            RunnerError::Config(format!("{origin}: {path}: {msg}"))
        }
    })
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunnerError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_scenario_str(&text, &path.display().to_string())
}

impl ScenarioConfig {
    /// Checks every value and builds the simulation inputs.
    pub fn resolve(&self) -> Result<ResolvedScenario, RunnerError> {
        let horizon = positive("horizon_s", self.horizon_s)?;
        if !(self.warmup_s.is_finite() && self.warmup_s >= 0.0) {
            return Err(bad("warmup_s", "must be zero or positive"));
        }
        if self.warmup_s >= horizon {
            return Err(bad(
                "warmup_s",
                format!(
                    "{} must be shorter than horizon_s {}",
                    self.warmup_s, horizon
                ),
            ));
        }
        if self.replications == 0 {
            return Err(bad("replications", "must be at least 1"));
        }
        let mut setup = SimSetup::new(
            SimTime::from_secs_f64(horizon),
            SimTime::from_secs_f64(self.warmup_s),
        );
        setup.record_trace = self.trace;

        if self.laa.enabled {
            setup.laa = Some(self.resolve_laa()?);
        }
        let mut wifi_rate = None;
        if self.wifi.enabled {
            let (w, rate) = self.resolve_wifi()?;
            setup.wifi = Some(w);
            wifi_rate = Some(rate);
        }
        if setup.laa.is_none() && setup.wifi.is_none() {
            return Err(bad(
                "laa.enabled / wifi.enabled",
                "at least one technology must be enabled",
            ));
        }

        let m = &self.medium;
        let (lo, hi) = ED_THRESHOLD_RANGE;
        if !(lo..=hi).contains(&m.ed_threshold_dbm_per_mhz) {
            return Err(bad(
                "medium.ed_threshold_dbm_per_mhz",
                format!("{} outside [{lo}, {hi}]", m.ed_threshold_dbm_per_mhz),
            ));
        }
        if !(m.capture_margin_db.is_finite() && m.capture_margin_db >= 0.0) {
            return Err(bad("medium.capture_margin_db", "must be zero or positive"));
        }
        setup.capture_enabled = m.capture_enabled;
        setup.capture_margin_db = m.capture_margin_db;
        setup.ed_threshold_dbm_per_mhz = m.ed_threshold_dbm_per_mhz;
        let names = setup.node_names();
        for (i, [a, b]) in m.hidden_pairs.iter().enumerate() {
            for n in [a, b] {
                if !names.contains(n) {
                    return Err(bad(
                        &format!("medium.hidden_pairs[{i}]"),
                        format!("unknown node '{n}'; nodes are {}", names.join(", ")),
                    ));
                }
            }
            if a == b {
                return Err(bad(
                    &format!("medium.hidden_pairs[{i}]"),
                    "a node cannot be hidden from itself",
                ));
            }
            setup.hidden_pairs.push((a.clone(), b.clone()));
        }
        Ok(ResolvedScenario {
            config: self.clone(),
            setup,
            wifi_rate,
        })
    }

    fn resolve_laa(&self) -> Result<EnbConfig, RunnerError> {
        let l = &self.laa;
        let variant = match (l.lbt_variant, l.legacy_b_cw) {
            (VariantName::LegacyB, Some(cw)) => LbtVariant::LegacyB(cw),
            (VariantName::LegacyB, None) => {
                return Err(bad(
                    "laa.legacy_b_cw",
                    "required when lbt_variant = \"legacy_b\"",
                ))
            }
            (_, Some(_)) => {
                return Err(bad(
                    "laa.legacy_b_cw",
                    "only valid with lbt_variant = \"legacy_b\"",
                ))
            }
            (VariantName::Current, None) => LbtVariant::Current,
            (VariantName::LegacyA, None) => LbtVariant::LegacyA,
        };
        let dmtc = match l.dmtc_period_ms {
            None => DmtcConfig::disabled(),
            Some(p) => DmtcConfig::with_period_ms(p).map_err(|_| {
                bad(
                    "laa.dmtc_period_ms",
                    format!("{p} is not allowed; choose one of {{40, 80, 160}}"),
                )
            })?,
        };
        let class3_mcot = match l.class3_mcot_ms {
            None => None,
            Some(ms @ (8 | 10)) => Some(SimTime::from_millis(ms)),
            Some(ms) => {
                return Err(bad(
                    "laa.class3_mcot_ms",
                    format!("{ms} is not allowed; choose 8 or 10"),
                ))
            }
        };
        if let Some(cap) = l.rate_cap_bps {
            positive("laa.rate_cap_bps", cap)?;
        }
        let h = &l.harq;
        if !(h.nack_ratio_threshold > 0.0 && h.nack_ratio_threshold <= 1.0) {
            return Err(bad(
                "laa.harq.nack_ratio_threshold",
                format!("{} outside (0, 1]", h.nack_ratio_threshold),
            ));
        }
        if !(h.feedback_delay_ms.is_finite() && h.feedback_delay_ms >= 0.0) {
            return Err(bad(
                "laa.harq.feedback_delay_ms",
                "must be zero or positive",
            ));
        }
        let cfg = EnbConfig {
            scheduler: SchedulerConfig {
                strategy: l.strategy,
                qci: l.qci,
                phy_rate_bps: positive("laa.phy_rate_bps", l.phy_rate_bps)?,
                rate_cap_bps: l.rate_cap_bps,
                ..SchedulerConfig::default()
            },
            variant,
            class3_mcot,
            dmtc,
            harq: HarqConfig {
                nack_ratio_threshold: h.nack_ratio_threshold,
                feedback_delay: SimTime::from_millis_f64(h.feedback_delay_ms),
                retx_priority: h.retx_priority,
                reference: h.reference,
            },
            traffic: l.traffic,
            tx_power_dbm: l.tx_power_dbm,
        };
        cfg.validate().map_err(|e| {
            let key = match e.to_string() {
                s if s.contains("QCI") => "laa.qci",
                s if s.contains("Option B") || s.contains("legacy") => "laa.legacy_b_cw",
                _ => "laa",
            };
            bad(key, e)
        })?;
        Ok(cfg)
    }

    fn resolve_wifi(&self) -> Result<(WifiSetup, WifiRate), RunnerError> {
        let w = &self.wifi;
        if w.n_clients == 0 {
            return Err(bad("wifi.n_clients", "must be at least 1"));
        }
        if w.retry_limit == 0 {
            return Err(bad("wifi.retry_limit", "must be at least 1"));
        }
        let rate = match (w.target_baseline_bps, w.data_rate_bps) {
            (Some(_), Some(_)) => {
                return Err(bad(
                    "wifi.data_rate_bps",
                    "give either data_rate_bps or target_baseline_bps, not both",
                ))
            }
            (Some(t), None) => WifiRate::CalibrateTo(positive("wifi.target_baseline_bps", t)?),
            (None, Some(r)) => WifiRate::Fixed(positive("wifi.data_rate_bps", r)?),
            (None, None) => WifiRate::Fixed(WifiPhyConfig::default().data_rate_bps),
        };
        let mut phy = WifiPhyConfig::default();
        if let WifiRate::Fixed(r) = rate {
            phy.data_rate_bps = r;
        }
        if let Some(us) = w.max_aggregation_us {
            phy.max_aggregation = SimTime::from_micros(us);
        }
        if let Some(us) = w.frame_overhead_us {
            phy.frame_overhead = SimTime::from_micros(us);
        }
        if let Some(us) = w.ack_duration_us {
            phy.ack_duration = SimTime::from_micros(us);
        }
        let probe_interval = if w.probe.enabled {
            Some(SimTime::from_millis_f64(positive(
                "wifi.probe.interval_ms",
                w.probe.interval_ms,
            )?))
        } else {
            None
        };
        let setup = WifiSetup {
            ac: w.ac,
            phy,
            n_clients: w.n_clients,
            downlink: w.traffic,
            probe_interval,
            ap_power_dbm: w.ap_power_dbm,
            client_power_dbm: w.client_power_dbm,
            retry_limit: w.retry_limit,
        };
        phy.validate(&crate::wifi::AccessCategoryParams::of(w.ac))
            .map_err(|e| bad("wifi", e))?;
        Ok((setup, rate))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
horizon_s = 2.0
[laa]
enabled = true
"#;

    #[test]
    fn minimal_resolves_with_defaults() {
        let cfg = parse_scenario_str(MINIMAL, "t").unwrap();
        assert_eq!(cfg.warmup_s, 1.0);
        assert_eq!(cfg.replications, 1);
        let r = cfg.resolve().unwrap();
        let laa = r.setup.laa.unwrap();
        assert_eq!(laa.scheduler.qci, 9);
        assert!(!laa.dmtc.enabled);
        assert!(r.setup.wifi.is_none());
    }

    #[test]
    fn empty_is_an_error() {
        let err = parse_scenario_str("  \n", "x.toml")
            .unwrap_err()
            .to_string();
        assert!(err.contains("empty"), "{err}");
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = format!("{MINIMAL}qcii = 7\n");
        let err = parse_scenario_str(&text, "x.toml").unwrap_err().to_string();
        assert!(err.contains("laa") && err.contains("qcii"), "{err}");
    }

    #[test]
    fn dmtc_period_must_be_allowed() {
        let text = format!("{MINIMAL}dmtc_period_ms = 50\n");
        let err = parse_scenario_str(&text, "x")
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("laa.dmtc_period_ms") && err.contains("{40, 80, 160}"),
            "{err}"
        );
    }

    #[test]
    fn gbr_qci_rejected() {
        let text = format!("{MINIMAL}qci = 1\n");
        let err = parse_scenario_str(&text, "x")
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(err.contains("laa.qci"), "{err}");
    }

    #[test]
    fn wrong_type_names_its_path() {
        let text = "name = \"t\"\nhorizon_s = 2.0\n[wifi]\nn_clients = \"two\"\n";
        let err = parse_scenario_str(text, "x").unwrap_err().to_string();
        assert!(err.contains("wifi.n_clients"), "{err}");
    }

    #[test]
    fn hidden_pairs_checked() {
        let text = format!("{MINIMAL}[medium]\nhidden_pairs = [[\"enb\", \"ap\"]]\n");
        let err = parse_scenario_str(&text, "x")
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown node 'ap'"), "{err}");
    }
}
