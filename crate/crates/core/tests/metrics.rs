use coexsim::enb::{DmtcConfig, EnbConfig};
use coexsim::engine::{NodeId, SimTime};
use coexsim::medium::{Transmission, TransmissionKind, TxId};
use coexsim::metrics::{jain_index, occupancy, summarize};
use coexsim::sim::{run_once, SimSetup};
use coexsim::wifi::{WifiSetup, WifiTraffic};
use proptest::prelude::*;

fn coexistence(horizon_ms: u64, warmup_ms: u64) -> SimSetup {
    let mut s = SimSetup::new(
        SimTime::from_millis(horizon_ms),
        SimTime::from_millis(warmup_ms),
    );
    s.laa = Some(EnbConfig {
        dmtc: DmtcConfig::with_period_ms(80).unwrap(),
        ..EnbConfig::default()
    });
    s.wifi = Some(WifiSetup {
        probe_interval: Some(SimTime::from_millis(50)),
        ..WifiSetup::default()
    });
    s
}

#[test]
fn jain_of_fair_baseline_split() {
    let j = jain_index(&[33.5, 33.5, 67.0]);
    assert!((j.value - 0.888_8).abs() < 1e-3);
    assert!((j.value - 17956.0 / 20200.5).abs() < 1e-12);
    let fair = jain_index(&[1.0, 1.0]);
    assert_eq!(fair.value, 1.0);
    assert!(jain_index(&[0.0, 0.0]).degenerate);
}

#[test]
fn warmup_samples_are_excluded() {
    let out = run_once(&coexistence(3_000, 1_000), 2).unwrap();
    let r = summarize(&out).unwrap();
    let warm = SimTime::from_millis(1_000);
    let wifi = out.stats.flow_id("wifi_dl_client1").unwrap();
    let bits_after: u64 = out
        .stats
        .deliveries
        .iter()
        .filter(|d| d.flow == wifi && d.time >= warm)
        .map(|d| d.bits)
        .sum();
    let bits_all: u64 = out
        .stats
        .deliveries
        .iter()
        .filter(|d| d.flow == wifi)
        .map(|d| d.bits)
        .sum();
    assert!(bits_all > bits_after);
    let f = r.flow("wifi_dl_client1").unwrap();
    assert_eq!(f.bits_delivered, bits_after);
    assert!((f.goodput_bps - bits_after as f64 / 2.0).abs() < 1e-6);
    let probe = r.probe.unwrap();
    let rtts_after = out.stats.rtts.iter().filter(|s| s.time >= warm).count();
    assert_eq!(probe.rtt_samples, rtts_after);
    assert!(out.stats.rtts.len() > rtts_after);
}

#[test]
fn report_is_a_pure_function_of_the_run() {
    let out = run_once(&coexistence(1_500, 500), 3).unwrap();
    assert_eq!(summarize(&out).unwrap(), summarize(&out.clone()).unwrap());
}

#[test]
fn doubling_the_horizon_keeps_goodput() {
    let short = summarize(&run_once(&coexistence(21_000, 1_000), 4).unwrap()).unwrap();
    let long = summarize(&run_once(&coexistence(41_000, 1_000), 4).unwrap()).unwrap();
    for kind in [TransmissionKind::WifiData, TransmissionKind::LaaData] {
        let (a, b) = (short.goodput_of_kind(kind), long.goodput_of_kind(kind));
        assert!((a - b).abs() / b < 0.02, "{kind:?}: {a} vs {b}");
    }
}

fn tx(start: u64, len: u64) -> Transmission {
    Transmission {
        id: TxId(0),
        source: NodeId((start % 3) as u32),
        kind: TransmissionKind::WifiData,
        start: SimTime::from_micros(start),
        end: SimTime::from_micros(start + len),
        power_dbm: 0.0,
        payload_bits: 0,
    }
}

proptest! {
    #[test]
    fn occupancy_is_the_union_of_intervals(
        spans in prop::collection::vec((0u64..1_000, 1u64..200), 0..40),
        from in 0u64..300,
        width in 1u64..1_000,
    ) {
        let trace: Vec<Transmission> = spans.iter().map(|&(s, l)| tx(s, l)).collect();
        let to = from + width;
        let covered = (from..to)
            .filter(|&us| trace.iter().any(|t| t.start.as_nanos() <= us * 1_000 && us * 1_000 < t.end.as_nanos()))
            .count();
        let expected = covered as f64 / width as f64;
        let got = occupancy(&trace, |_| true, SimTime::from_micros(from), SimTime::from_micros(to));
        prop_assert!((got - expected).abs() < 1e-12, "{} vs {}", got, expected);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn per_flow_conservation(seed in 0u64..1_000, downlink in prop_oneof![Just(WifiTraffic::FullBuffer), Just(WifiTraffic::Off)]) {
        let mut s = coexistence(600, 100);
        s.wifi.as_mut().unwrap().downlink = downlink;
        let out = run_once(&s, seed).unwrap();
        let r = summarize(&out).unwrap();
        for f in &r.flows {
            prop_assert!(f.bits_delivered_total <= f.bits_transmitted_total, "{}", f.name);
            prop_assert!(f.bits_transmitted_total <= f.bits_enqueued_total, "{}", f.name);
            prop_assert!(f.bits_delivered <= f.bits_delivered_total);
        }
    }
}
