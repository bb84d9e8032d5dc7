//! Acceptance criteria 1-10. Runs as a plain binary so the PASS/FAIL lines
//! always show; exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;

use coexsim::analytic::expected_defer_slots;
use coexsim::engine::{NodeId, SimTime};
use coexsim::lbt::{
    legacy_b_mcot, variant_params, BurstFeedback, CwLadder, LbtVariant, PriorityClassParams,
};
use coexsim::medium::TransmissionKind;
use coexsim::metrics::{summarize, MetricsReport};
use coexsim::runner::output::results_csv;
use coexsim::runner::{presets, PreparedScenario, ScenarioConfig, ScenarioResult};
use coexsim::sim::RunOutput;
use coexsim::wifi::{AccessCategoryParams, WifiPhyConfig};
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use common::{channel, drive, empirical_defer_slots, machine, us, variants};

const HORIZON_S: f64 = 30.0;
const WARMUP_S: f64 = 1.0;
const REPLICATIONS: u32 = 10;
const SOLO_TARGET_MBPS: f64 = 67.0;
const FAIR_MBPS: f64 = SOLO_TARGET_MBPS / 2.0;

/// Burst-limit violations found in one run's records and transmission log.
fn burst_violations(out: &RunOutput) -> Vec<String> {
    let mut bad = Vec::new();
    let mut by_source: HashMap<NodeId, Vec<(SimTime, SimTime)>> = HashMap::new();
    for b in &out.stats.bursts {
        if b.end - b.start > b.limit {
            bad.push(format!(
                "{:?} burst {:?}..{:?} exceeds {:?}",
                b.source, b.start, b.end, b.limit
            ));
        }
        by_source
            .entry(b.source)
            .or_default()
            .push((b.start, b.end));
    }
    for spans in by_source.values_mut() {
        spans.sort();
    }
    // Every logged transmission must sit inside a recorded burst of its
    // sender. ACKs are responses sent SIFS after a frame, outside any TXOP.
    for tx in out
        .log
        .iter()
        .filter(|t| t.kind != TransmissionKind::WifiAck)
    {
        let Some(spans) = by_source.get(&tx.source) else {
            continue;
        };
        let i = spans.partition_point(|&(s, _)| s <= tx.start);
        let inside = i > 0 && tx.end <= spans[i - 1].1;
        if !inside {
            bad.push(format!(
                "{:?} {:?} at {:?} outside any burst",
                tx.source, tx.kind, tx.start
            ));
        }
    }
    bad
}

struct Measured {
    result: ScenarioResult,
    violations: Vec<String>,
    bursts: usize,
}

struct Suite {
    failures: Vec<u32>,
    violations: Vec<String>,
    bursts_checked: usize,
}

impl Suite {
    fn report(&mut self, id: u32, ok: bool, detail: String) {
        println!(
            "criterion {id:>2}: {} {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failures.push(id);
        }
    }

    fn measure(&mut self, mut cfg: ScenarioConfig) -> Measured {
        cfg.horizon_s = HORIZON_S;
        cfg.warmup_s = WARMUP_S;
        cfg.replications = REPLICATIONS;
        let prepared =
            PreparedScenario::prepare(&cfg).unwrap_or_else(|e| panic!("{}: {e}", cfg.name));
        let per_rep = prepared
            .replicate_with(|_, out| {
                Ok((
                    summarize(out)?,
                    burst_violations(out),
                    out.stats.bursts.len(),
                ))
            })
            .unwrap_or_else(|e| panic!("{}: {e}", cfg.name));
        let mut reports: Vec<MetricsReport> = Vec::new();
        let mut violations = Vec::new();
        let mut bursts = 0;
        for (r, v, n) in per_rep {
            reports.push(r);
            violations.extend(v.into_iter().map(|m| format!("{}: {m}", cfg.name)));
            bursts += n;
        }
        self.violations.extend(violations.iter().cloned());
        self.bursts_checked += bursts;
        Measured {
            result: ScenarioResult::new(&prepared, reports),
            violations,
            bursts,
        }
    }

    fn preset(&mut self, name: &str) -> Measured {
        self.measure(presets::load(name).unwrap())
    }
}

fn mean(m: &Measured, key: &str) -> f64 {
    m.result.get(key).map_or(f64::NAN, |e| e.mean)
}

fn show(m: &Measured, key: &str) -> String {
    match m.result.get(key) {
        Some(e) => format!("{:.2}±{:.2}", e.mean, e.ci95_half_width.unwrap_or(0.0)),
        None => "n/a".into(),
    }
}

fn lbt_properties() -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 512,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(
            &(variants(), channel(), 0u64..u64::MAX, 0u64..500),
            |((variant, class), ch, seed, start)| {
                let timing = variant_params(variant, &class).unwrap();
                let mut m = machine(timing, seed);
                let o = drive(&mut m, &ch, start);
                let required = us(timing.initial_idle)
                    + (u64::from(timing.m) + u64::from(o.draw)) * us(timing.slot);
                if o.idle_sensed < required {
                    return Err(TestCaseError::fail(format!(
                        "granted after {} µs idle, {required} required",
                        o.idle_sensed
                    )));
                }
                Ok(())
            },
        )
        .map_err(|e| format!("(a) {e}"))?;
    runner
        .run(&(variants(), 0usize..12), |((variant, class), failures)| {
            let timing = variant_params(variant, &class).unwrap();
            let mut m = machine(timing, 7);
            let mut expected = timing.cw_min;
            for _ in 0..failures {
                if m.cw() != expected {
                    return Err(TestCaseError::fail(format!(
                        "cw {} expected {expected}",
                        m.cw()
                    )));
                }
                m.report_burst_feedback(BurstFeedback::Failure);
                expected = match timing.ladder {
                    CwLadder::PowerOfTwoMinusOne => 2 * (expected + 1) - 1,
                    CwLadder::PowerOfTwo => 2 * expected,
                }
                .min(timing.cw_max);
            }
            if m.cw() != expected {
                return Err(TestCaseError::fail(format!(
                    "cw {} expected {expected}",
                    m.cw()
                )));
            }
            Ok(())
        })
        .map_err(|e| format!("(b) {e}"))?;
    for cw in 4..=32u32 {
        let t = variant_params(LbtVariant::LegacyB(cw), &PriorityClassParams::CLASS_3).unwrap();
        if t.mcot.as_nanos() * 32 != u64::from(cw) * 13_000_000 || t.mcot != legacy_b_mcot(cw) {
            return Err(format!("(c) cw {cw}: mcot {:?}", t.mcot));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut s = Suite {
        failures: Vec::new(),
        violations: Vec::new(),
        bursts_checked: 0,
    };
    println!("acceptance: {HORIZON_S} s horizon, {WARMUP_S} s warmup, {REPLICATIONS} replications");

    // 1
    let solo = s.preset("baseline_wifi_only");
    let g = mean(&solo, "wifi_goodput_mbps");
    s.report(
        1,
        (g - SOLO_TARGET_MBPS).abs() <= 0.05 * SOLO_TARGET_MBPS,
        format!(
            "solo Wi-Fi {} Mb/s, want 67 ± 5 %",
            show(&solo, "wifi_goodput_mbps")
        ),
    );

    // 2-5
    let mut fig3: HashMap<(u8, u64), f64> = HashMap::new();
    let mut fig3_text = Vec::new();
    for qci in [9u8, 7, 5] {
        for dmtc in [40u64, 80, 160] {
            let m = s.preset(&format!("fig3_qci{qci}_dmtc{dmtc}"));
            fig3.insert((qci, dmtc), mean(&m, "wifi_goodput_mbps"));
            fig3_text.push(format!(
                "qci{qci}/{dmtc}ms: wifi {} laa {}",
                show(&m, "wifi_goodput_mbps"),
                show(&m, "laa_goodput_mbps")
            ));
        }
    }
    for line in &fig3_text {
        println!("    {line}");
    }
    let row = |qci: u8| -> String {
        [40, 80, 160]
            .iter()
            .map(|d| format!("{d}ms {:.2}", fig3[&(qci, *d)]))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let all =
        |qci: u8, ok: &dyn Fn(f64) -> bool| [40, 80, 160].iter().all(|d| ok(fig3[&(qci, *d)]));
    s.report(
        2,
        all(9, &|g| (0.9 * FAIR_MBPS..=1.2 * FAIR_MBPS).contains(&g)),
        format!("QCI 9 Wi-Fi [{}] Mb/s, want [30.15, 40.2]", row(9)),
    );
    s.report(
        3,
        all(7, &|g| g >= 1.4 * FAIR_MBPS),
        format!("QCI 7 Wi-Fi [{}] Mb/s, want ≥ 46.9", row(7)),
    );
    s.report(
        4,
        all(5, &|g| g <= 0.88 * FAIR_MBPS),
        format!("QCI 5 Wi-Fi [{}] Mb/s, want ≤ 29.48", row(5)),
    );
    s.report(
        5,
        fig3[&(9, 40)] >= fig3[&(9, 160)],
        format!(
            "QCI 9 Wi-Fi 40ms {:.2} vs 160ms {:.2} Mb/s, want 40 ≥ 160",
            fig3[&(9, 40)],
            fig3[&(9, 160)]
        ),
    );

    // 6
    let rtt: Vec<(String, f64, String)> = ["fig4_baseline", "fig4_qci5", "fig4_qci7", "fig4_qci9"]
        .iter()
        .map(|name| {
            let m = s.preset(name);
            (
                name.to_string(),
                mean(&m, "probe_rtt_mean_ms"),
                show(&m, "probe_rtt_mean_ms"),
            )
        })
        .collect();
    let mut slow = presets::load("fig4_qci9").unwrap();
    slow.laa.dmtc_period_ms = Some(160);
    slow.name = "fig4_qci9_dmtc160".into();
    let slow = s.measure(slow);
    let rtt160 = mean(&slow, "probe_rtt_mean_ms");
    let ordered = rtt.windows(2).all(|w| w[0].1 < w[1].1);
    let q9 = rtt[3].1;
    let dmtc_effect = (rtt160 - q9).abs() / q9;
    s.report(
        6,
        ordered && (8.0..=18.0).contains(&q9) && dmtc_effect < 0.10,
        format!(
            "RTT {} ms; qci9 at 160ms {:.2} ms (Δ {:.1} %); want increasing, qci9 in [8, 18], Δ < 10 %",
            rtt.iter().map(|(n, _, t)| format!("{n} {t}")).collect::<Vec<_>>().join(", "),
            rtt160,
            100.0 * dmtc_effect
        ),
    );

    // 7
    let duty = s.preset("duty_cycle_89");
    let occ = mean(&duty, "data_occupancy.enb");
    let gp = mean(&duty, "laa_goodput_mbps");
    s.report(
        7,
        (0.87..=0.91).contains(&occ) && (gp - 134.0).abs() <= 4.0,
        format!("data occupancy {occ:.4} (want [0.87, 0.91]), goodput {gp:.2} Mb/s (want 134 ± 4)"),
    );

    // 8
    let c1 = PriorityClassParams::CLASS_1;
    let be = AccessCategoryParams::BEST_EFFORT;
    let (e1, ebe) = (expected_defer_slots(&c1), expected_defer_slots(&be));
    let sim1 = empirical_defer_slots(
        variant_params(LbtVariant::Current, &c1).unwrap(),
        100_000,
        11,
    );
    let simbe = empirical_defer_slots(be.timing(&WifiPhyConfig::default()), 100_000, 12);
    s.report(
        8,
        e1 == 2.5
            && ebe == 10.5
            && (sim1 - e1).abs() <= 0.01 * e1
            && (simbe - ebe).abs() <= 0.01 * ebe,
        format!("class 1 {e1} (sim {sim1:.4}), best effort {ebe} (sim {simbe:.4}) slots"),
    );

    // 9
    let props = lbt_properties();
    let first = s
        .violations
        .first()
        .map(|v| format!(" (first: {v})"))
        .unwrap_or_default();
    s.report(
        9,
        props.is_ok() && s.violations.is_empty(),
        format!(
            "scripted properties {}; {} bursts across all runs, {} over their limit{}",
            props
                .as_ref()
                .map_or_else(|e| format!("failed: {e}"), |_| "hold".into()),
            s.bursts_checked,
            s.violations.len(),
            first
        ),
    );

    // 10
    let again = s.preset("fig3_qci9_dmtc40");
    let before = s.preset("fig3_qci9_dmtc40");
    let same = results_csv(&again.result).unwrap() == results_csv(&before.result).unwrap();
    let also = results_csv(&solo.result).unwrap()
        == results_csv(&s.preset("baseline_wifi_only").result).unwrap();
    s.report(
        10,
        same && also && again.violations.is_empty() && again.bursts == before.bursts,
        format!("results.csv byte-identical on rerun: fig3_qci9_dmtc40 {same}, baseline_wifi_only {also}"),
    );

    if s.failures.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {:?}", s.failures);
        ExitCode::FAILURE
    }
}
