use std::path::Path;
use std::process::Command;

use coexsim::runner::output::{
    read_summary, results_csv, write_outputs, RESULTS_CSV, SUMMARY_JSON,
};
use coexsim::runner::{
    parse_scenario, parse_scenario_str, presets, run_scenario, PreparedScenario, RunnerError,
};

const SMALL: &str = r#"
name = "small"
horizon_s = 1.5
warmup_s = 0.5
master_seed = 40
replications = 3

[laa]
enabled = true
qci = 9
dmtc_period_ms = 40

[wifi]
enabled = true
data_rate_bps = 72e6

[wifi.probe]
enabled = true
interval_ms = 20.0
"#;

fn small() -> coexsim::runner::ScenarioConfig {
    parse_scenario_str(SMALL, "small").unwrap()
}

#[test]
fn missing_file_names_the_path() {
    let err = parse_scenario(Path::new("/nonexistent/x.toml")).unwrap_err();
    assert!(matches!(err, RunnerError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/x.toml"));
    assert_eq!(err.category(), "io");
}

#[test]
fn out_of_range_values_name_their_key() {
    let cases = [
        (
            "[laa]\nenabled = true\ndmtc_period_ms = 50\n",
            "laa.dmtc_period_ms",
        ),
        (
            "[laa]\nenabled = true\nlbt_variant = \"legacy_b\"\nlegacy_b_cw = 40\n",
            "laa.legacy_b_cw",
        ),
        ("[wifi]\nenabled = true\nn_clients = 0\n", "wifi.n_clients"),
        (
            "[medium]\ned_threshold_dbm_per_mhz = -60.0\n[wifi]\nenabled = true\n",
            "medium.ed_threshold_dbm_per_mhz",
        ),
        (
            "[laa]\nenabled = true\nclass3_mcot_ms = 9\n",
            "laa.class3_mcot_ms",
        ),
        (
            "[wifi]\nenabled = true\n[wifi.probe]\nenabled = true\ninterval = 5\n",
            "wifi.probe",
        ),
    ];
    for (body, key) in cases {
        let text = format!("name = \"t\"\nhorizon_s = 2.0\n{body}");
        let err = parse_scenario_str(&text, "t")
            .and_then(|c| c.resolve().map(|_| ()))
            .unwrap_err();
        assert_eq!(err.category(), "config");
        assert!(err.to_string().contains(key), "{key}: {err}");
    }
    let err = parse_scenario_str("name = \"t\"\n", "t")
        .unwrap_err()
        .to_string();
    assert!(err.contains("horizon_s"), "{err}");
}

#[test]
fn single_replication_has_no_interval() {
    let r = run_scenario(&small(), None, Some(1)).unwrap();
    assert_eq!(r.seeds, vec![40]);
    let e = r.get("wifi_goodput_mbps").unwrap();
    assert_eq!(e.n, 1);
    assert!(e.ci95_half_width.is_none());
}

#[test]
fn replication_r_uses_master_plus_r_and_runs_are_repeatable() {
    let a = run_scenario(&small(), Some(7), None).unwrap();
    assert_eq!(a.seeds, vec![7, 8, 9]);
    let b = run_scenario(&small(), Some(7), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(results_csv(&a).unwrap(), results_csv(&b).unwrap());
    for key in ["wifi_goodput_mbps", "laa_goodput_mbps", "probe_rtt_mean_ms"] {
        assert!(a.get(key).unwrap().ci95_half_width.is_some(), "{key}");
    }
}

#[test]
fn goodput_is_written_with_three_decimals() {
    let mut r = run_scenario(&small(), None, Some(1)).unwrap();
    r.replications[0].flows[0].goodput_bps = 33.5e6;
    let csv = String::from_utf8(results_csv(&r).unwrap()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replication,seed,flow_id,source,kind,bits_delivered,goodput_mbps,mean_delay_ms,p95_delay_ms,occupancy_fraction"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[6], "33.500");
}

#[test]
fn outputs_round_trip_and_are_replaced_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&small(), None, None).unwrap();
    write_outputs(std::slice::from_ref(&r), dir.path()).unwrap();
    let back = read_summary(&dir.path().join(SUMMARY_JSON)).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.aggregates, r.aggregates);

    let r2 = run_scenario(&small(), Some(1000), None).unwrap();
    write_outputs(std::slice::from_ref(&r2), dir.path()).unwrap();
    let csv = std::fs::read(dir.path().join(RESULTS_CSV)).unwrap();
    assert_eq!(csv, results_csv(&r2).unwrap());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with('.'))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn several_scenarios_get_subdirectories_and_one_plot_row_each() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = small();
    b.name = "other".into();
    b.laa.qci = 5;
    let results = vec![
        run_scenario(&small(), None, Some(2)).unwrap(),
        run_scenario(&b, None, Some(2)).unwrap(),
    ];
    write_outputs(&results, dir.path()).unwrap();
    assert!(dir.path().join("small").join(RESULTS_CSV).exists());
    assert!(dir.path().join("other").join(SUMMARY_JSON).exists());
    for plot in ["plotdata_throughput.csv", "plotdata_delay.csv"] {
        let text = std::fs::read_to_string(dir.path().join(plot)).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("small,") && rows[1].starts_with("other,"));
    }
}

#[test]
fn interval_shrinks_with_the_square_root_of_replications() {
    let mut cfg = presets::load("baseline_wifi_only").unwrap();
    cfg.horizon_s = 1.5;
    cfg.warmup_s = 0.5;
    cfg.wifi.target_baseline_bps = None;
    cfg.wifi.data_rate_bps = Some(72e6);
    let width = |n| {
        run_scenario(&cfg, Some(500), Some(n))
            .unwrap()
            .get("wifi_goodput_mbps")
            .unwrap()
            .ci95_half_width
            .unwrap()
    };
    let ratio = width(100) / width(25);
    assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn preset_replication_errors_report_the_seed() {
    let e = RunnerError::Replication {
        replication: 3,
        seed: 44,
        source: coexsim::sim::SimError::Config("boom".into()),
    };
    assert!(e.to_string().contains("seed 44"));
    assert_eq!(e.category(), "simulation");
    // Preparation alone never touches the replication seeds.
    let p = PreparedScenario::prepare(&small()).unwrap();
    assert_eq!(p.seed_of(3), 43);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coexsim"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_run_writes_files_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.toml");
    std::fs::write(&scen, SMALL).unwrap();
    let out_dir = dir.path().join("out");
    let o = cli(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--replications",
        "2",
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out_dir.join(RESULTS_CSV)).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0,3,"));
    assert!(out_dir.join("plotdata_throughput.csv").exists());
}

#[test]
fn cli_errors_are_categorised() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("bad.toml");
    std::fs::write(
        &scen,
        "name = \"b\"\nhorizon_s = 3.0\n[laa]\nenabled = true\ndmtc_period_ms = 50\n",
    )
    .unwrap();
    let o = cli(&["run", "--scenario", scen.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("error[config]") && err.contains("{40, 80, 160}"),
        "{err}"
    );

    std::fs::write(&scen, "").unwrap();
    let o = cli(&["run", "--scenario", scen.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));

    let o = cli(&["run", "--scenario", "no_such_preset"]);
    assert_eq!(o.status.code(), Some(2));

    let o = cli(&["run", "--scenario", "/nonexistent/dir/s.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[io]"));
}

#[test]
fn cli_calc_and_presets() {
    let o = cli(&["calc", "defer-slots", "--class", "1"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "2.5");
    let o = cli(&["calc", "defer-slots", "--ac", "best-effort"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "10.5");
    let o = cli(&["calc", "max-throughput", "--duty", "0.8889"]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("134.2"));
    let o = cli(&["calc", "baseline", "--solo-mbps", "67"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "33.500 Mb/s");
    let o = cli(&["calc", "peak-rate", "--streams", "4", "--qam", "256"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "357.000 Mb/s");

    let o = cli(&["presets", "list"]);
    let list = String::from_utf8_lossy(&o.stdout);
    for name in presets::names() {
        assert!(list.contains(name));
    }
    for name in [
        "baseline_wifi_only",
        "fig3_qci7_dmtc80",
        "fig4_qci5",
        "legacy_optionA",
        "legacy_optionB_cw32",
        "duty_cycle_89",
    ] {
        assert!(list.contains(name), "{name}");
    }
}
