//! Result files. Each file is written to a temporary sibling first and then
//! renamed over the target, so readers never see a half-written file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Estimate, RunnerError, ScenarioResult};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const PLOT_THROUGHPUT_CSV: &str = "plotdata_throughput.csv";
pub const PLOT_DELAY_CSV: &str = "plotdata_delay.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| RunnerError::Output(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn opt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

#[derive(Serialize)]
struct ResultRow<'a> {
    replication: usize,
    seed: u64,
    flow_id: &'a str,
    source: &'a str,
    kind: &'static str,
    bits_delivered: u64,
    goodput_mbps: String,
    mean_delay_ms: String,
    p95_delay_ms: String,
    occupancy_fraction: String,
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>, RunnerError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| RunnerError::Output(e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| RunnerError::Output(e.to_string()))
}

/// One row per flow per replication.
pub fn results_csv(result: &ScenarioResult) -> Result<Vec<u8>, RunnerError> {
    let rows = result.replications.iter().enumerate().flat_map(|(i, rep)| {
        rep.flows.iter().map(move |f| ResultRow {
            replication: i,
            seed: rep.seed,
            flow_id: &f.name,
            source: &f.source,
            kind: f.kind.label(),
            bits_delivered: f.bits_delivered,
            goodput_mbps: format!("{:.3}", f.goodput_bps / 1e6),
            mean_delay_ms: opt3(f.mean_delay_ms),
            p95_delay_ms: opt3(f.p95_delay_ms),
            occupancy_fraction: opt3(rep.occupancy_of(&f.source).map(|o| o.occupancy)),
        })
    });
    csv_bytes(rows)
}

pub fn summary_json(result: &ScenarioResult) -> Result<Vec<u8>, RunnerError> {
    let mut bytes =
        serde_json::to_vec_pretty(result).map_err(|e| RunnerError::Output(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Serialize)]
struct PlotRow<'a> {
    scenario: &'a str,
    metric: &'a str,
    mean: String,
    ci95_low: String,
    ci95_high: String,
    n: usize,
}

fn plot_rows<'a>(
    results: &'a [ScenarioResult],
    metric: &'a str,
) -> impl Iterator<Item = PlotRow<'a>> {
    results.iter().map(move |r| {
        let e: Option<&Estimate> = r.get(metric);
        PlotRow {
            scenario: &r.name,
            metric,
            mean: opt3(e.map(|e| e.mean)),
            ci95_low: opt3(e.and_then(Estimate::low)),
            ci95_high: opt3(e.and_then(Estimate::high)),
            n: e.map_or(0, |e| e.n),
        }
    })
}

/// Bar-chart data: Wi-Fi goodput per scenario.
pub fn plot_throughput_csv(results: &[ScenarioResult]) -> Result<Vec<u8>, RunnerError> {
    csv_bytes(plot_rows(results, "wifi_goodput_mbps"))
}

/// Bar-chart data: mean probe round-trip time per scenario.
pub fn plot_delay_csv(results: &[ScenarioResult]) -> Result<Vec<u8>, RunnerError> {
    csv_bytes(plot_rows(results, "probe_rtt_mean_ms"))
}

/// Writes everything for a set of scenarios. With a single scenario its files
/// go straight into `out_dir`; otherwise each gets a subdirectory named after
/// it. Plot data always sits in `out_dir`, one row per scenario.
pub fn write_outputs(
    results: &[ScenarioResult],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, RunnerError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    for r in results {
        let dir = if results.len() == 1 {
            out_dir.to_path_buf()
        } else {
            out_dir.join(&r.name)
        };
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (name, bytes) in [
            (RESULTS_CSV, results_csv(r)?),
            (SUMMARY_JSON, summary_json(r)?),
        ] {
            let path = dir.join(name);
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
    }
    for (name, bytes) in [
        (PLOT_THROUGHPUT_CSV, plot_throughput_csv(results)?),
        (PLOT_DELAY_CSV, plot_delay_csv(results)?),
    ] {
        let path = out_dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_summary(path: &Path) -> Result<ScenarioResult, RunnerError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Output(format!("{}: {e}", path.display())))
}
