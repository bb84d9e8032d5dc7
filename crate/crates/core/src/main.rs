use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coexsim::analytic::{self, AnalyticError, LinkConfig};
use coexsim::engine::SimTime;
use coexsim::lbt::PriorityClassParams;
use coexsim::runner::{self, output, presets, RunnerError, ScenarioConfig, ScenarioResult};
use coexsim::wifi::{AccessCategory, AccessCategoryParams};

#[derive(Parser)]
#[command(
    name = "coexsim",
    version,
    about = "LTE-LAA / Wi-Fi coexistence simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios and write result files.
    Run(RunArgs),
    /// Closed-form estimates.
    #[command(subcommand)]
    Calc(Calc),
    /// Built-in scenarios.
    #[command(subcommand)]
    Presets(PresetsCmd),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file or preset name; repeat for several.
    #[arg(long, required = true)]
    scenario: Vec<String>,
    /// Master seed; replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ac {
    Voice,
    Video,
    BestEffort,
}

impl From<Ac> for AccessCategory {
    fn from(a: Ac) -> Self {
        match a {
            Ac::Voice => AccessCategory::Voice,
            Ac::Video => AccessCategory::Video,
            Ac::BestEffort => AccessCategory::BestEffort,
        }
    }
}

#[derive(Args)]
struct LinkArgs {
    #[arg(long, default_value_t = 2)]
    streams: u32,
    #[arg(long, default_value_t = 64)]
    qam: u32,
    #[arg(long, default_value_t = 20)]
    bandwidth_mhz: u32,
}

impl LinkArgs {
    fn link(&self) -> LinkConfig {
        LinkConfig {
            bandwidth_mhz: self.bandwidth_mhz,
            mimo_streams: self.streams,
            qam_order: self.qam,
        }
    }
}

#[derive(Subcommand)]
enum Calc {
    /// Peak PHY rate of one 20 MHz carrier.
    PeakRate(LinkArgs),
    /// mcot / (mcot + gap + lbt overhead).
    DutyCycle {
        #[arg(long)]
        mcot_ms: f64,
        #[arg(long, default_value_t = 0.0)]
        gap_ms: f64,
        #[arg(long, default_value_t = 0.0)]
        lbt_us: f64,
    },
    /// Peak rate scaled by a duty cycle.
    MaxThroughput {
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long)]
        duty: f64,
    },
    /// Mean slots before a first attempt on an idle channel.
    DeferSlots {
        /// LAA channel access priority class (1-3).
        #[arg(long, conflicts_with = "ac")]
        class: Option<u8>,
        #[arg(long, value_enum)]
        ac: Option<Ac>,
    },
    /// Equal share of a solo throughput.
    Baseline {
        #[arg(long)]
        solo_mbps: f64,
        #[arg(long, default_value_t = 2)]
        contenders: u32,
    },
}

#[derive(Subcommand)]
enum PresetsCmd {
    List,
    /// Print a preset's TOML.
    Show {
        name: String,
    },
}

/// Errors carry a stable category printed as `error[category]`.
enum CliError {
    Runner(RunnerError),
    Analytic(AnalyticError),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Runner(e) => e.category(),
            CliError::Analytic(_) => "domain",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runner(e) => e.exit_code() as u8,
            CliError::Analytic(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Runner(e) => {
                write!(f, "{e}")?;
                let mut src = std::error::Error::source(e);
                while let Some(s) = src {
                    write!(f, ": {s}")?;
                    src = s.source();
                }
                Ok(())
            }
            CliError::Analytic(e) => write!(f, "{e}"),
        }
    }
}

impl From<RunnerError> for CliError {
    fn from(e: RunnerError) -> Self {
        CliError::Runner(e)
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        CliError::Analytic(e)
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioConfig, RunnerError> {
    let path = Path::new(arg);
    if path.exists() {
        runner::parse_scenario(path)
    } else if presets::source(arg).is_some() {
        presets::load(arg)
    } else if arg.ends_with(".toml") || arg.contains('/') {
        runner::parse_scenario(path)
    } else {
        Err(RunnerError::UnknownPreset(arg.to_string()))
    }
}

fn fmt_estimate(r: &ScenarioResult, key: &str, unit: &str) -> Option<String> {
    let e = r.get(key)?;
    Some(match e.ci95_half_width {
        Some(h) => format!("{key} = {:.3} ± {:.3} {unit} (n={})", e.mean, h, e.n),
        None => format!("{key} = {:.3} {unit} (n={})", e.mean, e.n),
    })
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let configs = args
        .scenario
        .iter()
        .map(|s| load_scenario(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results = Vec::new();
    for cfg in &configs {
        eprintln!("running {} ...", cfg.name);
        let r = runner::run_scenario(cfg, args.seed, args.replications)?;
        println!("{}", r.name);
        for (key, unit) in [
            ("wifi_goodput_mbps", "Mb/s"),
            ("laa_goodput_mbps", "Mb/s"),
            ("probe_rtt_mean_ms", "ms"),
            ("jain_index", ""),
        ] {
            if let Some(line) = fmt_estimate(&r, key, unit) {
                println!("  {}", line.trim_end());
            }
        }
        results.push(r);
    }
    for path in output::write_outputs(&results, &args.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn calc(c: Calc) -> Result<(), CliError> {
    match c {
        Calc::PeakRate(l) => {
            println!("{:.3} Mb/s", analytic::peak_phy_rate(&l.link())? / 1e6);
        }
        Calc::DutyCycle {
            mcot_ms,
            gap_ms,
            lbt_us,
        } => {
            for (name, v) in [("mcot_ms", mcot_ms), ("gap_ms", gap_ms), ("lbt_us", lbt_us)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(
                        AnalyticError::Domain(format!("{name} must be zero or positive")).into(),
                    );
                }
            }
            let d = analytic::duty_cycle_bound(
                SimTime::from_millis_f64(mcot_ms),
                SimTime::from_millis_f64(gap_ms),
                SimTime::from_millis_f64(lbt_us / 1e3),
            )?;
            println!("{d:.4}");
        }
        Calc::MaxThroughput { link, duty } => {
            println!(
                "{:.3} Mb/s",
                analytic::max_laa_throughput(&link.link(), duty)? / 1e6
            );
        }
        Calc::DeferSlots { class, ac } => {
            let slots = match (class, ac) {
                (Some(1), None) => analytic::expected_defer_slots(&PriorityClassParams::CLASS_1),
                (Some(2), None) => analytic::expected_defer_slots(&PriorityClassParams::CLASS_2),
                (Some(3), None) => analytic::expected_defer_slots(&PriorityClassParams::CLASS_3),
                (Some(c), None) => {
                    return Err(AnalyticError::Domain(format!(
                        "priority class {c} not supported; use 1, 2 or 3"
                    ))
                    .into())
                }
                (None, Some(a)) => {
                    analytic::expected_defer_slots(&AccessCategoryParams::of(a.into()))
                }
                _ => return Err(AnalyticError::Domain("give --class or --ac".into()).into()),
            };
            println!("{slots}");
        }
        Calc::Baseline {
            solo_mbps,
            contenders,
        } => {
            println!(
                "{:.3} Mb/s",
                analytic::fairness_baseline(solo_mbps, contenders)?
            );
        }
    }
    Ok(())
}

fn presets_cmd(p: PresetsCmd) -> Result<(), CliError> {
    match p {
        PresetsCmd::List => {
            for name in presets::names() {
                let desc = presets::load(name)?.description.unwrap_or_default();
                println!("{name:<22} {desc}");
            }
        }
        PresetsCmd::Show { name } => {
            let text = presets::source(&name).ok_or(RunnerError::UnknownPreset(name))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Calc(c) => calc(c),
        Command::Presets(p) => presets_cmd(p),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
