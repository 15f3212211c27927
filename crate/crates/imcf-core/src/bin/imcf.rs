use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use imcf_core::certificates::{check, default_tolerance, CertificateReport, InitialStats};
use imcf_core::config::{parse_config, RunConfig};
use imcf_core::decay::{verify_rates_with_window, RateReport, DEFAULT_WINDOW_FRACTION};
use imcf_core::error::Error;
use imcf_core::flow::{evolve, Trajectory};
use imcf_core::grid::GraphState;
use imcf_core::initial::InitialFamily;
use imcf_core::io;

const EXIT_OK: u8 = 0;
const EXIT_CERT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BREAKDOWN: u8 = 3;

// Writes that fail (e.g. the reader closed the pipe) must not turn a
// meaningful exit code into a panic.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "imcf",
    about = "Inverse mean curvature flow of graphs over horospheres: \
             simulation, certificate checking, and decay-rate fitting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a flow from a config file and write monitors, certificates,
    /// rates, and snapshots to the output directory.
    Run {
        /// Path to a `section.key = value` config file.
        config: PathBuf,
        /// Output directory (overrides `output.directory` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate all certificates from monitors.csv plus the initial
    /// snapshot in a run directory.
    Verify {
        dir: PathBuf,
        /// Certificate tolerance (default: 1e-6 + h^2 from the snapshot grid).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Fit decay rates from monitors.csv and write rates.txt.
    Fit {
        dir: PathBuf,
        /// Tail-window fraction in (0,1) for the fits (default 0.25).
        #[arg(long)]
        window: Option<f64>,
    },
    /// Run the built-in horosphere and perturbed-horosphere configurations.
    Demo {
        /// Parent directory for the two demo runs.
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
    },
}

fn fail(e: &Error) -> u8 {
    match e {
        Error::Validation { violations } => {
            eprintln!("error: invalid configuration:");
            for v in violations {
                eprintln!("  - {v}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    EXIT_CONFIG
}

fn print_reports(certs: &CertificateReport, rates: &RateReport) {
    outln!("certificates (tol = {:.6e}):", certs.tol);
    out!("{}", io::render_certificates(certs));
    outln!("rates (window fraction = {}):", rates.window_fraction);
    out!("{}", io::render_rates(rates));
}

fn execute_run(config: RunConfig, out: Option<PathBuf>) -> u8 {
    let dir = match out.or_else(|| config.directory.clone()) {
        Some(d) => d,
        None => {
            eprintln!("error: no output directory; pass --out or set output.directory");
            return EXIT_CONFIG;
        }
    };
    let initial = match config.make_initial() {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let stats = match InitialStats::from_state(&initial) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };

    // The initial snapshot is always written: `verify` re-derives the
    // certificate constants from it.
    let mut flow = config.flow.clone();
    if !flow.snapshot_times.iter().any(|&t| t == 0.0) {
        flow.snapshot_times.insert(0, 0.0);
    }

    let traj = match evolve(&initial, &flow) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let spacing = initial.grid.spacing();
    let certs = check(&traj, &stats, default_tolerance(spacing));
    let rates = verify_rates_with_window(&traj, &stats, DEFAULT_WINDOW_FRACTION);
    if let Err(e) = io::write_outputs(&dir, &traj, &certs, &rates) {
        return fail(&e);
    }

    let last_t = traj.samples.last().map(|s| s.t).unwrap_or(0.0);
    outln!(
        "termination: {} after {} steps at t = {last_t}",
        traj.termination.label(),
        traj.steps
    );
    print_reports(&certs, &rates);
    outln!("outputs written to {}", dir.display());

    if !traj.termination.completed() {
        EXIT_BREAKDOWN
    } else if !certs.all_pass() {
        EXIT_CERT_FAILURE
    } else {
        EXIT_OK
    }
}

fn cmd_run(config_path: &Path, out: Option<PathBuf>) -> u8 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(source) => {
            return fail(&Error::Io {
                path: config_path.display().to_string(),
                source,
            })
        }
    };
    match parse_config(&text) {
        Ok(config) => execute_run(config, out),
        Err(e) => fail(&e),
    }
}

fn load_run_dir(dir: &Path) -> Result<(Vec<imcf_core::flow::Sample>, GraphState), Error> {
    let samples = io::read_monitors(&dir.join("monitors.csv"))?;
    let initial = io::read_snapshot(&io::snapshot_path(dir, 0))?;
    Ok((samples, initial))
}

fn cmd_verify(dir: &Path, tol: Option<f64>) -> u8 {
    let (samples, initial) = match load_run_dir(dir) {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    if samples.is_empty() {
        eprintln!("error: monitors.csv has no samples");
        return EXIT_CONFIG;
    }
    let stats = match InitialStats::from_state(&initial) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let tol = match tol {
        Some(v) if v > 0.0 && v.is_finite() => v,
        Some(v) => {
            eprintln!("error: --tol must be positive and finite, got {v}");
            return EXIT_CONFIG;
        }
        None => default_tolerance(initial.grid.spacing()),
    };
    let traj = Trajectory {
        samples,
        snapshots: vec![initial],
        termination: imcf_core::flow::Termination::Completed,
        steps: 0,
    };
    let report = check(&traj, &stats, tol);
    outln!("certificates (tol = {tol:.6e}):");
    out!("{}", io::render_certificates(&report));
    if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_CERT_FAILURE
    }
}

fn cmd_fit(dir: &Path, window: Option<f64>) -> u8 {
    let (samples, initial) = match load_run_dir(dir) {
        Ok(x) => x,
        Err(e) => return fail(&e),
    };
    let stats = match InitialStats::from_state(&initial) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let wf = match window {
        Some(v) if v > 0.0 && v < 1.0 => v,
        Some(v) => {
            eprintln!("error: --window must lie in (0,1), got {v}");
            return EXIT_CONFIG;
        }
        None => DEFAULT_WINDOW_FRACTION,
    };
    let traj = Trajectory {
        samples,
        snapshots: vec![initial],
        termination: imcf_core::flow::Termination::Completed,
        steps: 0,
    };
    let report = verify_rates_with_window(&traj, &stats, wf);
    if let Err(e) = io::write_rates(&dir.join("rates.txt"), &report) {
        return fail(&e);
    }
    outln!("rates (window fraction = {wf}):");
    out!("{}", io::render_rates(&report));
    if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_CERT_FAILURE
    }
}

fn demo_configs() -> Vec<(&'static str, RunConfig)> {
    let tau = 2.0 * std::f64::consts::PI;
    vec![
        (
            "horosphere",
            RunConfig {
                dimension: 2,
                points_per_axis: 64,
                length: tau,
                initial: InitialFamily::Constant { height: 1.0 },
                flow: imcf_core::flow::FlowConfig {
                    t_end: 2.0,
                    snapshot_times: vec![1.0, 2.0],
                    ..Default::default()
                },
                directory: None,
            },
        ),
        (
            "perturbed",
            RunConfig {
                dimension: 1,
                points_per_axis: 256,
                length: tau,
                initial: InitialFamily::Sine {
                    height: 1.0,
                    amplitude: 0.1,
                    wave: vec![1],
                },
                flow: imcf_core::flow::FlowConfig {
                    t_end: 3.0,
                    snapshot_times: vec![1.5, 3.0],
                    ..Default::default()
                },
                directory: None,
            },
        ),
    ]
}

fn cmd_demo(out: &Path) -> u8 {
    let mut worst = EXIT_OK;
    for (name, config) in demo_configs() {
        outln!("=== demo: {name} ===");
        let code = execute_run(config, Some(out.join(name)));
        worst = worst.max(code);
    }
    worst
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Verify { dir, tol } => cmd_verify(&dir, tol),
        Command::Fit { dir, window } => cmd_fit(&dir, window),
        Command::Demo { out } => cmd_demo(&out),
    };
    ExitCode::from(code)
}
