//! `eotlab`: runs an ε-sweep on a preset instance and writes plot-ready
//! CSV, per-claim verdicts and run metadata.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use eotlab_core::rates::{evaluate, list_presets, Fits, Instance, SweepFailure, SweepOptions};
use eotlab_core::tolerances::TABLE_VERSION;
use serde::Serialize;

use config::{parse_settings, ExperimentConfig, Settings};

const EXIT_VERDICT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "eotlab",
    version,
    about = "Entropic optimal transport rate experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ε-sweep and write sweep.csv, verdicts.json and run_meta.json
    Run(RunArgs),
    /// List the preset instances
    Presets {
        /// machine-readable output
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// flat key = value experiment file
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// strictly decreasing ε values, comma or space separated
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// apply `tolerance.*` keys from the config file; without this flag
    /// they are rejected
    #[arg(long)]
    override_tolerances: bool,
}

#[derive(Serialize)]
struct WallTimes {
    build: f64,
    evaluate: f64,
    total: f64,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool_version: &'static str,
    core_version: &'static str,
    tolerance_table_version: &'static str,
    config: &'a ExperimentConfig,
    instance_id: &'a str,
    threads: usize,
    wall_time_seconds: WallTimes,
    pass: bool,
    exit_code: u8,
    failures: &'a [SweepFailure],
    fits: &'a Fits,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("eotlab: {msg}");
    ExitCode::from(code)
}

/// Caps the global rayon pool from EOTLAB_THREADS.
fn configure_threads() -> Result<usize, String> {
    if let Ok(v) = std::env::var("EOTLAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("EOTLAB_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(rayon::current_num_threads())
}

fn load_config(args: RunArgs) -> Result<ExperimentConfig, String> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_settings(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => Settings::default(),
    };
    if !file.tolerance_overrides.is_empty() && !args.override_tolerances {
        return Err(
            "the config overrides verdict tolerances; pass --override-tolerances to apply them"
                .into(),
        );
    }
    let flags = Settings {
        preset: args.preset,
        resolution: args.resolution,
        eps_list: args.eps,
        seed: args.seed,
        output_dir: args.out,
        ..Default::default()
    };
    file.overlay(flags).resolve()
}

fn run(args: RunArgs) -> ExitCode {
    let start = Instant::now();
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let threads = match configure_threads() {
        Ok(n) => n,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let inst = match Instance::build(cfg.preset, cfg.resolution, cfg.custom.as_ref()) {
        Ok(i) => i,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let built = Instant::now();
    let opts = SweepOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let (sweep, fits, report) = match evaluate(&inst, &cfg.eps_list, &opts, &cfg.tolerances()) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_SOLVER, e),
    };
    let done = Instant::now();

    for v in &report.verdicts {
        let target = v
            .target
            .map(|t| format!("{t:.6}"))
            .unwrap_or_else(|| "-".into());
        let tol = v
            .tolerance
            .map(|t| format!("{t:e}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{} {:<30} measured {:>12.6} target {:>10} tol {:>8}",
            if v.pass { "PASS" } else { "FAIL" },
            v.claim_id,
            v.measured,
            target,
            tol
        );
    }
    let code = if !sweep.failures.is_empty() {
        EXIT_SOLVER
    } else if !report.pass {
        EXIT_VERDICT
    } else {
        0
    };

    let meta = RunMeta {
        tool_version: env!("CARGO_PKG_VERSION"),
        core_version: eotlab_core::VERSION,
        tolerance_table_version: TABLE_VERSION,
        config: &cfg,
        instance_id: &sweep.instance_id,
        threads,
        wall_time_seconds: WallTimes {
            build: (built - start).as_secs_f64(),
            evaluate: (done - built).as_secs_f64(),
            total: start.elapsed().as_secs_f64(),
        },
        pass: report.pass,
        exit_code: code,
        failures: &sweep.failures,
        fits: &fits,
    };
    let files = (|| -> Result<Vec<(&str, Vec<u8>)>, String> {
        Ok(vec![
            (
                "sweep.csv",
                output::sweep_csv(&sweep.records).map_err(|e| e.to_string())?,
            ),
            (
                "verdicts.json",
                serde_json::to_vec_pretty(&report).map_err(|e| e.to_string())?,
            ),
            (
                "run_meta.json",
                serde_json::to_vec_pretty(&meta).map_err(|e| e.to_string())?,
            ),
        ])
    })();
    let written = files.and_then(|f| {
        output::write_all_atomic(&cfg.output_dir, &f)
            .map_err(|e| format!("cannot write to {}: {e}", cfg.output_dir.display()))
    });
    if let Err(e) = written {
        return fail(EXIT_CONFIG, e);
    }
    for f in &sweep.failures {
        eprintln!("eotlab: solver failed at eps={}: {}", f.eps, f.error);
    }
    println!(
        "{} ({} verdicts, {:.1}s) -> {}",
        if report.pass {
            "all verdicts pass"
        } else {
            "verdict failure"
        },
        report.verdicts.len(),
        start.elapsed().as_secs_f64(),
        cfg.output_dir.display()
    );
    ExitCode::from(code)
}

fn presets(json: bool) -> ExitCode {
    use std::fmt::Write as _;
    let list = list_presets();
    let mut text = String::new();
    if json {
        text = serde_json::to_string_pretty(&list).expect("preset table serializes");
        text.push('\n');
    } else {
        let _ = writeln!(
            text,
            "{:<20} {:<32} {:>10}  description",
            "preset", "hypothesis", "resolution"
        );
        for p in &list {
            let _ = writeln!(
                text,
                "{:<20} {:<32} {:>10}  {}",
                p.name, p.hypothesis, p.default_resolution, p.description
            );
            for t in &p.targets {
                let _ = writeln!(text, "{:<20} - {t}", "");
            }
        }
    }
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::Write::write_all(&mut std::io::stdout().lock(), text.as_bytes());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Presets { json } => presets(json),
    }
}
