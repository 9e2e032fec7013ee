//! Command-line front end: simulate scenarios, synthesize the YK parameter,
//! check the factorization, dump gains and aggregate reports.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use yk2dof::error::Error;
use yk2dof::harness::{self, AppConfig, Metrics, Mode, Scenario};
use yk2dof::ss::mat_serde;
use yk2dof::{linalg, ss, youla};

#[derive(Parser)]
#[command(
    name = "yk2dof",
    about = "Hierarchical 2DOF YK/MPC control on the four-tank benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario against the nonlinear plant and write
    /// CSV plus metrics JSON into a directory.
    Simulate {
        /// Configuration JSON; benchmark defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for <mode>.csv and <mode>.metrics.json.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario mode.
        #[arg(long)]
        mode: Option<String>,
        /// Run every mode against the same synthesized design.
        #[arg(long, default_value_t = false)]
        all_modes: bool,
    },
    /// Synthesize the FIR YK parameter and emit taps plus realization.
    Qsynth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the double Bezout identity of the synthesized factorization.
    BezoutCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional path for the full factorization JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the extracted MPC gains, filter gain and feedforward gain.
    Gains {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge per-run metrics JSON files into one comparison report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => 4,
        Error::SolverFailed { .. } | Error::Infeasible | Error::MaxIterations => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<AppConfig, Error> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            AppConfig::from_json(&text)
        }
        None => Ok(AppConfig::default()),
    }
}

fn parse_mode(name: &str) -> Result<Mode, Error> {
    Mode::ALL
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| Error::Config(format!("unknown mode '{name}'")))
}

/// Per-run sidecar written next to each CSV.
#[derive(Serialize, Deserialize)]
struct RunSummary {
    mode: Mode,
    scenario: Scenario,
    metrics: Metrics,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            mode,
            all_modes,
        } => {
            let cfg = load_config(&config)?;
            let synth = harness::synthesize(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let modes: Vec<Mode> = if all_modes {
                Mode::ALL.to_vec()
            } else if let Some(name) = mode {
                vec![parse_mode(&name)?]
            } else {
                vec![cfg.scenario.mode]
            };
            for m in modes {
                let mut scen = cfg.scenario.clone();
                scen.mode = m;
                let res = harness::run_scenario(&synth, &scen)?;
                let metrics = harness::compute_metrics(&res, &scen);
                harness::export_csv(&res, &out.join(format!("{m}.csv")))?;
                let summary = RunSummary {
                    mode: m,
                    scenario: scen,
                    metrics,
                };
                std::fs::write(
                    out.join(format!("{m}.metrics.json")),
                    serde_json::to_string_pretty(&summary).map_err(json_err)?,
                )?;
                println!("wrote {}", out.join(format!("{m}.csv")).display());
            }
            Ok(())
        }
        Command::Qsynth { config, out } => {
            let cfg = load_config(&config)?;
            let synth = harness::synthesize(&cfg)?;
            #[derive(Serialize)]
            struct TapsOut<'a> {
                taps: Vec<Vec<Vec<f64>>>,
                realized: &'a ss::StateSpace,
            }
            let taps = synth
                .q
                .taps
                .iter()
                .map(|t| {
                    (0..t.nrows())
                        .map(|i| (0..t.ncols()).map(|j| t[(i, j)]).collect())
                        .collect()
                })
                .collect();
            let payload = TapsOut {
                taps,
                realized: &synth.q.realized,
            };
            write_file(
                &out,
                &serde_json::to_string_pretty(&payload).map_err(json_err)?,
            )?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::BezoutCheck { config, out } => {
            let cfg = load_config(&config)?;
            let synth = harness::synthesize(&cfg)?;
            let residual = youla::verify_bezout(&synth.fac, 200)?;
            let ok = residual <= 1e-7;
            println!(
                "{}",
                serde_json::json!({ "residual": residual, "tolerance": 1e-7, "ok": ok })
            );
            if let Some(path) = out {
                write_file(
                    &path,
                    &serde_json::to_string_pretty(&synth.fac).map_err(json_err)?,
                )?;
            }
            if !ok {
                return Err(Error::Synthesis(format!(
                    "double Bezout residual {residual} above 1e-7"
                )));
            }
            Ok(())
        }
        Command::Gains { config, out } => {
            let cfg = load_config(&config)?;
            let synth = harness::synthesize(&cfg)?;
            #[derive(Serialize)]
            struct GainsOut {
                #[serde(rename = "Lx", with = "mat_serde")]
                lx: linalg::Mat,
                #[serde(rename = "LZ", with = "mat_serde")]
                lz: linalg::Mat,
                #[serde(rename = "LU", with = "mat_serde")]
                lu: linalg::Mat,
                #[serde(rename = "LDu", with = "mat_serde")]
                ldu: linalg::Mat,
                #[serde(rename = "Kfx", with = "mat_serde")]
                kfx: linalg::Mat,
                #[serde(rename = "Kff", with = "mat_serde")]
                kff: linalg::Mat,
            }
            let payload = GainsOut {
                lx: synth.gains.lx.clone(),
                lz: synth.gains.lz.clone(),
                lu: synth.gains.lu.clone(),
                ldu: synth.gains.ldu.clone(),
                kfx: synth.filter.kfx.clone(),
                kff: synth.kff.clone(),
            };
            let text = serde_json::to_string_pretty(&payload).map_err(json_err)?;
            match out {
                Some(path) => {
                    write_file(&path, &text)?;
                    println!("wrote {}", path.display());
                }
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Report { input, out } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.ends_with(".metrics.json"))
                })
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Config(format!(
                    "no *.metrics.json files under {}",
                    input.display()
                )));
            }
            let mut entries: Vec<(Scenario, Metrics)> = Vec::new();
            for f in files {
                let text = std::fs::read_to_string(&f)?;
                let summary: RunSummary = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", f.display())))?;
                entries.push((summary.scenario, summary.metrics));
            }
            let report = harness::compare_report(&entries)?;
            write_file(&out, &report)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
