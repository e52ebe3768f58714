//! Driver-facing command line: validate mappings, materialize global
//! schemas, run queries, fit imputers, and launch federated runs from a
//! single experiment config.
//!
//! Exit codes: 0 success, 1 validation or semantic error, 2 config/IO error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use data_exchange::QueryMode;
use fed_runtime::RoundRecord;

use fedkit::pipeline::PipelineFailure;
use fedkit::{config, pipeline};

#[derive(Parser)]
#[command(
    name = "fedkit",
    about = "Federated learning over declaratively harmonized data silos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Certain,
    Impute,
}

impl From<ModeArg> for QueryMode {
    fn from(mode: ModeArg) -> QueryMode {
        match mode {
            ModeArg::Certain => QueryMode::CertainAnswers,
            ModeArg::Impute => QueryMode::Impute,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and statically validate every silo's mapping program.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Materialize each silo's global-schema instance to per-relation CSVs.
    Materialize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "impute")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one query per silo and write the answers as CSVs.
    Query {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long, value_enum, default_value = "impute")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the declared imputers from federated sufficient statistics and
    /// write the audit file.
    ImputeFit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: validate, materialize, fit imputers, build datasets,
    /// and run the federation.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print a round log produced by `run`.
    Report {
        #[arg(long)]
        runlog: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Err` means a config/IO failure (exit 2); `Ok(1)` a validation or
/// semantic failure.
fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Validate { config } => {
            let experiment = config::load_experiment(&config)?;
            let reports = pipeline::validate_all(&experiment);
            let mut ok = true;
            for (silo, report) in &reports {
                println!("silo '{silo}':");
                print!("{report}");
                ok &= report.is_ok();
            }
            Ok(if ok {
                println!("validation passed");
                ExitCode::SUCCESS
            } else {
                println!("validation failed");
                ExitCode::from(1)
            })
        }
        Command::Materialize { config, mode, out } => {
            let experiment = config::load_experiment(&config)?;
            if let Some(code) = ensure_valid(&experiment) {
                return Ok(code);
            }
            let mode: QueryMode = mode.into();
            let out_dir = out.unwrap_or_else(|| experiment.output_dir());
            let experiment = match mode {
                QueryMode::Impute => {
                    let fitted = match pipeline::fit_imputers(&experiment) {
                        Ok(f) => f,
                        Err(e) => return semantic(e),
                    };
                    pipeline::with_fitted(&experiment, &fitted)
                }
                QueryMode::CertainAnswers => experiment,
            };
            for silo in &experiment.silos {
                let instance = match pipeline::materialize_silo(&experiment, silo, mode) {
                    Ok(i) => i,
                    Err(e) => return semantic(e),
                };
                let dir = out_dir.join(&silo.id);
                pipeline::export_instance(
                    &instance,
                    mode,
                    &dir,
                    &experiment.config.experiment.null_token,
                )?;
                println!("materialized silo '{}' into {}", silo.id, dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Query {
            config,
            name,
            mode,
            out,
        } => {
            let experiment = config::load_experiment(&config)?;
            if let Some(code) = ensure_valid(&experiment) {
                return Ok(code);
            }
            let mode: QueryMode = mode.into();
            let experiment = match mode {
                QueryMode::Impute => {
                    let fitted = match pipeline::fit_imputers(&experiment) {
                        Ok(f) => f,
                        Err(e) => return semantic(e),
                    };
                    pipeline::with_fitted(&experiment, &fitted)
                }
                QueryMode::CertainAnswers => experiment,
            };
            let answers = match pipeline::query_answers(&experiment, &name, mode) {
                Ok(a) => a,
                Err(e) => return semantic(e),
            };
            let out_dir = out.unwrap_or_else(|| experiment.output_dir());
            for (silo, rows) in &answers {
                let dir = out_dir.join(silo);
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(format!("{name}.csv"));
                relational_core::write_csv(rows, &path, &experiment.config.experiment.null_token)?;
                println!("{}: {} answers -> {}", silo, rows.len(), path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ImputeFit { config, out } => {
            let experiment = config::load_experiment(&config)?;
            if let Some(code) = ensure_valid(&experiment) {
                return Ok(code);
            }
            let fitted = match pipeline::fit_imputers(&experiment) {
                Ok(f) => f,
                Err(e) => return semantic(e),
            };
            let out_dir = out.unwrap_or_else(|| experiment.output_dir());
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("imputers.json");
            std::fs::write(&path, serde_json::to_string_pretty(&fitted)?)?;
            println!("fitted {} imputer(s) -> {}", fitted.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, seed, out } => {
            let experiment = config::load_experiment(&config)?;
            let out_dir = out.unwrap_or_else(|| experiment.output_dir());
            std::fs::create_dir_all(&out_dir)?;
            println!(
                "experiment '{}' ({} silo(s))",
                experiment.config.experiment.name,
                experiment.silos.len()
            );
            match pipeline::run_pipeline(&experiment, seed) {
                Ok(artifacts) => {
                    artifacts
                        .log
                        .write_files(out_dir.join("runlog.jsonl"), out_dir.join("catalog.json"))?;
                    std::fs::write(
                        out_dir.join("model.json"),
                        serde_json::to_string_pretty(&artifacts.log.final_model)?,
                    )?;
                    std::fs::write(
                        out_dir.join("imputers.json"),
                        serde_json::to_string_pretty(&artifacts.fitted)?,
                    )?;
                    println!("partition scheme: {:?}", artifacts.partition);
                    let catalog = &artifacts.log.catalog;
                    match (catalog.final_loss, catalog.final_metric) {
                        (Some(loss), Some(metric)) => println!(
                            "final federation {}: {metric:.4} (loss {loss:.4}) after {} round(s)",
                            catalog.metric_name,
                            artifacts.log.rounds.len()
                        ),
                        _ => println!("run finished with no evaluable data"),
                    }
                    println!("logs in {}", out_dir.display());
                    Ok(ExitCode::SUCCESS)
                }
                Err(PipelineFailure::Validation(report)) => {
                    eprintln!("validation failed:\n{report}");
                    Ok(ExitCode::from(1))
                }
                Err(PipelineFailure::Stage(e)) => {
                    eprintln!("pipeline failed: {e:#}");
                    Ok(ExitCode::from(1))
                }
                Err(PipelineFailure::Learner {
                    learner,
                    message,
                    partial,
                }) => {
                    // preserve whatever rounds completed
                    partial
                        .write_files(out_dir.join("runlog.jsonl"), out_dir.join("catalog.json"))?;
                    eprintln!("learner '{learner}' failed: {message}; partial log preserved");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Report { runlog } => {
            use std::io::Write;
            let text = std::fs::read_to_string(&runlog)?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            // stop quietly when the reader goes away (e.g. piped to head)
            let _ = writeln!(
                out,
                "{:>5} {:>10} {:>13} {:>12} {:>12}  participants",
                "round", "sim_time", "fed_loss", "fed_metric", "steps"
            );
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let record: RoundRecord = serde_json::from_str(line)?;
                let steps: u64 = record.training.iter().map(|t| t.steps_done).sum();
                if writeln!(
                    out,
                    "{:>5} {:>10.3} {:>13} {:>12} {:>12}  {}",
                    record.round,
                    record.sim_time,
                    fmt_opt(record.federation_loss),
                    fmt_opt(record.federation_metric),
                    steps,
                    record.participants.join(",")
                )
                .is_err()
                {
                    break;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.5}")).unwrap_or_else(|| "-".into())
}

fn ensure_valid(experiment: &config::Experiment) -> Option<ExitCode> {
    let reports = pipeline::validate_all(experiment);
    let mut failed = false;
    for (silo, report) in &reports {
        if !report.is_ok() {
            eprintln!("silo '{silo}' failed validation:\n{report}");
            failed = true;
        }
    }
    failed.then(|| ExitCode::from(1))
}

fn semantic(e: anyhow::Error) -> anyhow::Result<ExitCode> {
    eprintln!("error: {e:#}");
    Ok(ExitCode::from(1))
}
