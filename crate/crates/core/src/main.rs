use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use civrep::data::{generate_synthetic, load_csv, read_schema, write_csv, write_schema, Schema, SynthConfig};
use civrep::dvae::{load_checkpoint, save_checkpoint, train, ModelConfig};
use civrep::estimators::TwoStageConfig;
use civrep::graph::{d_connecting_path, is_valid_civ, is_valid_civ_set, Dag};
use civrep::harness::{load_experiment_config, run_estimate, run_experiment, EstimatorKind, Fold, HarnessError};

#[derive(Parser)]
#[command(name = "civrep", version, about = "Conditional-instrument effect estimation with learned representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus schema sidecar).
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test d-separation of two nodes given a comma-separated set.
    Dsep {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value = "")]
        given: String,
    },
    /// Check the conditional-instrument conditions for a candidate (or set).
    CivCheck {
        #[arg(long)]
        dag: PathBuf,
        /// Candidate instrument; a comma-separated list is treated as a set.
        #[arg(long)]
        iv: String,
        #[arg(long, default_value = "")]
        cond: String,
        #[arg(long)]
        treatment: String,
        #[arg(long)]
        outcome: String,
        #[arg(long)]
        json: bool,
    },
    /// Train the representation model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// TOML model config; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run estimators on a dataset and write a JSON report.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Required when dvae_civ is requested.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "dvae_civ,naive,oracle_civ")]
        estimators: String,
        /// TOML second-stage config.
        #[arg(long)]
        two_stage: Option<PathBuf>,
        /// Known average effect, used for the ACE error column.
        #[arg(long)]
        true_ace: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replicated experiment from a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn read_dag(path: &Path) -> Result<Dag, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Ok(Dag::parse(&text)?)
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, HarnessError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// `out.csv` -> `out.schema.toml`
fn sidecar(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Gen { n, seed, out } => {
            let ds = generate_synthetic(&SynthConfig { n, seed })?;
            let schema_path = sidecar(&out, "schema.toml");
            write_csv(&ds, &out)?;
            write_schema(&Schema::for_dataset(&ds), &schema_path)?;
            println!("wrote {} rows to {} (schema {})", ds.len(), out.display(), schema_path.display());
        }
        Command::Dsep { dag, a, b, given } => {
            let g = read_dag(&dag)?;
            match d_connecting_path(&g, &a, &b, &split_list(&given))? {
                None => println!("d-separated"),
                Some(path) => println!("d-connected: {}", path.join(" - ")),
            }
        }
        Command::CivCheck {
            dag,
            iv,
            cond,
            treatment,
            outcome,
            json,
        } => {
            let g = read_dag(&dag)?;
            let ivs = split_list(&iv);
            let cond = split_list(&cond);
            let verdict = match ivs.as_slice() {
                [] => return Err(HarnessError::Config("--iv is empty".into())),
                [one] => is_valid_civ(&g, one, &cond, &treatment, &outcome)?,
                many => is_valid_civ_set(&g, many, &cond, &treatment, &outcome)?,
            };
            if json {
                println!("{}", serde_json::to_string(&verdict)?);
            } else {
                print!("{verdict}");
            }
        }
        Command::Train {
            data,
            schema,
            config,
            out,
        } => {
            let cfg: ModelConfig = read_toml(config.as_deref())?;
            cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            let ds = load_csv(&data, &read_schema(&schema)?)?;
            let (params, history) = train(&ds, &cfg)?;
            save_checkpoint(&params, &out)?;
            let hist_path = sidecar(&out, "history.json");
            fs::write(&hist_path, serde_json::to_string_pretty(&history)?)?;
            println!(
                "trained {} epochs, final loss {:.6}; checkpoint {}",
                history.len(),
                history.final_loss().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Estimate {
            data,
            schema,
            checkpoint,
            estimators,
            two_stage,
            true_ace,
            out,
        } => {
            let kinds = split_list(&estimators)
                .into_iter()
                .map(EstimatorKind::parse)
                .collect::<Result<Vec<_>, _>>()?;
            if kinds.is_empty() {
                return Err(HarnessError::Config("no estimators requested".into()));
            }
            let ts_cfg: TwoStageConfig = read_toml(two_stage.as_deref())?;
            let ds = load_csv(&data, &read_schema(&schema)?)?;
            let params = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let report = run_estimate(&ds, params.as_ref(), &kinds, &ts_cfg, true_ace)?;
            fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            for r in &report.rows {
                println!("{:<12} ace {:>9.4}", r.estimator, r.ace);
            }
        }
        Command::Experiment { config } => {
            let cfg = load_experiment_config(&config)?;
            let report = run_experiment(&cfg)?;
            println!("{:<12} {:<14} {:>10} {:>10}", "estimator", "fold", "eps_ace", "sqrt_pehe");
            for kind in &cfg.estimators {
                for fold in [Fold::WithinSample, Fold::OutOfSample] {
                    let cell = |m: &str| {
                        report
                            .aggregate_for(kind.tag(), fold, m)
                            .map(|a| match a.std {
                                Some(s) => format!("{:.3}±{:.3}", a.mean, s),
                                None => format!("{:.3}", a.mean),
                            })
                            .unwrap_or_else(|| "-".into())
                    };
                    println!("{:<12} {:<14} {:>10} {:>10}", kind.tag(), fold.as_str(), cell("eps_ace"), cell("sqrt_pehe"));
                }
            }
            if !report.failures.is_empty() {
                eprintln!("{} replication(s) failed", report.failures.len());
            }
            println!("report: {}", cfg.output_dir.join("report.json").display());
        }
    }
    Ok(())
}

/// Last stderr line is always a JSON object so callers can parse failures.
fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            report_error("usage", &e.kind().to_string());
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            report_error(class.name(), &e.to_string());
            ExitCode::from(class as u8)
        }
    }
}
