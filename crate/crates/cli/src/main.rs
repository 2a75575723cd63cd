use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tmv_core::classifiers::ClassifierSpec;
use tmv_core::dataset::{load_csv_with_labels, CsvSchema, SubjectId};
use tmv_core::pipeline::{self, RunConfig};
use tmv_core::synth::SynthConfig;
use tmv_core::Error;

#[derive(Parser)]
#[command(name = "tmv", version, about = "Time majority voting over segmented EEG recordings")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads. Outputs do not depend on it.
    #[arg(long, global = true, env = "TMV_THREADS")]
    threads: Option<usize>,

    /// Increase log verbosity.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording set.
    Synth {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "raw.csv")]
        out: PathBuf,
        #[arg(long, default_value = "gen_log.json")]
        log: PathBuf,
    },
    /// Load and validate a recording CSV.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Fail when the validation report has findings.
        #[arg(long)]
        validate: bool,
    },
    /// Trim transitions, remove plateaus and drop lossy subjects and sessions.
    Clean {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "clean.csv")]
        output: PathBuf,
        #[arg(long, default_value = "ledger.json")]
        ledger: PathBuf,
        #[arg(long, default_value = "exclusions.json")]
        exclusions: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Phase-1 benchmark of every classifier.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Phase 1, noisy-block exclusion, Phase 2 and voting.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        exclude_threshold: Option<f64>,
        /// Vote with the Phase-1 majority labels.
        #[arg(long)]
        freeze_majority: bool,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Tables and figures from a results directory.
    Report {
        #[arg(long, default_value = "results")]
        results: PathBuf,
        #[arg(long, default_value = "s3")]
        subject: String,
        #[arg(long, default_value_t = 1)]
        task: u8,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
    },
    /// The whole pipeline in one output tree.
    Reproduce {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use this CSV instead of generating data.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Sampling rate in Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Comma-separated task names, in id order.
    #[arg(long)]
    labels: Option<String>,
}

#[derive(Args)]
struct ModelArgs {
    /// Classifier specs, e.g. `rf,svm-rbf,knn` or `rf:trees=50;svm-rbf:C=2`.
    #[arg(long)]
    specs: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.downcast_ref::<Error>() else {
        return 1;
    };
    match e.root() {
        Error::Io { .. }
        | Error::Csv(_)
        | Error::Json(_)
        | Error::MissingColumn(_)
        | Error::EmptyFile(_)
        | Error::UnknownLabel(_)
        | Error::NonMonotonicTime { .. }
        | Error::Parse { .. } => 3,
        Error::ConfigInvalid(_)
        | Error::InvalidSpec { .. }
        | Error::TooFewSpecs(_)
        | Error::UnknownPreset(_)
        | Error::InvalidLabelSet(_)
        | Error::UnknownSubjectTask { .. } => 2,
        _ => 1,
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) {
    if let Some(r) = data.rate {
        cfg.sample_rate_hz = r;
    }
    if let Some(l) = &data.labels {
        cfg.labels = Some(l.split(',').map(|s| s.trim().to_string()).collect());
    }
}

fn apply_model(cfg: &mut RunConfig, model: &ModelArgs) -> Result<()> {
    if let Some(s) = &model.specs {
        cfg.specs = ClassifierSpec::parse_list(s)?;
    }
    if let Some(s) = model.seed {
        cfg.seed = s;
    }
    Ok(())
}

fn load(cfg: &RunConfig, input: &Path) -> Result<tmv_core::dataset::Dataset> {
    Ok(load_csv_with_labels(input, &CsvSchema::default(), cfg.sample_rate_hz, cfg.label_set()?)?)
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Synth { preset, seed, out, log } => {
            if let Some(p) = preset {
                cfg.preset = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let synth: SynthConfig = cfg.synth_config()?;
            let g = pipeline::with_threads(cfg.threads, || pipeline::stage_synth(&synth, &out, &log))??;
            println!(
                "wrote {} blocks, {} rows to {}",
                g.dataset.blocks.len(),
                g.dataset.row_count(),
                out.display()
            );
        }
        Command::Ingest { input, data, validate } => {
            apply_data(&mut cfg, &data);
            let (ds, report) = pipeline::stage_ingest(&input, cfg.sample_rate_hz, &cfg.label_set()?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            println!(
                "{} subjects, {} blocks, {} rows",
                ds.subjects().len(),
                ds.blocks.len(),
                ds.row_count()
            );
            if validate && !report.is_clean() {
                return Err(Error::Invariant {
                    stage: "ingest".into(),
                    detail: format!("{} validation findings", report.violations().count()),
                }
                .into());
            }
        }
        Command::Clean {
            input,
            output,
            ledger,
            exclusions,
            data,
        } => {
            apply_data(&mut cfg, &data);
            cfg.cleaning.validate(cfg.sample_rate_hz)?;
            let c = pipeline::stage_clean(
                &input,
                &output,
                &ledger,
                &exclusions,
                &cfg.cleaning,
                cfg.sample_rate_hz,
                &cfg.label_set()?,
            )?;
            println!(
                "kept {} subjects, {} rows; excluded {} subjects, {} sessions",
                c.dataset.subjects().len(),
                c.dataset.row_count(),
                c.exclusions.subjects.len(),
                c.exclusions.sessions.len()
            );
        }
        Command::Bench { input, model, data, out } => {
            apply_data(&mut cfg, &data);
            apply_model(&mut cfg, &model)?;
            cfg.validate()?;
            let ds = load(&cfg, &input)?;
            let b = pipeline::with_threads(cfg.threads, || {
                pipeline::stage_bench(&ds, &cfg.cv, &cfg.specs, cfg.seed, &out)
            })??;
            for e in &b.ranking.entries {
                println!("{:<8} {:.3}", e.spec.family().short_name(), e.mean_accuracy);
            }
        }
        Command::Run {
            input,
            model,
            data,
            exclude_threshold,
            freeze_majority,
            out,
        } => {
            apply_data(&mut cfg, &data);
            apply_model(&mut cfg, &model)?;
            if let Some(t) = exclude_threshold {
                cfg.exclude_threshold = t;
            }
            cfg.freeze_majority |= freeze_majority;
            cfg.validate()?;
            let ds = load(&cfg, &input)?;
            let r = pipeline::with_threads(cfg.threads, || pipeline::stage_run(&ds, &cfg, &out))??;
            let problems = tmv_core::tmv::check_invariants(&r.result, &r.status, &r.phase2);
            if !problems.is_empty() {
                return Err(Error::Invariant {
                    stage: "run".into(),
                    detail: problems.join("; "),
                }
                .into());
            }
            println!(
                "best {} {:.3}, second {} {:.3}, TMV {:.3}; {} blocks excluded",
                r.result.best.family().short_name(),
                r.result.best_mean,
                r.result.second.family().short_name(),
                r.result.second_mean,
                r.result.tmv_mean,
                r.status.excluded().count()
            );
        }
        Command::Report {
            results,
            subject,
            task,
            out,
        } => {
            let r = pipeline::stage_report(&results, &SubjectId::from(subject.as_str()), task, &out)?;
            println!("wrote {} files to {}", r.artifacts.len() + 1, r.dir.display());
        }
        Command::Reproduce {
            preset,
            out,
            input,
            model,
        } => {
            if let Some(p) = preset {
                cfg.preset = p;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if input.is_some() {
                cfg.input = input;
            }
            apply_model(&mut cfg, &model)?;
            SynthConfig::preset(&cfg.preset)?;
            let r = pipeline::reproduce(&cfg)?;
            let res = &r.run.result;
            println!(
                "best {} {:.3} (phase 1 {:.3}), TMV {:.3}; manifest {}",
                res.best.family().short_name(),
                res.best_mean,
                r.run.bench.ranking.best().mean_accuracy,
                res.tmv_mean,
                r.out_dir.join("manifest.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let command = std::env::args().nth(1).unwrap_or_default();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            let stage = err
                .downcast_ref::<Error>()
                .and_then(|e| e.stage().map(str::to_string))
                .unwrap_or(command);
            let report = serde_json::json!({
                "stage": stage,
                "error": format!("{err:#}"),
                "exit_code": code,
            });
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}
