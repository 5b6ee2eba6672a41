//! Command-line entry point: database/workload generation, labeling,
//! uniqueness-model training, single-query estimation and workload
//! evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use cardext::datagen::{
    gen_db, label_workload, punq_samples, read_labels, write_db_dir, write_labels,
    write_workload, DbGenConfig, WorkloadGenerator, WorkloadSpec,
};
use cardext::estimators::{
    ConstUniqueness, Estimator, ExactUniquenessOracle, HistogramEstimator, OracleEstimator,
    SamplingEstimator, UniquenessModel, DEFAULT_HISTOGRAM_BUCKETS,
};
use cardext::eval::{evaluate, render_report, EvalMode, EvalOptions, ReportFormat};
use cardext::gencrd::{gen_crd, GenCrdOptions};
use cardext::parser::parse_workload;
use cardext::punq::{train, LayoutVariant, PunqModel, TrainConfig};
use cardext::query::to_conjunctive;
use cardext::store::Database;
use cardext::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cardext",
    version,
    about = "Extend conjunctive cardinality estimators to DISTINCT and AND/OR/NOT queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WorkloadKind {
    Conjunctive,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorKind {
    Oracle,
    Sampling,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UniquenessKind {
    /// Trained model file (requires --model).
    Punq,
    /// Exact executor rate; useful for verification.
    Exact,
    /// Constant 1.0 (identity wrapper).
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Dup,
    Distinct,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Standard,
    Revised,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic database directory (schema.json + CSVs)
    GenDb {
        /// Generator config JSON; omitted = built-in desk-scale preset
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config / preset
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a workload file (one query per line)
    GenWorkload {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 450)]
        count: usize,
        /// Join counts the workload cycles through, comma-separated
        #[arg(long, default_value = "0,1,2")]
        joins: String,
        /// Target DNF-list sizes for general workloads, comma-separated
        #[arg(long, default_value = "1,2,3,4,5")]
        dnf_sizes: String,
        #[arg(long, value_enum, default_value_t = WorkloadKind::Conjunctive)]
        kind: WorkloadKind,
        #[arg(long, default_value_t = 2)]
        max_preds: usize,
        /// Fraction of queries marked DISTINCT
        #[arg(long, default_value_t = 0.0)]
        distinct_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Execute a workload on the oracle and write truth labels
    Label {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the uniqueness-rate model on a labeled conjunctive workload
    TrainPunq {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        hidden: usize,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 20)]
        patience: usize,
        #[arg(long, value_enum, default_value_t = VariantArg::Standard)]
        variant: VariantArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print per-epoch validation q-errors
        #[arg(long)]
        verbose: bool,
    },
    /// Estimate one query given on the command line
    Estimate {
        #[arg(long)]
        db: PathBuf,
        /// Query text, e.g. 'SELECT users.id FROM users WHERE users.age > 30'
        query: String,
        #[arg(long, value_enum, default_value_t = EstimatorKind::Oracle)]
        estimator: EstimatorKind,
        #[arg(long, value_enum, default_value_t = ModeArg::General)]
        mode: ModeArg,
        /// Uniqueness source for distinct mode
        #[arg(long, value_enum, default_value_t = UniquenessKind::Punq)]
        uniqueness: UniquenessKind,
        /// Trained model file for --uniqueness punq
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
        #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BUCKETS)]
        buckets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate an estimator over a labeled workload
    Eval {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimatorKind::Oracle)]
        estimator: EstimatorKind,
        #[arg(long, value_enum, default_value_t = ModeArg::Dup)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = UniquenessKind::Punq)]
        uniqueness: UniquenessKind,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report destination; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        format: String,
        /// Include per-query timing columns (not byte-stable across runs)
        #[arg(long)]
        timing: bool,
        /// Fan per-query work out across threads
        #[arg(long)]
        parallel: bool,
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
        #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BUCKETS)]
        buckets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::ConfigError(format!("bad {what} entry {part:?}")))
        })
        .collect()
}

fn build_estimator(
    kind: EstimatorKind,
    db: &Arc<Database>,
    rate: f64,
    buckets: usize,
    seed: u64,
) -> Result<Box<dyn Estimator + Send + Sync>> {
    Ok(match kind {
        EstimatorKind::Oracle => Box::new(OracleEstimator::new(db.clone())),
        EstimatorKind::Sampling => Box::new(SamplingEstimator::new(db, rate, seed)?),
        EstimatorKind::Histogram => Box::new(HistogramEstimator::new(db, buckets)?),
    })
}

fn build_uniqueness(
    kind: UniquenessKind,
    db: &Arc<Database>,
    model: Option<&Path>,
) -> Result<Box<dyn UniquenessModel + Send + Sync>> {
    Ok(match kind {
        UniquenessKind::Punq => {
            let path = model.ok_or_else(|| {
                Error::ConfigError("--uniqueness punq requires --model <file>".into())
            })?;
            Box::new(PunqModel::load(path)?)
        }
        UniquenessKind::Exact => Box::new(ExactUniquenessOracle::new(db.clone())),
        UniquenessKind::One => Box::new(ConstUniqueness(1.0)),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDb { config, out, seed } => {
            let mut cfg = match config {
                Some(path) => DbGenConfig::from_json_file(&path)?,
                None => DbGenConfig::desk_default(seed.unwrap_or(0)),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let db = gen_db(&cfg)?;
            write_db_dir(&db, &out)?;
            println!(
                "wrote {} tables to {}",
                db.schema().table_count(),
                out.display()
            );
            Ok(())
        }
        Command::GenWorkload {
            db,
            out,
            count,
            joins,
            dnf_sizes,
            kind,
            max_preds,
            distinct_rate,
            seed,
        } => {
            let db = Database::load_dir(&db)?;
            let schema = db.schema().clone();
            let generator = WorkloadGenerator::new(&schema, db.column_ranges());
            let spec = WorkloadSpec {
                count,
                join_counts: parse_usize_list(&joins, "join count")?,
                dnf_sizes: parse_usize_list(&dnf_sizes, "DNF size")?,
                max_preds_per_table: max_preds,
                distinct_rate,
                general: kind == WorkloadKind::General,
                seed,
            };
            let queries = generator.gen_workload(&spec)?;
            write_workload(&out, &queries)?;
            println!("wrote {} queries to {}", queries.len(), out.display());
            Ok(())
        }
        Command::Label { db, workload, out } => {
            let db = Database::load_dir(&db)?;
            let text = std::fs::read_to_string(&workload)?;
            let queries: Vec<_> = parse_workload(&text, db.schema())?
                .into_iter()
                .map(|(_, q)| q)
                .collect();
            let records = label_workload(&db, &queries)?;
            write_labels(&out, &records)?;
            let empty = records.iter().filter(|r| r.empty).count();
            println!(
                "labeled {} queries ({} with empty results) -> {}",
                records.len(),
                empty,
                out.display()
            );
            Ok(())
        }
        Command::TrainPunq {
            db,
            workload,
            labels,
            out,
            hidden,
            batch,
            lr,
            epochs,
            patience,
            variant,
            seed,
            verbose,
        } => {
            let db = Database::load_dir(&db)?;
            let schema = db.schema().clone();
            let text = std::fs::read_to_string(&workload)?;
            let queries: Vec<_> = parse_workload(&text, &schema)?
                .into_iter()
                .map(|(_, q)| q)
                .collect();
            let records = read_labels(&labels)?;
            if records.len() != queries.len() {
                return Err(Error::ValidationError(format!(
                    "{} labels for {} queries",
                    records.len(),
                    queries.len()
                )));
            }
            let samples = punq_samples(&schema, &queries, &records)?;
            let cfg = TrainConfig {
                batch_size: batch,
                hidden,
                learning_rate: lr,
                max_epochs: epochs,
                patience,
                seed,
                variant: match variant {
                    VariantArg::Standard => LayoutVariant::Standard,
                    VariantArg::Revised => LayoutVariant::Revised,
                },
            };
            let t0 = std::time::Instant::now();
            let (model, log) = train(&schema, &db.column_ranges(), &samples, &cfg)?;
            if verbose {
                for e in &log.epochs {
                    println!(
                        "epoch {:3}  train {:.4}  val mean {:.4}  val median {:.4}",
                        e.epoch, e.train_mean_qerror, e.val_mean_qerror, e.val_median_qerror
                    );
                }
            }
            model.save(&out)?;
            println!(
                "trained on {} samples for {} epochs in {:.1}s; best validation mean q-error {:.4} (epoch {}); model -> {}",
                samples.len(),
                log.epochs.len(),
                t0.elapsed().as_secs_f64(),
                model.meta.best_val_qerror,
                log.best_epoch,
                out.display()
            );
            Ok(())
        }
        Command::Estimate {
            db,
            query,
            estimator,
            mode,
            uniqueness,
            model,
            rate,
            buckets,
            seed,
        } => {
            let db = Arc::new(Database::load_dir(&db)?);
            let est = build_estimator(estimator, &db, rate, buckets, seed)?;
            let schema = db.schema();
            let ast = cardext::parser::parse(&query, schema)?;
            let value = match mode {
                ModeArg::Dup => {
                    cardext::store::require_conjunctive(&ast)?;
                    est.estimate(&to_conjunctive(&ast, schema)?)?
                }
                ModeArg::Distinct => {
                    cardext::store::require_conjunctive(&ast)?;
                    let u = build_uniqueness(uniqueness, &db, model.as_deref())?;
                    let cq = to_conjunctive(&ast, schema)?;
                    u.uniqueness(&cq)? * est.estimate(&cq)?
                }
                ModeArg::General => {
                    let out = gen_crd(&ast, schema, est.as_ref(), GenCrdOptions::default())?;
                    out.estimate
                }
            };
            println!("{value}");
            Ok(())
        }
        Command::Eval {
            db,
            workload,
            labels,
            estimator,
            mode,
            uniqueness,
            model,
            out,
            format,
            timing,
            parallel,
            rate,
            buckets,
            seed,
        } => {
            let db = Arc::new(Database::load_dir(&db)?);
            let text = std::fs::read_to_string(&workload)?;
            let queries: Vec<_> = parse_workload(&text, db.schema())?
                .into_iter()
                .map(|(_, q)| q)
                .collect();
            let records = read_labels(&labels)?;
            let est = build_estimator(estimator, &db, rate, buckets, seed)?;
            let mode = match mode {
                ModeArg::Dup => EvalMode::Dup,
                ModeArg::Distinct => EvalMode::Distinct,
                ModeArg::General => EvalMode::General,
            };
            let uniq = if mode == EvalMode::Distinct {
                Some(build_uniqueness(uniqueness, &db, model.as_deref())?)
            } else {
                None
            };
            let opts = EvalOptions {
                parallel,
                ..EvalOptions::new(mode)
            };
            let report = evaluate(
                &db,
                &queries,
                &records,
                est.as_ref(),
                uniq.as_ref()
                    .map(|u| u.as_ref() as &(dyn UniquenessModel + Sync)),
                &opts,
            )?;
            let format: ReportFormat = format.parse()?;
            let rendered = render_report(&report, format, timing);
            match out {
                Some(path) => {
                    std::fs::write(&path, rendered)?;
                    println!("report -> {}", path.display());
                }
                None => print!("{rendered}"),
            }
            Ok(())
        }
    }
}
