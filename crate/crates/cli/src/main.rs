use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use hmgrl::featurize::DescriptorSizes;
use hmgrl_cli::config::{Overrides, RunConfig};
use hmgrl_cli::{exit_code, gradcheck, run, synth, CliError};
use hmgrl_oracle::FdConfig;

#[derive(Parser)]
#[command(
    name = "hmgrl",
    version,
    about = "Drug-drug interaction event prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted-rule synthetic dataset.
    Synth(SynthArgs),
    /// Cross-validated training; writes config, split, logs and checkpoints.
    Train(TrainArgs),
    /// Score the checkpoints of a run on their test folds.
    Eval(EvalArgs),
    /// Predict event types for drug pairs.
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients on the micro model.
    Gradcheck(GradcheckArgs),
    /// Write the fold assignment without training.
    Split(SplitArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    drugs: usize,
    #[arg(long, default_value_t = 8)]
    events: usize,
    #[arg(long, default_value_t = 0.28)]
    density: f64,
    #[arg(long, default_value_t = 40)]
    targets: usize,
    #[arg(long, default_value_t = 20)]
    enzymes: usize,
    #[arg(long, default_value_t = 60)]
    substructures: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Directory for drugs.tsv and ddis.tsv.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    drugs: Option<PathBuf>,
    #[arg(long)]
    ddis: Option<PathBuf>,
    #[arg(long)]
    task: Option<u8>,
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated fold indices to run.
    #[arg(long, value_delimiter = ',')]
    only_folds: Option<Vec<usize>>,
    /// Sets both the split and the model seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    no_mixup: bool,
    #[arg(long)]
    macro_auc: bool,
    /// Parent of timestamped run directories.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let o = Overrides {
            preset: self.preset.clone(),
            drugs: self.drugs.clone(),
            ddis: self.ddis.clone(),
            task: self.task,
            folds: self.folds,
            only_folds: self.only_folds.clone(),
            seed: self.seed,
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            no_mixup: self.no_mixup,
            macro_auc: self.macro_auc,
            output_dir: self.output_dir.clone(),
        };
        RunConfig::resolve(self.config.as_deref(), &o)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Exact run directory instead of a timestamped one.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Evaluate the folds after training.
    #[arg(long)]
    eval: bool,
}

#[derive(Args)]
struct EvalArgs {
    run_dir: PathBuf,
    #[arg(long)]
    macro_auc: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    drugs: PathBuf,
    /// Tab-separated drug id pairs, one per line.
    #[arg(long)]
    pairs: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coordinates probed per parameter.
    #[arg(long, default_value_t = 16)]
    samples: usize,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, short)]
    out: PathBuf,
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let cfg = synth::SynthConfig {
                seed: a.seed,
                drugs: a.drugs,
                events: a.events,
                density: a.density,
                sizes: DescriptorSizes {
                    targets: a.targets,
                    enzymes: a.enzymes,
                    substructures: a.substructures,
                },
                groups: 0,
                noise: a.noise,
            };
            let ds = synth::generate(&cfg).map_err(|e| hmgrl::Error::Param(format!("{e:#}")))?;
            synth::write(&ds, &a.out)?;
            println!(
                "{} drugs, {} interactions, {} events -> {}",
                ds.table.len(),
                ds.ddis.len(),
                cfg.events,
                a.out.display()
            );
        }
        Command::Train(a) => {
            let cfg = a.run.resolve()?;
            let dir = a
                .run_dir
                .unwrap_or_else(|| run::timestamped_dir(&cfg.output_dir));
            let outcomes = run::train_run(&cfg, &dir)?;
            for o in &outcomes {
                let last = o.records.last().map_or(f64::NAN, |r| r.total);
                println!(
                    "fold {}: final loss {last:.6}, training accuracy {:.4}",
                    o.fold, o.train_accuracy
                );
            }
            if a.eval {
                print_eval(&run::eval_run(&dir, false)?);
            }
            println!("{}", dir.display());
        }
        Command::Eval(a) => print_eval(&run::eval_run(&a.run_dir, a.macro_auc)?),
        Command::Predict(a) => {
            let text = run::predict_file(&a.checkpoint, &a.drugs, &a.pairs)?;
            match a.out {
                Some(p) => {
                    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
        }
        Command::Gradcheck(a) => {
            let fd = FdConfig {
                samples: a.samples,
                ..FdConfig::default()
            };
            let rows = gradcheck::run_micro(&fd, a.seed)?;
            print!("{}", gradcheck::format_table(&rows));
            let failed = rows.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::GradcheckFailed(failed).into());
            }
        }
        Command::Split(a) => {
            let cfg = a.run.resolve()?;
            let (table, ddis) = run::load_dataset(&cfg.drugs, &cfg.ddis)?;
            let plan = run::split(&cfg, &ddis, table.len())?;
            let text = serde_json::to_string_pretty(&plan)?;
            std::fs::write(&a.out, text + "\n")
                .with_context(|| format!("writing {}", a.out.display()))?;
            for f in &plan.folds {
                println!(
                    "fold {}: {} train, {} test",
                    f.index,
                    f.train.len(),
                    f.test.len()
                );
            }
        }
    }
    Ok(())
}

fn print_eval(outcome: &run::EvalOutcome) {
    for (fold, r) in &outcome.reports {
        println!(
            "fold {fold}: aupr {:.4} auc {:.4} acc {:.4} f1 {:.4} precision {:.4} recall {:.4}",
            r.aupr, r.auc, r.acc, r.f1, r.precision, r.recall
        );
    }
    if let Some(s) = &outcome.summary {
        let cells: Vec<String> = hmgrl::eval::MetricSummary::FIELDS
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{f} {:.4}±{:.4}", s.mean[i], s.std[i]))
            .collect();
        println!("mean over {} folds: {}", s.folds, cells.join(" "));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
