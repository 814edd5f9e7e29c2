use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rawlsgcn::balance::BalanceConfig;
use rawlsgcn::data::{load_dataset, synthetic_powerlaw};
use rawlsgcn::experiment::{
    benchmark_sinkhorn, emit_degree_plot_data, parse_synthetic, run, DatasetSpec,
    ExperimentResults, ExperimentSpec, ModeSpec,
};
use rawlsgcn::fair::{train, EvalReport, Mode};
use rawlsgcn::graph::{renormalized_laplacian, Normalization, SparseMatrix};
use rawlsgcn::par::{init_thread_pool, threads_from_env};
use rawlsgcn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rawlsgcn",
    version,
    about = "Degree-fair GCN training and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and print its evaluation report.
    Train(RunArgs),
    /// Run every (mode, seed) cell of a spec and write JSON and CSV results.
    Experiment(RunArgs),
    /// Both fair modes under all four normalizations.
    Ablation(RunArgs),
    /// Per-degree loss and accuracy table with regression lines.
    PlotData {
        /// An evaluation report written by `train`.
        report: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_group_size: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Time Sinkhorn balancing of the renormalized adjacency.
    BenchSinkhorn {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iterations: usize,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Dataset directory with edges.tsv, features.csv and labels.csv.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// Synthetic graph, e.g. `n=2000,m=2,classes=5,dim=32,homophily=0.8,noise=1,seed=0`.
    #[arg(long)]
    synthetic: Option<String>,
}

impl SourceArgs {
    fn resolve(&self) -> Result<Option<DatasetSpec>> {
        Ok(match (&self.dataset, &self.synthetic) {
            (Some(dir), _) => Some(DatasetSpec::Path(dir.clone())),
            (None, Some(s)) => Some(DatasetSpec::Synthetic(parse_synthetic(s)?)),
            (None, None) => None,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec JSON.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    normalization: Option<Normalization>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Where to write results; `train` prints to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    /// Config file (or a default spec) with the command-line overrides applied.
    fn spec(&self, ablation: bool) -> Result<ExperimentSpec> {
        let from_flags = self.source.resolve()?;
        let mut spec = match (&self.config, from_flags) {
            (Some(path), flags) => {
                let mut spec = ExperimentSpec::read(path)?;
                if let Some(ds) = flags {
                    spec.dataset = ds;
                }
                spec
            }
            (None, Some(ds)) => {
                ExperimentSpec::new(ds, Mode::ALL.into_iter().map(ModeSpec::new).collect())
            }
            (None, None) => {
                return Err(Error::Input(
                    "give --config, --dataset or --synthetic".to_string(),
                ))
            }
        };
        if ablation {
            spec.modes = ExperimentSpec::ablation(spec.dataset.clone()).modes;
        }
        if let Some(mode) = self.mode {
            spec.modes = vec![ModeSpec {
                normalization: self.normalization,
                ..ModeSpec::new(mode)
            }];
        } else if let Some(n) = self.normalization {
            for m in &mut spec.modes {
                m.normalization = Some(n);
            }
        }
        for m in &mut spec.modes {
            if self.epochs.is_some() {
                m.epochs = self.epochs;
            }
            if self.lr.is_some() {
                m.lr = self.lr;
            }
        }
        if let Some(seed) = self.seed {
            spec.seeds = vec![seed];
        }
        if self.output.is_some() {
            spec.output_path = self.output.clone();
        }
        Ok(spec)
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_train(args: &RunArgs) -> Result<bool> {
    let spec = args.spec(false)?;
    spec.validate()?;
    let dataset = spec.prepare_dataset()?;
    let cfg = spec.modes[0].train_config(spec.seeds[0], spec.balance);
    let outcome = train(&dataset, &cfg)?;
    eprintln!(
        "{} ({}) seed {}: accuracy {:.4}, bias {:.4}, {:.2}s",
        cfg.mode,
        cfg.normalization,
        cfg.seed,
        outcome.report.overall_accuracy,
        outcome.report.bias,
        outcome.seconds
    );
    let mut json = serde_json::to_string_pretty(&outcome.report)?;
    json.push('\n');
    write_or_print(args.output.as_deref(), &json)?;
    Ok(true)
}

fn run_experiment(args: &RunArgs, ablation: bool) -> Result<bool> {
    let spec = args.spec(ablation)?;
    let results: ExperimentResults = run(&spec)?;
    for cell in &results.cells {
        if let Some(e) = &cell.error {
            eprintln!(
                "{} ({}) seed {} failed: {e}",
                cell.mode, cell.normalization, cell.seed
            );
        }
    }
    match &spec.output_path {
        Some(path) => {
            let csv = results.write(path)?;
            eprintln!("wrote {} and {}", path.display(), csv.display());
        }
        None => print!("{}", results.summary_csv()),
    }
    Ok(results.all_succeeded())
}

fn run_plot_data(report: &Path, min_group_size: usize, output: Option<&Path>) -> Result<bool> {
    let text = fs::read_to_string(report).map_err(|source| Error::Io {
        path: report.to_path_buf(),
        source,
    })?;
    let report: EvalReport = serde_json::from_str(&text)?;
    let plot = emit_degree_plot_data(&report, min_group_size);
    write_or_print(output, &plot.to_csv())?;
    Ok(true)
}

fn run_bench(source: &SourceArgs, cfg: &BalanceConfig) -> Result<bool> {
    cfg.validate()?;
    let adjacency: SparseMatrix = match source.resolve()? {
        Some(DatasetSpec::Path(dir)) => load_dataset(&dir)?.adjacency,
        Some(DatasetSpec::Synthetic(s)) => synthetic_powerlaw(&s)?.adjacency,
        None => synthetic_powerlaw(&Default::default())?.adjacency,
    };
    let timing = benchmark_sinkhorn(&renormalized_laplacian(&adjacency)?, cfg)?;
    println!("{}", serde_json::to_string_pretty(&timing)?);
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = threads_from_env()
        .and_then(init_thread_pool)
        .and_then(|()| match &cli.command {
            Command::Train(a) => run_train(a),
            Command::Experiment(a) => run_experiment(a, false),
            Command::Ablation(a) => run_experiment(a, true),
            Command::PlotData {
                report,
                min_group_size,
                output,
            } => run_plot_data(report, *min_group_size, output.as_deref()),
            Command::BenchSinkhorn {
                source,
                tolerance,
                max_iterations,
            } => run_bench(
                source,
                &BalanceConfig {
                    tolerance: *tolerance,
                    max_iterations: *max_iterations,
                },
            ),
        });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
