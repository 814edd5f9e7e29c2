//! Multi-seed experiment runner, summary tables, per-degree plot data and
//! Sinkhorn timing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::balance::{sinkhorn_knopp, BalanceConfig};
use crate::data::{
    load_dataset, make_split, synthetic_powerlaw, GraphDataset, SplitSizes, SyntheticConfig,
};
use crate::error::{input_err, io_err, Error, Result};
use crate::fair::{fit, propagation_matrices, EvalReport, Mode, Propagation, TrainConfig};
use crate::graph::{Normalization, SparseMatrix};
use crate::par::{self, Execution};

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Directory holding `edges.tsv`, `features.csv` and `labels.csv`.
    Path(PathBuf),
    Synthetic(SyntheticConfig),
}

/// One training configuration of an experiment; seeds are supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub mode: Mode,
    /// Defaults to the mode's own normalization.
    #[serde(default)]
    pub normalization: Option<Normalization>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub weight_decay: Option<f64>,
    #[serde(default)]
    pub hidden_dim: Option<usize>,
}

impl ModeSpec {
    pub fn new(mode: Mode) -> Self {
        ModeSpec {
            mode,
            normalization: None,
            epochs: None,
            lr: None,
            weight_decay: None,
            hidden_dim: None,
        }
    }

    pub fn train_config(&self, seed: u64, balance: BalanceConfig) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.mode);
        if let Some(n) = self.normalization {
            cfg.normalization = n;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(wd) = self.weight_decay {
            cfg.weight_decay = wd;
        }
        if let Some(h) = self.hidden_dim {
            cfg.hidden_dim = h;
        }
        cfg.seed = seed;
        cfg.balance = balance;
        cfg
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub modes: Vec<ModeSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed of the train/val/test split, shared by all runs.
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub split_sizes: SplitSizes,
    /// Optional `split.json` to read the split from instead of generating it.
    #[serde(default)]
    pub split_path: Option<PathBuf>,
    #[serde(default)]
    pub row_normalize_features: bool,
    #[serde(default)]
    pub balance: BalanceConfig,
    /// Results JSON; the CSV summary goes next to it with a `.csv` extension.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSpec, modes: Vec<ModeSpec>) -> Self {
        ExperimentSpec {
            dataset,
            modes,
            seeds: default_seeds(),
            split_seed: 0,
            split_sizes: SplitSizes::default(),
            split_path: None,
            row_normalize_features: false,
            balance: BalanceConfig::default(),
            output_path: None,
        }
    }

    /// Both fair modes under every normalization.
    pub fn ablation(dataset: DatasetSpec) -> Self {
        let modes = [Mode::RawlsGraph, Mode::RawlsGrad]
            .into_iter()
            .flat_map(|mode| {
                Normalization::ALL.into_iter().map(move |n| ModeSpec {
                    normalization: Some(n),
                    ..ModeSpec::new(mode)
                })
            })
            .collect();
        ExperimentSpec::new(dataset, modes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return input_err("experiment needs at least one mode");
        }
        if self.seeds.is_empty() {
            return input_err("experiment needs at least one seed");
        }
        self.balance.validate()
    }

    /// Loads or generates the dataset and attaches the split.
    pub fn prepare_dataset(&self) -> Result<GraphDataset> {
        let mut ds = match &self.dataset {
            DatasetSpec::Path(dir) => load_dataset(dir)?,
            DatasetSpec::Synthetic(cfg) => synthetic_powerlaw(cfg)?,
        };
        if self.row_normalize_features {
            ds.row_normalize_features();
        }
        ds.split = match &self.split_path {
            Some(p) => crate::data::SplitFile::read(p)?.into_split(),
            None => make_split(
                &ds.labels,
                ds.num_classes,
                self.split_sizes,
                self.split_seed,
            )?,
        };
        if !ds.split.is_disjoint() || ds.split.train.is_empty() || ds.split.test.is_empty() {
            return input_err("split must be disjoint with non-empty train and test sets");
        }
        Ok(ds)
    }
}

/// Outcome of one (mode, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mode: Mode,
    pub normalization: Normalization,
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

/// Mean and population standard deviation over the successful runs of one
/// mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mode: Mode,
    pub normalization: Normalization,
    pub runs: usize,
    /// `None` when no cell of this mode spec succeeded.
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub bias_mean: Option<f64>,
    pub bias_std: Option<f64>,
}

/// Serialized results. `generated_at` is the only field that differs
/// between identical runs and is written first, on a line of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub generated_at: u64,
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentResults {
    pub fn all_succeeded(&self) -> bool {
        self.cells.iter().all(|c| c.error.is_none())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("mode,normalization,acc_mean,acc_std,bias_mean,bias_std\n");
        for row in &self.aggregates {
            let field = |x: Option<f64>| x.map(fmt_sci).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.mode,
                row.normalization,
                field(row.acc_mean),
                field(row.acc_std),
                field(row.bias_mean),
                field(row.bias_std)
            );
        }
        out
    }

    /// Writes the JSON document and the CSV summary next to it.
    pub fn write(&self, json_path: &Path) -> Result<PathBuf> {
        if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(json_path, self.to_json()?).map_err(io_err(json_path))?;
        let csv_path = json_path.with_extension("csv");
        fs::write(&csv_path, self.summary_csv()).map_err(io_err(&csv_path))?;
        Ok(csv_path)
    }
}

/// Six significant digits in scientific notation, locale independent.
pub fn fmt_sci(x: f64) -> String {
    format!("{x:.5e}")
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Aggregates cells per mode spec, in spec order. Cells must already be
/// grouped by `mode_count` consecutive blocks of `seeds` entries.
pub fn aggregate(cells: &[CellResult], blocks: usize) -> Vec<AggregateRow> {
    if blocks == 0 {
        return Vec::new();
    }
    let per = cells.len() / blocks;
    cells
        .chunks(per.max(1))
        .map(|chunk| {
            let reports: Vec<&EvalReport> =
                chunk.iter().filter_map(|c| c.report.as_ref()).collect();
            let accs: Vec<f64> = reports.iter().map(|r| r.overall_accuracy).collect();
            let biases: Vec<f64> = reports.iter().map(|r| r.bias).collect();
            let (acc_mean, acc_std) = mean_std(&accs);
            let (bias_mean, bias_std) = mean_std(&biases);
            AggregateRow {
                mode: chunk[0].mode,
                normalization: chunk[0].normalization,
                runs: reports.len(),
                acc_mean,
                acc_std,
                bias_mean,
                bias_std,
            }
        })
        .collect()
}

/// Runs every (mode, seed) cell. Cells are ordered by mode spec, then by
/// seed in the order given. A failing cell is recorded and the rest still run.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    run_with(Execution::default(), spec)
}

pub fn run_with(exec: Execution, spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let dataset = spec.prepare_dataset()?;

    // Matrices depend only on the mode spec, so build them once per spec.
    let props: Vec<std::result::Result<Propagation, String>> =
        par::map_ordered(exec, &spec.modes, |m| {
            let cfg = m.train_config(0, spec.balance);
            propagation_matrices(
                &dataset.adjacency,
                cfg.mode,
                cfg.normalization,
                &cfg.balance,
            )
            .map_err(|e| e.to_string())
        });

    let jobs: Vec<(usize, u64)> = (0..spec.modes.len())
        .flat_map(|k| spec.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let cells = par::map_ordered(exec, &jobs, |&(k, seed)| {
        let cfg = spec.modes[k].train_config(seed, spec.balance);
        let outcome = props[k]
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|prop| run_cell(&dataset, &cfg, prop).map_err(|e| e.to_string()));
        let (report, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e)),
        };
        CellResult {
            mode: cfg.mode,
            normalization: cfg.normalization,
            seed,
            report,
            error,
        }
    });
    let aggregates = aggregate(&cells, spec.modes.len());
    let generated_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(ExperimentResults {
        generated_at,
        spec: spec.clone(),
        cells,
        aggregates,
    })
}

fn run_cell(dataset: &GraphDataset, cfg: &TrainConfig, prop: &Propagation) -> Result<EvalReport> {
    let (model, loss_curve) = fit(dataset, cfg, prop)?;
    crate::fair::evaluate(dataset, cfg, prop, &model, loss_curve)
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// `None` with fewer than two points or no spread in `x`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<LineFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreePlotRow {
    pub degree: usize,
    pub group_size: usize,
    pub avg_loss: f64,
    pub avg_acc: f64,
}

/// Per-degree series with regression lines, filtered to large groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreePlotData {
    pub rows: Vec<DegreePlotRow>,
    pub loss_fit: Option<LineFit>,
    pub acc_fit: Option<LineFit>,
}

/// Keeps degree groups with more than `min_group_size` nodes and fits a line
/// through each series.
pub fn emit_degree_plot_data(report: &EvalReport, min_group_size: usize) -> DegreePlotData {
    let rows: Vec<DegreePlotRow> = report
        .per_degree
        .iter()
        .filter(|g| g.size > min_group_size)
        .map(|g| DegreePlotRow {
            degree: g.degree,
            group_size: g.size,
            avg_loss: g.avg_loss,
            avg_acc: g.avg_accuracy,
        })
        .collect();
    let series = |f: fn(&DegreePlotRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter().map(|r| (r.degree as f64, f(r))).collect()
    };
    let loss_fit = fit_line(&series(|r| r.avg_loss));
    let acc_fit = fit_line(&series(|r| r.avg_acc));
    DegreePlotData {
        rows,
        loss_fit,
        acc_fit,
    }
}

impl DegreePlotData {
    /// One row per group; the fit columns repeat on every row and are empty
    /// when no fit exists.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "degree,group_size,avg_loss,avg_acc,loss_slope,loss_intercept,acc_slope,acc_intercept\n",
        );
        let fit_cols = |f: Option<LineFit>| match f {
            Some(l) => format!("{},{}", fmt_sci(l.slope), fmt_sci(l.intercept)),
            None => ",".to_string(),
        };
        let (lf, af) = (fit_cols(self.loss_fit), fit_cols(self.acc_fit));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{lf},{af}",
                r.degree,
                r.group_size,
                fmt_sci(r.avg_loss),
                fmt_sci(r.avg_acc)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornTiming {
    pub n: usize,
    pub nnz: usize,
    pub iterations: usize,
    pub seconds: f64,
    pub seconds_per_iteration: f64,
    pub max_deviation: f64,
}

/// Balances `m` and reports iteration count and wall time.
pub fn benchmark_sinkhorn(m: &SparseMatrix, cfg: &BalanceConfig) -> Result<SinkhornTiming> {
    let start = Instant::now();
    let res = sinkhorn_knopp(m, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(SinkhornTiming {
        n: m.n_rows(),
        nnz: m.nnz(),
        iterations: res.iterations,
        seconds,
        seconds_per_iteration: seconds / res.iterations as f64,
        max_deviation: res.max_deviation,
    })
}

/// Parses `n=2000,m=2,classes=5,dim=32,homophily=0.8,noise=1,seed=0`; any
/// key may be omitted.
pub fn parse_synthetic(s: &str) -> Result<SyntheticConfig> {
    let mut cfg = SyntheticConfig::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((key, value)) = part.split_once('=') else {
            return input_err(format!("expected key=value, got '{part}'"));
        };
        let bad = |e: &dyn std::fmt::Display| Error::Input(format!("bad value for {key}: {e}"));
        match key.trim() {
            "n" => cfg.n = value.parse().map_err(|e| bad(&e))?,
            "m" | "m_attach" => cfg.m_attach = value.parse().map_err(|e| bad(&e))?,
            "classes" | "c" => cfg.num_classes = value.parse().map_err(|e| bad(&e))?,
            "dim" | "d" => cfg.feature_dim = value.parse().map_err(|e| bad(&e))?,
            "homophily" | "h" => cfg.homophily = value.parse().map_err(|e| bad(&e))?,
            "noise" => cfg.noise_std = value.parse().map_err(|e| bad(&e))?,
            "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
            other => return input_err(format!("unknown synthetic parameter '{other}'")),
        }
    }
    Ok(cfg)
}
