//! Command-line front end: `simulate`, `fit`, `predict` and `evaluate`.
//!
//! Every subcommand accepts `--config FILE`, a JSON object whose keys are
//! long flag names; flags given on the command line take precedence.
//! Failures print one line `error[<category>]: <message>` to stderr and exit
//! with status 1.

pub mod archive;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    load_support, load_table, simulate, simulate_splits, standardize, write_support, write_table, CoefficientDesign,
    Dataset, SimulationSpec, TableSchema,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, sparsity_of, F1Mode};
use crate::network::{init_network, NetworkConfig, Task, DEFAULT_HIDDEN_LAYERS};
use crate::projection::{GroupStructure, SignConstraints};
use crate::training::{fit_path_with, select_model, Constraints, FittedModel, OptimizerConfig, PathConfig, PathResult};

pub use archive::{ArchiveSchema, ModelArchive, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Coefficients vary with the contextual features.
    Contextual,
    /// Constant coefficients (an ordinary lasso).
    ConstantLasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Delimiter {
    Comma,
    Tab,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum F1Arg {
    Pooled,
    PerObservation,
}

/// Everything that determines a fit, validated before any computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub task: Task,
    pub n_lambda: usize,
    pub relax: bool,
    pub seed: u64,
    pub hidden_layers: usize,
    pub width: Option<usize>,
    pub include_intercept: bool,
    pub optimizer: OptimizerConfig,
    /// Groups of explanatory column names; every column must be covered.
    pub groups: Option<Vec<Vec<String>>>,
    pub nonneg: Vec<String>,
    pub nonpos: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Contextual,
            task: Task::Regression,
            n_lambda: PathConfig::default().n_lambda,
            relax: true,
            seed: 0,
            hidden_layers: DEFAULT_HIDDEN_LAYERS,
            width: None,
            include_intercept: true,
            optimizer: OptimizerConfig::default(),
            groups: None,
            nonneg: Vec::new(),
            nonpos: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda < 2 {
            return Err(Error::invalid("n-lambda must be at least 2"));
        }
        self.optimizer.validate()
    }

    fn network_config(&self, p: usize, m: usize) -> NetworkConfig {
        NetworkConfig {
            p,
            m,
            hidden_layers: match self.mode {
                Mode::Contextual => self.hidden_layers,
                Mode::ConstantLasso => 0,
            },
            width: self.width,
            include_intercept: self.include_intercept,
            seed: self.seed,
        }
    }

    fn constraints(&self, x_names: &[String]) -> Result<Constraints> {
        let index = |name: &String| -> Result<usize> {
            x_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Schema(format!("constraint references unknown explanatory column `{name}`")))
        };
        let groups = match &self.groups {
            Some(gs) => {
                let idx = gs
                    .iter()
                    .map(|g| g.iter().map(index).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Some(GroupStructure::new(idx, x_names.len())?)
            }
            None => None,
        };
        let signs = if self.nonneg.is_empty() && self.nonpos.is_empty() {
            None
        } else {
            Some(SignConstraints::new(
                self.nonneg.iter().map(index).collect::<Result<_>>()?,
                self.nonpos.iter().map(index).collect::<Result<_>>()?,
                x_names.len(),
            )?)
        };
        Ok(Constraints { groups, signs })
    }
}

/// One row of the path report.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRow {
    pub lambda: f64,
    pub gamma: f64,
    pub validation_loss: f64,
    pub unrelaxed_validation_loss: f64,
    pub avg_sparsity: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Selected model with its standardizer attached.
    pub model: FittedModel,
    pub path: PathResult,
    pub rows: Vec<PathRow>,
    pub selected_index: usize,
}

/// Standardizes, fits the whole path, relaxes and selects a model.
pub fn fit_model(train: &Dataset, val: &Dataset, run: &RunConfig) -> Result<FitOutcome> {
    fit_model_with(train, val, run, |_, _| {})
}

/// [`fit_model`] with a progress callback after each lambda.
pub fn fit_model_with(
    train: &Dataset,
    val: &Dataset,
    run: &RunConfig,
    mut progress: impl FnMut(usize, &PathRow),
) -> Result<FitOutcome> {
    run.validate()?;
    if train.x_names != val.x_names || train.z_names != val.z_names {
        return Err(Error::Schema(
            "training and validation files have different columns".into(),
        ));
    }
    let constraints = run.constraints(&train.x_names)?;
    let (train_std, standardizer) = standardize(train)?;
    let val_std = standardizer.apply(val)?;
    let init = init_network(run.network_config(train.p(), train.m()))?;
    let path_cfg = PathConfig {
        n_lambda: run.n_lambda,
        relax: run.relax,
    };
    let opt = OptimizerConfig {
        seed: run.seed,
        ..run.optimizer.clone()
    };
    let mut rows = Vec::with_capacity(run.n_lambda);
    let mut row_err = None;
    let path = fit_path_with(&train_std, &val_std, &path_cfg, &init, &constraints, &opt, |t, e| {
        let supp = e
            .model
            .coefficients(train_std.z.view())
            .map(|c| c.beta.mapv(|v| v != 0.0));
        match supp {
            Ok(s) => {
                let row = PathRow {
                    lambda: e.lambda,
                    gamma: e.model.gamma,
                    validation_loss: e.model.validation_loss,
                    unrelaxed_validation_loss: e.unrelaxed_validation_loss,
                    avg_sparsity: sparsity_of(s.view()).0,
                    epochs: e.epochs,
                };
                progress(t, &row);
                rows.push(row);
            }
            Err(err) => row_err = Some(err),
        }
    })?;
    if let Some(e) = row_err {
        return Err(e);
    }
    let selected = select_model(&path)?;
    let selected_index = path.entries.iter().position(|e| std::ptr::eq(e, selected)).unwrap_or(0);
    let mut model = selected.model.clone();
    model.standardizer = Some(standardizer);
    Ok(FitOutcome {
        model,
        path,
        rows,
        selected_index,
    })
}

pub fn write_path_report(path: &Path, rows: &[PathRow]) -> Result<()> {
    let mut out = String::from("lambda,gamma,validation_loss,unrelaxed_validation_loss,avg_sparsity,epochs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.lambda, r.gamma, r.validation_loss, r.unrelaxed_validation_loss, r.avg_sparsity, r.epochs
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(
    name = "ctxlasso",
    version,
    about = "Fit and evaluate contextually sparse linear models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic data with contextually varying sparse coefficients.
    Simulate(SimulateArgs),
    /// Fit the lambda path, relax, select and write a model archive.
    Fit(FitArgs),
    /// Predict (and optionally dump coefficients) with a model archive.
    Predict(PredictArgs),
    /// Evaluate a model archive on test data.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    /// JSON file supplying any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Rows (per split with --splits).
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 0.05)]
    pub sparsity_min: f64,
    #[arg(long, default_value_t = 0.15)]
    pub sparsity_max: f64,
    #[arg(long, default_value_t = 5.0)]
    pub signal_variance: f64,
    #[arg(long, default_value_t = 0.5)]
    pub correlation: f64,
    /// Use constant coefficients on this many randomly chosen features.
    #[arg(long)]
    pub fixed_active: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    pub calibration_samples: usize,
    /// Write train/val/test files of `n` rows each.
    #[arg(long)]
    pub splits: bool,
    #[arg(long, value_enum, default_value_t = Delimiter::Comma)]
    pub delimiter: Delimiter,
    /// Output prefix; writes `<out>.csv` and `<out>_truth.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SchemaArgs {
    /// Response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Contextual columns (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub contextual: Vec<String>,
    /// Explanatory columns (comma separated); defaults to all remaining.
    #[arg(long, value_delimiter = ',')]
    pub explanatory: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Delimiter::Comma)]
    pub delimiter: Delimiter,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value_t = Mode::Contextual)]
    pub mode: Mode,
    #[arg(long, default_value_t = 50)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_HIDDEN_LAYERS)]
    pub hidden_layers: usize,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long)]
    pub no_relax: bool,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_epochs: usize,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub min_improvement: f64,
    /// Groups of explanatory columns: `a,b;c;d,e`. Must cover every column.
    #[arg(long)]
    pub groups: Option<String>,
    /// Explanatory columns constrained nonnegative.
    #[arg(long, value_delimiter = ',')]
    pub nonneg: Vec<String>,
    /// Explanatory columns constrained nonpositive.
    #[arg(long, value_delimiter = ',')]
    pub nonpos: Vec<String>,
    /// Fit this many models with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Model archive path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-lambda report path; defaults to `<out>.path.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-row coefficients on the original feature scale.
    #[arg(long)]
    pub coefficients: bool,
    #[arg(long, value_enum, default_value_t = Delimiter::Comma)]
    pub delimiter: Delimiter,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Training data for the intercept-only baseline; the archived training
    /// mean is used when omitted.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// True support table for selection F1.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report selection F1 (requires --truth).
    #[arg(long)]
    pub f1: bool,
    #[arg(long, value_enum, default_value_t = F1Arg::Pooled)]
    pub f1_mode: F1Arg,
    /// Second archive for Hamming instability.
    #[arg(long)]
    pub stability: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Delimiter::Comma)]
    pub delimiter: Delimiter,
    #[arg(long)]
    pub out: PathBuf,
}

/// Expands `--config FILE` into flags placed before the user's own, so that
/// explicit flags override the file.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let pos = args.iter().position(|a| a == "--config");
    let Some(pos) = pos else {
        return Ok(args);
    };
    let path = args
        .get(pos + 1)
        .ok_or_else(|| Error::invalid("--config needs a file path"))?
        .clone();
    let text = std::fs::read_to_string(&path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::invalid("config file must contain a JSON object"))?;
    let mut injected = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            continue;
        }
        let scalar = |v: &serde_json::Value| -> Result<String> {
            match v {
                serde_json::Value::String(s) => Ok(s.clone()),
                serde_json::Value::Number(n) => Ok(n.to_string()),
                other => Err(Error::invalid(format!(
                    "config key `{key}` has unsupported value {other}"
                ))),
            }
        };
        match v {
            serde_json::Value::Bool(true) => injected.push(OsString::from(flag)),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                injected.push(OsString::from(flag));
                injected.push(OsString::from(parts.join(",")));
            }
            other => {
                injected.push(OsString::from(flag));
                injected.push(OsString::from(scalar(other)?));
            }
        }
    }
    let mut out = Vec::with_capacity(args.len() + injected.len());
    // program name and subcommand come first
    out.extend(args.iter().take(2).cloned());
    out.extend(injected);
    out.extend(
        args.iter()
            .skip(2)
            .enumerate()
            .filter(|(k, _)| k + 2 != pos && k + 2 != pos + 1)
            .map(|(_, a)| a.clone()),
    );
    Ok(out)
}

/// Entry point used by the binary; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = e.print();
                return 0;
            }
            eprintln!(
                "error[usage]: {}",
                e.to_string().lines().next().unwrap_or("invalid arguments")
            );
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    let msg = e.to_string().replace('\n', " ");
    eprintln!("error[{}]: {msg}", e.category());
    1
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = SimulationSpec {
        task: a.task.into(),
        signal_variance: a.signal_variance,
        sparsity_range: (a.sparsity_min, a.sparsity_max),
        correlation: a.correlation,
        design: match a.fixed_active {
            Some(active) => CoefficientDesign::Fixed { active },
            None => CoefficientDesign::Hypersphere,
        },
        calibration_samples: a.calibration_samples,
        ..SimulationSpec::new(a.p, a.m, a.n, a.seed)
    };
    let delim = a.delimiter.byte();
    let (sim, parts) = if a.splits {
        let s = simulate_splits(&spec)?;
        let parts = vec![
            ("_train", s.train.clone()),
            ("_val", s.val.clone()),
            ("_test", s.test.clone()),
        ];
        (s.simulation, parts)
    } else {
        let s = simulate(&spec)?;
        let part = (s.dataset.clone(), s.truth.clone());
        (s, vec![("", part)])
    };
    for (suffix, (ds, truth)) in &parts {
        write_table(&with_suffix(&a.out, &format!("{suffix}.csv")), ds, delim)?;
        write_support(
            &with_suffix(&a.out, &format!("{suffix}_truth.csv")),
            &truth.0,
            &ds.x_names,
            delim,
        )?;
    }
    let realized = sim.realized_sparsity();
    println!("kappa {}", sim.kappa);
    println!(
        "realized sparsity {}",
        realized.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
    );
    Ok(())
}

fn schema_from(args: &SchemaArgs, task: Task) -> TableSchema {
    TableSchema {
        response: Some(args.response.clone()),
        contextual: args.contextual.clone(),
        explanatory: args.explanatory.clone(),
        task,
        delimiter: args.delimiter.byte(),
    }
}

pub fn run_config_from(a: &FitArgs) -> RunConfig {
    RunConfig {
        mode: a.mode,
        task: a.task.into(),
        n_lambda: a.n_lambda,
        relax: !a.no_relax,
        seed: a.seed,
        hidden_layers: a.hidden_layers,
        width: a.width,
        include_intercept: !a.no_intercept,
        optimizer: OptimizerConfig {
            learning_rate: a.learning_rate,
            patience: a.patience,
            max_epochs: a.max_epochs,
            batch_size: a.batch_size,
            min_improvement: a.min_improvement,
            seed: a.seed,
            ..OptimizerConfig::default()
        },
        groups: a.groups.as_ref().map(|g| {
            g.split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.split(',').map(|c| c.trim().to_string()).collect())
                .collect()
        }),
        nonneg: a.nonneg.clone(),
        nonpos: a.nonpos.clone(),
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    if a.repeat == 0 {
        return Err(Error::invalid("--repeat must be at least 1"));
    }
    let base = run_config_from(a);
    base.validate()?;
    let schema = schema_from(&a.schema, base.task);
    let train = load_table(&a.train, &schema)?;
    let val = load_table(&a.val, &schema)?;

    for k in 0..a.repeat {
        let run = RunConfig {
            seed: base.seed.wrapping_add(k as u64),
            ..base.clone()
        };
        let (out, report) = if a.repeat == 1 {
            (
                a.out.clone(),
                a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".path.csv")),
            )
        } else {
            let o = with_suffix(&a.out, &format!(".seed{}", run.seed));
            let r = with_suffix(&o, ".path.csv");
            (o, r)
        };
        let quiet = a.quiet;
        let outcome = fit_model_with(&train, &val, &run, |t, row| {
            if !quiet {
                eprintln!(
                    "lambda[{t}] = {:.6} gamma = {:.1} val = {:.6} sparsity = {:.3}",
                    row.lambda, row.gamma, row.validation_loss, row.avg_sparsity
                );
            }
        })?;
        let archive = ModelArchive::new(
            outcome.model,
            ArchiveSchema {
                response: train.response_name.clone(),
                explanatory: train.x_names.clone(),
                contextual: train.z_names.clone(),
            },
            train.y.sum() / train.n() as f64,
            Provenance {
                seed: run.seed,
                config_digest: archive::digest(&run)?,
                mode: match run.mode {
                    Mode::Contextual => "contextual".into(),
                    Mode::ConstantLasso => "constant-lasso".into(),
                },
            },
        );
        archive.save(&out)?;
        write_path_report(&report, &outcome.rows)?;
        let sel = &outcome.rows[outcome.selected_index];
        println!(
            "selected lambda {} gamma {} validation loss {} ({})",
            sel.lambda,
            sel.gamma,
            sel.validation_loss,
            out.display()
        );
    }
    Ok(())
}

fn archive_schema(archive: &ModelArchive, need_response: bool, delimiter: u8) -> TableSchema {
    TableSchema {
        response: need_response.then(|| archive.schema.response.clone()),
        contextual: archive.schema.contextual.clone(),
        explanatory: Some(archive.schema.explanatory.clone()),
        task: archive.model.task,
        delimiter,
    }
}

/// Loads data for an archive, failing on a p/m mismatch before reading rows.
fn load_for_archive(archive: &ModelArchive, path: &Path, need_response: bool, delimiter: u8) -> Result<Dataset> {
    let ds = load_table(path, &archive_schema(archive, need_response, delimiter))?;
    if ds.p() != archive.model.p() || ds.m() != archive.model.m() {
        return Err(Error::shape(format!(
            "archive expects p = {}, m = {}; data has p = {}, m = {}",
            archive.model.p(),
            archive.model.m(),
            ds.p(),
            ds.m()
        )));
    }
    Ok(ds)
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let archive = ModelArchive::load(&a.model)?;
    let delim = a.delimiter.byte();
    let ds = load_for_archive(&archive, &a.data, false, delim)?;
    let pred = archive.model.predict(&ds)?;
    let coefs = if a.coefficients {
        Some(archive.model.coefficients_raw(&ds)?)
    } else {
        None
    };
    let sep = char::from(delim);
    let mut out = String::from("prediction");
    if coefs.is_some() {
        out.push(sep);
        out.push_str("intercept");
        for name in &archive.schema.explanatory {
            out.push(sep);
            out.push_str(&format!("beta_{name}"));
        }
    }
    out.push('\n');
    for i in 0..ds.n() {
        out.push_str(&pred[i].to_string());
        if let Some(c) = &coefs {
            out.push(sep);
            let b0 = c.intercept.as_ref().map(|b| b[i]).unwrap_or(0.0);
            out.push_str(&b0.to_string());
            for v in c.beta.row(i) {
                out.push(sep);
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    std::fs::write(&a.out, out)?;
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    if a.f1 && a.truth.is_none() {
        return Err(Error::invalid("--f1 requires --truth"));
    }
    let archive = ModelArchive::load(&a.model)?;
    let delim = a.delimiter.byte();
    let test = load_for_archive(&archive, &a.test, true, delim)?;
    let baseline_mean = match &a.train {
        Some(p) => {
            let train = load_for_archive(&archive, p, true, delim)?;
            train.y.sum() / train.n() as f64
        }
        None => archive.train_response_mean,
    };
    let truth = a.truth.as_ref().map(|p| load_support(p, delim)).transpose()?;
    let other = a.stability.as_ref().map(|p| ModelArchive::load(p)).transpose()?;
    let mode = match a.f1_mode {
        F1Arg::Pooled => F1Mode::Pooled,
        F1Arg::PerObservation => F1Mode::PerObservation,
    };
    let report = evaluate(
        &archive.model,
        &test,
        baseline_mean,
        truth.as_ref(),
        other.as_ref().map(|o| &o.model),
        mode,
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let sep = char::from(delim);
    let text = format!(
        "relative_loss{sep}avg_sparsity_count{sep}avg_sparsity_proportion{sep}f1{sep}hamming_instability\n{}{sep}{}{sep}{}{sep}{}{sep}{}\n",
        report.relative_loss,
        report.avg_sparsity_count,
        report.avg_sparsity_proportion,
        opt(report.f1),
        opt(report.hamming_instability)
    );
    std::fs::write(&a.out, &text)?;
    print!("{text}");
    Ok(())
}
