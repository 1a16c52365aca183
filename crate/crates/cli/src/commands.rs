//! Subcommands behind the `opidmd` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use opidmd_core::online::write_trace_csv;
use opidmd_core::prox::{ConstraintSpec, StepRule};
use opidmd_core::snapshots::{read_csv, write_csv, SnapshotMatrix};
use opidmd_core::spectral::{decompose, from_eigenpairs, predict};

use crate::config::{ExperimentConfig, MethodSpec};
use crate::data::{self, config_hash, Manifest, MANIFEST_FILE};
use crate::methods::FittedModel;
use crate::report::ComparisonReport;
use crate::run::{run_all, run_method};
use crate::{io_error, CliError};

#[derive(Debug, Parser)]
#[command(name = "opidmd", version, about = "Online physics-informed DMD experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate or load the series and write clean/noisy CSVs with a manifest.
    Generate(Common),
    /// Fit the configured methods to previously generated data.
    Fit(FitArgs),
    /// Modal prediction from a stored operator.
    Predict(PredictArgs),
    /// Generate, fit and score every method of one or more configs.
    Compare(CompareArgs),
    /// Print the table stored in a compare.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fit only methods whose id or label matches.
    #[arg(long)]
    pub method: Option<String>,
    /// Also write the per-update trace of online methods.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Square operator CSV.
    #[arg(long, conflicts_with_all = ["lift", "reduced"], required_unless_present = "lift")]
    pub operator: Option<PathBuf>,
    /// Lift matrix of a reduced model; needs `--reduced`.
    #[arg(long, requires = "reduced")]
    pub lift: Option<PathBuf>,
    #[arg(long, requires = "lift")]
    pub reduced: Option<PathBuf>,
    /// Single-column CSV with the initial state.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub horizon: usize,
    /// Modes kept; all when absent.
    #[arg(long)]
    pub r_used: Option<usize>,
    /// Prediction CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also accepted for interface symmetry; unused.
    #[arg(long, hide = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// One or more experiment configs.
    #[arg(long)]
    pub config: Vec<PathBuf>,
    /// Directory for compare.json and compare.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the step or lambda of matching methods with each listed value,
    /// e.g. `step=1e-5,1e-4` or `lambda=0.1,1`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Run rows on a thread pool capped by OPIDMD_THREADS (timings become less reliable).
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A compare.json file, or a directory containing one.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Single-threaded linear algebra, so results do not depend on the machine.
pub fn init_numerics() {
    faer::set_global_parallelism(faer::Par::Seq);
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    init_numerics();
    match cli.command {
        Command::Generate(c) => cmd_generate(&c).map(|_| ()),
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Compare(a) => cmd_compare(&a).map(|_| ()),
        Command::Report(a) => cmd_report(&a),
    }
}

fn load_config(common: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = output_dir(&cfg, common.out.as_deref());
    Ok((cfg, out))
}

fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

pub fn cmd_generate(common: &Common) -> Result<Manifest, CliError> {
    let (cfg, out) = load_config(common)?;
    let dataset = data::generate(&cfg)?;
    let manifest = data::write_dataset(&out, &cfg, &dataset)?;
    println!(
        "wrote {}x{} clean and noisy series to {}",
        manifest.n_state,
        manifest.n_time,
        out.display()
    );
    Ok(manifest)
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let (cfg, out) = load_config(&args.common)?;
    let dataset = data::read_dataset(&out)?;
    if let Ok(text) = std::fs::read_to_string(out.join(MANIFEST_FILE)) {
        if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
            if m.config_sha256 != config_hash(&cfg) {
                eprintln!("warning: data in {} was generated from a different config", out.display());
            }
        }
    }
    let prepared = data::prepare(&cfg, &dataset)?;
    let methods: Vec<&MethodSpec> = cfg
        .methods
        .iter()
        .filter(|m| args.method.as_deref().is_none_or(|sel| sel == m.id() || sel == m.label()))
        .collect();
    if methods.is_empty() {
        return Err(CliError::Config(format!("no method matches `{}`", args.method.as_deref().unwrap_or(""))));
    }
    write_csv(
        &SnapshotMatrix::from_columns(&[prepared.split.init_state.clone()], prepared.dt)?,
        out.join("init_state.csv"),
    )?;

    let mut first_failure = None;
    for method in methods {
        let stem = method.file_stem();
        let run = run_method(&cfg, &prepared, method, args.trace);
        if let Some(outcome) = &run.outcome {
            outcome.model.write(&out, &stem, prepared.dt)?;
            if args.trace && !outcome.trace.is_empty() {
                write_trace_csv(&outcome.trace, out.join(format!("{stem}.trace.csv")))?;
            }
        }
        if let Some(ev) = &run.evaluation {
            write_csv(&ev.prediction, out.join(format!("{stem}.prediction.csv")))?;
        }
        data::write_json(&out.join(format!("{stem}.report.json")), &run.report)?;
        println!("{:<44} R^2 = {}{}", run.report.label, run.report.r2_text, if run.report.diverged { " (diverged)" } else { "" });
        if let Some(msg) = run.failure {
            eprintln!("{}: {msg}", run.report.label);
            first_failure.get_or_insert(CliError::Numerical(format!("{}: {msg}", run.report.label)));
        }
    }
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let m = read_csv(path)?;
    if m.n_time() != 1 {
        return Err(CliError::Config(format!("{} must hold a single column, found {}", path.display(), m.n_time())));
    }
    Ok(m.column_vec(0))
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    if args.horizon == 0 {
        return Err(CliError::Config("--horizon must be >= 1".into()));
    }
    let x0 = read_vector(&args.init)?;
    let dt = read_csv(&args.init)?.dt();
    let model = match (&args.operator, &args.lift, &args.reduced) {
        (Some(op), _, _) => FittedModel::read_operator(op)?,
        (None, Some(lift), Some(reduced)) => FittedModel::read_reduced(lift, reduced)?,
        _ => return Err(CliError::Config("give --operator, or --lift with --reduced".into())),
    };
    if model.n_state() != x0.len() {
        return Err(CliError::Config(format!(
            "initial state has length {}, model state dimension is {}",
            x0.len(),
            model.n_state()
        )));
    }
    let r_used = args.r_used.unwrap_or(model.n_modes());
    if r_used == 0 || r_used > model.n_modes() {
        return Err(CliError::Config(format!("--r-used must lie in 1..={}", model.n_modes())));
    }
    let md = match &model {
        FittedModel::Operator(a) => decompose(a.as_ref(), r_used, &x0)?,
        FittedModel::Reduced { .. } => {
            let (vals, modes) = model.spectrum()?;
            from_eigenpairs(&vals, modes.as_ref(), r_used, &x0)?
        }
    };
    let pred = predict(&md, args.horizon, dt)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    write_csv(&pred, &args.out)?;
    println!("wrote {}x{} prediction ({} modes) to {}", pred.n_state(), pred.n_time(), md.r_used, args.out.display());
    Ok(())
}

/// Parses `step=a,b,...` or `lambda=a,b,...`.
pub fn parse_sweep(text: &str) -> Result<(String, Vec<f64>), CliError> {
    let (key, values) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--sweep expects key=v1,v2,..., got `{text}`")))?;
    let key = key.trim();
    if key != "step" && key != "lambda" {
        return Err(CliError::Config(format!("--sweep key must be `step` or `lambda`, got `{key}`")));
    }
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("--sweep value `{v}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(CliError::Config("--sweep values must be finite and >= 0".into()));
    }
    Ok((key.to_string(), values))
}

fn with_lambda(c: ConstraintSpec, lambda: f64) -> Option<ConstraintSpec> {
    match c {
        ConstraintSpec::L1 { .. } => Some(ConstraintSpec::L1 { lambda }),
        ConstraintSpec::L2 { .. } => Some(ConstraintSpec::L2 { lambda }),
        ConstraintSpec::Nuclear { .. } => Some(ConstraintSpec::Nuclear { lambda }),
        _ => None,
    }
}

fn swept(method: &MethodSpec, key: &str, v: f64) -> Option<MethodSpec> {
    let mut m = method.clone();
    match (&mut m, key) {
        (MethodSpec::Opidmd { step: step @ StepRule::Fixed { .. }, .. }, "step") => *step = StepRule::Fixed { step: v },
        (MethodSpec::BatchPidmd { step: step @ Some(StepRule::Fixed { .. }), .. }, "step") => {
            *step = Some(StepRule::Fixed { step: v })
        }
        (MethodSpec::Ridge { lambda }, "lambda") => *lambda = v,
        (MethodSpec::Opidmd { constraint, .. } | MethodSpec::BatchPidmd { constraint, .. }, "lambda") => {
            *constraint = with_lambda(*constraint, v)?
        }
        _ => return None,
    }
    Some(m)
}

/// Expands each method matched by the sweep into one copy per value.
pub fn expand_sweep(cfg: &mut ExperimentConfig, key: &str, values: &[f64]) -> Result<(), CliError> {
    let mut methods = Vec::new();
    let mut matched = false;
    for m in &cfg.methods {
        match values.iter().map(|&v| swept(m, key, v)).collect::<Option<Vec<_>>>() {
            Some(copies) => {
                matched = true;
                methods.extend(copies);
            }
            None => methods.push(m.clone()),
        }
    }
    if !matched {
        return Err(CliError::Config(format!("no method in `{}` has a sweepable `{key}`", cfg.name)));
    }
    cfg.methods = methods;
    cfg.validate()
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let cap = match std::env::var("OPIDMD_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| CliError::Config(format!("OPIDMD_THREADS must be a positive integer, got `{v}`")))?,
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cap)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<ComparisonReport, CliError> {
    if args.config.is_empty() {
        return Err(CliError::Config("compare needs at least one --config".into()));
    }
    let sweep = args.sweep.as_deref().map(parse_sweep).transpose()?;
    let mut configs = Vec::new();
    for path in &args.config {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some((key, values)) = &sweep {
            expand_sweep(&mut cfg, key, values)?;
        }
        configs.push(cfg);
    }
    let pool = if args.parallel { Some(thread_pool()?) } else { None };

    let mut rows = Vec::new();
    for cfg in &configs {
        let dataset = data::generate(cfg)?;
        let prepared = data::prepare(cfg, &dataset)?;
        rows.extend(run_all(cfg, &prepared, pool.as_ref()));
    }
    let report = ComparisonReport::new(rows);
    let out = match (&args.out, configs.as_slice()) {
        (Some(o), _) => o.clone(),
        (None, [single]) => output_dir(single, None),
        (None, _) => PathBuf::from("out").join("compare"),
    };
    report.write(&out)?;
    print!("{}", report.to_table());
    println!("report hash {}", report.hash);
    Ok(report)
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let path = match (&args.input, &args.out, &args.config) {
        (Some(p), _, _) | (None, Some(p), _) => p.clone(),
        (None, None, Some(c)) => output_dir(&ExperimentConfig::load(c)?, None),
        (None, None, None) => return Err(CliError::Config("report needs --input, --out or --config".into())),
    };
    let file = if path.is_dir() { path.join("compare.json") } else { path };
    let report = ComparisonReport::read(&file)?;
    print!("{}", report.to_table());
    println!("report hash {}", report.hash);
    Ok(())
}
