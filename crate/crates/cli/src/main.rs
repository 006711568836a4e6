use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pertprec::asymptotics::{self, AsymptoticsConfig, ErrorRow, Estimator};
use pertprec::diagnostics::{diagnostics_report, support_sets};
use pertprec::experiments::{
    self, emit, emit_json, lda_pipeline, load_expression_csv, run_synthetic, ExperimentConfig, Format, LdaConfig,
    SummaryRow,
};
use pertprec::glasso::{fit_linf, SolverConfig};
use pertprec::selection::{default_grid, Method};
use pertprec::shrinkage::fit_l2;
use pertprec::synth::{default_scales, heteroskedastic_scale, make_model, GroundTruth, ModelKind};
use pertprec::{Dataset, SymMatrix};

#[derive(Parser, Debug)]
#[command(name = "pertprec", version, about = "Adversarially perturbed precision matrix estimation")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// File of `key = value` lines; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum NormArg {
    Linf,
    L2,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum ScalesArg {
    Default,
    None,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a precision matrix to a numeric CSV.
    Estimate(EstimateArgs),
    /// Replicate support recovery on a synthetic model.
    Simulate(SimulateArgs),
    /// Incoherence and sample-size constants for a synthetic model.
    Diagnose(DiagnoseArgs),
    /// Monte-Carlo distribution of the rescaled estimation error.
    Asymptotics(AsymptoticsArgs),
    /// Nested cross-validated LDA on labeled expression data.
    Lda(LdaArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = NormArg::Linf)]
    norm: NormArg,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    penalize_diagonal: bool,
    #[arg(long)]
    center: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ar2")]
    model: ModelKind,
    #[arg(long, default_value_t = 30)]
    d: usize,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "perturbed")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 25)]
    grid_points: usize,
    #[arg(long, value_enum, default_value_t = ScalesArg::Default)]
    scales: ScalesArg,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ar2")]
    model: ModelKind,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    c1: f64,
    #[arg(long, default_value_t = 0.5)]
    c2: f64,
    #[arg(long, value_enum, default_value_t = ScalesArg::None)]
    scales: ScalesArg,
}

#[derive(Args, Debug)]
struct AsymptoticsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value = "2", value_parser = parse_norm)]
    p: f64,
    #[arg(long, default_value = "exact")]
    estimator: Estimator,
    #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Ground truth; `identity` gives Σ = I.
    #[arg(long, default_value = "identity")]
    model: String,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long)]
    penalize_diagonal: bool,
}

#[derive(Args, Debug)]
struct LdaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 40)]
    genes: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long)]
    screen_per_fold: bool,
    #[arg(long, default_value = "perturbed")]
    method: Method,
    #[arg(long, default_value_t = 25)]
    grid_points: usize,
}

fn parse_norm(s: &str) -> std::result::Result<f64, String> {
    asymptotics::parse_norm(s).map_err(|e| e.to_string())
}

/// Turns `key = value` lines into flags placed right after the subcommand,
/// so later command-line flags override them.
fn config_tokens(text: &str, path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected 'key = value'", path.display(), k + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            bail!("{}:{}: empty key", path.display(), k + 1);
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut it = args.iter().enumerate();
    while let Some((_, a)) = it.next() {
        if a == "--config" {
            path = it.next().map(|(_, p)| p.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let path = PathBuf::from(path);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let tokens = config_tokens(&text, &path)?;
    let sub = args
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(args.len());
    let mut out = args[..sub].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[sub..]);
    Ok(out)
}

fn write_output(common: &Common, bytes: &[u8]) -> Result<()> {
    match &common.out {
        Some(path) => experiments::write_atomic(path, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn write_table<T: Serialize>(common: &Common, rows: &[T], columns: &[&str]) -> Result<()> {
    match &common.out {
        Some(path) => emit(rows, columns, path, common.format.into())?,
        None => {
            let bytes = match common.format {
                FormatArg::Csv => experiments::csv_bytes(rows, columns)?,
                FormatArg::Json => {
                    let mut b = serde_json::to_vec_pretty(rows)?;
                    b.push(b'\n');
                    b
                }
            };
            write_output(common, &bytes)?;
        }
    }
    Ok(())
}

fn write_value<T: Serialize>(common: &Common, value: &T) -> Result<()> {
    match &common.out {
        Some(path) => emit_json(value, path)?,
        None => {
            let mut b = serde_json::to_vec_pretty(value)?;
            b.push(b'\n');
            write_output(common, &b)?;
        }
    }
    Ok(())
}

fn matrix_rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

#[derive(Serialize)]
struct EstimateOutput {
    norm: &'static str,
    delta: f64,
    n: usize,
    d: usize,
    objective: f64,
    iterations: Option<usize>,
    kkt_residual: Option<f64>,
    lambda_star: Option<f64>,
    support: Vec<(usize, usize)>,
    columns: Vec<String>,
    estimate: Vec<Vec<f64>>,
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let (x, header) = Dataset::load_csv(&args.input)?;
    let columns = header.unwrap_or_else(|| (1..=x.d()).map(|k| format!("x{k}")).collect());
    let solver = SolverConfig {
        center: args.center,
        ..SolverConfig::default()
    };
    let out = match args.norm {
        NormArg::Linf => {
            let fit = fit_linf(&x, args.delta, &solver, args.penalize_diagonal)?;
            EstimateOutput {
                norm: "linf",
                delta: args.delta,
                n: x.n(),
                d: x.d(),
                objective: fit.objective,
                iterations: Some(fit.iterations),
                kkt_residual: Some(fit.kkt_residual),
                lambda_star: None,
                support: fit.support,
                columns,
                estimate: matrix_rows(&fit.estimate),
            }
        }
        NormArg::L2 => {
            if args.penalize_diagonal {
                eprintln!("note: --penalize-diagonal has no effect with --norm l2");
            }
            let fit = fit_l2(&x, args.delta, &solver)?;
            if fit.boundary {
                eprintln!("note: an eigenvalue reached the c = λ boundary");
            }
            EstimateOutput {
                norm: "l2",
                delta: args.delta,
                n: x.n(),
                d: x.d(),
                objective: fit.objective,
                iterations: None,
                kkt_residual: None,
                lambda_star: Some(fit.lambda_star),
                support: pertprec::synth::off_diagonal_support(&fit.estimate),
                columns,
                estimate: matrix_rows(&fit.estimate),
            }
        }
    };
    match args.common.format {
        FormatArg::Json => write_value(&args.common, &out),
        FormatArg::Csv => {
            let cols: Vec<&str> = out.columns.iter().map(String::as_str).collect();
            let bytes = experiments::csv_bytes(&out.estimate, &cols)?;
            write_output(&args.common, &bytes)
        }
    }
}

fn build_truth(model: ModelKind, d: usize, scales: ScalesArg) -> Result<GroundTruth> {
    let base = make_model(model, d)?;
    if base.pd_adjusted {
        eprintln!("note: {model} model adjusted to be positive definite (c11 = {})", base.precision.get(0, 0));
    }
    Ok(match scales {
        ScalesArg::Default => heteroskedastic_scale(&base, &default_scales(d))?,
        ScalesArg::None => base,
    })
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::new(args.model, args.d, args.n, args.reps, args.common.seed);
    cfg.methods = args.methods;
    cfg.grid = default_grid(args.grid_points);
    if args.scales == ScalesArg::None {
        cfg.scales = None;
    }
    let result = run_synthetic(&cfg)?;
    if result.pd_adjusted {
        eprintln!("note: {} model adjusted to be positive definite", args.model);
    }
    for (m, dropped) in &result.failures {
        if *dropped > 0 {
            eprintln!("note: {m}: {dropped} replicate(s) dropped after solver failures");
        }
    }
    write_table(&args.common, &result.rows, &SummaryRow::COLUMNS)
}

#[derive(Serialize)]
struct Field {
    field: String,
    value: f64,
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let truth = build_truth(args.model, args.d, args.scales)?;
    let support = support_sets(&truth.precision, 0.0);
    let report = diagnostics_report(&truth.covariance, &support, args.delta, args.tau, args.alpha, args.c1, args.c2)?;
    match args.common.format {
        FormatArg::Json => write_value(&args.common, &report),
        FormatArg::Csv => {
            let value = serde_json::to_value(&report)?;
            let mut rows = Vec::new();
            if let serde_json::Value::Object(map) = value {
                for (k, v) in map {
                    match v {
                        serde_json::Value::Array(items) => {
                            for (i, item) in items.iter().enumerate() {
                                rows.push(Field {
                                    field: format!("{k}_{}", i + 1),
                                    value: item.as_f64().unwrap_or(f64::NAN),
                                });
                            }
                        }
                        other => rows.push(Field {
                            field: k,
                            value: other.as_f64().unwrap_or(f64::NAN),
                        }),
                    }
                }
            }
            write_table(&args.common, &rows, &["field", "value"])
        }
    }
}

fn run_asymptotics(args: AsymptoticsArgs) -> Result<()> {
    let truth = if args.model == "identity" {
        GroundTruth::from_precision(SymMatrix::identity(args.d), false)?
    } else {
        build_truth(args.model.parse()?, args.d, ScalesArg::None)?
    };
    let mut cfg = AsymptoticsConfig::new(
        args.gamma,
        args.eta,
        args.n_list,
        args.reps,
        args.p,
        args.estimator,
        args.common.seed,
    );
    cfg.penalize_diagonal = args.penalize_diagonal;
    let samples = asymptotics::rescaled_errors(&truth, &cfg)?;
    let summaries: Vec<_> = samples.iter().map(|s| s.summary(&cfg)).collect();
    for s in &samples {
        if s.failures > 0 {
            eprintln!("note: n = {}: {} replicate(s) skipped", s.n, s.failures);
        }
        if args.estimator == Estimator::Surrogate {
            let z = asymptotics::zero_mass_frequency(s, &truth);
            if let Some(m) = z.min_null {
                eprintln!("n = {}: minimum null-entry zero frequency {m:.3}", s.n);
            }
        }
    }
    match args.common.format {
        FormatArg::Json => write_value(&args.common, &summaries),
        FormatArg::Csv => {
            let rows: Vec<ErrorRow> = samples.iter().flat_map(|s| s.rows()).collect();
            write_table(&args.common, &rows, &ErrorRow::COLUMNS)?;
            if let Some(out) = &args.common.out {
                let summary_path = out.with_extension("summary.json");
                emit_json(&summaries, &summary_path)?;
            }
            Ok(())
        }
    }
}

fn lda(args: LdaArgs) -> Result<()> {
    let data = load_expression_csv(&args.input)?;
    let (all, aml) = data.class_counts();
    eprintln!("loaded {} samples ({all} ALL, {aml} AML), {} genes", all + aml, data.gene_ids.len());
    let mut cfg = LdaConfig::new(args.genes, args.reps, args.method, args.common.seed);
    cfg.screen_per_fold = args.screen_per_fold;
    cfg.grid = default_grid(args.grid_points);
    let result = lda_pipeline(&data, &cfg)?;
    write_table(&args.common, &result.rows, &SummaryRow::COLUMNS)
}

fn main() -> Result<()> {
    let args = expand_config(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Asymptotics(a) => run_asymptotics(a),
        Command::Lda(a) => lda(a),
    }
}
