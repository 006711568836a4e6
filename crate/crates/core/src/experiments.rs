//! Replication drivers: synthetic support-recovery tables, the nested-CV LDA
//! pipeline on labeled expression data, and result serialization.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glasso::{build_penalty, weighted_glasso, PenaltyMatrix, SolverConfig};
use crate::matrix::{Mat, SymPd};
use crate::selection::{classification_metrics, confusion, default_grid, select_parameter, Confusion, Method};
use crate::synth::{default_scales, heteroskedastic_scale, make_model, sample_gaussian_stream, ModelKind};

/// Largest fraction of replicates a synthetic run may drop.
pub const SYNTHETIC_FAILURE_CAP: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidArgument(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn csv_bytes<T: Serialize>(rows: &[T], columns: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(columns)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

/// Emits a table as CSV (explicit header, also for an empty table) or as a
/// JSON array.
pub fn emit<T: Serialize>(rows: &[T], columns: &[&str], path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => csv_bytes(rows, columns)?,
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(rows)?;
            b.push(b'\n');
            b
        }
    };
    write_atomic(path, &bytes)
}

pub fn emit_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut b = serde_json::to_vec_pretty(value)?;
    b.push(b'\n');
    write_atomic(path, &b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub n: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
}

impl SummaryRow {
    pub const COLUMNS: [&'static str; 5] = ["method", "n", "metric", "mean", "stderr"];
}

/// Mean and `sd/√k` over replicate values.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn summary_rows(method: &str, n: usize, metrics: &[crate::selection::MetricsReport]) -> Vec<SummaryRow> {
    let pick: [(&str, fn(&crate::selection::MetricsReport) -> f64); 4] = [
        ("acc", |m| m.acc),
        ("mcc", |m| m.mcc),
        ("tnr", |m| m.tnr),
        ("tpr", |m| m.tpr),
    ];
    pick.iter()
        .map(|(name, f)| {
            let vals: Vec<f64> = metrics.iter().map(f).collect();
            let (mean, stderr) = mean_stderr(&vals);
            SummaryRow {
                method: method.to_string(),
                n,
                metric: name.to_string(),
                mean,
                stderr,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub d: usize,
    pub n: usize,
    pub reps: usize,
    /// `None` keeps unit scales.
    pub scales: Option<Vec<f64>>,
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    /// Defaults: heteroskedastic scales, 25-point grid, perturbed method.
    pub fn new(model: ModelKind, d: usize, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            model,
            d,
            n,
            reps,
            scales: Some(default_scales(d)),
            grid: default_grid(25),
            methods: vec![Method::Perturbed],
            seed,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticResult {
    pub rows: Vec<SummaryRow>,
    pub pd_adjusted: bool,
    /// `(method, dropped replicates)`.
    pub failures: Vec<(Method, usize)>,
    /// Per method, the replicate metrics in replicate order.
    pub replicates: Vec<(Method, Vec<crate::selection::MetricsReport>)>,
}

impl SyntheticResult {
    pub fn mean(&self, method: Method, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.metric == metric)
            .map(|r| r.mean)
    }
}

pub fn run_synthetic(cfg: &ExperimentConfig) -> Result<SyntheticResult> {
    if cfg.reps == 0 || cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("need at least one replicate and one method".into()));
    }
    let base = make_model(cfg.model, cfg.d)?;
    let truth = match &cfg.scales {
        Some(s) => heteroskedastic_scale(&base, s)?,
        None => base,
    };
    let per_rep: Vec<Vec<Option<crate::selection::MetricsReport>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let x = sample_gaussian_stream(&truth.covariance, cfg.n, cfg.seed, rep as u64)?;
            Ok(cfg
                .methods
                .iter()
                .map(|&m| {
                    let sel = select_parameter(&x, &cfg.grid, m, &cfg.solver).ok()?;
                    let c = confusion(&sel.fit.support, &truth.support, cfg.d).ok()?;
                    Some(classification_metrics(c))
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut replicates = Vec::new();
    for (k, &m) in cfg.methods.iter().enumerate() {
        let ok: Vec<_> = per_rep.iter().filter_map(|r| r[k]).collect();
        let dropped = cfg.reps - ok.len();
        if dropped as f64 > SYNTHETIC_FAILURE_CAP * cfg.reps as f64 {
            return Err(Error::NoConvergence {
                what: "synthetic replicates (failure budget exceeded)",
                iterations: dropped,
            });
        }
        rows.extend(summary_rows(m.name(), cfg.n, &ok));
        failures.push((m, dropped));
        replicates.push((m, ok));
    }
    Ok(SyntheticResult {
        rows,
        pd_adjusted: truth.pd_adjusted,
        failures,
        replicates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "AML")]
    Aml,
}

impl Class {
    pub fn is_positive(&self) -> bool {
        *self == Class::Aml
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::All => "ALL",
            Class::Aml => "AML",
        })
    }
}

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub x: Dataset,
    pub labels: Vec<Class>,
    pub gene_ids: Vec<String>,
}

impl LabeledDataset {
    pub fn new(x: Dataset, labels: Vec<Class>, gene_ids: Vec<String>) -> Result<Self> {
        if labels.len() != x.n() || gene_ids.len() != x.d() {
            return Err(Error::Dimension(format!(
                "{} labels and {} gene ids for a {}x{} matrix",
                labels.len(),
                gene_ids.len(),
                x.n(),
                x.d()
            )));
        }
        Ok(Self { x, labels, gene_ids })
    }

    /// `(ALL count, AML count)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let aml = self.labels.iter().filter(|c| c.is_positive()).count();
        (self.labels.len() - aml, aml)
    }
}

/// Reads a CSV whose header is `label,<gene ids...>` with one sample per row
/// and labels `ALL` or `AML`.
pub fn load_expression_csv(path: &Path) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_expression_csv(file)
}

pub fn parse_expression_csv<R: std::io::Read>(reader: R) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
    };
    if header.get(0).map(str::trim) != Some("label") {
        return Err(Error::Parse {
            line: 1,
            message: "first header column must be 'label'".into(),
        });
    }
    let gene_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if gene_ids.is_empty() {
        return Err(Error::Parse { line: 1, message: "no gene columns".into() });
    }
    let d = gene_ids.len();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != d + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 1, record.len()),
            });
        }
        let label = match record[0].trim() {
            "ALL" => Class::All,
            "AML" => Class::Aml,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown label '{other}' (expected ALL or AML)"),
                })
            }
        };
        labels.push(label);
        for (k, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value '{cell}' in column '{}'", gene_ids[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value in column '{}'", gene_ids[k]),
                });
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse { line: 2, message: "no samples".into() });
    }
    let x = Dataset::new(Mat::from_vec(labels.len(), d, values)?)?;
    LabeledDataset::new(x, labels, gene_ids)
}

#[derive(Clone, Debug)]
pub struct LdaConfig {
    pub genes: usize,
    pub reps: usize,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub grid: Vec<f64>,
    pub method: Method,
    /// Screen genes inside each outer training fold instead of on all samples.
    pub screen_per_fold: bool,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl LdaConfig {
    pub fn new(genes: usize, reps: usize, method: Method, seed: u64) -> Self {
        Self {
            genes,
            reps,
            outer_folds: 10,
            inner_folds: 5,
            grid: default_grid(25),
            method,
            screen_per_fold: false,
            seed,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LdaResult {
    pub rows: Vec<SummaryRow>,
    /// Replicate-level metrics from pooled out-of-fold predictions.
    pub replicates: Vec<crate::selection::MetricsReport>,
}

impl LdaResult {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric).map(|r| r.mean)
    }
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// the second class continuing where the first stopped.
pub fn stratified_folds(labels: &[Class], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [Class::All, Class::Aml] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Indices of the `genes` columns with largest sample variance, ascending.
pub fn top_variance_genes(x: &Dataset, genes: usize) -> Vec<usize> {
    let sd = x.column_std();
    let mut idx: Vec<usize> = (0..x.d()).collect();
    idx.sort_by(|&a, &b| sd[b].total_cmp(&sd[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = idx.into_iter().take(genes).collect();
    top.sort_unstable();
    top
}

struct LdaModel {
    precision: SymPd,
    means: [Vec<f64>; 2],
    log_priors: [f64; 2],
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl LdaModel {
    fn predict(&self, row: &[f64]) -> Class {
        let z: Vec<f64> = row
            .iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect();
        let score = |k: usize| {
            let cm = self.precision.mul_vec(&self.means[k]);
            let a: f64 = z.iter().zip(&cm).map(|(x, y)| x * y).sum();
            let b: f64 = self.means[k].iter().zip(&cm).map(|(x, y)| x * y).sum();
            a - 0.5 * b + self.log_priors[k]
        };
        if score(1) > score(0) {
            Class::Aml
        } else {
            Class::All
        }
    }
}

/// Standardizes with training statistics, then fits the precision matrix on
/// the class-mean-centered training rows.
fn fit_lda(x: &Dataset, labels: &[Class], parameter: f64, cfg: &LdaConfig) -> Result<LdaModel> {
    let shift = x.column_means();
    let scale: Vec<f64> = x
        .column_std()
        .iter()
        .map(|s| if *s > 0.0 { 1.0 / s } else { 1.0 })
        .collect();
    let z = x.affine_columns(&shift, &scale);
    let d = z.d();
    let mut means = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (row, c) in z.rows().zip(labels) {
        let k = c.is_positive() as usize;
        counts[k] += 1;
        for (m, v) in means[k].iter_mut().zip(row) {
            *m += v;
        }
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::InvalidArgument("training fold lacks one of the classes".into()));
    }
    for k in 0..2 {
        means[k].iter_mut().for_each(|m| *m /= counts[k] as f64);
    }
    let mut centered = Vec::with_capacity(z.n() * d);
    for (row, c) in z.rows().zip(labels) {
        let k = c.is_positive() as usize;
        centered.extend(row.iter().zip(&means[k]).map(|(v, m)| v - m));
    }
    let pooled = Dataset::new(Mat::from_vec(z.n(), d, centered)?)?;
    let a_bar = pooled.second_moment();
    let penalty = match cfg.method {
        Method::Perturbed => build_penalty(&pooled.abs_means(), parameter, false)?,
        Method::L1 | Method::L1Std => PenaltyMatrix::uniform(d, parameter, false)?,
    };
    let fit = weighted_glasso(&a_bar, &penalty, &cfg.solver)?;
    let n = labels.len() as f64;
    Ok(LdaModel {
        precision: fit.estimate,
        means,
        log_priors: [(counts[0] as f64 / n).ln(), (counts[1] as f64 / n).ln()],
        shift,
        scale,
    })
}

fn tally(truth: &[Class], pred: &[Class]) -> Confusion {
    let mut c = Confusion::default();
    for (t, p) in truth.iter().zip(pred) {
        match (t.is_positive(), p.is_positive()) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

/// Pooled out-of-fold predictions of a `k`-fold split at one parameter.
fn cross_validated_predictions(
    x: &Dataset,
    labels: &[Class],
    folds: &[usize],
    k: usize,
    parameter: f64,
    cfg: &LdaConfig,
) -> Result<Vec<Class>> {
    let mut pred = vec![Class::All; labels.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let train_labels: Vec<Class> = train.iter().map(|&i| labels[i]).collect();
        let model = fit_lda(&x.select_rows(&train), &train_labels, parameter, cfg)?;
        for &i in &test {
            pred[i] = model.predict(x.row(i));
        }
    }
    Ok(pred)
}

fn both_classes(labels: &[Class]) -> bool {
    labels.iter().any(|c| c.is_positive()) && labels.iter().any(|c| !c.is_positive())
}

fn lda_replicate(data: &LabeledDataset, cfg: &LdaConfig, rep: u64, screened: Option<&[usize]>) -> Result<crate::selection::MetricsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep);
    let n = data.labels.len();
    let mut outer = stratified_folds(&data.labels, cfg.outer_folds, &mut rng);
    let mut attempts = 1;
    while (0..cfg.outer_folds).any(|f| {
        let train: Vec<Class> = (0..n).filter(|&i| outer[i] != f).map(|i| data.labels[i]).collect();
        !both_classes(&train)
    }) {
        if attempts >= 10 {
            return Err(Error::InvalidArgument("could not build folds with both classes in training".into()));
        }
        outer = stratified_folds(&data.labels, cfg.outer_folds, &mut rng);
        attempts += 1;
    }

    let mut pred = vec![Class::All; n];
    for f in 0..cfg.outer_folds {
        let train: Vec<usize> = (0..n).filter(|&i| outer[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| outer[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let cols = match screened {
            Some(c) => c.to_vec(),
            None => top_variance_genes(&data.x.select_rows(&train), cfg.genes),
        };
        let x_train = data.x.select_rows(&train).select_columns(&cols);
        let y_train: Vec<Class> = train.iter().map(|&i| data.labels[i]).collect();

        let inner = stratified_folds(&y_train, cfg.inner_folds, &mut rng);
        let mut best: Option<(f64, f64)> = None;
        for &p in &cfg.grid {
            let Ok(inner_pred) = cross_validated_predictions(&x_train, &y_train, &inner, cfg.inner_folds, p, cfg)
            else {
                continue;
            };
            let mcc = classification_metrics(tally(&y_train, &inner_pred)).mcc;
            if best.is_none_or(|(_, b)| mcc > b) {
                best = Some((p, mcc));
            }
        }
        let (p, _) = best.ok_or(Error::NoConvergence {
            what: "inner cross-validation (every grid value failed)",
            iterations: cfg.grid.len(),
        })?;
        let model = fit_lda(&x_train, &y_train, p, cfg)?;
        for &i in &test {
            let row: Vec<f64> = cols.iter().map(|&c| data.x.row(i)[c]).collect();
            pred[i] = model.predict(&row);
        }
    }
    Ok(classification_metrics(tally(&data.labels, &pred)))
}

/// Nested stratified cross-validation of the LDA classifier, replicated
/// `cfg.reps` times with independent shuffles.
pub fn lda_pipeline(data: &LabeledDataset, cfg: &LdaConfig) -> Result<LdaResult> {
    if cfg.genes == 0 || cfg.genes > data.x.d() {
        return Err(Error::InvalidArgument(format!(
            "cannot screen {} genes out of {}",
            cfg.genes,
            data.x.d()
        )));
    }
    if cfg.reps == 0 || cfg.outer_folds < 2 || cfg.inner_folds < 2 || cfg.grid.is_empty() {
        return Err(Error::InvalidArgument("invalid cross-validation settings".into()));
    }
    let screened = if cfg.screen_per_fold {
        None
    } else {
        Some(top_variance_genes(&data.x, cfg.genes))
    };
    let replicates: Vec<_> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| lda_replicate(data, cfg, rep, screened.as_deref()))
        .collect::<Result<_>>()?;
    Ok(LdaResult {
        rows: summary_rows(cfg.method.name(), data.labels.len(), &replicates),
        replicates,
    })
}

/// Two Gaussian classes with identity covariance whose means are
/// `distance` apart in Mahalanobis norm, split along the first axis.
pub fn two_gaussian_fixture(n_all: usize, n_aml: usize, d: usize, distance: f64, seed: u64) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_all + n_aml;
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = if i < n_all { Class::All } else { Class::Aml };
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = if k == 0 && class == Class::Aml { distance } else { 0.0 };
            values.push(z + shift);
        }
        labels.push(class);
    }
    let x = Dataset::new(Mat::from_vec(n, d, values)?)?.with_seed(seed);
    LabeledDataset::new(x, labels, (0..d).map(|k| format!("g{}", k + 1)).collect())
}
