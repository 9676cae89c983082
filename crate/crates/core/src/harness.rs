//! Experiment driver: datasets, multi-seed runs, seed-spread statistics,
//! budgeted comparisons and the admissibility report.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{make_radisa_config, Engine, RunConfig, TraceRecord};
use crate::error::{Error, Result};
use crate::grid::{DataGrid, LabelKind};
use crate::io::{load_dataset, DataFormat};
use crate::losses::loss_value;
use crate::synthetic::{generate_regression, generate_synthetic};
use crate::theory::{
    b_lower_bound, constant_rate_bound, lambda_precondition_holds, lambda_rate, min_inner_batch,
    strong_convexity_gap_bound, Constant, TheoryConstants,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Synthetic classification data (or regression targets when
    /// `regression_noise` is set).
    Generate {
        n_obs: usize,
        n_features: usize,
        seed: u64,
        #[serde(default = "default_flip")]
        flip_prob: f64,
        #[serde(default)]
        regression_noise: Option<f64>,
    },
    File {
        path: PathBuf,
        format: String,
        #[serde(default)]
        n_features: Option<usize>,
        #[serde(default)]
        regression: bool,
    },
}

fn default_flip() -> f64 {
    0.01
}

impl DatasetSpec {
    pub fn load(&self) -> Result<DataGrid> {
        match self {
            DatasetSpec::Generate {
                n_obs,
                n_features,
                seed,
                flip_prob,
                regression_noise,
            } => match regression_noise {
                Some(noise) => Ok(generate_regression(*n_obs, *n_features, *seed, *noise)?.grid),
                None => Ok(generate_synthetic(*n_obs, *n_features, *seed, *flip_prob)?.grid),
            },
            DatasetSpec::File {
                path,
                format,
                n_features,
                regression,
            } => {
                let kind = if *regression {
                    LabelKind::Regression
                } else {
                    LabelKind::Classification
                };
                load_dataset(path, format.parse::<DataFormat>()?, kind, *n_features)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Sodda,
    Radisa,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sodda => "sodda",
            Algorithm::Radisa => "radisa",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sodda" => Ok(Algorithm::Sodda),
            "radisa" => Ok(Algorithm::Radisa),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub algorithm: Algorithm,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.config.validate()
    }

    /// Run configuration for one seed, with the algorithm applied.
    pub fn config_for(&self, seed: u64) -> RunConfig {
        let cfg = RunConfig {
            seed,
            ..self.config.clone()
        };
        match self.algorithm {
            Algorithm::Sodda => cfg,
            Algorithm::Radisa => make_radisa_config(&cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: Option<f64>,
    pub trace: Vec<TraceRecord>,
    pub eval_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub algorithm: Algorithm,
    pub sample_sizes: (usize, usize, usize),
    pub runs: Vec<SeedRun>,
}

/// Runs every seed on an already loaded grid without touching the disk.
pub fn run_seeds(spec: &ExperimentSpec, grid: &DataGrid) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut runs = Vec::with_capacity(spec.seeds.len());
    let mut sizes = (0, 0, 0);
    for &seed in &spec.seeds {
        let engine = Engine::new(spec.config_for(seed), grid)?;
        sizes = engine.sample_sizes();
        let state = engine.initial_state();
        let initial_loss = loss_value(&spec.config.loss, grid, state.w.values())?;
        let state = engine.run()?;
        let final_loss = state.trace.iter().rev().find_map(|r| r.loss);
        runs.push(SeedRun {
            seed,
            initial_loss,
            final_loss,
            eval_ms: state.eval_ms(),
            trace: state.trace,
        });
    }
    Ok(ExperimentResult {
        algorithm: spec.algorithm,
        sample_sizes: sizes,
        runs,
    })
}

pub fn trace_line(record: &TraceRecord) -> String {
    serde_json::to_string(record).expect("trace records always serialize")
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in trace {
        writeln!(out, "{}", trace_line(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn trace_file_name(algorithm: Algorithm, seed: u64) -> String {
    format!("trace_{}_seed{seed}.jsonl", algorithm.name())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    spec: &'a ExperimentSpec,
    sample_sizes: (usize, usize, usize),
    n_obs: usize,
    n_features: usize,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    seed: u64,
    initial_loss: f64,
    final_loss: Option<f64>,
}

/// Loads the dataset, runs every seed and writes one JSON-lines trace per
/// seed plus `manifest.json` (the full experiment) and `summary_<algorithm>.json`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let grid = spec.dataset.load()?;
    let result = run_seeds(spec, &grid)?;
    fs::create_dir_all(&spec.output)?;
    for run in &result.runs {
        write_trace(
            &spec.output.join(trace_file_name(spec.algorithm, run.seed)),
            &run.trace,
        )?;
    }
    let manifest = Manifest {
        spec,
        sample_sizes: result.sample_sizes,
        n_obs: grid.n_obs(),
        n_features: grid.n_features(),
    };
    fs::write(
        spec.output.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    let summary: Vec<SummaryRow> = result
        .runs
        .iter()
        .map(|r| SummaryRow {
            seed: r.seed,
            initial_loss: r.initial_loss,
            final_loss: r.final_loss,
        })
        .collect();
    fs::write(
        spec.output
            .join(format!("summary_{}.json", spec.algorithm.name())),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(result)
}

/// Spread of the loss across seeds, per iteration, summarized four ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub avg_max_minus_avg: f64,
    pub avg_avg_minus_min: f64,
    pub max_max_minus_avg: f64,
    pub max_avg_minus_min: f64,
}

/// `traces[s][t]` is the loss of seed `s` after iteration `t`.
pub fn sweep_stats(traces: &[Vec<f64>]) -> Result<SweepStats> {
    if traces.len() < 2 {
        return Err(Error::LengthMismatch(format!(
            "need at least 2 seeds, got {}",
            traces.len()
        )));
    }
    let len = traces[0].len();
    if len == 0 || traces.iter().any(|t| t.len() != len) {
        return Err(Error::LengthMismatch(format!(
            "per-seed lengths {:?}",
            traces.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let seeds = traces.len() as f64;
    let mut above = Vec::with_capacity(len);
    let mut below = Vec::with_capacity(len);
    for t in 0..len {
        let column = traces.iter().map(|s| s[t]);
        let max = column.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = column.clone().fold(f64::INFINITY, f64::min);
        // avg − min as the mean offset from the minimum: exactly 0 when all
        // seeds agree, and never outside [0, max − min].
        let offset = (column.map(|v| v - min).sum::<f64>() / seeds).clamp(0.0, max - min);
        above.push(max - min - offset);
        below.push(offset);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(SweepStats {
        avg_max_minus_avg: mean(&above),
        avg_avg_minus_min: mean(&below),
        max_max_minus_avg: max(&above),
        max_avg_minus_min: max(&below),
    })
}

/// Loss sequences from a multi-seed result; every record must carry a loss.
pub fn loss_sequences(result: &ExperimentResult) -> Result<Vec<Vec<f64>>> {
    result
        .runs
        .iter()
        .map(|r| {
            r.trace
                .iter()
                .map(|rec| {
                    rec.loss.ok_or_else(|| {
                        Error::Config(format!(
                            "seed {}: iteration {} has no loss; use eval_every = 1",
                            r.seed, rec.t
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

/// Loss after the most recent evaluated iteration whose cumulative
/// gradient-component count is within `budget` (`initial_loss` before the
/// first iteration fits).
pub fn loss_at_budget(initial_loss: f64, trace: &[TraceRecord], budget: u64) -> f64 {
    let mut loss = initial_loss;
    for r in trace {
        if r.grad_components > budget {
            break;
        }
        if let Some(l) = r.loss {
            loss = l;
        }
    }
    loss
}

fn mean_loss_at_budget(result: &ExperimentResult, budget: u64) -> f64 {
    let n = result.runs.len() as f64;
    result
        .runs
        .iter()
        .map(|r| loss_at_budget(r.initial_loss, &r.trace, budget))
        .sum::<f64>()
        / n
}

fn mean_loss_at_iteration(result: &ExperimentResult, t: usize) -> Option<f64> {
    let mut sum = 0.0;
    for r in &result.runs {
        sum += r.trace.get(t)?.loss?;
    }
    Some(sum / result.runs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetPoint {
    pub budget: u64,
    pub loss_a: f64,
    pub loss_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub label_a: String,
    pub label_b: String,
    /// `(t, mean loss a, mean loss b, grad components a, grad components b,
    /// comm bytes a, comm bytes b)`; losses averaged over seeds.
    pub per_iteration: Vec<IterationRow>,
    pub per_budget: Vec<BudgetPoint>,
    /// First budget at which the sign of `loss_a − loss_b` changes.
    pub crossing: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRow {
    pub t: u64,
    pub loss_a: Option<f64>,
    pub loss_b: Option<f64>,
    pub grad_components_a: Option<u64>,
    pub grad_components_b: Option<u64>,
    pub comm_bytes_a: Option<u64>,
    pub comm_bytes_b: Option<u64>,
}

fn same_dataset(a: &ExperimentSpec, b: &ExperimentSpec) -> Result<()> {
    if a.dataset != b.dataset {
        return Err(Error::DatasetMismatch("datasets differ".into()));
    }
    if a.seeds != b.seeds {
        return Err(Error::DatasetMismatch(format!(
            "seed lists differ: {:?} vs {:?}",
            a.seeds, b.seeds
        )));
    }
    Ok(())
}

/// Builds the comparison from finished runs, sampling both budget curves on
/// `points` evenly spaced budgets up to the larger total budget.
pub fn compare_results(
    label_a: &str,
    a: &ExperimentResult,
    label_b: &str,
    b: &ExperimentResult,
    points: usize,
) -> ComparisonReport {
    let iterations = a
        .runs
        .iter()
        .chain(&b.runs)
        .map(|r| r.trace.len())
        .max()
        .unwrap_or(0);
    let first =
        |res: &ExperimentResult, t: usize| res.runs.first().and_then(|r| r.trace.get(t).cloned());
    let per_iteration = (0..iterations)
        .map(|t| {
            let ra = first(a, t);
            let rb = first(b, t);
            IterationRow {
                t: t as u64 + 1,
                loss_a: mean_loss_at_iteration(a, t),
                loss_b: mean_loss_at_iteration(b, t),
                grad_components_a: ra.as_ref().map(|r| r.grad_components),
                grad_components_b: rb.as_ref().map(|r| r.grad_components),
                comm_bytes_a: ra.as_ref().map(|r| r.comm_bytes),
                comm_bytes_b: rb.as_ref().map(|r| r.comm_bytes),
            }
        })
        .collect();

    let total = |res: &ExperimentResult| {
        res.runs
            .iter()
            .filter_map(|r| r.trace.last().map(|x| x.grad_components))
            .max()
            .unwrap_or(0)
    };
    let max_budget = total(a).max(total(b));
    let points = points.max(1) as u64;
    let per_budget: Vec<BudgetPoint> = (0..=points)
        .map(|i| {
            let budget = max_budget * i / points;
            BudgetPoint {
                budget,
                loss_a: mean_loss_at_budget(a, budget),
                loss_b: mean_loss_at_budget(b, budget),
            }
        })
        .collect();
    let mut crossing = None;
    let mut prev_sign = 0.0f64;
    for pt in &per_budget {
        let diff = pt.loss_a - pt.loss_b;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        if sign != 0.0 {
            if prev_sign != 0.0 && sign != prev_sign {
                crossing = Some(pt.budget);
                break;
            }
            prev_sign = sign;
        }
    }
    ComparisonReport {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        per_iteration,
        per_budget,
        crossing,
    }
}

/// Runs both specs on their shared dataset and seeds.
pub fn compare(a: &ExperimentSpec, b: &ExperimentSpec) -> Result<ComparisonReport> {
    same_dataset(a, b)?;
    let grid = a.dataset.load()?;
    let ra = run_seeds(a, &grid)?;
    let rb = run_seeds(b, &grid)?;
    Ok(compare_results(
        a.algorithm.name(),
        &ra,
        b.algorithm.name(),
        &rb,
        100,
    ))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonReport {
    pub fn iteration_csv(&self) -> String {
        let (a, b) = (&self.label_a, &self.label_b);
        let mut s = format!(
            "t,loss_{a},loss_{b},grad_components_{a},grad_components_{b},comm_bytes_{a},comm_bytes_{b}\n"
        );
        for r in &self.per_iteration {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.t,
                opt(r.loss_a),
                opt(r.loss_b),
                opt(r.grad_components_a),
                opt(r.grad_components_b),
                opt(r.comm_bytes_a),
                opt(r.comm_bytes_b)
            )
            .unwrap();
        }
        s
    }

    pub fn budget_csv(&self) -> String {
        let mut s = format!(
            "grad_components,loss_{},loss_{}\n",
            self.label_a, self.label_b
        );
        for p in &self.per_budget {
            writeln!(s, "{},{},{}", p.budget, p.loss_a, p.loss_b).unwrap();
        }
        if let Some(c) = self.crossing {
            writeln!(s, "# first crossing at grad_components={c}").unwrap();
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("compare_iterations.csv"), self.iteration_csv())?;
        fs::write(dir.join("compare_budget.csv"), self.budget_csv())?;
        Ok(())
    }
}

/// Inputs of the admissibility report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsInput {
    pub constants: TheoryConstants,
    pub inner_steps: usize,
    pub feature_blocks: usize,
    pub obs_partitions: usize,
    pub n_features: usize,
    pub c_min: usize,
    /// Rate used for the feature-sample bound.
    pub gamma_next: f64,
}

fn describe(name: &str, c: &Constant) -> String {
    let origin = match c.provenance {
        crate::theory::Provenance::Measured => "measured",
        crate::theory::Provenance::Supplied => "supplied",
    };
    format!("{name} = {:.6e} ({origin})", c.value)
}

/// Human-readable admissibility intervals, computed for the raw constants
/// and, when `M3 < 1`, again with `M3` clamped to 1. Parts whose constants
/// are out of range are reported as unavailable.
pub fn bounds_report(input: &BoundsInput) -> String {
    let mut out = String::new();
    let tc = &input.constants;
    writeln!(out, "constants:").unwrap();
    for (name, c) in [
        ("M1", &tc.m1),
        ("M2", &tc.m2),
        ("M3", &tc.m3),
        ("M4", &tc.m4),
        ("B", &tc.b),
    ] {
        writeln!(out, "  {}", describe(name, c)).unwrap();
    }
    writeln!(
        out,
        "shape: M={} c_min={} L={} Q={} P={}",
        input.n_features,
        input.c_min,
        input.inner_steps,
        input.feature_blocks,
        input.obs_partitions
    )
    .unwrap();
    let mut variants = vec![("raw", *tc)];
    if tc.m3_below_one() {
        writeln!(
            out,
            "note: M3 < 1; bounds are also shown with M3 clamped to 1"
        )
        .unwrap();
        variants.push(("M3 clamped to 1", tc.with_m3_clamped()));
    }
    for (label, k) in variants {
        writeln!(out, "[{label}]").unwrap();
        match b_lower_bound(input.n_features, input.c_min, input.gamma_next, &k) {
            Ok(b) if b.count >= input.n_features => writeln!(
                out,
                "  diminishing rate: b^t must equal M ({})",
                input.n_features
            )
            .unwrap(),
            Ok(b) => writeln!(
                out,
                "  diminishing rate: b^t in [{}, {}] (real lower bound {:.6})",
                b.count, input.n_features, b.real
            )
            .unwrap(),
            Err(e) => writeln!(out, "  diminishing rate: unavailable ({e})").unwrap(),
        }
        match min_inner_batch(input.n_features, input.c_min, &k) {
            Ok(l) => writeln!(out, "  1/t rate: L >= {} (real {:.6})", l.count, l.real).unwrap(),
            Err(e) => writeln!(out, "  1/t rate: unavailable ({e})").unwrap(),
        }
        let lambda = lambda_rate(input.n_features, input.inner_steps, &k);
        writeln!(out, "  lambda = 2*M2*L/M = {lambda:.6}").unwrap();
        if !lambda_precondition_holds(lambda) {
            writeln!(
                out,
                "  WARNING: lambda <= 1, the O(1/t) rate argument's precondition fails for L={}",
                input.inner_steps
            )
            .unwrap();
        }
        match constant_rate_bound(
            input.inner_steps,
            input.feature_blocks,
            input.obs_partitions,
            input.n_features,
            input.c_min,
            &k,
        ) {
            Ok(r) => {
                writeln!(
                    out,
                    "  constant rate: gamma in (0, {:.6e}) = min{{1, 1/(L*M3*Q*P) = {:.6e}, gamma1 = {:.6e}, gamma2 = {:.6e}}}",
                    r.gamma_max, r.parts.lip, r.parts.g1, r.parts.g2
                )
                .unwrap();
                let plateau = strong_convexity_gap_bound(
                    input.n_features,
                    input.inner_steps,
                    &k,
                    r.gamma_max,
                );
                writeln!(
                    out,
                    "  error neighbourhood at gamma_max: {:.6e} [{}]",
                    plateau.value, plateau.label
                )
                .unwrap();
            }
            Err(e) => writeln!(out, "  constant rate: unavailable ({e})").unwrap(),
        }
    }
    out
}
