use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use dddopt::engine::RunConfig;
use dddopt::error::{Error, Result};
use dddopt::harness::{
    bounds_report, compare, loss_sequences, run_experiment, sweep_stats, Algorithm, BoundsInput,
    DatasetSpec, ExperimentSpec,
};
use dddopt::io::{save_dataset, DataFormat};
use dddopt::losses::{estimate_constants, strong_convexity_modulus, LossKind, LossModel};
use dddopt::sampling::PiPolicy;
use dddopt::synthetic::{generate_regression, generate_synthetic};
use dddopt::theory::{Constant, Schedule, ScheduleKind, TheoryConstants};

#[derive(Parser)]
#[command(
    name = "dddopt",
    version,
    about = "Doubly distributed SVRG-style optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic standardized dataset.
    Generate(GenerateArgs),
    /// Run one experiment (one trace per seed).
    Train(RunArgs),
    /// Run the configured algorithm and RADiSA on the same data and seeds.
    Compare(CompareArgs),
    /// Run several seeds and report the seed-spread statistics.
    Sweep(RunArgs),
    /// Print the admissible sample sizes and learning rates.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long = "N")]
    n_obs: usize,
    #[arg(long = "M")]
    n_features: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    flip_prob: f64,
    /// Produce regression targets with this noise level instead of labels.
    #[arg(long)]
    regression_noise: Option<f64>,
    #[arg(long, default_value = "dense")]
    format: DataFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Dataset file; without it a synthetic set is generated.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<DataFormat>,
    /// Feature count for sparse files (default: largest index seen).
    #[arg(long = "n-features")]
    n_features: Option<usize>,
    /// Treat labels as real-valued targets.
    #[arg(long)]
    regression: bool,
    /// Synthetic shape as `N,M`.
    #[arg(long, value_parser = parse_shape)]
    generate: Option<(usize, usize)>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    flip_prob: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long = "P")]
    p: Option<usize>,
    #[arg(long = "Q")]
    q: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "T")]
    t: Option<u64>,
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    b_frac: Option<f64>,
    #[arg(long)]
    c_frac: Option<f64>,
    #[arg(long)]
    d_frac: Option<f64>,
    #[arg(long)]
    pi: Option<PiPolicy>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seed list, or `a..b` for an inclusive range.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    diagnostics: bool,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record 0 for elapsed_ms so traces are byte-reproducible.
    #[arg(long)]
    no_wall_clock: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Second experiment file; defaults to RADiSA on the same settings.
    #[arg(long)]
    against: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Radius of the iterate region (M1 = 2 × radius when measuring).
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    c_min: Option<usize>,
    #[arg(long = "c-frac")]
    c_frac: Option<f64>,
    #[arg(long = "L", default_value_t = 10)]
    l: usize,
    #[arg(long = "Q", default_value_t = 3)]
    q: usize,
    #[arg(long = "P", default_value_t = 5)]
    p: usize,
    #[arg(long = "M1")]
    m1: Option<f64>,
    #[arg(long = "M2")]
    m2: Option<f64>,
    #[arg(long = "M3")]
    m3: Option<f64>,
    #[arg(long = "M4")]
    m4: Option<f64>,
    #[arg(long = "B", default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma_next: f64,
}

/// Experiment file layout; every section is optional.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: Option<DatasetSpec>,
    algorithm: Option<Algorithm>,
    config: Option<RunConfig>,
    seeds: Option<Vec<u64>>,
    output: Option<PathBuf>,
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (n, m) = s.split_once(',').ok_or("expected N,M")?;
    let n = n.trim().parse().map_err(|e| format!("N: {e}"))?;
    let m = m.trim().parse().map_err(|e| format!("M: {e}"))?;
    Ok((n, m))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect()
}

fn dataset_from_args(data: &DataArgs, base: Option<DatasetSpec>) -> Result<DatasetSpec> {
    if let Some(path) = &data.dataset {
        let format = match data.format {
            Some(DataFormat::DenseBinary) => "dense",
            Some(DataFormat::SparseText) => "sparse",
            None if path.extension().is_some_and(|e| e == "bin") => "dense",
            None => "sparse",
        };
        return Ok(DatasetSpec::File {
            path: path.clone(),
            format: format.to_string(),
            n_features: data.n_features,
            regression: data.regression,
        });
    }
    if let Some((n_obs, n_features)) = data.generate {
        return Ok(DatasetSpec::Generate {
            n_obs,
            n_features,
            seed: data.data_seed.unwrap_or(1),
            flip_prob: data.flip_prob.unwrap_or(0.01),
            regression_noise: data.regression.then_some(0.1),
        });
    }
    base.ok_or_else(|| {
        Error::Config("no dataset: pass --dataset, --generate N,M or a config file".into())
    })
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let file = match &args.config {
        Some(p) => read_config(p)?,
        None => ConfigFile::default(),
    };
    let mut cfg = file.config.unwrap_or_default();
    macro_rules! set {
        ($src:expr, $dst:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(args.p, cfg.obs_partitions);
    set!(args.q, cfg.feature_blocks);
    set!(args.l, cfg.inner_steps);
    set!(args.t, cfg.outer_iterations);
    set!(args.b_frac, cfg.b_frac);
    set!(args.c_frac, cfg.c_frac);
    set!(args.d_frac, cfg.d_frac);
    set!(args.pi, cfg.pi_policy);
    set!(args.loss, cfg.loss.kind);
    set!(args.l2, cfg.loss.l2_reg);
    set!(args.eval_every, cfg.eval_every);
    if let Some(kind) = args.schedule {
        cfg.schedule = match kind {
            ScheduleKind::InverseT => Schedule::inverse_t(),
            ScheduleKind::Experiment => Schedule::experiment(),
            ScheduleKind::Constant => Schedule::constant(cfg.schedule.gamma0),
        };
    }
    set!(args.gamma0, cfg.schedule.gamma0);
    if args.diagnostics {
        cfg.diagnostics = true;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if args.no_wall_clock {
        cfg.wall_clock = false;
    }
    let seeds = match (&args.seeds, args.seed) {
        (Some(s), _) => parse_seeds(s)?,
        (None, Some(s)) => vec![s],
        (None, None) => file.seeds.unwrap_or_else(|| vec![cfg.seed]),
    };
    if let Some(&first) = seeds.first() {
        cfg.seed = first;
    }
    Ok(ExperimentSpec {
        dataset: dataset_from_args(&args.data, file.dataset)?,
        algorithm: args.algorithm.or(file.algorithm).unwrap_or_default(),
        config: cfg,
        seeds,
        output: args
            .out
            .clone()
            .or(file.output)
            .unwrap_or_else(|| PathBuf::from("dddopt-out")),
    })
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let grid = match a.regression_noise {
        Some(noise) => generate_regression(a.n_obs, a.n_features, a.seed, noise)?.grid,
        None => {
            let data = generate_synthetic(a.n_obs, a.n_features, a.seed, a.flip_prob)?;
            log::info!(
                "{} labels flipped",
                data.flipped.iter().filter(|&&f| f).count()
            );
            data.grid
        }
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_dataset(&grid, &a.out, a.format)?;
    println!(
        "wrote {} ({} x {})",
        a.out.display(),
        grid.n_obs(),
        grid.n_features()
    );
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let spec = build_spec(args)?;
    let result = run_experiment(&spec)?;
    for run in &result.runs {
        match run.final_loss {
            Some(l) => println!("seed {}: final loss {l:.10}", run.seed),
            None => println!("seed {}: no evaluated iterations", run.seed),
        }
    }
    println!("traces written to {}", spec.output.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let mut spec = build_spec(args)?;
    spec.config.eval_every = 1;
    let result = run_experiment(&spec)?;
    let stats = sweep_stats(&loss_sequences(&result)?)?;
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    fs::write(spec.output.join("sweep_stats.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let a = build_spec(&args.run)?;
    let b = match &args.against {
        Some(path) => build_spec(&RunArgs {
            config: Some(path.clone()),
            data: args.run.data.clone(),
            seeds: args.run.seeds.clone(),
            seed: args.run.seed,
            out: Some(a.output.clone()),
            threads: args.run.threads,
            no_wall_clock: args.run.no_wall_clock,
            ..RunArgs::default()
        })?,
        None => ExperimentSpec {
            algorithm: Algorithm::Radisa,
            ..a.clone()
        },
    };
    let report = compare(&a, &b)?;
    report.write(&a.output)?;
    match report.crossing {
        Some(c) => println!("first crossing at grad_components={c}"),
        None => println!("curves do not cross"),
    }
    println!("comparison written to {}", a.output.display());
    Ok(())
}

fn cmd_bounds(a: &BoundsArgs) -> Result<()> {
    let have_data = a.data.dataset.is_some() || a.data.generate.is_some();
    let mut measured: Option<(TheoryConstants, usize)> = None;
    if have_data {
        let grid = dataset_from_args(&a.data, None)?.load()?;
        let model = LossModel::new(a.loss.unwrap_or(LossKind::Hinge)).with_l2(a.l2);
        let w = vec![0.0; grid.n_features()];
        let est = estimate_constants(&model, &grid, &w)?;
        let tc = TheoryConstants {
            m1: Constant::supplied(2.0 * a.radius),
            m2: Constant::measured(strong_convexity_modulus(&model, &grid)?),
            m3: Constant::measured(est.m3),
            m4: Constant::measured(est.m4_sq.max(0.0).sqrt()),
            b: Constant::supplied(a.b),
        };
        measured = Some((tc, grid.n_features()));
    }
    let (mut tc, data_m) = measured.unwrap_or((
        TheoryConstants::supplied(2.0 * a.radius, 0.0, 1.0, 0.0, a.b),
        0,
    ));
    for (flag, slot) in [
        (a.m1, &mut tc.m1),
        (a.m2, &mut tc.m2),
        (a.m3, &mut tc.m3),
        (a.m4, &mut tc.m4),
    ] {
        if let Some(v) = flag {
            *slot = Constant::supplied(v);
        }
    }
    let m = a.m.unwrap_or(data_m);
    if m == 0 {
        return Err(Error::Config(
            "feature count unknown: pass --M or a dataset".into(),
        ));
    }
    let c_min = match (a.c_min, a.c_frac) {
        (Some(c), _) => c,
        (None, Some(f)) => ((f * m as f64).round() as usize).clamp(1, m),
        (None, None) => m,
    };
    print!(
        "{}",
        bounds_report(&BoundsInput {
            constants: tc,
            inner_steps: a.l,
            feature_blocks: a.q,
            obs_partitions: a.p,
            n_features: m,
            c_min,
            gamma_next: a.gamma_next,
        })
    );
    Ok(())
}

fn error_record(err: &Error) -> String {
    serde_json::json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (result, out_dir) = match &cli.command {
        Command::Generate(a) => (cmd_generate(a), None),
        Command::Train(a) => (cmd_train(a), a.out.clone()),
        Command::Sweep(a) => (cmd_sweep(a), a.out.clone()),
        Command::Compare(a) => (cmd_compare(a), a.run.out.clone()),
        Command::Bounds(a) => (cmd_bounds(a), None),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = error_record(&err);
            eprintln!("{record}");
            if let Some(dir) = out_dir {
                if fs::create_dir_all(&dir).is_ok() {
                    let _ = fs::write(dir.join("error.json"), &record);
                }
            }
            ExitCode::from(2)
        }
    }
}
