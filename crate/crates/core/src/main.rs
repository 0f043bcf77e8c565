//! Command-line front end: dataset generation, training, evaluation, and
//! prediction. One command per invocation; every file write is atomic
//! (write-then-rename); all randomness flows from explicit seeds.
//!
//! Exit codes: 0 success, 1 usage or invalid configuration, 2 unreadable or
//! ill-formed data, 3 numerical failure.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use linnet::dataset::{
    atomic_write, fmt_exact, load_csv, load_inputs_csv, normalize, sample_schwefel, save_csv,
};
use linnet::linsys::{build_increment_system, build_output_system, LinearSystem};
use linnet::model_file::{load_model, save_model, ModelFile};
use linnet::run_config::{config_hash, load_run_config, RunConfigFile};
use linnet::trainer::{
    evaluate, fit_output_layer, init_params, train, write_curve_csv, TrainConfig,
};
use linnet::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "linnet",
    version,
    about = "Single-hidden-layer regression networks trained by iterated linear-system solves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the benchmark objective into a dataset CSV
    Gen {
        /// Number of examples to draw
        #[arg(long)]
        points: usize,
        /// Input dimension
        #[arg(long)]
        dim: usize,
        /// Lower input bound
        #[arg(long, default_value_t = -500.0, allow_hyphen_values = true)]
        lo: f64,
        /// Upper input bound
        #[arg(long, default_value_t = 500.0, allow_hyphen_values = true)]
        hi: f64,
        /// Sampling seed
        #[arg(long)]
        seed: u64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on a dataset CSV
    Train {
        /// Run-configuration TOML; flags override its values
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training dataset CSV
        #[arg(long)]
        data: Option<PathBuf>,
        /// Hidden-layer width
        #[arg(long)]
        hidden: Option<usize>,
        /// Epoch budget
        #[arg(long)]
        epochs: Option<usize>,
        /// Initialization seed
        #[arg(long)]
        seed: Option<u64>,
        /// First-layer initialization scale
        #[arg(long)]
        init_scale: Option<f64>,
        /// Stop when mse improves by less than this between epochs
        #[arg(long)]
        min_mse_delta: Option<f64>,
        /// Stop when mse reaches this level
        #[arg(long)]
        target_mse: Option<f64>,
        /// Model output path
        #[arg(long)]
        out: Option<PathBuf>,
        /// Curve CSV output path
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Debug: write the initial-state output and increment systems
        /// (matrix columns, then the right-hand side) as CSVs in this
        /// directory
        #[arg(long, value_name = "DIR")]
        dump_systems: Option<PathBuf>,
    },
    /// Report a model's error on a dataset CSV
    Eval {
        /// Model file
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
    },
    /// Write predictions (raw units) for an inputs-only CSV
    Predict {
        /// Model file
        #[arg(long)]
        model: PathBuf,
        /// Inputs CSV: a header line, then one example per row; every
        /// column is an input
        #[arg(long)]
        data: PathBuf,
        /// Output CSV path (header `u`, one prediction per row)
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) => 1,
        Error::DimensionMismatch(_)
        | Error::DegenerateData(_)
        | Error::Parse { .. }
        | Error::Io { .. } => 2,
        Error::NonFinite(_) | Error::SolverFailure(_) => 3,
    }
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            points,
            dim,
            lo,
            hi,
            seed,
            out,
        } => cmd_gen(points, dim, lo, hi, seed, &out),
        Command::Train {
            config,
            data,
            hidden,
            epochs,
            seed,
            init_scale,
            min_mse_delta,
            target_mse,
            out,
            curve,
            dump_systems,
        } => {
            let t = TrainArgs {
                config,
                data,
                hidden,
                epochs,
                seed,
                init_scale,
                min_mse_delta,
                target_mse,
                out,
                curve,
                dump_systems,
            };
            cmd_train(t)
        }
        Command::Eval { model, data } => cmd_eval(&model, &data),
        Command::Predict { model, data, out } => cmd_predict(&model, &data, &out),
    }
}

fn cmd_gen(points: usize, dim: usize, lo: f64, hi: f64, seed: u64, out: &Path) -> Result<()> {
    let ds = sample_schwefel(points, dim, lo, hi, seed)?;
    save_csv(&ds, out)?;
    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in ds.targets.iter() {
        t_min = t_min.min(v);
        t_max = t_max.max(v);
    }
    println!(
        "wrote {}: {} points, {} inputs, target range [{}, {}]",
        out.display(),
        ds.len(),
        ds.input_dim(),
        fmt_exact(t_min),
        fmt_exact(t_max)
    );
    Ok(())
}

struct TrainArgs {
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    hidden: Option<usize>,
    epochs: Option<usize>,
    seed: Option<u64>,
    init_scale: Option<f64>,
    min_mse_delta: Option<f64>,
    target_mse: Option<f64>,
    out: Option<PathBuf>,
    curve: Option<PathBuf>,
    dump_systems: Option<PathBuf>,
}

/// Assemble the effective configuration and paths: defaults, then the
/// config file, then command-line flags.
fn effective_train_setup(args: &TrainArgs) -> Result<(TrainConfig, PathBuf, PathBuf, Option<PathBuf>)> {
    let file = match &args.config {
        Some(path) => load_run_config(path)?,
        None => RunConfigFile::default(),
    };
    let mut cfg = file.apply(&TrainConfig::default());
    if let Some(v) = args.hidden {
        cfg.hidden_units = v;
    }
    if let Some(v) = args.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.init_scale {
        cfg.init_scale = v;
    }
    if let Some(v) = args.min_mse_delta {
        cfg.min_mse_delta = v;
    }
    if let Some(v) = args.target_mse {
        cfg.target_mse = Some(v);
    }
    let data = args
        .data
        .clone()
        .or_else(|| file.data.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::InvalidConfig("no dataset given: pass --data or set `data` in the config file".into()))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.out.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::InvalidConfig("no model output given: pass --out or set `out` in the config file".into()))?;
    let curve = args
        .curve
        .clone()
        .or_else(|| file.curve.as_ref().map(PathBuf::from));
    Ok((cfg, data, out, curve))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (cfg, data, out, curve) = effective_train_setup(&args)?;
    cfg.validate()?;
    let ds = load_csv(&data)?;
    if let Some(dir) = &args.dump_systems {
        dump_initial_systems(&ds, &cfg, dir)?;
    }
    let result = train(&ds, &cfg)?;
    let model = ModelFile::new(
        result.params.clone(),
        result.norm.clone(),
        cfg.seed,
        config_hash(&cfg)?,
    )?;
    save_model(&model, &out)?;
    if let Some(curve_path) = &curve {
        write_curve_csv(&result.records, curve_path)?;
    }
    let last = result
        .records
        .last()
        .expect("a finished run always carries at least the initial record");
    println!("wrote model to {}", out.display());
    if let Some(curve_path) = &curve {
        println!("wrote curve to {}", curve_path.display());
    }
    println!("epochs run: {}", last.epoch);
    println!("final mse (normalized): {}", fmt_exact(last.mse));
    println!(
        "stop reason: {}",
        last.stop_reason
            .expect("the final record always carries the stop reason")
    );
    Ok(())
}

/// Render a system as CSV: matrix columns `a1..ak`, then the right-hand
/// side as a final `r` column.
fn system_to_csv(sys: &LinearSystem) -> String {
    let mut s = String::new();
    for j in 0..sys.ncols() {
        let _ = write!(s, "a{},", j + 1);
    }
    s.push_str("r\n");
    for i in 0..sys.nrows() {
        for j in 0..sys.ncols() {
            let _ = write!(s, "{},", fmt_exact(sys.matrix[(i, j)]));
        }
        let _ = writeln!(s, "{}", fmt_exact(sys.rhs[i]));
    }
    s
}

/// Write the systems the first epoch would see: the output-layer system at
/// the seeded initialization, and the increment system after that
/// initialization's output-layer fit.
fn dump_initial_systems(
    ds: &linnet::dataset::Dataset,
    cfg: &TrainConfig,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (xn, un, _) = normalize(ds)?;
    let params0 = init_params(ds.input_dim(), cfg)?;
    let output_sys = build_output_system(&params0, &xn, &un)?;
    atomic_write(&dir.join("output_system.csv"), &system_to_csv(&output_sys))?;
    let (fitted, _) = fit_output_layer(&params0, &xn, &un, &cfg.solver_epoch)?;
    let increment_sys = build_increment_system(&fitted, &xn, &un)?;
    atomic_write(
        &dir.join("increment_system.csv"),
        &system_to_csv(&increment_sys),
    )?;
    println!("wrote initial systems to {}", dir.display());
    Ok(())
}

fn cmd_eval(model_path: &Path, data: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let ds = load_csv(data)?;
    let m = evaluate(&model.params, &ds, &model.norm)?;
    println!("mse (normalized): {}", fmt_exact(m.mse_normalized));
    println!("mse (raw): {}", fmt_exact(m.mse_raw));
    println!("max abs error (raw): {}", fmt_exact(m.max_abs_raw));
    Ok(())
}

fn cmd_predict(model_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let inputs = load_inputs_csv(data)?;
    if inputs.ncols() != model.params.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} inputs, data file has {} columns",
            model.params.input_dim(),
            inputs.ncols()
        )));
    }
    let xn = model.norm.normalize_inputs(&inputs)?;
    let raw = model.norm.denormalize_targets(&model.params.predict_all(&xn));
    let mut s = String::from("u\n");
    for v in raw.iter() {
        let _ = writeln!(s, "{}", fmt_exact(*v));
    }
    atomic_write(out, &s)?;
    println!("wrote {} predictions to {}", raw.len(), out.display());
    Ok(())
}
