//! Command-line front end: fit, evaluate, reconstruct, sweep and inspect
//! bilateral 2D projection models.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 unreadable or malformed
//! data, 4 numerical failure. Nothing is written when a command fails.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use r2dpca::dataset::{split, write_pgm, LabeledDataset, SplitSpec};
use r2dpca::harness::{
    figure_csv, parse_norm, run_accuracy_sweep, run_toy_generalization, sweep_csv, DataSource, ExperimentPlan,
    MethodToml, RunConfig, ToyConfig,
};
use r2dpca::lp::UnilateralBasis;
use r2dpca::model_io::{load_model, save_model, ModelFile};
use r2dpca::recognition::{
    accuracy, classify, extract_feature, extract_features, reconstruct, reconstruction_ratio, BilateralModel,
    MatrixNorm,
};
use r2dpca::relaxed::{weighting_vector, WeightFn};
use r2dpca::{Error, Result};

#[derive(Parser)]
#[command(name = "r2dpca", version, about = "Relaxed and generalized 2D principal component analysis")]
struct Cli {
    /// Run on a single thread.
    #[arg(long, global = true)]
    serial: bool,
    /// Print diagnostics to stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write it to a binary model file.
    Fit(FitArgs),
    /// Classify probe images against a gallery with a saved model.
    Eval(EvalArgs),
    /// Reconstruct images from their features and report reconstruction ratios.
    Reconstruct(ReconstructArgs),
    /// Run an accuracy sweep described by a plan file.
    Sweep(SweepArgs),
    /// Run the two-Gaussian generalization study.
    Toy(ToyArgs),
    /// Print the per-class weighting vector of a dataset.
    Weights(WeightsArgs),
}

/// Dataset selection shared by the single-run commands.
#[derive(Args)]
struct DataArgs {
    /// Plan file supplying defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset: a class-per-subdirectory PGM tree, a `.csv` snapshot, or `idx:IMAGES,LABELS`.
    #[arg(long)]
    data: Option<String>,
    /// Use only a seeded split with this many training images per class.
    #[arg(long)]
    split: Option<usize>,
    /// Split seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// 2dpca-eig | 2dpca | 2dpca-l1 | 2dpcal1-s | g2dpca | r2dpca.
    #[arg(long, alias = "variant")]
    method: Option<String>,
    #[arg(long)]
    s: Option<f64>,
    /// Norm exponent; `inf` is accepted.
    #[arg(long)]
    p: Option<f64>,
    /// Relaxation parameter; implies `--method r2dpca` when no method is given.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// identity | shifted.
    #[arg(long)]
    weight_fn: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Random initialization seed; the default is the spectral start.
    #[arg(long)]
    init_seed: Option<u64>,
    /// verbatim | orthonormalized.
    #[arg(long)]
    deflation: Option<String>,
    /// Number of left and right vectors.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    /// Output model file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Gallery dataset; with `--split` the training part of `--data` is used instead.
    #[arg(long)]
    gallery: Option<String>,
    /// frobenius | spectral.
    #[arg(long)]
    norm: Option<String>,
    /// Write per-probe predictions to this CSV file.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Leading left vectors to use; defaults to all stored.
    #[arg(long)]
    k1: Option<usize>,
    /// Leading right vectors to use; defaults to all stored.
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    norm: Option<String>,
    /// Directory receiving the reconstructed images and `ratios.csv`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Plan file.
    plan: PathBuf,
    /// Overrides the plan's results path.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Overrides the plan's figure path.
    #[arg(long)]
    figure: Option<PathBuf>,
    /// Record fit times.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ToyArgs {
    /// Number of seeds, starting at 0.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    /// Training points per class.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Write the table here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    weight_fn: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidSpec(_) => 2,
        Error::InvalidInput(_) | Error::Format { .. } | Error::Io { .. } => 3,
        Error::NumericFailure(_) | Error::DegenerateDirection(_) | Error::UndefinedRatio => 4,
    }
}

fn join(xs: impl IntoIterator<Item = impl std::fmt::Display>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes through a sibling temporary file so a failed write leaves nothing behind.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = write(&tmp).and_then(|()| std::fs::rename(&tmp, path).map_err(|e| Error::Io { path: path.into(), source: e }));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |tmp| r2dpca::harness::write_text(tmp, text))
}

struct Loaded {
    config: RunConfig,
    /// Training part when split, otherwise the whole dataset.
    train: LabeledDataset,
    /// Held-out part when split.
    test: Option<LabeledDataset>,
}

fn load_data(args: &DataArgs, verbose: u8) -> Result<Loaded> {
    let config = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let source = match &args.data {
        Some(s) => s.parse::<DataSource>()?,
        None => config.source.clone().ok_or_else(|| spec_err("no dataset given (--data or --config)"))?,
    };
    let ds = source.load()?;
    if verbose > 0 {
        let (h, w) = ds.dims();
        eprintln!("loaded {} images of {h}x{w} in {} classes", ds.len(), ds.num_classes());
    }
    match args.split.or(config.per_class_train) {
        Some(n) => {
            let seed = args.seed.or(config.seed).unwrap_or(0);
            let (train, test) = split(&ds, &SplitSpec::uniform(n, seed))?;
            Ok(Loaded {
                config,
                train,
                test: Some(test),
            })
        }
        None => Ok(Loaded {
            config,
            train: ds,
            test: None,
        }),
    }
}

fn resolve_norm(flag: Option<&str>, config: &RunConfig) -> Result<MatrixNorm> {
    match flag {
        Some(s) => parse_norm(s),
        None => Ok(config.norm.unwrap_or_default()),
    }
}

fn describe_basis(out: &mut String, side: &str, basis: &UnilateralBasis) {
    let _ = writeln!(out, "objectives_{side}={}", join(&basis.objectives));
    let _ = writeln!(out, "iterations_{side}={}", join(&basis.iterations));
}

fn cmd_fit(args: FitArgs, verbose: u8) -> Result<String> {
    let loaded = load_data(&args.data, verbose)?;
    let mut m = loaded.config.method.clone().unwrap_or(MethodToml {
        method: "g2dpca".into(),
        ..MethodToml::default()
    });
    match (&args.method, args.gamma) {
        (Some(name), _) => m.method = name.clone(),
        (None, Some(_)) if loaded.config.method.is_none() => m.method = "r2dpca".into(),
        _ => {}
    }
    let overrides = [
        (&mut m.s, args.s),
        (&mut m.p, args.p),
        (&mut m.gamma, args.gamma),
        (&mut m.rho, args.rho),
        (&mut m.epsilon, args.epsilon),
        (&mut m.tol, args.tol),
    ];
    for (slot, flag) in overrides {
        if flag.is_some() {
            *slot = flag;
        }
    }
    m.weight_fn = args.weight_fn.or(m.weight_fn);
    m.max_iter = args.max_iter.or(m.max_iter);
    m.init_seed = args.init_seed.or(m.init_seed);
    m.deflation = args.deflation.or(m.deflation);
    let entry = m.build()?;

    let (h, w) = loaded.train.dims();
    let k = args.k.or(loaded.config.k);
    let k1 = args.k1.or(k).unwrap_or(h);
    let k2 = args.k2.or(k).unwrap_or(w);
    if k1 == 0 || k2 == 0 || k1 > h || k2 > w {
        return Err(spec_err(format!("need 1 <= k1 <= {h} and 1 <= k2 <= {w}, got k1={k1}, k2={k2}")));
    }
    if verbose > 0 {
        eprintln!("fitting {} with k1={k1}, k2={k2}", entry.method.name());
    }
    let model = entry.method.fit(&loaded.train, k1, k2)?;
    write_atomic(&args.out, |tmp| save_model(tmp, &model))?;

    let mut out = String::new();
    let _ = writeln!(out, "model={}", args.out.display());
    let _ = writeln!(out, "kind={}", model.kind_name());
    let _ = writeln!(out, "k1={k1}");
    let _ = writeln!(out, "k2={k2}");
    match &model {
        ModelFile::Pca2d(p) => {
            let _ = writeln!(out, "eigenvalues_left={}", join(&p.eigvals_left));
            let _ = writeln!(out, "eigenvalues_right={}", join(&p.eigvals_right));
        }
        ModelFile::Lp(lp) => {
            describe_basis(&mut out, "left", &lp.left);
            describe_basis(&mut out, "right", &lp.right);
        }
        ModelFile::Relaxed(r) => {
            let _ = writeln!(out, "omega={}", join(&r.weights.omega));
            describe_basis(&mut out, "left", &r.left);
            describe_basis(&mut out, "right", &r.right);
        }
    }
    Ok(out)
}

fn cmd_eval(args: EvalArgs, verbose: u8) -> Result<String> {
    let model = load_model(&args.model)?;
    let loaded = load_data(&args.data, verbose)?;
    let norm = resolve_norm(args.norm.as_deref(), &loaded.config)?;
    let (gallery_ds, probes) = match (&args.gallery, loaded.test) {
        (Some(g), _) => (g.parse::<DataSource>()?.load()?, loaded.train),
        (None, Some(test)) => (loaded.train, test),
        (None, None) => (loaded.train.clone(), loaded.train),
    };
    if probes.is_empty() {
        return Err(Error::InvalidInput("no probe images".into()));
    }
    let gallery = extract_features(&model, &gallery_ds)?;
    let images: Vec<_> = probes.images().cloned().collect();
    let preds = classify(&gallery, &images, &model, norm)?;
    let truth = probes.labels();

    if let Some(path) = &args.predictions {
        let mut csv = String::from("probe_index,predicted_label,true_label,distance\n");
        for (i, (p, t)) in preds.iter().zip(&truth).enumerate() {
            let _ = writeln!(csv, "{i},{},{t},{:.6}", p.label, p.distance);
        }
        write_text(path, &csv)?;
    }
    Ok(format!("accuracy={:.6}\n", accuracy(&preds, &truth)))
}

fn cmd_reconstruct(args: ReconstructArgs, verbose: u8) -> Result<String> {
    let stored = load_model(&args.model)?;
    let (k1_max, k2_max) = (stored.left_basis().cols(), stored.right_basis().cols());
    let k1 = args.k1.unwrap_or(k1_max);
    let k2 = args.k2.unwrap_or(k2_max);
    let model = stored.truncated(k1, k2)?;
    let loaded = load_data(&args.data, verbose)?;
    let norm = resolve_norm(args.norm.as_deref(), &loaded.config)?;

    let mut csv = String::from("file,k1,k2,ratio\n");
    let mut images = Vec::with_capacity(loaded.train.len());
    for (i, sample) in loaded.train.samples().iter().enumerate() {
        let rec = reconstruct(&model, &extract_feature(&model, &sample.image)?)?;
        let ratio = reconstruction_ratio(&sample.image, &rec, norm)?;
        let name = format!("{i:05}_class{}.pgm", sample.label);
        let _ = writeln!(csv, "{name},{k1},{k2},{ratio:.6}");
        images.push((name, rec));
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    for (name, rec) in &images {
        write_atomic(&args.out_dir.join(name), |tmp| write_pgm(tmp, rec))?;
    }
    let table = args.out_dir.join("ratios.csv");
    write_text(&table, &csv)?;
    Ok(format!("images={}\nratios={}\n", images.len(), table.display()))
}

fn cmd_sweep(args: SweepArgs, verbose: u8) -> Result<String> {
    let mut plan = ExperimentPlan::from_file(&args.plan)?;
    plan.results = args.results.or(plan.results);
    plan.figure = args.figure.or(plan.figure);
    plan.timing |= args.timing;
    if verbose > 0 {
        eprintln!(
            "sweeping {} methods x {} feature counts x {} seeds",
            plan.methods.len(),
            plan.ks.len(),
            plan.seeds.len()
        );
    }
    let rows = run_accuracy_sweep(&plan)?;
    let results = sweep_csv(&rows);
    let mut out = String::new();
    match &plan.results {
        Some(path) => {
            write_text(path, &results)?;
            let _ = writeln!(out, "results={}", path.display());
        }
        None => out.push_str(&results),
    }
    if let Some(path) = &plan.figure {
        write_text(path, &figure_csv(&rows))?;
        let _ = writeln!(out, "figure={}", path.display());
    }
    let failed = rows.iter().filter(|r| r.accuracy.is_err()).count();
    if plan.results.is_some() {
        let _ = writeln!(out, "rows={}", rows.len());
        let _ = writeln!(out, "failed={failed}");
    } else if failed > 0 {
        eprintln!("{failed} sweep point(s) failed");
    }
    Ok(out)
}

fn cmd_toy(args: ToyArgs) -> Result<String> {
    let default = ToyConfig::default();
    let cfg = ToyConfig {
        n: args.n.unwrap_or(default.n),
        gamma: args.gamma.unwrap_or(default.gamma),
        s: args.s.unwrap_or(default.s),
        p: args.p.unwrap_or(default.p),
        ..default
    };
    if args.seeds == 0 {
        return Err(spec_err("--seeds must be at least 1"));
    }
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let table = run_toy_generalization(&cfg, &seeds)?.to_string();
    match &args.out {
        Some(path) => {
            write_text(path, &table)?;
            Ok(format!("table={}\n", path.display()))
        }
        None => Ok(table),
    }
}

fn cmd_weights(args: WeightsArgs, verbose: u8) -> Result<String> {
    let loaded = load_data(&args.data, verbose)?;
    let weight_fn = match (args.weight_fn.as_deref(), args.epsilon) {
        (None | Some("identity"), None) => WeightFn::Identity,
        (Some("shifted"), eps) => WeightFn::Shifted(eps.unwrap_or(0.0)),
        (None | Some("identity"), Some(_)) => return Err(spec_err("--epsilon requires --weight-fn shifted")),
        (Some(other), _) => return Err(spec_err(format!("unknown weight function {other:?}"))),
    };
    let wv = weighting_vector(&loaded.train, weight_fn)?;
    Ok(format!(
        "omega={}\nlambda_max={}\nuniform_fallback={}\n",
        join(&wv.omega),
        join(&wv.lambda_max),
        wv.uniform_fallback
    ))
}

fn run(cli: Cli) -> Result<String> {
    if cli.serial {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .map_err(|e| Error::NumericFailure(format!("thread pool: {e}")))?;
    }
    let v = cli.verbose;
    match cli.command {
        Command::Fit(a) => cmd_fit(a, v),
        Command::Eval(a) => cmd_eval(a, v),
        Command::Reconstruct(a) => cmd_reconstruct(a, v),
        Command::Sweep(a) => cmd_sweep(a, v),
        Command::Toy(a) => cmd_toy(a),
        Command::Weights(a) => cmd_weights(a, v),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
