use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use swishnet::bench::{bench_compare, BenchConfig};
use swishnet::data::{
    load_cifar100_dir, load_cifar10_dir, load_mnist_dir, make_synthetic, make_synthetic_split, LabeledDataset,
    SyntheticSpec,
};
use swishnet::nn::{grad_check, GradCheckOptions};
use swishnet::optim::OptimizerConfig;
use swishnet::report::{
    bench_csv, decode_swnn, encode_pgm, encode_swnn, load_params, matrix_csv, metrics_csv, normalize_channel,
    parse_metrics_csv, plot_svg, swnn_precision, PlotSeries,
};
use swishnet::train::{
    extract_feature_maps, parse_rows, run_experiment_matrix, train_model_with, ActivationRow, Arch, ArchSpec,
    TrainConfig, TrainOutcome, TrainStatus,
};
use swishnet::{ActivationKind, Precision, Scalar};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "swishnet",
    version,
    about = "Train, check and benchmark small networks with SwishReLU and friends"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write metrics, parameters and the resolved config.
    Train(TrainArgs),
    /// Train one model per conv:dense activation row.
    Matrix(MatrixArgs),
    /// Compare backprop gradients with central differences in double precision.
    Gradcheck(GradcheckArgs),
    /// Time the activation kernels.
    Bench(BenchArgs),
    /// Export per-channel feature maps of a trained model as PGM images.
    Featmaps(FeatmapsArgs),
    /// Draw accuracy/loss curves from metrics CSV files as SVG.
    Plot(PlotArgs),
}

fn parse_kind(s: &str) -> Result<ActivationKind, String> {
    s.parse().map_err(|e: swishnet::Error| e.to_string())
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse().map_err(|e: swishnet::Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DatasetName {
    Mnist,
    Cifar10,
    Cifar100,
}

impl DatasetName {
    fn shape(self) -> [usize; 3] {
        match self {
            DatasetName::Mnist => ArchSpec::MNIST_INPUT,
            _ => ArchSpec::CIFAR_INPUT,
        }
    }

    fn classes(self) -> usize {
        match self {
            DatasetName::Cifar100 => 100,
            _ => 10,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar10",
            DatasetName::Cifar100 => "cifar100",
        }
    }

    fn env_var(self) -> &'static str {
        match self {
            DatasetName::Mnist => "SWISHNET_MNIST_DIR",
            DatasetName::Cifar10 => "SWISHNET_CIFAR10_DIR",
            DatasetName::Cifar100 => "SWISHNET_CIFAR100_DIR",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Single => Precision::Single,
            PrecisionArg::Double => Precision::Double,
        }
    }
}

#[derive(Args, Clone, Debug)]
struct ModelArgs {
    /// fcnn, cnn5, cnn5-small or vgg16.
    #[arg(long, value_parser = parse_arch, default_value = "fcnn")]
    arch: Arch,
    /// Activation for both layer groups.
    #[arg(long, value_parser = parse_kind)]
    act: Option<ActivationKind>,
    /// Activation after convolutions (overrides --act).
    #[arg(long, value_parser = parse_kind)]
    act_conv: Option<ActivationKind>,
    /// Activation after hidden dense layers (overrides --act).
    #[arg(long, value_parser = parse_kind)]
    act_dense: Option<ActivationKind>,
}

impl ModelArgs {
    fn activations(&self) -> (ActivationKind, ActivationKind) {
        let both = self.act.unwrap_or(ActivationKind::SwishRelu);
        (self.act_conv.unwrap_or(both), self.act_dense.unwrap_or(both))
    }
}

#[derive(Args, Clone, Debug)]
struct DataArgs {
    /// Defaults to mnist for fcnn and cifar10 otherwise.
    #[arg(long, value_enum)]
    dataset: Option<DatasetName>,
    /// Directory with the dataset files; falls back to SWISHNET_<NAME>_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use a seeded synthetic dataset shaped like --dataset.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 512)]
    synthetic_train: usize,
    #[arg(long, default_value_t = 128)]
    synthetic_test: usize,
    /// Keep only the first N training samples.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Keep only the first N test samples.
    #[arg(long)]
    test_limit: Option<usize>,
}

#[derive(Args, Clone, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Defaults to adam, or sgd for vgg16.
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerName>,
    #[arg(long)]
    lr: Option<f64>,
    /// SGD momentum.
    #[arg(long)]
    momentum: Option<f64>,
    /// Defaults: fcnn 30, cnn5 50, vgg16 100.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Stop after N epochs without a test-loss improvement (vgg16 default 5).
    #[arg(long)]
    early_stop_patience: Option<usize>,
    #[arg(long, conflicts_with = "early_stop_patience")]
    no_early_stop: bool,
    #[arg(long, value_enum, default_value = "single")]
    precision: PrecisionArg,
    /// Defaults to runs/<unix time>-<seed>.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Re-run from a resolved config.json; other run flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct MatrixArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated conv:dense pairs, e.g. relu:relu,relu:swishrelu.
    #[arg(long)]
    rows: String,
}

#[derive(Args, Clone, Debug, Serialize)]
struct GradcheckArgs {
    #[command(flatten)]
    #[serde(skip)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    /// Entries sampled per tensor; defaults to 200, or 2 for vgg16.
    #[arg(long)]
    max_entries: Option<usize>,
    #[arg(long)]
    no_kink_guard: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "relu,swish,swishrelu")]
    kinds: Vec<ActivationKind>,
    #[arg(long, default_value_t = 10_000_000)]
    elements: usize,
    #[arg(long, default_value_t = 9)]
    reps: usize,
    /// Fraction of negative inputs.
    #[arg(long, default_value_t = 0.5)]
    sign_mix: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct FeatmapsArgs {
    /// model.swnn written by train; its config.json must sit next to it.
    #[arg(long)]
    model: PathBuf,
    /// Test-set image to feed through the model.
    #[arg(long, default_value_t = 0)]
    image_index: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize)]
struct PlotArgs {
    /// Metrics CSV files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Comma-separated columns to draw.
    #[arg(long, default_value = "train_acc,test_acc")]
    metrics: String,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// How a run obtains its data.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct DataConfig {
    dataset: DatasetName,
    dir: Option<PathBuf>,
    synthetic: Option<SyntheticSpec>,
    synthetic_test: usize,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
}

/// Everything needed to repeat a train or matrix run.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RunConfig {
    command: String,
    arch: ArchSpec,
    data: DataConfig,
    train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<ActivationRow>>,
    threads: usize,
    out_dir: PathBuf,
}

fn default_out_dir(seed: u64) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    PathBuf::from("runs").join(format!("{secs}-{seed}"))
}

fn threads() -> Result<usize> {
    match std::env::var("SWISHNET_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| anyhow!("SWISHNET_THREADS must be a positive integer, got {v:?}")),
        Err(_) => Ok(1),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn resolve_run(args: &TrainArgs, command: &str) -> Result<RunConfig> {
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(out) = &args.out_dir {
            cfg.out_dir = out.clone();
        }
        cfg.command = command.into();
        return Ok(cfg);
    }
    let arch = args.model.arch;
    let dataset = args.data.dataset.unwrap_or(match arch {
        Arch::Fcnn => DatasetName::Mnist,
        _ => DatasetName::Cifar10,
    });
    let (conv, dense) = args.model.activations();
    let spec = ArchSpec::new(arch, conv, dense, dataset.classes()).with_input(dataset.shape());

    let optimizer = match (args.optimizer, arch.default_optimizer()) {
        (Some(OptimizerName::Adam), _) | (None, OptimizerConfig::Adam { .. }) => {
            let OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } = OptimizerConfig::adam_default()
            else {
                unreachable!()
            };
            if args.momentum.is_some() {
                bail!("--momentum applies to the sgd optimizer only");
            }
            OptimizerConfig::Adam {
                learning_rate: args.lr.unwrap_or(learning_rate),
                beta1,
                beta2,
                epsilon,
            }
        }
        (Some(OptimizerName::Sgd), _) | (None, OptimizerConfig::SgdMomentum { .. }) => {
            let OptimizerConfig::SgdMomentum {
                learning_rate,
                momentum,
            } = OptimizerConfig::sgd_default()
            else {
                unreachable!()
            };
            OptimizerConfig::SgdMomentum {
                learning_rate: args.lr.unwrap_or(learning_rate),
                momentum: args.momentum.unwrap_or(momentum),
            }
        }
    };
    let early_stopping = if args.no_early_stop {
        None
    } else {
        args.early_stop_patience.or(arch.default_patience())
    };
    let train = TrainConfig {
        optimizer,
        epochs: args.epochs.unwrap_or(arch.default_epochs()),
        batch_size: args.batch_size,
        seed: args.seed,
        early_stopping,
        precision: args.precision.into(),
    };
    train.validate()?;
    optimizer.build::<f32>()?;

    let synthetic = args.data.synthetic.then(|| SyntheticSpec {
        n: args.data.synthetic_train,
        shape: dataset.shape(),
        class_count: dataset.classes(),
        seed: args.seed,
        separable: true,
    });
    let dir = if synthetic.is_some() {
        None
    } else {
        let dir = args
            .data
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(dataset.env_var()).map(PathBuf::from))
            .ok_or_else(|| {
                anyhow!(
                    "no data for {}: pass --data-dir, set {}, or use --synthetic",
                    dataset.name(),
                    dataset.env_var()
                )
            })?;
        if !dir.is_dir() {
            bail!("data directory {} does not exist", dir.display());
        }
        Some(dir)
    };
    Ok(RunConfig {
        command: command.into(),
        arch: spec,
        data: DataConfig {
            dataset,
            dir,
            synthetic,
            synthetic_test: args.data.synthetic_test,
            train_limit: args.data.train_limit,
            test_limit: args.data.test_limit,
        },
        train,
        rows: None,
        threads: threads()?,
        out_dir: args.out_dir.clone().unwrap_or_else(|| default_out_dir(args.seed)),
    })
}

fn load_data<T: Scalar>(cfg: &DataConfig) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let (train, test) = match (&cfg.synthetic, &cfg.dir) {
        (Some(spec), _) => make_synthetic_split(spec, cfg.synthetic_test)?,
        (None, Some(dir)) => match cfg.dataset {
            DatasetName::Mnist => load_mnist_dir(dir)?,
            DatasetName::Cifar10 => load_cifar10_dir(dir)?,
            DatasetName::Cifar100 => load_cifar100_dir(dir)?,
        },
        (None, None) => bail!("no data source configured"),
    };
    let train = cfg.train_limit.map_or(train.clone(), |n| train.head(n));
    let test = cfg.test_limit.map_or(test.clone(), |n| test.head(n));
    if train.is_empty() || test.is_empty() {
        bail!("training and test sets must both be non-empty");
    }
    Ok((train, test))
}

fn status_code(outcome: &TrainOutcome) -> u8 {
    match outcome.status {
        TrainStatus::Diverged { .. } => EXIT_DIVERGED,
        _ => 0,
    }
}

fn describe(outcome: &TrainOutcome) -> String {
    let tail = outcome.last().map_or("no completed epochs".into(), |m| {
        format!(
            "train acc {:.4} loss {:.4}, test acc {:.4} loss {:.4}",
            m.train_accuracy, m.train_loss, m.test_accuracy, m.test_loss
        )
    });
    match outcome.status {
        TrainStatus::Completed => format!("completed: {tail}"),
        TrainStatus::EarlyStopped { epoch } => format!("early stop after epoch {epoch}: {tail}"),
        TrainStatus::Diverged { epoch } => format!("diverged in epoch {epoch}: {tail}"),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<u8> {
    let cfg = resolve_run(args, "train")?;
    match cfg.train.precision {
        Precision::Single => run_train::<f32>(&cfg),
        Precision::Double => run_train::<f64>(&cfg),
    }
}

fn run_train<T: Scalar>(cfg: &RunConfig) -> Result<u8> {
    prepare_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("config.json"), cfg)?;
    let (train, test) = load_data::<T>(&cfg.data)?;
    let mut model = cfg.arch.build::<T>(cfg.train.seed)?;
    println!(
        "seed {} | {} conv={} dense={} | {} params | {} train / {} test samples",
        cfg.train.seed,
        cfg.arch.arch,
        cfg.arch.conv_activation.name(),
        cfg.arch.dense_activation.name(),
        model.param_count(),
        train.len(),
        test.len()
    );
    let outcome = train_model_with(&mut model, &train, &test, &cfg.train, &mut |m| {
        eprintln!(
            "epoch {:>3}  train acc {:.4} loss {:.4}  test acc {:.4} loss {:.4}  {:.1}s",
            m.epoch, m.train_accuracy, m.train_loss, m.test_accuracy, m.test_loss, m.wall_time_seconds
        );
    })?;
    write(&cfg.out_dir.join("metrics.csv"), metrics_csv(&outcome.metrics))?;
    write(&cfg.out_dir.join("model.swnn"), encode_swnn(&model))?;
    println!("{}", describe(&outcome));
    println!("outputs in {}", cfg.out_dir.display());
    Ok(status_code(&outcome))
}

fn cmd_matrix(args: &MatrixArgs) -> Result<u8> {
    let mut cfg = resolve_run(&args.train, "matrix")?;
    if args.train.config.is_none() || cfg.rows.is_none() {
        cfg.rows = Some(parse_rows(&args.rows)?);
    }
    match cfg.train.precision {
        Precision::Single => run_matrix::<f32>(&cfg),
        Precision::Double => run_matrix::<f64>(&cfg),
    }
}

fn run_matrix<T: Scalar>(cfg: &RunConfig) -> Result<u8> {
    let rows = cfg.rows.clone().unwrap_or_default();
    if !cfg.arch.arch.uses_conv_activation() && rows.iter().any(|r| r.conv != rows[0].conv) {
        eprintln!("note: fcnn has no convolutions; the conv half of each row is ignored");
    }
    prepare_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("config.json"), cfg)?;
    let (train, test) = load_data::<T>(&cfg.data)?;
    println!(
        "seed {} | {} | {} rows on {} thread(s)",
        cfg.train.seed,
        cfg.arch.arch,
        rows.len(),
        cfg.threads
    );
    let results = run_experiment_matrix(&cfg.arch, &train, &test, &rows, &cfg.train, cfg.threads)?;
    let mut code = 0;
    for (i, r) in results.iter().enumerate() {
        let dir = cfg
            .out_dir
            .join(format!("row{i}_{}_{}", r.row.conv.name(), r.row.dense.name()));
        prepare_out_dir(&dir)?;
        let row_cfg = RunConfig {
            command: "train".into(),
            arch: ArchSpec {
                conv_activation: r.row.conv,
                dense_activation: r.row.dense,
                ..cfg.arch.clone()
            },
            rows: None,
            out_dir: dir.clone(),
            ..cfg.clone()
        };
        write_json(&dir.join("config.json"), &row_cfg)?;
        write(&dir.join("metrics.csv"), metrics_csv(&r.outcome.metrics))?;
        write(&dir.join("model.swnn"), encode_swnn(&r.model))?;
        println!("{:<20} {}", r.row.to_string(), describe(&r.outcome));
        code = code.max(status_code(&r.outcome));
    }
    let table = matrix_csv(&results);
    write(&cfg.out_dir.join("matrix.csv"), &table)?;
    print!("{table}");
    println!("outputs in {}", cfg.out_dir.display());
    Ok(code)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<u8> {
    let arch = args.model.arch;
    let (conv, dense) = args.model.activations();
    let spec = ArchSpec::new(arch, conv, dense, 10);
    let opts = GradCheckOptions {
        h: args.step,
        tol: args.tol,
        max_entries: args.max_entries.unwrap_or(if arch == Arch::Vgg16 { 2 } else { 200 }),
        seed: args.seed,
        kink_guard: !args.no_kink_guard,
        ..GradCheckOptions::default()
    };
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out_dir(args.seed));
    prepare_out_dir(&out_dir)?;
    write_json(
        &out_dir.join("config.json"),
        &serde_json::json!({ "command": "gradcheck", "arch": spec, "options": args }),
    )?;

    let batch = make_synthetic::<f64>(&SyntheticSpec {
        n: args.batch.max(1),
        shape: spec.input_shape,
        class_count: spec.class_count,
        seed: args.seed,
        separable: false,
    })?;
    let mut model = spec.build::<f64>(args.seed)?;
    println!(
        "seed {} | {arch} conv={} dense={}",
        args.seed,
        conv.name(),
        dense.name()
    );
    let report = grad_check(&mut model, &batch.images, &batch.labels, &opts)?;
    println!("{report}");
    write(&out_dir.join("gradcheck.txt"), format!("{report}\n"))?;
    if report.passed {
        Ok(0)
    } else {
        if let Some(w) = report.worst() {
            eprintln!(
                "worst offender: {} with relative error {:.3e} (tol {:e})",
                w.key, w.max_rel_error, report.tol
            );
        }
        Ok(EXIT_CHECK_FAILED)
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out_dir(args.seed));
    let config = BenchConfig {
        elements: args.elements,
        sign_mix: args.sign_mix,
        reps: args.reps,
        seed: args.seed,
    };
    config.validate()?;
    prepare_out_dir(&out_dir)?;
    write_json(
        &out_dir.join("config.json"),
        &serde_json::json!({ "command": "bench", "options": args }),
    )?;
    let report = bench_compare(&args.kinds, &config)?;
    let csv = bench_csv(&report);
    write(&out_dir.join("bench.csv"), &csv)?;
    print!("{csv}");
    Ok(0)
}

fn cmd_featmaps(args: &FeatmapsArgs) -> Result<u8> {
    let bytes = fs::read(&args.model).with_context(|| format!("reading model {}", args.model.display()))?;
    let config_path = args.model.parent().unwrap_or(Path::new(".")).join("config.json");
    let text = fs::read_to_string(&config_path).with_context(|| {
        format!(
            "reading {} (written next to every trained model)",
            config_path.display()
        )
    })?;
    let run: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config_path.display()))?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out_dir(run.train.seed));
    prepare_out_dir(&out_dir)?;
    write_json(
        &out_dir.join("config.json"),
        &serde_json::json!({
            "command": "featmaps",
            "model": args.model,
            "image_index": args.image_index,
            "run": run,
        }),
    )?;
    match swnn_precision(&bytes)? {
        Precision::Single => run_featmaps::<f32>(&bytes, &run, args.image_index, &out_dir),
        Precision::Double => run_featmaps::<f64>(&bytes, &run, args.image_index, &out_dir),
    }
}

fn run_featmaps<T: Scalar>(bytes: &[u8], run: &RunConfig, index: usize, out_dir: &Path) -> Result<u8> {
    let mut model = run.arch.build_uninit::<T>()?;
    load_params(&mut model, decode_swnn(bytes)?)?;
    let (_, test) = load_data::<T>(&run.data)?;
    if index >= test.len() {
        bail!("image index {index} outside the {}-image test set", test.len());
    }
    let (image, label) = test.batch(&[index]);
    let maps = extract_feature_maps(&mut model, &image)?;
    let mut files = 0;
    for (layer, t) in &maps {
        let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        for (ch, plane) in t.data().chunks_exact(h * w).enumerate() {
            let path = out_dir.join(format!("layer{layer}_ch{ch}.pgm"));
            write(&path, encode_pgm(w, h, &normalize_channel(plane)))?;
            files += 1;
        }
        println!("layer {layer}: {c} channels of {h}x{w}");
    }
    println!(
        "wrote {files} images for test image {index} (label {}) to {}",
        label[0],
        out_dir.display()
    );
    Ok(0)
}

fn cmd_plot(args: &PlotArgs) -> Result<u8> {
    let metrics: Vec<&str> = args
        .metrics
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .collect();
    if metrics.is_empty() {
        bail!("no metrics selected; choose from train_acc, train_loss, test_acc, test_loss");
    }
    for m in &metrics {
        if !["train_acc", "train_loss", "test_acc", "test_loss"].contains(m) {
            bail!("unknown metric {m:?}; choose from train_acc, train_loss, test_acc, test_loss");
        }
    }
    let mut series = Vec::new();
    for file in &args.files {
        let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let table = parse_metrics_csv(&text).with_context(|| format!("parsing {}", file.display()))?;
        let name = file.display().to_string();
        for &m in &metrics {
            let points = table
                .epochs
                .iter()
                .map(|e| {
                    let v = match m {
                        "train_acc" => e.train_accuracy,
                        "train_loss" => e.train_loss,
                        "test_acc" => e.test_accuracy,
                        _ => e.test_loss,
                    };
                    (e.epoch as f64, v)
                })
                .collect();
            series.push(PlotSeries {
                label: format!("{name}: {m}"),
                points,
            });
        }
    }
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out_dir(0));
    prepare_out_dir(&out_dir)?;
    write_json(
        &out_dir.join("config.json"),
        &serde_json::json!({ "command": "plot", "options": args }),
    )?;
    let title = metrics.join(", ");
    let path = out_dir.join("plot.svg");
    write(&path, plot_svg(&title, &title, &series))?;
    println!("wrote {} ({} series)", path.display(), series.len());
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Matrix(a) => cmd_matrix(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Featmaps(a) => cmd_featmaps(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
