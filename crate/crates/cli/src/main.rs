//! Command line for the spectral ConvNet toolkit: train and evaluate small
//! networks, sweep Gaussian-noise robustness, find minimal adversarial
//! noise, augment datasets, fine-tune with frozen layers, and export
//! kernel spectra.
//!
//! Every run that produces files also writes a key=value metadata sidecar
//! capturing the configuration and seed, so each number is traceable.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scnl_core::attack::{find_minimal_noise, AttackConfig, TargetClass};
use scnl_core::convnet::{argmax, Activation, Dataset, FreezeSelector, LossKind, Model};
use scnl_core::dft::{dft2, dft3};
use scnl_core::harness::{
    augment_dataset, finetune_on_noise, run_sweep, SweepConfig, AUGMENT_SIGMAS, DEFAULT_SIGMA_GRID,
};
use scnl_core::io;
use scnl_core::report;
use scnl_core::spectrum::{
    export_pointcloud, filter_spectrum, mean_spectrum, reference_filter, ReferenceFilter,
    SpectrumSummary, DEFAULT_PAD,
};
use scnl_core::tensor::{Rng, Tensor};

#[derive(Parser)]
#[command(
    name = "scnl",
    version,
    about = "Spectral noise-stability analysis for small ConvNets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reference architecture from scratch.
    Train(TrainArgs),
    /// Report clean accuracy of a model on a dataset.
    Eval(EvalArgs),
    /// Accuracy sweep over Gaussian-degraded test images.
    Sweep(SweepArgs),
    /// Find minimal adversarial additive noise for one test image.
    Attack(AttackArgs),
    /// Augment a dataset with noisy copies.
    Augment(AugmentArgs),
    /// Retrain with selected layers frozen (conv-only by default).
    Finetune(FinetuneArgs),
    /// Export per-filter and mean spectra of a convolution layer.
    Spectrum(SpectrumArgs),
    /// Export spectra of the reference filters (Sobel, Prewitt, Gaussian).
    ReferenceFilters(ReferenceFiltersArgs),
}

/// Where a dataset comes from: `synth` or a path (SCND file, CIFAR-10
/// binary batch, or a directory containing `dataset.scnd`).
#[derive(Args)]
struct DataArgs {
    /// `synth` or a path to a dataset.
    #[arg(long)]
    data: String,
    /// Seed of the synthetic dataset.
    #[arg(long, default_value_t = 42)]
    data_seed: u64,
    /// Synthetic images per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Synthetic image side length.
    #[arg(long, default_value_t = 16)]
    size: usize,
}

#[derive(Clone, Copy)]
enum Split {
    Train,
    Test,
}

impl DataArgs {
    fn load(&self, split: Split) -> Result<Dataset> {
        if self.data == "synth" {
            let per_class = self.per_class.unwrap_or(match split {
                Split::Train => 100,
                Split::Test => 30,
            });
            let (train, test) = io::synth_split(per_class, per_class, self.size, self.data_seed)?;
            return Ok(match split {
                Split::Train => train,
                Split::Test => test,
            });
        }
        let mut path = PathBuf::from(&self.data);
        if path.is_dir() {
            path = path.join("dataset.scnd");
        }
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        if bytes.starts_with(b"SCND1\n") {
            Ok(io::load_dataset(&path)?)
        } else {
            io::load_cifar10(&path)
                .with_context(|| format!("{} is neither SCND nor CIFAR-10 binary", path.display()))
        }
    }

    fn meta(&self, entries: &mut Vec<(String, String)>) {
        entries.push(("data".into(), self.data.clone()));
        if self.data == "synth" {
            entries.push(("data_seed".into(), self.data_seed.to_string()));
            if let Some(per_class) = self.per_class {
                entries.push(("per_class".into(), per_class.to_string()));
            }
            entries.push(("size".into(), self.size.to_string()));
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Network architecture (only desk-cnn is built in).
    #[arg(long, default_value = "desk-cnn")]
    arch: String,
    #[arg(long, default_value = "softmax")]
    loss: String,
    #[arg(long, default_value = "relu")]
    act: String,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 0.3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Optional report file (`accuracy=<value>`); stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Smooth each degraded image before classifying.
    #[arg(long)]
    smooth: bool,
    /// Round degraded pixels to whole intensity levels.
    #[arg(long)]
    quantize: bool,
    /// Bound on how many clean-correct images enter the sweep.
    #[arg(long)]
    max_images: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Index of the test image to attack.
    #[arg(long)]
    index: usize,
    #[arg(long, default_value_t = 0.02)]
    lambda: f64,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
    /// Target class: `auto` (runner-up) or a class index.
    #[arg(long, default_value = "auto")]
    k: String,
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    #[arg(long, default_value_t = 2.0)]
    step_size: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: usize,
    #[arg(long)]
    out_noise: PathBuf,
    #[arg(long)]
    out_spectrum: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory; the augmented set is written as dataset.scnd.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    copies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Which layers to freeze: fc, conv, all, or none.
    #[arg(long, default_value = "fc")]
    freeze: String,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    model: PathBuf,
    /// Which convolution layer to analyze (0 = first conv layer).
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: usize,
    /// Filter whose 3D spectrum goes to pointcloud.csv.
    #[arg(long, default_value_t = 0)]
    filter: usize,
    /// Point-cloud magnitude threshold as a fraction of the peak.
    #[arg(long, default_value_t = 0.0)]
    threshold_fraction: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReferenceFiltersArgs {
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Sweep(args) => sweep(args),
        Command::Attack(args) => attack(args),
        Command::Augment(args) => augment(args),
        Command::Finetune(args) => finetune(args),
        Command::Spectrum(args) => spectrum(args),
        Command::ReferenceFilters(args) => reference_filters(args),
    }
}

fn meta_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    name.push_str(".meta");
    output.with_file_name(name)
}

fn train(args: TrainArgs) -> Result<()> {
    if args.arch != "desk-cnn" {
        bail!("unknown architecture `{}` (available: desk-cnn)", args.arch);
    }
    let loss = LossKind::from_name(&args.loss)?;
    let activation = Activation::from_name(&args.act)?;
    let data = args.data.load(Split::Train)?;
    let [c, h, w] = data.image_shape();
    let num_classes = data.labels().iter().copied().max().unwrap_or(0) + 1;
    let mut model = Model::desk_cnn(
        [c, h, w],
        num_classes,
        activation,
        loss,
        &mut Rng::new(args.seed),
    )?;
    let losses = model.sgd_train(
        &data,
        args.epochs,
        args.lr,
        args.batch_size,
        &mut Rng::new(args.seed.wrapping_add(1)),
    )?;
    for (epoch, loss_value) in losses.iter().enumerate() {
        println!("epoch {:>3}  loss {loss_value:.6}", epoch + 1);
    }
    let accuracy = model.accuracy(&data)?;
    println!("train accuracy {accuracy:.4}");
    io::save_model(&model, &args.out)?;
    let mut meta = vec![
        ("command".into(), "train".into()),
        ("arch".into(), args.arch.clone()),
        ("loss".into(), loss.name().into()),
        ("act".into(), args.act.clone()),
        ("epochs".into(), args.epochs.to_string()),
        ("lr".into(), args.lr.to_string()),
        ("batch_size".into(), args.batch_size.to_string()),
        ("seed".into(), args.seed.to_string()),
        ("train_accuracy".into(), format!("{accuracy:.4}")),
        ("model_id".into(), format!("{:016x}", model.fingerprint())),
    ];
    args.data.meta(&mut meta);
    report::write_meta(meta_path(&args.out), &meta)?;
    println!("model written to {}", args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let data = args.data.load(Split::Test)?;
    let accuracy = model.accuracy(&data)?;
    println!("accuracy={accuracy:.4}");
    if let Some(out) = &args.out {
        std::fs::write(out, format!("accuracy={accuracy:.4}\n"))
            .with_context(|| format!("writing {}", out.display()))?;
        let mut meta = vec![
            ("command".into(), "eval".into()),
            ("model".into(), args.model.display().to_string()),
            ("model_id".into(), format!("{:016x}", model.fingerprint())),
            ("accuracy".into(), format!("{accuracy:.4}")),
        ];
        args.data.meta(&mut meta);
        report::write_meta(meta_path(out), &meta)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let data = args.data.load(Split::Test)?;
    let cfg = SweepConfig {
        sigmas: args
            .sigmas
            .clone()
            .unwrap_or_else(|| DEFAULT_SIGMA_GRID.to_vec()),
        trials_per_sigma: args.trials,
        smooth_first: args.smooth,
        quantize: args.quantize,
        max_images: args.max_images,
        seed: args.seed,
    };
    let sweep_report = run_sweep(&model, &data, &cfg)?;
    for row in &sweep_report.rows {
        println!(
            "sigma {:>6}  accuracy {:.4}  ({}/{})",
            row.sigma, row.accuracy, row.correct, row.images_evaluated
        );
    }
    report::write_sweep_csv(&sweep_report, &args.out)?;
    let mut meta = vec![
        ("command".into(), "sweep".into()),
        ("model".into(), args.model.display().to_string()),
        ("model_id".into(), sweep_report.model_id.clone()),
        (
            "sigmas".into(),
            cfg.sigmas
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("trials".into(), args.trials.to_string()),
        ("smooth".into(), args.smooth.to_string()),
        ("quantize".into(), args.quantize.to_string()),
        ("seed".into(), args.seed.to_string()),
    ];
    if let Some(limit) = args.max_images {
        meta.push(("max_images".into(), limit.to_string()));
    }
    args.data.meta(&mut meta);
    report::write_meta(meta_path(&args.out), &meta)?;
    println!("report written to {}", args.out.display());
    Ok(())
}

fn attack(args: AttackArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let data = args.data.load(Split::Test)?;
    if args.index >= data.len() {
        bail!(
            "index {} out of range for {} test images",
            args.index,
            data.len()
        );
    }
    let image = data.image(args.index);
    let label = data.label(args.index);
    let target = if args.k == "auto" {
        TargetClass::Auto
    } else {
        TargetClass::Class(
            args.k
                .parse()
                .map_err(|_| anyhow!("--k must be `auto` or a class index"))?,
        )
    };
    let cfg = AttackConfig {
        lambda: args.lambda,
        beta: args.beta,
        target,
        step_size: args.step_size,
        max_iters: args.steps,
        patience: args.patience,
        tol: args.tol,
    };
    let result = find_minimal_noise(&model, &image, label, &cfg)?;
    let norm = result.noise.l2_norm();
    let ratio = norm / image.l2_norm();
    println!(
        "success={} iterations={} noise_norm={norm:.4} norm_ratio={ratio:.6}",
        result.success, result.iterations
    );
    let final_prediction = argmax(result.final_scores.data());
    println!("clean label {label}, prediction after noise {final_prediction}");
    io::save_tensor(&result.noise, &args.out_noise)?;
    let magnitude = match result.noise.rank() {
        3 if result.noise.shape()[0] == 1 => {
            let flat = result.noise.reshape(result.noise.shape()[1..].to_vec())?;
            dft2(&flat, args.pad)?.center_shift()?.magnitude()
        }
        3 => {
            let spec = dft3(&result.noise, args.pad)?.center_shift()?.magnitude();
            let depth = spec.shape()[0];
            let mut mean = Tensor::zeros(vec![args.pad, args.pad]);
            for p in 0..depth {
                let plane = Tensor::new(
                    vec![args.pad, args.pad],
                    spec.data()[p * args.pad * args.pad..(p + 1) * args.pad * args.pad].to_vec(),
                )?;
                mean = mean.add(&plane)?;
            }
            mean.scale(1.0 / depth as f64)
        }
        _ => dft2(&result.noise, args.pad)?.center_shift()?.magnitude(),
    };
    report::write_heatmap(&magnitude, &args.out_spectrum)?;
    let mut meta = vec![
        ("command".into(), "attack".into()),
        ("model".into(), args.model.display().to_string()),
        ("model_id".into(), format!("{:016x}", model.fingerprint())),
        ("index".into(), args.index.to_string()),
        ("lambda".into(), args.lambda.to_string()),
        ("beta".into(), args.beta.to_string()),
        ("k".into(), args.k.clone()),
        ("steps".into(), args.steps.to_string()),
        ("step_size".into(), args.step_size.to_string()),
        ("patience".into(), args.patience.to_string()),
        ("tol".into(), args.tol.to_string()),
        ("pad".into(), args.pad.to_string()),
        ("success".into(), result.success.to_string()),
        ("iterations".into(), result.iterations.to_string()),
        ("noise_norm".into(), format!("{norm:.6}")),
        ("norm_ratio".into(), format!("{ratio:.6}")),
    ];
    args.data.meta(&mut meta);
    report::write_meta(meta_path(&args.out_noise), &meta)?;
    println!(
        "noise written to {}, spectrum to {}",
        args.out_noise.display(),
        args.out_spectrum.display()
    );
    Ok(())
}

fn augment(args: AugmentArgs) -> Result<()> {
    let data = args.data.load(Split::Train)?;
    let sigmas = args
        .sigmas
        .clone()
        .unwrap_or_else(|| AUGMENT_SIGMAS.to_vec());
    let augmented = augment_dataset(&data, &sigmas, args.copies, &mut Rng::new(args.seed))?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let out_file = args.out.join("dataset.scnd");
    io::save_dataset(&augmented, &out_file)?;
    let mut meta = vec![
        ("command".into(), "augment".into()),
        (
            "sigmas".into(),
            sigmas
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("copies".into(), args.copies.to_string()),
        ("seed".into(), args.seed.to_string()),
        ("images".into(), augmented.len().to_string()),
    ];
    args.data.meta(&mut meta);
    report::write_meta(args.out.join("run.meta"), &meta)?;
    println!(
        "augmented dataset with {} images written to {}",
        augmented.len(),
        out_file.display()
    );
    Ok(())
}

fn finetune(args: FinetuneArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let data = args.data.load(Split::Train)?;
    let selector = match args.freeze.as_str() {
        "fc" => FreezeSelector::FcLayers,
        "conv" => FreezeSelector::ConvLayers,
        "all" => FreezeSelector::All,
        "none" => FreezeSelector::None,
        other => bail!("unknown freeze selector `{other}` (fc, conv, all, none)"),
    };
    let (tuned, losses) = if selector == FreezeSelector::FcLayers {
        finetune_on_noise(
            &model,
            &data,
            args.epochs,
            args.lr,
            args.batch_size,
            &mut Rng::new(args.seed),
        )?
    } else {
        let mut tuned = model.clone();
        tuned.set_frozen(selector);
        let losses = tuned.sgd_train(
            &data,
            args.epochs,
            args.lr,
            args.batch_size,
            &mut Rng::new(args.seed),
        )?;
        (tuned, losses)
    };
    for (epoch, loss_value) in losses.iter().enumerate() {
        println!("epoch {:>3}  loss {loss_value:.6}", epoch + 1);
    }
    io::save_model(&tuned, &args.out)?;
    let mut meta = vec![
        ("command".into(), "finetune".into()),
        ("model".into(), args.model.display().to_string()),
        ("freeze".into(), args.freeze.clone()),
        ("epochs".into(), args.epochs.to_string()),
        ("lr".into(), args.lr.to_string()),
        ("batch_size".into(), args.batch_size.to_string()),
        ("seed".into(), args.seed.to_string()),
        ("model_id".into(), format!("{:016x}", tuned.fingerprint())),
    ];
    args.data.meta(&mut meta);
    report::write_meta(meta_path(&args.out), &meta)?;
    println!("fine-tuned model written to {}", args.out.display());
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let conv_layers: Vec<usize> = (0..model.params().len())
        .step_by(2)
        .map(|i| model.param_layer(i))
        .filter(|&l| model.layers()[l].kind_name() == "conv")
        .collect();
    let layer_index = *conv_layers.get(args.layer).ok_or_else(|| {
        anyhow!(
            "model has {} conv layers, --layer {} is out of range",
            conv_layers.len(),
            args.layer
        )
    })?;
    let weights = model
        .params()
        .iter()
        .zip(0..)
        .find(|&(_, i)| model.param_layer(i) == layer_index)
        .map(|(t, _)| t.clone())
        .expect("conv layer has a weight tensor");
    let shape = weights.shape().to_vec();
    let (out_channels, in_channels, kh, kw) = (shape[0], shape[1], shape[2], shape[3]);
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mut kernels = Vec::with_capacity(out_channels);
    for o in 0..out_channels {
        let filter_len = in_channels * kh * kw;
        let data = weights.data()[o * filter_len..(o + 1) * filter_len].to_vec();
        kernels.push(Tensor::new(vec![in_channels, kh, kw], data)?);
    }
    let mut summaries: Vec<SpectrumSummary> = Vec::with_capacity(out_channels + 1);
    for (o, kernel) in kernels.iter().enumerate() {
        let summary = filter_spectrum(&format!("filter{o:02}"), kernel, args.pad)?;
        report::write_heatmap(
            &summary.grid,
            args.out_dir.join(format!("filter{o:02}.ppm")),
        )?;
        summaries.push(summary);
    }
    let mean = mean_spectrum(&kernels, args.pad)?;
    report::write_heatmap(&mean.grid, args.out_dir.join("mean_spectrum.ppm"))?;
    summaries.push(mean);
    report::write_metrics_csv(&summaries, args.out_dir.join("metrics.csv"))?;

    if args.filter >= kernels.len() {
        bail!(
            "model layer has {} filters, --filter {} is out of range",
            kernels.len(),
            args.filter
        );
    }
    let points = export_pointcloud(&kernels[args.filter], args.pad, args.threshold_fraction)?;
    report::write_pointcloud_csv(&points, args.out_dir.join("pointcloud.csv"))?;

    let meta = vec![
        ("command".into(), "spectrum".into()),
        ("model".into(), args.model.display().to_string()),
        ("model_id".into(), format!("{:016x}", model.fingerprint())),
        ("layer".into(), args.layer.to_string()),
        ("pad".into(), args.pad.to_string()),
        ("filter".into(), args.filter.to_string()),
        (
            "threshold_fraction".into(),
            args.threshold_fraction.to_string(),
        ),
        ("filters".into(), out_channels.to_string()),
    ];
    report::write_meta(args.out_dir.join("run.meta"), &meta)?;
    println!(
        "{} filter spectra, mean spectrum, metrics.csv and pointcloud.csv written to {}",
        out_channels,
        args.out_dir.display()
    );
    Ok(())
}

fn reference_filters(args: ReferenceFiltersArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut summaries = Vec::new();
    for filter in ReferenceFilter::ALL {
        let kernel = reference_filter(filter);
        let summary = filter_spectrum(filter.name(), &kernel, args.pad)?;
        report::write_heatmap(
            &summary.grid,
            args.out_dir.join(format!("{}.ppm", filter.name())),
        )?;
        summaries.push(summary);
    }
    report::write_metrics_csv(&summaries, args.out_dir.join("metrics.csv"))?;
    let meta = vec![
        ("command".into(), "reference-filters".into()),
        ("pad".into(), args.pad.to_string()),
    ];
    report::write_meta(args.out_dir.join("run.meta"), &meta)?;
    println!(
        "reference filter spectra written to {}",
        args.out_dir.display()
    );
    Ok(())
}
