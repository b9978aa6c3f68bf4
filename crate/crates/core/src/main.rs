//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on contract/format errors (bad flags, files,
//! config), 2 on numeric or training failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use relight::checkpoint::Container;
use relight::config::TrainConfig;
use relight::dataset::{generate_toyset, DatasetIndex, LoadedDataset};
use relight::enhancer::{degrade_padded, enhance_padded, EnhanceMode, EnhanceOptions};
use relight::error::Error;
use relight::gradcheck;
use relight::image_io;
use relight::invnet::{squeeze, InvNet, SplitScheme};
use relight::niqe;
use relight::trainer::Trainer;
use relight::Tensor;

#[derive(Parser)]
#[command(
    name = "relight",
    about = "Invertible coupling network for unpaired low-light image enhancement",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on two unpaired image directories.
    Train(TrainArgs),
    /// Enhance a low-light image with a trained model.
    Enhance(TransformArgs),
    /// Degrade a normal-light image through the inverse pass.
    Degrade(TransformArgs),
    /// Verify forward/inverse round-trip error on random inputs.
    CheckInvert(CheckInvertArgs),
    /// Run the finite-difference gradient suite.
    GradCheck,
    /// Fit the no-reference quality model on a pristine corpus.
    NiqeFit(NiqeFitArgs),
    /// Score an image against a fitted quality model.
    NiqeScore(NiqeScoreArgs),
    /// Generate the synthetic unpaired toy dataset.
    MakeToyset(MakeToysetArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Directory of low-light images.
    #[arg(long)]
    low: PathBuf,
    /// Directory of normal-light images.
    #[arg(long)]
    normal: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Resume from an existing checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Append log lines to this file as well as stdout.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    /// Model checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Input image (PNG or PPM).
    #[arg(long)]
    input: PathBuf,
    /// Output image (PNG or PPM).
    #[arg(long)]
    output: PathBuf,
    /// Inference mode.
    #[arg(long, default_value = "progressive", value_parser = ["progressive", "direct"])]
    mode: String,
}

#[derive(Args)]
struct CheckInvertArgs {
    /// Model checkpoint; without it, each trial draws a random model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of random-input trials.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Seed for inputs (and models when no checkpoint is given).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden width of randomly drawn models.
    #[arg(long, default_value_t = 8)]
    width: usize,
    /// Coupling layers of randomly drawn models.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Input height (even).
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Input width (even).
    #[arg(long, default_value_t = 96)]
    image_width: usize,
}

#[derive(Args)]
struct NiqeFitArgs {
    /// Directory of pristine images.
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Patch size at the full scale.
    #[arg(long, default_value_t = niqe::DEFAULT_PATCH)]
    patch: usize,
    /// Sharpness selection quantile.
    #[arg(long, default_value_t = niqe::DEFAULT_SHARPNESS_QUANTILE)]
    quantile: f64,
}

#[derive(Args)]
struct NiqeScoreArgs {
    /// Fitted model file.
    #[arg(long)]
    model: PathBuf,
    /// Image to score.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct MakeToysetArgs {
    /// Output directory (creates normal/, low/, test_normal/, test_low/).
    #[arg(long)]
    out: PathBuf,
    /// Images per pool.
    #[arg(long)]
    count: usize,
    /// Generator seed.
    #[arg(long)]
    seed: u64,
    /// Image width.
    #[arg(long, default_value_t = 96)]
    width: usize,
    /// Image height.
    #[arg(long, default_value_t = 64)]
    height: usize,
}

/// Failures carry the exit code mandated for their class.
enum CliError {
    Contract(String),
    Numeric(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::Numeric(_) => CliError::Numeric(e.to_string()),
            other => CliError::Contract(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version output.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Contract(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Enhance(args) => transform(args, Direction::Enhance),
        Command::Degrade(args) => transform(args, Direction::Degrade),
        Command::CheckInvert(args) => check_invert(args),
        Command::GradCheck => grad_check(),
        Command::NiqeFit(args) => niqe_fit(args),
        Command::NiqeScore(args) => niqe_score(args),
        Command::MakeToyset(args) => make_toyset(args),
    }
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut trainer = match &args.resume {
        Some(path) => Trainer::load(path)?,
        None => Trainer::new(TrainConfig::load(&args.config)?)?,
    };
    let config = trainer.config.clone();
    let index = DatasetIndex::scan(&args.low, &args.normal, config.seed)?;
    let data = LoadedDataset::load(&index, config.train_width, config.train_height)?;

    let mut log_file = match &args.log {
        Some(path) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?,
        ),
        None => None,
    };

    let out = args.out.clone();
    trainer.run(&data, |report, state| {
        let due = report.iteration == 1
            || report.iteration % config.log_every == 0
            || report.iteration == config.iterations;
        if due {
            let line = report.log_line();
            println!("{line}");
            if let Some(f) = log_file.as_mut() {
                use std::io::Write;
                writeln!(f, "{line}").map_err(|e| Error::io(args.log.as_ref().unwrap(), e))?;
            }
        }
        if report.iteration % config.checkpoint_every == 0 {
            state.save(&out)?;
        }
        Ok(())
    })?;
    trainer.save(&out)?;
    println!("saved checkpoint to {}", out.display());
    Ok(())
}

enum Direction {
    Enhance,
    Degrade,
}

fn load_generator(path: &Path) -> Result<InvNet<f32>, CliError> {
    Ok(Trainer::load(path)?.models.gen)
}

fn transform(args: TransformArgs, direction: Direction) -> Result<(), CliError> {
    let net = load_generator(&args.model)?;
    let tensor = image_io::to_tensor(&image_io::read_image(&args.input)?);
    let opts = EnhanceOptions {
        mode: if args.mode == "direct" {
            EnhanceMode::DirectUnsqueeze
        } else {
            EnhanceMode::Progressive
        },
        clamp_output: true,
    };
    let out = match direction {
        Direction::Enhance => enhance_padded(&tensor, &net, opts),
        Direction::Degrade => degrade_padded(&tensor, &net, opts),
    };
    image_io::write_image(&args.output, &image_io::from_tensor(&out))?;
    Ok(())
}

fn check_invert(args: CheckInvertArgs) -> Result<(), CliError> {
    if args.height % 2 != 0 || args.image_width % 2 != 0 {
        return Err(CliError::Contract("height and image-width must be even".into()));
    }
    let loaded = match &args.model {
        Some(path) => Some(load_generator(path)?),
        None => None,
    };
    let mut max_err = 0f32;
    for trial in 0..args.trials {
        let mut rng =
            ChaCha20Rng::seed_from_u64(args.seed ^ (trial as u64).wrapping_mul(0x9e37_79b9));
        let net = match &loaded {
            Some(net) => net.clone(),
            None => InvNet::init_random(
                args.k,
                SplitScheme::new(2),
                args.width,
                Some(2.0),
                0.3,
                &mut rng,
            ),
        };
        let n = 3 * args.height * args.image_width;
        let img = Tensor::new(
            vec![3, args.height, args.image_width],
            (0..n).map(|_| rng.random_range(0.0..1.0f32)).collect(),
        );
        let subs = squeeze(&img);
        let (fwd, _) = net.forward(&subs);
        let (rec, _) = net.inverse(&fwd);
        let (bwd, _) = net.inverse(&subs);
        let (rec2, _) = net.forward(&bwd);
        for recovered in [&rec, &rec2] {
            for (orig, got) in subs.iter().zip(recovered.iter()) {
                for (x, y) in orig.data().iter().zip(got.data()) {
                    max_err = max_err.max((x - y).abs());
                }
            }
        }
    }
    println!("max round-trip error over {} trials: {max_err:e}", args.trials);
    if max_err < 1e-3 {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("round-trip error {max_err:e} exceeds 1e-3")))
    }
}

fn grad_check() -> Result<(), CliError> {
    let mut all_ok = true;
    for check in gradcheck::run_suite() {
        let status = if check.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<20} max rel err {:>12.3e} over {:>5} components  [{status}]",
            check.name, check.max_rel_err, check.components_checked
        );
        all_ok &= check.passed();
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::Numeric("gradient check exceeded the 1e-3 tolerance".into()))
    }
}

fn niqe_fit(args: NiqeFitArgs) -> Result<(), CliError> {
    let mut paths = Vec::new();
    let entries = std::fs::read_dir(&args.corpus).map_err(|e| Error::io(&args.corpus, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&args.corpus, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png") | Some("ppm")) {
            paths.push(path);
        }
    }
    paths.sort();
    let images = paths
        .iter()
        .map(|p| Ok(image_io::to_tensor(&image_io::read_image(p)?)))
        .collect::<Result<Vec<Tensor<f32>>, Error>>()?;
    let model = niqe::fit_model(&images, args.patch, args.quantile)?;
    niqe::model_to_container(&model).save(&args.out)?;
    println!("fitted quality model on {} images -> {}", paths.len(), args.out.display());
    Ok(())
}

fn niqe_score(args: NiqeScoreArgs) -> Result<(), CliError> {
    let model = niqe::model_from_container(&Container::load(&args.model)?)?;
    let img = image_io::to_tensor(&image_io::read_image(&args.input)?);
    let score = niqe::niqe_score(&img, &model)?;
    println!("{score}");
    Ok(())
}

fn make_toyset(args: MakeToysetArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Contract("count must be >= 1".into()));
    }
    if args.width % 2 != 0 || args.height % 2 != 0 {
        return Err(CliError::Contract("width and height must be even".into()));
    }
    let summary = generate_toyset(&args.out, args.count, args.seed, args.width, args.height)?;
    println!(
        "wrote {} normal + {} low images ({} test each) to {}; mean luminance {:.3} vs {:.3}",
        summary.count,
        summary.count,
        summary.test_count,
        args.out.display(),
        summary.normal_mean_luminance,
        summary.low_mean_luminance
    );
    Ok(())
}
