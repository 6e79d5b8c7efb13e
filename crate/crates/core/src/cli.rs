//! Command-line front end: training runs, checkpoint sampling, measurement
//! diagnostics, and exact-game reports.
//!
//! Exit codes: 0 on success, 1 on a usage error (bad flags or arguments),
//! 2 on any runtime failure (I/O, malformed files, numerical aborts).

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset::{load_idx, make_measured_dataset, synth_rectangles_dataset, Dataset};
use crate::error::{Error, Result};
use crate::game::{
    game_value, generator_optimum_grid_search, mixture_optimum_analysis, optimal_discriminator,
    pushforward, DiscreteChannel, DiscreteDistribution, MixtureGameConfig,
};
use crate::gradcheck::pipeline_gradcheck;
use crate::measure::{
    build_channel_matrix, identity_probability_estimate, injectivity_test, MeasurementKind,
    MeasurementSpec,
};
use crate::metrics::Metrics;
use crate::pgm::write_image_grid;
use crate::rng::Rng;
use crate::tensor::{Dist, Tensor};
use crate::train::{sample_grid, train_run, TrainConfig};

#[derive(Parser)]
#[command(
    name = "hagn",
    version,
    about = "Train GANs from lossy measurements, with the measurement applied inside the generator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config; writes metrics.csv, checkpoint.hagn, and
    /// samples.pgm into the output directory
    Train(TrainArgs),
    /// Render clean generator samples from a checkpoint into a PGM grid
    Sample(SampleArgs),
    /// Estimate how often a measurement leaves its input untouched; on tiny
    /// binary spaces also decide channel injectivity exactly
    CheckUniqueness(CheckUniquenessArgs),
    /// Best-response report for a finite game: grid minimizers, the optimal
    /// discriminator, and the value at the optimum
    Oracle(OracleArgs),
    /// Compare component minimizers against mixture minimizers for an
    /// identity/noise measurement mixture
    Mixture(MixtureArgs),
    /// Finite-difference check of the full training pipeline gradient
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training config: inline JSON or a path to a JSON file
    #[arg(long)]
    config: String,
    /// Output directory (created if absent)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Checkpoint file written by `train`
    #[arg(long)]
    ckpt: PathBuf,
    /// Number of samples in the grid
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Grid columns
    #[arg(long, default_value_t = 4)]
    cols: usize,
    /// Output PGM path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckUniquenessArgs {
    /// Measurement spec: inline JSON or a path to a JSON file
    #[arg(long)]
    spec: String,
    /// Input image shape, e.g. 16x16
    #[arg(long, value_parser = parse_shape)]
    shape: (usize, usize),
    /// Monte-Carlo sample count for the identity-probability estimate
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    /// Row-stochastic channel matrix as JSON, e.g. [[1,0],[0.5,0.5]]
    #[arg(long)]
    channel: String,
    /// Observed measurement distribution as a JSON probability vector
    #[arg(long)]
    target: String,
    /// Simplex grid resolution; must divide 1
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
}

#[derive(Args)]
struct MixtureArgs {
    /// Probability that the measurement acts as the identity channel
    #[arg(long)]
    p2: f64,
    /// Identity-component channel matrix as JSON
    #[arg(long)]
    channel_id: String,
    /// Noise-component channel matrix as JSON
    #[arg(long)]
    channel_noise: String,
    /// Real input distribution as a JSON probability vector
    #[arg(long)]
    p_x_r: String,
    /// Optional explicit target measurement distribution; defaults to the
    /// pushforward of --p-x-r through the mixture
    #[arg(long)]
    target: Option<String>,
    /// Simplex grid resolution; must divide 1
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of random pipeline instances to check
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Runs the CLI on the process arguments and returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(args) => cmd_train(args),
        Command::Sample(args) => cmd_sample(args),
        Command::CheckUniqueness(args) => cmd_check_uniqueness(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Mixture(args) => cmd_mixture(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

/// Accepts either inline JSON (first non-space character `{` or `[`) or a
/// path to a JSON file.
fn read_json_arg(arg: &str) -> Result<String> {
    if arg.trim_start().starts_with(['{', '[']) {
        Ok(arg.to_string())
    } else {
        Ok(fs::read_to_string(arg)?)
    }
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 2 {
        return Err(format!("expected HxW, got {s:?}"));
    }
    let h = parts[0].parse::<usize>().map_err(|e| e.to_string())?;
    let w = parts[1].parse::<usize>().map_err(|e| e.to_string())?;
    if h == 0 || w == 0 {
        return Err("shape sides must be positive".into());
    }
    Ok((h, w))
}

/// Builds the training dataset for a config: IDX images when a path is
/// given, otherwise the synthetic rectangles corpus. Both derive all
/// randomness from the config seed.
pub fn build_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    let clean = match &cfg.idx_path {
        Some(path) => {
            let images = load_idx(path.as_ref())?;
            for img in &images {
                if img.shape() != [cfg.height, cfg.width] {
                    return Err(Error::config(format!(
                        "IDX images are {:?} but the config expects {}x{}",
                        img.shape(),
                        cfg.height,
                        cfg.width
                    )));
                }
            }
            images
        }
        None => {
            let mut rng = Rng::new(cfg.seed);
            synth_rectangles_dataset(cfg.dataset_size, cfg.height, cfg.width, &mut rng)?
        }
    };
    make_measured_dataset(clean, cfg.dataset_spec, cfg.seed)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg: TrainConfig = serde_json::from_str(&read_json_arg(&args.config)?)?;
    cfg.validate()?;
    let dataset = build_dataset(&cfg)?;

    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("metrics.csv");
    let mut csv = fs::File::create(&csv_path)?;
    writeln!(csv, "{}", Metrics::CSV_HEADER)?;
    let (state, log) = train_run(&cfg, &dataset, |m| {
        writeln!(csv, "{}", m.csv_row())?;
        csv.flush()?;
        eprintln!(
            "step {:6}  d_loss {:.4}  g_loss {:.4}  ppme {:.4}  mmd2 {:.6}",
            m.step, m.d_loss, m.g_loss, m.per_pixel_mean_error, m.mmd2
        );
        Ok(())
    })?;

    let ckpt_path = args.out.join("checkpoint.hagn");
    save_checkpoint(&state, &ckpt_path)?;
    let grid_path = args.out.join("samples.pgm");
    let mut grid_rng = state.rng.clone();
    let grid = sample_grid(&state.gen, 64, &mut grid_rng)?;
    write_image_grid(&grid, 8, &grid_path)?;

    if let Some(last) = log.last() {
        println!(
            "final step {} d_loss {:.4} g_loss {:.4} ppme {:.4} mmd2 {:.6}",
            last.step, last.d_loss, last.g_loss, last.per_pixel_mean_error, last.mmd2
        );
    }
    println!(
        "wrote {} {} {}",
        csv_path.display(),
        ckpt_path.display(),
        grid_path.display()
    );
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let mut state = ckpt.state;
    let grid = sample_grid(&state.gen, args.n, &mut state.rng)?;
    write_image_grid(&grid, args.cols, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_check_uniqueness(args: CheckUniquenessArgs) -> Result<()> {
    let spec: MeasurementSpec = serde_json::from_str(&read_json_arg(&args.spec)?)?;
    let (h, w) = args.shape;
    spec.validate(&[h, w])?;

    let mut rng = Rng::new(args.seed);
    // Inputs are strictly positive so that masking a position always
    // changes the image: uniform01 lands in [0,1), its reflection in (0,1].
    let mut sampler = |r: &mut Rng| {
        let mut t = Tensor::<f32>::sample(Dist::Uniform01, &[h, w], r)?;
        for v in t.data_mut() {
            *v = 1.0 - *v;
        }
        Ok(t)
    };
    let mut report = identity_probability_estimate(&spec, &mut sampler, args.samples, &mut rng)?;

    let enumerable = !matches!(
        spec.kind,
        MeasurementKind::GaussianProjection | MeasurementKind::ConvolveNoise
    );
    if enumerable && h * w <= 12 {
        let inputs = enumerate_binary_images(h, w)?;
        let channel = build_channel_matrix(&spec, &inputs)?;
        report.channel_injective = Some(injectivity_test(&channel));
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// All 2^(h·w) binary images over an h×w grid, in ascending bit order.
fn enumerate_binary_images(h: usize, w: usize) -> Result<Vec<Tensor<f32>>> {
    let bits = h * w;
    (0..1usize << bits)
        .map(|code| {
            let data = (0..bits)
                .map(|b| if code >> b & 1 == 1 { 1.0 } else { 0.0 })
                .collect();
            Tensor::from_vec(&[h, w], data)
        })
        .collect()
}

#[derive(Serialize)]
struct OracleReport {
    /// Every grid point minimizing the divergence to the target, as input
    /// distributions.
    minimizers: Vec<DiscreteDistribution>,
    /// Pushforward of the first minimizer through the channel.
    p_y_g: DiscreteDistribution,
    /// Best-response discriminator against that pushforward.
    optimal_discriminator: Vec<f64>,
    /// Game value at the best response; -2 log 2 when the pushforward
    /// matches the target exactly.
    value_at_optimum: f64,
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let channel: DiscreteChannel = serde_json::from_str(&read_json_arg(&args.channel)?)?;
    let target: DiscreteDistribution = serde_json::from_str(&read_json_arg(&args.target)?)?;
    let minimizers = generator_optimum_grid_search(&channel, &target, args.grid_step)?;
    let best = minimizers
        .first()
        .ok_or_else(|| Error::invalid_argument("grid search returned no minimizers"))?;
    let p_y_g = pushforward(&channel, best)?;
    let d_star = optimal_discriminator(&target, &p_y_g)?;
    let value = game_value(&target, &p_y_g, &d_star)?;
    let report = OracleReport {
        minimizers,
        p_y_g,
        optimal_discriminator: d_star,
        value_at_optimum: value,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_mixture(args: MixtureArgs) -> Result<()> {
    let channel_id: DiscreteChannel = serde_json::from_str(&read_json_arg(&args.channel_id)?)?;
    let channel_noise: DiscreteChannel =
        serde_json::from_str(&read_json_arg(&args.channel_noise)?)?;
    let p_x_r: DiscreteDistribution = serde_json::from_str(&read_json_arg(&args.p_x_r)?)?;
    let target = match &args.target {
        Some(t) => Some(serde_json::from_str(&read_json_arg(t)?)?),
        None => None,
    };
    let cfg = MixtureGameConfig {
        p2: args.p2,
        channel_id,
        channel_noise,
        target,
    };
    let report = mixture_optimum_analysis(&cfg, &p_x_r, args.grid_step)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let err = pipeline_gradcheck(args.trials, args.h, args.seed)?;
    println!("max relative error {err:.3e} over {} trials", args.trials);
    if err >= 1e-5 {
        return Err(Error::numerical(format!(
            "gradient check failed: max relative error {err:.3e} >= 1e-5"
        )));
    }
    Ok(())
}
