//! `seamkit` binary: synthesize stitching pairs, predict seams with any of
//! the four methods, train the mask network, score masks, and benchmark.
//!
//! Every long flag can also come from a `--config` file (`key = value`
//! lines, keyed by flag name); explicit flags override the file. Errors are
//! printed to stderr as a single JSON line and exit nonzero.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use seamkit::bench::{
    emit_report, load_corpus, predict_pair, run_benchmark, save_corpus, synth_corpus,
    write_pair_artifacts, BenchConfig, BenchMethod, CorpusPair,
};
use seamkit::mask::region_partition;
use seamkit::metrics::{extract_seam, quality_sweep};
use seamkit::net::{train, NetConfig, NetWeights, TrainConfig, TrainPair};
use seamkit::optim::OptimConfig;
use seamkit::synth::{standard_suite, BandAxis, SyntheticPairSpec, TextureKind};
use seamkit::{ImageF, LossSpace, LossWeights, Mask, MaskPair, ValidMasks};

use config::Settings;

#[derive(Parser)]
#[command(
    name = "seamkit",
    version,
    about = "Seam prediction and evaluation toolkit for image stitching"
)]
struct Cli {
    /// Config file with `key = value` defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Space the losses and cost maps are computed in: rgb, gray or edge.
    #[arg(long, global = true)]
    space: Option<LossSpace>,

    /// Patch size of the patch loss, odd and at least 3.
    #[arg(long, global = true)]
    m: Option<usize>,

    /// Weight of the source-fidelity loss term.
    #[arg(long, global = true)]
    w1: Option<f64>,

    /// Weight of the patch loss term.
    #[arg(long, global = true)]
    w2: Option<f64>,

    /// Frame edge for synthesis and working resolution for prediction.
    #[arg(long, global = true)]
    size: Option<usize>,

    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Network weights file: read by seam/bench, written by train.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of image pairs into --out.
    Synth(SynthArgs),
    /// Predict a seam for one pair and write mask, seam and composite PNGs.
    Seam(SeamArgs),
    /// Train the mask prediction network and write a weights file.
    Train(TrainArgs),
    /// Score an existing selection mask with the seam quality sweep.
    Eval(EvalArgs),
    /// Run methods over a corpus and emit CSV reports plus artifacts.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Number of pairs; seeds run from --seed upwards.
    #[arg(long)]
    count: Option<usize>,
    /// Texture: gradient, blobs or checker.
    #[arg(long)]
    texture: Option<TextureKind>,
    /// Axis of the parallax band: horizontal or vertical.
    #[arg(long)]
    band_axis: Option<BandAxis>,
    /// Parallax shift inside the band, in pixels. Zero disables the band.
    #[arg(long)]
    band_offset: Option<usize>,
    /// Band extent across its axis, in pixels.
    #[arg(long)]
    band_width: Option<usize>,
    /// Amplitude of per-pixel uniform noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Brightness offset applied to the second image.
    #[arg(long)]
    exposure: Option<f64>,
    /// Generate the fixed 20-pair benchmark suite, ignoring the flags above.
    #[arg(long)]
    suite: bool,
}

#[derive(clap::Args)]
struct SeamArgs {
    /// Method: dp, gc, dseam-opt or dseam-net.
    method: BenchMethod,
    /// First input image.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Second input image.
    #[arg(long)]
    b: Option<PathBuf>,
    /// Valid-pixel mask for the first image; derived from content if absent.
    #[arg(long)]
    a_mask: Option<PathBuf>,
    /// Valid-pixel mask for the second image; derived from content if absent.
    #[arg(long)]
    b_mask: Option<PathBuf>,
    /// Optimizer step budget for dseam-opt.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Directory of corpus pairs; the built-in suite is synthesized if absent.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Adam iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Network input edge length; corpus pairs are resized to it.
    #[arg(long)]
    input_size: Option<usize>,
    /// Encoder widths as three comma separated channel counts.
    #[arg(long)]
    widths: Option<String>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// First input image.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Second input image.
    #[arg(long)]
    b: Option<PathBuf>,
    /// Selection mask: pixels at or above half intensity take the first image.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Valid-pixel mask for the first image; derived from content if absent.
    #[arg(long)]
    a_mask: Option<PathBuf>,
    /// Valid-pixel mask for the second image; derived from content if absent.
    #[arg(long)]
    b_mask: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Directory of corpus pairs; the built-in suite is synthesized if absent.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma separated methods out of dp, gc, dseam-opt, dseam-net.
    #[arg(long)]
    methods: Option<String>,
    /// Optimizer step budget for dseam-opt.
    #[arg(long)]
    steps: Option<usize>,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return;
            }
            emit_error_line(&e.to_string());
            std::process::exit(2);
        }
    };
    if let Err(e) = run(&cli) {
        emit_error_line(&format!("{e:#}"));
        std::process::exit(1);
    }
}

/// One JSON object per failure keeps stderr parseable even when the
/// message itself spans lines.
fn emit_error_line(message: &str) {
    eprintln!("{}", serde_json::json!({ "error": message }));
}

fn run(cli: &Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::empty(),
    };
    let shared = resolve_shared(cli, &settings)?;
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, &shared, &settings),
        Command::Seam(args) => cmd_seam(args, &shared, &settings),
        Command::Train(args) => cmd_train(args, &shared, &settings),
        Command::Eval(args) => cmd_eval(args, &shared, &settings),
        Command::Bench(args) => cmd_bench(args, &shared, &settings),
    }
}

/// Flags shared by every subcommand, resolved against the config file.
struct Shared {
    space: LossSpace,
    loss_weights: LossWeights,
    size: usize,
    seed: u64,
    weights_path: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn resolve_shared(cli: &Cli, s: &Settings) -> Result<Shared> {
    let defaults = LossWeights::default();
    Ok(Shared {
        space: s.resolve_or(cli.space, "space", LossSpace::Edge)?,
        loss_weights: LossWeights {
            w1: s.resolve_or(cli.w1, "w1", defaults.w1)?,
            w2: s.resolve_or(cli.w2, "w2", defaults.w2)?,
            m: s.resolve_or(cli.m, "m", defaults.m)?,
        },
        size: s.resolve_or(cli.size, "size", 256)?,
        seed: s.resolve_or(cli.seed, "seed", 0)?,
        weights_path: s.resolve(cli.weights.clone(), "weights")?,
        out: s.resolve(cli.out.clone(), "out")?,
    })
}

fn require_out(shared: &Shared) -> Result<&Path> {
    shared
        .out
        .as_deref()
        .ok_or_else(|| anyhow!("missing required option --out (flag or config file)"))
}

fn cmd_synth(args: &SynthArgs, shared: &Shared, s: &Settings) -> Result<()> {
    let out = require_out(shared)?;
    let suite = args.suite || s.resolve(None::<bool>, "suite")?.unwrap_or(false);
    let specs: Vec<SyntheticPairSpec> = if suite {
        standard_suite(shared.size)
    } else {
        let count = s.resolve_or(args.count, "count", 8)?;
        let base = SyntheticPairSpec {
            size: shared.size,
            texture: s.resolve_or(args.texture, "texture", TextureKind::Blobs)?,
            band_axis: s.resolve_or(args.band_axis, "band-axis", BandAxis::Horizontal)?,
            band_offset: s.resolve_or(args.band_offset, "band-offset", 0)?,
            band_width: s.resolve_or(args.band_width, "band-width", 0)?,
            noise: s.resolve_or(args.noise, "noise", 0.0)?,
            exposure_delta: s.resolve_or(args.exposure, "exposure", 0.0)?,
            ..SyntheticPairSpec::default()
        };
        (0..count)
            .map(|i| SyntheticPairSpec {
                seed: shared.seed + i as u64,
                ..base
            })
            .collect()
    };
    let corpus = synth_corpus(&specs)?;
    save_corpus(&corpus, out)?;
    println!("wrote {} pairs to {}", corpus.len(), out.display());
    Ok(())
}

fn cmd_seam(args: &SeamArgs, shared: &Shared, s: &Settings) -> Result<()> {
    let out = require_out(shared)?;
    let a_path: PathBuf = s.require(args.a.clone(), "a")?;
    let b_path: PathBuf = s.require(args.b.clone(), "b")?;
    let pair = load_pair(
        &a_path,
        &b_path,
        s.resolve(args.a_mask.clone(), "a-mask")?.as_deref(),
        s.resolve(args.b_mask.clone(), "b-mask")?.as_deref(),
    )?;
    let cfg = bench_config(shared, vec![args.method], s.resolve(args.steps, "steps")?)?;
    let pred = predict_pair(args.method, &pair, &cfg)?;

    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let stem = format!("{}_{}", pair.name, args.method.name());
    write_pair_artifacts(out, &stem, &pair.img_a, &pair.img_b, &pred.masks, &pred.seam)?;
    println!(
        "method={} pair={} time_s={} seam_len={} out={}",
        args.method,
        pair.name,
        pred.time_s,
        pred.seam.pixels().len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, shared: &Shared, s: &Settings) -> Result<()> {
    let weights_path = shared
        .weights_path
        .clone()
        .ok_or_else(|| anyhow!("missing required option --weights (flag or config file)"))?;
    let ncfg_default = NetConfig::default();
    let ncfg = NetConfig {
        input_size: s.resolve_or(args.input_size, "input-size", ncfg_default.input_size)?,
        widths: match s.resolve(args.widths.clone(), "widths")? {
            Some(text) => parse_widths(&text)?,
            None => ncfg_default.widths,
        },
    };
    let tcfg_default = TrainConfig::default();
    let tcfg = TrainConfig {
        iterations: s.resolve_or(args.iterations, "iterations", tcfg_default.iterations)?,
        learning_rate: s.resolve_or(args.lr, "lr", tcfg_default.learning_rate)?,
        seed: shared.seed,
        ..tcfg_default
    };
    let corpus = match s.resolve(args.corpus.clone(), "corpus")? {
        Some(dir) => load_corpus(&dir)?,
        None => synth_corpus(&standard_suite(shared.size))?,
    };
    let pairs = corpus
        .iter()
        .map(|p| resize_train_pair(p, ncfg.input_size))
        .collect::<Result<Vec<_>>>()?;

    let (weights, curve) = train(&pairs, ncfg, &tcfg, &shared.loss_weights, shared.space)?;
    weights.save(&weights_path)?;

    if let Some(out) = &shared.out {
        std::fs::create_dir_all(out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        let curve_path = out.join("train_curve.csv");
        let mut file = std::fs::File::create(&curve_path)
            .with_context(|| format!("cannot write {}", curve_path.display()))?;
        writeln!(file, "iter,loss")?;
        for (i, loss) in curve.iter().enumerate() {
            writeln!(file, "{i},{loss}")?;
        }
        println!("wrote loss curve to {}", curve_path.display());
    }
    let first = curve.first().copied().unwrap_or(f64::NAN);
    let last = curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} iterations on {} pairs: loss {first} -> {last}",
        tcfg.iterations,
        pairs.len()
    );
    println!("wrote weights to {}", weights_path.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs, shared: &Shared, s: &Settings) -> Result<()> {
    let a_path: PathBuf = s.require(args.a.clone(), "a")?;
    let b_path: PathBuf = s.require(args.b.clone(), "b")?;
    let mask_path: PathBuf = s.require(args.mask.clone(), "mask")?;
    let pair = load_pair(
        &a_path,
        &b_path,
        s.resolve(args.a_mask.clone(), "a-mask")?.as_deref(),
        s.resolve(args.b_mask.clone(), "b-mask")?.as_deref(),
    )?;
    let selection = load_mask_file(&mask_path)?;
    if selection.height() != pair.img_a.height() || selection.width() != pair.img_a.width() {
        bail!(
            "selection mask is {}x{} but the images are {}x{}",
            selection.height(),
            selection.width(),
            pair.img_a.height(),
            pair.img_a.width()
        );
    }
    // The selection chooses A where it is on; everything else valid in B
    // falls to B. Validation rejects selections that starve either side.
    let mask_a = selection.and(&pair.valid.valid_a);
    let mask_b = pair.valid.valid_b.and_not(&mask_a);
    let masks = MaskPair { mask_a, mask_b };
    masks.validate(&pair.valid)?;

    let part = region_partition(&pair.valid)?;
    let seam = extract_seam(&masks, &part)?;
    let sweep = quality_sweep(&pair.img_a.to_gray()?, &pair.img_b.to_gray()?, &seam)?;

    let mut text = String::from("n,q_seam\n");
    for (n, q) in &sweep {
        text.push_str(&format!("{n},{q}\n"));
    }
    print!("{text}");
    if let Some(out) = &shared.out {
        std::fs::create_dir_all(out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        let path = out.join("eval.csv");
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs, shared: &Shared, s: &Settings) -> Result<()> {
    let out = require_out(shared)?;
    let methods = parse_methods(&s.resolve_or(
        args.methods.clone(),
        "methods",
        "dp,gc,dseam-opt".into(),
    )?)?;
    let cfg = bench_config(shared, methods, s.resolve(args.steps, "steps")?)?;
    let corpus = match s.resolve(args.corpus.clone(), "corpus")? {
        Some(dir) => load_corpus(&dir)?,
        None => synth_corpus(&standard_suite(shared.size))?,
    };

    let report = run_benchmark(&corpus, &cfg)?;
    emit_report(&report, &corpus, out)?;
    for agg in &report.aggregates {
        let q15 = agg
            .mean_q
            .iter()
            .find(|(n, _)| *n == 15)
            .map(|(_, q)| format!("{q:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "method={} ok={}/{} mean_time_s={:.4} warm_fps={:.2} mean_q15={q15}",
            agg.method, agg.ok_cells, report.pair_count, agg.mean_time_s, agg.warm_fps
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

/// Builds the prediction config shared by `seam` and `bench`. Network
/// weights are loaded only when a method needs them.
fn bench_config(
    shared: &Shared,
    methods: Vec<BenchMethod>,
    steps: Option<usize>,
) -> Result<BenchConfig> {
    let mut optim = OptimConfig {
        seed: shared.seed,
        ..OptimConfig::default()
    };
    if let Some(steps) = steps {
        optim.max_steps = steps;
    }
    let net_weights = if methods.contains(&BenchMethod::DseamNet) {
        let path = shared
            .weights_path
            .as_ref()
            .ok_or_else(|| anyhow!("dseam-net requires --weights (flag or config file)"))?;
        Some(NetWeights::load(path)?)
    } else {
        None
    };
    Ok(BenchConfig {
        methods,
        working_size: shared.size,
        space: shared.space,
        weights: shared.loss_weights,
        optim,
        net_weights,
    })
}

fn parse_methods(text: &str) -> Result<Vec<BenchMethod>> {
    let methods = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(BenchMethod::from_str)
        .collect::<seamkit::Result<Vec<_>>>()?;
    if methods.is_empty() {
        bail!("--methods lists no methods");
    }
    Ok(methods)
}

fn parse_widths(text: &str) -> Result<[usize; 3]> {
    let parts = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("cannot parse --widths '{text}'"))?;
    let [a, b, c] = parts.as_slice() else {
        bail!("--widths needs exactly three comma separated values");
    };
    Ok([*a, *b, *c])
}

/// Reads a mask image: channel 0 at or above half intensity is on.
fn load_mask_file(path: &Path) -> Result<Mask> {
    let img = ImageF::load(path)?;
    Ok(Mask::from_fn(img.height(), img.width(), |y, x| {
        img.get(y, x, 0) >= 0.5
    }))
}

/// Loads a pair plus its valid masks, deriving validity from non-black
/// content when no mask file is given.
fn load_pair(
    a: &Path,
    b: &Path,
    a_mask: Option<&Path>,
    b_mask: Option<&Path>,
) -> Result<CorpusPair> {
    let img_a = ImageF::load(a)?;
    let img_b = ImageF::load(b)?;
    let valid_a = match a_mask {
        Some(path) => load_mask_file(path)?,
        None => img_a.derive_valid_mask(),
    };
    let valid_b = match b_mask {
        Some(path) => load_mask_file(path)?,
        None => img_b.derive_valid_mask(),
    };
    let name = a
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("pair")
        .trim_end_matches("_A")
        .to_string();
    Ok(CorpusPair {
        name,
        img_a,
        img_b,
        valid: ValidMasks { valid_a, valid_b },
    })
}

/// Brings a corpus pair onto the network input grid: bilinear for images,
/// nearest for validity.
fn resize_train_pair(pair: &CorpusPair, n: usize) -> Result<TrainPair> {
    if pair.img_a.height() == n && pair.img_a.width() == n {
        return Ok(TrainPair {
            img_a: pair.img_a.clone(),
            img_b: pair.img_b.clone(),
            valid: pair.valid.clone(),
        });
    }
    let resize_mask = |mask: &Mask| -> Result<Mask> {
        let img = ImageF::from_fn(mask.height(), mask.width(), 1, true, |y, x, _| {
            if mask.get(y, x) {
                1.0
            } else {
                0.0
            }
        })
        .resize_nearest(n, n)?;
        Ok(Mask::from_fn(n, n, |y, x| img.get(y, x, 0) >= 0.5))
    };
    Ok(TrainPair {
        img_a: pair.img_a.resize_bilinear(n, n)?,
        img_b: pair.img_b.resize_bilinear(n, n)?,
        valid: ValidMasks {
            valid_a: resize_mask(&pair.valid.valid_a)?,
            valid_b: resize_mask(&pair.valid.valid_b)?,
        },
    })
}
