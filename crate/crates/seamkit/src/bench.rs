//! Benchmark orchestration: per-method wall time and seam quality over a
//! corpus of image pairs, aggregated and written out as CSV plus per-pair
//! image artifacts.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::dp::{cost_map, dp_seam};
use crate::error::{Result, SeamError};
use crate::gc::gc_seam;
use crate::loss::{prepare_loss_space, LossBreakdown, LossEvaluator, LossSpace, LossWeights};
use crate::mask::{region_partition, Mask, MaskPair, RegionPartition, SoftMaskPair, ValidMasks};
use crate::metrics::{extract_seam, quality_sweep, Seam, SWEEP_MAX_N, SWEEP_MIN_N};
use crate::net::{predict, NetWeights};
use crate::optim::{binarize_mask, optimize_mask, OptimConfig};
use crate::raster::ImageF;
use crate::synth::{gen_synthetic_pair, SyntheticPairSpec};

/// A seam-prediction method the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BenchMethod {
    /// Cheapest monotone path over the pointwise cost map.
    Dp,
    /// Minimum cut on the pixel-adjacency graph.
    Gc,
    /// Per-pair soft-mask optimization.
    DseamOpt,
    /// One forward pass of a trained mask-prediction network.
    DseamNet,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 4] = [
        BenchMethod::Dp,
        BenchMethod::Gc,
        BenchMethod::DseamOpt,
        BenchMethod::DseamNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Dp => "dp",
            BenchMethod::Gc => "gc",
            BenchMethod::DseamOpt => "dseam-opt",
            BenchMethod::DseamNet => "dseam-net",
        }
    }
}

impl std::fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = SeamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp" => Ok(BenchMethod::Dp),
            "gc" => Ok(BenchMethod::Gc),
            "dseam-opt" => Ok(BenchMethod::DseamOpt),
            "dseam-net" => Ok(BenchMethod::DseamNet),
            other => Err(SeamError::InvalidParam(format!(
                "unknown method '{other}', expected dp|gc|dseam-opt|dseam-net"
            ))),
        }
    }
}

/// One loaded image pair, named after its file stem.
#[derive(Debug, Clone)]
pub struct CorpusPair {
    pub name: String,
    pub img_a: ImageF,
    pub img_b: ImageF,
    pub valid: ValidMasks,
}

fn io_err(path: &Path, source: std::io::Error) -> SeamError {
    SeamError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> SeamError {
    SeamError::ReportFormat {
        path: path.to_path_buf(),
        reason: source.to_string(),
    }
}

/// Renders seeded pairs into an in-memory corpus named `000`, `001`, ...
pub fn synth_corpus(specs: &[SyntheticPairSpec]) -> Result<Vec<CorpusPair>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let pair = gen_synthetic_pair(spec)?;
            Ok(CorpusPair {
                name: format!("{i:03}"),
                img_a: pair.img_a,
                img_b: pair.img_b,
                valid: pair.valid,
            })
        })
        .collect()
}

/// Writes a corpus as `<name>_A.png` / `<name>_B.png` plus explicit
/// `_mask.png` files so reloading does not depend on background pixels
/// surviving 8-bit quantization.
pub fn save_corpus(corpus: &[CorpusPair], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for pair in corpus {
        pair.img_a.save(dir.join(format!("{}_A.png", pair.name)))?;
        pair.img_b.save(dir.join(format!("{}_B.png", pair.name)))?;
        mask_to_image(&pair.valid.valid_a)
            .save(dir.join(format!("{}_A_mask.png", pair.name)))?;
        mask_to_image(&pair.valid.valid_b)
            .save(dir.join(format!("{}_B_mask.png", pair.name)))?;
    }
    Ok(())
}

/// Loads every `<name>_A.png` / `<name>_B.png` pair in a directory, sorted
/// by name. Valid masks come from `<name>_{A,B}_mask.png` when present and
/// are derived from the pixels otherwise.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusPair>> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let Some(file) = path.file_name().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(stem) = file.strip_suffix("_A.png") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    let mut corpus = Vec::with_capacity(stems.len());
    for name in stems {
        let path_b = dir.join(format!("{name}_B.png"));
        if !path_b.exists() {
            return Err(SeamError::InvalidParam(format!(
                "pair '{name}' has no B image at {}",
                path_b.display()
            )));
        }
        let img_a = ImageF::load(dir.join(format!("{name}_A.png")))?;
        let img_b = ImageF::load(&path_b)?;
        let valid_a = load_mask_or_derive(&dir.join(format!("{name}_A_mask.png")), &img_a)?;
        let valid_b = load_mask_or_derive(&dir.join(format!("{name}_B_mask.png")), &img_b)?;
        corpus.push(CorpusPair {
            name,
            img_a,
            img_b,
            valid: ValidMasks { valid_a, valid_b },
        });
    }
    if corpus.is_empty() {
        return Err(SeamError::InvalidParam(format!(
            "no *_A.png / *_B.png pairs found in {}",
            dir.display()
        )));
    }
    Ok(corpus)
}

fn load_mask_or_derive(path: &Path, img: &ImageF) -> Result<Mask> {
    if !path.exists() {
        return Ok(img.derive_valid_mask());
    }
    let raw = ImageF::load(path)?;
    if raw.height() != img.height() || raw.width() != img.width() {
        return Err(SeamError::DimensionMismatch(format!(
            "mask {} vs its image",
            path.display()
        )));
    }
    Ok(Mask::from_fn(raw.height(), raw.width(), |y, x| {
        raw.get(y, x, 0) >= 0.5
    }))
}

fn mask_to_image(mask: &Mask) -> ImageF {
    ImageF::from_fn(mask.height(), mask.width(), 1, true, |y, x, _| {
        if mask.get(y, x) {
            1.0
        } else {
            0.0
        }
    })
}

/// Harness settings shared by every method.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<BenchMethod>,
    /// Predictions run at this square resolution; quality is still scored
    /// at native resolution.
    pub working_size: usize,
    pub space: LossSpace,
    pub weights: LossWeights,
    pub optim: OptimConfig,
    /// Required when `methods` includes the network.
    pub net_weights: Option<NetWeights>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: vec![BenchMethod::Dp, BenchMethod::Gc, BenchMethod::DseamOpt],
            working_size: 256,
            space: LossSpace::Edge,
            weights: LossWeights::default(),
            optim: OptimConfig::default(),
            net_weights: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.working_size < 16 {
            return Err(SeamError::InvalidParam(format!(
                "working size must be at least 16, got {}",
                self.working_size
            )));
        }
        self.weights.validate()?;
        self.optim.validate()?;
        if self.methods.contains(&BenchMethod::DseamNet) && self.net_weights.is_none() {
            return Err(SeamError::InvalidParam(
                "method dseam-net requires a weights file".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one (method, pair) cell.
#[derive(Debug, Clone)]
pub enum CellResult {
    Ok {
        /// `(N, Q)` for every patch size in the sweep, at native resolution.
        sweep: Vec<(usize, f64)>,
        /// Selection loss of the final hard mask at working resolution.
        loss: LossBreakdown,
        /// Final masks at native resolution.
        masks: MaskPair,
        seam: Seam,
    },
    Failed {
        reason: String,
    },
}

/// One benchmark cell: a method applied to a pair.
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub method: BenchMethod,
    pub pair: String,
    /// Downscale plus prediction, excluding file I/O and quality scoring.
    pub time_s: f64,
    pub result: CellResult,
}

/// Per-method aggregates. Warm fields exclude the first pair, isolating
/// steady-state cost from first-call effects; with a single pair they fall
/// back to the all-pairs values.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodAggregate {
    pub method: BenchMethod,
    pub mean_time_s: f64,
    pub median_time_s: f64,
    /// Pairs attempted divided by total prediction time.
    pub fps: f64,
    pub warm_mean_time_s: f64,
    pub warm_fps: f64,
    /// `(N, mean Q)` over the cells that succeeded; empty if none did.
    pub mean_q: Vec<(usize, f64)>,
    pub ok_cells: usize,
}

/// Full benchmark result: one cell per requested (method, pair), plus
/// per-method aggregates.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    pub aggregates: Vec<MethodAggregate>,
    pub pair_count: usize,
}

/// Per-pair state reused across methods, outside the timed section.
struct PairContext {
    gray_a: ImageF,
    gray_b: ImageF,
    part: RegionPartition,
}

/// Runs one method on one pair at working resolution. The returned masks
/// live on the working grid.
pub fn run_method(
    method: BenchMethod,
    img_a: &ImageF,
    img_b: &ImageF,
    valid: &ValidMasks,
    part: &RegionPartition,
    cfg: &BenchConfig,
) -> Result<MaskPair> {
    match method {
        BenchMethod::Dp => {
            let cm = cost_map(img_a, img_b, part, cfg.space)?;
            Ok(dp_seam(&cm, part)?.masks)
        }
        BenchMethod::Gc => Ok(gc_seam(img_a, img_b, part, cfg.space)?.masks),
        BenchMethod::DseamOpt => {
            let (masks, _) = optimize_mask(img_a, img_b, valid, &cfg.optim, &cfg.weights, cfg.space)?;
            Ok(masks)
        }
        BenchMethod::DseamNet => {
            let weights = cfg
                .net_weights
                .as_ref()
                .ok_or_else(|| SeamError::InvalidParam("dseam-net requires weights".into()))?;
            predict(weights, img_a, img_b, valid)
        }
    }
}

/// One pair run end to end: native-resolution masks and seam plus the
/// prediction time (downscale to working resolution included).
#[derive(Debug, Clone)]
pub struct PairPrediction {
    pub masks: MaskPair,
    pub seam: Seam,
    pub time_s: f64,
}

/// Predicts at `cfg.working_size`, lifts the masks back to the native grid
/// and extracts the seam there.
pub fn predict_pair(
    method: BenchMethod,
    pair: &CorpusPair,
    cfg: &BenchConfig,
) -> Result<PairPrediction> {
    cfg.validate()?;
    let native_part = region_partition(&pair.valid)?;

    let started = Instant::now();
    let (working_masks, _) = predict_working(method, pair, cfg)?;
    let time_s = started.elapsed().as_secs_f64();

    let masks = masks_to_native(&working_masks, &pair.valid, &native_part)?;
    let seam = extract_seam(&masks, &native_part)?;
    Ok(PairPrediction {
        masks,
        seam,
        time_s,
    })
}

fn resize_mask_nearest(mask: &Mask, height: usize, width: usize) -> Result<Mask> {
    let img = mask_to_image(mask).resize_nearest(height, width)?;
    Ok(Mask::from_fn(height, width, |y, x| img.get(y, x, 0) >= 0.5))
}

fn mask_pair_to_soft(masks: &MaskPair) -> Result<SoftMaskPair> {
    SoftMaskPair::new(mask_to_image(&masks.mask_a))
}

/// Lifts working-resolution masks back onto the native grid and re-imposes
/// the partition invariants there.
fn masks_to_native(
    masks: &MaskPair,
    native_valid: &ValidMasks,
    native_part: &RegionPartition,
) -> Result<MaskPair> {
    let (h, w) = (native_part.height(), native_part.width());
    if masks.mask_a.height() == h && masks.mask_a.width() == w {
        return Ok(masks.clone());
    }
    let soft = SoftMaskPair::new(mask_to_image(&masks.mask_a).resize_nearest(h, w)?)?;
    let native = binarize_mask(&soft, native_valid, native_part, 0.5);
    native.validate(native_valid)?;
    Ok(native)
}

/// Runs every requested method over the corpus. Timing covers the
/// downscale to working resolution plus the prediction itself; quality is
/// evaluated afterwards at native resolution. A failing cell is recorded
/// with its reason and the run continues.
pub fn run_benchmark(corpus: &[CorpusPair], cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(SeamError::InvalidParam("benchmark corpus is empty".into()));
    }

    // Native-side context is evaluation machinery, not prediction, so it
    // stays outside the timers.
    let contexts: Vec<std::result::Result<PairContext, String>> = corpus
        .iter()
        .map(|pair| {
            let part = region_partition(&pair.valid).map_err(|e| e.to_string())?;
            let gray_a = pair.img_a.to_gray().map_err(|e| e.to_string())?;
            let gray_b = pair.img_b.to_gray().map_err(|e| e.to_string())?;
            Ok(PairContext {
                gray_a,
                gray_b,
                part,
            })
        })
        .collect();

    let mut cells = Vec::with_capacity(cfg.methods.len() * corpus.len());
    for &method in &cfg.methods {
        for (pair, context) in corpus.iter().zip(&contexts) {
            cells.push(run_cell(method, pair, context, cfg));
        }
    }

    let aggregates = cfg
        .methods
        .iter()
        .map(|&m| aggregate_method(m, &cells, corpus.len()))
        .collect();

    Ok(BenchReport {
        cells,
        aggregates,
        pair_count: corpus.len(),
    })
}

fn run_cell(
    method: BenchMethod,
    pair: &CorpusPair,
    context: &std::result::Result<PairContext, String>,
    cfg: &BenchConfig,
) -> BenchCell {
    let context = match context {
        Ok(c) => c,
        Err(reason) => {
            return BenchCell {
                method,
                pair: pair.name.clone(),
                time_s: 0.0,
                result: CellResult::Failed {
                    reason: reason.clone(),
                },
            }
        }
    };

    let started = Instant::now();
    let predicted = predict_working(method, pair, cfg);
    let time_s = started.elapsed().as_secs_f64();

    let result = match predicted {
        Ok((working_masks, working)) => {
            score_cell(&working_masks, &working, pair, context, cfg)
                .unwrap_or_else(|e| CellResult::Failed {
                    reason: e.to_string(),
                })
        }
        Err(e) => CellResult::Failed {
            reason: e.to_string(),
        },
    };
    BenchCell {
        method,
        pair: pair.name.clone(),
        time_s,
        result,
    }
}

/// Working-resolution images and geometry a prediction ran against.
struct WorkingInputs {
    img_a: ImageF,
    img_b: ImageF,
    valid: ValidMasks,
    part: RegionPartition,
}

/// The timed section: downscale to the working grid and predict.
fn predict_working(
    method: BenchMethod,
    pair: &CorpusPair,
    cfg: &BenchConfig,
) -> Result<(MaskPair, WorkingInputs)> {
    let ws = cfg.working_size;
    let native = pair.img_a.height() == ws && pair.img_a.width() == ws;
    let working = if native {
        WorkingInputs {
            img_a: pair.img_a.clone(),
            img_b: pair.img_b.clone(),
            valid: pair.valid.clone(),
            part: region_partition(&pair.valid)?,
        }
    } else {
        let img_a = pair.img_a.resize_bilinear(ws, ws)?;
        let img_b = pair.img_b.resize_bilinear(ws, ws)?;
        let valid = ValidMasks {
            valid_a: resize_mask_nearest(&pair.valid.valid_a, ws, ws)?,
            valid_b: resize_mask_nearest(&pair.valid.valid_b, ws, ws)?,
        };
        let part = region_partition(&valid)?;
        WorkingInputs {
            img_a,
            img_b,
            valid,
            part,
        }
    };
    let masks = run_method(
        method,
        &working.img_a,
        &working.img_b,
        &working.valid,
        &working.part,
        cfg,
    )?;
    Ok((masks, working))
}

/// The untimed section: loss of the hard mask, native lift, seam, sweep.
fn score_cell(
    working_masks: &MaskPair,
    working: &WorkingInputs,
    pair: &CorpusPair,
    context: &PairContext,
    cfg: &BenchConfig,
) -> Result<CellResult> {
    let (pa, pb) = prepare_loss_space(&working.img_a, &working.img_b, cfg.space)?;
    let evaluator = LossEvaluator::new(&pa, &pb, &working.valid, &working.part, cfg.weights)?;
    let loss = evaluator.evaluate(&mask_pair_to_soft(working_masks)?)?;

    let masks = masks_to_native(working_masks, &pair.valid, &context.part)?;
    let seam = extract_seam(&masks, &context.part)?;
    let sweep = quality_sweep(&context.gray_a, &context.gray_b, &seam)?;
    Ok(CellResult::Ok {
        sweep,
        loss,
        masks,
        seam,
    })
}

fn aggregate_method(method: BenchMethod, cells: &[BenchCell], pair_count: usize) -> MethodAggregate {
    let mine: Vec<&BenchCell> = cells.iter().filter(|c| c.method == method).collect();
    let times: Vec<f64> = mine.iter().map(|c| c.time_s).collect();
    let total: f64 = times.iter().sum();
    let mean_time_s = total / times.len() as f64;
    let mut sorted = times.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let median_time_s = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let fps = pair_count as f64 / total;

    let (warm_mean_time_s, warm_fps) = if times.len() > 1 {
        let warm_total: f64 = times[1..].iter().sum();
        let warm_n = (times.len() - 1) as f64;
        (warm_total / warm_n, warm_n / warm_total)
    } else {
        (mean_time_s, fps)
    };

    let mut q_sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut ok_cells = 0;
    for cell in &mine {
        if let CellResult::Ok { sweep, .. } = &cell.result {
            ok_cells += 1;
            for &(n, q) in sweep {
                let entry = q_sums.entry(n).or_insert((0.0, 0));
                entry.0 += q;
                entry.1 += 1;
            }
        }
    }
    let mean_q = q_sums
        .into_iter()
        .map(|(n, (sum, count))| (n, sum / count as f64))
        .collect();

    MethodAggregate {
        method,
        mean_time_s,
        median_time_s,
        fps,
        warm_mean_time_s,
        warm_fps,
        mean_q,
        ok_cells,
    }
}

/// Writes `bench.csv`, `summary.csv`, `failures.csv`, and per-cell PNGs
/// (composite, mask, seam overlay) into `dir`. Numbers are printed with
/// shortest round-trip formatting so parsing them back is exact.
pub fn emit_report(report: &BenchReport, corpus: &[CorpusPair], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let by_name: BTreeMap<&str, &CorpusPair> =
        corpus.iter().map(|p| (p.name.as_str(), p)).collect();

    let bench_path = dir.join("bench.csv");
    let mut bench = csv::Writer::from_path(&bench_path).map_err(|e| csv_err(&bench_path, e))?;
    let mut put = |record: [&str; 5]| -> Result<()> {
        bench.write_record(record).map_err(|e| csv_err(&bench_path, e))
    };
    put(["method", "pair", "time_s", "n", "q_seam"])?;
    for cell in &report.cells {
        match &cell.result {
            CellResult::Ok { sweep, .. } => {
                for &(n, q) in sweep {
                    put([
                        cell.method.name(),
                        &cell.pair,
                        &cell.time_s.to_string(),
                        &n.to_string(),
                        &q.to_string(),
                    ])?;
                }
            }
            CellResult::Failed { .. } => {
                // Failed cells keep the row cardinality with empty scores.
                for n in SWEEP_MIN_N..=SWEEP_MAX_N {
                    put([
                        cell.method.name(),
                        &cell.pair,
                        &cell.time_s.to_string(),
                        &n.to_string(),
                        "",
                    ])?;
                }
            }
        }
    }
    bench.flush().map_err(|e| io_err(&bench_path, e))?;
    drop(bench);

    let summary_path = dir.join("summary.csv");
    let mut summary =
        csv::Writer::from_path(&summary_path).map_err(|e| csv_err(&summary_path, e))?;
    let mut header = vec![
        "method".to_string(),
        "mean_time_s".to_string(),
        "median_time_s".to_string(),
        "fps".to_string(),
        "warm_mean_time_s".to_string(),
        "warm_fps".to_string(),
    ];
    header.extend((SWEEP_MIN_N..=SWEEP_MAX_N).map(|n| format!("mean_q_{n}")));
    summary
        .write_record(&header)
        .map_err(|e| csv_err(&summary_path, e))?;
    for agg in &report.aggregates {
        let mut row = vec![
            agg.method.name().to_string(),
            agg.mean_time_s.to_string(),
            agg.median_time_s.to_string(),
            agg.fps.to_string(),
            agg.warm_mean_time_s.to_string(),
            agg.warm_fps.to_string(),
        ];
        let by_n: BTreeMap<usize, f64> = agg.mean_q.iter().copied().collect();
        for n in SWEEP_MIN_N..=SWEEP_MAX_N {
            row.push(by_n.get(&n).map(|q| q.to_string()).unwrap_or_default());
        }
        summary
            .write_record(&row)
            .map_err(|e| csv_err(&summary_path, e))?;
    }
    summary.flush().map_err(|e| io_err(&summary_path, e))?;

    let failures_path = dir.join("failures.csv");
    let mut failures =
        std::fs::File::create(&failures_path).map_err(|e| io_err(&failures_path, e))?;
    let mut line = |text: String| -> Result<()> {
        writeln!(failures, "{text}").map_err(|e| io_err(&failures_path, e))
    };
    line("method,pair,reason".into())?;
    for cell in &report.cells {
        if let CellResult::Failed { reason } = &cell.result {
            line(format!(
                "{},{},{}",
                cell.method.name(),
                cell.pair,
                reason.replace(',', ";")
            ))?;
        }
    }

    for cell in &report.cells {
        let CellResult::Ok { masks, seam, .. } = &cell.result else {
            continue;
        };
        let pair = by_name.get(cell.pair.as_str()).ok_or_else(|| {
            SeamError::InvalidParam(format!("report names pair '{}' not in corpus", cell.pair))
        })?;
        let stem = format!("{}_{}", cell.pair, cell.method.name());
        write_pair_artifacts(dir, &stem, &pair.img_a, &pair.img_b, masks, seam)?;
    }
    Ok(())
}

/// Writes `{stem}_composite.png`, `{stem}_mask.png` (A white, B black,
/// background gray) and `{stem}_seam.png` (composite with the seam in red)
/// into `dir`.
pub fn write_pair_artifacts(
    dir: &Path,
    stem: &str,
    img_a: &ImageF,
    img_b: &ImageF,
    masks: &MaskPair,
    seam: &Seam,
) -> Result<()> {
    let composite = ImageF::compose(img_a, img_b, masks)?;
    composite.save(dir.join(format!("{stem}_composite.png")))?;

    let label = ImageF::from_fn(
        masks.mask_a.height(),
        masks.mask_a.width(),
        1,
        true,
        |y, x, _| {
            if masks.mask_a.get(y, x) {
                1.0
            } else if masks.mask_b.get(y, x) {
                0.0
            } else {
                0.5
            }
        },
    );
    label.save(dir.join(format!("{stem}_mask.png")))?;

    let mut overlay = composite;
    for &(y, x) in seam.pixels() {
        overlay.set(y, x, 0, 1.0);
        overlay.set(y, x, 1, 0.0);
        overlay.set(y, x, 2, 0.0);
    }
    overlay.save(dir.join(format!("{stem}_seam.png")))?;
    Ok(())
}

/// Reads a `summary.csv` produced by [`emit_report`] back into aggregates.
/// The file does not record `ok_cells`, so that field comes back as 0.
pub fn parse_summary(path: &Path) -> Result<Vec<MethodAggregate>> {
    let bad = |reason: String| SeamError::ReportFormat {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut aggregates = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| bad(format!("summary row too short: {record:?}")))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .parse()
                .map_err(|e| bad(format!("bad summary number: {e}")))
        };
        let method: BenchMethod = field(0)?.parse()?;
        let mut mean_q = Vec::new();
        for (offset, n) in (SWEEP_MIN_N..=SWEEP_MAX_N).enumerate() {
            let cell = field(6 + offset)?;
            if !cell.is_empty() {
                let q = cell
                    .parse::<f64>()
                    .map_err(|e| bad(format!("bad summary number: {e}")))?;
                mean_q.push((n, q));
            }
        }
        aggregates.push(MethodAggregate {
            method,
            mean_time_s: num(1)?,
            median_time_s: num(2)?,
            fps: num(3)?,
            warm_mean_time_s: num(4)?,
            warm_fps: num(5)?,
            mean_q,
            ok_cells: 0,
        });
    }
    Ok(aggregates)
}
