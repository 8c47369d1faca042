//! Acceptance gate: ten criteria covering gradient correctness, baseline
//! optimality oracles, loss structure, quality and timing orderings,
//! training behavior, metric invariances and whole-pipeline determinism.
//! Criteria run sequentially in one test so wall-time budgets are honest;
//! each prints one PASS/FAIL line (shown with `--nocapture`) and any
//! failure fails the test at the end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seamkit::bench::{
    emit_report, run_benchmark, save_corpus, synth_corpus, BenchConfig, BenchMethod, BenchReport,
    CellResult,
};
use seamkit::dp::{cost_map, dp_seam, CostMap};
use seamkit::gc::{build_seam_graph, FlowGraph};
use seamkit::loss::{prepare_loss_space, LossEvaluator};
use seamkit::mask::{region_partition, Region};
use seamkit::metrics::{extract_seam, quality_sweep, Seam};
use seamkit::net::{make_input, train, NetConfig, NetWeights, TrainConfig, TrainPair};
use seamkit::optim::OptimConfig;
use seamkit::synth::{
    gen_synthetic_pair, standard_suite, BandAxis, SyntheticPairSpec, TextureKind,
};
use seamkit::{ImageF, LossSpace, LossWeights, Mask, MaskPair, SoftMaskPair, ValidMasks};

// Pinned tolerances and thresholds. Changing any of these changes what the
// gate accepts, so they live here rather than in helper defaults.
const GRAD_FD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const DP_COST_TOL: f64 = 1e-9;
const FLOW_TOL: f64 = 1e-9;
const WIN_FRACTION: f64 = 0.8;
const GC_MEAN_FACTOR: f64 = 1.1;
const TIME_RATIO: f64 = 3.0;
const TRAIN_DROP_RATIO: f64 = 0.25;
const NET_FD_LADDER: [f64; 4] = [1e-4, 1e-5, 1e-6, 1e-7];
const NET_REL_TOL: f64 = 1e-3;
const INVARIANCE_TOL: f64 = 1e-9;
// The seam graph rule the min-cut oracle rebuilds independently.
const N_LINK_EPS: f64 = 1e-6;
const TERMINAL_CAPACITY: f64 = 1e30;

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

#[test]
fn acceptance_criteria() {
    let criteria = [
        Criterion {
            id: 1,
            name: "loss gradient matches central finite differences",
            budget: Some(Duration::from_secs(60)),
            run: criterion_gradient,
        },
        Criterion {
            id: 2,
            name: "dp cost equals exhaustive monotone-path minimum",
            budget: Some(Duration::from_secs(10)),
            run: criterion_dp_optimal,
        },
        Criterion {
            id: 3,
            name: "max-flow equals exhaustive min-cut",
            budget: Some(Duration::from_secs(10)),
            run: criterion_mincut,
        },
        Criterion {
            id: 4,
            name: "binary-mask loss structure",
            budget: Some(Duration::from_secs(60)),
            run: criterion_loss_structure,
        },
        Criterion {
            id: 5,
            name: "quality ordering dseam-opt vs dp and gc",
            budget: Some(Duration::from_secs(600)),
            run: criterion_quality_ordering,
        },
        Criterion {
            id: 6,
            name: "edge-space ablation for dseam-opt",
            budget: Some(Duration::from_secs(900)),
            run: criterion_space_ablation,
        },
        Criterion {
            id: 7,
            name: "timing ordering gc vs dp and net inference",
            budget: Some(Duration::from_secs(300)),
            run: criterion_timing,
        },
        Criterion {
            id: 8,
            name: "network training drop and gradient spot-check",
            budget: Some(Duration::from_secs(600)),
            run: criterion_training,
        },
        Criterion {
            id: 9,
            name: "metric floor and affine invariance",
            budget: Some(Duration::from_secs(60)),
            run: criterion_metric_floor,
        },
        Criterion {
            id: 10,
            name: "pipeline determinism",
            budget: None,
            run: criterion_determinism,
        },
    ];

    let mut failures = Vec::new();
    for c in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(p.as_ref()))));
        let elapsed = started.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(detail), Some(budget)) if elapsed > budget => Err(format!(
                "{detail}; exceeded {}s budget",
                budget.as_secs()
            )),
            (other, _) => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!(
            "criterion {:2} {tag} ({:7.1}s) {}: {detail}",
            c.id,
            elapsed.as_secs_f64(),
            c.name
        );
        if outcome.is_err() {
            failures.push(format!("criterion {} ({}): {detail}", c.id, c.name));
        }
    }
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_image(h: usize, w: usize, ch: usize, seed: u64) -> ImageF {
    let mut r = rng(seed);
    let data: Vec<f64> = (0..h * w * ch).map(|_| r.gen_range(0.0..1.0)).collect();
    ImageF::from_fn(h, w, ch, true, |y, x, c| data[(y * w + x) * ch + c])
}

/// A covers columns [0, a_end), B covers [b_start, w).
fn strip_valid(h: usize, w: usize, a_end: usize, b_start: usize) -> ValidMasks {
    ValidMasks {
        valid_a: Mask::from_fn(h, w, |_, x| x < a_end),
        valid_b: Mask::from_fn(h, w, |_, x| x >= b_start),
    }
}

/// A covers rows [0, a_end), B covers [b_start, h).
fn vstrip_valid(h: usize, w: usize, a_end: usize, b_start: usize) -> ValidMasks {
    ValidMasks {
        valid_a: Mask::from_fn(h, w, |y, _| y < a_end),
        valid_b: Mask::from_fn(h, w, |y, _| y >= b_start),
    }
}

fn binary_soft(masks: &MaskPair) -> Result<SoftMaskPair, String> {
    let img = ImageF::from_fn(
        masks.mask_a.height(),
        masks.mask_a.width(),
        1,
        true,
        |y, x, _| masks.mask_a.get(y, x) as u8 as f64,
    );
    SoftMaskPair::new(img).map_err(err)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

// Criterion 1. The loss is piecewise linear in every soft-mask coordinate,
// so a central difference is exact away from kinks and the central second
// difference is a kink detector: nonzero curvature means a fold of |.| or
// min sits inside the probe window, where differencing is meaningless.
fn criterion_gradient() -> Outcome {
    let spaces = [LossSpace::Rgb, LossSpace::Gray, LossSpace::Edge];
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut kinks = 0usize;
    for pair_idx in 0..20u64 {
        let mut geo = rng(900 + pair_idx);
        let a_end = geo.gen_range(10..=13);
        let b_start = geo.gen_range(3..=6);
        let valid = strip_valid(16, 16, a_end, b_start);
        let part = region_partition(&valid).map_err(err)?;
        let img_a = random_image(16, 16, 3, 1000 + pair_idx);
        let img_b = random_image(16, 16, 3, 2000 + pair_idx);
        let soft_img = {
            let mut r = rng(3000 + pair_idx);
            let vals: Vec<f64> = (0..16 * 16).map(|_| r.gen_range(0.1..0.9)).collect();
            ImageF::from_fn(16, 16, 1, true, |y, x, _| vals[y * 16 + x])
        };
        for space in spaces {
            let (pa, pb) = prepare_loss_space(&img_a, &img_b, space).map_err(err)?;
            for m in [3usize, 9] {
                let weights = LossWeights {
                    m,
                    ..LossWeights::default()
                };
                let eval = LossEvaluator::new(&pa, &pb, &valid, &part, weights).map_err(err)?;
                let soft = SoftMaskPair::new(soft_img.clone()).map_err(err)?;
                let (bd0, grad) = eval.evaluate_with_gradient(&soft).map_err(err)?;
                let f0 = bd0.total;
                let probe = |y: usize, x: usize, v: f64| -> Result<f64, String> {
                    let mut s = soft_img.clone();
                    s.set(y, x, 0, v);
                    Ok(eval
                        .evaluate(&SoftMaskPair::new(s).map_err(err)?)
                        .map_err(err)?
                        .total)
                };
                for y in 0..16 {
                    for x in 0..16 {
                        let g = grad.get(y, x, 0);
                        if g.abs() <= 1e-8 {
                            continue;
                        }
                        let base = soft_img.get(y, x, 0);
                        let fp = probe(y, x, base + GRAD_FD_STEP)?;
                        let fm = probe(y, x, base - GRAD_FD_STEP)?;
                        if (fp + fm - 2.0 * f0).abs() > 1e-7 * f0.abs().max(1.0) {
                            kinks += 1;
                            continue;
                        }
                        let fd = (fp - fm) / (2.0 * GRAD_FD_STEP);
                        let rel = (fd - g).abs() / fd.abs().max(g.abs());
                        if rel > max_rel {
                            max_rel = rel;
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    if checked < 5_000 {
        return Err(format!("only {checked} gradient probes ran"));
    }
    let detail = format!(
        "max relative error {max_rel:.3e} over {checked} probes, {kinks} kink-straddling probes excluded"
    );
    if max_rel <= GRAD_REL_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Criterion 2. Exhaustive enumeration of the same monotone path family the
// DP searches: one cell per scan line inside that line's overlap span, at
// most one sideways step between lines, free endpoints.
fn brute_force_path_cost(cm: &CostMap, part: &seamkit::RegionPartition) -> Result<f64, String> {
    let dy = part.q1.y.abs_diff(part.q2.y);
    let dx = part.q1.x.abs_diff(part.q2.x);
    let row_scan = dy >= dx;
    let scan_len = if row_scan { part.height() } else { part.width() };
    let mut spans: Vec<Option<(usize, usize)>> = vec![None; scan_len];
    for (y, x) in part.overlap_pixels() {
        let (r, c) = if row_scan { (y, x) } else { (x, y) };
        let e = spans[r].get_or_insert((c, c));
        e.0 = e.0.min(c);
        e.1 = e.1.max(c);
    }
    let row_lo = spans
        .iter()
        .position(Option::is_some)
        .ok_or("empty overlap")?;
    let lines: Vec<(usize, usize)> = spans.iter().copied().flatten().collect();

    fn walk(
        lines: &[(usize, usize)],
        li: usize,
        c: usize,
        acc: f64,
        cost_at: &dyn Fn(usize, usize) -> f64,
        best: &mut f64,
    ) {
        let acc = acc + cost_at(li, c);
        if li + 1 == lines.len() {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        let (lo, hi) = lines[li + 1];
        for d in [-1i64, 0, 1] {
            let nc = c as i64 + d;
            if nc < lo as i64 || nc > hi as i64 {
                continue;
            }
            walk(lines, li + 1, nc as usize, acc, cost_at, best);
        }
    }

    let cost_at = |li: usize, c: usize| -> f64 {
        let r = row_lo + li;
        let (y, x) = if row_scan { (r, c) } else { (c, r) };
        cm.get(y, x)
    };
    let mut best = f64::INFINITY;
    let (lo0, hi0) = lines[0];
    for c0 in lo0..=hi0 {
        walk(&lines, 0, c0, 0.0, &cost_at, &mut best);
    }
    Ok(best)
}

fn criterion_dp_optimal() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let mut r = rng(5000 + case);
        let scan_len = r.gen_range(2..=8);
        let cross = r.gen_range(2..=8);
        let margin_a = r.gen_range(1..=3);
        let margin_b = r.gen_range(1..=3);
        let total = margin_a + cross + margin_b;
        let valid = if case % 2 == 0 {
            strip_valid(scan_len, total, margin_a + cross, margin_a)
        } else {
            vstrip_valid(total, scan_len, margin_a + cross, margin_a)
        };
        let part = region_partition(&valid).map_err(err)?;
        let costs: BTreeMap<(usize, usize), f64> = part
            .overlap_pixels()
            .map(|(y, x)| ((y, x), r.gen_range(0.0..1.0)))
            .collect();
        let cm = CostMap::from_fn(&part, |y, x| costs[&(y, x)]).map_err(err)?;
        let got = dp_seam(&cm, &part).map_err(err)?;
        let best = brute_force_path_cost(&cm, &part)?;
        let diff = (got.cost - best).abs();
        if diff > worst {
            worst = diff;
        }
        if diff > DP_COST_TOL {
            return Err(format!(
                "case {case}: dp cost {} vs exhaustive minimum {best}",
                got.cost
            ));
        }
    }
    Ok(format!("100 cost maps, max cost deviation {worst:.2e}"))
}

// Criterion 3. Min cut by brute force over every source-side subset.
fn enumerate_min_cut(
    nodes: usize,
    source: usize,
    sink: usize,
    arcs: &[(usize, usize, f64)],
) -> f64 {
    let others: Vec<usize> = (0..nodes).filter(|&i| i != source && i != sink).collect();
    assert!(others.len() <= 20, "enumeration domain too large");
    let mut best = f64::INFINITY;
    let mut in_s = vec![false; nodes];
    in_s[source] = true;
    for bits in 0u32..(1 << others.len()) {
        for (k, &i) in others.iter().enumerate() {
            in_s[i] = bits >> k & 1 == 1;
        }
        let cut: f64 = arcs
            .iter()
            .filter(|&&(u, v, _)| in_s[u] && !in_s[v])
            .map(|&(_, _, c)| c)
            .sum();
        if cut < best {
            best = cut;
        }
    }
    best
}

fn criterion_mincut() -> Outcome {
    for case in 0..100u64 {
        let mut r = rng(7000 + case);
        let n = r.gen_range(3..=10);
        let mut g = FlowGraph::new(n, 0, n - 1).map_err(err)?;
        let mut arcs = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if r.gen_bool(0.55) {
                    let cf = r.gen_range(0..=5) as f64;
                    let cr = r.gen_range(0..=5) as f64;
                    g.add_edge(u, v, cf, cr);
                    arcs.push((u, v, cf));
                    arcs.push((v, u, cr));
                }
            }
        }
        let (flow, _) = g.max_flow();
        let best = enumerate_min_cut(n, 0, n - 1, &arcs);
        if (flow - best).abs() > FLOW_TOL {
            return Err(format!("graph {case}: flow {flow} vs enumerated cut {best}"));
        }
    }

    // Image-derived graphs: 4x4 overlaps whose arc set is rebuilt here from
    // the documented rule and cut-enumerated.
    for case in 0..20u64 {
        let valid = strip_valid(4, 12, 8, 4);
        let part = region_partition(&valid).map_err(err)?;
        let img_a = random_image(4, 12, 3, 8000 + case);
        let img_b = random_image(4, 12, 3, 8100 + case);
        let space = match case % 3 {
            0 => LossSpace::Rgb,
            1 => LossSpace::Gray,
            _ => LossSpace::Edge,
        };
        let mut g = build_seam_graph(&img_a, &img_b, &part, space).map_err(err)?;
        let (flow, _) = g.max_flow();

        let (pa, pb) = prepare_loss_space(&img_a, &img_b, space).map_err(err)?;
        let d = |y: usize, x: usize| pa.abs_diff_at(&pb, y, x);
        let pixels: Vec<(usize, usize)> = part.overlap_pixels().collect();
        if pixels.len() != 16 {
            return Err(format!("expected 4x4 overlap, got {} pixels", pixels.len()));
        }
        let index: BTreeMap<(usize, usize), usize> =
            pixels.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let (source, sink) = (pixels.len(), pixels.len() + 1);
        let mut arcs = Vec::new();
        for (i, &(y, x)) in pixels.iter().enumerate() {
            for nb in [(y, x + 1), (y + 1, x)] {
                if let Some(&j) = index.get(&nb) {
                    let cap = d(y, x) + d(nb.0, nb.1) + N_LINK_EPS;
                    arcs.push((i, j, cap));
                    arcs.push((j, i, cap));
                }
            }
            let near = |yy: isize, xx: isize, reg: Region| {
                yy >= 0
                    && (yy as usize) < part.height()
                    && xx >= 0
                    && (xx as usize) < part.width()
                    && part.region(yy as usize, xx as usize) == reg
            };
            let (yi, xi) = (y as isize, x as isize);
            let sides = [(yi - 1, xi), (yi + 1, xi), (yi, xi - 1), (yi, xi + 1)];
            if sides.iter().any(|&(a, b)| near(a, b, Region::OnlyA)) {
                arcs.push((source, i, TERMINAL_CAPACITY));
            }
            if sides.iter().any(|&(a, b)| near(a, b, Region::OnlyB)) {
                arcs.push((i, sink, TERMINAL_CAPACITY));
            }
        }
        let best = enumerate_min_cut(pixels.len() + 2, source, sink, &arcs);
        let rel = (flow - best).abs() / best.abs().max(1.0);
        if rel > FLOW_TOL {
            return Err(format!(
                "image graph {case}: flow {flow} vs enumerated cut {best}"
            ));
        }
    }
    Ok("100 random graphs and 20 image-derived graphs match enumerated cuts".into())
}

// Criterion 4. Binary masks make the pixel term exactly zero, and zeroing
// any overlap pixel farther than M-1 from the selection boundary cannot
// move the patch term: every box window it touches stays single-source.
fn boundary_pixels(masks: &MaskPair) -> Vec<(usize, usize)> {
    let (h, w) = (masks.mask_a.height(), masks.mask_a.width());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let a = masks.mask_a.get(y, x);
            let b = masks.mask_b.get(y, x);
            if !a && !b {
                continue;
            }
            let mut on_edge = false;
            let (yi, xi) = (y as isize, x as isize);
            for (ny, nx) in [(yi - 1, xi), (yi + 1, xi), (yi, xi - 1), (yi, xi + 1)] {
                if ny < 0 || nx < 0 || ny as usize >= h || nx as usize >= w {
                    continue;
                }
                let (na, nb) = (
                    masks.mask_a.get(ny as usize, nx as usize),
                    masks.mask_b.get(ny as usize, nx as usize),
                );
                if (a && nb) || (b && na) {
                    on_edge = true;
                }
            }
            if on_edge {
                out.push((y, x));
            }
        }
    }
    out
}

/// Snaps values to the 1/256 grid. Box filtering uses summed-area tables,
/// and dyadic values with bounded numerators keep every table entry exact,
/// so single-source windows cancel bitwise instead of leaving f64 dust.
fn quantize_dyadic(img: &mut ImageF) {
    for v in img.data_mut() {
        *v = (*v * 256.0).round() / 256.0;
    }
}

fn criterion_loss_structure() -> Outcome {
    let cheb = |ay: usize, ax: usize, by: usize, bx: usize| ay.abs_diff(by).max(ax.abs_diff(bx));
    let mut far_checked = 0usize;
    for seed in 0..10u64 {
        let spec = SyntheticPairSpec {
            seed,
            size: 64,
            texture: TextureKind::Checker,
            band_axis: BandAxis::Horizontal,
            band_offset: 4,
            band_width: 12,
            noise: 0.03,
            ..SyntheticPairSpec::default()
        };
        let pair = gen_synthetic_pair(&spec).map_err(err)?;
        let part = region_partition(&pair.valid).map_err(err)?;
        let (mut pa, mut pb) =
            prepare_loss_space(&pair.img_a, &pair.img_b, LossSpace::Rgb).map_err(err)?;
        quantize_dyadic(&mut pa);
        quantize_dyadic(&mut pb);
        let cm = cost_map(&pair.img_a, &pair.img_b, &part, LossSpace::Rgb).map_err(err)?;
        let masks = dp_seam(&cm, &part).map_err(err)?.masks;
        let soft = binary_soft(&masks)?;
        let boundary = boundary_pixels(&masks);
        for m in [3usize, 9] {
            let weights = LossWeights {
                m,
                ..LossWeights::default()
            };
            let eval = LossEvaluator::new(&pa, &pb, &pair.valid, &part, weights).map_err(err)?;
            let base = eval.evaluate(&soft).map_err(err)?;
            if base.loss_pixel != 0.0 {
                return Err(format!(
                    "seed {seed} m={m}: loss_pixel {} for binary masks",
                    base.loss_pixel
                ));
            }
            if base.loss_patch <= 0.0 {
                return Err(format!("seed {seed} m={m}: misaligned pair scored zero patch loss"));
            }
            let far: Vec<(usize, usize)> = part
                .overlap_pixels()
                .filter(|&(y, x)| boundary.iter().all(|&(by, bx)| cheb(y, x, by, bx) > m - 1))
                .collect();
            if far.is_empty() {
                return Err(format!("seed {seed} m={m}: no pixels beyond the seam band"));
            }
            let mut r = rng(400 + seed * 10 + m as u64);
            for _ in 0..15.min(far.len()) {
                let (qy, qx) = far[r.gen_range(0..far.len())];
                let mut za = pa.clone();
                let mut zb = pb.clone();
                for c in 0..za.channels() {
                    za.set(qy, qx, c, 0.0);
                    zb.set(qy, qx, c, 0.0);
                }
                let perturbed = LossEvaluator::new(&za, &zb, &pair.valid, &part, weights)
                    .map_err(err)?
                    .evaluate(&soft)
                    .map_err(err)?;
                if perturbed.loss_patch.to_bits() != base.loss_patch.to_bits() {
                    return Err(format!(
                        "seed {seed} m={m}: zeroing far pixel ({qy},{qx}) moved loss_patch {} -> {}",
                        base.loss_patch, perturbed.loss_patch
                    ));
                }
                far_checked += 1;
            }
        }
    }
    Ok(format!(
        "loss_pixel exactly 0 on 10 pairs, {far_checked} far-pixel zeroings left loss_patch bit-identical"
    ))
}

// Criteria 5-7 share the benchmark pipeline on the frozen suite.
fn collect_q15(report: &BenchReport) -> Result<BTreeMap<(&'static str, String), f64>, String> {
    let mut out = BTreeMap::new();
    for cell in &report.cells {
        match &cell.result {
            CellResult::Ok { sweep, .. } => {
                let q = sweep
                    .iter()
                    .find(|(n, _)| *n == 15)
                    .ok_or("sweep lacks n=15")?
                    .1;
                out.insert((cell.method.name(), cell.pair.clone()), q);
            }
            CellResult::Failed { reason } => {
                return Err(format!(
                    "{} failed on pair {}: {reason}",
                    cell.method.name(),
                    cell.pair
                ))
            }
        }
    }
    Ok(out)
}

fn criterion_quality_ordering() -> Outcome {
    let corpus = synth_corpus(&standard_suite(256)).map_err(err)?;
    let cfg = BenchConfig::default();
    let report = run_benchmark(&corpus, &cfg).map_err(err)?;
    let q = collect_q15(&report)?;
    let names: Vec<String> = corpus.iter().map(|p| p.name.clone()).collect();
    let wins = names
        .iter()
        .filter(|n| q[&("dseam-opt", (*n).clone())] < q[&("dp", (*n).clone())])
        .count();
    let mean_of = |m: &'static str| {
        names.iter().map(|n| q[&(m, n.clone())]).sum::<f64>() / names.len() as f64
    };
    let (m_dp, m_gc, m_opt) = (mean_of("dp"), mean_of("gc"), mean_of("dseam-opt"));
    let need = (WIN_FRACTION * names.len() as f64).ceil() as usize;
    let detail = format!(
        "q15 wins {wins}/{} (need {need}); means dp={m_dp:.5} gc={m_gc:.5} dseam-opt={m_opt:.5} (limit {:.5})",
        names.len(),
        GC_MEAN_FACTOR * m_gc
    );
    if wins >= need && m_opt <= GC_MEAN_FACTOR * m_gc {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_space_ablation() -> Outcome {
    let corpus = synth_corpus(&standard_suite(256)).map_err(err)?;
    let mut means = Vec::new();
    for space in [LossSpace::Edge, LossSpace::Rgb] {
        let cfg = BenchConfig {
            methods: vec![BenchMethod::DseamOpt],
            space,
            ..BenchConfig::default()
        };
        let report = run_benchmark(&corpus, &cfg).map_err(err)?;
        let q = collect_q15(&report)?;
        means.push(q.values().sum::<f64>() / q.len() as f64);
    }
    let (edge, rgb) = (means[0], means[1]);
    let detail = format!("mean q15 edge={edge:.5} vs rgb={rgb:.5}");
    if edge <= rgb {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_timing() -> Outcome {
    // Noise keeps the min cut non-degenerate: on noise-free pairs the
    // residual graph saturates in a few phases and gc finishes artificially
    // fast, which is not the photographic regime the ordering describes.
    let specs: Vec<SyntheticPairSpec> = standard_suite(256)
        .into_iter()
        .take(5)
        .map(|mut s| {
            s.noise = 0.05;
            s
        })
        .collect();
    let corpus = synth_corpus(&specs).map_err(err)?;
    let net = NetWeights::init(NetConfig::default(), 7).map_err(err)?;
    let cfg = BenchConfig {
        methods: vec![BenchMethod::Dp, BenchMethod::Gc, BenchMethod::DseamNet],
        net_weights: Some(net),
        ..BenchConfig::default()
    };
    let report = run_benchmark(&corpus, &cfg).map_err(err)?;
    collect_q15(&report)?;
    let med = |m: BenchMethod| {
        let times: Vec<f64> = report
            .cells
            .iter()
            .filter(|c| c.method == m)
            .map(|c| c.time_s)
            .collect();
        median(&times)
    };
    let (t_dp, t_gc, t_net) = (
        med(BenchMethod::Dp),
        med(BenchMethod::Gc),
        med(BenchMethod::DseamNet),
    );
    let detail = format!(
        "median time dp={t_dp:.4}s net={t_net:.4}s gc={t_gc:.4}s (gc/dp={:.1}x, gc/net={:.1}x, need {TIME_RATIO}x)",
        t_gc / t_dp,
        t_gc / t_net
    );
    if t_gc >= TIME_RATIO * t_dp && t_gc >= TIME_RATIO * t_net {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Criterion 8. Small network, short schedule: the loss must drop hard and
// the backward pass must agree with finite differences through the whole
// composite loss.
fn criterion_training() -> Outcome {
    let ncfg = NetConfig {
        input_size: 64,
        widths: [8, 16, 32],
    };
    let pairs: Vec<TrainPair> = (0..8u64)
        .map(|s| {
            let p = gen_synthetic_pair(&SyntheticPairSpec {
                seed: s,
                size: 64,
                texture: TextureKind::Checker,
                band_axis: BandAxis::Horizontal,
                band_offset: 4 + (s as usize % 5),
                band_width: 10,
                ..SyntheticPairSpec::default()
            })?;
            Ok(TrainPair {
                img_a: p.img_a,
                img_b: p.img_b,
                valid: p.valid,
            })
        })
        .collect::<seamkit::Result<_>>()
        .map_err(err)?;
    let tcfg = TrainConfig {
        iterations: 2000,
        seed: 5,
        ..TrainConfig::default()
    };
    let (_, curve) = train(&pairs, ncfg, &tcfg, &LossWeights::default(), LossSpace::Edge)
        .map_err(err)?;
    let head = mean(&curve[..100]);
    let tail = mean(&curve[curve.len() - 100..]);
    let ratio = tail / head;
    if ratio > TRAIN_DROP_RATIO {
        return Err(format!(
            "first-100 mean {head:.4} -> last-100 mean {tail:.4}, ratio {ratio:.4} > {TRAIN_DROP_RATIO}"
        ));
    }

    // Noise-free pairs put |C - source| folds within f64 dust of the base
    // point wherever A == B (outside the band), and no finite-difference
    // step can resolve a subgradient there. The spot-check pair gets noise
    // so every fold sits far from the base point in weight space.
    let noisy = gen_synthetic_pair(&SyntheticPairSpec {
        seed: 100,
        size: 64,
        texture: TextureKind::Checker,
        band_axis: BandAxis::Horizontal,
        band_offset: 5,
        band_width: 10,
        noise: 0.05,
        ..SyntheticPairSpec::default()
    })
    .map_err(err)?;
    let probe = &TrainPair {
        img_a: noisy.img_a,
        img_b: noisy.img_b,
        valid: noisy.valid,
    };
    let part = region_partition(&probe.valid).map_err(err)?;
    let (sa, sb) = prepare_loss_space(&probe.img_a, &probe.img_b, LossSpace::Edge).map_err(err)?;
    let eval = LossEvaluator::new(&sa, &sb, &probe.valid, &part, LossWeights::default())
        .map_err(err)?;
    let x = make_input(&probe.img_a, &probe.img_b).map_err(err)?;
    let weights = NetWeights::init(ncfg, 31).map_err(err)?;
    let (soft, cache) = weights.forward(&x).map_err(err)?;
    let (_, grad_soft) = eval.evaluate_with_gradient(&soft).map_err(err)?;
    let analytic = weights.backward(&cache, &grad_soft).map_err(err)?;
    let total_at = |w: &NetWeights| -> Result<f64, String> {
        Ok(eval
            .evaluate(&w.forward(&x).map_err(err)?.0)
            .map_err(err)?
            .total)
    };
    // The loss is piecewise linear in the mask, so a probe step that pushes
    // any pixel across a fold corrupts the central difference. Shrinking the
    // step excludes the fold from the probe window; a wrong analytical
    // gradient keeps its error at every step size and still fails.
    let mut r = rng(123);
    let mut max_rel = 0.0f64;
    let mut live = 0usize;
    let mut refined = 0usize;
    for _ in 0..32 {
        let idx = r.gen_range(0..weights.params().len());
        let an = analytic[idx];
        let mut accepted = None;
        let mut last_rel = f64::NAN;
        for (step_no, h) in NET_FD_LADDER.into_iter().enumerate() {
            let mut plus = weights.clone();
            plus.params_mut()[idx] += h;
            let mut minus = weights.clone();
            minus.params_mut()[idx] -= h;
            let fd = (total_at(&plus)? - total_at(&minus)?) / (2.0 * h);
            if step_no == 0 && fd.abs() < 1e-8 && an.abs() < 1e-8 {
                accepted = Some((f64::NAN, true));
                break;
            }
            last_rel = (fd - an).abs() / fd.abs().max(an.abs());
            if last_rel <= NET_REL_TOL {
                accepted = Some((last_rel, false));
                refined += (step_no > 0) as usize;
                break;
            }
        }
        match accepted {
            Some((_, true)) => {}
            Some((rel, false)) => {
                if rel > max_rel {
                    max_rel = rel;
                }
                live += 1;
            }
            None => {
                return Err(format!(
                    "weight {idx}: relative error {last_rel:.2e} persists down to h={:.0e}",
                    NET_FD_LADDER[NET_FD_LADDER.len() - 1]
                ))
            }
        }
    }
    if live < 20 {
        return Err(format!("only {live} of 32 sampled weights had usable gradients"));
    }
    Ok(format!(
        "loss {head:.4} -> {tail:.4} (ratio {ratio:.4}); gradient max rel {max_rel:.2e} over {live} weights ({refined} needed step refinement)"
    ))
}

// Criterion 9. Identical inputs floor the metric at exactly zero, and the
// score only sees patch shape, never affine intensity changes of one side.
fn criterion_metric_floor() -> Outcome {
    let tex = random_image(64, 64, 3, 42);
    let valid = strip_valid(64, 64, 40, 24);
    let part = region_partition(&valid).map_err(err)?;
    let cm = cost_map(&tex, &tex, &part, LossSpace::Rgb).map_err(err)?;
    let masks = dp_seam(&cm, &part).map_err(err)?.masks;
    let seam = extract_seam(&masks, &part).map_err(err)?;
    let gray = tex.to_gray().map_err(err)?;
    let sweep = quality_sweep(&gray, &gray, &seam).map_err(err)?;
    for (n, q) in &sweep {
        if *q != 0.0 {
            return Err(format!("identical pair scored {q} at n={n}"));
        }
    }

    // Invariance holds for non-constant patches, so probe with decorrelated
    // random textures (no flat patch at any window size) along a straight
    // seam; the seam itself plays no role in the property.
    let ga = random_image(64, 64, 1, 7000);
    let gb = random_image(64, 64, 1, 7001);
    let seam2 = Seam::new((0..64).map(|y| (y, 32)).collect()).map_err(err)?;
    let base = quality_sweep(&ga, &gb, &seam2).map_err(err)?;
    if !base.iter().all(|&(_, q)| q > 0.05) {
        return Err("decorrelated pair scored near zero; invariance check is vacuous".into());
    }
    let mut worst = 0.0f64;
    for (label, scale, offset) in [("offset", 1.0, 0.1), ("scale", 1.7, 0.0), ("affine", 0.6, 0.25)]
    {
        let gb2 = ImageF::from_fn(64, 64, 1, false, |y, x, _| scale * gb.get(y, x, 0) + offset);
        let sweep2 = quality_sweep(&ga, &gb2, &seam2).map_err(err)?;
        for (&(n, q), &(_, q2)) in base.iter().zip(&sweep2) {
            let d = (q - q2).abs();
            if d > worst {
                worst = d;
            }
            if d > INVARIANCE_TOL {
                return Err(format!("{label}: q moved by {d:.2e} at n={n}"));
            }
        }
    }
    Ok(format!(
        "all 14 window sizes floor at exactly 0; affine drift max {worst:.2e}"
    ))
}

// Criterion 10. The whole pipeline twice: corpus PNGs, every quality field
// of the report, emitted CSVs (timing columns dropped) and artifact PNGs
// must be bitwise identical.
fn read_dir_bytes(dir: &Path, ext: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let entry = entry.map_err(err)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.ends_with(ext) {
            continue;
        }
        out.insert(name, std::fs::read(entry.path()).map_err(err)?);
    }
    Ok(out)
}

fn project_csv(text: &str, keep: impl Fn(usize) -> bool) -> String {
    text.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn mask_fingerprint(m: &Mask) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for y in 0..m.height() {
        for x in 0..m.width() {
            h ^= (y * 31 + x) as u64 ^ ((m.get(y, x) as u64) << 32);
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn report_digest(report: &BenchReport) -> String {
    let mut s = String::new();
    for cell in &report.cells {
        write!(s, "{} {}:", cell.method.name(), cell.pair).unwrap();
        match &cell.result {
            CellResult::Ok {
                sweep,
                loss,
                masks,
                seam,
            } => {
                for (n, q) in sweep {
                    write!(s, " {n}={:016x}", q.to_bits()).unwrap();
                }
                write!(
                    s,
                    " non={:016x} pix={:016x} patch={:016x} total={:016x} a={:016x} b={:016x} seam={:?}",
                    loss.loss_non.to_bits(),
                    loss.loss_pixel.to_bits(),
                    loss.loss_patch.to_bits(),
                    loss.total.to_bits(),
                    mask_fingerprint(&masks.mask_a),
                    mask_fingerprint(&masks.mask_b),
                    seam.pixels()
                )
                .unwrap();
            }
            CellResult::Failed { reason } => write!(s, " failed {reason}").unwrap(),
        }
        s.push('\n');
    }
    for agg in &report.aggregates {
        write!(s, "{} ok={}", agg.method.name(), agg.ok_cells).unwrap();
        for (n, q) in &agg.mean_q {
            write!(s, " {n}={:016x}", q.to_bits()).unwrap();
        }
        s.push('\n');
    }
    s
}

struct PipelineOutputs {
    corpus_pngs: BTreeMap<String, Vec<u8>>,
    digest: String,
    bench_csv: String,
    summary_csv: String,
    failures_csv: String,
    artifact_pngs: BTreeMap<String, Vec<u8>>,
}

fn run_pipeline() -> Result<PipelineOutputs, String> {
    let specs: Vec<SyntheticPairSpec> = (0..3u64)
        .map(|s| SyntheticPairSpec {
            seed: s,
            size: 80,
            texture: TextureKind::Checker,
            band_axis: BandAxis::Horizontal,
            band_offset: 4 + s as usize,
            band_width: 12,
            ..SyntheticPairSpec::default()
        })
        .collect();
    let corpus = synth_corpus(&specs).map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let corpus_dir = dir.path().join("corpus");
    save_corpus(&corpus, &corpus_dir).map_err(err)?;
    let corpus_pngs = read_dir_bytes(&corpus_dir, ".png")?;

    let net = NetWeights::init(
        NetConfig {
            input_size: 80,
            widths: [4, 8, 8],
        },
        9,
    )
    .map_err(err)?;
    let cfg = BenchConfig {
        methods: vec![
            BenchMethod::Dp,
            BenchMethod::Gc,
            BenchMethod::DseamOpt,
            BenchMethod::DseamNet,
        ],
        working_size: 80,
        optim: OptimConfig {
            max_steps: 60,
            ..OptimConfig::default()
        },
        net_weights: Some(net),
        ..BenchConfig::default()
    };
    let report = run_benchmark(&corpus, &cfg).map_err(err)?;
    let report_dir = dir.path().join("report");
    emit_report(&report, &corpus, &report_dir).map_err(err)?;

    let read = |name: &str| -> Result<String, String> {
        std::fs::read_to_string(report_dir.join(name)).map_err(err)
    };
    Ok(PipelineOutputs {
        corpus_pngs,
        digest: report_digest(&report),
        // bench.csv: method,pair,time_s,n,q_seam with time_s dropped.
        bench_csv: project_csv(&read("bench.csv")?, |i| i != 2),
        // summary.csv: method followed by five timing fields, then mean_q_*.
        summary_csv: project_csv(&read("summary.csv")?, |i| i == 0 || i >= 6),
        failures_csv: read("failures.csv")?,
        artifact_pngs: read_dir_bytes(&report_dir, ".png")?,
    })
}

fn criterion_determinism() -> Outcome {
    let first = run_pipeline()?;
    let second = run_pipeline()?;
    let compare_files = |label: &str,
                         a: &BTreeMap<String, Vec<u8>>,
                         b: &BTreeMap<String, Vec<u8>>|
     -> Result<(), String> {
        if a.keys().ne(b.keys()) {
            return Err(format!("{label}: file sets differ"));
        }
        for (name, bytes) in a {
            if bytes != &b[name] {
                return Err(format!("{label}: {name} differs between runs"));
            }
        }
        Ok(())
    };
    compare_files("corpus", &first.corpus_pngs, &second.corpus_pngs)?;
    compare_files("artifacts", &first.artifact_pngs, &second.artifact_pngs)?;
    if first.digest != second.digest {
        return Err("report quality fields differ between runs".into());
    }
    if first.bench_csv != second.bench_csv {
        return Err("bench.csv (timing excluded) differs between runs".into());
    }
    if first.summary_csv != second.summary_csv {
        return Err("summary.csv (timing excluded) differs between runs".into());
    }
    if first.failures_csv != second.failures_csv {
        return Err("failures.csv differs between runs".into());
    }
    Ok(format!(
        "two runs bitwise identical: {} corpus PNGs, {} artifact PNGs, all CSV quality fields",
        first.corpus_pngs.len(),
        first.artifact_pngs.len()
    ))
}
