//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p linescan-cli --test acceptance`;
//! `ACCEPTANCE_ONLY=3,7` restricts the run to the listed criteria.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use linescan::config::GlobalConfig;
use linescan::evaluation::{compute_metrics, Judgement};
use linescan::hierarchy::{build_hierarchy, SegmentationHierarchy};
use linescan::imaging::{rgb_to_lab, DeviceClass, RgbImage, TruthLabel};
use linescan::mask::{components4, Mask, Point};
use linescan::muis::{init_network, segment, LabelMap, MuisConfig};
use linescan::similarity::{
    align, combined_similarity, max_similarity, wrap_degrees, MaskMapper, SimilarityConfig, StandardRegion,
    Transform, TransformedStandard,
};
use linescan::slic::{roi_superpixel_count, slic_segment, slic_segment_k, SlicConfig, SuperpixelMap};
use linescan::synthgen::{
    generate, mean_purity, palette_scene, SceneKind, SceneSpec, DEFAULT_SCENE_HEIGHT, DEFAULT_SCENE_WIDTH, ROI_SIZE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Fixture seed of the end-to-end suite.
const FIXTURE_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// 1. correct-rate formula against the published table

fn judgements(defect: TruthLabel, misjudged_per_mille: usize, missed_per_mille: usize) -> Vec<Judgement> {
    let class = defect.device_class().expect("a defect");
    let mut out = Vec::new();
    for i in 0..1000 {
        let verdict = if i < misjudged_per_mille { defect } else { TruthLabel::Normal };
        out.push(Judgement {
            class,
            truth: TruthLabel::Normal,
            verdict,
        });
    }
    for i in 0..1000 {
        let verdict = if i < missed_per_mille { TruthLabel::Normal } else { defect };
        out.push(Judgement {
            class,
            truth: defect,
            verdict,
        });
    }
    out
}

fn criterion_1() -> Outcome {
    // (p_e, p_m) in thousandths, published p_c
    let rows = [
        ("foreign object", TruthLabel::ForeignObject, 81, 104, 0.908),
        ("insulator missing", TruthLabel::InsulatorMissing, 98, 130, 0.886),
        ("lightning", TruthLabel::LightningBreakage, 160, 221, 0.810),
        ("broken wire", TruthLabel::BrokenWire, 126, 162, 0.856),
        ("total", TruthLabel::ForeignObject, 116, 154, 0.865),
    ];
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (name, defect, e, m, published) in rows {
        let metrics = match compute_metrics(&judgements(defect, e, m), defect) {
            Ok(x) => x,
            Err(err) => return outcome(false, format!("{name}: {err}")),
        };
        let dev = (metrics.p_c - published).abs();
        worst = worst.max(dev);
        notes.push(format!("{name} {:.4}", metrics.p_c));
    }
    // published values carry three decimals; 1e-12 absorbs float representation
    outcome(worst <= 5e-4 + 1e-12, format!("max |dp_c| {worst:.2e}; {}", notes.join(", ")))
}

// ---------------------------------------------------------------------------
// 2. analytic gradients against central differences

fn noise_image(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
}

fn criterion_2() -> Outcome {
    let cfg = MuisConfig {
        channels: 6,
        seed: 5,
        ..MuisConfig::default()
    };
    let net = match init_network(&cfg) {
        Ok(n) => n,
        Err(e) => return outcome(false, e.to_string()),
    };
    let img = noise_image(6, 6, 21);
    let targets: Vec<u32> = (0..36u32).map(|i| (i * 5 + i / 6) % 6).collect();
    let (_, grads) = match net.loss_and_gradient(&img, &targets) {
        Ok(x) => x,
        Err(e) => return outcome(false, e.to_string()),
    };
    let h = 1e-4;
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for (t, g) in grads.tensors().iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            let mut plus = net.clone();
            plus.tensors_mut()[t][i] += h;
            let mut minus = net.clone();
            minus.tensors_mut()[t][i] -= h;
            let (lp, lm) = match (plus.loss(&img, &targets), minus.loss(&img, &targets)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return outcome(false, "loss evaluation failed"),
            };
            let fd = (lp - lm) / (2.0 * h);
            if analytic.abs() > 1e-6 {
                checked += 1;
                worst = worst.max((fd - analytic).abs() / analytic.abs().max(fd.abs()));
            }
        }
    }
    outcome(
        worst < 1e-4 && checked > 0,
        format!("{checked} entries checked, max relative error {worst:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 3. palette scene purity

fn criterion_3() -> Outcome {
    // a 64x64 ROI of a default-size scene gets this many superpixels
    let k = roi_superpixel_count(
        SlicConfig::default().k_init,
        (ROI_SIZE * ROI_SIZE) as usize,
        (DEFAULT_SCENE_WIDTH * DEFAULT_SCENE_HEIGHT) as usize,
    );
    let mut good = 0;
    let mut purities = Vec::new();
    for seed in 0..10u64 {
        let (img, truth) = palette_scene(seed);
        let sp = match slic_segment_k(&rgb_to_lab(&img), k, &SlicConfig::default()) {
            Ok(sp) => sp,
            Err(e) => return outcome(false, e.to_string()),
        };
        let cfg = MuisConfig {
            max_iters: 200,
            seed,
            ..MuisConfig::default()
        };
        let out = match segment(&img, &sp, &cfg) {
            Ok(o) => o,
            Err(e) => return outcome(false, e.to_string()),
        };
        let p = mean_purity(&out.labels.labels, &truth);
        if p >= 0.95 && out.iterations_run <= 200 {
            good += 1;
        }
        purities.push(format!("{p:.3}"));
    }
    outcome(good >= 9, format!("{good}/10 seeds reach purity >= 0.95 [{}]", purities.join(" ")))
}

// ---------------------------------------------------------------------------
// 4. SLIC partition and connectivity

fn partition_violation(sp: &SuperpixelMap) -> Option<String> {
    let n = sp.count();
    let mut used = vec![false; n];
    for &l in &sp.labels {
        match used.get_mut(l as usize) {
            Some(u) => *u = true,
            None => return Some(format!("label {l} out of range {n}")),
        }
    }
    if used.iter().any(|u| !u) {
        return Some("unused label id".into());
    }
    let (_, components) = components4(&sp.labels, sp.width as usize, sp.height as usize);
    (components != n).then(|| format!("{components} components for {n} labels"))
}

fn quadrants() -> RgbImage {
    let colors = [[200, 40, 40], [40, 180, 60], [40, 60, 200], [220, 210, 60]];
    RgbImage::from_fn(64, 64, |x, y| colors[(x >= 32) as usize + 2 * (y >= 32) as usize])
}

fn criterion_4() -> Outcome {
    let cfg = SlicConfig::default();
    let mut images: Vec<RgbImage> = (0..5).map(|s| noise_image(48, 40, s)).collect();
    images.extend((0..5).map(|s| palette_scene(s).0));
    for kind in SceneKind::ALL {
        match generate(&SceneSpec::new(kind, 3)) {
            Ok(scene) => images.push(scene.image),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let mut maps = 0;
    for img in &images {
        let lab = rgb_to_lab(img);
        for k in [4, 50, 200] {
            let sp = match slic_segment_k(&lab, k, &cfg) {
                Ok(sp) => sp,
                Err(e) => return outcome(false, e.to_string()),
            };
            if let Some(v) = partition_violation(&sp) {
                return outcome(false, format!("k={k}: {v}"));
            }
            maps += 1;
        }
    }
    if let Some(v) = slic_segment(&rgb_to_lab(&images[10]), &cfg).ok().as_ref().and_then(partition_violation) {
        return outcome(false, format!("full-image budget: {v}"));
    }

    let sp = match slic_segment_k(&rgb_to_lab(&quadrants()), 4, &cfg) {
        Ok(sp) => sp,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut votes = vec![vec![0usize; sp.count()]; 4];
    for (i, &l) in sp.labels.iter().enumerate() {
        let (x, y) = (i % 64, i / 64);
        votes[(x >= 32) as usize + 2 * (y >= 32) as usize][l as usize] += 1;
    }
    let agree: usize = votes.iter().map(|v| v.iter().copied().max().unwrap_or(0)).sum();
    let frac = agree as f64 / 4096.0;
    outcome(
        frac >= 0.99 && partition_violation(&sp).is_none(),
        format!("{maps} maps partitioned and connected; quadrant agreement {:.2}%", 100.0 * frac),
    )
}

// ---------------------------------------------------------------------------
// 5. hierarchy structure on random label maps

/// Voronoi label map with a few labels shared between cells, and an image
/// whose color follows the label.
fn random_labelled_scene(rng: &mut ChaCha8Rng) -> (LabelMap, RgbImage) {
    loop {
        let w = rng.random_range(10..=32u32);
        let h = rng.random_range(10..=32u32);
        let sites: Vec<(f64, f64, u32)> = (0..rng.random_range(2..=12))
            .map(|_| {
                (
                    rng.random_range(0.0..f64::from(w)),
                    rng.random_range(0.0..f64::from(h)),
                    rng.random_range(0..6u32),
                )
            })
            .collect();
        let labels: Vec<u32> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                sites
                    .iter()
                    .min_by(|a, b| {
                        let da = (a.0 - f64::from(x)).powi(2) + (a.1 - f64::from(y)).powi(2);
                        let db = (b.0 - f64::from(x)).powi(2) + (b.1 - f64::from(y)).powi(2);
                        da.total_cmp(&db)
                    })
                    .map(|s| s.2)
                    .unwrap_or(0)
            })
            .collect();
        let (_, components) = components4(&labels, w as usize, h as usize);
        if components < 2 {
            continue;
        }
        let palette: Vec<[i32; 3]> = (0..6)
            .map(|_| [rng.random_range(0..256), rng.random_range(0..256), rng.random_range(0..256)])
            .collect();
        let mut img = RgbImage::filled(w, h, [0, 0, 0]);
        for (i, &l) in labels.iter().enumerate() {
            let c = palette[l as usize].map(|v| (v + rng.random_range(-20..=20)).clamp(0, 255) as u8);
            img.put_pixel(i as u32 % w, i as u32 / w, c);
        }
        return (LabelMap::from_labels(w, h, &labels), img);
    }
}

fn structure_violations(h: &SegmentationHierarchy) -> Vec<String> {
    let n = (h.width * h.height) as usize;
    let mut out = Vec::new();
    let mut owner_prev: Option<Vec<usize>> = None;
    for i in (2..=h.i_max).rev() {
        let regions = match h.regions_at_layer(i) {
            Ok(r) => r,
            Err(e) => {
                out.push(e.to_string());
                continue;
            }
        };
        if regions.len() != i {
            out.push(format!("layer {i} has {} regions", regions.len()));
        }
        let mut owner = vec![usize::MAX; n];
        for (j, r) in regions.iter().enumerate() {
            for p in r.mask.points() {
                let idx = (p.y as u32 * h.width + p.x as u32) as usize;
                if owner[idx] != usize::MAX {
                    out.push(format!("layer {i}: pixel ({}, {}) covered twice", p.x, p.y));
                }
                owner[idx] = j;
            }
        }
        if owner.contains(&usize::MAX) {
            out.push(format!("layer {i}: pixels left uncovered"));
        }
        // every finer region must fall inside exactly one region of this layer
        if let Some(finer) = &owner_prev {
            let mut parent: std::collections::BTreeMap<usize, usize> = Default::default();
            for (idx, &child) in finer.iter().enumerate() {
                if let Some(&p) = parent.get(&child) {
                    if p != owner[idx] {
                        out.push(format!("layer {}: region {child} straddles layer {i}", i + 1));
                        break;
                    }
                } else {
                    parent.insert(child, owner[idx]);
                }
            }
        }
        owner_prev = Some(owner);
    }
    out
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = Vec::new();
    let mut layers = 0;
    for _ in 0..100 {
        let (labels, img) = random_labelled_scene(&mut rng);
        match build_hierarchy(&labels, &img, 16, 1.0) {
            Ok(h) => {
                layers += h.i_max - 1;
                violations.extend(structure_violations(&h));
            }
            Err(e) => violations.push(e.to_string()),
        }
    }
    let first = violations.first().cloned().unwrap_or_default();
    outcome(
        violations.is_empty(),
        format!("100 maps, {layers} layers, {} violations {first}", violations.len()),
    )
}

// ---------------------------------------------------------------------------
// 6. max over the hierarchy against an exhaustive double loop

fn random_standard(rng: &mut ChaCha8Rng) -> StandardRegion {
    let (w, h) = (rng.random_range(8..=20), rng.random_range(8..=20));
    let arm = rng.random_range(3..=6);
    let pts: Vec<Point> = (0..h)
        .flat_map(|y| (0..w).map(move |x| Point::new(x, y)))
        .filter(|p| p.x < arm || p.y >= h - arm)
        .collect();
    let base = [rng.random_range(0..256), rng.random_range(0..256), rng.random_range(0..256)];
    let mut image = RgbImage::filled(w as u32, h as u32, [0, 0, 0]);
    for y in 0..h as u32 {
        for x in 0..w as u32 {
            image.put_pixel(x, y, base.map(|v: i32| (v + rng.random_range(-15..=15)).clamp(0, 255) as u8));
        }
    }
    StandardRegion::new(DeviceClass::Line, Mask::from_points(pts), image).expect("nonempty mask")
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = SimilarityConfig::default();
    let mut mismatches = Vec::new();
    for trial in 0..50 {
        let (labels, img) = random_labelled_scene(&mut rng);
        let Ok(h) = build_hierarchy(&labels, &img, cfg.n_bins, cfg.hist_smoothing) else {
            mismatches.push(format!("trial {trial}: hierarchy failed"));
            continue;
        };
        let standard = random_standard(&mut rng);
        let fast = match max_similarity(&h, &standard, &cfg) {
            Ok(m) => m,
            Err(e) => return outcome(false, e.to_string()),
        };
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 2..=h.i_max {
            for (j, region) in h.regions_at_layer(i).unwrap_or_default().iter().enumerate() {
                let a = align(&standard.mask, standard.centroid, &region.mask, &cfg).expect("nonempty masks");
                let ts = TransformedStandard::new(&standard, a.transform, cfg.n_bins).expect("valid transform");
                let s = combined_similarity(region, &ts, &cfg).expect("matching bins").s;
                if best.is_none_or(|b| s > b.0) {
                    best = Some((s, i, j + 1));
                }
            }
        }
        let (s, i, j) = best.expect("at least two regions");
        if s != fast.score.s || i != fast.layer || j != fast.index {
            mismatches.push(format!(
                "trial {trial}: exhaustive ({s}, {i}, {j}) vs ({}, {}, {})",
                fast.score.s, fast.layer, fast.index
            ));
        }
    }
    let first = mismatches.first().cloned().unwrap_or_default();
    outcome(mismatches.is_empty(), format!("50 hierarchies, {} mismatches {first}", mismatches.len()))
}

// ---------------------------------------------------------------------------
// 7. alignment recovery

/// L and T shaped standards of varying proportions at device scale (tens
/// of pixels, like a device inside a 64×64 ROI); none has rotational
/// symmetry.
fn recovery_shapes() -> Vec<Mask> {
    let rect = |x0: i32, y0: i32, w: i32, h: i32| -> Mask {
        let (x0, y0, w, h) = (2 * x0, 2 * y0, 2 * w, 2 * h);
        Mask::from_points((y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Point::new(x, y))).collect())
    };
    vec![
        rect(10, 10, 6, 24).union(&rect(16, 28, 14, 6)),
        rect(10, 10, 5, 20).union(&rect(15, 25, 10, 5)),
        rect(10, 10, 20, 5).union(&rect(17, 15, 6, 14)),
        rect(10, 10, 8, 26).union(&rect(18, 30, 8, 6)),
        rect(10, 10, 7, 18).union(&rect(17, 10, 12, 6)),
    ]
}

fn criterion_7() -> Outcome {
    let cfg = SimilarityConfig::default();
    let (_, alpha_step) = cfg.refinement_step();
    let mut good = 0;
    let mut total = 0;
    let mut misses = Vec::new();
    for shape in recovery_shapes() {
        let c = shape.centroid().expect("nonempty");
        let mapper = MaskMapper::new(&shape, c).expect("nonempty");
        for beta in [-90.0, -30.0, 30.0, 90.0] {
            for alpha in [0.75, 1.5] {
                total += 1;
                let t = Transform {
                    beta,
                    alpha_x: alpha,
                    alpha_y: alpha,
                    tx: c.0,
                    ty: c.1,
                };
                let target = mapper.apply(&t).to_mask();
                let a = match align(&shape, c, &target, &cfg) {
                    Ok(a) => a,
                    Err(e) => return outcome(false, e.to_string()),
                };
                let r = a.transform;
                let beta_ok = wrap_degrees(r.beta - beta).abs() <= 5.0;
                let alpha_ok = (r.alpha_x / alpha).ln().abs() <= alpha_step.ln() + 1e-9
                    && (r.alpha_y / alpha).ln().abs() <= alpha_step.ln() + 1e-9;
                if beta_ok && alpha_ok && a.score >= 0.95 {
                    good += 1;
                } else if misses.len() < 3 {
                    misses.push(format!(
                        "({beta}, {alpha}) -> ({:.1}, {:.3}, {:.3}) score {:.3}",
                        r.beta, r.alpha_x, r.alpha_y, a.score
                    ));
                }
            }
        }
    }
    let pass = good * 100 >= total * 95;
    outcome(pass, format!("{good}/{total} recovered {}", misses.join("; ")))
}

// ---------------------------------------------------------------------------
// 8 and 9 drive the command-line binary

fn linescan(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_linescan"))
        .args(args)
        .env_remove("LINESCAN_CONFIG")
        .output()
        .map_err(|e| format!("cannot run linescan: {e}"))
}

fn generate_fixtures(dir: &Path) -> Result<(), String> {
    let out = linescan(&["--seed", &FIXTURE_SEED.to_string(), "gen-fixtures", "--out-dir", path(dir)])?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn evaluate_json(fixtures: &Path, extra: &[&str]) -> Result<Vec<u8>, String> {
    let annotations = fixtures.join("manifest.json");
    let standards = fixtures.join("standards");
    let mut args: Vec<&str> = extra.to_vec();
    args.extend(["evaluate", "--annotations", path(&annotations), "--standards", path(&standards), "--json"]);
    let out = linescan(&args)?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_8(fixtures: &Path) -> Outcome {
    let start = Instant::now();
    let bytes = match evaluate_json(fixtures, &[]) {
        Ok(b) => b,
        Err(e) => return outcome(false, e),
    };
    let elapsed = start.elapsed();
    let report: Value = match serde_json::from_slice(&bytes) {
        Ok(v) => v,
        Err(e) => return outcome(false, e.to_string()),
    };
    let table = &report["table"];
    let total = table["total"]["p_c"].as_f64().unwrap_or(f64::NAN);
    let mut row_pc = Vec::new();
    let mut row_pm = Vec::new();
    for defect in TruthLabel::DEFECTS {
        let row = &table["rows"][defect.as_str()];
        row_pc.push((defect, row["p_c"].as_f64().unwrap_or(f64::NAN)));
        row_pm.push((defect, row["p_m"].as_f64().unwrap_or(f64::NAN)));
    }
    let min_pc = row_pc.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max_pm = row_pm.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let lightning_pm = row_pm
        .iter()
        .find(|r| r.0 == TruthLabel::LightningBreakage)
        .map_or(f64::NAN, |r| r.1);
    let pass = total >= 0.90 && min_pc >= 0.80 && lightning_pm >= max_pm && elapsed < Duration::from_secs(600);
    let rows: Vec<String> = row_pc
        .iter()
        .zip(&row_pm)
        .map(|((d, pc), (_, pm))| format!("{} p_c {pc:.3} p_m {pm:.3}", d.as_str()))
        .collect();
    outcome(
        pass,
        format!("total p_c {total:.3}; {}; {:.0?}", rows.join(", "), elapsed),
    )
}

fn criterion_9(fixtures: &Path) -> Outcome {
    let runs: Result<Vec<Vec<u8>>, String> = (0..2).map(|_| evaluate_json(fixtures, &["--seed", "7"])).collect();
    match runs {
        Ok(r) => outcome(
            r[0] == r[1] && !r[0].is_empty(),
            format!("two runs, {} and {} bytes, identical: {}", r[0].len(), r[1].len(), r[0] == r[1]),
        ),
        Err(e) => outcome(false, e),
    }
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as --quiet; a filter argument
    // that matches nothing skips the suite
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    // the suite runs on the default configuration
    assert_eq!(GlobalConfig::default().seed, 0);

    // ACCEPTANCE_ONLY=3,7 runs a subset
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let selected = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));

    let fixtures = tempfile::tempdir().expect("temp dir");
    let fixture_error = if selected(8) || selected(9) {
        generate_fixtures(fixtures.path()).err()
    } else {
        None
    };

    let criteria: Vec<Criterion> = vec![
        ("correct-rate formula", Box::new(criterion_1)),
        ("gradient check", Box::new(criterion_2)),
        ("palette segmentation", Box::new(criterion_3)),
        ("superpixel partition", Box::new(criterion_4)),
        ("hierarchy structure", Box::new(criterion_5)),
        ("exhaustive maximum", Box::new(criterion_6)),
        ("alignment recovery", Box::new(criterion_7)),
        (
            "end-to-end suite",
            Box::new(|| match &fixture_error {
                Some(e) => outcome(false, format!("gen-fixtures failed: {e}")),
                None => criterion_8(fixtures.path()),
            }),
        ),
        (
            "determinism",
            Box::new(|| match &fixture_error {
                Some(e) => outcome(false, format!("gen-fixtures failed: {e}")),
                None => criterion_9(fixtures.path()),
            }),
        ),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        if !selected(n + 1) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({}) [{:.1?}]",
            n + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed()
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
