//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p splatsem-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Vector3};
use splatsem::attention::{fuse_with_attention, FusionParams};
use splatsem::gradcheck::{check_fuse, check_warp, random_fuse_instance, random_warp_instance};
use splatsem::losses::{total_loss, LossComponents, LossWeights};
use splatsem::metrics::{label_by_cosine, miou, psnr};
use splatsem::oracle::{oracle_attention, oracle_confidence_aggregate, oracle_warp};
use splatsem::render::{render, Rasterizer};
use splatsem::scene::sh;
use splatsem::synth::{generate, random_gaussians, Rng, SynthConfig, SyntheticScene};
use splatsem::voxel::{assign_voxels, fusion_weights, voxel_key, voxelize};
use splatsem::warp::warp_distance;
use splatsem::{CameraView, GaussianPrimitive, GaussianScene};

/// Voxel size giving 3–10× compaction on the default synthetic scene.
const COMPACTION_EPS: f64 = 0.03;
/// Outlier share of the outlier-heavy synthetic config.
const OUTLIER_FRACTION: f64 = 0.1;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn c1_warp_identity() -> Outcome {
    let cfg = SynthConfig { gaussians_per_object: 3000, ..Default::default() };
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let s = generate(seed, &cfg).map_err(|e| e.to_string())?;
        for cam in &s.cameras {
            let r = render(&s.gaussians, cam, [0.0; 3]);
            let out = warp_distance(cam, cam, &r.feature, &r.feature, &r.depth, &r.depth, 0.05)
                .map_err(|e| e.to_string())?;
            ensure(out.mask.valid_count() > 0, || format!("seed {seed}: empty mask"))?;
            worst = worst.max(out.loss.abs());
        }
    }
    ensure(worst < 1e-10, || format!("identity loss {worst:e}"))?;
    Ok(format!("max identity loss {worst:.1e} over 12 views"))
}

fn c2_warp_oracle() -> Outcome {
    let (mut d_loss, mut d_grad, mut rel): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..100 {
        let inst = random_warp_instance(&mut Rng::new(seed), [8, 8, 4]).map_err(|e| e.to_string())?;
        let (t, c) = (&inst.target, &inst.context);
        let (tf, cf, td, cd) = (&inst.target_features, &inst.context_features, &inst.target_depth, &inst.context_depth);
        let main = warp_distance(t, c, tf, cf, td, cd, 0.05).map_err(|e| e.to_string())?;
        let o = oracle_warp(t, c, tf, cf, td, cd, 0.05);
        ensure(main.mask.valid == o.valid, || format!("seed {seed}: masks differ"))?;
        d_loss = d_loss.max((main.loss - o.loss).abs());
        d_grad = d_grad
            .max(max_diff(main.grad_target_features.data(), &o.grad_target))
            .max(max_diff(main.grad_context_features.data(), &o.grad_context));
        let fd = check_warp(seed, [8, 8, 4], 0.05).map_err(|e| e.to_string())?;
        rel = rel.max(fd.max_rel_error());
    }
    ensure(d_loss < 1e-10 && d_grad < 1e-10, || format!("oracle gap loss {d_loss:e}, grad {d_grad:e}"))?;
    ensure(rel < 1e-4, || format!("finite-difference rel error {rel:e}"))?;
    Ok(format!("oracle gap loss {d_loss:.1e}, grad {d_grad:.1e}; fd rel {rel:.1e}"))
}

/// Same scene with every Gaussian's class feature replaced by the next class's.
fn shuffled_classes(s: &SyntheticScene) -> GaussianScene {
    let k = s.class_features.len();
    let mut g = s.gaussians.clone();
    for (p, l) in g.primitives.iter_mut().zip(&s.labels) {
        p.feature = s.class_features[(*l as usize + 1) % k].clone();
    }
    g
}

fn c3_warp_cross_view() -> Outcome {
    // Eight cameras on the orbit; neighbours are 45° apart and overlap well.
    let cfg = SynthConfig { n_cameras: 8, ..Default::default() };
    let s = generate(0, &cfg).map_err(|e| e.to_string())?;
    let shuffled = shuffled_classes(&s);
    let (t, c) = (&s.cameras[0], &s.cameras[1]);
    let rt = render(&s.gaussians, t, [0.0; 3]);
    let rc = render(&s.gaussians, c, [0.0; 3]);
    let rc_shuffled = render(&shuffled, c, [0.0; 3]);
    let aligned = warp_distance(t, c, &rt.feature, &rc.feature, &rt.depth, &rc.depth, 0.05).map_err(|e| e.to_string())?;
    let broken =
        warp_distance(t, c, &rt.feature, &rc_shuffled.feature, &rt.depth, &rc.depth, 0.05).map_err(|e| e.to_string())?;
    ensure(aligned.mask.valid_count() > 200, || format!("only {} valid px", aligned.mask.valid_count()))?;
    let ratio = broken.loss / aligned.loss;
    ensure(ratio >= 10.0, || format!("aligned {:.4e}, shuffled {:.4e}, ratio {ratio:.2}", aligned.loss, broken.loss))?;
    Ok(format!(
        "aligned {:.3e}, shuffled {:.3e}, ratio {ratio:.1} over {} px",
        aligned.loss,
        broken.loss,
        aligned.mask.valid_count()
    ))
}

fn c4_lambda_zero_baseline() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let scene = random_gaussians(&mut rng, 300, 4, 1.0);
        let (_, merged) = voxelize(&scene, 0.5, 0.0).map_err(|e| e.to_string())?;
        let o = oracle_confidence_aggregate(&scene, 0.5);
        ensure(o.len() == merged.len(), || format!("seed {seed}: {} vs {} voxels", o.len(), merged.len()))?;
        for (ov, p) in o.iter().zip(&merged.primitives) {
            let cov: Vec<f64> = ov.covariance.iter().flatten().cloned().collect();
            let sh_o: Vec<f64> = ov.sh_color.iter().flatten().cloned().collect();
            let sh_m: Vec<f64> = p.sh_color.iter().flatten().cloned().collect();
            worst = worst
                .max(max_diff(&ov.center, p.center.as_slice()))
                .max(max_diff(&cov, p.covariance.transpose().as_slice()))
                .max(max_diff(&ov.feature, &p.feature))
                .max(max_diff(&sh_o, &sh_m))
                .max((ov.opacity - p.opacity).abs())
                .max((ov.confidence - p.confidence).abs());
        }
    }
    ensure(worst < 1e-12, || format!("max gap {worst:e}"))?;
    Ok(format!("max gap {worst:.1e} over 100 scenes"))
}

fn unit(d: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[axis] = 1.0;
    v
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn c5_outlier_suppression() -> Outcome {
    const GRID: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
    let mut rng = Rng::new(7);
    let mut worst_margin = f64::INFINITY;
    let cells = 50;
    for cell in 0..cells {
        let d = 4 + rng.below(13);
        let m = 3 + rng.below(18);
        let (major, minor) = (rng.below(d), rng.below(d - 1));
        let minor = if minor >= major { minor + 1 } else { minor };
        let mut prims = Vec::with_capacity(m);
        let mut top_conf: f64 = 0.0;
        for _ in 0..m - 1 {
            let mut f = unit(d, major);
            f.iter_mut().for_each(|x| *x += 0.05 * rng.normal());
            let confidence = rng.uniform_range(0.0, 2.0);
            top_conf = top_conf.max(confidence);
            prims.push(member(&mut rng, f, confidence));
        }
        let outlier = m - 1;
        let outlier_conf = top_conf + rng.uniform_range(0.1, 3.0);
        prims.push(member(&mut rng, unit(d, minor), outlier_conf));
        let scene = GaussianScene::new(prims, d, 0).map_err(|e| e.to_string())?;
        let table = assign_voxels(&scene, 1.0).map_err(|e| e.to_string())?;
        ensure(table.len() == 1, || format!("cell {cell}: members split across voxels"))?;
        let mut prev = f64::INFINITY;
        for lambda in GRID {
            let t = fusion_weights(&table, &scene, lambda).map_err(|e| e.to_string())?;
            let c = &t.cells[0];
            let pos = c.members.iter().position(|x| *x == outlier).unwrap();
            let w = c.weights.as_ref().unwrap()[pos];
            ensure(w < prev, || format!("cell {cell}: outlier weight {w} at λ={lambda} not below {prev}"))?;
            prev = w;
        }
        let (_, merged) = voxelize(&scene, 1.0, 8.0).map_err(|e| e.to_string())?;
        let f = &merged.primitives[0].feature;
        let margin = cosine(f, &unit(d, major)) - cosine(f, &unit(d, minor));
        ensure(margin > 0.0, || format!("cell {cell}: merged feature leans to the outlier"))?;
        worst_margin = worst_margin.min(margin);
    }
    Ok(format!("{cells} cells, min cosine margin at λ=8 {worst_margin:.3}"))
}

fn member(rng: &mut Rng, feature: Vec<f64>, confidence: f64) -> GaussianPrimitive {
    GaussianPrimitive {
        center: Vector3::new(rng.uniform_range(0.1, 0.9), rng.uniform_range(0.1, 0.9), rng.uniform_range(0.1, 0.9)),
        covariance: nalgebra::Matrix3::identity() * 0.01,
        sh_color: vec![sh::dc_from_rgb([rng.uniform(), rng.uniform(), rng.uniform()])],
        opacity: rng.uniform(),
        feature,
        confidence,
    }
}

fn c6_voxel_invariants() -> Outcome {
    let mut rng = Rng::new(11);
    let scene = random_gaussians(&mut rng, 100_000, 8, 5.0);
    let eps = 0.25;
    let (table, merged) = voxelize(&scene, eps, 2.0).map_err(|e| e.to_string())?;
    ensure(merged.len() == table.len(), || "merged count differs from cell count".into())?;
    let mut seen = vec![false; scene.len()];
    let mut worst: f64 = 0.0;
    for (i, cell) in table.cells.iter().enumerate() {
        if i > 0 {
            ensure(table.cells[i - 1].key < cell.key, || "cell keys not strictly increasing".into())?;
        }
        for &m in &cell.members {
            ensure(!seen[m], || format!("primitive {m} in two cells"))?;
            seen[m] = true;
            ensure(voxel_key(&scene.primitives[m].center, eps) == cell.key, || format!("primitive {m} in wrong cell"))?;
        }
        let w = cell.weights.as_ref().ok_or("weights unset")?;
        ensure(w.iter().all(|x| *x >= 0.0), || "negative weight".into())?;
        worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(seen.iter().all(|s| *s), || "primitive missing from partition".into())?;
    ensure(worst < 1e-12, || format!("weight sum off by {worst:e}"))?;
    Ok(format!("10^5 primitives in {} cells, max |Σw−1| {worst:.1e}", table.len()))
}

fn c7_render_conservation() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut worst_feat: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = Rng::new(seed);
        let mut scene = random_gaussians(&mut rng, 400, 5, 1.0);
        let eye = Vector3::new(rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0), -4.0);
        let view = CameraView::look_at(eye, Vector3::zeros(), Vector3::y(), 40.0, 32, 32).map_err(|e| e.to_string())?;
        let r = Rasterizer::new(&scene, &view);
        for y in 0..view.height {
            for x in 0..view.width {
                let c = r.pixel_composite(x, y);
                let total: f64 = c.contributions.iter().map(|(_, w)| w).sum::<f64>() + c.transmittance;
                worst_sum = worst_sum.max((total - 1.0).abs());
            }
        }
        let f_star: Vec<f64> = rng.unit_vector(5).iter().map(|v| v * 2.5).collect();
        scene.primitives.iter_mut().for_each(|p| p.feature = f_star.clone());
        let out = render(&scene, &view, [0.0; 3]);
        for p in 0..view.pixel_count() {
            let a = out.alpha.data()[p];
            let expect: Vec<f64> = f_star.iter().map(|f| a * f).collect();
            worst_feat = worst_feat.max(max_diff(out.feature.pixel(p), &expect));
        }
    }
    ensure(worst_sum < 1e-9, || format!("weight sum off by {worst_sum:e}"))?;
    ensure(worst_feat < 1e-9, || format!("constant feature off by {worst_feat:e}"))?;
    Ok(format!("max |Σw+T−1| {worst_sum:.1e}, max |F−αf*| {worst_feat:.1e}"))
}

fn compaction_psnr(s: &SyntheticScene, lambda: f64) -> Result<(f64, Vec<f64>), String> {
    let (table, merged) = voxelize(&s.gaussians, COMPACTION_EPS, lambda).map_err(|e| e.to_string())?;
    let ratio = s.gaussians.len() as f64 / table.len() as f64;
    let mut out = Vec::new();
    for cam in &s.cameras {
        let a = render(&s.gaussians, cam, [0.0; 3]);
        let b = render(&merged, cam, [0.0; 3]);
        out.push(psnr(&a.color, &b.color).map_err(|e| e.to_string())?);
    }
    Ok((ratio, out))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn c8_compaction_fidelity() -> Outcome {
    let s = generate(0, &SynthConfig::default()).map_err(|e| e.to_string())?;
    let (ratio, p2) = compaction_psnr(&s, 2.0)?;
    ensure((3.0..=10.0).contains(&ratio), || format!("compaction {ratio:.2}× outside 3–10×"))?;
    let min2 = p2.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(min2 >= 25.0, || format!("λ=2 PSNR per camera {p2:.2?}"))?;

    let heavy = SynthConfig { outlier_fraction: OUTLIER_FRACTION, ..Default::default() };
    let h = generate(0, &heavy).map_err(|e| e.to_string())?;
    let (_, h2) = compaction_psnr(&h, 2.0)?;
    let (_, h0) = compaction_psnr(&h, 0.0)?;
    ensure(mean(&h2) > mean(&h0), || format!("outlier config λ=2 {:.2} vs λ=0 {:.2}", mean(&h2), mean(&h0)))?;
    Ok(format!(
        "ε={COMPACTION_EPS}: {ratio:.2}×, min PSNR {min2:.2} dB; outlier config λ=2 {:.2} > λ=0 {:.2} dB",
        mean(&h2),
        mean(&h0)
    ))
}

fn c9_attention() -> Outcome {
    let (mut fwd, mut rows, mut rel): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..100 {
        let inst = random_fuse_instance(&mut Rng::new(seed), [6, 8, 4]);
        let out = fuse_with_attention(&inst.geometry, &inst.semantic, &inst.params).map_err(|e| e.to_string())?;
        let o = oracle_attention(&inst.geometry, &inst.semantic, &inst.params);
        fwd = fwd.max((&out.output - o).abs().max());
        for r in out.attention.row_iter() {
            rows = rows.max((r.sum() - 1.0).abs());
        }
        let g = check_fuse(seed, [6, 8, 4]).map_err(|e| e.to_string())?;
        ensure(g.entries.len() == 5, || format!("expected 5 gradient blocks, got {}", g.entries.len()))?;
        rel = rel.max(g.max_rel_error());
    }
    // An asymmetric shape exercises the d_s ≠ d_k path of the forward pass.
    let mut rng = Rng::new(99);
    let p = FusionParams::random(&mut rng, 5, 7, 3, 6);
    let x = DMatrix::from_fn(9, 5, |_, _| rng.normal());
    let s = DMatrix::from_fn(4, 7, |_, _| rng.normal());
    let out = fuse_with_attention(&x, &s, &p).map_err(|e| e.to_string())?;
    fwd = fwd.max((&out.output - oracle_attention(&x, &s, &p)).abs().max());

    ensure(fwd < 1e-12, || format!("forward gap {fwd:e}"))?;
    ensure(rows < 1e-12, || format!("row sum off by {rows:e}"))?;
    ensure(rel < 1e-4, || format!("fd rel error {rel:e}"))?;
    Ok(format!("forward gap {fwd:.1e}, row sums {rows:.1e}, fd rel {rel:.1e}"))
}

fn c10_total_loss() -> Outcome {
    let c = LossComponents { rgb: 1.0, feat: 1.0, warp: 1.0, depth: 1.0, pose: 1.0 };
    let r = total_loss(&c, &LossWeights::default()).map_err(|e| e.to_string())?;
    ensure(r.total == 12.2, || format!("total {}", r.total))?;
    Ok(format!("total {}", r.total))
}

fn scene_miou(scene: &GaussianScene, s: &SyntheticScene) -> Result<Vec<f64>, String> {
    s.cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let r = render(scene, cam, [0.0; 3]);
            let labels = label_by_cosine(&r.feature, &r.alpha, &s.class_features).map_err(|e| e.to_string())?;
            miou(&labels, &s.label_maps[i], s.config.n_classes).map_err(|e| e.to_string())
        })
        .collect()
}

fn c11_semantic_recovery() -> Outcome {
    let s = generate(0, &SynthConfig::default()).map_err(|e| e.to_string())?;
    let before = scene_miou(&s.gaussians, &s)?;
    let (_, merged) = voxelize(&s.gaussians, COMPACTION_EPS, 2.0).map_err(|e| e.to_string())?;
    let after = scene_miou(&merged, &s)?;
    let lo = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(lo(&before) >= 0.9 && lo(&after) >= 0.9, || format!("mIoU before {before:.3?}, after {after:.3?}"))?;
    Ok(format!("min mIoU before {:.3}, after {:.3}", lo(&before), lo(&after)))
}

fn c12_performance() -> Outcome {
    let (render_t, voxel_t) = single_thread(|| -> Result<(Duration, Duration), String> {
        let mut rng = Rng::new(0);
        let scene = random_gaussians(&mut rng, 10_000, 16, 1.0);
        let view = CameraView::look_at(Vector3::new(0.0, -3.0, 1.5), Vector3::zeros(), Vector3::z(), 256.0, 256, 256)
            .map_err(|e| e.to_string())?;
        let t = Instant::now();
        std::hint::black_box(render(&scene, &view, [0.0; 3]));
        let render_t = t.elapsed();

        let big = random_gaussians(&mut rng, 1_000_000, 16, 10.0);
        let t = Instant::now();
        std::hint::black_box(voxelize(&big, 0.25, 2.0).map_err(|e| e.to_string())?);
        Ok((render_t, t.elapsed()))
    })?;
    let limit = Duration::from_secs(5);
    ensure(render_t < limit && voxel_t < limit, || format!("render {render_t:.2?}, voxelize {voxel_t:.2?}"))?;
    Ok(format!("render 10^4 @256² {render_t:.2?}, voxelize 10^6 {voxel_t:.2?}"))
}

struct Run {
    stdout: Vec<u8>,
    files: Vec<(String, Vec<u8>)>,
}

fn run_cli(dir: &Path, threads: usize, args: &[&str], outputs: &[&str]) -> Result<Run, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_splatsem"))
        .current_dir(dir)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })?;
    let files = outputs
        .iter()
        .map(|f| Ok((f.to_string(), fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?)))
        .collect::<Result<_, String>>()?;
    Ok(Run { stdout: out.stdout, files })
}

fn c13_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    fs::write(dir.join("loss.json"), r#"{"rgb":0.3,"feat":0.7,"warp":0.2,"depth":1.5,"pose":0.01}"#)
        .map_err(|e| e.to_string())?;
    let synth_outputs = ["s/scene.fgsc", "s/class_features.json", "s/cam_0.json", "s/labels_0.dmap", "s/labels_3.dmap"];
    let cases: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (vec!["synth", "--seed", "4", "--out-dir", "s", "--json"], synth_outputs.to_vec()),
        (
            vec![
                "render", "--scene", "s/scene.fgsc", "--camera", "s/cam_0.json", "--out", "r0.ppm", "--color-out",
                "c0.dmap", "--feature-out", "f0.dmap", "--depth-out", "d0.dmap", "--alpha-out", "a0.dmap",
                "--pca-out", "p0.ppm", "--classes", "s/class_features.json", "--labels-out", "l0.dmap", "--json",
            ],
            vec!["r0.ppm", "c0.dmap", "f0.dmap", "d0.dmap", "a0.dmap", "p0.ppm", "l0.dmap"],
        ),
        (
            vec![
                "render", "--scene", "s/scene.fgsc", "--camera", "s/cam_1.json", "--feature-out", "f1.dmap",
                "--depth-out", "d1.dmap", "--json",
            ],
            vec!["f1.dmap", "d1.dmap"],
        ),
        (
            vec!["voxelize", "--scene", "s/scene.fgsc", "--voxel-size", "0.03", "--out", "v.fgsc", "--stats", "v.json", "--json"],
            vec!["v.fgsc", "v.json"],
        ),
        (
            vec![
                "render", "--scene", "v.fgsc", "--camera", "s/cam_0.json", "--color-out", "cv.dmap", "--json",
            ],
            vec!["cv.dmap"],
        ),
        (
            vec![
                "warploss", "--views", "s/cam_0.json,s/cam_1.json", "--features", "f0.dmap,f1.dmap", "--depths",
                "d0.dmap,d1.dmap", "--json",
            ],
            vec![],
        ),
        (
            vec![
                "fuse", "--geometry", "f0.dmap", "--semantic", "c0.dmap", "--init-seed", "3", "--d-k", "8", "--d-v",
                "6", "--out", "fused.dmap", "--attention-out", "att.dmap", "--json",
            ],
            vec!["fused.dmap", "att.dmap"],
        ),
        (vec!["gradcheck", "--op", "fuse", "--seed", "2", "--json"], vec![]),
        (vec!["gradcheck", "--op", "warp", "--seed", "2", "--json"], vec![]),
        (vec!["gradcheck", "--op", "voxel", "--seed", "2", "--json"], vec![]),
        (vec!["gradcheck", "--op", "feature", "--seed", "2", "--json"], vec![]),
        (vec!["metrics", "--pred", "cv.dmap", "--gt", "c0.dmap", "--kind", "psnr", "--json"], vec![]),
        (vec!["metrics", "--pred", "cv.dmap", "--gt", "c0.dmap", "--kind", "ssim", "--json"], vec![]),
        (
            vec!["metrics", "--pred", "l0.dmap", "--gt", "s/labels_0.dmap", "--kind", "miou", "--n-classes", "4", "--json"],
            vec![],
        ),
        (vec!["totalloss", "--components", "loss.json", "--pose", "0.5", "--json"], vec![]),
    ];
    let mut compared = 0;
    for (args, outputs) in &cases {
        let a = run_cli(dir, 1, args, outputs)?;
        let b = run_cli(dir, 1, args, outputs)?;
        let c = run_cli(dir, 4, args, outputs)?;
        for (label, other) in [("rerun", &b), ("--threads 4", &c)] {
            ensure(a.stdout == other.stdout, || format!("`{}` stdout differs on {label}", args[0]))?;
            for ((name, x), (_, y)) in a.files.iter().zip(&other.files) {
                ensure(x == y, || format!("`{}` output {name} differs on {label}", args[0]))?;
            }
        }
        compared += 1 + outputs.len();
    }
    Ok(format!("{} invocations, {compared} artifacts byte-identical across reruns and thread counts", cases.len()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 13] = [
        ("1 warp identity", Duration::from_secs(1), c1_warp_identity),
        ("2 warp oracle + finite differences", Duration::from_secs(30), c2_warp_oracle),
        ("3 warp cross-view consistency", Duration::from_secs(10), c3_warp_cross_view),
        ("4 voxel λ=0 baseline", Duration::from_secs(10), c4_lambda_zero_baseline),
        ("5 outlier suppression", Duration::from_secs(5), c5_outlier_suppression),
        ("6 voxel partition + simplex", Duration::from_secs(5), c6_voxel_invariants),
        ("7 render conservation", Duration::from_secs(20), c7_render_conservation),
        ("8 compaction fidelity", Duration::from_secs(120), c8_compaction_fidelity),
        ("9 fusion attention", Duration::from_secs(10), c9_attention),
        ("10 total loss composition", Duration::from_secs(1), c10_total_loss),
        ("11 semantic recovery", Duration::from_secs(60), c11_semantic_recovery),
        ("12 performance floor", Duration::from_secs(60), c12_performance),
        ("13 CLI determinism", Duration::from_secs(120), c13_determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let t = Instant::now();
        let outcome = check();
        let elapsed = t.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed < budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {elapsed:.2?}, budget {budget:.0?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS  {name:<36} {elapsed:>9.2?}  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name:<36} {elapsed:>9.2?}  {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 13 criteria failed");
        std::process::exit(1);
    }
    println!("all 13 criteria passed");
}
