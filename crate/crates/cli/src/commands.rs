use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use splatsem::attention::{fuse_with_attention, FusionParams};
use splatsem::gradcheck::{check_feature_loss, check_fuse, check_voxel_weights, check_warp};
use splatsem::losses::{total_loss, LossComponents, LossWeights};
use splatsem::metrics::{label_by_cosine, miou, psnr, ssim};
use splatsem::render::{render_feature_pca_preview, Rasterizer};
use splatsem::scene::{load_scene, scene_to_bytes};
use splatsem::synth::{generate, Rng, SynthConfig};
use splatsem::voxel::voxelize;
use splatsem::warp::{all_unordered_pairs, warp_loss_total, ViewBundle};
use splatsem::{CameraView, DenseMap};

use crate::args::*;
use crate::output::{json_bytes, report, Outputs};
use crate::{bench, usage, CliResult};

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Render(a) => render(a),
        Command::Voxelize(a) => voxelize_cmd(a),
        Command::Warploss(a) => warploss(a),
        Command::Fuse(a) => fuse(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Metrics(a) => metrics(a),
        Command::Totalloss(a) => totalloss(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn parse_rgb(s: &str) -> CliResult<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').collect();
    let vals: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => Ok([v[0], v[1], v[2]]),
        _ => usage(format!("--bg expects three comma-separated numbers, got {s:?}")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_map(path: &Path) -> anyhow::Result<DenseMap> {
    DenseMap::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_camera(path: &Path) -> anyhow::Result<CameraView> {
    CameraView::load_json(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct RenderSummary {
    width: usize,
    height: usize,
    primitives: usize,
    visible: usize,
    singular_skipped: usize,
    mean_alpha: f64,
}

fn render(a: RenderArgs) -> CliResult<()> {
    let bg = parse_rgb(&a.bg)?;
    let scene = load_scene(&a.scene).with_context(|| format!("reading {}", a.scene.display()))?;
    let view = load_camera(&a.camera)?;
    let classes: Option<Vec<Vec<f64>>> = a.classes.as_deref().map(read_json).transpose()?;

    let raster = Rasterizer::new(&scene, &view);
    let out = raster.render(bg);
    let mut files = Outputs::default();
    files.add(a.out.as_deref(), || Ok(out.color.to_ppm()?))?;
    files.add(a.color_out.as_deref(), || Ok(out.color.to_bytes()))?;
    files.add(a.feature_out.as_deref(), || Ok(out.feature.to_bytes()))?;
    files.add(a.depth_out.as_deref(), || Ok(out.depth.to_bytes()))?;
    files.add(a.alpha_out.as_deref(), || Ok(out.alpha.to_bytes()))?;
    files.add(a.pca_out.as_deref(), || Ok(render_feature_pca_preview(&out.feature)?.to_ppm()?))?;
    if let (Some(classes), Some(path)) = (&classes, a.labels_out.as_deref()) {
        let labels = label_by_cosine(&out.feature, &out.alpha, classes)?;
        let map = DenseMap::new(view.height, view.width, 1, labels.iter().map(|l| *l as f64).collect())?;
        files.push(path, map.to_bytes());
    }
    files.commit()?;

    let alpha = out.alpha.data();
    let summary = RenderSummary {
        width: view.width,
        height: view.height,
        primitives: scene.len(),
        visible: raster.visible_count(),
        singular_skipped: out.singular_skipped,
        mean_alpha: alpha.iter().sum::<f64>() / alpha.len().max(1) as f64,
    };
    report(a.json, &summary, || {
        format!(
            "rendered {}x{}: {} of {} primitives visible, mean alpha {:.4}",
            summary.width, summary.height, summary.visible, summary.primitives, summary.mean_alpha
        )
    })?;
    Ok(())
}

fn voxelize_cmd(a: VoxelizeArgs) -> CliResult<()> {
    if !(a.voxel_size > 0.0 && a.voxel_size.is_finite()) {
        return usage(format!("--voxel-size must be positive, got {}", a.voxel_size));
    }
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        return usage(format!("--lambda must be non-negative, got {}", a.lambda));
    }
    let scene = load_scene(&a.scene).with_context(|| format!("reading {}", a.scene.display()))?;
    let (table, merged) = voxelize(&scene, a.voxel_size, a.lambda)?;
    let stats = table.stats();
    let mut files = Outputs::default();
    files.push(&a.out, scene_to_bytes(&merged));
    files.add(a.stats.as_deref(), || json_bytes(&stats))?;
    files.commit()?;
    report(a.json, &stats, || {
        format!(
            "{} primitives -> {} voxels (mean {:.2}, max {} members)",
            stats.n_in, stats.n_out, stats.mean_members, stats.max_members
        )
    })?;
    Ok(())
}

fn parse_pairs(specs: &[String], n: usize) -> CliResult<Vec<(usize, usize)>> {
    if specs.is_empty() {
        return Ok(all_unordered_pairs(n));
    }
    let mut out = Vec::with_capacity(specs.len());
    for s in specs {
        let parsed = s
            .split_once('-')
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
        match parsed {
            Some((a, b)) if a < n && b < n => out.push((a, b)),
            _ => return usage(format!("bad pair {s:?}: expected `i-j` with indices below {n}")),
        }
    }
    Ok(out)
}

fn warploss(a: WarpArgs) -> CliResult<()> {
    let n = a.views.len();
    if a.features.len() != n || a.depths.len() != n {
        return usage(format!(
            "--views, --features and --depths need equal counts (got {}, {}, {})",
            n,
            a.features.len(),
            a.depths.len()
        ));
    }
    if !(a.depth_tol > 0.0) {
        return usage(format!("--depth-tol must be positive, got {}", a.depth_tol));
    }
    let pairs = parse_pairs(&a.pairs, n)?;
    if pairs.is_empty() {
        return usage("at least two views (or one explicit pair) are required");
    }
    let bundles = (0..n)
        .map(|i| {
            Ok(ViewBundle {
                view: load_camera(&a.views[i])?,
                features: load_map(&a.features[i])?,
                depth: load_map(&a.depths[i])?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let total = warp_loss_total(&bundles, &pairs, a.depth_tol)?;
    report(a.json, &total, || {
        let mut s = format!("warp loss {:.6}", total.loss);
        for t in &total.per_pair {
            s.push_str(&format!("\n  {} <- {}: {:.6} over {} px", t.t, t.c, t.loss, t.valid_px));
        }
        s
    })?;
    Ok(())
}

/// Every pixel of a map becomes one token row.
fn tokens(map: &DenseMap) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(map.pixel_count(), map.channels(), map.data())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    w_q: Vec<Vec<f64>>,
    w_k: Vec<Vec<f64>>,
    w_v: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> anyhow::Result<nalgebra::DMatrix<f64>> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        bail!("{name} has ragged rows");
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    Ok(nalgebra::DMatrix::from_row_slice(rows.len(), cols, &flat))
}

#[derive(Serialize)]
struct FuseSummary {
    n_geometry: usize,
    n_semantic: usize,
    d_k: usize,
    d_v: usize,
    max_row_sum_error: f64,
}

fn fuse(a: FuseArgs) -> CliResult<()> {
    if a.params.is_none() && a.init_seed.is_none() {
        return usage("one of --params or --init-seed is required");
    }
    if a.d_k == 0 || a.d_v == 0 {
        return usage("--d-k and --d-v must be positive");
    }
    let gmap = load_map(&a.geometry)?;
    let smap = load_map(&a.semantic)?;
    let (x, s) = (tokens(&gmap), tokens(&smap));
    let params = match (&a.params, a.init_seed) {
        (Some(path), _) => {
            let f: ParamsFile = read_json(path)?;
            FusionParams::new(
                matrix_from_rows(&f.w_q, "w_q")?,
                matrix_from_rows(&f.w_k, "w_k")?,
                matrix_from_rows(&f.w_v, "w_v")?,
            )?
        }
        (None, Some(seed)) => FusionParams::random(&mut Rng::new(seed), x.ncols(), s.ncols(), a.d_k, a.d_v),
        (None, None) => unreachable!(),
    };
    let fused = fuse_with_attention(&x, &s, &params)?;
    let dv = fused.output.ncols();
    let out_data: Vec<f64> = fused.output.transpose().as_slice().to_vec();
    let out = DenseMap::new(gmap.height(), gmap.width(), dv, out_data)?;
    let mut files = Outputs::default();
    files.push(&a.out, out.to_bytes());
    files.add(a.attention_out.as_deref(), || {
        let att = &fused.attention;
        let data = att.transpose().as_slice().to_vec();
        Ok(DenseMap::new(att.nrows(), 1, att.ncols(), data)?.to_bytes())
    })?;
    files.commit()?;
    let summary = FuseSummary {
        n_geometry: x.nrows(),
        n_semantic: s.nrows(),
        d_k: params.d_k(),
        d_v: dv,
        max_row_sum_error: fused
            .attention
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max),
    };
    report(a.json, &summary, || {
        format!(
            "fused {} geometry tokens over {} semantic tokens (d_k {}, d_v {})",
            summary.n_geometry, summary.n_semantic, summary.d_k, summary.d_v
        )
    })?;
    Ok(())
}

fn sizes<const N: usize>(given: &[usize], default: [usize; N], what: &str) -> CliResult<[usize; N]> {
    if given.is_empty() {
        return Ok(default);
    }
    match <[usize; N]>::try_from(given) {
        Ok(s) if s.iter().all(|v| *v > 0) => Ok(s),
        _ => usage(format!("--sizes for {what} takes {N} positive values")),
    }
}

fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    if !(a.depth_tol > 0.0) {
        return usage("--depth-tol must be positive");
    }
    let r = match a.op {
        GradOp::Fuse => check_fuse(a.seed, sizes(&a.sizes, [6, 8, 4], "fuse")?)?,
        GradOp::Warp => check_warp(a.seed, sizes(&a.sizes, [8, 8, 4], "warp")?, a.depth_tol)?,
        GradOp::Voxel => check_voxel_weights(a.seed, sizes(&a.sizes, [4, 3], "voxel")?)?,
        GradOp::Feature => check_feature_loss(a.seed, sizes(&a.sizes, [8, 8, 6], "feature")?)?,
    };
    report(a.json, &r, || {
        let mut s = format!("gradcheck {} seed {}:", r.op, r.seed);
        for e in &r.entries {
            s.push_str(&format!("\n  {:<20} max rel {:.3e}", e.name, e.max_rel_error));
        }
        s.push_str(if r.passed { "\npassed" } else { "\nFAILED" });
        s
    })?;
    if !r.passed {
        return Err(anyhow::anyhow!("gradient check exceeded tolerance {}", r.tolerance).into());
    }
    Ok(())
}

fn labels_of(map: &DenseMap, name: &str) -> anyhow::Result<Vec<u32>> {
    if map.channels() != 1 {
        bail!("{name} label map must have 1 channel");
    }
    map.data()
        .iter()
        .map(|v| {
            if *v >= 0.0 && v.fract() == 0.0 && *v <= u32::MAX as f64 {
                Ok(*v as u32)
            } else {
                bail!("{name} contains non-label value {v}")
            }
        })
        .collect()
}

#[derive(Serialize)]
struct MetricReport {
    kind: &'static str,
    value: f64,
}

fn metrics(a: MetricsArgs) -> CliResult<()> {
    let pred = load_map(&a.pred)?;
    let gt = load_map(&a.gt)?;
    let (kind, value) = match a.kind {
        MetricKind::Psnr => ("psnr", psnr(&pred, &gt)?),
        MetricKind::Ssim => ("ssim", ssim(&pred, &gt)?),
        MetricKind::Miou => {
            let p = labels_of(&pred, "pred")?;
            let g = labels_of(&gt, "gt")?;
            let n = a
                .n_classes
                .unwrap_or_else(|| p.iter().chain(&g).copied().max().unwrap_or(0) as usize);
            ("miou", miou(&p, &g, n)?)
        }
    };
    let r = MetricReport { kind, value };
    report(a.json, &r, || format!("{kind} {value}"))?;
    Ok(())
}

fn totalloss(a: TotalLossArgs) -> CliResult<()> {
    let weights: LossWeights = match &a.config {
        Some(p) => read_json(p)?,
        None => LossWeights::default(),
    };
    if let Err(e) = weights.validate() {
        return usage(e.to_string());
    }
    let mut c: LossComponents = match &a.components {
        Some(p) => read_json(p)?,
        None => LossComponents::default(),
    };
    for (slot, v) in [
        (&mut c.rgb, a.rgb),
        (&mut c.feat, a.feat),
        (&mut c.warp, a.warp),
        (&mut c.depth, a.depth),
        (&mut c.pose, a.pose),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    let r = total_loss(&c, &weights)?;
    report(a.json, &r, || {
        format!(
            "total {} = rgb {} + {}*feat {} + {}*warp {} + {}*depth {} + {}*pose {}",
            r.total,
            r.rgb,
            weights.lambda_feat,
            r.feat,
            weights.lambda_warp,
            r.warp,
            weights.lambda_depth,
            r.depth,
            weights.lambda_pose,
            r.pose
        )
    })?;
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary {
    seed: u64,
    gaussians: usize,
    cameras: usize,
    classes: usize,
    files: Vec<String>,
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    let s = generate(a.seed, &cfg)?;
    let mut files = Outputs::default();
    let mut names = vec!["scene.fgsc".to_string(), "class_features.json".to_string()];
    files.push(a.out_dir.join("scene.fgsc"), scene_to_bytes(&s.gaussians));
    files.push(a.out_dir.join("class_features.json"), json_bytes(&s.class_features)?);
    for (i, cam) in s.cameras.iter().enumerate() {
        let (c, l) = (format!("cam_{i}.json"), format!("labels_{i}.dmap"));
        files.push(a.out_dir.join(&c), cam.to_json().into_bytes());
        files.push(a.out_dir.join(&l), s.label_map_dense(i).to_bytes());
        names.push(c);
        names.push(l);
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    files.commit()?;
    let summary = SynthSummary {
        seed: a.seed,
        gaussians: s.gaussians.len(),
        cameras: s.cameras.len(),
        classes: s.class_features.len(),
        files: names,
    };
    report(a.json, &summary, || {
        format!(
            "wrote {} Gaussians, {} cameras to {}",
            summary.gaussians,
            summary.cameras,
            a.out_dir.display()
        )
    })?;
    Ok(())
}
