use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "splatsem", version, about = "Feature-Gaussian splatting kernels")]
pub struct Cli {
    /// Worker threads. Outputs are identical for every setting.
    #[arg(long, global = true, env = "SPLATSEM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render color, features, depth and alpha of a scene from one camera.
    Render(RenderArgs),
    /// Merge a scene into one Gaussian per occupied voxel.
    Voxelize(VoxelizeArgs),
    /// Bidirectional feature warping loss between views.
    Warploss(WarpArgs),
    /// Cross-attention of geometry tokens over semantic tokens.
    Fuse(FuseArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// PSNR, SSIM or mIoU between two maps.
    Metrics(MetricsArgs),
    /// Weighted sum of loss components.
    Totalloss(TotalLossArgs),
    /// Generate a synthetic multi-view scene.
    Synth(SynthArgs),
    /// Time the renderer or the voxelizer.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    /// Color image (binary PPM).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Color as a 3-channel DMAP, for metrics.
    #[arg(long)]
    pub color_out: Option<PathBuf>,
    #[arg(long)]
    pub feature_out: Option<PathBuf>,
    #[arg(long)]
    pub depth_out: Option<PathBuf>,
    #[arg(long)]
    pub alpha_out: Option<PathBuf>,
    /// PCA preview of the feature map (binary PPM).
    #[arg(long)]
    pub pca_out: Option<PathBuf>,
    /// Class feature JSON (list of vectors) used for `--labels-out`.
    #[arg(long, requires = "labels_out")]
    pub classes: Option<PathBuf>,
    /// Argmax-cosine label map; background is the class count.
    #[arg(long, requires = "classes")]
    pub labels_out: Option<PathBuf>,
    /// Background color `r,g,b`.
    #[arg(long, default_value = "0,0,0")]
    pub bg: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub voxel_size: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    /// Comma-separated camera files, one per view.
    #[arg(long, value_delimiter = ',', required = true)]
    pub views: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub depths: Vec<PathBuf>,
    /// View pairs such as `0-1,1-2`; default is every unordered pair.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub depth_tol: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Geometry tokens: DMAP whose pixels are tokens.
    #[arg(long)]
    pub geometry: PathBuf,
    /// Semantic tokens: DMAP whose pixels are tokens.
    #[arg(long)]
    pub semantic: PathBuf,
    /// Projection matrices as JSON `{"w_q": rows, "w_k": rows, "w_v": rows}`.
    #[arg(long, conflicts_with = "init_seed")]
    pub params: Option<PathBuf>,
    /// Draw random projections from this seed instead of reading `--params`.
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub d_k: usize,
    #[arg(long, default_value_t = 64)]
    pub d_v: usize,
    /// Fused tokens, shaped like the geometry map with `d_v` channels.
    #[arg(long)]
    pub out: PathBuf,
    /// Attention matrix as an N_geometry × 1 × N_semantic DMAP.
    #[arg(long)]
    pub attention_out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GradOp {
    Fuse,
    Warp,
    Voxel,
    Feature,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub op: GradOp,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// fuse: tokens,d_model,d_k; warp/feature: H,W,D; voxel: members,D.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub depth_tol: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricKind {
    Psnr,
    Ssim,
    Miou,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub kind: MetricKind,
    /// Number of object classes for mIoU; label `n` is background.
    /// Defaults to the largest label present.
    #[arg(long)]
    pub n_classes: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TotalLossArgs {
    /// LossWeights JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Component JSON `{"rgb","feat","warp","depth","pose"}`; flags override it.
    #[arg(long)]
    pub components: Option<PathBuf>,
    #[arg(long)]
    pub rgb: Option<f64>,
    #[arg(long)]
    pub feat: Option<f64>,
    #[arg(long)]
    pub warp: Option<f64>,
    #[arg(long)]
    pub depth: Option<f64>,
    #[arg(long)]
    pub pose: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SynthConfig JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BenchOp {
    Render,
    Voxelize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub op: BenchOp,
    /// Number of primitives.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Image side for render.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 0.25)]
    pub voxel_size: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
