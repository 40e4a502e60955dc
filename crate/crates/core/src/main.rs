use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seele::bench::{self, BenchInput, Representation};
use seele::compiler::{self, CompileParams};
use seele::io::container::{ChunkId, ClusteredSceneStore, MANIFEST_FILE};
use seele::io::{self as sio};
use seele::metrics;
use seele::pipeline::{self, Engine, RenderConfig};
use seele::residency::{ResidencyConfig, ResidentRenderer};
use seele::{Error, FrameStats, Result};

#[derive(Parser, Debug)]
#[command(name = "seele", version, about = "Gaussian splat renderer, scene compiler and benchmark harness")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SEELE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster training poses and write a clustered scene directory.
    Compile(CompileArgs),
    /// Render every camera of a trajectory.
    Render(RenderArgs),
    /// Compare engines and scene representations over a trajectory.
    Bench(BenchArgs),
    /// Summarize a PLY scene or a clustered scene directory.
    Inspect {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Print PSNR and SSIM between two images.
    Diff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct CompileOpts {
    #[arg(long, default_value_t = compiler::DEFAULT_CLUSTERS)]
    clusters: usize,
    #[arg(long, default_value_t = compiler::DEFAULT_TOP_K)]
    topk: usize,
    #[arg(long, default_value_t = compiler::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = compiler::DEFAULT_SHARE_THRESHOLD)]
    share_threshold: usize,
    #[arg(long, env = "SEELE_SEED", default_value_t = 0)]
    seed: u64,
    /// Jittered poses interpolated between training poses, added to the harvest.
    #[arg(long, default_value_t = 0)]
    extra_poses: usize,
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: CompileOpts,
    /// Neighbor clusters recorded for runtime selection (default: min(4, clusters - 1)).
    #[arg(long)]
    m: Option<usize>,
    /// Pixel group width recorded in the manifest.
    #[arg(long, default_value_t = compiler::DEFAULT_GROUP_W)]
    group: u32,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum EngineArg {
    Ref,
    Cr,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FormatArg {
    Png,
    Ppm,
}

#[derive(Args, Debug, Clone)]
struct RenderOpts {
    #[arg(long, value_enum, default_value_t = EngineArg::Ref)]
    engine: EngineArg,
    /// Pixel group width for the contribution-aware engine (1, 2 or 4).
    #[arg(long, default_value_t = compiler::DEFAULT_GROUP_W)]
    group: u32,
    /// Background color as `r,g,b` in [0, 1].
    #[arg(long, default_value = "0,0,0", value_parser = parse_rgb)]
    background: [f64; 3],
    /// Bin with the fixed 3-sigma extent instead of the opacity-aware one.
    #[arg(long)]
    fixed_extent: bool,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// PLY file or clustered scene directory.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    render: RenderOpts,
    /// Neighbor clusters to keep resident (default: the manifest's value).
    #[arg(long)]
    m: Option<usize>,
    /// Per-frame counters as JSON lines.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Png)]
    format: FormatArg,
    /// Load clusters synchronously only.
    #[arg(long)]
    no_prefetch: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Flat PLY scene (the baseline).
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Comma-separated `<ref|cr>:<flat|clustered>` entries.
    #[arg(long, default_value = "ref:flat,cr:flat,ref:clustered,cr:clustered")]
    matrix: String,
    #[arg(long)]
    out: PathBuf,
    /// JSON copy of the report.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Precompiled clustered scene; compiled on the fly when absent.
    #[arg(long)]
    clustered: Option<PathBuf>,
    #[command(flatten)]
    render: RenderOpts,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    compile: CompileOpts,
}

fn parse_rgb(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad component `{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [r, g, b] if parts.iter().all(|v| v.is_finite()) => Ok([*r, *g, *b]),
        _ => Err("expected three finite components r,g,b".into()),
    }
}

impl RenderOpts {
    fn config(&self) -> Result<RenderConfig> {
        let engine = match self.engine {
            EngineArg::Ref => Engine::Reference,
            EngineArg::Cr => {
                if !matches!(self.group, 1 | 2 | 4) {
                    return Err(Error::InvalidArgument(format!("group width {} not in {{1, 2, 4}}", self.group)));
                }
                Engine::ContributionAware { group_w: self.group }
            }
        };
        Ok(RenderConfig {
            engine,
            background: self.background,
            opacity_aware: !self.fixed_extent,
            ..RenderConfig::default()
        })
    }
}

fn default_m(clusters: usize) -> usize {
    compiler::DEFAULT_NEIGHBORS.min(clusters.saturating_sub(1))
}

fn compile_params(opts: &CompileOpts, m: Option<usize>, group_w: u32) -> CompileParams {
    CompileParams {
        clusters: opts.clusters,
        top_k: opts.topk,
        beta: opts.beta,
        share_threshold: opts.share_threshold,
        seed: opts.seed,
        m: m.unwrap_or_else(|| default_m(opts.clusters)),
        group_w,
        extra_pose_samples: opts.extra_poses,
        ..CompileParams::default()
    }
}

fn run_compile(args: &CompileArgs) -> Result<()> {
    let scene = sio::load_ply(&args.scene)?;
    let poses = sio::load_cameras(&args.cameras)?;
    let params = compile_params(&args.opts, args.m, args.group);
    let compiled = compiler::compile(&scene.gaussians, scene.sh_degree, &poses, &params)?;
    let manifest = sio::write_clustered_scene(&compiled, &scene.gaussians, scene.sh_degree, &args.out)?;

    let exclusive: usize = compiled.exclusive.iter().map(Vec::len).sum();
    let mut cluster_bytes: Vec<u64> = (0..manifest.num_clusters as u32)
        .map(|c| manifest.chunk_bytes(ChunkId::Cluster(c)))
        .collect();
    cluster_bytes.sort_unstable_by(|a, b| b.cmp(a));
    let worst_resident = manifest.shared_bytes() + cluster_bytes.iter().take(params.m + 1).sum::<u64>();
    let flat = manifest.flat_bytes() as f64;
    println!(
        "clusters={} shared={} exclusive={} discarded={} total={}",
        manifest.num_clusters,
        compiled.shared.len(),
        exclusive,
        compiled.discarded.len(),
        compiled.total_count
    );
    println!(
        "discarded_pct={:.2} model_reduction_pct={:.2} resident_reduction_pct={:.2}",
        100.0 * compiled.discarded.len() as f64 / compiled.total_count as f64,
        100.0 * (1.0 - manifest.retained_bytes() as f64 / flat),
        100.0 * (1.0 - worst_resident as f64 / flat)
    );
    Ok(())
}

fn write_stats(path: &Path, frames: &[FrameStats]) -> Result<()> {
    let mut out = Vec::new();
    for f in frames {
        serde_json::to_writer(&mut out, f).expect("stats serialize");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn is_clustered_dir(path: &Path) -> bool {
    path.is_dir() && path.join(MANIFEST_FILE).is_file()
}

fn run_render(args: &RenderArgs) -> Result<()> {
    let cfg = args.render.config()?;
    let poses = sio::load_cameras(&args.cameras)?;
    create_dir(&args.out)?;
    let ext = match args.format {
        FormatArg::Png => "png",
        FormatArg::Ppm => "ppm",
    };
    let mut all_stats = Vec::with_capacity(poses.len());
    let mut emit = |i: usize, img: &seele::Image, stats: FrameStats| -> Result<()> {
        sio::write_image(img, args.out.join(format!("frame_{i:04}.{ext}")))?;
        all_stats.push(stats);
        Ok(())
    };
    if is_clustered_dir(&args.scene) {
        let store = Arc::new(ClusteredSceneStore::open(&args.scene)?);
        let m = args.m.unwrap_or(store.manifest().m);
        let mut renderer = ResidentRenderer::new(
            store,
            ResidencyConfig {
                m,
                prefetch: !args.no_prefetch,
                ..ResidencyConfig::default()
            },
        )?;
        for (i, cam) in poses.iter().enumerate() {
            let (img, stats) = renderer.render_frame(cam, &cfg)?;
            emit(i, &img, stats)?;
        }
    } else {
        let scene = sio::load_ply(&args.scene)?;
        for (i, cam) in poses.iter().enumerate() {
            let (img, mut stats) = pipeline::render(&scene.gaussians, cam, scene.sh_degree, &cfg)?;
            stats.frame = i as u64;
            stats.resident_bytes = scene.gaussians.len() as u64 * sio::container::BYTES_PER_GAUSSIAN;
            emit(i, &img, stats)?;
        }
    }
    if let Some(path) = &args.stats {
        write_stats(path, &all_stats)?;
    }
    eprintln!("rendered {} frames into {}", all_stats.len(), args.out.display());
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let matrix = bench::parse_matrix(&args.matrix)?;
    let scene = sio::load_ply(&args.scene)?;
    let poses = sio::load_cameras(&args.cameras)?;
    let cfg = args.render.config()?;

    let needs_clustered = matrix.iter().any(|c| c.representation == Representation::Clustered);
    let mut _scratch = None;
    let clustered_dir = match (&args.clustered, needs_clustered) {
        (Some(dir), _) => Some(dir.clone()),
        (None, true) => {
            let mut opts = args.compile.clone();
            opts.clusters = opts.clusters.min(poses.len()).max(1);
            let params = compile_params(&opts, args.m, args.render.group);
            let compiled = compiler::compile(&scene.gaussians, scene.sh_degree, &poses, &params)?;
            let dir = tempfile::tempdir().map_err(|e| Error::Io {
                path: std::env::temp_dir(),
                source: e,
            })?;
            sio::write_clustered_scene(&compiled, &scene.gaussians, scene.sh_degree, dir.path())?;
            let path = dir.path().to_path_buf();
            _scratch = Some(dir);
            Some(path)
        }
        (None, false) => None,
    };
    let m = match (args.m, &clustered_dir) {
        (Some(m), _) => m,
        (None, Some(dir)) => ClusteredSceneStore::open(dir)?.manifest().m,
        (None, None) => 0,
    };
    let input = BenchInput {
        gaussians: &scene.gaussians,
        sh_degree: scene.sh_degree,
        poses: &poses,
        clustered_dir: clustered_dir.as_deref(),
        base: cfg,
        group_w: args.render.group,
        m,
    };
    let report = bench::bench_compare(&input, &matrix)?;
    let csv = report.to_csv();
    fs::write(&args.out, &csv).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    if let Some(path) = &args.json {
        fs::write(path, report.to_json()).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    print!("{csv}");
    Ok(())
}

fn run_inspect(scene: &Path) -> Result<()> {
    if is_clustered_dir(scene) {
        let store = ClusteredSceneStore::open(scene)?;
        let m = store.manifest();
        println!("kind=clustered version={}", m.version);
        println!(
            "clusters={} shared={} exclusive={} discarded={} total={}",
            m.num_clusters,
            m.shared.count,
            m.clusters.iter().map(|c| c.count).sum::<u64>(),
            m.discarded_count,
            m.total_count
        );
        println!(
            "k={} beta={} group_w={} M={} alpha_theta={} share_threshold={} seed={} sh_degree={}",
            m.k, m.beta, m.group_w, m.m, m.alpha_theta, m.share_threshold, m.seed, m.sh_degree
        );
        for (i, c) in m.clusters.iter().enumerate() {
            println!("cluster {i}: count={} bytes={}", c.count, m.chunk_bytes(ChunkId::Cluster(i as u32)));
        }
        println!("flat_bytes={} retained_bytes={}", m.flat_bytes(), m.retained_bytes());
    } else {
        let s = sio::load_ply(scene)?;
        println!("kind=ply");
        println!("gaussians={} sh_degree={}", s.gaussians.len(), s.sh_degree.get());
        println!("bytes={}", s.gaussians.len() as u64 * sio::container::BYTES_PER_GAUSSIAN);
    }
    Ok(())
}

/// Shortest decimal with at least one fractional digit, six at most.
fn format_unit(v: f64) -> String {
    let s = format!("{v:.6}");
    let t = s.trim_end_matches('0');
    if t.ends_with('.') {
        format!("{t}0")
    } else {
        t.to_string()
    }
}

fn run_diff(a: &Path, b: &Path) -> Result<()> {
    let ia = sio::read_image(a)?;
    let ib = sio::read_image(b)?;
    let p = metrics::psnr(&ia, &ib)?;
    let s = metrics::ssim(&ia, &ib)?;
    println!("psnr={} ssim={}", metrics::format_psnr(p), format_unit(s));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Compile(a) => run_compile(a),
        Command::Render(a) => run_render(a),
        Command::Bench(a) => run_bench(a),
        Command::Inspect { scene } => run_inspect(scene),
        Command::Diff { a, b } => run_diff(a, b),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 3 })
        }
    }
}
