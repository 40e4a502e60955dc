//! Engine × scene-representation comparison over a pose trajectory.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{FrameStats, Image};
use crate::io::container::{ClusteredSceneStore, BYTES_PER_GAUSSIAN};
use crate::metrics;
use crate::pipeline::{self, Engine, RenderConfig};
use crate::residency::{ResidencyConfig, ResidentRenderer};
use crate::scene::{CameraPose, Gaussian3D, ShDegree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Flat,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Reference,
    ContributionAware,
}

/// One matrix entry, written `ref:flat`, `cr:clustered`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub engine: EngineKind,
    pub representation: Representation,
}

impl BenchConfig {
    pub fn label(&self) -> String {
        let e = match self.engine {
            EngineKind::Reference => "ref",
            EngineKind::ContributionAware => "cr",
        };
        let r = match self.representation {
            Representation::Flat => "flat",
            Representation::Clustered => "clustered",
        };
        format!("{e}:{r}")
    }
}

impl FromStr for BenchConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad matrix entry `{s}`, expected <ref|cr>:<flat|clustered>"));
        let (e, r) = s.trim().split_once(':').ok_or_else(bad)?;
        let engine = match e {
            "ref" => EngineKind::Reference,
            "cr" => EngineKind::ContributionAware,
            _ => return Err(bad()),
        };
        let representation = match r {
            "flat" => Representation::Flat,
            "clustered" => Representation::Clustered,
            _ => return Err(bad()),
        };
        Ok(Self { engine, representation })
    }
}

/// Comma-separated list of entries.
pub fn parse_matrix(s: &str) -> Result<Vec<BenchConfig>> {
    let out = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(BenchConfig::from_str)
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty bench matrix".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub config: String,
    /// Over all frames pooled; `inf` when identical to the baseline.
    #[serde(serialize_with = "ser_psnr")]
    pub psnr_db: f64,
    /// Mean over frames.
    pub ssim: f64,
    /// Always empty; kept so downstream tables keep their column.
    pub lpips: Option<f64>,
    pub warp_steps: u64,
    pub alpha_evals: u64,
    pub blend_steps: u64,
    pub leader_evals: u64,
    pub peak_resident_bytes: u64,
    pub stalls: u64,
    pub wall_ms: f64,
}

fn ser_psnr<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

pub const CSV_HEADER: &str =
    "config,psnr_db,ssim,lpips,warp_steps,alpha_evals,blend_steps,leader_evals,peak_resident_bytes,stalls,wall_ms";

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},,{},{},{},{},{},{},{:.3}",
                r.config,
                metrics::format_psnr(r.psnr_db),
                r.ssim,
                r.warp_steps,
                r.alpha_evals,
                r.blend_steps,
                r.leader_evals,
                r.peak_resident_bytes,
                r.stalls,
                r.wall_ms
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize")
    }
}

/// Inputs shared by every configuration.
pub struct BenchInput<'a> {
    pub gaussians: &'a [Gaussian3D],
    pub sh_degree: ShDegree,
    pub poses: &'a [CameraPose],
    /// Needed only when the matrix has clustered entries.
    pub clustered_dir: Option<&'a Path>,
    pub base: RenderConfig,
    pub group_w: u32,
    pub m: usize,
}

fn engine_for(kind: EngineKind, group_w: u32) -> Engine {
    match kind {
        EngineKind::Reference => Engine::Reference,
        EngineKind::ContributionAware => Engine::ContributionAware { group_w },
    }
}

fn render_trajectory(input: &BenchInput, cfg: &BenchConfig) -> Result<(Vec<Image>, FrameStats, u64)> {
    let rc = RenderConfig {
        engine: engine_for(cfg.engine, input.group_w),
        ..input.base
    };
    let mut total = FrameStats::default();
    let mut images = Vec::with_capacity(input.poses.len());
    let peak = match cfg.representation {
        Representation::Flat => {
            for cam in input.poses {
                let (img, stats) = pipeline::render(input.gaussians, cam, input.sh_degree, &rc)?;
                total.accumulate(&stats);
                images.push(img);
            }
            input.gaussians.len() as u64 * BYTES_PER_GAUSSIAN
        }
        Representation::Clustered => {
            let dir = input
                .clustered_dir
                .ok_or_else(|| Error::InvalidArgument("clustered entries need a compiled scene".into()))?;
            let store = Arc::new(ClusteredSceneStore::open(dir)?);
            let mut renderer = ResidentRenderer::new(
                store,
                ResidencyConfig {
                    m: input.m,
                    ..ResidencyConfig::default()
                },
            )?;
            for cam in input.poses {
                let (img, stats) = renderer.render_frame(cam, &rc)?;
                total.accumulate(&stats);
                images.push(img);
            }
            renderer.state().peak_resident_bytes
        }
    };
    Ok((images, total, peak))
}

/// Renders the trajectory once per configuration and compares each against
/// the flat reference render.
pub fn bench_compare(input: &BenchInput, matrix: &[BenchConfig]) -> Result<BenchReport> {
    if input.poses.is_empty() {
        return Err(Error::InvalidArgument("bench needs at least one pose".into()));
    }
    let baseline_cfg = BenchConfig {
        engine: EngineKind::Reference,
        representation: Representation::Flat,
    };
    let (baseline, _, _) = render_trajectory(input, &baseline_cfg)?;
    let mut rows = Vec::with_capacity(matrix.len());
    for cfg in matrix {
        let start = Instant::now();
        let (images, stats, peak) = render_trajectory(input, cfg)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut sq = 0.0;
        let mut ssim_sum = 0.0;
        for (a, b) in images.iter().zip(&baseline) {
            sq += metrics::mse(a, b)?;
            ssim_sum += metrics::ssim(a, b)?;
        }
        let n = images.len() as f64;
        rows.push(BenchRow {
            config: cfg.label(),
            psnr_db: metrics::psnr_from_mse(sq / n),
            ssim: ssim_sum / n,
            lpips: None,
            warp_steps: stats.warp.warp_steps,
            alpha_evals: stats.warp.alpha_eval_steps,
            blend_steps: stats.warp.blend_steps,
            leader_evals: stats.warp.leader_eval_steps,
            peak_resident_bytes: peak,
            stalls: stats.stalls,
            wall_ms,
        });
    }
    Ok(BenchReport { rows })
}
