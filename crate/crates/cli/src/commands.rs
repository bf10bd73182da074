use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use psd_core::correction::{FileScorer, ResidualScorer, ScorerInput};
use psd_core::eval::{self, SceneSpec};
use psd_core::io::{load_image, load_raster_auto, write_atomic, write_raster, write_raster_auto, RasterFormat, PNG16_MAX_METERS};
use psd_core::pipeline::{run_pipeline, PipelineInputs};
use psd_core::scorer::scorer_by_name;
use psd_core::{
    apply_correction, apply_scale_shift, fit_scale_shift, fit_scale_shift_trimmed, prefill_gaussian,
    propagation, CameraIntrinsics, FeatureMap, Raster, SparseDepth,
};

use crate::settings::Settings;

fn load_sparse(path: &Path) -> Result<SparseDepth> {
    let raster = load_raster_auto(path).with_context(|| format!("loading sparse depth {}", path.display()))?;
    Ok(SparseDepth::new(raster)?)
}

fn load(path: &Path, what: &str) -> Result<Raster> {
    load_raster_auto(path).with_context(|| format!("loading {what} {}", path.display()))
}

fn load_features(path: Option<&Path>) -> Result<Option<FeatureMap>> {
    path.map(|p| Ok(FeatureMap::new(load(p, "features")?)?)).transpose()
}

fn load_rgb(path: Option<&Path>) -> Result<Option<Raster>> {
    path.map(|p| load_image(p).with_context(|| format!("loading image {}", p.display())))
        .transpose()
}

fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    CameraIntrinsics::load(path).with_context(|| format!("loading intrinsics {}", path.display()))
}

fn save(raster: &Raster, path: &Path) -> Result<()> {
    write_raster_auto(raster, path).with_context(|| format!("writing {}", path.display()))
}

/// Writes a 16-bit PNG, saturating depths above the format limit. Returns the
/// number of saturated pixels.
fn save_png16(depth: &Raster, path: &Path) -> Result<usize> {
    let over = depth.data().iter().filter(|&&v| v > PNG16_MAX_METERS).count();
    if over > 0 {
        warn!("{over} pixels above {PNG16_MAX_METERS} m saturated in {}", path.display());
    }
    let clipped = Raster::new(
        depth.height(),
        depth.width(),
        1,
        depth.data().iter().map(|v| v.clamp(0.0, PNG16_MAX_METERS)).collect(),
    )?;
    write_raster(&clipped, path, RasterFormat::Png16).with_context(|| format!("writing {}", path.display()))?;
    Ok(over)
}

#[derive(Args, Debug, Default, Clone)]
pub struct CompleteArgs {
    /// Relative (inverse-depth) prediction.
    #[arg(long)]
    pub relative: Option<PathBuf>,
    #[arg(long)]
    pub sparse: Option<PathBuf>,
    /// One-line `fx fy cx cy` file.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Color image; used for fallback features when --features is absent.
    #[arg(long)]
    pub rgb: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Directory holding residual/uncertainty/offset/logits DFR rasters.
    #[arg(long = "scorer-dir")]
    pub scorer_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Batch file: one job per line as `key=path` pairs (relative, sparse,
    /// intrinsics, rgb, features, scorer_dir, out).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl CompleteArgs {
    fn required<'a>(&'a self, v: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        v.as_deref().with_context(|| format!("--{name} is required"))
    }
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<CompleteArgs>> {
    let mut jobs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut job = CompleteArgs::default();
        for token in line.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .with_context(|| format!("manifest line {}: expected key=path, got '{token}'", n + 1))?;
            let p = Some(base.join(v));
            match k {
                "relative" => job.relative = p,
                "sparse" => job.sparse = p,
                "intrinsics" => job.intrinsics = p,
                "rgb" => job.rgb = p,
                "features" => job.features = p,
                "scorer_dir" => job.scorer_dir = p,
                "out" => job.out = p,
                other => bail!("manifest line {}: unknown key '{other}'", n + 1),
            }
        }
        jobs.push(job);
    }
    Ok(jobs)
}

pub fn complete(args: &CompleteArgs, settings: &Settings) -> Result<bool> {
    let Some(manifest) = &args.manifest else {
        complete_one(args, settings)?;
        return Ok(true);
    };
    let text = std::fs::read_to_string(manifest).with_context(|| format!("reading manifest {}", manifest.display()))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let jobs = parse_manifest(&text, base)?;
    let results: Vec<Result<()>> = jobs.par_iter().map(|j| complete_one(j, settings)).collect();
    let mut all_ok = true;
    for (i, (job, res)) in jobs.iter().zip(results).enumerate() {
        let out = job.out.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
        match res {
            Ok(()) => println!("ok job={i} out={out}"),
            Err(e) => {
                all_ok = false;
                println!("job={i} {}", crate::error_line(&e));
            }
        }
    }
    Ok(all_ok)
}

fn complete_one(args: &CompleteArgs, settings: &Settings) -> Result<()> {
    let cfg = settings.pipeline()?;
    let relative = load(args.required(&args.relative, "relative")?, "relative depth")?;
    let sparse = load_sparse(args.required(&args.sparse, "sparse")?)?;
    let k = load_intrinsics(args.required(&args.intrinsics, "intrinsics")?)?;
    let out = args.required(&args.out, "out")?;
    let rgb = load_rgb(args.rgb.as_deref())?;
    let features = match &args.features {
        Some(p) if p.exists() => load_features(Some(p))?,
        Some(p) => {
            warn!("features file {} missing; using fallback features", p.display());
            None
        }
        None => None,
    };
    if sparse.measured_count() < 2 {
        bail!("sparse depth needs at least 2 measurements, got {}", sparse.measured_count());
    }
    let scorer: Box<dyn ResidualScorer> = match &args.scorer_dir {
        Some(dir) => Box::new(FileScorer::new(dir)),
        None => scorer_by_name(&settings.scorer)?,
    };

    let result = run_pipeline(
        &PipelineInputs {
            relative: &relative,
            sparse: &sparse,
            intrinsics: &k,
            rgb: rgb.as_ref(),
            features: features.as_ref(),
        },
        &cfg,
        scorer.as_ref(),
    )?;

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save(&result.initial, &out.join("initial.dfr"))?;
    save(&result.final_depth, &out.join("final.dfr"))?;
    let sat_initial = save_png16(&result.initial, &out.join("initial.png"))?;
    let sat_final = save_png16(&result.final_depth, &out.join("final.png"))?;

    let mut report = String::new();
    report.push_str(&settings.to_lines());
    for (key, path) in [
        ("relative", &args.relative),
        ("sparse", &args.sparse),
        ("intrinsics", &args.intrinsics),
        ("rgb", &args.rgb),
        ("features", &args.features),
        ("scorer_dir", &args.scorer_dir),
    ] {
        if let Some(p) = path {
            report.push_str(&format!("input_{key}={}\n", p.display()));
        }
    }
    report.push_str(&format!("measurements={}\n", sparse.measured_count()));
    report.push_str(&result.report());
    report.push_str(&format!("png_saturated_initial={sat_initial}\npng_saturated_final={sat_final}\n"));
    write_atomic(out.join("report.txt"), report.as_bytes())?;
    info!(
        "completed {} (gamma={}, rho={})",
        out.display(),
        result.scale_shift.gamma,
        result.scale_shift.rho
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[arg(long)]
    relative: PathBuf,
    #[arg(long)]
    sparse: PathBuf,
    /// Aligned metric depth; format from extension.
    #[arg(long)]
    out: PathBuf,
}

pub fn align(args: &AlignArgs, settings: &Settings) -> Result<()> {
    let cfg = settings.pipeline()?;
    let relative = load(&args.relative, "relative depth")?;
    let sparse = load_sparse(&args.sparse)?;
    let ss = if settings.trimmed_fit {
        fit_scale_shift_trimmed(&relative, &sparse)?
    } else {
        fit_scale_shift(&relative, &sparse)?
    };
    let aligned = apply_scale_shift(&relative, &ss, cfg.clamp);
    save(&aligned.depth, &args.out)?;
    println!(
        "gamma={}\nrho={}\nresidual_rms={}\ninliers={}\nnonpositive={}\nclamped={}",
        ss.gamma, ss.rho, ss.residual_rms, ss.inlier_count, aligned.nonpositive_count, aligned.clamped_count
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct PrefillArgs {
    #[arg(long)]
    sparse: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn prefill(args: &PrefillArgs, settings: &Settings) -> Result<()> {
    let cfg = settings.pipeline()?;
    let sparse = load_sparse(&args.sparse)?;
    save(&prefill_gaussian(&sparse, &cfg.propagation.prefill)?, &args.out)
}

#[derive(Args, Debug)]
pub struct PropagateArgs {
    /// Aligned metric depth (point-cloud geometry).
    #[arg(long)]
    metric: PathBuf,
    #[arg(long)]
    sparse: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long)]
    rgb: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn features_or_fallback(features: Option<&Path>, rgb: Option<&Path>) -> Result<FeatureMap> {
    if let Some(f) = load_features(features)? {
        return Ok(f);
    }
    match load_rgb(rgb)? {
        Some(img) => Ok(psd_core::fallback_features(&img)?),
        None => bail!("either --features or --rgb is required"),
    }
}

pub fn propagate(args: &PropagateArgs, settings: &Settings) -> Result<()> {
    let cfg = settings.pipeline()?;
    let metric = load(&args.metric, "metric depth")?;
    let sparse = load_sparse(&args.sparse)?;
    let k = load_intrinsics(&args.intrinsics)?;
    let features = features_or_fallback(args.features.as_deref(), args.rgb.as_deref())?;
    let initial = propagation::run_dual_propagation(&metric, &sparse, &k, &features, &cfg.propagation)?;
    save(&initial, &args.out)
}

#[derive(Args, Debug)]
pub struct CorrectArgs {
    #[arg(long)]
    initial: PathBuf,
    /// Scorer bundle directory; otherwise the configured scorer runs and
    /// needs --sparse, --metric and --rgb or --features.
    #[arg(long = "scorer-dir")]
    scorer_dir: Option<PathBuf>,
    #[arg(long)]
    sparse: Option<PathBuf>,
    #[arg(long)]
    metric: Option<PathBuf>,
    #[arg(long)]
    rgb: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn correct(args: &CorrectArgs, settings: &Settings) -> Result<()> {
    let cfg = settings.pipeline()?;
    let initial = load(&args.initial, "initial depth")?;
    let outputs = if let Some(dir) = &args.scorer_dir {
        FileScorer::new(dir).load().with_context(|| format!("loading scorer bundle {}", dir.display()))?
    } else {
        let (Some(sp), Some(m)) = (&args.sparse, &args.metric) else {
            bail!("without --scorer-dir, --sparse and --metric are required");
        };
        let sparse = load_sparse(sp)?;
        let metric = load(m, "metric depth")?;
        let features = features_or_fallback(args.features.as_deref(), args.rgb.as_deref())?;
        scorer_by_name(&settings.scorer)?.score(&ScorerInput {
            initial: &initial,
            sparse: &sparse,
            metric: &metric,
            features: &features,
            params: &cfg.correction,
        })?
    };
    save(&apply_correction(&initial, &outputs, &cfg.correction)?, &args.out)
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Raster whose positive pixels are evaluated.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Comma-separated δ thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Print a single JSON line instead of metric=value lines.
    #[arg(long)]
    json: bool,
    /// Absolute-error PNG; the color scale goes to a .txt sidecar.
    #[arg(long = "error-map")]
    error_map: Option<PathBuf>,
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let pred = load(&args.pred, "prediction")?;
    let gt = load(&args.gt, "ground truth")?;
    let mask: Option<Vec<bool>> = args
        .mask
        .as_deref()
        .map(|p| load(p, "mask").map(|m| m.data().iter().map(|&v| v > 0.0).collect()))
        .transpose()?;
    let thresholds = args.thresholds.clone().unwrap_or_else(|| eval::DEFAULT_THRESHOLDS.to_vec());
    let report = eval::compute_metrics(&pred, &gt, mask.as_deref(), &thresholds)?;
    if args.json {
        println!("{}", report.to_json_line());
    } else {
        print!("{}", report.to_text());
    }
    if let Some(path) = &args.error_map {
        eval::write_error_map(&pred, &gt, mask.as_deref(), path)?;
    }
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum SampleCommand {
    /// Uniform random subset of valid ground-truth pixels.
    Random {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = eval::RANDOM_RATE_STANDARD)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Strongest Harris corners with valid ground truth.
    Harris {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long = "max-points")]
        max_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove measurements inside random elliptical holes.
    Holes {
        #[arg(long)]
        sparse: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long = "radius-min")]
        radius_min: f64,
        #[arg(long = "radius-max")]
        radius_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn sample(cmd: &SampleCommand, settings: &Settings) -> Result<()> {
    let seed = settings.seed;
    let (sparse, out) = match cmd {
        SampleCommand::Random { gt, rate, out } => (eval::sample_random(&load(gt, "ground truth")?, *rate, seed)?, out),
        SampleCommand::Harris { rgb, gt, max_points, out } => {
            let img = load_image(rgb).with_context(|| format!("loading image {}", rgb.display()))?;
            (eval::sample_harris(&img, &load(gt, "ground truth")?, *max_points, seed)?, out)
        }
        SampleCommand::Holes { sparse, count, radius_min, radius_max, out } => (
            eval::apply_pseudo_holes(&load_sparse(sparse)?, *count, (*radius_min, *radius_max), seed)?,
            out,
        ),
    };
    println!("measurements={}", sparse.measured_count());
    save(sparse.raster(), out)
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Multiplicative noise on relative depth.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Keep relative depth nonnegative (disparity-like).
    #[arg(long)]
    disparity: bool,
    /// Output directory: rgb.dfr, gt.dfr, relative.dfr, intrinsics.txt.
    #[arg(long)]
    out: PathBuf,
}

pub fn synth(args: &SynthArgs, settings: &Settings) -> Result<()> {
    let seed = settings.seed;
    let mut spec = if args.disparity {
        SceneSpec::random_disparity(args.height, args.width, seed)
    } else {
        SceneSpec::random(args.height, args.width, seed)
    }
    .with_noise(args.noise);
    if let Some(g) = args.gamma {
        spec.gamma = g;
    }
    if let Some(r) = args.rho {
        spec.rho = r;
    }
    let scene = eval::synth_scene(&spec, seed)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    save(&scene.rgb, &args.out.join("rgb.dfr"))?;
    save(&scene.gt_depth, &args.out.join("gt.dfr"))?;
    save(&scene.relative_depth, &args.out.join("relative.dfr"))?;
    write_atomic(args.out.join("intrinsics.txt"), format!("{}\n", scene.intrinsics.to_line()).as_bytes())?;
    println!("gamma={}\nrho={}", spec.gamma, spec.rho);
    Ok(())
}
