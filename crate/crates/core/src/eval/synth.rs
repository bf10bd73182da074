//! Ray-cast synthetic rooms with known metric depth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Points `X` with `normal · X = offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneLayout {
    pub planes: Vec<Plane>,
    pub spheres: Vec<Sphere>,
}

fn plane(normal: [f64; 3], offset: f64, albedo: [f64; 3]) -> Plane {
    Plane { normal, offset, albedo }
}

impl SceneLayout {
    /// Camera coordinates, y pointing down. Floor, ceiling, two side walls and
    /// a back wall; the back wall closes every viewing ray.
    pub fn room(floor_y: f64, ceiling_y: f64, left_x: f64, right_x: f64, back_z: f64) -> Self {
        SceneLayout {
            planes: vec![
                plane([0.0, 1.0, 0.0], floor_y, [0.55, 0.45, 0.35]),
                plane([0.0, 1.0, 0.0], ceiling_y, [0.9, 0.9, 0.85]),
                plane([1.0, 0.0, 0.0], left_x, [0.7, 0.3, 0.3]),
                plane([1.0, 0.0, 0.0], right_x, [0.3, 0.6, 0.35]),
                plane([0.0, 0.0, 1.0], back_z, [0.35, 0.4, 0.75]),
            ],
            spheres: Vec::new(),
        }
    }

    /// Nearest fronto-parallel plane `z = c` with `c > 0`; every viewing ray
    /// meets it, so no depth exceeds it.
    pub fn depth_bound(&self) -> f64 {
        self.planes
            .iter()
            .filter(|p| p.normal == [0.0, 0.0, 1.0] && p.offset > 0.0)
            .map(|p| p.offset)
            .fold(f64::INFINITY, f64::min)
    }

    /// Jittered room with one to three spheres.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut layout = SceneLayout::room(
            rng.random_range(1.1..1.6),
            -rng.random_range(1.1..1.6),
            -rng.random_range(1.8..2.8),
            rng.random_range(1.8..2.8),
            rng.random_range(6.0..9.0),
        );
        for _ in 0..rng.random_range(1..=3) {
            let radius = rng.random_range(0.3..0.8);
            layout.spheres.push(Sphere {
                center: [
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(2.5..5.5),
                ],
                radius,
                albedo: [
                    rng.random_range(0.2..1.0),
                    rng.random_range(0.2..1.0),
                    rng.random_range(0.2..1.0),
                ],
            });
        }
        layout
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub layout: SceneLayout,
    pub height: usize,
    pub width: usize,
    /// Defaults to `fx = fy = 0.9·W` centered on the frame.
    pub intrinsics: Option<CameraIntrinsics>,
    pub gamma: f64,
    pub rho: f64,
    /// Standard deviation of the multiplicative noise on relative depth.
    pub noise_sigma: f64,
}

impl SceneSpec {
    /// Random layout with `γ* ∈ [0.5, 4]` and `ρ* ∈ [0.01, 1]`, noiseless.
    pub fn random(height: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce9_e5ce_9e5c_e9e5);
        SceneSpec {
            layout: SceneLayout::random(&mut rng),
            height,
            width,
            intrinsics: None,
            gamma: rng.random_range(0.5..=4.0),
            rho: rng.random_range(0.01..=1.0),
            noise_sigma: 0.0,
        }
    }

    /// Like [`SceneSpec::random`] but with `ρ*` small enough that relative
    /// depth stays nonnegative, as a disparity-like prediction would.
    pub fn random_disparity(height: usize, width: usize, seed: u64) -> Self {
        let mut spec = Self::random(height, width, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15a_d15a_d15a_d15a);
        spec.rho = rng.random_range(0.01..=1.0 / spec.layout.depth_bound());
        spec
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn default_intrinsics(height: usize, width: usize) -> CameraIntrinsics {
        let f = 0.9 * width as f64;
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub rgb: Raster,
    /// Meters.
    pub gt_depth: Raster,
    /// Inverse-depth space; `1/(γ*·a + ρ*) = gt` when noiseless.
    pub relative_depth: Raster,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Nearest positive ray parameter of `t·dir` against a sphere, if any.
pub fn ray_sphere(dir: [f64; 3], s: &Sphere) -> Option<f64> {
    let a = dot(dir, dir);
    let b = -2.0 * dot(dir, s.center);
    let c = dot(s.center, s.center) - s.radius * s.radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    [(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)]
        .into_iter()
        .find(|&t| t > 0.0)
}

struct Hit {
    t: f64,
    normal: [f64; 3],
    albedo: [f64; 3],
}

fn cast(dir: [f64; 3], layout: &SceneLayout) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |hit: Hit| {
        if best.as_ref().is_none_or(|b| hit.t < b.t) {
            best = Some(hit);
        }
    };
    for p in &layout.planes {
        let denom = dot(p.normal, dir);
        if denom != 0.0 {
            let t = p.offset / denom;
            if t > 0.0 && t.is_finite() {
                consider(Hit { t, normal: p.normal, albedo: p.albedo });
            }
        }
    }
    for s in &layout.spheres {
        if let Some(t) = ray_sphere(dir, s) {
            let n = [
                (t * dir[0] - s.center[0]) / s.radius,
                (t * dir[1] - s.center[1]) / s.radius,
                (t * dir[2] - s.center[2]) / s.radius,
            ];
            consider(Hit { t, normal: n, albedo: s.albedo });
        }
    }
    best
}

/// Renders depth, shaded color and the matching relative depth.
///
/// Rays are `((u − cx)/fx, (v − cy)/fy, 1)`, so the hit parameter is the
/// z-depth directly.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    if !(spec.gamma > 0.0 && spec.gamma.is_finite()) {
        return Err(Error::Scene(format!("gamma must be positive, got {}", spec.gamma)));
    }
    if !spec.rho.is_finite() {
        return Err(Error::Scene("rho must be finite".into()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::Scene(format!("noise sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::Scene("scene dimensions must be positive".into()));
    }
    let k = spec
        .intrinsics
        .unwrap_or_else(|| SceneSpec::default_intrinsics(spec.height, spec.width));
    let (h, w) = (spec.height, spec.width);

    let mut gt = Vec::with_capacity(h * w);
    let mut rgb = Vec::with_capacity(h * w * 3);
    for v in 0..h {
        for u in 0..w {
            let dir = [(u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0];
            let hit = cast(dir, &spec.layout).ok_or_else(|| {
                Error::Scene(format!("ray through pixel ({v}, {u}) leaves the layout"))
            })?;
            gt.push(hit.t);
            let len = dot(dir, dir).sqrt();
            let nlen = dot(hit.normal, hit.normal).sqrt();
            let facing = (dot(hit.normal, dir) / (len * nlen)).abs();
            let shade = (0.25 + 0.75 * facing) / (1.0 + 0.05 * hit.t);
            rgb.extend(hit.albedo.iter().map(|a| (a * shade).clamp(0.0, 1.0)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Scene(e.to_string()))?;
    let relative = gt
        .iter()
        .map(|&d| {
            let a = (1.0 / d - spec.rho) / spec.gamma;
            if spec.noise_sigma > 0.0 {
                a * (1.0 + noise.sample(&mut rng))
            } else {
                a
            }
        })
        .collect();

    Ok(SyntheticScene {
        rgb: Raster::new(h, w, 3, rgb)?,
        gt_depth: Raster::new(h, w, 1, gt)?,
        relative_depth: Raster::new(h, w, 1, relative)?,
        intrinsics: k,
        seed,
    })
}
