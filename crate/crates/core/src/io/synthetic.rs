use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{load_dataset, nerf_from_camera, Dataset};
use super::image::{quantize, write_png};
use super::points::{write_points, SeedPoint, POINTS_FILE};
use crate::error::{Error, Result};
use crate::math::sh::rgb_to_dc;
use crate::math::{logit, sh_evaluate, Gaussian, Quaternion, Vec3};
use crate::raster::{reference_render, Camera, RenderSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionProgram {
    /// The dynamic cluster turns a quarter revolution about the vertical axis.
    RigidOrbit,
    /// The dynamic cluster stays in place while its scales oscillate.
    PulsatingScale,
    /// A static cluster next to a cluster whose members oscillate in place.
    TwoCluster,
}

impl MotionProgram {
    pub fn name(self) -> &'static str {
        match self {
            MotionProgram::RigidOrbit => "rigid-orbit",
            MotionProgram::PulsatingScale => "pulsating-scale",
            MotionProgram::TwoCluster => "two-cluster",
        }
    }
}

impl FromStr for MotionProgram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid-orbit" => Ok(Self::RigidOrbit),
            "pulsating-scale" => Ok(Self::PulsatingScale),
            "two-cluster" => Ok(Self::TwoCluster),
            other => Err(Error::Config(format!(
                "unknown motion program `{other}` (expected rigid-orbit, pulsating-scale or two-cluster)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub program: MotionProgram,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub width: usize,
    pub height: usize,
    pub fov_x: f64,
    pub orbit_radius: f64,
    pub background: [f64; 3],
}

impl SyntheticSpec {
    pub fn new(program: MotionProgram) -> Self {
        Self {
            program,
            n_static: 20,
            n_dynamic: 20,
            n_train: 60,
            n_test: 10,
            width: 64,
            height: 64,
            fov_x: 0.8,
            orbit_radius: 4.0,
            background: [0.0; 3],
        }
    }

    pub fn frame_count(&self) -> usize {
        self.n_train + self.n_test
    }

    /// Whether frame `k` is held out. Test frames are spread evenly through
    /// the sequence.
    pub fn is_test(&self, k: usize) -> bool {
        if self.n_test == 0 {
            return false;
        }
        let stride = (self.frame_count() / self.n_test).max(1);
        k % stride == stride / 2 && k / stride < self.n_test
    }

    pub fn time(&self, k: usize) -> f64 {
        let n = self.frame_count();
        if n <= 1 {
            0.0
        } else {
            k as f64 / (n - 1) as f64
        }
    }

    /// Camera of frame `k`: golden-angle azimuth steps on a sphere around the
    /// origin with a gently varying elevation.
    pub fn camera(&self, k: usize) -> Camera {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let theta = k as f64 * golden;
        let elev = 0.35 * (1.3 * k as f64).sin();
        let r = self.orbit_radius;
        let eye = Vec3::new(r * elev.cos() * theta.sin(), r * elev.sin(), r * elev.cos() * theta.cos());
        Camera::look_at(eye, Vec3::zeros(), Vec3::y(), self.fov_x, self.width, self.height)
    }
}

/// A Gaussian with closed-form motion over `t in [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicGaussian {
    pub base: Gaussian,
    pub displacement: [f64; 3],
    pub log_scale_amplitude: [f64; 3],
    /// Rotation angle about the world y axis reached at `t = 1`.
    pub orbit_angle: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl DynamicGaussian {
    pub fn at(&self, t: f64) -> Gaussian {
        let s = (std::f64::consts::TAU * self.frequency * t + self.phase).sin();
        let spin = Quaternion::from_axis_angle([0.0, 1.0, 0.0], self.orbit_angle * t);
        let mut g = self.base.clone();
        g.position = spin.to_rotmat() * self.base.position + Vec3::from(self.displacement) * s;
        g.rotation = spin * self.base.rotation;
        g.log_scale = self.base.log_scale + Vec3::from(self.log_scale_amplitude) * s;
        g
    }
}

/// Parameters of a generated scene, sufficient to re-render any frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub sh_degree: usize,
    pub static_set: Vec<Gaussian>,
    pub dynamic: Vec<DynamicGaussian>,
}

impl GroundTruth {
    /// Dynamic Gaussians at `t` followed by the static ones.
    pub fn gaussians_at(&self, t: f64) -> Vec<Gaussian> {
        self.dynamic.iter().map(|d| d.at(t)).chain(self.static_set.iter().cloned()).collect()
    }

    pub fn render(&self, cam: &Camera, t: f64) -> Vec<f64> {
        let g = self.gaussians_at(t);
        let anchors: Vec<Vec3> = g.iter().map(|g| g.position).collect();
        let settings = RenderSettings {
            background: self.spec.background,
            sh_degree: self.sh_degree,
            ..Default::default()
        };
        reference_render(&g, &anchors, cam, &settings)
    }

    pub fn static_centroid(&self) -> Vec3 {
        centroid(self.static_set.iter().map(|g| g.position))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn centroid(points: impl Iterator<Item = Vec3>) -> Vec3 {
    let (sum, n) = points.fold((Vec3::zeros(), 0usize), |(s, n), p| (s + p, n + 1));
    if n == 0 {
        Vec3::zeros()
    } else {
        sum / n as f64
    }
}

const SH_DEGREE: usize = 1;

fn cluster_member(rng: &mut impl Rng, center: Vec3, radius: f64) -> Gaussian {
    let offset = loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            break v * radius;
        }
    };
    let rotation = Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize()
    .unwrap_or_default();
    let rgb = [
        rng.random_range(0.1..0.95),
        rng.random_range(0.1..0.95),
        rng.random_range(0.1..0.95),
    ];
    let mut sh = vec![[0.0; 3]; crate::math::sh_coeff_count(SH_DEGREE)];
    sh[0] = rgb_to_dc(rgb);
    Gaussian {
        position: center + offset,
        rotation,
        log_scale: Vec3::from_fn(|_, _| rng.random_range(0.07f64.ln()..0.16f64.ln())),
        opacity_logit: logit(rng.random_range(0.8..0.95)),
        sh,
    }
}

fn build_ground_truth(spec: &SyntheticSpec, seed: u64) -> GroundTruth {
    let mut rng = crate::testing::rng(seed);
    let static_center = Vec3::new(-0.6, 0.0, 0.1);
    let dynamic_center = Vec3::new(0.6, 0.0, -0.1);
    let static_set = (0..spec.n_static)
        .map(|_| cluster_member(&mut rng, static_center, 0.45))
        .collect();
    let dynamic = (0..spec.n_dynamic)
        .map(|_| {
            let base = cluster_member(&mut rng, dynamic_center, 0.45);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let dir = loop {
                let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                if v.norm() > 0.2 && v.norm() <= 1.0 {
                    break v.normalize();
                }
            };
            let mut d = DynamicGaussian {
                base,
                displacement: [0.0; 3],
                log_scale_amplitude: [0.0; 3],
                orbit_angle: 0.0,
                frequency: 1.0,
                phase,
            };
            match spec.program {
                MotionProgram::RigidOrbit => d.orbit_angle = std::f64::consts::FRAC_PI_2,
                MotionProgram::PulsatingScale => d.log_scale_amplitude = [0.6; 3],
                MotionProgram::TwoCluster => d.displacement = (dir * 0.3).into(),
            }
            d
        })
        .collect();
    GroundTruth {
        spec: spec.clone(),
        seed,
        sh_degree: SH_DEGREE,
        static_set,
        dynamic,
    }
}

#[derive(Serialize)]
struct FrameRecord {
    file_path: String,
    time: f64,
    transform_matrix: [[f64; 4]; 4],
}

#[derive(Serialize)]
struct TransformsRecord {
    camera_angle_x: f64,
    aabb: [[f64; 3]; 2],
    frames: Vec<FrameRecord>,
}

/// Renders a procedurally animated scene with the reference renderer and
/// writes it to `out` as a dataset, together with `ground_truth.json` and the
/// static cluster as the seed cloud.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64, out: &Path) -> Result<(Dataset, GroundTruth)> {
    if spec.frame_count() == 0 || spec.n_train == 0 {
        return Err(Error::Config("synthetic dataset needs at least one training frame".into()));
    }
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::Config("synthetic image size must be positive".into()));
    }
    let gt = build_ground_truth(spec, seed);
    for sub in ["train", "test"] {
        std::fs::create_dir_all(out.join(sub)).map_err(|e| Error::io(out.join(sub), e))?;
    }
    let frames: Vec<usize> = (0..spec.frame_count()).collect();
    let images = crate::par::map_slice(&frames, |&k| gt.render(&spec.camera(k), spec.time(k)));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, image) in images.iter().enumerate() {
        let split = if spec.is_test(k) { "test" } else { "train" };
        let name = format!("./{split}/r_{k:03}");
        write_png(&out.join(split).join(format!("r_{k:03}.png")), spec.width, spec.height, image)?;
        let c2w = nerf_from_camera(&spec.camera(k).world_to_camera);
        let record = FrameRecord {
            file_path: name,
            time: spec.time(k),
            transform_matrix: std::array::from_fn(|r| std::array::from_fn(|c| c2w[(r, c)])),
        };
        if spec.is_test(k) {
            test.push(record);
        } else {
            train.push(record);
        }
    }
    let aabb = [[-1.5; 3], [1.5; 3]];
    for (file, frames) in [("transforms_train.json", train), ("transforms_test.json", test)] {
        let rec = TransformsRecord {
            camera_angle_x: spec.fov_x,
            aabb,
            frames,
        };
        let path = out.join(file);
        let text = serde_json::to_string_pretty(&rec).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    if !gt.static_set.is_empty() {
        let seeds: Vec<SeedPoint> = gt
            .static_set
            .iter()
            .map(|g| {
                let rgb = sh_evaluate(&g.sh, &Vec3::z(), 0).expect("degree 0 is valid");
                SeedPoint {
                    position: g.position,
                    color: rgb.map(quantize),
                }
            })
            .collect();
        write_points(&out.join(POINTS_FILE), &seeds)?;
    }
    let gt_path = out.join("ground_truth.json");
    let text = serde_json::to_string_pretty(&gt).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&gt_path, text).map_err(|e| Error::io(&gt_path, e))?;
    let dataset = load_dataset(out, spec.background)?;
    Ok((dataset, gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_holds_out_every_seventh_frame() {
        let spec = SyntheticSpec::new(MotionProgram::TwoCluster);
        let test: Vec<usize> = (0..70).filter(|&k| spec.is_test(k)).collect();
        assert_eq!(test.len(), 10);
        assert_eq!(test[0], 3);
        assert_eq!(test[9], 66);
    }

    #[test]
    fn unknown_program_is_a_config_error() {
        assert!(matches!("spiral".parse::<MotionProgram>(), Err(Error::Config(_))));
        for p in [MotionProgram::RigidOrbit, MotionProgram::PulsatingScale, MotionProgram::TwoCluster] {
            assert_eq!(p.name().parse::<MotionProgram>().unwrap(), p);
        }
    }

    #[test]
    fn motion_programs_behave_as_named() {
        for program in [MotionProgram::RigidOrbit, MotionProgram::PulsatingScale, MotionProgram::TwoCluster] {
            let gt = build_ground_truth(&SyntheticSpec::new(program), 3);
            let (a, b) = (gt.gaussians_at(0.0), gt.gaussians_at(0.25));
            assert_eq!(a[20..], b[20..], "static cluster moved");
            let moved = a[..20].iter().zip(&b[..20]).all(|(x, y)| x.position != y.position);
            let rescaled = a[..20].iter().zip(&b[..20]).all(|(x, y)| x.log_scale != y.log_scale);
            assert_eq!(moved, program != MotionProgram::PulsatingScale);
            assert_eq!(rescaled, program == MotionProgram::PulsatingScale);
        }
    }
}
