//! 2D lidar profiling of box environments and world-frame cloud assembly.
//!
//! The scan plane is the body y-z plane (normal = body x = heading). Beam
//! angle 0 points along body +y (left of the flight direction) and positive
//! angles rotate toward +z.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{Matrix3, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Vec3;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LidarError {
    #[error("ray direction is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("plane fit needs at least 3 non-collinear points")]
    Degenerate,
    #[error("invalid box {0}: min must be below max on every axis")]
    InvalidBox(usize),
    #[error("invalid lidar parameter `{0}`")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Slab test. Returns the entry distance along the ray (0 when the origin
    /// is inside) or `None` if the ray misses.
    pub fn ray_entry(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for axis in 0..3 {
            let (lo, hi) = (self.min[axis], self.max[axis]);
            if dir[axis] == 0.0 {
                if origin[axis] < lo || origin[axis] > hi {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[axis];
            let (mut t0, mut t1) = ((lo - origin[axis]) * inv, (hi - origin[axis]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
        }
        if t_far < t_near.max(0.0) {
            None
        } else {
            Some(t_near.max(0.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxEnvironment {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub boxes: Vec<Aabb>,
}

impl BoxEnvironment {
    pub fn validate(&self) -> Result<(), LidarError> {
        for (i, b) in self.boxes.iter().enumerate() {
            if !(0..3).all(|k| b.min[k].is_finite() && b.max[k].is_finite() && b.min[k] < b.max[k]) {
                return Err(LidarError::InvalidBox(i));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarParams {
    pub fov_deg: f64,
    pub angular_step_deg: f64,
    pub r_max: f64,
    pub r_min: f64,
    /// Gaussian range noise, m. Zero disables noise draws.
    pub range_noise_sigma: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self { fov_deg: 270.0, angular_step_deg: 0.5, r_max: 30.0, r_min: 0.1, range_noise_sigma: 0.0 }
    }
}

impl LidarParams {
    pub fn validate(&self) -> Result<(), LidarError> {
        if !(self.fov_deg > 0.0 && self.fov_deg <= 360.0) {
            return Err(LidarError::InvalidParam("fov_deg"));
        }
        if !(self.angular_step_deg > 0.0 && self.angular_step_deg <= self.fov_deg) {
            return Err(LidarError::InvalidParam("angular_step_deg"));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(LidarError::InvalidParam("r_min"));
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            return Err(LidarError::InvalidParam("range_noise_sigma"));
        }
        Ok(())
    }

    pub fn beam_count(&self) -> usize {
        (self.fov_deg / self.angular_step_deg + 1e-9).floor() as usize + 1
    }

    /// Beam angles in radians, from `-fov/2` upward.
    pub fn beam_angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.beam_count()).map(|k| (-self.fov_deg / 2.0 + k as f64 * self.angular_step_deg).to_radians())
    }
}

/// Heading-only pose: roll and pitch are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self { position, yaw: normalize_angle(yaw) }
    }

    fn rotate(&self, v: Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    pub fn to_world(&self, local: Vec3) -> Vec3 {
        self.rotate(local) + self.position
    }
}

/// Wraps to (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarReturn {
    pub angle: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    pub pose: Pose,
    pub tick: u64,
    pub returns: Vec<LidarReturn>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `x y z` per line, six decimals.
    pub fn write_xyz<W: Write>(&self, mut out: W) -> io::Result<()> {
        for p in &self.points {
            writeln!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
        }
        out.flush()
    }
}

pub fn ray_cast(origin: &Vec3, dir: &Vec3, env: &BoxEnvironment, r_max: f64) -> Result<Option<f64>, LidarError> {
    let norm = dir.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(LidarError::NonUnitDirection(norm));
    }
    Ok(env
        .boxes
        .iter()
        .filter_map(|b| b.ray_entry(origin, dir))
        .filter(|t| *t <= r_max)
        .min_by(f64::total_cmp))
}

/// Local scan-plane point for a beam.
pub fn beam_local(angle: f64, range: f64) -> Vec3 {
    Vec3::new(0.0, range * angle.cos(), range * angle.sin())
}

fn scan(pose: &Pose, tick: u64, env: &BoxEnvironment, lp: &LidarParams, mut noise: impl FnMut() -> f64) -> ScanFrame {
    let returns = lp
        .beam_angles()
        .filter_map(|angle| {
            let dir = pose.rotate(beam_local(angle, 1.0));
            let hit = ray_cast(&pose.position, &dir, env, lp.r_max).expect("beam directions are unit")?;
            let range = hit + noise();
            (lp.r_min..=lp.r_max).contains(&range).then_some(LidarReturn { angle, range })
        })
        .collect();
    ScanFrame { pose: *pose, tick, returns }
}

pub fn simulate_scan(pose: &Pose, tick: u64, env: &BoxEnvironment, lp: &LidarParams) -> ScanFrame {
    scan(pose, tick, env, lp, || 0.0)
}

/// Like [`simulate_scan`], adding one Gaussian range sample per hit beam in
/// beam order when `range_noise_sigma > 0`.
pub fn simulate_scan_noisy<R: Rng>(pose: &Pose, tick: u64, env: &BoxEnvironment, lp: &LidarParams, rng: &mut R) -> ScanFrame {
    if lp.range_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, lp.range_noise_sigma).expect("sigma validated");
        scan(pose, tick, env, lp, || normal.sample(rng))
    } else {
        simulate_scan(pose, tick, env, lp)
    }
}

pub fn assemble_cloud(frames: &[ScanFrame]) -> PointCloud {
    let points = frames
        .iter()
        .flat_map(|f| f.returns.iter().map(move |r| f.pose.to_world(beam_local(r.angle, r.range))))
        .collect();
    PointCloud { points }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub normal: Vec3,
    /// Plane is `normal · p = offset`.
    pub offset: f64,
    pub rms: f64,
}

/// Total-least-squares plane through the cloud.
pub fn plane_fit_rms(cloud: &PointCloud) -> Result<PlaneFit, LidarError> {
    let pts = &cloud.points;
    if pts.len() < 3 {
        return Err(LidarError::Degenerate);
    }
    let n = pts.len() as f64;
    let centroid = pts.iter().sum::<Vec3>() / n;
    let cov = pts.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - centroid;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    let spread = eig.eigenvalues[largest];
    if spread <= 0.0 || eig.eigenvalues[middle] <= 1e-12 * spread {
        return Err(LidarError::Degenerate);
    }
    let mut normal: Vec3 = eig.eigenvectors.column(smallest).into_owned().normalize();
    let dominant = normal.iamax();
    if normal[dominant] < 0.0 {
        normal = -normal;
    }
    let offset = normal.dot(&centroid);
    let rms = (pts.iter().map(|p| (normal.dot(p) - offset).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PlaneFit { normal, offset, rms })
}
