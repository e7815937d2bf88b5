//! Parametric radar and camera models and radar point clustering.
//!
//! Signal-level radar processing and image-based detection are replaced by
//! object-level models: a target produces detections when it is inside the
//! sensor's field of view and range, passes the line-of-sight check, and
//! survives a Bernoulli draw with the configured detection probability.

mod dbscan;
mod occlusion;

pub use dbscan::{dbscan, ClusterResult, NOISE};
pub use occlusion::{
    line_of_sight_visible, line_of_sight_visible_with, segments_intersect, visible_fraction,
    DEFAULT_VISIBILITY_THRESHOLD,
};

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::ScenePosition;
use crate::scenario::ActorState;

/// Smallest per-axis variance attached to any detection (1 cm std).
pub const MIN_VARIANCE_M2: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Radar,
    Camera,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Vehicle,
    Unknown,
}

/// Configuration of one perception sensor mounted at the ego centre and
/// aligned with the ego heading.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorModel {
    pub id: u32,
    pub kind: SensorKind,
    /// Total azimuth field of view.
    pub fov_rad: f64,
    pub max_range_m: f64,
    /// Per-axis std of each emitted point / object position.
    pub noise_std_m: f64,
    pub detection_prob: f64,
    /// Expected number of false detections per frame (Poisson).
    pub false_alarm_rate: f64,
    /// Radar only.
    pub returns_per_vehicle: u32,
    /// Camera only.
    pub classification_accuracy: f64,
    /// Per-axis std reported with object-level detections (radar cluster
    /// centroids, camera objects).
    pub measurement_std_m: f64,
    /// Radar only: DBSCAN neighbourhood radius.
    pub cluster_eps_m: f64,
    /// Radar only: DBSCAN core-point threshold.
    pub cluster_min_pts: usize,
    pub visibility_threshold: f64,
}

impl SensorModel {
    /// Combined front radar standing in for a long/short range pair.
    pub fn default_radar(id: u32) -> Self {
        Self {
            id,
            kind: SensorKind::Radar,
            fov_rad: 120f64.to_radians(),
            max_range_m: 160.0,
            noise_std_m: 0.5,
            detection_prob: 0.9,
            false_alarm_rate: 2.0,
            returns_per_vehicle: 4,
            classification_accuracy: 1.0,
            measurement_std_m: 0.5,
            cluster_eps_m: 2.0,
            cluster_min_pts: 2,
            visibility_threshold: DEFAULT_VISIBILITY_THRESHOLD,
        }
    }

    pub fn default_camera(id: u32) -> Self {
        Self {
            id,
            kind: SensorKind::Camera,
            fov_rad: 90f64.to_radians(),
            max_range_m: 100.0,
            noise_std_m: 1.0,
            detection_prob: 0.9,
            false_alarm_rate: 0.1,
            returns_per_vehicle: 1,
            classification_accuracy: 0.95,
            measurement_std_m: 1.0,
            cluster_eps_m: 0.0,
            cluster_min_pts: 1,
            visibility_threshold: DEFAULT_VISIBILITY_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("sensor {}: {what}", self.id)));
        if !(self.fov_rad > 0.0 && self.fov_rad <= 2.0 * PI) {
            return bad("fov must be in (0, 360] degrees");
        }
        if !(self.max_range_m > 0.0) {
            return bad("max_range_m must be positive");
        }
        if !(self.noise_std_m >= 0.0 && self.measurement_std_m >= 0.0) {
            return bad("noise std must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.detection_prob) {
            return bad("detection_prob must be in [0, 1]");
        }
        if !(self.false_alarm_rate >= 0.0 && self.false_alarm_rate.is_finite()) {
            return bad("false_alarm_rate must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.visibility_threshold) {
            return bad("visibility_threshold must be in [0, 1]");
        }
        match self.kind {
            SensorKind::Radar => {
                if self.returns_per_vehicle < 1 {
                    return bad("returns_per_vehicle must be at least 1");
                }
                if !(self.cluster_eps_m > 0.0) || self.cluster_min_pts < 1 {
                    return bad("cluster_eps_m must be positive and cluster_min_pts >= 1");
                }
            }
            SensorKind::Camera => {
                if !(0.0..=1.0).contains(&self.classification_accuracy) {
                    return bad("classification_accuracy must be in [0, 1]");
                }
            }
        }
        Ok(())
    }

    /// Per-axis covariance attached to object-level detections.
    pub fn measurement_covariance(&self) -> Matrix3<f64> {
        isotropic(self.measurement_std_m)
    }

    /// True when `p` is inside this sensor's range and azimuth sector as
    /// seen from `ego`.
    pub fn covers(&self, ego: &ActorState, p: &ScenePosition) -> bool {
        let (dx, dy) = (p.x_m - ego.position.x_m, p.y_m - ego.position.y_m);
        if dx.hypot(dy) > self.max_range_m {
            return false;
        }
        let bearing = wrap_angle(dy.atan2(dx) - ego.heading_rad);
        bearing.abs() <= 0.5 * self.fov_rad
    }
}

/// One object- or point-level measurement in the scene frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub source: u32,
    pub t: f64,
    pub position: ScenePosition,
    pub covariance: Matrix3<f64>,
    pub class_label: Option<ClassLabel>,
}

fn isotropic(std: f64) -> Matrix3<f64> {
    Matrix3::identity() * (std * std).max(MIN_VARIANCE_M2)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Midpoint of the bounding-box edge closest to `from`.
pub fn nearest_face_point(from: &ScenePosition, target: &ActorState) -> ScenePosition {
    let c = target.corners();
    (0..4)
        .map(|k| {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            ScenePosition::planar(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]))
        })
        .min_by(|p, q| {
            p.distance_xy(from)
                .partial_cmp(&q.distance_xy(from))
                .expect("finite positions")
        })
        .expect("four edges")
}

/// Targets that pass the range, field-of-view and line-of-sight gates.
pub fn observable_targets<'a>(
    m: &SensorModel,
    ego: &ActorState,
    actors: &'a [ActorState],
) -> Vec<&'a ActorState> {
    actors
        .iter()
        .filter(|a| a.actor_id != ego.actor_id)
        .filter(|a| m.covers(ego, &a.position))
        .filter(|a| {
            let others: Vec<ActorState> = actors
                .iter()
                .filter(|o| o.actor_id != a.actor_id && o.actor_id != ego.actor_id)
                .cloned()
                .collect();
            line_of_sight_visible_with(ego, a, &others, m.visibility_threshold)
        })
        .collect()
}

fn gaussian(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("non-negative finite std")
}

fn false_alarms<R: Rng + ?Sized>(
    m: &SensorModel,
    ego: &ActorState,
    t: f64,
    rng: &mut R,
    label: Option<ClassLabel>,
    covariance: Matrix3<f64>,
) -> Vec<Detection> {
    if m.false_alarm_rate <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(m.false_alarm_rate)
        .expect("positive rate")
        .sample(rng) as usize;
    (0..n)
        .map(|_| {
            // uniform over the sector area
            let r = m.max_range_m * rng.random::<f64>().sqrt();
            let bearing = ego.heading_rad + (rng.random::<f64>() - 0.5) * m.fov_rad;
            Detection {
                source: m.id,
                t,
                position: ScenePosition::planar(
                    ego.position.x_m + r * bearing.cos(),
                    ego.position.y_m + r * bearing.sin(),
                ),
                covariance,
                class_label: label,
            }
        })
        .collect()
}

/// Radar point detections for one frame.
///
/// Each observable target is detected with probability `detection_prob`
/// and then yields `returns_per_vehicle` points scattered around the
/// midpoint of its face nearest the sensor. Poisson clutter is added
/// uniformly over the field of view.
pub fn simulate_radar<R: Rng + ?Sized>(
    m: &SensorModel,
    ego: &ActorState,
    actors: &[ActorState],
    t: f64,
    rng: &mut R,
) -> Vec<Detection> {
    debug_assert_eq!(m.kind, SensorKind::Radar);
    let noise = gaussian(m.noise_std_m);
    let cov = isotropic(m.noise_std_m);
    let mut out = Vec::new();
    for target in observable_targets(m, ego, actors) {
        if rng.random::<f64>() >= m.detection_prob {
            continue;
        }
        let face = nearest_face_point(&ego.position, target);
        for _ in 0..m.returns_per_vehicle {
            out.push(Detection {
                source: m.id,
                t,
                position: ScenePosition::planar(face.x_m + noise.sample(rng), face.y_m + noise.sample(rng)),
                covariance: cov,
                class_label: None,
            });
        }
    }
    out.extend(false_alarms(m, ego, t, rng, None, cov));
    out
}

/// Object-level camera detections for one frame.
pub fn simulate_camera<R: Rng + ?Sized>(
    m: &SensorModel,
    ego: &ActorState,
    actors: &[ActorState],
    t: f64,
    rng: &mut R,
) -> Vec<Detection> {
    debug_assert_eq!(m.kind, SensorKind::Camera);
    let noise = gaussian(m.noise_std_m);
    let cov = m.measurement_covariance();
    let mut out = Vec::new();
    for target in observable_targets(m, ego, actors) {
        if rng.random::<f64>() >= m.detection_prob {
            continue;
        }
        let label = if rng.random::<f64>() < m.classification_accuracy {
            ClassLabel::Vehicle
        } else {
            ClassLabel::Unknown
        };
        out.push(Detection {
            source: m.id,
            t,
            position: ScenePosition::planar(
                target.position.x_m + noise.sample(rng),
                target.position.y_m + noise.sample(rng),
            ),
            covariance: cov,
            class_label: Some(label),
        });
    }
    out.extend(false_alarms(m, ego, t, rng, Some(ClassLabel::Unknown), cov));
    out
}

/// Collapses radar points to one object detection per DBSCAN cluster at
/// the cluster centroid; noise points are dropped.
pub fn cluster_radar(
    dets: &[Detection],
    eps: f64,
    min_pts: usize,
    covariance: Matrix3<f64>,
) -> Vec<Detection> {
    if dets.is_empty() {
        return Vec::new();
    }
    let points: Vec<[f64; 2]> = dets.iter().map(|d| [d.position.x_m, d.position.y_m]).collect();
    let clusters = dbscan(&points, eps, min_pts);
    clusters
        .members()
        .into_iter()
        .map(|idx| {
            let n = idx.len() as f64;
            let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
            for &i in &idx {
                x += dets[i].position.x_m;
                y += dets[i].position.y_m;
                z += dets[i].position.z_m;
            }
            let first = &dets[idx[0]];
            Detection {
                source: first.source,
                t: first.t,
                position: ScenePosition::new(x / n, y / n, z / n),
                covariance,
                class_label: None,
            }
        })
        .collect()
}
