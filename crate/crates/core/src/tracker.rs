//! Kalman state estimation and track lifecycle for the local sensor list.
//!
//! The filter is written against [`MotionModel`] / [`MeasurementModel`]
//! Jacobian hooks. The shipped models (2-D constant velocity, position-only
//! measurement) are linear, so the extended filter reduces exactly to the
//! standard Kalman filter.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::sensors::Detection;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    Sensor,
    V2v,
    Priority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Coasted,
    Deleted,
}

impl TrackStatus {
    /// Legal lifecycle edges; `Deleted` is terminal.
    pub fn can_transition_to(self, next: TrackStatus) -> bool {
        use TrackStatus::*;
        matches!(
            (self, next),
            (Tentative, Tentative)
                | (Tentative, Confirmed)
                | (Tentative, Deleted)
                | (Confirmed, Confirmed)
                | (Confirmed, Coasted)
                | (Confirmed, Deleted)
                | (Coasted, Coasted)
                | (Coasted, Confirmed)
                | (Coasted, Deleted)
        )
    }

    /// Confirmed or coasting; what a consumer of the list should act on.
    pub fn is_established(self) -> bool {
        matches!(self, TrackStatus::Confirmed | TrackStatus::Coasted)
    }
}

/// `[x, y, vx, vy]` with its covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl KinematicState {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.mean[2], self.mean[3])
    }

    pub fn position_covariance(&self) -> Matrix2<f64> {
        self.covariance.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

/// Identity of a track across the three lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrackKey {
    pub kind: TrackKind,
    pub id: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub kind: TrackKind,
    pub state: KinematicState,
    /// Time the state refers to.
    pub state_t: f64,
    pub status: TrackStatus,
    pub hits: u32,
    pub misses_consecutive: u32,
    pub last_update_t: f64,
    /// BSM temporary id for V2V-derived tracks.
    pub source_temp_id: Option<u32>,
    /// Last innovation, kept for gating diagnostics.
    pub innovation: Option<Vector2<f64>>,
    hit_history: u32,
    age_frames: u32,
}

impl Track {
    pub fn new(track_id: u64, kind: TrackKind, state: KinematicState, t: f64) -> Self {
        Self {
            track_id,
            kind,
            state,
            state_t: t,
            status: TrackStatus::Tentative,
            hits: 1,
            misses_consecutive: 0,
            last_update_t: t,
            source_temp_id: None,
            innovation: None,
            hit_history: 1,
            age_frames: 1,
        }
    }

    pub fn key(&self) -> TrackKey {
        TrackKey {
            kind: self.kind,
            id: self.track_id,
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        self.state.position()
    }

    fn set_status(&mut self, next: TrackStatus) {
        debug_assert!(
            self.status.can_transition_to(next),
            "illegal transition {:?} -> {:?}",
            self.status,
            next
        );
        self.status = next;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackList {
    kind: TrackKind,
    tracks: Vec<Track>,
    next_id: u64,
}

impl TrackList {
    pub fn new(kind: TrackKind) -> Self {
        Self {
            kind,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn kind(&self) -> TrackKind {
        self.kind
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn tracks_mut(&mut self) -> &mut [Track] {
        &mut self.tracks
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn get(&self, track_id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    pub fn get_mut(&mut self, track_id: u64) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.track_id == track_id)
    }

    /// Adds a new track with a freshly issued id and returns that id.
    pub fn spawn(&mut self, state: KinematicState, t: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.tracks.push(Track::new(id, self.kind, state, t));
        id
    }

    /// Drops every track whose status is `Deleted`.
    pub fn purge_deleted(&mut self) {
        self.tracks.retain(|t| t.status != TrackStatus::Deleted);
    }

    pub fn retain(&mut self, f: impl FnMut(&Track) -> bool) {
        self.tracks.retain(f);
    }

    /// Copy of the list with every track predicted forward to `t`.
    pub fn predicted_to(&self, t: f64, process_noise: f64) -> TrackList {
        let mut out = self.clone();
        for tr in &mut out.tracks {
            let dt = t - tr.state_t;
            if dt > 0.0 {
                *tr = ekf_predict(tr, dt, process_noise);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Filter models
// ---------------------------------------------------------------------------

pub trait MotionModel {
    fn propagate(&self, x: &Vector4<f64>, dt: f64) -> Vector4<f64>;
    fn jacobian(&self, x: &Vector4<f64>, dt: f64) -> Matrix4<f64>;
    fn process_noise(&self, dt: f64) -> Matrix4<f64>;
}

pub trait MeasurementModel {
    fn observe(&self, x: &Vector4<f64>) -> Vector2<f64>;
    fn jacobian(&self, x: &Vector4<f64>) -> Matrix2x4<f64>;
}

/// Constant velocity with white-noise acceleration of intensity `q`
/// (m²/s³) per axis.
#[derive(Clone, Copy, Debug)]
pub struct ConstantVelocity {
    pub q: f64,
}

impl ConstantVelocity {
    pub fn transition(dt: f64) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        f
    }
}

impl MotionModel for ConstantVelocity {
    fn propagate(&self, x: &Vector4<f64>, dt: f64) -> Vector4<f64> {
        Self::transition(dt) * x
    }

    fn jacobian(&self, _x: &Vector4<f64>, dt: f64) -> Matrix4<f64> {
        Self::transition(dt)
    }

    fn process_noise(&self, dt: f64) -> Matrix4<f64> {
        let (dt2, dt3) = (dt * dt, dt * dt * dt);
        let q = self.q;
        let mut m = Matrix4::zeros();
        for axis in 0..2 {
            let (p, v) = (axis, axis + 2);
            m[(p, p)] = q * dt3 / 3.0;
            m[(p, v)] = q * dt2 / 2.0;
            m[(v, p)] = q * dt2 / 2.0;
            m[(v, v)] = q * dt;
        }
        m
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PositionMeasurement;

impl PositionMeasurement {
    pub fn matrix() -> Matrix2x4<f64> {
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    }
}

impl MeasurementModel for PositionMeasurement {
    fn observe(&self, x: &Vector4<f64>) -> Vector2<f64> {
        Vector2::new(x[0], x[1])
    }

    fn jacobian(&self, _x: &Vector4<f64>) -> Matrix2x4<f64> {
        Self::matrix()
    }
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

pub fn ekf_predict_with<M: MotionModel>(tr: &Track, dt: f64, model: &M) -> Track {
    debug_assert!(dt > 0.0);
    let x = &tr.state.mean;
    let f = model.jacobian(x, dt);
    let p = f * tr.state.covariance * f.transpose() + model.process_noise(dt);
    let mut out = tr.clone();
    out.state = KinematicState {
        mean: model.propagate(x, dt),
        covariance: symmetrize(&p),
    };
    out.state_t = tr.state_t + dt;
    out
}

/// Constant-velocity prediction over `dt` seconds.
pub fn ekf_predict(tr: &Track, dt: f64, q: f64) -> Track {
    ekf_predict_with(tr, dt, &ConstantVelocity { q })
}

fn is_spd2(r: &Matrix2<f64>) -> bool {
    r.iter().all(|v| v.is_finite())
        && (r[(0, 1)] - r[(1, 0)]).abs() <= 1e-9 * r.abs().max().max(1.0)
        && r.cholesky().is_some()
}

pub fn ekf_update_with<H: MeasurementModel>(
    tr: &Track,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
    model: &H,
) -> Result<Track> {
    if !is_spd2(r) {
        return Err(Error::NotPositiveDefinite("measurement covariance"));
    }
    let x = &tr.state.mean;
    let p = &tr.state.covariance;
    let h = model.jacobian(x);
    let innovation = z - model.observe(x);
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("innovation covariance"))?
        .inverse();
    let k = p * h.transpose() * s_inv;
    let posterior = (Matrix4::identity() - k * h) * p;
    let mut out = tr.clone();
    out.state = KinematicState {
        mean: x + k * innovation,
        covariance: symmetrize(&posterior),
    };
    out.innovation = Some(innovation);
    Ok(out)
}

/// Position-only Kalman update.
pub fn ekf_update(tr: &Track, z: &Vector2<f64>, r: &Matrix2<f64>) -> Result<Track> {
    ekf_update_with(tr, z, r, &PositionMeasurement)
}

/// Mahalanobis distance between a detection and a track's predicted
/// position under the innovation covariance `H P Hᵀ + R`.
pub fn innovation_distance(tr: &Track, z: &Vector2<f64>, r: &Matrix2<f64>) -> f64 {
    let s = tr.state.position_covariance() + r;
    let nu = z - tr.position();
    match s.cholesky() {
        Some(c) => nu.dot(&c.solve(&nu)).max(0.0).sqrt(),
        None => f64::INFINITY,
    }
}

// ---------------------------------------------------------------------------
// Association and lifecycle
// ---------------------------------------------------------------------------

/// Result of global-nearest-neighbour association.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionAssignment {
    /// `(track_id, detection index, Mahalanobis distance)`.
    pub pairs: Vec<(u64, usize, f64)>,
    pub unassigned_tracks: Vec<u64>,
    pub unassigned_detections: Vec<usize>,
}

const OUT_OF_GATE_COST: f64 = 1e12;

/// One-to-one minimum-cost assignment of detections to tracks on squared
/// Mahalanobis cost; pairs beyond `gate` are discarded.
pub fn associate_detections_to_tracks(tl: &TrackList, dets: &[Detection], gate: f64) -> DetectionAssignment {
    let tracks: Vec<&Track> = tl
        .tracks()
        .iter()
        .filter(|t| t.status != TrackStatus::Deleted)
        .collect();
    let dist: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| {
            dets.iter()
                .map(|d| {
                    let z = Vector2::new(d.position.x_m, d.position.y_m);
                    let r = d.covariance.fixed_view::<2, 2>(0, 0).into_owned();
                    innovation_distance(t, &z, &r)
                })
                .collect()
        })
        .collect();
    let cost: Vec<Vec<f64>> = dist
        .iter()
        .map(|row| {
            row.iter()
                .map(|&d| if d <= gate { d * d } else { OUT_OF_GATE_COST })
                .collect()
        })
        .collect();

    let solution = assignment::solve(&cost);
    let mut out = DetectionAssignment::default();
    let mut det_used = vec![false; dets.len()];
    for (i, col) in solution.iter().enumerate() {
        match col {
            Some(j) if dist[i][*j] <= gate => {
                out.pairs.push((tracks[i].track_id, *j, dist[i][*j]));
                det_used[*j] = true;
            }
            _ => out.unassigned_tracks.push(tracks[i].track_id),
        }
    }
    out.unassigned_detections = (0..dets.len()).filter(|&j| !det_used[j]).collect();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// Mahalanobis gate for detection-to-track association.
    pub gate: f64,
    /// M in the M-of-N confirmation rule.
    pub confirm_hits: u32,
    /// N in the M-of-N confirmation rule.
    pub confirm_window: u32,
    /// Consecutive missed frames after which a confirmed track is deleted.
    pub delete_after_misses: u32,
    /// White-noise acceleration intensity, m²/s³.
    pub process_noise: f64,
    /// Velocity variance of a freshly spawned track, (m/s)².
    pub initial_velocity_var: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            gate: 3.0,
            confirm_hits: 2,
            confirm_window: 3,
            delete_after_misses: 5,
            process_noise: 2.0,
            initial_velocity_var: 100.0,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate > 0.0) {
            return Err(Error::Validation("tracker.gate must be positive".into()));
        }
        if self.confirm_hits < 1 || self.confirm_window < self.confirm_hits || self.confirm_window > 32 {
            return Err(Error::Validation(
                "tracker requires 1 <= confirm_hits <= confirm_window <= 32".into(),
            ));
        }
        if self.delete_after_misses < 1 {
            return Err(Error::Validation(
                "tracker.delete_after_misses must be >= 1".into(),
            ));
        }
        if !(self.process_noise >= 0.0 && self.initial_velocity_var > 0.0) {
            return Err(Error::Validation("tracker noise parameters out of range".into()));
        }
        Ok(())
    }
}

fn initial_state(d: &Detection, velocity_var: f64) -> KinematicState {
    let mut p = Matrix4::zeros();
    p.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&d.covariance.fixed_view::<2, 2>(0, 0));
    p[(2, 2)] = velocity_var;
    p[(3, 3)] = velocity_var;
    KinematicState {
        mean: Vector4::new(d.position.x_m, d.position.y_m, 0.0, 0.0),
        covariance: p,
    }
}

/// Advances the local sensor track list by one frame.
///
/// Tracks are predicted to `t`; detections are then processed one sensor at
/// a time (ascending sensor id), each batch associated by GNN against the
/// current list, so that a radar cluster and a camera object of the same
/// vehicle update one track. Unassigned detections spawn tentative tracks.
/// Finally M-of-N confirmation, miss counting, coasting and deletion are
/// applied, and deleted tracks are dropped.
pub fn step_local_fusion(
    tl: &TrackList,
    dets: &[Detection],
    t: f64,
    params: &TrackerParams,
) -> Result<TrackList> {
    let mut out = tl.predicted_to(t, params.process_noise);
    let existing: Vec<u64> = out.tracks().iter().map(|t| t.track_id).collect();
    let mut hit_this_frame: Vec<u64> = Vec::new();

    let mut sources: Vec<u32> = dets.iter().map(|d| d.source).collect();
    sources.sort_unstable();
    sources.dedup();

    for source in sources {
        let batch: Vec<&Detection> = dets.iter().filter(|d| d.source == source).collect();
        let batch_owned: Vec<Detection> = batch.iter().map(|d| (*d).clone()).collect();
        let assignment = associate_detections_to_tracks(&out, &batch_owned, params.gate);
        for &(track_id, j, _) in &assignment.pairs {
            let d = batch[j];
            let z = Vector2::new(d.position.x_m, d.position.y_m);
            let r = d.covariance.fixed_view::<2, 2>(0, 0).into_owned();
            let tr = out.get_mut(track_id).expect("assigned track exists");
            *tr = ekf_update(tr, &z, &r)?;
            tr.last_update_t = t;
            hit_this_frame.push(track_id);
        }
        for &j in &assignment.unassigned_detections {
            let id = out.spawn(initial_state(batch[j], params.initial_velocity_var), t);
            hit_this_frame.push(id);
        }
    }

    let window_mask = if params.confirm_window >= 32 {
        u32::MAX
    } else {
        (1u32 << params.confirm_window) - 1
    };
    for tr in out.tracks_mut() {
        let hit = hit_this_frame.contains(&tr.track_id);
        if existing.contains(&tr.track_id) {
            tr.age_frames += 1;
            tr.hit_history = (tr.hit_history << 1) | hit as u32;
            if hit {
                tr.hits += 1;
            }
        }
        match tr.status {
            TrackStatus::Tentative => {
                let recent = (tr.hit_history & window_mask).count_ones();
                if recent >= params.confirm_hits {
                    tr.set_status(TrackStatus::Confirmed);
                    tr.misses_consecutive = 0;
                } else if tr.age_frames >= params.confirm_window {
                    tr.set_status(TrackStatus::Deleted);
                } else if !hit {
                    tr.misses_consecutive += 1;
                }
            }
            TrackStatus::Confirmed | TrackStatus::Coasted => {
                if hit {
                    tr.misses_consecutive = 0;
                    tr.set_status(TrackStatus::Confirmed);
                } else {
                    tr.misses_consecutive += 1;
                    if tr.misses_consecutive >= params.delete_after_misses {
                        tr.set_status(TrackStatus::Deleted);
                    } else {
                        tr.set_status(TrackStatus::Coasted);
                    }
                }
            }
            TrackStatus::Deleted => {}
        }
    }
    out.purge_deleted();
    Ok(out)
}
