//! Sensor-to-V2V track association and the validated priority track list.
//!
//! Every local sensor track is compared with every V2V track by the
//! Mahalanobis distance of their positions under a constant covariance `C`;
//! pairs within `epsilon` are associated. A V2V source (temporary id) is
//! admitted to the priority list only after it has been paired with a
//! sensor track at least once, which keeps forged messages out.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, Matrix3, Matrix4, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::tracker::{ekf_predict, KinematicState, TrackKey, TrackKind, TrackList, TrackStatus};

/// Chi-square 95% quantile for 3 degrees of freedom.
pub const CHI2_95_3DOF: f64 = 7.81;

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationParams {
    pub epsilon: f64,
    /// Measurement-error covariance, m².
    pub c: Matrix3<f64>,
    /// How long a priority track may run on V2V data alone.
    pub priority_coast_s: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self::with_default_c(0.25, 0.09)
    }
}

impl AssociationParams {
    /// `C = diag(radar var + gps var)` on every axis.
    pub fn with_default_c(radar_var: f64, gps_var: f64) -> Self {
        Self {
            epsilon: CHI2_95_3DOF.sqrt(),
            c: Matrix3::identity() * (radar_var + gps_var),
            priority_coast_s: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation("association.epsilon must be positive".into()));
        }
        if !(self.priority_coast_s >= 0.0) {
            return Err(Error::Validation(
                "association.priority_coast_s must be non-negative".into(),
            ));
        }
        spd_factor(&self.c)?;
        Ok(())
    }
}

fn spd_factor(c: &Matrix3<f64>) -> Result<Cholesky<f64, nalgebra::U3>> {
    let asym = (c - c.transpose()).abs().max();
    if !(asym <= 1e-9 * c.abs().max().max(1.0)) {
        return Err(Error::NotPositiveDefinite("association covariance C"));
    }
    Cholesky::new(*c).ok_or(Error::NotPositiveDefinite("association covariance C"))
}

fn distance_with(chol: &Cholesky<f64, nalgebra::U3>, d: &Vector3<f64>) -> f64 {
    let y = chol
        .l()
        .solve_lower_triangular(d)
        .expect("Cholesky factor is non-singular");
    y.norm_squared().sqrt()
}

/// `sqrt((z_v - z_s)ᵀ C⁻¹ (z_v - z_s))`.
pub fn mahalanobis_distance(z_v: &Vector3<f64>, z_s: &Vector3<f64>, c: &Matrix3<f64>) -> Result<f64> {
    let chol = spd_factor(c)?;
    Ok(distance_with(&chol, &(z_v - z_s)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssociationPair {
    pub sensor_track_id: u64,
    pub v2v_track_id: u64,
    pub distance: f64,
}

fn lift(p: Vector2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 0.0)
}

/// Every `(s, v)` with `D_M <= epsilon`, sensor-major then V2V order.
/// Many-to-many.
pub fn associate_tracks(s: &TrackList, v: &TrackList, p: &AssociationParams) -> Result<Vec<AssociationPair>> {
    let chol = spd_factor(&p.c)?;
    let mut out = Vec::new();
    for st in s.tracks() {
        for vt in v.tracks() {
            let d = distance_with(&chol, &(lift(vt.position()) - lift(st.position())));
            if d <= p.epsilon {
                out.push(AssociationPair {
                    sensor_track_id: st.track_id,
                    v2v_track_id: vt.track_id,
                    distance: d,
                });
            }
        }
    }
    Ok(out)
}

/// Greedy one-to-one reduction: ascending distance, ties broken by lower
/// sensor id then lower V2V id.
pub fn resolve_one_to_one(pairs: &[AssociationPair]) -> Vec<AssociationPair> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.sensor_track_id.cmp(&b.sensor_track_id))
            .then(a.v2v_track_id.cmp(&b.v2v_track_id))
    });
    let mut used_s = BTreeSet::new();
    let mut used_v = BTreeSet::new();
    sorted
        .into_iter()
        .filter(|p| {
            if used_s.contains(&p.sensor_track_id) || used_v.contains(&p.v2v_track_id) {
                return false;
            }
            used_s.insert(p.sensor_track_id);
            used_v.insert(p.v2v_track_id);
            true
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Priority list
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Validation {
    Unvalidated,
    Validated { at: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    track_id: u64,
    last_corroborated_t: f64,
}

/// One admission of a temporary id into the priority list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admission {
    pub temp_id: u32,
    pub track_id: u64,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorityTrackList {
    tracks: TrackList,
    registry: BTreeMap<u32, Validation>,
    entries: BTreeMap<u32, Entry>,
    admissions: Vec<Admission>,
}

impl Default for PriorityTrackList {
    fn default() -> Self {
        Self::new()
    }
}

impl PriorityTrackList {
    pub fn new() -> Self {
        Self {
            tracks: TrackList::new(TrackKind::Priority),
            registry: BTreeMap::new(),
            entries: BTreeMap::new(),
            admissions: Vec::new(),
        }
    }

    pub fn tracks(&self) -> &TrackList {
        &self.tracks
    }

    pub fn validation(&self, temp_id: u32) -> Option<Validation> {
        self.registry.get(&temp_id).copied()
    }

    pub fn registry(&self) -> &BTreeMap<u32, Validation> {
        &self.registry
    }

    pub fn is_validated(&self, temp_id: u32) -> bool {
        matches!(self.registry.get(&temp_id), Some(Validation::Validated { .. }))
    }

    /// Every admission so far, in order.
    pub fn admissions(&self) -> &[Admission] {
        &self.admissions
    }

    /// Temporary ids that currently own a priority track.
    pub fn live_temp_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }
}

/// Information-form combination of two Gaussian estimates. Falls back to
/// `b` if either covariance cannot be inverted.
pub fn fuse_states(a: &KinematicState, b: &KinematicState) -> KinematicState {
    let inv = |m: &Matrix4<f64>| Cholesky::new(*m).map(|c| c.inverse());
    let (Some(ia), Some(ib)) = (inv(&a.covariance), inv(&b.covariance)) else {
        return b.clone();
    };
    let Some(p) = inv(&(ia + ib)) else {
        return b.clone();
    };
    let p = 0.5 * (p + p.transpose());
    let mean: Vector4<f64> = p * (ia * a.mean + ib * b.mean);
    KinematicState { mean, covariance: p }
}

/// Advances the priority list to time `t`.
///
/// `v2v_tl` must already be predicted to `t`. `mapping` is the one-to-one
/// sensor/V2V pairing of this tick.
///
/// - A temporary id is validated the first time it appears in `mapping`;
///   validation is permanent.
/// - Each validated id with a live V2V track has a priority track, whose
///   state is the fusion of the paired sensor track and the V2V track, or
///   the V2V track alone when there is no sensor pair. Ids that lost their
///   V2V track coast on prediction.
/// - A priority track not corroborated by a sensor track for longer than
///   `priority_coast_s` is deleted; its id stays validated and is
///   re-admitted on the next tick it still has a V2V track.
pub fn update_priority_list(
    pl: &PriorityTrackList,
    sensor_tl: &TrackList,
    v2v_tl: &TrackList,
    mapping: &[AssociationPair],
    t: f64,
    params: &AssociationParams,
    process_noise: f64,
) -> PriorityTrackList {
    let mut out = pl.clone();

    let mut v2v_by_temp = BTreeMap::new();
    for vt in v2v_tl.tracks() {
        if let Some(temp) = vt.source_temp_id {
            out.registry.entry(temp).or_insert(Validation::Unvalidated);
            v2v_by_temp.insert(temp, vt);
        }
    }

    let mut corroborated: BTreeMap<u32, u64> = BTreeMap::new();
    for pair in mapping {
        let Some(temp) = v2v_tl.get(pair.v2v_track_id).and_then(|v| v.source_temp_id) else {
            continue;
        };
        let slot = out.registry.entry(temp).or_insert(Validation::Unvalidated);
        if *slot == Validation::Unvalidated {
            *slot = Validation::Validated { at: t };
        }
        corroborated.insert(temp, pair.sensor_track_id);
    }

    for (&temp, vt) in &v2v_by_temp {
        if !out.is_validated(temp) {
            continue;
        }
        let sensor = corroborated.get(&temp).and_then(|&id| sensor_tl.get(id));
        let state = match sensor {
            Some(st) => fuse_states(&st.state, &vt.state),
            None => vt.state.clone(),
        };
        let status = if sensor.is_some() {
            TrackStatus::Confirmed
        } else {
            TrackStatus::Coasted
        };
        match out.entries.get_mut(&temp) {
            Some(entry) => {
                if sensor.is_some() {
                    entry.last_corroborated_t = t;
                }
                let tr = out.tracks.get_mut(entry.track_id).expect("entry owns a track");
                tr.state = state;
                tr.state_t = t;
                tr.last_update_t = t;
                tr.hits += 1;
                tr.misses_consecutive = if sensor.is_some() {
                    0
                } else {
                    tr.misses_consecutive + 1
                };
                tr.status = status;
            }
            None => {
                let id = out.tracks.spawn(state, t);
                let tr = out.tracks.get_mut(id).expect("just spawned");
                tr.source_temp_id = Some(temp);
                tr.status = status;
                out.entries.insert(
                    temp,
                    Entry {
                        track_id: id,
                        last_corroborated_t: t,
                    },
                );
                out.admissions.push(Admission {
                    temp_id: temp,
                    track_id: id,
                    t,
                });
            }
        }
    }

    // ids whose V2V track has gone coast on prediction
    for (&temp, entry) in &out.entries {
        if v2v_by_temp.contains_key(&temp) {
            continue;
        }
        let tr = out.tracks.get_mut(entry.track_id).expect("entry owns a track");
        if t > tr.state_t {
            let next = ekf_predict(tr, t - tr.state_t, process_noise);
            *tr = next;
        }
        tr.status = TrackStatus::Coasted;
        tr.misses_consecutive += 1;
    }

    let expired: Vec<(u32, u64)> = out
        .entries
        .iter()
        .filter(|(_, e)| t - e.last_corroborated_t > params.priority_coast_s + 1e-9)
        .map(|(&temp, e)| (temp, e.track_id))
        .collect();
    for (temp, id) in expired {
        out.entries.remove(&temp);
        out.tracks.retain(|tr| tr.track_id != id);
    }
    out
}

/// Output of the cooperative system at one frame: every priority track
/// plus the established local tracks that are not already represented by
/// one. A local track is represented when any association pair links it to
/// a V2V track whose source currently owns a priority track. Without V2V
/// input this is exactly the local list.
pub fn priority_system_view(
    pl: &PriorityTrackList,
    local_established: &TrackList,
    v2v_tl: &TrackList,
    pairs: &[AssociationPair],
) -> Vec<(TrackKey, Vector2<f64>)> {
    let live: BTreeSet<u32> = pl.live_temp_ids().collect();
    let suppressed: BTreeSet<u64> = pairs
        .iter()
        .filter(|p| {
            v2v_tl
                .get(p.v2v_track_id)
                .and_then(|v| v.source_temp_id)
                .is_some_and(|temp| live.contains(&temp))
        })
        .map(|p| p.sensor_track_id)
        .collect();
    pl.tracks()
        .tracks()
        .iter()
        .map(|tr| (tr.key(), tr.position()))
        .chain(
            local_established
                .tracks()
                .iter()
                .filter(|tr| !suppressed.contains(&tr.track_id))
                .map(|tr| (tr.key(), tr.position())),
        )
        .collect()
}
