//! Basic Safety Message generation, transport and ingestion.
//!
//! Ground-truth scene positions are perturbed with GPS noise, taken back
//! through the inverse of the geodetic pipeline, quantized to the wire
//! format and later decoded into scene-frame V2V tracks.
//!
//! Heading on the wire is the geographic course (clockwise from true north)
//! and speed is horizontal speed. The scene plane is not, in general, the
//! local horizontal plane, so decoding recovers the in-plane velocity by
//! re-adding the vertical component that keeps the vehicle on the scene
//! ground plane (`z = 0`).

mod channel;
mod codec;

pub use channel::{Channel, ChannelModel, SpoofStream};
pub use codec::{
    decode_bsm, encode_bsm, read_capture, write_capture_record, BsmMessage, CodecError, BSM_RECORD_LEN,
};

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix4, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    geodetic_to_scene, prime_vertical_radius, EcefPosition, Ellipsoid, GeodeticPosition, SceneFrame,
    ScenePosition,
};
use crate::scenario::ActorState;
use crate::tracker::{ekf_predict, ekf_update, KinematicState, TrackKind, TrackList, TrackStatus};

// ---------------------------------------------------------------------------
// Geodetic inverse
// ---------------------------------------------------------------------------

/// ECEF to geodetic by fixed-point iteration on
/// `tan(lat) = (Z + e² N(lat) sin(lat)) / p`.
pub fn ecef_to_geodetic(p: &EcefPosition, e: &Ellipsoid) -> GeodeticPosition {
    let e2 = e.eccentricity_sq();
    let rho = p.x_m.hypot(p.y_m);
    let lon = p.y_m.atan2(p.x_m);
    let mut lat = p.z_m.atan2(rho * (1.0 - e2));
    for _ in 0..30 {
        let n = prime_vertical_radius(lat, e);
        let next = (p.z_m + e2 * n * lat.sin()).atan2(rho);
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    let (s, c) = lat.sin_cos();
    let h = rho * c + p.z_m * s - e.a() * (1.0 - e2 * s * s).sqrt();
    GeodeticPosition::new(lat, lon, h).expect("finite ECEF input")
}

pub fn scene_to_geodetic(p: &ScenePosition, frame: &SceneFrame) -> GeodeticPosition {
    ecef_to_geodetic(&frame.scene_to_ecef(p), frame.ellipsoid())
}

/// Unit east, north and up vectors (ECEF components) at a geodetic point.
pub fn enu_basis(g: &GeodeticPosition) -> [Vector3<f64>; 3] {
    let (sl, cl) = g.latitude_rad().sin_cos();
    let (so, co) = g.longitude_rad().sin_cos();
    [
        Vector3::new(-so, co, 0.0),
        Vector3::new(-sl * co, -sl * so, cl),
        Vector3::new(cl * co, cl * so, sl),
    ]
}

// ---------------------------------------------------------------------------
// Message construction and interpretation
// ---------------------------------------------------------------------------

fn quantize_i32(v: f64) -> i32 {
    v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

/// Builds one message for a vehicle at scene position `pos` moving with
/// in-plane velocity `vel`.
pub fn make_bsm(
    temp_id: u32,
    msg_count: u8,
    t: f64,
    pos: &ScenePosition,
    vel: &Vector2<f64>,
    frame: &SceneFrame,
) -> BsmMessage {
    let g = scene_to_geodetic(pos, frame);
    let [east, north, _] = enu_basis(&g);
    let v_ecef = frame.rotate_to_ecef(&Vector3::new(vel.x, vel.y, 0.0));
    let (ve, vn) = (v_ecef.dot(&east), v_ecef.dot(&north));
    let speed = ve.hypot(vn);
    let heading_deg = if speed > 0.0 {
        ve.atan2(vn).to_degrees().rem_euclid(360.0)
    } else {
        0.0
    };
    BsmMessage {
        temp_id,
        msg_count: msg_count & 0x7f,
        t_ms: (t * 1000.0).round().clamp(0.0, u32::MAX as f64) as u32,
        lat_e7: quantize_i32(g.latitude_rad().to_degrees() * 1e7),
        lon_e7: quantize_i32(g.longitude_rad().to_degrees() * 1e7),
        elev_cm: quantize_i32(g.altitude_m() * 100.0),
        speed_cmps: (speed * 100.0).round().clamp(0.0, u16::MAX as f64) as u16,
        heading_cdeg: ((heading_deg * 100.0).round() as u32 % 36_000) as u16,
    }
}

pub fn bsm_geodetic(m: &BsmMessage) -> GeodeticPosition {
    GeodeticPosition::from_degrees(m.latitude_deg(), m.longitude_deg(), m.elevation_m())
        .expect("validated message lies in range")
}

pub fn bsm_scene_position(m: &BsmMessage, frame: &SceneFrame) -> ScenePosition {
    geodetic_to_scene(&bsm_geodetic(m), frame, frame.ellipsoid())
}

/// In-plane scene velocity reconstructed from speed and heading.
pub fn bsm_scene_velocity(m: &BsmMessage, frame: &SceneFrame) -> Vector2<f64> {
    let [east, north, up] = enu_basis(&bsm_geodetic(m));
    let h = m.heading_deg().to_radians();
    let horizontal = (east * h.sin() + north * h.cos()) * m.speed_mps();
    let vh = frame.rotate_to_scene(&horizontal);
    let vu = frame.rotate_to_scene(&up);
    let w = if vu.z.abs() > 1e-6 { -vh.z / vu.z } else { 0.0 };
    let v = vh + vu * w;
    Vector2::new(v.x, v.y)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Per-run BSM source for every V2V-equipped actor: stable temporary ids
/// and wrapping message counters.
#[derive(Clone, Debug)]
pub struct BsmGenerator {
    temp_ids: BTreeMap<u32, u32>,
    counts: BTreeMap<u32, u8>,
    gps_noise_std_m: f64,
}

impl BsmGenerator {
    /// Draws a distinct temporary id for each equipped actor, avoiding
    /// `reserved` (ids owned by injected streams).
    pub fn new<R: Rng + ?Sized>(
        equipped_actor_ids: &[u32],
        reserved: &[u32],
        gps_noise_std_m: f64,
        rng: &mut R,
    ) -> Self {
        let mut used: BTreeSet<u32> = reserved.iter().copied().collect();
        let mut temp_ids = BTreeMap::new();
        for &a in equipped_actor_ids {
            let id = loop {
                let candidate: u32 = rng.random();
                if used.insert(candidate) {
                    break candidate;
                }
            };
            temp_ids.insert(a, id);
        }
        Self {
            temp_ids,
            counts: BTreeMap::new(),
            gps_noise_std_m,
        }
    }

    pub fn temp_id(&self, actor_id: u32) -> Option<u32> {
        self.temp_ids.get(&actor_id).copied()
    }

    pub fn temp_ids(&self) -> &BTreeMap<u32, u32> {
        &self.temp_ids
    }

    /// One message per equipped actor, in actor order.
    pub fn generate<R: Rng + ?Sized>(
        &mut self,
        actors: &[ActorState],
        frame: &SceneFrame,
        t: f64,
        rng: &mut R,
    ) -> Vec<BsmMessage> {
        let noise = Normal::new(0.0, self.gps_noise_std_m).expect("non-negative std");
        let mut out = Vec::new();
        for a in actors.iter().filter(|a| a.v2v_equipped) {
            let Some(&temp_id) = self.temp_ids.get(&a.actor_id) else {
                continue;
            };
            let count = self.counts.entry(a.actor_id).or_insert(0);
            let pos = ScenePosition::planar(
                a.position.x_m + noise.sample(rng),
                a.position.y_m + noise.sample(rng),
            );
            out.push(make_bsm(temp_id, *count, t, &pos, &a.velocity, frame));
            *count = (*count + 1) % 128;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// V2V tracks
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct V2vParams {
    /// GPS position noise std, used both to perturb generated messages and
    /// as the receiver's measurement std.
    pub gps_noise_std_m: f64,
    /// White-noise acceleration intensity for V2V track filters.
    pub process_noise: f64,
    /// Velocity variance assigned when a track is seeded from speed/heading.
    pub initial_velocity_var: f64,
    /// A V2V track with no message for longer than this is dropped.
    pub timeout_s: f64,
}

impl Default for V2vParams {
    fn default() -> Self {
        Self {
            gps_noise_std_m: 0.3,
            process_noise: 2.0,
            initial_velocity_var: 1.0,
            timeout_s: 1.0,
        }
    }
}

impl V2vParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gps_noise_std_m >= 0.0
            && self.process_noise >= 0.0
            && self.initial_velocity_var > 0.0
            && self.timeout_s > 0.0)
        {
            return Err(Error::Validation("v2v parameters out of range".into()));
        }
        Ok(())
    }

    /// Per-axis measurement variance; never below the ~1 cm wire
    /// quantization.
    pub fn measurement_var(&self) -> f64 {
        (self.gps_noise_std_m * self.gps_noise_std_m).max(1e-4)
    }
}

/// Folds one received message into the V2V track list: the track carrying
/// the same temporary id is predicted to the message time and updated,
/// otherwise a new confirmed track is seeded with the reported position,
/// speed and heading. Messages older than the track state are ignored.
pub fn bsm_to_v2v_track(
    m: &BsmMessage,
    frame: &SceneFrame,
    existing: &TrackList,
    params: &V2vParams,
) -> Result<TrackList> {
    debug_assert_eq!(existing.kind(), TrackKind::V2v);
    let mut out = existing.clone();
    let pos = bsm_scene_position(m, frame);
    let z = Vector2::new(pos.x_m, pos.y_m);
    let r_var = params.measurement_var();
    let t = m.t_s();

    if let Some(tr) = out
        .tracks_mut()
        .iter_mut()
        .find(|tr| tr.source_temp_id == Some(m.temp_id))
    {
        if t < tr.state_t {
            return Ok(out);
        }
        let mut next = if t > tr.state_t {
            ekf_predict(tr, t - tr.state_t, params.process_noise)
        } else {
            tr.clone()
        };
        next = ekf_update(&next, &z, &(nalgebra::Matrix2::identity() * r_var))?;
        next.last_update_t = t;
        next.hits += 1;
        next.misses_consecutive = 0;
        next.status = TrackStatus::Confirmed;
        *tr = next;
        return Ok(out);
    }

    let v = bsm_scene_velocity(m, frame);
    let state = KinematicState {
        mean: Vector4::new(z.x, z.y, v.x, v.y),
        covariance: Matrix4::from_diagonal(&Vector4::new(
            r_var,
            r_var,
            params.initial_velocity_var,
            params.initial_velocity_var,
        )),
    };
    let id = out.spawn(state, t);
    let tr = out.get_mut(id).expect("just spawned");
    tr.source_temp_id = Some(m.temp_id);
    tr.status = TrackStatus::Confirmed;
    Ok(out)
}

/// Drops V2V tracks that have not heard from their source for longer than
/// the timeout.
pub fn expire_v2v_tracks(tl: &mut TrackList, t: f64, params: &V2vParams) {
    tl.retain(|tr| t - tr.last_update_t <= params.timeout_s + 1e-9);
}
