//! Scripted ground truth: actors on waypoint polylines in the scene frame,
//! the scenario document format, and the built-in unprotected left turn.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2};
use serde::Deserialize;

use crate::association::AssociationParams;
use crate::error::{Error, Result};
use crate::geo::{build_scene_frame, Ellipsoid, GeodeticPosition, SceneFrame, ScenePosition};
use crate::sensors::{wrap_angle, SensorKind, SensorModel};
use crate::tracker::TrackerParams;
use crate::v2v::{ChannelModel, V2vParams};

const BENCHMARK_DOCUMENT: &str = include_str!("../scenarios/unprotected_left.json");

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub heading_rad: f64,
    /// Nominal speed, informational; velocity is taken from segment slopes.
    pub speed_mps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorSpec {
    pub actor_id: u32,
    pub length_m: f64,
    pub width_m: f64,
    pub v2v_equipped: bool,
    pub waypoints: Vec<Waypoint>,
}

impl ActorSpec {
    fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Validation(format!("actor {}: {what}", self.actor_id)));
        if !(self.length_m > 0.0 && self.width_m > 0.0) {
            return bad("length_m and width_m must be positive".into());
        }
        if self.waypoints.is_empty() {
            return bad("needs at least one waypoint".into());
        }
        for w in &self.waypoints {
            if ![w.t_s, w.x_m, w.y_m, w.heading_rad, w.speed_mps]
                .iter()
                .all(|v| v.is_finite())
            {
                return bad("waypoint values must be finite".into());
            }
        }
        for pair in self.waypoints.windows(2) {
            if !(pair[1].t_s > pair[0].t_s) {
                return bad(format!(
                    "waypoint times must be strictly increasing ({} then {})",
                    pair[0].t_s, pair[1].t_s
                ));
            }
        }
        Ok(())
    }

    /// Pose at time `t`. Outside the waypoint span the actor holds its
    /// first / last pose at rest.
    pub fn state_at(&self, t: f64) -> ActorState {
        let w = &self.waypoints;
        let at = |p: &Waypoint, velocity: Vector2<f64>| ActorState {
            actor_id: self.actor_id,
            position: ScenePosition::planar(p.x_m, p.y_m),
            velocity,
            heading_rad: p.heading_rad,
            length_m: self.length_m,
            width_m: self.width_m,
            v2v_equipped: self.v2v_equipped,
        };
        let slope = |a: &Waypoint, b: &Waypoint| {
            let dt = b.t_s - a.t_s;
            Vector2::new((b.x_m - a.x_m) / dt, (b.y_m - a.y_m) / dt)
        };
        let last = w.len() - 1;
        if w.len() == 1 || t < w[0].t_s || t > w[last].t_s {
            let p = if t < w[0].t_s { &w[0] } else { &w[last] };
            return at(p, Vector2::zeros());
        }
        // segment k covers [w[k].t, w[k+1].t)
        let k = w.partition_point(|p| p.t_s <= t).saturating_sub(1).min(last - 1);
        let (a, b) = (&w[k], &w[k + 1]);
        if t == a.t_s {
            return at(a, slope(a, b));
        }
        if t == b.t_s {
            return at(b, slope(a, b));
        }
        let f = (t - a.t_s) / (b.t_s - a.t_s);
        ActorState {
            actor_id: self.actor_id,
            position: ScenePosition::planar(a.x_m + f * (b.x_m - a.x_m), a.y_m + f * (b.y_m - a.y_m)),
            velocity: slope(a, b),
            heading_rad: wrap_angle(a.heading_rad + f * wrap_angle(b.heading_rad - a.heading_rad)),
            length_m: self.length_m,
            width_m: self.width_m,
            v2v_equipped: self.v2v_equipped,
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|p| (p[1].x_m - p[0].x_m).hypot(p[1].y_m - p[0].y_m) / (p[1].t_s - p[0].t_s))
            .fold(0.0, f64::max)
    }
}

/// Ground-truth sample of one actor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorState {
    pub actor_id: u32,
    pub position: ScenePosition,
    pub velocity: Vector2<f64>,
    pub heading_rad: f64,
    pub length_m: f64,
    pub width_m: f64,
    pub v2v_equipped: bool,
}

impl ActorState {
    /// Bounding-box corners, counter-clockwise from front-left.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.heading_rad.sin_cos();
        let (hl, hw) = (0.5 * self.length_m, 0.5 * self.width_m);
        let (x, y) = (self.position.x_m, self.position.y_m);
        let p = |l: f64, w: f64| [x + l * c - w * s, y + l * s + w * c];
        [p(hl, hw), p(-hl, hw), p(-hl, -hw), p(hl, -hw)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_s: f64,
    pub tick_s: f64,
    pub origin: GeodeticPosition,
    pub gamma_rad: f64,
    pub rng_seed: u64,
    pub ego_id: u32,
    pub actors: Vec<ActorSpec>,
    pub radars: Vec<SensorModel>,
    pub cameras: Vec<SensorModel>,
    pub channel: ChannelModel,
    pub v2v: V2vParams,
    pub tracker: TrackerParams,
    pub association: AssociationParams,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tick_s > 0.0) {
            return Err(Error::Validation("tick_s must be positive".into()));
        }
        if !(self.duration_s >= 0.0) {
            return Err(Error::Validation("duration_s must be non-negative".into()));
        }
        let ticks = self.duration_s / self.tick_s;
        if (ticks - ticks.round()).abs() * self.tick_s > 1e-9 {
            return Err(Error::Validation(format!(
                "duration_s {} is not a multiple of tick_s {}",
                self.duration_s, self.tick_s
            )));
        }
        let mut ids: Vec<u32> = self.actors.iter().map(|a| a.actor_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("actor ids must be unique".into()));
        }
        if !ids.contains(&self.ego_id) {
            return Err(Error::Validation(format!(
                "ego_id {} not among actors",
                self.ego_id
            )));
        }
        for a in &self.actors {
            a.validate()?;
        }
        let mut sensor_ids: Vec<u32> = self.sensors().map(|s| s.id).collect();
        sensor_ids.sort_unstable();
        if sensor_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("sensor ids must be unique".into()));
        }
        for s in self.sensors() {
            s.validate()?;
        }
        self.channel.validate()?;
        self.v2v.validate()?;
        self.tracker.validate()?;
        self.association.validate()?;
        Ok(())
    }

    pub fn frame(&self) -> SceneFrame {
        build_scene_frame(self.origin, self.gamma_rad, &Ellipsoid::WGS84)
    }

    /// Number of simulated frames, including `t = 0` and `t = duration`.
    pub fn frame_count(&self) -> usize {
        (self.duration_s / self.tick_s).round() as usize + 1
    }

    pub fn time_at(&self, frame: usize) -> f64 {
        frame as f64 * self.tick_s
    }

    pub fn sensors(&self) -> impl Iterator<Item = &SensorModel> {
        self.radars.iter().chain(self.cameras.iter())
    }

    pub fn actor(&self, id: u32) -> Option<&ActorSpec> {
        self.actors.iter().find(|a| a.actor_id == id)
    }
}

/// All actor states at `t`, in document order.
pub fn ground_truth_at(cfg: &ScenarioConfig, t: f64) -> Result<Vec<ActorState>> {
    if !(t >= 0.0 && t <= cfg.duration_s + 1e-9) {
        return Err(Error::TimeOutOfRange {
            t,
            duration: cfg.duration_s,
        });
    }
    Ok(cfg.actors.iter().map(|a| a.state_at(t)).collect())
}

// ---------------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginDoc {
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActorDoc {
    id: u32,
    length_m: f64,
    width_m: f64,
    #[serde(default = "yes")]
    v2v: bool,
    waypoints: Vec<[f64; 5]>,
}

fn yes() -> bool {
    true
}

/// Sensor entry; omitted fields take the defaults for the sensor kind.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorDoc {
    id: Option<u32>,
    fov_deg: Option<f64>,
    max_range_m: Option<f64>,
    noise_std_m: Option<f64>,
    detection_prob: Option<f64>,
    false_alarm_rate: Option<f64>,
    returns_per_vehicle: Option<u32>,
    classification_accuracy: Option<f64>,
    measurement_std_m: Option<f64>,
    cluster_eps_m: Option<f64>,
    cluster_min_pts: Option<usize>,
    visibility_threshold: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AssociationDoc {
    epsilon: Option<f64>,
    c: Option<[[f64; 3]; 3]>,
    priority_coast_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    duration_s: f64,
    tick_s: f64,
    origin: OriginDoc,
    #[serde(default)]
    gamma_deg: f64,
    #[serde(default)]
    rng_seed: u64,
    ego_id: u32,
    actors: Vec<ActorDoc>,
    radar: Option<OneOrMany<SensorDoc>>,
    camera: Option<OneOrMany<SensorDoc>>,
    #[serde(default)]
    channel: ChannelModel,
    #[serde(default)]
    v2v: V2vParams,
    #[serde(default)]
    tracker: TrackerParams,
    #[serde(default)]
    association: AssociationDoc,
}

fn sensor_from_doc(d: SensorDoc, kind: SensorKind, default_id: u32) -> SensorModel {
    let id = d.id.unwrap_or(default_id);
    let mut s = match kind {
        SensorKind::Radar => SensorModel::default_radar(id),
        SensorKind::Camera => SensorModel::default_camera(id),
    };
    if let Some(v) = d.fov_deg {
        s.fov_rad = v.to_radians();
    }
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = d.$f { s.$f = v; } )* };
    }
    take!(
        max_range_m,
        noise_std_m,
        detection_prob,
        false_alarm_rate,
        returns_per_vehicle,
        classification_accuracy,
        measurement_std_m,
        cluster_eps_m,
        cluster_min_pts,
        visibility_threshold
    );
    s
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let origin = GeodeticPosition::from_degrees(doc.origin.lat_deg, doc.origin.lon_deg, doc.origin.alt_m)?;
    let actors = doc
        .actors
        .into_iter()
        .map(|a| ActorSpec {
            actor_id: a.id,
            length_m: a.length_m,
            width_m: a.width_m,
            v2v_equipped: a.v2v,
            waypoints: a
                .waypoints
                .iter()
                .map(|w| Waypoint {
                    t_s: w[0],
                    x_m: w[1],
                    y_m: w[2],
                    heading_rad: wrap_angle(w[3].to_radians()),
                    speed_mps: w[4],
                })
                .collect(),
        })
        .collect();

    // radars are numbered from 1, cameras from 101 unless ids are given
    let radars: Vec<SensorModel> = doc
        .radar
        .map(OneOrMany::into_vec)
        .unwrap_or_else(|| vec![SensorDoc::default()])
        .into_iter()
        .enumerate()
        .map(|(k, d)| sensor_from_doc(d, SensorKind::Radar, 1 + k as u32))
        .collect();
    let cameras: Vec<SensorModel> = doc
        .camera
        .map(OneOrMany::into_vec)
        .unwrap_or_else(|| vec![SensorDoc::default()])
        .into_iter()
        .enumerate()
        .map(|(k, d)| sensor_from_doc(d, SensorKind::Camera, 101 + k as u32))
        .collect();

    let radar_var = radars
        .first()
        .map(|r| r.measurement_std_m * r.measurement_std_m)
        .unwrap_or(0.0);
    let mut association = AssociationParams::with_default_c(radar_var, doc.v2v.measurement_var());
    if let Some(e) = doc.association.epsilon {
        association.epsilon = e;
    }
    if let Some(c) = doc.association.c {
        association.c = Matrix3::from_fn(|i, j| c[i][j]);
    }
    if let Some(s) = doc.association.priority_coast_s {
        association.priority_coast_s = s;
    }

    let cfg = ScenarioConfig {
        name: doc.name,
        duration_s: doc.duration_s,
        tick_s: doc.tick_s,
        origin,
        gamma_rad: doc.gamma_deg * PI / 180.0,
        rng_seed: doc.rng_seed,
        ego_id: doc.ego_id,
        actors,
        radars,
        cameras,
        channel: doc.channel,
        v2v: doc.v2v,
        tracker: doc.tracker,
        association,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Four-way intersection with an unprotected left turn.
///
/// Ego (id 1) approaches northbound, stops at the stop line and turns left
/// onto the westbound exit. A southbound through vehicle (id 2) is hidden
/// from ego by a truck (id 3) waiting in the opposing left-turn pocket.
/// Three background vehicles (ids 4 to 6) share the intersection.
pub fn build_unprotected_left_scenario() -> ScenarioConfig {
    load_scenario(BENCHMARK_DOCUMENT).expect("shipped benchmark document is valid")
}

pub const BENCHMARK_EGO_ID: u32 = 1;
pub const BENCHMARK_THROUGH_ID: u32 = 2;
pub const BENCHMARK_TRUCK_ID: u32 = 3;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::line_of_sight_visible;

    fn spec(waypoints: Vec<Waypoint>) -> ActorSpec {
        ActorSpec {
            actor_id: 9,
            length_m: 4.0,
            width_m: 2.0,
            v2v_equipped: true,
            waypoints,
        }
    }

    fn wp(t: f64, x: f64, y: f64, h: f64) -> Waypoint {
        Waypoint {
            t_s: t,
            x_m: x,
            y_m: y,
            heading_rad: h,
            speed_mps: 0.0,
        }
    }

    #[test]
    fn interpolation_endpoint_and_midpoint() {
        let a = spec(vec![wp(0.0, 0.0, 0.0, 0.0), wp(1.0, 10.0, 0.0, 0.0)]);
        let s = a.state_at(0.5);
        assert_eq!(s.position.x_m, 5.0);
        assert_eq!(s.velocity, Vector2::new(10.0, 0.0));
        assert_eq!(a.state_at(1.0).position.x_m, 10.0);
        assert_eq!(a.state_at(0.0).position.x_m, 0.0);
    }

    #[test]
    fn heading_takes_the_short_way_round() {
        let a = spec(vec![
            wp(0.0, 0.0, 0.0, 170f64.to_radians()),
            wp(1.0, 0.0, 0.0, -170f64.to_radians()),
        ]);
        let h = a.state_at(0.5).heading_rad;
        assert!((h.abs() - PI).abs() < 1e-12, "{h}");
    }

    #[test]
    fn corners_follow_heading() {
        let mut s = spec(vec![wp(0.0, 0.0, 0.0, PI / 2.0)]).state_at(0.0);
        s.position = ScenePosition::planar(1.0, 1.0);
        let c = s.corners();
        assert!((c[0][0] - 0.0).abs() < 1e-12 && (c[0][1] - 3.0).abs() < 1e-12);
        assert!((c[2][0] - 2.0).abs() < 1e-12 && (c[2][1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn benchmark_loads() {
        let cfg = build_unprotected_left_scenario();
        assert_eq!(cfg.actors.len(), 6);
        assert_eq!(cfg.frame_count(), 301);
        assert!(cfg
            .actors
            .iter()
            .filter(|a| a.actor_id != cfg.ego_id)
            .all(|a| a.v2v_equipped));
    }

    #[test]
    fn benchmark_has_long_occlusion() {
        let cfg = build_unprotected_left_scenario();
        let mut longest = 0usize;
        let mut run = 0usize;
        for k in 0..cfg.frame_count() {
            let truth = ground_truth_at(&cfg, cfg.time_at(k)).unwrap();
            let ego = truth.iter().find(|a| a.actor_id == BENCHMARK_EGO_ID).unwrap();
            let target = truth.iter().find(|a| a.actor_id == BENCHMARK_THROUGH_ID).unwrap();
            let others: Vec<ActorState> = truth
                .iter()
                .filter(|a| a.actor_id != BENCHMARK_EGO_ID && a.actor_id != BENCHMARK_THROUGH_ID)
                .cloned()
                .collect();
            if line_of_sight_visible(ego, target, &others) {
                run = 0;
            } else {
                run += 1;
                longest = longest.max(run);
            }
        }
        assert!(
            longest as f64 * cfg.tick_s >= 2.0,
            "longest blocked run {longest} frames"
        );
    }

    #[test]
    fn out_of_range_time_rejected() {
        let cfg = build_unprotected_left_scenario();
        assert!(ground_truth_at(&cfg, -0.1).is_err());
        assert!(ground_truth_at(&cfg, cfg.duration_s + 0.1).is_err());
    }

    #[test]
    fn bad_documents_rejected() {
        let base = r#"{"name":"x","duration_s":1.0,"tick_s":0.1,
            "origin":{"lat_deg":0,"lon_deg":0,"alt_m":0},"ego_id":1,"actors":ACTORS}"#;
        let one = r#"[{"id":1,"length_m":4,"width_m":2,"waypoints":[[0,0,0,0,0],[1,1,0,0,1]]}]"#;
        assert!(load_scenario(&base.replace("ACTORS", one)).is_ok());
        assert!(matches!(
            load_scenario(&base.replace("ACTORS", "[]")),
            Err(Error::Validation(_))
        ));
        let backwards = r#"[{"id":1,"length_m":4,"width_m":2,"waypoints":[[1,0,0,0,0],[1,1,0,0,1]]}]"#;
        assert!(matches!(
            load_scenario(&base.replace("ACTORS", backwards)),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            load_scenario("{\n  \"name\": 3\n}"),
            Err(Error::Parse { line: 2, .. })
        ));
        let odd = base
            .replace("ACTORS", one)
            .replace("\"duration_s\":1.0", "\"duration_s\":1.05");
        assert!(matches!(load_scenario(&odd), Err(Error::Validation(_))));
    }
}
