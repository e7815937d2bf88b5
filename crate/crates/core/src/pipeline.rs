//! The simulation loop.
//!
//! Per frame: ground truth, sensor detections, local fusion, BSM
//! generation, channel, V2V tracks, sensor/V2V association, priority list
//! update, snapshots for scoring.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::association::{
    associate_tracks, priority_system_view, resolve_one_to_one, update_priority_list, PriorityTrackList,
    Validation,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, Estimate, GospaParams, RunReport, Truth};
use crate::scenario::{ground_truth_at, ActorState, ScenarioConfig};
use crate::sensors::{cluster_radar, simulate_camera, simulate_radar, Detection};
use crate::tracker::{step_local_fusion, Track, TrackKind, TrackList};
use crate::v2v::{bsm_to_v2v_track, expire_v2v_tracks, write_capture_record, BsmGenerator, Channel};

const SENSOR_STREAM: u64 = 1;
const GPS_STREAM: u64 = 2;
const CHANNEL_STREAM: u64 = 3;
const TEMP_ID_STREAM: u64 = 4;

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PipelineOptions {
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    pub disable_v2v: bool,
    pub disable_local: bool,
    pub gospa: GospaParams,
    /// Defaults to `c^p / 2`.
    pub switch_penalty: Option<f64>,
}

/// Everything recorded about one frame.
#[derive(Clone, Debug)]
pub struct FrameRecord {
    pub t: f64,
    pub truth: Vec<ActorState>,
    /// Established (confirmed or coasting) local tracks.
    pub local: Vec<Track>,
    pub v2v: Vec<Track>,
    /// Priority list proper.
    pub priority_list: Vec<Track>,
    /// What the cooperative system reports: priority tracks plus the local
    /// tracks they do not already cover.
    pub priority_view: Vec<Estimate>,
    pub detections: usize,
}

impl FrameRecord {
    pub fn truth_points(&self, ego_id: u32) -> Vec<Truth> {
        self.truth
            .iter()
            .filter(|a| a.actor_id != ego_id)
            .map(|a| (a.actor_id, Vector2::new(a.position.x_m, a.position.y_m)))
            .collect()
    }

    pub fn to_json(&self, frame: usize, ego_id: u32) -> Value {
        let track = |tr: &Track| {
            json!({
                "id": tr.track_id,
                "x": tr.position().x,
                "y": tr.position().y,
                "vx": tr.state.velocity().x,
                "vy": tr.state.velocity().y,
                "status": tr.status,
                "temp_id": tr.source_temp_id,
            })
        };
        json!({
            "frame": frame,
            "t": self.t,
            "truth": self.truth.iter().map(|a| json!({
                "id": a.actor_id,
                "ego": a.actor_id == ego_id,
                "x": a.position.x_m,
                "y": a.position.y_m,
                "heading_rad": a.heading_rad,
            })).collect::<Vec<_>>(),
            "local": self.local.iter().map(track).collect::<Vec<_>>(),
            "v2v": self.v2v.iter().map(track).collect::<Vec<_>>(),
            "priority": self.priority_list.iter().map(track).collect::<Vec<_>>(),
            "priority_view": self.priority_view.iter().map(|(k, p)| json!({
                "kind": k.kind,
                "id": k.id,
                "x": p.x,
                "y": p.y,
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub seed: u64,
    pub ego_id: u32,
    pub frames: Vec<FrameRecord>,
    pub report: RunReport,
    /// Actor id to broadcast temporary id.
    pub temp_ids: BTreeMap<u32, u32>,
    pub spoofed_ids: Vec<u32>,
    /// Final validation registry.
    pub validation: BTreeMap<u32, Validation>,
    /// Priority tracks ever created from a spoofed temporary id.
    pub spoofed_priority_tracks: usize,
    pub messages_sent: usize,
    pub messages_delivered: usize,
}

impl RunOutput {
    pub fn summary(&self) -> String {
        let mut s = format!("seed: {}\n", self.seed);
        s.push_str(&self.report.summary());
        s.push_str(&format!(
            "bsm sent: {}, delivered: {}\n",
            self.messages_sent, self.messages_delivered
        ));
        let validated = self
            .validation
            .values()
            .filter(|v| matches!(v, Validation::Validated { .. }))
            .count();
        s.push_str(&format!(
            "validated temp_ids: {validated} of {}\n",
            self.validation.len()
        ));
        s.push_str(&format!("spoofed temp_ids: {:?}\n", self.spoofed_ids));
        s.push_str(&format!(
            "priority tracks from spoofed temp_ids: {}\n",
            self.spoofed_priority_tracks
        ));
        s
    }

    pub fn tracks_jsonl(&self) -> String {
        let mut out = String::new();
        for (k, f) in self.frames.iter().enumerate() {
            out.push_str(&f.to_json(k, self.ego_id).to_string());
            out.push('\n');
        }
        out
    }
}

fn estimates(tracks: &[Track]) -> Vec<Estimate> {
    tracks.iter().map(|t| (t.key(), t.position())).collect()
}

/// Runs the full pipeline; optionally writes every delivered message to
/// `capture`.
pub fn run_pipeline(
    cfg: &ScenarioConfig,
    opts: &PipelineOptions,
    mut capture: Option<&mut dyn Write>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = opts.seed.unwrap_or(cfg.rng_seed);
    let frame = cfg.frame();
    let mut sensor_rng = stream(seed, SENSOR_STREAM);
    let mut gps_rng = stream(seed, GPS_STREAM);
    let mut id_rng = stream(seed, TEMP_ID_STREAM);

    let mut channel = Channel::new(cfg.channel.clone(), frame.clone(), stream(seed, CHANNEL_STREAM));
    let spoofed_ids = channel.spoofed_ids();
    let equipped: Vec<u32> = cfg
        .actors
        .iter()
        .filter(|a| a.v2v_equipped && a.actor_id != cfg.ego_id)
        .map(|a| a.actor_id)
        .collect();
    let mut generator = BsmGenerator::new(&equipped, &spoofed_ids, cfg.v2v.gps_noise_std_m, &mut id_rng);

    let mut local = TrackList::new(TrackKind::Sensor);
    let mut v2v = TrackList::new(TrackKind::V2v);
    let mut pl = PriorityTrackList::new();
    let mut frames = Vec::with_capacity(cfg.frame_count());
    let (mut sent, mut delivered_total) = (0usize, 0usize);

    for k in 0..cfg.frame_count() {
        let t = cfg.time_at(k);
        let truth = ground_truth_at(cfg, t)?;
        let ego = *truth
            .iter()
            .find(|a| a.actor_id == cfg.ego_id)
            .expect("validated config contains ego");
        let others: Vec<ActorState> = truth
            .iter()
            .filter(|a| a.actor_id != cfg.ego_id)
            .cloned()
            .collect();

        let mut dets: Vec<Detection> = Vec::new();
        for r in &cfg.radars {
            let points = simulate_radar(r, &ego, &truth, t, &mut sensor_rng);
            dets.extend(cluster_radar(
                &points,
                r.cluster_eps_m,
                r.cluster_min_pts,
                r.measurement_covariance(),
            ));
        }
        for c in &cfg.cameras {
            dets.extend(simulate_camera(c, &ego, &truth, t, &mut sensor_rng));
        }
        if opts.disable_local {
            dets.clear();
        }
        let n_dets = dets.len();
        local = step_local_fusion(&local, &dets, t, &cfg.tracker)?;

        let msgs = generator.generate(&others, &frame, t, &mut gps_rng);
        sent += msgs.len();
        let mut delivered = channel.transmit(&msgs, k as u32, t);
        if opts.disable_v2v {
            delivered.clear();
        }
        delivered_total += delivered.len();
        if let Some(w) = capture.as_deref_mut() {
            for m in &delivered {
                write_capture_record(w, k as u32, m).map_err(|e| Error::Io {
                    path: "bsm capture".into(),
                    source: e,
                })?;
            }
        }
        for m in &delivered {
            v2v = bsm_to_v2v_track(m, &frame, &v2v, &cfg.v2v)?;
        }
        expire_v2v_tracks(&mut v2v, t, &cfg.v2v);
        let v2v_now = v2v.predicted_to(t, cfg.v2v.process_noise);

        let mut local_est = local.clone();
        local_est.retain(|tr| tr.status.is_established());
        let pairs = associate_tracks(&local_est, &v2v_now, &cfg.association)?;
        let mapping = resolve_one_to_one(&pairs);
        pl = update_priority_list(
            &pl,
            &local_est,
            &v2v_now,
            &mapping,
            t,
            &cfg.association,
            cfg.v2v.process_noise,
        );
        let view = priority_system_view(&pl, &local_est, &v2v_now, &pairs);

        frames.push(FrameRecord {
            t,
            truth,
            local: local_est.tracks().to_vec(),
            v2v: v2v_now.tracks().to_vec(),
            priority_list: pl.tracks().tracks().to_vec(),
            priority_view: view,
            detections: n_dets,
        });
    }

    let truth: Vec<Vec<Truth>> = frames.iter().map(|f| f.truth_points(cfg.ego_id)).collect();
    let local_s: Vec<Vec<Estimate>> = frames.iter().map(|f| estimates(&f.local)).collect();
    let v2v_s: Vec<Vec<Estimate>> = frames.iter().map(|f| estimates(&f.v2v)).collect();
    let prio_s: Vec<Vec<Estimate>> = frames.iter().map(|f| f.priority_view.clone()).collect();
    let penalty = opts.switch_penalty.unwrap_or(opts.gospa.default_switch_penalty());
    let report = evaluate_run(&local_s, &v2v_s, &prio_s, &truth, &opts.gospa, penalty)?;

    let spoofed_priority_tracks = pl
        .admissions()
        .iter()
        .filter(|a| spoofed_ids.contains(&a.temp_id))
        .count();
    Ok(RunOutput {
        seed,
        ego_id: cfg.ego_id,
        frames,
        report,
        temp_ids: generator.temp_ids().clone(),
        spoofed_ids,
        validation: pl.registry().clone(),
        spoofed_priority_tracks,
        messages_sent: sent,
        messages_delivered: delivered_total,
    })
}
