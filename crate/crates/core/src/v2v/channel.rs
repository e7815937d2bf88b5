//! Lossy, delayed broadcast channel with optional message injection.

use std::collections::VecDeque;

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{make_bsm, BsmMessage};
use crate::error::{Error, Result};
use crate::geo::{SceneFrame, ScenePosition};

/// A forged BSM stream: a ghost vehicle under a temporary id that belongs
/// to no real actor, moving at constant velocity in the scene frame while
/// the window is open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoofStream {
    pub temp_id: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default)]
    pub vx_mps: f64,
    #[serde(default)]
    pub vy_mps: f64,
}

impl SpoofStream {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start_s - 1e-9 && t <= self.end_s + 1e-9
    }

    pub fn position_at(&self, t: f64) -> ScenePosition {
        let dt = t - self.start_s;
        ScenePosition::planar(self.x_m + self.vx_mps * dt, self.y_m + self.vy_mps * dt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    /// Independent per-message drop probability, in `[0, 1]`.
    pub drop_prob: f64,
    /// Delivery delay in simulation ticks.
    pub latency_ticks: u32,
    #[serde(rename = "spoof")]
    pub spoof_injections: Vec<SpoofStream>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            drop_prob: 0.0,
            latency_ticks: 0,
            spoof_injections: Vec::new(),
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::Validation(format!(
                "channel.drop_prob {} outside [0, 1]",
                self.drop_prob
            )));
        }
        for s in &self.spoof_injections {
            if !(s.end_s >= s.start_s) {
                return Err(Error::Validation(format!(
                    "spoof stream {} has an empty window",
                    s.temp_id
                )));
            }
        }
        Ok(())
    }
}

/// Stateful channel instance. Owns its random stream and the in-flight
/// queue; single consumer.
pub struct Channel {
    model: ChannelModel,
    frame: SceneFrame,
    rng: ChaCha8Rng,
    in_flight: VecDeque<(u32, BsmMessage)>,
    spoof_counts: Vec<u8>,
}

impl Channel {
    pub fn new(model: ChannelModel, frame: SceneFrame, rng: ChaCha8Rng) -> Self {
        let spoof_counts = vec![0; model.spoof_injections.len()];
        Self {
            model,
            frame,
            rng,
            in_flight: VecDeque::new(),
            spoof_counts,
        }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    /// Temporary ids used by injected streams.
    pub fn spoofed_ids(&self) -> Vec<u32> {
        self.model.spoof_injections.iter().map(|s| s.temp_id).collect()
    }

    /// Sends this tick's messages and returns what is delivered at `tick`:
    /// surviving messages whose latency has elapsed, in send order, followed
    /// by injected messages for streams active at `t`.
    pub fn transmit(&mut self, msgs: &[BsmMessage], tick: u32, t: f64) -> Vec<BsmMessage> {
        for m in msgs {
            // always draw so the random stream does not depend on drop_prob
            let u: f64 = self.rng.random();
            if u >= self.model.drop_prob {
                self.in_flight.push_back((tick + self.model.latency_ticks, *m));
            }
        }
        let mut out = Vec::new();
        while let Some(&(due, m)) = self.in_flight.front() {
            if due > tick {
                break;
            }
            self.in_flight.pop_front();
            out.push(m);
        }
        for (k, s) in self.model.spoof_injections.iter().enumerate() {
            if !s.active_at(t) {
                continue;
            }
            let count = self.spoof_counts[k];
            self.spoof_counts[k] = (count + 1) % 128;
            out.push(make_bsm(
                s.temp_id,
                count,
                t,
                &s.position_at(t),
                &Vector2::new(s.vx_mps, s.vy_mps),
                &self.frame,
            ));
        }
        out
    }
}
