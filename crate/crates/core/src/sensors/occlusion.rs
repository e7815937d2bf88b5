//! 2-D line-of-sight checks against actor bounding boxes.

use crate::scenario::ActorState;

/// Fraction of a target's silhouette that must be unobstructed for the
/// target to count as visible.
pub const DEFAULT_VISIBILITY_THRESHOLD: f64 = 0.4;

/// Number of sight rays cast across the silhouette segment.
const SIGHT_RAYS: usize = 25;

type P2 = [f64; 2];

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(a: P2, b: P2, p: P2) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed segment intersection test, touching counts.
pub fn segments_intersect(p1: P2, p2: P2, q1: P2, q2: P2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn ray_blocked(from: P2, to: P2, occluder: &ActorState) -> bool {
    let c = occluder.corners();
    (0..4).any(|k| segments_intersect(from, to, c[k], c[(k + 1) % 4]))
}

/// Sample points on the segment through the target centre, perpendicular
/// to the sight line, spanning the target's projected extent.
fn silhouette_samples(from: P2, target: &ActorState) -> Vec<P2> {
    let centre = [target.position.x_m, target.position.y_m];
    let (dx, dy) = (centre[0] - from[0], centre[1] - from[1]);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return vec![centre];
    }
    let n = [-dy / len, dx / len];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in target.corners() {
        let s = (c[0] - centre[0]) * n[0] + (c[1] - centre[1]) * n[1];
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (0..SIGHT_RAYS)
        .map(|k| {
            let s = lo + (hi - lo) * k as f64 / (SIGHT_RAYS - 1) as f64;
            [centre[0] + s * n[0], centre[1] + s * n[1]]
        })
        .collect()
}

/// Fraction of sight rays from the ego sensor origin to the target
/// silhouette that cross no occluder edge.
pub fn visible_fraction(ego: &ActorState, target: &ActorState, occluders: &[ActorState]) -> f64 {
    let from = [ego.position.x_m, ego.position.y_m];
    let samples = silhouette_samples(from, target);
    let clear = samples
        .iter()
        .filter(|&&s| !occluders.iter().any(|o| ray_blocked(from, s, o)))
        .count();
    clear as f64 / samples.len() as f64
}

pub fn line_of_sight_visible_with(
    ego: &ActorState,
    target: &ActorState,
    occluders: &[ActorState],
    threshold: f64,
) -> bool {
    visible_fraction(ego, target, occluders) >= threshold
}

/// Visibility at the default 40% silhouette threshold.
pub fn line_of_sight_visible(ego: &ActorState, target: &ActorState, occluders: &[ActorState]) -> bool {
    line_of_sight_visible_with(ego, target, occluders, DEFAULT_VISIBILITY_THRESHOLD)
}
