//! GOSPA evaluation (alpha = 2) with switching bookkeeping.
//!
//! Component values are kept in raw power form: `localization` is the sum
//! of `min(d, c)^p` over assigned pairs, `missed` and `false_tracks` are
//! `c^p / 2` per unassigned truth or estimate. `total` is the p-th root of
//! their sum. Switching is reported separately.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector2;

use crate::assignment;
use crate::error::{Error, Result};
use crate::tracker::TrackKey;

/// Estimate entry: track identity and position.
pub type Estimate = (TrackKey, Vector2<f64>);
/// Truth entry: actor id and position.
pub type Truth = (u32, Vector2<f64>);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GospaParams {
    pub p: f64,
    pub c: f64,
}

impl GospaParams {
    pub const ALPHA: f64 = 2.0;

    pub fn new(p: f64, c: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite() && c > 0.0 && c.is_finite()) {
            return Err(Error::Validation(format!(
                "GOSPA needs p >= 1 and c > 0 (got p={p}, c={c})"
            )));
        }
        Ok(Self { p, c })
    }

    /// Cost charged per unassigned element, `c^p / alpha`.
    pub fn half_penalty(&self) -> f64 {
        self.c.powf(self.p) / Self::ALPHA
    }

    /// Default switching penalty, `c^p / 2`.
    pub fn default_switch_penalty(&self) -> f64 {
        self.half_penalty()
    }
}

impl Default for GospaParams {
    fn default() -> Self {
        Self { p: 2.0, c: 30.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GospaBreakdown {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_tracks: f64,
    pub switching: f64,
}

/// GOSPA value together with the optimal truth-to-estimate assignment
/// (`assignment[i]` is the estimate index paired with truth `i`, if any).
#[derive(Clone, Debug, PartialEq)]
pub struct GospaResult {
    pub breakdown: GospaBreakdown,
    pub assignment: Vec<Option<usize>>,
}

pub fn gospa_with_assignment(
    estimates: &[Vector2<f64>],
    truths: &[Vector2<f64>],
    gp: &GospaParams,
) -> GospaResult {
    let cut = gp.c.powf(gp.p);
    let cost: Vec<Vec<f64>> = truths
        .iter()
        .map(|x| {
            estimates
                .iter()
                .map(|y| (x - y).norm().min(gp.c).powf(gp.p))
                .collect()
        })
        .collect();
    let raw = if truths.is_empty() || estimates.is_empty() {
        vec![None; truths.len()]
    } else {
        assignment::solve(&cost)
    };
    // a pair at or beyond the cutoff costs the same as leaving both out
    let assignment: Vec<Option<usize>> = raw
        .iter()
        .enumerate()
        .map(|(i, a)| a.filter(|&j| cost[i][j] < cut))
        .collect();
    let assigned = assignment.iter().flatten().count();
    let localization: f64 = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|j| cost[i][j]))
        .fold(0.0, |acc, c| acc + c);
    let missed = gp.half_penalty() * (truths.len() - assigned) as f64;
    let false_tracks = gp.half_penalty() * (estimates.len() - assigned) as f64;
    GospaResult {
        breakdown: GospaBreakdown {
            total: (localization + missed + false_tracks).powf(1.0 / gp.p),
            localization,
            missed,
            false_tracks,
            switching: 0.0,
        },
        assignment,
    }
}

/// GOSPA between two point sets; `switching` is left at zero.
pub fn gospa(estimates: &[Vector2<f64>], truths: &[Vector2<f64>], gp: &GospaParams) -> GospaBreakdown {
    gospa_with_assignment(estimates, truths, gp).breakdown
}

/// `penalty` times the number of truths assigned in both frames to
/// different tracks. A truth unassigned in either frame does not count.
pub fn switching_error(prev: &BTreeMap<u32, TrackKey>, cur: &BTreeMap<u32, TrackKey>, penalty: f64) -> f64 {
    let changed = cur
        .iter()
        .filter(|(truth, key)| prev.get(truth).is_some_and(|p| p != *key))
        .count();
    penalty * changed as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum System {
    Local,
    V2v,
    Priority,
}

impl System {
    pub const ALL: [System; 3] = [System::Local, System::V2v, System::Priority];

    pub fn name(self) -> &'static str {
        match self {
            System::Local => "local",
            System::V2v => "v2v",
            System::Priority => "priority",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Per-frame series and run means for the three systems.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    series: [Vec<GospaBreakdown>; 3],
    means: [GospaBreakdown; 3],
}

/// Relative margin required by the ordering verdict.
pub const ORDERING_MARGIN: f64 = 0.05;

impl RunReport {
    pub fn series(&self, s: System) -> &[GospaBreakdown] {
        &self.series[s.index()]
    }

    pub fn mean(&self, s: System) -> GospaBreakdown {
        self.means[s.index()]
    }

    pub fn frame_count(&self) -> usize {
        self.series[0].len()
    }

    /// Named pass/fail comparisons between the systems.
    pub fn verdicts(&self) -> Vec<(&'static str, bool)> {
        let (l, v, p) = (
            self.mean(System::Local),
            self.mean(System::V2v),
            self.mean(System::Priority),
        );
        let below = |a: f64, b: f64| a <= (1.0 - ORDERING_MARGIN) * b;
        vec![
            (
                "gospa v2v < priority < local (5% margin)",
                below(v.total, p.total) && below(p.total, l.total),
            ),
            ("missed v2v == 0", v.missed == 0.0),
            ("missed priority < local", p.missed < l.missed),
            ("false v2v == 0", v.false_tracks == 0.0),
            ("false priority < local", p.false_tracks < l.false_tracks),
            (
                "switching == 0 for all systems",
                l.switching == 0.0 && v.switching == 0.0 && p.switching == 0.0,
            ),
        ]
    }

    /// One CSV row per frame per system.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,system,total,localization,missed,false,switching\n");
        for k in 0..self.frame_count() {
            for s in System::ALL {
                let b = &self.series[s.index()][k];
                writeln!(
                    out,
                    "{k},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    s.name(),
                    b.total,
                    b.localization,
                    b.missed,
                    b.false_tracks,
                    b.switching
                )
                .expect("writing to a String");
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(out, "frames: {}", self.frame_count()).unwrap();
        writeln!(
            out,
            "{:<10}{:>14}{:>14}{:>14}{:>14}{:>14}",
            "system", "total", "localization", "missed", "false", "switching"
        )
        .unwrap();
        for s in System::ALL {
            let m = self.mean(s);
            writeln!(
                out,
                "{:<10}{:>14.4}{:>14.4}{:>14.4}{:>14.4}{:>14.4}",
                s.name(),
                m.total,
                m.localization,
                m.missed,
                m.false_tracks,
                m.switching
            )
            .unwrap();
        }
        for (name, ok) in self.verdicts() {
            writeln!(out, "[{}] {name}", if ok { "PASS" } else { "FAIL" }).unwrap();
        }
        out
    }
}

fn evaluate_series(
    frames: &[Vec<Estimate>],
    truth: &[Vec<Truth>],
    gp: &GospaParams,
    penalty: f64,
) -> Vec<GospaBreakdown> {
    let mut prev: BTreeMap<u32, TrackKey> = BTreeMap::new();
    frames
        .iter()
        .zip(truth)
        .map(|(est, tru)| {
            let ep: Vec<Vector2<f64>> = est.iter().map(|e| e.1).collect();
            let tp: Vec<Vector2<f64>> = tru.iter().map(|t| t.1).collect();
            let r = gospa_with_assignment(&ep, &tp, gp);
            let cur: BTreeMap<u32, TrackKey> = r
                .assignment
                .iter()
                .enumerate()
                .filter_map(|(i, a)| a.map(|j| (tru[i].0, est[j].0)))
                .collect();
            let mut b = r.breakdown;
            b.switching = switching_error(&prev, &cur, penalty);
            prev = cur;
            b
        })
        .collect()
}

fn mean_of(series: &[GospaBreakdown]) -> GospaBreakdown {
    if series.is_empty() {
        return GospaBreakdown::default();
    }
    let n = series.len() as f64;
    let sum = |f: fn(&GospaBreakdown) -> f64| series.iter().map(f).fold(0.0, |a, b| a + b) / n;
    GospaBreakdown {
        total: sum(|b| b.total),
        localization: sum(|b| b.localization),
        missed: sum(|b| b.missed),
        false_tracks: sum(|b| b.false_tracks),
        switching: sum(|b| b.switching),
    }
}

/// Scores the three systems frame by frame against ground truth.
pub fn evaluate_run(
    local: &[Vec<Estimate>],
    v2v: &[Vec<Estimate>],
    priority: &[Vec<Estimate>],
    truth: &[Vec<Truth>],
    gp: &GospaParams,
    penalty: f64,
) -> Result<RunReport> {
    let n = truth.len();
    for (what, frames) in [("local", local), ("v2v", v2v), ("priority", priority)] {
        if frames.len() != n {
            return Err(Error::FrameCountMismatch {
                what,
                got: frames.len(),
                expected: n,
            });
        }
    }
    let series = [
        evaluate_series(local, truth, gp, penalty),
        evaluate_series(v2v, truth, gp, penalty),
        evaluate_series(priority, truth, gp, penalty),
    ];
    let means = [mean_of(&series[0]), mean_of(&series[1]), mean_of(&series[2])];
    Ok(RunReport { series, means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::TrackKind;
    use proptest::prelude::*;

    fn key(id: u64) -> TrackKey {
        TrackKey {
            kind: TrackKind::Sensor,
            id,
        }
    }

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    #[test]
    fn perfect_match_is_zero() {
        let pts = [v(0.0, 0.0), v(5.0, 1.0)];
        let b = gospa(&pts, &pts, &GospaParams::default());
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn single_missed_target() {
        let b = gospa(&[], &[v(0.0, 0.0)], &GospaParams::default());
        assert_eq!(b.missed, 450.0);
        assert_eq!(b.false_tracks, 0.0);
        assert!((b.total - 450f64.sqrt()).abs() < 1e-12);
        assert!((b.total - 21.2132).abs() < 1e-4);
    }

    #[test]
    fn far_pair_counts_as_missed_and_false() {
        let b = gospa(&[v(100.0, 0.0)], &[v(0.0, 0.0)], &GospaParams::default());
        assert_eq!((b.localization, b.missed, b.false_tracks), (0.0, 450.0, 450.0));
    }

    #[test]
    fn switching_counts_identity_changes() {
        let a: BTreeMap<u32, TrackKey> = [(1, key(1)), (2, key(2))].into();
        let swapped: BTreeMap<u32, TrackKey> = [(1, key(2)), (2, key(1))].into();
        let gap: BTreeMap<u32, TrackKey> = [(1, key(1))].into();
        assert_eq!(switching_error(&a, &a, 450.0), 0.0);
        assert_eq!(switching_error(&a, &swapped, 450.0), 900.0);
        assert_eq!(switching_error(&a, &gap, 450.0), 0.0);
        assert_eq!(switching_error(&gap, &a, 450.0), 0.0);
    }

    #[test]
    fn perfect_run_reports_zero() {
        let truth: Vec<Vec<Truth>> = (0..5).map(|k| vec![(1, v(k as f64, 0.0))]).collect();
        let est: Vec<Vec<Estimate>> = truth.iter().map(|f| vec![(key(1), f[0].1)]).collect();
        let gp = GospaParams::default();
        let r = evaluate_run(&est, &est, &est, &truth, &gp, gp.default_switch_penalty()).unwrap();
        for s in System::ALL {
            assert_eq!(r.mean(s), GospaBreakdown::default());
        }
        assert!(evaluate_run(&est[..4], &est, &est, &truth, &gp, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let truth: Vec<Vec<Truth>> = vec![vec![(1, v(0.0, 0.0))]];
        let est: Vec<Vec<Estimate>> = vec![vec![]];
        let gp = GospaParams::default();
        let r = evaluate_run(&est, &est, &est, &truth, &gp, 450.0).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "0,local,21.213203,0.000000,450.000000,0.000000,0.000000"
        );
    }

    fn points() -> impl Strategy<Value = Vec<Vector2<f64>>> {
        proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y)| v(x, y)), 0..6)
    }

    proptest! {
        #[test]
        fn decomposition_and_symmetry(x in points(), y in points()) {
            let gp = GospaParams::default();
            let a = gospa(&x, &y, &gp);
            let b = gospa(&y, &x, &gp);
            prop_assert!((a.total - b.total).abs() < 1e-9);
            prop_assert!((a.total.powi(2) - (a.localization + a.missed + a.false_tracks)).abs() < 1e-6);
            prop_assert_eq!(gospa(&x, &x, &gp).total, 0.0);
        }

        #[test]
        fn monotone_in_cutoff(x in points(), y in points(), c in 1.0f64..40.0, dc in 0.0f64..20.0) {
            let lo = gospa(&x, &y, &GospaParams::new(2.0, c).unwrap()).total;
            let hi = gospa(&x, &y, &GospaParams::new(2.0, c + dc).unwrap()).total;
            prop_assert!(hi >= lo - 1e-9);
        }

        #[test]
        fn order_of_estimates_is_irrelevant(x in points(), y in points()) {
            let gp = GospaParams::default();
            let mut r = x.clone();
            r.reverse();
            let a = gospa(&x, &y, &gp);
            let b = gospa(&r, &y, &gp);
            prop_assert!((a.localization - b.localization).abs() < 1e-9);
            prop_assert_eq!(a.missed, b.missed);
            prop_assert_eq!(a.false_tracks, b.false_tracks);
        }

        #[test]
        fn triangle_inequality(x in points(), y in points(), z in points()) {
            let gp = GospaParams::default();
            let xz = gospa(&x, &z, &gp).total;
            let xy = gospa(&x, &y, &gp).total;
            let yz = gospa(&y, &z, &gp).total;
            prop_assert!(xz <= xy + yz + 1e-9);
        }
    }
}
