//! Density-based clustering of radar returns.

use std::collections::{HashMap, VecDeque};

pub const NOISE: i32 = -1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterResult {
    /// Per-point cluster id, `NOISE` (-1) for noise points.
    pub labels: Vec<i32>,
    pub cluster_count: usize,
}

impl ClusterResult {
    /// Indices of the points belonging to each cluster, in cluster order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// Uniform grid with cell edge `eps`; a radius query touches the 3^D
/// neighbouring cells.
struct Grid<'a, const D: usize> {
    points: &'a [[f64; D]],
    eps: f64,
    cells: HashMap<[i64; D], Vec<usize>>,
}

impl<'a, const D: usize> Grid<'a, D> {
    fn new(points: &'a [[f64; D]], eps: f64) -> Self {
        let mut cells: HashMap<[i64; D], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &[f64; D], eps: f64) -> [i64; D] {
        let mut k = [0i64; D];
        for (kd, x) in k.iter_mut().zip(p) {
            *kd = (x / eps).floor() as i64;
        }
        k
    }

    /// Neighbours within `eps` (inclusive, self included), ascending index.
    fn neighbours(&self, i: usize) -> Vec<usize> {
        let p = &self.points[i];
        let base = Self::key(p, self.eps);
        let eps_sq = self.eps * self.eps;
        let mut out = Vec::new();
        let mut offset = [-1i64; D];
        loop {
            let mut k = base;
            for d in 0..D {
                k[d] += offset[d];
            }
            if let Some(bucket) = self.cells.get(&k) {
                for &j in bucket {
                    if dist_sq(p, &self.points[j]) <= eps_sq {
                        out.push(j);
                    }
                }
            }
            // odometer over {-1, 0, 1}^D
            let mut d = 0;
            while d < D {
                offset[d] += 1;
                if offset[d] <= 1 {
                    break;
                }
                offset[d] = -1;
                d += 1;
            }
            if d == D {
                break;
            }
        }
        out.sort_unstable();
        out
    }
}

fn dist_sq<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// DBSCAN over points in `D` dimensions.
///
/// Points are visited in input order and clusters are numbered in discovery
/// order. A border point reachable from several clusters stays with the
/// first cluster that reached it.
pub fn dbscan<const D: usize>(points: &[[f64; D]], eps: f64, min_pts: usize) -> ClusterResult {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");

    const UNVISITED: i32 = -2;
    let grid = Grid::new(points, eps);
    let mut labels = vec![UNVISITED; points.len()];
    let mut cluster = 0i32;

    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        let seeds = grid.neighbours(i);
        if seeds.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
                continue;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            let nb = grid.neighbours(j);
            if nb.len() >= min_pts {
                queue.extend(
                    nb.into_iter()
                        .filter(|&k| labels[k] == UNVISITED || labels[k] == NOISE),
                );
            }
        }
        cluster += 1;
    }

    ClusterResult {
        labels,
        cluster_count: cluster as usize,
    }
}
