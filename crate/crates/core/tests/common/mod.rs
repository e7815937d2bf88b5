//! Slow, independent reference implementations and the comparisons that
//! run them against the library.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use v2v_fusion::assignment;
use v2v_fusion::association::mahalanobis_distance;
use v2v_fusion::geo::{build_scene_frame, geodetic_to_scene, Ellipsoid, GeodeticPosition};
use v2v_fusion::metrics::{gospa, GospaParams};
use v2v_fusion::sensors::{dbscan, NOISE};

#[derive(Deserialize)]
struct OraclePoint {
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
    x: String,
    y: String,
    z: String,
}

#[derive(Deserialize)]
struct OracleCase {
    origin: [f64; 3],
    gamma_rad: f64,
    points: Vec<OraclePoint>,
}

/// 100 points within 10 km of three origins against 50-digit values.
pub fn geodetic() -> Result<String, String> {
    // produced by tests/fixtures/gen_geo_oracle.py at 50 significant digits
    let cases: Vec<OracleCase> =
        serde_json::from_str(include_str!("../fixtures/geo_oracle.json")).expect("fixture parses");
    let e = Ellipsoid::WGS84;
    let mut n = 0;
    let mut worst: f64 = 0.0;
    for case in &cases {
        let origin = GeodeticPosition::from_degrees(case.origin[0], case.origin[1], case.origin[2]).unwrap();
        let frame = build_scene_frame(origin, case.gamma_rad, &e);
        for p in &case.points {
            let g = GeodeticPosition::from_degrees(p.lat_deg, p.lon_deg, p.alt_m).unwrap();
            let s = geodetic_to_scene(&g, &frame, &e);
            let want = Vector3::new(
                p.x.parse::<f64>().unwrap(),
                p.y.parse::<f64>().unwrap(),
                p.z.parse::<f64>().unwrap(),
            );
            if want.norm() >= 10_000.0 {
                return Err(format!(
                    "fixture point ({}, {}) is beyond 10 km",
                    p.lat_deg, p.lon_deg
                ));
            }
            let err = (s.to_vector() - want).norm();
            worst = worst.max(err);
            if err >= 1e-6 || err.is_nan() {
                return Err(format!(
                    "({}, {}, {}): error {err} m",
                    p.lat_deg, p.lon_deg, p.alt_m
                ));
            }
            n += 1;
        }
    }
    if n != 100 {
        return Err(format!("fixture has {n} points"));
    }
    Ok(format!("geodetic 100 points, worst {worst:.1e} m"))
}

/// Minimum GOSPA cost (before the p-th root) over every partial injective
/// assignment of truths to estimates.
fn gospa_by_enumeration(x: &[Vector2<f64>], y: &[Vector2<f64>], p: f64, c: f64) -> f64 {
    fn go(i: usize, x: &[Vector2<f64>], y: &[Vector2<f64>], used: &mut Vec<bool>, p: f64, c: f64) -> f64 {
        let half = c.powf(p) / 2.0;
        if i == x.len() {
            return half * used.iter().filter(|u| !**u).count() as f64;
        }
        // truth i left unassigned
        let mut best = half + go(i + 1, x, y, used, p, c);
        for j in 0..y.len() {
            if used[j] {
                continue;
            }
            let d = (x[i] - y[j]).norm().min(c);
            used[j] = true;
            best = best.min(d.powf(p) + go(i + 1, x, y, used, p, c));
            used[j] = false;
        }
        best
    }
    go(0, x, y, &mut vec![false; y.len()], p, c)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<Vector2<f64>> {
    (0..n)
        .map(|_| Vector2::new(rng.random_range(-span..span), rng.random_range(-span..span)))
        .collect()
}

/// 200 random instances with up to five points per side.
pub fn gospa_enumeration() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..200 {
        let (nx, ny) = (rng.random_range(0..=5), rng.random_range(0..=5));
        let span = [5.0, 20.0, 60.0][k % 3];
        let x = random_points(&mut rng, nx, span);
        let y = random_points(&mut rng, ny, span);
        let (p, c) = if k % 4 == 3 { (1.0, 10.0) } else { (2.0, 30.0) };
        let gp = GospaParams::new(p, c).unwrap();
        let got = gospa(&y, &x, &gp);
        let want = gospa_by_enumeration(&x, &y, p, c);
        let sum = got.localization + got.missed + got.false_tracks;
        if (sum - want).abs() > 1e-9 * want.max(1.0) || (got.total - want.powf(1.0 / p)).abs() > 1e-9 {
            return Err(format!("GOSPA instance {k}: {sum} vs {want}"));
        }
    }
    Ok("GOSPA 200 instances".into())
}

/// Reference DBSCAN: core points from an all-pairs scan, core components by
/// union-find, clusters numbered by their lowest core index, each border
/// point joined to the lowest-numbered cluster it touches.
fn dbscan_reference(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let near = |i: usize, j: usize| {
        let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
        dx * dx + dy * dy <= eps * eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label = vec![NOISE; n];
    let mut next = 0;
    let mut root_label = std::collections::HashMap::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let l = *root_label.entry(r).or_insert_with(|| {
                next += 1;
                next - 1
            });
            label[i] = l;
        }
    }
    for i in 0..n {
        if !core[i] {
            label[i] = (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| label[j])
                .min()
                .unwrap_or(NOISE);
        }
    }
    label
}

/// 100 random instances, up to 500 points each.
pub fn dbscan_reference_match() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let n = rng.random_range(0..=500);
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(n);
        let blobs = rng.random_range(1..8);
        let centres: Vec<[f64; 2]> = (0..blobs)
            .map(|_| [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)])
            .collect();
        for _ in 0..n {
            if rng.random::<f64>() < 0.3 {
                points.push([rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)]);
            } else {
                let c = centres[rng.random_range(0..blobs)];
                points.push([
                    c[0] + rng.random_range(-4.0..4.0),
                    c[1] + rng.random_range(-4.0..4.0),
                ]);
            }
        }
        // some instances on an integer lattice, where distances hit eps exactly
        if k % 5 == 0 {
            for p in &mut points {
                p[0] = p[0].round();
                p[1] = p[1].round();
            }
        }
        let eps = [1.0, 1.5, 2.0, 3.0][k % 4];
        let min_pts = 1 + k % 5;
        let got = dbscan(&points, eps, min_pts);
        let want = dbscan_reference(&points, eps, min_pts);
        let count = want.iter().map(|&l| l + 1).max().unwrap_or(0) as usize;
        if got.labels != want || got.cluster_count != count {
            return Err(format!(
                "DBSCAN instance {k} (n={n}, eps={eps}, min_pts={min_pts})"
            ));
        }
    }
    Ok("DBSCAN 100 instances".into())
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Optimal cost over all ways to give each row of the smaller side a
/// distinct partner.
fn assignment_brute_force(cost: &[Vec<f64>]) -> f64 {
    let (rows, cols) = (cost.len(), cost[0].len());
    let mut perms = Vec::new();
    if rows <= cols {
        permutations(&mut (0..cols).collect(), 0, &mut perms);
        perms
            .iter()
            .map(|p| (0..rows).map(|i| cost[i][p[i]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    } else {
        permutations(&mut (0..rows).collect(), 0, &mut perms);
        perms
            .iter()
            .map(|p| (0..cols).map(|j| cost[p[j]][j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Six random matrices of every shape up to 7x7, a third of them full of ties.
pub fn assignment_brute_force_match() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut instances = 0;
    for rows in 1..=7 {
        for cols in 1..=7 {
            for k in 0..6 {
                let cost: Vec<Vec<f64>> = (0..rows)
                    .map(|_| {
                        (0..cols)
                            .map(|_| {
                                if k % 3 == 0 {
                                    // many ties
                                    rng.random_range(0..4) as f64
                                } else {
                                    rng.random_range(0.0..100.0)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let a = assignment::solve(&cost);
                let mut seen: Vec<usize> = a.iter().flatten().copied().collect();
                seen.sort_unstable();
                seen.dedup();
                let got = assignment::total_cost(&cost, &a);
                let want = assignment_brute_force(&cost);
                if a.len() != rows || seen.len() != rows.min(cols) || (got - want).abs() > 1e-9 {
                    return Err(format!("assignment {rows}x{cols}: {got} vs {want}"));
                }
                instances += 1;
            }
        }
    }
    Ok(format!("assignment {instances} instances"))
}

/// The 3-4-5 case, then 500 random SPD matrices against an explicit inverse.
pub fn mahalanobis() -> Result<String, String> {
    let d = mahalanobis_distance(
        &Vector3::new(3.0, 4.0, 0.0),
        &Vector3::zeros(),
        &Matrix3::identity(),
    )
    .map_err(|e| e.to_string())?;
    if d != 5.0 {
        return Err(format!("Mahalanobis 3-4-5 gave {d}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let c = a * a.transpose() + Matrix3::identity() * 0.1;
        let zv = Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0));
        let zs = Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0));
        let d = zv - zs;
        let inv: Matrix3<f64> = c.try_inverse().unwrap();
        let want = d.dot(&(inv * d)).sqrt();
        let got = mahalanobis_distance(&zv, &zs, &c).map_err(|e| e.to_string())?;
        if (got - want).abs() > 1e-9 * want.max(1.0) {
            return Err(format!("Mahalanobis {got} vs explicit inverse {want}"));
        }
    }
    Ok("Mahalanobis 3-4-5 = 5 and 500 SPD cases".into())
}
