//! PAM k-medoids (greedy BUILD followed by best-improvement SWAP).
//!
//! Ties are broken towards the lowest input index everywhere. After SWAP
//! reaches a local optimum, zero-cost swaps that replace a medoid by a
//! lower-indexed point are still taken, so among equal-cost neighbouring
//! configurations the lowest-indexed one is returned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Inputs larger than this are thinned by seeded uniform subsampling first.
pub const MAX_PAM_POINTS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct PamResult {
    /// Medoid indices into the clustered slice, ascending.
    pub medoids: Vec<usize>,
    /// Sum over points of the distance to the nearest medoid.
    pub cost: f64,
    pub swaps: usize,
}

/// Choose `k` medoids from `points`. Returns the medoid points in ascending input order.
pub fn kmedoids(points: &[Point], k: usize, seed: u64) -> Result<Vec<Point>> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!(
            "k-medoids needs 1 <= k <= {} points, got k = {k}",
            points.len()
        )));
    }
    if points.len() > MAX_PAM_POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = rand::seq::index::sample(&mut rng, points.len(), MAX_PAM_POINTS).into_vec();
        keep.sort_unstable();
        let thinned: Vec<Point> = keep.iter().map(|&i| points[i]).collect();
        let res = pam(&thinned, k)?;
        return Ok(res.medoids.iter().map(|&i| thinned[i]).collect());
    }
    let res = pam(points, k)?;
    Ok(res.medoids.iter().map(|&i| points[i]).collect())
}

pub fn pam(points: &[Point], k: usize) -> Result<PamResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k-medoids needs 1 <= k <= {n}, got k = {k}")));
    }
    let dm = DistanceMatrix::new(points);
    let d = |i: usize, j: usize| dm.get(i, j);

    // BUILD
    let mut medoids = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    let first = (0..n)
        .map(|i| (i, (0..n).map(|j| d(i, j)).sum::<f64>()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0;
    medoids.push(first);
    is_medoid[first] = true;
    let mut near: Vec<f64> = (0..n).map(|j| d(j, first)).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for i in (0..n).filter(|&i| !is_medoid[i]) {
            let gain: f64 = (0..n).map(|j| (near[j] - d(i, j)).max(0.0)).sum();
            if gain > best.1 {
                best = (i, gain);
            }
        }
        let m = best.0;
        medoids.push(m);
        is_medoid[m] = true;
        for (j, nj) in near.iter_mut().enumerate() {
            *nj = nj.min(d(j, m));
        }
    }

    // SWAP
    let mut swaps = 0;
    loop {
        medoids.sort_unstable();
        let assign = Assignment::compute(&dm, &medoids);
        let cost = assign.cost();
        let tol = 1e-12 * cost.max(1.0);

        // one pass over the points per candidate, accumulating every slot's delta
        let mut best_improve: Option<(usize, usize, f64)> = None;
        let mut best_tie: Option<(usize, usize)> = None;
        let mut deltas = vec![0.0; k];
        for o in (0..n).filter(|&o| !is_medoid[o]) {
            assign.swap_deltas(&dm, o, &mut deltas);
            for (slot, &delta) in deltas.iter().enumerate() {
                if delta < -tol {
                    let better = match best_improve {
                        None => true,
                        Some((bs, bo, bd)) => delta < bd || (delta == bd && (slot, o) < (bs, bo)),
                    };
                    if better {
                        best_improve = Some((slot, o, delta));
                    }
                } else if delta.abs() <= tol && o < medoids[slot] && best_tie.is_none_or(|t| (slot, o) < t) {
                    best_tie = Some((slot, o));
                }
            }
        }
        let chosen = best_improve.map(|(s, o, _)| (s, o)).or(best_tie);
        match chosen {
            Some((slot, o)) => {
                is_medoid[medoids[slot]] = false;
                is_medoid[o] = true;
                medoids[slot] = o;
                swaps += 1;
            }
            None => {
                return Ok(PamResult { medoids, cost, swaps });
            }
        }
    }
}

/// Dense symmetric pairwise distances.
struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn new(points: &[Point]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = points[i].dist(&points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

/// Nearest and second-nearest medoid for every point.
struct Assignment {
    near_slot: Vec<usize>,
    near: Vec<f64>,
    second: Vec<f64>,
}

impl Assignment {
    fn compute(dm: &DistanceMatrix, medoids: &[usize]) -> Self {
        let n = dm.n;
        let mut near_slot = vec![0; n];
        let mut near = vec![f64::INFINITY; n];
        let mut second = vec![f64::INFINITY; n];
        for j in 0..n {
            for (s, &m) in medoids.iter().enumerate() {
                let dj = dm.get(j, m);
                if dj < near[j] {
                    second[j] = near[j];
                    near[j] = dj;
                    near_slot[j] = s;
                } else if dj < second[j] {
                    second[j] = dj;
                }
            }
        }
        Self {
            near_slot,
            near,
            second,
        }
    }

    fn cost(&self) -> f64 {
        self.near.iter().sum()
    }

    /// Change in total cost, per medoid slot, when that slot's medoid is
    /// replaced by point `o`.
    fn swap_deltas(&self, dm: &DistanceMatrix, o: usize, deltas: &mut [f64]) {
        // every slot gains from points that move to `o`; the slot being
        // removed also pays for reassigning its own points
        deltas.iter_mut().for_each(|d| *d = 0.0);
        let mut shared = 0.0;
        for (j, &djo) in dm.row(o).iter().enumerate() {
            let gain = (djo - self.near[j]).min(0.0);
            shared += gain;
            deltas[self.near_slot[j]] += djo.min(self.second[j]) - self.near[j] - gain;
        }
        deltas.iter_mut().for_each(|d| *d += shared);
    }
}

/// Total distance from every point to its nearest medoid.
pub fn medoid_cost(points: &[Point], medoids: &[Point]) -> f64 {
    points
        .iter()
        .map(|p| medoids.iter().map(|m| p.dist(m)).fold(f64::INFINITY, f64::min))
        .sum()
}
