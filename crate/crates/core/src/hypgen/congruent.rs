use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Base;
use crate::geometry::{kabsch, MeshModel, PointGrid, RigidTransform, Vec3};

/// Acceptance tolerances for 4-point congruence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongruenceTolerances {
    /// Allowed error on each of the six intra-set distances, and on the
    /// coincidence of the two diagonal intersection points (meters).
    pub distance: f64,
    /// Allowed error on each diagonal intersection ratio.
    pub ratio: f64,
    /// Allowed error on the three normal angles of each diagonal pair.
    pub normal_angle: f64,
    /// Cap on congruent sets kept per base; larger sets are subsampled.
    pub max_sets: usize,
}

impl CongruenceTolerances {
    pub fn for_diameter(diameter: f64) -> Self {
        CongruenceTolerances {
            distance: diameter / 30.0,
            ratio: 0.05,
            normal_angle: 20f64.to_radians(),
            max_sets: 50,
        }
    }
}

/// Affine invariants of a planar 4-point base: the points reordered so that
/// segments `(0,1)` and `(2,3)` are its diagonals, their lengths, and the
/// intersection ratios `e = q0 + r1 (q1 − q0) = q2 + r2 (q3 − q2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseInvariants {
    pub order: [usize; 4],
    pub d1: f64,
    pub d2: f64,
    pub r1: f64,
    pub r2: f64,
}

/// Closest-approach parameters `(s, t, sin θ)` of lines `a + s(b − a)` and
/// `c + t(d − c)`.
fn line_params(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Option<(f64, f64, f64)> {
    let u = b - a;
    let v = d - c;
    let w = a - c;
    let (aa, bb, cc) = (u.dot(&u), u.dot(&v), v.dot(&v));
    let (dd, ee) = (u.dot(&w), v.dot(&w));
    let den = aa * cc - bb * bb;
    if aa <= 0.0 || cc <= 0.0 || den <= 1e-18 * aa * cc {
        return None;
    }
    let s = (bb * ee - cc * dd) / den;
    let t = (aa * ee - bb * dd) / den;
    Some((s, t, (den / (aa * cc)).max(0.0).sqrt()))
}

/// Lines closer to parallel than this make the intersection ratios unstable.
const MIN_DIAGONAL_SIN: f64 = 0.17;

/// Picks the pairing whose lines intersect closest to inside both segments.
pub fn base_invariants(points: &[Vec3; 4]) -> Option<BaseInvariants> {
    const PAIRINGS: [[usize; 4]; 3] = [[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]];
    let outside = |x: f64| (-x).max(x - 1.0).max(0.0);
    let mut best: Option<(f64, BaseInvariants)> = None;
    for order in PAIRINGS {
        let [i, j, k, l] = order.map(|o| points[o]);
        let Some((s, t, sin)) = line_params(&i, &j, &k, &l) else {
            continue;
        };
        if sin < MIN_DIAGONAL_SIN {
            continue;
        }
        let penalty = outside(s) + outside(t);
        let inv = BaseInvariants {
            order,
            d1: (j - i).norm(),
            d2: (l - k).norm(),
            r1: s,
            r2: t,
        };
        if best.as_ref().is_none_or(|(p, _)| penalty < *p) {
            best = Some((penalty, inv));
        }
    }
    best.map(|(_, inv)| inv)
}

#[inline]
fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Model samples plus every ordered sample pair sorted by length, the
/// lookup structure for diagonal candidates.
#[derive(Clone, Debug)]
pub struct PairIndex {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    /// `(length, a, b)` sorted by length.
    pairs: Vec<(f32, u16, u16)>,
}

impl PairIndex {
    pub fn new(model: &MeshModel, max_samples: usize) -> Self {
        let s = model.samples();
        let n = s.points.len().min(max_samples).min(u16::MAX as usize);
        let points = s.points[..n].to_vec();
        let normals = s.normals[..n].to_vec();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    pairs.push(((points[a] - points[b]).norm() as f32, a as u16, b as u16));
                }
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        PairIndex { points, normals, pairs }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn pairs_near(&self, length: f64, tol: f64) -> &[(f32, u16, u16)] {
        let lo = self.pairs.partition_point(|p| (p.0 as f64) < length - tol);
        let hi = self.pairs.partition_point(|p| (p.0 as f64) <= length + tol);
        &self.pairs[lo..hi]
    }

    /// Ordered pairs `(a, b)` whose length and normal geometry match the
    /// base segment `(p, q)`, each with its intermediate point at ratio `r`.
    fn diagonal_candidates(
        &self,
        (p, np): (&Vec3, &Vec3),
        (q, nq): (&Vec3, &Vec3),
        r: f64,
        tol: &CongruenceTolerances,
    ) -> (Vec<(u16, u16)>, Vec<Vec3>) {
        let d = p - q;
        let want = [angle_between(np, &d), angle_between(nq, &d), angle_between(np, nq)];
        let mut pairs = Vec::new();
        let mut mids = Vec::new();
        for &(_, a, b) in self.pairs_near(d.norm(), tol.distance) {
            let (pa, pb) = (&self.points[a as usize], &self.points[b as usize]);
            let (na, nb) = (&self.normals[a as usize], &self.normals[b as usize]);
            let m = pa - pb;
            let got = [angle_between(na, &m), angle_between(nb, &m), angle_between(na, nb)];
            if want.iter().zip(&got).all(|(w, g)| (w - g).abs() <= tol.normal_angle) {
                pairs.push((a, b));
                mids.push(pa + r * (pb - pa));
            }
        }
        (pairs, mids)
    }
}

/// Rigid transforms (model → camera) of the model 4-point sets congruent
/// to `base`. When more than `tol.max_sets` sets match, a uniform random
/// subset of that size is kept (reservoir sampling in enumeration order).
pub fn match_congruent_sets<R: Rng>(
    base: &Base,
    index: &PairIndex,
    tol: &CongruenceTolerances,
    rng: &mut R,
) -> Vec<RigidTransform> {
    let Some(inv) = base_invariants(&base.points) else {
        return Vec::new();
    };
    let [i, j, k, l] = inv.order;
    let (bp, bn) = (&base.points, &base.normals);
    let (pairs1, mids1) = index.diagonal_candidates((&bp[i], &bn[i]), (&bp[j], &bn[j]), inv.r1, tol);
    let (pairs2, mids2) = index.diagonal_candidates((&bp[k], &bn[k]), (&bp[l], &bn[l]), inv.r2, tol);
    if pairs1.is_empty() || pairs2.is_empty() {
        return Vec::new();
    }
    let grid = PointGrid::new(mids2, tol.distance.max(1e-9));
    let target = [bp[i], bp[j], bp[k], bp[l]];
    let mut kept: Vec<[u16; 4]> = Vec::new();
    let mut seen = 0usize;
    for (&(a, b), e1) in pairs1.iter().zip(&mids1) {
        grid.for_each_within(e1, tol.distance, |m| {
            let (c, d) = pairs2[m];
            let set = [a, b, c, d];
            if !is_congruent(&set, &target, &inv, index, tol) {
                return;
            }
            seen += 1;
            if kept.len() < tol.max_sets {
                kept.push(set);
            } else {
                let slot = rng.random_range(0..seen);
                if slot < tol.max_sets {
                    kept[slot] = set;
                }
            }
        });
    }
    kept.iter()
        .filter_map(|set| {
            let src = set.map(|s| index.points[s as usize]);
            kabsch(&src, &target)
        })
        .collect()
}

fn is_congruent(set: &[u16; 4], target: &[Vec3; 4], inv: &BaseInvariants, index: &PairIndex, tol: &CongruenceTolerances) -> bool {
    if set[0] == set[2] || set[0] == set[3] || set[1] == set[2] || set[1] == set[3] {
        return false;
    }
    let u = set.map(|s| index.points[s as usize]);
    for x in 0..4 {
        for y in x + 1..4 {
            let du = (u[x] - u[y]).norm();
            let dt = (target[x] - target[y]).norm();
            if (du - dt).abs() > tol.distance {
                return false;
            }
        }
    }
    match line_params(&u[0], &u[1], &u[2], &u[3]) {
        Some((s, t, _)) => (s - inv.r1).abs() <= tol.ratio && (t - inv.r2).abs() <= tol.ratio,
        None => false,
    }
}
