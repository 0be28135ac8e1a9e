use rand::Rng;

use super::congruent::base_invariants;
use super::graph::{Bfs, PixelGraph};
use crate::geometry::{compute_ppf, PointCloud, PpfTable, Vec3};
use crate::render::{backproject_with_normals, CameraIntrinsics, DepthImage, Image, Mask};
use crate::scenegen::PredictionMaps;
use crate::{Error, Result};

/// `π_l(p) = P_l(p) / Σ_q P_l(q)` over all pixels.
pub fn normalize_class_probability(maps: &PredictionMaps, class_id: u32) -> Result<Vec<f64>> {
    if class_id as usize > maps.num_classes || class_id == 0 {
        return Err(Error::UnknownClass(class_id));
    }
    let p: Vec<f64> = (0..maps.pixel_count()).map(|i| maps.class_prob(i, class_id)).collect();
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ClassAbsent(class_id));
    }
    Ok(p.into_iter().map(|v| v / total).collect())
}

/// Observed points whose most probable label is one class (`S_l`).
#[derive(Clone, Debug)]
pub struct LabeledCloud {
    pub class_id: u32,
    pub cloud: PointCloud,
    /// Linear pixel index of each point.
    pub pixels: Vec<usize>,
    /// `P_l` at each point.
    pub prob: Vec<f64>,
    point_of_pixel: Vec<u32>,
}

const NO_POINT: u32 = u32::MAX;

impl LabeledCloud {
    pub fn new(maps: &PredictionMaps, depth: &DepthImage, normals: &Image<Option<Vec3>>, cam: &CameraIntrinsics, class_id: u32) -> Self {
        let mask = Mask::from_vec(
            depth.width,
            depth.height,
            (0..maps.pixel_count()).map(|p| maps.label(p) == class_id).collect(),
        )
        .expect("maps and depth share a size");
        let cloud = backproject_with_normals(depth, normals, cam, Some(&mask));
        let origins = cloud.pixel_origin.as_deref().unwrap_or(&[]);
        let pixels: Vec<usize> = origins.iter().map(|&(r, c)| r as usize * depth.width + c as usize).collect();
        let prob = pixels.iter().map(|&p| maps.class_prob(p, class_id)).collect();
        let mut point_of_pixel = vec![NO_POINT; depth.len()];
        for (i, &p) in pixels.iter().enumerate() {
            point_of_pixel[p] = i as u32;
        }
        LabeledCloud {
            class_id,
            cloud,
            pixels,
            prob,
            point_of_pixel,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn point_at(&self, pixel: usize) -> Option<usize> {
        let i = self.point_of_pixel[pixel];
        (i != NO_POINT).then_some(i as usize)
    }

    /// Points whose pixels appear in `pixels`, in that order.
    pub fn points_at<'a>(&'a self, pixels: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
        pixels.iter().filter_map(|&p| self.point_at(p))
    }
}

/// Four observed points assumed to lie on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Base {
    pub class_id: u32,
    pub points: [Vec3; 4],
    pub normals: [Vec3; 4],
    pub pixels: [usize; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseParams {
    /// Pairwise pixel-graph path lengths must stay below this (`ε_l`).
    pub max_path: usize,
    /// Distance of the fourth point from the plane of the first three.
    pub plane_tolerance: f64,
    /// Minimum distance between any two base points.
    pub min_separation: f64,
    pub retry_budget: usize,
    /// Whether pixels with `P_B ≥ δ` are excluded from sampling. The graph
    /// passed alongside decides which paths exist.
    pub exclude_boundary: bool,
}

/// A sampled base together with the pixels its breadth-first searches
/// reached (the segment the base was drawn from).
#[derive(Clone, Debug)]
pub struct SampledBase {
    pub base: Base,
    pub point_indices: [usize; 4],
    pub reached: Vec<usize>,
}

/// Breadth-first search buffers reused across draws.
pub struct BaseSampler {
    bfs: [Bfs; 4],
    mark: Vec<u32>,
    generation: u32,
}

impl BaseSampler {
    pub fn new(pixels: usize) -> Self {
        BaseSampler {
            bfs: std::array::from_fn(|_| Bfs::new(pixels)),
            mark: vec![0; pixels],
            generation: 0,
        }
    }

    /// Draws a base: `b_1 ∝ φ` over the eligible points, then each `b_m ∝ φ`
    /// over points whose path length to every earlier point is below
    /// `max_path` and whose point-pair feature with each earlier point
    /// occurs on the model. The fourth point must also be coplanar with the
    /// first three and give a base with well-conditioned diagonals. A draw
    /// that runs out of candidates restarts, up to `retry_budget` times.
    pub fn sample<R: Rng>(
        &mut self,
        cloud: &LabeledCloud,
        potentials: &[f64],
        graph: &PixelGraph,
        table: &PpfTable,
        params: &BaseParams,
        rng: &mut R,
    ) -> Result<SampledBase> {
        if cloud.len() < 4 {
            return Err(Error::BaseSamplingFailed);
        }
        let eligible = |i: usize| potentials[i] > 0.0 && !(params.exclude_boundary && graph.is_blocked(cloud.pixels[i]));
        let hops = params.max_path.saturating_sub(1);
        for _ in 0..params.retry_budget.max(1) {
            let Some(b1) = weighted_pick((0..cloud.len()).filter(|&i| eligible(i)), potentials, rng) else {
                return Err(Error::BaseSamplingFailed);
            };
            let mut chosen = vec![b1];
            let mut ok = true;
            for m in 1..4 {
                self.bfs[m - 1].run(graph, cloud.pixels[chosen[m - 1]], hops);
                let candidates = self.bfs[0].reached().iter().filter_map(|&p| cloud.point_at(p)).filter(|&i| {
                    eligible(i)
                        && !chosen.contains(&i)
                        && (1..m).all(|k| self.bfs[k].distance(cloud.pixels[i]).is_some())
                        && self.compatible(cloud, table, params, &chosen, i)
                });
                match weighted_pick(candidates, potentials, rng) {
                    Some(i) => chosen.push(i),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            self.bfs[3].run(graph, cloud.pixels[chosen[3]], hops);
            let idx = [chosen[0], chosen[1], chosen[2], chosen[3]];
            let base = Base {
                class_id: cloud.class_id,
                points: idx.map(|i| cloud.cloud.points[i]),
                normals: idx.map(|i| cloud.cloud.normals[i]),
                pixels: idx.map(|i| cloud.pixels[i]),
            };
            let reached = self.reached_union();
            return Ok(SampledBase {
                base,
                point_indices: idx,
                reached,
            });
        }
        Err(Error::BaseSamplingFailed)
    }

    fn compatible(&self, cloud: &LabeledCloud, table: &PpfTable, params: &BaseParams, chosen: &[usize], i: usize) -> bool {
        let pts = &cloud.cloud.points;
        let nrm = &cloud.cloud.normals;
        let p = &pts[i];
        for &j in chosen {
            if (p - pts[j]).norm() < params.min_separation {
                return false;
            }
            let Ok(f) = compute_ppf(p, &nrm[i], &pts[j], &nrm[j]) else {
                return false;
            };
            if !table.contains_raw(&f) {
                return false;
            }
        }
        match chosen.len() {
            2 => {
                // Keep the first three points well away from collinear.
                let (a, b) = (pts[chosen[0]], pts[chosen[1]]);
                (b - a).normalize().cross(&(p - a)).norm() >= params.min_separation / 2.0
            }
            3 => {
                let (a, b, c) = (pts[chosen[0]], pts[chosen[1]], pts[chosen[2]]);
                let n = (b - a).cross(&(c - a));
                let len = n.norm();
                len > 0.0 && (n / len).dot(&(p - a)).abs() <= params.plane_tolerance && base_invariants(&[a, b, c, *p]).is_some()
            }
            _ => true,
        }
    }

    fn reached_union(&mut self) -> Vec<usize> {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.mark.fill(0);
            self.generation = 1;
        }
        let mut out = Vec::new();
        for b in &self.bfs {
            for &p in b.reached() {
                if self.mark[p] != self.generation {
                    self.mark[p] = self.generation;
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Free-function form of [`BaseSampler::sample`].
pub fn sample_base<R: Rng>(
    cloud: &LabeledCloud,
    potentials: &[f64],
    graph: &PixelGraph,
    table: &PpfTable,
    params: &BaseParams,
    rng: &mut R,
) -> Result<Base> {
    BaseSampler::new(graph.len()).sample(cloud, potentials, graph, table, params, rng).map(|s| s.base)
}

fn weighted_pick<R: Rng>(items: impl Iterator<Item = usize>, weights: &[f64], rng: &mut R) -> Option<usize> {
    let items: Vec<usize> = items.filter(|&i| weights[i] > 0.0).collect();
    let total: f64 = items.iter().map(|&i| weights[i]).sum();
    if items.is_empty() || !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for &i in &items {
        u -= weights[i];
        if u < 0.0 {
            return Some(i);
        }
    }
    items.last().copied()
}

/// Multiplies by `gamma` the potential of every point whose pixel lies
/// within `max_path − 1` hops of a base pixel.
pub fn apply_dispersion_decay(
    potentials: &mut [f64],
    cloud: &LabeledCloud,
    base: &Base,
    graph: &PixelGraph,
    gamma: f64,
    max_path: usize,
) {
    let mut bfs = Bfs::new(graph.len());
    let mut seen = vec![false; graph.len()];
    for &px in &base.pixels {
        for &p in bfs.run(graph, px, max_path.saturating_sub(1)) {
            seen[p] = true;
        }
    }
    decay_pixels(potentials, cloud, seen.iter().enumerate().filter(|(_, &s)| s).map(|(p, _)| p), gamma);
}

pub(crate) fn decay_pixels(potentials: &mut [f64], cloud: &LabeledCloud, pixels: impl Iterator<Item = usize>, gamma: f64) {
    for p in pixels {
        if let Some(i) = cloud.point_at(p) {
            potentials[i] *= gamma;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::graph::build_pixel_graph;
    use super::*;
    use crate::geometry::{build_ppf_table, MeshModel, PpfQuantization};
    use crate::render::normals_from_depth;
    use crate::scenegen::PredictionMaps;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn maps_from(p: Vec<f32>, w: usize, h: usize) -> PredictionMaps {
        let mut sem = Vec::new();
        for v in &p {
            sem.extend([1.0 - v, *v]);
        }
        PredictionMaps::new(w, h, 1, sem, vec![0.0; w * h]).unwrap()
    }

    #[test]
    fn normalization_cases() {
        let m = maps_from(vec![0.5; 12], 4, 3);
        let pi = normalize_class_probability(&m, 1).unwrap();
        assert!(pi.iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-15));
        let mut one = vec![0.0; 12];
        one[7] = 0.3;
        let pi = normalize_class_probability(&maps_from(one, 4, 3), 1).unwrap();
        assert_eq!(pi[7], 1.0);
        assert_eq!(pi.iter().filter(|&&v| v != 0.0).count(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = maps_from((0..300).map(|_| rng.random()).collect(), 20, 15);
        let s: f64 = normalize_class_probability(&m, 1).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(matches!(normalize_class_probability(&maps_from(vec![0.0; 12], 4, 3), 1), Err(Error::ClassAbsent(1))));
    }

    /// Flat slab seen face-on, filling a rectangle of the image.
    struct Plate {
        maps: PredictionMaps,
        cloud: LabeledCloud,
        table: PpfTable,
    }

    fn plate(w: usize, h: usize, region: impl Fn(usize, usize) -> bool, boundary: impl Fn(usize, usize) -> bool) -> Plate {
        let cam = CameraIntrinsics::new(280.0, 280.0, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap();
        let depth = DepthImage::depth(w, h, vec![0.5; w * h]).unwrap();
        let mut sem = Vec::new();
        let mut b = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let on = region(x, y);
                sem.extend(if on { [0.0f32, 1.0] } else { [1.0, 0.0] });
                b.push(if boundary(x, y) { 1.0f32 } else { 0.0 });
            }
        }
        let maps = PredictionMaps::new(w, h, 1, sem, b).unwrap();
        let normals = normals_from_depth(&depth, &cam);
        let cloud = LabeledCloud::new(&maps, &depth, &normals, &cam, 1);
        let slab = MeshModel::cuboid("slab", 1, Vec3::new(0.2, 0.2, 0.01)).unwrap();
        let table = build_ppf_table(&slab, 500, PpfQuantization::for_diameter(slab.diameter())).unwrap();
        Plate { maps, cloud, table }
    }

    fn params() -> BaseParams {
        BaseParams {
            max_path: 100,
            plane_tolerance: 0.004,
            min_separation: 0.003,
            retry_budget: 20,
            exclude_boundary: true,
        }
    }

    #[test]
    fn bases_never_cross_a_boundary_line() {
        let (w, h) = (60, 40);
        let p = plate(w, h, |_, _| true, |x, _| x == 30 || x == 31);
        let graph = build_pixel_graph(&p.maps, 0.5);
        let pot = p.cloud.prob.clone();
        let mut sampler = BaseSampler::new(graph.len());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sides = [0usize; 2];
        for _ in 0..1000 {
            let s = sampler.sample(&p.cloud, &pot, &graph, &p.table, &params(), &mut rng).unwrap();
            let side: Vec<bool> = s.base.pixels.iter().map(|&px| px % w < 30).collect();
            assert!(side.iter().all(|&v| v == side[0]), "base straddles the boundary");
            sides[side[0] as usize] += 1;
            for a in 0..4 {
                for b in a + 1..4 {
                    let d = super::super::graph::shortest_path_length(&graph, s.base.pixels[a], s.base.pixels[b]);
                    assert!(d.is_some_and(|d| d < 100));
                }
            }
        }
        assert!(sides[0] > 300 && sides[1] > 300);
    }

    #[test]
    fn first_point_is_uniform_under_equal_potentials() {
        let (w, h) = (8, 8);
        let p = plate(w, h, |_, _| true, |_, _| false);
        let graph = build_pixel_graph(&p.maps, 0.5);
        let pot = vec![1.0; p.cloud.len()];
        let mut sampler = BaseSampler::new(graph.len());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![0f64; p.cloud.len()];
        let n = 6000;
        for _ in 0..n {
            let s = sampler.sample(&p.cloud, &pot, &graph, &p.table, &params(), &mut rng).unwrap();
            counts[s.point_indices[0]] += 1.0;
        }
        // The first draw never restarts here, so its marginal is the
        // potential itself; the only caveat is retries on dead ends, which
        // the test plate never produces.
        let k = counts.len() as f64;
        let e = n as f64 / k;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        // Degrees of freedom k−1 ≈ 35: the 99.9% quantile is about 66.6.
        assert!(chi2 < 66.6, "chi2 = {chi2} over {k} cells");
    }

    #[test]
    fn too_few_points_fail() {
        let p = plate(10, 10, |x, y| x < 3 && y == 5, |_, _| false);
        let graph = build_pixel_graph(&p.maps, 0.5);
        assert!(p.cloud.len() <= 3);
        let pot = vec![1.0; p.cloud.len()];
        let r = sample_base(&p.cloud, &pot, &graph, &p.table, &params(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::BaseSamplingFailed)));
    }

    #[test]
    fn decay_scales_only_the_reached_segment() {
        let (w, h) = (20, 10);
        // Two 5-pixel bars separated by a boundary column.
        let p = plate(w, h, |x, y| y == 5 && (2..7).contains(&x) || y == 5 && (12..17).contains(&x), |x, _| x == 9);
        let graph = build_pixel_graph(&p.maps, 0.5);
        let left: Vec<usize> = (0..p.cloud.len()).filter(|&i| p.cloud.pixels[i] % w < 9).collect();
        let right: Vec<usize> = (0..p.cloud.len()).filter(|&i| p.cloud.pixels[i] % w > 9).collect();
        assert_eq!(left.len() + right.len(), p.cloud.len());
        let base = Base {
            class_id: 1,
            points: [Vec3::zeros(); 4],
            normals: [Vec3::z(); 4],
            pixels: [left[0], left[1], left[2], left[3]].map(|i| p.cloud.pixels[i]),
        };
        let mut pot = vec![1.0; p.cloud.len()];
        apply_dispersion_decay(&mut pot, &p.cloud, &base, &graph, 0.9, 100);
        // The bars are connected through unlabeled pixels on their own side
        // only; every left point decays once, right points are untouched.
        for &i in &left {
            assert_eq!(pot[i], 0.9);
        }
        for &i in &right {
            assert_eq!(pot[i], 1.0);
        }
        let mut zero = vec![1.0; p.cloud.len()];
        apply_dispersion_decay(&mut zero, &p.cloud, &base, &graph, 0.0, 100);
        assert!(left.iter().all(|&i| zero[i] == 0.0));
    }
}
