use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{MeshModel, Vec3};
use crate::{Error, Result};

/// Continuous point-pair feature `(‖d‖, ∠(n1,d), ∠(n2,d), ∠(n1,n2))` with
/// `d = p1 − p2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpfRaw {
    pub distance: f64,
    pub angle_n1_d: f64,
    pub angle_n2_d: f64,
    pub angle_n1_n2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PpfKey {
    pub distance_bin: u16,
    pub angle1_bin: u16,
    pub angle2_bin: u16,
    pub angle3_bin: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpfQuantization {
    pub distance_step: f64,
    pub angle_step: f64,
    /// Pairs farther apart than this cannot belong to one model.
    pub max_distance: f64,
}

impl PpfQuantization {
    /// Distance step `d/20`, angle step 12°, distance range up to `d`.
    pub fn for_diameter(diameter: f64) -> Self {
        PpfQuantization {
            distance_step: diameter / 20.0,
            angle_step: 12f64.to_radians(),
            max_distance: diameter,
        }
    }

    pub fn distance_bins(&self) -> usize {
        (self.max_distance / self.distance_step).floor() as usize + 1
    }

    pub fn angle_bins(&self) -> usize {
        (PI / self.angle_step).ceil() as usize
    }

    /// Quantizes a raw feature; `None` when the distance exceeds the range.
    pub fn quantize(&self, raw: &PpfRaw) -> Option<PpfKey> {
        let db = (raw.distance / self.distance_step).floor();
        if !(db >= 0.0) || db as usize >= self.distance_bins() {
            return None;
        }
        let na = self.angle_bins();
        let ab = |a: f64| ((a / self.angle_step).floor().max(0.0) as usize).min(na - 1) as u16;
        Some(PpfKey {
            distance_bin: db as u16,
            angle1_bin: ab(raw.angle_n1_d),
            angle2_bin: ab(raw.angle_n2_d),
            angle3_bin: ab(raw.angle_n1_n2),
        })
    }

    fn dense_index(&self, k: &PpfKey) -> usize {
        let na = self.angle_bins();
        ((k.distance_bin as usize * na + k.angle1_bin as usize) * na + k.angle2_bin as usize) * na
            + k.angle3_bin as usize
    }
}

#[inline]
fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 form stays accurate near 0 and π.
    a.cross(b).norm().atan2(a.dot(b))
}

pub fn compute_ppf(p1: &Vec3, n1: &Vec3, p2: &Vec3, n2: &Vec3) -> Result<PpfRaw> {
    let d = p1 - p2;
    let distance = d.norm();
    if distance < 1e-9 {
        return Err(Error::DegeneratePair);
    }
    Ok(PpfRaw {
        distance,
        angle_n1_d: angle_between(n1, &d),
        angle_n2_d: angle_between(n2, &d),
        angle_n1_n2: angle_between(n1, n2),
    })
}

/// Hash table from quantized PPF to the ordered model sample pairs that
/// produce it, plus a dense occupancy bitmap for O(1) membership tests.
#[derive(Clone, Debug)]
pub struct PpfTable {
    quantization: PpfQuantization,
    entries: HashMap<PpfKey, Vec<(u32, u32)>>,
    occupied: Vec<bool>,
    pair_count: usize,
}

impl PpfTable {
    pub fn from_points(points: &[Vec3], normals: &[Vec3], quantization: PpfQuantization) -> Result<Self> {
        if points.len() < 2 || normals.len() != points.len() {
            return Err(Error::TooFewPoints(points.len()));
        }
        let na = quantization.angle_bins();
        let mut occupied = vec![false; quantization.distance_bins() * na * na * na];
        let mut entries: HashMap<PpfKey, Vec<(u32, u32)>> = HashMap::new();
        let mut pair_count = 0;
        for i in 0..points.len() {
            for j in 0..points.len() {
                if i == j {
                    continue;
                }
                let Ok(raw) = compute_ppf(&points[i], &normals[i], &points[j], &normals[j]) else {
                    continue;
                };
                let Some(key) = quantization.quantize(&raw) else {
                    continue;
                };
                occupied[quantization.dense_index(&key)] = true;
                entries.entry(key).or_default().push((i as u32, j as u32));
                pair_count += 1;
            }
        }
        Ok(PpfTable {
            quantization,
            entries,
            occupied,
            pair_count,
        })
    }

    pub fn quantization(&self) -> &PpfQuantization {
        &self.quantization
    }

    pub fn lookup(&self, key: &PpfKey) -> &[(u32, u32)] {
        self.entries.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, key: &PpfKey) -> bool {
        self.occupied[self.quantization.dense_index(key)]
    }

    /// Whether the raw feature of an observed pair occurs on the model.
    pub fn contains_raw(&self, raw: &PpfRaw) -> bool {
        self.quantization.quantize(raw).is_some_and(|k| self.contains(&k))
    }

    pub fn key_count(&self) -> usize {
        self.entries.len()
    }

    /// Number of ordered pairs stored.
    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PpfKey, &Vec<(u32, u32)>)> {
        self.entries.iter()
    }
}

/// PPF table over the model's surface samples (the first `num_samples`).
pub fn build_ppf_table(model: &MeshModel, num_samples: usize, quantization: PpfQuantization) -> Result<PpfTable> {
    let s = model.samples();
    let n = num_samples.min(s.points.len());
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    PpfTable::from_points(&s.points[..n], &s.normals[..n], quantization)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation through acos of normalized dot products.
    fn trig_oracle(p1: &Vec3, n1: &Vec3, p2: &Vec3, n2: &Vec3) -> [f64; 4] {
        let d = p1 - p2;
        let len = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        let ang = |a: &Vec3, b: &Vec3| {
            let c = (a.x * b.x + a.y * b.y + a.z * b.z) / (a.norm() * b.norm());
            c.clamp(-1.0, 1.0).acos()
        };
        [len, ang(n1, &d), ang(n2, &d), ang(n1, n2)]
    }

    fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            if v.norm() > 0.1 && v.norm() < 1.0 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn orthogonal_normals() {
        let f = compute_ppf(&Vec3::zeros(), &Vec3::z(), &Vec3::x(), &Vec3::z()).unwrap();
        assert_abs_diff_eq!(f.distance, 1.0);
        assert_abs_diff_eq!(f.angle_n1_d, PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.angle_n2_d, PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.angle_n1_n2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn antiparallel_displacement() {
        // d = p1 - p2 = (0,0,-2): both normals point against d.
        let f = compute_ppf(&Vec3::zeros(), &Vec3::z(), &Vec3::new(0.0, 0.0, 2.0), &Vec3::z()).unwrap();
        assert_abs_diff_eq!(f.distance, 2.0);
        assert_abs_diff_eq!(f.angle_n1_d, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(f.angle_n2_d, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(f.angle_n1_n2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coincident_points_rejected() {
        assert!(matches!(
            compute_ppf(&Vec3::x(), &Vec3::z(), &Vec3::x(), &Vec3::y()),
            Err(Error::DegeneratePair)
        ));
    }

    #[test]
    fn random_pairs_match_trig_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p1 = Vec3::new(rng.random(), rng.random(), rng.random());
            let p2 = Vec3::new(rng.random(), rng.random(), rng.random());
            let (n1, n2) = (unit(&mut rng), unit(&mut rng));
            let f = compute_ppf(&p1, &n1, &p2, &n2).unwrap();
            let o = trig_oracle(&p1, &n1, &p2, &n2);
            let got = [f.distance, f.angle_n1_d, f.angle_n2_d, f.angle_n1_n2];
            for k in 0..4 {
                assert!((got[k] - o[k]).abs() < 1e-9, "component {k}: {} vs {}", got[k], o[k]);
            }
        }
    }

    #[test]
    fn two_point_table_has_both_orderings() {
        let pts = [Vec3::zeros(), Vec3::new(0.05, 0.0, 0.0)];
        let nrm = [Vec3::z(), Vec3::y()];
        let t = PpfTable::from_points(&pts, &nrm, PpfQuantization::for_diameter(0.05)).unwrap();
        assert_eq!(t.pair_count(), 2);
        let all: Vec<(u32, u32)> = t.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        assert!(all.contains(&(0, 1)) && all.contains(&(1, 0)));
        assert!(PpfTable::from_points(&[], &[], PpfQuantization::for_diameter(1.0)).is_err());
    }

    #[test]
    fn self_lookup_and_determinism() {
        let m = MeshModel::cuboid("box", 1, Vec3::new(0.08, 0.05, 0.04)).unwrap();
        let q = PpfQuantization::for_diameter(m.diameter());
        let t1 = build_ppf_table(&m, 200, q).unwrap();
        let t2 = build_ppf_table(&m, 200, q).unwrap();
        let s = m.samples();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let i = rng.random_range(0..200usize);
            let mut j = rng.random_range(0..200usize);
            if i == j {
                j = (j + 1) % 200;
            }
            let raw = compute_ppf(&s.points[i], &s.normals[i], &s.points[j], &s.normals[j]).unwrap();
            let key = q.quantize(&raw).unwrap();
            assert!(t1.lookup(&key).contains(&(i as u32, j as u32)));
            assert!(t1.contains(&key));
        }
        // Every ordered pair lands under exactly one key.
        assert_eq!(t1.pair_count(), 200 * 199);
        let mut a: Vec<_> = t1.iter().map(|(k, v)| (*k, v.clone())).collect();
        let mut b: Vec<_> = t2.iter().map(|(k, v)| (*k, v.clone())).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn swap_symmetry(p1 in prop::array::uniform3(-1.0f64..1.0), p2 in prop::array::uniform3(-1.0f64..1.0),
                         a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
            let (p1, p2) = (Vec3::from(p1), Vec3::from(p2));
            prop_assume!((p1 - p2).norm() > 1e-3);
            let (a, b) = (Vec3::from(a), Vec3::from(b));
            prop_assume!(a.norm() > 1e-2 && b.norm() > 1e-2);
            let (n1, n2) = (a.normalize(), b.normalize());
            let f = compute_ppf(&p1, &n1, &p2, &n2).unwrap();
            let g = compute_ppf(&p2, &n2, &p1, &n1).unwrap();
            prop_assert!((f.distance - g.distance).abs() < 1e-12);
            prop_assert!((f.angle_n1_n2 - g.angle_n1_n2).abs() < 1e-9);
            prop_assert!((f.angle_n1_d - (PI - g.angle_n2_d)).abs() < 1e-9);
            prop_assert!((f.angle_n2_d - (PI - g.angle_n1_d)).abs() < 1e-9);
        }

        #[test]
        fn rigid_invariance(p1 in prop::array::uniform3(-1.0f64..1.0), p2 in prop::array::uniform3(-1.0f64..1.0),
                            axis in prop::array::uniform3(-1.0f64..1.0), angle in -3.0f64..3.0,
                            t in prop::array::uniform3(-5.0f64..5.0)) {
            let (p1, p2) = (Vec3::from(p1), Vec3::from(p2));
            prop_assume!((p1 - p2).norm() > 1e-3);
            let mut g = RigidTransform::from_axis_angle(Vec3::from(axis), angle);
            g.translation = Vec3::from(t);
            let (n1, n2) = (Vec3::new(0.3, -0.2, 0.9).normalize(), Vec3::new(-0.5, 0.1, 0.2).normalize());
            let f = compute_ppf(&p1, &n1, &p2, &n2).unwrap();
            let h = compute_ppf(&g.apply(&p1), &g.rotate(&n1), &g.apply(&p2), &g.rotate(&n2)).unwrap();
            prop_assert!((f.distance - h.distance).abs() < 1e-9);
            prop_assert!((f.angle_n1_d - h.angle_n1_d).abs() < 1e-9);
            prop_assert!((f.angle_n2_d - h.angle_n2_d).abs() < 1e-9);
            prop_assert!((f.angle_n1_n2 - h.angle_n1_n2).abs() < 1e-9);
        }
    }
}
