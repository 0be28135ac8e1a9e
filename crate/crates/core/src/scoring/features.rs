use serde::{Deserialize, Serialize};

use crate::geometry::{MeshModel, RigidTransform, Vec3};
use crate::render::{normals_from_depth, render_depth_with, CameraIntrinsics, DepthImage, Image, Mask, RenderOptions};
use crate::scenegen::PredictionMaps;
use crate::Result;

/// The five alignment features of a pose hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentFeatures {
    /// Fraction of the model's visible boundary on the predicted scene boundary.
    pub f1: f64,
    /// Model boundary on scene boundary over visible surface on scene boundary.
    pub f2: f64,
    /// Fraction of visible model pixels within `δ_S` of the observed depth.
    pub f3: f64,
    /// Probability-weighted depth and normal agreement over the visible surface.
    pub f4: f64,
    /// Proximity of model boundary pixels to the scene boundary.
    pub f5: f64,
}

impl AlignmentFeatures {
    pub const COUNT: usize = 5;

    pub fn to_array(&self) -> [f64; 5] {
        [self.f1, self.f2, self.f3, self.f4, self.f5]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        AlignmentFeatures {
            f1: a[0],
            f2: a[1],
            f3: a[2],
            f4: a[3],
            f5: a[4],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Depth agreement scale `δ_S` (meters).
    pub delta_s: f64,
    /// Boundary distance cap `δ_B` (pixels).
    pub delta_b: f64,
    /// `P_B` threshold defining the scene boundary set `S_B`.
    pub boundary_threshold: f64,
    /// Whether the model boundary `B(T)` includes self-occlusion contours.
    pub self_occlusion_boundary: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            delta_s: 0.005,
            delta_b: 10.0,
            boundary_threshold: 0.5,
            self_occlusion_boundary: false,
        }
    }
}

/// Euclidean distance (pixels) from every pixel to the nearest set pixel
/// of `mask`; `f64::INFINITY` everywhere when the mask is empty. Exact
/// separable squared-distance transform.
pub fn distance_transform(mask: &Mask) -> Image<f64> {
    let (w, h) = (mask.width, mask.height);
    let inf = f64::INFINITY;
    let mut g: Vec<f64> = mask.data.iter().map(|&b| if b { 0.0 } else { inf }).collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = g[y * w + x];
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            g[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&g[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        g[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    Image {
        width: w,
        height: h,
        data: g.into_iter().map(f64::sqrt).collect(),
    }
}

/// Lower envelope of parabolas `(q − p)² + f(p)`.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = (0..n).find(|&q| f[q].is_finite()) else {
        d.fill(f64::INFINITY);
        return;
    };
    let mut k = 0;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
            // z[0] is −∞, so this never pops the first parabola.
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Per-scene quantities shared by all hypotheses of the scene.
#[derive(Clone, Debug)]
pub struct SceneEvidence {
    pub cam: CameraIntrinsics,
    pub depth: DepthImage,
    pub normals: Image<Option<Vec3>>,
    /// `S_B`.
    pub scene_boundary: Mask,
    /// Distance to `S_B` in pixels, capped at `δ_B`.
    pub boundary_distance: Image<f64>,
    pub maps: PredictionMaps,
    pub params: FeatureParams,
}

impl SceneEvidence {
    pub fn new(maps: &PredictionMaps, depth: &DepthImage, cam: &CameraIntrinsics, params: &FeatureParams) -> Self {
        let scene_boundary = Mask {
            width: maps.width,
            height: maps.height,
            data: (0..maps.pixel_count()).map(|p| maps.boundary_prob(p) >= params.boundary_threshold).collect(),
        };
        let mut boundary_distance = distance_transform(&scene_boundary);
        for v in &mut boundary_distance.data {
            *v = v.min(params.delta_b);
        }
        SceneEvidence {
            cam: *cam,
            depth: depth.clone(),
            normals: normals_from_depth(depth, cam),
            scene_boundary,
            boundary_distance,
            maps: maps.clone(),
            params: *params,
        }
    }
}

/// `sim(p) = (1 − min(|Δd|, δ_S)/δ_S) · (n_model · n_obs)`, floored at 0.
pub fn surface_similarity(model_depth: f64, observed_depth: f64, model_normal: &Vec3, observed_normal: &Vec3, delta_s: f64) -> f64 {
    let dd = (model_depth - observed_depth).abs().min(delta_s);
    ((1.0 - dd / delta_s) * model_normal.dot(observed_normal)).max(0.0)
}

/// Renders `model` at `pose` and compares it with the scene.
pub fn compute_features(pose: &RigidTransform, model: &MeshModel, evidence: &SceneEvidence) -> Result<AlignmentFeatures> {
    let p = &evidence.params;
    let options = RenderOptions {
        self_occlusion_boundary: p.self_occlusion_boundary,
        ..RenderOptions::default()
    };
    let r = render_depth_with(model, pose, &evidence.cam, &options)?;
    let sb = &evidence.scene_boundary.data;
    let class_id = model.class_id();
    let has_class = (class_id as usize) <= evidence.maps.num_classes;
    let (mut nv, mut nb, mut b_on_sb, mut v_on_sb, mut depth_ok) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let (mut f4, mut f5) = (0.0, 0.0);
    for i in r.visible_pixels() {
        nv += 1;
        v_on_sb += sb[i] as usize;
        let dm = r.depth.data[i];
        let dobs = evidence.depth.data[i];
        if dobs > 0.0 && (dm - dobs).abs() < p.delta_s {
            depth_ok += 1;
        }
        if let (Some(nobs), true) = (evidence.normals.data[i], has_class) {
            let pl = evidence.maps.class_prob(i, class_id);
            f4 += pl * surface_similarity(dm, dobs, &r.normals.data[i], &nobs, p.delta_s);
        }
        if r.boundary.data[i] {
            nb += 1;
            b_on_sb += sb[i] as usize;
            f5 += 1.0 - evidence.boundary_distance.data[i] / p.delta_b;
        }
    }
    if nv == 0 {
        return Ok(AlignmentFeatures::default());
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(AlignmentFeatures {
        f1: ratio(b_on_sb, nb),
        f2: ratio(b_on_sb, v_on_sb),
        f3: ratio(depth_ok, nv),
        f4,
        f5,
    })
}
