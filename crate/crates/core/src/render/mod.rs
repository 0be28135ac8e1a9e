//! Software z-buffer rendering of placed models, depth-derived normals and
//! back-projection.

mod camera;
mod image;
mod raster;

pub use camera::CameraIntrinsics;
pub use image::{DepthImage, Image, Mask, NEIGHBORS8};
pub use raster::{PixelRect, ZBuffer, NEAR_PLANE, NO_OWNER};

pub(crate) use raster::edge_owns_boundary;

use crate::geometry::{MeshModel, PointCloud, RigidTransform, Vec3};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Also mark visible pixels whose depth jumps by more than
    /// `discontinuity_fraction · d_l` to a visible neighbour.
    pub self_occlusion_boundary: bool,
    pub discontinuity_fraction: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            self_occlusion_boundary: true,
            discontinuity_fraction: 0.1,
        }
    }
}

/// Single-model render: depth, visible set `V(T)`, visible boundary `B(T)`
/// and per-pixel unit normals facing the camera.
#[derive(Clone, Debug)]
pub struct RenderResult {
    pub depth: DepthImage,
    pub visible: Mask,
    pub boundary: Mask,
    pub normals: Image<Vec3>,
    /// Bounding rectangle of the visible pixels.
    pub bbox: Option<PixelRect>,
}

impl RenderResult {
    /// Visible pixel indices in row-major order.
    pub fn visible_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.rect_pixels().filter(|&i| self.visible.data[i])
    }

    pub fn boundary_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.rect_pixels().filter(|&i| self.boundary.data[i])
    }

    fn rect_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        let w = self.depth.width;
        let (x0, y0, x1, y1) = match self.bbox {
            Some(r) => (r.x0, r.y0, r.x1 + 1, r.y1 + 1),
            None => (0, 0, 0, 0),
        };
        (y0..y1).flat_map(move |y| (x0..x1).map(move |x| y * w + x))
    }
}

fn draw_model(zbuf: &mut ZBuffer, model: &MeshModel, pose: &RigidTransform, cam: &CameraIntrinsics, owner: u32) {
    let verts: Vec<Vec3> = model.vertices().iter().map(|v| pose.apply(v)).collect();
    for t in model.triangles() {
        zbuf.draw_triangle(cam, t.map(|i| verts[i as usize]), owner);
    }
}

pub fn render_depth(model: &MeshModel, pose: &RigidTransform, cam: &CameraIntrinsics) -> Result<RenderResult> {
    render_depth_with(model, pose, cam, &RenderOptions::default())
}

pub fn render_depth_with(
    model: &MeshModel,
    pose: &RigidTransform,
    cam: &CameraIntrinsics,
    options: &RenderOptions,
) -> Result<RenderResult> {
    cam.validate()?;
    let (w, h) = (cam.width, cam.height);
    let mut zbuf = ZBuffer::new(w, h);
    draw_model(&mut zbuf, model, pose, cam, 0);
    let visible = Image {
        width: w,
        height: h,
        data: zbuf.owner.iter().map(|&o| o != NO_OWNER).collect(),
    };
    let depth = Image {
        width: w,
        height: h,
        data: zbuf.depth.iter().map(|&d| if d.is_finite() { d } else { 0.0 }).collect(),
    };
    let mut boundary = Image::filled(w, h, false);
    let threshold = options.discontinuity_fraction * model.diameter();
    if let Some(r) = zbuf.bbox {
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                let i = y * w + x;
                if !visible.data[i] {
                    continue;
                }
                let on_edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
                let is_boundary = on_edge
                    || visible.neighbors8(i).any(|j| {
                        !visible.data[j]
                            || (options.self_occlusion_boundary && (depth.data[j] - depth.data[i]).abs() > threshold)
                    });
                boundary.data[i] = is_boundary;
            }
        }
    }
    Ok(RenderResult {
        depth,
        visible,
        boundary,
        normals: Image {
            width: w,
            height: h,
            data: zbuf.normal,
        },
        bbox: zbuf.bbox,
    })
}

/// Joint render of several placed instances.
#[derive(Clone, Debug)]
pub struct SceneRender {
    pub depth: DepthImage,
    /// 0 = background, otherwise `placement index + 1`.
    pub instance_ids: Image<u32>,
    /// 0 = background, otherwise the model's class id.
    pub class_ids: Image<u32>,
    /// Object pixels with an 8-neighbour of a different instance id
    /// (background and image border included).
    pub boundary: Mask,
}

pub fn render_scene_depth(placed: &[(&MeshModel, RigidTransform)], cam: &CameraIntrinsics) -> Result<SceneRender> {
    cam.validate()?;
    let (w, h) = (cam.width, cam.height);
    let mut zbuf = ZBuffer::new(w, h);
    for (k, (model, pose)) in placed.iter().enumerate() {
        draw_model(&mut zbuf, model, pose, cam, k as u32);
    }
    let instance_ids = Image {
        width: w,
        height: h,
        data: zbuf.owner.iter().map(|&o| if o == NO_OWNER { 0 } else { o + 1 }).collect(),
    };
    let class_ids = Image {
        width: w,
        height: h,
        data: zbuf
            .owner
            .iter()
            .map(|&o| if o == NO_OWNER { 0 } else { placed[o as usize].0.class_id() })
            .collect(),
    };
    let depth = Image {
        width: w,
        height: h,
        data: zbuf.depth.iter().map(|&d| if d.is_finite() { d } else { 0.0 }).collect(),
    };
    let boundary = id_boundary(&instance_ids);
    Ok(SceneRender {
        depth,
        instance_ids,
        class_ids,
        boundary,
    })
}

/// Non-background pixels whose 8-neighbourhood contains another id.
pub fn id_boundary(ids: &Image<u32>) -> Mask {
    let (w, h) = (ids.width, ids.height);
    let mut out = Image::filled(w, h, false);
    for i in 0..ids.len() {
        let id = ids.data[i];
        if id == 0 {
            continue;
        }
        let (x, y) = ids.coords(i);
        let on_edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
        out.data[i] = on_edge || ids.neighbors8(i).any(|j| ids.data[j] != id);
    }
    out
}

/// Central-difference normals of the back-projected depth map, oriented
/// toward the camera (`n_z < 0`). Pixels touching a zero-depth neighbour or
/// the image border are `None`.
pub fn normals_from_depth(depth: &DepthImage, cam: &CameraIntrinsics) -> Image<Option<Vec3>> {
    let (w, h) = (depth.width, depth.height);
    let mut out = Image::filled(w, h, None);
    if w < 3 || h < 3 {
        return out;
    }
    let p = |x: usize, y: usize| cam.backproject_pixel(x as f64, y as f64, *depth.get(x, y));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let d = *depth.get(x, y);
            if d <= 0.0
                || *depth.get(x - 1, y) <= 0.0
                || *depth.get(x + 1, y) <= 0.0
                || *depth.get(x, y - 1) <= 0.0
                || *depth.get(x, y + 1) <= 0.0
            {
                continue;
            }
            let dx = p(x + 1, y) - p(x - 1, y);
            let dy = p(x, y + 1) - p(x, y - 1);
            let n = dx.cross(&dy);
            let len = n.norm();
            if len <= 0.0 || !len.is_finite() {
                continue;
            }
            let n = if n.z > 0.0 { -n / len } else { n / len };
            out.set(x, y, Some(n));
        }
    }
    out
}

/// Back-projects valid pixels (depth > 0, inside `mask` when given, with a
/// defined depth normal) to a camera-frame cloud with pixel origins.
pub fn backproject(depth: &DepthImage, cam: &CameraIntrinsics, mask: Option<&Mask>) -> PointCloud {
    let normals = normals_from_depth(depth, cam);
    backproject_with_normals(depth, &normals, cam, mask)
}

pub fn backproject_with_normals(
    depth: &DepthImage,
    normals: &Image<Option<Vec3>>,
    cam: &CameraIntrinsics,
    mask: Option<&Mask>,
) -> PointCloud {
    let mut cloud = PointCloud {
        pixel_origin: Some(Vec::new()),
        ..Default::default()
    };
    for i in 0..depth.len() {
        let d = depth.data[i];
        if d <= 0.0 || mask.is_some_and(|m| !m.data[i]) {
            continue;
        }
        let Some(n) = normals.data[i] else { continue };
        let (x, y) = depth.coords(i);
        cloud.points.push(cam.backproject_pixel(x as f64, y as f64, d));
        cloud.normals.push(n);
        if let Some(px) = cloud.pixel_origin.as_mut() {
            px.push((y as u32, x as u32));
        }
    }
    cloud
}
