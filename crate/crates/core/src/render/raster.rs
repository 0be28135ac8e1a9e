use crate::geometry::Vec3;

use super::CameraIntrinsics;

/// Minimum camera-frame depth for a vertex to be rasterized.
pub const NEAR_PLANE: f64 = 1e-3;

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn include(self, x: usize, y: usize) -> PixelRect {
        PixelRect {
            x0: self.x0.min(x),
            y0: self.y0.min(y),
            x1: self.x1.max(x),
            y1: self.y1.max(y),
        }
    }

    /// Grown by `margin` pixels, clipped to a `width`×`height` image.
    pub fn expand(self, margin: usize, width: usize, height: usize) -> PixelRect {
        PixelRect {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width - 1),
            y1: (self.y1 + margin).min(height - 1),
        }
    }
}

/// Top-left fill convention: a pixel exactly on an edge belongs to the
/// triangle only for "top" or "left" edges, so pixels on an edge shared by
/// two triangles are covered exactly once.
#[inline]
pub(crate) fn edge_owns_boundary(dx: f64, dy: f64) -> bool {
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Depth buffer with per-pixel owner id and surface normal.
#[derive(Clone, Debug)]
pub struct ZBuffer {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub owner: Vec<u32>,
    pub normal: Vec<Vec3>,
    pub bbox: Option<PixelRect>,
}

pub const NO_OWNER: u32 = u32::MAX;

impl ZBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ZBuffer {
            width,
            height,
            depth: vec![f64::INFINITY; width * height],
            owner: vec![NO_OWNER; width * height],
            normal: vec![Vec3::zeros(); width * height],
            bbox: None,
        }
    }

    /// Rasterizes one camera-frame triangle with perspective-correct depth.
    /// Triangles with a vertex at or behind the near plane are skipped.
    pub fn draw_triangle(&mut self, cam: &CameraIntrinsics, tri: [Vec3; 3], owner: u32) {
        if tri.iter().any(|v| v.z <= NEAR_PLANE) {
            return;
        }
        let mut n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        let len = n.norm();
        if len == 0.0 {
            return;
        }
        n /= len;
        if n.dot(&tri[0]) > 0.0 {
            n = -n;
        }
        let s = tri.map(|v| cam.project(&v).expect("vertex in front of camera"));
        let (a, mut b, mut c) = (0usize, 1usize, 2usize);
        let mut area = edge(s[a].0, s[a].1, s[b].0, s[b].1, s[c].0, s[c].1);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            std::mem::swap(&mut b, &mut c);
            area = -area;
        }
        let (pa, pb, pc) = (s[a], s[b], s[c]);
        let inv_z = [1.0 / tri[a].z, 1.0 / tri[b].z, 1.0 / tri[c].z];
        let min_x = pa.0.min(pb.0).min(pc.0).ceil().max(0.0);
        let max_x = pa.0.max(pb.0).max(pc.0).floor().min(self.width as f64 - 1.0);
        let min_y = pa.1.min(pb.1).min(pc.1).ceil().max(0.0);
        let max_y = pa.1.max(pb.1).max(pc.1).floor().min(self.height as f64 - 1.0);
        if min_x > max_x || min_y > max_y {
            return;
        }
        let own_bc = edge_owns_boundary(pc.0 - pb.0, pc.1 - pb.1);
        let own_ca = edge_owns_boundary(pa.0 - pc.0, pa.1 - pc.1);
        let own_ab = edge_owns_boundary(pb.0 - pa.0, pb.1 - pa.1);
        let inside = |e: f64, owns: bool| e > 0.0 || (e == 0.0 && owns);
        for y in min_y as usize..=max_y as usize {
            let py = y as f64;
            for x in min_x as usize..=max_x as usize {
                let px = x as f64;
                let w0 = edge(pb.0, pb.1, pc.0, pc.1, px, py);
                let w1 = edge(pc.0, pc.1, pa.0, pa.1, px, py);
                let w2 = edge(pa.0, pa.1, pb.0, pb.1, px, py);
                if !(inside(w0, own_bc) && inside(w1, own_ca) && inside(w2, own_ab)) {
                    continue;
                }
                let iz = (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]) / area;
                let z = 1.0 / iz;
                let idx = y * self.width + x;
                if z < self.depth[idx] {
                    self.depth[idx] = z;
                    self.owner[idx] = owner;
                    self.normal[idx] = n;
                    self.bbox = Some(match self.bbox {
                        Some(r) => r.include(x, y),
                        None => PixelRect {
                            x0: x,
                            y0: y,
                            x1: x,
                            y1: y,
                        },
                    });
                }
            }
        }
    }
}
