use crate::geometry::{MeshModel, RigidTransform, Vec3};

/// Number of sample columns per voxel edge. Each column stores exact
/// z-intervals, so only the x/y footprint is discretized.
pub const COLUMN_SUBDIVISION: usize = 2;

/// Solid occupancy of a placed model as z-intervals over a world-aligned
/// grid of vertical sample columns.
///
/// Column `(ix, iy)` samples the vertical line through
/// `((ix + 0.5)·h, (iy + 0.5)·h)`. Because every shape uses the same world
/// lattice, two shapes built with equal `h` can be intersected column by
/// column.
#[derive(Clone, Debug)]
pub struct ColumnOccupancy {
    spacing: f64,
    ix0: i64,
    iy0: i64,
    nx: usize,
    ny: usize,
    offsets: Vec<u32>,
    intervals: Vec<(f64, f64)>,
    shell: bool,
    lo: Vec3,
    hi: Vec3,
}

impl ColumnOccupancy {
    /// Voxelizes `model` placed at `pose`. Non-watertight models (and any
    /// column with an odd number of surface crossings) fall back to a shell
    /// of thickness `spacing` around each crossing.
    pub fn new(model: &MeshModel, pose: &RigidTransform, spacing: f64) -> Self {
        assert!(spacing > 0.0, "column spacing must be positive");
        let verts: Vec<Vec3> = model.vertices().iter().map(|v| pose.apply(v)).collect();
        let (lo, hi) = model.world_bounds(pose);
        let ix0 = (lo.x / spacing - 0.5).ceil() as i64;
        let ix1 = (hi.x / spacing - 0.5).floor() as i64;
        let iy0 = (lo.y / spacing - 0.5).ceil() as i64;
        let iy1 = (hi.y / spacing - 0.5).floor() as i64;
        let nx = (ix1 - ix0 + 1).max(0) as usize;
        let ny = (iy1 - iy0 + 1).max(0) as usize;
        let mut shape = ColumnOccupancy {
            spacing,
            ix0,
            iy0,
            nx,
            ny,
            offsets: vec![0; nx * ny + 1],
            intervals: Vec::new(),
            shell: !model.is_watertight(),
            lo,
            hi,
        };
        if nx == 0 || ny == 0 {
            return shape;
        }
        let mut crossings: Vec<(u32, f64)> = Vec::new();
        for t in model.triangles() {
            shape.rasterize(t.map(|i| verts[i as usize]), &mut crossings);
        }
        crossings.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut start = 0;
        let mut col = 0usize;
        while col < nx * ny {
            let mut end = start;
            while end < crossings.len() && crossings[end].0 as usize == col {
                end += 1;
            }
            let zs: Vec<f64> = crossings[start..end].iter().map(|c| c.1).collect();
            if !shape.shell && zs.len() % 2 == 0 {
                for pair in zs.chunks(2) {
                    shape.intervals.push((pair[0], pair[1]));
                }
            } else {
                push_shell(&mut shape.intervals, &zs, spacing / 2.0);
                if !zs.is_empty() {
                    shape.shell = true;
                }
            }
            shape.offsets[col + 1] = shape.intervals.len() as u32;
            start = end;
            col += 1;
        }
        shape
    }

    fn rasterize(&self, tri: [Vec3; 3], out: &mut Vec<(u32, f64)>) {
        let h = self.spacing;
        let (mut a, mut b, c) = (tri[0], tri[1], tri[2]);
        let mut area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if area == 0.0 {
            return;
        }
        if area < 0.0 {
            std::mem::swap(&mut a, &mut b);
            area = -area;
        }
        let min_x = a.x.min(b.x).min(c.x);
        let max_x = a.x.max(b.x).max(c.x);
        let min_y = a.y.min(b.y).min(c.y);
        let max_y = a.y.max(b.y).max(c.y);
        let cx0 = ((min_x / h - 0.5).ceil() as i64).max(self.ix0);
        let cx1 = ((max_x / h - 0.5).floor() as i64).min(self.ix0 + self.nx as i64 - 1);
        let cy0 = ((min_y / h - 0.5).ceil() as i64).max(self.iy0);
        let cy1 = ((max_y / h - 0.5).floor() as i64).min(self.iy0 + self.ny as i64 - 1);
        let own = |p: &Vec3, q: &Vec3| crate::render::edge_owns_boundary(q.x - p.x, q.y - p.y);
        let (own_bc, own_ca, own_ab) = (own(&b, &c), own(&c, &a), own(&a, &b));
        let edge = |p: &Vec3, q: &Vec3, x: f64, y: f64| (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
        let inside = |e: f64, owns: bool| e > 0.0 || (e == 0.0 && owns);
        for iy in cy0..=cy1 {
            let y = (iy as f64 + 0.5) * h;
            for ix in cx0..=cx1 {
                let x = (ix as f64 + 0.5) * h;
                let w0 = edge(&b, &c, x, y);
                let w1 = edge(&c, &a, x, y);
                let w2 = edge(&a, &b, x, y);
                if inside(w0, own_bc) && inside(w1, own_ca) && inside(w2, own_ab) {
                    let z = (w0 * a.z + w1 * b.z + w2 * c.z) / area;
                    let col = (iy - self.iy0) as usize * self.nx + (ix - self.ix0) as usize;
                    out.push((col as u32, z));
                }
            }
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// True when any column was built from the surface-shell fallback.
    pub fn is_shell(&self) -> bool {
        self.shell
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        (self.lo, self.hi)
    }

    fn column(&self, ix: i64, iy: i64) -> &[(f64, f64)] {
        let (cx, cy) = (ix - self.ix0, iy - self.iy0);
        if cx < 0 || cy < 0 || cx >= self.nx as i64 || cy >= self.ny as i64 {
            return &[];
        }
        let k = cy as usize * self.nx + cx as usize;
        &self.intervals[self.offsets[k] as usize..self.offsets[k + 1] as usize]
    }

    pub fn volume(&self) -> f64 {
        let len: f64 = self.intervals.iter().map(|(a, b)| b - a).sum();
        len * self.spacing * self.spacing
    }

    /// Shifts the shape along +z without re-voxelizing.
    pub fn translate_z(&mut self, dz: f64) {
        for iv in &mut self.intervals {
            iv.0 += dz;
            iv.1 += dz;
        }
        self.lo.z += dz;
        self.hi.z += dz;
    }

    /// Shared volume with another shape built on the same lattice.
    pub fn overlap(&self, other: &ColumnOccupancy) -> f64 {
        assert_eq!(self.spacing, other.spacing, "shapes must share a column lattice");
        let x0 = self.ix0.max(other.ix0);
        let x1 = (self.ix0 + self.nx as i64).min(other.ix0 + other.nx as i64);
        let y0 = self.iy0.max(other.iy0);
        let y1 = (self.iy0 + self.ny as i64).min(other.iy0 + other.ny as i64);
        let mut len = 0.0;
        for iy in y0..y1 {
            for ix in x0..x1 {
                len += intersect_length(self.column(ix, iy), other.column(ix, iy));
            }
        }
        len * self.spacing * self.spacing
    }

    /// Largest downward (+z) shift before this shape touches `other`,
    /// considering only material of `other` that lies fully below this
    /// shape's intervals in each shared column. `None` if no column
    /// constrains the motion.
    pub fn clearance_below(&self, other: &ColumnOccupancy) -> Option<f64> {
        let x0 = self.ix0.max(other.ix0);
        let x1 = (self.ix0 + self.nx as i64).min(other.ix0 + other.nx as i64);
        let y0 = self.iy0.max(other.iy0);
        let y1 = (self.iy0 + self.ny as i64).min(other.iy0 + other.ny as i64);
        let mut best: Option<f64> = None;
        for iy in y0..y1 {
            for ix in x0..x1 {
                let mine = self.column(ix, iy);
                let Some(bottom) = mine.iter().map(|iv| iv.1).reduce(f64::max) else {
                    continue;
                };
                for iv in other.column(ix, iy) {
                    if iv.0 >= bottom {
                        let gap = iv.0 - bottom;
                        best = Some(best.map_or(gap, |b: f64| b.min(gap)));
                    }
                }
            }
        }
        best
    }
}

fn push_shell(out: &mut Vec<(f64, f64)>, zs: &[f64], half: f64) {
    let mut cur: Option<(f64, f64)> = None;
    for &z in zs {
        let iv = (z - half, z + half);
        cur = match cur {
            Some((a, b)) if iv.0 <= b => Some((a, b.max(iv.1))),
            Some(prev) => {
                out.push(prev);
                Some(iv)
            }
            None => Some(iv),
        };
    }
    out.extend(cur);
}

fn intersect_length(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut len = 0.0;
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            len += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    len
}

/// Result of a pairwise overlap query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Overlap {
    pub volume: f64,
    /// Either model had to be voxelized as a surface shell.
    pub shell_fallback: bool,
}

pub fn boxes_intersect(a: &(Vec3, Vec3), b: &(Vec3, Vec3)) -> bool {
    (0..3).all(|k| a.0[k] <= b.1[k] && b.0[k] <= a.1[k])
}

/// Overlap volume of two placed models, voxelized at `voxel` (the sample
/// columns are `voxel / COLUMN_SUBDIVISION` apart). Disjoint bounding boxes
/// short-circuit to zero.
pub fn pairwise_overlap_volume(
    m1: &MeshModel,
    t1: &RigidTransform,
    m2: &MeshModel,
    t2: &RigidTransform,
    voxel: f64,
) -> Overlap {
    let shell_fallback = !m1.is_watertight() || !m2.is_watertight();
    if !boxes_intersect(&m1.world_bounds(t1), &m2.world_bounds(t2)) {
        return Overlap {
            volume: 0.0,
            shell_fallback,
        };
    }
    let h = voxel / COLUMN_SUBDIVISION as f64;
    let a = ColumnOccupancy::new(m1, t1, h);
    let b = ColumnOccupancy::new(m2, t2, h);
    Overlap {
        volume: a.overlap(&b),
        shell_fallback: a.is_shell() || b.is_shell(),
    }
}
