use super::Vec3;

/// Uniform grid over a point set for nearest-neighbour and radius queries.
///
/// Cells are stored densely over the bounding box in CSR layout, so the
/// grid is cheap to build and query for the few-thousand-point clouds this
/// crate deals with.
#[derive(Clone, Debug)]
pub struct PointGrid {
    points: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    indices: Vec<u32>,
}

impl PointGrid {
    pub fn new(points: Vec<Vec3>, cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell size must be positive");
        if points.is_empty() {
            return PointGrid {
                points,
                origin: Vec3::zeros(),
                cell,
                dims: [1, 1, 1],
                cell_start: vec![0, 0],
                indices: Vec::new(),
            };
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        // Cap the cell count so pathological extents cannot blow up memory.
        let mut cell = cell;
        loop {
            let n: f64 = (0..3).map(|k| ((hi[k] - lo[k]) / cell).floor() + 1.0).product();
            if n <= 4.0e6 {
                break;
            }
            cell *= 2.0;
        }
        let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k]) / cell).floor() as usize + 1);
        let ncell = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; ncell + 1];
        let keys: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = [0, 1, 2].map(|k| (((p[k] - lo[k]) / cell).floor() as usize).min(dims[k] - 1));
                (c[2] * dims[1] + c[1]) * dims[0] + c[0]
            })
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut indices = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            indices[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        PointGrid {
            points,
            origin: lo,
            cell,
            dims,
            cell_start: counts,
            indices,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_coord(&self, q: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|k| (((q[k] - self.origin[k]) / self.cell).floor() as i64).clamp(-(1 << 40), 1 << 40))
    }

    fn cell_points(&self, c: [i64; 3]) -> &[u32] {
        for k in 0..3 {
            if c[k] < 0 || c[k] >= self.dims[k] as i64 {
                return &[];
            }
        }
        let idx = (c[2] as usize * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize;
        &self.indices[self.cell_start[idx] as usize..self.cell_start[idx + 1] as usize]
    }

    /// Visits every point within the axis-aligned cell block covering the
    /// sphere `(q, radius)`.
    fn for_each_candidate(&self, q: &Vec3, radius: f64, mut f: impl FnMut(u32) -> bool) {
        let lo = self.cell_coord(&(q - Vec3::repeat(radius)));
        let hi = self.cell_coord(&(q + Vec3::repeat(radius)));
        let clamp_lo = |k: usize| lo[k].max(0);
        let clamp_hi = |k: usize| hi[k].min(self.dims[k] as i64 - 1);
        for z in clamp_lo(2)..=clamp_hi(2) {
            for y in clamp_lo(1)..=clamp_hi(1) {
                for x in clamp_lo(0)..=clamp_hi(0) {
                    for &i in self.cell_points([x, y, z]) {
                        if !f(i) {
                            return;
                        }
                    }
                }
            }
        }
    }

    pub fn any_within(&self, q: &Vec3, radius: f64) -> bool {
        let r2 = radius * radius;
        let mut found = false;
        self.for_each_candidate(q, radius, |i| {
            if (self.points[i as usize] - q).norm_squared() <= r2 {
                found = true;
                return false;
            }
            true
        });
        found
    }

    /// Calls `f(index)` for every point within `radius` of `q`.
    pub fn for_each_within(&self, q: &Vec3, radius: f64, mut f: impl FnMut(usize)) {
        let r2 = radius * radius;
        self.for_each_candidate(q, radius, |i| {
            if (self.points[i as usize] - q).norm_squared() <= r2 {
                f(i as usize);
            }
            true
        });
    }

    /// Nearest point within `radius`, as `(index, distance)`.
    pub fn nearest_within(&self, q: &Vec3, radius: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let r2 = radius * radius;
        self.for_each_candidate(q, radius, |i| {
            let i = i as usize;
            let d2 = (self.points[i] - q).norm_squared();
            if d2 <= r2 && best.is_none_or(|(b, bd2)| d2 < bd2 || (d2 == bd2 && i < b)) {
                best = Some((i, d2));
            }
            true
        });
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// Exact nearest neighbour (no radius limit).
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = self.cell_coord(q);
        let dims = self.dims.map(|d| d as i64);
        // Chebyshev ring range (in cells) that can contain grid cells.
        let first = (0..3).map(|k| (-c[k]).max(c[k] - (dims[k] - 1)).max(0)).max().unwrap();
        let last = (0..3).map(|k| c[k].max(dims[k] - 1 - c[k])).max().unwrap();
        let mut best: Option<(usize, f64)> = None;
        for ring in first..=last {
            let span = |k: usize| (c[k] - ring).max(0)..=(c[k] + ring).min(dims[k] - 1);
            for z in span(2) {
                for y in span(1) {
                    for x in span(0) {
                        let on_shell = (x - c[0]).abs() == ring
                            || (y - c[1]).abs() == ring
                            || (z - c[2]).abs() == ring;
                        if !on_shell {
                            continue;
                        }
                        for &i in self.cell_points([x, y, z]) {
                            let d = (self.points[i as usize] - q).norm();
                            if best.is_none_or(|(b, bd)| d < bd || (d == bd && (i as usize) < b)) {
                                best = Some((i as usize, d));
                            }
                        }
                    }
                }
            }
            // Everything outside rings 0..=ring is at least ring*cell away.
            if let Some((_, bd)) = best {
                if bd <= ring as f64 * self.cell {
                    break;
                }
            }
        }
        best
    }
}
