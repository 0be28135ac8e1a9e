use std::collections::VecDeque;

use crate::render::NEIGHBORS8;
use crate::scenegen::PredictionMaps;

/// 8-connected pixel grid with every edge touching a likely boundary pixel
/// removed. Stored as a per-pixel "blocked" flag: an edge `(p, q)` exists
/// iff the pixels are 8-adjacent and neither is blocked.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGraph {
    pub width: usize,
    pub height: usize,
    blocked: Vec<bool>,
}

impl PixelGraph {
    /// Grid with no edges removed.
    pub fn full(width: usize, height: usize) -> Self {
        PixelGraph {
            width,
            height,
            blocked: vec![false; width * height],
        }
    }

    pub fn from_blocked(width: usize, height: usize, blocked: Vec<bool>) -> Self {
        assert_eq!(blocked.len(), width * height);
        PixelGraph { width, height, blocked }
    }

    pub fn len(&self) -> usize {
        self.blocked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocked.is_empty()
    }

    pub fn is_blocked(&self, p: usize) -> bool {
        self.blocked[p]
    }

    pub fn has_edge(&self, p: usize, q: usize) -> bool {
        if p == q || self.blocked[p] || self.blocked[q] {
            return false;
        }
        let (px, py) = ((p % self.width) as isize, (p / self.width) as isize);
        let (qx, qy) = ((q % self.width) as isize, (q / self.width) as isize);
        (px - qx).abs() <= 1 && (py - qy).abs() <= 1
    }

    pub fn neighbors(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = ((p % self.width) as isize, (p / self.width) as isize);
        let live = !self.blocked[p];
        NEIGHBORS8.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if !live || nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
                return None;
            }
            let q = ny as usize * self.width + nx as usize;
            (!self.blocked[q]).then_some(q)
        })
    }

    pub fn edge_count(&self) -> usize {
        (0..self.len()).map(|p| self.neighbors(p).count()).sum::<usize>() / 2
    }
}

/// Removes every edge incident to a pixel with `P_B ≥ delta`.
pub fn build_pixel_graph(maps: &PredictionMaps, delta: f64) -> PixelGraph {
    let blocked = (0..maps.pixel_count()).map(|p| maps.boundary_prob(p) >= delta).collect();
    PixelGraph::from_blocked(maps.width, maps.height, blocked)
}

/// Hop count of the shortest path, or `None` when unreachable.
pub fn shortest_path_length(graph: &PixelGraph, from: usize, to: usize) -> Option<usize> {
    if from == to {
        return Some(0);
    }
    let mut dist = vec![u32::MAX; graph.len()];
    let mut queue = VecDeque::from([from]);
    dist[from] = 0;
    while let Some(p) = queue.pop_front() {
        for q in graph.neighbors(p) {
            if dist[q] == u32::MAX {
                dist[q] = dist[p] + 1;
                if q == to {
                    return Some(dist[q] as usize);
                }
                queue.push_back(q);
            }
        }
    }
    None
}

/// Reusable bounded breadth-first search. Visited marks are generation
/// stamps, so a search costs time proportional to what it reaches rather
/// than to the image size.
#[derive(Clone, Debug, Default)]
pub struct Bfs {
    stamp: Vec<u32>,
    dist: Vec<u32>,
    generation: u32,
    reached: Vec<usize>,
}

impl Bfs {
    pub fn new(pixels: usize) -> Self {
        Bfs {
            stamp: vec![0; pixels],
            dist: vec![0; pixels],
            generation: 0,
            reached: Vec::new(),
        }
    }

    /// Visits every pixel within `max_hops` of `start`, in BFS order.
    pub fn run(&mut self, graph: &PixelGraph, start: usize, max_hops: usize) -> &[usize] {
        if self.stamp.len() != graph.len() {
            *self = Bfs::new(graph.len());
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
        let g = self.generation;
        self.reached.clear();
        self.reached.push(start);
        self.stamp[start] = g;
        self.dist[start] = 0;
        let mut head = 0;
        while head < self.reached.len() {
            let p = self.reached[head];
            head += 1;
            let d = self.dist[p];
            if d as usize >= max_hops {
                continue;
            }
            for q in graph.neighbors(p) {
                if self.stamp[q] != g {
                    self.stamp[q] = g;
                    self.dist[q] = d + 1;
                    self.reached.push(q);
                }
            }
        }
        &self.reached
    }

    /// Hop distance from the last search's start, if reached.
    pub fn distance(&self, p: usize) -> Option<usize> {
        (self.stamp[p] == self.generation && self.generation != 0).then(|| self.dist[p] as usize)
    }

    pub fn reached(&self) -> &[usize] {
        &self.reached
    }
}
