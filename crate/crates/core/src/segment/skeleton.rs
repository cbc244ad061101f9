use std::collections::VecDeque;

use super::{Point, PointSet, SegmentError};

/// Minimal disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub(crate) fn sets(&self) -> usize {
        self.sets
    }
}

/// An enclosed complement region of the rasterized skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
}

/// The beta-skeleton at one radius: vertices, edges and the pixel faces they
/// enclose, with the four counts that enter the Betti number.
#[derive(Clone, Debug)]
pub struct SkeletonComplex {
    beta: f64,
    vertex_count: usize,
    points: Option<PointSet>,
    edges: Vec<(usize, usize)>,
    faces: Vec<Face>,
    skeleton_mask: Vec<bool>,
    face_of_pixel: Vec<Option<usize>>,
    component_count: usize,
}

impl SkeletonComplex {
    /// Abstract graph with no geometry, hence no faces. Edges are stored with
    /// the smaller index first; self-loops, duplicates and out-of-range
    /// endpoints are rejected.
    pub fn from_graph(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self, SegmentError> {
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(SegmentError::MalformedComplex(format!("self-loop at vertex {a}")));
            }
            if a.max(b) >= vertex_count {
                return Err(SegmentError::MalformedComplex(format!(
                    "edge ({a}, {b}) references a missing vertex"
                )));
            }
            norm.push((a.min(b), a.max(b)));
        }
        let mut sorted = norm.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(SegmentError::MalformedComplex(format!("duplicate edge {:?}", w[0])));
        }
        let component_count = count_components(vertex_count, &norm);
        Ok(Self {
            beta: 0.0,
            vertex_count,
            points: None,
            edges: norm,
            faces: Vec::new(),
            skeleton_mask: Vec::new(),
            face_of_pixel: Vec::new(),
            component_count,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn points(&self) -> Option<&PointSet> {
        self.points.as_ref()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Pixels covered by rasterized vertices and edges; empty for abstract graphs.
    pub fn skeleton_mask(&self) -> &[bool] {
        &self.skeleton_mask
    }

    /// Face index per pixel, `None` on the skeleton and unenclosed background.
    pub fn face_of_pixel(&self) -> &[Option<usize>] {
        &self.face_of_pixel
    }

    /// O: connected components of the vertex/edge graph.
    pub fn component_count(&self) -> usize {
        self.component_count
    }

    /// E: vertices.
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// D: edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// A: enclosed faces.
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
}

fn count_components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut uf = UnionFind::new(n);
    for &(a, b) in edges {
        uf.union(a, b);
    }
    uf.sets()
}

/// Uniform bucket grid over point coordinates.
pub(crate) struct PointGrid<'a> {
    points: &'a [Point],
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    pub(crate) fn new(points: &'a [Point], width: usize, height: usize, cell: f64) -> Self {
        let cell = cell.max(0.5);
        // coordinates live in [-0.5, dim - 0.5]
        let cols = ((width as f64 + 1.0) / cell).ceil() as usize + 1;
        let rows = ((height as f64 + 1.0) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        let mut grid = Self {
            points,
            cell,
            cols,
            rows,
            buckets: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (cx, cy) = grid.cell_of(p.x, p.y);
            buckets[cy * cols + cx].push(i);
        }
        grid.buckets = buckets;
        grid
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = (((x + 0.5) / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let cy = (((y + 0.5) / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        (cx, cy)
    }

    /// Indices of points in cells within `reach` cells of `(x, y)`.
    fn around(&self, x: f64, y: f64, reach: usize) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.cell_of(x, y);
        let x0 = cx.saturating_sub(reach);
        let x1 = (cx + reach).min(self.cols - 1);
        let y0 = cy.saturating_sub(reach);
        let y1 = (cy + reach).min(self.rows - 1);
        (y0..=y1).flat_map(move |gy| {
            (x0..=x1).flat_map(move |gx| self.buckets[gy * self.cols + gx].iter().copied())
        })
    }

    /// Euclidean distance from `(x, y)` to the nearest point, `inf` if none.
    pub(crate) fn nearest_distance(&self, x: f64, y: f64) -> f64 {
        if self.points.is_empty() {
            return f64::INFINITY;
        }
        let (cx, cy) = self.cell_of(x, y);
        let max_reach = self.cols.max(self.rows);
        let mut best = f64::INFINITY;
        for reach in 0..=max_reach {
            // ring at `reach` only
            let x0 = cx as isize - reach as isize;
            let x1 = cx as isize + reach as isize;
            let y0 = cy as isize - reach as isize;
            let y1 = cy as isize + reach as isize;
            for gy in y0..=y1 {
                for gx in x0..=x1 {
                    let on_ring = gy == y0 || gy == y1 || gx == x0 || gx == x1;
                    if !on_ring || gx < 0 || gy < 0 || gx as usize >= self.cols || gy as usize >= self.rows {
                        continue;
                    }
                    for &i in &self.buckets[gy as usize * self.cols + gx as usize] {
                        let p = self.points[i];
                        best = best.min((p.x - x).powi(2) + (p.y - y).powi(2));
                    }
                }
            }
            // every unvisited cell is at least `reach * cell` away
            let bound = reach as f64 * self.cell;
            if best <= bound * bound {
                break;
            }
        }
        best.sqrt()
    }
}

/// Edge rule: `dist(r, s) <= 2 beta` and no third point strictly inside both
/// radius-`beta` discs around `r` and `s`.
pub(crate) fn skeleton_edges(points: &PointSet, beta: f64) -> Vec<(usize, usize)> {
    if beta.is_nan() || beta <= 0.0 {
        return Vec::new();
    }
    let pts = points.points();
    let grid = PointGrid::new(pts, points.width(), points.height(), 2.0 * beta);
    let reach2 = 4.0 * beta * beta;
    let b2 = beta * beta;
    let mut edges = Vec::new();
    let mut near: Vec<usize> = Vec::new();
    for (i, r) in pts.iter().enumerate() {
        near.clear();
        near.extend(grid.around(r.x, r.y, 1));
        near.sort_unstable();
        for &j in near.iter().filter(|&&j| j > i) {
            let s = pts[j];
            if r.dist2(&s) > reach2 {
                continue;
            }
            // lens points are within beta of r, so within the same neighbourhood
            let blocked = near.iter().any(|&k| {
                k != i && k != j && r.dist2(&pts[k]) < b2 && s.dist2(&pts[k]) < b2
            });
            if !blocked {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Pixel containing a point (nearest pixel centre, clamped to the raster).
pub(crate) fn pixel_of(p: &Point, width: usize, height: usize) -> (usize, usize) {
    let x = (p.x.round() as isize).clamp(0, width as isize - 1) as usize;
    let y = (p.y.round() as isize).clamp(0, height as isize - 1) as usize;
    (x, y)
}

/// Bresenham line between two pixels, endpoints included.
pub(crate) fn bresenham(a: (usize, usize), b: (usize, usize), mut plot: impl FnMut(usize, usize)) {
    let (mut x0, mut y0) = (a.0 as isize, a.1 as isize);
    let (x1, y1) = (b.0 as isize, b.1 as isize);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x0 as usize, y0 as usize);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub(crate) fn rasterize(points: &PointSet, edges: &[(usize, usize)]) -> Vec<bool> {
    let (w, h) = (points.width(), points.height());
    let mut mask = vec![false; w * h];
    let pix: Vec<(usize, usize)> = points.points().iter().map(|p| pixel_of(p, w, h)).collect();
    for &(x, y) in &pix {
        mask[y * w + x] = true;
    }
    for &(a, b) in edges {
        bresenham(pix[a], pix[b], |x, y| mask[y * w + x] = true);
    }
    mask
}

/// 4-connected components of the non-skeleton pixels that do not touch the
/// raster border, in scan order of their first pixel.
pub(crate) fn enclosed_faces(mask: &[bool], width: usize, height: usize) -> (Vec<Face>, Vec<Option<usize>>) {
    let mut seen = vec![false; mask.len()];
    let mut face_of = vec![None; mask.len()];
    let mut faces = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let mut touches_border = false;
        while let Some(i) = queue.pop_front() {
            pixels.push(i);
            let (x, y) = (i % width, i / width);
            if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
                touches_border = true;
            }
            let mut visit = |j: usize| {
                if !mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        if !touches_border {
            pixels.sort_unstable();
            for &p in &pixels {
                face_of[p] = Some(faces.len());
            }
            faces.push(Face { pixels });
        }
    }
    (faces, face_of)
}

/// Builds `R_beta`: edges by the lens rule, then faces by rasterizing the
/// edges one pixel wide and flood-filling the complement.
pub fn build_beta_skeleton(points: &PointSet, beta: f64) -> SkeletonComplex {
    let edges = skeleton_edges(points, beta);
    let mask = rasterize(points, &edges);
    let (faces, face_of_pixel) = enclosed_faces(&mask, points.width(), points.height());
    let component_count = count_components(points.len(), &edges);
    SkeletonComplex {
        beta,
        vertex_count: points.len(),
        points: Some(points.clone()),
        edges,
        faces,
        skeleton_mask: mask,
        face_of_pixel,
        component_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::rng_from_seed;
    use rand::Rng;

    fn pts(width: usize, height: usize, coords: &[(f64, f64)]) -> PointSet {
        PointSet::new(width, height, coords.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    /// O(n^3) restatement of the edge rule.
    fn brute_edges(p: &PointSet, beta: f64) -> Vec<(usize, usize)> {
        let v = p.points();
        let mut out = Vec::new();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let d = ((v[i].x - v[j].x).powi(2) + (v[i].y - v[j].y).powi(2)).sqrt();
                if beta <= 0.0 || d > 2.0 * beta {
                    continue;
                }
                let lens_empty = (0..v.len()).filter(|&k| k != i && k != j).all(|k| {
                    let di = ((v[k].x - v[i].x).powi(2) + (v[k].y - v[i].y).powi(2)).sqrt();
                    let dj = ((v[k].x - v[j].x).powi(2) + (v[k].y - v[j].y).powi(2)).sqrt();
                    !(di < beta && dj < beta)
                });
                if lens_empty {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn zero_beta_has_no_edges() {
        let p = pts(10, 10, &[(1.0, 1.0), (2.0, 1.0), (5.0, 5.0)]);
        let c = build_beta_skeleton(&p, 0.0);
        assert_eq!(c.edge_count(), 0);
        assert_eq!(c.component_count(), 3);
        assert_eq!(c.face_count(), 0);
    }

    #[test]
    fn pair_within_two_beta() {
        let p = pts(10, 10, &[(1.0, 1.0), (2.9, 1.0)]);
        assert_eq!(build_beta_skeleton(&p, 1.0).edges(), &[(0, 1)]);
    }

    #[test]
    fn collinear_middle_point_blocks_long_edge() {
        let p = pts(10, 10, &[(2.0, 2.0), (3.0, 2.0), (4.0, 2.0)]);
        let c = build_beta_skeleton(&p, 1.05);
        assert_eq!(c.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(brute_edges(&p, 1.05), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn grid_search_matches_brute_force() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            let n = rng.random_range(5..60);
            let coords: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0.0..31.0), rng.random_range(0.0..31.0)))
                .collect();
            let p = pts(32, 32, &coords);
            let beta = rng.random_range(0.5..6.0);
            assert_eq!(skeleton_edges(&p, beta), brute_edges(&p, beta));
        }
    }

    #[test]
    fn ring_encloses_one_face() {
        let coords: Vec<(f64, f64)> = (0..24)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 24.0;
                (16.0 + 8.0 * a.cos(), 16.0 + 8.0 * a.sin())
            })
            .collect();
        let c = build_beta_skeleton(&pts(32, 32, &coords), 1.5);
        assert_eq!(c.edge_count(), 24);
        assert_eq!(c.face_count(), 1);
        assert_eq!(c.component_count(), 1);
        let centre = 16 * 32 + 16;
        assert_eq!(c.face_of_pixel()[centre], Some(0));
    }

    #[test]
    fn from_graph_rejects_malformed_edges() {
        assert!(SkeletonComplex::from_graph(3, &[(1, 1)]).is_err());
        assert!(SkeletonComplex::from_graph(3, &[(0, 1), (1, 0)]).is_err());
        assert!(SkeletonComplex::from_graph(3, &[(0, 3)]).is_err());
        let g = SkeletonComplex::from_graph(4, &[(2, 1), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(1, 2), (0, 1)]);
        assert_eq!(g.component_count(), 2);
    }

    #[test]
    fn nearest_distance_matches_scan() {
        let mut rng = rng_from_seed(8);
        let coords: Vec<(f64, f64)> = (0..40)
            .map(|_| (rng.random_range(0.0..40.0), rng.random_range(0.0..30.0)))
            .collect();
        let p = pts(41, 31, &coords);
        let grid = PointGrid::new(p.points(), 41, 31, 2.0);
        for _ in 0..200 {
            let (x, y) = (rng.random_range(0.0..41.0), rng.random_range(0.0..31.0));
            let scan = p
                .points()
                .iter()
                .map(|q| ((q.x - x).powi(2) + (q.y - y).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!((grid.nearest_distance(x, y) - scan).abs() < 1e-12);
        }
    }
}
