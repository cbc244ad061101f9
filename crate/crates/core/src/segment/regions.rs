use std::collections::BTreeMap;

use super::skeleton::{build_beta_skeleton, PointGrid, SkeletonComplex};
use super::{PointSet, SegmentationConfig};
use crate::imaging::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionKind {
    /// A hole of `R_beta` that is still a hole of `R_{beta+P}`.
    Persistent,
    /// A hole subdivided, closed or filled inside the window.
    Transient,
    /// A face already covered at `beta`, a rasterized skeleton line, or the
    /// unenclosed background.
    Skeleton,
}

impl RegionKind {
    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Persistent => "persistent",
            RegionKind::Transient => "transient",
            RegionKind::Skeleton => "skeleton",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub kind: RegionKind,
    /// Radius at which the region is first observed.
    pub birth_beta: f64,
    /// Radius at which the growing discs cover the region (its farthest pixel
    /// from any edge point); infinite for the background.
    pub death_beta: f64,
    pub pixel_count: usize,
    /// Filled in once the partition is measured against an image.
    pub mean_intensity: Option<f64>,
    /// Rasterized skeleton pixels rather than an area.
    pub is_line: bool,
}

/// Label map over the image plus per-region metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPartition {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    regions: BTreeMap<u32, Region>,
}

impl RegionPartition {
    pub(crate) fn from_parts(width: usize, height: usize, labels: Vec<u32>, regions: BTreeMap<u32, Region>) -> Self {
        Self {
            width,
            height,
            labels,
            regions,
        }
    }

    /// Everything in one background region.
    pub fn single(width: usize, height: usize) -> Self {
        let mut regions = BTreeMap::new();
        regions.insert(
            0,
            Region {
                kind: RegionKind::Skeleton,
                birth_beta: 0.0,
                death_beta: f64::INFINITY,
                pixel_count: width * height,
                mean_intensity: None,
                is_line: false,
            },
        );
        Self::from_parts(width, height, vec![0; width * height], regions)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn regions(&self) -> &BTreeMap<u32, Region> {
        &self.regions
    }

    pub fn region(&self, id: u32) -> Option<&Region> {
        self.regions.get(&id)
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn ids_of_kind(&self, kind: RegionKind) -> Vec<u32> {
        self.regions
            .iter()
            .filter(|(_, r)| r.kind == kind)
            .map(|(&id, _)| id)
            .collect()
    }

    /// Every pixel carries a known id and the recorded pixel counts agree.
    pub fn is_valid_partition(&self) -> bool {
        if self.labels.len() != self.width * self.height {
            return false;
        }
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &l in &self.labels {
            if !self.regions.contains_key(&l) {
                return false;
            }
            *counts.entry(l).or_default() += 1;
        }
        self.regions
            .iter()
            .all(|(id, r)| counts.get(id).copied().unwrap_or(0) == r.pixel_count)
    }

    /// Sets every region's mean intensity from `img`.
    pub fn measure(&mut self, img: &GrayImage) {
        let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
        for (&l, &v) in self.labels.iter().zip(img.data()) {
            *sums.entry(l).or_default() += v;
        }
        for (id, r) in self.regions.iter_mut() {
            r.mean_intensity = sums
                .get(id)
                .filter(|_| r.pixel_count > 0)
                .map(|s| s / r.pixel_count as f64);
        }
    }

    /// Binary mask of the pixels carrying `id`.
    pub fn mask_of(&self, id: u32) -> Vec<bool> {
        self.labels.iter().map(|&l| l == id).collect()
    }

    /// `id,kind,birth_beta,death_beta,pixel_count,mean_intensity,is_line`,
    /// one row per region in id order; an unmeasured mean is written `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,kind,birth_beta,death_beta,pixel_count,mean_intensity,is_line\n");
        for (id, r) in &self.regions {
            let mean = r.mean_intensity.map_or_else(|| "NaN".to_string(), |m| format!("{m:.6}"));
            out.push_str(&format!(
                "{id},{},{},{},{},{mean},{}\n",
                r.kind.name(),
                r.birth_beta,
                r.death_beta,
                r.pixel_count,
                r.is_line
            ));
        }
        out
    }
}

/// Best-overlap face of `wide` for a pixel set: `(face index, shared pixels)`,
/// ties to the lower index. A face counts as matched when the shared pixels
/// cover at least half of the smaller of the two faces, so a hole whose
/// outline thickens with the extra edges at the wider radius still matches.
fn best_overlap(pixels: &[usize], wide: &SkeletonComplex) -> Option<(usize, usize)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &p in pixels {
        if let Some(f) = wide.face_of_pixel()[p] {
            *counts.entry(f).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
}

fn farthest_from_points(pixels: &[usize], width: usize, grid: &PointGrid<'_>) -> f64 {
    pixels
        .iter()
        .map(|&p| grid.nearest_distance((p % width) as f64, (p / width) as f64))
        .fold(0.0, f64::max)
}

/// Initial topological partition from the skeletons at `beta` and
/// `beta + P`.
///
/// Ids: 0 is the unenclosed background (omitted when empty), then the faces
/// of `R_beta` in scan order, then the 8-connected skeleton line components.
pub fn classify_regions(points: &PointSet, cfg: &SegmentationConfig) -> RegionPartition {
    let (w, h) = (points.width(), points.height());
    let beta = cfg.beta;
    let outer = cfg.beta + cfg.persistence;
    let narrow = build_beta_skeleton(points, beta);
    let wide = build_beta_skeleton(points, outer);
    let grid = PointGrid::new(points.points(), w, h, beta.max(1.0));

    let mut labels = vec![u32::MAX; w * h];
    let mut regions = BTreeMap::new();

    for (fi, face) in narrow.faces().iter().enumerate() {
        let id = fi as u32 + 1;
        let reach = farthest_from_points(&face.pixels, w, &grid);
        let kind = if reach <= beta {
            RegionKind::Skeleton
        } else {
            match best_overlap(&face.pixels, &wide) {
                Some((g, shared))
                    if 2 * shared >= face.pixels.len().min(wide.faces()[g].pixels.len()) =>
                {
                    let g_reach = farthest_from_points(&wide.faces()[g].pixels, w, &grid);
                    if g_reach > outer {
                        RegionKind::Persistent
                    } else {
                        RegionKind::Transient
                    }
                }
                _ => RegionKind::Transient,
            }
        };
        for &p in &face.pixels {
            labels[p] = id;
        }
        regions.insert(
            id,
            Region {
                kind,
                birth_beta: beta,
                death_beta: reach,
                pixel_count: face.pixels.len(),
                mean_intensity: None,
                is_line: false,
            },
        );
    }

    let mut next = narrow.face_count() as u32 + 1;
    let mask = narrow.skeleton_mask();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != u32::MAX {
            continue;
        }
        let id = next;
        next += 1;
        let mut stack = vec![start];
        labels[start] = id;
        let mut count = 0;
        while let Some(i) = stack.pop() {
            count += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && labels[j] == u32::MAX {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        regions.insert(
            id,
            Region {
                kind: RegionKind::Skeleton,
                birth_beta: beta,
                death_beta: beta,
                pixel_count: count,
                mean_intensity: None,
                is_line: true,
            },
        );
    }

    let background = labels.iter().filter(|&&l| l == u32::MAX).count();
    if background > 0 {
        for l in labels.iter_mut().filter(|l| **l == u32::MAX) {
            *l = 0;
        }
        regions.insert(
            0,
            Region {
                kind: RegionKind::Skeleton,
                birth_beta: 0.0,
                death_beta: f64::INFINITY,
                pixel_count: background,
                mean_intensity: None,
                is_line: false,
            },
        );
    }
    RegionPartition::from_parts(w, h, labels, regions)
}
