use std::collections::{BTreeMap, BTreeSet};

use super::regions::{Region, RegionKind, RegionPartition};
use super::skeleton::UnionFind;
use super::SegmentationConfig;
use crate::imaging::GrayImage;

/// One accepted merge and the persistent B1 measured before and after it.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeRecord {
    pub absorbed: u32,
    pub into: u32,
    pub intensity_gap: f64,
    pub b1_before: usize,
    pub b1_after: usize,
}

#[derive(Clone, Debug)]
pub struct MergeTrace {
    /// Persistent B1 of the partition the merge loop started from.
    pub baseline_b1: usize,
    pub merges: Vec<MergeRecord>,
}

/// Region adjacency graph with running intensity sums.
struct RegionGraph {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    regions: BTreeMap<u32, Region>,
    pixels: BTreeMap<u32, Vec<usize>>,
    sums: BTreeMap<u32, f64>,
    border: BTreeMap<u32, bool>,
    adjacency: BTreeMap<u32, BTreeSet<u32>>,
}

impl RegionGraph {
    fn build(img: &GrayImage, width: usize, height: usize, labels: Vec<u32>, regions: BTreeMap<u32, Region>) -> Self {
        let mut g = Self {
            width,
            height,
            labels,
            regions,
            pixels: BTreeMap::new(),
            sums: BTreeMap::new(),
            border: BTreeMap::new(),
            adjacency: BTreeMap::new(),
        };
        for &id in g.regions.keys() {
            g.pixels.insert(id, Vec::new());
            g.sums.insert(id, 0.0);
            g.border.insert(id, false);
            g.adjacency.insert(id, BTreeSet::new());
        }
        for (i, &l) in g.labels.iter().enumerate() {
            g.pixels.get_mut(&l).expect("label has a region").push(i);
            *g.sums.get_mut(&l).unwrap() += img.data()[i];
            let (x, y) = (i % width, i / width);
            if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
                g.border.insert(l, true);
            }
            let mut link = |j: usize| {
                let m = g.labels[j];
                if m != l {
                    g.adjacency.get_mut(&l).unwrap().insert(m);
                    g.adjacency.get_mut(&m).unwrap().insert(l);
                }
            };
            if x + 1 < width {
                link(i + 1);
            }
            if y + 1 < height {
                link(i + width);
            }
        }
        for (id, r) in g.regions.iter_mut() {
            let n = g.pixels[id].len();
            r.pixel_count = n;
            r.mean_intensity = (n > 0).then(|| g.sums[id] / n as f64);
        }
        g
    }

    fn mean(&self, id: u32) -> f64 {
        self.sums[&id] / self.pixels[&id].len() as f64
    }

    /// Connected groups of enclosed persistent regions, optionally evaluated
    /// as if `absorbed` were already part of `into`.
    fn persistent_b1(&self, hypothetical: Option<(u32, u32)>) -> usize {
        let rep = |id: u32| match hypothetical {
            Some((a, b)) if id == a => b,
            _ => id,
        };
        let mut persistent = BTreeSet::new();
        let mut touches_border: BTreeMap<u32, bool> = BTreeMap::new();
        for (&id, r) in &self.regions {
            let rid = rep(id);
            *touches_border.entry(rid).or_default() |= self.border[&id];
            if r.kind == RegionKind::Persistent {
                persistent.insert(rid);
            }
        }
        let nodes: Vec<u32> = persistent
            .into_iter()
            .filter(|id| !touches_border[id])
            .collect();
        let index: BTreeMap<u32, usize> = nodes.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut uf = UnionFind::new(nodes.len());
        for (&a, neighbours) in &self.adjacency {
            let Some(&ia) = index.get(&rep(a)) else { continue };
            for &b in neighbours {
                if let Some(&ib) = index.get(&rep(b)) {
                    uf.union(ia, ib);
                }
            }
        }
        uf.sets()
    }

    fn merge(&mut self, absorbed: u32, into: u32) {
        let moved = self.pixels.remove(&absorbed).expect("absorbed region exists");
        for &p in &moved {
            self.labels[p] = into;
        }
        self.pixels.get_mut(&into).unwrap().extend(moved);
        let s = self.sums.remove(&absorbed).unwrap();
        *self.sums.get_mut(&into).unwrap() += s;
        let b = self.border.remove(&absorbed).unwrap();
        *self.border.get_mut(&into).unwrap() |= b;
        let neighbours = self.adjacency.remove(&absorbed).unwrap();
        for n in neighbours {
            let set = self.adjacency.get_mut(&n).unwrap();
            set.remove(&absorbed);
            if n != into {
                set.insert(into);
                self.adjacency.get_mut(&into).unwrap().insert(n);
            }
        }
        let gone = self.regions.remove(&absorbed).unwrap();
        let n = self.pixels[&into].len();
        let mean = self.sums[&into] / n as f64;
        let target = self.regions.get_mut(&into).unwrap();
        target.pixel_count = n;
        target.mean_intensity = Some(mean);
        target.birth_beta = target.birth_beta.min(gone.birth_beta);
    }

    fn into_partition(self) -> RegionPartition {
        RegionPartition::from_parts(self.width, self.height, self.labels, self.regions)
    }
}

/// Hands every skeleton-line pixel to the neighbouring area region whose mean
/// is closest to the pixel's own intensity, growing inward from the areas.
fn dissolve_lines(img: &GrayImage, part: &RegionPartition) -> (Vec<u32>, BTreeMap<u32, Region>) {
    let (w, h) = (part.width(), part.height());
    let mut labels = part.labels().to_vec();
    let mut regions = part.regions().clone();
    let is_line: BTreeSet<u32> = regions
        .iter()
        .filter(|(_, r)| r.is_line)
        .map(|(&id, _)| id)
        .collect();
    if is_line.is_empty() {
        return (labels, regions);
    }
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (&l, &v) in labels.iter().zip(img.data()) {
        if !is_line.contains(&l) {
            let e = sums.entry(l).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let means: BTreeMap<u32, f64> = sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect();
    if means.is_empty() {
        return (labels, regions);
    }
    let mut pending: Vec<usize> = (0..labels.len()).filter(|&i| is_line.contains(&labels[i])).collect();
    while !pending.is_empty() {
        let snapshot = labels.clone();
        let mut still = Vec::new();
        for &i in &pending {
            let (x, y) = (i % w, i / w);
            let mut best: Option<(f64, u32)> = None;
            let mut consider = |j: usize| {
                let l = snapshot[j];
                if let Some(&m) = means.get(&l) {
                    let gap = (img.data()[i] - m).abs();
                    if best.is_none_or(|(bg, bl)| gap < bg || (gap == bg && l < bl)) {
                        best = Some((gap, l));
                    }
                }
            };
            if x > 0 {
                consider(i - 1);
            }
            if x + 1 < w {
                consider(i + 1);
            }
            if y > 0 {
                consider(i - w);
            }
            if y + 1 < h {
                consider(i + w);
            }
            match best {
                Some((_, l)) => labels[i] = l,
                None => still.push(i),
            }
        }
        if still.len() == pending.len() {
            break;
        }
        pending = still;
    }
    let remaining: BTreeSet<u32> = labels.iter().copied().collect();
    regions.retain(|id, _| remaining.contains(id));
    (labels, regions)
}

/// Topology-preserving merge loop, returning the trace alongside the result.
pub fn split_merge_traced(
    img: &GrayImage,
    part: &RegionPartition,
    cfg: &SegmentationConfig,
) -> (RegionPartition, MergeTrace) {
    assert_eq!(
        (img.width(), img.height()),
        (part.width(), part.height()),
        "partition and image dimensions differ"
    );
    let (labels, regions) = dissolve_lines(img, part);
    let mut graph = RegionGraph::build(img, part.width(), part.height(), labels, regions);
    let baseline = graph.persistent_b1(None);
    let mut trace = MergeTrace {
        baseline_b1: baseline,
        merges: Vec::new(),
    };

    loop {
        let mut queue: Vec<(f64, u32)> = graph
            .regions
            .iter()
            .filter(|(_, r)| r.kind != RegionKind::Persistent)
            .map(|(&id, r)| (r.birth_beta, id))
            .collect();
        queue.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut merged_any = false;
        for (_, alpha) in queue {
            if !graph.regions.contains_key(&alpha) {
                continue;
            }
            let mean = graph.mean(alpha);
            let mut candidates: Vec<(f64, u32)> = graph.adjacency[&alpha]
                .iter()
                .map(|&n| ((graph.mean(n) - mean).abs(), n))
                .filter(|&(gap, _)| gap <= cfg.merge_tau)
                .collect();
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (gap, target) in candidates {
                if graph.persistent_b1(Some((alpha, target))) != baseline {
                    continue;
                }
                let before = graph.persistent_b1(None);
                graph.merge(alpha, target);
                let after = graph.persistent_b1(None);
                assert_eq!(before, after, "merge {alpha} -> {target} changed persistent B1");
                trace.merges.push(MergeRecord {
                    absorbed: alpha,
                    into: target,
                    intensity_gap: gap,
                    b1_before: before,
                    b1_after: after,
                });
                merged_any = true;
                break;
            }
        }
        if !merged_any {
            break;
        }
    }
    (graph.into_partition(), trace)
}

/// Merges transient and skeleton regions into their most similar neighbours
/// while the persistent B1 stays put. Persistent regions only ever absorb.
pub fn split_merge_segment(img: &GrayImage, part: &RegionPartition, cfg: &SegmentationConfig) -> RegionPartition {
    split_merge_traced(img, part, cfg).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partition(width: usize, height: usize, labels: Vec<u32>, kinds: &[(u32, RegionKind)]) -> RegionPartition {
        let mut regions = BTreeMap::new();
        for &(id, kind) in kinds {
            regions.insert(
                id,
                Region {
                    kind,
                    birth_beta: 1.0,
                    death_beta: 2.0,
                    pixel_count: labels.iter().filter(|&&l| l == id).count(),
                    mean_intensity: None,
                    is_line: false,
                },
            );
        }
        RegionPartition::from_parts(width, height, labels, regions)
    }

    #[test]
    fn uniform_image_collapses_to_one_region() {
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3];
        let part = partition(
            4,
            4,
            labels,
            &[
                (0, RegionKind::Skeleton),
                (1, RegionKind::Transient),
                (2, RegionKind::Transient),
                (3, RegionKind::Skeleton),
            ],
        );
        let out = split_merge_segment(&GrayImage::filled(4, 4, 0.5), &part, &SegmentationConfig::default());
        assert_eq!(out.region_count(), 1);
        assert!(out.is_valid_partition());
    }

    #[test]
    fn persistent_hole_is_not_swallowed_by_background() {
        // background ring around a 3x3 persistent centre of similar intensity
        let mut labels = vec![0u32; 25];
        for y in 1..4 {
            for x in 1..4 {
                labels[y * 5 + x] = 1;
            }
        }
        let part = partition(5, 5, labels, &[(0, RegionKind::Skeleton), (1, RegionKind::Persistent)]);
        let img = GrayImage::filled(5, 5, 0.3);
        let (out, trace) = split_merge_traced(&img, &part, &SegmentationConfig::default());
        assert_eq!(trace.baseline_b1, 1);
        assert!(trace.merges.is_empty());
        assert_eq!(out.region_count(), 2);
    }

    #[test]
    fn contrast_above_tau_blocks_merge() {
        let labels = vec![0, 0, 1, 1];
        let part = partition(4, 1, labels, &[(0, RegionKind::Skeleton), (1, RegionKind::Transient)]);
        let img = GrayImage::new(4, 1, vec![0.1, 0.1, 0.9, 0.9]).unwrap();
        let out = split_merge_segment(&img, &part, &SegmentationConfig::default());
        assert_eq!(out.region_count(), 2);
        assert_eq!(out.region(1).unwrap().mean_intensity, Some(0.9));
    }

    #[test]
    fn lines_split_by_pixel_intensity() {
        // 0 | line | 1 with the line pixels matching either side
        let labels = vec![0, 2, 2, 1, 0, 2, 2, 1];
        let mut part = partition(4, 2, labels, &[(0, RegionKind::Skeleton), (1, RegionKind::Transient), (2, RegionKind::Skeleton)]);
        let mut regions = part.regions().clone();
        regions.get_mut(&2).unwrap().is_line = true;
        part = RegionPartition::from_parts(4, 2, part.labels().to_vec(), regions);
        let img = GrayImage::new(4, 2, vec![0.1, 0.12, 0.88, 0.9, 0.1, 0.11, 0.9, 0.9]).unwrap();
        let out = split_merge_segment(&img, &part, &SegmentationConfig::default());
        assert_eq!(out.labels(), &[0, 0, 1, 1, 0, 0, 1, 1]);
    }
}
