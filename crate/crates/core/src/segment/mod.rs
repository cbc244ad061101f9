//! Topological segmentation: wavelet edge points, beta-skeleton complexes at
//! two radii, persistent first Betti numbers, a persistent / transient /
//! skeleton region taxonomy and a topology-preserving split-merge.

mod betti;
mod edges;
mod merge;
mod regions;
mod skeleton;

pub use betti::{betti_b1, born_faces, persistent_b1};
pub use edges::{detect_edge_points, HaarDetail};
pub use merge::{split_merge_segment, split_merge_traced, MergeRecord, MergeTrace};
pub use regions::{classify_regions, Region, RegionKind, RegionPartition};
pub use skeleton::{build_beta_skeleton, Face, SkeletonComplex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::GrayImage;

/// Points closer than this are treated as one.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("malformed complex: {0}")]
    MalformedComplex(String),
    #[error("invalid segmentation config: {0}")]
    Config(String),
    #[error("point ({x}, {y}) lies outside the {width}x{height} raster")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        (self.x - other.x).powi(2) + (self.y - other.y).powi(2)
    }
}

/// Deduplicated points in pixel coordinates of a `width x height` raster.
/// Pixel `(i, j)` is centred at `(i, j)`, so coordinates range over
/// `[-0.5, width - 0.5] x [-0.5, height - 0.5]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    width: usize,
    height: usize,
    points: Vec<Point>,
}

impl PointSet {
    /// Drops later duplicates (within [`DEDUP_TOLERANCE`]) and keeps input order.
    pub fn new(width: usize, height: usize, points: Vec<Point>) -> Result<Self, SegmentError> {
        for p in &points {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && p.x >= -0.5
                && p.y >= -0.5
                && p.x <= width as f64 - 0.5
                && p.y <= height as f64 - 0.5;
            if !inside {
                return Err(SegmentError::OutOfBounds {
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                });
            }
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
        let mut drop = vec![false; points.len()];
        let tol2 = DEDUP_TOLERANCE * DEDUP_TOLERANCE;
        for (k, &i) in order.iter().enumerate() {
            if drop[i] {
                continue;
            }
            for &j in &order[k + 1..] {
                if points[j].x - points[i].x > DEDUP_TOLERANCE {
                    break;
                }
                if points[i].dist2(&points[j]) < tol2 {
                    // keep whichever came first in the input
                    drop[i.max(j)] = true;
                }
            }
        }
        let points = points
            .into_iter()
            .zip(drop)
            .filter_map(|(p, d)| (!d).then_some(p))
            .collect();
        Ok(Self {
            width,
            height,
            points,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    /// Base disc radius in pixels.
    pub beta: f64,
    /// Radius increment defining the persistence window.
    pub persistence: f64,
    /// Largest mean-intensity gap two regions may have and still merge.
    pub merge_tau: f64,
    /// Haar half-block size in pixels.
    pub edge_scale: usize,
    pub edge_low: f64,
    pub edge_high: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            beta: 1.5,
            persistence: 1.0,
            merge_tau: 0.15,
            edge_scale: 1,
            edge_low: 0.15,
            edge_high: 0.3,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        let bad = |m: String| Err(SegmentError::Config(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.persistence >= 0.0 && self.persistence.is_finite()) {
            return bad(format!("persistence must be non-negative, got {}", self.persistence));
        }
        if !(0.0..=1.0).contains(&self.merge_tau) {
            return bad(format!("merge_tau must lie in [0, 1], got {}", self.merge_tau));
        }
        if self.edge_scale == 0 {
            return bad("edge_scale must be at least 1".into());
        }
        if !(self.edge_low >= 0.0 && self.edge_low <= self.edge_high) {
            return bad(format!(
                "need 0 <= edge_low <= edge_high, got {} and {}",
                self.edge_low, self.edge_high
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub partition: RegionPartition,
    /// Persistent-derived regions standing out most from the global mean.
    pub foreground: Vec<bool>,
    /// Set when no edge points were found and the partition is a single region.
    pub no_edges: bool,
    pub trace: MergeTrace,
}

/// Edge points, region taxonomy, then split-merge. Expects an already
/// denoised image.
pub fn segment(img: &GrayImage, cfg: &SegmentationConfig) -> Result<Segmentation, SegmentError> {
    cfg.validate()?;
    let points = detect_edge_points(img, cfg);
    if points.is_empty() {
        let mut partition = RegionPartition::single(img.width(), img.height());
        partition.measure(img);
        return Ok(Segmentation {
            foreground: vec![false; img.len()],
            partition,
            no_edges: true,
            trace: MergeTrace {
                baseline_b1: 0,
                merges: Vec::new(),
            },
        });
    }
    let initial = classify_regions(&points, cfg);
    let (partition, trace) = split_merge_traced(img, &initial, cfg);
    let foreground = foreground_mask(img, &partition);
    Ok(Segmentation {
        partition,
        foreground,
        no_edges: false,
        trace,
    })
}

/// Persistent regions whose contrast against the global mean is at least half
/// the largest such contrast.
pub fn foreground_mask(img: &GrayImage, part: &RegionPartition) -> Vec<bool> {
    let global = img.mean();
    let contrasts: Vec<(u32, f64)> = part
        .regions()
        .iter()
        .filter(|(_, r)| r.kind == RegionKind::Persistent)
        .filter_map(|(&id, r)| r.mean_intensity.map(|m| (id, (m - global).abs())))
        .collect();
    let top = contrasts.iter().map(|c| c.1).fold(0.0, f64::max);
    if top <= 0.0 {
        return vec![false; part.labels().len()];
    }
    let chosen: Vec<u32> = contrasts
        .into_iter()
        .filter(|&(_, c)| c >= 0.5 * top)
        .map(|(id, _)| id)
        .collect();
    part.labels().iter().map(|l| chosen.contains(l)).collect()
}
