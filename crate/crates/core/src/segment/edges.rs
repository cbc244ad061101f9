use std::collections::VecDeque;

use super::{Point, PointSet, SegmentationConfig};
use crate::imaging::GrayImage;

/// Horizontal and vertical Haar detail of every `2s x 2s` block (undecimated),
/// normalised so a step of contrast `c` has modulus `c`.
pub struct HaarDetail {
    pub cols: usize,
    pub rows: usize,
    pub scale: usize,
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
}

impl HaarDetail {
    pub fn compute(img: &GrayImage, scale: usize) -> Self {
        let s = scale.max(1);
        let b = 2 * s;
        let cols = img.width().saturating_sub(b - 1);
        let rows = img.height().saturating_sub(b - 1);
        // summed-area table for O(1) box sums
        let (w, h) = (img.width(), img.height());
        let mut sat = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += img.get(x, y);
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        let boxsum = |x0: usize, y0: usize, x1: usize, y1: usize| {
            sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
                + sat[y0 * (w + 1) + x0]
        };
        let half_area = (s * b) as f64;
        let mut horizontal = Vec::with_capacity(cols * rows);
        let mut vertical = Vec::with_capacity(cols * rows);
        for y in 0..rows {
            for x in 0..cols {
                let left = boxsum(x, y, x + s, y + b);
                let right = boxsum(x + s, y, x + b, y + b);
                let top = boxsum(x, y, x + b, y + s);
                let bottom = boxsum(x, y + s, x + b, y + b);
                horizontal.push((right - left) / half_area);
                vertical.push((bottom - top) / half_area);
            }
        }
        Self {
            cols,
            rows,
            scale: s,
            horizontal,
            vertical,
        }
    }

    pub fn modulus(&self) -> Vec<f64> {
        self.horizontal
            .iter()
            .zip(&self.vertical)
            .map(|(h, v)| h.hypot(*v))
            .collect()
    }

    /// Image-space centre of block `(bx, by)`.
    pub fn centre(&self, bx: usize, by: usize) -> Point {
        let off = self.scale as f64 - 0.5;
        Point::new(bx as f64 + off, by as f64 + off)
    }
}

/// Edge points: block centres whose Haar modulus is a local maximum along the
/// detail direction and survives hysteresis between `edge_low` and `edge_high`.
pub fn detect_edge_points(img: &GrayImage, cfg: &SegmentationConfig) -> PointSet {
    let detail = HaarDetail::compute(img, cfg.edge_scale);
    let (cols, rows) = (detail.cols, detail.rows);
    let modulus = detail.modulus();
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x as usize >= cols || y as usize >= rows {
            0.0
        } else {
            modulus[y as usize * cols + x as usize]
        }
    };

    let mut kept = vec![false; cols * rows];
    for y in 0..rows {
        for x in 0..cols {
            let i = y * cols + x;
            let m = modulus[i];
            if m < cfg.edge_low || m == 0.0 {
                continue;
            }
            let (dx, dy) = quantized_direction(detail.horizontal[i], detail.vertical[i]);
            let (xi, yi) = (x as isize, y as isize);
            let ahead = at(xi + dx, yi + dy);
            let behind = at(xi - dx, yi - dy);
            // strict on one side so flat ridges keep a single pixel
            if m > ahead && m >= behind {
                kept[i] = true;
            }
        }
    }

    let mut accepted = vec![false; cols * rows];
    let mut queue = VecDeque::new();
    for i in 0..kept.len() {
        if kept[i] && modulus[i] >= cfg.edge_high {
            accepted[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % cols) as isize, (i / cols) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx as usize >= cols || ny as usize >= rows {
                    continue;
                }
                let j = ny as usize * cols + nx as usize;
                if kept[j] && !accepted[j] {
                    accepted[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }

    let points = (0..accepted.len())
        .filter(|&i| accepted[i])
        .map(|i| detail.centre(i % cols, i / cols))
        .collect();
    PointSet::new(img.width(), img.height(), points).expect("block centres lie inside the image")
}

/// Unit step along the detail direction, quantized to 45 degrees.
fn quantized_direction(h: f64, v: f64) -> (isize, isize) {
    let angle = v.atan2(h).to_degrees().rem_euclid(180.0);
    if !(22.5..157.5).contains(&angle) {
        (1, 0)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let pts = detect_edge_points(&GrayImage::filled(16, 16, 0.4), &SegmentationConfig::default());
        assert!(pts.is_empty());
    }

    #[test]
    fn step_gives_unit_modulus() {
        let img = GrayImage::from_fn(6, 4, |x, _| if x >= 3 { 0.8 } else { 0.0 });
        let d = HaarDetail::compute(&img, 1);
        assert_eq!((d.cols, d.rows), (5, 3));
        let m = d.modulus();
        assert!((m[2] - 0.8).abs() < 1e-12);
        assert_eq!(m[1], 0.0);
        assert_eq!(d.centre(2, 0), Point::new(2.5, 0.5));
    }

    #[test]
    fn square_edges_hug_the_perimeter() {
        let img = GrayImage::from_fn(32, 32, |x, y| {
            if (8..24).contains(&x) && (8..24).contains(&y) { 1.0 } else { 0.0 }
        });
        let pts = detect_edge_points(&img, &SegmentationConfig::default());
        assert!(!pts.is_empty());
        // perimeter of the pixel square is the boundary of [7.5, 23.5]^2
        for p in pts.points() {
            let outside = (7.5 - p.x).max(p.x - 23.5).max(7.5 - p.y).max(p.y - 23.5);
            let dist = if outside > 0.0 {
                outside
            } else {
                (p.x - 7.5).min(23.5 - p.x).min(p.y - 7.5).min(23.5 - p.y)
            };
            assert!(dist <= 1.0, "{p:?} is {dist} from the perimeter");
        }
    }

    #[test]
    fn disc_edges_follow_the_circle() {
        let (cx, cy, r) = (32.0, 32.0, 10.0);
        let img = GrayImage::from_fn(64, 64, |x, y| {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r { 1.0 } else { 0.0 }
        });
        let pts = detect_edge_points(&img, &SegmentationConfig::default());
        let bins = 36;
        let mut covered = vec![false; bins];
        for p in pts.points() {
            let (dx, dy) = (p.x - cx, p.y - cy);
            let d = (dx * dx + dy * dy).sqrt();
            assert!((d - r).abs() <= 1.5, "{p:?} at radius {d}");
            let a = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
            covered[((a / std::f64::consts::TAU) * bins as f64) as usize % bins] = true;
        }
        let coverage = covered.iter().filter(|&&c| c).count() as f64 / bins as f64;
        assert!(coverage >= 0.8, "coverage {coverage}");
    }
}
