//! Deterministic synthetic images with exact ground truth, standing in for
//! the medical dataset at desk scale.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_distr::{Distribution, Normal};

use crate::ctvr::Dataset;
use crate::imaging::{rng_from_seed, GrayImage, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    StepEdge,
    Disc,
    TwoDiscs,
    Rings,
    ThreeClassBlobs,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 5] = [
        FixtureKind::StepEdge,
        FixtureKind::Disc,
        FixtureKind::TwoDiscs,
        FixtureKind::Rings,
        FixtureKind::ThreeClassBlobs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::StepEdge => "step-edge",
            FixtureKind::Disc => "disc",
            FixtureKind::TwoDiscs => "two-discs",
            FixtureKind::Rings => "rings",
            FixtureKind::ThreeClassBlobs => "three-class-blobs",
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixtureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown fixture kind '{s}', expected one of {}", names.join(", "))
            })
    }
}

/// A noisy image plus its clean source and binary truth mask.
#[derive(Clone, Debug)]
pub struct ImageFixture {
    pub noisy: GrayImage,
    pub clean: GrayImage,
    pub mask: Vec<bool>,
}


/// The single-image fixture of `kind`; `None` for the labelled set.
pub fn image_fixture(kind: FixtureKind, seed: u64) -> Option<ImageFixture> {
    match kind {
        FixtureKind::StepEdge => Some(step_edge(seed)),
        FixtureKind::Disc => Some(disc(seed)),
        FixtureKind::TwoDiscs => Some(two_discs(seed)),
        FixtureKind::Rings => Some(rings(seed)),
        FixtureKind::ThreeClassBlobs => None,
    }
}

fn add_noise(clean: &GrayImage, sigma: f64, rng: &mut SeededRng) -> GrayImage {
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    clean.map(|v| (v + normal.sample(rng)).clamp(0.0, 1.0))
}

fn from_mask(size: usize, inside: impl Fn(usize, usize) -> Option<f64>, ground: f64) -> (GrayImage, Vec<bool>) {
    let mut mask = Vec::with_capacity(size * size);
    let img = GrayImage::from_fn(size, size, |x, y| match inside(x, y) {
        Some(v) => {
            mask.push(true);
            v
        }
        None => {
            mask.push(false);
            ground
        }
    });
    (img, mask)
}

fn in_disc(x: usize, y: usize, cx: f64, cy: f64, r: f64) -> bool {
    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
    dx * dx + dy * dy <= r * r
}

/// 64x64 vertical step (0 for `x < 32`, 1 otherwise) with Gaussian noise
/// `sigma = 0.05`. The mask marks the bright half.
pub fn step_edge(seed: u64) -> ImageFixture {
    let mut rng = rng_from_seed(seed);
    let (clean, mask) = from_mask(64, |x, _| (x >= 32).then_some(1.0), 0.0);
    let noisy = add_noise(&clean, 0.05, &mut rng);
    ImageFixture { noisy, clean, mask }
}

/// Bright disc (0.9, radius 16, centred) on a dark ground (0.1), 64x64,
/// noise `sigma = 0.03`.
pub fn disc(seed: u64) -> ImageFixture {
    let mut rng = rng_from_seed(seed);
    let (clean, mask) = from_mask(64, |x, y| in_disc(x, y, 32.0, 32.0, 16.0).then_some(0.9), 0.1);
    let noisy = add_noise(&clean, 0.03, &mut rng);
    ImageFixture { noisy, clean, mask }
}

/// Two separated bright discs of radii 4 and 12 on a dark ground.
pub fn two_discs(seed: u64) -> ImageFixture {
    let mut rng = rng_from_seed(seed);
    let (clean, mask) = from_mask(
        64,
        |x, y| {
            (in_disc(x, y, 16.0, 20.0, 4.0) || in_disc(x, y, 40.0, 38.0, 12.0)).then_some(0.9)
        },
        0.1,
    );
    let noisy = add_noise(&clean, 0.03, &mut rng);
    ImageFixture { noisy, clean, mask }
}

/// Two bright annuli (outer radius 10, width 2); the mask marks the annuli.
pub fn rings(seed: u64) -> ImageFixture {
    let mut rng = rng_from_seed(seed);
    let annulus = |x: usize, y: usize, cx: f64, cy: f64| {
        in_disc(x, y, cx, cy, 10.0) && !in_disc(x, y, cx, cy, 8.0)
    };
    let (clean, mask) = from_mask(
        64,
        |x, y| (annulus(x, y, 17.0, 32.0) || annulus(x, y, 46.0, 32.0)).then_some(0.9),
        0.1,
    );
    let noisy = add_noise(&clean, 0.03, &mut rng);
    ImageFixture { noisy, clean, mask }
}

/// Side length of the blob images.
pub const BLOB_SIZE: usize = 16;

/// Gaussian blob images in three classes distinguished by blob placement:
/// class 0 upper-left, class 1 centre, class 2 lower-right. Positions jitter
/// by up to one pixel and the images carry noise `sigma = 0.05`.
pub fn three_class_blobs(seed: u64, per_class: usize) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let centres = [(4.5, 4.5), (7.5, 7.5), (10.5, 10.5)];
    let normal = Normal::new(0.0, 0.05).expect("valid sigma");
    let mut images = Vec::with_capacity(3 * per_class);
    let mut labels = Vec::with_capacity(3 * per_class);
    for _ in 0..per_class {
        for (class, &(cx, cy)) in centres.iter().enumerate() {
            let jx = rng.random_range(-1.0..=1.0);
            let jy = rng.random_range(-1.0..=1.0);
            let radius = rng.random_range(2.0..3.0);
            let (bx, by) = (cx + jx, cy + jy);
            let img = GrayImage::from_fn(BLOB_SIZE, BLOB_SIZE, |x, y| {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                let v = 0.1 + 0.8 * (-d2 / (2.0 * radius * radius)).exp();
                (v + normal.sample(&mut rng)).clamp(0.0, 1.0)
            });
            images.push(img);
            labels.push(class);
        }
    }
    Dataset { images, labels }
}
