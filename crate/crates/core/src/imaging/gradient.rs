use super::GrayImage;

/// Signed neighbour differences `I(neighbour) - I(pixel)` in the four
/// compass directions, one plane per direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalGradients {
    pub width: usize,
    pub height: usize,
    pub north: Vec<f64>,
    pub south: Vec<f64>,
    pub east: Vec<f64>,
    pub west: Vec<f64>,
}

impl DirectionalGradients {
    /// Planes in the fixed order north, south, east, west.
    pub fn planes(&self) -> [&[f64]; 4] {
        [&self.north, &self.south, &self.east, &self.west]
    }

    /// Per-pixel magnitude: mean of the four absolute directional differences.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.north.len())
            .map(|i| {
                (self.north[i].abs() + self.south[i].abs() + self.east[i].abs() + self.west[i].abs())
                    / 4.0
            })
            .collect()
    }
}

/// Four-direction differences with replicated borders, so a difference taken
/// across the image border is zero.
pub fn gradients_4dir(img: &GrayImage) -> DirectionalGradients {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let mut g = DirectionalGradients {
        width: w,
        height: h,
        north: Vec::with_capacity(n),
        south: Vec::with_capacity(n),
        east: Vec::with_capacity(n),
        west: Vec::with_capacity(n),
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = img.get(x as usize, y as usize);
            g.north.push(img.get_clamped(x, y - 1) - c);
            g.south.push(img.get_clamped(x, y + 1) - c);
            g.east.push(img.get_clamped(x + 1, y) - c);
            g.west.push(img.get_clamped(x - 1, y) - c);
        }
    }
    g
}
