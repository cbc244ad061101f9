use super::skeleton::{build_beta_skeleton, SkeletonComplex};
use super::{PointSet, SegmentError};

/// `O - E + D - A`: components minus vertices plus edges minus enclosed faces.
pub fn betti_b1(c: &SkeletonComplex) -> Result<usize, SegmentError> {
    let value = c.component_count() as i64 - c.vertex_count() as i64 + c.edge_count() as i64
        - c.face_count() as i64;
    usize::try_from(value).map_err(|_| {
        SegmentError::MalformedComplex(format!(
            "negative first Betti number {value} (O={}, E={}, D={}, A={})",
            c.component_count(),
            c.vertex_count(),
            c.edge_count(),
            c.face_count()
        ))
    })
}

/// Faces of `wide` sharing no pixel with any face of `narrow`: holes born
/// inside the window between the two radii.
pub fn born_faces(narrow: &SkeletonComplex, wide: &SkeletonComplex) -> usize {
    let narrow_faces = narrow.face_of_pixel();
    wide.faces()
        .iter()
        .filter(|f| f.pixels.iter().all(|&p| narrow_faces[p].is_none()))
        .count()
}

/// Persistent first Betti number over the window `[beta, beta + persistence]`:
/// `O - E + D - A - S` with the counts of `R_beta` and `S` the faces of
/// `R_{beta+P}` born in the window.
pub fn persistent_b1(points: &PointSet, beta: f64, persistence: f64) -> Result<usize, SegmentError> {
    if beta.is_nan() || beta <= 0.0 || persistence.is_nan() || persistence < 0.0 {
        return Err(SegmentError::Config(format!(
            "need beta > 0 and persistence >= 0, got {beta} and {persistence}"
        )));
    }
    let narrow = build_beta_skeleton(points, beta);
    let wide = if persistence == 0.0 {
        narrow.clone()
    } else {
        build_beta_skeleton(points, beta + persistence)
    };
    persistent_b1_of(&narrow, &wide)
}

pub(crate) fn persistent_b1_of(narrow: &SkeletonComplex, wide: &SkeletonComplex) -> Result<usize, SegmentError> {
    let base = betti_b1(narrow)?;
    let born = born_faces(narrow, wide);
    base.checked_sub(born).ok_or_else(|| {
        SegmentError::MalformedComplex(format!(
            "{born} faces born in the window exceed B1 = {base}"
        ))
    })
}
