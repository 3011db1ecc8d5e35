//! Euclidean distance kernels. Accumulation is in `f64`, in index order.

/// Squared L2 distance.
#[inline]
pub fn sq_l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = f64::from(x) - f64::from(y);
        acc += d * d;
    }
    acc
}

/// Squared L2 distance, abandoning early once the partial sum exceeds
/// `bound`. Returns `None` when abandoned. When `Some`, the value is
/// bit-identical to [`sq_l2`].
#[inline]
pub fn sq_l2_bounded(a: &[f32], b: &[f32], bound: f64) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    const CHUNK: usize = 16;
    let mut acc = 0f64;
    let mut ca = a.chunks(CHUNK);
    let mut cb = b.chunks(CHUNK);
    while let (Some(xa), Some(xb)) = (ca.next(), cb.next()) {
        for (&x, &y) in xa.iter().zip(xb) {
            let d = f64::from(x) - f64::from(y);
            acc += d * d;
        }
        if acc > bound {
            return None;
        }
    }
    Some(acc)
}

/// Exhaustive nearest neighbor over a row-major matrix. Returns the index
/// of the first row attaining the minimum and the squared distance.
pub fn nearest_exhaustive(rows: &[f32], dim: usize, query: &[f32]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.chunks_exact(dim).enumerate() {
        let bound = best.map_or(f64::INFINITY, |(_, d)| d);
        if let Some(d) = sq_l2_bounded(row, query, bound) {
            if d < bound {
                best = Some((i, d));
            }
        }
    }
    best
}
