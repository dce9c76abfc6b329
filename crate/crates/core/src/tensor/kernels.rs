//! Inner loops shared by the public ops. None of these touch the MAC counter.

const LANES: usize = 8;

/// Dot product with a fixed eight-lane reduction order.
///
/// The order depends only on the slice length, so the same inputs give the
/// same bits no matter which thread evaluates them.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(y: &mut [f32], alpha: f32, x: &[f32]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax over one row. Returns `false` if the row
/// contained a NaN (the row is then left NaN-filled).
pub(crate) fn softmax_in_place(row: &mut [f32]) -> bool {
    if row.iter().any(|v| v.is_nan()) {
        row.fill(f32::NAN);
        return false;
    }
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    true
}

/// Minimum amount of scalar work before an op fans out to rayon.
pub(crate) const PAR_THRESHOLD: usize = 1 << 15;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_on_integers() {
        for len in [0usize, 1, 7, 8, 9, 31, 64] {
            let a: Vec<f32> = (0..len).map(|i| (i % 5) as f32 - 2.0).collect();
            let b: Vec<f32> = (0..len).map(|i| (i % 3) as f32).collect();
            let naive: f32 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert_eq!(dot(&a, &b), naive, "len {len}");
        }
    }

    #[test]
    fn softmax_flags_nan() {
        let mut r = [1.0, f32::NAN];
        assert!(!softmax_in_place(&mut r));
        assert!(r[0].is_nan());
    }
}
