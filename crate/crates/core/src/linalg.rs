//! Dense vector helpers shared by the objectives, samplers and algorithms.

use alloc::vec;
use alloc::vec::Vec;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Sum of a sequence of equal-length vectors by pairwise (tree) reduction in
/// the given order. The reduction tree depends only on the number of items, so
/// the result is reproducible bit for bit.
pub fn pairwise_sum<'a, I>(items: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let items: Vec<&[f64]> = items.into_iter().collect();
    let mut out = vec![0.0; dim];
    sum_into(&items, &mut out);
    out
}

fn sum_into(items: &[&[f64]], out: &mut [f64]) {
    match items.len() {
        0 => {}
        1 => out.copy_from_slice(items[0]),
        2 => {
            for ((o, a), b) in out.iter_mut().zip(items[0]).zip(items[1]) {
                *o = a + b;
            }
        }
        len => {
            let mid = len / 2;
            sum_into(&items[..mid], out);
            let mut right = vec![0.0; out.len()];
            sum_into(&items[mid..], &mut right);
            for (o, r) in out.iter_mut().zip(&right) {
                *o += r;
            }
        }
    }
}

/// Arithmetic mean of the given vectors using [`pairwise_sum`].
pub fn pairwise_mean<'a, I>(items: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let items: Vec<&[f64]> = items.into_iter().collect();
    let count = items.len();
    let mut out = pairwise_sum(items, dim);
    if count > 0 {
        let inv = 1.0 / count as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let s = pairwise_sum(rows.iter().map(Vec::as_slice), 2);
        assert_eq!(s, vec![21.0, 42.0]);
        let m = pairwise_mean(rows.iter().map(Vec::as_slice), 2);
        assert_eq!(m, vec![3.0, 6.0]);
    }

    #[test]
    fn empty_sum_is_zero() {
        let s = pairwise_sum(core::iter::empty(), 3);
        assert_eq!(s, vec![0.0; 3]);
    }
}
