//! Small descriptive-statistics helpers used across the crate.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
}

/// Sample standard deviation (divisor `n - 1`), two-pass.
pub fn sample_std<T: Scalar>(xs: &[T]) -> Result<T> {
    if xs.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: xs.len(),
        });
    }
    let m = mean(xs).unwrap_or_else(T::zero);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Ok((ss / T::from_count(xs.len() - 1)).sqrt())
}

/// All values identical. Checked directly because the two-pass sum of
/// squares of a constant need not round to exactly zero.
pub(crate) fn is_constant<T: Scalar>(xs: &[T]) -> bool {
    xs.iter().all(|&v| v == xs[0])
}

pub(crate) fn ensure_finite<T: Scalar>(xs: &[T]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteValue)
    }
}

/// Total order for values already checked to be finite.
#[inline]
pub(crate) fn cmp_finite<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_finite(&xs[a], &xs[b]));
    let mut ranks = vec![T::zero(); n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j share ranks i+1..=j
        let r = T::from_count(i + 1 + j) / T::lit(2.0);
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: x.len(),
        });
    }
    let mx = mean(x).unwrap_or_else(T::zero);
    let my = mean(y).unwrap_or_else(T::zero);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
        syy = syy + (b - my) * (b - my);
    }
    if is_constant(x) || is_constant(y) || sxx == T::zero() || syy == T::zero() {
        return Err(Error::ZeroVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    ensure_finite(x)?;
    ensure_finite(y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Linearly interpolated quantile of already-sorted data, `q` in [0, 1].
pub(crate) fn sorted_quantile<T: Scalar>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    let pos = q * T::from_count(n - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = pos - T::from_count(lo);
    interpolate(sorted[lo], sorted[hi], frac)
}

/// `lo + frac * (hi - lo)` clamped into `[lo, hi]` so rounding never breaks
/// monotonicity across segments.
#[inline]
pub(crate) fn interpolate<T: Scalar>(lo: T, hi: T, frac: T) -> T {
    if frac <= T::zero() || lo == hi {
        return lo;
    }
    (lo + frac * (hi - lo)).max(lo).min(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_of_two_points() {
        let s = sample_std(&[0.2f64, 0.8]).unwrap();
        assert!((s - 0.18f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            sample_std(&[1.0f64]),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn ranks_average_ties() {
        let r = average_ranks(&[3.0f64, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_is_one_for_monotone_map() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 7.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) - 2.0).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_constant_input() {
        assert!(matches!(
            pearson(&[1.0f64, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance)
        ));
        assert!(matches!(
            pearson(&[0.7f64; 24], &(0..24).map(f64::from).collect::<Vec<_>>()),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn quantile_endpoints() {
        let xs = [0.1f64, 0.2, 0.3, 0.4];
        assert_eq!(sorted_quantile(&xs, 0.0), 0.1);
        assert_eq!(sorted_quantile(&xs, 1.0), 0.4);
        assert!((sorted_quantile(&xs, 0.5) - 0.25).abs() < 1e-15);
    }
}
