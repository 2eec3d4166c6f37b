//! Small descriptive-statistics helpers shared across modules.

use std::cmp::Ordering;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1 divisor) sample variance, two-pass.
///
/// Returns `None` for fewer than two observations.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some(ss / (xs.len() - 1) as f64)
}

pub fn sample_std(xs: &[f64]) -> Option<f64> {
    sample_variance(xs).map(f64::sqrt)
}

pub(crate) fn total_cmp(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(total_cmp);
    v
}

/// Index `k` (1-based) of the type-1 inverse empirical CDF at `tau`, i.e.
/// `k = ceil(tau * n)` clamped to `[1, n]`.
///
/// A small slack absorbs representation error so that `0.08 * 75` maps to 6
/// rather than 7.
pub fn order_statistic_index(tau: f64, n: usize) -> usize {
    let raw = tau * n as f64;
    let k = (raw - 1e-9 * raw.abs().max(1.0)).ceil();
    (k.max(1.0) as usize).min(n)
}

/// Type-1 empirical quantile: the `ceil(tau * n)`-th order statistic.
pub fn empirical_quantile(xs: &[f64], tau: f64) -> f64 {
    let s = sorted(xs);
    s[order_statistic_index(tau, s.len()) - 1]
}

/// Linear-interpolation percentile (Hyndman–Fan type 7) of already sorted data.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Kendall's tau-b between two paired samples. O(n^2), fine for the sample
/// sizes used here.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tie_x += 1;
            } else if dy == 0.0 {
                tie_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let n1 = (conc + disc + tie_x) as f64;
    let n2 = (conc + disc + tie_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (conc - disc) as f64 / (n1 * n2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_is_unbiased() {
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0, 4.0]), Some(5.0 / 3.0));
        assert_eq!(sample_variance(&[1.0]), None);
    }

    #[test]
    fn order_statistic_index_absorbs_rounding() {
        assert_eq!(order_statistic_index(0.08, 75), 6);
        assert_eq!(order_statistic_index(0.5, 10), 5);
        assert_eq!(order_statistic_index(0.08, 10), 1);
        assert_eq!(order_statistic_index(0.92, 10), 10);
        assert_eq!(order_statistic_index(0.51, 10), 6);
    }

    #[test]
    fn kendall_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]), -1.0);
        // one discordant pair out of six
        assert!((kendall_tau(&x, &[2.0, 1.0, 3.0, 4.0]) - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn percentile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&s, 0.5), 3.0);
        assert_eq!(percentile_sorted(&s, 0.0), 1.0);
        assert_eq!(percentile_sorted(&s, 1.0), 5.0);
        assert_eq!(percentile_sorted(&s, 0.125), 1.5);
    }
}
