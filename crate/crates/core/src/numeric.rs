//! Deterministic summation, least-squares fitting, and schedule helpers.

/// Pairwise (tree) summation. Deterministic for a fixed input order and
/// accurate to O(log n) rounding growth, which keeps reductions reproducible
/// across thread counts (each caller sums a fully materialized slice).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Result of an ordinary least-squares line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Least-squares line through `(x, y)` pairs. Returns `None` for fewer than
/// two points or a degenerate abscissa.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pairwise_sum(xs) / nf;
    let my = pairwise_sum(ys) / nf;
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let sxy: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let syy: Vec<f64> = ys.iter().map(|y| (y - my) * (y - my)).collect();
    let sxx = pairwise_sum(&sxx);
    let sxy = pairwise_sum(&sxy);
    let syy = pairwise_sum(&syy);
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LinearFit { slope, intercept, r_squared, n_points: n })
}

/// Geometric ladder `start * ratio^k` for `k = 0, 1, ...` up to and including
/// the first term `>= stop`. Always non-empty for positive inputs.
pub fn geometric_ladder(start: f64, stop: f64, ratio: f64) -> Vec<f64> {
    assert!(start > 0.0 && ratio > 1.0);
    let mut out = vec![start];
    let mut r = start;
    while r < stop {
        r *= ratio;
        out.push(r);
    }
    out
}

/// `count` geometrically spaced values from `lo` to `hi` inclusive.
pub fn geometric_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 || hi == lo {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    let mut out: Vec<f64> = (0..count).map(|k| lo * ratio.powi(k as i32)).collect();
    // pin the endpoint exactly
    *out.last_mut().unwrap() = hi;
    out
}

/// Smallest `k` with `x <= 2^k` (i.e. `ceil(log2 x)`), for `x >= 1`.
pub fn ceil_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Lebesgue measure of the unit ball in dimension `n` (2 or 3).
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Surface measure of the unit sphere in dimension `n` (`n * omega_n`).
pub fn unit_sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_ones() {
        let xs = vec![1.0; 1000];
        assert_eq!(pairwise_sum(&xs), 1000.0);
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ceil_log2_small_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
    }

    #[test]
    fn ladder_reaches_stop() {
        let l = geometric_ladder(1.0, 10.0, std::f64::consts::SQRT_2);
        assert!(*l.last().unwrap() >= 10.0);
        assert_eq!(l[0], 1.0);
    }

    #[test]
    fn levels_endpoints_pinned() {
        let l = geometric_levels(0.5, 8.0, 16);
        assert_eq!(l[0], 0.5);
        assert_eq!(*l.last().unwrap(), 8.0);
        assert_eq!(l.len(), 16);
    }
}
