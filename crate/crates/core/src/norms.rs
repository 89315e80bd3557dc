//! Variable-exponent Lebesgue machinery: the modular, the Luxemburg norm,
//! derived exponent fields, and normalization helpers.

use crate::field::{ExponentField, ScalarField};
use crate::numeric::pairwise_sum;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// The modular `h^n * sum over the mask of |f(x)|^{p(x)}`.
pub fn modular(f: &ScalarField, p: &ExponentField) -> Result<f64> {
    f.require_same_layout(p.field(), "modular")?;
    if p.lo() < 1.0 {
        return Err(Error::hypothesis("p >= 1", format!("essential infimum {} < 1", p.lo())));
    }
    let terms: Vec<f64> =
        f.masked_indices().map(|i| f.value(i).abs().powf(p.value(i))).collect();
    Ok(f.grid().cell_volume() * pairwise_sum(&terms))
}

/// Output of the Luxemburg norm solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub iterations: usize,
    /// `|modular(f / value) - 1|` at the returned value; 0 when f vanishes.
    pub residual: f64,
}

const LUX_RESIDUAL_TOL: f64 = 1e-11;
const LUX_MAX_ITER: usize = 200;
const LUX_MAX_BRACKET: usize = 60;

/// Luxemburg norm: the infimum over `lambda > 0` with modular(f/lambda) <= 1.
///
/// Bisection on lambda, relying on strict monotone decrease of the modular in
/// lambda for nonzero f. Returns 0 for the zero field.
pub fn luxemburg_norm(f: &ScalarField, p: &ExponentField) -> Result<NormResult> {
    f.require_same_layout(p.field(), "luxemburg_norm")?;
    if p.lo() < 1.0 {
        return Err(Error::hypothesis("p >= 1", format!("essential infimum {} < 1", p.lo())));
    }
    if f.is_zero_on_mask() {
        return Ok(NormResult { value: 0.0, iterations: 0, residual: 0.0 });
    }
    let rho = |lambda: f64| -> f64 {
        let terms: Vec<f64> =
            f.masked_indices().map(|i| (f.value(i).abs() / lambda).powf(p.value(i))).collect();
        f.grid().cell_volume() * pairwise_sum(&terms)
    };

    let mut iterations = 0usize;

    // bracket rho = 1: expand upward while the modular is above 1 or non-finite
    let mut hi = f.max_abs().max(f64::MIN_POSITIVE);
    let mut expand = 0usize;
    loop {
        let r = rho(hi);
        iterations += 1;
        if r.is_finite() && r <= 1.0 {
            break;
        }
        hi *= 2.0;
        expand += 1;
        if expand > LUX_MAX_BRACKET {
            return Err(Error::invalid(
                "luxemburg_norm",
                "modular stayed above 1 (or non-finite) after 60 bracket doublings",
            ));
        }
    }
    let mut lo = hi;
    let mut expand = 0usize;
    loop {
        let next = lo / 2.0;
        let r = rho(next);
        iterations += 1;
        if !r.is_finite() || r > 1.0 {
            lo = next;
            break;
        }
        lo = next;
        hi = next;
        expand += 1;
        if expand > LUX_MAX_BRACKET {
            // modular never exceeds 1: the infimum is 0+, report hi
            let residual = (rho(hi) - 1.0).abs();
            return Ok(NormResult { value: hi, iterations, residual });
        }
    }

    // bisect on the sign of rho - 1
    let mut best = hi;
    let mut best_residual = (rho(hi) - 1.0).abs();
    while iterations < LUX_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at float resolution
        }
        let r = rho(mid);
        iterations += 1;
        let resid = (r - 1.0).abs();
        if resid < best_residual {
            best_residual = resid;
            best = mid;
        }
        if resid <= LUX_RESIDUAL_TOL {
            break;
        }
        if !r.is_finite() || r > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NormResult { value: best, iterations, residual: best_residual })
}

/// Constant-exponent L^p norm, `(h^n sum |f|^p)^{1/p}`.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::hypothesis("p >= 1", format!("p = {p}")));
    }
    let terms: Vec<f64> = f.masked_indices().map(|i| f.value(i).abs().powf(p)).collect();
    Ok((f.grid().cell_volume() * pairwise_sum(&terms)).powf(1.0 / p))
}

/// Sobolev conjugate of a variable exponent under a variable order:
/// `p#(x) = n p(x) / (n - alpha(x) p(x))`, defined while `(alpha p)^+ < n`.
pub fn sharp_exponent(p: &ExponentField, alpha: &ExponentField) -> Result<ExponentField> {
    p.field().require_same_layout(alpha.field(), "sharp_exponent")?;
    let n = p.grid().dim() as f64;
    for i in p.field().masked_indices() {
        let ap = alpha.value(i) * p.value(i);
        if ap >= n {
            let c = p.grid().cell_center(i);
            return Err(Error::hypothesis(
                "(alpha p)^+ < n",
                format!(
                    "alpha(x) p(x) = {ap} >= {n} at cell {i} (x = {:.6}, {:.6})",
                    c[0], c[1]
                ),
            ));
        }
    }
    let q = p
        .field()
        .zip(alpha.field(), |pv, av| n * pv / (n - av * pv))?;
    ExponentField::new(q)
}

/// Target exponent of the Sobolev-Poincare inequality on an s(.)-John domain:
/// `q(x) = n p / (p n (s(x) - 1) + n - s(x) p)`, which reduces to
/// `q(x) = n / (s(x) (n - 1))` at `p = 1`.
pub fn poincare_target_exponent(s: &ExponentField, p: f64, n: usize) -> Result<ExponentField> {
    let nf = n as f64;
    let s_crit = nf / (nf - 1.0);
    if s.lo() < 1.0 || s.hi() >= s_crit {
        return Err(Error::hypothesis(
            "1 <= s^- <= s^+ < n/(n-1)",
            format!("s range [{}, {}], critical value {s_crit}", s.lo(), s.hi()),
        ));
    }
    if p < 1.0 {
        return Err(Error::hypothesis("p >= 1", format!("p = {p}")));
    }
    if p > 1.0 {
        let p_crit = nf / (nf - s.lo() * (nf - 1.0));
        if p >= p_crit {
            return Err(Error::hypothesis(
                "1 < p < n/(n - s^-(n-1))",
                format!("p = {p}, critical value {p_crit}"),
            ));
        }
    }
    let q = s.field().map(|sv| nf * p / (p * nf * (sv - 1.0) + nf - sv * p));
    ExponentField::new(q)
}

/// Scale `f` so its Luxemburg norm equals `target`, using homogeneity of the
/// norm. Returns the scaled field and its recomputed norm.
pub fn normalize(
    f: &ScalarField,
    p: &ExponentField,
    target: f64,
) -> Result<(ScalarField, NormResult)> {
    if target <= 0.0 || !target.is_finite() {
        return Err(Error::invalid("target", "must be positive and finite"));
    }
    if f.is_zero_on_mask() {
        return Err(Error::invalid("normalize", "zero field cannot be normalized"));
    }
    let norm = luxemburg_norm(f, p)?;
    let scaled = f.scale(target / norm.value);
    let check = luxemburg_norm(&scaled, p)?;
    if (check.value - target).abs() > 1e-9 * target {
        return Err(Error::invalid(
            "normalize",
            format!("achieved norm {} vs target {target}", check.value),
        ));
    }
    Ok((scaled, check))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_field, BBox, Grid, TestFunction};
    use approx::assert_relative_eq;

    fn unit_grid(res: usize) -> Grid {
        Grid::new(2, res, BBox::unit()).unwrap()
    }

    fn constant(grid: &Grid, v: f64) -> ScalarField {
        sample_field(grid, &TestFunction::Constant { value: v }, None).unwrap()
    }

    fn two_exponent(grid: &Grid, left: f64, right: f64) -> ExponentField {
        let f = ScalarField::from_fn(grid.clone(), None, |p| if p[0] < 0.5 { left } else { right })
            .unwrap();
        ExponentField::new(f).unwrap()
    }

    #[test]
    fn modular_trivia() {
        let g = unit_grid(16);
        let p2 = ExponentField::constant(g.clone(), None, 2.0).unwrap();
        assert_eq!(modular(&constant(&g, 0.0), &p2).unwrap(), 0.0);
        assert_relative_eq!(modular(&constant(&g, 1.0), &p2).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(modular(&constant(&g, 2.0), &p2).unwrap(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn modular_rejects_mismatch_and_small_p() {
        let g = unit_grid(16);
        let other = unit_grid(32);
        let p = ExponentField::constant(other, None, 2.0).unwrap();
        assert!(modular(&constant(&g, 1.0), &p).is_err());
        let p_small = ExponentField::constant(g.clone(), None, 0.5).unwrap();
        assert!(modular(&constant(&g, 1.0), &p_small).is_err());
    }

    #[test]
    fn luxemburg_constant_exponent_cases() {
        let g = unit_grid(32);
        let p2 = ExponentField::constant(g.clone(), None, 2.0).unwrap();
        let n = luxemburg_norm(&constant(&g, 3.0), &p2).unwrap();
        assert_relative_eq!(n.value, 3.0, max_relative = 1e-10);
        assert!(n.residual <= 1e-10);

        let zero = luxemburg_norm(&constant(&g, 0.0), &p2).unwrap();
        assert_eq!(zero.value, 0.0);
        assert_eq!(zero.residual, 0.0);
    }

    #[test]
    fn luxemburg_two_exponent_unit_case() {
        // rho(f) = 1/2 * 1 + 1/2 * 1 = 1 exactly
        let g = unit_grid(32);
        let p = two_exponent(&g, 2.0, 4.0);
        let n = luxemburg_norm(&constant(&g, 1.0), &p).unwrap();
        assert_relative_eq!(n.value, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn luxemburg_half_indicator_against_lambda_scan() {
        // f = indicator of the left half: rho(f/lambda) = lambda^{-2}/2 = 1
        let g = unit_grid(64);
        let p = two_exponent(&g, 2.0, 4.0);
        let f = ScalarField::from_fn(g.clone(), None, |q| if q[0] < 0.5 { 1.0 } else { 0.0 })
            .unwrap();
        let n = luxemburg_norm(&f, &p).unwrap();
        assert!((n.value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);

        // oracle: dense scan of the modular in lambda
        let mut best = f64::INFINITY;
        let mut lambda = 0.5;
        while lambda < 1.0 {
            if modular(&f.scale(1.0 / lambda), &p).unwrap() <= 1.0 {
                best = best.min(lambda);
            }
            lambda += 1e-6;
        }
        assert!((n.value - best).abs() < 1e-5);
    }

    #[test]
    fn luxemburg_homogeneity_and_unit_ball() {
        let g = unit_grid(32);
        let p = two_exponent(&g, 1.5, 3.0);
        let f = sample_field(
            &g,
            &TestFunction::GaussianBump { center: [0.3, 0.6, 0.0], sigma: 0.2, amplitude: 2.0 },
            None,
        )
        .unwrap();
        let base = luxemburg_norm(&f, &p).unwrap().value;
        for c in [0.1, 3.0, -2.0] {
            let scaled = luxemburg_norm(&f.scale(c), &p).unwrap().value;
            assert_relative_eq!(scaled, c.abs() * base, max_relative = 1e-9);
        }
        let unit = modular(&f.scale(1.0 / base), &p).unwrap();
        assert!((unit - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn luxemburg_monotone_in_absolute_value() {
        let g = unit_grid(16);
        let p = two_exponent(&g, 2.0, 3.0);
        let f = sample_field(
            &g,
            &TestFunction::GaussianBump { center: [0.5, 0.5, 0.0], sigma: 0.25, amplitude: 1.0 },
            None,
        )
        .unwrap();
        let bigger = f.map(|v| v.abs() + 0.1);
        let nf = luxemburg_norm(&f, &p).unwrap().value;
        let ng = luxemburg_norm(&bigger, &p).unwrap().value;
        assert!(nf <= ng + 1e-12);
    }

    #[test]
    fn sharp_exponent_cases() {
        let g = unit_grid(16);
        let p = ExponentField::constant(g.clone(), None, 4.0 / 3.0).unwrap();
        let a1 = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let q = sharp_exponent(&p, &a1).unwrap();
        assert_relative_eq!(q.lo(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(q.hi(), 4.0, max_relative = 1e-12);

        // alpha = 0 is the identity
        let a0 = ExponentField::constant(g.clone(), None, 0.0).unwrap();
        let q = sharp_exponent(&p, &a0).unwrap();
        assert_relative_eq!(q.lo(), 4.0 / 3.0, max_relative = 1e-12);

        let p1 = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let q = sharp_exponent(&p1, &a1).unwrap();
        assert_relative_eq!(q.hi(), 2.0, max_relative = 1e-12);

        // (alpha p)^+ >= n rejected with the violating cell named
        let p_big = ExponentField::constant(g.clone(), None, 2.0).unwrap();
        let err = sharp_exponent(&p_big, &a1).unwrap_err();
        assert!(err.to_string().contains("cell"));
    }

    #[test]
    fn poincare_target_exponent_cases() {
        let g = unit_grid(16);
        let s32 = ExponentField::constant(g.clone(), None, 1.5).unwrap();
        let q = poincare_target_exponent(&s32, 1.0, 2).unwrap();
        assert_relative_eq!(q.lo(), 4.0 / 3.0, max_relative = 1e-12);

        let s1 = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let q = poincare_target_exponent(&s1, 1.0, 2).unwrap();
        assert_relative_eq!(q.lo(), 2.0, max_relative = 1e-12);

        let q = poincare_target_exponent(&s1, 1.2, 2).unwrap();
        assert_relative_eq!(q.lo(), 3.0, max_relative = 1e-12);

        // p beyond the admissible range is rejected
        let s14 = ExponentField::constant(g.clone(), None, 1.4).unwrap();
        // critical p = 2 / (2 - 1.4) = 10/3
        assert!(poincare_target_exponent(&s14, 3.4, 2).is_err());
        // s beyond n/(n-1) is rejected
        let s2 = ExponentField::constant(g, None, 2.0).unwrap();
        assert!(poincare_target_exponent(&s2, 1.0, 2).is_err());
    }

    #[test]
    fn normalize_cases() {
        let g = unit_grid(32);
        let p2 = ExponentField::constant(g.clone(), None, 2.0).unwrap();
        let f = constant(&g, 3.0);
        let (scaled, n) = normalize(&f, &p2, 1.0).unwrap();
        assert_relative_eq!(n.value, 1.0, max_relative = 1e-9);
        assert_relative_eq!(scaled.value(0), 1.0, max_relative = 1e-9);

        // target equal to the current norm leaves the field unchanged
        let (same, _) = normalize(&f, &p2, 3.0).unwrap();
        assert_relative_eq!(same.value(0), 3.0, max_relative = 1e-9);

        // |Omega| = 1: the hypothesis constant 1/(2(1+|Omega|)) = 1/4
        let target = 1.0 / (2.0 * (1.0 + f.masked_measure()));
        assert_relative_eq!(target, 0.25, max_relative = 1e-12);
        let (_, n) = normalize(&f, &p2, target).unwrap();
        assert_relative_eq!(n.value, 0.25, max_relative = 1e-9);

        assert!(normalize(&constant(&g, 0.0), &p2, 1.0).is_err());
    }

    #[test]
    fn constant_exponent_agreement_with_modular_root() {
        let g = unit_grid(24);
        for (seed, p) in [(1u64, 1.5f64), (2, 2.0), (3, 3.5)] {
            let pf = ExponentField::constant(g.clone(), None, p).unwrap();
            let f = sample_field(
                &g,
                &TestFunction::RandomSmooth {
                    seed,
                    modes: 6,
                    max_wavenumber: 3,
                    amplitude: 1.0,
                    offset: 0.3,
                },
                None,
            )
            .unwrap();
            let lux = luxemburg_norm(&f, &pf).unwrap().value;
            let direct = modular(&f, &pf).unwrap().powf(1.0 / p);
            assert_relative_eq!(lux, direct, max_relative = 1e-10);
        }
    }
}
