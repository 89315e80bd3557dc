//! Variable-order Riesz potential, its John-domain reparametrization, the
//! variable-order fractional maximal function, tail integrals, and the
//! pointwise comparisons built from them.
//!
//! Kernels are evaluated by direct summation over masked cells. Because the
//! grid is uniform, squared distances between cell centers are integers in
//! units of h^2; evaluation points sharing one kernel exponent share a
//! per-offset kernel table, which is what keeps full batteries affordable.
//! The x-dependent exponent rules out convolution tricks.

use crate::field::{dist2, ExponentField, Grid, Point, ScalarField};
use crate::norms::{luxemburg_norm, sharp_exponent};
use crate::numeric::{geometric_ladder, pairwise_sum, unit_ball_volume, unit_sphere_area};
use crate::par::par_map;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Evaluation points for potential operators: masked cell centers, no
/// duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    grid: Grid,
    indices: Vec<usize>,
}

impl EvalSet {
    /// Build from flat cell indices; rejects unmasked cells and duplicates.
    pub fn from_indices(grid: Grid, mask: &[bool], indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; grid.num_cells()];
        for &i in &indices {
            if i >= mask.len() || !mask[i] {
                return Err(Error::invalid("eval", format!("cell {i} is not masked")));
            }
            if seen[i] {
                return Err(Error::invalid("eval", format!("duplicate cell {i}")));
            }
            seen[i] = true;
        }
        Ok(EvalSet { grid, indices })
    }

    /// Every masked cell.
    pub fn all_masked(grid: Grid, mask: &[bool]) -> Result<Self> {
        let indices = (0..mask.len()).filter(|&i| mask[i]).collect();
        EvalSet::from_indices(grid, mask, indices)
    }

    /// Stratified subsample: one representative cell per block of a
    /// `per_axis`-way partition of each axis, kept when masked.
    pub fn stratified(grid: Grid, mask: &[bool], per_axis: usize) -> Result<Self> {
        let r = grid.resolution();
        let per_axis = per_axis.clamp(1, r);
        let factor = (r / per_axis).max(1);
        let reps: Vec<usize> = (0..per_axis).map(|k| (k * factor + factor / 2).min(r - 1)).collect();
        let mut indices = Vec::new();
        match grid.dim() {
            2 => {
                for &jy in &reps {
                    for &jx in &reps {
                        let i = grid.index([jx, jy, 0]);
                        if mask[i] {
                            indices.push(i);
                        }
                    }
                }
            }
            _ => {
                for &jz in &reps {
                    for &jy in &reps {
                        for &jx in &reps {
                            let i = grid.index([jx, jy, jz]);
                            if mask[i] {
                                indices.push(i);
                            }
                        }
                    }
                }
            }
        }
        if indices.is_empty() {
            return Err(Error::EmptyMask);
        }
        EvalSet::from_indices(grid, mask, indices)
    }

    /// Snap arbitrary points to their nearest masked cell centers.
    pub fn from_points(grid: Grid, mask: &[bool], points: &[Point]) -> Result<Self> {
        let mut indices = Vec::with_capacity(points.len());
        for &p in points {
            indices.push(nearest_masked_cell(&grid, mask, p)?);
        }
        indices.sort_unstable();
        indices.dedup();
        EvalSet::from_indices(grid, mask, indices)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.indices.iter().map(|&i| self.grid.cell_center(i)).collect()
    }
}

/// Nearest masked cell to a physical point, searching outward by rings.
pub fn nearest_masked_cell(grid: &Grid, mask: &[bool], p: Point) -> Result<usize> {
    let start = grid.locate(p);
    if mask[start] {
        return Ok(start);
    }
    let r = grid.resolution() as i64;
    let c0 = grid.coords(start);
    let dim = grid.dim();
    let mut best: Option<(f64, usize)> = None;
    for ring in 1..r {
        let lo = |v: usize| (v as i64 - ring).max(0);
        let hi = |v: usize| (v as i64 + ring).min(r - 1);
        let zr = if dim == 3 { (lo(c0[2]), hi(c0[2])) } else { (0, 0) };
        for z in zr.0..=zr.1 {
            for y in lo(c0[1])..=hi(c0[1]) {
                for x in lo(c0[0])..=hi(c0[0]) {
                    let on_ring = (x - c0[0] as i64).abs() == ring
                        || (y - c0[1] as i64).abs() == ring
                        || (dim == 3 && (z - c0[2] as i64).abs() == ring);
                    if !on_ring {
                        continue;
                    }
                    let i = grid.index([x as usize, y as usize, z as usize]);
                    if mask[i] {
                        let d = dist2(grid.cell_center(i), p);
                        if best.map_or(true, |(bd, bi)| d < bd || (d == bd && i < bi)) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        // one extra ring after the first hit guarantees the true nearest
        if let Some((bd, bi)) = best {
            let ring_min = (ring as f64 - 1.0).max(0.0) * grid.spacing();
            if bd.sqrt() <= ring_min || ring == r - 1 {
                return Ok(bi);
            }
        }
    }
    best.map(|(_, i)| i).ok_or(Error::EmptyMask)
}

/// Assign every masked cell to its nearest evaluation point by multi-source
/// BFS over the cell graph (used to extend point-sampled level sets to cell
/// masks). Returns, per cell, the position of the owning point in `eval`.
pub fn nearest_eval_assignment(mask: &[bool], eval: &EvalSet) -> Vec<Option<u32>> {
    let grid = eval.grid();
    let r = grid.resolution();
    let mut owner: Vec<Option<u32>> = vec![None; mask.len()];
    let mut queue = std::collections::VecDeque::new();
    for (k, &i) in eval.indices().iter().enumerate() {
        owner[i] = Some(k as u32);
        queue.push_back(i);
    }
    while let Some(i) = queue.pop_front() {
        let c = grid.coords(i);
        let who = owner[i];
        for a in 0..grid.dim() {
            for step in [-1i64, 1] {
                let v = c[a] as i64 + step;
                if v < 0 || v >= r as i64 {
                    continue;
                }
                let mut cc = c;
                cc[a] = v as usize;
                let j = grid.index(cc);
                if mask[j] && owner[j].is_none() {
                    owner[j] = who;
                    queue.push_back(j);
                }
            }
        }
    }
    owner
}

struct CellEntry {
    coords: [i64; 3],
    absf: f64,
}

fn masked_entries(f: &ScalarField) -> Vec<CellEntry> {
    f.masked_indices()
        .map(|i| {
            let c = f.grid().coords(i);
            CellEntry { coords: [c[0] as i64, c[1] as i64, c[2] as i64], absf: f.value(i).abs() }
        })
        .collect()
}

#[inline]
fn int_dist2(a: [i64; 3], b: [i64; 3]) -> u64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz) as u64
}

#[inline]
fn kernel_pow(d2_phys: f64, e2: f64) -> f64 {
    // (d^2)^{e2} with branch-free fast paths for the common exponents
    if e2 == -0.5 {
        1.0 / d2_phys.sqrt()
    } else if e2 == -1.0 {
        1.0 / d2_phys
    } else {
        d2_phys.powf(e2)
    }
}

/// Equal-volume-ball correction for the singular self cell:
/// `|f(x)| * sigma_{n-1} * r_eq^{alpha} / alpha` with `omega_n r_eq^n = h^n`.
fn self_cell_term(grid: &Grid, fx_abs: f64, alpha: f64) -> f64 {
    let n = grid.dim();
    let r_eq = (grid.cell_volume() / unit_ball_volume(n)).powf(1.0 / n as f64);
    fx_abs * unit_sphere_area(n) * r_eq.powf(alpha) / alpha
}

fn check_potential_inputs(f: &ScalarField, alpha: &ExponentField, eval: &EvalSet) -> Result<()> {
    f.require_same_layout(alpha.field(), "riesz_potential")?;
    if eval.grid() != f.grid() {
        return Err(Error::invalid("eval", "grid mismatch with field"));
    }
    let n = f.grid().dim() as f64;
    if !(alpha.lo() > 0.0) || !(alpha.hi() < n) {
        return Err(Error::hypothesis(
            "0 < alpha^- <= alpha^+ < n",
            format!("alpha range [{}, {}], n = {n}", alpha.lo(), alpha.hi()),
        ));
    }
    for &i in eval.indices() {
        if !f.is_masked(i) {
            return Err(Error::invalid("eval", format!("eval point at cell {i} is unmasked")));
        }
    }
    Ok(())
}

/// Variable-order Riesz potential at the evaluation points:
/// `h^n * sum over masked y != x of |f(y)| |x-y|^{alpha(x)-n}` plus the
/// equal-volume-ball self-cell correction.
pub fn riesz_potential(f: &ScalarField, alpha: &ExponentField, eval: &EvalSet) -> Result<Vec<f64>> {
    check_potential_inputs(f, alpha, eval)?;
    let grid = f.grid();
    let n = grid.dim() as f64;
    let h2 = grid.spacing() * grid.spacing();
    let cell_vol = grid.cell_volume();
    let cells = masked_entries(f);

    // group evaluation points by kernel exponent so they can share a table
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, &i) in eval.indices().iter().enumerate() {
        let e2 = (alpha.value(i) - n) / 2.0;
        groups.entry(e2.to_bits()).or_default().push(k);
    }

    let max_d2 = {
        let m = (grid.resolution() - 1) as u64;
        grid.dim() as u64 * m * m
    };

    let mut out = vec![0.0; eval.len()];
    for (bits, members) in groups {
        let e2 = f64::from_bits(bits);
        let table: Option<Vec<f64>> = if members.len() >= 2 {
            let mut t = vec![0.0; (max_d2 + 1) as usize];
            for (d2, slot) in t.iter_mut().enumerate().skip(1) {
                *slot = kernel_pow(h2 * d2 as f64, e2);
            }
            Some(t)
        } else {
            None
        };
        let values = par_map(&members, |&k| {
            let i = eval.indices()[k];
            let ci = grid.coords(i);
            let ci = [ci[0] as i64, ci[1] as i64, ci[2] as i64];
            let mut terms = Vec::with_capacity(cells.len());
            match &table {
                Some(t) => {
                    for c in &cells {
                        let d2 = int_dist2(ci, c.coords);
                        if d2 > 0 {
                            terms.push(c.absf * t[d2 as usize]);
                        }
                    }
                }
                None => {
                    for c in &cells {
                        let d2 = int_dist2(ci, c.coords);
                        if d2 > 0 {
                            terms.push(c.absf * kernel_pow(h2 * d2 as f64, e2));
                        }
                    }
                }
            }
            let a = alpha.value(i);
            cell_vol * pairwise_sum(&terms) + self_cell_term(grid, f.value(i).abs(), a)
        });
        for (k, v) in members.into_iter().zip(values) {
            out[k] = v;
        }
    }
    Ok(out)
}

/// Kernel order for the John-domain form: `alpha(x) = n - s(x)(n-1)`.
pub fn order_from_s(s: &ExponentField) -> Result<ExponentField> {
    let n = s.grid().dim() as f64;
    s.map(|sv| n - sv * (n - 1.0))
}

/// Riesz potential reparametrized by a cusp exponent field s with
/// `1 <= s^- <= s^+ < n/(n-1)`; computed through the substitution
/// `alpha = n - s(n-1)`, so it agrees with [`riesz_potential`] bit for bit.
pub fn riesz_tilde(f: &ScalarField, s: &ExponentField, eval: &EvalSet) -> Result<Vec<f64>> {
    let n = f.grid().dim() as f64;
    if s.lo() < 1.0 || s.hi() >= n / (n - 1.0) {
        return Err(Error::hypothesis(
            "1 <= s^- <= s^+ < n/(n-1)",
            format!("s range [{}, {}]", s.lo(), s.hi()),
        ));
    }
    let alpha = order_from_s(s)?;
    riesz_potential(f, &alpha, eval)
}

/// Default radius schedule: the geometric ladder `h, sqrt(2) h, 2h, ...` up
/// to the bounding-box diameter.
pub fn default_radius_schedule(grid: &Grid) -> Vec<f64> {
    geometric_ladder(grid.spacing(), grid.bbox_diameter(), std::f64::consts::SQRT_2)
}

/// Variable-order fractional maximal function at the evaluation points:
/// at each x the maximum over scheduled radii r of
/// `r^{alpha(x)} / (omega_n r^n) * h^n * sum over masked B(x, r) of |f|`.
pub fn fractional_maximal_at(
    f: &ScalarField,
    alpha: &ExponentField,
    radii: &[f64],
    eval: &EvalSet,
) -> Result<Vec<f64>> {
    f.require_same_layout(alpha.field(), "fractional_maximal")?;
    if eval.grid() != f.grid() {
        return Err(Error::invalid("eval", "grid mismatch with field"));
    }
    let n = f.grid().dim() as f64;
    if alpha.lo() < 0.0 || alpha.hi() >= n {
        return Err(Error::hypothesis(
            "0 <= alpha^- <= alpha^+ < n",
            format!("alpha range [{}, {}]", alpha.lo(), alpha.hi()),
        ));
    }
    let mut radii: Vec<f64> = radii.to_vec();
    radii.retain(|r| *r > 0.0);
    radii.sort_by(|a, b| a.total_cmp(b));
    radii.dedup();
    if radii.is_empty() {
        return Err(Error::invalid("radii", "schedule must contain a positive radius"));
    }

    let grid = f.grid();
    let h2 = grid.spacing() * grid.spacing();
    let cell_vol = grid.cell_volume();
    let omega = unit_ball_volume(grid.dim());
    let cells = masked_entries(f);
    // squared radii in integer h^2 units for the bucket search
    let r2_int: Vec<f64> = radii.iter().map(|r| (r * r) / h2).collect();

    let out = par_map(eval.indices(), |&i| {
        let ci = grid.coords(i);
        let ci = [ci[0] as i64, ci[1] as i64, ci[2] as i64];
        let mut bucket = vec![0.0f64; radii.len()];
        let top = *r2_int.last().unwrap();
        for c in &cells {
            let d2 = int_dist2(ci, c.coords) as f64;
            if d2 > top {
                continue;
            }
            let k = r2_int.partition_point(|&r2| r2 < d2);
            bucket[k] += c.absf;
        }
        let a = alpha.value(i);
        let mut cum = 0.0;
        let mut best = 0.0f64;
        for (k, b) in bucket.iter().enumerate() {
            cum += b;
            let r = radii[k];
            let avg = cell_vol * cum / (omega * r.powi(grid.dim() as i32));
            let term = r.powf(a) * avg;
            if term > best {
                best = term;
            }
        }
        best
    });
    Ok(out)
}

/// Fractional maximal function on every masked cell, as a field.
pub fn fractional_maximal(
    f: &ScalarField,
    alpha: &ExponentField,
    radii: &[f64],
) -> Result<ScalarField> {
    let eval = EvalSet::all_masked(f.grid().clone(), f.mask())?;
    let vals = fractional_maximal_at(f, alpha, radii, &eval)?;
    let mut values = vec![0.0; f.grid().num_cells()];
    for (&i, v) in eval.indices().iter().zip(vals) {
        values[i] = v;
    }
    ScalarField::from_raw(f.grid().clone(), values, f.mask().to_vec())
}

/// Tail of the Riesz kernel sum outside `B(x, r)`:
/// `h^n * sum over masked |x-y| >= r of |f(y)| |x-y|^{alpha(x)-n}`.
pub fn tail_integral(f: &ScalarField, x: Point, r: f64, alpha: &ExponentField) -> Result<f64> {
    f.require_same_layout(alpha.field(), "tail_integral")?;
    if !(r > 0.0) {
        return Err(Error::invalid("r", "tail radius must be positive"));
    }
    let grid = f.grid();
    let xi = grid.locate(x);
    if !f.is_masked(xi) {
        return Err(Error::invalid("x", "tail point is unmasked"));
    }
    let n = grid.dim() as f64;
    let e2 = (alpha.value(xi) - n) / 2.0;
    let cx = grid.coords(xi);
    let cx = [cx[0] as i64, cx[1] as i64, cx[2] as i64];
    let h2 = grid.spacing() * grid.spacing();
    let r2 = (r * r) / h2;
    let cells = masked_entries(f);
    let terms: Vec<f64> = cells
        .iter()
        .filter_map(|c| {
            let d2 = int_dist2(cx, c.coords) as f64;
            if d2 >= r2 && d2 > 0.0 {
                Some(c.absf * kernel_pow(h2 * d2, e2))
            } else {
                None
            }
        })
        .collect();
    Ok(grid.cell_volume() * pairwise_sum(&terms))
}

/// One evaluation point of a two-sided pointwise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub index: usize,
    pub point: Point,
    pub left: f64,
    pub right: f64,
    pub ratio: f64,
}

/// Pointwise comparison `left <= c * right` over an evaluation set, with the
/// calibrated constant `c = max ratio`. Points where the right side vanishes
/// while the left does not are listed separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseComparison {
    pub points: Vec<ComparisonPoint>,
    pub degenerate: Vec<ComparisonPoint>,
    pub max_ratio: f64,
    pub argmax: Option<Point>,
    pub calibrated_constant: f64,
}

impl PointwiseComparison {
    pub fn empty() -> Self {
        PointwiseComparison {
            points: Vec::new(),
            degenerate: Vec::new(),
            max_ratio: 0.0,
            argmax: None,
            calibrated_constant: 0.0,
        }
    }

    /// Assemble from left/right values at the eval points.
    pub fn build(eval: &EvalSet, left: &[f64], right: &[f64]) -> Self {
        let mut points = Vec::new();
        let mut degenerate = Vec::new();
        let mut max_ratio = 0.0f64;
        let mut argmax = None;
        for (k, &i) in eval.indices().iter().enumerate() {
            let p = eval.grid().cell_center(i);
            let (l, r) = (left[k], right[k]);
            if r == 0.0 {
                let cp = ComparisonPoint { index: i, point: p, left: l, right: r, ratio: 0.0 };
                if l > 0.0 {
                    degenerate.push(cp);
                } else {
                    points.push(cp);
                }
                continue;
            }
            let ratio = l / r;
            points.push(ComparisonPoint { index: i, point: p, left: l, right: r, ratio });
            if ratio > max_ratio {
                max_ratio = ratio;
                argmax = Some(p);
            }
        }
        PointwiseComparison { points, degenerate, max_ratio, argmax, calibrated_constant: max_ratio }
    }
}

fn check_unit_norm(f: &ScalarField, p: &ExponentField) -> Result<()> {
    let norm = luxemburg_norm(f, p)?;
    // slack absorbs the normalization solver tolerance
    if norm.value > 1.0 + 1e-6 {
        return Err(Error::hypothesis(
            "||f||_{p(.)} <= 1",
            format!("Luxemburg norm is {}", norm.value),
        ));
    }
    Ok(())
}

fn check_subcritical(p: &ExponentField, alpha: &ExponentField) -> Result<()> {
    let n = p.grid().dim() as f64;
    for i in p.field().masked_indices() {
        let ap = alpha.value(i) * p.value(i);
        if ap >= n {
            return Err(Error::hypothesis(
                "(alpha p)^+ < n",
                format!("alpha(x) p(x) = {ap} at cell {i}"),
            ));
        }
    }
    Ok(())
}

/// Default order drop for the Hedberg comparison: `eps = (r - 1) alpha`.
pub fn default_epsilon(alpha: &ExponentField, r: f64) -> Result<ExponentField> {
    if !(r > 1.0) {
        return Err(Error::invalid("r", "epsilon factor needs r > 1"));
    }
    alpha.map(|a| (r - 1.0) * a)
}

/// Hedberg-type pointwise comparison:
/// left = Riesz potential, right (with c = 1) =
/// `max(1, 1/delta(x))^{(p^+ - 1)/p^+} * (M_{alpha-eps} f)^{delta/(delta+eps)}`
/// where `delta(x) = (n - alpha(x) p(x)) / p(x)`.
pub fn hedberg_check(
    f: &ScalarField,
    alpha: &ExponentField,
    p: &ExponentField,
    eps: &ExponentField,
    eval: &EvalSet,
) -> Result<PointwiseComparison> {
    check_potential_inputs(f, alpha, eval)?;
    f.require_same_layout(p.field(), "hedberg_check")?;
    f.require_same_layout(eps.field(), "hedberg_check")?;
    if eps.lo() <= 0.0 {
        return Err(Error::hypothesis("eps > 0", format!("eps^- = {}", eps.lo())));
    }
    for i in f.masked_indices() {
        if eps.value(i) > alpha.value(i) {
            return Err(Error::hypothesis(
                "eps <= alpha",
                format!("eps(x) = {} > alpha(x) = {} at cell {i}", eps.value(i), alpha.value(i)),
            ));
        }
    }
    check_subcritical(p, alpha)?;
    if f.is_zero_on_mask() {
        return Ok(PointwiseComparison::empty());
    }
    check_unit_norm(f, p)?;

    let n = f.grid().dim() as f64;
    let reduced = alpha.field().zip(eps.field(), |a, e| a - e)?;
    let reduced = ExponentField::new(reduced)?;
    let ladder = default_radius_schedule(f.grid());
    let maximal = fractional_maximal_at(f, &reduced, &ladder, eval)?;
    let left = riesz_potential(f, alpha, eval)?;
    let p_plus = p.hi();
    let outer = (p_plus - 1.0) / p_plus;
    let right: Vec<f64> = eval
        .indices()
        .iter()
        .zip(&maximal)
        .map(|(&i, &m)| {
            let delta = (n - alpha.value(i) * p.value(i)) / p.value(i);
            let e = eps.value(i);
            1.0f64.max(1.0 / delta).powf(outer) * m.powf(delta / (delta + e))
        })
        .collect();
    Ok(PointwiseComparison::build(eval, &left, &right))
}

/// Pointwise comparison behind the weak-type estimate:
/// left = Riesz potential, right = `(M f)^{p(x)/p#(x)}` with the
/// Hardy-Littlewood maximal function (order zero) and the Sobolev conjugate
/// `p#` of p under alpha.
pub fn samko_check(
    f: &ScalarField,
    alpha: &ExponentField,
    p: &ExponentField,
    eval: &EvalSet,
) -> Result<PointwiseComparison> {
    check_potential_inputs(f, alpha, eval)?;
    f.require_same_layout(p.field(), "samko_check")?;
    if p.lo() < 1.0 {
        return Err(Error::hypothesis("p^- >= 1", format!("p^- = {}", p.lo())));
    }
    check_subcritical(p, alpha)?;
    if f.is_zero_on_mask() {
        return Ok(PointwiseComparison::empty());
    }
    check_unit_norm(f, p)?;

    let sharp = sharp_exponent(p, alpha)?;
    let zero = ExponentField::constant(f.grid().clone(), Some(f.mask()), 0.0)?;
    let ladder = default_radius_schedule(f.grid());
    let maximal = fractional_maximal_at(f, &zero, &ladder, eval)?;
    let left = riesz_potential(f, alpha, eval)?;
    let right: Vec<f64> = eval
        .indices()
        .iter()
        .zip(&maximal)
        .map(|(&i, &m)| m.powf(p.value(i) / sharp.value(i)))
        .collect();
    Ok(PointwiseComparison::build(eval, &left, &right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_field, BBox, TestFunction};
    use approx::assert_relative_eq;

    fn sym_grid(res: usize) -> Grid {
        Grid::new(2, res, BBox::symmetric(1.0)).unwrap()
    }

    fn disk_indicator(grid: &Grid, r: f64) -> ScalarField {
        sample_field(grid, &TestFunction::BallIndicator { center: [0.0; 3], radius: r }, None)
            .unwrap()
    }

    fn center_eval(grid: &Grid, f: &ScalarField) -> EvalSet {
        EvalSet::from_points(grid.clone(), f.mask(), &[[0.0; 3]]).unwrap()
    }

    #[test]
    fn riesz_zero_field_is_zero() {
        let g = sym_grid(32);
        let f = sample_field(&g, &TestFunction::Constant { value: 0.0 }, None).unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let vals = riesz_potential(&f, &alpha, &eval).unwrap();
        assert!(vals.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn riesz_radial_oracle_disk() {
        // I_1 of the indicator of B(0, 1/2) at the center is sigma_1 r / 1 = pi
        let g = sym_grid(128);
        let f = disk_indicator(&g, 0.5);
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eval = center_eval(&g, &f);
        let v = riesz_potential(&f, &alpha, &eval).unwrap()[0];
        let exact = std::f64::consts::PI;
        assert!((v - exact).abs() / exact < 0.02, "got {v}, want {exact}");
    }

    #[test]
    fn riesz_radial_oracle_3d() {
        // n = 3, alpha = 1: I f(0) = sigma_2 r^1 / 1 = 4 pi r
        let g = Grid::new(3, 48, BBox::symmetric(1.0)).unwrap();
        let f = sample_field(&g, &TestFunction::BallIndicator { center: [0.0; 3], radius: 0.5 }, None)
            .unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eval = center_eval(&g, &f);
        let v = riesz_potential(&f, &alpha, &eval).unwrap()[0];
        let exact = 4.0 * std::f64::consts::PI * 0.5;
        assert!((v - exact).abs() / exact < 0.03, "got {v}, want {exact}");
    }

    #[test]
    fn riesz_positive_scaling_exact() {
        let g = sym_grid(32);
        let f = disk_indicator(&g, 0.6);
        let alpha = ExponentField::constant(g.clone(), None, 0.8).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let a = riesz_potential(&f, &alpha, &eval).unwrap();
        let b = riesz_potential(&f.scale(2.0), &alpha, &eval).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(2.0 * x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn riesz_additive_on_nonnegative() {
        let g = sym_grid(32);
        let f = disk_indicator(&g, 0.5);
        let b = sample_field(
            &g,
            &TestFunction::GaussianBump { center: [0.3, -0.2, 0.0], sigma: 0.3, amplitude: 1.0 },
            None,
        )
        .unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 1.2).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let (ca, cb) = (1.5, 0.25);
        let combo = f.zip(&b, |x, y| ca * x + cb * y).unwrap();
        let lhs = riesz_potential(&combo, &alpha, &eval).unwrap();
        let fa = riesz_potential(&f, &alpha, &eval).unwrap();
        let fb = riesz_potential(&b, &alpha, &eval).unwrap();
        for k in 0..lhs.len() {
            assert_relative_eq!(lhs[k], ca * fa[k] + cb * fb[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn riesz_monotone_in_data() {
        let g = sym_grid(24);
        let f = disk_indicator(&g, 0.4);
        let bigger = f.map(|v| v + 0.2);
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let a = riesz_potential(&f, &alpha, &eval).unwrap();
        let b = riesz_potential(&bigger, &alpha, &eval).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x <= y);
        }
    }

    #[test]
    fn riesz_tilde_matches_substitution_bitwise() {
        let g = sym_grid(32);
        let f = disk_indicator(&g, 0.5);
        let s = ExponentField::constant(g.clone(), None, 1.5).unwrap();
        let alpha = order_from_s(&s).unwrap();
        assert_relative_eq!(alpha.lo(), 0.5, max_relative = 1e-15);
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let a = riesz_tilde(&f, &s, &eval).unwrap();
        let b = riesz_potential(&f, &alpha, &eval).unwrap();
        assert_eq!(a, b);

        let s_bad = ExponentField::constant(g, None, 2.0).unwrap();
        assert!(riesz_tilde(&f, &s_bad, &eval).is_err());
    }

    #[test]
    fn maximal_disk_oracle() {
        // alpha = 1/2, f = indicator B(0, 1/4): sup over r of
        // r^alpha min(1, (1/4 / r)^2) is attained at r = 1/4 with value 1/2
        let g = sym_grid(256);
        let f = disk_indicator(&g, 0.25);
        let alpha = ExponentField::constant(g.clone(), None, 0.5).unwrap();
        let eval = center_eval(&g, &f);
        let ladder = default_radius_schedule(&g);
        let v = fractional_maximal_at(&f, &alpha, &ladder, &eval).unwrap()[0];
        assert!((v - 0.5).abs() / 0.5 < 0.02, "got {v}");
    }

    #[test]
    fn maximal_alpha_zero_bounded_by_quantized_one() {
        let g = Grid::new(2, 32, BBox::unit()).unwrap();
        let f = sample_field(&g, &TestFunction::Constant { value: 1.0 }, None).unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 0.0).unwrap();
        let eval = EvalSet::all_masked(g.clone(), f.mask()).unwrap();
        let ladder = default_radius_schedule(&g);
        let vals = fractional_maximal_at(&f, &alpha, &ladder, &eval).unwrap();
        // averages of 1 over B cap Omega divided by omega_n r^n are at most 1
        // up to ball quantization; the worst case is the radius-h ball, whose
        // five cells against the continuum area pi h^2 give exactly 5/pi
        let cap = 5.0 / std::f64::consts::PI;
        for &v in &vals {
            assert!(v <= cap + 1e-12, "average {v} above the quantization cap {cap}");
        }
        // at the center, moderate radii see the full ball
        let center = EvalSet::from_points(g.clone(), f.mask(), &[[0.5, 0.5, 0.0]]).unwrap();
        let v = fractional_maximal_at(&f, &alpha, &[0.25], &center).unwrap()[0];
        assert!((v - 1.0).abs() < 0.05, "center average {v}");
    }

    #[test]
    fn maximal_zero_field_and_empty_schedule() {
        let g = sym_grid(16);
        let f = sample_field(&g, &TestFunction::Constant { value: 0.0 }, None).unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 0.5).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let vals = fractional_maximal_at(&f, &alpha, &[0.5], &eval).unwrap();
        assert!(vals.iter().all(|&v| v == 0.0));
        assert!(fractional_maximal_at(&f, &alpha, &[], &eval).is_err());
    }

    #[test]
    fn maximal_domination_by_order() {
        // for radii >= 1 the larger order dominates; for radii <= 1 it flips
        let g = Grid::new(2, 16, BBox::new([0.0; 3], 4.0)).unwrap();
        let f = sample_field(
            &g,
            &TestFunction::GaussianBump { center: [2.0, 2.0, 0.0], sigma: 0.8, amplitude: 1.0 },
            None,
        )
        .unwrap();
        let lo = ExponentField::constant(g.clone(), None, 0.3).unwrap();
        let hi = ExponentField::constant(g.clone(), None, 1.1).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let big = [1.0, 2.0, 4.0];
        let a = fractional_maximal_at(&f, &lo, &big, &eval).unwrap();
        let b = fractional_maximal_at(&f, &hi, &big, &eval).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(y >= x);
        }
        let small = [0.25, 0.5, 1.0];
        let a = fractional_maximal_at(&f, &lo, &small, &eval).unwrap();
        let b = fractional_maximal_at(&f, &hi, &small, &eval).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(y <= x);
        }
    }

    #[test]
    fn maximal_monotone_in_data() {
        let g = sym_grid(24);
        let f = disk_indicator(&g, 0.4);
        let bigger = f.map(|v| v + 0.1);
        let alpha = ExponentField::constant(g.clone(), None, 0.5).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let ladder = default_radius_schedule(&g);
        let a = fractional_maximal_at(&f, &alpha, &ladder, &eval).unwrap();
        let b = fractional_maximal_at(&bigger, &alpha, &ladder, &eval).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x <= y);
        }
    }

    #[test]
    fn tail_integral_cases() {
        let g = sym_grid(64);
        let f = disk_indicator(&g, 0.5);
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let x = g.cell_center(g.locate([0.0, 0.0, 0.0]));

        // beyond the domain diameter the tail is empty
        assert_eq!(tail_integral(&f, x, 10.0, &alpha).unwrap(), 0.0);

        // zero data
        let z = sample_field(&g, &TestFunction::Constant { value: 0.0 }, None).unwrap();
        assert_eq!(tail_integral(&z, x, 0.3, &alpha).unwrap(), 0.0);

        // r below h reproduces the potential minus the self-cell term
        let eval = EvalSet::from_points(g.clone(), f.mask(), &[x]).unwrap();
        let full = riesz_potential(&f, &alpha, &eval).unwrap()[0];
        let self_term = super::self_cell_term(&g, f.value(g.locate(x)).abs(), 1.0);
        let tail = tail_integral(&f, x, g.spacing() / 2.0, &alpha).unwrap();
        assert_relative_eq!(tail, full - self_term, max_relative = 1e-12);

        // non-increasing in r
        let mut prev = f64::INFINITY;
        for r in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let t = tail_integral(&f, x, r, &alpha).unwrap();
            assert!(t <= prev + 1e-15);
            prev = t;
        }
    }

    #[test]
    fn hedberg_check_on_zero_field_is_empty() {
        let g = sym_grid(16);
        let f = sample_field(&g, &TestFunction::Constant { value: 0.0 }, None).unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let p = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eps = default_epsilon(&alpha, 1.5).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let cmp = hedberg_check(&f, &alpha, &p, &eps, &eval).unwrap();
        assert!(cmp.points.is_empty());
        assert_eq!(cmp.calibrated_constant, 0.0);
    }

    #[test]
    fn hedberg_right_side_sqrt_when_delta_equals_eps() {
        // n = 2, alpha = 1, p = 1: delta = 1; choosing eps = 1 makes the
        // maximal-function power delta/(delta+eps) = 1/2 and the prefactor 1
        let g = sym_grid(48);
        let f = disk_indicator(&g, 0.3);
        let p1 = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let (f, _) = crate::norms::normalize(&f, &p1, 1.0).unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eps = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let cmp = hedberg_check(&f, &alpha, &p1, &eps, &eval).unwrap();

        let zero = ExponentField::constant(g.clone(), None, 0.0).unwrap();
        let ladder = default_radius_schedule(&g);
        let m0 = fractional_maximal_at(&f, &zero, &ladder, &eval).unwrap();
        for (cp, m) in cmp.points.iter().chain(cmp.degenerate.iter()).zip(&m0) {
            assert_relative_eq!(cp.right, m.sqrt(), max_relative = 1e-12);
        }
        assert!(cmp.calibrated_constant.is_finite());
    }

    #[test]
    fn samko_exponent_is_half_for_p1_alpha1() {
        // p# = 2 so the maximal power p/p# = 1/2 everywhere
        let g = sym_grid(48);
        let f = disk_indicator(&g, 0.3);
        let p1 = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let (f, _) = crate::norms::normalize(&f, &p1, 1.0).unwrap();
        let alpha = ExponentField::constant(g.clone(), None, 1.0).unwrap();
        let eval = EvalSet::stratified(g.clone(), f.mask(), 4).unwrap();
        let cmp = samko_check(&f, &alpha, &p1, &eval).unwrap();

        let zero = ExponentField::constant(g.clone(), None, 0.0).unwrap();
        let ladder = default_radius_schedule(&g);
        let m0 = fractional_maximal_at(&f, &zero, &ladder, &eval).unwrap();
        for (cp, m) in cmp.points.iter().chain(cmp.degenerate.iter()).zip(&m0) {
            assert_relative_eq!(cp.right, m.sqrt(), max_relative = 1e-12);
        }

        // zero field: empty ratio set
        let z = sample_field(&g, &TestFunction::Constant { value: 0.0 }, None).unwrap();
        let cmp = samko_check(&z, &alpha, &p1, &eval).unwrap();
        assert!(cmp.points.is_empty());
    }

    #[test]
    fn eval_set_construction_rules() {
        let g = sym_grid(16);
        let f = disk_indicator(&g, 0.5);
        // unmasked cells rejected when the mask is the disk itself
        let mask: Vec<bool> = f.values().iter().map(|&v| v > 0.0).collect();
        let corner = g.index([0, 0, 0]);
        assert!(EvalSet::from_indices(g.clone(), &mask, vec![corner]).is_err());
        let center = g.locate([0.0, 0.0, 0.0]);
        assert!(EvalSet::from_indices(g.clone(), &mask, vec![center, center]).is_err());
        let ok = EvalSet::from_indices(g.clone(), &mask, vec![center]).unwrap();
        assert_eq!(ok.len(), 1);

        // snapping lands on a masked cell
        let snapped = EvalSet::from_points(g.clone(), &mask, &[[0.9, 0.9, 0.0]]).unwrap();
        assert!(mask[snapped.indices()[0]]);
    }

    #[test]
    fn nearest_assignment_covers_mask() {
        let g = sym_grid(16);
        let f = disk_indicator(&g, 0.8);
        let mask: Vec<bool> = f.values().iter().map(|&v| v > 0.0).collect();
        let eval = EvalSet::stratified(g.clone(), &mask, 4).unwrap();
        let owner = nearest_eval_assignment(&mask, &eval);
        for i in 0..mask.len() {
            assert_eq!(owner[i].is_some(), mask[i]);
        }
    }
}
