//! Test-domain generators (disk, square, power cusp, mushroom), distance-to-
//! boundary fields, John centers, and the chain-of-balls construction with
//! property certification.

use crate::content::CellMask;
use crate::field::{dist, dist2, ExponentField, Grid, Point, ScalarField};
use crate::par::par_map_idx;
use crate::potential::{riesz_tilde, EvalSet, PointwiseComparison};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

/// Stem half-width profile of the mushroom domain.
pub fn mushroom_profile(t: f64) -> f64 {
    t.powf(1.5)
}

/// Geometry parameters recorded alongside a generated domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    Disk { radius: f64 },
    Square { side: f64 },
    Cusp { s: f64 },
    Mushroom { radii: Vec<f64>, positions: Vec<f64> },
}

impl DomainKind {
    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::Disk { .. } => "disk",
            DomainKind::Square { .. } => "square",
            DomainKind::Cusp { .. } => "cusp",
            DomainKind::Mushroom { .. } => "mushroom",
        }
    }
}

/// How the John center of a generated domain is selected.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CenterChoice {
    /// The masked cell maximizing the distance field.
    ClearanceArgmax,
    /// A prescribed point, snapped to the nearest masked cell.
    Explicit(Point),
}

/// A discretized bounded domain: mask, distance-to-boundary field, a
/// distinguished John center with its base ball, and the cusp-exponent
/// field s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainModel {
    grid: Grid,
    mask: Vec<bool>,
    dist: ScalarField,
    /// Half the quantization slack applied to sampled (non-analytic)
    /// distance fields when placing chain balls.
    dist_guard: f64,
    center_index: usize,
    s_field: ExponentField,
    kind: DomainKind,
}

impl DomainModel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cell_mask(&self) -> CellMask {
        CellMask::new(self.grid.clone(), self.mask.clone()).expect("mask matches grid")
    }

    pub fn dist(&self) -> &ScalarField {
        &self.dist
    }

    pub fn john_center(&self) -> Point {
        self.grid.cell_center(self.center_index)
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    /// The base ball `B(x0, dist(x0))`.
    pub fn base_ball(&self) -> (Point, f64) {
        (self.john_center(), self.dist.value(self.center_index))
    }

    pub fn s_field(&self) -> &ExponentField {
        &self.s_field
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn assemble(
        grid: Grid,
        dist_values: Vec<f64>,
        dist_guard: f64,
        s_values: ScalarField,
        kind: DomainKind,
        center: CenterChoice,
    ) -> Result<DomainModel> {
        // mask is exactly the positivity set of the distance field
        let mask: Vec<bool> = dist_values.iter().map(|&d| d > 0.0).collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        let dist_field = ScalarField::from_raw(grid.clone(), dist_values, mask.clone())?;
        let s_field = ExponentField::new(ScalarField::from_raw(
            grid.clone(),
            s_values.values().to_vec(),
            mask.clone(),
        )?)?;
        let center_index = match center {
            // deepest cell wins; lexicographic (lowest index) on ties
            CenterChoice::ClearanceArgmax => {
                let mut best = 0.0;
                let mut best_i = None;
                for i in 0..mask.len() {
                    if mask[i] && dist_field.value(i) > best {
                        best = dist_field.value(i);
                        best_i = Some(i);
                    }
                }
                best_i.ok_or(Error::EmptyMask)?
            }
            CenterChoice::Explicit(p) => crate::potential::nearest_masked_cell(&grid, &mask, p)?,
        };
        let model =
            DomainModel { grid, mask, dist: dist_field, dist_guard, center_index, s_field, kind };
        // base-ball cells must all be masked
        let (x0, r0) = model.base_ball();
        for i in 0..model.mask.len() {
            if dist(model.grid.cell_center(i), x0) < r0 && !model.mask[i] {
                return Err(Error::invalid(
                    "domain",
                    format!("base ball leaks outside the mask at cell {i}"),
                ));
            }
        }
        Ok(model)
    }
}

/// Disk of the given radius centered in the bounding box. Exact analytic
/// distance; John center at the center; s = 1.
pub fn make_disk(grid: &Grid, radius: f64) -> Result<DomainModel> {
    if !(radius > 0.0) || 2.0 * radius > grid.bbox().side {
        return Err(Error::invalid("disk", "radius must be positive and fit the bbox"));
    }
    let c = grid.bbox().center(grid.dim());
    let dist_at = move |p: Point| radius - dist(p, c);
    let dist_values: Vec<f64> =
        (0..grid.num_cells()).map(|i| dist_at(grid.cell_center(i)).max(0.0)).collect();
    let s = ScalarField::from_fn(grid.clone(), None, |_| 1.0)?;
    DomainModel::assemble(
        grid.clone(),
        dist_values,
        0.0,
        s,
        DomainKind::Disk { radius },
        CenterChoice::ClearanceArgmax,
    )
}

/// Axis-aligned square (cube in 3D) of the given side centered in the
/// bounding box. Exact analytic distance; s = 1.
pub fn make_square(grid: &Grid, side: f64) -> Result<DomainModel> {
    if !(side > 0.0) || side > grid.bbox().side {
        return Err(Error::invalid("square", "side must be positive and fit the bbox"));
    }
    let c = grid.bbox().center(grid.dim());
    let half = side / 2.0;
    let dim = grid.dim();
    let dist_at = move |p: Point| {
        let mut m = f64::INFINITY;
        for a in 0..dim {
            m = m.min(half - (p[a] - c[a]).abs());
        }
        m
    };
    let dist_values: Vec<f64> =
        (0..grid.num_cells()).map(|i| dist_at(grid.cell_center(i)).max(0.0)).collect();
    let s = ScalarField::from_fn(grid.clone(), None, |_| 1.0)?;
    DomainModel::assemble(
        grid.clone(),
        dist_values,
        0.0,
        s,
        DomainKind::Square { side },
        CenterChoice::ClearanceArgmax,
    )
}

/// Bucketed nearest-neighbor structure over boundary samples.
struct BoundarySamples {
    points: Vec<Point>,
    bucket_side: f64,
    origin: [f64; 3],
    dims: [usize; 3],
    dim: usize,
    buckets: Vec<Vec<u32>>,
}

impl BoundarySamples {
    fn build(points: Vec<Point>, grid: &Grid) -> Self {
        let dim = grid.dim();
        let bucket_side = 4.0 * grid.spacing();
        let origin = grid.bbox().origin;
        let n = (grid.bbox().side / bucket_side).ceil() as usize + 2;
        let mut dims = [1usize; 3];
        for d in dims.iter_mut().take(dim) {
            *d = n;
        }
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let clampi = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
        for (k, p) in points.iter().enumerate() {
            let bx = clampi((p[0] - origin[0]) / bucket_side, dims[0]);
            let by = clampi((p[1] - origin[1]) / bucket_side, dims[1]);
            let bz = if dim == 3 { clampi((p[2] - origin[2]) / bucket_side, dims[2]) } else { 0 };
            buckets[(bz * dims[1] + by) * dims[0] + bx].push(k as u32);
        }
        BoundarySamples { points, bucket_side, origin, dims, dim, buckets }
    }

    /// Exact nearest distance among the samples, by expanding ring search.
    fn nearest_dist(&self, p: Point) -> f64 {
        let clampi = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1) as i64;
        let bx = clampi((p[0] - self.origin[0]) / self.bucket_side, self.dims[0]);
        let by = clampi((p[1] - self.origin[1]) / self.bucket_side, self.dims[1]);
        let bz =
            if self.dim == 3 { clampi((p[2] - self.origin[2]) / self.bucket_side, self.dims[2]) } else { 0 };
        let max_ring = *self.dims.iter().max().unwrap() as i64;
        let mut best = f64::INFINITY;
        for ring in 0..max_ring {
            // once a hit exists, rings farther than best cannot improve it
            if best.is_finite() && (ring - 1) as f64 * self.bucket_side > best {
                break;
            }
            let zr = if self.dim == 3 { (bz - ring, bz + ring) } else { (0, 0) };
            for z in zr.0..=zr.1 {
                if z < 0 || z >= self.dims[2] as i64 {
                    continue;
                }
                for y in by - ring..=by + ring {
                    if y < 0 || y >= self.dims[1] as i64 {
                        continue;
                    }
                    for x in bx - ring..=bx + ring {
                        if x < 0 || x >= self.dims[0] as i64 {
                            continue;
                        }
                        let on_ring = (x - bx).abs() == ring
                            || (y - by).abs() == ring
                            || (self.dim == 3 && (z - bz).abs() == ring);
                        if !on_ring {
                            continue;
                        }
                        let b = &self.buckets
                            [((z as usize) * self.dims[1] + y as usize) * self.dims[0] + x as usize];
                        for &k in b {
                            let d = dist2(self.points[k as usize], p);
                            if d < best * best {
                                best = d.sqrt();
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

fn sampled_distance_field(
    grid: &Grid,
    inside: impl Fn(Point) -> bool + Sync,
    samples: BoundarySamples,
) -> Vec<f64> {
    par_map_idx(grid.num_cells(), |i| {
        let p = grid.cell_center(i);
        if inside(p) {
            samples.nearest_dist(p)
        } else {
            0.0
        }
    })
}

/// Default bounding box for the cusp domain: `[-0.25, 1.75] x [-1, 1]^...`.
pub fn cusp_bbox() -> crate::field::BBox {
    crate::field::BBox::new([-0.25, -1.0, -1.0], 2.0)
}

/// Outward power-cusp domain: the horn `{0 < x1 < 1, |x'| < x1^s}` joined
/// with the ball `B((1, 0, ...), 1/2)`. The cusp at the origin has order s,
/// so the domain is s-John with center at the ball center.
pub fn make_cusp(grid: &Grid, s: f64) -> Result<DomainModel> {
    let n = grid.dim() as f64;
    if !(1.0 <= s && s < n / (n - 1.0)) {
        return Err(Error::hypothesis(
            "1 <= s < n/(n-1)",
            format!("s = {s}, critical value {}", n / (n - 1.0)),
        ));
    }
    let bbox = grid.bbox();
    let fits = bbox.origin[0] <= 0.0
        && bbox.origin[0] + bbox.side >= 1.5
        && (1..grid.dim()).all(|a| bbox.origin[a] <= -1.0 && bbox.origin[a] + bbox.side >= 1.0);
    if !fits {
        return Err(Error::invalid("cusp", "domain exceeds bbox; use cusp_bbox()"));
    }
    let dim = grid.dim();
    let ball_c: Point = [1.0, 0.0, 0.0];
    let cross = move |p: Point| -> f64 {
        if dim == 2 {
            p[1].abs()
        } else {
            (p[1] * p[1] + p[2] * p[2]).sqrt()
        }
    };
    let inside = move |p: Point| -> bool {
        (p[0] > 0.0 && p[0] < 1.0 && cross(p) < p[0].powf(s)) || dist(p, ball_c) < 0.5
    };

    let h = grid.spacing();
    let step = h / 8.0;
    let mut samples: Vec<Point> = Vec::new();
    if dim == 2 {
        // cusp walls y = +-t^s
        let mut t: f64 = 0.0;
        while t <= 1.0 {
            let w = t.powf(s);
            samples.push([t, w, 0.0]);
            samples.push([t, -w, 0.0]);
            t += step;
        }
        // lid at x1 = 1 outside the ball
        let mut y = 0.5;
        while y <= 1.0 {
            samples.push([1.0, y, 0.0]);
            samples.push([1.0, -y, 0.0]);
            y += step;
        }
        // ball circle
        let dtheta = step / 0.5;
        let mut th = 0.0;
        while th < 2.0 * std::f64::consts::PI {
            samples.push([1.0 + 0.5 * th.cos(), 0.5 * th.sin(), 0.0]);
            th += dtheta;
        }
    } else {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut t: f64 = 0.0;
        while t <= 1.0 {
            let w = t.powf(s);
            let m = ((two_pi * w / step).ceil() as usize).max(4);
            for k in 0..m {
                let th = two_pi * k as f64 / m as f64;
                samples.push([t, w * th.cos(), w * th.sin()]);
            }
            t += step;
        }
        // lid annulus 0.5 <= |x'| <= 1 at x1 = 1
        let mut rho = 0.5;
        while rho <= 1.0 {
            let m = ((two_pi * rho / step).ceil() as usize).max(4);
            for k in 0..m {
                let th = two_pi * k as f64 / m as f64;
                samples.push([1.0, rho * th.cos(), rho * th.sin()]);
            }
            rho += step;
        }
        // sphere
        let m = ((two_pi * 0.5 / step).ceil() as usize).max(8);
        for a in 0..m / 2 {
            let phi = std::f64::consts::PI * (a as f64 + 0.5) / (m / 2) as f64;
            for k in 0..m {
                let th = two_pi * k as f64 / m as f64;
                samples.push([
                    1.0 + 0.5 * phi.cos(),
                    0.5 * phi.sin() * th.cos(),
                    0.5 * phi.sin() * th.sin(),
                ]);
            }
        }
    }
    // keep true boundary points only
    samples.retain(|&p| !inside(p));
    let nn = BoundarySamples::build(samples, grid);
    let dist_values = sampled_distance_field(grid, inside, nn);
    let s_values = ScalarField::from_fn(grid.clone(), None, |_| s)?;
    DomainModel::assemble(
        grid.clone(),
        dist_values,
        h / 2.0,
        s_values,
        DomainKind::Cusp { s },
        CenterChoice::Explicit(ball_c),
    )
}

/// Default bounding box for the mushroom domain: `[-2.5, 13.5]^2`.
pub fn mushroom_bbox() -> crate::field::BBox {
    crate::field::BBox::new([-2.5, -2.5, 0.0], 16.0)
}

/// Default cap radii for a mushroom battery of the given size. The first
/// three fit the attachment window at resolutions from 128 over the default
/// bounding box.
pub fn default_mushroom_radii(count: usize) -> Vec<f64> {
    const TABLE: [f64; 8] = [0.7, 0.6, 0.5, 0.45, 0.4, 0.35, 0.3, 0.25];
    TABLE.iter().copied().take(count.min(TABLE.len())).collect()
}

#[derive(Debug, Clone, Copy)]
struct Mushroom {
    r: f64,
    phi: f64,
    /// Cap center coordinate along the attachment side.
    pos: f64,
}

/// Mushrooms-type planar domain: the square `Q = [0, 12]^2` with cap-and-stem
/// mushrooms attached to its left and bottom sides at distance 1 to 4 from
/// the origin. Caps are squares of side `2 r_m`, stems are `r_m` deep with
/// half-width `phi(r_m) = r_m^{3/2}`; s is 1 on Q, 3/2 on caps, and grows
/// linearly from 1 to 3/2 along each stem.
pub fn make_mushroom(grid: &Grid, radii: &[f64]) -> Result<DomainModel> {
    if grid.dim() != 2 {
        return Err(Error::invalid("mushroom", "only the planar construction is supported"));
    }
    if radii.is_empty() || radii.len() > 8 {
        return Err(Error::invalid("mushroom", "need between 1 and 8 mushrooms at desk scale"));
    }
    let h = grid.spacing();
    for w in radii.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::invalid("mushroom", "radii must be strictly decreasing"));
        }
    }
    let mut shrooms = Vec::with_capacity(radii.len());
    let gap = 0.2;
    let mut start = 1.0;
    for &r in radii {
        if !(r > 0.0) || r < 4.0 * h {
            return Err(Error::invalid(
                "mushroom",
                format!("cap radius {r} is below the 4h resolution floor ({})", 4.0 * h),
            ));
        }
        let phi = mushroom_profile(r);
        if phi > r {
            return Err(Error::invalid(
                "mushroom",
                format!("profile violation: phi(r) = {phi} > r = {r}"),
            ));
        }
        if start > 4.0 + 1e-9 {
            return Err(Error::invalid(
                "mushroom",
                "mushrooms overlap the [1, 4] attachment window; fewer or smaller caps needed",
            ));
        }
        shrooms.push(Mushroom { r, phi, pos: start + r });
        start += 2.0 * r + gap;
    }
    let max_r = radii[0];
    let bbox = grid.bbox();
    let fits = bbox.origin[0] <= -3.0 * max_r
        && bbox.origin[1] <= -3.0 * max_r
        && bbox.origin[0] + bbox.side >= 12.0
        && bbox.origin[1] + bbox.side >= 12.0;
    if !fits {
        return Err(Error::invalid("mushroom", "domain exceeds bbox; use mushroom_bbox()"));
    }

    let tol = 1e-12 * bbox.side;
    let shrooms_in = shrooms.clone();
    let inside = move |p: Point| -> bool {
        let (x, y) = (p[0], p[1]);
        if x > 0.0 && x < 12.0 && y > 0.0 && y < 12.0 {
            return true;
        }
        for m in &shrooms_in {
            // left side: stem (-r, 0) x (pos +- phi), cap (-3r, -r) x (pos +- r)
            if (y - m.pos).abs() < m.phi && x > -m.r && x < 0.0 {
                return true;
            }
            if (y - m.pos).abs() < m.r && x > -3.0 * m.r && x < -m.r {
                return true;
            }
            // junction faces are interior to the union
            if (y - m.pos).abs() < m.phi && (x.abs() < tol || (x + m.r).abs() < tol) {
                return true;
            }
            // bottom side: isometric copy
            if (x - m.pos).abs() < m.phi && y > -m.r && y < 0.0 {
                return true;
            }
            if (x - m.pos).abs() < m.r && y > -3.0 * m.r && y < -m.r {
                return true;
            }
            if (x - m.pos).abs() < m.phi && (y.abs() < tol || (y + m.r).abs() < tol) {
                return true;
            }
        }
        false
    };

    // boundary: all rectangle edges, filtered to points not interior to the union
    let mut rects: Vec<[f64; 4]> = vec![[0.0, 0.0, 12.0, 12.0]]; // (x0, y0, x1, y1)
    for m in &shrooms {
        rects.push([-m.r, m.pos - m.phi, 0.0, m.pos + m.phi]);
        rects.push([-3.0 * m.r, m.pos - m.r, -m.r, m.pos + m.r]);
        rects.push([m.pos - m.phi, -m.r, m.pos + m.phi, 0.0]);
        rects.push([m.pos - m.r, -3.0 * m.r, m.pos + m.r, -m.r]);
    }
    let step = h / 4.0;
    let mut samples = Vec::new();
    for rct in &rects {
        let (x0, y0, x1, y1) = (rct[0], rct[1], rct[2], rct[3]);
        let mut x = x0;
        while x <= x1 + step / 2.0 {
            let xc = x.min(x1);
            samples.push([xc, y0, 0.0]);
            samples.push([xc, y1, 0.0]);
            x += step;
        }
        let mut y = y0;
        while y <= y1 + step / 2.0 {
            let yc = y.min(y1);
            samples.push([x0, yc, 0.0]);
            samples.push([x1, yc, 0.0]);
            y += step;
        }
    }
    samples.retain(|&p| !inside(p));
    let nn = BoundarySamples::build(samples, grid);
    let dist_values = sampled_distance_field(grid, &inside, nn);

    let shrooms_s = shrooms.clone();
    let s_values = ScalarField::from_fn(grid.clone(), None, move |p| {
        let (x, y) = (p[0], p[1]);
        for m in &shrooms_s {
            if (y - m.pos).abs() < m.r && x <= -m.r && x > -3.0 * m.r {
                return 1.5;
            }
            if (y - m.pos).abs() < m.phi && x > -m.r && x < 0.0 {
                return 1.0 + 0.5 * (-x / m.r);
            }
            if (x - m.pos).abs() < m.r && y <= -m.r && y > -3.0 * m.r {
                return 1.5;
            }
            if (x - m.pos).abs() < m.phi && y > -m.r && y < 0.0 {
                return 1.0 + 0.5 * (-y / m.r);
            }
        }
        1.0
    })?;
    let positions = shrooms.iter().map(|m| m.pos).collect();
    DomainModel::assemble(
        grid.clone(),
        dist_values,
        h / 2.0,
        s_values,
        DomainKind::Mushroom { radii: radii.to_vec(), positions },
        CenterChoice::ClearanceArgmax,
    )
}

/// An ordered chain of balls joining the John center to a terminal point,
/// with the observed chain constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallChain {
    pub balls: Vec<(Point, f64)>,
    pub terminal: Point,
    pub constants: ChainConstants,
}

/// Observed chain constants: K from the cusp inequality
/// `dist(x, B_i)^{s(x)} <= K r_i`, N the maximal overlap count, M the
/// maximal adjacent union/intersection measure ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConstants {
    pub k_constant: f64,
    pub overlap_n: usize,
    pub measure_ratio_m: f64,
}

/// Widest-path (max-min clearance) tree over masked cells from the source,
/// 4/6-neighbor topology, deterministic tie-breaking.
fn widest_path_tree(d: &DomainModel, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    #[derive(PartialEq)]
    struct Item {
        clearance: f64,
        steps: u32,
        index: usize,
    }
    impl Eq for Item {}
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.clearance
                .total_cmp(&other.clearance)
                .then(other.steps.cmp(&self.steps))
                .then(other.index.cmp(&self.index))
        }
    }
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let grid = d.grid();
    let n = grid.num_cells();
    let r = grid.resolution();
    let mut bottleneck = vec![f64::NEG_INFINITY; n];
    let mut steps = vec![u32::MAX; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    bottleneck[source] = d.dist.value(source);
    steps[source] = 0;
    heap.push(Item { clearance: bottleneck[source], steps: 0, index: source });
    while let Some(it) = heap.pop() {
        if it.clearance < bottleneck[it.index] || it.steps > steps[it.index] {
            continue;
        }
        let c = grid.coords(it.index);
        for a in 0..grid.dim() {
            for sgn in [-1i64, 1] {
                let v = c[a] as i64 + sgn;
                if v < 0 || v >= r as i64 {
                    continue;
                }
                let mut cc = c;
                cc[a] = v as usize;
                let j = grid.index(cc);
                if !d.mask[j] {
                    continue;
                }
                let cand = it.clearance.min(d.dist.value(j));
                let better = cand > bottleneck[j]
                    || (cand == bottleneck[j] && it.steps + 1 < steps[j]);
                if better {
                    bottleneck[j] = cand;
                    steps[j] = it.steps + 1;
                    parent[j] = Some(it.index);
                    heap.push(Item { clearance: cand, steps: it.steps + 1, index: j });
                }
            }
        }
    }
    (bottleneck, parent)
}

/// Build the chain of balls from the John center toward `x` along the
/// widest-path (max-min clearance) grid path.
///
/// The first ball is `B(x0, dist(x0)/2)`; subsequent radii are
/// `r_i = min(dist(x_i) - guard, |x_i - x|) / 2`, subsampled so consecutive
/// centers satisfy `|x_i - x_{i+1}| <= min(r_i, r_{i+1}) / 2`. Points inside
/// the base ball get an empty chain (they are handled by the base-ball
/// branch of the pointwise estimate).
pub fn build_chain(d: &DomainModel, x: Point) -> Result<BallChain> {
    let grid = d.grid();
    let terminal_cell = crate::potential::nearest_masked_cell(grid, &d.mask, x)?;
    let x = grid.cell_center(terminal_cell);
    let (x0, base_r) = d.base_ball();
    if dist(x, x0) < base_r {
        return Ok(BallChain {
            balls: Vec::new(),
            terminal: x,
            constants: ChainConstants { k_constant: 0.0, overlap_n: 0, measure_ratio_m: 0.0 },
        });
    }
    let (bottleneck, parent) = widest_path_tree(d, d.center_index);
    if bottleneck[terminal_cell] == f64::NEG_INFINITY {
        return Err(Error::invalid(
            "chain",
            "terminal point unreachable within the mask (disconnected domain)",
        ));
    }
    // path from the center to the terminal cell
    let mut path = vec![terminal_cell];
    let mut cur = terminal_cell;
    while let Some(p) = parent[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();

    let guard = d.dist_guard;
    let radius_at = |cell: usize| -> f64 {
        let p = grid.cell_center(cell);
        0.5 * (d.dist.value(cell) - guard).min(dist(p, x))
    };

    let mut balls: Vec<(Point, f64)> = vec![(x0, 0.5 * (d.dist.value(d.center_index) - guard))];
    let mut cur_pos = 0usize; // position in `path`
    loop {
        let (cur_center, cur_r) = *balls.last().unwrap();
        let mut next: Option<(usize, f64)> = None;
        for (j, &cell) in path.iter().enumerate().skip(cur_pos + 1) {
            let r = radius_at(cell);
            if r <= 0.0 {
                continue;
            }
            let gap = dist(grid.cell_center(cell), cur_center);
            if gap <= 0.5 * cur_r.min(r) {
                next = Some((j, r));
            } else if next.is_some() {
                break; // candidates only get farther from here on
            }
        }
        match next {
            Some((j, r)) if j > cur_pos => {
                balls.push((grid.cell_center(path[j]), r));
                cur_pos = j;
            }
            _ => break,
        }
    }

    let constants = chain_constants(d, &balls, x);
    Ok(BallChain { balls, terminal: x, constants })
}

fn cells_in_ball(grid: &Grid, center: Point, radius: f64) -> Vec<usize> {
    let h = grid.spacing();
    let r = grid.resolution() as i64;
    let c = grid.coords(grid.locate(center));
    let reach = (radius / h).ceil() as i64 + 1;
    let mut out = Vec::new();
    let zr = if grid.dim() == 3 {
        ((c[2] as i64 - reach).max(0), (c[2] as i64 + reach).min(r - 1))
    } else {
        (0, 0)
    };
    for z in zr.0..=zr.1 {
        for y in (c[1] as i64 - reach).max(0)..=(c[1] as i64 + reach).min(r - 1) {
            for x in (c[0] as i64 - reach).max(0)..=(c[0] as i64 + reach).min(r - 1) {
                let i = grid.index([x as usize, y as usize, z as usize]);
                if dist(grid.cell_center(i), center) < radius {
                    out.push(i);
                }
            }
        }
    }
    out
}

fn chain_constants(d: &DomainModel, balls: &[(Point, f64)], x: Point) -> ChainConstants {
    if balls.is_empty() {
        return ChainConstants { k_constant: 0.0, overlap_n: 0, measure_ratio_m: 0.0 };
    }
    let grid = d.grid();
    let s_x = d.s_field.value(grid.locate(x));
    let mut k = 0.0f64;
    for &(c, r) in balls {
        let dxb = (dist(x, c) - r).max(0.0);
        k = k.max(dxb.powf(s_x) / r);
    }
    // overlap count over masked cells
    let mut overlap = vec![0u32; grid.num_cells()];
    for &(c, r) in balls {
        for i in cells_in_ball(grid, c, r) {
            if d.mask[i] {
                overlap[i] += 1;
            }
        }
    }
    let n = overlap.iter().copied().max().unwrap_or(0) as usize;
    // adjacent measure ratios by cell counting
    let mut m = 0.0f64;
    for w in balls.windows(2) {
        let a = cells_in_ball(grid, w[0].0, w[0].1);
        let b = cells_in_ball(grid, w[1].0, w[1].1);
        let bset: std::collections::HashSet<usize> = b.iter().copied().collect();
        let inter = a.iter().filter(|i| bset.contains(i)).count();
        let union = a.len() + b.len() - inter;
        if inter == 0 {
            m = f64::INFINITY;
        } else {
            m = m.max(union as f64 / inter as f64);
        }
    }
    ChainConstants { k_constant: k, overlap_n: n, measure_ratio_m: m }
}

/// Certification record for one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub balls: usize,
    /// Every doubled ball stays inside the domain (cell-wise containment).
    pub containment_ok: bool,
    pub containment_failures: usize,
    /// Radii decay toward the terminal end (up to grid quantization).
    pub tail_ok: bool,
    pub constants: ChainConstants,
    pub adjacent_intersections_ok: bool,
}

/// Verify the chain properties: doubled-ball containment, the decaying
/// radius tail, and the finiteness of the observed constants.
pub fn chain_check(chain: &BallChain, d: &DomainModel, x: Point) -> ChainReport {
    let grid = d.grid();
    let mut failures = 0usize;
    for &(c, r) in &chain.balls {
        for i in cells_in_ball(grid, c, 2.0 * r) {
            if !d.mask[i] {
                failures += 1;
            }
        }
    }
    let tail_ok = if chain.balls.len() <= 3 {
        true
    } else {
        let radii: Vec<f64> = chain.balls.iter().map(|b| b.1).collect();
        let peak = radii
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let h = grid.spacing();
        let tail = &radii[peak..];
        let non_increasing = tail.windows(2).filter(|w| w[1] <= w[0] + 1e-12).count();
        let frac_ok = tail.len() < 2 || non_increasing as f64 >= 0.9 * (tail.len() - 1) as f64;
        let last_small = *radii.last().unwrap() <= (4.0 * h).max(0.5 * radii[peak]);
        frac_ok && last_small
    };
    let constants = chain_constants(d, &chain.balls, x);
    ChainReport {
        balls: chain.balls.len(),
        containment_ok: failures == 0,
        containment_failures: failures,
        tail_ok,
        constants,
        adjacent_intersections_ok: constants.measure_ratio_m.is_finite(),
    }
}

/// Pointwise chain bound comparison over an evaluation set:
/// left `|u(x) - u_B|` against right `I~_{s(.)} |grad u| (x)`, the
/// John-domain Riesz potential of the gradient magnitude, with the
/// calibrated constant reported.
pub fn pointwise_chain_bound(
    u: &ScalarField,
    d: &DomainModel,
    eval: &EvalSet,
) -> Result<PointwiseComparison> {
    if u.grid() != d.grid() || u.mask() != d.mask() {
        return Err(Error::invalid("pointwise_chain_bound", "field does not live on the domain"));
    }
    let grad = u.gradient_magnitude()?;
    let (x0, r0) = d.base_ball();
    let u_b = u.mean_over_ball(x0, r0)?;
    let right = riesz_tilde(&grad, d.s_field(), eval)?;
    let left: Vec<f64> =
        eval.indices().iter().map(|&i| (u.value(i) - u_b).abs()).collect();
    Ok(PointwiseComparison::build(eval, &left, &right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{BBox, TestFunction};

    fn disk_domain(res: usize) -> DomainModel {
        let g = Grid::new(2, res, BBox::symmetric(1.2)).unwrap();
        make_disk(&g, 1.0).unwrap()
    }

    #[test]
    fn disk_center_distance() {
        let d = disk_domain(64);
        let (x0, r0) = d.base_ball();
        assert!(dist(x0, [0.0, 0.0, 0.0]) <= d.grid().spacing());
        assert!((r0 - 1.0).abs() <= d.grid().spacing());
        assert_eq!(d.s_field().lo(), 1.0);
        assert_eq!(d.s_field().log_holder().value, 0.0);
    }

    #[test]
    fn square_center_distance() {
        let g = Grid::new(2, 64, BBox::symmetric(1.5)).unwrap();
        let d = make_square(&g, 2.0).unwrap();
        let (x0, r0) = d.base_ball();
        assert!(dist(x0, [0.0, 0.0, 0.0]) <= d.grid().spacing());
        assert!((r0 - 1.0).abs() <= d.grid().spacing());
        assert!(make_square(&g, 4.0).is_err());
    }

    #[test]
    fn dist_is_lipschitz_across_neighbors() {
        let g = Grid::new(2, 128, mushroom_bbox()).unwrap();
        let d = make_mushroom(&g, &[0.7, 0.6]).unwrap();
        let grid = d.grid();
        let h = grid.spacing();
        let r = grid.resolution();
        for i in 0..grid.num_cells() {
            if !d.mask()[i] {
                continue;
            }
            let c = grid.coords(i);
            if c[0] + 1 < r {
                let j = grid.index([c[0] + 1, c[1], 0]);
                if d.mask()[j] {
                    assert!(
                        (d.dist().value(i) - d.dist().value(j)).abs() <= h + h,
                        "lipschitz violation at {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn cusp_wedge_distance_matches_analytic() {
        // s = 1 is a straight wedge: distance to the walls y = +-x is
        // (x - |y|)/sqrt(2) for points reached from the walls
        let g = Grid::new(2, 128, cusp_bbox()).unwrap();
        let d = make_cusp(&g, 1.0).unwrap();
        let grid = d.grid();
        let h = grid.spacing();
        for i in 0..grid.num_cells() {
            if !d.mask()[i] {
                continue;
            }
            let p = grid.cell_center(i);
            if p[0] > 0.1 && p[0] < 0.6 {
                let wedge = (p[0] - p[1].abs()) / std::f64::consts::SQRT_2;
                // only where the wedge walls are the closest boundary
                if wedge < 0.2 {
                    assert!(
                        (d.dist().value(i) - wedge).abs() <= 2.0 * h,
                        "at {:?}: dist {} vs wedge {}",
                        p,
                        d.dist().value(i),
                        wedge
                    );
                }
            }
        }
    }

    #[test]
    fn cusp_range_validation() {
        let g = Grid::new(2, 32, cusp_bbox()).unwrap();
        assert!(make_cusp(&g, 1.4).is_ok());
        assert!(make_cusp(&g, 2.0).is_err());
        assert!(make_cusp(&g, 0.9).is_err());
    }

    #[test]
    fn mushroom_s_field_values() {
        let g = Grid::new(2, 128, mushroom_bbox()).unwrap();
        let d = make_mushroom(&g, &default_mushroom_radii(3)).unwrap();
        // s at the square center is 1
        let i = d.grid().locate([6.0, 6.0, 0.0]);
        assert_eq!(d.s_field().value(i), 1.0);
        // s at a cap center is 3/2
        if let DomainKind::Mushroom { radii, positions } = d.kind() {
            let cap = [-2.0 * radii[0], positions[0], 0.0];
            let i = d.grid().locate(cap);
            assert!(d.mask()[i], "cap center should be masked");
            assert_eq!(d.s_field().value(i), 1.5);
            // mid-stem sits halfway between 1 and 3/2
            let mid = [-radii[0] / 2.0, positions[0], 0.0];
            let i = d.grid().locate(mid);
            assert!((d.s_field().value(i) - 1.25).abs() <= 0.1);
        } else {
            panic!("wrong kind");
        }
        assert_eq!(d.s_field().hi(), 1.5);
        // John center at (6, 6)
        assert!(dist(d.john_center(), [6.0, 6.0, 0.0]) <= d.grid().spacing());
    }

    #[test]
    fn mushroom_validation() {
        let g = Grid::new(2, 128, mushroom_bbox()).unwrap();
        // 2^-m caps: admissible at fine enough resolution
        let g512 = Grid::new(2, 512, mushroom_bbox()).unwrap();
        assert!(make_mushroom(&g512, &[0.5, 0.25, 0.125]).is_ok());
        // below the resolution floor
        assert!(make_mushroom(&g, &[0.5, 0.25, 0.125]).is_err());
        // not decreasing
        assert!(make_mushroom(&g, &[0.5, 0.5]).is_err());
        // too many large caps exceed the attachment window
        assert!(make_mushroom(&g, &[0.99, 0.98, 0.97, 0.96, 0.9, 0.8, 0.7, 0.6]).is_err());
    }

    #[test]
    fn chain_inside_base_ball_is_empty() {
        let d = disk_domain(64);
        let chain = build_chain(&d, [0.05, 0.05, 0.0]).unwrap();
        assert!(chain.balls.is_empty());
    }

    #[test]
    fn chain_on_disk_reaches_boundary_point() {
        // the base ball covers all of the disk except a thin rim, so the
        // chain construction only engages for near-boundary terminals
        let d = disk_domain(128);
        let chain = build_chain(&d, [0.97, 0.2, 0.0]).unwrap();
        assert!(chain.balls.len() >= 2, "expected a nontrivial chain");
        let report = chain_check(&chain, &d, chain.terminal);
        assert!(report.containment_ok, "{} containment failures", report.containment_failures);
        assert!(report.tail_ok);
        assert!(report.constants.k_constant.is_finite());
        assert!(report.constants.measure_ratio_m.is_finite());
        assert!(report.constants.overlap_n >= 1);
        // radii vanish toward the terminal end
        let first = chain.balls[0].1;
        let last = chain.balls.last().unwrap().1;
        assert!(last < first);
    }

    #[test]
    fn chain_threads_mushroom_stem() {
        let g = Grid::new(2, 256, mushroom_bbox()).unwrap();
        let d = make_mushroom(&g, &default_mushroom_radii(3)).unwrap();
        let (radii, positions) = match d.kind() {
            DomainKind::Mushroom { radii, positions } => (radii.clone(), positions.clone()),
            _ => unreachable!(),
        };
        let cap_center = [-2.0 * radii[0], positions[0], 0.0];
        let chain = build_chain(&d, cap_center).unwrap();
        assert!(!chain.balls.is_empty());
        let report = chain_check(&chain, &d, chain.terminal);
        assert!(report.containment_ok, "{} failures", report.containment_failures);
        assert!(report.constants.k_constant.is_finite());
        // the path must pass through the stem: some ball center has x in (-r, 0)
        assert!(chain.balls.iter().any(|b| b.0[0] < 0.0), "chain never left the square");
    }

    #[test]
    fn adjacent_ball_measure_ratio_small_for_close_equal_balls() {
        // two equal balls with centers closer than r/2: union/intersection <= 2^n
        let g = Grid::new(2, 128, BBox::symmetric(1.0)).unwrap();
        let r = 0.4;
        let a = cells_in_ball(&g, [0.0, 0.0, 0.0], r);
        let b = cells_in_ball(&g, [r / 2.0 - 0.01, 0.0, 0.0], r);
        let bset: std::collections::HashSet<usize> = b.iter().copied().collect();
        let inter = a.iter().filter(|i| bset.contains(i)).count();
        let union = a.len() + b.len() - inter;
        assert!(inter > 0);
        assert!((union as f64 / inter as f64) <= 4.0);
    }

    #[test]
    fn pointwise_chain_bound_constant_field() {
        let d = disk_domain(64);
        let u = crate::field::sample_field(
            d.grid(),
            &TestFunction::Constant { value: 2.0 },
            Some(d.mask()),
        )
        .unwrap();
        let eval = EvalSet::stratified(d.grid().clone(), d.mask(), 8).unwrap();
        let cmp = pointwise_chain_bound(&u, &d, &eval).unwrap();
        for p in cmp.points.iter().chain(cmp.degenerate.iter()) {
            assert!(p.left.abs() <= 1e-12);
        }
        assert!(cmp.degenerate.is_empty());
    }
}
