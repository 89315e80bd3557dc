//! Seeded, resolution-independent input batteries and the named analytic
//! specs for domains and exponents. Battery parameters are drawn from the
//! seed alone, so the same seed produces the same analytic functions at
//! every resolution.

use crate::config::{parse_spec, SpecString};
use crate::domain::{
    cusp_bbox, default_mushroom_radii, make_cusp, make_disk, make_mushroom, make_square,
    mushroom_bbox, DomainModel,
};
use crate::field::{BBox, ExponentField, Grid, Point, ScalarField, TestFunction};
use crate::potential::EvalSet;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named domain generator with its canonical bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainSpec {
    Square { side: f64 },
    Disk { radius: f64 },
    Cusp { s: f64 },
    Mushroom { count: usize },
}

impl DomainSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec = parse_spec(text)?;
        match spec.name.as_str() {
            "square" => Ok(DomainSpec::Square { side: spec.param_f64("side", 1.0)? }),
            "disk" => Ok(DomainSpec::Disk { radius: spec.param_f64("radius", 1.0)? }),
            "cusp" => Ok(DomainSpec::Cusp { s: spec.param_f64("s", 1.4)? }),
            "mushroom" => Ok(DomainSpec::Mushroom { count: spec.param_usize("count", 3)? }),
            other => Err(Error::invalid(
                "domain",
                format!("unknown domain {other:?} (square | disk | cusp | mushroom)"),
            )),
        }
    }

    pub fn bbox(&self) -> BBox {
        match self {
            DomainSpec::Square { .. } => BBox::unit(),
            DomainSpec::Disk { .. } => BBox::symmetric(1.2),
            DomainSpec::Cusp { .. } => cusp_bbox(),
            DomainSpec::Mushroom { .. } => mushroom_bbox(),
        }
    }

    pub fn build(&self, resolution: usize) -> Result<DomainModel> {
        let grid = Grid::new(2, resolution, self.bbox())?;
        match self {
            DomainSpec::Square { side } => make_square(&grid, *side),
            DomainSpec::Disk { radius } => make_disk(&grid, *radius),
            DomainSpec::Cusp { s } => make_cusp(&grid, *s),
            DomainSpec::Mushroom { count } => make_mushroom(&grid, &default_mushroom_radii(*count)),
        }
    }

    /// Characteristic feature size used to scale battery bumps.
    pub fn feature_scale(&self) -> f64 {
        match self {
            DomainSpec::Square { side } => *side,
            DomainSpec::Disk { radius } => *radius,
            DomainSpec::Cusp { .. } => 0.5,
            DomainSpec::Mushroom { .. } => 6.0,
        }
    }

    /// Seeded point well inside the analytic domain, independent of any grid.
    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> Point {
        match self {
            DomainSpec::Square { side } => {
                let c = 0.5;
                let half = 0.4 * side;
                [c + rng.gen_range(-half..half), c + rng.gen_range(-half..half), 0.0]
            }
            DomainSpec::Disk { radius } => loop {
                let x = rng.gen_range(-0.85..0.85) * radius;
                let y = rng.gen_range(-0.85..0.85) * radius;
                if x * x + y * y < (0.85 * radius) * (0.85 * radius) {
                    return [x, y, 0.0];
                }
            },
            DomainSpec::Cusp { .. } => loop {
                let x = rng.gen_range(-0.4..0.4);
                let y = rng.gen_range(-0.4..0.4);
                if x * x + y * y < 0.4 * 0.4 {
                    return [1.0 + x, y, 0.0];
                }
            },
            DomainSpec::Mushroom { .. } => {
                [rng.gen_range(1.5..10.5), rng.gen_range(1.5..10.5), 0.0]
            }
        }
    }
}

/// Named analytic exponent spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExponentSpec {
    Const { value: f64 },
    Linear { axis: usize, scale: f64, offset: f64 },
    /// Band-limited perturbation `base + amp * noise` (noise in [-1, 1]).
    Smooth { base: f64, amp: f64, waves: u32, seed: u64 },
}

impl ExponentSpec {
    pub fn constant(value: f64) -> Self {
        ExponentSpec::Const { value }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec = parse_spec(text)?;
        match spec.name.as_str() {
            "const" => {
                let v = match &spec.bare {
                    Some(b) => b.parse::<f64>().map_err(|_| {
                        Error::invalid("exponent", format!("{b:?} is not a number"))
                    })?,
                    None => spec.param_f64("value", 1.0)?,
                };
                Ok(ExponentSpec::Const { value: v })
            }
            "linear" => Ok(ExponentSpec::Linear {
                axis: spec.param_usize("axis", 0)?,
                scale: spec.param_f64("scale", 0.1)?,
                offset: spec.param_f64("offset", 1.0)?,
            }),
            "smooth" => Ok(ExponentSpec::Smooth {
                base: spec.param_f64("base", 1.0)?,
                amp: spec.param_f64("amp", 0.1)?,
                waves: spec.param_usize("waves", 2)? as u32,
                seed: spec.param_f64("seed", 11.0)? as u64,
            }),
            other => Err(Error::invalid(
                "exponent",
                format!("unknown exponent spec {other:?} (const | linear | smooth)"),
            )),
        }
    }

    pub fn build(&self, grid: &Grid, mask: Option<&[bool]>) -> Result<ExponentField> {
        match self {
            ExponentSpec::Const { value } => ExponentField::constant(grid.clone(), mask, *value),
            ExponentSpec::Linear { axis, scale, offset } => ExponentField::sample(
                grid,
                &TestFunction::CoordLinear { axis: *axis, scale: *scale, offset: *offset },
                mask,
            ),
            ExponentSpec::Smooth { base, amp, waves, seed } => ExponentField::sample(
                grid,
                &TestFunction::RandomSmooth {
                    seed: *seed,
                    modes: 6,
                    max_wavenumber: *waves,
                    amplitude: *amp,
                    offset: *base,
                },
                mask,
            ),
        }
    }
}

/// Battery kinds: which analytic family the seeded inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatteryKind {
    Gaussian,
    Smooth,
    Balls,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub kind: BatteryKind,
    pub count: usize,
}

impl BatterySpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: SpecString = parse_spec(text)?;
        let count = spec.bare_usize(10)?;
        let kind = match spec.name.as_str() {
            "gaussian" => BatteryKind::Gaussian,
            "smooth" => BatteryKind::Smooth,
            "balls" => BatteryKind::Balls,
            "mixed" => BatteryKind::Mixed,
            other => Err(Error::invalid(
                "battery",
                format!("unknown battery {other:?} (gaussian | smooth | balls | mixed)"),
            ))?,
        };
        Ok(BatterySpec { kind, count })
    }

    /// The analytic battery members; depends on the seed and the domain
    /// geometry only, never on a grid.
    pub fn functions(&self, seed: u64, domain: &DomainSpec) -> Vec<TestFunction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = domain.feature_scale();
        (0..self.count)
            .map(|i| {
                let kind = match self.kind {
                    BatteryKind::Mixed => match i % 3 {
                        0 => BatteryKind::Gaussian,
                        1 => BatteryKind::Smooth,
                        _ => BatteryKind::Balls,
                    },
                    k => k,
                };
                match kind {
                    BatteryKind::Gaussian => TestFunction::GaussianBump {
                        center: domain.sample_point(&mut rng),
                        sigma: scale * rng.gen_range(0.08..0.25),
                        amplitude: rng.gen_range(0.5..2.0),
                    },
                    BatteryKind::Balls => TestFunction::BallIndicator {
                        center: domain.sample_point(&mut rng),
                        radius: scale * rng.gen_range(0.15..0.4),
                    },
                    BatteryKind::Smooth | BatteryKind::Mixed => TestFunction::RandomSmooth {
                        seed: rng.gen(),
                        modes: 8,
                        max_wavenumber: 3,
                        amplitude: rng.gen_range(0.5..1.5),
                        offset: 0.0,
                    },
                }
            })
            .collect()
    }
}

/// A stratified evaluation lattice together with the coarse grid it induces:
/// one representative fine cell per coarse cell, kept when masked. Used both
/// for evaluation sets and for eval-set-induced fields (potentials sampled
/// at the lattice, read back as a field at the coarse resolution).
pub struct StratifiedSampling {
    pub eval: EvalSet,
    pub coarse_grid: Grid,
    /// For each coarse cell: position of its representative in `eval`.
    pub eval_pos_of_coarse: Vec<Option<u32>>,
}

pub fn stratified_sampling(grid: &Grid, mask: &[bool], per_axis: usize) -> Result<StratifiedSampling> {
    if grid.dim() != 2 {
        return Err(Error::invalid("stratified", "coarse induction is planar"));
    }
    let r = grid.resolution();
    let per_axis = per_axis.clamp(4, r);
    let factor = (r / per_axis).max(1);
    let rep = |k: usize| (k * factor + factor / 2).min(r - 1);
    let coarse_grid = Grid::new(2, per_axis, grid.bbox())?;
    let mut indices = Vec::new();
    let mut eval_pos_of_coarse = vec![None; per_axis * per_axis];
    for ky in 0..per_axis {
        for kx in 0..per_axis {
            let i = grid.index([rep(kx), rep(ky), 0]);
            if mask[i] {
                eval_pos_of_coarse[ky * per_axis + kx] = Some(indices.len() as u32);
                indices.push(i);
            }
        }
    }
    if indices.is_empty() {
        return Err(Error::EmptyMask);
    }
    let eval = EvalSet::from_indices(grid.clone(), mask, indices)?;
    Ok(StratifiedSampling { eval, coarse_grid, eval_pos_of_coarse })
}

impl StratifiedSampling {
    /// Read values sampled at the lattice back as a coarse-grid field.
    pub fn induced_field(&self, values_at_eval: &[f64]) -> Result<ScalarField> {
        let n = self.coarse_grid.num_cells();
        let mut values = vec![0.0; n];
        let mut mask = vec![false; n];
        for c in 0..n {
            if let Some(pos) = self.eval_pos_of_coarse[c] {
                values[c] = values_at_eval[pos as usize];
                mask[c] = true;
            }
        }
        ScalarField::from_raw(self.coarse_grid.clone(), values, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batteries_are_seed_deterministic_and_resolution_free() {
        let d = DomainSpec::Square { side: 1.0 };
        let b = BatterySpec { kind: BatteryKind::Mixed, count: 7 };
        let f1 = b.functions(42, &d);
        let f2 = b.functions(42, &d);
        assert_eq!(f1, f2);
        let f3 = b.functions(43, &d);
        assert_ne!(f1, f3);
    }

    #[test]
    fn domain_specs_parse_and_build() {
        let d = DomainSpec::parse("disk:radius=0.9").unwrap();
        assert_eq!(d, DomainSpec::Disk { radius: 0.9 });
        let m = d.build(32).unwrap();
        assert!(m.masked_count() > 0);
        assert!(DomainSpec::parse("torus").is_err());
    }

    #[test]
    fn exponent_specs_build() {
        let g = Grid::new(2, 16, BBox::unit()).unwrap();
        let e = ExponentSpec::parse("const:1.5").unwrap().build(&g, None).unwrap();
        assert_eq!(e.lo(), 1.5);
        let e = ExponentSpec::parse("linear:axis=0,scale=0.2,offset=1").unwrap()
            .build(&g, None)
            .unwrap();
        assert!(e.hi() <= 1.2 + 1e-12 && e.lo() >= 1.0);
    }

    #[test]
    fn stratified_induced_field_preserves_measure_scale() {
        let g = Grid::new(2, 64, BBox::unit()).unwrap();
        let mask = vec![true; g.num_cells()];
        let s = stratified_sampling(&g, &mask, 16).unwrap();
        assert_eq!(s.eval.len(), 256);
        let ones = vec![1.0; s.eval.len()];
        let f = s.induced_field(&ones).unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-12);
    }
}
