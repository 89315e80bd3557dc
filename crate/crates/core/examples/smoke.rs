use varpot::content::dyadic_content_full;
use varpot::field::{ExponentField, ScalarField};
use varpot::norms::normalize;
use varpot::numeric::{geometric_levels, linear_fit};
use varpot::potential::{nearest_eval_assignment, riesz_potential};
use varpot::verify::battery::{stratified_sampling, DomainSpec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args[1].parse().unwrap();
    let dspec = DomainSpec::Square { side: 1.0 };
    let grid = varpot::field::Grid::new(
        2,
        256,
        varpot::field::BBox::new([-0.25, -0.25, 0.0], 1.5),
    )
    .unwrap();
    let domain = varpot::domain::make_square(&grid, 1.0).unwrap();
    let strat = stratified_sampling(domain.grid(), domain.mask(), 64).unwrap();
    let owner = nearest_eval_assignment(domain.mask(), &strat.eval);
    let alpha = ExponentField::constant(domain.grid().clone(), Some(domain.mask()), 1.0).unwrap();
    let beta = alpha.map(|a| 2.0 - a).unwrap();
    let p_crit = alpha.map(|a| 2.0 / a).unwrap();
    let measure = domain.dist().masked_measure();
    let target = 1.0 / (2.0 * (1.0 + measure));
    let h_domain = dyadic_content_full(&domain.cell_mask(), &beta).unwrap().value;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r2s = Vec::new();
    let t0 = std::time::Instant::now();
    for _k in 0..10 {
        let nb = rng.gen_range(1..=3usize);
        let bumps: Vec<([f64; 3], f64, f64)> = (0..nb)
            .map(|_| {
                (
                    dspec.sample_point(&mut rng),
                    rng.gen_range(0.015..0.08),
                    rng.gen_range(0.5..2.0),
                )
            })
            .collect();
        let f = ScalarField::from_fn(domain.grid().clone(), Some(domain.mask()), |p| {
            let mut acc = 0.0;
            for (c, s, a) in &bumps {
                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                acc += a * (-d2 / (2.0 * s * s)).exp();
            }
            acc
        })
        .unwrap();
        let (f, _) = normalize(&f, &p_crit, target).unwrap();
        let vals = riesz_potential(&f, &alpha, &strat.eval).unwrap();
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let len = sorted.len();
        let max_v = sorted[len - 1];
        let min_pos = sorted.iter().copied().find(|&v| v > 0.0).unwrap();
        let level_h = |t: f64| {
            let mut ins = vec![false; domain.mask().len()];
            for i in 0..domain.mask().len() {
                ins[i] = domain.mask()[i] && owner[i].map_or(false, |q| vals[q as usize] > t);
            }
            let level = varpot::content::CellMask::new(domain.grid().clone(), ins).unwrap();
            dyadic_content_full(&level, &beta).unwrap().value
        };
        let mut t_lo = min_pos;
        for &t in &geometric_levels(min_pos, max_v, 8) {
            if level_h(t) < h_domain / 2.0 { break; }
            t_lo = t;
        }
        let above: Vec<f64> = sorted.iter().copied().filter(|&v| v >= t_lo).collect();
        let alen = above.len();
        let floor = ((alen as f64) / 8.0).round().max(1.0) as usize;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for j in 0..16 {
            let frac = j as f64 / 15.0;
            let count = ((alen as f64) * (floor as f64 / alen as f64).powf(frac))
                .round()
                .max(1.0) as usize;
            let t = if count >= alen { above[0] } else { above[alen - 1 - count] };
            let h = level_h(t);
            if h > 0.0 && h < h_domain / 2.0 {
                xs.push(t * t);
                ys.push(h.ln());
            }
        }
        if xs.len() < 3 { r2s.push(f64::NAN); continue; }
        let fit = linear_fit(&xs, &ys).unwrap();
        r2s.push((fit.r_squared * 1000.0).round() / 1000.0);
    }
    let min = r2s.iter().copied().fold(f64::INFINITY, f64::min);
    println!("pyramid seed {seed}: min={min:.3} {r2s:?} ({:.0}s)", t0.elapsed().as_secs_f64());
}
