//! Oracle checks runnable from the command line.
//!
//! Each check compares a library routine with a separately written,
//! deliberately naive evaluation of the same quantity.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::association::{age_update, hungarian, AssocConfig};
use crate::convlstm::{grad, objective_value, ConvLstmParams, LossKind, Objective, PddBatch};
use crate::gm::{poisson_inverse_cdf, TargetSet, TargetTuple};
use crate::grid::{postprocess_prediction, GridSpec, PddMap, PhdMap};
use crate::metrics::{ospa, OspaConfig};
use crate::scalar::{Mat4, Vec2, Vec4};
use crate::update::{kalman_correct, MeasurementSet, UpdateConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Every injection of rows into columns (or the transpose when wide).
fn brute_min(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                go(cost, row + 1, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let (n, m) = (cost.len(), cost.first().map_or(0, Vec::len));
    if n == 0 || m == 0 {
        return 0.0;
    }
    let t: Vec<Vec<f64>>;
    let c = if n > m {
        t = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        &t
    } else {
        cost
    };
    let mut best = f64::INFINITY;
    go(c, 0, &mut vec![false; c[0].len()], 0.0, &mut best);
    best
}

/// Minimum assignment cost against exhaustive enumeration, matrices up to 7x7.
pub fn hungarian_oracle(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (n, m) = (rng.random_range(1..=7), rng.random_range(1..=7));
        // integers keep sums exact
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-50..50) as f64).collect()).collect();
        let got = hungarian(&cost, false).total_cost(&cost);
        worst = worst.max((got - brute_min(&cost)).abs());
    }
    check("hungarian vs enumeration", worst == 0.0, format!("{trials} matrices, max |diff| {worst:e}"))
}

/// OSPA (p = 1, c = 100) against the permutation definition, sets up to 6.
pub fn ospa_oracle(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = OspaConfig { p: 1.0, c: 100.0 };
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let na = rng.random_range(0..=6);
        let nb = rng.random_range(0..=6);
        let mut pts = |n: usize| -> Vec<Vec2<f64>> {
            (0..n).map(|_| Vec2::new(rng.random_range(0.0..300.0), rng.random_range(0.0..300.0))).collect()
        };
        let (a, b) = (pts(na), pts(nb));
        let (small, large) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
        let expect = if large.is_empty() {
            0.0
        } else {
            let cost: Vec<Vec<f64>> =
                small.iter().map(|x| large.iter().map(|y| (x - y).norm().min(cfg.c)).collect()).collect();
            let loc = if small.is_empty() { 0.0 } else { brute_min(&cost) };
            (loc + cfg.c * (large.len() - small.len()) as f64) / large.len() as f64
        };
        worst = worst.max((ospa(&a, &b, &cfg).overall - expect).abs());
    }
    check("ospa vs permutations", worst <= 1e-9, format!("{trials} pairs, max |diff| {worst:e}"))
}

/// Scalar per-dimension Kalman and GM-PHD weight formulas for diagonal
/// covariances, returned in component-major order with the missed term first.
pub fn scalar_gmphd(
    comps: &[([f64; 4], [f64; 4], f64)],
    z: &[[f64; 4]],
    r: f64,
    p_d: f64,
    kappa: f64,
) -> Vec<([f64; 4], [f64; 4], f64)> {
    use std::f64::consts::PI;
    let lik = |m: &[f64; 4], p: &[f64; 4], zz: &[f64; 4]| -> f64 {
        (0..4).map(|d| {
            let s = p[d] + r;
            (-(zz[d] - m[d]).powi(2) / (2.0 * s)).exp() / (2.0 * PI * s).sqrt()
        }).product()
    };
    let denom: Vec<f64> =
        z.iter().map(|zz| kappa + comps.iter().map(|(m, p, w)| p_d * w * lik(m, p, zz)).sum::<f64>()).collect();
    let mut out = Vec::new();
    for (m, p, w) in comps {
        out.push((*m, *p, (1.0 - p_d) * w));
        for (zz, den) in z.iter().zip(&denom) {
            let mut mean = [0.0; 4];
            let mut cov = [0.0; 4];
            for d in 0..4 {
                let k = p[d] / (p[d] + r);
                mean[d] = m[d] + k * (zz[d] - m[d]);
                cov[d] = (1.0 - k) * p[d];
            }
            out.push((mean, cov, p_d * w * lik(m, p, zz) / den));
        }
    }
    out
}

/// The two-component, two-measurement fixture and the `p_D = 1, kappa = 0`
/// normalisation.
pub fn kalman_oracle() -> Check {
    let comps = [
        ([100.0, 80.0, 20.0, 40.0], [20.0, 20.0, 20.0, 20.0], 0.8),
        ([140.0, 90.0, 22.0, 44.0], [15.0, 25.0, 10.0, 12.0], 0.6),
    ];
    let z = [[103.0, 78.0, 21.0, 41.0], [137.0, 93.0, 20.0, 45.0]];
    let mk = |p_d: f64, clutter: f64| {
        let mut cfg = UpdateConfig::<f64>::with_area(320.0 * 240.0);
        cfg.p_d = p_d;
        cfg.clutter_rate = clutter;
        let set = TargetSet::from_targets(
            1,
            comps.iter().map(|(m, p, w)| TargetTuple::new(Vec4::from(*m), Mat4::from_diagonal(&Vec4::from(*p)), *w)).collect(),
        );
        let kappa = clutter / (cfg.area * cfg.w_span * cfg.h_span);
        let ms = MeasurementSet::new(1, z.iter().map(|b| Vec4::from(*b)).collect());
        (kalman_correct(&set, &ms, &cfg), kappa)
    };
    let mut worst = 0.0f64;
    let mut ok = true;
    let (got, kappa) = mk(0.9, 2.0);
    match got {
        Ok(got) => {
            let expect = scalar_gmphd(&comps, &z, 10.0, 0.9, kappa);
            ok &= got.len() == expect.len();
            for (g, (m, p, w)) in got.iter().zip(&expect) {
                for d in 0..4 {
                    worst = worst.max((g.mean[d] - m[d]).abs()).max((g.covariance[(d, d)] - p[d]).abs());
                }
                worst = worst.max((g.weight - w).abs());
            }
        }
        Err(_) => ok = false,
    }
    let mut sum_err = 0.0f64;
    match mk(1.0, 0.0).0 {
        Ok(got) => {
            for i in 0..z.len() {
                let s: f64 = (0..comps.len()).map(|j| got.targets[j * (z.len() + 1) + 1 + i].weight).sum();
                sum_err = sum_err.max((s - 1.0).abs());
            }
        }
        Err(_) => ok = false,
    }
    check(
        "gm-phd update vs scalar formulas",
        ok && worst <= 1e-9 && sum_err <= 1e-9,
        format!("max |diff| {worst:e}, weight-sum error {sum_err:e}"),
    )
}

fn bump(r: usize, c: usize, r0: f64, c0: f64) -> f64 {
    (-((r as f64 - r0).powi(2) + (c as f64 - c0).powi(2)) / 3.0).exp()
}

/// BPTT gradient against central differences on an 8x8 grid, 2 filters,
/// 3 input maps, both losses.
pub fn gradient_oracle(seed: u64) -> Check {
    let g = GridSpec::new(Vec2::zeros(), Vec2::new(8.0, 8.0), 1.0).expect("valid grid");
    let mk = |k: u32, r0: f64, c0: f64, sign: f64| PddMap {
        grid: g.clone(),
        values: Array2::from_shape_fn((8, 8), |(r, c)| sign * bump(r, c, r0, c0) - 0.5 * sign * bump(r, c, r0 - 1.0, c0 - 1.0)),
        frame_pair: (k, k + 1),
    };
    let batch = PddBatch::from_maps(3, [mk(1, 3.0, 3.0, 1.0), mk(2, 3.5, 4.0, -1.0), mk(3, 4.0, 4.5, 1.0)]).expect("same grid");
    let target = mk(4, 4.5, 5.0, 1.0);
    let mut p = ConvLstmParams::<f64>::init(2, seed);
    p.bias.mapv_inplace(|_| 0.1);
    p.readout_bias = 0.05;
    let mut worst = 0.0f64;
    for loss in [LossKind::Kl, LossKind::Jsd] {
        let obj = Objective { loss, kernel_l2: 1e-3, scale: 1.0, relu_output: false };
        let Ok(an) = grad(&p, &batch, &target, &obj) else {
            return check("convlstm gradient vs finite differences", false, "gradient failed".into());
        };
        let flat: Vec<f64> = an.grads.slices().iter().flat_map(|s| s.iter().copied()).collect();
        let mut idx = 0;
        for ti in 0..5 {
            for j in 0..p.slices()[ti].len() {
                let h = 1e-4;
                let mut up = p.clone();
                up.slices_mut()[ti][j] += h;
                let mut dn = p.clone();
                dn.slices_mut()[ti][j] -= h;
                let fd = match (objective_value(&up, &batch, &target, &obj), objective_value(&dn, &batch, &target, &obj)) {
                    (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
                    _ => f64::NAN,
                };
                let a = flat[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
                idx += 1;
            }
        }
    }
    check("convlstm gradient vs finite differences", worst < 1e-3, format!("max relative error {worst:e}"))
}

/// Post-processed predictions integrate to the requested mass.
pub fn conservation_oracle(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (rows, cols) = (rng.random_range(12..30), rng.random_range(12..30));
        let ts = rng.random_range(1.0..12.0);
        let g = GridSpec::new(Vec2::zeros(), Vec2::new(cols as f64 * ts, rows as f64 * ts), ts).expect("valid grid");
        let prev = PhdMap {
            grid: g.clone(),
            values: Array2::from_shape_fn(g.shape(), |_| rng.random_range(0.0..1.0)),
            frame: 1,
        };
        let raw = Array2::from_shape_fn(g.shape(), |_| rng.random_range(-0.5..0.5));
        let target = rng.random_range(0.5..20.0);
        let border = rng.random_range(1..5);
        match postprocess_prediction(&raw, &g, &prev, border, target) {
            Ok(m) => worst = worst.max((m.mass() - target).abs() / target),
            Err(_) => worst = f64::INFINITY,
        }
    }
    check("prediction mass conservation", worst <= 1e-6, format!("{trials} maps, max relative error {worst:e}"))
}

/// Inverse-CDF Poisson draws against a directly summed CDF.
pub fn poisson_oracle(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..200 {
        let lambda: f64 = rng.random_range(0.1..30.0);
        let u: f64 = rng.random();
        let k = poisson_inverse_cdf(lambda, u);
        // smallest k with CDF(k) >= u, from the plain product recursion
        let mut pmf = (-lambda).exp();
        let mut cdf = pmf;
        let mut j = 0;
        while cdf < u {
            j += 1;
            pmf *= lambda / j as f64;
            cdf += pmf;
        }
        if k.abs_diff(j) > 0 && (cdf - u).abs() > 1e-12 {
            bad += 1;
        }
    }
    check("poisson inverse cdf", bad == 0, format!("{bad} of 200 draws disagree"))
}

/// Age update fixtures and linear growth under constant survival.
pub fn age_oracle() -> Check {
    let cfg = AssocConfig::default();
    let mut ok = age_update(5, true, &cfg) == 6 && age_update(5, false, &cfg) == 3 && age_update(0, false, &cfg) == 0;
    let mut age = cfg.a_birth;
    for n in 1..=50u32 {
        age = age_update(age, true, &cfg);
        ok &= age == cfg.a_birth + n * cfg.a_am;
    }
    check("age algebra", ok, format!("final age after 50 survivals {age}"))
}

pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        hungarian_oracle(100, seed),
        ospa_oracle(100, seed + 1),
        kalman_oracle(),
        gradient_oracle(seed + 2),
        conservation_oracle(50, seed + 3),
        poisson_oracle(seed + 4),
        age_oracle(),
    ]
}
