//! Seeded random instances shared by the integration tests.

#![allow(dead_code)]

use calib_core::losses::{LinearPiece, PostProcessing, VComponent, VMixtureLoss};
use calib_core::pld::{Atom, FinitePredictionTask, Pld, TaskPoint};
use calib_core::rng::seeded_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed)
}

/// Up to `max_support` distinct prediction values on a 1/1000 grid, each with
/// random label masses.
pub fn random_pld(rng: &mut impl Rng, max_support: usize) -> Pld {
    let n = rng.random_range(1..=max_support);
    let mut ps: Vec<f64> = Vec::new();
    while ps.len() < n {
        let p = f64::from(rng.random_range(0..=1000u32)) / 1000.0;
        if !ps.contains(&p) {
            ps.push(p);
        }
    }
    let raw: Vec<(f64, u8, f64)> = ps
        .iter()
        .flat_map(|&p| {
            let m0: f64 = rng.random();
            let m1: f64 = rng.random();
            [(p, 0u8, m0), (p, 1u8, m1)]
        })
        .collect();
    normalize(raw)
}

fn normalize(raw: Vec<(f64, u8, f64)>) -> Pld {
    let total: f64 = raw.iter().map(|a| a.2).sum();
    Pld::new(raw.into_iter().map(|(p, y, m)| Atom::new(p, y, m / total))).unwrap()
}

/// A calibrated PLD: mass `m_i` at `p_i` split as `m_i·p_i` on label 1.
pub fn random_calibrated(rng: &mut impl Rng, max_support: usize) -> Pld {
    let n = rng.random_range(1..=max_support);
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>() + 0.05))
        .collect();
    calibrated_from(&raw)
}

pub fn calibrated_from(values: &[(f64, f64)]) -> Pld {
    let total: f64 = values.iter().map(|v| v.1).sum();
    Pld::new(values.iter().flat_map(|&(p, m)| {
        let m = m / total;
        [Atom::new(p, 1, m * p), Atom::new(p, 0, m * (1.0 - p))]
    }))
    .unwrap()
}

/// A calibrated PLD whose label marginal is `tau`, built by mixing a random
/// calibrated PLD with a point at the value that fixes the mean.
pub fn random_calibrated_with_tau(rng: &mut impl Rng, max_support: usize, tau: f64) -> Pld {
    loop {
        let n = rng.random_range(1..=max_support.saturating_sub(1).max(1));
        let mut vals: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>() + 0.05))
            .collect();
        let total: f64 = vals.iter().map(|v| v.1).sum();
        let mean: f64 = vals.iter().map(|v| v.0 * v.1).sum::<f64>() / total;
        let w: f64 = rng.random_range(0.2..0.8);
        let r = (tau - (1.0 - w) * mean) / w;
        if !(0.0..=1.0).contains(&r) {
            continue;
        }
        for v in &mut vals {
            v.1 *= (1.0 - w) / total;
        }
        vals.push((r, w));
        return calibrated_from(&vals);
    }
}

/// Any PLD whose label marginal is `tau`.
pub fn random_pld_with_tau(rng: &mut impl Rng, max_support: usize, tau: f64) -> Pld {
    let n = rng.random_range(1..=max_support);
    let ps: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let w1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let w0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let (s1, s0): (f64, f64) = (w1.iter().sum(), w0.iter().sum());
    Pld::new((0..n).flat_map(|i| {
        [
            Atom::new(ps[i], 1, tau * w1[i] / s1),
            Atom::new(ps[i], 0, (1.0 - tau) * w0[i] / s0),
        ]
    }))
    .unwrap()
}

pub fn random_task(rng: &mut impl Rng, max_points: usize) -> FinitePredictionTask {
    let n = rng.random_range(1..=max_points);
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let s: f64 = w.iter().sum();
    FinitePredictionTask::new((0..n).map(|i| {
        TaskPoint::new(
            w[i] / s,
            rng.random(),
            f64::from(rng.random_range(0..=1000u32)) / 1000.0,
        )
    }))
    .unwrap()
}

/// One to three V components with total weight at most `max_total`.
pub fn random_loss(rng: &mut impl Rng, max_total: f64) -> VMixtureLoss {
    let n = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
    let s: f64 = raw.iter().sum();
    let total = rng.random_range(0.1..=max_total);
    let comps = raw
        .iter()
        .map(|r| VComponent {
            v: rng.random(),
            lambda: total * r / s,
        })
        .collect();
    VMixtureLoss::new(
        comps,
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .unwrap()
}

/// A random piecewise-linear post-processing with one to four pieces whose
/// endpoint values lie in `[0,1]`.
pub fn random_kappa(rng: &mut impl Rng) -> PostProcessing {
    let n = rng.random_range(1..=4);
    let mut cuts: Vec<f64> = (1..n).map(|_| rng.random()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend(cuts);
    edges.push(1.0);
    let pieces = edges
        .windows(2)
        .map(|e| {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let len = e[1] - e[0];
            if len < 1e-9 {
                return LinearPiece {
                    lo: e[0],
                    hi: e[1],
                    slope: 0.0,
                    intercept: a,
                };
            }
            let slope = (b - a) / len;
            LinearPiece {
                lo: e[0],
                hi: e[1],
                slope,
                intercept: a - slope * e[0],
            }
        })
        .collect();
    PostProcessing::new(pieces).unwrap()
}

pub const SIGMAS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

/// Earth mover's distance by listing every basic solution of the
/// transportation polytope: each choice of `m + n − 1` cells whose square
/// system is nonsingular and whose solution is nonnegative.
pub fn exhaustive_wasserstein(mu: &Pld, nu: &Pld) -> f64 {
    let (a, b) = (mu.atoms(), nu.atoms());
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let rank = m + n - 1;
    // drop the last column constraint, which the others imply
    let rhs: Vec<f64> = a
        .iter()
        .map(|x| x.mass)
        .chain(b[..n - 1].iter().map(|x| x.mass))
        .collect();
    let cost = |i: usize, j: usize| (a[i].p - b[j].p).abs() + f64::from(a[i].y.abs_diff(b[j].y));
    let mut best = f64::INFINITY;
    for_each_subset(cells.len(), rank, &mut |sel| {
        let mut mat = vec![vec![0.0; rank]; rank];
        for (col, &c) in sel.iter().enumerate() {
            let (i, j) = cells[c];
            mat[i][col] = 1.0;
            if j < n - 1 {
                mat[m + j][col] = 1.0;
            }
        }
        if let Some(x) = solve_square(mat, rhs.clone()) {
            if x.iter().all(|&v| v >= -1e-12) {
                let total: f64 = sel
                    .iter()
                    .zip(&x)
                    .map(|(&c, &v)| cost(cells[c].0, cells[c].1) * v)
                    .sum();
                best = best.min(total);
            }
        }
    });
    best
}

fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}
