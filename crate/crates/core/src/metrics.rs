//! Calibration distances.
//!
//! * [`smce`]: smooth calibration error, an LP over 1-Lipschitz witnesses.
//! * [`demc`] / [`ldce`]: earth mover's distance to the calibrated PLDs, with
//!   and without a label-marginal constraint, on a prediction grid.
//! * [`dce_marginal_preserving`]: distance to the one calibrated PLD that keeps
//!   the prediction marginal.
//! * [`udce_exact`] / [`true_dce`]: upper and true distances by set-partition
//!   enumeration.
//!
//! The grid LP for [`demc`] has one calibration row per grid value. Solving it
//! densely at fine grids is wasteful, so it is solved by column generation
//! instead: a column sends `g` units from one source atom to `(g, 1)` and
//! `1 − g` units from another to `(g, 0)`, which makes each column a calibrated
//! target by construction. Pricing a grid value reduces to two independent
//! minimizations over source atoms.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{CalibError, Result};
use crate::losses::PostProcessing;
use crate::lp::{solve_lp, LpProblem};
use crate::pld::{Atom, FinitePredictionTask, Pld, P_EQ_TOL};
use crate::transport::{ground_cost, wasserstein, TransportPlan};

/// Default prediction grid spacing for [`demc`] and [`ldce`].
pub const DEFAULT_GRID: f64 = 1e-3;

/// Largest number of elements handled by set-partition enumeration.
pub const PARTITION_LIMIT: usize = 12;

/// Largest support handled by [`smce_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 6;

const WITNESS_CALIBRATION_TOL: f64 = 1e-8;
const PRICING_TOL: f64 = 1e-10;
const COLUMNS_PER_ROUND: usize = 64;
const MAX_ROUNDS: usize = 2_000;

/// A Lipschitz test function restricted to the support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzWitness {
    pub support: Vec<f64>,
    pub values: Vec<f64>,
}

impl LipschitzWitness {
    /// Largest violation of the box and Lipschitz constraints.
    pub fn max_violation(&self) -> f64 {
        let boxv = self
            .values
            .iter()
            .map(|v| v.abs() - 1.0)
            .fold(0.0, f64::max);
        let lip = self
            .support
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(p, v)| (v[1] - v[0]).abs() - (p[1] - p[0]))
            .fold(0.0, f64::max);
        boxv.max(lip)
    }
}

/// `c_i = Σ_y mass(p_i, y)·(y − p_i)` on the sorted support.
fn smce_coefficients(pld: &Pld) -> (Vec<f64>, Vec<f64>) {
    pld.values()
        .into_iter()
        .map(|v| (v.p, v.mass1 - v.total() * v.p))
        .unzip()
}

/// Smooth calibration error with its maximizing witness.
pub fn smce(pld: &Pld) -> Result<(f64, LipschitzWitness)> {
    let (support, c) = smce_coefficients(pld);
    let n = support.len();
    // variables: ψ_1..ψ_n, then one slack per adjacent pair
    let m = n.saturating_sub(1);
    let mut objective: Vec<f64> = c.iter().map(|v| -v).collect();
    objective.extend(std::iter::repeat_n(0.0, m));
    let mut lp = LpProblem::new(objective);
    for i in 0..n {
        lp.set_bounds(i, -1.0, 1.0);
    }
    for k in 0..m {
        // ψ_{k+1} − ψ_k = d − s with s ∈ [0, 2d]
        let d = support[k + 1] - support[k];
        lp.set_bounds(n + k, 0.0, 2.0 * d);
        lp.add_eq_sparse(&[(k + 1, 1.0), (k, -1.0), (n + k, 1.0)], d);
    }
    let sol = solve_lp(&lp)?.into_optimal()?;
    let values = sol.x[..n].to_vec();
    let value: f64 = c.iter().zip(&values).map(|(c, v)| c * v).sum();
    Ok((value.max(0.0), LipschitzWitness { support, values }))
}

/// Grid search over witnesses, as an independent check on [`smce`].
///
/// Maximizes over all tuples in `{−1, −1+step, …, 1}^n` that satisfy the
/// Lipschitz constraints. The search runs as a dynamic program over the sorted
/// support, which visits the same feasible set as listing every tuple.
pub fn smce_bruteforce(pld: &Pld, step: f64) -> Result<f64> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CalibError::InvalidParameter(format!(
            "grid step {step} must lie in (0,1]"
        )));
    }
    let (support, c) = smce_coefficients(pld);
    if support.len() > BRUTEFORCE_LIMIT {
        return Err(CalibError::SupportTooLarge {
            size: support.len(),
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let k = (2.0 / step).floor() as usize;
    let grid: Vec<f64> = (0..=k).map(|i| -1.0 + i as f64 * step).collect();
    let mut best: Vec<f64> = grid.iter().map(|g| c[0] * g).collect();
    for i in 1..support.len() {
        let reach = ((support[i] - support[i - 1]) / step + 1e-9).floor() as usize;
        let next = (0..grid.len())
            .map(|a| {
                let lo = a.saturating_sub(reach);
                let hi = (a + reach).min(grid.len() - 1);
                let prev = best[lo..=hi]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                prev + c[i] * grid[a]
            })
            .collect();
        best = next;
    }
    Ok(best.into_iter().fold(f64::NEG_INFINITY, f64::max).max(0.0))
}

/// Result of a grid-restricted transport to calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct DemcResult {
    pub value: f64,
    pub plan: TransportPlan,
    /// The calibrated PLD the plan moves mass to.
    pub target: Pld,
}

fn check_grid(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 && h <= 0.1 {
        Ok(())
    } else {
        Err(CalibError::InvalidParameter(format!(
            "grid spacing h={h} must lie in (0, 0.1]"
        )))
    }
}

/// `{0, h, 2h, …, 1} ∪ support`, with grid points that collide with a support
/// value replaced by the support value.
fn prediction_grid(support: &[f64], h: f64) -> Vec<f64> {
    let steps = (1.0 / h).ceil() as usize;
    let mut grid: Vec<f64> = support.to_vec();
    for k in 0..=steps {
        let g = (k as f64 * h).min(1.0);
        let near = support.iter().any(|&s| (s - g).abs() <= P_EQ_TOL);
        if !near {
            grid.push(g);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Copy)]
struct Column {
    g: usize,
    label1_src: usize,
    label0_src: usize,
}

struct ColumnGeneration<'a> {
    atoms: &'a [Atom],
    grid: Vec<f64>,
    match_tau: Option<f64>,
}

impl ColumnGeneration<'_> {
    fn edge_cost(&self, src: usize, g: f64, label: u8) -> f64 {
        let a = &self.atoms[src];
        (a.p - g).abs() + f64::from(a.y.abs_diff(label))
    }

    fn column_cost(&self, col: &Column) -> f64 {
        let g = self.grid[col.g];
        let mut cost = 0.0;
        if g > 0.0 {
            cost += g * self.edge_cost(col.label1_src, g, 1);
        }
        if g < 1.0 {
            cost += (1.0 - g) * self.edge_cost(col.label0_src, g, 0);
        }
        cost
    }

    fn column_entries(&self, col: &Column) -> Vec<(usize, f64)> {
        let g = self.grid[col.g];
        let mut out = Vec::with_capacity(3);
        if g > 0.0 {
            out.push((col.label1_src, g));
        }
        if g < 1.0 {
            out.push((col.label0_src, 1.0 - g));
        }
        if self.match_tau.is_some() {
            out.push((self.atoms.len(), g));
        }
        out
    }

    fn canonical(&self, g: usize, i: usize, j: usize) -> Column {
        let gv = self.grid[g];
        let (i, j) = if gv == 0.0 {
            (j, j)
        } else if gv == 1.0 {
            (i, i)
        } else {
            (i, j)
        };
        Column {
            g,
            label1_src: i,
            label0_src: j,
        }
    }

    fn initial_columns(&self) -> Vec<Column> {
        let last = self.grid.len() - 1;
        let mut cols = Vec::new();
        for (k, a) in self.atoms.iter().enumerate() {
            let own = self
                .grid
                .iter()
                .position(|&g| g == a.p)
                .expect("support is part of the grid");
            cols.push(self.canonical(own, k, k));
            cols.push(self.canonical(0, k, k));
            cols.push(self.canonical(last, k, k));
        }
        cols
    }

    fn solve_master(&self, cols: &[Column]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let n = self.atoms.len();
        let mut lp = LpProblem::new(cols.iter().map(|c| self.column_cost(c)).collect());
        let rows = n + usize::from(self.match_tau.is_some());
        let mut matrix = vec![vec![0.0; cols.len()]; rows];
        for (k, col) in cols.iter().enumerate() {
            for (r, v) in self.column_entries(col) {
                matrix[r][k] += v;
            }
        }
        let mut rhs: Vec<f64> = self.atoms.iter().map(|a| a.mass).collect();
        if let Some(t) = self.match_tau {
            rhs.push(t);
        }
        for (row, b) in matrix.into_iter().zip(rhs) {
            lp.add_eq(row, b);
        }
        let sol = solve_lp(&lp)?.into_optimal()?;
        Ok((sol.objective_value, sol.x, sol.duals))
    }

    /// Most negative reduced-cost columns, at most one per grid value.
    fn price(&self, duals: &[f64]) -> Vec<(f64, Column)> {
        let n = self.atoms.len();
        let tau_dual = if self.match_tau.is_some() {
            duals[n]
        } else {
            0.0
        };
        let mut found = Vec::new();
        for (gi, &g) in self.grid.iter().enumerate() {
            let best = |label: u8| {
                (0..n)
                    .map(|k| (self.edge_cost(k, g, label) - duals[k], k))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .expect("nonempty support")
            };
            let (r1, i) = best(1);
            let (r0, j) = best(0);
            let rc = g * (r1 - tau_dual) + (1.0 - g) * r0;
            if rc < -PRICING_TOL {
                found.push((rc, self.canonical(gi, i, j)));
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        found
    }

    fn run(&self) -> Result<DemcResult> {
        let mut cols = self.initial_columns();
        let mut seen: HashSet<(usize, usize, usize)> = HashSet::new();
        cols.retain(|c| seen.insert((c.g, c.label1_src, c.label0_src)));
        for _ in 0..MAX_ROUNDS {
            let (value, x, duals) = self.solve_master(&cols)?;
            let mut added = 0;
            for (_, col) in self.price(&duals) {
                if added == COLUMNS_PER_ROUND {
                    break;
                }
                if seen.insert((col.g, col.label1_src, col.label0_src)) {
                    cols.push(col);
                    added += 1;
                }
            }
            if added == 0 {
                return self.assemble(value, &cols, &x);
            }
        }
        Err(CalibError::NumericalFailure(format!(
            "column generation did not settle within {MAX_ROUNDS} rounds"
        )))
    }

    fn assemble(&self, value: f64, cols: &[Column], x: &[f64]) -> Result<DemcResult> {
        // (source, grid index, label, mass)
        let mut flows: Vec<(usize, usize, u8, f64)> = Vec::new();
        for (col, &w) in cols.iter().zip(x) {
            if w <= 0.0 {
                continue;
            }
            let g = self.grid[col.g];
            if g > 0.0 {
                flows.push((col.label1_src, col.g, 1, g * w));
            }
            if g < 1.0 {
                flows.push((col.label0_src, col.g, 0, (1.0 - g) * w));
            }
        }
        let total: f64 = flows.iter().map(|f| f.3).sum();
        let target = Pld::new(
            flows
                .iter()
                .map(|&(_, g, b, m)| Atom::new(self.grid[g], b, m / total)),
        )?;
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for &(src, g, b, m) in &flows {
            let p = self.grid[g];
            let Some(j) = target.atoms().iter().position(|a| a.p == p && a.y == b) else {
                continue;
            };
            match entries.iter_mut().find(|e| e.0 == src && e.1 == j) {
                Some(e) => e.2 += m,
                None => entries.push((src, j, m)),
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        let total_cost = entries
            .iter()
            .map(|&(i, j, m)| m * ground_cost(&self.atoms[i], &target.atoms()[j]))
            .sum();
        Ok(DemcResult {
            value: value.max(0.0),
            plan: TransportPlan {
                entries,
                total_cost,
            },
            target,
        })
    }
}

fn transport_to_calibration(pld: &Pld, h: f64, match_tau: bool) -> Result<DemcResult> {
    check_grid(h)?;
    let cg = ColumnGeneration {
        atoms: pld.atoms(),
        grid: prediction_grid(&pld.support(), h),
        match_tau: match_tau.then(|| pld.tau()),
    };
    cg.run()
}

/// Earth mover's distance to the calibrated PLDs supported on the grid
/// `{0, h, …, 1} ∪ support`. The value lies in `[dEMC, dEMC + h]`.
pub fn demc(pld: &Pld, h: f64) -> Result<DemcResult> {
    transport_to_calibration(pld, h, false)
}

/// As [`demc`], with the target's label marginal pinned to `tau(pld)`.
pub fn ldce(pld: &Pld, h: f64) -> Result<f64> {
    Ok(transport_to_calibration(pld, h, true)?.value)
}

/// [`ldce`] with its plan and target.
pub fn ldce_detailed(pld: &Pld, h: f64) -> Result<DemcResult> {
    transport_to_calibration(pld, h, true)
}

/// The grid LP for [`demc`] / [`ldce`] written out in full: one variable per
/// (source atom, grid value, label) and one calibration row per grid value.
/// Dense, so only practical for coarse grids; kept as a reference for the
/// column-generation solver.
pub fn demc_full_lp(pld: &Pld, h: f64, match_tau: bool) -> Result<f64> {
    check_grid(h)?;
    let atoms = pld.atoms();
    let grid = prediction_grid(&pld.support(), h);
    let n = atoms.len();
    let var = |i: usize, g: usize, b: usize| (i * grid.len() + g) * 2 + b;
    let mut cost = vec![0.0; n * grid.len() * 2];
    for (i, a) in atoms.iter().enumerate() {
        for (gi, &g) in grid.iter().enumerate() {
            for b in 0..2u8 {
                cost[var(i, gi, usize::from(b))] = ground_cost(a, &Atom::new(g, b, 0.0));
            }
        }
    }
    let mut lp = LpProblem::new(cost);
    for (i, a) in atoms.iter().enumerate() {
        let row: Vec<(usize, f64)> = (0..grid.len())
            .flat_map(|g| [(var(i, g, 0), 1.0), (var(i, g, 1), 1.0)])
            .collect();
        lp.add_eq_sparse(&row, a.mass);
    }
    for (gi, &g) in grid.iter().enumerate() {
        // (1 − g)·inflow(g,1) = g·inflow(g,0)
        let row: Vec<(usize, f64)> = (0..n)
            .flat_map(|i| [(var(i, gi, 1), 1.0 - g), (var(i, gi, 0), -g)])
            .collect();
        lp.add_eq_sparse(&row, 0.0);
    }
    if match_tau {
        let row: Vec<(usize, f64)> = (0..n)
            .flat_map(|i| (0..grid.len()).map(move |g| (var(i, g, 1), 1.0)))
            .collect();
        lp.add_eq_sparse(&row, pld.tau());
    }
    Ok(solve_lp(&lp)?.into_optimal()?.objective_value.max(0.0))
}

/// Distance to `relabel_bernoulli(pld)`, the calibrated PLD with the same
/// prediction marginal.
pub fn dce_marginal_preserving(pld: &Pld) -> Result<f64> {
    Ok(wasserstein(pld, &pld.relabel_bernoulli())?.0)
}

/// An element to be grouped: position, weight and conditional label mean.
#[derive(Debug, Clone, Copy)]
struct Item {
    pos: f64,
    weight: f64,
    mean: f64,
}

/// Minimum over set partitions of `Σ_blocks Σ_items weight·|pos − block mean|`
/// where a block's mean is the weighted average of its items' means.
///
/// Partitions are visited as restricted growth strings in lexicographic order
/// and only strict improvements replace the incumbent, so ties resolve to the
/// lexicographically smallest partition.
fn best_partition(items: &[Item]) -> Result<(f64, Vec<usize>)> {
    let n = items.len();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let first = items[0].mean;
    if items.iter().all(|it| (it.mean - first).abs() <= P_EQ_TOL) {
        // every block has the same mean, so every partition costs the same
        let mean = weighted_mean(items);
        let cost = items
            .iter()
            .map(|it| it.weight * (it.pos - mean).abs())
            .sum();
        return Ok((cost, vec![0; n]));
    }
    if n > PARTITION_LIMIT {
        return Err(CalibError::SupportTooLarge {
            size: n,
            limit: PARTITION_LIMIT,
        });
    }
    let mut labels = vec![0usize; n];
    let mut w = vec![0.0; n];
    let mut wm = vec![0.0; n];
    let mut best = (f64::INFINITY, labels.clone());
    enumerate(items, 0, 0, &mut labels, &mut w, &mut wm, &mut best);
    Ok(best)
}

fn weighted_mean(items: &[Item]) -> f64 {
    let w: f64 = items.iter().map(|it| it.weight).sum();
    items.iter().map(|it| it.weight * it.mean).sum::<f64>() / w
}

fn enumerate(
    items: &[Item],
    depth: usize,
    blocks: usize,
    labels: &mut [usize],
    w: &mut [f64],
    wm: &mut [f64],
    best: &mut (f64, Vec<usize>),
) {
    if depth == items.len() {
        let cost: f64 = items
            .iter()
            .zip(labels.iter())
            .map(|(it, &b)| it.weight * (it.pos - wm[b] / w[b]).abs())
            .sum();
        if cost < best.0 {
            *best = (cost, labels.to_vec());
        }
        return;
    }
    let it = items[depth];
    for b in 0..=blocks {
        labels[depth] = b;
        w[b] += it.weight;
        wm[b] += it.weight * it.mean;
        let next_blocks = if b == blocks { blocks + 1 } else { blocks };
        enumerate(items, depth + 1, next_blocks, labels, w, wm, best);
        w[b] -= it.weight;
        wm[b] -= it.weight * it.mean;
    }
}

fn block_targets(items: &[Item], labels: &[usize]) -> Vec<f64> {
    let blocks = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut w = vec![0.0; blocks];
    let mut wm = vec![0.0; blocks];
    for (it, &b) in items.iter().zip(labels) {
        w[b] += it.weight;
        wm[b] += it.weight * it.mean;
    }
    labels.iter().map(|&b| wm[b] / w[b]).collect()
}

fn value_items(pld: &Pld) -> Vec<Item> {
    pld.values()
        .into_iter()
        .map(|v| Item {
            pos: v.p,
            weight: v.total(),
            mean: v.label_mean(),
        })
        .collect()
}

/// Upper distance to calibration: the cheapest calibrated post-processing,
/// found by enumerating all groupings of the support values.
pub fn udce_exact(pld: &Pld) -> Result<(f64, PostProcessing)> {
    let items = value_items(pld);
    let (cost, labels) = best_partition(&items)?;
    let targets = block_targets(&items, &labels);
    let map: Vec<(f64, f64)> = items
        .iter()
        .zip(&targets)
        .map(|(it, &t)| (it.pos, t))
        .collect();
    Ok((cost, PostProcessing::from_point_map(&map)?))
}

/// Upper bound on the upper distance using only groupings of consecutive
/// support values. Not exact: optimal groupings can be non-contiguous.
pub fn udce_contiguous_upper(pld: &Pld) -> Result<(f64, PostProcessing)> {
    let items = value_items(pld);
    let n = items.len();
    let block_cost = |a: usize, b: usize| {
        let block = &items[a..b];
        let mean = weighted_mean(block);
        block
            .iter()
            .map(|it| it.weight * (it.pos - mean).abs())
            .sum::<f64>()
    };
    let mut best = vec![f64::INFINITY; n + 1];
    let mut cut = vec![0usize; n + 1];
    best[0] = 0.0;
    for b in 1..=n {
        for a in 0..b {
            let c = best[a] + block_cost(a, b);
            if c < best[b] {
                best[b] = c;
                cut[b] = a;
            }
        }
    }
    let mut labels = vec![0usize; n];
    let (mut b, mut block) = (n, 0);
    while b > 0 {
        let a = cut[b];
        labels[a..b].fill(block);
        block += 1;
        b = a;
    }
    let targets = block_targets(&items, &labels);
    let map: Vec<(f64, f64)> = items
        .iter()
        .zip(&targets)
        .map(|(it, &t)| (it.pos, t))
        .collect();
    Ok((best[n], PostProcessing::from_point_map(&map)?))
}

/// `E|κ(p) − p|` for a post-processing that must calibrate `pld`.
pub fn udce_witness_cost(pld: &Pld, kappa: &PostProcessing) -> Result<f64> {
    let mapped = pld.apply_postprocessing(kappa)?;
    let gap = mapped.max_calibration_gap();
    if gap > WITNESS_CALIBRATION_TOL {
        return Err(CalibError::NotCalibratedWitness { gap });
    }
    Ok(pld
        .atoms()
        .iter()
        .map(|a| a.mass * (kappa.eval(a.p) - a.p).abs())
        .sum())
}

/// True distance to calibration on a finite domain, with the calibrated
/// predictor attaining it (one value per task point).
pub fn true_dce_detailed(task: &FinitePredictionTask) -> Result<(f64, Vec<f64>)> {
    let points = task.points();
    let active: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].weight > 0.0)
        .collect();
    let items: Vec<Item> = active
        .iter()
        .map(|&i| Item {
            pos: points[i].prediction,
            weight: points[i].weight,
            mean: points[i].bayes,
        })
        .collect();
    let (cost, labels) = best_partition(&items)?;
    let targets = block_targets(&items, &labels);
    let mut q: Vec<f64> = points.iter().map(|p| p.prediction).collect();
    for (&i, &t) in active.iter().zip(&targets) {
        q[i] = t;
    }
    Ok((cost, q))
}

/// True distance to calibration on a finite domain.
pub fn true_dce(task: &FinitePredictionTask) -> Result<f64> {
    Ok(true_dce_detailed(task)?.0)
}
