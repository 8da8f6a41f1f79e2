//! Dense two-phase simplex.
//!
//! Solves `minimize c·x  s.t.  A·x = b,  lower ≤ x ≤ upper`. Bounds are folded
//! into a standard-form tableau (shifts, reflections, free-variable splits and
//! explicit upper-bound rows). Pricing starts with steepest edge; after a run of
//! degenerate pivots the solver switches permanently to Bland's rule, which
//! cannot cycle.
//!
//! The final basic solution is recomputed from the original columns with
//! partial-pivoting elimination, so the reported `x` does not carry the
//! round-off accumulated in the tableau.

use crate::error::{CalibError, Result};

const PIVOT_TOL: f64 = 1e-9;
const PRICE_TOL: f64 = 1e-9;
const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// Minimization over `x ≥ 0` with no constraints yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            eq_matrix: Vec::new(),
            eq_rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    /// Adds `Σ coeff·x_j = rhs` from sparse `(j, coeff)` pairs.
    pub fn add_eq_sparse(&mut self, entries: &[(usize, f64)], rhs: f64) -> &mut Self {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, v) in entries {
            row[j] += v;
        }
        self.add_eq(row, rhs)
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[j] = lower;
        self.upper[j] = upper;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(CalibError::DimensionMismatch(format!(
                "{} variables but {} lower / {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.eq_matrix.len() != self.eq_rhs.len() {
            return Err(CalibError::DimensionMismatch(format!(
                "{} constraint rows but {} right-hand sides",
                self.eq_matrix.len(),
                self.eq_rhs.len()
            )));
        }
        for (i, row) in self.eq_matrix.iter().enumerate() {
            if row.len() != n {
                return Err(CalibError::DimensionMismatch(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(CalibError::NonFinite {
                    what: "constraint coefficients",
                });
            }
        }
        if self
            .objective
            .iter()
            .chain(&self.eq_rhs)
            .any(|v| !v.is_finite())
        {
            return Err(CalibError::NonFinite {
                what: "objective or right-hand side",
            });
        }
        if self.lower.iter().any(|v| v.is_nan() || *v == f64::INFINITY)
            || self
                .upper
                .iter()
                .any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
        {
            return Err(CalibError::InvalidParameter(
                "malformed variable bounds".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl LpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            LpStatus::Optimal => "Optimal",
            LpStatus::Infeasible => "Infeasible",
            LpStatus::Unbounded => "Unbounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Multipliers of the equality rows (empty unless optimal). Reduced cost of
    /// column `j` is `c_j − Σ_i duals_i·A_ij`.
    pub duals: Vec<f64>,
}

impl LpSolution {
    fn with_status(status: LpStatus, n: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            objective_value: f64::NAN,
            duals: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Returns the solution if optimal, otherwise a status error.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            s => Err(CalibError::SolverStatus(s.as_str())),
        }
    }
}

/// How an original variable is expressed through standard-form columns.
#[derive(Debug, Clone)]
struct VarMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    maps: Vec<VarMap>,
    n_eq: usize,
}

fn to_standard_form(lp: &LpProblem) -> Option<StandardForm> {
    let n = lp.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    // (std column, upper bound) pairs that need an explicit bound row
    let mut bounded = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo > hi {
            return None;
        }
        let map = if lo.is_finite() {
            if hi.is_finite() {
                bounded.push((ncols, hi - lo));
            }
            ncols += 1;
            VarMap {
                offset: lo,
                cols: vec![(ncols - 1, 1.0)],
            }
        } else if hi.is_finite() {
            ncols += 1;
            VarMap {
                offset: hi,
                cols: vec![(ncols - 1, -1.0)],
            }
        } else {
            ncols += 2;
            VarMap {
                offset: 0.0,
                cols: vec![(ncols - 2, 1.0), (ncols - 1, -1.0)],
            }
        };
        maps.push(map);
    }
    let n_slack = bounded.len();
    let total = ncols + n_slack;
    let n_eq = lp.eq_matrix.len();
    let mut a = Vec::with_capacity(n_eq + n_slack);
    let mut b = Vec::with_capacity(n_eq + n_slack);
    for (row, &rhs) in lp.eq_matrix.iter().zip(&lp.eq_rhs) {
        let mut r = vec![0.0; total];
        let mut shift = 0.0;
        for (j, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            shift += v * maps[j].offset;
            for &(col, s) in &maps[j].cols {
                r[col] += v * s;
            }
        }
        a.push(r);
        b.push(rhs - shift);
    }
    for (k, &(col, width)) in bounded.iter().enumerate() {
        let mut r = vec![0.0; total];
        r[col] = 1.0;
        r[ncols + k] = 1.0;
        a.push(r);
        b.push(width);
    }
    let mut c = vec![0.0; total];
    for (j, map) in maps.iter().enumerate() {
        for &(col, s) in &map.cols {
            c[col] += lp.objective[j] * s;
        }
    }
    Some(StandardForm {
        a,
        b,
        c,
        maps,
        n_eq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    SteepestEdge,
    Bland,
}

struct Tableau {
    m: usize,
    /// structural columns (artificials follow)
    n: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    pricing: Pricing,
    degenerate_run: usize,
    iterations: usize,
    max_iterations: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.width;
        let pv = self.t[r * w + col];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= pv;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + col];
            if f == 0.0 {
                continue;
            }
            for (v, &p) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.t[i * w + col] = 0.0;
        }
        self.basis[r] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost[..self.width - 1].to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for (j, dj) in d.iter_mut().enumerate() {
                *dj -= cb * self.at(i, j);
            }
        }
        d
    }

    fn choose_entering(&self, d: &[f64], allowed: usize) -> Option<usize> {
        match self.pricing {
            Pricing::Bland => (0..allowed).find(|&j| d[j] < -PRICE_TOL),
            Pricing::SteepestEdge => {
                let mut best: Option<(usize, f64)> = None;
                for (j, &dj) in d.iter().enumerate().take(allowed) {
                    if dj >= -PRICE_TOL {
                        continue;
                    }
                    let norm: f64 = (0..self.m).map(|i| self.at(i, j).powi(2)).sum();
                    let score = dj / (1.0 + norm).sqrt();
                    if best.is_none_or(|(_, s)| score < s) {
                        best = Some((j, score));
                    }
                }
                best.map(|(j, _)| j)
            }
        }
    }

    fn choose_leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, col);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                    let better = if tie {
                        match self.pricing {
                            Pricing::Bland => self.basis[i] < self.basis[bi],
                            Pricing::SteepestEdge => a > self.at(bi, col),
                        }
                    } else {
                        ratio < br
                    };
                    if better {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn run_phase(&mut self, cost: &[f64], allowed: usize) -> Result<PhaseOutcome> {
        loop {
            if self.iterations >= self.max_iterations {
                return Err(CalibError::NumericalFailure(format!(
                    "simplex did not converge within {} pivots",
                    self.max_iterations
                )));
            }
            let d = self.reduced_costs(cost);
            let Some(col) = self.choose_entering(&d, allowed) else {
                return Ok(PhaseOutcome::Optimal);
            };
            let Some(row) = self.choose_leaving(col) else {
                return Ok(PhaseOutcome::Unbounded);
            };
            let step = self.rhs(row).max(0.0) / self.at(row, col);
            if step <= 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND {
                    self.pricing = Pricing::Bland;
                }
            } else {
                self.degenerate_run = 0;
            }
            self.pivot(row, col);
            self.iterations += 1;
        }
    }
}

/// Solves a dense linear program.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;
    let n_orig = problem.num_vars();
    let Some(sf) = to_standard_form(problem) else {
        return Ok(LpSolution::with_status(LpStatus::Infeasible, n_orig));
    };
    let m = sf.a.len();
    let n = sf.c.len();

    if m == 0 {
        // no rows: every standard column sits at zero unless its cost is negative
        if sf.c.iter().any(|&c| c < 0.0) {
            return Ok(LpSolution::with_status(LpStatus::Unbounded, n_orig));
        }
        return Ok(finish(problem, &sf, &vec![0.0; n], Vec::new()));
    }

    let sign: Vec<f64> =
        sf.b.iter()
            .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
            .collect();
    let width = n + m + 1;
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = sign[i] * sf.a[i][j];
        }
        row[n + i] = 1.0;
        row[width - 1] = sign[i] * sf.b[i];
    }
    let mut tab = Tableau {
        m,
        n,
        width,
        t,
        basis: (n..n + m).collect(),
        pricing: Pricing::SteepestEdge,
        degenerate_run: 0,
        iterations: 0,
        max_iterations: 50_000 + 50 * (n + m),
    };

    // phase one: minimize the artificial sum
    let mut phase1 = vec![0.0; n + m];
    for c in &mut phase1[n..] {
        *c = 1.0;
    }
    tab.run_phase(&phase1, n + m)?;
    let b_norm = sf.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let infeasibility: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= n)
        .map(|i| tab.rhs(i))
        .sum();
    if infeasibility > 1e-9 * (1.0 + b_norm) {
        return Ok(LpSolution::with_status(LpStatus::Infeasible, n_orig));
    }
    // drive zero-level artificials out of the basis where possible
    for i in 0..m {
        if tab.basis[i] < n {
            continue;
        }
        let col = (0..n)
            .filter(|&j| tab.at(i, j).abs() > PIVOT_TOL)
            .max_by(|&a, &b| tab.at(i, a).abs().total_cmp(&tab.at(i, b).abs()));
        if let Some(col) = col {
            tab.pivot(i, col);
        }
    }

    // phase two over structural columns only
    let mut phase2 = vec![0.0; n + m];
    phase2[..n].copy_from_slice(&sf.c);
    tab.degenerate_run = 0;
    if let PhaseOutcome::Unbounded = tab.run_phase(&phase2, n)? {
        return Ok(LpSolution::with_status(LpStatus::Unbounded, n_orig));
    }

    // duals from the artificial block, which holds the inverse basis
    let mut duals = vec![0.0; m];
    for (k, dk) in duals.iter_mut().enumerate() {
        let s: f64 = (0..m)
            .map(|i| phase2[tab.basis[i]] * tab.at(i, n + k))
            .sum();
        *dk = sign[k] * s;
    }
    duals.truncate(sf.n_eq);

    let x_std = refine_basic_solution(&sf, &tab, &sign).unwrap_or_else(|| {
        let mut x = vec![0.0; n];
        for i in 0..m {
            if tab.basis[i] < n {
                x[tab.basis[i]] = tab.rhs(i).max(0.0);
            }
        }
        x
    });
    let sol = finish(problem, &sf, &x_std, duals);

    let resid = primal_residual(problem, &sol.x);
    let rhs_norm = problem
        .eq_rhs
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if resid > 1e-9 * (1.0 + rhs_norm) {
        return Err(CalibError::NumericalFailure(format!(
            "primal residual {resid:.3e} after refinement"
        )));
    }
    Ok(sol)
}

/// Re-solves `B·x_B = b` on the original standard-form columns.
fn refine_basic_solution(sf: &StandardForm, tab: &Tableau, sign: &[f64]) -> Option<Vec<f64>> {
    let m = tab.m;
    let n = tab.n;
    let mut mat = vec![vec![0.0; m + 1]; m];
    for (i, row) in mat.iter_mut().enumerate() {
        for (k, &col) in tab.basis.iter().enumerate() {
            row[k] = if col < n {
                sf.a[i][col]
            } else if col - n == i {
                sign[i]
            } else {
                0.0
            };
        }
        row[m] = sf.b[i];
    }
    let sol = gaussian_solve(mat)?;
    let mut x = vec![0.0; n];
    for (k, &col) in tab.basis.iter().enumerate() {
        if col < n {
            if sol[k] < -1e-7 {
                return None;
            }
            x[col] = sol[k].max(0.0);
        }
    }
    Some(x)
}

/// Solves a square system given as an augmented matrix; `None` if singular.
fn gaussian_solve(mut mat: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = mat.len();
    for c in 0..m {
        let p = (c..m).max_by(|&a, &b| mat[a][c].abs().total_cmp(&mat[b][c].abs()))?;
        if mat[p][c].abs() < 1e-12 {
            return None;
        }
        mat.swap(c, p);
        let pivot_row = mat[c].clone();
        for row in mat.iter_mut().skip(c + 1) {
            let f = row[c] / pivot_row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&pivot_row).skip(c) {
                    *v -= f * pv;
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for c in (0..m).rev() {
        let s: f64 = (c + 1..m).map(|k| mat[c][k] * x[k]).sum();
        x[c] = (mat[c][m] - s) / mat[c][c];
    }
    Some(x)
}

fn finish(problem: &LpProblem, sf: &StandardForm, x_std: &[f64], duals: Vec<f64>) -> LpSolution {
    let x: Vec<f64> = sf
        .maps
        .iter()
        .enumerate()
        .map(|(j, map)| {
            let v = map.offset + map.cols.iter().map(|&(c, s)| s * x_std[c]).sum::<f64>();
            v.clamp(problem.lower[j], problem.upper[j])
        })
        .collect();
    let objective_value = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value,
        duals,
    }
}

/// Largest absolute violation of the equality rows.
pub fn primal_residual(problem: &LpProblem, x: &[f64]) -> f64 {
    problem
        .eq_matrix
        .iter()
        .zip(&problem.eq_rhs)
        .map(|(row, &b)| (row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_value() {
        let mut lp = LpProblem::new(vec![1.0]);
        lp.add_eq(vec![1.0], 3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
        assert!((sol.objective_value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_binds() {
        let mut lp = LpProblem::new(vec![-1.0]);
        lp.set_bounds(0, 0.0, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective_value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_negative_target() {
        let mut lp = LpProblem::new(vec![0.0]);
        lp.add_eq(vec![1.0], -1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        let mut lp = LpProblem::new(vec![-1.0, 0.0]);
        lp.add_eq(vec![1.0, -1.0], 0.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_reflected_variables() {
        // minimize x0 + 2 x1 with x0 free, x1 <= 4, x0 + x1 = 1, x0 >= -inf
        let mut lp = LpProblem::new(vec![1.0, 2.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, f64::NEG_INFINITY, 4.0);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        // x1 as large as possible is better? cost x0+2x1 = 1 + x1 -> x1 -> -inf: unbounded
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
        lp.set_bounds(1, -2.0, 4.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.x[1] + 2.0).abs() < 1e-12);
        assert!((sol.objective_value - 1.0 - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows_and_duals() {
        // 2x2 transportation problem with one redundant row
        let cost = vec![1.0, 3.0, 2.0, 1.0];
        let mut lp = LpProblem::new(cost.clone());
        lp.add_eq(vec![1.0, 1.0, 0.0, 0.0], 0.5);
        lp.add_eq(vec![0.0, 0.0, 1.0, 1.0], 0.5);
        lp.add_eq(vec![1.0, 0.0, 1.0, 0.0], 0.3);
        lp.add_eq(vec![0.0, 1.0, 0.0, 1.0], 0.7);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective_value - (0.3 + 0.2 * 3.0 + 0.5)).abs() < 1e-12);
        // dual feasibility: reduced costs nonnegative, zero on basic columns
        for j in 0..4 {
            let rc = cost[j]
                - (0..4)
                    .map(|i| sol.duals[i] * lp.eq_matrix[i][j])
                    .sum::<f64>();
            assert!(rc > -1e-9, "column {j} reduced cost {rc}");
            if sol.x[j] > 1e-9 {
                assert!(rc.abs() < 1e-9);
            }
        }
        let dual_obj: f64 = sol.duals.iter().zip(&lp.eq_rhs).map(|(y, b)| y * b).sum();
        assert!((dual_obj - sol.objective_value).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let mut lp = LpProblem::new(vec![1.0, 1.0]);
        lp.add_eq(vec![1.0], 1.0);
        assert!(matches!(
            solve_lp(&lp),
            Err(CalibError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's classic cycling instance (in equality form with slacks)
        let c = vec![-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        let mut lp = LpProblem::new(c);
        lp.add_eq(vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0], 0.0);
        lp.add_eq(vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0], 0.0);
        lp.add_eq(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective_value + 0.05).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let mut lp = LpProblem::new(vec![1.0, 2.0, 0.5, -1.0]);
        lp.add_eq(vec![1.0, 1.0, 1.0, 1.0], 2.0);
        lp.add_eq(vec![1.0, -1.0, 2.0, 0.0], 1.0);
        lp.set_bounds(3, 0.0, 1.5);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(
            a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
    }

    /// Vertex enumeration over `{Ax = b, 0 ≤ x ≤ u}`: each variable is pinned at a
    /// bound or left free; free columns are solved for when independent.
    fn vertex_enumeration(lp: &LpProblem) -> Option<f64> {
        let n = lp.num_vars();
        let m = lp.eq_matrix.len();
        let mut best: Option<f64> = None;
        let mut state = vec![0u8; n];
        loop {
            let free: Vec<usize> = (0..n).filter(|&j| state[j] == 2).collect();
            let valid = state
                .iter()
                .enumerate()
                .all(|(j, &s)| s != 1 || lp.upper[j].is_finite());
            if valid && free.len() <= m {
                let fixed = |j: usize| if state[j] == 1 { lp.upper[j] } else { 0.0 };
                let rhs: Vec<f64> = (0..m)
                    .map(|i| {
                        lp.eq_rhs[i]
                            - (0..n)
                                .filter(|&j| state[j] != 2)
                                .map(|j| lp.eq_matrix[i][j] * fixed(j))
                                .sum::<f64>()
                    })
                    .collect();
                if let Some(xf) = least_squares_exact(lp, &free, &rhs) {
                    let mut x: Vec<f64> = (0..n).map(fixed).collect();
                    for (k, &j) in free.iter().enumerate() {
                        x[j] = xf[k];
                    }
                    let in_bounds = x
                        .iter()
                        .enumerate()
                        .all(|(j, &v)| v >= -1e-9 && v <= lp.upper[j] + 1e-9);
                    if in_bounds {
                        let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                        best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                    }
                }
            }
            // advance the base-3 counter
            let mut k = 0;
            loop {
                if k == n {
                    return best;
                }
                state[k] += 1;
                if state[k] < 3 {
                    break;
                }
                state[k] = 0;
                k += 1;
            }
        }
    }

    /// Solves `A_F x = rhs` via normal equations; `None` when the columns are
    /// dependent or the system is inconsistent.
    fn least_squares_exact(lp: &LpProblem, free: &[usize], rhs: &[f64]) -> Option<Vec<f64>> {
        let m = lp.eq_matrix.len();
        let k = free.len();
        if k == 0 {
            return rhs.iter().all(|v| v.abs() < 1e-9).then(Vec::new);
        }
        let mut normal = vec![vec![0.0; k + 1]; k];
        for a in 0..k {
            for b in 0..k {
                normal[a][b] = (0..m)
                    .map(|i| lp.eq_matrix[i][free[a]] * lp.eq_matrix[i][free[b]])
                    .sum();
            }
            normal[a][k] = (0..m).map(|i| lp.eq_matrix[i][free[a]] * rhs[i]).sum();
        }
        let x = gaussian_solve(normal)?;
        let consistent = (0..m).all(|i| {
            let lhs: f64 = (0..k).map(|a| lp.eq_matrix[i][free[a]] * x[a]).sum();
            (lhs - rhs[i]).abs() < 1e-7
        });
        consistent.then_some(x)
    }

    fn small_lp() -> impl Strategy<Value = LpProblem> {
        (1usize..=6, 1usize..=4).prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-5i32..=5, n),
                prop::collection::vec(prop::collection::vec(-5i32..=5, n), m),
                prop::collection::vec(0i32..=3, n),
                prop::collection::vec(prop::option::of(1i32..=5), n),
            )
                .prop_map(move |(c, a, x0, ub)| {
                    let mut lp = LpProblem::new(c.iter().map(|&v| v as f64).collect());
                    for row in &a {
                        let rhs: f64 = row.iter().zip(&x0).map(|(&r, &x)| (r * x) as f64).sum();
                        lp.add_eq(row.iter().map(|&v| v as f64).collect(), rhs);
                    }
                    for j in 0..n {
                        // negative-cost columns are always boxed so the LP stays bounded
                        let u = match ub[j] {
                            Some(u) => Some(u.max(x0[j])),
                            None if c[j] < 0 => Some(5.max(x0[j])),
                            None => None,
                        };
                        if let Some(u) = u {
                            lp.set_bounds(j, 0.0, u as f64);
                        }
                    }
                    lp
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn matches_vertex_enumeration(lp in small_lp()) {
            let sol = solve_lp(&lp).unwrap();
            prop_assert_eq!(sol.status, LpStatus::Optimal);
            let oracle = vertex_enumeration(&lp).expect("feasible by construction");
            prop_assert!((sol.objective_value - oracle).abs() < 1e-8,
                "simplex {} vs enumeration {}", sol.objective_value, oracle);
            let rhs_norm = lp.eq_rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(primal_residual(&lp, &sol.x) <= 1e-9 * (1.0 + rhs_norm));
        }
    }
}
