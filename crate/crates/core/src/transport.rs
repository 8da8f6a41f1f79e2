//! Earth mover's distance between PLDs.
//!
//! The ground metric on `[0,1] × {0,1}` is `|p − p′| + |y − y′|`. Couplings are
//! found by solving the transportation LP over the product of the two supports.

use serde::Serialize;

use crate::error::{CalibError, Result};
use crate::lp::{solve_lp, LpProblem};
use crate::pld::{Atom, Pld};

/// Largest label-marginal difference accepted by the label-preserving
/// distance.
pub const TAU_TOLERANCE: f64 = 1e-9;

/// `|p − p′| + |y − y′|`.
pub fn ground_cost(a: &Atom, b: &Atom) -> f64 {
    (a.p - b.p).abs() + f64::from(a.y.abs_diff(b.y))
}

/// A coupling given as `(source atom index, target atom index, mass)` triples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    pub total_cost: f64,
}

impl TransportPlan {
    /// Cost of the plan recomputed from the atoms.
    pub fn recompute_cost(&self, source: &Pld, target: &Pld) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, m)| m * ground_cost(&source.atoms()[i], &target.atoms()[j]))
            .sum()
    }

    /// Largest deviation of a row or column sum from the marginal it should
    /// reproduce.
    pub fn marginal_residual(&self, source: &Pld, target: &Pld) -> f64 {
        let mut rows: Vec<f64> = source.atoms().iter().map(|a| -a.mass).collect();
        let mut cols: Vec<f64> = target.atoms().iter().map(|a| -a.mass).collect();
        for &(i, j, m) in &self.entries {
            rows[i] += m;
            cols[j] += m;
        }
        rows.iter()
            .chain(&cols)
            .fold(0.0, |acc, r| acc.max(r.abs()))
    }
}

fn solve_transport(
    mu: &Pld,
    nu: &Pld,
    target_mass: &[f64],
    allowed: impl Fn(&Atom, &Atom) -> bool,
) -> Result<(f64, TransportPlan)> {
    let src = mu.atoms();
    let tgt = nu.atoms();
    let pairs: Vec<(usize, usize)> = (0..src.len())
        .flat_map(|i| (0..tgt.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| allowed(&src[i], &tgt[j]))
        .collect();
    let cost: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| ground_cost(&src[i], &tgt[j]))
        .collect();
    let mut lp = LpProblem::new(cost);
    for (i, a) in src.iter().enumerate() {
        let row: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, &(si, _))| si == i)
            .map(|(k, _)| (k, 1.0))
            .collect();
        lp.add_eq_sparse(&row, a.mass);
    }
    for (j, &m) in target_mass.iter().enumerate() {
        let row: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, &(_, tj))| tj == j)
            .map(|(k, _)| (k, 1.0))
            .collect();
        lp.add_eq_sparse(&row, m);
    }
    let sol = solve_lp(&lp)?.into_optimal()?;
    let entries: Vec<(usize, usize, f64)> = pairs
        .iter()
        .zip(&sol.x)
        .filter(|(_, &x)| x > 0.0)
        .map(|(&(i, j), &x)| (i, j, x))
        .collect();
    let total_cost = sol.objective_value;
    Ok((
        total_cost.max(0.0),
        TransportPlan {
            entries,
            total_cost,
        },
    ))
}

/// Minimum-cost coupling of `mu` and `nu`.
pub fn wasserstein(mu: &Pld, nu: &Pld) -> Result<(f64, TransportPlan)> {
    let masses: Vec<f64> = nu.atoms().iter().map(|a| a.mass).collect();
    solve_transport(mu, nu, &masses, |_, _| true)
}

/// Minimum-cost coupling that never changes a label. Requires equal label
/// marginals.
pub fn wasserstein_label_preserving(mu: &Pld, nu: &Pld) -> Result<(f64, TransportPlan)> {
    let (t_mu, t_nu) = (mu.tau(), nu.tau());
    if (t_mu - t_nu).abs() > TAU_TOLERANCE {
        return Err(CalibError::TauMismatch {
            left: t_mu,
            right: t_nu,
        });
    }
    // rescale each label class of the target to the source's class mass so
    // the per-label systems are exactly balanced
    let scale = [
        if t_nu < 1.0 {
            (1.0 - t_mu) / (1.0 - t_nu)
        } else {
            1.0
        },
        if t_nu > 0.0 { t_mu / t_nu } else { 1.0 },
    ];
    let masses: Vec<f64> = nu
        .atoms()
        .iter()
        .map(|a| a.mass * scale[usize::from(a.y)])
        .collect();
    solve_transport(mu, nu, &masses, |a, b| a.y == b.y)
}
