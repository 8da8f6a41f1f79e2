//! Sampling from PLDs, plug-in estimates, and the collision experiment that
//! separates the two perturbed cases of [`udce_cases`].

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::constructions::{eps_prime, udce_perturbed_tasks};
use crate::error::{CalibError, Result};
use crate::losses::VMixtureLoss;
use crate::metrics::smce;
use crate::pld::{Atom, FinitePredictionTask, Pld};
use crate::rng::{derive_seed, seeded_rng};

/// I.i.d. prediction-label draws together with the seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub draws: Vec<(f64, u8)>,
    pub seed: u64,
    pub source: String,
}

/// `n` draws from `pld` by inverse CDF over its canonical atom list.
pub fn sample(pld: &Pld, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(CalibError::InvalidParameter(
            "sample size must be at least 1".into(),
        ));
    }
    let atoms = pld.atoms();
    let mut cum = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.mass;
        cum.push(acc);
    }
    let mut rng = seeded_rng(seed);
    let draws = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let i = cum.partition_point(|&c| c <= u).min(atoms.len() - 1);
            (atoms[i].p, atoms[i].y)
        })
        .collect();
    Ok(SampleSet {
        draws,
        seed,
        source: "pld".to_string(),
    })
}

/// The empirical distribution: mass `count/n` per distinct `(p, y)`.
pub fn empirical_pld(samples: &SampleSet) -> Result<Pld> {
    let n = samples.draws.len();
    if n == 0 {
        return Err(CalibError::InvalidParameter("empty sample set".into()));
    }
    let w = 1.0 / n as f64;
    Pld::new(samples.draws.iter().map(|&(p, y)| Atom::new(p, y, w)))
}

/// Plug-in estimate `smCE(empirical_pld(samples))`.
pub fn smce_estimate(samples: &SampleSet) -> Result<f64> {
    Ok(smce(&empirical_pld(samples)?)?.0)
}

/// Monte Carlo estimate of `E ℓ(clip(p + z), y)` with `z ~ Unif[−σ, σ]`,
/// returned as `(mean, standard error)`.
pub fn mc_expected_loss_smoothed(
    pld: &Pld,
    loss: &VMixtureLoss,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(CalibError::InvalidParameter(format!(
            "sigma={sigma} must be positive"
        )));
    }
    let draws = sample(pld, n, seed)?;
    let mut rng = seeded_rng(derive_seed(seed, 1));
    let vals: Vec<f64> = draws
        .draws
        .iter()
        .map(|&(p, y)| {
            let z = rng.random_range(-sigma..=sigma);
            loss.eval((p + z).clamp(0.0, 1.0), y)
        })
        .collect();
    Ok(mean_and_stderr(&vals))
}

fn mean_and_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Outcome of [`udce_distinguish_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistinguishReport {
    /// `|2·Pr[correct] − 1|` estimated over the trials.
    pub advantage: f64,
    /// Fraction of trials whose sample repeated some prediction value.
    pub collision_rate: f64,
    pub trials: usize,
    /// Half-width of a normal-approximation 95% interval on the advantage.
    pub ci_halfwidth: f64,
}

/// Draws `s` samples from a task with equal point weights, returning the
/// point index alongside each `(p, y)`.
fn sample_uniform_task(
    task: &FinitePredictionTask,
    s: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, f64, u8)> {
    let pts = task.points();
    (0..s)
        .map(|_| {
            let i = rng.random_range(0..pts.len());
            let y = u8::from(rng.random::<f64>() < pts[i].bayes);
            (i, pts[i].prediction, y)
        })
        .collect()
}

/// Log-likelihood ratio of case (d) against case (c) for one sample.
///
/// Samples are grouped by prediction value. In case (c) every label is a fair
/// coin. In case (d) a point below 1/2 is, with probability `2ε′`, one whose
/// label is always 1, and otherwise a `Ber(1/2 − ε)` point; above 1/2 the roles
/// of the labels swap. Singleton groups have the same law under both cases
/// and contribute nothing.
pub fn collision_llr(draws: &[(f64, u8)], eps: f64) -> f64 {
    let heavy = 2.0 * eps_prime(eps);
    let mut groups: HashMap<u64, (f64, usize, usize)> = HashMap::new();
    for &(p, y) in draws {
        let e = groups.entry(p.to_bits()).or_insert((p, 0, 0));
        if y == 1 {
            e.1 += 1;
        } else {
            e.2 += 1;
        }
    }
    groups
        .values()
        .filter(|&&(_, ones, zeros)| ones + zeros >= 2)
        .map(|&(p, ones, zeros)| {
            let m = (ones + zeros) as i32;
            // orient so that "toward the deterministic label" is `agree`
            let (agree, disagree) = if p < 0.5 {
                (ones, zeros)
            } else {
                (zeros, ones)
            };
            let det = if disagree == 0 { heavy } else { 0.0 };
            let light =
                (1.0 - heavy) * (0.5 - eps).powi(agree as i32) * (0.5 + eps).powi(disagree as i32);
            ((det + light) / 0.5f64.powi(m)).ln()
        })
        .sum()
}

/// Repeatedly picks case (c) or (d) with a fair coin, draws `s` samples from
/// a fresh instance and asks the collision tester which case produced them.
///
/// Trial `t` runs on the stream `derive_seed(seed, t)`; the perturbations of
/// the instance are redrawn every trial.
pub fn udce_distinguish_experiment(
    eps: f64,
    k: usize,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<DistinguishReport> {
    if s == 0 || trials == 0 {
        return Err(CalibError::InvalidParameter(
            "s and trials must be at least 1".into(),
        ));
    }
    // validate once so a bad (eps, k) is reported before any work
    udce_perturbed_tasks(eps, k, seed)?;
    let outcomes: Vec<(bool, bool)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<(bool, bool)> {
            let mut rng = seeded_rng(derive_seed(seed, t));
            let is_d = rng.random::<bool>();
            let (c, d) = udce_perturbed_tasks(eps, k, rng.random())?;
            let task = if is_d { d } else { c };
            let draws = sample_uniform_task(&task, s, &mut rng);
            let mut idx: Vec<usize> = draws.iter().map(|d| d.0).collect();
            idx.sort_unstable();
            let collided = idx.windows(2).any(|w| w[0] == w[1]);
            let pairs: Vec<(f64, u8)> = draws.iter().map(|&(_, p, y)| (p, y)).collect();
            let says_d = collision_llr(&pairs, eps) > 0.0;
            Ok((says_d == is_d, collided))
        })
        .collect::<Result<_>>()?;
    let n = trials as f64;
    let correct = outcomes.iter().filter(|o| o.0).count() as f64 / n;
    let collision_rate = outcomes.iter().filter(|o| o.1).count() as f64 / n;
    Ok(DistinguishReport {
        advantage: (2.0 * correct - 1.0).abs(),
        collision_rate,
        trials,
        ci_halfwidth: 2.0 * 1.96 * (correct * (1.0 - correct) / n).sqrt(),
    })
}

/// Label counts `(ones, total)` pooled over case-(d) trials whose sample has
/// no repeated point.
pub fn no_collision_label_counts(
    eps: f64,
    k: usize,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    let counts: Vec<(usize, usize)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<(usize, usize)> {
            let mut rng = seeded_rng(derive_seed(seed, t));
            let (_, task) = udce_perturbed_tasks(eps, k, rng.random())?;
            let draws = sample_uniform_task(&task, s, &mut rng);
            let mut idx: Vec<usize> = draws.iter().map(|d| d.0).collect();
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Ok((0, 0));
            }
            Ok((draws.iter().filter(|d| d.2 == 1).count(), draws.len()))
        })
        .collect::<Result<_>>()?;
    Ok(counts
        .iter()
        .fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_sample() {
        let s = sample(&Pld::point(0.3, 1).unwrap(), 1, 5).unwrap();
        assert_eq!(s.draws, vec![(0.3, 1)]);
    }

    #[test]
    fn empirical_merges_duplicates() {
        let s = SampleSet {
            draws: vec![(0.3, 1), (0.3, 1)],
            seed: 0,
            source: "test".into(),
        };
        let pld = empirical_pld(&s).unwrap();
        assert_eq!(pld.len(), 1);
        assert!((pld.atoms()[0].mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn llr_ignores_singletons() {
        assert_eq!(collision_llr(&[(0.4, 1), (0.6, 0), (0.41, 0)], 0.125), 0.0);
    }

    #[test]
    fn llr_sign_on_pairs() {
        // a pair below 1/2 with both labels 1 favours (d)
        assert!(collision_llr(&[(0.4, 1), (0.4, 1)], 0.125) > 0.0);
        // a split pair favours (c)
        assert!(collision_llr(&[(0.4, 1), (0.4, 0)], 0.125) < 0.0);
    }
}
