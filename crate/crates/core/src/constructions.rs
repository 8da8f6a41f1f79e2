//! Parameterized example distributions.
//!
//! Each factory returns the PLD (and the domain-level task where one exists),
//! auxiliary objects such as benchmark PLDs, losses and post-processings, and
//! the metric values the example is built to exhibit.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{CalibError, Result};
use crate::losses::{LinearPiece, PostProcessing, VComponent, VMixtureLoss};
use crate::pld::{mix, FinitePredictionTask, Pld, TaskPoint, P_EQ_TOL};
use crate::rng::seeded_rng;

/// An auxiliary object attached to a construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Companion {
    Pld(Pld),
    Task(FinitePredictionTask),
    Loss(VMixtureLoss),
    PostProcessing(PostProcessing),
    /// Joint law of `(p, q, y)` as `(p, q, y, mass)` rows.
    Coupling(Vec<(f64, f64, u8, f64)>),
}

/// A value the construction is designed to produce, with a short note on
/// what it measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub value: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionOutput {
    pub name: String,
    pub task: Option<FinitePredictionTask>,
    pub pld: Pld,
    pub companions: BTreeMap<String, Companion>,
    pub expected: BTreeMap<String, Expected>,
}

impl ConstructionOutput {
    fn new(name: &str, task: Option<FinitePredictionTask>, pld: Pld) -> Self {
        Self {
            name: name.to_string(),
            task,
            pld,
            companions: BTreeMap::new(),
            expected: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, c: Companion) -> Self {
        self.companions.insert(key.to_string(), c);
        self
    }

    fn expect(mut self, key: &str, value: f64, note: &str) -> Self {
        self.expected.insert(
            key.to_string(),
            Expected {
                value,
                note: note.to_string(),
            },
        );
        self
    }

    pub fn companion_pld(&self, key: &str) -> Option<&Pld> {
        match self.companions.get(key) {
            Some(Companion::Pld(p)) => Some(p),
            _ => None,
        }
    }

    pub fn companion_task(&self, key: &str) -> Option<&FinitePredictionTask> {
        match self.companions.get(key) {
            Some(Companion::Task(t)) => Some(t),
            _ => None,
        }
    }

    pub fn companion_loss(&self, key: &str) -> Option<&VMixtureLoss> {
        match self.companions.get(key) {
            Some(Companion::Loss(l)) => Some(l),
            _ => None,
        }
    }

    pub fn companion_kappa(&self, key: &str) -> Option<&PostProcessing> {
        match self.companions.get(key) {
            Some(Companion::PostProcessing(k)) => Some(k),
            _ => None,
        }
    }

    pub fn expected_value(&self, key: &str) -> Option<f64> {
        self.expected.get(key).map(|e| e.value)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(CalibError::InvalidParameter(format!(
            "eps={eps} must lie in (0, 1/2)"
        )))
    }
}

/// Mass 1/4 at each of `(1/2 ± ε, y)`: miscalibrated at every value, yet with
/// smooth calibration error only `ε²`.
pub fn almost_balanced(eps: f64) -> Result<ConstructionOutput> {
    check_eps(eps)?;
    let pld = Pld::new([
        (0.5 - eps, 0, 0.25),
        (0.5 - eps, 1, 0.25),
        (0.5 + eps, 0, 0.25),
        (0.5 + eps, 1, 0.25),
    ])?;
    Ok(ConstructionOutput::new("almost-balanced", None, pld)
        .expect("tau", 0.5, "label marginal")
        .expect(
            "ece",
            eps,
            "conditional mean 1/2 at distance eps from both values",
        )
        .expect("smce", eps * eps, "witness slope 1 across the gap 2 eps"))
}

/// Two equally likely points with labels 0 and 1, and three predictors on
/// them: good (`1/2 ∓ ε`), bad (`1/2 ± ε`) and uniform (`1/2`). The primary
/// task is the good predictor.
pub fn two_point_family(eps: f64) -> Result<ConstructionOutput> {
    check_eps(eps)?;
    let task = |p0: f64, p1: f64| FinitePredictionTask::new([(0.5, 0.0, p0), (0.5, 1.0, p1)]);
    let good = task(0.5 - eps, 0.5 + eps)?;
    let bad = task(0.5 + eps, 0.5 - eps)?;
    let uniform = task(0.5, 0.5)?;
    let pld = good.pushforward()?;
    Ok(ConstructionOutput::new("two-point", Some(good), pld)
        .with("task_bad", Companion::Task(bad.clone()))
        .with("task_uniform", Companion::Task(uniform.clone()))
        .with("pld_bad", Companion::Pld(bad.pushforward()?))
        .with("pld_uniform", Companion::Pld(uniform.pushforward()?))
        .with("loss_zero_one", Companion::Loss(VMixtureLoss::zero_one()))
        .with(
            "kappa_flip",
            Companion::PostProcessing(PostProcessing::one_minus()),
        )
        .expect("loss_good", 0.0, "zero-one loss of the good predictor")
        .expect("loss_bad", 1.0, "zero-one loss of the bad predictor")
        .expect(
            "loss_uniform",
            0.5,
            "zero-one loss of the constant 1/2 predictor",
        ))
}

/// The bad predictor `p` and its flip `q = 1 − p` on the two-point space,
/// which are close in every calibration sense but far apart in loss unless
/// both are smoothed.
pub fn smoothing_necessity(eps: f64) -> Result<ConstructionOutput> {
    check_eps(eps)?;
    let mu = Pld::new([(0.5 + eps, 0, 0.5), (0.5 - eps, 1, 0.5)])?;
    let nu = Pld::new([(0.5 - eps, 0, 0.5), (0.5 + eps, 1, 0.5)])?;
    let coupling = vec![
        (0.5 + eps, 0.5 - eps, 0, 0.5),
        (0.5 - eps, 0.5 + eps, 1, 0.5),
    ];
    Ok(ConstructionOutput::new("smoothing-necessity", None, mu)
        .with("nu", Companion::Pld(nu))
        .with(
            "kappa",
            Companion::PostProcessing(PostProcessing::one_minus()),
        )
        .with("loss", Companion::Loss(VMixtureLoss::v_shaped(0.5)?))
        .with("coupling", Companion::Coupling(coupling))
        .expect(
            "loss_p",
            0.5,
            "V loss at 1/2 of p, always on the wrong side",
        )
        .expect(
            "loss_q",
            -0.5,
            "V loss at 1/2 of q, always on the right side",
        )
        .expect("mean_abs_q_minus_p", 2.0 * eps, "|q - p| = 2 eps surely")
        .expect("smce_upper", 2.0 * eps, "upper bound on smce of p"))
}

/// A calibrated constant-1/2 predictor `μ` and a label-revealing neighbour `ν`
/// at distance `ε`; the smoothed regret of `μ` against `ν` is `ε/(2σ)` for
/// every `σ ≥ ε`.
pub fn lb1(eps: f64) -> Result<ConstructionOutput> {
    if !(eps.is_finite() && eps > 0.0 && eps <= 0.5) {
        return Err(CalibError::InvalidParameter(format!(
            "eps={eps} must lie in (0, 1/2]"
        )));
    }
    let mu = Pld::bernoulli(0.5)?;
    let nu = Pld::new([(0.5 - eps, 0, 0.5), (0.5 + eps, 1, 0.5)])?;
    let coupling = vec![(0.5, 0.5 - eps, 0, 0.5), (0.5, 0.5 + eps, 1, 0.5)];
    Ok(ConstructionOutput::new("lb1", None, mu)
        .with("nu", Companion::Pld(nu))
        .with(
            "kappa",
            Companion::PostProcessing(PostProcessing::identity()),
        )
        .with("loss", Companion::Loss(VMixtureLoss::v_shaped(0.5)?))
        .with("coupling", Companion::Coupling(coupling))
        .expect("w_label_preserving", eps, "E|p - q| under the coupling")
        .expect(
            "regret_times_sigma",
            eps / 2.0,
            "regret is eps/(2 sigma) for sigma >= eps",
        ))
}

/// The post-processing `κ` used with [`lb2`].
pub fn lb2_kappa(sigma: f64) -> Result<PostProcessing> {
    let flat = |lo: f64, hi: f64, v: f64| LinearPiece {
        lo,
        hi,
        slope: 0.0,
        intercept: v,
    };
    PostProcessing::new(vec![
        flat(0.0, 0.5 - sigma, 0.5 + sigma),
        flat(0.5 - sigma, 0.5 + sigma, 0.5),
        flat(0.5 + sigma, 0.75, 0.5 - sigma),
        flat(0.75, 1.0, 1.0),
    ])
}

/// Mixture of a mildly miscalibrated PLD around 1/2 with a point mass at
/// `(1, 1)`; its best post-processing regret scales like `σ + ε/σ`.
pub fn lb2(eps: f64, sigma: f64) -> Result<ConstructionOutput> {
    if !(eps.is_finite() && sigma.is_finite() && 0.0 < eps && eps <= sigma && sigma <= 1.0 / 12.0) {
        return Err(CalibError::ParameterOrder(format!(
            "need 0 < eps <= sigma <= 1/12, got eps={eps}, sigma={sigma}"
        )));
    }
    let delta = eps / sigma;
    let mu0 = Pld::new([
        (0.5, 0, (1.0 - delta) / 2.0),
        (0.5, 1, (1.0 - delta) / 2.0),
        (0.5 - 2.0 * sigma, 1, delta / 2.0),
        (0.5 + 2.0 * sigma, 0, delta / 2.0),
    ])?;
    let mu1 = Pld::point(1.0, 1)?;
    let pld = mix(&mu0, &mu1, 0.5)?;
    let loss = VMixtureLoss::new(
        vec![
            VComponent {
                v: 0.5,
                lambda: 0.5,
            },
            VComponent {
                v: 1.0 - sigma / 2.0,
                lambda: 0.5,
            },
        ],
        0.0,
        0.0,
    )?;
    Ok(ConstructionOutput::new("lb2", None, pld)
        .with("mu0", Companion::Pld(mu0))
        .with("mu1", Companion::Pld(mu1))
        .with("loss", Companion::Loss(loss))
        .with(
            "loss1",
            Companion::Loss(VMixtureLoss::v_shaped(1.0 - sigma / 2.0)?),
        )
        .with("kappa", Companion::PostProcessing(lb2_kappa(sigma)?))
        .with(
            "kappa1",
            Companion::PostProcessing(PostProcessing::constant(1.0)?),
        )
        .expect("smce_upper", 2.0 * eps, "upper bound on smce")
        .expect(
            "loss1_smoothed_mu1",
            -sigma / 4.0,
            "smoothed V loss at 1 - sigma/2 on the point (1,1)",
        )
        .expect(
            "loss1_post_mu1",
            -sigma / 2.0,
            "same loss after mapping everything to 1",
        )
        .expect(
            "regret_lower",
            0.05 * (sigma + delta),
            "0.05 (sigma + eps/sigma)",
        ))
}

/// `ε′ = ε/(1+2ε)`.
pub fn eps_prime(eps: f64) -> f64 {
    eps / (1.0 + 2.0 * eps)
}

/// Indistinguishable pairs of domains: cases (a)/(b) share a PLD exactly, and
/// cases (c)/(d) are perturbed versions whose single samples look alike.
///
/// Perturbations are drawn uniformly from `[−ε²/2, ε²/2]`, a subrange of the
/// `[−ε/2, ε/2]` allowed for them. The narrower range keeps the calibrating
/// post-processing of case (d) within `O(ε²)` of the identity; see
/// [`udce_cases_with_spread`] to choose another width.
pub fn udce_cases(eps: f64, k: usize, seed: u64) -> Result<[ConstructionOutput; 4]> {
    udce_cases_with_spread(eps, k, seed, eps * eps / 2.0)
}

/// [`udce_cases`] with perturbations uniform on `[−halfwidth, halfwidth]`.
pub fn udce_cases_with_spread(
    eps: f64,
    k: usize,
    seed: u64,
    halfwidth: f64,
) -> Result<[ConstructionOutput; 4]> {
    let p = perturbed(eps, k, seed, halfwidth)?;
    let ep = eps_prime(eps);
    let (lo, hi) = (0.5 - eps, 0.5 + eps);

    let task_a = FinitePredictionTask::new([(0.5, 0.5, lo), (0.5, 0.5, hi)])?;
    let task_b = FinitePredictionTask::new([
        (ep, 1.0, lo),
        (0.5 - ep, lo, lo),
        (ep, 0.0, hi),
        (0.5 - ep, hi, hi),
    ])?;
    let kappa_d = PostProcessing::from_point_map(&p.kappa_d)?;
    let const_half = PostProcessing::constant(0.5)?;

    let a = ConstructionOutput::new("udce-case-a", Some(task_a.clone()), task_a.pushforward()?)
        .with("kappa_half", Companion::PostProcessing(const_half.clone()))
        .expect("true_dce", eps, "only calibrated predictor is constant 1/2")
        .expect("udce", eps, "constant 1/2 post-processing");
    let b = ConstructionOutput::new("udce-case-b", Some(task_b.clone()), task_b.pushforward()?)
        .expect(
            "true_dce",
            2.0 * eps * eps / (1.0 + 2.0 * eps),
            "move the two eps' masses to 1/2",
        );
    let c = ConstructionOutput::new("udce-case-c", Some(p.c.clone()), p.c.pushforward()?)
        .with("kappa_half", Companion::PostProcessing(const_half))
        .expect(
            "udce_lower",
            eps / 2.0,
            "every prediction is at least eps/2 from 1/2",
        )
        .expect(
            "udce_upper",
            1.5 * eps,
            "every prediction is at most 3 eps/2 from 1/2",
        );
    let d = ConstructionOutput::new("udce-case-d", Some(p.d.clone()), p.d.pushforward()?)
        .with("kappa_d", Companion::PostProcessing(kappa_d))
        .expect(
            "witness_cost_upper",
            3.0 * ep * eps,
            "cost of kappa_d is at most 3 eps' eps",
        );
    Ok([a, b, c, d])
}

/// Only the domains of the perturbed cases (c) and (d) of [`udce_cases`],
/// drawn from the same seed. Skips the PLDs and post-processings, which are
/// expensive for large `k`.
pub fn udce_perturbed_tasks(
    eps: f64,
    k: usize,
    seed: u64,
) -> Result<(FinitePredictionTask, FinitePredictionTask)> {
    let p = perturbed(eps, k, seed, eps * eps / 2.0)?;
    Ok((p.c, p.d))
}

struct Perturbed {
    c: FinitePredictionTask,
    d: FinitePredictionTask,
    kappa_d: Vec<(f64, f64)>,
}

fn perturbed(eps: f64, k: usize, seed: u64, halfwidth: f64) -> Result<Perturbed> {
    check_eps(eps)?;
    if !(halfwidth.is_finite() && halfwidth > 0.0 && halfwidth <= eps / 2.0) {
        return Err(CalibError::ParameterConstraint(format!(
            "perturbation half-width {halfwidth} must lie in (0, eps/2]"
        )));
    }
    let heavy = eps_prime(eps) * k as f64;
    let n_heavy = heavy.round() as usize;
    if k < 2 || !k.is_multiple_of(2) || (heavy - n_heavy as f64).abs() > 1e-9 {
        return Err(CalibError::ParameterConstraint(format!(
            "need k/2 and eps'k integral, got k={k}, eps'k={heavy}"
        )));
    }
    let half = k / 2;
    let (lo, hi) = (0.5 - eps, 0.5 + eps);
    let mut rng = seeded_rng(seed);
    let delta0 = distinct_draws(&mut rng, half, halfwidth);
    let delta1 = distinct_draws(&mut rng, half, halfwidth);
    let w = 1.0 / k as f64;
    let c = FinitePredictionTask::new(
        (0..half)
            .map(|j| TaskPoint::new(w, 0.5, lo + delta0[j]))
            .chain((0..half).map(|j| TaskPoint::new(w, 0.5, hi + delta1[j]))),
    )?;
    let d = FinitePredictionTask::new(
        (0..half)
            .map(|j| TaskPoint::new(w, if j < n_heavy { 1.0 } else { lo }, lo + delta0[j]))
            .chain(
                (0..half)
                    .map(|j| TaskPoint::new(w, if j < n_heavy { 0.0 } else { hi }, hi + delta1[j])),
            ),
    )?;
    let kappa_d = (0..half)
        .map(|j| (lo + delta0[j], if j < n_heavy { 0.5 } else { lo }))
        .chain((0..half).map(|j| (hi + delta1[j], if j < n_heavy { 0.5 } else { hi })))
        .collect();
    Ok(Perturbed { c, d, kappa_d })
}

/// `n` values uniform on `[−halfwidth, halfwidth]`, pairwise more than
/// [`P_EQ_TOL`] apart. A draw with a near-tie is discarded whole.
fn distinct_draws(rng: &mut impl Rng, n: usize, halfwidth: f64) -> Vec<f64> {
    loop {
        let out: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-halfwidth..=halfwidth))
            .collect();
        let mut sorted = out.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[1] - w[0] > P_EQ_TOL) {
            return out;
        }
    }
}

/// Looks a construction up by its command-line name.
pub fn by_name(
    name: &str,
    eps: f64,
    sigma: Option<f64>,
    k: Option<usize>,
    seed: u64,
) -> Result<Vec<ConstructionOutput>> {
    Ok(match name {
        "almost-balanced" => vec![almost_balanced(eps)?],
        "two-point" => vec![two_point_family(eps)?],
        "smoothing-necessity" => vec![smoothing_necessity(eps)?],
        "lb1" => vec![lb1(eps)?],
        "lb2" => {
            let sigma =
                sigma.ok_or_else(|| CalibError::InvalidParameter("lb2 needs --sigma".into()))?;
            vec![lb2(eps, sigma)?]
        }
        "udce-cases" => {
            let k = k.ok_or_else(|| CalibError::InvalidParameter("udce-cases needs --k".into()))?;
            udce_cases(eps, k, seed)?.into()
        }
        other => {
            return Err(CalibError::InvalidParameter(format!(
                "unknown construction '{other}' (expected almost-balanced, two-point, \
                 smoothing-necessity, lb1, lb2 or udce-cases)"
            )))
        }
    })
}

/// Names accepted by [`by_name`].
pub const CONSTRUCTION_NAMES: [&str; 6] = [
    "almost-balanced",
    "two-point",
    "smoothing-necessity",
    "lb1",
    "lb2",
    "udce-cases",
];
