//! Uniform-noise smoothing of predictions.
//!
//! A prediction `p` becomes `p_z = clip(p + z, 0, 1)` with `z ~ Unif[−σ, σ]`.
//! The law of `p_z` is kept in closed form as a piecewise-constant density plus
//! atoms at the two endpoints, so expectations downstream are exact.

use crate::error::{CalibError, Result};
use crate::losses::{LinearPiece, PostProcessing};
use crate::pld::{Atom, Pld};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

impl DensityPiece {
    fn mass(&self) -> f64 {
        self.density * (self.hi - self.lo)
    }

    /// Mass of the open interval `(a, b)` inside this piece.
    fn mass_within(&self, a: f64, b: f64) -> f64 {
        let lo = self.lo.max(a);
        let hi = self.hi.min(b);
        if hi > lo {
            self.density * (hi - lo)
        } else {
            0.0
        }
    }
}

/// A distribution on `[0,1]`: atoms at the endpoints plus a piecewise-constant
/// density.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePrediction {
    pub atom0: f64,
    pub atom1: f64,
    pub pieces: Vec<DensityPiece>,
}

impl PiecewisePrediction {
    pub fn total_mass(&self) -> f64 {
        self.atom0 + self.atom1 + self.pieces.iter().map(DensityPiece::mass).sum::<f64>()
    }

    /// `Pr[X ≤ t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let mut total = self.atom0 + self.continuous_mass(f64::NEG_INFINITY, t);
        if t >= 1.0 {
            total += self.atom1;
        }
        total
    }

    /// `Pr[X < v]`.
    pub fn prob_below(&self, v: f64) -> f64 {
        let atom = if v > 0.0 { self.atom0 } else { 0.0 };
        atom + self.continuous_mass(f64::NEG_INFINITY, v)
    }

    /// `Pr[X > v]`.
    pub fn prob_above(&self, v: f64) -> f64 {
        let atom = if v < 1.0 { self.atom1 } else { 0.0 };
        atom + self.continuous_mass(v, f64::INFINITY)
    }

    fn continuous_mass(&self, a: f64, b: f64) -> f64 {
        self.pieces.iter().map(|pc| pc.mass_within(a, b)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atom1
            + self
                .pieces
                .iter()
                .map(|pc| pc.mass() * 0.5 * (pc.lo + pc.hi))
                .sum::<f64>()
    }

    /// `E|X − v|`.
    pub fn expect_abs(&self, v: f64) -> f64 {
        let mut total = self.atom0 * v + self.atom1 * (1.0 - v);
        for pc in &self.pieces {
            // ∫ |t − v| dt over [lo, hi], split at v
            let left_hi = pc.hi.min(v);
            let right_lo = pc.lo.max(v);
            let mut integral = 0.0;
            if left_hi > pc.lo {
                integral += 0.5 * ((v - pc.lo).powi(2) - (v - left_hi).powi(2));
            }
            if pc.hi > right_lo {
                integral += 0.5 * ((pc.hi - v).powi(2) - (right_lo - v).powi(2));
            }
            total += pc.density * integral;
        }
        total
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 && sigma <= 1.0 {
        Ok(())
    } else {
        Err(CalibError::InvalidParameter(format!(
            "noise width sigma={sigma} must lie in (0,1]"
        )))
    }
}

/// Law of `clip(p + z, 0, 1)` for `z ~ Unif[−σ, σ]`.
pub fn smooth_point(p: f64, sigma: f64) -> Result<PiecewisePrediction> {
    check_sigma(sigma)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(CalibError::InvalidParameter(format!(
            "prediction {p} outside [0,1]"
        )));
    }
    let density = 1.0 / (2.0 * sigma);
    Ok(PiecewisePrediction {
        atom0: (sigma - p).max(0.0) * density,
        atom1: (p + sigma - 1.0).max(0.0) * density,
        pieces: vec![DensityPiece {
            lo: (p - sigma).max(0.0),
            hi: (p + sigma).min(1.0),
            density,
        }],
    })
}

/// `Pr_w[clip(round(p)) ≤ t]` where `round` snaps `p` to the nearest point of
/// the lattice `{w + 2iσ : i ∈ ℤ}` and `w ~ Unif[0, 2σ]`.
///
/// Let `r = (p − w) mod 2σ` be the distance from `p` down to the lattice point
/// below it. As `w` sweeps one period, `r` sweeps `[0, 2σ)` uniformly. Rounding
/// moves `p` down by `r` when `r < σ` and up by `2σ − r` otherwise, and
/// clipping at the ends does not change the event `{· ≤ t}` for `t < 1`.
pub fn grid_round_cdf(p: f64, sigma: f64, t: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(CalibError::InvalidParameter(format!(
            "prediction {p} outside [0,1]"
        )));
    }
    if t >= 1.0 {
        return Ok(1.0);
    }
    if t < 0.0 {
        return Ok(0.0);
    }
    let period = 2.0 * sigma;
    // cell r ∈ [0, σ): rounded value p − r ≤ t  ⇔  r ≥ p − t
    let down = sigma - (p - t).clamp(0.0, sigma);
    // cell r ∈ [σ, 2σ): rounded value p + 2σ − r ≤ t  ⇔  r ≥ p + 2σ − t
    let up = period - (p + period - t).clamp(sigma, period);
    Ok((down + up) / period)
}

/// A PLD whose predictions are smoothed with uniform noise of half-width σ.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPld {
    base: Pld,
    sigma: f64,
}

impl SmoothedPld {
    pub fn new(base: Pld, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { base, sigma })
    }

    pub fn base(&self) -> &Pld {
        &self.base
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Each source atom with the law of its smoothed prediction.
    pub fn components(&self) -> Vec<(Atom, PiecewisePrediction)> {
        self.base
            .atoms()
            .iter()
            .map(|a| (*a, smooth_point(a.p, self.sigma).expect("validated inputs")))
            .collect()
    }

    /// Marginal law of `p_z`.
    pub fn marginal(&self) -> PiecewisePrediction {
        let comps = self.components();
        let mut edges: Vec<f64> = comps
            .iter()
            .flat_map(|(_, law)| law.pieces.iter().flat_map(|pc| [pc.lo, pc.hi]))
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let pieces = edges
            .windows(2)
            .filter_map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let density: f64 = comps
                    .iter()
                    .flat_map(|(a, law)| {
                        law.pieces
                            .iter()
                            .filter(move |pc| pc.lo < mid && mid < pc.hi)
                            .map(move |pc| a.mass * pc.density)
                    })
                    .sum();
                (density > 0.0).then_some(DensityPiece {
                    lo: w[0],
                    hi: w[1],
                    density,
                })
            })
            .collect();
        PiecewisePrediction {
            atom0: comps.iter().map(|(a, l)| a.mass * l.atom0).sum(),
            atom1: comps.iter().map(|(a, l)| a.mass * l.atom1).sum(),
            pieces,
        }
    }

    pub fn posterior(&self) -> PosteriorFunction {
        posterior(self)
    }
}

/// Wraps a PLD with its noise width.
pub fn smooth(pld: &Pld, sigma: f64) -> Result<SmoothedPld> {
    SmoothedPld::new(pld.clone(), sigma)
}

/// `E[y | p_z = t]`, constant between consecutive breakpoints, with separate
/// values at the endpoint atoms. `None` marks regions of zero probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFunction {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub at_zero: Option<f64>,
    pub at_one: Option<f64>,
}

impl PosteriorFunction {
    /// Right-continuous evaluation; endpoint atoms take precedence at 0 and 1.
    pub fn eval(&self, t: f64) -> Option<f64> {
        if t == 0.0 && self.at_zero.is_some() {
            return self.at_zero;
        }
        if t == 1.0 && self.at_one.is_some() {
            return self.at_one;
        }
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        let idx = idx
            .saturating_sub(1)
            .min(self.values.len().saturating_sub(1));
        self.values.get(idx).copied().flatten()
    }

    /// The post-processing `t ↦ E[y | p_z = t]`; zero-probability regions keep
    /// the identity.
    pub fn to_postprocessing(&self) -> PostProcessing {
        let mut pieces: Vec<LinearPiece> = self
            .breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| match v {
                Some(v) => LinearPiece {
                    lo: w[0],
                    hi: w[1],
                    slope: 0.0,
                    intercept: *v,
                },
                None => LinearPiece {
                    lo: w[0],
                    hi: w[1],
                    slope: 1.0,
                    intercept: 0.0,
                },
            })
            .collect();
        if let Some(v) = self.at_zero {
            pieces.push(LinearPiece {
                lo: 0.0,
                hi: 0.0,
                slope: 0.0,
                intercept: v,
            });
        }
        if let Some(v) = self.at_one {
            pieces.push(LinearPiece {
                lo: 1.0,
                hi: 1.0,
                slope: 0.0,
                intercept: v,
            });
        }
        PostProcessing::new(pieces).expect("posterior values lie in [0,1]")
    }
}

/// Exact posterior of the label given the smoothed prediction.
pub fn posterior(spld: &SmoothedPld) -> PosteriorFunction {
    let sigma = spld.sigma;
    let atoms = spld.base.atoms();
    let mut breakpoints = vec![0.0, 1.0];
    for a in atoms {
        breakpoints.push((a.p - sigma).clamp(0.0, 1.0));
        breakpoints.push((a.p + sigma).clamp(0.0, 1.0));
    }
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let values = breakpoints
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let (mut m1, mut m) = (0.0, 0.0);
            for a in atoms.iter().filter(|a| (mid - a.p).abs() < sigma) {
                m += a.mass;
                m1 += a.mass * f64::from(a.y);
            }
            (m > 0.0).then(|| m1 / m)
        })
        .collect();
    let pooled = |weight: &dyn Fn(&Atom) -> f64| {
        let (mut m1, mut m) = (0.0, 0.0);
        for a in atoms {
            let w = a.mass * weight(a);
            m += w;
            m1 += w * f64::from(a.y);
        }
        (m > 0.0).then(|| m1 / m)
    };
    let at_zero = pooled(&|a: &Atom| (sigma - a.p).max(0.0));
    let at_one = pooled(&|a: &Atom| (a.p + sigma - 1.0).max(0.0));
    PosteriorFunction {
        breakpoints,
        values,
        at_zero,
        at_one,
    }
}
