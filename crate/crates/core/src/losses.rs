//! Proper losses and post-processings.
//!
//! Losses are nonnegative mixtures of V-shaped losses
//! `ℓ_v(p, y) = −(y − v)·sgn(p − v)` plus an affine term `a·y + b`, with the
//! convention `sgn(0) = 0`. Post-processings are piecewise-linear maps on
//! `[0,1]`. Both are restricted to these shapes so that every expectation under
//! a smoothed distribution is an exact finite sum.

use crate::error::{CalibError, Result};
use crate::pld::Pld;
use crate::smoothing::{PiecewisePrediction, SmoothedPld};

/// Upper limit on the total V weight.
pub const MAX_TOTAL_LAMBDA: f64 = 2.0;

const RANGE_TOL: f64 = 1e-12;

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VComponent {
    pub v: f64,
    pub lambda: f64,
}

/// `Σ λ·ℓ_v + a·y + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct VMixtureLoss {
    components: Vec<VComponent>,
    a: f64,
    b: f64,
}

impl VMixtureLoss {
    pub fn new(components: Vec<VComponent>, a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(CalibError::NonFinite {
                what: "affine loss terms",
            });
        }
        let mut total = 0.0;
        for c in &components {
            if !c.v.is_finite() || !c.lambda.is_finite() {
                return Err(CalibError::NonFinite {
                    what: "loss components",
                });
            }
            if !(0.0..=1.0).contains(&c.v) {
                return Err(CalibError::InvalidLoss(format!(
                    "kink {} outside [0,1]",
                    c.v
                )));
            }
            if c.lambda < 0.0 {
                return Err(CalibError::InvalidLoss(format!(
                    "negative weight {} at v={}",
                    c.lambda, c.v
                )));
            }
            total += c.lambda;
        }
        if total > MAX_TOTAL_LAMBDA + 1e-9 {
            return Err(CalibError::InvalidLoss(format!(
                "total weight {total} exceeds {MAX_TOTAL_LAMBDA}"
            )));
        }
        Ok(Self { components, a, b })
    }

    /// The single V-shaped loss `ℓ_v`.
    pub fn v_shaped(v: f64) -> Result<Self> {
        Self::new(vec![VComponent { v, lambda: 1.0 }], 0.0, 0.0)
    }

    /// `|1(p ≥ 1/2) − y|` away from the kink, written as `ℓ_{1/2} + 1/2`.
    pub fn zero_one() -> Self {
        Self {
            components: vec![VComponent {
                v: 0.5,
                lambda: 1.0,
            }],
            a: 0.0,
            b: 0.5,
        }
    }

    /// The pure affine loss `a·y + b`.
    pub fn affine_only(a: f64, b: f64) -> Result<Self> {
        Self::new(Vec::new(), a, b)
    }

    pub fn components(&self) -> &[VComponent] {
        &self.components
    }

    pub fn affine(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn total_lambda(&self) -> f64 {
        self.components.iter().map(|c| c.lambda).sum()
    }

    /// Same V part with a different affine term.
    pub fn with_affine(&self, a: f64, b: f64) -> Result<Self> {
        Self::new(self.components.clone(), a, b)
    }

    pub fn eval(&self, p: f64, y: u8) -> f64 {
        let y = f64::from(y);
        let v_part: f64 = self
            .components
            .iter()
            .map(|c| -c.lambda * (y - c.v) * sgn(p - c.v))
            .sum();
        v_part + self.a * y + self.b
    }

    /// `E_{y ~ Ber(q)} ℓ(p, y)`.
    pub fn expected_under_bernoulli(&self, p: f64, q: f64) -> f64 {
        q * self.eval(p, 1) + (1.0 - q) * self.eval(p, 0)
    }
}

/// `ℓ(p, y)`.
pub fn loss_eval(loss: &VMixtureLoss, p: f64, y: u8) -> f64 {
    loss.eval(p, y)
}

/// `E_μ ℓ(p, y)` as an atom-weighted sum.
pub fn expected_loss(pld: &Pld, loss: &VMixtureLoss) -> f64 {
    pld.atoms()
        .iter()
        .map(|a| a.mass * loss.eval(a.p, a.y))
        .sum()
}

/// `E ℓ(p_z, y)` under the smoothed distribution.
pub fn expected_loss_smoothed(spld: &SmoothedPld, loss: &VMixtureLoss) -> f64 {
    let (a, b) = loss.affine();
    let mut total = a * spld.base().tau() + b;
    for (atom, law) in spld.components() {
        let y = f64::from(atom.y);
        for c in loss.components() {
            let mean_sign = law.prob_above(c.v) - law.prob_below(c.v);
            total += atom.mass * -c.lambda * (y - c.v) * mean_sign;
        }
    }
    total
}

/// `E ℓ(κ(q_z), y)` under the smoothed distribution.
pub fn expected_loss_smoothed_post(
    spld: &SmoothedPld,
    kappa: &PostProcessing,
    loss: &VMixtureLoss,
) -> f64 {
    let (a, b) = loss.affine();
    let mut total = a * spld.base().tau() + b;
    for (atom, law) in spld.components() {
        let y = f64::from(atom.y);
        for c in loss.components() {
            let mean_sign = kappa.expected_sign(&law, c.v);
            total += atom.mass * -c.lambda * (y - c.v) * mean_sign;
        }
    }
    total
}

/// `E ℓ(p_z, ỹ)` with `ỹ ~ Ber(p_z)`, i.e. the loss after relabeling the
/// smoothed predictor to be calibrated.
pub fn expected_loss_smoothed_relabeled(spld: &SmoothedPld, loss: &VMixtureLoss) -> f64 {
    let (a, b) = loss.affine();
    let mut total = 0.0;
    for (atom, law) in spld.components() {
        let v_part: f64 = loss
            .components()
            .iter()
            .map(|c| -c.lambda * law.expect_abs(c.v))
            .sum();
        total += atom.mass * (v_part + a * law.mean() + b);
    }
    total
}

/// The action minimizing `E_{y ~ Ber(qbar)} ℓ(·, y)`. For a proper loss this is
/// `qbar` itself.
pub fn bayes_response(_loss: &VMixtureLoss, qbar: f64) -> f64 {
    qbar
}

/// Checks `E_{Ber(p)} ℓ(p, y) ≤ E_{Ber(p)} ℓ(q, y)` for all grid pairs.
pub fn properness_check(loss: &VMixtureLoss, grid_step: f64) -> Result<bool> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(CalibError::InvalidParameter(format!(
            "grid step {grid_step} must lie in (0,1]"
        )));
    }
    let n = (1.0 / grid_step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| (i as f64 * grid_step).min(1.0)).collect();
    Ok(grid.iter().all(|&p| {
        let truthful = loss.expected_under_bernoulli(p, p);
        grid.iter()
            .all(|&q| truthful <= loss.expected_under_bernoulli(q, p) + 1e-9)
    }))
}

/// One affine segment `κ(p) = slope·p + intercept` on `[lo, hi)`. A segment
/// with `lo == hi` overrides the value at that single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPiece {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl LinearPiece {
    pub fn eval(&self, p: f64) -> f64 {
        self.slope * p + self.intercept
    }

    fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

/// A piecewise-linear map `[0,1] → [0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessing {
    /// Regular pieces tiling `[0,1]`, sorted.
    pieces: Vec<LinearPiece>,
    /// Single-point overrides, sorted by location.
    points: Vec<LinearPiece>,
}

impl PostProcessing {
    pub fn new(pieces: Vec<LinearPiece>) -> Result<Self> {
        let (mut points, mut regular): (Vec<_>, Vec<_>) =
            pieces.into_iter().partition(LinearPiece::is_point);
        for pc in points.iter().chain(&regular) {
            if ![pc.lo, pc.hi, pc.slope, pc.intercept]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(CalibError::NonFinite {
                    what: "post-processing pieces",
                });
            }
            if pc.lo > pc.hi {
                return Err(CalibError::InvalidPostProcessing(format!(
                    "piece [{}, {}] is reversed",
                    pc.lo, pc.hi
                )));
            }
            for t in [pc.lo, pc.hi] {
                let v = pc.eval(t);
                if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
                    return Err(CalibError::RangeViolation { p: t, value: v });
                }
            }
        }
        regular.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        points.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let Some(first) = regular.first() else {
            return Err(CalibError::InvalidPostProcessing("no pieces".into()));
        };
        if first.lo.abs() > RANGE_TOL || (regular[regular.len() - 1].hi - 1.0).abs() > RANGE_TOL {
            return Err(CalibError::InvalidPostProcessing(
                "pieces must cover [0,1]".into(),
            ));
        }
        for w in regular.windows(2) {
            if (w[0].hi - w[1].lo).abs() > RANGE_TOL {
                return Err(CalibError::InvalidPostProcessing(format!(
                    "gap or overlap between {} and {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        for pt in &points {
            if !(0.0..=1.0).contains(&pt.lo) {
                return Err(CalibError::InvalidPostProcessing(format!(
                    "point override at {} outside [0,1]",
                    pt.lo
                )));
            }
        }
        Ok(Self {
            pieces: regular,
            points,
        })
    }

    pub fn identity() -> Self {
        Self::new(vec![LinearPiece {
            lo: 0.0,
            hi: 1.0,
            slope: 1.0,
            intercept: 0.0,
        }])
        .expect("identity is valid")
    }

    pub fn one_minus() -> Self {
        Self::new(vec![LinearPiece {
            lo: 0.0,
            hi: 1.0,
            slope: -1.0,
            intercept: 1.0,
        }])
        .expect("1 - p is valid")
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![LinearPiece {
            lo: 0.0,
            hi: 1.0,
            slope: 0.0,
            intercept: c,
        }])
    }

    /// Step function taking `values[i]` on `[breaks[i-1], breaks[i])`.
    pub fn step(breaks: &[f64], values: &[f64]) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(CalibError::DimensionMismatch(format!(
                "{} breaks need {} values, got {}",
                breaks.len(),
                breaks.len() + 1,
                values.len()
            )));
        }
        let mut edges = Vec::with_capacity(breaks.len() + 2);
        edges.push(0.0);
        edges.extend_from_slice(breaks);
        edges.push(1.0);
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CalibError::InvalidPostProcessing(
                "step breaks must be strictly increasing inside (0,1)".into(),
            ));
        }
        let pieces = edges
            .windows(2)
            .zip(values)
            .map(|(w, &v)| LinearPiece {
                lo: w[0],
                hi: w[1],
                slope: 0.0,
                intercept: v,
            })
            .collect();
        Self::new(pieces)
    }

    /// Step function sending each listed prediction to its value, switching at
    /// midpoints between consecutive predictions.
    pub fn from_point_map(map: &[(f64, f64)]) -> Result<Self> {
        let mut map = map.to_vec();
        map.sort_by(|a, b| a.0.total_cmp(&b.0));
        if map.is_empty() {
            return Err(CalibError::InvalidPostProcessing("empty point map".into()));
        }
        if map.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CalibError::InvalidPostProcessing(
                "duplicate prediction in point map".into(),
            ));
        }
        let breaks: Vec<f64> = map.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)).collect();
        let values: Vec<f64> = map.iter().map(|m| m.1).collect();
        let mut kappa = Self::step(&breaks, &values)?;
        // endpoints of [0,1] that are themselves listed keep their own value
        for &(p, v) in &map {
            if p == 0.0 || p == 1.0 {
                kappa = kappa.with_point(p, v)?;
            }
        }
        Ok(kappa)
    }

    /// Overrides the value at a single point.
    pub fn with_point(&self, t: f64, value: f64) -> Result<Self> {
        let mut all = self.all_pieces();
        all.retain(|pc| !(pc.is_point() && pc.lo == t));
        all.push(LinearPiece {
            lo: t,
            hi: t,
            slope: 0.0,
            intercept: value,
        });
        Self::new(all)
    }

    /// Regular pieces followed by point overrides.
    pub fn all_pieces(&self) -> Vec<LinearPiece> {
        self.pieces.iter().chain(&self.points).copied().collect()
    }

    pub fn pieces(&self) -> &[LinearPiece] {
        &self.pieces
    }

    pub fn point_overrides(&self) -> &[LinearPiece] {
        &self.points
    }

    pub fn eval(&self, p: f64) -> f64 {
        if let Some(pt) = self.points.iter().find(|pt| pt.lo == p) {
            return pt.intercept;
        }
        let idx = self.pieces.partition_point(|pc| pc.hi <= p);
        let pc = &self.pieces[idx.min(self.pieces.len() - 1)];
        pc.eval(p)
    }

    /// `E sgn(κ(X) − v)` for `X` drawn from `law`.
    pub fn expected_sign(&self, law: &PiecewisePrediction, v: f64) -> f64 {
        let mut total = law.atom0 * sgn(self.eval(0.0) - v) + law.atom1 * sgn(self.eval(1.0) - v);
        for seg in &law.pieces {
            for pc in &self.pieces {
                let lo = seg.lo.max(pc.lo);
                let hi = seg.hi.min(pc.hi);
                if hi <= lo {
                    continue;
                }
                total += seg.density * signed_length(pc, lo, hi, v);
            }
        }
        total
    }
}

/// `∫_lo^hi sgn(slope·t + intercept − v) dt`.
fn signed_length(pc: &LinearPiece, lo: f64, hi: f64, v: f64) -> f64 {
    if pc.slope == 0.0 {
        return sgn(pc.intercept - v) * (hi - lo);
    }
    let cross = ((v - pc.intercept) / pc.slope).clamp(lo, hi);
    // sign on the right of the crossing equals sgn(slope)
    let s = sgn(pc.slope);
    s * ((hi - cross) - (cross - lo))
}
