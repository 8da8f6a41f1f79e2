//! Finite-support prediction-label distributions.
//!
//! A [`Pld`] is a probability distribution over pairs `(p, y)` with `p` a
//! predicted probability in `[0,1]` and `y` a binary label. Every metric in the
//! crate consumes one. Atoms are kept in canonical form: sorted by `(p, y)`,
//! duplicate keys merged, zero-mass atoms dropped. Predictions closer than
//! [`P_EQ_TOL`] are treated as the same value.

use crate::error::{CalibError, Result};
use crate::losses::PostProcessing;

/// Allowed deviation of the total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Two predictions within this distance are the same support value.
pub const P_EQ_TOL: f64 = 1e-12;

/// Default tolerance for [`Pld::is_calibrated`].
pub const CALIBRATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub p: f64,
    pub y: u8,
    pub mass: f64,
}

impl Atom {
    pub fn new(p: f64, y: u8, mass: f64) -> Self {
        Self { p, y, mass }
    }

    fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || !self.mass.is_finite() {
            return Err(CalibError::NonFinite {
                what: "atom fields",
            });
        }
        if !(0.0..=1.0).contains(&self.p) || self.y > 1 {
            return Err(CalibError::AtomOutOfRange {
                p: self.p,
                y: self.y,
            });
        }
        if self.mass < 0.0 {
            return Err(CalibError::NegativeMass {
                p: self.p,
                y: self.y,
                mass: self.mass,
            });
        }
        Ok(())
    }
}

impl From<(f64, u8, f64)> for Atom {
    fn from((p, y, mass): (f64, u8, f64)) -> Self {
        Atom { p, y, mass }
    }
}

/// Label masses at one support value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueMass {
    pub p: f64,
    pub mass0: f64,
    pub mass1: f64,
}

impl ValueMass {
    pub fn total(&self) -> f64 {
        self.mass0 + self.mass1
    }

    /// Conditional label mean at this value.
    pub fn label_mean(&self) -> f64 {
        self.mass1 / self.total()
    }

    /// `mass(p,0)·p − mass(p,1)·(1−p)`; zero iff calibrated at `p`.
    pub fn calibration_gap(&self) -> f64 {
        self.mass0 * self.p - self.mass1 * (1.0 - self.p)
    }
}

/// A prediction-label distribution with finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct Pld {
    atoms: Vec<Atom>,
}

impl Pld {
    /// Validates and canonicalizes a list of atoms.
    pub fn new<I, A>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = A>,
        A: Into<Atom>,
    {
        let atoms: Vec<Atom> = atoms.into_iter().map(Into::into).collect();
        for a in &atoms {
            a.validate()?;
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(CalibError::MassNotOne { total });
        }
        Ok(Self {
            atoms: canonicalize(atoms),
        })
    }

    /// Point mass at `(p, y)`.
    pub fn point(p: f64, y: u8) -> Result<Self> {
        Self::new([Atom::new(p, y, 1.0)])
    }

    /// The calibrated distribution with prediction fixed at `p` and `y ~ Ber(p)`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new([Atom::new(p, 1, p), Atom::new(p, 0, 1.0 - p)])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Probability of label one.
    pub fn tau(&self) -> f64 {
        self.atoms.iter().filter(|a| a.y == 1).map(|a| a.mass).sum()
    }

    /// Groups atoms by support value, in increasing order of `p`.
    pub fn values(&self) -> Vec<ValueMass> {
        let mut out: Vec<ValueMass> = Vec::new();
        for a in &self.atoms {
            match out.last_mut() {
                Some(v) if v.p == a.p => {
                    if a.y == 1 {
                        v.mass1 += a.mass
                    } else {
                        v.mass0 += a.mass
                    }
                }
                _ => out.push(ValueMass {
                    p: a.p,
                    mass0: if a.y == 0 { a.mass } else { 0.0 },
                    mass1: if a.y == 1 { a.mass } else { 0.0 },
                }),
            }
        }
        out
    }

    /// Distinct support values of the prediction.
    pub fn support(&self) -> Vec<f64> {
        self.values().iter().map(|v| v.p).collect()
    }

    /// Expected calibration error `E|E[y|p] − p|`.
    pub fn ece(&self) -> f64 {
        self.values()
            .iter()
            .map(|v| (v.mass1 - v.p * v.total()).abs())
            .sum()
    }

    /// Largest per-value violation of `mass(p,0)·p = mass(p,1)·(1−p)`.
    pub fn max_calibration_gap(&self) -> f64 {
        self.values()
            .iter()
            .map(|v| v.calibration_gap().abs())
            .fold(0.0, f64::max)
    }

    pub fn is_calibrated(&self, tol: f64) -> bool {
        self.max_calibration_gap() <= tol
    }

    /// Replaces the labels by `Ber(p)` draws, keeping the marginal of `p`.
    pub fn relabel_bernoulli(&self) -> Pld {
        let atoms = self.values().into_iter().flat_map(|v| {
            let m = v.total();
            [
                Atom::new(v.p, 0, m * (1.0 - v.p)),
                Atom::new(v.p, 1, m * v.p),
            ]
        });
        Pld {
            atoms: canonicalize(atoms.collect()),
        }
    }

    /// Pushes every atom through `kappa`.
    pub fn apply_postprocessing(&self, kappa: &PostProcessing) -> Result<Pld> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let q = kappa.eval(a.p);
            if !(-P_EQ_TOL..=1.0 + P_EQ_TOL).contains(&q) || !q.is_finite() {
                return Err(CalibError::RangeViolation { p: a.p, value: q });
            }
            atoms.push(Atom::new(q.clamp(0.0, 1.0), a.y, a.mass));
        }
        Ok(Pld {
            atoms: canonicalize(atoms),
        })
    }

    /// Componentwise comparison of canonical atom lists.
    pub fn approx_eq(&self, other: &Pld, tol: f64) -> bool {
        self.atoms.len() == other.atoms.len()
            && self.atoms.iter().zip(&other.atoms).all(|(a, b)| {
                a.y == b.y && (a.p - b.p).abs() <= tol && (a.mass - b.mass).abs() <= tol
            })
    }
}

/// Convex combination `w·a + (1−w)·b`.
pub fn mix(a: &Pld, b: &Pld, w: f64) -> Result<Pld> {
    if !(0.0..=1.0).contains(&w) {
        return Err(CalibError::InvalidParameter(format!(
            "mixture weight {w} outside [0,1]"
        )));
    }
    let atoms = a
        .atoms
        .iter()
        .map(|x| Atom::new(x.p, x.y, w * x.mass))
        .chain(
            b.atoms
                .iter()
                .map(|x| Atom::new(x.p, x.y, (1.0 - w) * x.mass)),
        )
        .collect();
    Ok(Pld {
        atoms: canonicalize(atoms),
    })
}

fn canonicalize(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.p.total_cmp(&b.p));
    // snap predictions within P_EQ_TOL of a cluster's first value onto it
    let mut anchor = f64::NAN;
    for a in atoms.iter_mut() {
        if (a.p - anchor).abs() <= P_EQ_TOL {
            a.p = anchor;
        } else {
            anchor = a.p;
        }
    }
    atoms.sort_by(|a, b| a.p.total_cmp(&b.p).then(a.y.cmp(&b.y)));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if last.p == a.p && last.y == a.y => last.mass += a.mass,
            _ => out.push(a),
        }
    }
    out.retain(|a| a.mass > 0.0);
    out
}

/// One domain element of a [`FinitePredictionTask`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskPoint {
    pub weight: f64,
    pub bayes: f64,
    pub prediction: f64,
}

impl TaskPoint {
    pub fn new(weight: f64, bayes: f64, prediction: f64) -> Self {
        Self {
            weight,
            bayes,
            prediction,
        }
    }
}

impl From<(f64, f64, f64)> for TaskPoint {
    fn from((weight, bayes, prediction): (f64, f64, f64)) -> Self {
        TaskPoint::new(weight, bayes, prediction)
    }
}

/// An explicit finite domain: per-point weight, Bayes probability and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePredictionTask {
    points: Vec<TaskPoint>,
}

impl FinitePredictionTask {
    pub fn new<I, T>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<TaskPoint>,
    {
        let points: Vec<TaskPoint> = points.into_iter().map(Into::into).collect();
        for pt in &points {
            if !(pt.weight.is_finite() && pt.bayes.is_finite() && pt.prediction.is_finite()) {
                return Err(CalibError::NonFinite {
                    what: "task point fields",
                });
            }
            if pt.weight < 0.0 {
                return Err(CalibError::InvalidTask(format!(
                    "negative weight {}",
                    pt.weight
                )));
            }
            if !(0.0..=1.0).contains(&pt.bayes) || !(0.0..=1.0).contains(&pt.prediction) {
                return Err(CalibError::InvalidTask(format!(
                    "bayes {} or prediction {} outside [0,1]",
                    pt.bayes, pt.prediction
                )));
            }
        }
        let total: f64 = points.iter().map(|pt| pt.weight).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(CalibError::MassNotOne { total });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[TaskPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The distribution of `(p(x), y)` for `(x, y) ~ D`.
    pub fn pushforward(&self) -> Result<Pld> {
        Pld::new(self.points.iter().flat_map(|pt| {
            [
                Atom::new(pt.prediction, 1, pt.weight * pt.bayes),
                Atom::new(pt.prediction, 0, pt.weight * (1.0 - pt.bayes)),
            ]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn almost_balanced(eps: f64) -> Pld {
        Pld::new([
            (0.5 - eps, 0, 0.25),
            (0.5 - eps, 1, 0.25),
            (0.5 + eps, 0, 0.25),
            (0.5 + eps, 1, 0.25),
        ])
        .unwrap()
    }

    #[test]
    fn merges_duplicate_keys() {
        let pld = Pld::new([(0.5, 0, 0.25), (0.5, 0, 0.25), (0.5, 1, 0.5)]).unwrap();
        assert_eq!(
            pld.atoms(),
            &[Atom::new(0.5, 0, 0.5), Atom::new(0.5, 1, 0.5)]
        );
    }

    #[test]
    fn single_atom_and_mass_errors() {
        assert_eq!(Pld::new([(0.4, 0, 1.0)]).unwrap().len(), 1);
        assert!(matches!(
            Pld::new([(0.4, 0, 0.5), (0.6, 1, 0.4)]),
            Err(CalibError::MassNotOne { .. })
        ));
        assert!(matches!(
            Pld::new([(1.4, 0, 1.0)]),
            Err(CalibError::AtomOutOfRange { .. })
        ));
        assert!(matches!(
            Pld::new([(0.4, 2, 1.0)]),
            Err(CalibError::AtomOutOfRange { .. })
        ));
        assert!(matches!(
            Pld::new([(0.4, 0, -0.5), (0.5, 0, 1.5)]),
            Err(CalibError::NegativeMass { .. })
        ));
        assert!(matches!(
            Pld::new([(f64::NAN, 0, 1.0)]),
            Err(CalibError::NonFinite { .. })
        ));
    }

    #[test]
    fn drops_zero_mass_and_snaps_close_predictions() {
        let pld = Pld::new([(0.3, 0, 0.0), (0.3, 1, 0.5), (0.3 + 1e-13, 0, 0.5)]).unwrap();
        assert_eq!(pld.len(), 2);
        assert_eq!(pld.support(), vec![0.3]);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(almost_balanced(0.1).tau(), 0.5);
        assert_eq!(Pld::point(0.3, 0).unwrap().tau(), 0.0);
        let pld = Pld::new([(0.2, 1, 0.7), (0.9, 0, 0.3)]).unwrap();
        assert!((pld.tau() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ece_examples() {
        assert!(Pld::bernoulli(0.3).unwrap().ece() < 1e-15);
        assert!((almost_balanced(0.1).ece() - 0.1).abs() < 1e-12);
        assert!((Pld::point(0.2, 1).unwrap().ece() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn calibration_examples() {
        let pld = Pld::new([(0.3, 1, 0.3), (0.3, 0, 0.7)]).unwrap();
        assert!(pld.is_calibrated(1e-9));
        assert!(!almost_balanced(0.1).is_calibrated(1e-9));
        assert!(Pld::point(1.0, 1).unwrap().is_calibrated(1e-9));
        assert!(Pld::point(0.0, 0).unwrap().is_calibrated(1e-9));
        assert!(!Pld::point(0.0, 1).unwrap().is_calibrated(1e-9));
        assert!(!Pld::point(1.0, 0).unwrap().is_calibrated(1e-9));
    }

    #[test]
    fn pushforward_single_point() {
        let task = FinitePredictionTask::new([(1.0, 0.5, 0.5)]).unwrap();
        let pld = task.pushforward().unwrap();
        assert_eq!(
            pld.atoms(),
            &[Atom::new(0.5, 0, 0.5), Atom::new(0.5, 1, 0.5)]
        );
    }

    #[test]
    fn task_validation() {
        assert!(FinitePredictionTask::new([(0.5, 0.5, 0.5)]).is_err());
        assert!(FinitePredictionTask::new([(1.0, 1.5, 0.5)]).is_err());
        assert!(FinitePredictionTask::new([(1.0, 0.5, f64::INFINITY)]).is_err());
    }

    #[test]
    fn mix_examples() {
        let a = almost_balanced(0.1);
        assert!(mix(&a, &a, 0.5).unwrap().approx_eq(&a, 1e-12));
        let b = Pld::point(0.9, 1).unwrap();
        assert_eq!(mix(&a, &b, 1.0).unwrap(), a);
        let m = mix(
            &Pld::point(0.0, 0).unwrap(),
            &Pld::point(1.0, 1).unwrap(),
            0.25,
        )
        .unwrap();
        assert_eq!(
            m.atoms(),
            &[Atom::new(0.0, 0, 0.25), Atom::new(1.0, 1, 0.75)]
        );
        assert!(mix(&a, &b, 1.5).is_err());
    }

    #[test]
    fn relabel_examples() {
        let cal = Pld::new([(0.3, 1, 0.3), (0.3, 0, 0.7)]).unwrap();
        assert!(cal.relabel_bernoulli().approx_eq(&cal, 1e-12));

        let r = almost_balanced(0.1).relabel_bernoulli();
        let expected =
            Pld::new([(0.4, 1, 0.2), (0.4, 0, 0.3), (0.6, 1, 0.3), (0.6, 0, 0.2)]).unwrap();
        assert!(r.approx_eq(&expected, 1e-12));
        assert!(r.is_calibrated(1e-9));

        let r = Pld::point(0.2, 1).unwrap().relabel_bernoulli();
        let expected = Pld::new([(0.2, 1, 0.2), (0.2, 0, 0.8)]).unwrap();
        assert!(r.approx_eq(&expected, 1e-12));
    }

    #[test]
    fn postprocessing_examples() {
        let ab = almost_balanced(0.1);
        assert_eq!(
            ab.apply_postprocessing(&PostProcessing::identity())
                .unwrap(),
            ab
        );

        let bad = Pld::new([(0.6, 0, 0.5), (0.4, 1, 0.5)]).unwrap();
        let good = Pld::new([(0.4, 0, 0.5), (0.6, 1, 0.5)]).unwrap();
        let flipped = bad
            .apply_postprocessing(&PostProcessing::one_minus())
            .unwrap();
        assert!(flipped.approx_eq(&good, 1e-12));

        let ones = Pld::point(1.0, 1).unwrap();
        let k = PostProcessing::constant(1.0).unwrap();
        assert_eq!(ones.apply_postprocessing(&k).unwrap(), ones);
    }
}
