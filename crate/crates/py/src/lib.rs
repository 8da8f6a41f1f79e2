//! Python bindings: PLDs, proper losses, post-processings, the calibration
//! measures, omniprediction regret, constructions and the sampling
//! experiments. Library errors surface as `calib.CalibError`.

use std::path::PathBuf;

use calib_core::constructions::by_name;
use calib_core::experiments;
use calib_core::io;
use calib_core::losses::{self, VComponent};
use calib_core::metrics;
use calib_core::omni::{self, OmniReport};
use calib_core::{smooth, transport, OmniConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(calib, CalibError, PyException);

fn wrap<T>(r: calib_core::Result<T>) -> PyResult<T> {
    r.map_err(|e| CalibError::new_err(e.to_string()))
}

/// A finite prediction-label distribution, stored canonically.
#[pyclass(module = "calib", frozen)]
struct Pld {
    inner: calib_core::Pld,
}

#[pymethods]
impl Pld {
    /// Builds from `(p, y, mass)` triples; duplicates merge and masses must
    /// sum to 1.
    #[new]
    fn new(atoms: Vec<(f64, u8, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(calib_core::Pld::new(atoms))?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(io::pld_from_json(text))?,
        })
    }

    fn to_json(&self) -> String {
        io::pld_to_json(&self.inner)
    }

    fn atoms(&self) -> Vec<(f64, u8, f64)> {
        self.inner
            .atoms()
            .iter()
            .map(|a| (a.p, a.y, a.mass))
            .collect()
    }

    fn tau(&self) -> f64 {
        self.inner.tau()
    }

    fn ece(&self) -> f64 {
        self.inner.ece()
    }

    fn is_calibrated(&self, tol: f64) -> bool {
        self.inner.is_calibrated(tol)
    }

    /// The calibrated PLD with the same prediction marginal.
    fn relabel_bernoulli(&self) -> Self {
        Self {
            inner: self.inner.relabel_bernoulli(),
        }
    }

    fn apply_postprocessing(&self, kappa: &PostProcessing) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(self.inner.apply_postprocessing(&kappa.inner))?,
        })
    }

    /// Same labels, with predictions and masses within `tol`.
    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.inner.approx_eq(&other.inner, tol)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Pld({:?})", self.atoms())
    }
}

/// A proper loss given as a nonnegative mixture of V-shaped losses plus an
/// affine term.
#[pyclass(module = "calib", frozen)]
struct VMixtureLoss {
    inner: losses::VMixtureLoss,
}

#[pymethods]
impl VMixtureLoss {
    /// `components` are `(v, lambda)` pairs.
    #[new]
    #[pyo3(signature = (components, a = 0.0, b = 0.0))]
    fn new(components: Vec<(f64, f64)>, a: f64, b: f64) -> PyResult<Self> {
        let comps = components
            .into_iter()
            .map(|(v, lambda)| VComponent { v, lambda })
            .collect();
        Ok(Self {
            inner: wrap(losses::VMixtureLoss::new(comps, a, b))?,
        })
    }

    #[staticmethod]
    fn v_shaped(v: f64) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(losses::VMixtureLoss::v_shaped(v))?,
        })
    }

    #[staticmethod]
    fn zero_one() -> Self {
        Self {
            inner: losses::VMixtureLoss::zero_one(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(io::loss_from_json(text))?,
        })
    }

    fn to_json(&self) -> String {
        io::loss_to_json(&self.inner)
    }

    fn eval(&self, p: f64, y: u8) -> f64 {
        self.inner.eval(p, y)
    }

    fn total_lambda(&self) -> f64 {
        self.inner.total_lambda()
    }
}

/// A piecewise-linear map from predictions to predictions.
#[pyclass(module = "calib", frozen)]
struct PostProcessing {
    inner: losses::PostProcessing,
}

#[pymethods]
impl PostProcessing {
    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: losses::PostProcessing::identity(),
        }
    }

    #[staticmethod]
    fn constant(c: f64) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(losses::PostProcessing::constant(c))?,
        })
    }

    /// Step function taking `values[i]` on `[breaks[i-1], breaks[i])`.
    #[staticmethod]
    fn step(breaks: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(losses::PostProcessing::step(&breaks, &values))?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: wrap(io::postprocessing_from_json(text))?,
        })
    }

    fn to_json(&self) -> String {
        io::postprocessing_to_json(&self.inner)
    }

    fn eval(&self, p: f64) -> f64 {
        self.inner.eval(p)
    }
}

#[pyfunction]
fn smce(pld: &Pld) -> PyResult<f64> {
    Ok(wrap(metrics::smce(&pld.inner))?.0)
}

#[pyfunction]
#[pyo3(signature = (pld, h = 1e-3))]
fn demc(pld: &Pld, h: f64) -> PyResult<f64> {
    Ok(wrap(metrics::demc(&pld.inner, h))?.value)
}

#[pyfunction]
#[pyo3(signature = (pld, h = 1e-3))]
fn ldce(pld: &Pld, h: f64) -> PyResult<f64> {
    wrap(metrics::ldce(&pld.inner, h))
}

#[pyfunction]
fn dce_marginal_preserving(pld: &Pld) -> PyResult<f64> {
    wrap(metrics::dce_marginal_preserving(&pld.inner))
}

/// Exact upper distance to calibration and an optimal post-processing.
#[pyfunction]
fn udce(pld: &Pld) -> PyResult<(f64, PostProcessing)> {
    let (v, kappa) = wrap(metrics::udce_exact(&pld.inner))?;
    Ok((v, PostProcessing { inner: kappa }))
}

/// A coupling as `(i, j, mass)` triples over two atom lists.
type Coupling = Vec<(usize, usize, f64)>;

/// Earth mover's distance and the coupling as `(i, j, mass)` triples over
/// the atom lists.
#[pyfunction]
#[pyo3(signature = (mu, nu, label_preserving = false))]
fn wasserstein(mu: &Pld, nu: &Pld, label_preserving: bool) -> PyResult<(f64, Coupling)> {
    let (w, plan) = if label_preserving {
        wrap(transport::wasserstein_label_preserving(
            &mu.inner, &nu.inner,
        ))?
    } else {
        wrap(transport::wasserstein(&mu.inner, &nu.inner))?
    };
    Ok((w, plan.entries))
}

#[pyfunction]
fn expected_loss(pld: &Pld, loss: &VMixtureLoss) -> f64 {
    losses::expected_loss(&pld.inner, &loss.inner)
}

/// Exact expected loss of `clip(p + z)` with `z` uniform on `[-sigma, sigma]`.
#[pyfunction]
fn expected_loss_smoothed(pld: &Pld, loss: &VMixtureLoss, sigma: f64) -> PyResult<f64> {
    Ok(losses::expected_loss_smoothed(
        &wrap(smooth(&pld.inner, sigma))?,
        &loss.inner,
    ))
}

fn report_dict<'py>(py: Python<'py>, r: &OmniReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("lhs", r.lhs)?;
    d.set_item("rhs", r.rhs)?;
    d.set_item("regret", r.regret)?;
    d.set_item("smce", r.smce)?;
    d.set_item("w", r.w)?;
    d.set_item("sigma", r.sigma)?;
    d.set_item("bound", r.bound)?;
    d.set_item("ratio", r.ratio)?;
    Ok(d)
}

/// Regret of smoothed `mu` against smoothed `nu` post-processed by `kappa`.
#[pyfunction]
fn omni_regret<'py>(
    py: Python<'py>,
    mu: &Pld,
    nu: &Pld,
    loss: &VMixtureLoss,
    kappa: &PostProcessing,
    sigma: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = wrap(omni::omni_regret(
        &mu.inner,
        &nu.inner,
        &loss.inner,
        &kappa.inner,
        sigma,
        &OmniConfig::default(),
    ))?;
    report_dict(py, &r)
}

/// Regret of smoothed `mu` against a calibrated, unsmoothed `nu`.
#[pyfunction]
fn omni_regret_calibrated<'py>(
    py: Python<'py>,
    mu: &Pld,
    nu: &Pld,
    loss: &VMixtureLoss,
    sigma: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = wrap(omni::omni_regret_calibrated(
        &mu.inner,
        &nu.inner,
        &loss.inner,
        sigma,
        &OmniConfig::default(),
    ))?;
    report_dict(py, &r)
}

/// Regret of smoothed `pld` against its best post-processing, with that
/// post-processing.
#[pyfunction]
fn best_post_regret(pld: &Pld, loss: &VMixtureLoss, sigma: f64) -> PyResult<(f64, PostProcessing)> {
    let spld = wrap(smooth(&pld.inner, sigma))?;
    let (v, kappa) = omni::best_post_regret(&spld, &loss.inner);
    Ok((v, PostProcessing { inner: kappa }))
}

/// Builds a named construction and returns one dict per output with its
/// name, PLD, task (as JSON, or None) and expected values.
#[pyfunction]
#[pyo3(signature = (name, eps, sigma = None, k = None, seed = 0))]
fn construct<'py>(
    py: Python<'py>,
    name: &str,
    eps: f64,
    sigma: Option<f64>,
    k: Option<usize>,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    wrap(by_name(name, eps, sigma, k, seed))?
        .into_iter()
        .map(|o| {
            let d = PyDict::new(py);
            d.set_item("name", &o.name)?;
            d.set_item(
                "pld",
                Pld {
                    inner: o.pld.clone(),
                },
            )?;
            d.set_item("task_json", o.task.as_ref().map(io::task_to_json))?;
            let expected = PyDict::new(py);
            for (key, e) in &o.expected {
                expected.set_item(key, e.value)?;
            }
            d.set_item("expected", expected)?;
            Ok(d)
        })
        .collect()
}

/// Writes a named construction and its manifest into `out_dir`; returns the
/// paths written.
#[pyfunction]
#[pyo3(signature = (name, eps, out_dir, sigma = None, k = None, seed = 0))]
fn write_construction(
    name: &str,
    eps: f64,
    out_dir: PathBuf,
    sigma: Option<f64>,
    k: Option<usize>,
    seed: u64,
) -> PyResult<Vec<PathBuf>> {
    let outputs = wrap(by_name(name, eps, sigma, k, seed))?;
    let mut files = Vec::new();
    for o in &outputs {
        files.extend(wrap(io::write_construction(&out_dir, o))?);
    }
    let manifest = out_dir.join("expected.json");
    wrap(io::write_file(&manifest, &io::expected_manifest(&outputs)))?;
    files.push(manifest);
    Ok(files)
}

#[pyfunction]
#[pyo3(signature = (pld, n, seed = 0))]
fn sample(pld: &Pld, n: usize, seed: u64) -> PyResult<Vec<(f64, u8)>> {
    Ok(wrap(experiments::sample(&pld.inner, n, seed))?.draws)
}

#[pyfunction]
fn smce_estimate(draws: Vec<(f64, u8)>) -> PyResult<f64> {
    let set = experiments::SampleSet {
        draws,
        seed: 0,
        source: "python".into(),
    };
    wrap(experiments::smce_estimate(&set))
}

/// Runs the collision tester; returns a dict with advantage, collision
/// rate, trial count and the confidence half-width.
#[pyfunction]
#[pyo3(signature = (eps, k, s, trials, seed = 0))]
fn udce_distinguish<'py>(
    py: Python<'py>,
    eps: f64,
    k: usize,
    s: usize,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = wrap(experiments::udce_distinguish_experiment(
        eps, k, s, trials, seed,
    ))?;
    let d = PyDict::new(py);
    d.set_item("advantage", r.advantage)?;
    d.set_item("collision_rate", r.collision_rate)?;
    d.set_item("trials", r.trials)?;
    d.set_item("ci_halfwidth", r.ci_halfwidth)?;
    Ok(d)
}

#[pymodule]
fn calib(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CalibError", m.py().get_type::<CalibError>())?;
    m.add_class::<Pld>()?;
    m.add_class::<VMixtureLoss>()?;
    m.add_class::<PostProcessing>()?;
    m.add_function(wrap_pyfunction!(smce, m)?)?;
    m.add_function(wrap_pyfunction!(demc, m)?)?;
    m.add_function(wrap_pyfunction!(ldce, m)?)?;
    m.add_function(wrap_pyfunction!(dce_marginal_preserving, m)?)?;
    m.add_function(wrap_pyfunction!(udce, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(expected_loss, m)?)?;
    m.add_function(wrap_pyfunction!(expected_loss_smoothed, m)?)?;
    m.add_function(wrap_pyfunction!(omni_regret, m)?)?;
    m.add_function(wrap_pyfunction!(omni_regret_calibrated, m)?)?;
    m.add_function(wrap_pyfunction!(best_post_regret, m)?)?;
    m.add_function(wrap_pyfunction!(construct, m)?)?;
    m.add_function(wrap_pyfunction!(write_construction, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(smce_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(udce_distinguish, m)?)?;
    Ok(())
}
