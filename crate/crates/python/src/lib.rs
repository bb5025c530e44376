use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trajsafe_core::anchors::{fit_anchors as fit, AnchorSet, TrajectoryCorpus};
use trajsafe_core::closed_loop::{EpisodeResult, InfractionEvent, InfractionKind, Terminal};
use trajsafe_core::config::RunConfig;
use trajsafe_core::geometry::{obb_overlap as overlap, OrientedBox, Pose2, Vec2};
use trajsafe_core::metrics::{self, MetricConfig, SubscoreVector};
use trajsafe_core::scenario_gen::{self, GenSpec, Template};
use trajsafe_core::world::{self, load_scenario_file};

fn to_py(e: trajsafe_core::Error) -> PyErr {
    if e.is_invalid_input() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

#[pyclass(frozen, name = "Scenario", module = "trajsafe")]
struct PyScenario {
    inner: world::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: world::load_scenario(text.as_bytes()).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> String {
        world::save_scenario(&self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn horizon_steps(&self) -> usize {
        self.inner.horizon_steps
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn num_agents(&self) -> usize {
        self.inner.agents.len()
    }

    /// Expert poses as `(x, y, heading)` tuples, or None.
    #[getter]
    fn expert(&self) -> Option<Vec<(f64, f64, f64)>> {
        self.inner
            .expert
            .as_ref()
            .map(|e| e.iter().map(|p| (p.x, p.y, p.heading())).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, horizon_steps={}, agents={})",
            self.inner.name,
            self.inner.horizon_steps,
            self.inner.agents.len()
        )
    }
}

#[pyclass(frozen, name = "AnchorSet", module = "trajsafe")]
struct PyAnchorSet {
    inner: AnchorSet,
}

#[pymethods]
impl PyAnchorSet {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyAnchorSet {
            inner: AnchorSet::from_text(text).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn anchors(&self) -> Vec<Vec<(f64, f64)>> {
        self.inner
            .anchors()
            .iter()
            .map(|a| a.iter().map(|p| (p.x, p.y)).collect())
            .collect()
    }
}

#[pyfunction]
fn load_scenario(path: &str) -> PyResult<PyScenario> {
    Ok(PyScenario {
        inner: load_scenario_file(path).map_err(to_py)?,
    })
}

/// Generates `count` scenarios of the named template.
#[pyfunction]
#[pyo3(signature = (template, seed, count, horizon_steps=None, dt=None))]
fn generate(template: &str, seed: u64, count: usize, horizon_steps: Option<usize>, dt: Option<f64>) -> PyResult<Vec<PyScenario>> {
    let t: Template = template.parse().map_err(to_py)?;
    let mut spec = GenSpec::new(t, seed, count);
    if let Some(h) = horizon_steps {
        spec.horizon_steps = h;
    }
    if let Some(dt) = dt {
        spec.dt = dt;
    }
    let out = scenario_gen::generate(&spec).map_err(to_py)?;
    Ok(out.into_iter().map(|inner| PyScenario { inner }).collect())
}

/// Expert trajectories of `scenarios` in each ego frame.
#[pyfunction]
fn expert_corpus(scenarios: Vec<PyRef<'_, PyScenario>>) -> PyResult<Vec<Vec<(f64, f64)>>> {
    let owned: Vec<world::Scenario> = scenarios.iter().map(|s| s.inner.clone()).collect();
    let c = scenario_gen::corpus_from(&owned).map_err(to_py)?;
    Ok(c.trajectories().iter().map(|t| t.iter().map(|p| (p.x, p.y)).collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (corpus, k, seed=0))]
fn fit_anchors(py: Python<'_>, corpus: Vec<Vec<(f64, f64)>>, k: usize, seed: u64) -> PyResult<PyAnchorSet> {
    let trajs = corpus
        .into_iter()
        .map(|t| t.into_iter().map(|(x, y)| Vec2::new(x, y)).collect())
        .collect();
    let corpus = TrajectoryCorpus::new(trajs).map_err(to_py)?;
    let inner = py.detach(|| fit(&corpus, k, seed)).map_err(to_py)?;
    Ok(PyAnchorSet { inner })
}

/// Runs both selection stages; returns the full evaluation as a dict.
/// `config` is the text of a run configuration file.
#[pyfunction]
#[pyo3(signature = (scenario, anchors, config=None))]
fn evaluate<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    anchors: &PyAnchorSet,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = match config {
        Some(text) => RunConfig::from_toml(text, "config").map_err(to_py)?,
        None => RunConfig::default(),
    };
    let ev = py
        .detach(|| trajsafe_core::pipeline::evaluate(&scenario.inner, &anchors.inner, &cfg.pipeline))
        .map_err(to_py)?;
    let json = serde_json::to_string(&ev).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (json,))
}

fn subscores(d: Option<HashMap<String, f64>>) -> PyResult<SubscoreVector> {
    let mut s = SubscoreVector::ONES;
    for (k, v) in d.unwrap_or_default() {
        let slot = match k.as_str() {
            "nc" => &mut s.nc,
            "dac" => &mut s.dac,
            "ddc" => &mut s.ddc,
            "tlc" => &mut s.tlc,
            "ep" => &mut s.ep,
            "ttc" => &mut s.ttc,
            "c" => &mut s.c,
            "lk" => &mut s.lk,
            "hc" => &mut s.hc,
            "ec" => &mut s.ec,
            other => return Err(PyValueError::new_err(format!("unknown subscore {other:?}"))),
        };
        *slot = v;
    }
    Ok(s)
}

/// PDMS of a subscore dict; missing subscores count as 1.
#[pyfunction]
#[pyo3(signature = (sub=None))]
fn pdms(sub: Option<HashMap<String, f64>>) -> PyResult<f64> {
    Ok(metrics::pdms(&subscores(sub)?, &MetricConfig::default()))
}

#[pyfunction]
#[pyo3(signature = (pred=None, human=None))]
fn epdms(pred: Option<HashMap<String, f64>>, human: Option<HashMap<String, f64>>) -> PyResult<f64> {
    Ok(metrics::epdms(&subscores(pred)?, &subscores(human)?, &MetricConfig::default()))
}

/// Boxes are `(x, y, heading, length, width)`.
#[pyfunction]
fn obb_overlap(a: (f64, f64, f64, f64, f64), b: (f64, f64, f64, f64, f64)) -> bool {
    let mk = |(x, y, h, l, w): (f64, f64, f64, f64, f64)| OrientedBox::from_dims(Pose2::new(x, y, h), l, w);
    overlap(&mk(a), &mk(b))
}

/// Mean of `rc * prod(penalties)` over `(rc, [infraction kind, ...])` pairs.
#[pyfunction]
fn driving_score(routes: Vec<(f64, Vec<String>)>) -> PyResult<f64> {
    let results = routes
        .into_iter()
        .enumerate()
        .map(|(i, (rc, kinds))| {
            let events = kinds
                .iter()
                .map(|k| {
                    serde_json::from_value::<InfractionKind>(serde_json::Value::from(k.as_str()))
                        .map(|kind| InfractionEvent::new(kind, 0))
                        .map_err(|_| PyValueError::new_err(format!("unknown infraction kind {k:?}")))
                })
                .collect::<PyResult<Vec<_>>>()?;
            Ok(EpisodeResult::new(format!("route_{i}"), rc, events, Terminal::Goal, 0))
        })
        .collect::<PyResult<Vec<_>>>()?;
    trajsafe_core::closed_loop::driving_score(&results).map_err(to_py)
}

#[pymodule]
fn trajsafe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyAnchorSet>()?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(expert_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(fit_anchors, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(pdms, m)?)?;
    m.add_function(wrap_pyfunction!(epdms, m)?)?;
    m.add_function(wrap_pyfunction!(obb_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(driving_score, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
