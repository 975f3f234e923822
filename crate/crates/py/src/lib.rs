//! Python bindings. Structured results cross the boundary as plain
//! dicts and lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use cogbias::extraction::ExtractionConfig;
use cogbias::gateway::{BiasProfile, ModelConfig, Simulator};
use cogbias::pipeline::{RunManifest, RunOptions};
use cogbias::scoring::{Classification, Dimension};
use cogbias::stats::DesignMatrix;
use cogbias::{AnswerChoice, PhraseLexicon, ScenarioInstance, TelerLevel, TemplateScenario};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn level(n: u8) -> PyResult<TelerLevel> {
    TelerLevel::new(n).ok_or_else(|| PyValueError::new_err(format!("level {n} is not in 1..=5")))
}

#[pyclass(name = "Template", module = "cogbias_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyTemplate {
    inner: TemplateScenario,
}

#[pymethods]
impl PyTemplate {
    #[staticmethod]
    fn parse(source: &str) -> PyResult<Self> {
        cogbias::parse_template(source)
            .map(|inner| PyTemplate { inner })
            .map_err(value_err)
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn bias(&self) -> &'static str {
        self.inner.bias.slug()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Template(id={:?}, bias={:?})", self.inner.id, self.inner.bias.slug())
    }
}

#[pyclass(name = "Lexicon", module = "cogbias_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLexicon {
    inner: PhraseLexicon,
}

#[pymethods]
impl PyLexicon {
    #[new]
    fn new(slots: BTreeMap<String, Vec<String>>) -> Self {
        PyLexicon {
            inner: PhraseLexicon::from_slots(slots),
        }
    }

    #[staticmethod]
    fn from_toml(source: &str) -> PyResult<Self> {
        PhraseLexicon::from_toml_str(source)
            .map(|inner| PyLexicon { inner })
            .map_err(value_err)
    }
}

#[pyclass(name = "Instance", module = "cogbias_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: ScenarioInstance,
}

#[pymethods]
impl PyInstance {
    #[getter]
    fn template_id(&self) -> &str {
        &self.inner.template_id
    }

    #[getter]
    fn instance_index(&self) -> usize {
        self.inner.instance_index
    }

    #[getter]
    fn body(&self) -> &str {
        &self.inner.resolved_body
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }
}

#[pyclass(name = "Prompt", module = "cogbias_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPrompt {
    inner: cogbias::Prompt,
}

#[pymethods]
impl PyPrompt {
    #[getter]
    fn text(&self) -> &str {
        &self.inner.text
    }

    #[getter]
    fn level(&self) -> u8 {
        self.inner.key.level.get()
    }

    #[getter]
    fn bias(&self) -> &'static str {
        self.inner.bias.slug()
    }

    #[getter]
    fn answers(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.answers)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Findings for a set of templates; an empty list means the corpus is clean.
#[pyfunction]
fn validate(templates: Vec<PyTemplate>, lexicon: &PyLexicon) -> Vec<String> {
    let templates: Vec<TemplateScenario> = templates.into_iter().map(|t| t.inner).collect();
    cogbias::validate_corpus(&templates, &lexicon.inner)
        .findings
        .iter()
        .map(ToString::to_string)
        .collect()
}

#[pyfunction]
fn fill(template: &PyTemplate, lexicon: &PyLexicon, base_seed: u64, k: usize) -> PyResult<Vec<PyInstance>> {
    cogbias::fill_template(&template.inner, &lexicon.inner, base_seed, k)
        .map(|v| v.into_iter().map(|inner| PyInstance { inner }).collect())
        .map_err(value_err)
}

#[pyfunction]
fn build_prompt(instance: &PyInstance, level_number: u8) -> PyResult<PyPrompt> {
    cogbias::build_prompt(&instance.inner, level(level_number)?)
        .map(|inner| PyPrompt { inner })
        .map_err(value_err)
}

#[pyfunction]
fn expand_prompts(instances: Vec<PyInstance>) -> PyResult<Vec<PyPrompt>> {
    let instances: Vec<ScenarioInstance> = instances.into_iter().map(|i| i.inner).collect();
    cogbias::expand_prompt_set(&instances)
        .map(|v| v.into_iter().map(|inner| PyPrompt { inner }).collect())
        .map_err(value_err)
}

/// `answers` is a list of `{"key", "text", "label"}` dicts.
#[pyfunction]
#[pyo3(signature = (response, answers, config_path = None))]
fn extract(
    py: Python<'_>,
    response: &str,
    answers: &Bound<'_, PyAny>,
    config_path: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let answers: Vec<AnswerChoice> = from_py(answers)?;
    let cfg = match config_path {
        Some(p) => ExtractionConfig::load(&p).map_err(value_err)?,
        None => ExtractionConfig::default(),
    };
    to_py(py, &cogbias::extract(response, &answers, &cfg))
}

#[pyfunction]
fn similarity(a: &str, b: &str) -> f64 {
    cogbias::similarity(a, b)
}

/// Resistance scores of classification dicts grouped by the named dimensions.
#[pyfunction]
fn resistance(py: Python<'_>, classifications: &Bound<'_, PyAny>, group_by: Vec<String>) -> PyResult<Py<PyAny>> {
    let cls: Vec<Classification> = from_py(classifications)?;
    let dims: Vec<Dimension> = group_by
        .iter()
        .map(|d| d.parse().map_err(value_err))
        .collect::<PyResult<_>>()?;
    to_py(py, &cogbias::resistance(&cls, &dims))
}

#[pyfunction]
fn f_tail(f: f64, df1: f64, df2: f64) -> PyResult<f64> {
    cogbias::stats::f_tail(f, df1, df2).map_err(value_err)
}

/// Least squares of `y` on the rows of `x` (include an intercept column
/// yourself).
#[pyfunction]
#[pyo3(signature = (x, y, columns = None))]
fn ols(py: Python<'_>, x: Vec<Vec<f64>>, y: Vec<f64>, columns: Option<Vec<String>>) -> PyResult<Py<PyAny>> {
    let p = x.first().map_or(0, Vec::len);
    let columns = columns.unwrap_or_else(|| (0..p).map(|j| format!("x{j}")).collect());
    let design = DesignMatrix::from_rows(columns, &x).map_err(value_err)?;
    to_py(py, &cogbias::stats::ols_fit(&design, &y).map_err(value_err)?)
}

#[pyclass(name = "Simulator", module = "cogbias_py", frozen)]
struct PySimulator {
    inner: Simulator,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (seed, profile_toml = None))]
    fn new(seed: u64, profile_toml: Option<&str>) -> PyResult<Self> {
        let profile = match profile_toml {
            Some(src) => BiasProfile::from_toml_str(src).map_err(value_err)?,
            None => BiasProfile::default(),
        };
        Ok(PySimulator {
            inner: Simulator::new(profile, seed),
        })
    }

    /// Intended outcome and response text for a prompt.
    fn respond(&self, prompt: &PyPrompt, model_id: &str, temperature: f64) -> (String, String) {
        let config = ModelConfig::new(model_id, "simulated", temperature);
        let (outcome, text) = self.inner.decide(&prompt.inner, &config);
        (format!("{outcome:?}").to_lowercase(), text)
    }
}

/// Every stage for a manifest; returns the summary counts.
#[pyfunction]
#[pyo3(signature = (manifest, simulate = true, resume = true))]
fn run_pipeline(py: Python<'_>, manifest: PathBuf, simulate: bool, resume: bool) -> PyResult<Py<PyAny>> {
    let m = RunManifest::load(&manifest).map_err(value_err)?;
    let opts = RunOptions {
        simulate,
        resume,
        ..Default::default()
    };
    let s = py
        .detach(|| cogbias::pipeline::cmd_pipeline(&m, &opts))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let summary = serde_json::json!({
        "templates": s.expand.templates,
        "instances": s.expand.instances,
        "prompts": s.expand.prompts,
        "submitted": s.run.submitted,
        "skipped": s.run.skipped,
        "failed": s.run.failed,
        "classified": s.classified,
    });
    to_py(py, &summary)
}

#[pymodule]
fn cogbias_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTemplate>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyPrompt>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(fill, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(expand_prompts, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(resistance, m)?)?;
    m.add_function(wrap_pyfunction!(f_tail, m)?)?;
    m.add_function(wrap_pyfunction!(ols, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
