//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists built from the Rust types' serde form.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;
use vulnclass::classify::{ClassifyRequest, Classifier as CoreClassifier};
use vulnclass::eval;
use vulnclass::model::{self, DualLogits};
use vulnclass::taxonomy::{self, SeverityIndex, TypeVector, NUM_TYPES};

create_exception!(vulnclass_py, VulnclassError, PyException, "Error raised by the vulnclass core; the message starts with its kind.");

fn to_py(e: vulnclass::Error) -> PyErr {
    VulnclassError::new_err(format!("{}: {e}", e.kind()))
}

/// Converts any serialisable value through JSON into native Python objects.
fn native<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| VulnclassError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn severities(values: &[usize]) -> PyResult<Vec<SeverityIndex>> {
    values.iter().map(|&v| SeverityIndex::new(v).map_err(to_py)).collect()
}

fn type_vectors(rows: &[Vec<bool>]) -> PyResult<Vec<TypeVector>> {
    rows.iter()
        .map(|r| {
            let bits: [bool; NUM_TYPES] = r
                .as_slice()
                .try_into()
                .map_err(|_| VulnclassError::new_err(format!("ShapeError: expected {NUM_TYPES} type bits, got {}", r.len())))?;
            Ok(TypeVector::from_bits(bits))
        })
        .collect()
}

fn logits_rows(rows: &[Vec<f64>]) -> PyResult<Vec<DualLogits>> {
    rows.iter().map(|r| DualLogits::from_row(r).map_err(to_py)).collect()
}

/// Maps an NVD CVSS v3 severity label to its class index 0..=3.
#[pyfunction]
fn map_severity(label: &str) -> PyResult<usize> {
    taxonomy::map_severity(label).map(SeverityIndex::index).map_err(to_py)
}

#[pyfunction]
fn severity_names() -> Vec<&'static str> {
    taxonomy::SEVERITY_NAMES.to_vec()
}

#[pyfunction]
fn type_names() -> Vec<String> {
    taxonomy::default_taxonomy().names().to_vec()
}

/// Multi-hot type bits for CWE ids under the default taxonomy, plus the ids it does not know.
#[pyfunction]
fn map_cwes(cwe_ids: Vec<String>) -> (Vec<bool>, Vec<String>) {
    let mapping = taxonomy::map_cwes_to_types(&cwe_ids, &taxonomy::default_taxonomy());
    (mapping.types.bits().to_vec(), mapping.unmapped)
}

/// Parses an NVD JSON 1.1 feed (plain or gzip) into `(records, stats)`.
#[pyfunction]
fn parse_feed(py: Python<'_>, path: PathBuf) -> PyResult<(Bound<'_, PyAny>, Bound<'_, PyAny>)> {
    let (records, stats) = py.detach(|| vulnclass::ingest::parse_feed(&path)).map_err(to_py)?;
    Ok((native(py, &records)?, native(py, &stats)?))
}

/// Mean severity cross-entropy and mean per-type binary cross-entropy over a
/// batch of 14-wide logit rows; returns `(severity, types, total)`.
#[pyfunction]
fn combined_loss(logits: Vec<Vec<f64>>, severity: Vec<usize>, types: Vec<Vec<bool>>) -> PyResult<(f64, f64, f64)> {
    let l = model::combined_loss(&logits_rows(&logits)?, &severities(&severity)?, &type_vectors(&types)?).map_err(to_py)?;
    Ok((l.severity_loss, l.type_loss, l.total))
}

#[pyfunction]
#[pyo3(signature = (logits, threshold = 0.5))]
fn decode(py: Python<'_>, logits: Vec<f64>, threshold: f64) -> PyResult<Bound<'_, PyAny>> {
    let row = DualLogits::from_row(&logits).map_err(to_py)?;
    native(py, &model::decode(&row, threshold))
}

#[pyfunction]
fn severity_metrics(py: Python<'_>, truth: Vec<usize>, pred: Vec<usize>) -> PyResult<Bound<'_, PyAny>> {
    let report = eval::severity_metrics(&severities(&truth)?, &severities(&pred)?).map_err(to_py)?;
    native(py, &report)
}

#[pyfunction]
fn type_metrics(
    py: Python<'_>,
    truth: Vec<Vec<bool>>,
    pred: Vec<Vec<bool>>,
    probs: Vec<[f64; NUM_TYPES]>,
) -> PyResult<Bound<'_, PyAny>> {
    let report = eval::type_metrics(&type_vectors(&truth)?, &type_vectors(&pred)?, &probs).map_err(to_py)?;
    native(py, &report)
}

/// A trained model loaded from a directory written by `vulnclass train`.
#[pyclass(name = "Classifier", frozen)]
struct PyClassifier {
    inner: CoreClassifier,
}

#[pymethods]
impl PyClassifier {
    #[new]
    #[pyo3(signature = (model_dir, threshold = None))]
    fn new(py: Python<'_>, model_dir: PathBuf, threshold: Option<f64>) -> PyResult<Self> {
        let inner = py.detach(|| CoreClassifier::load(&model_dir)).map_err(to_py)?;
        let inner = match threshold {
            Some(t) => inner.with_threshold(t).map_err(to_py)?,
            None => inner,
        };
        Ok(PyClassifier { inner })
    }

    #[getter]
    fn model_version(&self) -> String {
        self.inner.model_version().to_string()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }

    #[getter]
    fn type_names(&self) -> Vec<String> {
        self.inner.type_names().to_vec()
    }

    /// Same payload as `POST /api/v1/classify`.
    #[pyo3(signature = (description, threshold = None))]
    fn classify<'py>(&self, py: Python<'py>, description: String, threshold: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        let request = ClassifyRequest { description, threshold };
        let response = py.detach(|| self.inner.classify(&request)).map_err(to_py)?;
        native(py, &response)
    }
}

#[pymodule]
fn vulnclass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VulnclassError", m.py().get_type::<VulnclassError>())?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(map_severity, m)?)?;
    m.add_function(wrap_pyfunction!(severity_names, m)?)?;
    m.add_function(wrap_pyfunction!(type_names, m)?)?;
    m.add_function(wrap_pyfunction!(map_cwes, m)?)?;
    m.add_function(wrap_pyfunction!(parse_feed, m)?)?;
    m.add_function(wrap_pyfunction!(combined_loss, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(severity_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(type_metrics, m)?)?;
    Ok(())
}
