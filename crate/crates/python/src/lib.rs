//! Python bindings. Heavy calls release the GIL.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use ssldet::config::RunConfig;
use ssldet::detector::{self, Detection, Stage};
use ssldet::evaluation::{self, Subset};
use ssldet::image::BBox;
use ssldet::linear_svm::{self, LinearModel, ModelKind};
use ssldet::sequence_io::{self, ImageSequence, Label};
use ssldet::ssl;
use ssldet::{Error, ErrorClass};

type Box4 = (i32, i32, i32, i32);
type Det = (usize, i32, i32, i32, i32, f64);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Usage => PyValueError::new_err(msg),
        ErrorClass::Data => PyIOError::new_err(msg),
        ErrorClass::Numeric => PyArithmeticError::new_err(msg),
    }
}

fn det_tuple(d: &Detection) -> Det {
    (d.frame_index, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.score)
}

fn det_from(t: &Det) -> Detection {
    Detection {
        frame_index: t.0,
        bbox: BBox::new(t.1, t.2, t.3, t.4),
        score: t.5,
        stage: Stage::Final,
    }
}

/// Run configuration. Build from TOML or take the defaults.
#[pyclass(name = "Config", module = "pyssldet", frozen)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml = None, overrides = Vec::new()))]
    fn new(toml: Option<&str>, overrides: Vec<String>) -> PyResult<Self> {
        let inner = RunConfig::from_toml_with_overrides(toml.unwrap_or(""), &overrides).map_err(to_py)?;
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: RunConfig::load(&path).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(to_py)
    }

    /// Number of neighbour scores the stacked model appends.
    fn neighbor_score_count(&self) -> usize {
        self.inner.neighborhood.score_count()
    }

    fn __repr__(&self) -> String {
        format!("Config(t={}, seed={})", self.inner.neighborhood.t, self.inner.synth.seed)
    }
}

/// An annotated greyscale sequence.
#[pyclass(name = "Sequence", module = "pyssldet", frozen)]
struct PySequence {
    inner: ImageSequence,
}

#[pymethods]
impl PySequence {
    #[staticmethod]
    fn load(py: Python<'_>, path: PathBuf) -> PyResult<Self> {
        let inner = py.detach(|| sequence_io::load_sequence(&path)).map_err(to_py)?;
        Ok(PySequence { inner })
    }

    fn save(&self, py: Python<'_>, path: PathBuf) -> PyResult<()> {
        py.detach(|| sequence_io::save_sequence(&self.inner, &path)).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    #[getter]
    fn size(&self) -> (usize, usize) {
        self.inner
            .frames
            .first()
            .map(|f| (f.width(), f.height()))
            .unwrap_or((0, 0))
    }

    /// Raw row-major pixels of one frame.
    fn frame_pixels(&self, index: usize) -> PyResult<Vec<u8>> {
        self.inner
            .frames
            .get(index)
            .map(|f| f.pixels().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("frame {index} out of range")))
    }

    /// `(frame_index, (x, y, w, h), label, occluded)` for every annotation.
    fn annotations(&self) -> Vec<(usize, Box4, &'static str, bool)> {
        self.inner
            .annotations
            .iter()
            .map(|a| {
                let b = a.bbox;
                (a.frame_index, (b.x, b.y, b.w, b.h), a.label.as_str(), a.occluded)
            })
            .collect()
    }

    fn pedestrian_count(&self) -> usize {
        self.inner
            .annotations
            .iter()
            .filter(|a| a.label == Label::Pedestrian)
            .count()
    }
}

/// A trained linear classifier, base or stacked.
#[pyclass(name = "Model", module = "pyssldet", frozen)]
struct PyModel {
    inner: LinearModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: sequence_io::load_model(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        sequence_io::save_model(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            ModelKind::Base => "base",
            ModelKind::Ssl => "ssl",
        }
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={}, dim={})", self.kind(), self.dim())
    }
}

/// Renders the configured synthetic scene and returns `(train, test)`.
#[pyfunction]
fn synth(py: Python<'_>, config: &PyConfig) -> PyResult<(PySequence, PySequence)> {
    let cfg = &config.inner;
    let sp = &cfg.splits;
    let (train, test) = py
        .detach(|| ssldet::synth::generate_splits(&cfg.synth, sp.train_frames, sp.gap, sp.test_frames))
        .map_err(to_py)?;
    Ok((PySequence { inner: train }, PySequence { inner: test }))
}

/// Trains the base classifier with hard-negative bootstrapping.
#[pyfunction]
fn train_base(py: Python<'_>, seq: &PySequence, config: &PyConfig) -> PyResult<PyModel> {
    let c = &config.inner;
    let (model, _) = py
        .detach(|| linear_svm::bootstrap_train(&seq.inner, &c.channels, &c.detector, &c.svm))
        .map_err(to_py)?;
    Ok(PyModel { inner: model })
}

/// Trains the stacked classifier, reusing `base` when given.
/// Returns `(base, ssl)`.
#[pyfunction]
#[pyo3(signature = (seq, config, base = None))]
fn train_ssl(py: Python<'_>, seq: &PySequence, config: &PyConfig, base: Option<&PyModel>) -> PyResult<(PyModel, PyModel)> {
    let c = &config.inner;
    let base = base.map(|m| m.inner.clone());
    let (base, ssl) = py
        .detach(|| match base {
            Some(b) => ssl::train_ssl_from_base(&seq.inner, &b, &c.detector, &c.svm, &c.neighborhood, &c.ssl)
                .map(|(s, _)| (b, s)),
            None => ssl::train_ssl(&seq.inner, &c.channels, &c.detector, &c.svm, &c.neighborhood, &c.ssl)
                .map(|m| (m.base, m.ssl)),
        })
        .map_err(to_py)?;
    Ok((PyModel { inner: base }, PyModel { inner: ssl }))
}

/// Runs the detector; without `ssl` this is the single-stage baseline.
/// Returns `(detections, stats)` with detections as
/// `(frame_index, x, y, w, h, score)`.
#[pyfunction]
#[pyo3(signature = (seq, base, config, ssl = None))]
fn detect(
    py: Python<'_>,
    seq: &PySequence,
    base: &PyModel,
    config: &PyConfig,
    ssl: Option<&PyModel>,
) -> PyResult<(Vec<Det>, (usize, usize, usize))> {
    let run = py
        .detach(|| detector::detect_sequence(&seq.inner, &base.inner, ssl.map(|m| &m.inner), &config.inner.detector))
        .map_err(to_py)?;
    let s = run.stats;
    Ok((
        run.detections.iter().map(det_tuple).collect(),
        (s.scored_windows, s.stage1_candidates, s.stage2_kept),
    ))
}

/// Evaluates detections against the sequence's annotations.
/// Returns `(lamr, [(threshold, fppi, miss_rate), ...])`.
#[pyfunction]
#[pyo3(signature = (detections, seq, config, subset = None))]
fn evaluate(
    detections: Vec<Det>,
    seq: &PySequence,
    config: &PyConfig,
    subset: Option<&str>,
) -> PyResult<(f64, Vec<(f64, f64, f64)>)> {
    let mut cfg = config.inner.eval;
    if let Some(s) = subset {
        cfg.subset = s.parse::<Subset>().map_err(to_py)?;
    }
    let dets: Vec<Detection> = detections.iter().map(det_from).collect();
    let e = evaluation::evaluate(&dets, &seq.inner.annotations, seq.inner.len(), &cfg).map_err(to_py)?;
    Ok((
        e.lamr,
        e.points.iter().map(|p| (p.threshold, p.fppi, p.miss_rate)).collect(),
    ))
}

/// Greedy non-maximum suppression over `(frame_index, x, y, w, h, score)`.
#[pyfunction]
#[pyo3(signature = (detections, iou = 0.5))]
fn nms(detections: Vec<Det>, iou: f64) -> Vec<Det> {
    let dets: Vec<Detection> = detections.iter().map(det_from).collect();
    detector::nms(&dets, iou).iter().map(det_tuple).collect()
}

/// Intersection over union of two `(x, y, w, h)` boxes.
#[pyfunction]
fn iou(a: Box4, b: Box4) -> f64 {
    BBox::new(a.0, a.1, a.2, a.3).iou(&BBox::new(b.0, b.1, b.2, b.3))
}

#[pymodule]
fn pyssldet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train_base, m)?)?;
    m.add_function(wrap_pyfunction!(train_ssl, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    Ok(())
}
