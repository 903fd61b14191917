use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use genrekit::cues::count_summary;
use genrekit::eval::{self, evaluate_facet, FacetClassifier};
use genrekit::glm::FitOptions;
use genrekit::neural::{self, OutputKind};
use genrekit::pipeline::{self, run_experiments};
use genrekit::{Corpus, CueRegistry, Document, Facet, FeatureMatrix, Method, TrainOptions};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn registry(path: Option<PathBuf>) -> PyResult<CueRegistry> {
    match path {
        Some(p) => CueRegistry::load(&p).map_err(err),
        None => Ok(CueRegistry::default_registry()),
    }
}

fn facet(name: &str) -> PyResult<Facet> {
    name.parse().map_err(err)
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(err)
}

/// Words and sentence ranges (start, end word index) of `text`.
#[pyfunction]
fn tokenize(text: &str) -> (Vec<String>, Vec<(usize, usize)>) {
    let (words, sentences) = genrekit::tokenize(text);
    (words, sentences.into_iter().map(|r| (r.start, r.end)).collect())
}

#[pyfunction]
fn log_transform(count: f64) -> PyResult<f64> {
    genrekit::cues::log_transform(count).map_err(err)
}

/// W, S, C and T of `text`.
#[pyfunction]
fn counts(text: &str) -> (usize, usize, usize, usize) {
    let s = count_summary(&Document::new("text", text));
    (s.words, s.sentences, s.characters, s.types)
}

#[pyfunction]
#[pyo3(signature = (registry_path=None))]
fn cue_names(registry_path: Option<PathBuf>) -> PyResult<Vec<String>> {
    Ok(registry(registry_path)?.names().to_vec())
}

/// Log-transformed cue values of `text`, in registry order.
#[pyfunction]
#[pyo3(signature = (text, registry_path=None))]
fn extract(text: &str, registry_path: Option<PathBuf>) -> PyResult<Vec<(String, f64)>> {
    let v = genrekit::extract(&Document::new("text", text), &registry(registry_path)?);
    Ok(v.names.iter().cloned().zip(v.values).collect())
}

#[pyfunction]
fn binomial_tail(k: u64, n: u64, p0: f64) -> PyResult<f64> {
    genrekit::binomial_tail(k, n, p0).map_err(err)
}

#[pyfunction]
fn binomial_cdf(k: u64, n: u64, p0: f64) -> PyResult<f64> {
    genrekit::binomial_cdf(k, n, p0).map_err(err)
}

#[pyfunction]
fn cross_entropy(predicted: Vec<Vec<f64>>, actual: Vec<usize>) -> PyResult<f64> {
    genrekit::cross_entropy(&predicted, &actual).map_err(err)
}

/// Report for fixed gold and predicted levels, as JSON.
#[pyfunction]
fn report(facet_name: &str, train_counts: Vec<usize>, gold: Vec<usize>, predicted: Vec<usize>) -> PyResult<String> {
    let r = eval::build_report(facet(facet_name)?, &train_counts, &gold, &predicted, None).map_err(err)?;
    Ok(r.to_json())
}

#[pyclass(name = "LRModel", frozen)]
struct PyLRModel {
    inner: genrekit::LRModel,
}

#[pymethods]
impl PyLRModel {
    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    #[getter]
    fn weights(&self) -> BTreeMap<String, f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn selected(&self) -> Vec<String> {
        self.inner.selected.clone()
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    #[getter]
    fn aic(&self) -> f64 {
        self.inner.aic
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn predict_prob(&self, names: Vec<String>, values: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_prob(&names, &values).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "LRModel(selected={:?}, log_likelihood={}, aic={})",
            self.inner.selected, self.inner.log_likelihood, self.inner.aic
        )
    }
}

#[pyfunction]
fn fit_logistic(x: Vec<Vec<f64>>, y: Vec<f64>, names: Vec<String>) -> PyResult<PyLRModel> {
    let inner = genrekit::fit_logistic(&x, &y, &names, &FitOptions::default()).map_err(err)?;
    Ok(PyLRModel { inner })
}

#[pyfunction]
#[pyo3(signature = (x, y, names, start=None))]
fn backward_select(x: Vec<Vec<f64>>, y: Vec<f64>, names: Vec<String>, start: Option<Vec<String>>) -> PyResult<PyLRModel> {
    let start = start.unwrap_or_else(|| names.clone());
    let inner = genrekit::backward_select(&x, &y, &names, &start, &FitOptions::default()).map_err(err)?;
    Ok(PyLRModel { inner })
}

#[pyclass(name = "MLP", frozen)]
struct PyMLP {
    inner: genrekit::MLPModel,
}

#[pymethods]
impl PyMLP {
    /// Trains a perceptron on rows `x` with class indices `y`.
    #[staticmethod]
    #[pyo3(signature = (x, y, classes, hidden=false, epochs=2000, seed=0))]
    fn train(x: Vec<Vec<f64>>, y: Vec<usize>, classes: usize, hidden: bool, epochs: usize, seed: u64) -> PyResult<Self> {
        let inputs = x.first().map_or(0, Vec::len);
        let mut config = if hidden {
            genrekit::MLPConfig::three_layer(inputs, classes)
        } else {
            genrekit::MLPConfig::two_layer(inputs, classes)
        };
        config.epochs = epochs;
        config.seed = seed;
        let inner = neural::train(&x, &y, &config).map_err(err)?;
        Ok(PyMLP { inner })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict(&x).map_err(err)
    }

    fn classify(&self, x: Vec<f64>) -> PyResult<usize> {
        self.inner.classify(&x).map_err(err)
    }

    fn loss(&self, x: Vec<Vec<f64>>, y: Vec<usize>) -> f64 {
        self.inner.loss(&x, &y)
    }

    #[getter]
    fn softmax(&self) -> bool {
        self.inner.config.output_kind == OutputKind::Softmax
    }
}

#[pyclass(name = "Corpus", frozen)]
struct PyCorpus {
    inner: Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(root: PathBuf) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: genrekit::load_corpus(&root).map_err(err)?,
        })
    }

    /// Synthetic corpus from a JSON spec.
    #[staticmethod]
    #[pyo3(signature = (spec_json, seed=0))]
    fn synth(spec_json: &str, seed: u64) -> PyResult<Self> {
        let spec: genrekit::SynthSpec = serde_json::from_str(spec_json).map_err(err)?;
        Ok(PyCorpus {
            inner: genrekit::synth_corpus(&spec, seed).map_err(err)?,
        })
    }

    fn save(&self, root: PathBuf) -> PyResult<()> {
        self.inner.save(&root).map_err(err)
    }

    /// (train, eval) corpora with `per_cell` evaluation documents per label cell.
    fn split(&self, per_cell: usize, seed: u64) -> PyResult<(PyCorpus, PyCorpus)> {
        let (a, b) = genrekit::split_stratified(&self.inner, per_cell, seed).map_err(err)?;
        Ok((PyCorpus { inner: a }, PyCorpus { inner: b }))
    }

    fn ids(&self) -> Vec<String> {
        self.inner.documents.iter().map(|d| d.id.clone()).collect()
    }

    fn labels(&self, facet_name: &str) -> PyResult<Vec<Option<String>>> {
        let f = facet(facet_name)?;
        Ok(self
            .inner
            .documents
            .iter()
            .map(|d| {
                self.inner
                    .labels_of(&d.id)
                    .and_then(|l| l.level_name(f))
                    .map(str::to_string)
            })
            .collect())
    }

    /// Feature matrix as TSV.
    #[pyo3(signature = (registry_path=None))]
    fn features(&self, registry_path: Option<PathBuf>) -> PyResult<String> {
        Ok(FeatureMatrix::extract(&self.inner, &registry(registry_path)?).to_tsv())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Classifier", frozen)]
struct PyClassifier {
    inner: pipeline::Classifier,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (corpus, facet_name, method_name, seed=0, epochs=2000))]
    fn train(corpus: &PyCorpus, facet_name: &str, method_name: &str, seed: u64, epochs: usize) -> PyResult<Self> {
        let f = facet(facet_name)?;
        let opts = TrainOptions {
            seed,
            epochs,
            ..TrainOptions::default()
        };
        let docs = pipeline::labeled_for(&corpus.inner, f);
        let inner = pipeline::train_on_corpus(&docs, &CueRegistry::default_registry(), f, method(method_name)?, &opts)
            .map_err(err)?;
        Ok(PyClassifier { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyClassifier {
            inner: pipeline::Classifier::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Predicted level name for every document.
    fn classify(&self, corpus: &PyCorpus) -> PyResult<Vec<String>> {
        let features = FeatureMatrix::extract(&corpus.inner, &CueRegistry::default_registry());
        let levels = self.inner.levels();
        Ok(self
            .inner
            .classify(&features)
            .map_err(err)?
            .into_iter()
            .map(|l| levels[l].clone())
            .collect())
    }

    /// Evaluation report on `corpus`, as JSON.
    fn evaluate(&self, corpus: &PyCorpus) -> PyResult<String> {
        let docs = pipeline::labeled_for(&corpus.inner, self.inner.facet());
        let r = evaluate_facet(&self.inner, &docs, &CueRegistry::default_registry()).map_err(err)?;
        Ok(r.to_json())
    }
}

/// Trains and scores every facet/method pair on a stratified split; returns
/// the text report.
#[pyfunction]
#[pyo3(signature = (corpus, facets, methods, holdout=1, seed=0, epochs=2000))]
fn evaluate(
    corpus: &PyCorpus,
    facets: Vec<String>,
    methods: Vec<String>,
    holdout: usize,
    seed: u64,
    epochs: usize,
) -> PyResult<String> {
    let facets = facets.iter().map(|f| facet(f)).collect::<PyResult<Vec<_>>>()?;
    let methods = methods.iter().map(|m| method(m)).collect::<PyResult<Vec<_>>>()?;
    let opts = TrainOptions {
        seed,
        epochs,
        ..TrainOptions::default()
    };
    let runs = run_experiments(&corpus.inner, &CueRegistry::default_registry(), &facets, &methods, holdout, &opts)
        .map_err(err)?;
    let reports: Vec<_> = runs.into_iter().map(|e| e.report).collect();
    Ok(eval::render_text(&reports))
}

#[pymodule]
#[pyo3(name = "genrekit")]
fn genrekit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(log_transform, m)?)?;
    m.add_function(wrap_pyfunction!(counts, m)?)?;
    m.add_function(wrap_pyfunction!(cue_names, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_tail, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(backward_select, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PyLRModel>()?;
    m.add_class::<PyMLP>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyClassifier>()?;
    Ok(())
}
