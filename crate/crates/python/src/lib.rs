//! Python bindings: datasets, the three segmentations, k-means and the
//! comparison metrics. Assignments cross the boundary as `dict[str, int]`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use shopseg::pipeline::{self, SegmentationReport, SmPipelineModel};
use shopseg::syngen::{self, GeneratorConfig};
use shopseg::{features, kmeans, txmodel, validity, Assignment, Config, FeatureMatrix, KMeansConfig};

fn err(e: shopseg::Error) -> PyErr {
    match e {
        shopseg::Error::Io(_) | shopseg::Error::Csv(_) | shopseg::Error::Json(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_assignment(map: BTreeMap<String, usize>) -> PyResult<Assignment> {
    let (ids, labels) = map.into_iter().unzip();
    Assignment::new(ids, labels).map_err(err)
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    let ids = (0..rows.len()).map(|i| format!("{i:08}")).collect();
    let d = rows.first().map_or(0, Vec::len);
    FeatureMatrix::new(ids, (0..d).map(|j| format!("x{j}")).collect(), rows).map_err(err)
}

/// Receipts ingested for one analysis window.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: shopseg::Dataset,
    window: txmodel::AnalysisWindow,
}

#[pymethods]
impl PyDataset {
    /// Reads `receipts` and `categories` CSVs; dates are `YYYY-MM-DD`.
    #[staticmethod]
    fn load(receipts: PathBuf, categories: PathBuf, window_start: &str, window_end: &str) -> PyResult<Self> {
        let parse = |s: &str| {
            chrono_date(s).ok_or_else(|| PyValueError::new_err(format!("bad date `{s}`, expected YYYY-MM-DD")))
        };
        let window = txmodel::AnalysisWindow::new(parse(window_start)?, parse(window_end)?).map_err(err)?;
        let inner = shopseg::ingest_receipts(&receipts, &categories, window).map_err(err)?;
        Ok(Self { inner, window })
    }

    #[getter]
    fn n_baskets(&self) -> usize {
        self.inner.baskets().len()
    }

    #[getter]
    fn n_customers(&self) -> usize {
        shopseg::build_histories(&self.inner).len()
    }

    #[getter]
    fn category_ids(&self) -> Vec<String> {
        self.inner.category_ids()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    /// Basket values in currency units.
    fn basket_values(&self) -> Vec<f64> {
        self.inner.baskets().iter().map(|b| b.value().to_f64()).collect()
    }
}

fn chrono_date(s: &str) -> Option<chrono::NaiveDate> {
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// A fitted k-means model.
#[pyclass(name = "ClusterModel", frozen)]
struct PyClusterModel {
    inner: shopseg::ClusterModel,
}

#[pymethods]
impl PyClusterModel {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn centers(&self) -> Vec<Vec<f64>> {
        self.inner.center_rows()
    }

    #[getter]
    fn inertia(&self) -> f64 {
        self.inner.inertia
    }

    /// Nearest-center labels for `rows`, in row order.
    fn assign(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let mut model = self.inner.clone();
        let m = to_matrix(rows)?;
        model.feature_schema = m.columns().to_vec();
        let a = kmeans::assign(&model, &m).map_err(err)?;
        Ok(a.labels().to_vec())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: shopseg::ClusterModel::from_json(text).map_err(err)?,
        })
    }
}

/// Fits k-means with k-means++ restarts. Returns the model and the labels of
/// `rows` in row order.
#[pyfunction]
#[pyo3(signature = (rows, k, seed=0, n_init=10, max_iter=300, tol=1e-6))]
fn kmeans_fit(
    rows: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
    n_init: usize,
    max_iter: usize,
    tol: f64,
) -> PyResult<(PyClusterModel, Vec<usize>)> {
    let m = to_matrix(rows)?;
    let cfg = KMeansConfig {
        n_init,
        max_iter,
        tol,
        ..KMeansConfig::new(k, seed)
    };
    let fit = shopseg::kmeans_fit(&m, &cfg).map_err(err)?;
    Ok((PyClusterModel { inner: fit.model }, fit.assignment.labels().to_vec()))
}

fn model_and_assignment(
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    model: &PyClusterModel,
) -> PyResult<(FeatureMatrix, Assignment, shopseg::ClusterModel)> {
    let m = to_matrix(rows)?;
    let a = Assignment::new(m.ids().to_vec(), labels).map_err(err)?;
    let mut inner = model.inner.clone();
    inner.feature_schema = m.columns().to_vec();
    Ok((m, a, inner))
}

#[pyfunction]
fn davies_bouldin(rows: Vec<Vec<f64>>, labels: Vec<usize>, model: &PyClusterModel) -> PyResult<f64> {
    let (m, a, inner) = model_and_assignment(rows, labels, model)?;
    shopseg::davies_bouldin(&m, &a, &inner).map_err(err)
}

#[pyfunction]
fn between_variance_ratio(rows: Vec<Vec<f64>>, labels: Vec<usize>, model: &PyClusterModel) -> PyResult<f64> {
    let (m, a, inner) = model_and_assignment(rows, labels, model)?;
    shopseg::between_variance_ratio(&m, &a, &inner).map_err(err)
}

/// Share of entities whose cluster in `first` agrees with the dominant
/// `second` cluster inside it. Not symmetric.
#[pyfunction]
fn purity(first: BTreeMap<String, usize>, second: BTreeMap<String, usize>) -> PyResult<f64> {
    shopseg::purity(&to_assignment(first)?, &to_assignment(second)?).map_err(err)
}

/// `(row_labels, column_labels, values)`.
type CrosstabTuple = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

/// Row-normalized crosstab as `(row_labels, column_labels, values)`.
#[pyfunction]
fn crosstab(first: BTreeMap<String, usize>, second: BTreeMap<String, usize>) -> PyResult<CrosstabTuple> {
    let ct = validity::crosstab(&to_assignment(first)?, &to_assignment(second)?).map_err(err)?;
    Ok((ct.row_labels, ct.column_labels, ct.values))
}

/// 95% quantile with linear interpolation; needs at least 20 values.
#[pyfunction]
fn compute_q95(values: Vec<f64>) -> PyResult<f64> {
    Ok(features::compute_q95_values(&values).map_err(err)?.q95)
}

/// Summary of one segmentation.
#[pyclass(name = "Segmentation", frozen)]
struct PySegmentation {
    #[pyo3(get)]
    assignment: BTreeMap<String, usize>,
    #[pyo3(get)]
    labels: Vec<String>,
    #[pyo3(get)]
    shares: Vec<f64>,
    #[pyo3(get)]
    centers: Vec<Vec<f64>>,
    #[pyo3(get)]
    feature_names: Vec<String>,
    #[pyo3(get)]
    notes: Vec<String>,
}

impl From<SegmentationReport> for PySegmentation {
    fn from(r: SegmentationReport) -> Self {
        Self {
            assignment: r.assignment.to_map(),
            labels: r.cluster_labels,
            shares: r.shares,
            centers: r.centers,
            feature_names: r.feature_names,
            notes: r.notes,
        }
    }
}

/// Trained two-stage shopping-mission model.
#[pyclass(name = "SmModel", frozen)]
struct PySmModel {
    inner: SmPipelineModel,
}

#[pymethods]
impl PySmModel {
    #[getter]
    fn q95(&self) -> f64 {
        self.inner.q95.q95
    }

    /// Returns `(basket_assignment, customer_assignment)` for `dataset`.
    fn score(&self, dataset: &PyDataset) -> PyResult<(BTreeMap<String, usize>, BTreeMap<String, usize>)> {
        let s = shopseg::score(&self.inner, &dataset.inner).map_err(err)?;
        Ok((s.basket_assignment.to_map(), s.customer_assignment.to_map()))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: SmPipelineModel::from_json(text).map_err(err)?,
        })
    }
}

/// Returns `(model, basket_segmentation, customer_segmentation)`.
#[pyfunction]
#[pyo3(signature = (dataset, k_basket, k_customer, seed=0))]
fn run_sm(
    dataset: &PyDataset,
    k_basket: usize,
    k_customer: usize,
    seed: u64,
) -> PyResult<(PySmModel, PySegmentation, PySegmentation)> {
    let out = shopseg::run_sm(&dataset.inner, k_basket, k_customer, seed, &Config::default()).map_err(err)?;
    Ok((
        PySmModel { inner: out.model },
        out.basket_report.into(),
        out.customer_report.into(),
    ))
}

#[pyfunction]
#[pyo3(signature = (dataset, k, seed=0))]
fn run_pps(dataset: &PyDataset, k: usize, seed: u64) -> PyResult<PySegmentation> {
    let out = shopseg::run_pps(&dataset.inner, k, seed, &Config::default()).map_err(err)?;
    Ok(out.report.into())
}

/// k-means RFM segmentation on standardized features.
#[pyfunction]
#[pyo3(signature = (dataset, k, seed=0))]
fn run_rfm(dataset: &PyDataset, k: usize, seed: u64) -> PyResult<PySegmentation> {
    let mode = pipeline::RfmMode::KMeans { k };
    let out = shopseg::run_rfm(&dataset.inner, &dataset.window, &mode, seed, &Config::default()).map_err(err)?;
    Ok(out.report.into())
}

/// Writes a synthetic dataset with planted ground truth to `out_dir` using
/// the built-in generator configuration. Returns the number of baskets.
#[pyfunction]
#[pyo3(signature = (out_dir, n_customers=1000, seed=42))]
fn generate(out_dir: PathBuf, n_customers: usize, seed: u64) -> PyResult<usize> {
    let cfg = GeneratorConfig {
        n_customers,
        seed,
        ..GeneratorConfig::default()
    };
    let data = syngen::generate(&cfg).map_err(err)?;
    data.write_to_dir(&out_dir).map_err(err)?;
    Ok(data.baskets.len())
}

/// Reads one label column of a ground-truth CSV as an assignment.
#[pyfunction]
fn read_truth(path: PathBuf, column: &str) -> PyResult<BTreeMap<String, usize>> {
    Ok(syngen::read_truth_labels(&path, column).map_err(err)?.to_map())
}

#[pymodule]
fn shopseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyClusterModel>()?;
    m.add_class::<PySegmentation>()?;
    m.add_class::<PySmModel>()?;
    m.add_function(wrap_pyfunction!(kmeans_fit, m)?)?;
    m.add_function(wrap_pyfunction!(davies_bouldin, m)?)?;
    m.add_function(wrap_pyfunction!(between_variance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(purity, m)?)?;
    m.add_function(wrap_pyfunction!(crosstab, m)?)?;
    m.add_function(wrap_pyfunction!(compute_q95, m)?)?;
    m.add_function(wrap_pyfunction!(run_sm, m)?)?;
    m.add_function(wrap_pyfunction!(run_pps, m)?)?;
    m.add_function(wrap_pyfunction!(run_rfm, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(read_truth, m)?)?;
    Ok(())
}
