//! Seeded Lloyd k-means with k-means++ initialization.
//!
//! Rows are visited in entity-id order, so the fitted centers do not depend
//! on the order in which rows were supplied. Centroid sums are reduced
//! sequentially in that order and restarts are seeded per stream, which makes
//! a fit bit-reproducible for a given seed regardless of thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }
}

/// Fitted centers plus the metadata needed to reuse them for assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub feature_schema: Vec<String>,
    pub seed: u64,
    /// Row-major `k x feature_schema.len()`.
    pub centers: Vec<f64>,
    pub inertia: f64,
    pub iterations_run: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.feature_schema.len()
    }

    pub fn center(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.centers[j * d..(j + 1) * d]
    }

    pub fn center_rows(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|j| self.center(j).to_vec()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        if model.k == 0 || model.centers.len() != model.k * model.dim() {
            return Err(Error::SchemaMismatch(format!(
                "model declares k = {} and {} features but carries {} center values",
                model.k,
                model.dim(),
                model.centers.len()
            )));
        }
        Ok(model)
    }
}

/// Cluster index per entity, in the row order of the matrix it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    ids: Vec<String>,
    labels: Vec<usize>,
}

impl Assignment {
    pub fn new(ids: Vec<String>, labels: Vec<usize>) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} labels",
                ids.len(),
                labels.len()
            )));
        }
        let unique: BTreeSet<&String> = ids.iter().collect();
        if unique.len() != ids.len() {
            return Err(Error::InvalidArgument("assignment ids must be unique".into()));
        }
        Ok(Self { ids, labels })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.ids.iter().map(String::as_str).zip(self.labels.iter().copied())
    }

    pub fn to_map(&self) -> BTreeMap<String, usize> {
        self.iter().map(|(id, c)| (id.to_string(), c)).collect()
    }

    /// Writes `entity_id,cluster` rows sorted by entity id.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["entity_id", "cluster"])?;
        for (id, c) in self.to_map() {
            wtr.write_record([id, c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["entity_id", "cluster"] {
            return Err(Error::SchemaMismatch(format!(
                "assignment CSV header must be `entity_id,cluster`, found `{}`",
                header.join(",")
            )));
        }
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            ids.push(record[0].to_string());
            labels.push(record[1].trim().parse().map_err(|_| Error::Parse {
                path: "assignments.csv".into(),
                line,
                message: format!("bad cluster index `{}`", &record[1]),
            })?);
        }
        Self::new(ids, labels)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ClusterModel,
    pub assignment: Assignment,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center by squared Euclidean distance; ties go to the lowest index.
pub(crate) fn nearest(centers: &[f64], dim: usize, row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks(dim.max(1)).enumerate() {
        let d = sq_dist(c, row);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Number of distinct rows, comparing bit patterns (with -0.0 folded to 0.0).
pub fn distinct_rows(matrix: &FeatureMatrix) -> usize {
    matrix
        .rows()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<BTreeSet<_>>()
        .len()
}

fn check_finite(matrix: &FeatureMatrix) -> Result<()> {
    for (i, row) in matrix.rows().enumerate() {
        if let Some(column) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                entity: matrix.ids()[i].clone(),
                column,
            });
        }
    }
    Ok(())
}

struct Run {
    centers: Vec<f64>,
    labels: Vec<usize>,
    inertia: f64,
    iterations: usize,
    trace: Vec<f64>,
}

/// Points rows in id order, flattened.
struct Points {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Points {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn kmeans_pp(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = points.dim;
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..points.n);
    centers.extend_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..points.n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            0
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centers.extend_from_slice(&c);
    }
    centers
}

fn assign_all(points: &Points, centers: &[f64]) -> (Vec<usize>, Vec<f64>) {
    (0..points.n)
        .into_par_iter()
        .map(|i| nearest(centers, points.dim, points.row(i)))
        .unzip()
}

/// Moves the center of each empty cluster onto the point farthest from its
/// own center (taken from a cluster with at least two members), then
/// reassigns every point. Never increases inertia.
fn repair_empty(points: &Points, centers: &mut [f64], labels: &mut Vec<usize>, dists: &mut Vec<f64>, k: usize) {
    let dim = points.dim;
    for _ in 0..=2 * k {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let far = (0..points.n)
            .filter(|&i| sizes[labels[i]] >= 2)
            .fold(None::<usize>, |best, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            })
            .expect("some cluster holds two points when another is empty");
        centers[empty * dim..(empty + 1) * dim].copy_from_slice(points.row(far));
        let (l, d) = assign_all(points, centers);
        *labels = l;
        *dists = d;
    }
}

fn lloyd(points: &Points, k: usize, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> Run {
    let dim = points.dim;
    let mut centers = kmeans_pp(points, k, rng);
    let (mut labels, mut dists) = assign_all(points, &centers);
    repair_empty(points, &mut centers, &mut labels, &mut dists, k);
    let mut trace = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            let n = counts[j] as f64;
            let new: Vec<f64> = sums[j * dim..(j + 1) * dim].iter().map(|s| s / n).collect();
            shift = shift.max(sq_dist(&new, &centers[j * dim..(j + 1) * dim]).sqrt());
            centers[j * dim..(j + 1) * dim].copy_from_slice(&new);
        }
        let (l, d) = assign_all(points, &centers);
        labels = l;
        dists = d;
        repair_empty(points, &mut centers, &mut labels, &mut dists, k);
        trace.push(dists.iter().sum());
        if shift < cfg.tol {
            break;
        }
    }
    Run {
        centers,
        labels,
        inertia: *trace.last().unwrap(),
        iterations,
        trace,
    }
}

/// Fits `cfg.k` clusters with `cfg.n_init` k-means++ restarts and keeps the
/// lowest-inertia run (ties go to the earliest restart).
pub fn kmeans_fit(matrix: &FeatureMatrix, cfg: &KMeansConfig) -> Result<FitResult> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if cfg.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    check_finite(matrix)?;
    let distinct = distinct_rows(matrix);
    if cfg.k > distinct {
        return Err(Error::TooManyClusters { k: cfg.k, distinct });
    }

    let mut order: Vec<usize> = (0..matrix.n_rows()).collect();
    order.sort_by(|&a, &b| matrix.ids()[a].cmp(&matrix.ids()[b]));
    let dim = matrix.n_cols();
    let points = Points {
        data: order.iter().flat_map(|&i| matrix.row(i).iter().copied()).collect(),
        n: order.len(),
        dim,
    };

    let runs: Vec<Run> = (0..cfg.n_init.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            lloyd(&points, cfg.k, cfg, &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart");

    let mut labels = vec![0usize; matrix.n_rows()];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = best.labels[pos];
    }
    let model = ClusterModel {
        k: cfg.k,
        feature_schema: matrix.columns().to_vec(),
        seed: cfg.seed,
        centers: best.centers,
        inertia: best.inertia,
        iterations_run: best.iterations,
        fingerprint: None,
    };
    Ok(FitResult {
        model,
        assignment: Assignment::new(matrix.ids().to_vec(), labels)?,
        inertia_trace: best.trace,
    })
}

/// Maps each row to its nearest center.
pub fn assign(model: &ClusterModel, matrix: &FeatureMatrix) -> Result<Assignment> {
    if matrix.columns() != model.feature_schema.as_slice() {
        return Err(Error::SchemaMismatch(format!(
            "model features [{}] vs matrix features [{}]",
            model.feature_schema.join(","),
            matrix.columns().join(",")
        )));
    }
    check_finite(matrix)?;
    let labels = (0..matrix.n_rows())
        .into_par_iter()
        .map(|i| nearest(&model.centers, model.dim(), matrix.row(i)).0)
        .collect();
    Assignment::new(matrix.ids().to_vec(), labels)
}
