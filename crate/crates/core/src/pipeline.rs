//! End-to-end RFM, purchased-product-structure and shopping-mission
//! segmentations, plus scoring of new data with a trained mission model.
//!
//! The mission segmentation runs in two stages: baskets are clustered on
//! their category mix and clipped value, then customers are clustered on the
//! share of their baskets that fell into each basket cluster.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{self, QuantileSpec};
use crate::kmeans::{self, distinct_rows, Assignment, ClusterModel, KMeansConfig};
use crate::matrix::FeatureMatrix;
use crate::txmodel::{build_histories, AnalysisWindow, Dataset};
use crate::validity;

/// Seed offset separating the customer stage from the basket stage.
pub const CUSTOMER_STAGE_SEED_OFFSET: u64 = 0x5EED_0000_0001;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub k: usize,
    pub n_entities: usize,
    pub inertia: Option<f64>,
    pub between_variance_ratio: Option<f64>,
    pub davies_bouldin: Option<f64>,
}

/// Assignment, cluster shares, center matrix and validity metrics of one
/// segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationReport {
    pub kind: String,
    pub assignment: Assignment,
    pub cluster_labels: Vec<String>,
    pub counts: Vec<usize>,
    pub shares: Vec<f64>,
    pub feature_names: Vec<String>,
    /// Clusters x features.
    pub centers: Vec<Vec<f64>>,
    pub metrics: ReportMetrics,
    /// Conditions worth surfacing to the analyst (degenerate fits, clamped k).
    pub notes: Vec<String>,
}

pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const SHARES_FILE: &str = "shares.csv";
pub const CENTERS_FILE: &str = "centers.csv";
pub const METRICS_FILE: &str = "metrics.json";

impl SegmentationReport {
    pub fn write_shares<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["cluster", "label", "count", "share"])?;
        for (j, label) in self.cluster_labels.iter().enumerate() {
            wtr.write_record([
                j.to_string(),
                label.clone(),
                self.counts[j].to_string(),
                self.shares[j].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_centers<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["cluster".to_string(), "label".to_string()];
        header.extend(self.feature_names.iter().cloned());
        wtr.write_record(&header)?;
        for (j, row) in self.centers.iter().enumerate() {
            let mut rec = vec![j.to_string(), self.cluster_labels[j].clone()];
            rec.extend(row.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn metrics_json(&self) -> Result<String> {
        let payload = serde_json::json!({
            "kind": self.kind,
            "metrics": self.metrics,
            "notes": self.notes,
        });
        Ok(serde_json::to_string_pretty(&payload)?)
    }

    /// Center matrix as a heatmap payload.
    pub fn centers_heatmap_json(&self) -> Result<String> {
        let payload = serde_json::json!({
            "row_labels": self.cluster_labels,
            "column_labels": self.feature_names,
            "values": self.centers,
        });
        Ok(serde_json::to_string_pretty(&payload)?)
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.assignment
            .write_csv(BufWriter::new(File::create(dir.join(ASSIGNMENTS_FILE))?))?;
        self.write_shares(BufWriter::new(File::create(dir.join(SHARES_FILE))?))?;
        self.write_centers(BufWriter::new(File::create(dir.join(CENTERS_FILE))?))?;
        std::fs::write(dir.join(METRICS_FILE), self.metrics_json()? + "\n")?;
        Ok(())
    }
}

/// Per-cluster counts, shares and mean feature vectors of `values` under `assignment`.
fn summarize(values: &FeatureMatrix, assignment: &Assignment, k: usize) -> (Vec<usize>, Vec<f64>, Vec<Vec<f64>>) {
    let map = assignment.to_map();
    let d = values.n_cols();
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0; d]; k];
    for (id, row) in values.ids().iter().zip(values.rows()) {
        let c = map[id];
        counts[c] += 1;
        sums[c].iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let n = assignment.len().max(1) as f64;
    let shares = counts.iter().map(|&c| c as f64 / n).collect();
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (counts, shares, sums)
}

/// Fits k-means, lowering `k` to the number of distinct rows when needed.
fn fit_clamped(
    matrix: &FeatureMatrix,
    cfg: KMeansConfig,
    notes: &mut Vec<String>,
    what: &str,
) -> Result<kmeans::FitResult> {
    let distinct = distinct_rows(matrix);
    let mut cfg = cfg;
    if distinct == 0 {
        return Err(Error::InvalidArgument(format!("no {what} to cluster")));
    }
    if cfg.k > distinct {
        notes.push(format!(
            "{what}: requested k = {} but only {distinct} distinct feature vectors exist; fitted k = {distinct}",
            cfg.k
        ));
        cfg.k = distinct;
    }
    kmeans::kmeans_fit(matrix, &cfg)
}

fn metrics_for(matrix: &FeatureMatrix, fit: &kmeans::FitResult, notes: &mut Vec<String>) -> Result<ReportMetrics> {
    let between = validity::between_variance_ratio(matrix, &fit.assignment, &fit.model)?;
    let db = if fit.model.k >= 2 {
        match validity::davies_bouldin(matrix, &fit.assignment, &fit.model) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("Davies-Bouldin not available: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(ReportMetrics {
        k: fit.model.k,
        n_entities: matrix.n_rows(),
        inertia: Some(fit.model.inertia),
        between_variance_ratio: Some(between),
        davies_bouldin: db,
    })
}

fn argmax(v: &[f64]) -> Option<(usize, f64)> {
    v.iter().copied().enumerate().fold(None, |best, (i, x)| match best {
        Some((_, b)) if b >= x => best,
        _ => Some((i, x)),
    })
}

/// `"<code><nn> <description>"`, with the description taken from the
/// dominant entry of `shares`, or `general` when nothing exceeds `threshold`.
fn dominant_label(
    code: char,
    j: usize,
    shares: &[f64],
    names: &[String],
    threshold: f64,
    prefix: &str,
    general: &str,
) -> String {
    match argmax(shares) {
        Some((i, v)) if v > threshold => format!("{code}{:02} {prefix}{}", j + 1, names[i]),
        _ => format!("{code}{:02} {general}", j + 1),
    }
}

// ---------------------------------------------------------------- RFM

/// Expert-defined bin edges per RFM feature. A value `v` falls in bin
/// `#{edges <= v}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpertBounds {
    pub recency: Vec<f64>,
    pub frequency: Vec<f64>,
    pub monetary: Vec<f64>,
}

impl ExpertBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, edges) in [
            ("recency", &self.recency),
            ("frequency", &self.frequency),
            ("monetary", &self.monetary),
        ] {
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Validation(format!(
                    "{name} bin edges must be finite and strictly increasing"
                )));
            }
        }
        Ok(())
    }

    /// Reads a `feature,edge` CSV; edges are taken in file order.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != ["feature", "edge"] {
            return Err(Error::SchemaMismatch(
                "bounds file header must be `feature,edge`".into(),
            ));
        }
        let mut bounds = Self::default();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let fail = |message: String| Error::Parse {
                path: "bounds.csv".into(),
                line,
                message,
            };
            let edge: f64 = record
                .get(1)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| fail("bad edge value".into()))?;
            match record[0].trim() {
                "recency" | "recency_days" => bounds.recency.push(edge),
                "frequency" => bounds.frequency.push(edge),
                "monetary" => bounds.monetary.push(edge),
                other => return Err(fail(format!("unknown feature `{other}`"))),
            }
        }
        bounds.validate()?;
        Ok(bounds)
    }

    fn bins(&self) -> [usize; 3] {
        [
            self.recency.len() + 1,
            self.frequency.len() + 1,
            self.monetary.len() + 1,
        ]
    }

    pub fn n_segments(&self) -> usize {
        self.bins().iter().product()
    }

    pub fn segment(&self, v: &features::RfmVector) -> usize {
        let bin = |edges: &[f64], x: f64| edges.iter().filter(|&&e| e <= x).count();
        let [_, nf, nm] = self.bins();
        (bin(&self.recency, v.recency_days) * nf + bin(&self.frequency, v.frequency)) * nm
            + bin(&self.monetary, v.monetary)
    }
}

#[derive(Debug, Clone)]
pub enum RfmMode {
    KMeans { k: usize },
    Expert(ExpertBounds),
}

#[derive(Debug, Clone)]
pub struct RfmOutcome {
    pub report: SegmentationReport,
    /// Fitted on the (optionally standardized) features; `None` in expert mode.
    pub model: Option<ClusterModel>,
    pub features: FeatureMatrix,
}

pub fn run_rfm(
    dataset: &Dataset,
    window: &AnalysisWindow,
    mode: &RfmMode,
    seed: u64,
    cfg: &Config,
) -> Result<RfmOutcome> {
    let histories = build_histories(dataset);
    let rfm = features::rfm_features(&histories, window);
    let raw = features::rfm_matrix(&rfm);
    let mut notes = Vec::new();
    let (assignment, k, model, metrics) = match mode {
        RfmMode::KMeans { k } => {
            let fit_on = if cfg.features.standardize_rfm {
                raw.standardized()
            } else {
                raw.clone()
            };
            let fit = fit_clamped(&fit_on, cfg.kmeans(*k, seed), &mut notes, "customers")?;
            let metrics = metrics_for(&fit_on, &fit, &mut notes)?;
            (fit.assignment, fit.model.k, Some(fit.model), metrics)
        }
        RfmMode::Expert(bounds) => {
            bounds.validate()?;
            let labels = rfm.values().map(|v| bounds.segment(v)).collect();
            let assignment = Assignment::new(rfm.keys().cloned().collect(), labels)?;
            let k = bounds.n_segments();
            let metrics = ReportMetrics {
                k,
                n_entities: assignment.len(),
                ..ReportMetrics::default()
            };
            (assignment, k, None, metrics)
        }
    };
    let (counts, shares, centers) = summarize(&raw, &assignment, k);
    let cluster_labels = (0..k).map(|j| format!("R{:02}", j + 1)).collect();
    Ok(RfmOutcome {
        report: SegmentationReport {
            kind: "rfm".into(),
            assignment,
            cluster_labels,
            counts,
            shares,
            feature_names: raw.columns().to_vec(),
            centers,
            metrics,
            notes,
        },
        model,
        features: raw,
    })
}

// ---------------------------------------------------------------- PPS

#[derive(Debug, Clone)]
pub struct PpsOutcome {
    pub report: SegmentationReport,
    pub model: ClusterModel,
    pub features: FeatureMatrix,
}

fn category_labels(dataset: &Dataset) -> Vec<String> {
    dataset.categories().iter().map(|c| c.label.clone()).collect()
}

pub fn run_pps(dataset: &Dataset, k: usize, seed: u64, cfg: &Config) -> Result<PpsOutcome> {
    let histories = build_histories(dataset);
    let ids = dataset.category_ids();
    let matrix = features::pps_matrix(&features::pps_features(&histories, &ids), &ids);
    let mut notes = Vec::new();
    let mut fit = fit_clamped(&matrix, cfg.kmeans(k, seed), &mut notes, "customers")?;
    fit.model.fingerprint = Some(dataset.fingerprint());
    let metrics = metrics_for(&matrix, &fit, &mut notes)?;
    let (counts, shares, centers) = summarize(&matrix, &fit.assignment, fit.model.k);
    let names = category_labels(dataset);
    let threshold = cfg.report.dominance_threshold;
    let cluster_labels = centers
        .iter()
        .enumerate()
        .map(|(j, c)| dominant_label('P', j, c, &names, threshold, "Specialized -- ", "General"))
        .collect();
    Ok(PpsOutcome {
        report: SegmentationReport {
            kind: "pps".into(),
            assignment: fit.assignment,
            cluster_labels,
            counts,
            shares,
            feature_names: names,
            centers,
            metrics,
            notes,
        },
        model: fit.model,
        features: matrix,
    })
}

// ---------------------------------------------------------------- SM

/// Everything needed to score new receipts with a trained two-stage model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmPipelineModel {
    pub q95: QuantileSpec,
    pub value_weight: f64,
    pub category_schema: Vec<String>,
    pub basket_model: ClusterModel,
    pub customer_model: ClusterModel,
    pub basket_cluster_labels: Vec<String>,
    pub customer_cluster_labels: Vec<String>,
    pub fingerprint: String,
}

impl SmPipelineModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.customer_model.dim() != self.basket_model.k {
            return Err(Error::SchemaMismatch(format!(
                "customer model has {} features but the basket model has {} clusters",
                self.customer_model.dim(),
                self.basket_model.k
            )));
        }
        if self.basket_model.dim() != self.category_schema.len() + 1 {
            return Err(Error::SchemaMismatch(
                "basket model does not match the category schema".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SmOutcome {
    pub model: SmPipelineModel,
    pub basket_report: SegmentationReport,
    pub customer_report: SegmentationReport,
    pub basket_features: FeatureMatrix,
    pub customer_features: FeatureMatrix,
}

fn assert_unit_rows(matrix: &FeatureMatrix) -> Result<()> {
    for (id, row) in matrix.ids().iter().zip(matrix.rows()) {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|v| *v < 0.0) {
            return Err(Error::Validation(format!(
                "customer `{id}` archetype shares sum to {s}"
            )));
        }
    }
    Ok(())
}

fn basket_matrix(dataset: &Dataset, schema: &[String], q: QuantileSpec, weight: f64) -> FeatureMatrix {
    features::basket_sm_matrix(
        &features::basket_sm_features(dataset.baskets(), schema, q),
        schema,
        weight,
    )
}

fn customer_matrix(dataset: &Dataset, basket_assignment: &Assignment, k_baskets: usize) -> Result<FeatureMatrix> {
    let histories = build_histories(dataset);
    let f = features::customer_sm_features(&histories, &basket_assignment.to_map(), k_baskets)?;
    Ok(features::customer_sm_matrix(&f, k_baskets))
}

pub fn run_sm(dataset: &Dataset, k_baskets: usize, k_customers: usize, seed: u64, cfg: &Config) -> Result<SmOutcome> {
    let schema = dataset.category_ids();
    let weight = cfg.features.value_weight;
    let fingerprint = dataset.fingerprint();

    // Stage 1: baskets.
    let q = features::compute_q95(dataset.baskets())?;
    let bm = basket_matrix(dataset, &schema, q, weight);
    let mut basket_notes = Vec::new();
    let mut bfit = kmeans::kmeans_fit(&bm, &cfg.kmeans(k_baskets, seed))?;
    bfit.model.fingerprint = Some(fingerprint.clone());
    let bmetrics = metrics_for(&bm, &bfit, &mut basket_notes)?;
    let (bcounts, bshares, bcenters) = summarize(&bm, &bfit.assignment, bfit.model.k);
    let mut names = category_labels(dataset);
    let threshold = cfg.report.dominance_threshold;
    let basket_labels: Vec<String> = bcenters
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let ratios = &c[..schema.len()];
            let size = if c[schema.len()] / weight >= 0.5 {
                "Big"
            } else {
                "Small"
            };
            dominant_label(
                'B',
                j,
                ratios,
                &names,
                threshold,
                "Specialized -- ",
                &format!("General -- {size}"),
            )
        })
        .collect();
    names.push("value".into());

    // Stage 2: customers.
    let cm = customer_matrix(dataset, &bfit.assignment, bfit.model.k)?;
    assert_unit_rows(&cm)?;
    debug_assert_eq!(cm.n_cols(), bfit.model.k);
    let mut customer_notes = Vec::new();
    if bfit.model.k == 1 {
        customer_notes.push("single basket cluster: every customer has the same archetype vector".into());
    }
    let cseed = seed.wrapping_add(CUSTOMER_STAGE_SEED_OFFSET);
    let mut cfit = fit_clamped(&cm, cfg.kmeans(k_customers, cseed), &mut customer_notes, "customers")?;
    cfit.model.fingerprint = Some(fingerprint.clone());
    let cmetrics = metrics_for(&cm, &cfit, &mut customer_notes)?;
    let (ccounts, cshares, ccenters) = summarize(&cm, &cfit.assignment, cfit.model.k);
    let archetype_names: Vec<String> = basket_labels
        .iter()
        .map(|l| {
            l.split_once(' ')
                .map_or(l.as_str(), |(_, rest)| rest)
                .replace("Specialized -- ", "Focused -- ")
        })
        .collect();
    let customer_labels: Vec<String> = ccenters
        .iter()
        .enumerate()
        .map(|(j, c)| dominant_label('M', j, c, &archetype_names, threshold, "", "General"))
        .collect();

    let model = SmPipelineModel {
        q95: q,
        value_weight: weight,
        category_schema: schema,
        basket_model: bfit.model,
        customer_model: cfit.model,
        basket_cluster_labels: basket_labels.clone(),
        customer_cluster_labels: customer_labels.clone(),
        fingerprint,
    };
    model.check()?;
    Ok(SmOutcome {
        model,
        basket_report: SegmentationReport {
            kind: "sm_basket".into(),
            assignment: bfit.assignment,
            cluster_labels: basket_labels.clone(),
            counts: bcounts,
            shares: bshares,
            feature_names: names,
            centers: bcenters,
            metrics: bmetrics,
            notes: basket_notes,
        },
        customer_report: SegmentationReport {
            kind: "sm_customer".into(),
            assignment: cfit.assignment,
            cluster_labels: customer_labels,
            counts: ccounts,
            shares: cshares,
            feature_names: basket_labels,
            centers: ccenters,
            metrics: cmetrics,
            notes: customer_notes,
        },
        basket_features: bm,
        customer_features: cm,
    })
}

#[derive(Debug, Clone)]
pub struct ScoreResult {
    pub basket_assignment: Assignment,
    pub customer_assignment: Assignment,
}

/// Assigns baskets and customers of `dataset` with a trained model. The
/// model's q95 is reused as-is.
pub fn score(model: &SmPipelineModel, dataset: &Dataset) -> Result<ScoreResult> {
    model.check()?;
    let known: BTreeSet<&str> = model.category_schema.iter().map(String::as_str).collect();
    let unknown: Vec<String> = dataset
        .baskets()
        .iter()
        .flat_map(|b| b.lines.iter())
        .filter(|l| !known.contains(l.category_id.as_str()))
        .map(|l| l.category_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::SchemaMismatch(format!(
            "categories not in the model schema: {}",
            unknown.join(", ")
        )));
    }
    let bm = basket_matrix(dataset, &model.category_schema, model.q95, model.value_weight);
    let basket_assignment = kmeans::assign(&model.basket_model, &bm)?;
    let cm = customer_matrix(dataset, &basket_assignment, model.basket_model.k)?;
    let customer_assignment = kmeans::assign(&model.customer_model, &cm)?;
    Ok(ScoreResult {
        basket_assignment,
        customer_assignment,
    })
}

/// Cluster names keyed by index, for relabeling crosstabs.
pub fn label_map(labels: &[String]) -> BTreeMap<usize, String> {
    labels.iter().cloned().enumerate().collect()
}
