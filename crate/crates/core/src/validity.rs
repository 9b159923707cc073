//! Cluster-count selection statistics and cross-segmentation comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans_fit, sq_dist, Assignment, ClusterModel, KMeansConfig};
use crate::matrix::FeatureMatrix;

/// Total sum of squares about the global mean split into within-cluster and
/// between-cluster parts (both taken about the cluster means of the assignment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub total_ss: f64,
    pub within_ss: f64,
    pub between_ss: f64,
}

/// Labels aligned with the matrix rows.
fn aligned_labels(matrix: &FeatureMatrix, assignment: &Assignment) -> Result<Vec<usize>> {
    if assignment.ids() == matrix.ids() {
        return Ok(assignment.labels().to_vec());
    }
    let map = assignment.to_map();
    let labels: Option<Vec<usize>> = matrix.ids().iter().map(|id| map.get(id).copied()).collect();
    match labels {
        Some(l) if map.len() == matrix.n_rows() => Ok(l),
        _ => {
            let a: BTreeSet<&str> = assignment.ids().iter().map(String::as_str).collect();
            let b: BTreeSet<&str> = matrix.ids().iter().map(String::as_str).collect();
            Err(Error::MismatchedEntities {
                difference: a.symmetric_difference(&b).count(),
            })
        }
    }
}

fn check_model(matrix: &FeatureMatrix, model: &ClusterModel, labels: &[usize]) -> Result<()> {
    if model.dim() != matrix.n_cols() {
        return Err(Error::SchemaMismatch(format!(
            "model has {} features, matrix has {}",
            model.dim(),
            matrix.n_cols()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= model.k) {
        return Err(Error::InvalidArgument(format!(
            "cluster index {l} out of range for k = {}",
            model.k
        )));
    }
    Ok(())
}

fn cluster_means(matrix: &FeatureMatrix, labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = matrix.n_cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in matrix.rows().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

pub fn variance_decomposition(matrix: &FeatureMatrix, assignment: &Assignment) -> Result<VarianceDecomposition> {
    let labels = aligned_labels(matrix, assignment)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let n = matrix.n_rows();
    let d = matrix.n_cols();
    let mut global = vec![0.0; d];
    for row in matrix.rows() {
        global.iter_mut().zip(row).for_each(|(g, v)| *g += v);
    }
    global.iter_mut().for_each(|g| *g /= n.max(1) as f64);
    let (means, counts) = cluster_means(matrix, &labels, k);
    let total_ss = matrix.rows().map(|r| sq_dist(r, &global)).sum();
    let within_ss = matrix.rows().zip(&labels).map(|(r, &l)| sq_dist(r, &means[l])).sum();
    let between_ss = means
        .iter()
        .zip(&counts)
        .map(|(m, &c)| c as f64 * sq_dist(m, &global))
        .sum();
    Ok(VarianceDecomposition {
        total_ss,
        within_ss,
        between_ss,
    })
}

/// `1 - within_ss / total_ss`. A dataset with no spread yields 0.
pub fn between_variance_ratio(matrix: &FeatureMatrix, assignment: &Assignment, model: &ClusterModel) -> Result<f64> {
    let labels = aligned_labels(matrix, assignment)?;
    check_model(matrix, model, &labels)?;
    let v = variance_decomposition(matrix, assignment)?;
    if v.total_ss <= 0.0 {
        log::warn!("total sum of squares is zero; between-cluster variance ratio reported as 0");
        return Ok(0.0);
    }
    Ok((1.0 - v.within_ss / v.total_ss).clamp(0.0, 1.0))
}

/// Davies-Bouldin index with mean Euclidean distance to the model center as
/// the cluster dispersion. Lower is better.
pub fn davies_bouldin(matrix: &FeatureMatrix, assignment: &Assignment, model: &ClusterModel) -> Result<f64> {
    let labels = aligned_labels(matrix, assignment)?;
    check_model(matrix, model, &labels)?;
    let k = model.k;
    if k < 2 {
        return Err(Error::InvalidArgument(
            "Davies-Bouldin needs at least 2 clusters".into(),
        ));
    }
    let mut spread = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in matrix.rows().zip(&labels) {
        counts[l] += 1;
        spread[l] += sq_dist(row, model.center(l)).sqrt();
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("cluster {empty} is empty")));
    }
    spread.iter_mut().zip(&counts).for_each(|(s, &c)| *s /= c as f64);
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = sq_dist(model.center(i), model.center(j)).sqrt();
            if d == 0.0 {
                return Err(Error::CoincidentCenters(i.min(j), i.max(j)));
            }
            worst = worst.max((spread[i] + spread[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    DbMin,
    VarianceElbow,
    ReportOnly,
}

impl std::str::FromStr for SelectionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db_min" => Ok(Self::DbMin),
            "variance_elbow" => Ok(Self::VarianceElbow),
            "report_only" => Ok(Self::ReportOnly),
            other => Err(Error::InvalidArgument(format!("unknown selection policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub inertia: f64,
    pub between_variance_ratio: f64,
    pub davies_bouldin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepResult {
    pub rows: Vec<KSweepRow>,
    pub policy: SelectionPolicy,
    /// `None` under [`SelectionPolicy::ReportOnly`].
    pub recommended: Option<usize>,
}

impl KSweepResult {
    pub fn db_minimum(&self) -> Option<usize> {
        self.rows
            .iter()
            .fold(None::<&KSweepRow>, |best, r| match best {
                Some(b) if b.davies_bouldin <= r.davies_bouldin => Some(b),
                _ => Some(r),
            })
            .map(|r| r.k)
    }

    /// The k after which the gain in between-cluster variance ratio drops the most.
    pub fn variance_elbow(&self) -> Option<usize> {
        if self.rows.len() < 3 {
            return self.db_minimum();
        }
        let r: Vec<f64> = self.rows.iter().map(|r| r.between_variance_ratio).collect();
        (1..r.len() - 1)
            .map(|i| (i, (r[i] - r[i - 1]) - (r[i + 1] - r[i])))
            .fold(None::<(usize, f64)>, |best, (i, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((i, s)),
            })
            .map(|(i, _)| self.rows[i].k)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "inertia", "between_variance_ratio", "davies_bouldin"])?;
        for r in &self.rows {
            wtr.write_record([
                r.k.to_string(),
                r.inertia.to_string(),
                r.between_variance_ratio.to_string(),
                r.davies_bouldin.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Fits every k in `k_min..=k_max` (seed `base.seed + k`) and tabulates the
/// selection statistics. The full table is always returned.
pub fn select_k(
    matrix: &FeatureMatrix,
    k_min: usize,
    k_max: usize,
    base: &KMeansConfig,
    policy: SelectionPolicy,
) -> Result<KSweepResult> {
    if k_min < 2 || k_max < k_min || k_max + 1 > matrix.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "k range [{k_min}, {k_max}] must lie within [2, {}]",
            matrix.n_rows().saturating_sub(1)
        )));
    }
    let rows = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let cfg = KMeansConfig {
                k,
                seed: base.seed.wrapping_add(k as u64),
                ..*base
            };
            let fit = kmeans_fit(matrix, &cfg)?;
            Ok(KSweepRow {
                k,
                inertia: fit.model.inertia,
                between_variance_ratio: between_variance_ratio(matrix, &fit.assignment, &fit.model)?,
                davies_bouldin: davies_bouldin(matrix, &fit.assignment, &fit.model)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sweep = KSweepResult {
        rows,
        policy,
        recommended: None,
    };
    sweep.recommended = match policy {
        SelectionPolicy::DbMin => sweep.db_minimum(),
        SelectionPolicy::VarianceElbow => sweep.variance_elbow(),
        SelectionPolicy::ReportOnly => None,
    };
    Ok(sweep)
}

fn paired_labels(a: &Assignment, b: &Assignment) -> Result<Vec<(usize, usize)>> {
    let mb = b.to_map();
    let pairs: Option<Vec<(usize, usize)>> = a.iter().map(|(id, l)| mb.get(id).map(|&m| (l, m))).collect();
    match pairs {
        Some(p) if mb.len() == a.len() => Ok(p),
        _ => {
            let sa: BTreeSet<&str> = a.ids().iter().map(String::as_str).collect();
            let sb: BTreeSet<&str> = b.ids().iter().map(String::as_str).collect();
            Err(Error::MismatchedEntities {
                difference: sa.symmetric_difference(&sb).count(),
            })
        }
    }
}

fn contingency(pairs: &[(usize, usize)]) -> BTreeMap<usize, BTreeMap<usize, usize>> {
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for &(i, j) in pairs {
        *table.entry(i).or_default().entry(j).or_default() += 1;
    }
    table
}

/// Share of entities whose segmentation-I cluster agrees with the dominant
/// segmentation-II cluster inside it. Not symmetric.
pub fn purity(first: &Assignment, second: &Assignment) -> Result<f64> {
    let pairs = paired_labels(first, second)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("purity of an empty assignment".into()));
    }
    let hits: usize = contingency(&pairs)
        .values()
        .map(|row| row.values().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / pairs.len() as f64)
}

/// `purity(a_i, a_j)` for every ordered pair.
pub fn purity_matrix(assignments: &[Assignment]) -> Result<Vec<Vec<f64>>> {
    assignments
        .iter()
        .map(|a| assignments.iter().map(|b| purity(a, b)).collect())
        .collect()
}

/// Row-normalized contingency table between two segmentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstabMatrix {
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    /// Row-major `row_labels.len() x column_labels.len()`.
    pub values: Vec<Vec<f64>>,
    /// Entities per row cluster.
    pub row_sizes: Vec<usize>,
}

impl CrosstabMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn relabel(&mut self, rows: &BTreeMap<usize, String>, columns: &BTreeMap<usize, String>) {
        for l in &mut self.row_labels {
            if let Some(name) = l.parse().ok().and_then(|i: usize| rows.get(&i)) {
                *l = name.clone();
            }
        }
        for l in &mut self.column_labels {
            if let Some(name) = l.parse().ok().and_then(|i: usize| columns.get(&i)) {
                *l = name.clone();
            }
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["segment".to_string()];
        header.extend(self.column_labels.iter().cloned());
        wtr.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Heatmap payload: labels plus row-major values.
    pub fn to_heatmap_json(&self) -> Result<String> {
        let payload = serde_json::json!({
            "row_labels": self.row_labels,
            "column_labels": self.column_labels,
            "values": self.values,
        });
        Ok(serde_json::to_string_pretty(&payload)?)
    }
}

pub fn crosstab(first: &Assignment, second: &Assignment) -> Result<CrosstabMatrix> {
    let pairs = paired_labels(first, second)?;
    let table = contingency(&pairs);
    let columns: Vec<usize> = pairs.iter().map(|p| p.1).collect::<BTreeSet<_>>().into_iter().collect();
    let mut row_labels = Vec::new();
    let mut values = Vec::new();
    let mut row_sizes = Vec::new();
    for (i, row) in &table {
        let size: usize = row.values().sum();
        row_labels.push(i.to_string());
        row_sizes.push(size);
        values.push(
            columns
                .iter()
                .map(|j| row.get(j).copied().unwrap_or(0) as f64 / size as f64)
                .collect(),
        );
    }
    Ok(CrosstabMatrix {
        row_labels,
        column_labels: columns.iter().map(usize::to_string).collect(),
        values,
        row_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asg(labels: &[usize]) -> Assignment {
        Assignment::new((0..labels.len()).map(|i| format!("e{i}")).collect(), labels.to_vec()).unwrap()
    }

    fn model_for(centers: Vec<Vec<f64>>) -> ClusterModel {
        ClusterModel {
            k: centers.len(),
            feature_schema: (0..centers[0].len()).map(|j| format!("f{j}")).collect(),
            seed: 0,
            centers: centers.concat(),
            inertia: 0.0,
            iterations_run: 0,
            fingerprint: None,
        }
    }

    fn mat(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let d = rows[0].len();
        FeatureMatrix::new(
            (0..rows.len()).map(|i| format!("e{i}")).collect(),
            (0..d).map(|j| format!("f{j}")).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn variance_ratio_extremes() {
        let m = mat(vec![vec![0.0], vec![1.0], vec![3.0]]);
        let one = model_for(vec![vec![4.0 / 3.0]]);
        assert_eq!(between_variance_ratio(&m, &asg(&[0, 0, 0]), &one).unwrap(), 0.0);
        let each = model_for(vec![vec![0.0], vec![1.0], vec![3.0]]);
        assert_eq!(between_variance_ratio(&m, &asg(&[0, 1, 2]), &each).unwrap(), 1.0);
        let flat = mat(vec![vec![2.0], vec![2.0]]);
        assert_eq!(between_variance_ratio(&flat, &asg(&[0, 0]), &one).unwrap(), 0.0);
    }

    #[test]
    fn db_singletons_and_coincident_centers() {
        let m = mat(vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
        let model = model_for(vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert_eq!(davies_bouldin(&m, &asg(&[0, 1]), &model).unwrap(), 0.0);
        let same = model_for(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(
            davies_bouldin(&m, &asg(&[0, 1]), &same),
            Err(Error::CoincidentCenters(0, 1))
        ));
    }

    #[test]
    fn db_symmetric_two_clusters() {
        // Points at +-(1 +- eps) around centers +-1: each spread is eps, center gap 2.
        let eps = 0.25;
        let m = mat(vec![
            vec![-1.0 - eps, 0.0],
            vec![-1.0 + eps, 0.0],
            vec![1.0 - eps, 0.0],
            vec![1.0 + eps, 0.0],
        ]);
        let model = model_for(vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        let db = davies_bouldin(&m, &asg(&[0, 0, 1, 1]), &model).unwrap();
        assert!((db - 0.25).abs() < 1e-12);
    }

    #[test]
    fn purity_identity_and_asymmetry() {
        let a = asg(&[0, 0, 1, 2, 2]);
        assert_eq!(purity(&a, &a).unwrap(), 1.0);
        let one = asg(&[0; 6]);
        let singles = asg(&[0, 1, 2, 3, 4, 5]);
        assert!((purity(&one, &singles).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(purity(&singles, &one).unwrap(), 1.0);
    }

    #[test]
    fn purity_rejects_mismatched_entities() {
        let a = asg(&[0, 1]);
        let b = Assignment::new(vec!["e0".into(), "zz".into()], vec![0, 1]).unwrap();
        assert!(matches!(
            purity(&a, &b),
            Err(Error::MismatchedEntities { difference: 2 })
        ));
    }

    #[test]
    fn crosstab_identity_and_zero_cells() {
        let a = asg(&[0, 0, 1, 2]);
        let ct = crosstab(&a, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(ct.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let b = asg(&[1, 0, 1, 1]);
        let ct = crosstab(&a, &b).unwrap();
        assert_eq!(ct.values, vec![vec![0.5, 0.5], vec![0.0, 1.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn select_k_single_row_and_constant_data() {
        let m = mat((0..10)
            .map(|i| vec![(i / 5) as f64 * 10.0 + (i % 5) as f64 * 0.1])
            .collect());
        let sweep = select_k(&m, 2, 2, &KMeansConfig::new(2, 1), SelectionPolicy::DbMin).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        assert_eq!(sweep.recommended, Some(2));
        let flat = mat(vec![vec![1.0]; 10]);
        assert!(matches!(
            select_k(&flat, 2, 3, &KMeansConfig::new(2, 1), SelectionPolicy::DbMin),
            Err(Error::TooManyClusters { .. })
        ));
        assert!(select_k(&m, 1, 3, &KMeansConfig::default(), SelectionPolicy::DbMin).is_err());
        let report = select_k(&m, 2, 3, &KMeansConfig::new(2, 1), SelectionPolicy::ReportOnly).unwrap();
        assert_eq!(report.recommended, None);
        assert_eq!(report.rows.len(), 2);
    }

    #[test]
    fn elbow_picks_largest_slowdown() {
        let rows = [0.3, 0.7, 0.75, 0.78]
            .iter()
            .enumerate()
            .map(|(i, &r)| KSweepRow {
                k: i + 2,
                inertia: 0.0,
                between_variance_ratio: r,
                davies_bouldin: 1.0,
            })
            .collect();
        let s = KSweepResult {
            rows,
            policy: SelectionPolicy::VarianceElbow,
            recommended: None,
        };
        assert_eq!(s.variance_elbow(), Some(3));
        assert_eq!(s.db_minimum(), Some(2));
    }
}
