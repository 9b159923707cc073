//! Feature vectors for the three segmentations.
//!
//! * RFM per customer: recency in days, baskets per day, spend per day.
//! * Purchased product structure per customer: share of spend by category.
//! * Shopping mission per basket: share of spend by category plus the basket
//!   value divided by the 95% quantile of all basket values, capped at 1.
//! * Shopping mission per customer: share of the customer's baskets falling
//!   in each basket cluster.
//!
//! Category axes always follow the sorted category ids of the dataset.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::txmodel::{AnalysisWindow, Basket, CustomerHistory};

/// Minimum basket count for a meaningful 95% quantile.
pub const MIN_BASKETS_FOR_Q95: usize = 20;

pub const RFM_COLUMNS: [&str; 3] = ["recency_days", "frequency", "monetary"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfmVector {
    pub recency_days: f64,
    pub frequency: f64,
    pub monetary: f64,
}

impl RfmVector {
    pub fn to_array(self) -> [f64; 3] {
        [self.recency_days, self.frequency, self.monetary]
    }
}

/// Non-negative, unit-sum share of value by category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryRatioVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct BasketSmVector {
    pub category_ratios: CategoryRatioVector,
    pub value_coord: f64,
}

impl BasketSmVector {
    /// Ratio block followed by `weight * value_coord`.
    pub fn to_row(&self, weight: f64) -> Vec<f64> {
        let mut row = self.category_ratios.0.clone();
        row.push(weight * self.value_coord);
        row
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerSmVector(pub Vec<f64>);

/// The 95% quantile of basket values used to scale the value coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub q95: f64,
}

pub fn rfm_features(histories: &[CustomerHistory<'_>], window: &AnalysisWindow) -> BTreeMap<String, RfmVector> {
    let days = window.length_days() as f64;
    histories
        .iter()
        .map(|h| {
            let recency = h
                .baskets
                .iter()
                .map(|b| (window.end() - b.date()).num_days())
                .min()
                .unwrap_or(window.length_days());
            let v = RfmVector {
                recency_days: recency as f64,
                frequency: h.baskets.len() as f64 / days,
                monetary: h.value().to_f64() / days,
            };
            (h.customer_id.to_string(), v)
        })
        .collect()
}

fn ratios_from_cents(per_category: &[i64]) -> CategoryRatioVector {
    let total: i64 = per_category.iter().sum();
    debug_assert!(total > 0);
    CategoryRatioVector(per_category.iter().map(|&c| c as f64 / total as f64).collect())
}

fn accumulate_cents<'a>(baskets: impl IntoIterator<Item = &'a Basket>, index: &HashMap<&str, usize>, out: &mut [i64]) {
    for basket in baskets {
        for line in &basket.lines {
            // Ingestion guarantees the category exists.
            out[index[line.category_id.as_str()]] += line.value().cents();
        }
    }
}

fn category_index(category_ids: &[String]) -> HashMap<&str, usize> {
    category_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
}

/// Share of each customer's total spend falling in each category.
pub fn pps_features(
    histories: &[CustomerHistory<'_>],
    category_ids: &[String],
) -> BTreeMap<String, CategoryRatioVector> {
    let index = category_index(category_ids);
    histories
        .iter()
        .map(|h| {
            let mut cents = vec![0i64; category_ids.len()];
            accumulate_cents(h.baskets.iter().copied(), &index, &mut cents);
            (h.customer_id.to_string(), ratios_from_cents(&cents))
        })
        .collect()
}

/// Type-7 sample quantile: linear interpolation between order statistics at
/// position `p * (n - 1)`. Returns `None` for empty input.
pub fn sample_quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn compute_q95_values(values: &[f64]) -> Result<QuantileSpec> {
    if values.len() < MIN_BASKETS_FOR_Q95 {
        return Err(Error::TooFewBaskets {
            required: MIN_BASKETS_FOR_Q95,
            found: values.len(),
        });
    }
    let q95 = sample_quantile(values, 0.95).expect("non-empty");
    if !(q95 > 0.0 && q95.is_finite()) {
        return Err(Error::Validation(format!("95% quantile of basket values is {q95}")));
    }
    Ok(QuantileSpec { q95 })
}

pub fn compute_q95(baskets: &[Basket]) -> Result<QuantileSpec> {
    let values: Vec<f64> = baskets.iter().map(|b| b.value().to_f64()).collect();
    compute_q95_values(&values)
}

/// `min(value / q95, 1)`.
pub fn value_coord(value: f64, q: QuantileSpec) -> f64 {
    (value / q.q95).min(1.0)
}

pub fn basket_sm_features(
    baskets: &[Basket],
    category_ids: &[String],
    q: QuantileSpec,
) -> BTreeMap<String, BasketSmVector> {
    let index = category_index(category_ids);
    baskets
        .iter()
        .map(|b| {
            let mut cents = vec![0i64; category_ids.len()];
            accumulate_cents(std::iter::once(b), &index, &mut cents);
            let v = BasketSmVector {
                category_ratios: ratios_from_cents(&cents),
                value_coord: value_coord(b.value().to_f64(), q),
            };
            (b.basket_id.clone(), v)
        })
        .collect()
}

/// Share of each customer's baskets in each of the `k_baskets` basket clusters.
pub fn customer_sm_features(
    histories: &[CustomerHistory<'_>],
    basket_assignments: &BTreeMap<String, usize>,
    k_baskets: usize,
) -> Result<BTreeMap<String, CustomerSmVector>> {
    histories
        .iter()
        .map(|h| {
            let mut counts = vec![0usize; k_baskets];
            for b in &h.baskets {
                let c = *basket_assignments
                    .get(&b.basket_id)
                    .ok_or_else(|| Error::MissingAssignment(b.basket_id.clone()))?;
                if c >= k_baskets {
                    return Err(Error::InvalidArgument(format!(
                        "basket `{}` assigned to cluster {c}, but k = {k_baskets}",
                        b.basket_id
                    )));
                }
                counts[c] += 1;
            }
            let n = h.baskets.len() as f64;
            let v = counts.into_iter().map(|c| c as f64 / n).collect();
            Ok((h.customer_id.to_string(), CustomerSmVector(v)))
        })
        .collect()
}

pub fn rfm_matrix(features: &BTreeMap<String, RfmVector>) -> FeatureMatrix {
    let (ids, rows) = features
        .iter()
        .map(|(id, v)| (id.clone(), v.to_array().to_vec()))
        .unzip();
    FeatureMatrix::new(ids, RFM_COLUMNS.iter().map(|s| s.to_string()).collect(), rows).expect("well-formed")
}

pub fn pps_matrix(features: &BTreeMap<String, CategoryRatioVector>, category_ids: &[String]) -> FeatureMatrix {
    let (ids, rows) = features.iter().map(|(id, v)| (id.clone(), v.0.clone())).unzip();
    FeatureMatrix::new(ids, category_ids.to_vec(), rows).expect("well-formed")
}

pub fn basket_sm_columns(category_ids: &[String]) -> Vec<String> {
    let mut cols = category_ids.to_vec();
    cols.push("value".to_string());
    cols
}

pub fn basket_sm_matrix(
    features: &BTreeMap<String, BasketSmVector>,
    category_ids: &[String],
    value_weight: f64,
) -> FeatureMatrix {
    let (ids, rows) = features
        .iter()
        .map(|(id, v)| (id.clone(), v.to_row(value_weight)))
        .unzip();
    FeatureMatrix::new(ids, basket_sm_columns(category_ids), rows).expect("well-formed")
}

pub fn archetype_columns(k_baskets: usize) -> Vec<String> {
    (0..k_baskets).map(|j| format!("archetype_{j}")).collect()
}

pub fn customer_sm_matrix(features: &BTreeMap<String, CustomerSmVector>, k_baskets: usize) -> FeatureMatrix {
    let (ids, rows) = features.iter().map(|(id, v)| (id.clone(), v.0.clone())).unzip();
    FeatureMatrix::new(ids, archetype_columns(k_baskets), rows).expect("well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txmodel::{Money, PurchasedLine};
    use chrono::NaiveDate;

    fn line(cat: &str, cents: i64) -> PurchasedLine {
        PurchasedLine {
            product_id: format!("p-{cat}"),
            category_id: cat.to_string(),
            unit_price: Money(cents),
            quantity: 1,
            promo_flag: false,
        }
    }

    fn basket(id: &str, customer: &str, day: u32, lines: Vec<PurchasedLine>) -> Basket {
        Basket {
            basket_id: id.into(),
            customer_id: customer.into(),
            timestamp: NaiveDate::from_ymd_opt(2024, 3, day)
                .unwrap()
                .and_hms_opt(12, 0, 0)
                .unwrap(),
            lines,
        }
    }

    fn cats() -> Vec<String> {
        vec!["body".into(), "face".into(), "hair".into()]
    }

    #[test]
    fn rfm_direct_substitution() {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let end = start + chrono::Days::new(90);
        let w = AnalysisWindow::new(start, end).unwrap();
        let mut b = basket("b1", "c", 1, vec![line("hair", 9000)]);
        b.timestamp = end.and_hms_opt(18, 0, 0).unwrap();
        let h = [CustomerHistory {
            customer_id: "c",
            baskets: vec![&b],
        }];
        let f = rfm_features(&h, &w);
        let v = f["c"];
        assert_eq!(v.recency_days, 0.0);
        assert_eq!(v.frequency, 1.0 / 90.0);
        assert_eq!(v.monetary, 1.0);
    }

    #[test]
    fn pps_one_hot_and_even_split() {
        let b1 = basket("b1", "x", 1, vec![line("hair", 100), line("hair", 250)]);
        let b2 = basket("b2", "y", 1, vec![line("body", 300), line("face", 300)]);
        let h = [
            CustomerHistory {
                customer_id: "x",
                baskets: vec![&b1],
            },
            CustomerHistory {
                customer_id: "y",
                baskets: vec![&b2],
            },
        ];
        let f = pps_features(&h, &cats());
        assert_eq!(f["x"].0, vec![0.0, 0.0, 1.0]);
        assert_eq!(f["y"].0, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn q95_uniform_1_to_100() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let q = compute_q95_values(&values).unwrap();
        assert!((q.q95 - 95.05).abs() < 1e-12);
    }

    #[test]
    fn q95_constant_and_too_few() {
        let q = compute_q95_values(&[3.25; 40]).unwrap();
        assert_eq!(q.q95, 3.25);
        assert!(matches!(
            compute_q95_values(&[1.0; 19]),
            Err(Error::TooFewBaskets { found: 19, .. })
        ));
    }

    #[test]
    fn hair_body_example_baskets() {
        // Same category mix (hair 5 / body 3 vs hair 25 / body 15), different value depth.
        let ids = vec!["hair".to_string(), "body".to_string(), "face".to_string()];
        let s1 = basket("s1", "c", 1, vec![line("hair", 500), line("body", 300)]);
        let s2 = basket("s2", "c", 1, vec![line("hair", 2500), line("body", 1500)]);
        let q = QuantileSpec { q95: 50.0 };
        let f = basket_sm_features(&[s1, s2], &ids, q);
        assert_eq!(f["s1"].category_ratios.0, vec![0.625, 0.375, 0.0]);
        assert_eq!(f["s2"].category_ratios.0, vec![0.625, 0.375, 0.0]);
        assert_eq!(f["s1"].value_coord, 8.0 / 50.0);
        assert_eq!(f["s2"].value_coord, 40.0 / 50.0);
        let q_small = QuantileSpec { q95: 20.0 };
        let f = basket_sm_features(
            &[basket("s2", "c", 1, vec![line("hair", 2500), line("body", 1500)])],
            &ids,
            q_small,
        );
        assert_eq!(f["s2"].value_coord, 1.0);
    }

    #[test]
    fn value_weight_scales_last_column() {
        let v = BasketSmVector {
            category_ratios: CategoryRatioVector(vec![0.5, 0.5]),
            value_coord: 0.4,
        };
        assert_eq!(v.to_row(1.0), vec![0.5, 0.5, 0.4]);
        assert_eq!(v.to_row(2.0), vec![0.5, 0.5, 0.8]);
    }

    #[test]
    fn customer_sm_ratios() {
        let bs: Vec<Basket> = (0..4)
            .map(|i| basket(&format!("b{i}"), "c", 1, vec![line("hair", 100)]))
            .collect();
        let h = [CustomerHistory {
            customer_id: "c",
            baskets: bs.iter().collect(),
        }];
        let all_two: BTreeMap<String, usize> = (0..4).map(|i| (format!("b{i}"), 2)).collect();
        assert_eq!(
            customer_sm_features(&h, &all_two, 3).unwrap()["c"].0,
            vec![0.0, 0.0, 1.0]
        );
        let split: BTreeMap<String, usize> = (0..4).map(|i| (format!("b{i}"), i / 2)).collect();
        assert_eq!(customer_sm_features(&h, &split, 2).unwrap()["c"].0, vec![0.5, 0.5]);
        let mut missing = split.clone();
        missing.remove("b3");
        assert!(matches!(
            customer_sm_features(&h, &missing, 2),
            Err(Error::MissingAssignment(b)) if b == "b3"
        ));
    }
}
