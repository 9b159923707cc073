#![allow(dead_code)]

use chrono::NaiveDate;
use shopseg::txmodel::PurchasedLine;
use shopseg::{Basket, Category, FeatureMatrix, Money};

pub fn categories(n: usize) -> Vec<Category> {
    (0..n)
        .map(|i| Category {
            id: format!("c{i}"),
            label: format!("Category {i}"),
        })
        .collect()
}

pub fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(u64::from(d))
}

/// A basket with one line per `(category index, cents)` entry.
pub fn basket(id: &str, customer: &str, on: NaiveDate, spend: &[(usize, i64)]) -> Basket {
    Basket {
        basket_id: id.to_string(),
        customer_id: customer.to_string(),
        timestamp: on.and_hms_opt(10, 0, 0).unwrap(),
        lines: spend
            .iter()
            .enumerate()
            .map(|(i, &(c, cents))| PurchasedLine {
                product_id: format!("p{i}"),
                category_id: format!("c{c}"),
                unit_price: Money(cents),
                quantity: 1,
                promo_flag: false,
            })
            .collect(),
    }
}

pub fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let d = rows.first().map_or(0, Vec::len);
    FeatureMatrix::new(
        (0..rows.len()).map(|i| format!("e{i:04}")).collect(),
        (0..d).map(|j| format!("f{j}")).collect(),
        rows,
    )
    .unwrap()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}
