mod common;

use proptest::prelude::*;
use shopseg::validity::variance_decomposition;
use shopseg::{assign, kmeans_fit, KMeansConfig};

use common::{matrix, sq_dist};

fn points(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), 8..max_n)
}

/// Smallest within-cluster sum of squares over every split into two
/// non-empty groups.
fn best_two_partition(rows: &[Vec<f64>]) -> (f64, Vec<bool>) {
    let n = rows.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..(1 << (n - 1)) {
        let side: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let mut cost = 0.0;
        for s in [false, true] {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&side)
                .filter(|(_, &x)| x == s)
                .map(|(r, _)| r)
                .collect();
            let d = rows[0].len();
            let mean: Vec<f64> = (0..d)
                .map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64)
                .collect();
            cost += members.iter().map(|r| sq_dist(r, &mean)).sum::<f64>();
        }
        if cost < best.0 {
            best = (cost, side);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn inertia_never_increases(rows in points(80, 3), k in 1usize..6, seed in any::<u64>()) {
        let m = matrix(rows);
        let fit = kmeans_fit(&m, &KMeansConfig::new(k, seed)).unwrap();
        for w in fit.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        }
        prop_assert!((fit.inertia_trace.last().unwrap() - fit.model.inertia).abs() <= 1e-9 * fit.model.inertia.max(1.0));
    }

    #[test]
    fn same_seed_gives_bit_identical_models(rows in points(60, 4), k in 1usize..5, seed in any::<u64>()) {
        let m = matrix(rows);
        let cfg = KMeansConfig::new(k, seed);
        let a = kmeans_fit(&m, &cfg).unwrap();
        let b = kmeans_fit(&m, &cfg).unwrap();
        prop_assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        prop_assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn assign_reproduces_the_fit(rows in points(60, 2), k in 1usize..5, seed in any::<u64>()) {
        let m = matrix(rows);
        let fit = kmeans_fit(&m, &KMeansConfig::new(k, seed)).unwrap();
        prop_assert_eq!(assign(&fit.model, &m).unwrap(), fit.assignment);
    }

    #[test]
    fn decomposition_adds_up(rows in points(80, 5), k in 1usize..7, seed in any::<u64>()) {
        let m = matrix(rows);
        let fit = kmeans_fit(&m, &KMeansConfig::new(k, seed)).unwrap();
        let v = variance_decomposition(&m, &fit.assignment).unwrap();
        prop_assert!((v.within_ss + v.between_ss - v.total_ss).abs() <= 1e-9 * v.total_ss.max(1e-300));
        prop_assert!((v.within_ss - fit.model.inertia).abs() <= 1e-9 * v.total_ss);
    }

    #[test]
    fn separated_blobs_match_exhaustive_optimum(
        a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..6),
        b in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..7),
        seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = a
            .iter()
            .cloned()
            .chain(b.iter().map(|p| vec![p[0] + 20.0, p[1] - 15.0]))
            .collect();
        let (best, side) = best_two_partition(&rows);
        let fit = kmeans_fit(&matrix(rows.clone()), &KMeansConfig::new(2, seed)).unwrap();
        prop_assert!((fit.model.inertia - best).abs() <= 1e-9 * best.max(1.0));
        let labels = fit.assignment.labels();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                prop_assert_eq!(labels[i] == labels[j], side[i] == side[j]);
            }
        }
        for i in 0..a.len() {
            prop_assert_eq!(labels[i], labels[0]);
        }
    }
}
