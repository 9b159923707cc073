"""Smoke test for the shopseg_py extension module.

Build and install first, e.g. `maturin develop --release -m crates/python/Cargo.toml` or
`pip install crates/python`, then run `python python/smoke_test.py`.
"""

import os
import tempfile

import shopseg_py as ss


def main():
    with tempfile.TemporaryDirectory() as tmp:
        n = ss.generate(tmp, n_customers=300, seed=11)
        ds = ss.Dataset.load(
            os.path.join(tmp, "receipts.csv"),
            os.path.join(tmp, "categories.csv"),
            "2024-01-01",
            "2024-03-31",
        )
        assert ds.n_baskets == n
        assert ds.n_customers == 300

        q95 = ss.compute_q95(ds.basket_values())
        model, baskets, customers = ss.run_sm(ds, 6, 3, seed=7)
        assert abs(model.q95 - q95) < 1e-12
        assert abs(sum(customers.shares) - 1.0) < 1e-9

        truth = ss.read_truth(os.path.join(tmp, "ground_truth_customers.csv"), "mission")
        p = ss.purity(customers.assignment, truth)
        print(f"mission purity {p:.3f}")
        assert p >= 0.8

        b, c = ss.SmModel.from_json(model.to_json()).score(ds)
        assert b == baskets.assignment and c == customers.assignment

        rows, _, _ = ss.crosstab(customers.assignment, truth)
        assert len(rows) == 3

    points = [[0.0, 0.0], [0.1, 0.2], [0.2, 0.1], [5.0, 5.0], [5.1, 4.9], [4.8, 5.2]]
    km, labels = ss.kmeans_fit(points, 2, seed=3)
    assert labels[0] == labels[1] == labels[2] != labels[3]
    assert km.assign(points) == labels
    assert ss.davies_bouldin(points, labels, km) < 0.1
    assert ss.between_variance_ratio(points, labels, km) > 0.99

    one = {"a": 0, "b": 0, "c": 0}
    singles = {"a": 0, "b": 1, "c": 2}
    assert abs(ss.purity(one, singles) - 1 / 3) < 1e-12
    assert ss.purity(singles, one) == 1.0
    print("smoke test passed")


if __name__ == "__main__":
    main()
