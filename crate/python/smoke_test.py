"""Smoke test for the knobforge Python module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/knobforge-*.whl
"""

import json
import pathlib
import tempfile

import knobforge as kf


def main():
    assert kf.mape([100.0, 200.0], [110.0, 180.0]) == 10.0
    assert kf.mse([1.0, 2.0], [2.0, 4.0]) == 2.5

    pts = [[0.0], [0.1], [100.0], [100.1]]
    labels, inertia = kf.kmeans(pts, 2, seed=1)
    assert labels[0] == labels[1] != labels[2] == labels[3]
    assert kf.silhouette_score(pts, labels) > 0.99
    g_labels, _ = kf.gmm([[0.0, 0.2], [0.1, 0.0], [0.2, 0.1], [9.0, 9.1], [9.1, 9.0], [9.2, 9.2]], 2)
    assert len(set(g_labels)) == 2

    x = [[float(i)] for i in range(10)]
    y = [3.0 * v[0] + 2.0 for v in x]
    for kind in ("gpr", "rf", "nn"):
        model = kf.Regressor.fit(kind, x, y, seed=0, n_trees=20, epochs=50)
        back = kf.Regressor.from_json(model.to_json())
        assert back.predict(x) == model.predict(x)
    gpr = kf.Regressor.fit("gpr", x, y, alpha=1e-8)
    assert kf.mape(y, gpr.predict(x)) < 1e-3

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        config = kf.synthesize(str(tmp / "corpus"), seed=3, n_workloads=8)
        summary = kf.run_pipeline(str(config), out_dir=str(tmp / "out"))
        assert summary["k"] == 8, summary
        assert summary["stage1"]["mape"] < 20.0, summary
        assert (tmp / "out" / "test_predictions.csv").is_file()

        corpus = tmp / "corpus"
        offline = sorted(str(p) for p in (corpus / "offline").glob("*.csv"))
        repo = kf.Repository.load(offline, schema=str(corpus / "schema.json"))
        assert len(repo) == 8
        repo, dropped = repo.without_constant_columns()
        assert dropped == ["metric_const"]
        pruned = repo.prune(clusterer="gmm")
        names = [m["name"] for m in pruned["metrics"]]
        assert pruned["k"] == len(names) == 8

        target = kf.Repository.load([str(corpus / "online_c" / "c_000.csv")], schema=str(corpus / "schema.json"))
        result = repo.map(target, "c_000", names)
        truth = json.loads((corpus / "ground_truth.json").read_text())
        assert result["chosen"] in repo.workload_ids
        assert len(result["scores"]) == 8
        assert "workloads" in truth

    print("knobforge", kf.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
