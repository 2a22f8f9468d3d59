import json

import numpy as np
import pytest

from smoothhess.errors import TrainingDivergedError
from smoothhess.estimator import EstimatorConfig
from smoothhess.experiments import io
from smoothhess.experiments.benchmark import (
    PMSE_METHODS,
    AttackConfig,
    PmseConfig,
    run_attack_benchmark,
    run_pmse_benchmark,
    split_points,
)
from smoothhess.experiments.datasets import (
    Dataset,
    four_quadrant_label,
    gen_blobs,
    gen_four_quadrant,
    gen_nested_interactions,
    grid,
    nested_label,
)
from smoothhess.experiments.sweeps import log_grid, sweep_beta, sweep_sigma, sweep_sigma_columns
from smoothhess.experiments.training import TrainConfig, evaluate_loss, train
from smoothhess.net import Layer, Network, init_mlp
from smoothhess.sampling import derive_seed


class TestDatasets:
    @pytest.mark.parametrize(
        "x, y", [((1, 1), 5.0), ((-1, 1), -3.0), ((-1, -1), 12.0), ((1, -1), 10.0)]
    )
    def test_quadrant_constants(self, x, y):
        assert four_quadrant_label(np.array(x, float))[0] == y

    def test_axes_are_zero(self):
        xs = np.array([[0.0, 1.7], [0.0, -0.3], [1.2, 0.0], [-2.0, 0.0], [0.0, 0.0]])
        np.testing.assert_array_equal(np.abs(four_quadrant_label(xs)), 0.0)

    def test_grid_size(self):
        ds = gen_four_quadrant(0.008)
        assert len(ds) == 501**2
        assert ds.inputs.min() == -2.0 and ds.inputs.max() == 2.0
        assert len(np.unique(ds.inputs[:, 0])) == 501

    @pytest.mark.parametrize("spacing", [0.0, -0.1, 1.5])
    def test_rejects_spacing(self, spacing):
        with pytest.raises(ValueError):
            grid(spacing)

    @pytest.mark.parametrize("x, y", [((0.1, 0.1), 0.015), ((0.7, 0.7), 0.49), ((1.0, 1.0), -5.0)])
    def test_nested_examples(self, x, y):
        assert nested_label(np.array(x, float))[0] == pytest.approx(y, abs=1e-15)

    def test_nested_closed_balls(self):
        assert nested_label(np.array([0.6, 0.0]))[0] == 0.5 * 0.36  # inner formula on the boundary
        assert nested_label(np.array([0.0, 1.2]))[0] == 0.0
        p = np.array([1.2 / np.sqrt(2), 1.2 / np.sqrt(2)])
        if np.hypot(*p) <= 1.2:
            assert nested_label(p)[0] == p[0] * p[1]

    def test_labels_match_formulas(self, rng):
        ds4, dsn = gen_four_quadrant(0.008), gen_nested_interactions(0.008)
        idx = rng.choice(len(ds4), 1000, replace=False)
        for i in idx:
            x1, x2 = ds4.inputs[i]
            k = 5.0 if x1 >= 0 and x2 >= 0 else 3.0 if x1 <= 0 and x2 >= 0 else 12.0 if x1 <= 0 else -10.0
            assert ds4.targets[i] == k * x1 * x2
            x1, x2 = dsn.inputs[i]
            r = np.hypot(x1, x2)
            expect = 0.5 * x1 * x1 + x1 * x2 if r <= 0.6 else x1 * x2 if r <= 1.2 else -5.0 * x1 * x2
            assert dsn.targets[i] == expect

    def test_deterministic(self):
        a, b = gen_nested_interactions(0.05), gen_nested_interactions(0.05)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.targets, b.targets)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(2), "x", 0.1)
        with pytest.raises(ValueError):
            Dataset(np.full((2, 2), np.nan), np.zeros(2), "x", 0.1)

    def test_blobs(self):
        xs, ys = gen_blobs(50, seed=1)
        assert xs.shape == (150, 2) and np.bincount(ys).tolist() == [50, 50, 50]
        np.testing.assert_array_equal(gen_blobs(50, seed=1)[0], xs)


class TestTraining:
    def test_zero_lr_leaves_weights(self):
        net = init_mlp([2, 8, 1], seed=0)
        ds = gen_four_quadrant(0.5)
        out, _ = train(net, ds.inputs, ds.targets, TrainConfig(lr=0.0, iters=1, batch=4))
        for a, b in zip(net.layers, out.layers):
            np.testing.assert_array_equal(a.weight, b.weight)
            np.testing.assert_array_equal(a.bias, b.bias)

    def test_linear_regression_converges(self):
        rng = np.random.default_rng(0)
        xs = rng.uniform(-2, 2, (500, 2))
        ys = xs @ np.array([1.5, -0.7])
        net = Network(2, [Layer(np.zeros((1, 2)), np.zeros(1), "identity")])
        cfg = TrainConfig(lr=1e-2, lr_decay_iters=(1000,), iters=2000, batch=64)
        _, mse = train(net, xs, ys, cfg)
        assert mse < 1e-6

    def test_deterministic(self):
        ds = gen_four_quadrant(0.2)
        cfg = TrainConfig(iters=200, batch=16, lr_decay_iters=(100,), seed=3)
        a, la = train(init_mlp([2, 8, 8, 1], seed=1), ds.inputs, ds.targets, cfg)
        b, lb = train(init_mlp([2, 8, 8, 1], seed=1), ds.inputs, ds.targets, cfg)
        assert la == lb
        assert a.to_json() == b.to_json()

    def test_sgd_runs(self):
        ds = gen_four_quadrant(0.2)
        net, mse = train(init_mlp([2, 8, 1], seed=0), ds.inputs, ds.targets, TrainConfig("sgd", 1e-3, (), iters=50, batch=8))
        assert np.isfinite(mse)

    def test_divergence(self):
        ds = gen_four_quadrant(0.2)
        cfg = TrainConfig("sgd", 1e6, (), iters=500, batch=8)
        with pytest.raises(TrainingDivergedError) as info:
            train(init_mlp([2, 8, 8, 1], seed=0), ds.inputs, ds.targets * 1e3, cfg)
        assert info.value.iteration < 500

    def test_cross_entropy(self):
        xs, ys = gen_blobs(100, seed=0)
        net = init_mlp([2, 16, 3], seed=0)
        before = evaluate_loss(net, xs, ys, "xent")
        cfg = TrainConfig(lr=3e-3, lr_decay_iters=(), iters=500, batch=32, loss="xent")
        trained, after = train(net, xs, ys, cfg)
        assert after < 0.5 * before
        assert np.mean(np.argmax(trained.outputs(xs), axis=1) == ys) > 0.85

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(optimizer="adam")
        with pytest.raises(ValueError):
            TrainConfig(lr_decay_iters=(10, 5))
        with pytest.raises(ValueError):
            TrainConfig(lr=-1.0)

    def test_metadata_records_rmsprop_constants(self):
        meta = TrainConfig().metadata()
        assert meta["rmsprop_decay"] == 0.99 and meta["rmsprop_eps"] == 1e-8
        json.dumps(meta)


class TestSweeps:
    def test_sigma_sweep_rows(self):
        net = init_mlp([2, 16, 16, 1], seed=0)
        cfg = EstimatorConfig(100, 4, seed=7)
        rows = sweep_sigma(net, [0.0, 0.0], [0.01, 0.1], cfg, [(0, 1), (0, 0)])
        assert [r["grid_index"] for r in rows] == [0, 1]
        assert set(rows[0]) == set(sweep_sigma_columns([(0, 1), (0, 0)]))
        assert rows[1]["log10_sigma2"] == pytest.approx(-1.0)

    def test_sigma_sweep_seeds_per_grid_point(self):
        from smoothhess.estimator import estimate
        from smoothhess.sampling import CovarianceModel

        net = init_mlp([2, 16, 1], seed=0)
        cfg = EstimatorConfig(100, 4, seed=7)
        rows = sweep_sigma(net, [0.1, 0.2], [0.05, 0.3], cfg, [(0, 1)], threads=3)
        est = estimate(net, [0.1, 0.2], CovarianceModel.isotropic(0.3, 2), EstimatorConfig(100, 4, seed=derive_seed(7, 1)))
        assert rows[1]["h_0_1"] == est.hessian[0, 1]

    def test_quadratic_like_net_is_flat_across_sigma(self):
        # antithetic pairs cancel exactly against a constant gradient
        net = Network(2, [Layer([[1.0, 2.0]], [0.0], "identity")])
        rows = sweep_sigma(net, [0.0, 0.0], log_grid(-3, 0, 4), EstimatorConfig(500, 4, antithetic=True), [(0, 1)])
        assert [r["h_0_1"] for r in rows] == [0.0] * 4

    def test_beta_sweep_singleton(self):
        net = init_mlp([2, 16, 1], seed=0)
        rows = sweep_beta(net, [0.3, 0.4], [2.0], [(0, 1)])
        assert len(rows) == 1
        assert rows[0]["h_0_1"] == net.softplus_clone(2.0).hessian_smooth([0.3, 0.4])[0, 1]

    def test_large_beta_hessian_vanishes(self):
        net = init_mlp([2, 16, 16, 1], seed=2)
        rows = sweep_beta(net, [0.37, -0.61], [1e6], [(0, 0), (0, 1), (1, 1)])
        assert max(abs(rows[0][k]) for k in ("h_0_0", "h_0_1", "h_1_1")) < 1e-3

    def test_empty_grids(self):
        net = init_mlp([2, 4, 1], seed=0)
        with pytest.raises(ValueError):
            sweep_sigma(net, [0, 0], [], EstimatorConfig(10, 1), [(0, 1)])
        with pytest.raises(ValueError):
            sweep_beta(net, [0, 0], [], [(0, 1)])

    def test_log_grid(self):
        np.testing.assert_allclose(log_grid(-2, 0, 3), [0.01, 0.1, 1.0])


class TestIO:
    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        io.write_csv(path, ["a", "b", "c"], [{"a": 0.1, "b": 3, "c": True}, {"a": 1e-17}])
        rows = io.read_csv(path)
        assert rows[0] == {"a": "0.1", "b": "3", "c": "true"}
        assert float(rows[1]["a"]) == 1e-17 and rows[1]["b"] == ""

    def test_metadata_sidecar(self, tmp_path):
        out = tmp_path / "x.csv"
        meta = io.write_metadata(out, {"seed": 1, "grid": np.array([0.5])}, {"final_mse": np.float64(0.25)})
        data = json.loads(meta.read_text())
        assert meta.name == "x.csv.meta.json"
        assert data["config"] == {"seed": 1, "grid": [0.5]}
        assert data["final_mse"] == 0.25
        assert data["version"].startswith("0.1.0")


class TestBenchmarks:
    def test_split_points_disjoint(self):
        xs = gen_four_quadrant(0.1).inputs
        val, test = split_points(xs, 5, 10, seed=0, box=1.5)
        assert val.shape == (5, 2) and test.shape == (10, 2)
        assert np.abs(np.vstack([val, test])).max() <= 1.5
        assert not {tuple(p) for p in val} & {tuple(p) for p in test}

    def test_pmse_benchmark_small(self):
        net = init_mlp([2, 16, 16, 1], seed=0)
        cfg = PmseConfig(
            epsilons=(0.5,),
            beta_grid=(1.0, 10.0),
            n_test=3,
            n_val=2,
            n_estimate=400,
            batch_size=200,
            pmse_samples=200,
        )
        inputs = gen_four_quadrant(0.1).inputs
        summary, report = run_pmse_benchmark(net, inputs, cfg)
        assert [r["method"] for r in summary] == list(PMSE_METHODS)
        assert len(report) == 3 * len(PMSE_METHODS)
        assert all(r["value"] >= 0 for r in summary)
        again, _ = run_pmse_benchmark(net, inputs, cfg, threads=2)
        assert again == summary

    def test_pmse_config_validation(self):
        with pytest.raises(ValueError):
            PmseConfig(methods=("SH+SG", "bogus"))
        assert PmseConfig.from_dict(PmseConfig().to_dict()) == PmseConfig()

    def test_attack_benchmark_small(self):
        xs, ys = gen_blobs(40, seed=0)
        net, _ = train(init_mlp([2, 16, 3], seed=0), xs, ys, TrainConfig(lr=3e-3, lr_decay_iters=(), iters=300, batch=32, loss="xent"))
        cfg = AttackConfig(epsilons=(0.3,), n_estimate=200, batch_size=100)
        summary, report = run_attack_benchmark(net, xs[:5], xs[5:15], cfg)
        assert [r["method"] for r in summary] == ["SH+SG", "SG", "random"]
        assert len(report) == 30
        for r in summary:
            assert 0.0 <= r["value"] <= 1.0
        for r in report:
            assert isinstance(r["flipped"], bool)
