import json
import subprocess
import sys

import numpy as np
import pytest

from smoothhess.cli import build_parser, main
from smoothhess.experiments import io
from smoothhess.net import Layer, Network, init_mlp

COMMANDS = ["gen-data", "train", "estimate", "sweep", "pmse", "attack", "oracle-check"]


@pytest.fixture
def affine_model(tmp_path):
    path = tmp_path / "affine.json"
    Network(2, [Layer([[1.0, -2.0]], [0.5], "identity")]).save(path)
    return path


@pytest.fixture
def relu_model(tmp_path):
    path = tmp_path / "relu.json"
    init_mlp([2, 16, 16, 1], seed=4).save(path)
    return path


class TestParser:
    @pytest.mark.parametrize("cmd", COMMANDS)
    def test_help(self, cmd, capsys):
        with pytest.raises(SystemExit) as info:
            main([cmd, "--help"])
        assert info.value.code == 0
        assert "usage: smoothhess " + cmd in capsys.readouterr().out

    def test_unknown_dataset_exits_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            main(["gen-data", "--dataset", "spiral", "--out", str(tmp_path / "x.csv")])
        assert info.value.code == 2

    def test_bad_seed(self, affine_model, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["estimate", "--model", str(affine_model), "--seed", "-1", "--out", str(tmp_path / "o")])
        assert info.value.code == 2

    def test_zero_threads(self, affine_model, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["estimate", "--model", str(affine_model), "--threads", "0", "--out", str(tmp_path / "o")])
        assert info.value.code == 2

    def test_threads_env_default(self, monkeypatch):
        monkeypatch.setenv("SMOOTHHESS_THREADS", "3")
        args = build_parser().parse_args(["oracle-check"])
        assert args.threads == 3


class TestGenData:
    def test_four_quadrant_rows(self, tmp_path):
        out = tmp_path / "fq.csv"
        assert main(["gen-data", "--dataset", "four-quadrant", "--out", str(out)]) == 0
        with open(out) as fh:
            assert fh.readline().strip() == "x1,x2,y"
            assert sum(1 for _ in fh) == 251001

    def test_nested_coarse(self, tmp_path):
        out = tmp_path / "n.csv"
        assert main(["gen-data", "--dataset", "nested", "--spacing", "0.1", "--out", str(out)]) == 0
        rows = io.read_csv(out)
        assert len(rows) == 41**2
        assert float(rows[0]["x1"]) == -2.0


class TestEstimate:
    def test_affine_model(self, affine_model, tmp_path, capsys):
        out = tmp_path / "est.json"
        code = main(
            ["estimate", "--model", str(affine_model), "--point", "0.3,0.1", "--n", "2000", "--batch", "500",
             "--antithetic", "--cov", '{"kind":"isotropic","sigma2":0.2}', "--out", str(out), "--json"]
        )
        assert code == 0
        data = json.loads(out.read_text())
        np.testing.assert_array_equal(data["hessian"], [[0.0, 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(data["grad"], [1.0, -2.0])
        assert json.loads(capsys.readouterr().out)["n"] == 2000

    def test_n_not_multiple_of_batch(self, affine_model, tmp_path):
        code = main(["estimate", "--model", str(affine_model), "--n", "1001", "--batch", "100", "--out", str(tmp_path / "o")])
        assert code == 2

    def test_point_dimension_mismatch(self, affine_model, tmp_path):
        assert main(["estimate", "--model", str(affine_model), "--point", "1,2,3", "--out", str(tmp_path / "o")]) == 2

    def test_missing_model_is_runtime_error(self, tmp_path):
        assert main(["estimate", "--model", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1

    def test_non_pd_covariance(self, affine_model, tmp_path):
        cov = '{"kind":"full","matrix":[[1,2],[2,1]]}'
        assert main(["estimate", "--model", str(affine_model), "--cov", cov, "--out", str(tmp_path / "o")]) == 1

    def test_threads_byte_identical(self, relu_model, tmp_path):
        outs = []
        for t in ("1", "4"):
            out = tmp_path / f"est{t}.json"
            args = ["estimate", "--model", str(relu_model), "--point", "0.2,-0.4", "--n", "4000", "--batch", "250",
                    "--seed", "9", "--threads", t, "--out", str(out)]
            assert main(args) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestSweep:
    def test_sigma_sweep_csv(self, relu_model, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--model", str(relu_model), "--kind", "sigma", "--grid=-2:0:3", "--entries", "0,1;0,0",
                     "--n", "2000", "--batch", "500", "--out", str(out)])
        assert code == 0
        rows = io.read_csv(out)
        assert len(rows) == 3
        assert list(rows[0]) == ["grid_index", "sigma2", "log10_sigma2", "h_0_1", "se_0_1", "h_0_0", "se_0_0"]
        meta = json.loads((tmp_path / "sweep.csv.meta.json").read_text())
        assert meta["config"]["entries"] == [[0, 1], [0, 0]]

    def test_beta_sweep_from_config(self, relu_model, tmp_path):
        conf = tmp_path / "c.json"
        out = tmp_path / "b.csv"
        conf.write_text(json.dumps({
            "model_path": str(relu_model),
            "output_path": str(out),
            "sweep": {"kind": "beta", "grid": {"log10_min": -1, "log10_max": 1, "num": 5}, "entries": [[1, 1]]},
        }))
        assert main(["sweep", "--config", str(conf)]) == 0
        rows = io.read_csv(out)
        assert [r["grid_index"] for r in rows] == ["0", "1", "2", "3", "4"]
        assert "h_1_1" in rows[0]

    def test_needs_out(self, relu_model):
        assert main(["sweep", "--model", str(relu_model)]) == 2


class TestAttackCommand:
    def test_attack_regressor(self, relu_model, tmp_path):
        out = tmp_path / "atk.json"
        code = main(["attack", "--model", str(relu_model), "--point", "0.1,0.1", "--epsilon", "0.5",
                     "--n", "2000", "--batch", "500", "--out", str(out)])
        assert code == 0
        data = json.loads(out.read_text())
        assert np.linalg.norm(data["delta_star"]) <= 0.5 * (1 + 1e-9)
        assert data["flipped"] is None


class TestPmseCommand:
    def test_small_run(self, relu_model, tmp_path):
        out = tmp_path / "p.csv"
        code = main(["pmse", "--model", str(relu_model), "--epsilon", "0.5", "--methods", "SH+SG,SG,G",
                     "--n", "400", "--batch", "200", "--n-test", "2", "--n-val", "2", "--out", str(out)])
        assert code == 0
        summary = io.read_csv(str(out) + ".summary.csv")
        assert [r["method"] for r in summary] == ["SH+SG", "SG", "G"]


def test_entry_point_subprocess(affine_model, tmp_path):
    # the console script runs in a fresh interpreter and honours SMOOTHHESS_THREADS
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    base = [sys.executable, "-m", "smoothhess.cli", "estimate", "--model", str(affine_model), "--n", "1000", "--batch", "100"]
    subprocess.run(base + ["--out", str(out1)], check=True)
    env = {"SMOOTHHESS_THREADS": "2", "PATH": "/usr/bin:/bin"}
    subprocess.run(base + ["--out", str(out2)], check=True, env=env)
    assert out1.read_bytes() == out2.read_bytes()


@pytest.mark.slow
def test_oracle_check_prints_pass_lines(capsys):
    assert main(["oracle-check", "--seed", "0"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 4 and all(l.startswith("PASS") for l in lines)
