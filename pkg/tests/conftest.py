"""Shared fixtures: trained toy networks, cached across runs in the pytest cache dir."""

from __future__ import annotations

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from smoothhess.experiments.datasets import gen_blobs, gen_four_quadrant, gen_nested_interactions
from smoothhess.experiments.training import (
    FOUR_QUADRANT_SCHEDULE,
    NESTED_SCHEDULE,
    TOY_HIDDEN,
    TrainConfig,
    train,
)
from smoothhess.net import Network, init_mlp

BLOB_WIDTHS = [2, 32, 32, 3]
BLOB_SCHEDULE = TrainConfig(lr=3e-3, lr_decay_iters=(3000,), iters=6000, batch=64, loss="xent")


class ModelStore:
    """Trains a model once and keeps it (plus its final loss) under the pytest cache."""

    def __init__(self, root: Path):
        self.root = root

    def get(self, name: str, build):
        path = self.root / f"{name}.json"
        meta = self.root / f"{name}.meta.json"
        if path.exists() and meta.exists():
            return Network.load(path), json.loads(meta.read_text())
        t0 = time.perf_counter()
        net, loss = build()
        info = {"final_loss": loss, "train_seconds": time.perf_counter() - t0}
        net.save(path)
        meta.write_text(json.dumps(info))
        return net, info


@pytest.fixture(scope="session")
def model_store(request):
    root = Path(request.config.cache.mkdir("smoothhess-models"))
    return ModelStore(root)


def _four_quadrant(seed):
    ds = gen_four_quadrant(0.008)
    net = init_mlp([2, *TOY_HIDDEN, 1], seed=seed)
    cfg = replace(FOUR_QUADRANT_SCHEDULE, seed=seed)
    return train(net, ds.inputs, ds.targets, cfg)


def _nested(seed):
    ds = gen_nested_interactions(0.008)
    net = init_mlp([2, *TOY_HIDDEN, 1], seed=seed)
    cfg = replace(NESTED_SCHEDULE, seed=seed)
    return train(net, ds.inputs, ds.targets, cfg)


def blob_data(seed=0):
    return gen_blobs(400, seed=seed)


def _blobs(seed):
    xs, ys = blob_data(seed)
    net = init_mlp(BLOB_WIDTHS, seed=seed)
    cfg = replace(BLOB_SCHEDULE, seed=seed)
    return train(net, xs, ys, cfg)


@pytest.fixture(scope="session")
def four_quadrant_nets(model_store):
    """Three independently trained Four Quadrant regressors: list of (net, info)."""
    return [model_store.get(f"four_quadrant_s{s}", lambda s=s: _four_quadrant(s)) for s in range(3)]


@pytest.fixture(scope="session")
def nested_net(model_store):
    return model_store.get("nested_s0", lambda: _nested(0))


@pytest.fixture(scope="session")
def blob_classifier(model_store):
    return model_store.get("blobs_s0", lambda: _blobs(0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting -----------------------------------------------------

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a PASS/FAIL line, prints it and asserts ``ok``."""

    def report(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
