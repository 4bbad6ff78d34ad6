"""Shared test helpers: random graph/parameter construction, plus the
end-of-run acceptance checklist printer."""

from __future__ import annotations

import numpy as np
import pytest

from satgraph.graph import Graph
from satgraph.layers import ModelConfig, init_params
from satgraph.linalg import Rng

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.line(line)


def random_graph(rng: Rng, n_lo: int = 3, n_hi: int = 10, d: int = 6,
                 p: float = 0.35) -> Graph:
    """Erdos-Renyi-ish directed graph with uniform features."""
    n = int(rng.integers(n_lo, n_hi + 1))
    feats = rng.uniform(-1.0, 1.0, (n, d))
    edges = [(i, j) for i in range(n) for j in range(n)
             if i != j and rng.random() < p]
    return Graph(feats, np.asarray(edges, dtype=np.int64).reshape(-1, 2))


@pytest.fixture
def rng() -> Rng:
    return Rng(20240816, 0)


def small_model(d: int = 6, hidden=(8, 8), readout: str = "mean",
                attention: bool = True, seed: int = 11):
    cfg = ModelConfig(hidden_dims=hidden, readout_mode=readout,
                      attention_enabled=attention)
    params = init_params(cfg, d, Rng(seed, 0))
    return cfg, params
