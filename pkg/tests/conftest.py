import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from ihgnn.hypergraph import build_operator, random_hypergraph
from ihgnn.linalg import max_row_abs_sum

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def dense_operator(g):
    """Independent dense evaluation of D^-1/2 H E B^-1 H^T D^-1/2 from the edge list."""
    h = np.zeros((g.n, g.num_edges))
    for j, e in enumerate(g.edges):
        h[list(e), j] = 1.0
    w = np.asarray(g.weights)
    dv = h @ w
    de = h.sum(axis=0)
    dinv = np.diag(dv ** -0.5)
    return dinv @ h @ np.diag(w) @ np.diag(1.0 / de) @ h.T @ dinv


def weight_with_norm(rng, dh, norm):
    w = rng.uniform(-1.0, 1.0, size=(dh, dh))
    return w * (norm / max_row_abs_sum(w))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_op(rng):
    return build_operator(random_hypergraph(12, 8, rng))


REPO_ROOT = Path(__file__).resolve().parents[1]

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda ln: int(ln.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def data_root():
    return Path(os.environ.get("IHGNN_DATA", REPO_ROOT / "data"))


def have_dataset(name):
    return (data_root() / name / f"{name}.content").is_file()


def toy_problem(seed=0, n=20, d=4):
    """Two planted blocks, one hyperedge per block plus one bridging edge, separable features."""
    from ihgnn.data import SplitSpec
    from ihgnn.hypergraph import Hypergraph

    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n // 2)
    x = rng.normal(scale=0.3, size=(n, d))
    x[:, 0] += np.where(labels == 0, 1.0, -1.0)
    half = n // 2
    g = Hypergraph.from_edges(n, [range(half), range(half, n), [0, half]])
    perm = rng.permutation(n)
    splits = SplitSpec(perm[:8], perm[8:12], perm[12:])
    return g, x, labels, splits
