"""Shared helpers: finite-difference gradient checking and random graphs."""

import numpy as np
import pytest

from gdakit.autodiff import Tape
from gdakit.graph import SparseGraph
from gdakit.sparse import from_coo


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f at x, elementwise."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        up = f()
        x[idx] = orig - h
        down = f()
        x[idx] = orig
        g[idx] = (up - down) / (2.0 * h)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build, params: dict, h: float = 1e-5, rtol: float = 1e-4):
    """Check reverse-mode gradients of a scalar-valued graph against FD.

    build(tape, leaves) must construct the loss from scratch on every call,
    reading current values out of the params dict. Returns the worst relative
    error seen, and asserts it is within rtol.
    """

    def value():
        tape = Tape()
        leaves = {k: tape.leaf(v) for k, v in params.items()}
        return build(tape, leaves).item()

    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    loss = build(tape, leaves)
    grads = tape.backward(loss)

    worst = 0.0
    for name, arr in params.items():
        analytic = grads.of(leaves[name])
        numeric = fd_gradient(value, arr, h=h)
        err = max_rel_error(analytic, numeric)
        assert err <= rtol, f"gradient mismatch for {name}: rel err {err:.3e}"
        worst = max(worst, err)
    return worst


def random_adjacency(rng: np.random.Generator, n: int, p: float,
                     directed: bool = False):
    """Random adjacency without self-loops; symmetric unless directed."""
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    if not directed:
        mask = np.triu(mask, 1)
        mask = mask | mask.T
    rows, cols = np.nonzero(mask)
    return from_coo(n, n, rows, cols)


def random_graph(rng: np.random.Generator, n: int, d: int, num_classes: int,
                 p: float = 0.3, directed: bool = False,
                 labeled: bool = True) -> SparseGraph:
    adj = random_adjacency(rng, n, p, directed=directed)
    features = rng.normal(size=(n, d))
    if labeled:
        labels = rng.integers(0, num_classes, size=n)
    else:
        labels = np.full(n, -1, dtype=np.int64)
    return SparseGraph(adj, features, labels, num_classes, directed)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
