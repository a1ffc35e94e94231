"""Shared brute-force oracles; deliberately independent of the library's
algorithms (permutation filters, matrix-power reachability, central
finite differences)."""

import itertools

import numpy as np
import pytest

from pograd.hardlik import Embedding
from pograd.poset import PartialOrder


def random_embedding(rng, n, d, scale=1.0):
    return Embedding(scale * rng.standard_normal((n, d)))


def random_closure(rng, n, d=2):
    """Valid closure-level PartialOrder via a random product order."""
    from pograd.hardlik import induced_order
    return induced_order(random_embedding(rng, n, d))


def closure_by_powers(adj):
    """Reachability oracle: repeated boolean squaring, not Warshall."""
    adj = np.asarray(adj, dtype=bool)
    reach = adj.copy()
    for _ in range(adj.shape[0]):
        nxt = reach | (reach @ adj)
        if (nxt == reach).all():
            break
        reach = nxt
    return reach


def extensions_by_filter(po: PartialOrder, choice_set):
    """All linear extensions by filtering every permutation pairwise."""
    out = []
    for perm in itertools.permutations(sorted(choice_set)):
        ok = True
        for i in range(len(perm)):
            for j in range(i + 1, len(perm)):
                if po.precedes[perm[j], perm[i]]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(perm)
    return out


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


@pytest.fixture
def diamond():
    """Closure of the 4-item diamond: 0 below {1,2} below 3."""
    m = np.zeros((4, 4), dtype=bool)
    for i, j in [(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)]:
        m[i, j] = True
    return PartialOrder(m, is_closure=True)
