"""Synthetic ground truths and coverage-targeted trace selection.

A latent embedding is drawn from the generative prior at a chosen
correlation, the induced closure becomes the truth, and training traces are
picked greedily from a large pool to maximize incomparable-pair coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dataio import Dataset
from .decode_eval import ip_cov
from .hardlik import Embedding, Trace, induced_order
from .model import prior_cholesky
from .poset import PartialOrder, max_set

POOL_FACTOR = 20  # candidate pool size as a multiple of trace_budget_max


@dataclass(frozen=True)
class SynthConfig:
    n_items: int = 10
    d_gen: int = 4
    rho_gen: float = 0.5
    beta_gen: float = 1.0
    trace_budget_min: int | None = None   # default: n_items
    trace_budget_max: int | None = None   # default: 2 * n_items
    n_test_traces: int | None = None      # default: ceil(selected / 5)
    target_ip_cov: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_items < 2 or self.d_gen < 1:
            raise ValueError("need n_items >= 2 and d_gen >= 1")
        if not (0.0 <= self.rho_gen < 1.0):
            raise ValueError("rho_gen must lie in [0, 1)")
        if self.beta_gen < 0:
            raise ValueError("beta_gen must be nonnegative")
        if not (0.0 < self.target_ip_cov <= 1.0):
            raise ValueError("target_ip_cov must lie in (0, 1]")

    @property
    def budget_min(self) -> int:
        return self.trace_budget_min if self.trace_budget_min is not None \
            else self.n_items

    @property
    def budget_max(self) -> int:
        return self.trace_budget_max if self.trace_budget_max is not None \
            else 2 * self.n_items


def generate_ground_truth(cfg: SynthConfig,
                          rng: np.random.Generator | None = None,
                          ) -> tuple[Embedding, PartialOrder]:
    """Draw Z ~ N(0, I), correlate rows through L_rho, induce the closure."""
    rng = _as_rng(rng if rng is not None else cfg.seed)
    z = rng.standard_normal((cfg.n_items, cfg.d_gen))
    emb = Embedding(z @ prior_cholesky(cfg.rho_gen, cfg.d_gen).T)
    return emb, induced_order(emb)


def sample_trace(po: PartialOrder, beta: float,
                 seed: int | np.random.Generator = 0) -> Trace:
    """Sample one full-universe ranking frontier-first.

    At each step the frontier is the choice set and an item is drawn with
    probability proportional to exp(beta * log(1 + remaining successors)).
    """
    rng = _as_rng(seed)
    remaining = list(range(po.n_items))
    order = []
    while remaining:
        frontier = max_set(po, remaining)
        utils = beta * np.log1p([int(po.precedes[a, remaining].sum())
                                 for a in frontier])
        probs = np.exp(utils - logsumexp(utils))
        pick = frontier[rng.choice(len(frontier), p=probs / probs.sum())]
        order.append(pick)
        remaining.remove(pick)
    return Trace(choice_set=range(po.n_items), order=order)


def select_training_traces(pool: list[Trace], truth: PartialOrder,
                           cfg: SynthConfig) -> Dataset:
    """Greedy IP-Cov-maximizing selection from the pool.

    Repeatedly adds the trace with the largest coverage gain (earliest pool
    index on ties) and stops at budget_max, or once target_ip_cov is reached
    with at least budget_min traces.  Raises if the pool runs out before
    budget_min.  Achieved coverage is reported in the dataset meta.
    """
    train, achieved = _greedy_select(pool, truth, cfg)
    return _assemble(train, [], truth, achieved, cfg)


def make_dataset(cfg: SynthConfig) -> Dataset:
    """Full synthetic pipeline: truth, pool, greedy selection, test traces."""
    root = np.random.SeedSequence(cfg.seed)
    truth_rng, pool_rng, test_rng = map(np.random.default_rng, root.spawn(3))
    _, truth = generate_ground_truth(cfg, truth_rng)
    pool = [sample_trace(truth, cfg.beta_gen, pool_rng)
            for _ in range(POOL_FACTOR * cfg.budget_max)]
    train, achieved = _greedy_select(pool, truth, cfg)
    n_test = (cfg.n_test_traces if cfg.n_test_traces is not None
              else math.ceil(len(train) / 5))
    test = [sample_trace(truth, cfg.beta_gen, test_rng) for _ in range(n_test)]
    return _assemble(train, test, truth, achieved, cfg)


def _greedy_select(pool, truth, cfg) -> tuple[list[Trace], float]:
    if cfg.budget_min > len(pool):
        raise ValueError(f"pool of {len(pool)} traces cannot satisfy "
                         f"budget_min = {cfg.budget_min}")
    n = truth.n_items
    inc = ~truth.precedes & ~truth.precedes.T & ~np.eye(n, dtype=bool)
    pairs = np.argwhere(np.triu(inc, k=1))
    # orient[k, i, j]: pool trace k places i before j
    orient = np.zeros((len(pool), n, n), dtype=bool)
    tri = None
    for k, tr in enumerate(pool):
        order = np.asarray(tr.order, dtype=int)
        if tri is None or tri.shape[0] != order.size:
            tri = np.triu(np.ones((order.size, order.size), dtype=bool), k=1)
        orient[k][np.ix_(order, order)] = tri
    seen = np.zeros((n, n), dtype=bool)
    selected: list[Trace] = []
    available = list(range(len(pool)))
    cov = 1.0 if pairs.shape[0] == 0 else 0.0

    def coverage(mat: np.ndarray) -> float:
        if pairs.shape[0] == 0:
            return 1.0
        both = mat & mat.T
        return float(both[pairs[:, 0], pairs[:, 1]].sum() / pairs.shape[0])

    while len(selected) < cfg.budget_max:
        if cov >= cfg.target_ip_cov and len(selected) >= cfg.budget_min:
            break
        if not available:
            if len(selected) < cfg.budget_min:
                raise ValueError("candidate pool exhausted below budget_min")
            break
        best_k, best_cov = None, -1.0
        for k in available:
            trial = coverage(seen | orient[k])
            if trial > best_cov:  # strict: earliest index wins ties
                best_k, best_cov = k, trial
        selected.append(pool[best_k])
        available.remove(best_k)
        seen |= orient[best_k]
        cov = best_cov
    return selected, ip_cov(selected, truth)


def _assemble(train, test, truth, achieved, cfg) -> Dataset:
    return Dataset(
        items=[str(i) for i in range(cfg.n_items)],
        traces=list(train) + list(test),
        splits=["train"] * len(train) + ["test"] * len(test),
        ground_truth=truth,
        meta={
            "generator": {
                "n_items": cfg.n_items, "d_gen": cfg.d_gen,
                "rho_gen": cfg.rho_gen, "beta_gen": cfg.beta_gen,
                "target_ip_cov": cfg.target_ip_cov, "seed": cfg.seed,
            },
            "achieved_ip_cov": achieved,
        },
    )


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
