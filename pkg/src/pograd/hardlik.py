"""Product-order embeddings and the exact frontier-choice likelihood.

An embedding U (M x d) induces the strict order "z before x iff every
coordinate of u_z exceeds the matching coordinate of u_x".  A ranking is
generated frontier-first: at each step only items with no remaining
predecessor are available, and an available item is picked with probability
proportional to exp(beta * log(1 + #remaining successors)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .poset import PartialOrder, max_set

# Additive sentinel for impossible events: log 0.  Propagates through sums.
LOG_ZERO = float("-inf")


@dataclass
class Embedding:
    """Latent utility matrix, one row per item, one column per dimension."""

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float, copy=True)
        if u.ndim != 2 or u.shape[1] < 1:
            raise ValueError(f"embedding must be 2-D (M x d), got shape {u.shape}")
        if not np.isfinite(u).all():
            raise ValueError("embedding contains non-finite entries")
        u.setflags(write=False)
        self.u = u

    @property
    def n_items(self) -> int:
        return self.u.shape[0]

    @property
    def dim(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class Trace:
    """One observed ranking of a choice set (indices into the item universe)."""

    choice_set: tuple[int, ...]
    order: tuple[int, ...]

    def __init__(self, choice_set, order):
        cs = tuple(sorted(int(i) for i in choice_set))
        od = tuple(int(i) for i in order)
        if len(set(cs)) != len(cs):
            raise ValueError("choice_set contains duplicate items")
        if any(i < 0 for i in cs):
            raise ValueError("choice_set contains negative indices")
        if tuple(sorted(od)) != cs:
            raise ValueError("order is not a permutation of choice_set")
        object.__setattr__(self, "choice_set", cs)
        object.__setattr__(self, "order", od)

    def __len__(self) -> int:
        return len(self.order)


def hard_margin(e: Embedding, z: int, x: int) -> float:
    """Worst-coordinate advantage of z over x: min_k (u_zk - u_xk)."""
    if z == x:
        raise ValueError("hard_margin requires two distinct items")
    return float(np.min(e.u[z] - e.u[x]))


def hard_precedes(e: Embedding, z: int, x: int) -> bool:
    """True iff z dominates x in every coordinate (strictly)."""
    return hard_margin(e, z, x) > 0.0


def margin_matrix(e: Embedding) -> np.ndarray:
    """All pairwise worst-coordinate margins; diagonal is 0."""
    return np.min(e.u[:, None, :] - e.u[None, :, :], axis=2)


def induced_order(e: Embedding) -> PartialOrder:
    """Strict order induced by coordinatewise dominance.

    Transitive by construction (intersection of d total preorders), so the
    result is a valid closure.
    """
    return PartialOrder(margin_matrix(e) > 0.0, is_closure=True)


def hard_successor_count(po: PartialOrder, remaining, x: int) -> int:
    """Number of remaining items that x must precede."""
    rem = list(remaining)
    if x not in rem:
        raise ValueError(f"item {x} is not in the remaining set")
    return int(po.precedes[x, rem].sum())


def hard_step_prob(po: PartialOrder, remaining, chosen: int, beta: float) -> float:
    """Probability of picking `chosen` next from `remaining`.

    Zero when `chosen` has a predecessor still remaining; otherwise a softmax
    over the frontier with utility log(1 + successor count) scaled by beta.
    """
    rem = list(remaining)
    if chosen not in rem:
        raise ValueError(f"chosen item {chosen} is not in the remaining set")
    frontier = max_set(po, rem)
    if chosen not in frontier:
        return 0.0
    utils = beta * np.log1p([hard_successor_count(po, rem, a) for a in frontier])
    logit = utils[frontier.index(chosen)] - logsumexp(utils)
    return float(np.exp(logit))


def hard_step_logprobs(po: PartialOrder, order, beta: float) -> np.ndarray:
    """Per-step log choice probabilities along a full ranking.

    Entry t is LOG_ZERO when the item at position t is off-frontier.  Uses
    suffix-sum recursions so the whole trace costs O(T^2).
    """
    return matrix_hard_step_logprobs(po.precedes, order, beta)


def matrix_hard_step_logprobs(precedes: np.ndarray, order, beta: float,
                              ) -> np.ndarray:
    """hard_step_logprobs on a raw boolean precedence matrix."""
    order = np.asarray(order, dtype=int)
    return _steps_from_position_matrix(
        precedes[np.ix_(order, order)][None, :, :], beta)[0]


def hard_trace_loglik(po: PartialOrder, trace: Trace, beta: float) -> float:
    """Log-likelihood of one observed ranking; LOG_ZERO if infeasible."""
    if max(trace.choice_set, default=0) >= po.n_items:
        raise ValueError("trace references items outside the order's universe")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return float(hard_step_logprobs(po, trace.order, beta).sum())


def dataset_hard_loglik(precedes: np.ndarray, orders: list[np.ndarray],
                        beta: float) -> float:
    """Sum of hard trace log-likelihoods, batching traces of equal length."""
    total = 0.0
    for group in _group_by_length(orders):
        q = precedes[group[:, :, None], group[:, None, :]]
        total += float(_steps_from_position_matrix(q, beta).sum())
    return total


def _steps_from_position_matrix(q: np.ndarray, beta: float) -> np.ndarray:
    """Per-step log-probabilities for a batch of traces in position space.

    q[n, i, j] says whether the item at position i precedes the item at
    position j in trace n.  Returns an (N, T) array of step log-probs with
    LOG_ZERO at infeasible steps.
    """
    n, t, _ = q.shape
    qi = q.astype(np.int64)
    # succ[n, t0, j]: successors of position j among positions >= t0
    succ = np.flip(np.cumsum(np.flip(qi, axis=2), axis=2), axis=2).transpose(0, 2, 1)
    # pred[n, t0, j]: predecessors of position j among positions >= t0
    pred = np.flip(np.cumsum(np.flip(qi, axis=1), axis=1), axis=1)
    pos = np.arange(t)
    on_frontier = (pred == 0) & (pos[None, :, None] <= pos[None, None, :])
    utils = np.where(on_frontier, beta * np.log1p(succ), -np.inf)
    norm = logsumexp(utils, axis=2)
    chosen = utils[:, pos, pos]
    out = chosen - norm
    out[np.isneginf(chosen)] = LOG_ZERO  # subtracting the norm would give nan
    return out


def _group_by_length(orders: list[np.ndarray]):
    by_len: dict[int, list[np.ndarray]] = {}
    for o in orders:
        by_len.setdefault(len(o), []).append(np.asarray(o, dtype=int))
    # deterministic reduction order: ascending trace length
    return [np.stack(by_len[t]) for t in sorted(by_len)]
