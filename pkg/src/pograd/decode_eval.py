"""Posterior summarization: closure probabilities, thresholded decoding,
structural and predictive metrics.

Predictive metrics integrate over draws inside the log (posterior
predictive), not outside: a trace's score is log mean_s p(trace | draw_s).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .hardlik import Trace, margin_matrix, matrix_hard_step_logprobs
from .model import ModelParams, to_embedding
from .poset import PartialOrder, WeightedDigraph, break_cycles_and_close
from .relaxlik import RelaxConfig, matrix_step_logprobs, soft_precedence_matrix
from .samplers import DrawSet

# floor for traces no retained draw can generate (log of the smallest normal double)
INFEASIBLE_FLOOR = -745.0


@dataclass
class ClosureProbabilities:
    """Posterior edge-inclusion probabilities of the induced closure."""

    p_hat: np.ndarray

    def __post_init__(self):
        p = np.array(self.p_hat, dtype=float, copy=True)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"p_hat must be square, got shape {p.shape}")
        if (p < 0).any() or (p > 1).any() or p.diagonal().any():
            raise ValueError("p_hat entries must lie in [0, 1] with zero diagonal")
        p.setflags(write=False)
        self.p_hat = p

    @property
    def n_items(self) -> int:
        return self.p_hat.shape[0]


@dataclass
class MetricsReport:
    """One evaluation row; optional entries stay None when not computable."""

    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    mae_to_reference: float | None = None
    trace_nll: float | None = None
    step_nll: float | None = None
    waic: float | None = None
    lppd: float | None = None
    p_waic: float | None = None
    ip_cov: float | None = None
    runtime_seconds: float | None = None
    extra: dict = field(default_factory=dict)

    CSV_FIELDS = ("precision", "recall", "f1", "mae_to_reference", "trace_nll",
                  "step_nll", "waic", "lppd", "p_waic", "ip_cov",
                  "runtime_seconds")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.CSV_FIELDS}
        out.update(self.extra)
        return out


def closure_probabilities(draws: DrawSet) -> ClosureProbabilities:
    """Average the per-draw induced-closure indicators."""
    if len(draws) == 0:
        raise ValueError("empty draw set")
    acc = None
    for params in draws.params():
        ind = margin_matrix(to_embedding(params)) > 0.0
        acc = ind.astype(float) if acc is None else acc + ind
    return ClosureProbabilities(acc / len(draws))


def decode_closure(p: ClosureProbabilities, zeta: float = 0.5) -> PartialOrder:
    """Threshold edge probabilities at zeta, break cycles, close."""
    if not (0.0 < zeta < 1.0):
        raise ValueError("zeta must lie in (0, 1)")
    adj = p.p_hat > zeta
    return break_cycles_and_close(WeightedDigraph(adj, np.where(adj, p.p_hat, 0.0)))


def closure_prf(est: PartialOrder, truth: PartialOrder,
                ) -> tuple[float, float, float]:
    """Precision, recall, F1 on closure edge sets.

    Conventions: both empty -> (1, 1, 1); estimate empty with nonempty truth
    -> (1, 0, 0); F1 is 0 whenever precision + recall is 0.
    """
    if est.n_items != truth.n_items:
        raise ValueError("estimate and truth are over different universes")
    e, t = est.precedes, truth.precedes
    tp = float((e & t).sum())
    n_est, n_truth = float(e.sum()), float(t.sum())
    precision = tp / n_est if n_est else 1.0
    recall = tp / n_truth if n_truth else 1.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return precision, recall, f1


def mae_to_reference(p: ClosureProbabilities, ref: ClosureProbabilities) -> float:
    """Mean absolute off-diagonal difference between edge-probability matrices."""
    if p.n_items != ref.n_items:
        raise ValueError("probability matrices are over different universes")
    m = p.n_items
    if m < 2:
        raise ValueError("need at least two items")
    return float(np.abs(p.p_hat - ref.p_hat).sum() / (m * (m - 1)))


# ---------------------------------------------------------------------------
# posterior predictive scores
# ---------------------------------------------------------------------------

def trace_nll(draws: DrawSet, test: list[Trace], evaluator: str = "relaxed",
              tau: float | None = None) -> float:
    """Mean negative log posterior-predictive probability per test trace.

    Hard-evaluator traces that no retained draw can generate contribute the
    -745 floor (with a warning) so the aggregate stays finite.
    """
    ll = pointwise_logliks(draws, test, evaluator, tau)
    per_trace = logsumexp(ll, axis=1) - np.log(ll.shape[1])
    n_floor = int(np.isneginf(per_trace).sum())
    if n_floor:
        warnings.warn(f"{n_floor} trace(s) infeasible under every retained draw; "
                      f"applying the {INFEASIBLE_FLOOR} floor")
        per_trace = np.maximum(per_trace, INFEASIBLE_FLOOR)
    return float(-per_trace.mean())


def step_nll(draws: DrawSet, test: list[Trace], evaluator: str = "relaxed",
             tau: float | None = None) -> float:
    """Mean negative log predictive probability per ranking step.

    Every position is scored, the first from the empty prefix.  The draw
    average is taken per step inside the log.
    """
    mats = _evaluator_matrices(draws, evaluator, tau)
    return step_nll_from_matrices(mats, test, evaluator)


def waic(draws: DrawSet, train: list[Trace], evaluator: str = "relaxed",
         tau: float | None = None) -> tuple[float, float, float]:
    """(waic, lppd, p_waic) with per-trace pointwise terms."""
    ll = pointwise_logliks(draws, train, evaluator, tau)
    return waic_from_loglik_matrix(ll)


def waic_from_loglik_matrix(ll: np.ndarray) -> tuple[float, float, float]:
    """WAIC pieces from an (n_points, n_draws) log-likelihood matrix.

    lppd sums log mean_s exp(ll); the penalty sums per-point sample
    variances (zero when a single draw is supplied).
    """
    ll = np.asarray(ll, dtype=float)
    n_points, n_draws = ll.shape
    lppd = float((logsumexp(ll, axis=1) - np.log(n_draws)).sum())
    p_waic = float(ll.var(axis=1, ddof=1).sum()) if n_draws > 1 else 0.0
    return -2.0 * (lppd - p_waic), lppd, p_waic


def pointwise_logliks(draws: DrawSet, traces: list[Trace], evaluator: str,
                      tau: float | None = None) -> np.ndarray:
    """Per-(trace, draw) log-likelihood matrix under the chosen evaluator."""
    mats = _evaluator_matrices(draws, evaluator, tau)
    out = np.empty((len(traces), len(mats)))
    for s, (mat, beta) in enumerate(mats):
        for i, tr in enumerate(traces):
            out[i, s] = _trace_loglik_matrix(mat, tr, beta, evaluator)
    return out


def step_nll_from_matrices(mats, test: list[Trace], evaluator: str) -> float:
    steps = []
    for tr in test:
        step_logs = np.empty((len(mats), len(tr)))
        for s, (mat, beta) in enumerate(mats):
            step_logs[s] = _step_logprobs_matrix(mat, tr, beta, evaluator)
        # average over draws inside the log, per step
        lme = logsumexp(step_logs, axis=0) - np.log(len(mats))
        steps.extend(np.maximum(lme, INFEASIBLE_FLOOR))
    return float(-np.mean(steps))


def _evaluator_matrices(draws: DrawSet, evaluator: str, tau: float | None):
    """Reduce each draw to the matrix its likelihood evaluator needs."""
    if evaluator not in ("hard", "relaxed"):
        raise ValueError(f"unknown evaluator {evaluator!r}")
    if len(draws) == 0:
        raise ValueError("empty draw set")
    mats = []
    for params, _ in draws.draws:
        emb = to_embedding(params)
        if evaluator == "hard":
            mats.append((margin_matrix(emb) > 0.0, params.beta))
        else:
            if tau is None:
                raise ValueError("relaxed evaluator requires tau")
            sp = soft_precedence_matrix(
                emb, RelaxConfig(tau=tau, gamma=params.gamma, beta=params.beta))
            mats.append((sp.d_matrix, params.beta))
    return mats


def _trace_loglik_matrix(mat, trace: Trace, beta: float, evaluator: str) -> float:
    return float(_step_logprobs_matrix(mat, trace, beta, evaluator).sum())


def _step_logprobs_matrix(mat, trace: Trace, beta: float, evaluator: str):
    if evaluator == "hard":
        return matrix_hard_step_logprobs(mat, trace.order, beta)
    return matrix_step_logprobs(mat, trace.order, beta)


# ---------------------------------------------------------------------------
# incomparable-pair coverage
# ---------------------------------------------------------------------------

def ip_cov(data_or_traces, truth: PartialOrder) -> float:
    """Fraction of truth-incomparable pairs seen in both orders in the traces.

    1.0 when the truth has no incomparable pairs.
    """
    traces = (data_or_traces.train_traces()
              if hasattr(data_or_traces, "train_traces") else list(data_or_traces))
    n = truth.n_items
    inc = ~truth.precedes & ~truth.precedes.T & ~np.eye(n, dtype=bool)
    pairs = np.argwhere(np.triu(inc, k=1))
    if pairs.shape[0] == 0:
        return 1.0
    seen = np.zeros((n, n), dtype=bool)  # seen[i, j]: i observed before j
    for tr in traces:
        order = np.asarray(tr.order, dtype=int)
        t = order.size
        before = np.triu(np.ones((t, t), dtype=bool), k=1)
        np.logical_or.at(seen, (order[:, None], order[None, :]), before)
    covered = sum(1 for i, j in pairs if seen[i, j] and seen[j, i])
    return covered / pairs.shape[0]
