"""Priors, reparameterizations, and posterior densities.

Latent rows are non-centred: u_x = L_rho z_x with z_x standard normal and
L_rho the Cholesky factor of the equicorrelation matrix
(1 - rho) I + rho 11'.  Scalars are mapped to the real line
(rho by logit, beta and gamma by log), and all densities are expressed over
the unconstrained vector w = (vec Z, eta_rho[, eta_beta][, eta_gamma]) with
the change-of-variables Jacobian included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betaln, expit, gammaln

from .hardlik import Embedding, Trace, dataset_hard_loglik, margin_matrix
from .relaxlik import relaxed_dataset_grad, RelaxConfig

LOG_TWO_PI = float(np.log(2.0 * np.pi))


class NumericalError(RuntimeError):
    """A density or gradient evaluation produced a non-finite value."""


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters and fixed settings shared by every fitting method.

    tau is a fixed modelling choice, never inferred.  Setting fix_beta or
    fix_gamma removes that coordinate from the unconstrained vector.
    """

    d: int = 3
    tau: float = 0.3
    a_rho: float = 2.0
    b_rho: float = 2.0
    a_beta: float = 1.0
    b_beta: float = 1.0
    a_gamma: float = 2.0
    b_gamma: float = 1.0
    fix_beta: float | None = None
    fix_gamma: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("latent dimension d must be >= 1")
        if not (self.tau > 0):
            raise ValueError("tau must be positive")
        for name in ("a_rho", "b_rho", "a_beta", "b_beta", "a_gamma", "b_gamma"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        if self.fix_beta is not None and self.fix_beta < 0:
            raise ValueError("fix_beta must be nonnegative")
        if self.fix_gamma is not None and not (self.fix_gamma > 0):
            raise ValueError("fix_gamma must be positive")

    @property
    def beta_free(self) -> bool:
        return self.fix_beta is None

    @property
    def gamma_free(self) -> bool:
        return self.fix_gamma is None


@dataclass
class ModelParams:
    """Constrained parameters: latent rows plus (rho, beta, gamma)."""

    z: np.ndarray
    rho: float
    beta: float
    gamma: float

    def __post_init__(self):
        z = np.array(self.z, dtype=float, copy=True)
        if z.ndim != 2:
            raise ValueError("z must be an (M, d) matrix")
        if not np.isfinite(z).all():
            raise ValueError("z contains non-finite entries")
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie strictly in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not (self.gamma > 0):
            raise ValueError("gamma must be positive")
        z.setflags(write=False)
        self.z = z

    @property
    def n_items(self) -> int:
        return self.z.shape[0]


@dataclass
class UnconstrainedParams:
    """Flat real vector (vec Z, eta_rho[, eta_beta][, eta_gamma])."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if not np.isfinite(w).all():
            raise ValueError("w contains non-finite entries")
        self.w = w


def prior_cholesky(rho: float, d: int) -> np.ndarray:
    """Cholesky factor of the d x d equicorrelation matrix.

    Columns have one diagonal entry and a constant below-diagonal entry, so
    a two-scalar recursion builds the factor exactly; d = 1 gives [[1.0]].
    """
    l, _ = _prior_cholesky_pair(rho, d)
    return l


def _prior_cholesky_pair(rho: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """The factor and its elementwise derivative in rho."""
    if not (0.0 <= rho < 1.0):
        raise ValueError("rho must lie in [0, 1)")
    l = np.zeros((d, d))
    dl = np.zeros((d, d))
    s = 0.0   # accumulated sum of squared off-diagonal column entries
    ds = 0.0
    for j in range(d):
        t = max(1.0 - s, 1e-150)  # guard: rho -> 1 makes columns collapse
        diag = np.sqrt(t)
        ddiag = -0.5 * ds / diag if t > 1e-150 else 0.0
        off = (rho - s) / diag
        doff = ((1.0 - ds) * diag - (rho - s) * ddiag) / t
        l[j, j] = diag
        dl[j, j] = ddiag
        if j + 1 < d:
            l[j + 1:, j] = off
            dl[j + 1:, j] = doff
        s += off * off
        ds += 2.0 * off * doff
    return l, dl


def to_embedding(p: ModelParams) -> Embedding:
    """Latent utilities U = Z L_rho' (rows are correlated d-vectors)."""
    l = prior_cholesky(p.rho, p.z.shape[1])
    return Embedding(p.z @ l.T)


def w_size(cfg: PriorConfig, n_items: int) -> int:
    return n_items * cfg.d + 1 + int(cfg.beta_free) + int(cfg.gamma_free)


def transform(w, cfg: PriorConfig) -> tuple[ModelParams, float]:
    """Map an unconstrained vector to constrained parameters + log |det J|.

    Fixed scalars contribute no coordinate and no Jacobian term.
    """
    z, eta_rho, eta_beta, eta_gamma = _split_w(w, cfg)
    rho = _expit_open(eta_rho)
    beta = cfg.fix_beta if eta_beta is None else _exp_capped(eta_beta)
    gamma = cfg.fix_gamma if eta_gamma is None else _exp_capped(eta_gamma)
    log_jac = _log_sigmoid(eta_rho) + _log_sigmoid(-eta_rho)
    if eta_beta is not None:
        log_jac += eta_beta
    if eta_gamma is not None:
        log_jac += eta_gamma
    return ModelParams(z=z, rho=rho, beta=beta, gamma=gamma), float(log_jac)


def inverse_transform(p: ModelParams, cfg: PriorConfig) -> np.ndarray:
    """Left inverse of transform (fixed scalars are dropped)."""
    parts = [p.z.ravel(), [_logit(p.rho)]]
    if cfg.beta_free:
        if not (p.beta > 0):
            raise ValueError("cannot map beta = 0 to the log scale")
        parts.append([np.log(p.beta)])
    if cfg.gamma_free:
        parts.append([np.log(p.gamma)])
    return np.concatenate([np.asarray(q, dtype=float) for q in parts])


def relaxed_log_posterior(w, data, cfg: PriorConfig,
                          ) -> tuple[float, np.ndarray]:
    """Unnormalized log posterior of the relaxed model over w, with gradient.

    Conditions on the train split of a Dataset (or on a plain sequence of
    traces).  An empty trace list yields prior + Jacobian only.
    """
    w = _as_vector(w)
    z, eta_rho, eta_beta, eta_gamma = _split_w(w, cfg)
    m, d = z.shape
    rho = _expit_open(eta_rho)
    beta = cfg.fix_beta if eta_beta is None else _exp_capped(eta_beta)
    gamma = cfg.fix_gamma if eta_gamma is None else _exp_capped(eta_gamma)

    l, dl = _prior_cholesky_pair(rho, d)
    emb = Embedding(z @ l.T)
    orders = [t.order for t in _fit_traces(data)]
    if orders:
        rc = RelaxConfig(tau=cfg.tau, gamma=max(gamma, 1e-300), beta=beta)
        ll, d_u, d_beta_l, d_gamma_l = relaxed_dataset_grad(emb, rc, orders)
    else:
        ll, d_u, d_beta_l, d_gamma_l = 0.0, np.zeros_like(emb.u), 0.0, 0.0

    logp = ll - 0.5 * float((z * z).sum()) - 0.5 * m * d * LOG_TWO_PI
    grad = np.empty_like(w)
    grad[:m * d] = (d_u @ l - z).ravel()

    # rho: Beta prior, likelihood through U = Z L_rho', and the logit Jacobian
    logp += ((cfg.a_rho - 1.0) * _log_sigmoid(eta_rho)
             + (cfg.b_rho - 1.0) * _log_sigmoid(-eta_rho)
             - betaln(cfg.a_rho, cfg.b_rho))
    logp += _log_sigmoid(eta_rho) + _log_sigmoid(-eta_rho)
    d_rho_l = float((d_u * (z @ dl.T)).sum())
    g_rho = ((cfg.a_rho - 1.0) * (1.0 - rho) - (cfg.b_rho - 1.0) * rho
             + (1.0 - 2.0 * rho) + d_rho_l * rho * (1.0 - rho))
    pos = m * d
    grad[pos] = g_rho
    pos += 1

    if eta_beta is not None:
        logp += _gamma_logpdf_eta(eta_beta, cfg.a_beta, cfg.b_beta) + eta_beta
        grad[pos] = (cfg.a_beta - 1.0) - cfg.b_beta * beta + 1.0 + d_beta_l * beta
        pos += 1
    if eta_gamma is not None:
        logp += _gamma_logpdf_eta(eta_gamma, cfg.a_gamma, cfg.b_gamma) + eta_gamma
        grad[pos] = (cfg.a_gamma - 1.0) - cfg.b_gamma * gamma + 1.0 + d_gamma_l * gamma

    if not np.isfinite(logp):
        raise NumericalError("relaxed log posterior is non-finite")
    if not np.isfinite(grad).all():
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericalError(f"posterior gradient is non-finite at coordinate {bad}")
    return float(logp), grad


def constrained_log_prior(p: ModelParams, cfg: PriorConfig,
                          include_gamma: bool = True) -> float:
    """Log prior density in constrained coordinates (no Jacobian)."""
    m, d = p.z.shape
    logp = -0.5 * float((p.z * p.z).sum()) - 0.5 * m * d * LOG_TWO_PI
    logp += ((cfg.a_rho - 1.0) * np.log(p.rho)
             + (cfg.b_rho - 1.0) * np.log1p(-p.rho)
             - betaln(cfg.a_rho, cfg.b_rho))
    if cfg.beta_free:
        logp += _gamma_logpdf(p.beta, cfg.a_beta, cfg.b_beta)
    if include_gamma and cfg.gamma_free:
        logp += _gamma_logpdf(p.gamma, cfg.a_gamma, cfg.b_gamma)
    return float(logp)


def hard_log_posterior(p: ModelParams, data, cfg: PriorConfig) -> float:
    """Log posterior of the exact (non-relaxed) model at constrained params.

    gamma plays no role in the hard likelihood, so neither it nor its prior
    enters.  Returns LOG_ZERO (-inf) when any trace is infeasible under the
    induced order.
    """
    emb = to_embedding(p)
    precedes = margin_matrix(emb) > 0.0
    orders = [np.asarray(t.order, dtype=int) for t in _fit_traces(data)]
    ll = dataset_hard_loglik(precedes, orders, p.beta) if orders else 0.0
    return constrained_log_prior(p, cfg, include_gamma=False) + ll


def _split_w(w, cfg: PriorConfig):
    w = _as_vector(w)
    n_scalars = 1 + int(cfg.beta_free) + int(cfg.gamma_free)
    if (w.size - n_scalars) % cfg.d or w.size <= n_scalars:
        raise ValueError(f"w has size {w.size}, incompatible with d = {cfg.d} "
                         f"and {n_scalars} free scalars")
    m = (w.size - n_scalars) // cfg.d
    z = w[:m * cfg.d].reshape(m, cfg.d)
    pos = m * cfg.d
    eta_rho = float(w[pos])
    pos += 1
    eta_beta = eta_gamma = None
    if cfg.beta_free:
        eta_beta = float(w[pos])
        pos += 1
    if cfg.gamma_free:
        eta_gamma = float(w[pos])
    return z, eta_rho, eta_beta, eta_gamma


def _as_vector(w) -> np.ndarray:
    if isinstance(w, UnconstrainedParams):
        return w.w
    return np.asarray(w, dtype=float).ravel()


def _fit_traces(data) -> Sequence[Trace]:
    if hasattr(data, "train_traces"):
        return data.train_traces()
    return list(data)


def _log_sigmoid(x: float) -> float:
    return -float(np.logaddexp(0.0, -x))


def _logit(p: float) -> float:
    return float(np.log(p) - np.log1p(-p))


def _expit_open(eta: float) -> float:
    # expit saturates to exactly 0/1 around |eta| ~ 37; keep rho in the open interval
    return float(np.clip(expit(eta), 1e-300, np.nextafter(1.0, 0.0)))


def _exp_capped(eta: float) -> float:
    with np.errstate(over="ignore"):  # saturation to the cap is intended
        return float(min(np.exp(eta), 1e300))


def _gamma_logpdf(x: float, a: float, b: float) -> float:
    shape_term = 0.0 if a == 1.0 else (a - 1.0) * np.log(x)
    return float(a * np.log(b) - gammaln(a) + shape_term - b * x)


def _gamma_logpdf_eta(eta: float, a: float, b: float) -> float:
    # log density of Gamma(a, b) evaluated at exp(eta), using log x = eta;
    # overflow lands at -inf and is caught by the finiteness check upstream
    with np.errstate(over="ignore"):
        return float(a * np.log(b) - gammaln(a) + (a - 1.0) * eta - b * np.exp(eta))
