"""Posterior samplers: blocked random-walk MH for the exact model, jittered
leapfrog HMC with dual-averaging step-size adaptation for the relaxed model,
and full-rank Gaussian stochastic variational inference.

The hard-model MH walks in unconstrained coordinates (vec Z, logit rho,
log beta) and accepts on the exact posterior plus the matching
change-of-variables Jacobian, so it targets the same constrained posterior
the gradient-based methods do.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .model import (ModelParams, NumericalError, PriorConfig, hard_log_posterior,
                    inverse_transform, prior_cholesky, relaxed_log_posterior,
                    transform, w_size)

MAX_RETAINED_DRAWS = 5000
DEFAULT_MH_SCALES = {"z": 0.5, "rho": 0.3, "beta": 0.3}
DIVERGENCE_ENERGY = 1000.0


@dataclass
class DrawSet:
    """Posterior draws (constrained params, log-posterior value) plus run meta."""

    draws: list[tuple[ModelParams, float]]
    meta: dict

    def __len__(self) -> int:
        return len(self.draws)

    def params(self) -> list[ModelParams]:
        return [p for p, _ in self.draws]

    def log_posts(self) -> np.ndarray:
        return np.array([lp for _, lp in self.draws])


@dataclass(frozen=True)
class HmcConfig:
    warmup_iters: int = 500
    sampling_iters: int = 500
    target_accept: float = 0.9
    max_leapfrog_steps: int = 24
    init_step_size: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.warmup_iters < 0 or self.sampling_iters < 1:
            raise ValueError("iteration counts out of range")
        if not (0 < self.target_accept < 1):
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_leapfrog_steps < 1 or not (self.init_step_size > 0):
            raise ValueError("leapfrog settings out of range")


@dataclass(frozen=True)
class AdviConfig:
    iters: int = 3000
    mc_samples_grad: int = 8
    mc_samples_elbo: int = 64
    learning_rate: float = 0.05
    tol_rel_obj: float = 1e-4
    n_output_draws: int = 1000
    seed: int = 0

    def __post_init__(self):
        if min(self.iters, self.mc_samples_grad, self.mc_samples_elbo,
               self.n_output_draws) < 1:
            raise ValueError("iteration/sample counts must be positive")
        if not (self.learning_rate > 0 and self.tol_rel_obj > 0):
            raise ValueError("learning_rate and tol_rel_obj must be positive")


# ---------------------------------------------------------------------------
# blocked random-walk Metropolis-Hastings (exact model)
# ---------------------------------------------------------------------------

def hard_mh_sample(data, cfg: PriorConfig, n_iters: int = 200_000,
                   proposal_scales: dict | None = None, seed: int = 0,
                   tune: bool = True) -> DrawSet:
    """Sample the exact-model posterior by blocked random-walk MH.

    Blocks (one z-row / logit-rho / log-beta) are picked uniformly; scales
    are pre-tuned by doubling/halving toward 20-40% acceptance; the first
    half is burn-in and the rest is thinned to at most 5000 draws.
    """
    t_start = time.perf_counter()
    if n_iters < 2:
        raise ValueError("n_iters must be at least 2")
    scales = dict(DEFAULT_MH_SCALES)
    scales.update(proposal_scales or {})
    # gamma never enters the hard likelihood; pin it so w excludes it
    mh_cfg = cfg if not cfg.gamma_free else replace(cfg, fix_gamma=1.0)
    rng = np.random.default_rng(seed)
    w = _feasible_start(data, mh_cfg, rng)

    def target(wv: np.ndarray) -> float:
        params, log_jac = transform(wv, mh_cfg)
        return hard_log_posterior(params, data, mh_cfg) + log_jac

    blocks = _mh_blocks(mh_cfg, _universe_size(data))
    if tune:
        scales = _tune_scales(target, w, blocks, scales, rng)
    kept_w, kept_lp, acc_info = _mh_run(target, w, blocks, scales, n_iters, rng)
    draws = []
    for wv, lp in zip(kept_w, kept_lp):
        params, _ = transform(wv, mh_cfg)
        draws.append((params, float(lp)))
    meta = {
        "method": "hard_mh", "seed": seed, "n_iters": n_iters,
        "tuned_scales": scales,
        "runtime_seconds": time.perf_counter() - t_start,
    }
    meta.update(acc_info)
    return DrawSet(draws=draws, meta=meta)


def _mh_blocks(cfg: PriorConfig, n_items: int):
    kinds = ["z", "rho"] + (["beta"] if cfg.beta_free else [])
    z_len = n_items * cfg.d
    idx = {"rho": np.array([z_len])}
    if cfg.beta_free:
        idx["beta"] = np.array([z_len + 1])
    return {"kinds": kinds, "n_items": n_items, "d": cfg.d, "scalar_idx": idx}


def _propose(w, blocks, scales, rng):
    kind = blocks["kinds"][rng.integers(len(blocks["kinds"]))]
    w_new = w.copy()
    if kind == "z":
        row = int(rng.integers(blocks["n_items"]))
        d = blocks["d"]
        sl = slice(row * d, (row + 1) * d)
        w_new[sl] += scales["z"] * rng.standard_normal(d)
    else:
        j = blocks["scalar_idx"][kind][0]
        w_new[j] += scales[kind] * rng.standard_normal()
    return kind, w_new


def _tune_scales(target, w, blocks, scales, rng, rounds: int = 8,
                 batch: int = 250):
    """Double/halve each block scale until acceptance sits in [0.2, 0.4]."""
    scales = dict(scales)
    lp = target(w)
    for _ in range(rounds):
        acc = {k: [0, 0] for k in blocks["kinds"]}
        for _ in range(batch):
            kind, w_new = _propose(w, blocks, scales, rng)
            lp_new = target(w_new)
            acc[kind][1] += 1
            if np.log(rng.random()) < lp_new - lp:
                w, lp = w_new, lp_new
                acc[kind][0] += 1
        done = True
        for k, (a, n) in acc.items():
            rate = a / max(n, 1)
            if rate < 0.2:
                scales[k] *= 0.5
                done = False
            elif rate > 0.4:
                scales[k] *= 2.0
                done = False
        if done:
            break
    return scales


def _mh_run(target, w, blocks, scales, n_iters, rng):
    burn = n_iters // 2
    n_post = n_iters - burn
    stride = max(1, int(np.ceil(n_post / MAX_RETAINED_DRAWS)))
    kept_w, kept_lp = [], []
    lp = target(w)
    accepted = 0
    acc_block = {k: [0, 0] for k in blocks["kinds"]}
    trail = []
    window_acc, window_n = 0, 0
    for it in range(n_iters):
        kind, w_new = _propose(w, blocks, scales, rng)
        lp_new = target(w_new)
        acc_block[kind][1] += 1
        window_n += 1
        if np.log(rng.random()) < lp_new - lp:
            w, lp = w_new, lp_new
            accepted += 1
            acc_block[kind][0] += 1
            window_acc += 1
        if window_n == 1000:
            trail.append(window_acc / window_n)
            window_acc = window_n = 0
        if it >= burn and (it - burn) % stride == 0:
            kept_w.append(w.copy())
            kept_lp.append(lp)
    info = {
        "acceptance_rate": accepted / n_iters,
        "block_acceptance": {k: (a / n if n else 0.0)
                             for k, (a, n) in acc_block.items()},
        "acceptance_trail": trail,
        "burn_in": burn,
        "thin_stride": stride,
    }
    return kept_w, kept_lp, info


def _feasible_start(data, cfg: PriorConfig, rng, attempts: int = 60) -> np.ndarray:
    """Unconstrained start whose induced order makes every trace feasible."""
    traces = data.train_traces() if hasattr(data, "train_traces") else list(data)
    m = _universe_size(data)

    def feasible(z: np.ndarray) -> bool:
        params = ModelParams(z=z, rho=0.5, beta=1.0, gamma=1.0)
        return np.isfinite(hard_log_posterior(params, traces, cfg))

    for _ in range(attempts):
        z = 0.5 * rng.standard_normal((m, cfg.d))
        if feasible(z):
            return _pack_start(z, cfg)
    if cfg.d >= 2:
        # anti-correlated first two coordinates: empty induced order, so every
        # ranking is feasible and no pair is tied
        v = rng.standard_normal(m)
        u0 = np.zeros((m, cfg.d))
        u0[:, 0] = v
        u0[:, 1] = -v
        l = prior_cholesky(0.5, cfg.d)
        z = np.linalg.solve(l, u0.T).T
        if feasible(z):
            return _pack_start(z, cfg)
    raise NumericalError("no feasible initialization found for the hard sampler")


def _pack_start(z: np.ndarray, cfg: PriorConfig) -> np.ndarray:
    params = ModelParams(z=z, rho=0.5, beta=cfg.fix_beta or 1.0,
                         gamma=cfg.fix_gamma or 1.0)
    return inverse_transform(params, cfg)


def _universe_size(data) -> int:
    if hasattr(data, "n_items"):
        return data.n_items
    return 1 + max(max(t.choice_set) for t in data)


# ---------------------------------------------------------------------------
# Hamiltonian Monte Carlo (relaxed model)
# ---------------------------------------------------------------------------

def hmc_sample(data, cfg: PriorConfig, hmc: HmcConfig) -> DrawSet:
    """HMC on the relaxed posterior with unit mass matrix.

    Leapfrog length is jittered uniformly in [1, max_leapfrog_steps]; the
    step size follows dual averaging toward target_accept during warmup and
    is frozen afterwards.  Iterations whose energy error exceeds 1000 are
    rejected as divergent; more than 50% divergent iterations is an error
    (the target is too stiff; raise tau or soften the gamma prior).
    """
    t_start = time.perf_counter()
    rng = np.random.default_rng(hmc.seed)
    m = _universe_size(data)
    w0 = 0.1 * rng.standard_normal(w_size(cfg, m))

    def logp_grad(wv):
        return relaxed_log_posterior(wv, data, cfg)

    kept_w, kept_lp, info = _hmc_chain(logp_grad, w0, hmc, rng)
    draws = []
    for wv, lp in zip(kept_w, kept_lp):
        params, _ = transform(wv, cfg)
        draws.append((params, float(lp)))
    meta = {"method": "relaxed_hmc", "seed": hmc.seed,
            "runtime_seconds": time.perf_counter() - t_start}
    meta.update(info)
    return DrawSet(draws=draws, meta=meta)


def _hmc_chain(logp_grad, w0, hmc: HmcConfig, rng):
    """Generic HMC chain over an arbitrary differentiable log density."""
    w = np.array(w0, dtype=float)
    lp, grad = logp_grad(w)
    eps = hmc.init_step_size
    mu = np.log(10.0 * eps)
    log_eps_bar, h_bar = 0.0, 0.0
    gamma_da, t0, kappa = 0.05, 10.0, 0.75
    total = hmc.warmup_iters + hmc.sampling_iters
    kept_w, kept_lp, accept_trail = [], [], []
    divergences = 0
    for it in range(total):
        if it == hmc.warmup_iters and hmc.warmup_iters > 0:
            eps = float(np.exp(log_eps_bar))
        p0 = rng.standard_normal(w.size)
        n_steps = int(rng.integers(1, hmc.max_leapfrog_steps + 1))
        h0 = -lp + 0.5 * float(p0 @ p0)
        state = _leapfrog(logp_grad, w, p0, grad, eps, n_steps)
        if state is None:
            alpha, diverged = 0.0, True
        else:
            w_new, p_new, lp_new, grad_new = state
            h1 = -lp_new + 0.5 * float(p_new @ p_new)
            delta_h = h1 - h0
            diverged = not np.isfinite(delta_h) or delta_h > DIVERGENCE_ENERGY
            alpha = 0.0 if diverged else float(min(1.0, np.exp(-delta_h)))
        if diverged:
            divergences += 1
        elif rng.random() < alpha:
            w, lp, grad = w_new, lp_new, grad_new
        accept_trail.append(alpha)
        if it < hmc.warmup_iters:
            frac = 1.0 / (it + 1 + t0)
            h_bar = (1.0 - frac) * h_bar + frac * (hmc.target_accept - alpha)
            log_eps = mu - np.sqrt(it + 1.0) / gamma_da * h_bar
            eta = (it + 1.0) ** (-kappa)
            log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
            eps = float(np.exp(log_eps))
        else:
            kept_w.append(w.copy())
            kept_lp.append(lp)
    if divergences > 0.5 * total:
        raise NumericalError(
            f"{divergences}/{total} HMC iterations diverged; the relaxed "
            f"target is too stiff (increase tau or soften the gamma prior)")
    info = {"step_size": eps, "divergences": divergences,
            "mean_accept": float(np.mean(accept_trail)),
            "accept_trail": [float(np.mean(accept_trail[i:i + 50]))
                             for i in range(0, total, 50)]}
    return kept_w, kept_lp, info


def _leapfrog(logp_grad, w, p, grad, eps, n_steps):
    """Standard leapfrog; None signals a non-finite (divergent) trajectory."""
    w = w.copy()
    try:
        # blown-up trajectories overflow on purpose and are discarded below
        with np.errstate(over="ignore", invalid="ignore"):
            p = p + 0.5 * eps * grad
            for step in range(n_steps):
                w = w + eps * p
                lp, grad = logp_grad(w)
                p = p + (0.5 if step == n_steps - 1 else 1.0) * eps * grad
    except (NumericalError, FloatingPointError):
        return None
    if not (np.isfinite(w).all() and np.isfinite(p).all() and np.isfinite(lp)):
        return None
    return w, p, lp, grad


# ---------------------------------------------------------------------------
# full-rank Gaussian variational inference (relaxed model)
# ---------------------------------------------------------------------------

def advi_fit(data, cfg: PriorConfig, advi: AdviConfig) -> DrawSet:
    """Fit a full-rank Gaussian to the relaxed posterior by stochastic
    gradient ascent on the reparameterized ELBO, then draw from it.

    Non-finite ELBO estimates trigger restarts with a tenfold smaller
    learning rate; repeated failure raises.
    """
    t_start = time.perf_counter()
    m = _universe_size(data)
    dim = w_size(cfg, m)

    def logp_grad(wv):
        return relaxed_log_posterior(wv, data, cfg)

    last_err: Exception | None = None
    for attempt in range(3):
        lr = advi.learning_rate / (10.0 ** attempt)
        rng = np.random.default_rng(advi.seed)
        try:
            mu, l, trail, stopped_at = _advi_core(logp_grad, dim, advi, lr, rng)
            break
        except NumericalError as err:
            last_err = err
    else:
        raise NumericalError(f"ADVI failed after retries: {last_err}")

    eta = rng.standard_normal((advi.n_output_draws, dim))
    draws = []
    for e in eta:
        wv = mu + l @ e
        params, _ = transform(wv, cfg)
        lp, _ = relaxed_log_posterior(wv, data, cfg)
        draws.append((params, lp))
    meta = {"method": "fullrank_vi", "seed": advi.seed,
            "learning_rate_used": lr, "elbo_trail": trail,
            "stopped_at": stopped_at,
            "runtime_seconds": time.perf_counter() - t_start}
    return DrawSet(draws=draws, meta=meta)


def elbo_gradient_sample(logp_grad, mu, l, eta):
    """Single-sample reparameterized ELBO gradient in (mu, L) coordinates.

    With w = mu + L eta, the estimator is grad_mu = g(w),
    grad_L = tril(g(w) eta') + diag(1 / L_ii) (analytic entropy term).
    Unbiased for smooth targets.
    """
    w = mu + l @ eta
    lp, g = logp_grad(w)
    g_l = np.tril(np.outer(g, eta))
    g_l[np.diag_indices_from(g_l)] += 1.0 / np.diag(l)
    return lp, g, g_l


def _advi_core(logp_grad, dim, advi: AdviConfig, lr, rng, elbo_every: int = 50):
    mu = np.zeros(dim)
    lam = np.zeros((dim, dim))       # strict lower triangle
    omega = np.full(dim, -1.0)       # log of L's diagonal
    adam_m = [np.zeros(dim), np.zeros((dim, dim)), np.zeros(dim)]
    adam_v = [np.zeros(dim), np.zeros((dim, dim)), np.zeros(dim)]
    b1, b2, eps_adam = 0.9, 0.999, 1e-8
    strict = np.tril(np.ones((dim, dim), dtype=bool), k=-1)
    entropy_const = 0.5 * dim * (1.0 + np.log(2.0 * np.pi))
    trail, prev_elbo = [], None
    stopped_at = advi.iters

    def build_l():
        l = np.where(strict, lam, 0.0)
        l[np.diag_indices(dim)] = np.exp(omega)
        return l

    for it in range(advi.iters):
        l = build_l()
        g_mu = np.zeros(dim)
        g_l = np.zeros((dim, dim))
        for _ in range(advi.mc_samples_grad):
            _, g, g_l_s = elbo_gradient_sample(logp_grad, mu, l, rng.standard_normal(dim))
            g_mu += g
            g_l += g_l_s
        g_mu /= advi.mc_samples_grad
        g_l /= advi.mc_samples_grad
        if not (np.isfinite(g_mu).all() and np.isfinite(g_l).all()):
            raise NumericalError("non-finite ELBO gradient estimate")
        g_omega = np.diag(g_l) * np.exp(omega)
        updates = [g_mu, np.where(strict, g_l, 0.0), g_omega]
        params = [mu, lam, omega]
        for k in range(3):
            adam_m[k] = b1 * adam_m[k] + (1 - b1) * updates[k]
            adam_v[k] = b2 * adam_v[k] + (1 - b2) * updates[k] ** 2
            m_hat = adam_m[k] / (1 - b1 ** (it + 1))
            v_hat = adam_v[k] / (1 - b2 ** (it + 1))
            params[k] += lr * m_hat / (np.sqrt(v_hat) + eps_adam)  # ascent
        if (it + 1) % elbo_every == 0 or it + 1 == advi.iters:
            elbo = _elbo_estimate(logp_grad, mu, build_l(), omega, entropy_const,
                                  advi.mc_samples_elbo, rng)
            if not np.isfinite(elbo):
                raise NumericalError("non-finite ELBO estimate")
            trail.append(float(elbo))
            if prev_elbo is not None:
                rel = abs(elbo - prev_elbo) / max(1.0, abs(prev_elbo))
                if rel < advi.tol_rel_obj:
                    stopped_at = it + 1
                    break
            prev_elbo = elbo
    return mu, build_l(), trail, stopped_at


def _elbo_estimate(logp_grad, mu, l, omega, entropy_const, n_samples, rng):
    total = 0.0
    for _ in range(n_samples):
        w = mu + l @ rng.standard_normal(mu.size)
        lp, _ = logp_grad(w)
        total += lp
    return total / n_samples + entropy_const + float(omega.sum())
