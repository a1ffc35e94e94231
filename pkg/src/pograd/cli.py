"""Command-line driver: generate / fit / decode / eval / compare.

Heavy imports happen inside the command functions so the optional
POGRAD_THREADS cap can be applied to the BLAS thread pools before numpy
loads.  All JSON artifacts carry a schema string and are written atomically.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field

RUN_SCHEMA = "pograd-run-1"
FIT_SCHEMA = "pograd-fit-1"
DRAWS_SCHEMA = "pograd-draws-1"
PHAT_SCHEMA = "pograd-phat-1"
METRICS_SCHEMA = "pograd-metrics-1"
COMPARE_SCHEMA = "pograd-compare-1"

METHODS = ("hard_mcmc", "relaxed_hmc", "fullrank_vi", "majority", "softdag")
POINT_METHODS = ("majority", "softdag")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Everything one experiment needs; method-config consistency is
    checked here so bad files fail before any work starts."""

    method: str = "relaxed_hmc"
    seed: int = 0
    out: str = "run_out"
    zeta: float = 0.5
    dataset: str | None = None
    prior: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    generate: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; "
                              f"expected one of {', '.join(METHODS)}")
        if not (0.0 < self.zeta < 1.0):
            raise ConfigError("zeta must lie strictly between 0 and 1")
        allowed = _sampler_fields(self.method)
        for key in self.sampler:
            if key not in allowed:
                raise ConfigError(
                    f"sampler option {key!r} is not valid for method "
                    f"{self.method!r} (allowed: {sorted(allowed)})")
        for section, name in ((self.prior, "prior"),
                              (self.sampler, "sampler"),
                              (self.generate, "generate")):
            if not isinstance(section, dict):
                raise ConfigError(f"{name} section must be a JSON object")


def _sampler_fields(method: str) -> set:
    if method == "hard_mcmc":
        return {"n_iters", "proposal_scales", "tune"}
    if method == "majority":
        return {"theta_maj"}
    # typed configs own their field lists; seed comes from the run seed
    from . import baselines, samplers
    cls = {"relaxed_hmc": samplers.HmcConfig,
           "fullrank_vi": samplers.AdviConfig,
           "softdag": baselines.SoftDagConfig}[method]
    return {f.name for f in dataclasses.fields(cls)} - {"seed"}


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    payload = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config root must be a JSON object")
        schema = payload.pop("schema", RUN_SCHEMA)
        if schema != RUN_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}")
    for key, value in overrides.items():
        if value is not None:
            if key == "tau":
                payload.setdefault("prior", {})
                payload["prior"]["tau"] = value
            else:
                payload[key] = value
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**payload)


def _prior_config(cfg: RunConfig):
    from .model import PriorConfig
    try:
        return PriorConfig(**cfg.prior)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad prior section: {exc}") from exc


def _require_dataset(cfg: RunConfig):
    from .dataio import load_dataset
    if cfg.dataset is None:
        raise ConfigError("this command needs a dataset path "
                          "(config key 'dataset')")
    return load_dataset(cfg.dataset)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> int:
    from .dataio import save_dataset
    from .synth import SynthConfig, make_dataset
    try:
        synth = SynthConfig(seed=cfg.seed, **cfg.generate)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad generate section: {exc}") from exc
    ds = make_dataset(synth)
    path = os.path.join(cfg.out, "dataset.json")
    os.makedirs(cfg.out, exist_ok=True)
    save_dataset(ds, path)
    print(f"wrote {path}: {len(ds.train_traces())} train + "
          f"{len(ds.test_traces())} test traces over {ds.n_items} items, "
          f"IP-Cov {ds.meta.get('achieved_ip_cov'):.3f}")
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    ds = _require_dataset(cfg)
    prior = _prior_config(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    summary = {"schema": FIT_SCHEMA, "method": cfg.method, "seed": cfg.seed,
               "dataset": cfg.dataset, "items": ds.items,
               "prior": dataclasses.asdict(prior)}

    if cfg.method in POINT_METHODS:
        p_hat, extra = _fit_point(cfg, ds, prior)
        _write_phat(cfg.out, p_hat, cfg.method)
        summary.update(extra)
    else:
        draws = _fit_posterior(cfg, ds, prior)
        _write_draws(cfg.out, draws)
        summary["n_draws"] = len(draws)
        summary["draws_schema"] = DRAWS_SCHEMA
        summary.update({k: _jsonable(v) for k, v in draws.meta.items()
                        if k not in ("method", "seed")})

    summary["runtime_seconds"] = time.perf_counter() - t0
    from .dataio import atomic_write_json
    atomic_write_json(summary, os.path.join(cfg.out, "fit_summary.json"))
    print(f"fit {cfg.method} done in {summary['runtime_seconds']:.1f}s; "
          f"artifacts in {cfg.out}")
    return 0


def _fit_posterior(cfg: RunConfig, ds, prior):
    from . import samplers
    if cfg.method == "hard_mcmc":
        return samplers.hard_mh_sample(ds, prior, seed=cfg.seed, **cfg.sampler)
    if cfg.method == "relaxed_hmc":
        hmc = _typed_sampler(samplers.HmcConfig, cfg)
        return samplers.hmc_sample(ds, prior, hmc)
    advi = _typed_sampler(samplers.AdviConfig, cfg)
    return samplers.advi_fit(ds, prior, advi)


def _fit_point(cfg: RunConfig, ds, prior):
    import numpy as np

    from . import baselines
    if cfg.method == "majority":
        theta = cfg.sampler.get("theta_maj", 0.5)
        po = baselines.majority_fit(ds, theta_maj=theta)
        return po.precedes.astype(float), {"theta_maj": theta}
    sd_cfg = _typed_sampler(baselines.SoftDagConfig, cfg)
    po, w, val_nll = baselines.softdag_fit(ds, sd_cfg)
    r = baselines.softdag_reachability(w, sd_cfg.resolved_k(ds.n_items))
    r = np.clip(r, 0.0, 1.0)
    return r, {"val_step_nll": val_nll,
               "decoded_edges": int(po.precedes.sum())}


def _typed_sampler(cls, cfg: RunConfig):
    try:
        return cls(seed=cfg.seed, **cfg.sampler)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sampler section for {cfg.method}: {exc}") from exc


def cmd_decode(cfg: RunConfig) -> int:
    from .dataio import atomic_write_text
    from .decode_eval import ClosureProbabilities, decode_closure
    from .poset import transitive_reduction

    p_hat, summary = _load_phat_or_draws(cfg.out)
    items = summary.get("items") or [str(i) for i in range(p_hat.n_items)]
    closure = decode_closure(p_hat, zeta=cfg.zeta)
    _write_phat(cfg.out, p_hat.p_hat, summary.get("method", "unknown"))

    lines = ["item," + ",".join(items)]
    for i, row in enumerate(closure.precedes.astype(int)):
        lines.append(items[i] + "," + ",".join(str(v) for v in row))
    atomic_write_text("\n".join(lines) + "\n",
                      os.path.join(cfg.out, "closure.csv"))

    # cover edges only, for drawing the Hasse diagram
    reduction = transitive_reduction(closure)
    edge_lines = ["pred,succ,p_hat"]
    for i, j in zip(*reduction.precedes.nonzero()):
        edge_lines.append(f"{items[i]},{items[j]},{float(p_hat.p_hat[i, j])!r}")
    atomic_write_text("\n".join(edge_lines) + "\n",
                      os.path.join(cfg.out, "hasse_edges.csv"))
    print(f"decoded closure at zeta={cfg.zeta}: "
          f"{int(closure.precedes.sum())} edges, "
          f"{len(edge_lines) - 1} cover edges; wrote closure.csv, "
          f"hasse_edges.csv in {cfg.out}")
    return 0


def cmd_eval(cfg: RunConfig, ref_path: str | None = None) -> int:
    from . import decode_eval as de
    from .dataio import atomic_write_json

    ds = _require_dataset(cfg)
    p_hat, summary = _load_phat_or_draws(cfg.out)
    method = summary.get("method", cfg.method)
    closure = de.decode_closure(p_hat, zeta=cfg.zeta)
    report = de.MetricsReport()
    report.extra["method"] = method
    report.extra["seed"] = summary.get("seed", cfg.seed)

    if ds.ground_truth is not None:
        report.precision, report.recall, report.f1 = de.closure_prf(
            closure, ds.ground_truth)
        report.ip_cov = de.ip_cov(ds, ds.ground_truth)
    if ref_path is not None:
        ref = de.ClosureProbabilities(_read_phat(ref_path))
        report.mae_to_reference = de.mae_to_reference(p_hat, ref)

    if method not in POINT_METHODS:
        draws = _read_draws(cfg.out, summary)
        evaluator = "hard" if method == "hard_mcmc" else "relaxed"
        tau = summary.get("prior", {}).get("tau", _prior_config(cfg).tau)
        test = ds.test_traces()
        if test:
            report.trace_nll = de.trace_nll(draws, test, evaluator, tau)
            report.step_nll = de.step_nll(draws, test, evaluator, tau)
        train = ds.train_traces()
        if train:
            report.waic, report.lppd, report.p_waic = de.waic(
                draws, train, evaluator, tau)
    report.runtime_seconds = summary.get("runtime_seconds")

    payload = {"schema": METRICS_SCHEMA}
    payload.update({k: _jsonable(v) for k, v in report.to_dict().items()})
    atomic_write_json(payload, os.path.join(cfg.out, "metrics.json"))
    _append_metrics_csv(os.path.join(cfg.out, "metrics.csv"), report)
    shown = {k: v for k, v in report.to_dict().items() if v is not None}
    print("metrics: " + json.dumps({k: _jsonable(v) for k, v in shown.items()}))
    return 0


def cmd_compare(cfg: RunConfig, path_a: str, path_b: str) -> int:
    import numpy as np
    from scipy.stats import pearsonr, spearmanr

    from .dataio import atomic_write_json

    a = _read_phat(path_a)
    b = _read_phat(path_b)
    if a.shape != b.shape:
        from .dataio import DataError
        raise DataError(f"probability matrices disagree in shape: "
                        f"{a.shape} vs {b.shape}")
    m = a.shape[0]
    off = ~np.eye(m, dtype=bool)
    mae = float(np.abs(a - b)[off].sum() / (m * (m - 1)))
    va, vb = a[off], b[off]
    pearson = spearman = None
    if va.std() > 0 and vb.std() > 0:
        pearson = float(pearsonr(va, vb).statistic)
        spearman = float(spearmanr(va, vb).statistic)
    payload = {"schema": COMPARE_SCHEMA, "a": path_a, "b": path_b,
               "mae": mae, "pearson": _jsonable(pearson),
               "spearman": _jsonable(spearman)}
    atomic_write_json(payload, os.path.join(cfg.out, "compare.json"))
    print(f"{'metric':<10}{'value'}")
    for k in ("mae", "pearson", "spearman"):
        print(f"{k:<10}{payload[k]}")
    return 0


# ---------------------------------------------------------------------------
# artifact I/O helpers
# ---------------------------------------------------------------------------

def _write_draws(out_dir: str, draws) -> None:
    from .dataio import atomic_write_text
    lines = []
    for params, lp in draws.draws:
        rec = {"z": [float(v) for v in params.z.ravel()],
               "rho": float(params.rho), "beta": float(params.beta),
               "gamma": float(params.gamma), "log_posterior": float(lp)}
        lines.append(json.dumps(rec))
    atomic_write_text("\n".join(lines) + "\n",
                      os.path.join(out_dir, "draws.jsonl"))


def _read_draws(out_dir: str, summary: dict):
    import numpy as np

    from .dataio import DataError
    from .model import ModelParams
    from .samplers import DrawSet

    n = len(summary.get("items", []))
    path = os.path.join(out_dir, "draws.jsonl")
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"missing draws file: {path}") from exc
    draws = []
    with fh:
        for ln, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                z = np.asarray(rec["z"], dtype=float).reshape(n, -1)
                params = ModelParams(z=z, rho=rec["rho"], beta=rec["beta"],
                                     gamma=rec["gamma"])
                draws.append((params, float(rec["log_posterior"])))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"draws.jsonl line {ln}: {exc}") from exc
    if not draws:
        raise DataError(f"draws file {path} holds no draws")
    return DrawSet(draws=draws, meta=dict(summary))


def _write_phat(out_dir: str, p_hat, method: str) -> None:
    from .dataio import atomic_write_json
    payload = {"schema": PHAT_SCHEMA, "method": method,
               "p_hat": [[float(v) for v in row] for row in p_hat]}
    atomic_write_json(payload, os.path.join(out_dir, "phat.json"))


def _read_phat(path: str):
    import numpy as np

    from .dataio import DataError
    if os.path.isdir(path):
        path = os.path.join(path, "phat.json")
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing probability file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    if payload.get("schema") != PHAT_SCHEMA:
        raise DataError(f"{path}: expected schema {PHAT_SCHEMA!r}")
    return np.asarray(payload["p_hat"], dtype=float)


def _load_phat_or_draws(out_dir: str):
    """Posterior closure probabilities plus the fit summary for a run dir."""
    from .dataio import DataError
    from .decode_eval import ClosureProbabilities, closure_probabilities

    summary_path = os.path.join(out_dir, "fit_summary.json")
    try:
        with open(summary_path, encoding="utf-8") as fh:
            summary = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing fit summary: {summary_path}; "
                        f"run `pograd fit` first") from exc
    has_draws = os.path.exists(os.path.join(out_dir, "draws.jsonl"))
    if summary.get("method") in POINT_METHODS or not has_draws:
        p = ClosureProbabilities(_read_phat(out_dir))
    else:
        p = closure_probabilities(_read_draws(out_dir, summary))
    return p, summary


def _append_metrics_csv(path: str, report) -> None:
    fields = ("method", "seed") + type(report).CSV_FIELDS
    row = {"method": report.extra.get("method"),
           "seed": report.extra.get("seed")}
    row.update({k: _jsonable(getattr(report, k)) for k in type(report).CSV_FIELDS})
    write_header = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        if write_header:
            writer.writeheader()
        writer.writerow(row)


def _jsonable(v):
    import numpy as np
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pograd",
        description="Posterior inference of partial orders from rankings")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("generate", "sample a synthetic dataset"),
                      ("fit", "fit a method to a dataset"),
                      ("decode", "threshold fitted probabilities to a closure"),
                      ("eval", "score a fitted run against its dataset"),
                      ("compare", "compare two probability matrices")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="run config JSON path")
        p.add_argument("--seed", type=int)
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--zeta", type=float, help="decode threshold")
        p.add_argument("--tau", type=float, help="relaxation temperature")
        p.add_argument("--out", help="run output directory")
        p.add_argument("--dataset", help="dataset JSON path")
        if name == "eval":
            p.add_argument("--ref", help="phat.json (or run dir) to take "
                                         "MAE against")
        if name == "compare":
            p.add_argument("run_a", help="phat.json or run dir")
            p.add_argument("run_b", help="phat.json or run dir")
    return parser


def main(argv=None) -> int:
    threads = os.environ.get("POGRAD_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    args = build_parser().parse_args(argv)
    from .dataio import DataError
    from .model import NumericalError
    try:
        cfg = load_run_config(args.config, {
            "seed": args.seed, "method": args.method, "zeta": args.zeta,
            "tau": args.tau, "out": args.out, "dataset": args.dataset})
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "decode":
            return cmd_decode(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, ref_path=args.ref)
        return cmd_compare(cfg, args.run_a, args.run_b)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
