"""Benchmark harness: run configuration, budget planning, replicate sweeps and output files.

A run is described by one YAML (or JSON) document.  Every budget ``E`` in
the sweep and every replicate ``r`` gets a seed derived from
``(root seed, E, r, method)``, so the records do not depend on the order in
which they are computed or on how replicates are grouped across workers.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .baselines import bridge_from_log_ratios, snis_signed
from .density import TargetProblem, branch_path
from .errors import ConfigurationError, GTIError, MetricError
from .estimators import ACCELERATIONS, GtiConfig, evidence_problem, gti_many
from .ladder import QUADRATURES, make_schedule
from .mcmc import DEFAULT_BURN_FRACTION, ProposalSpec
from .models import MODEL_NAMES, BananaModel, ExactGaussianSampler, model_from_name
from .samplers import MetropolisSampler
from .signed import SignedLogValue

log = logging.getLogger(__name__)

METHODS = ("gti", "ti", "snis1", "snis2", "bridge", "mcmc-baseline")
BUDGET_KINDS = ("gti-positive", "gti-generic", "ti", "snis1", "snis2", "bridge", "mcmc-baseline")
SEED_ENV = "GTI_SEED"
# cap on the samples / aux values held in memory by one batch of replicates
MEMORY_LIMIT_BYTES = 640 * 2**20

RECORD_FIELDS = (
    "method", "model", "E", "N", "M", "K", "replicate", "seed", "estimate", "sign",
    "log_abs_estimate", "eta_pos", "eta_neg", "r_pos", "r_neg", "rse", "status", "wallclock_ms",
    "budget_spent",
)
SUMMARY_FIELDS = ("method", "E", "n_ok", "n_failed", "median_rse", "q25_rse", "q75_rse")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    model: str
    method: str
    params: dict = field(default_factory=dict)
    N: Optional[int] = None
    M: Optional[int] = None
    K: Optional[int] = None
    power: float = 5.0
    quadrature: str = "trapezoid"
    acceleration: str = "none"
    sigma2: Optional[float] = None
    seed: int = 0
    replicates: int = 1
    budgets: tuple = ()
    parallel: bool = False
    workers: int = 1
    sampler: str = "mh"
    burn_fraction: float = DEFAULT_BURN_FRACTION
    record_wallclock: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.model not in MODEL_NAMES:
            raise ConfigurationError(f"unknown model {self.model!r}; choose from {MODEL_NAMES}")
        if self.model == "conjugate" and self.method != "ti":
            raise ConfigurationError("the conjugate model is an evidence benchmark; use method 'ti'")
        acc = self.acceleration
        if acc is True:
            acc = "abs"
        elif acc is False or acc is None:
            acc = "none"
        if acc not in ACCELERATIONS:
            raise ConfigurationError(f"acceleration must be one of {ACCELERATIONS}")
        object.__setattr__(self, "acceleration", acc)
        object.__setattr__(self, "budgets", tuple(int(e) for e in self.budgets))
        object.__setattr__(self, "params", dict(self.params))
        if self.quadrature not in QUADRATURES:
            raise ConfigurationError(f"quadrature must be one of {QUADRATURES}")
        if self.sampler not in ("mh", "exact"):
            raise ConfigurationError("sampler must be 'mh' or 'exact'")
        if self.sampler == "exact" and (self.model != "gaussian" or self.method == "ti"):
            raise ConfigurationError("the exact sampler exists only for the Gaussian model's f-path")
        if int(self.replicates) < 1:
            raise ConfigurationError("replicates must be >= 1")
        if int(self.workers) < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.method in ("gti", "ti") and self.N is None:
            raise ConfigurationError(f"method {self.method!r} needs N")
        if not self.budgets and self.M is None:
            raise ConfigurationError("give either a budget list or M")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["budgets"] = list(self.budgets)
        return d

    def canonical(self) -> str:
        """Stable one-line JSON form used in output headers."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def with_method(self, method: str) -> "RunConfig":
        return dataclasses.replace(self, method=method)


def load_config(path) -> dict:
    """Read a YAML or JSON config document into a plain dict."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path} must contain one mapping")
    return doc


def resolve_seed(cfg: RunConfig, environ=None):
    """Apply the ``GTI_SEED`` override; returns ``(config, source)``."""
    environ = os.environ if environ is None else environ
    raw = environ.get(SEED_ENV)
    if raw is None or raw == "":
        return cfg, "config"
    try:
        seed = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc
    return dataclasses.replace(cfg, seed=seed), f"env:{SEED_ENV}"


# --------------------------------------------------------------------------
# budgets and metrics
# --------------------------------------------------------------------------


def plan_budget(method: str, N: int, M: int, K: Optional[int] = None, acceleration="none",
                branches: int = 2) -> int:
    """Total target evaluations of one run.

    ``gti-positive`` / ``ti``: ``N M``.  ``gti-generic``: ``branches N M + K``
    (``branches`` is 2, or 1 when the declared sign rules one branch out);
    ``N M + K`` with the abs-path acceleration and ``N M`` with full reuse.
    Baselines: ``M`` for the single-chain methods and ``2 M`` for bridge
    sampling (``M`` draws from each density).
    """
    if method not in BUDGET_KINDS:
        raise ConfigurationError(f"unknown method {method!r} for budget planning")
    M = int(M)
    if M < 1:
        raise ConfigurationError("M must be positive")
    if method in ("snis1", "snis2", "mcmc-baseline"):
        return M
    if method == "bridge":
        return 2 * M
    N = int(N)
    if N < 1:
        raise ConfigurationError("N must be positive")
    if method in ("gti-positive", "ti"):
        return N * M
    K = M if K is None else int(K)
    if K < 1:
        raise ConfigurationError("K must be positive")
    if acceleration in (True, "abs"):
        return N * M + K
    if acceleration == "full":
        return N * M
    if branches not in (1, 2):
        raise ConfigurationError("branches must be 1 or 2")
    return branches * N * M + K


def invert_budget(method: str, E: int, N: Optional[int] = None, K: Optional[int] = None,
                  acceleration="none", branches: int = 2) -> int:
    """Largest ``M`` with ``plan_budget(...) <= E``.

    ``K = None`` means ``K = M`` (one more chain of the same length), which
    gives the layout ``M = floor(E / (branches N + 1))``.
    """
    E = int(E)
    if method in ("snis1", "snis2", "mcmc-baseline"):
        M = E
    elif method == "bridge":
        M = E // 2
    elif method in ("gti-positive", "ti"):
        M = E // int(N)
    elif method == "gti-generic":
        N = int(N)
        if acceleration == "full":
            M = E // N
        else:
            per = N if acceleration in (True, "abs") else branches * N
            M = E // (per + 1) if K is None else (E - int(K)) // per
    else:
        raise ConfigurationError(f"unknown method {method!r} for budget planning")
    if M < 1:
        raise ConfigurationError(f"budget E={E} is too small for method {method!r} (M would be {M})")
    return M


def relative_squared_error(estimate: float, truth: float) -> float:
    if truth == 0:
        raise MetricError("relative squared error is undefined for a zero truth")
    return (estimate - truth) ** 2 / truth**2


def replicate_seed(root: int, E: int, replicate: int, method: str) -> int:
    ss = np.random.SeedSequence([int(root), int(E), int(replicate), zlib.crc32(method.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# one method, many replicates
# --------------------------------------------------------------------------


@dataclass
class EstimateRecord:
    method: str
    model: str
    E: int
    N: Optional[int]
    M: int
    K: Optional[int]
    replicate: int
    seed: int
    estimate: float = math.nan
    sign: int = 0
    log_abs_estimate: float = math.nan
    eta_pos: float = math.nan
    eta_neg: float = math.nan
    r_pos: float = math.nan
    r_neg: float = math.nan
    rse: float = math.nan
    status: str = "ok"
    wallclock_ms: Optional[float] = None
    budget_spent: int = 0

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in RECORD_FIELDS}


@dataclass
class _Plan:
    kind: str  # BUDGET_KINDS entry
    E: int
    N: Optional[int]
    M: int
    K: Optional[int]
    branches: int = 2


def _default_sigma2(cfg: RunConfig, dim: int) -> float:
    if cfg.sigma2 is not None:
        return float(cfg.sigma2)
    if cfg.model == "banana":
        return 3.0
    if cfg.model == "conjugate":
        # power posteriors have variance 1/(1 + beta); 4 is close to 2.4^2 times that
        return 4.0
    return {10: 0.1225, 25: 0.04, 50: 0.01}.get(dim, 0.1225)


def build_problem(cfg: RunConfig):
    """``(model, problem, truth)`` for the configured method."""
    model = model_from_name(cfg.model, cfg.params)
    if cfg.method == "ti":
        if not isinstance(model, BananaModel):
            problem = evidence_problem(model.prior_density(), model.log_likelihood)
        else:
            problem = evidence_problem(model.prior_density(), BananaModel.log_likelihood)
            problem.init = BananaModel.box_center()
            problem.phi_init = problem.init
        return model, problem, math.exp(model.log_evidence())
    return model, model.problem(), model.truth()


def _sampler(cfg: RunConfig, model, dim: int):
    if cfg.sampler == "exact":
        return ExactGaussianSampler(model)
    return MetropolisSampler(ProposalSpec(_default_sigma2(cfg, dim)), cfg.burn_fraction,
                             warm_start=not cfg.parallel)


def plan_run(cfg: RunConfig, problem: TargetProblem, E: Optional[int]) -> _Plan:
    if cfg.method == "gti":
        f = problem.f
        if f.declared_sign == "strictly-positive" and cfg.acceleration == "none":
            kind, branches = "gti-positive", 1
        else:
            kind, branches = "gti-generic", int(f.may_be_positive) + int(f.may_be_negative)
    else:
        kind, branches = cfg.method, 1
    N = cfg.N if cfg.method in ("gti", "ti") else None
    K = cfg.K if kind == "gti-generic" and cfg.acceleration != "full" else None
    if E is None:
        M = int(cfg.M)
    else:
        M = invert_budget(kind, E, N, K, cfg.acceleration, branches)
    if kind == "gti-generic" and cfg.acceleration != "full" and K is None:
        K = M
    planned = plan_budget(kind, N or 1, M, K, cfg.acceleration, branches)
    if E is not None and planned > E:
        raise ConfigurationError(f"planned budget {planned} exceeds E={E}")
    return _Plan(kind, planned if E is None else int(E), N, M, K, branches)


def _bytes_per_replicate(plan: _Plan, dim: int) -> int:
    if plan.kind in ("gti-positive", "ti", "gti-generic"):
        return 16 * plan.N * plan.M * 2 + 8 * (plan.K or plan.M) * (dim + 2)
    return 16 * plan.M * 2


def _run_baseline(cfg, problem, plan, sampler, seeds):
    """SNIS1 / MCMC average, SNIS2 and bridge sampling for several replicates."""
    method = plan.kind
    post = branch_path(problem, "abs", restricted=False)
    out = []
    if method in ("snis1", "mcmc-baseline"):
        rows = sampler.draw_path(post, [0.0], plan.M, seeds, [0], problem.init)
        for row in rows:
            d = row[0]
            v = snis_signed(np.zeros(len(d.signs)), d.signs, d.log_values)
            out.append((v, {}, d.n_evals))
        return out
    if problem.f.may_be_negative:
        raise ConfigurationError(f"{method} needs a nonnegative f (phi = f pi must be a density)")
    if method == "snis2":
        rows = sampler.draw_path(post, [1.0], plan.M, seeds, [1], problem.phi_init)
        for row in rows:
            d = row[0]
            # weights pi / (f pi) = 1 / f on draws from f pi
            v = snis_signed(-d.log_values, d.signs, d.log_values)
            out.append((v, {}, d.n_evals))
        return out
    xs = sampler.draw_path(post, [0.0], plan.M, seeds, [0], problem.init)
    zs = sampler.draw_path(post, [1.0], plan.M, seeds, [1], problem.phi_init)
    for (x,), (z,) in zip(xs, zs):
        lr_x = np.where(x.signs > 0, x.log_values, -np.inf)
        try:
            res = bridge_from_log_ratios(lr_x, z.log_values)
            v = SignedLogValue.from_log(res.log_estimate)
            out.append((v, {"iterations": res.iterations, "converged": res.converged},
                        x.n_evals + z.n_evals))
        except GTIError as exc:
            out.append(exc)
    return out


def _execute(cfg: RunConfig, E: Optional[int], replicates) -> list:
    """Records for one budget and a group of replicate indices."""
    model, problem, truth = build_problem(cfg)
    plan = plan_run(cfg, problem, E)
    sampler = _sampler(cfg, model, problem.dim)
    seeds = [replicate_seed(cfg.seed, plan.E, r, cfg.method) for r in replicates]
    t0 = time.perf_counter()
    if plan.kind in ("gti-positive", "gti-generic", "ti"):
        ladder = make_schedule(cfg.N, cfg.power)
        gcfg = GtiConfig(ladder, plan.M, plan.K, cfg.quadrature,
                         "none" if cfg.method == "ti" else cfg.acceleration)
        results = gti_many(problem, gcfg, sampler, seeds, return_exceptions=True)
    else:
        try:
            results = _run_baseline(cfg, problem, plan, sampler, seeds)
        except GTIError as exc:
            results = [exc] * len(seeds)
    elapsed_ms = (time.perf_counter() - t0) * 1e3 / len(seeds)
    records = []
    for r, seed, res in zip(replicates, seeds, results):
        rec = EstimateRecord(cfg.method, cfg.model, plan.E, plan.N, plan.M, plan.K, r, seed)
        if cfg.record_wallclock:
            rec.wallclock_ms = round(elapsed_ms, 3)
        if isinstance(res, Exception):
            rec.status = f"error:{type(res).__name__}"
            log.warning("replicate %d at E=%d failed: %s", r, plan.E, res)
            records.append(rec)
            continue
        if isinstance(res, tuple):
            value, _, spent = res
            rec.sign, rec.log_abs_estimate = value.sign, value.log_mag
            rec.estimate = value.to_real()
            rec.budget_spent = int(spent)
        else:
            rec.estimate, rec.sign, rec.log_abs_estimate = res.estimate, res.sign, res.log_abs_estimate
            rec.eta_pos, rec.eta_neg, rec.r_pos, rec.r_neg = res.eta_pos, res.eta_neg, res.r_pos, res.r_neg
            rec.budget_spent = res.budget_spent
        if cfg.method == "ti":
            # the record carries Z itself; log Z is in log_abs_estimate
            rec.estimate = math.exp(rec.log_abs_estimate)
        rec.rse = relative_squared_error(rec.estimate, truth)
        records.append(rec)
    return records


def _groups(cfg: RunConfig, E, plan_bytes):
    per_group = max(1, MEMORY_LIMIT_BYTES // max(plan_bytes, 1))
    if cfg.workers > 1:
        per_group = max(1, min(per_group, math.ceil(cfg.replicates / cfg.workers)))
    reps = list(range(cfg.replicates))
    return [(E, reps[i : i + per_group]) for i in range(0, len(reps), per_group)]


def _execute_task(args):
    cfg_dict, E, reps = args
    return _execute(RunConfig.from_dict(cfg_dict), E, reps)


def run_benchmark(cfg: RunConfig) -> list:
    """All records of one method: every budget in the sweep times every replicate."""
    _, problem, _ = build_problem(cfg)
    budgets = list(cfg.budgets) or [None]
    tasks = []
    for E in budgets:
        plan = plan_run(cfg, problem, E)
        tasks.extend(_groups(cfg, E, _bytes_per_replicate(plan, problem.dim)))
    if cfg.workers > 1 and len(tasks) > 1:
        payload = [(cfg.to_dict(), E, reps) for E, reps in tasks]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_execute_task, payload))
    else:
        chunks = [_execute(cfg, E, reps) for E, reps in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda r: (r.E, r.replicate))
    return records


def summarize(records) -> list:
    """Median and quartiles of the RSE per ``(method, E)`` over successful records."""
    keys = sorted({(r.method, r.E) for r in records})
    rows = []
    for method, E in keys:
        group = [r for r in records if r.method == method and r.E == E]
        ok = np.array([r.rse for r in group if r.status == "ok"], dtype=float)
        q = np.quantile(ok, [0.5, 0.25, 0.75]) if ok.size else [math.nan] * 3
        rows.append({
            "method": method, "E": E, "n_ok": int(ok.size), "n_failed": len(group) - int(ok.size),
            "median_rse": float(q[0]), "q25_rse": float(q[1]), "q75_rse": float(q[2]),
        })
    return rows


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def header_lines(cfgs, seed_source: str) -> list:
    lines = [f"# gti {__version__}", f"# seed_source: {seed_source}"]
    lines += [f"# config: {c.canonical()}" for c in cfgs]
    return lines


def write_outputs(out_dir, records, summary, header) -> dict:
    """Write ``records.csv``, ``records.jsonl`` and ``summary.csv`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([_fmt(v) for v in r.as_row().values()])
    paths = {"records": out / "records.csv", "jsonl": out / "records.jsonl", "summary": out / "summary.csv"}
    paths["records"].write_text(buf.getvalue())
    paths["jsonl"].write_text(
        "".join(json.dumps({k: _json_value(v) for k, v in r.as_row().items()}) + "\n" for r in records)
    )
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for row in summary:
        w.writerow([_fmt(row[k]) for k in SUMMARY_FIELDS])
    paths["summary"].write_text(buf.getvalue())
    return paths


def configs_from_document(doc: dict, sweep: bool = False) -> list:
    """One :class:`RunConfig` per method; a sweep document may list ``methods``."""
    doc = dict(doc)
    methods = doc.pop("methods", None)
    if methods is None:
        return [RunConfig.from_dict(doc)]
    if not sweep:
        raise ConfigurationError("'methods' lists belong to bench configs; use 'method' for run")
    if "method" in doc:
        raise ConfigurationError("give either 'method' or 'methods', not both")
    return [RunConfig.from_dict({**doc, "method": m}) for m in methods]


def run_document(doc: dict, out_dir, workers: Optional[int] = None, sweep: bool = False,
                 environ=None):
    """Run every config of a document and write the output files; returns (records, summary, paths)."""
    cfgs = configs_from_document(doc, sweep)
    if workers is not None:
        cfgs = [dataclasses.replace(c, workers=int(workers)) for c in cfgs]
    resolved = [resolve_seed(c, environ) for c in cfgs]
    cfgs = [c for c, _ in resolved]
    source = resolved[0][1]
    records = []
    for c in cfgs:
        log.info("running %s on %s, budgets %s, %d replicates", c.method, c.model, list(c.budgets), c.replicates)
        records.extend(run_benchmark(c))
    summary = summarize(records)
    paths = write_outputs(out_dir, records, summary, header_lines(cfgs, source))
    return records, summary, paths
