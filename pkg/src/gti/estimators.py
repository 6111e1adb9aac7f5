"""Generalized thermodynamic integration estimators.

The posterior expectation ``I = E[f]`` is written as
``R+ exp(eta+) - R- exp(eta-)`` where ``eta+-`` are log-ratios of
normalizing constants obtained by integrating node expectations of
``log f+-`` along geometric paths, and ``R+-`` are posterior masses of the
sign regions of ``f``.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .density import LogDensity, SignedFunction, TargetProblem, branch_path
from .errors import (
    ConfigurationError,
    DegenerateFunctionError,
    DomainError,
    EstimationError,
    GTIError,
    InitializationError,
    OverflowEstimateError,
    UndersampledBranchError,
)
from .ladder import QUADRATURES, Ladder, integrate, quadrature_weights
from .mcmc import find_support_point
from .signed import SignedLogValue
from .stats import block_bootstrap_means

log = logging.getLogger(__name__)

ACCELERATIONS = ("none", "abs", "full")
ABS_MAX_ROUNDS = 20


@dataclass(frozen=True)
class GtiConfig:
    ladder: Ladder
    m_per_node: int
    k_correction: Optional[int] = None
    quadrature: str = "trapezoid"
    acceleration: str = "none"
    abs_bucket_target: int = 1
    abs_max_rounds: int = ABS_MAX_ROUNDS

    def __post_init__(self):
        if int(self.m_per_node) < 1:
            raise ConfigurationError("m_per_node must be positive")
        if self.k_correction is None:
            object.__setattr__(self, "k_correction", int(self.m_per_node))
        if int(self.k_correction) < 1:
            raise ConfigurationError("k_correction must be positive")
        if self.quadrature not in QUADRATURES:
            raise ConfigurationError(f"quadrature must be one of {QUADRATURES}")
        acc = self.acceleration
        if acc is True:
            acc = "abs"
        elif acc is False or acc is None:
            acc = "none"
        if acc not in ACCELERATIONS:
            raise ConfigurationError(f"acceleration must be one of {ACCELERATIONS}")
        object.__setattr__(self, "acceleration", acc)

    @property
    def n(self) -> int:
        return self.ladder.n


@dataclass
class GtiResult:
    eta_pos: float
    eta_neg: float
    r_pos: float
    r_neg: float
    estimate: float
    signed: SignedLogValue
    node_expectations: dict
    budget_spent: int
    node_values: dict = field(default_factory=dict, repr=False)
    k_used: int = 0
    # signs of f on the posterior draws behind r_pos / r_neg (None when f > 0 was declared)
    correction_signs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def log_abs_estimate(self) -> float:
        return self.signed.log_mag

    @property
    def sign(self) -> int:
        return self.signed.sign


def _stream_ids(kind: str, n: int, round_: int = 0) -> list:
    if kind == "pos":
        return list(range(n))
    if kind == "neg":
        return list(range(n, 2 * n))
    if kind == "correction":
        return [2 * n]
    if kind == "abs":
        return [2 * n + 1 + round_ * n + i for i in range(n)]
    raise ValueError(kind)


def mean_log_values(values, node=None) -> float:
    """Arithmetic mean of log-values; any ``-inf`` signals a support breach."""
    v = np.asarray(values, dtype=float)
    where = "" if node is None else f" at node {node}"
    if v.size == 0:
        raise EstimationError(f"no samples{where}", index=node)
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        raise EstimationError(
            f"log f is {v[bad[0]]} for sample {int(bad[0])}{where}: sample outside the branch support",
            index=node if node is not None else int(bad[0]),
        )
    return float(v.mean())


def node_expectation(samples, logf: Callable) -> float:
    """Monte Carlo estimate of ``E[log f]`` from samples of one tempered node."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        raise EstimationError("node_expectation needs at least one sample")
    return mean_log_values(logf(samples))


def correction_factors(posterior_samples, f: SignedFunction):
    """Fractions of posterior samples with ``f > 0`` and ``f < 0``."""
    z = np.asarray(posterior_samples, dtype=float)
    if len(z) < 1:
        raise ConfigurationError("correction_factors needs K >= 1 samples")
    sign, _ = f.eval_batch(z)
    return _sign_fractions(sign)


def _sign_fractions(signs):
    signs = np.asarray(signs)
    k = len(signs)
    return int(np.count_nonzero(signs > 0)) / k, int(np.count_nonzero(signs < 0)) / k


def combine_signed_log(r_pos, eta_pos, r_neg, eta_neg) -> SignedLogValue:
    """``r_pos*exp(eta_pos) - r_neg*exp(eta_neg)`` in sign/log form."""
    for name, r in (("r_pos", r_pos), ("r_neg", r_neg)):
        if not 0.0 <= r <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {r}")
    for name, eta in (("eta_pos", eta_pos), ("eta_neg", eta_neg)):
        if eta == math.inf:
            raise OverflowEstimateError(f"{name} is +inf")
        if math.isnan(eta):
            raise EstimationError(f"{name} is NaN")

    def term(r, eta):
        if r == 0.0 or eta == -math.inf:
            return SignedLogValue.zero()
        return SignedLogValue(1, math.log(r) + eta)

    return term(r_pos, eta_pos) - term(r_neg, eta_neg)


def combine_signed(r_pos, eta_pos, r_neg, eta_neg) -> float:
    v = combine_signed_log(r_pos, eta_pos, r_neg, eta_neg)
    try:
        return v.to_real()
    except OverflowError as exc:
        raise OverflowEstimateError(f"estimate overflows: log|I| = {v.log_mag}") from exc


def _integrate_values(values, cfg: GtiConfig):
    """Node expectations and the integrated log-ratio for one branch."""
    e_hat = [mean_log_values(v, node=i) for i, v in enumerate(values)]
    return integrate(cfg.ladder, e_hat, cfg.quadrature), e_hat


def _make_result(eta_pos, eta_neg, r_pos, r_neg, e_nodes, values, budget, k_used,
                 correction_signs=None) -> GtiResult:
    signed = combine_signed_log(r_pos, eta_pos, r_neg, eta_neg)
    try:
        estimate = signed.to_real()
    except OverflowError as exc:
        raise OverflowEstimateError(f"estimate overflows: log|I| = {signed.log_mag}") from exc
    return GtiResult(
        eta_pos=eta_pos,
        eta_neg=eta_neg,
        r_pos=r_pos,
        r_neg=r_neg,
        estimate=estimate,
        signed=signed,
        node_expectations=e_nodes,
        budget_spent=int(budget),
        node_values=values,
        k_used=k_used,
        correction_signs=correction_signs,
    )


def _settle(results, return_exceptions):
    if not return_exceptions:
        for r in results:
            if isinstance(r, Exception):
                raise r
    return results


def _seeds(seeds) -> list:
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigurationError("at least one seed is required")
    return seeds


def gti_positive_many(problem: TargetProblem, cfg: GtiConfig, sampler, seeds,
                      return_exceptions: bool = False) -> list:
    """:func:`gti_positive` for several replicate seeds sharing one sampler batch.

    Replicate ``r`` is identical to ``gti_positive(..., seed=seeds[r])``.  With
    ``return_exceptions`` a failing replicate yields its exception in place of
    a result instead of raising.
    """
    if problem.f.declared_sign != "strictly-positive":
        raise ConfigurationError(
            f"gti_positive needs a strictly-positive function, got {problem.f.declared_sign!r}"
        )
    seeds = _seeds(seeds)
    draws = sampler.draw_path(branch_path(problem, "pos"), cfg.ladder.betas, cfg.m_per_node, seeds,
                              _stream_ids("pos", cfg.n), problem.init)
    out = []
    for row in draws:
        values = [d.log_values for d in row]
        try:
            eta, e_hat = _integrate_values(values, cfg)
            out.append(_make_result(eta, -math.inf, 1.0, 0.0, {"pos": e_hat}, {"pos": values},
                                    sum(d.n_evals for d in row), 0))
        except GTIError as exc:
            out.append(exc)
    return _settle(out, return_exceptions)


def gti_positive(problem: TargetProblem, cfg: GtiConfig, sampler, seed: int = 0) -> GtiResult:
    """GTI for a strictly positive ``f``: one path from ``pi`` to ``f pi``."""
    return gti_positive_many(problem, cfg, sampler, [seed])[0]


@dataclass
class AbsSplit:
    pos_samples: Optional[np.ndarray]
    neg_samples: Optional[np.ndarray]
    pos_log_values: np.ndarray
    neg_log_values: np.ndarray
    n_evals: int
    rounds: int
    final_state: np.ndarray


def _split_row(path, betas, iterations, m_pos, m_neg, sampler, seed, first_row, offset, n_total,
               max_rounds, keep_samples=False):
    """Sort one replicate's abs-path draws by sign, extending nodes with a short bucket.

    Each extension round continues a short node's chain from its last state
    on a fresh stream, so a node's draws are a concatenation of rounds.
    """
    n_nodes = len(betas)
    rounds = [[d] for d in first_row]

    def short_nodes():
        return [
            i
            for i in range(n_nodes)
            if sum(int(np.count_nonzero(d.signs > 0)) for d in rounds[i]) < m_pos
            or sum(int(np.count_nonzero(d.signs < 0)) for d in rounds[i]) < m_neg
        ]

    for r in range(1, max_rounds + 1):
        short = short_nodes()
        if not short:
            break
        ids = _stream_ids("abs", n_total, r)
        more = sampler.draw_path(
            path, [betas[i] for i in short], iterations, [seed], [ids[offset + i] for i in short],
            np.array([rounds[i][-1].final_state for i in short])[None, :, :],
            keep_samples=keep_samples, warm_start=False,
        )[0]
        for i, d in zip(short, more):
            rounds[i].append(d)
    out = []
    for i in range(n_nodes):
        signs = np.concatenate([d.signs for d in rounds[i]])
        vals = np.concatenate([d.log_values for d in rounds[i]])
        pos, neg = signs > 0, signs < 0
        if np.count_nonzero(pos) < m_pos or np.count_nonzero(neg) < m_neg:
            raise UndersampledBranchError(
                f"abs-path node {i} (beta={betas[i]}) short after {len(rounds[i])} rounds: "
                f"{int(pos.sum())} positive, {int(neg.sum())} negative",
                int(pos.sum()),
                int(neg.sum()),
            )
        samples = np.concatenate([d.samples for d in rounds[i]]) if keep_samples else None
        out.append(
            AbsSplit(
                pos_samples=None if samples is None else samples[pos],
                neg_samples=None if samples is None else samples[neg],
                pos_log_values=vals[pos],
                neg_log_values=vals[neg],
                n_evals=sum(d.n_evals for d in rounds[i]),
                rounds=len(rounds[i]),
                final_state=rounds[i][-1].final_state,
            )
        )
    return out


def sample_abs_split(problem: TargetProblem, beta: float, m_target: int, sampler, *,
                     m_neg: Optional[int] = None, iterations: Optional[int] = None, seed: int = 0,
                     init=None, max_rounds: int = ABS_MAX_ROUNDS) -> AbsSplit:
    """Sample ``|f|^beta pi 1(f != 0)`` and partition the draws by the sign of ``f``.

    Rounds of ``iterations`` evaluations (default ``m_target``) are repeated
    until the positive bucket holds ``m_target`` draws and the negative one
    ``m_neg`` (default ``m_target``), or ``max_rounds`` extensions are used.
    """
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    m_neg = m_target if m_neg is None else m_neg
    iterations = iterations or max(m_target, m_neg, 1)
    init = problem.init if init is None else np.asarray(init, dtype=float)
    path = branch_path(problem, "abs")
    if not path.base.in_support(init)[0]:
        raise ConfigurationError("init must satisfy f(x) != 0 inside the density support")
    ids = _stream_ids("abs", 1)
    first = sampler.draw_path(path, [beta], iterations, [seed], ids, init, keep_samples=True)[0]
    return _split_row(path, [beta], iterations, m_target, m_neg, sampler, seed, first, 0, 1,
                      max_rounds, keep_samples=True)[0]


def _branch_init(problem, part, candidates):
    path = branch_path(problem, part)
    if path.base is problem.density:
        return problem.init
    for start in (problem.init, problem.phi_init):
        if (candidates is None or len(candidates) == 0) and path.base.in_support(start)[0]:
            return start
    if candidates is None or len(candidates) == 0:
        raise InitializationError(f"no starting point inside the {part} branch support")
    return find_support_point(candidates, path.base.support)


def _sign_factors(f: SignedFunction, signs, k):
    r_pos, r_neg = _sign_fractions(signs)
    if not f.may_be_positive:
        r_pos = 0.0
    if not f.may_be_negative:
        r_neg = 0.0
    if r_pos == 0.0 and r_neg == 0.0:
        raise DegenerateFunctionError(f"f is zero on all {k} posterior correction samples")
    return r_pos, r_neg


def _correction_draws(problem, cfg, sampler, seeds, iterations, stream_ids):
    path = branch_path(problem, "abs", restricted=False)
    rows = sampler.draw_path(path, [0.0], iterations, seeds, stream_ids, problem.init,
                             keep_samples=True)
    return [row[0] for row in rows]


def gti_generic_many(problem: TargetProblem, cfg: GtiConfig, sampler, seeds,
                     return_exceptions: bool = False) -> list:
    """:func:`gti_generic` for several replicate seeds (see :func:`gti_positive_many`)."""
    if cfg.acceleration != "none":
        return _gti_accelerated_many(problem, cfg, sampler, seeds, return_exceptions)
    seeds = _seeds(seeds)
    f = problem.f
    corr = _correction_draws(problem, cfg, sampler, seeds, cfg.k_correction,
                             _stream_ids("correction", cfg.n))
    state = []
    for d in corr:
        try:
            r = _sign_factors(f, d.signs, cfg.k_correction)
            state.append({"r": dict(zip(("pos", "neg"), r)), "eta": {"pos": -math.inf, "neg": -math.inf},
                          "e": {}, "v": {}, "budget": d.n_evals})
        except GTIError as exc:
            state.append(exc)
    for part in ("pos", "neg"):
        live, inits = [], []
        for i, st in enumerate(state):
            if isinstance(st, Exception) or st["r"][part] == 0.0:
                continue
            try:
                inits.append(_branch_init(problem, part, corr[i].samples))
                live.append(i)
            except GTIError as exc:
                state[i] = exc
        if not live:
            continue
        rows = sampler.draw_path(branch_path(problem, part), cfg.ladder.betas, cfg.m_per_node,
                                 [seeds[i] for i in live], _stream_ids(part, cfg.n), np.array(inits))
        for i, row in zip(live, rows):
            st = state[i]
            values = [d.log_values for d in row]
            st["budget"] += sum(d.n_evals for d in row)
            try:
                st["eta"][part], st["e"][part] = _integrate_values(values, cfg)
                st["v"][part] = values
            except GTIError as exc:
                state[i] = exc
    out = []
    for st, d in zip(state, corr):
        if isinstance(st, Exception):
            out.append(st)
            continue
        try:
            out.append(_make_result(st["eta"]["pos"], st["eta"]["neg"], st["r"]["pos"], st["r"]["neg"],
                                    st["e"], st["v"], st["budget"], cfg.k_correction,
                                    d.signs))
        except GTIError as exc:
            out.append(exc)
    return _settle(out, return_exceptions)


def gti_generic(problem: TargetProblem, cfg: GtiConfig, sampler, seed: int = 0) -> GtiResult:
    """GTI for any real ``f``: restricted paths for ``f+`` and ``f-`` plus correction factors."""
    return gti_generic_many(problem, cfg, sampler, [seed])[0]


def _gti_accelerated_many(problem, cfg, sampler, seeds, return_exceptions):
    seeds = _seeds(seeds)
    f = problem.f
    betas = list(cfg.ladder.betas)
    n = cfg.n
    full = cfg.acceleration == "full"
    if full:
        # the beta = 0 chain on the unrestricted posterior doubles as the correction sample
        corr = _correction_draws(problem, cfg, sampler, seeds, cfg.m_per_node, _stream_ids("abs", n)[:1])
        k_used, node_betas, offset = 0, betas[1:], 1
    else:
        corr = _correction_draws(problem, cfg, sampler, seeds, cfg.k_correction,
                                 _stream_ids("correction", n))
        k_used, node_betas, offset = cfg.k_correction, betas, 0
    state, live, inits = [], [], []
    for i, d in enumerate(corr):
        try:
            r_pos, r_neg = _sign_factors(f, d.signs, len(d.signs))
            m_pos = cfg.abs_bucket_target if r_pos > 0 else 0
            m_neg = cfg.abs_bucket_target if r_neg > 0 else 0
            if full and (np.count_nonzero(d.signs > 0) < m_pos or np.count_nonzero(d.signs < 0) < m_neg):
                raise UndersampledBranchError(
                    "posterior chain at beta=0 has no draws of a required sign",
                    int(np.count_nonzero(d.signs > 0)), int(np.count_nonzero(d.signs < 0)),
                )
            inits.append(_branch_init(problem, "abs", d.samples))
            live.append(i)
            state.append((r_pos, r_neg, m_pos, m_neg))
        except GTIError as exc:
            state.append(exc)
    path = branch_path(problem, "abs")
    first = []
    if live:
        first = sampler.draw_path(path, node_betas, cfg.m_per_node, [seeds[i] for i in live],
                                  _stream_ids("abs", n)[offset:], np.array(inits))
    out = list(state)
    for i, row in zip(live, first):
        r_pos, r_neg, m_pos, m_neg = state[i]
        d = corr[i]
        try:
            splits = _split_row(path, node_betas, cfg.m_per_node, m_pos, m_neg, sampler, seeds[i], row,
                                offset, n, cfg.abs_max_rounds)
            if full:
                splits.insert(0, AbsSplit(None, None, d.log_values[d.signs > 0], d.log_values[d.signs < 0],
                                          d.n_evals, 1, d.final_state))
            budget = sum(s.n_evals for s in splits) + (0 if full else d.n_evals)
            etas = {"pos": -math.inf, "neg": -math.inf}
            e_nodes, values = {}, {}
            if r_pos > 0:
                values["pos"] = [s.pos_log_values for s in splits]
                etas["pos"], e_nodes["pos"] = _integrate_values(values["pos"], cfg)
            if r_neg > 0:
                values["neg"] = [s.neg_log_values for s in splits]
                etas["neg"], e_nodes["neg"] = _integrate_values(values["neg"], cfg)
            out[i] = _make_result(etas["pos"], etas["neg"], r_pos, r_neg, e_nodes, values, budget, k_used,
                                  d.signs)
        except GTIError as exc:
            out[i] = exc
    return _settle(out, return_exceptions)


def gti_many(problem: TargetProblem, cfg: GtiConfig, sampler, seeds,
             return_exceptions: bool = False) -> list:
    """Batched :func:`gti` over replicate seeds."""
    if problem.f.declared_sign == "strictly-positive" and cfg.acceleration == "none":
        return gti_positive_many(problem, cfg, sampler, seeds, return_exceptions)
    return gti_generic_many(problem, cfg, sampler, seeds, return_exceptions)


def gti(problem: TargetProblem, cfg: GtiConfig, sampler, seed: int = 0) -> GtiResult:
    """Dispatch on the declared sign: single path when ``f > 0``, sign split otherwise."""
    return gti_many(problem, cfg, sampler, [seed])[0]


def evidence_problem(prior: LogDensity, log_likelihood: Callable,
                     strictly_positive: bool = True) -> TargetProblem:
    """Recast ``log Z`` as the GTI problem with ``pi`` = prior and ``f`` = likelihood."""
    kind = "strictly-positive" if strictly_positive else "nonnegative"
    lik = SignedFunction.from_log(log_likelihood, prior.dim, declared_sign=kind, name="likelihood")
    return TargetProblem(prior, lik, name="evidence")


def ti_log_evidence(prior: LogDensity, log_likelihood: Callable, cfg: GtiConfig, sampler,
                    seed: int = 0, strictly_positive: bool = True, full_output: bool = False):
    """Standard thermodynamic integration for ``log Z`` via the power-posterior path.

    The prior plays the role of ``pi`` and the likelihood that of ``f``.  A
    likelihood with zero regions (``strictly_positive=False``) goes through
    the restricted-prior path with a correction factor.
    """
    problem = evidence_problem(prior, log_likelihood, strictly_positive)
    if strictly_positive:
        res = gti_positive(problem, cfg, sampler, seed)
    else:
        res = gti_generic(problem, cfg, sampler, seed)
    log_z = res.signed.log_mag
    return (log_z, res) if full_output else log_z


def _component_seed(seed: int, name: str) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


def gti_vector(problem: TargetProblem, components: Sequence[SignedFunction], cfg: GtiConfig,
               sampler, seed: int = 0) -> list:
    """Independent GTI run per component of a vector-valued ``f``.

    Component seeds derive from the component name, so reordering components
    reorders the results without changing them.  Errors carry ``.component``.
    """
    names = [c.name for c in components]
    if len(set(names)) != len(names):
        raise ConfigurationError("vector components need distinct names")
    out = []
    for j, comp in enumerate(components):
        try:
            out.append(gti(problem.with_function(comp), cfg, sampler, _component_seed(seed, comp.name)))
        except GTIError as exc:
            exc.component = j
            exc.args = (f"component {j} ({comp.name}): {exc}",)
            raise
    return out


def vector_components(fn: Callable, dim: int, d_f: int, names: Optional[Sequence[str]] = None,
                      declared_sign: str = "general") -> list:
    """Split a batch vector function ``(n, D) -> (n, d_f)`` into signed components."""
    names = list(names) if names is not None else [f"f{j}" for j in range(d_f)]

    def component(j):
        return lambda X: np.asarray(fn(X), dtype=float)[:, j]

    return [SignedFunction.from_real(component(j), dim, declared_sign=declared_sign, name=names[j])
            for j in range(d_f)]


def bootstrap_eta(node_values, ladder: Ladder, quadrature: str = "trapezoid", n_boot: int = 200,
                  rng=None, block: Optional[int] = None) -> np.ndarray:
    """Bootstrap replicates of the integrated log-ratio.

    Each node's draws are resampled independently (circular blocks of length
    ``block``, default sqrt of the node size) and re-integrated.
    """
    rng = np.random.default_rng(rng)
    w = quadrature_weights(ladder, quadrature)
    means = np.empty((len(node_values), n_boot))
    for i, v in enumerate(node_values):
        b = block if block is not None else max(1, int(math.ceil(math.sqrt(len(v)))))
        means[i] = block_bootstrap_means(v, n_boot, rng, b)
    return w @ means
