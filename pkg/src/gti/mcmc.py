"""Random-walk Metropolis-Hastings with one reproducible RNG stream per chain.

The kernel advances a batch of independent chains in lock-step so that the
Python loop runs once per iteration, not once per chain and iteration.  Each
chain draws its proposal noise and acceptance uniforms from its own pair of
generators derived from ``(seed, stream_id)``, so a chain's trajectory does
not depend on which other chains share its batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .density import LogDensity
from .errors import ConfigurationError, InitializationError

DEFAULT_BURN_FRACTION = 0.1
INIT_MAX_TRIALS = 10_000
_CHUNK = 2048


@dataclass(frozen=True)
class ProposalSpec:
    """Isotropic Gaussian random walk with per-axis variance ``sigma2``."""

    sigma2: float
    kind: str = "gaussian-random-walk"

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2}")
        if self.kind != "gaussian-random-walk":
            raise ConfigurationError(f"unsupported proposal kind {self.kind!r}")

    @property
    def scale(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class ChainConfig:
    n_samples: int
    burn_in: Optional[int] = None
    thin: int = 1
    init: Optional[np.ndarray] = field(default=None, compare=False)
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if int(self.n_samples) < 1:
            raise ConfigurationError("n_samples must be positive")
        if int(self.thin) < 1:
            raise ConfigurationError("thin must be >= 1")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", int(DEFAULT_BURN_FRACTION * self.n_samples))
        if int(self.burn_in) < 0:
            raise ConfigurationError("burn_in must be nonnegative")
        if self.stream_id < 0:
            raise ConfigurationError("stream_id must be nonnegative")

    @classmethod
    def from_iterations(cls, iterations: int, burn_fraction: float = DEFAULT_BURN_FRACTION, **kw):
        """Config spending exactly ``iterations`` target evaluations (thin = 1)."""
        iterations = int(iterations)
        if iterations < 1:
            raise ConfigurationError("a chain needs at least one iteration")
        burn = min(int(burn_fraction * iterations), iterations - 1)
        return cls(n_samples=iterations - burn, burn_in=burn, thin=1, **kw)

    @property
    def total_iterations(self) -> int:
        return self.burn_in + self.n_samples * self.thin


@dataclass
class ChainOutput:
    samples: Optional[np.ndarray]
    accept_rate: float
    n_target_evals: int
    final_state: np.ndarray
    final_logp: float
    logp: Optional[np.ndarray]
    aux: Optional[np.ndarray] = None
    seed: int = 0
    stream_id: int = 0


def chain_streams(seed: int, stream_id: int):
    """Independent (proposal, acceptance) generators for one chain."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    prop_ss, acc_ss = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(prop_ss)), np.random.Generator(np.random.PCG64(acc_ss))


def _density_target(d: LogDensity):
    def target(X, count=True):
        return d.log_prob(X, count=count), None

    return target


def mh_step(current, current_logp: float, target: LogDensity, prop: ProposalSpec, rng):
    """One Metropolis-Hastings transition from ``current``.

    Returns ``(state, logp, accepted)``; evaluates the target exactly once.
    """
    current = np.asarray(current, dtype=float)
    proposal = current + prop.scale * rng.standard_normal(current.shape)
    lp_new = float(target.log_prob(proposal[None, :])[0])
    u = rng.random()
    if lp_new != -math.inf and (u == 0.0 or math.log(u) < lp_new - current_logp):
        return proposal, lp_new, True
    return current, current_logp, False


def run_chains(
    target: Callable,
    cfgs: Sequence[ChainConfig],
    proposal: ProposalSpec,
    inits=None,
    store_samples: bool = True,
    record_logp: bool = True,
) -> list:
    """Advance a batch of independent chains sharing one length schedule.

    ``target(X, count=True)`` must return ``(logp, aux)`` where ``aux`` is
    ``None`` or an ``(n, k)`` array of per-point extras recorded alongside
    the chain (e.g. the sign and log-magnitude of ``f``).  Row ``i`` of ``X``
    always belongs to chain ``i``.
    """
    cfgs = list(cfgs)
    if not cfgs:
        return []
    c0 = cfgs[0]
    for c in cfgs[1:]:
        if (c.n_samples, c.burn_in, c.thin) != (c0.n_samples, c0.burn_in, c0.thin):
            raise ConfigurationError("chains in one batch must share n_samples, burn_in and thin")
    if inits is None:
        inits = [c.init for c in cfgs]
    if any(x is None for x in inits):
        raise InitializationError("every chain needs an initial point")
    x = np.array([np.asarray(p, dtype=float) for p in inits])
    n, dim = x.shape

    lp, aux = target(x, count=False)
    lp = np.array(lp, dtype=float)
    bad = np.flatnonzero(~np.isfinite(lp))
    if bad.size:
        raise InitializationError(f"initial point of chain {int(bad[0])} lies outside the target support")
    aux = None if aux is None else np.array(aux, dtype=float)

    m, burn, thin = c0.n_samples, c0.burn_in, c0.thin
    total = c0.total_iterations
    rec_lp = np.empty((m, n)) if record_logp else None
    rec_aux = None if aux is None else np.empty((m, n, aux.shape[1]))
    rec_x = np.empty((m, n, dim)) if store_samples else None
    accepted = np.zeros(n, dtype=np.int64)
    streams = [chain_streams(c.seed, c.stream_id) for c in cfgs]
    scale = proposal.scale

    t = 0
    k = 0
    while t < total:
        size = min(_CHUNK, total - t)
        noise = np.stack([g.standard_normal((size, dim)) for g, _ in streams], axis=1)
        noise *= scale
        with np.errstate(divide="ignore"):
            log_u = np.log(np.stack([a.random(size) for _, a in streams], axis=1))
        for j in range(size):
            prop = x + noise[j]
            lpp, auxp = target(prop)
            acc = log_u[j] < lpp - lp
            if acc.any():
                x[acc] = prop[acc]
                lp[acc] = lpp[acc]
                if aux is not None:
                    aux[acc] = auxp[acc]
                accepted += acc
            t += 1
            if t > burn and (t - burn) % thin == 0:
                if rec_lp is not None:
                    rec_lp[k] = lp
                if rec_aux is not None:
                    rec_aux[k] = aux
                if rec_x is not None:
                    rec_x[k] = x
                k += 1

    out = []
    for i, c in enumerate(cfgs):
        out.append(
            ChainOutput(
                samples=None if rec_x is None else rec_x[:, i, :].copy(),
                accept_rate=float(accepted[i]) / total,
                n_target_evals=total,
                final_state=x[i].copy(),
                final_logp=float(lp[i]),
                logp=None if rec_lp is None else rec_lp[:, i].copy(),
                aux=None if rec_aux is None else rec_aux[:, i, :].copy(),
                seed=c.seed,
                stream_id=c.stream_id,
            )
        )
    return out


def run_chain(target: LogDensity, cfg: ChainConfig, proposal: ProposalSpec) -> ChainOutput:
    """Run one MH chain on ``target``; deterministic in ``(seed, stream_id)``."""
    if cfg.init is None:
        raise InitializationError("ChainConfig.init is required for run_chain")
    return run_chains(_density_target(target), [cfg], proposal)[0]


class FilterResult(NamedTuple):
    kept: np.ndarray
    frac_kept: float
    empty: bool


def filter_by_support(samples, s) -> FilterResult:
    """Keep the samples satisfying ``s`` (order preserved)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0 or len(samples) == 0:
        return FilterResult(samples.reshape(0, *samples.shape[1:]) if samples.ndim > 1 else samples, 0.0, True)
    keep = np.asarray(s(samples), dtype=bool)
    return FilterResult(samples[keep], float(keep.mean()), False)


def find_support_point(candidates, s, max_trials: int = INIT_MAX_TRIALS) -> np.ndarray:
    """Most recent candidate satisfying ``s``; candidates are scanned newest first."""
    candidates = np.asarray(candidates, dtype=float)
    if candidates.ndim != 2 or len(candidates) == 0:
        raise InitializationError("no candidate points to initialize from")
    trial = candidates[::-1][:max_trials]
    ok = np.flatnonzero(np.asarray(s(trial), dtype=bool))
    if ok.size == 0:
        raise InitializationError(
            f"none of {len(trial)} candidate points satisfies the support predicate"
        )
    return trial[ok[0]].copy()


def with_stream(cfg: ChainConfig, seed: int, stream_id: int, init=None) -> ChainConfig:
    return replace(cfg, seed=seed, stream_id=stream_id, init=cfg.init if init is None else init)
