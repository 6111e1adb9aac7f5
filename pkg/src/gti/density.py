"""Unnormalized log-densities, signed target functions and tempered paths.

Everything here works on batches: a batch is an ``(n, D)`` float array and
every evaluator returns length-``n`` arrays.  Single-point helpers wrap the
batch versions.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DomainError
from .signed import SignedLogValue, signed_log_arrays

BatchFn = Callable[[np.ndarray], np.ndarray]
Predicate = Callable[[np.ndarray], np.ndarray]

SIGN_KINDS = ("strictly-positive", "strictly-negative", "nonnegative", "nonpositive", "general")


class EvalCounter:
    """Thread-safe evaluation tally."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, n: int) -> None:
        with self._lock:
            self._count += int(n)

    @property
    def count(self) -> int:
        return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    def __repr__(self):
        return f"EvalCounter({self._count})"


def _always(X):
    return np.ones(len(X), dtype=bool)


def as_batch(x, dim: int) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ConfigurationError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return X


class LogDensity:
    """Unnormalized log-density ``log pi(x)`` with an explicit support predicate.

    ``fn`` is only ever called on rows inside ``support``; rows outside get
    ``-inf``.  Each evaluated row increments ``counter`` (shared by every
    density derived through :func:`restrict`).
    """

    def __init__(
        self,
        fn: BatchFn,
        dim: int,
        support: Optional[Predicate] = None,
        counter: Optional[EvalCounter] = None,
        name: str = "density",
    ):
        if int(dim) < 1:
            raise ConfigurationError("dim must be a positive integer")
        self.fn = fn
        self.dim = int(dim)
        self.support = support if support is not None else _always
        self.counter = counter if counter is not None else EvalCounter()
        self.name = name

    def log_prob(self, X, count: bool = True) -> np.ndarray:
        return self._log_prob_rows(as_batch(X, self.dim), count)

    def _log_prob_rows(self, X, count):
        # X is already a checked (n, D) float batch
        if count:
            self.counter.add(len(X))
        mask = np.asarray(self.support(X), dtype=bool)
        if mask.all():
            return np.asarray(self.fn(X), dtype=float)
        out = np.full(len(X), -np.inf)
        if mask.any():
            out[mask] = self.fn(X[mask])
        return out

    def in_support(self, X) -> np.ndarray:
        return np.asarray(self.support(as_batch(X, self.dim)), dtype=bool)

    def __call__(self, x) -> float:
        return float(self.log_prob(x)[0])

    def __repr__(self):
        return f"LogDensity({self.name!r}, dim={self.dim})"


def eval_log_density(d: LogDensity, x) -> float:
    """Evaluate ``log pi(x)`` at one point (counted)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (d.dim,):
        raise ConfigurationError(f"point has shape {x.shape}, density has dim {d.dim}")
    return d(x)


def restrict(d: LogDensity, s: Predicate, name: Optional[str] = None) -> LogDensity:
    """Density equal to ``d`` where ``s`` holds and ``-inf`` elsewhere.

    The predicate is checked before ``d``'s own model, so rejected points never
    reach the (possibly expensive) model function.  The evaluation counter is
    shared with ``d``.
    """
    base_support = d.support

    def support(X):
        keep = np.asarray(s(X), dtype=bool)
        if keep.any():
            keep[keep] = base_support(X[keep])
        return keep

    return LogDensity(d.fn, d.dim, support, counter=d.counter, name=name or f"{d.name}|restricted")


class SignedFunction:
    """Target function ``f`` evaluated as (sign, log|f|) pairs.

    ``fn`` maps an ``(n, D)`` batch to ``(sign, log_mag)`` arrays.  Use
    :meth:`from_real` or :meth:`from_log` to wrap plain callables.
    """

    def __init__(
        self,
        fn: Callable[[np.ndarray], tuple],
        dim: int,
        declared_sign: str = "general",
        name: str = "f",
        pos_support: Optional[Predicate] = None,
        neg_support: Optional[Predicate] = None,
        counter: Optional[EvalCounter] = None,
    ):
        if declared_sign not in SIGN_KINDS:
            raise ConfigurationError(f"declared_sign must be one of {SIGN_KINDS}")
        self.fn = fn
        self.dim = int(dim)
        self.declared_sign = declared_sign
        self.name = name
        self._pos_support = pos_support
        self._neg_support = neg_support
        self.counter = counter if counter is not None else EvalCounter()

    @classmethod
    def from_real(cls, fn: BatchFn, dim: int, **kw) -> "SignedFunction":
        def signed(X):
            return signed_log_arrays(fn(X))

        return cls(signed, dim, **kw)

    @classmethod
    def from_log(cls, log_fn: BatchFn, dim: int, sign: int = 1, **kw) -> "SignedFunction":
        """Wrap ``log|f|``; zeros are encoded as ``-inf``."""
        kw.setdefault("declared_sign", "strictly-positive" if sign > 0 else "strictly-negative")

        def signed(X):
            lm = np.asarray(log_fn(X), dtype=float)
            s = np.where(lm == -np.inf, 0, sign).astype(np.int8)
            return s, lm

        return cls(signed, dim, **kw)

    @classmethod
    def constant(cls, c: float, dim: int, name: Optional[str] = None) -> "SignedFunction":
        v = SignedLogValue.from_real(c)
        kind = {1: "strictly-positive", -1: "strictly-negative", 0: "general"}[v.sign]

        def fn(X):
            n = len(X)
            return np.full(n, v.sign, dtype=np.int8), np.full(n, v.log_mag)

        return cls(fn, dim, declared_sign=kind, name=name or f"const({c})")

    def eval_batch(self, X, count: bool = True):
        return self._eval_rows(as_batch(X, self.dim), count)

    def _eval_rows(self, X, count):
        if count:
            self.counter.add(len(X))
        sign, log_mag = self.fn(X)
        sign = np.asarray(sign, dtype=np.int8)
        log_mag = np.asarray(log_mag, dtype=float)
        return sign, np.where(sign == 0, -np.inf, log_mag)

    def __call__(self, x) -> SignedLogValue:
        s, lm = self.eval_batch(x)
        return SignedLogValue(int(s[0]), float(lm[0]))

    def pos_support(self, X) -> np.ndarray:
        X = as_batch(X, self.dim)
        if self._pos_support is not None:
            return np.asarray(self._pos_support(X), dtype=bool)
        if self.declared_sign in ("strictly-positive",):
            return np.ones(len(X), dtype=bool)
        if self.declared_sign in ("strictly-negative", "nonpositive"):
            return np.zeros(len(X), dtype=bool)
        return self.eval_batch(X, count=False)[0] > 0

    def neg_support(self, X) -> np.ndarray:
        X = as_batch(X, self.dim)
        if self._neg_support is not None:
            return np.asarray(self._neg_support(X), dtype=bool)
        if self.declared_sign in ("strictly-negative",):
            return np.ones(len(X), dtype=bool)
        if self.declared_sign in ("strictly-positive", "nonnegative"):
            return np.zeros(len(X), dtype=bool)
        return self.eval_batch(X, count=False)[0] < 0

    def nonzero_support(self, X) -> np.ndarray:
        return self.pos_support(X) | self.neg_support(X)

    @property
    def may_be_positive(self) -> bool:
        return self.declared_sign not in ("strictly-negative", "nonpositive")

    @property
    def may_be_negative(self) -> bool:
        return self.declared_sign not in ("strictly-positive", "nonnegative")

    def __repr__(self):
        return f"SignedFunction({self.name!r}, {self.declared_sign})"


@dataclass
class TargetProblem:
    """Unnormalized posterior ``pi`` together with the function ``f``."""

    density: LogDensity
    f: SignedFunction
    init: Optional[np.ndarray] = None
    name: str = "problem"
    # start for chains on f-weighted targets; must have f != 0 (defaults to init)
    phi_init: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.f.dim != self.density.dim:
            raise ConfigurationError("density and function dimensions differ")
        if self.init is None:
            self.init = np.zeros(self.density.dim)
        self.init = np.asarray(self.init, dtype=float)
        self.phi_init = self.init if self.phi_init is None else np.asarray(self.phi_init, dtype=float)

    @property
    def dim(self) -> int:
        return self.density.dim

    def with_function(self, f: SignedFunction) -> "TargetProblem":
        return TargetProblem(self.density, f, self.init, name=f"{self.name}[{f.name}]",
                             phi_init=self.phi_init)

    def reset_counters(self) -> None:
        self.density.counter.reset()
        self.f.counter.reset()


PARTS = ("pos", "neg", "abs")


@dataclass
class TemperedPath:
    """Geometric path ``log base(x) + beta * w(x)``.

    ``part`` picks the weight: ``log f+`` (``"pos"``), ``log f-`` (``"neg"``)
    or ``log|f|`` (``"abs"``).  The base is whatever density the branch is
    anchored at: the posterior itself or one of its sign restrictions.
    """

    base: LogDensity
    f: SignedFunction
    part: str = "pos"
    name: str = field(default="path")

    def __post_init__(self):
        if self.part not in PARTS:
            raise ConfigurationError(f"part must be one of {PARTS}")

    def _weight(self, sign, log_mag):
        if self.part == "pos":
            return np.where(sign > 0, log_mag, -np.inf)
        if self.part == "neg":
            return np.where(sign < 0, log_mag, -np.inf)
        return np.where(sign != 0, log_mag, -np.inf)

    def evaluate(self, X, beta, count: bool = True):
        """Return ``(log_density, f_sign, f_log_mag)`` for a batch.

        ``beta`` may be a scalar or one value per row.  ``f`` is evaluated only
        where the base density is finite; elsewhere sign is 0.
        """
        beta = np.asarray(beta, dtype=float)
        if np.any(beta < 0) or np.any(beta > 1) or np.any(np.isnan(beta)):
            raise DomainError(f"beta must lie in [0, 1], got {beta}")
        X = as_batch(X, self.base.dim)
        return self._evaluate(X, np.broadcast_to(beta, (len(X),)), count)

    def _evaluate(self, X, beta, count):
        # hot path: X is a checked (n, D) batch and beta a validated length-n array
        base_lp = self.base._log_prob_rows(X, count)
        n = len(X)
        if count:
            self.f.counter.add(n)
        live = base_lp > -np.inf
        if live.all():
            sign, log_mag = self.f._eval_rows(X, False)
        else:
            sign = np.zeros(n, dtype=np.int8)
            log_mag = np.full(n, -np.inf)
            if live.any():
                sign[live], log_mag[live] = self.f._eval_rows(X[live], False)
        w = self._weight(sign, log_mag)
        # 0 * -inf is taken as 0: at beta = 0 the base density is returned unchanged
        tempered = base_lp + np.where(beta == 0, 0.0, beta * np.where(w == -np.inf, 0.0, w))
        return np.where((beta > 0) & (w == -np.inf), -np.inf, tempered), sign, log_mag

    def weight(self, X) -> np.ndarray:
        sign, log_mag = self.f.eval_batch(X, count=False)
        return self._weight(sign, log_mag)

    def chain_target(self, betas):
        """Batch callable for the MH kernel: row ``i`` is tempered at ``betas[i]``.

        The auxiliary output carries ``(sign f, log|f|)`` so that node
        expectations and sign splits reuse the chain's own evaluations.
        """
        betas = np.asarray(betas, dtype=float)
        if betas.ndim != 1 or np.any(betas < 0) or np.any(betas > 1) or np.any(np.isnan(betas)):
            raise DomainError(f"betas must be a vector of values in [0, 1], got {betas}")

        def target(X, count=True):
            logp, sign, log_mag = self._evaluate(X, betas, count)
            aux = np.empty((len(X), 2))
            aux[:, 0] = sign
            aux[:, 1] = log_mag
            return logp, aux

        return target


def tempered_log_density(p: TemperedPath, x, beta: float) -> float:
    """``log base(x) + beta * weight(x)`` at one point, with ``0 * -inf = 0``."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    logp, _, _ = p.evaluate(np.asarray(x, dtype=float), beta)
    return float(logp[0])


def branch_path(problem: TargetProblem, part: str, restricted: bool = True) -> TemperedPath:
    """Tempered path for one branch of the sign decomposition.

    With ``restricted`` the base is the posterior restricted to the branch's
    support (``pi+``, ``pi-`` or ``pi * 1(f != 0)``).
    """
    f = problem.f
    base = problem.density
    if restricted:
        if part == "pos" and f.declared_sign != "strictly-positive":
            base = restrict(base, f.pos_support, name=f"{base.name}+")
        elif part == "neg" and f.declared_sign != "strictly-negative":
            base = restrict(base, f.neg_support, name=f"{base.name}-")
        elif part == "abs" and f.declared_sign not in ("strictly-positive", "strictly-negative"):
            base = restrict(base, f.nonzero_support, name=f"{base.name}|f!=0")
    return TemperedPath(base, f, part, name=f"{problem.name}:{part}")
