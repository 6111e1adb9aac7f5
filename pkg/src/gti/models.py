"""Benchmark problems with closed-form structure and ground-truth oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .density import LogDensity, SignedFunction, TargetProblem, TemperedPath
from .errors import ConfigurationError, DomainError, OracleResolutionError
from .mcmc import chain_streams
from .samplers import NodeDraw
from .signed import SignedLogValue

LOG_2PI = math.log(2.0 * math.pi)


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")


# --------------------------------------------------------------------------
# Gaussian model: prior N(0, I), likelihood N(-a 1 | x, I), f = N(x | a 1, I/2)
# with a = y / sqrt(D).
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianModel:
    y: float
    d: int

    def __post_init__(self):
        if int(self.d) < 1:
            raise ConfigurationError("d must be >= 1")

    @property
    def a(self) -> float:
        return self.y / math.sqrt(self.d)

    def log_prior(self, X):
        return -0.5 * np.sum(X * X, axis=1) - 0.5 * self.d * LOG_2PI

    def log_likelihood(self, X):
        r = X + self.a
        return -0.5 * np.sum(r * r, axis=1) - 0.5 * self.d * LOG_2PI

    def log_posterior(self, X):
        return self.log_prior(X) + self.log_likelihood(X)

    def log_f(self, X):
        r = X - self.a
        return -0.5 * self.d * math.log(math.pi) - np.sum(r * r, axis=1)

    def problem(self) -> TargetProblem:
        dens = LogDensity(self.log_posterior, self.d, name=f"gauss(y={self.y},D={self.d})")
        f = SignedFunction.from_log(self.log_f, self.d, name="f")
        return TargetProblem(dens, f, init=np.zeros(self.d), name="gaussian")

    def prior_density(self) -> LogDensity:
        return LogDensity(self.log_prior, self.d, name="gauss-prior")

    def tempered(self, beta: float):
        return gaussian_tempered(self, beta)

    def truth(self) -> float:
        return gaussian_truth(self)

    def log_truth(self) -> float:
        return -0.5 * self.d * LOG_2PI - 9.0 / 8.0 * self.y**2

    def log_evidence(self) -> float:
        """``log Z`` with the normalized prior and likelihood above."""
        return -0.5 * self.d * math.log(4.0 * math.pi) - self.y**2 / 4.0

    def node_expectation_exact(self, beta: float) -> float:
        return gaussian_node_expectation_exact(self, beta)


def gaussian_tempered(m: GaussianModel, beta: float):
    """Mean coefficient (times ``a 1``) and per-axis variance of ``f^beta pi`` normalized."""
    _check_beta(beta)
    return (2.0 * beta - 1.0) / (2.0 * beta + 2.0), 1.0 / (2.0 * beta + 2.0)


def gaussian_truth(m: GaussianModel) -> float:
    return (2.0 * math.pi) ** (-0.5 * m.d) * math.exp(-9.0 / 8.0 * m.y**2)


def gaussian_node_expectation_exact(m: GaussianModel, beta: float) -> float:
    """Exact ``E[log f]`` under the tempered law at ``beta``."""
    coeff, var = gaussian_tempered(m, beta)
    sep2 = m.d * ((coeff - 1.0) * m.a) ** 2
    return -0.5 * m.d * math.log(math.pi) - (m.d * var + sep2)


class ExactGaussianSampler:
    """I.i.d. draws from the closed-form tempered laws of a :class:`GaussianModel`.

    Valid for the positive / absolute path of the model's own posterior.
    Each draw is charged one evaluation of the path so budgets match MH.
    """

    def __init__(self, model: GaussianModel):
        self.model = model

    def __repr__(self):
        return f"ExactGaussianSampler({self.model})"

    def draw_path(self, path: TemperedPath, betas, iterations, seeds, stream_ids, inits=None,
                  keep_samples=False, warm_start=None):
        """Draws indexed ``[replicate][node]``; ``inits`` and ``warm_start`` are ignored."""
        if path.part == "neg":
            raise ConfigurationError("the Gaussian f is positive: no negative branch to sample")
        m = self.model
        betas = [float(b) for b in betas]
        params = [gaussian_tempered(m, b) for b in betas]
        out = []
        for seed in seeds:
            row = []
            for beta, (coeff, var), sid in zip(betas, params, stream_ids):
                rng = chain_streams(seed, sid)[0]
                X = coeff * m.a + math.sqrt(var) * rng.standard_normal((int(iterations), m.d))
                _, sign, log_mag = path.evaluate(X, beta)
                row.append(
                    NodeDraw(
                        beta=beta, signs=sign, log_values=log_mag, final_state=X[-1].copy(),
                        n_evals=int(iterations), samples=X if keep_samples else None,
                        seed=int(seed), stream_id=int(sid),
                    )
                )
            out.append(row)
        return out


# --------------------------------------------------------------------------
# Banana model on the box B = (-25, 25) x (-40, 20)
# --------------------------------------------------------------------------

BOX = ((-25.0, 25.0), (-40.0, 20.0))
BOX_AREA = 50.0 * 60.0
F_THRESHOLD = -10.0


def _in_box(X):
    return (X[:, 0] > BOX[0][0]) & (X[:, 0] < BOX[0][1]) & (X[:, 1] > BOX[1][0]) & (X[:, 1] < BOX[1][1])


def _banana_log_kernel(X):
    x1, x2 = X[:, 0], X[:, 1]
    return -0.5 * (0.03 * x1 * x1 + (x2 / 2.0 + 0.03 * (x1 * x1 - 100.0)) ** 2)


def _banana_f_support(X):
    return X[:, 1] > F_THRESHOLD


def _banana_f(X):
    x1, x2 = X[:, 0], X[:, 1]
    pos = x2 > F_THRESHOLD
    log_mag = np.full(len(X), -np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        log_mag[pos] = np.log(x2[pos] - F_THRESHOLD) - 0.25 * (x1[pos] + x2[pos] + 25.0) ** 2
    return pos.astype(np.int8), log_mag


class BananaModel:
    """Two-dimensional banana posterior with a nonnegative ``f`` that vanishes for ``x2 <= -10``."""

    dim = 2
    box = BOX
    # Richardson-extrapolated midpoint grid at grid_n = 4000 (see banana_truth)
    REFERENCE_TRUTH = 0.0021142786940437355
    # integral of the likelihood kernel over the box from the same oracle run
    REFERENCE_KERNEL_INTEGRAL = 72.55089337400024

    def density(self) -> LogDensity:
        return LogDensity(_banana_log_kernel, 2, support=_in_box, name="banana")

    def function(self) -> SignedFunction:
        return SignedFunction(
            _banana_f, 2, declared_sign="nonnegative", name="f",
            pos_support=_banana_f_support, neg_support=lambda X: np.zeros(len(X), dtype=bool),
        )

    def problem(self) -> TargetProblem:
        return TargetProblem(self.density(), self.function(), init=self.box_center(),
                             phi_init=np.zeros(2), name="banana")

    @staticmethod
    def box_center() -> np.ndarray:
        return np.array([0.5 * (BOX[0][0] + BOX[0][1]), 0.5 * (BOX[1][0] + BOX[1][1])])

    def prior_density(self) -> LogDensity:
        """Uniform prior density on the box."""
        return LogDensity(lambda X: np.full(len(X), -math.log(BOX_AREA)), 2, support=_in_box,
                          name="banana-prior")

    @staticmethod
    def log_likelihood(X):
        return _banana_log_kernel(X)

    def truth(self) -> float:
        return self.REFERENCE_TRUTH

    def log_evidence(self) -> float:
        """``log Z`` under the uniform prior on the box."""
        return math.log(self.REFERENCE_KERNEL_INTEGRAL / BOX_AREA)


def banana_eval(x):
    """``(log pi(x), f(x))`` at one point."""
    X = np.asarray(x, dtype=float).reshape(1, 2)
    inside = _in_box(X)[0]
    log_pi = float(_banana_log_kernel(X)[0]) if inside else -math.inf
    s, lm = _banana_f(X)
    return log_pi, SignedLogValue(int(s[0]), float(lm[0]))


def _midpoint_integrals(n: int, chunk: int = 400):
    (a1, b1), (a2, b2) = BOX
    h1, h2 = (b1 - a1) / n, (b2 - a2) / n
    x1 = a1 + h1 * (np.arange(n) + 0.5)
    x2 = a2 + h2 * (np.arange(n) + 0.5)
    num = den = 0.0
    for s in range(0, n, chunk):
        g1 = np.repeat(x1[s : s + chunk], n)
        g2 = np.tile(x2, len(x1[s : s + chunk]))
        X = np.column_stack([g1, g2])
        p = np.exp(_banana_log_kernel(X))
        sign, lm = _banana_f(X)
        fp = np.where(sign > 0, np.exp(lm), 0.0) * p
        num += fp.sum()
        den += p.sum()
    return num * h1 * h2, den * h1 * h2


@dataclass(frozen=True)
class GridOracle:
    value: float
    error: float
    numerator: float
    evidence: float
    grid_n: int

    @property
    def rel_error(self) -> float:
        return self.error / abs(self.value)


def banana_truth(grid_n: int = 4000, rel_tol: float = 1e-6) -> GridOracle:
    """Ground truth ``E[f]`` by Richardson-extrapolated midpoint quadrature over the box.

    The midpoint rule is run at ``n``, ``n/2`` and ``n/4``; the
    extrapolated value at ``n`` is returned and its error is estimated by
    the difference to the extrapolated value at ``n/2``.
    """
    if grid_n < 1000:
        raise ConfigurationError("grid_n must be >= 1000")
    if grid_n % 4:
        raise ConfigurationError("grid_n must be divisible by 4")
    raw = {k: _midpoint_integrals(k) for k in (grid_n, grid_n // 2, grid_n // 4)}

    def extrap(k):
        (n1, d1), (n2, d2) = raw[k], raw[k // 2]
        return n1 + (n1 - n2) / 3.0, d1 + (d1 - d2) / 3.0

    num, den = extrap(grid_n)
    num_h, den_h = extrap(grid_n // 2)
    value = num / den
    err = abs(value - num_h / den_h)
    if err > rel_tol * abs(value):
        raise OracleResolutionError(
            f"grid oracle relative error {err / abs(value):.3g} exceeds {rel_tol:g}; increase grid_n"
        )
    return GridOracle(value, err, num, den, grid_n)


# --------------------------------------------------------------------------
# One-dimensional conjugate model for evidence checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConjugateNormalModel:
    """Prior ``N(0, 1)`` and likelihood ``N(y | x, 1)`` in one dimension."""

    y: float = 1.0

    def prior_density(self) -> LogDensity:
        return LogDensity(lambda X: -0.5 * X[:, 0] ** 2 - 0.5 * LOG_2PI, 1, name="N(0,1)")

    def log_likelihood(self, X):
        return -0.5 * (self.y - X[:, 0]) ** 2 - 0.5 * LOG_2PI

    def log_evidence(self) -> float:
        return -0.5 * math.log(4.0 * math.pi) - self.y**2 / 4.0

    def power_posterior(self, beta: float):
        _check_beta(beta)
        return beta * self.y / (1.0 + beta), 1.0 / (1.0 + beta)

    def node_expectation_exact(self, beta: float) -> float:
        mean, var = self.power_posterior(beta)
        return -0.5 * LOG_2PI - 0.5 * ((self.y - mean) ** 2 + var)


MODEL_NAMES = ("gaussian", "banana", "conjugate")


def model_from_name(name: str, params: dict):
    if name == "gaussian":
        return GaussianModel(float(params.get("y", 2.0)), int(params.get("d", params.get("D", 10))))
    if name == "banana":
        return BananaModel()
    if name == "conjugate":
        return ConjugateNormalModel(float(params.get("y", 1.0)))
    raise ConfigurationError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


def exact_node_expectations(model: GaussianModel, betas: Sequence[float]) -> np.ndarray:
    return np.array([gaussian_node_expectation_exact(model, b) for b in betas])
