"""Self-normalized importance sampling and optimal iterative bridge sampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .density import SignedFunction
from .errors import ConfigurationError, EstimationError
from .signed import SignedLogValue

log = logging.getLogger(__name__)

BRIDGE_T_MAX = 50
BRIDGE_TOL = 1e-10
BRIDGE_FLOOR = 1e-300


def _log_mean_exp(a) -> float:
    # max-shifted so that a constant array returns its value exactly
    a = np.asarray(a, dtype=float)
    m = np.max(a)
    if m == -np.inf:
        return -math.inf
    return float(m + math.log(np.sum(np.exp(a - m)) / len(a)))


def snis_signed(log_weights, f_sign, f_log_mag) -> SignedLogValue:
    """``sum_i wbar_i f(x_i)`` from log-weights and (sign, log|f|) values."""
    lw = np.asarray(log_weights, dtype=float)
    s = np.asarray(f_sign)
    lm = np.asarray(f_log_mag, dtype=float)
    if not (len(lw) == len(s) == len(lm)):
        raise ConfigurationError("log_weights and f values must have equal length")
    if len(lw) == 0 or not np.any(np.isfinite(lw)):
        raise EstimationError("SNIS needs at least one finite log weight")
    lw = np.where(np.isnan(lw), -np.inf, lw)
    shift = np.max(lw)
    lw = lw - shift
    log_norm = logsumexp(lw)

    def part(mask):
        if not np.any(mask):
            return SignedLogValue.zero()
        return SignedLogValue.from_log(float(logsumexp(lw[mask] + lm[mask]) - log_norm))

    return part(s > 0) - part(s < 0)


def snis(samples, log_weights, f: SignedFunction) -> float:
    """Self-normalized IS estimate of ``E_pi[f]`` from proposal draws.

    ``log_weights[i] = log pi(x_i) - log q(x_i)`` up to any common constant.
    Uniform weights (``q`` = posterior) give the plain MCMC average.
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) != len(log_weights):
        raise ConfigurationError("samples and log_weights must have equal length")
    sign, log_mag = f.eval_batch(samples)
    return snis_signed(log_weights, sign, log_mag).to_real()


@dataclass
class BridgeResult:
    estimate: float
    log_estimate: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def __float__(self):
        return self.estimate


def bridge_from_logs(lpi_x, lphi_x, lpi_z, lphi_z, t_max: int = BRIDGE_T_MAX,
                     tol: float = BRIDGE_TOL, init=None) -> BridgeResult:
    """Iterative optimal bridge estimate of ``c / Z`` from log-density values.

    ``x`` are draws from the normalized ``pi``, ``z`` from the normalized
    ``phi``.  ``init`` defaults to the mean of ``phi/pi`` over the ``x`` draws.
    """
    lpi_x, lphi_x = np.asarray(lpi_x, float), np.asarray(lphi_x, float)
    lpi_z, lphi_z = np.asarray(lpi_z, float), np.asarray(lphi_z, float)
    n1, n2 = len(lpi_x), len(lpi_z)
    if n1 < 1 or n2 < 1:
        raise ConfigurationError("bridge sampling needs N1, N2 >= 1")
    if len(lphi_x) != n1 or len(lphi_z) != n2:
        raise ConfigurationError("log-density arrays must match their sample sets")
    # log(phi/pi) at each draw; the update only depends on these ratios
    with np.errstate(invalid="ignore"):
        lr_x = np.where(lphi_x == -np.inf, -np.inf, lphi_x - lpi_x)
        lr_z = np.where(lphi_z == -np.inf, -np.inf, lphi_z - lpi_z)
    return bridge_from_log_ratios(lr_x, lr_z, t_max, tol, init)


def bridge_from_log_ratios(lr_x, lr_z, t_max: int = BRIDGE_T_MAX, tol: float = BRIDGE_TOL,
                           init=None) -> BridgeResult:
    """Bridge iteration from ``log(phi/pi)`` at the ``pi`` draws and at the ``phi`` draws."""
    lr_x, lr_z = np.asarray(lr_x, float), np.asarray(lr_z, float)
    n1, n2 = len(lr_x), len(lr_z)
    if n1 < 1 or n2 < 1:
        raise ConfigurationError("bridge sampling needs N1, N2 >= 1")
    if np.any(np.isnan(lr_x)) or np.any(np.isnan(lr_z)):
        raise EstimationError("undefined density ratio at a bridge sample")
    if init is None:
        log_i = _log_mean_exp(lr_x)
        start = math.exp(log_i)
    else:
        log_i = math.log(init) if init > 0 else -math.inf
        start = float(init)
    if log_i == -math.inf:
        log.warning("bridge initial estimate is not positive; using floor %g", BRIDGE_FLOOR)
        log_i, start = math.log(BRIDGE_FLOOR), BRIDGE_FLOOR
    log_n1, log_n2 = math.log(n1), math.log(n2)
    # factor out a reference ratio so that a constant ratio cancels exactly
    ref = float(np.max(lr_x))
    if ref == -math.inf:
        raise EstimationError("phi vanishes at every pi draw; the bridge ratio is undefined")
    lr_x_ref = lr_x - ref
    history = [start]
    converged = False
    t = 0
    for t in range(1, t_max + 1):
        # phi/(N2 phi + N1 I pi) = r/(N2 r + N1 I) and pi/(...) = 1/(N2 r + N1 I)
        dx = np.logaddexp(log_n2 + lr_x, log_n1 + log_i)
        dz = np.logaddexp(log_n2 + lr_z, log_n1 + log_i)
        log_new = ref + (_log_mean_exp(lr_x_ref - dx) - _log_mean_exp(-dz))
        if not math.isfinite(log_new):
            raise EstimationError(f"bridge iterate became {log_new} at t={t}")
        rel = abs(math.expm1(log_new - log_i))
        log_i = log_new
        history.append(math.exp(log_i))
        if rel < tol:
            converged = True
            break
    if not converged:
        log.warning("bridge sampling did not converge in %d iterations", t_max)
    return BridgeResult(math.exp(log_i), log_i, t, converged, history)


def bridge_sampling(samples_pi, samples_phi, log_pi, log_phi, t_max: int = BRIDGE_T_MAX,
                    tol: float = BRIDGE_TOL, init=None) -> BridgeResult:
    """Optimal bridge sampling between ``pi`` and ``phi = f pi`` (``f >= 0``)."""
    x = np.asarray(samples_pi, dtype=float)
    z = np.asarray(samples_phi, dtype=float)
    return bridge_from_logs(log_pi(x), log_phi(x), log_pi(z), log_phi(z), t_max, tol, init)
