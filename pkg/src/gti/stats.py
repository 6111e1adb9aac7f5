"""Small statistical utilities: effective sample size and block bootstrap."""

from __future__ import annotations

import math

import numpy as np


def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    fx = np.fft.rfft(x, size)
    acov = np.fft.irfft(fx * np.conj(fx), size)[:n]
    if acov[0] == 0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    return acov / acov[0]


def ess(x) -> float:
    """Effective sample size with Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    rho = autocorrelation(x)
    # pair sums Gamma_k = rho_{2k} + rho_{2k+1}, truncated at first non-positive
    m = (n - 1) // 2
    gam = rho[0 : 2 * m : 2] + rho[1 : 2 * m + 1 : 2]
    neg = np.flatnonzero(gam <= 0)
    gam = gam[: neg[0]] if neg.size else gam
    if gam.size == 0:
        return float(n)
    gam = np.minimum.accumulate(gam)
    tau = -1.0 + 2.0 * gam.sum()
    return float(n / max(tau, 1.0 / n))


def default_block_length(n: int, iid: bool = False) -> int:
    return 1 if iid else max(1, int(math.ceil(math.sqrt(n))))


def block_bootstrap_means(values, n_boot: int, rng, block: int = 1) -> np.ndarray:
    """Means of ``n_boot`` circular block-bootstrap resamples of a series."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    block = max(1, min(int(block), n))
    n_blocks = -(-n // block)
    starts = rng.integers(0, n, size=(n_boot, n_blocks))
    idx = (starts[:, :, None] + np.arange(block)).reshape(n_boot, -1)[:, :n] % n
    return v[idx].mean(axis=1)


def bootstrap_se(statistic, samples, n_boot: int = 200, rng=None, block: int = 1) -> float:
    """Standard error of ``statistic(resample)`` over block-bootstrap resamples."""
    rng = np.random.default_rng(rng)
    samples = np.asarray(samples)
    n = len(samples)
    block = max(1, min(int(block), n))
    n_blocks = -(-n // block)
    vals = np.empty(n_boot)
    for b in range(n_boot):
        starts = rng.integers(0, n, size=n_blocks)
        idx = ((starts[:, None] + np.arange(block)).ravel()[:n]) % n
        vals[b] = statistic(samples[idx])
    return float(vals.std(ddof=1))
