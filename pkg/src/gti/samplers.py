"""Node samplers: produce per-temperature draws along a tempered path.

A sampler turns ``(path, betas, iterations)`` into one :class:`NodeDraw` per
beta and per replicate seed.  Every draw spends exactly ``iterations``
evaluations of the path, so estimator budgets follow from the ladder size.

Replicates and nodes are independent chains; a sampler may advance any
subset of them together, because each chain owns the RNG stream derived from
its ``(seed, stream_id)`` pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .density import TemperedPath
from .mcmc import DEFAULT_BURN_FRACTION, ChainConfig, ProposalSpec, run_chains


@dataclass
class NodeDraw:
    beta: float
    signs: np.ndarray
    log_values: np.ndarray
    final_state: np.ndarray
    n_evals: int
    accept_rate: float = 1.0
    samples: Optional[np.ndarray] = None
    seed: int = 0
    stream_id: int = 0


def _init_grid(inits, n_rep, n_nodes, dim=None):
    """Broadcast inits to shape ``(n_rep, n_nodes, D)``."""
    a = np.asarray(inits, dtype=float)
    if a.ndim == 1:
        a = a[None, None, :]
    elif a.ndim == 2:
        a = a[:, None, :]
    return np.broadcast_to(a, (n_rep, n_nodes, a.shape[-1]))


class MetropolisSampler:
    """Random-walk MH at every node.

    With ``warm_start`` each node's chain starts where the previous node's
    chain stopped, so nodes run one after another (replicates still run
    together).  Without it every node starts from the supplied point and all
    chains advance as one vectorised batch.
    """

    def __init__(
        self,
        proposal: ProposalSpec,
        burn_fraction: float = DEFAULT_BURN_FRACTION,
        warm_start: bool = True,
    ):
        self.proposal = proposal
        self.burn_fraction = burn_fraction
        self.warm_start = warm_start

    def __repr__(self):
        return (
            f"MetropolisSampler(sigma2={self.proposal.sigma2}, burn_fraction={self.burn_fraction}, "
            f"warm_start={self.warm_start})"
        )

    def _cfg(self, iterations, seed, sid):
        return ChainConfig.from_iterations(iterations, self.burn_fraction, seed=int(seed), stream_id=int(sid))

    def draw_path(
        self,
        path: TemperedPath,
        betas: Sequence[float],
        iterations: int,
        seeds: Sequence[int],
        stream_ids: Sequence[int],
        inits,
        keep_samples: bool = False,
        warm_start: Optional[bool] = None,
    ) -> list:
        """Draws indexed ``[replicate][node]``.

        ``inits`` is one point, one point per replicate ``(R, D)`` or one per
        chain ``(R, N, D)``; with warm start only node 0's init is used.
        """
        betas = [float(b) for b in betas]
        seeds = [int(s) for s in seeds]
        n_rep, n_nodes = len(seeds), len(betas)
        warm = self.warm_start if warm_start is None else warm_start
        grid = _init_grid(inits, n_rep, n_nodes)
        outs = [[None] * n_nodes for _ in range(n_rep)]
        if not warm or n_nodes == 1:
            flat_beta = np.tile(betas, n_rep)
            cfgs = [self._cfg(iterations, s, sid) for s in seeds for sid in stream_ids]
            res = run_chains(path.chain_target(flat_beta), cfgs, self.proposal,
                             grid.reshape(n_rep * n_nodes, -1), store_samples=keep_samples,
                             record_logp=False)
            for k, o in enumerate(res):
                outs[k // n_nodes][k % n_nodes] = o
        else:
            x0 = grid[:, 0, :].copy()
            for i, (beta, sid) in enumerate(zip(betas, stream_ids)):
                cfgs = [self._cfg(iterations, s, sid) for s in seeds]
                res = run_chains(path.chain_target(np.full(n_rep, beta)), cfgs, self.proposal, x0,
                                 store_samples=keep_samples, record_logp=False)
                for r, o in enumerate(res):
                    outs[r][i] = o
                x0 = np.array([o.final_state for o in res])
        return [
            [
                NodeDraw(
                    beta=b, signs=o.aux[:, 0].astype(np.int8), log_values=o.aux[:, 1],
                    final_state=o.final_state, n_evals=o.n_target_evals, accept_rate=o.accept_rate,
                    samples=o.samples, seed=o.seed, stream_id=o.stream_id,
                )
                for b, o in zip(betas, row)
            ]
            for row in outs
        ]
