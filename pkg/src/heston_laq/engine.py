"""Batched replicate simulation that keeps only running sums.

Replicate ``i`` always uses stream ``SeedSpec(master_seed, i)`` and the same
chunked draw layout as the single-path simulators, so its functionals agree
with ``functionals(simulate_heston_<scheme>(..., SeedSpec(master_seed, i)))``
up to summation order, whatever the batch size or thread count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels
from .functionals import FLOOR_EPS, PathFunctionals
from .model import DriftParams, FixedCoeffs
from .sde import CHUNK, Scheme, SeedSpec, _check_grid, _iter_chunks, draw_block, split_gamma_shape

BATCH = 128


def thread_count() -> int:
    """Worker count: ``LAQ_THREADS`` if set, else the CPU count."""
    env = os.environ.get("LAQ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"LAQ_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _run_batch(idx, theta, fixed, T, n, master_seed, scheme, floor_eps):
    dt = T / n
    shape = split_gamma_shape(theta, fixed, dt) if scheme is Scheme.SPLIT else 0.0
    code = 1 if scheme is Scheme.SPLIT else 0
    gens = [SeedSpec(master_seed, int(i)).rng() for i in idx]
    B = len(idx)
    Y = np.full(B, fixed.y0)
    X = np.full(B, fixed.x0)
    acc = np.zeros((B, _kernels.N_ACC))
    hits = np.zeros(B, dtype=np.int64)
    z = np.empty((B, CHUNK, 2))
    g = np.empty((B, CHUNK)) if code == 1 else np.empty((B, 0))
    p = (theta.a, theta.alpha, theta.b, theta.beta, fixed.sigma1, fixed.sigma2, fixed.rho)
    for _, k in _iter_chunks(n):
        for j, rng in enumerate(gens):
            zz, gg = draw_block(rng, scheme, k, shape)
            z[j, :k] = zz
            if code == 1:
                g[j, :k] = gg
        _kernels.accumulate_block(code, Y, X, z[:, :k], g[:, :k] if code == 1 else g, *p, dt, floor_eps, acc, hits)
    return Y, X, acc, hits


def simulate_functionals(theta: DriftParams, fixed: FixedCoeffs, T: float, n_steps: int, master_seed: int,
                         indices=None, M: int | None = None, scheme: Scheme | str = Scheme.SPLIT,
                         floor_eps: float = FLOOR_EPS, threads: int | None = None) -> PathFunctionals:
    """Functionals of replicates ``indices`` (or ``range(M)``) as arrays.

    Only Euler and split schemes are supported; the exact scheme stores no
    increments and is simulated path by path.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.EXACT:
        raise ValueError("batch engine supports the euler and split schemes")
    T, n = _check_grid(T, n_steps)
    if indices is None:
        if M is None:
            raise ValueError("give indices or M")
        indices = np.arange(M)
    indices = np.asarray(indices, dtype=np.int64)
    batches = [indices[s:s + BATCH] for s in range(0, len(indices), BATCH)]
    threads = thread_count() if threads is None else threads
    args = (theta, fixed, T, n, master_seed, scheme, floor_eps)
    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda bi: _run_batch(bi, *args), batches))
    else:
        parts = [_run_batch(bi, *args) for bi in batches]
    Y = np.concatenate([q[0] for q in parts])
    X = np.concatenate([q[1] for q in parts])
    acc = np.concatenate([q[2] for q in parts])
    hits = np.concatenate([q[3] for q in parts])
    K = _kernels
    m = len(indices)
    return PathFunctionals(
        int_Y=acc[:, K.INT_Y], int_invY=acc[:, K.INT_INVY],
        iw_inv=acc[:, K.IW_INV], ib_inv=acc[:, K.IB_INV],
        iw_sqrt=acc[:, K.IW_SQRT], ib_sqrt=acc[:, K.IB_SQRT],
        dy_over_y=acc[:, K.DY_OVER_Y], dx_over_y=acc[:, K.DX_OVER_Y],
        Y_T=Y, X_T=X, y0=np.full(m, fixed.y0), x0=np.full(m, fixed.x0),
        T=T, floor_hits=hits,
    )
