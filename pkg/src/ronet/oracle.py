"""Exact rank-one machinery: leading singular triplets by power iteration and greedy deflation.

These are the non-learned reference decompositions the networks are checked
against. Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

_START_SEED = 20240611


@dataclass(frozen=True)
class SvdTriplet:
    sigma: float
    u: np.ndarray
    v: np.ndarray
    iterations: int = 0

    def dyad(self) -> np.ndarray:
        return self.sigma * np.outer(self.u, self.v)


@dataclass
class Decomposition:
    """``source == sum(components) + residual``.

    Components and residual share the source's shape: (H, W) for a matrix,
    (C, H, W) for a per-channel stack, or (N, C, H, W) for network batches.
    """

    components: list[Any]
    residual: Any
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.components)

    def low_rank(self):
        total = self.components[0]
        for c in self.components[1:]:
            total = total + c
        return total

    def reconstruct(self):
        return self.low_rank() + self.residual


def _canonical_sign(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = np.flatnonzero(np.abs(u) > 1e-12 * max(np.abs(u).max(), 1e-300))
    if nz.size and u[nz[0]] < 0:
        return -u, -v
    return u, v


def best_rank_one(x: np.ndarray, max_iters: int = 500, tol: float = 1e-10) -> SvdTriplet:
    """Leading singular triplet of a matrix via power iteration on ``x.T @ x``.

    Starts from the normalized all-ones vector (replaced by a fixed-seed random
    vector when that start is orthogonal to the row space) and stops once
    successive right vectors differ by less than ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"best_rank_one expects a matrix, got shape {x.shape}")
    m, n = x.shape
    scale = np.abs(x).max() if x.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        if not np.isfinite(scale):
            raise ValueError("best_rank_one: input contains non-finite values")
        return SvdTriplet(0.0, np.eye(m)[0], np.eye(n)[0])
    xs = x / scale
    gram = xs.T @ xs

    v = np.full(n, 1.0 / np.sqrt(n))
    if np.linalg.norm(xs @ v) < 1e-12 * np.linalg.norm(xs):
        v = np.random.default_rng(_START_SEED).standard_normal(n)
        v /= np.linalg.norm(v)

    it = 0
    for it in range(1, max_iters + 1):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        w /= norm
        delta = np.linalg.norm(w - v)
        v = w
        if delta < tol:
            break

    xv = x @ v
    sigma = float(np.linalg.norm(xv))
    if sigma == 0.0:
        return SvdTriplet(0.0, np.eye(m)[0], np.eye(n)[0], it)
    u = xv / sigma
    u, v = _canonical_sign(u, v)
    return SvdTriplet(sigma, u, v, it)


def _svd_matrix(x: np.ndarray, L: int, max_iters: int, tol: float) -> tuple[list[np.ndarray], np.ndarray, list[SvdTriplet]]:
    residual = np.array(x, dtype=np.float64)
    comps, triplets = [], []
    rank_cap = min(residual.shape)
    for l in range(L):
        if l >= rank_cap:
            t = SvdTriplet(0.0, np.eye(residual.shape[0])[0], np.eye(residual.shape[1])[0])
            comp = np.zeros_like(residual)
        else:
            t = best_rank_one(residual, max_iters=max_iters, tol=tol)
            comp = t.dyad()
        residual = residual - comp
        comps.append(comp)
        triplets.append(t)
    return comps, residual, triplets


def svd_decompose(x: np.ndarray, L: int, max_iters: int = 500, tol: float = 1e-10) -> Decomposition:
    """Greedy deflation into ``L`` rank-one components plus a residual.

    A 2-D input is one matrix; a 3-D (C, H, W) or 4-D (N, C, H, W) input is
    decomposed independently per channel slice. Components beyond the matrix
    rank are zero.
    """
    if L < 1:
        raise ValueError(f"L must be at least 1, got {L}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        comps, residual, triplets = _svd_matrix(x, L, max_iters, tol)
        return Decomposition(comps, residual, {"shape": x.shape, "triplets": [triplets]})
    if x.ndim not in (3, 4):
        raise ValueError(f"svd_decompose expects 2-, 3- or 4-d input, got shape {x.shape}")
    lead = x.shape[:-2]
    comps = [np.zeros_like(x) for _ in range(L)]
    residual = np.zeros_like(x)
    all_triplets = []
    for idx in np.ndindex(*lead):
        cs, r, ts = _svd_matrix(x[idx], L, max_iters, tol)
        for l in range(L):
            comps[l][idx] = cs[l]
        residual[idx] = r
        all_triplets.append(ts)
    return Decomposition(comps, residual, {"shape": x.shape, "triplets": all_triplets})


def rank_one_defect(x: np.ndarray) -> float:
    """Ratio of the second to the first singular value, by two deflation steps.

    Zero for the zero matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    first = best_rank_one(x)
    if first.sigma == 0.0:
        return 0.0
    second = best_rank_one(x - first.dyad())
    return second.sigma / first.sigma
