"""Penalized regression splines with GCV choice of the smoothing parameter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bspline import BSplineBasis

RIDGE = 1e-10


def relative_lambda_grid(num=20, lo=1e-6, hi=1e4) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), num)


def default_num_knots(n_fit: int, requested: int = 10) -> int:
    return max(0, min(requested, n_fit // 4))


@dataclass
class PSplineFit:
    basis: BSplineBasis
    coef: np.ndarray
    lam: float
    lam_grid: np.ndarray
    gcv: np.ndarray
    edf: float

    def predict(self, x) -> np.ndarray:
        return self.basis.design(x) @ self.coef


def gcv_score(rss: float, n: float, edf: float) -> float:
    if edf >= n:
        return np.inf
    return n * rss / (n - edf) ** 2


def fit_penalized_spline(x, z, n_knots=10, lam_grid=None, weights=None,
                         basis: BSplineBasis | None = None, x_range=None) -> PSplineFit:
    """Minimize ``sum w (z - B c)^2 + lam c' S c`` and pick ``lam`` by GCV.

    ``lam_grid`` is relative: it is multiplied by ``tr(B'WB) / tr(S)`` so the
    same grid suits data on any scale. The returned ``lam`` is absolute.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if basis is None:
        lo, hi = (x.min(), x.max()) if x_range is None else x_range
        basis = BSplineBasis.from_quantiles(x, n_knots, lo, hi)
    B = basis.design(x)
    S = basis.penalty()
    BtWB = B.T @ (w[:, None] * B)
    BtWz = B.T @ (w * z)
    rel = relative_lambda_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    scale = np.trace(BtWB) / max(np.trace(S), np.finfo(float).tiny)
    grid = rel * scale
    eye = np.eye(basis.size)
    n_eff = float(np.count_nonzero(w))
    scores = np.empty(grid.size)
    coefs, edfs = [], []
    for j, lam in enumerate(grid):
        H = BtWB + lam * S + RIDGE * scale * eye
        cf = scipy.linalg.cho_factor(H)
        c = scipy.linalg.cho_solve(cf, BtWz)
        edf = float(np.trace(scipy.linalg.cho_solve(cf, BtWB)))
        rss = float(w @ (z - B @ c) ** 2)
        scores[j] = gcv_score(rss, n_eff, edf)
        coefs.append(c)
        edfs.append(edf)
    best = int(np.argmin(scores))
    return PSplineFit(basis, coefs[best], float(grid[best]), grid, scores, edfs[best])
