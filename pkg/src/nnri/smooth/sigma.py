"""Residual variance models ``sigma_e^2(x)`` evaluated at every sampled unit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pspline import fit_penalized_spline
from .ratio import predict_m

SIGMA_METHODS = ("DIRECT", "PARAM1M", "PARAM2M", "NONPARAMM")
MATCHING_RATIO = {"PARAM1M": "PARAM1", "PARAM2M": "PARAM2", "NONPARAMM": "NONPARAM"}


@dataclass
class SigmaFit:
    method: str
    sigma2: np.ndarray
    floored: int = 0


def _floor(values):
    neg = values < 0
    return np.where(neg, 0.0, values), int(neg.sum())


def _ols_line(x, z):
    """Least-squares ``z = a0 + a1 x`` per column, or the column mean if x is constant."""
    if x.size < 2 or np.ptp(x) == 0:
        return np.vstack([z.mean(axis=0), np.zeros(z.shape[1])])
    X = np.column_stack([np.ones_like(x), x])
    return np.linalg.lstsq(X, z, rcond=None)[0]


def fit_sigma(method, ratio_fit, x, y, delta, stratum=None, n_knots=10, lam_grid=None) -> SigmaFit:
    """Per-unit, per-item residual variance for all sampled units.

    ``DIRECT`` returns squared residuals (zero for nonrespondents).
    Negative model predictions are floored at zero and counted.
    """
    method = method.upper().replace("(M)", "M")
    if method in MATCHING_RATIO and ratio_fit.method != MATCHING_RATIO[method]:
        raise ValueError(f"{method} needs a {MATCHING_RATIO[method]} ratio fit, got {ratio_fit.method}")
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta).astype(bool)
    y = np.where(delta[:, None], np.asarray(y, dtype=float), 0.0)
    m = predict_m(ratio_fit, x, stratum)
    e2 = np.where(delta[:, None], (y - m) ** 2, 0.0)

    if method == "DIRECT":
        return SigmaFit(method, e2)
    if method == "PARAM1M":
        beta = np.asarray(ratio_fit.beta, dtype=float)
        return SigmaFit(method, x[:, None] * (beta * (1.0 - beta))[None, :])
    if method == "PARAM2M":
        stratum = np.asarray(stratum)
        out = np.zeros_like(e2)
        for h in np.unique(stratum):
            rows = stratum == h
            resp = rows & delta
            coef = _ols_line(x[resp], e2[resp])
            out[rows] = coef[0][None, :] + x[rows, None] * coef[1][None, :]
        out, k = _floor(out)
        return SigmaFit(method, out, k)
    if method == "NONPARAMM":
        out = np.zeros_like(e2)
        for t in range(e2.shape[1]):
            fit = fit_penalized_spline(
                x[delta], e2[delta, t], n_knots=min(n_knots, int(delta.sum()) // 4),
                lam_grid=lam_grid, x_range=(x.min(), x.max()),
            )
            out[:, t] = fit.predict(x)
        out, k = _floor(out)
        return SigmaFit(method, out, k)
    raise ValueError(f"unknown sigma method {method!r}")
