"""Ratio models ``R(x)``: pooled ratio, per-stratum ratio, and the spline GAM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import FitError
from .gam import GamFit, fit_gam_multinomial

RATIO_METHODS = ("PARAM1", "PARAM2", "NONPARAM")


@dataclass
class Param1Fit:
    """One ratio vector for the whole sample."""

    beta: np.ndarray
    method = "PARAM1"

    def predict(self, x, stratum=None) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.broadcast_to(self.beta, (x.size, self.beta.size)).copy()


@dataclass
class Param2Fit:
    """One ratio vector per stratum; ``beta[h]`` belongs to ``strata[h]``."""

    strata: np.ndarray
    beta: np.ndarray
    method = "PARAM2"

    def predict(self, x, stratum=None) -> np.ndarray:
        if stratum is None:
            raise ValueError("PARAM2 predictions need stratum labels")
        stratum = np.atleast_1d(np.asarray(stratum))
        pos = np.searchsorted(self.strata, stratum)
        pos = np.minimum(pos, self.strata.size - 1)
        if np.any(self.strata[pos] != stratum):
            raise ValueError("stratum without a fitted ratio")
        return self.beta[pos]


def _ratio_of_sums(x, y, delta, weight):
    keep = np.asarray(delta).astype(bool)
    w = np.asarray(weight, dtype=float)[keep]
    den = w @ np.asarray(x, dtype=float)[keep]
    if not den > 0:
        raise FitError("weighted respondent total of x is not positive")
    return (w @ np.asarray(y, dtype=float)[keep]) / den


def fit_param1(x, y, delta, weight) -> Param1Fit:
    """``beta_t = sum w delta y_t / sum w delta x``."""
    return Param1Fit(_ratio_of_sums(x, y, delta, weight))


def fit_param2(x, y, delta, weight, stratum) -> Param2Fit:
    stratum = np.asarray(stratum)
    delta = np.asarray(delta).astype(bool)
    strata = np.unique(stratum)
    betas = []
    for h in strata:
        m = stratum == h
        try:
            betas.append(_ratio_of_sums(np.asarray(x)[m], np.asarray(y)[m], delta[m], np.asarray(weight)[m]))
        except FitError as exc:
            raise FitError(f"stratum {h}: {exc}") from exc
    return Param2Fit(strata, np.vstack(betas))


def fit_ratio(method, x, y, delta, weight, stratum=None, **gam_options):
    method = method.upper()
    if method == "PARAM1":
        return fit_param1(x, y, delta, weight)
    if method == "PARAM2":
        return fit_param2(x, y, delta, weight, stratum)
    if method == "NONPARAM":
        x = np.asarray(x, dtype=float)
        gam_options.setdefault("x_range", (x.min(), x.max()))
        return fit_gam_multinomial(x, y, delta, **gam_options)
    raise ValueError(f"unknown ratio method {method!r}")


def predict_m(fit, x, stratum=None) -> np.ndarray:
    """``m_i = x_i R(x_i)``, one row per unit."""
    x = np.asarray(x, dtype=float)
    return x[:, None] * fit.predict(x, stratum)


__all__ = [
    "RATIO_METHODS",
    "GamFit",
    "Param1Fit",
    "Param2Fit",
    "fit_param1",
    "fit_param2",
    "fit_gam_multinomial",
    "fit_ratio",
    "predict_m",
]
