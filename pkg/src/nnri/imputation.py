"""Nearest-neighbor ratio imputation.

A nonrespondent (recipient) takes the detail-to-total ratios of the
respondent in its imputation cell whose total ``x`` is closest, and scales
them by its own ``x``. The donor weights ``kappa`` express the imputed total
as a reweighted sum over respondents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ImputationError, NumericError


@dataclass(frozen=True)
class DonorAssignment:
    """``donor[i]`` is the sample position of unit ``i``'s donor, -1 for respondents."""

    donor: np.ndarray
    cell: np.ndarray

    @property
    def recipients(self) -> np.ndarray:
        return np.flatnonzero(self.donor >= 0)

    def donor_matrix(self) -> np.ndarray:
        """Dense ``d[i, j] = 1`` if ``i`` donates to ``j``."""
        n = self.donor.size
        d = np.zeros((n, n), dtype=np.int8)
        r = self.recipients
        d[self.donor[r], r] = 1
        return d


@dataclass
class ImputedSample:
    values: np.ndarray
    imputed: np.ndarray
    assignment: DonorAssignment
    kappa: np.ndarray


def _check_inputs(x, delta, cells):
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta).astype(bool)
    cells = np.zeros(x.size, dtype=np.int64) if cells is None else np.asarray(cells)
    if not (x.shape == delta.shape == cells.shape):
        raise ImputationError("x, delta and cells must have the same length")
    return x, delta, cells


def match_donors(x, delta, cells=None, ids=None) -> DonorAssignment:
    """Nearest respondent by ``|x_i - x_j|`` within each cell.

    Distance ties go to the donor with the smaller ``x``, then the smaller
    id (sample position when ``ids`` is not given). Respondents with
    ``x <= 0`` are not eligible donors.
    """
    x, delta, cells = _check_inputs(x, delta, cells)
    ids = np.arange(x.size) if ids is None else np.asarray(ids)
    donor = np.full(x.size, -1, dtype=np.int64)
    eligible = delta & (x > 0)
    recipients = ~delta
    if not recipients.any():
        return DonorAssignment(donor, cells)
    empty = []
    for c in np.unique(cells[recipients]):
        in_cell = cells == c
        pool = np.flatnonzero(in_cell & eligible)
        if pool.size == 0:
            empty.append(c)
            continue
        order = np.lexsort((ids[pool], x[pool]))
        pool = pool[order]
        rec = np.flatnonzero(in_cell & recipients)
        donor[rec] = pool[_kernels.nearest_sorted(x[pool], x[rec])]
    if empty:
        raise ImputationError(
            "no eligible donors in cell(s) " + ", ".join(str(c) for c in empty), cells=empty
        )
    return DonorAssignment(donor, cells)


def match_donors_brute_force(x, delta, cells=None, ids=None) -> DonorAssignment:
    """Quadratic reference matcher with the same tie rule as :func:`match_donors`."""
    x, delta, cells = _check_inputs(x, delta, cells)
    ids = np.arange(x.size) if ids is None else np.asarray(ids)
    donor = np.full(x.size, -1, dtype=np.int64)
    for i in range(x.size):
        if delta[i]:
            continue
        best = None
        for j in range(x.size):
            if not delta[j] or x[j] <= 0 or cells[j] != cells[i]:
                continue
            key = (abs(x[i] - x[j]), x[j], ids[j])
            if best is None or key < best[0]:
                best = (key, j)
        if best is None:
            raise ImputationError(f"no eligible donors in cell {cells[i]}", cells=[cells[i]])
        donor[i] = best[1]
    return DonorAssignment(donor, cells)


def compute_kappa(weight, x, delta, assignment: DonorAssignment) -> np.ndarray:
    """Donor weights ``kappa_i = sum_j w_j x_j (1 - delta_j) d_ij / (w_i x_i)``.

    Zero for respondents that donate to nobody and for recipients.
    """
    w = np.asarray(weight, dtype=float)
    x = np.asarray(x, dtype=float)
    mass = _kernels.scatter_add(assignment.donor, w * x, x.size)
    denom = w * x
    return np.divide(mass, denom, out=np.zeros_like(mass), where=mass > 0)


def impute(x, y, delta, assignment: DonorAssignment, weight=None) -> ImputedSample:
    """Fill recipients with ``x_i * y_donor / x_donor``; respondents keep ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta).astype(bool)
    values = np.where(delta[:, None], y, 0.0)
    r = assignment.recipients
    d = assignment.donor[r]
    if np.any(x[d] <= 0):
        raise ImputationError("donor with nonpositive x")
    values[r] = x[r, None] * (y[d] / x[d, None])
    kappa = (
        compute_kappa(weight, x, delta, assignment)
        if weight is not None
        else np.zeros(x.size)
    )
    return ImputedSample(values=values, imputed=~delta, assignment=assignment, kappa=kappa)


def imputed_total(weight, values) -> np.ndarray:
    """``sum_i w_i {delta_i y_i + (1 - delta_i) y*_i}`` from the filled values."""
    return np.asarray(weight, dtype=float) @ np.asarray(values, dtype=float)


def imputed_total_kappa(weight, y, delta, kappa) -> np.ndarray:
    """``sum_i delta_i w_i (1 + kappa_i) y_i``, the donor-weighted form."""
    delta = np.asarray(delta).astype(bool)
    w = np.asarray(weight, dtype=float)
    y = np.asarray(y, dtype=float)
    coef = np.where(delta, w * (1.0 + np.asarray(kappa)), 0.0)
    return coef @ np.where(delta[:, None], y, 0.0)


def checked_imputed_total(weight, y, delta, imputed: ImputedSample, rtol: float = 1e-9) -> np.ndarray:
    """Imputed total, cross-checked against the donor-weighted form."""
    a = imputed_total(weight, imputed.values)
    b = imputed_total_kappa(weight, y, delta, imputed.kappa)
    scale = np.maximum(np.abs(a), np.abs(b)).max(initial=0.0)
    if np.any(np.abs(a - b) > rtol * max(scale, np.finfo(float).tiny)):
        raise NumericError(f"imputed total forms disagree: {a} vs {b}")
    return a


def matching_discrepancy(x, assignment: DonorAssignment) -> float:
    """Mean ``|x_i - x_donor(i)|`` over recipients (NaN when there are none)."""
    x = np.asarray(x, dtype=float)
    r = assignment.recipients
    if r.size == 0:
        return float("nan")
    return float(np.mean(np.abs(x[r] - x[assignment.donor[r]])))
