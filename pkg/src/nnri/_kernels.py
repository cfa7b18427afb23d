"""Hot numeric kernels.

Each kernel has a numba ``@njit`` implementation and a pure-numpy
implementation with identical results. The numba path is the default; set
``NNRI_DISABLE_NUMBA=1`` in the environment to force the numpy path (useful
for debugging and when numba is unavailable). Both variants stay importable
as ``<name>_numba`` / ``<name>_numpy`` so tests and benchmarks can compare
them in one process.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("NNRI_DISABLE_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)

__all__ = [
    "USE_NUMBA",
    "nearest_sorted",
    "scatter_add",
    "stratum_sum_squares",
    "jackknife_sum_squares",
]


# --------------------------------------------------------------------------
# nearest donor in a sorted array
# --------------------------------------------------------------------------


def nearest_sorted_numpy(sorted_x, targets):
    """Position of the nearest element of ``sorted_x`` for each target.

    Ties in distance go to the smaller value; among duplicated values the
    first occurrence wins, so a caller that sorts by ``(x, id)`` gets the
    smaller id.
    """
    sorted_x = np.asarray(sorted_x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    m = sorted_x.size
    above = np.searchsorted(sorted_x, targets, side="left")
    has_above = above < m
    has_below = above > 0
    above_c = np.minimum(above, m - 1)
    below_val = sorted_x[np.maximum(above - 1, 0)]
    below = np.searchsorted(sorted_x, below_val, side="left")
    d_above = np.where(has_above, sorted_x[above_c] - targets, np.inf)
    d_below = np.where(has_below, targets - below_val, np.inf)
    return np.where(d_below <= d_above, below, above_c).astype(np.int64)


def _nearest_sorted_loop(sorted_x, targets):
    m = sorted_x.size
    out = np.empty(targets.size, dtype=np.int64)
    for i in range(targets.size):
        t = targets[i]
        lo, hi = 0, m
        while lo < hi:
            mid = (lo + hi) // 2
            if sorted_x[mid] < t:
                lo = mid + 1
            else:
                hi = mid
        above = lo
        d_above = np.inf
        if above < m:
            d_above = sorted_x[above] - t
        best = above
        if above > 0:
            below = above - 1
            v = sorted_x[below]
            while below > 0 and sorted_x[below - 1] == v:
                below -= 1
            if t - v <= d_above:
                best = below
        out[i] = best
    return out


# --------------------------------------------------------------------------
# scatter-add (kappa accumulation)
# --------------------------------------------------------------------------


def scatter_add_numpy(index, values, size):
    """``out[index[k]] += values[k]`` with negative indices skipped."""
    index = np.asarray(index, dtype=np.int64)
    keep = index >= 0
    return np.bincount(index[keep], weights=np.asarray(values, dtype=np.float64)[keep], minlength=size)


def _scatter_add_loop(index, values, size):
    out = np.zeros(size)
    for k in range(index.size):
        j = index[k]
        if j >= 0:
            out[j] += values[k]
    return out


# --------------------------------------------------------------------------
# per-stratum centred sum of squares
# --------------------------------------------------------------------------


def stratum_sum_squares_numpy(values, labels, n_groups):
    """Per group counts and centred sums of squares for each column.

    ``labels`` are 0-based group indices. Returns ``(counts, ss)`` with
    ``ss`` of shape ``(n_groups, n_cols)``.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=n_groups).astype(np.float64)
    ss = np.zeros((n_groups, values.shape[1]))
    for g in range(n_groups):
        block = values[labels == g]
        if block.shape[0]:
            ss[g] = ((block - block.mean(axis=0)) ** 2).sum(axis=0)
    return counts, ss


def _stratum_sum_squares_loop(values, labels, n_groups):
    n, p = values.shape
    counts = np.zeros(n_groups)
    sums = np.zeros((n_groups, p))
    for i in range(n):
        g = labels[i]
        counts[g] += 1.0
        for t in range(p):
            sums[g, t] += values[i, t]
    ss = np.zeros((n_groups, p))
    for i in range(n):
        g = labels[i]
        for t in range(p):
            d = values[i, t] - sums[g, t] / counts[g]
            ss[g, t] += d * d
    return counts, ss


# --------------------------------------------------------------------------
# delete-1 jackknife for a linear statistic
# --------------------------------------------------------------------------


def jackknife_sum_squares_numpy(values, weights, labels, factors_by_group, scale_by_group):
    """Sum over replicates of ``c_k (theta_k - theta)**2`` for a weighted total.

    Replicate ``k`` drops unit ``k`` and rescales the remaining weights of
    its group by ``scale_by_group[g]``. Groups with factor 0 contribute
    nothing and are skipped.
    """
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_groups = factors_by_group.size
    out = np.zeros(values.shape[1])
    for g in range(n_groups):
        if factors_by_group[g] == 0.0:
            continue
        mask = labels == g
        wy = weights[mask, None] * values[mask]
        total_g = wy.sum(axis=0)
        # theta_k - theta = scale * (total_g - wy_k) - total_g
        diff = scale_by_group[g] * (total_g[None, :] - wy) - total_g[None, :]
        out += factors_by_group[g] * (diff**2).sum(axis=0)
    return out


def _jackknife_sum_squares_loop(values, weights, labels, factors_by_group, scale_by_group):
    n, p = values.shape
    n_groups = factors_by_group.size
    totals = np.zeros((n_groups, p))
    for i in range(n):
        for t in range(p):
            totals[labels[i], t] += weights[i] * values[i, t]
    out = np.zeros(p)
    for i in range(n):
        g = labels[i]
        c = factors_by_group[g]
        if c == 0.0:
            continue
        for t in range(p):
            d = scale_by_group[g] * (totals[g, t] - weights[i] * values[i, t]) - totals[g, t]
            out[t] += c * d * d
    return out


if HAVE_NUMBA:
    _nearest_sorted_jit = njit(cache=True)(_nearest_sorted_loop)
    _scatter_add_jit = njit(cache=True)(_scatter_add_loop)
    _stratum_ss_jit = njit(cache=True)(_stratum_sum_squares_loop)
    _jackknife_ss_jit = njit(cache=True)(_jackknife_sum_squares_loop)

    def nearest_sorted_numba(sorted_x, targets):
        return _nearest_sorted_jit(
            np.ascontiguousarray(sorted_x, dtype=np.float64),
            np.ascontiguousarray(targets, dtype=np.float64),
        )

    def scatter_add_numba(index, values, size):
        return _scatter_add_jit(
            np.ascontiguousarray(index, dtype=np.int64),
            np.ascontiguousarray(values, dtype=np.float64),
            int(size),
        )

    def stratum_sum_squares_numba(values, labels, n_groups):
        return _stratum_ss_jit(
            np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(labels, dtype=np.int64),
            int(n_groups),
        )

    def jackknife_sum_squares_numba(values, weights, labels, factors_by_group, scale_by_group):
        return _jackknife_ss_jit(
            np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
            np.ascontiguousarray(labels, dtype=np.int64),
            np.ascontiguousarray(factors_by_group, dtype=np.float64),
            np.ascontiguousarray(scale_by_group, dtype=np.float64),
        )

else:  # pragma: no cover
    nearest_sorted_numba = nearest_sorted_numpy
    scatter_add_numba = scatter_add_numpy
    stratum_sum_squares_numba = stratum_sum_squares_numpy
    jackknife_sum_squares_numba = jackknife_sum_squares_numpy


if USE_NUMBA:
    nearest_sorted = nearest_sorted_numba
    scatter_add = scatter_add_numba
    stratum_sum_squares = stratum_sum_squares_numba
    jackknife_sum_squares = jackknife_sum_squares_numba
else:
    nearest_sorted = nearest_sorted_numpy
    scatter_add = scatter_add_numpy
    stratum_sum_squares = stratum_sum_squares_numpy
    jackknife_sum_squares = jackknife_sum_squares_numpy
