"""Stratified SRS-WOR samples, Horvitz-Thompson totals and delete-1 jackknife."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DesignError
from .streams import as_generator

DEFAULT_FRACTIONS = (0.10, 0.25, 0.50, 1.0)


@dataclass(frozen=True)
class SampleDesign:
    """Per-stratum sampling fractions and the rounding rule for ``n_h``.

    ``rule="ceil"`` takes ``ceil(f_h N_h)``, ``rule="round"`` rounds half to
    even. Non-certainty strata always get at least two units so the
    jackknife and the within-stratum variance are defined.
    """

    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    rule: str = "ceil"

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        if np.any((f <= 0) | (f > 1)):
            raise DesignError("sampling fractions must lie in (0, 1]")
        if self.rule not in ("ceil", "round"):
            raise DesignError(f"unknown allocation rule {self.rule!r}")
        object.__setattr__(self, "fractions", tuple(float(v) for v in f))

    def allocate(self, strata_sizes) -> np.ndarray:
        N_h = np.asarray(strata_sizes, dtype=np.int64)
        if N_h.size != len(self.fractions):
            raise DesignError(
                f"design has {len(self.fractions)} strata, population has {N_h.size}"
            )
        f = np.asarray(self.fractions)
        raw = f * N_h
        n_h = np.ceil(raw - 1e-9) if self.rule == "ceil" else np.rint(raw)
        n_h = n_h.astype(np.int64)
        certainty = f >= 1.0
        n_h = np.where(certainty, N_h, np.maximum(n_h, np.minimum(2, N_h)))
        return n_h


@dataclass
class Sample:
    """A stratified sample.

    Arrays are aligned by sample position. ``strata`` lists the stratum
    labels in the order used by ``pop_sizes`` and ``sample_sizes``.
    ``cell`` defaults to the stratum label.
    """

    ids: np.ndarray
    stratum: np.ndarray
    x: np.ndarray
    y: np.ndarray
    weight: np.ndarray
    strata: np.ndarray
    pop_sizes: np.ndarray
    sample_sizes: np.ndarray
    cell: np.ndarray | None = None
    labels: tuple[str, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.cell is None:
            self.cell = self.stratum
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]

    def __len__(self) -> int:
        return self.x.size

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def num_items(self) -> int:
        return self.y.shape[1]

    @property
    def item_labels(self) -> tuple[str, ...]:
        return self.labels or tuple(f"y{t + 1}" for t in range(self.num_items))

    @property
    def stratum_index(self) -> np.ndarray:
        """0-based position of each unit's stratum in ``strata``."""
        return np.searchsorted(self.strata, self.stratum)

    @property
    def fpc(self) -> np.ndarray:
        return 1.0 - self.sample_sizes / self.pop_sizes

    def with_values(self, y) -> "Sample":
        return replace(self, y=np.asarray(y, dtype=float))


def draw_sample(population, design: SampleDesign, rng) -> Sample:
    """Stratified SRS-WOR with ``w_i = N_h / n_h``."""
    rng = as_generator(rng)
    strata = np.arange(1, population.num_strata + 1)
    N_h = np.bincount(population.stratum - 1, minlength=population.num_strata)
    n_h = design.allocate(N_h)
    if np.any(n_h > N_h):
        bad = strata[n_h > N_h]
        raise DesignError(f"allocation exceeds stratum size in strata {bad.tolist()}")
    picks = []
    for h, (Nh, nh) in enumerate(zip(N_h, n_h)):
        members = np.flatnonzero(population.stratum == h + 1)
        if nh == Nh:
            picks.append(members)
        else:
            picks.append(np.sort(rng.choice(members, size=nh, replace=False)))
    idx = np.concatenate(picks) if picks else np.empty(0, dtype=np.int64)
    stratum = population.stratum[idx]
    weight = (N_h / np.where(n_h > 0, n_h, 1))[stratum - 1]
    keep = n_h > 0
    return Sample(
        ids=population.ids[idx],
        stratum=stratum,
        x=population.x[idx],
        y=population.y[idx],
        weight=weight.astype(float),
        strata=strata[keep],
        pop_sizes=N_h[keep].astype(float),
        sample_sizes=n_h[keep].astype(float),
    )


def sample_from_weights(ids, stratum, x, y, weight, cell=None, labels=None) -> Sample:
    """Build a :class:`Sample` from unit-level records.

    ``N_h`` is recovered as the weight sum in each stratum, which is exact
    for stratified SRS-WOR weights ``N_h / n_h``.
    """
    stratum = np.asarray(stratum)
    strata, counts = np.unique(stratum, return_counts=True)
    w = np.asarray(weight, dtype=float)
    pos = np.searchsorted(strata, stratum)
    N_h = np.bincount(pos, weights=w, minlength=strata.size)
    return Sample(
        ids=np.asarray(ids),
        stratum=stratum,
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        weight=w,
        strata=strata,
        pop_sizes=N_h,
        sample_sizes=counts.astype(float),
        cell=None if cell is None else np.asarray(cell),
        labels=labels,
    )


def ht_total(sample: Sample, values=None) -> np.ndarray:
    """Horvitz-Thompson total ``sum_i w_i * values_i`` per column."""
    v = sample.y if values is None else np.asarray(values, dtype=float)
    return sample.weight @ v


@dataclass
class ReplicateWeights:
    """Delete-1 jackknife replicate weights.

    Row ``k`` of ``weights`` drops sample unit ``k``. Units in certainty
    strata are never dropped: their row equals the full-sample weights and
    their factor is zero.
    """

    weights: np.ndarray
    factors: np.ndarray
    group_factors: np.ndarray
    group_scale: np.ndarray

    @property
    def num_replicates(self) -> int:
        return self.factors.size


def jackknife_replicates(sample: Sample, fpc: bool = True) -> ReplicateWeights:
    g = sample.stratum_index
    n_h = sample.sample_sizes
    certainty = sample.sample_sizes >= sample.pop_sizes
    short = (~certainty) & (n_h < 2)
    if short.any():
        raise DesignError(
            f"jackknife needs n_h >= 2 in non-certainty strata {sample.strata[short].tolist()}"
        )
    safe = np.where(n_h > 1, n_h, 2.0)
    scale = np.where(certainty, 1.0, safe / (safe - 1.0))
    gfac = (safe - 1.0) / safe * (sample.fpc if fpc else 1.0)
    gfac = np.where(certainty, 0.0, gfac)
    n = sample.n
    W = np.tile(sample.weight, (n, 1))
    for k in range(n):
        if certainty[g[k]]:
            continue
        same = g == g[k]
        W[k, same] *= scale[g[k]]
        W[k, k] = 0.0
    return ReplicateWeights(W, gfac[g], gfac, scale)


def replicate_variance(
    sample: Sample,
    replicates: ReplicateWeights,
    statistic: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None,
) -> np.ndarray:
    """``sum_k c_k (theta_k - theta)^2`` on the total scale.

    ``statistic`` is either a function of a weight vector or a value array;
    a value array means the weighted total, evaluated with the jackknife
    kernel without forming replicate totals explicitly.
    """
    if statistic is None or not callable(statistic):
        values = sample.y if statistic is None else np.asarray(statistic, dtype=float)
        flat = values.ndim == 1
        v2 = values[:, None] if flat else values
        out = _kernels.jackknife_sum_squares(
            v2, sample.weight, sample.stratum_index, replicates.group_factors, replicates.group_scale
        )
        return out[0] if flat else out
    theta = np.asarray(statistic(sample.weight), dtype=float)
    acc = np.zeros_like(theta)
    for k in range(replicates.num_replicates):
        if replicates.factors[k] == 0.0:
            continue
        d = np.asarray(statistic(replicates.weights[k]), dtype=float) - theta
        acc += replicates.factors[k] * d * d
    return acc


def stratified_srs_variance(sample: Sample, values=None) -> np.ndarray:
    """Analytic ``sum_h N_h^2 (1 - f_h) s_h^2 / n_h`` per column."""
    v = sample.y if values is None else np.asarray(values, dtype=float)
    flat = v.ndim == 1
    v2 = v[:, None] if flat else v
    counts, ss = _kernels.stratum_sum_squares(v2, sample.stratum_index, sample.strata.size)
    N_h = sample.pop_sizes
    n_h = sample.sample_sizes
    certainty = n_h >= N_h
    bad = (~certainty) & (counts < 2)
    if bad.any():
        raise DesignError(
            f"variance needs n_h >= 2 in non-certainty strata {sample.strata[bad].tolist()}"
        )
    denom = np.where(counts > 1, counts - 1.0, 1.0)
    s2 = ss / denom[:, None]
    per = np.where(certainty[:, None], 0.0, (N_h**2 * (1 - n_h / N_h) / n_h)[:, None] * s2)
    out = per.sum(axis=0)
    return out[0] if flat else out


def write_sample_csv(sample: Sample, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "stratum", "x", *sample.item_labels, "weight", "sampled"])
        for i in range(sample.n):
            writer.writerow(
                [
                    int(sample.ids[i]),
                    int(sample.stratum[i]),
                    repr(float(sample.x[i])),
                    *[repr(float(v)) for v in sample.y[i]],
                    repr(float(sample.weight[i])),
                    1,
                ]
            )
