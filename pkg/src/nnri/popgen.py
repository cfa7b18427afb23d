"""Synthetic stratified finite populations with multinomial detail items.

Units carry a positive size ``x`` and a vector of ``T`` detail items that sum
to ``x``. The number of nonzero details grows with the unit's stratum, and
the details themselves come from a multinomial split of ``x``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, DegenerateSizeError
from .streams import as_generator, substream


class Scenario(str, enum.Enum):
    UNIFORM_100K = "uniform100k"
    LOGNORMAL_SMALL = "lognormal_small"
    LOGNORMAL_LARGE = "lognormal_large"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "1": cls.UNIFORM_100K,
            "scenario1": cls.UNIFORM_100K,
            "uniform": cls.UNIFORM_100K,
            "2": cls.LOGNORMAL_SMALL,
            "scenario2": cls.LOGNORMAL_SMALL,
            "3": cls.LOGNORMAL_LARGE,
            "scenario3": cls.LOGNORMAL_LARGE,
        }
        if key in aliases:
            return aliases[key]
        for member in cls:
            if member.value == key:
                return member
        raise ConfigurationError(
            f"scenario: unknown value {value!r}; expected one of "
            + ", ".join(m.value for m in cls)
        )


STRATA_BOUNDARIES = {
    Scenario.UNIFORM_100K: (25_000.0, 50_000.0, 75_000.0),
    Scenario.LOGNORMAL_SMALL: (55.0, 85.0, 150.0),
    Scenario.LOGNORMAL_LARGE: (40_000.0, 150_000.0, 500_000.0),
}

# P(C = c) for c = 1..5, one row per stratum.
DETAIL_COUNT_PROBS = np.array(
    [
        [0.0, 0.91, 0.03, 0.03, 0.03],
        [0.0, 0.50, 0.40, 0.05, 0.05],
        [0.0, 0.20, 0.20, 0.30, 0.30],
        [0.0, 0.05, 0.15, 0.40, 0.40],
    ]
)

# Multinomial cell probabilities given c nonzero details (rows c = 2..5).
DETAIL_PROBS = np.array(
    [
        [0.60, 0.40, 0.00, 0.00, 0.00],
        [0.60, 0.30, 0.10, 0.00, 0.00],
        [0.60, 0.25, 0.10, 0.05, 0.00],
        [0.60, 0.20, 0.10, 0.05, 0.05],
    ]
)

MAX_DETAIL_REDRAWS = 100


@dataclass(frozen=True)
class PopulationConfig:
    scenario: Scenario = Scenario.UNIFORM_100K
    population_size: int = 1000
    num_items: int = 5
    strata_boundaries: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if self.strata_boundaries is None:
            object.__setattr__(self, "strata_boundaries", STRATA_BOUNDARIES[self.scenario])
        b = np.asarray(self.strata_boundaries, dtype=float)
        if b.ndim != 1 or np.any(np.diff(b) <= 0):
            raise ConfigurationError("strata_boundaries: must be strictly increasing")
        object.__setattr__(self, "strata_boundaries", tuple(float(v) for v in b))
        if self.num_items < 2:
            raise ConfigurationError("num_items: need at least 2 detail items")
        if self.num_items != DETAIL_PROBS.shape[1]:
            raise ConfigurationError(
                f"num_items: the detail-generation tables are defined for "
                f"{DETAIL_PROBS.shape[1]} items"
            )
        if self.population_size < self.num_strata:
            raise ConfigurationError("population_size: must be at least the number of strata")

    @property
    def num_strata(self) -> int:
        return len(self.strata_boundaries) + 1


@dataclass(frozen=True)
class PopulationUnit:
    id: int
    stratum: int
    x: float
    y: tuple[float, ...]
    c: int


@dataclass
class FinitePopulation:
    """Column-oriented population. Strata are labelled ``1..H``."""

    ids: np.ndarray
    stratum: np.ndarray
    x: np.ndarray
    y: np.ndarray
    c: np.ndarray
    num_strata: int
    config: PopulationConfig | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.x.size

    @property
    def num_items(self) -> int:
        return self.y.shape[1]

    @property
    def strata_sizes(self) -> np.ndarray:
        return np.bincount(self.stratum - 1, minlength=self.num_strata)

    @property
    def true_totals(self) -> np.ndarray:
        return self.y.sum(axis=0)

    def unit(self, i: int) -> PopulationUnit:
        return PopulationUnit(
            int(self.ids[i]),
            int(self.stratum[i]),
            float(self.x[i]),
            tuple(float(v) for v in self.y[i]),
            int(self.c[i]),
        )

    def __iter__(self) -> Iterator[PopulationUnit]:
        return (self.unit(i) for i in range(len(self)))


def draw_size_variable(config: PopulationConfig, rng) -> np.ndarray:
    """Draw ``N`` sizes from the scenario distribution.

    Draws that would give zero multinomial trials (``x < 0.5``, only
    possible in the uniform scenario) are redrawn.
    """
    rng = as_generator(rng)
    n = config.population_size

    def draw(k):
        if config.scenario is Scenario.UNIFORM_100K:
            # 1 - U(0,1) lies in (0, 1], so the support is (0, 100000].
            return 100_000.0 * (1.0 - rng.random(k))
        if config.scenario is Scenario.LOGNORMAL_SMALL:
            return rng.lognormal(4.1, 0.66, k)
        return rng.lognormal(12.0, 1.72, k)

    x = draw(n)
    bad = x < 0.5
    while bad.any():
        x[bad] = draw(int(bad.sum()))
        bad = x < 0.5
    return x


def assign_strata(x, boundaries: Sequence[float]) -> np.ndarray:
    """Stratum labels ``1..H`` using half-open ``[lower, upper)`` intervals."""
    return np.searchsorted(np.asarray(boundaries, dtype=float), np.asarray(x), side="right") + 1


def draw_detail_count(stratum, rng) -> np.ndarray:
    """Number of nonzero details for each stratum label."""
    rng = as_generator(rng)
    stratum = np.atleast_1d(np.asarray(stratum, dtype=np.int64))
    if stratum.size and (stratum.min() < 1 or stratum.max() > DETAIL_COUNT_PROBS.shape[0]):
        raise ConfigurationError(
            f"stratum: detail-count table defined for strata 1..{DETAIL_COUNT_PROBS.shape[0]}"
        )
    cdf = np.cumsum(DETAIL_COUNT_PROBS, axis=1)[stratum - 1]
    u = rng.random(stratum.size)
    return (u[:, None] >= cdf).sum(axis=1) + 1


def draw_details(x, c, rng) -> np.ndarray:
    """Split each ``x`` into detail items.

    Counts ``K ~ Multinomial(round(x), p(c))`` are rescaled by
    ``x / round(x)`` so each row sums to ``x``. When ``round(x) >= c`` the
    draw is repeated until exactly the first ``c`` components are nonzero;
    if that has not happened after ``MAX_DETAIL_REDRAWS`` attempts, one trial
    is placed in each of the first ``c`` cells and the rest are drawn
    multinomially.
    """
    rng = as_generator(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = np.broadcast_to(np.atleast_1d(np.asarray(c, dtype=np.int64)), x.shape)
    if np.any((c < 2) | (c > DETAIL_PROBS.shape[0] + 1)):
        raise ConfigurationError("c: number of nonzero details must be in 2..5")
    trials = np.rint(x).astype(np.int64)
    if np.any(trials < 1):
        raise DegenerateSizeError("size rounds to zero multinomial trials")
    probs = DETAIL_PROBS[c - 2]
    counts = rng.multinomial(trials, probs)

    def pattern_ok(k, cc):
        pos = k > 0
        want = np.arange(k.shape[1])[None, :] < cc[:, None]
        return np.all(pos == want, axis=1)

    feasible = trials >= c
    todo = np.flatnonzero(feasible & ~pattern_ok(counts, c))
    attempts = 0
    while todo.size and attempts < MAX_DETAIL_REDRAWS:
        counts[todo] = rng.multinomial(trials[todo], probs[todo])
        todo = todo[~pattern_ok(counts[todo], c[todo])]
        attempts += 1
    if todo.size:
        base = (np.arange(counts.shape[1])[None, :] < c[todo, None]).astype(np.int64)
        counts[todo] = base + rng.multinomial(trials[todo] - c[todo], probs[todo])
    return counts * (x / trials)[:, None]


def generate_population(config: PopulationConfig) -> FinitePopulation:
    """Draw a full population; deterministic in ``config.seed``."""
    seed = config.seed
    x = draw_size_variable(config, substream(seed, "size"))
    stratum = assign_strata(x, config.strata_boundaries)
    c = draw_detail_count(stratum, substream(seed, "count"))
    y = draw_details(x, c, substream(seed, "details"))
    # absorb the last-ulp rounding of the rescaling into each row's largest item
    big = np.argmax(y, axis=1)
    y[np.arange(x.size), big] += x - y.sum(axis=1)
    return FinitePopulation(
        ids=np.arange(1, x.size + 1),
        stratum=stratum,
        x=x,
        y=y,
        c=c,
        num_strata=config.num_strata,
        config=config,
    )


def write_population_csv(population: FinitePopulation, path) -> None:
    T = population.num_items
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "stratum", "x", *[f"y{t + 1}" for t in range(T)]])
        for i in range(len(population)):
            writer.writerow(
                [
                    int(population.ids[i]),
                    int(population.stratum[i]),
                    repr(float(population.x[i])),
                    *[repr(float(v)) for v in population.y[i]],
                ]
            )


def read_population_csv(path, num_strata: int | None = None) -> FinitePopulation:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "stratum", "x"]:
            raise DataError(f"{path}: header must start with id,stratum,x")
        item_cols = header[3:]
        if not item_cols:
            raise DataError(f"{path}: no detail item columns")
        rows = [r for r in reader if r]
    try:
        ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
        stratum = np.array([int(r[1]) for r in rows], dtype=np.int64)
        x = np.array([float(r[2]) for r in rows])
        y = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(len(rows), len(item_cols))
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    c = (y > 0).sum(axis=1)
    H = int(num_strata or (stratum.max() if stratum.size else 1))
    return FinitePopulation(ids, stratum, x, y, c, H)
