"""Response indicators under MCAR and stratum-level MAR mechanisms."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ResponseError
from .streams import as_generator

NEGATIVE_MAR = (0.85, 0.65, 0.45, 0.25)
POSITIVE_MAR = (0.25, 0.45, 0.65, 0.85)

MAX_RESPONSE_REDRAWS = 100


@dataclass(frozen=True)
class ResponseMechanism:
    """``kind`` is ``"mcar"`` (one probability) or ``"mar"`` (one per stratum)."""

    kind: str
    probs: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("mcar", "mar"):
            raise ConfigurationError(f"mechanism: unknown kind {self.kind!r}")
        p = tuple(float(v) for v in np.atleast_1d(self.probs))
        if self.kind == "mcar" and len(p) != 1:
            raise ConfigurationError("mechanism: MCAR takes a single probability")
        if any(not (0.0 < v <= 1.0) for v in p):
            raise ConfigurationError("mechanism: response probabilities must lie in (0, 1]")
        object.__setattr__(self, "probs", p)
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self):
        if self.kind == "mcar":
            return f"mcar{round(100 * self.probs[0])}"
        if self.probs == NEGATIVE_MAR:
            return "negative_mar"
        if self.probs == POSITIVE_MAR:
            return "positive_mar"
        return "mar"

    def propensity(self, stratum) -> np.ndarray:
        stratum = np.asarray(stratum, dtype=np.int64)
        if self.kind == "mcar":
            return np.full(stratum.shape, self.probs[0])
        if stratum.size and (stratum.min() < 1 or stratum.max() > len(self.probs)):
            raise ConfigurationError(
                f"mechanism: propensities given for strata 1..{len(self.probs)} only"
            )
        return np.asarray(self.probs)[stratum - 1]


def mcar(p: float) -> ResponseMechanism:
    return ResponseMechanism("mcar", (p,))


def stratum_mar(probs) -> ResponseMechanism:
    return ResponseMechanism("mar", tuple(probs))


MECHANISMS = {
    "mcar75": mcar(0.75),
    "mcar50": mcar(0.50),
    "negative_mar": stratum_mar(NEGATIVE_MAR),
    "positive_mar": stratum_mar(POSITIVE_MAR),
}


def parse_mechanism(value) -> ResponseMechanism:
    """Named mechanism, or ``mcarNN`` for MCAR with response rate ``NN`` percent."""
    if isinstance(value, ResponseMechanism):
        return value
    key = str(value).strip().lower().replace("-", "_")
    if key in MECHANISMS:
        return MECHANISMS[key]
    m = re.fullmatch(r"mcar_?(\d{1,3})", key)
    if m and 0 < int(m.group(1)) <= 100:
        return mcar(int(m.group(1)) / 100)
    raise ConfigurationError(
        f"mechanism: unknown value {value!r}; expected one of {', '.join(MECHANISMS)}"
    )


def draw_response(sample, mechanism: ResponseMechanism, rng, cells=None,
                  max_redraws: int = MAX_RESPONSE_REDRAWS) -> np.ndarray:
    """Bernoulli response indicators, redrawn while any cell has no respondent.

    Raises :class:`ResponseError` after ``max_redraws`` failed attempts.
    """
    rng = as_generator(rng)
    stratum = sample.stratum
    cells = sample.cell if cells is None else np.asarray(cells)
    p = mechanism.propensity(stratum)
    _, cell_idx = np.unique(cells, return_inverse=True)
    n_cells = cell_idx.max() + 1 if cell_idx.size else 0
    for _ in range(max_redraws):
        delta = (rng.random(p.size) < p).astype(np.int8)
        if np.all(np.bincount(cell_idx, weights=delta, minlength=n_cells) > 0):
            return delta
    raise ResponseError(
        f"some imputation cell had no respondents after {max_redraws} draws"
    )
