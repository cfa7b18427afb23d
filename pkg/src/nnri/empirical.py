"""Unit-level survey files: reading, imputing and tabulating.

The input CSV has one row per sampled unit with columns ``unit_id``,
``stratum``, ``weight``, ``x``, ``respondent`` (0/1), an optional ``cell``
column and one column per detail item. Item columns are every column not
in the reserved set, kept in file order. Recipient rows may leave item
cells empty.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import Sample, sample_from_weights
from .errors import DataError
from .imputation import ImputedSample, checked_imputed_total, impute, match_donors
from .variance import (
    ALL_METHODS,
    VarianceInputs,
    VarianceReport,
    coefficient_of_variation,
    method_label,
    variance_report,
)

log = logging.getLogger(__name__)

RESERVED = ("unit_id", "cell", "stratum", "weight", "x", "respondent")
ADDITIVITY_TOLERANCE = 0.005
RATIO_CAP = 1000.0


@dataclass
class EmpiricalDataset:
    unit_id: np.ndarray
    cell: np.ndarray
    stratum: np.ndarray
    weight: np.ndarray
    x: np.ndarray
    y: np.ndarray
    respondent: np.ndarray
    labels: tuple[str, ...]
    has_cell: bool = True
    dropped: int = 0
    demoted: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.x.size

    def sample(self) -> Sample:
        return sample_from_weights(self.unit_id, self.stratum, self.x, self.y, self.weight,
                                   cell=self.cell, labels=self.labels)


def _label_array(values):
    """Integer array when every label is an integer, else strings."""
    try:
        return np.array([int(v) for v in values], dtype=np.int64)
    except ValueError:
        return np.array(values, dtype=str)


def _float(value, column, line):
    try:
        return float(value)
    except ValueError:
        raise DataError(f"line {line}: column {column!r}: not a number: {value!r}") from None


def read_dataset(path, tolerance: float = ADDITIVITY_TOLERANCE) -> EmpiricalDataset:
    """Read and validate a unit-level CSV.

    Rows with ``x <= 0`` are dropped. A respondent whose items miss ``x`` by
    more than ``tolerance * x`` is treated as a nonrespondent.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in RESERVED if c != "cell" and c not in header]
        if missing:
            raise DataError(f"{path}: missing required column(s) {', '.join(missing)}")
        items = [h for h in header if h not in RESERVED]
        if not items:
            raise DataError(f"{path}: no detail item columns")
        col = {h: k for k, h in enumerate(header)}
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            rows.append((line, row))

    ids, cells, strata, w, x, y, resp = [], [], [], [], [], [], []
    dropped = 0
    for line, row in rows:
        xv = _float(row[col["x"]], "x", line)
        if not xv > 0:
            dropped += 1
            continue
        wv = _float(row[col["weight"]], "weight", line)
        if not wv >= 1:
            raise DataError(f"{path}: line {line}: weight {wv} is below 1")
        flag = row[col["respondent"]].strip()
        if flag not in ("0", "1"):
            raise DataError(f"{path}: line {line}: respondent must be 0 or 1, got {flag!r}")
        r = flag == "1"
        vals = []
        for t in items:
            raw = row[col[t]].strip()
            if raw == "":
                if r:
                    raise DataError(f"{path}: line {line}: respondent has empty item {t!r}")
                vals.append(0.0)
            else:
                vals.append(_float(raw, t, line))
        ids.append(row[col["unit_id"]].strip())
        cells.append(row[col["cell"]].strip() if "cell" in col else row[col["stratum"]].strip())
        strata.append(row[col["stratum"]].strip())
        w.append(wv)
        x.append(xv)
        y.append(vals)
        resp.append(r)
    if not x:
        raise DataError(f"{path}: no rows with a positive total")

    x = np.array(x)
    y = np.array(y, dtype=float)
    resp = np.array(resp, dtype=bool)
    gap = np.abs(y.sum(axis=1) - x)
    bad = resp & (gap > tolerance * x)
    uid = _label_array(ids)
    if np.unique(uid).size != uid.size:
        raise DataError(f"{path}: duplicate unit_id values")
    demoted = uid[bad].tolist()
    if demoted:
        log.info("%d respondents fail the additivity check and are imputed", len(demoted))
    resp = resp & ~bad
    y[~resp] = 0.0
    if dropped:
        log.info("dropped %d rows with nonpositive x", dropped)
    return EmpiricalDataset(
        unit_id=uid,
        cell=_label_array(cells),
        stratum=_label_array(strata),
        weight=np.array(w),
        x=x,
        y=y,
        respondent=resp,
        labels=tuple(items),
        has_cell="cell" in col,
        dropped=dropped,
        demoted=demoted,
    )


def write_dataset(data: EmpiricalDataset, path, values=None, imputed: ImputedSample | None = None):
    """Write the unit-level file; with ``imputed`` add ``imputed`` and ``donor_id`` columns."""
    values = data.y if values is None else values
    header = ["unit_id", "cell", "stratum", "weight", "x", *data.labels, "respondent"]
    if imputed is not None:
        header += ["imputed", "donor_id"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [data.unit_id[i], data.cell[i], data.stratum[i], repr(float(data.weight[i])),
                   repr(float(data.x[i]))]
            if imputed is None and not data.respondent[i]:
                row += [""] * len(data.labels)
            else:
                row += [repr(float(v)) for v in values[i]]
            row.append(int(data.respondent[i]))
            if imputed is not None:
                d = imputed.assignment.donor[i]
                row += [int(imputed.imputed[i]), data.unit_id[d] if d >= 0 else ""]
            writer.writerow(row)


def impute_dataset(data: EmpiricalDataset):
    """Nearest-neighbor ratio imputation within cells; returns ``(imputed, total)``."""
    ids = data.unit_id if data.unit_id.dtype.kind == "i" else None
    assignment = match_donors(data.x, data.respondent, data.cell, ids)
    imp = impute(data.x, data.y, data.respondent, assignment, weight=data.weight)
    total = checked_imputed_total(data.weight, data.y, data.respondent, imp)
    return imp, total


@dataclass
class Analysis:
    """Ratios to the estimated total, variance ratios to naive, and CVs."""

    labels: tuple[str, ...]
    total_x: float
    estimate: np.ndarray
    ratio: np.ndarray
    naive: np.ndarray
    variances: dict[str, np.ndarray]
    report: VarianceReport
    n: int
    respondents: int
    demoted: int
    dropped: int

    def variance_ratios(self) -> dict[str, np.ndarray]:
        with np.errstate(divide="ignore", invalid="ignore"):
            return {m: v / self.naive for m, v in self.variances.items()}

    def cvs(self) -> dict[str, np.ndarray]:
        out = {"NAIVE": coefficient_of_variation(self.estimate, self.naive)}
        for m, v in self.variances.items():
            out[m] = coefficient_of_variation(self.estimate, v)
        return out

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not math.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]

        return {
            "items": list(self.labels),
            "n": self.n,
            "respondents": self.respondents,
            "demoted": self.demoted,
            "dropped": self.dropped,
            "total_x": self.total_x,
            "estimate": clean(self.estimate),
            "ratio_to_total": clean(self.ratio),
            "naive_variance": clean(self.naive),
            "variance": {m: clean(v) for m, v in self.variances.items()},
            "variance_ratio": {m: clean(v) for m, v in self.variance_ratios().items()},
            "cv_pct": {m: clean(v) for m, v in self.cvs().items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render(self) -> str:
        """Published-style tables: ratios and CVs to one decimal, huge ratios as XXX."""
        w = max(10, *(len(lab) + 2 for lab in self.labels))
        head = f"{'':<14}" + "".join(f"{lab:>{w}}" for lab in self.labels)
        lines = ["Ratio of item total to total (percent)", head,
                 f"{'R_y':<14}" + "".join(f"{100 * v:>{w}.1f}" for v in self.ratio), "",
                 "Variance ratio to naive", head]
        for m, r in self.variance_ratios().items():
            lines.append(f"{'R_' + m:<14}" + "".join(f"{format_ratio(v):>{w}}" for v in r))
        lines += ["", "Coefficient of variation (percent)", head]
        for m, c in self.cvs().items():
            lines.append(f"{m:<14}" + "".join(f"{_fmt1(v):>{w}}" for v in c))
        return "\n".join(lines)


def _fmt1(v) -> str:
    return "NA" if not math.isfinite(v) else f"{v:.1f}"


def format_ratio(v: float, cap: float = RATIO_CAP) -> str:
    """One decimal, or ``XXX`` above ``cap``."""
    if not math.isfinite(v):
        return "NA"
    return "XXX" if v > cap else f"{v:.1f}"


def analyze_dataset(data: EmpiricalDataset, methods=ALL_METHODS, ve_mode="full",
                    vm_mode="analytic", gam_options=None) -> Analysis:
    imp, total = impute_dataset(data)
    sample = data.sample()
    inputs = VarianceInputs(sample, data.respondent, imp.kappa, imp.values, total)
    report = variance_report(inputs, methods, ve_mode, vm_mode, gam_options)
    tx = float(data.weight @ data.x)
    variances = {method_label(r, s): report.v_total(r, s) for r, s in methods}
    return Analysis(
        labels=data.labels,
        total_x=tx,
        estimate=total,
        ratio=total / tx,
        naive=np.array([report.naive[lab] for lab in data.labels]),
        variances=variances,
        report=report,
        n=data.n,
        respondents=int(data.respondent.sum()),
        demoted=len(data.demoted),
        dropped=data.dropped,
    )


def synthetic_dataset(scenario="uniform100k", mechanism="mcar75", population_size=1000,
                      seed=0) -> tuple[EmpiricalDataset, np.ndarray]:
    """Draw a population, a stratified sample and response indicators.

    Returns the dataset (nonrespondent items zeroed) and the population
    item totals, for closed-loop checks of the analysis pipeline.
    """
    from .design import SampleDesign, draw_sample
    from .popgen import PopulationConfig, generate_population
    from .response import draw_response, parse_mechanism
    from .streams import derive_seed, substream

    pop = generate_population(PopulationConfig(scenario, population_size,
                                               seed=derive_seed(seed, "population")))
    sample = draw_sample(pop, SampleDesign(), substream(seed, "sample"))
    delta = draw_response(sample, parse_mechanism(mechanism), substream(seed, "response")).astype(bool)
    y = np.where(delta[:, None], sample.y, 0.0)
    data = EmpiricalDataset(
        unit_id=sample.ids.astype(np.int64),
        cell=sample.stratum.astype(np.int64),
        stratum=sample.stratum.astype(np.int64),
        weight=sample.weight,
        x=sample.x,
        y=y,
        respondent=delta,
        labels=tuple(f"y{t + 1}" for t in range(sample.num_items)),
    )
    return data, pop.true_totals
