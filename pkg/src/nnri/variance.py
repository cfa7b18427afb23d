"""Variance estimation for the imputed total.

All variances are on the scale of the estimated total, ``Var(T_hat)``. The
normalized quantities used in the asymptotic theory differ by the constant
``n / N^2``; :data:`SCALE` records the convention in serialized output.

The total variance splits into a sampling part, computed from smoothed
predictions ``m_i = x_i R(x_i)`` as if they were complete data, and an
imputation part built from the donor weights ``kappa`` and either squared
residuals (``direct``) or a residual-variance model (``modeled``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import Sample, jackknife_replicates, replicate_variance, stratified_srs_variance
from .errors import ConfigurationError
from .smooth import fit_ratio, fit_sigma, predict_m

SCALE = "total"
Z975 = 1.959964

RATIO_CHOICES = ("param1", "param2", "nonparam")
SIGMA_CHOICES = ("direct", "modeled")
VE_MODES = ("full", "negligible-f")
VM_MODES = ("analytic", "jackknife")


def vm_stratified(m_hat, sample: Sample) -> np.ndarray:
    """``sum_h N_h^2 (1 - f_h) s_h^2 / n_h`` of the predictions, per item."""
    return stratified_srs_variance(sample, m_hat)


def vm_jackknife(m_hat, sample: Sample) -> np.ndarray:
    """Delete-1 jackknife (with fpc) of ``sum w m_hat``."""
    return replicate_variance(sample, jackknife_replicates(sample), np.asarray(m_hat, dtype=float))


def _dw(weight, delta, kappa):
    delta = np.asarray(delta).astype(bool)
    w = np.asarray(weight, dtype=float)
    return w, np.where(delta, w * (1.0 + np.asarray(kappa, dtype=float)), 0.0)


def ve_direct_weights(weight, delta, kappa) -> np.ndarray:
    """Per-unit factor ``w^2 delta (1+kappa)^2 - w delta (1+kappa)``."""
    _, a = _dw(weight, delta, kappa)
    return a * a - a


def ve_modeled_weights(weight, delta, kappa) -> np.ndarray:
    """Per-unit factor ``w^2 delta (1+kappa)^2 + w - 2 w delta (1+kappa)``."""
    w, a = _dw(weight, delta, kappa)
    return a * a + w - 2.0 * a


def ve_negligible_weights(weight, delta, kappa) -> np.ndarray:
    """Per-unit factor ``delta {w (1+kappa)}^2`` for negligible sampling fractions."""
    _, a = _dw(weight, delta, kappa)
    return a * a


def ve_direct(weight, delta, kappa, residuals) -> np.ndarray:
    r = np.where(np.asarray(delta).astype(bool)[:, None], np.asarray(residuals, dtype=float), 0.0)
    return ve_direct_weights(weight, delta, kappa) @ (r * r)


def ve_modeled(weight, delta, kappa, sigma2) -> np.ndarray:
    return ve_modeled_weights(weight, delta, kappa) @ np.asarray(sigma2, dtype=float)


def ve_negligible(weight, delta, kappa, sigma2) -> np.ndarray:
    return ve_negligible_weights(weight, delta, kappa) @ np.asarray(sigma2, dtype=float)


def naive_variance(imputed_values, sample: Sample) -> np.ndarray:
    """Complete-data stratified variance with imputed values treated as observed."""
    return stratified_srs_variance(sample, imputed_values)


def confidence_interval(estimate, variance, level: float = 0.95):
    if level == 0.95:
        z = Z975
    else:
        from scipy.stats import norm

        z = float(norm.ppf(0.5 + level / 2.0))
    half = z * np.sqrt(np.asarray(variance, dtype=float))
    est = np.asarray(estimate, dtype=float)
    return est - half, est + half


def coefficient_of_variation(estimate, variance):
    """``100 sqrt(V) / |T|`` in percent; NaN where the estimate is zero."""
    est = np.abs(np.asarray(estimate, dtype=float))
    v = np.asarray(variance, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(est > 0, 100.0 * np.sqrt(v) / np.where(est > 0, est, 1.0), np.nan)


def method_label(ratio: str, sigma: str) -> str:
    base = ratio.upper()
    return base if sigma == "direct" else f"{base}(M)"


def parse_method(spec: str) -> tuple[str, str]:
    """``"param2"``, ``"param2:modeled"`` or ``"PARAM2(M)"`` -> ``("param2", "modeled")``."""
    s = spec.strip().lower()
    if s.endswith("(m)"):
        ratio, sigma = s[:-3], "modeled"
    elif ":" in s:
        ratio, sigma = s.split(":", 1)
    else:
        ratio, sigma = s, "direct"
    if ratio not in RATIO_CHOICES or sigma not in SIGMA_CHOICES:
        raise ConfigurationError(
            f"method: {spec!r} is not one of {{param1,param2,nonparam}}x{{direct,modeled}}"
        )
    return ratio, sigma


ALL_METHODS = tuple((r, s) for r in RATIO_CHOICES for s in SIGMA_CHOICES)


@dataclass
class ItemVariance:
    item: str
    method_R: str
    method_sigma: str
    estimate: float
    vm: float
    ve: float
    v_total: float
    cv_pct: float
    ci_lo: float
    ci_hi: float


@dataclass
class VarianceReport:
    rows: list[ItemVariance] = field(default_factory=list)
    naive: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("item", "method_R", "method_sigma", "estimate", "vm", "ve", "v_total",
               "cv_pct", "ci_lo", "ci_hi")

    def table(self, method_R, method_sigma):
        return [r for r in self.rows if r.method_R == method_R and r.method_sigma == method_sigma]

    def v_total(self, method_R, method_sigma) -> np.ndarray:
        return np.array([r.v_total for r in self.table(method_R, method_sigma)])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for r in self.rows:
                writer.writerow([getattr(r, c) for c in self.COLUMNS])

    def to_json(self) -> str:
        return json.dumps(
            {"scale": SCALE, "metadata": self.metadata, "naive": self.naive,
             "rows": [asdict(r) for r in self.rows]},
            indent=2,
            default=float,
        )


@dataclass
class VarianceInputs:
    """Quantities shared by every variance method for one imputed sample."""

    sample: Sample
    delta: np.ndarray
    kappa: np.ndarray
    values: np.ndarray
    estimate: np.ndarray


def variance_components(inputs: VarianceInputs, ratio: str, sigma: str, ve_mode="full",
                        vm_mode="analytic", fits=None, gam_options=None):
    """``(vm, ve)`` per item for one (ratio model, residual mode) pair.

    ``fits`` is an optional dict cache of ratio fits keyed by ratio name.
    """
    if ve_mode not in VE_MODES:
        raise ConfigurationError(f"ve-mode: unknown value {ve_mode!r}")
    if vm_mode not in VM_MODES:
        raise ConfigurationError(f"vm-mode: unknown value {vm_mode!r}")
    s = inputs.sample
    fits = {} if fits is None else fits
    gam_options = gam_options or {}
    if ratio not in fits:
        fits[ratio] = fit_ratio(ratio, s.x, s.y, inputs.delta, s.weight, s.stratum, **gam_options)
    fit = fits[ratio]
    m_hat = predict_m(fit, s.x, s.stratum)
    vm = vm_stratified(m_hat, s) if vm_mode == "analytic" else vm_jackknife(m_hat, s)
    if sigma == "direct":
        resid = np.where(inputs.delta.astype(bool)[:, None], s.y - m_hat, 0.0)
        if ve_mode == "full":
            ve = ve_direct(s.weight, inputs.delta, inputs.kappa, resid)
        else:
            ve = ve_negligible(s.weight, inputs.delta, inputs.kappa, resid**2)
    else:
        sig = fit_sigma(ratio.upper() + "M", fit, s.x, s.y, inputs.delta, s.stratum,
                        n_knots=gam_options.get("n_knots", 10),
                        lam_grid=gam_options.get("lam_grid"))
        if ve_mode == "full":
            ve = ve_modeled(s.weight, inputs.delta, inputs.kappa, sig.sigma2)
        else:
            ve = ve_negligible(s.weight, inputs.delta, inputs.kappa, sig.sigma2)
    return vm, ve


def variance_report(inputs: VarianceInputs, methods=ALL_METHODS, ve_mode="full",
                    vm_mode="analytic", gam_options=None, level=0.95) -> VarianceReport:
    s = inputs.sample
    labels = s.item_labels
    report = VarianceReport(metadata={"scale": SCALE, "ve_mode": ve_mode, "vm_mode": vm_mode,
                                      "n": int(s.n), "N": float(s.pop_sizes.sum())})
    fits = {}
    naive = naive_variance(inputs.values, s)
    report.naive = {lab: float(v) for lab, v in zip(labels, naive)}
    est = inputs.estimate
    for ratio, sigma in methods:
        vm, ve = variance_components(inputs, ratio, sigma, ve_mode, vm_mode, fits, gam_options)
        vt = vm + ve
        lo, hi = confidence_interval(est, vt, level)
        cv = coefficient_of_variation(est, vt)
        for t, lab in enumerate(labels):
            report.rows.append(ItemVariance(lab, ratio, sigma, float(est[t]), float(vm[t]),
                                            float(ve[t]), float(vt[t]), float(cv[t]),
                                            float(lo[t]), float(hi[t])))
    lo, hi = confidence_interval(est, naive, level)
    cv = coefficient_of_variation(est, naive)
    for t, lab in enumerate(labels):
        report.rows.append(ItemVariance(lab, "naive", "none", float(est[t]), float(naive[t]),
                                        0.0, float(naive[t]), float(cv[t]), float(lo[t]), float(hi[t])))
    return report


__all__ = [
    "ALL_METHODS",
    "SCALE",
    "VarianceInputs",
    "VarianceReport",
    "coefficient_of_variation",
    "confidence_interval",
    "method_label",
    "naive_variance",
    "parse_method",
    "variance_components",
    "variance_report",
    "ve_direct",
    "ve_modeled",
    "ve_negligible",
    "vm_jackknife",
    "vm_stratified",
]
