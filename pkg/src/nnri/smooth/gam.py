"""Multinomial-link additive model for the ratio function.

For ``T`` items the model has ``T - 1`` spline predictors
``eta_t(x) = B(x) beta_t`` plus a fixed reference predictor ``eta_T = 1``;
ratios are the softmax of the stacked predictors. Coefficients minimize the
penalized squared error ``sum_i delta_i ||x_i R(x_i) - y_i||^2 / scale
+ lam * sum_t beta_t' S beta_t`` by damped Gauss-Newton, with ``lam`` picked
from a grid by generalized cross-validation on the linearized fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..errors import FitError
from .bspline import BSplineBasis
from .pspline import RIDGE, default_num_knots, gcv_score, relative_lambda_grid

REFERENCE_ETA = 1.0


def softmax_ratios(eta_free: np.ndarray) -> np.ndarray:
    """Append the reference predictor and map rows onto the simplex."""
    eta = np.concatenate([eta_free, np.full((eta_free.shape[0], 1), REFERENCE_ETA)], axis=1)
    eta = eta - eta.max(axis=1, keepdims=True)
    e = np.exp(eta)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class GamProblem:
    """Data and penalty for one fit; ``beta`` is flattened from ``(T - 1, p)``."""

    B: np.ndarray
    x: np.ndarray
    y: np.ndarray
    S: np.ndarray
    scale: float
    ridge: float = 0.0

    @property
    def num_items(self) -> int:
        return self.y.shape[1]

    @property
    def num_basis(self) -> int:
        return self.B.shape[1]

    def unpack(self, beta):
        return np.asarray(beta, dtype=float).reshape(self.num_items - 1, self.num_basis)

    def ratios(self, beta) -> np.ndarray:
        return softmax_ratios(self.B @ self.unpack(beta).T)

    def residuals(self, beta) -> np.ndarray:
        return (self.x[:, None] * self.ratios(beta) - self.y) / np.sqrt(self.scale)

    def penalty(self, beta) -> float:
        b = self.unpack(beta)
        return float(np.einsum("sk,kl,sl->", b, self.S, b) + self.ridge * (b * b).sum())

    def objective(self, beta, lam) -> float:
        r = self.residuals(beta)
        return float((r * r).sum()) + lam * self.penalty(beta)

    def jacobian(self, beta) -> np.ndarray:
        """d residual[(i, t)] / d beta[(s, k)], shape ``(n T, (T - 1) p)``."""
        R = self.ratios(beta)
        n, T = R.shape
        # G[i, t, s] = R_it (1[t == s] - R_is), s < T - 1
        G = -R[:, :, None] * R[:, None, : T - 1]
        idx = np.arange(T - 1)
        G[:, idx, idx] += R[:, : T - 1]
        G *= (self.x / np.sqrt(self.scale))[:, None, None]
        J = G[:, :, :, None] * self.B[:, None, None, :]
        return J.reshape(n * T, (T - 1) * self.num_basis)

    def penalty_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.num_items - 1), self.S + self.ridge * np.eye(self.num_basis))

    def gradient(self, beta, lam) -> np.ndarray:
        J = self.jacobian(beta)
        r = self.residuals(beta).ravel()
        return 2.0 * (J.T @ r) + 2.0 * lam * (self.penalty_matrix() @ np.ravel(beta))


@dataclass
class GamFit:
    method = "NONPARAM"
    basis: BSplineBasis
    coef: np.ndarray
    lam: float
    lam_grid: np.ndarray
    gcv: np.ndarray
    edf: float
    trace: list[float] = field(default_factory=list)
    traces: list[list[float]] = field(default_factory=list, repr=False)
    converged: bool = True
    iterations: int = 0
    grid_converged: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_knots(self) -> int:
        return self.basis.interior.size

    def predict(self, x, stratum=None) -> np.ndarray:
        return softmax_ratios(self.basis.design(x) @ self.coef.T)

    def diagnostics(self) -> dict:
        return {
            "method": self.method,
            "lambda": self.lam,
            "K": int(self.num_knots),
            "basis_size": int(self.basis.size),
            "edf": self.edf,
            "objective_trace": list(self.trace),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "unconverged_lambdas": (
                [] if self.grid_converged is None
                else [float(v) for v in self.lam_grid[~self.grid_converged]]
            ),
        }


def _initial_beta(problem: GamProblem) -> np.ndarray:
    p = problem.y.sum(axis=0) / problem.x.sum()
    p = np.clip(p, 1e-4, None)
    p = p / p.sum()
    eta = REFERENCE_ETA + np.log(p[:-1] / p[-1])
    # B-splines sum to one, so constant coefficients give a constant predictor
    return np.repeat(eta[:, None], problem.num_basis, axis=1).ravel()


def solve_gauss_newton(problem: GamProblem, lam: float, beta0, max_iter=200, tol=1e-8):
    """Damped Gauss-Newton; returns ``(beta, trace, converged, n_iter)``.

    Step halving keeps the objective non-increasing; ``trace`` records the
    objective after each accepted step (first entry is the start value).
    """
    beta = np.array(beta0, dtype=float)
    P = problem.penalty_matrix()
    f = problem.objective(beta, lam)
    trace = [f]
    for it in range(1, max_iter + 1):
        J = problem.jacobian(beta)
        r = problem.residuals(beta).ravel()
        H = J.T @ J + lam * P
        g = J.T @ r + lam * (P @ beta)
        H[np.diag_indices_from(H)] += RIDGE * max(1.0, np.trace(H) / H.shape[0])
        try:
            step = -scipy.linalg.solve(H, g, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = -np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            fc = problem.objective(cand, lam)
            if fc <= f:
                break
            t *= 0.5
            if t < 1e-10:
                return beta, trace, True, it
        rel = (f - fc) / max(abs(f), np.finfo(float).tiny)
        beta, f = cand, fc
        trace.append(f)
        if rel < tol:
            return beta, trace, True, it
    return beta, trace, False, max_iter


def fit_gam_multinomial(x, y, delta=None, n_knots: int = 10, lam_grid=None, x_range=None,
                        max_iter: int = 200, tol: float = 1e-8) -> GamFit:
    """Fit the multinomial-link spline model on respondents.

    ``x_range`` sets the basis interval (defaults to the respondent range);
    pass the full-sample range so predictions for recipients stay inside it.
    The number of interior knots drops to ``n_resp // 4`` for small fits.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if delta is not None:
        keep = np.asarray(delta).astype(bool)
        x, y = x[keep], y[keep]
    if x.size == 0:
        raise FitError("no respondents to fit")
    K = default_num_knots(np.unique(x).size, n_knots)
    lo, hi = (x.min(), x.max()) if x_range is None else x_range
    basis = BSplineBasis.from_quantiles(x, K, lo, hi)
    B = basis.design(x)
    scale = float(np.mean(x * x))
    problem = GamProblem(B, x, y, basis.penalty(), scale, ridge=RIDGE)
    beta = _initial_beta(problem)
    J0 = problem.jacobian(beta)
    lam_scale = np.trace(J0.T @ J0) / max(np.trace(problem.penalty_matrix()), np.finfo(float).tiny)
    rel = relative_lambda_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    grid = np.sort(rel)[::-1] * lam_scale
    n_eff = float(x.size * (y.shape[1] - 1))
    scores = np.empty(grid.size)
    fits = []
    for j, lam in enumerate(grid):
        beta, trace, ok, iters = solve_gauss_newton(problem, lam, beta, max_iter, tol)
        J = problem.jacobian(beta)
        JtJ = J.T @ J
        H = JtJ + lam * problem.penalty_matrix()
        H[np.diag_indices_from(H)] += RIDGE * max(1.0, np.trace(H) / H.shape[0])
        edf = float(np.trace(np.linalg.solve(H, JtJ)))
        r = problem.residuals(beta)
        scores[j] = gcv_score(float((r * r).sum()), n_eff, edf)
        fits.append((beta.copy(), trace, ok, iters, edf))
    # an unconverged fit has no meaningful GCV score, so it cannot be selected
    converged = np.array([f[2] for f in fits])
    if not converged.any():
        best = int(np.argmin(scores))
        raise FitError(
            f"Gauss-Newton did not converge in {max_iter} iterations for any lambda",
            diagnostics={"lambda": float(grid[best]), "objective_trace": fits[best][1]},
        )
    best = int(np.argmin(np.where(converged, scores, np.inf)))
    beta, trace, ok, iters, edf = fits[best]
    order = np.argsort(grid)
    return GamFit(
        basis=basis,
        coef=problem.unpack(beta),
        lam=float(grid[best]),
        lam_grid=grid[order],
        gcv=scores[order],
        edf=edf,
        trace=trace,
        traces=[fits[i][1] for i in order],
        converged=ok,
        iterations=iters,
        grid_converged=converged[order],
    )
