"""Conditional-expectation engines.

``RegressionEngine`` projects next-step values on polynomials of the current
forward state across the particle cross-section (least-squares Monte Carlo).
``TreeEngine`` averages exactly over the children of each node of a
``BinaryTree``. Both expose the same two calls used by the backward scheme:
``condexp(k, v_next)`` and ``z(k, v_next)``, on arrays shaped
``(nodes at depth, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import RankDeficient, ShapeMismatch

STD_FLOOR = 1e-12
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Basis:
    degree: int = 3

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("basis degree must be >= 0")

    def scaling(self, x):
        x = np.asarray(x, dtype=float)
        return float(x.mean()), max(float(x.std()), STD_FLOOR)

    def design(self, x, center: float, scale: float, degree: int | None = None):
        d = self.degree if degree is None else degree
        u = (np.asarray(x, dtype=float) - center) / scale
        return np.vander(u, d + 1, increasing=True)


@dataclass(frozen=True)
class FitResult:
    coef: np.ndarray
    cond: float
    predictions: np.ndarray
    degree: int
    center: float
    scale: float

    def predict(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.scale
        return np.polynomial.polynomial.polyval(u, self.coef)


def _qr_fit(A, v):
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.min() <= RANK_RTOL * max(diag.max(), 1e-300):
        raise RankDeficient(f"design of rank < {A.shape[1]}")
    coef = solve_triangular(R, Q.T @ v)
    return coef, float(diag.max() / diag.min())


def fit_condexp(x, v, basis: Basis, allow_reduce: bool = True) -> FitResult:
    """Least-squares projection of ``v`` on ``(1, u, ..., u^d)``, ``u`` standardized ``x``.

    Solved through a QR factorization. A degenerate design (for instance a
    deterministic forward state) raises ``RankDeficient`` unless
    ``allow_reduce``, in which case the degree is lowered until the design
    has full column rank.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != v.shape or x.ndim != 1:
        raise ShapeMismatch("features and targets must be 1-d arrays of equal length")
    center, scale = basis.scaling(x)
    degree = min(basis.degree, x.size - 1)
    if degree < basis.degree and not allow_reduce:
        raise RankDeficient(f"N={x.size} points cannot fit degree {basis.degree}")
    while True:
        A = basis.design(x, center, scale, degree)
        try:
            coef, cond = _qr_fit(A, v)
            break
        except RankDeficient:
            if not allow_reduce or degree == 0:
                raise
            degree -= 1
    return FitResult(coef, cond, A @ coef, degree, center, scale)


def estimate_z(y_next, dB, dt, x, basis: Basis, center: bool = True):
    """Regression estimate of ``E[y_next * dB | x] / dt`` at the design points.

    With ``center`` the targets are first reduced by their own fitted
    conditional mean, which leaves the estimand unchanged (a function of
    ``x`` times ``dB`` has zero conditional mean) and removes most variance.
    Returns ``(z, fit)``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    y_next = np.asarray(y_next, dtype=float)
    if center:
        y_next = y_next - fit_condexp(x, y_next, basis).predictions
    fit = fit_condexp(x, y_next * np.asarray(dB, dtype=float) / dt, basis)
    return fit.predictions, fit


def exact_condexp_tree(tree, values_next, k: int | None = None):
    """Average depth-``k+1`` node values over the children of each depth-``k`` node.

    ``values_next`` has the depth-``k+1`` nodes on its first axis; trailing
    axes (particles, ...) are carried through.
    """
    v = np.asarray(values_next, dtype=float)
    b = tree.branching
    if v.shape[0] % b:
        raise ShapeMismatch(f"{v.shape[0]} nodes is not a multiple of the branching {b}")
    if k is not None and v.shape[0] != tree.node_count(k + 1):
        raise ShapeMismatch(f"expected {tree.node_count(k + 1)} nodes at depth {k + 1}")
    v = v.reshape((v.shape[0] // b, b) + v.shape[1:])
    return np.tensordot(tree.child_probs, v, axes=(0, 1))


class TreeEngine:
    """Exact conditional expectations on a ``BinaryTree``."""

    def __init__(self, tree):
        self.tree = tree

    def condexp(self, k, v_next):
        return exact_condexp_tree(self.tree, v_next, k)

    def z(self, k, v_next):
        weighted = v_next * self.tree.node_increments(k)
        return exact_condexp_tree(self.tree, weighted, k) / self.tree.grid.dt[k]


class RegressionEngine:
    """Cross-sectional least squares on one simulated particle ensemble.

    ``X`` is the ``(N, M+1)`` forward ensemble and ``dB`` the ``(N, M)``
    increments. Arrays passed in and out have a single node row. The fits of
    every step are recorded in ``fits_c`` / ``fits_z``.
    """

    def __init__(self, X, dB, dt, basis: Basis):
        self.X = X
        self.dB = dB
        self.dt = dt
        self.basis = basis
        self.fits_c: dict[int, FitResult] = {}
        self.fits_z: dict[int, FitResult] = {}

    def condexp(self, k, v_next):
        fit = fit_condexp(self.X[:, k], v_next[0], self.basis)
        self.fits_c[k] = fit
        return fit.predictions[None, :]

    def z(self, k, v_next):
        z, fit = estimate_z(v_next[0], self.dB[:, k], self.dt[k], self.X[:, k], self.basis)
        self.fits_z[k] = fit
        return z[None, :]
