"""The reflection offset ``L(u) = inf{x >= 0 : mean_i h(x + u_i) >= 0}``.

All routines accept a single sample of shape ``(N,)`` or a stack of samples of
shape ``(R, N)``; rows are reflected independently and the particle axis is
always the last one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure
from .model import ConstraintSpec

GH_NODES = 64


@dataclass(frozen=True)
class ReflectionResult:
    offset: np.ndarray | float
    residual: np.ndarray | float
    iterations: int


def empirical_h_mean(u, c: ConstraintSpec, x=0.0):
    """``mean_i h(x + u_i)`` along the last axis; ``x`` broadcasts per row."""
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    if u.ndim > 1 and x.ndim == 1:
        x = x[:, None]
    return c.h(x + u).mean(axis=-1)


def _unwrap(u, *arrays):
    if np.ndim(u) == 1:
        return tuple(float(a[0]) for a in arrays)
    return arrays


def reflection_offset(u, c: ConstraintSpec, tol=None) -> ReflectionResult:
    """Bisection for the offset on the bracket ``[0, x0 + (M/m) mean|u|]``.

    Returns the upper end of the final bracket, so the residual is always
    nonnegative and at most ``M*tol`` when the offset is positive. ``tol=None``
    uses ``1e-10 * (1 + bracket width)`` per row.
    """
    u = np.asarray(u, dtype=float)
    rows = np.atleast_2d(u)
    mean0 = empirical_h_mean(rows, c, 0.0)
    offset = np.zeros(rows.shape[0])
    need = mean0 < 0
    iterations = 0
    if np.any(need):
        sub = rows[need]
        lo = np.zeros(sub.shape[0])
        hi = c.x0 + (c.M / c.m) * np.abs(sub).mean(axis=1)
        bad = empirical_h_mean(sub, c, hi) < 0
        if np.any(bad):
            # rounding at the a priori bound: allow a relative nudge, nothing more
            hi = np.where(bad, hi * (1 + 1e-9) + 1e-12, hi)
            if np.any(empirical_h_mean(sub, c, hi) < 0):
                raise BracketFailure("no sign change on [0, x0 + (M/m) mean|u|]: is h increasing?")
        width_tol = 1e-10 * (1.0 + hi) if tol is None else np.full_like(hi, float(tol))
        active = hi - lo > width_tol
        while np.any(active):
            mid = 0.5 * (lo + hi)
            stuck = (mid <= lo) | (mid >= hi)
            ok = empirical_h_mean(sub, c, mid) >= 0
            hi = np.where(active & ~stuck & ok, mid, hi)
            lo = np.where(active & ~stuck & ~ok, mid, lo)
            active &= ~stuck & (hi - lo > width_tol)
            iterations += 1
        offset[need] = hi
    residual = empirical_h_mean(rows, c, offset)
    off, res = _unwrap(u, offset, residual)
    return ReflectionResult(off, res, iterations)


def reflection_offset_linear(u, a: float, b: float) -> ReflectionResult:
    """Closed form ``(mean(u) + b/a)^-`` for ``h(x) = a*x + b``."""
    u = np.asarray(u, dtype=float)
    offset = np.maximum(-(u.mean(axis=-1) + b / a), 0.0)
    residual = a * (u.mean(axis=-1) + offset) + b
    if u.ndim == 1:
        return ReflectionResult(float(offset), float(residual), 0)
    return ReflectionResult(offset, residual, 0)


def reflect(u, c: ConstraintSpec, tol=None) -> ReflectionResult:
    """Dispatch: closed form for linear constraints, bisection otherwise."""
    if c.is_linear:
        return reflection_offset_linear(u, c.a, c.b)
    return reflection_offset(u, c, tol)


# ---------------------------------------------------------------------------
# law-level offset

@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    var: float


@dataclass(frozen=True)
class WeightedSample:
    values: np.ndarray
    weights: np.ndarray


def gauss_hermite(n: int = GH_NODES):
    """Nodes and weights for ``E[phi(G)]``, ``G ~ N(0, 1)``."""
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / w.sum()


def _as_weighted(law) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(law, GaussianLaw):
        if law.var < 0:
            raise ValueError("variance must be >= 0")
        z, w = gauss_hermite()
        return law.mean + np.sqrt(law.var) * z, w
    values = np.asarray(law.values, dtype=float)
    weights = np.asarray(law.weights, dtype=float)
    return values, weights / weights.sum()


def limit_psi(law, c: ConstraintSpec, tol: float = 1e-12, nonneg: bool = True) -> float:
    """Offset restoring ``E[h(x + U)] >= 0`` for a law of ``U``.

    With ``nonneg=False`` the infimum runs over all reals (the root of the
    expected constraint) instead of ``x >= 0``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    values, weights = _as_weighted(law)

    def H(x):
        return float(np.dot(weights, c.h(x + values)))

    h0 = H(0.0)
    if nonneg and h0 >= 0:
        return 0.0
    step = abs(h0) / c.m
    lo, hi = (0.0, step) if h0 < 0 else (-step, 0.0)
    if H(hi) < 0:
        hi += 1e-9 * (1 + abs(hi))
        if H(hi) < 0:
            raise BracketFailure("expected constraint has no root in its a priori bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if H(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return max(hi, 0.0) if nonneg else hi
