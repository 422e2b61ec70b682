"""Reference solutions used to validate the particle solver and measure rates.

* ``tree_solve_exact`` enumerates every joint Rademacher path with plain
  Python recursion and root finding, sharing no numerics with the solver.
* ``closed_form_linear`` covers zero drivers with a linear constraint and an
  affine Gaussian terminal value, where the limit reflection vanishes.
* ``limit_solver`` solves the limit equation for one-dimensional Markovian
  models by propagating the forward law on a truncated lattice.
* ``particle_proxy`` is a very large particle run used where no limit
  characterization is computable (z-dependent drivers).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import AssumptionViolated, PicardDivergence, TreeTooLarge, UnsupportedModel
from .model import (
    MAX_TREE_SIZE,
    PICARD_SWEEP_CAP,
    Affine,
    Constant,
    ModelSpec,
    PerStep,
    SolverConfig,
    TimeGrid,
)
from .reflection import WeightedSample, limit_psi
from .solver import SolutionBundle, solve, value_function, z_function
from .stochastics import euler_forward, generate_brownian

LATTICE_SIZE = 1024
LATTICE_WIDTH = 8.0
MIN_KERNEL_RESOLUTION = 1.5
MAX_LATTICE_SIZE = 8192
PILOT_PATHS = 20_000
PILOT_SEED = 7


# ---------------------------------------------------------------------------
# exhaustive tree

def _empirical_offset(u, c, xtol):
    mean = math.fsum(float(c.h(v)) for v in u) / len(u)
    if c.is_linear:
        return max(-(math.fsum(u) / len(u) + c.b / c.a), 0.0)
    if mean >= 0:
        return 0.0

    def H(x):
        return math.fsum(float(c.h(x + v)) for v in u) / len(u)

    hi = 1.0
    while H(hi) < 0:
        hi *= 2.0
    return brentq(H, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


def tree_solve_exact(model: ModelSpec, grid: TimeGrid, N: int, inner: int = 3,
                     xtol: float = 1e-15) -> SolutionBundle:
    """Backward recursion over the full product tree by direct summation.

    Leaves are ordered like the solver's tree engine: child code ``c`` moves
    particle ``i`` up when bit ``i`` of ``c`` is clear, and a leaf index is the
    base-``2**N`` number formed by its codes, first step most significant.
    """
    M = grid.M
    if N * M > MAX_TREE_SIZE:
        raise TreeTooLarge(f"N*M = {N * M} exceeds {MAX_TREE_SIZE}")
    B = 2 ** N
    moves = [[-1.0 if (code >> i) & 1 else 1.0 for i in range(N)] for code in range(B)]
    t, dt = grid.t, grid.dt
    c = model.constraint
    F = model.driver
    nodes: dict[tuple, tuple] = {}

    def scalar(v):
        return float(np.asarray(v))

    def visit(k, path, x):
        if k == M:
            xi = [scalar(model.g(v)) for v in x]
            psi = _empirical_offset(xi, c, xtol)
            y = [v + psi for v in xi]
            nodes[path] = (x, y, None, psi)
            return y
        sq = math.sqrt(dt[k])
        kids = []
        for code, mv in enumerate(moves):
            xn = [xj + scalar(model.b_fwd(xj)) * dt[k] + scalar(model.sigma_fwd(xj)) * s * sq
                  for xj, s in zip(x, mv)]
            kids.append(visit(k + 1, path + (code,), xn))
        cond = [math.fsum(kid[i] for kid in kids) / B for i in range(N)]
        z = [math.fsum(kid[i] * mv[i] * sq for kid, mv in zip(kids, moves)) / (B * dt[k])
             for i in range(N)]
        yhat = []
        for i in range(N):
            if F.mode == "constant":
                yhat.append(cond[i] + dt[k] * scalar(F(t[k], x[i])))
                continue
            y = cond[i]
            for _ in range(inner):
                y = cond[i] + dt[k] * scalar(F(t[k], x[i], y, z[i]))
            yhat.append(y)
        d = _empirical_offset(yhat, c, xtol)
        y = [v + d for v in yhat]
        nodes[path] = (x, y, z, d)
        return y

    visit(0, (), [float(model.x0_init)] * N)

    S = B ** M
    Y = np.empty((S, N, M + 1))
    X = np.empty((S, N, M + 1))
    Z = np.empty((S, N, M))
    dK = np.empty((S, M))
    dK_T = np.empty(S)
    for leaf in range(S):
        codes = [(leaf // B ** (M - 1 - j)) % B for j in range(M)]
        for k in range(M + 1):
            x, y, z, d = nodes[tuple(codes[:k])]
            X[leaf, :, k] = x
            Y[leaf, :, k] = y
            if k < M:
                Z[leaf, :, k] = z
                dK[leaf, k] = d
            else:
                dK_T[leaf] = d
    return SolutionBundle(Y=Y, Z=Z, dK=dK, dK_T=dK_T, grid=grid, constraint=c, X=X,
                          meta={"engine": "enumeration", "N": N, "M": M})


# ---------------------------------------------------------------------------
# limit references

@dataclass
class ReferencePath:
    """Oracle restricted to the particle grid.

    ``value(k, x)`` and ``zvalue(k, x)`` evaluate the limit (or proxy) value
    and martingale integrand at forward states ``x`` at node ``k``. ``K[-1]``
    is the total reflection at ``T``, terminal offset included.
    """

    grid: TimeGrid
    K: np.ndarray
    value: Callable
    zvalue: Callable | None
    provenance: dict


@dataclass
class LimitSolution:
    """Limit solution on a (fine) grid.

    ``K`` is the deterministic reflection path, ``psi`` the instantaneous
    offsets, ``y_mean`` / ``y_var`` the moments of the law of ``Y_t``. When a
    lattice was used, ``lattice``, ``density`` and ``values`` hold the
    quadrature representation of that law.
    """

    grid: TimeGrid
    K: np.ndarray
    psi: np.ndarray
    y_mean: np.ndarray
    y_var: np.ndarray
    value_fn: Callable
    z_fn: Callable
    provenance: dict = field(default_factory=dict)
    lattice: np.ndarray | None = None
    density: np.ndarray | None = None
    values: np.ndarray | None = None

    def node_index(self, grid: TimeGrid) -> np.ndarray:
        """Positions of the nodes of ``grid`` within this solution's grid."""
        idx = np.searchsorted(self.grid.t, grid.t - 1e-12)
        idx = np.minimum(idx, self.grid.M)
        if not np.allclose(self.grid.t[idx], grid.t, rtol=0, atol=1e-9):
            raise ValueError("particle grid nodes are not nodes of the oracle grid")
        return idx

    def on_grid(self, grid: TimeGrid) -> ReferencePath:
        idx = self.node_index(grid)
        return ReferencePath(
            grid=grid,
            K=self.K[idx],
            value=lambda k, x: self.value_fn(int(idx[k]), x),
            zvalue=lambda k, x: self.z_fn(int(idx[k]), x),
            provenance=dict(self.provenance),
        )


def _require_gaussian_affine(model: ModelSpec):
    if not (isinstance(model.b_fwd, Constant) and isinstance(model.sigma_fwd, Constant)):
        raise UnsupportedModel("closed form needs constant forward coefficients")
    if not isinstance(model.g, Affine):
        raise UnsupportedModel("closed form needs an affine terminal map")
    if not model.constraint.is_linear:
        raise UnsupportedModel("closed form needs a linear constraint")
    if not model.driver.is_zero:
        raise UnsupportedModel("closed form needs a zero driver")


def closed_form_linear(model: ModelSpec, grid: TimeGrid | None = None) -> LimitSolution:
    """Limit solution for ``f = 0``, linear ``h`` and ``xi = p*X_T + q`` with ``X`` Gaussian.

    The offset ``(E[xi] + b/a)^-`` vanishes whenever ``E[h(xi)] >= 0``, so the
    reflection is identically zero and ``Y_t = E[xi | X_t]``.
    """
    _require_gaussian_affine(model)
    grid = grid if grid is not None else TimeGrid.make_uniform(model.T, 1)
    p, q = model.g.a, model.g.b
    drift, sig = model.b_fwd.c, model.sigma_fwd.c
    c = model.constraint
    T = model.T
    mean_xi = p * (model.x0_init + drift * T) + q
    if c.a * mean_xi + c.b < 0:
        raise AssumptionViolated(f"E[h(xi)] = {c.a * mean_xi + c.b:.6g} < 0")
    t = grid.t
    n = grid.M + 1

    def value(k, x):
        return p * (np.asarray(x, dtype=float) + drift * (T - t[k])) + q

    def zval(k, x):
        return np.full(np.shape(x), p * sig)

    return LimitSolution(
        grid=grid,
        K=np.zeros(n),
        psi=np.zeros(n),
        y_mean=np.full(n, mean_xi),
        y_var=p * p * sig * sig * t,
        value_fn=value,
        z_fn=zval,
        provenance={"kind": "closed_form", "proxy": False},
    )


def _lattice_range(model: ModelSpec, grid: TimeGrid, width: float):
    inc = generate_brownian(grid, PILOT_PATHS, PILOT_SEED)
    X = euler_forward(model, inc).X
    mu, sd = X.mean(axis=0), X.std(axis=0)
    if sd.max() <= 0:
        raise UnsupportedModel("degenerate forward process: no diffusion")
    return float((mu - width * sd).min()), float((mu + width * sd).max())


def _kernel(model, x, dt):
    """Row-stochastic Gaussian transition over one Euler step on the lattice ``x``."""
    dx = x[1] - x[0]
    mean = x + model.b_fwd(x) * dt + 0.0 * x
    s = np.abs(model.sigma_fwd(x) + 0.0 * x) * math.sqrt(dt)
    if s.min() <= 0:
        raise UnsupportedModel("lattice transition needs sigma > 0 on the lattice")
    P = norm.pdf((x[None, :] - mean[:, None]) / s[:, None]) * (dx / s[:, None])
    return P / P.sum(axis=1, keepdims=True)


def limit_solver(model: ModelSpec, grid: TimeGrid, refine: int = 10,
                 lattice_size: int = LATTICE_SIZE, picard_tol: float = 1e-10,
                 max_sweeps: int = PICARD_SWEEP_CAP, width: float = LATTICE_WIDTH) -> LimitSolution:
    """Limit solution of a Markovian model with a ``constant`` or ``y`` driver.

    The law of ``X_t`` is propagated on a lattice spanning ``width`` standard
    deviations; conditional expectations are Gaussian-kernel quadratures.
    Each sweep freezes the driver at the previous sweep's values, computes
    ``U_t = E[xi + int_t^T f | X_t]``, the offsets ``psi_t`` restoring the
    constraint for the law of ``U_t``, and ``K_T - K_t = max_{s >= t} psi_s``.
    """
    if model.driver.mode == "yz":
        raise UnsupportedModel("no limit solver for z-dependent drivers")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    fine = grid.refine(refine)
    Mf = fine.M
    t, dt = fine.t, fine.dt
    lo, hi = _lattice_range(model, fine, width)
    s_min = float(np.min(np.abs(model.sigma_fwd(np.linspace(lo, hi, 257)) + 0.0))) \
        * math.sqrt(dt.min())
    L = max(lattice_size, int(math.ceil(MIN_KERNEL_RESOLUTION * (hi - lo) / max(s_min, 1e-300))) + 1)
    if L > MAX_LATTICE_SIZE:
        raise UnsupportedModel(f"lattice of {L} points needed to resolve the smallest step")
    x = np.linspace(lo, hi, L)

    kernels: dict[float, np.ndarray] = {}

    def P(n):
        key = float(dt[n])
        if key not in kernels:
            kernels[key] = _kernel(model, x, key)
        return kernels[key]

    # forward law: point mass at x0, then exact Gaussian, then lattice transitions
    x0 = float(model.x0_init)
    density = np.zeros((Mf + 1, L))
    s0 = abs(float(model.sigma_fwd(x0))) * math.sqrt(dt[0])
    w1 = norm.pdf((x - x0 - float(model.b_fwd(x0)) * dt[0]) / s0)
    density[1] = w1 / w1.sum()
    for n in range(1, Mf):
        density[n + 1] = P(n).T @ density[n]

    c = model.constraint
    F = model.driver
    xi = model.g(x)

    def law(n, v):
        if n == 0:
            return WeightedSample(np.array([np.interp(x0, x, v)]), np.ones(1))
        return WeightedSample(v, density[n])

    Y = np.zeros((Mf + 1, L))
    K_old = None
    for sweep in range(1, max_sweeps + 1):
        U = np.empty_like(Y)
        U[Mf] = xi
        for n in range(Mf - 1, -1, -1):
            U[n] = P(n) @ U[n + 1] + dt[n] * F(t[n], x, Y[n])
        psi = np.array([limit_psi(law(n, U[n]), c) for n in range(Mf + 1)])
        R = np.maximum.accumulate(psi[::-1])[::-1]
        Y_new = U + R[:, None]
        K = R[0] - R
        move = float(np.max(np.abs(Y_new - Y)))
        if K_old is not None:
            move = max(move, float(np.max(np.abs(K - K_old))))
        Y, K_old = Y_new, K
        if F.mode == "constant" or (sweep > 1 and move < picard_tol):
            break
    else:
        raise PicardDivergence(f"limit sweeps did not settle below {picard_tol} (last move {move:.3e})")

    # moments of Y_t under the lattice law
    y0 = float(np.interp(x0, x, Y[0]))
    y_mean = np.einsum("nl,nl->n", density, Y)
    y_var = np.einsum("nl,nl->n", density, Y ** 2) - y_mean ** 2
    y_mean[0], y_var[0] = y0, 0.0
    constraint_mean = np.einsum("nl,nl->n", density, c.h(Y))
    constraint_mean[0] = float(c.h(y0))

    # a priori bound on the total reflection
    abs_xi = float(density[Mf] @ np.abs(xi))
    int_f = sum(dt[n] * (abs(float(F(t[n], x0, y0))) if n == 0
                         else float(density[n] @ np.abs(F(t[n], x, Y[n]))))
                for n in range(Mf))
    bound = (c.M / c.m) * (2 * abs_xi + int_f)
    if K[-1] > bound * (1 + 1e-9) + 1e-12:
        raise AssumptionViolated(f"K_T = {K[-1]:.6g} exceeds its a priori bound {bound:.6g}")

    sig = model.sigma_fwd(x) + 0.0 * x
    Zl = sig * np.gradient(Y, x, axis=1)

    def value(n, xs):
        return np.interp(xs, x, Y[n])

    def zval(n, xs):
        return np.interp(xs, x, Zl[min(n, Mf - 1)])

    return LimitSolution(
        grid=fine, K=K, psi=psi, y_mean=y_mean, y_var=np.maximum(y_var, 0.0),
        value_fn=value, z_fn=zval, lattice=x, density=density, values=Y,
        provenance={"kind": "limit", "proxy": False, "lattice_size": L, "width": width,
                    "refine": refine, "sweeps": sweep, "picard_move": move,
                    "k_bound": bound, "constraint_mean_min": float(constraint_mean.min())},
    )


def particle_proxy(model: ModelSpec, cfg: SolverConfig, n: int = 1_000_000,
                   seed: int = 999) -> ReferencePath:
    """Very large per-step regression run on the particle grid, flagged as a proxy."""
    pcfg = cfg.with_(N=n, seed=seed, scheme=PerStep(), condexp="regression")
    bundle = solve(model, pcfg, validate=False)
    K = bundle.K[0].copy()
    K[-1] = bundle.K_T[0]

    def value(k, x):
        return value_function(bundle, model, pcfg, k, x)

    def zval(k, x):
        return z_function(bundle, k, x)

    return ReferencePath(
        grid=cfg.grid, K=K, value=value, zvalue=zval,
        provenance={"kind": "proxy", "proxy": True, "proxy_n": n, "proxy_seed": seed,
                    "proxy_K_T": float(bundle.K_T[0])},
    )


def write_limit_csv(sol: LimitSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "K", "psi_star", "Y_mean", "Y_var"])
        for n in range(sol.grid.M + 1):
            wr.writerow([repr(float(v)) for v in
                         (sol.grid.t[n], sol.K[n], sol.psi[n], sol.y_mean[n], sol.y_var[n])])
