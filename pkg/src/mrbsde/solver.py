"""Backward particle schemes for the flat solution ``(Y, Z, K)``.

Every array a sweep touches is laid out per depth ``k`` as ``(nodes, N)``: one
node for a Monte Carlo ensemble, ``2**(N*k)`` nodes on an exact tree. A time
step conditions the next values, adds the driver increment, then shifts all
particles of a node by the common reflection offset. Because the offset is
taken at every step, the shift accumulated from ``t_k`` onwards coincides with
the discrete Snell envelope of the per-step offsets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import PicardDivergence
from .model import ConstraintSpec, PicardOuter, SolverConfig, TimeGrid, validate_model
from .reflection import reflect
from .regression import Basis, RegressionEngine, TreeEngine
from .stochastics import build_binary_tree, euler_forward, generate_brownian


@dataclass
class SolutionBundle:
    """Solver output.

    Arrays carry a leading scenario axis ``S``: one scenario for a simulated
    ensemble, every leaf of the tree (with probabilities ``weights``) in exact
    mode. ``K[:, 0] = 0`` and ``K[:, k+1] - K[:, k] = dK[:, k]`` is the offset
    applied at ``t_k``; ``dK_T`` is the terminal offset folded into ``theta``.
    """

    Y: np.ndarray  # (S, N, M+1)
    Z: np.ndarray  # (S, N, M)
    dK: np.ndarray  # (S, M)
    dK_T: np.ndarray  # (S,)
    grid: TimeGrid
    constraint: ConstraintSpec
    X: np.ndarray | None = None
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    fits_c: dict = field(default_factory=dict, repr=False)
    fits_z: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.full(self.Y.shape[0], 1.0 / self.Y.shape[0])
        self.constraint_min, self.skorokhod_max = skorokhod_residual(self)

    @property
    def K(self) -> np.ndarray:
        K = np.zeros((self.dK.shape[0], self.dK.shape[1] + 1))
        np.cumsum(self.dK, axis=1, out=K[:, 1:])
        return K

    @property
    def K_T(self) -> np.ndarray:
        """Total reflection including the terminal offset."""
        return self.K[:, -1] + self.dK_T

    @property
    def constraint_mean(self) -> np.ndarray:
        return self.constraint.h(self.Y).mean(axis=1)

    @property
    def N(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class SnellPath:
    S: list
    dK: list


def skorokhod_residual(bundle: SolutionBundle) -> tuple[float, float]:
    """``(min_k mean_i h(Y_k), max_k dK_k * mean_i h(Y_k))`` over all nodes."""
    cm = bundle.constraint_mean
    flat = bundle.dK * cm[:, :-1]
    terminal = bundle.dK_T * cm[:, -1]
    sk = max(float(flat.max(initial=0.0)), float(terminal.max(initial=0.0)))
    return float(cm.min()), sk


def terminal_adjust(xi, c: ConstraintSpec, tol=None):
    """Shift the terminal sample by the offset restoring the empirical constraint."""
    xi = np.asarray(xi, dtype=float)
    r = reflect(xi, c, tol)
    psiT = r.offset
    theta = xi + (np.asarray(psiT)[..., None] if xi.ndim > 1 else psiT)
    return theta, psiT


def snell_envelope(psi, condexp=None) -> SnellPath:
    """Discrete Snell envelope of ``psi[0..M]`` with its Doob-Meyer increments.

    ``condexp(k, S_next)`` maps depth-``k+1`` values to depth ``k``; omitted,
    ``psi`` is treated as deterministic.
    """
    if condexp is None:
        def condexp(k, s):
            return s
    M = len(psi) - 1
    S = [None] * (M + 1)
    dK = [None] * M
    S[M] = np.asarray(psi[M], dtype=float)
    for k in range(M - 1, -1, -1):
        cont = np.asarray(condexp(k, S[k + 1]), dtype=float)
        S[k] = np.maximum(np.asarray(psi[k], dtype=float), cont)
        dK[k] = S[k] - cont
    return SnellPath(S, dK)


def predictor(model, t, dt, x, c, z, inner: int, frozen=None):
    """Conditioned value plus the driver increment, before reflection.

    In ``y`` / ``yz`` mode the ``y`` argument of the driver is found by
    ``inner`` fixed-point corrections started from ``c``; ``frozen`` replaces
    the ``(y, z)`` arguments by values from a previous sweep.
    """
    F = model.driver
    if frozen is not None:
        return c + dt * F(t, x, frozen[0], frozen[1])
    if F.mode == "constant":
        return c + dt * F(t, x)
    y = c
    moves = []
    for _ in range(inner):
        new = c + dt * F(t, x, y, z)
        moves.append(float(np.max(np.abs(new - y), initial=0.0)))
        y = new
    if len(moves) > 1 and moves[-1] > moves[0] > 0:
        raise PicardDivergence("inner fixed-point corrections are not contracting")
    return y


@dataclass
class Step:
    y: np.ndarray
    z: np.ndarray
    dK: np.ndarray
    yhat: np.ndarray


def backward_step(y_next, k: int, x, engine, model, cfg: SolverConfig, frozen=None) -> Step:
    """One step ``t_{k+1} -> t_k``: condition, add driver, reflect."""
    grid = cfg.grid
    c = engine.condexp(k, y_next)
    z = engine.z(k, y_next)
    yhat = predictor(model, grid.t[k], grid.dt[k], x, c, z, cfg.inner_picard, frozen)
    dK = np.asarray(reflect(yhat, model.constraint, cfg.bisect_tol).offset)
    return Step(yhat + dK[:, None], z, dK, yhat)


def _sweep(model, cfg, X, engine, theta, frozen=None):
    M = cfg.grid.M
    Y, Z, dK = [None] * (M + 1), [None] * M, [None] * M
    Y[M] = theta
    for k in range(M - 1, -1, -1):
        fk = None if frozen is None else (frozen[0][k], frozen[1][k])
        step = backward_step(Y[k + 1], k, X[k], engine, model, cfg, fk)
        Y[k], Z[k], dK[k] = step.y, step.z, step.dK
    return Y, Z, dK


def _to_leaves(per_depth, branching, M):
    """Expand per-depth node arrays to the leaf layout along a new last axis."""
    out = [np.repeat(a, branching ** (M - k), axis=0) for k, a in enumerate(per_depth)]
    return np.stack(out, axis=-1)


def solve(model, cfg: SolverConfig, validate: bool = True, particles=None) -> SolutionBundle:
    """Simulate the particle system and solve it backward on ``cfg.grid``.

    ``particles`` selects which per-particle random streams populate the
    ensemble (default ``0..N-1``); it is ignored on the tree.
    """
    if validate:
        validate_model(model, cfg)
    grid, c = cfg.grid, model.constraint
    M = grid.M
    if cfg.condexp == "tree":
        tree = build_binary_tree(grid, cfg.N)
        X = tree.forward(model)
        engine = TreeEngine(tree)
        branching = tree.branching
    else:
        inc = generate_brownian(grid, cfg.N, cfg.seed, particles=particles)
        Xf = euler_forward(model, inc).X
        X = [Xf[None, :, k] for k in range(M + 1)]
        engine = RegressionEngine(Xf, inc.dB, grid.dt, Basis(cfg.basis_degree))
        branching = 1

    xi = model.g(X[M])
    theta, psiT = terminal_adjust(xi, c, cfg.bisect_tol)
    meta = {"scheme": getattr(cfg.scheme, "name", "per_step"), "condexp": cfg.condexp,
            "N": cfg.N, "M": M, "seed": cfg.seed, "sweeps": 1}

    if isinstance(cfg.scheme, PicardOuter):
        frozen = ([np.zeros_like(a) for a in X[:M]], [np.zeros_like(a) for a in X[:M]])
        for sweep in range(1, cfg.scheme.sweeps + 1):
            Y, Z, dK = _sweep(model, cfg, X, engine, theta, frozen)
            move = max(max(float(np.max(np.abs(Y[k] - frozen[0][k]))),
                           float(np.max(np.abs(Z[k] - frozen[1][k]))))
                       for k in range(M))
            frozen = (Y[:M], Z)
            if move < cfg.scheme.tol_fix:
                break
        else:
            raise PicardDivergence(
                f"outer Picard sweeps did not settle below {cfg.scheme.tol_fix} "
                f"within {cfg.scheme.sweeps} sweeps (last move {move:.3e})")
        meta["sweeps"] = sweep
        meta["picard_move"] = move
    else:
        Y, Z, dK = _sweep(model, cfg, X, engine, theta)

    S = branching ** M
    bundle = SolutionBundle(
        Y=_to_leaves(Y, branching, M),
        Z=_to_leaves(Z, branching, M) if M else np.zeros((S, cfg.N, 0)),
        dK=_to_leaves([d[:, None] for d in dK], branching, M)[:, 0, :],
        dK_T=np.broadcast_to(np.asarray(psiT, dtype=float), (S,)).copy(),
        grid=grid,
        constraint=c,
        X=_to_leaves(X, branching, M),
        meta=meta,
    )
    if isinstance(engine, RegressionEngine):
        bundle.fits_c = dict(engine.fits_c)
        bundle.fits_z = dict(engine.fits_z)
    return bundle


def value_function(bundle: SolutionBundle, model, cfg: SolverConfig, k: int, x):
    """Replay step ``k`` of a per-step regression solve at new forward states ``x``."""
    if isinstance(cfg.scheme, PicardOuter) or not bundle.fits_c:
        raise ValueError("value replay needs a per-step regression solution")
    x = np.asarray(x, dtype=float)
    if k == cfg.grid.M:
        return model.g(x) + float(bundle.dK_T[0])
    c = bundle.fits_c[k].predict(x)
    z = bundle.fits_z[k].predict(x)
    yhat = predictor(model, cfg.grid.t[k], cfg.grid.dt[k], x, c, z, cfg.inner_picard)
    return yhat + float(bundle.dK[0, k])


def z_function(bundle: SolutionBundle, k: int, x):
    return bundle.fits_z[k].predict(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# dumps

def _f(v) -> str:
    return repr(float(v))


def write_solution_csv(bundle: SolutionBundle, path) -> None:
    """Per-node summary ``k,t,K,dK,constraint_mean,Y_mean,Y_std``.

    Tree solutions are averaged over leaves with their probabilities.
    """
    w = bundle.weights
    K = w @ bundle.K
    dK = w @ bundle.dK
    cm = w @ bundle.constraint_mean
    ym = np.einsum("s,snk->k", w, bundle.Y) / bundle.N
    y2 = np.einsum("s,snk->k", w, bundle.Y ** 2) / bundle.N
    ystd = np.sqrt(np.maximum(y2 - ym ** 2, 0.0))
    t = bundle.grid.t
    M = bundle.grid.M
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k", "t", "K", "dK", "constraint_mean", "Y_mean", "Y_std"])
        for k in range(M + 1):
            dk = dK[k] if k < M else w @ bundle.dK_T
            wr.writerow([k, _f(t[k]), _f(K[k]), _f(dk), _f(cm[k]), _f(ym[k]), _f(ystd[k])])


def write_particles_csv(bundle: SolutionBundle, path) -> None:
    t = bundle.grid.t
    M = bundle.grid.M
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["scenario", "particle", "k", "t", "X", "Y", "Z"])
        for s in range(bundle.Y.shape[0]):
            for i in range(bundle.N):
                for k in range(M + 1):
                    z = _f(bundle.Z[s, i, k]) if k < M else ""
                    x = _f(bundle.X[s, i, k]) if bundle.X is not None else ""
                    wr.writerow([s, i, k, _f(t[k]), x, _f(bundle.Y[s, i, k]), z])
