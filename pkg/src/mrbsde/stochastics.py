"""Brownian increments, forward Euler paths and the exact Rademacher tree.

Each particle draws from its own Philox stream keyed by the run seed with the
particle index in the top counter word, so particle ``i``'s path depends on
``(seed, i)`` only: never on ``N``, the generation order or thread schedule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteState, ShapeMismatch, TreeTooLarge
from .model import MAX_TREE_SIZE, TimeGrid


@dataclass(frozen=True)
class IncrementTable:
    dB: np.ndarray  # (N, M), dB[i, k] = B^i(t_{k+1}) - B^i(t_k)
    grid: TimeGrid
    seed: int

    @property
    def N(self) -> int:
        return self.dB.shape[0]

    @property
    def M(self) -> int:
        return self.dB.shape[1]

    @property
    def B(self) -> np.ndarray:
        """Brownian paths at the grid nodes, shape ``(N, M+1)``."""
        out = np.zeros((self.N, self.M + 1))
        np.cumsum(self.dB, axis=1, out=out[:, 1:])
        return out


@dataclass(frozen=True)
class ForwardEnsemble:
    X: np.ndarray  # (N, M+1)


def particle_stream(seed: int, i: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, i]))


def generate_brownian(grid: TimeGrid, N: int, seed: int, particles=None) -> IncrementTable:
    """Gaussian increments with variance ``dt_k``; reproducible per ``(seed, i)``.

    ``particles`` optionally lists the particle indices to generate (default
    ``range(N)``); row ``r`` of the table is the stream of ``particles[r]``.
    """
    idx = range(N) if particles is None else particles
    sd = np.sqrt(grid.dt)
    dB = np.empty((len(idx), grid.M))
    for r, i in enumerate(idx):
        dB[r] = particle_stream(seed, int(i)).standard_normal(grid.M)
    dB *= sd
    return IncrementTable(dB, grid, seed)


def euler_step(model, x, dt, dB):
    return x + model.b_fwd(x) * dt + model.sigma_fwd(x) * dB


def euler_forward(model, inc: IncrementTable) -> ForwardEnsemble:
    if inc.grid.M != inc.dB.shape[1]:
        raise ShapeMismatch("increment table does not match its grid")
    dt = inc.grid.dt
    X = np.empty((inc.N, inc.M + 1))
    X[:, 0] = model.x0_init
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(inc.M):
            X[:, k + 1] = euler_step(model, X[:, k], dt[k], inc.dB[:, k])
    if not np.all(np.isfinite(X)):
        raise NonFiniteState("forward Euler scheme produced a non-finite state")
    return ForwardEnsemble(X)


@dataclass(frozen=True)
class BinaryTree:
    """Full product tree of ``N`` independent Rademacher walks over ``M`` steps.

    A node at depth ``k`` is a history of ``k`` joint moves; it has ``2**N``
    children. Child code ``c`` moves particle ``i`` by ``+sqrt(dt_k)`` when bit
    ``i`` of ``c`` is 0 and by ``-sqrt(dt_k)`` otherwise. Nodes at each depth
    are numbered parent-major, so the children of node ``p`` occupy
    ``p*2**N ... (p+1)*2**N - 1``.
    """

    grid: TimeGrid
    N: int

    @property
    def M(self) -> int:
        return self.grid.M

    @property
    def branching(self) -> int:
        return 2 ** self.N

    @property
    def signs(self) -> np.ndarray:
        codes = np.arange(self.branching)[:, None]
        bits = (codes >> np.arange(self.N)[None, :]) & 1
        return 1.0 - 2.0 * bits

    def child_increments(self, k: int) -> np.ndarray:
        """Increments of all children of any depth-``k`` node, shape ``(2**N, N)``."""
        return self.signs * np.sqrt(self.grid.dt[k])

    @property
    def child_probs(self) -> np.ndarray:
        return np.full(self.branching, 1.0 / self.branching)

    def node_count(self, k: int) -> int:
        return self.branching ** k

    def node_probs(self, k: int) -> np.ndarray:
        return np.full(self.node_count(k), 1.0 / self.node_count(k))

    def node_increments(self, k: int) -> np.ndarray:
        """Increment over step ``k`` leading into each depth-``k+1`` node."""
        return np.tile(self.child_increments(k), (self.node_count(k), 1))

    def leaf_increments(self) -> np.ndarray:
        """Per-leaf increments, shape ``(2**(N*M), N, M)``."""
        n_leaf = self.node_count(self.M)
        out = np.empty((n_leaf, self.N, self.M))
        for k in range(self.M):
            inc = self.node_increments(k)
            out[:, :, k] = np.repeat(inc, self.branching ** (self.M - k - 1), axis=0)
        return out

    def forward(self, model) -> list[np.ndarray]:
        """Euler states per depth: element ``k`` has shape ``(2**(N*k), N)``."""
        X = [np.full((1, self.N), float(model.x0_init))]
        for k in range(self.M):
            parent = np.repeat(X[k], self.branching, axis=0)
            X.append(euler_step(model, parent, self.grid.dt[k], self.node_increments(k)))
        return X


def build_binary_tree(grid: TimeGrid, N: int) -> BinaryTree:
    if N < 1:
        raise ValueError("N must be >= 1")
    if N * grid.M > MAX_TREE_SIZE:
        raise TreeTooLarge(f"N*M = {N * grid.M} exceeds {MAX_TREE_SIZE}")
    return BinaryTree(grid, N)


def write_paths_csv(path, inc: IncrementTable, fwd: ForwardEnsemble) -> None:
    t = inc.grid.t
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["particle", "k", "t", "dB", "X"])
        for i in range(inc.N):
            for k in range(inc.M + 1):
                dB = repr(float(inc.dB[i, k])) if k < inc.M else ""
                w.writerow([i, k, repr(float(t[k])), dB, repr(float(fwd.X[i, k]))])
