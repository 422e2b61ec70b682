"""Solve, chaos-sweep and validation drivers behind the command line.

Reports are JSON with sorted keys and CSV / two-column data files; everything
is written through a temporary file and renamed into place.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, MRBSDEError, OracleUnavailable, UnsupportedModel
from .model import (
    ChaosSettings,
    ConstraintSpec,
    ModelSpec,
    SinAffine,
    SolverConfig,
    TimeGrid,
    load_document,
    markovian_model,
    model_to_dict,
    validate_model,
)
from .oracle import (
    ReferencePath,
    closed_form_linear,
    limit_solver,
    particle_proxy,
    tree_solve_exact,
    write_limit_csv,
)
from .reflection import GaussianLaw, empirical_h_mean, limit_psi, reflect
from .solver import (
    SolutionBundle,
    snell_envelope,
    solve,
    write_particles_csv,
    write_solution_csv,
)

SEED_ENV = "MRBSDE_SEED"
THREADS_ENV = "MRBSDE_THREADS"


# ---------------------------------------------------------------------------
# file plumbing

def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_writer(path, writer, *args) -> None:
    """Run ``writer(*args, tmp_path)`` and rename the result onto ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(*args, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v).__name__}")


def error_document(exc: MRBSDEError) -> str:
    return json.dumps({"error": exc.code, "message": str(exc)}, sort_keys=True)


def master_seed(default: int) -> int:
    """``MRBSDE_SEED`` (decimal, unsigned 64-bit) if set, else ``default``."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return default
    value = int(raw.strip(), 10)
    if not 0 <= value < 2**64:
        raise ValueError(f"{SEED_ENV} must be an unsigned 64-bit integer")
    return value


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    return max(1, int(raw)) if raw else 1


def model_id(model: ModelSpec) -> str:
    text = json.dumps(model_to_dict(model), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def read_config(path):
    return load_document(Path(path).read_text())


# ---------------------------------------------------------------------------
# solve

def solution_summary(bundle: SolutionBundle, model: ModelSpec, cfg: SolverConfig) -> dict:
    w = bundle.weights
    return {
        "model_id": model_id(model),
        "N": cfg.N,
        "M": cfg.grid.M,
        "seed": cfg.seed,
        "scheme": bundle.meta["scheme"],
        "condexp": cfg.condexp,
        "sweeps": bundle.meta["sweeps"],
        "scenarios": int(bundle.Y.shape[0]),
        "constraint_min": bundle.constraint_min,
        "skorokhod_max": bundle.skorokhod_max,
        "constraint_tolerance": model.constraint.m * cfg.bisect_tol,
        "K_T": float(w @ bundle.K_T),
        "K_T_max": float(bundle.K_T.max()),
        "dK_T": float(w @ bundle.dK_T),
        "Y0_mean": float(bundle.Y[:, :, 0].mean()),
    }


def cmd_solve(config_path, out_dir, timing: bool = False, particles: bool = False) -> dict:
    """Solve one configured instance; write ``solution.csv`` and ``summary.json``."""
    model, cfg, _ = read_config(config_path)
    cfg = cfg.with_(seed=master_seed(cfg.seed))
    start = time.perf_counter()
    bundle = solve(model, cfg)
    elapsed = time.perf_counter() - start
    summary = solution_summary(bundle, model, cfg)
    if timing:
        summary["runtime_s"] = elapsed
    out = Path(out_dir)
    atomic_writer(out / "solution.csv", write_solution_csv, bundle)
    if particles:
        atomic_writer(out / "particles.csv", write_particles_csv, bundle)
    atomic_write(out / "summary.json", dump_json(summary))
    return summary


# ---------------------------------------------------------------------------
# rates

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float


def fit_rate(N_list, errors, floor: float | None = None) -> RateFit:
    """Least squares line through ``(log N, log err)``.

    Nonpositive errors raise ``DegenerateInput`` unless a ``floor`` is given,
    in which case they are replaced by it with a warning.
    """
    N = np.asarray(N_list, dtype=float)
    e = np.asarray(errors, dtype=float)
    if N.shape != e.shape or N.size < 2:
        raise DegenerateInput("need at least two (N, error) pairs of equal length")
    if np.any(N <= 0):
        raise DegenerateInput("N values must be positive")
    bad = ~(e > 0)
    if np.any(bad):
        if floor is None or not floor > 0:
            raise DegenerateInput(f"{int(bad.sum())} nonpositive error(s)")
        warnings.warn(f"replacing {int(bad.sum())} nonpositive error(s) by the floor {floor:g}",
                      RuntimeWarning, stacklevel=2)
        e = np.where(bad, floor, e)
    return linear_trend(np.log(N), np.log(e))


def linear_trend(x, y) -> RateFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(float(slope), float(intercept), r2)


@dataclass
class ChaosPoint:
    N: int
    reps: int
    err_Y: float
    err_Y_se: float
    err_Y_median: float
    err_K: float
    err_K_se: float
    err_Z: float
    err_Z_se: float
    bound: float
    bound_se: float


@dataclass
class ChaosReport:
    model_id: str
    N_list: list
    reps: int
    seed: int
    points: list
    fits: dict
    oracle: dict
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    def series(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([p.N for p in self.points], dtype=float),
                np.array([getattr(p, name) for p in self.points]))


def rep_seed(master: int, rep: int) -> int:
    """Seed of replication ``rep``; shared by every N so the sweep uses common paths."""
    ss = np.random.SeedSequence(master, spawn_key=(rep,))
    return int(ss.generate_state(1, np.uint64)[0])


def select_oracle(model: ModelSpec, cfg: SolverConfig, chaos: ChaosSettings):
    """Build the reference for the particle grid; returns ``(ReferencePath, LimitSolution | None)``."""
    kind = chaos.oracle
    try:
        if kind in ("auto", "closed_form"):
            try:
                sol = closed_form_linear(model, cfg.grid)
                return sol.on_grid(cfg.grid), sol
            except UnsupportedModel:
                if kind == "closed_form":
                    raise
        if kind in ("auto", "limit") and model.driver.mode != "yz":
            sol = limit_solver(model, cfg.grid, refine=chaos.refine)
            return sol.on_grid(cfg.grid), sol
        if kind in ("auto", "proxy"):
            return particle_proxy(model, cfg, chaos.proxy_n, chaos.proxy_seed), None
        raise UnsupportedModel(f"oracle {kind!r} does not cover this model")
    except UnsupportedModel as exc:
        raise OracleUnavailable(str(exc)) from exc


def particle_errors(bundle: SolutionBundle, ref: ReferencePath) -> dict:
    """Distances of one particle solve to the reference.

    ``err_Y`` averages over particles the grid sup of the squared ``Y``
    gap (particles are exchangeable, so this estimates the same quantity as
    particle 1 alone with less noise); ``err_K`` is the grid sup of the squared
    ``K`` gap, the value at ``T`` including the terminal offset; ``err_Z``
    integrates the squared diagonal ``Z`` gap in time.
    """
    grid = bundle.grid
    Y, Z, X = bundle.Y[0], bundle.Z[0], bundle.X[0]
    M = grid.M
    U = np.stack([ref.value(k, X[:, k]) for k in range(M + 1)], axis=1)
    err_Y = float(np.mean(np.max((Y - U) ** 2, axis=1)))
    K = bundle.K[0].copy()
    K[-1] = bundle.K_T[0]
    err_K = float(np.max((K - ref.K) ** 2))
    if ref.zvalue is not None and M:
        Zr = np.stack([ref.zvalue(k, X[:, k]) for k in range(M)], axis=1)
        err_Z = float(np.mean(((Z - Zr) ** 2) @ grid.dt))
    else:
        err_Z = float("nan")
    bound = float(np.max(np.mean(Y ** 2, axis=0)) + bundle.K_T[0] ** 2)
    return {"err_Y": err_Y, "err_K": err_K, "err_Z": err_Z, "bound": bound}


def _aggregate(N: int, rows: list[dict]) -> ChaosPoint:
    def stats(key):
        v = np.array([r[key] for r in rows])
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))

    eY, eYs = stats("err_Y")
    eK, eKs = stats("err_K")
    eZ, eZs = stats("err_Z")
    b, bs = stats("bound")
    return ChaosPoint(N, len(rows), eY, eYs, float(np.median([r["err_Y"] for r in rows])),
                      eK, eKs, eZ, eZs, b, bs)


def run_chaos(model: ModelSpec, cfg: SolverConfig, chaos: ChaosSettings,
              reference: tuple | None = None, threads: int | None = None) -> ChaosReport:
    """Replicated particle solves for every ``N`` in ``chaos.n`` against one oracle."""
    validate_model(model, cfg)
    seed = master_seed(cfg.seed)
    ref, _ = reference if reference is not None else select_oracle(model, cfg, chaos)
    jobs = [(N, rep) for N in chaos.n for rep in range(chaos.reps)]

    def job(item):
        N, rep = item
        run_cfg = cfg.with_(N=N, seed=rep_seed(seed, rep))
        return particle_errors(solve(model, run_cfg, validate=False), ref)

    workers = threads if threads is not None else thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(item) for item in jobs]

    points = []
    for j, N in enumerate(chaos.n):
        points.append(_aggregate(N, results[j * chaos.reps:(j + 1) * chaos.reps]))
    Ns = [p.N for p in points]
    fits = {}
    for name in ("err_Y", "err_K", "err_Z"):
        vals = [getattr(p, name) for p in points]
        if all(np.isfinite(vals)):
            floor = min((v for v in vals if v > 0), default=None)
            fits[name] = asdict(fit_rate(Ns, vals, floor=floor))
    fits["bound_vs_logN"] = asdict(linear_trend(np.log(Ns), [p.bound for p in points]))
    return ChaosReport(
        model_id=model_id(model),
        N_list=list(Ns),
        reps=chaos.reps,
        seed=seed,
        points=points,
        fits=fits,
        oracle=dict(ref.provenance),
        settings={"M": cfg.grid.M, "T": cfg.grid.T, "basis_degree": cfg.basis_degree,
                  "scheme": getattr(cfg.scheme, "name", "per_step"),
                  "bisect_tol": cfg.bisect_tol, "z_measure": "diagonal",
                  "err_Y_estimator": "particle mean of grid sup"},
    )


def write_rate_file(path, N, values) -> None:
    lines = [f"{int(n)} {float(v)!r}" for n, v in zip(N, values)]
    atomic_write(path, "\n".join(lines) + "\n")


def write_chaos_table(path, report: ChaosReport) -> None:
    cols = ["N", "reps", "err_Y", "err_Y_se", "err_Y_median", "err_K", "err_K_se",
            "err_Z", "err_Z_se", "bound", "bound_se"]
    lines = [",".join(cols)]
    for p in report.points:
        d = asdict(p)
        lines.append(",".join(str(d[c]) if c in ("N", "reps") else repr(float(d[c]))
                              for c in cols))
    atomic_write(path, "\n".join(lines) + "\n")


def cmd_chaos(config_path, out_dir, n_list=None, reps=None) -> ChaosReport:
    """Chaos sweep from a config; writes ``report.json``, ``chaos.csv`` and rate files."""
    model, cfg, chaos = read_config(config_path)
    chaos = chaos or ChaosSettings()
    if n_list is not None or reps is not None:
        chaos = ChaosSettings(n=tuple(n_list) if n_list is not None else chaos.n,
                              reps=reps if reps is not None else chaos.reps,
                              oracle=chaos.oracle, proxy_n=chaos.proxy_n,
                              proxy_seed=chaos.proxy_seed, refine=chaos.refine)
    validate_model(model, cfg)
    ref, limit = select_oracle(model, cfg, chaos)
    report = run_chaos(model, cfg, chaos, reference=(ref, limit))
    out = Path(out_dir)
    atomic_write(out / "report.json", report.to_json())
    write_chaos_table(out / "chaos.csv", report)
    for name in ("err_Y", "err_K", "err_Z", "bound"):
        N, v = report.series(name)
        write_rate_file(out / f"rate_{name}.dat", N, v)
    if limit is not None:
        atomic_writer(out / "oracle.csv", write_limit_csv, limit)
    return report


# ---------------------------------------------------------------------------
# validation suites

def reflection_families() -> dict[str, ConstraintSpec]:
    return {
        "linear": ConstraintSpec.linear(1.0, 0.0),
        "linear_scaled": ConstraintSpec.linear(2.5, -1.0),
        "sin_affine": ConstraintSpec.general(SinAffine(1.0, 0.0, 0.5), 0.5, 1.5),
        "sin_affine_shifted": ConstraintSpec.general(SinAffine(2.0, -0.5, 0.9), 1.1, 2.9),
    }


def reflection_properties(c: ConstraintSpec, samples: int = 10_000, seed: int = 0,
                          tol: float = 1e-10) -> dict[str, int]:
    """Count violations of the offset's structural properties on random samples.

    Each sample is a vector ``u`` of random length with a random shift and
    scale, a permutation of it, a componentwise larger ``v`` and an arbitrary
    ``w``. Checked: ``L >= 0``; permutation invariance; ``L(v) <= L(u)``;
    complementarity (constraint met, and tight when ``L > 0``); the Lipschitz
    bound ``|L(u) - L(w)| <= (M/m) mean|u - w|``; and
    ``L(u) <= x0 + (M/m) mean|u|``.
    """
    rng = np.random.default_rng(seed)
    counts = dict.fromkeys(("nonnegativity", "permutation", "monotonicity",
                            "complementarity", "lipschitz", "majorization"), 0)
    sizes = rng.integers(1, 41, samples)
    ratio = c.M / c.m
    for n in np.unique(sizes):
        rows = int(np.sum(sizes == n))
        shift = rng.normal(-1.0, 2.0, (rows, 1))
        scale = rng.exponential(1.0, (rows, 1))
        u = shift + scale * rng.standard_normal((rows, n))
        perm = np.take_along_axis(u, np.argsort(rng.random((rows, n)), axis=1), axis=1)
        v = u + rng.exponential(0.5, (rows, n)) * (rng.random((rows, n)) < 0.7)
        w = u + rng.normal(0.0, rng.exponential(0.5, (rows, 1)), (rows, n))
        Lu = np.atleast_1d(reflect(u, c, tol).offset)
        Lp = np.atleast_1d(reflect(perm, c, tol).offset)
        Lv = np.atleast_1d(reflect(v, c, tol).offset)
        Lw = np.atleast_1d(reflect(w, c, tol).offset)
        res = empirical_h_mean(u, c, Lu)
        slack = 2 * tol
        counts["nonnegativity"] += int(np.sum(Lu < 0))
        counts["permutation"] += int(np.sum(np.abs(Lu - Lp) > slack))
        counts["monotonicity"] += int(np.sum(Lv > Lu + slack))
        tight = (Lu > 0) & (np.abs(res) > c.M * tol * (1 + 1e-6) + 1e-15)
        counts["complementarity"] += int(np.sum((res < -c.m * tol) | tight))
        lip = ratio * np.abs(u - w).mean(axis=1)
        counts["lipschitz"] += int(np.sum(np.abs(Lu - Lw) > lip * (1 + 1e-12) + slack))
        maj = c.x0 + ratio * np.abs(u).mean(axis=1)
        counts["majorization"] += int(np.sum(Lu > maj * (1 + 1e-12) + tol))
    return counts


def tree_fixture_models() -> dict[str, ModelSpec]:
    """Small models exercising every driver mode and constraint kind on the tree."""
    from .model import Affine, DriverSpec, LinearDriver, SinDriver

    return {
        "martingale_linear": markovian_model(),
        "shifted_linear": markovian_model(terminal=Affine(1.0, 0.3),
                                          constraint=ConstraintSpec.linear(2.0, -0.5)),
        "smooth_y": markovian_model(
            constraint=ConstraintSpec.general(SinAffine(1.0, 0.0, 0.5), 0.5, 1.5),
            driver=DriverSpec("y", LinearDriver(cy=-0.5), 0.5)),
        "sin_driver": markovian_model(
            drift=Affine(-0.3, 0.1),
            terminal=Affine(1.0, 0.5),
            constraint=ConstraintSpec.general(SinAffine(1.0, -0.2, 0.4), 0.6, 1.4),
            driver=DriverSpec("y", SinDriver(amp=0.8, c=-0.3), 0.8)),
        "z_driver": markovian_model(
            terminal=Affine(1.0, 0.2),
            driver=DriverSpec("yz", LinearDriver(cy=-0.5, cz=-0.5), 0.5)),
        "constant_driver": markovian_model(
            terminal=SinAffine(1.0, 0.4, 0.5),
            constraint=ConstraintSpec.general(SinAffine(1.0, -0.3, 0.5), 0.5, 1.5),
            driver=DriverSpec("constant", LinearDriver(c=-0.4, cx=0.3), 0.0)),
    }


TREE_SIZES = [(N, M) for N in (1, 2, 3) for M in (1, 2, 3, 4) if N * M <= 12]
TREE_TOL = 1e-10
TREE_BISECT_TOL = 1e-13


def tree_equivalence(model: ModelSpec, N: int, M: int, T: float = 1.0) -> dict:
    grid = TimeGrid.make_uniform(T, M)
    cfg = SolverConfig(N=N, grid=grid, condexp="tree", bisect_tol=TREE_BISECT_TOL)
    a = solve(model, cfg, validate=False)
    b = tree_solve_exact(model, grid, N)
    return {"Y": float(np.max(np.abs(a.Y - b.Y))),
            "K": float(np.max(np.abs(a.K - b.K))),
            "dK_T": float(np.max(np.abs(a.dK_T - b.dK_T))),
            "bundle": a}


def tree_decomposition_gap(bundle: SolutionBundle, model: ModelSpec, N: int) -> tuple[float, float]:
    """For a constant-driver tree solve: spread of ``Y - U`` across particles, and
    its distance to the Snell envelope of the per-node offsets of ``U``.

    ``U`` is the exact conditional expectation of ``theta`` plus the remaining
    driver integral.
    """
    from .regression import exact_condexp_tree
    from .stochastics import build_binary_tree

    grid = bundle.grid
    M = grid.M
    tree = build_binary_tree(grid, N)
    B = tree.branching
    X = tree.forward(model)
    node = [bundle.Y[:: B ** (M - k), :, k] for k in range(M + 1)]
    U = [None] * (M + 1)
    U[M] = node[M]
    for k in range(M - 1, -1, -1):
        U[k] = exact_condexp_tree(tree, U[k + 1], k) + grid.dt[k] * model.driver(grid.t[k], X[k])
    spread = 0.0
    R = []
    for k in range(M + 1):
        gap = node[k] - U[k]
        spread = max(spread, float(np.max(gap.max(axis=1) - gap.min(axis=1))))
        R.append(gap[:, 0])
    psi = [np.atleast_1d(reflect(U[k], model.constraint, TREE_BISECT_TOL).offset)
           for k in range(M + 1)]
    snell = snell_envelope(psi, lambda k, s: exact_condexp_tree(tree, s, k))
    snell_gap = max(float(np.max(np.abs(snell.S[k] - R[k]))) for k in range(M + 1))
    return spread, snell_gap


def fixtures_dir() -> Path:
    return Path(str(resources.files("mrbsde") / "fixtures"))


def golden_check(path) -> dict:
    """Recompute a frozen tree solution and return its largest deviations."""
    from .model import parse_model

    doc = json.loads(Path(path).read_text())
    model = parse_model(doc["model"])
    grid = TimeGrid.make_uniform(model.T, doc["M"])
    N = doc["N"]
    out = {}
    exact = tree_solve_exact(model, grid, N)
    cfg = SolverConfig(N=N, grid=grid, condexp="tree", bisect_tol=TREE_BISECT_TOL)
    particle = solve(model, cfg, validate=False)
    for name, b in (("enumeration", exact), ("solver", particle)):
        out[name] = max(float(np.max(np.abs(b.Y - np.array(doc["Y"])))),
                        float(np.max(np.abs(b.K - np.array(doc["K"])))),
                        float(np.max(np.abs(b.dK_T - np.array(doc["dK_T"])))))
    return out


def golden_document(model: ModelSpec, N: int, M: int) -> dict:
    grid = TimeGrid.make_uniform(model.T, M)
    b = tree_solve_exact(model, grid, N)
    return {"model": model_to_dict(model), "N": N, "M": M,
            "Y": b.Y.tolist(), "K": b.K.tolist(), "dK_T": b.dK_T.tolist()}


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str


def _suite_reflection(fixtures: Path) -> list[Check]:
    out = []
    for name, c in reflection_families().items():
        counts = reflection_properties(c)
        bad = {k: v for k, v in counts.items() if v}
        out.append(Check("reflection", f"properties[{name}]", not bad,
                         "0 violations" if not bad else json.dumps(bad, sort_keys=True)))
    law = GaussianLaw(0.3, 1.0)
    psi = limit_psi(law, ConstraintSpec.general(SinAffine(1.0, 0.0, 0.5), 0.5, 1.5),
                    nonneg=False)
    x = 0.3 + psi
    err = abs(x + 0.5 * math.exp(-0.5) * math.sin(x))
    out.append(Check("reflection", "gaussian_sin_identity", err < 1e-10, f"{err:.2e}"))
    return out


def _suite_solver(fixtures: Path) -> list[Check]:
    out = []
    models = tree_fixture_models()
    for name, model in models.items():
        worst = {"Y": 0.0, "K": 0.0, "dK_T": 0.0}
        flat_ok = True
        for N, M in TREE_SIZES:
            r = tree_equivalence(model, N, M)
            for k in worst:
                worst[k] = max(worst[k], r[k])
            b = r["bundle"]
            c = model.constraint
            flat_ok &= b.constraint_min >= -c.m * TREE_BISECT_TOL
            flat_ok &= b.skorokhod_max <= c.M * TREE_BISECT_TOL * float(b.K_T.max()) + 1e-300
            flat_ok &= bool(np.all(b.dK >= 0))
        ok = max(worst.values()) <= TREE_TOL
        out.append(Check("solver", f"tree_equivalence[{name}]", ok,
                         ", ".join(f"{k}={v:.1e}" for k, v in worst.items())))
        out.append(Check("solver", f"flatness[{name}]", bool(flat_ok), "residuals within tolerance"))
    snell = snell_envelope([3.0, 1.0, 2.0])
    ok = [float(s) for s in snell.S] == [3.0, 2.0, 2.0] and [float(d) for d in snell.dK] == [1.0, 0.0]
    out.append(Check("solver", "snell_deterministic", ok, f"S={[float(s) for s in snell.S]}"))
    return out


def _suite_oracle(fixtures: Path) -> list[Check]:
    out = []
    for path in sorted(fixtures.glob("golden_*.json")):
        try:
            dev = golden_check(path)
        except (OSError, ValueError, KeyError, TypeError, MRBSDEError) as exc:
            out.append(Check("oracle", f"golden[{path.name}]", False, f"unreadable: {exc}"))
            continue
        ok = max(dev.values()) <= TREE_TOL
        out.append(Check("oracle", f"golden[{path.name}]", ok,
                         ", ".join(f"{k}={v:.1e}" for k, v in dev.items())))
    from .model import Affine

    model = markovian_model(terminal=Affine(1.0, 1.0), constraint=ConstraintSpec.linear(1.0, -1.0))
    grid = TimeGrid.make_uniform(1.0, 10)
    lim = limit_solver(model, grid)
    cf = closed_form_linear(model, lim.grid)
    gap = max(float(np.max(np.abs(lim.K - cf.K))), float(np.max(np.abs(lim.y_mean - cf.y_mean))),
              float(np.max(np.abs(lim.y_var - cf.y_var))))
    out.append(Check("oracle", "limit_vs_closed_form", gap <= 1e-8, f"{gap:.1e}"))
    return out


SUITES = {"reflection": _suite_reflection, "solver": _suite_solver, "oracle": _suite_oracle}


def run_validation(suite: str | None = None, fixtures: Path | None = None) -> list[Check]:
    fixtures = Path(fixtures) if fixtures is not None else fixtures_dir()
    names = list(SUITES) if suite in (None, "all") else [suite]
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {n!r}; choose from {sorted(SUITES)} or 'all'")
    checks: list[Check] = []
    for n in names:
        checks.extend(SUITES[n](fixtures))
    return checks


def format_checks(checks: list[Check]) -> str:
    width = max(len(f"{c.suite}/{c.name}") for c in checks)
    rows = [f"{'PASS' if c.passed else 'FAIL'}  {f'{c.suite}/{c.name}':<{width}}  {c.detail}"
            for c in checks]
    n_fail = sum(not c.passed for c in checks)
    rows.append(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    return "\n".join(rows)


def cmd_validate(suite: str | None = None, fixtures=None) -> int:
    checks = run_validation(suite, fixtures)
    print(format_checks(checks))
    return 0 if all(c.passed for c in checks) else 1
