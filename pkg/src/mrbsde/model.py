"""Domain types, the named-function registry, config documents and validation.

A configuration document is a JSON object with a ``model`` section, a
``solver`` section and an optional ``chaos`` section. Functions (forward
coefficients, terminal map, driver, constraint) are never user code: they are
chosen by name from a closed registry of parametric families.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, NamedTuple

import numpy as np

from .errors import (
    BadLipschitzBounds,
    BracketFailure,
    ConfigError,
    MissingField,
    NonIncreasingConstraint,
    ParseError,
    TerminalConstraintViolated,
    TreeTooLarge,
    UnknownFunctionName,
    ZDriverNeedsLinearH,
)

MAX_TREE_SIZE = 20
PICARD_SWEEP_CAP = 50
HXI_SAMPLES = 10_000
HXI_SEED = 0x5EED


# ---------------------------------------------------------------------------
# scalar function families

@dataclass(frozen=True)
class Constant:
    c: float = 0.0
    name = "constant"

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class Affine:
    a: float = 1.0
    b: float = 0.0
    name = "affine"

    def __call__(self, x):
        return self.a * np.asarray(x, dtype=float) + self.b

    def params(self):
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class Polynomial:
    coeffs: tuple = (0.0,)
    name = "polynomial"

    def __call__(self, x):
        # coeffs are in increasing degree order
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    def params(self):
        return {"coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class SinAffine:
    """``a*x + b + c*sin(x)``."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    name = "sin_affine"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * x + self.b + self.c * np.sin(x)

    def params(self):
        return {"a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class Exponential:
    """``a*exp(b*x) + c``."""

    a: float = 1.0
    b: float = 1.0
    c: float = 0.0
    name = "exponential"

    def __call__(self, x):
        return self.a * np.exp(self.b * np.asarray(x, dtype=float)) + self.c

    def params(self):
        return {"a": self.a, "b": self.b, "c": self.c}


FUNCTIONS = {cls.name: cls for cls in (Constant, Affine, Polynomial, SinAffine, Exponential)}


# driver families F(t, x, y, z)

@dataclass(frozen=True)
class LinearDriver:
    """``c + ct*t + cx*x + cy*y + cz*z``."""

    c: float = 0.0
    ct: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    cz: float = 0.0
    name = "linear"

    def __call__(self, t, x, y, z):
        return self.c + self.ct * t + self.cx * x + self.cy * y + self.cz * z

    def params(self):
        return {"c": self.c, "ct": self.ct, "cx": self.cx, "cy": self.cy, "cz": self.cz}


@dataclass(frozen=True)
class SinDriver:
    """``amp*sin(y) + c + cx*x``."""

    amp: float = 0.0
    c: float = 0.0
    cx: float = 0.0
    name = "sin_y"

    def __call__(self, t, x, y, z):
        return self.amp * np.sin(y) + self.c + self.cx * x

    def params(self):
        return {"amp": self.amp, "c": self.c, "cx": self.cx}


DRIVERS = {cls.name: cls for cls in (LinearDriver, SinDriver)}


def make_function(doc: dict, registry: dict = FUNCTIONS, where: str = "function"):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object, got {type(doc).__name__}")
    if "name" not in doc:
        raise MissingField(f"{where}.name")
    name = doc["name"]
    if name not in registry:
        raise UnknownFunctionName(f"{where}: unknown function family {name!r}")
    cls = registry[name]
    kwargs = {}
    allowed = set(cls.__dataclass_fields__)
    for key, value in doc.items():
        if key == "name":
            continue
        if key not in allowed:
            raise ParseError(f"{where}: unknown key {key!r} for family {name!r}")
        if key == "coeffs":
            if not isinstance(value, list) or not value:
                raise ParseError(f"{where}.coeffs must be a non-empty list")
            kwargs[key] = tuple(_num(v, f"{where}.coeffs") for v in value)
        else:
            kwargs[key] = _num(value, f"{where}.{key}")
    return cls(**kwargs)


def function_to_dict(fn) -> dict:
    return {"name": fn.name, **fn.params()}


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class TimeGrid:
    nodes: tuple
    uniform: bool = False

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ConfigError("time grid needs at least two nodes")
        if t[0] != 0.0:
            raise ConfigError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("time grid must be strictly increasing")

    @classmethod
    def make_uniform(cls, T: float, M: int) -> "TimeGrid":
        if M < 1:
            raise ConfigError("M must be >= 1")
        nodes = tuple(float(v) for v in np.linspace(0.0, T, M + 1))
        return cls(nodes, uniform=True)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.nodes, dtype=float)

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def T(self) -> float:
        return self.nodes[-1]

    def refine(self, factor: int) -> "TimeGrid":
        """Subdivide each step into ``factor`` equal sub-steps."""
        t = self.t
        pieces = [np.linspace(t[k], t[k + 1], factor + 1)[:-1] for k in range(self.M)]
        nodes = np.concatenate(pieces + [t[-1:]])
        return TimeGrid(tuple(float(v) for v in nodes), uniform=self.uniform)


@dataclass(frozen=True)
class ConstraintSpec:
    """Increasing bi-Lipschitz constraint function ``h``.

    ``kind`` is ``"linear"`` (``h(x) = a*x + b``, closed-form reflection) or
    ``"general"`` (any registry family with declared bounds ``m <= h' <= M``).
    """

    kind: str
    fn: Any
    m: float
    M: float

    @classmethod
    def linear(cls, a: float, b: float) -> "ConstraintSpec":
        return cls("linear", Affine(float(a), float(b)), float(a), float(a))

    @classmethod
    def general(cls, fn, m: float, M: float) -> "ConstraintSpec":
        return cls("general", fn, float(m), float(M))

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    @property
    def a(self) -> float:
        return self.fn.a

    @property
    def b(self) -> float:
        return self.fn.b

    def h(self, x):
        return self.fn(x)

    def check_bounds(self):
        if self.is_linear:
            if not self.a > 0:
                raise BadLipschitzBounds(f"linear constraint needs a > 0, got a={self.a}")
        elif not (0 < self.m <= self.M):
            raise BadLipschitzBounds(f"need 0 < m <= M, got m={self.m}, M={self.M}")

    @cached_property
    def x0(self) -> float:
        """Smallest nonnegative root level ``inf{x >= 0 : h(x) >= 0}``."""
        if self.is_linear:
            return max(-self.b / self.a, 0.0)
        h0 = float(self.h(0.0))
        if h0 >= 0:
            return 0.0
        lo, hi = 0.0, -h0 / self.m
        for _ in range(64):  # guards rounding in the a priori bracket
            if float(self.h(hi)) >= 0:
                break
            hi = 2 * hi + 1e-300
        else:
            raise BracketFailure("h stays negative on [0, inf): is it increasing?")
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                return hi
            if float(self.h(mid)) >= 0:
                hi = mid
            else:
                lo = mid


DRIVER_MODES = ("constant", "y", "yz")


@dataclass(frozen=True)
class DriverSpec:
    mode: str
    fn: Any
    lam: float

    def __post_init__(self):
        if self.mode not in DRIVER_MODES:
            raise ConfigError(f"driver mode must be one of {DRIVER_MODES}, got {self.mode!r}")

    @classmethod
    def zero(cls) -> "DriverSpec":
        return cls("constant", LinearDriver(), 0.0)

    def __call__(self, t, x, y=0.0, z=0.0):
        if self.mode == "constant":
            y = 0.0
            z = 0.0
        elif self.mode == "y":
            z = 0.0
        return self.fn(t, x, y, z) + np.zeros_like(np.asarray(x, dtype=float))

    @property
    def is_zero(self) -> bool:
        return isinstance(self.fn, LinearDriver) and not any(self.fn.params().values())


@dataclass(frozen=True)
class ModelSpec:
    x0_init: float
    b_fwd: Any
    sigma_fwd: Any
    g: Any
    driver: DriverSpec
    constraint: ConstraintSpec
    T: float

    def terminal(self, x):
        return self.g(x)


@dataclass(frozen=True)
class PerStep:
    name = "per_step"


@dataclass(frozen=True)
class PicardOuter:
    max_iter: int = PICARD_SWEEP_CAP
    tol_fix: float = 1e-8
    name = "picard"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("picard max_iter must be >= 1")
        if not self.tol_fix > 0:
            raise ConfigError("picard tol_fix must be > 0")

    @property
    def sweeps(self) -> int:
        return min(self.max_iter, PICARD_SWEEP_CAP)


@dataclass(frozen=True)
class SolverConfig:
    N: int
    grid: TimeGrid
    seed: int = 20240611
    scheme: Any = field(default_factory=PerStep)
    basis_degree: int = 3
    bisect_tol: float = 1e-10
    condexp: str = "regression"
    inner_picard: int = 3

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if not self.bisect_tol > 0:
            raise ConfigError("bisect_tol must be > 0")
        if self.basis_degree < 0:
            raise ConfigError("basis_degree must be >= 0")
        if self.inner_picard < 1:
            raise ConfigError("inner_picard must be >= 1")
        if self.condexp not in ("regression", "tree"):
            raise ConfigError(f"condexp must be 'regression' or 'tree', got {self.condexp!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def with_(self, **changes) -> "SolverConfig":
        from dataclasses import replace

        return replace(self, **changes)


class CheckedModel(NamedTuple):
    model: ModelSpec
    config: SolverConfig


@dataclass(frozen=True)
class ChaosSettings:
    n: tuple = (250, 500, 1000, 2000, 4000, 8000)
    reps: int = 32
    oracle: str = "auto"
    proxy_n: int = 1_000_000
    proxy_seed: int = 999
    refine: int = 10

    def __post_init__(self):
        if len(self.n) < 4 or any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise ConfigError("chaos n list must be strictly increasing with >= 4 values")
        if self.reps < 2:
            raise ConfigError("chaos reps must be >= 2")
        if self.oracle not in ("auto", "closed_form", "limit", "proxy"):
            raise ConfigError(f"unknown oracle kind {self.oracle!r}")


# ---------------------------------------------------------------------------
# validation

def _probe_pairs(n=1000):
    x = np.linspace(-25.0, 25.0, n)
    delta = np.logspace(-3, 1, n)[::-1]
    return x, delta


def validate_model(spec: ModelSpec, cfg: SolverConfig) -> CheckedModel:
    """Check the standing assumptions; return the pair unchanged if they hold."""
    c = spec.constraint
    c.check_bounds()
    x, delta = _probe_pairs()
    diff = c.h(x + delta) - c.h(x)
    if np.any(diff < 0) or not np.all(np.isfinite(diff)):
        raise NonIncreasingConstraint("probe found h(x + d) < h(x)")
    slack = 1e-9 * delta + 1e-12
    if np.any(diff < c.m * delta - slack) or np.any(diff > c.M * delta + slack):
        raise BadLipschitzBounds(f"probed slopes leave the declared range [{c.m}, {c.M}]")

    d = spec.driver
    if d.mode == "yz" and not c.is_linear:
        raise ZDriverNeedsLinearH("a z-dependent driver requires a linear constraint")
    if d.lam < 0:
        raise BadLipschitzBounds("driver lambda must be >= 0")
    rng = np.random.default_rng(HXI_SEED)
    t = rng.uniform(0, spec.T, 1000)
    xs, y, y2, z, z2 = rng.normal(0, 5, (5, 1000))
    fd = np.abs(d(t, xs, y, z) - d(t, xs, y2, z2))
    if d.mode == "constant":
        bound = np.zeros_like(fd)
    elif d.mode == "y":
        bound = d.lam * np.abs(y - y2)
    else:
        bound = d.lam * (np.abs(y - y2) + np.abs(z - z2))
    if np.any(fd > bound * (1 + 1e-9) + 1e-12):
        raise BadLipschitzBounds("driver violates its declared Lipschitz constant on probes")

    if not math.isclose(cfg.grid.T, spec.T, rel_tol=1e-12, abs_tol=1e-12):
        raise ConfigError(f"grid horizon {cfg.grid.T} differs from model T={spec.T}")
    if cfg.condexp == "tree" and cfg.N * cfg.grid.M > MAX_TREE_SIZE:
        raise TreeTooLarge(f"N*M = {cfg.N * cfg.grid.M} exceeds {MAX_TREE_SIZE}")

    from .stochastics import euler_forward, generate_brownian

    inc = generate_brownian(cfg.grid, HXI_SAMPLES, HXI_SEED)
    xi = spec.g(euler_forward(spec, inc).X[:, -1])
    hx = c.h(xi)
    eps = 3.0 * hx.std(ddof=1) / math.sqrt(HXI_SAMPLES)
    if hx.mean() < -eps:
        raise TerminalConstraintViolated(
            f"estimated E[h(xi)] = {hx.mean():.3e} is below -{eps:.3e}")
    return CheckedModel(spec, cfg)


# ---------------------------------------------------------------------------
# documents

_MODEL_KEYS = {"T", "x0", "drift", "diffusion", "terminal", "driver", "constraint"}
_SOLVER_KEYS = {"N", "M", "nodes", "seed", "scheme", "basis_degree", "bisect_tol",
                "condexp", "inner_picard"}
_CHAOS_KEYS = {"n", "reps", "oracle", "proxy_n", "proxy_seed", "refine"}


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{where}: expected an integer, got {v!r}")
    return v


def _need(doc, key, where):
    if key not in doc:
        raise MissingField(f"{where}.{key}")
    return doc[key]


def _reject_unknown(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ParseError(f"{where}: unknown keys {extra}")


def parse_constraint(doc: dict) -> ConstraintSpec:
    if not isinstance(doc, dict):
        raise ParseError("model.constraint: expected an object")
    doc = dict(doc)
    m = doc.pop("m", None)
    M = doc.pop("M", None)
    fn = make_function(doc, where="model.constraint")
    if isinstance(fn, Affine):
        spec = ConstraintSpec.linear(fn.a, fn.b)
        for bound in (m, M):
            if bound is not None and _num(bound, "model.constraint") != fn.a:
                raise BadLipschitzBounds("affine constraint bounds must equal its slope")
        return spec
    if m is None:
        raise MissingField("model.constraint.m")
    if M is None:
        raise MissingField("model.constraint.M")
    return ConstraintSpec.general(fn, _num(m, "model.constraint.m"), _num(M, "model.constraint.M"))


def parse_driver(doc: dict) -> DriverSpec:
    _reject_unknown(doc, {"mode", "lambda", "fn"}, "model.driver")
    mode = _need(doc, "mode", "model.driver")
    lam = _num(doc.get("lambda", 0.0), "model.driver.lambda")
    fn = make_function(_need(doc, "fn", "model.driver"), DRIVERS, "model.driver.fn")
    if mode not in DRIVER_MODES:
        raise ParseError(f"model.driver.mode must be one of {DRIVER_MODES}")
    return DriverSpec(mode, fn, lam)


def parse_model(doc: dict) -> ModelSpec:
    _reject_unknown(doc, _MODEL_KEYS, "model")
    T = _num(_need(doc, "T", "model"), "model.T")
    if not T > 0:
        raise ParseError("model.T must be > 0")
    return ModelSpec(
        x0_init=_num(doc.get("x0", 0.0), "model.x0"),
        b_fwd=make_function(_need(doc, "drift", "model"), where="model.drift"),
        sigma_fwd=make_function(_need(doc, "diffusion", "model"), where="model.diffusion"),
        g=make_function(_need(doc, "terminal", "model"), where="model.terminal"),
        driver=parse_driver(_need(doc, "driver", "model")),
        constraint=parse_constraint(_need(doc, "constraint", "model")),
        T=T,
    )


def parse_solver(doc: dict, T: float) -> SolverConfig:
    _reject_unknown(doc, _SOLVER_KEYS, "solver")
    if "nodes" in doc and "M" in doc:
        raise ParseError("solver: give either M or nodes, not both")
    try:
        if "nodes" in doc:
            nodes = doc["nodes"]
            if not isinstance(nodes, list):
                raise ParseError("solver.nodes must be a list")
            grid = TimeGrid(tuple(_num(v, "solver.nodes") for v in nodes))
        else:
            grid = TimeGrid.make_uniform(T, _int(_need(doc, "M", "solver"), "solver.M"))
        scheme_doc = doc.get("scheme", {"name": "per_step"})
        _reject_unknown(scheme_doc, {"name", "max_iter", "tol_fix"}, "solver.scheme")
        kind = _need(scheme_doc, "name", "solver.scheme")
        if kind == "per_step":
            if len(scheme_doc) > 1:
                raise ParseError("solver.scheme: per_step takes no parameters")
            scheme = PerStep()
        elif kind == "picard":
            scheme = PicardOuter(
                _int(_need(scheme_doc, "max_iter", "solver.scheme"), "solver.scheme.max_iter"),
                _num(_need(scheme_doc, "tol_fix", "solver.scheme"), "solver.scheme.tol_fix"),
            )
        else:
            raise ParseError(f"solver.scheme.name: unknown scheme {kind!r}")
        return SolverConfig(
            N=_int(_need(doc, "N", "solver"), "solver.N"),
            grid=grid,
            seed=_int(doc.get("seed", SolverConfig.seed), "solver.seed"),
            scheme=scheme,
            basis_degree=_int(doc.get("basis_degree", 3), "solver.basis_degree"),
            bisect_tol=_num(doc.get("bisect_tol", 1e-10), "solver.bisect_tol"),
            condexp=doc.get("condexp", "regression"),
            inner_picard=_int(doc.get("inner_picard", 3), "solver.inner_picard"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(f"solver: {exc}") from exc


def parse_chaos(doc: dict) -> ChaosSettings:
    _reject_unknown(doc, _CHAOS_KEYS, "chaos")
    n = doc.get("n", list(ChaosSettings.n))
    if not isinstance(n, list):
        raise ParseError("chaos.n must be a list")
    oracle = doc.get("oracle", "auto")
    if not isinstance(oracle, str):
        raise ParseError("chaos.oracle must be a string")
    return ChaosSettings(
        n=tuple(_int(v, "chaos.n") for v in n),
        reps=_int(doc.get("reps", 32), "chaos.reps"),
        oracle=oracle,
        proxy_n=_int(doc.get("proxy_n", 1_000_000), "chaos.proxy_n"),
        proxy_seed=_int(doc.get("proxy_seed", 999), "chaos.proxy_seed"),
        refine=_int(doc.get("refine", 10), "chaos.refine"),
    )


def load_document(text: str):
    """Parse a config document into ``(ModelSpec, SolverConfig, ChaosSettings | None)``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    _reject_unknown(doc, {"model", "solver", "chaos"}, "document")
    model = parse_model(_need(doc, "model", "document"))
    cfg = parse_solver(_need(doc, "solver", "document"), model.T)
    chaos = parse_chaos(doc["chaos"]) if "chaos" in doc else None
    return model, cfg, chaos


def load_config(text: str) -> tuple[ModelSpec, SolverConfig]:
    model, cfg, _ = load_document(text)
    return model, cfg


def model_to_dict(model: ModelSpec) -> dict:
    c = model.constraint
    cdoc = function_to_dict(c.fn)
    if not c.is_linear:
        cdoc.update(m=c.m, M=c.M)
    return {
        "T": model.T,
        "x0": model.x0_init,
        "drift": function_to_dict(model.b_fwd),
        "diffusion": function_to_dict(model.sigma_fwd),
        "terminal": function_to_dict(model.g),
        "driver": {"mode": model.driver.mode, "lambda": model.driver.lam,
                   "fn": function_to_dict(model.driver.fn)},
        "constraint": cdoc,
    }


def solver_to_dict(cfg: SolverConfig) -> dict:
    out: dict = {"N": cfg.N}
    if cfg.grid.uniform:
        out["M"] = cfg.grid.M
    else:
        out["nodes"] = list(cfg.grid.nodes)
    out["seed"] = cfg.seed
    if isinstance(cfg.scheme, PicardOuter):
        out["scheme"] = {"name": "picard", "max_iter": cfg.scheme.max_iter,
                         "tol_fix": cfg.scheme.tol_fix}
    else:
        out["scheme"] = {"name": "per_step"}
    out.update(basis_degree=cfg.basis_degree, bisect_tol=cfg.bisect_tol,
               condexp=cfg.condexp, inner_picard=cfg.inner_picard)
    return out


def chaos_to_dict(chaos: ChaosSettings) -> dict:
    return {"n": list(chaos.n), "reps": chaos.reps, "oracle": chaos.oracle,
            "proxy_n": chaos.proxy_n, "proxy_seed": chaos.proxy_seed, "refine": chaos.refine}


def dump_config(model: ModelSpec, cfg: SolverConfig, chaos: ChaosSettings | None = None) -> str:
    doc = {"model": model_to_dict(model), "solver": solver_to_dict(cfg)}
    if chaos is not None:
        doc["chaos"] = chaos_to_dict(chaos)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def markovian_model(
    *,
    T: float = 1.0,
    x0: float = 0.0,
    drift=None,
    diffusion=None,
    terminal=None,
    driver: DriverSpec | None = None,
    constraint: ConstraintSpec | None = None,
) -> ModelSpec:
    """Convenience constructor; defaults to ``X = B``, ``xi = X_T``, ``f = 0``, ``h(x) = x``."""
    return ModelSpec(
        x0_init=float(x0),
        b_fwd=drift if drift is not None else Constant(0.0),
        sigma_fwd=diffusion if diffusion is not None else Constant(1.0),
        g=terminal if terminal is not None else Affine(1.0, 0.0),
        driver=driver if driver is not None else DriverSpec.zero(),
        constraint=constraint if constraint is not None else ConstraintSpec.linear(1.0, 0.0),
        T=float(T),
    )

