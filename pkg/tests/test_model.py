import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrbsde.errors import (
    BadLipschitzBounds,
    ConfigError,
    MissingField,
    NonIncreasingConstraint,
    ParseError,
    TerminalConstraintViolated,
    TreeTooLarge,
    UnknownFunctionName,
    ZDriverNeedsLinearH,
)
from mrbsde.model import (
    Affine,
    ChaosSettings,
    ConstraintSpec,
    DriverSpec,
    Exponential,
    LinearDriver,
    PicardOuter,
    Polynomial,
    SinAffine,
    SolverConfig,
    TimeGrid,
    dump_config,
    load_config,
    load_document,
    markovian_model,
    validate_model,
)


def grid(M=4, T=1.0):
    return TimeGrid.make_uniform(T, M)


def cfg(N=100, M=4, **kw):
    return SolverConfig(N=N, grid=grid(M), **kw)


# --- time grid -------------------------------------------------------------

def test_uniform_grid_steps():
    g = grid(5, 2.0)
    assert g.M == 5 and g.T == 2.0
    np.testing.assert_allclose(g.dt, 0.4)


@pytest.mark.parametrize("nodes", [(0.0,), (0.1, 1.0), (0.0, 0.5, 0.5), (0.0, 1.0, 0.9)])
def test_grid_rejects_bad_nodes(nodes):
    with pytest.raises(ConfigError):
        TimeGrid(nodes)


def test_refine_keeps_nodes():
    g = TimeGrid((0.0, 0.3, 1.0))
    f = g.refine(4)
    assert f.M == 8
    assert set(g.nodes) <= set(f.nodes)
    np.testing.assert_allclose(f.dt[:4], 0.075)


# --- constraint ------------------------------------------------------------

@given(a=st.floats(0.1, 10), b=st.floats(-10, 10))
def test_linear_x0_is_positive_part(a, b):
    assert ConstraintSpec.linear(a, b).x0 == max(-b / a, 0.0)


def test_general_x0_is_root():
    c = ConstraintSpec.general(SinAffine(1.0, -1.0, 0.5), 0.5, 1.5)
    x0 = c.x0
    assert c.h(x0) >= 0
    assert c.h(x0 - 1e-12) < 0 or x0 == 0


def test_general_x0_zero_when_h0_nonnegative():
    assert ConstraintSpec.general(SinAffine(1.0, 0.5, 0.5), 0.5, 1.5).x0 == 0.0


# --- validation ------------------------------------------------------------

def test_identity_constraint_accepted():
    m = markovian_model()
    checked = validate_model(m, cfg())
    assert checked.model is m


def test_declared_bounds_bracket_derivative():
    # h'(x) = 2 + cos x lies in [1, 3]
    c = ConstraintSpec.general(SinAffine(2.0, 0.0, 1.0), 1.0, 3.0)
    validate_model(markovian_model(constraint=c), cfg())


def test_too_narrow_bounds_rejected():
    c = ConstraintSpec.general(SinAffine(2.0, 0.0, 1.0), 1.5, 3.0)
    with pytest.raises(BadLipschitzBounds):
        validate_model(markovian_model(constraint=c), cfg())


@pytest.mark.parametrize("m,M", [(0.0, 1.0), (2.0, 1.0), (-1.0, 1.0)])
def test_inconsistent_bounds(m, M):
    c = ConstraintSpec.general(SinAffine(1.0, 0.0, 0.1), m, M)
    with pytest.raises(BadLipschitzBounds):
        validate_model(markovian_model(constraint=c), cfg())


@pytest.mark.parametrize("a", [0.0, -1.0])
def test_nonpositive_slope(a):
    with pytest.raises(BadLipschitzBounds):
        validate_model(markovian_model(constraint=ConstraintSpec.linear(a, 0.0)), cfg())


def test_decreasing_constraint():
    c = ConstraintSpec.general(SinAffine(0.2, 0.0, 1.0), 0.1, 1.5)
    with pytest.raises(NonIncreasingConstraint):
        validate_model(markovian_model(constraint=c), cfg())


def test_z_driver_needs_linear_h():
    m = markovian_model(
        constraint=ConstraintSpec.general(SinAffine(2.0, 0.0, 1.0), 1.0, 3.0),
        driver=DriverSpec("yz", LinearDriver(cz=0.5), 0.5),
    )
    with pytest.raises(ZDriverNeedsLinearH):
        validate_model(m, cfg())


def test_driver_lipschitz_probe():
    m = markovian_model(driver=DriverSpec("y", LinearDriver(cy=2.0), 1.0))
    with pytest.raises(BadLipschitzBounds):
        validate_model(m, cfg())


def test_terminal_constraint_gate():
    m = markovian_model(terminal=Affine(1.0, -0.5))
    with pytest.raises(TerminalConstraintViolated):
        validate_model(m, cfg())


def test_terminal_gate_is_statistical():
    # E[h(xi)] = 0 exactly: sampling noise must not reject it
    validate_model(markovian_model(), cfg())


def test_tree_guard():
    with pytest.raises(TreeTooLarge):
        validate_model(markovian_model(), cfg(N=3, M=7, condexp="tree"))


def test_grid_horizon_mismatch():
    with pytest.raises(ConfigError):
        validate_model(markovian_model(T=2.0), cfg())


def test_validation_is_deterministic():
    m = markovian_model(terminal=Affine(1.0, -0.02))
    verdicts = []
    for _ in range(2):
        try:
            validate_model(m, cfg())
            verdicts.append("ok")
        except TerminalConstraintViolated:
            verdicts.append("rejected")
    assert verdicts[0] == verdicts[1]


# --- solver config ---------------------------------------------------------

@pytest.mark.parametrize("kw", [{"N": 0}, {"bisect_tol": 0.0}, {"condexp": "pde"},
                                {"inner_picard": 0}, {"basis_degree": -1}])
def test_solver_config_invariants(kw):
    base = {"N": 10, "grid": grid()}
    base.update(kw)
    with pytest.raises(ConfigError):
        SolverConfig(**base)


@pytest.mark.parametrize("kw", [{"max_iter": 0}, {"tol_fix": 0.0}])
def test_picard_invariants(kw):
    with pytest.raises(ConfigError):
        PicardOuter(**kw)


def test_picard_cap():
    assert PicardOuter(max_iter=500).sweeps == 50


def test_chaos_settings_need_four_increasing():
    with pytest.raises(ConfigError):
        ChaosSettings(n=(100, 200, 400))
    with pytest.raises(ConfigError):
        ChaosSettings(n=(100, 200, 200, 400))


# --- documents -------------------------------------------------------------

def base_doc():
    return {
        "model": {
            "T": 1.0,
            "drift": {"name": "constant", "c": 0.0},
            "diffusion": {"name": "constant", "c": 1.0},
            "terminal": {"name": "affine", "a": 1.0, "b": 0.0},
            "driver": {"mode": "constant", "fn": {"name": "linear"}},
            "constraint": {"name": "affine", "a": 1.0, "b": 0.0},
        },
        "solver": {"N": 50, "M": 4},
    }


def test_affine_constraint_document_is_linear():
    model, _ = load_config(json.dumps(base_doc()))
    assert model.constraint.is_linear
    assert (model.constraint.a, model.constraint.b) == (1.0, 0.0)


def test_picard_zero_budget_rejected():
    doc = base_doc()
    doc["solver"]["scheme"] = {"name": "picard", "max_iter": 0, "tol_fix": 1e-8}
    with pytest.raises(ConfigError):
        load_config(json.dumps(doc))


def test_picard_missing_field():
    doc = base_doc()
    doc["solver"]["scheme"] = {"name": "picard", "tol_fix": 1e-8}
    with pytest.raises(MissingField):
        load_config(json.dumps(doc))


@pytest.mark.parametrize("mutate,exc", [
    (lambda d: d["model"].update(extra=1), ParseError),
    (lambda d: d["model"]["terminal"].update(name="cosine"), UnknownFunctionName),
    (lambda d: d["model"].pop("terminal"), MissingField),
    (lambda d: d["model"]["constraint"].update(name="sin_affine"), MissingField),
    (lambda d: d["solver"].update(nodes=[0.0, 1.0]), ParseError),
    (lambda d: d["model"]["terminal"].update(a="one"), ParseError),
])
def test_document_errors(mutate, exc):
    doc = base_doc()
    mutate(doc)
    with pytest.raises(exc):
        load_config(json.dumps(doc))


def test_not_json():
    with pytest.raises(ParseError):
        load_config("{model: 1")


def test_explicit_nodes():
    doc = base_doc()
    del doc["solver"]["M"]
    doc["solver"]["nodes"] = [0.0, 0.25, 1.0]
    _, c = load_config(json.dumps(doc))
    assert c.grid.nodes == (0.0, 0.25, 1.0)
    assert not c.grid.uniform


def test_shipped_fixtures_round_trip(fixtures):
    paths = sorted(fixtures.glob("*.json"))
    configs = [p for p in paths if not p.name.startswith("golden_")]
    assert configs
    for p in configs:
        text = p.read_text()
        model, c, chaos = load_document(text)
        assert dump_config(model, c, chaos) == text
        validate_model(model, c)


def test_every_family_round_trips():
    model = markovian_model(
        drift=Polynomial((0.1, -0.2)),
        diffusion=Exponential(0.5, 0.0, 0.5),
        terminal=SinAffine(1.0, 0.2, 0.3),
        driver=DriverSpec("y", LinearDriver(c=0.1, ct=0.2, cx=0.3, cy=0.4), 0.4),
        constraint=ConstraintSpec.general(SinAffine(1.0, 0.0, 0.5), 0.5, 1.5),
    )
    c = cfg(scheme=PicardOuter(20, 1e-9))
    text = dump_config(model, c, ChaosSettings())
    m2, c2, ch2 = load_document(text)
    assert (m2, c2, ch2) == (model, c, ChaosSettings())
