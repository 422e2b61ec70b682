import csv
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from mrbsde.errors import AssumptionViolated, TreeTooLarge, UnsupportedModel
from mrbsde.harness import golden_check, tree_fixture_models
from mrbsde.model import (
    Affine,
    Constant,
    ConstraintSpec,
    DriverSpec,
    LinearDriver,
    SinAffine,
    SolverConfig,
    TimeGrid,
    markovian_model,
)
from mrbsde.oracle import closed_form_linear, limit_solver, tree_solve_exact, write_limit_csv
from mrbsde.solver import solve

GRID = TimeGrid.make_uniform(1.0, 20)


# --- exhaustive tree -------------------------------------------------------

def test_one_particle_one_step_by_hand():
    # xi = +-1; offsets (-xi)^+ give theta = {1, 0}; Y_0 = 1/2 needs no push
    b = tree_solve_exact(markovian_model(), TimeGrid.make_uniform(1.0, 1), 1)
    np.testing.assert_array_equal(b.dK_T, [0.0, 1.0])
    np.testing.assert_array_equal(b.Y[:, 0, 1], [1.0, 0.0])
    np.testing.assert_array_equal(b.Y[:, 0, 0], [0.5, 0.5])
    np.testing.assert_array_equal(b.K, 0.0)


@pytest.mark.parametrize("name", ["golden_tree_n1_m1.json", "golden_tree_n2_m2_smooth.json",
                                  "golden_tree_n3_m2_zdriver.json"])
def test_golden_files(fixtures, name):
    dev = golden_check(fixtures / name)
    assert dev["enumeration"] <= 1e-12
    assert dev["solver"] <= 1e-10


def test_deterministic_terminal():
    model = markovian_model(diffusion=Constant(0.0), terminal=Affine(1.0, 1.0),
                            driver=DriverSpec("constant", LinearDriver(c=-0.4), 0.0))
    grid = TimeGrid.make_uniform(1.0, 4)
    b = tree_solve_exact(model, grid, 2)
    expected = 1.0 - 0.4 * (1.0 - grid.t)
    np.testing.assert_allclose(b.Y, np.broadcast_to(expected, b.Y.shape), atol=1e-14)
    np.testing.assert_array_equal(b.K_T, 0.0)


@pytest.mark.parametrize("name", sorted(tree_fixture_models()))
def test_enumeration_satisfies_solver_invariants(name):
    model = tree_fixture_models()[name]
    b = tree_solve_exact(model, TimeGrid.make_uniform(1.0, 3), 2)
    c = model.constraint
    assert np.all(b.dK >= 0) and np.all(b.dK_T >= 0)
    assert b.constraint_min >= -c.m * 1e-10
    assert b.skorokhod_max <= 1e-10
    np.testing.assert_allclose(b.weights.sum(), 1.0)


def test_tree_guard():
    with pytest.raises(TreeTooLarge):
        tree_solve_exact(markovian_model(), TimeGrid.make_uniform(1.0, 7), 3)


# --- closed form -----------------------------------------------------------

def test_closed_form_shifted_terminal():
    model = markovian_model(terminal=Affine(1.0, 1.0), constraint=ConstraintSpec.linear(1.0, -1.0))
    sol = closed_form_linear(model, GRID)
    np.testing.assert_array_equal(sol.K, 0.0)
    np.testing.assert_array_equal(sol.y_mean, 1.0)
    np.testing.assert_allclose(sol.y_var, GRID.t)
    np.testing.assert_allclose(sol.value_fn(5, np.array([-1.0, 2.0])), [0.0, 3.0])


def test_closed_form_binding_constraint():
    sol = closed_form_linear(markovian_model(), GRID)
    np.testing.assert_array_equal(sol.K, 0.0)
    np.testing.assert_array_equal(sol.y_mean, 0.0)
    np.testing.assert_allclose(sol.y_var, GRID.t)


def test_closed_form_rejects_violated_terminal():
    with pytest.raises(AssumptionViolated):
        closed_form_linear(markovian_model(terminal=Affine(1.0, -1.0)), GRID)


@pytest.mark.parametrize("kw", [
    {"driver": DriverSpec("constant", LinearDriver(c=1.0), 0.0)},
    {"constraint": ConstraintSpec.general(SinAffine(1.0, 0.0, 0.5), 0.5, 1.5)},
    {"terminal": SinAffine(1.0, 0.0, 0.1)},
    {"drift": Affine(-1.0, 0.0)},
])
def test_closed_form_domain(kw):
    with pytest.raises(UnsupportedModel):
        closed_form_linear(markovian_model(**kw), GRID)


# --- limit solver ----------------------------------------------------------

def test_limit_matches_closed_form():
    model = markovian_model(terminal=Affine(1.0, 1.0), constraint=ConstraintSpec.linear(1.0, -1.0))
    lim = limit_solver(model, GRID)
    ref = closed_form_linear(model, lim.grid)
    assert np.max(np.abs(lim.K - ref.K)) <= 1e-8
    assert np.max(np.abs(lim.y_mean - ref.y_mean)) <= 1e-8
    assert np.max(np.abs(lim.y_var - ref.y_var)) <= 1e-8
    # compare where the law of X_t lives: within four standard deviations
    for n in (0, 50, 200):
        xs = np.linspace(-4, 4, 17) * math.sqrt(lim.grid.t[n])
        assert np.max(np.abs(lim.value_fn(n, xs) - ref.value_fn(n, xs))) <= 1e-8


RHO, C, B = 1.0, 1.0, -0.6
DECAY = markovian_model(terminal=Affine(1.0, C), constraint=ConstraintSpec.linear(1.0, B),
                        driver=DriverSpec("y", LinearDriver(cy=-RHO), RHO))


@pytest.fixture(scope="module")
def decay_limit():
    return limit_solver(DECAY, GRID)


def test_decay_driver_matches_mean_dynamics(decay_limit):
    # the mean solves m' = rho m - K' and is held at -B once it would cross it
    t_star = 1.0 + math.log(-B / C) / RHO
    exact = -RHO * B * np.minimum(decay_limit.grid.t, t_star)
    dt = decay_limit.grid.dt[0]
    assert np.max(np.abs(decay_limit.K - exact)) <= RHO * abs(B) * dt
    assert decay_limit.provenance["sweeps"] > 1


@pytest.mark.slow
def test_decay_driver_matches_large_particle_run(decay_limit):
    N = 100_000
    b = solve(DECAY, SolverConfig(N=N, grid=decay_limit.grid, seed=1), validate=False)
    se = 1.0 / math.sqrt(N)  # standard deviation of xi is one
    assert np.max(np.abs(b.K[0] - decay_limit.K)) <= 3 * se


def test_limit_invariants(decay_limit):
    assert decay_limit.K[0] == 0.0
    assert np.all(np.diff(decay_limit.K) >= 0)
    assert decay_limit.provenance["constraint_mean_min"] >= -1e-10
    assert decay_limit.K[-1] <= decay_limit.provenance["k_bound"]


def test_smooth_constraint_gaussian_identity():
    # U_s = B_s ~ N(0, s), so E h(x + U_s) = x - 0.3 + 0.5 exp(-s/2) sin x
    model = markovian_model(constraint=ConstraintSpec.general(SinAffine(1.0, -0.3, 0.5), 0.5, 1.5))
    lim = limit_solver(model, TimeGrid.make_uniform(1.0, 10))
    for n in (50, 100):
        s = lim.grid.t[n]
        ref = brentq(lambda x: x - 0.3 + 0.5 * math.exp(-s / 2) * math.sin(x), 0.0, 2.0, xtol=1e-15)
        assert lim.psi[n] == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("kw", [
    {"driver": DriverSpec("yz", LinearDriver(cz=0.5), 0.5)},
    {"diffusion": Constant(0.0)},
])
def test_limit_domain(kw):
    with pytest.raises(UnsupportedModel):
        limit_solver(markovian_model(terminal=Affine(1.0, 1.0), **kw), GRID)


def test_on_grid_restriction(decay_limit):
    ref = decay_limit.on_grid(GRID)
    np.testing.assert_array_equal(ref.K, decay_limit.K[::10])
    np.testing.assert_array_equal(ref.value(3, np.array([0.2])), decay_limit.value_fn(30, np.array([0.2])))
    with pytest.raises(ValueError):
        decay_limit.node_index(TimeGrid((0.0, 0.0123, 1.0)))


def test_limit_csv(tmp_path, decay_limit):
    path = tmp_path / "limit.csv"
    write_limit_csv(decay_limit, path)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["t", "K", "psi_star", "Y_mean", "Y_var"]
    assert len(rows) == decay_limit.grid.M + 1
    assert float(rows[-1]["K"]) == decay_limit.K[-1]
