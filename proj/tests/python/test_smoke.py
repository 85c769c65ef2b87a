import math

import pytest

try:
    import exitperron as xp
except ImportError:
    import _exitperron as xp


def test_catalog_and_problem():
    names = xp.catalog_names()
    assert "bm-1d" in names and "disc-2d" in names
    p = xp.Problem.from_catalog("bm-1d")
    assert p.dim_state == 1
    assert p.discount == 1.0
    rep = p.validate(n_samples=128, seed=1)
    assert rep["all_finite"]
    assert not rep["certified"]


def test_solve_matches_oracle():
    p = xp.Problem.from_catalog("bm-1d")
    sol = xp.solve(p, res=129, tol=1e-10)
    assert sol.converged
    worst = max(
        abs(v - xp.oracle_value("bm-1d", x))
        for x, v in zip(sol.coords, sol.values)
    )
    assert worst <= 5e-3
    assert sol.interpolate([0.5]) == pytest.approx(0.39663909087319343, abs=5e-3)


def test_estimate_is_deterministic_and_close():
    p = xp.Problem.from_catalog("bm-1d")
    e1 = xp.estimate_value(p, [0.5], [0.0], dt=1e-3, paths=4000, tmax=30.0, seed=7)
    e2 = xp.estimate_value(p, [0.5], [0.0], dt=1e-3, paths=4000, tmax=30.0, seed=7)
    assert e1 == e2
    truth = xp.oracle_value("bm-1d", [0.5])
    assert abs(e1["mean"] - truth) <= 3 * e1["se"] + 0.5 * math.sqrt(1e-3)


def test_constant_certificates():
    p = xp.Problem.from_catalog("const-reward-1d")
    rep = xp.verify_constant_certificates(p, res=33, dt=1e-3, paths=1500, seed=3)
    assert rep["sub_pass"] and rep["super_pass"]
    assert rep["sub_value"] == 0.0
    assert rep["super_value"] == 0.5


def test_refine_study_monotone():
    p = xp.Problem.from_catalog("bm-1d")
    rep = xp.refine_study(p, [17, 33, 65], tol=1e-10)
    assert rep["monotone"]
    diffs = [e["diff_sup"] for e in rep["entries"]]
    assert diffs[0] > diffs[1]


def test_problem_from_text_and_errors():
    text = xp.Problem.from_catalog("bm-1d").canonical_text()
    p = xp.Problem.from_text(text)
    assert p.hash() == xp.Problem.from_catalog("bm-1d").hash()
    with pytest.raises(xp.ParseError):
        xp.Problem.from_text("[problem\n")
    with pytest.raises(ValueError):
        xp.Problem.from_catalog("bm-1d").hamiltonian([2.5], [0.0], [0.0])


def test_hamiltonian_surface():
    p = xp.Problem.from_catalog("drift-control-1d")
    value, argmax = p.hamiltonian([0.5], [1.0], [0.0])
    assert value == pytest.approx(1.0)
    assert argmax[0] == pytest.approx(1.0)
