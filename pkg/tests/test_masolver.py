import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from conelines import masolver as M
from conelines.ansatz import AnsatzParams
from conelines.errors import ConfigError, ConvergenceError, FitError, SetupError
from conelines.ricci import ricci_potential


@pytest.fixture(scope="module")
def p():
    return AnsatzParams.default()


@pytest.fixture(scope="module")
def op64(p):
    return M.DiscreteMA(M.MAProblem.ansatz(p, mesh=1 / 64))


@pytest.fixture(scope="module")
def sol64(op64):
    return M.solve_newton(op64)


def _bump(x, radius, amp):
    r = np.linalg.norm(x, axis=1) / radius
    out = np.zeros(len(x))
    inside = r < 1
    out[inside] = amp * np.exp(1 - 1 / (1 - r[inside] ** 2))
    return out


# --- operator


def test_ma_of_zero_vanishes(op64):
    u = np.zeros(op64.grid.idx.shape[0])
    assert np.max(np.abs(op64.residual(u, np.zeros(op64.rows.size)))) < 1e-14


def test_stencil_rows_annihilate_constants(op64):
    L = op64.laplacian(full=True)
    assert np.max(np.abs(L @ np.ones(L.shape[1]))) < 1e-8 * abs(L).max()


def test_linearisation_matches_directional_derivative(op64):
    rng = np.random.default_rng(3)
    v = op64.lift(rng.normal(size=op64.n_unknown)) * op64.prob.mesh**2
    L = op64.laplacian(full=True)[: op64.rows.size]
    lv = L @ v
    errs = []
    for t in (1e-2, 5e-3, 2.5e-3):
        fd = op64.apply(t * v) / t
        errs.append(np.max(np.abs(fd - lv)))
    # first-order remainder halves with t
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)
    assert errs[2] / errs[1] == pytest.approx(0.5, abs=0.05)


def test_linearisation_is_flat_laplacian_for_identity_metric():
    prob = M.MAProblem.flat(lambda xc: np.zeros(len(xc)), radius=0.125, mesh=1 / 32)
    op = M.DiscreteMA(prob)
    x = op.grid.points
    u = np.sum(x**2, axis=1)  # tr(i ddbar |x|^2) = 2
    lu = op.laplacian(full=True) @ u
    assert np.allclose(lu, 2.0, atol=1e-10)


def test_discrete_maximum_principle(op64):
    rng = np.random.default_rng(5)
    J = op64.laplacian(full=True)
    bnd = np.flatnonzero(op64.grid.dirichlet)
    for _ in range(3):
        b = rng.uniform(-1, 1, size=bnd.size)
        ub = np.zeros(op64.grid.idx.shape[0])
        ub[bnd] = b
        v = M.linear_solve(op64.jacobian(np.zeros_like(ub)), -(J @ ub))
        assert v.min() >= b.min() - 1e-10
        assert v.max() <= b.max() + 1e-10


def test_non_positive_metric_is_rejected():
    def metric_fn(xc):
        G = np.zeros((len(xc), 2, 2), complex)
        G[:, 0, 0], G[:, 1, 1] = 1.0, -1.0
        return G

    prob = M.MAProblem(metric_fn, lambda xc: np.zeros(len(xc)), lambda xc: np.ones(len(xc)), mesh=1 / 16)
    with pytest.raises(SetupError):
        M.DiscreteMA(prob)


def test_mask_must_cover_two_cells(p):
    with pytest.raises(ConfigError):
        M.MAProblem.ansatz(p, mesh=1 / 64, mask_cells=1.5).validate()


def test_mask_tube_contains_line(op64):
    prob = op64.prob
    near = prob.lines[1].distance(op64.grid.complex_points) < 0.5 * prob.mesh
    assert near.any() and op64.grid.masked[near].all()


# --- Newton


def test_zero_rhs_gives_zero_solution(op64):
    sol = M.solve_newton(op64, rhs=np.zeros(op64.rows.size))
    assert len(sol.steps) <= 1
    assert np.all(sol.u == 0)


def test_manufactured_solution_recovered(op64):
    R = op64.prob.radius
    u0 = _bump(op64.grid.points, 0.9 * R, 1e-2 * R**2)
    u0[op64.grid.dirichlet] = 0.0
    rhs = np.concatenate([op64.apply(u0), op64.averaging @ u0])
    sol = M.solve_newton(op64, rhs=rhs)
    assert np.max(np.abs(sol.u - u0)) <= 1e-6 * np.max(np.abs(u0))


def _radial_reference(hfun, t, R2):
    """u(t) for det(I + ddbar u) = e^h, u radial in t = |x|^2, u(R2) = 0."""

    def g(s):
        if s == 0:
            return np.exp(0.5 * hfun(0.0))
        return np.sqrt(quad(lambda q: 2 * q * np.exp(hfun(q)), 0, s, epsabs=1e-15, epsrel=1e-13)[0]) / s

    return np.array([-quad(lambda s: g(s) - 1, ti, R2, epsabs=1e-15, epsrel=1e-12)[0] for ti in t])


def test_flat_radial_problem_matches_ode():
    amp, width = 0.05, 0.08**2

    def hfun(t):
        return amp * np.exp(-np.asarray(t) / width)

    prob = M.MAProblem.flat(lambda xc: hfun(np.sum(np.abs(xc) ** 2, axis=1)), radius=0.125, mesh=1 / 64)
    op = M.DiscreteMA(prob)
    t = np.round(np.sum(op.grid.points**2, axis=1), 14)
    ts, inv = np.unique(t, return_inverse=True)
    ref = _radial_reference(hfun, ts, prob.radius**2)[inv]
    u0 = np.where(op.grid.dirichlet, ref, 0.0)
    sol = M.solve_newton(op, u0=u0)
    assert np.max(np.abs(sol.u - ref)) < 1e-5


def test_residual_log_and_quadratic_tail(sol64):
    r = sol64.residuals
    assert all(b < a for a, b in zip(r, r[1:]))
    tail = [(a, b) for a, b in zip(r, r[1:]) if a < 1e-3]
    assert tail
    assert max(b / a**2 for a, b in tail) < 10.0
    assert sol64.max_residuals[-1] < sol64.problem.tol


def test_solution_keeps_metric_positive(sol64):
    a11, a12, a22 = sol64.op.forms(sol64.u)
    assert np.all(a11 > 0) and np.all(a11 * a22 - np.abs(a12) ** 2 > 0)


def test_linear_response(op64):
    h = op64.h[op64.rows]
    ratios = [M.solve_newton(op64, rhs=c * h).sup_norm / c for c in (1.0, 0.5, 0.25)]
    assert max(ratios) / min(ratios) - 1 < 0.2


def test_iteration_limit_raises(op64):
    import dataclasses

    prob = dataclasses.replace(op64.prob, max_newton=1)
    op = M.DiscreteMA(prob, op64.grid)
    with pytest.raises(ConvergenceError):
        M.solve_newton(op)


# --- Calabi-Yau check


def test_cy_error_at_u_zero_is_ansatz_deviation(p, op64):
    zero = M.MASolution(op64.prob, op64, np.zeros(op64.grid.idx.shape[0]), [0.0], [0.0], [], True)
    rep = M.verify_cy(p, zero)
    assert rep.nodes.size > 100
    assert np.allclose(rep.relative_error, np.abs(np.expm1(-op64.h[rep.nodes])), rtol=1e-10, atol=1e-14)


def test_cy_error_small_on_converged_solution(p, sol64):
    rep = M.verify_cy(p, sol64)
    assert rep.median < 1e-3
    unsolved = np.median(np.abs(np.expm1(-sol64.op.h[rep.nodes])))
    assert rep.median < 0.05 * unsolved


def test_density_matches_volume_form_density(p, op64):
    # off the lines, det of the chart metric over the chart density is e^{-h}
    r = op64.rows
    det = op64.g11[r] * op64.g22[r] - np.abs(op64.g12[r]) ** 2
    assert np.allclose(det / op64.density[r], np.exp(-op64.h[r]), rtol=1e-9)


# --- Campanato seminorm


def test_holder_of_constant_is_zero():
    assert M.holder_seminorm(lambda x: np.full(len(x), 3.0), 0.5, np.zeros((1, 4))) == 0.0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 0.9))
def test_holder_homogeneity(alpha):
    f = lambda x: np.linalg.norm(x, axis=1) ** alpha
    radii = [2.0**-k for k in range(1, 7)]
    same = M.campanato_profile(f, alpha, np.zeros((1, 4)), radii)[0]
    assert np.allclose(same, same[0], rtol=1e-9)
    over = M.campanato_profile(f, alpha + 1.0, np.zeros((1, 4)), radii)[0]
    assert np.all(over[1:] / over[:-1] >= 2.0 * (1 - 1e-9))


def test_holder_needs_samples():
    pts = np.random.default_rng(0).uniform(-1, 1, size=(50, 4))
    with pytest.raises(FitError):
        M.holder_seminorm((pts, pts[:, 0]), 0.5, np.zeros((1, 4)), [1e-2])


def test_ricci_potential_has_finite_small_exponent_seminorm(p):
    def h(x):
        return ricci_potential(p, x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3])

    radii = [2.0**-k for k in range(2, 12)]
    prof = M.campanato_profile(h, 0.05, np.zeros((1, 4)), radii)[0]
    assert np.all(np.isfinite(prof))
    # no blow-up as the balls shrink onto the singular point
    assert prof[-1] <= prof[0]


def test_solution_reports_holder_estimate(sol64):
    assert np.isfinite(sol64.holder) and sol64.holder > 0


# --- I/O


def test_problem_from_json_and_outputs(tmp_path, p):
    doc = {"mesh": 1 / 32, "mask_cells": 2, "radius": 0.125, "z0": [0.01, 0.0], "offset": 0.06, "scale": 0.16}
    path = tmp_path / "ma.json"
    path.write_text(json.dumps(doc))
    prob = M.MAProblem.from_json(str(path), p)
    assert prob.mesh == 1 / 32 and prob.mask_cells == 2
    sol = M.solve_newton(prob)
    rep = M.verify_cy(p, sol)
    M.write_solution_csv(tmp_path / "u.csv", sol, rep)
    M.write_log_csv(tmp_path / "log.csv", sol)
    head = (tmp_path / "u.csv").read_text().splitlines()
    assert tuple(head[0].split(",")) == M.SOLUTION_COLUMNS
    assert len(head) == sol.op.grid.idx.shape[0] + 1
    log = (tmp_path / "log.csv").read_text().splitlines()
    assert tuple(log[0].split(",")) == M.LOG_COLUMNS and len(log) == len(sol.residuals) + 1
    s = json.loads(json.dumps(M.summary(sol, rep)))
    assert s["converged"] and s["problem"]["mesh"] == 1 / 32


def test_unknown_json_key_rejected(p):
    with pytest.raises(ConfigError):
        M.MAProblem.from_json({"mesh": 0.1, "bogus": 1}, p)
