import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conelines.angles import cusp_angles
from conelines.ansatz import (
    ANSATZ_COLUMNS,
    AnsatzParams,
    adapted_metric,
    cone_angle_probe,
    cone_metric,
    cusp_cone_angle_probe,
    cusp_pullback,
    cutoff,
    frame,
    hermitian_model,
    metric,
    potential_psi,
    rho_of,
    s_of,
    warped_offdiagonal,
    write_metric_csv,
    zone,
)
from conelines.errors import DomainError, ProbeError, SingularPointError
from conelines.flatcone import potential


def fd_hessian(p, z0, w0, h):
    """Complex Hessian of psi by central differences."""
    f = lambda a, b: potential_psi(p, z0 + a, w0 + b)
    gzz = 0.25 * (f(h, 0) + f(-h, 0) + f(1j * h, 0) + f(-1j * h, 0) - 4 * f(0, 0)) / h**2
    gww = 0.25 * (f(0, h) + f(0, -h) + f(0, 1j * h) + f(0, -1j * h) - 4 * f(0, 0)) / h**2

    def d2(a, b):
        return (f(a, b) - f(a, -b) - f(-a, b) + f(-a, -b)) / (4 * h * h)

    xx, yy, xy, yx = d2(h, h), d2(1j * h, 1j * h), d2(h, 1j * h), d2(1j * h, h)
    return gzz, 0.25 * ((xx + yy) + 1j * (xy - yx)), gww


def ball_cloud(p, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=1)[:, None]
    x *= p.ball_radius * rng.random(n)[:, None] ** 0.25
    z, w = x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3]
    a2, a3 = p.pair.a2, p.pair.a3
    dist = np.minimum.reduce([np.abs(z), np.abs(w - a2 * z) / np.hypot(1, abs(a2)), np.abs(w - a3 * z) / np.hypot(1, abs(a3))])
    keep = dist > 1e-3
    return z[keep], w[keep]


# ---------------------------------------------------------------- cutoff

def test_cutoff_examples():
    c = cutoff(np.array([3.0, 0.5, 1.5, 1.0, 2.0]))
    assert (c.chi1[0], c.chi2[0]) == (1.0, 0.0)
    assert (c.chi1[1], c.chi2[1]) == (0.0, 1.0)
    assert 0 < c.chi1[2] < 1
    assert c.d1[3] == 0 and c.d1[4] == 0


def test_cutoff_partition_and_derivatives():
    s = np.random.default_rng(0).uniform(0, 3, 1000)
    c = cutoff(s)
    assert np.all(c.chi1 + c.chi2 == 1.0)
    assert np.all((c.chi1 >= 0) & (c.chi1 <= 1))
    h = 1e-6
    inner = (s > 1 + 1e-3) & (s < 2 - 1e-3)
    fd1 = (cutoff(s + h).chi1 - cutoff(s - h).chi1) / (2 * h)
    fd2 = (cutoff(s + h).d1 - cutoff(s - h).d1) / (2 * h)
    assert np.allclose(fd1[inner], c.d1[inner], atol=1e-7)
    assert np.allclose(fd2[inner], c.d2[inner], atol=1e-6)


@given(st.floats(0, 10), st.floats(0, 10))
def test_cutoff_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert cutoff(lo).chi1 <= cutoff(hi).chi1


# ---------------------------------------------------------------- parameters

def test_params_validation():
    with pytest.raises(DomainError):
        AnsatzParams.build((0.3, 0.85, 0.9), alpha0=2.6)
    with pytest.raises(DomainError):
        AnsatzParams.build((0.3, 0.85, 0.9), alpha0=1.0)
    with pytest.raises(DomainError):
        AnsatzParams.build((0.5, 0.5, 0.6))
    with pytest.raises(DomainError):
        AnsatzParams.build((0.3, 0.9, 0.95, 0.97))
    p = AnsatzParams.default()
    assert p.gamma == pytest.approx(0.75) and p.alpha0 == 1.5
    assert p.beta1 / p.gamma < p.kappa < 1


def test_frame():
    p = AnsatzParams.default()
    f = frame(p, 0.01 + 0.02j, 0.03j)
    assert f.rho == pytest.approx(np.hypot(f.r, f.R))
    assert f.s == pytest.approx(f.R * f.r ** (-p.alpha0))
    assert f.xi == pytest.approx(0.03j / (0.01 + 0.02j))
    assert frame(p, 0, 0).rho == 0


def test_normalized_gauge():
    p = AnsatzParams.default().normalized()
    pr = p.pair
    assert abs(pr.a2) ** (2 - 2 * pr.beta2) * abs(pr.a3) ** (2 - 2 * pr.beta3) == pytest.approx(1.0)
    assert abs((1 - pr.beta2) * pr.a2 + (1 - pr.beta3) * pr.a3) < 1e-14


# ---------------------------------------------------------------- potential

def test_psi_boundary_values(params):
    w = np.array([0.1 + 0.05j, -0.2j])
    assert np.array_equal(potential_psi(params, np.zeros(2), w), np.abs(w) ** (2 * params.gamma))
    assert potential_psi(params, 0, 0) == 0.0


def test_psi_on_l2(params):
    z = np.array([1e-3 * np.exp(0.4j), 1e-4])
    w = params.pair.a2 * z
    assert np.all(s_of(params, z, w) < 1)
    phi_a2 = potential(params.pair, params.pair.a2)
    exp = np.abs(z) ** (2 * params.beta1) + phi_a2 * np.abs(z) ** (2 * params.gamma)
    assert np.allclose(potential_psi(params, z, w), exp, rtol=1e-12)


def _chart_offset(beta, target=1e-8):
    # Euclidean offset whose cone-chart length |offset|^beta equals target
    return target ** (1.0 / beta)


def test_psi_continuity(params):
    rng = np.random.default_rng(11)
    pr = params.pair
    for _ in range(20):
        th, ph = rng.uniform(0, 2 * np.pi, 2)
        z0 = 0.05 * np.exp(1j * th)
        # L1
        w0 = 0.1 * np.exp(1j * ph)
        d = _chart_offset(params.beta1) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        assert abs(potential_psi(params, d, w0) - potential_psi(params, 0, w0)) < 1e-6
        # L2, L3
        for a, b in ((pr.a2, pr.beta2), (pr.a3, pr.beta3)):
            d = _chart_offset(b) * np.exp(1j * rng.uniform(0, 2 * np.pi))
            assert abs(potential_psi(params, z0, a * z0 + d) - potential_psi(params, z0, a * z0)) < 1e-6
        # origin
        u = rng.normal(size=4)
        u /= np.linalg.norm(u)
        z, w = complex(u[0], u[1]), complex(u[2], u[3])
        z = _chart_offset(params.beta1) * z / abs(z)
        w = _chart_offset(params.gamma) * w / abs(w)
        assert abs(potential_psi(params, z, w)) < 1e-6


# ---------------------------------------------------------------- metric

def test_metric_cone_zone_is_product(params):
    z, w = np.array([1e-4 + 2e-4j]), np.array([0.2 + 0.1j])
    assert zone(params, z, w)[0] == "cone"
    m, c = metric(params, z, w), cone_metric(params, z, w)
    assert m.g12[0] == 0
    assert m.g11[0] == pytest.approx(c.g11[0], rel=1e-15)
    assert m.g22[0] == pytest.approx(c.g22[0], rel=1e-15)


def test_metric_on_line_raises(params):
    with pytest.raises(SingularPointError):
        metric(params, 0.1, params.pair.a3 * 0.1)
    with pytest.raises(SingularPointError):
        metric(params, 0.0, 0.1)


@pytest.mark.parametrize(
    "z0, w0, h",
    [(0.1 + 0.05j, 0.1 * (1.2 + 0.3j), 1e-5), (0.2, 0.2 * 0.3j, 1e-5), (0.3 + 0.1j, 0.25j, 1e-5),
     (0.02 + 0.01j, 0.02 * 6.0j, 1e-6)],
)
def test_metric_matches_fd_hessian(params, z0, w0, h):
    m = metric(params, z0, w0)
    gzz, gzw, gww = fd_hessian(params, z0, w0, h)
    scale = np.sqrt(m.g11[0] * m.g22[0])
    assert abs(m.g11[0] / gzz - 1) < 1e-4
    assert abs(m.g22[0] / gww - 1) < 1e-4
    assert abs(m.g12[0] - gzw) < 1e-4 * scale


def test_metric_matches_fd_in_transition(params):
    rng = np.random.default_rng(1)
    for _ in range(4):
        z0 = complex(*rng.uniform(-0.3, 0.3, 2)) * 10 ** rng.uniform(-3, -1)
        s = rng.uniform(1.05, 1.95)
        aw = (s * abs(z0) ** (params.alpha0 * params.beta1)) ** (1 / params.gamma)
        w0 = aw * np.exp(1j * rng.uniform(0, 2 * np.pi))
        assert zone(params, z0, w0)[0] == "transition"
        m = metric(params, z0, w0)
        gzz, gzw, gww = fd_hessian(params, z0, w0, 1e-6 * abs(w0) / 0.1)
        assert abs(m.g11[0] / gzz - 1) < 1e-3
        assert abs(m.g22[0] / gww - 1) < 1e-3
        assert abs(m.g12[0] - gzw) < 1e-3 * np.sqrt(m.g11[0] * m.g22[0])


def test_positive_on_ball_cloud(params):
    z, w = ball_cloud(params, 10_500, 0)
    z, w = z[:10_000], w[:10_000]
    assert z.size == 10_000
    m = metric(params, z, w)
    assert np.all(m.is_posdef())
    assert np.all(m.det > 0)


def test_collision_region_equivalent_to_hermitian_model(params):
    rng = np.random.default_rng(1)
    n = 1000
    z = 0.3 ** (1 / params.beta1) * rng.random(n) ** 2 * np.exp(2j * np.pi * rng.random(n))
    xi = 8 * rng.random(n) * np.exp(2j * np.pi * rng.random(n))
    w = xi * z
    keep = (s_of(params, z, w) < 1) & (np.abs(xi - params.pair.a2) > 1e-3) & (np.abs(xi - params.pair.a3) > 1e-3)
    ev = metric(params, z[keep], w[keep]).relative_eigenvalues(hermitian_model(params, z[keep], w[keep]))
    C = max(ev.max(), 1 / ev.min())
    assert C < 2.0  # recorded bound 1.35 for this sample


def test_hermitian_model_examples(params):
    with pytest.raises(SingularPointError):
        hermitian_model(params, 0, 0.1)
    z = 0.05 + 0.02j
    m = hermitian_model(params, z, 0)
    pr = params.pair
    g = params.gamma
    exp22 = g * g * abs(pr.a2) ** (2 * pr.beta2 - 2) * abs(pr.a3) ** (2 * pr.beta3 - 2) * abs(z) ** (2 * g - 2)
    assert m.g22[0] == pytest.approx(exp22, rel=1e-13)
    assert m.g11[0] == pytest.approx(params.beta1**2 * abs(z) ** (2 * params.beta1 - 2), rel=1e-13)


def test_hermitian_model_approximation_rate(params):
    b1, g, a0 = params.beta1, params.gamma, params.alpha0
    z0 = 0.1 ** (1 / b1) * np.exp(0.4j)
    w0 = (0.3 * 0.1**a0) ** (1 / g) * np.exp(1.9j)
    rhos, d = [], []
    for k in range(10):
        lam = 0.5**k
        z, w = z0 * lam ** (1 / b1), w0 * lam ** (1 / g)
        d.append(metric(params, z, w).distance_to(hermitian_model(params, z, w))[0])
        rhos.append(rho_of(params, z, w))
    assert np.polyfit(np.log(rhos), np.log(d), 1)[0] >= a0 - 1 - 0.05


@pytest.mark.parametrize("s", [0.5, 1.5])
def test_gluing_region_decay(params, s):
    b1, g, a0 = params.beta1, params.gamma, params.alpha0
    rhos, d = [], []
    for r in np.geomspace(1e-1, 1e-4, 10):
        z = np.array([r ** (1 / b1) * np.exp(0.4j)])
        w = np.array([(s * r**a0) ** (1 / g) * np.exp(1.9j)])
        d.append(metric(params, z, w).distance_to(cone_metric(params, z, w))[0])
        rhos.append(rho_of(params, z, w)[0])
    assert np.polyfit(np.log(rhos), np.log(d), 1)[0] > 0.05


def test_offdiagonal_bound(params):
    rng = np.random.default_rng(2)
    n = 1000
    z = 0.3 ** (1 / params.beta1) * rng.random(n) * np.exp(2j * np.pi * rng.random(n))
    xi = 10 * rng.random(n) ** 2 * np.exp(2j * np.pi * rng.random(n))
    ok = (np.abs(xi - params.pair.a2) > 1e-4) & (np.abs(xi - params.pair.a3) > 1e-4)
    z, xi = z[ok], xi[ok]
    B = warped_offdiagonal(params, z, xi)
    C = B / (np.abs(z) ** (params.gamma - params.beta1) * (np.abs(xi) ** params.gamma + 1))
    assert np.all(np.isfinite(C)) and C.max() < 5.0  # recorded bound about 2


@pytest.mark.parametrize("a", [0.5 + 0.2j, 2.0, -0.7j])
def test_restriction_to_line_through_origin(params, a):
    b1, g = params.beta1, params.gamma
    phia = potential(params.pair, a)
    for r in (1e-3, 1e-4):
        z = np.array([r * np.exp(0.3j)])
        m = metric(params, z, a * z)
        coef = m.norm(np.array([[1.0, a]]))[0]
        exact = b1**2 * r ** (2 * b1 - 2) + g**2 * phia * r ** (2 * g - 2)
        assert abs(coef / exact - 1) < 1e-3


def test_metric_csv(tmp_path, params):
    z = np.array([1e-4 + 2e-4j, 0.1])
    w = np.array([0.2 + 0.1j, 0.05j])
    path = tmp_path / "m.csv"
    write_metric_csv(path, params, z, w)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == ANSATZ_COLUMNS
    assert rows[1][4] == "cone" and rows[1][9] == "1"


# ---------------------------------------------------------------- cone angles

def test_probe_l1_exact(params):
    for s in (1e-2, 1e-3):
        assert cone_angle_probe(params, 1, 0.2, s) == pytest.approx(2 * np.pi * params.beta1, rel=1e-12)


def test_probe_l2(params):
    v = cone_angle_probe(params, 2, 0.3, 1e-3)
    assert abs(v / (2 * np.pi * params.pair.beta2) - 1) < 0.01


@pytest.mark.parametrize("line, beta", [(3, 0.9), ("axis", 1.0)])
def test_probe_l3_and_axis(params, line, beta):
    v = cone_angle_probe(params, line, 0.3, 1e-2)
    assert abs(v / (2 * np.pi * beta) - 1) < 0.01


def test_probe_errors(params):
    with pytest.raises(ProbeError):
        cone_angle_probe(params, 2, 0.3, 10.0)
    with pytest.raises(ProbeError):
        cone_angle_probe(params, 2, 0.0, 1e-3)
    with pytest.raises(ProbeError):
        cone_angle_probe(params, 4, 0.3, 1e-3)


# ---------------------------------------------------------------- cuspidal covering

@pytest.fixture(scope="module")
def cusp_params():
    return AnsatzParams.from_cusp(cusp_angles(2, 3, 0.9), alpha0=1.02)


def test_cusp_identity_covering(cusp_params):
    u, v = np.array([0.01 + 0.02j]), np.array([0.03 - 0.01j])
    a = cusp_pullback(cusp_params, u, v, 1, 1)
    b = adapted_metric(cusp_params, u, v)
    assert np.allclose(a.matrix(), b.matrix(), rtol=1e-14)


def test_cusp_jacobian_factor(cusp_params):
    u, v = np.array([0.01 + 0.02j]), np.array([0.03 - 0.01j])
    a = cusp_pullback(cusp_params, u, v, 2, 3)
    b = adapted_metric(cusp_params, u**2, v**3)
    assert a.g11[0] == pytest.approx(abs(2 * u[0]) ** 2 * b.g11[0], rel=1e-13)
    assert a.g22[0] == pytest.approx(abs(3 * v[0] ** 2) ** 2 * b.g22[0], rel=1e-13)


def test_cusp_curve_is_singular(cusp_params):
    c = cusp_params.pair.a3 - cusp_params.pair.a2
    v = 0.02
    u = np.sqrt(c * v**3)
    with pytest.raises(SingularPointError):
        cusp_pullback(cusp_params, u, v)


def test_cusp_cone_angle(cusp_params):
    v0 = 0.02
    z0 = v0**3
    assert zone(cusp_params, z0, cusp_params.pair.a3 * z0)[0] == "collision"
    val = cusp_cone_angle_probe(cusp_params, v0, 1e-4)
    assert abs(val / (2 * np.pi * 0.9) - 1) < 0.01
