import csv
import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conelines.ansatz import AnsatzParams, metric, rho_of, s_of, transform
from conelines.errors import DomainError, FitError, SingularPointError
from conelines.ricci import (
    RICCI_COLUMNS,
    Orbit,
    VolumeForm,
    decay_scan,
    default_delta,
    default_orbits,
    delta_interval,
    fit_decay,
    fits_to_json,
    global_bound,
    h_from_form,
    log_uniform_cloud,
    region_of,
    region_v_potential,
    ricci_potential,
    ricci_potential_det,
    run_plan,
    target_slopes,
    write_scan_csv,
)


def test_volume_form_positive(params):
    rng = np.random.default_rng(0)
    z = rng.normal(size=50) + 1j * rng.normal(size=50)
    w = rng.normal(size=50) + 1j * rng.normal(size=50)
    assert np.all(VolumeForm.of(params).density(z, w) > 0)


def test_on_line_raises(params):
    with pytest.raises(SingularPointError):
        ricci_potential(params, 0.1, params.pair.a2 * 0.1)


def test_region_i_limit():
    p = AnsatzParams.default().normalized()
    w = 0.2 * np.exp(0.7j)
    t = np.geomspace(1e-2, 1e-5, 6)
    h = np.abs(ricci_potential(p, t * w * np.exp(0.3j), np.full(t.shape, w)))
    assert np.all(np.diff(h) < 0)
    assert h[-1] < 1e-9
    # the centroid condition removes the first-order term
    assert np.polyfit(np.log(t), np.log(h), 1)[0] == pytest.approx(2.0, abs=0.05)


def test_region_v_formula_matches_determinant(params):
    rng = np.random.default_rng(4)
    z = 10 ** rng.uniform(-3, -1, 30) * np.exp(2j * np.pi * rng.random(30))
    xi = np.concatenate([rng.uniform(0.1, 3.5, 20), rng.uniform(5, 40, 10)]) * np.exp(2j * np.pi * rng.random(30))
    w = xi * z
    keep = s_of(params, z, w) < 1
    z, w = z[keep], w[keep]
    assert z.size >= 20
    a = region_v_potential(params, z, w)
    b = ricci_potential_det(params, z, w)
    assert np.max(np.abs(a - b)) < 1e-8


def test_region_v_formula_domain(params):
    with pytest.raises(DomainError):
        region_v_potential(params, 1e-4, 0.2)


def test_dispatch_agrees_with_determinant(params):
    z, w = log_uniform_cloud(params, 300, 9, rho_range=(1e-2, 0.2))
    a = ricci_potential(params, z, w)
    b = ricci_potential_det(params, z, w)
    assert np.max(np.abs(a - b)) < 1e-9


def test_degenerate_pair_is_finite():
    p = AnsatzParams.build((0.3, 0.85, 0.85), a2=0.0)
    assert p.pair.is_degenerate
    z = np.array([0.01 + 0.02j, 0.1, 1e-3j])
    w = np.array([0.05j, 0.02 - 0.01j, 0.1])
    h = ricci_potential(p, z, w)
    assert np.all(np.isfinite(h))
    assert np.max(np.abs(h)) < 1e-12  # the potential is the product cone


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=8, max_size=8))
def test_h_invariant_under_linear_coordinates(vals):
    p = AnsatzParams.default()
    J = np.array([[vals[0] + 1j * vals[1], vals[2] + 1j * vals[3]], [vals[4] + 1j * vals[5], vals[6] + 1j * vals[7]]])
    dj = np.linalg.det(J)
    if abs(dj) < 1e-3:
        return
    z, w = np.array([0.01 + 0.02j]), np.array([0.03 - 0.01j])
    g = metric(p, z, w)
    h0 = h_from_form(g, VolumeForm.of(p).density(z, w))
    h1 = h_from_form(transform(g, J[None]), VolumeForm.of(p).density(z, w) * abs(dj) ** 2)
    assert h1[0] == pytest.approx(h0[0], abs=1e-10)


def test_det_positive_where_posdef(params):
    z, w = log_uniform_cloud(params, 500, 3)
    m = metric(params, z, w)
    assert np.all(m.det[m.is_posdef()] > 0)


# ---------------------------------------------------------------- regions

def test_region_examples(params):
    assert region_of(params, 1e-6, 0.1).tag == "I"
    assert region_of(params, 0.01, 1e-9).tag == "V"
    # a point in the overlap of III and IV reports III
    r = 1e-3
    R = 0.75 * r**params.alpha0
    z, w = r ** (1 / params.beta1), R ** (1 / params.gamma)
    assert region_of(params, z, w).tag == "III"


def test_regions_cover_cloud(params):
    z, w = log_uniform_cloud(params, 2000, 1)
    tags = {t.tag for t in region_of(params, z, w)}
    assert tags <= {"I", "II", "III", "IV", "V"}
    assert {"I", "III", "IV", "V"} <= tags


def test_region_ii_nonempty_check():
    assert delta_interval(AnsatzParams.default()) == pytest.approx((5.0, 17 / 3))
    assert default_delta(AnsatzParams.default()) == pytest.approx(16 / 3)
    edge = SimpleNamespace(beta1=0.3, gamma=0.75, alpha0=2.6)
    with pytest.raises(DomainError):
        delta_interval(edge)


# ---------------------------------------------------------------- decay

@pytest.fixture(scope="module")
def fits(params):
    return {k: run_plan(params, plan) for k, plan in default_orbits(params).items()}


def test_region_v_decay(params, fits):
    assert fits["V"].slope >= target_slopes(params)["V"] - 0.1
    assert fits["V"].r2 > 0.99


def test_region_iii_decay(params, fits):
    assert fits["III"].log_correction
    assert fits["III"].slope >= target_slopes(params)["III"] - 0.1


def test_region_i_decay(params, fits):
    assert fits["I"].slope >= default_delta(params) - 2


def test_orbits_stay_in_their_regions(params):
    for name, plan in default_orbits(params).items():
        z, w = plan.orbit.points(params, plan.ks)
        assert {t.tag for t in region_of(params, z, w)} == {name}


def test_fit_needs_five_samples():
    with pytest.raises(FitError):
        fit_decay([0.1, 0.01, 0.001, 1e-4], [1, 2, 3, 4])
    with pytest.raises(FitError):
        fit_decay(np.geomspace(0.1, 1e-4, 8), np.zeros(8))


def test_fit_recovers_power_law():
    rho = np.geomspace(0.1, 1e-5, 10)
    f = fit_decay(rho, 3 * rho**2.5)
    assert f.slope == pytest.approx(2.5) and f.r2 == pytest.approx(1.0)
    g = fit_decay(rho, 3 * rho**2 * -np.log(rho), log_correction=True)
    assert g.slope == pytest.approx(2.0)
    assert np.allclose(g.predict(rho), 3 * rho**2 * -np.log(rho))


def test_global_bound(params):
    eps = min(0.5 * (2 * params.gamma / params.beta1 - 2 * params.alpha0), 0.1)
    z, w = log_uniform_cloud(params, 10_000, 0)
    rho = rho_of(params, z, w)
    assert rho.min() >= 1e-4 * (1 - 1e-12) and rho.max() <= 0.2 * (1 + 1e-12)
    C = global_bound(params, z, w, eps)
    assert C < 0.5  # recorded value about 0.16
    z2, w2 = log_uniform_cloud(params, 2000, 1)
    assert global_bound(params, z2, w2, eps) <= 1.25 * C


def test_outputs(tmp_path, params, fits):
    plan = default_orbits(params)["V"]
    fit, rho, h, z, w = run_plan(params, plan, return_samples=True)
    path = tmp_path / "scan.csv"
    write_scan_csv(path, params, z, w, h, fit)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == RICCI_COLUMNS == ("rho", "region", "h", "fit_abs_h")
    assert all(r[1] == "V" for r in rows[1:])
    doc = json.loads(fits_to_json(fits))
    assert set(doc) == {"I", "III", "V"}
    assert set(doc["V"]) == {"slope", "intercept", "r2", "window", "log_correction", "n"}
