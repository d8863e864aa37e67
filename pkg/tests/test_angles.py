import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conelines.angles import (
    AngleConfig,
    Weights,
    classify_stability,
    cusp_angles,
    load_angle_document,
    validate_config,
)
from conelines.errors import ConfigError, DomainError, UnstableRangeError

beta = st.floats(min_value=1e-3, max_value=1 - 1e-3)


def test_default_config_gamma():
    c = validate_config([0.3, 0.85, 0.9])
    assert c.gamma == pytest.approx(0.75, abs=1e-15)
    assert c.strictly_unstable and c.gamma_in_range


def test_equal_halves_not_unstable():
    c = validate_config([0.5, 0.5, 0.5])
    assert c.gamma == pytest.approx(0.0, abs=1e-15)
    assert not c.strictly_unstable
    assert not c.gamma_in_range


@pytest.mark.parametrize("betas", [(0.3, 1.2, 0.9), (0.0, 0.5, 0.5), (0.3, 0.5, float("nan")), (0.4, 0.5)])
def test_invalid_configs(betas):
    with pytest.raises(DomainError):
        validate_config(betas)


def test_input_is_sorted_with_permutation():
    c = validate_config([0.9, 0.3, 0.85])
    assert c.betas == (0.3, 0.85, 0.9)
    assert [0.9, 0.3, 0.85][c.perm[0]] == 0.3


@pytest.mark.parametrize(
    "mus, tag, idx",
    [((0.7, 0.15, 0.10), "unstable", 1), ((0.5, 0.5, 0.5), "stable", None), ((0.5, 0.3, 0.2), "semistable", None),
     ((0.9, 0.9, 0.3), "notklt", None), ((0.1, 0.1, 0.6), "unstable", 3)],
)
def test_classification_examples(mus, tag, idx):
    c = classify_stability(Weights(mus))
    assert c.tag == tag and c.index == idx


def test_class_strings():
    assert str(classify_stability(Weights((0.7, 0.15, 0.10)))) == "Unstable(1)"
    assert str(classify_stability(Weights((0.5, 0.5, 0.5)))) == "Stable"


@pytest.mark.parametrize(
    "m, n, b, triple, gt",
    [(2, 3, 0.9, (1 / 3, 1 / 2, 0.9), 0.8), (3, 4, 0.95, (1 / 4, 1 / 3, 0.95), 0.85)],
)
def test_cusp_examples(m, n, b, triple, gt):
    c = cusp_angles(m, n, b)
    assert c.gamma_tilde == pytest.approx(gt, abs=1e-14)
    assert c.lines.betas == pytest.approx(triple, abs=1e-15)
    assert c.lines.strictly_unstable


def test_cusp_errors():
    with pytest.raises(UnstableRangeError):
        cusp_angles(2, 3, 0.8)
    with pytest.raises(DomainError):
        cusp_angles(2, 3, 1.0)
    with pytest.raises(DomainError):
        cusp_angles(3, 3, 0.95)


def test_documents(tmp_path):
    assert isinstance(load_angle_document({"betas": [0.3, 0.85, 0.9]}), AngleConfig)
    assert isinstance(load_angle_document({"weights": [0.7, 0.15, 0.1]}), Weights)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"cusp": {"m": 2, "n": 3, "beta": 0.9}}))
    assert load_angle_document(p).gamma_tilde == pytest.approx(0.8)
    with pytest.raises(ConfigError):
        load_angle_document({"angles": [1]})
    with pytest.raises(ConfigError):
        load_angle_document({"cusp": {"m": 2}})


def test_weights_round_trip():
    c = Weights((0.7, 0.15, 0.1)).to_config()
    assert c.betas == pytest.approx((0.3, 0.85, 0.9))


@given(st.lists(beta, min_size=3, max_size=7))
def test_gamma_identity(bs):
    c = validate_config(bs)
    assert abs(c.gamma_residual()) < 1e-12
    assert list(c.betas) == sorted(c.betas)
    if c.strictly_unstable:
        assert 0 < c.beta1 < c.gamma < 1


@given(st.lists(st.floats(min_value=1e-3, max_value=1 - 1e-3), min_size=3, max_size=6), st.randoms())
def test_classification_permutation(mus, rnd):
    a = classify_stability(Weights(tuple(mus)))
    perm = list(range(len(mus)))
    rnd.shuffle(perm)
    b = classify_stability(Weights(tuple(mus[i] for i in perm)))
    assert a.tag == b.tag
    if a.tag == "unstable":
        assert perm[b.index - 1] == a.index - 1


def test_classification_partitions_weight_space():
    rng = np.random.default_rng(7)
    mus = rng.uniform(1e-3, 1 - 1e-3, size=(10_000, 4))
    for row in mus:
        c = classify_stability(Weights(tuple(row)))
        tot = row.sum()
        gaps = row - (tot - row)
        flags = [tot >= 2, tot < 2 and np.all(gaps < 0), tot < 2 and np.any(gaps > 0)]
        assert sum(flags) == 1
        assert c.tag == ["notklt", "stable", "unstable"][flags.index(True)]


@given(st.integers(2, 8), st.integers(1, 8), st.floats(1e-6, 1 - 1e-6))
def test_cusp_configs_are_strictly_unstable(m, dn, t):
    n = m + dn
    lo = 1 + 1 / n - 1 / m
    b = lo + t * (1 - lo)
    if not lo < b < 1:
        return
    c = cusp_angles(m, n, b)
    assert (1 - 1 / m) + (1 - b) < 1 - 1 / n
    assert c.lines.strictly_unstable
    assert 0 < c.gamma_tilde < 1


def test_cusp_boundary_is_excluded():
    for m, n in itertools.combinations(range(2, 7), 2):
        with pytest.raises(UnstableRangeError):
            cusp_angles(m, n, 1 + 1 / n - 1 / m)
