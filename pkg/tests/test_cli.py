import csv
import json

import pytest

from conelines import cli
from conelines import harmonics as harm
from conelines.ansatz import AnsatzParams
from conelines.geometry import model_catalog


def run(tmp_path, command, cfg, name="out", extra=()):
    cpath = tmp_path / f"{name}.json"
    cpath.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
    out = tmp_path / name
    code = cli.main([command, "--config", str(cpath), "--out", str(out), *extra])
    return code, out


@pytest.mark.parametrize("cfg, cls", [({"betas": [0.3, 0.85, 0.9]}, "unstable"),
                                      ({"weights": [0.5, 0.5, 0.5]}, "stable"),
                                      ({"weights": [0.7, 0.7, 0.7]}, "notklt")])
def test_stability(tmp_path, cfg, cls):
    code, out = run(tmp_path, "stability", cfg)
    assert code == 0
    doc = json.loads((out / "stability.json").read_text())
    assert doc["class"] == cls
    if "betas" in cfg:
        assert doc["gamma"] == pytest.approx(0.75)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "stability" and man["outputs"] == ["stability.json"]


def test_malformed_json_exits_2(tmp_path):
    code, out = run(tmp_path, "stability", "{bad")
    assert code == 2
    assert json.loads((out / "error.json").read_text())["error"] == "ConfigError"


def test_domain_error_exits_2(tmp_path):
    code, _ = run(tmp_path, "stability", {"betas": [0.3, 1.2, 0.9]})
    assert code == 2


def test_unknown_key_exits_2(tmp_path):
    code, _ = run(tmp_path, "harmonics", {"cap": 3, "colour": "red"})
    assert code == 2


def test_internal_failure_exits_4(tmp_path, monkeypatch):
    def boom(cfg, out, args):
        raise RuntimeError("broken invariant")

    monkeypatch.setitem(cli.COMMANDS, "stability", boom)
    code, out = run(tmp_path, "stability", {})
    assert code == 4


def test_ma_solve_zero_rhs(tmp_path):
    cfg = {"rhs_scale": 0.0, "mesh": 1 / 32, "mask_cells": 2}
    code, out = run(tmp_path, "ma-solve", cfg)
    assert code == 0
    doc = json.loads((out / "ma_summary.json").read_text())
    assert doc["newton_steps"] <= 1 and doc["sup_u"] == 0.0


def test_ma_solve_non_convergence_exits_3(tmp_path):
    code, out = run(tmp_path, "ma-solve", {"mesh": 1 / 32, "mask_cells": 2, "max_newton": 1})
    assert code == 3
    assert json.loads((out / "error.json").read_text())["exit_code"] == 3


def test_outputs_byte_identical(tmp_path):
    cfg = {"mesh": 1 / 32, "mask_cells": 2}
    c1, o1 = run(tmp_path, "ma-solve", cfg, "a")
    c2, o2 = run(tmp_path, "ma-solve", cfg, "b")
    assert c1 == c2 == 0
    for name in json.loads((o1 / "manifest.json").read_text())["outputs"]:
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()


def test_mesh_flag_overrides(tmp_path):
    code, out = run(tmp_path, "ma-solve", {"mask_cells": 2}, extra=("--mesh", "0.03125"))
    assert code == 0
    assert json.loads((out / "ma_summary.json").read_text())["problem"]["mesh"] == 0.03125


def test_flat_degenerate_pair(tmp_path):
    code, out = run(tmp_path, "flat", {"beta2": 0.85, "beta3": 0.9, "degenerate": True, "grid": {"n": 5}})
    assert code == 0
    assert json.loads((out / "flat_asymptotics.json").read_text())["A"] == 0.0
    rows = list(csv.reader(open(out / "flat_field.csv")))
    assert rows[0] == ["re_w", "im_w", "phi", "dphi_re", "dphi_im", "density"]


def test_harmonics_default(tmp_path):
    code, out = run(tmp_path, "harmonics", {})
    assert code == 0
    doc = json.loads((out / "harmonics_roots.json").read_text())
    cat = model_catalog(AnsatzParams.default())
    assert set(doc) == set(cat)
    for tag, c in cat.items():
        assert doc[tag]["indicial"]["roots"] == pytest.approx(list(harm.indicial_roots(c, 4.0).roots))
        assert doc[tag]["subquadratic"]["dimension"] == harm.subquadratic_basis(c).dimension
    gap = json.loads((out / "harmonics_gap.json").read_text())
    assert all(v["root_free"] for v in gap.values())
    rows = list(csv.DictReader(open(out / "harmonics_ratios.csv")))
    assert all(abs(float(r["ratio"]) - float(r["expected"])) < 1e-9 for r in rows)


def test_ricci_scan(tmp_path):
    code, out = run(tmp_path, "ricci-scan", {"cloud_size": 500})
    assert code == 0
    doc = json.loads((out / "ricci_fits.json").read_text())
    assert doc["V"]["slope"] >= doc["targets"]["V"] - 0.1
    assert doc["global_bound"]["C"] > 0
    assert list(csv.reader(open(out / "ricci_V.csv")))[0] == ["rho", "region", "h", "fit_abs_h"]


def test_tangent_cone_small(tmp_path):
    cfg = {"sample_size": 3, "lambdas": [0.5, 0.25, 0.125, 0.0625, 0.03125], "mus": [2.0**-k for k in range(3, 8)],
           "box_n": 2, "n_seg": 16}
    code, out = run(tmp_path, "tangent-cone", cfg)
    assert code == 0
    rows = list(csv.DictReader(open(out / "tangent_cone.csv")))
    d = [float(r["distortion"]) for r in rows]
    assert len(d) == 5 and min(d) > 0
    # monotonicity itself is checked at full sample size by the acceptance suite
    summary = json.loads((out / "tangent_cone.json").read_text())
    assert summary["monotone"] == all(b < a for a, b in zip(d, d[1:]))
    fits = {r["quantity"]: r for r in csv.DictReader(open(out / "tangent_cone_fits.csv"))}
    assert set(fits) == {"distortion", "hermitian_gap", "model_gap", "collision"}
