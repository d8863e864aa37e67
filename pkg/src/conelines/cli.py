"""Command-line driver: ``conelines <command> --config cfg.json --out DIR``.

Every command reads one JSON object, writes CSV/JSON outputs into DIR plus a
``manifest.json`` and exits with 0 on success, 2 for bad input, 3 when a
numerical method fails to converge and 4 when an internal check fails.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import geometry as geo
from . import harmonics as harm
from . import masolver as ma
from . import ricci
from .angles import AngleConfig, CuspConfig, Weights, classify_stability, load_angle_document
from .ansatz import AnsatzParams
from .errors import ConeLinesError, ConfigError
from .flatcone import ConePair, FlatPotential, QuadratureSpec, field_table, write_field_csv

MANIFEST = "manifest.json"


@dataclass
class RunManifest:
    command: str
    config_sha256: str
    seed: int
    workers: int
    versions: dict
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    mesh: float | None = None

    def write(self, out: Path) -> None:
        (out / MANIFEST).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _versions() -> dict:
    import pyamg

    return {"conelines": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pyamg": pyamg.__version__, "python": platform.python_version()}


def _dump(path: Path, doc) -> None:
    text = doc if isinstance(doc, str) else json.dumps(doc, indent=2, sort_keys=True)
    path.write_text(text + "\n")


def _complex(x, name: str) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(f"{name} must be a number or [re, im]")
        return complex(float(x[0]), float(x[1]))
    try:
        return complex(x)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} is not a number: {x!r}") from exc


def _keys(cfg: dict, allowed) -> None:
    extra = set(cfg) - set(allowed)
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}")


PARAM_KEYS = ("betas", "alpha0", "a2")


def _params(cfg: dict) -> AnsatzParams:
    if not any(k in cfg for k in PARAM_KEYS):
        return AnsatzParams.default()
    return AnsatzParams.build(tuple(cfg.get("betas", (0.3, 0.85, 0.9))), cfg.get("alpha0"),
                              _complex(cfg.get("a2", 1.0), "a2"))


# --------------------------------------------------------------------------
# commands; each returns the list of files written


def cmd_stability(cfg: dict, out: Path, args) -> list[str]:
    obj = load_angle_document(cfg)
    doc: dict
    if isinstance(obj, AngleConfig):
        cls = classify_stability(obj.weights())
        doc = {"betas": list(obj.betas), "gamma": obj.gamma, "strictly_unstable": obj.strictly_unstable}
    elif isinstance(obj, Weights):
        cls = classify_stability(obj)
        doc = {"weights": list(obj.mus)}
    elif isinstance(obj, CuspConfig):
        cls = classify_stability(obj.lines.weights())
        doc = {"m": obj.m, "n": obj.n, "beta": obj.beta, "gamma_tilde": obj.gamma_tilde,
               "line_betas": list(obj.lines.betas), "gamma": obj.lines.gamma}
    doc.update({"class": cls.tag, "label": str(cls), "index": cls.index})
    _dump(out / "stability.json", doc)
    return ["stability.json"]


FLAT_KEYS = ("beta2", "beta3", "a2", "a3", "degenerate", "grid", "exclude", "quadrature", "rays")


def _pair(cfg: dict) -> ConePair:
    try:
        b2, b3 = float(cfg["beta2"]), float(cfg["beta3"])
    except KeyError as exc:
        raise ConfigError(f"missing {exc}") from exc
    if cfg.get("degenerate", False):
        return ConePair.degenerate(b2, b3)
    a2 = _complex(cfg.get("a2", 1.0), "a2")
    if "a3" in cfg:
        return ConePair(b2, b3, a2, _complex(cfg["a3"], "a3"))
    return ConePair.centred(b2, b3, a2)


def cmd_flat(cfg: dict, out: Path, args) -> list[str]:
    _keys(cfg, FLAT_KEYS)
    pair = _pair(cfg)
    try:
        q = QuadratureSpec(**cfg.get("quadrature", {}))
    except TypeError as exc:
        raise ConfigError(f"bad quadrature entry: {exc}") from exc
    g = cfg.get("grid", {})
    n = int(args.mesh) if args.mesh else int(g.get("n", 12))
    x = np.linspace(float(g.get("lo", -2.5)), float(g.get("hi", 2.5)), n)
    W = (x[:, None] + 1j * x[None, :]).ravel()
    excl = float(cfg.get("exclude", 0.1))
    keep = np.ones(W.size, bool)
    for a in {pair.a2, pair.a3}:
        keep &= np.abs(W - a) > excl
    write_field_csv(out / "flat_field.csv", field_table(pair, W[keep], q))

    ev = FlatPotential(pair, q)
    A = ev.asymptotic()
    doc = {"pair": {"beta2": pair.beta2, "beta3": pair.beta3, "a2": [pair.a2.real, pair.a2.imag],
                    "a3": [pair.a3.real, pair.a3.imag]},
           "A": A.A, "c": A.c, "quadrature_error": A.quadrature_error,
           "two_resolution_agree": bool(A.quadrature_error <= 1e-4 * max(1.0, abs(A.A))), "rays": []}
    if not pair.is_degenerate:
        r = np.geomspace(10, 100, 12)
        th = 2 * np.pi * np.arange(int(cfg.get("rays", 64))) / int(cfg.get("rays", 64)) + 0.013
        W = r[:, None] * np.exp(1j * th[None, :])
        resid = np.abs(ev.phi0(W.ravel())).reshape(W.shape)
        rays = [float(np.polyfit(np.log(r), np.log(resid[:, k]), 1)[0]) for k in range(th.size)]
        doc["rays"] = [{"theta": float(t), "slope": s} for t, s in zip(th, rays)]
        doc["slope_sup"] = float(np.polyfit(np.log(r), np.log(resid.max(axis=1)), 1)[0])
        doc["slope_ok"] = bool(doc["slope_sup"] <= -A.c + 0.05)
    _dump(out / "flat_asymptotics.json", doc)
    return ["flat_field.csv", "flat_asymptotics.json"]


RICCI_KEYS = PARAM_KEYS + ("cloud_size", "epsilon")


def cmd_ricci_scan(cfg: dict, out: Path, args) -> list[str]:
    _keys(cfg, RICCI_KEYS)
    p = _params(cfg)
    files, fits = [], {}
    for name, plan in ricci.default_orbits(p).items():
        fit, rho, h, z, w = ricci.run_plan(p, plan, return_samples=True)
        fits[name] = fit
        fname = f"ricci_{name}.csv"
        ricci.write_scan_csv(out / fname, p, z, w, h, fit)
        files.append(fname)
    eps = float(cfg.get("epsilon", 0.05))
    n = int(cfg.get("cloud_size", 2000))
    z, w = ricci.log_uniform_cloud(p, n, args.seed)
    extra = {"targets": ricci.target_slopes(p),
             "global_bound": {"epsilon": eps, "C": ricci.global_bound(p, z, w, eps), "n": n, "seed": args.seed}}
    _dump(out / "ricci_fits.json", ricci.fits_to_json(fits, extra))
    return files + ["ricci_fits.json"]


TANGENT_KEYS = PARAM_KEYS + ("lambdas", "sample_size", "n_seg", "collision", "mus", "box", "box_n")


def cmd_tangent_cone(cfg: dict, out: Path, args) -> list[str]:
    _keys(cfg, TANGENT_KEYS)
    p = _params(cfg)
    lams = cfg.get("lambdas", [2.0**-k for k in range(1, 6)])
    X = geo.tangent_cone_sample(p, int(cfg.get("sample_size", 6)), args.seed)
    rep = geo.tangent_cone_check(p, lams, X, int(cfg.get("n_seg", 32)))
    with open(out / "tangent_cone.csv", "w") as fh:
        fh.write(",".join(geo.DISTORTION_COLUMNS) + "\n")
        for row in rep.to_rows():
            fh.write(",".join(repr(row[k]) for k in geo.DISTORTION_COLUMNS) + "\n")
    geo.write_distortion_json(out / "tangent_cone.json", rep)
    fits = {"distortion": rep.fit, "hermitian_gap": rep.fit_hermitian, "model_gap": rep.fit_model}
    files = ["tangent_cone.csv", "tangent_cone.json"]
    if cfg.get("collision", True):
        mus = np.asarray(cfg.get("mus", [2.0**-k for k in range(3, 9)]), dtype=float)
        K = geo.box_points(tuple(cfg.get("box", (-1, 1, -1, 1))), int(cfg.get("box_n", 4)))
        d = np.array([geo.collision_distortion(p.pair, m, K) for m in mus])
        with open(out / "collision.csv", "w") as fh:
            fh.write("mu,distortion\n")
            for m, v in zip(mus, d):
                fh.write(f"{m!r},{float(v)!r}\n")
        fits["collision"] = geo._fit_or_nan(mus, d)
        files.append("collision.csv")
    geo.write_fits_csv(out / "tangent_cone_fits.csv", fits)
    return files + ["tangent_cone_fits.csv"]


HARM_KEYS = PARAM_KEYS + ("cap", "lambdas")


def cmd_harmonics(cfg: dict, out: Path, args) -> list[str]:
    _keys(cfg, HARM_KEYS)
    p = _params(cfg)
    cap = float(cfg.get("cap", 4.0))
    cat = geo.model_catalog(p)
    sets = [harm.indicial_roots(c, cap, seed=args.seed) for c in cat.values()]
    bases = [harm.subquadratic_basis(c) for c in cat.values()]
    _dump(out / "harmonics_roots.json", harm.roots_to_json(sets, bases))
    hi = 1.0 + 1.0 / p.config.betas[2]
    gap = {s.cone.tag: {"next_above_2": s.next_above(2.0), "interval": [2.0, hi],
                        "root_free": not s.in_interval(2.0, hi)} for s in sets}
    _dump(out / "harmonics_gap.json", gap)
    rows = []
    for c in cat.values():
        rows += harm.ratio_sweep(c, cfg.get("lambdas", (0.5, 0.25)))
    harm.write_ratio_csv(out / "harmonics_ratios.csv", rows)
    return ["harmonics_roots.json", "harmonics_gap.json", "harmonics_ratios.csv"]


def cmd_ma_solve(cfg: dict, out: Path, args) -> list[str]:
    cfg = dict(cfg)
    p = _params({k: cfg.pop(k) for k in PARAM_KEYS if k in cfg})
    scale = float(cfg.pop("rhs_scale", 1.0))
    if args.mesh:
        cfg["mesh"] = float(args.mesh)
    prob = ma.MAProblem.from_json(cfg, p)
    op = ma.DiscreteMA(prob)
    sol = ma.solve_newton(op, rhs=scale * op.h[op.rows])
    rep = ma.verify_cy(p, sol)
    ma.write_solution_csv(out / "ma_solution.csv", sol, rep)
    ma.write_log_csv(out / "ma_log.csv", sol)
    doc = ma.summary(sol, rep)
    doc["rhs_scale"] = scale
    _dump(out / "ma_summary.json", doc)
    return ["ma_solution.csv", "ma_log.csv", "ma_summary.json"]


COMMANDS = {"stability": cmd_stability, "flat": cmd_flat, "ricci-scan": cmd_ricci_scan,
            "tangent-cone": cmd_tangent_cone, "harmonics": cmd_harmonics, "ma-solve": cmd_ma_solve}


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (default: built-in defaults)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker bound (recorded)")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled clouds")
    common.add_argument("--mesh", type=float, default=None,
                        help="grid mesh (ma-solve) or points per side (flat)")
    ap = argparse.ArgumentParser(prog="conelines", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def _load_config(path: Path | None) -> tuple[dict, str]:
    if path is None:
        raw = b"{}"
    else:
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg, hashlib.sha256(raw).hexdigest()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        cfg, digest = _load_config(args.config)
        man = RunManifest(args.command, digest, args.seed, args.workers, _versions(), mesh=args.mesh)
        t0 = time.perf_counter()
        man.outputs = COMMANDS[args.command](cfg, out, args)
        man.wall_clock_s = time.perf_counter() - t0
        man.write(out)
        return 0
    except ConeLinesError as exc:
        code = exc.exit_code
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        diag = getattr(exc, "diagnostics", None)
        if diag:
            err["diagnostics"] = diag
    except Exception as exc:  # anything else is an internal failure
        code = 4
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    text = json.dumps(err, indent=2, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    try:
        (out / "error.json").write_text(text + "\n")
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
