"""Ricci potential of the approximate metric and its decay towards the origin.

h is defined by omega^2 = e^{-h} Omega ^ Omegabar with the multivalued volume
form Omega = b1 g z^(b1-1) (w - a2 z)^(b2-1) (w - a3 z)^(b3-1) dz ^ dw, so in
coefficients h = -log(det g / (b1^2 g^2 prod |l_j|^(2 b_j - 2))).

Three exact formulas are used depending on where the point lies:

* s > 2 (chi2 = 0): the metric is the product cone and
  h = sum_j (2 b_j - 2) log|1 - a_j z / w|;
* s < 1 (chi2 = 1): with xi = w / z,
  h = -log(1 + E),  E = (g^2 / b1^2) |z|^(2g - 2 b1) (phi - |phi_xi|^2 / phi_xixibar);
* otherwise the determinant of cone + perturbation, expanded as
  h = h_cone - log(1 + delta) so that small h keeps its relative accuracy.

``ricci_potential_det`` always uses the determinant and serves as a cross-check.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .ansatz import AnsatzParams, _check_off_lines, _metric_split, metric, rho_of, s_of
from .errors import DomainError, FitError, NonPositiveMetricError
from .flatcone import _log_abs_one_minus

MU_REG = 0.1
REGIONS = ("I", "II", "III", "IV", "V")


@dataclass(frozen=True)
class VolumeForm:
    """|Omega|^2 density b1^2 g^2 prod |l_j|^(2 b_j - 2) in the coframe dz, dw."""

    norm: float
    a2: complex
    a3: complex
    exponents: tuple

    @classmethod
    def of(cls, p: AnsatzParams) -> "VolumeForm":
        b = p.config.betas
        return cls(p.beta1 * p.gamma, p.pair.a2, p.pair.a3, tuple(2 * x - 2 for x in b))

    def lines(self, z, w):
        return z, w - self.a2 * z, w - self.a3 * z

    def density(self, z, w):
        l1, l2, l3 = self.lines(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
        e1, e2, e3 = self.exponents
        return self.norm**2 * np.abs(l1) ** e1 * np.abs(l2) ** e2 * np.abs(l3) ** e3


@dataclass(frozen=True)
class RicciRegion:
    tag: str
    mu: float
    alpha0: float


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float
    window: tuple
    log_correction: bool
    n: int

    def predict(self, rho):
        rho = np.asarray(rho, dtype=float)
        v = np.exp(self.intercept) * rho**self.slope
        return v * -np.log(rho) if self.log_correction else v


# --------------------------------------------------------------------------
# the potential


def h_from_form(form, omega_density) -> np.ndarray:
    """-log(det / |Omega|^2) for any Hermitian form and volume density."""
    det = np.asarray(form.det)
    if np.any(~(det > 0)):
        raise NonPositiveMetricError("metric determinant is not positive")
    return -np.log(det / omega_density)


def ricci_potential_det(p: AnsatzParams, z, w) -> np.ndarray:
    """h through the determinant of the assembled metric."""
    z, w = _check_off_lines(p, np.atleast_1d(z), np.atleast_1d(w))
    z, w = np.broadcast_arrays(z, w)
    return h_from_form(metric(p, z, w), VolumeForm.of(p).density(z, w))


def _product_cone_h(p: AnsatzParams, z, w):
    pr = p.pair
    q = z / w
    return (2 * pr.beta2 - 2) * _log_abs_one_minus(pr.a2 * q) + (2 * pr.beta3 - 2) * _log_abs_one_minus(pr.a3 * q)


def _schur_term(p: AnsatzParams, xi):
    """phi - |phi_xi|^2 / phi_xixibar, rearranged for large |xi| to avoid cancelling |xi|^(2g)."""
    F = p.field()
    pr = p.pair
    g = p.gamma
    out = np.empty(xi.shape)
    far = np.abs(xi) > F.near_radius
    if np.any(~far):
        phi, dphi, dens = F.phi_terms(xi[~far])
        out[~far] = phi - np.abs(dphi) ** 2 / dens
    if np.any(far):
        x = xi[far]
        N, Nx, _ = F.correction_terms(x)
        a = np.abs(x)
        ef = np.expm1((2 * pr.beta2 - 2) * _log_abs_one_minus(pr.a2 / x)
                      + (2 * pr.beta3 - 2) * _log_abs_one_minus(pr.a3 / x))
        D = g * g * a ** (2 * g - 2) * (1 + ef)
        c = g * np.conj(x) * a ** (2 * g - 2)
        out[far] = a ** (2 * g) * ef / (1 + ef) + N - (2 * np.real(np.conj(c) * Nx) + np.abs(Nx) ** 2) / D
    return out


def region_v_error(p: AnsatzParams, z, w) -> np.ndarray:
    """E with det = |Omega|^2 (1 + E); exact wherever chi2 = 1."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    g, b1 = p.gamma, p.beta1
    return (g * g / (b1 * b1)) * np.abs(z) ** (2 * g - 2 * b1) * _schur_term(p, w / z)


def region_v_potential(p: AnsatzParams, z, w) -> np.ndarray:
    """-log(1 + E); only valid where chi2 = 1 (s < 1)."""
    z, w = _check_off_lines(p, np.atleast_1d(z), np.atleast_1d(w))
    if np.any(s_of(p, z, w) >= 1):
        raise DomainError("the closed form needs chi2 = 1 (s < 1)")
    E = region_v_error(p, z, w)
    if np.any(~(E > -1)):
        raise NonPositiveMetricError("metric determinant is not positive")
    return -np.log1p(E)


def ricci_potential(p: AnsatzParams, z, w):
    """h at points off the lines, using the best-conditioned exact formula."""
    z, w = _check_off_lines(p, np.atleast_1d(z), np.atleast_1d(w))
    z, w = np.broadcast_arrays(z, w)
    z, w = z.ravel(), w.ravel()
    s = s_of(p, z, w)
    cone = s > 2
    coll = s < 1
    mid = ~cone & ~coll
    h = np.empty(z.shape)
    if np.any(cone):
        h[cone] = _product_cone_h(p, z[cone], w[cone])
    if np.any(coll):
        E = region_v_error(p, z[coll], w[coll])
        if np.any(~(E > -1)):
            raise NonPositiveMetricError("metric determinant is not positive")
        h[coll] = -np.log1p(E)
    if np.any(mid):
        zm, wm = z[mid], w[mid]
        c11, c22, p11, p12, p22 = _metric_split(p, zm, wm)
        delta = (c11 * p22 + p11 * c22 + p11 * p22 - np.abs(p12) ** 2) / (c11 * c22)
        if np.any(~(delta > -1)):
            raise NonPositiveMetricError("metric determinant is not positive")
        h[mid] = _product_cone_h(p, zm, wm) - np.log1p(delta)
    return h if h.size > 1 else float(h[0])


# --------------------------------------------------------------------------
# regions


def delta_interval(p: AnsatzParams) -> tuple[float, float]:
    """Admissible delta from the region I and II constraints; raises when empty."""
    b1, g, a0 = p.beta1, p.gamma, p.alpha0
    lo = 2 * g / b1
    hi = min(2 + 2 / b1 - 2 / g, 2 * (1 / b1 - (1 / g - 1) * a0))
    if not hi > lo:
        raise DomainError(f"region II is empty for alpha0={a0}: need gamma/beta1 < 1/beta1 - (1/gamma - 1) alpha0")
    return lo, hi


def default_delta(p: AnsatzParams) -> float:
    lo, hi = delta_interval(p)
    return 0.5 * (lo + hi)


def region_of(p: AnsatzParams, z, w, mu: float = MU_REG):
    """Region tags I-V; collar points get the lowest-numbered region containing them."""
    if not 0 < mu < 1:
        raise DomainError("mu must lie in (0, 1)")
    delta_interval(p)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    r = np.abs(z) ** p.beta1
    R = np.abs(w) ** p.gamma
    ra = r**p.alpha0
    rg = r ** (p.gamma / p.beta1)
    preds = [
        R > mu * r,
        (2 * ra < R) & (R < 2 * mu * r),
        (ra / 2 < R) & (R < 4 * ra),
        (rg / mu < R) & (R < ra),
        R < 2 * rg / mu,
    ]
    tag = np.full(z.shape, "", dtype=object)
    for name, pr in zip(REGIONS, preds):
        tag = np.where((tag == "") & pr, name, tag)
    if np.any(tag == "") or np.any((z == 0) & (w == 0)):
        raise DomainError("point not covered by the five regions (the origin?)")
    tags = [RicciRegion(str(t), mu, p.alpha0) for t in tag]
    return tags if len(tags) > 1 else tags[0]


# --------------------------------------------------------------------------
# decay along orbits


@dataclass(frozen=True)
class Orbit:
    """Points (z, w) with r -> lam^k r0 and R -> lam^(q k) R0, phases fixed.

    q = 1 is the cone dilation; q = gamma/beta1 keeps xi = w/z fixed (region V);
    q = alpha0 keeps s fixed (the gluing band, region III).
    """

    z0: complex
    w0: complex
    lam: float = 0.5
    q: float = 1.0

    def points(self, p: AnsatzParams, ks):
        ks = np.asarray(list(ks), dtype=float)
        r0, R0 = abs(self.z0) ** p.beta1, abs(self.w0) ** p.gamma
        r = r0 * self.lam**ks
        R = R0 * self.lam ** (self.q * ks)
        z = r ** (1 / p.beta1) * np.exp(1j * np.angle(self.z0))
        w = R ** (1 / p.gamma) * np.exp(1j * np.angle(self.w0))
        return z, w

    @classmethod
    def dilation(cls, z0, w0, lam=0.5):
        return cls(complex(z0), complex(w0), lam, 1.0)

    @classmethod
    def fixed_slope(cls, p: AnsatzParams, z0, w0, lam=0.5):
        return cls(complex(z0), complex(w0), lam, p.gamma / p.beta1)

    @classmethod
    def fixed_s(cls, p: AnsatzParams, z0, w0, lam=0.5):
        return cls(complex(z0), complex(w0), lam, p.alpha0)


def fit_decay(rho, h, log_correction: bool = False) -> DecayFit:
    rho = np.asarray(rho, dtype=float)
    y = np.abs(np.asarray(h, dtype=float))
    ok = np.isfinite(y) & (y > 0) & (rho > 0) & (rho < 1)
    if ok.sum() < 5:
        raise FitError(f"only {int(ok.sum())} usable samples; need at least 5")
    x = np.log(rho[ok])
    yy = np.log(y[ok])
    if log_correction:
        yy = yy - np.log(-x)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, yy, rcond=None)
    res = yy - A @ coef
    ss = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss if ss > 0 else 1.0
    return DecayFit(float(coef[0]), float(coef[1]), float(min(max(r2, 0.0), 1.0)),
                    (float(rho[ok].min()), float(rho[ok].max())), bool(log_correction), int(ok.sum()))


def decay_scan(p: AnsatzParams, orbit: Orbit, k_range, log_correction: bool = False, return_samples: bool = False):
    z, w = orbit.points(p, k_range)
    rho = rho_of(p, z, w)
    h = ricci_potential(p, z, w)
    fit = fit_decay(rho, np.atleast_1d(h), log_correction)
    if return_samples:
        return fit, rho, np.atleast_1d(h), z, w
    return fit


@dataclass(frozen=True)
class ScanPlan:
    orbit: Orbit
    ks: tuple
    log_correction: bool


def default_orbits(p: AnsatzParams) -> dict:
    """One orbit per tested estimate; the region III orbit starts once it has left region I."""
    b1, g, a0 = p.beta1, p.gamma, p.alpha0
    r0 = 0.05

    def zw(r, R, tz=0.4, tw=1.9):
        return r ** (1 / b1) * np.exp(1j * tz), R ** (1 / g) * np.exp(1j * tw)

    return {
        "I": ScanPlan(Orbit.dilation(*zw(r0, 2.0 * r0)), tuple(range(0, 14)), False),
        "III": ScanPlan(Orbit.fixed_s(p, *zw(r0, 1.5 * r0**a0)), tuple(range(4, 24)), True),
        "V": ScanPlan(Orbit.fixed_slope(p, *zw(r0, 3.0 * r0 ** (g / b1))), tuple(range(0, 14)), False),
    }


def run_plan(p: AnsatzParams, plan: ScanPlan, return_samples: bool = False):
    return decay_scan(p, plan.orbit, plan.ks, plan.log_correction, return_samples)


def target_slopes(p: AnsatzParams) -> dict:
    b1, g, a0 = p.beta1, p.gamma, p.alpha0
    return {"I": default_delta(p) - 2, "III": 2 * g / b1 - 2 * a0, "V": 2 * g / b1 - 2}


# --------------------------------------------------------------------------
# global bound


def log_uniform_cloud(p: AnsatzParams, n: int, seed: int, rho_range=(1e-4, 0.2), tube: float = 1e-3):
    """Points with log rho uniform, random (r, R) direction and phases, off line tubes."""
    rng = np.random.default_rng(seed)
    zs, ws = [], []
    got = 0
    while got < n:
        m = 2 * (n - got) + 16
        rho = np.exp(rng.uniform(np.log(rho_range[0]), np.log(rho_range[1]), m))
        t = rng.uniform(0, 0.5 * np.pi, m)
        z = (rho * np.cos(t)) ** (1 / p.beta1) * np.exp(2j * np.pi * rng.random(m))
        w = (rho * np.sin(t)) ** (1 / p.gamma) * np.exp(2j * np.pi * rng.random(m))
        a2, a3 = p.pair.a2, p.pair.a3
        rel = np.maximum(np.abs(z), np.abs(w))
        d = np.minimum.reduce([np.abs(z), np.abs(w - a2 * z), np.abs(w - a3 * z)])
        keep = (d > tube * rel) & (rel > 0)
        zs.append(z[keep])
        ws.append(w[keep])
        got += int(keep.sum())
    return np.concatenate(zs)[:n], np.concatenate(ws)[:n]


def global_bound(p: AnsatzParams, z, w, eps: float) -> float:
    """Smallest C with |h| <= C rho^eps over the sample."""
    h = np.atleast_1d(ricci_potential(p, z, w))
    return float(np.max(np.abs(h) / rho_of(p, z, w) ** eps))


# --------------------------------------------------------------------------
# output

RICCI_COLUMNS = ("rho", "region", "h", "fit_abs_h")


def write_scan_csv(path, p: AnsatzParams, z, w, h, fit: DecayFit | None = None) -> None:
    z = np.atleast_1d(z)
    w = np.atleast_1d(w)
    h = np.atleast_1d(h)
    rho = rho_of(p, z, w)
    reg = region_of(p, z, w)
    reg = reg if isinstance(reg, list) else [reg]
    pred = fit.predict(rho) if fit is not None else np.full(rho.shape, np.nan)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(RICCI_COLUMNS)
        for i in range(z.size):
            wr.writerow([f"{rho[i]:.17g}", reg[i].tag, f"{h[i]:.17g}", f"{pred[i]:.17g}"])


def fits_to_json(fits: dict, extra: dict | None = None) -> str:
    doc = {k: asdict(v) for k, v in sorted(fits.items())}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)
