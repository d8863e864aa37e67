"""Approximate Calabi-Yau potential on C^2 with three conical lines.

The lines are L1 = {z = 0}, L2 = {w = a2 z}, L3 = {w = a3 z} with angles
2 pi beta_j.  With r = |z|^b1, R = |w|^g and s = R r^(-alpha0) the potential is

    psi = |z|^(2 b1) + chi1(s) |w|^(2 g) + chi2(s) |z|^(2 g) phi(w / z),

where phi is the flat two-cone-point potential on the slice.  Writing
Q = |z|^(2g) phi(w/z) - |w|^(2g) gives psi = |z|^(2b1) + |w|^(2g) + chi2(s) Q,
which is how the metric is assembled: the cone part is exact and Q carries
all dependence on the flat slice.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .angles import AngleConfig, CuspConfig, validate_config
from .errors import DomainError, ProbeError, SingularPointError
from .flatcone import ConePair, FlatField, QuadratureSpec, flat_field, potential

LINE_TOL = 0.0  # only points exactly on a line are rejected


# --------------------------------------------------------------------------
# cutoff


@dataclass(frozen=True)
class CutoffPair:
    """chi1, chi2 and the derivatives of chi1 (those of chi2 are their negatives)."""

    chi1: np.ndarray
    chi2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


def cutoff(s) -> CutoffPair:
    """Quintic smoothstep from 0 at s=1 to 1 at s=2 for chi1; chi2 = 1 - chi1."""
    s = np.asarray(s, dtype=float)
    t = np.clip(s - 1.0, 0.0, 1.0)
    chi1 = t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    d1 = 30.0 * t * t * (1.0 - t) ** 2
    d2 = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    return CutoffPair(chi1, 1.0 - chi1, d1, d2)


# --------------------------------------------------------------------------
# parameters and frames


@dataclass(frozen=True)
class AnsatzParams:
    config: AngleConfig
    pair: ConePair
    alpha0: float
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    ball_radius: float = 0.3
    cusp: tuple | None = None  # (m, n) when built from a cuspidal curve

    def __post_init__(self):
        c = self.config
        if c.d != 3:
            raise DomainError(f"the ansatz is implemented for three lines, got d={c.d}")
        if not c.strictly_unstable:
            raise DomainError("angles violate the strict instability condition (beta1 >= gamma)")
        b2, b3 = c.betas[1], c.betas[2]
        if abs(self.pair.beta2 - b2) > 1e-15 or abs(self.pair.beta3 - b3) > 1e-15:
            raise DomainError("slice pair angles do not match beta2, beta3 of the config")
        if not (1.0 < self.alpha0 < c.gamma / c.beta1):
            raise DomainError(f"alpha0={self.alpha0} must lie in (1, gamma/beta1={c.gamma / c.beta1})")

    @classmethod
    def build(cls, betas=(0.3, 0.85, 0.9), alpha0: float | None = None, a2: complex = 1.0,
              quad: QuadratureSpec | None = None, ball_radius: float = 0.3) -> "AnsatzParams":
        cfg = validate_config(betas)
        if alpha0 is None:
            alpha0 = 0.5 * (1.0 + cfg.gamma / cfg.beta1)
        pair = ConePair.centred(cfg.betas[1], cfg.betas[2], a2)
        return cls(cfg, pair, float(alpha0), quad or QuadratureSpec(), ball_radius)

    @classmethod
    def default(cls) -> "AnsatzParams":
        return cls.build((0.3, 0.85, 0.9), 1.5)

    @classmethod
    def from_cusp(cls, cusp: CuspConfig, alpha0: float | None = None) -> "AnsatzParams":
        p = cls.build(cusp.lines.betas, alpha0)
        return AnsatzParams(p.config, p.pair, p.alpha0, p.quad, p.ball_radius, (cusp.m, cusp.n))

    @property
    def beta1(self) -> float:
        return self.config.beta1

    @property
    def gamma(self) -> float:
        return self.config.gamma

    @property
    def kappa(self) -> float:
        return self.alpha0 * self.beta1 / self.gamma

    def normalized(self) -> "AnsatzParams":
        """Rescale a2, a3 so that |a2|^(2-2b2) |a3|^(2-2b3) = 1."""
        p = self.pair
        prod = abs(p.a2) ** (2 - 2 * p.beta2) * abs(p.a3) ** (2 - 2 * p.beta3)
        c = prod ** (-1.0 / (2 - 2 * p.gamma))
        return AnsatzParams(self.config, p.scaled(c), self.alpha0, self.quad, self.ball_radius, self.cusp)

    def field(self) -> FlatField:
        return flat_field(self.pair, self.quad)


@dataclass(frozen=True)
class PointFrame:
    z: complex
    w: complex
    r: float
    R: float
    rho: float
    s: float
    xi: complex | None


def frame(p: AnsatzParams, z, w) -> PointFrame:
    z, w = complex(z), complex(w)
    r = abs(z) ** p.beta1
    R = abs(w) ** p.gamma
    rho = math.hypot(r, R)
    s = math.inf if r == 0 else R * r ** (-p.alpha0)
    return PointFrame(z, w, r, R, rho, s, None if z == 0 else w / z)


def rho_of(p: AnsatzParams, z, w):
    return np.hypot(np.abs(z) ** p.beta1, np.abs(w) ** p.gamma)


def s_of(p: AnsatzParams, z, w):
    z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z == 0, np.inf, np.abs(w) ** p.gamma * np.abs(z) ** (-p.alpha0 * p.beta1))


# --------------------------------------------------------------------------
# Hermitian forms


@dataclass
class HermitianForm2:
    """g11 |dz|^2 + 2 Re(g12 dz dwbar) + g22 |dw|^2, arrays allowed."""

    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray

    @property
    def det(self):
        return self.g11 * self.g22 - np.abs(self.g12) ** 2

    def is_posdef(self):
        return (self.g11 > 0) & (self.det > 0)

    def matrix(self) -> np.ndarray:
        """(..., 2, 2) Hermitian matrices."""
        g11 = np.asarray(self.g11, dtype=complex)
        g12 = np.asarray(self.g12, dtype=complex)
        g22 = np.asarray(self.g22, dtype=complex)
        top = np.stack([g11, g12], axis=-1)
        bot = np.stack([np.conj(g12), g22], axis=-1)
        return np.stack([top, bot], axis=-2)

    def __getitem__(self, idx) -> "HermitianForm2":
        return HermitianForm2(np.asarray(self.g11)[idx], np.asarray(self.g12)[idx], np.asarray(self.g22)[idx])

    def norm(self, v):
        """g(v, v) for complex 2-vectors v[..., 2]."""
        v = np.asarray(v, dtype=complex)
        a, b = v[..., 0], v[..., 1]
        return np.real(self.g11 * np.abs(a) ** 2 + 2 * np.real(self.g12 * a * np.conj(b)) + self.g22 * np.abs(b) ** 2)

    def relative_eigenvalues(self, other: "HermitianForm2") -> np.ndarray:
        """Eigenvalues of other^{-1} self, shape (..., 2)."""
        a11, a12, a22 = self.g11, self.g12, self.g22
        b11, b12, b22 = other.g11, other.g12, other.g22
        bdet = b11 * b22 - np.abs(b12) ** 2
        # trace and determinant of B^{-1} A
        tr = (b22 * a11 + b11 * a22 - 2 * np.real(np.conj(b12) * a12)) / bdet
        dt = (a11 * a22 - np.abs(a12) ** 2) / bdet
        disc = np.sqrt(np.maximum(tr * tr / 4 - dt, 0.0))
        return np.stack([tr / 2 - disc, tr / 2 + disc], axis=-1)

    def distance_to(self, other: "HermitianForm2") -> np.ndarray:
        """|self - other|_other: largest |eigenvalue - 1| of other^{-1} self."""
        # eigenvalues of other^{-1} (self - other), formed without the 1 + O(d) cancellation
        d11, d12, d22 = self.g11 - other.g11, self.g12 - other.g12, self.g22 - other.g22
        b11, b12, b22 = other.g11, other.g12, other.g22
        bdet = b11 * b22 - np.abs(b12) ** 2
        tr = (b22 * d11 + b11 * d22 - 2 * np.real(np.conj(b12) * d12)) / bdet
        dt = (d11 * d22 - np.abs(d12) ** 2) / bdet
        disc = np.sqrt(np.maximum(tr * tr / 4 - dt, 0.0))
        return np.maximum(np.abs(tr / 2 - disc), np.abs(tr / 2 + disc))


def transform(form: HermitianForm2, J: np.ndarray) -> HermitianForm2:
    """Pull back by the holomorphic linear map with Jacobian J[..., 2, 2]: J^T G conj(J)."""
    G = form.matrix()
    M = np.einsum("...ki,...kl,...lj->...ij", J, G, np.conj(J))
    return HermitianForm2(M[..., 0, 0].real, M[..., 0, 1], M[..., 1, 1].real)


# --------------------------------------------------------------------------
# potential and metric


def _check_off_lines(p: AnsatzParams, z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    scale = np.maximum(np.abs(z), np.abs(w))
    on = (np.abs(z) <= LINE_TOL * scale) | (np.abs(w - p.pair.a2 * z) <= LINE_TOL * scale) | (
        np.abs(w - p.pair.a3 * z) <= LINE_TOL * scale)
    if np.any(on) or np.any(scale == 0):
        raise SingularPointError("metric requested on one of the conical lines")
    return z, w


def potential_psi(p: AnsatzParams, z, w):
    """The Kahler potential psi; continuous everywhere, psi(0, w) = |w|^(2 gamma)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    z, w = np.broadcast_arrays(z, w)
    b1, g = p.beta1, p.gamma
    out = np.abs(z) ** (2 * b1) + np.abs(w) ** (2 * g)
    s = s_of(p, z, w)
    cp = cutoff(s)
    act = cp.chi2 > 0
    if np.any(act):
        za, wa = z[act], w[act]
        xi = wa / za
        N, _, _ = p.field().correction_terms(xi)
        out[act] += cp.chi2[act] * np.abs(za) ** (2 * g) * N
    return out if out.size > 1 else float(out[0])


def _q_parts(p: AnsatzParams, z, w):
    """Q = |z|^2g phi(w/z) - |w|^2g with (z, w) gradient and complex Hessian.

    Far from the cone points (|xi| large) Q = |z|^2g N(xi) with N = phi - |xi|^2g,
    which avoids cancellation; close in, phi itself is used.
    """
    g = p.gamma
    F = p.field()
    xi = w / z
    az2g = np.abs(z) ** (2 * g)
    far = np.abs(xi) > F.near_radius
    n = z.size
    Q = np.empty(n)
    Qz = np.empty(n, dtype=complex)
    Qw = np.empty(n, dtype=complex)
    H11 = np.empty(n)
    H12 = np.empty(n, dtype=complex)
    H22 = np.empty(n)  # Hessian of |z|^2g N(xi) or |z|^2g phi(xi), without the |w|^2g part
    near = ~far
    for sel, kind in ((far, "corr"), (near, "phi")):
        if not np.any(sel):
            continue
        zs, xs, a = z[sel], xi[sel], az2g[sel]
        if kind == "corr":
            N, Nx, Nxx = F.correction_terms(xs)
        else:
            N, Nx, Nxx = F.phi_terms(xs)
        # Hessian in (z, xi)
        hzz = g * g * a / np.abs(zs) ** 2 * N
        hzx = g * a / zs * np.conj(Nx)
        hxx = a * Nxx
        # to (z, w): d xi = dw / z - xi dz / z
        jz, jw = -xs / zs, 1.0 / zs
        H11[sel] = hzz + 2 * np.real(hzx * np.conj(jz)) + np.abs(jz) ** 2 * hxx
        H12[sel] = hzx * np.conj(jw) + jz * hxx * np.conj(jw)
        H22[sel] = np.abs(jw) ** 2 * hxx
        Gz = g * a / zs * N
        Gx = a * Nx
        Qz[sel] = Gz + jz * Gx
        Qw[sel] = jw * Gx
        Q[sel] = a * N
        if kind == "phi":
            wa = w[sel]
            aw = np.abs(wa)
            Q[sel] -= aw ** (2 * g)
            with np.errstate(divide="ignore", invalid="ignore"):
                Qw[sel] -= np.where(aw > 0, g * aw ** (2 * g) / wa, 0.0)
    return Q, Qz, Qw, H11, H12, H22, far


def _metric_split(p: AnsatzParams, z, w):
    """omega = cone + perturbation: returns (c11, c22, p11, p12, p22).

    c11, c22 are the product-cone coefficients (c22 set to 0 on {w = 0}, where
    the perturbation carries all of g22).
    """
    b1, g, a0 = p.beta1, p.gamma, p.alpha0
    az, aw = np.abs(z), np.abs(w)
    c11 = b1 * b1 * az ** (2 * b1 - 2)
    with np.errstate(divide="ignore"):
        c22 = np.where(aw > 0, g * g * aw ** (2 * g - 2), 0.0)
    p11 = np.zeros(z.shape)
    p12 = np.zeros(z.shape, dtype=complex)
    p22 = np.zeros(z.shape)
    s = s_of(p, z, w)
    cp = cutoff(s)
    act = cp.chi2 > 0
    if np.any(act):
        za, wa = z[act], w[act]
        Q, Qz, Qw, H11, H12, H22, far = _q_parts(p, za, wa)
        c2 = cp.chi2[act]
        d1, d2 = -cp.d1[act], -cp.d2[act]  # derivatives of chi2
        sa = s[act]
        # near branch: H22 includes the |w|^2g part, which chi2 Q removes
        a22 = c2 * np.where(far, H22, H22 - c22[act])
        a11 = c2 * H11
        a12 = c2 * H12
        tr = (c2 < 1) & (sa > 0)
        if np.any(tr):
            # log s is pluriharmonic: s_a sbar_b / s is its Hessian
            sz = -0.5 * a0 * b1 * sa[tr] / za[tr]
            sw = 0.5 * g * sa[tr] / wa[tr]
            q, qz, qw = Q[tr], Qz[tr], Qw[tr]
            e1, e2 = d1[tr], d2[tr]
            k = q * (e2 + e1 / sa[tr])
            a11[tr] += 2 * e1 * np.real(sz * np.conj(qz)) + k * np.abs(sz) ** 2
            a12[tr] += e1 * (sz * np.conj(qw) + qz * np.conj(sw)) + k * sz * np.conj(sw)
            a22[tr] += 2 * e1 * np.real(sw * np.conj(qw)) + k * np.abs(sw) ** 2
        p11[act], p12[act], p22[act] = a11, a12, a22
    return c11, c22, p11, p12, p22


def metric(p: AnsatzParams, z, w) -> HermitianForm2:
    """Coefficients of omega = i ddbar psi in the coframe (dz, dw)."""
    z, w = _check_off_lines(p, np.atleast_1d(z), np.atleast_1d(w))
    z, w = np.broadcast_arrays(z, w)
    c11, c22, p11, p12, p22 = _metric_split(p, z.ravel(), w.ravel())
    return HermitianForm2(c11 + p11, p12, c22 + p22)


def cone_metric(p: AnsatzParams, z, w) -> HermitianForm2:
    """The product cone C_b1 x C_gamma."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    b1, g = p.beta1, p.gamma
    return HermitianForm2(b1 * b1 * np.abs(z) ** (2 * b1 - 2), np.zeros(np.broadcast(z, w).shape, dtype=complex),
                          g * g * np.abs(w) ** (2 * g - 2))


def hermitian_model(p: AnsatzParams, z, w) -> HermitianForm2:
    z, w = _check_off_lines(p, np.atleast_1d(z), np.atleast_1d(w))
    b1, g = p.beta1, p.gamma
    pr = p.pair
    g22 = g * g * np.abs(w - pr.a2 * z) ** (2 * pr.beta2 - 2) * np.abs(w - pr.a3 * z) ** (2 * pr.beta3 - 2)
    return HermitianForm2(b1 * b1 * np.abs(z) ** (2 * b1 - 2), np.zeros(g22.shape, dtype=complex), g22)


def warped_offdiagonal(p: AnsatzParams, z, xi):
    """|B| of the collision-region estimate, in coordinates (z, xi).

    B is the (eta1, eta2) component of ddbar(|z|^2g phi(xi)) against the
    warped coframe eta1 = b1 |z|^(b1-1) dz, eta2 = g |z|^g |xi-a2|^(b2-1)|xi-a3|^(b3-1) dxi.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    g, b1 = p.gamma, p.beta1
    _, dphi, dens = p.field().phi_terms(xi)
    az = np.abs(z)
    hzx = g * az ** (2 * g) / np.abs(z) * np.abs(dphi)
    return hzx / (b1 * az ** (b1 - 1) * az**g * np.sqrt(dens))


# --------------------------------------------------------------------------
# zones, CSV


def zone(p: AnsatzParams, z, w) -> np.ndarray:
    """'cone' where s > 2, 'collision' where s < 1, 'transition' between."""
    s = s_of(p, np.atleast_1d(z), np.atleast_1d(w))
    return np.where(s > 2, "cone", np.where(s < 1, "collision", "transition"))


ANSATZ_COLUMNS = ("z_re", "z_im", "w_re", "w_im", "region", "g11", "g12_re", "g12_im", "g22", "posdef")


def write_metric_csv(path, p: AnsatzParams, z, w) -> None:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    m = metric(p, z, w)
    zn = zone(p, z, w)
    pd = m.is_posdef()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(ANSATZ_COLUMNS)
        for i in range(z.size):
            wr.writerow([f"{z[i].real:.17g}", f"{z[i].imag:.17g}", f"{w[i].real:.17g}", f"{w[i].imag:.17g}", zn[i],
                         f"{m.g11[i]:.17g}", f"{m.g12[i].real:.17g}", f"{m.g12[i].imag:.17g}", f"{m.g22[i]:.17g}",
                         int(pd[i])])


# --------------------------------------------------------------------------
# cone-angle probes


_PROBE_RAD = 12
_PROBE_ANG = 24


def _circle_ratio(form_fn, base: np.ndarray, direction: np.ndarray, eps: float, beta: float = 1.0):
    """(length of the circle base + eps e^{i th} direction, mean radial distance) under form_fn."""
    th = 2 * np.pi * np.arange(_PROBE_ANG) / _PROBE_ANG
    e = np.exp(1j * th)
    pts = base[None, :] + eps * e[:, None] * direction[None, :]
    m = form_fn(pts[:, 0], pts[:, 1])
    tang = 1j * eps * e[:, None] * direction[None, :]
    length = np.mean(np.sqrt(m.norm(tang))) * 2 * np.pi
    # radial distance along each ray; r = eps u^(1/beta) absorbs the r^(beta-1) endpoint behaviour
    u, wu = leggauss(_PROBE_RAD)
    u = 0.5 * (u + 1)
    wu = 0.5 * wu
    q = 1.0 / beta
    r = eps * u**q
    dr = q * eps * u ** (q - 1) * wu
    P = base[None, None, :] + (r[None, :, None] * e[:, None, None]) * direction[None, None, :]
    mm = form_fn(P[..., 0].ravel(), P[..., 1].ravel())
    v = np.broadcast_to(e[:, None, None] * direction[None, None, :], P.shape).reshape(-1, 2)
    speed = np.sqrt(mm.norm(v)).reshape(P.shape[:2])
    radial = np.mean(speed @ dr)
    return length, radial


def transverse_probe(form_fn, base, direction, s: float, max_eps: float, beta: float = 1.0) -> float:
    """length / s for the transverse circle whose mean radial distance is s."""
    base = np.asarray(base, dtype=complex)
    direction = np.asarray(direction, dtype=complex)
    direction = direction / np.linalg.norm(direction)

    last = {}

    def gap(le):
        last["lr"] = _circle_ratio(form_fn, base, direction, math.exp(le), beta)
        return math.log(last["lr"][1] / s)

    hi = math.log(max_eps)
    g_hi = gap(hi)
    if g_hi < 0:
        raise ProbeError(f"radius {s} too large for the transverse disc of size {max_eps}")
    floor = math.log(1e-12 * max(float(np.max(np.abs(base))), max_eps))
    # radial distance ~ eps^beta, so Newton in log eps with slope beta converges in a few steps
    le, g = hi, g_hi
    for _ in range(40):
        if abs(g) < 1e-11:
            break
        le = min(hi, le - g / beta)
        if le < floor:
            raise ProbeError(f"radius {s} too small to resolve next to the base point")
        g = gap(le)
    else:
        raise ProbeError("transverse probe did not converge")
    length, radial = last["lr"]
    return length / radial


def cone_angle_probe(p: AnsatzParams, line, base, radius: float) -> float:
    """Circumference / radius of a small metric circle transverse to a line.

    ``line`` is 1, 2, 3 for L1, L2, L3 or "axis" for {w = 0}; ``base`` is the
    z coordinate of the base point (for L1 the w coordinate).  The result
    tends to 2 pi beta_line as radius -> 0.
    """
    pr = p.pair
    base = complex(base)
    if base == 0:
        raise ProbeError("base point must differ from the origin")
    if line == 1:
        pt, d = np.array([0j, base]), np.array([1.0, 0.0])
        clearance = abs(base) / max(abs(pr.a2), abs(pr.a3), 1.0)
    elif line in (2, 3, "axis"):
        a = {2: pr.a2, 3: pr.a3, "axis": 0j}[line]
        pt, d = np.array([base, a * base]), np.array([0.0, 1.0])
        others = [x for x in (0j, pr.a2, pr.a3) if x != a]
        clearance = min(abs(a - x) for x in others) * abs(base)
    else:
        raise ProbeError(f"unknown line {line!r}")
    beta = {1: p.beta1, 2: pr.beta2, 3: pr.beta3, "axis": 1.0}[line]
    return transverse_probe(lambda z, w: metric(p, z, w), pt, d, radius, 0.25 * clearance, beta)


# --------------------------------------------------------------------------
# branched covering for the cuspidal curve


def adapted_coordinates(p: AnsatzParams):
    """Linear map (X, Y) -> (z, w) = (Y, X + a2 Y) sending {X=0} to L2 and {Y=0} to L1."""
    a2 = p.pair.a2
    return np.array([[0.0, 1.0], [1.0, a2]], dtype=complex)  # columns: d/dX, d/dY in (z, w)


def cusp_pullback(p: AnsatzParams, u, v, m: int | None = None, n: int | None = None) -> HermitianForm2:
    """Pull back omega under (u, v) -> (X, Y) = (u^m, v^n) -> (z, w) = (Y, X + a2 Y).

    {X = 0} is L2 (angle 2 pi / m) and {Y = 0} is L1 (angle 2 pi / n), both
    unbranched by the covering; L3 pulls back to the cuspidal curve
    u^m = (a3 - a2) v^n.
    """
    if m is None or n is None:
        if p.cusp is None:
            raise DomainError("cusp exponents not given")
        m, n = p.cusp
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    u, v = np.broadcast_arrays(u, v)
    X, Y = u**m, v**n
    a2 = p.pair.a2
    z, w = Y, X + a2 * Y
    g = metric(p, z, w)
    dX = m * u ** (m - 1)
    dY = n * v ** (n - 1)
    J = np.zeros(u.shape + (2, 2), dtype=complex)  # rows (z, w), cols (u, v)
    J[..., 0, 1] = dY
    J[..., 1, 0] = dX
    J[..., 1, 1] = a2 * dY
    return transform(g, J)


def adapted_metric(p: AnsatzParams, X, Y) -> HermitianForm2:
    """omega in the coordinates (X, Y) of ``adapted_coordinates``."""
    X = np.atleast_1d(np.asarray(X, dtype=complex))
    Y = np.atleast_1d(np.asarray(Y, dtype=complex))
    J = np.broadcast_to(adapted_coordinates(p), np.broadcast(X, Y).shape + (2, 2))
    return transform(metric(p, Y, X + p.pair.a2 * Y), J)


def cusp_cone_angle_probe(p: AnsatzParams, v0: complex, radius: float, m: int | None = None,
                          n: int | None = None) -> float:
    """Transverse probe at a smooth point of the cuspidal curve u^m = (a3 - a2) v^n."""
    if m is None or n is None:
        m, n = p.cusp
    c = p.pair.a3 - p.pair.a2
    u0 = (c * complex(v0) ** n) ** (1.0 / m)
    clearance = abs(u0) * abs(1 - np.exp(2j * np.pi / m))
    return transverse_probe(lambda u, v: cusp_pullback(p, u, v, m, n), np.array([u0, complex(v0)]),
                            np.array([1.0, 0.0]), radius, 0.25 * clearance, p.config.betas[2])
