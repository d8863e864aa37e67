"""Homogeneous harmonic functions on products of flat cones.

A factor C_beta carries the metric beta^2 |z|^(2 beta - 2) |dz|^2, the
i ddbar of |z|^(2 beta); its distance to the apex is r = |z|^beta and the
developing map X = z^beta makes it flat.  Separated harmonic functions on
C_beta x C_gamma have the form

    z^j w^k P(|z|^(2 beta), |w|^(2 gamma))        (or with conj(w)^k)

with P homogeneous of degree m, and are homogeneous of degree
d = j/beta + k/gamma + 2m in the distance rho to the apex.  Every candidate
degree is checked by a finite-difference Laplacian in developed coordinates
before it is accepted.

Norms are the scale-invariant ones, ||f||_{B(0,R)} = (R^-4 int_{B_R} f^2)^(1/2),
computed with a midpoint rule in polar-product coordinates.  The rule for the
ball of radius R is the unit-ball rule scaled by R, so ratios of norms of a
homogeneous function are exact powers of R.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ansatz import AnsatzParams, metric, potential_psi, transform
from .errors import ConditioningError, DegenerateError, DomainError, NotModeledError
from .geometry import BAD, BallScaleReport, ModelCone, model_catalog

FD_TOL = 1e-8
_FD6 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])


def _is_one(x: float) -> bool:
    return abs(x - 1.0) < 1e-12


# --------------------------------------------------------------------------
# separated functions


def _radial_coefficients(a: float, b: float, m: int) -> np.ndarray:
    """Coefficients c_n of P = sum c_n r1^(2n) r2^(2(m-n)) making the product harmonic."""
    c = np.zeros(m + 1)
    c[0] = 1.0
    for n in range(m):
        c[n + 1] = -c[n] * (m - n) * (m - n + b) / ((n + 1) * (n + 1 + a))
    return c


def separated(c: ModelCone, j: int, k: int, m: int, part: str = "re", conj_w: bool = False,
              degree: float | None = None) -> Callable:
    """The separated function with generator (j, k, m) as a function of (z, w).

    With ``degree`` given, the function is multiplied by rho^(degree - d0),
    d0 = j/beta + k/gamma + 2m; it is then harmonic only if degree == d0.
    """
    beta, gamma = c.angles
    a, b = j / beta, k / gamma
    coef = _radial_coefficients(a, b, m)
    shift = 0.0 if degree is None else degree - (a + b + 2 * m)

    def f(z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        r1 = np.abs(z) ** (2 * beta)
        r2 = np.abs(w) ** (2 * gamma)
        P = sum(cn * r1**n * r2 ** (m - n) for n, cn in enumerate(coef))
        ang = z**j * (np.conj(w) if conj_w else w) ** k
        u = ang * P
        if shift:
            u = u * (r1 + r2) ** (0.5 * shift)
        return u.real if part == "re" else u.imag

    return f


def _developed_points(c: ModelCone, n: int, seed: int):
    """Generic points in developed coordinates, clear of the seams by the stencil width."""
    rng = np.random.default_rng(seed)
    pts = []
    for beta in c.angles:
        r = rng.uniform(0.5, 1.0, n)
        half = math.pi * beta - 0.25
        pts.append(r * np.exp(1j * rng.uniform(-half, half, n)))
    return pts[0], pts[1]


def _from_developed(c: ModelCone, X, Y):
    beta, gamma = c.angles
    z = np.abs(X) ** (1 / beta) * np.exp(1j * np.angle(X) / beta)
    w = np.abs(Y) ** (1 / gamma) * np.exp(1j * np.angle(Y) / gamma)
    return z, w


def fd_laplacian(c: ModelCone, f: Callable, X, Y, h: float = 1e-2) -> np.ndarray:
    """Sixth-order finite-difference Laplacian of f in developed coordinates (X, Y)."""
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    out = np.zeros(X.shape)
    for e in ((1, 0), (1j, 0), (0, 1), (0, 1j)):
        for s, cf in zip(range(-3, 4), _FD6):
            z, w = _from_developed(c, X + s * h * e[0], Y + s * h * e[1])
            out += cf * f(z, w)
    return out / h**2


def harmonic_residual(c: ModelCone, f: Callable, n: int = 20, seed: int = 0) -> float:
    """max |Delta f| / max |f| over n generic points at distance 1/2 to 1 from the apex."""
    X, Y = _developed_points(c, n, seed)
    z, w = _from_developed(c, X, Y)
    scale = np.max(np.abs(f(z, w)))
    if scale == 0:
        return math.inf
    return float(np.max(np.abs(fd_laplacian(c, f, X, Y))) / scale)


def _variants(j: int, k: int):
    conj = (False, True) if j and k else (False,)
    parts = ("re", "im") if j or k else ("re",)
    return [(p, cw) for cw in conj for p in parts]


# --------------------------------------------------------------------------
# indicial roots


@dataclass(frozen=True)
class IndicialSet:
    """Verified non-negative indicial roots d (d(d+2) a link eigenvalue) up to cap."""

    cone: ModelCone
    cap: float
    roots: tuple
    labels: tuple  # per root, the generators (j, k, m)
    rejected: tuple = ()  # (j, k, m, degree, residual) of candidates failing the check

    @property
    def eigenvalues(self) -> np.ndarray:
        d = np.array(self.roots)
        return d * (d + 2)

    def negative(self) -> np.ndarray:
        """The roots d_- = -2 - d_+ of the same eigenvalues."""
        return -2.0 - np.array(self.roots)

    def contains(self, d: float, tol: float = 1e-9) -> bool:
        return any(abs(r - d) <= tol for r in self.roots)

    def next_above(self, d: float, tol: float = 1e-12) -> float:
        above = [r for r in self.roots if r > d + tol]
        if not above:
            raise DomainError(f"no root above {d} below the cap {self.cap}")
        return min(above)

    def in_interval(self, lo: float, hi: float, tol: float = 1e-9) -> list:
        """Roots in the open interval (lo, hi), shrunk by tol at both ends."""
        return [r for r in self.roots if lo + tol < r < hi - tol]

    def to_dict(self) -> dict:
        return {
            "cone": self.cone.tag,
            "angles": list(self.cone.angles),
            "cap": self.cap,
            "roots": list(self.roots),
            "eigenvalues": self.eigenvalues.tolist(),
            "labels": [[list(g) for g in lab] for lab in self.labels],
            "rejected": [list(r) for r in self.rejected],
        }


def _candidates(c: ModelCone, cap: float):
    beta, gamma = c.angles
    out = []
    for j in range(int(math.floor(cap * beta + 1e-9)) + 1):
        for k in range(int(math.floor(cap * gamma + 1e-9)) + 1):
            for m in range(int(math.floor(cap / 2 + 1e-9)) + 1):
                d = j / beta + k / gamma + 2 * m
                if d <= cap + 1e-9:
                    out.append((j, k, m, d))
    return out


def verify_generator(c: ModelCone, j: int, k: int, m: int, degree: float | None = None,
                     n: int = 20, seed: int = 0) -> float:
    """Largest normalised FD Laplacian over the real variants of a generator."""
    return max(harmonic_residual(c, separated(c, j, k, m, p, cw, degree), n, seed)
               for p, cw in _variants(j, k))


def indicial_roots(c: ModelCone, cap: float, extra_candidates: Sequence = (), n: int = 20,
                   seed: int = 0) -> IndicialSet:
    """Indicial roots in [0, cap], each backed by a verified separated harmonic.

    ``extra_candidates`` are (j, k, m, degree) tuples checked alongside the
    enumerated ones; those that fail are reported in ``rejected``.
    """
    if not cap > 0:
        raise DomainError("cap must be positive")
    found: dict[float, list] = {}
    rejected = []
    for j, k, m, d in list(_candidates(c, cap)) + [tuple(x) for x in extra_candidates]:
        if d > cap + 1e-9:
            continue
        res = verify_generator(c, j, k, m, d, n, seed)
        if res < FD_TOL:
            key = next((r for r in found if abs(r - d) < 1e-9), d)
            found.setdefault(key, []).append((j, k, m))
        else:
            rejected.append((j, k, m, d, res))
    roots = sorted(found)
    return IndicialSet(c, float(cap), tuple(roots), tuple(tuple(found[r]) for r in roots), tuple(rejected))


def schauder_gap(p: AnsatzParams, cap: float = 4.0) -> dict:
    """Smallest root above 2 for each model cone, and whether (2, 1 + 1/beta3) is root free."""
    hi = 1.0 + 1.0 / p.config.betas[2]
    out = {}
    for tag, c in model_catalog(p).items():
        ind = indicial_roots(c, cap)
        out[tag] = (ind.next_above(2.0), not ind.in_interval(2.0, hi))
    return out


# --------------------------------------------------------------------------
# subquadratic harmonics


@dataclass(frozen=True)
class HarmonicTerm:
    name: str
    degree: float
    fn: Callable
    ddbar: Callable | None = None  # complex Hessian in model coordinates, (..., 2, 2)


def _linear_terms(c: ModelCone) -> list[HarmonicTerm]:
    """Pluriharmonic members of the subquadratic space."""
    beta, gamma = c.angles
    terms = [HarmonicTerm("1", 0.0, lambda z, w: np.ones(np.broadcast(z, w).shape))]

    def add(name, deg, g):
        terms.append(HarmonicTerm("Re " + name, deg, lambda z, w: np.real(g(z, w))))
        terms.append(HarmonicTerm("Im " + name, deg, lambda z, w: np.imag(g(z, w))))

    if beta >= 0.5:
        add("z", 1 / beta, lambda z, w: np.asarray(z, dtype=complex))
    if _is_one(beta):
        add("z^2", 2.0, lambda z, w: np.asarray(z, dtype=complex) ** 2)
    if gamma >= 0.5:
        add("w", 1 / gamma, lambda z, w: np.asarray(w, dtype=complex) + 0 * z)
    if _is_one(gamma):
        add("w^2", 2.0, lambda z, w: np.asarray(w, dtype=complex) ** 2 + 0 * z)
    if _is_one(beta) and _is_one(gamma):
        add("z w", 2.0, lambda z, w: np.asarray(z, dtype=complex) * w)
    return terms


def _mixed_terms() -> list[HarmonicTerm]:
    """Re, Im of z conj(w), harmonic on C^2 but not pluriharmonic."""
    def h_re(z, w):
        H = np.zeros(np.broadcast(z, w).shape + (2, 2), dtype=complex)
        H[..., 0, 1] = H[..., 1, 0] = 0.5
        return H

    def h_im(z, w):
        H = np.zeros(np.broadcast(z, w).shape + (2, 2), dtype=complex)
        H[..., 0, 1], H[..., 1, 0] = -0.5j, 0.5j
        return H

    return [HarmonicTerm("Re z conj(w)", 2.0, lambda z, w: np.real(z * np.conj(w)), h_re),
            HarmonicTerm("Im z conj(w)", 2.0, lambda z, w: np.imag(z * np.conj(w)), h_im)]


@dataclass(frozen=True)
class SubquadraticBasis:
    cone: ModelCone
    terms: tuple

    @property
    def dimension(self) -> int:
        return len(self.terms)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def degrees(self) -> list[float]:
        return [t.degree for t in self.terms]

    def evaluate(self, z, w) -> np.ndarray:
        return np.stack([np.broadcast_to(t.fn(z, w), np.broadcast(z, w).shape) for t in self.terms])

    def to_dict(self) -> dict:
        return {"cone": self.cone.tag, "angles": list(self.cone.angles), "dimension": self.dimension,
                "functions": [{"name": t.name, "degree": t.degree} for t in self.terms]}


def subquadratic_basis(c: ModelCone) -> SubquadraticBasis:
    """Homogeneous harmonic functions of degree at most 2 on the cone."""
    beta, gamma = c.angles
    terms = _linear_terms(c)
    if _is_one(beta) and _is_one(gamma):
        terms += _mixed_terms()
    quad = HarmonicTerm("|z|^2b - |w|^2g", 2.0,
                        lambda z, w: np.abs(z) ** (2 * beta) - np.abs(w) ** (2 * gamma))
    return SubquadraticBasis(c, tuple(terms + [quad]))


# --------------------------------------------------------------------------
# quadrature and norms


@dataclass(frozen=True)
class ConeQuadrature:
    """Midpoint rule on B(0, R) in coordinates (rho, t, theta1, theta2).

    r1 = rho cos t, r2 = rho sin t are the factor radii, theta_i the angles of
    z and w; the volume element is beta gamma rho^3 cos t sin t.
    """

    cone: ModelCone
    n_rho: int = 32
    n_t: int = 32
    n_theta: int = 16

    def nodes(self, radius: float = 1.0):
        beta, gamma = self.cone.angles
        rho = (np.arange(self.n_rho) + 0.5) / self.n_rho
        t = (np.arange(self.n_t) + 0.5) * (0.5 * np.pi / self.n_t)
        th = (np.arange(self.n_theta) + 0.5) * (2 * np.pi / self.n_theta)
        R, T, A, B = np.meshgrid(rho, t, th, th, indexing="ij")
        wgt = beta * gamma * R**3 * np.cos(T) * np.sin(T)
        wgt *= (1.0 / self.n_rho) * (0.5 * np.pi / self.n_t) * (2 * np.pi / self.n_theta) ** 2
        R = radius * R
        z = (R * np.cos(T)) ** (1 / beta) * np.exp(1j * A)
        w = (R * np.sin(T)) ** (1 / gamma) * np.exp(1j * B)
        return z.ravel(), w.ravel(), radius**4 * wgt.ravel()

    def refined(self) -> "ConeQuadrature":
        return ConeQuadrature(self.cone, 2 * self.n_rho, 2 * self.n_t, 2 * self.n_theta)


def _norm_sq(values, weights, radius):
    return float(np.sum(weights * np.asarray(values) ** 2)) / radius**4


def ball_norm(c: ModelCone, f: Callable, radius: float = 1.0, quad: ConeQuadrature | None = None) -> float:
    q = quad or ConeQuadrature(c)
    z, w, wt = q.nodes(radius)
    return math.sqrt(_norm_sq(f(z, w), wt, radius))


def contraction_ratio(c: ModelCone, f, lam: float, quad: ConeQuadrature | None = None) -> float:
    """||f||_{B(0, lam)} / ||f||_{B(0, 1)} with scale-invariant norms.

    f is a callable of (z, w), or a pair (values on quad.nodes(1), values on
    quad.nodes(lam)).
    """
    if not 0 < lam < 1:
        raise DomainError("lam must lie in (0, 1)")
    q = quad or ConeQuadrature(c)
    z1, w1, wt1 = q.nodes(1.0)
    zl, wl, wtl = q.nodes(lam)
    if callable(f):
        v1, vl = f(z1, w1), f(zl, wl)
    else:
        v1, vl = f
    n1 = _norm_sq(v1, wt1, 1.0)
    if not n1 > 0:
        raise DegenerateError("f vanishes on the unit ball")
    return math.sqrt(_norm_sq(vl, wtl, lam) / n1)


@dataclass
class Projection:
    coefficients: np.ndarray
    residual: float  # scale-invariant norm of the orthogonal remainder
    remainder: np.ndarray  # remainder sampled on the quadrature nodes
    condition: float


def gram_matrix(basis, quad: ConeQuadrature, radius: float = 1.0) -> np.ndarray:
    z, w, wt = quad.nodes(radius)
    F = basis.evaluate(z, w)
    return (F * wt) @ F.T / radius**4


def l2_project(f, basis, quad: ConeQuadrature | None = None, radius: float = 1.0,
               max_condition: float = 1e10) -> Projection:
    """L2 projection of f onto span(basis) on B(0, radius) by the normal equations."""
    q = quad or ConeQuadrature(basis.cone)
    z, w, wt = q.nodes(radius)
    F = basis.evaluate(z, w)
    v = f(z, w) if callable(f) else np.asarray(f, dtype=float)
    G = (F * wt) @ F.T
    cond = float(np.linalg.cond(G))
    if not cond <= max_condition:
        raise ConditioningError(f"Gram matrix condition number {cond:.3g} exceeds {max_condition:.0e}")
    coef = np.linalg.solve(G, (F * wt) @ v)
    rem = v - coef @ F
    return Projection(coef, math.sqrt(_norm_sq(rem, wt, radius)), rem, cond)


def span_distance(A: np.ndarray, B: np.ndarray, weights: np.ndarray) -> float:
    """Sine of the largest principal angle between the row spans of A and B in L2(weights)."""
    s = np.sqrt(weights)
    Qa, _ = np.linalg.qr((A * s).T)
    Qb, _ = np.linalg.qr((B * s).T)
    P = Qa - Qb @ (Qb.conj().T @ Qa)
    return float(np.linalg.norm(P, 2))


# --------------------------------------------------------------------------
# contraction of functions with roots above 2


def high_mode_combination(c: ModelCone, lo: float, cap: float, seed: int = 0):
    """A random combination of verified separated harmonics with degrees in (lo, cap]."""
    ind = indicial_roots(c, cap)
    rng = np.random.default_rng(seed)
    fs = []
    for d, labels in zip(ind.roots, ind.labels):
        if d <= lo + 1e-12:
            continue
        for j, k, m in labels:
            for part, cw in _variants(j, k):
                fs.append((rng.normal(), separated(c, j, k, m, part, cw)))
    if not fs:
        raise DomainError(f"no roots in ({lo}, {cap}]")

    def f(z, w):
        return sum(a * g(z, w) for a, g in fs)

    return f


def epsilon_monotonicity(c: ModelCone, lam: float, alpha: float, trials: int = 4, cap: float = 4.5,
                         quad: ConeQuadrature | None = None) -> float:
    """Largest contraction ratio / lam^(2 + alpha) over random high-mode combinations."""
    q = quad or ConeQuadrature(c)
    worst = 0.0
    for s in range(trials):
        f = high_mode_combination(c, 2.0, cap, seed=s)
        worst = max(worst, contraction_ratio(c, f, lam, q) / lam ** (2 + alpha))
    return worst


# --------------------------------------------------------------------------
# reference functions on balls of (C^2, omega)


def _line_frame(p: AnsatzParams, verdict: str, z0: complex, w0: complex):
    """(transverse form, tangent form, apex) for balls near a line."""
    pr = p.pair
    if verdict == "Cb1xC":
        return np.array([1, 0], complex), np.array([0, 1], complex), (0j, w0)
    if verdict == "CgxC":
        return np.array([0, 1], complex), np.array([1, 0], complex), (z0, 0j)
    a = pr.a2 if verdict == "Cb2xC" else pr.a3
    return np.array([-a, 1], complex), np.array([1, 0], complex), (z0, a * z0)


def _hess_modulus_power(row: np.ndarray, beta: float, y: np.ndarray) -> np.ndarray:
    """Complex Hessian of |row . y|^(2 beta)."""
    ell = row @ y
    return beta**2 * abs(ell) ** (2 * beta - 2) * np.outer(row, np.conj(row))


def _fd_gradient_psi(p: AnsatzParams, y0, direction, h):
    """d/dt of psi(y0 + t direction) at 0, complex-linear part (the holomorphic derivative)."""
    y0 = np.asarray(y0, complex)
    d = np.asarray(direction, complex)

    def at(e):
        q = y0 + e * d
        return potential_psi(p, q[0], q[1])

    dx = (at(h) - at(-h)) / (2 * h)
    dy = (at(1j * h) - at(-1j * h)) / (2 * h)
    return 0.5 * (dx - 1j * dy)


@dataclass
class ReferenceBasis:
    """Reference functions on a ball, written in model coordinates of its cone.

    The model coordinates are y_tilde = M (y - apex).  ``psi_t`` is the
    rescaled potential with its affine part at the apex removed; the
    quadratic member is 2 |z_tilde|^(2 beta) - psi_t.  Each member P carries
    the correction P - (Delta P(x) / Delta psi_t) psi_t, with Delta psi_t = 8.
    """

    params: AnsatzParams
    ball: BallScaleReport
    cone: ModelCone
    apex: np.ndarray
    M: np.ndarray
    scale: float
    grad: np.ndarray  # holomorphic gradient of the affine part removed from psi_t
    terms: tuple
    correction: np.ndarray = field(default=None)
    epsilon: float = 0.0

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def dimension(self) -> int:
        return len(self.terms)

    def to_original(self, zt, wt):
        Minv = np.linalg.inv(self.M)
        zt = np.asarray(zt, complex)
        wt = np.asarray(wt, complex)
        z = self.apex[0] + Minv[0, 0] * zt + Minv[0, 1] * wt
        w = self.apex[1] + Minv[1, 0] * zt + Minv[1, 1] * wt
        return z, w

    def to_model(self, z, w):
        dz = np.asarray(z, complex) - self.apex[0]
        dw = np.asarray(w, complex) - self.apex[1]
        return self.M[0, 0] * dz + self.M[0, 1] * dw, self.M[1, 0] * dz + self.M[1, 1] * dw

    def psi_t(self, zt, wt) -> np.ndarray:
        z, w = self.to_original(zt, wt)
        psi0 = potential_psi(self.params, self.apex[0], self.apex[1])
        dy = np.stack([np.asarray(z) - self.apex[0], np.asarray(w) - self.apex[1]], axis=-1)
        lin = 2 * np.real(dy @ self.grad)
        return (np.asarray(potential_psi(self.params, z, w)) - psi0 - lin) / self.scale**2

    def _raw(self, zt, wt) -> np.ndarray:
        beta = self.cone.angles[0]
        shape = np.broadcast(zt, wt).shape
        rows = []
        for t in self.terms[:-1]:
            rows.append(np.broadcast_to(t.fn(zt, wt), shape))
        rows.append(2 * np.abs(zt) ** (2 * beta) - self.psi_t(zt, wt))
        return np.stack(rows)

    @property
    def roundoff(self) -> float:
        """Rounding error of psi_t, which is differenced at the apex and divided by scale^2."""
        psi0 = abs(potential_psi(self.params, self.apex[0], self.apex[1]))
        return float(np.finfo(float).eps * max(psi0, 1e-300) / self.scale**2)

    def evaluate(self, zt, wt, corrected: bool = True) -> np.ndarray:
        """Members at model coordinates (zt, wt), shape (dimension, N)."""
        raw = self._raw(zt, wt)
        if not corrected or self.correction is None or not np.any(self.correction):
            return raw
        return raw - self.correction[:, None] * self.psi_t(zt, wt)[None, :]

    def evaluate_original(self, z, w, corrected: bool = True) -> np.ndarray:
        return self.evaluate(*self.to_model(z, w), corrected=corrected)


def _centre_off_lines(p: AnsatzParams, z: complex, w: complex, t: float):
    """The ball centre, nudged off the conical set by 1e-6 of the ball scale when needed."""
    pr = p.pair
    on = (z == 0) or (w == pr.a2 * z) or (w == pr.a3 * z)
    if not on:
        return z, w
    nudge = 1e-6 * np.exp(0.7j)
    return z + nudge * t ** (1 / p.beta1), w + nudge * t ** (1 / p.gamma)


def _laplacian_at(p: AnsatzParams, basis: ReferenceBasis, x) -> np.ndarray:
    """Laplacian of the uncorrected members at x for the ball metric omega / scale^2."""
    z, w = x
    G = metric(p, z, w).matrix()[0]
    Gi = np.linalg.inv(G)
    M = basis.M
    y = np.array([z - basis.apex[0], w - basis.apex[1]])
    zt, wt = M @ y
    beta = basis.cone.angles[0]
    out = np.zeros(basis.dimension)
    for i, t in enumerate(basis.terms[:-1]):
        if t.ddbar is not None:
            Ht = t.ddbar(zt, wt)  # in model coordinates; pull back by M
            H = M.T @ Ht @ np.conj(M)
            out[i] = 4 * np.real(np.trace(Gi @ H)) * basis.scale**2
    # 2 |z_t|^(2 beta) - psi_t: Delta psi_t = 8 exactly
    H = 2 * _hess_modulus_power(M[0], beta, y)
    out[-1] = 4 * np.real(np.trace(Gi @ H)) * basis.scale**2 - 8.0
    return out


def reference_basis(p: AnsatzParams, ball: BallScaleReport) -> ReferenceBasis:
    """Reference functions for a ball classified as close to a model cone."""
    if ball.verdict == BAD:
        raise NotModeledError(f"ball at {ball.point}, k={ball.k} is not close to a model cone")
    cone = model_catalog(p)[ball.verdict]
    z0, w0 = complex(ball.point[0]), complex(ball.point[1])
    t = ball.lam**ball.k
    beta, tau = cone.angles
    grad = np.zeros(2, complex)
    if ball.verdict == "Cb1xCg":
        apex = np.array([0j, 0j])
        M = np.diag([t ** (-1 / p.beta1), t ** (-1 / p.gamma)]).astype(complex)
    elif ball.verdict == "C2":
        apex = np.array([z0, w0])
        G = metric(p, z0, w0).matrix()[0]
        C = np.linalg.cholesky(G)  # G = C C^*, so v^T G conj(v) = |C^T v|^2
        M = C.T / t
        h = 1e-6 * t
        grad = np.array([_fd_gradient_psi(p, apex, [1, 0], h), _fd_gradient_psi(p, apex, [0, 1], h)])
    else:
        nrow, trow, apex = _line_frame(p, ball.verdict, z0, w0)
        apex = np.array(apex, complex)
        J = np.linalg.inv(np.array([trow, nrow]))  # columns: d y / d(T, zeta)
        # transverse and tangent coefficients, probed at cone distance t/2 from the apex
        zeta = (0.5 * t) ** (1 / beta) * np.exp(0.3j)
        probe = apex + J[:, 1] * zeta
        H = transform(metric(p, probe[0], probe[1]), J[None]).matrix()[0]
        cN = np.real(H[1, 1]) / abs(zeta) ** (2 * beta - 2)
        cT = np.real(H[0, 0] - abs(H[0, 1]) ** 2 / H[1, 1])
        M = np.array([(cN / beta**2) ** (1 / (2 * beta)) * t ** (-1 / beta) * nrow,
                      math.sqrt(cT) / t * trow])
        h = 1e-6 * max(abs(apex[0]), abs(apex[1]))
        grad = _fd_gradient_psi(p, apex, J[:, 0], h) * trow
    basis = ReferenceBasis(p, ball, cone, apex, M, t, grad, subquadratic_basis(cone).terms,
                           epsilon=ball.epsilon)
    x = _centre_off_lines(p, z0, w0, t)
    basis.correction = _laplacian_at(p, basis, x) / 8.0
    return basis


# --------------------------------------------------------------------------
# outputs

RATIO_COLUMNS = ("cone", "function", "degree", "lam", "ratio", "expected")


def roots_to_json(sets: Sequence[IndicialSet], bases: Sequence[SubquadraticBasis]) -> str:
    doc = {s.cone.tag: {"indicial": s.to_dict()} for s in sets}
    for b in bases:
        doc.setdefault(b.cone.tag, {})["subquadratic"] = b.to_dict()
    return json.dumps(doc, indent=2, sort_keys=True)


def ratio_sweep(c: ModelCone, lams: Sequence[float], quad: ConeQuadrature | None = None) -> list[tuple]:
    """Contraction ratios of every non-constant subquadratic harmonic over lams."""
    q = quad or ConeQuadrature(c)
    rows = []
    for t in subquadratic_basis(c).terms:
        for lam in lams:
            rows.append((c.tag, t.name, t.degree, float(lam), contraction_ratio(c, t.fn, lam, q),
                         float(lam) ** t.degree))
    return rows


def write_ratio_csv(path, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(RATIO_COLUMNS)
        for r in rows:
            wr.writerow([r[0], r[1], repr(float(r[2])), repr(float(r[3])), repr(float(r[4])), repr(float(r[5]))])
