"""Model cones, dilations, cone distances and metric comparisons.

Points of C^2 are pairs (z, w).  Cone coordinates of a factor C_beta are
(r, theta) with r = |z|^beta; the developing map sends a point to
r exp(i beta theta) in a plane, where geodesics are straight.  Distances for
perturbed metrics are computed by shortening piecewise-geodesic paths: each
segment is a geodesic of the product cone, so the product cone itself is
reproduced exactly and only the perturbation is discretised.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .ansatz import AnsatzParams, HermitianForm2, cutoff, hermitian_model, metric, rho_of, s_of
from .errors import ConfigError, DomainError, GridError, NonPositiveMetricError
from .flatcone import ConePair, DistanceGraph, GridSpec, density, distance_graph, line_element_integral
from .ricci import DecayFit, fit_decay

# --------------------------------------------------------------------------
# model cones

MODEL_TAGS = ("C2", "Cb1xCg", "Cb1xC", "Cb2xC", "Cb3xC", "CgxC")
BAD = "Bad"


@dataclass(frozen=True)
class ModelCone:
    """Product of two flat cones with angles 2 pi * angles[i]."""

    tag: str
    angles: tuple

    def __post_init__(self):
        if self.tag not in MODEL_TAGS:
            raise DomainError(f"unknown model cone {self.tag!r}")
        a, b = self.angles
        if not (0 < a <= 1 and 0 < b <= 1):
            raise DomainError(f"cone angles {self.angles} not in (0, 1]")

    def distance(self, p, q):
        return cone_distance(self, p, q)


def model_catalog(p: AnsatzParams) -> dict[str, ModelCone]:
    b1, b2, b3 = p.config.betas
    g = p.gamma
    spec = {"C2": (1.0, 1.0), "Cb1xCg": (b1, g), "Cb1xC": (b1, 1.0), "Cb2xC": (b2, 1.0),
            "Cb3xC": (b3, 1.0), "CgxC": (g, 1.0)}
    return {k: ModelCone(k, v) for k, v in spec.items()}


def factor_distance(beta: float, z1, z2):
    """Distance on C_beta = (C, beta^2 |z|^(2 beta - 2) |dz|^2)."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    r1, r2 = np.abs(z1) ** beta, np.abs(z2) ** beta
    dth = np.abs(np.angle(z2 * np.conj(z1)))  # in [0, pi]
    ang = beta * dth
    chord = np.sqrt((r1 - r2) ** 2 + 4 * r1 * r2 * np.sin(0.5 * ang) ** 2)
    return np.where(ang <= np.pi, chord, r1 + r2)


def cone_distance(c: ModelCone, p, q):
    """Distance on a product of two cones; p, q are (z, w) pairs or arrays (..., 2)."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    d1 = factor_distance(c.angles[0], p[..., 0], q[..., 0])
    d2 = factor_distance(c.angles[1], p[..., 1], q[..., 1])
    out = np.hypot(d1, d2)
    return float(out) if out.ndim == 0 else out


def factor_graph(beta: float, half_width: float, h: float, radius: int = 3) -> DistanceGraph:
    """Lattice graph for beta^2 |z|^(2 beta - 2) |dz|^2 on a centred square."""
    grid = GridSpec(-half_width, half_width, -half_width, half_width, h, radius=radius)
    return DistanceGraph(lambda t: beta * beta * np.abs(t) ** (2 * beta - 2), grid, [0j], [beta])


# --------------------------------------------------------------------------
# dilations


@dataclass(frozen=True)
class Dilation:
    """D(z, w) = (lam^(1/b1) z, lam^(1/g) w), so that rho o D = lam rho."""

    lam: float
    beta1: float
    gamma: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("dilation factor must be positive")

    @classmethod
    def of(cls, p: AnsatzParams, lam: float) -> "Dilation":
        return cls(float(lam), p.beta1, p.gamma)

    @property
    def factors(self) -> tuple[float, float]:
        return self.lam ** (1 / self.beta1), self.lam ** (1 / self.gamma)

    def __call__(self, z, w):
        a, b = self.factors
        return a * np.asarray(z), b * np.asarray(w)

    def pull_form(self, form: HermitianForm2) -> HermitianForm2:
        """lam^-2 D^* of a form evaluated at D(x)."""
        a, b = self.factors
        l2 = self.lam**-2
        return HermitianForm2(l2 * a * a * form.g11, l2 * a * b * form.g12, l2 * b * b * form.g22)


# --------------------------------------------------------------------------
# piecewise geodesic paths


def _gl01(n: int):
    x, w = leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def _factor_segments(r, th, beta: float, t):
    """Points, velocities and cone lengths of the geodesic segments of one factor.

    r, th: (..., N+1) node coordinates; t: (Q,) parameters in (0, 1).
    Returns z (..., N, Q), dz/dt (..., N, Q) and cone lengths (..., N).
    """
    ra, rb = r[..., :-1, None], r[..., 1:, None]
    ta, tb = th[..., :-1, None], th[..., 1:, None]
    d = beta * (tb - ta)
    apex = np.abs(d) >= np.pi
    Xb = rb * np.exp(1j * np.where(apex, 0.0, d))
    step = Xb - ra
    X = ra + t * step
    length = np.where(apex[..., 0], (ra + rb)[..., 0], np.abs(step[..., 0]))
    vel = step
    phase = ta
    if np.any(apex):
        L = ra + rb
        s = t * L
        first = s < ra
        Xa = np.where(first, ra - s, s - ra)
        X = np.where(apex, Xa, X)
        vel = np.where(apex, np.where(first, -L, L), vel)
        phase = np.where(apex & ~first, tb, ta)
    X = np.where(X == 0, 1e-300, X)
    e = np.exp(1j * phase)
    lx = np.log(X)
    z = e * np.exp(lx / beta)
    dz = e * (vel / beta) * np.exp((1 / beta - 1) * lx)
    return z, dz, length


def _cone_coords(beta: float, z):
    z = np.asarray(z, dtype=complex)
    return np.abs(z) ** beta, np.angle(z)


def _geodesic_nodes(betas, P, Q, t):
    """Nodes (r, th) at parameters t along product-cone geodesics P[i] -> Q[i].

    P, Q: (M, F) complex; returns r, th of shape (M, len(t), F).
    """
    M, F = P.shape
    r = np.empty((M, t.size, F))
    th = np.empty((M, t.size, F))
    for f, b in enumerate(betas):
        ra, ta = _cone_coords(b, P[:, f])
        rb, tb = _cone_coords(b, Q[:, f])
        dth = np.angle(np.exp(1j * (tb - ta)))
        ta = np.where(ra == 0, tb, ta)
        dth = np.where((ra == 0) | (rb == 0), 0.0, dth)
        d = b * dth
        apex = np.abs(d) >= np.pi
        Xb = rb * np.exp(1j * np.where(apex, 0.0, d))
        X = ra[:, None] + t[None, :] * (Xb - ra)[:, None]
        rr = np.abs(X)
        tt = ta[:, None] + np.angle(X) / b
        if np.any(apex):
            L = (ra + rb)[:, None]
            s = t[None, :] * L
            first = s < ra[:, None]
            rr = np.where(apex[:, None], np.abs(s - ra[:, None]), rr)
            tt = np.where(apex[:, None], np.where(first, ta[:, None], (ta + dth)[:, None]), tt)
        tt[:, -1] = ta + dth
        rr[:, 0], rr[:, -1] = ra, rb
        r[:, :, f], th[:, :, f] = rr, tt
    return r, th


def _graded_parameters(cone_r, monitor_scale, n_seg: int, uniform_share: float = 0.5):
    """Node parameters in [0, 1] equidistributing 1 + c / (R(t) + sigma(t))."""
    fine = np.linspace(0.0, 1.0, cone_r.shape[-1])
    m = 1.0 / (cone_r + monitor_scale)
    m = m / np.trapezoid(m, fine, axis=-1)[..., None]
    dens = uniform_share + (1 - uniform_share) * m
    cum = np.concatenate([np.zeros(dens.shape[:-1] + (1,)),
                          np.cumsum(0.5 * (dens[..., 1:] + dens[..., :-1]) * np.diff(fine), axis=-1)], axis=-1)
    cum /= cum[..., -1:]
    tgt = np.linspace(0.0, 1.0, n_seg + 1)
    out = np.empty(cum.shape[:-1] + (n_seg + 1,))
    for idx in np.ndindex(cum.shape[:-1]):
        out[idx] = np.interp(tgt, cum[idx], fine)
    return out


SpeedFn = Callable[[Sequence[np.ndarray], Sequence[np.ndarray]], np.ndarray]


@dataclass
class PathSet:
    """Batch of piecewise geodesic paths in a product of cones."""

    betas: tuple
    r: np.ndarray  # (M, N+1, F)
    th: np.ndarray

    @classmethod
    def geodesics(cls, betas, P, Q, n_seg: int, grading: Callable | None = None) -> "PathSet":
        P = np.atleast_2d(np.asarray(P, dtype=complex))
        Q = np.atleast_2d(np.asarray(Q, dtype=complex))
        if grading is None:
            t = np.linspace(0.0, 1.0, n_seg + 1)
            r, th = _geodesic_nodes(betas, P, Q, t)
            return cls(tuple(betas), r, th)
        fine = np.linspace(0.0, 1.0, 801)
        rf, thf = _geodesic_nodes(betas, P, Q, fine)
        ts = _graded_parameters(*grading(rf, thf), n_seg)
        r = np.empty((P.shape[0], n_seg + 1, len(betas)))
        th = np.empty_like(r)
        for i in range(P.shape[0]):
            ri, ti = _geodesic_nodes(betas, P[i:i + 1], Q[i:i + 1], ts[i])
            r[i], th[i] = ri[0], ti[0]
        return cls(tuple(betas), r, th)

    @property
    def n_seg(self) -> int:
        return self.r.shape[1] - 1

    def points(self, r=None, th=None, nq: int = 4):
        r = self.r if r is None else r
        th = self.th if th is None else th
        t, _ = _gl01(nq)
        out = [_factor_segments(r[..., f], th[..., f], b, t) for f, b in enumerate(self.betas)]
        return [o[0] for o in out], [o[1] for o in out], [o[2] for o in out]

    def cone_length(self) -> np.ndarray:
        _, _, ls = self.points(nq=1)
        return np.sqrt(sum(l**2 for l in ls)).sum(axis=-1)

    def segment_lengths(self, speed: SpeedFn, r=None, th=None, nq: int = 4) -> np.ndarray:
        pos, vel, _ = self.points(r, th, nq)
        _, wq = _gl01(nq)
        sp = speed(pos, vel)
        return (sp * wq).sum(axis=-1)

    def lengths(self, speed: SpeedFn, nq: int = 4) -> np.ndarray:
        return self.segment_lengths(speed, nq=nq).sum(axis=-1)

    def node_positions(self) -> np.ndarray:
        out = np.empty(self.r.shape, dtype=complex)
        for f, b in enumerate(self.betas):
            out[..., f] = self.r[..., f] ** (1 / b) * np.exp(1j * self.th[..., f])
        return out


@dataclass(frozen=True)
class ShortenResult:
    lengths: np.ndarray
    initial: np.ndarray
    iterations: int
    converged: bool


def _hierarchy(n_seg: int):
    """Levels (L, midpoints) of the 1D hierarchical basis on nodes 0..n_seg."""
    if n_seg < 2 or n_seg & (n_seg - 1):
        raise DomainError("the number of path segments must be a power of two")
    out, L = [], n_seg // 2
    while L >= 1:
        out.append((L, np.arange(L, n_seg, 2 * L)))
        L //= 2
    return out


def _hier_scales(arc, levels):
    """sqrt of the half-span of each hierarchical hat, from arc length (M, N+1)."""
    sc = np.ones(arc.shape + (1,))
    for L, mid in levels:
        sc[:, mid, 0] = np.sqrt(np.maximum(0.5 * (arc[:, mid + L] - arc[:, mid - L]), 1e-12))
    return sc


def _to_nodal(y, levels, sc):
    """Hierarchical coefficients (M, N+1, k) -> nodal offsets, zero at the ends."""
    o = np.zeros_like(y)
    for L, mid in levels:
        o[..., mid, :] = 0.5 * (o[..., mid - L, :] + o[..., mid + L, :]) + sc[:, mid] * y[..., mid, :]
    return o


def _to_hier_grad(g, levels, sc):
    g = g.copy()
    out = np.zeros_like(g)
    for L, mid in reversed(levels):
        out[..., mid, :] = sc[:, mid] * g[..., mid, :]
        np.add.at(g, (Ellipsis, mid - L, slice(None)), 0.5 * g[..., mid, :])
        np.add.at(g, (Ellipsis, mid + L, slice(None)), 0.5 * g[..., mid, :])
    return out


def shorten(paths: PathSet, speed: SpeedFn, nq: int = 4, step: float = 1e-6, maxiter: int = 600,
            tol: float = 1e-15) -> ShortenResult:
    """Minimise the length of every path (endpoints fixed) in place.

    Nodes move by offsets in a developed chart of each factor centred on the
    node's initial ray, expanded in a hierarchical basis along the path so
    that the problem stays well conditioned as segments are added.  The
    gradient is a central difference taken one node parity at a time: a
    segment touches one even and one odd node, so perturbing all nodes of
    one parity moves each segment length through one node only, and the
    whole gradient costs one batch of 8 F speed evaluations per segment.
    """
    M, n1, F = paths.r.shape
    N = n1 - 1
    initial = paths.lengths(speed, nq)
    levels = _hierarchy(N)
    r0, th0 = paths.r.copy(), paths.th.copy()
    betas = np.array(paths.betas)
    k = np.arange(1, N)
    par = [k[k % 2 == 0], k[k % 2 == 1]]
    n_cfg = 2 * F * 2 * 2
    _, _, ls = paths.points(nq=1)
    seg0 = np.sqrt(sum(l**2 for l in ls))
    arc = np.concatenate([np.zeros((M, 1)), np.cumsum(seg0, axis=-1)], axis=-1)
    sc = _hier_scales(arc, levels)

    def nodes(off):
        """off (..., M, N+1, F, 2) -> r, th."""
        X = r0 + off[..., 0] + 1j * off[..., 1]
        return np.abs(X), th0 + np.angle(X) / betas

    def fun(y):
        off = _to_nodal(y.reshape(M, n1, 2 * F), levels, sc).reshape(M, n1, F, 2)
        O = np.broadcast_to(off, (n_cfg + 1,) + off.shape).copy()
        c = 1
        for pi in range(2):
            for f in range(F):
                for kind in range(2):
                    for sgn in (1.0, -1.0):
                        O[c, :, par[pi], f, kind] += sgn * step
                        c += 1
        R, T = nodes(O)
        seg = paths.segment_lengths(speed, R, T, nq)  # (cfg, M, N)
        g = np.zeros((M, n1, F, 2))
        c = 1
        for pi in range(2):
            kk = par[pi]
            for f in range(F):
                for kind in range(2):
                    d = (seg[c] - seg[c + 1]) / (2 * step)
                    g[:, kk, f, kind] = d[:, kk - 1] + d[:, kk]
                    c += 2
        gy = _to_hier_grad(g.reshape(M, n1, 2 * F), levels, sc)
        return float(seg[0].sum()), gy.ravel()

    y0 = np.zeros(M * n1 * 2 * F)
    res = minimize(fun, y0, jac=True, method="L-BFGS-B",
                   options=dict(maxiter=maxiter, ftol=tol, gtol=1e-11, maxcor=30))
    off = _to_nodal(res.x.reshape(M, n1, 2 * F), levels, sc).reshape(M, n1, F, 2)
    r, th = nodes(off)
    final = paths.segment_lengths(speed, r, th, nq).sum(axis=-1)
    keep = final <= initial
    paths.r = np.where(keep[:, None, None], r, r0)
    paths.th = np.where(keep[:, None, None], th, th0)
    return ShortenResult(np.minimum(final, initial), initial, int(res.nit), bool(res.success))


# --------------------------------------------------------------------------
# speed functions


def conformal_speed(dens: Callable) -> SpeedFn:
    def speed(pos, vel):
        return np.sqrt(dens(pos[0])) * np.abs(vel[0])

    return speed


def form_speed(form_fn: Callable[[np.ndarray, np.ndarray], HermitianForm2], strict: bool = True) -> SpeedFn:
    def speed(pos, vel):
        z, w = pos
        shape = z.shape
        g = form_fn(z.ravel(), w.ravel())
        v = np.stack([vel[0].ravel(), vel[1].ravel()], axis=-1)
        q = g.norm(v)
        if strict and np.any(q < 0):
            raise NonPositiveMetricError(f"metric not positive at {int(np.sum(q < 0))} path points")
        return np.sqrt(np.maximum(q, 0.0)).reshape(shape)

    return speed


def rescaled_form(p: AnsatzParams, lam: float, which: str = "ansatz"):
    """x -> lam^-2 D^* g at x, for g the ansatz metric or the Hermitian model."""
    D = Dilation.of(p, lam)
    base = {"ansatz": metric, "hermitian": hermitian_model}[which]

    def form(z, w):
        Z, W = D(z, w)
        return D.pull_form(base(p, Z, W))

    return form


# --------------------------------------------------------------------------
# collision scale


def box_points(box, n: int, offset: float = 0.0137) -> np.ndarray:
    """n x n grid on box = (x0, x1, y0, y1), shifted off the axes, plus the origin."""
    x0, x1, y0, y1 = box
    xs = np.linspace(x0, x1, n) + offset * (x1 - x0)
    ys = np.linspace(y0, y1, n) + 0.61 * offset * (y1 - y0)
    pts = (xs[:, None] + 1j * ys[None, :]).ravel()
    return np.concatenate([[0j], pts])


def _pairs(n: int):
    i, j = np.triu_indices(n, 1)
    return i, j


def collision_distortion(pair: ConePair, mu: complex, K, method: str = "path", n_seg: int = 32,
                         grid: GridSpec | None = None, maxiter: int = 150) -> float:
    """sup over pairs of sample points of |d_{F,mu} - d_{C_gamma}|.

    F_mu has cone points mu a2, mu a3.  K is an array of sample points or a
    box (x0, x1, y0, y1), sampled by box_points.  method="graph" uses lattice
    distances on the rescaled pair (K must then be a set of grid nodes).
    """
    mu = complex(mu)
    if not (0 < abs(mu) < 1):
        raise DomainError("collision scale must satisfy 0 < |mu| < 1")
    pts = box_points(K, 7) if isinstance(K, tuple) else np.asarray(K, dtype=complex).ravel()
    g = pair.gamma
    i, j = _pairs(pts.size)
    d_cone = factor_distance(g, pts[i], pts[j])
    if pair.is_degenerate:
        return 0.0
    scaled = pair.scaled(mu)
    if method == "graph":
        if grid is None:
            raise GridError("graph method needs a grid")
        G = distance_graph(scaled, grid)
        D = G.distances(pts, pts)
        return float(np.max(np.abs(D[i, j] - d_cone)))
    if method != "path":
        raise ConfigError(f"unknown distance method {method!r}")
    sigma = (abs(mu) * pair.scale) ** g

    def grading(rf, thf):
        return rf[..., 0], sigma

    paths = PathSet.geodesics((g,), pts[i, None], pts[j, None], n_seg, grading)
    with np.errstate(divide="ignore"):
        speed = conformal_speed(lambda w: density(scaled, w))
        res = shorten(paths, speed, maxiter=maxiter, tol=1e-11)
    return float(np.max(np.abs(res.lengths - d_cone)))


# --------------------------------------------------------------------------
# tangent cone at the origin


def hermitian_rate(p: AnsatzParams, shells=None, n: int = 4000, seed: int = 0) -> DecayFit:
    """Fit of sup_shell |omega - omega_H|_omega against rho.

    The rate c used for the distance comparison is half the fitted slope.
    """
    shells = np.geomspace(0.5, 1 / 64, 6) if shells is None else np.asarray(shells)
    rng = np.random.default_rng(seed)
    sup = []
    for rho in shells:
        z, w = _shell_sample(p, rho, n, rng)
        g = metric(p, z, w)
        sup.append(float(np.max(hermitian_model(p, z, w).distance_to(g))))
    return fit_decay(shells, np.array(sup))


def _shell_sample(p: AnsatzParams, rho: float, n: int, rng):
    """Points with the given rho, uniform in the (r, R) angle, off the lines."""
    a = rng.uniform(0, np.pi / 2, n)
    r, R = rho * np.cos(a), rho * np.sin(a)
    z = r ** (1 / p.beta1) * np.exp(2j * np.pi * rng.random(n))
    w = R ** (1 / p.gamma) * np.exp(2j * np.pi * rng.random(n))
    far = np.ones(n, dtype=bool)
    for a_j in (p.pair.a2, p.pair.a3):
        far &= np.abs(w - a_j * z) > 1e-6 * np.abs(z)
    return z[far], w[far]


def tangent_cone_sample(p: AnsatzParams, n: int, seed: int = 0, rho_range=(0.2, 0.9),
                        min_angle: float = 0.15) -> np.ndarray:
    """Cloud in B = {rho < 1} kept away from both coordinate axes in (r, R)."""
    rng = np.random.default_rng(seed)
    rho = rng.uniform(*rho_range, n)
    a = rng.uniform(min_angle, np.pi / 2 - min_angle, n)
    z = (rho * np.cos(a)) ** (1 / p.beta1) * np.exp(2j * np.pi * rng.random(n))
    w = (rho * np.sin(a)) ** (1 / p.gamma) * np.exp(2j * np.pi * rng.random(n))
    return np.stack([z, w], axis=-1)


@dataclass
class TangentConeReport:
    lambdas: np.ndarray
    distortion: np.ndarray  # sup |d_lam - d_cone|
    hermitian_gap: np.ndarray  # sup |d_lam - d_H,lam|
    model_gap: np.ndarray  # sup |d_H,lam - d_cone|
    fit: DecayFit
    fit_hermitian: DecayFit
    fit_model: DecayFit
    c: float
    n_pairs: int

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.lambdas)[::-1]
        return bool(np.all(np.diff(self.distortion[order]) < 0))

    def to_rows(self):
        return [dict(lam=float(l), distortion=float(a), hermitian_gap=float(b), model_gap=float(c))
                for l, a, b, c in zip(self.lambdas, self.distortion, self.hermitian_gap, self.model_gap)]


def _fit_or_nan(x, y) -> DecayFit:
    try:
        return fit_decay(x, y)
    except Exception:  # fewer than five usable samples
        return DecayFit(math.nan, math.nan, 0.0, (math.nan, math.nan), False, 0)


def tangent_cone_distances(p: AnsatzParams, lam: float, sample, n_seg: int = 32, nq: int = 4):
    """(d_cone, d_H, d_lam) over all pairs of the sample, at scale lam."""
    X = np.asarray(sample, dtype=complex)
    i, j = _pairs(X.shape[0])
    b1, g = p.beta1, p.gamma
    cone = ModelCone("Cb1xCg", (b1, g))
    dc = cone_distance(cone, X[i], X[j])
    amax = max(abs(p.pair.a2), abs(p.pair.a3))
    shift = lam ** (1 / b1 - 1 / g)

    def grading(rf, thf):
        zabs = rf[..., 0] ** (1 / b1)
        return rf[..., 1], (shift * amax * zabs) ** g + 1e-3

    H = PathSet.geodesics((b1, g), X[i], X[j], n_seg, grading)
    dh = shorten(H, form_speed(rescaled_form(p, lam, "hermitian")), nq).lengths
    A = PathSet((b1, g), H.r.copy(), H.th.copy())
    dl = shorten(A, form_speed(rescaled_form(p, lam, "ansatz")), nq).lengths
    return dc, dh, dl


def tangent_cone_check(p: AnsatzParams, lambda_seq, sample, n_seg: int = 32, c: float | None = None) -> TangentConeReport:
    """Distortion of d_lam against the product cone over a sampled cloud in B."""
    lams = np.asarray(lambda_seq, dtype=float)
    if np.any(lams <= 0) or np.any(lams > 0.5):
        raise DomainError("scales must lie in (0, 1/2] so that the rescaled cloud stays where the metric is positive")
    X = np.asarray(sample, dtype=complex)
    if np.max(rho_of(p, X[:, 0], X[:, 1])) >= 1:
        raise DomainError("sample must lie in the unit ball rho < 1")
    dist, herm, model = [], [], []
    for lam in lams:
        dc, dh, dl = tangent_cone_distances(p, lam, X, n_seg)
        dist.append(np.max(np.abs(dl - dc)))
        herm.append(np.max(np.abs(dl - dh)))
        model.append(np.max(np.abs(dh - dc)))
    dist, herm, model = map(np.array, (dist, herm, model))
    if c is None:
        c = 0.5 * hermitian_rate(p).slope
    return TangentConeReport(lams, dist, herm, model, _fit_or_nan(lams, dist), _fit_or_nan(lams, herm),
                             _fit_or_nan(lams, model), float(c), int(X.shape[0] * (X.shape[0] - 1) // 2))


DISTORTION_COLUMNS = ("lam", "distortion", "hermitian_gap", "model_gap")
FIT_COLUMNS = ("quantity", "slope", "intercept", "r2", "window_lo", "window_hi", "n")


def write_distortion_json(path, report: TangentConeReport) -> None:
    doc = {"c": report.c, "n_pairs": report.n_pairs, "monotone": report.monotone, "table": report.to_rows()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def write_fits_csv(path, fits: dict[str, DecayFit]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(FIT_COLUMNS)
        for name in sorted(fits):
            f = fits[name]
            wr.writerow([name, repr(f.slope), repr(f.intercept), repr(f.r2), repr(f.window[0]), repr(f.window[1]), f.n])


# --------------------------------------------------------------------------
# model cones of small balls


@lru_cache(maxsize=32)
def flatness_constant(beta: float, n: int = 1500, seed: int = 0) -> float:
    """Largest k such that a ball of radius t < k d in C_beta is flat, d its distance to the apex.

    Estimated with cone_distance: sampled pairs are compared with the plane
    distance of their images under the development centred on the ray of
    the ball's centre; k is the smallest ball radius containing a mismatch.
    """
    rng = np.random.default_rng(seed)
    rr = rng.uniform(0.0, 2.0, n)
    th = rng.uniform(-np.pi, np.pi, n)
    z = rr ** (1 / beta) * np.exp(1j * th)
    dx = factor_distance(beta, 1.0, z)
    X = rr * np.exp(1j * beta * th)
    i, j = _pairs(n)
    bad = np.abs(X[i] - X[j]) - factor_distance(beta, z[i], z[j]) > 1e-9
    if not np.any(bad):
        return 1.0
    return float(min(1.0, np.min(np.maximum(dx[i[bad]], dx[j[bad]]))))


@dataclass(frozen=True)
class ClassifierConstants:
    mu: float
    kappa_b1: float
    kappa_g: float
    kappa_f: float
    gap_f: float

    @classmethod
    def calibrate(cls, p: AnsatzParams, mu: float = 0.1) -> "ClassifierConstants":
        pr = p.pair
        gap = float(line_element_integral(lambda t: np.sqrt(density(pr, t)), np.array([pr.a3]), np.array([pr.a2]),
                                          [pr.a2, pr.a3], 8, [pr.beta2, pr.beta3])[0])
        if 6 * mu >= gap:
            raise DomainError(f"mu={mu} too large: the discs around the cone points overlap (gap {gap})")
        kf = min(flatness_constant(pr.beta2), flatness_constant(pr.beta3))
        return cls(mu, flatness_constant(p.beta1), flatness_constant(p.gamma), kf, gap)


@dataclass(frozen=True)
class BallScaleReport:
    point: tuple
    k: int
    verdict: str
    epsilon: float
    region: str
    constants: ClassifierConstants
    lam: float = 0.5

    @property
    def bad(self) -> bool:
        return self.verdict == BAD

    def to_dict(self) -> dict:
        d = asdict(self)
        d["point"] = [[c.real, c.imag] for c in self.point]
        return d


def _slice_distances(p: AnsatzParams, xi: complex):
    """Distances in the flat slice metric from xi to a2 and a3 (straight segments)."""
    pr = p.pair
    out = []
    for a, b in ((pr.a2, pr.beta2), (pr.a3, pr.beta3)):
        if xi == a:
            out.append(0.0)
            continue
        v = line_element_integral(lambda t: np.sqrt(density(pr, t)), np.array([a]), np.array([xi]),
                                  [pr.a2, pr.a3], 8, [pr.beta2, pr.beta3])
        out.append(float(v[0]))
    return out


def ball_region(p: AnsatzParams, z: complex, w: complex, mu: float = 0.1) -> str:
    z, w = complex(z), complex(w)
    if z == 0 and w == 0:
        return "origin"
    r, R = abs(z) ** p.beta1, abs(w) ** p.gamma
    if r < mu * R:
        return "b1"
    if R > 2 * r**p.alpha0:
        # outside the collision zone the metric is the product cone
        return "b1g" if 0.5 * mu * r < R < 2 * r / mu else "g1"
    d2, d3 = _slice_distances(p, w / z)
    if d2 < 2 * mu:
        return "b2"
    if d3 < 2 * mu:
        return "b3"
    return "g2"


def classify_ball(p: AnsatzParams, x, k: int, lam: float, epsilon: float,
                  constants: ClassifierConstants | None = None) -> BallScaleReport:
    """Predicted model cone of the ball B(x, lam^k), or Bad.

    Balls whose centre is within epsilon t of an apex are close to that cone;
    balls that avoid a singular set by the calibrated flatness margin are
    exactly flat in that factor.  In the collision zone the slice is measured
    in its own units T = t / |z|^gamma.
    """
    K = constants or ClassifierConstants.calibrate(p)
    z, w = complex(x[0]), complex(x[1])
    t = lam**k
    eps = epsilon
    reg = ball_region(p, z, w, K.mu)
    r, R = abs(z) ** p.beta1, abs(w) ** p.gamma
    rho = math.hypot(r, R)
    verdict = BAD
    if rho <= eps * t:
        verdict = "Cb1xCg"
    elif reg in ("b1", "b1g", "g1"):
        flat1, flat2 = t <= K.kappa_b1 * r, t <= K.kappa_g * R
        if flat1 and flat2:
            verdict = "C2"
        elif r <= eps * t and flat2:
            verdict = "Cb1xC"
        elif R <= eps * t and flat1:
            verdict = "CgxC"
    elif t <= K.kappa_b1 * r:
        T = t / abs(z) ** p.gamma
        d2, d3 = _slice_distances(p, w / z)
        s = min(d2, d3)
        if T <= K.kappa_f * s:
            verdict = "C2"
        elif s + K.gap_f <= eps * T:
            verdict = "CgxC"
        elif T <= K.mu * K.gap_f:
            if d2 <= eps * T:
                verdict = "Cb2xC"
            elif d3 <= eps * T:
                verdict = "Cb3xC"
    return BallScaleReport((z, w), int(k), verdict, float(eps), reg, K, float(lam))


def scale_verdicts(p: AnsatzParams, x, k_max: int = 40, lam: float = 0.5, epsilon: float = 0.1,
                   constants: ClassifierConstants | None = None) -> list[BallScaleReport]:
    K = constants or ClassifierConstants.calibrate(p)
    return [classify_ball(p, x, k, lam, epsilon, K) for k in range(k_max + 1)]


def bad_scale_count(p: AnsatzParams, cloud, k_max: int = 40, lam: float = 0.5, epsilon: float = 0.1,
                    constants: ClassifierConstants | None = None) -> np.ndarray:
    K = constants or ClassifierConstants.calibrate(p)
    return np.array([sum(rep.bad for rep in scale_verdicts(p, x, k_max, lam, epsilon, K)) for x in cloud])


def ball_cloud(p: AnsatzParams, n: int, seed: int = 0, rho_range=(1e-6, 1.0)) -> np.ndarray:
    """Points log-uniform in rho with a share placed on or near the three lines."""
    rng = np.random.default_rng(seed)
    rho = np.exp(rng.uniform(*np.log(rho_range), n))
    a = rng.uniform(0, np.pi / 2, n)
    z = (rho * np.cos(a)) ** (1 / p.beta1) * np.exp(2j * np.pi * rng.random(n))
    w = (rho * np.sin(a)) ** (1 / p.gamma) * np.exp(2j * np.pi * rng.random(n))
    kind = rng.integers(0, 5, n)
    near = 10.0 ** rng.uniform(-8, -1, n) * np.exp(2j * np.pi * rng.random(n))
    for j, a_j in ((2, p.pair.a2), (3, p.pair.a3)):
        sel = kind == j
        w[sel] = z[sel] * (a_j + near[sel])
    z[kind == 1] = 0
    return np.stack([z, w], axis=-1)


def reports_to_json(reports: Sequence[BallScaleReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# quasi-isometry chart


def _smoothstep(x):
    return cutoff(np.asarray(x, dtype=float) + 1.0).chi1


@dataclass(frozen=True)
class ChartParams:
    """Outer radius Lambda and patch radius mu of the slice chart.

    chi1 rises from gamma (|v| <= 2 Lambda) to 1 (|v| >= 3 Lambda); chi_j
    falls from 1 (r_j <= mu/3) to beta_j (r_j >= mu/2).
    """

    Lambda: float = 4.0
    mu_chart: float = 0.3

    def validate(self, pair: ConePair) -> "ChartParams":
        a2, a3 = pair.a2, pair.a3
        if not (self.Lambda > 0 and self.mu_chart > 0):
            raise ConfigError("chart radii must be positive")
        if abs(a2 - a3) <= 2 * self.mu_chart and not pair.is_degenerate:
            raise ConfigError("cone-point patches overlap")
        if max(abs(a2), abs(a3)) + self.mu_chart >= self.Lambda:
            raise ConfigError("cone-point patches meet the outer region |v| > Lambda")
        return self

    def chi_outer(self, t, gamma: float):
        return gamma + (1 - gamma) * _smoothstep((np.asarray(t) - 2 * self.Lambda) / self.Lambda)

    def chi_patch(self, t, beta: float):
        m = self.mu_chart
        return 1 + (beta - 1) * _smoothstep((np.asarray(t) - m / 3) / (m / 6))


def slice_chart(pair: ConePair, c: ChartParams, v):
    """Phi on the slice: power maps near a2, a3 and at infinity, identity elsewhere."""
    v = np.asarray(v, dtype=complex)
    out = v.copy()
    g = pair.gamma
    av = np.abs(v)
    outer = av > c.Lambda
    if np.any(outer):
        e = c.chi_outer(av[outer], g) / g - 1
        out[outer] = av[outer] ** e * v[outer]
    for a, b in ((pair.a2, pair.beta2), (pair.a3, pair.beta3)):
        d = v - a
        rj = np.abs(d)
        sel = rj < c.mu_chart
        if np.any(sel):
            rr = rj[sel]
            with np.errstate(divide="ignore", invalid="ignore"):
                mod = np.where(rr > 0, rr ** (c.chi_patch(rr, b) / b), 0.0)
                out[sel] = a + np.where(rr > 0, mod * d[sel] / np.where(rr > 0, rr, 1), 0.0)
    return out


def fibre_chart(pair: ConePair, c: ChartParams, z, v):
    """Phi_z(v) = z Phi(|z|^(1-gamma) v / z); v -> |v|^(1/g - 1) v at z = 0."""
    g = pair.gamma
    z, v = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(v, dtype=complex))
    shape = z.shape
    z, v = z.ravel(), v.ravel()
    out = np.abs(v) ** (1 / g - 1) * v
    nz = z != 0
    if np.any(nz):
        zz = z[nz]
        out[nz] = zz * slice_chart(pair, c, np.abs(zz) ** (1 - g) * v[nz] / zz)
    return out.reshape(shape)


def quasi_isometry_chart(p: AnsatzParams, c: ChartParams, u, v, literal: bool = False):
    """(u, v) -> (z, w) with z = |u|^(1/b1 - 1) u and w = Phi_z(v).

    literal=True uses z = |u|^(b1 - 1) u and Phi_{|u|^(g-1) u}(v) instead.
    """
    c.validate(p.pair)
    u = np.asarray(u, dtype=complex)
    b1, g = p.beta1, p.gamma
    if literal:
        z = np.abs(u) ** (b1 - 1) * u
        return z, fibre_chart(p.pair, c, np.abs(u) ** (g - 1) * u, v)
    z = np.abs(u) ** (1 / b1 - 1) * u
    return z, fibre_chart(p.pair, c, z, v)


def _real_jacobian(fn, u, v, h: float):
    """4 x 4 real Jacobian of (u, v) -> (z, w) by central differences."""
    dirs = [(h, 0), (1j * h, 0), (0, h), (0, 1j * h)]
    cols = []
    for du, dv in dirs:
        zp, wp = fn(u + du, v + dv)
        zm, wm = fn(u - du, v - dv)
        dz, dw = (zp - zm) / (2 * h), (wp - wm) / (2 * h)
        cols.append(np.stack([dz.real, dz.imag, dw.real, dw.imag], axis=-1))
    return np.stack(cols, axis=-1)  # (..., 4 out, 4 in)


def _real_form(form: HermitianForm2) -> np.ndarray:
    """Real 4 x 4 Riemannian matrix of g11|dz|^2 + 2Re(g12 dz dwbar) + g22|dw|^2 in (x1, y1, x2, y2)."""
    g11, g12, g22 = np.asarray(form.g11), np.asarray(form.g12), np.asarray(form.g22)
    a, b = g12.real, g12.imag
    G = np.zeros(g11.shape + (4, 4))
    G[..., 0, 0] = G[..., 1, 1] = g11
    G[..., 2, 2] = G[..., 3, 3] = g22
    # Re(g12 (dx1 + i dy1)(dx2 - i dy2)) = a(dx1 dx2 + dy1 dy2) + b(dx1 dy2 - dy1 dx2)
    G[..., 0, 2] = G[..., 2, 0] = a
    G[..., 1, 3] = G[..., 3, 1] = a
    G[..., 0, 3] = G[..., 3, 0] = b
    G[..., 1, 2] = G[..., 2, 1] = -b
    return G


def chart_pullback_eigenvalues(p: AnsatzParams, c: ChartParams, u, v, target: str = "hermitian",
                               literal: bool = False, h: float = 1e-7) -> np.ndarray:
    """Eigenvalues of the pulled-back metric against the Euclidean metric of (u, v)."""
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    fn = lambda a, b: quasi_isometry_chart(p, c, a, b, literal)
    J = _real_jacobian(fn, u, v, h)
    z, w = fn(u, v)
    base = {"hermitian": hermitian_model, "ansatz": metric}[target]
    G = _real_form(base(p, z, w))
    M = np.einsum("...ki,...kl,...lj->...ij", J, G, J)
    return np.linalg.eigvalsh(M)


def bilipschitz_constant(p: AnsatzParams, c: ChartParams, u, v, **kw) -> float:
    ev = chart_pullback_eigenvalues(p, c, u, v, **kw)
    return float(max(np.max(ev), 1.0 / np.min(ev)))


def chart_sample(n: int, seed: int = 0, radius: float = 0.2):
    """Points (u, v) with log-uniform moduli in (1e-3, radius)."""
    rng = np.random.default_rng(seed)
    u = np.exp(rng.uniform(np.log(1e-3), np.log(radius), n)) * np.exp(2j * np.pi * rng.random(n))
    v = np.exp(rng.uniform(np.log(1e-3), np.log(radius), n)) * np.exp(2j * np.pi * rng.random(n))
    return u, v


def chart_min_separation(p: AnsatzParams, c: ChartParams, u, v) -> float:
    """Smallest distance between images of distinct sample points."""
    z, w = quasi_isometry_chart(p, c, u, v)
    img = np.stack([z.real, z.imag, w.real, w.imag], axis=-1)
    pre = np.stack([np.real(u), np.imag(u), np.real(v), np.imag(v)], axis=-1)
    tree = cKDTree(img)
    d, idx = tree.query(img, k=2)
    distinct = np.linalg.norm(pre - pre[idx[:, 1]], axis=-1) > 0
    return float(np.min(d[distinct, 1])) if np.any(distinct) else math.inf
