"""Flat metric on C with two cone points and its Kahler potential.

The metric is ``density(w) |dw|^2`` with
``density(w) = gamma^2 |w-a2|^(2 b2 - 2) |w-a3|^(2 b3 - 2)``, asymptotic to
the cone C_gamma.  The potential is

    phi(w) = |w|^(2 gamma) + (2 gamma^2 / pi) * int f(t) log|w - t| dx dy,
    f(t)   = |t-a2|^(2 b2 - 2) |t-a3|^(2 b3 - 2) - |t|^(2 gamma - 2),

so that ``d^2 phi / dw dwbar = density`` (the Euclidean Laplacian of phi is
4 * density).  The factor 2 relative to the measure ``i dt dtbar`` comes from
``i dt ^ dtbar = 2 dx ^ dy``.

The convolution is evaluated by a quadtree of Gauss panels on a box around
the origin, refined until every panel sees at most one singular point; a
panel near a singular point is integrated in polar coordinates about it with
a radial power substitution that removes the algebraic or logarithmic
singularity.  Outside the box the integral is done on annuli, and beyond
the last annulus the multipole expansion of f is integrated in closed form.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DomainError, GridError, QuadratureError, SingularPointError

_NEAR = 0.5  # a point closer than _NEAR * h to a panel is treated by a polar rule
_EDGE = 0.2  # polar rules need the centre at least _EDGE * h from the edge lines
_SING_TOL = 1e-13


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class ConePair:
    beta2: float
    beta3: float
    a2: complex
    a3: complex

    def __post_init__(self):
        for b in (self.beta2, self.beta3):
            if not (0.0 < b < 1.0):
                raise DomainError(f"cone-angle factor {b} not in (0,1)")
        if self.beta2 + self.beta3 - 1.0 <= 0.0:
            raise DomainError("beta2 + beta3 - 1 must be positive")
        a2, a3 = complex(self.a2), complex(self.a3)
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "a3", a3)
        cm = (1 - self.beta2) * a2 + (1 - self.beta3) * a3
        scale = max(abs(a2), abs(a3), 1.0)
        if abs(cm) > 1e-14 * scale:
            raise DomainError(f"weighted centre of mass {cm} is not zero")
        if a2 == a3 and a2 != 0:
            raise DomainError("cone points coincide")

    @classmethod
    def symmetric(cls, beta: float, a: complex = 1.0) -> "ConePair":
        return cls(beta, beta, complex(a), -complex(a))

    @classmethod
    def centred(cls, beta2: float, beta3: float, a2: complex) -> "ConePair":
        """Place a3 so that the weighted centre of mass vanishes."""
        a2 = complex(a2)
        return cls(beta2, beta3, a2, -(1 - beta2) * a2 / (1 - beta3))

    @classmethod
    def degenerate(cls, beta2: float, beta3: float) -> "ConePair":
        return cls(beta2, beta3, 0j, 0j)

    @property
    def gamma(self) -> float:
        return self.beta2 + self.beta3 - 1.0

    @property
    def is_degenerate(self) -> bool:
        return self.a2 == 0 and self.a3 == 0

    @property
    def scale(self) -> float:
        return max(abs(self.a2), abs(self.a3), 1.0)

    def scaled(self, lam: complex) -> "ConePair":
        return ConePair(self.beta2, self.beta3, lam * self.a2, lam * self.a3)

    def moment(self, k: int) -> complex:
        """p_k = sum_j (beta_j - 1) a_j^k; p_1 = 0 by the centroid condition."""
        return (self.beta2 - 1) * self.a2**k + (self.beta3 - 1) * self.a3**k


@dataclass(frozen=True)
class QuadratureSpec:
    annuli: int = 10
    nodes: int = 12
    T: float | None = None
    depth: int = 48
    theta_nodes: int = 64
    target: float = 1e-9

    def __post_init__(self):
        if self.annuli <= 0 or self.nodes <= 0 or self.depth <= 0 or self.theta_nodes <= 0:
            raise DomainError("quadrature counts must be positive")

    def radius(self, pair: ConePair) -> float:
        base = 10.0 * pair.scale
        if self.T is None:
            return base
        if self.T < base:
            raise DomainError(f"T={self.T} must be at least 10*max(|a2|,|a3|,1)={base}")
        return float(self.T)

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.annuli + 2, self.nodes + 4, self.T, self.depth,
                              self.theta_nodes + 32, self.target)


@dataclass(frozen=True)
class AsymptoticData:
    A: float
    c: float
    quadrature_error: float


@dataclass
class LocalExpansion:
    cone_point: complex
    leading: float
    beta: float
    radii: np.ndarray = field(repr=False, default=None)
    angles: np.ndarray = field(repr=False, default=None)
    remainder: np.ndarray = field(repr=False, default=None)


# --------------------------------------------------------------------------
# pointwise quantities


def _check_regular(pair: ConePair, w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    tol = _SING_TOL * pair.scale
    if np.any(np.abs(w - pair.a2) <= tol) or np.any(np.abs(w - pair.a3) <= tol):
        raise SingularPointError("evaluation at a cone point")
    return w


def density(pair: ConePair, w) -> np.ndarray | float:
    wa = _check_regular(pair, w)
    g = pair.gamma
    out = g * g * np.abs(wa - pair.a2) ** (2 * pair.beta2 - 2) * np.abs(wa - pair.a3) ** (2 * pair.beta3 - 2)
    return float(out) if np.ndim(out) == 0 else out


def _log_abs_one_minus(x):
    """log|1 - x| accurate for small |x|."""
    return 0.5 * np.log1p(np.abs(x) ** 2 - 2.0 * x.real)


def _f_parts(pair: ConePair, t):
    """Return (|t-a2|^.|t-a3|^., |t|^(2g-2)); infinite at the singular points."""
    with np.errstate(divide="ignore"):
        return _f_parts_raw(pair, t)


def _f_parts_raw(pair: ConePair, t):
    prod = np.abs(t - pair.a2) ** (2 * pair.beta2 - 2) * np.abs(t - pair.a3) ** (2 * pair.beta3 - 2)
    cone = np.abs(t) ** (2 * pair.gamma - 2)
    return prod, cone


def f_values(pair: ConePair, t) -> np.ndarray:
    """f(t) = |t-a2|^(2b2-2)|t-a3|^(2b3-2) - |t|^(2g-2), cancellation-free for large |t|."""
    t = np.asarray(t, dtype=complex)
    if pair.is_degenerate:
        return np.zeros(t.shape)
    out = np.empty(t.shape)
    absd = np.abs(t)
    far = absd > 4.0 * max(abs(pair.a2), abs(pair.a3))
    if np.any(far):
        tf = t[far]
        ex = (2 * pair.beta2 - 2) * _log_abs_one_minus(pair.a2 / tf) + (2 * pair.beta3 - 2) * _log_abs_one_minus(
            pair.a3 / tf
        )
        out[far] = np.abs(tf) ** (2 * pair.gamma - 2) * np.expm1(ex)
    if np.any(~far):
        p, c = _f_parts(pair, t[~far])
        out[~far] = p - c
    return out


# --------------------------------------------------------------------------
# panel rules


_GL_CACHE: dict = {}


def _gl01(n: int):
    if n not in _GL_CACHE:
        x, w = leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


_TENSOR_CACHE: dict = {}


def _tensor_rule(x0, y0, h, n):
    if n not in _TENSOR_CACHE:
        u, wu = _gl01(n)
        U, V = np.meshgrid(u, u, indexing="ij")
        _TENSOR_CACHE[n] = ((U + 1j * V).ravel(), np.outer(wu, wu).ravel())
    z, w = _TENSOR_CACHE[n]
    return complex(x0, y0) + h * z, w * (h * h)


def _polar_rule(x0, y0, h, c: complex, q: float, n_ang: int, n_rad: int):
    """Nodes/weights for int over the square panel, in polar coordinates about c.

    The radial fraction is s = u^q; q > 1 clusters nodes at c and absorbs
    integrable singularities |t - c|^p (q = 5 / (p + 2)) or log|t - c|.
    """
    corners = [complex(x0, y0), complex(x0 + h, y0), complex(x0 + h, y0 + h), complex(x0, y0 + h)]
    ua, wa = _gl01(n_ang)
    ur, wr = _gl01(n_rad)
    s = ur**q
    rad_w = q * wr * ur ** (2 * q - 1)  # s ds expressed in u
    ts, ws = [], []
    for k in range(4):
        P, Q = corners[k], corners[(k + 1) % 4]
        e = (Q - P) / h
        d = ((e.real * (c - P).imag) - (e.imag * (c - P).real))  # >0: c left of edge
        if abs(d) < 1e-15 * h:
            continue
        foot = P + ((c - P) * e.conjugate()).real * e
        dd = abs(foot - c)
        n = (foot - c) / dd  # unit normal pointing from c to the edge line
        sP = ((P - foot) * e.conjugate()).real
        sQ = ((Q - foot) * e.conjugate()).real
        segs = [(sP, 0.0), (0.0, sQ)] if sP < 0.0 < sQ else [(sP, sQ)]
        sign = 1.0 if d > 0 else -1.0
        for lo, hi in segs:
            p0, p1 = math.atan2(lo, dd), math.atan2(hi, dd)
            phi = p0 + (p1 - p0) * ua
            wphi = (p1 - p0) * wa
            rmax = dd / np.cos(phi)
            dirs = np.cos(phi) * n + np.sin(phi) * e
            t = c + np.outer(rmax * dirs, s)
            w = sign * np.outer(wphi * rmax**2, rad_w)
            ts.append(t.ravel())
            ws.append(w.ravel())
    if not ts:
        return np.empty(0, complex), np.empty(0)
    return np.concatenate(ts), np.concatenate(ws)


@dataclass
class _Singular:
    c: complex
    kind: str  # "a2" | "a3" | "cone" | "w"
    kernel: str | None = None  # set when the evaluation point sits on this singular point


def _panel_relations(x0, y0, h, pts: Sequence[_Singular]):
    near, critical = [], []
    for p in pts:
        px, py = p.c.real, p.c.imag
        dx = max(x0 - px, 0.0, px - (x0 + h))
        dy = max(y0 - py, 0.0, py - (y0 + h))
        dist = math.hypot(dx, dy)
        if dist < _NEAR * h:
            near.append(p)
            edge = min(abs(px - x0), abs(px - x0 - h), abs(py - y0), abs(py - y0 - h))
            # polar rules are only centred inside the panel and away from its edges
            if dist > 0.0 or edge < _EDGE * h:
                critical.append(p)
    return near, critical


class _RuleBuilder:
    """Builds (nodes, coefficients) so that int_panel f K ~ sum coef * K(node)."""

    def __init__(self, pair: ConePair, n: int, depth: int, hmin: float, q_w: float = 2.5):
        self.pair = pair
        self.n = n
        self.depth = depth
        self.hmin = hmin
        self.q_w = q_w
        g = pair.gamma
        self.q = {"a2": 5.0 / (2 * pair.beta2), "a3": 5.0 / (2 * pair.beta3), "cone": 5.0 / (2 * g)}

    def leaf(self, x0, y0, h, near: Sequence[_Singular]):
        """Geometric rule for one panel: list of (nodes, weights, term)."""
        n = self.n
        if not near:
            t, w = _tensor_rule(x0, y0, h, n)
            return [(t, w, "f")]
        c = near[0]
        n_ang, n_rad = n + 4, n + 2
        if c.kind == "w":
            t, w = _polar_rule(x0, y0, h, c.c, self.q_w, n_ang, n_rad)
            return [(t, w, "f")]
        # split f into the term singular at c and the regular remainder
        q_sing, q_reg = self.q[c.kind], 1.0
        if c.kernel == "cauchy":
            q_sing = 5.0 / (5.0 / q_sing - 1.0)
        elif c.kernel in ("log", "logratio"):
            q_reg = 2.5
        ts, tw = _polar_rule(x0, y0, h, c.c, q_sing, n_ang, n_rad)
        tr, wr = _polar_rule(x0, y0, h, c.c, q_reg, n_ang, n_rad)
        if c.kind == "cone":
            return [(ts, tw, "-cone"), (tr, wr, "prod")]
        return [(ts, tw, "prod"), (tr, wr, "-cone")]

    def _split(self, x0, y0, h, pts, level, out):
        near, critical = _panel_relations(x0, y0, h, pts)
        if (len(near) >= 2 or critical) and level < self.depth and h > self.hmin:
            h2 = 0.5 * h
            for ox, oy in ((0, 0), (h2, 0), (0, h2), (h2, h2)):
                self._split(x0 + ox, y0 + oy, h2, pts, level + 1, out)
            return
        if len(near) >= 2 or critical:
            near = []  # resolution floor: plain Gauss on a negligible panel
        out.append((x0, y0, h, self.leaf(x0, y0, h, near)))

    def build(self, x0, y0, h, pts):
        """Quadtree leaves as (x0, y0, h, t, coef) with f folded into coef."""
        raw = []
        self._split(x0, y0, h, pts, 0, raw)
        parts = [r for leaf in raw for r in leaf[3]]
        t = np.concatenate([p[0] for p in parts])
        w = np.concatenate([p[1] for p in parts])
        coef = np.empty_like(w)
        pair = self.pair
        code = {"f": 0, "prod": 1, "-cone": 2}
        mode = np.concatenate([np.full(p[0].size, code[p[2]]) for p in parts])
        fm = mode == 0
        if np.any(fm):
            coef[fm] = w[fm] * f_values(pair, t[fm])
        if np.any(~fm):
            pr, cn = _f_parts(pair, t[~fm])
            coef[~fm] = w[~fm] * np.where(mode[~fm] == 1, pr, -cn)
        out = []
        pos = 0
        for x0_, y0_, h_, leaf in raw:
            size = sum(p[0].size for p in leaf)
            out.append((x0_, y0_, h_, t[pos:pos + size], coef[pos:pos + size]))
            pos += size
        return out


# --------------------------------------------------------------------------
# kernels and closed-form tails


def _kernel(kind: str, w: np.ndarray, t: np.ndarray):
    if kind == "one":
        return np.ones(np.broadcast_shapes(w.shape, t.shape))
    if kind == "log":
        return np.log(np.abs(w - t))
    if kind == "logratio":
        x = t / w
        small = np.abs(x) < 0.5
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(small, _log_abs_one_minus(np.where(small, x, 0)), np.log(np.abs(1.0 - x)))
    if kind == "cauchy":
        return 1.0 / (w - t)
    raise ValueError(kind)


def _tail(pair: ConePair, kind: str, w: np.ndarray, R: float, kmax: int = 5):
    """Closed-form integral of f*K over |t| > R from the multipole expansion of f."""
    g = pair.gamma
    w = np.asarray(w, dtype=complex)
    one = 0.0
    logiso = 0.0
    holo = np.zeros(w.shape, dtype=complex)
    dholo = np.zeros(w.shape, dtype=complex)
    for k in range(2, kmax + 1):
        pk = pair.moment(k)
        a = 2 * k - 2 * g
        one += 2 * np.pi * abs(pk) ** 2 / k**2 * R ** (-a) / a
        logiso += 2 * np.pi * abs(pk) ** 2 / k**2 * R ** (-a) * (a * math.log(R) + 1.0) / a**2
        holo = holo + 2 * np.pi * w**k * np.conj(pk) * R ** (-a) / (k * k * a)
        dholo = dholo + 2 * np.pi * w ** (k - 1) * np.conj(pk) * R ** (-a) / (k * a)
    if kind == "one":
        return np.full(w.shape, one)
    if kind == "log":
        return logiso + holo.real
    if kind == "logratio":
        return logiso + holo.real - np.log(np.abs(w)) * one
    if kind == "cauchy":
        return dholo
    raise ValueError(kind)


# --------------------------------------------------------------------------
# the potential evaluator


@dataclass
class _BoxRule:
    L: float
    R_out: float
    leaves: list  # (x0, y0, h, start, stop) for box leaves
    t: np.ndarray
    coef: np.ndarray
    geom: np.ndarray  # (n_leaves, 3): x0, y0, h


class FlatPotential:
    """Convolution potential of a ConePair with a per-box cache of quadrature rules.

    The rule for a box is built once and shared read-only; evaluation points
    only trigger local corrections on the panels near them.
    """

    _OFFSET = (0.0137, 0.0089)

    def __init__(self, pair: ConePair, q: QuadratureSpec | None = None):
        self.pair = pair
        self.q = q or QuadratureSpec()
        self._rules: dict[int, _BoxRule] = {}
        self._A: AsymptoticData | None = None

    # -- rule construction -------------------------------------------------
    def _singulars(self):
        p = self.pair
        return [_Singular(0j, "cone"), _Singular(p.a2, "a2"), _Singular(p.a3, "a3")]

    def _box_rule(self, level: int) -> _BoxRule:
        if level in self._rules:
            return self._rules[level]
        pair, q = self.pair, self.q
        L = q.radius(pair) * 2.0**level
        ox, oy = self._OFFSET
        x0, y0, H = -L * (1 + ox), -L * (1 + oy), 2.0 * L
        builder = _RuleBuilder(pair, q.nodes, q.depth, hmin=1e-12 * L)
        leaves = builder.build(x0, y0, H, self._singulars())
        ts, cs, geom, spans = [], [], [], []
        pos = 0
        for lx, ly, lh, t, c in leaves:
            ts.append(t)
            cs.append(c)
            geom.append((lx, ly, lh))
            spans.append((pos, pos + t.size))
            pos += t.size
        # ring between the box and the circumscribed circle, then annuli
        t_ring, w_ring, R0 = self._ring_rule(x0, y0, H, q)
        t_ann, w_ann, R_out = self._annulus_rule(R0, q)
        t_out = np.concatenate([t_ring, t_ann])
        c_out = np.concatenate([w_ring, w_ann]) * f_values(pair, t_out)
        ts.append(t_out)
        cs.append(c_out)
        rule = _BoxRule(L=L, R_out=R_out, leaves=spans, t=np.concatenate(ts), coef=np.concatenate(cs),
                        geom=np.asarray(geom))
        rule.R0 = R0
        self._rules[level] = rule
        return rule

    @staticmethod
    def _ring_rule(x0, y0, H, q: QuadratureSpec):
        """Region between the square and its circumscribed circle, polar about 0."""
        corners = np.array([complex(x0, y0), complex(x0 + H, y0), complex(x0 + H, y0 + H), complex(x0, y0 + H)])
        R0 = np.abs(corners).max() * 1.0001
        ang = np.sort(np.mod(np.angle(corners), 2 * np.pi))
        ang = np.append(ang, ang[0] + 2 * np.pi)
        ua, wa = _gl01(q.nodes + 12)
        ur, wr = _gl01(q.nodes + 4)
        ts, ws = [], []
        xs = (x0, x0 + H)
        ys = (y0, y0 + H)
        for k in range(4):
            th = ang[k] + (ang[k + 1] - ang[k]) * ua
            wth = (ang[k + 1] - ang[k]) * wa
            c, s = np.cos(th), np.sin(th)
            # distance along the ray to the square boundary
            with np.errstate(divide="ignore"):
                tx = np.where(c > 0, xs[1] / c, np.where(c < 0, xs[0] / c, np.inf))
                ty = np.where(s > 0, ys[1] / s, np.where(s < 0, ys[0] / s, np.inf))
            rb = np.minimum(tx, ty)
            r = rb[:, None] + (R0 - rb)[:, None] * ur[None, :]
            w = wth[:, None] * (R0 - rb)[:, None] * wr[None, :] * r
            ts.append((r * (c + 1j * s)[:, None]).ravel())
            ws.append(w.ravel())
        return np.concatenate(ts), np.concatenate(ws), R0

    @staticmethod
    def _annulus_rule(R0, q: QuadratureSpec):
        ur, wr = _gl01(q.nodes)
        nth = q.theta_nodes
        th = 2 * np.pi * np.arange(nth) / nth
        e = np.exp(1j * th)
        ts, ws = [], []
        r_lo = R0
        for _ in range(q.annuli):
            r_hi = 2.0 * r_lo
            r = r_lo + (r_hi - r_lo) * ur
            wrr = (r_hi - r_lo) * wr * r * (2 * np.pi / nth)
            ts.append(np.outer(r, e).ravel())
            ws.append(np.repeat(wrr, nth))
            r_lo = r_hi
        return np.concatenate(ts), np.concatenate(ws), r_lo

    def _level_for(self, w: np.ndarray) -> np.ndarray:
        L0 = self.q.radius(self.pair)
        m = np.maximum(np.abs(w) / (0.5 * L0), 1.0)
        return np.ceil(np.log2(m) - 1e-12).astype(int)

    # -- integrals -----------------------------------------------------------
    def integral(self, kind: str, w=None) -> np.ndarray:
        """int f(t) K(w, t) dx dy for the kernel ``kind`` at the points w."""
        if kind == "one":
            rule = self._box_rule(0)
            return float(rule.coef.sum() + _tail(self.pair, "one", np.zeros(1), rule.R_out)[0])
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        out = np.zeros(w.shape, dtype=complex if kind == "cauchy" else float)
        if self.pair.is_degenerate:
            return out
        levels = self._level_for(w.ravel()).reshape(w.shape)
        for lev in np.unique(levels):
            idx = np.nonzero(levels == lev)
            out[idx] = self._integral_level(kind, w[idx], int(lev))
        return out

    def _integral_level(self, kind, w, level):
        rule = self._box_rule(level)
        res = np.empty(w.shape, dtype=complex if kind == "cauchy" else float)
        chunk = max(1, int(2_000_000 // max(rule.t.size, 1)))
        for s in range(0, w.size, chunk):
            ww = w[s : s + chunk]
            K = _kernel(kind, ww[:, None], rule.t[None, :])
            res[s : s + chunk] = K @ rule.coef
        res = res + _tail(self.pair, kind, w, rule.R_out)
        # local corrections on panels close to each evaluation point
        gx, gy, gh = rule.geom[:, 0], rule.geom[:, 1], rule.geom[:, 2]
        q_w = 1.0 if kind == "cauchy" else 2.5
        builder = _RuleBuilder(self.pair, self.q.nodes, self.q.depth, 1e-12 * rule.L, q_w=q_w)
        pts0 = self._singulars()
        for i, wi in enumerate(w):
            dx = np.maximum.reduce([gx - wi.real, np.zeros_like(gx), wi.real - gx - gh])
            dy = np.maximum.reduce([gy - wi.imag, np.zeros_like(gy), wi.imag - gy - gh])
            near = np.nonzero(np.hypot(dx, dy) < _NEAR * gh)[0]
            if near.size == 0:
                continue
            corr = 0.0
            hit = [p for p in pts0 if abs(p.c - wi) <= _SING_TOL * self.pair.scale]
            if hit:
                pts = [p if p is not hit[0] else _Singular(p.c, p.kind, kind) for p in pts0]
            else:
                pts = pts0 + [_Singular(complex(wi), "w")]
            for j in near:
                a, b = rule.leaves[j]
                corr -= _kernel(kind, wi, rule.t[a:b]) @ rule.coef[a:b]
                parts = builder.build(gx[j], gy[j], gh[j], pts)
                t = np.concatenate([p[3] for p in parts])
                c = np.concatenate([p[4] for p in parts])
                corr += _kernel(kind, wi, t) @ c
            res[i] += corr
        return res

    # -- public quantities ----------------------------------------------------
    def asymptotic(self) -> AsymptoticData:
        if self._A is None:
            g = self.pair.gamma
            c = min(2 - 2 * g, 1.0)
            if self.pair.is_degenerate:
                self._A = AsymptoticData(0.0, c, 0.0)
            else:
                A1 = 2 * g * g / np.pi * self.integral("one")
                A2 = 2 * g * g / np.pi * FlatPotential(self.pair, self.q.refined()).integral("one")
                err = abs(A1 - A2)
                if err > self.q.target * max(1.0, abs(A1)):
                    raise QuadratureError(f"two-resolution disagreement in A: {A1} vs {A2}")
                self._A = AsymptoticData(float(A1), c, float(err))
        return self._A

    def correction(self, w) -> np.ndarray:
        """phi(w) - |w|^(2 gamma): the Green's-function convolution term."""
        g = self.pair.gamma
        return 2 * g * g / np.pi * self.integral("log", w)

    def phi0(self, w) -> np.ndarray:
        """phi(w) - |w|^(2 gamma) - A log|w| for w != 0."""
        g = self.pair.gamma
        return 2 * g * g / np.pi * self.integral("logratio", w)

    def value(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        return np.abs(w) ** (2 * self.pair.gamma) + self.correction(w)

    def correction_gradient(self, w) -> np.ndarray:
        """d/dw of the convolution term."""
        g = self.pair.gamma
        return g * g / np.pi * self.integral("cauchy", w)

    def gradient(self, w) -> np.ndarray:
        w = _check_regular(self.pair, w)
        g = self.pair.gamma
        aw = np.abs(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            lead = np.where(aw > 0, g * np.conj(w) * aw ** (2 * g - 2), 0.0)
        return lead + self.correction_gradient(w)


_CACHE: dict = {}


def _evaluator(pair: ConePair, q: QuadratureSpec | None) -> FlatPotential:
    key = (pair, q or QuadratureSpec())
    if key not in _CACHE:
        _CACHE[key] = FlatPotential(pair, key[1])
    return _CACHE[key]


def asymptotic_constant(pair: ConePair, q: QuadratureSpec | None = None) -> AsymptoticData:
    return _evaluator(pair, q).asymptotic()


def potential(pair: ConePair, w, q: QuadratureSpec | None = None):
    out = _evaluator(pair, q).value(np.asarray(w, dtype=complex))
    return float(out[0]) if np.ndim(w) == 0 else out


def potential_gradient(pair: ConePair, w, q: QuadratureSpec | None = None):
    out = _evaluator(pair, q).gradient(np.atleast_1d(np.asarray(w, dtype=complex)))
    return complex(out[0]) if np.ndim(w) == 0 else out


def local_expansion(pair: ConePair, which: int = 2, q: QuadratureSpec | None = None,
                    radii: Sequence[float] = (1e-3, 2e-3, 4e-3), n_angles: int = 8) -> LocalExpansion:
    """Leading coefficient of phi ~ e^{S1} |w - a|^(2 beta) + S2 at a cone point.

    The coefficient is fixed by matching d^2/dw dwbar against the density:
    e^{S1(a)} = gamma^2 |a - a'|^(2 beta' - 2) / beta^2.  The remainder S2 is
    sampled on small circles around the cone point.
    """
    if pair.is_degenerate:
        raise DomainError("local expansion needs distinct cone points")
    a, b, ao, bo = (pair.a2, pair.beta2, pair.a3, pair.beta3) if which == 2 else (pair.a3, pair.beta3, pair.a2, pair.beta2)
    lead = pair.gamma**2 * abs(a - ao) ** (2 * bo - 2) / b**2
    r = np.asarray(radii, dtype=float)
    th = 2 * np.pi * (np.arange(n_angles) + 0.25) / n_angles
    pts = a + r[:, None] * np.exp(1j * th)[None, :]
    phi = _evaluator(pair, q).value(pts)
    rem = phi - lead * r[:, None] ** (2 * b)
    return LocalExpansion(a, float(lead), b, r, th, rem)


# --------------------------------------------------------------------------
# Schwarz-Christoffel map


def _branch_pow(x, p):
    """x^p with the branch cut along the downward vertical (arg in (-pi/2, 3pi/2])."""
    ang = np.angle(x)
    ang = np.where(ang <= -np.pi / 2, ang + 2 * np.pi, ang)
    return np.exp(p * (np.log(np.abs(x)) + 1j * ang))


def sc_integrand(pair: ConePair, t):
    t = np.asarray(t, dtype=complex)
    return _branch_pow(t - pair.a2, pair.beta2 - 1) * _branch_pow(t - pair.a3, pair.beta3 - 1)


def _segment_integral(pair: ConePair, p: complex, q: complex, epsabs=1e-13, epsrel=1e-13) -> complex:
    d = q - p
    L = abs(d)
    if L == 0:
        return 0j
    tol = _SING_TOL * pair.scale
    for a in (pair.a2, pair.a3):
        # interior crossing of a cone point is not allowed
        u = ((a - p) * np.conj(d)).real / L**2
        if 0 < u < 1 and abs(p + u * d - a) <= tol:
            raise SingularPointError("path passes through a cone point")
    g = lambda s: complex(sc_integrand(pair, p + s * d) * d)
    # algebraic endpoint behaviour when a segment ends on a cone point
    alg = [0.0, 0.0]
    for a, b in ((pair.a2, pair.beta2), (pair.a3, pair.beta3)):
        if abs(p - a) <= tol:
            alg[0] = b - 1
        if abs(q - a) <= tol:
            alg[1] = b - 1
    if alg != [0.0, 0.0]:
        def h(s):
            val = sc_integrand(pair, p + s * d) * d
            return val / ((s ** alg[0]) * ((1 - s) ** alg[1]))
        eps = 1e-300
        h_re = lambda s: complex(h(min(max(s, eps), 1 - 1e-16))).real
        h_im = lambda s: complex(h(min(max(s, eps), 1 - 1e-16))).imag
        re = integrate.quad(h_re, 0, 1, weight="alg", wvar=(alg[0], alg[1]), epsabs=epsabs, epsrel=epsrel, limit=200)[0]
        im = integrate.quad(h_im, 0, 1, weight="alg", wvar=(alg[0], alg[1]), epsabs=epsabs, epsrel=epsrel, limit=200)[0]
        return complex(re, im)
    val, _ = integrate.quad(g, 0, 1, complex_func=True, epsabs=epsabs, epsrel=epsrel, limit=200)
    return complex(val)


def schwarz_christoffel(pair: ConePair, w: complex, path: Sequence[complex] | None = None) -> complex:
    """F(w) = int_0^w (t-a2)^(b2-1) (t-a3)^(b3-1) dt along a polyline from 0.

    Requires real a2 > a3.  The default path goes straight up from 0 to
    i*|w| and then straight to w, staying in the closed upper half plane.
    """
    if pair.a2.imag != 0 or pair.a3.imag != 0 or not pair.a2.real > pair.a3.real:
        raise DomainError("Schwarz-Christoffel map needs real a2 > a3")
    w = complex(w)
    if w.imag < 0:
        raise DomainError("w must lie in the closed upper half plane")
    if path is None:
        if w == 0:
            return 0j
        if w.imag == 0 and pair.a3.real <= w.real <= pair.a2.real:
            path = [0j, w]
        else:
            h = max(abs(w), 1.0)
            path = [0j, 1j * h, w] if abs(w - 1j * h) > 0 else [0j, w]
    pts = [complex(p) for p in path]
    if pts[0] != 0 or pts[-1] != w:
        raise DomainError("path must run from 0 to w")
    return sum((_segment_integral(pair, pts[k], pts[k + 1]) for k in range(len(pts) - 1)), 0j)


def sc_derivative(pair: ConePair, w: complex, radius: float | None = None, n: int = 32) -> complex:
    """F'(w) recovered from values of F on a small circle (Cauchy formula)."""
    w = complex(w)
    dmin = min(abs(w - pair.a2), abs(w - pair.a3), w.imag if w.imag > 0 else np.inf)
    r = radius if radius is not None else 0.25 * dmin
    th = 2 * np.pi * np.arange(n) / n
    vals = np.array([schwarz_christoffel(pair, w + r * np.exp(1j * t)) for t in th])
    return complex(np.mean(vals * np.exp(-1j * th)) / r)


def sc_turning_angles(pair: ConePair, delta: float = 1e-6) -> tuple[float, float]:
    """Interior angles of the image polygon at F(a2), F(a3) from chord directions."""
    out = []
    for a in (pair.a2, pair.a3):
        Fa = schwarz_christoffel(pair, a)
        Fp = schwarz_christoffel(pair, a + delta)
        Fm = schwarz_christoffel(pair, a - delta)
        v1, v2 = Fp - Fa, Fm - Fa
        out.append(abs(float(np.angle(v2 / v1))))
    return out[0], out[1]


# --------------------------------------------------------------------------
# geodesic distance on (C, density |dw|^2)


@dataclass(frozen=True)
class GridSpec:
    """Square grid of spacing h on [x0, x1] x [y0, y1] with a neighbour radius."""

    x0: float
    x1: float
    y0: float
    y1: float
    h: float
    radius: int = 2
    gauss: int = 6

    def axes(self):
        nx = int(round((self.x1 - self.x0) / self.h)) + 1
        ny = int(round((self.y1 - self.y0) / self.h)) + 1
        if nx < 2 or ny < 2:
            raise GridError("grid has fewer than two nodes per side")
        return self.x0 + self.h * np.arange(nx), self.y0 + self.h * np.arange(ny)


def _stencil(radius: int):
    out = []
    for i in range(0, radius + 1):
        for j in range(-radius, radius + 1):
            if (i == 0 and j <= 0) or math.gcd(i, abs(j)) != 1:
                continue
            out.append((i, j))
    return out


def line_element_integral(sqrt_density: Callable, p: np.ndarray, q: np.ndarray, singular: Iterable = (),
                          n: int = 6, exponents: Iterable = ()) -> np.ndarray:
    """int_p^q sqrt(density) |dt| along straight segments, vectorised.

    Segments starting or ending on a listed singular point use the power
    substitution matching its exponent (density ~ |t - a|^(2 beta - 2)).
    """
    u, wu = _gl01(n)
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    d = q - p
    out = np.zeros(p.shape)
    mask_done = np.zeros(p.shape, dtype=bool)
    for a, b in zip(singular, exponents):
        for endpoint_is_p in (True, False):
            hit = np.abs((p if endpoint_is_p else q) - a) < 1e-12
            hit &= ~mask_done
            if not np.any(hit):
                continue
            # s = v^(1/b): s^(b-1) ds = dv / b
            v = u ** (1.0 / b)
            jac = (1.0 / b) * u ** (1.0 / b - 1.0)
            if endpoint_is_p:
                pts = p[hit, None] + v[None, :] * d[hit, None]
            else:
                pts = q[hit, None] - v[None, :] * d[hit, None]
            vals = sqrt_density(pts)
            out[hit] = (vals * jac[None, :] * wu[None, :]).sum(axis=1) * np.abs(d[hit])
            mask_done |= hit
    rest = ~mask_done
    if np.any(rest):
        pts = p[rest, None] + u[None, :] * d[rest, None]
        out[rest] = (sqrt_density(pts) * wu[None, :]).sum(axis=1) * np.abs(d[rest])
    return out


class DistanceGraph:
    """Weighted lattice graph for a conformal metric density(w)|dw|^2."""

    def __init__(self, density_fn: Callable, grid: GridSpec, singular=(), betas=()):
        xs, ys = grid.axes()
        self.grid, self.xs, self.ys = grid, xs, ys
        nx, ny = xs.size, ys.size
        self.shape = (nx, ny)
        I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        rows, cols, wts = [], [], []
        sq = lambda t: np.sqrt(density_fn(t))
        for di, dj in _stencil(grid.radius):
            ok = (I + di < nx) & (J + dj >= 0) & (J + dj < ny)
            a = (I[ok] * ny + J[ok])
            b = ((I[ok] + di) * ny + J[ok] + dj)
            pa = xs[I[ok]] + 1j * ys[J[ok]]
            pb = xs[I[ok] + di] + 1j * ys[J[ok] + dj]
            w = line_element_integral(sq, pa, pb, singular, grid.gauss, betas)
            rows.append(a)
            cols.append(b)
            wts.append(w)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        wts = np.concatenate(wts)
        n = nx * ny
        self.matrix = coo_matrix((wts, (rows, cols)), shape=(n, n)).tocsr()

    def node(self, p: complex) -> int:
        i = int(round((p.real - self.grid.x0) / self.grid.h))
        j = int(round((p.imag - self.grid.y0) / self.grid.h))
        nx, ny = self.shape
        if not (0 <= i < nx and 0 <= j < ny):
            raise GridError(f"point {p} outside the grid")
        if abs(self.xs[i] + 1j * self.ys[j] - p) > 1e-9 * max(1.0, abs(p)):
            raise GridError(f"point {p} is not a grid node")
        return i * ny + j

    def distances(self, sources: Sequence[complex], targets: Sequence[complex]) -> np.ndarray:
        src = [self.node(complex(s)) for s in sources]
        tgt = [self.node(complex(t)) for t in targets]
        D = dijkstra(self.matrix, directed=False, indices=src)
        out = D[:, tgt]
        if not np.all(np.isfinite(out)):
            raise GridError("grid does not connect the requested points")
        return out


def _pair_density_fn(pair: ConePair):
    g = pair.gamma

    def dens(t):
        with np.errstate(divide="ignore"):
            return g * g * np.abs(t - pair.a2) ** (2 * pair.beta2 - 2) * np.abs(t - pair.a3) ** (2 * pair.beta3 - 2)

    return dens


def distance_graph(pair: ConePair, grid: GridSpec) -> DistanceGraph:
    if pair.is_degenerate:
        sing, bet = [0j], [pair.gamma]
    else:
        sing, bet = [pair.a2, pair.a3], [pair.beta2, pair.beta3]
    return DistanceGraph(_pair_density_fn(pair), grid, sing, bet)


def flat_distance(pair: ConePair, p: complex, q: complex, resolution: GridSpec) -> float:
    if p == q:
        return 0.0
    G = distance_graph(pair, resolution)
    return float(G.distances([p], [q])[0, 0])


# --------------------------------------------------------------------------
# fast field evaluation for the four-dimensional metric


class _Patch:
    """phi = |F|^2 + Re P on a disc, F a primitive of f = gamma prod (t-a_j)^(b_j-1).

    On a disc free of cone points F = sum f_n z^(n+1)/(n+1) (z = t - c); on a
    disc centred at a cone point a_j, F = z^(b_j) sum g_n z^n/(n+b_j) and
    |F|^2 is single valued.  Either way phi - |F|^2 is harmonic on the disc
    (removable at a_j since both terms are bounded), and P is read off from
    an FFT of phi - |F|^2 sampled on a circle.
    """

    def __init__(self, pair: ConePair, c: complex, H: float, cone: int | None, n_f: int = 64):
        self.c, self.H, self.cone = complex(c), float(H), cone
        pts = [(pair.a2, pair.beta2), (pair.a3, pair.beta3)]
        if cone is None:
            lead, others, self.beta = pair.gamma, pts, 0.0
        else:
            lead, others, self.beta = pair.gamma, [pts[1 - cone]], pts[cone][1]
        # Taylor coefficients of lead * prod_{others} (t - a)^(b - 1) about c
        n = np.arange(n_f)
        q = np.zeros(n_f, dtype=complex)
        f0 = complex(lead)
        for a, b in others:
            d = self.c - a
            q += (b - 1) * (-1.0) ** n / d ** (n + 1)
            f0 *= np.exp((b - 1) * np.log(d))
        f = np.zeros(n_f, dtype=complex)
        f[0] = f0
        for k in range(n_f - 1):
            f[k + 1] = np.dot(q[: k + 1], f[k::-1]) / (k + 1)
        self.f = f
        self.Fc = f / (n + (1.0 if cone is None else self.beta))
        self.P = self.dP = None

    def _series(self, z):
        """(F-part, f-part) without the algebraic prefactor at a cone point."""
        V = np.polynomial.polynomial
        return V.polyval(z, self.Fc), V.polyval(z, self.f)

    def primitive(self, z):
        """|F|^2 and conj(F) * f at offsets z from the centre."""
        S1, S0 = self._series(z)
        if self.cone is None:
            F = z * S1
            return np.abs(F) ** 2, np.conj(F) * S0
        az2b = np.abs(z) ** (2 * self.beta)
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = np.where(z == 0, 0.0, az2b / z * np.conj(S1) * S0)
        return az2b * np.abs(S1) ** 2, grad

    def fit(self, phi_fn, m: int = 64, frac: float = 0.5):
        rho = frac * self.H
        e = np.exp(2j * np.pi * np.arange(m) / m)
        z = rho * e
        h = phi_fn(self.c + z) - self.primitive(z)[0]
        hat = np.fft.fft(h) / m
        k = np.arange(m // 2)
        coef = 2.0 * hat[: m // 2] / rho**k
        coef[0] = hat[0].real
        self.P = coef
        self.dP = 0.5 * coef[1:] * k[1:]

    def eval(self, t):
        V = np.polynomial.polynomial
        z = t - self.c
        sq, grad = self.primitive(z)
        return sq + V.polyval(z, self.P).real, grad + V.polyval(z, self.dP)


class _NearSeries:
    """Covering of the disc |xi| <= R by _Patch discs, each used at ratio <= kappa."""

    def __init__(self, pair: ConePair, ev: "FlatPotential", R: float, kappa: float = 0.5, m: int = 80):
        self.pair, self.ev, self.m = pair, ev, m
        self.kappa = kappa
        d23 = abs(pair.a2 - pair.a3)
        cones = [pair.a2, pair.a3]
        patches = [_Patch(pair, a, d23, j) for j, a in enumerate(cones)]

        def dist(c):
            return min(abs(c - a) for a in cones)

        stack = [(0j, 1.02 * R)]  # (centre, half side)
        while stack:
            c, b = stack.pop()
            corners = [c + b * complex(sx, sy) for sx in (-1, 1) for sy in (-1, 1)]
            if any(max(abs(x - a) for x in corners) <= kappa * d23 for a in cones):
                continue
            if math.hypot(max(abs(c.real) - b, 0.0), max(abs(c.imag) - b, 0.0)) > R:
                continue
            if b * math.sqrt(2) <= kappa * dist(c):
                patches.append(_Patch(pair, c, dist(c), None))
                continue
            h = 0.5 * b
            stack.extend([(c + h * complex(sx, sy), h) for sx in (-1, 1) for sy in (-1, 1)])
        self.patches = patches
        self.centres = np.array([p.c for p in patches])
        self.radii = np.array([p.H for p in patches])

    def __call__(self, xi):
        """(phi, d phi / d xi) at points with |xi| <= R."""
        xi = np.atleast_1d(np.asarray(xi, dtype=complex))
        phi = np.empty(xi.shape)
        dphi = np.empty(xi.shape, dtype=complex)
        flat = xi.ravel()
        out_p, out_d = phi.reshape(-1), dphi.reshape(-1)
        for s in range(0, flat.size, 20000):
            chunk = flat[s : s + 20000]
            ratio = np.abs(chunk[:, None] - self.centres[None, :]) / self.radii[None, :]
            best = np.argmin(ratio, axis=1)
            for j in np.unique(best):
                sel = best == j
                patch = self.patches[j]
                if patch.P is None:  # fitted on first use
                    patch.fit(self.ev.value, self.m, self.kappa)
                v, g = patch.eval(chunk[sel])
                out_p[s : s + chunk.size][sel] = v
                out_d[s : s + chunk.size][sel] = g
        return phi, dphi


class FlatField:
    """phi and its derivatives at many points, with a tabulated far field.

    Inside ``|xi| <= near_radius`` values come from the quadrature.  Outside,
    phi0 = phi - |xi|^(2g) - A log|xi| is written as ``r^(2g-2) G(log r, theta)``
    with G smooth and slowly varying; G is interpolated by a Chebyshev series
    in log r times a trigonometric series in theta, and held constant in
    log r beyond ``r_max``.
    """

    def __init__(self, pair: ConePair, q: QuadratureSpec | None = None, near_radius: float | None = None,
                 r_max: float = 1e8, n_log: int = 12, n_theta: int = 24, series: bool = True):
        self.pair = pair
        self.series = series and not pair.is_degenerate
        self._near = None
        self.ev = _evaluator(pair, q)
        self.A = self.ev.asymptotic().A
        self.eps = 2.0 - 2.0 * pair.gamma
        self.near_radius = float(near_radius or 4.0 * pair.scale)
        self.x0, self.x1 = math.log(self.near_radius), math.log(r_max)
        self._coef = None
        self.n_log, self.n_theta = n_log, n_theta

    def _panels(self):
        # graded panels in log r: short near the cone points, long far out
        edges, w = [self.x0], 1.0
        while edges[-1] + w < self.x1:
            edges.append(edges[-1] + w)
            w *= 2.0
        edges.append(self.x1)
        return list(zip(edges[:-1], edges[1:]))

    def _table(self):
        if self._coef is None:
            C = np.polynomial.chebyshev
            k = np.arange(self.n_log)
            xh = np.cos(np.pi * (k + 0.5) / self.n_log)
            th = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
            self._coef = []
            for a, b in self._panels():
                r = np.exp(0.5 * (b - a) * (xh + 1) + a)[:, None]
                pts = r * np.exp(1j * th)[None, :]
                if self.pair.is_degenerate:
                    g = np.zeros(pts.shape)
                else:
                    g = self.ev.phi0(pts.ravel()).reshape(pts.shape) * r**self.eps
                cheb = C.chebfit(xh, g, self.n_log - 1)
                self._coef.append((a, b, np.fft.fft(cheb, axis=1) / self.n_theta))
        return self._coef

    def _far(self, xi):
        """phi0 and d phi0 / d xi for |xi| > near_radius."""
        C = np.polynomial.chebyshev
        r, th = np.abs(xi), np.angle(xi)
        lr = np.log(r)
        x = np.clip(lr, self.x0, self.x1)
        m = np.fft.fftfreq(self.n_theta, 1.0 / self.n_theta)
        if self.n_theta % 2 == 0:
            m[self.n_theta // 2] = 0.0  # drop the unresolved Nyquist mode
        E = np.exp(1j * np.outer(th, m))
        g = np.zeros(r.shape)
        gx = np.zeros(r.shape)
        gt = np.zeros(r.shape)
        tab = self._table()
        for i, (a, b, c) in enumerate(tab):
            sel = (x >= a) & ((x < b) | (i == len(tab) - 1))
            if not np.any(sel):
                continue
            xh = (2 * x[sel] - a - b) / (b - a)
            V = C.chebvander(xh, self.n_log - 1)
            dc = C.chebder(c, axis=0, scl=2 / (b - a))
            Vc = V @ c
            g[sel] = np.real(np.sum(Vc * E[sel], axis=1))
            gt[sel] = np.real(np.sum(Vc * (1j * m)[None, :] * E[sel], axis=1))
            gx[sel] = np.real(np.sum((C.chebvander(xh, self.n_log - 2) @ dc) * E[sel], axis=1))
        gx = np.where(lr < self.x1, gx, 0.0)
        re = r**-self.eps
        phi0 = re * g
        dphi0 = 0.5 / xi * re * (gx - self.eps * g - 1j * gt)
        return phi0, dphi0

    def correction_terms(self, xi):
        """(N, dN/dxi, d^2N/dxi dxibar) for N = phi - |xi|^(2 gamma)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=complex))
        g = self.pair.gamma
        N = np.empty(xi.shape)
        Nx = np.empty(xi.shape, dtype=complex)
        far = np.abs(xi) > self.near_radius
        if np.any(far):
            p0, dp0 = self._far(xi[far])
            N[far] = self.A * np.log(np.abs(xi[far])) + p0
            Nx[far] = self.A / (2 * xi[far]) + dp0
        if np.any(~far):
            near = xi[~far]
            if self.series:
                phi, dphi = self.near_series()(near)
                a = np.abs(near)
                with np.errstate(divide="ignore", invalid="ignore"):
                    lead = np.where(a > 0, g * np.conj(near) * a ** (2 * g - 2), 0.0)
                N[~far] = phi - a ** (2 * g)
                Nx[~far] = dphi - lead
            else:
                N[~far] = self.ev.correction(near)
                Nx[~far] = self.ev.correction_gradient(near)
        return N, Nx, g * g * f_values(self.pair, xi)

    def near_series(self) -> _NearSeries:
        if self._near is None:
            self._near = _NearSeries(self.pair, self.ev, self.near_radius)
        return self._near

    def phi_terms(self, xi):
        """(phi, dphi/dxi, density)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=complex))
        g = self.pair.gamma
        N, Nx, _ = self.correction_terms(xi)
        a = np.abs(xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            lead = np.where(a > 0, g * np.conj(xi) * a ** (2 * g - 2), 0.0)
        return a ** (2 * g) + N, lead + Nx, density(self.pair, xi)


_FIELDS: dict = {}


def flat_field(pair: ConePair, q: QuadratureSpec | None = None) -> FlatField:
    key = (pair, q or QuadratureSpec())
    if key not in _FIELDS:
        _FIELDS[key] = FlatField(pair, key[1])
    return _FIELDS[key]


# --------------------------------------------------------------------------
# CSV emission

FLAT_COLUMNS = ("re_w", "im_w", "phi", "dphi_re", "dphi_im", "density")


def field_table(pair: ConePair, points: np.ndarray, q: QuadratureSpec | None = None) -> np.ndarray:
    pts = np.asarray(points, dtype=complex).ravel()
    ev = _evaluator(pair, q)
    phi = ev.value(pts)
    dphi = ev.gradient(pts)
    dens = density(pair, pts)
    return np.column_stack([pts.real, pts.imag, phi, dphi.real, dphi.imag, dens])


def write_field_csv(path, table: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(FLAT_COLUMNS)
        for row in table:
            wr.writerow([f"{x:.17g}" for x in row])
