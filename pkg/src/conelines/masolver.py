"""Dirichlet problem for the complex Monge-Ampere equation on a small ball.

Solves  log det(G + ddbar u) - log det G = h  with u = 0 on the boundary of a
ball in an affine holomorphic chart x -> y = y0 + s B x, where B is the
orthonormal frame of the metric at y0.  Because the chart is holomorphic the
complex Hessian in chart coordinates is the complex Hessian of u; the metric
is divided by s^2 and u measured in the same units, which leaves the equation
unchanged.

Second derivatives use the 3-point rule on the axes.  Each mixed derivative
u_ab uses the 7-point rule along the diagonal e_a + e_b or e_a - e_b chosen by
the sign of its coefficient in the linearisation at u = 0, so the discrete
Laplacian of a diagonally dominant metric is an M-matrix.  Nodes inside tubes
around the conical lines carry Dirichlet value 0 and are left out of every
residual.  The Calabi-Yau check re-evaluates ddbar u with fourth-order
stencils.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import pyamg
from scipy.sparse.linalg import gmres, spsolve

from .ansatz import AnsatzParams, metric, transform
from .errors import ConfigError, ConvergenceError, FitError, PositivityError, SetupError
from .ricci import VolumeForm, ricci_potential

X1, Y1, X2, Y2 = range(4)
AXES = (X1, Y1, X2, Y2)
# mixed pairs entering the complex Hessian
PAIRS = ((X1, X2), (Y1, Y2), (X1, Y2), (Y1, X2))


def _to_complex(x: np.ndarray) -> np.ndarray:
    """(N, 4) real chart points -> (N, 2) complex."""
    return x[:, 0::2] + 1j * x[:, 1::2]


def complex_hessian(D: dict) -> tuple:
    """(F11, F12, F22) from real second derivatives D[(a, b)]."""
    F11 = 0.25 * (D[X1, X1] + D[Y1, Y1])
    F22 = 0.25 * (D[X2, X2] + D[Y2, Y2])
    F12 = 0.25 * (D[X1, X2] + D[Y1, Y2] + 1j * (D[X1, Y2] - D[Y1, X2]))
    return F11, F12, F22


def _coefficients(g11, g12, g22) -> dict:
    """d log det(G) / d D_ab for the second derivatives entering the complex Hessian."""
    det = g11 * g22 - np.abs(g12) ** 2
    k = {(X1, X1): g22 / (4 * det), (Y1, Y1): g22 / (4 * det),
         (X2, X2): g11 / (4 * det), (Y2, Y2): g11 / (4 * det),
         (X1, X2): -g12.real / (2 * det), (Y1, Y2): -g12.real / (2 * det),
         (X1, Y2): -g12.imag / (2 * det), (Y1, X2): g12.imag / (2 * det)}
    return k


# --------------------------------------------------------------------------
# problem definition


@dataclass(frozen=True)
class ChartLine:
    """The complex line {n . x + c = 0} in chart coordinates."""

    n: tuple
    c: complex

    def distance(self, xc: np.ndarray) -> np.ndarray:
        n = np.asarray(self.n, dtype=complex)
        return np.abs(xc @ n + self.c) / np.linalg.norm(n)


@dataclass(frozen=True)
class MAProblem:
    """Monge-Ampere Dirichlet problem on the chart ball |x| <= radius.

    metric_fn, rhs_fn and density_fn take (N, 2) complex chart points and
    return the chart metric (N, 2, 2), the right-hand side h and the target
    volume density with det(G + ddbar u) = density at a solution.
    """

    metric_fn: Callable
    rhs_fn: Callable
    density_fn: Callable
    lines: tuple = ()
    radius: float = 0.125
    mesh: float = 1 / 64
    mask_cells: float = 4.0
    tol: float = 1e-11
    step_floor: float = 2.0**-20
    max_newton: int = 30
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def mask_radius(self) -> float:
        return self.mask_cells * self.mesh

    def validate(self) -> None:
        if not (self.radius > 0 and 0 < self.mesh < self.radius):
            raise ConfigError("need 0 < mesh < radius")
        if self.lines and self.mask_radius < 2 * self.mesh * (1 - 1e-12):
            raise ConfigError("mask radius must be at least two mesh cells")
        if not 0 < self.step_floor < 1:
            raise ConfigError("step floor must lie in (0, 1)")

    @classmethod
    def ansatz(cls, p: AnsatzParams, z0: complex = 0.01, offset: float = 0.04, scale: float = 0.16,
               **kw) -> "MAProblem":
        """Ball crossed by L2 near (z0, a2 z0), centred at chart distance ``offset`` from it."""
        pr = p.pair
        vf = VolumeForm.of(p)
        # step off L2 along w until the line sits at chart distance `offset`
        y_line = np.array([z0, pr.a2 * z0], dtype=complex)
        row2 = np.array([-pr.a2, 1.0], dtype=complex)
        e_w = np.array([0.0, 1.0], dtype=complex)
        d = 1e-3 * abs(z0)
        for _ in range(60):
            y0 = y_line + d * e_w
            G = metric(p, y0[:1], y0[1:]).matrix()[0]
            B = np.linalg.inv(np.linalg.cholesky(G).T)
            dist = d / np.linalg.norm(scale * (row2 @ B))
            if abs(dist / offset - 1) < 1e-12:
                break
            d *= offset / dist
        else:
            raise SetupError("could not place the ball centre at the requested offset")
        A = scale * B
        detB2 = abs(np.linalg.det(B)) ** 2

        def phys(xc):
            y = y0[None, :] + xc @ A.T
            return y[:, 0], y[:, 1]

        def metric_fn(xc):
            z, w = phys(xc)
            return transform(metric(p, z, w), B[None]).matrix()

        def rhs_fn(xc):
            z, w = phys(xc)
            return ricci_potential(p, z, w)

        def density_fn(xc):
            z, w = phys(xc)
            return vf.density(z, w) * detB2

        lines = []
        for row in (np.array([1, 0], complex), np.array([-pr.a2, 1], complex), np.array([-pr.a3, 1], complex)):
            lines.append(ChartLine(tuple(row @ A), complex(row @ y0)))
        meta = {"kind": "ansatz", "z0": [z0.real if isinstance(z0, complex) else float(z0),
                                          z0.imag if isinstance(z0, complex) else 0.0],
                "offset": offset, "scale": scale,
                "center": [[c.real, c.imag] for c in y0]}
        return cls(metric_fn, rhs_fn, density_fn, tuple(lines), meta=meta, **kw)

    @classmethod
    def flat(cls, rhs_fn: Callable, **kw) -> "MAProblem":
        """Euclidean C^2 (metric identity, i ddbar |x|^2) with right-hand side rhs_fn."""

        def metric_fn(xc):
            G = np.zeros((xc.shape[0], 2, 2), dtype=complex)
            G[:, 0, 0] = G[:, 1, 1] = 1.0
            return G

        def density_fn(xc):
            return np.exp(rhs_fn(xc))

        return cls(metric_fn, rhs_fn, density_fn, (), meta={"kind": "flat"}, **kw)

    @classmethod
    def from_json(cls, doc, p: AnsatzParams | None = None) -> "MAProblem":
        """Problem from a JSON document (dict or path) with the keys of MA_CONFIG_KEYS."""
        if not isinstance(doc, dict):
            with open(doc) as fh:
                doc = json.load(fh)
        unknown = set(doc) - set(MA_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown Monge-Ampere keys {sorted(unknown)}")
        kw = {k: doc[k] for k in ("radius", "mesh", "mask_cells", "tol", "step_floor", "max_newton") if k in doc}
        geo = {k: doc[k] for k in ("offset", "scale") if k in doc}
        if "z0" in doc:
            z = doc["z0"]
            geo["z0"] = complex(z[0], z[1]) if isinstance(z, (list, tuple)) else complex(z)
        prob = cls.ansatz(p or AnsatzParams.default(), **geo, **kw)
        prob.validate()
        return prob


MA_CONFIG_KEYS = ("radius", "mesh", "mask_cells", "tol", "step_floor", "max_newton", "z0", "offset", "scale")


# --------------------------------------------------------------------------
# grid and discrete operator


@dataclass
class ChartGrid:
    """Lattice points of the chart ball with masks and neighbour lookup."""

    n: int
    mesh: float
    idx: np.ndarray  # (N, 4) integer lattice coordinates
    lookup: np.ndarray  # padded 4D array of node numbers, -1 outside
    pad: int
    masked: np.ndarray
    interior: np.ndarray  # full second-order stencil inside the ball

    @property
    def unknown(self) -> np.ndarray:
        """Nodes solved for: interior nodes, masked or not."""
        return self.interior

    @property
    def dirichlet(self) -> np.ndarray:
        return ~self.interior

    @property
    def points(self) -> np.ndarray:
        return self.idx * self.mesh

    @property
    def complex_points(self) -> np.ndarray:
        return _to_complex(self.points)

    def neighbour(self, nodes: np.ndarray, offset) -> np.ndarray:
        j = self.idx[nodes] + np.asarray(offset) + self.n + self.pad
        return self.lookup[j[:, 0], j[:, 1], j[:, 2], j[:, 3]]


def build_grid(prob: MAProblem, pad: int = 2) -> ChartGrid:
    prob.validate()
    h = prob.mesh
    n = int(math.ceil(prob.radius / h - 1e-9))
    r = np.arange(-n, n + 1)
    idx = np.stack(np.meshgrid(r, r, r, r, indexing="ij"), -1).reshape(-1, 4)
    keep = np.sum((idx * h) ** 2, axis=1) <= prob.radius**2 * (1 + 1e-12)
    idx = idx[keep]
    side = 2 * n + 1 + 2 * pad
    lookup = -np.ones((side,) * 4, dtype=np.int64)
    j = idx + n + pad
    lookup[j[:, 0], j[:, 1], j[:, 2], j[:, 3]] = np.arange(idx.shape[0])
    xc = _to_complex(idx * h)
    masked = np.zeros(idx.shape[0], bool)
    for ln in prob.lines:
        masked |= ln.distance(xc) < prob.mask_radius
    grid = ChartGrid(n, h, idx, lookup, pad, masked, np.zeros(idx.shape[0], bool))
    nodes = np.arange(idx.shape[0])
    inside = np.ones(idx.shape[0], bool)
    for off in _stencil_offsets():
        inside &= grid.neighbour(nodes, off) >= 0
    grid.interior = inside
    return grid


def _unit(a):
    e = np.zeros(4, dtype=np.int64)
    e[a] = 1
    return e


def _stencil_offsets():
    offs = []
    for a in AXES:
        offs += [_unit(a), -_unit(a)]
    for a, b in PAIRS:
        for sa, sb in itertools.product((1, -1), repeat=2):
            offs.append(sa * _unit(a) + sb * _unit(b))
    return offs


class DiscreteMA:
    """The discrete operator MA(u) = log det(G + F(u)) - log det G on a chart grid."""

    def __init__(self, prob: MAProblem, grid: ChartGrid | None = None):
        self.prob = prob
        self.grid = grid or build_grid(prob)
        g = self.grid
        N = g.idx.shape[0]
        live = ~g.masked
        xc = g.complex_points
        G = np.full((N, 2, 2), np.nan, dtype=complex)
        G[live] = prob.metric_fn(xc[live])
        g11, g12, g22 = G[:, 0, 0].real, G[:, 0, 1], G[:, 1, 1].real
        det = g11 * g22 - np.abs(g12) ** 2
        bad = live & ~((g11 > 0) & (det > 0))
        if np.any(bad):
            raise SetupError(f"metric not positive at {int(bad.sum())} unmasked nodes")
        self.g11, self.g12, self.g22 = g11, g12, g22
        self.logdet = np.log(np.where(live, det, 1.0))
        self.h = np.zeros(N)
        self.h[live] = prob.rhs_fn(xc[live])
        self.density = np.full(N, np.nan)
        self.density[live] = prob.density_fn(xc[live])
        # equation rows: Monge-Ampere off the mask, flat averaging inside it
        self.rows = np.flatnonzero(g.interior & live)
        self.mask_rows = np.flatnonzero(g.interior & g.masked)
        self.unknowns = np.concatenate([self.rows, self.mask_rows])
        self.stencils = self._stencils()
        self.averaging = self._averaging()

    @property
    def n_unknown(self) -> int:
        return self.unknowns.size

    def _averaging(self) -> sp.csr_matrix:
        """Flat trace Laplacian (sum of axis neighbours - 8u) / 4h^2 at the masked rows."""
        g, r = self.grid, self.mask_rows
        m, N = r.size, g.idx.shape[0]
        cols = [g.neighbour(r, s * _unit(a)) for a in AXES for s in (1, -1)] + [r]
        c = 1 / (4 * self.prob.mesh**2)
        vals = [c] * 8 + [-8 * c]
        return _csr(np.arange(m), cols, vals, m, N)

    def _stencils(self) -> dict:
        """Sparse maps from all node values to D_ab at the unknown nodes."""
        g, rows, h2 = self.grid, self.rows, self.prob.mesh**2
        N, m = g.idx.shape[0], rows.size
        k0 = _coefficients(self.g11[rows], self.g12[rows], self.g22[rows])
        out = {}
        ar = np.arange(m)
        for a in AXES:
            cols = [g.neighbour(rows, _unit(a)), rows, g.neighbour(rows, -_unit(a))]
            vals = [1.0, -2.0, 1.0]
            out[a, a] = _csr(ar, cols, [np.full(m, v / h2) for v in vals], m, N)
        for a, b in PAIRS:
            sgn = np.where(k0[a, b] >= 0, 1, -1)
            ea, eb = _unit(a), _unit(b)
            plus = np.stack([g.neighbour(rows, ea + eb), g.neighbour(rows, -ea - eb)])
            minus = np.stack([g.neighbour(rows, ea - eb), g.neighbour(rows, -ea + eb)])
            diag = np.where(sgn > 0, plus, minus)
            cols = [diag[0], diag[1], g.neighbour(rows, ea), g.neighbour(rows, -ea),
                    g.neighbour(rows, eb), g.neighbour(rows, -eb), rows]
            w = sgn / (2 * h2)
            vals = [w, w, -w, -w, -w, -w, 2 * w]
            out[a, b] = _csr(ar, cols, vals, m, N)
        return out

    def second_derivatives(self, u: np.ndarray) -> dict:
        return {k: S @ u for k, S in self.stencils.items()}

    def forms(self, u: np.ndarray):
        """Coefficients of G + F(u) at the unknown nodes."""
        F11, F12, F22 = complex_hessian(self.second_derivatives(u))
        r = self.rows
        return self.g11[r] + F11, self.g12[r] + F12, self.g22[r] + F22

    def apply(self, u: np.ndarray) -> np.ndarray:
        """MA(u) at the unknown nodes; NaN where G + F(u) is not positive."""
        a11, a12, a22 = self.forms(u)
        det = a11 * a22 - np.abs(a12) ** 2
        ok = (a11 > 0) & (det > 0)
        out = np.full(a11.shape, np.nan)
        out[ok] = np.log(det[ok]) - self.logdet[self.rows][ok]
        return out

    def residual(self, u: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """MA(u) - rhs off the mask, then the averaging rows inside it."""
        return np.concatenate([self.apply(u) - rhs, self.averaging @ u])

    def jacobian(self, u: np.ndarray, full: bool = False) -> sp.csr_matrix:
        """Derivative of ``residual`` in the unknowns (all node columns if ``full``)."""
        a11, a12, a22 = self.forms(u)
        k = _coefficients(a11, a12, a22)
        J = None
        for key, S in self.stencils.items():
            term = sp.diags(k[key]) @ S
            J = term if J is None else J + term
        J = sp.vstack([J, self.averaging]).tocsc()
        return J.tocsr() if full else J[:, self.unknowns].tocsr()

    def laplacian(self, full: bool = False) -> sp.csr_matrix:
        """tr_omega(i ddbar .) off the mask: the linearisation at u = 0."""
        return self.jacobian(np.zeros(self.grid.idx.shape[0]), full)

    def lift(self, v: np.ndarray) -> np.ndarray:
        """Unknown values -> all nodes, zero Dirichlet data elsewhere."""
        u = np.zeros(self.grid.idx.shape[0])
        u[self.unknowns] = v
        return u


def _csr(rows, cols, vals, m, N):
    r = np.concatenate([rows] * len(cols))
    c = np.concatenate(cols)
    v = np.concatenate([np.broadcast_to(x, rows.shape) for x in vals])
    return sp.csr_matrix((v, (r, c)), shape=(m, N))


def assemble(prob: MAProblem) -> DiscreteMA:
    return DiscreteMA(prob)


# --------------------------------------------------------------------------
# Newton iteration


@dataclass
class MASolution:
    problem: MAProblem
    op: DiscreteMA
    u: np.ndarray  # values at every grid node
    residuals: list  # RMS residual after each accepted step, starting with the initial one
    max_residuals: list
    steps: list  # damping factor of each accepted step
    converged: bool
    sup_norm: float = 0.0
    holder: float = float("nan")

    def log_rows(self) -> list[tuple]:
        rows = [(0, float("nan"), self.residuals[0], self.max_residuals[0])]
        for i, (t, r, m) in enumerate(zip(self.steps, self.residuals[1:], self.max_residuals[1:]), 1):
            rows.append((i, t, r, m))
        return rows


DIRECT_LIMIT = 4_000


def linear_solve(J: sp.csr_matrix, b: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """Sparse LU for small systems, GMRES with an algebraic multigrid preconditioner otherwise."""
    if J.shape[0] <= DIRECT_LIMIT:
        return spsolve(J.tocsc(), b)
    ml = pyamg.smoothed_aggregation_solver(J, symmetry="nonsymmetric")
    scale = float(np.linalg.norm(b)) or 1.0
    x, info = gmres(J, b, rtol=rtol, atol=0.0, M=ml.aspreconditioner(), restart=50, maxiter=40)
    if info != 0 or np.linalg.norm(J @ x - b) > 1e3 * rtol * scale:
        raise ConvergenceError("linear solve did not converge", {"info": info, "size": J.shape[0]})
    return x


def _rms(x):
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def solve_newton(prob: MAProblem | DiscreteMA, rhs: np.ndarray | None = None, u0: np.ndarray | None = None,
                 holder_alpha: float = 0.5) -> MASolution:
    """Damped Newton iteration for MA(u) = rhs (default: the problem's h).

    ``rhs`` holds one value per Monge-Ampere row, or one per unknown when the
    averaging rows inside the mask also get a target.
    """
    op = prob if isinstance(prob, DiscreteMA) else DiscreteMA(prob)
    P = op.prob
    f = op.h[op.rows] if rhs is None else np.asarray(rhs, dtype=float)
    g = np.zeros(op.mask_rows.size)
    if f.size == op.n_unknown:
        f, g = f[: op.rows.size], f[op.rows.size:]
    u = np.zeros(op.grid.idx.shape[0]) if u0 is None else np.array(u0, dtype=float)
    R = op.residual(u, f) - np.concatenate([np.zeros(f.size), g])
    if np.any(~np.isfinite(R)):
        raise PositivityError("initial guess is not admissible")
    res, mres, steps = [_rms(R)], [float(np.max(np.abs(R), initial=0.0))], []
    converged = mres[-1] < P.tol
    it = 0
    while not converged and it < P.max_newton:
        it += 1
        J = op.jacobian(u)
        du = op.lift(linear_solve(J, -R))
        t, accepted, pos_lost = 1.0, False, False
        while t >= P.step_floor:
            un = u + t * du
            Rn = op.residual(un, f) - np.concatenate([np.zeros(f.size), g])
            if np.all(np.isfinite(Rn)):
                if _rms(Rn) <= (1 - 1e-4 * t) * res[-1]:
                    accepted = True
                    break
            else:
                pos_lost = True
            t *= 0.5
        if not accepted:
            diag = {"residuals": res, "steps": steps, "last_step": t}
            if pos_lost:
                raise PositivityError("omega_u lost positivity at every damping factor")
            raise ConvergenceError("damping floor reached", diag)
        u, R = un, Rn
        res.append(_rms(R))
        mres.append(float(np.max(np.abs(R))))
        steps.append(t)
        converged = mres[-1] < P.tol
    if not converged:
        raise ConvergenceError("Newton iteration limit reached", {"residuals": res, "steps": steps})
    sol = MASolution(P, op, u, res, mres, steps, True, float(np.max(np.abs(u), initial=0.0)))
    sol.holder = hessian_holder(sol, holder_alpha)
    return sol


# --------------------------------------------------------------------------
# verification


_D1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
_D2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}


def _verification_nodes(op: DiscreteMA) -> np.ndarray:
    """Unknown nodes whose fourth-order stencils stay on unmasked grid nodes."""
    g = op.grid
    rows = op.rows
    ok = np.ones(rows.size, bool)
    for a in AXES:
        for s in (-2, -1, 1, 2):
            nb = g.neighbour(rows, s * _unit(a))
            ok &= nb >= 0
            ok &= ~g.masked[np.where(nb >= 0, nb, 0)]
    for a, b in PAIRS:
        for sa, sb in itertools.product((-2, -1, 1, 2), repeat=2):
            nb = g.neighbour(rows, sa * _unit(a) + sb * _unit(b))
            ok &= nb >= 0
            ok &= ~g.masked[np.where(nb >= 0, nb, 0)]
    return rows[ok]


def fourth_order_hessian(op: DiscreteMA, u: np.ndarray, nodes: np.ndarray):
    g, h = op.grid, op.prob.mesh
    D = {}
    for a in AXES:
        D[a, a] = sum(c * u[g.neighbour(nodes, s * _unit(a))] for s, c in _D2.items()) / h**2
    for a, b in PAIRS:
        acc = 0.0
        for (sa, ca), (sb, cb) in itertools.product(_D1.items(), _D1.items()):
            acc = acc + ca * cb * u[g.neighbour(nodes, sa * _unit(a) + sb * _unit(b))]
        D[a, b] = acc / h**2
    return complex_hessian(D)


@dataclass
class CYReport:
    nodes: np.ndarray
    relative_error: np.ndarray
    max: float
    median: float
    mesh: float
    mask_radius: float

    def to_dict(self) -> dict:
        return {"n_nodes": int(self.nodes.size), "max": self.max, "median": self.median,
                "mesh": self.mesh, "mask_radius": self.mask_radius}


def verify_cy(p: AnsatzParams | None, sol: MASolution) -> CYReport:
    """Pointwise |det(G + ddbar u) / density - 1| at nodes clear of the masks.

    ddbar u is re-evaluated with fourth-order stencils; density is the chart
    form of beta1^2 gamma^2 prod |l_j|^(2 beta_j - 2).
    """
    op = sol.op
    nodes = _verification_nodes(op)
    F11, F12, F22 = fourth_order_hessian(op, sol.u, nodes)
    a11, a12, a22 = op.g11[nodes] + F11, op.g12[nodes] + F12, op.g22[nodes] + F22
    det = a11 * a22 - np.abs(a12) ** 2
    err = np.abs(det / op.density[nodes] - 1.0)
    if err.size == 0:
        return CYReport(nodes, err, float("nan"), float("nan"), op.prob.mesh, op.prob.mask_radius)
    return CYReport(nodes, err, float(err.max()), float(np.median(err)), op.prob.mesh, op.prob.mask_radius)


# --------------------------------------------------------------------------
# Campanato seminorm

_VOL_B4 = math.pi**2 / 2


def _ball_samples(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=1)[:, None]
    return x * rng.random(n)[:, None] ** 0.25


def campanato_profile(field, alpha: float, centers, radii: Sequence[float], n: int = 512, seed: int = 0,
                      min_samples: int = 16) -> np.ndarray:
    """r^-alpha ||f - mean||_{B(c, r)} for every center (rows) and radius (columns).

    ``field`` is a callable on (N, 4) points, or a pair (points, values) of
    samples; with samples, each ball uses the samples it contains.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    out = np.empty((centers.shape[0], len(radii)))
    unit = _ball_samples(n, seed)
    for i, c in enumerate(centers):
        for j, r in enumerate(radii):
            if callable(field):
                v = np.asarray(field(c + r * unit), dtype=float)
            else:
                pts, vals = field
                sel = np.sum((np.asarray(pts) - c) ** 2, axis=1) <= r * r
                if sel.sum() < min_samples:
                    raise FitError(f"{int(sel.sum())} samples in the ball of radius {r:g}; need {min_samples}")
                v = np.asarray(vals, dtype=float)[sel]
            out[i, j] = r ** (-alpha) * math.sqrt(_VOL_B4 * np.mean((v - v.mean()) ** 2))
    return out


def holder_seminorm(field, alpha: float, centers, radii: Sequence[float] | None = None, **kw) -> float:
    """Campanato estimate of the C^alpha seminorm: sup over centers and dyadic radii."""
    radii = list(radii) if radii is not None else [2.0**-k for k in range(1, 7)]
    return float(np.max(campanato_profile(field, alpha, centers, radii, **kw)))


def hessian_holder(sol: MASolution, alpha: float = 0.5) -> float:
    """Campanato seminorm of |ddbar u| from the grid samples, centred where the mask is farthest."""
    op = sol.op
    F11, F12, F22 = complex_hessian(op.second_derivatives(sol.u))
    vals = np.sqrt(F11**2 + 2 * np.abs(F12) ** 2 + F22**2)
    pts = op.grid.points[op.rows]
    P = op.prob
    clear = P.radius - np.linalg.norm(pts, axis=1)
    xc = _to_complex(pts)
    for ln in P.lines:
        clear = np.minimum(clear, ln.distance(xc) - P.mask_radius)
    i = int(np.argmax(clear))
    d2 = np.sum((pts - pts[i]) ** 2, axis=1)
    radii = [clear[i] / 2**k for k in range(4) if np.sum(d2 <= (clear[i] / 2**k) ** 2) >= 8]
    if not radii:
        return float("nan")
    return holder_seminorm((pts, vals), alpha, pts[i:i + 1], radii, min_samples=8)


# --------------------------------------------------------------------------
# outputs

SOLUTION_COLUMNS = ("x1", "y1", "x2", "y2", "masked", "unknown", "u", "h", "cy_error")
LOG_COLUMNS = ("step", "damping", "rms_residual", "max_residual")


def write_solution_csv(path, sol: MASolution, report: CYReport | None = None) -> None:
    op = sol.op
    err = np.full(op.grid.idx.shape[0], np.nan)
    if report is not None:
        err[report.nodes] = report.relative_error
    pts = op.grid.points
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SOLUTION_COLUMNS)
        for i in range(pts.shape[0]):
            wr.writerow([repr(float(v)) for v in pts[i]] +
                        [int(op.grid.masked[i]), int(op.grid.unknown[i]), repr(float(sol.u[i])),
                         repr(float(op.h[i])), repr(float(err[i]))])


def write_log_csv(path, sol: MASolution) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(LOG_COLUMNS)
        for r in sol.log_rows():
            wr.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


def summary(sol: MASolution, report: CYReport | None = None) -> dict:
    P = sol.problem
    doc = {"problem": {"radius": P.radius, "mesh": P.mesh, "mask_cells": P.mask_cells, "tol": P.tol,
                       "step_floor": P.step_floor, **P.meta},
           "n_nodes": int(sol.op.grid.idx.shape[0]), "n_unknown": int(sol.op.n_unknown),
           "n_masked": int(sol.op.grid.masked.sum()), "newton_steps": len(sol.steps),
           "residuals": sol.residuals, "damping": sol.steps, "converged": sol.converged,
           "sup_u": sol.sup_norm, "hessian_holder": sol.holder}
    if report is not None:
        doc["cy"] = report.to_dict()
    return doc
