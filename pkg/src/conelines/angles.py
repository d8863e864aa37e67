"""Cone-angle configurations, the collapsed angle and stability classes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, UnstableRangeError, ConfigError

SEMISTABLE_TOL = 1e-12


@dataclass(frozen=True)
class AngleConfig:
    """Sorted cone-angle factors beta_1 <= ... <= beta_d with derived gamma.

    ``perm[k]`` is the index in the caller's input of the k-th sorted angle.
    """

    betas: tuple
    gamma: float
    perm: tuple = ()
    strictly_unstable: bool = False
    gamma_in_range: bool = False

    @property
    def d(self) -> int:
        return len(self.betas)

    @property
    def beta1(self) -> float:
        return self.betas[0]

    def weights(self) -> "Weights":
        return Weights(tuple(1.0 - b for b in self.betas))

    def gamma_residual(self) -> float:
        """(1 - gamma) - sum_{j>=2} (1 - beta_j); zero up to rounding."""
        return (1.0 - self.gamma) - float(np.sum(1.0 - np.asarray(self.betas[1:])))


@dataclass(frozen=True)
class Weights:
    mus: tuple

    def __post_init__(self):
        m = np.asarray(self.mus, dtype=float)
        if m.ndim != 1 or m.size < 3:
            raise DomainError("need at least three weights")
        if not np.all(np.isfinite(m)) or np.any(m <= 0.0) or np.any(m >= 1.0):
            raise DomainError(f"weights must lie in (0,1): {self.mus}")

    def to_config(self) -> AngleConfig:
        return validate_config([1.0 - m for m in self.mus])


@dataclass(frozen=True)
class StabilityClass:
    tag: str  # "stable" | "semistable" | "unstable" | "notklt"
    index: int | None = None  # 1-based index of the dominating weight

    def __str__(self) -> str:
        if self.tag == "unstable":
            return f"Unstable({self.index})"
        return {"stable": "Stable", "semistable": "Semistable", "notklt": "NotKLT"}[self.tag]


@dataclass(frozen=True)
class CuspConfig:
    m: int
    n: int
    beta: float
    gamma_tilde: float
    lines: AngleConfig = field(repr=False, default=None)


def validate_config(betas: Sequence[float]) -> AngleConfig:
    b = np.asarray(list(betas), dtype=float)
    if b.ndim != 1 or b.size < 3:
        raise DomainError(f"need d >= 3 cone angles, got {b.size}")
    if not np.all(np.isfinite(b)) or np.any(b <= 0.0) or np.any(b >= 1.0):
        raise DomainError(f"cone-angle factors must lie in (0,1): {list(b)}")
    perm = np.argsort(b, kind="stable")
    bs = b[perm]
    tail = float(np.sum(1.0 - bs[1:]))
    gamma = 1.0 - tail
    strict = tail < 1.0 - bs[0]
    return AngleConfig(
        betas=tuple(float(x) for x in bs),
        gamma=gamma,
        perm=tuple(int(p) for p in perm),
        strictly_unstable=bool(strict),
        gamma_in_range=bool(0.0 < gamma < 1.0),
    )


def classify_stability(w: Weights, tol: float = SEMISTABLE_TOL) -> StabilityClass:
    mu = np.asarray(w.mus, dtype=float)
    total = mu.sum()
    if total >= 2.0:
        return StabilityClass("notklt")
    gap = mu - (total - mu)  # mu_i - sum_{j != i} mu_j
    i = int(np.argmax(gap))
    if abs(gap[i]) <= tol:
        return StabilityClass("semistable")
    if gap[i] > 0.0:
        return StabilityClass("unstable", i + 1)
    return StabilityClass("stable")


def cusp_angles(m: int, n: int, beta: float) -> CuspConfig:
    m, n = int(m), int(n)
    if not (2 <= m < n):
        raise DomainError(f"need 2 <= m < n, got m={m}, n={n}")
    if not (0.0 < beta):
        raise DomainError(f"beta must be positive, got {beta}")
    if beta >= 1.0:
        raise DomainError(f"beta must be < 1, got {beta}")
    if beta <= 1.0 + 1.0 / n - 1.0 / m:
        raise UnstableRangeError(
            f"beta={beta} <= 1 + 1/n - 1/m = {1.0 + 1.0 / n - 1.0 / m}: not strictly unstable"
        )
    gt = 1.0 - m * (1.0 - beta)
    lines = validate_config([1.0 / n, 1.0 / m, beta])
    return CuspConfig(m=m, n=n, beta=float(beta), gamma_tilde=gt, lines=lines)


def load_angle_document(doc) -> AngleConfig | Weights | CuspConfig:
    """Parse {"betas": [...]}, {"weights": [...]} or {"cusp": {...}}."""
    if isinstance(doc, (str, Path)):
        try:
            doc = json.loads(Path(doc).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read angle document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("angle document must be a JSON object")
    if "betas" in doc:
        return validate_config(doc["betas"])
    if "weights" in doc:
        return Weights(tuple(float(x) for x in doc["weights"]))
    if "cusp" in doc:
        c = doc["cusp"]
        try:
            return cusp_angles(c["m"], c["n"], float(c["beta"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"cusp entry needs m, n, beta: {exc}") from exc
    raise ConfigError("expected one of the keys betas, weights, cusp")
