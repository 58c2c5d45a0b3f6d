"""Point-charge configurations and the solenoidal/irrotational source fields.

The multicenter ansatz prescribes

    D(x) = sum_i q_i (x - x_i) / (4 pi |x - x_i|^3),
    B(x) = sum_i g_i (x - x_i) / (4 pi |x - x_i|^3),

both gradients of superposed Coulomb potentials, hence curl-free away from
the centers with delta-function divergences q_i, g_i. Sums are accumulated
in configuration order with error-free-transform summation (math.fsum), so
exact cancellations (mirror charges, Jacobi-type identities downstream)
survive at the 1e-16 level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SingularPoint

FOUR_PI = 4.0 * math.pi


def as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class PointCharge:
    """One center: position plus electric charge q and magnetic charge g."""

    position: np.ndarray
    q: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        if not np.all(np.isfinite(self.position)):
            raise ValueError("charge position must be finite")
        if not (math.isfinite(self.q) and math.isfinite(self.g)):
            raise ValueError("charges must be finite")
        if self.q == 0.0 and self.g == 0.0:
            raise ValueError("a center needs a nonzero q or g")


@dataclass(frozen=True)
class Potential:
    """Scalar Coulomb potential value tagged by species."""

    value: float
    kind: str  # "electric" | "magnetic"


@dataclass(frozen=True)
class ChargeConfig:
    """Immutable list of point charges with a shared exclusion radius.

    The exclusion radius defaults to 1e-9 times the configuration diameter
    (or 1e-9 for a single center); field evaluation strictly inside any
    exclusion ball raises SingularPoint rather than returning huge numbers.
    """

    charges: tuple
    exclusion_radius: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        chs = tuple(
            c if isinstance(c, PointCharge) else PointCharge(*c) for c in self.charges
        )
        if not chs:
            raise ValueError("configuration needs at least one charge")
        object.__setattr__(self, "charges", chs)
        pos = np.array([c.position for c in chs])
        for i in range(len(chs)):
            for j in range(i + 1, len(chs)):
                if np.array_equal(pos[i], pos[j]):
                    raise ValueError(f"charges {i} and {j} share a position")
        if self.exclusion_radius is None:
            object.__setattr__(self, "exclusion_radius", 1e-9 * max(self.diameter, 1.0))
        elif not (self.exclusion_radius > 0.0):
            raise ValueError("exclusion_radius must be positive")

    @classmethod
    def build(cls, entries: Iterable, exclusion_radius: float | None = None) -> "ChargeConfig":
        """entries: iterables of (position, q, g) or PointCharge instances."""
        return cls(charges=tuple(entries), exclusion_radius=exclusion_radius)

    def __len__(self) -> int:
        return len(self.charges)

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.charges])

    @property
    def qs(self) -> np.ndarray:
        return np.array([c.q for c in self.charges])

    @property
    def gs(self) -> np.ndarray:
        return np.array([c.g for c in self.charges])

    @property
    def diameter(self) -> float:
        pos = self.positions
        d = 0.0
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                d = max(d, float(np.linalg.norm(pos[i] - pos[j])))
        return d

    @property
    def min_separation(self) -> float:
        pos = self.positions
        d = math.inf
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                d = min(d, float(np.linalg.norm(pos[i] - pos[j])))
        return d

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    @property
    def total_q(self) -> float:
        return math.fsum(c.q for c in self.charges)

    @property
    def total_g(self) -> float:
        return math.fsum(c.g for c in self.charges)

    def min_distance(self, x) -> float:
        x = as_vec3(x)
        return float(min(np.linalg.norm(x - c.position) for c in self.charges))

    def check_regular(self, x) -> np.ndarray:
        """Return x as a vec3, raising SingularPoint inside an exclusion ball."""
        x = as_vec3(x)
        for i, c in enumerate(self.charges):
            if np.linalg.norm(x - c.position) < self.exclusion_radius:
                raise SingularPoint(
                    f"point {x.tolist()} within exclusion radius "
                    f"{self.exclusion_radius!r} of charge {i}"
                )
        return x


def _coulomb_sum(cfg: ChargeConfig, weights: Sequence[float], x) -> np.ndarray:
    """sum_i w_i (x - x_i) / (4 pi |x - x_i|^3), fsum-accumulated per component."""
    x = cfg.check_regular(x)
    terms = []
    for c, w in zip(cfg.charges, weights):
        r = x - c.position
        rn = float(np.linalg.norm(r))
        terms.append(w / (FOUR_PI * rn**3) * r)
    return np.array(
        [math.fsum(t[k] for t in terms) for k in range(3)]
    )


def displacement_field(cfg: ChargeConfig, x) -> np.ndarray:
    """Prescribed electric displacement D(x)."""
    return _coulomb_sum(cfg, cfg.qs, x)


def magnetic_field(cfg: ChargeConfig, x) -> np.ndarray:
    """Prescribed magnetic induction B(x)."""
    return _coulomb_sum(cfg, cfg.gs, x)


def scalar_potential(cfg: ChargeConfig, x, kind: str = "electric") -> Potential:
    """Superposed Coulomb potential U(x) = sum_i w_i / (4 pi |x - x_i|).

    D = -grad U_electric and B = -grad U_magnetic.
    """
    if kind not in ("electric", "magnetic"):
        raise ValueError(f"kind must be 'electric' or 'magnetic', got {kind!r}")
    x = cfg.check_regular(x)
    weights = cfg.qs if kind == "electric" else cfg.gs
    val = math.fsum(
        w / (FOUR_PI * float(np.linalg.norm(x - c.position)))
        for c, w in zip(cfg.charges, weights)
    )
    return Potential(value=val, kind=kind)
