"""Lagrangian model functions f(s) and their derivatives.

Every model is a weak-field deformation of Maxwell theory: f(0) = 0 and
f'(0) = 1, so all constitutive relations reduce to E = D, H = B as the
field strengths (or the deformation parameters) go to zero.

Supported kinds and domains of the invariant s:

========== =============================== =======================
kind        f(s)                            domain
========== =============================== =======================
classical   (1 - sqrt(1 - 2 beta s))/beta   2 beta s < 1
logarithmic -ln(1 - beta s)/beta            beta s < 1
exponential (e^{beta s} - 1)/beta           all reals
fractional  ((1 + beta s/p)^p - 1)/beta     all reals (integer p);
                                            1 + beta s/p > 0 otherwise
quadratic   s + alpha s^2                   all reals
custom      user-supplied triple            user-supplied bounds
========== =============================== =======================

ModelParams is frozen and hashable apart from custom callables; instances are
safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import DomainViolation

CLASSICAL = "classical"
LOGARITHMIC = "logarithmic"
EXPONENTIAL = "exponential"
FRACTIONAL_POWER = "fractional_power"
QUADRATIC = "quadratic"
CUSTOM = "custom"

KINDS = (CLASSICAL, LOGARITHMIC, EXPONENTIAL, FRACTIONAL_POWER, QUADRATIC, CUSTOM)

_FD_CHECK_POINTS = (-0.35, -0.1, 0.0, 0.07, 0.25)


def _is_integral(p: float) -> bool:
    return abs(p - round(p)) <= 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Model kind plus its parameters.

    beta is the Born parameter (> 0, unused by the quadratic kind), kappa >= 0
    the axionic coupling entering the invariant s = (E^2 - B^2)/2
    + (kappa^2/2)(E.B)^2, alpha > 0 the quadratic coefficient, p >= 1 the
    fractional power (p = 1 is Maxwell).
    """

    kind: str
    beta: float = 1.0
    kappa: float = 0.0
    alpha: float = 1.0
    p: float = 2.0
    f_custom: Optional[Callable[[float], float]] = field(default=None, repr=False)
    f_prime_custom: Optional[Callable[[float], float]] = field(default=None, repr=False)
    f_double_prime_custom: Optional[Callable[[float], float]] = field(
        default=None, repr=False
    )
    s_min: float = -math.inf
    s_max: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be > 0, got {self.beta!r}")
        if not (self.kappa >= 0.0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be >= 0, got {self.kappa!r}")
        if self.kind == QUADRATIC and not (self.alpha > 0.0):
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if self.kind == FRACTIONAL_POWER and not (self.p >= 1.0):
            raise ValueError(f"p must be >= 1, got {self.p!r}")
        if self.kind == CUSTOM:
            if not (self.f_custom and self.f_prime_custom and self.f_double_prime_custom):
                raise ValueError("custom model needs f, f', and f'' callables")
            self._validate_custom()

    # -- constructors ------------------------------------------------------

    @classmethod
    def classical(cls, beta: float = 1.0, kappa: float = 0.0) -> "ModelParams":
        return cls(kind=CLASSICAL, beta=beta, kappa=kappa)

    @classmethod
    def logarithmic(cls, beta: float = 1.0, kappa: float = 0.0) -> "ModelParams":
        return cls(kind=LOGARITHMIC, beta=beta, kappa=kappa)

    @classmethod
    def exponential(cls, beta: float = 1.0, kappa: float = 0.0) -> "ModelParams":
        return cls(kind=EXPONENTIAL, beta=beta, kappa=kappa)

    @classmethod
    def fractional_power(
        cls, beta: float = 1.0, p: float = 2.0, kappa: float = 0.0
    ) -> "ModelParams":
        return cls(kind=FRACTIONAL_POWER, beta=beta, p=p, kappa=kappa)

    @classmethod
    def quadratic(cls, alpha: float = 1.0, kappa: float = 0.0) -> "ModelParams":
        return cls(kind=QUADRATIC, alpha=alpha, kappa=kappa)

    @classmethod
    def custom(
        cls,
        f: Callable[[float], float],
        f_prime: Callable[[float], float],
        f_double_prime: Callable[[float], float],
        kappa: float = 0.0,
        s_min: float = -math.inf,
        s_max: float = math.inf,
    ) -> "ModelParams":
        return cls(
            kind=CUSTOM,
            kappa=kappa,
            f_custom=f,
            f_prime_custom=f_prime,
            f_double_prime_custom=f_double_prime,
            s_min=s_min,
            s_max=s_max,
        )

    def _validate_custom(self):
        fc, fp, fpp = self.f_custom, self.f_prime_custom, self.f_double_prime_custom
        if abs(fc(0.0)) > 1e-12:
            raise ValueError(f"custom f(0) = {fc(0.0)!r}, expected 0")
        if abs(fp(0.0) - 1.0) > 1e-9:
            raise ValueError(f"custom f'(0) = {fp(0.0)!r}, expected 1")
        # analytic derivatives vs central differences at a few interior points
        for s in _FD_CHECK_POINTS:
            if not (self.s_min + 1e-3 < s < self.s_max - 1e-3):
                continue
            h = 1e-6 * max(1.0, abs(s))
            fd1 = (fc(s + h) - fc(s - h)) / (2.0 * h)
            if abs(fd1 - fp(s)) > 1e-6 * max(1.0, abs(fp(s))):
                raise ValueError(
                    f"custom f' disagrees with central difference at s={s}: "
                    f"{fp(s)!r} vs {fd1!r}"
                )
            fd2 = (fp(s + h) - fp(s - h)) / (2.0 * h)
            if abs(fd2 - fpp(s)) > 1e-6 * max(1.0, abs(fpp(s))):
                raise ValueError(
                    f"custom f'' disagrees with central difference at s={s}: "
                    f"{fpp(s)!r} vs {fd2!r}"
                )

    # -- domain ------------------------------------------------------------

    def in_domain(self, s: float) -> bool:
        if not math.isfinite(s):
            return False
        if self.kind == CLASSICAL:
            return 2.0 * self.beta * s < 1.0
        if self.kind == LOGARITHMIC:
            return self.beta * s < 1.0
        if self.kind == FRACTIONAL_POWER and not _is_integral(self.p):
            return 1.0 + self.beta * s / self.p > 0.0
        if self.kind == CUSTOM:
            return self.s_min < s < self.s_max
        return True

    def _require(self, s: float) -> float:
        s = float(s)
        if not self.in_domain(s):
            raise DomainViolation(f"s={s!r} outside domain of {self.kind} model")
        return s

    # -- model functions ----------------------------------------------------

    def f(self, s: float) -> float:
        s = self._require(s)
        b = self.beta
        if self.kind == CLASSICAL:
            return (1.0 - math.sqrt(1.0 - 2.0 * b * s)) / b
        if self.kind == LOGARITHMIC:
            return -math.log1p(-b * s) / b
        if self.kind == EXPONENTIAL:
            return math.expm1(b * s) / b
        if self.kind == FRACTIONAL_POWER:
            return (self._fpow(s, 0) - 1.0) / b
        if self.kind == QUADRATIC:
            return s + self.alpha * s * s
        return self.f_custom(s)

    def f_prime(self, s: float) -> float:
        s = self._require(s)
        b = self.beta
        if self.kind == CLASSICAL:
            return 1.0 / math.sqrt(1.0 - 2.0 * b * s)
        if self.kind == LOGARITHMIC:
            return 1.0 / (1.0 - b * s)
        if self.kind == EXPONENTIAL:
            return math.exp(b * s)
        if self.kind == FRACTIONAL_POWER:
            return self._fpow(s, 1)
        if self.kind == QUADRATIC:
            return 1.0 + 2.0 * self.alpha * s
        return self.f_prime_custom(s)

    def f_double_prime(self, s: float) -> float:
        s = self._require(s)
        b = self.beta
        if self.kind == CLASSICAL:
            return b / (1.0 - 2.0 * b * s) ** 1.5
        if self.kind == LOGARITHMIC:
            return b / (1.0 - b * s) ** 2
        if self.kind == EXPONENTIAL:
            return b * math.exp(b * s)
        if self.kind == FRACTIONAL_POWER:
            if self.p == 1.0:
                return 0.0
            return b * (self.p - 1.0) / self.p * self._fpow(s, 2)
        if self.kind == QUADRATIC:
            return 2.0 * self.alpha
        return self.f_double_prime_custom(s)

    def _fpow(self, s: float, order: int) -> float:
        """(1 + beta s / p)^(p - order), exact for negative base and integer p."""
        base = 1.0 + self.beta * s / self.p
        expo = self.p - order
        if _is_integral(self.p):
            return base ** int(round(expo))
        # non-integer power of a nonpositive base would be complex
        if base <= 0.0:
            raise DomainViolation(
                f"fractional power p={self.p!r} undefined at 1 + beta*s/p = {base!r}"
            )
        return base**expo
