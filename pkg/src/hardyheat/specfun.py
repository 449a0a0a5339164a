"""Closed-form constants for the fractional Dirichlet operator with an
inverse-power (Hardy-type) potential.

Conventions used throughout the package, for dimension d and order
alpha in (0, min(2, d)):

* jump intensity      A(d, alpha) = alpha * G((d+alpha)/2)
                      / (2**(1-alpha) * pi**(d/2) * G(1-alpha/2)),
  the constant in front of |x-y|**(-d-alpha) in the jump kernel,
* critical coupling   c_star = 2**alpha * G((d+alpha)/4)**2 / G((d-alpha)/4)**2,
  the best constant in the inverse-power quadratic-form inequality,
* power multiplier    lam(beta) = 2**alpha * G((alpha+beta)/2) * G((d-beta)/2)
                      / (G(beta/2) * G((d-alpha-beta)/2)),
  the eigenvalue in  L |x|**(-beta) = lam(beta) * |x|**(-beta-alpha)  for
  beta in (0, d-alpha),

where G is the Gamma function.  lam is symmetric about beta_star = (d-alpha)/2,
strictly increasing on (0, beta_star], and lam(beta_star) = c_star, so every
coupling c in (0, c_star] has a unique matching exponent beta(c) in
(0, beta_star].  The harmonic profile for coupling c is w_c(x) = |x|**(-beta(c)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, ParameterDomainError

__all__ = [
    "FractionalParams",
    "HardyConstants",
    "ExponentMap",
    "gamma",
    "intensity_constant",
    "hardy_constant",
    "multiplier",
    "beta_of_c",
    "weight",
]

# Lanczos coefficients, g = 7, n = 9.  Good to ~15 significant digits in
# double precision for positive real arguments.
_LANCZOS_G = 7.0
_LANCZOS_P = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Gamma function via the Lanczos approximation with reflection for x < 1/2."""
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        raise ParameterDomainError(f"gamma undefined at non-positive integer {x}")
    if x < 0.5:
        # reflection: G(x) G(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_P[0]
    for i in range(1, len(_LANCZOS_P)):
        acc += _LANCZOS_P[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


@dataclass(frozen=True)
class FractionalParams:
    """Dimension and order of the fractional operator.

    Requires d in {1, 2, 3} and 0 < alpha < min(2, d); this keeps the
    inverse-power profile locally integrable and the constants finite.
    """

    d: int
    alpha: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ParameterDomainError(f"dimension d must be 1, 2 or 3, got {self.d}")
        amax = min(2.0, float(self.d))
        if not (0.0 < self.alpha < amax):
            raise ParameterDomainError(
                f"alpha must lie in (0, {amax}) for d={self.d}, got {self.alpha}"
            )

    @property
    def beta_star(self) -> float:
        return 0.5 * (self.d - self.alpha)


def intensity_constant(params: FractionalParams) -> float:
    """Jump-kernel normalisation A(d, alpha)."""
    d, a = params.d, params.alpha
    return (
        a
        * gamma(0.5 * (d + a))
        / (2.0 ** (1.0 - a) * math.pi ** (0.5 * d) * gamma(1.0 - 0.5 * a))
    )


def hardy_constant(params: FractionalParams) -> float:
    """Critical coupling c_star of the inverse-power form inequality."""
    d, a = params.d, params.alpha
    return 2.0**a * (gamma(0.25 * (d + a)) / gamma(0.25 * (d - a))) ** 2


def multiplier(beta: float, params: FractionalParams) -> float:
    """Power multiplier lam(beta) for beta in the open interval (0, d - alpha)."""
    d, a = params.d, params.alpha
    beta = float(beta)
    if not (0.0 < beta < d - a):
        raise ParameterDomainError(
            f"beta must lie in (0, {d - a}) for d={d}, alpha={a}, got {beta}"
        )
    return (
        2.0**a
        * gamma(0.5 * (a + beta))
        * gamma(0.5 * (d - beta))
        / (gamma(0.5 * beta) * gamma(0.5 * (d - a - beta)))
    )


def beta_of_c(c: float, params: FractionalParams) -> float:
    """Invert the multiplier: the unique beta in (0, beta_star] with lam(beta) = c.

    Bracketing bisection on [~0, beta_star] driven to machine-level bracket
    width, followed by a secant polish.  Requires 0 < c <= c_star.
    """
    cstar = hardy_constant(params)
    c = float(c)
    if not (c > 0.0):
        raise ParameterDomainError(f"coupling c must be positive, got {c}")
    if c > cstar * (1.0 + 1e-12):
        raise ParameterDomainError(
            f"coupling c={c} exceeds the critical value c_star={cstar:.15g}"
        )
    bstar = params.beta_star
    if abs(c - cstar) <= 1e-12 * cstar:
        # lam has a quadratic maximum at beta_star, so root-finding loses half
        # the digits there; the critical coupling is mapped exactly instead.
        return bstar

    lo, hi = 1e-12, bstar
    # lam(lo) may still exceed c for extremely small couplings
    while multiplier(lo, params) >= c:
        lo *= 0.5
        if lo < 1e-300:
            raise ParameterDomainError(f"coupling c={c} too small to invert")
    flo = multiplier(lo, params) - c
    fhi = cstar - c
    for _ in range(200):
        if hi - lo <= 1e-16 * bstar:
            break
        mid = 0.5 * (lo + hi)
        fmid = multiplier(mid, params) - c
        if fmid < 0.0:
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    beta = 0.5 * (lo + hi)
    # secant polish inside the final bracket
    for _ in range(3):
        if fhi == flo:
            break
        cand = hi - fhi * (hi - lo) / (fhi - flo)
        if not (lo < cand < hi):
            break
        fc = multiplier(cand, params) - c
        if fc < 0.0:
            lo, flo = cand, fc
        else:
            hi, fhi = cand, fc
        beta = cand
    if abs(multiplier(beta, params) - c) > 1e-12 * cstar:
        raise InvariantViolation(
            f"multiplier inversion failed to converge for c={c} (d={params.d}, "
            f"alpha={params.alpha})"
        )
    return beta


def weight(x, c: float, params: FractionalParams):
    """Harmonic profile w_c(x) = |x|**(-beta(c)); rejects the singular point x = 0.

    Accepts a scalar, a length-d point or an (n, d) array of points; 1-d input
    arrays are treated as n scalar points when d = 1.
    """
    beta = beta_of_c(c, params)
    r = _radii(x, params.d)
    if np.any(r == 0.0):
        raise ParameterDomainError("the harmonic profile is singular at x = 0")
    return r ** (-beta)


def _radii(x, d: int):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return np.abs(arr)
    if d == 1:
        return np.abs(arr)
    if arr.shape[-1] != d:
        raise ParameterDomainError(
            f"points must have {d} coordinates, got shape {arr.shape}"
        )
    return np.sqrt(np.sum(arr * arr, axis=-1))


@dataclass(frozen=True)
class HardyConstants:
    """Bundle of the two closed-form constants for one (d, alpha).

    Construction cross-checks c_star against the multiplier evaluated at
    beta_star; the two expressions are independent, so agreement to 1e-10
    relative guards both implementations at once.
    """

    params: FractionalParams
    intensity: float
    c_star: float

    @classmethod
    def from_params(cls, params: FractionalParams) -> "HardyConstants":
        a = intensity_constant(params)
        cstar = hardy_constant(params)
        lam = multiplier(params.beta_star, params)
        if abs(lam - cstar) > 1e-10 * cstar:
            raise InvariantViolation(
                f"c_star cross-check failed for d={params.d}, alpha={params.alpha}: "
                f"{cstar!r} vs multiplier {lam!r}"
            )
        return cls(params=params, intensity=a, c_star=cstar)


@dataclass
class ExponentMap:
    """Facade caching the coupling -> exponent inversion for one (d, alpha).

    The cache only ever gains entries (each deterministic), so concurrent
    readers are safe; the map behaves as immutable after construction.
    """

    params: FractionalParams
    beta_star: float = field(init=False)
    c_star: float = field(init=False)
    _beta_cache: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        self.beta_star = self.params.beta_star
        self.c_star = hardy_constant(self.params)

    def multiplier(self, beta: float) -> float:
        return multiplier(beta, self.params)

    def beta_of_c(self, c: float) -> float:
        key = float(c)
        hit = self._beta_cache.get(key)
        if hit is None:
            hit = beta_of_c(key, self.params)
            self._beta_cache[key] = hit
        return hit

    def weight(self, x, c: float):
        beta = self.beta_of_c(c)
        r = _radii(x, self.params.d)
        if np.any(r == 0.0):
            raise ParameterDomainError("the harmonic profile is singular at x = 0")
        return r ** (-beta)
