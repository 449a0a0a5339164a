"""Scenario files: flat JSON descriptions of a parameter study.

A scenario is a single flat JSON object (no nesting beyond typed arrays),
hand-editable and diff-friendly.  Keys:

    d        int, 1 or 2                                   (required)
    alpha    float in (0, min(2, d))                       (required)
    c        float, or string "F*cstar" with F a float     (required)
    domain   [a, b] for d=1, [a1, b1, a2, b2] for d=2      (required)
    h        list of grid spacings, coarse to fine         (required)
    u0       "ball:R" | "bump" | "bump:S" | "point" | "csv:PATH"  (required)
    times    list of floats, or strings "F*tref"           (required)
    times_unit  "tref" (default) or "absolute"
    k        list of truncation levels (default: automatic schedule)
    scheme   "expm" (default) | "cn" | "ie"
    seed     int (default 0)
    inner_half_width  float (default half the inradius)
    t0_factor  float (default 0.1; blow-up probe time in T_ref units)

Unknown keys are rejected with a message listing them; missing required keys
are rejected naming the field.  Couplings written as fractions of the
critical value are resolved through the exponent map before any run.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .specfun import FractionalParams, hardy_constant

__all__ = ["Scenario", "load_scenario", "scenario_from_dict", "build_u0"]

_REQUIRED = ("d", "alpha", "c", "domain", "h", "u0", "times")
_OPTIONAL = {
    "times_unit": "tref",
    "k": None,
    "scheme": "expm",
    "seed": 0,
    "inner_half_width": None,
    "t0_factor": 0.1,
}
_SUITES = ("constants", "operator", "kernel", "sharp", "lp", "blowup", "all")
_CSTAR_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*\*\s*cstar\s*$")
_TREF_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*\*\s*tref\s*$")


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario; couplings resolved to absolute numbers."""

    d: int
    alpha: float
    c: float
    c_spec: str | float
    domain: tuple[float, ...]
    h_levels: tuple[float, ...]
    u0_spec: str
    time_factors: tuple[float, ...]
    times_unit: str
    k_schedule: tuple[float, ...] | None
    scheme: str
    seed: int
    inner_half_width: float | None
    t0_factor: float

    @property
    def params(self) -> FractionalParams:
        return FractionalParams(d=self.d, alpha=self.alpha)

    def domain_spec(self):
        if self.d == 1:
            return list(self.domain)
        return [list(self.domain[0:2]), list(self.domain[2:4])]

    def resolve_times(self, tref: float) -> np.ndarray:
        if self.times_unit == "absolute":
            return np.array(self.time_factors)
        return np.array([f * tref for f in self.time_factors])

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "alpha": self.alpha,
            "c": self.c,
            "c_spec": self.c_spec,
            "domain": list(self.domain),
            "h": list(self.h_levels),
            "u0": self.u0_spec,
            "times": list(self.time_factors),
            "times_unit": self.times_unit,
            "k": None if self.k_schedule is None else list(self.k_schedule),
            "scheme": self.scheme,
            "seed": self.seed,
            "inner_half_width": self.inner_half_width,
            "t0_factor": self.t0_factor,
        }

    def run_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _type_error(key, want, got):
    return ConfigError(f"scenario key {key!r} must be {want}, got {got!r}")


def scenario_from_dict(raw: dict, suite: str | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a flat JSON object")
    unknown = sorted(set(raw) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing scenario key: {missing[0]!r}")

    d = raw["d"]
    if not isinstance(d, int) or d not in (1, 2):
        raise _type_error("d", "1 or 2", d)
    alpha = raw["alpha"]
    if not isinstance(alpha, (int, float)) or not (0.0 < alpha < min(2, d)):
        raise _type_error("alpha", f"a number in (0, {min(2, d)})", alpha)
    params = FractionalParams(d=d, alpha=float(alpha))
    c_star = hardy_constant(params)

    c_spec = raw["c"]
    if isinstance(c_spec, (int, float)):
        c = float(c_spec)
    elif isinstance(c_spec, str):
        m = _CSTAR_RE.match(c_spec)
        if m is None:
            raise _type_error("c", 'a number or "F*cstar"', c_spec)
        c = float(m.group(1)) * c_star
    else:
        raise _type_error("c", 'a number or "F*cstar"', c_spec)
    if c < 0.0:
        raise ConfigError(f"coupling c must be >= 0, resolved to {c:g}")

    dom = raw["domain"]
    want_len = 2 * d
    if not isinstance(dom, list) or len(dom) != want_len or not all(
        isinstance(v, (int, float)) for v in dom
    ):
        raise _type_error("domain", f"a list of {want_len} numbers", dom)
    pairs = [(float(dom[2 * i]), float(dom[2 * i + 1])) for i in range(d)]
    for a, b in pairs:
        if not (a < 0.0 < b):
            raise ConfigError(f"domain must contain 0 strictly inside, got {dom}")

    hs = raw["h"]
    if isinstance(hs, (int, float)):
        hs = [hs]
    if not isinstance(hs, list) or not hs or not all(
        isinstance(v, (int, float)) and v > 0 for v in hs
    ):
        raise _type_error("h", "a list of positive spacings", raw["h"])
    hs = [float(v) for v in hs]
    if any(b <= a for a, b in zip(hs[1:], hs[:-1])):
        raise ConfigError(f"grid levels must go coarse to fine, got {hs}")

    u0_spec = raw["u0"]
    if not isinstance(u0_spec, str):
        raise _type_error("u0", "a string spec", u0_spec)
    _validate_u0_spec(u0_spec)

    times_unit = raw.get("times_unit", _OPTIONAL["times_unit"])
    if times_unit not in ("tref", "absolute"):
        raise _type_error("times_unit", '"tref" or "absolute"', times_unit)
    tlist = raw["times"]
    if not isinstance(tlist, list) or not tlist:
        raise _type_error("times", "a nonempty list", tlist)
    factors = []
    for item in tlist:
        if isinstance(item, (int, float)):
            factors.append(float(item))
        elif isinstance(item, str):
            m = _TREF_RE.match(item)
            if m is None:
                raise _type_error("times", 'numbers or "F*tref" strings', item)
            if times_unit == "absolute":
                raise ConfigError('"F*tref" time entries require times_unit "tref"')
            factors.append(float(m.group(1)))
        else:
            raise _type_error("times", 'numbers or "F*tref" strings', item)
    if any(f <= 0 for f in factors) or any(
        b <= a for a, b in zip(factors, factors[1:])
    ):
        raise ConfigError(f"times must be positive and strictly increasing, got {tlist}")

    ks = raw.get("k", _OPTIONAL["k"])
    if ks is not None:
        if not isinstance(ks, list) or not all(
            isinstance(v, (int, float)) and v > 0 for v in ks
        ):
            raise _type_error("k", "a list of positive levels", ks)
        ks = tuple(float(v) for v in ks)
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError(f"k schedule must be strictly increasing, got {list(ks)}")

    scheme = raw.get("scheme", _OPTIONAL["scheme"])
    if scheme not in ("expm", "cn", "ie"):
        raise _type_error("scheme", '"expm", "cn" or "ie"', scheme)
    seed = raw.get("seed", _OPTIONAL["seed"])
    if not isinstance(seed, int):
        raise _type_error("seed", "an integer", seed)
    ihw = raw.get("inner_half_width", _OPTIONAL["inner_half_width"])
    if ihw is not None and (not isinstance(ihw, (int, float)) or ihw <= 0):
        raise _type_error("inner_half_width", "a positive number", ihw)
    t0f = raw.get("t0_factor", _OPTIONAL["t0_factor"])
    if not isinstance(t0f, (int, float)) or t0f <= 0:
        raise _type_error("t0_factor", "a positive number", t0f)

    scn = Scenario(
        d=d,
        alpha=float(alpha),
        c=c,
        c_spec=c_spec,
        domain=tuple(v for p in pairs for v in p),
        h_levels=tuple(hs),
        u0_spec=u0_spec,
        time_factors=tuple(factors),
        times_unit=times_unit,
        k_schedule=ks,
        scheme=scheme,
        seed=seed,
        inner_half_width=None if ihw is None else float(ihw),
        t0_factor=float(t0f),
    )
    if suite is not None:
        validate_for_suite(scn, suite)
    return scn


def _validate_u0_spec(spec: str) -> None:
    if spec == "point" or spec == "bump":
        return
    for prefix in ("ball:", "bump:"):
        if spec.startswith(prefix):
            try:
                r = float(spec[len(prefix):])
            except ValueError:
                raise ConfigError(f"bad u0 spec {spec!r}: radius is not a number")
            if r <= 0:
                raise ConfigError(f"bad u0 spec {spec!r}: radius must be positive")
            return
    if spec.startswith("csv:"):
        if not spec[4:]:
            raise ConfigError("u0 spec 'csv:' needs a file path")
        return
    raise ConfigError(
        f"unknown u0 spec {spec!r}; use 'ball:R', 'bump', 'bump:S', 'point' or 'csv:PATH'"
    )


def validate_for_suite(scn: Scenario, suite: str) -> None:
    """Cross-field rules that depend on which suite will consume the scenario."""
    if suite not in _SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {_SUITES}")
    c_star = hardy_constant(scn.params)
    tol = 1.0 + 1e-12
    if suite in ("sharp", "kernel", "lp", "all") and scn.c > c_star * tol:
        raise ConfigError(
            f"suite {suite!r} requires c <= c* ({c_star:.6g}), got c = {scn.c:.6g}"
        )
    if suite in ("sharp", "lp") and scn.c <= 0.0:
        raise ConfigError(f"suite {suite!r} requires a positive coupling")
    if suite == "blowup" and scn.c <= c_star * tol:
        raise ConfigError(
            f"suite 'blowup' requires c > c* ({c_star:.6g}), got c = {scn.c:.6g}"
        )
    if suite in ("operator", "lp", "blowup") and len(scn.h_levels) < 2:
        raise ConfigError(f"suite {suite!r} needs at least 2 grid levels")


def load_scenario(path: str, suite: str | None = None) -> Scenario:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}")
    return scenario_from_dict(raw, suite=suite)


def build_u0(spec: str, grid) -> np.ndarray:
    """Materialize a u0 spec on a grid (unit height or unit cell mass)."""
    r = grid.radii
    if spec.startswith("ball:"):
        radius = float(spec[5:])
        u0 = (r <= radius).astype(float)
        if not np.any(u0 > 0.0):
            raise ConfigError(f"u0 {spec!r} covers no grid cell at h = {grid.h:g}")
        return u0
    if spec == "bump" or spec.startswith("bump:"):
        sigma = float(spec[5:]) if spec.startswith("bump:") else 0.2
        return np.exp(-0.5 * (r / sigma) ** 2)
    if spec == "point":
        u0 = np.zeros(grid.n)
        u0[int(np.argmin(r))] = 1.0 / grid.cell_volume
        return u0
    if spec.startswith("csv:"):
        vals = np.loadtxt(spec[4:], delimiter=",", ndmin=1)
        if vals.shape != (grid.n,):
            raise ConfigError(
                f"u0 csv has {vals.shape[0] if vals.ndim else 0} rows, grid has {grid.n} nodes"
            )
        return vals.astype(float)
    raise ConfigError(f"unknown u0 spec {spec!r}")
