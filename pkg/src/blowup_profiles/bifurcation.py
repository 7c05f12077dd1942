"""Critical values of sigma and per-sigma regime tables.

sigma* is the boundary between the sigma for which the orbit leaving P2 ends
in P_gamma0 (A) and those for which it ends at Q3 (C).  The bracket returned
by find_sigma_star is the result; at its midpoint the P2 orbit runs into the
interface line and gives a good profile of the first origin case.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, CertificationFailure, ProfileError
from .integrator import IntegrationConfig, OrbitTrace
from .model import derive_exponents
from .orbits import (
    ORBIT_CONFIG,
    OrbitOptions,
    TerminalClass,
    TerminalTag,
    classify_from_P2,
    closest_to_interface,
    interface_from_state,
    origin_exponent,
    profile_samples,
    scan_family,
)
from .shooting import GoodProfile, bisect_eta

A, C = TerminalTag.ENTERS_PGAMMA0, TerminalTag.ENTERS_Q3
DEFAULT_SIGMA_BRACKET = (0.5, 8.0)


@dataclass
class BifurcationResult:
    m: float
    p: float
    sigma_star: float
    bracket: tuple[float, float]
    iterations: int
    certificates: dict[str, TerminalClass]
    critical_profile: GoodProfile | None = field(repr=False)
    band: dict = field(default_factory=dict)
    traces: tuple[OrbitTrace, OrbitTrace] | None = field(default=None, repr=False)

    def as_record(self) -> dict:
        return {
            "m": self.m,
            "p": self.p,
            "sigma_star": self.sigma_star,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "certificates": {k: v.as_record() for k, v in self.certificates.items()},
            "band": self.band,
            "critical_profile": None if self.critical_profile is None else self.critical_profile.as_record(),
        }


@dataclass
class RegimeRow:
    sigma: float
    p2_class: TerminalClass
    profile_kind: str
    has_A0: bool | None = None
    b0_brackets: list = field(default_factory=list)
    eta0: float | None = None

    def as_record(self) -> dict:
        return {"sigma": self.sigma, "p2_class": self.p2_class.tag.value, "profile_kind": self.profile_kind,
                "has_A0": self.has_A0, "b0_brackets": [list(b) for b in self.b0_brackets], "eta0": self.eta0}


@dataclass
class RegimeMap:
    m: float
    p: float
    rows: list[RegimeRow]

    @property
    def sigma_grid(self) -> list[float]:
        return [r.sigma for r in self.rows]

    @property
    def p2_classes(self) -> list[TerminalClass]:
        return [r.p2_class for r in self.rows]

    @property
    def good_profile_kinds(self) -> list[str]:
        return [r.profile_kind for r in self.rows]

    def profile_boundary(self) -> tuple[float, float] | None:
        """Grid interval where the good-profile kind first switches from P1 to a P2 kind."""
        for a, b in zip(self.rows, self.rows[1:]):
            if a.profile_kind == "P1" and b.profile_kind.startswith("P2"):
                return (a.sigma, b.sigma)
        return None

    def p2_boundary(self) -> tuple[float, float] | None:
        """Grid interval where the P2 orbit switches from P_gamma0 to Q3."""
        for a, b in zip(self.rows, self.rows[1:]):
            if a.p2_class.tag is A and b.p2_class.tag is C:
                return (a.sigma, b.sigma)
        return None

    def sigma0(self) -> float | None:
        """Largest grid sigma up to which the P2 orbit and some P0 orbit both reach P_gamma0."""
        best = None
        for r in self.rows:
            if r.p2_class.tag is A and r.has_A0 is not False:
                best = r.sigma
            else:
                break
        return best

    def sigma1(self) -> float | None:
        """Smallest grid sigma with a B0 bracket in the P0 family."""
        for r in self.rows:
            if r.b0_brackets:
                return r.sigma
        return None

    def as_record(self) -> dict:
        return {"m": self.m, "p": self.p, "regime_table": [r.as_record() for r in self.rows],
                "profile_boundary": self.profile_boundary(), "p2_boundary": self.p2_boundary(),
                "sigma0": self.sigma0(), "sigma1": self.sigma1()}

    def to_json(self) -> str:
        return json.dumps(self.as_record(), indent=2)


def _p2_class(m, p, sigma, cfg, opts) -> tuple[TerminalClass, OrbitTrace]:
    return classify_from_P2(derive_exponents(m, p, sigma), cfg, opts)


def find_sigma_star(m: float, p: float, bracket0=DEFAULT_SIGMA_BRACKET, tol: float = 1e-6,
                    cfg: IntegrationConfig | None = None, max_factor: float = 64.0,
                    certify: bool = True) -> BifurcationResult:
    """Bisect sigma on the A/C outcome of the P2 orbit.

    The seeds are widened by factors of 2 (down to lo/max_factor, up to
    hi*max_factor) until the low end is in A and the high end in C.
    """
    if not tol > 0.0:
        raise ValueError("tol must be > 0")
    cfg = cfg or ORBIT_CONFIG
    quiet = OrbitOptions(detect_p1=False)
    lo, hi = float(bracket0[0]), float(bracket0[1])
    if not 0.0 < lo < hi:
        raise BracketError(f"need 0 < sigma_lo < sigma_hi, got {bracket0}")
    c_lo, t_lo = _p2_class(m, p, lo, cfg, quiet)
    floor = lo / max_factor
    while c_lo.tag is not A:
        if lo / 2.0 < floor:
            raise BracketError(f"no sigma in A found down to {lo}: {c_lo.tag.value}")
        hi, lo = (lo, lo / 2.0) if c_lo.tag is C else (hi, lo / 2.0)
        c_lo, t_lo = _p2_class(m, p, lo, cfg, quiet)
    c_hi, t_hi = _p2_class(m, p, hi, cfg, quiet)
    ceil = hi * max_factor
    while c_hi.tag is not C:
        if hi * 2.0 > ceil:
            raise BracketError(f"no sigma in C found up to {hi}: {c_hi.tag.value}")
        if c_hi.tag is A:
            lo, c_lo, t_lo = hi, c_hi, t_hi
        hi *= 2.0
        c_hi, t_hi = _p2_class(m, p, hi, cfg, quiet)
    it = 0
    while hi - lo > tol:
        it += 1
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        c_mid, t_mid = _p2_class(m, p, mid, cfg, quiet)
        if c_mid.tag is A:
            lo, c_lo, t_lo = mid, c_mid, t_mid
        elif c_mid.tag is C:
            hi, c_hi, t_hi = mid, c_mid, t_mid
        else:
            raise CertificationFailure(f"P2 orbit at sigma={mid} is {c_mid.tag.value}", t_lo, t_hi)
    certs = {"low": c_lo, "high": c_hi}
    if certify:
        fine = cfg.tightened()
        r_lo, _ = _p2_class(m, p, lo, fine, quiet)
        r_hi, _ = _p2_class(m, p, hi, fine, quiet)
        if r_lo.tag is not A or r_hi.tag is not C:
            raise CertificationFailure(
                f"bracket ends do not re-verify at tighter tolerance: {r_lo.tag.value} / {r_hi.tag.value}", t_lo, t_hi)
        certs["low_fine"], certs["high_fine"] = r_lo, r_hi
    sigma_star = 0.5 * (lo + hi)
    c_mid, t_mid = _p2_class(m, p, sigma_star, cfg, OrbitOptions())
    certs["midpoint"] = c_mid
    params = derive_exponents(m, p, sigma_star)
    x_min, i = closest_to_interface(params, t_mid)
    X, Y, _, L = t_mid.y[i]
    xi = math.exp(L)
    band = {"x_min": x_min, "line_distance": float(abs(m * Y + params.beta) * xi / math.hypot(m, params.beta)),
            "in_band": c_mid.tag is TerminalTag.ENTERS_P1}
    eta = c_mid.detail if c_mid.tag is TerminalTag.ENTERS_P1 else interface_from_state(params, X, L)
    profile = GoodProfile(
        params=params,
        eta0=eta,
        kind="P2_CASE1",
        samples=profile_samples(t_mid, i),
        a0=0.0,
        bracket=(eta, eta),
        exponent=origin_exponent(params, t_mid, source=(params.X_P2, params.Y_P2, 0.0)),
        iterations=it,
    )
    return BifurcationResult(m, p, sigma_star, (lo, hi), it, certs, profile, band, (t_lo, t_hi))


def regime_map(m: float, p: float, sigma_grid, cfg: IntegrationConfig | None = None, family: bool = True,
               k_grid=None, profiles: bool = True) -> RegimeMap:
    """P2-orbit class, P0-family summary and good-profile kind for every sigma of the grid."""
    grid = [float(s) for s in sigma_grid]
    if any(s <= 0.0 for s in grid) or grid != sorted(grid):
        raise ValueError("sigma grid must be positive and sorted")
    rows = []
    for s in grid:
        params = derive_exponents(m, p, s)
        c2, _ = classify_from_P2(params, cfg)
        row = RegimeRow(s, c2, "n/a")
        if family:
            scan = scan_family(params, k_grid, cfg)
            row.has_A0 = any(c.tag is A for c in scan.classes)
            row.b0_brackets = scan.b0_brackets
        if profiles:
            try:
                good = bisect_eta(params, tol_eta=1e-9)
                row.profile_kind, row.eta0 = good.kind, good.eta0
            except ProfileError as exc:
                row.profile_kind = f"error: {type(exc).__name__}"
        rows.append(row)
    return RegimeMap(m, p, rows)


def sigma_grid_from_spec(spec: str) -> np.ndarray:
    """Parse 'a:b:n' (linear) or 'a,b,c' into a sorted grid."""
    if ":" in spec:
        a, b, n = spec.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array(sorted(float(v) for v in spec.split(",") if v.strip()))
