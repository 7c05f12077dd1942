"""Backward shooting from an interface point and bisection over its position.

For each eta the unique orbit entering the interface point (0, -beta eta/m, eta)
of the LOWER chart is followed in reverse system time, i.e. towards xi = 0.
The left end of the profile is then one of

* ``A_MINUS``: f(0) = a > 0 with f'(0) < 0,
* ``POS_SLOPE``: f(0) = a > 0 with f'(0) > 0,
* ``GOOD_P1``: f(0) = a > 0 with f'(0) = 0 (within ``p1_tol``),
* ``A_PLUS``: f vanishes at some theta in (0, eta) with f' > 0 there,
* ``GOOD_P2_CASE1`` / ``GOOD_P2_CASE2``: f follows one of the two power
  laws at the origin over at least a decade of xi before the shot loses it.

Bisection keeps an A_MINUS / not-A_MINUS bracket on eta.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousLimit, BracketError, StepSizeUnderflow
from .integrator import EventKind, EventSpec, IntegrationConfig, OrbitTrace, default_events, integrate
from .local_analysis import make_starter
from .model import Chart, Params, ProfileSample

SHOOT_CONFIG = IntegrationConfig(rel_tol=1e-12, abs_tol=1e-14, max_arc=1e9)


class ShotClass(str, enum.Enum):
    A_MINUS = "A_MINUS"
    POS_SLOPE = "POS_SLOPE"
    GOOD_P1 = "GOOD_P1"
    GOOD_P2_CASE1 = "GOOD_P2_CASE1"
    GOOD_P2_CASE2 = "GOOD_P2_CASE2"
    A_PLUS = "A_PLUS"
    UNRESOLVED = "UNRESOLVED"


@dataclass(frozen=True)
class ShootOptions:
    """Classification thresholds.

    p1_tol: band on y(0) = f^(m-2) f'(0) certifying f'(0) = 0.
    xi_floor: stop once xi < xi_floor * eta.
    plateau_band: relative band for the local exponent xi f'/f (and for X
        against X(P2) in case 1).
    plateau_decades: minimal xi-span (in decades) of a power-law stretch.
    delta: offset of the interface starter.
    cross_check: confirm an unresolved origin limit through the P0 family.
    """

    p1_tol: float = 1e-4
    xi_floor: float = 1e-6
    plateau_band: float = 0.1
    plateau_decades: float = 1.0
    delta: float = 1e-7
    cross_check: bool = True


@dataclass
class ShootOutcome:
    eta: float
    cls: ShotClass
    a0: float | None
    theta: float | None
    trace: OrbitTrace = field(repr=False)
    y0: float | None = None
    exponent: float | None = None
    x_limit: float | None = None

    @property
    def side(self) -> int:
        """-1 for an A_MINUS end, +1 for any other resolved end, 0 if unresolved."""
        term = self.trace.terminal
        if term is None or self.cls is ShotClass.UNRESOLVED:
            return 0
        if term.kind is EventKind.XI_ZERO:
            return -1 if term.state.coords[1] < 0.0 else 1
        if term.kind is EventKind.XI_FLOOR:
            return 0
        return 1

    def as_record(self, bracket=None) -> dict:
        return {
            "eta": self.eta,
            "class": self.cls.value,
            "a0": self.a0,
            "theta": self.theta,
            "y0": self.y0,
            "exponent": self.exponent,
            "x_limit": self.x_limit,
            "bracket": list(bracket) if bracket is not None else None,
        }


@dataclass
class GoodProfile:
    params: Params
    eta0: float
    kind: str
    samples: list[ProfileSample] = field(repr=False)
    a0: float | None
    bracket: tuple[float, float] = (math.nan, math.nan)
    lo: ShootOutcome | None = field(default=None, repr=False)
    hi: ShootOutcome | None = field(default=None, repr=False)
    exponent: float | None = None
    iterations: int = 0

    def to_csv(self) -> str:
        return samples_to_csv(self.samples)

    def as_record(self) -> dict:
        return {
            "eta0": self.eta0,
            "kind": self.kind,
            "a0": self.a0,
            "bracket": list(self.bracket),
            "exponent": self.exponent,
            "iterations": self.iterations,
        }


def samples_to_csv(samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["xi", "f", "df", "fm_prime"])
    for s in sorted(samples, key=lambda s: s.xi):
        w.writerow([repr(s.xi), repr(s.f), repr(s.df), repr(s.fm_prime)])
    return buf.getvalue()


def _shot_events(params: Params, eta: float, cfg: IntegrationConfig, opts: ShootOptions) -> list[EventSpec]:
    m = params.m
    cap = cfg.divergence_cap
    floor = opts.xi_floor * eta
    x_cap = 2.0 * params.X_P2
    return default_events(params, Chart.LOWER, cfg) + [
        EventSpec(EventKind.XI_ZERO, lambda u: -u[2], direction=1),
        # xi f'/f = z y / x blowing up with y > 0: f reaches zero at theta > 0
        EventSpec(EventKind.SIGN_CHANGE, lambda u: m * u[1] * u[2] - cap * u[0], direction=1),
        # xi below the floor while X = x / z^2 stays bounded: origin approach
        EventSpec(EventKind.XI_FLOOR, lambda u: min(floor - u[2], x_cap * u[2] * u[2] - u[0]), direction=1),
    ]


def power_law_stretch(params: Params, trace: OrbitTrace, band: float = 0.1, decades: float = 1.0):
    """Find a power-law stretch of a backward trace near the origin.

    Returns (case, fitted exponent, X limit, xi_lo) for the lowest run of
    samples on which xi f'/f stays within ``band`` of 2/(m-1) with X within
    ``band`` of X(P2) (case 1), or within ``band`` of (sigma+2)/(m-p) with
    X < band X(P2) (case 2), spanning at least ``decades``.  None otherwise.
    """
    y = trace.y
    x, yy, z = y[:, 0], y[:, 1], y[:, 2]
    ok = (x > 0.0) & (z > 0.0)
    if ok.sum() < 3:
        return None
    x, yy, z = x[ok], yy[ok], z[ok]
    n = z * yy / x
    X = x / (z * z)
    e1, e2 = params.case1_exponent, params.case2_exponent
    X2 = params.X_P2
    tests = (
        ("CASE1", (np.abs(n / e1 - 1.0) <= band) & (np.abs(X / X2 - 1.0) <= band)),
        ("CASE2", (np.abs(n / e2 - 1.0) <= band) & (X <= band * X2)),
    )
    best = None
    for case, mask in tests:
        run = _lowest_run(mask)
        if run is None:
            continue
        i0, i1 = run
        z_hi, z_lo = z[i0], z[i1]
        if math.log10(z_hi / z_lo) < decades:
            continue
        # fit log f against log xi over the last decade of the stretch
        sel = slice(i0, i1 + 1)
        zz, xx = z[sel], x[sel]
        keep = zz <= 10.0 * z_lo
        lf = np.log(xx[keep]) / (params.m - 1.0)
        lz = np.log(zz[keep])
        slope = float(np.polyfit(lz, lf, 1)[0]) if keep.sum() >= 2 else float(n[i1])
        cand = (case, slope, float(X[i1]), float(z_lo))
        if best is None or z_lo < best[3]:
            best = cand
    return best


def _lowest_run(mask: np.ndarray):
    """Last contiguous run of True values (samples are ordered towards xi = 0)."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    i1 = idx[-1]
    i0 = i1
    while i0 - 1 >= 0 and mask[i0 - 1]:
        i0 -= 1
    return int(i0), int(i1)


def classify_shot(params: Params, eta: float, trace: OrbitTrace, opts: ShootOptions = ShootOptions()) -> ShootOutcome:
    m = params.m
    term = trace.terminal
    kind = term.kind if term is not None else None
    stretch = power_law_stretch(params, trace, opts.plateau_band, opts.plateau_decades)
    if kind is EventKind.XI_FLOOR:
        if stretch is None:
            X = term.state.coords[0] / term.state.coords[2] ** 2
            case = "CASE1" if abs(X / params.X_P2 - 1.0) <= opts.plateau_band else "CASE2"
            stretch = (case, math.nan, X, term.state.coords[2])
        cls = ShotClass.GOOD_P2_CASE1 if stretch[0] == "CASE1" else ShotClass.GOOD_P2_CASE2
        return ShootOutcome(eta, cls, 0.0, None, trace, None, stretch[1], stretch[2])
    if kind is EventKind.XI_ZERO:
        x0, y0, _ = term.state.coords
        a0 = max(x0, 0.0) ** (1.0 / (m - 1.0))
        if stretch is not None:
            cls = ShotClass.GOOD_P2_CASE1 if stretch[0] == "CASE1" else ShotClass.GOOD_P2_CASE2
            return ShootOutcome(eta, cls, a0, None, trace, y0, stretch[1], stretch[2])
        if abs(y0) <= opts.p1_tol:
            cls = ShotClass.GOOD_P1
        elif y0 < 0.0:
            cls = ShotClass.A_MINUS
        else:
            cls = ShotClass.POS_SLOPE
        return ShootOutcome(eta, cls, a0, None, trace, y0)
    if kind in (EventKind.SIGN_CHANGE, EventKind.DIVERGE_Y_PLUS):
        x, y, z = term.state.coords
        theta = z - x / (m * y)
        if stretch is not None:
            cls = ShotClass.GOOD_P2_CASE1 if stretch[0] == "CASE1" else ShotClass.GOOD_P2_CASE2
            return ShootOutcome(eta, cls, 0.0, theta, trace, None, stretch[1], stretch[2])
        return ShootOutcome(eta, ShotClass.A_PLUS, None, theta, trace)
    return ShootOutcome(eta, ShotClass.UNRESOLVED, None, None, trace)


def shoot_from_interface(params: Params, eta: float, cfg: IntegrationConfig | None = None,
                         opts: ShootOptions = ShootOptions()) -> ShootOutcome:
    """Follow the profile with interface at ``eta`` backwards to xi = 0 and classify it."""
    cfg = cfg or SHOOT_CONFIG
    starter = make_starter(params, "InterfaceLine", eta, opts.delta)
    try:
        trace = integrate(params, starter, "reverse", cfg, events=_shot_events(params, eta, cfg, opts))
    except StepSizeUnderflow as exc:
        return ShootOutcome(eta, ShotClass.UNRESOLVED, None, None, exc.trace)
    return classify_shot(params, eta, trace, opts)


def scan_eta(params: Params, grid, cfg: IntegrationConfig | None = None, opts: ShootOptions = ShootOptions()):
    """Shoot from every eta in ``grid``.

    Returns (outcomes, bracket, transitions) where ``bracket`` is
    (largest A_MINUS eta, smallest non-A_MINUS eta above it) or None and
    ``transitions`` lists every adjacent pair whose A_MINUS side differs.
    """
    grid = [float(e) for e in grid]
    if any(e <= 0.0 for e in grid) or grid != sorted(grid):
        raise ValueError("eta grid must be positive and sorted")
    outs = [shoot_from_interface(params, e, cfg, opts) for e in grid]
    transitions = []
    for a, b in zip(outs, outs[1:]):
        if a.side != 0 and b.side != 0 and a.side != b.side:
            transitions.append((a.eta, b.eta))
    bracket = None
    minus = [o for o in outs if o.side == -1]
    if minus:
        lo = max(o.eta for o in minus)
        above = [o for o in outs if o.eta > lo and o.side == 1]
        if above:
            bracket = (lo, min(o.eta for o in above))
    return outs, bracket, transitions


def _good_profile_samples(trace: OrbitTrace) -> list[ProfileSample]:
    xi, f, df, fmp = trace.profile_arrays()
    keep = np.isfinite(f) & (xi >= 0.0)
    return [ProfileSample(float(a), float(b), float(c), float(d)) for a, b, c, d in zip(xi[keep], f[keep], df[keep], fmp[keep])]


DEFAULT_BRACKET = (0.1, 20.0)


def _expand_bracket(params, cfg, opts, factor: float = 2.0, max_expand: int = 8):
    """Widen the default seeds geometrically until they shoot A_MINUS / A_PLUS."""
    lo = shoot_from_interface(params, DEFAULT_BRACKET[0], cfg, opts)
    for _ in range(max_expand):
        if lo.cls is ShotClass.A_MINUS:
            break
        lo = shoot_from_interface(params, lo.eta / factor, cfg, opts)
    hi = shoot_from_interface(params, DEFAULT_BRACKET[1], cfg, opts)
    for _ in range(max_expand):
        if hi.cls is ShotClass.A_PLUS:
            break
        hi = shoot_from_interface(params, hi.eta * factor, cfg, opts)
    return lo, hi


def bisect_eta(params: Params, bracket=None, cfg: IntegrationConfig | None = None, tol_eta: float = 1e-10,
               opts: ShootOptions = ShootOptions(), max_iter: int = 200) -> GoodProfile:
    """Locate the interface eta0 of a good profile between an A_MINUS and an A_PLUS shot.

    Without ``bracket`` the seeds (0.1, 20) are widened geometrically as
    needed; an explicit bracket is used as given.
    """
    cfg = cfg or SHOOT_CONFIG
    if not tol_eta > 0.0:
        raise ValueError("tol_eta must be > 0")
    if bracket is None:
        lo, hi = _expand_bracket(params, cfg, opts)
    else:
        lo_eta, hi_eta = float(bracket[0]), float(bracket[1])
        if not 0.0 < lo_eta < hi_eta:
            raise BracketError(f"need 0 < eta_lo < eta_hi, got {bracket}")
        lo = shoot_from_interface(params, lo_eta, cfg, opts)
        hi = shoot_from_interface(params, hi_eta, cfg, opts)
    if lo.cls is not ShotClass.A_MINUS or hi.cls is not ShotClass.A_PLUS:
        raise BracketError(f"bracket ends classified {lo.cls.value} / {hi.cls.value}, need A_MINUS / A_PLUS")
    it = 0
    while hi.eta - lo.eta > tol_eta and it < max_iter:
        it += 1
        mid_eta = 0.5 * (lo.eta + hi.eta)
        if not lo.eta < mid_eta < hi.eta:
            break
        mid = shoot_from_interface(params, mid_eta, cfg, opts)
        if mid.side == 0 and mid.cls is ShotClass.UNRESOLVED:
            mid = shoot_from_interface(params, mid_eta, cfg.tightened(), opts)
        if mid.side == 0:
            if mid.cls in (ShotClass.GOOD_P2_CASE1, ShotClass.GOOD_P2_CASE2):
                return _as_good(params, mid, mid, mid, it)
            raise AmbiguousLimit(f"unresolved shot at eta={mid_eta}", lo, hi)
        if mid.side < 0:
            lo = mid
        else:
            hi = mid
    return certify(params, lo, hi, opts, it)


def certify(params: Params, lo: ShootOutcome, hi: ShootOutcome, opts: ShootOptions, iterations: int = 0) -> GoodProfile:
    """Decide which good profile the converged bracket (lo, hi) delimits."""
    hterm = hi.trace.terminal.kind
    if hterm is EventKind.XI_ZERO:
        # A_MINUS meets f'(0) > 0: the limit has f'(0) = 0
        y_lo, y_hi = lo.y0, hi.y0
        if max(abs(y_lo), abs(y_hi)) <= opts.p1_tol:
            best = lo if abs(y_lo) <= abs(y_hi) else hi
            return _as_good(params, best, lo, hi, iterations, kind="P1")
        raise AmbiguousLimit(f"bracket closed with y(0) = {y_lo:.3g} / {y_hi:.3g} outside p1_tol", lo, hi)
    # A_MINUS meets a sign change: the limit profile vanishes at the origin
    case = _p2_case(params, lo, hi, opts)
    if case is None and opts.cross_check:
        good = cross_certify_case2(params, lo, hi, iterations=iterations)
        if good is not None:
            return good
    if case is None:
        raise AmbiguousLimit("A_MINUS / A_PLUS bracket without a resolved power law at the origin", lo, hi)
    best = hi if hi.trace.t[-1] >= lo.trace.t[-1] else lo
    return _as_good(params, best, lo, hi, iterations, kind="P2_" + case)


def _p2_case(params: Params, lo: ShootOutcome, hi: ShootOutcome, opts: ShootOptions):
    """Case of the common origin behaviour of the two bracket shots.

    The two traces agree down to the xi where they split; the local exponent
    xi f'/f and X = xi^-2 f^(m-1) there tell the case.
    """
    for o in (lo, hi):
        if o.cls in (ShotClass.GOOD_P2_CASE1, ShotClass.GOOD_P2_CASE2):
            return o.cls.value[-5:]
    xs = split_point(params, lo.trace, hi.trace)
    if xs is None:
        return None
    n, X = xs
    e1, e2 = params.case1_exponent, params.case2_exponent
    if abs(X / params.X_P2 - 1.0) <= opts.plateau_band:
        return "CASE1"
    if X <= opts.plateau_band * params.X_P2 and abs(n / e2 - 1.0) <= 2.0 * opts.plateau_band:
        return "CASE2"
    return None


def split_point(params: Params, a: OrbitTrace, b: OrbitTrace, rel: float = 1e-2):
    """(xi f'/f, X) at the smallest xi where two backward traces still agree."""
    za, xa = a.y[:, 2], a.y[:, 0]
    okb = (b.y[:, 2] > 0.0) & (b.y[:, 0] > 0.0)
    zb, xb = b.y[okb, 2][::-1], b.y[okb, 0][::-1]
    if zb.size < 2:
        return None
    best = None
    for i in range(len(za)):
        z, x = za[i], xa[i]
        if not (z > zb[0] and z < zb[-1] and x > 0.0):
            continue
        xbi = np.interp(z, zb, xb)
        if abs(xbi / x - 1.0) > rel:
            break
        best = i
    if best is None:
        return None
    x, y, z = a.y[best]
    return z * y / x, x / (z * z)


def _as_good(params, best: ShootOutcome, lo: ShootOutcome, hi: ShootOutcome, iterations, kind=None) -> GoodProfile:
    if kind is None:
        kind = "P2_" + best.cls.value[-5:]
    a0 = None
    if kind == "P1":
        a0 = 0.5 * (lo.a0 + hi.a0)
    elif kind.startswith("P2"):
        a0 = 0.0
    stretch = power_law_stretch(params, best.trace, 0.1, 0.0) if kind.startswith("P2") else None
    return GoodProfile(
        params=params,
        eta0=0.5 * (lo.eta + hi.eta),
        kind=kind,
        samples=_good_profile_samples(best.trace),
        a0=a0,
        bracket=(lo.eta, hi.eta),
        lo=lo,
        hi=hi,
        exponent=stretch[1] if stretch else best.exponent,
        iterations=iterations,
    )


def cross_certify_case2(params: Params, lo: ShootOutcome, hi: ShootOutcome, k_grid=None, eta_rel: float = 1e-6,
                        iterations: int = 0) -> GoodProfile | None:
    """Confirm a case-2 limit by the forward route from the P0 family.

    Backward shots leave the case-2 orbit long before the origin, so the
    bracket alone cannot fix the power law.  The P0 family is scanned, every
    B0 bracket is refined, and a refined interface matching the shooting
    bracket to relative ``eta_rel`` certifies the profile; samples and the
    origin exponent come from the forward trace.
    """
    from .orbits import closest_to_interface, refine_b0, scan_family

    eta = 0.5 * (lo.eta + hi.eta)
    tol = eta_rel * eta + (hi.eta - lo.eta)
    scan = scan_family(params, k_grid)
    for b in scan.b0_brackets:
        try:
            r = refine_b0(params, b)
        except ValueError:
            continue
        if abs(r.eta - eta) <= tol:
            _, i = closest_to_interface(params, r.trace)
            xi, f, df, fmp = r.trace.profile_arrays()
            samples = [ProfileSample(float(a), float(b_), float(c), float(d))
                       for a, b_, c, d in zip(xi[: i + 1], f[: i + 1], df[: i + 1], fmp[: i + 1])]
            return GoodProfile(params, eta, "P2_CASE2", samples, 0.0, (lo.eta, hi.eta), lo, hi, r.exponent, iterations)
    return None


def outcomes_to_json(outs, bracket=None) -> str:
    return json.dumps([o.as_record(bracket) for o in outs], indent=2)
