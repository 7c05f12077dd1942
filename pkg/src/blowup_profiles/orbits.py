"""Forward classification of the orbit leaving P2 and of the P0 family.

Every forward orbit of the UPPER system that starts from P2 or from P0 ends in
one of three ways: in the attractor P_gamma0 (decaying tail), at the
interface point P1, or at the stable node Q3 at infinity (sign change).
The explicit stage stops either on a divergence, on the P1 detection band,
or when the orbit reaches the slow neighbourhood of the Z axis; from there a
stiff continuation decides between P_gamma0 and a later escape.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadFamilyParam, StepSizeUnderflow, TrapViolation
from .integrator import (
    Event,
    EventKind,
    EventSpec,
    IntegrationConfig,
    OrbitTrace,
    continue_stiff,
    integrate,
)
from .local_analysis import make_starter, p2_eigenvector
from .model import Chart, Params, PhaseState, ProfileSample

ORBIT_CONFIG = IntegrationConfig(rel_tol=1e-11, abs_tol=1e-14, max_arc=1e6, max_steps=200_000)


class TerminalTag(str, enum.Enum):
    ENTERS_PGAMMA0 = "ENTERS_PGAMMA0"
    ENTERS_P1 = "ENTERS_P1"
    ENTERS_Q3 = "ENTERS_Q3"
    Q4_DIAGNOSTIC = "Q4_DIAGNOSTIC"
    UNRESOLVED = "UNRESOLVED"


@dataclass(frozen=True)
class TerminalClass:
    tag: TerminalTag
    detail: float | None = None

    def as_record(self) -> dict:
        return {"class": self.tag.value, "detail": self.detail}


@dataclass(frozen=True)
class OrbitOptions:
    """Detection thresholds for forward orbits.

    p1_x_tol / p1_line_tol: P1 band in LOWER coordinates, x = f^(m-1) below
        p1_x_tol and distance to the line m y + beta z = 0 below p1_line_tol.
    axis_radius: X, |Y| below which the stiff continuation takes over.
    p0_delta / p2_delta: starter offsets.
    """

    p1_x_tol: float = 1e-8
    p1_line_tol: float = 1e-3
    axis_radius: float = 1e-5
    p0_delta: float = 1e-4
    p2_delta: float = 1e-6
    detect_p1: bool = True


@dataclass
class FamilyScan:
    params: Params
    ks: list[float]
    classes: list[TerminalClass]
    b0_brackets: list[tuple[float, float]]
    refined: list["B0Refinement"] = field(default_factory=list)
    tails: list[float] = field(default_factory=list)

    def as_records(self) -> list[dict]:
        return [{"k": k, **c.as_record(), "tail": t} for k, c, t in zip(self.ks, self.classes, self.tails)]

    def to_json(self) -> str:
        return json.dumps({"params": self.params.as_dict(), "scan": self.as_records(),
                           "b0_brackets": [list(b) for b in self.b0_brackets],
                           "refined": [r.as_record() for r in self.refined]}, indent=2)


@dataclass
class B0Refinement:
    """Outcome of bisecting a (A0, C0) k-bracket."""

    k_lo: float
    k_hi: float
    class_lo: TerminalClass
    class_hi: TerminalClass
    trace: OrbitTrace = field(repr=False)
    eta: float
    f_eta: float
    fm_prime_eta: float
    exponent: float
    iterations: int

    def as_record(self) -> dict:
        return {"k_lo": self.k_lo, "k_hi": self.k_hi, "class_lo": self.class_lo.tag.value,
                "class_hi": self.class_hi.tag.value, "eta": self.eta, "f_eta": self.f_eta,
                "fm_prime_eta": self.fm_prime_eta, "exponent": self.exponent, "iterations": self.iterations}


# -- barrier planes and monitors ---------------------------------------------

def barrier_constants(params: Params) -> dict:
    """Coefficients of the planes Z = E - D Y and X = B Y + C and the depth Y0."""
    m = params.m
    return {
        "D": 2.0 * m * (m + 1.0) ** 2 / (m - 1.0),
        "E": 2.0 * (m + 1.0) / (m - 1.0),
        "B": m * (m - 1.0) / (2.0 * m * m + 5.0 * m + 1.0),
        "C": (2.0 * m + 1.0) * (m - 1.0) / (2.0 * m * (2.0 * m * m + 5.0 * m + 1.0)),
        "Y0": params.Y0,
    }


def plane_monitors(params: Params) -> list[EventSpec]:
    """Passive crossings of {Y = -Y0} (downwards) and of the two barrier planes."""
    c = barrier_constants(params)
    Y0, D, E, B, C = c["Y0"], c["D"], c["E"], c["B"], c["C"]
    return [
        EventSpec(EventKind.PLANE_CROSS, lambda u: -(u[1] + Y0), terminal=False, direction=1, label="Y=-Y0"),
        EventSpec(EventKind.PLANE_CROSS, lambda u: u[2] - (E - D * u[1]), terminal=False, direction=0, label="plane1"),
        EventSpec(EventKind.PLANE_CROSS, lambda u: u[0] - (B * u[1] + C), terminal=False, direction=0, label="plane2"),
    ]


def _p1_band(params: Params, opts: OrbitOptions) -> EventSpec:
    m, beta = params.m, params.beta
    norm = math.hypot(m, beta)

    def ind(u):
        xi = math.exp(min(u[3], 700.0))
        x = u[0] * xi * xi
        d = abs(m * u[1] + beta) * xi / norm
        return 1.0 - max(x / opts.p1_x_tol, d / opts.p1_line_tol)

    return EventSpec(EventKind.ENTER_BALL, ind, direction=1, label="P1")


def _pgamma_ball(params: Params, r: float) -> EventSpec:
    g0 = params.gamma0

    def ind(u):
        return 1.0 - max(abs(u[0]), abs(u[1]), abs(u[2] - g0)) / r

    return EventSpec(EventKind.ENTER_BALL, ind, direction=1, label="Pgamma0", initial=True)


def _divergence(params: Params, cfg: IntegrationConfig) -> list[EventSpec]:
    cap = cfg.divergence_cap
    return [
        EventSpec(EventKind.DIVERGE_Y_MINUS, lambda u: -u[1] - cap, direction=1),
        EventSpec(EventKind.DIVERGE_Y_PLUS, lambda u: u[1] - cap, direction=1),
        EventSpec(EventKind.DIVERGE_X, lambda u: u[0] - cap, direction=1),
        EventSpec(EventKind.DIVERGE_Z, lambda u: u[2] - cap, direction=1),
    ]


def interface_from_state(params: Params, X: float, logxi: float) -> float:
    """Interface location implied by the local form f^(m-1) ~ beta (m-1)(eta^2 - xi^2)/(2m)."""
    m = params.m
    xi = math.exp(logxi)
    x = X * xi * xi
    return math.sqrt(xi * xi + 2.0 * m * max(x, 0.0) / (params.beta * (m - 1.0)))


def _terminal_class(params: Params, ev: Event | None) -> TerminalClass:
    if ev is None:
        return TerminalClass(TerminalTag.UNRESOLVED)
    X, Y, Z = ev.state.coords
    if ev.kind is EventKind.ENTER_BALL and ev.label == "Pgamma0":
        return TerminalClass(TerminalTag.ENTERS_PGAMMA0)
    if ev.kind is EventKind.ENTER_BALL and ev.label == "P1":
        return TerminalClass(TerminalTag.ENTERS_P1, interface_from_state(params, X, ev.state.logxi))
    if ev.kind is EventKind.DIVERGE_Y_MINUS:
        # f^m vanishes linearly: xi0 - xi = -X xi / (m Y)
        xi = ev.state.xi
        return TerminalClass(TerminalTag.ENTERS_Q3, xi * (1.0 - X / (params.m * Y)))
    if ev.kind is EventKind.DIVERGE_Z:
        return TerminalClass(TerminalTag.Q4_DIAGNOSTIC)
    return TerminalClass(TerminalTag.UNRESOLVED)


def forward_classify(params: Params, start, cfg: IntegrationConfig | None = None,
                     opts: OrbitOptions = OrbitOptions(), monitors=None) -> tuple[TerminalClass, OrbitTrace]:
    """Integrate forward from ``start`` and return its terminal class."""
    cfg = cfg or ORBIT_CONFIG
    if not math.isfinite(params.gamma0):
        raise ValueError("forward classification needs p > 1")
    monitors = plane_monitors(params) if monitors is None else list(monitors)
    last = None
    for attempt in range(2):
        run_cfg = cfg if attempt == 0 else cfg.tightened()
        cls, trace = _forward_once(params, start, run_cfg, opts, monitors)
        last = (cls, trace)
        if cls.tag is not TerminalTag.UNRESOLVED:
            break
    return last


def _forward_once(params, start, cfg, opts, monitors):
    r = opts.axis_radius
    axis = EventSpec(EventKind.ENTER_BALL, lambda u: 1.0 - max(abs(u[0]), abs(u[1])) / r, direction=1, label="axis")
    events = _divergence(params, cfg) + [axis, _pgamma_ball(params, cfg.attractor_radius)]
    if opts.detect_p1:
        events.append(_p1_band(params, opts))
    try:
        trace = integrate(params, start, "forward", cfg, monitors=monitors, events=events)
    except StepSizeUnderflow as exc:
        return TerminalClass(TerminalTag.UNRESOLVED), exc.trace
    term = trace.terminal
    if term is not None and term.kind is EventKind.ENTER_BALL and term.label == "axis":
        stiff = _divergence(params, cfg) + [_pgamma_ball(params, cfg.attractor_radius)]
        if opts.detect_p1:
            stiff.append(_p1_band(params, opts))
        stiff += [EventSpec(m.kind, m.fn, terminal=False, direction=m.direction, label=m.label) for m in monitors]
        trace = continue_stiff(params, trace, cfg, stiff)
        term = trace.terminal
    return _terminal_class(params, term), trace


def classify_from_P2(params: Params, cfg: IntegrationConfig | None = None,
                     opts: OrbitOptions = OrbitOptions()) -> tuple[TerminalClass, OrbitTrace]:
    """Terminal class of the unique orbit leaving P2."""
    starter = make_starter(params, "P2", None, opts.p2_delta)
    return forward_classify(params, starter, cfg, opts)


def classify_from_P0(params: Params, k: float, cfg: IntegrationConfig | None = None,
                     opts: OrbitOptions = OrbitOptions()) -> tuple[TerminalClass, OrbitTrace]:
    """Terminal class of the P0-family orbit with Z ~ k X."""
    if not (isinstance(k, (int, float)) and k > 0.0):
        raise BadFamilyParam(f"P0 family parameter must be > 0, got {k}")
    starter = make_starter(params, "P0", float(k), opts.p0_delta)
    return forward_classify(params, starter, cfg, opts)


def default_k_grid(n: int = 64, lo: float = 1e-4, hi: float = 1e4) -> np.ndarray:
    return np.geomspace(lo, hi, n)


_A_C = (TerminalTag.ENTERS_PGAMMA0, TerminalTag.ENTERS_Q3)


def scan_family(params: Params, k_grid=None, cfg: IntegrationConfig | None = None,
                opts: OrbitOptions = OrbitOptions(), refine: bool = False, k_tol: float = 1e-8) -> FamilyScan:
    """Classify the P0 family on ``k_grid``; adjacent A0/C0 pairs become B0 brackets."""
    ks = [float(k) for k in (default_k_grid() if k_grid is None else k_grid)]
    if any(k <= 0.0 for k in ks):
        raise BadFamilyParam("k grid must be positive")
    classes, tails = [], []
    for k in ks:
        c, tr = classify_from_P0(params, k, cfg, opts)
        classes.append(c)
        tails.append(tail_value(params, tr))
    brackets = []
    for (k0, c0), (k1, c1) in zip(zip(ks, classes), zip(ks[1:], classes[1:])):
        if {c0.tag, c1.tag} == set(_A_C):
            brackets.append((k0, k1))
    scan = FamilyScan(params, ks, classes, brackets, tails=tails)
    if refine:
        scan.refined = [refine_b0(params, b, cfg, opts, k_tol) for b in brackets]
    return scan


def refine_b0(params: Params, bracket, cfg: IntegrationConfig | None = None, opts: OrbitOptions = OrbitOptions(),
              k_tol: float = 1e-8, max_iter: int = 200, delta: float = 1e-6) -> B0Refinement:
    """Bisect a (A0, C0) bracket in k down to relative width ``k_tol``.

    Runs with P1 detection off and with the P0 offset ``delta``, smaller than
    the scan default so that the start already sits on the origin power law.
    The near-critical orbit is the endpoint trace whose profile gets closest
    to the interface line; its closest point gives the interface data.
    """
    bopts = OrbitOptions(**{**opts.__dict__, "detect_p1": False, "p0_delta": delta})
    k_lo, k_hi = float(bracket[0]), float(bracket[1])
    c_lo, t_lo = classify_from_P0(params, k_lo, cfg, bopts)
    c_hi, t_hi = classify_from_P0(params, k_hi, cfg, bopts)
    if {c_lo.tag, c_hi.tag} != set(_A_C):
        raise ValueError(f"not an A0/C0 bracket: {c_lo.tag.value} / {c_hi.tag.value}")
    it = 0
    while (k_hi - k_lo) > k_tol * k_hi and it < max_iter:
        it += 1
        km = math.sqrt(k_lo * k_hi)
        if not k_lo < km < k_hi:
            break
        cm, tm = classify_from_P0(params, km, cfg, bopts)
        if cm.tag is c_lo.tag:
            k_lo, t_lo = km, tm
        elif cm.tag is c_hi.tag:
            k_hi, t_hi = km, tm
        else:
            break
    best = min((t_lo, t_hi), key=lambda t: closest_to_interface(params, t)[0])
    _, i = closest_to_interface(params, best)
    X, Y, Z, L = best.y[i]
    xi = math.exp(L)
    x = X * xi * xi
    f = x ** (1.0 / (params.m - 1.0))
    fmp = params.m * f * Y * xi
    return B0Refinement(k_lo, k_hi, c_lo, c_hi, best, float(xi), float(f), float(fmp), origin_exponent(params, best), it)


def closest_to_interface(params: Params, trace: OrbitTrace) -> tuple[float, int]:
    """Smallest x = f^(m-1) reached before the orbit leaves the interface line, and its index."""
    m, beta = params.m, params.beta
    X, Y, L = trace.y[:, 0], trace.y[:, 1], trace.y[:, 3]
    with np.errstate(over="ignore"):
        xi = np.exp(L)
        x = X * xi * xi
        d = np.abs(m * Y + beta) * xi / math.hypot(m, beta)
    near = d <= 1e-2
    if not near.any():
        i = int(np.argmin(x + d))
        return float(x[i]), i
    cand = np.flatnonzero(near)
    i = int(cand[np.argmin(x[cand])])
    return float(x[i]), i


def origin_exponent(params: Params, trace: OrbitTrace, source=(0.0, 0.0, 0.0), factor: float = 10.0) -> float:
    """Fitted power of f against xi near the start of a forward trace.

    The fit uses the leading samples whose distance to the ``source`` critical
    point (P0 by default) stays within ``factor`` times the starting distance.
    """
    xi, f, _, _ = trace.profile_arrays()
    dist = np.linalg.norm(trace.y[:, :3] - np.asarray(source, dtype=float), axis=1)
    out = np.flatnonzero(~((dist <= factor * dist[0]) & (f > 0.0)))
    n = out[0] if out.size else len(dist)
    if n < 3:
        return math.nan
    return float(np.polyfit(np.log(xi[:n]), np.log(f[:n]), 1)[0])


def tail_value(params: Params, trace: OrbitTrace) -> float:
    """xi^(sigma/(p-1)) f at the end of a trace; tends to gamma0^(1/(p-1)) in P_gamma0."""
    xi, f, _, _ = trace.profile_arrays()
    if not (math.isfinite(xi[-1]) and f[-1] > 0.0):
        return math.nan
    # f is rebuilt from X and xi only, so this does not reuse Z
    return float(xi[-1] ** (params.sigma / (params.p - 1.0)) * f[-1])


def profile_samples(trace: OrbitTrace, upto: int | None = None) -> list[ProfileSample]:
    xi, f, df, fmp = trace.profile_arrays()
    n = len(xi) if upto is None else upto + 1
    return [ProfileSample(float(a), float(b), float(c), float(d)) for a, b, c, d in zip(xi[:n], f[:n], df[:n], fmp[:n])]


# -- the invariant plane {Z = 0} ----------------------------------------------

def check_Z0_connection(params: Params, cfg: IntegrationConfig | None = None, start: tuple[float, float] | None = None,
                        delta: float = 1e-4) -> OrbitTrace:
    """Follow the P0 -> P2 connection inside {Z = 0} as a planar system.

    The orbit starts on the centre direction of P0 (Y = alpha X / beta) unless
    ``start`` = (X, Y) is given, and must reach the ball of radius
    ``attractor_radius`` around P2 without leaving the region between the
    line (m-1) Y = 2 X and the curve where dY/dX = 0.
    """
    from scipy.integrate import solve_ivp

    cfg = cfg or ORBIT_CONFIG
    m, alpha, beta = params.m, params.alpha, params.beta
    X2, Y2 = params.X_P2, params.Y_P2
    r = cfg.attractor_radius

    def F(t, u):
        X, Y = u
        return [m * X * ((m - 1.0) * Y - 2.0 * X), -m * Y * Y - beta * Y + alpha * X - m * X * Y]

    def jac(t, u):
        X, Y = u
        return [[m * ((m - 1.0) * Y - 4.0 * X), m * (m - 1.0) * X], [alpha - m * Y, -2.0 * m * Y - beta - m * X]]

    def ball(t, u):
        return math.hypot(u[0] - X2, u[1] - Y2) - r

    ball.terminal = True
    ball.direction = -1
    u0 = np.array(start if start is not None else (delta, alpha * delta / beta), dtype=float)
    if math.hypot(u0[0] - X2, u0[1] - Y2) <= r:
        st = PhaseState(Chart.UPPER, (u0[0], u0[1], 0.0), -math.inf)
        ev = Event(EventKind.ENTER_BALL, 0.0, st, "P2", True, np.array([u0[0], u0[1], 0.0, -math.inf]))
        return _planar_trace(params, np.array([0.0]), u0[None, :], [ev], ev)
    sol = solve_ivp(F, (0.0, cfg.max_arc), u0, method="Radau", jac=jac, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    events=[ball], dense_output=False)
    ts, ys = sol.t, sol.y.T
    if sol.t_events[0].size:
        te, ye = sol.t_events[0][0], sol.y_events[0][0]
        ts, ys = np.append(ts[ts < te], te), np.vstack((ys[ts < te], ye))
        st = PhaseState(Chart.UPPER, (ye[0], ye[1], 0.0), -math.inf)
        term = Event(EventKind.ENTER_BALL, float(te), st, "P2", True, np.array([ye[0], ye[1], 0.0, -math.inf]))
    else:
        st = PhaseState(Chart.UPPER, (ys[-1, 0], ys[-1, 1], 0.0), -math.inf)
        term = Event(EventKind.ARC_BUDGET, float(ts[-1]), st, "", True, np.array([ys[-1, 0], ys[-1, 1], 0.0, -math.inf]))
    side = z0_region_sides(params, ys[:, 0], ys[:, 1])
    entered = np.flatnonzero(side)
    if entered.size and not side[entered[0]:].all():
        j = entered[0] + int(np.argmin(side[entered[0]:]))
        raise TrapViolation(f"orbit in {{Z=0}} left the trapping region at X={ys[j, 0]:.6g}, Y={ys[j, 1]:.6g}")
    return _planar_trace(params, ts, ys, [term], term)


def z0_region_sides(params: Params, X, Y) -> np.ndarray:
    """True where (X, Y) lies between (m-1) Y = 2 X (below) and the curve dY/dX = 0 (above)."""
    m, alpha, beta = params.m, params.alpha, params.beta
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    dY = -m * Y * Y - beta * Y + alpha * X - m * X * Y
    return ((m - 1.0) * Y - 2.0 * X >= -1e-12) & (dY >= -1e-12)


def _planar_trace(params, ts, ys, events, terminal) -> OrbitTrace:
    n = len(ts)
    full = np.column_stack((ys[:, 0], ys[:, 1], np.zeros(n), np.full(n, -np.inf)))
    dt = np.diff(ts)
    q = np.zeros((max(n - 1, 0), 4, 4))
    if n > 1:
        q[:, :3, 0] = np.diff(full[:, :3], axis=0) / dt[:, None]
    from .integrator import Direction

    return OrbitTrace(params, Chart.UPPER, Direction.FORWARD, np.asarray(ts, dtype=float), full, events, terminal, dt, q)


def barrier_flow_signs(params: Params, n: int = 1000, seed: int = 0) -> dict:
    """Sample the flow across the two barrier-plane patches.

    Returns the fraction of positive normal components and the minimum over
    ``n`` points on each patch:
    plane1 {Z = E - D Y, X > B Y + C, -Y0 < Y < Y(P2)} with normal (0, D, 1),
    plane2 {X = B Y + C, Z > E - D Y, -Y0 < Y < Y(P2)} with normal (1, -B, 0).
    """
    from .model import upper_rhs

    c = barrier_constants(params)
    D, E, B, C, Y0 = c["D"], c["E"], c["B"], c["C"], c["Y0"]
    rhs = upper_rhs(params)
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-Y0, params.Y_P2, n)
    out = {}
    # plane1: X from B Y + C up to X(P2)
    Xlo = B * Y + C
    X = Xlo + rng.uniform(0.0, 1.0, n) * np.maximum(params.X_P2 - Xlo, 0.0)
    Z = E - D * Y
    v1 = np.array([np.dot([0.0, D, 1.0], rhs(np.array([a, b, cc, 0.0]))[:3]) for a, b, cc in zip(X, Y, Z)])
    # plane2: Z from E - D Y upward over a unit band
    X2 = B * Y + C
    Z2 = E - D * Y + rng.uniform(0.0, 1.0, n) * 10.0
    v2 = np.array([np.dot([1.0, -B, 0.0], rhs(np.array([a, b, cc, 0.0]))[:3]) for a, b, cc in zip(X2, Y, Z2)])
    for name, v, pts in (("plane1", v1, (X, Y, Z)), ("plane2", v2, (X2, Y, Z2))):
        inside = (pts[0] >= 0.0) & (pts[2] >= 0.0)
        vv = v[inside]
        out[name] = {"n": int(inside.sum()), "positive_fraction": float(np.mean(vv > 0.0)) if vv.size else math.nan,
                     "min": float(vv.min()) if vv.size else math.nan}
    return out


def p2_departure_normal_product(params: Params) -> float:
    """Scalar product of the normal of plane1 with the P2 outgoing eigenvector."""
    D = barrier_constants(params)["D"]
    v, _ = p2_eigenvector(params)
    return float(D * v[1] + v[2])


def scan_to_csv(scan: FamilyScan) -> str:
    lines = ["param,class,detail"]
    for k, c in zip(scan.ks, scan.classes):
        lines.append(f"{k!r},{c.tag.value},{'' if c.detail is None else repr(c.detail)}")
    return "\n".join(lines) + "\n"
