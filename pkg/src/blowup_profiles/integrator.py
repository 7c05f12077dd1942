"""Adaptive Dormand-Prince 5(4) integration of the chart fields with events.

Events are scalar indicator functions of the raw state vector.  After every
accepted step the indicators are compared with their previous values and a
sign change is located by bisection on the step's quartic dense output.
Terminal events stop the run; passive monitors only get recorded.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NoSuchEvent, StepSizeUnderflow
from .model import Chart, Params, PhaseState, make_rhs, profile_from_coords

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# quartic continuous extension (Shampine 1986 coefficients)
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])
ORDER = 5


class Direction(str, enum.Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


class EventKind(str, enum.Enum):
    X_ZERO = "X_ZERO"
    Y_ZERO = "Y_ZERO"
    Z_ATTAINS_GAMMA0 = "Z_ATTAINS_GAMMA0"
    ENTER_BALL = "ENTER_BALL"
    DIVERGE_Y_MINUS = "DIVERGE_Y_MINUS"
    DIVERGE_Y_PLUS = "DIVERGE_Y_PLUS"
    DIVERGE_X = "DIVERGE_X"
    DIVERGE_Z = "DIVERGE_Z"
    PLANE_CROSS = "PLANE_CROSS"
    ARC_BUDGET = "ARC_BUDGET"
    # backward shots in the LOWER chart
    XI_ZERO = "XI_ZERO"
    XI_FLOOR = "XI_FLOOR"
    SIGN_CHANGE = "SIGN_CHANGE"


@dataclass(frozen=True)
class IntegrationConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    max_arc: float = 1e7
    attractor_radius: float = 1e-4
    divergence_cap: float = 1e6
    event_refine_tol: float = 1e-12
    max_steps: int = 200_000
    first_step: float | None = None

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "max_arc", "event_refine_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.attractor_radius < 1e-2:
            raise ValueError("attractor_radius must lie in (0, 1e-2)")
        if self.divergence_cap < 1e3:
            raise ValueError("divergence_cap must be >= 1e3")

    def tightened(self, factor: float = 10.0) -> "IntegrationConfig":
        return _replace(self, rel_tol=self.rel_tol / factor, abs_tol=self.abs_tol / factor)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


@dataclass(frozen=True)
class EventSpec:
    """Scalar indicator on the raw state vector.

    ``direction=+1`` fires on a negative-to-positive crossing, ``-1`` on the
    opposite, ``0`` on both.  ``initial=True`` lets a terminal event fire at
    t = 0 when the indicator is already >= 0 there (ball-type events).
    """

    kind: EventKind
    fn: Callable[[np.ndarray], float]
    terminal: bool = True
    direction: int = 0
    label: str = ""
    initial: bool = False


@dataclass(frozen=True)
class Event:
    kind: EventKind
    time: float
    state: PhaseState
    label: str = ""
    terminal: bool = False
    vector: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass
class OrbitTrace:
    """Accepted steps of one integration plus its events and dense output."""

    params: Params
    chart: Chart
    direction: Direction
    t: np.ndarray
    y: np.ndarray
    events: list[Event]
    terminal: Event | None
    seg_h: np.ndarray = field(repr=False, default=None)
    seg_q: np.ndarray = field(repr=False, default=None)
    n_rejected: int = 0

    def __len__(self):
        return len(self.t)

    @property
    def coords(self) -> np.ndarray:
        return self.y[:, :3]

    @property
    def logxi(self) -> np.ndarray:
        if self.chart is Chart.LOWER:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(self.y[:, 2])
        return self.y[:, 3]

    def state(self, i: int) -> PhaseState:
        return _to_state(self.chart, self.y[i])

    @property
    def states(self) -> list[PhaseState]:
        return [self.state(i) for i in range(len(self.t))]

    @property
    def final(self) -> PhaseState:
        return self.state(len(self.t) - 1)

    def profile_arrays(self):
        """(xi, f, f', (f^m)') at every accepted step."""
        return profile_from_coords(self.params, self.chart, self.coords, None if self.chart is Chart.LOWER else self.logxi)

    @property
    def profile(self):
        from .model import ProfileSample

        xi, f, df, fmp = self.profile_arrays()
        return [ProfileSample(float(a), float(b), float(c), float(d)) for a, b, c, d in zip(xi, f, df, fmp)]

    def events_of(self, kind: EventKind, label: str | None = None) -> list[Event]:
        return [e for e in self.events if e.kind is kind and (label is None or e.label == label)]

    def dense(self, t: float) -> np.ndarray:
        """Dense-output state at integration time ``t``."""
        if len(self.t) == 1:
            return self.y[0].copy()
        t = min(max(t, self.t[0]), self.t[-1])
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        i = min(max(i, 0), len(self.t) - 2)
        return _dense_eval(self.y[i], self.seg_h[i], self.seg_q[i], (t - self.t[i]) / self.seg_h[i])

    def to_csv(self, fh=None) -> str:
        """Dump one row per accepted step: t, chart, c1, c2, c3, logxi, xi, f, df."""
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "chart", "c1", "c2", "c3", "logxi", "xi", "f", "df"])
        xi, f, df, _ = self.profile_arrays()
        lx = self.logxi
        for i in range(len(self.t)):
            c = self.y[i]
            w.writerow([repr(float(self.t[i])), self.chart.value, repr(float(c[0])), repr(float(c[1])), repr(float(c[2])),
                        repr(float(lx[i])), repr(float(xi[i])), repr(float(f[i])), repr(float(df[i]))])
        return buf.getvalue() if fh is None else ""


def _to_state(chart: Chart, u: np.ndarray) -> PhaseState:
    if chart is Chart.LOWER:
        logxi = math.log(u[2]) if u[2] > 0.0 else -math.inf
        return PhaseState(chart, (u[0], u[1], u[2]), logxi)
    return PhaseState(chart, (u[0], u[1], u[2]), float(u[3]))


def _dense_eval(y0, h, q, theta):
    th = np.array([theta, theta**2, theta**3, theta**4])
    return y0 + h * (q @ th)


def _rms(v):
    return math.sqrt(float(np.dot(v, v)) / v.size)


def _initial_step(fun, y0, f0, rtol, atol, max_step):
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    f1 = fun(y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / ORDER)
    return min(100 * h0, h1, max_step)


def dopri_step(fun, y, k1, h):
    """One Dormand-Prince step; returns (y_new, k7, err_vec, K)."""
    k2 = fun(y + h * (_A21 * k1))
    k3 = fun(y + h * (_A31 * k1 + _A32 * k2))
    k4 = fun(y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
    k5 = fun(y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
    k6 = fun(y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
    y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
    k7 = fun(y_new)
    K = np.stack((k1, k2, k3, k4, k5, k6, k7))
    err = h * (_E @ K)
    return y_new, k7, err, K


def fixed_step_solve(fun, y0, h: float, n: int) -> np.ndarray:
    """Propagate ``n`` fixed steps (used for order checks)."""
    y = np.asarray(y0, dtype=float)
    k = fun(y)
    for _ in range(n):
        y, k, _, _ = dopri_step(fun, y, k, h)
    return y


def _refine(g, y0, h, q, t0, g_lo, tol, max_iter=200):
    """Bisection for the root of g along the dense output of one step."""
    lo, hi = 0.0, 1.0
    u_hi = y0 + h * q.sum(axis=1)
    g_hi = g(u_hi)
    u_mid, g_mid = u_hi, g_hi
    if abs(g_lo) <= tol:
        return t0, y0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        u_mid = _dense_eval(y0, h, q, mid)
        g_mid = g(u_mid)
        if abs(g_mid) <= tol or (hi - lo) * abs(h) <= 1e-15 * max(1.0, abs(t0)):
            return t0 + mid * h, u_mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return t0 + 0.5 * (lo + hi) * h, u_mid


def default_events(params: Params, chart: Chart, cfg: IntegrationConfig) -> list[EventSpec]:
    """Divergence detectors every run carries (terminal)."""
    cap = cfg.divergence_cap
    ev = [
        EventSpec(EventKind.DIVERGE_Y_MINUS, lambda u: -u[1] - cap, direction=1),
        EventSpec(EventKind.DIVERGE_Y_PLUS, lambda u: u[1] - cap, direction=1),
        EventSpec(EventKind.DIVERGE_X, lambda u: u[0] - cap, direction=1),
    ]
    if chart is Chart.UPPER:
        ev.append(EventSpec(EventKind.DIVERGE_Z, lambda u: u[2] - cap, direction=1))
    elif chart is Chart.BARZ:
        ev.append(EventSpec(EventKind.DIVERGE_Z, lambda u: u[2] - cap * u[0], direction=1))
    return ev


def gamma0_ball(params: Params, cfg: IntegrationConfig, z_band: float | None = None) -> EventSpec:
    """Attractor ball around P_gamma0 in the UPPER chart.

    X and Y must be within ``attractor_radius`` of 0.  Along the Z axis the
    equilibrium is approached algebraically, so Z is only required to lie in
    a band where the reduced flow contracts towards gamma0 (X keeps
    decaying and Z is pulled to gamma0 from either side).
    """
    r = cfg.attractor_radius
    g0 = params.gamma0
    if z_band is None:
        # X decays near the Z axis iff Z > alpha - 2 beta / (m - 1)
        z_crit = params.alpha - 2.0 * params.beta / (params.m - 1.0)
        z_band = 0.5 * (g0 - z_crit)

    def ind(u):
        return 1.0 - max(abs(u[0]) / r, abs(u[1]) / r, abs(u[2] - g0) / z_band)

    return EventSpec(EventKind.ENTER_BALL, ind, direction=1, label="Pgamma0", initial=True)


def integrate(
    params: Params,
    start,
    direction: Direction | str,
    cfg: IntegrationConfig | None = None,
    monitors: Sequence[EventSpec] = (),
    events: Sequence[EventSpec] | None = None,
) -> OrbitTrace:
    """Integrate from ``start`` (a Starter or PhaseState).

    ``events`` replaces the chart's terminal defaults when given (pass
    ``default_events(...) + extra`` to extend them).  ``monitors`` are recorded
    but never stop the run.
    """
    cfg = cfg or IntegrationConfig()
    direction = Direction(direction)
    state = getattr(start, "state", start)
    chart = state.chart
    if chart is Chart.LOWER:
        u0 = np.array(state.coords, dtype=float)
    else:
        u0 = np.array((*state.coords, state.logxi), dtype=float)
    base = make_rhs(params, chart)
    if direction is Direction.REVERSE:
        def fun(u):
            return -base(u)
    else:
        fun = base

    if events is None:
        events = default_events(params, chart, cfg)
        if chart is Chart.UPPER and params.p > 1.0:
            events.append(gamma0_ball(params, cfg))
    specs = [e for e in events] + [EventSpec(m.kind, m.fn, terminal=False, direction=m.direction, label=m.label) for m in monitors]

    ts, ys, hs, qs = [0.0], [u0], [], []
    found: list[Event] = []
    terminal: Event | None = None

    for spec in specs:
        if spec.terminal and spec.initial and spec.fn(u0) >= 0.0:
            terminal = Event(spec.kind, 0.0, _to_state(chart, u0), spec.label, True, u0.copy())
            found.append(terminal)
            return OrbitTrace(params, chart, direction, np.array(ts), np.array(ys), found, terminal,
                              np.zeros(0), np.zeros((0, u0.size, 4)))

    gvals = [s.fn(u0) for s in specs]
    k1 = fun(u0)
    h = cfg.first_step or _initial_step(fun, u0, k1, cfg.rel_tol, cfg.abs_tol, cfg.max_step)
    t, u = 0.0, u0
    n_rej = 0
    steps = 0
    while True:
        if t >= cfg.max_arc or steps >= cfg.max_steps:
            terminal = Event(EventKind.ARC_BUDGET, t, _to_state(chart, u), "", True, u.copy())
            found.append(terminal)
            break
        h = min(h, cfg.max_step, cfg.max_arc - t + 1e-300)
        if h <= 1e-14 * max(1.0, abs(t)):
            trace = OrbitTrace(params, chart, direction, np.array(ts), np.array(ys), found, None,
                               np.array(hs), np.array(qs).reshape(len(hs), u0.size, 4), n_rej)
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g}, state={u}", trace)
        with np.errstate(over="ignore", invalid="ignore"):
            u_new, k7, err, K = dopri_step(fun, u, k1, h)
        if not np.all(np.isfinite(u_new)) or not np.all(np.isfinite(err)):
            h *= 0.2
            n_rej += 1
            continue
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(u), np.abs(u_new))
        en = _rms(err / scale)
        if en > 1.0:
            h *= max(0.2, 0.9 * en ** (-1.0 / ORDER))
            n_rej += 1
            continue
        q = K.T @ _P
        steps += 1
        # events on this step
        hit = None
        for i, spec in enumerate(specs):
            g_new = spec.fn(u_new)
            g_old = gvals[i]
            gvals[i] = g_new
            crossed = (g_old < 0.0 <= g_new and spec.direction >= 0) or (g_old > 0.0 >= g_new and spec.direction <= 0)
            if not crossed:
                continue
            te, ue = _refine(spec.fn, u, h, q, t, g_old, cfg.event_refine_tol)
            ev = Event(spec.kind, te, _to_state(chart, ue), spec.label, spec.terminal, ue)
            if spec.terminal:
                if hit is None or te < hit.time:
                    hit = ev
            else:
                found.append(ev)
        if hit is not None:
            # keep monitors that fired before the terminal time only
            found = [e for e in found if e.time <= hit.time]
            hs.append(hit.time - t)
            qs.append(q * 0.0 + _rescale_q(q, h, hit.time - t))
            ts.append(hit.time)
            ys.append(hit.vector)
            found.append(hit)
            terminal = hit
            break
        hs.append(h)
        qs.append(q)
        t += h
        u = u_new
        ts.append(t)
        ys.append(u)
        k1 = k7
        fac = 10.0 if en == 0.0 else min(10.0, 0.9 * en ** (-1.0 / ORDER))
        h *= fac

    found.sort(key=lambda e: e.time)
    return OrbitTrace(params, chart, direction, np.array(ts), np.array(ys), found, terminal,
                      np.array(hs), np.array(qs).reshape(len(hs), u0.size, 4), n_rej)


def _rescale_q(q, h, h_new):
    """Dense-output coefficients of a step truncated from length h to h_new."""
    if h_new <= 0.0:
        return np.zeros_like(q)
    r = h_new / h
    # y(t0 + s h_new) = y0 + h sum_j q_j (s r)^(j+1) = y0 + h_new sum_j q_j r^j s^(j+1)
    return q * np.array([1.0, r, r * r, r**3])


def refine_event(trace: OrbitTrace, kind: EventKind, fn: Callable[[np.ndarray], float] | None = None,
                 tol: float = 1e-12) -> Event:
    """Locate the first sign change of an indicator along a finished trace.

    ``fn`` defaults to the coordinate indicator of ``kind`` (X_ZERO: first
    coordinate, Y_ZERO: second).
    """
    if fn is None:
        if kind is EventKind.X_ZERO:
            fn = lambda u: u[0]  # noqa: E731
        elif kind is EventKind.Y_ZERO:
            fn = lambda u: u[1]  # noqa: E731
        else:
            raise NoSuchEvent(f"no default indicator for {kind.value}")
    g = np.array([fn(u) for u in trace.y])
    for i in range(len(g)):
        if abs(g[i]) <= tol:
            return Event(kind, float(trace.t[i]), trace.state(i), "", False, trace.y[i].copy())
        if i + 1 < len(g) and (g[i] > 0) != (g[i + 1] > 0):
            te, ue = _refine(fn, trace.y[i], trace.seg_h[i], trace.seg_q[i], trace.t[i], g[i], tol)
            return Event(kind, float(te), _to_state(trace.chart, ue), "", False, ue)
    raise NoSuchEvent(f"indicator for {kind.value} never changes sign along the trace")


def continue_stiff(params: Params, trace: OrbitTrace, cfg: IntegrationConfig, events: Sequence[EventSpec],
                   t_max: float = 1e30) -> OrbitTrace:
    """Continue an UPPER/BARZ forward trace with an implicit Radau method.

    Used once an orbit has reached the slow neighbourhood of the Z axis, where
    the flow is stiff (fast decay in Y, drift along Z at rate O(X)).  Events
    keep the explicit-stage conventions; the first terminal one ends the run.
    Dense output over the appended part is linear between Radau nodes.
    """
    from scipy.integrate import solve_ivp

    if trace.chart is Chart.LOWER or trace.direction is not Direction.FORWARD:
        raise ValueError("stiff continuation is only used for forward UPPER/BARZ traces")
    rhs = make_rhs(params, trace.chart)
    m = params.m

    def jac(t, u):
        from .model import jacobian

        J = np.zeros((4, 4))
        J[:3, :3] = jacobian(params, trace.chart, u[:3])
        J[3, 0] = m
        return J

    def wrap(spec):
        def g(t, u):
            return spec.fn(u)

        g.terminal = spec.terminal
        g.direction = spec.direction
        return g

    t0 = float(trace.t[-1])
    u0 = trace.y[-1].copy()
    sol = solve_ivp(lambda t, u: rhs(u), (t0, t0 + t_max), u0, method="Radau", jac=jac,
                    rtol=max(cfg.rel_tol, 1e-12), atol=max(cfg.abs_tol, 1e-16),
                    events=[wrap(s) for s in events])
    ts = np.concatenate((trace.t, sol.t[1:]))
    ys = np.concatenate((trace.y, sol.y[:, 1:].T))
    found = list(e for e in trace.events if not e.terminal)
    terminal = None
    hits = []
    for spec, te, ye in zip(events, sol.t_events, sol.y_events):
        for t_e, y_e in zip(te, ye):
            hits.append(Event(spec.kind, float(t_e), _to_state(trace.chart, y_e), spec.label, spec.terminal, y_e.copy()))
    hits.sort(key=lambda e: e.time)
    for e in hits:
        found.append(e)
        if e.terminal and terminal is None:
            terminal = e
    if terminal is not None:
        # make the event state the last sample
        keep = ts < terminal.time
        ts = np.append(ts[keep], terminal.time)
        ys = np.vstack((ys[keep], terminal.vector))
    elif sol.status == 0:
        terminal = Event(EventKind.ARC_BUDGET, float(ts[-1]), _to_state(trace.chart, ys[-1]), "", True, ys[-1].copy())
        found.append(terminal)
    n_old = len(trace.t)
    dt = np.diff(ts[n_old - 1:])
    dy = np.diff(ys[n_old - 1:], axis=0)
    q_new = np.zeros((len(dt), ys.shape[1], 4))
    with np.errstate(divide="ignore", invalid="ignore"):
        q_new[:, :, 0] = np.where(dt[:, None] > 0, dy / dt[:, None], 0.0)
    seg_q = np.concatenate((trace.seg_q, q_new)) if len(trace.seg_q) else q_new
    seg_h = np.concatenate((trace.seg_h, dt))
    found.sort(key=lambda e: e.time)
    return OrbitTrace(params, trace.chart, trace.direction, ts, ys, found, terminal, seg_h, seg_q, trace.n_rejected)
