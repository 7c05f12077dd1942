"""Invariant monitors evaluated on finished traces and profiles.

Each check returns a MonitorReport; ``violations`` counts samples breaking
the inequality beyond its tolerance and ``worst`` is the largest excess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrator import OrbitTrace
from .model import Chart, Params


@dataclass(frozen=True)
class MonitorReport:
    name: str
    checked: int
    violations: int
    worst: float

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def as_record(self) -> dict:
        return {"name": self.name, "checked": self.checked, "violations": self.violations, "worst": self.worst}


def _report(name: str, excess: np.ndarray) -> MonitorReport:
    excess = np.asarray(excess, dtype=float)
    if excess.size == 0:
        return MonitorReport(name, 0, 0, -math.inf)
    return MonitorReport(name, int(excess.size), int(np.count_nonzero(excess > 0.0)), float(excess.max()))


def upper_bound_coefficient(params: Params) -> float:
    """c in f(xi) <= c xi^(2/(m-1)) for good profiles of type P2."""
    m = params.m
    return (params.alpha * (m - 1.0) / (2.0 * m)) ** (1.0 / (m - 1.0))


def upper_bound(params: Params, xi, f, tol: float = 1e-8) -> MonitorReport:
    xi = np.asarray(xi, dtype=float)
    f = np.asarray(f, dtype=float)
    bound = upper_bound_coefficient(params) * xi ** (2.0 / (params.m - 1.0))
    return _report("upper_bound", f - bound - tol)


def local_maxima(f) -> np.ndarray:
    """Indices of strict interior local maxima of a sampled profile."""
    f = np.asarray(f, dtype=float)
    if f.size < 3:
        return np.zeros(0, dtype=int)
    return np.flatnonzero((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])) + 1


def maxima_bound(params: Params, xi, f, tol: float = 1e-6) -> MonitorReport:
    """At a local maximum xi0, f(xi0) >= alpha^(1/(p-1)) xi0^(-sigma/(p-1))."""
    xi = np.asarray(xi, dtype=float)
    f = np.asarray(f, dtype=float)
    idx = local_maxima(f)
    p = params.p
    lower = params.alpha ** (1.0 / (p - 1.0)) * xi[idx] ** (-params.sigma / (p - 1.0))
    return _report("maxima_bound", lower - f[idx] - tol)


def _upper_coords(trace: OrbitTrace) -> np.ndarray:
    if trace.chart is not Chart.UPPER:
        raise ValueError("monitor expects an UPPER-chart trace")
    return trace.y


def half_space_trap(params: Params, trace: OrbitTrace, tol: float = 1e-8) -> MonitorReport:
    """Orbits starting below {Y = alpha/m} with X, Z >= 0 stay below it."""
    y = _upper_coords(trace)
    cap = params.alpha / params.m
    X0, Y0, Z0 = y[0, :3]
    if not (Y0 <= cap - 1e-6 and X0 >= 0.0 and Z0 >= 0.0):
        return MonitorReport("half_space_trap", 0, 0, -math.inf)
    return _report("half_space_trap", y[:, 1] - cap - tol)


def flow2_monotonicity(params: Params, trace: OrbitTrace, tol: float = 1e-9, start_radius: float = 1e-4,
                       first_excursion: bool = False) -> MonitorReport:
    """Along a P2 orbit X never increases, Y never increases while Y >= 0,
    and after leaving the starter ball X < X(P2), Y < Y(P2).

    With ``first_excursion`` the check stops where the orbit first comes back
    into {Y >= 0} after having left it. Orbits that spiral into P_gamma0 can
    re-enter that half-space close to the Z axis, where X genuinely grows.
    """
    y = _upper_coords(trace)
    if first_excursion:
        neg = np.flatnonzero(y[:, 1] < 0.0)
        if neg.size:
            back = np.flatnonzero(y[neg[0]:, 1] >= 0.0)
            if back.size:
                y = y[:neg[0] + back[0]]
    X, Y = y[:, 0], y[:, 1]
    dX = np.diff(X) - tol
    pos = Y[:-1] >= 0.0
    dY = np.diff(Y)[pos] - tol
    away = np.hypot(X - params.X_P2, Y - params.Y_P2) > start_radius
    caps = np.concatenate((X[away] - params.X_P2 - tol, Y[away] - params.Y_P2 - tol))
    return _report("flow2_monotonicity", np.concatenate((dX, dY, caps)))


def y0_non_reentry(params: Params, trace: OrbitTrace, tol: float = 1e-8) -> MonitorReport:
    """Once below {Y = -Y0} with X < X(P2), the orbit never comes back above it."""
    y = _upper_coords(trace)
    X, Y = y[:, 0], y[:, 1]
    below = np.flatnonzero((Y < -params.Y0) & (X < params.X_P2))
    if below.size == 0:
        return MonitorReport("y0_non_reentry", 0, 0, -math.inf)
    after = Y[below[0]:]
    return _report("y0_non_reentry", after - (-params.Y0 + tol))


def invariant_plane(trace: OrbitTrace, component: int, tol: float = 1e-12) -> MonitorReport:
    """|component| stays below ``tol`` for an orbit started inside the plane."""
    c = np.abs(trace.y[:, component])
    return _report(f"invariant_plane_{component}", c - tol)


def profile_report(params: Params, xi, f, p2: bool = False) -> list[MonitorReport]:
    out = [maxima_bound(params, xi, f)]
    if p2:
        out.append(upper_bound(params, xi, f))
    return out


def p2_orbit_report(params: Params, trace: OrbitTrace) -> list[MonitorReport]:
    return [half_space_trap(params, trace), flow2_monotonicity(params, trace), y0_non_reentry(params, trace)]
