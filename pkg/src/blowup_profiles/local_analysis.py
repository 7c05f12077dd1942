"""Critical points of the phase-space systems, their linearisations and starters.

Finite points live in the UPPER chart.  The points at infinity Q1, Q2, Q3, Q5
are given by their linearisation in the projective charts of the Poincare
hypersphere (projection by X for Q1/Q5, by Y for Q2/Q3); Q4 is only used as
an exclusion diagnostic.  ``InterfaceLine`` is the half-line of critical
points ``m y + beta z = 0`` of the LOWER chart that carries interfaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadDelta, BadFamilyParam, OutOfValidity, UnsupportedPoint
from .model import Chart, Params, PhaseState, ProfileSample, jacobian, xi_from_upper

POINT_IDS = ("P0", "P1", "P2", "Pgamma", "Q1", "Q2", "Q3", "Q4", "Q5", "InterfaceLine")
LOCAL_FORMS = ("CASE1", "CASE2", "INTERFACE", "TAIL", "POSITIVE_A", "SIGNCHANGE")
CENTER_TOL = 1e-10

Q4_NOTE = ("Q4 has no linearisation here: orbits with Z -> infinity contain no "
           "profiles, so reaching it is reported as a diagnostic")


@dataclass(frozen=True)
class CriticalPointInfo:
    id: str
    chart: Chart
    coords: tuple[float, float, float]
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    stable_dim: int
    unstable_dim: int
    center_dim: int
    param: float | None = None
    note: str = ""


@dataclass(frozen=True)
class Starter:
    origin: CriticalPointInfo
    family_param: float | None
    offset: float
    state: PhaseState
    expected_local_form: str
    direction: str = "forward"


def _decompose(J: np.ndarray):
    w, v = np.linalg.eig(J)
    order = np.lexsort((w.imag, w.real))
    w, v = w[order], v[:, order]
    if np.all(np.abs(w.imag) < 1e-14):
        w = w.real.astype(complex)
    re = w.real
    stable = int(np.sum(re < -CENTER_TOL))
    unstable = int(np.sum(re > CENTER_TOL))
    return w, np.real_if_close(v), stable, unstable, 3 - stable - unstable


def _info(pid, chart, coords, J, param=None, note=""):
    J = np.asarray(J, dtype=float)
    w, v, s, u, c = _decompose(J)
    return CriticalPointInfo(pid, Chart(chart), tuple(float(a) for a in coords), J, w, v, s, u, c, param, note)


def classify_point(params: Params, id: str, param: float | None = None) -> CriticalPointInfo:
    """Linearisation and manifold dimensions of a critical point.

    ``param`` is gamma for ``Pgamma`` (default gamma0) and eta for
    ``InterfaceLine`` (default 1).
    """
    m, p, sigma, alpha, beta = params.m, params.p, params.sigma, params.alpha, params.beta
    if id == "P0":
        c = (0.0, 0.0, 0.0)
        return _info(id, Chart.UPPER, c, jacobian(params, Chart.UPPER, c))
    if id == "P1":
        c = (0.0, -beta / m, 0.0)
        return _info(id, Chart.UPPER, c, jacobian(params, Chart.UPPER, c))
    if id == "P2":
        c = (params.X_P2, params.Y_P2, 0.0)
        return _info(id, Chart.UPPER, c, jacobian(params, Chart.UPPER, c))
    if id == "Pgamma":
        g = params.gamma0 if param is None else float(param)
        if not math.isfinite(g):
            raise UnsupportedPoint("P_gamma0 sits at infinity when p = 1")
        c = (0.0, 0.0, g)
        return _info(id, Chart.UPPER, c, jacobian(params, Chart.UPPER, c), param=g)
    if id == "InterfaceLine":
        eta = 1.0 if param is None else float(param)
        if eta <= 0.0:
            raise BadFamilyParam(f"interface point needs eta > 0, got {eta}")
        c = (0.0, -beta * eta / m, eta)
        return _info(id, Chart.LOWER, c, jacobian(params, Chart.LOWER, c), param=eta)
    if id == "Q1":
        # projective chart (y, z, w) obtained by dividing by X
        J = [[m, -1.0, alpha], [0.0, m * (sigma + 2.0), 0.0], [0.0, 0.0, 2.0 * m]]
        return _info(id, Chart.UPPER, (0.0, 0.0, 0.0), J, note="projective chart (Y/X, Z/X, 1/X)")
    if id in ("Q2", "Q3"):
        # projective chart (x, z, w) obtained by dividing by Y; Q2 repels, Q3 attracts
        D = np.diag([-m * m, -m * p, -m])
        J = -D if id == "Q2" else D
        return _info(id, Chart.UPPER, (0.0, 0.0, 0.0), J, note="projective chart (X/Y, Z/Y, 1/Y)")
    if id == "Q5":
        J = [[-m, -1.0, alpha - beta / m], [0.0, m * (sigma + 1.0) + p, 0.0], [0.0, 0.0, m + 1.0]]
        return _info(id, Chart.UPPER, (1.0 / m, 0.0, 0.0), J, note="projective chart (Y/X, Z/X, 1/X)")
    if id == "Q4":
        raise UnsupportedPoint(Q4_NOTE)
    raise ValueError(f"unknown critical point id {id!r}")


def p2_eigenvector(params: Params) -> tuple[np.ndarray, float]:
    """Closed-form unstable eigenvector (x, -1, z) of P2 and psi = |x/z|^(1/(m-p))."""
    m, p, sigma, alpha, beta = params.m, params.p, params.sigma, params.alpha, params.beta
    d = 2.0 * (m + p - 2.0) + sigma * (m - 1.0)
    x = -((m - 1.0) ** 2) / d
    z = (2.0 * m / (m - 1.0)) * (
        -(alpha * (m + 1.0) - 1.0) * (m - 1.0) ** 2 / d
        + (2.0 * (m + 1.0) * beta + m + 2.0 * p + 1.0 + sigma * (m - 1.0)) / 2.0
    )
    if not z > 0.0:
        raise ArithmeticError(f"P2 eigenvector z-component not positive: {z}")
    psi = abs(x / z) ** (1.0 / (m - p))
    return np.array([x, -1.0, z]), psi


def interface_eigenvector(params: Params, eta: float) -> np.ndarray:
    """Closed-form stable eigenvector of the interface point, first component 1."""
    m, beta = params.m, params.beta
    lam = -(m - 1.0) * beta * eta
    a = params.alpha - (eta**params.sigma if params.p == 1.0 else 0.0)
    v3 = m / lam
    v2 = -(a + beta * beta * eta * v3 / m) / (m * beta * eta)
    return np.array([1.0, v2, v3])


def _check_delta(delta):
    if not 0.0 < delta <= 1e-3:
        raise BadDelta(f"starter offset must lie in (0, 1e-3], got {delta}")


def make_starter(params: Params, id: str, family_param: float | None = None, delta: float = 1e-6) -> Starter:
    """Initial state a distance ``delta`` off a critical point, on the relevant manifold."""
    _check_delta(delta)
    m, alpha, beta = params.m, params.alpha, params.beta
    if id == "P0":
        k = family_param
        if k is None or not k > 0.0:
            raise BadFamilyParam(f"P0 family needs k > 0, got {k}")
        X, Z = delta, k * delta
        h = -(m * alpha * (alpha + beta + 1.0) / beta**2) * X * X - X * Z
        Y = (alpha * X + h) / beta
        st = PhaseState(Chart.UPPER, (X, Y, Z), xi_from_upper(params, X, Z))
        return Starter(classify_point(params, "P0"), float(k), delta, st, "CASE2")
    if id == "P2":
        v, _ = p2_eigenvector(params)
        v = v / np.linalg.norm(v)
        X, Y, Z = params.X_P2 + delta * v[0], params.Y_P2 + delta * v[1], delta * v[2]
        st = PhaseState(Chart.UPPER, (X, Y, Z), xi_from_upper(params, X, Z))
        return Starter(classify_point(params, "P2"), None, delta, st, "CASE1")
    if id == "InterfaceLine":
        eta = family_param
        if eta is None or not eta > 0.0:
            raise BadFamilyParam(f"interface starter needs eta > 0, got {eta}")
        info = classify_point(params, "InterfaceLine", eta)
        i = int(np.argmin(info.eigenvalues.real))
        v = np.real(info.eigenvectors[:, i])
        v = v / np.linalg.norm(v)
        if v[0] < 0.0:
            v = -v
        c = np.array(info.coords) + delta * v
        st = PhaseState(Chart.LOWER, tuple(c), math.log(c[2]))
        return Starter(info, float(eta), delta, st, "INTERFACE", direction="reverse")
    if id == "Pgamma":
        info = classify_point(params, "Pgamma")
        st = PhaseState(Chart.UPPER, info.coords, math.inf)
        return Starter(info, None, delta, st, "TAIL")
    if id == "Q4":
        raise UnsupportedPoint(Q4_NOTE)
    raise ValueError(f"no starter for critical point {id!r}")


def local_profile(params: Params, starter: Starter, xi: float, window: tuple[float, float] = (0.5, 2.0)) -> ProfileSample:
    """Asymptotic profile attached to a starter, evaluated at ``xi``.

    ``window`` is the validity range relative to the starter's xi (for the
    tail, ``xi`` must exceed ``window[0]``, read as an absolute lower bound).
    """
    m, p, sigma = params.m, params.p, params.sigma
    xi = float(xi)
    form = starter.expected_local_form
    if form == "TAIL":
        if not xi >= window[0]:
            raise OutOfValidity(f"tail form used at xi={xi} below {window[0]}")
        c = (1.0 / (p - 1.0)) ** (1.0 / (p - 1.0))
        e = -sigma / (p - 1.0)
        f = c * xi**e
        df = e * f / xi
        return ProfileSample(xi, f, df, m * f ** (m - 1.0) * df)
    xs = starter.state.xi
    if not window[0] * xs <= xi <= window[1] * xs:
        raise OutOfValidity(f"xi={xi} outside [{window[0]}, {window[1]}] x starter xi {xs:.6g}")
    if form == "CASE2":
        kp = starter.family_param ** (-1.0 / (m - p))
        e = (sigma + 2.0) / (m - p)
        f = kp * xi**e
        df = e * f / xi
    elif form == "CASE1":
        # X - X(P2) ~ (x/z) Z along the outgoing eigen-direction, x/z = -psi^(m-p)
        _, psi = p2_eigenvector(params)
        X2 = params.X_P2
        c = X2 ** (1.0 / (m - 1.0))
        e1 = 2.0 / (m - 1.0)
        e2 = sigma + 2.0 * (p - 1.0) / (m - 1.0)
        K = psi ** (m - p) * X2 ** ((p - 1.0) / (m - 1.0) - 1.0) / (m - 1.0)
        f = c * xi**e1 * (1.0 - K * xi**e2)
        df = c * (e1 * xi ** (e1 - 1.0) - K * (e1 + e2) * xi ** (e1 + e2 - 1.0))
    elif form == "INTERFACE":
        eta = starter.family_param
        if xi >= eta:
            return ProfileSample(xi, 0.0, 0.0, 0.0)
        g = params.beta * (m - 1.0) * (eta * eta - xi * xi) / (2.0 * m)
        f = g ** (1.0 / (m - 1.0))
        df = -(params.beta / m) * xi * g ** (1.0 / (m - 1.0) - 1.0)
    else:
        raise OutOfValidity(f"no local form for {form}")
    return ProfileSample(xi, f, df, m * f ** (m - 1.0) * df)


def q1_profile(params: Params, K: float, xi: float) -> float:
    """f(0) = K^(1/(m-1)) > 0, f'(0) = 0 profiles leaving Q1."""
    m = params.m
    return (K + params.alpha * (m - 1.0) * xi * xi / (2.0 * m)) ** (1.0 / (m - 1.0))


def q23_profile(params: Params, K: float, C: float, xi: float) -> float:
    """Profiles near Q2 (C > 0) and Q3 (C < 0): (K + C xi^(2m/(m-1)))^(1/m), clipped at 0."""
    m = params.m
    g = K + C * xi ** (2.0 * m / (m - 1.0))
    return max(g, 0.0) ** (1.0 / m)


def q5_profile(params: Params, K: float, xi: float) -> float:
    """f ~ K xi^(1/m) near xi = 0 for orbits leaving Q5."""
    return K * xi ** (1.0 / params.m)
