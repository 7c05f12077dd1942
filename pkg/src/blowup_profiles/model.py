"""Problem parameters, the profile ODE and its three autonomous phase-space charts.

A self-similar blow-up solution ``u(x, t) = (T - t)^(-alpha) f(|x| (T - t)^beta)``
of ``u_t = (u^m)_xx + |x|^sigma u^p`` has a profile ``f`` solving

    (f^m)'' - alpha f + beta xi f' + xi^sigma f^p = 0,   xi >= 0.

Three changes of variables turn this into autonomous systems:

* ``LOWER``: ``x = f^(m-1)``, ``y = f^(m-2) f'``, ``z = xi`` with ``dxi/deta = m x``.
* ``UPPER``: ``X = xi^-2 f^(m-1)``, ``Y = xi^-1 f^(m-2) f'``, ``Z = xi^sigma f^(p-1)``
  with ``d(log xi)/deta = m X``.
* ``BARZ``: as ``UPPER`` with ``Z`` replaced by ``Zbar = X Z``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartError, DomainError, SingularMapError


class Chart(str, enum.Enum):
    LOWER = "LOWER"
    UPPER = "UPPER"
    BARZ = "BARZ"


@dataclass(frozen=True)
class Params:
    """Exponents of the equation plus the derived self-similarity exponents."""

    m: float
    p: float
    sigma: float
    alpha: float
    beta: float
    validation: bool = False

    @property
    def gamma0(self) -> float:
        """Height of the attracting critical point on the Z axis, 1/(p-1)."""
        if self.p == 1.0:
            return math.inf
        return self.alpha + self.beta * self.sigma / (self.p - 1.0)

    @property
    def denom(self) -> float:
        return 2.0 * (self.p - 1.0) + self.sigma * (self.m - 1.0)

    @property
    def X_P2(self) -> float:
        m = self.m
        return (m - 1.0) / (2.0 * m * (m + 1.0))

    @property
    def Y_P2(self) -> float:
        m = self.m
        return 1.0 / (m * (m + 1.0))

    @property
    def Y0(self) -> float:
        """Depth of the no-return plane {Y = -Y0}."""
        m = self.m
        return (m - 1.0) * (self.sigma + 2.0) / (2.0 * m * self.denom)

    @property
    def case1_exponent(self) -> float:
        return 2.0 / (self.m - 1.0)

    @property
    def case2_exponent(self) -> float:
        return (self.sigma + 2.0) / (self.m - self.p)

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "p": self.p,
            "sigma": self.sigma,
            "alpha": self.alpha,
            "beta": self.beta,
            "validation": self.validation,
        }


def derive_exponents(m: float, p: float, sigma: float, validation: bool = False) -> Params:
    """Validate ``(m, p, sigma)`` and compute ``alpha``, ``beta``.

    ``p = 1`` and ``sigma = 0`` are limit cases that are only accepted with
    ``validation=True``; they back the exact p=1 solution and the homogeneous
    limit used as golden checks.
    """
    m, p, sigma = float(m), float(p), float(sigma)
    if not all(math.isfinite(v) for v in (m, p, sigma)):
        raise DomainError(f"non-finite exponents m={m}, p={p}, sigma={sigma}")
    if m <= 1.0:
        raise DomainError(f"need m > 1, got m={m}")
    if p >= m:
        raise DomainError(f"need p < m, got p={p}, m={m}")
    if sigma < 0.0:
        raise DomainError(f"need sigma >= 0, got sigma={sigma}")
    if validation:
        if p < 1.0:
            raise DomainError(f"need p >= 1 in validation mode, got p={p}")
        if p == 1.0 and sigma == 0.0:
            raise DomainError("p = 1 and sigma = 0 together leave alpha undefined")
    else:
        if p <= 1.0:
            raise DomainError(f"need p > 1, got p={p} (p = 1 requires validation=True)")
        if sigma == 0.0:
            raise DomainError("sigma = 0 requires validation=True")
    denom = 2.0 * (p - 1.0) + sigma * (m - 1.0)
    alpha = (sigma + 2.0) / denom
    beta = (m - p) / denom
    return Params(m=m, p=p, sigma=sigma, alpha=alpha, beta=beta, validation=validation)


@dataclass(frozen=True)
class PhaseState:
    chart: Chart
    coords: tuple[float, float, float]
    logxi: float = -math.inf

    def __post_init__(self):
        object.__setattr__(self, "chart", Chart(self.chart))
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        if len(self.coords) != 3:
            raise ValueError("a phase state has exactly three coordinates")

    @property
    def xi(self) -> float:
        return math.exp(self.logxi)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)


@dataclass(frozen=True)
class ProfileSample:
    xi: float
    f: float
    df: float
    fm_prime: float = field(default=math.nan)


def ode_residual(params: Params, s: ProfileSample, d2fm: float) -> float:
    """Residual ``(f^m)'' - alpha f + beta xi f' + xi^sigma f^p`` at one sample."""
    reaction = s.xi**params.sigma * s.f**params.p if s.f > 0.0 else 0.0
    return d2fm - params.alpha * s.f + params.beta * s.xi * s.df + reaction


def _check_chart_domain(state: PhaseState) -> None:
    a, _, c = state.coords
    if a < 0.0 or c < 0.0:
        raise ChartError(f"{state.chart.value} chart needs first and third coordinates >= 0, got {state.coords}")


def lower_rhs(params: Params):
    """Right-hand side of the LOWER system as a fast closure on (x, y, z)."""
    m, alpha, beta, sigma = params.m, params.alpha, params.beta, params.sigma
    q = (m + params.p - 2.0) / (m - 1.0)
    mm1 = m * (m - 1.0)

    def rhs(u):
        x, y, z = u[0], u[1], u[2]
        xp = x if x > 0.0 else 0.0
        za = z if z > 0.0 else -z
        return np.array((
            mm1 * x * y,
            -m * y * y - beta * y * z + alpha * x - za**sigma * xp**q,
            m * x,
        ))

    return rhs


def upper_rhs(params: Params):
    """Right-hand side of the UPPER system on (X, Y, Z, log xi)."""
    m, alpha, beta, sigma, p = params.m, params.alpha, params.beta, params.sigma, params.p
    mm1 = m - 1.0
    pm1 = p - 1.0

    def rhs(u):
        X, Y, Z = u[0], u[1], u[2]
        return np.array((
            m * X * (mm1 * Y - 2.0 * X),
            -m * Y * Y - beta * Y + alpha * X - m * X * Y - X * Z,
            m * Z * (pm1 * Y + sigma * X),
            m * X,
        ))

    return rhs


def barz_rhs(params: Params):
    """Right-hand side of the BARZ system on (X, Y, Zbar, log xi)."""
    m, alpha, beta, sigma, p = params.m, params.alpha, params.beta, params.sigma, params.p
    mm1 = m - 1.0
    k = m + p - 2.0

    def rhs(u):
        X, Y, W = u[0], u[1], u[2]
        return np.array((
            m * X * (mm1 * Y - 2.0 * X),
            -m * Y * Y - beta * Y + alpha * X - m * X * Y - W,
            m * W * (k * Y + (sigma - 2.0) * X),
            m * X,
        ))

    return rhs


_RHS = {Chart.LOWER: lower_rhs, Chart.UPPER: upper_rhs, Chart.BARZ: barz_rhs}


def make_rhs(params: Params, chart: Chart):
    return _RHS[Chart(chart)](params)


def vector_field(params: Params, state: PhaseState) -> tuple[np.ndarray, float]:
    """Chart vector field at ``state`` and the rate ``d(log xi)/deta``.

    In LOWER the third component is ``dxi/deta`` itself, so the returned rate is
    ``m x / z`` (infinite at ``z = 0``).
    """
    _check_chart_domain(state)
    u = state.as_array()
    if state.chart is Chart.LOWER:
        v = lower_rhs(params)(u)
        rate = v[2] / u[2] if u[2] > 0.0 else math.inf
        return v, rate
    v = make_rhs(params, state.chart)(np.append(u, state.logxi))
    return v[:3], float(v[3])


def jacobian(params: Params, chart: Chart, coords) -> np.ndarray:
    """Jacobian of the chart field (3x3, log xi excluded)."""
    m, alpha, beta, sigma, p = params.m, params.alpha, params.beta, params.sigma, params.p
    a, b, c = (float(v) for v in coords)
    chart = Chart(chart)
    if chart is Chart.UPPER:
        X, Y, Z = a, b, c
        return np.array([
            [m * ((m - 1.0) * Y - 4.0 * X), m * (m - 1.0) * X, 0.0],
            [alpha - m * Y - Z, -2.0 * m * Y - beta - m * X, -X],
            [m * sigma * Z, m * (p - 1.0) * Z, m * ((p - 1.0) * Y + sigma * X)],
        ])
    if chart is Chart.BARZ:
        X, Y, W = a, b, c
        k = m + p - 2.0
        return np.array([
            [m * ((m - 1.0) * Y - 4.0 * X), m * (m - 1.0) * X, 0.0],
            [alpha - m * Y, -2.0 * m * Y - beta - m * X, -1.0],
            [m * (sigma - 2.0) * W, m * k * W, m * (k * Y + (sigma - 2.0) * X)],
        ])
    x, y, z = a, b, c
    q = (m + p - 2.0) / (m - 1.0)
    xp = max(x, 0.0)
    zs = abs(z) ** sigma
    dq = 1.0 if q == 1.0 else (q * xp ** (q - 1.0))
    dz = 0.0 if sigma == 0.0 or xp == 0.0 else sigma * abs(z) ** (sigma - 1.0) * math.copysign(1.0, z) * xp**q
    return np.array([
        [m * (m - 1.0) * y, m * (m - 1.0) * x, 0.0],
        [alpha - zs * dq, -2.0 * m * y - beta * z, -beta * y - dz],
        [m, 0.0, 0.0],
    ])


def xi_from_upper(params: Params, X: float, Z: float) -> float:
    """log xi implied by the UPPER coordinates X > 0, Z > 0."""
    m, p = params.m, params.p
    return ((m - 1.0) * math.log(Z) - (p - 1.0) * math.log(X)) / params.denom


def chart_map(params: Params, state: PhaseState, target: Chart) -> PhaseState:
    """Express ``state`` in the ``target`` chart (strictly interior points only)."""
    target = Chart(target)
    src = state.chart
    a, b, c = state.coords
    if a <= 0.0 or c <= 0.0:
        raise SingularMapError(f"chart map needs interior point, got {src.value} {state.coords}")
    if src is target:
        return state
    m, p, sigma = params.m, params.p, params.sigma

    if src is Chart.LOWER:
        x, y, z = a, b, c
        X, Y, Z = x / z**2, y / z, x ** ((p - 1.0) / (m - 1.0)) * z**sigma
        logxi = math.log(z)
    else:
        X, Y = a, b
        Z = c if src is Chart.UPPER else c / a
        logxi = xi_from_upper(params, X, Z)

    if target is Chart.UPPER:
        return PhaseState(Chart.UPPER, (X, Y, Z), logxi)
    if target is Chart.BARZ:
        return PhaseState(Chart.BARZ, (X, Y, X * Z), logxi)
    xi = math.exp(logxi)
    return PhaseState(Chart.LOWER, (X * xi * xi, Y * xi, xi), logxi)


def profile_from_coords(params: Params, chart: Chart, coords: np.ndarray, logxi: np.ndarray | None = None):
    """Vectorised reconstruction of (xi, f, f', (f^m)') from chart samples.

    ``coords`` has shape (n, 3); for UPPER/BARZ ``logxi`` gives log xi per row.
    """
    m = params.m
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    chart = Chart(chart)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if chart is Chart.LOWER:
            x = np.maximum(coords[:, 0], 0.0)
            y = coords[:, 1]
            xi = coords[:, 2]
        else:
            xi = np.exp(np.asarray(logxi, dtype=float))
            x = np.maximum(coords[:, 0], 0.0) * xi**2
            y = coords[:, 1] * xi
        f = x ** (1.0 / (m - 1.0))
        df = np.where(f > 0.0, y * f ** (2.0 - m), np.nan)
        fmp = m * y * f
    return xi, f, df, fmp


def explicit_constants(m: float) -> tuple[float, float, float, float]:
    """(sigma, B, c, xi0) of the exact p = 1 solution with interface."""
    sigma = math.sqrt(2.0 * (m + 1.0))
    B = (m - 1.0) ** 2 / (m * (sigma + 2.0) * (m * sigma + m + 1.0))
    c = (m - 1.0) / (2.0 * m * (m + 1.0))
    xi0 = (c / B) ** (1.0 / sigma)
    return sigma, B, c, xi0


def explicit_solution(m: float, xi: float) -> ProfileSample:
    """Closed-form p = 1 profile ``xi^(2/(m-1)) (c - B xi^sigma)_+^(1/(m-1))``."""
    if m <= 1.0:
        raise DomainError(f"need m > 1, got {m}")
    sigma, B, c, _ = explicit_constants(m)
    xi = float(xi)
    if xi <= 0.0:
        return ProfileSample(xi=0.0, f=0.0, df=0.0, fm_prime=0.0)
    g = c - B * xi**sigma
    if g <= 0.0:
        return ProfileSample(xi=xi, f=0.0, df=0.0, fm_prime=0.0)
    a, b = 2.0 / (m - 1.0), 1.0 / (m - 1.0)
    f = xi**a * g**b
    df = f * (a / xi - b * sigma * B * xi ** (sigma - 1.0) / g)
    return ProfileSample(xi=xi, f=f, df=df, fm_prime=m * f ** (m - 1.0) * df)


def explicit_solution_d2fm(m: float, xi: float) -> float:
    """``(f^m)''`` of the exact p = 1 profile, inside its support."""
    sigma, B, c, _ = explicit_constants(m)
    g = c - B * xi**sigma
    if xi <= 0.0 or g <= 0.0:
        return 0.0
    A, E = 2.0 * m / (m - 1.0), m / (m - 1.0)
    g1 = -B * sigma * xi ** (sigma - 1.0)
    g2 = -B * sigma * (sigma - 1.0) * xi ** (sigma - 2.0)
    h = xi**A * g**E
    L1 = A / xi + E * g1 / g
    L2 = -A / xi**2 + E * (g2 / g - (g1 / g) ** 2)
    return h * (L1 * L1 + L2)
