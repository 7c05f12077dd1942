"""Independent reference computations used by the tests.

Nothing here imports the package's vector fields: the chart systems are
rebuilt symbolically from the profile ODE and the coordinate definitions,
and the profile itself is integrated forward from the origin with scipy.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp


def exponents(m, p, sigma):
    d = 2.0 * (p - 1.0) + sigma * (m - 1.0)
    return (sigma + 2.0) / d, (m - p) / d


@lru_cache(maxsize=None)
def _symbolic_fields():
    """Chart fields derived by the chain rule from (f^m)'' = alpha f - beta xi f' - xi^sigma f^p."""
    xi, f, g, m, p, s, a, b = sp.symbols("xi f g m p sigma alpha beta", positive=True)
    # g = f'; f'' from expanding (f^m)'' = m f^(m-1) f'' + m (m-1) f^(m-2) f'^2
    fm2 = a * f - b * xi * g - xi**s * f**p
    fpp = (fm2 - m * (m - 1) * f ** (m - 2) * g**2) / (m * f ** (m - 1))

    def d_dxi(expr):
        return sp.diff(expr, xi) + sp.diff(expr, f) * g + sp.diff(expr, g) * fpp

    # LOWER: x = f^(m-1), y = f^(m-2) f', z = xi, with d xi / d eta = m x
    x, y = f ** (m - 1), f ** (m - 2) * g
    rate_l = m * x
    lower = [sp.simplify(d_dxi(v) * rate_l) for v in (x, y, xi)]
    # UPPER: X = xi^-2 f^(m-1), Y = xi^-1 f^(m-2) f', Z = xi^sigma f^(p-1), d log xi / d eta = m X
    X, Y, Z = xi**-2 * f ** (m - 1), xi**-1 * f ** (m - 2) * g, xi**s * f ** (p - 1)
    rate_u = m * X * xi
    upper = [sp.simplify(d_dxi(v) * rate_u) for v in (X, Y, Z)]
    args = (xi, f, g, m, p, s, a, b)
    return sp.lambdify(args, lower, "math"), sp.lambdify(args, upper, "math")


def lower_field_from_profile(m, p, sigma, xi, f, df):
    a, b = exponents(m, p, sigma)
    return np.array(_symbolic_fields()[0](xi, f, df, m, p, sigma, a, b), dtype=float)


def upper_field_from_profile(m, p, sigma, xi, f, df):
    a, b = exponents(m, p, sigma)
    return np.array(_symbolic_fields()[1](xi, f, df, m, p, sigma, a, b), dtype=float)


def forward_from_origin(m, p, sigma, a0, f_stop=1e-3, xi_max=20.0, rtol=1e-12, atol=1e-14):
    """Integrate the profile ODE from f(0) = a0, f'(0) = 0 until f drops to f_stop.

    Unknowns (f, w) with w = (f^m)'.  Returns (xi_stop, f, w) at the stop
    (all nan if f stays above f_stop up to xi_max).
    """
    alpha, beta = exponents(m, p, sigma)

    def rhs(xi, u):
        f, w = u
        fp = max(f, 1e-300)
        df = w / (m * fp ** (m - 1.0))
        return [df, alpha * f - beta * xi * df - xi**sigma * fp**p]

    def hit(xi, u):
        return u[0] - f_stop

    hit.terminal = True
    hit.direction = -1
    # series start: f = a0 + c xi^2 with 2 m a0^(m-1) c = alpha a0 (sigma > 0)
    x0 = 1e-6
    c = alpha * a0 / (2.0 * m * a0 ** (m - 1.0))
    u0 = [a0 + c * x0 * x0, m * a0 ** (m - 1.0) * 2.0 * c * x0]
    sol = solve_ivp(rhs, (x0, xi_max), u0, method="DOP853", rtol=rtol, atol=atol, events=hit)
    if not sol.t_events[0].size:
        return math.nan, math.nan, math.nan
    return float(sol.t_events[0][0]), float(sol.y_events[0][0][0]), float(sol.y_events[0][0][1])


def interface_from_local_form(m, p, sigma, xi, f):
    """eta from f^(m-1) = beta (m-1) (eta^2 - xi^2) / (2 m)."""
    _, beta = exponents(m, p, sigma)
    return math.sqrt(xi * xi + 2.0 * m * f ** (m - 1.0) / (beta * (m - 1.0)))


def p1_eigs(m, p, sigma):
    _, b = exponents(m, p, sigma)
    return sorted([-b * (m - 1.0), b, -(p - 1.0) * b])


def p2_products(m, p, sigma):
    """(lambda1 * lambda2, lambda3) at P2."""
    return (m - 1.0) / (2.0 * (m + 1.0)), (2.0 * (p - 1.0) + sigma * (m - 1.0)) / (2.0 * (m + 1.0))


def explicit_xi0(m):
    """Interface of the exact p = 1 profile, from exact rationals and surds."""
    mm = sp.Integer(m)
    s = sp.sqrt(2 * (mm + 1))
    B = (mm - 1) ** 2 / (mm * (s + 2) * (mm * s + mm + 1))
    c = (mm - 1) / (2 * mm * (mm + 1))
    return float(sp.N((c / B) ** (1 / s), 30))


def barrier_F(X, Y, m, p, sigma):
    """Closed-form sign function of the flow across Z = E - D Y (positive multiple of the normal component)."""
    d = sigma * (m - 1.0) + 2.0 * (p - 1.0)
    L = (-(m - 1.0) ** 2 * sigma**2 + sigma * (m - 1.0) * (2 * m * m + 3 * m + 3 - 2 * p)
         + 4 * p * (m + 1.0) ** 2 - 2 * (m + 1.0) * (3 * m + 1.0))
    cy = (m * m + m * sigma - m * p - m * p * sigma + m + p * sigma - 2 * p * p + 3 * p - sigma - 2) / ((m + 1.0) * d)
    cxy = m * (2 * m * m - m * sigma + 3 * m + sigma + 3) / (m - 1.0)
    return -m * p * Y * Y - cy * Y + cxy * X * Y - L / ((m + 1.0) * (m - 1.0) * d) * X


def barrier_H(Y, Z, m, p, sigma):
    """Closed-form sign function of the flow across X = B Y + C."""
    d = sigma * (m - 1.0) + 2.0 * (p - 1.0)
    q = (2 * m * m + 5 * m + 1.0) ** 2
    J = sigma * (4 * m**4 - 6 * m**3 + m + 1) + (8 * m**3 - 8 * m * m - 6 * m - 2) * p - 4 * m**3 + 6 * m * m + 4 * m + 2
    return (2 * m**3 * (m - 1) * (m + 1) ** 2 / q * Y * Y
            + (m - 1) * (m + 1) * J / (2 * d * q) * Y
            + (m * m * (m - 1) ** 2 / q * Y + (2 * m + 1) * (m - 1) ** 2 / (2 * q)) * Z
            - (2 * m * m * sigma + 4 * m * p - 2 * m + 2 * p - sigma - 2) * (2 * m + 1) * (m - 1) ** 2 / (2 * m * d * q))
