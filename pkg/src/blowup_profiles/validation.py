"""Golden checks in the two limit cases with known answers.

* p = 1 with sigma = sqrt(2(m+1)): an exact profile with interface exists;
  its ODE residual and a backward shot from its interface are compared
  against the closed form.
* sigma = 0: every P0-family orbit ends at the constant 1/(p-1)^(1/(p-1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import derive_exponents, explicit_constants, explicit_solution, explicit_solution_d2fm, ode_residual
from .orbits import TerminalTag, default_k_grid, scan_family
from .shooting import shoot_from_interface


@dataclass(frozen=True)
class GoldenResult:
    name: str
    value: float
    limit: float
    passed: bool
    detail: dict

    def as_record(self) -> dict:
        return {"name": self.name, "value": self.value, "limit": self.limit, "passed": self.passed, **self.detail}


def explicit_residual(m: float, n: int = 200) -> float:
    """Largest ODE residual of the exact p = 1 profile on n interior points."""
    sigma, _, _, xi0 = explicit_constants(m)
    params = derive_exponents(m, 1.0, sigma, validation=True)
    xs = xi0 * (np.arange(n) + 0.5) / n
    return max(abs(ode_residual(params, explicit_solution(m, x), explicit_solution_d2fm(m, x))) for x in xs)


def explicit_shot_error(m: float, xi_min: float = 0.1) -> tuple[float, str]:
    """Sup-norm error of a backward shot from the exact interface on [xi_min, xi0]."""
    sigma, _, _, xi0 = explicit_constants(m)
    params = derive_exponents(m, 1.0, sigma, validation=True)
    out = shoot_from_interface(params, xi0)
    xi, f, _, _ = out.trace.profile_arrays()
    mask = (xi >= xi_min) & (xi <= xi0)
    exact = np.array([explicit_solution(m, x).f for x in xi[mask]])
    return float(np.max(np.abs(f[mask] - exact))), out.cls.value


def explicit_suite(ms=(2.0, 3.0, 5.0), res_tol: float = 1e-8, shot_tol: float = 1e-6) -> list[GoldenResult]:
    out = []
    for m in ms:
        r = explicit_residual(m)
        out.append(GoldenResult(f"explicit_residual_m{m:g}", r, res_tol, r <= res_tol, {"m": m}))
        e, cls = explicit_shot_error(m)
        out.append(GoldenResult(f"explicit_shot_m{m:g}", e, shot_tol, e <= shot_tol, {"m": m, "class": cls}))
    return out


def homogeneous_suite(m: float = 3.0, p: float = 2.0, k_grid=None, tol: float = 1e-3) -> list[GoldenResult]:
    params = derive_exponents(m, p, 0.0, validation=True)
    scan = scan_family(params, default_k_grid() if k_grid is None else k_grid)
    target = (1.0 / (p - 1.0)) ** (1.0 / (p - 1.0))
    n_in = sum(c.tag is TerminalTag.ENTERS_PGAMMA0 for c in scan.classes)
    err = max((abs(t - target) for t in scan.tails), default=0.0)
    return [
        GoldenResult("homogeneous_classes", float(len(scan.ks) - n_in), 0.0, n_in == len(scan.ks),
                     {"m": m, "p": p, "n": len(scan.ks)}),
        GoldenResult("homogeneous_limit", float(err), tol, err <= tol, {"m": m, "p": p, "target": target}),
    ]


def run_all(k_grid=None) -> list[GoldenResult]:
    return explicit_suite() + homogeneous_suite(k_grid=k_grid)
