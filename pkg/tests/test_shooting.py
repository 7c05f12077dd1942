import json
import math

import numpy as np
import pytest

from blowup_profiles.errors import BracketError
from blowup_profiles.model import derive_exponents, explicit_constants, explicit_solution
from blowup_profiles.monitors import maxima_bound, profile_report, upper_bound
from blowup_profiles.shooting import (
    ShotClass,
    bisect_eta,
    outcomes_to_json,
    scan_eta,
    shoot_from_interface,
)

from oracles import forward_from_origin, interface_from_local_form

P = derive_exponents(3, 2, 1)


@pytest.fixture(scope="module")
def p1_profile():
    return bisect_eta(P)


def test_small_eta_is_a_minus():
    assert shoot_from_interface(P, 0.2).cls is ShotClass.A_MINUS


def test_large_eta_is_a_plus():
    assert shoot_from_interface(P, 10.0).cls is ShotClass.A_PLUS


def test_explicit_interface_shot_is_case1():
    m = 3.0
    sigma, _, _, xi0 = explicit_constants(m)
    E = derive_exponents(m, 1.0, sigma, validation=True)
    out = shoot_from_interface(E, xi0)
    assert out.cls is ShotClass.GOOD_P2_CASE1
    xi, f, _, _ = out.trace.profile_arrays()
    mask = (xi >= 0.1) & (xi <= xi0)
    exact = np.array([explicit_solution(m, x).f for x in xi[mask]])
    assert np.max(np.abs(f[mask] - exact)) <= 1e-6


def test_bracket_errors():
    with pytest.raises(BracketError):
        bisect_eta(P, (2.0, 1.0))
    with pytest.raises(BracketError):
        bisect_eta(P, (5.0, 10.0))
    with pytest.raises(ValueError):
        bisect_eta(P, (0.2, 10.0), tol_eta=0.0)


def test_scan_eta_grid_validation():
    with pytest.raises(ValueError):
        scan_eta(P, [1.0, 0.5])
    outs, bracket, trans = scan_eta(P, [])
    assert outs == [] and bracket is None and trans == []


def test_scan_eta_brackets_root(p1_profile):
    outs, bracket, trans = scan_eta(P, [1.0, 2.0, 3.0, 4.0, 5.0])
    assert bracket == (3.0, 4.0)
    assert trans == [(3.0, 4.0)]
    rec = json.loads(outcomes_to_json(outs, bracket))
    assert [r["class"] for r in rec][0] == "A_MINUS"
    assert bracket[0] < p1_profile.eta0 < bracket[1]


def test_p1_profile_certified(p1_profile):
    g = p1_profile
    assert g.kind == "P1"
    assert g.bracket[1] - g.bracket[0] <= 1e-10
    assert g.a0 > 0.0
    # at convergence the bracket shots may themselves certify
    assert g.lo.cls in (ShotClass.A_MINUS, ShotClass.GOOD_P1) and g.lo.side == -1
    assert g.hi.cls in (ShotClass.A_PLUS, ShotClass.GOOD_P1) and g.hi.side == 1


def test_p1_profile_forward_route(p1_profile):
    # independent route: integrate from f(0) = a0, f'(0) = 0 and read the interface off the local form
    g = p1_profile
    xi, f, w = forward_from_origin(3, 2, 1, g.a0)
    assert w / f == pytest.approx(-P.beta * xi, rel=1e-4)
    assert interface_from_local_form(3, 2, 1, xi, f) == pytest.approx(g.eta0, abs=1e-7)


@pytest.mark.parametrize("scale", [0.99, 1.01])
def test_forward_route_discriminates(p1_profile, scale):
    xi, f, w = forward_from_origin(3, 2, 1, scale * p1_profile.a0)
    ok = math.isfinite(xi) and abs(w / f / (-P.beta * xi) - 1.0) <= 1e-2
    assert not ok


def test_p1_profile_bounds(p1_profile):
    xi = np.array([s.xi for s in p1_profile.samples])
    f = np.array([s.f for s in p1_profile.samples])
    assert all(r.ok for r in profile_report(P, xi, f))
    assert maxima_bound(P, xi, f).ok
    # the power bound at the origin is specific to profiles vanishing there
    assert not upper_bound(P, xi, f).ok


def test_upper_bound_on_explicit_profile():
    m = 3.0
    sigma, _, _, xi0 = explicit_constants(m)
    E = derive_exponents(m, 1.0, sigma, validation=True)
    xi = np.linspace(1e-3, xi0, 500)
    f = np.array([explicit_solution(m, x).f for x in xi])
    assert upper_bound(E, xi, f).ok


def test_profile_csv(p1_profile):
    lines = p1_profile.to_csv().splitlines()
    assert lines[0] == "xi,f,df,fm_prime"
    assert len(lines) == len(p1_profile.samples) + 1


def test_eta_dependence_continuous(p1_profile):
    # eta0 varies smoothly in sigma near sigma = 1
    e1 = bisect_eta(derive_exponents(3, 2, 0.98), tol_eta=1e-8).eta0
    e2 = bisect_eta(derive_exponents(3, 2, 1.02), tol_eta=1e-8).eta0
    assert min(e1, e2) < p1_profile.eta0 < max(e1, e2) or abs(e1 - e2) < 0.2
    assert abs(e1 - p1_profile.eta0) < 0.2 and abs(e2 - p1_profile.eta0) < 0.2
