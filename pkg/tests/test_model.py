import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_profiles.errors import ChartError, DomainError, SingularMapError
from blowup_profiles.model import (
    Chart,
    PhaseState,
    ProfileSample,
    chart_map,
    derive_exponents,
    explicit_constants,
    explicit_solution,
    explicit_solution_d2fm,
    lower_rhs,
    ode_residual,
    upper_rhs,
    vector_field,
)

from oracles import explicit_xi0, lower_field_from_profile, upper_field_from_profile

params_in_range = st.tuples(
    st.floats(1.2, 6.0), st.floats(0.05, 0.95), st.floats(0.05, 8.0)
).map(lambda t: (t[0], 1.0 + t[1] * (t[0] - 1.0), t[2]))


def test_exponents_hand_values():
    P = derive_exponents(3, 2, 1)
    assert P.alpha == pytest.approx(0.75, abs=1e-15)
    assert P.beta == pytest.approx(0.25, abs=1e-15)


def test_homogeneous_exponents_need_flag():
    with pytest.raises(DomainError):
        derive_exponents(3, 2, 0.0)
    P = derive_exponents(3, 2, 0.0, validation=True)
    assert (P.alpha, P.beta) == pytest.approx((1.0, 0.5), abs=1e-15)


@pytest.mark.parametrize("m,p,s", [(2, 2, 1), (3, 3.5, 1), (0.9, 0.5, 1), (3, 2, -1), (3, 1.0, 1)])
def test_out_of_range_rejected(m, p, s):
    with pytest.raises(DomainError):
        derive_exponents(m, p, s)


@given(params_in_range)
def test_exponent_relation(mps):
    P = derive_exponents(*mps)
    m, p, s = mps
    assert P.alpha > 0 and P.beta > 0
    assert P.alpha * (m - p) == pytest.approx(P.beta * (s + 2.0), rel=1e-14)


def test_residual_trivial_cases():
    P = derive_exponents(3, 2, 1)
    assert ode_residual(P, ProfileSample(0.7, 0.0, 0.0, 0.0), 0.0) == 0.0
    H = derive_exponents(3, 2, 0.0, validation=True)
    assert ode_residual(H, ProfileSample(2.3, 1.0, 0.0, 0.0), 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("m", [2, 3, 5])
def test_explicit_solution_residual(m):
    sigma, _, _, xi0 = explicit_constants(m)
    P = derive_exponents(m, 1, sigma, validation=True)
    xs = xi0 * (np.arange(200) + 0.5) / 200
    worst = max(abs(ode_residual(P, explicit_solution(m, x), explicit_solution_d2fm(m, x))) for x in xs)
    assert worst <= 1e-8


@pytest.mark.parametrize("m", [2, 3, 5])
def test_explicit_interface_matches_exact_arithmetic(m):
    assert explicit_constants(m)[3] == pytest.approx(explicit_xi0(m), rel=1e-13)


def test_explicit_solution_support():
    xi0 = explicit_constants(3)[3]
    assert xi0 == pytest.approx(1.598, abs=5e-4)
    s = explicit_solution(3, 0.0)
    assert s.f == 0.0 and s.fm_prime == 0.0
    assert explicit_solution(3, xi0 + 1.0).f == 0.0


def test_vector_field_hand_value():
    P = derive_exponents(3, 2, 1)
    d, rate = vector_field(P, PhaseState(Chart.UPPER, (1.0, 1.0, 1.0), 0.0))
    assert d == pytest.approx([0.0, -6.5, 6.0], abs=1e-14)
    assert rate == pytest.approx(3.0)


def test_vector_field_zero_at_critical_points():
    P = derive_exponents(3, 2, 1)
    for c in [(0.0, 0.0, 0.0), (0.0, -P.beta / P.m, 0.0), (P.X_P2, P.Y_P2, 0.0), (0.0, 0.0, P.gamma0), (0.0, 0.0, 3.7)]:
        d, _ = vector_field(P, PhaseState(Chart.UPPER, c, 0.0))
        assert np.max(np.abs(d)) <= 1e-15


def test_negative_coordinates_rejected():
    P = derive_exponents(3, 2, 1)
    with pytest.raises(ChartError):
        vector_field(P, PhaseState(Chart.UPPER, (-1.0, 0.0, 1.0), 0.0))


def test_upper_field_isolated_zeros():
    # away from the listed critical points the field does not vanish
    P = derive_exponents(3, 2, 1)
    rhs = upper_rhs(P)
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.0, 2.0, size=(10_000, 3))
    norms = np.array([np.linalg.norm(rhs(np.append(u, 0.0))[:3]) for u in pts])
    crit = np.array([(0, 0, 0), (0, -P.beta / P.m, 0), (P.X_P2, P.Y_P2, 0)])
    near_axis = np.hypot(pts[:, 0], pts[:, 1]) < 1e-6
    near = near_axis | (np.min(np.linalg.norm(pts[:, None, :] - crit[None], axis=2), axis=1) < 1e-6)
    assert np.all(norms[~near] >= 1e-10)


def test_chart_map_examples():
    P = derive_exponents(3, 2, 1)
    up = chart_map(P, PhaseState(Chart.LOWER, (1.0, 0.0, 1.0), 0.0), Chart.UPPER)
    assert up.coords == pytest.approx((1.0, 0.0, 1.0))
    up = chart_map(P, PhaseState(Chart.LOWER, (4.0, 1.0, 2.0), math.log(2.0)), Chart.UPPER)
    assert up.coords == pytest.approx((1.0, 0.5, 4.0), rel=1e-14)
    start = PhaseState(Chart.LOWER, (0.5, -0.2, 2.0), math.log(2.0))
    back = chart_map(P, chart_map(P, start, Chart.UPPER), Chart.LOWER)
    assert back.coords == pytest.approx(start.coords, rel=1e-12)
    assert back.logxi == pytest.approx(start.logxi, rel=1e-12)


def test_chart_map_boundary():
    P = derive_exponents(3, 2, 1)
    with pytest.raises(SingularMapError):
        chart_map(P, PhaseState(Chart.LOWER, (0.0, 0.1, 1.0), 0.0), Chart.UPPER)


@settings(max_examples=60)
@given(params_in_range, st.floats(0.05, 3.0), st.floats(0.01, 2.0), st.floats(-2.0, 2.0))
def test_fields_match_symbolic_derivation(mps, xi, f, df):
    m, p, s = mps
    P = derive_exponents(m, p, s)
    lo = lower_rhs(P)(np.array([f ** (m - 1), f ** (m - 2) * df, xi]))
    ref = lower_field_from_profile(m, p, s, xi, f, df)
    assert lo == pytest.approx(ref, rel=1e-9, abs=1e-12)
    X, Y, Z = xi**-2 * f ** (m - 1), f ** (m - 2) * df / xi, xi**s * f ** (p - 1)
    up = upper_rhs(P)(np.array([X, Y, Z, math.log(xi)]))
    ref = upper_field_from_profile(m, p, s, xi, f, df)
    assert up[:3] == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert up[3] == pytest.approx(m * X, rel=1e-14)


@settings(max_examples=200)
@given(params_in_range, st.floats(0.05, 3.0), st.floats(0.01, 2.0), st.floats(-2.0, 2.0))
def test_chart_map_conjugates_flows(mps, z, x, y):
    # along a common orbit the UPPER field is the push-forward of the LOWER one, rescaled
    m, p, s = mps
    P = derive_exponents(m, p, s)
    u = np.array([x, y, z])
    up = chart_map(P, PhaseState(Chart.LOWER, tuple(u), math.log(z)), Chart.UPPER)
    J = np.array([
        [1 / z**2, 0.0, -2 * x / z**3],
        [0.0, 1 / z, -y / z**2],
        [(p - 1) / (m - 1) * x ** ((p - 1) / (m - 1) - 1) * z**s, 0.0, s * x ** ((p - 1) / (m - 1)) * z ** (s - 1)],
    ])
    push = J @ lower_rhs(P)(u)
    target = upper_rhs(P)(np.array([*up.coords, up.logxi]))[:3]
    # d eta_upper / d eta_lower = X xi / x = 1 / z
    assert push / z == pytest.approx(target, rel=1e-8, abs=1e-12)
