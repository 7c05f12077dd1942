import json
import math

import numpy as np
import pytest

from blowup_profiles.errors import BadFamilyParam, TrapViolation
from blowup_profiles.integrator import EventKind, IntegrationConfig
from blowup_profiles.model import derive_exponents, upper_rhs
from blowup_profiles.monitors import p2_orbit_report
from blowup_profiles.orbits import (
    FamilyScan,
    OrbitOptions,
    TerminalTag,
    barrier_constants,
    barrier_flow_signs,
    check_Z0_connection,
    classify_from_P0,
    classify_from_P2,
    default_k_grid,
    p2_departure_normal_product,
    scan_family,
    scan_to_csv,
    z0_region_sides,
)

from oracles import barrier_F, barrier_H

A, C = TerminalTag.ENTERS_PGAMMA0, TerminalTag.ENTERS_Q3


@pytest.fixture(scope="module")
def small_sigma():
    return classify_from_P2(derive_exponents(3, 1.5, 1.5))


@pytest.fixture(scope="module")
def large_sigma():
    return classify_from_P2(derive_exponents(3, 1.5, 3.0))


def test_p2_orbit_small_sigma_enters_pgamma0(small_sigma):
    cls, tr = small_sigma
    assert cls.tag is A
    X, Y, Z = tr.final.coords
    P = tr.params
    assert max(abs(X), abs(Y), abs(Z - P.gamma0)) <= 1e-4


def test_p2_orbit_large_sigma_enters_q3(large_sigma):
    cls, tr = large_sigma
    assert cls.tag is C and cls.detail > 0.0
    # the orbit crosses {Y = -Y0} before diverging
    assert tr.events_of(EventKind.PLANE_CROSS, "Y=-Y0")


def test_q3_profile_has_zero_with_negative_slope(large_sigma):
    cls, tr = large_sigma
    xi, f, df, _ = tr.profile_arrays()
    assert np.all(df[-10:] < 0.0)
    assert f[-1] < 1e-6 * f.max()
    assert xi[-1] == pytest.approx(cls.detail, rel=1e-6)


def test_tail_certification(small_sigma):
    _, tr = small_sigma
    P = tr.params
    xi, f, _, _ = tr.profile_arrays()
    target = (1.0 / (P.p - 1.0)) ** (1.0 / (P.p - 1.0))
    err = np.abs(xi ** (P.sigma / (P.p - 1.0)) * f - target)
    last = xi >= xi[-1] / 10.0
    e = err[last]
    # the distance to the tail constant shrinks across the last decade
    assert e[-1] < e[0]
    assert e[-1] <= 1e-3 * target


@pytest.mark.parametrize("key", ["small", "large"])
def test_p2_orbit_monitors(key, small_sigma, large_sigma):
    _, tr = small_sigma if key == "small" else large_sigma
    for r in p2_orbit_report(tr.params, tr):
        assert r.ok, r


def test_p0_family_small_k_enters_pgamma0():
    for mps in [(3, 2, 1), (3, 1.5, 2), (2, 1.5, 0.5)]:
        cls, _ = classify_from_P0(derive_exponents(*mps), 1e-3)
        assert cls.tag is A


@pytest.mark.parametrize("k", [0.0, -1.0])
def test_p0_bad_k(k):
    with pytest.raises(BadFamilyParam):
        classify_from_P0(derive_exponents(3, 2, 1), k)


def test_empty_family_scan():
    scan = scan_family(derive_exponents(3, 2, 1), [])
    assert isinstance(scan, FamilyScan)
    assert scan.ks == [] and scan.classes == [] and scan.b0_brackets == []
    assert scan_to_csv(scan) == "param,class,detail\n"


def test_bad_k_grid():
    with pytest.raises(BadFamilyParam):
        scan_family(derive_exponents(3, 2, 1), [1.0, -2.0])


def test_default_k_grid():
    g = default_k_grid()
    assert len(g) == 64 and g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(1e4)


def test_b0_brackets_are_adjacent_a_c_pairs():
    P = derive_exponents(3, 2, 5)
    scan = scan_family(P, default_k_grid(16))
    assert scan.b0_brackets
    for lo, hi in scan.b0_brackets:
        i = scan.ks.index(lo)
        assert scan.ks[i + 1] == hi
        assert {scan.classes[i].tag, scan.classes[i + 1].tag} == {A, C}
    rec = json.loads(scan.to_json())
    assert rec["b0_brackets"] == [list(b) for b in scan.b0_brackets]


def test_z0_connection_reaches_p2():
    P = derive_exponents(3, 2, 1)
    tr = check_Z0_connection(P)
    assert tr.terminal.kind is EventKind.ENTER_BALL
    X, Y, Z = tr.final.coords
    assert math.hypot(X - P.X_P2, Y - P.Y_P2) <= 1e-4 * (1 + 1e-9) and Z == 0.0
    side = z0_region_sides(P, tr.y[:, 0], tr.y[:, 1])
    first = int(np.argmax(side))
    assert side[first:].all()


def test_z0_connection_start_at_p2():
    P = derive_exponents(3, 2, 1)
    tr = check_Z0_connection(P, start=(P.X_P2, P.Y_P2))
    assert tr.terminal.kind is EventKind.ENTER_BALL and tr.terminal.time == 0.0


def test_z0_region_invariant_from_interior_starts():
    P = derive_exponents(3, 2, 1)
    rng = np.random.default_rng(5)
    n = 0
    while n < 10:
        X = rng.uniform(1e-3, P.X_P2)
        Y = rng.uniform(2.0 * X / (P.m - 1.0), 0.3)
        if not z0_region_sides(P, X, Y):
            continue
        n += 1
        tr = check_Z0_connection(P, start=(X, Y))
        assert tr.terminal.kind is EventKind.ENTER_BALL


def test_z0_trap_violation_flags_loose_integration():
    P = derive_exponents(3, 2, 1)
    with pytest.raises(TrapViolation):
        check_Z0_connection(P, IntegrationConfig(rel_tol=0.1, abs_tol=0.1, max_arc=1e6))


@pytest.mark.parametrize("mps", [(3, 2, 5), (2, 1.5, 40), (4, 2.5, 7)])
def test_barrier_flow_matches_closed_forms(mps):
    m, p, s = mps
    P = derive_exponents(*mps)
    c = barrier_constants(P)
    rhs = upper_rhs(P)
    rng = np.random.default_rng(3)
    for _ in range(20):
        Y = rng.uniform(-c["Y0"], P.Y_P2)
        X = rng.uniform(c["B"] * Y + c["C"], P.X_P2)
        Z = c["E"] - c["D"] * Y
        n1 = np.dot([0.0, c["D"], 1.0], rhs(np.array([X, Y, Z, 0.0]))[:3])
        assert n1 == pytest.approx(2 * m * (m + 1) ** 2 / (m - 1) * barrier_F(X, Y, m, p, s), rel=1e-9, abs=1e-12)
        X2, Z2 = c["B"] * Y + c["C"], Z + rng.uniform(0.0, 5.0)
        n2 = np.dot([1.0, -c["B"], 0.0], rhs(np.array([X2, Y, Z2, 0.0]))[:3])
        assert n2 == pytest.approx(barrier_H(Y, Z2, m, p, s), rel=1e-9, abs=1e-12)


def test_barrier_planes_contain_p2():
    P = derive_exponents(3, 2, 1)
    c = barrier_constants(P)
    assert c["E"] - c["D"] * P.Y_P2 == pytest.approx(0.0, abs=1e-14)
    assert c["B"] * P.Y_P2 + c["C"] == pytest.approx(P.X_P2, rel=1e-14)


@pytest.mark.parametrize("s", [30.0, 50.0, 100.0])
def test_barrier_flow_signs_large_sigma(s):
    P = derive_exponents(3, 2, s)
    out = barrier_flow_signs(P, n=1000)
    assert out["plane1"]["positive_fraction"] == 1.0 and out["plane1"]["min"] > 0.0
    assert out["plane2"]["positive_fraction"] == 1.0 and out["plane2"]["min"] > 0.0
    assert p2_departure_normal_product(P) > 0.0


def test_barrier_trapped_orbit_large_sigma():
    P = derive_exponents(3, 2, 40.0)
    cls, tr = classify_from_P2(P)
    assert cls.tag is C
    ycross = tr.events_of(EventKind.PLANE_CROSS, "Y=-Y0")
    assert ycross
    t_y = ycross[0].time
    early = [e for e in tr.events if e.label in ("plane1", "plane2") and e.time < t_y]
    assert early == []


def test_p1_detection_can_be_disabled():
    P = derive_exponents(3, 1.5, 1.5)
    cls, _ = classify_from_P2(P, opts=OrbitOptions(detect_p1=False))
    assert cls.tag is A
