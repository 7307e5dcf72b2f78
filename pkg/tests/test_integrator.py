from __future__ import annotations

import csv
import math
import random

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowham import xnum
from shadowham.integrator import (SCHEMES, IntegrationFault, OrderIndeterminateError, PhaseState,
                                  augmented_step, blanes_moan4, integrate, jacobian_determinant,
                                  observed_order, stormer_verlet, yoshida4)
from shadowham.problems import (CATALOG, InitialState, energy, free_particle, harmonic_oscillator,
                                kepler, pendulum)
from shadowham.xnum import xreal


def close(x, y, digits=100):
    return abs(x - y) <= gmpy2.mpfr(10) ** -digits * max(abs(y), 1)


def start(ham, p, q):
    return PhaseState(tuple(xreal(v) for v in p), tuple(xreal(v) for v in q), xreal(0))


@pytest.mark.parametrize("factory", [stormer_verlet, yoshida4, blanes_moan4])
def test_coefficient_sums(factory):
    a_sum, b_sum = factory().coefficient_sums()
    assert close(a_sum, 1) and close(b_sum, 1)


def test_stormer_verlet_table():
    sv = stormer_verlet()
    assert sv.stages == 2 and sv.a == (0.5, 0.5) and sv.b == (1, 0) and sv.declared_order == 2
    assert sv.force_evaluations == 1


def test_yoshida_weights():
    c = xnum.nth_root(xreal(2), 3)
    w1, w0 = 1 / (2 - c), -c / (2 - c)
    assert close(2 * w1 + w0, 1)
    y = yoshida4()
    assert close(y.b[0], w1) and close(y.b[1], w0) and close(y.b[2], w1) and y.b[3] == 0
    assert y.force_evaluations == 3
    assert blanes_moan4().force_evaluations == 6


def test_free_particle_step():
    ham = free_particle(1)
    out = augmented_step(ham, stormer_verlet(), start(ham, [1], [0]), xreal("0.1"))
    assert out.p == (1,) and close(out.q[0], xreal("0.1")) and out.beta == 0 and out.n == 1


def test_harmonic_step():
    # corrected beta update: both stages contribute q.U_q - 2U, which cancels for U = q^2/2
    ham = harmonic_oscillator()
    out = augmented_step(ham, stormer_verlet(), start(ham, [1], [0]), xreal("0.1"))
    assert close(out.p[0], xreal("0.995")) and close(out.q[0], xreal("0.1"))
    assert abs(out.beta) < gmpy2.mpfr(10) ** -110


def test_pendulum_step_beta():
    ham = pendulum()
    h = xreal("0.1")
    out = augmented_step(ham, stormer_verlet(), start(ham, [1], [0]), h)
    q1 = h
    expected = h / 2 * (0 - 2 * (-1)) + h / 2 * (q1 * gmpy2.sin(q1) - 2 * (-gmpy2.cos(q1)))
    assert close(out.beta, expected, 115)
    assert close(out.q[0], h)
    assert close(out.p[0], 1 - h / 2 * gmpy2.sin(h), 115)


def test_integrate_free_particle():
    ham = free_particle(1)
    traj = integrate(ham, stormer_verlet(), ham.initial(1, 0), xreal("0.5"), 4)
    assert len(traj) == 5 and traj.steps == 4
    for n, st_ in enumerate(traj.states):
        assert st_.p == (1,) and st_.q == (xreal(n) / 2,) and st_.beta == 0
        assert st_.t == n * xreal("0.5")


def test_pendulum_energy_bounded():
    ham = pendulum()
    with xnum.working_precision(30):
        traj = integrate(ham, stormer_verlet(), ham.initial(1), xreal("0.1"), 1000)
        e0 = energy(ham, traj.p[0], traj.q[0])
        worst = max(abs(energy(ham, p, q) - e0) for p, q in zip(traj.p, traj.q))
    assert worst < xreal("0.01")


@pytest.mark.parametrize("scheme", sorted(SCHEMES))
@pytest.mark.parametrize("problem", sorted(CATALOG))
def test_beta_passivity_and_determinism(problem, scheme):
    ham = CATALOG[problem]()
    sch = SCHEMES[scheme]()
    with xnum.working_precision(40):
        a = integrate(ham, sch, ham.initial(), xreal("0.1"), 50)
        b = integrate(ham, sch, ham.initial(), xreal("0.1"), 50, with_beta=False)
        c = integrate(ham, sch, ham.initial(), xreal("0.1"), 50)
    assert a.p == b.p and a.q == b.q
    assert all(x is None for x in b.beta)
    assert (a.p, a.q, a.beta) == (c.p, c.q, c.beta)
    assert a.beta[0] == 0


def test_restart_reproduces_next_state():
    ham = kepler()
    sch = yoshida4()
    h = xreal("0.05")
    traj = integrate(ham, sch, ham.initial("0.6"), h, 40)
    for n in (0, 7, 39):
        nxt = augmented_step(ham, sch, traj[n], h)
        assert (nxt.p, nxt.q, nxt.beta) == (traj.p[n + 1], traj.q[n + 1], traj.beta[n + 1])
        assert nxt.t == traj[n + 1].t


def _exact_flow(ham, p, q, t):
    """Reference flow by many small Blanes-Moan steps (error far below the test's)."""
    sub = 4000
    h = t / sub
    traj = integrate(ham, blanes_moan4(), InitialState(p, q), h, sub, with_beta=False)
    return traj.p[-1], traj.q[-1]


@pytest.mark.parametrize("scheme", sorted(SCHEMES))
@pytest.mark.parametrize("problem", ["pendulum", "kepler", "henon-heiles", "harmonic"])
def test_local_error_ratio(problem, scheme):
    """One-step error shrinks by 2^(order+1) when h halves."""
    ham = CATALOG[problem]()
    sch = SCHEMES[scheme]()
    init = ham.initial()
    with xnum.working_precision(50):
        errs = []
        for h in (xreal("0.02"), xreal("0.01")):
            st0 = PhaseState(init.p0, init.q0, None)
            one = augmented_step(ham, sch, st0, h)
            p_ex, q_ex = _exact_flow(ham, init.p0, init.q0, h)
            errs.append(max(abs(x - y) for x, y in zip(one.p + one.q, p_ex + q_ex)))
        ratio = errs[0] / errs[1]
    target = 2 ** (sch.declared_order + 1)
    assert abs(ratio / target - 1) < 0.15, (float(ratio), target)


def test_free_particle_local_error_zero():
    ham = free_particle(1)
    for sch in SCHEMES.values():
        out = augmented_step(ham, sch(), start(ham, [1], [0]), xreal("0.25"))
        assert close(out.q[0], xreal("0.25"), 115) and out.p[0] == 1


@pytest.mark.parametrize("name,declared,tol", [("sv", 2, 0.1), ("yoshida4", 4, 0.2), ("bm4", 4, 0.2)])
def test_observed_order_pendulum(name, declared, tol):
    ham = pendulum()
    with xnum.working_precision(30):
        order = observed_order(ham, SCHEMES[name](), ham.initial(1), T=1)
    assert abs(order - declared) < tol


def test_observed_order_free_particle_indeterminate():
    ham = free_particle(1)
    with xnum.working_precision(30):
        with pytest.raises(OrderIndeterminateError):
            observed_order(ham, yoshida4(), ham.initial(), T=1)


def test_blanes_moan_beats_yoshida_on_circular_orbit():
    ham = kepler()
    h, T = xreal("0.1"), 100
    t_end = h * T
    exact = (gmpy2.cos(t_end), gmpy2.sin(t_end))
    errs = {}
    for sch in (yoshida4(), blanes_moan4()):
        traj = integrate(ham, sch, ham.initial(0), h, T, with_beta=False)
        errs[sch.name] = max(abs(a - b) for a, b in zip(traj.q[-1], exact))
    assert errs["bm4"] * 10 <= errs["yoshida4"]


def test_jacobian_examples():
    ham = pendulum()
    det = jacobian_determinant(ham, stormer_verlet(), start(ham, [1], [0]), xreal("0.1"), "1e-30")
    assert abs(det - 1) < gmpy2.mpfr(10) ** -25
    free = free_particle(1)
    det = jacobian_determinant(free, stormer_verlet(), start(free, [1], [0]), xreal("0.1"), "1e-30")
    assert abs(det - 1) < gmpy2.mpfr(10) ** -50
    kep = kepler()
    init = kep.initial("0.6")
    mid = integrate(kep, yoshida4(), init, xreal("0.05"), 30)[30]
    det = jacobian_determinant(kep, yoshida4(), mid, xreal("0.05"), "1e-30")
    assert abs(det - 1) < gmpy2.mpfr(10) ** -20


@pytest.mark.parametrize("scheme", sorted(SCHEMES))
@pytest.mark.parametrize("problem", sorted(CATALOG))
def test_unit_jacobian_random_states(problem, scheme):
    ham = CATALOG[problem]()
    sch = SCHEMES[scheme]()
    rng = random.Random(problem + scheme)
    traj = integrate(ham, sch, ham.initial(), xreal("0.1"), 60, with_beta=False)
    for n in rng.sample(range(61), 5):
        det = jacobian_determinant(ham, sch, traj[n], xreal("0.1"), "1e-30")
        assert abs(det - 1) < gmpy2.mpfr(10) ** -20


def test_fault_carries_partial_trajectory():
    # from rest at q=(2,0) with h=4 the first drift lands exactly on the origin
    ham = kepler()
    init = InitialState((xreal(0), xreal(0)), (xreal(2), xreal(0)))
    with pytest.raises(IntegrationFault) as info:
        integrate(ham, stormer_verlet(), init, xreal(4), 3)
    exc = info.value
    assert exc.step == 0 and exc.stage == 2
    assert exc.trajectory.steps == 0 and exc.trajectory.q[0] == init.q0
    assert "step 0" in str(exc)


def test_trajectory_csv(tmp_path):
    ham = kepler()
    traj = integrate(ham, stormer_verlet(), ham.initial(), xreal("0.1"), 5)
    assert traj.csv_header() == ["n", "t", "p_1", "p_2", "q_1", "q_2", "beta"]
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == traj.csv_header() and len(rows) == 7
    assert xnum.parse_decimal(rows[3][6]) == traj.beta[2]
    assert xnum.parse_decimal(rows[3][2]) == traj.p[2][0]
    traj.write_csv(tmp_path / "again.csv")
    assert open(path).read() == open(tmp_path / "again.csv").read()


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=-150, max_value=150), st.integers(min_value=-150, max_value=150),
       st.sampled_from(sorted(SCHEMES)))
def test_pendulum_passivity_property(p_num, q_num, scheme):
    ham = pendulum()
    with xnum.working_precision(30):
        init = InitialState((xreal(p_num) / 100,), (xreal(q_num) / 100,))
        a = integrate(ham, SCHEMES[scheme](), init, xreal("0.2"), 10)
        b = integrate(ham, SCHEMES[scheme](), init, xreal("0.2"), 10, with_beta=False)
    assert a.p == b.p and a.q == b.q
