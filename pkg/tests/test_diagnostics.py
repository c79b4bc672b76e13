import math

import numpy as np
import pytest

from conftest import random_affine
from symcoord.core import PhaseState, make_rng, sample_states
from symcoord.diagnostics import (
    delta_hpq,
    drift_order,
    dvf1_explicit_euler,
    elementary_hpq,
    first_integral_condition,
    invariant_drift,
)
from symcoord.core import FirstIntegral
from symcoord.errors import DomainError, PreconditionError
from symcoord.integrators import solve
from symcoord.models import (
    anisotropic_polar_mass,
    cooling_model,
    elastic_pendulum_cartesian,
    elastic_pendulum_polar,
    free_mass_cartesian,
    free_mass_polar,
    gompertz_model,
    harmonic_oscillator,
    harmonic_oscillator_compensated,
)
from symcoord.transforms import (
    affine_point_transform,
    map_state_forward,
    oscillator_transform_regularized,
    transform_hamiltonian,
)


def paper_ddx(x, y, px, py):
    L = py * x - px * y
    return (L * px**2 * (y**3 - 3 * x**2 * y)
            + L * (px * py * x * (x**2 - 7 * y**2)
                   + 2 * py**2 * y * (x - y) * (x + y))) / (x**2 + y**2) ** 3


def paper_ddy(x, y, px, py):
    L = py * x - px * y
    return (-(L * (2 * px**2 * x * (y**2 - x**2)))
            - L * (px * py * y * (y**2 - 7 * x**2)
                   + py**2 * x * (x**2 - 3 * y**2))) / (x**2 + y**2) ** 3


class TestDvf1:
    def test_cooling(self):
        entry = cooling_model(alpha=1.0)
        val = dvf1_explicit_euler(entry.system.f, [1.0], jac=entry.system.jac)
        assert val[0] == pytest.approx(-0.5, abs=1e-12)

    def test_constant_field(self):
        val = dvf1_explicit_euler(lambda y: np.array([3.0, -1.0]), [0.2, 0.4])
        assert val == pytest.approx([0.0, 0.0], abs=1e-9)

    def test_gompertz_hand_derivative(self):
        a, b, y = 2.0, 0.5, 3.0
        entry = gompertz_model(a, b)
        f3 = y * (a - b * math.log(y))
        fp3 = a - b * math.log(y) - b
        val = dvf1_explicit_euler(entry.system.f, [y])
        assert val[0] == pytest.approx(-0.5 * fp3 * f3, rel=1e-7)

    def test_fd_matches_analytic_jacobian(self):
        entry = gompertz_model()
        with_jac = dvf1_explicit_euler(entry.system.f, [2.5], jac=entry.system.jac)
        without = dvf1_explicit_euler(entry.system.f, [2.5])
        assert without == pytest.approx(with_jac, rel=1e-7)


class TestElementaryHpq:
    def test_harmonic_oscillator(self):
        assert elementary_hpq(harmonic_oscillator().system,
                              PhaseState([1.0], [1.0])) == pytest.approx(1.0)

    def test_free_mass_vanishes(self):
        sys = free_mass_cartesian().system
        for s in sample_states(sys, 10, seed=2):
            assert elementary_hpq(sys, s) == 0.0

    def test_anisotropic_polar_hand_value(self):
        # H_q = (-2 p_th^2 / r^3, 0), H_p = (p_r, 2 p_th / r^2) at r=p_r=p_th=1
        sys = anisotropic_polar_mass().system
        assert elementary_hpq(sys, PhaseState([1.0, 0.3], [1.0, 1.0])) == pytest.approx(-2.0)


class TestDeltaHpq:
    def test_affine_is_exactly_zero(self):
        sys = elastic_pendulum_cartesian().system
        a, b = random_affine(2, seed=4)
        pt = affine_point_transform(a, b)
        for s in sample_states(sys, 10, seed=5):
            assert delta_hpq(sys, pt, s) == 0.0

    def test_free_mass_hand_value(self):
        # delta = -(x px + y py) (x py - y px)^2 / r^4; at (1,1,1,0) it is -1/4
        entry = free_mass_cartesian()
        val = delta_hpq(entry.system, entry.to_counterpart,
                        PhaseState([1.0, 1.0], [1.0, 0.0]))
        assert val == pytest.approx(-0.25, rel=1e-12)

    @pytest.mark.parametrize("entry_fn,n_states", [
        (free_mass_cartesian, 20),
        (free_mass_polar, 20),
        (elastic_pendulum_cartesian, 20),
        (elastic_pendulum_polar, 20),
        (anisotropic_polar_mass, 20),
    ])
    def test_two_sided_identity(self, entry_fn, n_states):
        # transformed-chart elementary product minus original equals the defect
        entry = entry_fn()
        trans = transform_hamiltonian(entry.system, entry.to_counterpart)
        for s in sample_states(entry.system, n_states, seed=21):
            d = delta_hpq(entry.system, entry.to_counterpart, s)
            qb, pb = map_state_forward(entry.to_counterpart, s.q, s.p)
            lhs = elementary_hpq(trans, PhaseState(qb, pb)) - elementary_hpq(entry.system, s)
            assert lhs == pytest.approx(d, abs=1e-8)

    def test_identity_on_compensated_oscillator_chart(self):
        entry = harmonic_oscillator()
        pt = oscillator_transform_regularized(0.2, k=2.0)
        trans = transform_hamiltonian(entry.system, pt)
        rng = make_rng(6)
        for _ in range(10):
            s = PhaseState(rng.uniform(-0.9, 0.9, size=1), rng.normal(size=1))
            d = delta_hpq(entry.system, pt, s)
            qb, pb = map_state_forward(pt, s.q, s.p)
            lhs = elementary_hpq(trans, PhaseState(qb, pb)) - elementary_hpq(entry.system, s)
            assert lhs == pytest.approx(d, abs=1e-8)

    def test_pendulum_defect_generically_nonzero(self):
        entry = elastic_pendulum_cartesian()
        hits = sum(
            abs(delta_hpq(entry.system, entry.to_counterpart, s)) > 1e-6
            for s in sample_states(entry.system, 20, seed=7)
        )
        assert hits >= 19

    def test_anisotropic_invariance_witness(self):
        entry = anisotropic_polar_mass()
        for s in sample_states(entry.system, 20, seed=9):
            assert abs(delta_hpq(entry.system, entry.to_counterpart, s)) <= 1e-9

    def test_singular_state_raises(self):
        entry = free_mass_polar()
        with pytest.raises(DomainError):
            delta_hpq(entry.system, entry.to_counterpart,
                      PhaseState([0.0, 0.1], [0.1, 0.1]))


class TestFirstIntegralCondition:
    def test_theta_direction_is_trivially_satisfied(self):
        entry = free_mass_polar()
        for s in sample_states(entry.system, 20, seed=11):
            c = first_integral_condition(entry.system, entry.to_counterpart, s, 1)
            d = delta_hpq(entry.system, entry.to_counterpart, s)
            assert abs(c) / max(1.0, abs(d)) <= 1e-9

    def test_x_direction_hand_value(self):
        entry = free_mass_cartesian()
        c = first_integral_condition(entry.system, entry.to_counterpart,
                                     PhaseState([1.0, 1.0], [1.0, 0.0]), 0)
        assert c == pytest.approx(0.25, rel=1e-8)

    def test_closed_forms_both_directions(self):
        entry = free_mass_cartesian()
        for s in sample_states(entry.system, 20, seed=11):
            x, y = s.q
            px, py = s.p
            for idx, want in ((0, paper_ddx(x, y, px, py)),
                              (1, paper_ddy(x, y, px, py))):
                got = first_integral_condition(entry.system, entry.to_counterpart, s, idx)
                if abs(want) > 1e-8:
                    assert got == pytest.approx(want, rel=1e-6)
                    assert math.copysign(1.0, got) == math.copysign(1.0, want)

    def test_non_cyclic_coordinate_rejected(self):
        entry = elastic_pendulum_cartesian()
        s = PhaseState([0.3, -1.0], [0.0, 0.0])
        with pytest.raises(PreconditionError) as err:
            first_integral_condition(entry.system, entry.to_counterpart, s, 0)
        assert "not cyclic" in str(err.value)


class TestInvariantDrift:
    def test_angular_momentum_exact_in_cartesian(self):
        entry = free_mass_cartesian()
        traj = solve("symplectic-euler", entry.system, entry.default_ic, 0.001, 10**4)
        rep = invariant_drift(traj, entry.system.integral("L"))
        assert rep.max_abs <= 1e-12

    def test_px_second_order_in_polar(self):
        entry = free_mass_polar()
        order = drift_order("symplectic-euler", entry.system, entry.default_ic,
                            entry.system.integral("p_x"), 0.02)
        assert order == pytest.approx(2.0, abs=0.1)

    def test_constant_integral_has_zero_drift(self):
        entry = free_mass_cartesian()
        traj = solve("symplectic-euler", entry.system, entry.default_ic, 0.01, 100)
        rep = invariant_drift(traj, FirstIntegral("one", lambda q, p: 1.0))
        assert np.all(rep.drift == 0.0)

    def test_exactly_preserved_integral_has_no_order(self):
        entry = free_mass_polar()
        order = drift_order("symplectic-euler", entry.system, entry.default_ic,
                            entry.system.integral("p_theta"), 0.02)
        assert math.isnan(order)


def test_bea_report_container():
    from symcoord.diagnostics import BeaReport

    entry = free_mass_cartesian()
    s = PhaseState([1.0, 1.0], [1.0, 0.0])
    rep = BeaReport(point=s, value=delta_hpq(entry.system, entry.to_counterpart, s),
                    quantity="delta_hpq")
    assert rep.value == pytest.approx(-0.25) and rep.h is None
