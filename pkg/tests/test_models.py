import math

import numpy as np
import pytest

from symcoord.core import PhaseState, fd_gradient, make_rng, sample_states, validate_system
from symcoord.errors import ConfigurationError
from symcoord.integrators import reference_solve
from symcoord.models import (
    anisotropic_polar_mass,
    cooling_model,
    elastic_pendulum_cartesian,
    elastic_pendulum_polar,
    free_mass_cartesian,
    free_mass_polar,
    get_model,
    gompertz_model,
    harmonic_oscillator,
    harmonic_oscillator_compensated,
)
from symcoord.transforms import map_state_forward, transform_hamiltonian

ALL_HAMILTONIAN_ENTRIES = [
    elastic_pendulum_cartesian,
    elastic_pendulum_polar,
    free_mass_cartesian,
    free_mass_polar,
    harmonic_oscillator,
    anisotropic_polar_mass,
    lambda: harmonic_oscillator_compensated(0.2),
]


@pytest.mark.parametrize("entry_fn", ALL_HAMILTONIAN_ENTRIES)
def test_analytic_gradients_validate(entry_fn):
    report = validate_system(entry_fn().system, 100, seed=1)
    assert report.passed, report


class TestCooling:
    def test_defaults_match_reference_run(self):
        entry = cooling_model()
        assert entry.parameters == {"alpha": 1.0, "y0": 1.0}

    def test_closed_form(self):
        entry = cooling_model()
        assert entry.system.closed_form(np.array([1.0]), 3.0)[0] == pytest.approx(
            math.exp(-3.0), rel=1e-14)

    def test_parameter_guard(self):
        with pytest.raises(ConfigurationError):
            cooling_model(alpha=-1.0)

    def test_transformed_euler_exact_at_every_step(self):
        # ybar_j = -alpha t_j exactly, exponentiation reproduces the flow
        entry = cooling_model()
        psi = entry.compensating
        ybar = psi.forward(entry.default_ic.y)
        for j in range(1, 11):
            ybar = ybar + 0.3 * np.array([-1.0])
            want = math.exp(-0.3 * j)
            assert psi.inverse(ybar)[0] == pytest.approx(want, rel=1e-12)


class TestGompertz:
    def test_equilibrium_is_fixed_point(self):
        entry = gompertz_model(a=2.0, b=0.5)
        y_star = math.exp(2.0 / 0.5)
        assert entry.system.f(np.array([y_star]))[0] == pytest.approx(0.0, abs=1e-9)

    def test_transformed_field_is_unit(self):
        entry = gompertz_model()
        from symcoord.transforms import transform_ode

        fbar = transform_ode(entry.system.f, entry.compensating)
        for y in np.linspace(1.5, 20.0, 10):
            ybar = entry.compensating.forward(np.array([y]))
            assert fbar(ybar)[0] == pytest.approx(1.0, abs=1e-12)

    def test_closed_form_solves_ode(self):
        entry = gompertz_model()
        y0 = entry.default_ic.y
        for t in (0.5, 2.0, 5.0):
            dt = 1e-6
            rate = (entry.system.closed_form(y0, t + dt)[0]
                    - entry.system.closed_form(y0, t - dt)[0]) / (2 * dt)
            want = entry.system.f(entry.system.closed_form(y0, t))[0]
            assert rate == pytest.approx(want, rel=1e-7)

    def test_parameter_guard(self):
        with pytest.raises(ConfigurationError):
            gompertz_model(b=0.0)


class TestElasticPendulum:
    def test_fig3_defaults(self):
        entry = elastic_pendulum_cartesian()
        assert entry.parameters == {"l": 1.0, "m": 1.0, "k": 1.0, "g": 0.2}

    def test_energy_at_rest_state(self):
        # H(0, -(l + mg/k), 0, 0) = k (mg/k)^2 / 2 + mg (l + mg/k) = 0.26
        entry = elastic_pendulum_cartesian()
        s = entry.default_ic
        assert entry.system.H(s.q, s.p) == pytest.approx(0.26, abs=1e-15)

    def test_gradients_match_fd_at_random_states(self):
        entry = elastic_pendulum_cartesian()
        for s in sample_states(entry.system, 50, seed=33):
            g_fd = fd_gradient(lambda q: entry.system.H(q, s.p), s.q)
            assert entry.system.grad_q(s.q, s.p) == pytest.approx(g_fd, rel=1e-6,
                                                                  abs=1e-6)

    def test_polar_equals_transformed_cartesian(self):
        cart, pol = elastic_pendulum_cartesian(), elastic_pendulum_polar()
        trans = transform_hamiltonian(cart.system, cart.to_counterpart)
        for s in sample_states(pol.system, 20, seed=35):
            assert pol.system.H(s.q, s.p) == pytest.approx(trans.H(s.q, s.p),
                                                           rel=1e-10, abs=1e-10)

    def test_gravity_torque_vanishes_on_axis(self):
        entry = elastic_pendulum_polar()
        g = entry.system.grad_q(np.array([1.3, 0.0]), np.array([0.2, 0.4]))
        assert g[1] == 0.0

    def test_divergence_boundary_predicate(self):
        entry = elastic_pendulum_polar(g=0.02)
        assert entry.divergence_boundary(np.array([2.05, 0.0]))
        assert not entry.divergence_boundary(np.array([1.9, 0.0]))

    def test_energy_constant_along_reference_flow(self):
        entry = elastic_pendulum_cartesian()
        traj = reference_solve(entry.system, entry.default_ic, 4.0)
        energies = traj.energies(entry.system)
        assert np.max(np.abs(energies - energies[0])) <= 1e-9


class TestFreeMass:
    def test_straight_line_flow(self):
        entry = free_mass_cartesian(m=2.0)
        q, p = entry.system.closed_form(np.array([1.0, 0.0]), np.array([2.0, -1.0]), 3.0)
        assert q == pytest.approx([4.0, -1.5])
        assert np.array_equal(p, [2.0, -1.0])

    def test_angular_momentum_equals_polar_momentum(self):
        # L written in polar variables collapses to p_theta identically
        entry = free_mass_polar()
        rng = make_rng(37)
        for _ in range(20):
            r, th = rng.uniform(0.2, 2.0), rng.uniform(-3.0, 3.0)
            pr, pth = rng.normal(size=2)
            x, y = r * math.cos(th), r * math.sin(th)
            px = pr * math.cos(th) - pth / r * math.sin(th)
            py = pr * math.sin(th) + pth / r * math.cos(th)
            assert x * py - y * px == pytest.approx(pth, rel=1e-12, abs=1e-12)

    def test_theta_is_cyclic(self):
        entry = free_mass_polar()
        for s in sample_states(entry.system, 10, seed=39):
            assert entry.system.grad_q(s.q, s.p)[1] == 0.0

    def test_polar_model_equals_transformed_cartesian(self):
        cart, pol = free_mass_cartesian(), free_mass_polar()
        trans = transform_hamiltonian(cart.system, cart.to_counterpart)
        for s in sample_states(pol.system, 20, seed=45):
            assert pol.system.H(s.q, s.p) == pytest.approx(trans.H(s.q, s.p),
                                                           rel=1e-10, abs=1e-10)
            assert pol.system.grad_q(s.q, s.p) == pytest.approx(
                trans.grad_q(s.q, s.p), rel=1e-10, abs=1e-10)

    def test_polar_closed_form_matches_chart_map(self):
        entry = free_mass_polar()
        s0 = entry.default_ic
        q1, p1 = entry.system.closed_form(s0.q, s0.p, 0.7)
        qc, pc = map_state_forward(entry.to_counterpart, s0.q, s0.p)
        qc = qc + 0.7 * pc
        q2, p2 = map_state_forward(free_mass_cartesian().to_counterpart, qc, pc)
        assert q1[0] == pytest.approx(q2[0], rel=1e-12)
        assert p1 == pytest.approx(p2, rel=1e-12)


class TestHarmonicOscillator:
    def test_quarter_period(self):
        entry = harmonic_oscillator()
        q, p = entry.system.closed_form(np.array([1.0]), np.array([0.0]), math.pi / 2)
        assert q[0] == pytest.approx(0.0, abs=1e-15)
        assert p[0] == pytest.approx(-1.0, abs=1e-15)

    def test_default_ic(self):
        entry = harmonic_oscillator()
        assert entry.default_ic.q[0] == 1.0 and entry.default_ic.p[0] == 0.0

    def test_compensated_chart_keeps_hamiltonian_value(self):
        entry = harmonic_oscillator_compensated(0.3, k=2.0)
        base = harmonic_oscillator()
        s = base.default_ic
        qb, pb = map_state_forward(entry.to_counterpart, s.q, s.p)
        assert entry.system.H(qb, pb) == pytest.approx(0.5, rel=1e-12)

    def test_compensated_chart_has_closed_form(self):
        entry = harmonic_oscillator_compensated(0.25)
        traj = reference_solve(entry.system, entry.default_ic, 1.0)
        assert traj.method == "analytic"
        # energy along the transported flow stays exactly at 1/2
        energies = traj.energies(entry.system)
        assert np.max(np.abs(energies - 0.5)) <= 1e-11


def test_catalog_lookup_and_guards():
    assert get_model("free-mass", "polar").chart == "polar"
    assert get_model("harmonic-oscillator", "compensated", h=0.1).chart == "compensated"
    with pytest.raises(ConfigurationError):
        get_model("free-mass", "spherical")
    with pytest.raises(ConfigurationError):
        get_model("harmonic-oscillator", "compensated")  # missing h
    with pytest.raises(ConfigurationError):
        get_model("no-such-model")


def test_closed_forms_satisfy_their_odes():
    for entry_fn in (cooling_model, gompertz_model):
        entry = entry_fn()
        y0 = entry.default_ic.y
        for t in (0.3, 1.1, 2.7):
            dt = 1e-6
            rate = (entry.system.closed_form(y0, t + dt)[0]
                    - entry.system.closed_form(y0, t - dt)[0]) / (2 * dt)
            assert rate == pytest.approx(
                float(entry.system.f(entry.system.closed_form(y0, t))[0]), rel=1e-7)
