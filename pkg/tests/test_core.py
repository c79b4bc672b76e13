import math

import numpy as np
import pytest

from symcoord.core import (
    PhaseState,
    SeparableHamiltonian,
    Trajectory,
    fd_gradient,
    fd_jacobian,
    make_rng,
    sample_states,
    time_grid,
    validate_system,
)
from symcoord.errors import DerivativeEvaluationError, SamplingError
from symcoord.models import (
    elastic_pendulum_cartesian,
    free_mass_cartesian,
    harmonic_oscillator,
)


class TestFdGradient:
    def test_square(self):
        assert fd_gradient(lambda x: x[0] ** 2, [3.0]) == pytest.approx([6.0], abs=1e-8)

    def test_bilinear(self):
        g = fd_gradient(lambda x: x[0] * x[1], [2.0, 5.0])
        assert g == pytest.approx([5.0, 2.0], abs=1e-8)

    def test_pendulum_hamiltonian(self):
        # oracle for the model's hand-derived gradient
        entry = elastic_pendulum_cartesian()
        q, p = np.array([0.5, -0.5]), np.array([0.1, 0.2])
        g_fd = fd_gradient(lambda z: entry.system.H(z[:2], z[2:]),
                           np.concatenate([q, p]))
        g_an = np.concatenate([entry.system.grad_q(q, p), entry.system.grad_p(q, p)])
        assert g_fd == pytest.approx(g_an, rel=1e-6)

    def test_quadratic_forms_near_exact(self):
        rng = make_rng(123)
        for _ in range(20):
            a = rng.normal(size=(3, 3))
            a = a + a.T
            x = rng.normal(size=3)
            g = fd_gradient(lambda v: 0.5 * v @ a @ v, x)
            assert g == pytest.approx(a @ x, rel=1e-9, abs=1e-11)

    def test_nonfinite_reports_index(self):
        def f(x):
            return math.sqrt(x[1])  # negative probe goes invalid

        with pytest.raises((DerivativeEvaluationError, ValueError)):
            fd_gradient(lambda x: float("nan") if x[0] > 1 else 1.0, [1.0])
        with pytest.raises(DerivativeEvaluationError) as err:
            fd_gradient(lambda x: float("nan") if x[1] != 2.0 else 0.0, [1.0, 2.0])
        assert err.value.index == 1

    def test_jacobian_of_linear_map(self):
        a = np.array([[1.0, 2.0], [3.0, -1.0]])
        jac = fd_jacobian(lambda x: a @ x, [0.3, -0.7])
        assert jac == pytest.approx(a, abs=1e-9)


class TestValidateSystem:
    def test_harmonic_oscillator(self):
        rep = validate_system(harmonic_oscillator().system, 50, seed=1)
        assert rep.passed and rep.max_deviation < 1e-8

    def test_free_mass(self):
        assert validate_system(free_mass_cartesian().system, 50, seed=1).passed

    def test_corrupted_gradient_fails(self):
        sys_ok = elastic_pendulum_cartesian().system
        import dataclasses

        bad = dataclasses.replace(
            sys_ok, grad_q=lambda q, p: -sys_ok.grad_q(q, p), separable=None
        )
        rep = validate_system(bad, 50, seed=1)
        assert not rep.passed
        assert 1.0 < rep.max_deviation <= 2.0 + 1e-9

    def test_sampling_error_when_everything_singular(self):
        sys_ok = harmonic_oscillator().system
        import dataclasses

        blocked = dataclasses.replace(sys_ok, singular=lambda q, p: True)
        with pytest.raises(SamplingError):
            validate_system(blocked, 3, seed=1)

    def test_sampling_is_seeded_and_avoids_loci(self):
        entry = elastic_pendulum_cartesian()
        a = sample_states(entry.system, 10, seed=42)
        b = sample_states(entry.system, 10, seed=42)
        for s, t in zip(a, b):
            assert np.array_equal(s.q, t.q) and np.array_equal(s.p, t.p)
            assert math.hypot(*s.q) > 0.05


class TestStatesAndTrajectories:
    def test_phase_state_shape_mismatch(self):
        with pytest.raises(ValueError):
            PhaseState([1.0, 2.0], [1.0])

    def test_phase_state_divergence_flag(self):
        assert PhaseState([np.nan], [0.0]).diverged()
        assert PhaseState([1e13], [0.0]).diverged()
        assert not PhaseState([1.0], [0.0]).diverged()

    def test_immutability(self):
        s = PhaseState([1.0], [2.0])
        with pytest.raises(ValueError):
            s.q[0] = 5.0

    def test_time_grid_is_multiplicative(self):
        t = time_grid(0.0, 0.1, 10**5)
        assert t[-1] == 0.1 * 10**5  # no accumulated addition drift
        assert np.array_equal(t, time_grid(0.0, 0.1, 10**5))

    def test_trajectory_state_accessors(self):
        traj = Trajectory(times=time_grid(0.0, 0.5, 2),
                          qs=np.array([[0.0], [1.0], [2.0]]),
                          ps=np.array([[1.0], [1.0], [1.0]]),
                          h=0.5, method="test")
        assert len(traj) == 3
        assert traj.final.q[0] == 2.0
        assert traj.state(1).p[0] == 1.0


def test_separable_requires_symmetric_mass():
    with pytest.raises(ValueError):
        SeparableHamiltonian(np.array([[1.0, 0.5], [0.0, 1.0]]),
                             U=lambda q: 0.0, U_q=lambda q: np.zeros(2))


def test_separable_system_view_matches():
    sep = harmonic_oscillator().system.separable
    sys = sep.as_system()
    q, p = np.array([0.7]), np.array([-0.3])
    assert sys.H(q, p) == sep.H(q, p)
    assert sys.hq_independent_of_p and sys.hp_independent_of_q
