"""Backward-error-analysis diagnostics.

These quantify how a symplectic method's distorted system changes under a
point transformation: the leading distorted-field term of explicit Euler, the
first-order elementary Hamiltonian (the product of the two gradient blocks),
the chart-change defect of that product, and the preservation condition for
the momentum conjugate to a cyclic coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .core import (
    FD_STEP_SCALE,
    FirstIntegral,
    HamiltonianSystem,
    OdeState,
    PhaseState,
    Trajectory,
    fd_jacobian,
)
from .errors import DomainError, PreconditionError
from .integrators import one_step_map
from .transforms import PointTransform, induced_momentum_forward

__all__ = [
    "BeaReport",
    "DriftReport",
    "delta_hpq",
    "drift_order",
    "dvf1_explicit_euler",
    "elementary_hpq",
    "first_integral_condition",
    "invariant_drift",
]


@dataclass(frozen=True)
class BeaReport:
    """One diagnostic value evaluated at one state."""

    point: Union[PhaseState, OdeState]
    value: Union[float, np.ndarray]
    quantity: str  # dvf1 | elementary_hpq | delta_hpq | first_integral_condition
    h: Optional[float] = None


def dvf1_explicit_euler(f: Callable, y, jac: Optional[Callable] = None) -> np.ndarray:
    """First-order distorted-field coefficient of explicit Euler at y.

    Returns -(1/2) Df(y) f(y); the caller multiplies by the step size.  The
    field Jacobian is taken by central differences unless supplied.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    fy = np.atleast_1d(np.asarray(f(y), dtype=float))
    df = np.atleast_2d(jac(y) if jac is not None else fd_jacobian(f, y))
    return -0.5 * (df @ fy)


def elementary_hpq(sys: HamiltonianSystem, s: PhaseState) -> float:
    """The first-order elementary Hamiltonian: grad_p H dot grad_q H."""
    return float(sys.grad_p(s.q, s.p) @ sys.grad_q(s.q, s.p))


def delta_hpq(sys: HamiltonianSystem, pt: PointTransform, s: PhaseState) -> float:
    """Chart-change defect of the elementary Hamiltonian, in original coordinates.

    Contracts H_p twice with the transform Hessian and the pushed-forward
    momenta.  The transformed-chart elementary Hamiltonian equals this value
    plus the original-chart one; the defect vanishes identically for affine
    transforms.
    """
    if sys.is_singular(s.q, s.p) or not pt.in_domain(s.q):
        raise DomainError(
            f"state {s.q} is singular for {sys.name!r} under {pt.name!r}"
        )
    if pt.affine:
        return 0.0
    hp = sys.grad_p(s.q, s.p)
    pbar = induced_momentum_forward(pt, s.q, s.p)
    hqq = pt.hessian(s.q)
    return float(np.einsum("i,k,b,bki->", hp, hp, pbar, hqq))


def first_integral_condition(
    sys: HamiltonianSystem,
    pt: PointTransform,
    s: PhaseState,
    cyclic_index: int,
    cyclic_tol: float = 1e-10,
) -> float:
    """Derivative of the chart-change defect along a cyclic coordinate.

    Zero (to tolerance) means the momentum conjugate to that coordinate stays
    preserved at least to second order by the momentum-first symplectic Euler
    method in the transformed chart; a nonzero value is sufficient for
    non-preservation.  The coordinate must actually be cyclic.
    """
    gq = abs(float(sys.grad_q(s.q, s.p)[cyclic_index]))
    if gq > cyclic_tol:
        raise PreconditionError(
            f"coordinate {cyclic_index} of {sys.name!r} is not cyclic: "
            f"|dH/dq| = {gq:.3e}"
        )
    step = FD_STEP_SCALE * max(1.0, abs(float(s.q[cyclic_index])))
    q_plus = s.q.copy()
    q_plus[cyclic_index] += step
    q_minus = s.q.copy()
    q_minus[cyclic_index] -= step
    d_plus = delta_hpq(sys, pt, PhaseState(q_plus, s.p))
    d_minus = delta_hpq(sys, pt, PhaseState(q_minus, s.p))
    return (d_plus - d_minus) / (2.0 * step)


@dataclass(frozen=True)
class DriftReport:
    """Deviation series of a first integral along a stored trajectory."""

    label: str
    drift: np.ndarray  # F(z_j) - F(z_0) for every stored state
    max_abs: float


def invariant_drift(traj: Trajectory, F: FirstIntegral) -> DriftReport:
    """Evaluate F along a trajectory relative to its start value."""
    if len(traj) < 1 or traj.ps is None:
        raise ValueError("need a non-empty phase-space trajectory")
    values = np.array([F(traj.qs[j], traj.ps[j]) for j in range(len(traj))])
    drift = values - values[0]
    return DriftReport(label=F.label, drift=drift, max_abs=float(np.max(np.abs(drift))))


def drift_order(method: str, sys, s0: PhaseState, F: FirstIntegral,
                h: float) -> float:
    """Richardson estimate of the single-step drift order of F.

    Re-runs one step at h, h/2 and h/4 and fits the slope of log |drift|
    against log h.  Returns nan when the drift is at roundoff (the integral is
    preserved exactly and no order is defined).
    """
    f0 = F(s0.q, s0.p)
    drifts = []
    for hh in (h, h / 2.0, h / 4.0):
        s1 = one_step_map(method, sys, hh)(s0)
        drifts.append(abs(F(s1.q, s1.p) - f0))
    floor = 1e-14 * max(1.0, abs(f0))
    if any(d <= floor for d in drifts):
        return math.nan
    slope, _ = np.polyfit(np.log([h, h / 2.0, h / 4.0]), np.log(drifts), 1)
    return float(slope)
