"""Core value types, Hamiltonian/ODE system abstractions and finite differences.

Conventions used throughout the package:

* states are pairs of 1-d float arrays ``(q, p)`` of equal length ``d``;
* system evaluators are plain callables of raw arrays, ``H(q, p) -> float``,
  ``grad_q(q, p) -> array``; the frozen dataclasses below are the value types
  exchanged between modules and are never mutated after construction;
* a state counts as diverged when any component is non-finite or its inf-norm
  exceeds :data:`DIVERGENCE_BOUND`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DerivativeEvaluationError, SamplingError

__all__ = [
    "DIVERGENCE_BOUND",
    "FD_STEP_SCALE",
    "FirstIntegral",
    "HamiltonianSystem",
    "OdeState",
    "OdeSystem",
    "PhaseState",
    "SeparableHamiltonian",
    "Trajectory",
    "ValidationReport",
    "fd_gradient",
    "fd_jacobian",
    "make_rng",
    "time_grid",
    "validate_system",
]

#: Inf-norm beyond which a state is flagged as diverged.
DIVERGENCE_BOUND = 1e12

#: Central-difference step scale, cbrt(machine epsilon).
FD_STEP_SCALE = float(np.cbrt(np.finfo(float).eps))

#: Tolerance of :func:`validate_system`.
VALIDATION_TOL = 1e-5


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox generator (counter-based, identical on all platforms)."""
    return np.random.Generator(np.random.Philox(seed))


def _freeze(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _values_diverged(*arrays: np.ndarray) -> bool:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            return True
        if a.size and float(np.max(np.abs(a))) > DIVERGENCE_BOUND:
            return True
    return False


@dataclass(frozen=True)
class PhaseState:
    """Generalised coordinates and momenta of a d degree-of-freedom system."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _freeze(np.atleast_1d(self.q)))
        object.__setattr__(self, "p", _freeze(np.atleast_1d(self.p)))
        if self.q.shape != self.p.shape or self.q.ndim != 1 or self.q.size < 1:
            raise ValueError("q and p must be 1-d arrays of equal length >= 1")

    @property
    def d(self) -> int:
        return self.q.size

    @property
    def z(self) -> np.ndarray:
        """Concatenated phase-space vector (q, p); a fresh writable copy."""
        return np.concatenate([self.q, self.p])

    def diverged(self) -> bool:
        return _values_diverged(self.q, self.p)


@dataclass(frozen=True)
class OdeState:
    """State of a general first-order ODE at one instant."""

    y: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "y", _freeze(np.atleast_1d(self.y)))
        object.__setattr__(self, "t", float(self.t))

    def diverged(self) -> bool:
        return _values_diverged(self.y) or not math.isfinite(self.t)


@dataclass(frozen=True)
class FirstIntegral:
    """A labelled scalar function of phase-space state, constant on exact flows."""

    label: str
    F: Callable[[np.ndarray, np.ndarray], float]
    grad: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __call__(self, q: np.ndarray, p: np.ndarray) -> float:
        return float(self.F(q, p))


@dataclass(frozen=True)
class SeparableHamiltonian:
    """Kinetic-plus-potential Hamiltonian, H = p' M^-1 p / 2 + U(q)."""

    m_inv: np.ndarray
    U: Callable[[np.ndarray], float]
    U_q: Callable[[np.ndarray], np.ndarray]
    U_qq: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "separable"

    def __post_init__(self):
        m_inv = _freeze(np.atleast_2d(self.m_inv))
        if not np.allclose(m_inv, m_inv.T, rtol=1e-12, atol=0.0):
            raise ValueError("inverse mass matrix must be symmetric")
        object.__setattr__(self, "m_inv", m_inv)

    @property
    def d(self) -> int:
        return self.m_inv.shape[0]

    def kinetic(self, p: np.ndarray) -> float:
        return 0.5 * float(p @ self.m_inv @ p)

    def H(self, q: np.ndarray, p: np.ndarray) -> float:
        return self.kinetic(p) + float(self.U(q))

    def as_system(self, **kwargs) -> "HamiltonianSystem":
        """View as a generic :class:`HamiltonianSystem`."""
        m_inv = self.m_inv
        U, U_q = self.U, self.U_q
        kwargs.setdefault("name", self.name)
        return HamiltonianSystem(
            d=self.d,
            H=lambda q, p: 0.5 * float(p @ m_inv @ p) + float(U(q)),
            grad_q=lambda q, p: np.asarray(U_q(q), dtype=float),
            grad_p=lambda q, p: m_inv @ p,
            hq_independent_of_p=True,
            hp_independent_of_q=True,
            separable=self,
            **kwargs,
        )


@dataclass(frozen=True)
class HamiltonianSystem:
    """An evaluatable Hamiltonian with analytic first derivatives.

    ``hess``, when provided, returns the blocks ``(H_qq, H_qp, H_pp)``.
    ``singular`` marks states where evaluation is invalid (used for divergence
    flagging); ``fd_exclusion`` widens that region for finite-difference
    validation sampling, where a safety margin from singular loci is needed for
    central differences to be meaningful.  ``closed_form``, when present, is
    the exact flow ``(q0, p0, t) -> (q, p)``.
    """

    d: int
    H: Callable[[np.ndarray, np.ndarray], float]
    grad_q: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_p: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess: Optional[Callable] = None
    first_integrals: tuple = ()
    name: str = "hamiltonian"
    hq_independent_of_p: bool = False
    hp_independent_of_q: bool = False
    singular: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None
    fd_exclusion: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None
    separable: Optional[SeparableHamiltonian] = None
    closed_form: Optional[Callable] = None

    def energy(self, s: PhaseState) -> float:
        return float(self.H(s.q, s.p))

    def canonical_field(self, z: np.ndarray) -> np.ndarray:
        """Right-hand side of zdot = J grad H at z = (q, p)."""
        q, p = z[: self.d], z[self.d :]
        return np.concatenate([self.grad_p(q, p), -self.grad_q(q, p)])

    def is_singular(self, q: np.ndarray, p: np.ndarray) -> bool:
        return bool(self.singular(q, p)) if self.singular is not None else False

    def integral(self, label: str) -> FirstIntegral:
        for fi in self.first_integrals:
            if fi.label == label:
                return fi
        known = ", ".join(fi.label for fi in self.first_integrals) or "(none)"
        raise KeyError(f"unknown first integral {label!r}; available: {known}")


@dataclass(frozen=True)
class OdeSystem:
    """A general autonomous first-order ODE ydot = f(y)."""

    n: int
    f: Callable[[np.ndarray], np.ndarray]
    name: str = "ode"
    closed_form: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None


def time_grid(t0: float, h: float, n_steps: int) -> np.ndarray:
    """Stamps t0 + j*h, computed multiplicatively so they never drift."""
    return t0 + h * np.arange(n_steps + 1, dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step trajectory; rows of ``qs``/``ps`` are the stored states.

    For ODE trajectories ``ps`` is None and ``qs`` holds the y values.  When a
    run diverges the arrays are truncated at the last valid state and
    ``diverged_at`` records its index.
    """

    times: np.ndarray
    qs: np.ndarray
    ps: Optional[np.ndarray]
    h: float
    method: str
    diverged_at: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "times", _freeze(self.times))
        object.__setattr__(self, "qs", _freeze(np.atleast_2d(self.qs)))
        if self.ps is not None:
            object.__setattr__(self, "ps", _freeze(np.atleast_2d(self.ps)))

    def __len__(self) -> int:
        return self.times.size

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def state(self, j: int):
        if self.ps is None:
            return OdeState(self.qs[j], float(self.times[j]))
        return PhaseState(self.qs[j], self.ps[j])

    @property
    def final(self):
        return self.state(len(self) - 1)

    def energies(self, sys: HamiltonianSystem) -> np.ndarray:
        return np.array([sys.H(self.qs[j], self.ps[j]) for j in range(len(self))])


def _fd_steps(x: np.ndarray) -> np.ndarray:
    return FD_STEP_SCALE * np.maximum(1.0, np.abs(x))


def fd_gradient(f: Callable[[np.ndarray], float], x) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Step per component is cbrt(eps) * max(1, |x_i|), the standard balance of
    truncation against roundoff for second-order differences.
    """
    x = np.asarray(x, dtype=float)
    steps = _fd_steps(x)
    out = np.empty_like(x)
    probe = x.copy()
    for i in range(x.size):
        d = steps[i]
        probe[i] = x[i] + d
        fp = float(f(probe))
        probe[i] = x[i] - d
        fm = float(f(probe))
        probe[i] = x[i]
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise DerivativeEvaluationError(
                f"non-finite function value while differencing component {i}", index=i
            )
        out[i] = (fp - fm) / (2.0 * d)
    return out


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray:
    """Central-difference Jacobian of a vector function, column by column."""
    x = np.asarray(x, dtype=float)
    steps = _fd_steps(x)
    probe = x.copy()
    cols = []
    for i in range(x.size):
        d = steps[i]
        probe[i] = x[i] + d
        fp = np.asarray(f(probe), dtype=float)
        probe[i] = x[i] - d
        fm = np.asarray(f(probe), dtype=float)
        probe[i] = x[i]
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise DerivativeEvaluationError(
                f"non-finite function value while differencing component {i}", index=i
            )
        cols.append((fp - fm) / (2.0 * d))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    max_deviation: float
    tol: float
    n_points: int
    seed: int
    worst_state: Optional[PhaseState] = None


def sample_states(
    sys: HamiltonianSystem, n_points: int, seed: int, halfwidth: float = 0.5
) -> list[PhaseState]:
    """Draw states from the box [-halfwidth, halfwidth]^2d, avoiding loci.

    Points on the model's declared singular locus (widened by its fd-exclusion
    predicate, if any) are redrawn, up to 100 retries each.
    """
    rng = make_rng(seed)
    loci = [f for f in (sys.singular, sys.fd_exclusion) if f is not None]
    states = []
    for _ in range(n_points):
        for _ in range(100):
            z = rng.uniform(-halfwidth, halfwidth, size=2 * sys.d)
            q, p = z[: sys.d], z[sys.d :]
            if not any(f(q, p) for f in loci):
                states.append(PhaseState(q, p))
                break
        else:
            raise SamplingError(
                f"could not sample a non-singular state for {sys.name!r} "
                f"after 100 retries"
            )
    return states


def validate_system(sys: HamiltonianSystem, n_points: int, seed: int) -> ValidationReport:
    """Check analytic gradients against central differences of H.

    Samples seeded states from the unit box centred at the origin and reports
    the worst per-component deviation |analytic - fd| / max(1, |fd|).  Passes
    iff the maximum is at most 1e-5.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    worst = 0.0
    worst_state = None
    for s in sample_states(sys, n_points, seed):
        gq_fd = fd_gradient(lambda q: sys.H(q, s.p), s.q)
        gp_fd = fd_gradient(lambda p: sys.H(s.q, p), s.p)
        ga = np.concatenate([sys.grad_q(s.q, s.p), sys.grad_p(s.q, s.p)])
        gf = np.concatenate([gq_fd, gp_fd])
        dev = float(np.max(np.abs(ga - gf) / np.maximum(1.0, np.abs(gf))))
        if dev > worst:
            worst, worst_state = dev, s
    return ValidationReport(
        passed=worst <= VALIDATION_TOL,
        max_deviation=worst,
        tol=VALIDATION_TOL,
        n_points=n_points,
        seed=seed,
        worst_state=worst_state,
    )
