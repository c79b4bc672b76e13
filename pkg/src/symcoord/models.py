"""Concrete model systems with analytic derivatives and chart companions.

Every entry carries the exact parameter defaults used in the reference runs,
its own chart label, and whatever companion data the experiments need: a
compensating variable transform for the scalar ODEs, the point transform to
the companion chart for the mechanical systems, and the stability-boundary
predicate of the polar pendulum chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .core import (
    FirstIntegral,
    HamiltonianSystem,
    OdeState,
    OdeSystem,
    PhaseState,
    SeparableHamiltonian,
)
from .errors import ConfigurationError
from .transforms import (
    PointTransform,
    VariableTransform,
    cartesian_to_polar,
    map_state_forward,
    oscillator_transform_exact,
    oscillator_transform_regularized,
    polar_to_cartesian,
    transform_hamiltonian,
)

__all__ = [
    "MODEL_NAMES",
    "ModelCatalogEntry",
    "anisotropic_polar_mass",
    "cooling_model",
    "elastic_pendulum_cartesian",
    "elastic_pendulum_polar",
    "free_mass_cartesian",
    "free_mass_polar",
    "get_model",
    "gompertz_model",
    "harmonic_oscillator",
    "harmonic_oscillator_compensated",
]

FD_SAFE_RADIUS = 0.05  # standoff from coordinate singularities for fd checks


@dataclass(frozen=True)
class ModelCatalogEntry:
    name: str
    system: Union[HamiltonianSystem, OdeSystem]
    parameters: dict
    default_ic: Union[PhaseState, OdeState]
    chart: str
    compensating: Optional[VariableTransform] = None
    compensating_alt: Optional[VariableTransform] = None
    to_counterpart: Optional[PointTransform] = None
    counterpart_chart: Optional[str] = None
    divergence_boundary: Optional[Callable[[np.ndarray], bool]] = None

    def counterpart_ic(self, s: PhaseState) -> PhaseState:
        if self.to_counterpart is None:
            raise ConfigurationError(f"{self.name!r} has no companion chart")
        q, p = map_state_forward(self.to_counterpart, s.q, s.p)
        return PhaseState(q, p)


def _require_positive(**params):
    for key, value in params.items():
        if not value > 0.0:
            raise ConfigurationError(f"parameter {key} must be positive, got {value}")


def cooling_model(alpha: float = 1.0, y0: float = 1.0) -> ModelCatalogEntry:
    """Linear decay ydot = -alpha y, with its log-chart compensating transform.

    The transform shipped is ln(y), whose transformed field is the constant
    -alpha; the scaled variant ln(y)/alpha (transformed field -1) is attached
    as the alternative reading and both are reported by the demo experiment.
    """
    _require_positive(alpha=alpha, y0=y0)
    system = OdeSystem(
        n=1,
        f=lambda y: -alpha * y,
        name="cooling",
        closed_form=lambda y_init, t: y_init * math.exp(-alpha * t),
        jac=lambda y: np.array([[-alpha]]),
    )

    def _log_transform(scale: float, name: str) -> VariableTransform:
        return VariableTransform(
            forward=lambda y: np.array([math.log(y[0]) * scale]),
            inverse=lambda yb: np.array([math.exp(yb[0] / scale)]),
            d_forward=lambda y: np.array([[scale / y[0]]]),
            domain=lambda y: y[0] > 0.0,
            name=name,
        )

    return ModelCatalogEntry(
        name="cooling",
        system=system,
        parameters={"alpha": alpha, "y0": y0},
        default_ic=OdeState([y0], 0.0),
        chart="scalar",
        compensating=_log_transform(1.0, "log"),
        compensating_alt=_log_transform(1.0 / alpha, "log/alpha"),
    )


def gompertz_model(a: float = 2.0, b: float = 0.5, y0: float = 3.0) -> ModelCatalogEntry:
    """Gompertz growth ydot = y (a - b ln y) and its compensating transform.

    The transform linearises the flow completely: the transformed field is
    identically one.  It is invertible on the solution range, i.e. wherever
    a - b ln y keeps the sign it has at y0.
    """
    if b == 0.0 or a == 0.0:
        raise ConfigurationError("growth parameters a and b must be nonzero")
    _require_positive(y0=y0)
    if 1.0 - (b / a) * math.log(y0) <= 0.0:
        raise ConfigurationError("y0 lies outside the invertibility range")

    def f_scalar(y: float) -> float:
        return y * (a - b * math.log(y))

    system = OdeSystem(
        n=1,
        f=lambda y: np.array([f_scalar(y[0])]),
        name="gompertz",
        closed_form=lambda y_init, t: np.exp(
            a / b + (np.log(y_init) - a / b) * math.exp(-b * t)
        ),
        jac=lambda y: np.array([[a - b * math.log(y[0]) - b]]),
    )
    c0 = 1.0 - (b / a) * math.log(y0)
    sign0 = math.copysign(1.0, f_scalar(y0))

    def forward(y):
        return np.array([(math.log(c0) - math.log(1.0 - (b / a) * math.log(y[0]))) / b])

    def inverse(yb):
        return np.array([math.exp((a / b) * (1.0 - c0 * math.exp(-b * yb[0])))])

    transform = VariableTransform(
        forward=forward,
        inverse=inverse,
        d_forward=lambda y: np.array([[1.0 / f_scalar(y[0])]]),
        domain=lambda y: y[0] > 0.0 and math.copysign(1.0, f_scalar(y[0])) == sign0,
        name="gompertz-linearising",
    )
    return ModelCatalogEntry(
        name="gompertz",
        system=system,
        parameters={"a": a, "b": b, "y0": y0},
        default_ic=OdeState([y0], 0.0),
        chart="scalar",
        compensating=transform,
    )


def _pendulum_boundary(l: float, m: float, k: float, g: float):
    """Initial radii at/beyond this bound make the polar run hit the origin."""

    def beyond(r0: float, theta0: float) -> bool:
        return r0 >= 2.0 * l + (2.0 * m * g / k) * math.cos(theta0)

    return beyond


def elastic_pendulum_cartesian(l: float = 1.0, m: float = 1.0, k: float = 1.0,
                               g: float = 0.2) -> ModelCatalogEntry:
    """Planar spring pendulum in Cartesian coordinates (separable)."""
    _require_positive(l=l, m=m, k=k)
    if g < 0.0:
        raise ConfigurationError("g must be nonnegative")
    mg = m * g

    def U(q):
        rho = math.hypot(q[0], q[1])
        return 0.5 * k * (rho - l) ** 2 - mg * q[1]

    def U_q(q):
        rho = math.hypot(q[0], q[1])
        c = k * (1.0 - l / rho)
        return np.array([c * q[0], c * q[1] - mg])

    def U_qq(q):
        x, y = q[0], q[1]
        rho = math.hypot(x, y)
        base = k * (1.0 - l / rho)
        s = k * l / rho**3
        return np.array([[base + s * x * x, s * x * y],
                         [s * x * y, base + s * y * y]])

    sep = SeparableHamiltonian(np.eye(2) / m, U, U_q, U_qq,
                               name="elastic-pendulum-cartesian")
    system = sep.as_system(
        singular=lambda q, p: math.hypot(q[0], q[1]) <= 1e-8,
        fd_exclusion=lambda q, p: math.hypot(q[0], q[1]) <= FD_SAFE_RADIUS,
    )
    beyond = _pendulum_boundary(l, m, k, g)
    return ModelCatalogEntry(
        name="elastic-pendulum",
        system=system,
        parameters={"l": l, "m": m, "k": k, "g": g},
        default_ic=PhaseState([0.0, -(l + mg / k)], [0.0, 0.0]),
        chart="cartesian",
        to_counterpart=cartesian_to_polar("y"),
        counterpart_chart="polar",
        divergence_boundary=lambda q0: beyond(
            math.hypot(q0[0], q0[1]), math.atan2(q0[0], q0[1])
        ),
    )


def elastic_pendulum_polar(l: float = 1.0, m: float = 1.0, k: float = 1.0,
                           g: float = 0.2, r_min: float = 1e-8) -> ModelCatalogEntry:
    """Planar spring pendulum in polar coordinates, angle from the gravity axis.

    Not separable: the angular kinetic term couples momenta and radius.  Runs
    reaching r <= r_min are cut off as singular rather than overflowing.
    """
    _require_positive(l=l, m=m, k=k, r_min=r_min)
    if g < 0.0:
        raise ConfigurationError("g must be nonnegative")
    mg = m * g

    def H(q, p):
        r, th = q[0], q[1]
        return ((p[0] ** 2 + (p[1] / r) ** 2) / (2.0 * m)
                + 0.5 * k * (r - l) ** 2 - mg * r * math.cos(th))

    def grad_q(q, p):
        r, th = q[0], q[1]
        return np.array([
            -p[1] ** 2 / (m * r**3) + k * (r - l) - mg * math.cos(th),
            mg * r * math.sin(th),
        ])

    def grad_p(q, p):
        r = q[0]
        return np.array([p[0] / m, p[1] / (m * r * r)])

    system = HamiltonianSystem(
        d=2, H=H, grad_q=grad_q, grad_p=grad_p,
        name="elastic-pendulum-polar",
        singular=lambda q, p: q[0] <= r_min,
        fd_exclusion=lambda q, p: abs(q[0]) <= FD_SAFE_RADIUS,
    )
    beyond = _pendulum_boundary(l, m, k, g)
    return ModelCatalogEntry(
        name="elastic-pendulum",
        system=system,
        parameters={"l": l, "m": m, "k": k, "g": g, "r_min": r_min},
        default_ic=PhaseState([l + mg / k, math.pi], [0.0, 0.0]),
        chart="polar",
        to_counterpart=polar_to_cartesian("y"),
        counterpart_chart="cartesian",
        divergence_boundary=lambda q0: beyond(q0[0], q0[1]),
    )


def free_mass_cartesian(m: float = 1.0) -> ModelCatalogEntry:
    """Force-free point mass in the plane; every momentum component conserved."""
    _require_positive(m=m)
    zero2 = np.zeros(2)
    sep = SeparableHamiltonian(np.eye(2) / m, U=lambda q: 0.0,
                               U_q=lambda q: zero2,
                               U_qq=lambda q: np.zeros((2, 2)),
                               name="free-mass-cartesian")
    system = sep.as_system(
        first_integrals=(
            FirstIntegral("p_x", lambda q, p: p[0]),
            FirstIntegral("p_y", lambda q, p: p[1]),
            FirstIntegral("L", lambda q, p: q[0] * p[1] - q[1] * p[0]),
        ),
        closed_form=lambda q0, p0, t: (q0 + (t / m) * p0, p0),
    )
    return ModelCatalogEntry(
        name="free-mass",
        system=system,
        parameters={"m": m},
        default_ic=PhaseState([1.0, 0.0], [0.2, 1.0]),
        chart="cartesian",
        to_counterpart=cartesian_to_polar("x"),
        counterpart_chart="polar",
    )


def free_mass_polar(m: float = 1.0) -> ModelCatalogEntry:
    """Force-free point mass in polar coordinates; only the angle is cyclic."""
    _require_positive(m=m)

    def H(q, p):
        return (p[0] ** 2 + (p[1] / q[0]) ** 2) / (2.0 * m)

    def grad_q(q, p):
        return np.array([-p[1] ** 2 / (m * q[0] ** 3), 0.0])

    def grad_p(q, p):
        return np.array([p[0] / m, p[1] / (m * q[0] ** 2)])

    to_cart = polar_to_cartesian("x")
    from_cart = cartesian_to_polar("x")

    def closed_form(q0, p0, t):
        qc, pc = map_state_forward(to_cart, q0, p0)
        qc = qc + (t / m) * pc
        q, p = map_state_forward(from_cart, qc, pc)
        # keep the angle on the branch adjacent to the start angle
        theta = q[1] + 2.0 * math.pi * round((q0[1] - q[1]) / (2.0 * math.pi))
        return np.array([q[0], theta]), p

    system = HamiltonianSystem(
        d=2, H=H, grad_q=grad_q, grad_p=grad_p,
        name="free-mass-polar",
        first_integrals=(
            FirstIntegral("p_theta", lambda q, p: p[1]),
            FirstIntegral(
                "p_x",
                lambda q, p: p[0] * math.cos(q[1]) - (p[1] / q[0]) * math.sin(q[1]),
            ),
            FirstIntegral(
                "p_y",
                lambda q, p: p[0] * math.sin(q[1]) + (p[1] / q[0]) * math.cos(q[1]),
            ),
        ),
        singular=lambda q, p: q[0] <= 1e-8,
        fd_exclusion=lambda q, p: abs(q[0]) <= FD_SAFE_RADIUS,
        closed_form=closed_form,
    )
    return ModelCatalogEntry(
        name="free-mass",
        system=system,
        parameters={"m": m},
        # generic state: on symmetry states such as (1, 0, 0, 1) the leading
        # drift coefficient of p_x happens to vanish
        default_ic=PhaseState([1.0, 0.5], [0.2, 1.0]),
        chart="polar",
        to_counterpart=to_cart,
        counterpart_chart="cartesian",
    )


def harmonic_oscillator() -> ModelCatalogEntry:
    """Unit harmonic oscillator with its compensating coordinate maps."""
    sep = SeparableHamiltonian(
        np.array([[1.0]]),
        U=lambda q: 0.5 * q[0] * q[0],
        U_q=lambda q: np.array([q[0]]),
        U_qq=lambda q: np.array([[1.0]]),
        name="harmonic-oscillator",
    )
    system = sep.as_system(
        hess=lambda q, p: (np.array([[1.0]]), np.zeros((1, 1)), np.array([[1.0]])),
        closed_form=lambda q0, p0, t: (
            q0 * math.cos(t) + p0 * math.sin(t),
            p0 * math.cos(t) - q0 * math.sin(t),
        ),
    )
    return ModelCatalogEntry(
        name="harmonic-oscillator",
        system=system,
        parameters={},
        default_ic=PhaseState([1.0], [0.0]),
        chart="original",
        to_counterpart=oscillator_transform_exact(),
        counterpart_chart="compensated",
    )


def harmonic_oscillator_compensated(h: float, k: float = 2.0) -> ModelCatalogEntry:
    """Oscillator rewritten in the regularized compensating chart for step h."""
    base = harmonic_oscillator()
    pt = oscillator_transform_regularized(h, k)
    system = transform_hamiltonian(base.system, pt, name="harmonic-oscillator-compensated")
    q0, p0 = map_state_forward(pt, base.default_ic.q, base.default_ic.p)
    return ModelCatalogEntry(
        name="harmonic-oscillator",
        system=system,
        parameters={"k": k, "h": h},
        default_ic=PhaseState(q0, p0),
        chart="compensated",
        to_counterpart=pt,  # forward maps original -> compensated
        counterpart_chart="original",
    )


def anisotropic_polar_mass() -> ModelCatalogEntry:
    """Polar-kinetic Hamiltonian with doubled angular term, (p_r^2 + 2 p_th^2/r^2)/2.

    An artificial system whose elementary gradient product happens to be
    invariant under the polar-to-Cartesian chart change even though that
    transform is not affine; used as a diagnostic witness.
    """

    def H(q, p):
        return 0.5 * (p[0] ** 2 + 2.0 * (p[1] / q[0]) ** 2)

    def grad_q(q, p):
        return np.array([-2.0 * p[1] ** 2 / q[0] ** 3, 0.0])

    def grad_p(q, p):
        return np.array([p[0], 2.0 * p[1] / q[0] ** 2])

    system = HamiltonianSystem(
        d=2, H=H, grad_q=grad_q, grad_p=grad_p,
        name="aniso-polar",
        first_integrals=(FirstIntegral("p_theta", lambda q, p: p[1]),),
        singular=lambda q, p: q[0] <= 1e-8,
        fd_exclusion=lambda q, p: abs(q[0]) <= FD_SAFE_RADIUS,
    )
    return ModelCatalogEntry(
        name="aniso-polar",
        system=system,
        parameters={},
        default_ic=PhaseState([1.0, 0.0], [1.0, 1.0]),
        chart="polar",
        to_counterpart=polar_to_cartesian("x"),
        counterpart_chart="cartesian",
    )


MODEL_NAMES = ("cooling", "gompertz", "elastic-pendulum", "free-mass",
               "harmonic-oscillator", "aniso-polar")


def get_model(name: str, coords: Optional[str] = None, **params) -> ModelCatalogEntry:
    """Catalog lookup by CLI name and chart selector."""
    if name == "cooling":
        return cooling_model(**params)
    if name == "gompertz":
        return gompertz_model(**params)
    if name == "elastic-pendulum":
        chart = coords or "cartesian"
        if chart == "cartesian":
            return elastic_pendulum_cartesian(**params)
        if chart == "polar":
            return elastic_pendulum_polar(**params)
        raise ConfigurationError(f"elastic-pendulum has no chart {chart!r}")
    if name == "free-mass":
        chart = coords or "cartesian"
        if chart == "cartesian":
            return free_mass_cartesian(**params)
        if chart == "polar":
            return free_mass_polar(**params)
        raise ConfigurationError(f"free-mass has no chart {chart!r}")
    if name == "harmonic-oscillator":
        chart = coords or "original"
        if chart == "original":
            return harmonic_oscillator()
        if chart == "compensated":
            if "h" not in params:
                raise ConfigurationError("the compensated chart needs the step size h")
            return harmonic_oscillator_compensated(**params)
        raise ConfigurationError(f"harmonic-oscillator has no chart {chart!r}")
    if name == "aniso-polar":
        if coords not in (None, "polar"):
            raise ConfigurationError("aniso-polar is defined in polar coordinates only")
        return anisotropic_polar_mass()
    raise ConfigurationError(f"unknown model {name!r}; available: {MODEL_NAMES}")
