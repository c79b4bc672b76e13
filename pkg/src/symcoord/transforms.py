"""Variable transformations, point transformations and induced canonical maps.

A :class:`VariableTransform` is a smooth invertible change of variables for a
general ODE.  A :class:`PointTransform` changes only the generalised
coordinates of a Hamiltonian system; it induces a canonical transformation of
the full phase space in which momenta transform linearly through the Jacobian
of the coordinate map.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .core import HamiltonianSystem, fd_jacobian
from .errors import (
    CapabilityError,
    ConfigurationError,
    DomainError,
    PoleError,
    SingularTransformError,
)

__all__ = [
    "PointTransform",
    "VariableTransform",
    "affine_point_transform",
    "cartesian_to_polar",
    "compensating_transform_1d",
    "induced_momentum_forward",
    "induced_momentum_inverse",
    "map_state_forward",
    "map_state_inverse",
    "ndcomp_residual",
    "oscillator_transform_exact",
    "oscillator_transform_regularized",
    "polar_to_cartesian",
    "transform_hamiltonian",
    "transform_ode",
]


@dataclass(frozen=True)
class VariableTransform:
    """Invertible map of ODE variables with its forward Jacobian.

    All callables act on 1-d arrays; ``d_forward`` returns the (n, n)
    Jacobian of ``forward``.  ``domain`` is a validity predicate on the
    original variables (None means everywhere).
    """

    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    d_forward: Callable[[np.ndarray], np.ndarray]
    domain: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "transform"

    def in_domain(self, y: np.ndarray) -> bool:
        return True if self.domain is None else bool(self.domain(y))


def transform_ode(f: Callable, psi: VariableTransform) -> Callable:
    """Push an ODE field through a variable transform.

    The transformed field evaluates the original one at the pulled-back point
    and maps it with the forward Jacobian (equivalently, the inverse of the
    inverse-map Jacobian).  A numerically singular Jacobian raises with a
    condition estimate.
    """

    def fbar(ybar: np.ndarray) -> np.ndarray:
        y = np.atleast_1d(np.asarray(psi.inverse(np.atleast_1d(ybar)), dtype=float))
        if not psi.in_domain(y):
            raise DomainError(f"{psi.name}: pulled-back point {y} outside domain")
        jac = np.atleast_2d(np.asarray(psi.d_forward(y), dtype=float))
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] == 0.0 or not np.all(np.isfinite(sv)):
            raise SingularTransformError(
                f"{psi.name}: singular Jacobian at {y}", cond=float("inf")
            )
        cond = float(sv[0] / sv[-1])
        if cond > 1e14:
            raise SingularTransformError(
                f"{psi.name}: ill-conditioned Jacobian at {y}", cond=cond
            )
        return jac @ np.atleast_1d(np.asarray(f(y), dtype=float))

    return fbar


def compensating_transform_1d(
    f: Callable[[float], float],
    y0: float,
    C1: float,
    C2: float,
    inverse_bracket: Optional[tuple] = None,
) -> VariableTransform:
    """Order-compensating transform for a scalar field, by quadrature.

    The forward map integrates C1 / f from y0 (absolute tolerance 1e-12); its
    derivative is analytic and the inverse is found by bracketed root finding.
    Monotonicity on the working range is a precondition: it holds wherever f
    keeps a fixed sign, which is also required for the integral to exist.
    """
    if C1 == 0.0:
        raise ConfigurationError("C1 = 0 gives a constant, non-invertible map")
    y0 = float(y0)

    def integrand(u: float) -> float:
        fu = float(f(u))
        if fu == 0.0 or not math.isfinite(fu):
            raise PoleError(f"field vanishes or blows up at u={u}")
        return C1 / fu

    def forward_scalar(y: float) -> float:
        if float(f(y)) * float(f(y0)) <= 0.0:
            raise PoleError(
                f"field changes sign between y0={y0} and y={y}; "
                "the compensating integral has a pole in range"
            )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(integrand, y0, y, epsabs=1e-12,
                                      epsrel=1e-12, limit=200)
        if not math.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
            raise PoleError(f"quadrature did not converge on [{y0}, {y}]")
        return val + C2

    def inverse_scalar(ybar: float) -> float:
        if inverse_bracket is not None:
            lo, hi = inverse_bracket
        else:
            # psi is monotone where f keeps its sign: walk from y0 toward the
            # target value, shrinking the stride whenever a probe crosses the
            # pole of the integrand
            if ybar == C2:
                return y0
            upward = (ybar > C2) == (integrand(y0) > 0.0)
            side = 1.0 if upward else -1.0
            edge, step = y0, 0.5 * max(1.0, abs(y0))
            for _ in range(200):
                try:
                    val = forward_scalar(edge + side * step)
                except PoleError:
                    step *= 0.5
                    if step < 1e-15 * max(1.0, abs(edge)):
                        raise DomainError(
                            f"value {ybar} is beyond the pole of the transform"
                        )
                    continue
                edge = edge + side * step
                if (val - ybar) * (C2 - ybar) <= 0.0:
                    break
                step *= 2.0
            else:
                raise DomainError(f"could not bracket inverse of {ybar}")
            lo, hi = (y0, edge) if upward else (edge, y0)
        g = lambda y: forward_scalar(y) - ybar
        if g(lo) * g(hi) > 0.0:
            raise DomainError(
                f"value {ybar} not attained on bracket [{lo}, {hi}]"
            )
        return float(optimize.brentq(g, lo, hi, xtol=1e-12))

    return VariableTransform(
        forward=lambda y: np.array([forward_scalar(float(np.atleast_1d(y)[0]))]),
        inverse=lambda yb: np.array([inverse_scalar(float(np.atleast_1d(yb)[0]))]),
        d_forward=lambda y: np.array([[integrand(float(np.atleast_1d(y)[0]))]]),
        domain=lambda y: float(f(float(np.atleast_1d(y)[0]))) * float(f(y0)) > 0.0,
        name="compensating-1d",
    )


@dataclass(frozen=True)
class PointTransform:
    """Invertible map of generalised coordinates with derivative data.

    ``jac(q)`` has entries d(new coord a) / d(old coord i) in row a, column i;
    ``jac_inv(qbar)`` is the Jacobian of the inverse map (rows are old
    coordinates).  ``hess(q)[b, k, i]`` is the second derivative of new
    coordinate b with respect to old coordinates k and i.  ``affine`` asserts
    the Hessian vanishes identically.
    """

    d: int
    Q: Callable[[np.ndarray], np.ndarray]
    Q_inv: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    jac_inv: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    affine: bool = False
    domain: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "point-transform"

    def in_domain(self, q: np.ndarray) -> bool:
        return True if self.domain is None else bool(self.domain(q))

    def hessian(self, q: np.ndarray) -> np.ndarray:
        if self.affine:
            return np.zeros((self.d, self.d, self.d))
        if self.hess is None:
            raise CapabilityError(
                f"{self.name}: second derivatives required but not provided"
            )
        return np.asarray(self.hess(q), dtype=float)


def induced_momentum_forward(pt: PointTransform, q, p) -> np.ndarray:
    """Map momenta into the new chart: pbar_a = p_i d(Qinv)^i/dqbar^a at Q(q)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if not pt.in_domain(q):
        raise DomainError(f"{pt.name}: point {q} outside domain")
    qbar = np.atleast_1d(np.asarray(pt.Q(q), dtype=float))
    return np.asarray(pt.jac_inv(qbar), dtype=float).T @ np.atleast_1d(p)


def induced_momentum_inverse(pt: PointTransform, qbar, pbar) -> np.ndarray:
    """Map momenta back: p_i = pbar_a dQ^a/dq^i at Qinv(qbar)."""
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    q = np.atleast_1d(np.asarray(pt.Q_inv(qbar), dtype=float))
    if not pt.in_domain(q):
        raise DomainError(f"{pt.name}: pulled-back point {q} outside domain")
    return np.asarray(pt.jac(q), dtype=float).T @ np.atleast_1d(pbar)


def map_state_forward(pt: PointTransform, q, p):
    """Full induced phase-space map; returns (qbar, pbar) arrays."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if not pt.in_domain(q):
        raise DomainError(f"{pt.name}: point {q} outside domain")
    qbar = np.atleast_1d(np.asarray(pt.Q(q), dtype=float))
    pbar = np.asarray(pt.jac_inv(qbar), dtype=float).T @ np.atleast_1d(p)
    return qbar, pbar


def map_state_inverse(pt: PointTransform, qbar, pbar):
    """Inverse of :func:`map_state_forward`; returns (q, p) arrays."""
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    q = np.atleast_1d(np.asarray(pt.Q_inv(qbar), dtype=float))
    p = np.asarray(pt.jac(q), dtype=float).T @ np.atleast_1d(pbar)
    return q, p


def transform_hamiltonian(
    sys: HamiltonianSystem, pt: PointTransform, name: Optional[str] = None
) -> HamiltonianSystem:
    """Express a Hamiltonian system in the chart defined by a point transform.

    The Hamiltonian itself is invariant under the induced canonical map; the
    returned gradients are assembled by the chain rule from the transform's
    Jacobian and Hessian.  First integrals and any closed-form flow are
    carried over by composition with the canonical map.
    """

    def pull_back(qbar, pbar):
        q = np.atleast_1d(np.asarray(pt.Q_inv(qbar), dtype=float))
        p = np.asarray(pt.jac(q), dtype=float).T @ pbar
        return q, p

    def H(qbar, pbar):
        q, p = pull_back(qbar, pbar)
        return sys.H(q, p)

    def grad_p(qbar, pbar):
        q, p = pull_back(qbar, pbar)
        return np.asarray(pt.jac(q), dtype=float) @ sys.grad_p(q, p)

    def grad_q(qbar, pbar):
        q, p = pull_back(qbar, pbar)
        ji = np.asarray(pt.jac_inv(np.atleast_1d(qbar)), dtype=float)
        gq = ji.T @ sys.grad_q(q, p)
        if not pt.affine:
            hp = sys.grad_p(q, p)
            gq = gq + np.einsum("i,b,bil,la->a", hp, np.atleast_1d(pbar),
                                pt.hessian(q), ji)
        return gq

    def singular(qbar, pbar):
        try:
            q, p = pull_back(qbar, pbar)
        except (DomainError, FloatingPointError):
            return True
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(p)):
            return True
        return (not pt.in_domain(q)) or sys.is_singular(q, p)

    integrals = tuple(
        type(fi)(
            label=fi.label,
            F=(lambda F: lambda qbar, pbar: F(*pull_back(qbar, pbar)))(fi.F),
        )
        for fi in sys.first_integrals
    )

    closed = None
    if sys.closed_form is not None:
        base_flow = sys.closed_form

        def closed(qbar0, pbar0, t):
            q0, p0 = pull_back(qbar0, pbar0)
            q, p = base_flow(q0, p0, t)
            return map_state_forward(pt, q, p)

    return HamiltonianSystem(
        d=sys.d,
        H=H,
        grad_q=grad_q,
        grad_p=grad_p,
        first_integrals=integrals,
        name=name or f"{sys.name}[{pt.name}]",
        hq_independent_of_p=sys.hq_independent_of_p and pt.affine,
        hp_independent_of_q=sys.hp_independent_of_q and pt.affine,
        singular=singular,
        closed_form=closed,
    )


def ndcomp_residual(
    f: Callable, psi: VariableTransform, y, jac_f: Optional[Callable] = None
) -> np.ndarray:
    """Residual of the order-compensation condition for a transform at y.

    Evaluates Df f + (inverse forward Jacobian) D2psi(f, f); a zero vector
    means the transform cancels the leading distorted-field term there.
    Second derivatives of the transform are taken by finite differences of
    its Jacobian.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    fy = np.atleast_1d(np.asarray(f(y), dtype=float))
    df = np.atleast_2d(jac_f(y) if jac_f is not None else fd_jacobian(f, y))
    n = y.size
    # T[a, b, c] = second derivative of psi^a along y^b, y^c
    flat = lambda x: np.asarray(psi.d_forward(x), dtype=float).reshape(-1)
    T = fd_jacobian(flat, y).reshape(n, n, n)
    bil = np.einsum("abc,b,c->a", T, fy, fy)
    jac = np.atleast_2d(np.asarray(psi.d_forward(y), dtype=float))
    return df @ fy + np.linalg.solve(jac, bil)


def affine_point_transform(A, b=None, name: str = "affine") -> PointTransform:
    """Point transform q -> A q + b with constant Jacobian."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] == 0.0:
        raise SingularTransformError("affine matrix is singular", cond=float("inf"))
    A_inv = np.linalg.solve(A, np.eye(d))
    return PointTransform(
        d=d,
        Q=lambda q: A @ q + b,
        Q_inv=lambda qb: A_inv @ (qb - b),
        jac=lambda q: A,
        jac_inv=lambda qb: A_inv,
        hess=lambda q: np.zeros((d, d, d)),
        affine=True,
        name=name,
    )


def cartesian_to_polar(angle_from: str = "x") -> PointTransform:
    """Planar Cartesian coordinates to polar ones.

    ``angle_from="x"`` measures the angle from the +x axis (x = r cos, y =
    r sin); ``angle_from="y"`` measures it from the +y axis (x = r sin, y =
    r cos), the usual pendulum convention with the angle counted from the
    direction of gravity.  The domain excludes the origin.
    """
    if angle_from not in ("x", "y"):
        raise ConfigurationError("angle_from must be 'x' or 'y'")
    from_x = angle_from == "x"

    def Q(q):
        x, y = q
        theta = math.atan2(y, x) if from_x else math.atan2(x, y)
        return np.array([math.hypot(x, y), theta])

    def Q_inv(qb):
        r, th = qb
        if from_x:
            return np.array([r * math.cos(th), r * math.sin(th)])
        return np.array([r * math.sin(th), r * math.cos(th)])

    def jac(q):
        x, y = q
        rho2 = x * x + y * y
        rho = math.sqrt(rho2)
        if from_x:
            return np.array([[x / rho, y / rho], [-y / rho2, x / rho2]])
        return np.array([[x / rho, y / rho], [y / rho2, -x / rho2]])

    def jac_inv(qb):
        r, th = qb
        c, s = math.cos(th), math.sin(th)
        if from_x:
            return np.array([[c, -r * s], [s, r * c]])
        return np.array([[s, r * c], [c, -r * s]])

    def hess(q):
        x, y = q
        rho2 = x * x + y * y
        rho3 = rho2 * math.sqrt(rho2)
        rho4 = rho2 * rho2
        h_r = np.array([[y * y, -x * y], [-x * y, x * x]]) / rho3
        h_th = np.array([[2 * x * y, y * y - x * x],
                         [y * y - x * x, -2 * x * y]]) / rho4
        if not from_x:
            h_th = -h_th
        return np.stack([h_r, h_th])

    return PointTransform(
        d=2, Q=Q, Q_inv=Q_inv, jac=jac, jac_inv=jac_inv, hess=hess,
        domain=lambda q: float(np.hypot(q[0], q[1])) > 0.0,
        name=f"cartesian-to-polar({angle_from})",
    )


def polar_to_cartesian(angle_from: str = "x") -> PointTransform:
    """Planar polar coordinates to Cartesian ones (inverse chart direction)."""
    if angle_from not in ("x", "y"):
        raise ConfigurationError("angle_from must be 'x' or 'y'")
    from_x = angle_from == "x"
    partner = cartesian_to_polar(angle_from)

    def hess(qb):
        r, th = qb
        c, s = math.cos(th), math.sin(th)
        if from_x:
            h_x = np.array([[0.0, -s], [-s, -r * c]])
            h_y = np.array([[0.0, c], [c, -r * s]])
        else:
            h_x = np.array([[0.0, c], [c, -r * s]])
            h_y = np.array([[0.0, -s], [-s, -r * c]])
        return np.stack([h_x, h_y])

    return PointTransform(
        d=2, Q=partner.Q_inv, Q_inv=partner.Q, jac=partner.jac_inv,
        jac_inv=partner.jac, hess=hess,
        domain=lambda qb: abs(float(qb[0])) > 0.0,
        name=f"polar-to-cartesian({angle_from})",
    )


def _osc_scaled(scale: float, name: str, k: Optional[float] = None,
                h: Optional[float] = None) -> PointTransform:
    """Arc-area map of the unit oscillator orbit, with coordinate prescaling."""
    two_over_pi = 2.0 / math.pi

    def Q(q):
        qh = float(q[0]) / scale
        if abs(qh) > 1.0:
            extra = "" if k is None else f" (k={k} too small for h={h})"
            raise DomainError(f"|q|={abs(float(q[0]))} exceeds {scale}{extra}")
        return np.array([two_over_pi * (qh * math.sqrt(1.0 - qh * qh) + math.asin(qh))])

    def Q_inv(qb):
        target = float(qb[0])
        if abs(target) > 1.0:
            raise DomainError(f"|qbar|={abs(target)} > 1 is outside the image")
        if abs(target) == 1.0:
            return np.array([math.copysign(scale, target)])
        g = lambda u: two_over_pi * (u * math.sqrt(1.0 - u * u) + math.asin(u)) - target
        u = optimize.brentq(g, -1.0, 1.0, xtol=1e-15)
        return np.array([u * scale])

    def jac(q):
        qh = float(q[0]) / scale
        return np.array([[2.0 * two_over_pi * math.sqrt(max(0.0, 1.0 - qh * qh)) / scale]])

    def jac_inv(qb):
        q = Q_inv(qb)
        j = jac(q)[0, 0]
        if j == 0.0:
            raise SingularTransformError(
                f"{name}: Jacobian vanishes at the turning point", cond=float("inf")
            )
        return np.array([[1.0 / j]])

    def hess(q):
        qh = float(q[0]) / scale
        denom = math.sqrt(1.0 - qh * qh)
        if denom == 0.0:
            raise SingularTransformError(
                f"{name}: second derivative blows up at |q| = {scale}",
                cond=float("inf"),
            )
        return np.array([[[-2.0 * two_over_pi * qh / denom / (scale * scale)]]])

    return PointTransform(
        d=1, Q=Q, Q_inv=Q_inv, jac=jac, jac_inv=jac_inv, hess=hess,
        domain=lambda q: abs(float(q[0])) <= scale,
        name=name,
    )


def oscillator_transform_exact() -> PointTransform:
    """Compensating coordinate map for the unit harmonic oscillator.

    Valid on |q| <= 1 only; numerical trajectories leave that interval, which
    is what the regularized variant is for.
    """
    return _osc_scaled(1.0, "oscillator-compensating")


def oscillator_transform_regularized(h: float, k: float = 2.0) -> PointTransform:
    """Step-size-regularized compensating map, prescaling q by 1/(1 + k h^2).

    The prescaling keeps the numerical trajectory inside the map's domain; the
    difference from the exact map is second order in h.
    """
    if h <= 0.0 or k <= 0.0:
        raise ConfigurationError("h and k must be positive")
    scale = 1.0 + k * h * h
    return _osc_scaled(scale, f"oscillator-compensating(h={h},k={k})", k=k, h=h)
