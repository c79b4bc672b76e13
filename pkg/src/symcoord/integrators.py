"""Fixed-step one-step maps and trajectory drivers.

All steppers are pure functions of (system, state, step size); the solve
driver runs them in a fixed-step loop and flags divergence instead of raising,
so sweeps over unstable initial conditions terminate cleanly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    HamiltonianSystem,
    OdeState,
    OdeSystem,
    PhaseState,
    SeparableHamiltonian,
    Trajectory,
    fd_jacobian,
    time_grid,
)
from .errors import (
    ConfigurationError,
    ImplicitSolveError,
    NumericError,
    OraclePrecisionError,
)

__all__ = [
    "METHODS",
    "RowlandsConfig",
    "StepperConfig",
    "explicit_euler_step",
    "one_step_map",
    "reference_solve",
    "rowlands_solve",
    "solve",
    "stormer_verlet_step",
    "symplectic_euler_adjoint_step",
    "symplectic_euler_step",
    "symplecticity_defect",
]

METHODS = (
    "explicit-euler",
    "symplectic-euler",
    "symplectic-euler-adjoint",
    "stoermer-verlet",
    "rowlands-exact",
    "rowlands-cheap",
)

#: Corrector coefficient of the processed Stoermer-Verlet scheme.  The stated
#: closed-form corrector shifts q by (coef * h^2) M^-1 U_q; 1/12 is the value
#: consistent with the cheap corrector pair and the only one that yields
#: fourth effective order (1/24 leaves a second-order endpoint error).
ROWLANDS_CORRECTOR_COEF = 1.0 / 12.0


@dataclass(frozen=True)
class StepperConfig:
    """Step size plus fixed-point iteration controls for implicit updates."""

    h: float
    implicit_tol: float = 1e-13
    implicit_max_iter: int = 50

    def __post_init__(self):
        if self.h == 0.0 or not math.isfinite(self.h):
            raise ConfigurationError("step size must be nonzero and finite")
        if self.implicit_tol <= 0.0:
            raise ConfigurationError("implicit_tol must be positive")


@dataclass(frozen=True)
class RowlandsConfig:
    """Corrector flavour and separable base system for the processed method."""

    corrector: str
    base: SeparableHamiltonian

    def __post_init__(self):
        if self.corrector not in ("exact", "cheap"):
            raise ConfigurationError("corrector must be 'exact' or 'cheap'")
        if not isinstance(self.base, SeparableHamiltonian):
            raise ConfigurationError("the processed method needs a separable base")


def _fixed_point(update: Callable[[np.ndarray], np.ndarray], x0: np.ndarray,
                 tol: float, max_iter: int) -> np.ndarray:
    xk = x0
    scale = max(1.0, float(np.max(np.abs(x0))))
    res = math.inf
    for _ in range(max_iter):
        xn = update(xk)
        if not np.all(np.isfinite(xn)):
            return xn  # caller's divergence check picks this up
        res = float(np.max(np.abs(xn - xk)))
        xk = xn
        if res <= tol * scale:
            return xk
    raise ImplicitSolveError(
        f"fixed-point iteration stalled after {max_iter} iterations", residual=res
    )


def _se_core(sys: HamiltonianSystem, q, p, cfg: StepperConfig):
    h = cfg.h
    if sys.hq_independent_of_p:
        p1 = p - h * sys.grad_q(q, p)
    else:
        p1 = _fixed_point(lambda pk: p - h * sys.grad_q(q, pk), p,
                          cfg.implicit_tol, cfg.implicit_max_iter)
    q1 = q + h * sys.grad_p(q, p1)
    return q1, p1


def _se_adjoint_core(sys: HamiltonianSystem, q, p, cfg: StepperConfig):
    h = cfg.h
    if sys.hp_independent_of_q:
        q1 = q + h * sys.grad_p(q, p)
    else:
        q1 = _fixed_point(lambda qk: q + h * sys.grad_p(qk, p), q,
                          cfg.implicit_tol, cfg.implicit_max_iter)
    p1 = p - h * sys.grad_q(q1, p)
    return q1, p1


def explicit_euler_step(f: Callable, s: OdeState, h: float) -> OdeState:
    """One explicit Euler update; exactly one field evaluation."""
    return OdeState(s.y + h * np.asarray(f(s.y), dtype=float), s.t + h)


def symplectic_euler_step(sys: HamiltonianSystem, s: PhaseState,
                          cfg: StepperConfig) -> PhaseState:
    """Momentum-first symplectic Euler update.

    The momentum update is implicit; it is solved by fixed-point iteration
    unless the system declares its q-gradient independent of p, in which case
    a single evaluation suffices and is used for bit reproducibility.
    """
    if s.diverged():
        raise NumericError("cannot step a diverged state")
    q1, p1 = _se_core(sys, s.q, s.p, cfg)
    return PhaseState(q1, p1)


def symplectic_euler_adjoint_step(sys: HamiltonianSystem, s: PhaseState,
                                  cfg: StepperConfig) -> PhaseState:
    """Coordinate-first adjoint variant; the q update is the implicit one."""
    if s.diverged():
        raise NumericError("cannot step a diverged state")
    q1, p1 = _se_adjoint_core(sys, s.q, s.p, cfg)
    return PhaseState(q1, p1)


def stormer_verlet_step(sep: SeparableHamiltonian, s: PhaseState,
                        h: float) -> PhaseState:
    """Half kick, drift, half kick on a separable system."""
    p_half = s.p - 0.5 * h * np.asarray(sep.U_q(s.q), dtype=float)
    q1 = s.q + h * (sep.m_inv @ p_half)
    p1 = p_half - 0.5 * h * np.asarray(sep.U_q(q1), dtype=float)
    return PhaseState(q1, p1)


def _diverged_values(sys, q, p) -> bool:
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        return True
    if max(float(np.max(np.abs(q))), float(np.max(np.abs(p)))) > 1e12:
        return True
    return sys is not None and sys.is_singular(q, p)


def _package(times, qs, ps, h, method, diverged_at, meta) -> Trajectory:
    n_keep = len(times) if diverged_at is None else diverged_at + 1
    return Trajectory(
        times=times[:n_keep],
        qs=qs[:n_keep],
        ps=None if ps is None else ps[:n_keep],
        h=h,
        method=method,
        diverged_at=diverged_at,
        meta=meta,
    )


_EVAL_BLOWUPS = (ZeroDivisionError, OverflowError, ValueError)


def _hamiltonian_loop(sys: HamiltonianSystem, s0: PhaseState, h: float,
                      n_steps: int, method: str, cfg: StepperConfig) -> Trajectory:
    d = s0.q.size
    qs = np.empty((n_steps + 1, d))
    ps = np.empty((n_steps + 1, d))
    qs[0], ps[0] = s0.q, s0.p
    q, p = s0.q.copy(), s0.p.copy()
    diverged_at = 0 if _diverged_values(sys, q, p) else None
    meta = {"system": sys.name}

    if method == "stoermer-verlet" and diverged_at is None:
        sep = sys.separable
        m_inv, U_q = sep.m_inv, sep.U_q
        j = 0
        try:
            force = np.asarray(U_q(q), dtype=float)  # trailing gradient is reused
            for j in range(n_steps):
                p_half = p - 0.5 * h * force
                q = q + h * (m_inv @ p_half)
                force = np.asarray(U_q(q), dtype=float)
                p = p_half - 0.5 * h * force
                if _diverged_values(sys, q, p):
                    diverged_at = j
                    break
                qs[j + 1], ps[j + 1] = q, p
        except _EVAL_BLOWUPS:
            diverged_at = j
    elif diverged_at is None:
        core = _se_core if method == "symplectic-euler" else (
            _se_adjoint_core if method == "symplectic-euler-adjoint" else None)
        if core is not None:
            for j in range(n_steps):
                try:
                    q, p = core(sys, q, p, cfg)
                except ImplicitSolveError:
                    diverged_at = j
                    meta["implicit_solve_failed"] = True
                    break
                except _EVAL_BLOWUPS:
                    diverged_at = j
                    break
                if _diverged_values(sys, q, p):
                    diverged_at = j
                    break
                qs[j + 1], ps[j + 1] = q, p
        else:  # explicit Euler on the canonical equations
            for j in range(n_steps):
                try:
                    z = np.concatenate([q, p])
                    z = z + h * sys.canonical_field(z)
                except _EVAL_BLOWUPS:
                    diverged_at = j
                    break
                q, p = z[:d], z[d:]
                if _diverged_values(sys, q, p):
                    diverged_at = j
                    break
                qs[j + 1], ps[j + 1] = q, p

    times = time_grid(0.0, h, n_steps)
    return _package(times, qs, ps, h, method, diverged_at, meta)


def _require_separable(sys) -> SeparableHamiltonian:
    if isinstance(sys, SeparableHamiltonian):
        return sys
    if isinstance(sys, HamiltonianSystem) and sys.separable is not None:
        return sys.separable
    raise ConfigurationError(
        f"method requires a separable Hamiltonian; {getattr(sys, 'name', sys)!r} "
        "does not provide one"
    )


def solve(method: str, sys, s0, h: float, n_steps: int,
          cfg: Optional[StepperConfig] = None) -> Trajectory:
    """Fixed-step driver over all steppers; stores every state.

    On divergence (non-finite values, inf-norm beyond 1e12, the model's
    singular locus, or a failed implicit solve) the trajectory is truncated
    after the last valid state and flagged via ``diverged_at``.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; choose from {METHODS}")
    if n_steps < 0:
        raise ConfigurationError("n_steps must be >= 0")
    cfg = cfg or StepperConfig(h=h)

    if isinstance(sys, OdeSystem):
        if method != "explicit-euler":
            raise ConfigurationError(
                f"{method!r} needs a Hamiltonian system, got ODE {sys.name!r}"
            )
        if not isinstance(s0, OdeState):
            s0 = OdeState(s0)
        ys = np.empty((n_steps + 1, s0.y.size))
        ys[0] = s0.y
        y = s0.y.copy()
        diverged_at = None
        for j in range(n_steps):
            y = y + h * np.asarray(sys.f(y), dtype=float)
            if not np.all(np.isfinite(y)) or (y.size and float(np.max(np.abs(y))) > 1e12):
                diverged_at = j
                break
            ys[j + 1] = y
        times = time_grid(s0.t, h, n_steps)
        return _package(times, ys, None, h, method, diverged_at, {"system": sys.name})

    if isinstance(sys, SeparableHamiltonian):
        sys = sys.as_system()
    if not isinstance(sys, HamiltonianSystem):
        raise ConfigurationError(f"cannot integrate object of type {type(sys)!r}")
    if not isinstance(s0, PhaseState):
        raise ConfigurationError("Hamiltonian methods take a PhaseState start")
    if s0.diverged():
        raise ConfigurationError("initial state is already diverged")

    if method.startswith("rowlands"):
        rc = RowlandsConfig(corrector=method.split("-", 1)[1],
                            base=_require_separable(sys))
        if n_steps == 0:
            times = time_grid(0.0, h, 0)
            return Trajectory(times, s0.q[None, :], s0.p[None, :], h, method,
                              meta={"system": sys.name})
        return rowlands_solve(rc, s0, h, n_steps, singular_check=sys)
    if method == "stoermer-verlet":
        _require_separable(sys)
    return _hamiltonian_loop(sys, s0, h, n_steps, method, cfg)


def _effective_gradient(sep: SeparableHamiltonian, h: float):
    """Gradient of the shifted potential U - (h^2/24) U_q' M^-1 U_q."""
    m_inv, U_q, U_qq = sep.m_inv, sep.U_q, sep.U_qq
    c = h * h / 12.0
    if U_qq is not None:
        def grad(q):
            g = np.asarray(U_q(q), dtype=float)
            return g - c * (np.asarray(U_qq(q), dtype=float) @ (m_inv @ g))
        return grad, "analytic"

    from .core import fd_gradient

    def U_tilde(q):
        g = np.asarray(U_q(q), dtype=float)
        return float(sep.U(q)) - (h * h / 24.0) * float(g @ m_inv @ g)

    return (lambda q: fd_gradient(U_tilde, q)), "fd"


def rowlands_solve(cfg: RowlandsConfig, s0: PhaseState, h: float, n_steps: int,
                   singular_check: Optional[HamiltonianSystem] = None) -> Trajectory:
    """Processed Stoermer-Verlet run: preprocess, kernel chain, postprocess.

    The kernel is Stoermer-Verlet with the effective potential; the
    preprocessor is applied once to the start state, the kernel iterated, and
    every stored kernel state is postprocessed.  With the cheap corrector the
    interior postprocessing uses centred second differences of neighbouring
    kernel states; the two endpoint states fall back to the closed-form
    corrector inverse, which keeps fourth-order accuracy everywhere.
    """
    if n_steps < 1:
        raise ConfigurationError("n_steps must be >= 1")
    sep = cfg.base
    m_inv, U_q = sep.m_inv, sep.U_q
    uqq = sep.U_qq
    if uqq is None:
        if cfg.corrector == "exact":
            raise ConfigurationError("the exact corrector needs analytic U_qq")
        uqq = lambda q: fd_jacobian(lambda x: np.asarray(U_q(x), dtype=float), q)
    grad_eff, uqq_mode = _effective_gradient(sep, h)
    c = ROWLANDS_CORRECTOR_COEF * h * h

    def pre_exact(q, p):
        return (q + c * (m_inv @ np.asarray(U_q(q), dtype=float)),
                p - c * (np.asarray(uqq(q), dtype=float) @ (m_inv @ p)))

    def post_exact(qb, pb):
        return (qb - c * (m_inv @ np.asarray(U_q(qb), dtype=float)),
                pb + c * (np.asarray(uqq(qb), dtype=float) @ (m_inv @ pb)))

    if cfg.corrector == "cheap":
        shift = 0.5 * h * (m_inv @ s0.p)
        u_plus = np.asarray(U_q(s0.q + shift), dtype=float)
        u_minus = np.asarray(U_q(s0.q - shift), dtype=float)
        qb = s0.q + (h * h / 24.0) * (m_inv @ (u_plus + u_minus))
        pb = s0.p - (h / 12.0) * (u_plus - u_minus)
    else:
        qb, pb = pre_exact(s0.q, s0.p)

    # kernel chain (kept whole: the cheap postprocessor needs neighbours)
    d = s0.q.size
    kq = np.empty((n_steps + 1, d))
    kp = np.empty((n_steps + 1, d))
    kq[0], kp[0] = qb, pb
    q, p = qb.copy(), pb.copy()
    diverged_at = None
    j = 0
    try:
        force = np.asarray(grad_eff(q), dtype=float)
        for j in range(n_steps):
            p_half = p - 0.5 * h * force
            q = q + h * (m_inv @ p_half)
            force = np.asarray(grad_eff(q), dtype=float)
            p = p_half - 0.5 * h * force
            if _diverged_values(singular_check, q, p):
                diverged_at = j
                break
            kq[j + 1], kp[j + 1] = q, p
    except _EVAL_BLOWUPS:
        diverged_at = j

    n_keep = n_steps + 1 if diverged_at is None else diverged_at + 1
    qs = np.empty((n_keep, d))
    ps = np.empty((n_keep, d))
    for j in range(n_keep):
        if cfg.corrector == "cheap" and 0 < j < n_keep - 1:
            qs[j] = kq[j] + (kq[j + 1] - 2.0 * kq[j] + kq[j - 1]) / 12.0
            ps[j] = kp[j] - (kp[j + 1] - 2.0 * kp[j] + kp[j - 1]) / 12.0
        else:
            qs[j], ps[j] = post_exact(kq[j], kp[j])

    times = time_grid(0.0, h, n_steps)[:n_keep]
    meta = {"system": sep.name, "corrector": cfg.corrector, "uqq": uqq_mode}
    return Trajectory(times, qs, ps, h, f"rowlands-{cfg.corrector}",
                      diverged_at=diverged_at, meta=meta)


def _rk4_endpoint(field: Callable, z0: np.ndarray, h: float, n: int,
                  store_every: int = 0, sys=None):
    z = z0.copy()
    d = z0.size // 2
    stored = [z0.copy()] if store_every else None
    sixth = h / 6.0
    for j in range(n):
        try:
            k1 = field(z)
            k2 = field(z + 0.5 * h * k1)
            k3 = field(z + 0.5 * h * k2)
            k4 = field(z + h * k3)
        except _EVAL_BLOWUPS:
            raise NumericError("reference integration hit a singular point")
        z = z + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)) or float(np.max(np.abs(z))) > 1e12 or (
                sys is not None and sys.is_singular(z[:d], z[d:])):
            raise NumericError("reference trajectory diverged")
        if store_every and (j + 1) % store_every == 0:
            stored.append(z.copy())
    return z, stored


def reference_solve(sys, s0, t_max: float, tol_hint: float = 1e-10) -> Trajectory:
    """High-accuracy oracle trajectory on a fixed output grid of 1000 steps.

    Uses the model's closed-form solution when it has one.  Otherwise runs
    classical fourth-order Runge-Kutta on the canonical equations with an
    internal step that is halved (at most 12 times, starting from t_max/1000)
    until another halving moves the endpoint by less than ``tol_hint``
    relative.
    """
    if t_max <= 0.0:
        raise ConfigurationError("t_max must be positive")
    n_out = 1000
    h_out = t_max / n_out
    times = time_grid(0.0, h_out, n_out)

    if isinstance(sys, OdeSystem):
        if sys.closed_form is not None:
            ys = np.stack([np.atleast_1d(sys.closed_form(s0.y, t)) for t in times])
            return Trajectory(times, ys, None, h_out, "analytic",
                              meta={"system": sys.name, "oracle": "closed-form"})
        field = lambda y: np.asarray(sys.f(y), dtype=float)
        z0 = s0.y.copy()
        unpack = lambda z: (z, None)
    else:
        if isinstance(sys, SeparableHamiltonian):
            sys = sys.as_system()
        if sys.closed_form is not None:
            pairs = [sys.closed_form(s0.q, s0.p, t) for t in times]
            qs = np.stack([np.atleast_1d(q) for q, _ in pairs])
            ps = np.stack([np.atleast_1d(p) for _, p in pairs])
            return Trajectory(times, qs, ps, h_out, "analytic",
                              meta={"system": sys.name, "oracle": "closed-form"})
        field = sys.canonical_field
        z0 = s0.z
        d = sys.d
        unpack = lambda z: (z[:d], z[d:])

    check = None if isinstance(sys, OdeSystem) else sys
    n = n_out
    z_prev, _ = _rk4_endpoint(field, z0, t_max / n, n, sys=check)
    for _ in range(12):
        n *= 2
        z_next, _ = _rk4_endpoint(field, z0, t_max / n, n, sys=check)
        scale = max(1.0, float(np.max(np.abs(z_next))))
        if float(np.max(np.abs(z_next - z_prev))) / scale < tol_hint:
            break
        z_prev = z_next
    else:
        raise OraclePrecisionError(
            f"endpoint did not settle to {tol_hint} within 12 halvings"
        )
    _, stored = _rk4_endpoint(field, z0, t_max / n, n, store_every=n // n_out,
                              sys=check)
    rows = np.stack(stored)
    meta = {"system": sys.name, "oracle": "rk4", "h_ref": t_max / n}
    if isinstance(sys, OdeSystem):
        return Trajectory(times, rows, None, h_out, "rk4", meta=meta)
    qs, ps = rows[:, : sys.d], rows[:, sys.d :]
    return Trajectory(times, qs, ps, h_out, "rk4", meta=meta)


def one_step_map(method: str, sys, h: float,
                 cfg: Optional[StepperConfig] = None) -> Callable[[PhaseState], PhaseState]:
    """A single-step map Phi_h as a plain callable on phase states."""
    cfg = cfg or StepperConfig(h=h)
    if method == "symplectic-euler":
        return lambda s: symplectic_euler_step(sys, s, cfg)
    if method == "symplectic-euler-adjoint":
        return lambda s: symplectic_euler_adjoint_step(sys, s, cfg)
    if method == "stoermer-verlet":
        sep = _require_separable(sys)
        return lambda s: stormer_verlet_step(sep, s, h)
    if method == "explicit-euler":
        base = sys.as_system() if isinstance(sys, SeparableHamiltonian) else sys

        def step(s: PhaseState) -> PhaseState:
            z = s.z + h * base.canonical_field(s.z)
            return PhaseState(z[: base.d], z[base.d :])

        return step
    if method.startswith("rowlands"):
        rc = RowlandsConfig(corrector=method.split("-", 1)[1],
                            base=_require_separable(sys))

        def step(s: PhaseState) -> PhaseState:
            return rowlands_solve(rc, s, h, 1).final

        return step
    raise ConfigurationError(f"unknown method {method!r}")


def symplecticity_defect(step: Callable[[PhaseState], PhaseState],
                         sys, s: PhaseState) -> float:
    """Frobenius norm of dPhi' Jinv dPhi - Jinv with a finite-difference dPhi."""
    if s.diverged():
        raise NumericError("cannot differentiate a diverged state")
    d = s.d

    def phi(z: np.ndarray) -> np.ndarray:
        return step(PhaseState(z[:d], z[d:])).z

    dphi = fd_jacobian(phi, s.z)
    eye = np.eye(d)
    zero = np.zeros((d, d))
    j_inv = np.block([[zero, -eye], [eye, zero]])
    return float(np.linalg.norm(dphi.T @ j_inv @ dphi - j_inv))
