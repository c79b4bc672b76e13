import numpy as np

from symcoord.core import PhaseState, fd_jacobian, make_rng, sample_states


def well_conditioned_states(sys, step, n, seed, jac_bound=4.0):
    """Seeded random states at which fd differentiation of the step map is
    trustworthy (moderate flow Jacobian); near coordinate singularities the
    defect measurement would only show finite-difference noise."""
    out = []
    batch = seed
    while len(out) < n:
        batch += 1
        for s in sample_states(sys, 40, seed=batch * 7919):
            dphi = fd_jacobian(lambda z: step(PhaseState(z[: sys.d], z[sys.d:])).z, s.z)
            if np.linalg.norm(dphi) <= jac_bound:
                out.append(s)
                if len(out) == n:
                    break
    return out


def random_affine(d, seed):
    rng = make_rng(seed)
    while True:
        a = rng.normal(size=(d, d))
        if abs(np.linalg.det(a)) > 0.3:
            return a, rng.normal(size=d)
