"""Brute-force verification routines, independent of the production solvers.

The stiffness matrix is assembled element by element from the P1 basis on
the uniform right triangulation (no stencil shortcuts), the per-step
obstacle problem is solved by exhaustive active-set enumeration on tiny
grids or by a restarted dense active-set iteration above that, and energy
gradients are checked against finite differences. Everything here trades
speed for transparency; it exists to certify the fast paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, OracleFailure
from .grid import FidelityField, GridSpec, ScalarField
from .potentials import beta_delta, beta_hat_delta
from .steps import StepProblem

__all__ = [
    "DenseStepSystem",
    "dense_stiffness",
    "dense_lumped_mass",
    "build_dense_system",
    "oracle_step_dense",
    "check_stationarity",
    "energy_gradient_check",
    "format_report",
]

ENUMERATION_NODE_CAP = 10  # 3^10 assignments is the exhaustive ceiling
ORACLE_NODE_CAP = 64 * 64
PDAS_RESTARTS = 50
_SIGN_FUZZ = 1e-9


def dense_stiffness(grid: GridSpec) -> np.ndarray:
    """Assemble the P1 stiffness matrix triangle by triangle.

    Each grid cell is split along the (i, j) -> (i+1, j+1) diagonal. The
    element matrix comes from the standard coordinate formula, so this
    assembly shares nothing with the stencil implementation it checks.
    """
    nx, ny, h = grid.nx, grid.ny, grid.h
    n = nx * ny
    K = np.zeros((n, n))

    def node(ix, iy):
        return iy * nx + ix

    for iy in range(ny - 1):
        for ix in range(nx - 1):
            p00 = (ix * h, iy * h)
            p10 = ((ix + 1) * h, iy * h)
            p01 = (ix * h, (iy + 1) * h)
            p11 = ((ix + 1) * h, (iy + 1) * h)
            tris = [
                ((node(ix, iy), node(ix + 1, iy), node(ix + 1, iy + 1)), (p00, p10, p11)),
                ((node(ix, iy), node(ix + 1, iy + 1), node(ix, iy + 1)), (p00, p11, p01)),
            ]
            for ids, pts in tris:
                (x0, y0), (x1, y1), (x2, y2) = pts
                area = 0.5 * abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
                bvec = np.array([y1 - y2, y2 - y0, y0 - y1])
                cvec = np.array([x2 - x1, x0 - x2, x1 - x0])
                for a in range(3):
                    for b in range(3):
                        K[ids[a], ids[b]] += (bvec[a] * bvec[b] + cvec[a] * cvec[b]) / (4.0 * area)
    return K


def dense_lumped_mass(grid: GridSpec) -> np.ndarray:
    """Lumped-mass diagonal written out longhand: h^2 * cx * cy per node."""
    nx, ny, h = grid.nx, grid.ny, grid.h
    m = np.empty(nx * ny)
    for iy in range(ny):
        cy = 0.5 if iy in (0, ny - 1) else 1.0
        for ix in range(nx):
            cx = 0.5 if ix in (0, nx - 1) else 1.0
            m[iy * nx + ix] = h * h * cx * cy
    return m


@dataclass(frozen=True)
class DenseStepSystem:
    """Dense realization of one time step's KKT data."""

    mass: np.ndarray  # diagonal entries m_j
    stiffness: np.ndarray  # dense symmetric K
    rhs_mass: np.ndarray  # m_j/tau * u_prev_j + m_j lam_j (I_j - u_prev_j)
    u_prev: np.ndarray
    eps: float
    tau: float


def build_dense_system(p: StepProblem) -> DenseStepSystem:
    if p.grid.n_nodes > ORACLE_NODE_CAP:
        raise InvalidInputError(
            f"oracle capped at {ORACLE_NODE_CAP} nodes, got {p.grid.n_nodes}"
        )
    m = dense_lumped_mass(p.grid)
    K = dense_stiffness(p.grid)
    u_prev = p.u_prev.values
    rhs = (m / p.tau) * u_prev + m * p.fidelity.lam * (p.image_field.values - u_prev)
    return DenseStepSystem(m, K, rhs, u_prev.copy(), p.eps, p.tau)


def _dual_values(sys: DenseStepSystem, u, w):
    """g_j = eps (K u)_j - m_j (w_j + u_prev_j / eps); zero at free nodes."""
    return sys.eps * (sys.stiffness @ u) - sys.mass * (w + sys.u_prev / sys.eps)


def _solve_for_assignment(sys: DenseStepSystem, state: np.ndarray):
    """Solve the KKT system for a fixed assignment.

    state holds -1 (clamped low), 0 (free), +1 (clamped high) per node.
    Unknowns are u at free nodes plus w everywhere. Returns (u, w) or None
    when the linear system is singular.
    """
    n = sys.mass.size
    free = np.flatnonzero(state == 0)
    nf = free.size
    m, K, eps, tau = sys.mass, sys.stiffness, sys.eps, sys.tau
    u_fixed = state.astype(np.float64)

    if nf == 0:
        # all nodes clamped: the mass rows alone must determine w (up to a
        # constant fixed afterwards by the dual sign conditions)
        rhs = sys.rhs_mass - (m / tau) * u_fixed
        w, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if np.max(np.abs(K @ w - rhs)) > 1e-9 * max(1.0, np.max(np.abs(rhs))):
            return None
        g = _dual_values(sys, u_fixed, w)
        # shifting w by c shifts g by -m*c; pick c so the signs work
        lo, hi = -np.inf, np.inf
        for j in range(n):
            bound = g[j] / m[j]
            if state[j] > 0:
                lo = max(lo, bound)  # need g_j - m_j c <= 0
            else:
                hi = min(hi, bound)  # need g_j - m_j c >= 0
        if lo > hi + _SIGN_FUZZ:
            return None
        return u_fixed, w + float(np.clip(0.0, lo, hi))

    # unknown vector: [u_free, w]
    nu = nf + n
    A = np.zeros((nu, nu))
    b = np.zeros(nu)
    # mass rows, one per node: (m/tau) u + K w = rhs_mass
    A[:n, nf:] = K
    A[free, np.arange(nf)] = m[free] / tau
    b[:n] = sys.rhs_mass - (m / tau) * u_fixed
    # free-node flux rows: eps (K u)_j - m_j w_j = m_j u_prev_j / eps
    A[n:, :nf] = eps * K[np.ix_(free, free)]
    fixed_cols = np.flatnonzero(state != 0)
    b[n:] = (m[free] / eps) * sys.u_prev[free] - eps * (
        K[np.ix_(free, fixed_cols)] @ u_fixed[fixed_cols]
    )
    A[n + np.arange(nf), nf + free] = -m[free]
    try:
        z = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(z)):
        return None
    u = u_fixed.copy()
    u[free] = z[:nf]
    return u, z[nf:]


def _assignment_consistent(sys: DenseStepSystem, state, u, w):
    """Primal feasibility plus dual sign check for a candidate solution."""
    free = state == 0
    if np.any(np.abs(u[free]) > 1.0 + _SIGN_FUZZ):
        return False
    g = _dual_values(sys, u, w)
    if np.any(g[state == 1] > _SIGN_FUZZ):
        return False
    if np.any(g[state == -1] < -_SIGN_FUZZ):
        return False
    return True


def _enumerate_step(sys: DenseStepSystem):
    """Try all 3^n clamp assignments; collect every consistent solution."""
    n = sys.mass.size
    hits = []
    for combo in product((-1, 0, 1), repeat=n):
        state = np.array(combo, dtype=np.int8)
        sol = _solve_for_assignment(sys, state)
        if sol is None:
            continue
        u, w = sol
        if _assignment_consistent(sys, state, u, w):
            hits.append((state, u, w))
    return hits


def _pdas_dense(sys: DenseStepSystem, state0: np.ndarray, max_iters: int = 200):
    """Dense active-set iteration from a starting assignment."""
    n = sys.mass.size
    state = state0.copy()
    seen = set()
    for _ in range(max_iters):
        key = state.tobytes()
        if key in seen:
            return None
        seen.add(key)
        sol = _solve_for_assignment(sys, state)
        if sol is None:
            return None
        u, w = sol
        g = _dual_values(sys, u, w)
        new_state = np.zeros(n, dtype=np.int8)
        # stay active while the dual sign is right; activate on violation
        new_state[(state == 1) & (g <= 0.0)] = 1
        new_state[(state == -1) & (g >= 0.0)] = -1
        new_state[(state != 1) & (u > 1.0)] = 1
        new_state[(state != -1) & (u < -1.0)] = -1
        if np.array_equal(new_state, state):
            if _assignment_consistent(sys, state, u, w):
                return state, u, w
            return None
        state = new_state
    return None


def oracle_step_dense(p: StepProblem) -> tuple[ScalarField, ScalarField]:
    """Solve one obstacle step by brute force.

    Grids with at most 10 nodes are solved by exhaustive enumeration of all
    3^n clamp assignments (every consistent assignment must agree on u, or
    the problem assembly is broken). Larger grids up to 64x64 use the dense
    active-set iteration with randomized restarts.

    Raises
    ------
    OracleFailure
        When no consistent assignment exists (enumeration) or no restart
        converges (iteration).
    """
    sys = build_dense_system(p)
    n = sys.mass.size
    grid = p.grid
    # same attainability check as the production step: the summed mass rows
    # fix the new total mass, which must stay within [-sum(m), sum(m)]
    target = float(np.sum(sys.rhs_mass)) * p.tau
    total = float(np.sum(sys.mass))
    if abs(target) > total * (1.0 + 1e-12):
        raise InvalidParameterError(
            f"step infeasible: target total mass {target:.6g} exceeds |{total:.6g}|"
        )
    if n <= ENUMERATION_NODE_CAP:
        hits = _enumerate_step(sys)
        if not hits:
            raise OracleFailure("no consistent active set found by enumeration")
        _, u0, w0 = hits[0]
        for _, u, _w in hits[1:]:
            if np.max(np.abs(u - u0)) > 1e-9:
                raise OracleFailure("enumeration found conflicting primal solutions")
        return ScalarField(grid, u0), ScalarField(grid, w0)

    # restart 0 starts from the unconstrained guess, the rest are random
    starts = [np.zeros(n, dtype=np.int8)]
    rng = np.random.default_rng(202_402)
    for _ in range(PDAS_RESTARTS - 1):
        starts.append(rng.integers(-1, 2, size=n).astype(np.int8))
    for state0 in starts:
        out = _pdas_dense(sys, state0)
        if out is not None:
            _, u, w = out
            return ScalarField(grid, u), ScalarField(grid, w)
    raise OracleFailure(f"dense active-set iteration failed after {PDAS_RESTARTS} restarts")


def check_stationarity(u: ScalarField, image: ScalarField, fid: FidelityField) -> float:
    """Mean fidelity defect over the undamaged region.

    Returns |sum_{lam>0} m_j (I_j - u_j)| / sum_{lam>0} m_j, which tends to
    zero at stationary points of the damped flow.
    """
    grid = u.grid
    keep = fid.lam > 0
    if not np.any(keep):
        raise InvalidInputError("no undamaged nodes; stationarity defect undefined")
    m = dense_lumped_mass(grid)
    num = abs(float(np.sum(m[keep] * (image.values[keep] - u.values[keep]))))
    den = float(np.sum(m[keep]))
    return num / den


def _energy_my(grid: GridSpec, K: np.ndarray, m: np.ndarray, v: np.ndarray, eps, delta):
    bulk = beta_hat_delta(v, delta) + 0.5 * (1.0 - v * v)
    return 0.5 * eps * float(v @ (K @ v)) + float(np.dot(m, bulk)) / eps


KINK_WINDOW = 1e-3
FD_STEP = 1e-6


def energy_gradient_check(grid: GridSpec, u: ScalarField, eps: float, delta: float) -> float:
    """Max discrepancy between the analytic energy gradient and differences.

    The analytic nodal gradient of the regularized energy is
    eps (K u)_j + (m_j/eps)(beta_delta(u_j) - u_j). Central differences with
    step 1e-6 are used away from the kinks at +-1; within 1e-3 of a kink a
    one-sided second-order difference pointing away from it is used instead.
    """
    K = dense_stiffness(grid)
    m = dense_lumped_mass(grid)
    v = u.values.copy()
    analytic = eps * (K @ v) + (m / eps) * (np.asarray(beta_delta(v, delta)) - v)

    def energy_at(j, val):
        old = v[j]
        v[j] = val
        e = _energy_my(grid, K, m, v, eps, delta)
        v[j] = old
        return e

    worst = 0.0
    e = FD_STEP
    for j in range(v.size):
        x = v[j]
        near_upper = abs(x - 1.0) < KINK_WINDOW
        near_lower = abs(x + 1.0) < KINK_WINDOW
        if near_upper or near_lower:
            kink = 1.0 if near_upper else -1.0
            sgn = 1.0 if x >= kink else -1.0  # step away from the kink
            fd = sgn * (
                -3.0 * energy_at(j, x)
                + 4.0 * energy_at(j, x + sgn * e)
                - energy_at(j, x + 2.0 * sgn * e)
            ) / (2.0 * e)
        else:
            fd = (energy_at(j, x + e) - energy_at(j, x - e)) / (2.0 * e)
        worst = max(worst, abs(fd - analytic[j]))
    return worst


def format_report(entries) -> str:
    """Plain-text verification report: one PASS/FAIL line per entry.

    entries holds (name, passed, detail) triples.
    """
    lines = []
    for name, passed, detail in entries:
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return "\n".join(lines) + "\n"
