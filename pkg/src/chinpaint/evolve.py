"""Time-stepping driver: run one stage to its stopping criterion and chain
the two-stage edge-sharpening schedule.

A stage iterates the per-step solver until the squared lumped L2 distance
between consecutive iterates, sum_j m_j (u_n - u_{n-1})_j^2, drops to the
stage tolerance, or until max_steps. The second stage continues from the
first stage's output with a smaller eps and a larger fidelity weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .grid import FidelityField, GridSpec, ScalarField, lumped_weights, make_fidelity
from .potentials import PotentialSpec, _energy_arrays
from .steps import (
    DIRECT_MIN_NODES,
    StepProblem,
    _solve_obstacle,
    _solve_obstacle_direct,
    _spectral_start,
    step_moreau_yosida,
    step_quartic,
)

__all__ = [
    "StageParams",
    "TwoStageConfig",
    "RunReport",
    "run_stage",
    "run_two_stage",
    "DEFAULT_INNER_TOL",
    "DEFAULT_MAX_STEPS",
]

DEFAULT_INNER_TOL = 1e-9
DEFAULT_MAX_STEPS = 200_000


@dataclass(frozen=True)
class StageParams:
    eps: float
    alpha: float
    tau: float
    stop_tol: float
    max_steps: int

    def __post_init__(self):
        for name in ("eps", "alpha", "tau", "stop_tol"):
            v = getattr(self, name)
            if not v > 0:
                raise InvalidParameterError(f"{name} must be positive, got {v}")
        if self.max_steps < 1:
            raise InvalidParameterError(f"max_steps must be at least 1, got {self.max_steps}")


@dataclass(frozen=True)
class TwoStageConfig:
    eps1: float
    eps2: float
    alpha: float
    alpha2: float
    tau: float
    tol1: float
    tol2: float
    max_steps: int
    potential: PotentialSpec

    def stage1(self) -> StageParams:
        return StageParams(self.eps1, self.alpha, self.tau, self.tol1, self.max_steps)

    def stage2(self) -> StageParams:
        return StageParams(self.eps2, self.alpha2, self.tau, self.tol2, self.max_steps)


@dataclass
class RunReport:
    steps_taken: int
    stop_value_final: float
    energy_trace: np.ndarray
    mass_trace: np.ndarray
    hit_max_steps: bool
    flagged_steps: list = field(default_factory=list)
    max_abs_u: float = 0.0
    # per-step |sum_j m_j (u_n - u_{n-1})_j - tau * sum_j m_j s_j|, the
    # mass-fidelity identity defect
    mass_defect_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _run_stage_arrays(
    grid: GridSpec,
    u0: np.ndarray,
    image: np.ndarray,
    lam: np.ndarray,
    stage: StageParams,
    pot: PotentialSpec,
    inner_tol: float,
    w0: np.ndarray | None,
    trace=None,
    index_offset: int = 0,
    solver: str = "auto",
):
    """Shared stage loop. Returns (u, w, RunReport)."""
    if solver not in ("auto", "sweep", "active_set"):
        raise InvalidParameterError(
            f"solver must be 'auto', 'sweep', or 'active_set', got {solver!r}"
        )
    nx, ny = grid.nx, grid.ny
    n = grid.n_nodes
    m = lumped_weights(grid)
    max_inner = 10 * n
    u = u0.copy()
    w = np.zeros(n) if w0 is None else w0.copy()
    fid = FidelityField(grid, lam, float(np.max(lam)))
    use_direct = solver == "active_set" or (solver == "auto" and n >= DIRECT_MIN_NODES)

    energies = []
    masses = []
    defects = []
    flagged = []
    max_abs = float(np.max(np.abs(u)))
    stop_val = np.inf
    hit_max = True
    for step in range(stage.max_steps):
        u_prev = u
        rhs_fid = m * lam * (image - u_prev)
        if pot.kind == "obstacle":
            if step == 0 and w0 is None:
                # cosine-basis starting guess; later steps warm start from
                # the previous iterate, which changes only O(tau) per step
                u_start, w = _spectral_start(
                    nx, ny, grid.h, m, u_prev, rhs_fid, stage.eps, stage.tau
                )
            else:
                u_start = None
            solve = _solve_obstacle_direct if use_direct else _solve_obstacle
            u, w, _iters, _resid, ok = solve(
                nx, ny, u_prev, rhs_fid, m, stage.eps, stage.tau, inner_tol,
                max_inner, w, u_start
            )
        else:
            problem = StepProblem(
                grid,
                ScalarField(grid, u_prev),
                fid,
                ScalarField(grid, image),
                stage.eps,
                stage.tau,
                inner_tol,
                max_inner,
            )
            if pot.kind == "moreau_yosida":
                r = step_moreau_yosida(problem, pot.delta)
            else:
                r = step_quartic(problem, w_start=ScalarField(grid, w))
            u, w, ok = r.u_next.values, r.w_next.values, r.converged
        if not ok:
            flagged.append(step)
        du = u - u_prev
        stop_val = float(np.dot(m, du * du))
        energies.append(_energy_arrays(nx, ny, m, u, stage.eps, pot))
        masses.append(float(np.dot(m, u)))
        defects.append(abs(float(np.dot(m, du)) - stage.tau * float(np.sum(rhs_fid))))
        max_abs = max(max_abs, float(np.max(np.abs(u))))
        if trace is not None:
            trace.write(
                f"{index_offset + step}\t{stop_val:.12e}\t{energies[-1]:.12e}\t{masses[-1]:.12e}\n"
            )
        if stop_val <= stage.stop_tol:
            hit_max = False
            break
    report = RunReport(
        steps_taken=len(energies),
        stop_value_final=stop_val,
        energy_trace=np.asarray(energies),
        mass_trace=np.asarray(masses),
        hit_max_steps=hit_max,
        flagged_steps=flagged,
        max_abs_u=max_abs,
        mass_defect_trace=np.asarray(defects),
    )
    return u, w, report


def run_stage(
    u0: ScalarField,
    image: ScalarField,
    mask: FidelityField,
    stage: StageParams,
    pot: PotentialSpec,
    inner_tol: float = DEFAULT_INNER_TOL,
    trace=None,
    solver: str = "auto",
) -> tuple[ScalarField, RunReport]:
    """Iterate the per-step solver until the stage stopping criterion.

    Parameters
    ----------
    u0 : ScalarField
        Initial iterate; must be feasible for the obstacle potential.
    image : ScalarField
        Fidelity data I on the same grid.
    mask : FidelityField
        Per-node fidelity weight (0 on the damaged region).
    stage : StageParams
    pot : PotentialSpec
    inner_tol : float, optional
        Tolerance handed to the per-step solver.
    trace : file-like, optional
        When given, one line per step is written: step index, stop value,
        energy, mass, tab-separated.
    solver : str, optional
        Obstacle-step solver choice: "sweep" forces projected Gauss-Seidel,
        "active_set" forces the direct primal-dual solver, "auto" (default)
        picks by grid size. Both solve the same inequality system, whose
        solution is unique. Ignored for the other potentials.

    Returns
    -------
    (ScalarField, RunReport)
        Final iterate and diagnostics. Non-convergence of inner solves is
        recorded in the report, never raised.
    """
    grid = u0.grid
    u, _w, report = _run_stage_arrays(
        grid, u0.values, image.values, mask.lam, stage, pot, inner_tol, None, trace,
        solver=solver,
    )
    return ScalarField(grid, u), report


def _as_damage_mask(grid: GridSpec, mask_region) -> np.ndarray:
    arr = np.asarray(mask_region)
    if arr.dtype == bool:
        return arr.reshape(-1)
    dmg = np.zeros(grid.n_nodes, dtype=bool)
    dmg[arr.reshape(-1).astype(np.int64)] = True
    return dmg


def run_two_stage(
    u0: ScalarField,
    image: ScalarField,
    mask_region,
    params: TwoStageConfig,
    inner_tol: float = DEFAULT_INNER_TOL,
    trace=None,
    solver: str = "auto",
) -> tuple[ScalarField, RunReport, RunReport]:
    """Run stage one with (eps1, alpha), then stage two from its output with
    (eps2, alpha2).

    mask_region is the damaged node set, given either as a boolean node mask
    or as an array of node indices. Returns the final field and both stage
    reports. solver is passed through to each stage (see run_stage).
    """
    grid = u0.grid
    dmg = _as_damage_mask(grid, mask_region)
    fid1 = make_fidelity(grid, dmg, params.alpha)
    u1, w1, rep1 = _run_stage_arrays(
        grid, u0.values, image.values, fid1.lam, params.stage1(), params.potential,
        inner_tol, None, trace, 0, solver,
    )
    fid2 = make_fidelity(grid, dmg, params.alpha2)
    # stage 2 re-derives its starting chemical potential: the eps jump
    # rescales w globally, so stage 1's w is a poor warm start here
    w_carry = w1 if params.potential.kind == "quartic" else None
    u2, _w2, rep2 = _run_stage_arrays(
        grid, u1, image.values, fid2.lam, params.stage2(), params.potential,
        inner_tol, w_carry, trace, rep1.steps_taken, solver,
    )
    return ScalarField(grid, u2), rep1, rep2
