"""Potential laws and the discrete interfacial energy.

Three bulk potentials drive the phase separation:

* double obstacle: (1 - s^2)/2 plus the hard constraint |s| <= 1,
* its Moreau-Yosida regularization with penalty slope 1/delta,
* the smooth quartic double well (s^2 - 1)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConstraintViolationError, InvalidParameterError
from .grid import GridSpec, ScalarField, lumped_weights, stiffness_values

__all__ = [
    "PotentialSpec",
    "OBSTACLE",
    "QUARTIC",
    "obstacle",
    "moreau_yosida",
    "quartic",
    "beta_delta",
    "beta_hat_delta",
    "quartic_prime",
    "discrete_energy",
    "FEASIBILITY_SLACK",
]

# nodes may exceed |u| = 1 by at most this much before the obstacle
# energy is considered undefined
FEASIBILITY_SLACK = 1e-12


@dataclass(frozen=True)
class PotentialSpec:
    kind: str  # "obstacle" | "moreau_yosida" | "quartic"
    delta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("obstacle", "moreau_yosida", "quartic"):
            raise InvalidParameterError(f"unknown potential kind {self.kind!r}")
        if self.kind == "moreau_yosida":
            if self.delta is None or not self.delta > 0:
                raise InvalidParameterError(
                    f"moreau_yosida needs delta > 0, got {self.delta}"
                )
        elif self.delta is not None:
            raise InvalidParameterError(f"{self.kind} takes no delta")


def obstacle() -> PotentialSpec:
    return PotentialSpec("obstacle")


def moreau_yosida(delta: float) -> PotentialSpec:
    return PotentialSpec("moreau_yosida", float(delta))


def quartic() -> PotentialSpec:
    return PotentialSpec("quartic")


OBSTACLE = obstacle()
QUARTIC = quartic()


def _check_delta(delta):
    if not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")


def beta_delta(s, delta):
    """Penalty slope of the regularized obstacle: (1/delta)(max(0, s-1) + min(0, s+1)).

    Zero on [-1, 1], monotone nondecreasing, piecewise linear. Accepts
    scalars or arrays.
    """
    _check_delta(delta)
    s = np.asarray(s, dtype=np.float64)
    out = (np.maximum(s - 1.0, 0.0) + np.minimum(s + 1.0, 0.0)) / delta
    return out if out.ndim else float(out)


def beta_hat_delta(s, delta):
    """Antiderivative of beta_delta: quadratic outside [-1, 1], zero inside."""
    _check_delta(delta)
    s = np.asarray(s, dtype=np.float64)
    over = np.maximum(s - 1.0, 0.0)
    under = np.minimum(s + 1.0, 0.0)
    out = (over * over + under * under) / (2.0 * delta)
    return out if out.ndim else float(out)


def quartic_prime(s):
    """Derivative of the quartic double well: 4 s (s^2 - 1)."""
    s = np.asarray(s, dtype=np.float64)
    out = 4.0 * s * (s * s - 1.0)
    return out if out.ndim else float(out)


def _energy_arrays(nx, ny, m, v, eps, pot: PotentialSpec) -> float:
    """Array-level energy shared with the evolution loop (no validation)."""
    ku = stiffness_values(nx, ny, v)
    kinetic = 0.5 * eps * float(np.dot(v, ku))
    if pot.kind == "obstacle":
        if np.max(np.abs(v)) > 1.0 + FEASIBILITY_SLACK:
            raise ConstraintViolationError(
                f"obstacle energy undefined: max|u| = {np.max(np.abs(v))!r} > 1"
            )
        bulk = 0.5 * (1.0 - v * v)
    elif pot.kind == "moreau_yosida":
        bulk = beta_hat_delta(v, pot.delta) + 0.5 * (1.0 - v * v)
    else:
        sq = v * v - 1.0
        bulk = sq * sq
    return kinetic + float(np.dot(m, bulk)) / eps


def discrete_energy(grid: GridSpec, u: ScalarField, eps: float, pot: PotentialSpec) -> float:
    """Ginzburg-Landau energy (eps/2)(u, Ku) + (1/eps) * lumped integral of W(u).

    W is the bulk potential selected by `pot`. For the obstacle kind the
    energy is defined only on the feasible set; any node with
    |u_j| > 1 + 1e-12 raises ConstraintViolationError because the true
    obstacle energy is infinite there.
    """
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    if u.grid != grid:
        from .errors import ShapeMismatchError

        raise ShapeMismatchError("energy field does not live on the given grid")
    return _energy_arrays(grid.nx, grid.ny, lumped_weights(grid), u.values, eps, pot)
