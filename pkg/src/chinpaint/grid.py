"""Uniform grid with homogeneous Neumann boundary: lumped mass, stiffness
form, and conversion between 8-bit images and [-1, 1] nodal fields.

Nodes are ordered row-major: node (x, y) has index y*nx + x, matching the
pixel layout of Grayscale8Image. The domain is [0, (nx-1)h] x [0, (ny-1)h]
with h = 1/(max(nx, ny) - 1), so the longer image side spans [0, 1].

The stiffness operator is the 5-point Neumann stencil with links parallel to
the boundary carrying weight 1/2. This is exactly the P1 finite element
stiffness matrix on the uniform right triangulation of the rectangle (the
dense assembly in oracle.py cross-checks this), applied matrix-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidGridError, InvalidInputError, InvalidMaskError, ShapeMismatchError
from .images import Grayscale8Image, make_image

__all__ = [
    "GridSpec",
    "ScalarField",
    "FidelityField",
    "build_grid",
    "make_field",
    "make_fidelity",
    "lumped_weights",
    "stiffness_apply",
    "lumped_inner",
    "field_from_image",
    "image_from_field",
]


@dataclass(frozen=True)
class GridSpec:
    nx: int  # node count in x (image width), >= 2
    ny: int  # node count in y (image height), >= 2
    h: float  # grid spacing

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny


@dataclass(frozen=True)
class ScalarField:
    """Nodal values of u or w, row-major, finite."""

    grid: GridSpec
    values: np.ndarray

    def values2d(self) -> np.ndarray:
        return self.values.reshape(self.grid.ny, self.grid.nx)


@dataclass(frozen=True)
class FidelityField:
    """Per-node fidelity weight lambda, each entry 0 (damaged) or alpha."""

    grid: GridSpec
    lam: np.ndarray
    alpha: float

    def damaged(self) -> np.ndarray:
        """Boolean node mask of the damaged region D (lambda == 0)."""
        return self.lam == 0.0


def build_grid(nx: int, ny: int) -> GridSpec:
    """Build the uniform grid for an nx-by-ny node layout.

    Parameters
    ----------
    nx, ny : int
        Node counts in x and y; both must be at least 2.

    Returns
    -------
    GridSpec
        Spacing h = 1/(max(nx, ny) - 1); the longer side spans [0, 1].
    """
    if nx < 2 or ny < 2:
        raise InvalidGridError(f"grid must be at least 2x2, got {nx}x{ny}")
    return GridSpec(int(nx), int(ny), 1.0 / (max(nx, ny) - 1))


def make_field(grid: GridSpec, values) -> ScalarField:
    """Validate shape and finiteness, then wrap values as a ScalarField."""
    arr = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    if arr.size != grid.n_nodes:
        raise ShapeMismatchError(
            f"field has {arr.size} values, grid {grid.nx}x{grid.ny} needs {grid.n_nodes}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("field contains non-finite values")
    return ScalarField(grid, arr)


def make_fidelity(grid: GridSpec, damaged, alpha: float) -> FidelityField:
    """Build lambda = alpha outside the damaged set, 0 inside.

    `damaged` is a boolean node mask (row-major, True = damaged). The damage
    set must be a nonempty proper subset of the nodes.
    """
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    dmg = np.ascontiguousarray(damaged, dtype=bool).reshape(-1)
    if dmg.size != grid.n_nodes:
        raise ShapeMismatchError(
            f"mask has {dmg.size} nodes, grid {grid.nx}x{grid.ny} needs {grid.n_nodes}"
        )
    n_dmg = int(np.count_nonzero(dmg))
    if n_dmg == 0:
        raise InvalidMaskError("damage mask is empty (nothing to inpaint)")
    if n_dmg == dmg.size:
        raise InvalidMaskError("entire image is damaged (no data to keep)")
    lam = np.where(dmg, 0.0, float(alpha))
    return FidelityField(grid, lam, float(alpha))


def lumped_weights(grid: GridSpec) -> np.ndarray:
    """Lumped-mass weight per node: h^2 times 1/4 (corner), 1/2 (edge), 1.

    The weights sum to the domain area (nx-1)(ny-1)h^2.
    """
    cx = np.ones(grid.nx)
    cx[0] = cx[-1] = 0.5
    cy = np.ones(grid.ny)
    cy[0] = cy[-1] = 0.5
    return (grid.h * grid.h) * np.outer(cy, cx).reshape(-1)


def _require_same_grid(grid: GridSpec, *fields):
    for f in fields:
        if f.grid != grid:
            raise ShapeMismatchError(
                f"field on grid {f.grid.nx}x{f.grid.ny} does not live on {grid.nx}x{grid.ny}"
            )


def stiffness_values(nx: int, ny: int, v: np.ndarray) -> np.ndarray:
    """Matrix-free stencil application on a flat row-major value array."""
    v2 = v.reshape(ny, nx)
    out = np.zeros_like(v2)
    # horizontal links, halved on the top and bottom rows
    wh = np.ones((ny, 1))
    wh[0, 0] = wh[-1, 0] = 0.5
    t = wh * (v2[:, 1:] - v2[:, :-1])
    out[:, :-1] -= t
    out[:, 1:] += t
    # vertical links, halved on the left and right columns
    wv = np.ones((1, nx))
    wv[0, 0] = wv[0, -1] = 0.5
    t = wv * (v2[1:, :] - v2[:-1, :])
    out[:-1, :] -= t
    out[1:, :] += t
    return out.reshape(-1)


def stiffness_apply(grid: GridSpec, f: ScalarField) -> ScalarField:
    """Apply the Neumann stiffness operator K to a nodal field.

    Output entry j is sum over links at j of weight*(f_j - f_neighbor), the
    gradient form (grad f, grad phi_j) of linear elements on the uniform
    right triangulation. Row sums vanish, so constants map to zero.
    """
    _require_same_grid(grid, f)
    return ScalarField(grid, stiffness_values(grid.nx, grid.ny, f.values))


def lumped_inner(grid: GridSpec, a: ScalarField, b: ScalarField) -> float:
    """Lumped L2 inner product: sum of weight_j * a_j * b_j."""
    _require_same_grid(grid, a, b)
    w = lumped_weights(grid)
    return float(np.dot(w, a.values * b.values))


def field_from_image(img: Grayscale8Image, grid: GridSpec) -> ScalarField:
    """Map pixels to field values: 0 -> -1, 255 -> +1, linear in between."""
    if (img.width, img.height) != (grid.nx, grid.ny):
        raise ShapeMismatchError(
            f"image {img.width}x{img.height} does not match grid {grid.nx}x{grid.ny}"
        )
    return ScalarField(grid, 2.0 * (img.pixels.astype(np.float64) / 255.0) - 1.0)


def image_from_field(f: ScalarField) -> Grayscale8Image:
    """Map field values back to pixels, clamping to [-1, 1] first.

    Exact inverse of field_from_image on all 256 representable levels.
    """
    v = np.clip(f.values, -1.0, 1.0)
    px = np.rint(255.0 * (v + 1.0) / 2.0).astype(np.uint8)
    return make_image(f.grid.nx, f.grid.ny, px)
