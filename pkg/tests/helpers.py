"""Shared fixtures for the test suite: random step problems and the synthetic
images the regression tests run on."""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

from chinpaint.grid import ScalarField, build_grid, make_fidelity
from chinpaint.steps import step_problem


def feasible_step_problem(nx, ny, seed, tol=1e-12, cap=None):
    """Random single-step problem whose pinned total mass is attainable.

    u_prev stays in [-0.7, 0.7] and tau*alpha <= 0.1, so the explicit
    fidelity term can never push the total mass outside [-sum(m), sum(m)].
    """
    rng = np.random.default_rng(seed)
    g = build_grid(nx, ny)
    n = g.n_nodes
    u_prev = rng.uniform(-0.7, 0.7, n)
    image = rng.choice([-1.0, 1.0], n)
    dmg = rng.random(n) < 0.3
    if dmg.all():
        dmg[0] = False
    if not dmg.any():
        dmg[0] = True
    fid = make_fidelity(g, dmg, rng.uniform(10.0, 100.0))
    return step_problem(
        g,
        ScalarField(g, u_prev),
        fid,
        ScalarField(g, image),
        rng.uniform(0.02, 0.3),
        1e-3,
        tol,
        max_inner_iters=cap,
    )


def smooth_field(nx, ny, rng, amp):
    """Random smooth field with amplitude amp, built from damped cosine modes."""
    z = rng.standard_normal((ny, nx))
    ky = np.arange(ny)[:, None]
    kx = np.arange(nx)[None, :]
    zh = dctn(z, type=1) / (1.0 + 0.3 * (kx**2 + ky**2))
    f = idctn(zh, type=1).reshape(-1)
    return amp * f / np.max(np.abs(f))


def contact_step_problem(nx, ny, seed, tol=1e-12, cap=None):
    """Step problem from a smooth clipped field, so the solution tends to
    keep genuine contact sets at +/-1."""
    rng = np.random.default_rng(seed)
    g = build_grid(nx, ny)
    u_prev = np.clip(smooth_field(nx, ny, rng, 1.4), -1.0, 1.0)
    image = np.sign(smooth_field(nx, ny, rng, 1.0) + 1e-9)
    dmg = rng.random(g.n_nodes) < 0.3
    if dmg.all():
        dmg[0] = False
    if not dmg.any():
        dmg[0] = True
    fid = make_fidelity(g, dmg, rng.uniform(10.0, 100.0))
    return step_problem(
        g,
        ScalarField(g, u_prev),
        fid,
        ScalarField(g, image),
        rng.uniform(0.05, 0.2),
        1e-3,
        tol,
        max_inner_iters=50 * g.n_nodes if cap is None else cap,
    )


def stripe_fixture(side):
    """Vertical two-phase stripe with a 20%-area damage square straddling the
    right stripe edge. Returns (image, damage) as flat (side*side,) arrays,
    image in {-1, +1}, damage boolean."""
    nx = ny = side
    x = np.arange(nx)
    stripe_w = side // 4
    left = side // 2 - stripe_w // 2
    right = left + stripe_w  # first column outside the stripe
    col_in = (x >= left) & (x < right)
    image = np.broadcast_to(np.where(col_in[None, :], 1.0, -1.0), (ny, nx)).copy()
    s = int(round(side * np.sqrt(0.2)))
    cx, cy = right, ny // 2
    x0 = max(0, cx - s // 2)
    y0 = max(0, cy - s // 2)
    dmg = np.zeros((ny, nx), dtype=bool)
    dmg[y0 : min(ny, y0 + s), x0 : min(nx, x0 + s)] = True
    return image.reshape(-1), dmg.reshape(-1)


def stripe_edge_band(side, width=2):
    """Boolean mask of nodes within `width` pixels of either stripe edge."""
    nx = ny = side
    x = np.arange(nx)
    stripe_w = side // 4
    left = side // 2 - stripe_w // 2
    right = left + stripe_w
    near = np.zeros(nx, dtype=bool)
    for edge in (left, right):
        near |= (np.abs(x - edge) <= width) | (np.abs(x - (edge - 1)) <= width)
    return np.broadcast_to(near[None, :], (ny, nx)).reshape(-1).copy()


def quadrant_image(side):
    """Four bulk regions at gray levels 0/85/170/255 (every bit plane of these
    levels is a single straight edge) with a 20%-area centered damage square.
    Returns (image, mask) as uint8 (side, side) arrays, mask 255 = damaged."""
    yy, xx = np.mgrid[0:side, 0:side]
    img = np.zeros((side, side), dtype=np.uint8)
    img[(yy < side // 2) & (xx >= side // 2)] = 85
    img[(yy >= side // 2) & (xx < side // 2)] = 170
    img[(yy >= side // 2) & (xx >= side // 2)] = 255
    s = int(round(side * np.sqrt(0.2)))
    x0 = side // 2 - s // 2
    y0 = side // 2 - s // 2
    mask = np.zeros((side, side), dtype=np.uint8)
    mask[y0 : y0 + s, x0 : x0 + s] = 255
    return img, mask
