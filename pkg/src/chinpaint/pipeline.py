"""End-to-end inpainting: binary images directly, grayscale via bitwise
channel decomposition, per-channel runs, projection, and reassembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError, InvalidMaskError, InvalidParameterError, ShapeMismatchError
from .evolve import RunReport, TwoStageConfig, run_two_stage
from .grid import ScalarField, build_grid, field_from_image, image_from_field, make_image
from .images import Grayscale8Image
from .potentials import PotentialSpec

__all__ = [
    "InpaintJob",
    "InpaintResult",
    "project_binary",
    "bit_split",
    "bit_assemble",
    "inpaint_binary",
    "inpaint_grayscale",
    "error_map",
]


@dataclass(frozen=True)
class InpaintJob:
    image: Grayscale8Image
    mask: Grayscale8Image  # pixel >= 128 marks a damaged node
    mode: str  # "binary" | "grayscale"
    potential: PotentialSpec
    schedule: TwoStageConfig
    k_channels: int = 8

    def __post_init__(self):
        if self.mode not in ("binary", "grayscale"):
            raise InvalidParameterError(f"unknown mode {self.mode!r}")
        if (self.image.width, self.image.height) != (self.mask.width, self.mask.height):
            raise ShapeMismatchError(
                f"mask {self.mask.width}x{self.mask.height} does not match "
                f"image {self.image.width}x{self.image.height}"
            )
        if self.mode == "grayscale" and not 1 <= self.k_channels <= 8:
            raise InvalidParameterError(
                f"k_channels must be in 1..8, got {self.k_channels}"
            )


@dataclass
class InpaintResult:
    channels: list  # final raw ScalarField per channel
    projected_image: Grayscale8Image
    error_map: Grayscale8Image
    reports: list  # (stage1, stage2) RunReport pair per channel
    warnings: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return not any(r1.hit_max_steps or r2.hit_max_steps for r1, r2 in self.reports)


def project_binary(f: ScalarField) -> ScalarField:
    """Pointwise projection onto the binary states: +1 where f >= 0, else -1."""
    return ScalarField(f.grid, np.where(f.values >= 0.0, 1.0, -1.0))


def bit_split(img: Grayscale8Image, k: int) -> list[ScalarField]:
    """Split into the K most significant bit planes as +-1 fields.

    Channel 1 carries the most significant bit; bit 1 maps to +1 and
    bit 0 to -1.
    """
    if not 1 <= k <= 8:
        raise InvalidParameterError(f"channel count must be in 1..8, got {k}")
    grid = build_grid(img.width, img.height)
    px = img.pixels
    out = []
    for ch in range(1, k + 1):
        bit = (px >> (8 - ch)) & 1
        out.append(ScalarField(grid, 2.0 * bit.astype(np.float64) - 1.0))
    return out


def bit_assemble(channels: list[ScalarField]) -> Grayscale8Image:
    """Reassemble binary channel fields into an 8-bit image.

    Channels must be strictly +-1 valued (project first). For K = 8 the
    byte is rebuilt exactly, inverting bit_split; for K < 8 the K-bit value
    q is rescaled to round(q * 255 / (2^K - 1)) so that all-ones maps to
    255 and a single binary channel reproduces the {0, 255} palette.
    """
    k = len(channels)
    if not 1 <= k <= 8:
        raise InvalidParameterError(f"channel count must be in 1..8, got {k}")
    grid = channels[0].grid
    q = np.zeros(grid.n_nodes, dtype=np.int64)
    for ch, f in enumerate(channels, start=1):
        if f.grid != grid:
            raise ShapeMismatchError("channels live on different grids")
        v = f.values
        if not np.all((v == 1.0) | (v == -1.0)):
            raise InvalidInputError(
                f"channel {ch} is not binary valued; apply project_binary first"
            )
        q += (v == 1.0).astype(np.int64) << (k - ch)
    px = np.rint(q * (255.0 / ((1 << k) - 1))).astype(np.uint8)
    return make_image(grid.nx, grid.ny, px)


def error_map(original: Grayscale8Image, result: Grayscale8Image) -> Grayscale8Image:
    """Pixelwise 8-bit absolute difference |original - result|."""
    if (original.width, original.height) != (result.width, result.height):
        raise ShapeMismatchError(
            f"cannot diff {original.width}x{original.height} against "
            f"{result.width}x{result.height}"
        )
    a = original.pixels.astype(np.int16)
    b = result.pixels.astype(np.int16)
    return make_image(original.width, original.height, np.abs(a - b).astype(np.uint8))


def _damage_mask(mask: Grayscale8Image) -> np.ndarray:
    dmg = mask.pixels >= 128
    n_dmg = int(np.count_nonzero(dmg))
    if n_dmg == 0:
        raise InvalidMaskError("damage mask is empty (nothing to inpaint)")
    if n_dmg == dmg.size:
        raise InvalidMaskError("entire image is damaged (no data to keep)")
    return dmg


def _inpaint_channel(channel: ScalarField, dmg: np.ndarray, job: InpaintJob, trace=None):
    """Two-stage run of one +-1 channel with u0 = I outside D, 0 inside."""
    u0 = ScalarField(channel.grid, np.where(dmg, 0.0, channel.values))
    return run_two_stage(u0, channel, dmg, job.schedule, trace=trace)


def inpaint_binary(job: InpaintJob, trace=None) -> InpaintResult:
    """Inpaint a binary ({0, 255}-valued) image.

    Off-palette pixels are clamped to the nearest of {0, 255} and a warning
    is recorded on the result. The projected output is again binary.
    """
    if job.mode != "binary":
        raise InvalidParameterError(f"inpaint_binary needs mode 'binary', got {job.mode!r}")
    dmg = _damage_mask(job.mask)
    warnings = []
    px = job.image.pixels
    off = (px != 0) & (px != 255)
    if np.any(off):
        warnings.append(
            f"{int(np.count_nonzero(off))} pixels are not 0 or 255; clamped to nearest"
        )
        px = np.where(px >= 128, 255, 0).astype(np.uint8)
    grid = build_grid(job.image.width, job.image.height)
    image_field = field_from_image(make_image(job.image.width, job.image.height, px), grid)
    u, rep1, rep2 = _inpaint_channel(image_field, dmg, job, trace)
    projected = project_binary(u)
    out_img = image_from_field(projected)
    return InpaintResult(
        channels=[u],
        projected_image=out_img,
        error_map=error_map(job.image, out_img),
        reports=[(rep1, rep2)],
        warnings=warnings,
    )


def inpaint_grayscale(job: InpaintJob, trace=None) -> InpaintResult:
    """Inpaint a grayscale image channel by channel.

    The image is split into k_channels bit planes, each plane is inpainted
    as an independent binary problem, projected, and the planes are
    reassembled. Channels are independent, so their solve order does not
    affect the result.
    """
    if job.mode != "grayscale":
        raise InvalidParameterError(
            f"inpaint_grayscale needs mode 'grayscale', got {job.mode!r}"
        )
    dmg = _damage_mask(job.mask)
    planes = bit_split(job.image, job.k_channels)
    finals = []
    reports = []
    for ch, plane in enumerate(planes, start=1):
        if trace is not None:
            trace.write(f"# channel {ch}\n")
        u, rep1, rep2 = _inpaint_channel(plane, dmg, job, trace)
        finals.append(u)
        reports.append((rep1, rep2))
    out_img = bit_assemble([project_binary(u) for u in finals])
    return InpaintResult(
        channels=finals,
        projected_image=out_img,
        error_map=error_map(job.image, out_img),
        reports=reports,
        warnings=[],
    )
