"""Parameter-file parsing and the chinpaint command-line tool."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ChinpaintError, ConfigParseError, InvalidParameterError
from .evolve import DEFAULT_MAX_STEPS, TwoStageConfig
from .images import read_image, write_image
from .pipeline import InpaintJob, InpaintResult, inpaint_binary, inpaint_grayscale
from .potentials import PotentialSpec, moreau_yosida, obstacle, quartic

__all__ = ["JobConfig", "parse_config", "job_schedule", "preset_path", "cli_main", "main"]

MODES = ("binary", "grayscale")
POTENTIALS = ("obstacle", "my", "quartic")

BINARY_STOP_TOL = 5.0e-6
GRAYSCALE_STOP_TOL = 1.0e-7


@dataclass(frozen=True)
class JobConfig:
    """One inpainting job's parameters, as read from a config file or flags.

    tol1/tol2 default by mode: 5e-6 for binary, 1e-7 for grayscale, unless
    set explicitly. `explicit` records which keys the user actually wrote,
    so later overrides (e.g. --mode on the command line) can re-derive the
    dependent defaults.
    """

    eps1: float = 0.04
    eps2: float = 0.0033333333
    alpha: float = 8e3
    alpha2: float = 1e5
    tau: float = 1e-5
    tol1: float = BINARY_STOP_TOL
    tol2: float = BINARY_STOP_TOL
    mode: str = "binary"
    potential: str = "obstacle"
    delta: float | None = None
    max_steps: int = DEFAULT_MAX_STEPS
    k_channels: int = 8
    out: str | None = None
    error_map: str | None = None
    trace: str | None = None
    explicit: frozenset = frozenset()


_FLOAT_KEYS = ("eps1", "eps2", "alpha", "alpha2", "tau", "tol1", "tol2", "delta")
_INT_KEYS = ("max_steps", "k_channels")
_PATH_KEYS = ("out", "error_map", "trace")
_TOKEN_KEYS = ("mode", "potential")
_ALL_KEYS = frozenset(_FLOAT_KEYS + _INT_KEYS + _PATH_KEYS + _TOKEN_KEYS)


def _check_tokens(cfg: JobConfig, line_of) -> None:
    """Validate enumerated and cross-field constraints.

    line_of maps key -> 1-based config line, or returns None for values that
    came from flags; errors carry the line when one exists.
    """
    def fail(msg, key):
        line = line_of(key)
        if line is None:
            raise InvalidParameterError(msg)
        raise ConfigParseError(msg, line=line)

    if cfg.mode not in MODES:
        fail(f"mode must be one of {'/'.join(MODES)}, got {cfg.mode!r}", "mode")
    if cfg.potential not in POTENTIALS:
        fail(f"potential must be one of {'/'.join(POTENTIALS)}, got {cfg.potential!r}",
             "potential")
    if not 1 <= cfg.k_channels <= 8:
        fail(f"k_channels must be in 1..8, got {cfg.k_channels}", "k_channels")
    if cfg.potential == "my" and cfg.delta is None:
        fail("potential 'my' requires delta", "potential")
    if cfg.potential != "my" and cfg.delta is not None:
        fail(f"delta only applies to potential 'my', not {cfg.potential!r}", "delta")


def _resolved_tols(cfg: JobConfig) -> JobConfig:
    default = BINARY_STOP_TOL if cfg.mode == "binary" else GRAYSCALE_STOP_TOL
    tol1 = cfg.tol1 if "tol1" in cfg.explicit else default
    tol2 = cfg.tol2 if "tol2" in cfg.explicit else tol1
    return replace(cfg, tol1=tol1, tol2=tol2)


def parse_config(text: str) -> JobConfig:
    """Parse "key = value" lines into a JobConfig.

    "#" starts a comment, blank lines are skipped, unknown and duplicate
    keys are rejected. Missing keys take the defaults documented on
    JobConfig. Malformed lines and non-positive numbers raise
    ConfigParseError with the 1-based line number.
    """
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(
                f"expected 'key = value', got {line!r}", line=lineno
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigParseError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ConfigParseError(f"duplicate key {key!r}", line=lineno)
        if not value:
            raise ConfigParseError(f"empty value for {key!r}", line=lineno)
        if key in _FLOAT_KEYS:
            try:
                num = float(value)
            except ValueError:
                raise ConfigParseError(
                    f"expected a number for {key!r}, got {value!r}", line=lineno
                ) from None
            if not (math.isfinite(num) and num > 0.0):
                raise ConfigParseError(
                    f"{key} must be a positive number, got {value}", line=lineno
                )
            values[key] = num
        elif key in _INT_KEYS:
            try:
                num = int(value)
            except ValueError:
                raise ConfigParseError(
                    f"expected an integer for {key!r}, got {value!r}", line=lineno
                ) from None
            if num < 1:
                raise ConfigParseError(
                    f"{key} must be at least 1, got {value}", line=lineno
                )
            values[key] = num
        else:
            values[key] = value
        lines[key] = lineno
    cfg = JobConfig(**values, explicit=frozenset(values))
    _check_tokens(cfg, lines.get)
    return _resolved_tols(cfg)


def _potential_spec(cfg: JobConfig) -> PotentialSpec:
    if cfg.potential == "obstacle":
        return obstacle()
    if cfg.potential == "my":
        return moreau_yosida(cfg.delta)
    return quartic()


def job_schedule(cfg: JobConfig) -> TwoStageConfig:
    """Turn a JobConfig into the two-stage evolution schedule."""
    return TwoStageConfig(
        eps1=cfg.eps1,
        eps2=cfg.eps2,
        alpha=cfg.alpha,
        alpha2=cfg.alpha2,
        tau=cfg.tau,
        tol1=cfg.tol1,
        tol2=cfg.tol2,
        max_steps=cfg.max_steps,
        potential=_potential_spec(cfg),
    )


def preset_path(name: str) -> Path:
    """Path of a bundled preset config (fig1 .. fig7)."""
    p = Path(__file__).parent / "presets" / f"{name}.cfg"
    if not p.is_file():
        raise InvalidParameterError(f"no preset named {name!r}")
    return p


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="chinpaint",
        description="Inpaint damaged binary or grayscale images by a two-stage "
        "Cahn-Hilliard evolution.",
    )
    ap.add_argument("--image", required=True, help="damaged input image (PGM or PNG)")
    ap.add_argument("--mask", required=True,
                    help="damage mask image; pixels >= 128 mark the damaged region")
    ap.add_argument("--config", help="key = value parameter file")
    ap.add_argument("--eps1", type=float, help="stage-one interface width")
    ap.add_argument("--eps2", type=float, help="stage-two interface width")
    ap.add_argument("--alpha", type=float, help="stage-one fidelity weight")
    ap.add_argument("--alpha2", type=float, help="stage-two fidelity weight")
    ap.add_argument("--tau", type=float, help="time step")
    ap.add_argument("--tol", type=float,
                    help="stopping tolerance for both stages (default 5e-6 binary, "
                    "1e-7 grayscale)")
    ap.add_argument("--mode", choices=MODES, help="binary or grayscale input")
    ap.add_argument("--potential", choices=POTENTIALS,
                    help="bulk potential: obstacle (default), my (Moreau-Yosida "
                    "regularization), or quartic")
    ap.add_argument("--delta", type=float,
                    help="regularization parameter (required with --potential my)")
    ap.add_argument("--k-channels", dest="k_channels", type=int,
                    help="bit planes to keep in grayscale mode (1..8, default 8)")
    ap.add_argument("--out", help="write the inpainted image here")
    ap.add_argument("--error-map", dest="error_map",
                    help="write |input - output| as an image here")
    ap.add_argument("--trace", help="write a per-step diagnostic trace here")
    ap.add_argument("--seed", type=int, default=0,
                    help="reserved for test fixtures; does not affect the solve")
    return ap


_OVERRIDE_KEYS = (
    "eps1", "eps2", "alpha", "alpha2", "tau", "mode", "potential", "delta",
    "k_channels", "out", "error_map", "trace",
)


def _merge_flags(cfg: JobConfig, ns: argparse.Namespace) -> JobConfig:
    overrides = {k: getattr(ns, k) for k in _OVERRIDE_KEYS if getattr(ns, k) is not None}
    if ns.tol is not None:
        overrides["tol1"] = ns.tol
        overrides["tol2"] = ns.tol
    explicit = set(cfg.explicit) | set(overrides)
    new_pot = overrides.get("potential")
    if new_pot is not None and new_pot != "my" and ns.delta is None:
        # switching away from the regularized potential invalidates a delta
        # inherited from the config file; drop it rather than erroring
        overrides["delta"] = None
        explicit.discard("delta")
    for key in ("eps1", "eps2", "alpha", "alpha2", "tau", "tol1", "tol2", "delta"):
        v = overrides.get(key)
        if v is not None and not (math.isfinite(v) and v > 0.0):
            raise InvalidParameterError(f"{key} must be a positive number, got {v}")
    cfg = replace(cfg, **overrides, explicit=frozenset(explicit))
    _check_tokens(cfg, lambda key: None)
    return _resolved_tols(cfg)


def _report_lines(result: InpaintResult) -> list:
    lines = []
    for ch, (r1, r2) in enumerate(result.reports, start=1):
        tag = f"channel {ch}: " if len(result.reports) > 1 else ""
        for stage, rep in ((1, r1), (2, r2)):
            status = "hit max steps" if rep.hit_max_steps else "converged"
            lines.append(
                f"{tag}stage {stage}: {rep.steps_taken} steps, "
                f"stop value {rep.stop_value_final:.3e}, {status}"
            )
    for msg in result.warnings:
        lines.append(f"warning: {msg}")
    return lines


def cli_main(argv) -> int:
    """Run the tool; returns the process exit code.

    0: success. 2: bad input or parameters. 3: the solver hit its step
    budget before reaching the stopping tolerance (outputs are still
    written, and the trace is flagged).
    """
    ap = _build_parser()
    try:
        ns = ap.parse_args(list(argv))
    except SystemExit as e:
        return int(e.code or 0)

    trace_file = None
    try:
        if ns.config is not None:
            cfg = parse_config(Path(ns.config).read_text(encoding="utf-8"))
        else:
            cfg = JobConfig()
        cfg = _merge_flags(cfg, ns)
        image = read_image(ns.image)
        mask = read_image(ns.mask)
        schedule = job_schedule(cfg)
        job = InpaintJob(
            image=image,
            mask=mask,
            mode=cfg.mode,
            potential=schedule.potential,
            schedule=schedule,
            k_channels=cfg.k_channels,
        )
        if cfg.trace is not None:
            trace_file = open(cfg.trace, "w", encoding="utf-8")
        if cfg.mode == "binary":
            result = inpaint_binary(job, trace=trace_file)
        else:
            result = inpaint_grayscale(job, trace=trace_file)
        if trace_file is not None and not result.converged:
            trace_file.write("# non-convergence: step budget exhausted before tolerance\n")
        if cfg.out is not None:
            write_image(result.projected_image, cfg.out)
        if cfg.error_map is not None:
            write_image(result.error_map, cfg.error_map)
        for line in _report_lines(result):
            print(line, file=sys.stderr)
        return 0 if result.converged else 3
    except (ChinpaintError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        if trace_file is not None:
            trace_file.close()


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
