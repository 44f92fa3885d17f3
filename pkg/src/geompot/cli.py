"""Batch command-line front end.

Subcommands ``curvature``, ``brackets``, ``spectrum`` and ``verify-quantum``.
Options come from flags and, optionally, a plain ``key=value`` file given by
``--config``; flags win. Human-readable tables go to standard output and the
machine-readable report goes to ``--out``. Without ``--out``, ``--format
json`` sends JSON, and only JSON, to standard output.

Exit status: 0 success, 1 verification failure or solver non-convergence,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .brackets import format_classical_report, verify_classical
from .constants import GEODESIC_SIGNS, PhysicalConstants
from .errors import GeomPotError, NoConvergence
from .quantize import operators as ops
from .quantize.grid import build_grid
from .quantize.spectrum import SPECTRUM_TOL, format_spectrum, spectrum
from .quantize.verification import (
    TEST_SUITE_VERSION,
    format_reports,
    ordering_identity_checks,
    p_squared_consistency,
    quantum_condition_residuals,
    reports_to_json,
)
from .surface import BUILTINS, curvature_table, format_curvature_table, make_surface, CURVATURE_COLUMNS

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags or configuration; maps to exit status 2."""


def parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        n_u, n_v = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like NxM, got {text!r}") from None
    if n_u < 2 or n_v < 2:
        raise argparse.ArgumentTypeError(f"grid dimensions must be at least 2, got {text!r}")
    return n_u, n_v


def parse_center(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"center must be three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"center must have three components, got {text!r}")
    return vals


def positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return val


def positive_float(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not val > 0 or not np.isfinite(val):
        raise argparse.ArgumentTypeError(f"expected a positive finite number, got {text!r}")
    return val


SURFACE_PARAMS = ("radius", "R", "r", "a", "b", "c", "center", "period")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value file; flags override it")
    p.add_argument("--surface", choices=sorted(BUILTINS), default=None)
    p.add_argument("--radius", type=positive_float)
    p.add_argument("--R", dest="R", type=positive_float, help="torus major radius")
    p.add_argument("--r", dest="r", type=positive_float, help="torus minor radius")
    p.add_argument("--a", type=positive_float, help="ellipsoid semi-axis along x")
    p.add_argument("--b", type=positive_float, help="ellipsoid semi-axis along y")
    p.add_argument("--c", type=positive_float, help="ellipsoid semi-axis along z")
    p.add_argument("--center", type=parse_center, help="x,y,z offset (sphere, torus)")
    p.add_argument("--period", type=positive_float, help="axial period (cylinder, plane)")
    p.add_argument("--grid", type=parse_grid, action="append", help="NxM; repeat to form a ladder")
    p.add_argument("--samples", type=positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=positive_float, default=None)
    p.add_argument("--k", type=positive_int, default=9)
    p.add_argument("--hbar", type=positive_float, default=1.0)
    p.add_argument("--mu", type=positive_float, default=1.0)
    p.add_argument("--no-geometric-potential", dest="no_geometric_potential", action="store_true")
    p.add_argument("--discriminator", action="store_true",
                   help="expect the run without the geometric potential to stall at a floor")
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--threads", type=positive_int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geompot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"geompot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("curvature", "export normals, curvatures and the geometric potential on a chart grid"),
        ("brackets", "verify the classical Dirac-bracket identities at seeded phase points"),
        ("spectrum", "lowest eigenvalues of the surface Hamiltonian"),
        ("verify-quantum", "convergence ladders for the quantum conditions and ordering identities"),
    ):
        _common(sub.add_parser(name, help=help_text))
    return parser


def read_config(path: Path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv: Sequence[str]) -> argparse.Namespace:
    """Fill options not given on the command line from the config file."""
    if args.config is None:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            opt = token.split("=", 1)[0]
            for a in sub._actions:
                if opt in a.option_strings:
                    explicit.add(a.dest)
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if key in explicit:
            continue
        try:
            if isinstance(action, argparse._StoreTrueAction):
                val = raw.lower() in ("1", "true", "yes", "on")
                if raw.lower() not in ("1", "true", "yes", "on", "0", "false", "no", "off"):
                    raise argparse.ArgumentTypeError(f"expected a boolean, got {raw!r}")
            elif isinstance(action, argparse._AppendAction):
                val = [action.type(t.strip()) for t in raw.split(",") if t.strip()]
            else:
                val = action.type(raw) if action.type else raw
                if action.choices is not None and val not in action.choices:
                    raise argparse.ArgumentTypeError(f"invalid choice {raw!r}")
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
        setattr(args, key, val)
    return args


# -- run configuration --------------------------------------------------------


DEFAULT_SURFACE = "sphere"


def _surface(args):
    name = args.surface or DEFAULT_SURFACE
    params = {k: getattr(args, k) for k in SURFACE_PARAMS if getattr(args, k) is not None}
    try:
        return make_surface(name, **params), params
    except TypeError:
        raise UsageError(f"surface {name!r} does not accept parameters {sorted(params)}") from None


def _ladder(args, surface, command):
    grids = args.grid
    if not grids:
        pole = surface.chart is not None and surface.chart.has_pole
        if command == "verify-quantum":
            grids = [(32, 64), (64, 128), (128, 256)] if pole else [(32, 32), (64, 64), (128, 128)]
        elif command == "spectrum":
            grids = [(64, 128)] if pole else [(64, 64)]
        else:
            grids = [(16, 32)] if pole else [(32, 32)]
    sizes = [a * b for a, b in grids]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise UsageError("grid sizes must increase strictly along the ladder")
    return list(grids)


def provenance(args, command, surface, params, grids, tolerances) -> dict:
    return {
        "command": command,
        "surface": surface.name,
        "surface_params": {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(params.items())},
        "grids": [{"n_u": a, "n_v": b} for a, b in grids],
        "samples": args.samples if command == "brackets" else None,
        "seed": args.seed,
        "tolerances": tolerances,
        "constants": {"hbar": args.hbar, "mu": args.mu},
        "include_geometric_potential": not args.no_geometric_potential,
        "threads": args.threads,
        "version": __version__,
    }


def _emit(args, table: str, payload: str) -> None:
    if args.out is not None:
        try:
            args.out.write_text(payload)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from None
        sys.stdout.write(table)
    elif args.format == "json":
        sys.stdout.write(payload)
    else:
        sys.stdout.write(table)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- subcommands ---------------------------------------------------------------


def cmd_curvature(args) -> int:
    surface, params = _surface(args)
    if surface.chart is None:
        raise UsageError(f"surface {surface.name!r} has no chart")
    grids = _ladder(args, surface, "curvature")
    constants = PhysicalConstants(args.hbar, args.mu)
    n_u, n_v = grids[-1]
    rows = curvature_table(surface, n_u, n_v, constants)
    table = format_curvature_table(rows)
    prov = provenance(args, "curvature", surface, params, [grids[-1]], {})
    payload = _json({"provenance": prov, "columns": list(CURVATURE_COLUMNS), "rows": (rows + 0.0).tolist()})
    if args.out is not None and args.format == "table":
        payload = table
    _emit(args, table, payload)
    return EXIT_OK


def cmd_brackets(args) -> int:
    surface, params = _surface(args)
    tol = args.tol if args.tol is not None else 1e-8
    constants = PhysicalConstants(args.hbar, args.mu)
    checks = verify_classical(surface, args.samples, args.seed, tol, constants)
    prov = provenance(args, "brackets", surface, params, [], {"identity": tol})
    prov["geodesic_signs"] = {"kappa": GEODESIC_SIGNS.kappa, "tau": GEODESIC_SIGNS.tau}
    body = {"provenance": prov}
    body.update({c.identity: c.as_dict() for c in checks})
    _emit(args, format_classical_report(checks), _json(body))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def cmd_spectrum(args) -> int:
    surface, params = _surface(args)
    grids = _ladder(args, surface, "spectrum")
    tol = args.tol if args.tol is not None else SPECTRUM_TOL
    constants = PhysicalConstants(args.hbar, args.mu)
    grid = build_grid(surface, *grids[-1], constants)
    H = ops.hamiltonian(grid, not args.no_geometric_potential, constants)
    scale = constants.kinetic / surface.scale ** 2
    try:
        result = spectrum(H, args.k, tol=tol, seed=args.seed, energy_scale=scale)
    except NoConvergence as exc:
        sys.stderr.write(f"geompot: eigensolver did not converge: {exc}\n")
        return EXIT_FAIL
    prov = provenance(args, "spectrum", surface, params, [grids[-1]], {"eigen_residual": tol})
    body = {
        "provenance": prov,
        "eigenvalues": [float(v) + 0.0 for v in result.eigenvalues],
        "residuals": [float(r) for r in result.residuals],
        "max_residual": result.max_residual,
        "energy_scale": scale,
    }
    _emit(args, format_spectrum(result), _json(body))
    return EXIT_OK


def cmd_verify_quantum(args) -> int:
    surface, params = _surface(args)
    grids = _ladder(args, surface, "verify-quantum")
    if len(grids) < 3:
        raise UsageError("verify-quantum needs a ladder of at least 3 grids (repeat --grid)")
    constants = PhysicalConstants(args.hbar, args.mu)
    ladder = [build_grid(surface, a, b, constants) for a, b in grids]
    include_vg = not args.no_geometric_potential
    reports = quantum_condition_residuals(ladder, constants, include_vg, args.discriminator)
    reports += ordering_identity_checks(ladder, constants)
    reports.append(p_squared_consistency(ladder, constants))
    prov = provenance(args, "verify-quantum", surface, params, grids, {"min_order": 1.5, "second_order_band": 0.3})
    prov["test_suite"] = TEST_SUITE_VERSION
    prov["discriminator"] = args.discriminator
    _emit(args, format_reports(reports), reports_to_json(reports, prov))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


COMMANDS = {
    "curvature": cmd_curvature,
    "brackets": cmd_brackets,
    "spectrum": cmd_spectrum,
    "verify-quantum": cmd_verify_quantum,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        args = _apply_config(parser, args, argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"geompot: {exc}\n")
        return EXIT_USAGE
    except (GeomPotError, ValueError) as exc:
        sys.stderr.write(f"geompot: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
