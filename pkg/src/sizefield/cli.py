"""Command-line interface: ``sizefield build | query | export | stats``.

Exit status: 0 success, 2 usage error, 3 input error, 4 internal error.
Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .field import FieldFileError, load_field, save_field
from .mesh_io import MeshError, bounding_box, load_surface_mesh
from .metrics import TetMeshError, evaluate_mesh, read_tet_mesh, unique_edges, write_report
from .octree import SizeFieldParams
from .pipeline import StageError, build_size_field

logger = logging.getLogger("sizefield")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3, 4

_NUM = r"[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?"
_LREL = re.compile(rf"^\s*(?:({_NUM})\s*\*?\s*)?L\s*(?:/\s*({_NUM}))?\s*$")


class UsageError(ValueError):
    pass


class InputError(ValueError):
    pass


def parse_length(text: str, L: float | None = None):
    """Parse ``"0.05"``, ``"L/20"``, ``"2L"`` or ``"0.5*L/10"``.

    With ``L`` None, returns a callable of L for L-relative values so syntax can
    be checked before the model is read.
    """
    text = str(text)
    m = _LREL.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        if den == 0:
            raise UsageError(f"division by zero in {text!r}")
        factor = num / den
        return (lambda LL: factor * LL) if L is None else factor * L
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"expected a number or an L-relative value like L/20, got {text!r}") from None
    if not np.isfinite(value):
        raise UsageError(f"value must be finite, got {text!r}")
    return value


def _resolve(spec, L):
    return spec(L) if callable(spec) else spec


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sizefield", description="Mesh size fields from surface triangulations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics (repeatable)")
    common.add_argument("-q", "--quiet", action="store_true", help="errors only")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", parents=[common], help="compute a size field from a surface mesh")
    b.add_argument("--in", dest="input", required=True, help="surface mesh (STL or OBJ)")
    b.add_argument("--out", required=True, help="output field file")
    b.add_argument("--format", choices=("stl-ascii", "stl-binary", "obj"), help="override format sniffing")
    b.add_argument("--bulk", default="L/20", help="bulk size h_b (default L/20)")
    b.add_argument("--min", dest="hmin", default="L/1000", help="minimum size h_min (default L/1000)")
    b.add_argument("--density", default="20", help="nodes per osculating circle n_d (default 20)")
    b.add_argument("--layers", default="4", help="element layers across gaps n_g (default 4)")
    b.add_argument("--gradation", default="1.1", help="gradation alpha (default 1.1)")
    b.add_argument("--no-features", action="store_true", help="skip medial-axis feature sizes")
    b.add_argument("--threads", type=int, default=None, help="worker cap (accepted; the build is serial)")
    b.add_argument("--vtk", help="also export the field leaves as legacy VTK")
    b.add_argument("--no-timings", action="store_true", help="suppress the stage timing table")

    q = sub.add_parser("query", parents=[common], help="evaluate a field at points, one 'x y z' per line")
    q.add_argument("--field", required=True)
    q.add_argument("--points", default="-", help="input file ('-' for stdin)")
    q.add_argument("--out", default="-", help="output file ('-' for stdout)")

    e = sub.add_parser("export", parents=[common], help="write field leaves as legacy VTK hexahedra")
    e.add_argument("--field", required=True)
    e.add_argument("--out", required=True)

    s = sub.add_parser("stats", parents=[common], help="score a mesh against a field")
    s.add_argument("--field", required=True)
    s.add_argument("--mesh", required=True, help="surface (STL/OBJ) or ASCII tet mesh (.tet)")
    s.add_argument("--out", help="directory for summary.csv and histogram CSVs")
    return p


def _configure_logging(verbose: int, quiet: bool):
    level = logging.ERROR if quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    for name in ("sizefield", "py.warnings"):
        lg = logging.getLogger(name)
        lg.handlers[:] = [handler]
        lg.setLevel(level)
        lg.propagate = False
    logging.captureWarnings(True)


def _atomic_text(path, text: str):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def run_build(args) -> int:
    specs = {}
    for key, flag in (("h_b", "bulk"), ("h_min", "hmin"), ("n_d", "density"), ("n_g", "layers"),
                      ("alpha", "gradation")):
        specs[key] = parse_length(getattr(args, flag))
    fixed = {k: v for k, v in specs.items() if not callable(v)}
    _check_partial(fixed)
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be at least 1")
    if not Path(args.input).is_file():
        raise InputError(f"no such mesh file: {args.input}")

    mesh = load_surface_mesh(args.input, format=args.format)
    L = bounding_box(mesh).L
    if not L > 0:
        raise InputError("mesh bounding box is degenerate")
    try:
        params = SizeFieldParams(**{k: float(_resolve(v, L)) for k, v in specs.items()})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    logger.info("parameters: h_b=%.6g h_min=%.6g n_d=%g n_g=%g alpha=%g (L=%.6g)",
                params.h_b, params.h_min, params.n_d, params.n_g, params.alpha, L)
    field, report = build_size_field(mesh, params, features=not args.no_features)
    save_field(field, args.out)
    if args.vtk:
        field.export_vtk(args.vtk)
    if not (args.no_timings or args.quiet):
        print(report.timing_table(), file=sys.stderr)
    if not args.quiet:
        print(f"wrote {args.out}: {field.n_leaves} leaves, {report.limiter_passes} limiter sweeps",
              file=sys.stderr)
    return EXIT_OK


def _check_partial(fixed: dict):
    """Validate absolute parameters before any file is read."""
    if "h_min" in fixed and not fixed["h_min"] > 0:
        raise UsageError("--min must be positive")
    if "h_b" in fixed and not fixed["h_b"] > 0:
        raise UsageError("--bulk must be positive")
    if "h_b" in fixed and "h_min" in fixed and fixed["h_b"] < fixed["h_min"]:
        raise UsageError("--bulk must be >= --min")
    if "n_d" in fixed and not fixed["n_d"] >= 3:
        raise UsageError("--density must be at least 3")
    if "n_g" in fixed and not fixed["n_g"] >= 1:
        raise UsageError("--layers must be at least 1")
    if "alpha" in fixed and not fixed["alpha"] > 1:
        raise UsageError("--gradation must be > 1")


def _read_points(source: str) -> np.ndarray:
    if source == "-":
        lines = sys.stdin.read().splitlines()
    else:
        try:
            lines = Path(source).read_text().splitlines()
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc.strerror}") from None
    pts = []
    for no, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 3:
            raise InputError(f"line {no}: expected 'x y z'")
        try:
            pts.append([float(x) for x in parts])
        except ValueError:
            raise InputError(f"line {no}: not a number") from None
    P = np.array(pts, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(P)):
        raise InputError("non-finite query coordinates")
    return P


def run_query(args) -> int:
    field = load_field(args.field)
    P = _read_points(args.points)
    h = field.query(P) if len(P) else np.empty(0)
    text = "".join("%.17g\n" % v for v in h)
    if args.out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        _atomic_text(args.out, text)
    return EXIT_OK


def run_export(args) -> int:
    field = load_field(args.field)
    field.export_vtk(args.out)
    if not args.quiet:
        print(f"wrote {args.out}: {field.n_leaves} hexahedra", file=sys.stderr)
    return EXIT_OK


def run_stats(args) -> int:
    field = load_field(args.field)
    path = Path(args.mesh)
    if path.suffix.lower() == ".tet":
        V, T = read_tet_mesh(path)
        E = unique_edges(T)
    else:
        mesh = load_surface_mesh(path)
        V, T, E = mesh.vertices, None, mesh.edges
    if len(E) == 0:
        raise InputError("mesh has no edges")
    report = evaluate_mesh(field, V, E, T)
    summary = report.summary()
    width = max(len(k) for k in summary)
    sys.stdout.write("".join(f"{k:<{width}}  {v:.6g}\n" if isinstance(v, float) else f"{k:<{width}}  {v}\n"
                             for k, v in summary.items()))
    if args.out:
        write_report(report, args.out)
    return EXIT_OK


COMMANDS = {"build": run_build, "query": run_query, "export": run_export, "stats": run_stats}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    _configure_logging(args.verbose, args.quiet)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sizefield {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, MeshError, FieldFileError, TetMeshError) as exc:
        print(f"sizefield {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StageError as exc:
        # geometric input problems (coplanar points, bad mesh) surface as ValueError
        code = EXIT_INPUT if isinstance(exc.cause, ValueError) else EXIT_INTERNAL
        print(f"sizefield {args.command}: stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"sizefield {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"sizefield {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
