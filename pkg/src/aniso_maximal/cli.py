"""Command-line front end.

Examples::

    aniso-maximal cover-validate --cover cover.json --out out/
    aniso-maximal maximal --kind radial --f f.grid --cover cover.json --kernel phi.json --out out/
    aniso-maximal decompose --config plan.json --out out/
    aniso-maximal verify --suite theorem41 --cover cover.json --kernel phi.json --out out/
    aniso-maximal suite --resolution small --out out/

Exit status: 0 when every requested check passes, 2 when a check fails,
1 on input errors (unreadable or malformed documents, bad arguments).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np
from referencing import Registry, Resource

from . import calderon, verify
from .cover import AnisotropicCover, isotropic, validate_cover
from .errors import AnisoError
from .grid import GridFunction, read_grid, write_grid
from .kernels import TestFunction
from .report import _jsonable
from .maximal import (
    MaximalConfig,
    aperture_maximal,
    grand_nontangential_maximal,
    grand_radial_maximal,
    hl_maximal,
    maximal_fields,
)

log = logging.getLogger("aniso_maximal")

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2

KINDS = (
    "radial",
    "nontangential",
    "tangential",
    "truncated_radial",
    "truncated_nontangential",
    "truncated_tangential",
    "grand_radial",
    "grand_nontangential",
    "hl",
    "aperture",
)


class InputError(Exception):
    """Bad command-line input; reported with file and field context, exit status 1."""


# ---------------------------------------------------------------------- schemas
def _schema_docs() -> dict[str, dict]:
    root = resources.files("aniso_maximal") / "schemas"
    return {p.name: json.loads(p.read_text()) for p in root.iterdir() if p.name.endswith(".schema.json")}


def _validator(name: str):
    docs = _schema_docs()
    registry = Registry().with_resources(
        [(doc["$id"], Resource.from_contents(doc)) for doc in docs.values()]
        + [(n, Resource.from_contents(doc)) for n, doc in docs.items()]
    )
    return jsonschema.Draft202012Validator(docs[name], registry=registry)


def validate_document(doc: dict, schema: str) -> None:
    """Raise :class:`jsonschema.ValidationError` unless ``doc`` matches the named shipped schema."""
    _validator(schema).validate(doc)


def _write_json(path: Path, doc: dict, schema: str) -> None:
    validate_document(doc, schema)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------- inputs
def load_json(path: str | None, what: str) -> dict[str, Any] | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what}: file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object at the top level")
    return doc


def _load(path, what, factory):
    doc = load_json(path, what)
    if doc is None:
        return None
    try:
        return factory(doc)
    except (AnisoError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def load_cover(path: str | None, default_dim: int = 1) -> AnisotropicCover:
    cover = _load(path, "cover", AnisotropicCover.from_dict)
    return cover if cover is not None else isotropic(default_dim)


def load_kernel(path: str | None) -> TestFunction | None:
    return _load(path, "kernel", TestFunction.from_dict)


def load_config(path: str | None, dimension: int, resolution: str | None = None) -> tuple[MaximalConfig, dict]:
    """Maximal config plus the remaining top-level fields of the config document."""
    doc = load_json(path, "config") or {}
    extra = {k: v for k, v in doc.items() if k not in MaximalConfig.__dataclass_fields__}
    fields = {k: v for k, v in doc.items() if k in MaximalConfig.__dataclass_fields__}
    if resolution in verify.RESOLUTIONS and "t_step" not in fields:
        fields["t_step"] = verify.RESOLUTIONS[resolution]["t_step"]
    try:
        return MaximalConfig.default(dimension, **fields), extra
    except (AnisoError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def load_function(spec: str, cover: AnisotropicCover, resolution: str | None) -> GridFunction:
    """A grid file (``.grid`` / ``.csv``) or ``builtin:NAME`` from the default corpus."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        corpus = _corpus(cover.dimension, resolution)
        if name not in corpus.names:
            raise InputError(f"--f: unknown builtin {name!r}; choose from {corpus.names}")
        return corpus.subset([name]).grids()[0]
    if not Path(spec).is_file():
        raise InputError(f"--f: file not found: {spec}")
    try:
        return read_grid(spec)
    except AnisoError as exc:
        raise InputError(f"{spec}: {exc}") from None


def _corpus(dimension: int, resolution: str | None) -> verify.Corpus:
    if resolution is None or resolution == "default":
        return verify.default_corpus(dimension)
    if resolution in verify.RESOLUTIONS:
        shape = verify.RESOLUTIONS[resolution]["shape"] if dimension == 1 else (64, 64)
        return verify.default_corpus(dimension, shape)
    try:
        n = int(resolution)
    except ValueError:
        raise InputError(f"--resolution: expected small, default or a node count, got {resolution!r}") from None
    if n < 2 or n & (n - 1):
        raise InputError(f"--resolution: node count must be a power of two, got {n}")
    return verify.default_corpus(dimension, (n,) * dimension)


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"--out: cannot create {path}: {exc}") from None
    return out


# ---------------------------------------------------------------------- commands
def cmd_cover_validate(args) -> int:
    cover = load_cover(args.cover)
    _, extra = load_config(args.config, cover.dimension)
    n = cover.dimension
    box = extra.get("box", [[-4.0] * n, [4.0] * n])
    t_range = extra.get("t_range", [-4.0, 4.0])
    samples = int(extra.get("samples", 1000))
    rep = validate_cover(cover, box, t_range, samples=samples, seed=args.seed)
    doc = rep.to_dict()
    _write_json(_out_dir(args.out) / "cover_validation.json", doc, "report.schema.json")
    log.info("cover validation: %s", "pass" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_maximal(args) -> int:
    cover = load_cover(args.cover)
    config, _ = load_config(args.config, cover.dimension, args.resolution)
    config = replace(config, workers=args.workers)
    f = load_function(args.f, cover, args.resolution)
    phi = load_kernel(args.kernel) or verify.default_phi(cover.dimension, cover, config)
    kind = args.kind
    if kind == "hl":
        field = hl_maximal(f, cover, config)
    elif kind == "grand_radial":
        field = grand_radial_maximal(f, cover, config)
    elif kind == "grand_nontangential":
        field = grand_nontangential_maximal(f, cover, config)
    elif kind == "aperture":
        field = aperture_maximal(f, phi, cover, config)
    else:
        truncated = kind.startswith("truncated_")
        base = kind.removeprefix("truncated_")
        field = maximal_fields(f, phi, cover, config, (base,), truncated=truncated)[kind]
    out = _out_dir(args.out)
    grid_path = out / f"{kind}.grid"
    write_grid(grid_path, field.values)
    side = field.sidecar()
    side["grid"] = grid_path.name
    _write_json(out / f"{kind}.json", side, "sidecar.schema.json")
    return EXIT_OK


def cmd_decompose(args) -> int:
    doc = load_json(args.config, "plan")
    if doc is None:
        raise InputError("decompose: --config plan document is required")
    try:
        plan = calderon.DecompositionPlan.from_dict(doc)
    except (AnisoError, TypeError, ValueError) as exc:
        raise InputError(f"{args.config}: {exc}") from None
    eta = calderon.build_eta(plan)
    _, rep = calderon.reconstruct(plan, eta)
    fit = tuple(doc.get("fit_range", (min(4, plan.K_max), plan.K_max)))
    table = calderon.seminorm_decay_table(eta, fit_range=fit)
    out = _out_dir(args.out)
    for k, term in enumerate(eta.terms):
        write_grid(out / f"eta_{k:02d}.grid", term.with_values(np.real(term.values)))
    table.write_csv(out / "decay.csv")
    report = {
        "plan": plan.to_dict(),
        "dilation": eta.dilation,
        "reconstruction": rep.to_dict(),
        "telescoping_error": calderon.telescoping_error(plan),
        "frequency_identity_error": calderon.frequency_identity_error(plan, eta),
        "decay": {"slope": table.slope, "fit_range": list(table.fit_range), "flags": table.flags},
        "min_divisor": eta.min_divisor,
    }
    _write_json(out / "decomposition.json", _jsonable(report), "decomposition.schema.json")
    return EXIT_OK


def _write_case_csv(path: Path, report: dict) -> None:
    cases = report["cases"]
    keys: list[str] = []
    for c in cases:
        for k, v in c.items():
            if k not in keys and not isinstance(v, (dict, list)):
                keys.append(k)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for c in cases:
            w.writerow([c.get(k, "") for k in keys])


def _emit_suite(summary: dict, out: Path) -> int:
    for rep in summary["reports"]:
        _write_json(out / f"{rep['check']}.json", rep, "report.schema.json")
        _write_case_csv(out / f"{rep['check']}.csv", rep)
    _write_json(out / "summary.json", summary, "suite.schema.json")
    for rep in summary["reports"]:
        log.info("%-30s %s", rep["check"], "PASS" if rep["pass"] else "FAIL")
    return EXIT_OK if summary["pass"] else EXIT_CHECK


def _suite_inputs(args):
    cover = load_cover(args.cover)
    config, _ = load_config(args.config, cover.dimension, args.resolution)
    phi = load_kernel(args.kernel)
    if args.f:
        f = load_function(args.f, cover, args.resolution)
        corpus = verify.Corpus.from_grids([f], [Path(args.f).stem])
    else:
        corpus = _corpus(cover.dimension, args.resolution)
    return cover, config, phi, corpus


def cmd_verify(args) -> int:
    cover, config, phi, corpus = _suite_inputs(args)
    checks = [c.strip() for c in args.suite.split(",") if c.strip()]
    unknown = [c for c in checks if c not in verify.SUITE_CHECKS]
    if unknown:
        raise InputError(f"--suite: unknown checks {unknown}; choose from {list(verify.SUITE_CHECKS)}")
    summary = verify.run_suite(
        cover, phi, config, corpus, checks=checks, resolution=args.resolution or "default", seed=args.seed, workers=args.workers
    )
    return _emit_suite(summary, _out_dir(args.out))


def cmd_suite(args) -> int:
    cover, config, phi, corpus = _suite_inputs(args)
    summary = verify.run_suite(
        cover, phi, config, corpus, resolution=args.resolution or "default", seed=args.seed, workers=args.workers
    )
    return _emit_suite(summary, _out_dir(args.out))


# ---------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aniso-maximal", description="Anisotropic ellipsoid covers and maximal functions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, f=True, kernel=True):
        sp.add_argument("--cover", help="cover JSON document (default: isotropic 1-D)")
        if kernel:
            sp.add_argument("--kernel", help="kernel JSON document (default: normalized Gaussian)")
        if f:
            sp.add_argument("--f", help="input grid (.grid/.csv) or builtin:NAME")
        sp.add_argument("--config", help="JSON config document")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--resolution", default=None, help="small | default | power-of-two node count")
        sp.add_argument("--workers", type=int, default=None, help="threads (default: ANISO_MAXIMAL_THREADS or 1)")

    sp = sub.add_parser("cover-validate", help="sample the cover axioms and fit a1..a6")
    common(sp, f=False, kernel=False)
    sp.set_defaults(func=cmd_cover_validate)

    sp = sub.add_parser("maximal", help="compute one maximal field")
    common(sp)
    sp.add_argument("--kind", required=True, choices=KINDS)
    sp.set_defaults(func=cmd_maximal)

    sp = sub.add_parser("decompose", help="run the Fourier-side decomposition from a plan document")
    sp.add_argument("--config", required=True, help="plan JSON document")
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("verify", help="run selected checks")
    common(sp)
    sp.add_argument("--suite", required=True, help="comma-separated check names")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("suite", help="run every check")
    common(sp)
    sp.set_defaults(func=cmd_suite)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "maximal" and not args.f:
        print("error: maximal needs --f", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AnisoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
