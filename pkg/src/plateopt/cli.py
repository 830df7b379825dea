"""Command-line pipeline driver.

Subcommands::

    solve            solve the configured reference load case, write the
                     deflection and surface-strain fields
    sweep            unit-load compliance sweep over the candidate node sets
    generate-target  manufacture the target deflection field from the config
    optimize         three-load placement search against a target field
    analyze          strain-direction field, trajectories, and comparison
    compare          compare two saved deflection fields

Stages communicate only through files.  Every run writes ``manifest.json``
into ``--out`` with content digests of its inputs and outputs; manifests
carry no timestamps, so a rerun with identical inputs produces bit-identical
bytes.  Exit codes: 0 success, 1 numerical/model failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .compliance import (ComplianceMatrix, default_evaluation_nodes,
                         load_matrix, save_matrix, sweep)
from .directions import direction_field, save_direction_field, save_trajectory, trace
from .errors import ConfigError, PlateOptError, TraceError
from .fe import LoadCase, SystemMatrix, solve, surface_strain
from .fields import (ScalarField, compare, field_from_mesh, load_field,
                     min_strain_audit, resample_to_mesh, save_field)
from .model import PlateModel, builtin_config_path, builtin_configs, load_model
from .optimize import outer_search, scale_to_allowable
from .targets import generate


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _resolve_config(value: str) -> Path:
    """A --config value is a file path or the name of a packaged config."""
    p = Path(value)
    if p.is_file():
        return p
    if value in builtin_configs():
        return builtin_config_path(value)
    raise ConfigError(
        f"config {value!r} is neither a file nor one of the packaged "
        f"configs {builtin_configs()}"
    )


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _digest_file(path: Path) -> str:
    try:
        return _digest(Path(path).read_bytes())
    except OSError as exc:
        raise ConfigError(f"cannot read input file {path}: {exc}") from exc


def _jsonable(obj):
    """Coerce numpy scalars/arrays so json.dumps stays deterministic."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, obj) -> str:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    path.write_text(text)
    return _digest(text.encode())


def _write_manifest(out: Path, subcommand: str, model: PlateModel,
                    parameters: Dict, inputs: Dict[str, str],
                    outputs: Dict[str, str]) -> None:
    manifest = {
        "schema": "run-manifest v1",
        "subcommand": subcommand,
        "package_version": __version__,
        "config": {"name": model.name, "digest": model.digest},
        "parameters": parameters,
        "inputs": inputs,
        "outputs": outputs,
    }
    _write_json(out / "manifest.json", manifest)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _signed_deflection(model: PlateModel, w: np.ndarray) -> np.ndarray:
    """Deflection measured positive along the configured load direction."""
    return -w if model.direction == "-z" else w.copy()


def _reference_case(model: PlateModel) -> LoadCase:
    """The configured reference loads (the forward-solve target recipe)."""
    if model.target is None or model.target.variant != "forward-solve":
        raise ConfigError(
            "this command needs [target] with variant='forward-solve' "
            "(reference loads) in the config, or an explicit --loads file"
        )
    return LoadCase(model.target.loads)


def _case_from_result(path: Path, direction: str) -> LoadCase:
    """Load case from an optimizer result.json (zero rows dropped)."""
    try:
        doc = json.loads(path.read_text())
        rows = doc["rows"]
        entries = tuple((int(r["node"]), float(r["load_N"]), direction)
                        for r in rows if float(r["load_N"]) != 0.0)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read load rows from {path}: {exc}") from exc
    if not entries:
        raise ConfigError(f"{path} holds no non-zero loads")
    return LoadCase(entries)


def _read_seeds(path: Path) -> Tuple[Tuple[float, float], ...]:
    seeds = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read seeds file {path}: {exc}") from exc
    for i, line in enumerate(lines):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigError(f"{path}:{i + 1}: expected 'x,y', got {line!r}")
        try:
            seeds.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigError(f"{path}:{i + 1}: {exc}") from exc
    if not seeds:
        raise ConfigError(f"seeds file {path} holds no seed points")
    return tuple(seeds)


def _sweep_matrix(model: PlateModel, system: SystemMatrix, workers: int,
                  cache_path: Optional[Path] = None) -> Tuple[ComplianceMatrix, bool]:
    """Compute the compliance matrix, reusing a compatible cached file."""
    want_cand = np.concatenate(model.sets.as_tuple())
    if cache_path is not None and cache_path.is_file():
        try:
            cached = load_matrix(cache_path,
                                 expect_mesh_hash=model.mesh.content_hash())
        except PlateOptError:
            cached = None
        if (cached is not None
                and np.array_equal(cached.cand_nodes, want_cand)
                and cached.set_sizes == tuple(len(s) for s in model.sets.as_tuple())
                and np.array_equal(cached.eval_nodes,
                                   default_evaluation_nodes(system))
                and cached.unit == model.unit
                and cached.direction == model.direction):
            print(f"reusing compliance matrix {cache_path}", file=sys.stderr)
            return cached, True
    matrix = sweep(system, model.sets, unit=model.unit,
                   direction=model.direction, workers=workers)
    return matrix, False


def _target_field(model: PlateModel, system: Optional[SystemMatrix],
                  args, inputs: Dict[str, str]) -> ScalarField:
    """Target field from --target file or the config recipe."""
    target_path = getattr(args, "target", None)
    if target_path:
        inputs[str(target_path)] = _digest_file(Path(target_path))
        return load_field(target_path)
    if model.target is None:
        raise ConfigError(
            "no --target file given and the config has no [target] recipe"
        )
    recipe = model.target
    if getattr(args, "seed", None) is not None:
        recipe = replace(recipe, seed=args.seed)
    return generate(recipe, system=system, mesh=model.mesh).field


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    model = load_model(_resolve_config(args.config))
    out = _out_dir(args)
    system = model.assemble()
    if args.loads:
        case = _case_from_result(Path(args.loads), model.direction)
        inputs = {str(args.loads): _digest_file(Path(args.loads))}
    else:
        case = _reference_case(model)
        inputs = {}
    disp = solve(system, case)
    z = model.surface_z()
    strains = surface_strain(system, disp, z)

    outputs = {}
    deflection = field_from_mesh(model.mesh, _signed_deflection(model, disp.w))
    save_field(deflection, out / "deflection.csv")
    outputs["deflection.csv"] = _digest_file(out / "deflection.csv")
    for comp in ("exx", "eyy", "exy"):
        fld = field_from_mesh(model.mesh, getattr(strains, comp).ravel())
        name = f"strain_{comp}.csv"
        save_field(fld, out / name)
        outputs[name] = _digest_file(out / name)

    _write_manifest(out, "solve", model,
                    {"loads": [list(e) for e in case.entries],
                     "surface_z": z},
                    inputs, outputs)
    return 0


def cmd_sweep(args) -> int:
    model = load_model(_resolve_config(args.config))
    out = _out_dir(args)
    system = model.assemble()
    path = out / "compliance.csv"
    matrix, reused = _sweep_matrix(model, system, args.workers, cache_path=path)
    if not reused:
        save_matrix(matrix, path)
    outputs = {"compliance.csv": _digest_file(path)}
    _write_manifest(out, "sweep", model,
                    {"unit": model.unit, "direction": model.direction,
                     "candidates": int(matrix.zeta.shape[1]),
                     "evaluation_nodes": int(matrix.zeta.shape[0]),
                     "reused_existing_matrix": reused},
                    {}, outputs)
    return 0


def cmd_generate_target(args) -> int:
    model = load_model(_resolve_config(args.config))
    out = _out_dir(args)
    if model.target is None:
        raise ConfigError("config has no [target] recipe")
    recipe = model.target
    if args.seed is not None:
        recipe = replace(recipe, seed=args.seed)
    system = model.assemble() if recipe.variant == "forward-solve" else None
    result = generate(recipe, system=system, mesh=model.mesh)
    save_field(result.field, out / "target.csv")
    outputs = {"target.csv": _digest_file(out / "target.csv")}
    params = {"variant": recipe.variant, "noise_sigma": recipe.noise_sigma,
              "seed": recipe.seed}
    if result.true_loads is not None:
        params["true_loads"] = [list(e) for e in result.true_loads]
    _write_manifest(out, "generate-target", model, params, {}, outputs)
    return 0


def cmd_optimize(args) -> int:
    model = load_model(_resolve_config(args.config))
    out = _out_dir(args)
    inputs: Dict[str, str] = {}

    need_system = (args.matrix is None
                   or args.target is None
                   or args.scale_to_allowable)
    system = model.assemble() if need_system else None

    if args.matrix:
        inputs[str(args.matrix)] = _digest_file(Path(args.matrix))
        matrix = load_matrix(args.matrix,
                             expect_mesh_hash=model.mesh.content_hash())
    else:
        matrix, _ = _sweep_matrix(model, system, args.workers)

    field = _target_field(model, system, args, inputs)
    target = resample_to_mesh(field, model.mesh, nodes=matrix.eval_nodes)

    result = outer_search(matrix, target, bounds=model.bounds,
                          strategy=args.strategy, solver=args.solver,
                          workers=args.workers,
                          gap_check_limit=args.gap_check_limit,
                          mesh=model.mesh)
    doc = result.to_dict()

    if args.scale_to_allowable:
        scaled = scale_to_allowable(system, result.nodes, result.amplitudes,
                                    direction=model.direction)
        doc["scaled"] = {
            "scale": scaled.scale,
            "amplitudes": list(scaled.amplitudes),
            "limiting_material": scaled.limiting_material,
            "stresses": scaled.stresses,
            "allowables": scaled.allowables,
        }

    outputs = {"result.json": _write_json(out / "result.json", doc)}
    _write_manifest(out, "optimize", model,
                    {"strategy": args.strategy, "solver": args.solver,
                     "scale_to_allowable": bool(args.scale_to_allowable),
                     "seed": args.seed},
                    inputs, outputs)
    return 0


def cmd_analyze(args) -> int:
    model = load_model(_resolve_config(args.config))
    out = _out_dir(args)
    system = model.assemble()
    inputs: Dict[str, str] = {}

    if args.loads:
        case = _case_from_result(Path(args.loads), model.direction)
        inputs[str(args.loads)] = _digest_file(Path(args.loads))
    else:
        case = _reference_case(model)

    disp = solve(system, case)
    z = model.surface_z()
    strains = surface_strain(system, disp, z)
    settings = model.analysis

    field = direction_field(strains, settings.policy, branch=settings.branch,
                            excluded=model.excluded_regions())
    save_direction_field(field, out / "directions.csv")
    outputs = {"directions.csv": _digest_file(out / "directions.csv")}

    seeds = (_read_seeds(Path(args.seeds)) if args.seeds else settings.seeds)
    if args.seeds:
        inputs[str(args.seeds)] = _digest_file(Path(args.seeds))
    trajectory_rows: List[Dict] = []
    for i, seed in enumerate(seeds):
        row: Dict = {"seed": [seed[0], seed[1]]}
        try:
            traj = trace(field, seed, branch=settings.branch,
                         step=settings.step)
        except TraceError as exc:
            row["error"] = str(exc)
        else:
            name = f"trajectory_{i + 1:02d}.csv"
            save_trajectory(traj, out / name)
            outputs[name] = _digest_file(out / name)
            row.update({"file": name, "termination": traj.termination,
                        "n_points": len(traj)})
        trajectory_rows.append(row)

    fraction = min_strain_audit(strains, settings.min_strain_threshold)
    analysis_doc = {
        "schema": "direction-analysis v1",
        "policy": settings.policy,
        "branch": settings.branch,
        "surface_z": z,
        "loads": [list(e) for e in case.entries],
        "min_strain": {"threshold": settings.min_strain_threshold,
                       "fraction_below": fraction},
        "trajectories": trajectory_rows,
    }
    outputs["analysis.json"] = _write_json(out / "analysis.json", analysis_doc)

    # deflection comparison against the configured target, when one exists
    if model.target is not None or args.target:
        target_fld = _target_field(model, system, args, inputs)
        achieved = field_from_mesh(model.mesh,
                                   _signed_deflection(model, disp.w))
        p0 = model.probes.get("p0")
        if p0 is None:
            raise ConfigError("config [probes] must define p0 for comparison")
        extra = [xy for name, xy in sorted(model.probes.items())
                 if name != "p0"]
        report = compare(target_fld, achieved, p0, probes=extra)
        outputs["comparison.json"] = _write_json(out / "comparison.json",
                                                 report.to_dict())

    _write_manifest(out, "analyze", model,
                    {"policy": settings.policy, "branch": settings.branch,
                     "surface_z": z, "n_seeds": len(seeds)},
                    inputs, outputs)
    return 0


def cmd_compare(args) -> int:
    model = load_model(_resolve_config(args.config))
    out = _out_dir(args)
    inputs = {str(args.target): _digest_file(Path(args.target))}
    target_fld = load_field(args.target)

    if args.other:
        other_fld = load_field(args.other)
        inputs[str(args.other)] = _digest_file(Path(args.other))
    else:
        system = model.assemble()
        disp = solve(system, _reference_case(model))
        other_fld = field_from_mesh(model.mesh,
                                    _signed_deflection(model, disp.w))

    p0 = model.probes.get("p0")
    if p0 is None:
        raise ConfigError("config [probes] must define p0")
    extra = [xy for name, xy in sorted(model.probes.items()) if name != "p0"]
    report = compare(target_fld, other_fld, p0, probes=extra)
    outputs = {"comparison.json": _write_json(out / "comparison.json",
                                              report.to_dict())}
    _write_manifest(out, "compare", model, {"p0": list(p0)}, inputs, outputs)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plateopt",
        description="Plate-bending load placement and strain-direction "
                    "analysis pipeline.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="TOML config file or packaged config name "
                            f"{builtin_configs()}")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel workers (default 1)")

    p = sub.add_parser("solve", help="solve the reference load case")
    common(p)
    p.add_argument("--loads", help="optimizer result.json to re-solve under")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="unit-load compliance sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("generate-target", help="write the target field")
    common(p)
    p.add_argument("--seed", type=int, help="override the recipe noise seed")
    p.set_defaults(func=cmd_generate_target)

    p = sub.add_parser("optimize", help="three-load placement search")
    common(p)
    p.add_argument("--matrix", help="reuse a saved compliance matrix")
    p.add_argument("--target", help="target field file (default: config recipe)")
    p.add_argument("--seed", type=int, help="override the recipe noise seed")
    p.add_argument("--strategy", default="exhaustive",
                   choices=["exhaustive", "coordinate-descent"])
    p.add_argument("--solver", default="exact", choices=["exact", "simplex"])
    p.add_argument("--gap-check-limit", type=int, default=1000,
                   help="max triple count for the optimality-gap check "
                        "after coordinate descent")
    p.add_argument("--scale-to-allowable", action="store_true",
                   help="append the strength-limited scaling to the result")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("analyze", help="direction field + trajectories")
    common(p)
    p.add_argument("--loads", help="optimizer result.json with the loads")
    p.add_argument("--seeds", help="CSV file of trajectory seeds (x,y lines)")
    p.add_argument("--target", help="target field file for the comparison")
    p.add_argument("--seed", type=int, help="override the recipe noise seed")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="compare two deflection fields")
    common(p)
    p.add_argument("--target", required=True, help="reference field file")
    p.add_argument("--other",
                   help="field to compare (default: solve the config loads)")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PlateOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
