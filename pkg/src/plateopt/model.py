"""One TOML file -> a fully specified plate model plus run parameters.

The configuration carries everything a pipeline run needs: geometry, material
constants, laminate stacks, region assignments, boundary conditions, the three
candidate node sets, probe points, load bounds, trajectory-analysis settings,
and (optionally) a target-field recipe.  The schema is versioned
(``schema_version = 1``) and two demonstrator configurations ship with the
package (see ``builtin_configs()``).

Everything that goes wrong while interpreting a configuration is raised as
:class:`ConfigError` with the offending key path, so the command line can map
it to the usage-error exit code.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .directions import POLICIES
from .errors import ConfigError, PlateOptError
from .fe import SystemMatrix, assemble
from .materials import (Layer, LaminateSpec, MaterialSpec, ShellStiffness,
                        laminate_stiffness)
from .mesh import (BoundaryConditions, Mesh, NodeSets, Rect, build_grid_mesh,
                   define_node_sets)
from .optimize import Bounds
from .targets import TargetRecipe

SCHEMA_VERSION = 1

#: Names accepted by :func:`builtin_config_path`.
BUILTIN_CONFIGS = ("demonstrator-alu", "demonstrator-gfrp")


# ---------------------------------------------------------------------------
# config value helpers
# ---------------------------------------------------------------------------

def _get(table: Mapping, key: str, path: str) -> Any:
    if key not in table:
        raise ConfigError(f"missing required key '{path}.{key}'")
    return table[key]


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{path}' must be a number, got {value!r}")
    return float(value)


def _as_table(value: Any, path: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise ConfigError(f"'{path}' must be a table, got {type(value).__name__}")
    return value


def _as_rect(value: Any, path: str) -> Rect:
    if not isinstance(value, Sequence) or len(value) != 4:
        raise ConfigError(
            f"'{path}' must be a 4-element [xmin, xmax, ymin, ymax] list, "
            f"got {value!r}"
        )
    return Rect(*(_as_float(v, f"{path}[{i}]") for i, v in enumerate(value)))


def _as_point(value: Any, path: str) -> Tuple[float, float]:
    if not isinstance(value, Sequence) or len(value) != 2:
        raise ConfigError(f"'{path}' must be a 2-element [x, y] list, got {value!r}")
    return (_as_float(value[0], f"{path}[0]"), _as_float(value[1], f"{path}[1]"))


# ---------------------------------------------------------------------------
# analysis settings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisSettings:
    """Strain-direction analysis parameters for the `analyze` run.

    ``z`` overrides the through-thickness strain recovery offset; None means
    the top surface of the default laminate.  ``step`` of None defers to the
    tracer's default (a quarter element).
    """

    policy: str = "zero-strain-with-minor-fallback"
    branch: str = "A"
    seeds: Tuple[Tuple[float, float], ...] = ()
    step: Optional[float] = None
    min_strain_threshold: float = 20e-6
    z: Optional[float] = None


def _analysis_from(table: Mapping, path: str) -> AnalysisSettings:
    policy = table.get("policy", "zero-strain-with-minor-fallback")
    if policy not in POLICIES:
        raise ConfigError(f"'{path}.policy' must be one of {POLICIES}, got {policy!r}")
    branch = table.get("branch", "A")
    if branch not in ("A", "B"):
        raise ConfigError(f"'{path}.branch' must be 'A' or 'B', got {branch!r}")
    seeds = tuple(_as_point(p, f"{path}.seeds[{i}]")
                  for i, p in enumerate(table.get("seeds", ())))
    step = table.get("step")
    if step is not None:
        step = _as_float(step, f"{path}.step")
        if step <= 0.0:
            raise ConfigError(f"'{path}.step' must be > 0, got {step}")
    threshold = _as_float(table.get("min_strain_threshold", 20e-6),
                          f"{path}.min_strain_threshold")
    z = table.get("z")
    if z is not None:
        z = _as_float(z, f"{path}.z")
    return AnalysisSettings(policy=policy, branch=branch, seeds=seeds,
                            step=step, min_strain_threshold=threshold, z=z)


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlateModel:
    """Assembled model definition, immutable once built."""

    name: str
    mesh: Mesh
    materials: Dict[str, MaterialSpec]
    laminates: Dict[str, LaminateSpec]
    bcs: BoundaryConditions
    sets: NodeSets
    probes: Dict[str, Tuple[float, float]]
    bounds: Bounds
    unit: float
    direction: str
    patch_rects: Tuple[Rect, ...]
    excluded_margin: int
    analysis: AnalysisSettings
    target: Optional[TargetRecipe]
    digest: str

    def shell_table(self) -> Dict[str, ShellStiffness]:
        """Section stiffness for every laminate the mesh references."""
        return {name: laminate_stiffness(self.laminates[name])
                for name in self.mesh.laminate_names}

    def assemble(self) -> SystemMatrix:
        """Assemble and factorize the constrained stiffness system."""
        return assemble(self.mesh, self.shell_table(), self.bcs)

    def surface_z(self) -> float:
        """Default strain recovery offset: top surface of the base laminate."""
        if self.analysis.z is not None:
            return self.analysis.z
        base = self.laminates[self.mesh.laminate_names[0]]
        return 0.5 * base.thickness

    def excluded_regions(self) -> Tuple[Rect, ...]:
        """Trajectory no-go rectangles: the patches grown by the margin.

        The stiffened footprints (attachment hardware) plus
        ``excluded_margin`` elements on every side, clipped to the mesh.
        """
        pad = self.excluded_margin * self.mesh.element_size
        out = []
        for r in self.patch_rects:
            out.append(Rect(max(r.xmin - pad, 0.0),
                            min(r.xmax + pad, self.mesh.width),
                            max(r.ymin - pad, 0.0),
                            min(r.ymax + pad, self.mesh.height)))
        return tuple(out)


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------

def _materials_from(table: Mapping) -> Dict[str, MaterialSpec]:
    materials: Dict[str, MaterialSpec] = {}
    for name, raw in table.items():
        raw = _as_table(raw, f"materials.{name}")
        path = f"materials.{name}"
        allowable = raw.get("allowable_stress")
        if allowable is not None:
            allowable = _as_float(allowable, f"{path}.allowable_stress")
        try:
            if "e" in raw:
                materials[name] = MaterialSpec.isotropic(
                    name, _as_float(raw["e"], f"{path}.e"),
                    _as_float(_get(raw, "nu", path), f"{path}.nu"),
                    allowable_stress=allowable)
            else:
                materials[name] = MaterialSpec(
                    name=name,
                    e1=_as_float(_get(raw, "e1", path), f"{path}.e1"),
                    e2=_as_float(_get(raw, "e2", path), f"{path}.e2"),
                    e3=_as_float(_get(raw, "e3", path), f"{path}.e3"),
                    nu12=_as_float(_get(raw, "nu12", path), f"{path}.nu12"),
                    nu13=_as_float(_get(raw, "nu13", path), f"{path}.nu13"),
                    nu23=_as_float(_get(raw, "nu23", path), f"{path}.nu23"),
                    g12=_as_float(_get(raw, "g12", path), f"{path}.g12"),
                    g13=_as_float(_get(raw, "g13", path), f"{path}.g13"),
                    g23=_as_float(_get(raw, "g23", path), f"{path}.g23"),
                    allowable_stress=allowable)
        except PlateOptError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{path}: {exc}") from exc
    if not materials:
        raise ConfigError("at least one material is required under [materials]")
    return materials


def _laminates_from(table: Mapping,
                    materials: Mapping[str, MaterialSpec]) -> Dict[str, LaminateSpec]:
    laminates: Dict[str, LaminateSpec] = {}
    for name, raw in table.items():
        raw = _as_table(raw, f"laminates.{name}")
        path = f"laminates.{name}"
        rows = _get(raw, "layers", path)
        layers = []
        for i, row in enumerate(rows):
            if not isinstance(row, Sequence) or len(row) != 3:
                raise ConfigError(
                    f"'{path}.layers[{i}]' must be [material, thickness, angle_deg]"
                )
            mat_name, thickness, angle = row
            if mat_name not in materials:
                raise ConfigError(
                    f"'{path}.layers[{i}]' references unknown material {mat_name!r}"
                )
            try:
                layers.append(Layer(material=materials[mat_name],
                                    thickness=_as_float(thickness, f"{path}.layers[{i}]"),
                                    angle_deg=_as_float(angle, f"{path}.layers[{i}]")))
            except PlateOptError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{path}.layers[{i}]: {exc}") from exc
        try:
            laminates[name] = LaminateSpec(name=name, layers=tuple(layers))
        except PlateOptError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not laminates:
        raise ConfigError("at least one laminate is required under [laminates]")
    return laminates


def _bcs_from(table: Mapping) -> BoundaryConditions:
    fixed = []
    for i, raw in enumerate(table.get("fixed", ())):
        raw = _as_table(raw, f"boundary.fixed[{i}]")
        rect = _as_rect(_get(raw, "rect", f"boundary.fixed[{i}]"),
                        f"boundary.fixed[{i}].rect")
        dofs = _get(raw, "dofs", f"boundary.fixed[{i}]")
        if not isinstance(dofs, Sequence) or isinstance(dofs, str):
            raise ConfigError(f"'boundary.fixed[{i}].dofs' must be a list of DOF names")
        fixed.append((rect, frozenset(str(d) for d in dofs)))
    try:
        return BoundaryConditions(fixed=tuple(fixed),
                                  symmetry_edge=table.get("symmetry_edge"))
    except PlateOptError as exc:
        raise ConfigError(f"boundary: {exc}") from exc


def _target_from(table: Mapping, mesh: Mesh, direction: str,
                 base_dir: Optional[Path]) -> TargetRecipe:
    variant = _get(table, "variant", "target")
    loads = []
    for i, row in enumerate(table.get("loads", ())):
        if not isinstance(row, Sequence) or len(row) != 3:
            raise ConfigError(f"'target.loads[{i}]' must be [x, y, magnitude]")
        x = _as_float(row[0], f"target.loads[{i}][0]")
        y = _as_float(row[1], f"target.loads[{i}][1]")
        mag = _as_float(row[2], f"target.loads[{i}][2]")
        try:
            node = mesh.node_at(x, y)
        except PlateOptError as exc:
            raise ConfigError(f"target.loads[{i}]: {exc}") from exc
        loads.append((node, mag, direction))
    path = table.get("path", "")
    if path and base_dir is not None and not Path(path).is_absolute():
        path = str(base_dir / path)
    seed = table.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"'target.seed' must be an integer, got {seed!r}")
    return TargetRecipe(
        variant=str(variant), loads=tuple(loads),
        benchmark=str(table.get("benchmark", "")),
        params=dict(table.get("params", {})),
        path=str(path),
        noise_sigma=_as_float(table.get("noise_sigma", 0.0), "target.noise_sigma"),
        seed=seed)


def model_from_dict(cfg: Mapping, name: str = "", digest: str = "",
                    base_dir: Optional[Path] = None) -> PlateModel:
    """Build a :class:`PlateModel` from an already-parsed configuration."""
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    name = str(cfg.get("name", name or "unnamed"))

    geo = _as_table(_get(cfg, "geometry", "config"), "geometry")
    width = _as_float(_get(geo, "width", "geometry"), "geometry.width")
    height = _as_float(_get(geo, "height", "geometry"), "geometry.height")
    es = _as_float(_get(geo, "element_size", "geometry"), "geometry.element_size")
    half = bool(geo.get("half_model", False))

    materials = _materials_from(_as_table(_get(cfg, "materials", "config"),
                                          "materials"))
    laminates = _laminates_from(_as_table(_get(cfg, "laminates", "config"),
                                          "laminates"), materials)

    regions = _as_table(cfg.get("regions", {}), "regions")
    default_lam = str(regions.get("default", next(iter(laminates))))
    if default_lam not in laminates:
        raise ConfigError(f"'regions.default' references unknown laminate "
                          f"{default_lam!r}")
    patches = []
    for i, raw in enumerate(regions.get("patches", ())):
        raw = _as_table(raw, f"regions.patches[{i}]")
        rect = _as_rect(_get(raw, "rect", f"regions.patches[{i}]"),
                        f"regions.patches[{i}].rect")
        lam = str(_get(raw, "laminate", f"regions.patches[{i}]"))
        if lam not in laminates:
            raise ConfigError(
                f"'regions.patches[{i}].laminate' references unknown laminate {lam!r}"
            )
        patches.append((rect, lam))

    try:
        mesh = build_grid_mesh(width, height, es, half_model=half,
                               default_laminate=default_lam, patches=patches)
    except PlateOptError as exc:
        raise ConfigError(f"geometry: {exc}") from exc

    bcs = _bcs_from(_as_table(cfg.get("boundary", {}), "boundary"))

    sets_table = _as_table(_get(cfg, "node_sets", "config"), "node_sets")
    try:
        sets = define_node_sets(
            mesh,
            _as_rect(_get(sets_table, "j", "node_sets"), "node_sets.j"),
            _as_rect(_get(sets_table, "k", "node_sets"), "node_sets.k"),
            _as_rect(_get(sets_table, "l", "node_sets"), "node_sets.l"))
    except PlateOptError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"node_sets: {exc}") from exc

    probes = {}
    for pname, value in _as_table(cfg.get("probes", {}), "probes").items():
        x, y = _as_point(value, f"probes.{pname}")
        if not (0.0 <= x <= mesh.width and 0.0 <= y <= mesh.height):
            raise ConfigError(
                f"'probes.{pname}' = ({x}, {y}) lies outside the mesh footprint"
            )
        probes[str(pname)] = (x, y)

    loads_table = _as_table(cfg.get("loads", {}), "loads")
    upper = loads_table.get("upper", 5000.0)
    if isinstance(upper, Sequence):
        upper = tuple(_as_float(u, f"loads.upper[{i}]")
                      for i, u in enumerate(upper))
    else:
        upper = _as_float(upper, "loads.upper")
    try:
        bounds = Bounds(lower=_as_float(loads_table.get("lower", 0.0),
                                        "loads.lower"),
                        upper=upper)
    except PlateOptError as exc:
        raise ConfigError(f"loads: {exc}") from exc
    unit = _as_float(loads_table.get("unit", 1.0), "loads.unit")
    direction = str(loads_table.get("direction", "-z"))
    if direction not in ("-z", "+z"):
        raise ConfigError(f"'loads.direction' must be '-z' or '+z', got {direction!r}")

    excluded = _as_table(cfg.get("excluded", {}), "excluded")
    margin = excluded.get("margin_elements", 1)
    if isinstance(margin, bool) or not isinstance(margin, int) or margin < 0:
        raise ConfigError(
            f"'excluded.margin_elements' must be an integer >= 0, got {margin!r}"
        )

    analysis = _analysis_from(_as_table(cfg.get("analysis", {}), "analysis"),
                              "analysis")
    for i, (sx, sy) in enumerate(analysis.seeds):
        if not (0.0 <= sx <= mesh.width and 0.0 <= sy <= mesh.height):
            raise ConfigError(
                f"'analysis.seeds[{i}]' = ({sx}, {sy}) lies outside the mesh"
            )

    target = None
    if "target" in cfg:
        target = _target_from(_as_table(cfg["target"], "target"), mesh,
                              direction, base_dir)

    return PlateModel(name=name, mesh=mesh, materials=materials,
                      laminates=laminates, bcs=bcs, sets=sets, probes=probes,
                      bounds=bounds, unit=unit, direction=direction,
                      patch_rects=tuple(r for r, _ in patches),
                      excluded_margin=margin, analysis=analysis,
                      target=target, digest=digest)


def digest_bytes(data: bytes) -> str:
    """Hex digest used to identify configuration content."""
    return hashlib.sha256(data).hexdigest()


def digest_dict(cfg: Mapping) -> str:
    """Digest of an in-memory configuration (canonical JSON)."""
    return digest_bytes(json.dumps(cfg, sort_keys=True, default=repr).encode())


def load_model(path) -> PlateModel:
    """Read and validate a TOML model configuration file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return model_from_dict(cfg, name=path.stem, digest=digest_bytes(data),
                           base_dir=path.parent)


def builtin_config_path(name: str) -> Path:
    """Filesystem path of a packaged demonstrator configuration."""
    if name not in BUILTIN_CONFIGS:
        raise ConfigError(
            f"unknown builtin config {name!r}; available: {BUILTIN_CONFIGS}"
        )
    return Path(str(resources.files("plateopt").joinpath("data", f"{name}.toml")))


def builtin_configs() -> Tuple[str, ...]:
    """Names of the packaged demonstrator configurations."""
    return BUILTIN_CONFIGS
