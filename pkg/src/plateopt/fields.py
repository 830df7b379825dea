"""Gridded scalar fields: ingestion, resampling, normalization, comparison.

A ScalarField is a regular grid of out-of-plane deflections (or any nodal
scalar) with an optional cell mask.  Files round-trip losslessly: values are
written with repr() so every bit survives the text format.  The masked-cell
sentinel in files is ``NA``.

Comparison convention: fields are normalized to their value at a reference
point P0 before deviations are taken, so deviations read as fractions of the
reference deflection; the raw and best-fit-scaled deviations are reported
alongside, since two fields may match in shape while disagreeing in
amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import FieldError, FieldFormatError
from .fe import StrainField
from .mesh import Mesh

_MAGIC = "# scalar-field v1"
_SENTINEL = "NA"


class Transform(NamedTuple):
    """Maps mesh coordinates into field coordinates: p -> (dx, dy) + scale*p."""

    dx: float = 0.0
    dy: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True)
class ScalarField:
    """Regular grid of values; ``masked`` marks excluded cells.

    ``values[iy, ix]`` sits at (origin_x + ix*spacing, origin_y + iy*spacing).
    Masked cells carry NaN values; unmasked cells must be finite.
    """

    origin: Tuple[float, float]
    spacing: float
    values: np.ndarray                       # (ny, nx)
    masked: Optional[np.ndarray] = None      # (ny, nx) bool, True = excluded

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 2:
            raise FieldError(f"field grid must be at least 2x2, got {values.shape}")
        if not self.spacing > 0.0:
            raise FieldError(f"grid spacing must be positive, got {self.spacing}")
        if self.masked is None:
            masked = np.zeros(values.shape, dtype=bool)
        else:
            masked = np.asarray(self.masked, dtype=bool)
            if masked.shape != values.shape:
                raise FieldError(
                    f"mask shape {masked.shape} does not match values {values.shape}"
                )
        if not np.all(np.isfinite(values[~masked])):
            raise FieldError("non-finite value on an unmasked cell")
        values = values.copy()
        values[masked] = np.nan
        values.flags.writeable = False
        masked = masked.copy()
        masked.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masked", masked)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the grid."""
        x0, y0 = self.origin
        return (x0, x0 + (self.nx - 1) * self.spacing,
                y0, y0 + (self.ny - 1) * self.spacing)

    def node_xy(self) -> Tuple[np.ndarray, np.ndarray]:
        x0, y0 = self.origin
        xs = x0 + np.arange(self.nx) * self.spacing
        ys = y0 + np.arange(self.ny) * self.spacing
        return np.meshgrid(xs, ys)

    def interpolate(self, x, y) -> np.ndarray:
        """Bilinear values at points (x, y); NaN outside or touching a mask.

        Accepts scalars or arrays; points exactly on the boundary are inside.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x0, y0 = self.origin
        fx = (x - x0) / self.spacing
        fy = (y - y0) / self.spacing
        inside = (fx >= 0.0) & (fx <= self.nx - 1) & (fy >= 0.0) & (fy <= self.ny - 1)
        ix = np.clip(np.floor(fx).astype(int), 0, self.nx - 2)
        iy = np.clip(np.floor(fy).astype(int), 0, self.ny - 2)
        u = fx - ix
        v = fy - iy
        vals = ((1 - u) * (1 - v) * self.values[iy, ix]
                + u * (1 - v) * self.values[iy, ix + 1]
                + u * v * self.values[iy + 1, ix + 1]
                + (1 - u) * v * self.values[iy + 1, ix])
        # any masked corner poisons the cell through its NaN value
        return np.where(inside, vals, np.nan)

    def scaled(self, c: float) -> "ScalarField":
        vals = self.values * c
        vals = np.where(self.masked, 0.0, vals)     # keep constructor happy
        return ScalarField(origin=self.origin, spacing=self.spacing,
                           values=vals, masked=self.masked)


def field_from_mesh(mesh: Mesh, nodal_values: np.ndarray) -> ScalarField:
    """Wrap flat nodal values (node-id order) as a grid field on the mesh."""
    nodal_values = np.asarray(nodal_values, dtype=float)
    if nodal_values.shape != (mesh.n_nodes,):
        raise FieldError(
            f"expected {mesh.n_nodes} nodal values, got {nodal_values.shape}"
        )
    return ScalarField(origin=(0.0, 0.0), spacing=mesh.element_size,
                       values=nodal_values.reshape(mesh.nny, mesh.nnx))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_field(fld: ScalarField, path) -> None:
    """Write the gridded-CSV form: header comments, then one grid row per line."""
    lines = [_MAGIC,
             f"# origin: {fld.origin[0]!r} {fld.origin[1]!r}",
             f"# spacing: {fld.spacing!r}",
             f"# shape: {fld.ny} {fld.nx}"]
    for iy in range(fld.ny):
        row = [_SENTINEL if fld.masked[iy, ix] else repr(float(fld.values[iy, ix]))
               for ix in range(fld.nx)]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _header_value(lines: List[str], key: str) -> str:
    prefix = f"# {key}:"
    for ln in lines:
        if ln.startswith(prefix):
            return ln[len(prefix):].strip()
    raise FieldFormatError(f"missing '{key}' header")


def load_field(path) -> ScalarField:
    """Read a gridded-CSV field written by :func:`save_field`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _MAGIC:
        raise FieldFormatError(f"{path}: not a scalar-field file")
    header = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    try:
        ox, oy = (float(v) for v in _header_value(header, "origin").split())
        spacing = float(_header_value(header, "spacing"))
        ny, nx = (int(v) for v in _header_value(header, "shape").split())
    except ValueError as exc:
        raise FieldFormatError(f"{path}: malformed header ({exc})") from exc
    if len(body) != ny:
        raise FieldFormatError(
            f"{path}: header promises {ny} rows, body has {len(body)}"
        )
    values = np.zeros((ny, nx))
    masked = np.zeros((ny, nx), dtype=bool)
    for iy, ln in enumerate(body):
        cells = ln.split(",")
        if len(cells) != nx:
            raise FieldFormatError(
                f"{path}: row {iy} has {len(cells)} cells, expected {nx}"
            )
        for ix, cell in enumerate(cells):
            if cell == _SENTINEL:
                masked[iy, ix] = True
            else:
                try:
                    values[iy, ix] = float(cell)
                except ValueError as exc:
                    raise FieldFormatError(
                        f"{path}: bad value {cell!r} at row {iy} col {ix}"
                    ) from exc
    if not np.all(np.isfinite(values[~masked])):
        raise FieldFormatError(f"{path}: non-finite value on an unmasked cell")
    return ScalarField(origin=(ox, oy), spacing=spacing, values=values,
                       masked=masked)


# ---------------------------------------------------------------------------
# resampling and normalization
# ---------------------------------------------------------------------------

def resample_to_mesh(fld: ScalarField, mesh: Mesh,
                     transform: Transform = Transform(),
                     nodes: Optional[np.ndarray] = None) -> np.ndarray:
    """Field values at mesh nodes (NaN where unreachable or masked).

    ``transform`` maps mesh coordinates into the field's frame — e.g. a
    demonstrator built at half scale against a full-scale reference field uses
    scale=2 plus the footprint offset.  Nodes landing outside the field or on
    masked cells come back NaN so downstream sums skip them; if every node is
    NaN the domains do not overlap and that is an error.
    """
    if nodes is None:
        nodes = np.arange(mesh.n_nodes)
    nodes = np.asarray(nodes, dtype=int)
    iy, ix = np.divmod(nodes, mesh.nnx)
    x = ix * mesh.element_size
    y = iy * mesh.element_size
    fx = transform.dx + transform.scale * x
    fy = transform.dy + transform.scale * y
    out = fld.interpolate(fx, fy)
    if not np.any(np.isfinite(out)):
        raise FieldError("mesh footprint does not overlap the field domain")
    return out


def normalize_at(fld: ScalarField, p0: Tuple[float, float],
                 epsilon: float = 1e-9) -> ScalarField:
    """Divide the field by its interpolated value at P0.

    The reference magnitude must exceed ``epsilon`` — normalizing by (near)
    zero would blow the field up rather than standardize it.
    """
    ref = float(fld.interpolate(p0[0], p0[1]))
    if not np.isfinite(ref) or abs(ref) <= epsilon:
        raise FieldError(
            f"reference value at P0={tuple(p0)} is {ref!r}; cannot normalize"
        )
    return fld.scaled(1.0 / ref)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    """Deviation metrics between a target field and a computed field.

    ``k`` is the least-squares amplitude ratio target = k * other over the
    unmasked overlap of raw values.  The ``normalized_*`` metrics compare the
    two fields after each is normalized at P0 (dimensionless, fractions of
    the P0 value); ``raw_*`` uses the fields as-is and ``scaled_*`` after
    multiplying the other field by k.
    """

    p0: Tuple[float, float]
    k: float
    n_overlap: int
    raw_rms: float
    raw_max: float
    scaled_rms: float
    scaled_max: float
    normalized_rms: float
    normalized_max: float
    points: Tuple[Dict, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict:
        return {
            "schema": "comparison-report v1",
            "p0": [self.p0[0], self.p0[1]],
            "k": self.k,
            "n_overlap": self.n_overlap,
            "raw_rms": self.raw_rms, "raw_max": self.raw_max,
            "scaled_rms": self.scaled_rms, "scaled_max": self.scaled_max,
            "normalized_rms": self.normalized_rms,
            "normalized_max": self.normalized_max,
            "points": list(self.points),
        }


def _rms_max(dev: np.ndarray) -> Tuple[float, float]:
    return (float(np.sqrt(np.mean(dev * dev))), float(np.max(np.abs(dev))))


def compare(target: ScalarField, other: ScalarField, p0: Tuple[float, float],
            probes: Sequence[Tuple[float, float]] = ()) -> ComparisonReport:
    """Deviation report between two fields over their unmasked overlap.

    ``other`` is resampled onto ``target``'s grid.  Raises when the domains
    do not overlap or either field cannot be normalized at P0.
    """
    gx, gy = target.node_xy()
    b_vals = other.interpolate(gx, gy)
    valid = (~target.masked) & np.isfinite(b_vals)
    if not np.any(valid):
        raise FieldError("fields do not overlap on unmasked cells")
    a = target.values[valid]
    b = b_vals[valid]

    denom = float(b @ b)
    if denom == 0.0:
        raise FieldError("cannot fit a scale against an identically zero field")
    k = float(a @ b) / denom

    a_ref = float(target.interpolate(p0[0], p0[1]))
    b_ref = float(other.interpolate(p0[0], p0[1]))
    if not np.isfinite(a_ref) or abs(a_ref) <= 1e-9 or \
       not np.isfinite(b_ref) or abs(b_ref) <= 1e-9:
        raise FieldError(
            f"cannot normalize at P0={tuple(p0)}: references {a_ref!r}, {b_ref!r}"
        )

    raw_rms, raw_max = _rms_max(a - b)
    scaled_rms, scaled_max = _rms_max(a - k * b)
    norm_rms, norm_max = _rms_max(a / a_ref - b / b_ref)

    points = []
    for (px, py) in probes:
        av = float(target.interpolate(px, py))
        bv = float(other.interpolate(px, py))
        points.append({
            "x": px, "y": py, "target": av, "other": bv,
            "normalized_deviation": (av / a_ref - bv / b_ref
                                     if np.isfinite(av) and np.isfinite(bv)
                                     else None),
        })

    return ComparisonReport(p0=(float(p0[0]), float(p0[1])), k=k,
                            n_overlap=int(np.count_nonzero(valid)),
                            raw_rms=raw_rms, raw_max=raw_max,
                            scaled_rms=scaled_rms, scaled_max=scaled_max,
                            normalized_rms=norm_rms, normalized_max=norm_max,
                            points=tuple(points))


# ---------------------------------------------------------------------------
# measurability audit
# ---------------------------------------------------------------------------

def min_strain_audit(strains: StrainField, threshold: float) -> float:
    """Area fraction where the largest |principal strain| is below threshold.

    Nodes are weighted by tributary area (interior 1, edges 1/2, corners 1/4)
    so the fraction approximates a true surface integral.  The comparison is
    strict, so a zero threshold always yields 0.
    """
    a = 0.5 * (strains.exx + strains.eyy)
    radius = np.hypot(0.5 * (strains.exx - strains.eyy), strains.exy)
    peak = np.abs(a) + radius            # max(|eps1|, |eps2|)

    weights = np.ones_like(peak)
    weights[0, :] *= 0.5
    weights[-1, :] *= 0.5
    weights[:, 0] *= 0.5
    weights[:, -1] *= 0.5
    below = peak < threshold
    return float(np.sum(weights[below]) / np.sum(weights))
