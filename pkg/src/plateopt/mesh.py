"""Structured rectangular plate mesh, node sets, and boundary conditions.

The mesh is a regular grid of square 4-node elements spanning
[0, width] x [0, height].  Node ids run row-major from the origin:
``node = iy * nnx + ix`` with coordinates ``(ix * es, iy * es)``.  Element ids
run row-major over element cells the same way; connectivity is
counterclockwise starting at the cell's lower-left node.

Five degrees of freedom per node: (u, v, w, rx, ry).  ``rx`` is the rotation
of the normal toward +x (in-plane displacement at offset z is u + z*rx),
``ry`` the rotation toward +y.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import FrozenSet, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import MeshError

DOF_NAMES = ("u", "v", "w", "rx", "ry")
N_DOF = len(DOF_NAMES)

class Rect(NamedTuple):
    """Axis-aligned rectangle with inclusive bounds."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float


def _check_rect(rect, label: str = "rect") -> Rect:
    if len(rect) != 4:
        raise MeshError(f"{label}: expected (xmin, xmax, ymin, ymax), got {rect!r}")
    xmin, xmax, ymin, ymax = map(float, rect)
    if xmax < xmin or ymax < ymin:
        raise MeshError(f"{label}: empty rectangle {rect!r}")
    return Rect(xmin, xmax, ymin, ymax)


def _grid_count(span: float, step: float, label: str) -> int:
    """Number of cells along one direction; span must divide evenly."""
    n = span / step
    n_round = int(round(n))
    if n_round < 1 or abs(n - n_round) > 1e-9 * max(1.0, n):
        remainder = span - n_round * step if n_round >= 1 else span
        raise MeshError(
            f"{label} span {span} is not an integer multiple of "
            f"element_size {step} (remainder {remainder:g})"
        )
    return n_round


@dataclass(frozen=True)
class Mesh:
    """Immutable structured grid with a per-element laminate assignment."""

    width: float
    height: float
    element_size: float
    half_model: bool
    nnx: int
    nny: int
    laminate_names: Tuple[str, ...]
    element_laminate: np.ndarray = field(repr=False)  # (n_elements,) int

    def __post_init__(self):
        self.element_laminate.flags.writeable = False

    # --- sizes ------------------------------------------------------------

    @property
    def nex(self) -> int:
        return self.nnx - 1

    @property
    def ney(self) -> int:
        return self.nny - 1

    @property
    def n_nodes(self) -> int:
        return self.nnx * self.nny

    @property
    def n_elements(self) -> int:
        return self.nex * self.ney

    # --- node lookups -----------------------------------------------------

    def node_id(self, ix: int, iy: int) -> int:
        if not (0 <= ix < self.nnx and 0 <= iy < self.nny):
            raise MeshError(f"grid index ({ix}, {iy}) outside mesh")
        return iy * self.nnx + ix

    def node_coords(self, nodes=None) -> np.ndarray:
        """Coordinates (k, 2) of the given node ids (all nodes if None)."""
        if nodes is None:
            nodes = np.arange(self.n_nodes)
        nodes = np.atleast_1d(np.asarray(nodes, dtype=int))
        ix = nodes % self.nnx
        iy = nodes // self.nnx
        return np.column_stack([ix * self.element_size, iy * self.element_size])

    def node_at(self, x: float, y: float) -> int:
        """Node id at coordinates (x, y); errors if not a grid point."""
        es = self.element_size
        tol = 1e-6 * es
        ix = int(round(x / es))
        iy = int(round(y / es))
        if abs(x - ix * es) > tol or abs(y - iy * es) > tol:
            raise MeshError(f"({x}, {y}) is not a grid node (spacing {es})")
        if not (0 <= ix < self.nnx and 0 <= iy < self.nny):
            raise MeshError(f"({x}, {y}) lies outside the mesh")
        return iy * self.nnx + ix

    def nodes_in_rect(self, rect: Rect) -> np.ndarray:
        """Sorted ids of all nodes inside the rectangle (inclusive bounds)."""
        xmin, xmax, ymin, ymax = _check_rect(rect)
        es = self.element_size
        tol = 1e-6 * es
        ix = np.arange(self.nnx)
        iy = np.arange(self.nny)
        in_x = ix[(ix * es >= xmin - tol) & (ix * es <= xmax + tol)]
        in_y = iy[(iy * es >= ymin - tol) & (iy * es <= ymax + tol)]
        ids = (in_y[:, None] * self.nnx + in_x[None, :]).ravel()
        return np.sort(ids)

    # --- element lookups ----------------------------------------------------

    def element_nodes(self, e: int) -> np.ndarray:
        """Connectivity of element e, counterclockwise from lower-left."""
        ex = e % self.nex
        ey = e // self.nex
        n0 = ey * self.nnx + ex
        return np.array([n0, n0 + 1, n0 + self.nnx + 1, n0 + self.nnx])

    def all_element_nodes(self) -> np.ndarray:
        """Connectivity table (n_elements, 4)."""
        ex = np.arange(self.nex)
        ey = np.arange(self.ney)
        n0 = (ey[:, None] * self.nnx + ex[None, :]).ravel()
        return np.column_stack([n0, n0 + 1, n0 + self.nnx + 1, n0 + self.nnx])

    def element_origin(self, e: int) -> Tuple[float, float]:
        ex = e % self.nex
        ey = e // self.nex
        return (ex * self.element_size, ey * self.element_size)

    def elements_in_rect(self, rect: Rect) -> np.ndarray:
        """Elements whose centroid lies inside the rectangle."""
        xmin, xmax, ymin, ymax = _check_rect(rect)
        es = self.element_size
        cx = (np.arange(self.nex) + 0.5) * es
        cy = (np.arange(self.ney) + 0.5) * es
        in_x = np.where((cx >= xmin) & (cx <= xmax))[0]
        in_y = np.where((cy >= ymin) & (cy <= ymax))[0]
        return np.sort((in_y[:, None] * self.nex + in_x[None, :]).ravel())

    # --- identity -----------------------------------------------------------

    def content_hash(self) -> str:
        """Stable digest of geometry and region assignment."""
        h = hashlib.sha256()
        text = (f"grid-mesh v1\n{self.width!r} {self.height!r} "
                f"{self.element_size!r} {int(self.half_model)}\n"
                f"{','.join(self.laminate_names)}\n")
        h.update(text.encode())
        h.update(np.ascontiguousarray(self.element_laminate, dtype=np.int64).tobytes())
        return h.hexdigest()


def build_grid_mesh(width: float, height: float, element_size: float,
                    half_model: bool = False,
                    default_laminate: str = "default",
                    patches: Sequence[Tuple[Rect, str]] = ()) -> Mesh:
    """Build the structured mesh.

    ``width`` and ``height`` are the meshed footprint; when ``half_model`` is
    set they describe the symmetric half and the x=0 edge is the symmetry
    line (the flag itself only marks intent — constraints are applied through
    BoundaryConditions).  ``patches`` assigns laminate names to rectangular
    element regions by centroid, later entries winning overlaps.
    """
    if width <= 0 or height <= 0 or element_size <= 0:
        raise MeshError(
            f"width, height, element_size must be positive, got "
            f"({width}, {height}, {element_size})"
        )
    nex = _grid_count(width, element_size, "width")
    ney = _grid_count(height, element_size, "height")

    names = [default_laminate]
    element_laminate = np.zeros(nex * ney, dtype=np.int64)
    # temporary mesh for centroid lookups
    proto = Mesh(width=width, height=height, element_size=element_size,
                 half_model=half_model, nnx=nex + 1, nny=ney + 1,
                 laminate_names=(default_laminate,),
                 element_laminate=element_laminate.copy())
    for rect, name in patches:
        if name not in names:
            names.append(name)
        code = names.index(name)
        element_laminate[proto.elements_in_rect(rect)] = code

    return Mesh(width=width, height=height, element_size=element_size,
                half_model=half_model, nnx=nex + 1, nny=ney + 1,
                laminate_names=tuple(names), element_laminate=element_laminate)


# ---------------------------------------------------------------------------
# node sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeSets:
    """The three disjoint candidate-node sets for concentrated loads."""

    j: np.ndarray
    k: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        for arr in (self.j, self.k, self.l):
            arr.flags.writeable = False

    def as_tuple(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.j, self.k, self.l)

    @property
    def total(self) -> int:
        return len(self.j) + len(self.k) + len(self.l)


def define_node_sets(mesh: Mesh, j_rect: Rect, k_rect: Rect, l_rect: Rect) -> NodeSets:
    """Select the candidate sets by rectangles; sets must be disjoint, non-empty."""
    sets = {}
    for label, rect in (("J", j_rect), ("K", k_rect), ("L", l_rect)):
        ids = mesh.nodes_in_rect(_check_rect(rect, f"node set {label}"))
        if len(ids) == 0:
            raise MeshError(f"node set {label}: rectangle {rect!r} selects no nodes")
        sets[label] = ids
    for a, b in (("J", "K"), ("J", "L"), ("K", "L")):
        overlap = np.intersect1d(sets[a], sets[b])
        if len(overlap):
            raise MeshError(
                f"node sets {a} and {b} overlap at node ids {overlap[:8].tolist()}"
            )
    return NodeSets(j=sets["J"], k=sets["K"], l=sets["L"])


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

_SYMMETRY_EDGES = {
    # edge -> (axis, value-selector, constrained dofs)
    "x_min": ("x", 0.0, frozenset({"u", "rx"})),
    "x_max": ("x", None, frozenset({"u", "rx"})),
    "y_min": ("y", 0.0, frozenset({"v", "ry"})),
    "y_max": ("y", None, frozenset({"v", "ry"})),
}


@dataclass(frozen=True)
class BoundaryConditions:
    """Homogeneous constraints: rectangles with DOF subsets, plus symmetry edge.

    ``fixed``: sequence of (rect, dofs) where dofs is a subset of DOF_NAMES.
    ``symmetry_edge``: one of x_min/x_max/y_min/y_max or None.  A symmetry
    edge constrains the in-plane translation normal to the edge and the
    rotation of the normal in the mirror plane (u+rx for x-edges, v+ry for
    y-edges).
    """

    fixed: Tuple[Tuple[Rect, FrozenSet[str]], ...] = ()
    symmetry_edge: Optional[str] = None

    def __post_init__(self):
        cleaned = []
        for rect, dofs in self.fixed:
            rect = _check_rect(rect, "boundary rect")
            dofs = frozenset(dofs)
            bad = dofs - set(DOF_NAMES)
            if bad:
                raise MeshError(f"unknown DOF names {sorted(bad)}; valid: {DOF_NAMES}")
            if not dofs:
                raise MeshError(f"boundary rect {rect!r} constrains no DOFs")
            cleaned.append((rect, dofs))
        object.__setattr__(self, "fixed", tuple(cleaned))
        if self.symmetry_edge is not None and self.symmetry_edge not in _SYMMETRY_EDGES:
            raise MeshError(
                f"symmetry_edge must be one of {sorted(_SYMMETRY_EDGES)} or None, "
                f"got {self.symmetry_edge!r}"
            )

    def constrained_mask(self, mesh: Mesh) -> np.ndarray:
        """Boolean (n_nodes, 5) mask of constrained DOFs."""
        mask = np.zeros((mesh.n_nodes, N_DOF), dtype=bool)
        for rect, dofs in self.fixed:
            nodes = mesh.nodes_in_rect(rect)
            for name in dofs:
                mask[nodes, DOF_NAMES.index(name)] = True
        if self.symmetry_edge is not None:
            axis, value, dofs = _SYMMETRY_EDGES[self.symmetry_edge]
            if axis == "x":
                edge = value if value is not None else mesh.width
                nodes = mesh.nodes_in_rect((edge, edge, 0.0, mesh.height))
            else:
                edge = value if value is not None else mesh.height
                nodes = mesh.nodes_in_rect((0.0, mesh.width, edge, edge))
            for name in dofs:
                mask[nodes, DOF_NAMES.index(name)] = True
        return mask
