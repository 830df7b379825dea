"""Influence (compliance) matrix built by a unit-load sweep.

One column per candidate node: the transverse displacement at every
evaluation node under a unit concentrated load at the candidate, measured
positive along the load direction (so the self-influence entry of a node that
is both candidate and evaluation node is positive).  Units: mm/N.

Columns are independent solves against one factorization; the sweep is
embarrassingly parallel and bit-deterministic for any worker count because
chunk boundaries are fixed (see plateopt.parallel).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import FieldFormatError, MeshError
from .fe import SystemMatrix, _W
from .mesh import N_DOF, NodeSets
from .parallel import chunk_ranges, run_chunks

_CHUNK = 64
_DIRECTIONS = {"+z": 1.0, "-z": -1.0}
SET_LABELS = ("J", "K", "L")


@dataclass(frozen=True)
class ComplianceMatrix:
    """Influence coefficients (n_eval x n_candidates) plus provenance.

    ``set_sizes`` gives the candidate count per set (J, K, L); candidate
    columns are ordered J then K then L, ascending node id inside each set.
    ``flagged`` marks candidates whose transverse DOF is constrained — their
    columns are identically zero and must not enter load placement.
    """

    zeta: np.ndarray = field(repr=False)
    eval_nodes: np.ndarray = field(repr=False)
    cand_nodes: np.ndarray = field(repr=False)
    set_sizes: Tuple[int, int, int]
    unit: float
    direction: str
    mesh_hash: str
    flagged: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.zeta, self.eval_nodes, self.cand_nodes, self.flagged):
            arr.flags.writeable = False
        if self.zeta.shape != (len(self.eval_nodes), len(self.cand_nodes)):
            raise FieldFormatError(
                f"zeta shape {self.zeta.shape} does not match "
                f"{len(self.eval_nodes)} eval nodes x {len(self.cand_nodes)} candidates"
            )
        if sum(self.set_sizes) != len(self.cand_nodes):
            raise FieldFormatError("set sizes do not sum to the candidate count")

    def set_slice(self, which: str) -> slice:
        """Column slice of candidate set 'J', 'K' or 'L'."""
        i = SET_LABELS.index(which)
        lo = sum(self.set_sizes[:i])
        return slice(lo, lo + self.set_sizes[i])

    def set_columns(self, which: str) -> np.ndarray:
        return self.zeta[:, self.set_slice(which)]

    def set_nodes(self, which: str) -> np.ndarray:
        return self.cand_nodes[self.set_slice(which)]


def default_evaluation_nodes(system: SystemMatrix) -> np.ndarray:
    """All nodes whose transverse displacement is unconstrained."""
    return np.where(~system.constrained[:, _W])[0]


def sweep(system: SystemMatrix, sets: NodeSets,
          eval_nodes: Optional[np.ndarray] = None,
          unit: float = 1.0, direction: str = "-z",
          workers: int = 1) -> ComplianceMatrix:
    """Run the unit-load sweep over all candidate nodes."""
    if direction not in _DIRECTIONS:
        raise MeshError(f"direction must be '+z' or '-z', got {direction!r}")
    if unit <= 0.0:
        raise MeshError(f"unit load must be > 0, got {unit!r}")
    mesh = system.mesh
    if eval_nodes is None:
        eval_nodes = default_evaluation_nodes(system)
    eval_nodes = np.asarray(eval_nodes, dtype=int)
    if len(eval_nodes) == 0:
        raise MeshError("no evaluation nodes")
    if eval_nodes.min() < 0 or eval_nodes.max() >= mesh.n_nodes:
        raise MeshError("evaluation node id outside mesh")

    cand = np.concatenate([sets.j, sets.k, sets.l])
    m = len(cand)
    signed = _DIRECTIONS[direction] * unit
    flagged = system.constrained[cand, _W].copy()

    zeta = np.empty((len(eval_nodes), m))
    eval_w_rows = eval_nodes * N_DOF + _W
    n_dof = mesh.n_nodes * N_DOF

    def do_chunk(rng):
        lo, hi = rng
        rhs = np.zeros((n_dof, hi - lo))
        rhs[cand[lo:hi] * N_DOF + _W, np.arange(hi - lo)] = signed
        x = system.solve_block(rhs)
        zeta[:, lo:hi] = x[eval_w_rows] / signed
        return None

    run_chunks(do_chunk, chunk_ranges(m, _CHUNK), workers=workers)
    zeta[:, flagged] = 0.0   # reactions only; make the dead columns exact zeros

    return ComplianceMatrix(
        zeta=zeta, eval_nodes=eval_nodes, cand_nodes=cand,
        set_sizes=(len(sets.j), len(sets.k), len(sets.l)),
        unit=float(unit), direction=direction,
        mesh_hash=mesh.content_hash(), flagged=flagged,
    )


# ---------------------------------------------------------------------------
# persistence: self-describing text table, lossless float round-trip
# ---------------------------------------------------------------------------

_MAGIC = "# compliance-matrix v1"


def save_matrix(matrix: ComplianceMatrix, path) -> None:
    """Write the matrix as a text table (repr floats round-trip exactly)."""
    lines = [_MAGIC,
             f"# mesh_hash: {matrix.mesh_hash}",
             f"# unit: {matrix.unit!r}",
             f"# direction: {matrix.direction}",
             f"# set_sizes: {matrix.set_sizes[0]} {matrix.set_sizes[1]} {matrix.set_sizes[2]}",
             "# eval_nodes: " + " ".join(str(n) for n in matrix.eval_nodes),
             "# cand_nodes: " + " ".join(str(n) for n in matrix.cand_nodes),
             "# flagged: " + " ".join(str(int(f)) for f in matrix.flagged),
             f"# shape: {matrix.zeta.shape[0]} {matrix.zeta.shape[1]}"]
    for row in matrix.zeta:
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _header_value(lines, key):
    prefix = f"# {key}: "
    for ln in lines:
        if ln.startswith(prefix):
            return ln[len(prefix):].strip()
    raise FieldFormatError(f"compliance matrix file: missing header {key!r}")


def load_matrix(path, expect_mesh_hash: Optional[str] = None) -> ComplianceMatrix:
    """Read a matrix written by save_matrix; verifies shape and mesh hash."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise FieldFormatError(f"{path}: not a compliance-matrix file")
    header = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln and not ln.startswith("#")]

    mesh_hash = _header_value(header, "mesh_hash")
    if expect_mesh_hash is not None and mesh_hash != expect_mesh_hash:
        raise FieldFormatError(
            f"{path}: mesh hash {mesh_hash[:12]}… does not match the current "
            f"model ({expect_mesh_hash[:12]}…); rebuild the matrix"
        )
    unit = float(_header_value(header, "unit"))
    direction = _header_value(header, "direction")
    set_sizes = tuple(int(v) for v in _header_value(header, "set_sizes").split())
    if len(set_sizes) != 3:
        raise FieldFormatError(f"{path}: set_sizes must have three entries")
    eval_nodes = np.array([int(v) for v in _header_value(header, "eval_nodes").split()])
    cand_nodes = np.array([int(v) for v in _header_value(header, "cand_nodes").split()])
    flagged = np.array([bool(int(v)) for v in _header_value(header, "flagged").split()])
    n, m = (int(v) for v in _header_value(header, "shape").split())

    if len(body) != n:
        raise FieldFormatError(
            f"{path}: corrupt matrix — expected {n} data rows, found {len(body)}"
        )
    try:
        zeta = np.array([[float(v) for v in ln.split()] for ln in body])
    except ValueError as exc:
        raise FieldFormatError(f"{path}: corrupt matrix — {exc}") from exc
    if zeta.shape != (n, m):
        raise FieldFormatError(
            f"{path}: corrupt matrix — shape {zeta.shape}, header says {(n, m)}"
        )
    return ComplianceMatrix(zeta=zeta, eval_nodes=eval_nodes, cand_nodes=cand_nodes,
                            set_sizes=set_sizes, unit=unit, direction=direction,
                            mesh_hash=mesh_hash, flagged=flagged)
