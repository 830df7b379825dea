"""Linear static plate FE: first-order shear deformable quadrilaterals.

Element: 4-node Reissner-Mindlin plate with membrane coupling, 5 DOFs per
node (u, v, w, rx, ry).  Bending and membrane use full 2x2 Gauss quadrature;
transverse shear uses edge-midpoint assumed-strain interpolation (tying), the
standard cure for shear locking on structured quadrilateral meshes.  Because
every element is an identical axis-aligned square, one stiffness matrix per
laminate region serves the whole region.

The global system is reduced by eliminating constrained DOFs and factorized
once with a sparse direct solver; any number of right-hand sides can then be
solved cheaply (the influence-matrix sweep relies on this).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MaterialError, MeshError, PlateOptError, SingularSystemError
from .materials import ShellStiffness
from .mesh import DOF_NAMES, Mesh, N_DOF, BoundaryConditions

_GAUSS = 1.0 / np.sqrt(3.0)
#: 2x2 Gauss points in the corner-aligned order (-,-), (+,-), (+,+), (-,+)
_GP = np.array([(-_GAUSS, -_GAUSS), (+_GAUSS, -_GAUSS),
                (+_GAUSS, +_GAUSS), (-_GAUSS, +_GAUSS)])
_CORNER_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_CORNER_ETA = np.array([-1.0, -1.0, 1.0, 1.0])

# DOF column offsets inside the 20-wide element vector
_U, _V, _W, _RX, _RY = 0, 1, 2, 3, 4


def _shape(xi: float, eta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear shape functions and natural derivatives at (xi, eta)."""
    n = 0.25 * (1.0 + _CORNER_XI * xi) * (1.0 + _CORNER_ETA * eta)
    dn_dxi = 0.25 * _CORNER_XI * (1.0 + _CORNER_ETA * eta)
    dn_deta = 0.25 * _CORNER_ETA * (1.0 + _CORNER_XI * xi)
    return n, dn_dxi, dn_deta


def _membrane_bending_b(xi: float, eta: float, es: float) -> Tuple[np.ndarray, np.ndarray]:
    """Membrane and bending strain-displacement matrices (3 x 20) at (xi, eta)."""
    _, dn_dxi, dn_deta = _shape(xi, eta)
    dn_dx = dn_dxi * 2.0 / es
    dn_dy = dn_deta * 2.0 / es
    bm = np.zeros((3, 4 * N_DOF))
    bb = np.zeros((3, 4 * N_DOF))
    for i in range(4):
        c = i * N_DOF
        bm[0, c + _U] = dn_dx[i]
        bm[1, c + _V] = dn_dy[i]
        bm[2, c + _U] = dn_dy[i]
        bm[2, c + _V] = dn_dx[i]
        bb[0, c + _RX] = dn_dx[i]
        bb[1, c + _RY] = dn_dy[i]
        bb[2, c + _RX] = dn_dy[i]
        bb[2, c + _RY] = dn_dx[i]
    return bm, bb


def _tied_shear_rows(es: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Covariant shear rows at the four edge-midpoint tying points.

    Returns rows (20,) for e_xi at eta=-1 / eta=+1 and e_eta at xi=-1 / xi=+1,
    where e_xi = dw/dxi + (es/2) * rx and e_eta = dw/deta + (es/2) * ry.
    """
    def row(xi, eta, along_xi: bool) -> np.ndarray:
        n, dn_dxi, dn_deta = _shape(xi, eta)
        r = np.zeros(4 * N_DOF)
        for i in range(4):
            c = i * N_DOF
            if along_xi:
                r[c + _W] = dn_dxi[i]
                r[c + _RX] = 0.5 * es * n[i]
            else:
                r[c + _W] = dn_deta[i]
                r[c + _RY] = 0.5 * es * n[i]
        return r

    e_xi_bot = row(0.0, -1.0, True)    # tying point A
    e_xi_top = row(0.0, +1.0, True)    # tying point C
    e_eta_left = row(-1.0, 0.0, False)   # tying point D
    e_eta_right = row(+1.0, 0.0, False)  # tying point B
    return e_xi_bot, e_xi_top, e_eta_left, e_eta_right


def _shear_b(xi: float, eta: float, es: float,
             tied: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]) -> np.ndarray:
    """Assumed transverse shear B (2 x 20): gamma_xz, gamma_yz at (xi, eta)."""
    e_xi_bot, e_xi_top, e_eta_left, e_eta_right = tied
    bs = np.zeros((2, 4 * N_DOF))
    bs[0] = (2.0 / es) * (0.5 * (1.0 - eta) * e_xi_bot + 0.5 * (1.0 + eta) * e_xi_top)
    bs[1] = (2.0 / es) * (0.5 * (1.0 - xi) * e_eta_left + 0.5 * (1.0 + xi) * e_eta_right)
    return bs


def element_stiffness(shell: ShellStiffness, es: float) -> np.ndarray:
    """Stiffness (20 x 20) of one square element of edge length ``es``."""
    det_j = es * es / 4.0
    tied = _tied_shear_rows(es)
    ke = np.zeros((4 * N_DOF, 4 * N_DOF))
    for xi, eta in _GP:
        bm, bb = _membrane_bending_b(xi, eta, es)
        bs = _shear_b(xi, eta, es, tied)
        ke += det_j * (bm.T @ shell.a @ bm
                       + bm.T @ shell.b @ bb
                       + bb.T @ shell.b @ bm
                       + bb.T @ shell.d @ bb
                       + bs.T @ shell.a_s @ bs)
    return 0.5 * (ke + ke.T)


# ---------------------------------------------------------------------------
# load cases and displacement fields
# ---------------------------------------------------------------------------

_DIRECTIONS = {"+z": 1.0, "-z": -1.0}


@dataclass(frozen=True)
class LoadCase:
    """Concentrated transverse nodal forces: (node, magnitude [N], direction)."""

    entries: Tuple[Tuple[int, float, str], ...]

    def __post_init__(self):
        seen = set()
        cleaned = []
        for node, magnitude, direction in self.entries:
            node = int(node)
            if direction not in _DIRECTIONS:
                raise PlateOptError(f"load direction must be '+z' or '-z', got {direction!r}")
            if magnitude < 0.0:
                raise PlateOptError(f"load magnitude must be >= 0, got {magnitude!r}")
            if node in seen:
                raise PlateOptError(f"duplicate load entry for node {node}")
            seen.add(node)
            cleaned.append((node, float(magnitude), direction))
        object.__setattr__(self, "entries", tuple(cleaned))

    def force_vector(self, mesh: Mesh) -> np.ndarray:
        """Assembled nodal force vector (n_dof,), w components only."""
        f = np.zeros(mesh.n_nodes * N_DOF)
        for node, magnitude, direction in self.entries:
            if not (0 <= node < mesh.n_nodes):
                raise MeshError(f"load node {node} outside mesh (n_nodes={mesh.n_nodes})")
            f[node * N_DOF + _W] += _DIRECTIONS[direction] * magnitude
        return f


@dataclass(frozen=True)
class DisplacementField:
    """Nodal solution (n_nodes, 5) in DOF order (u, v, w, rx, ry)."""

    mesh: Mesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values.flags.writeable = False

    @property
    def w(self) -> np.ndarray:
        return self.values[:, _W]

    def dof(self, name: str) -> np.ndarray:
        return self.values[:, DOF_NAMES.index(name)]

    def w_grid(self) -> np.ndarray:
        """Transverse displacement as (nny, nnx) grid, rows along y."""
        return self.w.reshape(self.mesh.nny, self.mesh.nnx)


def extract_w(disp: DisplacementField, nodes=None) -> np.ndarray:
    """Transverse displacement at the given node ids (all nodes if None)."""
    if nodes is None:
        return disp.w.copy()
    nodes = np.asarray(nodes, dtype=int)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= disp.mesh.n_nodes):
        raise MeshError("node id outside mesh in extract_w")
    return disp.w[nodes]


# ---------------------------------------------------------------------------
# assembly and solution
# ---------------------------------------------------------------------------

@dataclass
class SystemMatrix:
    """Assembled and factorized constrained system.

    Holds the full symmetric stiffness (for reaction/prescribed-value work),
    the free/constrained partition, and the sparse LU factor of K_ff.
    """

    mesh: Mesh
    shells: Tuple[ShellStiffness, ...]
    constrained: np.ndarray          # bool (n_nodes, 5)
    free_idx: np.ndarray             # int (n_free,)
    fixed_idx: np.ndarray            # int (n_fixed,)
    k_full: sp.csr_matrix
    k_fc: sp.csr_matrix
    _factor: spla.SuperLU

    @property
    def n_equations(self) -> int:
        return len(self.free_idx)

    def shell_of_element(self, e: int) -> ShellStiffness:
        return self.shells[self.mesh.element_laminate[e]]

    # -- solving ------------------------------------------------------------

    def solve_block(self, rhs_full: np.ndarray) -> np.ndarray:
        """Solve for a block of full-length force vectors (n_dof, k).

        Returns full-length displacement columns with zeros at constrained
        DOFs.  Forces applied on constrained DOFs are reactions and ignored.
        """
        rhs_full = np.asarray(rhs_full, dtype=float)
        single = rhs_full.ndim == 1
        if single:
            rhs_full = rhs_full[:, None]
        x = np.zeros_like(rhs_full)
        sol = self._factor.solve(rhs_full[self.free_idx])
        if not np.all(np.isfinite(sol)):
            raise SingularSystemError("solver produced non-finite values")
        x[self.free_idx] = sol
        return x[:, 0] if single else x

    def solve_prescribed(self, load: Optional[LoadCase],
                         prescribed: Mapping[Tuple[int, str], float]) -> DisplacementField:
        """Solve with non-zero values on (a subset of) the constrained DOFs.

        Used by verification drivers that impose displacement patterns on the
        boundary; production load cases keep all constrained DOFs at zero.
        """
        n_dof = self.mesh.n_nodes * N_DOF
        u_c = np.zeros(len(self.fixed_idx))
        fixed_pos = {int(g): i for i, g in enumerate(self.fixed_idx)}
        for (node, dof_name), value in prescribed.items():
            g = node * N_DOF + DOF_NAMES.index(dof_name)
            if g not in fixed_pos:
                raise MeshError(
                    f"prescribed DOF ({node}, {dof_name}) is not constrained; "
                    "add it to the boundary conditions first"
                )
            u_c[fixed_pos[g]] = float(value)
        f = load.force_vector(self.mesh) if load is not None else np.zeros(n_dof)
        rhs = f[self.free_idx] - self.k_fc @ u_c
        x = np.zeros(n_dof)
        x[self.free_idx] = self._factor.solve(rhs)
        x[self.fixed_idx] = u_c
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("solver produced non-finite values")
        return DisplacementField(mesh=self.mesh, values=x.reshape(-1, N_DOF))


def assemble(mesh: Mesh, shells: Mapping[str, ShellStiffness],
             bcs: BoundaryConditions) -> SystemMatrix:
    """Assemble and factorize the global system.

    ``shells`` maps every laminate name used by the mesh to its section
    stiffness.  Raises SingularSystemError when the constrained system still
    contains zero-energy modes (e.g. no boundary conditions at all), with the
    detected mode count when the system is small enough to analyze.
    """
    missing = [name for name in mesh.laminate_names if name not in shells]
    if missing:
        raise MaterialError(f"no shell stiffness for laminate(s) {missing}")
    shell_list = tuple(shells[name] for name in mesh.laminate_names)

    es = mesh.element_size
    ke_per_region = [element_stiffness(shell, es) for shell in shell_list]

    conn = mesh.all_element_nodes()                      # (n_el, 4)
    edof = (conn[:, :, None] * N_DOF + np.arange(N_DOF)[None, None, :])
    edof = edof.reshape(mesh.n_elements, 4 * N_DOF)      # (n_el, 20)

    n_dof = mesh.n_nodes * N_DOF
    rows = np.repeat(edof, 4 * N_DOF, axis=1).ravel()
    cols = np.tile(edof, (1, 4 * N_DOF)).ravel()
    vals = np.empty(mesh.n_elements * (4 * N_DOF) ** 2)
    flat = (4 * N_DOF) ** 2
    for region, ke in enumerate(ke_per_region):
        which = np.where(mesh.element_laminate == region)[0]
        for e in which:
            vals[e * flat:(e + 1) * flat] = ke.ravel()
    k_full = sp.coo_matrix((vals, (rows, cols)), shape=(n_dof, n_dof)).tocsr()

    mask = bcs.constrained_mask(mesh).ravel()
    free_idx = np.where(~mask)[0]
    fixed_idx = np.where(mask)[0]
    if len(free_idx) == 0:
        raise MeshError("boundary conditions constrain every DOF")

    k_ff = k_full[np.ix_(free_idx, free_idx)].tocsc()
    k_fc = k_full[np.ix_(free_idx, fixed_idx)].tocsr()

    try:
        factor = spla.splu(k_ff)
    except RuntimeError as exc:
        raise _singular_error(k_ff, str(exc)) from exc

    system = SystemMatrix(mesh=mesh, shells=shell_list, constrained=mask.reshape(-1, N_DOF),
                          free_idx=free_idx, fixed_idx=fixed_idx, k_full=k_full,
                          k_fc=k_fc, _factor=factor)

    # verify the factorization actually inverts the matrix (splu can succeed
    # numerically on a singular matrix and hand back garbage)
    probe = np.ones(len(free_idx))
    sol = factor.solve(probe)
    if not np.all(np.isfinite(sol)):
        raise _singular_error(k_ff, "non-finite factor")
    residual = np.linalg.norm(k_ff @ sol - probe) / np.linalg.norm(probe)
    if residual > 1e-6:
        raise _singular_error(k_ff, f"factorization residual {residual:.2e}")
    return system


_MODE_COUNT_LIMIT = 4000


def _singular_error(k_ff: sp.spmatrix, detail: str) -> SingularSystemError:
    n = k_ff.shape[0]
    mode_count = None
    if n <= _MODE_COUNT_LIMIT:
        eigs = np.linalg.eigvalsh(k_ff.toarray())
        scale = max(eigs.max(), 1.0)
        mode_count = int(np.sum(eigs < 1e-10 * scale))
    if mode_count is not None:
        msg = (f"constrained stiffness is singular ({detail}); "
               f"{mode_count} unconstrained rigid-body/mechanism mode(s) detected")
    else:
        msg = (f"constrained stiffness is singular ({detail}); "
               f"system too large to count modes (n={n})")
    return SingularSystemError(msg, mode_count=mode_count)


def solve(system: SystemMatrix, load: LoadCase) -> DisplacementField:
    """Linear static solution for one load case (constrained DOFs exactly 0)."""
    f = load.force_vector(system.mesh)
    x = system.solve_block(f)
    return DisplacementField(mesh=system.mesh, values=x.reshape(-1, N_DOF))


# ---------------------------------------------------------------------------
# strain recovery
# ---------------------------------------------------------------------------

#: Gauss-to-corner extrapolation: value_corner = E @ value_gp
_EXTRAP = np.array([[0.25 * (1.0 + np.sqrt(3.0) * _CORNER_XI[c] * _CORNER_XI[p])
                     * (1.0 + np.sqrt(3.0) * _CORNER_ETA[c] * _CORNER_ETA[p])
                     for p in range(4)] for c in range(4)])


@dataclass(frozen=True)
class StrainField:
    """In-plane strain tensors on the node grid at a through-thickness offset.

    Components are stored in tensor convention (exy = engineering gamma / 2)
    as (nny, nnx) grids.
    """

    mesh: Mesh
    z: float
    exx: np.ndarray = field(repr=False)
    eyy: np.ndarray = field(repr=False)
    exy: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.exx, self.eyy, self.exy):
            arr.flags.writeable = False

    def tensors(self) -> np.ndarray:
        """Stacked (nny, nnx, 3) array of (exx, eyy, exy)."""
        return np.stack([self.exx, self.eyy, self.exy], axis=-1)

    def scaled(self, c: float) -> "StrainField":
        return StrainField(mesh=self.mesh, z=self.z,
                           exx=self.exx * c, eyy=self.eyy * c, exy=self.exy * c)


def _gp_generalized(system: SystemMatrix, disp: DisplacementField
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """Membrane strain and curvature at the 2x2 Gauss points of every element.

    Returns (membrane, curvature), each (n_elements, 4, 3), engineering shear.
    """
    mesh = system.mesh
    es = mesh.element_size
    conn = mesh.all_element_nodes()
    edof = (conn[:, :, None] * N_DOF + np.arange(N_DOF)[None, None, :])
    d = disp.values.ravel()[edof.reshape(mesh.n_elements, -1)]   # (n_el, 20)

    membrane = np.empty((mesh.n_elements, 4, 3))
    curvature = np.empty((mesh.n_elements, 4, 3))
    for g, (xi, eta) in enumerate(_GP):
        bm, bb = _membrane_bending_b(xi, eta, es)
        membrane[:, g, :] = d @ bm.T
        curvature[:, g, :] = d @ bb.T
    return membrane, curvature


def surface_strain(system: SystemMatrix, disp: DisplacementField,
                   z: float) -> StrainField:
    """In-plane strain at offset z from the midplane, recovered at nodes.

    Strains are evaluated at element Gauss points, extrapolated bilinearly to
    the corners, and arithmetically averaged over the elements adjacent to
    each node.  ``z`` must stay inside every element's laminate.
    """
    mesh = system.mesh
    for region, shell in enumerate(system.shells):
        if np.any(mesh.element_laminate == region) and abs(z) > shell.h / 2 + 1e-12:
            raise MaterialError(
                f"z={z} outside laminate {mesh.laminate_names[region]!r} "
                f"(half thickness {shell.h / 2})"
            )

    membrane, curvature = _gp_generalized(system, disp)
    eps_gp = membrane + z * curvature                  # engineering, (n_el, 4, 3)
    eps_corner = np.einsum("cp,epk->eck", _EXTRAP, eps_gp)

    conn = mesh.all_element_nodes()
    total = np.zeros((mesh.n_nodes, 3))
    count = np.zeros(mesh.n_nodes)
    for c in range(4):
        np.add.at(total, conn[:, c], eps_corner[:, c, :])
        np.add.at(count, conn[:, c], 1.0)
    nodal = total / count[:, None]

    exx = nodal[:, 0].reshape(mesh.nny, mesh.nnx)
    eyy = nodal[:, 1].reshape(mesh.nny, mesh.nnx)
    exy = (0.5 * nodal[:, 2]).reshape(mesh.nny, mesh.nnx)   # tensor shear
    return StrainField(mesh=mesh, z=z, exx=exx, eyy=eyy, exy=exy)


def layer_stress_extrema(system: SystemMatrix, disp: DisplacementField
                         ) -> Dict[str, float]:
    """Largest absolute in-plane principal stress per material (MPa).

    Evaluated at element Gauss points at the top and bottom of every layer —
    local values, no nodal smoothing — as needed for strength scaling.
    """
    membrane, curvature = _gp_generalized(system, disp)
    mesh = system.mesh
    worst: Dict[str, float] = {}
    for region, shell in enumerate(system.shells):
        which = np.where(mesh.element_laminate == region)[0]
        if len(which) == 0:
            continue
        mem = membrane[which]          # (k, 4, 3)
        cur = curvature[which]
        for layer in shell.layers:
            for z in (layer.z_bot, layer.z_top):
                eps = mem + z * cur
                sig = eps @ layer.qbar.T
                centre = 0.5 * (sig[..., 0] + sig[..., 1])
                radius = np.hypot(0.5 * (sig[..., 0] - sig[..., 1]), sig[..., 2])
                peak = float(np.max(np.abs(centre) + radius))
                name = layer.material.name
                worst[name] = max(worst.get(name, 0.0), peak)
    return worst
