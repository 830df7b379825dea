"""Shared model builders for the test suite."""

from __future__ import annotations

import numpy as np

from plateopt import (BoundaryConditions, LaminateSpec, Layer, MaterialSpec,
                      Rect, assemble, build_grid_mesh, laminate_stiffness)

DOF_ALL = frozenset({"u", "v", "w", "rx", "ry"})


def iso_laminate(e=70000.0, nu=0.3, t=10.0, name="plate"):
    mat = MaterialSpec.isotropic("iso", e, nu)
    return LaminateSpec(name, (Layer(mat, t),))


def iso_shells(e=70000.0, nu=0.3, t=10.0, name="plate"):
    return {name: laminate_stiffness(iso_laminate(e, nu, t, name))}


def edge_rects(width, height):
    """The four boundary edges as degenerate rectangles."""
    return {
        "x0": Rect(0.0, 0.0, 0.0, height),
        "x1": Rect(width, width, 0.0, height),
        "y0": Rect(0.0, width, 0.0, 0.0),
        "y1": Rect(0.0, width, height, height),
    }


def clamped_plate(nex=8, ney=None, es=50.0, e=70000.0, nu=0.3, t=10.0):
    """Square-ish plate with every boundary DOF fixed."""
    ney = nex if ney is None else ney
    mesh = build_grid_mesh(nex * es, ney * es, es, default_laminate="plate")
    edges = edge_rects(mesh.width, mesh.height)
    bcs = BoundaryConditions(fixed=tuple((r, DOF_ALL) for r in edges.values()))
    return assemble(mesh, iso_shells(e, nu, t), bcs)


def ssss_plate(nex, ney=None, width=1000.0, height=None, e=70000.0, nu=0.3,
               t=10.0):
    """Simply supported plate (hard support: w plus tangential rotation).

    In-plane translations are pinned on the whole boundary; the membrane
    response to transverse load is identically zero for a symmetric layup,
    so this only removes rigid-body modes.
    """
    ney = nex if ney is None else ney
    height = width if height is None else height
    es = width / nex
    if abs(height / es - ney) > 1e-9:
        raise ValueError("width/nex must equal height/ney for square elements")
    mesh = build_grid_mesh(width, height, es, default_laminate="plate")
    edges = edge_rects(mesh.width, mesh.height)
    fixed = (
        (edges["x0"], frozenset({"u", "v", "w", "ry"})),
        (edges["x1"], frozenset({"u", "v", "w", "ry"})),
        (edges["y0"], frozenset({"u", "v", "w", "rx"})),
        (edges["y1"], frozenset({"u", "v", "w", "rx"})),
    )
    bcs = BoundaryConditions(fixed=fixed)
    return assemble(mesh, iso_shells(e, nu, t), bcs)


def boundary_prescription(mesh, fn_u, fn_v, fn_w, fn_rx, fn_ry):
    """{(node, dof): value} for every node on the mesh boundary."""
    prescribed = {}
    coords = mesh.node_coords()
    for node, (x, y) in enumerate(coords):
        on_edge = (x in (0.0, mesh.width)) or (y in (0.0, mesh.height))
        if not on_edge:
            continue
        for dof, fn in (("u", fn_u), ("v", fn_v), ("w", fn_w),
                        ("rx", fn_rx), ("ry", fn_ry)):
            prescribed[(node, dof)] = fn(x, y)
    return prescribed


def all_boundary_fixed(mesh):
    edges = edge_rects(mesh.width, mesh.height)
    return BoundaryConditions(fixed=tuple((r, DOF_ALL) for r in edges.values()))


def uniform_pressure_case(mesh, q, direction="-z"):
    """Consistent (tributary-area) nodal load case for uniform pressure q."""
    from plateopt import LoadCase

    es = mesh.element_size
    coords = mesh.node_coords()
    entries = []
    for node, (x, y) in enumerate(coords):
        wx = (0.5 if x in (0.0, mesh.width) else 1.0) * es
        wy = (0.5 if y in (0.0, mesh.height) else 1.0) * es
        entries.append((node, q * wx * wy, direction))
    return LoadCase(tuple(entries))
