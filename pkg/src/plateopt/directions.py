"""Principal and zero-strain directions, direction fields, trajectory tracing.

Direction conventions: all angles are measured from the +x axis in degrees
and canonicalized to [0, 180) — a direction here is an unoriented line.  The
major principal direction belongs to the larger principal strain.  Zero-strain
directions are the lines along which the interpolated normal strain vanishes;
they exist iff the principal strains have opposite signs (or one is zero).

The tensor-level functions (:func:`principal`, :func:`zero_strain`) are full
precision.  Grid-level direction fields quantize their stored angles to a
2^-24 rad lattice so that rescaling every tensor by a positive constant —
which perturbs angles only at round-off level — leaves the stored field
bit-identical.  Tracing always recomputes directions from interpolated
tensors, never from the quantized grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import TraceError
from .fe import StrainField
from .mesh import Rect

MODE_NONE = 0
MODE_PRINCIPAL_MAJOR = 1
MODE_PRINCIPAL_MINOR = 2
MODE_ZERO_A = 3
MODE_ZERO_B = 4
MODE_MASKED = 5

MODE_NAMES = {
    MODE_NONE: "none",
    MODE_PRINCIPAL_MAJOR: "principal-major",
    MODE_PRINCIPAL_MINOR: "principal-minor",
    MODE_ZERO_A: "zero-A",
    MODE_ZERO_B: "zero-B",
    MODE_MASKED: "masked",
}

POLICIES = ("principal-major", "principal-minor",
            "zero-strain-with-minor-fallback", "zero-strain-strict")

_ANGLE_QUANTUM = 2.0 ** -24      # rad; see module docstring
_RAD2DEG = 180.0 / math.pi


class StrainTensor2D(NamedTuple):
    """Plane strain state; ``exy`` is the tensor (not engineering) shear."""

    exx: float
    eyy: float
    exy: float


@dataclass(frozen=True)
class PrincipalDirections:
    """Principal angles [deg, [0,180)] and strains, major first."""

    alpha1: float
    alpha2: float
    eps1: float
    eps2: float
    isotropic: bool = False


def principal(t: StrainTensor2D) -> PrincipalDirections:
    """Principal strain directions and values of a plane strain state.

    A hydrostatic state has every direction principal; by convention the
    result then carries ``alpha1 = 0`` and ``isotropic=True``.
    """
    a = 0.5 * (t.exx + t.eyy)
    b = 0.5 * (t.exx - t.eyy)
    c = t.exy
    radius = math.hypot(b, c)
    if radius == 0.0:
        return PrincipalDirections(alpha1=0.0, alpha2=90.0, eps1=a, eps2=a,
                                   isotropic=True)
    alpha1 = 0.5 * math.atan2(c, b)
    if alpha1 < 0.0:
        alpha1 += math.pi
    alpha2 = alpha1 + 0.5 * math.pi
    if alpha2 >= math.pi:
        alpha2 -= math.pi
    return PrincipalDirections(alpha1=alpha1 * _RAD2DEG, alpha2=alpha2 * _RAD2DEG,
                               eps1=a + radius, eps2=a - radius)


def zero_strain(t: StrainTensor2D) -> Optional[Tuple[float, float]]:
    """The two zero-normal-strain directions [deg], or None.

    With a = (exx+eyy)/2, b = (exx-eyy)/2, c = exy the normal strain along a
    direction at angle beta is a + b cos(2 beta) + c sin(2 beta); real roots
    exist iff hypot(b, c) >= |a|, i.e. iff the principal strains do not share
    a strict sign.  Returned as (betaA, betaB) with betaA <= betaB.
    """
    a = 0.5 * (t.exx + t.eyy)
    b = 0.5 * (t.exx - t.eyy)
    c = t.exy
    radius = math.hypot(b, c)
    if radius < abs(a):
        return None
    phi = math.atan2(c, b)
    if radius == 0.0:
        # a == 0 too: the tensor is identically zero, every direction works
        spread = 0.5 * math.pi
    else:
        spread = math.acos(max(-1.0, min(1.0, -a / radius)))
    beta1 = 0.5 * (phi + spread) % math.pi
    beta2 = 0.5 * (phi - spread) % math.pi
    lo, hi = sorted((beta1 * _RAD2DEG, beta2 * _RAD2DEG))
    return lo, hi


def _snap(angle_rad):
    return np.round(angle_rad / _ANGLE_QUANTUM) * _ANGLE_QUANTUM


@dataclass(frozen=True)
class DirectionField:
    """Per-node direction entries over a strain field's grid.

    ``angle`` holds quantized degrees in [0, 180) (NaN where no direction is
    defined), ``mode`` the entry kind (MODE_* codes).  The originating strain
    field is kept so tracing can re-interpolate tensors at full precision.
    """

    strains: StrainField
    policy: str
    branch: str
    angle: np.ndarray            # (nny, nnx) float [deg]
    mode: np.ndarray             # (nny, nnx) int8
    excluded: Tuple[Rect, ...]

    @property
    def mesh(self):
        return self.strains.mesh

    def entry(self, node: int) -> Tuple[str, float]:
        iy, ix = divmod(node, self.mesh.nnx)
        return MODE_NAMES[int(self.mode[iy, ix])], float(self.angle[iy, ix])


def _point_masked(x: float, y: float, excluded: Sequence[Rect]) -> bool:
    return any(r.xmin <= x <= r.xmax and r.ymin <= y <= r.ymax
               for r in excluded)


def direction_field(strains: StrainField, policy: str, branch: str = "A",
                    excluded: Sequence[Rect] = ()) -> DirectionField:
    """Evaluate one direction per grid node under the given policy.

    Policies: 'principal-major', 'principal-minor',
    'zero-strain-with-minor-fallback' (nodes without zero-strain directions
    fall back to the minor principal direction, recorded as such), and
    'zero-strain-strict' (such nodes get mode 'none').  ``branch`` picks
    which of the two zero-strain families ('A' = smaller angle) is stored;
    both remain available to tracing through the underlying tensors.
    Nodes inside ``excluded`` rectangles are masked out entirely.
    """
    if policy not in POLICIES:
        raise TraceError(f"unknown direction policy {policy!r}")
    if branch not in ("A", "B"):
        raise TraceError(f"branch must be 'A' or 'B', got {branch!r}")
    tensors = strains.tensors()                      # (nny, nnx, 3)
    if tensors.size == 0:
        raise TraceError("empty strain field")
    exx, eyy, exy = tensors[..., 0], tensors[..., 1], tensors[..., 2]
    a = 0.5 * (exx + eyy)
    b = 0.5 * (exx - eyy)
    c = exy
    radius = np.hypot(b, c)

    alpha1 = 0.5 * np.arctan2(c, b)                  # (-pi/2, pi/2]
    alpha2 = alpha1 + 0.5 * np.pi                    # minor, 90 deg away

    def canonical_deg(rad):
        snapped = _snap(rad)
        return (snapped % math.pi) * _RAD2DEG

    if policy == "principal-major":
        angle = canonical_deg(alpha1)
        mode = np.full(angle.shape, MODE_PRINCIPAL_MAJOR, dtype=np.int8)
    elif policy == "principal-minor":
        angle = canonical_deg(alpha2)
        mode = np.full(angle.shape, MODE_PRINCIPAL_MINOR, dtype=np.int8)
    else:
        exists = radius >= np.abs(a)
        safe_r = np.where(radius > 0.0, radius, 1.0)
        spread = np.arccos(np.clip(-a / safe_r, -1.0, 1.0))
        spread = np.where(radius > 0.0, spread, 0.5 * np.pi)
        beta1 = canonical_deg(0.5 * (np.arctan2(c, b) + spread))
        beta2 = canonical_deg(0.5 * (np.arctan2(c, b) - spread))
        beta_lo = np.minimum(beta1, beta2)
        beta_hi = np.maximum(beta1, beta2)
        angle = beta_lo if branch == "A" else beta_hi
        mode = np.full(angle.shape, MODE_ZERO_A if branch == "A" else MODE_ZERO_B,
                       dtype=np.int8)
        if policy == "zero-strain-with-minor-fallback":
            angle = np.where(exists, angle, canonical_deg(alpha2))
            mode = np.where(exists, mode, np.int8(MODE_PRINCIPAL_MINOR))
        else:
            angle = np.where(exists, angle, np.nan)
            mode = np.where(exists, mode, np.int8(MODE_NONE))

    mesh = strains.mesh
    excluded = tuple(Rect(*r) for r in excluded)
    if excluded:
        xs = np.arange(mesh.nnx) * mesh.element_size
        ys = np.arange(mesh.nny) * mesh.element_size
        gx, gy = np.meshgrid(xs, ys)
        masked = np.zeros(gx.shape, dtype=bool)
        for r in excluded:
            masked |= ((gx >= r.xmin) & (gx <= r.xmax)
                       & (gy >= r.ymin) & (gy <= r.ymax))
        angle = np.where(masked, np.nan, angle)
        mode = np.where(masked, np.int8(MODE_MASKED), mode)

    angle = np.asarray(angle, dtype=float)
    angle.flags.writeable = False
    mode = np.asarray(mode, dtype=np.int8)
    mode.flags.writeable = False
    return DirectionField(strains=strains, policy=policy, branch=branch,
                          angle=angle, mode=mode, excluded=excluded)


# ---------------------------------------------------------------------------
# trajectory tracing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Traced polyline with per-vertex mode and direction angle."""

    points: np.ndarray           # (n, 2) [mm]
    modes: np.ndarray            # (n,) int8
    angles: np.ndarray           # (n,) [deg]
    seed: Tuple[float, float]
    branch: str
    step: float
    termination: str             # boundary | max-steps | excluded-region | mode-island

    def __len__(self) -> int:
        return len(self.points)

    def mode_names(self) -> List[str]:
        return [MODE_NAMES[int(m)] for m in self.modes]


def _interp_tensor(tensors: np.ndarray, element_size: float,
                   x: float, y: float) -> Tuple[float, float, float]:
    nny, nnx = tensors.shape[:2]
    fx = x / element_size
    fy = y / element_size
    ix = min(max(int(math.floor(fx)), 0), nnx - 2)
    iy = min(max(int(math.floor(fy)), 0), nny - 2)
    u = fx - ix
    v = fy - iy
    t = ((1 - u) * (1 - v) * tensors[iy, ix]
         + u * (1 - v) * tensors[iy, ix + 1]
         + u * v * tensors[iy + 1, ix + 1]
         + (1 - u) * v * tensors[iy + 1, ix])
    return float(t[0]), float(t[1]), float(t[2])


def _candidate_lines(t: StrainTensor2D, policy: str
                     ) -> Optional[List[Tuple[float, int]]]:
    """Followable line angles [rad] with mode codes at one point, or None."""
    p = principal(t)
    if policy == "principal-major":
        if p.isotropic:
            return None
        return [(math.radians(p.alpha1), MODE_PRINCIPAL_MAJOR)]
    if policy == "principal-minor":
        if p.isotropic:
            return None
        return [(math.radians(p.alpha2), MODE_PRINCIPAL_MINOR)]
    zs = zero_strain(t)
    if zs is not None:
        return [(math.radians(zs[0]), MODE_ZERO_A),
                (math.radians(zs[1]), MODE_ZERO_B)]
    if policy == "zero-strain-with-minor-fallback":
        if p.isotropic:
            return None
        return [(math.radians(p.alpha2), MODE_PRINCIPAL_MINOR)]
    return None


def _pick_direction(candidates: List[Tuple[float, int]],
                    prev: Optional[Tuple[float, float]], branch: str
                    ) -> Tuple[Tuple[float, float], float, int]:
    """Choose the candidate line and orientation continuing ``prev``.

    With no previous direction the branch label selects the family ('A' the
    first/smaller angle); afterwards the line with the largest |cos| to the
    previous step wins and its sign is aligned, resolving the 180-degree
    ambiguity.
    """
    if prev is None:
        idx = 0 if branch == "A" or len(candidates) == 1 else 1
        ang, mode = candidates[idx]
        return (math.cos(ang), math.sin(ang)), ang, mode
    best = None
    for ang, mode in candidates:
        ux, uy = math.cos(ang), math.sin(ang)
        dot = ux * prev[0] + uy * prev[1]
        if best is None or abs(dot) > abs(best[0]):
            best = (dot, (ux, uy), ang, mode)
    dot, (ux, uy), ang, mode = best
    if dot < 0.0:
        ux, uy = -ux, -uy
    return (ux, uy), ang, mode


def _clip_to_domain(px, py, qx, qy, width, height):
    """Largest fraction of the segment p->q inside [0,w]x[0,h]."""
    tau = 1.0
    for p, q, hi in ((px, qx, width), (py, qy, height)):
        d = q - p
        if q < 0.0:
            tau = min(tau, (0.0 - p) / d)
        elif q > hi:
            tau = min(tau, (hi - p) / d)
    return max(tau, 0.0)


def trace(field: DirectionField, seed: Tuple[float, float], branch: str = "A",
          step: Optional[float] = None, max_steps: int = 100000,
          sign: float = 1.0) -> Trajectory:
    """Trace a strain trajectory from ``seed`` through the direction field.

    Midpoint (second-order) stepping: the direction at the current point
    advances half a step, the direction re-evaluated there (from the
    bilinearly interpolated tensor) advances the full step.  Under the
    fallback policy a trajectory entering a region without zero-strain
    directions switches to the minor principal direction and back, with the
    mode change recorded per vertex; under the strict policy it terminates
    with reason 'mode-island'.  ``sign`` flips the initial orientation so a
    trajectory can be continued backwards from its seed.
    """
    mesh = field.mesh
    width = (mesh.nnx - 1) * mesh.element_size
    height = (mesh.nny - 1) * mesh.element_size
    x0, y0 = float(seed[0]), float(seed[1])
    if not (0.0 <= x0 <= width and 0.0 <= y0 <= height):
        raise TraceError(f"seed ({x0}, {y0}) outside the field domain")
    if _point_masked(x0, y0, field.excluded):
        raise TraceError(f"seed ({x0}, {y0}) lies in an excluded region")
    if branch not in ("A", "B"):
        raise TraceError(f"branch must be 'A' or 'B', got {branch!r}")
    if step is None:
        step = 0.25 * mesh.element_size
    if not (step > 0.0 and max_steps >= 1):
        raise TraceError("step must be > 0 and max_steps >= 1")

    tensors = field.strains.tensors()
    es = mesh.element_size

    def lines_at(x, y):
        return _candidate_lines(
            StrainTensor2D(*_interp_tensor(tensors, es, x, y)), field.policy)

    points = [(x0, y0)]
    modes: List[int] = []
    angles: List[float] = []

    cand = lines_at(x0, y0)
    if cand is None:
        return Trajectory(points=np.array(points), modes=np.array([MODE_NONE], np.int8),
                          angles=np.array([np.nan]), seed=(x0, y0), branch=branch,
                          step=step, termination="mode-island")
    prev, ang, mode = _pick_direction(cand, None, branch)
    if sign < 0:
        prev = (-prev[0], -prev[1])
    modes.append(mode)
    angles.append(math.degrees(ang))

    termination = "max-steps"
    x, y = x0, y0
    for _ in range(max_steps):
        hx = x + 0.5 * step * prev[0]
        hy = y + 0.5 * step * prev[1]
        if not (0.0 <= hx <= width and 0.0 <= hy <= height):
            tau = _clip_to_domain(x, y, hx, hy, width, height)
            if tau > 1e-12:
                bx, by = x + tau * (hx - x), y + tau * (hy - y)
                cand = lines_at(bx, by)
                if cand is not None:
                    _, ang, mode = _pick_direction(cand, prev, branch)
                    points.append((bx, by))
                    modes.append(mode)
                    angles.append(math.degrees(ang))
            termination = "boundary"
            break
        if _point_masked(hx, hy, field.excluded):
            termination = "excluded-region"
            break
        cand = lines_at(hx, hy)
        if cand is None:
            termination = "mode-island"
            break
        mid, _, _ = _pick_direction(cand, prev, branch)

        nx = x + step * mid[0]
        ny = y + step * mid[1]
        if not (0.0 <= nx <= width and 0.0 <= ny <= height):
            tau = _clip_to_domain(x, y, nx, ny, width, height)
            if tau > 1e-12:
                bx, by = x + tau * (nx - x), y + tau * (ny - y)
                cand = lines_at(bx, by)
                if cand is not None:
                    _, ang, mode = _pick_direction(cand, mid, branch)
                    points.append((bx, by))
                    modes.append(mode)
                    angles.append(math.degrees(ang))
            termination = "boundary"
            break
        if _point_masked(nx, ny, field.excluded):
            termination = "excluded-region"
            break
        cand = lines_at(nx, ny)
        if cand is None:
            termination = "mode-island"
            break
        nxt, ang, mode = _pick_direction(cand, mid, branch)
        points.append((nx, ny))
        modes.append(mode)
        angles.append(math.degrees(ang))
        x, y = nx, ny
        prev = nxt

    return Trajectory(points=np.array(points, dtype=float),
                      modes=np.array(modes, dtype=np.int8),
                      angles=np.array(angles, dtype=float),
                      seed=(x0, y0), branch=branch, step=step,
                      termination=termination)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def save_trajectory(traj: Trajectory, path) -> None:
    """Write a trajectory as ordered CSV (x, y, mode, angle_deg)."""
    lines = ["# strain-trajectory v1",
             f"# seed: {traj.seed[0]!r} {traj.seed[1]!r}",
             f"# branch: {traj.branch}",
             f"# step: {traj.step!r}",
             f"# termination: {traj.termination}",
             "x,y,mode,angle_deg"]
    for (x, y), m, ang in zip(traj.points, traj.modes, traj.angles):
        lines.append(f"{float(x)!r},{float(y)!r},{MODE_NAMES[int(m)]},{float(ang)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def save_direction_field(field: DirectionField, path) -> None:
    """Write a direction field as gridded CSV (x, y, mode, angle_deg)."""
    mesh = field.mesh
    lines = ["# direction-field v1",
             f"# policy: {field.policy}",
             f"# branch: {field.branch}",
             f"# shape: {mesh.nny} {mesh.nnx}",
             f"# spacing: {mesh.element_size!r}",
             "x,y,mode,angle_deg"]
    for iy in range(mesh.nny):
        for ix in range(mesh.nnx):
            x = ix * mesh.element_size
            y = iy * mesh.element_size
            mode = MODE_NAMES[int(field.mode[iy, ix])]
            lines.append(f"{x!r},{y!r},{mode},{float(field.angle[iy, ix])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
