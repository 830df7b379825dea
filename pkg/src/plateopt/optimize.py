"""Placement and amplitude optimization of three concentrated loads.

Inner problem: given three influence columns and a target deflection vector,
find bounded amplitudes minimizing the sum of squared deviations.  The exact
solver enumerates the 27 active-bound patterns of the 3-variable convex QP in
a fixed most-constrained-first order and returns the first KKT-valid one —
exact up to round-off, branch-free to vectorize, and deterministic enough
that exactly tied triples reduce to bit-identical arithmetic (ties are then
broken lexicographically by node order, never by float noise).

A Nelder-Mead simplex mode with the sine bound transform (F = lo +
(hi-lo)(sin x + 1)/2) is provided as an independent route to the same
minima; it shares nothing with the exact solver beyond the objective.

Outer problem: minimize (F_j + F_k + F_l) * SSE over all candidate triples,
either exhaustively (chunked, worker-count independent) or by coordinate
descent over one set at a time.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .compliance import ComplianceMatrix
from .errors import OptimizationError
from .fe import LoadCase, layer_stress_extrema, solve as fe_solve
from .parallel import chunk_ranges, run_chunks

_STATE_LOWER, _STATE_UPPER, _STATE_FREE = 0, 1, 2
_STATE_NAMES = {_STATE_LOWER: "lower", _STATE_UPPER: "upper", _STATE_FREE: "free"}

#: all 3-variable bound patterns, most-constrained first; within a group,
#: patterns freeing earlier variables come first (so when two candidates fit
#: equally well, the earlier one carries the load), and lower-bound states
#: are tried before upper-bound ones
_PATTERNS: Tuple[Tuple[int, int, int], ...] = tuple(sorted(
    ((a, b, c) for a in (0, 1, 2) for b in (0, 1, 2) for c in (0, 1, 2)),
    key=lambda p: (sum(1 for s in p if s == _STATE_FREE),
                   tuple(0 if s == _STATE_FREE else 1 if s == _STATE_LOWER else 2
                         for s in p)),
))

_KKT_REL = 1e-9       # gradient tolerance, relative to the gradient scale
_FEAS_REL = 1e-9      # bound feasibility tolerance, relative to the box size
_DET_REL = 1e-12      # relative determinant cutoff for reduced solves
_ZERO_REPORT_REL = 1e-6   # amplitudes below this fraction of upper read as "off"

_CHUNK_TRIPLES = 65536
_CD_PROBE = 4096


@dataclass(frozen=True)
class Bounds:
    """Box constraints on the three amplitudes [N]; upper may be per-load."""

    lower: float = 0.0
    upper: Union[float, Tuple[float, float, float]] = 5000.0

    def __post_init__(self):
        up = self.upper_vec()
        if not (self.lower >= 0.0 and np.all(np.isfinite(up)) and np.all(up > self.lower)):
            raise OptimizationError(
                f"bounds must satisfy 0 <= lower < upper < inf, got "
                f"lower={self.lower!r} upper={self.upper!r}"
            )

    def upper_vec(self) -> np.ndarray:
        up = np.asarray(self.upper, dtype=float)
        if up.ndim == 0:
            up = np.full(3, float(up))
        if up.shape != (3,):
            raise OptimizationError(f"upper must be scalar or length 3, got {self.upper!r}")
        return up


@dataclass(frozen=True)
class InnerSolution:
    """Bounded least-squares result for one triple of columns."""

    amplitudes: np.ndarray
    sse: float
    unique: bool
    pattern: Tuple[str, str, str]
    converged: bool = True
    n_iter: int = 0


# ---------------------------------------------------------------------------
# exact solver: vectorized KKT pattern enumeration on Gram data
# ---------------------------------------------------------------------------

def _quad_sse(f: np.ndarray, g3: np.ndarray, b3: np.ndarray, ttt: np.ndarray) -> np.ndarray:
    """||A F - t||^2 from Gram data, fixed evaluation order (B,...)."""
    f0, f1, f2 = f[..., 0], f[..., 1], f[..., 2]
    sse = (f0 * f0 * g3[..., 0, 0] + f1 * f1 * g3[..., 1, 1] + f2 * f2 * g3[..., 2, 2]
           + 2.0 * (f0 * f1 * g3[..., 0, 1] + f0 * f2 * g3[..., 0, 2]
                    + f1 * f2 * g3[..., 1, 2])
           - 2.0 * (f0 * b3[..., 0] + f1 * b3[..., 1] + f2 * b3[..., 2])
           + ttt)
    return np.maximum(sse, 0.0)


def _kkt_enumerate(g3: np.ndarray, b3: np.ndarray, ttt: np.ndarray,
                   lower: float, upper: np.ndarray
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Solve a batch of 3-variable box QPs by bound-pattern enumeration.

    Returns (amplitudes (B,3), sse (B,), pattern_id (B,), solved (B,)).
    Rows left unsolved (rank-deficient beyond all patterns) have pattern -1.
    """
    batch = g3.shape[0]
    diag = np.stack([g3[:, 0, 0], g3[:, 1, 1], g3[:, 2, 2]], axis=1)     # (B,3)
    gscale = np.abs(b3).max(axis=1) + np.abs(g3).reshape(batch, -1).max(axis=1) * upper.max()
    ktol = _KKT_REL * gscale + 1e-300
    ftol = _FEAS_REL * (upper.max() - lower)

    best_f = np.zeros((batch, 3))
    best_pattern = np.full(batch, -1, dtype=np.int64)
    done = np.zeros(batch, dtype=bool)

    bound_value = np.empty((2, 3))
    bound_value[0] = lower
    bound_value[1] = upper

    for pid, pattern in enumerate(_PATTERNS):
        free = [i for i, s in enumerate(pattern) if s == _STATE_FREE]
        active = [i for i, s in enumerate(pattern) if s != _STATE_FREE]

        f = np.zeros((batch, 3))
        for i in active:
            f[:, i] = bound_value[pattern[i], i]

        ok = np.ones(batch, dtype=bool)
        if len(free) == 1:
            i = free[0]
            rhs = b3[:, i].copy()
            for a in active:
                rhs -= g3[:, i, a] * f[:, a]
            den = g3[:, i, i]
            ok &= den > _DET_REL * np.maximum(diag.max(axis=1), 1e-300)
            with np.errstate(divide="ignore", invalid="ignore"):
                f[:, i] = np.where(ok, rhs / np.where(ok, den, 1.0), 0.0)
        elif len(free) == 2:
            i, j = free
            a = active[0]
            ri = b3[:, i] - g3[:, i, a] * f[:, a]
            rj = b3[:, j] - g3[:, j, a] * f[:, a]
            gii, gjj, gij = g3[:, i, i], g3[:, j, j], g3[:, i, j]
            det = gii * gjj - gij * gij
            ok &= det > _DET_REL * np.maximum(gii * gjj, 1e-300)
            safe = np.where(ok, det, 1.0)
            f[:, i] = np.where(ok, (ri * gjj - rj * gij) / safe, 0.0)
            f[:, j] = np.where(ok, (rj * gii - ri * gij) / safe, 0.0)
        elif len(free) == 3:
            g00, g01, g02 = g3[:, 0, 0], g3[:, 0, 1], g3[:, 0, 2]
            g11, g12, g22 = g3[:, 1, 1], g3[:, 1, 2], g3[:, 2, 2]
            det = (g00 * (g11 * g22 - g12 * g12)
                   - g01 * (g01 * g22 - g12 * g02)
                   + g02 * (g01 * g12 - g11 * g02))
            ok &= det > _DET_REL * np.maximum(g00 * g11 * g22, 1e-300)
            safe = np.where(ok, det, 1.0)
            b0, b1, b2 = b3[:, 0], b3[:, 1], b3[:, 2]
            f[:, 0] = np.where(ok, (b0 * (g11 * g22 - g12 * g12)
                                    - g01 * (b1 * g22 - g12 * b2)
                                    + g02 * (b1 * g12 - g11 * b2)) / safe, 0.0)
            f[:, 1] = np.where(ok, (g00 * (b1 * g22 - b2 * g12)
                                    - b0 * (g01 * g22 - g12 * g02)
                                    + g02 * (g01 * b2 - b1 * g02)) / safe, 0.0)
            f[:, 2] = np.where(ok, (g00 * (g11 * b2 - g12 * b1)
                                    - g01 * (g01 * b2 - b1 * g02)
                                    + b0 * (g01 * g12 - g11 * g02)) / safe, 0.0)

        for i in free:
            ok &= (f[:, i] >= lower - ftol) & (f[:, i] <= upper[i] + ftol)

        if active:
            grad = np.einsum("bij,bj->bi", g3, f) - b3
            for i in active:
                if pattern[i] == _STATE_LOWER:
                    ok &= grad[:, i] >= -ktol
                else:
                    ok &= grad[:, i] <= ktol

        take = ok & ~done
        if np.any(take):
            best_f[take] = f[take]
            best_pattern[take] = pid
            done |= ok
        if np.all(done):
            break

    np.clip(best_f, lower, upper[None, :], out=best_f)
    sse = _quad_sse(best_f, g3, b3, ttt)
    sse[~done] = np.inf
    return best_f, sse, best_pattern, done


def _gram_data(columns: np.ndarray, target: np.ndarray
               ) -> Tuple[np.ndarray, np.ndarray, float]:
    g3 = columns.T @ columns
    b3 = columns.T @ target
    ttt = float(target @ target)
    return g3, b3, ttt


def _unique_flag(g3: np.ndarray) -> bool:
    """True when the full Gram matrix is comfortably non-singular."""
    det = float(np.linalg.det(g3))
    bound = float(g3[0, 0] * g3[1, 1] * g3[2, 2])
    return det > _DET_REL * max(bound, 1e-300)


def _validate_inner_args(columns: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    columns = np.asarray(columns, dtype=float)
    target = np.asarray(target, dtype=float)
    if columns.ndim != 2 or columns.shape[1] != 3:
        raise OptimizationError(f"columns must be (n, 3), got {columns.shape}")
    if target.shape != (columns.shape[0],):
        raise OptimizationError(
            f"target length {target.shape} does not match columns {columns.shape}"
        )
    valid = np.isfinite(target)
    if not np.all(valid):
        columns = columns[valid]
        target = target[valid]
    if len(target) == 0:
        raise OptimizationError("no finite target entries")
    return columns, target


def inner_solve(columns: np.ndarray, target: np.ndarray,
                bounds: Bounds = Bounds()) -> InnerSolution:
    """Exact bounded least squares for one triple of influence columns.

    Non-finite target entries are treated as masked and dropped together with
    the corresponding rows of ``columns``.
    """
    columns, target = _validate_inner_args(columns, target)
    upper = bounds.upper_vec()
    g3, b3, ttt = _gram_data(columns, target)

    f, _, pattern_id, done = _kkt_enumerate(g3[None], b3[None], np.array([ttt]),
                                            bounds.lower, upper)
    unique = _unique_flag(g3)
    if not done[0]:
        # degenerate Gram beyond every pattern: fall back to a ridge-stabilized
        # enumeration; the minimizer set is flat there, report non-unique
        ridge = 1e-10 * max(np.trace(g3) / 3.0, 1e-300)
        g3r = g3 + ridge * np.eye(3)
        f, _, pattern_id, done = _kkt_enumerate(g3r[None], b3[None], np.array([ttt]),
                                                bounds.lower, upper)
        unique = False
        if not done[0]:
            raise OptimizationError("inner solver failed on degenerate columns")

    amplitudes = f[0]
    residual = columns @ amplitudes - target
    sse = float(residual @ residual)
    pattern = tuple(_STATE_NAMES[s] for s in _PATTERNS[pattern_id[0]])
    return InnerSolution(amplitudes=amplitudes, sse=sse, unique=unique,
                         pattern=pattern)


# ---------------------------------------------------------------------------
# simplex solver: Nelder-Mead on sine-transformed variables, batched lockstep
# ---------------------------------------------------------------------------

def _to_amplitude(x: np.ndarray, lower: float, upper: np.ndarray) -> np.ndarray:
    return lower + (upper - lower) * 0.5 * (np.sin(x) + 1.0)


def _from_amplitude(f: np.ndarray, lower: float, upper: np.ndarray) -> np.ndarray:
    ratio = np.clip(2.0 * (f - lower) / (upper - lower) - 1.0, -1.0, 1.0)
    return np.arcsin(ratio)


def _nm_pass(evaluate, simplex, fx, to_amp, xtol_load, ftol_rel, f_floor,
             max_iter):
    """One Nelder-Mead run to convergence on an existing simplex (in place).

    All batch instances advance together with masked updates; finished
    instances are frozen, so results do not depend on batch composition.
    Returns (simplex, fx, converged, n_iter) with vertices sorted by value.
    """
    batch = simplex.shape[0]
    active = np.ones(batch, dtype=bool)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        order = np.argsort(fx, axis=1, kind="stable")
        fx = np.take_along_axis(fx, order, axis=1)
        simplex = np.take_along_axis(simplex, order[:, :, None], axis=1)

        amps = to_amp(simplex)                                # (B,4,3)
        diam = (amps.max(axis=1) - amps.min(axis=1)).max(axis=1)
        fspread = fx[:, 3] - fx[:, 0]
        newly_done = (diam <= xtol_load) & (fspread <= ftol_rel * np.abs(fx[:, 0]) + f_floor)
        active &= ~newly_done
        if not np.any(active):
            break

        centroid = simplex[:, :3, :].mean(axis=1)
        worst = simplex[:, 3, :]
        xr = centroid + (centroid - worst)
        xe = centroid + 2.0 * (centroid - worst)
        xoc = centroid + 0.5 * (centroid - worst)
        xic = centroid - 0.5 * (centroid - worst)
        fr, fe, foc, fic = evaluate(xr), evaluate(xe), evaluate(xoc), evaluate(xic)

        expand = fr < fx[:, 0]
        reflect = ~expand & (fr < fx[:, 2])
        outside = ~expand & ~reflect & (fr < fx[:, 3])
        inside = ~expand & ~reflect & ~outside
        oc_ok = outside & (foc <= fr)
        ic_ok = inside & (fic < fx[:, 3])
        shrink = (outside & ~oc_ok) | (inside & ~ic_ok)

        new_vertex = xr.copy()
        new_f = fr.copy()
        take_e = expand & (fe < fr)
        new_vertex = np.where(take_e[:, None], xe, new_vertex)
        new_f = np.where(take_e, fe, new_f)
        new_vertex = np.where(oc_ok[:, None], xoc, new_vertex)
        new_f = np.where(oc_ok, foc, new_f)
        new_vertex = np.where(ic_ok[:, None], xic, new_vertex)
        new_f = np.where(ic_ok, fic, new_f)

        accept = active & ~shrink
        simplex[:, 3, :] = np.where(accept[:, None], new_vertex, simplex[:, 3, :])
        fx[:, 3] = np.where(accept, new_f, fx[:, 3])

        do_shrink = active & shrink
        if np.any(do_shrink):
            best = simplex[:, 0:1, :]
            shrunk = best + 0.5 * (simplex - best)
            simplex = np.where(do_shrink[:, None, None], shrunk, simplex)
            f_new = np.stack([evaluate(simplex[:, v, :]) for v in range(4)], axis=1)
            fx = np.where(do_shrink[:, None], f_new, fx)

    order = np.argsort(fx, axis=1, kind="stable")
    fx = np.take_along_axis(fx, order, axis=1)
    simplex = np.take_along_axis(simplex, order[:, :, None], axis=1)
    return simplex, fx, ~active, n_iter


_RESTART_DELTAS = (0.05, 0.005)   # fresh-simplex steps [rad] after each pass


def _nelder_mead_batch(evaluate_amp, ttt, lower, upper, x0,
                       xtol_load=1e-6, ftol_rel=1e-10, max_iter=500):
    """Nelder-Mead with deterministic restarts over a batch of instances.

    ``evaluate_amp`` maps amplitudes (B, 3) to objective values (B,); ``x0``
    is the (B, 3) start points in transformed space.  After the first pass
    the simplex is rebuilt around the incumbent with progressively smaller
    steps and re-run, which polishes away the stagnation a single pass can
    leave behind.  Returns (amplitudes (B,3), sse (B,), converged (B,),
    n_iter).
    """
    def evaluate(x):
        return evaluate_amp(_to_amplitude(x, lower, upper))

    def to_amp(simplex):
        return _to_amplitude(simplex, lower, upper)

    def fresh_simplex(center, delta):
        simplex = np.repeat(center[:, None, :], 4, axis=1)    # (B, 4, 3)
        for i in range(3):
            simplex[:, i + 1, i] += delta
        fx = np.stack([evaluate(simplex[:, v, :]) for v in range(4)], axis=1)
        return simplex, fx

    # the objective spread cannot resolve below evaluation round-off, which
    # in the worst (Gram form) case scales with ||t||^2
    f_floor = 64.0 * np.finfo(float).eps * (1.0 + np.abs(ttt))

    simplex, fx = fresh_simplex(x0, 0.5)
    total_iter = 0
    for delta in (None,) + _RESTART_DELTAS:
        if delta is not None:
            best_x, best_f = simplex[:, 0, :], fx[:, 0]
            simplex, fx = fresh_simplex(best_x, delta)
            # a restart must never lose the incumbent
            worse = fx[:, 0] > best_f
            simplex[worse, 0, :] = best_x[worse]
            fx[worse, 0] = best_f[worse]
        simplex, fx, converged, n_iter = _nm_pass(
            evaluate, simplex, fx, to_amp, xtol_load, ftol_rel, f_floor,
            max_iter)
        total_iter += n_iter

    amplitudes = _to_amplitude(simplex[:, 0, :], lower, upper)
    return amplitudes, fx[:, 0], converged, total_iter


def inner_solve_simplex(columns: np.ndarray, target: np.ndarray,
                        bounds: Bounds = Bounds(),
                        start: Optional[Sequence[float]] = None,
                        xtol_load: float = 1e-6, ftol_rel: float = 1e-10,
                        max_iter: int = 500) -> InnerSolution:
    """Nelder-Mead simplex solve with the sine bound transform.

    ``xtol_load`` is the simplex diameter tolerance in load units [N];
    ``ftol_rel`` the relative objective-spread tolerance.  By default two
    deterministic starts are used (box midpoint and the clipped unconstrained
    least-squares point) and the better result returned; passing ``start``
    uses exactly that single start.
    """
    columns, target = _validate_inner_args(columns, target)
    upper = bounds.upper_vec()
    g3, _, ttt = _gram_data(columns, target)

    if start is not None:
        starts = [np.asarray(start, dtype=float)]
        if starts[0].shape != (3,):
            raise OptimizationError(f"start must have 3 entries, got {start!r}")
    else:
        mid = np.full(3, bounds.lower) + 0.5 * (upper - bounds.lower)
        lsq, *_ = np.linalg.lstsq(columns, target, rcond=None)
        starts = [mid, np.clip(lsq, bounds.lower, upper)]

    def evaluate_amp(f):
        residual = f @ columns.T - target[None, :]
        return np.einsum("bn,bn->b", residual, residual)

    best = None
    for s in starts:
        x0 = _from_amplitude(s[None, :], bounds.lower, upper)
        amps, sse, conv, n_iter = _nelder_mead_batch(
            evaluate_amp, np.array([ttt]), bounds.lower, upper, x0,
            xtol_load=xtol_load, ftol_rel=ftol_rel, max_iter=max_iter)
        cand = (float(sse[0]), amps[0], bool(conv[0]), n_iter)
        if best is None or cand[0] < best[0]:
            best = cand

    _, amplitudes, converged, n_iter = best
    residual = columns @ amplitudes - target
    return InnerSolution(amplitudes=amplitudes, sse=float(residual @ residual),
                         unique=_unique_flag(g3), pattern=("free",) * 3,
                         converged=converged, n_iter=n_iter)


# ---------------------------------------------------------------------------
# outer search over triples
# ---------------------------------------------------------------------------

@dataclass
class OptimizationResult:
    """Winning triple with amplitudes and search diagnostics.

    ``nodes``/``coords``/``amplitudes`` are ordered (J, K, L).  ``objective``
    is (sum of amplitudes) * SSE, exactly as stored.  ``reported_zero`` marks
    amplitudes below the reporting threshold (1e-6 of the upper bound) —
    interpretation only, the optimizer itself never branches on it.
    """

    nodes: Tuple[int, int, int]
    coords: np.ndarray
    amplitudes: np.ndarray
    sse: float
    objective: float
    strategy: str
    solver: str
    bounds: Bounds
    degenerate: bool
    nonunique: bool
    n_triples: int
    diagnostics: Dict = field(default_factory=dict)

    @property
    def reported_zero(self) -> Tuple[bool, bool, bool]:
        upper = self.bounds.upper_vec()
        return tuple(bool(a < _ZERO_REPORT_REL * u)
                     for a, u in zip(self.amplitudes, upper))

    def to_dict(self) -> Dict:
        upper = self.bounds.upper_vec()
        rows = []
        for label, node, xy, amp, zero in zip(
                ("J", "K", "L"), self.nodes, self.coords, self.amplitudes,
                self.reported_zero):
            rows.append({"set": label, "node": int(node),
                         "x": float(xy[0]) if np.isfinite(xy[0]) else None,
                         "y": float(xy[1]) if np.isfinite(xy[1]) else None,
                         "load_N": float(amp), "reported_zero": zero})
        return {
            "schema": "load-placement-result v1",
            "rows": rows,
            "sse": self.sse,
            "objective": self.objective,
            "strategy": self.strategy,
            "solver": self.solver,
            "bounds": {"lower": self.bounds.lower,
                       "upper": [float(u) for u in upper]},
            "degenerate": self.degenerate,
            "nonunique": self.nonunique,
            "n_triples": self.n_triples,
            "diagnostics": self.diagnostics,
        }


def _selection_data(matrix: ComplianceMatrix, target: np.ndarray):
    """Gram data and per-set usable column indices for the outer search."""
    target = np.asarray(target, dtype=float)
    if target.shape != (len(matrix.eval_nodes),):
        raise OptimizationError(
            f"target length {target.shape} does not match the "
            f"{len(matrix.eval_nodes)} evaluation nodes"
        )
    valid = np.isfinite(target)
    if not np.any(valid):
        raise OptimizationError("target has no finite entries")
    z = matrix.zeta[valid]
    t = target[valid]
    gram = z.T @ z
    bvec = z.T @ t
    ttt = float(t @ t)

    usable = []
    for which in ("J", "K", "L"):
        sl = matrix.set_slice(which)
        cols = np.arange(sl.start, sl.stop)[~matrix.flagged[sl]]
        if len(cols) == 0:
            raise OptimizationError(
                f"candidate set {which} has no usable (unconstrained) nodes"
            )
        usable.append(cols)
    return gram, bvec, ttt, usable, t, z


def _decode(flat: np.ndarray, nk: int, nl: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = flat % nl
    ab = flat // nl
    b = ab % nk
    a = ab // nk
    return a, b, c


def _evaluate_triples(flat: np.ndarray, gram, bvec, ttt, usable, bounds: Bounds,
                      solver: str):
    """Amplitudes, SSE and objective for a batch of flat triple indices."""
    jc, kc, lc = usable
    a, b, c = _decode(flat, len(kc), len(lc))
    cols = np.stack([jc[a], kc[b], lc[c]], axis=1)           # (B, 3)
    g3 = gram[cols[:, :, None], cols[:, None, :]]
    b3 = bvec[cols]
    ttt_b = np.full(len(flat), ttt)
    upper = bounds.upper_vec()
    if solver == "exact":
        f, sse, _, done = _kkt_enumerate(g3, b3, ttt_b, bounds.lower, upper)
        sse = np.where(done, sse, np.inf)
    elif solver == "simplex":
        mid = bounds.lower + 0.5 * (upper - bounds.lower)
        x0 = np.repeat(_from_amplitude(mid[None, :], bounds.lower, upper),
                       len(flat), axis=0)
        f, sse, _, _ = _nelder_mead_batch(
            lambda amp: _quad_sse(amp, g3, b3, ttt_b), ttt_b,
            bounds.lower, upper, x0)
    else:
        raise OptimizationError(f"solver must be 'exact' or 'simplex', got {solver!r}")
    objective = f.sum(axis=1) * sse
    return f, sse, objective


_TOP_K = 10


def _chunk_best(flat, f, sse, objective, keep=_TOP_K):
    """The chunk's best `keep` triples as sortable (obj, sse, flat, F) tuples."""
    solvable = np.isfinite(objective)
    flat, f, sse, objective = flat[solvable], f[solvable], sse[solvable], objective[solvable]
    order = np.lexsort((sse, objective))[:keep]
    return [(float(objective[i]), float(sse[i]), int(flat[i]), f[i].copy())
            for i in order]


def outer_search(matrix: ComplianceMatrix, target: np.ndarray,
                 bounds: Bounds = Bounds(), strategy: str = "exhaustive",
                 solver: str = "exact", workers: int = 1,
                 gap_check_limit: int = 1000, mesh=None) -> OptimizationResult:
    """Find the triple (j, k, l) minimizing (F_j+F_k+F_l) * SSE.

    ``strategy`` is 'exhaustive' (chunked full enumeration, deterministic for
    any worker count) or 'coordinate-descent' (cycle over one set at a time;
    on problems with at most ``gap_check_limit`` triples the exhaustive
    optimum is also computed and the optimality gap reported in the
    diagnostics).  Flagged (constrained) candidates never enter.  Passing the
    ``mesh`` the matrix was built on fills in winner coordinates.
    """
    gram, bvec, ttt, usable, t_valid, z_valid = _selection_data(matrix, target)
    jc, kc, lc = usable
    n_triples = len(jc) * len(kc) * len(lc)

    def evaluate(flat):
        return _evaluate_triples(flat, gram, bvec, ttt, usable, bounds, solver)

    def exhaustive_best():
        def do_chunk(rng):
            lo, hi = rng
            flat = np.arange(lo, hi, dtype=np.int64)
            f, sse, objective = evaluate(flat)
            return _chunk_best(flat, f, sse, objective)
        parts = run_chunks(do_chunk, chunk_ranges(n_triples, _CHUNK_TRIPLES),
                           workers=workers)
        merged = sorted((item for part in parts for item in part),
                        key=lambda item: (item[0], item[1], item[2]))
        if not merged or not np.isfinite(merged[0][0]):
            raise OptimizationError("no solvable triple in the outer search")
        return merged[:_TOP_K]

    diagnostics: Dict = {}
    if strategy == "exhaustive":
        top = exhaustive_best()
        best_obj, best_sse, best_flat, best_f = top[0]
    elif strategy == "coordinate-descent":
        sizes = (len(jc), len(kc), len(lc))

        def descend(start):
            """Axis-at-a-time sweeps from one start; strict-key acceptance."""
            idx = list(start)
            current_key = None
            f_best = None
            sweeps = 0
            for sweeps in range(1, 101):
                changed = False
                for axis in range(3):
                    base = idx.copy()
                    flats = []
                    for v in range(sizes[axis]):
                        base[axis] = v
                        flats.append((base[0] * sizes[1] + base[1]) * sizes[2]
                                     + base[2])
                    flat = np.asarray(flats, dtype=np.int64)
                    f, sse, objective = evaluate(flat)
                    pick = int(np.lexsort((flat, sse, objective))[0])
                    key = (float(objective[pick]), float(sse[pick]),
                           int(flat[pick]))
                    if current_key is None or key < current_key:
                        current_key = key
                        f_best = f[pick].copy()
                        if idx[axis] != pick:
                            changed = True
                        idx[axis] = pick
                if not changed:
                    break
            return current_key, f_best, sweeps

        # deterministic starts: the corner triple plus the winner of a
        # strided probe across the whole triple space
        starts = [(0, 0, 0)]
        stride = max(1, n_triples // _CD_PROBE)
        flat = np.arange(0, n_triples, stride, dtype=np.int64)
        f, sse, objective = evaluate(flat)
        if np.any(np.isfinite(objective)):
            pick = int(np.lexsort((flat, sse, objective))[0])
            a, b, c = _decode(flat[pick:pick + 1], sizes[1], sizes[2])
            probe_start = (int(a[0]), int(b[0]), int(c[0]))
            if probe_start != starts[0]:
                starts.append(probe_start)

        current_key = None
        best_f = None
        total_sweeps = 0
        for start in starts:
            key, f_run, sweeps = descend(start)
            total_sweeps += sweeps
            if key is not None and (current_key is None or key < current_key):
                current_key = key
                best_f = f_run
        if current_key is None or not np.isfinite(current_key[0]):
            raise OptimizationError("no solvable triple in the outer search")
        best_obj, best_sse, best_flat = current_key
        top = [(best_obj, best_sse, best_flat, best_f)]
        diagnostics["coordinate_descent_sweeps"] = total_sweeps
        diagnostics["coordinate_descent_starts"] = len(starts)
        if n_triples <= gap_check_limit:
            ex_top = exhaustive_best()
            gap = best_obj - ex_top[0][0]
            scale = max(abs(ex_top[0][0]), 1e-300)
            diagnostics["exhaustive_objective"] = ex_top[0][0]
            diagnostics["optimality_gap"] = gap
            diagnostics["optimality_gap_relative"] = gap / scale
    else:
        raise OptimizationError(
            f"strategy must be 'exhaustive' or 'coordinate-descent', got {strategy!r}"
        )

    # final report: re-solve the winner against the raw residual for an
    # accurate SSE (the Gram form above is only used for ranking)
    a, b, c = (int(v[0]) for v in _decode(np.array([best_flat]), len(kc), len(lc)))
    win_cols = np.array([jc[a], kc[b], lc[c]])
    columns = z_valid[:, win_cols]
    final = (inner_solve(columns, t_valid, bounds) if solver == "exact"
             else inner_solve_simplex(columns, t_valid, bounds))
    amplitudes = final.amplitudes
    sse = final.sse
    objective = float(amplitudes.sum() * sse)
    nodes = tuple(int(matrix.cand_nodes[i]) for i in win_cols)
    if mesh is not None:
        coords = mesh.node_coords(list(nodes)).astype(float)
    else:
        coords = np.full((3, 2), np.nan)
    degenerate = bool(best_obj == 0.0 and np.all(amplitudes == 0.0))

    diagnostics["n_triples"] = n_triples
    diagnostics["selection_objective"] = best_obj
    diagnostics["top"] = [
        {"rank": r + 1, "objective": obj, "sse": s,
         "nodes": [int(matrix.cand_nodes[i]) for i in
                   _winner_cols(flat, usable)],
         "amplitudes": [float(v) for v in fvals]}
        for r, (obj, s, flat, fvals) in enumerate(top)
    ]

    return OptimizationResult(
        nodes=nodes, coords=coords, amplitudes=amplitudes, sse=sse,
        objective=objective, strategy=strategy, solver=solver, bounds=bounds,
        degenerate=degenerate, nonunique=not final.unique,
        n_triples=n_triples, diagnostics=diagnostics,
    )


def _winner_cols(flat: int, usable) -> np.ndarray:
    jc, kc, lc = usable
    a, b, c = _decode(np.array([flat]), len(kc), len(lc))
    return np.array([jc[int(a[0])], kc[int(b[0])], lc[int(c[0])]])


# ---------------------------------------------------------------------------
# strength scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaledLoads:
    """Amplitudes scaled so the worst layer reaches its allowable stress."""

    scale: float
    amplitudes: np.ndarray
    limiting_material: str
    stresses: Dict[str, float]       # max |principal stress| per material at scale 1
    allowables: Dict[str, float]


def scale_to_allowable(system, nodes: Sequence[int], amplitudes: Sequence[float],
                       direction: str = "-z") -> ScaledLoads:
    """Largest load multiplier keeping every layer at or below its allowable.

    Solves the model under the given concentrated loads, scans the in-plane
    principal stress extrema per material layer, and scales linearly.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    entries = tuple((int(n), float(a), direction)
                    for n, a in zip(nodes, amplitudes) if a != 0.0)
    if not entries:
        raise OptimizationError("all amplitudes are zero; nothing to scale")
    allowables = {}
    for shell in system.shells:
        for layer in shell.layers:
            if layer.material.allowable_stress is not None:
                allowables[layer.material.name] = layer.material.allowable_stress
    if not allowables:
        raise OptimizationError(
            "no material in the model defines an allowable stress"
        )

    disp = fe_solve(system, LoadCase(entries))
    stresses = layer_stress_extrema(system, disp)
    scale = np.inf
    limiting = None
    for name, allow in sorted(allowables.items()):
        sig = stresses.get(name, 0.0)
        if sig <= 0.0:
            continue
        lam = allow / sig
        if lam < scale:
            scale = lam
            limiting = name
    if limiting is None:
        raise OptimizationError(
            "stress state is identically zero for every limited material"
        )
    return ScaledLoads(scale=float(scale), amplitudes=amplitudes * scale,
                       limiting_material=limiting,
                       stresses={k: float(v) for k, v in sorted(stresses.items())},
                       allowables=allowables)
