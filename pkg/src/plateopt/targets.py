"""Synthetic target deflection fields with known ground truth.

Real reference fields for the shape-matching problem are rarely at hand, so
targets are manufactured three ways: solving the demonstrator model under a
known load case (the round-trip staple — the optimizer should find exactly
those loads again), evaluating an analytic plate benchmark, or reading a
field file.  Additive Gaussian noise with a fixed seed turns any of them into
a reproducible robustness exercise.

Sign convention: target fields store downward deflection as positive, the
same convention the influence matrix uses, so a forward-solved target equals
``zeta @ F`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .fe import LoadCase, SystemMatrix, solve as fe_solve
from .fields import ScalarField, field_from_mesh, load_field
from .mesh import Mesh

_VARIANTS = ("forward-solve", "analytic", "file")
_BENCHMARKS = ("ssss-uniform",)


@dataclass(frozen=True)
class TargetRecipe:
    """How to manufacture a target field.

    variant 'forward-solve': ``loads`` = ((node, magnitude, direction), ...)
    applied to the model; 'analytic': ``benchmark`` + ``params``; 'file':
    ``path`` to a saved scalar field.  ``noise_sigma`` [mm] of seeded
    Gaussian noise is added on top in every variant.
    """

    variant: str
    loads: Tuple[Tuple[int, float, str], ...] = ()
    benchmark: str = ""
    params: Dict = field(default_factory=dict)
    path: str = ""
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ConfigError(
                f"target variant must be one of {_VARIANTS}, got {self.variant!r}"
            )
        if not self.noise_sigma >= 0.0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.variant == "forward-solve" and not self.loads:
            raise ConfigError("forward-solve target needs at least one load")
        if self.variant == "analytic" and self.benchmark not in _BENCHMARKS:
            raise ConfigError(
                f"unknown analytic benchmark {self.benchmark!r}; "
                f"available: {_BENCHMARKS}"
            )
        if self.variant == "file" and not self.path:
            raise ConfigError("file target needs a path")


@dataclass(frozen=True)
class TargetResult:
    """Generated field plus the ground truth that produced it."""

    field: ScalarField
    recipe: TargetRecipe
    true_loads: Optional[Tuple[Tuple[int, float, str], ...]] = None


def _ssss_uniform_deflection(mesh: Mesh, params: Dict) -> np.ndarray:
    """Series solution for a simply supported isotropic plate, uniform load.

    Double sine series over odd harmonics; downward-positive deflection in mm.
    Accepts either a flexural rigidity ``d`` [N*mm] or ``e`` [N/mm^2], ``nu``,
    ``thickness`` [mm]; pressure ``q`` [N/mm^2]; ``terms`` caps the largest
    odd harmonic (default 199).
    """
    q = params.get("q")
    if q is None or not math.isfinite(q):
        raise ConfigError("analytic benchmark needs a finite pressure 'q'")
    if "d" in params:
        rigidity = float(params["d"])
    else:
        try:
            e = float(params["e"])
            nu = float(params["nu"])
            t = float(params["thickness"])
        except KeyError as exc:
            raise ConfigError(
                "analytic benchmark needs 'd' or all of 'e', 'nu', 'thickness'"
            ) from exc
        if not (e > 0 and t > 0 and 0 <= nu < 0.5):
            raise ConfigError(
                f"analytic benchmark parameters out of range: e={e}, nu={nu}, t={t}"
            )
        rigidity = e * t ** 3 / (12.0 * (1.0 - nu * nu))
    if not rigidity > 0:
        raise ConfigError(f"flexural rigidity must be positive, got {rigidity}")
    terms = int(params.get("terms", 199))
    if terms < 1:
        raise ConfigError(f"terms must be >= 1, got {terms}")

    a = mesh.width
    b = mesh.height
    xs = np.arange(mesh.nnx) * mesh.element_size
    ys = np.arange(mesh.nny) * mesh.element_size
    m = np.arange(1, terms + 1, 2, dtype=float)
    n = np.arange(1, terms + 1, 2, dtype=float)
    sin_mx = np.sin(np.outer(m, xs) * math.pi / a)           # (M, nx)
    sin_ny = np.sin(np.outer(n, ys) * math.pi / b)           # (N, ny)
    denom = (np.add.outer((m / a) ** 2, (n / b) ** 2) ** 2
             * np.outer(m, n))                               # (M, N)
    coeff = (16.0 * q / (math.pi ** 6 * rigidity)) / denom
    w = np.einsum("mn,mx,ny->yx", coeff, sin_mx, sin_ny)
    return w


def generate(recipe: TargetRecipe, system: Optional[SystemMatrix] = None,
             mesh: Optional[Mesh] = None) -> TargetResult:
    """Manufacture the target field a recipe describes.

    'forward-solve' needs ``system``; 'analytic' needs ``mesh`` (or takes it
    from the system); 'file' needs neither.  Generation is deterministic
    given the recipe (noise is drawn from a generator seeded with
    ``recipe.seed``).
    """
    true_loads = None
    if recipe.variant == "forward-solve":
        if system is None:
            raise ConfigError("forward-solve target needs the assembled model")
        case = LoadCase(tuple((int(n), float(m), d) for n, m, d in recipe.loads))
        disp = fe_solve(system, case)
        fld = field_from_mesh(system.mesh, -disp.w)
        true_loads = case.entries
    elif recipe.variant == "analytic":
        if mesh is None:
            if system is None:
                raise ConfigError("analytic target needs a mesh")
            mesh = system.mesh
        fld = ScalarField(origin=(0.0, 0.0), spacing=mesh.element_size,
                          values=_ssss_uniform_deflection(mesh, recipe.params))
    else:
        fld = load_field(recipe.path)

    if recipe.noise_sigma > 0.0:
        rng = np.random.default_rng(recipe.seed)
        noise = recipe.noise_sigma * rng.standard_normal(fld.values.shape)
        values = np.where(fld.masked, 0.0, fld.values + noise)
        fld = ScalarField(origin=fld.origin, spacing=fld.spacing,
                          values=values, masked=fld.masked)

    return TargetResult(field=fld, recipe=recipe, true_loads=true_loads)
