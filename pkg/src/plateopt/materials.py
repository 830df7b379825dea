"""Material and laminate definitions with first-order shell stiffness.

A laminate is a stack of orthotropic layers at given angles.  The shell
stiffness collects the classical A/B/D matrices (membrane, coupling, bending,
engineering shear convention) plus the 2x2 transverse shear stiffness built
from the per-layer out-of-plane shear moduli, with a shear correction factor.

Units are N and mm throughout (moduli in MPa = N/mm^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import MaterialError

DEFAULT_SHEAR_CORRECTION = 5.0 / 6.0


@dataclass(frozen=True)
class MaterialSpec:
    """Engineering constants of an orthotropic material (MPa).

    ``e3`` is carried for completeness of the data set but does not enter the
    plane-stress shell stiffness.  ``allowable_stress`` (MPa) is optional and
    only used when scaling load amplitudes against a strength limit.
    """

    name: str
    e1: float
    e2: float
    e3: float
    nu12: float
    nu13: float
    nu23: float
    g12: float
    g13: float
    g23: float
    allowable_stress: Optional[float] = None

    def __post_init__(self):
        for attr in ("e1", "e2", "e3", "g12", "g13", "g23"):
            if not getattr(self, attr) > 0.0:
                raise MaterialError(
                    f"material {self.name!r}: {attr} must be > 0, got {getattr(self, attr)!r}"
                )
        for attr in ("nu12", "nu13", "nu23"):
            nu = getattr(self, attr)
            if not (0.0 <= nu < 0.5):
                raise MaterialError(
                    f"material {self.name!r}: {attr} must lie in [0, 0.5), got {nu!r}"
                )
        if self.allowable_stress is not None and not self.allowable_stress > 0.0:
            raise MaterialError(
                f"material {self.name!r}: allowable_stress must be > 0 if given"
            )
        # plane-stress stability: 1 - nu12*nu21 must stay positive
        if 1.0 - self.nu12 * self.nu21 <= 0.0:
            raise MaterialError(
                f"material {self.name!r}: nu12^2*E2/E1 >= 1, not physically stable"
            )

    @property
    def nu21(self) -> float:
        return self.nu12 * self.e2 / self.e1

    @classmethod
    def isotropic(cls, name: str, e: float, nu: float,
                  allowable_stress: Optional[float] = None) -> "MaterialSpec":
        """Isotropic shortcut: all moduli from (E, nu), G = E / (2(1+nu))."""
        g = e / (2.0 * (1.0 + nu))
        return cls(name=name, e1=e, e2=e, e3=e, nu12=nu, nu13=nu, nu23=nu,
                   g12=g, g13=g, g23=g, allowable_stress=allowable_stress)

    def reduced_stiffness(self) -> np.ndarray:
        """Plane-stress reduced stiffness Q (3x3) in material axes.

        Rows/columns order (sigma_1, sigma_2, tau_12) against
        (eps_1, eps_2, gamma_12) with engineering shear strain.
        """
        denom = 1.0 - self.nu12 * self.nu21
        q11 = self.e1 / denom
        q22 = self.e2 / denom
        q12 = self.nu12 * self.e2 / denom
        return np.array([[q11, q12, 0.0],
                         [q12, q22, 0.0],
                         [0.0, 0.0, self.g12]])


def rotated_stiffness(q: np.ndarray, angle_deg: float) -> np.ndarray:
    """Transform a reduced stiffness Q from material axes to laminate axes.

    Standard Qbar transformation for a ply rotated by ``angle_deg`` about the
    laminate normal (engineering shear convention).
    """
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    # Reuter-style transformation: Qbar = T^-1 Q R T R^-1, written out
    t_inv = np.array([[c * c, s * s, -2 * c * s],
                      [s * s, c * c, 2 * c * s],
                      [c * s, -c * s, c * c - s * s]])
    t_eps = np.array([[c * c, s * s, c * s],
                      [s * s, c * c, -c * s],
                      [-2 * c * s, 2 * c * s, c * c - s * s]])
    return t_inv @ q @ t_eps


def rotated_shear_stiffness(mat: MaterialSpec, angle_deg: float) -> np.ndarray:
    """Transverse shear stiffness (2x2, order xz/yz) of a rotated ply."""
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    g13, g23 = mat.g13, mat.g23
    return np.array([[g13 * c * c + g23 * s * s, (g13 - g23) * c * s],
                     [(g13 - g23) * c * s, g13 * s * s + g23 * c * c]])


@dataclass(frozen=True)
class Layer:
    """One ply: material, thickness (mm), fiber angle (deg, from laminate x)."""

    material: MaterialSpec
    thickness: float
    angle_deg: float = 0.0

    def __post_init__(self):
        if not self.thickness > 0.0:
            raise MaterialError(
                f"layer of {self.material.name!r}: thickness must be > 0, "
                f"got {self.thickness!r}"
            )


@dataclass(frozen=True)
class LaminateSpec:
    """Ordered layer stack, bottom (most negative z) first."""

    name: str
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        if len(self.layers) == 0:
            raise MaterialError(f"laminate {self.name!r}: needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def thickness(self) -> float:
        return float(sum(layer.thickness for layer in self.layers))


@dataclass(frozen=True)
class LayerStiffness:
    """Per-layer data kept for stress recovery: Qbar and the z-interval."""

    material: MaterialSpec
    qbar: np.ndarray
    z_bot: float
    z_top: float


@dataclass(frozen=True)
class ShellStiffness:
    """Section stiffness of a laminate about its midplane.

    ``a``/``b``/``d`` are the 3x3 membrane/coupling/bending matrices
    (engineering shear), ``a_s`` the 2x2 transverse shear stiffness including
    the correction factor, ``h`` the total thickness.  ``layers`` keeps the
    per-layer rotated stiffness for later stress evaluation.
    """

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    a_s: np.ndarray
    h: float
    layers: Tuple[LayerStiffness, ...] = field(repr=False, default=())

    def __post_init__(self):
        for arr in (self.a, self.b, self.d, self.a_s):
            arr.flags.writeable = False


def laminate_stiffness(laminate: LaminateSpec,
                       shear_correction: float = DEFAULT_SHEAR_CORRECTION) -> ShellStiffness:
    """Integrate layer stiffnesses through the thickness.

    A = sum Qbar_k (z_k - z_{k-1});  B = 1/2 sum Qbar_k (z_k^2 - z_{k-1}^2);
    D = 1/3 sum Qbar_k (z_k^3 - z_{k-1}^3);  As = kappa * sum Cbar_k t_k.

    z runs from -h/2 at the bottom of the first layer to +h/2; a symmetric
    stack therefore yields B = 0 up to round-off.
    """
    h = laminate.thickness
    a = np.zeros((3, 3))
    b = np.zeros((3, 3))
    d = np.zeros((3, 3))
    a_s = np.zeros((2, 2))
    layer_table = []
    z_bot = -0.5 * h
    for layer in laminate.layers:
        z_top = z_bot + layer.thickness
        qbar = rotated_stiffness(layer.material.reduced_stiffness(), layer.angle_deg)
        a += qbar * (z_top - z_bot)
        b += 0.5 * qbar * (z_top**2 - z_bot**2)
        d += qbar * (z_top**3 - z_bot**3) / 3.0
        a_s += rotated_shear_stiffness(layer.material, layer.angle_deg) * layer.thickness
        layer_table.append(LayerStiffness(layer.material, qbar, z_bot, z_top))
        z_bot = z_top
    a_s *= shear_correction
    return ShellStiffness(a=a, b=b, d=d, a_s=a_s, h=h, layers=tuple(layer_table))
