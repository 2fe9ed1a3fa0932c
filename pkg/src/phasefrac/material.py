"""Isotropic plane-strain elasticity, tensile/compressive energy splits and
the degraded stress of the hybrid phase-field model.

Strains are handled as arrays whose last axis holds the tensor components
``(exx, eyy, exy)``; ``exy`` is the tensor (not engineering) shear strain.
All routines broadcast over leading axes so they can be applied to every
quadrature point of a mesh at once.

Units are N, mm and MPa throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

GPA = 1000.0  # MPa


class DecompKind(str, enum.Enum):
    SPECTRAL = "spect"
    VOLDEV = "voldev"
    STARCONVEX = "starconvex"


class Strain2(NamedTuple):
    xx: float
    yy: float
    xy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.xx, self.yy, self.xy], dtype=float)


class EnergySplit(NamedTuple):
    plus: np.ndarray | float
    minus: np.ndarray | float


def lame_from(E: float, nu: float) -> tuple[float, float, float]:
    """Plane-strain Lame constants and bulk modulus ``(lam, mu, kappa)``."""
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson's ratio must lie in [0, 0.5), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu, lam + 2.0 * mu / 3.0


@dataclass(frozen=True)
class MaterialParams:
    """Elastic and fracture constants.

    Parameters
    ----------
    E : float
        Young's modulus in MPa.
    nu : float
        Poisson's ratio.
    Gc : float
        Critical energy release rate in N/mm.
    l0 : float
        Regularisation length in mm.
    gamma_star : float
        Compressive/tensile strength ratio used by the star-convex split.
    k_res : float
        Residual stiffness added to the degradation function.
    """

    E: float
    nu: float
    Gc: float
    l0: float
    gamma_star: float = 5.0
    k_res: float = 1e-6
    lam: float = field(init=False)
    mu: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        lam, mu, kappa = lame_from(self.E, self.nu)
        if not self.Gc > 0:
            raise ValueError(f"Gc must be positive, got {self.Gc}")
        if not self.l0 > 0:
            raise ValueError(f"l0 must be positive, got {self.l0}")
        if self.gamma_star < 0:
            raise ValueError(f"gamma_star must be non-negative, got {self.gamma_star}")
        if not 0.0 <= self.k_res < 1e-2:
            raise ValueError(f"k_res must be a small non-negative number, got {self.k_res}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def from_gpa(cls, E_gpa: float, nu: float, Gc: float, l0: float, **kw) -> "MaterialParams":
        return cls(E=E_gpa * GPA, nu=nu, Gc=Gc, l0=l0, **kw)

    def replace(self, **changes) -> "MaterialParams":
        kw = dict(E=self.E, nu=self.nu, Gc=self.Gc, l0=self.l0,
                  gamma_star=self.gamma_star, k_res=self.k_res)
        kw.update(changes)
        return MaterialParams(**kw)

    def to_dict(self) -> dict:
        return dict(E=self.E, nu=self.nu, Gc=self.Gc, l0=self.l0,
                    gamma_star=self.gamma_star, k_res=self.k_res)

    @property
    def elasticity_matrix(self) -> np.ndarray:
        """Plane-strain C in Voigt order (xx, yy, xy) with engineering shear."""
        lam, mu = self.lam, self.mu
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def _as_strain(eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != 3:
        raise ValueError(f"strain arrays need a trailing axis of length 3, got {eps.shape}")
    return eps


def eig2_values(eps):
    """Eigenvalues ``e1 >= e2`` of symmetric 2x2 strain tensors."""
    eps = _as_strain(eps)
    a, b, c = eps[..., 0], eps[..., 1], eps[..., 2]
    mean = 0.5 * (a + b)
    radius = np.hypot(0.5 * (a - b), c)
    return mean + radius, mean - radius


def eig2_sym(eps):
    """Closed-form eigen-decomposition of symmetric 2x2 strain tensors.

    Returns
    -------
    e1, e2 : ndarray
        Eigenvalues with ``e1 >= e2``.
    v1, v2 : ndarray, shape (..., 2)
        Corresponding orthonormal eigenvectors.
    """
    eps = _as_strain(eps)
    a, b, c = eps[..., 0], eps[..., 1], eps[..., 2]
    e1, e2 = eig2_values(eps)
    # angle of the major axis; atan2(0, 0) = 0 covers the isotropic case
    theta = 0.5 * np.arctan2(2.0 * c, a - b)
    cos, sin = np.cos(theta), np.sin(theta)
    v1 = np.stack([cos, sin], axis=-1)
    v2 = np.stack([-sin, cos], axis=-1)
    return e1, e2, v1, v2


def trace(eps) -> np.ndarray:
    eps = _as_strain(eps)
    return eps[..., 0] + eps[..., 1]


def deviatoric_norm2(eps) -> np.ndarray:
    """``eps_D : eps_D`` with ``eps_D = eps - tr(eps)/3 * 1`` in three dimensions.

    The out-of-plane entry of the deviator, ``-tr/3``, is included.
    """
    eps = _as_strain(eps)
    third = (eps[..., 0] + eps[..., 1]) / 3.0
    dxx = eps[..., 0] - third
    dyy = eps[..., 1] - third
    return dxx * dxx + dyy * dyy + 2.0 * eps[..., 2] ** 2 + third * third


def elastic_energy(eps, params: MaterialParams) -> np.ndarray:
    """Undegraded energy density ``lam/2 tr^2 + mu tr(eps^2)``."""
    eps = _as_strain(eps)
    tr = eps[..., 0] + eps[..., 1]
    sq = eps[..., 0] ** 2 + eps[..., 1] ** 2 + 2.0 * eps[..., 2] ** 2
    return 0.5 * params.lam * tr * tr + params.mu * sq


def energy_split(eps, kind: DecompKind | str, params: MaterialParams) -> EnergySplit:
    """Tensile and compressive parts of the strain energy density."""
    kind = DecompKind(kind)
    eps = _as_strain(eps)
    tr = eps[..., 0] + eps[..., 1]
    tr_pos = np.maximum(tr, 0.0)
    tr_neg = np.maximum(-tr, 0.0)

    if kind is DecompKind.SPECTRAL:
        e1, e2 = eig2_values(eps)
        # eps+ : eps+ = sum of squared positive eigenvalues (orthonormal basis)
        pos = np.maximum(e1, 0.0) ** 2 + np.maximum(e2, 0.0) ** 2
        neg = np.minimum(e1, 0.0) ** 2 + np.minimum(e2, 0.0) ** 2
        plus = 0.5 * params.lam * tr_pos**2 + params.mu * pos
        minus = 0.5 * params.lam * tr_neg**2 + params.mu * neg
        return EnergySplit(plus, minus)

    dev = params.mu * deviatoric_norm2(eps)
    vol_pos = 0.5 * params.kappa * tr_pos**2
    vol_neg = 0.5 * params.kappa * tr_neg**2
    if kind is DecompKind.VOLDEV:
        return EnergySplit(vol_pos + dev, vol_neg)
    gs = params.gamma_star
    plus = 0.5 * params.kappa * (tr_pos**2 - gs * tr_neg**2) + dev
    return EnergySplit(plus, (1.0 + gs) * vol_neg)


def degradation(phi, k_res: float = 1e-6):
    """``(1 - phi)^2 + k_res``."""
    return (1.0 - np.asarray(phi, dtype=float)) ** 2 + k_res


def hybrid_stress(eps, phi, params: MaterialParams) -> np.ndarray:
    """Isotropic stress scaled by the degradation function.

    The full stress is degraded (no split inside the momentum balance).
    Returns tensor components ``(sxx, syy, sxy)`` along the last axis.
    """
    eps = _as_strain(eps)
    g = degradation(phi, params.k_res)
    tr = eps[..., 0] + eps[..., 1]
    lam_tr = params.lam * tr
    sig = np.stack(
        [lam_tr + 2 * params.mu * eps[..., 0], lam_tr + 2 * params.mu * eps[..., 1], 2 * params.mu * eps[..., 2]],
        axis=-1,
    )
    return np.asarray(g)[..., None] * sig
