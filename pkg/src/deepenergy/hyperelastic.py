"""Lopez-Pamies compressible hyperelastic law.

    psi = sum_r 3^(1-a_r)/(2 a_r) mu_r (I1^a_r - 3^a_r) - sum_r mu_r ln J + lam/2 (J-1)^2

Functions take stacked deformation gradients ``(..., 3, 3)`` as arrays or
tape nodes.  Moduli are in kPa.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class InadmissibleDeformation(ValueError):
    """det F <= 0 somewhere: the iterate left the admissible set."""


@dataclass(frozen=True)
class HyperParams:
    alpha: tuple[float, ...] = (1.0, -2.47)
    mu: tuple[float, ...] = (13.5, 1.08)
    lam: float = 146.2

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        if len(self.alpha) != len(self.mu) or not self.alpha:
            raise ValueError("alpha and mu must have the same nonzero length")
        if any(m <= 0 for m in self.mu) or self.lam <= 0:
            raise ValueError("moduli must be positive")
        if any(a == 0 for a in self.alpha):
            raise ValueError("exponents must be nonzero")

    @property
    def M(self) -> int:
        return len(self.alpha)

    @property
    def shear_modulus(self) -> float:
        return sum(self.mu)

    @property
    def bulk_modulus(self) -> float:
        # ground-state bulk modulus of the compressible law
        return self.lam + 2.0 * self.shear_modulus / 3.0

    @property
    def youngs_modulus(self) -> float:
        mu, k = self.shear_modulus, self.bulk_modulus
        return 9.0 * k * mu / (3.0 * k + mu)


DEFAULT_HYPER = HyperParams()


@dataclass
class DeformationState:
    F: np.ndarray
    C: np.ndarray
    I1: np.ndarray
    J: np.ndarray


def kinematics(F) -> DeformationState:
    F = np.asarray(ad.value(F))
    C = np.swapaxes(F, -1, -2) @ F
    return DeformationState(F, C, np.trace(C, axis1=-2, axis2=-1), ad.det3(F))


def _check_admissible(J):
    J = np.asarray(ad.value(J))
    if not np.all(J > 0.0):
        raise InadmissibleDeformation(f"det F <= 0 at {int(np.sum(~(J > 0.0)))} point(s), min det F = {J.min():.3e}")


def strain_energy(F, params: HyperParams = DEFAULT_HYPER):
    J = ad.det3(F)
    _check_admissible(J)
    I1 = ad.trace(ad.matmul(ad.transpose(F), F))
    psi = ad.scale(-params.shear_modulus, ad.ln(J)) + ad.scale(0.5 * params.lam, ad.square(J - 1.0))
    for a, mu in zip(params.alpha, params.mu):
        c = 3.0 ** (1.0 - a) / (2.0 * a) * mu
        psi = psi + ad.scale(c, ad.power(I1, a) - 3.0**a)
    return psi


def first_pk_stress(F, params: HyperParams = DEFAULT_HYPER) -> np.ndarray:
    F = np.asarray(ad.value(F), dtype=np.float64)
    J = ad.det3(F)
    _check_admissible(J)
    I1 = np.trace(np.swapaxes(F, -1, -2) @ F, axis1=-2, axis2=-1)
    F_invT = np.swapaxes(ad.inv3(F), -1, -2)
    coef = sum(3.0 ** (1.0 - a) * mu * I1 ** (a - 1.0) for a, mu in zip(params.alpha, params.mu))
    vol = params.lam * (J * J - J) - params.shear_modulus
    return np.asarray(coef)[..., None, None] * F + np.asarray(vol)[..., None, None] * F_invT
