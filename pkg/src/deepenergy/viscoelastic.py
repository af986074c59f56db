"""Two-potential standard linear solid at small strain.

Isotropic fourth-order moduli are applied through their projector form,
``(2a K + 3b J) : e = 2a dev(e) + b tr(e) I``, rather than stored as 4-index
arrays.  All functions accept ``(..., 3, 3)`` arrays or tape nodes.
Moduli in MPa, viscosities in MPa*s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

_I = np.eye(3)


@dataclass(frozen=True)
class ViscoParams:
    mu0: float = 1.0
    kappa0: float = 2.0
    mu1: float = 2.0
    kappa1: float = 4.0
    omega_K: float = 1.0
    omega_J: float = 2.0

    def __post_init__(self):
        for name in ("mu0", "kappa0", "mu1", "kappa1", "omega_K", "omega_J"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def distortional_rate(self) -> float:
        return self.mu1 / self.omega_K

    @property
    def volumetric_rate(self) -> float:
        return self.kappa1 / self.omega_J


DEFAULT_VISCO = ViscoParams()


def _tr(e):
    return ad.trace(e)


def _spherical(t, like):
    """``t * I`` with ``t`` shaped like the leading axes of ``like``."""
    shape = ad.value(like).shape[:-2] + (1, 1)
    return ad.reshape(t, shape) * _I


def _contract(a, b):
    """``a_ij b_ij`` over the trailing two axes."""
    return ad.sum(a * b, axis=(-2, -1))


def sym(grad):
    return ad.scale(0.5, grad + ad.transpose(grad))


def dev(e):
    return e - _spherical(ad.scale(1.0 / 3.0, _tr(e)), e)


def iso4_apply(shear: float, bulk: float, e):
    """``(2*shear*K + 3*bulk*J) : e``."""
    return ad.scale(2.0 * shear, dev(e)) + _spherical(ad.scale(bulk, _tr(e)), e)


def _quadratic(shear: float, bulk: float, e):
    # shear e_ij e_ij + (3 bulk - 2 shear)/6 (e_kk)^2  ==  1/2 e : (2 shear K + 3 bulk J) : e
    return ad.scale(shear, _contract(e, e)) + ad.scale((3.0 * bulk - 2.0 * shear) / 6.0, ad.square(_tr(e)))


def free_energy(eps, eps_v, params: ViscoParams = DEFAULT_VISCO):
    eps_e = eps - eps_v
    return _quadratic(params.mu0, params.kappa0, eps) + _quadratic(params.mu1, params.kappa1, eps_e)


def dissipation(rate_v, params: ViscoParams = DEFAULT_VISCO):
    return _quadratic(params.omega_K, params.omega_J, rate_v)


def cauchy_stress(eps, eps_v, params: ViscoParams = DEFAULT_VISCO):
    return iso4_apply(params.mu0, params.kappa0, eps) + iso4_apply(params.mu1, params.kappa1, eps - eps_v)


def evolution_rate(eps, eps_v, params: ViscoParams = DEFAULT_VISCO):
    """Viscous strain rate ``M^-1 L1 (eps - eps_v)``."""
    d = eps - eps_v
    rk = params.distortional_rate
    rj = params.volumetric_rate
    return ad.scale(rk, d) + _spherical(ad.scale((rj - rk) / 3.0, _tr(d)), d)
