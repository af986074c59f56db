"""Semi-analytic ground truth for homogeneous deformations.

Each experiment's boundary conditions admit a homogeneous solution, so the
reference response reduces to a scalar root find (hyperelastic uniaxial
stress), a closed form (simple shear) or an ODE in time (viscoelastic
histories).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hyperelastic import DEFAULT_HYPER, HyperParams, first_pk_stress, strain_energy
from .integrator import rk5_update
from .viscoelastic import DEFAULT_VISCO, ViscoParams, cauchy_stress, evolution_rate, free_energy


class OracleError(RuntimeError):
    pass


@dataclass
class OracleResult:
    applied: float
    stress: float
    aux: float | np.ndarray | None
    energy: float
    extra: dict = field(default_factory=dict)


def _lateral_residual(l1: float, l2: float, params: HyperParams) -> float:
    return float(first_pk_stress(np.diag([l1, l2, l2]), params)[1, 1])


def _root(fun, lo: float, hi: float, tol: float = 1e-12, maxiter: int = 200) -> float:
    f_lo, f_hi = fun(lo), fun(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise OracleError("no sign change in bracket")
    # bisection down to a narrow bracket, then secant polish
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        f_mid = fun(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo < 1e-6:
            break
    x0, x1, f0, f1 = lo, hi, f_lo, f_hi
    for _ in range(maxiter):
        if abs(f1) <= tol or f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not lo <= x2 <= hi:
            break
        x0, f0 = x1, f1
        x1, f1 = x2, fun(x2)
    if abs(f1) <= tol:
        return x1
    # secant left the bracket or stalled: bisect to roundoff
    while hi - lo > 4e-16 * hi:
        mid = 0.5 * (lo + hi)
        f_mid = fun(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return lo if abs(fun(lo)) < abs(fun(hi)) else hi


def uniaxial_oracle(stretch: float, params: HyperParams = DEFAULT_HYPER) -> OracleResult:
    """Uniaxial stress: ``F = diag(l1, l2, l2)`` with ``P22 = P33 = 0``."""
    if not stretch > 0:
        raise OracleError("stretch must be positive")

    def fun(l2):
        return _lateral_residual(stretch, l2, params)

    try:
        l2 = _root(fun, 0.3, 1.5)
    except OracleError:
        try:
            l2 = _root(fun, 0.05, 5.0)
        except OracleError:
            raise OracleError(f"uniaxial_oracle: no lateral stretch found for stretch {stretch}") from None
    F = np.diag([stretch, l2, l2])
    P = first_pk_stress(F, params)
    return OracleResult(stretch, float(P[0, 0]), l2, float(strain_energy(F, params)), {"P22": float(P[1, 1])})


def uniaxial_strain_hyper_oracle(stretch: float, params: HyperParams = DEFAULT_HYPER) -> OracleResult:
    """Laterally confined stretch ``F = diag(l1, 1, 1)``."""
    F = np.diag([stretch, 1.0, 1.0])
    P = first_pk_stress(F, params)
    return OracleResult(stretch, float(P[0, 0]), 1.0, float(strain_energy(F, params)))


def shear_oracle(gamma: float, params: HyperParams = DEFAULT_HYPER) -> OracleResult:
    F = np.eye(3)
    F[0, 1] = gamma
    P = first_pk_stress(F, params)
    return OracleResult(gamma, float(P[0, 1]), None, float(strain_energy(F, params)))


def _uniaxial_strain_tensor(e11: float, lateral: float = 0.0) -> np.ndarray:
    return np.diag([e11, lateral, lateral])


def _lateral_strain(e11: float, eps_v: np.ndarray, params: ViscoParams) -> float:
    # sigma_22 is affine in the lateral strain
    s0 = cauchy_stress(_uniaxial_strain_tensor(e11, 0.0), eps_v, params)[1, 1]
    s1 = cauchy_stress(_uniaxial_strain_tensor(e11, 1.0), eps_v, params)[1, 1]
    return -s0 / (s1 - s0)


def piecewise_linear(times, values):
    """Strain history through ``(0, 0)`` and the schedule points."""
    t = np.concatenate([[0.0], np.asarray(times, dtype=float)])
    v = np.concatenate([[0.0], np.asarray(values, dtype=float)])
    return lambda s: float(np.interp(s, t, v))


def sls_oracle(
    times,
    strains,
    params: ViscoParams = DEFAULT_VISCO,
    mode: str = "uniaxial-strain",
    substeps: int = 40,
) -> list[OracleResult]:
    """Homogeneous SLS response to a piecewise-linear ``eps_11(t)``.

    Integrates the viscous strain with RK5 using ``substeps`` fine steps per
    schedule interval and returns ``sigma_11`` at every schedule time.
    """
    if mode not in ("uniaxial-strain", "uniaxial-stress"):
        raise ValueError(f"unknown mode {mode!r}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    history = piecewise_linear(times, strains)

    def total_strain(t, ev):
        e11 = history(t)
        lat = _lateral_strain(e11, ev, params) if mode == "uniaxial-stress" else 0.0
        return _uniaxial_strain_tensor(e11, lat)

    def rate(t, ev):
        return evolution_rate(total_strain(t, ev), ev, params)

    ev = np.zeros((3, 3))
    t = 0.0
    out = []
    for t_next, e in zip(times, strains):
        dt = (t_next - t) / substeps
        for k in range(substeps):
            ev = rk5_update(rate, ev, dt, t + k * dt)
        t = float(t_next)
        eps = total_strain(t, ev)
        sig = cauchy_stress(eps, ev, params)
        out.append(
            OracleResult(float(e), float(sig[0, 0]), ev.copy(), float(free_energy(eps, ev, params)), {"time": t, "eps": eps})
        )
    return out


def sls_exact_relaxation(t: float, strain: float, params: ViscoParams = DEFAULT_VISCO) -> float:
    """Closed-form ``sigma_11`` after an instantaneous uniaxial-strain step."""
    dev11 = 2.0 * strain / 3.0
    vol = strain
    eq = 2.0 * params.mu0 * dev11 + params.kappa0 * vol
    neq = 2.0 * params.mu1 * dev11 * math.exp(-params.distortional_rate * t) + params.kappa1 * vol * math.exp(
        -params.volumetric_rate * t
    )
    return eq + neq
