"""Time stepping of the viscous strain.

The update uses Lawson's six-stage explicit fifth-order Runge-Kutta scheme
(extended stability region).  The rate has no explicit time dependence and
the total strain is held at its end-of-step value over all stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .viscoelastic import DEFAULT_VISCO, ViscoParams, evolution_rate


@dataclass(frozen=True)
class TimeGrid:
    total: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.steps < 1:
            raise ValueError("time grid needs at least one step")

    @property
    def steps(self) -> int:
        return int(round(self.total / self.dt))

    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.steps + 1)


# stage abscissae; each equals the row sum of its stage coefficients
STAGE_TIMES = (0.0, 0.5, 0.25, 0.5, 0.75, 1.0)


def rk5_update(rate, y, dt: float, t: float = 0.0):
    """One Lawson RK5 step of ``y' = rate(t, y)``; ``rate`` may act on tape nodes."""
    c = STAGE_TIMES
    k1 = rate(t, y)
    k2 = rate(t + c[1] * dt, y + ad.scale(dt / 2.0, k1))
    k3 = rate(t + c[2] * dt, y + ad.scale(dt / 16.0, ad.scale(3.0, k1) + k2))
    k4 = rate(t + c[3] * dt, y + ad.scale(dt / 2.0, k3))
    k5 = rate(t + c[4] * dt, y + ad.scale(3.0 * dt / 16.0, ad.scale(2.0, k3) + ad.scale(3.0, k4) - k2))
    k6 = rate(
        t + c[5] * dt,
        y + ad.scale(dt / 7.0, k1 + ad.scale(4.0, k2) + ad.scale(6.0, k3) - ad.scale(12.0, k4) + ad.scale(8.0, k5)),
    )
    incr = ad.scale(7.0, k1) + ad.scale(32.0, k3) + ad.scale(12.0, k4) + ad.scale(32.0, k5) + ad.scale(7.0, k6)
    return y + ad.scale(dt / 90.0, incr)


def rk5_step(eps_v_n, eps, dt: float, params: ViscoParams = DEFAULT_VISCO):
    """Advance the viscous strain one step with the total strain frozen."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    return rk5_update(lambda t, ev: evolution_rate(eps, ev, params), eps_v_n, dt)


def backward_euler_rate(eps_v_next, eps_v_n, dt: float):
    if not dt > 0:
        raise ValueError("time step must be positive")
    return ad.scale(1.0 / dt, eps_v_next - eps_v_n)
