"""Deep energy method: loss assembly and incremental drivers.

The displacement network is trained per load (or time) increment to
minimize the potential energy, hyperelastic, or the incremental potential,
viscoelastic.  Each increment starts from the previous increment's
parameters.  Integrals use the trapezoidal lattice of :mod:`quadrature`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .hyperelastic import DEFAULT_HYPER, HyperParams, InadmissibleDeformation, first_pk_stress, strain_energy
from .integrator import rk5_step
from .network import (
    BCSpec,
    NetworkParams,
    DEFAULT_LAYERS,
    apply_ansatz,
    forward,
    forward_with_jacobian,
    simple_shear_bc,
    uniaxial_strain_bc,
    uniaxial_stress_bc,
)
from .optim import OptimizerAbort, OptimizerConfig, adam_run, lbfgs_run
from .oracles import shear_oracle, sls_oracle, uniaxial_oracle, uniaxial_strain_hyper_oracle
from .quadrature import QuadratureGrid, build_grid
from .viscoelastic import DEFAULT_VISCO, ViscoParams, cauchy_stress, dissipation, free_energy, sym

log = logging.getLogger(__name__)

HYPER_KINDS = ("uniaxial-hyper", "shear-hyper")
VISCO_KINDS = ("visco-load-unload", "visco-relaxation", "visco-uniaxial-strain")
EXPERIMENT_KINDS = HYPER_KINDS + VISCO_KINDS
BC_MODES = ("uniaxial-stress", "uniaxial-strain")


class SolverError(RuntimeError):
    def __init__(self, increment: int, message: str):
        super().__init__(f"increment {increment}: {message}")
        self.increment = increment


@dataclass
class LoadProgram:
    """Increment schedule of an experiment.

    ``values`` are the applied displacement ``d`` (``u1 = d`` at ``X1 = 1``),
    the shear ``g`` or the strain ``eps_11``; ``times`` (viscoelastic only)
    are the increment end times in seconds.
    """

    kind: str
    values: list[float]
    times: list[float] | None = None
    bc_mode: str = "uniaxial-stress"

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.bc_mode not in BC_MODES:
            raise ValueError(f"unknown bc_mode {self.bc_mode!r}")
        self.values = [float(v) for v in self.values]
        if not self.values:
            raise ValueError("load schedule is empty")
        if self.is_visco:
            if self.times is None or len(self.times) != len(self.values):
                raise ValueError("viscoelastic schedules need one time per value")
            self.times = [float(t) for t in self.times]
            if not all(b > a for a, b in zip([0.0] + self.times[:-1], self.times)):
                raise ValueError("schedule times must be strictly increasing and positive")

    @property
    def is_visco(self) -> bool:
        return self.kind in VISCO_KINDS


def uniaxial_program(final: float = 0.5, increments: int = 4, bc_mode: str = "uniaxial-stress") -> LoadProgram:
    return LoadProgram("uniaxial-hyper", list(final * np.arange(1, increments + 1) / increments), bc_mode=bc_mode)


def shear_program(final: float = 0.5, increments: int = 4) -> LoadProgram:
    return LoadProgram("shear-hyper", list(final * np.arange(1, increments + 1) / increments))


def load_unload_program(peak: float = 0.03, ramp: float = 1.0, dt: float = 0.05, bc_mode: str = "uniaxial-strain") -> LoadProgram:
    n = int(round(ramp / dt))
    t = dt * np.arange(1, 2 * n + 1)
    e = np.where(t <= ramp + 1e-12, peak * t / ramp, peak * (2.0 * ramp - t) / ramp)
    return LoadProgram("visco-load-unload", list(e), list(t), bc_mode)


def relaxation_program(
    strain: float = 0.03, rise: float = 1e-3, hold: float = 3.0, dt: float = 0.1, bc_mode: str = "uniaxial-strain"
) -> LoadProgram:
    """Near-instantaneous rise over ``rise`` seconds, then a hold sampled every ``dt``."""
    n = int(round(hold / dt))
    t = [rise] + list(rise + dt * np.arange(1, n + 1))
    return LoadProgram("visco-relaxation", [strain] * len(t), t, bc_mode)


@dataclass
class SolverConfig:
    program: LoadProgram
    grid_n: int = 25
    layers: tuple[int, ...] = DEFAULT_LAYERS
    activation: str = "relu"
    hyper: HyperParams = DEFAULT_HYPER
    visco: ViscoParams = DEFAULT_VISCO
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    single_increment: bool = False
    differentiate_eps_v: bool = True
    tractions: list[tuple[str, tuple[float, float, float]]] = field(default_factory=list)
    oracle_substeps: int = 40


@dataclass
class IncrementRecord:
    index: int
    applied: float
    time: float | None
    loss: float
    adam_iterations: int
    lbfgs_iterations: int
    status: str
    stress: float
    oracle_stress: float
    oracle_energy: float
    homogeneity: float
    seconds: float
    adam_history: list[float] = field(default_factory=list, repr=False)
    lbfgs_history: list[float] = field(default_factory=list, repr=False)
    displacement: np.ndarray | None = field(default=None, repr=False)

    @property
    def relative_error(self) -> float:
        if self.oracle_stress == 0.0:
            return abs(self.stress)
        return abs(self.stress - self.oracle_stress) / abs(self.oracle_stress)


def make_bc(program: LoadProgram, value: float, tractions=()) -> BCSpec:
    if program.kind == "shear-hyper":
        bc = simple_shear_bc(value)
    elif program.kind == "uniaxial-hyper":
        bc = uniaxial_stress_bc(value) if program.bc_mode == "uniaxial-stress" else uniaxial_strain_bc(value)
    else:
        bc = uniaxial_stress_bc(value) if program.bc_mode == "uniaxial-stress" else uniaxial_strain_bc(value)
    bc.tractions = [(f, np.asarray(t, dtype=float)) for f, t in tractions]
    return bc


def displacement_field(layers, X, bc: BCSpec, activation: str, jacobian: bool = True):
    y, grad_y = forward_with_jacobian(X, layers, activation, jacobian=jacobian)
    return apply_ansatz(X, y, grad_y, bc)


def traction_work(layers, grid: QuadratureGrid, bc: BCSpec, activation: str):
    """``sum over faces of int u . t dGamma``; zero when no tractions are set."""
    work = 0.0
    for face, t in bc.tractions:
        pts, w = grid.face(face)
        u, _ = apply_ansatz(pts, forward(pts, layers, activation), None, bc)
        work = work + ad.dot(ad.dot(u, t), w)
    return work


def hyper_loss(layers, grid: QuadratureGrid, bc: BCSpec, material: HyperParams = DEFAULT_HYPER, activation: str = "relu"):
    """Potential energy: internal energy minus traction work (no body force)."""
    _, grad_u = displacement_field(layers, grid.points, bc, activation)
    F = grad_u + np.eye(3)
    psi = strain_energy(F, material)
    return grid.integrate(psi) - traction_work(layers, grid, bc, activation)


def visco_loss(
    layers,
    grid: QuadratureGrid,
    bc: BCSpec,
    material: ViscoParams,
    eps_v_n: np.ndarray,
    dt: float,
    activation: str = "relu",
    differentiate_eps_v: bool = True,
):
    """Incremental potential of one time step.

    Returns ``(loss, eps_v_next)`` where ``eps_v_next`` is the RK5-updated
    viscous strain per grid point (a plain array).
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    _, grad_u = displacement_field(layers, grid.points, bc, activation)
    eps = sym(grad_u)
    eps_v = rk5_step(eps_v_n, eps if differentiate_eps_v else ad.value(eps), dt, material)
    rate = ad.scale(1.0 / dt, eps_v - eps_v_n)
    density = free_energy(eps, eps_v, material) + ad.scale(dt, dissipation(rate, material))
    loss = grid.integrate(density) - traction_work(layers, grid, bc, activation)
    return loss, np.array(ad.value(eps_v))


def make_objective(params: NetworkParams, build: Callable) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Wrap ``build(layers) -> loss node`` as ``flat -> (loss, grad)``.

    Inadmissible deformations map to ``(inf, nan)``.
    """

    def objective(flat):
        tape = ad.Tape()
        layers = [(tape.variable(W), tape.variable(b)) for W, b in params.layers(flat)]
        try:
            loss = build(layers)
        except InadmissibleDeformation:
            return math.inf, np.full(flat.shape, np.nan)
        leaves = [p for pair in layers for p in pair]
        grads = tape.backward(loss, leaves)
        return float(loss.value), np.concatenate([g.ravel() for g in grads])

    return objective


def homogeneity(field: np.ndarray, grid: QuadratureGrid) -> float:
    """RMS deviation of a tensor field over strictly interior points,
    relative to the norm of its mean."""
    X = grid.points
    interior = np.all((X > 1e-12) & (X < 1.0 - 1e-12), axis=1)
    if not np.any(interior):
        interior = np.ones(len(X), dtype=bool)
    G = field[interior]
    mean = G.mean(axis=0)
    scale = np.linalg.norm(mean)
    spread = math.sqrt(np.mean(np.sum((G - mean) ** 2, axis=(1, 2))))
    return spread / scale if scale > 0 else spread


def _train(objective, x, config: OptimizerConfig, index: int):
    try:
        adam = adam_run(objective, x, config.adam)
        lbfgs = lbfgs_run(objective, adam.x, config.lbfgs)
    except OptimizerAbort as exc:
        raise SolverError(index, str(exc)) from exc
    return adam, lbfgs


def _hyper_oracle(program: LoadProgram, value: float, material: HyperParams):
    if program.kind == "shear-hyper":
        return shear_oracle(value, material)
    if program.bc_mode == "uniaxial-stress":
        return uniaxial_oracle(1.0 + value, material)
    return uniaxial_strain_hyper_oracle(1.0 + value, material)


def solve_hyperelastic(config: SolverConfig, callback=None) -> list[IncrementRecord]:
    program = config.program
    if program.kind not in HYPER_KINDS:
        raise ValueError(f"{program.kind} is not a hyperelastic experiment")
    grid = build_grid(config.grid_n)
    params = NetworkParams.glorot(config.layers, config.seed)
    values = program.values[-1:] if config.single_increment else program.values
    component = (0, 1) if program.kind == "shear-hyper" else (0, 0)
    records = []
    for k, value in enumerate(values, start=1):
        t0 = time.perf_counter()
        bc = make_bc(program, value, config.tractions)
        objective = make_objective(params, lambda L: hyper_loss(L, grid, bc, config.hyper, config.activation))
        adam, lbfgs = _train(objective, params.flat, config.optimizer, k)
        params = NetworkParams(config.layers, lbfgs.x)
        u, grad_u = displacement_field(params.layers(), grid.points, bc, config.activation)
        P = first_pk_stress(grad_u + np.eye(3), config.hyper)
        probe = grid.integrate(P[:, component[0], component[1]])
        oracle = _hyper_oracle(program, value, config.hyper)
        rec = IncrementRecord(
            index=k,
            applied=value,
            time=None,
            loss=lbfgs.loss,
            adam_iterations=adam.iterations,
            lbfgs_iterations=lbfgs.iterations,
            status=lbfgs.status,
            stress=probe,
            oracle_stress=oracle.stress,
            oracle_energy=oracle.energy,
            homogeneity=homogeneity(grad_u + np.eye(3), grid),
            seconds=time.perf_counter() - t0,
            adam_history=adam.history,
            lbfgs_history=lbfgs.history,
            displacement=u,
        )
        log.info(
            "increment %d: applied %.4g loss %.10e (oracle %.10e) stress %.6g (oracle %.6g) lbfgs %d [%s] %.1fs",
            k, value, rec.loss, rec.oracle_energy, rec.stress, rec.oracle_stress, rec.lbfgs_iterations, rec.status, rec.seconds,
        )
        records.append(rec)
        if callback is not None:
            callback(rec, params)
    return records


def solve_viscoelastic(config: SolverConfig, callback=None) -> list[IncrementRecord]:
    program = config.program
    if not program.is_visco:
        raise ValueError(f"{program.kind} is not a viscoelastic experiment")
    grid = build_grid(config.grid_n)
    params = NetworkParams.glorot(config.layers, config.seed)
    oracle = sls_oracle(program.times, program.values, config.visco, program.bc_mode, config.oracle_substeps)
    eps_v = np.zeros((len(grid), 3, 3))
    t_prev = 0.0
    records = []
    for k, (t, value) in enumerate(zip(program.times, program.values), start=1):
        t0 = time.perf_counter()
        dt = t - t_prev
        bc = make_bc(program, value, config.tractions)
        eps_v_n = eps_v

        def build(L):
            loss, _ = visco_loss(L, grid, bc, config.visco, eps_v_n, dt, config.activation, config.differentiate_eps_v)
            return loss

        objective = make_objective(params, build)
        adam, lbfgs = _train(objective, params.flat, config.optimizer, k)
        params = NetworkParams(config.layers, lbfgs.x)
        layers = params.layers()
        _, eps_v = visco_loss(layers, grid, bc, config.visco, eps_v_n, dt, config.activation)
        u, grad_u = displacement_field(layers, grid.points, bc, config.activation)
        eps = sym(grad_u)
        sigma = cauchy_stress(eps, eps_v, config.visco)
        rec = IncrementRecord(
            index=k,
            applied=value,
            time=t,
            loss=lbfgs.loss,
            adam_iterations=adam.iterations,
            lbfgs_iterations=lbfgs.iterations,
            status=lbfgs.status,
            stress=grid.integrate(sigma[:, 0, 0]),
            oracle_stress=oracle[k - 1].stress,
            oracle_energy=oracle[k - 1].energy,
            homogeneity=homogeneity(eps, grid),
            seconds=time.perf_counter() - t0,
            adam_history=adam.history,
            lbfgs_history=lbfgs.history,
            displacement=u,
        )
        log.info(
            "step %d: t %.3f strain %.4g stress %.6g (oracle %.6g) lbfgs %d [%s] %.1fs",
            k, t, value, rec.stress, rec.oracle_stress, rec.lbfgs_iterations, rec.status, rec.seconds,
        )
        records.append(rec)
        if callback is not None:
            callback(rec, params)
        t_prev = t
    return records


def solve(config: SolverConfig, callback=None) -> list[IncrementRecord]:
    if config.program.is_visco:
        return solve_viscoelastic(config, callback)
    return solve_hyperelastic(config, callback)
