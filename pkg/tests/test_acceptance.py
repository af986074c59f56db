"""End-to-end acceptance checks.

Each test prints one ``criterion N: PASS|FAIL <detail>`` line; the lines are
also collected into the terminal summary.  Expensive runs are cached for the
session, so the whole module takes roughly fifteen minutes on one core.
"""

import dataclasses
import functools
import math
import time

import numpy as np
import pytest

from deepenergy.cli import check_gradients
from deepenergy.config import load
from deepenergy.integrator import rk5_update
from deepenergy.quadrature import build_grid
from deepenergy.solver import solve

pytestmark = pytest.mark.acceptance

SEEDS = (0, 1, 2, 3, 4)
HYPER_N = 11
VISCO_N = 9


def report(criteria, number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    criteria[number] = line
    return ok


@functools.lru_cache(maxsize=None)
def run(name, seed=0, grid_n=None, single=False):
    cfg = load(name)
    cfg = dataclasses.replace(cfg, seed=seed, single_increment=single)
    t0 = time.perf_counter()
    records = solve(cfg.solver_config(grid_n))
    return records, time.perf_counter() - t0


def uniaxial(seed=0, grid_n=HYPER_N, single=False):
    return run("uniaxial", seed, grid_n, single)


def test_criterion_1_uniaxial(criteria):
    records, seconds = uniaxial()
    worst = max(r.relative_error for r in records)
    ok = worst <= 0.05 and len(records) == 4 and seconds <= 15 * 60
    report(criteria, 1, ok, f"max rel. error of P11 {worst:.2%} (limit 5%), runtime {seconds:.0f} s (limit 900 s)")
    assert ok


def test_criterion_2_shear(criteria):
    records, _ = run("shear", 0, HYPER_N)
    worst = max(r.relative_error for r in records)
    last = records[-1]
    ok = worst <= 0.05 and last.applied == 0.5 and abs(last.oracle_stress - 7.16) <= 0.01
    report(criteria, 2, ok, f"max rel. error of P12 {worst:.2%} (limit 5%), P12(0.5) = {last.stress:.4f} vs {last.oracle_stress:.4f} kPa")
    assert ok


def test_criterion_3_path_independence(criteria):
    incremental, _ = uniaxial()
    single, _ = uniaxial(single=True)
    a, b = incremental[-1].stress, single[-1].stress
    rel = abs(a - b) / abs(a)
    ok = len(single) == 1 and single[0].applied == 0.5 and rel <= 0.01
    report(criteria, 3, ok, f"final P11 incremental {a:.4f}, single increment {b:.4f}, difference {rel:.2%} (limit 1%)")
    assert ok


def test_criterion_4_load_unload(criteria):
    records, seconds = run("visco-load-unload", 0, VISCO_N)
    peak = max(abs(r.oracle_stress) for r in records)
    worst = max(abs(r.stress - r.oracle_stress) for r in records)
    ok = len(records) == 40 and worst <= 0.05 * peak and seconds <= 30 * 60
    report(criteria, 4, ok, f"max stress error {worst / peak:.2%} of peak {peak:.4f} MPa (limit 5%), runtime {seconds:.0f} s (limit 1800 s)")
    assert ok


def test_criterion_5_relaxation(criteria):
    records, _ = run("visco-relaxation", 0, VISCO_N)
    stress = [r.stress for r in records]
    monotone = all(b < a for a, b in zip(stress, stress[1:]))
    terminal = abs(stress[-1] - 0.10) / 0.10
    instant = abs(stress[0] - 0.30) / 0.30
    ok = monotone and terminal <= 0.02 and instant <= 0.02
    report(
        criteria, 5, ok,
        f"monotone {monotone}, instantaneous {stress[0]:.4f} ({instant:.2%} from 0.30), terminal {stress[-1]:.4f} ({terminal:.2%} from 0.10)",
    )
    assert ok


def test_criterion_6_gradients(criteria):
    worst = {}
    for name in ("uniaxial", "visco-load-unload"):
        cfg = dataclasses.replace(load(name), grid_n=HYPER_N)
        code, rep = check_gradients(cfg)
        assert code == 0
        for k, v in rep.items():
            if k != "notes":
                worst[k] = max(worst.get(k, 0.0), v)
    net = max(worst["spatial_jacobian"], worst["parameter_gradient"])
    const = max(worst["stress_hyper"], worst["stress_visco"], worst["evolution_stationarity"])
    ok = net <= 1e-5 and const <= 1e-6
    report(criteria, 6, ok, f"network FD error {net:.1e} (limit 1e-5), constitutive FD residual {const:.1e} (limit 1e-6)")
    assert ok


def test_criterion_7_orders(criteria):
    tau = 0.5
    dts = (0.2, 0.1, 0.05, 0.025)
    errs = []
    for dt in dts:
        y = 0.0
        for _ in range(int(round(1.0 / dt))):
            y = rk5_update(lambda t, v: -(v - 1.0) / tau, y, dt)
        errs.append(abs(y - (1.0 - math.exp(-1.0 / tau))))
    rk_slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])

    exact = 0.0
    for n in (2, 5, 11):
        g = build_grid(n)
        X = g.points
        exact = max(exact, abs(g.integrate(1 + 2 * X[:, 0] - 3 * X[:, 1] * X[:, 2] + X[:, 0] * X[:, 1] * X[:, 2]) - 1.375))
    ns = (5, 9, 17, 33)
    q_errs = [abs(build_grid(n).integrate(np.exp(build_grid(n).points.sum(axis=1))) - (math.e - 1) ** 3) for n in ns]
    q_slope = float(np.polyfit(np.log([1 / (n - 1) for n in ns]), np.log(q_errs), 1)[0])

    ok = 4.7 <= rk_slope <= 5.3 and exact <= 1e-13 and abs(q_slope - 2.0) <= 0.1
    report(criteria, 7, ok, f"RK5 slope {rk_slope:.3f} (range 4.7 to 5.3), multilinear error {exact:.1e}, quadrature slope {q_slope:.3f}")
    assert ok


def test_criterion_8_energy_and_homogeneity(criteria):
    records = uniaxial()[0] + run("shear", 0, HYPER_N)[0]
    below = min(r.loss - r.oracle_energy for r in records)
    above = max(r.loss / r.oracle_energy for r in records)
    spread = max(r.homogeneity for r in records)
    lower_ok = below >= -1e-8
    upper_ok = above <= 1.01
    homog_ok = spread <= 0.01
    visco = [r.homogeneity for r in run("visco-relaxation", 0, VISCO_N)[0]]
    ok = lower_ok and upper_ok and homog_ok
    report(
        criteria, 8, ok,
        f"min(loss - oracle) {below:.2e} (limit -1e-8), max loss/oracle {above:.4f} (limit 1.01), "
        f"hyperelastic spread of F {spread:.2%} (limit 1%), viscoelastic spread of strain {max(visco):.2%} (not gated)",
    )
    assert upper_ok and homog_ok, "attainable part of the bound failed"
    assert lower_ok, "loss below the oracle energy: the lattice rule admits energies under the continuum minimum"


def test_criterion_9_grid_insensitivity(criteria):
    coarse = uniaxial(grid_n=11)[0][-1].loss
    fine = uniaxial(grid_n=15)[0][-1].loss
    rel = abs(coarse - fine) / abs(fine)
    ok = rel <= 0.02
    report(criteria, 9, ok, f"final loss n=11 {coarse:.6f}, n=15 {fine:.6f}, difference {rel:.2%} (limit 2%)")
    assert ok


def test_criterion_10_warm_start(criteria):
    counts = []
    wins = 0
    for seed in SEEDS:
        its = [r.lbfgs_iterations for r in uniaxial(seed)[0]]
        counts.append(its)
        wins += float(np.median(its[1:])) < its[0]
    ok = wins >= 4
    detail = "; ".join(f"seed {s}: {c}" for s, c in zip(SEEDS, counts))
    report(criteria, 10, ok, f"{wins} of 5 seeds faster after increment 1 (need 4), L-BFGS iterations {detail}")
    assert ok
