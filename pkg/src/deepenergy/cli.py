"""Command line entry point: ``deepenergy {run,check-gradients,oracle}``.

Exit codes: 0 success, 1 config error, 2 solver failure, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import tomli_w

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .hyperelastic import first_pk_stress, strain_energy
from .network import NetworkParams, forward, spatial_jacobian
from .oracles import OracleError, shear_oracle, sls_oracle, uniaxial_oracle, uniaxial_strain_hyper_oracle
from .quadrature import build_grid
from .solver import (
    IncrementRecord,
    SolverError,
    hyper_loss,
    make_bc,
    make_objective,
    solve,
    visco_loss,
)
from .viscoelastic import cauchy_stress, dissipation, evolution_rate, free_energy

log = logging.getLogger("deepenergy")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
MANIFEST_VERSION = 1
LOSS_HEADER = ["increment", "phase", "iteration", "loss"]
CURVE_HEADER = ["increment", "time", "applied", "dem_stress", "oracle_stress", "relative_error"]
FIELD_HEADER = ["X1", "X2", "X3", "u1", "u2", "u3"]
ORACLE_HEADER = ["increment", "time", "applied", "stress", "energy", "aux"]
GRADIENT_TOL = 1e-4
CONSTITUTIVE_TOL = 1e-6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepenergy", description="Deep energy method solver for homogeneous cube experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "run": "train the network over the load program and write CSV artifacts",
        "check-gradients": "finite-difference checks of every analytic derivative",
        "oracle": "write the semi-analytic reference curve",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="config file, or a bundled name: " + ", ".join(cfgmod.BUNDLED))
        p.add_argument("--out", help="output directory (overrides the config's 'out')")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--grid-n", type=int)
        p.add_argument("--single-increment", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve(args) -> RunConfig:
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.grid_n is not None:
        if args.grid_n < 2:
            raise ConfigError("grid must have n >= 2", None, "--grid-n")
        cfg.grid_n = args.grid_n
        cfg.grid_sizes = None
    if args.single_increment:
        cfg.single_increment = True
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(out: Path, cfg: RunConfig, status: str, increments: int, extra: dict | None = None):
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "package_version": _version(),
        "status": status,
        "increments_completed": increments,
        "seed": cfg.seed,
        "csv": {"loss_history": LOSS_HEADER, "curve": CURVE_HEADER, "field": FIELD_HEADER},
    }
    if extra:
        doc.update(extra)
    doc["config"] = cfg.to_dict()
    (out / "manifest.toml").write_text(tomli_w.dumps(doc))


class ArtifactWriter:
    """Streams per-increment rows so a failed run keeps what it finished."""

    def __init__(self, out: Path, grid_points: np.ndarray):
        self.out = out
        self.points = grid_points
        out.mkdir(parents=True, exist_ok=True)
        for name, header in (("loss_history.csv", LOSS_HEADER), ("curve.csv", CURVE_HEADER)):
            with open(out / name, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(header)
        self.count = 0

    def __call__(self, rec: IncrementRecord, params=None):
        with open(self.out / "loss_history.csv", "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for phase, hist in (("adam", rec.adam_history), ("lbfgs", rec.lbfgs_history)):
                for i, loss in enumerate(hist):
                    w.writerow([rec.index, phase, i, _fmt(loss)])
        with open(self.out / "curve.csv", "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                [rec.index, _fmt(rec.time), _fmt(rec.applied), _fmt(rec.stress), _fmt(rec.oracle_stress), _fmt(rec.relative_error)]
            )
        with open(self.out / f"field_{rec.index}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FIELD_HEADER)
            for X, u in zip(self.points, rec.displacement):
                w.writerow([_fmt(v) for v in (*X, *u)])
        self.count += 1


def run_experiment(cfg: RunConfig, out: Path, grid_n: int | None = None) -> tuple[int, list[IncrementRecord]]:
    n = cfg.grid_n if grid_n is None else grid_n
    resolved = dataclasses.replace(cfg, grid_n=n, grid_sizes=None, out=str(out))
    solver_cfg = resolved.solver_config()
    writer = ArtifactWriter(out, build_grid(n).points)
    write_manifest(out, resolved, "running", 0)
    try:
        records = solve(solver_cfg, callback=writer)
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        write_manifest(out, resolved, "solver-failure", writer.count, {"error": str(exc)})
        return EXIT_SOLVER, []
    summary = {
        "max_relative_error": max(r.relative_error for r in records),
        "final_loss": records[-1].loss,
        "lbfgs_status": [r.status for r in records],
    }
    write_manifest(out, resolved, "ok", len(records), {"summary": summary})
    for r in records:
        print(
            f"increment {r.index}: applied {r.applied:.6g}  stress {r.stress:.6g}  oracle {r.oracle_stress:.6g}  "
            f"rel.err {r.relative_error:.3e}  loss {r.loss:.10g}  lbfgs {r.lbfgs_iterations} [{r.status}]"
        )
    return EXIT_OK, records


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.out or f"runs/{cfg.experiment}")
    if not cfg.grid_sizes:
        code, _ = run_experiment(cfg, out)
        return code
    rows = []
    for n in cfg.grid_sizes:
        print(f"grid n = {n}")
        code, records = run_experiment(cfg, out / f"n{n}", n)
        if code:
            return code
        rows.append((n, records[-1]))
    with open(out / "grid_study.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["grid_n", "final_loss", "dem_stress", "oracle_stress"])
        for n, r in rows:
            w.writerow([n, _fmt(r.loss), _fmt(r.stress), _fmt(r.oracle_stress)])
    losses = [r.loss for _, r in rows]
    spread = (max(losses) - min(losses)) / max(abs(x) for x in losses)
    print(f"grid study: relative spread of converged losses {spread:.3e}")
    return EXIT_OK


def oracle_rows(cfg: RunConfig) -> list[list]:
    prog = cfg.program()
    rows = []
    if cfg.is_visco:
        results = sls_oracle(prog.times, prog.values, cfg.visco_params(), prog.bc_mode, cfg.oracle_substeps)
        for k, r in enumerate(results, start=1):
            rows.append([k, _fmt(r.extra["time"]), _fmt(r.applied), _fmt(r.stress), _fmt(r.energy), ""])
        return rows
    params = cfg.hyper_params()
    for k, v in enumerate(prog.values, start=1):
        if prog.kind == "shear-hyper":
            r, aux = shear_oracle(v, params), None
        elif prog.bc_mode == "uniaxial-stress":
            r = uniaxial_oracle(1.0 + v, params)
            aux = r.aux
        else:
            r, aux = uniaxial_strain_hyper_oracle(1.0 + v, params), None
        rows.append([k, "", _fmt(v), _fmt(r.stress), _fmt(r.energy), _fmt(aux)])
    return rows


def cmd_oracle(cfg: RunConfig) -> int:
    try:
        rows = oracle_rows(cfg)
    except OracleError as exc:
        log.error("oracle failure: %s", exc)
        return EXIT_SOLVER
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "oracle.csv", "w", newline="")
    else:
        fh = sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ORACLE_HEADER)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _rel(a, b) -> float:
    scale = float(np.max(np.abs(b)))
    diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    if scale == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / scale


def _central(f, x, h):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _random_sym(rng, scale=0.05):
    a = rng.normal(scale=scale, size=(3, 3))
    return 0.5 * (a + a.T)


def constitutive_checks(cfg: RunConfig, rng, states: int = 100) -> dict[str, float]:
    hyper, visco = cfg.hyper_params(), cfg.visco_params()
    h = 1e-6
    worst_P = 0.0
    for _ in range(states):
        while True:
            F = np.eye(3) + 0.3 * rng.uniform(-1, 1, size=(3, 3))
            if np.linalg.det(F) > 0.2:
                break
        P = first_pk_stress(F, hyper)
        fd = _central(lambda A: float(strain_energy(A, hyper)), F, h)
        worst_P = max(worst_P, float(np.max(np.abs(P - fd))) / max(1.0, float(np.max(np.abs(P)))))
    worst_s = worst_e = 0.0
    for _ in range(states):
        eps, ev = _random_sym(rng), _random_sym(rng)
        fd = _central(lambda e: float(free_energy(e, ev, visco)), eps, h)
        worst_s = max(worst_s, float(np.max(np.abs(cauchy_stress(eps, ev, visco) - fd))))
        # stationarity of psi(eps, ev) + eta(rate) in the rate: d psi/d ev + d eta/d rate = 0
        rate = evolution_rate(eps, ev, visco)
        d_psi = _central(lambda v: float(free_energy(eps, v, visco)), ev, h)
        d_eta = _central(lambda r: float(dissipation(r, visco)), rate, h)
        worst_e = max(worst_e, float(np.max(np.abs(d_psi + d_eta))))
    return {"stress_hyper": worst_P, "stress_visco": worst_s, "evolution_stationarity": worst_e}


def check_gradients(cfg: RunConfig, params: NetworkParams | None = None, jacobian_fn=spatial_jacobian) -> tuple[int, dict]:
    """Finite-difference verification; returns ``(exit code, report)``.

    The network is always evaluated with tanh so that every derivative is
    classical.  ``jacobian_fn`` is injectable so tests can corrupt it.
    """
    rng = np.random.default_rng(cfg.seed)
    layers_sizes = tuple(cfg.layers)
    if params is None:
        params = NetworkParams.glorot(layers_sizes, cfg.seed)
    layers = params.layers()
    notes = []
    report: dict = {}

    X = rng.uniform(0.0, 1.0, size=(20, 3))
    J = jacobian_fn(X, layers, "tanh")
    fd = np.zeros_like(J)
    h = 1e-6
    for a in range(3):
        dX = np.zeros(3)
        dX[a] = h
        fd[:, :, a] = (forward(X + dX, layers, "tanh") - forward(X - dX, layers, "tanh")) / (2 * h)
    report["spatial_jacobian"] = _rel(J, fd)
    if not np.any(fd) and not np.any(J):
        notes.append("spatial Jacobian identically zero (degenerate network)")

    prog = cfg.program()
    grid = build_grid(cfg.grid_n)
    bc = make_bc(prog, prog.values[0], [(t.face, t.vector) for t in cfg.tractions])
    if prog.is_visco:
        eps_v = np.zeros((len(grid), 3, 3))
        dt = prog.times[0]

        def build(L):
            return visco_loss(L, grid, bc, cfg.visco_params(), eps_v, dt, "tanh", cfg.differentiate_eps_v)[0]

    else:

        def build(L):
            return hyper_loss(L, grid, bc, cfg.hyper_params(), "tanh")

    objective = make_objective(params, build)
    f0, g = objective(params.flat)
    if not math.isfinite(f0):
        report["parameter_gradient"] = math.inf
        notes.append("initial network gives an inadmissible deformation; pick another seed")
    else:
        idx = rng.choice(params.flat.size, size=min(10, params.flat.size), replace=False)
        fd_g = np.empty(idx.size)
        for j, i in enumerate(idx):
            e = np.zeros_like(params.flat)
            e[i] = h
            fd_g[j] = (objective(params.flat + e)[0] - objective(params.flat - e)[0]) / (2 * h)
        report["parameter_gradient"] = _rel(g[idx], fd_g)
        if not np.any(fd_g) and not np.any(g[idx]):
            notes.append("sampled parameter gradient identically zero (degenerate network)")

    report.update(constitutive_checks(cfg, rng))
    limits = {
        "spatial_jacobian": GRADIENT_TOL,
        "parameter_gradient": GRADIENT_TOL,
        "stress_hyper": CONSTITUTIVE_TOL,
        "stress_visco": CONSTITUTIVE_TOL,
        "evolution_stationarity": CONSTITUTIVE_TOL,
    }
    failed = [k for k, tol in limits.items() if not report[k] <= tol]
    for k, tol in limits.items():
        print(f"{k:24s} {report[k]:.3e}  (limit {tol:.0e})  {'ok' if k not in failed else 'FAIL'}")
    for note in notes:
        print(f"note: {note}")
    report["notes"] = notes
    return (EXIT_VERIFY if failed else EXIT_OK), report


def cmd_check_gradients(cfg: RunConfig) -> int:
    code, report = check_gradients(cfg)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "check_gradients.toml").write_text(tomli_w.dumps({"status": "ok" if code == 0 else "fail", **report}))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        return cmd_run(cfg)
    if args.command == "oracle":
        return cmd_oracle(cfg)
    return cmd_check_gradients(cfg)


if __name__ == "__main__":
    sys.exit(main())
