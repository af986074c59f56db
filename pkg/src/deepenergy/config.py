"""Run configuration: TOML in, TOML out, unknown keys rejected.

A config file looks like::

    experiment = "uniaxial-hyper"
    seed = 0
    grid_n = 11

    [network]
    layers = [3, 40, 40, 40, 40, 40, 40, 3]
    activation = "relu"

    [material]
    alpha = [1.0, -2.47]
    mu = [13.5, 1.08]
    lam = 146.2

    [loading]
    values = [0.125, 0.25, 0.375, 0.5]
    bc_mode = "uniaxial-stress"

    [optimizer.adam]
    epochs = 300

Every key is optional except ``experiment``; omitted keys take the
experiment's defaults.  Errors carry the line of the offending key.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .hyperelastic import HyperParams
from .network import ACTIVATIONS, FACES, DEFAULT_LAYERS
from .optim import AdamConfig, LBFGSConfig, OptimizerConfig
from .solver import (
    BC_MODES,
    EXPERIMENT_KINDS,
    HYPER_KINDS,
    LoadProgram,
    SolverConfig,
    load_unload_program,
    relaxation_program,
    shear_program,
    uniaxial_program,
)
from .viscoelastic import ViscoParams

FORMAT_VERSION = 1
BUNDLED = ("uniaxial", "shear", "visco-load-unload", "visco-relaxation", "grid-study")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = source or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.message = message


@dataclass
class Traction:
    face: str
    vector: tuple[float, float, float]


@dataclass
class RunConfig:
    experiment: str
    seed: int = 0
    grid_n: int = 25
    out: str | None = None
    single_increment: bool = False
    differentiate_eps_v: bool = True
    deterministic_reduction: bool = True
    grid_sizes: list[int] | None = None
    layers: list[int] = field(default_factory=lambda: list(DEFAULT_LAYERS))
    activation: str = "relu"
    material: dict[str, Any] = field(default_factory=dict)
    values: list[float] = field(default_factory=list)
    times: list[float] | None = None
    bc_mode: str = "uniaxial-stress"
    tractions: list[Traction] = field(default_factory=list)
    oracle_substeps: int = 40
    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LBFGSConfig = field(default_factory=LBFGSConfig)

    @property
    def is_visco(self) -> bool:
        return self.experiment not in HYPER_KINDS

    def hyper_params(self) -> HyperParams:
        return HyperParams(**self.material) if not self.is_visco else HyperParams()

    def visco_params(self) -> ViscoParams:
        return ViscoParams(**self.material) if self.is_visco else ViscoParams()

    def program(self) -> LoadProgram:
        return LoadProgram(self.experiment, list(self.values), None if self.times is None else list(self.times), self.bc_mode)

    def solver_config(self, grid_n: int | None = None) -> SolverConfig:
        return SolverConfig(
            program=self.program(),
            grid_n=self.grid_n if grid_n is None else grid_n,
            layers=tuple(self.layers),
            activation=self.activation,
            hyper=self.hyper_params(),
            visco=self.visco_params(),
            optimizer=OptimizerConfig(dataclasses.replace(self.adam), dataclasses.replace(self.lbfgs)),
            seed=self.seed,
            single_increment=self.single_increment,
            differentiate_eps_v=self.differentiate_eps_v,
            tractions=[(t.face, t.vector) for t in self.tractions],
            oracle_substeps=self.oracle_substeps,
        )

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "experiment": self.experiment,
            "seed": self.seed,
            "grid_n": self.grid_n,
            "single_increment": self.single_increment,
            "differentiate_eps_v": self.differentiate_eps_v,
            "deterministic_reduction": self.deterministic_reduction,
        }
        if self.out is not None:
            d["out"] = self.out
        if self.grid_sizes is not None:
            d["grid_sizes"] = list(self.grid_sizes)
        d["network"] = {"layers": list(self.layers), "activation": self.activation}
        d["material"] = {k: list(v) if isinstance(v, (list, tuple)) else v for k, v in self.material.items()}
        loading: dict[str, Any] = {"values": list(self.values), "bc_mode": self.bc_mode, "oracle_substeps": self.oracle_substeps}
        if self.times is not None:
            loading["times"] = list(self.times)
        if self.tractions:
            loading["traction"] = [{"face": t.face, "vector": list(t.vector)} for t in self.tractions]
        d["loading"] = loading
        d["optimizer"] = {"adam": dataclasses.asdict(self.adam), "lbfgs": dataclasses.asdict(self.lbfgs)}
        return d

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


# key -> (type, ...).  A type of list[...] is written as a tuple ("list", elem).
_TOP = {
    "format_version": int,
    "experiment": str,
    "seed": int,
    "grid_n": int,
    "out": str,
    "single_increment": bool,
    "differentiate_eps_v": bool,
    "deterministic_reduction": bool,
    "grid_sizes": ("list", int),
}
_NETWORK = {"layers": ("list", int), "activation": str}
_HYPER_MATERIAL = {"alpha": ("list", float), "mu": ("list", float), "lam": float}
_VISCO_MATERIAL = {f.name: float for f in dataclasses.fields(ViscoParams)}
_LOADING = {"values": ("list", float), "times": ("list", float), "bc_mode": str, "oracle_substeps": int, "traction": list}
_TRACTION = {"face": str, "vector": ("list", float)}
_ADAM = {f.name: (int if f.name == "epochs" else float) for f in dataclasses.fields(AdamConfig)}
_LBFGS = {f.name: (int if f.type in ("int", int) else bool if f.type in ("bool", bool) else float) for f in dataclasses.fields(LBFGSConfig)}


class _Locator:
    """Maps dotted key paths to source lines by a light scan of the text."""

    _header = re.compile(r"^\s*(\[\[?)\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-]+|\"[^\"]*\")\s*=")

    def __init__(self, text: str):
        self.lines: dict[str, int] = {}
        table = ""
        counts: dict[str, int] = {}
        for no, raw in enumerate(text.splitlines(), start=1):
            m = self._header.match(raw)
            if m:
                name = m.group(2).strip()
                if m.group(1) == "[[":
                    idx = counts.get(name, 0)
                    counts[name] = idx + 1
                    table = f"{name}[{idx}]"
                else:
                    table = name
                self.lines.setdefault(table, no)
                continue
            m = self._key.match(raw)
            if m:
                key = m.group(1).strip('"')
                self.lines.setdefault(f"{table}.{key}" if table else key, no)

    def line(self, path: str) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            if path.endswith("]"):
                path = path[: path.rindex("[")]
            else:
                path = path.rsplit(".", 1)[0] if "." in path else ""
        return None


def _type_name(t) -> str:
    if isinstance(t, tuple):
        return f"list of {t[1].__name__}"
    return t.__name__


def _check_value(value, t, path: str, err):
    if isinstance(t, tuple):
        if not isinstance(value, list):
            err(path, f"'{path}' must be a {_type_name(t)}, got {type(value).__name__}")
        return [_check_value(v, t[1], f"{path}[{i}]", err) for i, v in enumerate(value)]
    if t is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            err(path, f"'{path}' must be a number, got {type(value).__name__}")
        return float(value)
    if t is int:
        if isinstance(value, bool) or not isinstance(value, int):
            err(path, f"'{path}' must be an integer, got {type(value).__name__}")
        return value
    if not isinstance(value, t):
        err(path, f"'{path}' must be a {t.__name__}, got {type(value).__name__}")
    return value


def _section(data: dict, schema: dict, prefix: str, err) -> dict:
    if not isinstance(data, dict):
        err(prefix, f"'{prefix}' must be a table")
    out = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            where = f"[{prefix}]" if prefix else "top level"
            err(path, f"unknown key '{key}' at {where}; expected one of {sorted(schema)}")
        out[key] = _check_value(value, schema[key], path, err)
    return out


def experiment_defaults(kind: str) -> dict[str, Any]:
    """Schedule and boundary mode used when the config omits them."""
    if kind == "uniaxial-hyper":
        p = uniaxial_program()
    elif kind == "shear-hyper":
        p = shear_program()
    elif kind == "visco-relaxation":
        p = relaxation_program()
    else:
        p = load_unload_program()
    return {"values": p.values, "times": p.times, "bc_mode": p.bc_mode}


def from_dict(data: dict, text: str | None = None, source: str | None = None) -> RunConfig:
    locator = _Locator(text) if text is not None else None

    def err(path, message):
        raise ConfigError(message, locator.line(path) if locator else None, source)

    data = dict(data)
    nested = {k: data.pop(k) for k in ("network", "material", "loading", "optimizer") if k in data}
    top = _section(data, _TOP, "", err)
    version = top.pop("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        err("format_version", f"unsupported format_version {version}; this build reads {FORMAT_VERSION}")
    if "experiment" not in top:
        raise ConfigError("missing required key 'experiment'", None, source)
    kind = top.pop("experiment")
    if kind not in EXPERIMENT_KINDS:
        err("experiment", f"unknown experiment {kind!r}; expected one of {list(EXPERIMENT_KINDS)}")
    if "seed" in top and not 0 <= top["seed"] < 2**64:
        err("seed", "seed must be an unsigned 64-bit integer")
    if "grid_n" in top and top["grid_n"] < 2:
        err("grid_n", "grid must have n >= 2")
    for n in top.get("grid_sizes") or []:
        if n < 2:
            err("grid_sizes", "grid must have n >= 2")

    cfg = RunConfig(experiment=kind, **top)
    network = _section(nested.get("network", {}), _NETWORK, "network", err)
    if "layers" in network:
        layers = network["layers"]
        if len(layers) < 2 or layers[0] != 3 or layers[-1] != 3 or min(layers) < 1:
            err("network.layers", "layers must start and end with 3 and have positive widths")
        cfg.layers = layers
    if "activation" in network:
        if network["activation"] not in ACTIVATIONS:
            err("network.activation", f"activation must be one of {list(ACTIVATIONS)}")
        cfg.activation = network["activation"]

    schema = _HYPER_MATERIAL if kind in HYPER_KINDS else _VISCO_MATERIAL
    cfg.material = _section(nested.get("material", {}), schema, "material", err)
    try:
        cfg.hyper_params() if kind in HYPER_KINDS else cfg.visco_params()
    except ValueError as exc:
        err("material", f"invalid material: {exc}")

    loading = _section(nested.get("loading", {}), _LOADING, "loading", err)
    defaults = experiment_defaults(kind)
    cfg.values = loading.get("values", defaults["values"])
    cfg.times = loading.get("times", defaults["times"] if "values" not in loading else None)
    cfg.bc_mode = loading.get("bc_mode", defaults["bc_mode"])
    if cfg.bc_mode not in BC_MODES:
        err("loading.bc_mode", f"bc_mode must be one of {list(BC_MODES)}")
    cfg.oracle_substeps = loading.get("oracle_substeps", cfg.oracle_substeps)
    for i, entry in enumerate(loading.get("traction", [])):
        t = _section(entry, _TRACTION, f"loading.traction[{i}]", err)
        if t.get("face") not in FACES:
            err(f"loading.traction[{i}].face", f"traction face must be one of {list(FACES)}")
        if len(t.get("vector", [])) != 3:
            err(f"loading.traction[{i}].vector", "traction vector must have 3 components")
        cfg.tractions.append(Traction(t["face"], tuple(t["vector"])))
    try:
        cfg.program()
    except ValueError as exc:
        err("loading", f"invalid load schedule: {exc}")

    optimizer = nested.get("optimizer", {})
    _section(optimizer, {"adam": dict, "lbfgs": dict}, "optimizer", err)
    adam = _section(optimizer.get("adam", {}), _ADAM, "optimizer.adam", err)
    lbfgs = _section(optimizer.get("lbfgs", {}), _LBFGS, "optimizer.lbfgs", err)
    try:
        cfg.adam = AdamConfig(**adam)
    except ValueError as exc:
        err("optimizer.adam", str(exc))
    try:
        cfg.lbfgs = LBFGSConfig(**lbfgs)
    except ValueError as exc:
        err("optimizer.lbfgs", str(exc))
    return cfg


def loads(text: str, source: str | None = None) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", int(m.group(1)) if m else None, source) from None
    if "config" in data and "manifest_version" in data:
        # a run manifest: rerun from its embedded config
        return from_dict(data["config"], None, source)
    return from_dict(data, text, source)


def bundled_path(name: str):
    return resources.files("deepenergy").joinpath("configs", f"{name}.toml")


def load(path: str | Path) -> RunConfig:
    """Read a config file; a bare bundled name such as ``uniaxial`` also works."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and str(path) in BUNDLED:
        return loads(bundled_path(str(path)).read_text(), f"<bundled {path}>")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return loads(text, str(path))
