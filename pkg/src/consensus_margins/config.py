"""YAML configuration documents and their echo back into reports."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigParseError, MarginError
from .margins import MarginConfig
from .model import AgentModel, NetworkGraph, build_laplacian, graph_from_laplacian
from .optimizer import OptimizerConfig
from .perturb import polar_decompose, unitary_from_phases
from .sweep import SweepConfig


@dataclass(frozen=True)
class Scenario:
    name: str
    tau: float | None = None
    delta: str | None = None
    horizon: float | None = None
    dt: float | None = None


@dataclass(frozen=True)
class SimulateSpec:
    x0: tuple
    horizon: float = 60.0
    dt: float = 1e-3
    scenarios: tuple = ()


@dataclass(frozen=True)
class AnalysisConfig:
    name: str
    A: tuple
    B: tuple
    K: tuple
    c: float
    graph_kind: str  # "laplacian" or "adjacency"
    graph_matrix: tuple
    sweep: SweepConfig = SweepConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    refine_iter: int = 60
    simulate: SimulateSpec | None = None
    output_dir: str = "out"
    base_dir: str = field(default=".", compare=False)

    @property
    def model(self) -> AgentModel:
        return AgentModel(np.array(self.A), np.array(self.B), np.array(self.K), self.c)

    @property
    def graph(self) -> NetworkGraph:
        M = np.array(self.graph_matrix, dtype=float)
        return graph_from_laplacian(M) if self.graph_kind == "laplacian" else build_laplacian(M)

    @property
    def margin_config(self) -> MarginConfig:
        return MarginConfig(self.sweep, self.optimizer, self.refine_iter)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _matrix(value, name) -> tuple:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [[value]]
    if not isinstance(value, list) or not value:
        raise ConfigParseError(f"{name} must be a non-empty list of rows")
    rows = [r if isinstance(r, list) else [r] for r in value]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ConfigParseError(f"{name} rows have different lengths")
    try:
        return tuple(tuple(float(x) for x in r) for r in rows)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"{name} has a non-numeric entry") from exc


def _section(cls, data, name):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigParseError(f"{name} must be a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigParseError(f"unknown keys in {name}: {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigParseError(f"bad {name} section: {exc}") from exc


def parse_config(doc: dict, base_dir: str = ".") -> AnalysisConfig:
    if not isinstance(doc, dict):
        raise ConfigParseError("configuration must be a mapping")
    try:
        model = doc["model"]
        graph = doc["graph"]
    except KeyError as exc:
        raise ConfigParseError(f"missing section {exc}") from exc
    if not isinstance(graph, dict):
        raise ConfigParseError("graph must be a mapping")
    kinds = [k for k in ("laplacian", "adjacency") if k in graph]
    if len(kinds) != 1:
        raise ConfigParseError("graph needs exactly one of 'laplacian' or 'adjacency'")
    try:
        c = float(model["c"])
        A, B, K = (_matrix(model[k], k) for k in ("A", "B", "K"))
    except KeyError as exc:
        raise ConfigParseError(f"model is missing {exc}") from exc
    sim = doc.get("simulate")
    simulate = None
    if sim is not None:
        if "x0" not in sim:
            raise ConfigParseError("simulate needs x0")
        scen = tuple(_section(Scenario, s, "scenario") for s in sim.get("scenarios", []) or [])
        simulate = SimulateSpec(
            _matrix(sim["x0"], "x0"),
            float(sim.get("horizon", SimulateSpec.horizon)),
            float(sim.get("dt", SimulateSpec.dt)),
            scen,
        )
    margins = doc.get("margins") or {}
    cfg = AnalysisConfig(
        name=str(doc.get("name", "analysis")),
        A=A, B=B, K=K, c=c,
        graph_kind=kinds[0],
        graph_matrix=_matrix(graph[kinds[0]], kinds[0]),
        sweep=_section(SweepConfig, doc.get("sweep"), "sweep"),
        optimizer=_section(OptimizerConfig, doc.get("optimizer"), "optimizer"),
        refine_iter=int(margins.get("refine_iter", 60)),
        simulate=simulate,
        output_dir=str((doc.get("output") or {}).get("dir", "out")),
        base_dir=str(base_dir),
    )
    try:
        cfg.model, cfg.graph
    except MarginError as exc:
        raise ConfigParseError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigParseError(str(exc)) from exc
    return cfg


def load_config(path) -> AnalysisConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return parse_config(doc, str(path.parent))


def _plain(t):
    return [list(r) for r in t]


def config_to_dict(cfg: AnalysisConfig) -> dict:
    """Echo of a configuration that ``parse_config`` maps back to an equal object."""
    doc = {
        "name": cfg.name,
        "model": {"A": _plain(cfg.A), "B": _plain(cfg.B), "K": _plain(cfg.K), "c": cfg.c},
        "graph": {cfg.graph_kind: _plain(cfg.graph_matrix)},
        "sweep": asdict(cfg.sweep),
        "optimizer": asdict(cfg.optimizer),
        "margins": {"refine_iter": cfg.refine_iter},
        "output": {"dir": cfg.output_dir},
    }
    if cfg.simulate is not None:
        s = cfg.simulate
        doc["simulate"] = {
            "x0": _plain(s.x0),
            "horizon": s.horizon,
            "dt": s.dt,
            "scenarios": [{k: v for k, v in asdict(sc).items() if v is not None} for sc in s.scenarios],
        }
    return doc


def load_delta(path):
    """Read a perturbation file.

    Either ``matrix: {real: [...], imag: [...]}`` or a polar recipe
    ``recipe: {R: [...], P: [...], phases: [...]}`` giving ``R P diag(e^{j phi}) P*``.
    """
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigParseError(f"{path}: perturbation file must be a mapping")
    if "recipe" in doc:
        r = doc["recipe"]
        R = np.array(_matrix(r["R"], "R"))
        P = np.array(_matrix(r["P"], "P"))
        U = unitary_from_phases(P, [float(x) for x in r["phases"]]).U
        return polar_decompose(R @ U)
    if "matrix" in doc:
        m = doc["matrix"]
        re = np.array(_matrix(m["real"], "real"))
        im = np.array(_matrix(m.get("imag", [[0.0] * re.shape[1]] * re.shape[0]), "imag"))
        return polar_decompose(re + 1j * im)
    raise ConfigParseError(f"{path}: expected a 'matrix' or 'recipe' entry")


