"""YAML run profiles: loading, merging, validation, hashing.

A profile fully determines a study: the physical system, the scenario
tree geometry, and solver settings.  Profiles can extend one another
through an ``include:`` key (deep merge, later file wins), so variant
studies only state their deltas.  ``config_hash`` fingerprints the
merged document; result files carry the hash so outputs can always be
traced back to the exact inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path

import yaml

from .degradation import DegradationParams
from .frequency import FrequencyParams
from .system import (
    DemandTrace,
    EvFleetSpec,
    GeneratorSpec,
    Regime,
    StorageSpec,
    SystemSpec,
    read_demand_csv,
    synthetic_demand,
)
from .uc import UcOptions
from .wind import LogisticTransform, WindModel

__all__ = [
    "ConfigError",
    "TreeConfig",
    "SolverConfig",
    "RunConfig",
    "load_config",
    "config_hash",
    "packaged_profiles",
]


class ConfigError(ValueError):
    """Raised with every detected problem listed, one per line."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = problems


@dataclass(frozen=True)
class TreeConfig:
    quantiles: tuple[float, ...] = (0.1, 0.5, 0.9)
    horizon_hours: float = 24.0
    step_hours: float = 0.5
    coarsen: tuple[tuple[float, float], ...] | None = None
    anchor_fleet_events: bool = True


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "highs"  # highs | bnb-conic
    gap: float = 1e-4
    time_limit: float | None = None
    max_cut_rounds: int = 25
    nadir_tol: float = 1e-6
    cut_pool_size: int = 40
    node_limit: int | None = 2000
    heuristic_effort: float = 0.2


@dataclass
class RunConfig:
    name: str
    start: datetime
    spec: SystemSpec
    tree: TreeConfig
    solver: SolverConfig
    options: UcOptions
    days: int
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def packaged_profiles() -> list[str]:
    """Names of configuration profiles shipped inside the package."""
    out = []
    for entry in resources.files("evsuc.configs").iterdir():
        if entry.name.endswith(".yaml"):
            out.append(entry.name[: -len(".yaml")])
    return sorted(out)


def _read_yaml(name_or_path: str) -> tuple[dict, Path | None]:
    p = Path(name_or_path)
    if p.exists():
        with open(p) as f:
            return yaml.safe_load(f) or {}, p.parent
    ref = resources.files("evsuc.configs") / f"{name_or_path}.yaml"
    if ref.is_file():
        return yaml.safe_load(ref.read_text()) or {}, None
    raise ConfigError([f"config '{name_or_path}' is neither a file nor a packaged profile"])


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_merged(name_or_path: str, _depth: int = 0) -> dict:
    if _depth > 8:
        raise ConfigError(["include chain deeper than 8 levels, likely a cycle"])
    doc, base_dir = _read_yaml(name_or_path)
    include = doc.pop("include", None)
    if include is None:
        return doc
    target = str(include)
    if base_dir is not None and (base_dir / target).exists():
        target = str(base_dir / target)
    return _deep_merge(_load_merged(target, _depth + 1), doc)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, section: dict, where: str, problems: list[str], **extra):
    """Construct a dataclass from a mapping, reporting unknown keys."""
    known = {f for f in cls.__dataclass_fields__}
    bad = set(section) - known
    for k in sorted(bad):
        problems.append(f"{where}: unknown key '{k}'")
    kwargs = {k: v for k, v in section.items() if k in known}
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        problems.append(f"{where}: {err}")
        return None


def load_config(name_or_path: str, overrides: dict | None = None) -> RunConfig:
    raw = _load_merged(name_or_path)
    if overrides:
        raw = _deep_merge(raw, overrides)
    problems: list[str] = []

    name = raw.get("name") or Path(name_or_path).stem
    try:
        start = datetime.fromisoformat(str(raw.get("start", "2025-01-06T00:00:00")))
    except ValueError:
        problems.append(f"start: not an ISO timestamp: {raw.get('start')!r}")
        start = datetime(2025, 1, 6)

    generators = []
    for k, g in enumerate(raw.get("generators", [])):
        built = _build(GeneratorSpec, g, f"generators[{k}]", problems)
        if built is not None:
            generators.append(built)
    if not generators:
        problems.append("generators: at least one thermal block is required")

    storages = []
    for k, s in enumerate(raw.get("storages", [])):
        built = _build(StorageSpec, s, f"storages[{k}]", problems)
        if built is not None:
            storages.append(built)

    fleet = None
    if raw.get("fleet"):
        fd = dict(raw["fleet"])
        if "regime" in fd:
            try:
                fd["regime"] = Regime(fd["regime"])
            except ValueError:
                problems.append(
                    f"fleet.regime: '{fd['regime']}' not one of "
                    + ", ".join(r.value for r in Regime)
                )
                fd["regime"] = Regime.V2G
        fleet = _build(EvFleetSpec, fd, "fleet", problems)

    freq = _build(FrequencyParams, raw.get("frequency", {}), "frequency", problems)
    degradation = _build(DegradationParams, raw.get("degradation", {}), "degradation", problems)

    wd = dict(raw.get("wind", {}))
    transform = _build(
        LogisticTransform, wd.pop("transform", {}), "wind.transform", problems
    )
    wind = None
    if transform is not None:
        wind = _build(WindModel, wd, "wind", problems, transform=transform)

    demand = None
    dd = raw.get("demand", {})
    if "csv" in dd:
        try:
            demand = read_demand_csv(dd["csv"], start=start)
        except (OSError, ValueError) as err:
            problems.append(f"demand.csv: {err}")
    elif "synthetic" in dd:
        sd = dd["synthetic"]
        try:
            demand = synthetic_demand(
                start,
                min_gw=float(sd["min_gw"]),
                max_gw=float(sd["max_gw"]),
                weekend_factor=float(sd.get("weekend_factor", 0.93)),
            )
        except (KeyError, TypeError, ValueError) as err:
            problems.append(f"demand.synthetic: {err}")
    else:
        problems.append("demand: provide either 'csv' or 'synthetic'")

    spec = None
    if not problems and wind is not None and demand is not None:
        spec = SystemSpec(
            generators=generators,
            storages=storages,
            fleet=fleet,
            wind=wind,
            demand=demand,
            freq=freq,
            degradation=degradation,
            voll=float(raw.get("voll", 30000.0)),
            loss_block=raw.get("loss_block"),
        )
        problems.extend(spec.errors())

    td = dict(raw.get("tree", {}))
    if "quantiles" in td:
        td["quantiles"] = tuple(float(q) for q in td["quantiles"])
    if td.get("coarsen") is not None:
        td["coarsen"] = tuple(
            (float(pair[0]), float(pair[1])) for pair in td["coarsen"]
        )
    tree = _build(TreeConfig, td, "tree", problems)

    solver = _build(SolverConfig, raw.get("solver", {}), "solver", problems)
    if solver is not None and solver.backend not in ("highs", "bnb-conic"):
        problems.append(f"solver.backend: '{solver.backend}' not one of highs, bnb-conic")

    od = dict(raw.get("options", {}))
    options = _build(UcOptions, od, "options", problems)
    if options is not None and options.nadir_mode == "conic" and solver is not None and solver.backend == "highs":
        problems.append("options.nadir_mode=conic requires solver.backend=bnb-conic")

    days = int(raw.get("days", 7))
    seed = int(raw.get("seed", 0))
    if days <= 0:
        problems.append(f"days: must be positive, got {days}")

    if problems or spec is None:
        raise ConfigError(problems or ["unable to assemble system"])
    return RunConfig(
        name=str(name),
        start=start,
        spec=spec,
        tree=tree,
        solver=solver,
        options=options,
        days=days,
        seed=seed,
        raw=raw,
    )
