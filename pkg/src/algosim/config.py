"""Scenario configuration: YAML files with {network, consensus,
validation, attack, run} sections plus an optional grid section that
expands into many isolated cells.

Every knob has a default here; shipped configs spell the defaults out so
the mapping between experiment settings and knobs is self-documenting.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .adversary import AttackConfig
from .consensus import ConsensusConfig
from .validation import ValidationConfig

DESK_HONEST = 64
PAPER_HONEST = 500


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class NetworkConfig:
    n_honest: int = DESK_HONEST
    degree: int = 8
    bandwidth_mbps: float = 30.0
    max_connections: int | None = None

    def __post_init__(self):
        if self.n_honest < 2:
            raise ValueError("need at least 2 honest nodes")
        if self.degree < 2:
            raise ValueError("degree must be at least 2")
        if self.bandwidth_mbps <= 0:
            raise ValueError("bandwidth must be positive")


@dataclass
class RunConfig:
    duration_s: float = 2700.0
    seed: int = 1
    stake_per_node: int = 100
    label: str = "scenario"

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if self.stake_per_node <= 0:
            raise ValueError("stake must be positive")


@dataclass
class GridConfig:
    block_sizes_mb: list[float] = field(default_factory=lambda: [1.0])
    n_malicious: list[int] = field(default_factory=lambda: [0])
    keys_per_node: list[int] = field(default_factory=lambda: [0])
    include_no_attack: bool = True


@dataclass
class ScenarioConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    run: RunConfig = field(default_factory=RunConfig)
    grid: GridConfig | None = None

    def block_size_mb(self) -> float:
        return self.consensus.max_block_size / 1e6


_SECTIONS = {
    "network": NetworkConfig,
    "consensus": ConsensusConfig,
    "validation": ValidationConfig,
    "attack": AttackConfig,
    "run": RunConfig,
    "grid": GridConfig,
}


def _build_section(name: str, cls, data: dict, problems: list[str]):
    valid = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in valid:
            problems.append("%s.%s: unknown field" % (name, key))
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append("%s: %s" % (name, exc))
        return None


def parse_config(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a mapping of sections"])
    problems: list[str] = []
    sections = {}
    for key in data:
        if key not in _SECTIONS:
            problems.append("%s: unknown section" % key)
    for name, cls in _SECTIONS.items():
        raw = data.get(name)
        if raw is None:
            sections[name] = None if name == "grid" else \
                _build_section(name, cls, {}, problems)
            continue
        if not isinstance(raw, dict):
            problems.append("%s: expected a mapping" % name)
            sections[name] = None
            continue
        sections[name] = _build_section(name, cls, raw, problems)
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(**sections)


def load_config(path_or_name: str) -> ScenarioConfig:
    """Load a YAML config from a path or a bundled name (no extension)."""
    path = Path(path_or_name)
    if path.is_file():
        text = path.read_text()
    else:
        res = importlib.resources.files("algosim") / "configs" / \
            (path_or_name + ".yaml")
        if not res.is_file():
            raise FileNotFoundError(
                "config not found: %s (not a file, and no bundled config "
                "of that name)" % path_or_name)
        text = res.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(["yaml: %s" % exc])
    return parse_config(data or {})


@dataclass(frozen=True)
class GridCell:
    label: str
    block_size_mb: float
    n_malicious: int
    keys_per_node: int


def expand_grid(cfg: ScenarioConfig) -> list[GridCell]:
    """Deterministic cell list: no-attack baselines first, then the
    attack grid in (block size, malicious nodes, keys) order."""
    if cfg.grid is None:
        a = cfg.attack
        return [GridCell(cfg.run.label, cfg.block_size_mb(),
                         a.n_malicious if a.enabled else 0,
                         a.keys_per_node if a.enabled else 0)]
    cells = []
    g = cfg.grid
    for size in g.block_sizes_mb:
        if g.include_no_attack:
            cells.append(GridCell(_cell_label(size, 0, 0), size, 0, 0))
        for n_mal in g.n_malicious:
            for keys in g.keys_per_node:
                if n_mal and keys:
                    cells.append(GridCell(_cell_label(size, n_mal, keys),
                                          size, n_mal, keys))
    return cells


def _cell_label(size: float, n_mal: int, keys: int) -> str:
    if not n_mal:
        return "block%.1fMB-noattack" % size
    return "block%.1fMB-mal%02d-keys%02d" % (size, n_mal, keys)


def cell_scenario(cfg: ScenarioConfig, cell: GridCell,
                  scale_honest: int | None = None,
                  duration: float | None = None,
                  seed: int | None = None) -> ScenarioConfig:
    """Materialize one grid cell as a standalone scenario config."""
    import copy
    out = copy.deepcopy(cfg)
    out.grid = None
    out.run.label = cell.label
    out.consensus.max_block_size = int(cell.block_size_mb * 1e6)
    if cell.n_malicious:
        out.attack.enabled = True
        out.attack.n_malicious = cell.n_malicious
        out.attack.keys_per_node = cell.keys_per_node
        out.attack.payload_block_bytes = int(cell.block_size_mb * 1e6)
    else:
        out.attack.enabled = False
        out.attack.n_malicious = 0
        out.attack.keys_per_node = 0
    if scale_honest is not None:
        out.network.n_honest = scale_honest
    if duration is not None:
        out.run.duration_s = duration
    if seed is not None:
        out.run.seed = seed
    return out
