"""Engine configuration: a flat ``section.key=value`` text file.

Example::

    # lines starting with '#' are comments
    cost.alpha=1.0
    solver.matcher=ota
    solver.q=8
    dpg.tau=0.1
    simulate.seeds=20
"""
import dataclasses
from dataclasses import dataclass, field

from .assignment import SolverConfig
from .cost import CostWeights
from .simulate import SimulationConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DPGConfig:
    N_e: int = 4
    N_p: int = 300
    C: int = 256
    S: int = 30
    D_h: int = 1500
    tau: float = 1.0
    H2: int = 64
    weight_mode: str = "per_proposal"

    def __post_init__(self):
        for name in ("N_e", "N_p", "C", "S", "D_h", "H2"):
            if getattr(self, name) < 1:
                raise ValueError(f"dpg.{name} must be >= 1")
        if self.H2 % 8:
            raise ValueError("dpg.H2 must be divisible by 8")
        if self.tau <= 0:
            raise ValueError("dpg.tau must be > 0")


@dataclass(frozen=True)
class EngineConfig:
    cost: CostWeights = field(default_factory=CostWeights)
    solver: SolverConfig = field(default_factory=SolverConfig)
    dpg: DPGConfig = field(default_factory=DPGConfig)
    simulate: SimulationConfig = field(default_factory=SimulationConfig)

    def to_dict(self):
        return dataclasses.asdict(self)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(EngineConfig)}


def _convert(raw, default, key):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(type(default[0])(v) for v in raw.replace("x", ",").split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from exc
    return raw


def parse_config(text, source="<config>"):
    overrides = {name: {} for name in _SECTIONS}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        defaults = _SECTIONS[section]()
        if name not in {f.name for f in dataclasses.fields(defaults)}:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        overrides[section][name] = _convert(raw, getattr(defaults, name), key)
    built = {}
    for section, factory in _SECTIONS.items():
        try:
            built[section] = dataclasses.replace(factory(), **overrides[section])
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from exc
    return EngineConfig(**built)


def load_config(path=None):
    if path is None:
        return EngineConfig()
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


def dump_config(cfg: EngineConfig):
    lines = []
    for section, values in cfg.to_dict().items():
        for name, value in values.items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{name}={value}")
    return "\n".join(lines) + "\n"
