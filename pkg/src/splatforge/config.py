"""Pipeline configuration: dataclass defaults, INI-style files, config echo.

The file format is flat `key = value` under four sections ([train],
[refine], [mesh], [plugins]) plus a sectionless-style [run] block for the
seed. Unknown sections or keys are rejected outright so experiment configs
cannot silently drift.
"""

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .errors import ContractViolationError
from .optimizer import TrainConfig
from .refine import RefineConfig


@dataclass
class MeshConfig:
    texture_size: int = 1024
    density_threshold: float = 1.0
    normal_cos_cutoff: float = 0.3
    view_resolution: int = 512


@dataclass
class PluginConfig:
    guidance: str = "oracle"  # oracle | none
    refiner: str = "oracle"  # oracle | identity
    preprocess: str = "bicubic"  # bicubic | none
    sr_factor: int = 4
    scene: str = "two_blob"  # ground-truth scene backing the oracle plugins


@dataclass
class PipelineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    plugins: PluginConfig = field(default_factory=PluginConfig)
    seed: int = 0

    def with_seed(self, seed):
        return replace(
            self,
            seed=seed,
            train=replace(self.train, seed=seed),
            refine=replace(self.refine, seed=seed),
        )

    def echo(self):
        """Fully resolved flat dict, embedded into every report."""
        out = {"run.seed": self.seed}
        for section in ("train", "refine", "mesh", "plugins"):
            cfg = getattr(self, section)
            for f in fields(cfg):
                value = getattr(cfg, f.name)
                if isinstance(value, tuple):
                    value = list(value)
                out[f"{section}.{f.name}"] = value
        return out


_SECTIONS = ("train", "refine", "mesh", "plugins")


def _parse_value(raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ContractViolationError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(type(default[0])(p) for p in parts)
    return raw


def load_config(path=None, text=None, overrides=None):
    """Build a PipelineConfig from an INI file/text plus optional overrides.

    overrides is a flat {"section.key": value} dict applied after parsing.
    """
    config = PipelineConfig()
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if path is not None:
        with open(path) as f:
            parser.read_file(f)
    elif text is not None:
        parser.read_file(io.StringIO(text))

    values = {}
    for section in parser.sections():
        if section == "run":
            for key, raw in parser.items("run"):
                if key != "seed":
                    raise ContractViolationError(f"unknown key run.{key}")
                values["run.seed"] = int(raw)
            continue
        if section not in _SECTIONS:
            raise ContractViolationError(f"unknown config section [{section}]")
        sub = getattr(config, section)
        known = {f.name: getattr(sub, f.name) for f in fields(sub)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ContractViolationError(f"unknown key {section}.{key}")
            values[f"{section}.{key}"] = _parse_value(raw, known[key])

    if overrides:
        values.update(overrides)

    sub_updates = {s: {} for s in _SECTIONS}
    seed = values.pop("run.seed", config.seed)
    for dotted, value in values.items():
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ContractViolationError(f"unknown override {dotted}")
        sub_updates[section][key] = value

    config = PipelineConfig(
        train=replace(config.train, **sub_updates["train"]),
        refine=replace(config.refine, **sub_updates["refine"]),
        mesh=replace(config.mesh, **sub_updates["mesh"]),
        plugins=replace(config.plugins, **sub_updates["plugins"]),
        seed=config.seed,
    )
    return config.with_seed(seed)


def dump_config(config):
    """Render the resolved config back to INI text."""
    lines = ["[run]", f"seed = {config.seed}", ""]
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        cfg = getattr(config, section)
        for f in fields(cfg):
            value = getattr(cfg, f.name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)
