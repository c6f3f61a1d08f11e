"""Pipeline configuration file (YAML or JSON) with environment overrides.

Layout::

    refine: {gaussian_sigma: 2.0, morph_kernel: 1, ...}
    rank:   {score_threshold: 0.5, drop_threshold: 0.5}
    synth:  {n_range: [1, 6], paste_scale_range: [0.1, 2.0], seed: 0, ...}
    io:     {manifest: ..., out_dir: ..., backgrounds: ..., image_dir: ..., class_map: ...}
    workers: 1

``FREESEG_SEED`` overrides ``synth.seed``, ``FREESEG_WORKERS`` the worker
count, and ``FREESEG_IO_<KEY>`` any ``io`` entry.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .rank import DEFAULT_DROP_THRESHOLD, DEFAULT_SCORE_THRESHOLD
from .refine import RefineConfig
from .synth import PastePolicy

IO_KEYS = ("manifest", "scored_manifest", "out_dir", "backgrounds", "image_dir", "class_map")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    refine: RefineConfig = field(default_factory=RefineConfig)
    policy: PastePolicy = field(default_factory=PastePolicy)
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    drop_threshold: float = DEFAULT_DROP_THRESHOLD
    io: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        for name in ("score_threshold", "drop_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"rank.{name} must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        unknown = set(self.io) - set(IO_KEYS)
        if unknown:
            raise ConfigError(f"unknown io key(s): {sorted(unknown)}")


def _build(cls, section: str, values: Mapping | None):
    values = dict(values or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown {section} key(s): {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def config_from_dict(data: Mapping | None, env: Mapping[str, str] | None = None) -> PipelineConfig:
    data = dict(data or {})
    env = os.environ if env is None else env
    unknown = set(data) - {"refine", "rank", "synth", "io", "workers"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")

    synth = dict(data.get("synth") or {})
    if "FREESEG_SEED" in env:
        try:
            synth["seed"] = int(env["FREESEG_SEED"])
        except ValueError:
            raise ConfigError("FREESEG_SEED must be an integer") from None
    io = {k: str(v) for k, v in (data.get("io") or {}).items()}
    for key in IO_KEYS:
        var = f"FREESEG_IO_{key.upper()}"
        if var in env:
            io[key] = env[var]
    workers = data.get("workers", 1)
    if "FREESEG_WORKERS" in env:
        workers = env["FREESEG_WORKERS"]

    rank = dict(data.get("rank") or {})
    unknown = set(rank) - {"score_threshold", "drop_threshold"}
    if unknown:
        raise ConfigError(f"unknown rank key(s): {sorted(unknown)}")
    try:
        return PipelineConfig(
            refine=_build(RefineConfig, "refine", data.get("refine")),
            policy=_build(PastePolicy, "synth", synth),
            score_threshold=float(rank.get("score_threshold", DEFAULT_SCORE_THRESHOLD)),
            drop_threshold=float(rank.get("drop_threshold", DEFAULT_DROP_THRESHOLD)),
            io=io,
            workers=int(workers),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> PipelineConfig:
    if path is None:
        return config_from_dict({}, env)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data, env)
