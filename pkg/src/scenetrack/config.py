"""Run configuration: one JSON file covering every tunable stage.

Sections mirror the pipeline stages (detection, proposal, objective,
anneal, transfer); omitted sections and keys keep their defaults, unknown
ones are rejected so that typos fail loudly instead of silently running
with defaults.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .objective import ObjectiveWeights
from .optimizer import AnnealConfig
from .proposal import ProposalConfig


@dataclass(frozen=True)
class DetectionConfig:
    """Static-structure extraction parameters."""

    inlier_thresh: float = 0.015
    min_inlier_frac: float = 0.12
    ransac_iters: int = 2048
    max_planes: int = 12

    def __post_init__(self) -> None:
        if self.inlier_thresh <= 0.0:
            raise ValueError("inlier_thresh must be positive")
        if not 0.0 < self.min_inlier_frac < 1.0:
            raise ValueError("min_inlier_frac must be in (0, 1)")
        if self.ransac_iters < 1 or self.max_planes < 1:
            raise ValueError("ransac_iters and max_planes must be >= 1")


@dataclass(frozen=True)
class TransferConfig:
    """Label transfer and smoothing parameters."""

    max_dist: float = 0.05
    neighbors: int = 12
    pairwise_weight: float = 1.0
    sweeps: int = 5

    def __post_init__(self) -> None:
        if self.max_dist <= 0.0:
            raise ValueError("max_dist must be positive")
        if self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")
        if self.pairwise_weight < 0.0 or self.sweeps < 0:
            raise ValueError("pairwise_weight and sweeps must be >= 0")


_SECTIONS = {
    "detection": DetectionConfig,
    "proposal": ProposalConfig,
    "objective": ObjectiveWeights,
    "anneal": AnnealConfig,
    "transfer": TransferConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    objective: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    anneal: AnnealConfig = field(default_factory=AnnealConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ValueError("config root must be an object")
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ValueError(f"unknown config section {sorted(unknown)[0]!r}")
    sections: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        body = data.get(name, {})
        if not isinstance(body, dict):
            raise ValueError(f"config section {name!r} must be an object")
        valid = {f.name for f in dataclasses.fields(cls)}
        bad = set(body) - valid
        if bad:
            raise ValueError(
                f"unknown key {sorted(bad)[0]!r} in config section {name!r}")
        sections[name] = cls(**body)
    seed = int(data.get("seed", 0))
    if seed < 0:
        raise ValueError("seed must be >= 0")
    return PipelineConfig(seed=seed, **sections)


def config_to_dict(cfg: PipelineConfig) -> dict[str, Any]:
    out: dict[str, Any] = {"seed": cfg.seed}
    for name in _SECTIONS:
        out[name] = dataclasses.asdict(getattr(cfg, name))
    return out


def load_config(path: str | Path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)
